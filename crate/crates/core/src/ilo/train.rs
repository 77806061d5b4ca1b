//! Mini-batch training on PMM demonstrations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adamw::{AdamW, AdamWConfig};
use super::dataset::{raw_features, Dataset, FeatureSpec, Normalizer};
use super::focal::Focal;
use super::mlp::{sigmoid, Gradients, Mlp};
use super::IloModel;
use crate::error::{IracError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    pub hidden_layers: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 6e-4,
            batch_size: 96,
            weight_decay: 1e-2,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            hidden_layers: vec![100, 72],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.epochs == 0 {
            v.push("epochs must be > 0".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            v.push(format!(
                "learning_rate must be > 0 (got {})",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            v.push("batch_size must be > 0".into());
        }
        if !(self.weight_decay >= 0.0) {
            v.push(format!(
                "weight_decay must be >= 0 (got {})",
                self.weight_decay
            ));
        }
        if !(self.focal_gamma >= 0.0) {
            v.push(format!(
                "focal_gamma must be >= 0 (got {})",
                self.focal_gamma
            ));
        }
        if !(self.focal_alpha > 0.0 && self.focal_alpha < 1.0) {
            v.push(format!(
                "focal_alpha must be in (0,1) (got {})",
                self.focal_alpha
            ));
        }
        if self.hidden_layers.contains(&0) {
            v.push("hidden layer widths must be > 0".into());
        }
        v
    }

    pub fn focal(&self) -> Focal {
        Focal {
            gamma: self.focal_gamma,
            alpha: self.focal_alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// Fraction of user bits matching the PMM labels.
    pub train_accuracy: f64,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Fraction of test samples whose whole decision vector matches.
    pub test_exact_match: Option<f64>,
}

/// Training curve as CSV, one row per epoch; absent test columns are empty.
pub fn history_csv(history: &[EpochStats]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "epoch",
        "train_loss",
        "train_accuracy",
        "test_loss",
        "test_accuracy",
        "test_exact_match",
    ])?;
    let opt = |v: Option<f64>| v.map(crate::harness::sci).unwrap_or_default();
    for h in history {
        w.write_record([
            h.epoch.to_string(),
            crate::harness::sci(h.train_loss),
            crate::harness::sci(h.train_accuracy),
            opt(h.test_loss),
            opt(h.test_accuracy),
            opt(h.test_exact_match),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| IracError::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Normalized inputs and labels, ready for the network.
pub struct Encoded {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Vec<bool>>,
}

pub fn encode(data: &Dataset, spec: FeatureSpec, norm: &Normalizer) -> Result<Encoded> {
    let mut features = Vec::with_capacity(data.len());
    for s in &data.samples {
        let raw = raw_features(&s.switching_gain, &s.channel_gain, s.power_budget, spec)?;
        features.push(norm.normalize(&raw));
    }
    Ok(Encoded {
        features,
        labels: data.samples.iter().map(|s| s.labels.clone()).collect(),
    })
}

/// Mean loss and its gradient over a batch of samples.
pub fn batch_loss_and_grad(
    model: &Mlp,
    focal: &Focal,
    features: &[&[f64]],
    labels: &[&[bool]],
    grads: &mut Gradients,
) -> Result<(f64, usize)> {
    let entries = (features.len() * model.output_size()) as f64;
    let mut loss = 0.0;
    let mut correct = 0;
    let mut logit_grad = vec![0.0; model.output_size()];
    for (f, y) in features.iter().zip(labels) {
        let trace = model.trace(f)?;
        for ((g, &z), &label) in logit_grad.iter_mut().zip(trace.logits()).zip(y.iter()) {
            let s = sigmoid(z);
            loss += focal.entry(s, label);
            *g = focal.entry_logit_grad(s, label) / entries;
            if (s >= 0.5) == label {
                correct += 1;
            }
        }
        model.backward(&trace, &logit_grad, grads);
    }
    Ok((loss / entries, correct))
}

/// Loss, bit accuracy and exact-match rate of `model` on encoded data.
pub fn evaluate(
    model: &Mlp,
    focal: &Focal,
    data: &Encoded,
    threshold: f64,
) -> Result<(f64, f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut exact = 0usize;
    let mut entries = 0usize;
    for (f, y) in data.features.iter().zip(&data.labels) {
        let scores = model.forward(f)?;
        let mut all = true;
        for (&s, &label) in scores.iter().zip(y) {
            loss += focal.entry(s, label);
            if (s >= threshold) == label {
                correct += 1;
            } else {
                all = false;
            }
        }
        entries += scores.len();
        exact += usize::from(all);
    }
    let n = entries.max(1) as f64;
    Ok((
        loss / n,
        correct as f64 / n,
        exact as f64 / data.features.len().max(1) as f64,
    ))
}

/// Trains a network on `train`; `test`, when given, is scored after every
/// epoch. Deterministic for a given `cfg.seed`.
pub fn train(
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(IloModel, Vec<EpochStats>)> {
    let issues = cfg.validate();
    if !issues.is_empty() {
        return Err(IracError::Validation(issues));
    }
    if train.is_empty() {
        return Err(IracError::Validation(vec!["training set is empty".into()]));
    }
    let k = train.num_users();
    if let Some(t) = test {
        if t.num_users() != k {
            return Err(IracError::domain(
                "train and test sets differ in user count",
            ));
        }
    }
    let spec = FeatureSpec {
        include_power_budget: train.varies_power(),
    };
    let raw: Vec<Vec<f64>> = train
        .samples
        .iter()
        .map(|s| raw_features(&s.switching_gain, &s.channel_gain, s.power_budget, spec))
        .collect::<Result<_>>()?;
    let norm = Normalizer::fit(&raw)?;
    let train_enc = encode(train, spec, &norm)?;
    let test_enc = test.map(|t| encode(t, spec, &norm)).transpose()?;

    let mut sizes = vec![spec.width(k)];
    sizes.extend(&cfg.hidden_layers);
    sizes.push(k);
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mlp = Mlp::new(&sizes, &mut init_rng)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut opt = AdamW::new(
        &mlp,
        AdamWConfig {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
    );
    let focal = cfg.focal();
    let mut grads = Gradients::zeros_like(&mlp);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grads.scale(0.0);
            let f: Vec<&[f64]> = batch
                .iter()
                .map(|&i| train_enc.features[i].as_slice())
                .collect();
            let y: Vec<&[bool]> = batch
                .iter()
                .map(|&i| train_enc.labels[i].as_slice())
                .collect();
            let (loss, c) = batch_loss_and_grad(&mlp, &focal, &f, &y, &mut grads)?;
            if !loss.is_finite() {
                return Err(IracError::Solver(format!(
                    "training diverged at epoch {epoch} (loss {loss}); lower the learning rate (now {})",
                    cfg.learning_rate
                )));
            }
            loss_sum += loss * batch.len() as f64;
            correct += c;
            opt.step(&mut mlp, &grads);
        }
        let n = train.len() as f64;
        let mut stats = EpochStats {
            epoch: epoch + 1,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / (n * k as f64),
            test_loss: None,
            test_accuracy: None,
            test_exact_match: None,
        };
        if let Some(t) = &test_enc {
            let (l, a, e) = evaluate(&mlp, &focal, t, super::DEFAULT_THRESHOLD)?;
            stats.test_loss = Some(l);
            stats.test_accuracy = Some(a);
            stats.test_exact_match = Some(e);
        }
        log::debug!(
            "epoch {} loss {:.5} acc {:.4} test {:?}",
            stats.epoch,
            stats.train_loss,
            stats.train_accuracy,
            stats.test_accuracy
        );
        history.push(stats);
    }

    let model = IloModel::new(mlp, spec, norm, k, cfg.clone());
    Ok((model, history))
}
