//! Imitation-learning optimization (ILO): a small MLP trained on PMM
//! decisions that predicts the collaboration bits in one forward pass.
//!
//! Only `x` is learned. Powers follow from `x` through the minimum-power
//! curves, and a repair pass makes every prediction feasible.

pub mod adamw;
pub mod dataset;
pub mod focal;
pub mod mlp;
pub mod train;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{IracError, Result};
use crate::instance::Instance;
use crate::metrics::evaluate_solution;
use crate::pmm::{complete_with, full_powers, pmm_solve, repair_with, PmmParams};
use crate::schema::MODEL_SCHEMA;
use crate::solution::Solution;

pub use dataset::{generate_dataset, Dataset, DatasetSample, FeatureSpec, Normalizer};
pub use focal::focal_loss;
pub use mlp::Mlp;
pub use train::{history_csv, train, EpochStats, TrainConfig};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// A trained network with everything needed to encode new instances.
#[derive(Debug, Clone, PartialEq)]
pub struct IloModel {
    pub mlp: Mlp,
    pub features: FeatureSpec,
    pub normalizer: Normalizer,
    pub num_users: usize,
    pub threshold: f64,
    /// After repair, admit further users by decreasing score while the
    /// budgets allow.
    pub fill_budget: bool,
    pub train_config: TrainConfig,
}

/// JSON part of the model file; weights follow as raw little-endian `f64`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelHeader {
    schema: String,
    layer_sizes: Vec<usize>,
    num_users: usize,
    features: FeatureSpec,
    normalizer: Normalizer,
    threshold: f64,
    #[serde(default = "default_fill")]
    fill_budget: bool,
    train_config: TrainConfig,
    /// sha256 of the training config JSON.
    config_digest: String,
    num_parameters: usize,
}

fn default_fill() -> bool {
    true
}

fn config_digest(cfg: &TrainConfig) -> Result<String> {
    let bytes = serde_json::to_vec(cfg)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

impl IloModel {
    pub fn new(
        mlp: Mlp,
        features: FeatureSpec,
        normalizer: Normalizer,
        num_users: usize,
        train_config: TrainConfig,
    ) -> Self {
        Self {
            mlp,
            features,
            normalizer,
            num_users,
            threshold: DEFAULT_THRESHOLD,
            fill_budget: true,
            train_config,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = self.normalizer.validate();
        let width = self.features.width(self.num_users);
        if self.mlp.input_size() != width {
            v.push(format!(
                "model input {} does not match feature width {width}",
                self.mlp.input_size()
            ));
        }
        if self.normalizer.mean.len() != width {
            v.push("normalizer width does not match features".into());
        }
        if self.mlp.output_size() != self.num_users {
            v.push(format!(
                "model output {} does not match user count {}",
                self.mlp.output_size(),
                self.num_users
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            v.push(format!(
                "threshold must be in (0,1) (got {})",
                self.threshold
            ));
        }
        v
    }

    /// Collaboration probabilities for each user.
    pub fn scores(&self, inst: &Instance) -> Result<Vec<f64>> {
        if inst.num_users() != self.num_users {
            return Err(IracError::domain(format!(
                "model is trained for {} users, instance has {}",
                self.num_users,
                inst.num_users()
            )));
        }
        let raw = dataset::instance_features(inst, self.features)?;
        self.mlp.forward(&self.normalizer.normalize(&raw))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = ModelHeader {
            schema: MODEL_SCHEMA.to_string(),
            layer_sizes: self.mlp.sizes(),
            num_users: self.num_users,
            features: self.features,
            normalizer: self.normalizer.clone(),
            threshold: self.threshold,
            fill_budget: self.fill_budget,
            config_digest: config_digest(&self.train_config)?,
            train_config: self.train_config.clone(),
            num_parameters: self.mlp.num_parameters(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        for v in self.mlp.flatten() {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len);
        if len > 1 << 30 {
            return Err(IracError::Parse(
                "model header length is implausible".into(),
            ));
        }
        let mut json = vec![0u8; len as usize];
        input.read_exact(&mut json)?;
        let header: ModelHeader = serde_json::from_slice(&json)
            .map_err(|e| IracError::Parse(format!("model header: {e}")))?;
        if header.schema != MODEL_SCHEMA {
            return Err(IracError::Parse(format!(
                "expected schema {MODEL_SCHEMA:?}, found {:?}",
                header.schema
            )));
        }
        if header.config_digest != config_digest(&header.train_config)? {
            return Err(IracError::Parse("model config digest mismatch".into()));
        }
        let mut mlp = Mlp::zeros(&header.layer_sizes);
        if mlp.num_parameters() != header.num_parameters {
            return Err(IracError::Parse("model parameter count mismatch".into()));
        }
        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;
        if payload.len() != 8 * header.num_parameters {
            return Err(IracError::Parse(format!(
                "model payload has {} bytes, expected {}",
                payload.len(),
                8 * header.num_parameters
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        mlp.load_flat(&values)?;
        let model = Self {
            mlp,
            features: header.features,
            normalizer: header.normalizer,
            num_users: header.num_users,
            threshold: header.threshold,
            fill_budget: header.fill_budget,
            train_config: header.train_config,
        };
        let issues = model.validate();
        if !issues.is_empty() {
            return Err(IracError::Validation(issues));
        }
        Ok(model)
    }
}

/// Predicts a decision for `inst`: threshold the scores, repair, optionally
/// spend leftover budget on the next most likely users, and assign minimum
/// powers. The result is always feasible.
pub fn infer(model: &IloModel, inst: &Instance) -> Result<Solution> {
    let started = Instant::now();
    let scores = model.scores(inst)?;
    let full = full_powers(inst);
    let candidate: Vec<bool> = scores.iter().map(|&s| s >= model.threshold).collect();
    let mut x = repair_with(inst, candidate, &full);
    if model.fill_budget {
        x = complete_with(inst, x, &scores, &full);
    }
    let p = x
        .iter()
        .zip(&full)
        .map(|(&on, &g)| if on { g } else { 0.0 })
        .collect();
    Solution::assemble("ilo", inst, x, p, started.elapsed())
}

/// Quality and speed of a model on a labelled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IloEvaluation {
    pub samples: usize,
    /// Fraction of thresholded scores equal to the PMM bit.
    pub bit_accuracy: f64,
    /// Fraction of samples whose thresholded scores match every PMM bit.
    pub exact_match: f64,
    pub mean_psnr_pmm: f64,
    pub mean_psnr_ilo: f64,
    /// `mean_psnr_pmm − mean_psnr_ilo` in dB.
    pub psnr_gap: f64,
    pub feasible_rate: f64,
    pub infer_median_s: f64,
    pub infer_mean_s: f64,
    /// PMM timings; present only when PMM was re-run for comparison.
    pub pmm_median_s: Option<f64>,
    pub pmm_mean_s: Option<f64>,
    /// Total PMM time over total inference time.
    pub speedup_total: Option<f64>,
    /// Median over instances of the per-instance time ratio.
    pub speedup_median: Option<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scores `model` against the PMM labels of `data`. With `pmm_params`, PMM
/// is re-run on every instance (sequentially, like inference) to compare
/// wall times.
pub fn evaluate_model(
    model: &IloModel,
    data: &Dataset,
    pmm_params: Option<&PmmParams>,
) -> Result<IloEvaluation> {
    if data.is_empty() {
        return Err(IracError::Validation(
            vec!["evaluation set is empty".into()],
        ));
    }
    let n = data.len();
    let mut correct = 0usize;
    let mut exact = 0usize;
    let mut feasible = 0usize;
    let mut psnr_pmm = 0.0;
    let mut psnr_ilo = 0.0;
    let mut infer_times = Vec::with_capacity(n);
    let mut pmm_times = Vec::with_capacity(n);
    for (i, sample) in data.samples.iter().enumerate() {
        let inst = data.instance(i)?;
        let scores = model.scores(&inst)?;
        let hits = scores
            .iter()
            .zip(&sample.labels)
            .filter(|(&s, &l)| (s >= model.threshold) == l)
            .count();
        correct += hits;
        exact += usize::from(hits == sample.labels.len());

        let sol = infer(model, &inst)?;
        infer_times.push(sol.wall_time);
        feasible += usize::from(sol.feasibility.feasible);
        psnr_ilo += evaluate_solution(&inst, &sol.x, &sol.p)?.mean_psnr;
        psnr_pmm += evaluate_solution(&inst, &sample.labels, &sample.powers)?.mean_psnr;
        if let Some(params) = pmm_params {
            let started = Instant::now();
            std::hint::black_box(pmm_solve(&inst, params)?);
            pmm_times.push(started.elapsed().as_secs_f64());
        }
    }
    let nf = n as f64;
    let infer_total: f64 = infer_times.iter().sum();
    let timed_pmm = pmm_params.is_some();
    let ratios: Vec<f64> = pmm_times
        .iter()
        .zip(&infer_times)
        .map(|(p, i)| p / i.max(f64::MIN_POSITIVE))
        .collect();
    Ok(IloEvaluation {
        samples: n,
        bit_accuracy: correct as f64 / (nf * model.num_users as f64),
        exact_match: exact as f64 / nf,
        mean_psnr_pmm: psnr_pmm / nf,
        mean_psnr_ilo: psnr_ilo / nf,
        psnr_gap: (psnr_pmm - psnr_ilo) / nf,
        feasible_rate: feasible as f64 / nf,
        infer_median_s: median(infer_times),
        infer_mean_s: infer_total / nf,
        pmm_median_s: timed_pmm.then(|| median(pmm_times.clone())),
        pmm_mean_s: timed_pmm.then(|| pmm_times.iter().sum::<f64>() / nf),
        speedup_total: timed_pmm.then(|| pmm_times.iter().sum::<f64>() / infer_total),
        speedup_median: timed_pmm.then(|| median(ratios)),
    })
}
