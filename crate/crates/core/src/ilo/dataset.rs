//! PMM demonstrations and the feature encoding fed to the network.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IracError, Result};
use crate::instance::{generate_instance, Instance, ScenarioConfig};
use crate::pmm::{pmm_solve, PmmParams};
use crate::schema::DATASET_SCHEMA;

/// One solved instance. Only the problem inputs the network sees and the
/// PMM decision are stored; the full instance is reproducible from the
/// dataset scenario and `run_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub run_index: u64,
    pub power_budget: f64,
    pub switching_gain: Vec<f64>,
    pub channel_gain: Vec<f64>,
    pub labels: Vec<bool>,
    pub powers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema: String,
    /// Scenario with `seed` set to the dataset seed.
    pub scenario: ScenarioConfig,
    /// Budgets cycled over samples (sample `i` uses entry `i mod len`).
    pub power_levels: Vec<f64>,
    pub num_samples: usize,
    /// Instances PMM failed on.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scenario: ScenarioConfig,
    pub power_levels: Vec<f64>,
    pub skipped: usize,
    pub samples: Vec<DatasetSample>,
}

/// Solves `n_samples` generated instances with PMM. Runs in parallel; the
/// result does not depend on the thread count.
pub fn generate_dataset(
    scenario: &ScenarioConfig,
    n_samples: usize,
    seed: u64,
    power_levels: &[f64],
    params: &PmmParams,
) -> Result<Dataset> {
    let cfg = ScenarioConfig {
        seed,
        ..scenario.clone()
    };
    cfg.ensure_valid()?;
    let levels = if power_levels.is_empty() {
        vec![cfg.power_budget]
    } else {
        power_levels.to_vec()
    };
    if let Some(bad) = levels.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(IracError::Validation(vec![format!(
            "power level {bad} must be positive"
        )]));
    }
    let solved: Vec<Result<Option<DatasetSample>>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|run| {
            let budget = levels[(run % levels.len() as u64) as usize];
            let inst = generate_instance(&cfg, run)?.with_power_budget(budget);
            match pmm_solve(&inst, params) {
                Ok(sol) => Ok(Some(DatasetSample {
                    run_index: run,
                    power_budget: budget,
                    switching_gain: inst.switching_gain,
                    channel_gain: inst.channel_gain,
                    labels: sol.x,
                    powers: sol.p,
                })),
                Err(IracError::Solver(msg)) => {
                    log::warn!("dataset sample {run} skipped: {msg}");
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut samples = Vec::with_capacity(n_samples);
    let mut skipped = 0;
    for s in solved {
        match s? {
            Some(s) => samples.push(s),
            None => skipped += 1,
        }
    }
    Ok(Dataset {
        scenario: cfg,
        power_levels: levels,
        skipped,
        samples,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_users(&self) -> usize {
        self.scenario.num_users
    }

    /// True when samples carry different budgets, so the budget becomes a
    /// feature.
    pub fn varies_power(&self) -> bool {
        self.power_levels.iter().any(|&p| p != self.power_levels[0])
    }

    /// Rebuilds the full instance (including its quality profile) behind
    /// sample `i`.
    pub fn instance(&self, i: usize) -> Result<Instance> {
        let s = &self.samples[i];
        Ok(generate_instance(&self.scenario, s.run_index)?.with_power_budget(s.power_budget))
    }

    /// First `n` samples and the rest.
    pub fn split(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let part = |samples: &[DatasetSample]| Dataset {
            scenario: self.scenario.clone(),
            power_levels: self.power_levels.clone(),
            skipped: 0,
            samples: samples.to_vec(),
        };
        (part(&self.samples[..n]), part(&self.samples[n..]))
    }

    /// JSON lines: a header record, then one record per sample.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        let header = DatasetHeader {
            schema: DATASET_SCHEMA.to_string(),
            scenario: self.scenario.clone(),
            power_levels: self.power_levels.clone(),
            num_samples: self.samples.len(),
            skipped: self.skipped,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for s in &self.samples {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let first = lines
            .next()
            .ok_or_else(|| IracError::Parse("empty dataset file".into()))??;
        let header: DatasetHeader = serde_json::from_str(&first)
            .map_err(|e| IracError::Parse(format!("dataset header: {e}")))?;
        if header.schema != DATASET_SCHEMA {
            return Err(IracError::Parse(format!(
                "expected schema {DATASET_SCHEMA:?}, found {:?}",
                header.schema
            )));
        }
        let k = header.scenario.num_users;
        let mut samples = Vec::with_capacity(header.num_samples);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: DatasetSample = serde_json::from_str(&line)
                .map_err(|e| IracError::Parse(format!("dataset record {i}: {e}")))?;
            if [
                s.switching_gain.len(),
                s.channel_gain.len(),
                s.labels.len(),
                s.powers.len(),
            ]
            .iter()
            .any(|&n| n != k)
            {
                return Err(IracError::Parse(format!(
                    "dataset record {i} does not have {k} users"
                )));
            }
            samples.push(s);
        }
        if samples.len() != header.num_samples {
            return Err(IracError::Parse(format!(
                "dataset header announces {} samples, found {}",
                header.num_samples,
                samples.len()
            )));
        }
        Ok(Self {
            scenario: header.scenario,
            power_levels: header.power_levels,
            skipped: header.skipped,
            samples,
        })
    }
}

/// Which inputs the network sees beyond the per-user pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub include_power_budget: bool,
}

impl FeatureSpec {
    pub fn width(&self, num_users: usize) -> usize {
        2 * num_users + usize::from(self.include_power_budget)
    }
}

/// Unnormalized features: `(L_k, log10 γ_k)` for user `k` at slots
/// `(2k, 2k+1)`, then the budget in dBm when requested.
pub fn raw_features(
    switching_gain: &[f64],
    channel_gain: &[f64],
    power_budget: f64,
    spec: FeatureSpec,
) -> Result<Vec<f64>> {
    if switching_gain.len() != channel_gain.len() {
        return Err(IracError::domain("gain vectors differ in length"));
    }
    let mut f = Vec::with_capacity(spec.width(switching_gain.len()));
    for (&l, &g) in switching_gain.iter().zip(channel_gain) {
        if !(g > 0.0) {
            return Err(IracError::domain(format!(
                "channel gain must be > 0 (got {g})"
            )));
        }
        f.push(l);
        f.push(g.log10());
    }
    if spec.include_power_budget {
        f.push(crate::units::watts_to_dbm(power_budget));
    }
    Ok(f)
}

pub fn instance_features(inst: &Instance, spec: FeatureSpec) -> Result<Vec<f64>> {
    raw_features(
        &inst.switching_gain,
        &inst.channel_gain,
        inst.power_budget,
        spec,
    )
}

/// Per-feature z-scoring. Constant features get unit spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| IracError::domain("cannot fit a normalizer on no rows"))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, f: &[f64]) -> Vec<f64> {
        f.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.mean.len() != self.std.len() {
            v.push("normalizer mean/std lengths differ".into());
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            v.push("normalizer mean is not finite".into());
        }
        if self.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            v.push("normalizer std must be finite and > 0".into());
        }
        v
    }
}
