//! Problem data model and the seeded scenario generator.
//!
//! Channels are carried only through their squared norm `γ_k = ‖h_k‖²`: with
//! maximum-ratio combining and many more antennas than users, inter-user
//! leakage vanishes and the downlink rate depends on nothing else. The full
//! antenna vector is still drawn (entry by entry) so that `γ_k` has the exact
//! scaled chi-square law of a Rayleigh channel.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{IracError, Result};
use crate::link::{PowerCurve, UserLink};
use crate::metrics::psnr_calibrated;
use crate::schema::{read_json, write_json, INSTANCE_SCHEMA};
use crate::units::de_power;

/// Loss/PSNR anchors of the two rendering models (large edge model, small
/// on-device model) and the calibration line through them.
pub const EDGE_LOSS_ANCHOR: f64 = 0.029;
pub const LOCAL_LOSS_ANCHOR: f64 = 0.041;
pub const EDGE_PSNR_ANCHOR: f64 = 27.49;
pub const LOCAL_PSNR_ANCHOR: f64 = 24.99;

/// Intercept and slope (dB per decade of loss) of the line through
/// `(0.029, 27.49)` and `(0.041, 24.99)` in `(log10 loss, PSNR)` space.
pub const PSNR_CALIB_A: f64 = 1.929_052_744_755_345_8;
pub const PSNR_CALIB_B: f64 = -16.623_903_468_073_728;

/// Distances are clamped to this floor before applying pathloss.
pub const MIN_DISTANCE_M: f64 = 1.0;

const QUALITY_RESAMPLE_LIMIT: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    pub mean_loss_edge: f64,
    pub mean_loss_local: f64,
    /// Relative standard deviation of the lognormal loss draws.
    pub loss_jitter: f64,
    #[serde(rename = "psnr_calib_A")]
    pub psnr_calib_a: f64,
    #[serde(rename = "psnr_calib_B")]
    pub psnr_calib_b: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            mean_loss_edge: EDGE_LOSS_ANCHOR,
            mean_loss_local: LOCAL_LOSS_ANCHOR,
            loss_jitter: 0.15,
            psnr_calib_a: PSNR_CALIB_A,
            psnr_calib_b: PSNR_CALIB_B,
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.mean_loss_edge > 0.0
            && self.mean_loss_edge < self.mean_loss_local
            && self.mean_loss_local < 1.0)
        {
            v.push(format!(
                "quality_config: need 0 < mean_loss_edge ({}) < mean_loss_local ({}) < 1",
                self.mean_loss_edge, self.mean_loss_local
            ));
        }
        if !(self.loss_jitter >= 0.0 && self.loss_jitter.is_finite()) {
            v.push(format!(
                "quality_config: loss_jitter must be >= 0 (got {})",
                self.loss_jitter
            ));
        }
        if !(self.psnr_calib_a.is_finite() && self.psnr_calib_b.is_finite()) {
            v.push("quality_config: PSNR calibration constants must be finite".into());
        }
        v
    }
}

/// Scenario parameters in SI units (watts, hertz, seconds, bits, meters).
///
/// Every field has a default; the defaults form the `paper-truck` profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_users: usize,
    pub num_antennas: usize,
    pub max_collab: usize,
    pub area_side: f64,
    pub pathloss_exponent: f64,
    #[serde(deserialize_with = "de_power")]
    pub noise_power: f64,
    pub bandwidth: f64,
    pub data_volume: f64,
    pub deadline: f64,
    pub edge_render_time: f64,
    pub local_render_time: f64,
    #[serde(deserialize_with = "de_power")]
    pub power_budget: f64,
    pub loss_weight: f64,
    pub quality_config: QualityConfig,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::paper_truck()
    }
}

impl ScenarioConfig {
    pub const PAPER_TRUCK: &'static str = "paper-truck";

    /// N=600 antennas, K=20 users, S=10, 100 m square, α=3, σ²=−70 dBm,
    /// T=60 ms, T₀=6.5 ms, B=2 MHz, V=1.5 Mbit, P=40 mW.
    pub fn paper_truck() -> Self {
        Self {
            num_users: 20,
            num_antennas: 600,
            max_collab: 10,
            area_side: 100.0,
            pathloss_exponent: 3.0,
            noise_power: 1e-10,
            bandwidth: 2e6,
            data_volume: 1.5e6,
            deadline: 60e-3,
            edge_render_time: 6.5e-3,
            local_render_time: 16.7e-3,
            power_budget: 40e-3,
            loss_weight: 0.2,
            quality_config: QualityConfig::default(),
            seed: 2025,
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            Self::PAPER_TRUCK => Ok(Self::paper_truck()),
            other => Err(IracError::Parse(format!(
                "unknown scenario profile {other:?} (known: {})",
                Self::PAPER_TRUCK
            ))),
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                v.push(msg);
            }
        };
        need(self.num_users >= 1, "num_users must be >= 1".into());
        need(self.num_antennas >= 1, "num_antennas must be >= 1".into());
        need(
            self.area_side > 0.0 && self.area_side.is_finite(),
            format!("area_side must be > 0 (got {})", self.area_side),
        );
        need(
            self.pathloss_exponent >= 0.0 && self.pathloss_exponent.is_finite(),
            format!(
                "pathloss_exponent must be >= 0 (got {})",
                self.pathloss_exponent
            ),
        );
        need(
            self.noise_power > 0.0 && self.noise_power.is_finite(),
            format!("noise_power must be > 0 (got {})", self.noise_power),
        );
        need(
            self.bandwidth > 0.0 && self.bandwidth.is_finite(),
            format!("bandwidth must be > 0 (got {})", self.bandwidth),
        );
        need(
            self.data_volume > 0.0 && self.data_volume.is_finite(),
            format!("data_volume must be > 0 (got {})", self.data_volume),
        );
        need(
            self.edge_render_time > 0.0,
            format!(
                "edge_render_time must be > 0 (got {})",
                self.edge_render_time
            ),
        );
        need(
            self.deadline > self.edge_render_time && self.deadline.is_finite(),
            format!(
                "deadline ({}) must exceed edge_render_time ({})",
                self.deadline, self.edge_render_time
            ),
        );
        need(
            self.local_render_time >= 0.0,
            format!(
                "local_render_time must be >= 0 (got {})",
                self.local_render_time
            ),
        );
        need(
            self.power_budget > 0.0 && self.power_budget.is_finite(),
            format!("power_budget must be > 0 (got {})", self.power_budget),
        );
        need(
            (0.0..1.0).contains(&self.loss_weight),
            format!("loss_weight must be in [0, 1) (got {})", self.loss_weight),
        );
        v.extend(self.quality_config.validate());
        v
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(IracError::Validation(v))
        }
    }

    /// Downlink window `T − T₀` left for the frame transfer.
    pub fn window(&self) -> f64 {
        self.deadline - self.edge_render_time
    }

    /// Parses TOML; missing fields keep their `paper-truck` values.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| IracError::Parse(format!("scenario config: {e}")))?;
        cfg.ensure_valid()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Per-user rendering quality of both models against ground truth, plus the
/// edge-vs-local discrepancy `L_k` that the solvers actually see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityProfile {
    pub loss_local: Vec<f64>,
    pub loss_edge: Vec<f64>,
    pub switching_gain: Vec<f64>,
    pub psnr_local: Vec<f64>,
    pub psnr_edge: Vec<f64>,
}

impl QualityProfile {
    pub fn len(&self) -> usize {
        self.loss_local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss_local.is_empty()
    }

    /// Checks `|ℓ_local − ℓ_edge| ≤ L_k ≤ ℓ_local + ℓ_edge` and the loss range.
    pub fn validate(&self) -> Vec<String> {
        let k = self.len();
        let mut v = Vec::new();
        for (name, len) in [
            ("loss_edge", self.loss_edge.len()),
            ("switching_gain", self.switching_gain.len()),
            ("psnr_local", self.psnr_local.len()),
            ("psnr_edge", self.psnr_edge.len()),
        ] {
            if len != k {
                v.push(format!("quality: {name} has {len} entries, expected {k}"));
            }
        }
        if !v.is_empty() {
            return v;
        }
        for u in 0..k {
            let (ll, le, g) = (
                self.loss_local[u],
                self.loss_edge[u],
                self.switching_gain[u],
            );
            if !(ll > 0.0 && ll < 1.0 && le > 0.0 && le < 1.0) {
                v.push(format!("quality: user {u} losses must lie in (0,1)"));
            }
            let tol = 1e-12;
            if g < (ll - le).abs() - tol || g > ll + le + tol {
                v.push(format!(
                    "quality: user {u} switching_gain {g} violates triangle bounds [{}, {}]",
                    (ll - le).abs(),
                    ll + le
                ));
            }
            if !(self.psnr_local[u].is_finite() && self.psnr_edge[u].is_finite()) {
                v.push(format!("quality: user {u} PSNR not finite"));
            }
        }
        v
    }
}

/// One IRAC problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// `L_k = ℒ(Φ_edge(s_k), Φ_k(s_k))`.
    pub switching_gain: Vec<f64>,
    /// `γ_k = ‖h_k‖²`.
    pub channel_gain: Vec<f64>,
    pub bandwidth: Vec<f64>,
    pub volume: Vec<f64>,
    pub noise: Vec<f64>,
    pub power_budget: f64,
    pub max_collab: usize,
    pub deadline: f64,
    pub edge_render_time: f64,
    pub local_render_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityProfile>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub run_index: u64,
}

impl Instance {
    /// Builds an instance from gains using the link and budget fields of
    /// `config` for every user.
    pub fn from_gains(
        switching_gain: Vec<f64>,
        channel_gain: Vec<f64>,
        config: &ScenarioConfig,
    ) -> Self {
        let k = switching_gain.len();
        Self {
            switching_gain,
            channel_gain,
            bandwidth: vec![config.bandwidth; k],
            volume: vec![config.data_volume; k],
            noise: vec![config.noise_power; k],
            power_budget: config.power_budget,
            max_collab: config.max_collab,
            deadline: config.deadline,
            edge_render_time: config.edge_render_time,
            local_render_time: config.local_render_time,
            quality: None,
            seed: config.seed,
            run_index: 0,
        }
    }

    pub fn num_users(&self) -> usize {
        self.switching_gain.len()
    }

    pub fn window(&self) -> f64 {
        self.deadline - self.edge_render_time
    }

    pub fn user(&self, k: usize) -> UserLink {
        UserLink {
            channel_gain: self.channel_gain[k],
            noise: self.noise[k],
            bandwidth: self.bandwidth[k],
            volume: self.volume[k],
        }
    }

    /// Minimum-power curves `g_k` for every user.
    pub fn curves(&self) -> Vec<PowerCurve> {
        let window = self.window();
        (0..self.num_users())
            .map(|k| PowerCurve::new(&self.user(k), window))
            .collect()
    }

    pub fn with_power_budget(&self, power_budget: f64) -> Self {
        Self {
            power_budget,
            ..self.clone()
        }
    }

    /// GS-switching objective `Σ (1 − x_k) L_k` for a binary decision.
    pub fn p1_objective(&self, x: &[bool]) -> f64 {
        self.switching_gain
            .iter()
            .zip(x)
            .filter(|(_, &on)| !on)
            .fold(0.0, |acc, (l, _)| acc + l)
    }

    /// Same objective for a relaxed decision in `[0,1]^K`.
    pub fn p1_objective_relaxed(&self, x: &[f64]) -> f64 {
        self.switching_gain
            .iter()
            .zip(x)
            .map(|(l, xk)| (1.0 - xk) * l)
            .sum()
    }

    /// Lists every violated invariant; an empty list means the instance is
    /// valid.
    pub fn validate(&self) -> Vec<String> {
        let k = self.num_users();
        let mut v = Vec::new();
        if k == 0 {
            v.push("instance has no users".into());
        }
        for (name, len) in [
            ("channel_gain", self.channel_gain.len()),
            ("bandwidth", self.bandwidth.len()),
            ("volume", self.volume.len()),
            ("noise", self.noise.len()),
        ] {
            if len != k {
                v.push(format!("{name} has {len} entries, expected {k}"));
            }
        }
        if !v.is_empty() {
            return v;
        }
        for u in 0..k {
            let checks = [
                (
                    "switching_gain",
                    self.switching_gain[u],
                    self.switching_gain[u] >= 0.0,
                ),
                (
                    "channel_gain",
                    self.channel_gain[u],
                    self.channel_gain[u] > 0.0,
                ),
                ("bandwidth", self.bandwidth[u], self.bandwidth[u] > 0.0),
                ("volume", self.volume[u], self.volume[u] > 0.0),
                ("noise", self.noise[u], self.noise[u] > 0.0),
            ];
            for (field, value, ok) in checks {
                if !(ok && value.is_finite()) {
                    v.push(format!("user {u}: {field} invalid (got {value})"));
                }
            }
        }
        if !(self.power_budget > 0.0 && self.power_budget.is_finite()) {
            v.push(format!(
                "power_budget must be > 0 (got {})",
                self.power_budget
            ));
        }
        if !(self.edge_render_time > 0.0) {
            v.push(format!(
                "edge_render_time must be > 0 (got {})",
                self.edge_render_time
            ));
        }
        if !(self.deadline > self.edge_render_time && self.deadline.is_finite()) {
            v.push(format!(
                "deadline ({}) must exceed edge_render_time ({})",
                self.deadline, self.edge_render_time
            ));
        }
        if let Some(q) = &self.quality {
            if q.len() != k {
                v.push(format!(
                    "quality profile has {} users, expected {k}",
                    q.len()
                ));
            } else {
                v.extend(q.validate());
            }
        }
        v
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(IracError::Validation(v))
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, INSTANCE_SCHEMA, self)
    }

    /// Reads and validates an instance file.
    pub fn read(path: &Path) -> Result<Self> {
        let inst: Self = read_json(path, INSTANCE_SCHEMA)?;
        inst.ensure_valid()?;
        Ok(inst)
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded. Used to verify
    /// that paired solvers saw the same instance.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("instance serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// RNG stream for one run of a scenario.
pub fn run_rng(seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index);
    rng
}

/// Draws one scenario realization. Pure in `(config, run_index)`.
pub fn generate_instance(config: &ScenarioConfig, run_index: u64) -> Result<Instance> {
    config.ensure_valid()?;
    let mut rng = run_rng(config.seed, run_index);
    let k = config.num_users;

    let distances: Vec<f64> = (0..k)
        .map(|_| {
            let px = rng.random::<f64>() * config.area_side;
            let py = rng.random::<f64>() * config.area_side;
            px.hypot(py).max(MIN_DISTANCE_M)
        })
        .collect();

    let channel_gain: Vec<f64> = distances
        .iter()
        .map(|d| {
            let pathloss = d.powf(-config.pathloss_exponent);
            sample_channel_gain(&mut rng, config.num_antennas, pathloss)
        })
        .collect();

    let quality = sample_quality_profile(&mut rng, &config.quality_config, k);
    let mut inst = Instance::from_gains(quality.switching_gain.clone(), channel_gain, config);
    inst.quality = Some(quality);
    inst.run_index = run_index;
    Ok(inst)
}

/// `‖h‖²` for `h ~ CN(0, ϱ I_N)`: each entry has real and imaginary parts
/// with variance `ϱ/2`.
pub fn sample_channel_gain<R: Rng + ?Sized>(rng: &mut R, antennas: usize, pathloss: f64) -> f64 {
    let half = pathloss / 2.0;
    let mut acc = 0.0;
    for _ in 0..antennas {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        acc += re * re + im * im;
    }
    half * acc
}

/// Lognormal draw with the given mean and relative standard deviation.
fn lognormal<R: Rng + ?Sized>(rng: &mut R, mean: f64, rel_std: f64) -> f64 {
    if rel_std == 0.0 {
        return mean;
    }
    let s2 = (1.0 + rel_std * rel_std).ln();
    let z: f64 = rng.sample(StandardNormal);
    mean * (s2.sqrt() * z - 0.5 * s2).exp()
}

pub fn sample_quality_profile<R: Rng + ?Sized>(
    rng: &mut R,
    qc: &QualityConfig,
    num_users: usize,
) -> QualityProfile {
    let cap = 1.0 - 1e-9;
    let mut p = QualityProfile {
        loss_local: Vec::with_capacity(num_users),
        loss_edge: Vec::with_capacity(num_users),
        switching_gain: Vec::with_capacity(num_users),
        psnr_local: Vec::with_capacity(num_users),
        psnr_edge: Vec::with_capacity(num_users),
    };
    for _ in 0..num_users {
        let edge = lognormal(rng, qc.mean_loss_edge, qc.loss_jitter).min(cap);
        let mut local = None;
        for _ in 0..QUALITY_RESAMPLE_LIMIT {
            let candidate = lognormal(rng, qc.mean_loss_local, qc.loss_jitter).min(cap);
            if candidate > edge {
                local = Some(candidate);
                break;
            }
        }
        let local =
            local.unwrap_or_else(|| (edge * qc.mean_loss_local / qc.mean_loss_edge).min(cap));
        let lo = (local - edge).abs();
        let hi = local + edge;
        let gain = lo + (hi - lo) * rng.random::<f64>();
        p.psnr_local
            .push(psnr_calibrated(local, qc.psnr_calib_a, qc.psnr_calib_b));
        p.psnr_edge
            .push(psnr_calibrated(edge, qc.psnr_calib_a, qc.psnr_calib_b));
        p.loss_local.push(local);
        p.loss_edge.push(edge);
        p.switching_gain.push(gain);
    }
    p
}
