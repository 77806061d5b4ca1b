//! Rendering-error mathematics: SSIM, the L1/D-SSIM rendering loss, the
//! GS-switching gain between two renders, loss→PSNR calibration and scoring
//! of a full decision.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IracError, Result};
use crate::instance::{Instance, PSNR_CALIB_A, PSNR_CALIB_B};
use crate::link::latencies;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Dynamic range of sample values.
pub const SSIM_RANGE: f64 = 1.0;

pub fn ssim_c1() -> f64 {
    (SSIM_K1 * SSIM_RANGE).powi(2)
}

pub fn ssim_c2() -> f64 {
    (SSIM_K2 * SSIM_RANGE).powi(2)
}

/// RGB image with samples in `[0, 1]`, stored row-major with interleaved
/// channels: sample `(x, y, c)` lives at `(y * width + x) * 3 + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * Self::CHANNELS {
            return Err(IracError::domain(format!(
                "image {width}x{height} needs {} samples, got {}",
                width * height * Self::CHANNELS,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(IracError::domain(format!("sample {bad} outside [0,1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height * Self::CHANNELS])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * Self::CHANNELS + c]
    }

    fn plane(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(Self::CHANNELS)
            .copied()
            .collect()
    }

    /// Reads a binary (P6) portable pixmap with maxval ≤ 255.
    pub fn read_ppm(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::decode_ppm(BufReader::new(file))
    }

    pub fn decode_ppm<R: BufRead>(mut reader: R) -> Result<Self> {
        let mut fields = Vec::with_capacity(4);
        let mut token = Vec::new();
        let mut byte = [0u8; 1];
        while fields.len() < 4 {
            if reader.read(&mut byte)? == 0 {
                return Err(IracError::Parse("truncated PPM header".into()));
            }
            match byte[0] {
                b'#' if token.is_empty() => {
                    let mut skip = Vec::new();
                    reader.read_until(b'\n', &mut skip)?;
                }
                b if b.is_ascii_whitespace() => {
                    if !token.is_empty() {
                        fields.push(String::from_utf8_lossy(&token).into_owned());
                        token.clear();
                    }
                }
                b => token.push(b),
            }
        }
        if fields[0] != "P6" {
            return Err(IracError::Parse(format!(
                "unsupported PPM magic {:?} (expected P6)",
                fields[0]
            )));
        }
        let parse = |s: &str, what: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| IracError::Parse(format!("bad PPM {what}: {s:?}")))
        };
        let width = parse(&fields[1], "width")?;
        let height = parse(&fields[2], "height")?;
        let maxval = parse(&fields[3], "maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(IracError::Parse(format!(
                "PPM maxval {maxval} unsupported (8-bit only)"
            )));
        }
        let mut raw = vec![0u8; width * height * Self::CHANNELS];
        reader
            .read_exact(&mut raw)
            .map_err(|_| IracError::Parse("truncated PPM pixel data".into()))?;
        let scale = maxval as f64;
        let data = raw.iter().map(|&b| (b as f64 / scale).min(1.0)).collect();
        Self::new(width, height, data)
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.encode_ppm(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn encode_ppm<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        out.write_all(&bytes)?;
        Ok(())
    }
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, w) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *w = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Valid-mode separable Gaussian filter of a `width x height` plane.
fn filter_valid(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let n = kernel.len();
    let ow = width - n + 1;
    let oh = height - n + 1;
    let mut rows = vec![0.0; ow * height];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..ow {
            rows[y * ow + x] = kernel.iter().zip(&row[x..x + n]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

fn check_conformable(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(IracError::domain(format!(
            "image size mismatch: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(IracError::domain(format!(
            "image {}x{} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window",
            a.width, a.height
        )));
    }
    Ok(())
}

/// Mean SSIM over all valid window positions and the three channels, using
/// an 11×11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03 and range 1.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_conformable(a, b)?;
    let kernel = gaussian_kernel();
    let (w, h) = (a.width, a.height);
    let (c1, c2) = (ssim_c1(), ssim_c2());
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..Image::CHANNELS {
        let pa = a.plane(c);
        let pb = b.plane(c);
        let sq = |p: &[f64]| p.iter().map(|v| v * v).collect::<Vec<_>>();
        let cross: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = filter_valid(&pa, w, h, &kernel);
        let mu_b = filter_valid(&pb, w, h, &kernel);
        let e_aa = filter_valid(&sq(&pa), w, h, &kernel);
        let e_bb = filter_valid(&sq(&pb), w, h, &kernel);
        let e_ab = filter_valid(&cross, w, h, &kernel);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// `(1 − λ)·MAE(a, b) + λ·(1 − SSIM(a, b))`.
///
/// The L1 term is the mean absolute difference over all `3·L·W` samples.
pub fn rendering_error(a: &Image, b: &Image, lambda: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(IracError::domain(format!(
            "loss weight must be in [0,1) (got {lambda})"
        )));
    }
    check_conformable(a, b)?;
    let mae = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.data.len() as f64;
    let structural = if lambda > 0.0 { 1.0 - ssim(a, b)? } else { 0.0 };
    Ok((1.0 - lambda) * mae + lambda * structural)
}

/// The switching gain `ℒ(Φ_edge(s), Φ_k(s))` of one pose: rendering error
/// of the edge render measured against the local render.
pub fn switching_gain_from_images(
    edge_render: &Image,
    local_render: &Image,
    lambda: f64,
) -> Result<f64> {
    rendering_error(edge_render, local_render, lambda)
}

pub fn psnr_calibrated(loss: f64, a: f64, b: f64) -> f64 {
    a + b * loss.log10()
}

/// PSNR in dB predicted from a rendering loss by the log-linear line through
/// the two model anchors `(0.029, 27.49 dB)` and `(0.041, 24.99 dB)`.
pub fn psnr_from_loss(loss: f64) -> Result<f64> {
    if !(loss > 0.0) || !loss.is_finite() {
        return Err(IracError::domain(format!("loss must be > 0 (got {loss})")));
    }
    Ok(psnr_calibrated(loss, PSNR_CALIB_A, PSNR_CALIB_B))
}

/// Solves for `(A, B)` such that `A + B log10(loss_i) = psnr_i` at both
/// anchor points.
pub fn fit_psnr_calibration(anchors: [(f64, f64); 2]) -> (f64, f64) {
    let [(l0, p0), (l1, p1)] = anchors;
    let b = (p0 - p1) / (l0.log10() - l1.log10());
    (p0 - b * l0.log10(), b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub loss: f64,
    pub psnr: f64,
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemMetrics {
    /// Σ_k loss of the model each user ends up with, against ground truth.
    pub total_loss: f64,
    /// Arithmetic mean of per-user PSNR in dB.
    pub mean_psnr: f64,
    pub max_latency: f64,
    pub per_user: Vec<UserMetrics>,
}

/// Scores a decision against the instance's quality profile. The caller is
/// responsible for feasibility; infeasible decisions (e.g. all-edge) are
/// scored as-is so their latency can be reported.
pub fn evaluate_solution(inst: &Instance, x: &[bool], p: &[f64]) -> Result<SystemMetrics> {
    let q = inst
        .quality
        .as_ref()
        .ok_or_else(|| IracError::domain("instance has no quality profile attached"))?;
    let k = inst.num_users();
    if x.len() != k || p.len() != k || q.len() != k {
        return Err(IracError::domain("decision length does not match instance"));
    }
    let lat = latencies(inst, x, p);
    let per_user: Vec<UserMetrics> = (0..k)
        .map(|u| {
            let (loss, psnr) = if x[u] {
                (q.loss_edge[u], q.psnr_edge[u])
            } else {
                (q.loss_local[u], q.psnr_local[u])
            };
            UserMetrics {
                loss,
                psnr,
                latency: lat[u],
            }
        })
        .collect();
    Ok(SystemMetrics {
        total_loss: per_user.iter().map(|m| m.loss).sum(),
        mean_psnr: per_user.iter().map(|m| m.psnr).sum::<f64>() / k as f64,
        max_latency: lat.iter().copied().fold(0.0, f64::max),
        per_user,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{
        generate_instance, QualityProfile, ScenarioConfig, EDGE_LOSS_ANCHOR, EDGE_PSNR_ANCHOR,
        LOCAL_LOSS_ANCHOR, LOCAL_PSNR_ANCHOR,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
        Image::new(w, h, (0..w * h * 3).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn self_similarity_is_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (w, h) in [(11, 11), (16, 16), (23, 14)] {
            let a = random_image(&mut rng, w, h);
            assert_eq!(ssim(&a, &a).unwrap(), 1.0);
            assert_eq!(rendering_error(&a, &a, 0.2).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_images_match_closed_form() {
        let a = Image::constant(16, 16, 0.0).unwrap();
        let b = Image::constant(16, 16, 1.0).unwrap();
        let c1 = ssim_c1();
        let expected = c1 / (1.0 + c1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn rendering_error_constant_offset() {
        let a = Image::constant(16, 16, 0.0).unwrap();
        let b = Image::constant(16, 16, 0.1).unwrap();
        // constant patches: SSIM = (2·0·0.1 + C1)/(0 + 0.01 + C1) since the
        // variance terms cancel
        let c1 = ssim_c1();
        let s = c1 / (0.01 + c1);
        let expected = 0.8 * 0.1 + 0.2 * (1.0 - s);
        assert!((rendering_error(&a, &b, 0.2).unwrap() - expected).abs() < 1e-12);
        assert!((rendering_error(&a, &b, 0.0).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn switching_gain_is_rendering_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_image(&mut rng, 12, 12);
        let b = random_image(&mut rng, 12, 12);
        assert_eq!(
            switching_gain_from_images(&a, &b, 0.2).unwrap(),
            rendering_error(&a, &b, 0.2).unwrap()
        );
        assert_eq!(switching_gain_from_images(&a, &a, 0.2).unwrap(), 0.0);
        let shifted = Image::new(
            12,
            12,
            a.samples().iter().map(|v| (v * 0.9) + 0.05).collect(),
        )
        .unwrap();
        let plain = Image::new(12, 12, a.samples().iter().map(|v| v * 0.9).collect()).unwrap();
        assert!((switching_gain_from_images(&shifted, &plain, 0.0).unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn size_errors() {
        let a = Image::constant(10, 16, 0.5).unwrap();
        assert!(ssim(&a, &a).is_err());
        let b = Image::constant(16, 16, 0.5).unwrap();
        let c = Image::constant(17, 16, 0.5).unwrap();
        assert!(ssim(&b, &c).is_err());
        assert!(Image::new(2, 2, vec![0.0; 11]).is_err());
        assert!(Image::new(1, 1, vec![0.0, 2.0, 0.0]).is_err());
        assert!(rendering_error(&b, &b, 1.0).is_err());
    }

    #[test]
    fn ssim_is_symmetric_and_premetric_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = random_image(&mut rng, 14, 13);
            let b = random_image(&mut rng, 14, 13);
            let ab = ssim(&a, &b).unwrap();
            let ba = ssim(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&ab));
            assert!(rendering_error(&a, &b, 0.2).unwrap() > 0.0);
        }
    }

    #[test]
    fn psnr_anchors() {
        assert!((psnr_from_loss(EDGE_LOSS_ANCHOR).unwrap() - EDGE_PSNR_ANCHOR).abs() < 0.01);
        assert!((psnr_from_loss(LOCAL_LOSS_ANCHOR).unwrap() - LOCAL_PSNR_ANCHOR).abs() < 0.01);
        assert!(psnr_from_loss(0.0).is_err());
        assert!(psnr_from_loss(-1.0).is_err());
        assert!(psnr_from_loss(0.02).unwrap() > psnr_from_loss(0.03).unwrap());
    }

    #[test]
    fn frozen_calibration_matches_two_point_fit() {
        let (a, b) = fit_psnr_calibration([
            (EDGE_LOSS_ANCHOR, EDGE_PSNR_ANCHOR),
            (LOCAL_LOSS_ANCHOR, LOCAL_PSNR_ANCHOR),
        ]);
        assert!((a - PSNR_CALIB_A).abs() < 1e-12);
        assert!((b - PSNR_CALIB_B).abs() < 1e-12);
        // direct evaluation of the solved line at 0.0345
        let mid = a + b * 0.0345f64.log10();
        assert!((psnr_from_loss(0.0345).unwrap() - mid).abs() < 1e-12);
        assert!((mid - 26.236_206_961_117_926).abs() < 1e-9);
    }

    #[test]
    fn ppm_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f64> = (0..5 * 4 * 3)
            .map(|_| rng.random_range(0..=255u8) as f64 / 255.0)
            .collect();
        let img = Image::new(5, 4, data).unwrap();
        let mut buf = Vec::new();
        img.encode_ppm(&mut buf).unwrap();
        let back = Image::decode_ppm(&buf[..]).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn ppm_header_comments_and_errors() {
        let mut bytes = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 255, 0]);
        let img = Image::decode_ppm(&bytes[..]).unwrap();
        assert_eq!(img.get(0, 0, 0), 1.0);
        assert_eq!(img.get(1, 0, 1), 1.0);
        assert!(Image::decode_ppm(&b"P3\n1 1\n255\n0 0 0"[..]).is_err());
        assert!(Image::decode_ppm(&b"P6\n2 2\n255\n\x00"[..]).is_err());
        assert!(Image::decode_ppm(&b"P6\n1 1\n65535\n"[..]).is_err());
    }

    fn anchored_profile(k: usize) -> QualityProfile {
        QualityProfile {
            loss_local: vec![0.041; k],
            loss_edge: vec![0.029; k],
            switching_gain: vec![0.012; k],
            psnr_local: vec![24.99; k],
            psnr_edge: vec![27.49; k],
        }
    }

    #[test]
    fn evaluate_counts_selected_models() {
        let cfg = ScenarioConfig::paper_truck();
        let mut inst = Instance::from_gains(vec![0.012; 20], vec![1e-3; 20], &cfg);
        assert!(evaluate_solution(&inst, &[false; 20], &[0.0; 20]).is_err());
        inst.quality = Some(anchored_profile(20));

        let zero = evaluate_solution(&inst, &[false; 20], &[0.0; 20]).unwrap();
        assert!((zero.total_loss - 20.0 * 0.041).abs() < 1e-12);
        assert_eq!(zero.max_latency, cfg.local_render_time);

        let curves = inst.curves();
        let m = 7;
        let x: Vec<bool> = (0..20).map(|k| k < m).collect();
        let p: Vec<f64> = (0..20)
            .map(|k| if x[k] { curves[k].full() } else { 0.0 })
            .collect();
        let s = evaluate_solution(&inst, &x, &p).unwrap();
        let expected = (20 - m) as f64 * 0.041 + m as f64 * 0.029;
        assert!((s.total_loss - expected).abs() < 1e-12);
        assert!((s.max_latency - cfg.deadline).abs() < 1e-12);
    }

    #[test]
    fn evaluate_matches_longhand_accumulation() {
        let cfg = ScenarioConfig::paper_truck();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for run in 0..50 {
            let inst = generate_instance(&cfg, run).unwrap();
            let q = inst.quality.clone().unwrap();
            let x: Vec<bool> = (0..20).map(|_| rng.random_bool(0.4)).collect();
            let p = vec![0.0; 20];
            let s = evaluate_solution(&inst, &x, &p).unwrap();
            let mut total = 0.0;
            let mut psnr = 0.0;
            for k in 0..20 {
                if x[k] {
                    total += q.loss_edge[k];
                    psnr += q.psnr_edge[k];
                } else {
                    total += q.loss_local[k];
                    psnr += q.psnr_local[k];
                }
            }
            assert!((s.total_loss - total).abs() < 1e-12);
            assert!((s.mean_psnr - psnr / 20.0).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_identity_with_zero_triangle_slack() {
        let cfg = ScenarioConfig::paper_truck();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for run in 0..50 {
            let mut inst = generate_instance(&cfg, run).unwrap();
            let mut q = inst.quality.clone().unwrap();
            let slack_gain = inst.switching_gain.clone();
            let x: Vec<bool> = (0..20).map(|_| rng.random_bool(0.5)).collect();
            let sum_edge: f64 = q.loss_edge.iter().sum();

            // positive slack: the P1 objective upper-bounds the true loss
            let true_loss = evaluate_solution(&inst, &x, &[0.0; 20]).unwrap().total_loss;
            let bound = sum_edge + inst.p1_objective(&x);
            assert!(true_loss <= bound + 1e-12);

            // zero slack: identity up to the constant Σ loss_edge
            q.switching_gain = (0..20).map(|k| q.loss_local[k] - q.loss_edge[k]).collect();
            inst.switching_gain = q.switching_gain.clone();
            inst.quality = Some(q);
            let true_loss = evaluate_solution(&inst, &x, &[0.0; 20]).unwrap().total_loss;
            assert!((true_loss - sum_edge - inst.p1_objective(&x)).abs() < 1e-12);
            assert_ne!(slack_gain, inst.switching_gain);
        }
    }
}
