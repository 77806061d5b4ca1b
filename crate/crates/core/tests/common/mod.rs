//! Independent reference implementations shared by the oracle tests and the
//! acceptance suite.

#![allow(dead_code)]

use irac_core::ilo::focal::Focal;
use irac_core::ilo::mlp::{Gradients, Mlp};
use irac_core::ilo::train::batch_loss_and_grad;
use irac_core::instance::Instance;
use irac_core::metrics::Image;
use irac_core::ScenarioConfig;
use rand::Rng;
use rand_distr::StandardNormal;

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// A random MM subproblem: instance with `k` users, anchor point and β.
pub fn random_subproblem<R: Rng>(rng: &mut R, k: usize) -> (Instance, Vec<f64>, f64) {
    let cfg = ScenarioConfig {
        num_users: k,
        max_collab: rng.random_range(1..=k),
        power_budget: log_uniform(rng, 1e-3, 1e-1),
        ..ScenarioConfig::paper_truck()
    };
    let gains = (0..k).map(|_| rng.random_range(0.005..0.1)).collect();
    // full-frame powers between ~0.1 mW and ~100 mW
    let channels = (0..k).map(|_| log_uniform(rng, 1.6e-5, 1.6e-2)).collect();
    let inst = Instance::from_gains(gains, channels, &cfg);
    let x_prev = (0..k).map(|_| rng.random::<f64>()).collect();
    let beta = log_uniform(rng, 2.0, 200.0);
    (inst, x_prev, beta)
}

/// Grid step for the first `k − 1` coordinates: 1e-3 up to three users,
/// coarser beyond so the enumeration stays near a million points.
pub fn grid_step(k: usize) -> f64 {
    match k {
        0..=3 => 1e-3,
        4 => 1e-2,
        5 => 0.025,
        _ => 0.05,
    }
}

/// Smallest `Σ a_k x_k` over feasible points whose first `k − 1`
/// coordinates lie on a grid of spacing `step`; the last coordinate is
/// chosen exactly.
pub fn grid_oracle(inst: &Instance, a: &[f64], step: f64) -> f64 {
    let k = a.len();
    let curves = inst.curves();
    let n = (1.0 / step).round() as usize;
    let values: Vec<Vec<(f64, f64)>> = curves
        .iter()
        .map(|c| {
            (0..=n)
                .map(|i| {
                    let x = i as f64 / n as f64;
                    (x, c.power(x))
                })
                .collect()
        })
        .collect();
    let budget = inst.power_budget;
    let cap = inst.max_collab as f64;
    let last = |obj: f64, power: f64, count: f64| -> f64 {
        let c = &curves[k - 1];
        let x = if a[k - 1] < 0.0 {
            let by_power = c.fraction_for_power(budget - power).max(0.0);
            by_power.min(1.0).min(cap - count)
        } else {
            0.0
        };
        obj + a[k - 1] * x
    };
    #[allow(clippy::too_many_arguments)]
    fn walk(
        depth: usize,
        k: usize,
        values: &[Vec<(f64, f64)>],
        a: &[f64],
        acc: (f64, f64, f64),
        budget: f64,
        cap: f64,
        last: &dyn Fn(f64, f64, f64) -> f64,
        best: &mut f64,
    ) {
        if depth == k - 1 {
            *best = best.min(last(acc.0, acc.1, acc.2));
            return;
        }
        for &(x, g) in &values[depth] {
            let power = acc.1 + g;
            let count = acc.2 + x;
            // powers and counts only grow along the grid
            if power > budget || count > cap + 1e-12 {
                break;
            }
            walk(
                depth + 1,
                k,
                values,
                a,
                (acc.0 + a[depth] * x, power, count),
                budget,
                cap,
                last,
                best,
            );
        }
    }
    let mut best = f64::INFINITY;
    walk(
        0,
        k,
        &values,
        a,
        (0.0, 0.0, 0.0),
        budget,
        cap,
        &last,
        &mut best,
    );
    best
}

/// Golden-section minimum of a convex function on `[0, 1]`, endpoints
/// included.
fn min_convex(f: impl Fn(f64) -> f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f(0.5 * (lo + hi)).min(f(0.0)).min(f(1.0))
}

/// Lagrangian dual value at prices `(μ, ν)`: a lower bound on the
/// subproblem optimum for any `μ, ν ≥ 0`.
pub fn dual_lower_bound(inst: &Instance, a: &[f64], mu: f64, nu: f64) -> f64 {
    let per_user: f64 = inst
        .curves()
        .iter()
        .zip(a)
        .map(|(c, &ak)| min_convex(|x| (ak + nu) * x + mu * c.power(x)))
        .sum();
    per_user - mu * inst.power_budget - nu * inst.max_collab as f64
}

fn gaussian_weights() -> Vec<f64> {
    let w: Vec<f64> = (0..11)
        .map(|i| {
            let d = i as f64 - 5.0;
            (-d * d / (2.0 * 1.5 * 1.5)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// SSIM computed window by window with the full 2-D weight matrix and
/// two-pass moments.
pub fn naive_ssim(a: &Image, b: &Image) -> f64 {
    let k = gaussian_weights();
    let c1 = (0.01f64).powi(2);
    let c2 = (0.03f64).powi(2);
    let (w, h) = (a.width(), a.height());
    let mut total = 0.0;
    let mut count = 0;
    for c in 0..Image::CHANNELS {
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let mut mu = (0.0, 0.0);
                for j in 0..11 {
                    for i in 0..11 {
                        let wt = k[i] * k[j];
                        mu.0 += wt * a.get(x0 + i, y0 + j, c);
                        mu.1 += wt * b.get(x0 + i, y0 + j, c);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for j in 0..11 {
                    for i in 0..11 {
                        let wt = k[i] * k[j];
                        let da = a.get(x0 + i, y0 + j, c) - mu.0;
                        let db = b.get(x0 + i, y0 + j, c) - mu.1;
                        va += wt * da * da;
                        vb += wt * db * db;
                        cov += wt * da * db;
                    }
                }
                total += ((2.0 * mu.0 * mu.1 + c1) * (2.0 * cov + c2))
                    / ((mu.0 * mu.0 + mu.1 * mu.1 + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

pub fn random_image<R: Rng>(rng: &mut R, w: usize, h: usize) -> Image {
    let data = (0..w * h * Image::CHANNELS)
        .map(|_| rng.random::<f64>())
        .collect();
    Image::new(w, h, data).unwrap()
}

/// Largest relative difference between backpropagated and central
/// finite-difference gradients of the mean focal loss over a batch.
/// Differences are measured against `max(|analytic|, |numeric|, floor)`.
pub fn gradient_check<R: Rng>(
    rng: &mut R,
    sizes: &[usize],
    batch: usize,
    h: f64,
    floor: f64,
) -> f64 {
    let mut model = Mlp::new(sizes, rng).unwrap();
    // nonzero biases so no hidden unit sits exactly at a kink
    for l in &mut model.layers {
        l.bias
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-0.1..0.1));
    }
    let focal = Focal {
        gamma: 2.0,
        alpha: 0.25,
    };
    let features: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..sizes[0]).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let labels: Vec<Vec<bool>> = (0..batch)
        .map(|_| {
            (0..*sizes.last().unwrap())
                .map(|_| rng.random_bool(0.4))
                .collect()
        })
        .collect();
    let f: Vec<&[f64]> = features.iter().map(|v| v.as_slice()).collect();
    let y: Vec<&[bool]> = labels.iter().map(|v| v.as_slice()).collect();

    let mut grads = Gradients::zeros_like(&model);
    batch_loss_and_grad(&model, &focal, &f, &y, &mut grads).unwrap();
    let analytic: Vec<f64> = {
        let mut g = Mlp::zeros(sizes);
        g.layers = grads.layers.clone();
        g.flatten()
    };

    let loss = |m: &Mlp| -> f64 {
        let entries = (batch * sizes.last().unwrap()) as f64;
        f.iter()
            .zip(&y)
            .map(|(x, lab)| {
                m.forward(x)
                    .unwrap()
                    .iter()
                    .zip(lab.iter())
                    .map(|(&s, &l)| focal.entry(s, l))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / entries
    };
    let theta = model.flatten();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut shifted = theta.clone();
    for i in 0..theta.len() {
        shifted[i] = theta[i] + h;
        probe.load_flat(&shifted).unwrap();
        let up = loss(&probe);
        shifted[i] = theta[i] - h;
        probe.load_flat(&shifted).unwrap();
        let down = loss(&probe);
        shifted[i] = theta[i];
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}
