//! Downlink physics under asymptotic MRC: per-user rate, the minimum power
//! needed to push a fraction of a frame through the deadline window, frame
//! latency, and constraint checking for a full decision `(x, p)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{IracError, Result};
use crate::instance::Instance;

/// Default relative tolerance for [`check_feasibility`].
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Link parameters of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserLink {
    /// `γ = ‖h‖²`
    pub channel_gain: f64,
    /// `σ²` in watts
    pub noise: f64,
    /// Hz
    pub bandwidth: f64,
    /// bits per frame
    pub volume: f64,
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(IracError::domain(format!("{name} is not finite ({v})")))
    }
}

/// `B log₂(1 + γ p / σ²)` in bits/s.
pub fn achievable_rate(channel_gain: f64, power: f64, noise: f64, bandwidth: f64) -> Result<f64> {
    finite("channel_gain", channel_gain)?;
    finite("power", power)?;
    finite("noise", noise)?;
    finite("bandwidth", bandwidth)?;
    if channel_gain <= 0.0 || noise <= 0.0 || bandwidth <= 0.0 || power < 0.0 {
        return Err(IracError::domain(format!(
            "achievable_rate needs γ>0, σ²>0, B>0, p>=0 (got γ={channel_gain}, σ²={noise}, B={bandwidth}, p={power})"
        )));
    }
    Ok(rate_unchecked(channel_gain, power, noise, bandwidth))
}

#[inline]
fn rate_unchecked(channel_gain: f64, power: f64, noise: f64, bandwidth: f64) -> f64 {
    bandwidth * (channel_gain * power / noise).ln_1p() / LN_2
}

/// The minimum-power curve `g(x) = (σ²/γ)(2^{c x} − 1)` of one user, with
/// `c = V / ((T − T₀) B)` the spectral efficiency needed to deliver a whole
/// frame inside the window.
///
/// `g` is the smallest power whose rate carries `x·V` bits in `T − T₀`
/// seconds. It is zero at `x = 0`, increasing and strictly convex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerCurve {
    /// `σ²/γ` in watts.
    pub scale: f64,
    /// `c`, bits/s/Hz for a full frame.
    pub exponent: f64,
}

impl PowerCurve {
    pub fn new(user: &UserLink, window: f64) -> Self {
        Self {
            scale: user.noise / user.channel_gain,
            exponent: user.volume / (window * user.bandwidth),
        }
    }

    #[inline]
    pub fn power(&self, x: f64) -> f64 {
        self.scale * (self.exponent * x * LN_2).exp_m1()
    }

    /// `g'(x)`.
    #[inline]
    pub fn slope(&self, x: f64) -> f64 {
        self.scale * self.exponent * LN_2 * (self.exponent * x * LN_2).exp()
    }

    /// Full-frame power `g(1)`.
    #[inline]
    pub fn full(&self) -> f64 {
        self.power(1.0)
    }

    /// Unclamped solution of `g'(x) = slope`; `-∞` for non-positive slopes.
    #[inline]
    pub fn fraction_for_slope(&self, slope: f64) -> f64 {
        if slope <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (slope / (self.scale * self.exponent * LN_2)).ln() / (self.exponent * LN_2)
    }

    /// Inverse of [`PowerCurve::power`].
    #[inline]
    pub fn fraction_for_power(&self, power: f64) -> f64 {
        (power / self.scale).ln_1p() / (self.exponent * LN_2)
    }
}

/// `g_k(x)`: minimal power so that `R_k · (T − T₀) ≥ x V_k`.
pub fn min_power_for_fraction(
    user: &UserLink,
    fraction: f64,
    deadline: f64,
    edge_render_time: f64,
) -> Result<f64> {
    if !(deadline > edge_render_time) {
        return Err(IracError::domain(format!(
            "deadline {deadline} must exceed edge render time {edge_render_time}"
        )));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(IracError::domain(format!(
            "fraction must be in [0,1] (got {fraction})"
        )));
    }
    finite("channel_gain", user.channel_gain)?;
    if user.channel_gain <= 0.0 || user.noise <= 0.0 || user.bandwidth <= 0.0 || user.volume <= 0.0
    {
        return Err(IracError::domain("user link fields must be positive"));
    }
    Ok(PowerCurve::new(user, deadline - edge_render_time).power(fraction))
}

/// Time until user `k` has its frame: the local render time when rendering
/// on-device, otherwise edge render time plus download time. Returns `+∞`
/// for an offloaded user with zero power.
pub fn end_to_end_latency(
    user: &UserLink,
    offload: bool,
    power: f64,
    edge_render_time: f64,
    local_render_time: f64,
) -> f64 {
    if !offload {
        return local_render_time;
    }
    if power <= 0.0 {
        return f64::INFINITY;
    }
    let rate = rate_unchecked(user.channel_gain, power, user.noise, user.bandwidth);
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    edge_render_time + user.volume / rate
}

/// Per-user latencies of a decision.
pub fn latencies(inst: &Instance, x: &[bool], p: &[f64]) -> Vec<f64> {
    (0..inst.num_users())
        .map(|k| {
            end_to_end_latency(
                &inst.user(k),
                x[k],
                p[k],
                inst.edge_render_time,
                inst.local_render_time,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `R_k(p_k) − x_k V_k / (T − T₀)` in bits/s.
    pub rate_residuals: Vec<f64>,
    /// `P − Σ p_k` in watts.
    pub power_slack: f64,
    /// `S − Σ x_k`.
    pub cardinality_slack: i64,
    /// Negative or non-finite powers.
    pub bound_violations: Vec<String>,
    /// Every violated constraint, human readable.
    pub violations: Vec<String>,
    pub feasible: bool,
    pub tolerance: f64,
}

/// Evaluates the rate, power-budget, cardinality and bound constraints of
/// `(x, p)` with relative tolerance `tol`.
pub fn check_feasibility(
    inst: &Instance,
    x: &[bool],
    p: &[f64],
    tol: f64,
) -> Result<FeasibilityReport> {
    let k = inst.num_users();
    if x.len() != k || p.len() != k {
        return Err(IracError::domain(format!(
            "decision length mismatch: {} users, |x| = {}, |p| = {}",
            k,
            x.len(),
            p.len()
        )));
    }
    let window = inst.window();
    let mut violations = Vec::new();
    let mut bound_violations = Vec::new();
    let mut rate_residuals = Vec::with_capacity(k);

    for u in 0..k {
        if !(p[u] >= 0.0 && p[u].is_finite()) {
            bound_violations.push(format!("user {u}: power {} outside [0, ∞)", p[u]));
            rate_residuals.push(f64::NAN);
            continue;
        }
        let required = if x[u] { inst.volume[u] / window } else { 0.0 };
        let rate = rate_unchecked(inst.channel_gain[u], p[u], inst.noise[u], inst.bandwidth[u]);
        let residual = rate - required;
        rate_residuals.push(residual);
        if residual < -tol * required {
            violations.push(format!(
                "user {u}: rate {rate:.6e} b/s below required {required:.6e} b/s"
            ));
        }
    }
    violations.extend(bound_violations.iter().cloned());

    let total_power: f64 = p.iter().sum();
    let power_slack = inst.power_budget - total_power;
    if !(power_slack >= -tol * inst.power_budget) {
        violations.push(format!(
            "total power {total_power:.6e} W exceeds budget {:.6e} W",
            inst.power_budget
        ));
    }

    let selected = x.iter().filter(|&&b| b).count() as i64;
    let cardinality_slack = inst.max_collab as i64 - selected;
    if cardinality_slack < 0 {
        violations.push(format!(
            "{selected} collaborating users exceed the limit of {}",
            inst.max_collab
        ));
    }

    Ok(FeasibilityReport {
        rate_residuals,
        power_slack,
        cardinality_slack,
        bound_violations,
        feasible: violations.is_empty(),
        violations,
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::ScenarioConfig;
    use proptest::prelude::*;

    fn unit_user() -> UserLink {
        UserLink {
            channel_gain: 1.0,
            noise: 1.0,
            bandwidth: 1.0,
            volume: 1.0,
        }
    }

    #[test]
    fn rate_examples() {
        assert_eq!(achievable_rate(1.0, 1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!((achievable_rate(3.0, 1.0, 1.0, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(achievable_rate(1.0, 0.0, 1.0, 1.0).unwrap(), 0.0);
        assert!(achievable_rate(f64::NAN, 1.0, 1.0, 1.0).is_err());
        assert!(achievable_rate(1.0, -1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn rate_matches_high_precision_reference() {
        // 2e6 · log2(1 + 1.8e-3 · 0.01 / 1e-10) = 2e6 · log2(180001), evaluated
        // with 50-digit arithmetic (mpmath).
        let reference = 34_915_290.791_883_9;
        let r = achievable_rate(1.8e-3, 0.01, 1e-10, 2e6).unwrap();
        assert!((r - reference).abs() / reference < 1e-14, "{r}");
    }

    #[test]
    fn min_power_examples() {
        let u = unit_user();
        assert_eq!(min_power_for_fraction(&u, 0.0, 1.0, 0.0).unwrap(), 0.0);
        assert!((min_power_for_fraction(&u, 1.0, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(min_power_for_fraction(&u, 0.5, 1.0, 1.0).is_err());
        assert!(min_power_for_fraction(&u, 1.5, 2.0, 1.0).is_err());
    }

    #[test]
    fn latency_cases() {
        let cfg = ScenarioConfig::paper_truck();
        let u = UserLink {
            channel_gain: 2e-3,
            noise: cfg.noise_power,
            bandwidth: cfg.bandwidth,
            volume: cfg.data_volume,
        };
        assert_eq!(
            end_to_end_latency(&u, false, 0.0, cfg.edge_render_time, cfg.local_render_time),
            0.0167
        );
        let g1 = PowerCurve::new(&u, cfg.window()).full();
        let tight = end_to_end_latency(&u, true, g1, cfg.edge_render_time, cfg.local_render_time);
        assert!((tight - cfg.deadline).abs() < 1e-12);

        // p = 2 g(1): latency = T₀ + V / (B log₂(1 + 2(2^c − 1)))
        let c = cfg.data_volume / (cfg.window() * cfg.bandwidth);
        let expected = cfg.edge_render_time
            + cfg.data_volume / (cfg.bandwidth * (1.0 + 2.0 * (2f64.powf(c) - 1.0)).log2());
        let doubled = end_to_end_latency(
            &u,
            true,
            2.0 * g1,
            cfg.edge_render_time,
            cfg.local_render_time,
        );
        assert!(doubled < cfg.deadline);
        assert!((doubled - expected).abs() < 1e-12);

        assert_eq!(
            end_to_end_latency(&u, true, 0.0, cfg.edge_render_time, cfg.local_render_time),
            f64::INFINITY
        );
    }

    fn small_instance() -> Instance {
        let cfg = ScenarioConfig::paper_truck();
        Instance::from_gains(vec![0.03; 4], vec![1e-3, 2e-4, 5e-3, 1e-4], &cfg)
    }

    #[test]
    fn all_local_is_always_feasible() {
        let mut inst = small_instance();
        inst.max_collab = 0;
        let r = check_feasibility(&inst, &[false; 4], &[0.0; 4], FEASIBILITY_TOL).unwrap();
        assert!(r.feasible, "{:?}", r.violations);
    }

    #[test]
    fn all_edge_over_budget_is_infeasible() {
        let mut inst = small_instance();
        inst.power_budget = 1e-4;
        let curves = inst.curves();
        let p: Vec<f64> = curves.iter().map(|c| c.full()).collect();
        assert!(p.iter().sum::<f64>() > inst.power_budget);
        let r = check_feasibility(&inst, &[true; 4], &p, FEASIBILITY_TOL).unwrap();
        assert!(!r.feasible);
        assert!(r.power_slack < 0.0);
    }

    #[test]
    fn length_mismatch_is_domain_error() {
        let inst = small_instance();
        assert!(check_feasibility(&inst, &[false; 3], &[0.0; 4], 1e-9).is_err());
    }

    #[test]
    fn negative_power_is_a_bound_violation() {
        let inst = small_instance();
        let r = check_feasibility(&inst, &[false; 4], &[0.0, -1e-3, 0.0, 0.0], 1e-9).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.bound_violations.len(), 1);
    }

    fn curve_strategy() -> impl Strategy<Value = (UserLink, f64)> {
        (
            -6.0f64..1.0,
            -12.0f64..-8.0,
            5.0f64..7.0,
            4.0f64..7.0,
            0.01f64..0.1,
        )
            .prop_map(|(g, n, b, v, w)| {
                (
                    UserLink {
                        channel_gain: 10f64.powf(g),
                        noise: 10f64.powf(n),
                        bandwidth: 10f64.powf(b),
                        volume: 10f64.powf(v),
                    },
                    w,
                )
            })
            // keep 2^c representable
            .prop_filter("exponent in range", |(u, w)| {
                u.volume / (w * u.bandwidth) < 900.0
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rate_inverts_min_power((user, window) in curve_strategy(), x in 0.0f64..=1.0) {
            let p = min_power_for_fraction(&user, x, window, 0.0).unwrap();
            let r = achievable_rate(user.channel_gain, p, user.noise, user.bandwidth).unwrap();
            let carried = r * window;
            let want = x * user.volume;
            prop_assert!((carried - want).abs() <= 1e-9 * want.max(1e-300), "{carried} vs {want}");
        }

        #[test]
        fn power_curve_is_convex((user, window) in curve_strategy(),
                                 x1 in 0.0f64..=1.0, x2 in 0.0f64..=1.0, t in 0.0f64..=1.0) {
            let g = PowerCurve::new(&user, window);
            let mid = g.power((1.0 - t) * x1 + t * x2);
            let chord = (1.0 - t) * g.power(x1) + t * g.power(x2);
            prop_assert!(mid <= chord * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn monotone_in_power_gain_fraction_and_volume((user, window) in curve_strategy(),
                                                      x in 0.01f64..0.99, p in 1e-6f64..1.0) {
            let r = |g: f64, p: f64| achievable_rate(g, p, user.noise, user.bandwidth).unwrap();
            prop_assert!(r(user.channel_gain, p * 1.01) > r(user.channel_gain, p));
            prop_assert!(r(user.channel_gain * 1.01, p) > r(user.channel_gain, p));
            let g = PowerCurve::new(&user, window);
            prop_assert!(g.power(x + 0.01) > g.power(x));
            let bigger = UserLink { volume: user.volume * 1.01, ..user };
            prop_assert!(PowerCurve::new(&bigger, window).power(x) > g.power(x));
        }

        #[test]
        fn slope_inverse_round_trips((user, window) in curve_strategy(), x in 0.0f64..=1.0) {
            let g = PowerCurve::new(&user, window);
            let back = g.fraction_for_slope(g.slope(x));
            prop_assert!((back - x).abs() < 1e-9);
            let back = g.fraction_for_power(g.power(x));
            prop_assert!((back - x).abs() < 1e-9);
        }
    }

    /// Independent re-evaluation of each constraint, written out longhand.
    fn naive_feasible(inst: &Instance, x: &[bool], p: &[f64], tol: f64) -> bool {
        let mut ok = true;
        let mut sum_p = 0.0;
        let mut count = 0usize;
        for k in 0..inst.num_users() {
            if p[k] < 0.0 {
                ok = false;
            }
            sum_p += p[k];
            if x[k] {
                count += 1;
                let snr = inst.channel_gain[k] * p[k] / inst.noise[k];
                let rate = inst.bandwidth[k] * (1.0 + snr).log2();
                let need = inst.volume[k] / (inst.deadline - inst.edge_render_time);
                if rate < need * (1.0 - tol) {
                    ok = false;
                }
            }
        }
        ok && sum_p <= inst.power_budget * (1.0 + tol) && count <= inst.max_collab
    }

    #[test]
    fn verdict_agrees_with_longhand_check() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let cfg = ScenarioConfig::paper_truck();
        for run in 0..300 {
            let inst = crate::instance::generate_instance(&cfg, run).unwrap();
            let curves = inst.curves();
            let x: Vec<bool> = (0..inst.num_users())
                .map(|_| rng.random_bool(0.5))
                .collect();
            let p: Vec<f64> = (0..inst.num_users())
                .map(|k| {
                    if x[k] {
                        // sometimes a bit short, sometimes plenty
                        curves[k].full() * rng.random_range(0.9..1.3)
                    } else {
                        0.0
                    }
                })
                .collect();
            let r = check_feasibility(&inst, &x, &p, FEASIBILITY_TOL).unwrap();
            assert_eq!(
                r.feasible,
                naive_feasible(&inst, &x, &p, FEASIBILITY_TOL),
                "run {run}"
            );
        }
    }
}
