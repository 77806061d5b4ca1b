mod common;

use common::*;
use irac_core::baselines::{brute_force_decision, solve_brute_force};
use irac_core::instance::generate_instance;
use irac_core::metrics::{ssim, Image};
use irac_core::pmm::{solve_subproblem, subproblem::surrogate_coefficients};
use irac_core::{pmm_solve, Instance, PmmParams, ScenarioConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn subproblem_matches_grid_and_dual_certificate() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..120 {
        let k = 1 + trial % 6;
        let (inst, x_prev, beta) = random_subproblem(&mut rng, k);
        let sub = solve_subproblem(&inst, &x_prev, beta, 1e-12).unwrap();
        let a = surrogate_coefficients(&inst, &x_prev, beta);
        let grid = grid_oracle(&inst, &a, grid_step(k));
        assert!(
            sub.objective <= grid + 1e-6,
            "trial {trial}: {} vs grid {grid}",
            sub.objective
        );
        let lower = dual_lower_bound(&inst, &a, sub.power_price, sub.cardinality_price);
        assert!(
            sub.objective - lower <= 1e-6,
            "trial {trial}: duality gap {}",
            sub.objective - lower
        );
        assert!(sub.kkt.max() < 1e-10, "trial {trial}: {:?}", sub.kkt);
    }
}

#[test]
fn ssim_agrees_with_per_window_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let (w, h) = (rng.random_range(11..18), rng.random_range(11..18));
        let a = random_image(&mut rng, w, h);
        let b = random_image(&mut rng, w, h);
        assert!((ssim(&a, &b).unwrap() - naive_ssim(&a, &b)).abs() < 1e-10);
    }
}

#[test]
fn ssim_of_constant_images_has_closed_form() {
    let (u, v) = (0.3, 0.8);
    let a = Image::constant(16, 16, u).unwrap();
    let b = Image::constant(16, 16, v).unwrap();
    let c1 = 1e-4;
    let expected = (2.0 * u * v + c1) / (u * u + v * v + c1);
    assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let worst = gradient_check(&mut rng, &[7, 12, 9, 5], 10, 1e-5, 1e-7);
    assert!(worst < 1e-4, "relative error {worst}");
}

fn permuted(inst: &Instance, perm: &[usize]) -> Instance {
    let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
    Instance {
        switching_gain: pick(&inst.switching_gain),
        channel_gain: pick(&inst.channel_gain),
        bandwidth: pick(&inst.bandwidth),
        volume: pick(&inst.volume),
        noise: pick(&inst.noise),
        quality: None,
        ..inst.clone()
    }
}

#[test]
fn pmm_is_permutation_covariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (run, p) in (0..12).zip([0.01, 0.02, 0.04].into_iter().cycle()) {
        let inst = generate_instance(&ScenarioConfig::paper_truck(), run)
            .unwrap()
            .with_power_budget(p);
        let mut perm: Vec<usize> = (0..inst.num_users()).collect();
        perm.shuffle(&mut rng);
        let a = pmm_solve(&inst, &PmmParams::default()).unwrap();
        let b = pmm_solve(&permuted(&inst, &perm), &PmmParams::default()).unwrap();
        let back: Vec<bool> = perm.iter().map(|&i| a.x[i]).collect();
        assert_eq!(back, b.x, "run {run}");
        assert!((a.objective_p1 - b.objective_p1).abs() <= 1e-12 * a.objective_p1.max(1.0));
    }
}

#[test]
fn brute_force_matches_plain_enumeration() {
    for run in 0..20 {
        let cfg = ScenarioConfig {
            num_users: 9,
            max_collab: 4,
            power_budget: 0.01,
            ..ScenarioConfig::paper_truck()
        };
        let inst = generate_instance(&cfg, run).unwrap();
        let full: Vec<f64> = inst.curves().iter().map(|c| c.full()).collect();
        let mut best = f64::INFINITY;
        for mask in 0u32..1 << 9 {
            let x: Vec<bool> = (0..9).map(|k| mask >> k & 1 == 1).collect();
            let power: f64 = (0..9).filter(|&k| x[k]).map(|k| full[k]).sum();
            if x.iter().filter(|&&b| b).count() <= 4 && power <= inst.power_budget {
                best = best.min(inst.p1_objective(&x));
            }
        }
        let bf = solve_brute_force(&inst).unwrap();
        assert!((bf.objective_p1 - best).abs() < 1e-15, "run {run}");
        assert_eq!(brute_force_decision(&inst).unwrap(), bf.x);
    }
}
