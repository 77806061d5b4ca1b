//! Adam with decoupled weight decay.

use super::mlp::{Gradients, Mlp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 6e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(model: &Mlp, config: AdamWConfig) -> Self {
        let n = model.num_parameters();
        Self {
            config,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// `θ ← θ − lr·(m̂ / (√v̂ + ε) + wd·θ)`.
    pub fn step(&mut self, model: &mut Mlp, grads: &Gradients) {
        let c = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let mut at = 0;
        for (layer, grad) in model.layers.iter_mut().zip(&grads.layers) {
            for (params, g) in [
                (&mut layer.weights, &grad.weights),
                (&mut layer.bias, &grad.bias),
            ] {
                for (theta, &gi) in params.iter_mut().zip(g.iter()) {
                    let m = &mut self.m[at];
                    let v = &mut self.v[at];
                    *m = c.beta1 * *m + (1.0 - c.beta1) * gi;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * gi * gi;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *theta -= c.learning_rate
                        * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * *theta);
                    at += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gradient_only_decays() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = Mlp::new(&[3, 4, 2], &mut rng).unwrap();
        let before = model.flatten();
        let cfg = AdamWConfig {
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            ..Default::default()
        };
        let mut opt = AdamW::new(&model, cfg);
        let zero = Gradients::zeros_like(&model);
        opt.step(&mut model, &zero);
        for (a, b) in model.flatten().iter().zip(&before) {
            assert!((a - b * (1.0 - 1e-3 * 1e-2)).abs() <= 1e-15 * b.abs());
        }
    }

    #[test]
    fn zero_learning_rate_freezes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut model = Mlp::new(&[3, 4, 2], &mut rng).unwrap();
        let before = model.flatten();
        let mut grads = Gradients::zeros_like(&model);
        grads.layers[0].weights.iter_mut().for_each(|g| *g = 0.3);
        let mut opt = AdamW::new(
            &model,
            AdamWConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
        );
        opt.step(&mut model, &grads);
        assert_eq!(model.flatten(), before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // with no decay the bias-corrected first step is lr·sign(g)
        let mut model = Mlp::zeros(&[1, 1]);
        let mut grads = Gradients::zeros_like(&model);
        grads.layers[0].weights[0] = 0.02;
        grads.layers[0].bias[0] = -5.0;
        let mut opt = AdamW::new(
            &model,
            AdamWConfig {
                learning_rate: 0.1,
                weight_decay: 0.0,
                ..Default::default()
            },
        );
        opt.step(&mut model, &grads);
        assert!((model.layers[0].weights[0] + 0.1).abs() < 1e-6);
        assert!((model.layers[0].bias[0] - 0.1).abs() < 1e-6);
    }
}
