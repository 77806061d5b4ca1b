//! Fully connected network: ReLU on hidden layers, logistic on the output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IracError, Result};

/// One affine layer, `y = W x + b`. `W` is stored input-major: the weights
/// leaving input `j` are `weights[j * outputs..(j + 1) * outputs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights in `±√(6/(in+out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    /// `W[o][j]`.
    pub fn weight(&self, o: usize, j: usize) -> f64 {
        self.weights[j * self.outputs + o]
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.weights[j * self.outputs..(j + 1) * self.outputs]
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (j, &xj) in x.iter().enumerate() {
            // hidden inputs are mostly ReLU zeros
            if xj == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.column(j)) {
                *o += xj * w;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `inputs[l]` feeds layer `l`; the last entry is the output logits.
    pub activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.activations.last().expect("trace has an output")
    }
}

/// Gradients with the same shapes as [`Mlp::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= factor);
            l.bias.iter_mut().for_each(|b| *b *= factor);
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Mlp {
    /// Network with the given layer widths, `sizes[0]` being the input.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(IracError::domain(format!("bad layer sizes {sizes:?}")));
        }
        Ok(Self {
            layers: sizes
                .windows(2)
                .map(|w| Dense::glorot(w[0], w[1], rng))
                .collect(),
        })
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_size() {
            return Err(IracError::domain(format!(
                "feature length {} does not match model input {}",
                x.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    /// Forward pass keeping every activation.
    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut activations = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.outputs];
            layer.apply(activations.last().unwrap(), &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(out);
        }
        Ok(Trace { activations })
    }

    /// Output probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut input = x.to_vec();
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            out.resize(layer.outputs, 0.0);
            layer.apply(&input, &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut input, &mut out);
        }
        input.iter_mut().for_each(|z| *z = sigmoid(*z));
        Ok(input)
    }

    /// Accumulates `∂loss/∂θ` into `grads` given `∂loss/∂logits`.
    pub fn backward(&self, trace: &Trace, logit_grad: &[f64], grads: &mut Gradients) {
        let mut delta = logit_grad.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &trace.activations[i];
            let g = &mut grads.layers[i];
            for (b, d) in g.bias.iter_mut().zip(&delta) {
                *b += d;
            }
            for (j, &v) in input.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let col = &mut g.weights[j * layer.outputs..(j + 1) * layer.outputs];
                for (w, d) in col.iter_mut().zip(&delta) {
                    *w += v * d;
                }
            }
            if i == 0 {
                break;
            }
            // through W, then the ReLU that produced `input`
            let prev: Vec<f64> = input
                .iter()
                .enumerate()
                .map(|(j, &a)| {
                    if a <= 0.0 {
                        0.0
                    } else {
                        layer.column(j).iter().zip(&delta).map(|(w, d)| w * d).sum()
                    }
                })
                .collect();
            delta = prev;
        }
    }

    /// All parameters in storage order (per layer: weights, then bias).
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }

    /// Inverse of [`Mlp::flatten`] for a model of this shape.
    pub fn load_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(IracError::domain(format!(
                "expected {} parameters, got {}",
                self.num_parameters(),
                values.len()
            )));
        }
        let mut at = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.copy_from_slice(&values[at..at + n]);
            at += n;
            let n = l.bias.len();
            l.bias.copy_from_slice(&values[at..at + n]);
            at += n;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_outputs_one_half() {
        let m = Mlp::zeros(&[40, 100, 72, 20]);
        let out = m.forward(&[0.3; 40]).unwrap();
        assert_eq!(out, vec![0.5; 20]);
    }

    #[test]
    fn hand_built_single_path() {
        // y = 2·relu(3·x0 − 1) + 0.5
        let mut m = Mlp::zeros(&[2, 1, 1]);
        m.layers[0].weights = vec![3.0, 0.0];
        m.layers[0].bias = vec![-1.0];
        m.layers[1].weights = vec![2.0];
        m.layers[1].bias = vec![0.5];
        let t = m.trace(&[1.0, 7.0]).unwrap();
        assert_eq!(t.logits(), &[4.5]);
        let t = m.trace(&[0.1, 7.0]).unwrap();
        assert_eq!(t.logits(), &[0.5]);
        let p = m.forward(&[1.0, 7.0]).unwrap()[0];
        assert!((p - 1.0 / (1.0 + (-4.5f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let m = Mlp::zeros(&[4, 3, 2]);
        assert!(m.forward(&[1.0; 3]).is_err());
    }

    #[test]
    fn glorot_bounds_and_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mlp::new(&[40, 100, 72, 20], &mut rng).unwrap();
        assert_eq!(m.sizes(), vec![40, 100, 72, 20]);
        assert_eq!(
            m.num_parameters(),
            40 * 100 + 100 + 100 * 72 + 72 + 72 * 20 + 20
        );
        let limit = (6.0f64 / 140.0).sqrt();
        assert!(m.layers[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(m.layers[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn flatten_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Mlp::new(&[3, 4, 2], &mut rng).unwrap();
        let mut z = Mlp::zeros(&[3, 4, 2]);
        z.load_flat(&m.flatten()).unwrap();
        assert_eq!(z, m);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
