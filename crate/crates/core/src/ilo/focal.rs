//! Binary focal loss on logistic scores.

use crate::error::{IracError, Result};

/// Scores are clamped to `[ε, 1 − ε]` before taking logarithms.
pub const SCORE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Focal {
    /// Focusing exponent.
    pub gamma: f64,
    /// Weight of the positive class.
    pub alpha: f64,
}

impl Focal {
    /// Loss of a single entry.
    pub fn entry(&self, score: f64, label: bool) -> f64 {
        let s = score.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
        let (pt, at) = if label {
            (s, self.alpha)
        } else {
            (1.0 - s, 1.0 - self.alpha)
        };
        -at * (1.0 - pt).powf(self.gamma) * pt.ln()
    }

    /// Derivative of [`Focal::entry`] with respect to the logit behind
    /// `score`. Clamping is ignored.
    pub fn entry_logit_grad(&self, score: f64, label: bool) -> f64 {
        let s = score.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
        let g = self.gamma;
        if label {
            self.alpha * (1.0 - s).powf(g) * (g * s * s.ln() - (1.0 - s))
        } else {
            -(1.0 - self.alpha) * s.powf(g) * (g * (1.0 - s) * (1.0 - s).ln() - s)
        }
    }
}

/// Mean focal loss over all entries.
pub fn focal_loss(scores: &[f64], labels: &[bool], gamma: f64, alpha: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(IracError::domain("scores and labels differ in length"));
    }
    if scores.is_empty() {
        return Err(IracError::domain("focal loss of an empty batch"));
    }
    if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(IracError::domain("scores must lie in [0,1]"));
    }
    let f = Focal { gamma, alpha };
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| f.entry(s, y))
        .sum();
    Ok(total / scores.len() as f64)
}
