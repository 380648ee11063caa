//! Scalar losses, their subdifferentials and proximal maps, and the
//! block-weighted multi-loss.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `(t - y)^2`
    Square,
    /// `|t - y|`
    Absolute,
    /// `max(0, 1 - y t)`
    Hinge,
}

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Element of least magnitude.
    pub fn min_norm(&self) -> f64 {
        if self.lo > 0.0 {
            self.lo
        } else if self.hi < 0.0 {
            self.hi
        } else {
            0.0
        }
    }

    pub fn scale(self, w: f64) -> Self {
        debug_assert!(w >= 0.0);
        Interval { lo: w * self.lo, hi: w * self.hi }
    }
}

/// One loss term `w * l(y, t)` with a fixed nonnegative weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarLoss {
    pub kind: LossKind,
    pub weight: f64,
}

impl ScalarLoss {
    pub fn new(kind: LossKind) -> Self {
        ScalarLoss { kind, weight: 1.0 }
    }

    pub fn weighted(kind: LossKind, weight: f64) -> Self {
        ScalarLoss { kind, weight }
    }

    pub fn value(&self, y: f64, t: f64) -> f64 {
        self.weight
            * match self.kind {
                LossKind::Square => (t - y) * (t - y),
                LossKind::Absolute => (t - y).abs(),
                LossKind::Hinge => (1.0 - y * t).max(0.0),
            }
    }

    /// The subdifferential in `t`.
    pub fn subgradient(&self, y: f64, t: f64) -> Interval {
        let raw = match self.kind {
            LossKind::Square => Interval::point(2.0 * (t - y)),
            LossKind::Absolute => {
                if t > y {
                    Interval::point(1.0)
                } else if t < y {
                    Interval::point(-1.0)
                } else {
                    Interval { lo: -1.0, hi: 1.0 }
                }
            }
            LossKind::Hinge => {
                let margin = y * t;
                if margin < 1.0 {
                    Interval::point(-y)
                } else if margin > 1.0 {
                    Interval::point(0.0)
                } else {
                    Interval { lo: (-y).min(0.0), hi: (-y).max(0.0) }
                }
            }
        };
        raw.scale(self.weight)
    }

    /// `argmin_t { w l(y, t) + (t - v)^2 / (2 step) }`.
    pub fn prox(&self, y: f64, v: f64, step: f64) -> f64 {
        let s = self.weight * step;
        match self.kind {
            LossKind::Square => (v + 2.0 * s * y) / (1.0 + 2.0 * s),
            LossKind::Absolute => {
                let r = v - y;
                if r > s {
                    v - s
                } else if r < -s {
                    v + s
                } else {
                    y
                }
            }
            LossKind::Hinge => {
                if y * v >= 1.0 || y == 0.0 {
                    v
                } else {
                    let moved = v + s * y;
                    if y * moved <= 1.0 {
                        moved
                    } else {
                        1.0 / y
                    }
                }
            }
        }
    }

    /// Lipschitz constant of `t -> w l(y, t)` on `[-theta, theta]`,
    /// uniform over `|y| <= y_bound`.
    pub fn local_lipschitz(&self, theta: f64, y_bound: f64) -> f64 {
        self.weight
            * match self.kind {
                LossKind::Square => 2.0 * (theta + y_bound),
                LossKind::Absolute => 1.0,
                LossKind::Hinge => y_bound.max(1.0),
            }
    }
}

/// A loss with an optional per-sample weight stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loss {
    #[serde(rename = "loss")]
    pub kind: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl Loss {
    pub fn new(kind: LossKind) -> Self {
        Loss { kind, weights: None }
    }

    pub fn with_weights(kind: LossKind, weights: Vec<f64>) -> Self {
        Loss { kind, weights: Some(weights) }
    }

    pub fn sample_weight(&self, k: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[k])
    }

    /// The weighted loss applied to sample `k`.
    pub fn sample(&self, k: usize) -> ScalarLoss {
        ScalarLoss::weighted(self.kind, self.sample_weight(k))
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w.iter().copied().fold(0.0, f64::max))
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if let Some(w) = &self.weights {
            if w.len() != len {
                return invalid(format!("{} loss weights for {len} samples", w.len()));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return invalid("loss weights must be finite and nonnegative");
            }
        }
        Ok(())
    }

    pub fn local_lipschitz(&self, theta: f64, y_bound: f64) -> f64 {
        ScalarLoss::weighted(self.kind, self.max_weight()).local_lipschitz(theta, y_bound)
    }
}

/// `l(y, t)` for a single sample with the loss's first weight (or 1).
pub fn loss_value(loss: &Loss, y: f64, t: f64) -> f64 {
    loss.sample(0).value(y, t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBlock {
    pub loss: Loss,
    pub rho: f64,
    pub range: Range<usize>,
}

/// `L(y, t) = sum_j rho_j / N_j sum_{k in block j} w_k l_j(y_k, t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLoss {
    blocks: Vec<LossBlock>,
    len: usize,
}

impl MultiLoss {
    /// Blocks must tile `0..len` contiguously in order.
    pub fn new(blocks: Vec<LossBlock>) -> Result<Self> {
        let mut next = 0;
        for b in &blocks {
            if b.range.start != next || b.range.end <= b.range.start {
                return invalid("loss blocks must be nonempty and contiguous");
            }
            if !(b.rho > 0.0 && b.rho.is_finite()) {
                return invalid(format!("block weight must be positive, got {}", b.rho));
            }
            b.loss.validate(b.range.len())?;
            next = b.range.end;
        }
        Ok(MultiLoss { blocks, len: next })
    }

    pub fn blocks(&self) -> &[LossBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Every sample as a weighted scalar loss, folding in `rho_j / N_j`.
    pub fn samples(&self) -> Vec<ScalarLoss> {
        let mut out = Vec::with_capacity(self.len);
        for b in &self.blocks {
            let scale = b.rho / b.range.len() as f64;
            for k in 0..b.range.len() {
                let s = b.loss.sample(k);
                out.push(ScalarLoss::weighted(s.kind, scale * s.weight));
            }
        }
        out
    }

    pub fn value(&self, y: &[f64], t: &[f64]) -> Result<f64> {
        if y.len() != self.len || t.len() != self.len {
            return invalid(format!(
                "multi-loss over {} samples got {} outputs and {} predictions",
                self.len,
                y.len(),
                t.len()
            ));
        }
        let mut total = 0.0;
        for b in &self.blocks {
            let mut sum = 0.0;
            for (k, i) in b.range.clone().enumerate() {
                sum += b.loss.sample(k).value(y[i], t[i]);
            }
            total += b.rho * sum / b.range.len() as f64;
        }
        Ok(total)
    }

    /// `C^theta = sum_j rho_j max_k C_k^theta`.
    pub fn local_lipschitz(&self, theta: f64, y: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let y_bound = y[b.range.clone()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
                b.rho * b.loss.local_lipschitz(theta, y_bound)
            })
            .sum()
    }
}

pub fn multiloss_value(ml: &MultiLoss, y: &[f64], t: &[f64]) -> Result<f64> {
    ml.value(y, t)
}
