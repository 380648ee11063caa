//! Learned functions in their three concrete representations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functional::{pair, Functional, FunctionalEval};
use crate::kernel::{gram, tensor_grid, DiffOp, FeatureMap, KernelSpec, Point};
use crate::network::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Representation {
    /// `f = sum_j c_j rep(xi_j)` in the RKHS of `kernel`.
    Representer { kernel: KernelSpec, basis: Vec<Functional>, coefficients: Vec<f64> },
    /// `f = sum_k w_k psi_k` with norm `||w||_p`.
    Feature { features: FeatureMap, weights: Vec<f64>, p: f64 },
    /// Network with the sup norm over a tensor grid of `[lo, hi]^d`.
    Network { network: Network, grid_per_axis: usize, domain: (f64, f64) },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub representation: Representation,
    pub norm: f64,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Solution {
    pub fn representer(kernel: KernelSpec, basis: Vec<Functional>, coefficients: Vec<f64>) -> Result<Self> {
        let g = gram(&kernel, &basis)?;
        Solution::representer_with_gram(kernel, basis, coefficients, &g)
    }

    /// As [`Solution::representer`] with the basis Gram matrix supplied.
    pub fn representer_with_gram(
        kernel: KernelSpec,
        basis: Vec<Functional>,
        coefficients: Vec<f64>,
        g: &DMatrix<f64>,
    ) -> Result<Self> {
        if basis.len() != coefficients.len() || g.nrows() != basis.len() {
            return invalid(format!("{} basis functionals but {} coefficients", basis.len(), coefficients.len()));
        }
        let norm = g_norm(g, &coefficients);
        Ok(Solution {
            representation: Representation::Representer { kernel, basis, coefficients },
            norm,
            objective: None,
            iterations: 0,
            converged: true,
        })
    }

    pub fn feature(features: FeatureMap, weights: Vec<f64>, p: f64) -> Result<Self> {
        if weights.len() != features.len() {
            return invalid(format!("{} features but {} weights", features.len(), weights.len()));
        }
        if !(1.0..=2.0).contains(&p) {
            return invalid(format!("feature norm exponent must lie in [1, 2], got {p}"));
        }
        let norm = p_norm(&weights, p);
        Ok(Solution {
            representation: Representation::Feature { features, weights, p },
            norm,
            objective: None,
            iterations: 0,
            converged: true,
        })
    }

    pub fn network(network: Network, grid_per_axis: usize, domain: (f64, f64)) -> Self {
        let norm = network_sup(&network, grid_per_axis, domain);
        Solution {
            representation: Representation::Network { network, grid_per_axis, domain },
            norm,
            objective: None,
            iterations: 0,
            converged: true,
        }
    }

    pub fn with_run(mut self, objective: f64, iterations: usize, converged: bool) -> Self {
        self.objective = Some(objective);
        self.iterations = iterations;
        self.converged = converged;
        self
    }

    pub fn kernel(&self) -> Option<&KernelSpec> {
        match &self.representation {
            Representation::Representer { kernel, .. } => Some(kernel),
            Representation::Feature { features, .. } => Some(&features.kernel),
            Representation::Network { .. } => None,
        }
    }

    /// Coefficients or weights of the representation.
    pub fn coefficients(&self) -> &[f64] {
        match &self.representation {
            Representation::Representer { coefficients, .. } => coefficients,
            Representation::Feature { weights, .. } => weights,
            Representation::Network { network, .. } => &network.params,
        }
    }

    pub fn basis(&self) -> Option<&[Functional]> {
        match &self.representation {
            Representation::Representer { basis, .. } => Some(basis),
            _ => None,
        }
    }

    /// `f(x)`
    pub fn eval(&self, x: &Point) -> Result<f64> {
        self.apply(&Functional::Point { x: x.clone() })
    }
}

pub(crate) fn g_norm(g: &DMatrix<f64>, c: &[f64]) -> f64 {
    let c = DVector::from_column_slice(c);
    (c.dot(&(g * &c))).max(0.0).sqrt()
}

pub(crate) fn p_norm(w: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        w.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        w.iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        w.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

pub(crate) fn network_sup(net: &Network, per_axis: usize, domain: (f64, f64)) -> f64 {
    norm_grid(net.input_dim, per_axis, domain).iter().map(|x| net.eval(x).abs()).fold(0.0, f64::max)
}

/// Grid including the domain endpoints, `per_axis^d` points.
pub(crate) fn norm_grid(dim: usize, per_axis: usize, (lo, hi): (f64, f64)) -> Vec<Point> {
    if per_axis <= 1 {
        return tensor_grid(1, dim, lo, hi);
    }
    // midpoint grid on a stretched box puts nodes exactly on the endpoints
    let h = (hi - lo) / (per_axis - 1) as f64;
    tensor_grid(per_axis, dim, lo - 0.5 * h, hi + 0.5 * h)
}

impl FunctionalEval for Solution {
    fn apply(&self, xi: &Functional) -> Result<f64> {
        match &self.representation {
            Representation::Representer { kernel, basis, coefficients } => {
                let mut sum = 0.0;
                for (c, b) in coefficients.iter().zip(basis) {
                    if *c != 0.0 {
                        sum += c * pair(kernel, xi, b)?;
                    }
                }
                Ok(sum)
            }
            Representation::Feature { features, weights, .. } => {
                let psi = features.features_of(xi)?;
                Ok(psi.iter().zip(weights).map(|(a, b)| a * b).sum())
            }
            Representation::Network { network, .. } => match xi {
                Functional::Point { x } => Ok(network.eval(x)),
                Functional::Quadrature { nodes, weights } => {
                    Ok(nodes.iter().zip(weights).map(|(x, w)| w * network.eval(x)).sum())
                }
                Functional::Op { op: DiffOp::Identity, x } => Ok(network.eval(x)),
                Functional::Op { .. } => {
                    Err(Error::Capability("network solutions do not support Laplacian data".into()))
                }
            },
        }
    }

    fn norm(&self) -> Option<f64> {
        Some(self.norm)
    }
}
