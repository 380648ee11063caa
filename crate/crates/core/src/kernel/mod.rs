//! Reproducing kernels, their Laplacian-applied forms, and Gram assembly.

pub mod bessel;
mod nystrom;

pub use nystrom::{default_nodes, nystrom_features, tensor_grid, FeatureMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functional::{pair, Functional};
use bessel::power_bessel_k;

/// A point of the input domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        Point(coords.into())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

impl From<f64> for Point {
    fn from(v: f64) -> Self {
        Point(vec![v])
    }
}

impl<const N: usize> From<[f64; N]> for Point {
    fn from(v: [f64; N]) -> Self {
        Point(v.to_vec())
    }
}

/// Differential operator applied to one kernel argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffOp {
    Identity,
    Laplacian,
}

/// Kernel family with its parameters.
///
/// `Linear` is the dot-product kernel; its RKHS is Euclidean space, which
/// realizes finite-dimensional problems in the same coefficient machinery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `exp(-theta^2 |x - z|^2)`
    Gaussian { theta: f64 },
    /// `prod_i min(x_i, z_i)`
    Min,
    /// `(theta r)^(j-1) K_{j-1}(theta r)`, the Sobolev/Matérn kernel of order `j`.
    Sobolev { theta: f64, j: u32 },
    /// `x . z`
    Linear,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { theta } if !(theta > 0.0 && theta.is_finite()) => {
                invalid(format!("gaussian theta must be positive, got {theta}"))
            }
            KernelSpec::Sobolev { theta, .. } if !(theta > 0.0 && theta.is_finite()) => {
                invalid(format!("sobolev theta must be positive, got {theta}"))
            }
            KernelSpec::Sobolev { j, .. } if j < 4 => invalid(format!("sobolev order j must be at least 4, got {j}")),
            _ => Ok(()),
        }
    }

    pub fn supports(&self, op: DiffOp) -> bool {
        match op {
            DiffOp::Identity => true,
            DiffOp::Laplacian => matches!(self, KernelSpec::Gaussian { .. } | KernelSpec::Sobolev { .. }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::Min => "min",
            KernelSpec::Sobolev { .. } => "sobolev",
            KernelSpec::Linear => "linear",
        }
    }
}

fn check_pair(x: &Point, z: &Point) -> Result<()> {
    if !x.is_finite() || !z.is_finite() {
        return invalid("kernel arguments must have finite coordinates");
    }
    if x.dim() != z.dim() || x.dim() == 0 {
        return invalid(format!("kernel arguments have mismatched dimensions {} and {}", x.dim(), z.dim()));
    }
    Ok(())
}

/// `K(x, z)`.
pub fn eval_kernel(spec: &KernelSpec, x: &Point, z: &Point) -> Result<f64> {
    eval_op_kernel(spec, DiffOp::Identity, x, DiffOp::Identity, z)
}

/// `(opl)_x (opr)_z K(x, z)`.
pub fn eval_op_kernel(spec: &KernelSpec, opl: DiffOp, x: &Point, opr: DiffOp, z: &Point) -> Result<f64> {
    check_pair(x, z)?;
    if !spec.supports(opl) || !spec.supports(opr) {
        return Err(Error::Capability(format!(
            "{} kernel is not twice differentiable; Laplacian data are unsupported",
            spec.name()
        )));
    }
    let laplacians = usize::from(opl == DiffOp::Laplacian) + usize::from(opr == DiffOp::Laplacian);
    let d = x.dim() as f64;
    match *spec {
        KernelSpec::Min => Ok(x.0.iter().zip(&z.0).map(|(a, b)| a.min(*b)).product()),
        KernelSpec::Linear => Ok(x.0.iter().zip(&z.0).map(|(a, b)| a * b).sum()),
        KernelSpec::Gaussian { theta } => {
            let r2 = x.dist2(z);
            let t2 = theta * theta;
            let k = (-t2 * r2).exp();
            Ok(match laplacians {
                0 => k,
                1 => (4.0 * t2 * t2 * r2 - 2.0 * d * t2) * k,
                _ => {
                    let t4 = t2 * t2;
                    k * (16.0 * t4 * t4 * r2 * r2 - (16.0 * d + 32.0) * t4 * t2 * r2 + (4.0 * d * d + 8.0 * d) * t4)
                }
            })
        }
        KernelSpec::Sobolev { theta, j } => {
            let s = theta * x.dist2(z).sqrt();
            sobolev_radial(j - 1, theta, d, s, laplacians)
        }
    }
}

/// `s^a psi_mu(s)` with `psi_mu(s) = s^mu K_|mu|(s)`.
fn radial_term(a: u32, mu: i32, s: f64) -> Result<f64> {
    let exponent = a as i32 + mu;
    debug_assert!(exponent >= 0);
    power_bessel_k(exponent as u32, mu.unsigned_abs(), s)
}

/// Sobolev kernel and its Laplacian forms as functions of `s = theta r`,
/// built on `d/ds psi_mu(s) = -s psi_{mu-1}(s)`:
/// `Delta psi_nu = theta^2 [s^2 psi_{nu-2} - d psi_{nu-1}]` and
/// `Delta^2 psi_nu = theta^4 [s^4 psi_{nu-4} - (2d+4) s^2 psi_{nu-3} + (d^2+2d) psi_{nu-2}]`.
fn sobolev_radial(nu: u32, theta: f64, d: f64, s: f64, laplacians: usize) -> Result<f64> {
    let nu = nu as i32;
    let t2 = theta * theta;
    match laplacians {
        0 => radial_term(0, nu, s),
        1 => Ok(t2 * (radial_term(2, nu - 2, s)? - d * radial_term(0, nu - 1, s)?)),
        _ => Ok(t2
            * t2
            * (radial_term(4, nu - 4, s)? - (2.0 * d + 4.0) * radial_term(2, nu - 3, s)?
                + (d * d + 2.0 * d) * radial_term(0, nu - 2, s)?)),
    }
}

/// Gram matrix `G[i][j] = <xi_i, xi_j>` of the Riesz representers.
///
/// Entries are computed independently, so the result does not depend on
/// evaluation order.
pub fn gram(spec: &KernelSpec, functionals: &[Functional]) -> Result<DMatrix<f64>> {
    let n = functionals.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = pair(spec, &functionals[i], &functionals[j])?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Rectangular cross-Gram `C[i][j] = <rows_i, cols_j>`.
pub fn cross_gram(spec: &KernelSpec, rows: &[Functional], cols: &[Functional]) -> Result<DMatrix<f64>> {
    let mut c = DMatrix::zeros(rows.len(), cols.len());
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in cols.iter().enumerate() {
            c[(i, j)] = pair(spec, a, b)?;
        }
    }
    Ok(c)
}
