//! Douglas-Rachford splitting of `F_A + F_B` with
//! `F_k = R_k + lambda/2 * phi(||f||)` on the shared representer basis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::engine::{Penalty, Problem};
use super::{objective, representer_solution, sample_losses, Regularizer, SolverConfig};
use crate::error::{invalid, Error, Result};
use crate::kernel::gram;
use crate::loss::ScalarLoss;
use crate::risk::GeneralizedDataset;
use crate::solution::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrParams {
    /// Prox step `theta > 0`.
    pub theta: f64,
    /// Relaxation `sigma` in `(0, 2)`.
    pub sigma: f64,
}

impl Default for DrParams {
    fn default() -> Self {
        DrParams { theta: 1.0, sigma: 1.0 }
    }
}

/// `argmin_c R_k(S G c) + lambda/2 phi(||c||_G) + 1/(2 theta) ||c - g||_G^2`.
enum Prox {
    /// Square losses with quadratic `phi`: the stationarity condition
    /// `(2 S^T W S G + (lambda + 1/theta) I) c = 2 S^T W y + g / theta`.
    Linear {
        lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
        rhs0: DVector<f64>,
        inv_theta: f64,
    },
    Iterative {
        problem: Problem,
        max_iter: usize,
    },
    /// No data in this component.
    Regularizer {
        phi: Regularizer,
        lambda: f64,
        theta: f64,
        g: DMatrix<f64>,
    },
}

impl Prox {
    fn build(
        g: &DMatrix<f64>,
        rows: &[usize],
        losses: Vec<ScalarLoss>,
        y: Vec<f64>,
        cfg: &SolverConfig,
        theta: f64,
    ) -> Result<Prox> {
        let n = g.nrows();
        let half = 0.5 * cfg.lambda;
        if rows.is_empty() {
            return Ok(Prox::Regularizer { phi: cfg.regularizer, lambda: half, theta, g: g.clone() });
        }
        let s = DMatrix::from_fn(rows.len(), n, |i, j| if rows[i] == j { 1.0 } else { 0.0 });
        let square = losses.iter().all(|l| l.kind == crate::loss::LossKind::Square);
        if square && cfg.regularizer == Regularizer::Quadratic {
            let w = DMatrix::from_diagonal(&DVector::from_iterator(losses.len(), losses.iter().map(|l| l.weight)));
            let stw = s.transpose() * w;
            let system = &stw * &s * g * 2.0 + DMatrix::identity(n, n) * (cfg.lambda + 1.0 / theta);
            let rhs0 = &stw * DVector::from_vec(y) * 2.0;
            return Ok(Prox::Linear { lu: system.lu(), rhs0, inv_theta: 1.0 / theta });
        }
        let a = &s * g;
        let problem = Problem::new(
            a,
            s.transpose(),
            g.clone(),
            losses,
            y,
            vec![
                Penalty::Norm { lambda: half, phi: cfg.regularizer },
                Penalty::Anchor { anchor: DVector::zeros(n), weight: 1.0 / theta },
            ],
        );
        Ok(Prox::Iterative { problem, max_iter: (cfg.max_iter / 10).max(1) })
    }

    fn apply(&mut self, anchor: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Prox::Linear { lu, rhs0, inv_theta } => lu
                .solve(&(&*rhs0 + anchor * *inv_theta))
                .filter(|c| c.iter().all(|v| v.is_finite()))
                .ok_or_else(|| Error::Numerical("splitting prox system is singular".into())),
            Prox::Iterative { problem, max_iter } => {
                if let Some(Penalty::Anchor { anchor: a, .. }) = problem.penalties.last_mut() {
                    a.copy_from(anchor);
                }
                let res = problem.minimize(anchor.clone(), *max_iter);
                if !res.converged {
                    return Err(Error::Convergence(format!(
                        "inner prox did not converge in {max_iter} iterations; partial value {}",
                        res.objective
                    )));
                }
                Ok(res.v)
            }
            Prox::Regularizer { phi, lambda, theta, g } => {
                // radial prox in the G norm
                let r = anchor.dot(&(&*g * anchor)).max(0.0).sqrt();
                if r == 0.0 {
                    return Ok(anchor.clone());
                }
                Ok(anchor * (phi.prox_radial(r, *theta * *lambda) / r))
            }
        }
    }
}

/// Douglas-Rachford iteration
/// `h^b = prox(g)`, `h^w = prox'(2 h^b - g)`, `g <- g + sigma (h^w - h^b)`
/// on `(R_A + lambda/2 phi) + (R_B + lambda/2 phi)`, returning `h^b` once
/// `||h^w - h^b||_G < tol`. Without `ds_b` the second component is the
/// regularizer alone.
pub fn solve_douglas_rachford(
    ds_a: &GeneralizedDataset,
    ds_b: Option<&GeneralizedDataset>,
    cfg: &SolverConfig,
    params: DrParams,
) -> Result<Solution> {
    cfg.validate()?;
    if !(params.theta > 0.0 && params.theta.is_finite()) {
        return invalid(format!("theta must be positive, got {}", params.theta));
    }
    if !(params.sigma > 0.0 && params.sigma < 2.0) {
        return invalid(format!("sigma must lie in (0, 2), got {}", params.sigma));
    }
    ds_a.validate()?;
    let mut merged = ds_a.clone();
    if let Some(b) = ds_b {
        b.validate()?;
        if b.kernel != ds_a.kernel {
            return invalid("split datasets must share a kernel");
        }
        merged.blocks.extend(b.blocks.iter().cloned());
    }
    let basis = merged.functionals();
    let g = gram(&merged.kernel, &basis)?;
    let n = basis.len();
    let na = ds_a.len();

    let inner = SolverConfig { tol: cfg.tol / 10.0, ..cfg.clone() };
    let la = sample_losses(ds_a)?;
    let mut prox_b = Prox::build(&g, &(0..na).collect::<Vec<_>>(), la, ds_a.outputs(), &inner, params.theta)?;
    let (lb, yb) = match ds_b {
        Some(b) => (sample_losses(b)?, b.outputs()),
        None => (Vec::new(), Vec::new()),
    };
    let mut prox_w = Prox::build(&g, &(na..n).collect::<Vec<_>>(), lb, yb, &inner, params.theta)?;

    let gnorm = |c: &DVector<f64>| c.dot(&(&g * c)).max(0.0).sqrt();
    let mut gk = DVector::zeros(n);
    let mut hb = DVector::zeros(n);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        hb = prox_b.apply(&gk)?;
        let hw = prox_w.apply(&(&hb * 2.0 - &gk))?;
        let gap = gnorm(&(&hw - &hb));
        gk += (&hw - &hb) * params.sigma;
        if gap < cfg.tol {
            converged = true;
            break;
        }
        if gnorm(&gk) > 1e8 || !gap.is_finite() {
            return Err(Error::Convergence(format!("splitting iterates diverged after {iterations} iterations")));
        }
    }
    let f = representer_solution(&merged, basis, &g, hb)?;
    let obj = objective(&merged, &f, cfg.lambda, cfg.regularizer)?;
    Ok(f.with_run(obj, iterations, converged))
}
