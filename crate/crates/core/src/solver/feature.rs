//! `min_w L(y, Phi w) + lambda ||w||_p^p` over eigenfeature weights.

use nalgebra::{DMatrix, DVector};

use super::engine::{Penalty, Problem};
use super::{objective, sample_losses, spectral_norm, Regularizer, SolverConfig};
use crate::error::{invalid, Result};
use crate::kernel::FeatureMap;
use crate::loss::{LossKind, ScalarLoss};
use crate::risk::GeneralizedDataset;
use crate::solution::Solution;

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Feature-space surrogate of a p-norm problem. `p = 1` with square losses
/// runs iterative soft-thresholding; every other case runs the descent
/// engine (for `p = 1` the l1 term enters as absolute-loss rows).
pub fn solve_feature_pnorm(
    ds: &GeneralizedDataset,
    cfg: &SolverConfig,
    features: &FeatureMap,
    p: f64,
) -> Result<Solution> {
    cfg.validate()?;
    ds.validate()?;
    if !(1.0..=2.0).contains(&p) {
        return invalid(format!("feature norm exponent must lie in [1, 2], got {p}"));
    }
    if features.kernel != ds.kernel {
        return invalid("feature map and dataset use different kernels");
    }
    let rows = ds.functionals().iter().map(|xi| features.features_of(xi)).collect::<Result<Vec<_>>>()?;
    let (n, m) = (rows.len(), features.len());
    let phi = DMatrix::from_fn(n, m, |i, k| rows[i][k]);
    let losses = sample_losses(ds)?;
    let y = ds.outputs();

    let (w, iterations, converged) = if p == 1.0 && ds.all_square() {
        ista(&phi, &losses, &y, cfg)
    } else if p == 1.0 {
        let mut a = phi.clone().resize_vertically(n + m, 0.0);
        a.view_mut((n, 0), (m, m)).fill_with_identity();
        let mut l = losses.clone();
        l.extend((0..m).map(|_| ScalarLoss::weighted(LossKind::Absolute, cfg.lambda)));
        let mut yy = y.clone();
        yy.extend(std::iter::repeat_n(0.0, m));
        let prob = Problem::new(a.clone(), a.transpose(), DMatrix::identity(m, m), l, yy, Vec::new());
        let res = prob.minimize(DVector::zeros(m), cfg.max_iter);
        (res.v, res.iterations, res.converged)
    } else {
        let penalty = Penalty::PNorm { lambda: cfg.lambda, p };
        let prob = Problem::new(phi.clone(), phi.transpose(), DMatrix::identity(m, m), losses, y, vec![penalty]);
        let res = prob.minimize(DVector::zeros(m), cfg.max_iter);
        (res.v, res.iterations, res.converged)
    };
    let f = Solution::feature(features.clone(), w.iter().copied().collect(), p)?;
    let obj = objective(ds, &f, cfg.lambda, Regularizer::Linear)?;
    Ok(f.with_run(obj, iterations, converged))
}

fn ista(phi: &DMatrix<f64>, losses: &[ScalarLoss], y: &[f64], cfg: &SolverConfig) -> (DVector<f64>, usize, bool) {
    let m = phi.ncols();
    let w = DVector::from_iterator(losses.len(), losses.iter().map(|l| l.weight));
    let y = DVector::from_column_slice(y);
    let ptp = phi.transpose() * phi;
    let lip = 2.0 * w.max() * spectral_norm(&ptp);
    let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let value = |c: &DVector<f64>| {
        let r = phi * c - &y;
        r.component_mul(&r).dot(&w) + cfg.lambda * c.lp_norm(1)
    };
    let mut c = DVector::zeros(m);
    let mut f = value(&c);
    for k in 1..=cfg.max_iter {
        let grad = phi.transpose() * (phi * &c - &y).component_mul(&w) * 2.0;
        let next = (&c - grad * step).map(|v| soft(v, step * cfg.lambda));
        let fnext = value(&next);
        let moved = (&next - &c).amax();
        c = next;
        if (f - fnext).abs() <= cfg.tol * 1e-4 * (1.0 + fnext.abs()) || moved == 0.0 {
            return (c, k, true);
        }
        f = fnext;
    }
    (c, cfg.max_iter, false)
}
