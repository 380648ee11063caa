//! Minimizers of `R_n(f) + lambda * phi(||f||)` in three representations:
//! representer coefficients, feature weights, and network parameters.

mod engine;
mod feature;
mod model_class;
mod splitting;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functional::{Functional, FunctionalEval};
use crate::kernel::{gram, KernelSpec};
use crate::loss::ScalarLoss;
use crate::risk::{empirical_risk, GeneralizedDataset};
use crate::solution::{Representation, Solution};

use engine::{Penalty, Problem};
pub use feature::solve_feature_pnorm;
pub use model_class::{solve_model_class, ModelClass};
pub use splitting::{solve_douglas_rachford, DrParams};

/// `phi` in `lambda * phi(||f||)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Regularizer {
    /// `phi(r) = r`
    Linear,
    /// `phi(r) = r^2`
    #[default]
    Quadratic,
    /// `phi(r) = r^p`, `p > 1`
    Power { p: f64 },
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Regularizer::Power { p } if !(p > 1.0 && p.is_finite()) => {
                invalid(format!("power regularizer needs p > 1, got {p}"))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match *self {
            Regularizer::Linear => r,
            Regularizer::Quadratic => r * r,
            Regularizer::Power { p } => r.powf(p),
        }
    }

    /// `phi'(r)`; the right derivative at zero.
    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            Regularizer::Linear => 1.0,
            Regularizer::Quadratic => 2.0 * r,
            Regularizer::Power { p } => p * r.powf(p - 1.0),
        }
    }

    /// `argmin_{s >= 0} t phi(s) + (s - r)^2 / 2` for `r >= 0`.
    pub fn prox_radial(&self, r: f64, t: f64) -> f64 {
        match *self {
            Regularizer::Linear => (r - t).max(0.0),
            Regularizer::Quadratic => r / (1.0 + 2.0 * t),
            Regularizer::Power { p } => {
                // s + t p s^(p-1) = r has a unique root in [0, r]
                let (mut lo, mut hi) = (0.0, r);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid + t * p * mid.powf(p - 1.0) > r {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= 1e-17 * r {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Tikhonov,
    Subgradient,
    ProxGrad,
    DouglasRachford,
    FeaturePnorm,
    ModelClass,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    50_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    #[serde(default)]
    pub regularizer: Regularizer,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Initial subgradient step; defaults to `1 / (1 + ||G||_2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Exponent of the feature-space norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Number of eigenfeatures for the feature solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<usize>,
    #[serde(default)]
    pub dr: DrParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelClass>,
}

impl SolverConfig {
    pub fn new(lambda: f64, method: Method) -> Self {
        SolverConfig {
            lambda,
            regularizer: Regularizer::default(),
            method,
            tol: default_tol(),
            max_iter: default_max_iter(),
            eta0: None,
            seed: 0,
            p: None,
            features: None,
            dr: DrParams::default(),
            model: None,
        }
    }

    pub fn with_regularizer(mut self, phi: Regularizer) -> Self {
        self.regularizer = phi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return invalid(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.tol > 0.0) {
            return invalid(format!("tol must be positive, got {}", self.tol));
        }
        self.regularizer.validate()
    }
}

/// `R_n(f) + lambda * phi(||f||)`; feature solutions use `lambda ||w||_p^p`.
pub fn objective(ds: &GeneralizedDataset, f: &Solution, lambda: f64, phi: Regularizer) -> Result<f64> {
    let risk = empirical_risk(ds, f)?;
    let reg = match &f.representation {
        Representation::Feature { weights, p, .. } => weights.iter().map(|w| w.abs().powf(*p)).sum(),
        _ => phi.value(f.norm),
    };
    Ok(risk + lambda * reg)
}

/// Per-sample scalar losses with block and sample weights folded in.
pub(crate) fn sample_losses(ds: &GeneralizedDataset) -> Result<Vec<ScalarLoss>> {
    Ok(ds.multiloss()?.samples())
}

/// Largest eigenvalue of a symmetric PSD matrix by 30 power iterations.
pub(crate) fn spectral_norm(g: &DMatrix<f64>) -> f64 {
    let n = g.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * i as f64);
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..30 {
        let w = g * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        est = v.dot(&w);
        v = w / nw;
    }
    est.max((g * &v).norm())
}

fn representer_solution(
    ds: &GeneralizedDataset,
    basis: Vec<Functional>,
    g: &DMatrix<f64>,
    c: DVector<f64>,
) -> Result<Solution> {
    Solution::representer_with_gram(ds.kernel, basis, c.iter().copied().collect(), g)
}

/// Closed-form minimizer for square losses and `phi(r) = r^2`:
/// `(W G + lambda I) c = W y`.
pub fn solve_tikhonov(ds: &GeneralizedDataset, lambda: f64) -> Result<Solution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    if !ds.all_square() {
        return Err(Error::InvalidMethod("closed-form Tikhonov requires square losses in every block".into()));
    }
    ds.validate()?;
    let basis = ds.functionals();
    let g = gram(&ds.kernel, &basis)?;
    let w: Vec<f64> = sample_losses(ds)?.iter().map(|l| l.weight).collect();
    let y = ds.outputs();
    let n = basis.len();
    let c = tikhonov_system(&g, &w, &y, lambda)?;
    let f = representer_solution(ds, basis, &g, c)?;
    let obj = objective(ds, &f, lambda, Regularizer::Quadratic)?;
    debug_assert_eq!(f.coefficients().len(), n);
    Ok(f.with_run(obj, 1, true))
}

pub(crate) fn tikhonov_system(g: &DMatrix<f64>, w: &[f64], y: &[f64], lambda: f64) -> Result<DVector<f64>> {
    let n = g.nrows();
    let wm = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    let rhs = DVector::from_iterator(n, w.iter().zip(y).map(|(a, b)| a * b));
    let system = &wm * g + DMatrix::identity(n, n) * lambda;
    if let Some(c) = system.clone().lu().solve(&rhs) {
        if c.iter().all(|v| v.is_finite()) {
            return Ok(c);
        }
    }
    let jitter = 1e-10 * g.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
    let jittered = &wm * (g + DMatrix::identity(n, n) * jitter) + DMatrix::identity(n, n) * lambda;
    jittered
        .lu()
        .solve(&rhs)
        .filter(|c| c.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Numerical("regularized normal equations are singular".into()))
}

fn representer_problem(
    ds: &GeneralizedDataset,
    cfg: &SolverConfig,
) -> Result<(Vec<Functional>, DMatrix<f64>, Problem)> {
    let basis = ds.functionals();
    let g = gram(&ds.kernel, &basis)?;
    let n = basis.len();
    let prob = Problem::new(
        g.clone(),
        DMatrix::identity(n, n),
        g.clone(),
        sample_losses(ds)?,
        ds.outputs(),
        vec![Penalty::Norm { lambda: cfg.lambda, phi: cfg.regularizer }],
    );
    Ok((basis, g, prob))
}

/// Iterations of the plain diminishing-step phase before refinement.
const SUBGRADIENT_PHASE: usize = 500;

/// Subgradient descent `c <- c - eta0 / sqrt(k+1) g_k` over representer
/// coefficients, followed by steepest descent along minimum-norm
/// enlarged subgradients from the best iterate.
pub fn solve_subgradient(ds: &GeneralizedDataset, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    ds.validate()?;
    let (basis, g, prob) = representer_problem(ds, cfg)?;
    let eta0 = cfg.eta0.unwrap_or_else(|| 1.0 / (1.0 + spectral_norm(&g)));
    let (best, used) = subgradient_phase(&prob, DVector::zeros(basis.len()), eta0, cfg.max_iter.min(SUBGRADIENT_PHASE));
    let res = prob.minimize(best, cfg.max_iter.saturating_sub(used).max(1));
    let f = representer_solution(ds, basis, &g, res.v)?;
    let obj = objective(ds, &f, cfg.lambda, cfg.regularizer)?;
    Ok(f.with_run(obj, used + res.iterations, res.converged))
}

pub(crate) fn subgradient_phase(prob: &Problem, mut v: DVector<f64>, eta0: f64, iters: usize) -> (DVector<f64>, usize) {
    let mut best = v.clone();
    let mut best_f = prob.value(&v);
    let mut k = 0;
    while k < iters {
        let g = prob.euclidean_subgradient(&v);
        if g.iter().all(|x| *x == 0.0) {
            break;
        }
        v -= g * (eta0 / ((k + 1) as f64).sqrt());
        k += 1;
        let f = prob.value(&v);
        if !f.is_finite() {
            break;
        }
        if f < best_f {
            best_f = f;
            best = v.clone();
        }
    }
    (best, k)
}

/// Proximal gradient on the square-loss risk with the `G`-norm prox of
/// `lambda * phi(||c||_G)`, using step `0.9 / L`.
pub fn solve_prox_grad(ds: &GeneralizedDataset, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    ds.validate()?;
    if !ds.all_square() {
        return Err(Error::InvalidMethod("proximal gradient needs square losses as the smooth part".into()));
    }
    let basis = ds.functionals();
    let g = gram(&ds.kernel, &basis)?;
    let n = basis.len();
    let w = DVector::from_iterator(n, sample_losses(ds)?.iter().map(|l| l.weight));
    let y = DVector::from_vec(ds.outputs());
    let lip = 2.0 * w.max() * spectral_norm(&g);
    let mut step = if lip > 0.0 { 0.9 / lip } else { 1.0 };
    let phi = cfg.regularizer;
    let gnorm = |c: &DVector<f64>| c.dot(&(&g * c)).max(0.0).sqrt();
    let value = |c: &DVector<f64>| {
        let r = &g * c - &y;
        r.component_mul(&r).dot(&w) + cfg.lambda * phi.value(gnorm(c))
    };
    let mut c = DVector::zeros(n);
    let mut f = value(&c);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let grad = (&g * &c - &y).component_mul(&w) * 2.0;
        let (next, fnext) = loop {
            let u = &c - &grad * step;
            let r = gnorm(&u);
            let s = phi.prox_radial(r, step * cfg.lambda);
            let cand = if r > 0.0 { u * (s / r) } else { u };
            let fc = value(&cand);
            if fc <= f + 1e-15 * (1.0 + f.abs()) || step < 1e-300 {
                break (cand, fc);
            }
            step *= 0.5;
        };
        let change = (f - fnext).abs();
        let moved = (&next - &c).amax();
        c = next;
        f = fnext.min(f);
        if change <= cfg.tol * 1e-4 * (1.0 + f.abs()) || moved == 0.0 {
            converged = true;
            break;
        }
    }
    let f_sol = representer_solution(ds, basis, &g, c)?;
    let obj = objective(ds, &f_sol, cfg.lambda, phi)?;
    Ok(f_sol.with_run(obj, iterations, converged))
}

/// Solves with the method named in `cfg`. Douglas-Rachford splits off the
/// first block as one component and the remaining blocks as the other.
pub fn solve(ds: &GeneralizedDataset, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    match cfg.method {
        Method::Tikhonov => {
            if cfg.regularizer != Regularizer::Quadratic {
                return Err(Error::InvalidMethod("closed-form Tikhonov requires the quadratic regularizer".into()));
            }
            solve_tikhonov(ds, cfg.lambda)
        }
        Method::Subgradient => solve_subgradient(ds, cfg),
        Method::ProxGrad => solve_prox_grad(ds, cfg),
        Method::DouglasRachford => {
            let first = GeneralizedDataset { blocks: ds.blocks[..1].to_vec(), ..ds.clone() };
            let rest =
                (ds.blocks.len() > 1).then(|| GeneralizedDataset { blocks: ds.blocks[1..].to_vec(), ..ds.clone() });
            solve_douglas_rachford(&first, rest.as_ref(), cfg, cfg.dr)
        }
        Method::FeaturePnorm => {
            let nodes = crate::kernel::default_nodes(ds.dim());
            let m = cfg.features.unwrap_or(16).min(nodes.len());
            let map = crate::kernel::nystrom_features(&ds.kernel, &nodes, m)?;
            solve_feature_pnorm(ds, cfg, &map, cfg.p.unwrap_or(1.0))
        }
        Method::ModelClass => {
            let mc = cfg.model.clone().unwrap_or_else(|| ModelClass::single_layer(ds.dim(), 16));
            solve_model_class(ds, cfg, &mc, None)
        }
    }
}

/// Outcome of checking the representer characterization of a solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepresenterReport {
    /// Normalized coefficients `c / ||f||` over the dataset functionals.
    pub c_hat: Vec<f64>,
    /// `|| ||f|| sum_k c_hat_k rep(xi_k) - f ||`
    pub residual: f64,
    /// `| ||c_hat . xi||_* - 1 |`; in a Hilbert space `c_hat . xi` is then
    /// the unique norming functional of `f`.
    pub condition_i_gap: f64,
    /// `|c_hat . <f, xi> - ||f|||`
    pub condition_ii_gap: f64,
    pub passed: bool,
}

/// Checks that `f = ||f|| c_hat . xi` with `c_hat . <f, xi> = ||f||` and
/// `||c_hat . xi||_* = 1` over the dataset functionals.
pub fn verify_representer(ds: &GeneralizedDataset, f: &Solution, tol: f64) -> Result<RepresenterReport> {
    let Representation::Representer { kernel, basis, coefficients } = &f.representation else {
        return invalid("representer verification needs a kernel-expansion solution");
    };
    if *kernel != ds.kernel {
        return invalid("solution and dataset use different kernels");
    }
    let data = ds.functionals();
    let g = gram(kernel, &data)?;
    let norm = f.norm;
    if norm == 0.0 {
        return Ok(RepresenterReport {
            c_hat: vec![0.0; data.len()],
            residual: 0.0,
            condition_i_gap: 0.0,
            condition_ii_gap: 0.0,
            passed: true,
        });
    }
    let t = DVector::from_vec(ds.predictions(f)?);
    let (c, residual) = if *basis == data {
        let c = DVector::from_column_slice(coefficients);
        let c_hat = &c / norm;
        let diff = &c_hat * norm - &c;
        (c, diff.dot(&(&g * &diff)).max(0.0).sqrt())
    } else {
        // least-squares projection of f onto the span of the data representers
        let svd = g.clone().svd(true, true);
        let c = svd.solve(&t, 1e-12 * g.amax().max(f64::MIN_POSITIVE)).map_err(|e| Error::Numerical(e.to_string()))?;
        let mut all = basis.clone();
        all.extend(data.iter().cloned());
        let big = gram(kernel, &all)?;
        let z = DVector::from_iterator(all.len(), coefficients.iter().copied().chain(c.iter().map(|v| -v)));
        let r2 = z.dot(&(&big * &z));
        (c, r2.max(0.0).sqrt())
    };
    let c_hat = &c / norm;
    let condition_ii_gap = (c_hat.dot(&t) - norm).abs();
    let dual = c_hat.dot(&(&g * &c_hat)).max(0.0).sqrt();
    let condition_i_gap = (dual - 1.0).abs();
    let passed = residual <= tol && condition_ii_gap <= tol * (1.0 + norm) && condition_i_gap <= tol;
    Ok(RepresenterReport {
        c_hat: c_hat.iter().copied().collect(),
        residual,
        condition_i_gap,
        condition_ii_gap,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSchedule {
    pub lambdas: Vec<f64>,
    /// The reference risks do not decay, so the schedule cannot vanish.
    pub non_vanishing: bool,
}

/// `lambda_n = max(n^(-1/2), sqrt(R_n(f0)))`, made nonincreasing by a
/// running minimum, so that `R_n(f0) / lambda_n <= sqrt(R_n(f0))`.
pub fn adaptive_lambda(ns: &[usize], reference_risks: &[f64]) -> Result<LambdaSchedule> {
    if ns.is_empty() || ns.len() != reference_risks.len() {
        return invalid("adaptive lambda needs one reference risk per stage");
    }
    if let Some(r) = reference_risks.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return invalid(format!("reference risks must be finite and nonnegative, got {r}"));
    }
    let mut lambdas = Vec::with_capacity(ns.len());
    let mut running = f64::INFINITY;
    for (&n, &r) in ns.iter().zip(reference_risks) {
        let raw = (1.0 / (n.max(1) as f64).sqrt()).max(r.sqrt());
        running = running.min(raw);
        lambdas.push(running);
    }
    let last = *reference_risks.last().unwrap();
    let pts: Vec<(f64, f64)> = ns.iter().zip(reference_risks).map(|(&n, &r)| (n as f64, r)).collect();
    let decays = crate::risk::loglog_slope(&pts).is_some_and(|s| s < -0.1);
    Ok(LambdaSchedule { lambdas, non_vanishing: last > 0.0 && !decays })
}

/// Kernel used by a representer solution, when there is one.
pub fn solution_kernel(f: &Solution) -> Option<KernelSpec> {
    f.kernel().copied()
}

/// Evaluates `<f, xi>` for every functional.
pub fn predictions(f: &Solution, fs: &[Functional]) -> Result<Vec<f64>> {
    fs.iter().map(|xi| f.apply(xi)).collect()
}
