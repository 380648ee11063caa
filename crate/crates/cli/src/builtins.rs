//! Built-in problem sequences.

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use genlearn::diagnostics::{LambdaRule, ProblemSequence};
use genlearn::quadrature::gauss_legendre;
use genlearn::{
    eval_kernel, ClosedForm, DataBlock, ExpectedRiskOracle, Functional, GeneralizedDataset, KernelSpec, Loss, LossKind,
    Method, ModelClass, Point, Regularizer, SolverConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::points::{boundary_grid, halton};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    GaussianRegression,
    MinkernelHinge,
    PoissonCollocation,
    SigmoidNetwork,
    Illposed2d,
}

impl Builtin {
    pub const ALL: [Builtin; 5] = [
        Builtin::GaussianRegression,
        Builtin::MinkernelHinge,
        Builtin::PoissonCollocation,
        Builtin::SigmoidNetwork,
        Builtin::Illposed2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::GaussianRegression => "gaussian-regression",
            Builtin::MinkernelHinge => "minkernel-hinge",
            Builtin::PoissonCollocation => "poisson-collocation",
            Builtin::SigmoidNetwork => "sigmoid-network",
            Builtin::Illposed2d => "illposed-2d",
        }
    }
}

impl FromStr for Builtin {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown builtin problem '{s}'")))
    }
}

/// A problem sequence with its default ladder, schedule and solver.
pub struct Setup {
    pub sequence: ProblemSequence,
    pub ladder: Vec<usize>,
    pub lambda_rule: LambdaRule,
    pub solver: SolverConfig,
}

/// Knobs shared by the generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub seed: u64,
    /// Noise bound at stage `n` is `noise / n`.
    pub noise: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options { seed: 0, noise: 1.0 }
    }
}

fn stage_rng(seed: u64, n: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn power(exponent: f64) -> LambdaRule {
    LambdaRule::Power { exponent, scale: 1.0 }
}

pub fn build(b: Builtin, opts: Options) -> Setup {
    match b {
        Builtin::GaussianRegression => gaussian_regression(opts),
        Builtin::MinkernelHinge => minkernel_hinge(opts),
        Builtin::PoissonCollocation => poisson_collocation(),
        Builtin::SigmoidNetwork => sigmoid_network(),
        Builtin::Illposed2d => illposed_2d(),
    }
}

fn setup(mut sequence: ProblemSequence, ladder: Vec<usize>, lambda_rule: LambdaRule, solver: SolverConfig) -> Setup {
    sequence.ladder = ladder.clone();
    Setup { sequence, ladder, lambda_rule, solver }
}

// ---- Gaussian-kernel regression on [0, 1] with absolute loss

pub const GAUSS_THETA: f64 = 3.0;
const GAUSS_CENTERS: [f64; 3] = [0.2, 0.5, 0.8];
const GAUSS_COEFFS: [f64; 3] = [1.0, -0.6, 0.8];

pub fn gaussian_kernel() -> KernelSpec {
    KernelSpec::Gaussian { theta: GAUSS_THETA }
}

fn gaussian_value(x: &Point) -> f64 {
    let k = gaussian_kernel();
    GAUSS_CENTERS
        .iter()
        .zip(GAUSS_COEFFS)
        .map(|(&c, a)| a * eval_kernel(&k, &Point::from(c), x).unwrap_or(f64::NAN))
        .sum()
}

/// The target: a short kernel expansion.
pub fn gaussian_target() -> ClosedForm {
    ClosedForm::new(gaussian_value)
}

pub fn gaussian_oracle() -> ExpectedRiskOracle {
    ExpectedRiskOracle::quadrature_1d(gaussian_target(), |_| 1.0, (0.0, 1.0)).with_rel_tol(1e-10)
}

/// Midpoints of `((k-1)/n, k/n)` with outputs perturbed uniformly within
/// `noise / n`.
pub fn gaussian_dataset(n: usize, opts: Options) -> Result<GeneralizedDataset, genlearn::Error> {
    let mut rng = stage_rng(opts.seed, n);
    let zeta = opts.noise / n as f64;
    let mut fs = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for k in 1..=n {
        let x = Point::from((k as f64 - 0.5) / n as f64);
        let e = if zeta > 0.0 { rng.gen_range(-zeta..=zeta) } else { 0.0 };
        y.push(gaussian_value(&x) + e);
        fs.push(Functional::point(x));
    }
    GeneralizedDataset::new(gaussian_kernel(), vec![DataBlock::new(fs, y, Loss::new(LossKind::Absolute), 1.0)])
}

fn gaussian_regression(opts: Options) -> Setup {
    let mut seq = ProblemSequence::new(Vec::new(), 1, Arc::new(move |n| gaussian_dataset(n, opts)));
    seq.oracle = Some(gaussian_oracle());
    seq.reference = Some(Arc::new(gaussian_target()));
    seq.error_grid = (0..=64).map(|k| Point::from(k as f64 / 64.0)).collect();
    let mut solver = SolverConfig::new(1.0, Method::FeaturePnorm).with_regularizer(Regularizer::Linear);
    solver.p = Some(1.0);
    solver.features = Some(16);
    setup(seq, vec![10, 40, 160, 640], power(0.5), solver)
}

// ---- hinge classification on [0, 1]^2 with the min kernel

/// Uniform samples labelled by the side of `v1 + v2 = 1`.
pub fn hinge_dataset(n: usize, opts: Options) -> Result<GeneralizedDataset, genlearn::Error> {
    let mut rng = stage_rng(opts.seed, n);
    let mut fs = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, b): (f64, f64) = (rng.gen(), rng.gen());
        y.push(if a + b >= 1.0 { 1.0 } else { -1.0 });
        fs.push(Functional::point([a, b]));
    }
    GeneralizedDataset::new(KernelSpec::Min, vec![DataBlock::new(fs, y, Loss::new(LossKind::Hinge), 1.0)])
}

fn minkernel_hinge(opts: Options) -> Setup {
    let seq = ProblemSequence::new(Vec::new(), 2, Arc::new(move |n| hinge_dataset(n, opts)));
    setup(seq, vec![8, 32, 128], power(0.5), SolverConfig::new(1.0, Method::Subgradient))
}

// ---- Poisson collocation on [0, 1]^2

pub fn poisson_kernel() -> KernelSpec {
    KernelSpec::Sobolev { theta: 1.0, j: 4 }
}

fn poisson_value(x: &Point) -> f64 {
    (PI * x.0[0]).sin() * (PI * x.0[1]).sin()
}

fn poisson_source(x: &Point) -> f64 {
    -2.0 * PI * PI * poisson_value(x)
}

/// `sin(pi v1) sin(pi v2)` with its Laplacian.
pub fn poisson_target() -> ClosedForm {
    ClosedForm::new(poisson_value).with_laplacian(poisson_source)
}

pub fn poisson_oracle() -> ExpectedRiskOracle {
    ExpectedRiskOracle::pde_residual(poisson_source, |_| 0.0)
}

/// `n^2` interior Halton collocation points and `n` boundary points.
pub fn poisson_dataset(n: usize) -> Result<GeneralizedDataset, genlearn::Error> {
    let cfg = |e: CliError| genlearn::Error::InvalidInput(e.to_string());
    let interior = halton(n * n, 2).map_err(cfg)?;
    let boundary = boundary_grid(n).map_err(cfg)?;
    let y_int = interior.iter().map(poisson_source).collect();
    let y_bd = vec![0.0; boundary.len()];
    let sq = || Loss::new(LossKind::Square);
    GeneralizedDataset::new(
        poisson_kernel(),
        vec![
            DataBlock::new(interior.into_iter().map(Functional::laplacian).collect(), y_int, sq(), 1.0),
            DataBlock::new(boundary.into_iter().map(Functional::point).collect(), y_bd, sq(), 1.0),
        ],
    )
}

/// Uniform grid of `[0, 1]^2` including the boundary.
pub fn unit_square_grid(per_axis: usize) -> Vec<Point> {
    let h = 1.0 / (per_axis - 1) as f64;
    (0..per_axis).flat_map(|i| (0..per_axis).map(move |j| Point::from([i as f64 * h, j as f64 * h]))).collect()
}

fn poisson_collocation() -> Setup {
    let mut seq = ProblemSequence::new(Vec::new(), 2, Arc::new(poisson_dataset));
    seq.oracle = Some(poisson_oracle());
    seq.reference = Some(Arc::new(poisson_target()));
    seq.error_grid = unit_square_grid(21);
    setup(seq, vec![4, 8, 16], power(0.5), SolverConfig::new(1.0, Method::Tikhonov))
}

// ---- sigmoid networks on [-1, 1] from local averages

fn network_value(x: &Point) -> f64 {
    0.5 * (PI * x.0[0]).sin()
}

pub fn network_target() -> ClosedForm {
    ClosedForm::new(network_value)
}

/// Averages over `n` equal cells of `[-1, 1]`, each by a 3-point Gauss rule.
pub fn network_dataset(n: usize) -> Result<GeneralizedDataset, genlearn::Error> {
    let (nodes, weights) = gauss_legendre(3);
    let h = 2.0 / n as f64;
    let mut fs = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for k in 0..n {
        let mid = -1.0 + (k as f64 + 0.5) * h;
        let pts: Vec<Point> = nodes.iter().map(|t| Point::from(mid + 0.5 * h * t)).collect();
        // cell average: (h/2) sum w f / h
        let ws: Vec<f64> = weights.iter().map(|w| 0.5 * w).collect();
        y.push(pts.iter().zip(&ws).map(|(p, w)| w * network_value(p)).sum());
        fs.push(Functional::quadrature(pts, ws)?);
    }
    GeneralizedDataset::new(
        KernelSpec::Gaussian { theta: 1.0 },
        vec![DataBlock::new(fs, y, Loss::new(LossKind::Square), 1.0)],
    )
}

pub fn network_class() -> ModelClass {
    ModelClass { domain: (-1.0, 1.0), restarts: 2, ..ModelClass::single_layer(1, 8) }
}

fn sigmoid_network() -> Setup {
    let mut seq = ProblemSequence::new(Vec::new(), 1, Arc::new(network_dataset));
    seq.reference = Some(Arc::new(network_target()));
    seq.battery = (0..16).map(|k| Functional::point(-1.0 + (k as f64 + 0.5) / 8.0)).collect();
    seq.error_grid = (0..=32).map(|k| Point::from(-1.0 + k as f64 / 16.0)).collect();
    let mut solver = SolverConfig::new(1.0, Method::ModelClass);
    solver.model = Some(network_class());
    solver.max_iter = 2000;
    setup(seq, vec![8, 16, 32], power(0.5), solver)
}

// ---- the ill-posed problem in R^2

/// `delta_(1,0), delta_(0,1/n), delta_(0,0)` with outputs `(1, 1, 1)` and
/// square loss `3 |t - y|^2` averaged over the three samples.
pub fn illposed_dataset(n: usize) -> Result<GeneralizedDataset, genlearn::Error> {
    let fs =
        vec![Functional::point([1.0, 0.0]), Functional::point([0.0, 1.0 / n as f64]), Functional::point([0.0, 0.0])];
    let loss = Loss::with_weights(LossKind::Square, vec![3.0; 3]);
    GeneralizedDataset::new(KernelSpec::Linear, vec![DataBlock::new(fs, vec![1.0; 3], loss, 1.0)])
}

/// `R(f) = ||A f - b||^2` with `A = [[1, 0], [0, 0], [0, 0]]`, `b = (1, 1, 1)`.
pub fn illposed_oracle() -> ExpectedRiskOracle {
    ExpectedRiskOracle::ClosedFormLinear { a: vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]], b: vec![1.0; 3] }
}

/// A vector of `R^2` as a linear functional evaluator.
pub fn euclidean(v: [f64; 2]) -> ClosedForm {
    ClosedForm::new(move |x: &Point| v[0] * x.0[0] + v[1] * x.0[1]).with_norm(v[0].hypot(v[1]))
}

fn illposed_2d() -> Setup {
    let mut seq = ProblemSequence::new(Vec::new(), 2, Arc::new(illposed_dataset));
    seq.oracle = Some(illposed_oracle());
    seq.reference = Some(Arc::new(euclidean([1.0, 0.0])));
    setup(seq, vec![1, 10, 100, 10_000], power(0.5), SolverConfig::new(1.0, Method::Tikhonov))
}
