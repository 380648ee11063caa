//! Approximate minimization over sigmoid networks with bounded weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Regularizer, SolverConfig};
use crate::error::{Error, Result};
use crate::functional::atoms;
use crate::kernel::{DiffOp, Point};
use crate::loss::ScalarLoss;
use crate::network::Network;
use crate::risk::GeneralizedDataset;
use crate::solution::{norm_grid, Solution};

fn default_grid() -> usize {
    33
}

fn default_restarts() -> usize {
    3
}

fn default_domain() -> (f64, f64) {
    (0.0, 1.0)
}

/// Networks with the given hidden widths and every parameter in `[-B, B]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelClass {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub bound: f64,
    #[serde(default = "default_grid")]
    pub grid_per_axis: usize,
    #[serde(default = "default_domain")]
    pub domain: (f64, f64),
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

impl ModelClass {
    pub fn single_layer(input_dim: usize, width: usize) -> Self {
        ModelClass {
            input_dim,
            hidden: vec![width],
            bound: 50.0,
            grid_per_axis: default_grid(),
            domain: default_domain(),
            restarts: default_restarts(),
        }
    }

    /// Total coefficient count `m`.
    pub fn m(&self) -> usize {
        Network::param_count(self.input_dim, &self.hidden)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidInput("model class needs positive layer widths".into()));
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(Error::InvalidInput(format!("coefficient bound must be positive, got {}", self.bound)));
        }
        if self.grid_per_axis < 2 || !(self.domain.0 < self.domain.1) {
            return Err(Error::InvalidInput("norm grid needs two points per axis and a nonempty domain".into()));
        }
        Ok(())
    }
}

/// Samples as weighted point evaluations.
struct Sample {
    atoms: Vec<(f64, Point)>,
    y: f64,
    loss: ScalarLoss,
}

struct Objective<'a> {
    samples: Vec<Sample>,
    grid: Vec<Point>,
    lambda: f64,
    phi: Regularizer,
    hidden: &'a [usize],
    input_dim: usize,
}

impl Objective<'_> {
    fn net(&self, params: &[f64]) -> Network {
        Network { input_dim: self.input_dim, hidden: self.hidden.to_vec(), params: params.to_vec() }
    }

    fn value(&self, params: &[f64]) -> f64 {
        let net = self.net(params);
        let risk: f64 =
            self.samples.iter().map(|s| s.loss.value(s.y, s.atoms.iter().map(|(w, x)| w * net.eval(x)).sum())).sum();
        let sup = self.grid.iter().map(|x| net.eval(x).abs()).fold(0.0, f64::max);
        risk + self.lambda * self.phi.value(sup)
    }

    /// A subgradient; the norm term is differentiated at the grid argmax.
    fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let net = self.net(params);
        let mut g = vec![0.0; params.len()];
        for s in &self.samples {
            let mut t = 0.0;
            let mut dt = vec![0.0; params.len()];
            for (w, x) in &s.atoms {
                let (v, d) = net.eval_with_grad(x);
                t += w * v;
                for (a, b) in dt.iter_mut().zip(&d) {
                    *a += w * b;
                }
            }
            let slope = s.loss.subgradient(s.y, t).midpoint();
            for (a, b) in g.iter_mut().zip(&dt) {
                *a += slope * b;
            }
        }
        let (mut best, mut arg) = (-1.0, 0);
        for (i, x) in self.grid.iter().enumerate() {
            let v = net.eval(x).abs();
            if v > best {
                best = v;
                arg = i;
            }
        }
        let (v, d) = net.eval_with_grad(&self.grid[arg]);
        let scale = self.lambda * self.phi.derivative(v.abs()) * v.signum();
        for (a, b) in g.iter_mut().zip(&d) {
            *a += scale * b;
        }
        g
    }
}

const ADAM_STEPS: usize = 4000;

/// Adam with clamping to the coefficient box from `start`; returns the best
/// point seen, including `start`.
fn descend(obj: &Objective, start: Vec<f64>, bound: f64, steps: usize, tol: f64) -> (Vec<f64>, f64, usize, bool) {
    let (b1, b2, lr, eps): (f64, f64, f64, f64) = (0.9, 0.999, 0.02, 1e-8);
    let n = start.len();
    let mut x = start;
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut best = x.clone();
    let mut best_f = obj.value(&x);
    let mut window_start = best_f;
    let mut converged = false;
    let mut k = 0;
    while k < steps {
        k += 1;
        let g = obj.gradient(&x);
        if g.iter().any(|v| !v.is_finite()) {
            break;
        }
        let (c1, c2) = (1.0 - b1.powi(k as i32), 1.0 - b2.powi(k as i32));
        for i in 0..n {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let step = lr / (1.0 + k as f64 / 1000.0);
            x[i] = (x[i] - step * (m[i] / c1) / ((v[i] / c2).sqrt() + eps)).clamp(-bound, bound);
        }
        let f = obj.value(&x);
        if f < best_f {
            best_f = f;
            best.copy_from_slice(&x);
        }
        if k % 200 == 0 {
            if window_start - best_f <= tol.max(1e-9) * (1.0 + best_f.abs()) {
                converged = true;
                break;
            }
            window_start = best_f;
        }
    }
    (best, best_f, k, converged)
}

/// Minimizes `R_n(net) + lambda phi(sup_grid |net|)` over the model class.
/// Restart 0 starts from `init` (widened to the class) when given; the other
/// restarts draw uniform parameters from the seeded generator.
pub fn solve_model_class(
    ds: &GeneralizedDataset,
    cfg: &SolverConfig,
    mc: &ModelClass,
    init: Option<&Network>,
) -> Result<Solution> {
    cfg.validate()?;
    ds.validate()?;
    mc.validate()?;
    if ds.dim() != mc.input_dim {
        return Err(Error::InvalidInput(format!(
            "model class takes {}-dimensional inputs, data has {}",
            mc.input_dim,
            ds.dim()
        )));
    }
    let losses = super::sample_losses(ds)?;
    let ys = ds.outputs();
    let mut samples = Vec::with_capacity(losses.len());
    for ((xi, y), loss) in ds.functionals().iter().zip(ys).zip(losses) {
        let mut pts = Vec::new();
        for (w, op, x) in atoms(xi) {
            if op != DiffOp::Identity {
                return Err(Error::Capability("networks do not evaluate differential operators".into()));
            }
            pts.push((w, x.clone()));
        }
        samples.push(Sample { atoms: pts, y, loss });
    }
    let obj = Objective {
        samples,
        grid: norm_grid(mc.input_dim, mc.grid_per_axis, mc.domain),
        lambda: cfg.lambda,
        phi: cfg.regularizer,
        hidden: &mc.hidden,
        input_dim: mc.input_dim,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = mc.bound.min(1.0);
    let count = mc.m();
    let steps = cfg.max_iter.min(ADAM_STEPS);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut total_iter = 0;
    let mut any_converged = false;
    for r in 0..mc.restarts.max(1) {
        let start = match (r, init) {
            (0, Some(net)) => {
                let mut fill = || rng.gen_range(-scale..scale);
                let wide = net.widen(&mc.hidden, &mut fill)?;
                wide.params.iter().map(|p| p.clamp(-mc.bound, mc.bound)).collect()
            }
            _ => (0..count).map(|_| rng.gen_range(-scale..scale)).collect(),
        };
        let (params, f, iters, conv) = descend(&obj, start, mc.bound, steps, cfg.tol);
        total_iter += iters;
        any_converged |= conv;
        if !f.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((params, f));
        }
    }
    let (params, f) = best.ok_or_else(|| Error::Convergence("every restart diverged".into()))?;
    let net = Network::from_params(mc.input_dim, mc.hidden.clone(), params)?;
    let sol = Solution::network(net, mc.grid_per_axis, mc.domain);
    Ok(sol.with_run(f, total_iter, any_converged))
}
