//! Descent engine for convex objectives
//! `F(v) = sum_i l_i(y_i, (A v)_i) + sum_j pen_j(v)`.
//!
//! Directions are minimum-norm elements of an enlarged subdifferential in
//! the metric `M`: samples whose prediction lies within a window `delta` of
//! a kink contribute their whole subgradient interval. The window starts at
//! `1e-12` (relative) and grows by ten whenever the resulting direction fails
//! to decrease `F`. Steps use an exact line search on the right derivative.

use nalgebra::{DMatrix, DVector};

use super::Regularizer;
use crate::loss::{Interval, LossKind, ScalarLoss};

#[derive(Debug, Clone)]
pub(crate) enum Penalty {
    /// `lambda * phi(||v||_M)`
    Norm { lambda: f64, phi: Regularizer },
    /// `weight / 2 * ||v - anchor||_M^2`
    Anchor { anchor: DVector<f64>, weight: f64 },
    /// `lambda * sum_k |v_k|^p` for `p > 1`; assumes `M = I`.
    PNorm { lambda: f64, p: f64 },
}

pub(crate) struct Problem {
    /// Predictions map, samples x dim.
    pub a: DMatrix<f64>,
    /// Natural-gradient map, dim x samples: `M P = A^T` on the range of `M`.
    pub p: DMatrix<f64>,
    pub metric: DMatrix<f64>,
    pub losses: Vec<ScalarLoss>,
    pub y: Vec<f64>,
    pub penalties: Vec<Penalty>,
    mp: DMatrix<f64>,
    q: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct EngineResult {
    pub v: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

const START_WINDOW: f64 = 1e-12;

impl Problem {
    pub fn new(
        a: DMatrix<f64>,
        p: DMatrix<f64>,
        metric: DMatrix<f64>,
        losses: Vec<ScalarLoss>,
        y: Vec<f64>,
        penalties: Vec<Penalty>,
    ) -> Self {
        let mp = &metric * &p;
        let q = p.transpose() * &mp;
        Problem { a, p, metric, losses, y, penalties, mp, q }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn mnorm2(&self, v: &DVector<f64>) -> f64 {
        // clamps rounding noise but lets NaN through
        let q = v.dot(&(&self.metric * v));
        if q < 0.0 {
            0.0
        } else {
            q
        }
    }

    pub fn value(&self, v: &DVector<f64>) -> f64 {
        let t = &self.a * v;
        let mut total = 0.0;
        for (i, l) in self.losses.iter().enumerate() {
            total += l.value(self.y[i], t[i]);
        }
        total + self.penalty_value(v)
    }

    fn penalty_value(&self, v: &DVector<f64>) -> f64 {
        self.penalties
            .iter()
            .map(|pen| match pen {
                Penalty::Norm { lambda, phi } => lambda * phi.value(self.mnorm2(v).sqrt()),
                Penalty::Anchor { anchor, weight } => 0.5 * weight * self.mnorm2(&(v - anchor)),
                Penalty::PNorm { lambda, p } => lambda * v.iter().map(|x| x.abs().powf(*p)).sum::<f64>(),
            })
            .sum()
    }

    /// Subgradient intervals of each loss at `t`, opened up near kinks.
    pub fn intervals(&self, t: &DVector<f64>, window: f64) -> Vec<Interval> {
        self.losses
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let y = self.y[i];
                let kink = match l.kind {
                    LossKind::Square => None,
                    LossKind::Absolute => Some(y),
                    LossKind::Hinge if y != 0.0 => Some(1.0 / y),
                    LossKind::Hinge => None,
                };
                match kink {
                    Some(k) if (t[i] - k).abs() <= window * (1.0 + k.abs()) => l.subgradient(y, k),
                    _ => l.subgradient(y, t[i]),
                }
            })
            .collect()
    }

    /// Natural gradient of the differentiable penalty parts; the Linear-norm
    /// term contributes nothing at the origin.
    fn penalty_gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(v.len());
        for pen in &self.penalties {
            match pen {
                Penalty::Norm { lambda, phi } => {
                    let r = self.mnorm2(v).sqrt();
                    if r > 0.0 {
                        g += v * (lambda * phi.derivative(r) / r);
                    }
                }
                Penalty::Anchor { anchor, weight } => g += (v - anchor) * *weight,
                Penalty::PNorm { lambda, p } => {
                    for (k, x) in v.iter().enumerate() {
                        g[k] += lambda * p * x.abs().powf(p - 1.0) * x.signum();
                    }
                }
            }
        }
        g
    }

    /// Radius of the nonsmooth ball at the origin.
    fn ball_radius(&self) -> f64 {
        self.penalties
            .iter()
            .map(|pen| match pen {
                Penalty::Norm { lambda, phi: Regularizer::Linear } => *lambda,
                _ => 0.0,
            })
            .sum()
    }

    /// Euclidean subgradient (midpoint rule, zero when it is admissible).
    pub fn euclidean_subgradient(&self, v: &DVector<f64>) -> DVector<f64> {
        let t = &self.a * v;
        let s = DVector::from_iterator(
            self.losses.len(),
            self.intervals(&t, 0.0).iter().map(|iv| if iv.contains(0.0, 0.0) { 0.0 } else { iv.midpoint() }),
        );
        self.a.transpose() * s + &self.metric * self.penalty_gradient(v)
    }

    /// Minimum-`M`-norm element of `P s + r` over the box `s in [lo, hi]`.
    fn min_norm_direction(&self, iv: &[Interval], r: &DVector<f64>) -> DVector<f64> {
        let free: Vec<usize> = (0..iv.len()).filter(|&i| iv[i].lo < iv[i].hi).collect();
        let mut s = DVector::from_iterator(iv.len(), iv.iter().map(|b| if b.lo == b.hi { b.lo } else { 0.0 }));
        if !free.is_empty() {
            let mut base = r.clone();
            for (i, b) in iv.iter().enumerate() {
                if b.lo == b.hi && b.lo != 0.0 {
                    base += self.p.column(i) * b.lo;
                }
            }
            // gradient of 1/2 ||P_F s_F + base||_M^2 is Q_FF s_F + (MP)_F^T base
            let lin: Vec<f64> = free.iter().map(|&i| self.mp.column(i).dot(&base)).collect();
            let mut sf: Vec<f64> = free.iter().map(|&i| iv[i].min_norm()).collect();
            for _ in 0..500 {
                let mut change = 0.0f64;
                for (a, &i) in free.iter().enumerate() {
                    let qii = self.q[(i, i)];
                    if qii <= 0.0 {
                        continue;
                    }
                    let mut grad = lin[a];
                    for (b, &j) in free.iter().enumerate() {
                        grad += self.q[(i, j)] * sf[b];
                    }
                    let next = (sf[a] - grad / qii).clamp(iv[i].lo, iv[i].hi);
                    change = change.max((next - sf[a]).abs());
                    sf[a] = next;
                }
                if change <= 1e-16 {
                    break;
                }
            }
            for (a, &i) in free.iter().enumerate() {
                s[i] = sf[a];
            }
        }
        &self.p * s + r
    }

    fn direction(&self, v: &DVector<f64>, window: f64) -> DVector<f64> {
        let t = &self.a * v;
        let iv = self.intervals(&t, window);
        let d = self.min_norm_direction(&iv, &self.penalty_gradient(v));
        let radius = self.ball_radius();
        if radius > 0.0 && v.iter().all(|x| *x == 0.0) {
            let n = self.mnorm2(&d).sqrt();
            if n <= radius {
                return DVector::zeros(v.len());
            }
            return d * (1.0 - radius / n);
        }
        d
    }

    /// Right derivative of `eta -> F(v - eta d)`.
    fn slope(&self, ctx: &LineContext, eta: f64) -> f64 {
        let mut total = 0.0;
        for (i, l) in self.losses.iter().enumerate() {
            let dir = -ctx.ad[i];
            if dir == 0.0 {
                continue;
            }
            let iv = l.subgradient(self.y[i], ctx.av[i] - eta * ctx.ad[i]);
            total += dir * if dir > 0.0 { iv.hi } else { iv.lo };
        }
        for (k, pen) in self.penalties.iter().enumerate() {
            total += match pen {
                Penalty::Norm { lambda, phi } => {
                    let r2 = (ctx.vmv - 2.0 * eta * ctx.vmd + eta * eta * ctx.dmd).max(0.0);
                    let r = r2.sqrt();
                    let inner = -(ctx.vmd - eta * ctx.dmd);
                    if r > 0.0 {
                        lambda * phi.derivative(r) * inner / r
                    } else {
                        lambda * phi.derivative(0.0) * ctx.dmd.sqrt()
                    }
                }
                Penalty::Anchor { weight, .. } => -weight * (ctx.vmd - ctx.amd[k] - eta * ctx.dmd),
                Penalty::PNorm { lambda, p } => {
                    let mut s = 0.0;
                    for j in 0..ctx.v.len() {
                        let u = ctx.v[j] - eta * ctx.d[j];
                        s += u.abs().powf(p - 1.0) * u.signum() * -ctx.d[j];
                    }
                    lambda * p * s
                }
            };
        }
        total
    }

    fn line_search(&self, v: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let md = &self.metric * d;
        let amd = self
            .penalties
            .iter()
            .map(|pen| match pen {
                Penalty::Anchor { anchor, .. } => anchor.dot(&md),
                _ => 0.0,
            })
            .collect();
        let ctx = LineContext {
            av: &self.a * v,
            ad: &self.a * d,
            vmv: v.dot(&(&self.metric * v)),
            vmd: v.dot(&md),
            dmd: d.dot(&md),
            amd,
            v: v.clone(),
            d: d.clone(),
        };
        if self.slope(&ctx, 0.0) >= 0.0 {
            return 0.0;
        }
        let mut hi = 1.0;
        let mut grow = 0;
        while self.slope(&ctx, hi) < 0.0 {
            hi *= 2.0;
            grow += 1;
            if grow > 200 {
                return hi;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.slope(&ctx, mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Runs the descent from `v0` for at most `max_iter` steps.
    pub fn minimize(&self, v0: DVector<f64>, max_iter: usize) -> EngineResult {
        let mut v = v0;
        let mut f = self.value(&v);
        let zero = DVector::zeros(self.dim());
        let has_ball = self.ball_radius() > 0.0;
        let scale = self.mnorm2(&self.direction(&v, START_WINDOW)).sqrt().max(1.0);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_iter {
            iterations += 1;
            if has_ball && v.iter().any(|x| *x != 0.0) {
                let f0 = self.value(&zero);
                if f0 <= f {
                    v = zero.clone();
                    f = f0;
                }
            }
            let mut window = START_WINDOW;
            let mut moved = false;
            while window < 1.0 {
                let d = self.direction(&v, window);
                if self.mnorm2(&d).sqrt() <= 1e-14 * scale {
                    if window == START_WINDOW {
                        converged = true;
                    }
                    break;
                }
                let eta = self.line_search(&v, &d);
                if eta > 0.0 {
                    let cand = &v - &d * eta;
                    let fc = self.value(&cand);
                    if fc < f {
                        v = cand;
                        f = fc;
                        moved = true;
                        break;
                    }
                }
                window *= 10.0;
            }
            if converged {
                break;
            }
            if !moved {
                // no enlargement of the subdifferential yields descent
                converged = true;
                break;
            }
        }
        EngineResult { v, objective: f, iterations, converged }
    }
}

struct LineContext {
    av: DVector<f64>,
    ad: DVector<f64>,
    vmv: f64,
    vmd: f64,
    dmd: f64,
    /// `<anchor, d>_M` per penalty.
    amd: Vec<f64>,
    v: DVector<f64>,
    d: DVector<f64>,
}
