//! Generalized data: linear functionals acting on the hypothesis space.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{eval_op_kernel, DiffOp, KernelSpec, Point};

/// A continuous linear functional on the RKHS of a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Functional {
    /// `f -> f(x)`
    Point { x: Point },
    /// `f -> (op f)(x)`
    Op { op: DiffOp, x: Point },
    /// `f -> sum_i w_i f(x_i)`
    Quadrature { nodes: Vec<Point>, weights: Vec<f64> },
}

impl Functional {
    pub fn point(x: impl Into<Point>) -> Self {
        Functional::Point { x: x.into() }
    }

    pub fn op(op: DiffOp, x: impl Into<Point>) -> Self {
        Functional::Op { op, x: x.into() }
    }

    pub fn laplacian(x: impl Into<Point>) -> Self {
        Functional::op(DiffOp::Laplacian, x)
    }

    pub fn quadrature(nodes: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        let f = Functional::Quadrature { nodes, weights };
        f.check_shape()?;
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        match self {
            Functional::Point { x } | Functional::Op { x, .. } => x.dim(),
            Functional::Quadrature { nodes, .. } => nodes.first().map_or(0, Point::dim),
        }
    }

    /// Whether the functional only samples function values (no derivatives).
    pub fn is_pointwise(&self) -> bool {
        !matches!(self, Functional::Op { op: DiffOp::Laplacian, .. })
    }

    fn check_shape(&self) -> Result<()> {
        match self {
            Functional::Point { x } | Functional::Op { x, .. } => {
                if !x.is_finite() || x.dim() == 0 {
                    return invalid("functional location must be a finite nonempty point");
                }
            }
            Functional::Quadrature { nodes, weights } => {
                if nodes.is_empty() || nodes.len() != weights.len() {
                    return invalid(format!(
                        "quadrature needs matching nonempty nodes and weights, got {} and {}",
                        nodes.len(),
                        weights.len()
                    ));
                }
                if weights.iter().any(|w| !w.is_finite()) {
                    return invalid("quadrature weights must be finite");
                }
                let d = nodes[0].dim();
                if nodes.iter().any(|p| !p.is_finite() || p.dim() != d || d == 0) {
                    return invalid("quadrature nodes must be finite points of one dimension");
                }
            }
        }
        Ok(())
    }

    /// Checks the functional is well formed and admissible for `spec`.
    pub fn validate(&self, spec: &KernelSpec) -> Result<()> {
        self.check_shape()?;
        if let Functional::Op { op, .. } = self {
            if !spec.supports(*op) {
                return Err(Error::Capability(format!("{} kernel does not admit {:?} data", spec.name(), op)));
            }
        }
        Ok(())
    }
}

/// Weighted point atoms `(w, op, x)` whose sum is the functional.
pub(crate) fn atoms(xi: &Functional) -> Vec<(f64, DiffOp, &Point)> {
    match xi {
        Functional::Point { x } => vec![(1.0, DiffOp::Identity, x)],
        Functional::Op { op, x } => vec![(1.0, *op, x)],
        Functional::Quadrature { nodes, weights } => {
            weights.iter().zip(nodes).map(|(w, x)| (*w, DiffOp::Identity, x)).collect()
        }
    }
}

/// Inner product of the Riesz representers of `a` and `b`.
pub fn pair(spec: &KernelSpec, a: &Functional, b: &Functional) -> Result<f64> {
    let (pa, pb) = (atoms(a), atoms(b));
    let mut sum = 0.0;
    for (wa, opa, xa) in &pa {
        for (wb, opb, xb) in &pb {
            sum += wa * wb * eval_op_kernel(spec, *opa, xa, *opb, xb)?;
        }
    }
    Ok(sum)
}

/// `||xi||_*`, the RKHS norm of the representer.
pub fn dual_norm(spec: &KernelSpec, xi: &Functional) -> Result<f64> {
    Ok(pair(spec, xi, xi)?.max(0.0).sqrt())
}

/// `||xi1 - xi2||_*`.
pub fn dual_distance(spec: &KernelSpec, a: &Functional, b: &Functional) -> Result<f64> {
    let d2 = pair(spec, a, a)? - 2.0 * pair(spec, a, b)? + pair(spec, b, b)?;
    Ok(d2.max(0.0).sqrt())
}

/// Anything a functional can act on.
pub trait FunctionalEval {
    /// `<f, xi>`
    fn apply(&self, xi: &Functional) -> Result<f64>;

    /// Norm in the hypothesis space when it is known.
    fn norm(&self) -> Option<f64> {
        None
    }
}

type ScalarField = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// A function known in closed form, with an optional closed-form Laplacian.
#[derive(Clone)]
pub struct ClosedForm {
    value: ScalarField,
    laplacian: Option<ScalarField>,
    norm: Option<f64>,
}

impl ClosedForm {
    pub fn new(value: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        ClosedForm { value: Arc::new(value), laplacian: None, norm: None }
    }

    pub fn with_laplacian(mut self, lap: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        self.laplacian = Some(Arc::new(lap));
        self
    }

    pub fn with_norm(mut self, norm: f64) -> Self {
        self.norm = Some(norm);
        self
    }

    pub fn value(&self, x: &Point) -> f64 {
        (self.value)(x)
    }
}

impl std::fmt::Debug for ClosedForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClosedForm").field("laplacian", &self.laplacian.is_some()).field("norm", &self.norm).finish()
    }
}

impl FunctionalEval for ClosedForm {
    fn apply(&self, xi: &Functional) -> Result<f64> {
        let mut sum = 0.0;
        for (w, op, x) in atoms(xi) {
            sum += w * match op {
                DiffOp::Identity => (self.value)(x),
                DiffOp::Laplacian => match &self.laplacian {
                    Some(lap) => lap(x),
                    None => return Err(Error::Capability("closed-form function has no Laplacian".into())),
                },
            };
        }
        Ok(sum)
    }

    fn norm(&self) -> Option<f64> {
        self.norm
    }
}

/// `<f, xi>` for any evaluable `f`.
pub fn apply(xi: &Functional, f: &dyn FunctionalEval) -> Result<f64> {
    f.apply(xi)
}

/// An immutable, validated collection of functionals over one kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSet {
    spec: KernelSpec,
    members: Vec<Functional>,
}

impl FunctionalSet {
    pub fn new(spec: KernelSpec, members: Vec<Functional>) -> Result<Self> {
        spec.validate()?;
        if members.is_empty() {
            return invalid("functional set must be nonempty");
        }
        for m in &members {
            m.validate(&spec)?;
        }
        Ok(FunctionalSet { spec, members })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn members(&self) -> &[Functional] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The first `k` members.
    pub fn prefix(&self, k: usize) -> Result<FunctionalSet> {
        FunctionalSet::new(self.spec, self.members[..k.min(self.members.len())].to_vec())
    }

    /// Largest dual norm in the set.
    pub fn dual_norm_sup(&self) -> Result<f64> {
        self.members.iter().try_fold(0.0f64, |m, xi| Ok(m.max(dual_norm(&self.spec, xi)?)))
    }
}

/// Size of a greedy farthest-point `eps`-cover of the set in the dual metric.
///
/// The first center is member 0; each further center is the member farthest
/// from the current centers, with ties going to the lowest index.
pub fn epsilon_net_size(set: &FunctionalSet, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return invalid(format!("net radius must be positive, got {eps}"));
    }
    let spec = set.spec();
    let members = set.members();
    let sq: Vec<f64> = members.iter().map(|m| pair(spec, m, m)).collect::<Result<_>>()?;
    let dist = |i: usize, j: usize| -> Result<f64> {
        let d2 = sq[i] - 2.0 * pair(spec, &members[i], &members[j])? + sq[j];
        Ok(d2.max(0.0).sqrt())
    };
    let mut nearest: Vec<f64> = (0..members.len()).map(|i| dist(i, 0)).collect::<Result<_>>()?;
    let mut centers = 1;
    loop {
        let (far, radius) =
            nearest
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        if radius <= eps {
            return Ok(centers);
        }
        centers += 1;
        for i in 0..members.len() {
            let d = dist(i, far)?;
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::eval_kernel;
    use proptest::prelude::*;

    fn gauss(theta: f64) -> KernelSpec {
        KernelSpec::Gaussian { theta }
    }

    #[test]
    fn serde_forms() {
        let p: Functional = serde_json::from_str(r#"{"type":"point","x":[0.5]}"#).unwrap();
        assert_eq!(p, Functional::point(0.5));
        let o: Functional = serde_json::from_str(r#"{"type":"op","op":"laplacian","x":[0.1,0.2]}"#).unwrap();
        assert_eq!(o, Functional::laplacian([0.1, 0.2]));
        let q: Functional =
            serde_json::from_str(r#"{"type":"quadrature","nodes":[[0.0],[1.0]],"weights":[0.5,0.5]}"#).unwrap();
        let back: Functional = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
        assert_eq!(q, back);
    }

    #[test]
    fn malformed_quadrature_is_rejected() {
        assert!(Functional::quadrature(vec![], vec![]).is_err());
        assert!(Functional::quadrature(vec![Point::from(0.0)], vec![1.0, 2.0]).is_err());
        assert!(Functional::quadrature(vec![Point::from(0.0)], vec![f64::NAN]).is_err());
    }

    #[test]
    fn laplacian_data_need_a_smooth_kernel() {
        let xi = Functional::laplacian([0.5, 0.5]);
        assert!(matches!(xi.validate(&KernelSpec::Min), Err(Error::Capability(_))));
        assert!(xi.validate(&gauss(1.0)).is_ok());
    }

    #[test]
    fn dual_norms() {
        assert!((dual_norm(&gauss(3.0), &Functional::point(0.2)).unwrap() - 1.0).abs() < 1e-15);
        let one = dual_norm(&KernelSpec::Min, &Functional::point([1.0, 1.0])).unwrap();
        assert!((one - 1.0).abs() < 1e-15);

        let spec = gauss(1.5);
        let (a, b) = (Point::from(0.25), Point::from(0.75));
        let q = Functional::quadrature(vec![a.clone(), b.clone()], vec![0.5, 0.5]).unwrap();
        let brute = 0.25
            * (eval_kernel(&spec, &a, &a).unwrap()
                + 2.0 * eval_kernel(&spec, &a, &b).unwrap()
                + eval_kernel(&spec, &b, &b).unwrap());
        assert!((dual_norm(&spec, &q).unwrap() - brute.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dual_distances() {
        let spec = gauss(1.0);
        let a = Functional::point(0.0);
        assert_eq!(dual_distance(&spec, &a, &a).unwrap(), 0.0);
        let d = dual_distance(&spec, &a, &Functional::point(0.001)).unwrap();
        let want = (2.0 - 2.0 * (-1e-6f64).exp()).sqrt();
        assert!(d <= 0.01 && (d - want).abs() < 1e-9);
        let mut last = f64::INFINITY;
        for k in (0..=20).rev() {
            let d = dual_distance(&spec, &a, &Functional::point(0.05 * k as f64)).unwrap();
            assert!(d <= last);
            last = d;
        }
    }

    fn grid(n: usize) -> Vec<Functional> {
        (0..n).map(|i| Functional::point(i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn epsilon_nets() {
        let spec = gauss(1.0);
        let single = FunctionalSet::new(spec, vec![Functional::point(0.3)]).unwrap();
        assert_eq!(epsilon_net_size(&single, 1e-9).unwrap(), 1);
        let dup = FunctionalSet::new(spec, vec![Functional::point(0.3); 7]).unwrap();
        assert_eq!(epsilon_net_size(&dup, 1e-9).unwrap(), 1);

        let small = FunctionalSet::new(spec, grid(1000)).unwrap();
        let large = FunctionalSet::new(spec, grid(2000)).unwrap();
        let a = epsilon_net_size(&small, 0.1).unwrap();
        let b = epsilon_net_size(&large, 0.1).unwrap();
        assert_eq!(a, b);
        assert!(a > 1 && a < 20);
    }

    #[test]
    fn closed_form_needs_laplacian_for_op_data() {
        let f = ClosedForm::new(|x: &Point| x.0[0] * x.0[0]);
        assert!(f.apply(&Functional::laplacian(0.3)).is_err());
        let f = f.with_laplacian(|_: &Point| 2.0);
        assert_eq!(f.apply(&Functional::laplacian(0.3)).unwrap(), 2.0);
        let q = Functional::quadrature(vec![Point::from(0.5)], vec![3.0]).unwrap();
        assert_eq!(apply(&q, &f).unwrap(), 0.75);
    }

    proptest! {
        #[test]
        fn cauchy_schwarz_for_representer_pairs(
            xs in proptest::collection::vec(0.0f64..1.0, 1..6),
            zs in proptest::collection::vec(0.0f64..1.0, 1..6),
            theta in 0.3f64..4.0,
        ) {
            let spec = gauss(theta);
            let a = Functional::quadrature(xs.iter().map(|&x| Point::from(x)).collect(), vec![0.7; xs.len()]).unwrap();
            let b = Functional::quadrature(zs.iter().map(|&x| Point::from(x)).collect(), vec![-0.4; zs.len()]).unwrap();
            let ip = pair(&spec, &a, &b).unwrap();
            let bound = dual_norm(&spec, &a).unwrap() * dual_norm(&spec, &b).unwrap();
            prop_assert!(ip.abs() <= bound * (1.0 + 1e-12) + 1e-15);
        }

        #[test]
        fn triangle_inequality(x in 0.0f64..1.0, y in 0.0f64..1.0, z in 0.0f64..1.0) {
            let spec = gauss(2.0);
            let (a, b, c) = (Functional::point(x), Functional::point(y), Functional::point(z));
            let ab = dual_distance(&spec, &a, &b).unwrap();
            let bc = dual_distance(&spec, &b, &c).unwrap();
            let ac = dual_distance(&spec, &a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-7);
        }
    }
}
