//! Generalized datasets, empirical risks, and expected-risk oracles.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functional::{ClosedForm, Functional, FunctionalEval};
use crate::kernel::{KernelSpec, Point};
use crate::loss::{Loss, LossBlock, LossKind, MultiLoss};
use crate::quadrature::{adaptive_simpson, tensor_gauss_2d, unit_square_boundary};

/// One block of generalized data sharing a loss and a block weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataBlock {
    pub functionals: Vec<Functional>,
    pub y: Vec<f64>,
    pub loss: Loss,
    pub rho: f64,
}

impl DataBlock {
    pub fn new(functionals: Vec<Functional>, y: Vec<f64>, loss: Loss, rho: f64) -> Self {
        DataBlock { functionals, y, loss, rho }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedDataset {
    pub kernel: KernelSpec,
    pub blocks: Vec<DataBlock>,
    /// Stage index within a data sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl GeneralizedDataset {
    pub fn new(kernel: KernelSpec, blocks: Vec<DataBlock>) -> Result<Self> {
        let ds = GeneralizedDataset { kernel, blocks, n: None };
        ds.validate()?;
        Ok(ds)
    }

    pub fn at_stage(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.blocks.is_empty() {
            return invalid("dataset has no blocks");
        }
        let dim = self.blocks[0].functionals.first().map(Functional::dim);
        for (j, b) in self.blocks.iter().enumerate() {
            if b.functionals.is_empty() || b.functionals.len() != b.y.len() {
                return invalid(format!("block {j}: {} functionals and {} outputs", b.functionals.len(), b.y.len()));
            }
            if b.y.iter().any(|v| !v.is_finite()) {
                return invalid(format!("block {j}: outputs must be finite"));
            }
            if !(b.rho > 0.0 && b.rho.is_finite()) {
                return invalid(format!("block {j}: rho must be positive"));
            }
            b.loss.validate(b.y.len())?;
            for xi in &b.functionals {
                xi.validate(&self.kernel)?;
                if Some(xi.dim()) != dim {
                    return invalid(format!("block {j}: functionals of mixed dimension"));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.y.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.blocks[0].functionals[0].dim()
    }

    pub fn functionals(&self) -> Vec<Functional> {
        self.blocks.iter().flat_map(|b| b.functionals.iter().cloned()).collect()
    }

    pub fn outputs(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.y.iter().copied()).collect()
    }

    pub fn multiloss(&self) -> Result<MultiLoss> {
        let mut start = 0;
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let range = start..start + b.y.len();
                start = range.end;
                LossBlock { loss: b.loss.clone(), rho: b.rho, range }
            })
            .collect();
        MultiLoss::new(blocks)
    }

    pub fn all_square(&self) -> bool {
        self.blocks.iter().all(|b| b.loss.kind == LossKind::Square)
    }

    /// Predictions `<f, xi_k>` over all samples.
    pub fn predictions(&self, f: &dyn FunctionalEval) -> Result<Vec<f64>> {
        self.blocks.iter().flat_map(|b| b.functionals.iter()).map(|xi| f.apply(xi)).collect()
    }
}

/// `R_n(f) = L_n(xi, y, <f, xi>)`.
pub fn empirical_risk(ds: &GeneralizedDataset, f: &dyn FunctionalEval) -> Result<f64> {
    let t = ds.predictions(f)?;
    ds.multiloss()?.value(&ds.outputs(), &t)
}

type Field1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Field2 = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// Expected risks known for the built-in problems.
#[derive(Clone)]
pub enum ExpectedRiskOracle {
    /// `int_a^b |f(x) - f0(x)| omega(x) dx`
    Quadrature1D { target: ClosedForm, weight: Field1, domain: (f64, f64), rel_tol: f64 },
    /// `1/2 int |Lap f - h|^2 + 1/2 mean_{boundary} |f - g|^2` on `[0,1]^2`.
    PdeResidual { h: Field2, g: Field2, rel_tol: f64 },
    /// `||A f - b||^2` where `(A f)_i = f(a_i)` for a linear-kernel `f`.
    ClosedFormLinear { a: Vec<Vec<f64>>, b: Vec<f64> },
}

impl std::fmt::Debug for ExpectedRiskOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExpectedRiskOracle::Quadrature1D { domain, rel_tol, .. } => {
                f.debug_struct("Quadrature1D").field("domain", domain).field("rel_tol", rel_tol).finish()
            }
            ExpectedRiskOracle::PdeResidual { rel_tol, .. } => {
                f.debug_struct("PdeResidual").field("rel_tol", rel_tol).finish()
            }
            ExpectedRiskOracle::ClosedFormLinear { a, b } => {
                f.debug_struct("ClosedFormLinear").field("a", a).field("b", b).finish()
            }
        }
    }
}

impl ExpectedRiskOracle {
    pub fn quadrature_1d(
        target: ClosedForm,
        weight: impl Fn(f64) -> f64 + Send + Sync + 'static,
        domain: (f64, f64),
    ) -> Self {
        ExpectedRiskOracle::Quadrature1D { target, weight: Arc::new(weight), domain, rel_tol: 1e-6 }
    }

    pub fn pde_residual(
        h: impl Fn(&Point) -> f64 + Send + Sync + 'static,
        g: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ExpectedRiskOracle::PdeResidual { h: Arc::new(h), g: Arc::new(g), rel_tol: 1e-6 }
    }

    pub fn with_rel_tol(mut self, tol: f64) -> Self {
        match &mut self {
            ExpectedRiskOracle::Quadrature1D { rel_tol, .. } | ExpectedRiskOracle::PdeResidual { rel_tol, .. } => {
                *rel_tol = tol
            }
            ExpectedRiskOracle::ClosedFormLinear { .. } => {}
        }
        self
    }
}

/// `R(f)` from the oracle.
pub fn expected_risk(oracle: &ExpectedRiskOracle, f: &dyn FunctionalEval) -> Result<f64> {
    match oracle {
        ExpectedRiskOracle::Quadrature1D { target, weight, domain, rel_tol } => {
            let failure = std::cell::RefCell::new(None);
            let integrand = |x: f64| -> f64 {
                let p = Point::from(x);
                match f.apply(&Functional::Point { x: p.clone() }) {
                    Ok(v) => (v - target.value(&p)).abs() * weight(x),
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        0.0
                    }
                }
            };
            // scale the absolute tolerance by a coarse estimate of the integral
            let coarse = crate::quadrature::composite_gauss(domain.0, domain.1, 16, 5)
                .iter()
                .map(|(x, w)| w * integrand(*x))
                .sum::<f64>();
            let tol = rel_tol * coarse.abs().max(1e-300);
            let v = adaptive_simpson(&integrand, domain.0, domain.1, tol);
            if let Some(e) = failure.into_inner() {
                return Err(e);
            }
            v
        }
        ExpectedRiskOracle::PdeResidual { h, g, rel_tol } => {
            let interior = tensor_gauss_2d(
                &mut |a, b| {
                    let x = Point::from([a, b]);
                    let lap = f.apply(&Functional::laplacian(x.clone()))?;
                    Ok((lap - h(&x)).powi(2))
                },
                0.0,
                1.0,
                *rel_tol,
            )?;
            let boundary = unit_square_boundary(
                &mut |a, b| {
                    let x = Point::from([a, b]);
                    let v = f.apply(&Functional::point(x.clone()))?;
                    Ok((v - g(&x)).powi(2))
                },
                *rel_tol,
            )?;
            Ok(0.5 * interior + 0.5 * boundary / 4.0)
        }
        ExpectedRiskOracle::ClosedFormLinear { a, b } => {
            if a.len() != b.len() {
                return invalid("matrix rows and right-hand side differ in length");
            }
            let mut sum = 0.0;
            for (row, bi) in a.iter().zip(b) {
                let r = f.apply(&Functional::point(Point::new(row.clone())))? - bi;
                sum += r * r;
            }
            Ok(sum)
        }
    }
}

/// Least-squares slope of `log y` against `log x` over positive pairs;
/// `None` with fewer than two usable points.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let m = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / m;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub f_id: usize,
    pub n: usize,
    pub expected: f64,
    pub empirical: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionIReport {
    pub rows: Vec<GapRow>,
    /// Per test function; `None` when the trend is undefined.
    pub slopes: Vec<Option<f64>>,
}

impl ConditionIReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("f_id,n,gap,slope\n");
        for r in &self.rows {
            let slope = self.slopes[r.f_id].map_or(String::new(), |s| format!("{s}"));
            out.push_str(&format!("{},{},{},{}\n", r.f_id, r.n, r.gap, slope));
        }
        out
    }
}

/// Tabulates `|R(f) - R_n(f)|` over a dataset sequence for each test function.
/// Stage `n` is taken from the dataset, falling back to its 1-based position.
pub fn condition_i_check(
    oracle: &ExpectedRiskOracle,
    seq: &[GeneralizedDataset],
    test_fs: &[&dyn FunctionalEval],
) -> Result<ConditionIReport> {
    if seq.is_empty() || test_fs.is_empty() {
        return invalid("condition (I) check needs datasets and test functions");
    }
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for (id, f) in test_fs.iter().enumerate() {
        let expected = expected_risk(oracle, *f)?;
        let mut pts = Vec::new();
        for (pos, ds) in seq.iter().enumerate() {
            let n = ds.n.unwrap_or(pos + 1);
            let empirical = empirical_risk(ds, *f)?;
            let gap = (expected - empirical).abs();
            pts.push((n as f64, gap));
            rows.push(GapRow { f_id: id, n, expected, empirical, gap });
        }
        slopes.push(loglog_slope(&pts));
    }
    Ok(ConditionIReport { rows, slopes })
}

/// A numerical failure that still carries a usable value.
pub fn partial_value(e: &Error) -> Option<f64> {
    match e {
        Error::Numerical(msg) => msg.rsplit("partial value ").next()?.trim().parse().ok(),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::gram;
    use crate::solution::Solution;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn illposed(n: usize) -> GeneralizedDataset {
        let fs = vec![
            Functional::point([1.0, 0.0]),
            Functional::point([0.0, 1.0 / n as f64]),
            Functional::point([0.0, 0.0]),
        ];
        let loss = Loss::with_weights(LossKind::Square, vec![3.0; 3]);
        GeneralizedDataset::new(KernelSpec::Linear, vec![DataBlock::new(fs, vec![1.0; 3], loss, 1.0)])
            .unwrap()
            .at_stage(n)
    }

    fn euclid(v: [f64; 2]) -> ClosedForm {
        ClosedForm::new(move |x: &Point| v[0] * x.0[0] + v[1] * x.0[1])
    }

    fn a_matrix() -> ExpectedRiskOracle {
        ExpectedRiskOracle::ClosedFormLinear {
            a: vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]],
            b: vec![1.0; 3],
        }
    }

    #[test]
    fn empirical_risk_examples() {
        assert!((empirical_risk(&illposed(7), &euclid([1.0, 0.0])).unwrap() - 2.0).abs() < 1e-15);

        let spec = KernelSpec::Gaussian { theta: 1.0 };
        let f =
            Solution::representer(spec, vec![Functional::point(0.2), Functional::point(0.7)], vec![1.0, -0.5]).unwrap();
        let fs = vec![Functional::point(0.1), Functional::point(0.9)];
        let y = fs.iter().map(|xi| f.apply(xi).unwrap()).collect();
        let ds = GeneralizedDataset::new(spec, vec![DataBlock::new(fs, y, Loss::new(LossKind::Square), 1.0)]).unwrap();
        assert_eq!(empirical_risk(&ds, &f).unwrap(), 0.0);

        let hinge = GeneralizedDataset::new(
            spec,
            vec![DataBlock::new(vec![Functional::point(0.5)], vec![1.0], Loss::new(LossKind::Hinge), 1.0)],
        )
        .unwrap();
        let two = ClosedForm::new(|_: &Point| 2.0);
        assert_eq!(empirical_risk(&hinge, &two).unwrap(), 0.0);
    }

    #[test]
    fn linear_oracle() {
        assert_eq!(expected_risk(&a_matrix(), &euclid([1.0, 0.0])).unwrap(), 2.0);
        // hand-rolled A f - b for f = (0.3, -2)
        let f: [f64; 2] = [0.3, -2.0];
        let want = (1.0 * f[0] - 1.0).powi(2) + 1.0 + 1.0;
        assert_eq!(expected_risk(&a_matrix(), &euclid(f)).unwrap(), want);
    }

    #[test]
    fn condition_i_on_the_illposed_sequence() {
        let seq: Vec<_> = [1, 10, 100].iter().map(|&n| illposed(n)).collect();
        let zero = euclid([0.0, 0.0]);
        let rep = condition_i_check(&a_matrix(), &seq, &[&zero]).unwrap();
        assert!(rep.rows.iter().all(|r| r.gap == 0.0 && r.expected == 3.0));
        assert_eq!(rep.slopes, vec![None]);
        let single = condition_i_check(&a_matrix(), &seq[..1], &[&euclid([1.0, 1.0])]).unwrap();
        assert_eq!(single.slopes, vec![None]);
        assert!(rep.to_csv().starts_with("f_id,n,gap,slope\n0,1,0,\n"));
    }

    #[test]
    fn oracles_vanish_at_the_target() {
        let target = ClosedForm::new(|x: &Point| (3.0 * x.0[0]).sin());
        let o = ExpectedRiskOracle::quadrature_1d(target.clone(), |x| 1.0 + x, (0.0, 1.0));
        assert!(expected_risk(&o, &target).unwrap().abs() < 1e-8);
        let pi = std::f64::consts::PI;
        let f0 = ClosedForm::new(move |x: &Point| (pi * x.0[0]).sin() * (pi * x.0[1]).sin())
            .with_laplacian(move |x: &Point| -2.0 * pi * pi * (pi * x.0[0]).sin() * (pi * x.0[1]).sin());
        let pde = ExpectedRiskOracle::pde_residual(
            move |x: &Point| -2.0 * pi * pi * (pi * x.0[0]).sin() * (pi * x.0[1]).sin(),
            |_: &Point| 0.0,
        );
        assert!(expected_risk(&pde, &f0).unwrap().abs() < 1e-20);
        // f = 0: interior 1/2 * 4 pi^4 / 4
        let zero = ClosedForm::new(|_: &Point| 0.0).with_laplacian(|_: &Point| 0.0);
        let r = expected_risk(&pde, &zero).unwrap();
        assert!((r - 0.5 * pi.powi(4)).abs() < 1e-6 * r);
    }

    #[test]
    fn slopes() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&n| (n, 3.0 / (n * n))).collect();
        assert!((loglog_slope(&pts).unwrap() + 2.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&[(1.0, 1.0)]), None);
    }

    #[test]
    fn partial_values_are_recoverable() {
        let e = Error::Numerical("did not converge; partial value 0.125".into());
        assert_eq!(partial_value(&e), Some(0.125));
    }

    #[test]
    fn dataset_json_round_trip() {
        let ds = illposed(3);
        let s = serde_json::to_string(&ds).unwrap();
        let back: GeneralizedDataset = serde_json::from_str(&s).unwrap();
        assert_eq!(ds, back);
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
    }

    proptest! {
        #[test]
        fn risk_ignores_the_gram_null_space(c in proptest::collection::vec(-2.0f64..2.0, 4), s in -3.0f64..3.0) {
            // four functionals in a two-dimensional RKHS leave a null space
            let spec = KernelSpec::Linear;
            let fs = vec![
                Functional::point([1.0, 0.0]),
                Functional::point([0.0, 1.0]),
                Functional::point([1.0, 1.0]),
                Functional::point([2.0, -1.0]),
            ];
            let g = gram(&spec, &fs).unwrap();
            let eig = g.clone().symmetric_eigen();
            let k = eig.eigenvalues.iamin();
            let null: DVector<f64> = eig.eigenvectors.column(k).into();
            let shifted: Vec<f64> = c.iter().zip(null.iter()).map(|(a, b)| a + s * b).collect();
            let ds = GeneralizedDataset::new(spec, vec![DataBlock::new(
                fs.clone(), vec![0.5, -1.0, 2.0, 0.0], Loss::new(LossKind::Absolute), 1.0)]).unwrap();
            let f = Solution::representer(spec, fs.clone(), c).unwrap();
            let h = Solution::representer(spec, fs, shifted).unwrap();
            let a = empirical_risk(&ds, &f).unwrap();
            let b = empirical_risk(&ds, &h).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn risk_is_lipschitz_in_predictions(
            c in proptest::collection::vec(-1.0f64..1.0, 3),
            d in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let spec = KernelSpec::Gaussian { theta: 1.0 };
            let fs: Vec<Functional> = [0.1, 0.5, 0.9].iter().map(|&x| Functional::point(x)).collect();
            let ds = GeneralizedDataset::new(spec, vec![
                DataBlock::new(fs[..2].to_vec(), vec![0.3, -0.2], Loss::new(LossKind::Square), 0.5),
                DataBlock::new(fs[2..].to_vec(), vec![1.0], Loss::new(LossKind::Hinge), 0.5),
            ]).unwrap();
            let g = gram(&spec, &fs).unwrap();
            let (cv, dv) = (DVector::from_vec(c.clone()), DVector::from_vec(d.clone()));
            let tc = &g * &cv;
            let td = &g * &dv;
            let theta = tc.amax().max(td.amax());
            let lip = ds.multiloss().unwrap().local_lipschitz(theta, &ds.outputs());
            let f = Solution::representer(spec, fs.clone(), c).unwrap();
            let h = Solution::representer(spec, fs, d).unwrap();
            let gap = (empirical_risk(&ds, &f).unwrap() - empirical_risk(&ds, &h).unwrap()).abs();
            prop_assert!(gap <= lip * (tc - td).amax() + 1e-12);
        }
    }
}
