use genlearn::diagnostics::{convergence_sweep, LambdaRule, ProblemSequence};
use genlearn::kernel::default_nodes;
use genlearn::{
    empirical_risk, nystrom_features, solve, solve_model_class, solve_tikhonov, verify_representer, DataBlock,
    Functional, FunctionalEval, GeneralizedDataset, KernelSpec, Loss, LossKind, Method, ModelClass, Point, Solution,
    SolverConfig,
};
use std::sync::Arc;

fn square_data(xs: &[f64], f: impl Fn(f64) -> f64) -> GeneralizedDataset {
    let fs = xs.iter().map(|&x| Functional::point(x)).collect();
    let y = xs.iter().map(|&x| f(x)).collect();
    GeneralizedDataset::new(
        KernelSpec::Gaussian { theta: 3.0 },
        vec![DataBlock::new(fs, y, Loss::new(LossKind::Square), 1.0)],
    )
    .unwrap()
}

fn same_values(a: &Solution, b: &Solution) {
    for k in 0..=10 {
        let x = Point::from(k as f64 / 10.0);
        assert_eq!(a.eval(&x).unwrap(), b.eval(&x).unwrap());
    }
}

#[test]
fn solutions_survive_json() {
    let ds = square_data(&[0.1, 0.5, 0.9], |x| x * x);
    let mut sols = vec![solve_tikhonov(&ds, 0.1).unwrap()];
    let fm = nystrom_features(&ds.kernel, &default_nodes(1), 4).unwrap();
    sols.push(Solution::feature(fm, vec![0.1, -0.2, 0.3, 0.0], 1.5).unwrap());
    let mut cfg = SolverConfig::new(0.1, Method::ModelClass);
    cfg.max_iter = 200;
    sols.push(solve_model_class(&ds, &cfg, &ModelClass::single_layer(1, 3), None).unwrap());
    for s in sols {
        let back: Solution = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        same_values(&back, &s);
    }
}

#[test]
fn iterative_methods_agree_with_the_closed_form() {
    let ds = square_data(&[0.05, 0.3, 0.55, 0.8], |x| (3.0 * x).sin());
    let lambda = 0.02;
    let exact = solve_tikhonov(&ds, lambda).unwrap().objective.unwrap();
    for m in [Method::Subgradient, Method::ProxGrad, Method::DouglasRachford] {
        let mut cfg = SolverConfig::new(lambda, m);
        cfg.tol = 1e-10;
        let f = solve(&ds, &cfg).unwrap();
        let obj = f.objective.unwrap();
        assert!((obj - exact).abs() <= 1e-6 * (1.0 + exact), "{m:?}: {obj} vs {exact}");
        assert!(verify_representer(&ds, &f, 1e-8).unwrap().passed);
    }
}

#[test]
fn collocation_recovers_a_harmonic_free_target() {
    // f0(x, y) = x y (1 - x)(1 - y); Laplacian -2 (y (1 - y) + x (1 - x))
    let f0 = |p: &Point| {
        let (x, y) = (p.0[0], p.0[1]);
        x * y * (1.0 - x) * (1.0 - y)
    };
    let lap = |p: &Point| {
        let (x, y) = (p.0[0], p.0[1]);
        -2.0 * (y * (1.0 - y) + x * (1.0 - x))
    };
    let per = 5;
    let interior: Vec<Point> = (1..per)
        .flat_map(|i| (1..per).map(move |j| Point::from([i as f64 / per as f64, j as f64 / per as f64])))
        .collect();
    let boundary: Vec<Point> = (0..16)
        .map(|k| {
            let s = k as f64 / 4.0;
            match k / 4 {
                0 => Point::from([s, 0.0]),
                1 => Point::from([1.0, s - 1.0]),
                2 => Point::from([3.0 - s, 1.0]),
                _ => Point::from([0.0, 4.0 - s]),
            }
        })
        .collect();
    let sq = || Loss::new(LossKind::Square);
    let ds = GeneralizedDataset::new(
        KernelSpec::Sobolev { theta: 2.0, j: 4 },
        vec![
            DataBlock::new(
                interior.iter().cloned().map(Functional::laplacian).collect(),
                interior.iter().map(lap).collect(),
                sq(),
                1.0,
            ),
            DataBlock::new(
                boundary.iter().cloned().map(Functional::point).collect(),
                boundary.iter().map(f0).collect(),
                sq(),
                1.0,
            ),
        ],
    )
    .unwrap();
    let f = solve_tikhonov(&ds, 1e-9).unwrap();
    assert!(empirical_risk(&ds, &f).unwrap() < 1e-6);
    let mid = Point::from([0.5, 0.5]);
    assert!((f.eval(&mid).unwrap() - f0(&mid)).abs() < 5e-3, "{}", f.eval(&mid).unwrap());
}

#[test]
fn sweep_records_follow_the_schedule() {
    let seq = ProblemSequence::new(
        vec![4, 8, 16],
        1,
        Arc::new(|n| {
            let xs: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect();
            Ok(square_data(&xs, |x| (2.0 * x).cos()))
        }),
    );
    let rule = LambdaRule::Power { exponent: 1.0, scale: 0.5 };
    let res = convergence_sweep(&seq, &rule, &SolverConfig::new(1.0, Method::Tikhonov)).unwrap();
    for r in &res.records {
        assert_eq!(r.lambda, 0.5 / r.n as f64);
        assert!(r.converged && r.error.is_none());
    }
    assert!(res.verdict.self_referenced);
    let last = res.solutions.last().unwrap().as_ref().unwrap();
    assert!(last.apply(&Functional::point(0.25)).unwrap().is_finite());
}
