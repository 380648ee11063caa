//! Experiment configs and output bundles.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use genlearn::diagnostics::{convergence_sweep_with_workers, sweep_csv, LambdaRule, ProblemSequence, SweepResult};
use genlearn::{DataBlock, GeneralizedDataset, Loss, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::builtins::{self, Builtin, Options};
use crate::plot::{render_svg, LogScale};
use crate::{load_dataset, to_json, write_file, CliError};

pub const SEED_ENV: &str = "GENLEARN_SEED";

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Name of a built-in problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    /// Dataset JSON whose prefixes form the stages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_rule: Option<LambdaRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Noise scale for problems with noisy outputs (bound `noise / n`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default = "yes")]
    pub charts: bool,
}

impl ExperimentConfig {
    pub fn builtin(name: &str, output: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            problem: Some(name.to_string()),
            dataset: None,
            ladder: None,
            lambda_rule: None,
            solver: None,
            output: output.into(),
            seed: 0,
            noise: None,
            workers: 1,
            charts: true,
        }
    }

    /// Reads a config file; relative dataset and output paths resolve against
    /// the file's directory and `GENLEARN_SEED` overrides the seed.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let mut cfg: ExperimentConfig = crate::parse_json(&crate::read_file(path)?, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(d) = &cfg.dataset {
            if d.is_relative() {
                cfg.dataset = Some(base.join(d));
            }
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<(), CliError> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.seed = s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV} must be an unsigned integer, got '{s}'")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.problem, &self.dataset) {
            (Some(_), Some(_)) => return Err(CliError::Config("set either 'problem' or 'dataset', not both".into())),
            (None, None) => return Err(CliError::Config("one of 'problem' or 'dataset' is required".into())),
            _ => {}
        }
        if let Some(l) = &self.ladder {
            if l.is_empty() {
                return Err(CliError::Config("ladder must be nonempty".into()));
            }
        }
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if let Some(z) = self.noise {
            if !(z >= 0.0 && z.is_finite()) {
                return Err(CliError::Config(format!("noise must be nonnegative, got {z}")));
            }
        }
        Ok(())
    }
}

/// Paths written by [`run`] together with the sweep itself.
#[derive(Debug)]
pub struct OutputBundle {
    pub dir: PathBuf,
    pub solutions: Vec<PathBuf>,
    pub sweep_csv: PathBuf,
    pub verdict: PathBuf,
    pub config: PathBuf,
    pub charts: Vec<PathBuf>,
    pub result: SweepResult,
}

/// The first `n` samples, taken block by block.
pub fn prefix(ds: &GeneralizedDataset, n: usize) -> Result<GeneralizedDataset, genlearn::Error> {
    let mut left = n;
    let mut blocks = Vec::new();
    for b in &ds.blocks {
        if left == 0 {
            break;
        }
        let k = left.min(b.y.len());
        left -= k;
        let loss = Loss { kind: b.loss.kind, weights: b.loss.weights.as_ref().map(|w| w[..k].to_vec()) };
        blocks.push(DataBlock::new(b.functionals[..k].to_vec(), b.y[..k].to_vec(), loss, b.rho));
    }
    GeneralizedDataset::new(ds.kernel, blocks)
}

struct Resolved {
    sequence: ProblemSequence,
    rule: LambdaRule,
    solver: SolverConfig,
}

fn resolve(cfg: &ExperimentConfig) -> Result<Resolved, CliError> {
    cfg.validate()?;
    let (mut sequence, rule, mut solver) = if let Some(name) = &cfg.problem {
        let b: Builtin = name.parse()?;
        let opts = Options { seed: cfg.seed, noise: cfg.noise.unwrap_or(Options::default().noise) };
        let s = builtins::build(b, opts);
        (s.sequence, s.lambda_rule, s.solver)
    } else {
        let path = cfg.dataset.as_ref().expect("validated");
        let ds = Arc::new(load_dataset(path)?);
        let len = ds.len();
        if len < 3 {
            return Err(CliError::Config(format!("dataset has {len} samples; a sweep needs at least 3")));
        }
        let mut ladder = vec![len.div_ceil(4), len.div_ceil(2), len];
        ladder.dedup();
        let dim = ds.dim();
        let gen = {
            let ds = Arc::clone(&ds);
            Arc::new(move |n: usize| prefix(&ds, n))
        };
        let seq = ProblemSequence { ladder, ..ProblemSequence::new(Vec::new(), dim, gen) };
        let rule = LambdaRule::Power { exponent: 0.5, scale: 1.0 };
        (seq, rule, SolverConfig::new(1.0, genlearn::Method::Tikhonov))
    };
    if let Some(l) = &cfg.ladder {
        sequence.ladder = l.clone();
    }
    if cfg.dataset.is_some() {
        let len = sequence.dataset(usize::MAX).map(|d| d.len()).unwrap_or(0);
        if let Some(&bad) = sequence.ladder.iter().find(|&&n| n == 0 || n > len) {
            return Err(CliError::Config(format!("ladder entry {bad} outside 1..={len}")));
        }
    }
    if let Some(s) = &cfg.solver {
        solver = s.clone();
    }
    solver.seed = cfg.seed;
    let rule = cfg.lambda_rule.clone().unwrap_or(rule);
    solver.validate()?;
    sequence.validate()?;
    Ok(Resolved { sequence, rule, solver })
}

/// The config as it was run: defaults filled in, seed applied.
pub fn resolved_config(cfg: &ExperimentConfig) -> Result<ExperimentConfig, CliError> {
    let r = resolve(cfg)?;
    Ok(ExperimentConfig {
        ladder: Some(r.sequence.ladder),
        lambda_rule: Some(r.rule),
        solver: Some(r.solver),
        ..cfg.clone()
    })
}

fn create_dir(p: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
}

/// Runs the sweep and writes the bundle into `cfg.output`.
pub fn run(cfg: &ExperimentConfig) -> Result<OutputBundle, CliError> {
    let Resolved { sequence, rule, solver } = resolve(cfg)?;
    let result = convergence_sweep_with_workers(&sequence, &rule, &solver, cfg.workers)?;

    let dir = cfg.output.clone();
    let sol_dir = dir.join("solutions");
    create_dir(&sol_dir)?;
    let mut solutions = Vec::new();
    for (i, (rec, sol)) in result.records.iter().zip(&result.solutions).enumerate() {
        if let Some(sol) = sol {
            let p = sol_dir.join(format!("solution_{i:03}_n{}.json", rec.n));
            write_file(&p, to_json(sol))?;
            solutions.push(p);
        }
    }
    let csv = sweep_csv(&result.records, true);
    let sweep_path = dir.join("sweep.csv");
    write_file(&sweep_path, &csv)?;
    let verdict = dir.join("verdict.json");
    write_file(&verdict, to_json(&result.verdict))?;
    let config = dir.join("config.json");
    let used = ExperimentConfig {
        ladder: Some(sequence.ladder.clone()),
        lambda_rule: Some(rule),
        solver: Some(solver),
        ..cfg.clone()
    };
    write_file(&config, to_json(&used))?;

    let mut charts = Vec::new();
    if cfg.charts {
        for (name, col) in [("gap.svg", "weakstar_gap"), ("norm.svg", "norm")] {
            let (svg, skipped) = render_svg(&csv, "n", &[col.to_string()], LogScale { x: true, y: true })?;
            if skipped > 0 {
                eprintln!("warning: {name}: skipped {skipped} row(s) not plottable on log axes");
            }
            let p = dir.join(name);
            write_file(&p, svg)?;
            charts.push(p);
        }
    }
    Ok(OutputBundle { dir, solutions, sweep_csv: sweep_path, verdict, config, charts, result })
}
