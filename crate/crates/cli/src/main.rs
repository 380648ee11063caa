use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use genlearn::diagnostics::LambdaRule;
use genlearn::{Method, Regularizer, Solution, SolverConfig};
use genlearn_cli::experiment::resolved_config;
use genlearn_cli::{load_dataset, parse_json, read_file, render_svg, run, to_json, write_file};
use genlearn_cli::{CliError, ExperimentConfig, LogScale};

#[derive(Parser)]
#[command(name = "genlearn", version, about = "Regularized learning from generalized data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one dataset and print or write the solution JSON.
    Solve {
        dataset: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value = "tikhonov", value_parser = parse_method)]
        method: Method,
        /// quadratic, linear, or power:<p>
        #[arg(long, default_value = "quadratic", value_parser = parse_regularizer)]
        regularizer: Regularizer,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the experiment described by a config file.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run a built-in problem sequence.
    Example {
        name: String,
        /// Comma-separated stage sizes.
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<usize>>,
        /// Use lambda_n = n^(-exponent).
        #[arg(long)]
        exponent: Option<f64>,
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check the representer characterization of a solution.
    Verify {
        solution: PathBuf,
        dataset: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Draw CSV columns as an SVG line chart.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        x: String,
        /// Comma-separated column names.
        #[arg(long, value_delimiter = ',', required = true)]
        y: Vec<String>,
        /// Log scale on both axes.
        #[arg(long)]
        log: bool,
        #[arg(long)]
        log_x: bool,
        #[arg(long)]
        log_y: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| {
        format!("unknown method '{s}' (tikhonov, subgradient, prox_grad, douglas_rachford, feature_pnorm, model_class)")
    })
}

fn parse_regularizer(s: &str) -> Result<Regularizer, String> {
    let r = match s.split_once(':') {
        None if s == "quadratic" => Regularizer::Quadratic,
        None if s == "linear" => Regularizer::Linear,
        Some(("power", p)) => Regularizer::Power { p: p.parse().map_err(|_| format!("bad exponent '{p}'"))? },
        _ => return Err(format!("unknown regularizer '{s}' (quadratic, linear, power:<p>)")),
    };
    r.validate().map_err(|e| e.to_string())?;
    Ok(r)
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn summarize(bundle: &genlearn_cli::OutputBundle) {
    let v = &bundle.result.verdict;
    println!(
        "wrote {} ({} solutions); converging={} diverging={} failed_cells={}",
        bundle.dir.display(),
        bundle.solutions.len(),
        v.converging,
        v.diverging,
        v.failed_cells
    );
}

fn execute(cmd: Command) -> Result<ExitCode, CliError> {
    match cmd {
        Command::Solve { dataset, lambda, method, regularizer, tol, seed, out } => {
            let ds = load_dataset(&dataset)?;
            let mut cfg = SolverConfig::new(lambda, method).with_regularizer(regularizer);
            cfg.tol = tol;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let sol = genlearn::solve(&ds, &cfg)?;
            emit(out.as_ref(), &to_json(&sol))?;
        }
        Command::Sweep { config, workers } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            summarize(&run(&cfg)?);
        }
        Command::Example { name, ladder, exponent, method, seed, noise, workers, out } => {
            let mut cfg = ExperimentConfig::builtin(&name, out);
            cfg.ladder = ladder;
            cfg.noise = noise;
            cfg.workers = workers;
            cfg.seed = seed.unwrap_or(0);
            cfg.apply_env()?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(e) = exponent {
                cfg.lambda_rule = Some(LambdaRule::Power { exponent: e, scale: 1.0 });
            }
            if let Some(m) = method {
                let mut s = resolved_config(&cfg)?.solver.expect("resolved");
                s.method = m;
                cfg.solver = Some(s);
            }
            summarize(&run(&cfg)?);
        }
        Command::Verify { solution, dataset, tol } => {
            let sol: Solution = parse_json(&read_file(&solution)?, &solution)?;
            let ds = load_dataset(&dataset)?;
            let report = genlearn::verify_representer(&ds, &sol, tol)?;
            print!("{}", to_json(&report));
            if !report.passed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Plot { csv, x, y, log, log_x, log_y, out } => {
            let text = read_file(&csv)?;
            let scale = LogScale { x: log || log_x, y: log || log_y };
            let (svg, skipped) = render_svg(&text, &x, &y, scale)?;
            if skipped > 0 {
                eprintln!("warning: skipped {skipped} row(s) with nonpositive values on a log axis");
            }
            emit(out.as_ref(), &svg)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
