//! Command-line driver: `generate`, `train`, `eval` and `curves`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiment::{
    curves_csv, eval_table, format_table, run_training, BoundsChoice, ExperimentConfig,
};
use crate::params::{Bounds, NoiseParams};
use crate::report::{Method, TrainReport, TrainStatus};
use crate::synth::{make_dataset, Dataset, DatasetSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;

pub const THREADS_ENV: &str = "COVLEARN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "covlearn", version, about = "Learn pose-graph noise covariances")]
pub struct Cli {
    /// Worker threads (overridden by COVLEARN_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic navigation dataset from a spec file.
    Generate(GenerateArgs),
    /// Learn noise parameters on the training split.
    Train(TrainArgs),
    /// Test-split RMSE for the initial and learned parameters.
    Eval(EvalArgs),
    /// Merge training reports into long-format curve data (CSV).
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// ours, nelder-mead or powell.
    #[arg(long, default_value = "ours")]
    pub method: String,
    /// tight, loose or a bounds file.
    #[arg(long, default_value = "tight")]
    pub bounds: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Training reports; the first one's starting point is the "Initial" column.
    #[arg(long = "report")]
    pub reports: Vec<PathBuf>,
    /// Parameter file(s) mapping class names to three variances.
    #[arg(long = "theta")]
    pub thetas: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the table here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[arg(long = "report")]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Domain(_) => EXIT_CONFIG,
        Error::Structure(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => EXIT_DATA,
        Error::Convergence(_) | Error::NotPositiveDefinite { .. } => EXIT_CONVERGENCE,
    }
}

/// `COVLEARN_THREADS` wins over `--threads`.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>) -> Result<Option<usize>> {
    match env.map(str::trim).filter(|s| !s.is_empty()) {
        Some(s) => match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {s:?}"))),
        },
        None if flag == Some(0) => Err(Error::Config("--threads must be positive".into())),
        None => Ok(flag),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_json(&read(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

pub fn parse_bounds(arg: &str) -> Result<BoundsChoice> {
    match arg {
        "tight" => Ok(BoundsChoice::Tight),
        "loose" => Ok(BoundsChoice::Loose),
        path => {
            let text = read(Path::new(path))?;
            let b: Bounds =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("bounds file {path}: {e}")))?;
            Ok(BoundsChoice::Custom(b))
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<String> {
    let mut spec = DatasetSpec::from_json(&read(&args.spec)?)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let text = make_dataset(&spec)?.to_json()?;
    write(&args.out, &text)?;
    Ok(format!("{} sha256:{}", args.out.display(), sha256_hex(text.as_bytes())))
}

pub fn cmd_train(args: &TrainArgs) -> Result<(String, TrainStatus)> {
    let method: Method = args.method.parse()?;
    let choice = parse_bounds(&args.bounds)?;
    let config = load_config(args.config.as_deref())?;
    let dataset = Dataset::from_json(&read(&args.dataset)?)?;
    let report = run_training(&dataset, method, &choice, &config)?;
    write(&args.out, &report.to_json()?)?;
    let best = report.best_loss().unwrap_or(f64::NAN);
    let summary = format!(
        "{} {} {:?}: {} iterations, best loss {best:.6e} at {}, spread {:.1}",
        report.run_id,
        report.method,
        report.status,
        report.iterations.len(),
        report.best_iteration,
        report.spread_star
    );
    Ok((summary, report.status))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<String> {
    if args.reports.is_empty() && args.thetas.is_empty() {
        return Err(Error::Config("eval needs at least one --report or --theta".into()));
    }
    let dataset = Dataset::from_json(&read(&args.dataset)?)?;
    let config = load_config(args.config.as_deref())?;
    let mut columns: Vec<(String, NoiseParams)> = Vec::new();
    for (i, path) in args.reports.iter().enumerate() {
        let report = TrainReport::from_json(&read(path)?)?;
        if i == 0 {
            columns.push(("Initial".to_string(), report.theta0.clone()));
        }
        columns.push((report.method.to_string(), report.theta_star));
    }
    for path in &args.thetas {
        let theta: NoiseParams = serde_json::from_str(&read(path)?)
            .map_err(|e| Error::Config(format!("theta file {}: {e}", path.display())))?;
        let label = path.file_stem().map_or("theta".into(), |s| s.to_string_lossy().into_owned());
        columns.push((label, theta));
    }
    let rows = eval_table(&dataset, &columns, &config.solver)?;
    let table = format_table(&dataset.spec.id.to_string(), &rows);
    if let Some(out) = &args.out {
        write(out, &table)?;
    }
    Ok(table)
}

pub fn cmd_curves(args: &CurvesArgs) -> Result<String> {
    let reports = args
        .reports
        .iter()
        .map(|p| TrainReport::from_json(&read(p)?))
        .collect::<Result<Vec<_>>>()?;
    let csv = curves_csv(&reports)?;
    write(&args.out, &csv)?;
    Ok(format!("{} ({} rows)", args.out.display(), csv.lines().count() - 1))
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let env = std::env::var(THREADS_ENV).ok();
    match resolve_threads(cli.threads, env.as_deref()) {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("thread pool already initialised: {e}");
            }
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    }

    let outcome = match &cli.command {
        Command::Generate(a) => cmd_generate(a).map(|s| (s, EXIT_OK)),
        Command::Train(a) => cmd_train(a).map(|(s, status)| {
            let code = if status == TrainStatus::Aborted { EXIT_CONVERGENCE } else { EXIT_OK };
            (s, code)
        }),
        Command::Eval(a) => cmd_eval(a).map(|s| (s, EXIT_OK)),
        Command::Curves(a) => cmd_curves(a).map(|s| (s, EXIT_OK)),
    };
    match outcome {
        Ok((msg, code)) => {
            print!("{msg}");
            if !msg.ends_with('\n') {
                println!();
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_flag() {
        assert_eq!(resolve_threads(Some(4), Some("2")).unwrap(), Some(2));
        assert_eq!(resolve_threads(Some(4), None).unwrap(), Some(4));
        assert_eq!(resolve_threads(None, Some(" ")).unwrap(), None);
        assert!(resolve_threads(None, Some("zero")).is_err());
        assert!(resolve_threads(Some(0), None).is_err());
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            exit_code(&Error::Config(String::new())),
            exit_code(&Error::Structure(String::new())),
            exit_code(&Error::Convergence(String::new())),
        ];
        assert_eq!(codes, [EXIT_CONFIG, EXIT_DATA, EXIT_CONVERGENCE]);
    }

    #[test]
    fn checksum_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn named_bounds() {
        assert_eq!(parse_bounds("tight").unwrap(), BoundsChoice::Tight);
        assert_eq!(parse_bounds("loose").unwrap(), BoundsChoice::Loose);
        assert!(matches!(parse_bounds("/nonexistent/bounds.json"), Err(Error::Io(_))));
    }
}
