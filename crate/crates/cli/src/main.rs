use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ncidirac::exec::{set_mode, ExecMode};
use ncidirac::model::{Model, ModelError};
use ncidirac::verify::{render_text, verify_model, Options, Report, Suite};

#[derive(Parser)]
#[command(name = "ncidirac", version, about = "Verify Dirac operators on homogeneous spaces described by JSON model files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and schema-check model files.
    Validate {
        /// Model files (defaults to the bundled models).
        models: Vec<PathBuf>,
    },
    /// Run verification suites; exit 1 when a check fails.
    Verify(RunArgs),
    /// Run verification suites and write the full report; exit 0 unless a model is invalid.
    Report(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct RunArgs {
    /// Model files (defaults to the bundled models).
    models: Vec<PathBuf>,
    /// Suites, comma separated: algebra, geometry, clifford, dirac, lambda, solutions or all.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Sample points per check (overrides the model).
    #[arg(long)]
    points: Option<usize>,
    /// Multiplies every upper tolerance and divides every lower bound.
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Jet order for polynomial symmetry checks (overrides the model).
    #[arg(long)]
    jet_order: Option<usize>,
    /// Report zero wall times so runs are byte-identical.
    #[arg(long)]
    no_timings: bool,
    /// Run on one thread without the parallel pool.
    #[arg(long)]
    sequential: bool,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn default_models() -> Vec<PathBuf> {
    let local = Path::new("models");
    let base = if local.join("five_dim.json").exists() { local.to_path_buf() } else { Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models") };
    vec![base.join("five_dim.json"), base.join("ads3.json")]
}

fn parse_suites(text: &str) -> Result<Vec<Suite>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        out.extend(Suite::parse(part).ok_or_else(|| format!("unknown suite `{part}`"))?);
    }
    if out.is_empty() {
        return Err("no suite selected".into());
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<Model>, (PathBuf, ModelError)> {
    paths.iter().map(|p| Model::load(p).map_err(|e| (p.clone(), e))).collect()
}

fn emit(out: &Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn render(reports: &[Report], format: Format) -> String {
    match format {
        Format::Json => {
            let passed: usize = reports.iter().map(|r| r.passed).sum();
            let failed: usize = reports.iter().map(|r| r.failed).sum();
            let v = serde_json::json!({ "reports": reports, "passed": passed, "failed": failed });
            serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
        }
        Format::Text => reports.iter().map(render_text).collect::<Vec<_>>().join("\n"),
    }
}

fn run(args: RunArgs, strict: bool, default_format: Format) -> anyhow::Result<ExitCode> {
    let suites = match parse_suites(&args.suite) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(2));
        }
    };
    if !(args.tolerance_scale > 0.0 && args.tolerance_scale.is_finite()) {
        eprintln!("error: --tolerance-scale must be positive");
        return Ok(ExitCode::from(2));
    }
    if args.sequential {
        set_mode(ExecMode::Sequential);
    }
    let paths = if args.models.is_empty() { default_models() } else { args.models.clone() };
    let models = match load_all(&paths) {
        Ok(m) => m,
        Err((p, e)) => {
            eprintln!("{}: {e}", p.display());
            return Ok(ExitCode::from(2));
        }
    };
    let opts = Options { seed: args.seed, points: args.points, tolerance_scale: args.tolerance_scale, jet_order: args.jet_order, suites, timings: !args.no_timings };
    let mut reports = Vec::new();
    for (m, p) in models.iter().zip(&paths) {
        match verify_model(m, &opts) {
            Ok(r) => reports.push(r),
            Err(e) => {
                eprintln!("{}: {e}", p.display());
                return Ok(ExitCode::from(2));
            }
        }
    }
    emit(&args.output, &render(&reports, args.format.unwrap_or(default_format)))?;
    let ok = reports.iter().all(Report::ok);
    Ok(if ok || !strict { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Validate { models } => {
            let paths = if models.is_empty() { default_models() } else { models };
            let mut code = ExitCode::SUCCESS;
            for p in &paths {
                match Model::load(p) {
                    Ok(m) => println!("{}: ok ({}, dim {}, spinor dim {})", p.display(), m.file.name, m.dim(), m.spinor_dim()),
                    Err(e) => {
                        eprintln!("{}: {e}", p.display());
                        code = ExitCode::from(2);
                    }
                }
            }
            Ok(code)
        }
        Command::Verify(a) => run(a, true, Format::Text),
        Command::Report(a) => run(a, false, Format::Json),
    };
    match res {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
