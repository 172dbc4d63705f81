use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use edgelift::analysis::{analyze_edges, calibrate, CalibrationConfig};
use edgelift::ingest::{
    parse_edge_file, resolve_group_sizes, write_edges, Delimiter, ExperimentConfig, HeaderMode,
    ParseOptions,
};
use edgelift::permutation::{write_null_csv, PermutationEngine, PermutationMode, PermutationPlan};
use edgelift::report::{render_report, Format};
use edgelift::simulator::{simulate, SimulationParams, DEFAULT_MAX_CHAIN_DEPTH};
use edgelift::{Error, Normalization, Result, Statistic};

/// Network-corrected treatment effects for messaging experiments.
#[derive(Parser)]
#[command(name = "edgelift", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze an edge file and print a report.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic experiment with known ground truth.
    Simulate(SimulateArgs),
    /// Measure permutation false-positive rates on placebo simulations.
    Calibrate(CalibrateArgs),
    /// Write permutation null values as CSV.
    DumpNull(DumpNullArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Edge file: src,dest,msg,srcT,destT (comma or tab separated).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Delimiter::Auto)]
    delimiter: Delimiter,
    #[arg(long, value_enum, default_value_t = HeaderMode::Auto)]
    header: HeaderMode,
    /// Drop self-loops instead of rejecting the file.
    #[arg(long)]
    drop_self_loops: bool,
}

impl InputArgs {
    fn options(&self) -> ParseOptions {
        ParseOptions {
            delimiter: self.delimiter,
            header: self.header,
            drop_self_loops: self.drop_self_loops,
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    /// Treatment probability of the design.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Treated group size, including members absent from the edges.
    #[arg(long, requires = "n_control")]
    n_treated: Option<u64>,
    #[arg(long, requires = "n_treated")]
    n_control: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    iterations: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = PermutationMode::Full)]
    mode: PermutationMode,
    #[arg(long, default_value_t = 0.90)]
    ci_level: f64,
    #[arg(long, value_enum, default_value_t = Normalization::Realized)]
    normalization: Normalization,
    /// Days covered by the data; short windows trigger a warning.
    #[arg(long)]
    window_days: Option<u32>,
}

impl ExperimentArgs {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            p: self.p,
            n_treated: self.n_treated,
            n_control: self.n_control,
            seed: self.seed,
            iterations: self.iterations,
            ci_level: self.ci_level,
            permutation_mode: self.mode,
            normalization: self.normalization,
            window_days: self.window_days,
            ..ExperimentConfig::default()
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_depth(s: &str) -> std::result::Result<Option<u32>, String> {
    if s == "none" {
        return Ok(None);
    }
    match s.parse::<u32>() {
        Ok(0) | Err(_) => Err(format!("expected a positive integer or `none`, got `{s}`")),
        Ok(d) => Ok(Some(d)),
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    n: u32,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Baseline messages per ordered pair.
    #[arg(long, default_value_t = 0.02)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    q1: f64,
    #[arg(long, default_value_t = 0.1)]
    q2: f64,
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    #[arg(long)]
    perfect_affinity: bool,
    /// Reply chain cap, or `none` for unbounded chains.
    #[arg(long, default_value_t = DEFAULT_MAX_CHAIN_DEPTH.to_string())]
    max_depth: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Edge file to write.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth JSON; defaults to the edge path with `.truth.json` appended.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 200)]
    replicates: u32,
    #[arg(long, default_value_t = 2000)]
    n: u32,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 0.02)]
    lambda: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: u32,
    /// Nominal test level.
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Normalization::Realized)]
    normalization: Normalization,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpNullArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Statistics to dump; all of them when omitted.
    #[arg(long = "statistic", value_enum)]
    statistics: Vec<Statistic>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| {
            Error::Io {
                path: p.to_path_buf(),
                source,
            }
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    let mut out = open_output(path)?;
    out.write_all(text.as_bytes()).map_err(Error::Write)?;
    out.flush().map_err(Error::Write)
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let config = args.experiment.config();
    config.validate()?;
    let parsed = parse_edge_file(&args.input.input, args.input.options())?;
    let report = analyze_edges(&config, parsed)?;
    emit(args.out.as_deref(), &render_report(&report, args.format)?)
}

fn run_simulation(args: SimulateArgs) -> Result<()> {
    let params = SimulationParams {
        n: args.n,
        p: args.p,
        lambda: args.lambda,
        q1: args.q1,
        q2: args.q2,
        alpha: args.alpha,
        max_chain_depth: parse_depth(&args.max_depth).map_err(Error::InvalidParams)?,
        seed: args.seed,
        perfect_affinity: args.perfect_affinity,
    };
    let (edges, truth) = simulate(&params)?;
    write_edges(open_output(Some(&args.out))?, &edges)?;
    let truth_path = args.truth.unwrap_or_else(|| {
        let mut name = args.out.clone().into_os_string();
        name.push(".truth.json");
        PathBuf::from(name)
    });
    let sidecar = serde_json::json!({ "params": params, "truth": truth });
    emit(
        Some(&truth_path),
        &(serde_json::to_string_pretty(&sidecar)? + "\n"),
    )
}

fn run_calibration(args: CalibrateArgs) -> Result<()> {
    let config = CalibrationConfig {
        replicates: args.replicates,
        n: args.n,
        p: args.p,
        lambda: args.lambda,
        iterations: args.iterations,
        level: args.level,
        seed: args.seed,
        normalization: args.normalization,
    };
    let report = calibrate(&config)?;
    let text = match args.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Text => {
            let mut s = format!(
                "placebo calibration: {} replicates, n = {}, p = {}, {} iterations, level {}\n",
                config.replicates, config.n, config.p, config.iterations, config.level
            );
            for o in &report.outcomes {
                s += &format!(
                    "{:<16} rejections {}/{} ({:.1}%)  rank KS distance {:.4}\n",
                    o.statistic.name(),
                    o.rejections,
                    o.tested,
                    o.false_positive_rate * 100.0,
                    o.rank_ks_distance
                );
            }
            s
        }
    };
    emit(args.out.as_deref(), &text)
}

fn dump_null(args: DumpNullArgs) -> Result<()> {
    let config = args.experiment.config();
    config.validate()?;
    let parsed = parse_edge_file(&args.input.input, args.input.options())?;
    let sizes = resolve_group_sizes(&parsed.edges, &config)?.sizes;
    let plan = PermutationPlan {
        mode: config.permutation_mode,
        iterations: config.iterations,
        seed: config.seed,
        p: config.p,
        ci_level: config.ci_level,
    };
    let engine = PermutationEngine::new(&parsed.edges, sizes, plan)?;
    let stats = if args.statistics.is_empty() {
        Statistic::ALL.to_vec()
    } else {
        args.statistics
    };
    let results = engine
        .run(&stats, config.normalization)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    write_null_csv(open_output(args.out.as_deref())?, &results)
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => run_simulation(a),
        Command::Calibrate(a) => run_calibration(a),
        Command::DumpNull(a) => dump_null(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("edgelift: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
