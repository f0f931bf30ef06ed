use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sepset_bandit::harness::{
    build_environments, discovery_bench, emit_plot, first_separating_set, read_agg_csv, variance_report,
    write_diagnostics_csv, write_discovery_bench_csv, write_outputs, DiscoveryBenchConfig,
};
use sepset_bandit::{run_experiment, EnvSpec, ExperimentConfig, HarnessError, PolicyConfig};

#[derive(Parser)]
#[command(name = "sepset", version, about = "Causal bandit experiments with separating-set information sharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replicated bandit experiments and write CSV and SVG outputs.
    Run(RunArgs),
    /// Score separating-set discovery on uniformly sampled data.
    DiscoverBench(BenchArgs),
    /// Render an agg.csv file as an SVG regret plot.
    Plot(PlotArgs),
    /// Variance diagnostics of one separating set under a fixed allocation.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Key-value config file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// game, dag4, dag6 or file:PATH
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated policy specs, e.g. `ucb,is_ucb:direct_test`.
    #[arg(long, value_delimiter = ',')]
    policies: Vec<String>,
    /// Probability that a 6-node graph node gets two parents.
    #[arg(long)]
    two_parent_prob: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-round index logs (rounds.csv).
    #[arg(long)]
    round_logs: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "game")]
    env: String,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated cumulative sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "250,500,1000,2000,4000")]
    sizes: Vec<usize>,
    #[arg(long)]
    max_size: Option<usize>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// agg.csv produced by `run`.
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "cumulative regret")]
    title: String,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long, default_value = "game")]
    env: String,
    /// Node names, comma-separated; defaults to the first true separating set.
    #[arg(long)]
    set: Option<String>,
    #[arg(long, default_value_t = 20)]
    per_arm: usize,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, HarnessError> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn run(args: RunArgs) -> Result<(), HarnessError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_kv(&fs::read_to_string(path)?)?,
        None => ExperimentConfig::new(EnvSpec::Game, Vec::new()),
    };
    if let Some(env) = &args.env {
        let spec: EnvSpec = env.parse()?;
        if args.config.is_none() || spec != cfg.env {
            cfg.horizon = spec.default_horizon();
            if cfg.name == cfg.env.label() {
                cfg.name = spec.label();
            }
            cfg.env = spec;
        }
    }
    if let Some(p) = args.two_parent_prob {
        match &mut cfg.env {
            EnvSpec::Dag6 { two_parent_prob } => *two_parent_prob = p,
            _ => return Err(HarnessError::Config("--two-parent-prob applies to dag6 only".into())),
        }
    }
    if !args.policies.is_empty() {
        cfg.policies = args
            .policies
            .iter()
            .map(|s| {
                let mut p = PolicyConfig::parse(s.trim())?;
                p.initial_pulls_per_arm = cfg.env.default_initial_pulls();
                Ok(p)
            })
            .collect::<Result<_, HarnessError>>()?;
    }
    if cfg.policies.is_empty() {
        cfg.policies = ["ucb", "ts", "is_ucb:direct_test", "is_ts:direct_test"]
            .iter()
            .map(|s| {
                let mut p = PolicyConfig::parse(s).expect("built-in policy specs");
                p.initial_pulls_per_arm = cfg.env.default_initial_pulls();
                p
            })
            .collect();
    }
    cfg.horizon = args.horizon.unwrap_or(cfg.horizon);
    cfg.runs = args.runs.unwrap_or(cfg.runs);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.round_logs |= args.round_logs;
    if args.out.is_some() {
        cfg.out_dir = args.out;
    }
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let result = run_experiment(&cfg)?;
    write_outputs(&result, &out)?;
    for (p, agg) in cfg.policies.iter().zip(result.aggregates()) {
        let mean = agg.mean.last().copied().unwrap_or(0.0);
        match agg.stderr.as_ref().and_then(|s| s.last()) {
            Some(se) => eprintln!("{:>24}  regret {mean:.2} ± {se:.2}", p.name),
            None => eprintln!("{:>24}  regret {mean:.2}", p.name),
        }
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), HarnessError> {
    let cfg = DiscoveryBenchConfig {
        env: args.env.parse()?,
        runs: args.runs,
        seed: args.seed,
        sample_sizes: args.sizes,
        max_size: args.max_size,
    };
    let rows = discovery_bench(&cfg)?;
    write_discovery_bench_csv(&rows, output(args.out.as_deref())?)
}

fn plot(args: PlotArgs) -> Result<(), HarnessError> {
    let series = read_agg_csv(File::open(&args.input)?)?;
    emit_plot(&series, &args.title, &args.out)
}

fn diagnose(args: DiagnoseArgs) -> Result<(), HarnessError> {
    let spec: EnvSpec = args.env.parse()?;
    let env = build_environments(&spec, 1, args.seed)?.swap_remove(0);
    let graph = env.scm.graph();
    let set = match &args.set {
        Some(text) => graph.parse_set(text).map_err(|e| HarnessError::Config(e.to_string()))?,
        None => first_separating_set(&env)
            .ok_or_else(|| HarnessError::Config("graph has no separating set; pass --set".into()))?,
    };
    eprintln!("set {}", graph.format_set(&set));
    let rows = variance_report(&env, &set, args.per_arm, args.reps, args.seed)?;
    write_diagnostics_csv(&rows, output(args.out.as_deref())?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::DiscoverBench(a) => bench(a),
        Command::Plot(a) => plot(a),
        Command::Diagnose(a) => diagnose(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
