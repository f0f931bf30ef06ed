//! Experiment runner: builds environments, runs every (run, policy) pair in
//! parallel on its own random streams, and writes regret traces, discovery
//! scores and plots.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{Dataset, Schema};
use crate::discovery::{discover, score_discovery, DiscoveryMetrics, SepSetCatalog};
use crate::graph::NodeId;
use crate::inference::{variance_diagnostics, DiagnosticsError};
use crate::policies::{default_max_sepset_size, Policy, PolicyConfig, PolicyError, RoundLog, WidthKind};
use crate::scm::{enumerate_4node_suite, make_6node_env_with, make_game_env, random_parametrization, DiscreteScm, Environment, ScmError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("run failed: {0}")]
    Run(String),
}

impl HarnessError {
    /// Process exit code: 2 for configuration errors, 3 for I/O errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io(_) => 3,
            Self::Run(_) => 1,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<ScmError> for HarnessError {
    fn from(e: ScmError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<PolicyError> for HarnessError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::Config(msg) => Self::Config(msg),
            other => Self::Run(other.to_string()),
        }
    }
}

impl From<DiagnosticsError> for HarnessError {
    fn from(e: DiagnosticsError) -> Self {
        Self::Run(e.to_string())
    }
}

/// What a random stream is used for; part of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Environment = 0,
    Outcomes = 1,
    Policy = 2,
    GraphOrder = 3,
}

/// Independent stream for `(seed, run, policy, purpose)`; independent of
/// scheduling order.
pub fn stream(seed: u64, run: usize, policy: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((run as u64) << 32) | ((policy as u64) << 8) | purpose as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    Game,
    Dag4Suite,
    Dag6 { two_parent_prob: f64 },
    File(PathBuf),
}

impl FromStr for EnvSpec {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "game" => Ok(Self::Game),
            "dag4" | "dag4_suite" => Ok(Self::Dag4Suite),
            "dag6" => Ok(Self::Dag6 { two_parent_prob: 0.5 }),
            other => match other.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(Self::File(PathBuf::from(path))),
                _ => Err(HarnessError::Config(format!("unknown environment `{other}`"))),
            },
        }
    }
}

impl EnvSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Game => "game".into(),
            Self::Dag4Suite => "dag4_suite".into(),
            Self::Dag6 { .. } => "dag6".into(),
            Self::File(p) => format!("file:{}", p.display()),
        }
    }

    pub fn default_horizon(&self) -> usize {
        match self {
            Self::Dag6 { .. } => 20_000,
            _ => 10_000,
        }
    }

    pub fn default_initial_pulls(&self) -> usize {
        match self {
            Self::Dag6 { .. } => 3,
            _ => 10,
        }
    }
}

/// Builds the environment of every run. Suite runs cycle through the graphs
/// in a seeded order, each with its own parametrization.
pub fn build_environments(spec: &EnvSpec, runs: usize, seed: u64) -> Result<Vec<Arc<Environment>>, HarnessError> {
    match spec {
        EnvSpec::Game => Ok(std::iter::repeat_n(Arc::new(make_game_env()), runs).collect()),
        EnvSpec::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            let scm: DiscreteScm = text.parse()?;
            let name = path.file_stem().map_or("file".into(), |s| s.to_string_lossy().into_owned());
            Ok(std::iter::repeat_n(Arc::new(Environment::new(name, scm)?), runs).collect())
        }
        EnvSpec::Dag4Suite => {
            let suite = enumerate_4node_suite();
            let mut order: Vec<usize> = (0..suite.len()).collect();
            order.shuffle(&mut stream(seed, 0, 0, Purpose::GraphOrder));
            (0..runs)
                .into_par_iter()
                .map(|r| {
                    let g = order[r % order.len()];
                    let scm = random_parametrization(suite[g].clone(), &mut stream(seed, r, 0, Purpose::Environment))?;
                    Ok(Arc::new(Environment::new(format!("dag4_{g}"), scm)?))
                })
                .collect()
        }
        EnvSpec::Dag6 { two_parent_prob } => Ok((0..runs)
            .into_par_iter()
            .map(|r| Arc::new(make_6node_env_with(&mut stream(seed, r, 0, Purpose::Environment), *two_parent_prob)))
            .collect()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvSpec,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub policies: Vec<PolicyConfig>,
    pub out_dir: Option<PathBuf>,
    /// Keep per-round logs (index, winning width) in memory and on disk.
    pub round_logs: bool,
}

impl ExperimentConfig {
    pub fn new(env: EnvSpec, policies: Vec<PolicyConfig>) -> Self {
        Self {
            name: env.label(),
            horizon: env.default_horizon(),
            env,
            runs: 10,
            seed: 0,
            policies,
            out_dir: None,
            round_logs: false,
        }
    }

    /// Parses the flat `key = value` format. Policy fields use
    /// `policy.<name>.<field>`; policies keep their first-mention order.
    pub fn from_kv(text: &str) -> Result<Self, HarnessError> {
        let mut top: HashMap<String, String> = HashMap::new();
        let mut policy_order: Vec<String> = Vec::new();
        let mut policy_fields: HashMap<String, Vec<(String, String)>> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (key, value) = (key.trim(), value.trim().to_string());
            if let Some(rest) = key.strip_prefix("policy.") {
                let (name, field) = rest
                    .rsplit_once('.')
                    .ok_or_else(|| HarnessError::Config(format!("line {}: expected `policy.<name>.<field>`", i + 1)))?;
                if !policy_fields.contains_key(name) {
                    policy_order.push(name.to_string());
                }
                policy_fields.entry(name.to_string()).or_default().push((field.to_string(), value));
            } else if top.insert(key.to_string(), value).is_some() {
                return Err(HarnessError::Config(format!("line {}: duplicate key `{key}`", i + 1)));
            }
        }
        let mut env: EnvSpec = top.remove("env").unwrap_or_else(|| "game".into()).parse()?;
        if let Some(p) = top.remove("two_parent_prob") {
            let p = parse_num(&p, "two_parent_prob")?;
            match &mut env {
                EnvSpec::Dag6 { two_parent_prob } => *two_parent_prob = p,
                _ => return Err(HarnessError::Config("two_parent_prob applies to dag6 only".into())),
            }
        }
        let mut policies = Vec::new();
        for name in policy_order {
            let fields = &policy_fields[&name];
            let get = |f: &str| fields.iter().rev().find(|(k, _)| k == f).map(|(_, v)| v.as_str());
            let kind = get("kind").ok_or_else(|| HarnessError::Config(format!("policy `{name}` has no kind")))?;
            let mut p = PolicyConfig::new(kind.parse()?, get("discovery").unwrap_or("none").parse()?);
            p.name = name.clone();
            p.initial_pulls_per_arm = env.default_initial_pulls();
            for (field, value) in fields {
                match field.as_str() {
                    "kind" | "discovery" => {}
                    "initial_pulls" => p.initial_pulls_per_arm = parse_num(value, field)?,
                    "max_sepset_size" => p.max_sepset_size = Some(parse_num(value, field)?),
                    "alpha_scale" => p.alpha_scale = parse_num(value, field)?,
                    "rerun_growth" => p.rerun_growth = parse_num(value, field)?,
                    _ => return Err(HarnessError::Config(format!("policy `{name}`: unknown field `{field}`"))),
                }
            }
            p.validate()?;
            policies.push(p);
        }
        let mut cfg = Self::new(env, policies);
        for (key, value) in top {
            match key.as_str() {
                "name" => cfg.name = value,
                "horizon" => cfg.horizon = parse_num(&value, &key)?,
                "runs" => cfg.runs = parse_num(&value, &key)?,
                "seed" => cfg.seed = parse_num(&value, &key)?,
                "out" => cfg.out_dir = Some(PathBuf::from(value)),
                "round_logs" => cfg.round_logs = parse_num(&value, &key)?,
                _ => return Err(HarnessError::Config(format!("unknown key `{key}`"))),
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self, num_arms: usize) -> Result<(), HarnessError> {
        if self.runs == 0 {
            return Err(HarnessError::Config("runs must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(HarnessError::Config("no policies configured".into()));
        }
        for p in &self.policies {
            p.validate()?;
            let phase = p.initial_pulls_per_arm * num_arms;
            if self.horizon < phase {
                return Err(HarnessError::Config(format!(
                    "horizon {} is shorter than the initial phase of `{}` ({phase} rounds)",
                    self.horizon, p.name
                )));
            }
        }
        Ok(())
    }
}

fn parse_num<T: FromStr>(value: &str, key: &str) -> Result<T, HarnessError> {
    value.trim().parse().map_err(|_| HarnessError::Config(format!("invalid value `{value}` for `{key}`")))
}

/// Everything recorded for one (run, policy) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub policy: usize,
    pub run: usize,
    pub arms: Vec<u32>,
    pub inst_regret: Vec<f64>,
    pub rewards: Vec<u8>,
    pub discovery: Vec<DiscoveryMetrics>,
    pub rounds: Option<Vec<RoundLog>>,
}

impl RunTrace {
    pub fn cumulative(&self) -> Vec<f64> {
        self.inst_regret
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect()
    }

    pub fn total_regret(&self) -> f64 {
        self.inst_regret.iter().sum()
    }
}

/// Plays one policy for `horizon` rounds on `env`.
#[allow(clippy::too_many_arguments)]
pub fn run_single(
    env: &Environment,
    schema: Arc<Schema>,
    config: &PolicyConfig,
    horizon: usize,
    seed: u64,
    run: usize,
    policy_index: usize,
    keep_rounds: bool,
) -> Result<RunTrace, HarnessError> {
    let mut policy = Policy::new(config.clone(), env.scm.graph(), stream(seed, run, policy_index, Purpose::Policy))?;
    let mut outcomes = stream(seed, run, policy_index, Purpose::Outcomes);
    let mut d = Dataset::new(schema);
    let best = env.best_mean();
    let mut trace = RunTrace {
        policy: policy_index,
        run,
        arms: Vec::with_capacity(horizon),
        inst_regret: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        discovery: Vec::new(),
        rounds: keep_rounds.then(|| Vec::with_capacity(horizon)),
    };
    let target = env.scm.target();
    for t in 1..=horizon {
        let step = policy.step(&mut d)?;
        let arm = step.choice.arm;
        let outcome = env.scm.sample(&env.arms[arm], &mut outcomes);
        let reward = outcome[target];
        d.append(arm, &outcome).map_err(|e| HarnessError::Run(e.to_string()))?;
        trace.arms.push(arm as u32);
        trace.inst_regret.push(best - env.means()[arm]);
        trace.rewards.push(reward);
        trace.discovery.extend(step.discovery);
        if let Some(rounds) = &mut trace.rounds {
            rounds.push(RoundLog {
                t,
                arm,
                chosen_index: step.choice.index,
                width_used: step.choice.width_kind,
                width: step.choice.width,
                standard_width: step.choice.standard_width,
                reward,
            });
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub environments: Vec<Arc<Environment>>,
    /// Ordered by policy, then run.
    pub traces: Vec<RunTrace>,
}

impl ExperimentResult {
    pub fn traces_for(&self, policy: usize) -> impl Iterator<Item = &RunTrace> {
        self.traces.iter().filter(move |t| t.policy == policy)
    }

    /// Pointwise mean and standard error of cumulative regret per policy.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        (0..self.config.policies.len())
            .map(|p| {
                let cum: Vec<Vec<f64>> = self.traces_for(p).map(RunTrace::cumulative).collect();
                aggregate(&cum)
            })
            .collect()
    }
}

/// Runs every (run, policy) pair; results are independent of thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    if cfg.runs == 0 {
        return Err(HarnessError::Config("runs must be at least 1".into()));
    }
    let environments = build_environments(&cfg.env, cfg.runs, cfg.seed)?;
    cfg.validate(environments[0].arms.len())?;
    let schemas: Vec<Arc<Schema>> = environments.iter().map(|e| Arc::new(Schema::for_environment(e))).collect();
    let tasks: Vec<(usize, usize)> = (0..cfg.policies.len()).flat_map(|p| (0..cfg.runs).map(move |r| (p, r))).collect();
    let traces = tasks
        .into_par_iter()
        .map(|(p, r)| {
            run_single(&environments[r], schemas[r].clone(), &cfg.policies[p], cfg.horizon, cfg.seed, r, p, cfg.round_logs)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentResult { config: cfg.clone(), environments, traces })
}

/// Pointwise mean and standard error (sample std / √R) across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    /// `None` with fewer than two runs.
    pub stderr: Option<Vec<f64>>,
}

pub fn aggregate(runs: &[Vec<f64>]) -> Aggregate {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    let r = runs.len() as f64;
    let mean: Vec<f64> = (0..len).map(|t| runs.iter().map(|x| x[t]).sum::<f64>() / r).collect();
    let stderr = (runs.len() >= 2).then(|| {
        (0..len)
            .map(|t| {
                let ss: f64 = runs.iter().map(|x| (x[t] - mean[t]).powi(2)).sum();
                (ss / (r - 1.0)).sqrt() / r.sqrt()
            })
            .collect()
    });
    Aggregate { mean, stderr }
}

fn width_label(kind: &WidthKind) -> &'static str {
    match kind {
        WidthKind::Standard => "standard",
        WidthKind::SepSet(_) => "sepset",
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

pub fn write_regret_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["experiment", "policy", "run", "t", "arm", "inst_regret", "cum_regret"])?;
    for trace in &result.traces {
        let policy = &result.config.policies[trace.policy].name;
        let mut cum = 0.0;
        for (i, (&arm, &inst)) in trace.arms.iter().zip(&trace.inst_regret).enumerate() {
            cum += inst;
            w.write_record([
                result.config.name.as_str(),
                policy,
                &trace.run.to_string(),
                &(i + 1).to_string(),
                &arm.to_string(),
                &inst.to_string(),
                &cum.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_agg_csv<W: Write>(names: &[String], aggregates: &[Aggregate], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["policy", "t", "mean", "stderr"])?;
    for (name, agg) in names.iter().zip(aggregates) {
        for (i, m) in agg.mean.iter().enumerate() {
            let se = agg.stderr.as_ref().map(|s| s[i]);
            w.write_record([name.as_str(), &(i + 1).to_string(), &m.to_string(), &opt_num(se)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_discovery_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["policy", "run", "n", "sensitivity", "fpr"])?;
    for trace in &result.traces {
        for m in &trace.discovery {
            w.write_record([
                result.config.policies[trace.policy].name.as_str(),
                &trace.run.to_string(),
                &m.n.to_string(),
                &m.sensitivity.to_string(),
                &m.false_positive_rate.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_rounds_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["policy", "run", "t", "arm", "index", "width_kind", "sepset", "reward"])?;
    for trace in &result.traces {
        let Some(rounds) = &trace.rounds else { continue };
        let g = result.environments[trace.run].scm.graph();
        for log in rounds {
            let sepset = match &log.width_used {
                WidthKind::SepSet(s) => g.format_set(s),
                WidthKind::Standard => String::new(),
            };
            w.write_record([
                result.config.policies[trace.policy].name.as_str(),
                &trace.run.to_string(),
                &log.t.to_string(),
                &log.arm.to_string(),
                &opt_num(log.chosen_index),
                width_label(&log.width_used),
                &sepset,
                &log.reward.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Arm ordinals with their context assignments (`-` for no intervention).
pub fn write_arms_csv<W: Write>(env: &Environment, out: W) -> Result<(), HarnessError> {
    let g = env.scm.graph();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["arm".to_string()];
    header.extend(g.context_nodes().iter().map(|&c| g.name(c).to_string()));
    header.push("true_mean".into());
    w.write_record(&header)?;
    for (i, arm) in env.arms.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(arm.values().iter().map(|v| v.map_or_else(|| "-".to_string(), |x| x.to_string())));
        row.push(env.means()[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn create(dir: &Path, file: &str) -> Result<fs::File, HarnessError> {
    let path = dir.join(file);
    fs::File::create(&path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// Writes regret.csv, agg.csv, discovery.csv, arms.csv, regret.svg and, when
/// round logs were kept, rounds.csv into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    let names: Vec<String> = result.config.policies.iter().map(|p| p.name.clone()).collect();
    let aggregates = result.aggregates();
    write_regret_csv(result, std::io::BufWriter::new(create(dir, "regret.csv")?))?;
    write_agg_csv(&names, &aggregates, std::io::BufWriter::new(create(dir, "agg.csv")?))?;
    write_discovery_csv(result, std::io::BufWriter::new(create(dir, "discovery.csv")?))?;
    write_arms_csv(&result.environments[0], std::io::BufWriter::new(create(dir, "arms.csv")?))?;
    if result.config.round_logs {
        write_rounds_csv(result, std::io::BufWriter::new(create(dir, "rounds.csv")?))?;
    }
    let series: Vec<PlotSeries> = names
        .into_iter()
        .zip(aggregates)
        .map(|(name, a)| PlotSeries { name, mean: a.mean, stderr: a.stderr })
        .collect();
    emit_plot(&series, &result.config.name, &dir.join("regret.svg"))
}

/// One curve of a regret plot.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub mean: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

/// Reads agg.csv back into plot series (policy order of first appearance).
pub fn read_agg_csv<R: Read>(input: R) -> Result<Vec<PlotSeries>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out: Vec<PlotSeries> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = || HarnessError::Io(format!("malformed agg.csv row {:?}", rec.iter().collect::<Vec<_>>()));
        let name = rec.get(0).ok_or_else(bad)?;
        let mean: f64 = rec.get(2).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let se: Option<f64> = match rec.get(3) {
            Some("") | None => None,
            Some(v) => Some(v.parse().map_err(|_| bad())?),
        };
        if out.last().is_none_or(|s| s.name != name) {
            out.push(PlotSeries { name: name.to_string(), mean: Vec::new(), stderr: se.map(|_| Vec::new()) });
        }
        let s = out.last_mut().expect("just pushed");
        s.mean.push(mean);
        if let (Some(v), Some(se)) = (&mut s.stderr, se) {
            v.push(se);
        }
    }
    Ok(out)
}

/// Pixel geometry of a plot; maps data to SVG coordinates and back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotLayout {
    pub width: f64,
    pub height: f64,
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
    pub t_max: usize,
    pub y_max: f64,
}

impl PlotLayout {
    pub const MAX_POINTS: usize = 400;

    pub fn for_series(series: &[PlotSeries]) -> Self {
        let t_max = series.iter().map(|s| s.mean.len()).max().unwrap_or(0);
        let top_value = series
            .iter()
            .flat_map(|s| {
                s.mean.iter().enumerate().map(move |(i, m)| m + s.stderr.as_ref().map_or(0.0, |e| e[i]))
            })
            .fold(0.0, f64::max);
        let y_max = if top_value > 0.0 { top_value * 1.05 } else { 1.0 };
        Self { width: 800.0, height: 500.0, left: 70.0, right: 160.0, top: 40.0, bottom: 50.0, t_max, y_max }
    }

    fn plot_width(&self) -> f64 {
        self.width - self.left - self.right
    }

    fn plot_height(&self) -> f64 {
        self.height - self.top - self.bottom
    }

    /// x pixel of round `t` (1-based).
    pub fn x(&self, t: usize) -> f64 {
        if self.t_max <= 1 {
            return self.left;
        }
        self.left + (t - 1) as f64 / (self.t_max - 1) as f64 * self.plot_width()
    }

    pub fn y(&self, v: f64) -> f64 {
        self.top + self.plot_height() * (1.0 - v / self.y_max)
    }

    /// Data value at pixel row `py`.
    pub fn value_at(&self, py: f64) -> f64 {
        (1.0 - (py - self.top) / self.plot_height()) * self.y_max
    }

    /// Converts a vertical pixel distance into data units.
    pub fn value_span(&self, pixels: f64) -> f64 {
        pixels / self.plot_height() * self.y_max
    }

    /// 0-based indices of plotted points: every point up to [`Self::MAX_POINTS`],
    /// otherwise an even stride that always keeps the last point.
    pub fn sample_indices(len: usize) -> Vec<usize> {
        if len <= Self::MAX_POINTS {
            return (0..len).collect();
        }
        let stride = len.div_ceil(Self::MAX_POINTS);
        let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
        if idx.last() != Some(&(len - 1)) {
            idx.push(len - 1);
        }
        idx
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders cumulative regret curves with stderr bands as a standalone SVG.
pub fn render_svg(series: &[PlotSeries], title: &str) -> Result<String, HarnessError> {
    if series.is_empty() || series.iter().all(|s| s.mean.is_empty()) {
        return Err(HarnessError::Config("nothing to plot".into()));
    }
    let l = PlotLayout::for_series(series);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" data-t-max="{t}" data-y-max="{y}">"#,
        w = l.width,
        h = l.height,
        t = l.t_max,
        y = l.y_max
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" font-family="sans-serif" font-size="16">{}</text>"#, l.left, escape(title));
    let (x0, x1, y0, y1) = (l.left, l.width - l.right, l.top, l.height - l.bottom);
    let _ = writeln!(svg, r#"<path d="M{x0},{y0} L{x0},{y1} L{x1},{y1}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let v = l.y_max * k as f64 / 4.0;
        let py = l.y(v);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{:.1}</text>"#,
            x0 - 6.0,
            py + 4.0,
            v
        );
        let t = 1 + (l.t_max.saturating_sub(1)) * k / 4;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{t}</text>"#,
            l.x(t),
            y1 + 16.0
        );
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">round</text>"#, (x0 + x1) / 2.0, l.height - 10.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">cumulative regret</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let idx = PlotLayout::sample_indices(s.mean.len());
        if let Some(se) = &s.stderr {
            let upper = idx.iter().map(|&j| format!("{:.3},{:.3}", l.x(j + 1), l.y(s.mean[j] + se[j])));
            let lower = idx.iter().rev().map(|&j| format!("{:.3},{:.3}", l.x(j + 1), l.y(s.mean[j] - se[j])));
            let points: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                svg,
                r#"<polygon class="band" data-policy="{}" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                escape(&s.name),
                points.join(" ")
            );
        }
        let points: Vec<String> = idx.iter().map(|&j| format!("{:.3},{:.3}", l.x(j + 1), l.y(s.mean[j]))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="mean" data-policy="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            escape(&s.name),
            points.join(" ")
        );
        let ly = y0 + 10.0 + 18.0 * i as f64;
        let _ = writeln!(svg, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#, x1 + 12.0, x1 + 32.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#, x1 + 38.0, ly + 4.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes [`render_svg`] output to `path`; nothing is written on error.
pub fn emit_plot(series: &[PlotSeries], title: &str, path: &Path) -> Result<(), HarnessError> {
    let svg = render_svg(series, title)?;
    fs::write(path, svg).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// Discovery-only benchmark: uniform random arms, discovery scored at each
/// cumulative sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryBenchConfig {
    pub env: EnvSpec,
    pub runs: usize,
    pub seed: u64,
    pub sample_sizes: Vec<usize>,
    pub max_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryBenchRow {
    pub run: usize,
    pub n: usize,
    pub method: &'static str,
    pub sensitivity: f64,
    pub fpr: f64,
}

pub fn discovery_bench(cfg: &DiscoveryBenchConfig) -> Result<Vec<DiscoveryBenchRow>, HarnessError> {
    if cfg.runs == 0 || cfg.sample_sizes.is_empty() {
        return Err(HarnessError::Config("need at least one run and one sample size".into()));
    }
    let mut sizes = cfg.sample_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes[0] == 0 {
        return Err(HarnessError::Config("sample sizes must be positive".into()));
    }
    let envs = build_environments(&cfg.env, cfg.runs, cfg.seed)?;
    let rows: Vec<Vec<DiscoveryBenchRow>> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let env = &envs[r];
            let max_size = cfg.max_size.unwrap_or_else(|| default_max_sepset_size(env.scm.graph()));
            let mut rng = stream(cfg.seed, r, 0, Purpose::Outcomes);
            let mut d = Dataset::new(Arc::new(Schema::for_environment(env)));
            let mut out = Vec::new();
            for &n in &sizes {
                while d.len() < n {
                    let a = rng.random_range(0..env.arms.len());
                    let v = env.scm.sample(&env.arms[a], &mut rng);
                    d.append(a, &v).map_err(|e| HarnessError::Run(e.to_string()))?;
                }
                let catalog = discover(&d, max_size).map_err(|e| HarnessError::Run(e.to_string()))?;
                let m = score_discovery(&catalog, env.scm.graph(), max_size);
                out.push(DiscoveryBenchRow { run: r, n, method: "direct_test", sensitivity: m.sensitivity, fpr: m.false_positive_rate });
            }
            Ok(out)
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_discovery_bench_csv<W: Write>(rows: &[DiscoveryBenchRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "n", "method", "sensitivity", "fpr"])?;
    for row in rows {
        w.write_record([&row.run.to_string(), &row.n.to_string(), row.method, &row.sensitivity.to_string(), &row.fpr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Variance diagnostics of one separating set for every arm after
/// `per_arm` samples of each arm.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub arm: usize,
    pub s: String,
    pub alpha: f64,
    pub term_between: f64,
    pub term_within: f64,
    pub alpha_star: f64,
}

pub fn variance_report(env: &Environment, set: &[NodeId], per_arm: usize, reps: usize, seed: u64) -> Result<Vec<DiagnosticRow>, HarnessError> {
    let schema = Arc::new(Schema::for_environment(env));
    schema.check_set(set).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut rng = stream(seed, 0, 0, Purpose::Outcomes);
    let mut d = Dataset::new(schema.clone());
    for a in 0..env.arms.len() {
        for _ in 0..per_arm {
            let v = env.scm.sample(&env.arms[a], &mut rng);
            d.append(a, &v).map_err(|e| HarnessError::Run(e.to_string()))?;
        }
    }
    let mut rows = Vec::new();
    let mut diag_rng = stream(seed, 0, 0, Purpose::Policy);
    for a in 0..env.arms.len() {
        let diag = variance_diagnostics(&d, &env.scm, set, a, reps, &mut diag_rng)?;
        for (code, &alpha) in diag.alpha_per_s.iter().enumerate() {
            let value = schema.decode(set, code);
            let s = set.iter().zip(&value).map(|(&v, x)| format!("{}={x}", env.scm.graph().name(v))).collect::<Vec<_>>().join(" ");
            rows.push(DiagnosticRow { arm: a, s, alpha, term_between: diag.term_between, term_within: diag.term_within, alpha_star: diag.alpha_star });
        }
    }
    Ok(rows)
}

pub fn write_diagnostics_csv<W: Write>(rows: &[DiagnosticRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["arm", "s", "alpha", "term_between", "term_within", "alpha_star"])?;
    for r in rows {
        w.write_record([
            &r.arm.to_string(),
            &r.s,
            &r.alpha.to_string(),
            &r.term_between.to_string(),
            &r.term_within.to_string(),
            &r.alpha_star.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// First true separating set of the environment's graph, for diagnostics.
pub fn first_separating_set(env: &Environment) -> Option<Vec<NodeId>> {
    let g = env.scm.graph();
    SepSetCatalog::oracle(g, default_max_sepset_size(g)).accepted.into_iter().next()
}
