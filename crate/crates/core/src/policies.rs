//! Bandit policies: UCB and Thompson sampling on per-arm sample means, and
//! their information-sharing variants that borrow strength through
//! separating sets.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::discovery::{discover_with_alpha, score_discovery, should_rerun_with, DiscoveryMetrics, SepSetCatalog, TestError};
use crate::graph::{Dag, NodeId};
use crate::inference::{bound_inputs, effective_domain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("invalid policy configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Test(#[from] TestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Ucb,
    Ts,
    IsUcb,
    IsTs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiscoveryMode {
    None,
    DirectTest,
    OracleSepsets,
    OracleParents,
}

impl FromStr for PolicyKind {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ucb" => Ok(Self::Ucb),
            "ts" => Ok(Self::Ts),
            "is_ucb" => Ok(Self::IsUcb),
            "is_ts" => Ok(Self::IsTs),
            _ => Err(PolicyError::Config(format!("unknown policy kind `{s}`"))),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ucb => "ucb",
            Self::Ts => "ts",
            Self::IsUcb => "is_ucb",
            Self::IsTs => "is_ts",
        })
    }
}

impl FromStr for DiscoveryMode {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "direct_test" => Ok(Self::DirectTest),
            "oracle_sepsets" => Ok(Self::OracleSepsets),
            "oracle_parents" => Ok(Self::OracleParents),
            _ => Err(PolicyError::Config(format!("unknown discovery mode `{s}`"))),
        }
    }
}

impl fmt::Display for DiscoveryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::DirectTest => "direct_test",
            Self::OracleSepsets => "oracle_sepsets",
            Self::OracleParents => "oracle_parents",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub name: String,
    pub kind: PolicyKind,
    pub discovery: DiscoveryMode,
    pub initial_pulls_per_arm: usize,
    /// `None` picks a size from the graph, see [`default_max_sepset_size`].
    pub max_sepset_size: Option<usize>,
    /// Test level is `alpha_scale / √N`.
    pub alpha_scale: f64,
    /// Discovery re-runs once the dataset has grown by this factor.
    pub rerun_growth: f64,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind, discovery: DiscoveryMode) -> Self {
        let name = match discovery {
            DiscoveryMode::None => kind.to_string(),
            d => format!("{kind}:{d}"),
        };
        Self { name, kind, discovery, initial_pulls_per_arm: 10, max_sepset_size: None, alpha_scale: 2.5, rerun_growth: 1.25 }
    }

    /// Parses `kind` or `kind:discovery`, e.g. `is_ucb:direct_test`.
    pub fn parse(spec: &str) -> Result<Self, PolicyError> {
        let spec = spec.trim();
        let (kind, discovery) = match spec.split_once(':') {
            Some((k, d)) => (k.parse()?, d.parse()?),
            None => (spec.parse()?, DiscoveryMode::None),
        };
        let config = Self::new(kind, discovery);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let is_kind = matches!(self.kind, PolicyKind::IsUcb | PolicyKind::IsTs);
        if is_kind && self.discovery == DiscoveryMode::None {
            return Err(PolicyError::Config(format!("`{}` needs a discovery mode", self.kind)));
        }
        if !is_kind && self.discovery != DiscoveryMode::None {
            return Err(PolicyError::Config(format!("`{}` does not use separating sets", self.kind)));
        }
        if self.alpha_scale.is_nan() || self.alpha_scale <= 0.0 {
            return Err(PolicyError::Config("alpha_scale must be positive".into()));
        }
        if self.rerun_growth.is_nan() || self.rerun_growth <= 1.0 {
            return Err(PolicyError::Config("rerun_growth must exceed 1".into()));
        }
        Ok(())
    }
}

/// `|V \ {Y}|` when at most three system nodes compete, otherwise 3.
pub fn default_max_sepset_size(g: &Dag) -> usize {
    let pool = g.system_nodes().len() - 1;
    if pool <= 3 {
        pool
    } else {
        3
    }
}

/// `δ(n) = 1 / (1 + n ln² n)`.
pub fn delta_schedule(n: usize) -> f64 {
    let n = n.max(1) as f64;
    1.0 / (1.0 + n * n.ln().powi(2))
}

/// Bernoulli-UCB half-width `sqrt(ln(1/δ) / (2 N(I = ζ)))`.
pub fn standard_width(n_arm: u64, delta: f64) -> f64 {
    ((1.0 / delta).ln() / (2.0 * n_arm as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum WidthKind {
    Standard,
    SepSet(Vec<NodeId>),
}

/// Per-arm outcome of the width competition.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmIndex {
    pub index: f64,
    pub estimate: f64,
    pub width: f64,
    pub standard_width: f64,
    pub kind: WidthKind,
}

/// The decision of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub arm: usize,
    /// Index of the chosen arm; `None` during the initial phase.
    pub index: Option<f64>,
    pub width_kind: WidthKind,
    pub width: Option<f64>,
    pub standard_width: Option<f64>,
}

impl Choice {
    fn initial(arm: usize) -> Self {
        Self { arm, index: None, width_kind: WidthKind::Standard, width: None, standard_width: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub t: usize,
    pub arm: usize,
    pub chosen_index: Option<f64>,
    pub width_used: WidthKind,
    pub width: Option<f64>,
    pub standard_width: Option<f64>,
    pub reward: u8,
}

/// Round-robin initial phase: the least-pulled arm (lowest ordinal on ties)
/// while any arm has fewer than `pulls` records.
pub fn initial_phase_arm(d: &Dataset, pulls: usize) -> Option<usize> {
    (0..d.schema().num_arms())
        .filter(|&a| d.n_arm(a) < pulls as u64)
        .min_by_key(|&a| (d.n_arm(a), a))
}

fn argmax(values: impl IntoIterator<Item = f64>) -> (usize, f64) {
    values
        .into_iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
}

fn ucb_arm_index(d: &Dataset, arm: usize, delta: f64) -> ArmIndex {
    let n = d.n_arm(arm);
    if n == 0 {
        return ArmIndex { index: f64::INFINITY, estimate: 0.0, width: f64::INFINITY, standard_width: f64::INFINITY, kind: WidthKind::Standard };
    }
    let estimate = d.n_arm_y1(arm) as f64 / n as f64;
    let width = standard_width(n, delta);
    ArmIndex { index: estimate + width, estimate, width, standard_width: width, kind: WidthKind::Standard }
}

/// Standard UCB index of every arm at dataset size `n`.
pub fn ucb_indices(d: &Dataset, n: usize) -> Vec<ArmIndex> {
    let delta = delta_schedule(n);
    (0..d.schema().num_arms()).map(|a| ucb_arm_index(d, a, delta)).collect()
}

fn into_choice(indices: Vec<ArmIndex>) -> Choice {
    let (arm, index) = argmax(indices.iter().map(|a| a.index));
    let best = &indices[arm];
    Choice { arm, index: Some(index), width_kind: best.kind.clone(), width: Some(best.width), standard_width: Some(best.standard_width) }
}

pub fn choose_ucb(d: &Dataset, n: usize) -> Choice {
    into_choice(ucb_indices(d, n))
}

fn beta_draw<R: Rng + ?Sized>(ones: u64, zeros: u64, rng: &mut R) -> f64 {
    Beta::new(ones as f64 + 1.0, zeros as f64 + 1.0).expect("positive shape").sample(rng)
}

fn ts_draw<R: Rng + ?Sized>(d: &Dataset, arm: usize, rng: &mut R) -> f64 {
    let ones = d.n_arm_y1(arm);
    beta_draw(ones, d.n_arm(arm) - ones, rng)
}

pub fn choose_ts<R: Rng + ?Sized>(d: &Dataset, rng: &mut R) -> Choice {
    let draws: Vec<f64> = (0..d.schema().num_arms()).map(|a| ts_draw(d, a, rng)).collect();
    let (arm, index) = argmax(draws);
    Choice { arm, index: Some(index), width_kind: WidthKind::Standard, width: None, standard_width: None }
}

/// Width competition for one arm: starts from the standard width and keeps
/// the separating-set index with the strictly smallest width. Sets whose
/// effective domain is not fully observed are skipped.
pub fn best_sepset_index(d: &Dataset, catalog: &SepSetCatalog, arm: usize, delta: f64) -> ArmIndex {
    let mut best = ucb_arm_index(d, arm, delta);
    if d.n_arm(arm) == 0 {
        return best;
    }
    for s in &catalog.accepted {
        let Ok(inputs) = bound_inputs(d, s, arm, delta) else {
            continue;
        };
        let index = inputs.upper();
        let estimate = inputs.estimate();
        let width = index - estimate;
        if width < best.width {
            best = ArmIndex { index, estimate, width, standard_width: best.standard_width, kind: WidthKind::SepSet(s.clone()) };
        }
    }
    best
}

pub fn is_ucb_indices(d: &Dataset, catalog: &SepSetCatalog, n: usize) -> Vec<ArmIndex> {
    let delta = delta_schedule(n);
    (0..d.schema().num_arms()).map(|a| best_sepset_index(d, catalog, a, delta)).collect()
}

pub fn choose_is_ucb(d: &Dataset, catalog: &SepSetCatalog, n: usize) -> Choice {
    into_choice(is_ucb_indices(d, catalog, n))
}

/// Dirichlet draw by normalizing independent unit-scale Gamma draws.
fn dirichlet_draw<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    if alpha.len() == 1 {
        return vec![1.0];
    }
    let g: Vec<f64> = alpha.iter().map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng)).collect();
    let total: f64 = g.iter().sum();
    g.into_iter().map(|x| x / total).collect()
}

pub fn choose_is_ts<R: Rng + ?Sized>(d: &Dataset, catalog: &SepSetCatalog, n: usize, rng: &mut R) -> Choice {
    let delta = delta_schedule(n);
    let k = d.schema().num_arms();
    let mut draws = Vec::with_capacity(k);
    let mut kinds = Vec::with_capacity(k);
    for arm in 0..k {
        let best = best_sepset_index(d, catalog, arm, delta);
        let draw = match &best.kind {
            WidthKind::Standard => ts_draw(d, arm, rng),
            WidthKind::SepSet(s) => sepset_draw(d, s, arm, rng).expect("winning set has full support"),
        };
        draws.push(draw);
        kinds.push(best);
    }
    let (arm, index) = argmax(draws);
    let best = &kinds[arm];
    Choice { arm, index: Some(index), width_kind: best.kind.clone(), width: Some(best.width), standard_width: Some(best.standard_width) }
}

/// Posterior draw `p̃ᵀ μ̃` of the arm mean through separating set `s`.
pub fn sepset_draw<R: Rng + ?Sized>(d: &Dataset, s: &[NodeId], arm: usize, rng: &mut R) -> Result<f64, DataError> {
    let counts = d.set_counts(s)?;
    let schema = d.schema();
    let codes: Vec<usize> = effective_domain(schema, s, arm).iter().map(|v| schema.encode(s, v)).collect();
    let alpha: Vec<f64> = codes.iter().map(|&c| counts.n_s_arm(c, arm) as f64 + 0.5).collect();
    let p = dirichlet_draw(&alpha, rng);
    Ok(codes
        .iter()
        .zip(&p)
        .map(|(&c, &p)| {
            let ones = counts.n_s_y1(c);
            p * beta_draw(ones, counts.n_s(c) - ones, rng)
        })
        .sum())
}

/// One round's result from [`Policy::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub choice: Choice,
    /// Scores of a discovery run performed this round.
    pub discovery: Option<DiscoveryMetrics>,
}

/// A policy instance bound to one run: configuration, catalog and RNG.
#[derive(Debug, Clone)]
pub struct Policy {
    config: PolicyConfig,
    max_size: usize,
    catalog: SepSetCatalog,
    rng: ChaCha8Rng,
    tracked: bool,
}

impl Policy {
    pub fn new(config: PolicyConfig, graph: &Dag, rng: ChaCha8Rng) -> Result<Self, PolicyError> {
        config.validate()?;
        let max_size = config.max_sepset_size.unwrap_or_else(|| default_max_sepset_size(graph));
        let catalog = match config.discovery {
            DiscoveryMode::None | DiscoveryMode::DirectTest => SepSetCatalog::empty(),
            DiscoveryMode::OracleSepsets => SepSetCatalog::oracle(graph, max_size),
            DiscoveryMode::OracleParents => SepSetCatalog::target_parents(graph),
        };
        Ok(Self { config, max_size, catalog, rng, tracked: false })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn catalog(&self) -> &SepSetCatalog {
        &self.catalog
    }

    pub fn max_sepset_size(&self) -> usize {
        self.max_size
    }

    /// Chooses the arm for the next round given everything observed so far.
    pub fn step(&mut self, d: &mut Dataset) -> Result<Step, PolicyError> {
        if let Some(arm) = initial_phase_arm(d, self.config.initial_pulls_per_arm) {
            return Ok(Step { choice: Choice::initial(arm), discovery: None });
        }
        let n = d.len();
        let mut metrics = None;
        if self.config.discovery == DiscoveryMode::DirectTest && should_rerun_with(&self.catalog, n, self.config.rerun_growth) {
            let alpha = self.config.alpha_scale / (n as f64).sqrt();
            self.catalog = discover_with_alpha(d, self.max_size, alpha)?;
            metrics = Some(score_discovery(&self.catalog, d.schema().graph(), self.max_size));
            self.tracked = false;
        }
        if !self.tracked {
            for s in &self.catalog.accepted {
                d.track(s)?;
            }
            self.tracked = true;
        }
        let choice = match self.config.kind {
            PolicyKind::Ucb => choose_ucb(d, n),
            PolicyKind::Ts => choose_ts(d, &mut self.rng),
            PolicyKind::IsUcb => choose_is_ucb(d, &self.catalog, n),
            PolicyKind::IsTs => choose_is_ts(d, &self.catalog, n, &mut self.rng),
        };
        Ok(Step { choice, discovery: metrics })
    }
}
