//! Discrete structural causal models with perfect-intervention semantics.
//!
//! Structural functions and exogenous noise are folded into conditional
//! probability tables (CPTs), which is lossless for discrete models without
//! confounders. Each context node has exactly one child: the system node it
//! intervenes on. Setting the context node to a value `v` forces that child to
//! `v`; leaving it at `None` (∅) lets the child follow its CPT.
//!
//! # Text format
//!
//! The graph text format (see [`crate::graph`]) extended with
//!
//! ```text
//! domain: S 3            (optional; system nodes default to 2 values)
//! cpt: S
//! 0.75 0.25
//! 0.5 0.5
//! ```
//!
//! A `cpt:` block has one row per assignment of the node's *system* parents
//! (increasing node id, last parent varying fastest) and one probability per
//! value. Probabilities are written with 12 significant digits.

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::graph::{strip_comment, Dag, GraphError, GraphText, NodeId};

/// Value of a discrete variable.
pub type Value = u8;

/// Default cap on the joint state space enumerated by [`DiscreteScm::true_mean`].
pub const DEFAULT_STATE_CAP: usize = 1 << 20;

const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScmError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("node `{node}` has invalid domain size {size}")]
    Domain { node: String, size: usize },
    #[error("context node `{0}` must have exactly one child")]
    ContextFanOut(String),
    #[error("node `{0}` is targeted by more than one context node")]
    MultipleInterventions(String),
    #[error("cpt of `{node}` has wrong shape: expected {expected} entries, got {got}")]
    CptShape { node: String, expected: usize, got: usize },
    #[error("cpt row {row} of `{node}` is not a distribution (sum {sum})")]
    CptRow { node: String, row: usize, sum: f64 },
    #[error("joint state space of {size} exceeds the cap of {cap}")]
    Capacity { size: usize, cap: usize },
    #[error("invalid arm: {0}")]
    InvalidArm(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A full assignment of every context variable: `None` observes, `Some(v)`
/// performs `do(target = v)`. Entries follow the context nodes in id order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Arm(Vec<Option<Value>>);

impl Arm {
    pub fn new(values: Vec<Option<Value>>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[Option<Value>] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts = self.0.iter().map(|v| match v {
            None => "-".to_string(),
            Some(v) => v.to_string(),
        });
        write!(f, "({})", parts.format(","))
    }
}

/// Random binary target vector `t_V` used by [`random_parametrization`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetVector(pub Vec<Value>);

impl TargetVector {
    /// Number of parents whose value matches the target vector.
    pub fn matches(&self, parents: &[Value]) -> usize {
        assert_eq!(self.0.len(), parents.len(), "target vector length must match parent count");
        self.0.iter().zip(parents).filter(|(t, p)| t == p).count()
    }

    /// `P[V = 1 | pa(V)] = (1 + match) / (2 + |pa(V)|)`.
    pub fn prob_one(&self, parents: &[Value]) -> f64 {
        (1 + self.matches(parents)) as f64 / (2 + parents.len()) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScm {
    graph: Dag,
    domain: Vec<usize>,
    cpt: Vec<Vec<f64>>,
    sys_parents: Vec<Vec<NodeId>>,
    context: Vec<NodeId>,
    context_target: Vec<NodeId>,
    intervened_by: Vec<Option<usize>>,
}

impl DiscreteScm {
    /// Validates and builds a model.
    ///
    /// `domain` holds one entry per node (ignored for context nodes, whose
    /// values are those of their child). `cpt[v]` is row-major over system
    /// parent assignments; context nodes take an empty table.
    pub fn new(graph: Dag, domain: Vec<usize>, cpt: Vec<Vec<f64>>) -> Result<Self, ScmError> {
        let n = graph.len();
        assert_eq!(domain.len(), n, "one domain entry per node");
        assert_eq!(cpt.len(), n, "one cpt per node");
        let context = graph.context_nodes();
        let mut intervened_by = vec![None; n];
        let mut context_target = Vec::with_capacity(context.len());
        for (k, &c) in context.iter().enumerate() {
            let [child] = graph.children(c) else {
                return Err(ScmError::ContextFanOut(graph.name(c).to_string()));
            };
            if intervened_by[*child].replace(k).is_some() {
                return Err(ScmError::MultipleInterventions(graph.name(*child).to_string()));
            }
            context_target.push(*child);
        }
        let sys_parents: Vec<Vec<NodeId>> = (0..n).map(|v| graph.system_parents(v)).collect();
        for v in graph.system_nodes() {
            let name = graph.name(v).to_string();
            let d = domain[v];
            if !(2..=Value::MAX as usize).contains(&d) || (v == graph.target() && d != 2) {
                return Err(ScmError::Domain { node: name, size: d });
            }
            let rows: usize = sys_parents[v].iter().map(|&p| domain[p]).product();
            if cpt[v].len() != rows * d {
                return Err(ScmError::CptShape { node: name, expected: rows * d, got: cpt[v].len() });
            }
            for (row, probs) in cpt[v].chunks(d).enumerate() {
                let sum: f64 = probs.iter().sum();
                if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > ROW_TOLERANCE {
                    return Err(ScmError::CptRow { node: name, row, sum });
                }
            }
        }
        Ok(Self { graph, domain, cpt, sys_parents, context, context_target, intervened_by })
    }

    pub fn graph(&self) -> &Dag {
        &self.graph
    }

    pub fn target(&self) -> NodeId {
        self.graph.target()
    }

    /// Domain size of a system node, or of the intervened node for a context node.
    pub fn domain_size(&self, v: NodeId) -> usize {
        match self.context.iter().position(|&c| c == v) {
            Some(k) => self.domain[self.context_target[k]],
            None => self.domain[v],
        }
    }

    pub fn domains(&self) -> Vec<usize> {
        (0..self.graph.len()).map(|v| self.domain_size(v)).collect()
    }

    /// Context nodes in id order; index `k` corresponds to `arm.values()[k]`.
    pub fn context_nodes(&self) -> &[NodeId] {
        &self.context
    }

    /// The system node intervened on by the `k`-th context node.
    pub fn context_target(&self, k: usize) -> NodeId {
        self.context_target[k]
    }

    /// Ordinal of the context variable that intervenes on `v`, if any.
    pub fn intervened_by(&self, v: NodeId) -> Option<usize> {
        self.intervened_by[v]
    }

    pub fn cpt(&self, v: NodeId) -> &[f64] {
        &self.cpt[v]
    }

    pub fn system_parents(&self, v: NodeId) -> &[NodeId] {
        &self.sys_parents[v]
    }

    pub fn check_arm(&self, arm: &Arm) -> Result<(), ScmError> {
        if arm.len() != self.context.len() {
            return Err(ScmError::InvalidArm(format!(
                "expected {} context values, got {}",
                self.context.len(),
                arm.len()
            )));
        }
        for (k, v) in arm.values().iter().enumerate() {
            if let Some(v) = v {
                if *v as usize >= self.domain[self.context_target[k]] {
                    return Err(ScmError::InvalidArm(format!(
                        "value {v} outside the domain of `{}`",
                        self.graph.name(self.context_target[k])
                    )));
                }
            }
        }
        Ok(())
    }

    /// Value forced on `v` by `arm`, if any.
    pub fn forced_value(&self, arm: &Arm, v: NodeId) -> Option<Value> {
        self.intervened_by[v].and_then(|k| arm.values()[k])
    }

    /// Every arm: the Cartesian product of `{∅} ∪ D(target)` over context
    /// variables, first context variable most significant, ∅ first.
    pub fn all_arms(&self) -> Vec<Arm> {
        self.context_target
            .iter()
            .map(|&t| std::iter::once(None).chain((0..self.domain[t] as Value).map(Some)).collect::<Vec<_>>())
            .multi_cartesian_product()
            .map(Arm::new)
            .chain(std::iter::once(Arm::new(Vec::new())).filter(|_| self.context.is_empty()))
            .collect()
    }

    fn row_index(&self, v: NodeId, values: &[Value]) -> usize {
        self.sys_parents[v]
            .iter()
            .fold(0, |acc, &p| acc * self.domain[p] + values[p] as usize)
    }

    /// Draws one assignment (indexed by node id; context slots hold 0).
    pub fn sample<R: Rng + ?Sized>(&self, arm: &Arm, rng: &mut R) -> Vec<Value> {
        debug_assert!(self.check_arm(arm).is_ok());
        let mut values = vec![0 as Value; self.graph.len()];
        for &v in self.graph.topological_order() {
            if self.graph.is_context(v) {
                continue;
            }
            if let Some(forced) = self.forced_value(arm, v) {
                values[v] = forced;
                continue;
            }
            let d = self.domain[v];
            let row = self.row_index(v, &values);
            let probs = &self.cpt[v][row * d..(row + 1) * d];
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut drawn = d - 1;
            for (x, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    drawn = x;
                    break;
                }
            }
            values[v] = drawn as Value;
        }
        values
    }

    /// Exact `P[vars = x | I = arm]` for every joint value `x` of `vars`
    /// (mixed-radix code, last variable fastest), by enumerating the joint.
    pub fn interventional_marginal(&self, arm: &Arm, vars: &[NodeId], cap: usize) -> Result<Vec<f64>, ScmError> {
        self.check_arm(arm)?;
        let free: Vec<NodeId> = self
            .graph
            .topological_order()
            .iter()
            .copied()
            .filter(|&v| !self.graph.is_context(v))
            .collect();
        let size = free
            .iter()
            .filter(|&&v| self.forced_value(arm, v).is_none())
            .try_fold(1usize, |acc, &v| acc.checked_mul(self.domain[v]))
            .unwrap_or(usize::MAX);
        if size > cap {
            return Err(ScmError::Capacity { size, cap });
        }
        let out_len: usize = vars.iter().map(|&v| self.domain_size(v)).product();
        let mut out = vec![0.0; out_len];
        let mut values = vec![0 as Value; self.graph.len()];
        self.enumerate(arm, &free, 0, 1.0, &mut values, vars, &mut out);
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn enumerate(
        &self,
        arm: &Arm,
        free: &[NodeId],
        depth: usize,
        prob: f64,
        values: &mut [Value],
        vars: &[NodeId],
        out: &mut [f64],
    ) {
        if prob == 0.0 {
            return;
        }
        let Some(&v) = free.get(depth) else {
            let code = vars.iter().fold(0, |acc, &u| acc * self.domain_size(u) + values[u] as usize);
            out[code] += prob;
            return;
        };
        if let Some(forced) = self.forced_value(arm, v) {
            values[v] = forced;
            self.enumerate(arm, free, depth + 1, prob, values, vars, out);
            return;
        }
        let d = self.domain[v];
        let row = self.row_index(v, values);
        for x in 0..d {
            values[v] = x as Value;
            let p = self.cpt[v][row * d + x];
            self.enumerate(arm, free, depth + 1, prob * p, values, vars, out);
        }
    }

    /// Exact `E[Y | I = arm]` with the default state-space cap.
    pub fn true_mean(&self, arm: &Arm) -> Result<f64, ScmError> {
        self.true_mean_with_cap(arm, DEFAULT_STATE_CAP)
    }

    pub fn true_mean_with_cap(&self, arm: &Arm, cap: usize) -> Result<f64, ScmError> {
        Ok(self.interventional_marginal(arm, &[self.target()], cap)?[1])
    }
}

impl FromStr for DiscreteScm {
    type Err = ScmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut text = GraphText::default();
        let mut domains: Vec<(String, usize, usize)> = Vec::new();
        let mut tables: Vec<(String, usize, Vec<f64>)> = Vec::new();
        for (i, raw) in s.lines().enumerate() {
            let line = i + 1;
            if text.feed(raw, line)? {
                continue;
            }
            let body = strip_comment(raw);
            let bad = |msg: String| ScmError::Parse { line, msg };
            if let Some(rest) = body.strip_prefix("domain:") {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                let [name, size] = toks[..] else {
                    return Err(bad("expected `domain: NAME SIZE`".into()));
                };
                let size = size.parse().map_err(|_| bad(format!("invalid domain size `{size}`")))?;
                domains.push((name.to_string(), size, line));
            } else if let Some(rest) = body.strip_prefix("cpt:") {
                tables.push((rest.trim().to_string(), line, Vec::new()));
            } else if let Some((_, _, probs)) = tables.last_mut() {
                for tok in body.split_whitespace() {
                    probs.push(tok.parse().map_err(|_| bad(format!("invalid probability `{tok}`")))?);
                }
            } else {
                return Err(bad(format!("unrecognized line `{body}`")));
            }
        }
        let graph = text.finish()?;
        let mut domain = vec![2usize; graph.len()];
        for (name, size, line) in domains {
            let v = graph.node_id(&name).ok_or(ScmError::Parse { line, msg: format!("unknown node `{name}`") })?;
            domain[v] = size;
        }
        let mut cpt = vec![Vec::new(); graph.len()];
        for (name, line, probs) in tables {
            let v = graph.node_id(&name).ok_or(ScmError::Parse { line, msg: format!("unknown node `{name}`") })?;
            cpt[v] = probs;
        }
        DiscreteScm::new(graph, domain, cpt)
    }
}

/// Formats `x` rounded to 12 significant digits, shortest form.
fn fmt_prob(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

impl fmt::Display for DiscreteScm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.graph)?;
        for v in self.graph.system_nodes() {
            if self.domain[v] != 2 {
                writeln!(f, "domain: {} {}", self.graph.name(v), self.domain[v])?;
            }
        }
        for v in self.graph.system_nodes() {
            writeln!(f, "cpt: {}", self.graph.name(v))?;
            for row in self.cpt[v].chunks(self.domain[v]) {
                writeln!(f, "{}", row.iter().map(|&p| fmt_prob(p)).join(" "))?;
            }
        }
        Ok(())
    }
}

/// A bandit instance: a model, its arm list and the exact mean of every arm.
#[derive(Debug, Clone)]
pub struct Environment {
    pub name: String,
    pub scm: DiscreteScm,
    pub arms: Vec<Arm>,
    means: Vec<f64>,
}

impl Environment {
    pub fn new(name: impl Into<String>, scm: DiscreteScm) -> Result<Self, ScmError> {
        let arms = scm.all_arms();
        let means = arms.iter().map(|a| scm.true_mean(a)).collect::<Result<_, _>>()?;
        Ok(Self { name: name.into(), scm, arms, means })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn best_mean(&self) -> f64 {
        self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lowest-ordinal arm attaining the best mean.
    pub fn best_arm(&self) -> usize {
        let best = self.best_mean();
        self.means.iter().position(|&m| m == best).expect("at least one arm")
    }
}

/// The two-button game: `I_A → A`, `I_B → B`, `A, B → S → Y` with
/// `P[S=1|a,b] = (1+a+b)/4` and `P[Y=1|s] = (1+s)/3`; 9 arms.
pub fn make_game_env() -> Environment {
    let graph = Dag::from_names(
        &["I_A", "I_B", "A", "B", "S", "Y"],
        &[("I_A", "A"), ("I_B", "B"), ("A", "S"), ("B", "S"), ("S", "Y")],
        &["I_A", "I_B"],
        "Y",
    )
    .expect("game graph is valid");
    let bern = |p: f64| [1.0 - p, p];
    let mut cpt = vec![Vec::new(); 6];
    cpt[2] = bern(0.5).to_vec();
    cpt[3] = bern(0.5).to_vec();
    cpt[4] = [(0, 0), (0, 1), (1, 0), (1, 1)]
        .iter()
        .flat_map(|&(a, b)| bern((1 + a + b) as f64 / 4.0))
        .collect();
    cpt[5] = (0..2).flat_map(|s| bern((1 + s) as f64 / 3.0)).collect();
    let scm = DiscreteScm::new(graph, vec![2; 6], cpt).expect("game cpts are valid");
    Environment::new("game", scm).expect("game state space is tiny")
}

/// Adjacency over the four system nodes of the suite as a 16-bit mask,
/// bit `4*p + c` set for edge `p → c`; node 3 is `Y`.
fn has_cycle4(adj: u16) -> bool {
    let mut indeg = [0u8; 4];
    for p in 0..4 {
        for c in 0..4 {
            if adj >> (4 * p + c) & 1 == 1 {
                indeg[c] += 1;
            }
        }
    }
    let mut removed = [false; 4];
    for _ in 0..4 {
        let Some(v) = (0..4).find(|&v| !removed[v] && indeg[v] == 0) else {
            return true;
        };
        removed[v] = true;
        for c in 0..4 {
            if adj >> (4 * v + c) & 1 == 1 {
                indeg[c] -= 1;
            }
        }
    }
    false
}

const PERMS3: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Smallest adjacency mask over the 3! relabelings of the non-target nodes.
pub fn canonical_code(adj: u16) -> u16 {
    PERMS3
        .iter()
        .map(|perm| relabel(adj, |v| if v == 3 { 3 } else { perm[v] }))
        .min()
        .expect("six permutations")
}

fn relabel(adj: u16, map: impl Fn(usize) -> usize) -> u16 {
    let mut out = 0u16;
    for p in 0..4 {
        for c in 0..4 {
            if adj >> (4 * p + c) & 1 == 1 {
                out |= 1 << (4 * map(p) + map(c));
            }
        }
    }
    out
}

/// Canonical adjacency masks of every 4-node DAG in which `Y` has a parent,
/// one per class under permutations of the other three nodes, ascending.
pub fn dag4_codes() -> Vec<u16> {
    const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let mut codes: Vec<u16> = (0..729u32)
        .filter_map(|mut k| {
            let mut adj = 0u16;
            for &(a, b) in &PAIRS {
                match k % 3 {
                    1 => adj |= 1 << (4 * a + b),
                    2 => adj |= 1 << (4 * b + a),
                    _ => {}
                }
                k /= 3;
            }
            let y_has_parent = (0..3).any(|p| adj >> (4 * p + 3) & 1 == 1);
            (y_has_parent && !has_cycle4(adj)).then(|| canonical_code(adj))
        })
        .collect();
    codes.sort_unstable();
    codes.dedup();
    codes
}

/// Graph with context nodes `I_V1..I_Vk` (ids `0..k`), system nodes
/// `V1..Vk` and target `Y` last, from system-level edges over `0..=k`
/// where `k` denotes `Y`.
fn with_context_nodes(k: usize, system_edges: &[(usize, usize)]) -> Dag {
    let mut names: Vec<String> = (1..=k).map(|i| format!("I_V{i}")).collect();
    names.extend((1..=k).map(|i| format!("V{i}")));
    names.push("Y".to_string());
    let mut edges: Vec<(NodeId, NodeId)> = (0..k).map(|i| (i, k + i)).collect();
    edges.extend(system_edges.iter().map(|&(p, c)| (k + p, k + c)));
    let context: Vec<NodeId> = (0..k).collect();
    Dag::new(names, &edges, &context, 2 * k).expect("generated graphs are acyclic")
}

/// Every 4-node DAG in which `Y` has at least one parent, up to relabeling
/// of the non-target nodes, each with a context node per non-target node.
pub fn enumerate_4node_suite() -> Vec<Dag> {
    dag4_codes()
        .into_iter()
        .map(|adj| {
            let edges: Vec<(usize, usize)> = (0..4)
                .flat_map(|p| (0..4).map(move |c| (p, c)))
                .filter(|&(p, c)| adj >> (4 * p + c) & 1 == 1)
                .collect();
            with_context_nodes(3, &edges)
        })
        .collect()
}

/// Fills binary CPTs from fixed target vectors (one per system node,
/// indexed by node id; context entries ignored).
pub fn parametrize_with_targets(graph: Dag, targets: &[TargetVector]) -> Result<DiscreteScm, ScmError> {
    let n = graph.len();
    let mut cpt = vec![Vec::new(); n];
    for v in graph.system_nodes() {
        let pa = graph.system_parents(v);
        let t = &targets[v];
        cpt[v] = (0..1usize << pa.len())
            .flat_map(|row| {
                let values: Vec<Value> = (0..pa.len()).map(|i| (row >> (pa.len() - 1 - i) & 1) as Value).collect();
                let p = t.prob_one(&values);
                [1.0 - p, p]
            })
            .collect();
    }
    DiscreteScm::new(graph, vec![2; n], cpt)
}

/// Binary parametrization with uniformly drawn target vectors.
pub fn random_parametrization<R: Rng + ?Sized>(graph: Dag, rng: &mut R) -> Result<DiscreteScm, ScmError> {
    let targets: Vec<TargetVector> = (0..graph.len())
        .map(|v| {
            let k = if graph.is_context(v) { 0 } else { graph.system_parents(v).len() };
            TargetVector((0..k).map(|_| rng.random_range(0..2)).collect())
        })
        .collect();
    parametrize_with_targets(graph, &targets)
}

/// Random 6-node graph in topological order `V1..V5, Y`: every node after the
/// first draws one or two distinct earlier parents (two with probability
/// `two_parent_prob`). All non-target nodes get a context node; 243 arms.
pub fn make_6node_env_with<R: Rng + ?Sized>(rng: &mut R, two_parent_prob: f64) -> Environment {
    let mut edges = Vec::new();
    for i in 1..6 {
        let k = if rng.random_bool(two_parent_prob) { 2 } else { 1 };
        for p in index::sample(rng, i, k.min(i)).into_vec() {
            edges.push((p, i));
        }
    }
    let graph = with_context_nodes(5, &edges);
    let scm = random_parametrization(graph, rng).expect("binary parametrization is valid");
    Environment::new("dag6", scm).expect("64 joint states")
}

pub fn make_6node_env<R: Rng + ?Sized>(rng: &mut R) -> Environment {
    make_6node_env_with(rng, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arm(v: &[Option<Value>]) -> Arm {
        Arm::new(v.to_vec())
    }

    #[test]
    fn game_means_match_hand_enumeration() {
        let env = make_game_env();
        let scm = &env.scm;
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(scm.true_mean(&arm(&[Some(1), Some(1)])).unwrap(), 7.0 / 12.0));
        assert!(close(scm.true_mean(&arm(&[None, None])).unwrap(), 0.5));
        assert!(close(scm.true_mean(&arm(&[Some(0), Some(0)])).unwrap(), 5.0 / 12.0));
    }

    #[test]
    fn game_has_nine_arms_and_best_is_press_both() {
        let env = make_game_env();
        assert_eq!(env.arms.len(), 9);
        assert_eq!(env.arms[0], arm(&[None, None]));
        assert_eq!(env.arms[env.best_arm()], arm(&[Some(1), Some(1)]));
        assert!((env.best_mean() - 7.0 / 12.0).abs() < 1e-12);
        let s = env.scm.graph().node_id("S").unwrap();
        assert!(env.scm.graph().oracle_separating_sets(2).contains(&vec![s]));
    }

    #[test]
    fn forced_nodes_are_always_forced() {
        let env = make_game_env();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let both = arm(&[Some(1), Some(1)]);
        for _ in 0..1000 {
            let v = env.scm.sample(&both, &mut rng);
            assert_eq!((v[2], v[3]), (1, 1));
        }
    }

    #[test]
    fn observed_button_is_fair_coin() {
        let env = make_game_env();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let ones = (0..n).filter(|_| env.scm.sample(&env.arms[0], &mut rng)[2] == 1).count();
        let sigma = (0.25 / n as f64).sqrt();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let env = make_game_env();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|i| env.scm.sample(&env.arms[i % 9], &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn target_vector_formula() {
        let t = TargetVector(vec![1, 0]);
        assert_eq!(t.prob_one(&[1, 0]), 0.75);
        assert_eq!(t.prob_one(&[0, 1]), 0.25);
        assert_eq!(TargetVector(vec![]).prob_one(&[]), 0.5);
    }

    #[test]
    fn parametrization_rows_follow_targets() {
        let g = Dag::from_names(&["A", "B", "Y"], &[("A", "Y"), ("B", "Y")], &[], "Y").unwrap();
        let targets = vec![TargetVector(vec![]), TargetVector(vec![]), TargetVector(vec![1, 0])];
        let scm = parametrize_with_targets(g, &targets).unwrap();
        assert_eq!(scm.cpt(0), &[0.5, 0.5]);
        // rows (a,b) = 00, 01, 10, 11 -> matches 1, 0, 2, 1
        let p1: Vec<f64> = scm.cpt(2).chunks(2).map(|r| r[1]).collect();
        assert_eq!(p1, vec![0.5, 0.25, 0.75, 0.5]);
    }

    #[test]
    fn suite_classes_cover_every_labeled_graph() {
        let suite = enumerate_4node_suite();
        // 543 labeled 4-node DAGs, 200 of which leave Y parentless.
        let codes = dag4_codes();
        let orbit_total: usize = codes
            .iter()
            .map(|&c| {
                let mut orbit: Vec<u16> = PERMS3
                    .iter()
                    .map(|perm| relabel(c, |v| if v == 3 { 3 } else { perm[v] }))
                    .collect();
                orbit.sort_unstable();
                orbit.dedup();
                orbit.len()
            })
            .sum();
        assert_eq!(orbit_total, 343);
        assert_eq!(suite.len(), 64);
        for g in &suite {
            assert!(!g.system_parents(g.target()).is_empty());
            assert_eq!(g.context_nodes().len(), 3);
        }
        let env = Environment::new("x", random_parametrization(suite[0].clone(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap()).unwrap();
        assert_eq!(env.arms.len(), 27);
    }

    #[test]
    fn six_node_env_shape() {
        for seed in 0..20 {
            let env = make_6node_env(&mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(env.arms.len(), 243);
            let g = env.scm.graph();
            let sys = g.system_nodes();
            assert_eq!(sys.len(), 6);
            for &v in &sys[1..] {
                let k = g.system_parents(v).len();
                assert!((1..=2).contains(&k));
            }
            assert!(g.system_parents(sys[0]).is_empty());
        }
    }

    #[test]
    fn capacity_error_past_cap() {
        let env = make_game_env();
        let err = env.scm.true_mean_with_cap(&env.arms[0], 4).unwrap_err();
        assert_eq!(err, ScmError::Capacity { size: 16, cap: 4 });
    }

    #[test]
    fn invalid_models_are_rejected() {
        let g = Dag::from_names(&["X", "Y"], &[("X", "Y")], &[], "Y").unwrap();
        let bad_row = DiscreteScm::new(g.clone(), vec![2, 2], vec![vec![0.5, 0.6], vec![0.5, 0.5, 0.5, 0.5]]);
        assert!(matches!(bad_row, Err(ScmError::CptRow { .. })));
        let bad_shape = DiscreteScm::new(g.clone(), vec![2, 2], vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert!(matches!(bad_shape, Err(ScmError::CptShape { .. })));
        let bad_target = DiscreteScm::new(g, vec![2, 3], vec![vec![0.5, 0.5], vec![0.2; 6]]);
        assert!(matches!(bad_target, Err(ScmError::Domain { .. })));
        let fan = Dag::from_names(&["I", "X", "Y"], &[("I", "X"), ("I", "Y")], &["I"], "Y").unwrap();
        let fan = DiscreteScm::new(fan, vec![2; 3], vec![vec![], vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert!(matches!(fan, Err(ScmError::ContextFanOut(_))));
    }

    #[test]
    fn text_round_trip_preserves_model() {
        let env = make_6node_env(&mut ChaCha8Rng::seed_from_u64(11));
        let text = env.scm.to_string();
        let back: DiscreteScm = text.parse().unwrap();
        assert_eq!(back.graph(), env.scm.graph());
        for v in 0..back.graph().len() {
            for (a, b) in back.cpt(v).iter().zip(env.scm.cpt(v)) {
                assert!((a - b).abs() < 1e-11);
            }
        }
        assert_eq!(back.to_string(), text);
    }

    #[test]
    fn game_text_golden() {
        let text = make_game_env().scm.to_string();
        let expected = "\
nodes: I_A I_B A B S Y
context: I_A I_B
target: Y
I_A->A
I_B->B
A->S
B->S
S->Y
cpt: A
0.5 0.5
cpt: B
0.5 0.5
cpt: S
0.75 0.25
0.5 0.5
0.5 0.5
0.25 0.75
cpt: Y
0.666666666667 0.333333333333
0.333333333333 0.666666666667
";
        assert_eq!(text, expected);
    }
}
