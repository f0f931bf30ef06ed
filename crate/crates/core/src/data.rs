//! Append-only interaction log with count queries `N_D(p)` and the plain
//! empirical estimators built from them.
//!
//! Counts are integers; ratios are formed only at the query boundary. A
//! conditioning set `S` can be registered with [`Dataset::track`], after which
//! the joint table `N(S = s, I = ζ, Y = y)` is maintained incrementally on
//! every append. Queries on untracked sets fall back to a full scan, so every
//! query is answerable from a shared reference.

use std::borrow::Cow;
use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::graph::{Dag, NodeId};
use crate::scm::{Arm, DiscreteScm, Environment, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DataError {
    #[error("no data: {0}")]
    NoData(String),
    #[error("invalid outcome: {0}")]
    InvalidOutcome(String),
    #[error("unknown arm {0}")]
    UnknownArm(String),
    #[error("invalid variable set: {0}")]
    InvalidSet(String),
    #[error("value {value:?} of the separating set was never observed")]
    IncompleteSupport { value: Vec<Value> },
}

/// Static description of the variables and arms a dataset ranges over.
#[derive(Debug, Clone)]
pub struct Schema {
    graph: Dag,
    domains: Vec<usize>,
    intervened_by: Vec<Option<usize>>,
    arms: Vec<Arm>,
    arm_lookup: HashMap<Arm, usize>,
}

impl Schema {
    /// `domains` has one entry per node; a context node's entry is ignored.
    pub fn new(graph: Dag, domains: Vec<usize>, arms: Vec<Arm>) -> Self {
        assert_eq!(domains.len(), graph.len(), "one domain per node");
        let mut intervened_by = vec![None; graph.len()];
        for (k, c) in graph.context_nodes().into_iter().enumerate() {
            for &child in graph.children(c) {
                intervened_by[child] = Some(k);
            }
        }
        let arm_lookup = arms.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
        Self { graph, domains, intervened_by, arms, arm_lookup }
    }

    pub fn from_scm(scm: &DiscreteScm, arms: Vec<Arm>) -> Self {
        Self::new(scm.graph().clone(), scm.domains(), arms)
    }

    pub fn for_environment(env: &Environment) -> Self {
        Self::from_scm(&env.scm, env.arms.clone())
    }

    pub fn graph(&self) -> &Dag {
        &self.graph
    }

    pub fn target(&self) -> NodeId {
        self.graph.target()
    }

    pub fn domain(&self, v: NodeId) -> usize {
        self.domains[v]
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arm_index(&self, arm: &Arm) -> Option<usize> {
        self.arm_lookup.get(arm).copied()
    }

    /// Value `arm` forces on node `v`, if `v` is intervened on.
    pub fn forced_value(&self, arm: usize, v: NodeId) -> Option<Value> {
        self.intervened_by[v].and_then(|k| self.arms[arm].values()[k])
    }

    /// Number of joint values of `vars`.
    pub fn joint_size(&self, vars: &[NodeId]) -> usize {
        vars.iter().map(|&v| self.domains[v]).product()
    }

    /// Mixed-radix code of a value tuple (last variable fastest).
    pub fn encode(&self, vars: &[NodeId], values: &[Value]) -> usize {
        vars.iter()
            .zip(values)
            .fold(0, |acc, (&v, &x)| acc * self.domains[v] + x as usize)
    }

    pub fn decode(&self, vars: &[NodeId], mut code: usize) -> Vec<Value> {
        let mut out = vec![0; vars.len()];
        for (i, &v) in vars.iter().enumerate().rev() {
            out[i] = (code % self.domains[v]) as Value;
            code /= self.domains[v];
        }
        out
    }

    /// Checks that `vars` is a sorted, duplicate-free subset of `V \ {Y}`.
    pub fn check_set(&self, vars: &[NodeId]) -> Result<(), DataError> {
        for (i, &v) in vars.iter().enumerate() {
            if v >= self.graph.len() || self.graph.is_context(v) || v == self.target() {
                return Err(DataError::InvalidSet(format!("node #{v} is not a non-target system node")));
            }
            if i > 0 && vars[i - 1] >= v {
                return Err(DataError::InvalidSet("variables must be strictly increasing".into()));
            }
        }
        Ok(())
    }
}

/// A conjunction of variable-value equalities and an optional arm equality.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Predicate {
    pub arm: Option<usize>,
    pub values: Vec<(NodeId, Value)>,
}

/// Joint counts `N(S = s, I = ζ, Y = y)` for one conditioning set.
#[derive(Debug, Clone)]
pub struct SetCounts {
    vars: Vec<NodeId>,
    num_arms: usize,
    joint: Vec<u64>,
    by_value: Vec<u64>,
    ones_by_value: Vec<u64>,
}

impl SetCounts {
    fn new(vars: &[NodeId], size: usize, num_arms: usize) -> Self {
        Self {
            vars: vars.to_vec(),
            num_arms,
            joint: vec![0; size * num_arms * 2],
            by_value: vec![0; size],
            ones_by_value: vec![0; size],
        }
    }

    fn add(&mut self, code: usize, arm: usize, y: Value) {
        self.joint[(code * self.num_arms + arm) * 2 + y as usize] += 1;
        self.by_value[code] += 1;
        self.ones_by_value[code] += y as u64;
    }

    pub fn vars(&self) -> &[NodeId] {
        &self.vars
    }

    pub fn size(&self) -> usize {
        self.by_value.len()
    }

    /// `N(S = s)`.
    pub fn n_s(&self, code: usize) -> u64 {
        self.by_value[code]
    }

    /// `N(Y = 1, S = s)`.
    pub fn n_s_y1(&self, code: usize) -> u64 {
        self.ones_by_value[code]
    }

    /// `N(S = s, I = ζ, Y = y)`.
    pub fn n_s_arm_y(&self, code: usize, arm: usize, y: Value) -> u64 {
        self.joint[(code * self.num_arms + arm) * 2 + y as usize]
    }

    /// `N(S = s, I = ζ)`.
    pub fn n_s_arm(&self, code: usize, arm: usize) -> u64 {
        self.n_s_arm_y(code, arm, 0) + self.n_s_arm_y(code, arm, 1)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<Schema>,
    stride: usize,
    arms: Vec<u32>,
    values: Vec<Value>,
    arm_n: Vec<u64>,
    arm_y1: Vec<u64>,
    tracked: HashMap<Vec<NodeId>, SetCounts>,
}

impl Dataset {
    pub fn new(schema: Arc<Schema>) -> Self {
        let k = schema.num_arms();
        Self {
            stride: schema.graph().len(),
            schema,
            arms: Vec::new(),
            values: Vec::new(),
            arm_n: vec![0; k],
            arm_y1: vec![0; k],
            tracked: HashMap::new(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn shared_schema(&self) -> Arc<Schema> {
        Arc::clone(&self.schema)
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    /// The `i`-th record: arm ordinal and values indexed by node id.
    pub fn record(&self, i: usize) -> (usize, &[Value]) {
        (self.arms[i] as usize, &self.values[i * self.stride..(i + 1) * self.stride])
    }

    pub fn records(&self) -> impl Iterator<Item = (usize, &[Value])> + '_ {
        (0..self.len()).map(|i| self.record(i))
    }

    /// Appends one round. `outcome` is indexed by node id and must assign a
    /// value inside its domain to every system node (context slots are ignored).
    pub fn append(&mut self, arm: usize, outcome: &[Value]) -> Result<(), DataError> {
        if arm >= self.schema.num_arms() {
            return Err(DataError::UnknownArm(format!("#{arm}")));
        }
        if outcome.len() != self.stride {
            return Err(DataError::InvalidOutcome(format!(
                "expected {} values, got {}",
                self.stride,
                outcome.len()
            )));
        }
        let g = self.schema.graph();
        for v in g.system_nodes() {
            if outcome[v] as usize >= self.schema.domain(v) {
                return Err(DataError::InvalidOutcome(format!("value {} outside the domain of `{}`", outcome[v], g.name(v))));
            }
        }
        let y = outcome[self.schema.target()];
        self.arms.push(arm as u32);
        self.values.extend_from_slice(outcome);
        self.arm_n[arm] += 1;
        self.arm_y1[arm] += y as u64;
        for counts in self.tracked.values_mut() {
            let code = counts.vars.iter().fold(0, |acc, &v| acc * self.schema.domains[v] + outcome[v] as usize);
            counts.add(code, arm, y);
        }
        Ok(())
    }

    pub fn append_arm(&mut self, arm: &Arm, outcome: &[Value]) -> Result<(), DataError> {
        let idx = self.schema.arm_index(arm).ok_or_else(|| DataError::UnknownArm(arm.to_string()))?;
        self.append(idx, outcome)
    }

    /// Registers `vars` for incremental counting, back-filling existing records.
    pub fn track(&mut self, vars: &[NodeId]) -> Result<(), DataError> {
        if !self.tracked.contains_key(vars) {
            let counts = self.scan_set(vars)?;
            self.tracked.insert(vars.to_vec(), counts);
        }
        Ok(())
    }

    pub fn is_tracked(&self, vars: &[NodeId]) -> bool {
        self.tracked.contains_key(vars)
    }

    fn scan_set(&self, vars: &[NodeId]) -> Result<SetCounts, DataError> {
        self.schema.check_set(vars)?;
        let mut counts = SetCounts::new(vars, self.schema.joint_size(vars), self.schema.num_arms());
        let target = self.schema.target();
        for (arm, values) in self.records() {
            let code = vars.iter().fold(0, |acc, &v| acc * self.schema.domains[v] + values[v] as usize);
            counts.add(code, arm, values[target]);
        }
        Ok(counts)
    }

    /// Joint counts for `vars`: borrowed when tracked, otherwise scanned.
    pub fn set_counts(&self, vars: &[NodeId]) -> Result<Cow<'_, SetCounts>, DataError> {
        match self.tracked.get(vars) {
            Some(c) => Ok(Cow::Borrowed(c)),
            None => Ok(Cow::Owned(self.scan_set(vars)?)),
        }
    }

    /// `N(I = ζ)`.
    pub fn n_arm(&self, arm: usize) -> u64 {
        self.arm_n[arm]
    }

    /// `N(Y = 1, I = ζ)`.
    pub fn n_arm_y1(&self, arm: usize) -> u64 {
        self.arm_y1[arm]
    }

    /// `N_D(p)` by brute-force scan over all records.
    pub fn count_scan(&self, pred: &Predicate) -> u64 {
        self.records()
            .filter(|(arm, values)| {
                pred.arm.is_none_or(|a| a == *arm) && pred.values.iter().all(|&(v, x)| values[v] == x)
            })
            .count() as u64
    }

    /// `N_D(p)` answered from the incremental indexes where possible.
    pub fn count(&self, pred: &Predicate) -> u64 {
        let target = self.schema.target();
        let mut sorted = pred.values.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return 0;
        }
        let y = sorted.iter().find(|(v, _)| *v == target).map(|&(_, x)| x);
        let s: Vec<(NodeId, Value)> = sorted.into_iter().filter(|(v, _)| *v != target).collect();
        let vars: Vec<NodeId> = s.iter().map(|&(v, _)| v).collect();
        if vars.is_empty() {
            return match (pred.arm, y) {
                (Some(a), Some(1)) => self.arm_y1[a],
                (Some(a), Some(_)) => self.arm_n[a] - self.arm_y1[a],
                (Some(a), None) => self.arm_n[a],
                _ => self.count_scan(pred),
            };
        }
        let Some(counts) = self.tracked.get(&vars) else {
            return self.count_scan(pred);
        };
        let vals: Vec<Value> = s.iter().map(|&(_, x)| x).collect();
        if vars.iter().zip(&vals).any(|(&v, &x)| x as usize >= self.schema.domains[v]) {
            return 0;
        }
        let code = self.schema.encode(&vars, &vals);
        match (pred.arm, y) {
            (Some(a), Some(y)) => counts.n_s_arm_y(code, a, y),
            (Some(a), None) => counts.n_s_arm(code, a),
            (None, Some(1)) => counts.n_s_y1(code),
            (None, Some(_)) => counts.n_s(code) - counts.n_s_y1(code),
            (None, None) => counts.n_s(code),
        }
    }

    /// `p̂(s | ζ) = N(S = s, I = ζ) / N(I = ζ)`.
    pub fn p_hat(&self, vars: &[NodeId], value: &[Value], arm: usize) -> Result<f64, DataError> {
        let n = self.arm_n[arm];
        if n == 0 {
            return Err(DataError::NoData(format!("arm #{arm} was never played")));
        }
        let counts = self.set_counts(vars)?;
        Ok(counts.n_s_arm(self.schema.encode(vars, value), arm) as f64 / n as f64)
    }

    /// `μ̂(s) = N(Y = 1, S = s) / N(S = s)`, pooled over all arms.
    pub fn mu_hat(&self, vars: &[NodeId], value: &[Value]) -> Result<f64, DataError> {
        let counts = self.set_counts(vars)?;
        let code = self.schema.encode(vars, value);
        match counts.n_s(code) {
            0 => Err(DataError::NoData(format!("value {value:?} never observed"))),
            n => Ok(counts.n_s_y1(code) as f64 / n as f64),
        }
    }

    /// Sample mean of `Y` under arm `ζ`.
    pub fn mu_sm(&self, arm: usize) -> Result<f64, DataError> {
        match self.arm_n[arm] {
            0 => Err(DataError::NoData(format!("arm #{arm} was never played"))),
            n => Ok(self.arm_y1[arm] as f64 / n as f64),
        }
    }

    /// Writes the log as CSV: one column per context variable (`-` for ∅)
    /// followed by one column per system variable.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let g = self.schema.graph();
        let context = g.context_nodes();
        let system = g.system_nodes();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(context.iter().chain(&system).map(|&v| g.name(v)))?;
        for (arm, values) in self.records() {
            let arm = &self.schema.arms()[arm];
            let row = arm
                .values()
                .iter()
                .map(|v| v.map_or_else(|| "-".to_string(), |x| x.to_string()))
                .chain(system.iter().map(|&v| values[v].to_string()));
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::make_game_env;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const S: NodeId = 4;
    const Y: NodeId = 5;

    fn game_dataset() -> (Environment, Dataset) {
        let env = make_game_env();
        let d = Dataset::new(Arc::new(Schema::for_environment(&env)));
        (env, d)
    }

    fn outcome(s: Value, y: Value) -> Vec<Value> {
        vec![0, 0, 1, 1, s, y]
    }

    #[test]
    fn single_record_counts() {
        let (_, mut d) = game_dataset();
        d.append(3, &outcome(1, 1)).unwrap();
        assert_eq!(d.n_arm(3), 1);
        assert_eq!(d.n_arm(0), 0);
        d.append(3, &outcome(1, 1)).unwrap();
        assert_eq!(d.n_arm(3), 2);
        assert_eq!(d.count(&Predicate { arm: Some(3), values: vec![(S, 1)] }), 2);
    }

    #[test]
    fn incomplete_outcome_is_rejected() {
        let (_, mut d) = game_dataset();
        assert!(matches!(d.append(0, &[0, 0, 1]), Err(DataError::InvalidOutcome(_))));
        assert!(matches!(d.append(0, &[0, 0, 1, 1, 2, 0]), Err(DataError::InvalidOutcome(_))));
        assert!(matches!(d.append(99, &outcome(0, 0)), Err(DataError::UnknownArm(_))));
        assert!(d.is_empty());
    }

    #[test]
    fn p_hat_ratios() {
        let (_, mut d) = game_dataset();
        for s in [1, 1, 1, 0] {
            d.append(2, &outcome(s, 0)).unwrap();
        }
        assert_eq!(d.p_hat(&[S], &[1], 2).unwrap(), 0.75);
        assert_eq!(d.p_hat(&[S], &[0], 2).unwrap(), 0.25);
        assert!(matches!(d.p_hat(&[S], &[1], 0), Err(DataError::NoData(_))));
        let a = 2;
        assert_eq!(d.p_hat(&[a, S], &[0, 1], 2).unwrap(), 0.0);
    }

    #[test]
    fn mu_hat_pools_across_arms() {
        let (_, mut d) = game_dataset();
        d.append(1, &outcome(1, 1)).unwrap();
        d.append(5, &outcome(1, 0)).unwrap();
        d.append(5, &outcome(0, 1)).unwrap();
        assert_eq!(d.mu_hat(&[S], &[1]).unwrap(), 0.5);
        assert_eq!(d.mu_hat(&[S], &[0]).unwrap(), 1.0);
        let (_, empty) = game_dataset();
        assert!(matches!(empty.mu_hat(&[S], &[0]), Err(DataError::NoData(_))));
    }

    #[test]
    fn mu_sm_is_arm_mean() {
        let (_, mut d) = game_dataset();
        for i in 0..10 {
            d.append(4, &outcome(0, (i < 4) as Value)).unwrap();
        }
        assert_eq!(d.mu_sm(4).unwrap(), 0.4);
        d.append(0, &outcome(0, 1)).unwrap();
        assert_eq!(d.mu_sm(0).unwrap(), 1.0);
        assert!(d.mu_sm(1).is_err());
    }

    #[test]
    fn invalid_sets_are_rejected() {
        let (_, d) = game_dataset();
        assert!(matches!(d.set_counts(&[Y]), Err(DataError::InvalidSet(_))));
        assert!(matches!(d.set_counts(&[0]), Err(DataError::InvalidSet(_))));
        assert!(matches!(d.set_counts(&[S, 2]), Err(DataError::InvalidSet(_))));
    }

    #[test]
    fn cache_matches_scan_for_random_predicates() {
        let (env, mut d) = game_dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        d.track(&[S]).unwrap();
        d.track(&[2, 4]).unwrap();
        for _ in 0..100 {
            let arm = rng.random_range(0..9);
            let v = env.scm.sample(&env.arms[arm], &mut rng);
            d.append(arm, &v).unwrap();
        }
        d.track(&[3]).unwrap();
        for _ in 0..20 {
            let mut values = Vec::new();
            for v in [2, 3, 4, 5] {
                if rng.random_bool(0.5) {
                    values.push((v, rng.random_range(0..2)));
                }
            }
            let arm = rng.random_bool(0.5).then(|| rng.random_range(0..9));
            let pred = Predicate { arm, values };
            assert_eq!(d.count(&pred), d.count_scan(&pred), "{pred:?}");
        }
    }

    #[test]
    fn csv_dump_layout() {
        let (_, mut d) = game_dataset();
        d.append(5, &outcome(1, 0)).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        // arm 5 = (0, 1): I_A = do(A=0), I_B = do(B=1)
        assert_eq!(String::from_utf8(buf).unwrap(), "I_A,I_B,A,B,S,Y\n0,1,1,1,1,0\n");
    }
}
