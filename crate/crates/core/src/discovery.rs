//! Separating-set discovery by direct G² conditional-independence tests of
//! the arm against the target, plus scoring against the graph oracle.

use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::graph::{Dag, NodeId};
use crate::special::chi2_sf;

/// One side of an independence test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarSpec {
    /// The whole context assignment as one categorical variable.
    Arm,
    Node(NodeId),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TestError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("the dataset is empty")]
    Empty,
    #[error("conditioning set overlaps the tested variables")]
    Overlap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2Result {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Contingency table for one stratum, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub rows: usize,
    pub cols: usize,
    pub counts: Vec<u64>,
}

impl Table {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, counts: vec![0; rows * cols] }
    }

    pub fn from_rows(rows: &[&[u64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        Self { rows: rows.len(), cols, counts: rows.iter().flat_map(|r| r.iter().copied()).collect() }
    }

    fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.counts[j * self.rows + i] = self.counts[i * self.cols + j];
            }
        }
        out
    }

    /// `(G², df)` contribution; degenerate strata contribute nothing.
    fn g2(&self) -> (f64, usize) {
        let row: Vec<u64> = self.counts.chunks(self.cols).map(|r| r.iter().sum()).collect();
        let col: Vec<u64> = (0..self.cols).map(|j| (0..self.rows).map(|i| self.counts[i * self.cols + j]).sum()).collect();
        let r = row.iter().filter(|&&x| x > 0).count();
        let c = col.iter().filter(|&&x| x > 0).count();
        if r < 2 || c < 2 {
            return (0.0, 0);
        }
        let n: u64 = row.iter().sum();
        let mut g = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let o = self.counts[i * self.cols + j];
                if o > 0 {
                    let e = row[i] as f64 * col[j] as f64 / n as f64;
                    g += o as f64 * (o as f64 / e).ln();
                }
            }
        }
        (2.0 * g, (r - 1) * (c - 1))
    }
}

/// G² statistic and p-value pooled over strata.
pub fn g2_from_strata(strata: &[Table]) -> G2Result {
    let (statistic, df) = strata
        .iter()
        .map(Table::g2)
        .fold((0.0, 0), |(g, df), (g1, df1)| (g + g1, df + df1));
    let statistic = statistic.max(0.0);
    let p_value = if df == 0 { 1.0 } else { chi2_sf(statistic, df) };
    G2Result { statistic, df, p_value }
}

fn levels(d: &Dataset, v: VarSpec) -> usize {
    match v {
        VarSpec::Arm => d.schema().num_arms(),
        VarSpec::Node(n) => d.schema().domain(n),
    }
}

/// Strata of the `x` by `y` contingency table given each joint value of `cond`.
pub fn strata(d: &Dataset, x: VarSpec, y: VarSpec, cond: &[NodeId]) -> Result<Vec<Table>, TestError> {
    let schema = d.schema();
    for &v in cond {
        if x == VarSpec::Node(v) || y == VarSpec::Node(v) {
            return Err(TestError::Overlap);
        }
        if v >= schema.graph().len() || schema.graph().is_context(v) {
            return Err(DataError::InvalidSet(format!("node #{v} is not a system node")).into());
        }
    }
    let target = VarSpec::Node(schema.target());
    let sorted = cond.windows(2).all(|w| w[0] < w[1]);
    if sorted && !cond.contains(&schema.target()) && d.is_tracked(cond) {
        if x == VarSpec::Arm && y == target {
            return Ok(tracked_strata(d, cond));
        }
        if y == VarSpec::Arm && x == target {
            return Ok(tracked_strata(d, cond).iter().map(Table::transpose).collect());
        }
    }
    let (rows, cols) = (levels(d, x), levels(d, y));
    let mut out = vec![Table::zeros(rows, cols); schema.joint_size(cond)];
    let pick = |v: VarSpec, arm: usize, values: &[u8]| match v {
        VarSpec::Arm => arm,
        VarSpec::Node(n) => values[n] as usize,
    };
    for (arm, values) in d.records() {
        let code = cond.iter().fold(0, |acc, &v| acc * schema.domain(v) + values[v] as usize);
        out[code].counts[pick(x, arm, values) * cols + pick(y, arm, values)] += 1;
    }
    Ok(out)
}

fn tracked_strata(d: &Dataset, cond: &[NodeId]) -> Vec<Table> {
    let counts = d.set_counts(cond).expect("tracked set");
    let k = d.schema().num_arms();
    (0..counts.size())
        .map(|code| {
            let mut t = Table::zeros(k, 2);
            for arm in 0..k {
                t.counts[arm * 2] = counts.n_s_arm_y(code, arm, 0);
                t.counts[arm * 2 + 1] = counts.n_s_arm_y(code, arm, 1);
            }
            t
        })
        .collect()
}

/// G² test of `x ⊥ y | cond`.
pub fn g2_test(d: &Dataset, x: VarSpec, y: VarSpec, cond: &[NodeId]) -> Result<G2Result, TestError> {
    if d.is_empty() {
        return Err(TestError::Empty);
    }
    Ok(g2_from_strata(&strata(d, x, y, cond)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Oracle,
    DirectTest,
}

/// Separating sets currently believed to hold for every arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SepSetCatalog {
    pub accepted: Vec<Vec<NodeId>>,
    pub provenance: Provenance,
    pub last_run_n: Option<usize>,
}

impl SepSetCatalog {
    pub fn empty() -> Self {
        Self { accepted: Vec::new(), provenance: Provenance::Oracle, last_run_n: None }
    }

    /// True separating sets of the graph up to `max_size`.
    pub fn oracle(g: &Dag, max_size: usize) -> Self {
        Self { accepted: g.oracle_separating_sets(max_size), provenance: Provenance::Oracle, last_run_n: None }
    }

    /// The parents of the target as the single separating set.
    pub fn target_parents(g: &Dag) -> Self {
        Self { accepted: vec![g.system_parents(g.target())], provenance: Provenance::Oracle, last_run_n: None }
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }
}

/// True when discovery has never run or the dataset grew by `growth` since.
pub fn should_rerun_with(catalog: &SepSetCatalog, n_now: usize, growth: f64) -> bool {
    match catalog.last_run_n {
        None => true,
        Some(last) => n_now as f64 >= (growth * last as f64).ceil(),
    }
}

/// Re-run cadence with 25% growth.
pub fn should_rerun(catalog: &SepSetCatalog, n_now: usize) -> bool {
    match catalog.last_run_n {
        None => true,
        Some(last) => n_now >= (5 * last).div_ceil(4),
    }
}

/// Default test level `2.5 / √N`.
pub fn default_alpha(n: usize) -> f64 {
    2.5 / (n as f64).sqrt()
}

/// Accepts every candidate `S` whose test of arm ⊥ Y | S has p-value ≥ `alpha`.
pub fn discover_with_alpha(d: &Dataset, max_size: usize, alpha: f64) -> Result<SepSetCatalog, TestError> {
    let target = VarSpec::Node(d.schema().target());
    let mut accepted = Vec::new();
    for s in d.schema().graph().candidate_sets(max_size) {
        if g2_test(d, VarSpec::Arm, target, &s)?.p_value >= alpha {
            accepted.push(s);
        }
    }
    Ok(SepSetCatalog { accepted, provenance: Provenance::DirectTest, last_run_n: Some(d.len()) })
}

pub fn discover(d: &Dataset, max_size: usize) -> Result<SepSetCatalog, TestError> {
    discover_with_alpha(d, max_size, default_alpha(d.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscoveryMetrics {
    pub sensitivity: f64,
    pub false_positive_rate: f64,
    pub n: usize,
    /// Set when the graph has no true separating set and sensitivity is 1 by convention.
    pub no_true_sets: bool,
}

/// Set-level sensitivity and false positive rate of `catalog`.
pub fn score_discovery(catalog: &SepSetCatalog, g: &Dag, max_size: usize) -> DiscoveryMetrics {
    let truth = g.oracle_separating_sets(max_size);
    let candidates = g.candidate_sets(max_size);
    let hits = catalog.accepted.iter().filter(|s| truth.contains(s)).count();
    let false_hits = catalog.accepted.len() - hits;
    let negatives = candidates.len() - truth.len();
    DiscoveryMetrics {
        sensitivity: if truth.is_empty() { 1.0 } else { hits as f64 / truth.len() as f64 },
        false_positive_rate: if negatives == 0 { 0.0 } else { false_hits as f64 / negatives as f64 },
        n: catalog.last_run_n.unwrap_or(0),
        no_true_sets: truth.is_empty(),
    }
}
