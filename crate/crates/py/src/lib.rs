//! Python bindings: environments, datasets with the information-sharing
//! estimators, separating-set discovery and the experiment runner.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sepset_bandit::harness::{build_environments, write_outputs};
use sepset_bandit::{discovery, inference, scm, Dag, NodeId, PolicyConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn harness_err(e: sepset_bandit::HarnessError) -> PyErr {
    match e {
        sepset_bandit::HarnessError::Io(msg) => PyIOError::new_err(msg),
        other => value_err(other),
    }
}

fn node_ids(g: &Dag, names: &[String]) -> PyResult<Vec<NodeId>> {
    let mut ids = names
        .iter()
        .map(|n| g.node_id(n).ok_or_else(|| value_err(format!("unknown node `{n}`"))))
        .collect::<PyResult<Vec<_>>>()?;
    ids.sort_unstable();
    Ok(ids)
}

fn node_names(g: &Dag, ids: &[NodeId]) -> Vec<String> {
    ids.iter().map(|&v| g.name(v).to_string()).collect()
}

/// A bandit environment: causal model, arms and exact arm means.
#[pyclass(module = "sepset", frozen)]
struct Environment {
    inner: Arc<scm::Environment>,
}

#[pymethods]
impl Environment {
    /// The two-button game with 9 arms.
    #[staticmethod]
    fn game() -> Self {
        Self { inner: Arc::new(scm::make_game_env()) }
    }

    /// Environment `run` of an experiment on `spec` (`game`, `dag4`, `dag6`
    /// or `file:PATH`) with the given seed.
    #[staticmethod]
    #[pyo3(signature = (spec, seed=0, run=0))]
    fn from_spec(spec: &str, seed: u64, run: usize) -> PyResult<Self> {
        let spec = spec.parse().map_err(harness_err)?;
        let mut envs = build_environments(&spec, run + 1, seed).map_err(harness_err)?;
        Ok(Self { inner: envs.swap_remove(run) })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn nodes(&self) -> Vec<String> {
        self.inner.scm.graph().names().to_vec()
    }

    #[getter]
    fn num_arms(&self) -> usize {
        self.inner.arms.len()
    }

    #[getter]
    fn means(&self) -> Vec<f64> {
        self.inner.means().to_vec()
    }

    #[getter]
    fn best_arm(&self) -> usize {
        self.inner.best_arm()
    }

    /// Context assignment of an arm; `None` means observe.
    fn arm(&self, index: usize) -> PyResult<Vec<Option<u8>>> {
        self.inner
            .arms
            .get(index)
            .map(|a| a.values().to_vec())
            .ok_or_else(|| PyIndexError::new_err(format!("arm {index} out of range")))
    }

    fn d_separated(&self, a: Vec<String>, b: Vec<String>, given: Vec<String>) -> PyResult<bool> {
        let g = self.inner.scm.graph();
        g.d_separated(&node_ids(g, &a)?, &node_ids(g, &b)?, &node_ids(g, &given)?)
            .map_err(value_err)
    }

    /// Sets of system nodes that d-separate every context node from the target.
    #[pyo3(signature = (max_size=3))]
    fn separating_sets(&self, max_size: usize) -> Vec<Vec<String>> {
        let g = self.inner.scm.graph();
        g.oracle_separating_sets(max_size).iter().map(|s| node_names(g, s)).collect()
    }

    /// Model in the text format accepted by `file:PATH` environments.
    fn to_text(&self) -> String {
        self.inner.scm.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Environment({:?}, arms={})", self.inner.name, self.inner.arms.len())
    }
}

/// Interaction log of one environment with its own random stream.
#[pyclass(module = "sepset")]
struct Dataset {
    env: Arc<scm::Environment>,
    inner: sepset_bandit::Dataset,
    rng: ChaCha8Rng,
}

impl Dataset {
    fn set(&self, names: &[String]) -> PyResult<Vec<NodeId>> {
        node_ids(self.env.scm.graph(), names)
    }

    fn check_arm(&self, arm: usize) -> PyResult<()> {
        if arm < self.env.arms.len() {
            Ok(())
        } else {
            Err(PyIndexError::new_err(format!("arm {arm} out of range")))
        }
    }
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (env, seed=0))]
    fn new(env: &Environment, seed: u64) -> Self {
        let schema = Arc::new(sepset_bandit::Schema::for_environment(&env.inner));
        Self {
            env: env.inner.clone(),
            inner: sepset_bandit::Dataset::new(schema),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Plays `arm` `n` times and records the outcomes.
    #[pyo3(signature = (arm, n=1))]
    fn pull(&mut self, arm: usize, n: usize) -> PyResult<()> {
        self.check_arm(arm)?;
        for _ in 0..n {
            let outcome = self.env.scm.sample(&self.env.arms[arm], &mut self.rng);
            self.inner.append(arm, &outcome).map_err(value_err)?;
        }
        Ok(())
    }

    /// Records an externally produced outcome (one value per node).
    fn append(&mut self, arm: usize, outcome: Vec<u8>) -> PyResult<()> {
        self.inner.append(arm, &outcome).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn n_arm(&self, arm: usize) -> PyResult<u64> {
        self.check_arm(arm)?;
        Ok(self.inner.n_arm(arm))
    }

    /// Sample mean of the arm's rewards.
    fn mu_sm(&self, arm: usize) -> PyResult<f64> {
        self.check_arm(arm)?;
        self.inner.mu_sm(arm).map_err(value_err)
    }

    /// Information-sharing estimate of the arm's mean through `set`.
    fn mu_is(&self, set: Vec<String>, arm: usize) -> PyResult<f64> {
        self.check_arm(arm)?;
        inference::mu_is(&self.inner, &self.set(&set)?, arm).map_err(value_err)
    }

    /// Upper confidence index through `set` at level `delta`.
    fn idx(&self, set: Vec<String>, arm: usize, delta: f64) -> PyResult<f64> {
        self.check_arm(arm)?;
        inference::idx(&self.inner, &self.set(&set)?, arm, delta).map_err(value_err)
    }

    fn lcb_idx(&self, set: Vec<String>, arm: usize, delta: f64) -> PyResult<f64> {
        self.check_arm(arm)?;
        inference::lcb_idx(&self.inner, &self.set(&set)?, arm, delta).map_err(value_err)
    }

    /// Separating sets accepted by the G² test at the default level.
    #[pyo3(signature = (max_size=3))]
    fn discover(&self, max_size: usize) -> PyResult<Vec<Vec<String>>> {
        let catalog = discovery::discover(&self.inner, max_size).map_err(value_err)?;
        let g = self.env.scm.graph();
        Ok(catalog.accepted.iter().map(|s| node_names(g, s)).collect())
    }

    /// Writes the log as CSV (arm, then one column per node).
    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        self.inner.write_csv(file).map_err(|e| PyIOError::new_err(e.to_string()))
    }
}

/// Policy name, mean cumulative regret per round, and its standard error.
type Curve = (String, Vec<f64>, Option<Vec<f64>>);

/// Runs a replicated experiment and returns `{policy: (mean, stderr)}`
/// cumulative-regret curves; also writes the CSV/SVG outputs when `out` is set.
#[pyfunction]
#[pyo3(signature = (env="game", policies=vec!["ucb".to_string(), "is_ucb:direct_test".to_string()], horizon=None, runs=10, seed=0, out=None))]
fn run_experiment(
    py: Python<'_>,
    env: &str,
    policies: Vec<String>,
    horizon: Option<usize>,
    runs: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> PyResult<Vec<Curve>> {
    let spec: sepset_bandit::EnvSpec = env.parse().map_err(harness_err)?;
    let policies = policies
        .iter()
        .map(|s| {
            let mut p = PolicyConfig::parse(s).map_err(value_err)?;
            p.initial_pulls_per_arm = spec.default_initial_pulls();
            Ok(p)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let mut cfg = sepset_bandit::ExperimentConfig::new(spec, policies);
    cfg.horizon = horizon.unwrap_or(cfg.horizon);
    cfg.runs = runs;
    cfg.seed = seed;
    let result = py.detach(|| sepset_bandit::run_experiment(&cfg)).map_err(harness_err)?;
    if let Some(dir) = out {
        write_outputs(&result, &dir).map_err(harness_err)?;
    }
    Ok(cfg
        .policies
        .iter()
        .zip(result.aggregates())
        .map(|(p, a)| (p.name.clone(), a.mean, a.stderr))
        .collect())
}

/// Number of graphs in the enumerated 4-node suite.
#[pyfunction]
fn suite_size() -> usize {
    scm::enumerate_4node_suite().len()
}

#[pymodule]
fn sepset(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Environment>()?;
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(suite_size, m)?)?;
    Ok(())
}
