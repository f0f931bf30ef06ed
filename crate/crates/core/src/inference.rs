//! Information-sharing estimator, its high-probability bounds and the
//! variance diagnostics.
//!
//! Given a separating set `S` (with `I ⊥ Y | S`), the mean of arm `ζ` is
//! `Σ_s μ(s) p(s | ζ)` where `μ(s)` does not depend on the arm, so `μ̂(s)`
//! can pool every record in the dataset.

use rand::Rng;
use thiserror::Error;

use crate::data::{DataError, Dataset, Schema};
use crate::graph::NodeId;
use crate::scm::{Arm, DiscreteScm, ScmError, Value, DEFAULT_STATE_CAP};

/// Value tuples of `vars` that are possible under `arm`: coordinates forced by
/// the arm are pinned, the rest range over their domains (last fastest).
pub fn effective_domain(schema: &Schema, vars: &[NodeId], arm: usize) -> Vec<Vec<Value>> {
    let ranges: Vec<Vec<Value>> = vars
        .iter()
        .map(|&v| match schema.forced_value(arm, v) {
            Some(x) => vec![x],
            None => (0..schema.domain(v) as Value).collect(),
        })
        .collect();
    let mut out = vec![Vec::with_capacity(vars.len())];
    for range in ranges {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                range.iter().map(move |&x| {
                    let mut next = prefix.clone();
                    next.push(x);
                    next
                })
            })
            .collect();
    }
    out
}

/// `μ̂_IS(ζ) = Σ_s μ̂(s) p̂(s | ζ)`, summed over values observed under `ζ`.
pub fn mu_is(d: &Dataset, vars: &[NodeId], arm: usize) -> Result<f64, DataError> {
    let n = d.n_arm(arm);
    if n == 0 {
        return Err(DataError::NoData(format!("arm #{arm} was never played")));
    }
    let counts = d.set_counts(vars)?;
    let total: f64 = (0..counts.size())
        .filter(|&code| counts.n_s_arm(code, arm) > 0)
        .map(|code| counts.n_s_y1(code) as f64 / counts.n_s(code) as f64 * counts.n_s_arm(code, arm) as f64)
        .sum();
    Ok(total / n as f64)
}

/// Radius `sqrt(2 k ln(2/δ) / n)` that the L1 deviation of an empirical
/// distribution over `k` outcomes from `n` draws exceeds with probability at
/// most `δ`.
pub fn l1_deviation_bound(k: usize, n: u64, delta: f64) -> f64 {
    (2.0 * k as f64 * (2.0 / delta).ln() / n as f64).sqrt()
}

/// Everything the closed-form bounds need, over the effective domain of `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub delta: f64,
    pub domain: Vec<Vec<Value>>,
    /// `N(S = s)` per domain entry; all must be positive.
    pub n_s: Vec<u64>,
    /// `N(I = ζ)`.
    pub n_arm: u64,
    pub mu_hat: Vec<f64>,
    pub p_hat: Vec<f64>,
}

impl BoundInputs {
    pub fn domain_size(&self) -> usize {
        self.domain.len()
    }

    pub fn estimate(&self) -> f64 {
        self.p_hat.iter().zip(&self.mu_hat).map(|(p, m)| p * m).sum()
    }

    /// Hoeffding half-width for one `μ̂(s)` with `n` supporting records.
    pub fn hoeffding_width(&self, n: u64) -> f64 {
        ((2.0 * self.domain_size() as f64 / self.delta).ln() / (2.0 * n as f64)).sqrt()
    }

    /// `Δ_p̂ = sqrt(|D| ln(4/δ) / (2 N(I = ζ)))`, half the L1 radius at `δ/2`.
    pub fn delta_p(&self) -> f64 {
        0.5 * l1_deviation_bound(self.domain_size(), self.n_arm, self.delta / 2.0)
    }

    fn combine(&self, sign: f64) -> f64 {
        let bounds: Vec<f64> = self
            .mu_hat
            .iter()
            .zip(&self.n_s)
            .map(|(&m, &n)| m + sign * self.hoeffding_width(n))
            .collect();
        let max = bounds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = bounds.iter().copied().fold(f64::INFINITY, f64::min);
        let dot: f64 = self.p_hat.iter().zip(&bounds).map(|(p, b)| p * b).sum();
        dot + sign * self.delta_p() * (max - min)
    }

    /// `p̂ᵀ ucb + Δ_p̂ (max ucb − min ucb)`.
    pub fn upper(&self) -> f64 {
        self.combine(1.0)
    }

    /// `p̂ᵀ lcb − Δ_p̂ (max lcb − min lcb)`.
    pub fn lower(&self) -> f64 {
        self.combine(-1.0)
    }
}

/// Collects [`BoundInputs`] for `S` under `arm`, failing when some value in
/// the effective domain has never been observed.
pub fn bound_inputs(d: &Dataset, vars: &[NodeId], arm: usize, delta: f64) -> Result<BoundInputs, DataError> {
    let n_arm = d.n_arm(arm);
    if n_arm == 0 {
        return Err(DataError::NoData(format!("arm #{arm} was never played")));
    }
    let counts = d.set_counts(vars)?;
    let domain = effective_domain(d.schema(), vars, arm);
    let mut n_s = Vec::with_capacity(domain.len());
    let mut mu_hat = Vec::with_capacity(domain.len());
    let mut p_hat = Vec::with_capacity(domain.len());
    for value in &domain {
        let code = d.schema().encode(vars, value);
        let n = counts.n_s(code);
        if n == 0 {
            return Err(DataError::IncompleteSupport { value: value.clone() });
        }
        n_s.push(n);
        mu_hat.push(counts.n_s_y1(code) as f64 / n as f64);
        p_hat.push(counts.n_s_arm(code, arm) as f64 / n_arm as f64);
    }
    Ok(BoundInputs { delta, domain, n_s, n_arm, mu_hat, p_hat })
}

/// Upper confidence index of the information-sharing estimator.
pub fn idx(d: &Dataset, vars: &[NodeId], arm: usize, delta: f64) -> Result<f64, DataError> {
    Ok(bound_inputs(d, vars, arm, delta)?.upper())
}

/// Symmetric lower confidence index.
pub fn lcb_idx(d: &Dataset, vars: &[NodeId], arm: usize, delta: f64) -> Result<f64, DataError> {
    Ok(bound_inputs(d, vars, arm, delta)?.lower())
}

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Scm(#[from] ScmError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDiagnostics {
    /// `α(s, ζ, D) = N(S = s, I ≠ ζ) / N(S = s)` per joint value code of `S`
    /// (0 where `S = s` was never observed).
    pub alpha_per_s: Vec<f64>,
    pub alpha_star: f64,
    /// Monte-Carlo standard error of `alpha_star`.
    pub alpha_star_stderr: f64,
    /// `Var_{s~P}[E[Y | s]]` under the arm.
    pub term_between: f64,
    /// `E_{s~P}[E[Y | s](1 − E[Y | s])]` under the arm.
    pub term_within: f64,
}

impl VarianceDiagnostics {
    /// Predicted `Var(μ̂_IS)` for `n_arm` records of the arm.
    pub fn predicted_variance(&self, n_arm: u64) -> f64 {
        (self.term_between + (1.0 - self.alpha_star) * self.term_within) / n_arm as f64
    }
}

/// `α(s, ζ, D)` for every joint value code of `vars`.
pub fn alpha_per_s(d: &Dataset, vars: &[NodeId], arm: usize) -> Result<Vec<f64>, DataError> {
    let counts = d.set_counts(vars)?;
    Ok((0..counts.size())
        .map(|code| match counts.n_s(code) {
            0 => 0.0,
            n => (n - counts.n_s_arm(code, arm)) as f64 / n as f64,
        })
        .collect())
}

/// Exact `P[S = s | ζ]` and `E[Y | S = s, ζ]` per joint value code of `vars`.
pub fn conditional_means(scm: &DiscreteScm, vars: &[NodeId], arm: usize, arms: &[Arm]) -> Result<(Vec<f64>, Vec<f64>), ScmError> {
    let mut with_y = vars.to_vec();
    with_y.push(scm.target());
    let joint = scm.interventional_marginal(&arms[arm], &with_y, DEFAULT_STATE_CAP)?;
    let p: Vec<f64> = joint.chunks(2).map(|c| c[0] + c[1]).collect();
    let mu = joint
        .chunks(2)
        .zip(&p)
        .map(|(c, &ps)| if ps > 0.0 { c[1] / ps } else { 0.0 })
        .collect();
    Ok((p, mu))
}

/// Variance diagnostics for `S` under `arm`. `alpha_star` is estimated from
/// `reps` simulated datasets with the same per-arm counts as `d`.
pub fn variance_diagnostics<R: Rng + ?Sized>(
    d: &Dataset,
    scm: &DiscreteScm,
    vars: &[NodeId],
    arm: usize,
    reps: usize,
    rng: &mut R,
) -> Result<VarianceDiagnostics, DiagnosticsError> {
    let schema = d.shared_schema();
    let arms = schema.arms();
    let (p, mu) = conditional_means(scm, vars, arm, arms)?;
    let v: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
    let mean: f64 = p.iter().zip(&mu).map(|(p, m)| p * m).sum();
    let term_between = p.iter().zip(&mu).map(|(p, m)| p * (m - mean) * (m - mean)).sum();
    let term_within = p.iter().zip(&v).map(|(p, v)| p * v).sum();
    let alpha = alpha_per_s(d, vars, arm)?;

    let per_arm: Vec<u64> = (0..arms.len()).map(|a| d.n_arm(a)).collect();
    let mut num = Vec::with_capacity(reps);
    let mut den = Vec::with_capacity(reps);
    for _ in 0..reps {
        let mut sim = Dataset::new(schema.clone());
        sim.track(vars)?;
        for (a, &n) in per_arm.iter().enumerate() {
            for _ in 0..n {
                let outcome = scm.sample(&arms[a], rng);
                sim.append(a, &outcome).expect("simulated outcomes are valid");
            }
        }
        let counts = sim.set_counts(vars).expect("tracked");
        let n_arm = sim.n_arm(arm).max(1) as f64;
        let (mut a_r, mut b_r) = (0.0, 0.0);
        for code in 0..counts.size() {
            let ns = counts.n_s(code);
            if ns == 0 {
                continue;
            }
            let p_hat = counts.n_s_arm(code, arm) as f64 / n_arm;
            let alpha = (ns - counts.n_s_arm(code, arm)) as f64 / ns as f64;
            a_r += p_hat * alpha * v[code];
            b_r += p_hat * v[code];
        }
        num.push(a_r);
        den.push(b_r);
    }
    let (sum_a, sum_b): (f64, f64) = (num.iter().sum(), den.iter().sum());
    let (alpha_star, alpha_star_stderr) = if sum_b > 0.0 {
        let ratio = sum_a / sum_b;
        let r = reps as f64;
        let resid: f64 = num.iter().zip(&den).map(|(a, b)| (a - ratio * b).powi(2)).sum();
        let se = if reps > 1 { (resid / (r * (r - 1.0))).sqrt() / (sum_b / r) } else { f64::NAN };
        (ratio, se)
    } else {
        (0.0, 0.0)
    };
    Ok(VarianceDiagnostics { alpha_per_s: alpha, alpha_star, alpha_star_stderr, term_between, term_within })
}
