//! Environment processes: finite i.i.d., finite Markov and Gaussian AR(1).
//!
//! Growth-rate formulas only need three things from an environment: its
//! stationary marginal, the law of consecutive pairs, and the conditional law
//! of the next state given the current one. Each model exposes those plus a
//! path sampler.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
use crate::rng::stream_rng;

const SUM_TOL: f64 = 1e-12;
const FIXED_POINT_TOL: f64 = 1e-10;

pub(crate) fn check_probability(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(invalid(format!("{what}: empty probability vector")));
    }
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(invalid(format!("{what}: entries must be finite and nonnegative")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(invalid(format!("{what}: sums to {s}, expected 1")));
    }
    Ok(())
}

fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("e{i}")).collect()
}

/// Independent draws from a fixed marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteIidEnv {
    states: Vec<String>,
    marginal: Vec<f64>,
}

impl FiniteIidEnv {
    pub fn new(states: Vec<String>, marginal: Vec<f64>) -> Result<Self> {
        check_probability(&marginal, "marginal")?;
        if states.len() != marginal.len() {
            return Err(invalid("state labels and marginal differ in length"));
        }
        Ok(Self { states, marginal })
    }

    pub fn with_marginal(marginal: Vec<f64>) -> Result<Self> {
        Self::new(default_labels(marginal.len()), marginal)
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }
}

/// Stationary finite Markov chain started from its invariant law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMarkovEnv {
    states: Vec<String>,
    transition: Vec<Vec<f64>>,
    marginal: Vec<f64>,
}

impl FiniteMarkovEnv {
    pub fn new(states: Vec<String>, transition: Vec<Vec<f64>>) -> Result<Self> {
        let n = transition.len();
        if n == 0 {
            return Err(invalid("transition matrix has no states"));
        }
        if states.len() != n {
            return Err(invalid("state labels and transition matrix differ in size"));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != n {
                return Err(invalid(format!("transition row {i} has length {}", row.len())));
            }
            check_probability(row, &format!("transition row {i}"))?;
        }
        if !irreducible(&transition) {
            return Err(invalid("transition matrix is not irreducible"));
        }
        let marginal = stationary_vector(&transition)?;
        Ok(Self {
            states,
            transition,
            marginal,
        })
    }

    pub fn with_transition(transition: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(default_labels(transition.len()), transition)
    }

    /// Two-state chain leaving `e1` with probability `q1` and `e2` with `q2`.
    pub fn two_state(q1: f64, q2: f64) -> Result<Self> {
        if !(q1 > 0.0 && q1 < 1.0 && q2 > 0.0 && q2 < 1.0) {
            return Err(invalid("switch probabilities must lie in (0, 1)"));
        }
        Self::with_transition(vec![vec![1.0 - q1, q1], vec![q2, 1.0 - q2]])
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }
}

fn irreducible(p: &[Vec<f64>]) -> bool {
    let n = p.len();
    (0..n).all(|start| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if p[i][j] > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    })
}

fn fixed_point_residual(p: &[Vec<f64>], nu: &[f64]) -> f64 {
    let n = p.len();
    (0..n)
        .map(|j| ((0..n).map(|i| nu[i] * p[i][j]).sum::<f64>() - nu[j]).abs())
        .fold(0.0, f64::max)
}

/// Solves `nu P = nu`, `sum nu = 1`; falls back to power iteration.
fn stationary_vector(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = p.len();
    // rows of (P' - I), last equation replaced by normalization
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;

    if let Some(x) = a.lu().solve(&b) {
        let mut nu: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
        let s: f64 = nu.iter().sum();
        nu.iter_mut().for_each(|v| *v /= s);
        if fixed_point_residual(p, &nu) <= FIXED_POINT_TOL {
            return Ok(nu);
        }
    }

    // lazy chain (P + I)/2 converges even when P is periodic
    let mut nu = vec![1.0 / n as f64; n];
    for _ in 0..1_000_000 {
        let next: Vec<f64> = (0..n)
            .map(|j| 0.5 * nu[j] + 0.5 * (0..n).map(|i| nu[i] * p[i][j]).sum::<f64>())
            .collect();
        let delta = next
            .iter()
            .zip(&nu)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        nu = next;
        if delta < 1e-15 {
            break;
        }
    }
    if fixed_point_residual(p, &nu) > FIXED_POINT_TOL {
        return Err(invalid("could not compute the stationary distribution"));
    }
    Ok(nu)
}

/// Stationary Gaussian AR(1) sequence with marginal N(mean, variance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianAr1Env {
    mean: f64,
    variance: f64,
    correlation: f64,
}

impl GaussianAr1Env {
    pub fn new(mean: f64, variance: f64, correlation: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(invalid("mean must be finite"));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(invalid("variance must be positive"));
        }
        if !(correlation.abs() < 1.0) {
            return Err(invalid("correlation must lie in (-1, 1)"));
        }
        Ok(Self {
            mean,
            variance,
            correlation,
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn correlation(&self) -> f64 {
        self.correlation
    }

    /// Mean and variance of the next state given the current value `e1`.
    pub fn conditional(&self, e1: f64) -> (f64, f64) {
        let r = self.correlation;
        (
            self.mean + r * (e1 - self.mean),
            (1.0 - r * r) * self.variance,
        )
    }
}

/// Any of the supported environment processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentModel {
    FiniteIid(FiniteIidEnv),
    FiniteMarkov(FiniteMarkovEnv),
    GaussianAr1(GaussianAr1Env),
}

/// A single environment state, discrete or real-valued.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvState {
    Index(usize),
    Value(f64),
}

/// Law of one environment state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateLaw {
    Discrete(Vec<f64>),
    Gaussian { mean: f64, variance: f64 },
}

/// Stationary law of `(omega_{n-1}, omega_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairLaw {
    /// `mass[e1][e2]`
    Discrete(Vec<Vec<f64>>),
    /// Bivariate normal with equal marginals.
    Gaussian {
        mean: f64,
        variance: f64,
        covariance: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathValues {
    Discrete(Vec<usize>),
    Continuous(Vec<f64>),
}

/// A sampled realization `omega_0 .. omega_{n-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentPath {
    pub values: PathValues,
    pub seed: u64,
}

impl EnvironmentPath {
    pub fn discrete(values: Vec<usize>) -> Self {
        Self {
            values: PathValues::Discrete(values),
            seed: 0,
        }
    }

    pub fn continuous(values: Vec<f64>) -> Self {
        Self {
            values: PathValues::Continuous(values),
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            PathValues::Discrete(v) => v.len(),
            PathValues::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_discrete(&self) -> Result<&[usize]> {
        match &self.values {
            PathValues::Discrete(v) => Ok(v),
            PathValues::Continuous(_) => Err(domain("expected a finite-state environment path")),
        }
    }

    pub fn as_continuous(&self) -> Result<&[f64]> {
        match &self.values {
            PathValues::Continuous(v) => Ok(v),
            PathValues::Discrete(_) => Err(domain("expected a real-valued environment path")),
        }
    }
}

impl EnvironmentModel {
    /// Number of states for finite models, `None` for Gaussian.
    pub fn num_states(&self) -> Option<usize> {
        match self {
            Self::FiniteIid(e) => Some(e.marginal.len()),
            Self::FiniteMarkov(e) => Some(e.marginal.len()),
            Self::GaussianAr1(_) => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.num_states().is_some()
    }

    pub fn state_labels(&self) -> Option<&[String]> {
        match self {
            Self::FiniteIid(e) => Some(&e.states),
            Self::FiniteMarkov(e) => Some(&e.states),
            Self::GaussianAr1(_) => None,
        }
    }

    /// Stationary marginal of a finite model.
    pub fn marginal(&self) -> Result<&[f64]> {
        match self {
            Self::FiniteIid(e) => Ok(&e.marginal),
            Self::FiniteMarkov(e) => Ok(&e.marginal),
            Self::GaussianAr1(_) => Err(domain("Gaussian environment has no finite marginal")),
        }
    }

    /// Conditional law of the next state for a finite model, given state index `e1`.
    pub fn transition_row(&self, e1: usize) -> Result<&[f64]> {
        let n = self
            .num_states()
            .ok_or_else(|| domain("Gaussian environment has no transition rows"))?;
        if e1 >= n {
            return Err(domain(format!("state {e1} outside 0..{n}")));
        }
        match self {
            Self::FiniteIid(e) => Ok(&e.marginal),
            Self::FiniteMarkov(e) => Ok(&e.transition[e1]),
            Self::GaussianAr1(_) => unreachable!(),
        }
    }

    /// Conditional law of `omega_{n+1}` given `omega_n = e1`.
    pub fn conditional(&self, e1: EnvState) -> Result<StateLaw> {
        match (self, e1) {
            (Self::GaussianAr1(g), EnvState::Value(x)) => {
                if !x.is_finite() {
                    return Err(domain("conditioning value must be finite"));
                }
                let (mean, variance) = g.conditional(x);
                Ok(StateLaw::Gaussian { mean, variance })
            }
            (Self::GaussianAr1(_), EnvState::Index(_)) => {
                Err(domain("Gaussian environment is conditioned on a real value"))
            }
            (_, EnvState::Index(i)) => {
                let row = self.transition_row(i)?;
                if self.marginal()?[i] <= 0.0 {
                    return Err(domain(format!("state {i} has zero stationary mass")));
                }
                Ok(StateLaw::Discrete(row.to_vec()))
            }
            (_, EnvState::Value(_)) => Err(domain("finite environment is conditioned on a state index")),
        }
    }

    /// Stationary law of consecutive pairs.
    pub fn pair_law(&self) -> PairLaw {
        match self {
            Self::GaussianAr1(g) => PairLaw::Gaussian {
                mean: g.mean,
                variance: g.variance,
                covariance: g.correlation * g.variance,
            },
            _ => {
                let nu = self.marginal().expect("finite");
                let n = nu.len();
                PairLaw::Discrete(
                    (0..n)
                        .map(|i| {
                            let row = self.transition_row(i).expect("finite");
                            row.iter().map(|&q| nu[i] * q).collect()
                        })
                        .collect(),
                )
            }
        }
    }

    /// Samples a stationary path of length `n`; deterministic in `(self, n, seed)`.
    pub fn sample_path(&self, n: usize, seed: u64) -> Result<EnvironmentPath> {
        if n == 0 {
            return Err(domain("path length must be at least 1"));
        }
        let mut rng = stream_rng(seed, u64::MAX);
        let values = match self {
            Self::GaussianAr1(g) => {
                let sd = g.variance.sqrt();
                let innov = ((1.0 - g.correlation * g.correlation) * g.variance).sqrt();
                let mut out = Vec::with_capacity(n);
                let z: f64 = StandardNormal.sample(&mut rng);
                let mut x = g.mean + sd * z;
                out.push(x);
                for _ in 1..n {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x = g.mean + g.correlation * (x - g.mean) + innov * z;
                    out.push(x);
                }
                PathValues::Continuous(out)
            }
            _ => {
                let k = self.num_states().expect("finite");
                let first = WeightedIndex::new(self.marginal()?)
                    .map_err(|e| invalid(format!("marginal: {e}")))?;
                let rows = (0..k)
                    .map(|i| {
                        WeightedIndex::new(self.transition_row(i)?)
                            .map_err(|e| invalid(format!("transition row {i}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut out = Vec::with_capacity(n);
                let mut s = first.sample(&mut rng);
                out.push(s);
                for _ in 1..n {
                    s = rows[s].sample(&mut rng);
                    out.push(s);
                }
                PathValues::Discrete(out)
            }
        };
        Ok(EnvironmentPath { values, seed })
    }
}

impl From<FiniteIidEnv> for EnvironmentModel {
    fn from(e: FiniteIidEnv) -> Self {
        Self::FiniteIid(e)
    }
}

impl From<FiniteMarkovEnv> for EnvironmentModel {
    fn from(e: FiniteMarkovEnv) -> Self {
        Self::FiniteMarkov(e)
    }
}

impl From<GaussianAr1Env> for EnvironmentModel {
    fn from(e: GaussianAr1Env) -> Self {
        Self::GaussianAr1(e)
    }
}
