//! Fitness landscapes, offspring laws and trait-assignment strategies.

use std::io::Read;
use std::path::Path;

use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::{Binomial, Gamma, Geometric, Poisson};
use serde::{Deserialize, Serialize};

use crate::env::check_probability;
use crate::error::{domain, invalid, Error, Result};
use crate::rng::Rng;

/// Mean offspring numbers `m[t][e]` over finitely many traits and environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteLandscape {
    traits: Vec<String>,
    envs: Vec<String>,
    mean: Vec<Vec<f64>>,
}

impl FiniteLandscape {
    pub fn new(traits: Vec<String>, envs: Vec<String>, mean: Vec<Vec<f64>>) -> Result<Self> {
        if mean.is_empty() {
            return Err(invalid("fitness matrix has no traits"));
        }
        if traits.len() != mean.len() {
            return Err(invalid("trait labels and fitness rows differ in count"));
        }
        let p = envs.len();
        if p == 0 {
            return Err(invalid("fitness matrix has no environments"));
        }
        for (t, row) in mean.iter().enumerate() {
            if row.len() != p {
                return Err(invalid(format!("fitness row {t} has {} entries, expected {p}", row.len())));
            }
            if row.iter().any(|&m| !m.is_finite() || m < 0.0) {
                return Err(invalid(format!("fitness row {t} has a negative or non-finite mean")));
            }
        }
        Ok(Self { traits, envs, mean })
    }

    /// Builds a landscape from rows (traits) of columns (environments).
    pub fn from_matrix(mean: Vec<Vec<f64>>) -> Result<Self> {
        let q = mean.len();
        let p = mean.first().map_or(0, Vec::len);
        Self::new(
            (1..=q).map(|i| format!("t{i}")).collect(),
            (1..=p).map(|i| format!("e{i}")).collect(),
            mean,
        )
    }

    /// Reads a CSV with a header row of environment labels and one row per trait.
    ///
    /// A leading column is treated as trait labels when the header's first cell
    /// is empty or `trait`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let labelled = header
            .first()
            .is_some_and(|h| h.is_empty() || h.eq_ignore_ascii_case("trait"));
        let envs: Vec<String> = if labelled { header[1..].to_vec() } else { header };
        let mut traits = Vec::new();
        let mut mean = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut fields = rec.iter();
            traits.push(if labelled {
                fields.next().unwrap_or_default().to_owned()
            } else {
                format!("t{}", i + 1)
            });
            let row = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| invalid(format!("row {}: cannot parse '{f}'", i + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            mean.push(row);
        }
        Self::new(traits, envs, mean)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| {
            Error::Config(format!("cannot open {}: {e}", path.as_ref().display()))
        })?;
        Self::from_csv_reader(file)
    }

    pub fn num_traits(&self) -> usize {
        self.mean.len()
    }

    pub fn num_envs(&self) -> usize {
        self.envs.len()
    }

    pub fn traits(&self) -> &[String] {
        &self.traits
    }

    pub fn envs(&self) -> &[String] {
        &self.envs
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.mean
    }

    #[inline]
    pub fn mean(&self, t: usize, e: usize) -> f64 {
        self.mean[t][e]
    }

    /// `sum_t p(t) m[t][e]`.
    pub fn mixed_mean(&self, p: &[f64], e: usize) -> f64 {
        p.iter().zip(&self.mean).map(|(&w, row)| w * row[e]).sum()
    }

    /// Largest mean over the matrix.
    pub fn bound(&self) -> f64 {
        self.mean.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Numerical rank of the trait rows restricted to the given environments.
    pub fn rank_of(&self, traits: &[usize], envs: &[usize]) -> usize {
        if traits.is_empty() || envs.is_empty() {
            return 0;
        }
        let m = nalgebra::DMatrix::from_fn(traits.len(), envs.len(), |i, j| {
            self.mean[traits[i]][envs[j]]
        });
        let sv = m.singular_values();
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let cut = smax * 1e-10 * traits.len().max(envs.len()) as f64;
        sv.iter().filter(|&&s| s > cut).count()
    }
}

/// The bell-shaped landscape `m(t, e) = C / sqrt(2 pi s1) exp(-(t - e)^2 / (2 s1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianLandscape {
    pub c: f64,
    pub sigma1_sq: f64,
}

impl GaussianLandscape {
    pub fn new(c: f64, sigma1_sq: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid("fitness scale C must be positive"));
        }
        if !(sigma1_sq > 0.0 && sigma1_sq.is_finite()) {
            return Err(invalid("fitness width sigma1^2 must be positive"));
        }
        Ok(Self { c, sigma1_sq })
    }

    pub fn mean(&self, t: f64, e: f64) -> f64 {
        gaussian_kernel(self.c, self.sigma1_sq, t - e)
    }

    /// Peak fitness `C / sqrt(2 pi sigma1^2)`; bounds the whole landscape.
    pub fn bound(&self) -> f64 {
        self.c / (2.0 * std::f64::consts::PI * self.sigma1_sq).sqrt()
    }

    /// Mean fitness in environment `e` of offspring with traits drawn from `p`.
    pub fn mixed_mean(&self, p: &GaussianStrategy, e: f64) -> f64 {
        gaussian_kernel(self.c, self.sigma1_sq + p.variance, p.mean - e)
    }

    /// Log of [`Self::mixed_mean`], accurate far in the tails.
    pub fn log_mixed_mean(&self, p: &GaussianStrategy, e: f64) -> f64 {
        let s = self.sigma1_sq + p.variance;
        self.c.ln() - 0.5 * (2.0 * std::f64::consts::PI * s).ln() - (p.mean - e).powi(2) / (2.0 * s)
    }

    /// Restricts the landscape to trait grid points and environment nodes.
    pub fn discretize(&self, traits: &[f64], envs: &[f64]) -> Result<FiniteLandscape> {
        FiniteLandscape::new(
            traits.iter().map(|t| format!("{t}")).collect(),
            envs.iter().map(|e| format!("{e}")).collect(),
            traits
                .iter()
                .map(|&t| envs.iter().map(|&e| self.mean(t, e)).collect())
                .collect(),
        )
    }
}

fn gaussian_kernel(c: f64, var: f64, d: f64) -> f64 {
    c / (2.0 * std::f64::consts::PI * var).sqrt() * (-d * d / (2.0 * var)).exp()
}

/// Uniform grid `lo, lo + step, ..., <= hi` on a real trait axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraitGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl TraitGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid("grid needs lo <= hi and step > 0"));
        }
        Ok(Self { lo, hi, step })
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

/// A fitness landscape of either supported shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitnessLandscape {
    Finite(FiniteLandscape),
    Gaussian(GaussianLandscape),
}

/// Offspring count law with a prescribed mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffspringFamily {
    #[default]
    Poisson,
    /// Geometric on `{0, 1, ...}`.
    Geometric,
    /// `floor(m) + Bernoulli(m - floor(m))`.
    Bernoulli,
}

impl OffspringFamily {
    /// One offspring count with mean `m`.
    pub fn sample(self, m: f64, rng: &mut Rng) -> u64 {
        self.sample_total(m, 1, rng)
    }

    /// Total offspring of `count` independent parents with mean `m` each.
    pub fn sample_total(self, m: f64, count: u64, rng: &mut Rng) -> u64 {
        if count == 0 || m <= 0.0 {
            return 0;
        }
        match self {
            Self::Poisson => poisson(m * count as f64, rng),
            Self::Geometric => {
                if count == 1 {
                    let g = Geometric::new(1.0 / (1.0 + m)).expect("valid success probability");
                    g.sample(rng)
                } else {
                    // negative binomial as a gamma-mixed Poisson
                    let lambda = Gamma::new(count as f64, m).expect("valid gamma").sample(rng);
                    poisson(lambda, rng)
                }
            }
            Self::Bernoulli => {
                let base = m.floor();
                let frac = m - base;
                let extra = if frac > 0.0 {
                    Binomial::new(count, frac).expect("valid binomial").sample(rng)
                } else {
                    0
                };
                base as u64 * count + extra
            }
        }
    }

    pub fn variance(self, m: f64) -> f64 {
        match self {
            Self::Poisson => m,
            Self::Geometric => m * (1.0 + m),
            Self::Bernoulli => {
                let f = m - m.floor();
                f * (1.0 - f)
            }
        }
    }

    /// Probability of no offspring.
    pub fn prob_zero(self, m: f64) -> f64 {
        match self {
            Self::Poisson => (-m).exp(),
            Self::Geometric => 1.0 / (1.0 + m),
            Self::Bernoulli => {
                if m < 1.0 {
                    1.0 - m
                } else {
                    0.0
                }
            }
        }
    }
}

fn poisson(lambda: f64, rng: &mut Rng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("valid Poisson rate").sample(rng) as u64
}

/// Draws an index from a probability vector.
pub fn sample_index(p: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last index with positive mass
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Splits `n` items over categories by sequential binomial draws.
pub fn sample_multinomial(n: u64, p: &[f64], rng: &mut Rng) -> Vec<u64> {
    let mut out = vec![0; p.len()];
    let mut left = n;
    let mut rest = 1.0;
    for (i, &w) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == p.len() || rest <= 0.0 {
            out[i] = left;
            break;
        }
        let q = (w / rest).clamp(0.0, 1.0);
        let k = if q >= 1.0 {
            left
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(left, q).expect("valid binomial").sample(rng)
        };
        out[i] = k;
        left -= k;
        rest -= w;
    }
    out
}

/// Parent-dependent trait law `law[t][e]`, a distribution over child traits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HereditaryKernel {
    law: Vec<Vec<Vec<f64>>>,
}

impl HereditaryKernel {
    pub fn new(law: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let q = law.len();
        if q == 0 {
            return Err(invalid("kernel has no traits"));
        }
        let p = law[0].len();
        for (t, per_env) in law.iter().enumerate() {
            if per_env.len() != p {
                return Err(invalid(format!("kernel row {t} covers {} environments", per_env.len())));
            }
            for (e, d) in per_env.iter().enumerate() {
                if d.len() != q {
                    return Err(invalid(format!("kernel law ({t},{e}) has length {}", d.len())));
                }
                check_probability(d, &format!("kernel law ({t},{e})"))?;
            }
        }
        Ok(Self { law })
    }

    /// Kernel ignoring the parent trait: child law `p[e]` in environment `e`.
    pub fn from_sensing(p: &[Vec<f64>], num_traits: usize) -> Result<Self> {
        Self::new(vec![p.to_vec(); num_traits])
    }

    pub fn num_traits(&self) -> usize {
        self.law.len()
    }

    pub fn num_envs(&self) -> usize {
        self.law[0].len()
    }

    #[inline]
    pub fn law(&self, parent: usize, e: usize) -> &[f64] {
        &self.law[parent][e]
    }
}

/// How newborns pick their trait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraitRule {
    /// One law for every birth.
    NoSensing(Vec<f64>),
    /// Law `p[e]` chosen from the environment the parent lives in.
    Sensing(Vec<Vec<f64>>),
    /// Law depending on the parent's trait and environment.
    Hereditary(HereditaryKernel),
}

/// A trait rule together with the law of the founders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub rule: TraitRule,
    pub initial: Vec<f64>,
}

impl Strategy {
    pub fn no_sensing(p: Vec<f64>) -> Result<Self> {
        check_probability(&p, "strategy")?;
        Ok(Self {
            initial: p.clone(),
            rule: TraitRule::NoSensing(p),
        })
    }

    pub fn sensing(p: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self> {
        for (e, d) in p.iter().enumerate() {
            check_probability(d, &format!("sensing law for state {e}"))?;
        }
        check_probability(&initial, "initial law")?;
        Ok(Self {
            rule: TraitRule::Sensing(p),
            initial,
        })
    }

    pub fn hereditary(kernel: HereditaryKernel, initial: Vec<f64>) -> Result<Self> {
        check_probability(&initial, "initial law")?;
        Ok(Self {
            rule: TraitRule::Hereditary(kernel),
            initial,
        })
    }

    pub fn num_traits(&self) -> usize {
        self.initial.len()
    }

    /// Law of a child born to a `parent` living in environment `e`.
    #[inline]
    pub fn child_law(&self, parent: usize, e: usize) -> &[f64] {
        match &self.rule {
            TraitRule::NoSensing(p) => p,
            TraitRule::Sensing(p) => &p[e],
            TraitRule::Hereditary(k) => k.law(parent, e),
        }
    }

    pub fn is_hereditary(&self) -> bool {
        matches!(self.rule, TraitRule::Hereditary(_))
    }

    /// Checks dimensions against a landscape and the environment's marginal.
    pub fn validate(&self, landscape: &FiniteLandscape, marginal: &[f64]) -> Result<()> {
        let q = landscape.num_traits();
        if self.initial.len() != q {
            return Err(domain(format!("initial law has {} traits, landscape {q}", self.initial.len())));
        }
        if marginal.len() != landscape.num_envs() {
            return Err(domain("environment and landscape disagree on the number of states"));
        }
        match &self.rule {
            TraitRule::NoSensing(p) => {
                if p.len() != q {
                    return Err(domain(format!("strategy has {} traits, landscape {q}", p.len())));
                }
            }
            TraitRule::Sensing(p) => {
                for (e, &w) in marginal.iter().enumerate() {
                    match p.get(e) {
                        Some(d) if d.len() == q => {}
                        Some(_) => return Err(domain(format!("sensing law for state {e} has wrong length"))),
                        None if w > 0.0 => {
                            return Err(domain(format!("no sensing law for reachable state {e}")))
                        }
                        None => {}
                    }
                }
            }
            TraitRule::Hereditary(k) => {
                if k.num_traits() != q || k.num_envs() != marginal.len() {
                    return Err(domain("kernel dimensions do not match the landscape"));
                }
            }
        }
        Ok(())
    }
}

/// `N(mean, variance)` over a real trait axis; zero variance is a point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianStrategy {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianStrategy {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !(variance >= 0.0) || !variance.is_finite() {
            return Err(invalid("Gaussian strategy needs finite mean and variance >= 0"));
        }
        Ok(Self { mean, variance })
    }

    pub fn dirac(mean: f64) -> Self {
        Self {
            mean,
            variance: 0.0,
        }
    }

    pub fn is_dirac(&self) -> bool {
        self.variance == 0.0
    }
}
