//! Lyapunov exponents of the expected population size.
//!
//! Non-hereditary strategies reduce to a single-type process whose mean
//! offspring in environment `e` is `m_{p,e}`, giving exact rates. Hereditary
//! kernels only admit the finite-horizon rate `n^-1 log E[M_n]`, estimated
//! over trait chains drawn along one fixed environment path.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EnvironmentModel;
use crate::error::{domain, Result};
use crate::model::{sample_index, FiniteLandscape, HereditaryKernel, OffspringFamily, Strategy, TraitRule};
use crate::rng::{chunks, stream_rng, Rng};

/// Paths enumerated exactly at most.
pub const ENUMERATION_LIMIT: usize = 1_000_000;

/// Default band around zero treated as critical.
pub const CRITICAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthMethod {
    Exact,
    ErgodicMc,
    PathEnumeration,
    ImportanceSampled,
}

/// A growth rate with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    #[serde(with = "crate::serde_rate")]
    pub rate: f64,
    pub stderr: f64,
    pub method: GrowthMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Every sampled weight was zero.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub all_zero: bool,
}

impl GrowthReport {
    pub fn exact(rate: f64) -> Self {
        Self {
            rate,
            stderr: 0.0,
            method: GrowthMethod::Exact,
            horizon: None,
            all_zero: false,
        }
    }
}

/// `sum_e law(e) log m_{p,e}`; `-inf` if some charged state has `m_{p,e} = 0`.
pub fn gamma_under(p: &[f64], landscape: &FiniteLandscape, law: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (e, &w) in law.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let m = landscape.mixed_mean(p, e);
        if m <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += w * m.ln();
    }
    acc
}

fn check_dims(p: &[f64], landscape: &FiniteLandscape, env: &EnvironmentModel) -> Result<()> {
    if p.len() != landscape.num_traits() {
        return Err(domain(format!(
            "strategy has {} traits, landscape {}",
            p.len(),
            landscape.num_traits()
        )));
    }
    match env.num_states() {
        Some(k) if k == landscape.num_envs() => Ok(()),
        Some(k) => Err(domain(format!(
            "environment has {k} states, landscape {}",
            landscape.num_envs()
        ))),
        None => Err(domain("finite landscape needs a finite environment")),
    }
}

/// Exact rate of a no-sensing strategy `p`.
pub fn gamma_no_sensing(p: &[f64], landscape: &FiniteLandscape, env: &EnvironmentModel) -> Result<GrowthReport> {
    check_dims(p, landscape, env)?;
    Ok(GrowthReport::exact(gamma_under(p, landscape, env.marginal()?)))
}

/// Exact rate of a sensing strategy, averaging over the stationary pair law.
pub fn gamma_sensing(pbar: &[Vec<f64>], landscape: &FiniteLandscape, env: &EnvironmentModel) -> Result<GrowthReport> {
    let nu = env
        .num_states()
        .map(|_| env.marginal())
        .ok_or_else(|| domain("finite landscape needs a finite environment"))??;
    let mut acc = 0.0;
    for (e1, &w) in nu.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let p = pbar
            .get(e1)
            .ok_or_else(|| domain(format!("no sensing law for reachable state {e1}")))?;
        check_dims(p, landscape, env)?;
        let g = gamma_under(p, landscape, env.transition_row(e1)?);
        if g == f64::NEG_INFINITY {
            return Ok(GrowthReport::exact(f64::NEG_INFINITY));
        }
        acc += w * g;
    }
    Ok(GrowthReport::exact(acc))
}

/// The gradient `g_t = sum_e law(e) m[t][e] / m_{p,e}` of `gamma_under` in `p`.
pub fn gradient_under(p: &[f64], landscape: &FiniteLandscape, law: &[f64]) -> Vec<f64> {
    let mp: Vec<f64> = (0..law.len()).map(|e| landscape.mixed_mean(p, e)).collect();
    landscape
        .rows()
        .iter()
        .map(|row| {
            law.iter()
                .enumerate()
                .filter(|&(_, &w)| w > 0.0)
                .map(|(e, &w)| {
                    if mp[e] > 0.0 {
                        w * row[e] / mp[e]
                    } else if row[e] > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub regime: Regime,
    /// Whether `E[-log(1 - P(no offspring))] < inf` for the averaged offspring law.
    pub moment_condition: bool,
}

/// Extinction trichotomy from the sign of the rate.
pub fn regime(rate: f64, tol: f64) -> Regime {
    if rate < -tol {
        Regime::Subcritical
    } else if rate > tol {
        Regime::Supercritical
    } else {
        Regime::Critical
    }
}

/// Classifies a no-sensing strategy and checks the supercritical moment condition.
pub fn classify(
    rate: f64,
    tol: f64,
    p: &[f64],
    landscape: &FiniteLandscape,
    env: &EnvironmentModel,
    family: OffspringFamily,
) -> Result<Classification> {
    check_dims(p, landscape, env)?;
    let nu = env.marginal()?;
    // finitely many states: the expectation is finite iff every charged
    // state has a positive chance of at least one offspring
    let moment_condition = nu.iter().enumerate().filter(|&(_, &w)| w > 0.0).all(|(e, _)| {
        let p0: f64 = p
            .iter()
            .enumerate()
            .map(|(t, &w)| w * family.prob_zero(landscape.mean(t, e)))
            .sum();
        p0 < 1.0
    });
    Ok(Classification {
        regime: regime(rate, tol),
        moment_condition,
    })
}

/// Mean and standard error of `xs` by non-overlapping batch means.
pub(crate) fn batch_mean(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let batches = if n >= 64 { 32 } else { n };
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Ergodic average of `log m` along one sampled environment path of `n + 1` states.
///
/// Term `k` uses the trait law chosen in `omega_{k-1}` and the fitness in
/// `omega_k`, so a sensing strategy that ignores the state reproduces the
/// no-sensing estimate on the same seed.
pub fn gamma_ergodic_mc(
    strategy: &Strategy,
    landscape: &FiniteLandscape,
    env: &EnvironmentModel,
    n: usize,
    seed: u64,
) -> Result<GrowthReport> {
    if n == 0 {
        return Err(domain("horizon must be at least 1"));
    }
    let nu = env
        .num_states()
        .map(|_| env.marginal())
        .ok_or_else(|| domain("finite landscape needs a finite environment"))??;
    strategy.validate(landscape, nu)?;
    if strategy.is_hereditary() {
        return Err(domain("ergodic estimator needs a non-hereditary strategy"));
    }
    let path = env.sample_path(n + 1, seed)?;
    let w = path.as_discrete()?;
    let q = landscape.num_envs();
    let table: Vec<Vec<f64>> = (0..q)
        .map(|prev| {
            if let TraitRule::Sensing(p) = &strategy.rule {
                if p.get(prev).is_none() {
                    return vec![f64::NAN; q];
                }
            }
            let law = strategy.child_law(0, prev);
            (0..q).map(|e| landscape.mixed_mean(law, e).ln()).collect()
        })
        .collect();
    let terms: Vec<f64> = (1..=n).map(|k| table[w[k - 1]][w[k]]).collect();
    if terms.iter().any(|&x| x == f64::NEG_INFINITY) {
        return Ok(GrowthReport {
            rate: f64::NEG_INFINITY,
            stderr: 0.0,
            method: GrowthMethod::ErgodicMc,
            horizon: Some(n),
            all_zero: true,
        });
    }
    let (rate, stderr) = batch_mean(&terms);
    Ok(GrowthReport {
        rate,
        stderr,
        method: GrowthMethod::ErgodicMc,
        horizon: Some(n),
        all_zero: false,
    })
}

/// Running mean of `exp(l)` over log-weights `l`, kept in shifted form.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogMean {
    max: f64,
    s1: f64,
    s2: f64,
    count: usize,
}

impl LogMean {
    pub(crate) fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            s1: 0.0,
            s2: 0.0,
            count: 0,
        }
    }

    pub(crate) fn push(&mut self, l: f64) {
        self.count += 1;
        if l == f64::NEG_INFINITY {
            return;
        }
        if l > self.max {
            let r = (self.max - l).exp();
            self.s1 *= r;
            self.s2 *= r * r;
            self.max = l;
        }
        let x = (l - self.max).exp();
        self.s1 += x;
        self.s2 += x * x;
    }

    pub(crate) fn merge(mut self, other: Self) -> Self {
        self.count += other.count;
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        if other.max > self.max {
            let r = (self.max - other.max).exp();
            self.s1 = self.s1 * r + other.s1;
            self.s2 = self.s2 * r * r + other.s2;
            self.max = other.max;
        } else {
            let r = (other.max - self.max).exp();
            self.s1 += other.s1 * r;
            self.s2 += other.s2 * r * r;
        }
        self
    }

    /// `(log mean, relative standard error of the mean)`.
    pub(crate) fn log_mean(&self) -> (f64, f64) {
        if self.max == f64::NEG_INFINITY {
            return (f64::NEG_INFINITY, 0.0);
        }
        let n = self.count as f64;
        let m1 = self.s1 / n;
        let m2 = self.s2 / n;
        let var = if self.count > 1 {
            (m2 - m1 * m1).max(0.0) * n / (n - 1.0)
        } else {
            0.0
        };
        (m1.ln() + self.max, (var / n).sqrt() / m1)
    }
}

pub(crate) fn check_horizon(strategy: &Strategy, landscape: &FiniteLandscape, omega: &[usize], n: usize) -> Result<()> {
    if n == 0 {
        return Err(domain("horizon must be at least 1"));
    }
    if n > omega.len() {
        return Err(domain(format!("horizon {n} exceeds path length {}", omega.len())));
    }
    if strategy.initial.len() != landscape.num_traits() {
        return Err(domain("initial law does not match the landscape"));
    }
    let q = landscape.num_envs();
    if let Some(&e) = omega[..n].iter().find(|&&e| e >= q) {
        return Err(domain(format!("path visits state {e}, landscape has {q}")));
    }
    let nt = landscape.num_traits();
    match &strategy.rule {
        TraitRule::NoSensing(p) if p.len() != nt => Err(domain("strategy does not match the landscape")),
        TraitRule::Sensing(p) => {
            for &e in &omega[..n] {
                match p.get(e) {
                    Some(d) if d.len() == nt => {}
                    _ => return Err(domain(format!("no sensing law for visited state {e}"))),
                }
            }
            Ok(())
        }
        TraitRule::Hereditary(k) if k.num_traits() != nt || k.num_envs() != q => {
            Err(domain("kernel does not match the landscape"))
        }
        _ => Ok(()),
    }
}

/// Draws `T_0 .. T_n` into `buf` and returns `log M_n`.
pub(crate) fn sample_chain(
    strategy: &Strategy,
    landscape: &FiniteLandscape,
    omega: &[usize],
    n: usize,
    rng: &mut Rng,
    buf: &mut Vec<usize>,
) -> f64 {
    buf.clear();
    let mut t = sample_index(&strategy.initial, rng);
    buf.push(t);
    let mut logw = 0.0;
    for &e in &omega[..n] {
        logw += landscape.mean(t, e).ln();
        t = sample_index(strategy.child_law(t, e), rng);
        buf.push(t);
    }
    logw
}

fn finish(acc: LogMean, n: usize, method: GrowthMethod) -> GrowthReport {
    let (lm, rel) = acc.log_mean();
    GrowthReport {
        rate: lm / n as f64,
        stderr: rel / n as f64,
        method,
        horizon: Some(n),
        all_zero: lm == f64::NEG_INFINITY,
    }
}

/// Monte Carlo estimate of `n^-1 log E[M_n]` along the fixed path `omega`.
pub fn gamma_hereditary(
    strategy: &Strategy,
    landscape: &FiniteLandscape,
    omega: &[usize],
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<GrowthReport> {
    check_horizon(strategy, landscape, omega, n)?;
    if samples == 0 {
        return Err(domain("need at least one sample"));
    }
    let parts: Vec<LogMean> = chunks(samples)
        .into_par_iter()
        .map(|(stream, count)| {
            let mut rng = stream_rng(seed, stream);
            let mut buf = Vec::with_capacity(n + 1);
            let mut acc = LogMean::new();
            for _ in 0..count {
                acc.push(sample_chain(strategy, landscape, omega, n, &mut rng, &mut buf));
            }
            acc
        })
        .collect();
    let acc = parts.into_iter().fold(LogMean::new(), LogMean::merge);
    Ok(finish(acc, n, GrowthMethod::ErgodicMc))
}

/// Visits every trait path `t_0 .. t_n` with its probability and `M_n`.
pub fn for_each_path(
    strategy: &Strategy,
    landscape: &FiniteLandscape,
    omega: &[usize],
    n: usize,
    mut visit: impl FnMut(&[usize], f64, f64),
) -> Result<()> {
    check_horizon(strategy, landscape, omega, n)?;
    let q = landscape.num_traits();
    let total = (q as f64).powi(n as i32 + 1);
    if total > ENUMERATION_LIMIT as f64 {
        return Err(domain(format!("{total} paths exceed the enumeration limit")));
    }
    let mut path = vec![0usize; n + 1];
    fn rec(
        k: usize,
        prob: f64,
        weight: f64,
        path: &mut Vec<usize>,
        ctx: &(&Strategy, &FiniteLandscape, &[usize], usize),
        visit: &mut dyn FnMut(&[usize], f64, f64),
    ) {
        let (strategy, landscape, omega, n) = *ctx;
        if k > n {
            visit(path, prob, weight);
            return;
        }
        let law = if k == 0 {
            &strategy.initial[..]
        } else {
            strategy.child_law(path[k - 1], omega[k - 1])
        };
        for (t, &w) in law.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            path[k] = t;
            let weight = if k < n { weight * landscape.mean(t, omega[k]) } else { weight };
            rec(k + 1, prob * w, weight, path, ctx, visit);
        }
    }
    rec(0, 1.0, 1.0, &mut path, &(strategy, landscape, omega, n), &mut visit);
    Ok(())
}

/// Exact `n^-1 log E[M_n]` by enumerating all trait paths.
pub fn gamma_hereditary_enumerated(
    strategy: &Strategy,
    landscape: &FiniteLandscape,
    omega: &[usize],
    n: usize,
) -> Result<GrowthReport> {
    let mut mean = 0.0;
    for_each_path(strategy, landscape, omega, n, |_, p, w| mean += p * w)?;
    Ok(GrowthReport {
        rate: mean.ln() / n as f64,
        stderr: 0.0,
        method: GrowthMethod::PathEnumeration,
        horizon: Some(n),
        all_zero: mean == 0.0,
    })
}

/// Lower bound `n^-1 sum_k E[log m_{T_k, omega_k}]`.
///
/// The marginal laws of `T_k` are propagated exactly, so the bound carries no
/// sampling error.
pub fn gamma_jensen_bound(strategy: &Strategy, landscape: &FiniteLandscape, omega: &[usize], n: usize) -> Result<f64> {
    check_horizon(strategy, landscape, omega, n)?;
    let q = landscape.num_traits();
    let mut law = strategy.initial.clone();
    let mut acc = 0.0;
    for &e in &omega[..n] {
        for (t, &w) in law.iter().enumerate() {
            if w > 0.0 {
                let m = landscape.mean(t, e);
                if m <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                acc += w * m.ln();
            }
        }
        let mut next = vec![0.0; q];
        for (t, &w) in law.iter().enumerate() {
            if w > 0.0 {
                for (u, &k) in strategy.child_law(t, e).iter().enumerate() {
                    next[u] += w * k;
                }
            }
        }
        law = next;
    }
    Ok(acc / n as f64)
}

/// Proposal kernel for change-of-measure estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceKernel {
    pub kernel: HereditaryKernel,
}

impl ReferenceKernel {
    pub fn new(kernel: HereditaryKernel) -> Self {
        Self { kernel }
    }

    /// Kernel drawing every child trait uniformly.
    pub fn uniform(num_traits: usize, num_envs: usize) -> Self {
        let u = vec![1.0 / num_traits as f64; num_traits];
        Self {
            kernel: HereditaryKernel::new(vec![vec![u; num_envs]; num_traits]).expect("uniform kernel"),
        }
    }

    /// Density `f_{t,e}(u) = pi_{t,e}(u) / ref_{t,e}(u)` for every entry.
    pub fn densities(&self, strategy: &Strategy) -> Result<Vec<Vec<Vec<f64>>>> {
        let q = self.kernel.num_traits();
        let p = self.kernel.num_envs();
        if strategy.num_traits() != q {
            return Err(domain("reference kernel does not match the strategy"));
        }
        (0..q)
            .map(|t| {
                (0..p)
                    .map(|e| {
                        let target = match &strategy.rule {
                            TraitRule::Sensing(v) if v.get(e).is_none() => return Ok(vec![0.0; q]),
                            _ => strategy.child_law(t, e),
                        };
                        target
                            .iter()
                            .zip(self.kernel.law(t, e))
                            .map(|(&a, &b)| {
                                if b > 0.0 {
                                    Ok(a / b)
                                } else if a > 0.0 {
                                    Err(domain(format!(
                                        "target kernel not absolutely continuous at ({t},{e})"
                                    )))
                                } else {
                                    Ok(0.0)
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Importance-sampled `n^-1 log E[M_n]` with chains drawn from `reference`.
pub fn gamma_importance_sampled(
    strategy: &Strategy,
    reference: &ReferenceKernel,
    landscape: &FiniteLandscape,
    omega: &[usize],
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<GrowthReport> {
    check_horizon(strategy, landscape, omega, n)?;
    if samples == 0 {
        return Err(domain("need at least one sample"));
    }
    if reference.kernel.num_envs() != landscape.num_envs() {
        return Err(domain("reference kernel does not match the landscape"));
    }
    let dens = reference.densities(strategy)?;
    let parts: Vec<LogMean> = chunks(samples)
        .into_par_iter()
        .map(|(stream, count)| {
            let mut rng = stream_rng(seed, stream);
            let mut acc = LogMean::new();
            for _ in 0..count {
                let mut t = sample_index(&strategy.initial, &mut rng);
                let mut logw = 0.0;
                for &e in &omega[..n] {
                    let u = sample_index(reference.kernel.law(t, e), &mut rng);
                    logw += (landscape.mean(t, e) * dens[t][e][u]).ln();
                    t = u;
                }
                acc.push(logw);
            }
            acc
        })
        .collect();
    let acc = parts.into_iter().fold(LogMean::new(), LogMean::merge);
    Ok(finish(acc, n, GrowthMethod::ImportanceSampled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{FiniteIidEnv, FiniteMarkovEnv};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::{prop_assert, proptest, Strategy as _};

    fn sec121() -> (FiniteLandscape, EnvironmentModel) {
        (
            FiniteLandscape::from_matrix(vec![vec![1.5, 0.6], vec![0.6, 1.5]]).unwrap(),
            FiniteIidEnv::with_marginal(vec![0.5, 0.5]).unwrap().into(),
        )
    }

    #[test]
    fn no_sensing_examples() {
        let (l, env) = sec121();
        let pure = gamma_no_sensing(&[1.0, 0.0], &l, &env).unwrap();
        assert_abs_diff_eq!(pure.rate, 0.5 * (1.5f64.ln() + 0.6f64.ln()), epsilon = 1e-15);
        assert!((pure.rate + 0.053).abs() < 5e-4);
        let mixed = gamma_no_sensing(&[0.5, 0.5], &l, &env).unwrap();
        assert_abs_diff_eq!(mixed.rate, 1.05f64.ln(), epsilon = 1e-15);
        assert!((mixed.rate - 0.049).abs() < 5e-4);
        assert_eq!(mixed.stderr, 0.0);

        let ones = FiniteLandscape::from_matrix(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(gamma_no_sensing(&[0.3, 0.7], &ones, &env).unwrap().rate, 0.0);
        assert!(gamma_no_sensing(&[1.0], &l, &env).is_err());
    }

    #[test]
    fn zero_fitness_gives_negative_infinity() {
        let l = FiniteLandscape::from_matrix(vec![vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let env: EnvironmentModel = FiniteIidEnv::with_marginal(vec![0.5, 0.5]).unwrap().into();
        assert_eq!(gamma_no_sensing(&[1.0, 0.0], &l, &env).unwrap().rate, f64::NEG_INFINITY);
        let only_first: EnvironmentModel = FiniteIidEnv::with_marginal(vec![1.0, 0.0]).unwrap().into();
        assert_abs_diff_eq!(gamma_no_sensing(&[1.0, 0.0], &l, &only_first).unwrap().rate, 2f64.ln());
    }

    #[test]
    fn sensing_examples() {
        let (l, iid) = sec121();
        let p = vec![0.3, 0.7];
        let a = gamma_sensing(&[p.clone(), p.clone()], &l, &iid).unwrap().rate;
        let b = gamma_no_sensing(&p, &l, &iid).unwrap().rate;
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);

        let mk: EnvironmentModel = FiniteMarkovEnv::two_state(0.2, 0.2).unwrap().into();
        let g = gamma_sensing(&[vec![1.0, 0.0], vec![0.0, 1.0]], &l, &mk).unwrap().rate;
        assert_abs_diff_eq!(g, 1.5f64.ln() - 0.2 * 2.5f64.ln(), epsilon = 1e-12);
        assert!((g - 0.2222).abs() < 1e-4);

        assert!(gamma_sensing(&[vec![1.0, 0.0]], &l, &mk).is_err());
    }

    #[test]
    fn classification() {
        assert_eq!(regime(-0.0527, CRITICAL_TOL), Regime::Subcritical);
        assert_eq!(regime(0.0488, CRITICAL_TOL), Regime::Supercritical);
        assert_eq!(regime(0.0, CRITICAL_TOL), Regime::Critical);
        let (l, env) = sec121();
        let c = classify(0.0488, CRITICAL_TOL, &[0.5, 0.5], &l, &env, OffspringFamily::Bernoulli).unwrap();
        assert!(c.moment_condition);
        let z = FiniteLandscape::from_matrix(vec![vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let c = classify(-1.0, CRITICAL_TOL, &[1.0, 0.0], &z, &env, OffspringFamily::Poisson).unwrap();
        assert!(!c.moment_condition);
    }

    #[test]
    fn ergodic_estimates() {
        let (l, env) = sec121();
        let s = Strategy::no_sensing(vec![0.5, 0.5]).unwrap();
        let r = gamma_ergodic_mc(&s, &l, &env, 1_000_000, 3).unwrap();
        assert!((r.rate - 1.05f64.ln()).abs() < 0.003, "{r:?}");
        assert!(r.stderr > 0.0);

        let one: EnvironmentModel = FiniteIidEnv::with_marginal(vec![1.0]).unwrap().into();
        let l1 = FiniteLandscape::from_matrix(vec![vec![1.5], vec![0.6]]).unwrap();
        let r = gamma_ergodic_mc(&s, &l1, &one, 17, 3).unwrap();
        assert_abs_diff_eq!(r.rate, 1.05f64.ln(), epsilon = 1e-14);

        let mk: EnvironmentModel = FiniteMarkovEnv::two_state(0.3, 0.1).unwrap().into();
        let p = vec![0.2, 0.8];
        let ns = gamma_ergodic_mc(&Strategy::no_sensing(p.clone()).unwrap(), &l, &mk, 5000, 9).unwrap();
        let se = gamma_ergodic_mc(&Strategy::sensing(vec![p.clone(), p.clone()], p).unwrap(), &l, &mk, 5000, 9).unwrap();
        assert_eq!(ns.rate, se.rate);
    }

    #[test]
    fn sensing_ergodic_matches_exact() {
        let (l, _) = sec121();
        let mk: EnvironmentModel = FiniteMarkovEnv::two_state(0.2, 0.2).unwrap().into();
        let pbar = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let exact = gamma_sensing(&pbar, &l, &mk).unwrap().rate;
        let s = Strategy::sensing(pbar, vec![0.5, 0.5]).unwrap();
        let r = gamma_ergodic_mc(&s, &l, &mk, 400_000, 1).unwrap();
        assert!((r.rate - exact).abs() < 4.0 * r.stderr, "{} vs {exact} ({})", r.rate, r.stderr);
    }

    fn hereditary_instance() -> (Strategy, FiniteLandscape, Vec<usize>) {
        let k = HereditaryKernel::new(vec![
            vec![vec![0.9, 0.1], vec![0.6, 0.4]],
            vec![vec![0.2, 0.8], vec![0.3, 0.7]],
        ])
        .unwrap();
        (
            Strategy::hereditary(k, vec![0.4, 0.6]).unwrap(),
            FiniteLandscape::from_matrix(vec![vec![1.8, 0.4], vec![0.7, 1.3]]).unwrap(),
            vec![0, 1, 1, 0, 1],
        )
    }

    /// Independent brute force over all `2^(n+1)` paths.
    fn brute_force(s: &Strategy, l: &FiniteLandscape, w: &[usize], n: usize) -> (f64, f64) {
        let q = l.num_traits();
        let mut mean = 0.0;
        let mut jensen = 0.0;
        for code in 0..q.pow(n as u32 + 1) {
            let path: Vec<usize> = (0..=n).map(|k| (code / q.pow(k as u32)) % q).collect();
            let mut prob = s.initial[path[0]];
            for k in 1..=n {
                prob *= s.child_law(path[k - 1], w[k - 1])[path[k]];
            }
            let weight: f64 = (0..n).map(|k| l.mean(path[k], w[k])).product();
            mean += prob * weight;
            if prob > 0.0 {
                jensen += prob * weight.ln();
            }
        }
        (mean.ln() / n as f64, jensen / n as f64)
    }

    #[test]
    fn hereditary_against_enumeration() {
        let (s, l, w) = hereditary_instance();
        let (exact, jensen) = brute_force(&s, &l, &w, 3);
        let en = gamma_hereditary_enumerated(&s, &l, &w, 3).unwrap();
        assert_abs_diff_eq!(en.rate, exact, epsilon = 1e-14);
        let mc = gamma_hereditary(&s, &l, &w, 3, 100_000, 4).unwrap();
        assert!((mc.rate - exact).abs() < 3.0 * mc.stderr, "{} vs {exact}", mc.rate);
        let jb = gamma_jensen_bound(&s, &l, &w, 3).unwrap();
        assert_abs_diff_eq!(jb, jensen, epsilon = 1e-14);
        assert!(jb < exact);
        let is = gamma_importance_sampled(&s, &ReferenceKernel::uniform(2, 2), &l, &w, 3, 100_000, 4).unwrap();
        assert!((is.rate - exact).abs() < 3.0 * is.stderr);
    }

    #[test]
    fn non_hereditary_kernel_reduces_to_product() {
        let (_, l, w) = hereditary_instance();
        let p = vec![0.3, 0.7];
        let pi0 = vec![0.9, 0.1];
        let s = Strategy::hereditary(HereditaryKernel::new(vec![vec![p.clone(); 2]; 2]).unwrap(), pi0.clone()).unwrap();
        let n = 4;
        let expected = (l.mixed_mean(&pi0, w[0]).ln()
            + (1..n).map(|k| l.mixed_mean(&p, w[k]).ln()).sum::<f64>())
            / n as f64;
        assert_abs_diff_eq!(gamma_hereditary_enumerated(&s, &l, &w, n).unwrap().rate, expected, epsilon = 1e-14);
    }

    #[test]
    fn constant_fitness_rates() {
        let (s, _, w) = hereditary_instance();
        let c = FiniteLandscape::from_matrix(vec![vec![1.7, 1.7], vec![1.7, 1.7]]).unwrap();
        let mc = gamma_hereditary(&s, &c, &w, 4, 1000, 0).unwrap();
        assert_abs_diff_eq!(mc.rate, 1.7f64.ln(), epsilon = 1e-12);
        assert!(mc.stderr < 1e-12);
        assert_abs_diff_eq!(gamma_jensen_bound(&s, &c, &w, 4).unwrap(), 1.7f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn dirac_kernel_bound_is_exact() {
        let (_, l, w) = hereditary_instance();
        let s = Strategy::no_sensing(vec![0.0, 1.0]).unwrap();
        let en = gamma_hereditary_enumerated(&s, &l, &w, 4).unwrap().rate;
        assert_abs_diff_eq!(gamma_jensen_bound(&s, &l, &w, 4).unwrap(), en, epsilon = 1e-14);
        // under the uniform proposal a surviving chain stays on t2 with density 2 per step
        let path_weight: f64 = (0..4).map(|k| l.mean(1, w[k])).product::<f64>();
        let hit = (0..500)
            .map(|seed| gamma_importance_sampled(&s, &ReferenceKernel::uniform(2, 2), &l, &w, 4, 1, seed).unwrap())
            .find(|r| r.rate.is_finite())
            .expect("some chain follows t2");
        assert_abs_diff_eq!(hit.rate, (16.0 * path_weight).ln() / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_change_of_measure() {
        let (s, l, w) = hereditary_instance();
        let TraitRule::Hereditary(k) = &s.rule else { unreachable!() };
        let refk = ReferenceKernel::new(k.clone());
        let a = gamma_importance_sampled(&s, &refk, &l, &w, 4, 20_000, 8).unwrap();
        let b = gamma_hereditary(&s, &l, &w, 4, 20_000, 8).unwrap();
        assert_abs_diff_eq!(a.rate, b.rate, epsilon = 1e-12);
    }

    #[test]
    fn reference_must_dominate_target() {
        let (s, l, w) = hereditary_instance();
        let degenerate = ReferenceKernel::new(
            HereditaryKernel::new(vec![vec![vec![1.0, 0.0]; 2]; 2]).unwrap(),
        );
        assert!(gamma_importance_sampled(&s, &degenerate, &l, &w, 3, 10, 0).is_err());
    }

    #[test]
    fn horizon_checks() {
        let (s, l, w) = hereditary_instance();
        assert!(gamma_hereditary(&s, &l, &w, 6, 10, 0).is_err());
        assert!(gamma_hereditary(&s, &l, &w, 0, 10, 0).is_err());
        assert!(gamma_hereditary(&s, &l, &w, 2, 0, 0).is_err());
    }

    #[test]
    fn all_zero_weights_flagged() {
        let (s, _, w) = hereditary_instance();
        let z = FiniteLandscape::from_matrix(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let r = gamma_hereditary(&s, &z, &w, 3, 100, 0).unwrap();
        assert_eq!(r.rate, f64::NEG_INFINITY);
        assert!(r.all_zero);
    }

    fn simplex(k: usize) -> impl proptest::strategy::Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.01f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn concavity_and_decomposition(
            rows in proptest::collection::vec(proptest::collection::vec(0.05f64..3.0, 3), 3),
            a in simplex(3), b in simplex(3), lambda in 0.0f64..1.0,
            q in 0.05f64..0.95, r in 0.05f64..0.95,
        ) {
            let l = FiniteLandscape::from_matrix(rows).unwrap();
            let env: EnvironmentModel = FiniteIidEnv::with_marginal(vec![0.2, 0.5, 0.3]).unwrap().into();
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect();
            let g = |p: &[f64]| gamma_no_sensing(p, &l, &env).unwrap().rate;
            prop_assert!(g(&mix) >= lambda * g(&a) + (1.0 - lambda) * g(&b) - 1e-12);

            let mk: EnvironmentModel = FiniteMarkovEnv::with_transition(vec![
                vec![1.0 - q, q * 0.5, q * 0.5],
                vec![r, 1.0 - r, 0.0],
                vec![0.3, 0.3, 0.4],
            ]).unwrap().into();
            let pbar = vec![a.clone(), b.clone(), mix.clone()];
            let whole = gamma_sensing(&pbar, &l, &mk).unwrap().rate;
            let nu = mk.marginal().unwrap();
            let parts: f64 = (0..3).map(|e| nu[e] * gamma_under(&pbar[e], &l, mk.transition_row(e).unwrap())).sum();
            prop_assert!((whole - parts).abs() <= 1e-12);
        }
    }
}
