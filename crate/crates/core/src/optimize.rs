//! Optimal trait strategies over the probability simplex.
//!
//! `gamma(p) = sum_e nu(e) log m_{p,e}` is concave in `p`. A point is optimal
//! exactly when `g_t = sum_e nu(e) m[t][e] / m_{p,e} <= 1` for every trait,
//! so `max_t g_t - 1` is both the stopping rule and a certificate.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{check_probability, EnvironmentModel};
use crate::error::{domain, Result};
use crate::growth::{gamma_under, gradient_under, regime, Regime, CRITICAL_TOL};
use crate::model::{FiniteLandscape, Strategy, TraitRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub support_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
            support_tol: 1e-6,
        }
    }
}

/// Result of optimizing one trait law under one environment law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexSolution {
    pub p: Vec<f64>,
    #[serde(with = "crate::serde_rate")]
    pub rate: f64,
    #[serde(with = "crate::serde_rate")]
    pub certificate_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Optimal traits are linearly dependent, so other optimizers may exist.
    pub non_unique: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    MirrorAscent,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub strategy: Strategy,
    #[serde(with = "crate::serde_rate")]
    pub rate: f64,
    #[serde(with = "crate::serde_rate")]
    pub certificate_gap: f64,
    /// Traits above `support_tol`, one list per trait law (one per state when sensing).
    pub support: Vec<Vec<usize>>,
    pub iterations: usize,
    pub converged: bool,
    pub non_unique: bool,
    pub regime: Regime,
    /// Every pure strategy goes extinct but the optimum survives.
    pub polymorphism_required: bool,
    pub method: SolveMethod,
}

fn active_envs(law: &[f64]) -> Vec<usize> {
    law.iter()
        .enumerate()
        .filter(|&(_, &w)| w > 0.0)
        .map(|(e, _)| e)
        .collect()
}

/// `max_t g_t - 1` under the environment law `law`; `+inf` when `m_{p,e} = 0` on a charged state.
pub fn certificate_gap_under(p: &[f64], landscape: &FiniteLandscape, law: &[f64]) -> f64 {
    if active_envs(law).iter().any(|&e| landscape.mixed_mean(p, e) <= 0.0) {
        return f64::INFINITY;
    }
    gradient_under(p, landscape, law)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
        - 1.0
}

/// Optimality gap of a no-sensing strategy under the stationary marginal.
pub fn certificate_gap(p: &[f64], landscape: &FiniteLandscape, env: &EnvironmentModel) -> Result<f64> {
    let nu = finite_marginal(landscape, env)?;
    if p.len() != landscape.num_traits() {
        return Err(domain("strategy does not match the landscape"));
    }
    Ok(certificate_gap_under(p, landscape, nu))
}

/// Largest per-state gap of a sensing strategy, each under its conditional law.
pub fn certificate_gap_sensing(pbar: &[Vec<f64>], landscape: &FiniteLandscape, env: &EnvironmentModel) -> Result<f64> {
    let nu = finite_marginal(landscape, env)?;
    let mut gap = f64::NEG_INFINITY;
    for e1 in active_envs(nu) {
        let p = pbar
            .get(e1)
            .ok_or_else(|| domain(format!("no sensing law for reachable state {e1}")))?;
        if p.len() != landscape.num_traits() {
            return Err(domain("strategy does not match the landscape"));
        }
        gap = gap.max(certificate_gap_under(p, landscape, env.transition_row(e1)?));
    }
    Ok(gap)
}

/// Whether the pure strategy on trait `t` is optimal under `law`.
pub fn pure_optimal_under(t: usize, landscape: &FiniteLandscape, law: &[f64], tol: f64) -> bool {
    let rows = landscape.rows();
    rows.iter().all(|other| {
        let mut acc = 0.0;
        for e in active_envs(law) {
            let (num, den) = (other[e], rows[t][e]);
            if den > 0.0 {
                acc += law[e] * num / den;
            } else if num > 0.0 {
                return false;
            }
        }
        acc <= 1.0 + tol
    })
}

pub fn pure_optimal(t: usize, landscape: &FiniteLandscape, env: &EnvironmentModel, tol: f64) -> Result<bool> {
    let nu = finite_marginal(landscape, env)?;
    if t >= landscape.num_traits() {
        return Err(domain(format!("trait {t} outside the landscape")));
    }
    Ok(pure_optimal_under(t, landscape, nu, tol))
}

fn finite_marginal<'a>(landscape: &FiniteLandscape, env: &'a EnvironmentModel) -> Result<&'a [f64]> {
    match env.num_states() {
        Some(k) if k == landscape.num_envs() => env.marginal(),
        Some(k) => Err(domain(format!(
            "environment has {k} states, landscape {}",
            landscape.num_envs()
        ))),
        None => Err(domain("finite landscape needs a finite environment")),
    }
}

/// Objective restricted to charged states, with `-inf` outside the domain.
fn objective(p: &[f64], landscape: &FiniteLandscape, law: &[f64]) -> f64 {
    gamma_under(p, landscape, law)
}

/// Newton step on the face spanned by `support`, keeping `sum p = 1`.
fn newton_candidate(p: &[f64], grad: &[f64], landscape: &FiniteLandscape, law: &[f64], support: &[usize]) -> Option<Vec<f64>> {
    let k = support.len();
    let envs = active_envs(law);
    // beyond the number of charged states the face Hessian is singular
    if k < 2 || k > envs.len() {
        return None;
    }
    let mp: Vec<f64> = envs.iter().map(|&e| landscape.mixed_mean(p, e)).collect();
    let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
    for (a, &s) in support.iter().enumerate() {
        for (b, &t) in support.iter().enumerate().skip(a) {
            let h: f64 = envs
                .iter()
                .zip(&mp)
                .map(|(&e, &m)| -law[e] * landscape.mean(s, e) * landscape.mean(t, e) / (m * m))
                .sum();
            kkt[(a, b)] = h;
            kkt[(b, a)] = h;
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(k + 1);
    for (a, &s) in support.iter().enumerate() {
        rhs[a] = -grad[s];
    }
    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return None;
    }
    // largest feasible step, at most the full Newton step
    let mut alpha: f64 = 1.0;
    for (a, &s) in support.iter().enumerate() {
        if sol[a] < 0.0 {
            alpha = alpha.min(-p[s] / sol[a] * 0.999);
        }
    }
    if alpha <= 0.0 {
        return None;
    }
    let mut q = p.to_vec();
    for (a, &s) in support.iter().enumerate() {
        q[s] = (p[s] + alpha * sol[a]).max(0.0);
    }
    let sum: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= sum);
    Some(q)
}

/// Problems with more traits than this, and many more traits than charged
/// states, are solved by column generation.
const COLUMN_GENERATION_MIN_TRAITS: usize = 256;

/// Maximizes `gamma_under(., law)` over the simplex starting from `init`.
pub fn maximize_under(landscape: &FiniteLandscape, law: &[f64], init: &[f64], opts: &SolverOptions) -> Result<SimplexSolution> {
    let q = landscape.num_traits();
    if init.len() != q || law.len() != landscape.num_envs() {
        return Err(domain("dimensions do not match the landscape"));
    }
    let envs = active_envs(law);
    if let Some(&e) = envs.iter().find(|&&e| landscape.rows().iter().all(|r| r[e] <= 0.0)) {
        return Err(domain(format!("no trait has positive fitness in charged state {e}")));
    }
    if !objective(init, landscape, law).is_finite() {
        return Err(domain("initial strategy has zero fitness in a charged state"));
    }
    if q > COLUMN_GENERATION_MIN_TRAITS && q > 4 * envs.len() {
        if let Some(sol) = maximize_by_columns(landscape, law, init, opts)? {
            return Ok(sol);
        }
    }
    maximize_dense(landscape, law, init, opts)
}

/// Solves restricted problems on a growing set of traits until the
/// certificate holds on the full landscape. The optimum has at most one
/// atom per charged state, so the working set stays small.
fn maximize_by_columns(
    landscape: &FiniteLandscape,
    law: &[f64],
    init: &[f64],
    opts: &SolverOptions,
) -> Result<Option<SimplexSolution>> {
    let q = landscape.num_traits();
    let envs = active_envs(law);
    let batch = envs.len().max(2);
    let mut in_set = vec![false; q];
    let mut working: Vec<usize> = Vec::new();
    fn add(t: usize, in_set: &mut [bool], working: &mut Vec<usize>) {
        if !in_set[t] {
            in_set[t] = true;
            working.push(t);
        }
    }
    // seed with the fittest trait of every charged state and the steepest traits at `init`
    for &e in &envs {
        let best = (0..q).max_by(|&a, &b| landscape.mean(a, e).total_cmp(&landscape.mean(b, e)));
        add(best.expect("landscape has traits"), &mut in_set, &mut working);
    }
    let g0 = gradient_under(init, landscape, law);
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| g0[b].total_cmp(&g0[a]));
    for &t in order.iter().take(batch) {
        add(t, &mut in_set, &mut working);
    }

    let mut iterations = 0;
    let mut warm: Vec<f64> = Vec::new();
    for _ in 0..100 {
        let sub = FiniteLandscape::from_matrix(working.iter().map(|&t| landscape.rows()[t].clone()).collect())?;
        let k = working.len();
        let mut start = vec![1.0 / k as f64; k];
        if !warm.is_empty() {
            for (i, w) in warm.iter().enumerate() {
                start[i] = 0.9 * w + 0.1 / k as f64;
            }
        }
        if !objective(&start, &sub, law).is_finite() {
            return Ok(None);
        }
        let sol = maximize_barrier(&sub, law, &start, opts);
        iterations += sol.iterations;
        if !sol.converged {
            return Ok(None);
        }
        let mut p = vec![0.0; q];
        for (i, &t) in working.iter().enumerate() {
            p[t] = sol.p[i];
        }
        let g = gradient_under(&p, landscape, law);
        let gap = g.iter().copied().fold(f64::NEG_INFINITY, f64::max) - 1.0;
        if gap <= opts.tol {
            let tight: Vec<usize> = (0..q).filter(|&t| g[t] >= 1.0 - 1e-6).collect();
            let non_unique = landscape.rank_of(&tight, &envs) < tight.len();
            return Ok(Some(SimplexSolution {
                rate: objective(&p, landscape, law),
                certificate_gap: gap,
                p,
                iterations,
                converged: true,
                non_unique,
            }));
        }
        warm = sol.p;
        let mut violators: Vec<usize> = (0..q).filter(|&t| !in_set[t] && g[t] > 1.0 + opts.tol).collect();
        violators.sort_by(|&a, &b| g[b].total_cmp(&g[a]));
        if violators.is_empty() {
            return Ok(None);
        }
        for &t in violators.iter().take(batch) {
            add(t, &mut in_set, &mut working);
        }
    }
    Ok(None)
}

/// Log-barrier Newton ascent for small problems, started from an interior `init`.
///
/// At barrier weight `mu` the optimality conditions give `g_t <= 1 + k mu`,
/// so driving `mu` below `tol / k` certifies the result.
fn maximize_barrier(landscape: &FiniteLandscape, law: &[f64], init: &[f64], opts: &SolverOptions) -> SimplexSolution {
    let k = landscape.num_traits();
    let envs = active_envs(law);
    let mut p = init.to_vec();
    let phi = |p: &[f64], mu: f64| objective(p, landscape, law) + mu * p.iter().map(|x| x.ln()).sum::<f64>();
    let mut mu = 1e-2;
    let mut iterations = 0;
    let mut last_round = false;
    while iterations < opts.max_iter {
        last_round |= mu * k as f64 <= 0.1 * opts.tol;
        for _ in 0..100 {
            let mp: Vec<f64> = envs.iter().map(|&e| landscape.mixed_mean(&p, e)).collect();
            let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
            let mut rhs = DVector::<f64>::zeros(k + 1);
            for s in 0..k {
                let g: f64 = envs.iter().zip(&mp).map(|(&e, &m)| law[e] * landscape.mean(s, e) / m).sum();
                rhs[s] = -(g + mu / p[s]);
                for t in s..k {
                    let h: f64 = envs
                        .iter()
                        .zip(&mp)
                        .map(|(&e, &m)| -law[e] * landscape.mean(s, e) * landscape.mean(t, e) / (m * m))
                        .sum();
                    kkt[(s, t)] = h;
                    kkt[(t, s)] = h;
                }
                kkt[(s, s)] -= mu / (p[s] * p[s]);
                kkt[(s, k)] = 1.0;
                kkt[(k, s)] = 1.0;
            }
            let Some(sol) = kkt.clone().lu().solve(&rhs) else { break };
            let dp: Vec<f64> = (0..k).map(|s| sol[s]).collect();
            let slope: f64 = (0..k).map(|s| -rhs[s] * dp[s]).sum();
            iterations += 1;
            if !(slope.is_finite() && slope > 1e-15) {
                break;
            }
            let mut alpha: f64 = 1.0;
            for s in 0..k {
                if dp[s] < 0.0 {
                    alpha = alpha.min(-0.99 * p[s] / dp[s]);
                }
            }
            let f0 = phi(&p, mu);
            let mut moved = false;
            for _ in 0..60 {
                let cand: Vec<f64> = p.iter().zip(&dp).map(|(x, d)| x + alpha * d).collect();
                if phi(&cand, mu) >= f0 + 0.25 * alpha * slope {
                    p = cand;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if last_round {
            break;
        }
        mu *= 0.1;
    }
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    let gap = certificate_gap_under(&p, landscape, law);
    let g = gradient_under(&p, landscape, law);
    let tight: Vec<usize> = (0..k).filter(|&t| g[t] >= 1.0 - 1e-6).collect();
    SimplexSolution {
        rate: objective(&p, landscape, law),
        certificate_gap: gap,
        non_unique: landscape.rank_of(&tight, &envs) < tight.len(),
        p,
        iterations,
        converged: gap <= opts.tol,
    }
}

fn maximize_dense(landscape: &FiniteLandscape, law: &[f64], init: &[f64], opts: &SolverOptions) -> Result<SimplexSolution> {
    let q = landscape.num_traits();
    let envs = active_envs(law);
    let mut p = init.to_vec();
    let mut f = objective(&p, landscape, law);
    if !f.is_finite() {
        return Err(domain("initial strategy has zero fitness in a charged state"));
    }
    let mut eta = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut gap = f64::INFINITY;

    while iterations < opts.max_iter {
        let g = gradient_under(&p, landscape, law);
        gap = g.iter().copied().fold(f64::NEG_INFINITY, f64::max) - 1.0;
        if gap <= opts.tol {
            converged = true;
            break;
        }
        iterations += 1;

        if iterations % 5 == 0 {
            let pmax = p.iter().copied().fold(0.0, f64::max);
            let support: Vec<usize> = (0..q).filter(|&t| p[t] > 1e-9 * pmax).collect();
            if let Some(cand) = newton_candidate(&p, &g, landscape, law, &support) {
                let fc = objective(&cand, landscape, law);
                if fc > f {
                    p = cand;
                    f = fc;
                    continue;
                }
            }
        }

        let gmax = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut accepted = false;
        for _ in 0..80 {
            let mut cand: Vec<f64> = p
                .iter()
                .zip(&g)
                .map(|(&x, &gt)| x * (eta * (gt - gmax)).exp())
                .collect();
            let s: f64 = cand.iter().sum();
            cand.iter_mut().for_each(|x| *x /= s);
            let fc = objective(&cand, landscape, law);
            if fc >= f {
                let moved = cand.iter().zip(&p).any(|(a, b)| a != b);
                p = cand;
                f = fc;
                eta = (eta * 2.0).min(1e8);
                accepted = moved;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            // no ascent direction left at machine precision
            let g = gradient_under(&p, landscape, law);
            gap = g.iter().copied().fold(f64::NEG_INFINITY, f64::max) - 1.0;
            converged = gap <= opts.tol;
            break;
        }
    }

    if converged {
        if let Some((pp, fp, gp)) = prune(&p, landscape, law, opts) {
            if fp >= f - 1e-14 {
                p = pp;
                f = fp;
                gap = gp;
            }
        }
    }

    let g = gradient_under(&p, landscape, law);
    let tight: Vec<usize> = (0..q).filter(|&t| g[t] >= 1.0 - 1e-6).collect();
    let non_unique = landscape.rank_of(&tight, &envs) < tight.len();
    Ok(SimplexSolution {
        rate: f,
        certificate_gap: gap,
        p,
        iterations,
        converged,
        non_unique,
    })
}

/// Zeroes traits whose certificate is strictly slack, then re-polishes the face.
///
/// Multiplicative updates never reach exact zeros, so slack traits near
/// tightness can keep visible mass long after the gap has closed.
fn prune(p: &[f64], landscape: &FiniteLandscape, law: &[f64], opts: &SolverOptions) -> Option<(Vec<f64>, f64, f64)> {
    let g = gradient_under(p, landscape, law);
    let slack = 1.0 - 100.0 * opts.tol.max(1e-12);
    if !p.iter().zip(&g).any(|(&x, &gt)| x > 0.0 && gt < slack) {
        return None;
    }
    let mut q: Vec<f64> = p
        .iter()
        .zip(&g)
        .map(|(&x, &gt)| if gt < slack { 0.0 } else { x })
        .collect();
    let s: f64 = q.iter().sum();
    if s <= 0.0 {
        return None;
    }
    q.iter_mut().for_each(|x| *x /= s);
    let support: Vec<usize> = (0..q.len()).filter(|&t| q[t] > 0.0).collect();
    for _ in 0..20 {
        let gq = gradient_under(&q, landscape, law);
        match newton_candidate(&q, &gq, landscape, law, &support) {
            Some(c) if objective(&c, landscape, law) >= objective(&q, landscape, law) => q = c,
            _ => break,
        }
    }
    let f = objective(&q, landscape, law);
    let gap = certificate_gap_under(&q, landscape, law);
    (gap <= opts.tol).then_some((q, f, gap))
}

fn support_of(p: &[f64], tol: f64) -> Vec<usize> {
    (0..p.len()).filter(|&t| p[t] > tol).collect()
}

/// Best pure no-sensing rate `max_t gamma(delta_t)` under `law`.
pub fn best_pure_rate(landscape: &FiniteLandscape, law: &[f64]) -> f64 {
    let q = landscape.num_traits();
    (0..q)
        .map(|t| {
            let mut d = vec![0.0; q];
            d[t] = 1.0;
            gamma_under(&d, landscape, law)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Optimal no-sensing strategy under the stationary marginal, from the uniform start.
pub fn optimize_no_sensing(landscape: &FiniteLandscape, env: &EnvironmentModel, opts: &SolverOptions) -> Result<OptimizationResult> {
    let q = landscape.num_traits();
    optimize_no_sensing_from(landscape, env, &vec![1.0 / q as f64; q], opts)
}

pub fn optimize_no_sensing_from(
    landscape: &FiniteLandscape,
    env: &EnvironmentModel,
    init: &[f64],
    opts: &SolverOptions,
) -> Result<OptimizationResult> {
    let nu = finite_marginal(landscape, env)?;
    check_probability(init, "initial point")?;
    let sol = maximize_under(landscape, nu, init, opts)?;
    let pure = best_pure_rate(landscape, nu);
    Ok(OptimizationResult {
        support: vec![support_of(&sol.p, opts.support_tol)],
        strategy: Strategy::no_sensing(sol.p.clone())?,
        rate: sol.rate,
        certificate_gap: sol.certificate_gap,
        iterations: sol.iterations,
        converged: sol.converged,
        non_unique: sol.non_unique,
        regime: regime(sol.rate, CRITICAL_TOL),
        polymorphism_required: pure <= 0.0 && sol.rate > 0.0,
        method: SolveMethod::MirrorAscent,
    })
}

/// Optimal sensing strategy: one no-sensing problem per state under its conditional law.
pub fn optimize_sensing(landscape: &FiniteLandscape, env: &EnvironmentModel, opts: &SolverOptions) -> Result<OptimizationResult> {
    let nu = finite_marginal(landscape, env)?;
    let q = landscape.num_traits();
    let uniform = vec![1.0 / q as f64; q];
    let per_state: Vec<SimplexSolution> = (0..nu.len())
        .into_par_iter()
        .map(|e1| maximize_under(landscape, env.transition_row(e1)?, &uniform, opts))
        .collect::<Result<_>>()?;

    let mut rate = 0.0;
    let mut pure = 0.0;
    let mut gap = f64::NEG_INFINITY;
    for (e1, s) in per_state.iter().enumerate() {
        if nu[e1] > 0.0 {
            rate += nu[e1] * s.rate;
            pure += nu[e1] * best_pure_rate(landscape, env.transition_row(e1)?);
            gap = gap.max(s.certificate_gap);
        }
    }
    let pbar: Vec<Vec<f64>> = per_state.iter().map(|s| s.p.clone()).collect();
    Ok(OptimizationResult {
        support: pbar.iter().map(|p| support_of(p, opts.support_tol)).collect(),
        strategy: Strategy::sensing(pbar, uniform)?,
        rate,
        certificate_gap: gap,
        iterations: per_state.iter().map(|s| s.iterations).sum(),
        converged: per_state.iter().zip(nu).all(|(s, &w)| w <= 0.0 || s.converged),
        non_unique: per_state.iter().zip(nu).any(|(s, &w)| w > 0.0 && s.non_unique),
        regime: regime(rate, CRITICAL_TOL),
        polymorphism_required: pure <= 0.0 && rate > 0.0,
        method: SolveMethod::MirrorAscent,
    })
}

/// Two traits, two environments: explicit boundary and interior solutions.
///
/// Falls back to the iterative solver when the interior formula divides by zero.
pub fn optimize_2x2_closed_form(landscape: &FiniteLandscape, env: &EnvironmentModel, opts: &SolverOptions) -> Result<OptimizationResult> {
    if landscape.num_traits() != 2 || landscape.num_envs() != 2 {
        return Err(domain("closed form needs exactly two traits and two environments"));
    }
    let nu = finite_marginal(landscape, env)?;
    let (n1, n2) = (nu[0], nu[1]);
    let m = landscape.rows();
    let (m11, m12, m21, m22) = (m[0][0], m[0][1], m[1][0], m[1][1]);

    let p = if pure_optimal_under(1, landscape, nu, 0.0) {
        vec![0.0, 1.0]
    } else if pure_optimal_under(0, landscape, nu, 0.0) {
        vec![1.0, 0.0]
    } else {
        let (d2, d1) = (m22 - m12, m21 - m11);
        let det = m11 * m22 - m12 * m21;
        if d1 == 0.0 || d2 == 0.0 || det == 0.0 {
            return optimize_no_sensing(landscape, env, opts);
        }
        let p1 = n1 * m22 / d2 + n2 * m21 / d1;
        let p2 = n1 * m12 / (m12 - m22) + n2 * m11 / (m11 - m21);
        if !(0.0..=1.0).contains(&p1) || !p1.is_finite() {
            return optimize_no_sensing(landscape, env, opts);
        }
        vec![p1, p2]
    };
    let rate = if p[0] > 0.0 && p[1] > 0.0 {
        let xlogx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
        (m11 * m22 - m12 * m21).abs().ln() - n1 * (m22 - m12).abs().ln() - n2 * (m21 - m11).abs().ln()
            + xlogx(n1)
            + xlogx(n2)
    } else {
        gamma_under(&p, landscape, nu)
    };
    let gap = certificate_gap_under(&p, landscape, nu);
    let pure = best_pure_rate(landscape, nu);
    let envs = active_envs(nu);
    Ok(OptimizationResult {
        support: vec![support_of(&p, opts.support_tol)],
        strategy: Strategy::no_sensing(p)?,
        rate,
        certificate_gap: gap,
        iterations: 0,
        converged: gap <= opts.tol,
        non_unique: landscape.rank_of(&[0, 1], &envs) < 2 && !pure_optimal_under(0, landscape, nu, 0.0),
        regime: regime(rate, CRITICAL_TOL),
        polymorphism_required: pure <= 0.0 && rate > 0.0,
        method: SolveMethod::ClosedForm,
    })
}

/// Membership of a strategy in the survival set `{gamma > 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalQuery {
    pub strategy: Strategy,
    pub in_survival_set: bool,
    #[serde(with = "crate::serde_rate")]
    pub rate: f64,
    pub polymorphism_required: bool,
}

pub fn survival_query(p: &[f64], landscape: &FiniteLandscape, env: &EnvironmentModel, opts: &SolverOptions) -> Result<SurvivalQuery> {
    let nu = finite_marginal(landscape, env)?;
    let strategy = Strategy::no_sensing(p.to_vec())?;
    strategy.validate(landscape, nu)?;
    let rate = gamma_under(p, landscape, nu);
    let best = optimize_no_sensing(landscape, env, opts)?;
    Ok(SurvivalQuery {
        strategy,
        in_survival_set: rate > 0.0,
        rate,
        polymorphism_required: best_pure_rate(landscape, nu) <= 0.0 && best.rate > 0.0,
    })
}

/// Rate of a strategy as stored in a result, re-evaluated from scratch.
pub fn evaluate(strategy: &Strategy, landscape: &FiniteLandscape, env: &EnvironmentModel) -> Result<f64> {
    match &strategy.rule {
        TraitRule::NoSensing(p) => Ok(crate::growth::gamma_no_sensing(p, landscape, env)?.rate),
        TraitRule::Sensing(p) => Ok(crate::growth::gamma_sensing(p, landscape, env)?.rate),
        TraitRule::Hereditary(_) => Err(domain("hereditary strategies have no stationary rate")),
    }
}
