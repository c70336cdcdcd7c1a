//! Mean-field law of the lineage of a typical generation-`n` individual.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::growth::{check_horizon, sample_chain};
use crate::model::{FiniteLandscape, GaussianLandscape, Strategy, TraitRule};
use crate::rng::{chunks, stream_rng};

/// Largest accepted condition number of the prior covariance.
pub const MAX_CONDITION: f64 = 1e12;

/// Independent lineage marginals `pi_0 .. pi_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductGenealogyLaw {
    pub marginals: Vec<Vec<f64>>,
}

impl ProductGenealogyLaw {
    /// Probability of a full trait path.
    pub fn path_probability(&self, path: &[usize]) -> f64 {
        self.marginals.iter().zip(path).map(|(m, &t)| m[t]).product()
    }
}

fn biased(base: &[f64], landscape: &FiniteLandscape, e: usize, what: &str) -> Result<Vec<f64>> {
    let w: Vec<f64> = base.iter().enumerate().map(|(t, &p)| p * landscape.mean(t, e)).collect();
    let z: f64 = w.iter().sum();
    if !(z > 0.0) {
        return Err(domain(format!("{what} has zero mean fitness in state {e}")));
    }
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// Exact lineage law for a non-hereditary strategy along `omega`.
///
/// Each generation before the last is size-biased by its own fitness; the last
/// one has not reproduced yet and keeps the raw strategy law.
pub fn product_genealogy(
    strategy: &Strategy,
    landscape: &FiniteLandscape,
    omega: &[usize],
    n: usize,
) -> Result<ProductGenealogyLaw> {
    if matches!(strategy.rule, TraitRule::Hereditary(_)) {
        return Err(domain("product form needs a non-hereditary strategy"));
    }
    check_horizon(strategy, landscape, omega, n)?;
    let mut marginals = Vec::with_capacity(n + 1);
    marginals.push(biased(&strategy.initial, landscape, omega[0], "initial law")?);
    for i in 1..n {
        let p = strategy.child_law(0, omega[i - 1]);
        marginals.push(biased(p, landscape, omega[i], "strategy")?);
    }
    marginals.push(strategy.child_law(0, omega[n - 1]).to_vec());
    Ok(ProductGenealogyLaw { marginals })
}

/// Gaussian trait inheritance `T_{k+1} | T_k = t, omega_k = e ~ N(intercept[e] + slope[e] t, theta_sq[e])`
/// over finitely many environments located at `env_values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HereditaryGenealogyKernel {
    pub env_values: Vec<f64>,
    pub intercept: Vec<f64>,
    pub slope: Vec<f64>,
    pub theta_sq: Vec<f64>,
    pub mu0: f64,
    pub s0_sq: f64,
}

impl HereditaryGenealogyKernel {
    pub fn new(
        env_values: Vec<f64>,
        intercept: Vec<f64>,
        slope: Vec<f64>,
        theta_sq: Vec<f64>,
        mu0: f64,
        s0_sq: f64,
    ) -> Result<Self> {
        let k = env_values.len();
        if k == 0 || intercept.len() != k || slope.len() != k || theta_sq.len() != k {
            return Err(invalid("kernel needs one intercept, slope and variance per environment"));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(finite(&env_values) && finite(&intercept) && finite(&slope) && mu0.is_finite()) {
            return Err(invalid("kernel parameters must be finite"));
        }
        if theta_sq.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(invalid("transition variances must be positive"));
        }
        if !(s0_sq > 0.0 && s0_sq.is_finite()) {
            return Err(invalid("initial variance must be positive"));
        }
        Ok(Self {
            env_values,
            intercept,
            slope,
            theta_sq,
            mu0,
            s0_sq,
        })
    }

    pub fn num_envs(&self) -> usize {
        self.env_values.len()
    }
}

/// Exact Gaussian lineage law and the finite-horizon rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianGenealogyLaw {
    /// Lineage mean `mu_hat`.
    pub mean: Vec<f64>,
    /// Lineage covariance `Sigma_hat`.
    pub covariance: Vec<Vec<f64>>,
    /// `n^-1 log E[M_n]`.
    pub rate: f64,
    /// Unweighted chain mean `mu`.
    pub prior_mean: Vec<f64>,
    /// Unweighted chain covariance `Sigma`.
    pub prior_covariance: Vec<Vec<f64>>,
    /// `A`: initial mean then the intercepts along the path.
    pub offsets: Vec<f64>,
    /// Subdiagonal of `C`: the slopes along the path.
    pub slopes: Vec<f64>,
    /// Diagonal of `S`.
    pub variances: Vec<f64>,
    /// `V`: environment values along the path, then 0.
    pub targets: Vec<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Lineage law for Gaussian inheritance on the Gaussian landscape along `omega`.
pub fn gaussian_genealogy(
    kernel: &HereditaryGenealogyKernel,
    landscape: &GaussianLandscape,
    omega: &[usize],
    n: usize,
) -> Result<GaussianGenealogyLaw> {
    if n == 0 {
        return Err(domain("horizon must be at least 1"));
    }
    if omega.len() < n {
        return Err(domain(format!("horizon {n} exceeds path length {}", omega.len())));
    }
    if let Some(&e) = omega[..n].iter().find(|&&e| e >= kernel.num_envs()) {
        return Err(domain(format!("path visits state {e}, kernel has {}", kernel.num_envs())));
    }
    let d = n + 1;
    let path = &omega[..n];
    let a: Vec<f64> = std::iter::once(kernel.mu0)
        .chain(path.iter().map(|&e| kernel.intercept[e]))
        .collect();
    let beta: Vec<f64> = path.iter().map(|&e| kernel.slope[e]).collect();
    let s: Vec<f64> = std::iter::once(kernel.s0_sq)
        .chain(path.iter().map(|&e| kernel.theta_sq[e]))
        .collect();
    let v: Vec<f64> = path
        .iter()
        .map(|&e| kernel.env_values[e])
        .chain(std::iter::once(0.0))
        .collect();
    let inv_s1 = 1.0 / landscape.sigma1_sq;

    // L = I - C is unit lower bidiagonal: forward substitution gives mu = L^-1 A
    let mut mu = vec![0.0; d];
    mu[0] = a[0];
    for k in 1..d {
        mu[k] = a[k] + beta[k - 1] * mu[k - 1];
    }
    // L^-1 column by column, then Sigma = L^-1 S L^-T
    let mut linv = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        linv[(j, j)] = 1.0;
        for k in j + 1..d {
            linv[(k, j)] = beta[k - 1] * linv[(k - 1, j)];
        }
    }
    let sigma = &linv * DMatrix::from_diagonal(&DVector::from_vec(s.clone())) * linv.transpose();
    let eig = SymmetricEigen::new(sigma.clone()).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(Error::Singular(format!("chain covariance has condition number {:e}", hi / lo)));
    }

    // Sigma^-1 = L' S^-1 L is tridiagonal; no explicit inverse of Sigma is formed
    let mut l = DMatrix::<f64>::identity(d, d);
    for k in 1..d {
        l[(k, k - 1)] = -beta[k - 1];
    }
    let s_inv = DMatrix::from_diagonal(&DVector::from_iterator(d, s.iter().map(|x| 1.0 / x)));
    let prec = l.transpose() * &s_inv * &l;
    let mut post_prec = prec.clone();
    for k in 0..n {
        post_prec[(k, k)] += inv_s1;
    }
    let chol = post_prec
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("lineage precision is not positive definite".into()))?;
    let sigma_hat = chol.inverse();

    let mu_v = DVector::from_vec(mu.clone());
    let v_v = DVector::from_vec(v.clone());
    // Sigma^-1 mu = L' S^-1 A
    let a_v = DVector::from_vec(a.clone());
    let prec_mu = l.transpose() * (&s_inv * &a_v);
    let b = &prec_mu + &v_v * inv_s1;
    let mu_hat = chol.solve(&b);

    let mu_q = a_v.dot(&(&s_inv * &a_v));
    let hat_q = mu_hat.dot(&b);
    let log_det_s: f64 = s.iter().map(|x| x.ln()).sum();
    let log_det_post: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    // det(I + s^-2 J Sigma) = det(Sigma) det(Sigma_hat^-1)
    let log_det = log_det_s + log_det_post;
    let nf = n as f64;
    let rate = (landscape.c / (2.0 * PI * landscape.sigma1_sq).sqrt()).ln() - log_det / (2.0 * nf)
        + (hat_q - mu_q - inv_s1 * v_v.dot(&v_v)) / (2.0 * nf);
    debug_assert!((mu_q - mu_v.dot(&(&prec * &mu_v))).abs() <= 1e-8 * (1.0 + mu_q.abs()));

    Ok(GaussianGenealogyLaw {
        mean: mu_hat.iter().copied().collect(),
        covariance: rows(&sigma_hat),
        rate,
        prior_mean: mu,
        prior_covariance: rows(&sigma),
        offsets: a,
        slopes: beta,
        variances: s,
        targets: v,
    })
}

impl GaussianGenealogyLaw {
    /// Writes the mean as one row and the covariance as `n + 1` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.mean.len();
        let header: Vec<String> = std::iter::once("row".to_string())
            .chain((0..d).map(|k| format!("t{k}")))
            .collect();
        w.write_record(&header)?;
        let fmt = |label: String, xs: &[f64]| -> Vec<String> {
            std::iter::once(label).chain(xs.iter().map(|x| format!("{x:e}"))).collect()
        };
        w.write_record(fmt("mean".into(), &self.mean))?;
        for (k, r) in self.covariance.iter().enumerate() {
            w.write_record(fmt(format!("cov{k}"), r))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Self-normalized weighted sample of trait paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPaths {
    pub paths: Vec<Vec<usize>>,
    /// Normalized weights, summing to 1.
    pub weights: Vec<f64>,
    pub effective_sample_size: f64,
    pub num_traits: usize,
}

impl WeightedPaths {
    /// Weighted marginal of every coordinate with its standard error.
    pub fn marginals(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let d = self.paths.first().map_or(0, Vec::len);
        let q = self.num_traits;
        let mut est = vec![vec![0.0; q]; d];
        for (path, &w) in self.paths.iter().zip(&self.weights) {
            for (k, &t) in path.iter().enumerate() {
                est[k][t] += w;
            }
        }
        // delta-method variance of a ratio estimator: sum w_i^2 (1{T=t} - est)^2
        let mut var = vec![vec![0.0; q]; d];
        for (path, &w) in self.paths.iter().zip(&self.weights) {
            for (k, &tk) in path.iter().enumerate() {
                for t in 0..q {
                    let ind = if tk == t { 1.0 } else { 0.0 };
                    var[k][t] += w * w * (ind - est[k][t]).powi(2);
                }
            }
        }
        let se = var.into_iter().map(|r| r.into_iter().map(f64::sqrt).collect()).collect();
        (est, se)
    }

    /// Writes path coordinates and the weight of every sample.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.paths.first().map_or(0, Vec::len);
        let header: Vec<String> = (0..d)
            .map(|k| format!("t{k}"))
            .chain(std::iter::once("weight".to_string()))
            .collect();
        w.write_record(&header)?;
        for (p, wt) in self.paths.iter().zip(&self.weights) {
            let row: Vec<String> = p
                .iter()
                .map(|t| t.to_string())
                .chain(std::iter::once(format!("{wt:e}")))
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws trait chains along `omega` and weights them by `M_n`.
pub fn hereditary_genealogy_mc(
    strategy: &Strategy,
    landscape: &FiniteLandscape,
    omega: &[usize],
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<WeightedPaths> {
    check_horizon(strategy, landscape, omega, n)?;
    if samples == 0 {
        return Err(domain("need at least one sample"));
    }
    let parts: Vec<(Vec<Vec<usize>>, Vec<f64>)> = chunks(samples)
        .into_par_iter()
        .map(|(stream, count)| {
            let mut rng = stream_rng(seed, stream);
            let mut buf = Vec::with_capacity(n + 1);
            let mut paths = Vec::with_capacity(count);
            let mut logw = Vec::with_capacity(count);
            for _ in 0..count {
                logw.push(sample_chain(strategy, landscape, omega, n, &mut rng, &mut buf));
                paths.push(buf.clone());
            }
            (paths, logw)
        })
        .collect();
    let mut paths = Vec::with_capacity(samples);
    let mut logw = Vec::with_capacity(samples);
    for (p, l) in parts {
        paths.extend(p);
        logw.extend(l);
    }
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(domain("every sampled path has zero weight"));
    }
    let mut weights: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let effective_sample_size = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    Ok(WeightedPaths {
        paths,
        weights,
        effective_sample_size,
        num_traits: landscape.num_traits(),
    })
}
