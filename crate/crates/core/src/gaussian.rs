//! Closed-form optimal strategies for the Gaussian landscape in an AR(1) environment.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::env::GaussianAr1Env;
use crate::error::{domain, invalid, Result};
use crate::model::{GaussianLandscape, GaussianStrategy};
use crate::optimize::{maximize_under, SolverOptions};

/// Gaussian landscape paired with a Gaussian AR(1) environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianProblem {
    pub landscape: GaussianLandscape,
    pub env: GaussianAr1Env,
}

/// Sensing strategy `e -> N(slope * e + intercept, variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSensingStrategy {
    pub slope: f64,
    pub intercept: f64,
    pub variance: f64,
}

impl GaussianSensingStrategy {
    pub fn new(slope: f64, intercept: f64, variance: f64) -> Result<Self> {
        if !(slope.is_finite() && intercept.is_finite()) {
            return Err(invalid("sensing strategy coefficients must be finite"));
        }
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(invalid("sensing strategy variance must be nonnegative"));
        }
        Ok(Self { slope, intercept, variance })
    }

    /// Trait law used after observing the previous state `e1`.
    pub fn at(&self, e1: f64) -> GaussianStrategy {
        GaussianStrategy {
            mean: self.slope * e1 + self.intercept,
            variance: self.variance,
        }
    }
}

impl GaussianProblem {
    pub fn new(c: f64, sigma1_sq: f64, env: GaussianAr1Env) -> Result<Self> {
        Ok(Self {
            landscape: GaussianLandscape::new(c, sigma1_sq)?,
            env,
        })
    }

    /// Ratio `chi = sigma2^2 / sigma1^2` of environmental to fitness width.
    pub fn chi(&self) -> f64 {
        self.env.variance() / self.landscape.sigma1_sq
    }

    /// Conditional variance `(1 - rho^2) sigma2^2` of the next state.
    pub fn residual_variance(&self) -> f64 {
        let rho = self.env.correlation();
        (1.0 - rho * rho) * self.env.variance()
    }

    /// Growth rate of a no-sensing Gaussian strategy.
    pub fn rate(&self, p: &GaussianStrategy) -> f64 {
        rate_under(&self.landscape, p, self.env.mean(), self.env.variance())
    }

    /// Growth rate of a sensing strategy, averaged over the stationary law.
    pub fn rate_sensing(&self, p: &GaussianSensingStrategy) -> f64 {
        let (mu, v, rho) = (self.env.mean(), self.env.variance(), self.env.correlation());
        let s = self.landscape.sigma1_sq + p.variance;
        // offset between the trait mean and the conditional environment mean,
        // linear in e1 with e1 ~ N(mu, v)
        let a = p.slope - rho;
        let b = p.intercept - mu * (1.0 - rho);
        let bias = a * mu + b;
        let msq = bias * bias + a * a * v + self.residual_variance();
        self.landscape.c.ln() - 0.5 * (2.0 * PI * s).ln() - msq / (2.0 * s)
    }
}

/// `E log m_{p,e}` for `e ~ N(mean, var)`.
pub fn rate_under(landscape: &GaussianLandscape, p: &GaussianStrategy, mean: f64, var: f64) -> f64 {
    let s = landscape.sigma1_sq + p.variance;
    landscape.c.ln() - 0.5 * (2.0 * PI * s).ln() - ((mean - p.mean).powi(2) + var) / (2.0 * s)
}

/// Optimal rate for a single environment law `N(·, var)` and its trait variance.
fn optimum_for_variance(landscape: &GaussianLandscape, var: f64) -> (f64, f64) {
    let s1 = landscape.sigma1_sq;
    if var <= s1 {
        (0.0, landscape.c.ln() - 0.5 * (2.0 * PI * s1).ln() - var / (2.0 * s1))
    } else {
        (var - s1, landscape.c.ln() - 0.5 * (2.0 * PI * var).ln() - 0.5)
    }
}

/// Optimal no-sensing strategy and its rate.
pub fn gaussian_optimal_no_sensing(prob: &GaussianProblem) -> (GaussianStrategy, f64) {
    let (variance, rate) = optimum_for_variance(&prob.landscape, prob.env.variance());
    (
        GaussianStrategy {
            mean: prob.env.mean(),
            variance,
        },
        rate,
    )
}

/// Optimal sensing strategy, centred on the conditional mean, and its rate.
pub fn gaussian_optimal_sensing(prob: &GaussianProblem) -> (GaussianSensingStrategy, f64) {
    let (variance, rate) = optimum_for_variance(&prob.landscape, prob.residual_variance());
    let rho = prob.env.correlation();
    (
        GaussianSensingStrategy {
            slope: rho,
            intercept: prob.env.mean() * (1.0 - rho),
            variance,
        },
        rate,
    )
}

/// Gain of the best mixed strategy over the best pure one, as a function of `chi`.
pub fn gain_mixed_over_pure(chi: f64) -> f64 {
    if chi <= 1.0 {
        0.0
    } else {
        0.5 * (chi - 1.0 - chi.ln())
    }
}

/// Gain of the best sensing strategy over the best no-sensing one.
pub fn gain_sensing_over_no_sensing(chi: f64, rho: f64) -> f64 {
    let r2 = rho * rho;
    if chi <= 1.0 {
        0.5 * r2 * chi
    } else if chi * (1.0 - r2) <= 1.0 {
        0.5 * chi.ln() - 0.5 * (1.0 - r2) * chi + 0.5
    } else {
        0.5 * (1.0 - r2).recip().ln()
    }
}

/// [`gain_mixed_over_pure`] evaluated for a problem.
pub fn gaussian_gain_mixed_over_pure(prob: &GaussianProblem) -> f64 {
    gain_mixed_over_pure(prob.chi())
}

/// [`gain_sensing_over_no_sensing`] evaluated for a problem.
pub fn gaussian_gain_sensing_over_no_sensing(prob: &GaussianProblem) -> f64 {
    gain_sensing_over_no_sensing(prob.chi(), prob.env.correlation())
}

/// `E[m_{t,e} / m_{p,e}]` for `e ~ N(mean, var)`; `+inf` when the integral diverges.
pub fn certificate_integral(landscape: &GaussianLandscape, p: &GaussianStrategy, t: f64, mean: f64, var: f64) -> f64 {
    let s1 = landscape.sigma1_sq;
    let s = s1 + p.variance;
    // ratio = exp(a e^2 + b e + c)
    let a = -0.5 / s1 + 0.5 / s;
    let b = t / s1 - p.mean / s;
    let c = -t * t / (2.0 * s1) + p.mean * p.mean / (2.0 * s) + 0.5 * (s / s1).ln();
    gaussian_exp_quadratic(a, b, c, mean, var)
}

/// `E exp(a e^2 + b e + c)` for `e ~ N(m, v)`.
fn gaussian_exp_quadratic(a: f64, b: f64, c: f64, m: f64, v: f64) -> f64 {
    let d = 1.0 - 2.0 * a * v;
    if d <= 0.0 {
        return f64::INFINITY;
    }
    let slope = 2.0 * a * m + b;
    (a * m * m + b * m + c + slope * slope * v / (2.0 * d)).exp() / d.sqrt()
}

/// Largest certificate excess `max_t E[m_t / m_p] - 1` over `traits`.
pub fn certificate_gap(prob: &GaussianProblem, p: &GaussianStrategy, traits: &[f64]) -> f64 {
    traits
        .iter()
        .map(|&t| certificate_integral(&prob.landscape, p, t, prob.env.mean(), prob.env.variance()) - 1.0)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Sensing certificate excess after observing `e1`, over `traits`.
pub fn certificate_gap_sensing(prob: &GaussianProblem, p: &GaussianSensingStrategy, e1: f64, traits: &[f64]) -> f64 {
    let (mean, var) = prob.env.conditional(e1);
    let pe = p.at(e1);
    traits
        .iter()
        .map(|&t| certificate_integral(&prob.landscape, &pe, t, mean, var) - 1.0)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Gauss-Hermite rule for the standard normal law: nodes and weights summing to 1.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    (
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1 / total).collect(),
    )
}

/// Environment nodes used by the grid solver.
pub const GRID_QUADRATURE_NODES: usize = 48;

/// Solution of the discretized problem on a trait grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSolution {
    pub traits: Vec<f64>,
    pub p: Vec<f64>,
    pub rate: f64,
    pub certificate_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl GridSolution {
    /// Mean and variance of the discrete optimum.
    pub fn moments(&self) -> (f64, f64) {
        let mean: f64 = self.traits.iter().zip(&self.p).map(|(t, w)| t * w).sum();
        let var: f64 = self.traits.iter().zip(&self.p).map(|(t, w)| w * (t - mean).powi(2)).sum();
        (mean, var)
    }
}

/// Maximizes the rate over trait distributions on `mean ± 6 max(sigma1, sd)` with spacing `step`,
/// for environments `N(mean, var)` replaced by a Gauss-Hermite rule.
pub fn grid_optimal_under(
    landscape: &GaussianLandscape,
    mean: f64,
    var: f64,
    step: f64,
    opts: &SolverOptions,
) -> Result<GridSolution> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid("grid step must be positive"));
    }
    if !(var > 0.0 && var.is_finite()) {
        return Err(domain("environment variance must be positive"));
    }
    let half = 6.0 * landscape.sigma1_sq.max(var).sqrt();
    let count = (2.0 * half / step).round() as usize;
    let traits: Vec<f64> = (0..=count).map(|i| mean - half + i as f64 * step).collect();

    let (nodes, weights) = gauss_hermite(GRID_QUADRATURE_NODES);
    let sd = var.sqrt();
    // keep nodes inside the trait window; the dropped tail mass is below 1e-8
    let kept: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].abs() <= 6.0).collect();
    let envs: Vec<f64> = kept.iter().map(|&i| mean + sd * nodes[i]).collect();
    let total: f64 = kept.iter().map(|&i| weights[i]).sum();
    let law: Vec<f64> = kept.iter().map(|&i| weights[i] / total).collect();

    let finite = landscape.discretize(&traits, &envs)?;
    let init = vec![1.0 / traits.len() as f64; traits.len()];
    let sol = maximize_under(&finite, &law, &init, opts)?;
    Ok(GridSolution {
        traits,
        p: sol.p,
        rate: sol.rate,
        certificate_gap: sol.certificate_gap,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

/// Grid solution of the no-sensing problem.
pub fn grid_optimal_no_sensing(prob: &GaussianProblem, step: f64, opts: &SolverOptions) -> Result<GridSolution> {
    grid_optimal_under(&prob.landscape, prob.env.mean(), prob.env.variance(), step, opts)
}

/// Grid solution of the sensing problem after observing `e1`.
pub fn grid_optimal_sensing_at(prob: &GaussianProblem, e1: f64, step: f64, opts: &SolverOptions) -> Result<GridSolution> {
    let (mean, var) = prob.env.conditional(e1);
    grid_optimal_under(&prob.landscape, mean, var, step, opts)
}
