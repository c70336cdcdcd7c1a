//! Subcommand implementations; each returns its rendered output.

use serde::Serialize;

use super::config::{
    build_env, resolve_path, Config, EnvSpec, GaussianStrategyChoice, GrowthMethodSpec, Landscape, OptimizeMode,
};
use crate::env::EnvironmentModel;
use crate::error::{Error, Result};
use crate::gaussian::{
    certificate_gap, gaussian_gain_mixed_over_pure, gaussian_gain_sensing_over_no_sensing, gaussian_optimal_no_sensing,
    gaussian_optimal_sensing, GaussianProblem, GaussianSensingStrategy,
};
use crate::genealogy::{gaussian_genealogy, hereditary_genealogy_mc, product_genealogy};
use crate::growth::{
    classify, gamma_ergodic_mc, gamma_hereditary, gamma_hereditary_enumerated, gamma_importance_sampled,
    gamma_jensen_bound, gamma_no_sensing, gamma_sensing, Classification, GrowthReport, ReferenceKernel, CRITICAL_TOL,
};
use crate::model::{FiniteLandscape, GaussianStrategy, Strategy, TraitRule};
use crate::optimize::{
    evaluate, optimize_2x2_closed_form, optimize_no_sensing, optimize_sensing, OptimizationResult,
};
use crate::rng::{replicate_seed, stream_rng};
use crate::simulate::{
    composition_given_size, lineage_marginals, run_on_path, run_replicates, sample_lineage, CompositionReport,
    SimulationOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Rendered result of one subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// Base file name of the primary output.
    pub name: String,
    pub format: Format,
    pub primary: String,
    /// Additional files written only with `--out`.
    pub extra: Vec<(String, String)>,
    pub converged: bool,
}

impl Outcome {
    fn new(name: &str, format: Format, primary: String) -> Self {
        Self {
            name: name.to_string(),
            format,
            primary,
            extra: Vec::new(),
            converged: true,
        }
    }
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Config(e.to_string()))
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn seed_of(cfg: &Config, seed: Option<u64>) -> u64 {
    seed.or(cfg.seed).unwrap_or(0)
}

#[derive(Serialize)]
struct GaussianOptimum<S: Serialize> {
    strategy: S,
    rate: f64,
    certificate_gap: f64,
}

/// Certificate grid of 1000 traits spanning `mu ± 6 max(sigma1, sigma2)`.
pub fn certificate_grid(prob: &GaussianProblem) -> Vec<f64> {
    let half = 6.0 * prob.landscape.sigma1_sq.max(prob.env.variance()).sqrt();
    let mu = prob.env.mean();
    (0..1000).map(|i| mu - half + 2.0 * half * i as f64 / 999.0).collect()
}

fn strategy_rows(result: &OptimizationResult, l: &FiniteLandscape) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    match &result.strategy.rule {
        TraitRule::NoSensing(p) => {
            for (t, w) in p.iter().enumerate() {
                rows.push(vec!["*".into(), l.traits()[t].clone(), format!("{w}")]);
            }
        }
        TraitRule::Sensing(pbar) => {
            for (e, p) in pbar.iter().enumerate() {
                for (t, w) in p.iter().enumerate() {
                    rows.push(vec![l.envs()[e].clone(), l.traits()[t].clone(), format!("{w}")]);
                }
            }
        }
        TraitRule::Hereditary(_) => {}
    }
    rows
}

pub fn cmd_optimize(cfg: &Config, format: Format) -> Result<Outcome> {
    let opts = cfg.solver();
    match cfg.landscape()? {
        Landscape::Finite(l) => {
            let env = cfg.environment()?;
            let result = match cfg.optimize.mode {
                OptimizeMode::NoSensing => optimize_no_sensing(&l, &env, &opts)?,
                OptimizeMode::Sensing => optimize_sensing(&l, &env, &opts)?,
                OptimizeMode::ClosedForm => optimize_2x2_closed_form(&l, &env, &opts)?,
            };
            let primary = match format {
                Format::Json => json(&result)?,
                Format::Csv => csv_string(&["state", "trait", "probability"], strategy_rows(&result, &l))?,
            };
            let mut out = Outcome::new("optimize", format, primary);
            out.converged = result.converged;
            Ok(out)
        }
        Landscape::Gaussian(_) => {
            let prob = cfg.gaussian_problem()?;
            let grid = certificate_grid(&prob);
            let primary = match cfg.optimize.mode {
                OptimizeMode::Sensing => {
                    let (s, rate) = gaussian_optimal_sensing(&prob);
                    let gap = sensing_gap(&prob, &s, &grid);
                    render_gaussian(format, &GaussianOptimum { strategy: s, rate, certificate_gap: gap }, &[
                        ("slope", s.slope),
                        ("intercept", s.intercept),
                        ("variance", s.variance),
                        ("rate", rate),
                        ("certificate_gap", gap),
                    ])?
                }
                _ => {
                    let (p, rate) = gaussian_optimal_no_sensing(&prob);
                    let gap = certificate_gap(&prob, &p, &grid);
                    render_gaussian(format, &GaussianOptimum { strategy: p, rate, certificate_gap: gap }, &[
                        ("mean", p.mean),
                        ("variance", p.variance),
                        ("rate", rate),
                        ("certificate_gap", gap),
                    ])?
                }
            };
            Ok(Outcome::new("optimize", format, primary))
        }
    }
}

/// Sensing certificate at environment values spread over the stationary law.
fn sensing_gap(prob: &GaussianProblem, s: &GaussianSensingStrategy, grid: &[f64]) -> f64 {
    let sd = prob.env.variance().sqrt();
    (-10..=10)
        .map(|k| prob.env.mean() + 0.3 * k as f64 * sd)
        .map(|e1| {
            let shift = s.at(e1).mean - prob.env.mean();
            let g: Vec<f64> = grid.iter().map(|t| t + shift).collect();
            crate::gaussian::certificate_gap_sensing(prob, s, e1, &g)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn render_gaussian<T: Serialize>(format: Format, value: &T, fields: &[(&str, f64)]) -> Result<String> {
    match format {
        Format::Json => json(value),
        Format::Csv => csv_string(
            &fields.iter().map(|f| f.0).collect::<Vec<_>>(),
            [fields.iter().map(|f| format!("{}", f.1)).collect()],
        ),
    }
}

/// Parameters understood by `scan`.
pub const SCAN_PARAMETERS: &[&str] = &["q", "q1", "q2", "nu1", "rho", "chi", "sigma2_sq"];

fn apply_scan(cfg: &Config, parameter: &str, v: f64) -> Result<EnvSpec> {
    let mut env = cfg.environment.clone();
    let mismatch = || Error::Config(format!("parameter `{parameter}` does not apply to this environment"));
    match (parameter, &mut env) {
        ("q", EnvSpec::FiniteMarkov { transition, q1, q2, .. }) => {
            *transition = None;
            *q1 = Some(v);
            *q2 = Some(v);
        }
        ("q1", EnvSpec::FiniteMarkov { q1: Some(a), .. }) => *a = v,
        ("q2", EnvSpec::FiniteMarkov { q1: Some(_), q2, .. }) => *q2 = Some(v),
        ("nu1", EnvSpec::FiniteIid { marginal, .. }) if marginal.len() == 2 => *marginal = vec![v, 1.0 - v],
        ("rho", EnvSpec::GaussianAr1 { correlation, .. }) => *correlation = v,
        ("chi", EnvSpec::GaussianAr1 { variance, .. }) => match cfg.landscape {
            super::config::LandscapeSpec::Gaussian { sigma1_sq, .. } => *variance = v * sigma1_sq,
            _ => return Err(mismatch()),
        },
        ("sigma2_sq", EnvSpec::GaussianAr1 { variance, .. }) => *variance = v,
        (p, _) if !SCAN_PARAMETERS.contains(&p) => {
            return Err(Error::Config(format!(
                "unknown scan parameter `{p}`; expected one of {}",
                SCAN_PARAMETERS.join(", ")
            )))
        }
        _ => return Err(mismatch()),
    }
    Ok(env)
}

#[derive(Serialize)]
struct FiniteScanRow {
    value: f64,
    gamma_star: f64,
    gamma_star_star: f64,
    gain: f64,
    p_star: String,
    p_sensing: String,
    converged: bool,
}

#[derive(Serialize)]
struct GaussianScanRow {
    value: f64,
    chi: f64,
    rho: f64,
    gamma_star: f64,
    gamma_star_star: f64,
    gain_mixed_over_pure: f64,
    gain_sensing_over_no_sensing: f64,
    p_mean: f64,
    p_variance: f64,
    sensing_slope: f64,
    sensing_intercept: f64,
    sensing_variance: f64,
}

fn serialize_rows<T: Serialize>(format: Format, rows: &[T], header: &[&str]) -> Result<String> {
    match format {
        Format::Json => json(&rows),
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record(header)?;
            for r in rows {
                w.serialize(r)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

pub fn cmd_scan(cfg: &Config, parameter: Option<&str>, values: Option<&[f64]>, format: Format) -> Result<Outcome> {
    let spec = cfg.scan.as_ref();
    let parameter = parameter
        .map(str::to_string)
        .or_else(|| spec.map(|s| s.parameter.clone()))
        .ok_or_else(|| Error::Config("scan needs a parameter (--param or [scan].parameter)".into()))?;
    let grid = match values {
        Some(v) => v.to_vec(),
        None => spec.map(|s| s.grid()).transpose()?.unwrap_or_default(),
    };
    if !SCAN_PARAMETERS.contains(&parameter.as_str()) {
        return Err(Error::Config(format!(
            "unknown scan parameter `{parameter}`; expected one of {}",
            SCAN_PARAMETERS.join(", ")
        )));
    }
    let opts = cfg.solver();
    let mut converged = true;
    let primary = match &cfg.landscape {
        super::config::LandscapeSpec::Gaussian { c, sigma1_sq } => {
            let mut rows = Vec::with_capacity(grid.len());
            for &v in &grid {
                let env = match build_env(&apply_scan(cfg, &parameter, v)?)? {
                    EnvironmentModel::GaussianAr1(e) => e,
                    _ => unreachable!("gaussian parameters keep a gaussian environment"),
                };
                let prob = GaussianProblem::new(*c, *sigma1_sq, env)?;
                let (p, g1) = gaussian_optimal_no_sensing(&prob);
                let (s, g2) = gaussian_optimal_sensing(&prob);
                rows.push(GaussianScanRow {
                    value: v,
                    chi: prob.chi(),
                    rho: env.correlation(),
                    gamma_star: g1,
                    gamma_star_star: g2,
                    gain_mixed_over_pure: gaussian_gain_mixed_over_pure(&prob),
                    gain_sensing_over_no_sensing: gaussian_gain_sensing_over_no_sensing(&prob),
                    p_mean: p.mean,
                    p_variance: p.variance,
                    sensing_slope: s.slope,
                    sensing_intercept: s.intercept,
                    sensing_variance: s.variance,
                });
            }
            serialize_rows(format, &rows, &[
                "value",
                "chi",
                "rho",
                "gamma_star",
                "gamma_star_star",
                "gain_mixed_over_pure",
                "gain_sensing_over_no_sensing",
                "p_mean",
                "p_variance",
                "sensing_slope",
                "sensing_intercept",
                "sensing_variance",
            ])?
        }
        _ => {
            let l = match cfg.landscape()? {
                Landscape::Finite(l) => l,
                Landscape::Gaussian(_) => unreachable!(),
            };
            let mut rows = Vec::with_capacity(grid.len());
            for &v in &grid {
                let env = build_env(&apply_scan(cfg, &parameter, v)?)?;
                let a = optimize_no_sensing(&l, &env, &opts)?;
                let b = optimize_sensing(&l, &env, &opts)?;
                converged &= a.converged && b.converged;
                let p_star = match &a.strategy.rule {
                    TraitRule::NoSensing(p) => join(p),
                    _ => unreachable!(),
                };
                let p_sensing = match &b.strategy.rule {
                    TraitRule::Sensing(pbar) => pbar.iter().map(|p| join(p)).collect::<Vec<_>>().join("|"),
                    _ => unreachable!(),
                };
                rows.push(FiniteScanRow {
                    value: v,
                    gamma_star: a.rate,
                    gamma_star_star: b.rate,
                    gain: b.rate - a.rate,
                    p_star,
                    p_sensing,
                    converged: a.converged && b.converged,
                });
            }
            serialize_rows(format, &rows, &[
                "value",
                "gamma_star",
                "gamma_star_star",
                "gain",
                "p_star",
                "p_sensing",
                "converged",
            ])?
        }
    };
    let mut out = Outcome::new("scan", format, primary);
    out.converged = converged;
    Ok(out)
}

/// Aggregate statistics over simulation replicates.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub seed: u64,
    pub replicates: usize,
    pub generations: usize,
    pub roots: u64,
    pub extinct: usize,
    pub extinction_fraction: f64,
    pub capped: usize,
    /// Rate of the simulated strategy, when it has a stationary one.
    pub exact_rate: Option<f64>,
    pub classification: Option<Classification>,
    /// Mean of `n^-1 log(|Z_n| / N_0)` over surviving, uncapped replicates.
    pub conditional_growth: Option<f64>,
    pub conditional_growth_stderr: Option<f64>,
    pub survivors_used: usize,
    pub mean_final_size: f64,
    pub composition: Option<CompositionReport>,
}

pub fn cmd_simulate(cfg: &Config, seed: Option<u64>, format: Format) -> Result<Outcome> {
    let (l, env) = cfg.finite()?;
    let strategy = cfg.strategy(l.num_traits())?;
    let seed = seed_of(cfg, seed);
    let spec = cfg.simulation;
    let opts = SimulationOptions {
        family: spec.family,
        generations: spec.generations,
        roots: spec.roots,
        cap: spec.cap,
        record_genealogy: spec.lineages > 0,
    };
    let runs = run_replicates(&strategy, &l, &env, &opts, spec.replicates, seed)?;
    let n = spec.generations;

    let extinct = runs.iter().filter(|r| !r.survived()).count();
    let capped = runs.iter().filter(|r| r.capped).count();
    let growth: Vec<f64> = runs
        .iter()
        .filter(|r| r.survived() && !r.capped)
        .map(|r| ((r.last().total as f64).ln() - (spec.roots as f64).ln()) / n as f64)
        .collect();
    let (cg, cg_se) = if growth.is_empty() {
        (None, None)
    } else {
        let k = growth.len() as f64;
        let m = growth.iter().sum::<f64>() / k;
        let se = if growth.len() > 1 {
            (growth.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
        } else {
            0.0
        };
        (Some(m), Some(se))
    };
    let exact_rate = if strategy.is_hereditary() {
        None
    } else {
        finite_or_none(evaluate(&strategy, &l, &env)?)
    };
    let classification = match (&strategy.rule, exact_rate) {
        (TraitRule::NoSensing(p), Some(rate)) => Some(classify(rate, CRITICAL_TOL, p, &l, &env, spec.family)?),
        _ => None,
    };
    let composition = if strategy.is_hereditary() {
        None
    } else {
        Some(composition_given_size(&runs, &strategy, n, spec.level)?)
    };
    let summary = SimulationSummary {
        seed,
        replicates: spec.replicates,
        generations: n,
        roots: spec.roots,
        extinct,
        extinction_fraction: if runs.is_empty() { 0.0 } else { extinct as f64 / runs.len() as f64 },
        capped,
        exact_rate,
        classification,
        conditional_growth: cg,
        conditional_growth_stderr: cg_se,
        survivors_used: growth.len(),
        mean_final_size: if runs.is_empty() {
            0.0
        } else {
            runs.iter().map(|r| r.last().total as f64).sum::<f64>() / runs.len() as f64
        },
        composition,
    };

    let mut traj = Vec::new();
    for (r, run) in runs.iter().enumerate() {
        for s in &run.trajectory {
            for (t, c) in s.counts.iter().enumerate() {
                traj.push(vec![r.to_string(), s.generation.to_string(), l.traits()[t].clone(), c.to_string()]);
            }
        }
    }
    let trajectories = csv_string(&["replicate", "generation", "trait", "count"], traj)?;

    let mut lineage_rows = Vec::new();
    if spec.lineages > 0 {
        for (r, run) in runs.iter().enumerate().filter(|(_, r)| r.survived()) {
            let mut rng = stream_rng(replicate_seed(seed, r as u64), 1);
            for k in 0..spec.lineages {
                let lin = sample_lineage(run, &mut rng)?;
                let mut row = vec![r.to_string(), k.to_string()];
                row.extend(lin.traits.iter().map(|&t| l.traits()[t].clone()));
                lineage_rows.push(row);
            }
        }
    }
    let mut header = vec!["replicate".to_string(), "sample".to_string()];
    header.extend((0..=n).map(|k| format!("t{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let lineages = csv_string(&header, lineage_rows)?;

    let summary_json = json(&summary)?;
    let mut out = match format {
        Format::Json => Outcome::new("summary", format, summary_json),
        Format::Csv => {
            let mut o = Outcome::new("trajectories", format, trajectories.clone());
            o.extra.push(("summary.json".into(), summary_json));
            o
        }
    };
    if format == Format::Json {
        out.extra.push(("trajectories.csv".into(), trajectories));
    }
    if spec.lineages > 0 {
        out.extra.push(("lineages.csv".into(), lineages));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthOutput {
    pub report: Option<GrowthReport>,
    pub jensen_bound: Option<f64>,
    pub path: Option<Vec<usize>>,
}

fn fixed_path(spec: Option<&super::config::PathSpec>, env: &EnvironmentModel, n: usize, seed: u64) -> Result<Vec<usize>> {
    let labels = env
        .state_labels()
        .ok_or_else(|| Error::Config("a fixed path needs a finite environment".into()))?;
    match spec {
        Some(p) => resolve_path(p, labels),
        None => Ok(env.sample_path(n, seed)?.as_discrete()?.to_vec()),
    }
}

pub fn cmd_growth(cfg: &Config, seed: Option<u64>, format: Format) -> Result<Outcome> {
    let seed = seed_of(cfg, seed);
    let g = &cfg.growth;
    let output = match cfg.landscape()? {
        Landscape::Gaussian(_) => {
            let prob = cfg.gaussian_problem()?;
            let rate = match cfg.gaussian_strategy()? {
                GaussianStrategyChoice::NoSensing(p) => prob.rate(&p),
                GaussianStrategyChoice::Sensing(s) => prob.rate_sensing(&s),
            };
            GrowthOutput {
                report: Some(GrowthReport::exact(rate)),
                jensen_bound: None,
                path: None,
            }
        }
        Landscape::Finite(l) => {
            let env = cfg.environment()?;
            let strategy = cfg.strategy(l.num_traits())?;
            match g.method {
                GrowthMethodSpec::Exact => {
                    let report = match &strategy.rule {
                        TraitRule::NoSensing(p) => gamma_no_sensing(p, &l, &env)?,
                        TraitRule::Sensing(p) => gamma_sensing(p, &l, &env)?,
                        TraitRule::Hereditary(_) => {
                            return Err(Error::Config(
                                "hereditary strategies need method = hereditary, enumerate, jensen or importance".into(),
                            ))
                        }
                    };
                    GrowthOutput {
                        report: Some(report),
                        jensen_bound: None,
                        path: None,
                    }
                }
                GrowthMethodSpec::Ergodic => GrowthOutput {
                    report: Some(gamma_ergodic_mc(&strategy, &l, &env, g.horizon, seed)?),
                    jensen_bound: None,
                    path: None,
                },
                method => {
                    let omega = fixed_path(g.path.as_ref(), &env, g.horizon, seed)?;
                    let n = omega.len().min(g.horizon);
                    let (report, jensen_bound) = match method {
                        GrowthMethodSpec::Hereditary => (Some(gamma_hereditary(&strategy, &l, &omega, n, g.samples, seed)?), None),
                        GrowthMethodSpec::Enumerate => (Some(gamma_hereditary_enumerated(&strategy, &l, &omega, n)?), None),
                        GrowthMethodSpec::Jensen => (None, Some(gamma_jensen_bound(&strategy, &l, &omega, n)?)),
                        _ => {
                            let reference = ReferenceKernel::uniform(l.num_traits(), l.num_envs());
                            (
                                Some(gamma_importance_sampled(&strategy, &reference, &l, &omega, n, g.samples, seed)?),
                                None,
                            )
                        }
                    };
                    GrowthOutput {
                        report,
                        jensen_bound,
                        path: Some(omega),
                    }
                }
            }
        }
    };
    let primary = match format {
        Format::Json => json(&output)?,
        Format::Csv => {
            let (rate, stderr) = match (&output.report, output.jensen_bound) {
                (Some(r), _) => (r.rate, r.stderr),
                (None, Some(b)) => (b, 0.0),
                _ => (f64::NAN, f64::NAN),
            };
            csv_string(&["rate", "stderr"], [vec![format!("{rate}"), format!("{stderr}")]])?
        }
    };
    Ok(Outcome::new("growth", format, primary))
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub roots: u64,
    /// Largest total-variation distance over generations; `None` if the population died out.
    pub tv_max: Option<f64>,
    pub tv_mean: Option<f64>,
}

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Distance between simulated lineage marginals and an exact law, one row per root count.
pub fn lineage_comparison(
    strategy: &Strategy,
    l: &FiniteLandscape,
    omega: &[usize],
    exact: &[Vec<f64>],
    roots: &[u64],
    cap: u64,
    seed: u64,
) -> Result<Vec<ComparisonRow>> {
    let n = exact.len() - 1;
    let path = crate::env::EnvironmentPath::discrete(omega[..n].to_vec());
    roots
        .iter()
        .map(|&n0| {
            let opts = SimulationOptions {
                generations: n,
                roots: n0,
                cap: cap.max(n0),
                record_genealogy: true,
                ..Default::default()
            };
            let mut rng = stream_rng(seed, n0);
            let run = run_on_path(strategy, l, &path, &opts, &mut rng)?;
            if !run.survived() {
                return Ok(ComparisonRow {
                    roots: n0,
                    tv_max: None,
                    tv_mean: None,
                });
            }
            let emp = lineage_marginals(&run, l.num_traits())?;
            let tv: Vec<f64> = emp.iter().zip(exact).map(|(a, b)| total_variation(a, b)).collect();
            Ok(ComparisonRow {
                roots: n0,
                tv_max: Some(tv.iter().copied().fold(0.0, f64::max)),
                tv_mean: Some(tv.iter().sum::<f64>() / tv.len() as f64),
            })
        })
        .collect()
}

#[derive(Serialize)]
struct WeightedMarginals {
    marginals: Vec<Vec<f64>>,
    stderr: Vec<Vec<f64>>,
    effective_sample_size: f64,
}

pub fn cmd_genealogy(cfg: &Config, seed: Option<u64>, format: Format) -> Result<Outcome> {
    let seed = seed_of(cfg, seed);
    let spec = &cfg.genealogy;
    let n = spec.n;
    match cfg.landscape()? {
        Landscape::Gaussian(gl) => {
            let kernel = cfg
                .gaussian_kernel()?
                .ok_or_else(|| Error::Config("a gaussian genealogy needs [genealogy.kernel]".into()))?;
            let labels: Vec<String> = (1..=kernel.num_envs()).map(|i| format!("e{i}")).collect();
            let omega = match &spec.path {
                Some(p) => resolve_path(p, &labels)?,
                None => return Err(Error::Config("a gaussian genealogy needs [genealogy].path".into())),
            };
            let law = gaussian_genealogy(&kernel, &gl, &omega, n)?;
            let primary = match format {
                Format::Json => json(&law)?,
                Format::Csv => {
                    let mut buf = Vec::new();
                    law.write_csv(&mut buf)?;
                    String::from_utf8(buf).expect("csv output is utf-8")
                }
            };
            Ok(Outcome::new("genealogy", format, primary))
        }
        Landscape::Finite(l) => {
            let env = cfg.environment()?;
            let strategy = cfg.strategy(l.num_traits())?;
            let omega = fixed_path(spec.path.as_ref(), &env, n, seed)?;
            let (marginals, body) = if strategy.is_hereditary() {
                let w = hereditary_genealogy_mc(&strategy, &l, &omega, n, spec.samples, seed)?;
                let (m, se) = w.marginals();
                let body = WeightedMarginals {
                    marginals: m.clone(),
                    stderr: se,
                    effective_sample_size: w.effective_sample_size,
                };
                (m, json(&body)?)
            } else {
                let law = product_genealogy(&strategy, &l, &omega, n)?;
                (law.marginals.clone(), json(&law)?)
            };
            let primary = match format {
                Format::Json => body,
                Format::Csv => {
                    let rows = marginals.iter().enumerate().flat_map(|(k, m)| {
                        m.iter()
                            .enumerate()
                            .map(move |(t, w)| vec![k.to_string(), t.to_string(), format!("{w}")])
                            .collect::<Vec<_>>()
                    });
                    let rows: Vec<Vec<String>> = rows
                        .map(|mut r| {
                            let t: usize = r[1].parse().expect("index");
                            r[1] = l.traits()[t].clone();
                            r
                        })
                        .collect();
                    csv_string(&["generation", "trait", "probability"], rows)?
                }
            };
            let mut out = Outcome::new("genealogy", format, primary);
            if !spec.compare_roots.is_empty() {
                if strategy.is_hereditary() {
                    return Err(Error::Config("lineage comparison needs a non-hereditary strategy".into()));
                }
                let rows = lineage_comparison(&strategy, &l, &omega, &marginals, &spec.compare_roots, cfg.simulation.cap, seed)?;
                let fmt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| format!("{v}"));
                let table = csv_string(
                    &["roots", "tv_max", "tv_mean"],
                    rows.iter()
                        .map(|r| vec![r.roots.to_string(), fmt(r.tv_max), fmt(r.tv_mean)]),
                )?;
                out.extra.push(("comparison.csv".into(), table));
            }
            Ok(out)
        }
    }
}

#[derive(Serialize)]
struct GaussianOptimalReport {
    chi: f64,
    no_sensing: GaussianOptimum<GaussianStrategy>,
    sensing: GaussianOptimum<GaussianSensingStrategy>,
}

#[derive(Serialize)]
struct GaussianGainReport {
    chi: f64,
    rho: f64,
    gain_mixed_over_pure: f64,
    gain_sensing_over_no_sensing: f64,
}

pub fn cmd_gaussian_optimal(cfg: &Config, format: Format) -> Result<Outcome> {
    let prob = cfg.gaussian_problem()?;
    let grid = certificate_grid(&prob);
    let (p, g1) = gaussian_optimal_no_sensing(&prob);
    let (s, g2) = gaussian_optimal_sensing(&prob);
    let report = GaussianOptimalReport {
        chi: prob.chi(),
        no_sensing: GaussianOptimum {
            strategy: p,
            rate: g1,
            certificate_gap: certificate_gap(&prob, &p, &grid),
        },
        sensing: GaussianOptimum {
            strategy: s,
            rate: g2,
            certificate_gap: sensing_gap(&prob, &s, &grid),
        },
    };
    let primary = render_gaussian(format, &report, &[
        ("chi", report.chi),
        ("p_mean", p.mean),
        ("p_variance", p.variance),
        ("gamma_star", g1),
        ("sensing_slope", s.slope),
        ("sensing_intercept", s.intercept),
        ("sensing_variance", s.variance),
        ("gamma_star_star", g2),
    ])?;
    Ok(Outcome::new("gaussian_optimal", format, primary))
}

pub fn cmd_gaussian_gain(cfg: &Config, format: Format) -> Result<Outcome> {
    let prob = cfg.gaussian_problem()?;
    let report = GaussianGainReport {
        chi: prob.chi(),
        rho: prob.env.correlation(),
        gain_mixed_over_pure: gaussian_gain_mixed_over_pure(&prob),
        gain_sensing_over_no_sensing: gaussian_gain_sensing_over_no_sensing(&prob),
    };
    let primary = render_gaussian(format, &report, &[
        ("chi", report.chi),
        ("rho", report.rho),
        ("gain_mixed_over_pure", report.gain_mixed_over_pure),
        ("gain_sensing_over_no_sensing", report.gain_sensing_over_no_sensing),
    ])?;
    Ok(Outcome::new("gaussian_gain", format, primary))
}
