//! Forward simulation of the branching process along a quenched environment path.

use std::io::Write;

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::{Distribution, Hypergeometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::env::{EnvironmentModel, EnvironmentPath};
use crate::error::{domain, invalid, Error, Result};
use crate::model::{sample_index, sample_multinomial, FiniteLandscape, OffspringFamily, Strategy, TraitRule};
use crate::rng::{replicate_seed, stream_rng, Rng};

/// Default population cap.
pub const DEFAULT_CAP: u64 = 10_000_000;

/// Trait counts of one generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationState {
    pub generation: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl PopulationState {
    pub fn new(generation: usize, counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { generation, counts, total }
    }

    pub fn is_extinct(&self) -> bool {
        self.total == 0
    }
}

/// Traits and parent indices of every individual in one generation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GenerationRecord {
    pub traits: Vec<usize>,
    /// Index into the previous generation; empty for the roots.
    pub parents: Vec<u32>,
}

/// Trait path from a root to a sampled individual.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageRecord {
    pub traits: Vec<usize>,
}

/// Settings shared by every replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub family: OffspringFamily,
    pub generations: usize,
    pub roots: u64,
    pub cap: u64,
    pub record_genealogy: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            family: OffspringFamily::Poisson,
            generations: 10,
            roots: 1,
            cap: DEFAULT_CAP,
            record_genealogy: false,
        }
    }
}

impl SimulationOptions {
    fn validate(&self) -> Result<()> {
        if self.generations == 0 {
            return Err(invalid("number of generations must be at least 1"));
        }
        if self.roots == 0 {
            return Err(invalid("need at least one root"));
        }
        if self.cap < self.roots {
            return Err(invalid("population cap is below the number of roots"));
        }
        if self.record_genealogy && self.cap > u32::MAX as u64 {
            return Err(invalid("genealogy recording needs a cap below 2^32"));
        }
        Ok(())
    }
}

/// One simulated trajectory `Z_0, ..., Z_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub trajectory: Vec<PopulationState>,
    pub extinct_at: Option<usize>,
    pub capped: bool,
    pub seed: u64,
    pub env_path: EnvironmentPath,
    #[serde(skip)]
    pub genealogy: Option<Vec<GenerationRecord>>,
}

impl SimulationRun {
    pub fn last(&self) -> &PopulationState {
        self.trajectory.last().expect("trajectory holds generation 0")
    }

    pub fn survived(&self) -> bool {
        self.extinct_at.is_none()
    }

    /// Writes `generation,trait,count` rows.
    pub fn write_csv<W: Write>(&self, labels: &[String], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["generation", "trait", "count"])?;
        for s in &self.trajectory {
            for (t, c) in s.counts.iter().enumerate() {
                let label = labels.get(t).cloned().unwrap_or_else(|| t.to_string());
                w.write_record([s.generation.to_string(), label, c.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Writes one lineage per row with one column per generation.
pub fn write_lineages_csv<W: Write>(lineages: &[LineageRecord], labels: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = lineages.first().map_or(0, |l| l.traits.len());
    let header: Vec<String> = std::iter::once("sample".to_string())
        .chain((0..n).map(|k| format!("t{k}")))
        .collect();
    w.write_record(&header)?;
    for (i, l) in lineages.iter().enumerate() {
        let row: Vec<String> = std::iter::once(i.to_string())
            .chain(l.traits.iter().map(|&t| labels.get(t).cloned().unwrap_or_else(|| t.to_string())))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn check_inputs(strategy: &Strategy, landscape: &FiniteLandscape, path: &[usize]) -> Result<()> {
    if strategy.num_traits() != landscape.num_traits() {
        return Err(domain("strategy and landscape disagree on the number of traits"));
    }
    if let Some(&e) = path.iter().find(|&&e| e >= landscape.num_envs()) {
        return Err(domain(format!("environment state {e} is outside the landscape")));
    }
    Ok(())
}

/// Uniform subsample of `cap` individuals from aggregated counts.
fn subsample_counts(counts: &[u64], cap: u64, rng: &mut Rng) -> Vec<u64> {
    let mut left_pop: u64 = counts.iter().sum();
    let mut left_draw = cap;
    let mut out = vec![0; counts.len()];
    for (i, &c) in counts.iter().enumerate() {
        if left_draw == 0 {
            break;
        }
        let k = if c == left_pop {
            left_draw
        } else if c == 0 {
            0
        } else {
            Hypergeometric::new(left_pop, c, left_draw)
                .expect("valid hypergeometric")
                .sample(rng)
        };
        out[i] = k;
        left_pop -= c;
        left_draw -= k;
    }
    out
}

/// One generation of offspring in environment `e_now`; returns the new state and a cap flag.
pub fn step(
    state: &PopulationState,
    strategy: &Strategy,
    family: OffspringFamily,
    landscape: &FiniteLandscape,
    e_now: usize,
    cap: u64,
    rng: &mut Rng,
) -> (PopulationState, bool) {
    let q = landscape.num_traits();
    let mut next = vec![0u64; q];
    for (t, &z) in state.counts.iter().enumerate() {
        if z == 0 {
            continue;
        }
        let born = family.sample_total(landscape.mean(t, e_now), z, rng);
        if born == 0 {
            continue;
        }
        for (c, k) in next.iter_mut().zip(sample_multinomial(born, strategy.child_law(t, e_now), rng)) {
            *c += k;
        }
    }
    let total: u64 = next.iter().sum();
    let capped = total > cap;
    if capped {
        next = subsample_counts(&next, cap, rng);
    }
    (PopulationState::new(state.generation + 1, next), capped)
}

/// Individual-level step that also records each child's parent.
fn step_recorded(
    prev: &GenerationRecord,
    strategy: &Strategy,
    family: OffspringFamily,
    landscape: &FiniteLandscape,
    e_now: usize,
    cap: u64,
    rng: &mut Rng,
) -> (GenerationRecord, bool) {
    let mut rec = GenerationRecord::default();
    for (i, &t) in prev.traits.iter().enumerate() {
        let k = family.sample(landscape.mean(t, e_now), rng);
        let law = strategy.child_law(t, e_now);
        for _ in 0..k {
            rec.traits.push(sample_index(law, rng));
            rec.parents.push(i as u32);
        }
    }
    let capped = rec.traits.len() as u64 > cap;
    if capped {
        let mut keep = sample_indices(rng, rec.traits.len(), cap as usize).into_vec();
        keep.sort_unstable();
        rec = GenerationRecord {
            traits: keep.iter().map(|&i| rec.traits[i]).collect(),
            parents: keep.iter().map(|&i| rec.parents[i]).collect(),
        };
    }
    (rec, capped)
}

fn counts_of(traits: &[usize], q: usize) -> Vec<u64> {
    let mut c = vec![0; q];
    for &t in traits {
        c[t] += 1;
    }
    c
}

/// Simulates `opts.generations` generations along a given environment path.
///
/// Generation `k + 1` is produced in environment `path[k]`, so the path needs
/// one state per generation.
pub fn run_on_path(
    strategy: &Strategy,
    landscape: &FiniteLandscape,
    path: &EnvironmentPath,
    opts: &SimulationOptions,
    rng: &mut Rng,
) -> Result<SimulationRun> {
    opts.validate()?;
    let omega = path.as_discrete()?;
    if omega.len() < opts.generations {
        return Err(domain(format!(
            "environment path has {} states for {} generations",
            omega.len(),
            opts.generations
        )));
    }
    check_inputs(strategy, landscape, omega)?;
    let q = landscape.num_traits();

    let mut capped = false;
    let mut extinct_at = None;
    let mut trajectory = Vec::with_capacity(opts.generations + 1);
    let mut genealogy = None;

    if opts.record_genealogy {
        let roots = GenerationRecord {
            traits: (0..opts.roots).map(|_| sample_index(&strategy.initial, rng)).collect(),
            parents: Vec::new(),
        };
        trajectory.push(PopulationState::new(0, counts_of(&roots.traits, q)));
        let mut gens = vec![roots];
        for (k, &e) in omega.iter().take(opts.generations).enumerate() {
            let (rec, c) = step_recorded(&gens[k], strategy, opts.family, landscape, e, opts.cap, rng);
            capped |= c;
            trajectory.push(PopulationState::new(k + 1, counts_of(&rec.traits, q)));
            if rec.traits.is_empty() && extinct_at.is_none() {
                extinct_at = Some(k + 1);
            }
            gens.push(rec);
        }
        genealogy = Some(gens);
    } else {
        let mut state = PopulationState::new(0, sample_multinomial(opts.roots, &strategy.initial, rng));
        trajectory.push(state.clone());
        for &e in omega.iter().take(opts.generations) {
            if state.is_extinct() {
                state = PopulationState::new(state.generation + 1, vec![0; q]);
            } else {
                let (next, c) = step(&state, strategy, opts.family, landscape, e, opts.cap, rng);
                capped |= c;
                state = next;
                if state.is_extinct() {
                    extinct_at = Some(state.generation);
                }
            }
            trajectory.push(state.clone());
        }
    }

    Ok(SimulationRun {
        trajectory,
        extinct_at,
        capped,
        seed: path.seed,
        env_path: path.clone(),
        genealogy,
    })
}

/// Samples an environment path and simulates along it; deterministic in `seed`.
pub fn run(
    strategy: &Strategy,
    landscape: &FiniteLandscape,
    env: &EnvironmentModel,
    opts: &SimulationOptions,
    seed: u64,
) -> Result<SimulationRun> {
    let path = env.sample_path(opts.generations, seed)?;
    let mut rng = stream_rng(seed, 0);
    run_on_path(strategy, landscape, &path, opts, &mut rng)
}

/// Independent replicates, each on its own environment path.
pub fn run_replicates(
    strategy: &Strategy,
    landscape: &FiniteLandscape,
    env: &EnvironmentModel,
    opts: &SimulationOptions,
    replicates: usize,
    seed: u64,
) -> Result<Vec<SimulationRun>> {
    (0..replicates)
        .into_par_iter()
        .map(|r| run(strategy, landscape, env, opts, replicate_seed(seed, r as u64)))
        .collect()
}

/// Independent replicates sharing one fixed environment path.
pub fn run_replicates_on_path(
    strategy: &Strategy,
    landscape: &FiniteLandscape,
    path: &EnvironmentPath,
    opts: &SimulationOptions,
    replicates: usize,
    seed: u64,
) -> Result<Vec<SimulationRun>> {
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            run_on_path(strategy, landscape, path, opts, &mut rng)
        })
        .collect()
}

/// Quenched mean `E_omega |Z_n|` from `roots` roots: the product of mixed means along the path.
pub fn quenched_mean(strategy: &Strategy, landscape: &FiniteLandscape, path: &[usize], roots: u64, n: usize) -> Result<f64> {
    check_inputs(strategy, landscape, path)?;
    if path.len() < n {
        return Err(domain("environment path shorter than the horizon"));
    }
    // expected trait counts propagate linearly: z'_s = sum_t z_t m_{t,e} pi_{t,e}(s)
    let q = landscape.num_traits();
    let mut z: Vec<f64> = strategy.initial.iter().map(|&w| w * roots as f64).collect();
    for &e in path.iter().take(n) {
        let mut next = vec![0.0; q];
        for t in 0..q {
            let born = z[t] * landscape.mean(t, e);
            if born == 0.0 {
                continue;
            }
            for (s, &w) in strategy.child_law(t, e).iter().enumerate() {
                next[s] += born * w;
            }
        }
        z = next;
    }
    Ok(z.iter().sum())
}

/// Uniformly picks a generation-`n` individual and returns its ancestral trait path.
pub fn sample_lineage(run: &SimulationRun, rng: &mut Rng) -> Result<LineageRecord> {
    let gens = run
        .genealogy
        .as_ref()
        .ok_or_else(|| domain("run was simulated without genealogy recording"))?;
    let last = gens.last().expect("roots are always recorded");
    if last.traits.is_empty() {
        return Err(domain("final generation is empty"));
    }
    let mut i = rng.random_range(0..last.traits.len());
    let mut traits = vec![0; gens.len()];
    for (k, g) in gens.iter().enumerate().rev() {
        traits[k] = g.traits[i];
        if k > 0 {
            i = g.parents[i] as usize;
        }
    }
    Ok(LineageRecord { traits })
}

/// Lineage marginals of a uniformly chosen generation-`n` individual, computed
/// exactly from the recorded genealogy by counting descendants.
pub fn lineage_marginals(run: &SimulationRun, num_traits: usize) -> Result<Vec<Vec<f64>>> {
    let gens = run
        .genealogy
        .as_ref()
        .ok_or_else(|| domain("run was simulated without genealogy recording"))?;
    let last = gens.last().expect("roots are always recorded");
    if last.traits.is_empty() {
        return Err(domain("final generation is empty"));
    }
    let total = last.traits.len() as f64;
    let mut out = vec![vec![0.0; num_traits]; gens.len()];
    let mut desc = vec![1u64; last.traits.len()];
    for (k, g) in gens.iter().enumerate().rev() {
        for (i, &t) in g.traits.iter().enumerate() {
            out[k][t] += desc[i] as f64 / total;
        }
        if k > 0 {
            let mut up = vec![0u64; gens[k - 1].traits.len()];
            for (i, &p) in g.parents.iter().enumerate() {
                up[p as usize] += desc[i];
            }
            desc = up;
        }
    }
    Ok(out)
}

/// Outcome of the composition-given-size test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub replicates_used: usize,
    pub inconclusive: bool,
    pub passed: bool,
}

/// Fewest nonempty replicates for a conclusive composition test.
pub const MIN_COMPOSITION_REPLICATES: usize = 20;

/// Tests that, given `|Z_n|`, generation-`n` trait counts are multinomial.
///
/// The weights are `p` without sensing and `p_{omega_{n-1}}` with sensing.
/// Pearson statistics are summed across replicates and referred to a scaled
/// chi-square law matched to their exact mean and variance, which stays
/// valid when individual populations are small.
pub fn composition_given_size(runs: &[SimulationRun], strategy: &Strategy, n: usize, level: f64) -> Result<CompositionReport> {
    if n == 0 {
        return Err(domain("composition test needs n >= 1"));
    }
    let mut stat = 0.0;
    let mut mean = 0.0;
    let mut var = 0.0;
    let mut used = 0;
    let mut impossible = false;
    for run in runs {
        let state = run
            .trajectory
            .get(n)
            .ok_or_else(|| domain(format!("run has no generation {n}")))?;
        if state.total == 0 {
            continue;
        }
        let w: &[f64] = match &strategy.rule {
            TraitRule::NoSensing(p) => p,
            TraitRule::Sensing(pbar) => &pbar[run.env_path.as_discrete()?[n - 1]],
            TraitRule::Hereditary(_) => {
                return Err(domain("composition given size needs a non-hereditary strategy"));
            }
        };
        let total = state.total as f64;
        let support: Vec<usize> = (0..w.len()).filter(|&t| w[t] > 0.0).collect();
        if state.counts.iter().zip(w).any(|(&c, &x)| c > 0 && x <= 0.0) {
            impossible = true;
        }
        used += 1;
        let k = support.len() as f64;
        if support.len() < 2 {
            continue;
        }
        for &t in &support {
            let expect = total * w[t];
            stat += (state.counts[t] as f64 - expect).powi(2) / expect;
        }
        let inv: f64 = support.iter().map(|&t| 1.0 / w[t]).sum();
        mean += k - 1.0;
        var += 2.0 * (k - 1.0) + (inv - k * k - 2.0 * k + 2.0) / total;
    }
    if used < MIN_COMPOSITION_REPLICATES {
        return Ok(CompositionReport {
            statistic: stat,
            degrees_of_freedom: mean,
            p_value: f64::NAN,
            replicates_used: used,
            inconclusive: true,
            passed: false,
        });
    }
    let p_value = if impossible {
        0.0
    } else if mean == 0.0 {
        1.0
    } else {
        let scale = var / (2.0 * mean);
        let dof = 2.0 * mean * mean / var;
        let chi = ChiSquared::new(dof).map_err(|e| Error::Domain(e.to_string()))?;
        1.0 - chi.cdf(stat / scale)
    };
    Ok(CompositionReport {
        statistic: stat,
        degrees_of_freedom: mean,
        p_value,
        replicates_used: used,
        inconclusive: false,
        passed: p_value >= level,
    })
}
