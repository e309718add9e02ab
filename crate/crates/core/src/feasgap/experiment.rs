//! Randomized loading experiment comparing DC and AC OPF total generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acopf::{solve_acopf, AcOpfOptions};
use crate::dcopf::solve_dcopf;
use crate::netmodel::NetworkCase;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapExperimentRow {
    pub run_id: usize,
    /// Mean of the per-bus load factors.
    pub load_factor_mean: f64,
    pub total_load: f64,
    /// Absent when the DC OPF failed.
    pub dc_total_gen: Option<f64>,
    /// Absent when the AC OPF did not converge.
    pub ac_total_gen: Option<f64>,
    /// `ac_total_gen − dc_total_gen` when both exist.
    pub gap: Option<f64>,
    pub ac_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_runs: usize,
    pub factor_lo: f64,
    pub factor_hi: f64,
    pub seed: u64,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    pub ac_options: AcOpfOptions,
}

impl ExperimentConfig {
    pub fn new(n_runs: usize, factor_range: (f64, f64), seed: u64) -> Self {
        ExperimentConfig {
            n_runs,
            factor_lo: factor_range.0,
            factor_hi: factor_range.1,
            seed,
            jobs: None,
            ac_options: AcOpfOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::InvalidArgument("number of runs must be at least 1".into()));
        }
        if !(self.factor_lo >= 0.0 && self.factor_hi >= self.factor_lo && self.factor_hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "load factor range [{}, {}] must satisfy 0 <= lo <= hi",
                self.factor_lo, self.factor_hi
            )));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidArgument("jobs must be at least 1".into()));
        }
        self.ac_options.validate()
    }
}

/// Per-bus factors for one run, uniform on `[lo, hi]`. The stream depends
/// only on `(seed, run_id)`.
pub fn load_factors(seed: u64, run_id: usize, n_buses: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_id as u64);
    (0..n_buses).map(|_| rng.random_range(lo..=hi)).collect()
}

fn run_one(case: &NetworkCase, cfg: &ExperimentConfig, run_id: usize) -> Result<GapExperimentRow> {
    let factors = load_factors(cfg.seed, run_id, case.n_buses(), cfg.factor_lo, cfg.factor_hi);
    let scaled = case.scale_loads(&factors)?;
    let dc_total_gen = solve_dcopf(&scaled).ok().map(|(dc, _)| dc.total_gen);
    let ac = solve_acopf(&scaled, &cfg.ac_options).ok().filter(|r| r.converged);
    let ac_total_gen = ac.map(|r| r.solution.total_gen);
    Ok(GapExperimentRow {
        run_id,
        load_factor_mean: factors.iter().sum::<f64>() / factors.len().max(1) as f64,
        total_load: scaled.total_p_load(),
        gap: dc_total_gen.zip(ac_total_gen).map(|(d, a)| a - d),
        dc_total_gen,
        ac_total_gen,
        ac_converged: ac_total_gen.is_some(),
    })
}

/// Runs `n_runs` random loadings with all cores.
pub fn generation_gap_experiment(
    case: &NetworkCase,
    n_runs: usize,
    factor_range: (f64, f64),
    seed: u64,
) -> Result<Vec<GapExperimentRow>> {
    generation_gap_experiment_with(case, &ExperimentConfig::new(n_runs, factor_range, seed))
}

/// Rows come back ordered by `run_id` whatever the thread count.
pub fn generation_gap_experiment_with(case: &NetworkCase, cfg: &ExperimentConfig) -> Result<Vec<GapExperimentRow>> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker threads: {e}")))?;
    pool.install(|| {
        (0..cfg.n_runs)
            .into_par_iter()
            .map(|id| run_one(case, cfg, id))
            .collect()
    })
}

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation. `None` for fewer than two points, mismatched
/// lengths or a constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}
