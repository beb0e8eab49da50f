//! Monte Carlo estimates of hitting and return tails.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::automaton::PatternAutomaton;
use crate::engine::{TailCurve, TailKind};
use crate::error::{Error, Result};
use crate::limits;
use crate::model::{Pattern, ProcessModel};
use crate::report::ser_ext_vec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalTail {
    pub kind: TailKind,
    pub n_samples: usize,
    pub seed: u64,
    pub t_grid: Vec<usize>,
    #[serde(serialize_with = "ser_ext_vec")]
    pub values: Vec<f64>,
    /// Half-width `3 sqrt(v (1 - v) / N)` at each grid point.
    #[serde(serialize_with = "ser_ext_vec")]
    pub band: Vec<f64>,
    /// Trajectories still without an occurrence at the largest grid point.
    pub censored: usize,
}

impl EmpiricalTail {
    pub fn lower(&self, i: usize) -> f64 {
        (self.values[i] - self.band[i]).max(0.0)
    }

    pub fn upper(&self, i: usize) -> f64 {
        (self.values[i] + self.band[i]).min(1.0)
    }

    /// Whether `v` lies inside the band at grid index `i`.
    pub fn covers(&self, i: usize, v: f64) -> bool {
        self.lower(i) - 1e-12 <= v && v <= self.upper(i) + 1e-12
    }
}

/// First occurrence time of one trajectory, censored at `cap` (returns `cap + 1`).
fn first_time(model: &ProcessModel, aut: &PatternAutomaton, kind: TailKind, post: &[f64], cap: usize, rng: &mut ChaCha8Rng) -> usize {
    let chain = model.chain();
    let n = aut.len();
    let (mut mem, mut state, offset) = match kind {
        TailKind::Hitting => (chain.sample_memory(chain.init(), rng), 0, n),
        TailKind::Return => (chain.sample_memory(post, rng), n, 0),
    };
    let mut count = 0;
    loop {
        let a = chain.sample_symbol(mem, rng);
        mem = chain.next(mem, a);
        state = aut.step(state, a);
        count += 1;
        if state == n && count > offset {
            return count - offset;
        }
        if count >= cap + offset {
            return cap + 1;
        }
    }
}

pub const MIN_SAMPLES: usize = 1000;

/// Estimates `P(T > t)` on `t_grid` from `n_samples` independent trajectories.
/// Trajectory `i` uses a ChaCha8 stream seeded with `seed` on stream `i`.
pub fn estimate_tail(
    model: &ProcessModel,
    pattern: &Pattern,
    kind: TailKind,
    n_samples: usize,
    t_grid: &[usize],
    seed: u64,
) -> Result<EmpiricalTail> {
    if t_grid.is_empty() {
        return Err(Error::Precondition("empty t grid".into()));
    }
    if n_samples < MIN_SAMPLES {
        return Err(Error::Precondition(format!("need at least {MIN_SAMPLES} samples, got {n_samples}")));
    }
    let mut grid = t_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if model.cylinder_measure(pattern.symbols()) <= 0.0 {
        return Err(Error::ZeroMeasure {
            pattern: pattern.to_string(),
        });
    }
    let cap = *grid.last().expect("non-empty grid");
    limits::guard(
        "monte carlo symbols (samples x horizon)",
        n_samples as u128 * (cap + pattern.len()) as u128,
    )?;
    let aut = PatternAutomaton::new(pattern, model.alphabet());
    let post = model.post_word_memory(pattern.symbols())?;
    let times: Vec<usize> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            first_time(model, &aut, kind, &post, cap, &mut rng)
        })
        .collect();
    let mut sorted = times;
    sorted.sort_unstable();
    let nf = n_samples as f64;
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| (n_samples - sorted.partition_point(|&x| x <= t)) as f64 / nf)
        .collect();
    let band = values.iter().map(|&v| 3.0 * (v * (1.0 - v) / nf).sqrt()).collect();
    let censored = sorted.iter().filter(|&&x| x > cap).count();
    Ok(EmpiricalTail {
        kind,
        n_samples,
        seed,
        t_grid: grid,
        values,
        band,
        censored,
    })
}

/// Sup distance between an empirical tail and an exact curve on the empirical grid.
pub fn ks_distance(empirical: &EmpiricalTail, exact: &TailCurve) -> Result<f64> {
    if empirical.kind != exact.kind {
        return Err(Error::GridMismatch("tail kinds differ".into()));
    }
    if let Some(&t) = empirical.t_grid.iter().find(|&&t| t > exact.t_max()) {
        return Err(Error::GridMismatch(format!(
            "grid point {t} beyond exact horizon {}",
            exact.t_max()
        )));
    }
    Ok(empirical
        .t_grid
        .iter()
        .zip(&empirical.values)
        .map(|(&t, &v)| (v - exact.at(t as i64)).abs())
        .fold(0.0, f64::max))
}

/// Sup distance on the empirical grid to `prefactor * exp(-rate (t - shift))`.
pub fn ks_distance_exponential(empirical: &EmpiricalTail, rate: f64, prefactor: f64, shift: f64) -> f64 {
    empirical
        .t_grid
        .iter()
        .zip(&empirical.values)
        .map(|(&t, &v)| (v - prefactor * (-rate * (t as f64 - shift)).exp()).abs())
        .fold(0.0, f64::max)
}
