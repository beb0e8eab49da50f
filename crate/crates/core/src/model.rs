//! Stationary symbolic sources over a finite alphabet.
//!
//! Every supported source is realised as a [`SourceChain`]: a finite memory
//! state that is updated deterministically by the emitted symbol, together
//! with the stationary law of that memory state. Cylinder measures are then a
//! forward pass over the memory distribution.
//!
//! | model   | memory state                         |
//! |---------|--------------------------------------|
//! | i.i.d.  | none (a single state)                |
//! | Markov  | the previous symbol                  |
//! | renewal | time since the last `1` (age, 1..=K) |
//!
//! In the renewal source a `1` marks an arrival and gaps between arrivals are
//! drawn from the interarrival law `q_1..q_K`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUM_TOL: f64 = 1e-12;
pub const STATIONARY_TOL: f64 = 1e-10;

/// A finite word over the alphabet `0..alphabet`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern {
    symbols: Vec<usize>,
}

impl Pattern {
    pub fn new(symbols: Vec<usize>, alphabet: usize) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidPattern("pattern must have length >= 1".into()));
        }
        if let Some(&bad) = symbols.iter().find(|&&s| s >= alphabet) {
            return Err(Error::InvalidPattern(format!(
                "symbol {bad} outside alphabet of size {alphabet}"
            )));
        }
        Ok(Self { symbols })
    }

    /// Parses `"0110"` (one digit per symbol) or `"0,1,10"` (comma separated).
    pub fn parse(text: &str, alphabet: usize) -> Result<Self> {
        let text = text.trim();
        let symbols = if text.contains(',') {
            text.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::InvalidPattern(format!("{s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            text.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as usize)
                        .ok_or_else(|| Error::InvalidPattern(format!("not a digit: {c:?}")))
                })
                .collect::<Result<Vec<_>>>()?
        };
        Self::new(symbols, alphabet)
    }

    /// The constant word `b^n`.
    pub fn constant(symbol: usize, n: usize, alphabet: usize) -> Result<Self> {
        Self::new(vec![symbol; n], alphabet)
    }

    /// All words of length `n`, in lexicographic order.
    pub fn enumerate(n: usize, alphabet: usize) -> impl Iterator<Item = Pattern> {
        let total = alphabet.checked_pow(n as u32).unwrap_or(usize::MAX);
        (0..total).map(move |mut code| {
            let mut symbols = vec![0; n];
            for slot in symbols.iter_mut().rev() {
                *slot = code % alphabet;
                code /= alphabet;
            }
            Pattern { symbols }
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    /// The suffix of size `k` (the whole word when `k >= n`).
    pub fn suffix(&self, k: usize) -> &[usize] {
        let n = self.symbols.len();
        &self.symbols[n - k.min(n)..]
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.symbols.iter().all(|&s| s < 10) {
            for s in &self.symbols {
                write!(f, "{s}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.symbols.iter().map(|s| s.to_string()).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

/// On-disk model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Iid { probs: Vec<f64> },
    Markov { transition: Vec<Vec<f64>> },
    Renewal { interarrival: Vec<f64> },
}

/// Finite-memory realisation of a stationary source.
#[derive(Debug, Clone)]
pub struct SourceChain {
    alphabet: usize,
    memory: usize,
    init: Vec<f64>,
    emit: Vec<f64>,
    next: Vec<usize>,
}

impl SourceChain {
    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn memory_states(&self) -> usize {
        self.memory
    }

    /// Stationary law of the memory state just before position 0.
    pub fn init(&self) -> &[f64] {
        &self.init
    }

    #[inline]
    pub fn prob(&self, mem: usize, symbol: usize) -> f64 {
        self.emit[mem * self.alphabet + symbol]
    }

    #[inline]
    pub fn next(&self, mem: usize, symbol: usize) -> usize {
        self.next[mem * self.alphabet + symbol]
    }

    /// Pushes an (unnormalised) memory distribution through one emission of `symbol`.
    pub fn push_symbol(&self, dist: &[f64], symbol: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.memory];
        for (m, &w) in dist.iter().enumerate() {
            if w > 0.0 {
                let p = self.prob(m, symbol);
                if p > 0.0 {
                    out[self.next(m, symbol)] += w * p;
                }
            }
        }
        out
    }

    /// Pushes a memory distribution through one emission of any symbol.
    pub fn push_any(&self, dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.memory];
        for (m, &w) in dist.iter().enumerate() {
            if w > 0.0 {
                for a in 0..self.alphabet {
                    let p = self.prob(m, a);
                    if p > 0.0 {
                        out[self.next(m, a)] += w * p;
                    }
                }
            }
        }
        out
    }

    pub fn push_word(&self, dist: &[f64], word: &[usize]) -> Vec<f64> {
        word.iter()
            .fold(dist.to_vec(), |d, &a| self.push_symbol(&d, a))
    }

    /// Measure of `word` starting from the memory distribution `dist`.
    pub fn word_measure_from(&self, dist: &[f64], word: &[usize]) -> f64 {
        self.push_word(dist, word).iter().sum()
    }

    // Support-level (boolean) versions, used to decide positivity combinatorially.

    pub fn support(dist: &[f64]) -> Vec<bool> {
        dist.iter().map(|&w| w > 0.0).collect()
    }

    pub fn init_support(&self) -> Vec<bool> {
        Self::support(&self.init)
    }

    pub fn support_symbol(&self, set: &[bool], symbol: usize) -> Vec<bool> {
        let mut out = vec![false; self.memory];
        for m in (0..self.memory).filter(|&m| set[m]) {
            if self.prob(m, symbol) > 0.0 {
                out[self.next(m, symbol)] = true;
            }
        }
        out
    }

    pub fn support_any(&self, set: &[bool]) -> Vec<bool> {
        let mut out = vec![false; self.memory];
        for m in (0..self.memory).filter(|&m| set[m]) {
            for a in 0..self.alphabet {
                if self.prob(m, a) > 0.0 {
                    out[self.next(m, a)] = true;
                }
            }
        }
        out
    }

    pub fn support_word(&self, set: &[bool], word: &[usize]) -> Vec<bool> {
        word.iter()
            .fold(set.to_vec(), |s, &a| self.support_symbol(&s, a))
    }

    pub fn sample_symbol<R: Rng + ?Sized>(&self, mem: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let row = &self.emit[mem * self.alphabet..(mem + 1) * self.alphabet];
        sample_index(row, u)
    }

    pub fn sample_memory<R: Rng + ?Sized>(&self, dist: &[f64], rng: &mut R) -> usize {
        let total: f64 = dist.iter().sum();
        let u: f64 = rng.gen::<f64>() * total;
        sample_index(dist, u)
    }
}

fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq)]
pub struct IidModel {
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    pub transition: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenewalModel {
    /// `interarrival[k-1]` is the probability of a gap of length `k`.
    pub interarrival: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Iid(IidModel),
    Markov(MarkovModel),
    Renewal(RenewalModel),
}

/// A validated stationary source. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ProcessModel {
    kind: ModelKind,
    chain: SourceChain,
}

impl ProcessModel {
    pub fn iid(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs, "probs")?;
        if probs.iter().all(|&p| p < 1.0) {
            let k = probs.len();
            let chain = SourceChain {
                alphabet: k,
                memory: 1,
                init: vec![1.0],
                emit: probs.clone(),
                next: vec![0; k],
            };
            Ok(Self {
                kind: ModelKind::Iid(IidModel { probs }),
                chain,
            })
        } else {
            Err(Error::InvalidModel(
                "i.i.d. model needs every symbol probability < 1".into(),
            ))
        }
    }

    pub fn markov(transition: Vec<Vec<f64>>) -> Result<Self> {
        let k = transition.len();
        if k < 2 {
            return Err(Error::InvalidModel("markov model needs at least 2 states".into()));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidModel(format!(
                    "transition row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            check_distribution(row, &format!("transition[{i}]"))?;
        }
        if !is_primitive(&transition) {
            return Err(Error::InvalidModel(
                "transition matrix must be irreducible and aperiodic".into(),
            ));
        }
        let stationary = stationary_distribution(&transition)?;
        let chain = SourceChain {
            alphabet: k,
            memory: k,
            init: stationary.clone(),
            emit: transition.iter().flatten().copied().collect(),
            next: (0..k).flat_map(|_| 0..k).collect(),
        };
        Ok(Self {
            kind: ModelKind::Markov(MarkovModel {
                transition,
                stationary,
            }),
            chain,
        })
    }

    pub fn renewal(interarrival: Vec<f64>) -> Result<Self> {
        check_distribution(&interarrival, "interarrival")?;
        let support = interarrival
            .iter()
            .rposition(|&q| q > 0.0)
            .map(|i| i + 1)
            .ok_or_else(|| Error::InvalidModel("interarrival law is empty".into()))?;
        let mut q = interarrival;
        q.truncate(support);
        let mean: f64 = q.iter().enumerate().map(|(i, &p)| (i + 1) as f64 * p).sum();

        // survival[j] = P(gap > j), j = 0..K
        let mut survival = vec![0.0; support + 1];
        for j in (0..support).rev() {
            survival[j] = survival[j + 1] + q[j];
        }
        // Memory index a = age - 1, age = steps since the last arrival.
        let mut emit = vec![0.0; support * 2];
        let mut next = vec![0; support * 2];
        for a in 0..support {
            let hazard = if a + 1 == support {
                1.0
            } else {
                (q[a] / survival[a]).min(1.0)
            };
            emit[a * 2] = 1.0 - hazard;
            emit[a * 2 + 1] = hazard;
            next[a * 2] = (a + 1).min(support - 1);
            next[a * 2 + 1] = 0;
        }
        let init: Vec<f64> = (0..support).map(|a| survival[a] / mean).collect();
        let chain = SourceChain {
            alphabet: 2,
            memory: support,
            init,
            emit,
            next,
        };
        Ok(Self {
            kind: ModelKind::Renewal(RenewalModel {
                interarrival: q,
                mean,
            }),
            chain,
        })
    }

    /// Renewal source with `q_k ∝ k^{-exponent}` for `k = 1..=support`.
    pub fn renewal_power_law(exponent: f64, support: usize) -> Result<Self> {
        let raw: Vec<f64> = (1..=support).map(|k| (k as f64).powf(-exponent)).collect();
        let z: f64 = raw.iter().sum();
        Self::renewal(raw.into_iter().map(|w| w / z).collect())
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        match spec {
            ModelSpec::Iid { probs } => Self::iid(probs.clone()),
            ModelSpec::Markov { transition } => Self::markov(transition.clone()),
            ModelSpec::Renewal { interarrival } => Self::renewal(interarrival.clone()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_spec(&spec)
    }

    pub fn spec(&self) -> ModelSpec {
        match &self.kind {
            ModelKind::Iid(m) => ModelSpec::Iid {
                probs: m.probs.clone(),
            },
            ModelKind::Markov(m) => ModelSpec::Markov {
                transition: m.transition.clone(),
            },
            ModelKind::Renewal(m) => ModelSpec::Renewal {
                interarrival: m.interarrival.clone(),
            },
        }
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::Iid(_) => "iid",
            ModelKind::Markov(_) => "markov",
            ModelKind::Renewal(_) => "renewal",
        }
    }

    pub fn chain(&self) -> &SourceChain {
        &self.chain
    }

    pub fn alphabet(&self) -> usize {
        self.chain.alphabet
    }

    /// Stationary one-symbol marginal.
    pub fn marginal(&self) -> Vec<f64> {
        (0..self.alphabet())
            .map(|a| self.cylinder_measure(&[a]))
            .collect()
    }

    pub fn pattern(&self, text: &str) -> Result<Pattern> {
        Pattern::parse(text, self.alphabet())
    }

    /// `μ(x_0^{n-1} = word)` under the stationary law.
    pub fn cylinder_measure(&self, word: &[usize]) -> f64 {
        self.chain.word_measure_from(&self.chain.init, word)
    }

    /// `μ(first at 0, second at offset)` for any `offset >= 0`; overlapping
    /// placements must agree symbol by symbol, otherwise the measure is 0.
    pub fn joint_measure(&self, first: &[usize], second: &[usize], offset: usize) -> f64 {
        let n = first.len();
        if offset < n {
            match merge_at(first, second, offset) {
                Some(word) => self.cylinder_measure(&word),
                None => 0.0,
            }
        } else {
            let mut dist = self.chain.push_word(&self.chain.init, first);
            for _ in 0..offset - n {
                dist = self.chain.push_any(&dist);
            }
            self.chain.word_measure_from(&dist, second)
        }
    }

    /// `μ(prefix at 0, suffix at |prefix| + gap) / μ(prefix)`.
    pub fn conditional_cylinder_measure(
        &self,
        prefix: &[usize],
        suffix: &[usize],
        gap: usize,
    ) -> Result<f64> {
        let base = self.cylinder_measure(prefix);
        if base <= 0.0 {
            return Err(Error::ZeroMeasure {
                pattern: word_string(prefix),
            });
        }
        Ok(self.joint_measure(prefix, suffix, prefix.len() + gap) / base)
    }

    /// Memory distribution right after observing `word` at positions `0..n`,
    /// normalised to a probability vector.
    pub fn post_word_memory(&self, word: &[usize]) -> Result<Vec<f64>> {
        let dist = self.chain.push_word(&self.chain.init, word);
        let total: f64 = dist.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroMeasure {
                pattern: word_string(word),
            });
        }
        Ok(dist.into_iter().map(|w| w / total).collect())
    }

    /// Stationary sample path of the given length; deterministic in `seed`.
    pub fn sample_path(&self, length: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mem = self.chain.sample_memory(&self.chain.init, &mut rng);
        (0..length)
            .map(|_| {
                let a = self.chain.sample_symbol(mem, &mut rng);
                mem = self.chain.next(mem, a);
                a
            })
            .collect()
    }

    /// Exact `max_{|w| = n} μ(w)`. Uses a max-product pass when the last symbol
    /// fixes the memory state (i.i.d., Markov) and plain enumeration otherwise.
    pub fn max_cylinder_measure(&self, n: usize) -> f64 {
        let c = &self.chain;
        let symbol_fixes_memory =
            (0..c.alphabet).all(|a| (0..c.memory).all(|m| c.next(m, a) == c.next(0, a)));
        if !symbol_fixes_memory {
            return Pattern::enumerate(n, c.alphabet)
                .map(|w| self.cylinder_measure(w.symbols()))
                .fold(0.0, f64::max);
        }
        if n == 0 {
            return 1.0;
        }
        let mut best = vec![0.0_f64; c.memory];
        for a in 0..c.alphabet {
            let t = c.next(0, a);
            best[t] = best[t].max(self.cylinder_measure(&[a]));
        }
        for _ in 1..n {
            let mut nb = vec![0.0_f64; c.memory];
            for (m, &w) in best.iter().enumerate() {
                if w > 0.0 {
                    for a in 0..c.alphabet {
                        let t = c.next(m, a);
                        nb[t] = nb[t].max(w * c.prob(m, a));
                    }
                }
            }
            best = nb;
        }
        best.into_iter().fold(0.0, f64::max)
    }

    /// `max_{m, |w| = len} P(w | memory m)`; a uniform per-block contraction factor.
    pub fn max_conditional_word(&self, len: usize) -> f64 {
        let c = &self.chain;
        (0..c.memory)
            .filter(|&m| c.init[m] > 0.0)
            .map(|start| {
                let mut best = vec![0.0_f64; c.memory];
                best[start] = 1.0;
                for _ in 0..len {
                    let mut nb = vec![0.0_f64; c.memory];
                    for (m, &w) in best.iter().enumerate() {
                        if w > 0.0 {
                            for a in 0..c.alphabet {
                                let v = w * c.prob(m, a);
                                let t = c.next(m, a);
                                if v > nb[t] {
                                    nb[t] = v;
                                }
                            }
                        }
                    }
                    best = nb;
                }
                best.into_iter().fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn word_string(word: &[usize]) -> String {
    let parts: Vec<String> = word.iter().map(|s| s.to_string()).collect();
    if word.iter().all(|&s| s < 10) {
        parts.concat()
    } else {
        parts.join(",")
    }
}

/// The word obtained by writing `second` at `offset` over `first`, if consistent.
pub(crate) fn merge_at(first: &[usize], second: &[usize], offset: usize) -> Option<Vec<usize>> {
    let end = (offset + second.len()).max(first.len());
    let mut word = vec![usize::MAX; end];
    word[..first.len()].copy_from_slice(first);
    for (i, &s) in second.iter().enumerate() {
        let slot = &mut word[offset + i];
        if *slot != usize::MAX && *slot != s {
            return None;
        }
        *slot = s;
    }
    if word.contains(&usize::MAX) {
        // a gap between the two words: not a single cylinder
        return None;
    }
    Some(word)
}

fn check_distribution(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidModel(format!("{what} is empty")));
    }
    if let Some(bad) = v.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidModel(format!("{what} has invalid entry {bad}")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidModel(format!(
            "{what} sums to {s}, expected 1 within {SUM_TOL:e}"
        )));
    }
    Ok(())
}

/// Irreducible and aperiodic: some power of the support pattern is all-positive
/// (Wielandt: checking up to `(k-1)^2 + 1` suffices).
fn is_primitive(p: &[Vec<f64>]) -> bool {
    primitivity_index(p).is_some()
}

/// Smallest `g` with `P^g > 0` entrywise (then every higher power is positive too).
pub fn primitivity_index(p: &[Vec<f64>]) -> Option<usize> {
    let k = p.len();
    let base: Vec<Vec<bool>> = p
        .iter()
        .map(|row| row.iter().map(|&x| x > 0.0).collect())
        .collect();
    let mut power = base.clone();
    let limit = (k - 1) * (k - 1) + 1;
    for g in 1..=limit {
        if power.iter().all(|row| row.iter().all(|&b| b)) {
            return Some(g);
        }
        let mut nxt = vec![vec![false; k]; k];
        for i in 0..k {
            for m in 0..k {
                if power[i][m] {
                    for j in 0..k {
                        nxt[i][j] |= base[m][j];
                    }
                }
            }
        }
        power = nxt;
    }
    None
}

fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = p.len();
    // (P^T - I) π = 0 with the last equation replaced by Σπ = 1.
    let mut a = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            a[(i, j)] = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(k);
    b[k - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidModel("singular stationary system".into()))?;
    let mut pi: Vec<f64> = pi.iter().map(|&x| x.max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= s);
    for j in 0..k {
        let v: f64 = (0..k).map(|i| pi[i] * p[i][j]).sum();
        if (v - pi[j]).abs() > STATIONARY_TOL {
            return Err(Error::InvalidModel(format!(
                "stationary vector check failed at state {j}: {v} vs {}",
                pi[j]
            )));
        }
    }
    Ok(pi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(alpha: f64, beta: f64) -> ProcessModel {
        ProcessModel::markov(vec![vec![1.0 - alpha, alpha], vec![beta, 1.0 - beta]]).unwrap()
    }

    /// Stationary renewal sequence probabilities by brute force: enumerate the
    /// phase of the renewal process on a window and the gaps that cover it.
    fn renewal_window_oracle(q: &[f64], word: &[usize]) -> f64 {
        let m: f64 = q.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
        let k = q.len();
        let len = word.len();
        // The first arrival at or after position 0 is at position f with
        // probability P(forward recurrence = f), f = 0..k-1, which equals
        // P(gap > f) / m. Then the arrivals inside the window follow i.i.d. gaps.
        fn rec(q: &[f64], word: &[usize], pos: usize, acc: f64) -> f64 {
            // an arrival sits at `pos` (pos < len); place the next one
            let len = word.len();
            if word[pos] != 1 {
                return 0.0;
            }
            let mut total = 0.0;
            for (gi, &p) in q.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let nxt = pos + gi + 1;
                let zeros_ok = (pos + 1..nxt.min(len)).all(|i| word[i] == 0);
                if !zeros_ok {
                    continue;
                }
                if nxt >= len {
                    total += acc * p;
                } else {
                    total += rec(q, word, nxt, acc * p);
                }
            }
            total
        }
        let mut total = 0.0;
        for f in 0..k {
            let tail: f64 = q[f..].iter().sum();
            let pf = tail / m;
            if f >= len {
                if word.iter().all(|&s| s == 0) {
                    total += pf;
                }
                continue;
            }
            if (0..f).any(|i| word[i] != 0) {
                continue;
            }
            total += rec(q, word, f, pf);
        }
        total
    }

    #[test]
    fn iid_cylinders() {
        let m = ProcessModel::iid(vec![0.5, 0.5]).unwrap();
        assert!((m.cylinder_measure(&[1, 1]) - 0.25).abs() < 1e-15);
        let p = 0.3;
        let m = ProcessModel::iid(vec![p, 1.0 - p]).unwrap();
        for n in 1..12 {
            let b = vec![0; n];
            assert!((m.cylinder_measure(&b) - p.powi(n as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn markov_conditionals() {
        let m = two_state(0.25, 0.25);
        assert!((m.marginal()[0] - 0.5).abs() < 1e-12);
        let c = m.conditional_cylinder_measure(&[0], &[0], 0).unwrap();
        assert!((c - 0.75).abs() < 1e-12);
        let u = ProcessModel::iid(vec![0.5, 0.5]).unwrap();
        let c = u.conditional_cylinder_measure(&[1, 1], &[1, 1], 0).unwrap();
        assert!((c - 0.25).abs() < 1e-15);
        assert!(matches!(
            two_state(1.0, 0.5).conditional_cylinder_measure(&[0, 0], &[0], 0),
            Err(Error::ZeroMeasure { .. })
        ));
    }

    #[test]
    fn renewal_matches_window_oracle() {
        let q = vec![0.5, 0.5];
        let m = ProcessModel::renewal(q.clone()).unwrap();
        for n in 1..=6 {
            for w in Pattern::enumerate(n, 2) {
                let exact = m.cylinder_measure(w.symbols());
                let oracle = renewal_window_oracle(&q, w.symbols());
                assert!((exact - oracle).abs() < 1e-13, "{w}: {exact} vs {oracle}");
            }
        }
        // frozen: "00" needs the gap-2 phase, mean gap 1.5, so 0.5/1.5 * 1/2 ... = 1/6
        assert!((m.cylinder_measure(&[0, 0]) - renewal_window_oracle(&q, &[0, 0])).abs() < 1e-15);
        assert!((m.cylinder_measure(&[0, 0]) - 0.0).abs() < 1e-15);
        let c = m.conditional_cylinder_measure(&[0], &[1], 0).unwrap();
        let oracle = renewal_window_oracle(&q, &[0, 1]) / renewal_window_oracle(&q, &[0]);
        assert!((c - oracle).abs() < 1e-13);
        assert!((c - 1.0).abs() < 1e-13);

        let q3 = vec![0.2, 0.5, 0.3];
        let m3 = ProcessModel::renewal(q3.clone()).unwrap();
        for n in 1..=7 {
            for w in Pattern::enumerate(n, 2) {
                let exact = m3.cylinder_measure(w.symbols());
                let oracle = renewal_window_oracle(&q3, w.symbols());
                assert!((exact - oracle).abs() < 1e-13, "{w}: {exact} vs {oracle}");
            }
        }
        assert!((m3.cylinder_measure(&[0, 0]) - 0.3 / 2.1).abs() < 1e-13);
    }

    #[test]
    fn stationarity_by_shifted_computation() {
        let models = [
            two_state(0.25, 0.4),
            ProcessModel::markov(vec![
                vec![0.2, 0.5, 0.3],
                vec![0.6, 0.1, 0.3],
                vec![0.3, 0.3, 0.4],
            ])
            .unwrap(),
            ProcessModel::renewal(vec![0.2, 0.5, 0.3]).unwrap(),
        ];
        for m in &models {
            for n in 1..=4 {
                for w in Pattern::enumerate(n, m.alphabet()) {
                    let at0 = m.cylinder_measure(w.symbols());
                    for shift in 1..4 {
                        let mut dist = m.chain().init().to_vec();
                        for _ in 0..shift {
                            dist = m.chain().push_any(&dist);
                        }
                        let shifted = m.chain().word_measure_from(&dist, w.symbols());
                        assert!((at0 - shifted).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn validation_errors() {
        assert!(ProcessModel::iid(vec![0.5, 0.4]).is_err());
        assert!(ProcessModel::iid(vec![1.0, 0.0]).is_err());
        assert!(ProcessModel::markov(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(ProcessModel::markov(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).is_err());
        assert!(ProcessModel::renewal(vec![0.5, 0.6]).is_err());
        assert!(Pattern::parse("012", 2).is_err());
        assert!(Pattern::parse("", 2).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = ProcessModel::from_json(r#"{"type":"markov","transition":[[0.75,0.25],[0.25,0.75]]}"#)
            .unwrap();
        match m.kind() {
            ModelKind::Markov(mk) => assert!((mk.stationary[1] - 0.5).abs() < 1e-12),
            _ => panic!(),
        }
        assert!(ProcessModel::from_json(r#"{"type":"markov","transition":[[1.0]],"stationary":[1]}"#).is_err());
        let spec = m.spec();
        let again = ProcessModel::from_spec(&spec).unwrap();
        assert_eq!(again.spec(), spec);
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = ProcessModel::iid(vec![0.5, 0.5]).unwrap();
        let a = m.sample_path(10, 42);
        assert_eq!(a, m.sample_path(10, 42));
        assert_eq!(a.len(), 10);
        assert_ne!(m.sample_path(64, 42), m.sample_path(64, 43));
    }

    #[test]
    fn markov_sample_frequencies() {
        let m = ProcessModel::markov(vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        let len = 1_000_000;
        let path = m.sample_path(len, 7);
        let pi = m.marginal();
        for (a, &target) in pi.iter().enumerate() {
            let freq = path.iter().filter(|&&s| s == a).count() as f64 / len as f64;
            // Markov correlation inflates the variance by (1+λ2)/(1-λ2) = 3 here.
            let band = 4.0 * (target / len as f64).sqrt() * 3f64.sqrt();
            assert!((freq - target).abs() < band, "{a}: {freq} vs {target}");
        }
    }

    #[test]
    fn renewal_sample_frequency() {
        let m = ProcessModel::renewal_power_law(3.0, 200).unwrap();
        let mean = match m.kind() {
            ModelKind::Renewal(r) => r.mean,
            _ => unreachable!(),
        };
        let len = 1_000_000;
        let ones = m.sample_path(len, 11).iter().filter(|&&s| s == 1).count();
        let freq = ones as f64 / len as f64;
        let band = 4.0 * ((1.0 / mean) / len as f64).sqrt();
        assert!((freq - 1.0 / mean).abs() < band, "{freq} vs {}", 1.0 / mean);
    }

    #[test]
    fn max_cylinder_matches_enumeration() {
        let m = two_state(0.25, 0.4);
        for n in 1..=8 {
            let brute = Pattern::enumerate(n, 2)
                .map(|w| m.cylinder_measure(w.symbols()))
                .fold(0.0, f64::max);
            assert!((m.max_cylinder_measure(n) - brute).abs() < 1e-15);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn ternary() -> ProcessModel {
            ProcessModel::markov(vec![
                vec![0.2, 0.5, 0.3],
                vec![0.6, 0.1, 0.3],
                vec![0.3, 0.3, 0.4],
            ])
            .unwrap()
        }

        proptest! {
            #[test]
            fn additivity(word in proptest::collection::vec(0usize..3, 1..7)) {
                let m = ternary();
                let whole = m.cylinder_measure(&word);
                let split: f64 = (0..3).map(|a| {
                    let mut w = word.clone();
                    w.push(a);
                    m.cylinder_measure(&w)
                }).sum();
                prop_assert!((whole - split).abs() < 1e-12);
            }

            #[test]
            fn renewal_additivity(word in proptest::collection::vec(0usize..2, 1..9)) {
                let m = ProcessModel::renewal(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
                let whole = m.cylinder_measure(&word);
                let split: f64 = (0..2).map(|a| {
                    let mut w = word.clone();
                    w.push(a);
                    m.cylinder_measure(&w)
                }).sum();
                prop_assert!((whole - split).abs() < 1e-12);
            }
        }
    }
}
