//! Recurrence structure of a single pattern: shortest return, periodic and
//! residual return indexes, `n_A`, suffix measures and `ζ_s`.
//!
//! Positivity questions are decided on supports (which memory states can be
//! occupied), never by thresholding floating-point probabilities.

use std::collections::HashMap;

use serde::Serialize;

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::model::{merge_at, Pattern, ProcessModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NA {
    pub value: usize,
    /// No escaping return was found up to `value`; the true `n_A` is larger.
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlapProfile {
    pub n: usize,
    pub tau: usize,
    pub q: usize,
    pub r: usize,
    pub periodic_set: Vec<usize>,
    pub residual_set: Vec<usize>,
    pub n_a: NA,
    /// `shift_positivity[j - 1]` tells whether `μ_A(σ^{-j} A) > 0`, for `j = 1..=2n`.
    pub shift_positivity: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuffixMeasures {
    /// `values[k - 1] = μ(A^{(k)})` for `k = 1..=n`.
    pub values: Vec<f64>,
}

impl SuffixMeasures {
    /// `μ(A^{(k)})` with `μ(A^{(k)}) = μ(A)` for `k >= n` and 1 for the empty suffix.
    pub fn get(&self, k: i64) -> f64 {
        let n = self.values.len() as i64;
        if k <= 0 {
            1.0
        } else {
            self.values[(k.min(n) - 1) as usize]
        }
    }
}

/// Support-level questions about where copies of one pattern may sit.
struct Placement<'a> {
    model: &'a ProcessModel,
    pat: &'a [usize],
}

impl<'a> Placement<'a> {
    /// Can `A` sit at `0` and at `j`, with `0 < j < n`?
    fn overlap_positive(&self, j: usize) -> bool {
        match merge_at(self.pat, self.pat, j) {
            Some(word) => self.word_positive(&word),
            None => false,
        }
    }

    fn word_positive(&self, word: &[usize]) -> bool {
        let c = self.model.chain();
        c.support_word(&c.init_support(), word).iter().any(|&b| b)
    }

    /// Positivity of `A ∩ σ^{-tau}(A^c) ∩ σ^{-j}(A)`.
    fn escape_joint_positive(&self, tau: usize, j: usize) -> bool {
        let n = self.pat.len();
        let len = (j + n).max(tau + n);
        let mut forced: Vec<Option<usize>> = vec![None; len];
        for (start, word) in [(0, self.pat), (j, self.pat)] {
            for (i, &s) in word.iter().enumerate() {
                match forced[start + i] {
                    Some(prev) if prev != s => return false,
                    _ => forced[start + i] = Some(s),
                }
            }
        }
        let c = self.model.chain();
        let m = c.memory_states();
        // reachable[(mem, mismatched)]
        let mut reach = vec![false; 2 * m];
        for (mem, &ok) in c.init_support().iter().enumerate() {
            reach[2 * mem] = ok;
        }
        for (p, f) in forced.iter().enumerate() {
            let mut next = vec![false; 2 * m];
            let in_window = p >= tau && p < tau + n;
            for mem in 0..m {
                for flag in 0..2 {
                    if !reach[2 * mem + flag] {
                        continue;
                    }
                    for a in 0..c.alphabet() {
                        if f.is_some_and(|s| s != a) || c.prob(mem, a) <= 0.0 {
                            continue;
                        }
                        let mismatch = flag == 1 || (in_window && a != self.pat[p - tau]);
                        next[2 * c.next(mem, a) + mismatch as usize] = true;
                    }
                }
            }
            reach = next;
        }
        (0..m).any(|mem| reach[2 * mem + 1])
    }
}

/// Positivity of `μ_A(σ^{-j} A)` for `j >= n`, by propagating supports over the gap.
struct FarShifts<'a> {
    model: &'a ProcessModel,
    pat: &'a [usize],
    current: Vec<bool>,
    gap: usize,
    seen: HashMap<Vec<bool>, usize>,
    cycle: Option<(usize, usize)>,
    history: Vec<bool>,
}

impl<'a> FarShifts<'a> {
    fn new(model: &'a ProcessModel, pat: &'a [usize]) -> Self {
        let c = model.chain();
        let current = c.support_word(&c.init_support(), pat);
        Self {
            model,
            pat,
            current,
            gap: 0,
            seen: HashMap::new(),
            cycle: None,
            history: Vec::new(),
        }
    }

    /// Answer for shift `n + gap`, gaps queried in increasing order from 0.
    fn positive_at_gap(&mut self, gap: usize) -> bool {
        while self.history.len() <= gap {
            if let Some((start, period)) = self.cycle {
                let g = self.history.len();
                let v = self.history[start + (g - start) % period];
                self.history.push(v);
                continue;
            }
            if let Some(&first) = self.seen.get(&self.current) {
                self.cycle = Some((first, self.gap - first));
                continue;
            }
            let c = self.model.chain();
            let ok = c.support_word(&self.current, self.pat).iter().any(|&b| b);
            self.seen.insert(self.current.clone(), self.gap);
            self.history.push(ok);
            self.current = c.support_any(&self.current);
            self.gap += 1;
        }
        self.history[gap]
    }

    /// Whether some gap can ever be positive (known once a cycle is closed).
    fn exhausted_negative(&self) -> bool {
        self.cycle.is_some() && !self.history.iter().any(|&b| b)
    }
}

fn check_positive(model: &ProcessModel, pattern: &Pattern) -> Result<f64> {
    if pattern.symbols().iter().any(|&s| s >= model.alphabet()) {
        return Err(Error::InvalidPattern(format!(
            "{pattern} is not over the model alphabet"
        )));
    }
    let mu = model.cylinder_measure(pattern.symbols());
    if mu <= 0.0 {
        return Err(Error::ZeroMeasure {
            pattern: pattern.to_string(),
        });
    }
    Ok(mu)
}

/// The far search bound `⌈-2 / (μ ln μ)⌉ + n`.
pub fn phi_tau_bound(mu: f64, n: usize) -> usize {
    let b = (-2.0 / (mu * mu.ln())).ceil();
    if b.is_finite() && b < 1e15 {
        b as usize + n
    } else {
        usize::MAX / 4
    }
}

/// `τ(A) = inf{k >= 1 : μ_A(σ^{-k} A) > 0}`.
pub fn shortest_return(model: &ProcessModel, pattern: &Pattern) -> Result<usize> {
    let mu = check_positive(model, pattern)?;
    let n = pattern.len();
    let pl = Placement {
        model,
        pat: pattern.symbols(),
    };
    if let Some(k) = (1..n).find(|&k| pl.overlap_positive(k)) {
        return Ok(k);
    }
    let bound = phi_tau_bound(mu, n).max(2 * n);
    let mut far = FarShifts::new(model, pattern.symbols());
    for k in n..=bound {
        if far.positive_at_gap(k - n) {
            return Ok(k);
        }
        if far.exhausted_negative() {
            break;
        }
    }
    Err(Error::NoReturnWithinBound {
        pattern: pattern.to_string(),
        bound,
    })
}

/// Positivity of `μ_A(σ^{-tau}(A^c) ∩ σ^{-j}(A))`.
pub fn escape_joint_positive(model: &ProcessModel, pattern: &Pattern, tau: usize, j: usize) -> bool {
    Placement {
        model,
        pat: pattern.symbols(),
    }
    .escape_joint_positive(tau, j)
}

pub fn n_a_cap(n: usize, tau: usize) -> usize {
    (4 * n).max(tau + n)
}

pub fn overlap_profile(model: &ProcessModel, pattern: &Pattern) -> Result<OverlapProfile> {
    let tau = shortest_return(model, pattern)?;
    let n = pattern.len();
    let pl = Placement {
        model,
        pat: pattern.symbols(),
    };
    let mut far = FarShifts::new(model, pattern.symbols());
    let shift_positivity: Vec<bool> = (1..=2 * n)
        .map(|j| {
            if j < n {
                pl.overlap_positive(j)
            } else {
                far.positive_at_gap(j - n)
            }
        })
        .collect();
    let (q, r) = (n / tau, n % tau);
    let periodic_set: Vec<usize> = (1..=q).map(|m| m * tau).filter(|&j| j < n).collect();
    let residual_set: Vec<usize> = if q * tau + 1 < q * tau + r {
        (q * tau + 1..q * tau + r)
            .filter(|&j| shift_positivity[j - 1])
            .collect()
    } else {
        Vec::new()
    };
    let n_a = match residual_set.first() {
        Some(&j) => NA {
            value: j,
            capped: false,
        },
        None => {
            let cap = n_a_cap(n, tau);
            match (q * tau + 1..=cap).find(|&j| pl.escape_joint_positive(tau, j)) {
                Some(j) => NA {
                    value: j,
                    capped: false,
                },
                None => NA {
                    value: cap,
                    capped: true,
                },
            }
        }
    };
    Ok(OverlapProfile {
        n,
        tau,
        q,
        r,
        periodic_set,
        residual_set,
        n_a,
        shift_positivity,
    })
}

pub fn suffix_measures(model: &ProcessModel, pattern: &Pattern) -> SuffixMeasures {
    SuffixMeasures {
        values: (1..=pattern.len())
            .map(|k| model.cylinder_measure(pattern.suffix(k)))
            .collect(),
    }
}

/// `ζ_s(A) = μ_A(T_A > ⌊n / s⌋)`.
pub fn zeta_parameter(model: &ProcessModel, pattern: &Pattern, s: f64) -> Result<f64> {
    if s.is_nan() || s <= 0.0 {
        return Err(Error::Precondition("zeta parameter needs s > 0".into()));
    }
    let threshold = (pattern.len() as f64 / s).floor() as usize;
    let engine = Engine::new(model, pattern)?;
    Ok(engine.return_tail(threshold)?.values[threshold])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform() -> ProcessModel {
        ProcessModel::iid(vec![0.5, 0.5]).unwrap()
    }

    fn forbidden() -> ProcessModel {
        ProcessModel::markov(vec![vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap()
    }

    fn ternary() -> ProcessModel {
        ProcessModel::markov(vec![
            vec![0.0, 0.6, 0.4],
            vec![0.3, 0.3, 0.4],
            vec![0.5, 0.25, 0.25],
        ])
        .unwrap()
    }

    /// Joint positivity by explicit strings: is there a positive-measure string
    /// of length `len` with `A` at 0 and `A` at `j` (and, optionally, not `A` at `tau`)?
    fn brute_joint(model: &ProcessModel, pat: &[usize], j: usize, escape_at: Option<usize>) -> bool {
        let n = pat.len();
        let len = (j + n).max(escape_at.map_or(0, |t| t + n));
        Pattern::enumerate(len, model.alphabet()).any(|w| {
            let w = w.symbols();
            w[..n] == *pat
                && w[j..j + n] == *pat
                && escape_at.is_none_or(|t| w[t..t + n] != *pat)
                && model.cylinder_measure(w) > 0.0
        })
    }

    #[test]
    fn shortest_return_examples() {
        let m = uniform();
        assert_eq!(shortest_return(&m, &m.pattern("11").unwrap()).unwrap(), 1);
        assert_eq!(shortest_return(&m, &m.pattern("01").unwrap()).unwrap(), 2);
        let f = forbidden();
        assert_eq!(shortest_return(&f, &f.pattern("010").unwrap()).unwrap(), 2);
        assert!(matches!(
            shortest_return(&f, &f.pattern("00").unwrap()),
            Err(Error::ZeroMeasure { .. })
        ));
    }

    #[test]
    fn no_return_is_reported() {
        let m = ProcessModel::renewal(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(shortest_return(&m, &m.pattern("1").unwrap()).unwrap(), 3);
        assert!(matches!(
            shortest_return(&m, &m.pattern("101").unwrap()),
            Err(Error::ZeroMeasure { .. })
        ));
        // gaps of exactly 20: "1" returns only at 20, beyond ⌈-2/(μ ln μ)⌉ + 1 = 15
        let mut q = vec![0.0; 20];
        q[19] = 1.0;
        let m = ProcessModel::renewal(q).unwrap();
        assert!(matches!(
            shortest_return(&m, &m.pattern("1").unwrap()),
            Err(Error::NoReturnWithinBound { bound: 15, .. })
        ));
    }

    #[test]
    fn constant_pattern_profile() {
        let m = uniform();
        let p = overlap_profile(&m, &Pattern::constant(1, 10, 2).unwrap()).unwrap();
        assert_eq!(p.tau, 1);
        assert_eq!((p.q, p.r), (10, 0));
        assert_eq!(p.periodic_set, (1..=9).collect::<Vec<_>>());
        assert!(p.residual_set.is_empty());
        // an escaper has x_10 != 1, so A cannot restart before position 11
        assert_eq!(p.n_a, NA { value: 11, capped: false });
    }

    #[test]
    fn pattern_01_profile() {
        let m = uniform();
        let p = overlap_profile(&m, &m.pattern("01").unwrap()).unwrap();
        assert_eq!((p.tau, p.q, p.r), (2, 1, 0));
        assert!(p.residual_set.is_empty());
        assert_eq!(p.n_a.value, 3);
    }

    #[test]
    fn profile_11010_against_enumeration() {
        let m = uniform();
        let pat = m.pattern("11010").unwrap();
        let p = overlap_profile(&m, &pat).unwrap();
        let n = 5;
        let tau = (1..=2 * n).find(|&j| brute_joint(&m, pat.symbols(), j, None)).unwrap();
        assert_eq!(p.tau, tau);
        for j in 1..=2 * n {
            assert_eq!(p.shift_positivity[j - 1], brute_joint(&m, pat.symbols(), j, None));
        }
        let na = (1..=4 * n)
            .find(|&j| brute_joint(&m, pat.symbols(), j, Some(tau)))
            .unwrap();
        assert_eq!(p.n_a.value, na);
        assert_eq!((p.tau, p.n_a.value), (5, 6));
    }

    #[test]
    fn structural_invariants_by_enumeration() {
        for m in [uniform(), forbidden(), ProcessModel::iid(vec![0.2, 0.3, 0.5]).unwrap(), ternary()] {
            let k = m.alphabet();
            let nmax = if k == 2 { 6 } else { 4 };
            for n in 1..=nmax {
                for pat in Pattern::enumerate(n, k) {
                    if m.cylinder_measure(pat.symbols()) == 0.0 {
                        continue;
                    }
                    let p = overlap_profile(&m, &pat).unwrap();
                    let a = pat.symbols();
                    for j in 1..=2 * n {
                        assert_eq!(p.shift_positivity[j - 1], brute_joint(&m, a, j, None), "{pat} j={j}");
                    }
                    assert_eq!(p.tau, (1..).find(|&j| p.shift_positivity[j - 1]).unwrap());
                    for &j in &p.periodic_set {
                        assert!(!brute_joint(&m, a, j, Some(p.tau)), "{pat} P j={j}");
                    }
                    for &j in &p.residual_set {
                        assert!(brute_joint(&m, a, j, Some(p.tau)), "{pat} R j={j}");
                    }
                    assert!(p.tau < p.n_a.value);
                    if p.residual_set.is_empty() {
                        assert!(p.n_a.value >= n, "{pat}");
                    }
                    if !p.n_a.capped {
                        assert!(brute_joint(&m, a, p.n_a.value, Some(p.tau)));
                    }
                    assert!(2 * p.n_a.value >= n);
                }
            }
        }
    }

    #[test]
    fn suffixes() {
        let p = 0.3;
        let m = ProcessModel::iid(vec![p, 1.0 - p]).unwrap();
        let s = suffix_measures(&m, &Pattern::constant(0, 6, 2).unwrap());
        for k in 1..=6 {
            assert!((s.get(k) - p.powi(k as i32)).abs() < 1e-15);
        }
        assert_eq!(s.get(9), s.get(6));
        let mk = ProcessModel::markov(vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        let s = suffix_measures(&mk, &mk.pattern("010").unwrap());
        let pi1 = mk.marginal()[1];
        assert!((s.get(2) - pi1 * 0.2).abs() < 1e-15);
        assert!((s.get(3) - mk.cylinder_measure(&[0, 1, 0])).abs() < 1e-15);
    }

    #[test]
    fn zeta_examples() {
        let m = uniform();
        let z = zeta_parameter(&m, &m.pattern("11").unwrap(), 2.0).unwrap();
        assert!((z - 0.5).abs() < 1e-15);
        // μ_A(T > 2) for "01": x2x3 != "01" given x0x1 = "01" (the shift-1 return is impossible)
        let z = zeta_parameter(&m, &m.pattern("01").unwrap(), 1.0).unwrap();
        let mut count = 0;
        for w in Pattern::enumerate(2, 2) {
            if w.symbols() != [0, 1] {
                count += 1;
            }
        }
        assert!((z - count as f64 / 4.0).abs() < 1e-15);
        let z = zeta_parameter(&m, &m.pattern("0110").unwrap(), 0.5).unwrap();
        assert!(z <= 1.0);
    }

    #[test]
    fn certain_return_at_tau() {
        for m in [uniform(), forbidden(), ternary()] {
            for n in 1..=4 {
                for pat in Pattern::enumerate(n, m.alphabet()) {
                    if m.cylinder_measure(pat.symbols()) == 0.0 {
                        continue;
                    }
                    let tau = shortest_return(&m, &pat).unwrap();
                    let e = Engine::new(&m, &pat).unwrap();
                    let r = e.return_tail(tau).unwrap();
                    assert!((r.values[tau - 1] - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
