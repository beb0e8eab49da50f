//! φ- and ψ-mixing coefficients.
//!
//! For a Markov source the sup over past and future events reduces to the
//! lag-`n` transition matrix:
//!
//! ```text
//! ψ(n) = max_{a,b} |Pⁿ(a,b) / π(b) - 1|
//! φ(n) = max_a Σ_b (Pⁿ(a,b) - π(b))⁺
//! ```
//!
//! [`mixing_oracle`] recomputes both by brute force over finite cylinders so
//! the reduction is checked rather than assumed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::limits;
use crate::model::{ModelKind, Pattern, ProcessModel};
use crate::report::{ser_ext, ser_ext_vec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingProfile {
    pub source: &'static str,
    /// `phi[n - 1] = φ(n)`.
    pub phi: Vec<f64>,
    /// `psi[n - 1] = ψ(n)`; may hold `+∞`.
    #[serde(serialize_with = "ser_ext_vec")]
    pub psi: Vec<f64>,
    /// `None` when `ψ` is infinite on the whole computed range.
    pub g0: Option<usize>,
    #[serde(serialize_with = "ser_ext")]
    pub m: f64,
    pub summable_phi: bool,
}

impl MixingProfile {
    pub fn nmax(&self) -> usize {
        self.phi.len()
    }

    /// `φ(n)` for `n >= 1`; past the computed range the last value is an upper bound.
    pub fn phi(&self, n: usize) -> f64 {
        assert!(n >= 1, "φ is indexed from 1");
        self.phi[(n - 1).min(self.phi.len() - 1)]
    }

    pub fn psi(&self, n: usize) -> f64 {
        assert!(n >= 1, "ψ is indexed from 1");
        self.psi[(n - 1).min(self.psi.len() - 1)]
    }

    pub fn psi_finite_at(&self, n: usize) -> bool {
        self.psi(n).is_finite()
    }
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = a.len();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for m in 0..k {
            let x = a[i][m];
            if x != 0.0 {
                for j in 0..k {
                    out[i][j] += x * b[m][j];
                }
            }
        }
    }
    out
}

fn lag_coefficients(pn: &[Vec<f64>], pi: &[f64]) -> (f64, f64) {
    let mut psi = 0.0_f64;
    let mut phi = 0.0_f64;
    for row in pn {
        let mut pos = 0.0;
        for (b, &x) in row.iter().enumerate() {
            let ratio = if pi[b] > 0.0 {
                (x / pi[b] - 1.0).abs()
            } else {
                0.0
            };
            psi = psi.max(ratio);
            pos += (x - pi[b]).max(0.0);
        }
        phi = phi.max(pos);
    }
    (phi, psi)
}

/// Profile for `n = 1..=nmax`; renewal sources are outside φ/ψ scope.
pub fn mixing_profile(model: &ProcessModel, nmax: usize) -> Result<MixingProfile> {
    if nmax == 0 {
        return Err(Error::Precondition("mixing profile needs N >= 1".into()));
    }
    let (source, phi, psi) = match model.kind() {
        ModelKind::Iid(_) => ("iid", vec![0.0; nmax], vec![0.0; nmax]),
        ModelKind::Markov(mk) => {
            let mut phi = Vec::with_capacity(nmax);
            let mut psi = Vec::with_capacity(nmax);
            let mut pn = mk.transition.clone();
            for _ in 0..nmax {
                let (f, s) = lag_coefficients(&pn, &mk.stationary);
                phi.push(f);
                psi.push(s);
                pn = mat_mul(&pn, &mk.transition);
            }
            ("markov-lag-reduction", phi, psi)
        }
        ModelKind::Renewal(_) => {
            return Err(Error::UnsupportedModel(
                "renewal sources have no phi/psi profile here".into(),
            ))
        }
    };
    let g0 = psi.iter().position(|x| x.is_finite());
    let m = match g0 {
        Some(g) if g < nmax => psi[g] + 1.0,
        _ => f64::INFINITY,
    };
    Ok(MixingProfile {
        source,
        phi,
        psi,
        g0,
        m,
        summable_phi: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleProfile {
    pub i_max: usize,
    pub len_max: usize,
    /// `phi[n - 1]`: lower bound on `φ(n)` over the enumerated events.
    pub phi: Vec<f64>,
    #[serde(serialize_with = "ser_ext_vec")]
    pub psi: Vec<f64>,
    /// `psi_by_len[n - 1][l - 1]`: the ψ bound using future cylinders of length `<= l`.
    pub psi_by_len: Vec<Vec<f64>>,
    /// ψ bound grew geometrically with the future length at some lag.
    pub divergent: bool,
    /// How φ's event sup was taken at the longest future length.
    pub phi_method: &'static str,
}

pub const SUBSET_LIMIT: usize = 16;

/// `sup_B |μ(B | A) - μ(B)|` over unions `B` of the given cylinders, by trying every subset.
pub fn phi_sup_subsets(cond: &[f64], marg: &[f64]) -> f64 {
    let k = cond.len();
    assert!(k <= SUBSET_LIMIT);
    let mut best = 0.0_f64;
    for mask in 0u32..(1u32 << k) {
        let mut d = 0.0;
        for i in 0..k {
            if mask >> i & 1 == 1 {
                d += cond[i] - marg[i];
            }
        }
        best = best.max(d.abs());
    }
    best
}

/// The same sup, attained on the set where the conditional exceeds the marginal.
pub fn phi_sup_halfspace(cond: &[f64], marg: &[f64]) -> f64 {
    let pos: f64 = cond
        .iter()
        .zip(marg)
        .map(|(c, m)| (c - m).max(0.0))
        .sum();
    let neg: f64 = cond
        .iter()
        .zip(marg)
        .map(|(c, m)| (m - c).max(0.0))
        .sum();
    pos.max(neg)
}

/// Brute-force lower bounds: past cylinders of length `<= i_max + 1` ending at
/// position `i`, future cylinders of length `<= len_max` starting at `i + n`.
pub fn mixing_oracle(model: &ProcessModel, nmax: usize, i_max: usize, len_max: usize) -> Result<OracleProfile> {
    if nmax == 0 || len_max == 0 {
        return Err(Error::Precondition("oracle needs N >= 1 and len_max >= 1".into()));
    }
    let k = model.alphabet();
    let pasts: u128 = (1..=i_max + 1).map(|l| limits::count(k, l)).sum();
    let work = pasts
        .saturating_mul(limits::count(k, len_max))
        .saturating_mul(nmax as u128 * len_max as u128);
    limits::guard("mixing oracle enumeration", work)?;

    let chain = model.chain();
    let futures: Vec<Vec<(Vec<usize>, f64)>> = (1..=len_max)
        .map(|l| {
            Pattern::enumerate(l, k)
                .map(|w| {
                    let mu = model.cylinder_measure(w.symbols());
                    (w.symbols().to_vec(), mu)
                })
                .collect()
        })
        .collect();

    let mut phi = vec![0.0_f64; nmax];
    let mut psi = vec![0.0_f64; nmax];
    let mut psi_by_len = vec![vec![0.0_f64; len_max]; nmax];
    let mut used_subsets = true;
    for plen in 1..=i_max + 1 {
        for past in Pattern::enumerate(plen, k) {
            let mu_a = model.cylinder_measure(past.symbols());
            if mu_a <= 0.0 {
                continue;
            }
            let mut dist = chain.push_word(chain.init(), past.symbols());
            for n in 1..=nmax {
                // dist: joint law of (A, memory) after n - 1 free symbols past A
                for (li, fut) in futures.iter().enumerate() {
                    let mut cond = Vec::with_capacity(fut.len());
                    let mut marg = Vec::with_capacity(fut.len());
                    for (w, mu_b) in fut {
                        let joint = chain.word_measure_from(&dist, w);
                        cond.push(joint / mu_a);
                        marg.push(*mu_b);
                        let ratio = if *mu_b > 0.0 {
                            (joint / (mu_a * mu_b) - 1.0).abs()
                        } else {
                            0.0
                        };
                        psi_by_len[n - 1][li] = psi_by_len[n - 1][li].max(ratio);
                    }
                    let f = if cond.len() <= SUBSET_LIMIT {
                        phi_sup_subsets(&cond, &marg)
                    } else {
                        used_subsets = false;
                        phi_sup_halfspace(&cond, &marg)
                    };
                    phi[n - 1] = phi[n - 1].max(f);
                }
                dist = chain.push_any(&dist);
            }
        }
    }
    for n in 0..nmax {
        for l in 1..len_max {
            psi_by_len[n][l] = psi_by_len[n][l].max(psi_by_len[n][l - 1]);
        }
        psi[n] = psi_by_len[n][len_max - 1];
    }
    let divergent = psi_by_len.iter().any(|row| geometric_growth(row));
    if divergent {
        for (n, row) in psi_by_len.iter().enumerate() {
            if geometric_growth(row) {
                psi[n] = f64::INFINITY;
            }
        }
    }
    Ok(OracleProfile {
        i_max,
        len_max,
        phi,
        psi,
        psi_by_len,
        divergent,
        phi_method: if used_subsets { "subsets" } else { "halfspace" },
    })
}

/// At least three lengths, each step multiplying the bound by 1.5 or more.
fn geometric_growth(row: &[f64]) -> bool {
    row.len() >= 3 && row.windows(2).all(|w| w[0] > 0.0 && w[1] >= 1.5 * w[0])
}

/// Constructive constants with `max_{|A| = n} μ(A) <= C e^{-c n}` for all `n >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubexpConstants {
    pub lambda: f64,
    pub k0: usize,
    pub base: f64,
    pub c: f64,
    pub big_c: f64,
}

pub fn subexp_constants(model: &ProcessModel, profile: &MixingProfile) -> Result<SubexpConstants> {
    let lambda = model.marginal().into_iter().fold(0.0, f64::max);
    if lambda >= 1.0 {
        return Err(Error::Precondition("lemsubexp needs max symbol probability < 1".into()));
    }
    let k0 = (1..=profile.nmax())
        .find(|&k| profile.phi(k) + lambda < 1.0)
        .ok_or_else(|| {
            Error::Precondition(format!(
                "no k0 <= {} with phi(k0) + lambda < 1",
                profile.nmax()
            ))
        })?;
    let base = profile.phi(k0) + lambda;
    let c = -base.ln() / k0 as f64;
    let mut big_c = base.powf(-((k0 - 1) as f64) / k0 as f64);
    for n in 1..k0 {
        big_c = big_c.max(model.max_cylinder_measure(n) * (c * n as f64).exp());
    }
    Ok(SubexpConstants {
        lambda,
        k0,
        base,
        c,
        big_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym() -> ProcessModel {
        ProcessModel::markov(vec![vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap()
    }

    #[test]
    fn iid_profile() {
        let m = ProcessModel::iid(vec![0.3, 0.7]).unwrap();
        let p = mixing_profile(&m, 5).unwrap();
        assert!(p.psi.iter().chain(&p.phi).all(|&x| x == 0.0));
        assert_eq!(p.g0, Some(0));
        assert_eq!(p.m, 1.0);
        let o = mixing_oracle(&m, 3, 2, 2).unwrap();
        assert!(o.psi.iter().chain(&o.phi).all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn symmetric_markov_closed_form() {
        let p = mixing_profile(&sym(), 10).unwrap();
        for n in 1..=10 {
            assert!((p.psi(n) - 0.5f64.powi(n as i32)).abs() < 1e-14);
            assert!((p.phi(n) - 0.5f64.powi(n as i32 + 1)).abs() < 1e-14);
        }
        assert_eq!(p.g0, Some(0));
        assert!((p.m - 1.5).abs() < 1e-14);
    }

    #[test]
    fn oracle_matches_reduction() {
        for m in [
            sym(),
            ProcessModel::markov(vec![vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap(),
            ProcessModel::markov(vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3], vec![0.3, 0.3, 0.4]])
                .unwrap(),
        ] {
            let p = mixing_profile(&m, 4).unwrap();
            let o = mixing_oracle(&m, 4, 2, 2).unwrap();
            for n in 1..=4 {
                assert!((o.psi[n - 1] - p.psi(n)).abs() < 1e-10);
                assert!((o.phi[n - 1] - p.phi(n)).abs() < 1e-10);
            }
            assert!(!o.divergent);
        }
    }

    #[test]
    fn forbidden_transition_has_finite_psi() {
        let m = ProcessModel::markov(vec![vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let p = mixing_profile(&m, 3).unwrap();
        assert!((p.psi(1) - 1.0).abs() < 1e-12);
        assert_eq!(p.g0, Some(0));
        assert!((p.m - 2.0).abs() < 1e-12);
    }

    #[test]
    fn subsets_and_halfspace_agree() {
        let m = ProcessModel::markov(vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3], vec![0.3, 0.3, 0.4]])
            .unwrap();
        let chain = m.chain();
        for past in Pattern::enumerate(2, 3) {
            let mu_a = m.cylinder_measure(past.symbols());
            let dist = chain.push_word(chain.init(), past.symbols());
            let (cond, marg): (Vec<f64>, Vec<f64>) = Pattern::enumerate(2, 3)
                .map(|w| {
                    (
                        chain.word_measure_from(&dist, w.symbols()) / mu_a,
                        m.cylinder_measure(w.symbols()),
                    )
                })
                .unzip();
            assert!((phi_sup_subsets(&cond, &marg) - phi_sup_halfspace(&cond, &marg)).abs() < 1e-14);
        }
    }

    #[test]
    fn monotone_coefficients() {
        let m = ProcessModel::markov(vec![vec![0.1, 0.9], vec![0.8, 0.2]]).unwrap();
        let p = mixing_profile(&m, 30).unwrap();
        for w in p.psi.windows(2).chain(p.phi.windows(2)) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn renewal_is_unsupported() {
        let m = ProcessModel::renewal(vec![0.5, 0.5]).unwrap();
        assert!(matches!(mixing_profile(&m, 3), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn geometric_growth_detector() {
        assert!(geometric_growth(&[1.0, 2.0, 4.0]));
        assert!(!geometric_growth(&[1.0, 1.0, 1.0]));
        assert!(!geometric_growth(&[1.0, 2.0]));
    }

    #[test]
    fn subexp_bound_by_enumeration() {
        for m in [
            ProcessModel::iid(vec![0.5, 0.5]).unwrap(),
            ProcessModel::iid(vec![0.3, 0.7]).unwrap(),
            sym(),
            ProcessModel::markov(vec![vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap(),
        ] {
            let p = mixing_profile(&m, 20).unwrap();
            let s = subexp_constants(&m, &p).unwrap();
            for n in 1..=10 {
                let max = Pattern::enumerate(n, m.alphabet())
                    .map(|w| m.cylinder_measure(w.symbols()))
                    .fold(0.0, f64::max);
                assert!(max <= s.big_c * (-s.c * n as f64).exp() * (1.0 + 1e-12));
            }
        }
    }
}
