//! Error terms `ε_ψ`, `ε_φ`, thresholds `n'`, `n_0`, the scale `f_A` and the
//! theorem constants `C1..C5`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::limits;
use crate::mixing::MixingProfile;
use crate::model::{primitivity_index, ModelKind, Pattern, ProcessModel};
use crate::pattern::{shortest_return, OverlapProfile, SuffixMeasures};
use crate::report::ser_ext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Psi,
    Phi,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Psi => "psi",
            Regime::Phi => "phi",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psi" => Ok(Regime::Psi),
            "phi" => Ok(Regime::Phi),
            other => Err(Error::Parse(format!("unknown regime {other:?}"))),
        }
    }
}

/// `ψ` when it is finite at `n` and `n > 2 g_0`, else `φ`.
pub fn resolve_auto(mixing: &MixingProfile, n: usize) -> Regime {
    match mixing.g0 {
        Some(g0) if n > 2 * g0 && mixing.psi_finite_at(n) => Regime::Psi,
        _ => Regime::Phi,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

pub const PSI_FORMULAS: [&str; 5] = ["8M + 9", "194M + 206", "66M + 89", "12M + 15", "197M + 220"];
pub const PHI_FORMULAS: [&str; 5] = ["9", "143", "61", "14", "170"];

pub fn constants(regime: Regime, m: f64) -> Result<Constants> {
    match regime {
        Regime::Psi => {
            if m.is_nan() || m < 1.0 || !m.is_finite() {
                return Err(Error::Precondition(format!("psi constants need finite M >= 1, got {m}")));
            }
            Ok(Constants {
                c1: 8.0 * m + 9.0,
                c2: 194.0 * m + 206.0,
                c3: 66.0 * m + 89.0,
                c4: 12.0 * m + 15.0,
                c5: 197.0 * m + 220.0,
            })
        }
        Regime::Phi => Ok(Constants {
            c1: 9.0,
            c2: 143.0,
            c3: 61.0,
            c4: 14.0,
            c5: 170.0,
        }),
    }
}

pub fn formulas(regime: Regime) -> [&'static str; 5] {
    match regime {
        Regime::Psi => PSI_FORMULAS,
        Regime::Phi => PHI_FORMULAS,
    }
}

/// `C` in the comparison of return and hitting tails.
pub fn pr_constant(regime: Regime, m: f64) -> f64 {
    match regime {
        Regime::Psi => 4.0 * (m + 1.0),
        Regime::Phi => 4.0,
    }
}

/// `C'` in the block-factorisation bounds.
pub fn prfat_constant(regime: Regime, m: f64) -> f64 {
    match regime {
        Regime::Psi => 2.0 * (m + 1.0),
        Regime::Phi => 4.0,
    }
}

/// `ε_ψ(A) = n μ(A^{(n_A - g_0)}) + ψ(n)`.
pub fn epsilon_psi(profile: &OverlapProfile, suffix: &SuffixMeasures, mixing: &MixingProfile) -> Result<f64> {
    let n = profile.n;
    let g0 = mixing
        .g0
        .ok_or_else(|| Error::Precondition("psi is infinite on the computed range, g0 unknown".into()))?;
    if n <= 2 * g0 {
        return Err(Error::Precondition(format!("epsilon_psi needs n > 2 g0 (n = {n}, g0 = {g0})")));
    }
    let psi = mixing.psi(n);
    if !psi.is_finite() {
        return Err(Error::Precondition(format!("psi({n}) is infinite")));
    }
    let idx = profile.n_a.value as i64 - g0 as i64;
    Ok(n as f64 * suffix.get(idx) + psi)
}

/// `φ(g)` for `g >= 0`, with `φ(0)` replaced by its trivial bound 1.
pub fn phi_at(mixing: &MixingProfile, g: usize) -> f64 {
    if g == 0 {
        1.0
    } else {
        mixing.phi(g)
    }
}

/// `ε_φ(A) = min_{1 <= w <= n_A} (n + τ) μ(A^{(w)}) + φ(n_A - w)`, with the minimising `w`.
pub fn epsilon_phi(profile: &OverlapProfile, suffix: &SuffixMeasures, mixing: &MixingProfile) -> (f64, usize) {
    let n = profile.n;
    let na = profile.n_a.value;
    let scale = (n + profile.tau) as f64;
    (1..=na)
        .map(|w| (scale * suffix.get(w as i64) + phi_at(mixing, na - w), w))
        .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
}

pub fn epsilon(regime: Regime, profile: &OverlapProfile, suffix: &SuffixMeasures, mixing: &MixingProfile) -> Result<(f64, Option<usize>)> {
    match regime {
        Regime::Psi => Ok((epsilon_psi(profile, suffix, mixing)?, None)),
        Regime::Phi => {
            let (e, w) = epsilon_phi(profile, suffix, mixing);
            Ok((e, Some(w)))
        }
    }
}

/// `n' = inf{n > 2 g_0 : ψ(n) < 1}` (ψ) or 1 (φ).
pub fn n_prime(regime: Regime, mixing: &MixingProfile) -> Option<usize> {
    match regime {
        Regime::Phi => Some(1),
        Regime::Psi => {
            let g0 = mixing.g0?;
            (2 * g0 + 1..=mixing.nmax()).find(|&n| mixing.psi(n) < 1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thresholds {
    pub regime: Regime,
    pub n_prime: Option<usize>,
    /// Smallest `m >= n'` for which the certificate covers every `n >= m`.
    pub n0: Option<usize>,
    /// `(n, sup_{|A| = n} μ(A) τ(A))` by enumeration.
    pub enumerated: Vec<(usize, f64)>,
    /// `(n, (n - 1 + g*) max_{|A| = n} μ(A))` beyond the enumerated range.
    pub bounded: Vec<(usize, f64)>,
    /// From here on a geometric bound is decreasing and below 1/2.
    pub tail_from: Option<usize>,
    pub tail_block: usize,
    #[serde(serialize_with = "ser_ext")]
    pub tail_ratio: f64,
    /// `τ(A) <= n - 1 + g*` for every positive pattern.
    pub g_star: usize,
    pub note: String,
}

pub const TAIL_SEARCH_MAX: usize = 100_000;

/// Certificate for `n_0`: enumeration for `n <= n_enum`, then an analytic bound.
pub fn thresholds(model: &ProcessModel, mixing: &MixingProfile, regime: Regime, n_enum: usize) -> Result<Thresholds> {
    let g_star = match model.kind() {
        ModelKind::Iid(_) => 1,
        ModelKind::Markov(mk) => primitivity_index(&mk.transition)
            .ok_or_else(|| Error::InvalidModel("transition matrix is not primitive".into()))?,
        ModelKind::Renewal(_) => {
            return Err(Error::UnsupportedModel("thresholds need a phi/psi-mixing source".into()))
        }
    };
    let k = model.alphabet();
    let work: u128 = (1..=n_enum).map(|n| limits::count(k, n) * (n * n) as u128).sum();
    limits::guard("n0 enumeration", work)?;

    let mut enumerated = Vec::new();
    for n in 1..=n_enum {
        let mut sup = 0.0_f64;
        for pat in Pattern::enumerate(n, k) {
            let mu = model.cylinder_measure(pat.symbols());
            if mu > 0.0 {
                let tau = shortest_return(model, &pat)?;
                sup = sup.max(mu * tau as f64);
            }
        }
        enumerated.push((n, sup));
    }

    let (tail_block, tail_ratio) = (1..=8)
        .map(|l| (l, model.max_conditional_word(l)))
        .find(|&(_, v)| v < 1.0)
        .unwrap_or((8, 1.0));

    let mut bounded = Vec::new();
    let mut tail_from = None;
    if tail_ratio < 1.0 {
        let l = tail_block as f64;
        for n in n_enum + 1..=TAIL_SEARCH_MAX {
            let maxmu = model.max_cylinder_measure(n);
            let b = (n - 1 + g_star) as f64 * maxmu;
            bounded.push((n, b));
            // block maxima (N + jL + L - 2 + g*) maxμ(N) ν^j decrease from j = 0 on
            let lead = (n + tail_block - 2 + g_star) as f64;
            if lead >= l * tail_ratio / (1.0 - tail_ratio) && lead * maxmu < 0.5 {
                tail_from = Some(n);
                break;
            }
        }
    }

    let n_prime = n_prime(regime, mixing);
    let mut n0 = None;
    let mut note = String::new();
    match (n_prime, tail_from) {
        (None, _) => note.push_str("n' not found within the mixing profile range"),
        (_, None) => note.push_str("no analytic tail bound below 1/2 was found"),
        (Some(np), Some(_)) => {
            let values: Vec<(usize, f64)> = enumerated.iter().chain(&bounded).copied().collect();
            let last_bad = values.iter().filter(|(_, v)| *v >= 0.5).map(|(n, _)| *n).max();
            n0 = Some(np.max(last_bad.map_or(1, |b| b + 1)));
            if bounded.iter().any(|&(_, v)| v >= 0.5) {
                note.push_str("bound beyond enumeration exceeded 1/2 at some n; n0 is conservative");
            }
        }
    }
    // only the first few bound values are kept in the report
    bounded.truncate(64);
    Ok(Thresholds {
        regime,
        n_prime,
        n0,
        enumerated,
        bounded,
        tail_from,
        tail_block,
        tail_ratio,
        g_star,
        note,
    })
}

/// Everything the theorem checks need for one pattern.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBudget {
    pub regime: Regime,
    pub epsilon: f64,
    pub w_star: Option<usize>,
    pub f_a: f64,
    pub n_prime: Option<usize>,
    pub n0: Option<usize>,
    pub constants: Constants,
    #[serde(serialize_with = "ser_ext")]
    pub m: f64,
    pub n_a_capped: bool,
}

pub fn error_budget(
    mu: f64,
    profile: &OverlapProfile,
    suffix: &SuffixMeasures,
    mixing: &MixingProfile,
    thresholds: &Thresholds,
) -> Result<ErrorBudget> {
    let regime = thresholds.regime;
    let (epsilon, w_star) = epsilon(regime, profile, suffix, mixing)?;
    Ok(ErrorBudget {
        regime,
        epsilon,
        w_star,
        f_a: 1.0 / (2.0 * mu),
        n_prime: thresholds.n_prime,
        n0: thresholds.n0,
        constants: constants(regime, mixing.m)?,
        m: mixing.m,
        n_a_capped: profile.n_a.capped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::mixing_profile;
    use crate::pattern::{overlap_profile, suffix_measures};

    fn parts(m: &ProcessModel, pat: &Pattern) -> (OverlapProfile, SuffixMeasures, MixingProfile) {
        (
            overlap_profile(m, pat).unwrap(),
            suffix_measures(m, pat),
            mixing_profile(m, 64).unwrap(),
        )
    }

    #[test]
    fn constant_formulas() {
        let c = constants(Regime::Psi, 1.0).unwrap();
        assert_eq!((c.c1, c.c2, c.c3, c.c4, c.c5), (17.0, 400.0, 155.0, 27.0, 417.0));
        let c = constants(Regime::Psi, 2.0).unwrap();
        assert_eq!((c.c1, c.c2, c.c3, c.c4, c.c5), (25.0, 594.0, 221.0, 39.0, 614.0));
        let c = constants(Regime::Phi, 7.0).unwrap();
        assert_eq!((c.c1, c.c2, c.c3, c.c4, c.c5), (9.0, 143.0, 61.0, 14.0, 170.0));
        assert!(constants(Regime::Psi, 0.5).is_err());
    }

    #[test]
    fn epsilon_psi_examples() {
        let m = ProcessModel::iid(vec![0.5, 0.5]).unwrap();
        let (p, s, mx) = parts(&m, &Pattern::constant(1, 10, 2).unwrap());
        assert_eq!(epsilon_psi(&p, &s, &mx).unwrap(), 0.009765625);
        let (p, s, mx) = parts(&m, &m.pattern("01").unwrap());
        assert_eq!(epsilon_psi(&p, &s, &mx).unwrap(), 0.5);

        let mk = ProcessModel::markov(vec![vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap();
        let pat = Pattern::constant(0, 8, 2).unwrap();
        let (p, s, mx) = parts(&mk, &pat);
        let expect = 8.0 * s.get(p.n_a.value as i64) + 0.5f64.powi(8);
        assert!((epsilon_psi(&p, &s, &mx).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn epsilon_phi_scan() {
        let m = ProcessModel::iid(vec![0.3, 0.7]).unwrap();
        let n = 6;
        let (p, s, mx) = parts(&m, &Pattern::constant(0, n, 2).unwrap());
        let (e, _) = epsilon_phi(&p, &s, &mx);
        assert!((e - (n as f64 + 1.0) * 0.3f64.powi(n as i32)).abs() < 1e-15);

        let mk = ProcessModel::markov(vec![vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap();
        let (p, s, mx) = parts(&mk, &Pattern::constant(0, 8, 2).unwrap());
        let (e, w) = epsilon_phi(&p, &s, &mx);
        let brute = (1..=p.n_a.value)
            .map(|w| 9.0 * s.get(w as i64) + phi_at(&mx, p.n_a.value - w))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(e, brute);
        assert_eq!(9.0 * s.get(w as i64) + phi_at(&mx, p.n_a.value - w), e);
    }

    #[test]
    fn psi_refuses_without_substitution() {
        let m = ProcessModel::iid(vec![0.5, 0.5]).unwrap();
        let (p, s, mut mx) = parts(&m, &m.pattern("0110").unwrap());
        mx.psi[3] = f64::INFINITY;
        assert!(matches!(epsilon_psi(&p, &s, &mx), Err(Error::Precondition(_))));
        mx.g0 = Some(2);
        assert!(matches!(epsilon_psi(&p, &s, &mx), Err(Error::Precondition(_))));
    }

    #[test]
    fn thresholds_iid_uniform() {
        let m = ProcessModel::iid(vec![0.5, 0.5]).unwrap();
        let mx = mixing_profile(&m, 16).unwrap();
        let t = thresholds(&m, &mx, Regime::Psi, 12).unwrap();
        assert_eq!(t.n_prime, Some(1));
        assert_eq!(t.enumerated[0].1, 0.5);
        assert_eq!(t.enumerated[1].1, 0.5);
        assert_eq!(t.n0, Some(3));
        for &(n, v) in &t.enumerated {
            assert!(v <= n as f64 * 0.5f64.powi(n as i32) + 1e-15);
        }
    }

    #[test]
    fn thresholds_markov() {
        let m = ProcessModel::markov(vec![vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap();
        let mx = mixing_profile(&m, 16).unwrap();
        let t = thresholds(&m, &mx, Regime::Psi, 10).unwrap();
        assert_eq!(t.n0, Some(2));
        let t = thresholds(&m, &mx, Regime::Phi, 10).unwrap();
        assert_eq!(t.n_prime, Some(1));
        assert_eq!(t.n0, Some(2));
    }

    #[test]
    fn tau_mu_vs_epsilon() {
        for m in [
            ProcessModel::iid(vec![0.5, 0.5]).unwrap(),
            ProcessModel::markov(vec![vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap(),
        ] {
            let mx = mixing_profile(&m, 32).unwrap();
            for n in 2..=8 {
                for pat in Pattern::enumerate(n, 2) {
                    let p = overlap_profile(&m, &pat).unwrap();
                    let s = suffix_measures(&m, &pat);
                    let mu = m.cylinder_measure(pat.symbols());
                    let e = epsilon_psi(&p, &s, &mx).unwrap();
                    assert!(p.tau as f64 * mu <= 2.0 * e + 1e-15, "{pat}");
                    let (f, _) = epsilon_phi(&p, &s, &mx);
                    assert!(p.tau as f64 * mu <= 2.0 * f + 1e-15, "{pat}");
                }
            }
        }
    }

    #[test]
    fn epsilon_uniform_decay() {
        let m = ProcessModel::markov(vec![vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap();
        let mx = mixing_profile(&m, 32).unwrap();
        let sup = |n: usize| {
            Pattern::enumerate(n, 2)
                .map(|pat| {
                    let p = overlap_profile(&m, &pat).unwrap();
                    let s = suffix_measures(&m, &pat);
                    let (f, _) = epsilon_phi(&p, &s, &mx);
                    (epsilon_psi(&p, &s, &mx).unwrap(), f)
                })
                .fold((0.0f64, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1)))
        };
        let (p6, f6) = sup(6);
        let (p12, f12) = sup(12);
        assert!(p12 < p6 && f12 < f6);
    }
}
