//! Numerical checks of the approximation theorem, the supporting lemmas and
//! propositions, and the positivity of the potential well.
//!
//! Each check yields a [`BoundReport`]. Checks whose hypotheses fail are
//! skipped with a reason; checks below the certified `n_0` are evaluated but
//! reported as skipped (`below-threshold`) rather than failed.

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{Engine, MeanReturn, TailCurve, TailKind};
use crate::error::{Error, Result};
use crate::error_budget::{
    self, constants, epsilon_phi, epsilon_psi, phi_at, pr_constant, prfat_constant, resolve_auto,
    Constants, Regime, Thresholds,
};
use crate::limits;
use crate::mixing::{mixing_profile, subexp_constants, MixingProfile};
use crate::model::{Pattern, ProcessModel};
use crate::pattern::{overlap_profile, phi_tau_bound, shortest_return, suffix_measures, OverlapProfile, SuffixMeasures};
use crate::report::ser_ext;

/// Floating slack for inequalities: pass iff `rhs - lhs >= -SLACK`.
pub const SLACK: f64 = 1e-10;
/// Tolerance for exact identities (checked as `|a - b| <= IDENTITY_TOL`).
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub check_id: String,
    pub context: String,
    pub model: String,
    pub pattern: String,
    pub param: String,
    #[serde(serialize_with = "ser_ext")]
    pub lhs: f64,
    #[serde(serialize_with = "ser_ext")]
    pub rhs: f64,
    #[serde(serialize_with = "ser_ext")]
    pub margin: f64,
    pub pass: bool,
    #[serde(flatten)]
    pub status: Status,
    pub regime: Option<Regime>,
}

impl BoundReport {
    pub fn is_failure(&self) -> bool {
        self.status == Status::Fail
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self.status, Status::Skipped(_))
    }
}

/// Sorts reports by `(check_id, context)`.
pub fn sort_reports(reports: &mut [BoundReport]) {
    reports.sort_by(|a, b| (&a.check_id, &a.context).cmp(&(&b.check_id, &b.context)));
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
}

pub fn summarize(reports: &[BoundReport]) -> Summary {
    let mut s = Summary {
        total: reports.len(),
        ..Summary::default()
    };
    for r in reports {
        match r.status {
            Status::Pass => s.passed += 1,
            Status::Fail => s.failed += 1,
            Status::Skipped(_) => s.skipped += 1,
        }
    }
    s
}

/// How the regime is chosen for each pattern length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeChoice {
    Psi,
    Phi,
    Auto,
}

impl std::str::FromStr for RegimeChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psi" => Ok(Self::Psi),
            "phi" => Ok(Self::Phi),
            "auto" => Ok(Self::Auto),
            other => Err(Error::Parse(format!("unknown regime {other:?} (psi|phi|auto)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub regime: RegimeChoice,
    /// Points in the log-spaced `t` grid.
    pub t_points: usize,
    /// The grid spans `[1, t_span / (ρ μ)]`.
    pub t_span: f64,
    /// Pattern lengths enumerated for the `n_0` certificate.
    pub n_enum: usize,
    /// Length of the mixing profile.
    pub mixing_n: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            regime: RegimeChoice::Auto,
            t_points: 20,
            t_span: 20.0,
            n_enum: 12,
            mixing_n: 256,
        }
    }
}

/// `points` log-spaced integers in `[1, t_end]`, deduplicated.
pub fn log_grid(t_end: usize, points: usize) -> Vec<usize> {
    let t_end = t_end.max(1);
    if points <= 1 {
        return vec![t_end];
    }
    let top = (t_end as f64).ln();
    let mut v: Vec<usize> = (0..points)
        .map(|i| (top * i as f64 / (points - 1) as f64).exp().round() as usize)
        .map(|t| t.clamp(1, t_end))
        .collect();
    v.dedup();
    v
}

/// Per-model data shared by every pattern check.
#[derive(Debug, Clone)]
pub struct ModelContext<'m> {
    pub id: String,
    pub model: &'m ProcessModel,
    pub mixing: MixingProfile,
    pub config: VerifyConfig,
    psi_thresholds: Option<Thresholds>,
    phi_thresholds: Option<Thresholds>,
}

impl<'m> ModelContext<'m> {
    pub fn new(id: &str, model: &'m ProcessModel, config: VerifyConfig) -> Result<Self> {
        let mixing = mixing_profile(model, config.mixing_n)?;
        let th = |r: Regime| error_budget::thresholds(model, &mixing, r, config.n_enum);
        let psi_thresholds = match config.regime {
            RegimeChoice::Phi => None,
            _ if mixing.g0.is_some() => Some(th(Regime::Psi)?),
            _ => None,
        };
        let phi_thresholds = match config.regime {
            RegimeChoice::Psi => None,
            _ => Some(th(Regime::Phi)?),
        };
        Ok(Self {
            id: id.to_string(),
            model,
            mixing,
            config,
            psi_thresholds,
            phi_thresholds,
        })
    }

    pub fn regime_for(&self, n: usize) -> Regime {
        match self.config.regime {
            RegimeChoice::Psi => Regime::Psi,
            RegimeChoice::Phi => Regime::Phi,
            RegimeChoice::Auto => resolve_auto(&self.mixing, n),
        }
    }

    pub fn thresholds(&self, regime: Regime) -> Option<&Thresholds> {
        match regime {
            Regime::Psi => self.psi_thresholds.as_ref(),
            Regime::Phi => self.phi_thresholds.as_ref(),
        }
    }

    pub fn m(&self) -> f64 {
        self.mixing.m
    }

    #[allow(clippy::too_many_arguments)]
    fn report(&self, check_id: &str, pattern: &str, param: &str, lhs: f64, rhs: f64, regime: Option<Regime>, gate: Option<String>) -> BoundReport {
        make_report(check_id, &self.id, pattern, param, lhs, rhs, SLACK, regime, gate)
    }

    /// Model-level checks: coefficient monotonicity and the sub-exponential cylinder bound.
    pub fn check_model(&self) -> Vec<BoundReport> {
        let mut out = Vec::new();
        let mx = &self.mixing;
        let worst = |v: &[f64]| {
            v.windows(2)
                .map(|w| if w[1].is_finite() && w[0].is_finite() { w[1] - w[0] } else { 0.0 })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        out.push(self.report("mixing.monotone.phi", "-", &format!("N={}", mx.nmax()), worst(&mx.phi).max(0.0), 0.0, None, None));
        out.push(self.report("mixing.monotone.psi", "-", &format!("N={}", mx.nmax()), worst(&mx.psi).max(0.0), 0.0, None, None));
        out.push(self.report("mixing.M-at-least-1", "-", "-", 1.0, mx.m, Some(Regime::Psi), None));
        match subexp_constants(self.model, mx) {
            Ok(s) => {
                for n in 1..=10 {
                    let max = self.model.max_cylinder_measure(n);
                    let rhs = s.big_c * (-s.c * n as f64).exp();
                    out.push(self.report("lemsubexp", "-", &format!("n={n:02}"), max, rhs, Some(Regime::Phi), None));
                }
            }
            Err(e) => out.push(self.report("lemsubexp", "-", "-", f64::NAN, f64::NAN, Some(Regime::Phi), Some(e.to_string()))),
        }
        out
    }
}

#[allow(clippy::too_many_arguments)]
fn make_report(
    check_id: &str,
    model: &str,
    pattern: &str,
    param: &str,
    lhs: f64,
    rhs: f64,
    slack: f64,
    regime: Option<Regime>,
    gate: Option<String>,
) -> BoundReport {
    let margin = rhs - lhs;
    let pass = margin >= -slack;
    let status = match gate {
        Some(reason) => Status::Skipped(reason),
        None if pass => Status::Pass,
        None => Status::Fail,
    };
    BoundReport {
        check_id: check_id.to_string(),
        context: format!("{model}|{pattern}|{param}"),
        model: model.to_string(),
        pattern: pattern.to_string(),
        param: param.to_string(),
        lhs,
        rhs,
        margin,
        pass,
        status,
        regime,
    }
}

/// Exact quantities for one pattern, computed once and shared by all checks.
pub struct PatternContext<'a, 'm> {
    pub mc: &'a ModelContext<'m>,
    pub pattern: Pattern,
    pub engine: Engine<'m>,
    pub profile: OverlapProfile,
    pub suffix: SuffixMeasures,
    pub mu: f64,
    pub rho: f64,
    pub regime: Regime,
    pub hit: TailCurve,
    pub ret: TailCurve,
    pub t_grid: Vec<usize>,
    eps_psi: Result<f64>,
    eps_phi: f64,
}

impl<'a, 'm> PatternContext<'a, 'm> {
    pub fn new(mc: &'a ModelContext<'m>, pattern: &Pattern) -> Result<Self> {
        Self::with_horizon(mc, pattern, 0)
    }

    /// As [`PatternContext::new`], with exact tails computed at least up to `min_horizon`.
    pub fn with_horizon(mc: &'a ModelContext<'m>, pattern: &Pattern, min_horizon: usize) -> Result<Self> {
        let model = mc.model;
        let engine = Engine::new(model, pattern)?;
        let profile = overlap_profile(model, pattern)?;
        let suffix = suffix_measures(model, pattern);
        let mu = engine.mu();
        let rho = engine.potential_well(profile.tau)?.rho;
        let n = pattern.len();
        let regime = mc.regime_for(n);
        let t_end = (mc.config.t_span / (rho * mu)).ceil() as usize;
        let t_grid = log_grid(t_end, mc.config.t_points);
        let f_int = (1.0 / (2.0 * mu)).floor() as usize;
        let horizon = (t_end.max(profile.tau + 2 * n).max(4 * f_int + 4 * n) + f_int).max(min_horizon);
        limits::guard(
            "verification horizon",
            engine.product().len() as u128 * horizon as u128,
        )?;
        let hit = engine.hitting_tail(horizon)?;
        let ret = engine.return_tail(horizon)?;
        let eps_psi = epsilon_psi(&profile, &suffix, &mc.mixing);
        let (eps_phi, _) = epsilon_phi(&profile, &suffix, &mc.mixing);
        Ok(Self {
            mc,
            pattern: pattern.clone(),
            engine,
            profile,
            suffix,
            mu,
            rho,
            regime,
            hit,
            ret,
            t_grid,
            eps_psi,
            eps_phi,
        })
    }

    fn n(&self) -> usize {
        self.pattern.len()
    }

    pub fn f_a(&self) -> f64 {
        1.0 / (2.0 * self.mu)
    }

    /// Integer block length `⌊f_A⌋`.
    pub fn f_int(&self) -> usize {
        self.f_a().floor() as usize
    }

    fn h(&self, t: i64) -> f64 {
        self.hit.at(t)
    }

    fn r(&self, t: i64) -> f64 {
        self.ret.at(t)
    }

    pub fn epsilon(&self, regime: Regime) -> Result<f64> {
        match regime {
            Regime::Psi => self.eps_psi.clone(),
            Regime::Phi => Ok(self.eps_phi),
        }
    }

    fn report(&self, check_id: &str, param: String, lhs: f64, rhs: f64, regime: Option<Regime>, gate: Option<String>) -> BoundReport {
        make_report(check_id, &self.mc.id, &self.pattern.to_string(), &param, lhs, rhs, SLACK, regime, gate)
    }

    fn identity(&self, check_id: &str, param: String, a: f64, b: f64) -> BoundReport {
        make_report(check_id, &self.mc.id, &self.pattern.to_string(), &param, (a - b).abs(), IDENTITY_TOL, 0.0, None, None)
    }

    /// Hypotheses of a result that holds for `n >= n'` in the given regime.
    fn gate_n_prime(&self, regime: Regime) -> Option<String> {
        if let Err(e) = self.epsilon(regime) {
            return Some(format!("hypothesis: {e}"));
        }
        match self.mc.thresholds(regime).and_then(|t| t.n_prime) {
            None => Some(format!("hypothesis: n' undefined in the {} regime", regime.name())),
            Some(np) if self.n() < np => Some(format!("hypothesis: n = {} < n' = {np}", self.n())),
            _ => None,
        }
    }

    /// Hypotheses of the main theorem: regime conditions and `n >= n_0`.
    fn gate_theorem(&self, regime: Regime) -> Option<String> {
        if let Some(g) = self.gate_n_prime(regime) {
            return Some(g);
        }
        match self.mc.thresholds(regime).and_then(|t| t.n0) {
            None => Some("hypothesis: n0 not certified (sup mu*tau -> 0 not established)".into()),
            Some(n0) if self.n() < n0 => Some(format!("below-threshold: n = {} < certified n0 = {n0}", self.n())),
            _ => None,
        }
    }

    fn constants(&self, regime: Regime) -> Result<Constants> {
        constants(regime, self.mc.m())
    }

    fn beyond_horizon(&self, id: &str, t: usize, regime: Regime) -> BoundReport {
        let why = format!("t = {t} beyond computed horizon {}; use PatternContext::with_horizon", self.hit.t_max());
        self.report(id, format!("t={t:09}"), f64::NAN, f64::NAN, Some(regime), Some(why))
    }

    pub fn check_theorem_hitting(&self, t_set: &[usize]) -> Vec<BoundReport> {
        let regime = self.regime;
        let gate = self.gate_theorem(regime);
        let (eps, c) = match (self.epsilon(regime), self.constants(regime)) {
            (Ok(e), Ok(c)) => (e, c),
            (Err(e), _) | (_, Err(e)) => {
                return vec![self.report("tail-approx.hitting", "-".into(), f64::NAN, f64::NAN, Some(regime), Some(format!("hypothesis: {e}")))]
            }
        };
        let (mu, rho, tau) = (self.mu, self.rho, self.profile.tau as f64);
        let mut out = Vec::new();
        for &t in t_set {
            if t > self.hit.t_max() {
                out.push(self.beyond_horizon("tail-approx.hitting", t, regime));
                continue;
            }
            let tf = t as f64;
            let lhs = (self.h(t as i64) - (-rho * mu * tf).exp()).abs();
            let (id, rhs) = if tf <= self.f_a() {
                ("tail-approx.hitting.small-t", c.c1 * (tau * mu + tf * mu * eps))
            } else {
                ("tail-approx.hitting.large-t", c.c2 * mu * tf * eps * (-mu * tf * (rho - c.c3 * eps)).exp())
            };
            out.push(self.report(id, format!("t={t:09}"), lhs, rhs, Some(regime), gate.clone()));
        }
        out
    }

    pub fn check_theorem_return(&self, t_set: &[usize]) -> Vec<BoundReport> {
        let regime = self.regime;
        let gate = self.gate_theorem(regime);
        let (eps, c) = match (self.epsilon(regime), self.constants(regime)) {
            (Ok(e), Ok(c)) => (e, c),
            (Err(e), _) | (_, Err(e)) => {
                return vec![self.report("tail-approx.return", "-".into(), f64::NAN, f64::NAN, Some(regime), Some(format!("hypothesis: {e}")))]
            }
        };
        let (mu, rho, tau) = (self.mu, self.rho, self.profile.tau);
        let mut out = Vec::new();
        for &t in t_set.iter().filter(|&&t| t >= tau) {
            if t > self.ret.t_max() {
                out.push(self.beyond_horizon("tail-approx.return", t, regime));
                continue;
            }
            let tf = t as f64;
            let approx = rho * (-rho * mu * (tf - tau as f64)).exp();
            let lhs = (self.r(t as i64) - approx).abs();
            let (id, rhs) = if tf <= self.f_a() {
                ("tail-approx.return.small-t", c.c4 * eps)
            } else {
                ("tail-approx.return.large-t", c.c5 * mu * tf * eps * (-mu * tf * (rho - c.c3 * eps)).exp())
            };
            out.push(self.report(id, format!("t={t:09}"), lhs, rhs, Some(regime), gate.clone()));
        }
        out
    }

    /// The theorem's own grid: the log grid plus `t = 0` (hitting) and `t = τ` (return).
    pub fn theorem_grid(&self) -> (Vec<usize>, Vec<usize>) {
        let mut h = vec![0];
        h.extend(&self.t_grid);
        let mut r = vec![self.profile.tau];
        r.extend(self.t_grid.iter().copied().filter(|&t| t > self.profile.tau));
        (h, r)
    }

    fn block_ks(&self) -> Vec<usize> {
        let f = self.f_int().max(1);
        let kmax = (self.hit.t_max().saturating_sub(f)) / f;
        let mut ks = vec![1, 2, 3, 4, 5, 6, 8, 10, 13, 16, 20, 25, 32, 40];
        ks.retain(|&k| k >= 1 && k <= kmax.max(1));
        ks
    }

    fn r_offsets(&self) -> Vec<usize> {
        let n = self.n();
        let f = self.f_int();
        let mut rs = vec![0, 1, n, 2 * n, f / 2, f];
        rs.retain(|&r| r <= f);
        rs.sort_unstable();
        rs.dedup();
        rs
    }

    pub fn check_supporting_results(&self) -> Result<Vec<BoundReport>> {
        let mut out = Vec::new();
        let n = self.n();
        let ni = n as i64;
        let (mu, rho) = (self.mu, self.rho);
        let tau = self.profile.tau;
        let model = self.mc.model;
        let mixing = &self.mc.mixing;
        let m = self.mc.m();
        let psi_n = mixing.psi(n);
        let phi_n = mixing.phi(n);
        let psi_ok = self.eps_psi.is_ok() && psi_n.is_finite();
        let regimes: Vec<Regime> = match self.mc.config.regime {
            RegimeChoice::Psi => vec![Regime::Psi],
            RegimeChoice::Phi => vec![Regime::Phi],
            RegimeChoice::Auto => vec![self.regime],
        };

        // Lemma Est: μ(T = i) = μ(A) μ_A(T > i - 1)
        for i in 1..=50.min(self.hit.t_max()) {
            out.push(self.identity("lemma-est", format!("i={i:03}"), self.hit.hits[i], mu * self.r(i as i64 - 1)));
        }

        // telescoping product of one-step conditionals
        let mut prod = 1.0;
        let mut worst = 0.0_f64;
        for t in 1..=self.hit.t_max().min(2000) {
            let p_i = self.r(t as i64 - 1) / self.h(t as i64 - 1);
            prod *= 1.0 - mu * p_i;
            worst = worst.max((prod - self.h(t as i64)).abs());
        }
        out.push(self.report("tail-factorisation", "t<=2000".into(), worst, 1e-10, None, None));

        // ρ two ways
        let pw = self.engine.potential_well(tau)?;
        out.push(self.identity("rho.two-ways", "-".into(), pw.rho, pw.rho_complement));
        out.push(self.identity("certain-return-before-tau", "-".into(), self.r(tau as i64 - 1), 1.0));

        // Lemma lemtau
        out.push(self.report("lemtau.psi", "-".into(), tau as f64, 2.0 * n as f64, Some(Regime::Psi), None));
        out.push(self.report("lemtau.phi", "-".into(), tau as f64, phi_tau_bound(mu, n) as f64, Some(Regime::Phi), None));
        out.push(self.report("tau-lt-nA", "-".into(), tau as f64, self.profile.n_a.value as f64 - 1.0, None, None));

        // eq. chichi and the second-moment bound, at L = ⌊1/μ⌋
        let l = (1.0 / mu).floor() as usize;
        let hit_by_l = 1.0 - self.h(l as i64);
        out.push(self.report("chichi", format!("L={l}"), hit_by_l - tau as f64 * mu, rho, None, None));
        let a = self.pattern.symbols();
        let mut en2 = l as f64 * mu;
        for j in 1..l.min(n) {
            en2 += 2.0 * (l - j) as f64 * model.joint_measure(a, a, j);
        }
        let chain = model.chain();
        let mut dist = chain.push_word(chain.init(), a);
        for j in n..l {
            en2 += 2.0 * (l - j) as f64 * chain.word_measure_from(&dist, a);
            dist = chain.push_any(&dist);
        }
        let second = (l as f64 * mu).powi(2) / en2;
        out.push(self.report("second-moment", format!("L={l}"), second, hit_by_l, None, None));

        // Kac and the ratio E_A(T) μ(A)
        let kac: MeanReturn = self.engine.mean_return(None)?;
        let ratio = kac.estimate * mu;
        out.push(self.report("kac", "-".into(), (ratio - 1.0).abs(), 1e-6, None, None));
        for &regime in &regimes {
            if let Ok(eps) = self.epsilon(regime) {
                out.push(self.report("kac.consistency", "-".into(), (ratio - 1.0).abs(), 10.0 * eps, Some(regime), None));
            }
        }

        // Prop R(A), ψ only
        if regimes.contains(&Regime::Psi) {
            let gate = self.gate_n_prime(Regime::Psi);
            if let Some(g0) = mixing.g0 {
                let r_set = &self.profile.residual_set;
                let lhs: f64 = r_set.iter().map(|&j| self.r(j as i64 - 1) - self.r(j as i64)).sum();
                let rhs = m * r_set.len() as f64 * self.suffix.get(self.profile.n_a.value as i64 - g0 as i64);
                out.push(self.report("propR.a", "-".into(), lhs, rhs, Some(Regime::Psi), gate.clone()));
                for (label, k) in [("k=n", n), ("k=2n", 2 * n), ("k=tau+2n", tau + 2 * n)] {
                    let lhs = self.r(ni - 1) - self.r(k as i64);
                    let rhs = m * (k - n + 1) as f64 * self.suffix.get(ni - g0 as i64);
                    out.push(self.report("propR.b", label.into(), lhs, rhs, Some(Regime::Psi), gate.clone()));
                }
            }
        }

        // Prop PR
        for &regime in &regimes {
            let gate = self.gate_n_prime(regime);
            if let Ok(eps) = self.epsilon(regime) {
                let c = pr_constant(regime, m);
                for &t in self.t_grid.iter().filter(|&&t| t >= tau) {
                    let lhs = (self.r(t as i64) - rho * self.h(t as i64)).abs();
                    out.push(self.report("propPR", format!("t={t:09}"), lhs, c * eps, Some(regime), gate.clone()));
                }
            }
        }

        // Lemma lemfat with B = whole space and B = {x_{kf} = b}
        let f = self.f_int() as i64;
        let ks = self.block_ks();
        let h_short = self.h(f - 2 * ni);
        let positions: Vec<usize> = ks.iter().map(|&k| k * f as usize).collect();
        let marg = model.marginal();
        let mut events: Vec<(String, f64, Vec<f64>, Vec<f64>)> = vec![(
            "B=all".into(),
            1.0,
            positions.iter().map(|&p| self.h(p as i64)).collect(),
            positions.iter().map(|&p| self.r(p as i64)).collect(),
        )];
        for (b, &mb) in marg.iter().enumerate() {
            if mb > 0.0 {
                events.push((
                    format!("B=x{b}"),
                    mb,
                    self.engine.tail_and_symbol(TailKind::Hitting, &positions, b)?,
                    self.engine.tail_and_symbol(TailKind::Return, &positions, b)?,
                ));
            }
        }
        for (label, mu_b, hit_b, ret_b) in &events {
            for (i, &k) in ks.iter().enumerate() {
                let kf = k as i32;
                let param = format!("{label};k={k:03}");
                if psi_ok {
                    let rhs = ((psi_n + 1.0) * h_short).powi(kf) * mu_b;
                    out.push(self.report("lemfat.a", param.clone(), hit_b[i], rhs, Some(Regime::Psi), None));
                    let rhs = (psi_n + 1.0).powi(kf) * h_short.powi(kf - 1) * mu_b;
                    out.push(self.report("lemfat.c", param.clone(), ret_b[i], rhs, Some(Regime::Psi), None));
                }
                let rhs = (h_short + phi_n).powi(kf) * (mu_b + phi_n);
                out.push(self.report("lemfat.b", param, hit_b[i], rhs, Some(Regime::Phi), None));
            }
        }

        // Prop prfat
        let rs = self.r_offsets();
        let fu = f as usize;
        for &regime in &regimes {
            let gate = self.gate_n_prime(regime);
            let eps = match self.epsilon(regime) {
                Ok(e) => e,
                Err(_) => continue,
            };
            let cp = prfat_constant(regime, m);
            for &k in &ks {
                let ki = k as i32;
                let kf = (k * fu) as i64;
                for &r in &rs {
                    let ri = r as i64;
                    let param = format!("k={k:03};r={r:09}");
                    let lhs_h = (self.h(kf + ri) - self.h(kf) * self.h(ri)).abs();
                    match regime {
                        Regime::Psi => {
                            let rhs = cp * (psi_n + 1.0).powi(ki - 1) * h_short.powi(ki) * eps;
                            out.push(self.report("prfat.a1", param.clone(), lhs_h, rhs, Some(regime), gate.clone()));
                            let lhs = (self.r(kf + ri) - self.r(kf) * self.h(ri)).abs();
                            let rhs = cp * ((psi_n + 1.0) * h_short).powi(ki - 1) * eps;
                            out.push(self.report("prfat.a3", param, lhs, rhs, Some(regime), gate.clone()));
                        }
                        Regime::Phi => {
                            let rhs = cp * (h_short + phi_n).powi(ki) * eps;
                            out.push(self.report("prfat.a2", param, lhs_h, rhs, Some(regime), gate.clone()));
                        }
                    }
                }
                let param = format!("k={k:03}");
                let hf = self.h(f);
                let lhs_h = (self.h(kf) - hf.powi(ki)).abs();
                let km1 = (k - 1) as f64;
                match regime {
                    Regime::Psi => {
                        let rhs = if k == 1 { 0.0 } else { cp * eps * km1 * (psi_n + 1.0).powi(ki - 2) * h_short.powi(ki - 1) };
                        out.push(self.report("prfat.b1", param.clone(), lhs_h, rhs, Some(regime), gate.clone()));
                        let lhs = (self.r(kf) - self.r(f) * hf.powi(ki - 1)).abs();
                        let rhs = if k == 1 { 0.0 } else { cp * eps * km1 * ((psi_n + 1.0) * h_short).powi(ki - 2) };
                        out.push(self.report("prfat.b3", param, lhs, rhs, Some(regime), gate.clone()));
                    }
                    Regime::Phi => {
                        let rhs = cp * eps * km1 * (h_short + phi_n).powi(ki - 1);
                        out.push(self.report("prfat.b2", param, lhs_h, rhs, Some(regime), gate.clone()));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Theorem branches on the pattern's own grid plus every supporting check.
    pub fn check_all(&self) -> Result<Vec<BoundReport>> {
        let (th, tr) = self.theorem_grid();
        let mut out = self.check_theorem_hitting(&th);
        out.extend(self.check_theorem_return(&tr));
        out.extend(self.check_supporting_results()?);
        Ok(out)
    }

    pub fn summary(&self) -> PatternSummary {
        PatternSummary {
            pattern: self.pattern.to_string(),
            n: self.n(),
            mu: self.mu,
            tau: self.profile.tau,
            n_a: self.profile.n_a.value,
            n_a_capped: self.profile.n_a.capped,
            rho: self.rho,
            regime: self.regime,
            epsilon: self.epsilon(self.regime).ok(),
            f_a: self.f_a(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternSummary {
    pub pattern: String,
    pub n: usize,
    pub mu: f64,
    pub tau: usize,
    pub n_a: usize,
    pub n_a_capped: bool,
    pub rho: f64,
    pub regime: Regime,
    pub epsilon: Option<f64>,
    pub f_a: f64,
}

/// Runs every pattern check over the given patterns in parallel; zero-measure
/// patterns are skipped. Output is sorted, so it does not depend on scheduling.
pub fn verify_patterns(mc: &ModelContext<'_>, patterns: &[Pattern]) -> Result<Vec<BoundReport>> {
    let per_pattern: Vec<Vec<BoundReport>> = patterns
        .par_iter()
        .map(|pat| {
            if mc.model.cylinder_measure(pat.symbols()) <= 0.0 {
                return Ok(vec![make_report("pattern", &mc.id, &pat.to_string(), "-", 0.0, 0.0, SLACK, None, Some("pattern has zero measure".into()))]);
            }
            PatternContext::new(mc, pat)?.check_all()
        })
        .collect::<Result<_>>()?;
    let mut out = mc.check_model();
    out.extend(per_pattern.into_iter().flatten());
    sort_reports(&mut out);
    Ok(out)
}

/// `ρ(A) = 1 - μ_A(σ^{-τ} A)`, computed from cylinder measures only.
pub fn rho_fast(model: &ProcessModel, pattern: &Pattern) -> Result<f64> {
    let tau = shortest_return(model, pattern)?;
    let a = pattern.symbols();
    let mu = model.cylinder_measure(a);
    Ok(1.0 - model.joint_measure(a, a, tau) / mu)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    pub model: String,
    /// `(n, min ρ over all patterns of length n, a minimiser)`.
    pub min_by_n: Vec<(usize, f64, String)>,
    /// Global estimate of `ρ_-` over the enumerated lengths.
    pub rho_minus: f64,
    pub sampled_seed: u64,
    /// `(n, ρ(A_n(x)), running minimum)` along one sampled point.
    pub sampled: Vec<(usize, f64, f64)>,
}

/// Potential-well positivity: enumeration minimum per length and a sampled path.
pub fn check_positivity(model_id: &str, model: &ProcessModel, n_enum: usize, n_sample: usize, seed: u64) -> Result<PositivityReport> {
    let k = model.alphabet();
    let work: u128 = (1..=n_enum).map(|n| limits::count(k, n) * (n * n) as u128).sum();
    limits::guard("positivity enumeration", work)?;
    let mut min_by_n = Vec::new();
    for n in 1..=n_enum {
        let mut best = (f64::INFINITY, String::new());
        for pat in Pattern::enumerate(n, k) {
            if model.cylinder_measure(pat.symbols()) > 0.0 {
                let r = rho_fast(model, &pat)?;
                if r < best.0 {
                    best = (r, pat.to_string());
                }
            }
        }
        min_by_n.push((n, best.0, best.1));
    }
    let rho_minus = min_by_n.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let x = model.sample_path(n_sample, seed);
    let mut sampled = Vec::new();
    let mut running = f64::INFINITY;
    for n in 1..=n_sample {
        let pat = Pattern::new(x[..n].to_vec(), k)?;
        let r = rho_fast(model, &pat)?;
        running = running.min(r);
        sampled.push((n, r, running));
    }
    Ok(PositivityReport {
        model: model_id.to_string(),
        min_by_n,
        rho_minus,
        sampled_seed: seed,
        sampled,
    })
}

/// `ρ(0^n)` for each `n`, computed both from the return iteration and from cylinders.
pub fn constant_pattern_wells(model: &ProcessModel, symbol: usize, ns: &[usize]) -> Result<Vec<(usize, f64, f64)>> {
    ns.iter()
        .map(|&n| {
            let pat = Pattern::constant(symbol, n, model.alphabet())?;
            let tau = shortest_return(model, &pat)?;
            let pw = Engine::new(model, &pat)?.potential_well(tau)?;
            Ok((n, pw.rho, pw.rho_complement))
        })
        .collect()
}

pub fn phi_zero_convention() -> f64 {
    phi_at(&MixingProfile {
        source: "",
        phi: vec![0.0],
        psi: vec![0.0],
        g0: Some(0),
        m: 1.0,
        summable_phi: true,
    }, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(regime: RegimeChoice) -> VerifyConfig {
        VerifyConfig {
            regime,
            n_enum: 10,
            mixing_n: 64,
            ..VerifyConfig::default()
        }
    }

    #[test]
    fn grid_shape() {
        let g = log_grid(1000, 20);
        assert_eq!(g[0], 1);
        assert_eq!(*g.last().unwrap(), 1000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(log_grid(1, 20), vec![1]);
    }

    #[test]
    fn iid_sharpness_example() {
        let m = ProcessModel::iid(vec![0.5, 0.5]).unwrap();
        let mc = ModelContext::new("iid", &m, cfg(RegimeChoice::Psi)).unwrap();
        let pc = PatternContext::new(&mc, &Pattern::constant(1, 10, 2).unwrap()).unwrap();
        let p: f64 = 0.5;
        let n = 10;
        let approx = pc.rho * (-pc.rho * pc.mu * ((n - 1) as f64 - 1.0)).exp();
        let err = (pc.r(n as i64 - 1) - approx).abs();
        let expect = (1.0 - p) * (1.0 - (-(1.0 - p) * p.powi(n) * (n as f64 - 2.0)).exp());
        assert!((err - expect).abs() < 1e-12);
        assert_eq!(pc.epsilon(Regime::Psi).unwrap(), 10.0 * 2f64.powi(-10));
    }

    #[test]
    fn theorem_at_tau_and_zero() {
        let m = ProcessModel::iid(vec![0.5, 0.5]).unwrap();
        let mc = ModelContext::new("iid", &m, cfg(RegimeChoice::Psi)).unwrap();
        let pc = PatternContext::new(&mc, &m.pattern("0110").unwrap()).unwrap();
        let h = pc.check_theorem_hitting(&[0]);
        assert_eq!(h[0].lhs, 0.0);
        let r = pc.check_theorem_return(&[pc.profile.tau]);
        assert!(r[0].lhs.abs() < 1e-15);
    }

    #[test]
    fn small_suite_passes() {
        let m = ProcessModel::markov(vec![vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap();
        for regime in [RegimeChoice::Psi, RegimeChoice::Phi] {
            let mc = ModelContext::new("sym", &m, cfg(regime)).unwrap();
            let pats: Vec<Pattern> = Pattern::enumerate(5, 2).collect();
            let reports = verify_patterns(&mc, &pats).unwrap();
            let failures: Vec<_> = reports.iter().filter(|r| r.is_failure()).collect();
            assert!(failures.is_empty(), "{:#?}", &failures[..failures.len().min(5)]);
            assert!(reports.iter().any(|r| r.check_id == "tail-approx.hitting.large-t" && r.status == Status::Pass));
        }
    }

    #[test]
    fn below_threshold_is_skipped_not_failed() {
        let m = ProcessModel::iid(vec![0.5, 0.5]).unwrap();
        let mc = ModelContext::new("iid", &m, cfg(RegimeChoice::Psi)).unwrap();
        let pc = PatternContext::new(&mc, &m.pattern("01").unwrap()).unwrap();
        let r = pc.check_theorem_hitting(&[1, 2]);
        assert!(r.iter().all(|x| matches!(&x.status, Status::Skipped(s) if s.starts_with("below-threshold"))));
    }

    #[test]
    fn positivity_iid() {
        let m = ProcessModel::iid(vec![0.5, 0.5]).unwrap();
        let rep = check_positivity("iid", &m, 8, 20, 3).unwrap();
        for (n, min, _) in &rep.min_by_n {
            assert!((min - 0.5).abs() < 1e-12, "n={n}");
        }
        assert_eq!(rep.sampled.len(), 20);
    }

    #[test]
    fn reports_serialize() {
        let r = make_report("x", "m", "01", "t=1", 0.5, f64::INFINITY, SLACK, Some(Regime::Psi), Some("why".into()));
        let s = crate::report::to_json(&r).unwrap();
        assert!(s.contains(r#""status":"skipped","reason":"why""#), "{s}");
        assert!(s.contains(r#""rhs":"inf""#));
        assert_eq!(phi_zero_convention(), 1.0);
    }
}
