mod manifest;
mod spec;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use reclab::engine::{Engine, TailKind};
use reclab::error_budget::{self, error_budget, Regime};
use reclab::mixing::{mixing_oracle, mixing_profile, subexp_constants};
use reclab::montecarlo::{estimate_tail, EmpiricalTail};
use reclab::pattern::{overlap_profile, suffix_measures};
use reclab::report::{fmt_f64, to_json, to_json_pretty};
use reclab::verify::{self, ModelContext, PatternContext, RegimeChoice, Status, VerifyConfig};
use reclab::{Pattern, ProcessModel};
use serde::Serialize;
use serde_json::json;

use spec::{parse_range, GridSpec, PatternSpec};

#[derive(Parser, Debug)]
#[command(name = "reclab", version, about = "Hitting and return time statistics of patterns in mixing sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Output directory; every written path is relative to it.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Pattern lengths enumerated when certifying n0.
    #[arg(long, default_value_t = 12)]
    n_enum: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Overlap structure, potential well, Kac mean and error budget per pattern.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pattern: String,
        #[arg(long, default_value = "auto")]
        regime: String,
    },
    /// Exact hitting and return tails with their exponential approximants (CSV).
    Tails {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pattern: String,
        #[arg(long, default_value = "log:20")]
        tgrid: String,
    },
    /// φ and ψ mixing profiles, optionally with the cylinder oracle.
    Mixing {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 64)]
        nmax: usize,
        /// Past index and future length of the oracle, as I,L.
        #[arg(long)]
        oracle: Option<String>,
    },
    /// Error terms, thresholds and theorem constants.
    Budget {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pattern: String,
        #[arg(long, default_value = "auto")]
        regime: String,
    },
    /// Runs every bound check; exits nonzero if any non-skipped check fails.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "enumerate:8")]
        pattern: String,
        #[arg(long, default_value = "auto")]
        regime: String,
        /// Length of the mixing profile.
        #[arg(long, default_value_t = 256)]
        nmax: usize,
        #[arg(long, default_value = "log:20")]
        tgrid: String,
    },
    /// Monte Carlo tails with 3σ bands (CSV).
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pattern: String,
        #[arg(long, default_value_t = 100_000)]
        n_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "log:20")]
        grid: String,
    },
    /// One JSON line per pattern length for a constant or sampled pattern family.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// const:B or point:SEED,NMAX
        #[arg(long)]
        pattern: String,
        #[arg(long, default_value = "4..12")]
        n_range: String,
        #[arg(long, default_value = "auto")]
        regime: String,
    },
}

struct Ctx {
    model: ProcessModel,
    model_bytes: Vec<u8>,
    common: Common,
}

impl Ctx {
    fn load(common: &Common) -> Result<Self> {
        let bytes = fs::read(&common.model).with_context(|| format!("--model: cannot read {}", common.model.display()))?;
        let text = std::str::from_utf8(&bytes).context("--model: file is not UTF-8")?;
        let model = ProcessModel::from_json(text).map_err(|e| anyhow!("--model {}: {e}", common.model.display()))?;
        fs::create_dir_all(&common.out).with_context(|| format!("--out: cannot create {}", common.out.display()))?;
        Ok(Self {
            model,
            model_bytes: bytes,
            common: common.clone(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.common.out.join(name)
    }

    fn write(&self, name: &str, data: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, data).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    fn manifest(&self, command: &str, config: serde_json::Value) -> Result<()> {
        let m = manifest::build(
            command,
            &self.common.model.display().to_string(),
            &self.model_bytes,
            &self.model,
            config,
            self.common.n_enum,
        )?;
        self.write(&format!("{command}.manifest.json"), &to_json_pretty(&m)?)?;
        Ok(())
    }
}

fn regime_choice(text: &str) -> Result<RegimeChoice> {
    text.parse().map_err(|e| anyhow!("--regime: {e}"))
}

fn file_stem(pat: &Pattern) -> String {
    pat.to_string().replace(',', "-")
}

fn csv_row(cells: &[String]) -> String {
    let mut s = cells.join(",");
    s.push('\n');
    s
}

fn approximants(rho: f64, mu: f64, tau: usize, t: usize) -> (f64, f64) {
    let tf = t as f64;
    ((-rho * mu * tf).exp(), rho * (-rho * mu * (tf - tau as f64)).exp())
}

#[derive(Serialize)]
struct Analysis {
    pattern: String,
    n: usize,
    mu: f64,
    overlap: reclab::OverlapProfile,
    suffix_measures: reclab::SuffixMeasures,
    rho: f64,
    rho_complement: f64,
    mean_return: Option<reclab::engine::MeanReturn>,
    mean_return_error: Option<String>,
    budget: Option<error_budget::ErrorBudget>,
    budget_error: Option<String>,
}

/// Mixing profile and per-regime thresholds, computed once per run.
struct Budgets {
    mixing: reclab::Result<reclab::MixingProfile>,
    psi: Option<reclab::Result<error_budget::Thresholds>>,
    phi: Option<reclab::Result<error_budget::Thresholds>>,
}

impl Budgets {
    fn new(model: &ProcessModel, choice: RegimeChoice, n_enum: usize) -> Self {
        let mixing = mixing_profile(model, 256);
        let th = |r: Regime, wanted: bool| match (&mixing, wanted) {
            (Ok(m), true) => Some(error_budget::thresholds(model, m, r, n_enum)),
            _ => None,
        };
        let psi = th(Regime::Psi, choice != RegimeChoice::Phi);
        let phi = th(Regime::Phi, choice != RegimeChoice::Psi);
        Self { mixing, psi, phi }
    }

    fn regime(&self, choice: RegimeChoice, n: usize) -> reclab::Result<Regime> {
        Ok(match choice {
            RegimeChoice::Psi => Regime::Psi,
            RegimeChoice::Phi => Regime::Phi,
            RegimeChoice::Auto => error_budget::resolve_auto(self.mixing.as_ref().map_err(Clone::clone)?, n),
        })
    }

    fn thresholds(&self, r: Regime) -> reclab::Result<&error_budget::Thresholds> {
        let slot = match r {
            Regime::Psi => &self.psi,
            Regime::Phi => &self.phi,
        };
        match slot {
            Some(Ok(t)) => Ok(t),
            Some(Err(e)) => Err(e.clone()),
            None => Err(self.mixing.as_ref().err().cloned().unwrap_or_else(|| {
                reclab::Error::Precondition(format!("{} regime not requested", r.name()))
            })),
        }
    }

    fn budget(
        &self,
        choice: RegimeChoice,
        n: usize,
        mu: f64,
        overlap: &reclab::OverlapProfile,
        suffix: &reclab::SuffixMeasures,
    ) -> reclab::Result<(error_budget::ErrorBudget, &error_budget::Thresholds)> {
        let mixing = self.mixing.as_ref().map_err(Clone::clone)?;
        let th = self.thresholds(self.regime(choice, n)?)?;
        Ok((error_budget(mu, overlap, suffix, mixing, th)?, th))
    }
}

fn analyze_one(model: &ProcessModel, pat: &Pattern, regime: RegimeChoice, budgets: &Budgets) -> Result<Analysis> {
    let engine = Engine::new(model, pat)?;
    let overlap = overlap_profile(model, pat)?;
    let suffix = suffix_measures(model, pat);
    let pw = engine.potential_well(overlap.tau)?;
    let (mean_return, mean_return_error) = match engine.mean_return(None) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let (budget, budget_error) = match budgets.budget(regime, pat.len(), engine.mu(), &overlap, &suffix) {
        Ok((b, _)) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(Analysis {
        pattern: pat.to_string(),
        n: pat.len(),
        mu: engine.mu(),
        overlap,
        suffix_measures: suffix,
        rho: pw.rho,
        rho_complement: pw.rho_complement,
        mean_return,
        mean_return_error,
        budget,
        budget_error,
    })
}

fn cmd_analyze(common: &Common, pattern: &str, regime: &str) -> Result<ExitCode> {
    let ctx = Ctx::load(common)?;
    let spec = PatternSpec::parse(pattern)?;
    let regime = regime_choice(regime)?;
    let pats = spec.expand(&ctx.model)?;
    let budgets = Budgets::new(&ctx.model, regime, common.n_enum);
    let mut rows = Vec::new();
    for p in &pats {
        if ctx.model.cylinder_measure(p.symbols()) <= 0.0 {
            eprintln!("skipping {p}: zero measure");
            continue;
        }
        let a = analyze_one(&ctx.model, p, regime, &budgets)?;
        println!(
            "{}  mu={}  tau={}  n_A={}  rho={}  eps={}",
            a.pattern,
            fmt_f64(a.mu),
            a.overlap.tau,
            a.overlap.n_a.value,
            fmt_f64(a.rho),
            a.budget.as_ref().map(|b| fmt_f64(b.epsilon)).unwrap_or_else(|| "-".into())
        );
        rows.push(a);
    }
    ctx.write("analyze.json", &to_json_pretty(&rows)?)?;
    ctx.manifest("analyze", json!({"pattern": pattern, "regime": format!("{regime:?}").to_lowercase()}))?;
    Ok(ExitCode::SUCCESS)
}

fn tail_csv(model: &ProcessModel, pat: &Pattern, grid: &GridSpec) -> Result<String> {
    let e = Engine::new(model, pat)?;
    let tau = reclab::pattern::shortest_return(model, pat)?;
    let rho = e.potential_well(tau)?.rho;
    let ts = grid.resolve(rho, e.mu());
    let t_max = *ts.last().expect("grid is non-empty");
    let h = e.hitting_tail(t_max)?;
    let r = e.return_tail(t_max)?;
    let mut out = csv_row(&["t", "hitting_tail", "return_tail", "exp_approx_hitting", "exp_approx_return"].map(String::from));
    for &t in &ts {
        let (ah, ar) = approximants(rho, e.mu(), tau, t);
        out.push_str(&csv_row(&[t.to_string(), fmt_f64(h.at(t as i64)), fmt_f64(r.at(t as i64)), fmt_f64(ah), fmt_f64(ar)]));
    }
    Ok(out)
}

fn cmd_tails(common: &Common, pattern: &str, tgrid: &str) -> Result<ExitCode> {
    let ctx = Ctx::load(common)?;
    let pats = PatternSpec::parse(pattern)?.expand(&ctx.model)?;
    let grid = GridSpec::parse(tgrid).context("--tgrid")?;
    for p in &pats {
        if ctx.model.cylinder_measure(p.symbols()) <= 0.0 {
            eprintln!("skipping {p}: zero measure");
            continue;
        }
        let path = ctx.write(&format!("tails_{}.csv", file_stem(p)), &tail_csv(&ctx.model, p, &grid)?)?;
        println!("{}", path.display());
    }
    ctx.manifest("tails", json!({"pattern": pattern, "tgrid": tgrid}))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_mixing(common: &Common, nmax: usize, oracle: Option<&str>) -> Result<ExitCode> {
    let ctx = Ctx::load(common)?;
    let profile = mixing_profile(&ctx.model, nmax).map_err(|e| anyhow!("{e}"))?;
    let sub = subexp_constants(&ctx.model, &profile).ok();
    let oracle_out = match oracle {
        Some(spec) => {
            let (i, l) = spec.split_once(',').ok_or_else(|| anyhow!("--oracle {spec:?}: expected I,L"))?;
            let i: usize = i.parse().with_context(|| format!("--oracle {spec:?}: bad past index"))?;
            let l: usize = l.parse().with_context(|| format!("--oracle {spec:?}: bad future length"))?;
            Some(mixing_oracle(&ctx.model, nmax.min(8), i, l)?)
        }
        None => None,
    };
    println!("g0={:?} M={} summable_phi={}", profile.g0, fmt_f64(profile.m), profile.summable_phi);
    for n in 1..=nmax.min(8) {
        println!("n={n}  phi={}  psi={}", fmt_f64(profile.phi(n)), fmt_f64(profile.psi(n)));
    }
    let doc = json!({
        "profile": serde_json::from_str::<serde_json::Value>(&to_json(&profile)?)?,
        "subexp": sub.map(|s| serde_json::from_str::<serde_json::Value>(&to_json(&s).unwrap()).unwrap()),
        "oracle": oracle_out.map(|o| serde_json::from_str::<serde_json::Value>(&to_json(&o).unwrap()).unwrap()),
    });
    ctx.write("mixing.json", &to_json_pretty(&doc)?)?;
    ctx.manifest("mixing", json!({"nmax": nmax, "oracle": oracle}))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_budget(common: &Common, pattern: &str, regime: &str) -> Result<ExitCode> {
    let ctx = Ctx::load(common)?;
    let pats = PatternSpec::parse(pattern)?.expand(&ctx.model)?;
    let regime = regime_choice(regime)?;
    let budgets = Budgets::new(&ctx.model, regime, common.n_enum);
    if let Err(e) = &budgets.mixing {
        bail!("--model: {e}");
    }
    let mut rows = Vec::new();
    for p in &pats {
        let mu = ctx.model.cylinder_measure(p.symbols());
        if mu <= 0.0 {
            continue;
        }
        let overlap = overlap_profile(&ctx.model, p)?;
        let suffix = suffix_measures(&ctx.model, p);
        let (b, th) = budgets.budget(regime, p.len(), mu, &overlap, &suffix).map_err(|e| anyhow!("pattern {p}: {e}"))?;
        println!(
            "{p}  regime={}  eps={}  f_A={}  n'={:?}  n0={:?}",
            b.regime.name(),
            fmt_f64(b.epsilon),
            fmt_f64(b.f_a),
            b.n_prime,
            b.n0
        );
        rows.push(json!({
            "pattern": p.to_string(),
            "budget": serde_json::from_str::<serde_json::Value>(&to_json(&b)?)?,
            "thresholds": serde_json::from_str::<serde_json::Value>(&to_json(th)?)?,
        }));
    }
    ctx.write("budget.json", &to_json_pretty(&rows)?)?;
    ctx.manifest("budget", json!({"pattern": pattern, "regime": format!("{regime:?}").to_lowercase()}))?;
    Ok(ExitCode::SUCCESS)
}

fn grid_points(tgrid: &str) -> Result<(usize, f64)> {
    match GridSpec::parse(tgrid).context("--tgrid")? {
        GridSpec::Log { points, span } => Ok((points, span)),
        _ => bail!("--tgrid: verify uses a log grid per pattern (log:P[:SPAN])"),
    }
}

fn cmd_verify(common: &Common, pattern: &str, regime: &str, nmax: usize, tgrid: &str) -> Result<ExitCode> {
    let ctx = Ctx::load(common)?;
    let pats = PatternSpec::parse(pattern)?.expand(&ctx.model)?;
    let (t_points, t_span) = grid_points(tgrid)?;
    let config = VerifyConfig {
        regime: regime_choice(regime)?,
        t_points,
        t_span,
        n_enum: common.n_enum,
        mixing_n: nmax,
    };
    let id = model_id(&common.model);
    let mc = ModelContext::new(&id, &ctx.model, config).map_err(|e| anyhow!("{e}"))?;
    let reports = verify::verify_patterns(&mc, &pats)?;
    let mut jsonl = String::new();
    for r in &reports {
        jsonl.push_str(&to_json(r)?);
        jsonl.push('\n');
    }
    ctx.write("verify.jsonl", &jsonl)?;
    let summary = verify::summarize(&reports);
    let mut by_check: std::collections::BTreeMap<&str, (usize, usize, usize)> = Default::default();
    for r in &reports {
        let e = by_check.entry(&r.check_id).or_default();
        match r.status {
            Status::Pass => e.0 += 1,
            Status::Fail => e.1 += 1,
            Status::Skipped(_) => e.2 += 1,
        }
    }
    let mut table = format!("{:<28} {:>8} {:>8} {:>8}\n", "check", "pass", "fail", "skipped");
    for (k, (p, f, s)) in &by_check {
        table.push_str(&format!("{k:<28} {p:>8} {f:>8} {s:>8}\n"));
    }
    table.push_str(&format!("{:<28} {:>8} {:>8} {:>8}\n", "total", summary.passed, summary.failed, summary.skipped));
    print!("{table}");
    let rows: Vec<_> = by_check
        .iter()
        .map(|(k, (p, f, s))| json!({"check_id": k, "pass": p, "fail": f, "skipped": s}))
        .collect();
    ctx.write("verify_summary.json", &to_json_pretty(&json!({"summary": summary, "checks": rows}))?)?;
    ctx.manifest("verify", json!({"pattern": pattern, "regime": regime, "nmax": nmax, "tgrid": tgrid}))?;
    Ok(if summary.failed > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn model_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

fn cmd_simulate(common: &Common, pattern: &str, n_samples: usize, seed: u64, grid: &str) -> Result<ExitCode> {
    let ctx = Ctx::load(common)?;
    let pats = PatternSpec::parse(pattern)?.expand(&ctx.model)?;
    let grid_spec = grid;
    let grid = GridSpec::parse(grid).context("--grid")?;
    for p in &pats {
        if ctx.model.cylinder_measure(p.symbols()) <= 0.0 {
            eprintln!("skipping {p}: zero measure");
            continue;
        }
        let e = Engine::new(&ctx.model, p)?;
        let tau = reclab::pattern::shortest_return(&ctx.model, p)?;
        let rho = e.potential_well(tau)?.rho;
        let ts = grid.resolve(rho, e.mu());
        let h = estimate_tail(&ctx.model, p, TailKind::Hitting, n_samples, &ts, seed)?;
        let r = estimate_tail(&ctx.model, p, TailKind::Return, n_samples, &ts, seed)?;
        let path = ctx.write(&format!("simulate_{}.csv", file_stem(p)), &simulate_csv(&h, &r, rho, e.mu(), tau))?;
        println!("{}  censored: hitting {} return {}", path.display(), h.censored, r.censored);
    }
    ctx.manifest("simulate", json!({"pattern": pattern, "n_samples": n_samples, "seed": seed, "grid": grid_spec}))?;
    Ok(ExitCode::SUCCESS)
}

fn simulate_csv(h: &EmpiricalTail, r: &EmpiricalTail, rho: f64, mu: f64, tau: usize) -> String {
    let mut out = csv_row(
        &["t", "hitting_tail", "return_tail", "exp_approx_hitting", "exp_approx_return", "hitting_band", "return_band"].map(String::from),
    );
    for (i, &t) in h.t_grid.iter().enumerate() {
        let (ah, ar) = approximants(rho, mu, tau, t);
        out.push_str(&csv_row(&[
            t.to_string(),
            fmt_f64(h.values[i]),
            fmt_f64(r.values[i]),
            fmt_f64(ah),
            fmt_f64(ar),
            fmt_f64(h.band[i]),
            fmt_f64(r.band[i]),
        ]));
    }
    out
}

fn min_margin(reports: &[verify::BoundReport], prefix: &str) -> Option<f64> {
    reports
        .iter()
        .filter(|r| r.check_id.starts_with(prefix) && !r.is_skipped())
        .map(|r| r.margin)
        .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.min(m))))
}

fn cmd_sweep(common: &Common, pattern: &str, n_range: &str, regime: &str) -> Result<ExitCode> {
    let ctx = Ctx::load(common)?;
    let (a, b) = parse_range(n_range)?;
    let spec = PatternSpec::parse(pattern)?;
    let family: Vec<Pattern> = match spec {
        PatternSpec::Constant { symbol, .. } => (a..=b).map(|n| Pattern::constant(symbol, n, ctx.model.alphabet())).collect::<reclab::Result<_>>()?,
        PatternSpec::Point { seed, .. } => {
            let x = ctx.model.sample_path(b, seed);
            (a..=b).map(|n| Pattern::new(x[..n].to_vec(), ctx.model.alphabet())).collect::<reclab::Result<_>>()?
        }
        _ => bail!("--pattern: sweep takes const:B or point:SEED,NMAX"),
    };
    let config = VerifyConfig {
        regime: regime_choice(regime)?,
        n_enum: common.n_enum,
        ..VerifyConfig::default()
    };
    let id = model_id(&common.model);
    let mc = ModelContext::new(&id, &ctx.model, config).map_err(|e| anyhow!("{e}"))?;
    let mut failed = false;
    let mut lines = String::new();
    for p in &family {
        if ctx.model.cylinder_measure(p.symbols()) <= 0.0 {
            continue;
        }
        let pc = PatternContext::new(&mc, p)?;
        let reports = pc.check_all()?;
        let s = verify::summarize(&reports);
        failed |= s.failed > 0;
        let line = json!({
            "n": p.len(),
            "summary": serde_json::from_str::<serde_json::Value>(&to_json(&pc.summary())?)?,
            "min_margin_hitting": min_margin(&reports, "tail-approx.hitting").map(fmt_f64),
            "min_margin_return": min_margin(&reports, "tail-approx.return").map(fmt_f64),
            "min_margin_supporting": fmt_f64(reports.iter().filter(|r| !r.check_id.starts_with("tail-approx") && !r.is_skipped()).map(|r| r.margin).fold(f64::INFINITY, f64::min)),
            "checks": s,
        });
        lines.push_str(&to_json(&line)?);
        lines.push('\n');
        let eps = pc.summary().epsilon.map(fmt_f64).unwrap_or_else(|| "-".into());
        println!("n={:<3} rho={}  eps={}  fail={} skipped={}", p.len(), fmt_f64(pc.rho), eps, s.failed, s.skipped);
    }
    let mut f = fs::File::create(ctx.path("sweep.jsonl")).context("writing sweep.jsonl")?;
    f.write_all(lines.as_bytes())?;
    ctx.manifest("sweep", json!({"pattern": pattern, "n_range": n_range, "regime": regime}))?;
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Analyze { common, pattern, regime } => cmd_analyze(common, pattern, regime),
        Command::Tails { common, pattern, tgrid } => cmd_tails(common, pattern, tgrid),
        Command::Mixing { common, nmax, oracle } => cmd_mixing(common, *nmax, oracle.as_deref()),
        Command::Budget { common, pattern, regime } => cmd_budget(common, pattern, regime),
        Command::Verify { common, pattern, regime, nmax, tgrid } => cmd_verify(common, pattern, regime, *nmax, tgrid),
        Command::Simulate { common, pattern, n_samples, seed, grid } => cmd_simulate(common, pattern, *n_samples, *seed, grid),
        Command::Sweep { common, pattern, n_range, regime } => cmd_sweep(common, pattern, n_range, regime),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
