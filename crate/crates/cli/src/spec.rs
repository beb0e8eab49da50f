//! Parsing of pattern and grid specifications.

use anyhow::{anyhow, bail, Context, Result};
use reclab::{Pattern, ProcessModel};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternSpec {
    Explicit(String),
    Enumerate(usize),
    /// Prefixes `A_n(x)`, `n = 1..=nmax`, of a sampled point `x`.
    Point { seed: u64, nmax: usize },
    Constant { symbol: usize, n: Option<usize> },
}

impl PatternSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let field = || format!("--pattern {text:?}");
        if let Some(rest) = text.strip_prefix("enumerate:") {
            let n = rest.parse().with_context(|| format!("{}: expected enumerate:N", field()))?;
            if n == 0 {
                bail!("{}: length must be positive", field());
            }
            return Ok(Self::Enumerate(n));
        }
        if let Some(rest) = text.strip_prefix("point:") {
            let (s, n) = rest.split_once(',').ok_or_else(|| anyhow!("{}: expected point:SEED,NMAX", field()))?;
            return Ok(Self::Point {
                seed: s.trim().parse().with_context(|| format!("{}: bad seed", field()))?,
                nmax: n.trim().parse().with_context(|| format!("{}: bad nmax", field()))?,
            });
        }
        if let Some(rest) = text.strip_prefix("const:") {
            let (b, n) = match rest.split_once(',') {
                Some((b, n)) => (b, Some(n.trim().parse().with_context(|| format!("{}: bad length", field()))?)),
                None => (rest, None),
            };
            return Ok(Self::Constant {
                symbol: b.trim().parse().with_context(|| format!("{}: bad symbol", field()))?,
                n,
            });
        }
        if text.is_empty() {
            bail!("{}: empty pattern", field());
        }
        Ok(Self::Explicit(text.to_string()))
    }

    pub fn expand(&self, model: &ProcessModel) -> Result<Vec<Pattern>> {
        let k = model.alphabet();
        Ok(match self {
            Self::Explicit(s) => vec![model.pattern(s).map_err(|e| anyhow!("--pattern: {e}"))?],
            Self::Enumerate(n) => {
                reclab::limits::guard("pattern enumeration", reclab::limits::count(k, *n))?;
                Pattern::enumerate(*n, k).collect()
            }
            Self::Point { seed, nmax } => {
                let x = model.sample_path(*nmax, *seed);
                (1..=*nmax).map(|n| Pattern::new(x[..n].to_vec(), k)).collect::<reclab::Result<_>>()?
            }
            Self::Constant { symbol, n: Some(n) } => vec![Pattern::constant(*symbol, *n, k)?],
            Self::Constant { n: None, .. } => bail!("--pattern: const:B needs a length here (const:B,N)"),
        })
    }
}

/// Time grid: explicit list, inclusive range, or log-spaced points over `[1, span/(ρμ)]`.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    List(Vec<usize>),
    Range(usize, usize),
    Log { points: usize, span: f64 },
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let field = || format!("grid {text:?}");
        if let Some(rest) = text.strip_prefix("log:") {
            let (p, s): (&str, f64) = match rest.split_once(':') {
                Some((p, s)) => (p, s.parse().with_context(|| format!("{}: bad span", field()))?),
                None => (rest, 20.0),
            };
            let points: usize = p.parse().with_context(|| format!("{}: bad point count", field()))?;
            if points == 0 || s.is_nan() || s <= 0.0 {
                bail!("{}: point count and span must be positive", field());
            }
            return Ok(Self::Log { points, span: s });
        }
        if let Some((a, b)) = text.split_once("..") {
            let a = a.parse().with_context(|| format!("{}: bad range start", field()))?;
            let b = b.parse().with_context(|| format!("{}: bad range end", field()))?;
            if a > b {
                bail!("{}: empty range", field());
            }
            return Ok(Self::Range(a, b));
        }
        let v = text
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{}: expected N,N,..., A..B or log:P[:SPAN]", field()))?;
        if v.is_empty() {
            bail!("{}: empty list", field());
        }
        Ok(Self::List(v))
    }

    pub fn resolve(&self, rho: f64, mu: f64) -> Vec<usize> {
        let mut v = match self {
            Self::List(v) => v.clone(),
            Self::Range(a, b) => (*a..=*b).collect(),
            Self::Log { points, span } => reclab::verify::log_grid((span / (rho * mu)).ceil() as usize, *points),
        };
        v.sort_unstable();
        v.dedup();
        v
    }
}

pub fn parse_range(text: &str) -> Result<(usize, usize)> {
    let (a, b) = text.split_once("..").ok_or_else(|| anyhow!("--n-range {text:?}: expected A..B"))?;
    let a: usize = a.parse().with_context(|| format!("--n-range {text:?}: bad start"))?;
    let b: usize = b.parse().with_context(|| format!("--n-range {text:?}: bad end"))?;
    if a == 0 || a > b {
        bail!("--n-range {text:?}: need 1 <= A <= B");
    }
    Ok((a, b))
}
