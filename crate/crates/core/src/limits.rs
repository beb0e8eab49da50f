//! Work budget shared by enumerations and exact iterations.

use crate::error::{Error, Result};

pub const BUDGET_ENV: &str = "RECLAB_BUDGET";
pub const DEFAULT_BUDGET: u128 = 1 << 36;

/// The active budget: `RECLAB_BUDGET` when set to a positive integer, else the default.
pub fn budget() -> u128 {
    std::env::var(BUDGET_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u128>().ok())
        .filter(|&b| b > 0)
        .unwrap_or(DEFAULT_BUDGET)
}

pub fn guard(what: &'static str, requested: u128) -> Result<()> {
    let budget = budget();
    if requested > budget {
        Err(Error::BudgetExceeded {
            what,
            requested,
            budget,
        })
    } else {
        Ok(())
    }
}

/// `base^exp`, saturating.
pub fn count(base: usize, exp: usize) -> u128 {
    (base as u128).checked_pow(exp as u32).unwrap_or(u128::MAX)
}
