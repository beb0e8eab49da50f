//! Run manifest: model hash, configuration and every derived constant.

use anyhow::Result;
use reclab::error_budget::{constants, formulas, n_prime, thresholds, Constants, Regime};
use reclab::mixing::mixing_profile;
use reclab::report::ser_ext;
use reclab::{ModelSpec, ProcessModel};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RegimeEntry {
    pub regime: Regime,
    pub formulas: [&'static str; 5],
    pub constants: Option<Constants>,
    pub n_prime: Option<usize>,
    pub n0: Option<usize>,
    pub note: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub model_path: String,
    pub model_sha256: String,
    pub model: ModelSpec,
    pub config: serde_json::Value,
    pub g0: Option<usize>,
    #[serde(serialize_with = "ser_ext")]
    pub m: f64,
    pub regimes: Vec<RegimeEntry>,
    pub mixing_note: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn build(command: &str, model_path: &str, model_bytes: &[u8], model: &ProcessModel, config: serde_json::Value, n_enum: usize) -> Result<Manifest> {
    let mut manifest = Manifest {
        tool: "reclab",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        model_path: model_path.to_string(),
        model_sha256: sha256_hex(model_bytes),
        model: model.spec(),
        config,
        g0: None,
        m: f64::INFINITY,
        regimes: Vec::new(),
        mixing_note: None,
    };
    let mixing = match mixing_profile(model, 256) {
        Ok(m) => m,
        Err(e) => {
            manifest.mixing_note = Some(e.to_string());
            return Ok(manifest);
        }
    };
    manifest.g0 = mixing.g0;
    manifest.m = mixing.m;
    for regime in [Regime::Psi, Regime::Phi] {
        let c = constants(regime, mixing.m).ok();
        let (n0, note) = match thresholds(model, &mixing, regime, n_enum) {
            Ok(t) => (t.n0, Some(t.note)),
            Err(e) => (None, Some(e.to_string())),
        };
        manifest.regimes.push(RegimeEntry {
            regime,
            formulas: formulas(regime),
            constants: c,
            n_prime: n_prime(regime, &mixing),
            n0,
            note,
        });
    }
    Ok(manifest)
}
