pub mod automaton;
pub mod engine;
pub mod error;
pub mod error_budget;
pub mod limits;
pub mod mixing;
pub mod model;
pub mod montecarlo;
pub mod pattern;
pub mod report;
pub mod verify;

pub use engine::{Engine, TailCurve, TailKind};
pub use error::{Error, Result};
pub use mixing::MixingProfile;
pub use model::{ModelKind, ModelSpec, Pattern, ProcessModel, SourceChain};
pub use pattern::{OverlapProfile, SuffixMeasures};
