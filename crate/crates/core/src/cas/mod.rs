//! Carbon-aware permutation flow-shop instances: decoding random-key
//! chromosomes into schedules and charging their scope-2 emissions.

mod decode;
mod emissions;
mod instance;
pub mod io;

pub use decode::{decode_schedule, decode_sequence, Chromosome, Decoder, Schedule};
pub use emissions::{demand_profile, evaluate_emissions};
pub use instance::Instance;
pub use io::{load_instance, save_instance};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CasError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("infeasible instance: {detail} ({required} > {horizon} slots)")]
    InfeasibleInstance {
        required: u64,
        horizon: u64,
        detail: String,
    },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("parse error{}{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default(), if field.is_empty() { String::new() } else { format!(" in `{field}`") })]
    Parse {
        line: Option<usize>,
        field: String,
        message: String,
    },
    #[error("unsupported schema version {found}")]
    SchemaVersion { found: i64 },
    #[error("serialization failed: {0}")]
    Serialize(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
