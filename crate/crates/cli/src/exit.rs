//! Exit codes and error classification.

use std::io;

use carbon_dac::bench::BenchError;
use carbon_dac::cas::CasError;
use carbon_dac::config::ConfigError;
use carbon_dac::env::EnvError;
use carbon_dac::evolve::EvolveError;
use carbon_dac::instgen::InstgenError;
use carbon_dac::ppo::PpoError;
use carbon_dac::tuner::TunerError;

pub const SUCCESS: u8 = 0;
pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const RUNTIME: u8 = 3;

/// Bad or missing input detected by the CLI itself.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct DataError(pub String);

/// Self-test failures.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct RuntimeError(pub String);

fn io_code(e: &io::Error) -> u8 {
    match e.kind() {
        io::ErrorKind::NotFound | io::ErrorKind::InvalidData | io::ErrorKind::InvalidInput => DATA,
        _ => RUNTIME,
    }
}

fn cas_code(e: &CasError) -> u8 {
    match e {
        CasError::Io(e) => io_code(e),
        CasError::InvalidSchedule(_) | CasError::Serialize(_) => RUNTIME,
        _ => DATA,
    }
}

fn evolve_code(e: &EvolveError) -> u8 {
    match e {
        EvolveError::Cas(e) => cas_code(e),
        EvolveError::ParamsFile(_) | EvolveError::ParameterOutOfRange { .. } | EvolveError::InvalidConfig(_) => DATA,
    }
}

fn instgen_code(e: &InstgenError) -> u8 {
    match e {
        InstgenError::Cas(e) => cas_code(e),
        InstgenError::Io(e) => io_code(e),
        _ => DATA,
    }
}

fn env_code(e: &EnvError) -> u8 {
    match e {
        EnvError::Evolve(e) => evolve_code(e),
        EnvError::Io(e) => io_code(e),
        EnvError::Cache(_) | EnvError::EmptyPool | EnvError::DegenerateNormalization { .. } => DATA,
        _ => RUNTIME,
    }
}

fn ppo_code(e: &PpoError) -> u8 {
    match e {
        PpoError::Env(e) => env_code(e),
        PpoError::Io(e) => io_code(e),
        PpoError::Format(_) | PpoError::InvalidHyperparams(_) => DATA,
        _ => RUNTIME,
    }
}

fn code_of(e: &(dyn std::error::Error + 'static)) -> Option<u8> {
    if e.is::<DataError>() || e.is::<ConfigError>() {
        return Some(match e.downcast_ref::<ConfigError>() {
            Some(ConfigError::Io(io)) => io_code(io),
            _ => DATA,
        });
    }
    if e.is::<RuntimeError>() {
        return Some(RUNTIME);
    }
    if let Some(e) = e.downcast_ref::<io::Error>() {
        return Some(io_code(e));
    }
    if let Some(e) = e.downcast_ref::<CasError>() {
        return Some(cas_code(e));
    }
    if let Some(e) = e.downcast_ref::<EvolveError>() {
        return Some(evolve_code(e));
    }
    if let Some(e) = e.downcast_ref::<InstgenError>() {
        return Some(instgen_code(e));
    }
    if let Some(e) = e.downcast_ref::<EnvError>() {
        return Some(env_code(e));
    }
    if let Some(e) = e.downcast_ref::<PpoError>() {
        return Some(ppo_code(e));
    }
    if let Some(e) = e.downcast_ref::<TunerError>() {
        return Some(match e {
            TunerError::Evolve(e) => evolve_code(e),
            TunerError::Io(e) => io_code(e),
            TunerError::InvalidBudget(_) | TunerError::NotEnoughInstances { .. } => DATA,
        });
    }
    if let Some(e) = e.downcast_ref::<BenchError>() {
        return Some(match e {
            BenchError::Instgen(e) => instgen_code(e),
            BenchError::Evolve(e) => evolve_code(e),
            BenchError::Ppo(e) => ppo_code(e),
            BenchError::Io(e) => io_code(e),
            BenchError::DegenerateSamples | BenchError::EmptySample => RUNTIME,
            _ => DATA,
        });
    }
    None
}

/// Data errors map to 2, everything else to 3.
pub fn classify(err: &anyhow::Error) -> u8 {
    err.chain().find_map(code_of).unwrap_or(RUNTIME)
}
