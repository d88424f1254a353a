//! Instance files.
//!
//! One TOML document per instance. Numbers are written in shortest
//! round-trip form, so `load(save(x)) == x` holds bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use super::{CasError, Instance};

pub const SCHEMA_VERSION: u32 = 1;

const HEADER: &str = "\
# Carbon-aware permutation flow-shop instance.
# proc[j][m]         processing time of job j on machine m (slots)
# power[j][m]        power drawn while (j, m) runs (kW)
# renewable[t]       on-site renewable supply in slot t (kW)
# grid_intensity[t]  grid carbon intensity in slot t (gCO2/kWh)
# slot_hours         length of one slot (h)
";

#[derive(Serialize, Deserialize)]
struct Units {
    time: String,
    power: String,
    renewable: String,
    grid_intensity: String,
    slot_hours: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            time: "slots".into(),
            power: "kW".into(),
            renewable: "kW".into(),
            grid_intensity: "gCO2/kWh".into(),
            slot_hours: "h".into(),
        }
    }
}

#[derive(Serialize)]
struct InstanceOut<'a> {
    schema_version: u32,
    id: &'a str,
    machines: usize,
    jobs: usize,
    horizon_slots: usize,
    slot_hours: f64,
    horizon_days: u32,
    proc: &'a [Vec<u32>],
    power: &'a [Vec<f64>],
    renewable: &'a [f64],
    grid_intensity: &'a [f64],
    units: Units,
}

#[derive(Deserialize)]
struct Header {
    schema_version: Option<Spanned<i64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceIn {
    #[allow(dead_code)]
    schema_version: u32,
    id: String,
    machines: usize,
    jobs: usize,
    horizon_slots: usize,
    slot_hours: f64,
    horizon_days: u32,
    proc: Spanned<Vec<Spanned<Vec<u32>>>>,
    power: Spanned<Vec<Spanned<Vec<f64>>>>,
    renewable: Spanned<Vec<f64>>,
    grid_intensity: Spanned<Vec<f64>>,
    #[serde(default)]
    #[allow(dead_code)]
    units: Option<toml::Table>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Serialises an instance to its TOML text form.
pub fn instance_to_string(instance: &Instance) -> Result<String, CasError> {
    let out = InstanceOut {
        schema_version: SCHEMA_VERSION,
        id: &instance.id,
        machines: instance.machines,
        jobs: instance.jobs,
        horizon_slots: instance.horizon_slots,
        slot_hours: instance.slot_hours,
        horizon_days: instance.horizon_days,
        proc: &instance.proc,
        power: &instance.power,
        renewable: &instance.renewable,
        grid_intensity: &instance.grid_intensity,
        units: Units::default(),
    };
    let body = toml::to_string(&out).map_err(|e| CasError::Serialize(e.to_string()))?;
    Ok(format!("{HEADER}{body}"))
}

/// Parses and validates an instance document.
pub fn instance_from_str(text: &str) -> Result<Instance, CasError> {
    let parse_err = |e: toml::de::Error| CasError::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        field: String::new(),
        message: e.message().to_string(),
    };
    let header: Header = toml::from_str(text).map_err(parse_err)?;
    match header.schema_version {
        None => {
            return Err(CasError::Parse {
                line: None,
                field: "schema_version".into(),
                message: "missing field".into(),
            })
        }
        Some(v) if *v.get_ref() != i64::from(SCHEMA_VERSION) => {
            return Err(CasError::SchemaVersion { found: *v.get_ref() })
        }
        Some(_) => {}
    }
    let raw: InstanceIn = toml::from_str(text).map_err(parse_err)?;

    // Row-length errors carry the row's own line.
    let check_rows = |name: &str, rows: &[Spanned<Vec<u32>>], expected: usize| -> Result<(), CasError> {
        for (j, row) in rows.iter().enumerate() {
            if row.get_ref().len() != expected {
                return Err(CasError::Parse {
                    line: Some(line_of(text, row.span().start)),
                    field: format!("{name}[{j}]"),
                    message: format!("expected {expected} entries, found {}", row.get_ref().len()),
                });
            }
        }
        Ok(())
    };
    check_rows("proc", raw.proc.get_ref(), raw.machines)?;
    for (j, row) in raw.power.get_ref().iter().enumerate() {
        if row.get_ref().len() != raw.machines {
            return Err(CasError::Parse {
                line: Some(line_of(text, row.span().start)),
                field: format!("power[{j}]"),
                message: format!("expected {} entries, found {}", raw.machines, row.get_ref().len()),
            });
        }
    }
    let spans = [
        ("proc", raw.proc.span().start),
        ("power", raw.power.span().start),
        ("renewable", raw.renewable.span().start),
        ("grid_intensity", raw.grid_intensity.span().start),
    ];

    let instance = Instance {
        id: raw.id,
        machines: raw.machines,
        jobs: raw.jobs,
        horizon_slots: raw.horizon_slots,
        slot_hours: raw.slot_hours,
        horizon_days: raw.horizon_days,
        proc: raw.proc.into_inner().into_iter().map(Spanned::into_inner).collect(),
        power: raw.power.into_inner().into_iter().map(Spanned::into_inner).collect(),
        renewable: raw.renewable.into_inner(),
        grid_intensity: raw.grid_intensity.into_inner(),
    };
    if let Err(CasError::Parse { line: None, field, message }) = instance.validate_shape() {
        let root = field.split('[').next().unwrap_or("");
        let line = spans.iter().find(|(n, _)| *n == root).map(|(_, s)| line_of(text, *s));
        return Err(CasError::Parse { line, field, message });
    }
    instance.validate()?;
    Ok(instance)
}

pub fn save_instance(instance: &Instance, path: &Path) -> Result<(), CasError> {
    let text = instance_to_string(instance)?;
    crate::fsutil::write_atomic(path, text.as_bytes())?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<Instance, CasError> {
    let text = fs::read_to_string(path)?;
    instance_from_str(&text)
}
