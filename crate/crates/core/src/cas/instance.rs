use serde::{Deserialize, Serialize};

use super::CasError;

/// A carbon-aware permutation flow-shop instance.
///
/// Time is discretised into `horizon_slots` slots of `slot_hours` hours each.
/// `proc[j][m]` is the number of slots operation `(j, m)` occupies and
/// `power[j][m]` the constant draw (kW) while it runs. `renewable[t]` is the
/// on-site supply (kW) and `grid_intensity[t]` the grid carbon intensity
/// (gCO2/kWh) during slot `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub machines: usize,
    pub jobs: usize,
    pub horizon_slots: usize,
    pub slot_hours: f64,
    pub horizon_days: u32,
    pub proc: Vec<Vec<u32>>,
    pub power: Vec<Vec<f64>>,
    pub renewable: Vec<f64>,
    pub grid_intensity: Vec<f64>,
}

impl Instance {
    /// Number of operations, `jobs * machines`.
    pub fn operations(&self) -> usize {
        self.jobs * self.machines
    }

    /// Per-machine total processing load in slots.
    pub fn machine_loads(&self) -> Vec<u64> {
        (0..self.machines)
            .map(|m| self.proc.iter().map(|row| u64::from(row[m])).sum())
            .collect()
    }

    /// Upper bound on the zero-idle makespan of *every* job permutation.
    ///
    /// A critical path in a permutation flow shop covers `jobs + machines - 1`
    /// operations, at least one per job. Charging each job its longest
    /// operation plus `machines - 1` extra cells of the global maximum
    /// dominates every such path.
    pub fn makespan_upper_bound(&self) -> u64 {
        let per_job: u64 = self
            .proc
            .iter()
            .map(|row| u64::from(row.iter().copied().max().unwrap_or(0)))
            .sum();
        let global = self
            .proc
            .iter()
            .flat_map(|row| row.iter().copied())
            .max()
            .unwrap_or(0);
        per_job + (self.machines.saturating_sub(1) as u64) * u64::from(global)
    }

    /// Zero-idle (semi-active) makespan of `sequence`.
    pub fn makespan(&self, sequence: &[usize]) -> u64 {
        let mut completion = vec![0u64; self.machines];
        for &j in sequence {
            let mut prev = 0u64;
            for (m, c) in completion.iter_mut().enumerate() {
                let start = prev.max(*c);
                *c = start + u64::from(self.proc[j][m]);
                prev = *c;
            }
        }
        completion.last().copied().unwrap_or(0)
    }

    /// Checks dimensions, value domains and the horizon feasibility bound.
    pub fn validate(&self) -> Result<(), CasError> {
        self.validate_shape()?;
        self.validate_feasibility()
    }

    pub(crate) fn validate_shape(&self) -> Result<(), CasError> {
        let field = |field: &str, msg: String| CasError::Parse {
            line: None,
            field: field.to_string(),
            message: msg,
        };
        if self.machines == 0 {
            return Err(field("machines", "must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(field("jobs", "must be positive".into()));
        }
        if self.horizon_slots == 0 {
            return Err(field("horizon_slots", "must be positive".into()));
        }
        if self.horizon_days == 0 {
            return Err(field("horizon_days", "must be positive".into()));
        }
        if !(self.slot_hours.is_finite() && self.slot_hours > 0.0) {
            return Err(field("slot_hours", format!("must be a positive real, got {}", self.slot_hours)));
        }
        if self.proc.len() != self.jobs {
            return Err(field("proc", format!("expected {} rows, found {}", self.jobs, self.proc.len())));
        }
        if self.power.len() != self.jobs {
            return Err(field("power", format!("expected {} rows, found {}", self.jobs, self.power.len())));
        }
        for (j, row) in self.proc.iter().enumerate() {
            if row.len() != self.machines {
                return Err(field(
                    &format!("proc[{j}]"),
                    format!("expected {} entries, found {}", self.machines, row.len()),
                ));
            }
            if let Some(m) = row.iter().position(|&p| p == 0) {
                return Err(field(&format!("proc[{j}][{m}]"), "processing time must be positive".into()));
            }
        }
        for (j, row) in self.power.iter().enumerate() {
            if row.len() != self.machines {
                return Err(field(
                    &format!("power[{j}]"),
                    format!("expected {} entries, found {}", self.machines, row.len()),
                ));
            }
            if let Some(m) = row.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(field(&format!("power[{j}][{m}]"), "must be a finite non-negative real".into()));
            }
        }
        for (name, v) in [("renewable", &self.renewable), ("grid_intensity", &self.grid_intensity)] {
            if v.len() != self.horizon_slots {
                return Err(field(
                    name,
                    format!("expected {} entries, found {}", self.horizon_slots, v.len()),
                ));
            }
            if let Some(t) = v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(field(&format!("{name}[{t}]"), "must be a finite non-negative real".into()));
            }
        }
        Ok(())
    }

    fn validate_feasibility(&self) -> Result<(), CasError> {
        let horizon = self.horizon_slots as u64;
        for (m, load) in self.machine_loads().into_iter().enumerate() {
            if load > horizon {
                return Err(CasError::InfeasibleInstance {
                    required: load,
                    horizon,
                    detail: format!("machine {m} load exceeds the horizon"),
                });
            }
        }
        let bound = self.makespan_upper_bound();
        if bound > horizon {
            return Err(CasError::InfeasibleInstance {
                required: bound,
                horizon,
                detail: "worst-case zero-idle makespan exceeds the horizon".into(),
            });
        }
        Ok(())
    }
}
