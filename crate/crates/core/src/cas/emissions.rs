use super::decode::grid_emissions;
use super::{CasError, Instance, Schedule};

/// Scope-2 emissions (gCO2) of `schedule`.
///
/// Demand in slot `t` is the summed power of every operation running in `t`;
/// only the part not covered by on-site renewables is charged at the grid
/// intensity. Surplus renewable supply is lost.
pub fn evaluate_emissions(instance: &Instance, schedule: &Schedule) -> Result<f64, CasError> {
    schedule.validate(instance)?;
    Ok(grid_emissions(instance, &demand_profile(instance, schedule)))
}

/// Per-slot power demand (kW) of a valid schedule.
pub fn demand_profile(instance: &Instance, schedule: &Schedule) -> Vec<f64> {
    let mut demand = vec![0.0; instance.horizon_slots];
    for &j in &schedule.sequence {
        for m in 0..instance.machines {
            let s = schedule.start[j][m] as usize;
            let e = s + instance.proc[j][m] as usize;
            for d in &mut demand[s..e] {
                *d += instance.power[j][m];
            }
        }
    }
    demand
}
