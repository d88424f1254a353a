//! Random instance generation and dataset bookkeeping.
//!
//! Each instance draws its job count so that `jobs * machines` lands in the
//! dataset's operations range, integer processing times, per-operation
//! power, a half-sine solar profile per day and a daily sinusoidal grid
//! intensity. The horizon always has room for every permutation's zero-idle
//! schedule and at least `slack_factor` times the longest makespan seen over
//! a sample of random permutations.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cas::{self, CasError, Instance};
use crate::seeding;

#[derive(Debug, Error)]
pub enum InstgenError {
    #[error("dataset spec {name} is infeasible: {reason}")]
    SpecInfeasible { name: String, reason: String },
    #[error("dataset {name} has {available} non-test instances, {required} requested")]
    InsufficientInstances {
        name: String,
        available: usize,
        required: usize,
    },
    #[error(transparent)]
    Cas(#[from] CasError),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetRole {
    Known,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub machines: usize,
    pub horizon_days: u32,
    pub instance_count: usize,
    /// Inclusive bounds on `jobs * machines`.
    pub operations_range: (usize, usize),
    pub role: DatasetRole,
    pub seed: u64,
}

/// The ten dataset families: `(M, T, min ops, max ops, role)`.
const FAMILIES: [(usize, u32, usize, usize, DatasetRole); 10] = [
    (1, 1, 6, 15, DatasetRole::Known),
    (1, 3, 25, 40, DatasetRole::Known),
    (3, 1, 24, 54, DatasetRole::Known),
    (3, 3, 102, 183, DatasetRole::Known),
    (5, 1, 25, 65, DatasetRole::Unknown),
    (5, 3, 145, 255, DatasetRole::Unknown),
    (10, 1, 130, 200, DatasetRole::Unknown),
    (10, 3, 650, 830, DatasetRole::Unknown),
    (15, 1, 345, 465, DatasetRole::Unknown),
    (15, 3, 1590, 2085, DatasetRole::Unknown),
];

fn family_name(machines: usize, days: u32) -> String {
    format!("CAS-PFSP-M{machines}T{days}")
}

impl DatasetSpec {
    /// All ten benchmark families with 50 instances each.
    pub fn benchmark_suite(seed: u64) -> Vec<DatasetSpec> {
        FAMILIES
            .iter()
            .map(|&(m, t, lo, hi, role)| {
                let name = family_name(m, t);
                DatasetSpec {
                    seed: seeding::mix_str(seed, &name),
                    name,
                    machines: m,
                    horizon_days: t,
                    instance_count: 50,
                    operations_range: (lo, hi),
                    role,
                }
            })
            .collect()
    }

    pub fn known_suite(seed: u64) -> Vec<DatasetSpec> {
        Self::benchmark_suite(seed)
            .into_iter()
            .filter(|s| s.role == DatasetRole::Known)
            .collect()
    }

    /// Looks up a benchmark family by name, e.g. `CAS-PFSP-M3T1` or `M3T1`.
    pub fn by_name(name: &str, seed: u64) -> Option<DatasetSpec> {
        let full = if name.starts_with("CAS-PFSP-") {
            name.to_string()
        } else {
            format!("CAS-PFSP-{name}")
        };
        Self::benchmark_suite(seed).into_iter().find(|s| s.name == full)
    }

    /// Inclusive range of job counts compatible with the operations range.
    pub fn job_range(&self) -> Result<(usize, usize), InstgenError> {
        let infeasible = |reason: String| InstgenError::SpecInfeasible {
            name: self.name.clone(),
            reason,
        };
        if self.machines == 0 || self.horizon_days == 0 {
            return Err(infeasible("machines and horizon days must be positive".into()));
        }
        let (lo, hi) = self.operations_range;
        let jmin = lo.div_ceil(self.machines).max(1);
        let jmax = hi / self.machines;
        if jmin > jmax {
            return Err(infeasible(format!(
                "no job count gives {lo}..={hi} operations on {} machines",
                self.machines
            )));
        }
        Ok((jmin, jmax))
    }

    pub fn validate(&self) -> Result<(), InstgenError> {
        self.job_range()?;
        if let Some(&(.., role)) = FAMILIES
            .iter()
            .find(|(m, t, ..)| family_name(*m, *t) == self.name)
        {
            if role != self.role {
                return Err(InstgenError::SpecInfeasible {
                    name: self.name.clone(),
                    reason: format!("family role is {role:?}"),
                });
            }
        }
        Ok(())
    }
}

/// Generator constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    /// Slot length in hours; `None` picks the coarsest whole-minute slot
    /// that fits the horizon requirement of each instance.
    pub slot_hours: Option<f64>,
    pub p_max: u32,
    pub power_min: f64,
    pub power_max: f64,
    /// Solar peak relative to the mean demand over the horizon.
    pub renewable_peak_factor: f64,
    pub intensity_min: f64,
    pub intensity_max: f64,
    /// Hour of day at which grid intensity peaks.
    pub intensity_peak_hour: f64,
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    pub slack_factor: f64,
    pub makespan_samples: usize,
    pub max_attempts: usize,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            slot_hours: None,
            p_max: 8,
            power_min: 5.0,
            power_max: 50.0,
            renewable_peak_factor: 0.6,
            intensity_min: 80.0,
            intensity_max: 400.0,
            intensity_peak_hour: 19.0,
            sunrise_hour: 6.0,
            sunset_hour: 18.0,
            slack_factor: 1.5,
            makespan_samples: 50,
            max_attempts: 200,
        }
    }
}

/// Slots per hour tried when the slot length is automatic (whole minutes).
const SLOTS_PER_HOUR: [u32; 12] = [1, 2, 3, 4, 5, 6, 10, 12, 15, 20, 30, 60];

pub fn instance_id(dataset: &str, index: usize) -> String {
    format!("{dataset}/instance_{index}")
}

/// Generates instance `index` of `spec` from the stream `(spec.seed, index)`.
pub fn generate_instance(spec: &DatasetSpec, params: &GeneratorParams, index: usize) -> Result<Instance, InstgenError> {
    let (jmin, jmax) = spec.job_range()?;
    let mut rng = seeding::stream(spec.seed, &[index as u64]);
    let machines = spec.machines;
    let jobs = rng.random_range(jmin..=jmax);
    let hours = f64::from(spec.horizon_days) * 24.0;

    for _ in 0..params.max_attempts.max(1) {
        let proc: Vec<Vec<u32>> = (0..jobs)
            .map(|_| (0..machines).map(|_| rng.random_range(1..=params.p_max.max(1))).collect())
            .collect();
        let power: Vec<Vec<f64>> = (0..jobs)
            .map(|_| {
                (0..machines)
                    .map(|_| rng.random_range(params.power_min..=params.power_max))
                    .collect()
            })
            .collect();
        let mut probe = Instance {
            id: instance_id(&spec.name, index),
            machines,
            jobs,
            horizon_slots: 0,
            slot_hours: 1.0,
            horizon_days: spec.horizon_days,
            proc,
            power,
            renewable: Vec::new(),
            grid_intensity: Vec::new(),
        };
        let mut perm: Vec<usize> = (0..jobs).collect();
        let mut sampled = 0u64;
        for _ in 0..params.makespan_samples.max(1) {
            perm.shuffle(&mut rng);
            sampled = sampled.max(probe.makespan(&perm));
        }
        let required = ((params.slack_factor * sampled as f64).ceil() as u64)
            .max(probe.makespan_upper_bound())
            .max(probe.machine_loads().into_iter().max().unwrap_or(0));

        let slot_hours = match params.slot_hours {
            Some(h) => {
                let slots = (hours / h).round() as u64;
                (slots >= required).then_some(h)
            }
            None => SLOTS_PER_HOUR
                .iter()
                .find(|&&k| (hours as u64) * u64::from(k) >= required)
                .map(|&k| 1.0 / f64::from(k)),
        };
        let Some(slot_hours) = slot_hours else { continue };
        let horizon = (hours / slot_hours).round() as usize;
        probe.horizon_slots = horizon;
        probe.slot_hours = slot_hours;
        fill_profiles(&mut probe, params);
        probe.validate()?;
        return Ok(probe);
    }
    Err(InstgenError::SpecInfeasible {
        name: spec.name.clone(),
        reason: format!(
            "no horizon fit after {} attempts; use a finer slot length",
            params.max_attempts
        ),
    })
}

fn fill_profiles(inst: &mut Instance, params: &GeneratorParams) {
    let energy_slots: f64 = inst
        .proc
        .iter()
        .zip(&inst.power)
        .flat_map(|(p, w)| p.iter().zip(w).map(|(&p, &w)| f64::from(p) * w))
        .sum();
    let mean_demand = energy_slots / inst.horizon_slots as f64;
    let peak = params.renewable_peak_factor * mean_demand;
    let daylight = params.sunset_hour - params.sunrise_hour;
    let mid = 0.5 * (params.intensity_min + params.intensity_max);
    let amp = 0.5 * (params.intensity_max - params.intensity_min);
    inst.renewable = Vec::with_capacity(inst.horizon_slots);
    inst.grid_intensity = Vec::with_capacity(inst.horizon_slots);
    for t in 0..inst.horizon_slots {
        let hour = ((t as f64 + 0.5) * inst.slot_hours).rem_euclid(24.0);
        let phase = (hour - params.sunrise_hour) / daylight;
        let solar = if (0.0..=1.0).contains(&phase) { (PI * phase).sin().max(0.0) } else { 0.0 };
        inst.renewable.push(peak * solar);
        inst.grid_intensity
            .push(mid + amp * (2.0 * PI * (hour - params.intensity_peak_hour) / 24.0).cos());
    }
}

/// Generates the `spec.instance_count` evaluation instances.
pub fn generate_dataset(spec: &DatasetSpec, params: &GeneratorParams) -> Result<Vec<Instance>, InstgenError> {
    generate_range(spec, params, 0..spec.instance_count)
}

/// Generates instances with the given indices (in parallel, deterministic).
pub fn generate_range(
    spec: &DatasetSpec,
    params: &GeneratorParams,
    indices: std::ops::Range<usize>,
) -> Result<Vec<Instance>, InstgenError> {
    spec.validate()?;
    indices
        .into_par_iter()
        .map(|k| generate_instance(spec, params, k))
        .collect()
}

/// A generated dataset: evaluation instances first, then any extra
/// instances reserved for training.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn generate(spec: DatasetSpec, params: &GeneratorParams, extra_training: usize) -> Result<Self, InstgenError> {
        let instances = generate_range(&spec, params, 0..spec.instance_count + extra_training)?;
        Ok(Self { spec, instances })
    }

    pub fn test_instances(&self) -> &[Instance] {
        &self.instances[..self.spec.instance_count.min(self.instances.len())]
    }

    pub fn test_ids(&self) -> Vec<String> {
        self.test_instances().iter().map(|i| i.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn instance_path(dir: &Path, id: &str) -> PathBuf {
        let file = id.rsplit('/').next().unwrap_or(id);
        dir.join(format!("{file}.toml"))
    }

    /// Writes `<root>/<name>/instance_<k>.toml` and `<root>/<name>/manifest.toml`.
    pub fn save(&self, root: &Path, training_ids: &[String], generator: &GeneratorParams) -> Result<(), InstgenError> {
        let dir = root.join(&self.spec.name);
        fs::create_dir_all(&dir)?;
        for inst in &self.instances {
            cas::save_instance(inst, &Self::instance_path(&dir, &inst.id))?;
        }
        let manifest = DatasetManifest {
            spec: self.spec.clone(),
            generator: generator.clone(),
            instance_ids: self.instances.iter().map(|i| i.id.clone()).collect(),
            test_ids: self.test_ids(),
            training_ids: training_ids.to_vec(),
        };
        manifest.check_disjoint()?;
        let text = toml::to_string(&manifest).map_err(|e| InstgenError::Manifest(e.to_string()))?;
        crate::fsutil::write_atomic(&dir.join("manifest.toml"), text.as_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Self, DatasetManifest), InstgenError> {
        let manifest = DatasetManifest::load(&dir.join("manifest.toml"))?;
        let instances = manifest
            .instance_ids
            .iter()
            .map(|id| cas::load_instance(&Self::instance_path(dir, id)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((
            Self {
                spec: manifest.spec.clone(),
                instances,
            },
            manifest,
        ))
    }
}

/// Per-dataset record of the spec, seeds and the training/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub spec: DatasetSpec,
    pub generator: GeneratorParams,
    pub instance_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub training_ids: Vec<String>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, InstgenError> {
        let text = fs::read_to_string(path)?;
        let m: Self = toml::from_str(&text).map_err(|e| InstgenError::Manifest(e.to_string()))?;
        m.check_disjoint()?;
        Ok(m)
    }

    pub fn check_disjoint(&self) -> Result<(), InstgenError> {
        let test: BTreeSet<&String> = self.test_ids.iter().collect();
        if let Some(id) = self.training_ids.iter().find(|id| test.contains(id)) {
            return Err(InstgenError::Manifest(format!("training id {id} is also a test id")));
        }
        Ok(())
    }
}

/// Picks `per_dataset` training instances from each dataset, never from its
/// evaluation instances.
pub fn select_training_set(datasets: &[Dataset], per_dataset: usize, seed: u64) -> Result<Vec<String>, InstgenError> {
    let mut out = Vec::with_capacity(datasets.len() * per_dataset);
    for ds in datasets {
        let test: BTreeSet<String> = ds.test_ids().into_iter().collect();
        let mut pool: Vec<&String> = ds
            .instances
            .iter()
            .map(|i| &i.id)
            .filter(|id| !test.contains(*id))
            .collect();
        if pool.len() < per_dataset {
            return Err(InstgenError::InsufficientInstances {
                name: ds.spec.name.clone(),
                available: pool.len(),
                required: per_dataset,
            });
        }
        let mut rng = seeding::stream(seeding::mix_str(seed, &ds.spec.name), &[]);
        pool.shuffle(&mut rng);
        let mut chosen: Vec<String> = pool.into_iter().take(per_dataset).cloned().collect();
        chosen.sort();
        out.extend(chosen);
    }
    Ok(out)
}
