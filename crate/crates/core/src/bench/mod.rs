//! Experiment harness: runs the algorithm variants over datasets, aggregates
//! results per dataset and writes comparison tables and convergence data.
//!
//! Every run leaves a JSON record under `<out>/runs/`, written atomically;
//! a re-started experiment skips runs whose record is already present.

mod report;
mod stats;

pub use report::{convergence_to_csv, emit_reports, format_sci, pvalues_to_csv, table_to_csv, table_to_text};
pub use stats::{rank_sum_exact, rank_sum_normal, rank_sum_p, wilcoxon_rank_sum, RankSumTest, EXACT_MAX_TOTAL};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cas::Instance;
use crate::env::{run_controlled, EnvError};
use crate::evolve::{run_static, DynamicParams, EaConfig, EvolveError};
use crate::fsutil::write_atomic;
use crate::instgen::{Dataset, InstgenError};
use crate::ppo::{PpoError, TrainedPolicy};
use crate::seeding;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("incomplete results; missing or failed runs: {}", .0.join(", "))]
    IncompleteResults(Vec<String>),
    #[error("all values in both samples are identical")]
    DegenerateSamples,
    #[error("rank-sum samples must be non-empty")]
    EmptySample,
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Instgen(#[from] InstgenError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// p-value threshold for the significance flag.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Default,
    Tuned,
    Drl,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Default, Variant::Tuned, Variant::Drl];

    pub fn key(self) -> &'static str {
        match self {
            Variant::Default => "default",
            Variant::Tuned => "tuned",
            Variant::Drl => "drl",
        }
    }

    /// Row label in tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Default => "MA default",
            Variant::Tuned => "MA tuned",
            Variant::Drl => "MA-DRL",
        }
    }

    fn code(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl std::str::FromStr for Variant {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.key() == s)
            .ok_or_else(|| BenchError::InvalidPlan(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Dataset directories as written by the generator.
    pub datasets: Vec<PathBuf>,
    pub variants: Vec<Variant>,
    pub repetitions: usize,
    pub base_seed: u64,
    pub population_size: usize,
    pub max_generations: usize,
    /// Evaluate only the first `n` test instances of each dataset.
    #[serde(default)]
    pub instance_limit: Option<usize>,
    #[serde(default)]
    pub tuned_params: Option<PathBuf>,
    #[serde(default)]
    pub policy: Option<PathBuf>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.repetitions == 0 {
            return Err(BenchError::InvalidPlan("repetitions must be at least 1".into()));
        }
        if self.variants.is_empty() || self.datasets.is_empty() {
            return Err(BenchError::InvalidPlan("plan needs at least one dataset and variant".into()));
        }
        let mut seen = self.variants.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.variants.len() {
            return Err(BenchError::InvalidPlan("duplicate variant".into()));
        }
        EaConfig::new(self.population_size, self.max_generations, 0).validate()?;
        let need = |flag: bool, path: &Option<PathBuf>, what: &str| -> Result<(), BenchError> {
            if !flag {
                return Ok(());
            }
            match path {
                Some(p) if p.is_file() => Ok(()),
                Some(p) => Err(BenchError::MissingArtifact(format!("{what} {}", p.display()))),
                None => Err(BenchError::MissingArtifact(format!("{what} path not set"))),
            }
        };
        need(self.variants.contains(&Variant::Tuned), &self.tuned_params, "tuned parameter file")?;
        need(self.variants.contains(&Variant::Drl), &self.policy, "policy file")?;
        for d in &self.datasets {
            if !d.join("manifest.toml").is_file() {
                return Err(BenchError::MissingArtifact(format!("dataset manifest in {}", d.display())));
            }
        }
        Ok(())
    }

    fn ea_config(&self, seed: u64) -> EaConfig {
        EaConfig::new(self.population_size, self.max_generations, seed)
    }
}

/// Identity of one run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunKey {
    pub dataset: String,
    pub instance: String,
    pub variant: Variant,
    pub repetition: usize,
}

impl RunKey {
    pub fn seed(&self, base: u64) -> u64 {
        let s = seeding::mix_str(seeding::mix_str(base, &self.dataset), &self.instance);
        seeding::derive(s, &[self.variant.code(), self.repetition as u64])
    }

    fn file_name(&self) -> String {
        let inst = self.instance.rsplit('/').next().unwrap_or(&self.instance);
        format!("{inst}__{}__r{}.json", self.variant, self.repetition)
    }

    pub fn record_path(&self, out_dir: &Path) -> PathBuf {
        out_dir.join("runs").join(&self.dataset).join(self.file_name())
    }
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/r{}", self.instance, self.variant, self.repetition)
    }
}

/// Outcome of one run; `error` is set when the run failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub key: RunKey,
    pub seed: u64,
    /// `None` when the run failed.
    pub best_fitness: Option<f64>,
    /// Best fitness after each generation, initial population first.
    pub trace: Vec<f64>,
    pub error: Option<String>,
}

impl RunRecord {
    fn load(path: &Path) -> Option<Self> {
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn save(&self, path: &Path) -> Result<(), BenchError> {
        let text = serde_json::to_string(self).map_err(|e| BenchError::Format(e.to_string()))?;
        write_atomic(path, text.as_bytes())?;
        Ok(())
    }
}

struct Artifacts {
    tuned: Option<DynamicParams>,
    policy: Option<TrainedPolicy>,
}

fn run_one(instance: &Instance, config: &EaConfig, variant: Variant, art: &Artifacts) -> Result<Vec<f64>, String> {
    let result = match variant {
        Variant::Default => run_static(instance, config, &DynamicParams::DEFAULT).map_err(|e| e.to_string()),
        Variant::Tuned => {
            let p = art.tuned.as_ref().ok_or("tuned parameters not loaded")?;
            run_static(instance, config, p).map_err(|e| e.to_string())
        }
        Variant::Drl => {
            let policy = art.policy.as_ref().ok_or("policy not loaded")?;
            run_controlled(instance, config, |obs| {
                policy.action(obs).map_err(|e| EnvError::Controller(e.to_string()))
            })
            .map_err(|e| e.to_string())
        }
    }?;
    Ok(result.per_generation_best())
}

/// Loads the plan's datasets, keeping the requested test instances.
pub fn load_plan_datasets(plan: &ExperimentPlan) -> Result<Vec<(String, Vec<Instance>)>, BenchError> {
    plan.datasets
        .iter()
        .map(|dir| {
            let (ds, _) = Dataset::load(dir)?;
            let mut test = ds.test_instances().to_vec();
            if let Some(n) = plan.instance_limit {
                test.truncate(n);
            }
            Ok((ds.spec.name.clone(), test))
        })
        .collect()
}

/// Every run of the plan in report order.
pub fn plan_keys(plan: &ExperimentPlan, datasets: &[(String, Vec<Instance>)]) -> Vec<RunKey> {
    let mut keys = Vec::new();
    for (name, instances) in datasets {
        for inst in instances {
            for &variant in &plan.variants {
                for repetition in 0..plan.repetitions {
                    keys.push(RunKey {
                        dataset: name.clone(),
                        instance: inst.id.clone(),
                        variant,
                        repetition,
                    });
                }
            }
        }
    }
    keys
}

/// Runs every pending run of `plan` on at most `workers` threads and
/// returns all records (previous and new) in plan order.
pub fn run_experiment(plan: &ExperimentPlan, out_dir: &Path, workers: usize) -> Result<Vec<RunRecord>, BenchError> {
    run_experiment_with_progress(plan, out_dir, workers, |_| {})
}

pub fn run_experiment_with_progress<F: Fn(&RunRecord) + Sync>(
    plan: &ExperimentPlan,
    out_dir: &Path,
    workers: usize,
    progress: F,
) -> Result<Vec<RunRecord>, BenchError> {
    plan.validate()?;
    let art = Artifacts {
        tuned: match (&plan.tuned_params, plan.variants.contains(&Variant::Tuned)) {
            (Some(p), true) => Some(DynamicParams::load(p)?),
            _ => None,
        },
        policy: match (&plan.policy, plan.variants.contains(&Variant::Drl)) {
            (Some(p), true) => Some(TrainedPolicy::load(p)?),
            _ => None,
        },
    };
    let datasets = load_plan_datasets(plan)?;
    let lookup: BTreeMap<&str, &Instance> = datasets
        .iter()
        .flat_map(|(_, v)| v.iter().map(|i| (i.id.as_str(), i)))
        .collect();
    let keys = plan_keys(plan, &datasets);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| BenchError::InvalidPlan(e.to_string()))?;
    pool.install(|| {
        keys.par_iter()
            .map(|key| -> Result<RunRecord, BenchError> {
                let path = key.record_path(out_dir);
                let seed = key.seed(plan.base_seed);
                if let Some(done) = RunRecord::load(&path) {
                    if done.key == *key && done.seed == seed && done.error.is_none() {
                        return Ok(done);
                    }
                }
                let instance = lookup[key.instance.as_str()];
                let record = match run_one(instance, &plan.ea_config(seed), key.variant, &art) {
                    Ok(trace) => RunRecord {
                        key: key.clone(),
                        seed,
                        best_fitness: trace.last().copied(),
                        trace,
                        error: None,
                    },
                    Err(e) => RunRecord {
                        key: key.clone(),
                        seed,
                        best_fitness: None,
                        trace: Vec::new(),
                        error: Some(e),
                    },
                };
                record.save(&path)?;
                progress(&record);
                Ok(record)
            })
            .collect()
    })
}

/// Loads whatever run records exist under `out_dir/runs`, sorted by key.
pub fn load_records(out_dir: &Path) -> Result<Vec<RunRecord>, BenchError> {
    let mut out = Vec::new();
    let runs = out_dir.join("runs");
    if !runs.is_dir() {
        return Ok(out);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&runs)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    dirs.sort();
    for d in dirs.into_iter().filter(|d| d.is_dir()) {
        for entry in std::fs::read_dir(&d)? {
            let p = entry?.path();
            if p.extension().is_some_and(|e| e == "json") {
                let rec = RunRecord::load(&p).ok_or_else(|| BenchError::Format(format!("corrupt run record {}", p.display())))?;
                out.push(rec);
            }
        }
    }
    out.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(out)
}

/// `(Obj - Obj_ref) / Obj * 100`.
pub fn pct_delta(obj: f64, obj_ref: f64) -> f64 {
    if obj == obj_ref {
        0.0
    } else {
        (obj - obj_ref) / obj * 100.0
    }
}

/// One table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub dataset: String,
    pub variant: Variant,
    /// Average over instances of the per-instance mean over repetitions.
    pub mean: f64,
    /// Average over instances of the per-instance best over repetitions.
    pub best: f64,
    /// Average over instances of the per-instance sample standard deviation.
    pub std: f64,
    /// Relative to the drl variant, when present.
    pub pct_delta: Option<f64>,
    pub best_mean: bool,
    pub best_best: bool,
    /// Set on the lowest-mean row when it beats every other variant with
    /// `p < SIGNIFICANCE_LEVEL`.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairTest {
    pub a: Variant,
    pub b: Variant,
    pub u: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetReport {
    pub dataset: String,
    pub rows: Vec<ComparisonRow>,
    pub pairs: Vec<PairTest>,
    /// `(variant, mean best-so-far per generation)` over instances and repetitions.
    pub convergence: Vec<(Variant, Vec<f64>)>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Groups records into per-dataset comparison tables.
///
/// Every variant of a dataset must cover the same (instance, repetition)
/// pairs without failures.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<DatasetReport>, BenchError> {
    type Cells<'a> = BTreeMap<Variant, BTreeMap<&'a str, BTreeMap<usize, &'a RunRecord>>>;
    let mut by_dataset: BTreeMap<&str, Cells> = BTreeMap::new();
    let mut failed = Vec::new();
    for r in records {
        if r.error.is_some() || !r.best_fitness.is_some_and(f64::is_finite) {
            failed.push(r.key.to_string());
        }
        by_dataset
            .entry(&r.key.dataset)
            .or_default()
            .entry(r.key.variant)
            .or_default()
            .entry(&r.key.instance)
            .or_default()
            .insert(r.key.repetition, r);
    }
    let mut missing = failed;
    for cells in by_dataset.values() {
        let mut all: BTreeMap<(&str, usize), ()> = BTreeMap::new();
        for inst in cells.values() {
            for (i, reps) in inst {
                for rep in reps.keys() {
                    all.insert((i, *rep), ());
                }
            }
        }
        for (variant, inst) in cells {
            for &(i, rep) in all.keys() {
                if !inst.get(i).is_some_and(|r| r.contains_key(&rep)) {
                    missing.push(format!("{i}/{variant}/r{rep}"));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(BenchError::IncompleteResults(missing));
    }

    let mut reports = Vec::new();
    for (dataset, cells) in by_dataset {
        let mut rows = Vec::new();
        let mut pooled: BTreeMap<Variant, Vec<f64>> = BTreeMap::new();
        let mut convergence = Vec::new();
        for (&variant, instances) in &cells {
            let (mut means, mut bests, mut stds) = (Vec::new(), Vec::new(), Vec::new());
            let mut curve: Vec<f64> = Vec::new();
            let mut runs = 0usize;
            for reps in instances.values() {
                let vals: Vec<f64> = reps.values().filter_map(|r| r.best_fitness).collect();
                means.push(mean(&vals));
                bests.push(vals.iter().copied().fold(f64::INFINITY, f64::min));
                stds.push(sample_std(&vals));
                pooled.entry(variant).or_default().extend(&vals);
                for r in reps.values() {
                    if curve.is_empty() {
                        curve = vec![0.0; r.trace.len()];
                    }
                    if r.trace.len() != curve.len() {
                        return Err(BenchError::Format(format!("trace length differs in {}", r.key)));
                    }
                    curve.iter_mut().zip(&r.trace).for_each(|(c, t)| *c += t);
                    runs += 1;
                }
            }
            curve.iter_mut().for_each(|c| *c /= runs as f64);
            convergence.push((variant, curve));
            rows.push(ComparisonRow {
                dataset: dataset.to_string(),
                variant,
                mean: mean(&means),
                best: mean(&bests),
                std: mean(&stds),
                pct_delta: None,
                best_mean: false,
                best_best: false,
                significant: false,
            });
        }
        if let Some(drl) = rows.iter().find(|r| r.variant == Variant::Drl).map(|r| r.mean) {
            rows.iter_mut().for_each(|r| r.pct_delta = Some(pct_delta(r.mean, drl)));
        }
        let min_mean = rows.iter().map(|r| r.mean).fold(f64::INFINITY, f64::min);
        let min_best = rows.iter().map(|r| r.best).fold(f64::INFINITY, f64::min);
        rows.iter_mut().for_each(|r| {
            r.best_mean = r.mean == min_mean;
            r.best_best = r.best == min_best;
        });

        let variants: Vec<Variant> = pooled.keys().copied().collect();
        let mut pairs = Vec::new();
        for (i, &a) in variants.iter().enumerate() {
            for &b in &variants[i + 1..] {
                let (u, p) = match wilcoxon_rank_sum(&pooled[&a], &pooled[&b]) {
                    Ok(t) => (t.u, t.p),
                    Err(BenchError::DegenerateSamples) => (pooled[&a].len() as f64 * pooled[&b].len() as f64 / 2.0, 1.0),
                    Err(e) => return Err(e),
                };
                pairs.push(PairTest { a, b, u, p });
            }
        }
        // Best-vs-all: the unique lowest-mean variant must beat every other one.
        let leaders: Vec<Variant> = rows.iter().filter(|r| r.best_mean).map(|r| r.variant).collect();
        if let [leader] = leaders[..] {
            let beats_all = variants.len() > 1
                && pairs
                    .iter()
                    .filter(|t| t.a == leader || t.b == leader)
                    .all(|t| t.p < SIGNIFICANCE_LEVEL);
            if beats_all {
                rows.iter_mut().filter(|r| r.variant == leader).for_each(|r| r.significant = true);
            }
        }
        reports.push(DatasetReport {
            dataset: dataset.to_string(),
            rows,
            pairs,
            convergence,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests;
