//! Subcommand implementations. Artifacts live under the output directory:
//! `datasets/<name>/`, `tuning/`, `training/`, `experiment/` and `reports/`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context as _;
use rayon::prelude::*;

use carbon_dac::bench::{self, ExperimentPlan, Variant};
use carbon_dac::cas::Instance;
use carbon_dac::config::Config;
use carbon_dac::env::{compute_ideal, IdealCache, PoolEntry};
use carbon_dac::fsutil::write_atomic;
use carbon_dac::instgen::{select_training_set, Dataset, DatasetRole, DatasetSpec};
use carbon_dac::ppo;
use carbon_dac::tuner;

use crate::exit::DataError;

pub struct Context {
    pub config: Config,
    pub out: PathBuf,
}

impl Context {
    fn datasets_dir(&self) -> PathBuf {
        self.out.join("datasets")
    }

    fn dataset_dir(&self, name: &str) -> PathBuf {
        self.datasets_dir().join(name)
    }

    fn tuned_params_path(&self) -> PathBuf {
        self.out.join("tuning").join("best_params.toml")
    }

    fn policy_path(&self) -> PathBuf {
        self.out.join("training").join("policy.json")
    }

    fn experiment_dir(&self) -> PathBuf {
        self.out.join("experiment")
    }

    fn thread_pool(&self) -> anyhow::Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new().num_threads(self.config.workers).build()?)
    }

    /// Loads a generated dataset, pointing at `generate` when it is absent.
    fn load_dataset(&self, name: &str) -> anyhow::Result<(Dataset, carbon_dac::instgen::DatasetManifest)> {
        let dir = self.dataset_dir(name);
        if !dir.join("manifest.toml").exists() {
            return Err(DataError(format!("dataset {} not found; run `generate` first", dir.display())).into());
        }
        Dataset::load(&dir).with_context(|| format!("loading dataset {}", dir.display()))
    }

    /// Training instances of every configured dataset, in dataset order.
    fn training_instances(&self) -> anyhow::Result<Vec<(String, Instance)>> {
        let mut out = Vec::new();
        for spec in self.config.dataset_specs()? {
            if spec.role != DatasetRole::Known {
                continue;
            }
            let (ds, manifest) = self.load_dataset(&spec.name)?;
            for id in &manifest.training_ids {
                let inst = ds
                    .get(id)
                    .ok_or_else(|| DataError(format!("training instance {id} missing from {}", spec.name)))?;
                out.push((spec.name.clone(), inst.clone()));
            }
        }
        if out.is_empty() {
            return Err(DataError("no training instances; check the datasets configuration".into()).into());
        }
        Ok(out)
    }
}

fn ideal_path(dataset_dir: &Path) -> PathBuf {
    dataset_dir.join("ideal.toml")
}

pub fn generate(ctx: &Context) -> anyhow::Result<()> {
    let cfg = &ctx.config;
    let root = ctx.datasets_dir();
    let pool = ctx.thread_pool()?;
    for spec in cfg.dataset_specs()? {
        let extra = match spec.role {
            DatasetRole::Known => cfg.datasets.extra_training,
            DatasetRole::Unknown => 0,
        };
        let ds = pool.install(|| Dataset::generate(spec.clone(), &cfg.generator, extra))?;
        let training = match spec.role {
            DatasetRole::Known => select_training_set(std::slice::from_ref(&ds), cfg.datasets.training_per_dataset, cfg.seed)?,
            DatasetRole::Unknown => Vec::new(),
        };
        ds.save(&root, &training, &cfg.generator)?;
        eprintln!(
            "{}: {} instances ({} training) -> {}",
            spec.name,
            ds.instances.len(),
            training.len(),
            root.join(&spec.name).display()
        );
    }
    Ok(())
}

pub fn ideal(ctx: &Context, all: bool) -> anyhow::Result<()> {
    let cfg = &ctx.config;
    let ea = cfg.ea_config();
    let pool = ctx.thread_pool()?;
    for spec in cfg.dataset_specs()? {
        let (ds, manifest) = ctx.load_dataset(&spec.name)?;
        let ids: Vec<&String> = if all {
            manifest.instance_ids.iter().collect()
        } else {
            manifest.training_ids.iter().collect()
        };
        if ids.is_empty() {
            continue;
        }
        let path = ideal_path(&ctx.dataset_dir(&spec.name));
        let mut cache = match IdealCache::load(&path) {
            Ok(c) if c.population_size == ea.population_size && c.max_generations == ea.max_generations => c,
            _ => IdealCache::new(&ea),
        };
        let todo: Vec<&Instance> = ids
            .iter()
            .filter(|id| !cache.ideal.contains_key(id.as_str()))
            .map(|id| ds.get(id).expect("manifest ids are loaded"))
            .collect();
        let computed = pool.install(|| {
            todo.par_iter()
                .map(|inst| compute_ideal(inst, &ea, &cfg.ideal.params).map(|f| (inst.id.clone(), f)))
                .collect::<Result<Vec<_>, _>>()
        })?;
        let fresh = computed.len();
        cache.ideal.extend(computed);
        cache.save(&path)?;
        eprintln!("{}: {} reference values ({} new) -> {}", spec.name, cache.ideal.len(), fresh, path.display());
    }
    Ok(())
}

pub fn tune(ctx: &Context) -> anyhow::Result<()> {
    let cfg = &ctx.config;
    let instances: Vec<Instance> = ctx.training_instances()?.into_iter().map(|(_, i)| i).collect();
    let budget = &cfg.tuner.budget;
    let account = budget.account(cfg.algorithm.population_size)?;
    eprintln!("budget: {account}");
    let ea = cfg.ea_config();
    let result = ctx.thread_pool()?.install(|| {
        let mut best = f64::INFINITY;
        tuner::run_tuning_with_progress(&instances, &ea, budget, &cfg.tuner.tpe, cfg.seed, |t| {
            best = best.min(t.score);
            eprintln!("trial {:>4}: score {:.6e} (best {best:.6e})", t.index, t.score);
        })
    })?;
    let dir = ctx.out.join("tuning");
    tuner::save_results(&dir, &result)?;
    write_atomic(&dir.join("budget.txt"), format!("{}\n", result.account).as_bytes())?;
    eprintln!("best trial {} -> {}", result.best.index, ctx.tuned_params_path().display());
    Ok(())
}

pub fn train(ctx: &Context, steps: Option<u64>) -> anyhow::Result<()> {
    let cfg = &ctx.config;
    let mut pool = Vec::new();
    let mut caches: Vec<(String, IdealCache)> = Vec::new();
    for (dataset, inst) in ctx.training_instances()? {
        if !caches.iter().any(|(d, _)| *d == dataset) {
            let path = ideal_path(&ctx.dataset_dir(&dataset));
            let cache = IdealCache::load(&path)
                .map_err(|e| DataError(format!("{e}; run `ideal` first ({})", path.display())))?;
            caches.push((dataset.clone(), cache));
        }
        let cache = &caches.iter().find(|(d, _)| *d == dataset).expect("cache loaded").1;
        let ea = cfg.ea_config();
        if cache.population_size != ea.population_size || cache.max_generations != ea.max_generations {
            return Err(DataError(format!(
                "reference values for {dataset} were computed with a different population or generation budget; rerun `ideal`"
            ))
            .into());
        }
        let f_ideal = *cache
            .ideal
            .get(&inst.id)
            .ok_or_else(|| DataError(format!("no reference value for {}; run `ideal` first", inst.id)))?;
        pool.push(PoolEntry {
            instance: Arc::new(inst),
            f_ideal,
        });
    }
    let total = steps.unwrap_or(cfg.training.total_steps);
    eprintln!("training on {} instances for {total} steps", pool.len());
    let output = ctx.thread_pool()?.install(|| {
        ppo::train_with_progress(pool, total, &cfg.ea_config(), &cfg.ppo, cfg.seed, |p| {
            eprintln!(
                "update {:>5}  steps {:>9}  mean episode reward {:.4e}",
                p.update_index, p.env_steps, p.mean_episode_reward
            );
        })
    })?;
    let dir = ctx.out.join("training");
    output.policy.save(&ctx.policy_path())?;
    write_atomic(&dir.join("learning_curve.csv"), ppo::curve_to_csv(&output.curve).as_bytes())?;
    let mut rewards = String::from("episode,reward\n");
    for (i, r) in output.episode_rewards.iter().enumerate() {
        rewards.push_str(&format!("{i},{r}\n"));
    }
    write_atomic(&dir.join("episode_rewards.csv"), rewards.as_bytes())?;
    eprintln!("policy -> {}", ctx.policy_path().display());
    Ok(())
}

pub fn run(
    ctx: &Context,
    datasets: &[String],
    variants: &[String],
    tuned_params: Option<PathBuf>,
    policy: Option<PathBuf>,
) -> anyhow::Result<()> {
    let cfg = &ctx.config;
    let names: Vec<String> = if datasets.is_empty() {
        cfg.dataset_specs()?.into_iter().map(|s| s.name).collect()
    } else {
        datasets
            .iter()
            .map(|d| {
                DatasetSpec::by_name(d, cfg.seed)
                    .map(|s| s.name)
                    .ok_or_else(|| DataError(format!("unknown dataset {d:?}")))
            })
            .collect::<Result<_, _>>()?
    };
    let variants: Vec<Variant> = if variants.is_empty() {
        cfg.bench.variants.clone()
    } else {
        variants.iter().map(|v| v.parse()).collect::<Result<_, _>>()?
    };
    let plan = ExperimentPlan {
        datasets: names.iter().map(|n| ctx.dataset_dir(n)).collect(),
        tuned_params: variants
            .contains(&Variant::Tuned)
            .then(|| tuned_params.unwrap_or_else(|| ctx.tuned_params_path())),
        policy: variants
            .contains(&Variant::Drl)
            .then(|| policy.unwrap_or_else(|| ctx.policy_path())),
        variants,
        repetitions: cfg.bench.repetitions,
        base_seed: cfg.seed,
        population_size: cfg.algorithm.population_size,
        max_generations: cfg.algorithm.max_generations,
        instance_limit: cfg.bench.instance_limit,
    };
    let out = ctx.experiment_dir();
    write_atomic(&out.join("plan.json"), serde_json::to_string_pretty(&plan)?.as_bytes())?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let records = bench::run_experiment_with_progress(&plan, &out, cfg.workers, |r| {
        let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        match (&r.best_fitness, &r.error) {
            (_, Some(e)) => eprintln!("[{n}] {}/{}/r{} failed: {e}", r.key.instance, r.key.variant, r.key.repetition),
            (Some(f), None) => eprintln!("[{n}] {}/{}/r{}: {f:.6e}", r.key.instance, r.key.variant, r.key.repetition),
            (None, None) => {}
        }
    })?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    eprintln!("{} runs recorded, {failed} failed -> {}", records.len(), out.display());
    if failed > 0 {
        return Err(crate::exit::RuntimeError(format!("{failed} runs failed")).into());
    }
    Ok(())
}

pub fn report(ctx: &Context) -> anyhow::Result<()> {
    let records = bench::load_records(&ctx.experiment_dir())?;
    if records.is_empty() {
        return Err(DataError(format!("no runs under {}; run `run` first", ctx.experiment_dir().display())).into());
    }
    let reports = bench::aggregate(&records)?;
    let dir = ctx.out.join("reports");
    let files = bench::emit_reports(&reports, &dir)?;
    for r in &reports {
        println!("{}", bench::table_to_text(r));
    }
    eprintln!("{} files -> {}", files.len(), dir.display());
    Ok(())
}
