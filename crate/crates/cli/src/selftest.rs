//! Fast end-to-end sanity checks on toy data.

use carbon_dac::bench::{aggregate, run_experiment, wilcoxon_rank_sum, ExperimentPlan, Variant};
use carbon_dac::env::{rescale_action, ActionVector, RewardTracker, ACTION_BOUNDS};
use carbon_dac::evolve::{run_static, DynamicParams, EaConfig};
use carbon_dac::instgen::{generate_instance, Dataset, DatasetSpec, GeneratorParams};

use crate::exit::RuntimeError;

type Check = (&'static str, fn() -> Result<(), String>);

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn rescaling() -> Result<(), String> {
    let lo = rescale_action(&ActionVector::splat(-1.0)).map_err(|e| e.to_string())?.to_array();
    let hi = rescale_action(&ActionVector::splat(1.0)).map_err(|e| e.to_string())?.to_array();
    for (d, &(a, b)) in ACTION_BOUNDS.iter().enumerate() {
        ensure(lo[d] == a && hi[d] == b, || format!("component {d}: [{}, {}] vs [{a}, {b}]", lo[d], hi[d]))?;
    }
    Ok(())
}

fn reward() -> Result<(), String> {
    let mut t = RewardTracker::new(100.0, 50.0);
    let r1 = t.update(80.0).map_err(|e| e.to_string())?;
    let r2 = t.update(70.0).map_err(|e| e.to_string())?;
    ensure((r1 - 1600.0).abs() < 1e-12 && (r2 - 2000.0).abs() < 1e-12, || format!("rewards {r1}, {r2}"))
}

fn rank_sum() -> Result<(), String> {
    let t = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).map_err(|e| e.to_string())?;
    ensure(t.u == 0.0 && (t.p - 0.1).abs() < 1e-12, || format!("U = {}, p = {}", t.u, t.p))
}

fn memetic_run() -> Result<(), String> {
    let spec = DatasetSpec::by_name("M3T1", 1).expect("known family");
    let inst = generate_instance(&spec, &GeneratorParams::default(), 0).map_err(|e| e.to_string())?;
    let res = run_static(&inst, &EaConfig::new(10, 5, 1), &DynamicParams::DEFAULT).map_err(|e| e.to_string())?;
    let trace = res.per_generation_best();
    ensure(trace.windows(2).all(|w| w[1] <= w[0]), || format!("best fitness increased: {trace:?}"))
}

fn pipeline() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut spec = DatasetSpec::by_name("M1T1", 1).expect("known family");
    spec.instance_count = 2;
    let ds = Dataset::generate(spec, &GeneratorParams::default(), 0).map_err(|e| e.to_string())?;
    ds.save(dir.path(), &[], &GeneratorParams::default()).map_err(|e| e.to_string())?;
    let plan = ExperimentPlan {
        datasets: vec![dir.path().join(&ds.spec.name)],
        variants: vec![Variant::Default],
        repetitions: 2,
        base_seed: 1,
        population_size: 6,
        max_generations: 3,
        instance_limit: None,
        tuned_params: None,
        policy: None,
    };
    let out = dir.path().join("out");
    let recs = run_experiment(&plan, &out, 2).map_err(|e| e.to_string())?;
    ensure(recs.len() == 4, || format!("{} records", recs.len()))?;
    let reports = aggregate(&recs).map_err(|e| e.to_string())?;
    ensure(reports.len() == 1 && reports[0].rows.len() == 1, || "unexpected report shape".into())
}

const CHECKS: [Check; 5] = [
    ("action rescaling endpoints", rescaling),
    ("reward substitution", reward),
    ("rank-sum exact p", rank_sum),
    ("memetic elitism", memetic_run),
    ("toy experiment pipeline", pipeline),
];

pub fn run() -> anyhow::Result<()> {
    let mut failed = 0;
    for (name, check) in CHECKS {
        match check() {
            Ok(()) => println!("PASS {name}"),
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: {e}");
            }
        }
    }
    if failed > 0 {
        return Err(RuntimeError(format!("{failed} self-test checks failed")).into());
    }
    Ok(())
}
