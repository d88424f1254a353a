use super::*;
use crate::instgen::{DatasetSpec, GeneratorParams};
use crate::ppo::{PolicyNetwork, PpoHyperparams, TrainingManifest};
use std::sync::atomic::{AtomicUsize, Ordering};

fn write_dataset(root: &Path, family: &str, count: usize) -> PathBuf {
    let mut spec = DatasetSpec::by_name(family, 99).unwrap();
    spec.instance_count = count;
    let ds = Dataset::generate(spec, &GeneratorParams::default(), 0).unwrap();
    ds.save(root, &[], &GeneratorParams::default()).unwrap();
    root.join(&ds.spec.name)
}

fn write_policy(path: &Path) {
    let net = PolicyNetwork::for_env(&[8, 8], &mut seeding::stream(3, &[]));
    let manifest = TrainingManifest {
        seed: 3,
        total_steps: 0,
        env_steps: 0,
        updates: 0,
        episodes: 0,
        instance_ids: vec![],
        population_size: 6,
        max_generations: 4,
        hyperparams: PpoHyperparams::default(),
    };
    TrainedPolicy::new(net, manifest).save(path).unwrap();
}

fn plan(datasets: Vec<PathBuf>, variants: Vec<Variant>, reps: usize, limit: usize) -> ExperimentPlan {
    ExperimentPlan {
        datasets,
        variants,
        repetitions: reps,
        base_seed: 5,
        population_size: 6,
        max_generations: 4,
        instance_limit: Some(limit),
        tuned_params: None,
        policy: None,
    }
}

fn record(dataset: &str, instance: &str, variant: Variant, repetition: usize, f: f64) -> RunRecord {
    RunRecord {
        key: RunKey {
            dataset: dataset.into(),
            instance: instance.into(),
            variant,
            repetition,
        },
        seed: 0,
        best_fitness: Some(f),
        trace: vec![f + 1.0, f],
        error: None,
    }
}

#[test]
fn pct_delta_examples() {
    assert!((pct_delta(100.0, 97.0) - 3.0).abs() < 1e-12);
    assert_eq!(pct_delta(97.0, 97.0), 0.0);
    assert!(pct_delta(97.0, 100.0) < 0.0);
}

#[test]
fn single_run_aggregates_to_itself() {
    let r = aggregate(&[record("D", "D/instance_0", Variant::Default, 0, 42.0)]).unwrap();
    assert_eq!(r.len(), 1);
    let row = &r[0].rows[0];
    assert_eq!((row.mean, row.best, row.std), (42.0, 42.0, 0.0));
    assert_eq!(row.pct_delta, None);
    assert!(!row.significant);
    assert_eq!(r[0].convergence[0].1, vec![43.0, 42.0]);
}

#[test]
fn aggregation_statistics() {
    let mut recs = Vec::new();
    for (i, base) in [(0, 10.0), (1, 20.0)] {
        for rep in 0..3 {
            recs.push(record("D", &format!("D/instance_{i}"), Variant::Drl, rep, base + rep as f64));
            recs.push(record("D", &format!("D/instance_{i}"), Variant::Tuned, rep, base + 2.0 * rep as f64));
        }
    }
    let r = &aggregate(&recs).unwrap()[0];
    let tuned = r.rows.iter().find(|x| x.variant == Variant::Tuned).unwrap();
    let drl = r.rows.iter().find(|x| x.variant == Variant::Drl).unwrap();
    assert_eq!(drl.mean, 16.0);
    assert_eq!(drl.best, 15.0);
    assert_eq!(drl.std, 1.0);
    assert_eq!(tuned.mean, 17.0);
    assert_eq!(tuned.std, 2.0);
    assert_eq!(drl.pct_delta, Some(0.0));
    assert!((tuned.pct_delta.unwrap() - 100.0 / 17.0).abs() < 1e-12);
    assert!(drl.best_mean && !tuned.best_mean);
    assert!(drl.best_best && tuned.best_best);
    // Six pooled runs per side overlap heavily: no significance.
    assert!(!drl.significant);
    assert_eq!(r.pairs.len(), 1);
    assert!(r.pairs[0].p > 0.05);
    for row in &r.rows {
        assert!((10.0..=24.0).contains(&row.mean));
    }
}

#[test]
fn clear_separation_is_flagged() {
    let mut recs = Vec::new();
    for rep in 0..10 {
        recs.push(record("D", "D/instance_0", Variant::Drl, rep, 1.0 + rep as f64));
        recs.push(record("D", "D/instance_0", Variant::Default, rep, 50.0 + rep as f64));
        recs.push(record("D", "D/instance_0", Variant::Tuned, rep, 100.0 + rep as f64));
    }
    let r = &aggregate(&recs).unwrap()[0];
    let flagged: Vec<Variant> = r.rows.iter().filter(|x| x.significant).map(|x| x.variant).collect();
    assert_eq!(flagged, vec![Variant::Drl]);
    assert_eq!(r.pairs.len(), 3);
}

#[test]
fn missing_and_failed_runs_block_aggregation() {
    let mut recs = vec![
        record("D", "D/instance_0", Variant::Drl, 0, 1.0),
        record("D", "D/instance_0", Variant::Drl, 1, 1.0),
        record("D", "D/instance_0", Variant::Tuned, 0, 1.0),
    ];
    match aggregate(&recs) {
        Err(BenchError::IncompleteResults(m)) => assert_eq!(m, vec!["D/instance_0/tuned/r1".to_string()]),
        other => panic!("{other:?}"),
    }
    recs.push(record("D", "D/instance_0", Variant::Tuned, 1, 1.0));
    recs[0].error = Some("boom".into());
    recs[0].best_fitness = None;
    assert!(matches!(aggregate(&recs), Err(BenchError::IncompleteResults(_))));
}

#[test]
fn seeds_are_distinct_per_run() {
    let mut seen = std::collections::BTreeSet::new();
    for ds in ["A", "B"] {
        for i in 0..5 {
            for v in Variant::ALL {
                for rep in 0..4 {
                    let key = RunKey {
                        dataset: ds.into(),
                        instance: format!("{ds}/instance_{i}"),
                        variant: v,
                        repetition: rep,
                    };
                    assert!(seen.insert(key.seed(7)));
                }
            }
        }
    }
}

#[test]
fn one_run_plan_yields_one_record_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let ds = write_dataset(dir.path(), "M1T1", 2);
    let out = dir.path().join("out");
    let p = plan(vec![ds], vec![Variant::Default], 1, 1);
    let first = run_experiment(&p, &out, 2).unwrap();
    assert_eq!(first.len(), 1);
    assert_eq!(first[0].trace.len(), 5);
    let calls = AtomicUsize::new(0);
    let again = run_experiment_with_progress(&p, &out, 2, |_| {
        calls.fetch_add(1, Ordering::SeqCst);
    })
    .unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 0);
    assert_eq!(first, again);
    assert_eq!(load_records(&out).unwrap(), first);
}

#[test]
fn missing_artifacts_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let ds = write_dataset(dir.path(), "M1T1", 1);
    let mut p = plan(vec![ds.clone()], vec![Variant::Tuned], 1, 1);
    assert!(matches!(p.validate(), Err(BenchError::MissingArtifact(_))));
    p.tuned_params = Some(dir.path().join("nope.toml"));
    assert!(matches!(p.validate(), Err(BenchError::MissingArtifact(_))));
    let p = plan(vec![dir.path().join("absent")], vec![Variant::Default], 1, 1);
    assert!(matches!(p.validate(), Err(BenchError::MissingArtifact(_))));
    let p = plan(vec![ds], vec![Variant::Default], 0, 1);
    assert!(matches!(p.validate(), Err(BenchError::InvalidPlan(_))));
}

#[test]
fn full_pipeline_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let ds = write_dataset(dir.path(), "M1T1", 2);
    let tuned = dir.path().join("tuned.toml");
    DynamicParams::TUNED.save(&tuned).unwrap();
    let policy = dir.path().join("policy.json");
    write_policy(&policy);
    let mut p = plan(vec![ds], Variant::ALL.to_vec(), 2, 2);
    p.tuned_params = Some(tuned);
    p.policy = Some(policy);

    let produce = |name: &str| {
        let out = dir.path().join(name);
        let recs = run_experiment(&p, &out, 3).unwrap();
        assert!(recs.iter().all(|r| r.error.is_none() && r.trace.len() == 5));
        let reports = aggregate(&recs).unwrap();
        let files = emit_reports(&reports, &out.join("reports")).unwrap();
        files
            .iter()
            .map(|f| (f.file_name().unwrap().to_owned(), std::fs::read(f).unwrap()))
            .collect::<Vec<_>>()
    };
    let a = produce("a");
    let b = produce("b");
    assert_eq!(a, b);
    assert_eq!(a.len(), 4);
    let table = String::from_utf8(a[0].1.clone()).unwrap();
    assert_eq!(table.lines().count(), 4);
    let conv = String::from_utf8(a[2].1.clone()).unwrap();
    assert_eq!(conv.lines().count(), 1 + 5);
    assert_eq!(conv.lines().next().unwrap(), "generation,default,tuned,drl");
    let text = String::from_utf8(a[1].1.clone()).unwrap();
    assert!(text.contains("MA-DRL") && text.contains("MA tuned"));
    let drl_line = table.lines().find(|l| l.contains(",drl,")).unwrap();
    assert!(drl_line.contains(",0,"), "{drl_line}");
}

#[test]
fn text_table_layout() {
    let mut recs = Vec::new();
    for rep in 0..10 {
        recs.push(record("CAS-PFSP-M1T1", "i", Variant::Drl, rep, 2.06e6 + rep as f64));
        recs.push(record("CAS-PFSP-M1T1", "i", Variant::Default, rep, 2.1e6 + rep as f64));
    }
    let text = table_to_text(&aggregate(&recs).unwrap()[0]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "CAS-PFSP-M1T1");
    assert_eq!(lines[1], "Method            mean      best     std    %Δ");
    assert_eq!(lines[2], "MA default      2.10e6    2.10e6  3.03e0  1.90");
    assert_eq!(lines[3], "MA-DRL      *_2.06e6_*  *2.06e6*  3.03e0  0.00");
}
