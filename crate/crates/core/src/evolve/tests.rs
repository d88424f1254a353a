use super::*;
use crate::cas::Instance;
use crate::instgen::{generate_instance, DatasetSpec, GeneratorParams};

fn toy(name: &str, index: usize) -> Instance {
    let spec = DatasetSpec::by_name(name, 17).unwrap();
    generate_instance(&spec, &GeneratorParams::default(), index).unwrap()
}

fn two_jobs() -> Instance {
    // Job 0 is power hungry and should run in the cheap second half.
    Instance {
        id: "two".into(),
        machines: 1,
        jobs: 2,
        horizon_slots: 4,
        slot_hours: 1.0,
        horizon_days: 1,
        proc: vec![vec![2], vec![2]],
        power: vec![vec![10.0], vec![1.0]],
        renewable: vec![0.0; 4],
        grid_intensity: vec![500.0, 500.0, 10.0, 10.0],
    }
}

#[test]
fn local_search_on_single_job_is_identity() {
    let inst = Instance {
        id: "one".into(),
        machines: 2,
        jobs: 1,
        horizon_slots: 5,
        slot_hours: 1.0,
        horizon_days: 1,
        proc: vec![vec![1, 2]],
        power: vec![vec![1.0, 1.0]],
        renewable: vec![0.0; 5],
        grid_intensity: vec![1.0; 5],
    };
    let c = Chromosome::new(vec![0.3], vec![0.2, 0.9]);
    assert_eq!(local_search(&inst, &c).unwrap(), c);
}

#[test]
fn local_search_finds_better_order() {
    let inst = two_jobs();
    let c = Chromosome::new(vec![0.1, 0.9], vec![0.0, 0.0]);
    let forward = Decoder::new(&inst).fitness(&c).unwrap();
    let reversed_keys = Chromosome::new(vec![0.9, 0.1], vec![0.0, 0.0]);
    let reversed = Decoder::new(&inst).fitness(&reversed_keys).unwrap();
    assert_eq!(forward, 10.0 * 2.0 * 500.0 + 2.0 * 10.0);
    assert_eq!(reversed, 2.0 * 500.0 + 10.0 * 2.0 * 10.0);
    let out = local_search(&inst, &c).unwrap();
    assert_eq!(crate::cas::decode_sequence(&out.job_keys), vec![1, 0]);
}

#[test]
fn local_search_never_worsens() {
    let inst = toy("M3T1", 0);
    let mut rng = seeding::stream(8, &[]);
    let mut dec = Decoder::new(&inst);
    for _ in 0..200 {
        let c = Chromosome::random(&inst, &mut rng);
        let f = dec.fitness(&c).unwrap();
        let (out, g) = local_search_with(&mut dec, c, f).unwrap();
        assert!(g <= f);
        assert_eq!(dec.fitness(&out).unwrap(), g);
    }
}

#[test]
fn offspring_counts() {
    assert_eq!(crossover_offspring_count(0.5, 4), 2);
    assert_eq!(crossover_offspring_count(0.625, 4), 3);
    assert_eq!(crossover_offspring_count(0.0, 4), 0);
    assert_eq!(crossover_offspring_count(1.0, 5), 5);
    assert_eq!(crossover_offspring_count(0.3, 5), 2);

    let inst = toy("M1T1", 1);
    let pop = Population::random(&inst, 4, 3).unwrap();
    let params = DynamicParams {
        crossover_rate: 0.5,
        ..DynamicParams::DEFAULT
    };
    let plan = mate(&pop, &params, &mut seeding::stream(1, &[])).unwrap();
    assert_eq!(plan.crossover_children.len(), 2);
    assert_eq!(plan.clones.len(), 2);
    let params = DynamicParams {
        crossover_rate: 0.7,
        ..DynamicParams::DEFAULT
    };
    let plan = mate(&pop, &params, &mut seeding::stream(1, &[])).unwrap();
    assert_eq!(plan.crossover_children.len(), 3);
    assert_eq!(plan.clones.len(), 1);
}

#[test]
fn clones_only_generation_keeps_existing_genotypes() {
    let inst = Instance {
        id: "solo".into(),
        machines: 2,
        jobs: 1,
        horizon_slots: 8,
        slot_hours: 1.0,
        horizon_days: 1,
        proc: vec![vec![2, 2]],
        power: vec![vec![3.0, 4.0]],
        renewable: vec![0.0; 8],
        grid_intensity: (0..8).map(|t| 10.0 + t as f64).collect(),
    };
    let pop = Population::random(&inst, 6, 5).unwrap();
    let params = DynamicParams {
        crossover_rate: 0.0,
        job_mutation_prob: 0.0,
        pause_mutation_prob: 0.0,
        ..DynamicParams::DEFAULT
    };
    let next = step_generation(&inst, &pop, &params, &mut seeding::stream(2, &[])).unwrap();
    assert_eq!(next.generation, 1);
    assert_eq!(next.len(), 6);
    for m in &next.members {
        assert!(pop.members.iter().any(|p| p == m));
    }
    assert_eq!(next.best().unwrap().fitness, pop.best().unwrap().fitness);
}

#[test]
fn elitism_over_random_parameters() {
    let inst = toy("M3T1", 2);
    let mut rng = seeding::stream(9, &[]);
    let mut pop = Population::random(&inst, 12, 1).unwrap();
    for _ in 0..15 {
        let params = DynamicParams::from_array([
            rng.random(),
            rng.random(),
            rng.random(),
            rng.random(),
            rng.random(),
            rng.random_range(0.001..0.5),
            rng.random_range(0.001..0.5),
        ]);
        let next = step_generation(&inst, &pop, &params, &mut rng).unwrap();
        assert!(next.best().unwrap().fitness <= pop.best().unwrap().fitness);
        assert!(next.members.iter().all(|m| m.chromosome.keys_in_unit_interval()));
        for m in &next.members {
            assert_eq!(Decoder::new(&inst).fitness(&m.chromosome).unwrap(), m.fitness);
        }
        pop = next;
    }
}

#[test]
fn run_static_is_deterministic_and_elitist() {
    let inst = toy("M1T3", 0);
    let cfg = EaConfig::new(10, 8, 42);
    let a = run_static(&inst, &cfg, &DynamicParams::DEFAULT).unwrap();
    let b = run_static(&inst, &cfg, &DynamicParams::DEFAULT).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.trace.len(), 9);
    let best = a.per_generation_best();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(a.best_fitness, *best.last().unwrap());
    let c = run_static(&inst, &cfg.with_seed(43), &DynamicParams::DEFAULT).unwrap();
    assert_ne!(a.trace, c.trace);
}

#[test]
fn zero_generations_returns_initial_best() {
    let inst = toy("M1T1", 0);
    let cfg = EaConfig::new(6, 0, 1);
    let r = run_static(&inst, &cfg, &DynamicParams::DEFAULT).unwrap();
    assert_eq!(r.trace.len(), 1);
    let init = Population::random(&inst, 6, seeding::derive(1, &[INIT_STREAM])).unwrap();
    assert_eq!(r.best_fitness, init.best().unwrap().fitness);
}

#[test]
fn trace_csv_has_header_and_rows() {
    let inst = toy("M1T1", 0);
    let r = run_static(&inst, &EaConfig::new(4, 2, 1), &DynamicParams::TUNED).unwrap();
    let csv = trace_to_csv(&r.trace);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "generation,best_fitness,mean_fitness,std_fitness");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("2,"));
}

#[test]
fn invalid_params_are_rejected_before_running() {
    let inst = toy("M1T1", 0);
    let mut p = DynamicParams::DEFAULT;
    p.job_swap_prob = -0.1;
    assert!(matches!(
        run_static(&inst, &EaConfig::new(4, 2, 1), &p),
        Err(EvolveError::ParameterOutOfRange { .. })
    ));
}
