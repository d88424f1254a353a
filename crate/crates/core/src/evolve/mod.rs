//! The memetic algorithm.
//!
//! A generation builds `round(xi * rho)` crossover offspring from uniformly
//! drawn parent pairs and fills the rest with clones, mutates every
//! offspring, refines each with one pass of adjacent job swaps, and keeps the
//! best `rho` of parents and offspring together.
//!
//! Randomness: the caller's generator draws the mating plan and one seed per
//! offspring; each offspring's mutation runs on its own stream, so offspring
//! can be processed in parallel without affecting the result.

mod operators;
mod params;

pub use operators::{crossover, local_search, local_search_with, mutate};
pub use params::{DynamicParams, EaConfig};

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use thiserror::Error;

use crate::cas::{CasError, Chromosome, Decoder, Instance};
use crate::seeding::{self, StreamRng};

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error(transparent)]
    Cas(#[from] CasError),
    #[error("parameter {name} out of range: {value}")]
    ParameterOutOfRange { name: &'static str, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parameter file: {0}")]
    ParamsFile(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub chromosome: Chromosome,
    pub fitness: f64,
}

/// An evaluated population, sorted best first after every generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub members: Vec<Member>,
    pub generation: usize,
}

impl Population {
    /// Samples `size` uniform chromosomes; member `i` uses stream `(seed, i)`.
    pub fn random(instance: &Instance, size: usize, seed: u64) -> Result<Self, EvolveError> {
        let chromosomes: Vec<Chromosome> = (0..size)
            .map(|i| Chromosome::random(instance, &mut seeding::stream(seed, &[i as u64])))
            .collect();
        Self::evaluate(instance, chromosomes)
    }

    pub fn evaluate(instance: &Instance, chromosomes: Vec<Chromosome>) -> Result<Self, EvolveError> {
        let members = chromosomes
            .into_par_iter()
            .map_init(
                || Decoder::new(instance),
                |dec, chromosome| {
                    let fitness = dec.fitness(&chromosome)?;
                    Ok(Member { chromosome, fitness })
                },
            )
            .collect::<Result<Vec<_>, CasError>>()?;
        let mut pop = Population { members, generation: 0 };
        pop.sort();
        Ok(pop)
    }

    fn sort(&mut self) {
        self.members.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best(&self) -> Option<&Member> {
        self.members
            .iter()
            .min_by(|a, b| a.fitness.total_cmp(&b.fitness))
    }

    pub fn stats(&self) -> GenerationStats {
        let n = self.members.len() as f64;
        let best = self.best().map_or(f64::NAN, |m| m.fitness);
        let mean = self.members.iter().map(|m| m.fitness).sum::<f64>() / n;
        let var = self.members.iter().map(|m| (m.fitness - mean).powi(2)).sum::<f64>() / n;
        GenerationStats {
            generation: self.generation,
            best,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Fitness summary of one generation (population standard deviation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub std: f64,
}

/// `round(xi * rho)` with halves rounded up.
pub fn crossover_offspring_count(crossover_rate: f64, population_size: usize) -> usize {
    ((crossover_rate * population_size as f64 + 0.5).floor() as usize).min(population_size)
}

/// Offspring before mutation; exposed for inspection in tests.
#[derive(Debug, Clone)]
pub struct MatingPlan {
    pub crossover_children: Vec<Chromosome>,
    pub clones: Vec<Chromosome>,
}

fn distinct_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// Crossover and cloning stage of a generation.
pub fn mate<R: Rng + ?Sized>(
    population: &Population,
    params: &DynamicParams,
    rng: &mut R,
) -> Result<MatingPlan, EvolveError> {
    let rho = population.len();
    if rho < 2 {
        return Err(EvolveError::InvalidConfig("population needs at least 2 members".into()));
    }
    let n_cx = crossover_offspring_count(params.crossover_rate, rho);
    let mut crossover_children = Vec::with_capacity(n_cx + 1);
    while crossover_children.len() < n_cx {
        let (i, j) = distinct_pair(rho, rng);
        let (a, b) = crossover(
            &population.members[i].chromosome,
            &population.members[j].chromosome,
            params.job_swap_prob,
            params.pause_swap_prob,
            rng,
        )?;
        crossover_children.push(a);
        if crossover_children.len() < n_cx {
            crossover_children.push(b);
        }
    }
    let clones = (0..rho - n_cx)
        .map(|_| population.members[rng.random_range(0..rho)].chromosome.clone())
        .collect();
    Ok(MatingPlan {
        crossover_children,
        clones,
    })
}

/// One generation of the memetic algorithm with elitist (mu + lambda) survival.
pub fn step_generation<R: Rng + ?Sized>(
    instance: &Instance,
    population: &Population,
    params: &DynamicParams,
    rng: &mut R,
) -> Result<Population, EvolveError> {
    params.validate()?;
    let plan = mate(population, params, rng)?;
    let offspring: Vec<(Chromosome, u64)> = plan
        .crossover_children
        .into_iter()
        .chain(plan.clones)
        .map(|c| (c, rng.random::<u64>()))
        .collect();

    let evaluated = offspring
        .into_par_iter()
        .map_init(
            || Decoder::new(instance),
            |dec, (chrom, seed)| -> Result<Member, EvolveError> {
                let mut stream = StreamRng::seed_from_u64(seed);
                let mutated = mutate(
                    &chrom,
                    params.job_mutation_prob,
                    params.pause_mutation_prob,
                    params.job_mutation_std,
                    params.pause_mutation_std,
                    &mut stream,
                )?;
                let fitness = dec.fitness(&mutated)?;
                let (chromosome, fitness) = local_search_with(dec, mutated, fitness)?;
                Ok(Member { chromosome, fitness })
            },
        )
        .collect::<Result<Vec<_>, _>>()?;

    let mut members = population.members.clone();
    members.extend(evaluated);
    let mut next = Population {
        members,
        generation: population.generation + 1,
    };
    next.sort();
    next.members.truncate(population.len());
    Ok(next)
}

const INIT_STREAM: u64 = 0x1;
const GENERATION_STREAM: u64 = 0x2;

/// A memetic run driven one generation at a time. The caller passes the
/// same instance to every call.
#[derive(Debug, Clone)]
pub struct MemeticRun {
    config: EaConfig,
    population: Population,
    trace: Vec<GenerationStats>,
    best: Member,
}

impl MemeticRun {
    /// Samples and evaluates the initial population.
    pub fn new(instance: &Instance, config: EaConfig) -> Result<Self, EvolveError> {
        config.validate()?;
        let population = Population::random(
            instance,
            config.population_size,
            seeding::derive(config.rng_seed, &[INIT_STREAM]),
        )?;
        let best = population.best().cloned().expect("population is non-empty");
        let trace = vec![population.stats()];
        Ok(Self {
            config,
            population,
            trace,
            best,
        })
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn config(&self) -> &EaConfig {
        &self.config
    }

    pub fn generation(&self) -> usize {
        self.population.generation
    }

    pub fn is_finished(&self) -> bool {
        self.generation() >= self.config.max_generations
    }

    pub fn best(&self) -> &Member {
        &self.best
    }

    pub fn trace(&self) -> &[GenerationStats] {
        &self.trace
    }

    /// Runs one generation with `params` on the generation's own stream.
    pub fn step(&mut self, instance: &Instance, params: &DynamicParams) -> Result<&GenerationStats, EvolveError> {
        let mut rng = seeding::stream(
            self.config.rng_seed,
            &[GENERATION_STREAM, self.population.generation as u64],
        );
        self.population = step_generation(instance, &self.population, params, &mut rng)?;
        if let Some(b) = self.population.best() {
            if b.fitness < self.best.fitness {
                self.best = b.clone();
            }
        }
        self.trace.push(self.population.stats());
        Ok(self.trace.last().expect("trace is non-empty"))
    }

    pub fn into_result(self) -> RunResult {
        RunResult {
            best_fitness: self.best.fitness,
            best: self.best.chromosome,
            trace: self.trace,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub best_fitness: f64,
    pub best: Chromosome,
    /// One entry per generation, including the initial population.
    pub trace: Vec<GenerationStats>,
}

impl RunResult {
    pub fn per_generation_best(&self) -> Vec<f64> {
        self.trace.iter().map(|s| s.best).collect()
    }
}

/// Runs the algorithm for `config.max_generations` generations with fixed
/// parameters.
pub fn run_static(instance: &Instance, config: &EaConfig, params: &DynamicParams) -> Result<RunResult, EvolveError> {
    params.validate()?;
    let mut run = MemeticRun::new(instance, *config)?;
    while !run.is_finished() {
        run.step(instance, params)?;
    }
    Ok(run.into_result())
}

/// CSV with columns `generation,best_fitness,mean_fitness,std_fitness`.
pub fn trace_to_csv(trace: &[GenerationStats]) -> String {
    let mut out = String::from("generation,best_fitness,mean_fitness,std_fitness\n");
    for s in trace {
        out.push_str(&format!("{},{},{},{}\n", s.generation, s.best, s.mean, s.std));
    }
    out
}

#[cfg(test)]
mod tests;
