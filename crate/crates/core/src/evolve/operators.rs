use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::EvolveError;
use crate::cas::{CasError, Chromosome, Decoder, Instance};

fn check_prob(name: &'static str, value: f64) -> Result<(), EvolveError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(EvolveError::ParameterOutOfRange { name, value })
    }
}

fn check_std(name: &'static str, value: f64) -> Result<(), EvolveError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(EvolveError::ParameterOutOfRange { name, value })
    }
}

/// Controlled swap crossover: every gene position is exchanged between the
/// two children independently, with probability `job_swap` for job keys and
/// `pause_swap` for pause keys.
pub fn crossover<R: Rng + ?Sized>(
    parent_a: &Chromosome,
    parent_b: &Chromosome,
    job_swap: f64,
    pause_swap: f64,
    rng: &mut R,
) -> Result<(Chromosome, Chromosome), EvolveError> {
    check_prob("job_swap_prob", job_swap)?;
    check_prob("pause_swap_prob", pause_swap)?;
    if !parent_a.same_shape(parent_b) {
        return Err(CasError::DimensionMismatch {
            what: "crossover parents",
            expected: parent_a.job_keys.len() + parent_a.pause_keys.len(),
            found: parent_b.job_keys.len() + parent_b.pause_keys.len(),
        }
        .into());
    }
    let mut a = parent_a.clone();
    let mut b = parent_b.clone();
    swap_genes(&mut a.job_keys, &mut b.job_keys, job_swap, rng);
    swap_genes(&mut a.pause_keys, &mut b.pause_keys, pause_swap, rng);
    Ok((a, b))
}

fn swap_genes<R: Rng + ?Sized>(a: &mut [f64], b: &mut [f64], p: f64, rng: &mut R) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        if rng.random::<f64>() < p {
            std::mem::swap(x, y);
        }
    }
}

/// Nonuniform mutation: each gene is perturbed with probability `prob` by a
/// zero-mean normal draw of standard deviation `std`, then clamped to `[0, 1]`.
pub fn mutate<R: Rng + ?Sized>(
    chromosome: &Chromosome,
    job_prob: f64,
    pause_prob: f64,
    job_std: f64,
    pause_std: f64,
    rng: &mut R,
) -> Result<Chromosome, EvolveError> {
    check_prob("job_mutation_prob", job_prob)?;
    check_prob("pause_mutation_prob", pause_prob)?;
    check_std("job_mutation_std", job_std)?;
    check_std("pause_mutation_std", pause_std)?;
    let mut out = chromosome.clone();
    perturb(&mut out.job_keys, job_prob, job_std, rng);
    perturb(&mut out.pause_keys, pause_prob, pause_std, rng);
    Ok(out)
}

fn perturb<R: Rng + ?Sized>(genes: &mut [f64], p: f64, std: f64, rng: &mut R) {
    if p == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, std).expect("std validated");
    for g in genes.iter_mut() {
        if rng.random::<f64>() < p {
            *g = (*g + normal.sample(rng)).clamp(0.0, 1.0);
        }
    }
}

/// One left-to-right pass of adjacent job swaps with first-improvement
/// acceptance. Returns the improved chromosome and its fitness.
pub fn local_search_with(
    decoder: &mut Decoder<'_>,
    chromosome: Chromosome,
    fitness: f64,
) -> Result<(Chromosome, f64), CasError> {
    let mut chrom = chromosome;
    let mut best = fitness;
    let jobs = chrom.jobs();
    if jobs < 2 {
        return Ok((chrom, best));
    }
    let mut sequence = crate::cas::decode_sequence(&chrom.job_keys);
    for pos in 0..jobs - 1 {
        let (a, b) = (sequence[pos], sequence[pos + 1]);
        chrom.job_keys.swap(a, b);
        let candidate = decoder.fitness(&chrom)?;
        if candidate < best {
            best = candidate;
            sequence.swap(pos, pos + 1);
        } else {
            chrom.job_keys.swap(a, b);
        }
    }
    Ok((chrom, best))
}

/// Adjacent-swap local search on a single chromosome.
pub fn local_search(instance: &Instance, chromosome: &Chromosome) -> Result<Chromosome, EvolveError> {
    let mut decoder = Decoder::new(instance);
    let fitness = decoder.fitness(chromosome)?;
    Ok(local_search_with(&mut decoder, chromosome.clone(), fitness)?.0)
}
