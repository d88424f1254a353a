use rand::Rng;

use super::{CasError, Instance};

/// Dual random-key genotype.
///
/// `job_keys[j]` orders job `j` in the shared sequence. `pause_keys` is an
/// `M x J` row-major matrix; entry `(m, j)` places operation `(j, m)` inside
/// its feasible start window.
#[derive(Debug, Clone, PartialEq)]
pub struct Chromosome {
    pub job_keys: Vec<f64>,
    pub pause_keys: Vec<f64>,
}

impl Chromosome {
    pub fn new(job_keys: Vec<f64>, pause_keys: Vec<f64>) -> Self {
        Self { job_keys, pause_keys }
    }

    /// All keys set to `value`.
    pub fn constant(instance: &Instance, value: f64) -> Self {
        Self {
            job_keys: vec![value; instance.jobs],
            pause_keys: vec![value; instance.operations()],
        }
    }

    /// Uniform random keys in `[0, 1)`.
    pub fn random<R: Rng + ?Sized>(instance: &Instance, rng: &mut R) -> Self {
        let job_keys = (0..instance.jobs).map(|_| rng.random::<f64>()).collect();
        let pause_keys = (0..instance.operations()).map(|_| rng.random::<f64>()).collect();
        Self { job_keys, pause_keys }
    }

    pub fn jobs(&self) -> usize {
        self.job_keys.len()
    }

    /// Pause key of operation `(job, machine)`.
    pub fn pause(&self, machine: usize, job: usize) -> f64 {
        self.pause_keys[machine * self.jobs() + job]
    }

    pub fn pause_mut(&mut self, machine: usize, job: usize) -> &mut f64 {
        let jobs = self.jobs();
        &mut self.pause_keys[machine * jobs + job]
    }

    pub fn same_shape(&self, other: &Chromosome) -> bool {
        self.job_keys.len() == other.job_keys.len() && self.pause_keys.len() == other.pause_keys.len()
    }

    pub fn keys_in_unit_interval(&self) -> bool {
        self.job_keys
            .iter()
            .chain(self.pause_keys.iter())
            .all(|k| (0.0..=1.0).contains(k))
    }

    pub fn check_shape(&self, instance: &Instance) -> Result<(), CasError> {
        if self.job_keys.len() != instance.jobs {
            return Err(CasError::DimensionMismatch {
                what: "job_keys",
                expected: instance.jobs,
                found: self.job_keys.len(),
            });
        }
        if self.pause_keys.len() != instance.operations() {
            return Err(CasError::DimensionMismatch {
                what: "pause_keys",
                expected: instance.operations(),
                found: self.pause_keys.len(),
            });
        }
        Ok(())
    }
}

/// A decoded permutation schedule. `start[j][m]` is the start slot of
/// operation `(j, m)`, indexed by job id rather than sequence position.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub sequence: Vec<usize>,
    pub start: Vec<Vec<u32>>,
    pub fitness: f64,
}

impl Schedule {
    pub fn end(&self, instance: &Instance, job: usize, machine: usize) -> u32 {
        self.start[job][machine] + instance.proc[job][machine]
    }

    /// Checks the permutation, precedence, machine exclusivity and horizon
    /// invariants.
    pub fn validate(&self, instance: &Instance) -> Result<(), CasError> {
        let bad = |msg: String| Err(CasError::InvalidSchedule(msg));
        if self.sequence.len() != instance.jobs || self.start.len() != instance.jobs {
            return bad(format!(
                "expected {} jobs, sequence has {} and start has {}",
                instance.jobs,
                self.sequence.len(),
                self.start.len()
            ));
        }
        let mut seen = vec![false; instance.jobs];
        for &j in &self.sequence {
            if j >= instance.jobs || seen[j] {
                return bad(format!("sequence is not a permutation: {:?}", self.sequence));
            }
            seen[j] = true;
        }
        let horizon = instance.horizon_slots as u64;
        for (j, row) in self.start.iter().enumerate() {
            if row.len() != instance.machines {
                return bad(format!("start[{j}] has {} entries", row.len()));
            }
            for m in 1..instance.machines {
                if row[m] < row[m - 1] + instance.proc[j][m - 1] {
                    return bad(format!("precedence violated for job {j} at machine {m}"));
                }
            }
            let last = instance.machines - 1;
            if u64::from(row[last]) + u64::from(instance.proc[j][last]) > horizon {
                return bad(format!("job {j} finishes after the horizon"));
            }
        }
        for m in 0..instance.machines {
            for w in self.sequence.windows(2) {
                let (a, b) = (w[0], w[1]);
                if self.start[b][m] < self.start[a][m] + instance.proc[a][m] {
                    return bad(format!("jobs {a} and {b} overlap on machine {m}"));
                }
            }
        }
        Ok(())
    }

    /// CSV rows `job,machine,start_slot,end_slot` in sequence order.
    pub fn to_csv(&self, instance: &Instance) -> String {
        let mut out = String::from("job,machine,start_slot,end_slot\n");
        for &j in &self.sequence {
            for m in 0..instance.machines {
                out.push_str(&format!(
                    "{j},{m},{},{}\n",
                    self.start[j][m],
                    self.end(instance, j, m)
                ));
            }
        }
        out
    }
}

/// Ascending stable argsort of the job keys; equal keys keep index order.
pub fn decode_sequence(job_keys: &[f64]) -> Vec<usize> {
    let mut seq: Vec<usize> = (0..job_keys.len()).collect();
    sort_by_keys(&mut seq, job_keys);
    seq
}

fn sort_by_keys(seq: &mut [usize], keys: &[f64]) {
    seq.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
}

/// Rounds half-way cases down so that the interpolated start never passes
/// the latest start.
fn round_half_down(x: f64) -> i64 {
    ((x - 0.5).ceil() as i64).max(0)
}

/// Reusable decode + evaluate buffers for one instance.
///
/// The decoder computes the latest start of every operation by a backward
/// pass over the zero-idle schedule, then places each operation between its
/// actual earliest start (given already placed predecessors) and that latest
/// start according to its pause key.
#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    instance: &'a Instance,
    sequence: Vec<usize>,
    latest: Vec<i64>,
    start: Vec<i64>,
    demand: Vec<f64>,
}

impl<'a> Decoder<'a> {
    pub fn new(instance: &'a Instance) -> Self {
        let ops = instance.operations();
        Self {
            instance,
            sequence: (0..instance.jobs).collect(),
            latest: vec![0; ops],
            start: vec![0; ops],
            demand: vec![0.0; instance.horizon_slots],
        }
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    /// Decodes into the internal buffers. `start` is stored position-major.
    fn decode_into(&mut self, chrom: &Chromosome) -> Result<(), CasError> {
        let inst = self.instance;
        chrom.check_shape(inst)?;
        let (jobs, machines) = (inst.jobs, inst.machines);
        for (i, s) in self.sequence.iter_mut().enumerate() {
            *s = i;
        }
        sort_by_keys(&mut self.sequence, &chrom.job_keys);

        let horizon = inst.horizon_slots as i64;
        for k in (0..jobs).rev() {
            let j = self.sequence[k];
            for m in (0..machines).rev() {
                let mut bound = horizon;
                if m + 1 < machines {
                    bound = bound.min(self.latest[k * machines + m + 1]);
                }
                if k + 1 < jobs {
                    bound = bound.min(self.latest[(k + 1) * machines + m]);
                }
                self.latest[k * machines + m] = bound - i64::from(inst.proc[j][m]);
            }
        }
        if self.latest[0] < 0 {
            let sequence = self.sequence.clone();
            return Err(CasError::InfeasibleInstance {
                required: inst.makespan(&sequence),
                horizon: horizon as u64,
                detail: "zero-idle makespan of the decoded sequence exceeds the horizon".into(),
            });
        }

        for k in 0..jobs {
            let j = self.sequence[k];
            for m in 0..machines {
                let mut earliest = 0i64;
                if m > 0 {
                    earliest = self.start[k * machines + m - 1] + i64::from(inst.proc[j][m - 1]);
                }
                if k > 0 {
                    let prev = self.sequence[k - 1];
                    earliest = earliest.max(self.start[(k - 1) * machines + m] + i64::from(inst.proc[prev][m]));
                }
                let latest = self.latest[k * machines + m];
                debug_assert!(earliest <= latest);
                let slack = (latest - earliest) as f64;
                let offset = round_half_down(chrom.pause(m, j) * slack).min(latest - earliest);
                self.start[k * machines + m] = earliest + offset;
            }
        }
        Ok(())
    }

    fn emissions_from_buffers(&mut self) -> f64 {
        let inst = self.instance;
        let machines = inst.machines;
        self.demand.iter_mut().for_each(|d| *d = 0.0);
        for (k, &j) in self.sequence.iter().enumerate() {
            for m in 0..machines {
                let s = self.start[k * machines + m] as usize;
                let e = s + inst.proc[j][m] as usize;
                let p = inst.power[j][m];
                for d in &mut self.demand[s..e] {
                    *d += p;
                }
            }
        }
        grid_emissions(inst, &self.demand)
    }

    /// Decodes `chrom` and returns its scope-2 emissions in gCO2.
    pub fn fitness(&mut self, chrom: &Chromosome) -> Result<f64, CasError> {
        self.decode_into(chrom)?;
        Ok(self.emissions_from_buffers())
    }

    /// Decodes `chrom` into a full [`Schedule`] with its fitness.
    pub fn schedule(&mut self, chrom: &Chromosome) -> Result<Schedule, CasError> {
        self.decode_into(chrom)?;
        let fitness = self.emissions_from_buffers();
        let inst = self.instance;
        let mut start = vec![vec![0u32; inst.machines]; inst.jobs];
        for (k, &j) in self.sequence.iter().enumerate() {
            for m in 0..inst.machines {
                start[j][m] = self.start[k * inst.machines + m] as u32;
            }
        }
        Ok(Schedule {
            sequence: self.sequence.clone(),
            start,
            fitness,
        })
    }
}

/// Grid emissions of a per-slot demand profile.
pub(crate) fn grid_emissions(inst: &Instance, demand: &[f64]) -> f64 {
    demand
        .iter()
        .zip(&inst.renewable)
        .zip(&inst.grid_intensity)
        .map(|((d, r), i)| (d - r).max(0.0) * inst.slot_hours * i)
        .sum()
}

/// Decodes `chrom` into a feasible schedule on `instance`.
pub fn decode_schedule(instance: &Instance, chrom: &Chromosome) -> Result<Schedule, CasError> {
    Decoder::new(instance).schedule(chrom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    fn single_machine(proc: &[u32], horizon: usize) -> Instance {
        Instance {
            id: "single".into(),
            machines: 1,
            jobs: proc.len(),
            horizon_slots: horizon,
            slot_hours: 1.0,
            horizon_days: 1,
            proc: proc.iter().map(|&p| vec![p]).collect(),
            power: proc.iter().map(|_| vec![1.0]).collect(),
            renewable: vec![0.0; horizon],
            grid_intensity: vec![1.0; horizon],
        }
    }

    #[test]
    fn argsort_examples() {
        assert_eq!(decode_sequence(&[0.7, 0.2, 0.5]), vec![1, 2, 0]);
        assert_eq!(decode_sequence(&[0.0, 0.0]), vec![0, 1]);
        assert_eq!(decode_sequence(&[0.3, 0.1, 0.3, 0.1]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn argsort_yields_permutations() {
        let mut rng = seeding::stream(11, &[]);
        for n in 0..20 {
            let keys: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut seq = decode_sequence(&keys);
            for w in seq.windows(2) {
                assert!(keys[w[0]] <= keys[w[1]]);
            }
            seq.sort_unstable();
            assert_eq!(seq, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn earliest_and_latest_endpoints() {
        let inst = single_machine(&[2, 3], 10);
        let early = decode_schedule(&inst, &Chromosome::new(vec![0.0, 0.0], vec![0.0, 0.0])).unwrap();
        assert_eq!(early.sequence, vec![0, 1]);
        assert_eq!(early.start, vec![vec![0], vec![2]]);

        let late = decode_schedule(&inst, &Chromosome::new(vec![0.0, 0.0], vec![1.0, 1.0])).unwrap();
        assert_eq!(late.start, vec![vec![5], vec![7]]);
        assert_eq!(late.end(&inst, 1, 0), 10);
    }

    #[test]
    fn half_slack_rounds_down() {
        let inst = single_machine(&[1], 4);
        // slack 3, key 0.5 -> 1.5 -> 1
        let s = decode_schedule(&inst, &Chromosome::new(vec![0.0], vec![0.5])).unwrap();
        assert_eq!(s.start[0][0], 1);
        assert_eq!(round_half_down(2.5), 2);
        assert_eq!(round_half_down(2.51), 3);
        assert_eq!(round_half_down(0.0), 0);
    }

    #[test]
    fn wrong_dimensions_are_rejected() {
        let inst = single_machine(&[2, 3], 10);
        let err = decode_schedule(&inst, &Chromosome::new(vec![0.0], vec![0.0, 0.0])).unwrap_err();
        assert!(matches!(err, CasError::DimensionMismatch { what: "job_keys", .. }));
    }

    #[test]
    fn overlong_sequence_is_infeasible() {
        let inst = single_machine(&[6, 6], 10);
        let err = decode_schedule(&inst, &Chromosome::constant(&inst, 0.0)).unwrap_err();
        assert!(matches!(err, CasError::InfeasibleInstance { required: 12, horizon: 10, .. }));
    }

    #[test]
    fn csv_export_lists_every_operation() {
        let inst = single_machine(&[2, 3], 10);
        let s = decode_schedule(&inst, &Chromosome::new(vec![0.9, 0.1], vec![0.0, 0.0])).unwrap();
        assert_eq!(
            s.to_csv(&inst),
            "job,machine,start_slot,end_slot\n1,0,0,3\n0,0,3,5\n"
        );
    }
}
