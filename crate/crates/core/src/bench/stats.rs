//! Wilcoxon rank-sum (Mann-Whitney) test.

use statrs::function::erf::erfc;

use super::BenchError;

/// Largest combined sample size tested by exact enumeration.
pub const EXACT_MAX_TOTAL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSumTest {
    /// Mann-Whitney U of the first sample: pairs `(x, y)` with `x > y`,
    /// ties counting one half.
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub exact: bool,
}

/// Midranks of the pooled sample, doubled so that they are integers.
fn doubled_midranks(pooled: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean; doubled: i + j + 2.
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

fn check(a: &[f64], b: &[f64]) -> Result<Vec<f64>, BenchError> {
    if a.is_empty() || b.is_empty() {
        return Err(BenchError::EmptySample);
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(BenchError::Format("rank-sum sample contains NaN".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.iter().all(|&x| x == pooled[0]) {
        return Err(BenchError::DegenerateSamples);
    }
    Ok(pooled)
}

fn u_statistic(doubled_rank_sum: u64, n1: usize) -> f64 {
    doubled_rank_sum as f64 / 2.0 - (n1 * (n1 + 1)) as f64 / 2.0
}

/// Exact test: the null distribution of the first sample's rank sum over
/// all equally likely splits of the observed (tied) ranks.
pub fn rank_sum_exact(a: &[f64], b: &[f64]) -> Result<RankSumTest, BenchError> {
    let pooled = check(a, b)?;
    let ranks = doubled_midranks(&pooled);
    let n1 = a.len();
    let observed: u64 = ranks[..n1].iter().sum();
    let max_sum: u64 = ranks.iter().sum();
    // ways[k][s]: subsets of size k with doubled rank sum s.
    let width = max_sum as usize + 1;
    let mut ways = vec![vec![0f64; width]; n1 + 1];
    ways[0][0] = 1.0;
    for &r in &ranks {
        let r = r as usize;
        for k in (1..=n1).rev() {
            let (lower, upper) = ways.split_at_mut(k);
            let (prev, cur) = (&lower[k - 1], &mut upper[0]);
            for s in (r..width).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    let dist = &ways[n1];
    let total: f64 = dist.iter().sum();
    let lower: f64 = dist[..=observed as usize].iter().sum();
    let upper: f64 = dist[observed as usize..].iter().sum();
    let p = (2.0 * lower.min(upper) / total).min(1.0);
    Ok(RankSumTest {
        u: u_statistic(observed, n1),
        p,
        exact: true,
    })
}

/// Normal approximation with tie and continuity corrections.
pub fn rank_sum_normal(a: &[f64], b: &[f64]) -> Result<RankSumTest, BenchError> {
    let pooled = check(a, b)?;
    let ranks = doubled_midranks(&pooled);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let u = u_statistic(ranks[..a.len()].iter().sum(), a.len());
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&x| x == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let dev = ((u - n1 * n2 / 2.0).abs() - 0.5).max(0.0);
    let z = dev / var.sqrt();
    let p = erfc(z / std::f64::consts::SQRT_2).min(1.0);
    Ok(RankSumTest { u, p, exact: false })
}

/// Exact when the combined size is at most [`EXACT_MAX_TOTAL`], otherwise
/// the normal approximation. Identical pooled values give
/// [`BenchError::DegenerateSamples`]; callers treat that as `p = 1`.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankSumTest, BenchError> {
    if a.len() + b.len() <= EXACT_MAX_TOTAL {
        rank_sum_exact(a, b)
    } else {
        rank_sum_normal(a, b)
    }
}

/// p-value with degenerate samples mapped to 1.
pub fn rank_sum_p(a: &[f64], b: &[f64]) -> Result<f64, BenchError> {
    match wilcoxon_rank_sum(a, b) {
        Ok(t) => Ok(t.p),
        Err(BenchError::DegenerateSamples) => Ok(1.0),
        Err(e) => Err(e),
    }
}
