//! Rank statistics for comparing experimental conditions.

use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample {0} is empty")]
    EmptySample(char),
    #[error("sample contains a non-finite value")]
    NonFinite,
}

/// Combined sample size up to which p-values are exact.
pub const EXACT_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub exact: bool,
}

/// Midranks (1-based) of `values`, ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Mann-Whitney U test.
///
/// Exact when `n₁ + n₂ ≤ 16`: the null distribution of the rank sum is
/// counted over every way of choosing `n₁` of the pooled midranks. Larger
/// samples use the normal approximation with tie and continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, StatsError> {
    if a.is_empty() {
        return Err(StatsError::EmptySample('a'));
    }
    if b.is_empty() {
        return Err(StatsError::EmptySample('b'));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum: f64 = ranks[..n1].iter().sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;

    if n <= EXACT_LIMIT {
        // doubled midranks are integers
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let observed: usize = doubled[..n1].iter().sum();
        let centre = n1 * (n + 1);
        let distance = observed.abs_diff(centre);
        let max_sum: usize = doubled.iter().sum();
        // counts[k][s]: subsets of size k with doubled rank sum s
        let mut counts = vec![vec![0u64; max_sum + 1]; n1 + 1];
        counts[0][0] = 1;
        for &r in &doubled {
            for k in (1..=n1).rev() {
                for s in (r..=max_sum).rev() {
                    counts[k][s] += counts[k - 1][s - r];
                }
            }
        }
        let total: u64 = counts[n1].iter().sum();
        let extreme: u64 = counts[n1]
            .iter()
            .enumerate()
            .filter(|(s, _)| s.abs_diff(centre) >= distance)
            .map(|(_, c)| c)
            .sum();
        return Ok(MannWhitney {
            u,
            p: extreme as f64 / total as f64,
            exact: true,
        });
    }

    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
    let mut tie_term = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let variance = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let mean = n1f * n2f / 2.0;
    let p = if variance <= 0.0 {
        1.0
    } else {
        let z = ((u - mean).abs() - 0.5).max(0.0) / variance.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(MannWhitney { u, p, exact: false })
}

/// `min(1, p·m)` for each p-value.
pub fn bonferroni(p_values: &[f64], m: usize) -> Vec<f64> {
    assert!(m >= p_values.len(), "m = {m} below the number of p-values");
    p_values.iter().map(|p| (p * m as f64).min(1.0)).collect()
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Summary {
            n: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            median: quantile(&s, 0.5),
            q1: quantile(&s, 0.25),
            q3: quantile(&s, 0.75),
            min: s[0],
            max: s[s.len() - 1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn separated_triples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!(r.exact);
        assert_relative_eq!(r.p, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn identical_samples_sit_at_the_centre() {
        let a = [0.2, 0.5, 0.5, 0.9];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.u, 8.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn large_separated_samples() {
        let a: Vec<f64> = (1..=10).map(f64::from).collect();
        let b: Vec<f64> = (11..=20).map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.u, 0.0);
        assert!(!r.exact);
        assert!(r.p < 0.001);
    }

    // reference values from scipy.stats.mannwhitneyu (asymptotic) and a
    // brute-force enumeration over all C(11,5) splits of the tied sample
    #[test]
    fn matches_reference_values() {
        let a: Vec<f64> = (1..=10).map(f64::from).collect();
        let b: Vec<f64> = (11..=20).map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_relative_eq!(r.p, 0.000_182_671_791_109_550_02, max_relative = 1e-9);

        let a = [0.1, 0.4, 0.4, 0.9, 1.3, 2.0, 2.0, 2.0, 3.1];
        let b = [0.4, 1.1, 2.0, 2.5, 3.0, 3.3, 4.0, 4.2, 5.0, 5.5];
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.u, 16.5);
        assert_relative_eq!(r.p, 0.021_427_885_489_535_402, max_relative = 1e-9);

        let a = [1.0, 2.0, 2.0, 5.0, 7.0];
        let b = [2.0, 3.0, 7.0, 8.0, 9.0, 9.0];
        let r = mann_whitney_u(&a, &b).unwrap();
        assert!(r.exact);
        assert_eq!(r.u, 5.5);
        assert_relative_eq!(r.p, 43.0 / 462.0, epsilon = 1e-15);
    }

    #[test]
    fn all_tied_gives_one() {
        let r = mann_whitney_u(&[1.0; 10], &[1.0; 10]).unwrap();
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn u_statistics_are_complementary() {
        let a = [0.3, 0.1, 0.7, 0.7];
        let b = [0.2, 0.7, 0.9];
        let ab = mann_whitney_u(&a, &b).unwrap();
        let ba = mann_whitney_u(&b, &a).unwrap();
        assert_eq!(ab.u + ba.u, 12.0);
        assert_relative_eq!(ab.p, ba.p, epsilon = 1e-15);
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert_eq!(mann_whitney_u(&[], &[1.0]), Err(StatsError::EmptySample('a')));
        assert_eq!(mann_whitney_u(&[1.0], &[]), Err(StatsError::EmptySample('b')));
        assert_eq!(mann_whitney_u(&[f64::NAN], &[1.0]), Err(StatsError::NonFinite));
    }

    #[test]
    fn bonferroni_examples() {
        assert_relative_eq!(bonferroni(&[0.01], 5)[0], 0.05, epsilon = 1e-15);
        assert_eq!(bonferroni(&[0.5], 5), vec![1.0]);
        assert_eq!(bonferroni(&[0.0], 100), vec![0.0]);
    }

    #[test]
    fn midranks_share_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn summary_quartiles() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((s.median, s.q1, s.q3, s.mean), (3.0, 2.0, 4.0, 3.0));
        assert_eq!(Summary::of(&[1.0, 2.0]).unwrap().median, 1.5);
        assert!(Summary::of(&[]).is_none());
    }
}
