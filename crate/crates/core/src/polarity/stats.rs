//! Two-sample tests used to compare group score distributions.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

/// Largest combined sample size for which the exact null distribution is used.
pub const EXACT_MAX_COMBINED: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("each sample needs at least 2 values, got {0}")]
    SampleTooSmall(usize),
    #[error("pooled variance is zero")]
    DegenerateVariance,
    #[error("sample contains a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U of the first sample: pairs where it is larger, ties counting one half.
    pub u: f64,
    pub p_two_sided: f64,
    pub method: PValueMethod,
}

/// Midranks (1-based) of `values`, plus the tie-group sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
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
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of arrangements giving each U value, for samples of size m and n
/// without ties. Index is U, from 0 to m*n.
fn u_distribution(m: usize, n: usize) -> Vec<u64> {
    // f[i][j][u]: arrangements of i first-sample and j second-sample items.
    let width = m * n + 1;
    let mut prev: Vec<Vec<u64>> = vec![vec![0; width]; n + 1];
    for row in prev.iter_mut() {
        row[0] = 1;
    }
    for _ in 0..m {
        let mut cur: Vec<Vec<u64>> = vec![vec![0; width]; n + 1];
        cur[0][0] = 1;
        for j in 1..=n {
            for u in 0..width {
                // Largest item belongs to the first sample (beats all j) or the second.
                let from_first = if u >= j { prev[j][u - j] } else { 0 };
                cur[j][u] = from_first + cur[j - 1][u];
            }
        }
        prev = cur;
    }
    prev.swap_remove(n)
}

fn check(sample: &[f64]) -> Result<(), StatsError> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Two-sided Mann-Whitney U test. Exact null distribution when the combined
/// size is at most 16 and there are no ties; otherwise the normal
/// approximation with continuity and tie correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, StatsError> {
    check(a)?;
    check(b)?;
    let (na, nb) = (a.len(), b.len());
    let combined: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&combined);
    let rank_sum: f64 = ranks[..na].iter().sum();
    let u = rank_sum - (na * (na + 1)) as f64 / 2.0;

    if na + nb <= EXACT_MAX_COMBINED && ties.is_empty() {
        let dist = u_distribution(na, nb);
        let total: u64 = dist.iter().sum();
        let u_int = u.round() as usize;
        let le: u64 = dist[..=u_int].iter().sum();
        let ge: u64 = dist[u_int..].iter().sum();
        let p = ((2 * le.min(ge)) as f64 / total as f64).min(1.0);
        return Ok(MannWhitney {
            u,
            p_two_sided: p,
            method: PValueMethod::Exact,
        });
    }

    let n = (na + nb) as f64;
    let mean = (na * nb) as f64 / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let variance = (na * nb) as f64 / 12.0 * ((n + 1.0) - tie_term);
    let p = if variance <= 0.0 {
        1.0
    } else {
        let z = ((u - mean).abs() - 0.5).max(0.0) / variance.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(MannWhitney {
        u,
        p_two_sided: p,
        method: PValueMethod::NormalApproximation,
    })
}

pub fn mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

fn sample_variance(sample: &[f64]) -> f64 {
    let m = mean(sample);
    sample.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (sample.len() - 1) as f64
}

/// Cohen's d with the pooled standard deviation (n−1 sample variances).
/// Positive when `a` has the larger mean.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::SampleTooSmall(s.len()));
        }
        check(s)?;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled =
        ((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b)) / (na + nb - 2.0);
    if pooled <= 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    Ok((mean(a) - mean(b)) / pooled.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_samples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.u, 4.5);
        assert_relative_eq!(r.p_two_sided, 1.0);
        assert_eq!(r.method, PValueMethod::NormalApproximation);
    }

    #[test]
    fn fully_separated_samples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.p_two_sided, 0.1);
        assert_eq!(r.method, PValueMethod::Exact);
    }

    #[test]
    fn swapping_samples() {
        let a = [0.3, 1.7, 2.2, 5.0];
        let b = [0.1, 0.9, 4.4];
        let ab = mann_whitney_u(&a, &b).unwrap();
        let ba = mann_whitney_u(&b, &a).unwrap();
        assert_eq!(ab.u, 12.0 - ba.u);
        assert_eq!(ab.p_two_sided, ba.p_two_sided);
    }

    #[test]
    fn distribution_counts_all_arrangements() {
        let d = u_distribution(8, 8);
        assert_eq!(d.iter().sum::<u64>(), 12870);
        assert_eq!(d[0], 1);
        assert_eq!(d, d.iter().rev().copied().collect::<Vec<_>>());
    }

    #[test]
    fn empty_sample_rejected() {
        assert_eq!(mann_whitney_u(&[], &[1.0]), Err(StatsError::EmptySample));
    }

    #[test]
    fn cohens_d_examples() {
        let d = cohens_d(&[1.0, 2.0], &[0.0, 1.0]).unwrap();
        assert_relative_eq!(d, 1.0 / 0.5f64.sqrt(), epsilon = 1e-12);
        assert_eq!(cohens_d(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), -d);
        assert_eq!(cohens_d(&[1.0, 3.0], &[0.0, 4.0]).unwrap(), 0.0);
        assert_eq!(
            cohens_d(&[1.0], &[1.0, 2.0]),
            Err(StatsError::SampleTooSmall(1))
        );
        assert_eq!(
            cohens_d(&[1.0, 1.0], &[2.0, 2.0]),
            Err(StatsError::DegenerateVariance)
        );
    }
}
