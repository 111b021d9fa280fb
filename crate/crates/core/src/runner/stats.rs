//! Summary statistics and the rank-sum comparison used in result tables.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::features::clamp_cost;

pub const SIGNIFICANCE: f64 = 0.05;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSum {
    /// Rank sum of the first sample.
    pub w: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Two-sided Wilcoxon rank-sum test, normal approximation with tie correction.
pub fn rank_sum(a: &[f64], b: &[f64]) -> RankSum {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut pooled: Vec<(f64, bool)> = a.iter().map(|v| (*v, true)).chain(b.iter().map(|v| (*v, false))).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = pooled.len();
    let mut w = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        w += rank * pooled[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let total = n1 + n2;
    let expected = n1 * (total + 1.0) / 2.0;
    let variance = if total > 1.0 {
        n1 * n2 / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)))
    } else {
        0.0
    };
    if variance <= 0.0 {
        return RankSum {
            w,
            z: 0.0,
            p_value: 1.0,
        };
    }
    let z = (w - expected) / variance.sqrt();
    let normal = Normal::standard();
    RankSum {
        w,
        z,
        p_value: (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mark {
    /// The reference is significantly better (lower cost).
    Better,
    Tie,
    Worse,
}

impl Mark {
    pub fn symbol(self) -> &'static str {
        match self {
            Mark::Better => "+",
            Mark::Tie => "≈",
            Mark::Worse => "-",
        }
    }
}

/// Compare reference costs against baseline costs at the given level.
pub fn mark(reference: &[f64], baseline: &[f64], alpha: f64) -> Mark {
    let test = rank_sum(reference, baseline);
    if test.p_value >= alpha {
        Mark::Tie
    } else if test.z < 0.0 {
        Mark::Better
    } else {
        Mark::Worse
    }
}

/// Sum over instances of `log10 reference - log10 baseline`; negative when
/// the reference reaches lower costs.
pub fn delta_sum_log10(reference: &[f64], baseline: &[f64]) -> f64 {
    reference
        .iter()
        .zip(baseline)
        .map(|(r, b)| clamp_cost(*r).log10() - clamp_cost(*b).log10())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - 1.290_994_448_735_805_6).abs() < 1e-15);
    }

    #[test]
    fn rank_sum_matches_reference_values() {
        // scipy.stats.ranksums([1..5], [6..10]) -> z = -2.6111648393354674, p = 0.009023438818080334
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [6.0, 7.0, 8.0, 9.0, 10.0];
        let t = rank_sum(&a, &b);
        assert_eq!(t.w, 15.0);
        assert!((t.z + 2.611_164_839_335_467_4).abs() < 1e-12);
        assert!((t.p_value - 0.009_023_438_818_080_334).abs() < 1e-9);
    }

    #[test]
    fn ties_are_corrected() {
        // tie-corrected normal approximation of Mann-Whitney U, by hand:
        // ranks a = 1.5, 1.5, 4, b = 4, 4, 6; W = 7, E = 10.5,
        // var = 9/12 * (7 - (6 + 24)/30) = 4.5
        let t = rank_sum(&[1.0, 1.0, 2.0], &[2.0, 2.0, 3.0]);
        assert_eq!(t.w, 7.0);
        assert!((t.z - (7.0 - 10.5) / 4.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_samples_tie() {
        let a = [1.0, 5.0, 2.0, 8.0];
        assert_eq!(mark(&a, &a, SIGNIFICANCE), Mark::Tie);
        assert_eq!(rank_sum(&[2.0; 4], &[2.0; 4]).p_value, 1.0);
    }

    #[test]
    fn marks_follow_direction() {
        let low: Vec<f64> = (0..10).map(f64::from).collect();
        let high: Vec<f64> = (100..110).map(f64::from).collect();
        assert_eq!(mark(&low, &high, SIGNIFICANCE), Mark::Better);
        assert_eq!(mark(&high, &low, SIGNIFICANCE), Mark::Worse);
    }

    #[test]
    fn tenfold_worse_baseline() {
        let reference = vec![1e3; 14];
        let baseline = vec![1e4; 14];
        assert!((delta_sum_log10(&reference, &baseline) + 14.0).abs() < 1e-12);
    }
}
