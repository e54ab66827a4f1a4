//! One-sided Wilcoxon signed-rank test of "a is greater than b".

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest number of nonzero pairs handled by the exact null distribution.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Pairs left after dropping zero differences.
    pub n: usize,
    /// Sum of the ranks of positive differences.
    pub w_plus: f64,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Average ranks of `|d|`, doubled so that tied ranks stay integral.
fn doubled_ranks(abs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&i, &j| abs[i].total_cmp(&abs[j]));
    let mut ranks = vec![0; abs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && abs[order[end]] == abs[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end averaged, times two
        let doubled = (start + 1 + end) as u64;
        for &k in &order[start..end] {
            ranks[k] = doubled;
        }
        start = end;
    }
    ranks
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "{} and {} paired values",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("paired values must be finite"));
    }
    if d.is_empty() {
        return Err(Error::NoNonzeroPairs);
    }
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let w2: u64 = ranks
        .iter()
        .zip(&d)
        .filter(|(_, v)| **v > 0.0)
        .map(|(r, _)| r)
        .sum();
    let w_plus = w2 as f64 / 2.0;

    if n <= EXACT_MAX_N {
        // counts[s] = number of sign assignments whose doubled W+ equals s
        let total: u64 = ranks.iter().sum();
        let mut counts = vec![0u64; total as usize + 1];
        counts[0] = 1;
        let mut reach = 0usize;
        for &r in &ranks {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] > 0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let tail: u64 = counts[w2 as usize..].iter().sum();
        return Ok(WilcoxonResult {
            n,
            w_plus,
            p_value: tail as f64 / 2f64.powi(n as i32),
            method: WilcoxonMethod::Exact,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    for group in sorted.chunk_by(|x, y| x == y) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = (w_plus - mean - 0.5) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(WilcoxonResult {
        n,
        w_plus,
        p_value: 1.0 - normal.cdf(z),
        method: WilcoxonMethod::Normal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_zero_differences() {
        let a = [0.8, 0.9, 0.7];
        assert!(matches!(wilcoxon_signed_rank(&a, &a), Err(Error::NoNonzeroPairs)));
    }

    #[test]
    fn five_positive_differences() {
        let a = [0.9, 0.8, 0.85, 0.95, 0.7];
        let b = [0.8, 0.7, 0.8, 0.9, 0.6];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.n, 5);
        assert_eq!(r.w_plus, 15.0);
        assert_eq!(r.p_value, 1.0 / 32.0);
        assert_eq!(r.method, WilcoxonMethod::Exact);
    }

    #[test]
    fn ties_share_average_ranks() {
        assert_eq!(doubled_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![2, 5, 5, 8]);
    }

    #[test]
    fn normal_path_for_large_n() {
        let a: Vec<f64> = (0..40).map(|i| i as f64 + 1.0).collect();
        let b: Vec<f64> = (0..40).map(|i| i as f64 + if i % 5 == 0 { 1.5 } else { 0.0 }).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Normal);
        assert!(r.p_value < 1e-3);
        let r = wilcoxon_signed_rank(&b, &a).unwrap();
        assert!(r.p_value > 0.99);
    }

    proptest! {
        #[test]
        fn p_value_is_a_probability(d in prop::collection::vec(-5i32..=5, 1..30)) {
            let a: Vec<f64> = d.iter().map(|&v| v as f64).collect();
            let b = vec![0.0; a.len()];
            match wilcoxon_signed_rank(&a, &b) {
                Ok(r) => prop_assert!((0.0..=1.0).contains(&r.p_value)),
                Err(e) => prop_assert!(matches!(e, Error::NoNonzeroPairs)),
            }
        }
    }
}
