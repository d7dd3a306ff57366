//! Empirical distributions, the two-sample Kolmogorov–Smirnov test and
//! summary statistics.

use serde::Serialize;

use crate::error::{Error, Result};

/// Largest `n_a · n_b` for which the exact null distribution of D is used.
pub const EXACT_KS_MAX_PRODUCT: usize = 10_000;

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

pub fn ecdf(samples: &[f64]) -> Result<Ecdf> {
    check_samples(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Ecdf { sorted })
}

impl Ecdf {
    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        let count = self.sorted.partition_point(|v| *v <= x);
        count as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("sample must be non-empty".into()));
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("sample contains non-finite value {bad}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test.
///
/// D is found exactly by scanning the merged, deduplicated breakpoints with
/// integer counts. For small samples (`n_a · n_b <= EXACT_KS_MAX_PRODUCT`)
/// the p-value is the exact probability `P(D' >= D)` under random
/// assignment of the pooled values; above that, the asymptotic Kolmogorov
/// series is used (see [`ks_asymptotic_p`]).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    check_samples(a)?;
    check_samples(b)?;
    let (gap, na, nb) = max_ecdf_gap(a, b);
    let statistic = gap as f64 / (na as f64 * nb as f64);
    let p_value = if na.saturating_mul(nb) <= EXACT_KS_MAX_PRODUCT {
        ks_exact_p(gap, na, nb)
    } else {
        ks_asymptotic_p(statistic, na, nb)
    };
    Ok(KsResult { statistic, p_value })
}

/// Returns `(max |c_a·n_b − c_b·n_a|, n_a, n_b)`; D is the first over `n_a·n_b`.
fn max_ecdf_gap(a: &[f64], b: &[f64]) -> (u64, usize, usize) {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0u64;
    while i < na || j < nb {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(x), Some(y)) => x.min(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => unreachable!(),
        };
        while i < na && xs[i] <= v {
            i += 1;
        }
        while j < nb && ys[j] <= v {
            j += 1;
        }
        let gap = (i as u64 * nb as u64).abs_diff(j as u64 * na as u64);
        best = best.max(gap);
    }
    (best, na, nb)
}

/// Exact `P(D >= gap / (n_a·n_b))` by a lattice-path recursion over the
/// pooled ordering; `gap` is in units of `1 / (n_a·n_b)`.
fn ks_exact_p(gap: u64, na: usize, nb: usize) -> f64 {
    if gap == 0 {
        return 1.0;
    }
    let inside = |i: usize, j: usize| (i as u64 * nb as u64).abs_diff(j as u64 * na as u64) < gap;
    // row[j] = probability of reaching (i, j) without leaving the band.
    let mut row = vec![0.0f64; nb + 1];
    row[0] = 1.0;
    for j in 1..=nb {
        row[j] = if inside(0, j) { row[j - 1] * step_b(0, j - 1, na, nb) } else { 0.0 };
    }
    for i in 1..=na {
        let mut next = vec![0.0f64; nb + 1];
        for j in 0..=nb {
            if !inside(i, j) {
                continue;
            }
            let from_a = row[j] * (1.0 - step_b(i - 1, j, na, nb));
            let from_b = if j > 0 { next[j - 1] * step_b(i, j - 1, na, nb) } else { 0.0 };
            next[j] = from_a + from_b;
        }
        row = next;
    }
    (1.0 - row[nb]).clamp(0.0, 1.0)
}

/// Probability that the next pooled value comes from `b`, at lattice point `(i, j)`.
fn step_b(i: usize, j: usize, na: usize, nb: usize) -> f64 {
    let rem_a = (na - i) as f64;
    let rem_b = (nb - j) as f64;
    if rem_a + rem_b == 0.0 {
        0.0
    } else {
        rem_b / (rem_a + rem_b)
    }
}

/// Asymptotic p-value `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²)` with
/// `λ = (√m + 0.12 + 0.11/√m)·D` and `m = n_a·n_b/(n_a+n_b)`.
///
/// The series stops once a term drops below 1e-10; if it has not converged
/// after 100 terms (λ near zero) the p-value is 1.
pub fn ks_asymptotic_p(d: f64, na: usize, nb: usize) -> f64 {
    let m = na as f64 * nb as f64 / (na + nb) as f64;
    let sqrt_m = m.sqrt();
    let lambda = (sqrt_m + 0.12 + 0.11 / sqrt_m) * d;
    kolmogorov_q(lambda)
}

fn kolmogorov_q(lambda: f64) -> f64 {
    let a2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = f64::from(k);
        let term = 2.0 * sign * (a2 * kf * kf).exp();
        sum += term;
        if term.abs() < 1e-10 {
            return sum.clamp(0.0, 1.0);
        }
        sign = -sign;
    }
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

pub fn summarize(samples: &[f64]) -> Result<Summary> {
    check_samples(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    Ok(Summary {
        mean,
        median: quantile_sorted(&sorted, 0.5),
        q25: quantile_sorted(&sorted, 0.25),
        q75: quantile_sorted(&sorted, 0.75),
        min: sorted[0],
        max: sorted[n - 1],
        n,
    })
}

/// Linear interpolation between closest ranks: `h = (n−1)q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecdf_examples() {
        let e = ecdf(&[1.0, 2.0, 3.0]).unwrap();
        assert!((e.eval(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.eval(3.0), 1.0);
        assert_eq!(e.eval(0.5), 0.0);
        assert_eq!(ecdf(&[5.0, 5.0, 5.0]).unwrap().eval(5.0), 1.0);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(matches!(ecdf(&[]), Err(Error::InvalidArgument(_))));
        assert!(matches!(ks_two_sample(&[], &[1.0]), Err(Error::InvalidArgument(_))));
        assert!(matches!(ks_two_sample(&[1.0], &[]), Err(Error::InvalidArgument(_))));
        assert!(matches!(summarize(&[]), Err(Error::InvalidArgument(_))));
        assert!(matches!(ecdf(&[f64::NAN]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ks_identical_samples() {
        let a = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn ks_disjoint_supports() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[4.0, 5.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
    }

    #[test]
    fn ks_shifted_small_sample() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((r.statistic - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_p_for_tiny_samples() {
        // n = m = 2, D = 1: of the 6 orderings only aabb and bbaa reach D = 1.
        let r = ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-12);
        // D = 1/2 is reached by every ordering.
        let r = ks_two_sample(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn asymptotic_series_values() {
        assert_eq!(ks_asymptotic_p(0.0, 1000, 1000), 1.0);
        // λ = 1: Q = 2(e^-2 − e^-8 + e^-18 − ...)
        let m: f64 = 500.0;
        let d = 1.0 / (m.sqrt() + 0.12 + 0.11 / m.sqrt());
        let expected = 2.0 * ((-2.0f64).exp() - (-8.0f64).exp() + (-18.0f64).exp());
        assert!((ks_asymptotic_p(d, 1000, 1000) - expected).abs() < 1e-9);
        assert!(ks_asymptotic_p(1.0, 1000, 1000) < 1e-100);
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.median, s.n), (2.0, 2.0, 3));
        let z = summarize(&[0.0; 4]).unwrap();
        assert_eq!([z.mean, z.median, z.q25, z.q75, z.min, z.max], [0.0; 6]);
        let q = summarize(&[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert!((q.q25 - 1.75).abs() < 1e-15);
        assert!((q.q75 - 3.25).abs() < 1e-15);
        assert_eq!((q.min, q.max), (1.0, 4.0));
    }

    /// Second, independent reading of the same quantile rule: the value at
    /// fractional 1-based rank `1 + (n−1)q`.
    fn quantile_by_rank(samples: &[f64], q: f64) -> f64 {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = 1.0 + (s.len() as f64 - 1.0) * q;
        let below = rank.trunc() as usize;
        let frac = rank.fract();
        if below >= s.len() {
            return s[s.len() - 1];
        }
        s[below - 1] * (1.0 - frac) + s[below] * frac
    }

    #[test]
    fn quantile_rule_cross_check() {
        let data = [7.0, 1.5, 3.25, 9.0, 2.0, 11.0, 4.5];
        let mut sorted = data.to_vec();
        sorted.sort_by(f64::total_cmp);
        for q in [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0] {
            assert!((quantile_sorted(&sorted, q) - quantile_by_rank(&data, q)).abs() < 1e-12);
        }
        assert!((quantile_by_rank(&[1.0, 2.0, 3.0, 4.0], 0.25) - 1.75).abs() < 1e-15);
    }
}
