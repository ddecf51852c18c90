//! Two-sample Kolmogorov-Smirnov test and STI-binned accident rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
}

/// Kolmogorov distribution tail `Q(λ) = 2 Σ (-1)^(j-1) exp(-2 j² λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // the alternating series converges slowly here; use the dual form
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let sum = y + y.powi(9) + y.powi(25) + y.powi(49);
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS statistic with the asymptotic p-value.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample("KS test needs two nonempty samples".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::invariant("KS sample", "contains NaN"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    let p = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    Ok(KsResult { d, p })
}

/// Accident frequency among (run, step) pairs whose STI fell in one bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StiBin {
    pub lower: f64,
    pub upper: f64,
    pub pairs: usize,
    pub accident_pairs: usize,
    pub probability: Option<f64>,
}

/// Bins `(sti, accident_follows)` pairs into `n` equal-width bins over
/// [0, 1]; the last bin is closed.
pub fn bin_accident_probability(pairs: impl IntoIterator<Item = (f64, bool)>, n: usize) -> Vec<StiBin> {
    let mut bins: Vec<StiBin> = (0..n)
        .map(|i| StiBin {
            lower: i as f64 / n as f64,
            upper: (i + 1) as f64 / n as f64,
            pairs: 0,
            accident_pairs: 0,
            probability: None,
        })
        .collect();
    for (sti, accident) in pairs {
        let idx = ((sti.clamp(0.0, 1.0) * n as f64) as usize).min(n - 1);
        bins[idx].pairs += 1;
        bins[idx].accident_pairs += accident as usize;
    }
    for b in &mut bins {
        if b.pairs > 0 {
            b.probability = Some(b.accident_pairs as f64 / b.pairs as f64);
        }
    }
    bins
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn identical_samples() {
        let a: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        let r = ks_statistic(&a, &a).unwrap();
        assert_eq!((r.d, r.p), (0.0, 1.0));
    }

    #[test]
    fn disjoint_supports() {
        let a: Vec<f64> = (0..100).map(|i| 0.1 * i as f64 / 99.0).collect();
        let b: Vec<f64> = (0..100).map(|i| 0.9 + 0.1 * i as f64 / 99.0).collect();
        let r = ks_statistic(&a, &b).unwrap();
        assert_eq!(r.d, 1.0);
        assert!(r.p < 1e-12);
    }

    #[test]
    fn same_distribution_not_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let a: Vec<f64> = (0..1000).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..1000).map(|_| rng.gen()).collect();
        assert!(ks_statistic(&a, &b).unwrap().p > 0.05);
    }

    #[test]
    fn statistic_against_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a: Vec<f64> = (0..rng.gen_range(1..30)).map(|_| (rng.gen::<f64>() * 10.0).round()).collect();
            let b: Vec<f64> = (0..rng.gen_range(1..30)).map(|_| (rng.gen::<f64>() * 10.0).round()).collect();
            let cdf = |s: &[f64], x: f64| s.iter().filter(|v| **v <= x).count() as f64 / s.len() as f64;
            let brute = a.iter().chain(&b).map(|&x| (cdf(&a, x) - cdf(&b, x)).abs()).fold(0.0, f64::max);
            assert!((ks_statistic(&a, &b).unwrap().d - brute).abs() < 1e-15);
        }
    }

    #[test]
    fn q_function_branches_agree() {
        // both forms are valid near the switch point
        let lambda = 1.18f64;
        let series: f64 = (1..50).map(|j| {
            let s = if j % 2 == 1 { 1.0 } else { -1.0 };
            2.0 * s * (-2.0 * (j * j) as f64 * lambda * lambda).exp()
        }).sum();
        assert!((kolmogorov_q(lambda - 1e-12) - series).abs() < 1e-9);
        assert!((kolmogorov_q(1.0) - 0.26999967).abs() < 1e-6);
        assert!(ks_statistic(&[], &[1.0]).is_err());
    }

    #[test]
    fn binning() {
        let bins = bin_accident_probability([(0.0, false), (0.05, true), (1.0, true), (0.95, false)], 10);
        assert_eq!(bins.len(), 10);
        assert_eq!((bins[0].pairs, bins[0].accident_pairs), (2, 1));
        assert_eq!(bins[9].probability, Some(0.5));
        assert_eq!(bins[5].probability, None);
        assert_eq!(bins.iter().map(|b| b.pairs).sum::<usize>(), 4);
    }
}
