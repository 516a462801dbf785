use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("need at least 3 paired values, got {0}")]
    TooFew(usize),
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("zero variance")]
    ZeroVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided p-value from the t statistic; indicative only.
    pub p_value: f64,
    pub n: usize,
}

/// Above this many samples the t distribution is replaced by a normal.
const NORMAL_APPROX_ABOVE: usize = 200;

pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<Correlation, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(StatsError::TooFew(n));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(Correlation { r, p_value: p_value(r, n), n })
}

fn p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = (r * (df / (1.0 - r * r)).sqrt()).abs();
    let tail = if n > NORMAL_APPROX_ABOVE {
        Normal::standard().sf(t)
    } else {
        StudentsT::new(0.0, 1.0, df).expect("df >= 1").sf(t)
    };
    (2.0 * tail).min(1.0)
}

/// Counts of `values` in `[lo, hi)` bins of `width`, as `(bin_lo, count)`.
/// Values outside the range are dropped.
pub fn histogram(values: &[f64], width: f64, lo: f64, hi: f64) -> Vec<(f64, usize)> {
    assert!(width > 0.0 && hi > lo, "histogram needs a positive width and a non-empty range");
    let bins = ((hi - lo) / width - 1e-9).ceil().max(1.0) as usize;
    let even = (((hi - lo) / width) - bins as f64).abs() < 1e-9;
    let edge = |i: usize| if even { lo + (hi - lo) * i as f64 / bins as f64 } else { lo + i as f64 * width };
    let mut counts = vec![0usize; bins];
    for &v in values {
        if !(v >= lo && v < hi) {
            continue;
        }
        let mut i = (((v - lo) / width) as usize).min(bins - 1);
        if i + 1 < bins && edge(i + 1) <= v {
            i += 1;
        }
        while i > 0 && edge(i) > v {
            i -= 1;
        }
        counts[i] += 1;
    }
    counts.into_iter().enumerate().map(|(i, c)| (edge(i), c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn pearson_extremes() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson_r(&xs, &xs).unwrap().r - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson_r(&xs, &neg).unwrap().r + 1.0).abs() < 1e-15);
        assert_eq!(pearson_r(&xs, &[1.0; 4]), Err(StatsError::ZeroVariance));
        assert_eq!(pearson_r(&xs[..2], &xs[..2]), Err(StatsError::TooFew(2)));
        assert_eq!(pearson_r(&xs, &xs[..3]), Err(StatsError::LengthMismatch(4, 3)));
    }

    #[test]
    fn pearson_hand_computed() {
        // x = 1..5, y = 2,4,5,4,5: sxy = 6, sxx = 10, syy = 6
        let c = pearson_r(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 5.0, 4.0, 5.0]).unwrap();
        assert!((c.r - 6.0 / 60f64.sqrt()).abs() < 1e-12);
        // r^2 = 0.6, t = 2.121 on 3 df, two-sided p about 0.124
        assert!(c.p_value > 0.1 && c.p_value < 0.2, "{}", c.p_value);
    }

    #[test]
    fn p_value_regimes() {
        // r = 0.5 with n = 30: t = 3.055, two-sided p about 0.0049
        let p = p_value(0.5, 30);
        assert!((p - 0.0049).abs() < 0.0003, "{p}");
        // large n uses the normal tail: r = 0.1, n = 1000 gives t = 3.176
        let p = p_value(0.1, 1000);
        assert!((p - 0.0015).abs() < 0.0002, "{p}");
        assert_eq!(p_value(1.0, 10), 0.0);
    }

    #[test]
    fn histogram_examples() {
        assert_eq!(histogram(&[0.1, 0.12, 0.7], 0.5, 0.0, 1.0), [(0.0, 2), (0.5, 1)]);
        assert!(histogram(&[], 0.05, 0.0, 1.0).iter().all(|&(_, c)| c == 0));
        assert_eq!(histogram(&[], 0.05, 0.0, 1.0).len(), 20);
        let edges = histogram(&[0.15, 0.7, 1.0, -0.1], 0.05, 0.0, 1.0);
        assert_eq!(edges[3].1, 1);
        assert_eq!(edges[14].1, 1);
        assert_eq!(edges.iter().map(|b| b.1).sum::<usize>(), 2);
    }

    #[test]
    fn histogram_of_uniform_samples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let bins = histogram(&values, 0.05, 0.0, 1.0);
        assert_eq!(bins.iter().map(|b| b.1).sum::<usize>(), 10_000);
        // binomial(10000, 0.05): sd = sqrt(475)
        let sd = 475f64.sqrt();
        for (lo, c) in bins {
            assert!((c as f64 - 500.0).abs() < 5.0 * sd, "bin {lo}: {c}");
        }
    }
}
