//! Estimators shared by the Monte Carlo drivers and the fitting routines.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn exact(v: f64) -> Self {
        Estimate {
            mean: v,
            stderr: 0.0,
            n: 1,
        }
    }

    /// `|self - target|` in units of the standard error (infinite if the
    /// error vanishes and the values differ).
    pub fn sigmas_from(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean with the standard error of independent samples.
pub fn mean_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len();
    let m = mean(xs);
    let var = if n > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Estimate {
        mean: m,
        stderr: (var / n as f64).sqrt(),
        n,
    }
}

/// Jackknife estimate of `mean(num) / mean(den)` over paired samples.
pub fn jackknife_ratio(num: &[f64], den: &[f64]) -> Estimate {
    assert_eq!(num.len(), den.len());
    let n = num.len();
    let (sn, sd): (f64, f64) = (num.iter().sum(), den.iter().sum());
    let full = sn / sd;
    if n < 2 {
        return Estimate {
            mean: full,
            stderr: 0.0,
            n,
        };
    }
    let leave: Vec<f64> = (0..n).map(|i| (sn - num[i]) / (sd - den[i])).collect();
    let lm = mean(&leave);
    let var = leave.iter().map(|x| (x - lm).powi(2)).sum::<f64>() * (n - 1) as f64 / n as f64;
    Estimate {
        mean: n as f64 * full - (n - 1) as f64 * lm,
        stderr: var.sqrt(),
        n,
    }
}

/// Integrated autocorrelation time with Sokal's self-consistent window
/// (`W ≥ 6 τ`). Returns 0.5 for an uncorrelated or constant series.
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 0.5;
    }
    let m = mean(series);
    let c0 = series.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
    if c0 <= f64::EPSILON * m.abs().max(1.0) * 1e-6 || c0 == 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for t in 1..n / 2 {
        let ct = series[..n - t]
            .iter()
            .zip(&series[t..])
            .map(|(a, b)| (a - m) * (b - m))
            .sum::<f64>()
            / (n - t) as f64;
        tau += ct / c0;
        if t as f64 >= 6.0 * tau {
            break;
        }
    }
    tau.max(0.5)
}

/// Weighted least-squares fit of `y ≈ Σ_k c_k f_k(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub errors: Vec<f64>,
    pub chi2: f64,
    /// `χ² + 2k`.
    pub aic: f64,
}

/// `design[i]` holds the basis functions evaluated at point `i`.
pub fn weighted_linear_fit(design: &[Vec<f64>], y: &[f64], sigma: &[f64]) -> Option<LinearFit> {
    let n = y.len();
    let k = design.first()?.len();
    if n < k {
        return None;
    }
    let a = DMatrix::from_fn(n, k, |i, j| design[i][j] / sigma[i]);
    let b = DVector::from_iterator(n, (0..n).map(|i| y[i] / sigma[i]));
    let ata = a.transpose() * &a;
    let cov = ata.clone().try_inverse()?;
    let coef = &cov * (a.transpose() * &b);
    let resid = &a * &coef - &b;
    let chi2 = resid.norm_squared();
    Some(LinearFit {
        coefficients: coef.iter().copied().collect(),
        errors: (0..k).map(|j| cov[(j, j)].sqrt()).collect(),
        chi2,
        aic: chi2 + 2.0 * k as f64,
    })
}

/// Unweighted straight-line fit `y = a + b x`; returns `(a, b, rss)`.
pub fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    (a, b, rss)
}

/// First zero of `ya - yb` on the grid `xs`, by linear interpolation.
pub fn crossing(xs: &[f64], ya: &[f64], yb: &[f64]) -> Option<f64> {
    let d: Vec<f64> = ya.iter().zip(yb).map(|(a, b)| a - b).collect();
    for i in 0..xs.len().saturating_sub(1) {
        if d[i] == 0.0 {
            return Some(xs[i]);
        }
        if d[i].signum() != d[i + 1].signum() && d[i + 1] != 0.0 {
            let t = d[i] / (d[i] - d[i + 1]);
            return Some(xs[i] + t * (xs[i + 1] - xs[i]));
        }
    }
    if d.last() == Some(&0.0) {
        return xs.last().copied();
    }
    None
}

/// Linear-interpolated quantile of a sorted slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn jackknife_of_ratio_is_close_to_plain_ratio() {
        let mut rng = crate::rng::task_rng(1, 0);
        let num: Vec<f64> = (0..200).map(|_| 1.0 + rng.gen::<f64>()).collect();
        let den: Vec<f64> = (0..200).map(|_| 2.0 + rng.gen::<f64>()).collect();
        let e = jackknife_ratio(&num, &den);
        assert!((e.mean - mean(&num) / mean(&den)).abs() < 1e-3);
        assert!(e.stderr > 0.0 && e.stderr < 0.05);
    }

    #[test]
    fn autocorrelation_of_ar1() {
        // x_t = a x_{t-1} + noise has τ = (1+a) / (2(1-a))
        let a: f64 = 0.8;
        let mut rng = crate::rng::task_rng(2, 0);
        let mut x = 0.0;
        let series: Vec<f64> = (0..200_000)
            .map(|_| {
                x = a * x + rng.gen::<f64>() - 0.5;
                x
            })
            .collect();
        let tau = integrated_autocorrelation(&series);
        let exact = (1.0 + a) / (2.0 * (1.0 - a));
        assert!((tau - exact).abs() < 0.1 * exact, "{tau} vs {exact}");
        assert_eq!(integrated_autocorrelation(&[1.0; 100]), 0.5);
    }

    #[test]
    fn exact_fit_recovers_coefficients() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let design: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x, x * x]).collect();
        let y: Vec<f64> = xs.iter().map(|&x| 2.0 - x + 0.5 * x * x).collect();
        let fit = weighted_linear_fit(&design, &y, &[1.0; 10]).unwrap();
        for (c, e) in fit.coefficients.iter().zip([2.0, -1.0, 0.5]) {
            assert!((c - e).abs() < 1e-10);
        }
        assert!(fit.chi2 < 1e-18);
    }

    #[test]
    fn crossing_interpolates() {
        let x = [0.0, 1.0, 2.0];
        let c = crossing(&x, &[0.0, 1.0, 2.0], &[1.0, 1.5, 1.0]).unwrap();
        assert!((c - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(crossing(&x, &[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]), None);
    }
}
