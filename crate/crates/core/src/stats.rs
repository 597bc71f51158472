//! Sample moments, batch-means standard errors and least-squares fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Streaming mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean, assuming independent draws.
    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        iter.into_iter().for_each(|x| m.push(x));
        m
    }
}

/// Batch-means standard error of the mean of a correlated series, using
/// `⌊√n⌋` batches.
pub fn batch_means_se(xs: &[f64]) -> f64 {
    let n = xs.len();
    let batches = ((n as f64).sqrt().floor() as usize).max(2);
    let size = n / batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = xs
        .chunks_exact(size)
        .take(batches)
        .map(mean)
        .collect();
    (variance(&means) / means.len() as f64).sqrt()
}

/// Ordinary least-squares fit with coefficient standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residual_sd: f64,
}

/// Solve `min |X b - y|²` where `rows` are the rows of `X`.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<LinearFit> {
    let n = rows.len();
    if n == 0 || n != y.len() {
        return Err(Error::DegenerateDesign);
    }
    let p = rows[0].len();
    if n < p || rows.iter().any(|r| r.len() != p) {
        return Err(Error::DegenerateDesign);
    }
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let yv = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-10 * smax {
        return Err(Error::DegenerateDesign);
    }
    let beta = svd
        .solve(&yv, 1e-14 * smax)
        .map_err(|_| Error::DegenerateDesign)?;
    let resid = &yv - &x * &beta;
    let dof = n.saturating_sub(p);
    let s2 = if dof > 0 {
        resid.norm_squared() / dof as f64
    } else {
        0.0
    };
    let xtx_inv = (x.transpose() * &x)
        .try_inverse()
        .ok_or(Error::DegenerateDesign)?;
    let std_errors = (0..p).map(|j| (s2 * xtx_inv[(j, j)]).max(0.0).sqrt()).collect();
    Ok(LinearFit {
        coefficients: beta.iter().copied().collect(),
        std_errors,
        residual_sd: s2.sqrt(),
    })
}

/// Slope and intercept of `log10 y` against `log10 x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
}

impl LogLogFit {
    pub fn predict(&self, x: f64) -> f64 {
        10f64.powf(self.intercept + self.slope * x.log10())
    }
}

pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v.log10(), 1.0]).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log10()).collect();
    let fit = least_squares(&rows, &ly)?;
    Ok(LogLogFit {
        slope: fit.coefficients[0],
        slope_se: fit.std_errors[0],
        intercept: fit.coefficients[1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moments_match_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 0.5];
        let m: Moments = xs.iter().copied().collect();
        assert_relative_eq!(m.mean(), mean(&xs), epsilon = 1e-15);
        assert_relative_eq!(m.variance(), variance(&xs), epsilon = 1e-14);
        assert!(variance(&[1.0]).is_nan());
    }

    #[test]
    fn batch_means_of_iid_series() {
        // alternating series: batch means are exact, SE tiny
        let xs: Vec<f64> = (0..10_000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(batch_means_se(&xs) < 1e-12);
    }

    #[test]
    fn exact_plane_is_recovered() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for a in 0..4 {
            for b in 0..3 {
                rows.push(vec![a as f64, b as f64, 1.0]);
                y.push(-(a as f64) - 2.0 * b as f64 + 0.5);
            }
        }
        let fit = least_squares(&rows, &y).unwrap();
        assert_relative_eq!(fit.coefficients[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.coefficients[1], -2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.coefficients[2], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_design() {
        let rows = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(matches!(least_squares(&rows, &[1.0, 2.0, 3.0]), Err(Error::DegenerateDesign)));
        assert!(least_squares(&[], &[]).is_err());
    }

    #[test]
    fn loglog_slope() {
        let x = [1.0, 0.1, 0.01];
        let y = [2.0, 2e3, 2e6];
        let f = fit_loglog(&x, &y).unwrap();
        assert_relative_eq!(f.slope, -3.0, epsilon = 1e-12);
        assert_relative_eq!(f.predict(0.1), 2e3, max_relative = 1e-10);
    }
}
