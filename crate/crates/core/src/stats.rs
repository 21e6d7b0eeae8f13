//! Summary statistics for Monte Carlo output.

use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Sample variance with a 95% normal-theory interval built from the spread of
/// the squared deviations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceEstimate {
    pub variance: f64,
    pub half_width: f64,
}

pub fn variance_with_ci(xs: &[f64]) -> VarianceEstimate {
    let r = xs.len();
    if r < 2 {
        return VarianceEstimate {
            variance: 0.0,
            half_width: f64::INFINITY,
        };
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let scale = r as f64 / (r - 1) as f64;
    let variance = mean(&sq) * scale;
    let se = (sample_variance(&sq) / r as f64).sqrt() * scale;
    VarianceEstimate {
        variance,
        half_width: Z95 * se,
    }
}

/// Anderson–Darling statistic of `xs` against the normal law, after
/// standardizing with the sample mean and standard deviation. The returned
/// value carries the small-sample correction for estimated parameters; values
/// above roughly 0.752 reject normality at the 5% level.
pub fn anderson_darling_normal(xs: &[f64]) -> f64 {
    let r = xs.len();
    if r < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let sd = sample_variance(xs).sqrt();
    if sd == 0.0 {
        return f64::INFINITY;
    }
    let normal = Normal::standard();
    let mut z: Vec<f64> = xs.iter().map(|x| (x - m) / sd).collect();
    z.sort_by(f64::total_cmp);
    let rf = r as f64;
    let s: f64 = (0..r)
        .map(|i| {
            let lo = normal.cdf(z[i]).max(1e-300);
            let hi = (1.0 - normal.cdf(z[r - 1 - i])).max(1e-300);
            (2 * i + 1) as f64 * (lo.ln() + hi.ln())
        })
        .sum();
    let a2 = -rf - s / rf;
    a2 * (1.0 + 0.75 / rf + 2.25 / (rf * rf))
}
