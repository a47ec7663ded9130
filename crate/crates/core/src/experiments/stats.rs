use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 samples for a confidence interval, got {0}")]
    TooFewSamples(usize),
    #[error("samples contain a non-finite value")]
    NonFinite,
}

/// Sample mean, sample standard deviation (n - 1 denominator) and the 95%
/// Student-t confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub avg: f64,
    pub sd: f64,
    /// Margin of error: `t(0.975, n-1) * sd / sqrt(n)`.
    pub me: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Two-sided 95% Student-t critical value with `df` degrees of freedom.
pub fn t_critical_95(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1")
        .inverse_cdf(0.975)
}

impl SummaryStats {
    /// Statistics from already-aggregated sample size and SD (e.g. a published table).
    pub fn from_moments(n: usize, avg: f64, sd: f64) -> Result<Self, StatsError> {
        if n < 2 {
            return Err(StatsError::TooFewSamples(n));
        }
        let me = t_critical_95(n - 1) * sd / (n as f64).sqrt();
        Ok(Self {
            n,
            avg,
            sd,
            me,
            ci_lower: avg - me,
            ci_upper: avg + me,
        })
    }
}

pub fn summarize(samples: &[f64]) -> Result<SummaryStats, StatsError> {
    let n = samples.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples(n));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let avg = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - avg) * (x - avg)).sum::<f64>() / (n - 1) as f64;
    SummaryStats::from_moments(n, avg, var.sqrt())
}
