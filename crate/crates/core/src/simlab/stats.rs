//! One-tailed Welch two-sample t-test.

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("each batch needs at least 2 samples (got {0} and {1})")]
    InsufficientSamples(usize, usize),
    #[error("samples must be finite")]
    NonFinite,
}

/// Alternative hypothesis about `mean(a)` relative to `mean(b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Less,
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub significant: bool,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

pub fn compare(a: &[f64], b: &[f64], tail: Tail, alpha: f64) -> Result<WelchTest, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::InsufficientSamples(a.len(), b.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ((ma, va), (mb, vb)) = (mean_var(a), mean_var(b));
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    let diff = ma - mb;
    let (t, df, cdf) = if se2 == 0.0 {
        let df = na + nb - 2.0;
        match diff.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Less) => (f64::NEG_INFINITY, df, 0.0),
            Some(std::cmp::Ordering::Greater) => (f64::INFINITY, df, 1.0),
            _ => (0.0, df, 0.5),
        }
    } else {
        let t = diff / se2.sqrt();
        let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
        let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
        (t, df, dist.cdf(t))
    };
    let p = match tail {
        Tail::Less => cdf,
        Tail::Greater => 1.0 - cdf,
    };
    Ok(WelchTest { t, df, p, significant: p < alpha })
}
