//! Dispersion summaries of per-entity values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    /// `(sum v)^2 / (n sum v^2)`; 1 for an all-zero vector.
    pub jain: f64,
    /// `max / min`; infinite when the minimum is zero and the maximum is not.
    pub max_min_ratio: f64,
    /// Population standard deviation.
    pub stddev: f64,
}

pub fn dispersion_metrics(values: &[f64]) -> Result<Dispersion> {
    if values.is_empty() {
        return Err(Error::Empty("values"));
    }
    if let Some(v) = values.iter().find(|&&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!(
            "dispersion needs finite nonnegative values, got {v}"
        )));
    }
    let n = values.len() as f64;
    let s: f64 = values.iter().sum();
    let s2: f64 = values.iter().map(|v| v * v).sum();
    let jain = if s2 == 0.0 { 1.0 } else { s * s / (n * s2) };
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_min_ratio = if max == 0.0 { 1.0 } else { max / min };
    let mean = s / n;
    let stddev = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    Ok(Dispersion {
        jain,
        max_min_ratio,
        stddev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(dispersion_metrics(&[2.0, 2.0, 2.0]).unwrap().jain, 1.0);
        assert_eq!(
            dispersion_metrics(&[0.0, 1.0, 0.0, 0.0]).unwrap().jain,
            0.25
        );
        assert!((dispersion_metrics(&[1.0, 2.0, 3.0]).unwrap().jain - 6.0 / 7.0).abs() < 1e-15);
        assert_eq!(dispersion_metrics(&[1.0, 4.0]).unwrap().max_min_ratio, 4.0);
        assert!(dispersion_metrics(&[]).is_err());
        assert!(dispersion_metrics(&[-1.0]).is_err());
    }
}
