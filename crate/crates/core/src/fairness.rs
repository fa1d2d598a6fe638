//! Generalized alpha-fairness, its conjugate, the saddle proxy and dual boxes.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Exponents closer to one than this use the logarithmic branch.
pub const ALPHA_ONE_TOL: f64 = 1e-9;

#[inline]
fn is_log_branch(alpha: f64) -> bool {
    (alpha - 1.0).abs() < ALPHA_ONE_TOL
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "fairness exponent must be >= 0, got {alpha}"
        )))
    }
}

/// Scalar alpha-fair utility.
pub fn f_alpha(u: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::Domain(format!(
            "fairness argument must be positive, got {u}"
        )));
    }
    if is_log_branch(alpha) {
        Ok(u.ln())
    } else {
        Ok((u.powf(1.0 - alpha) - 1.0) / (1.0 - alpha))
    }
}

/// Sum of [`f_alpha`] over the components.
pub fn fairness_sum(u: &[f64], alpha: f64) -> Result<f64> {
    u.iter().map(|&v| f_alpha(v, alpha)).sum()
}

/// Fairness exponents and the utility / saving envelopes that define the dual boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessParams {
    pub alpha: f64,
    pub beta: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl FairnessParams {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        check_alpha(self.beta)?;
        for (name, lo, hi) in [("u", self.u_min, self.u_max), ("h", self.h_min, self.h_max)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} bounds must satisfy 0 < min <= max, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn theta_box(&self, dim: usize) -> Result<DualBox> {
        DualBox::from_bounds(self.u_min, self.u_max, self.alpha, dim)
    }

    pub fn phi_box(&self, dim: usize) -> Result<DualBox> {
        DualBox::from_bounds(self.h_min, self.h_max, self.beta, dim)
    }
}

/// The box `[lower, upper]^dim` of negative dual variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualBox {
    pub lower: f64,
    pub upper: f64,
    pub dim: usize,
}

impl DualBox {
    /// Box for values in `[v_min, v_max]` under the given exponent.
    pub fn from_bounds(v_min: f64, v_max: f64, exponent: f64, dim: usize) -> Result<Self> {
        check_alpha(exponent)?;
        if !(v_min > 0.0 && v_min <= v_max && v_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bad value bounds [{v_min}, {v_max}]"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "dual box dimension must be positive".into(),
            ));
        }
        let lower = -v_min.powf(-exponent);
        let upper = -v_max.powf(-exponent);
        Ok(Self {
            lower: lower.min(upper),
            upper: lower.max(upper),
            dim,
        })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        self.width() * (self.dim as f64).sqrt()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        vec![0.5 * (self.lower + self.upper); self.dim]
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim && theta.iter().all(|&t| t >= self.lower && t <= self.upper)
    }
}

fn conj_scalar(theta: f64, alpha: f64) -> Result<f64> {
    if !(theta < 0.0) || !theta.is_finite() {
        return Err(Error::Domain(format!(
            "dual coordinate must be negative, got {theta}"
        )));
    }
    let neg = -theta;
    if is_log_branch(alpha) {
        Ok(-1.0 - neg.ln())
    } else if alpha == 0.0 {
        // Linear utility: the conjugate is finite only at -1.
        if neg == 1.0 {
            Ok(-1.0)
        } else {
            Err(Error::Domain(format!(
                "exponent 0 requires dual value -1, got {theta}"
            )))
        }
    } else {
        Ok((alpha * neg.powf(1.0 - 1.0 / alpha) - 1.0) / (1.0 - alpha))
    }
}

/// Conjugate of `-F_alpha` evaluated at a negative dual vector.
pub fn conjugate(theta: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    theta.iter().map(|&t| conj_scalar(t, alpha)).sum()
}

/// Saddle proxy `conj(theta) - theta . u`.
pub fn psi(theta: &[f64], u: &[f64], alpha: f64) -> Result<f64> {
    check_dim(theta.len(), u.len())?;
    if let Some(v) = u.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Domain(format!("utility must be positive, got {v}")));
    }
    let lin: f64 = theta.iter().zip(u).map(|(t, v)| t * v).sum();
    Ok(conjugate(theta, alpha)? - lin)
}

/// Gradient of [`psi`] with respect to theta: `(-theta)^(-1/alpha) - u`.
pub fn dual_gradient(theta: &[f64], u: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_dim(theta.len(), u.len())?;
    theta
        .iter()
        .zip(u)
        .map(|(&t, &v)| {
            if !(t < 0.0) {
                return Err(Error::Domain(format!(
                    "dual coordinate must be negative, got {t}"
                )));
            }
            let inv = if alpha == 0.0 {
                if t != -1.0 {
                    return Err(Error::Domain(format!(
                        "exponent 0 requires dual value -1, got {t}"
                    )));
                }
                1.0
            } else if is_log_branch(alpha) {
                1.0 / -t
            } else {
                (-t).powf(-1.0 / alpha)
            };
            Ok(inv - v)
        })
        .collect()
}

/// Minimizer of `psi(., u)` over the box: the clamped stationary point `-u^(-alpha)`.
pub fn dual_minimizer(u: &[f64], alpha: f64, dual_box: &DualBox) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_dim(dual_box.dim, u.len())?;
    u.iter()
        .map(|&v| {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("utility must be positive, got {v}")));
            }
            Ok(dual_box.clamp(-v.powf(-alpha)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_examples() {
        assert_eq!(f_alpha(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(f_alpha(5.0, 0.0).unwrap(), 4.0);
        assert!((f_alpha(2.0, 1.000001).unwrap() - 2f64.ln()).abs() < 1e-5);
        assert!(f_alpha(0.0, 1.0).is_err());
        assert!(f_alpha(-1.0, 2.0).is_err());
    }

    #[test]
    fn sum_examples() {
        assert_eq!(fairness_sum(&[1.0, 1.0, 1.0], 1.0).unwrap(), 0.0);
        assert_eq!(fairness_sum(&[5.0, 5.0], 0.0).unwrap(), 8.0);
        let v = fairness_sum(&[2.0, 4.0], 2.0).unwrap();
        let indep = (1.0 / 2.0 - 1.0) / -1.0 + (1.0 / 4.0 - 1.0) / -1.0;
        assert!((v - indep).abs() < 1e-15 && (v - 1.25).abs() < 1e-15);
        assert!(fairness_sum(&[1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn conjugate_examples() {
        assert_eq!(conjugate(&[-1.0], 1.0).unwrap(), -1.0);
        assert!((conjugate(&[-1.0], 2.0).unwrap() + 1.0).abs() < 1e-15);
        assert!(conjugate(&[0.0], 1.0).is_err());
        // Dense-grid oracle: max over u in [0.5, 4] of theta*u + ln u at theta = -0.5.
        let n = 2_000_000;
        let best = (0..=n)
            .map(|k| 0.5 + 3.5 * k as f64 / n as f64)
            .map(|u| -0.5 * u + u.ln())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((conjugate(&[-0.5], 1.0).unwrap() - best).abs() < 1e-6);
    }

    #[test]
    fn psi_examples() {
        assert!(psi(&[-1.0], &[1.0], 1.0).unwrap().abs() < 1e-15);
        assert!((psi(&[-0.5], &[2.0], 1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn minimizer_examples() {
        let b = DualBox {
            lower: -2.0,
            upper: -0.25,
            dim: 1,
        };
        assert_eq!(dual_minimizer(&[1.0], 1.0, &b).unwrap(), vec![-1.0]);
        assert_eq!(dual_minimizer(&[2.0], 1.0, &b).unwrap(), vec![-0.5]);
        assert_eq!(dual_minimizer(&[10.0], 1.0, &b).unwrap(), vec![-0.25]);
    }

    #[test]
    fn box_construction() {
        let p = FairnessParams {
            alpha: 1.0,
            beta: 1.0,
            u_min: 0.1,
            u_max: 1.0,
            h_min: 1.0,
            h_max: 1.0,
        };
        let b = p.theta_box(4).unwrap();
        assert!((b.lower + 10.0).abs() < 1e-12 && (b.upper + 1.0).abs() < 1e-12);
        assert_eq!(p.phi_box(2).unwrap().diameter(), 0.0);
    }

    #[test]
    fn linear_exponent_uses_unit_point() {
        let b = DualBox::from_bounds(0.5, 3.0, 0.0, 2).unwrap();
        assert_eq!((b.lower, b.upper), (-1.0, -1.0));
        assert_eq!(
            dual_gradient(&[-1.0, -1.0], &[2.0, 0.5], 0.0).unwrap(),
            vec![-1.0, 0.5]
        );
        assert!(
            (psi(&[-1.0, -1.0], &[2.0, 0.5], 0.0).unwrap()
                - fairness_sum(&[2.0, 0.5], 0.0).unwrap())
            .abs()
                < 1e-15
        );
    }
}
