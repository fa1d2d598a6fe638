//! Fair and cost-efficient minimum-TB-size control: quadratic OFTRL on the
//! thresholds `y in [0, K]^I` and on the utility dual box.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{clip_into, Init};
use crate::error::{check_dim, Error, Result};
use crate::fairness::{dual_gradient, DualBox};
use crate::oftrl::{QuadOftrl, Sense};

/// Default largest threshold (bits).
pub const DEFAULT_K: f64 = 1e5;

/// Fairness exponent, utility envelope and threshold cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinTbParams {
    pub alpha: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub k: f64,
}

impl MinTbParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "threshold cap must be positive, got {}",
                self.k
            )));
        }
        DualBox::from_bounds(self.u_min, self.u_max, self.alpha, 1).map(|_| ())
    }

    pub fn theta_box(&self, dim: usize) -> Result<DualBox> {
        DualBox::from_bounds(self.u_min, self.u_max, self.alpha, dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinTbObservation {
    pub u: Vec<f64>,
    pub cost: f64,
    pub du_dy: Vec<f64>,
    pub dc_dy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinTbPredictions {
    pub primal: Vec<f64>,
    pub theta: Vec<f64>,
}

impl MinTbPredictions {
    pub fn zeros(dim: usize) -> Self {
        Self {
            primal: vec![0.0; dim],
            theta: vec![0.0; dim],
        }
    }
}

/// Primal gradient `s` (ascent direction in y) and dual gradient `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinTbGradients {
    pub s: Vec<f64>,
    pub m: Vec<f64>,
}

impl MinTbGradients {
    pub fn as_predictions(&self) -> MinTbPredictions {
        MinTbPredictions {
            primal: self.s.clone(),
            theta: self.m.clone(),
        }
    }
}

/// `s_i = -theta_i du_i/dy_i - dc/dy_i`.
pub fn threshold_gradient(theta: &[f64], du_dy: &[f64], dc_dy: &[f64]) -> Result<Vec<f64>> {
    check_dim(theta.len(), du_dy.len())?;
    check_dim(theta.len(), dc_dy.len())?;
    Ok(theta
        .iter()
        .zip(du_dy)
        .zip(dc_dy)
        .map(|((t, du), dc)| -t * du - dc)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinTbPolicy {
    params: MinTbParams,
    theta_box: DualBox,
    primal: QuadOftrl,
    dual: QuadOftrl,
    y: Vec<f64>,
    theta: Vec<f64>,
    clip_count: usize,
}

impl MinTbPolicy {
    pub fn new(dim: usize, params: MinTbParams, init: Init) -> Result<Self> {
        params.validate()?;
        if dim == 0 {
            return Err(Error::InvalidParameter("need at least one user".into()));
        }
        let theta_box = params.theta_box(dim)?;
        let primal = QuadOftrl::new(vec![0.0; dim], vec![params.k; dim], Sense::Maximize)?;
        let dual = QuadOftrl::for_dual(&theta_box);
        let (y, theta) = match init {
            Init::Default => (vec![params.k / 2.0; dim], theta_box.midpoint()),
            Init::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let y = primal.random_point(&mut rng);
                (y, dual.random_point(&mut rng))
            }
        };
        Ok(Self {
            params,
            theta_box,
            primal,
            dual,
            y,
            theta,
            clip_count: 0,
        })
    }

    pub fn params(&self) -> &MinTbParams {
        &self.params
    }
    pub fn theta_box(&self) -> &DualBox {
        &self.theta_box
    }
    pub fn primal_learner(&self) -> &QuadOftrl {
        &self.primal
    }
    pub fn dual_learner(&self) -> &QuadOftrl {
        &self.dual
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
    pub fn clip_count(&self) -> usize {
        self.clip_count
    }
    pub fn dim(&self) -> usize {
        self.y.len()
    }

    /// Diameter of the threshold box, `K sqrt(I)`.
    pub fn primal_diameter(&self) -> f64 {
        self.primal.diameter()
    }

    pub fn gradients_at(&self, theta: &[f64], obs: &MinTbObservation) -> Result<MinTbGradients> {
        check_dim(self.dim(), obs.u.len())?;
        let (u, _) = clip_into(&obs.u, self.params.u_min, self.params.u_max);
        Ok(MinTbGradients {
            s: threshold_gradient(theta, &obs.du_dy, &obs.dc_dy)?,
            m: dual_gradient(theta, &u, self.params.alpha)?,
        })
    }

    pub fn observe(&mut self, obs: &MinTbObservation) -> Result<MinTbGradients> {
        let grads = self.gradients_at(&self.theta, obs)?;
        self.clip_count += clip_into(&obs.u, self.params.u_min, self.params.u_max).1;
        self.primal.observe(&grads.s)?;
        self.dual.observe(&grads.m)?;
        Ok(grads)
    }

    pub fn propose(&self, preds: &MinTbPredictions) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((
            self.primal.propose(&preds.primal)?,
            self.dual.propose(&preds.theta)?,
        ))
    }

    pub fn decide(&mut self, preds: &MinTbPredictions) -> Result<()> {
        self.y = self.primal.decide(&preds.primal)?;
        self.theta = self.dual.decide(&preds.theta)?;
        Ok(())
    }

    pub fn slot(
        &mut self,
        obs: &MinTbObservation,
        preds: Option<&MinTbPredictions>,
    ) -> Result<MinTbGradients> {
        let grads = self.observe(obs)?;
        let zeros;
        let p = match preds {
            Some(p) => p,
            None => {
                zeros = MinTbPredictions::zeros(self.dim());
                &zeros
            }
        };
        self.decide(p)?;
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_geometry() {
        let p = MinTbParams {
            alpha: 1.0,
            u_min: 0.1,
            u_max: 1.0,
            k: 1e5,
        };
        let pol = MinTbPolicy::new(4, p, Init::Default).unwrap();
        assert!((pol.primal_diameter() - 2e5).abs() < 1e-9);
        assert!(
            (pol.theta_box().lower + 10.0).abs() < 1e-12
                && (pol.theta_box().upper + 1.0).abs() < 1e-12
        );
        assert_eq!(pol.y(), &[5e4; 4]);
        let a = MinTbPolicy::new(4, p, Init::Seeded(3)).unwrap();
        let b = MinTbPolicy::new(4, p, Init::Seeded(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dual_gradient_ignores_cost() {
        let p = MinTbParams {
            alpha: 2.0,
            u_min: 0.2,
            u_max: 1.0,
            k: 1e5,
        };
        let pol = MinTbPolicy::new(2, p, Init::Default).unwrap();
        let base = MinTbObservation {
            u: vec![0.5, 0.7],
            cost: 0.0,
            du_dy: vec![-1e-5; 2],
            dc_dy: vec![0.0; 2],
        };
        let costly = MinTbObservation {
            cost: 4.0,
            dc_dy: vec![-3e-5, -1e-5],
            ..base.clone()
        };
        let a = pol.gradients_at(pol.theta(), &base).unwrap();
        let b = pol.gradients_at(pol.theta(), &costly).unwrap();
        assert_eq!(a.m, b.m);
        assert_ne!(a.s, b.s);
    }
}
