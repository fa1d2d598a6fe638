//! Fair and balanced load assignment: an entropic primal learner over the
//! multi-simplex and two quadratic dual learners over the utility and saving
//! dual boxes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::fairness::{dual_gradient, DualBox, FairnessParams};
use crate::matrix::{AssignmentMatrix, Matrix};
use crate::oftrl::{EntropicOftrl, QuadOftrl};

/// How the first decision and dual points are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Init {
    /// Uniform assignment / box midpoints.
    #[default]
    Default,
    /// Flat-Dirichlet rows and uniform box points drawn from this seed.
    Seeded(u64),
}

/// What the controller sees after playing `x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentObservation {
    pub u: Vec<f64>,
    pub h: Vec<f64>,
    /// `du_dx[i]` = d u_i / d x (I x J).
    pub du_dx: Vec<Matrix>,
    /// `dh_dx[j]` = d h_j / d x (I x J).
    pub dh_dx: Vec<Matrix>,
}

/// Gradient predictions for the next slot. The primal entry predicts `g + w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPredictions {
    pub primal: Matrix,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl AssignmentPredictions {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            primal: Matrix::zeros(rows, cols),
            theta: vec![0.0; rows],
            phi: vec![0.0; cols],
        }
    }
}

/// Gradients of one slot: primal payoff gradients `g`, `w` and dual gradients `kappa`, `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentGradients {
    pub g: Matrix,
    pub w: Matrix,
    pub kappa: Vec<f64>,
    pub mu: Vec<f64>,
}

impl AssignmentGradients {
    pub fn primal(&self) -> Matrix {
        self.g.add(&self.w).expect("same shape")
    }

    /// The gradient triple in prediction form.
    pub fn as_predictions(&self) -> AssignmentPredictions {
        AssignmentPredictions {
            primal: self.primal(),
            theta: self.kappa.clone(),
            phi: self.mu.clone(),
        }
    }
}

/// `g = -sum_i theta_i du_i/dx` and `w = -sum_j phi_j dh_j/dx`.
pub fn primal_gradients(
    theta: &[f64],
    phi: &[f64],
    obs: &AssignmentObservation,
) -> Result<(Matrix, Matrix)> {
    check_dim(theta.len(), obs.du_dx.len())?;
    check_dim(phi.len(), obs.dh_dx.len())?;
    let weighted = |coef: &[f64], jac: &[Matrix]| -> Result<Matrix> {
        let (r, c) = jac.first().map_or((0, 0), Matrix::shape);
        let mut out = Matrix::zeros(r, c);
        for (&k, d) in coef.iter().zip(jac) {
            d.check_shape(r, c)?;
            for (o, v) in out.as_mut_slice().iter_mut().zip(d.as_slice()) {
                *o -= k * v;
            }
        }
        Ok(out)
    };
    Ok((weighted(theta, &obs.du_dx)?, weighted(phi, &obs.dh_dx)?))
}

/// Clamps values into `[lo, hi]`, returning how many were moved.
pub(crate) fn clip_into(values: &[f64], lo: f64, hi: f64) -> (Vec<f64>, usize) {
    let mut n = 0;
    let out = values
        .iter()
        .map(|&v| {
            let c = v.clamp(lo, hi);
            if c != v {
                n += 1;
            }
            c
        })
        .collect();
    (out, n)
}

/// Online state of the assignment controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPolicy {
    params: FairnessParams,
    theta_box: DualBox,
    phi_box: DualBox,
    primal: EntropicOftrl,
    dual_theta: QuadOftrl,
    dual_phi: QuadOftrl,
    x: AssignmentMatrix,
    theta: Vec<f64>,
    phi: Vec<f64>,
    clip_count: usize,
}

impl AssignmentPolicy {
    pub fn new(rows: usize, cols: usize, params: FairnessParams, init: Init) -> Result<Self> {
        params.validate()?;
        let theta_box = params.theta_box(rows)?;
        let phi_box = params.phi_box(cols)?;
        let primal = EntropicOftrl::new(rows, cols)?;
        let dual_theta = QuadOftrl::for_dual(&theta_box);
        let dual_phi = QuadOftrl::for_dual(&phi_box);
        let (x, theta, phi) = match init {
            Init::Default => (
                AssignmentMatrix::uniform(rows, cols),
                theta_box.midpoint(),
                phi_box.midpoint(),
            ),
            Init::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = primal.random_point(&mut rng);
                let th = dual_theta.random_point(&mut rng);
                let ph = dual_phi.random_point(&mut rng);
                (x, th, ph)
            }
        };
        Ok(Self {
            params,
            theta_box,
            phi_box,
            primal,
            dual_theta,
            dual_phi,
            x,
            theta,
            phi,
            clip_count: 0,
        })
    }

    pub fn params(&self) -> &FairnessParams {
        &self.params
    }
    pub fn theta_box(&self) -> &DualBox {
        &self.theta_box
    }
    pub fn phi_box(&self) -> &DualBox {
        &self.phi_box
    }
    pub fn primal_learner(&self) -> &EntropicOftrl {
        &self.primal
    }
    pub fn theta_learner(&self) -> &QuadOftrl {
        &self.dual_theta
    }
    pub fn phi_learner(&self) -> &QuadOftrl {
        &self.dual_phi
    }
    pub fn x(&self) -> &AssignmentMatrix {
        &self.x
    }
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }
    /// Number of utility / saving coordinates clipped into their bounds so far.
    pub fn clip_count(&self) -> usize {
        self.clip_count
    }
    pub fn rows(&self) -> usize {
        self.primal.rows()
    }
    pub fn cols(&self) -> usize {
        self.primal.cols()
    }

    /// Step constants `(eta, sigma, xi)`; sigma / xi are infinite for point boxes.
    pub fn step_constants(&self) -> (f64, f64, f64) {
        (
            self.primal.eta(),
            self.dual_theta.scale(),
            self.dual_phi.scale(),
        )
    }

    /// Clipped observation values and the number of clipped coordinates.
    pub fn clip(&self, obs: &AssignmentObservation) -> (Vec<f64>, Vec<f64>, usize) {
        let p = &self.params;
        let (u, a) = clip_into(&obs.u, p.u_min, p.u_max);
        let (h, b) = clip_into(&obs.h, p.h_min, p.h_max);
        (u, h, a + b)
    }

    /// Gradients of the current slot at the current dual point.
    pub fn gradients_at(
        &self,
        theta: &[f64],
        phi: &[f64],
        obs: &AssignmentObservation,
    ) -> Result<AssignmentGradients> {
        check_dim(self.rows(), obs.u.len())?;
        check_dim(self.cols(), obs.h.len())?;
        let (u, h, _) = self.clip(obs);
        let (g, w) = primal_gradients(theta, phi, obs)?;
        let kappa = dual_gradient(theta, &u, self.params.alpha)?;
        let mu = dual_gradient(phi, &h, self.params.beta)?;
        Ok(AssignmentGradients { g, w, kappa, mu })
    }

    /// Feeds the realized slot to all three learners.
    pub fn observe(&mut self, obs: &AssignmentObservation) -> Result<AssignmentGradients> {
        let grads = self.gradients_at(&self.theta, &self.phi, obs)?;
        let (_, _, clipped) = self.clip(obs);
        self.clip_count += clipped;
        self.primal.observe(&grads.primal())?;
        self.dual_theta.observe(&grads.kappa)?;
        self.dual_phi.observe(&grads.mu)?;
        Ok(grads)
    }

    /// Next decision for the given predictions, without mutating state.
    pub fn propose(
        &self,
        preds: &AssignmentPredictions,
    ) -> Result<(AssignmentMatrix, Vec<f64>, Vec<f64>)> {
        Ok((
            self.primal.propose(&preds.primal)?,
            self.dual_theta.propose(&preds.theta)?,
            self.dual_phi.propose(&preds.phi)?,
        ))
    }

    pub fn decide(&mut self, preds: &AssignmentPredictions) -> Result<()> {
        self.x = self.primal.decide(&preds.primal)?;
        self.theta = self.dual_theta.decide(&preds.theta)?;
        self.phi = self.dual_phi.decide(&preds.phi)?;
        Ok(())
    }

    /// One full slot: observe, then decide with the given (or zero) predictions.
    pub fn slot(
        &mut self,
        obs: &AssignmentObservation,
        preds: Option<&AssignmentPredictions>,
    ) -> Result<AssignmentGradients> {
        let grads = self.observe(obs)?;
        let zeros;
        let p = match preds {
            Some(p) => p,
            None => {
                zeros = AssignmentPredictions::zeros(self.rows(), self.cols());
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

    fn params() -> FairnessParams {
        FairnessParams {
            alpha: 1.0,
            beta: 1.0,
            u_min: 1.0,
            u_max: 10.0,
            h_min: 1.0,
            h_max: 10.0,
        }
    }

    #[test]
    fn init_constants() {
        let p = AssignmentPolicy::new(5, 4, params(), Init::Default).unwrap();
        let (eta, sigma, xi) = p.step_constants();
        assert_eq!(eta, 0.5);
        let d_theta = 0.9 * 5f64.sqrt();
        assert!((sigma - 2.0 * 2f64.sqrt() / d_theta).abs() < 1e-12);
        assert!((xi - 2.0 * 2f64.sqrt() / (0.9 * 2.0)).abs() < 1e-12);
        assert!(p.x().matrix().as_slice().iter().all(|&v| v == 0.25));
        assert!(p.theta().iter().all(|&t| (t + 0.55).abs() < 1e-15));
    }

    #[test]
    fn degenerate_dual_box() {
        let pr = FairnessParams {
            u_min: 3.0,
            u_max: 3.0,
            ..params()
        };
        let p = AssignmentPolicy::new(1, 2, pr, Init::Default).unwrap();
        assert_eq!(p.theta_box().diameter(), 0.0);
        assert_eq!(p.theta(), &[-1.0 / 3.0]);
    }

    #[test]
    fn seeded_init_is_reproducible_and_feasible() {
        let a = AssignmentPolicy::new(3, 4, params(), Init::Seeded(9)).unwrap();
        let b = AssignmentPolicy::new(3, 4, params(), Init::Seeded(9)).unwrap();
        assert_eq!(a, b);
        assert!(AssignmentMatrix::new(a.x().matrix().clone()).is_ok());
        assert!(a.theta_box().contains(a.theta()) && a.phi_box().contains(a.phi()));
    }

    #[test]
    fn linear_single_vbs_gradient() {
        let lam = 7.0;
        let obs = AssignmentObservation {
            u: vec![lam],
            h: vec![1.0, 1.0],
            du_dx: vec![Matrix::filled(1, 2, lam)],
            dh_dx: vec![Matrix::zeros(1, 2); 2],
        };
        let (g, w) = primal_gradients(&[-1.0], &[-0.5, -0.5], &obs).unwrap();
        assert_eq!(g.as_slice(), &[lam, lam]);
        assert_eq!(w.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn clipping_is_counted() {
        let mut p = AssignmentPolicy::new(1, 1, params(), Init::Default).unwrap();
        let obs = AssignmentObservation {
            u: vec![20.0],
            h: vec![0.5],
            du_dx: vec![Matrix::zeros(1, 1)],
            dh_dx: vec![Matrix::zeros(1, 1)],
        };
        p.slot(&obs, None).unwrap();
        assert_eq!(p.clip_count(), 2);
    }
}
