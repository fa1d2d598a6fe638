//! Optimistic follow-the-regularized-leader learners with closed-form steps.
//!
//! Both learners keep the aggregate of observed gradients, the running sum of
//! squared prediction errors and the prediction that will be charged against
//! the next observed gradient. A step is `observe` followed by `decide`;
//! `propose` is the pure part of `decide` and is what lookahead predictors
//! iterate on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::fairness::{dual_gradient, dual_minimizer, psi, DualBox};
use crate::matrix::{sq_norm, sub_vec, AssignmentMatrix, Matrix};

/// Whether the learner minimizes (dual variables) or maximizes (threshold primal).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Quadratic-regularized OFTRL over a per-coordinate box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadOftrl {
    lower: Vec<f64>,
    upper: Vec<f64>,
    sense: Sense,
    diameter: f64,
    scale: f64,
    grad_sum: Vec<f64>,
    sq_err_sum: f64,
    last_pred: Vec<f64>,
    rounds: usize,
}

impl QuadOftrl {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, sense: Sense) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::Empty("box"));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite())
        {
            return Err(Error::InvalidParameter(
                "box needs finite lower <= upper".into(),
            ));
        }
        let diameter = sq_norm(&sub_vec(&upper, &lower)).sqrt();
        let scale = if diameter > 0.0 {
            2.0 * std::f64::consts::SQRT_2 / diameter
        } else {
            f64::INFINITY
        };
        let dim = lower.len();
        Ok(Self {
            lower,
            upper,
            sense,
            diameter,
            scale,
            grad_sum: vec![0.0; dim],
            sq_err_sum: 0.0,
            last_pred: vec![0.0; dim],
            rounds: 0,
        })
    }

    /// Minimizing learner over a dual box.
    pub fn for_dual(b: &DualBox) -> Self {
        Self::new(vec![b.lower; b.dim], vec![b.upper; b.dim], Sense::Minimize)
            .expect("dual boxes are well formed")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
    pub fn sense(&self) -> Sense {
        self.sense
    }
    pub fn diameter(&self) -> f64 {
        self.diameter
    }
    /// `2 sqrt(2) / diameter`; infinite for a single-point box.
    pub fn scale(&self) -> f64 {
        self.scale
    }
    pub fn grad_sum(&self) -> &[f64] {
        &self.grad_sum
    }
    pub fn sq_err_sum(&self) -> f64 {
        self.sq_err_sum
    }
    pub fn last_pred(&self) -> &[f64] {
        &self.last_pred
    }
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Current regularization weight `scale * sqrt(sq_err_sum)`.
    pub fn denominator(&self) -> f64 {
        if self.sq_err_sum == 0.0 {
            0.0
        } else {
            self.scale * self.sq_err_sum.sqrt()
        }
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| if u > l { rng.random_range(l..=u) } else { l })
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| v >= l && v <= u)
    }

    /// Sets the prediction that the next observed gradient will be charged against.
    pub fn set_prediction(&mut self, pred: &[f64]) -> Result<()> {
        check_dim(self.dim(), pred.len())?;
        self.last_pred.copy_from_slice(pred);
        Ok(())
    }

    /// Accumulates a realized gradient and its prediction error.
    pub fn observe(&mut self, grad: &[f64]) -> Result<()> {
        check_dim(self.dim(), grad.len())?;
        self.sq_err_sum += sq_norm(&sub_vec(grad, &self.last_pred));
        for (s, g) in self.grad_sum.iter_mut().zip(grad) {
            *s += g;
        }
        self.rounds += 1;
        Ok(())
    }

    /// Next point for the given optimistic prediction, without mutating state.
    pub fn propose(&self, pred: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), pred.len())?;
        let omega: Vec<f64> = self.grad_sum.iter().zip(pred).map(|(s, p)| s + p).collect();
        Ok(quad_closed_form(
            &self.lower,
            &self.upper,
            &omega,
            self.denominator(),
            self.sense,
        ))
    }

    /// `propose` and remember `pred` for charging at the next observation.
    pub fn decide(&mut self, pred: &[f64]) -> Result<Vec<f64>> {
        let next = self.propose(pred)?;
        self.last_pred.copy_from_slice(pred);
        Ok(next)
    }

    pub fn step(&mut self, grad: &[f64], pred: &[f64]) -> Result<Vec<f64>> {
        self.observe(grad)?;
        self.decide(pred)
    }
}

/// Minimizer (or maximizer) of `(d/2)|p|^2 + p.omega` (resp. `-(d/2)|p|^2 + p.omega`)
/// over the box, including the `d = 0` limit.
pub fn quad_closed_form(
    lower: &[f64],
    upper: &[f64],
    omega: &[f64],
    d: f64,
    sense: Sense,
) -> Vec<f64> {
    let sign = match sense {
        Sense::Minimize => -1.0,
        Sense::Maximize => 1.0,
    };
    let point_box = lower.iter().zip(upper).all(|(l, u)| l == u);
    if point_box {
        return lower.to_vec();
    }
    if d > 0.0 {
        return omega
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(&w, (&l, &u))| (sign * w / d).clamp(l, u))
            .collect();
    }
    omega
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&w, (&l, &u))| {
            let dir = sign * w;
            if dir > 0.0 {
                u
            } else if dir < 0.0 {
                l
            } else {
                0.5 * (l + u)
            }
        })
        .collect()
}

/// Step-size constant of the entropic learner for `cols` servers.
pub fn entropic_eta(cols: usize) -> f64 {
    let log_j = (cols as f64).ln().max(std::f64::consts::LN_2);
    (2.0 * std::f64::consts::SQRT_2 / log_j).sqrt().min(0.5)
}

/// Entropic-regularized OFTRL over a product of `rows` simplices of size `cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropicOftrl {
    rows: usize,
    cols: usize,
    eta: f64,
    agg: Matrix,
    sq_err_sum: f64,
    last_pred: Matrix,
    rounds: usize,
}

impl EntropicOftrl {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(
                "multi-simplex needs rows, cols >= 1".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            eta: entropic_eta(cols),
            agg: Matrix::zeros(rows, cols),
            sq_err_sum: 0.0,
            last_pred: Matrix::zeros(rows, cols),
            rounds: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn agg(&self) -> &Matrix {
        &self.agg
    }
    pub fn sq_err_sum(&self) -> f64 {
        self.sq_err_sum
    }
    pub fn last_pred(&self) -> &Matrix {
        &self.last_pred
    }
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// `eta * sqrt(sq_err_sum)`.
    pub fn eta_total(&self) -> f64 {
        if self.sq_err_sum == 0.0 {
            0.0
        } else {
            self.eta * self.sq_err_sum.sqrt()
        }
    }

    /// Each row drawn from a flat Dirichlet.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> AssignmentMatrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let row = m.row_mut(i);
            for v in row.iter_mut() {
                // -ln(U) with U in (0, 1] is Exp(1).
                *v = -(1.0 - rng.random::<f64>()).ln() + f64::MIN_POSITIVE;
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        AssignmentMatrix::from_matrix_unchecked(m)
    }

    pub fn set_prediction(&mut self, pred: &Matrix) -> Result<()> {
        pred.check_shape(self.rows, self.cols)?;
        self.last_pred = pred.clone();
        Ok(())
    }

    pub fn observe(&mut self, grad: &Matrix) -> Result<()> {
        grad.check_shape(self.rows, self.cols)?;
        let err = grad.sub(&self.last_pred)?.max_abs();
        self.sq_err_sum += err * err;
        self.agg.add_assign(grad)?;
        self.rounds += 1;
        Ok(())
    }

    pub fn propose(&self, pred: &Matrix) -> Result<AssignmentMatrix> {
        let omega = self.agg.add(pred)?;
        Ok(entropic_closed_form(&omega, self.eta_total()))
    }

    pub fn decide(&mut self, pred: &Matrix) -> Result<AssignmentMatrix> {
        let next = self.propose(pred)?;
        self.last_pred = pred.clone();
        Ok(next)
    }

    pub fn step(&mut self, grad: &Matrix, pred: &Matrix) -> Result<AssignmentMatrix> {
        self.observe(grad)?;
        self.decide(pred)
    }
}

/// Row-wise softmax of `2 omega / eta_total`, including the `eta_total = 0` limit.
pub fn entropic_closed_form(omega: &Matrix, eta_total: f64) -> AssignmentMatrix {
    let (rows, cols) = omega.shape();
    let mut out = Matrix::zeros(rows, cols);
    if eta_total > 0.0 {
        let k = 2.0 / eta_total;
        for i in 0..rows {
            let row = omega.row(i);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(k * b));
            let dst = out.row_mut(i);
            let mut s = 0.0;
            for (d, &w) in dst.iter_mut().zip(row) {
                *d = (k * w - m).exp();
                s += *d;
            }
            dst.iter_mut().for_each(|d| *d /= s);
        }
    } else if omega.as_slice().iter().all(|&w| w == 0.0) {
        out = Matrix::filled(rows, cols, 1.0 / cols as f64);
    } else {
        for i in 0..rows {
            let row = omega.row(i);
            let mut best = 0;
            for j in 1..cols {
                if row[j] > row[best] {
                    best = j;
                }
            }
            out.set(i, best, 1.0);
        }
    }
    AssignmentMatrix::from_matrix_unchecked(out)
}

/// Realized regret next to its theoretical bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundCheck {
    /// `lhs <= rhs` up to floating-point noise relative to the magnitudes involved.
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-9 * (1.0 + self.rhs.abs() + self.lhs.abs())
    }
}

/// One slot of a dual learner: the point played, the utilities it faced and
/// the gradient prediction charged for that slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualRound {
    pub theta: Vec<f64>,
    pub u: Vec<f64>,
    pub pred: Vec<f64>,
}

/// Dual regret against the best fixed point of the box, with the quadratic learner bound.
pub fn dual_regret_bound_check(
    rounds: &[DualRound],
    alpha: f64,
    dual_box: &DualBox,
) -> Result<BoundCheck> {
    if rounds.is_empty() {
        return Err(Error::Empty("trace"));
    }
    let dim = dual_box.dim;
    let mut u_bar = vec![0.0; dim];
    let mut played = 0.0;
    let mut err = 0.0;
    for r in rounds {
        check_dim(dim, r.u.len())?;
        check_dim(dim, r.pred.len())?;
        played += psi(&r.theta, &r.u, alpha)?;
        let g = dual_gradient(&r.theta, &r.u, alpha)?;
        err += sq_norm(&sub_vec(&g, &r.pred));
        for (a, v) in u_bar.iter_mut().zip(&r.u) {
            *a += v;
        }
    }
    let n = rounds.len() as f64;
    u_bar.iter_mut().for_each(|v| *v /= n);
    // Sum of proxies is n * (conj(theta) - theta . u_bar), minimized coordinatewise.
    let star = dual_minimizer(&u_bar, alpha, dual_box)?;
    let mut best = 0.0;
    for r in rounds {
        best += psi(&star, &r.u, alpha)?;
    }
    Ok(BoundCheck {
        lhs: played - best,
        rhs: 4.0 * std::f64::consts::SQRT_2 * dual_box.diameter() * err.sqrt(),
    })
}

/// One slot of the primal learner under a linear payoff `<grad, x>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalRound {
    pub x: Matrix,
    pub grad: Matrix,
    pub pred: Matrix,
}

/// Entropic learner bound constant `sqrt(2) I / eta + eta I ln J / 2`.
pub fn entropic_bound_constant(rows: usize, cols: usize) -> f64 {
    let eta = entropic_eta(cols);
    let i = rows as f64;
    std::f64::consts::SQRT_2 * i / eta + eta * i * (cols as f64).ln() / 2.0
}

/// Primal regret of linearized payoffs. The best fixed assignment for a sum
/// of linear payoffs is a per-row vertex, so the comparator is exact.
pub fn primal_regret_bound_check(rounds: &[PrimalRound]) -> Result<BoundCheck> {
    let first = rounds.first().ok_or(Error::Empty("trace"))?;
    let (rows, cols) = first.grad.shape();
    let mut total = Matrix::zeros(rows, cols);
    let mut played = 0.0;
    let mut err = 0.0;
    for r in rounds {
        r.x.check_shape(rows, cols)?;
        r.pred.check_shape(rows, cols)?;
        total.add_assign(&r.grad)?;
        played += r.grad.dot(&r.x);
        let e = r.grad.sub(&r.pred)?.max_abs();
        err += e * e;
    }
    let best: f64 = (0..rows)
        .map(|i| {
            total
                .row(i)
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    Ok(BoundCheck {
        lhs: best - played,
        rhs: entropic_bound_constant(rows, cols) * err.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_of_exterior_origin() {
        let mut q = QuadOftrl::new(vec![-2.0], vec![-1.0], Sense::Minimize).unwrap();
        q.observe(&[3.0]).unwrap();
        // grad_sum + pred = 0 with positive denominator.
        assert_eq!(q.propose(&[-3.0]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn degenerate_rules() {
        let q = QuadOftrl::new(vec![-2.0, -2.0], vec![-1.0, -1.0], Sense::Minimize).unwrap();
        assert_eq!(q.propose(&[0.0, 0.0]).unwrap(), vec![-1.5, -1.5]);
        assert_eq!(q.propose(&[1.0, -1.0]).unwrap(), vec![-2.0, -1.0]);
        let p = QuadOftrl::new(vec![0.0], vec![10.0], Sense::Maximize).unwrap();
        assert_eq!(p.propose(&[1.0]).unwrap(), vec![10.0]);
        let e = EntropicOftrl::new(2, 3).unwrap();
        let z = e.propose(&Matrix::zeros(2, 3)).unwrap();
        assert!(z.matrix().as_slice().iter().all(|&v| v == 1.0 / 3.0));
        let w = Matrix::from_rows(&[vec![1.0, 2.0, 2.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let x = e.propose(&w).unwrap();
        assert_eq!(x.matrix().row(0), &[0.0, 1.0, 0.0]);
        assert_eq!(x.matrix().row(1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn eta_values() {
        assert_eq!(entropic_eta(4), 0.5);
        assert_eq!(entropic_eta(1), 0.5);
    }

    #[test]
    fn perfect_predictions_keep_zero_error() {
        let mut q = QuadOftrl::new(vec![-3.0; 2], vec![-1.0; 2], Sense::Minimize).unwrap();
        let grads = [[1.0, -2.0], [0.5, 0.5], [-1.0, 3.0]];
        q.set_prediction(&grads[0]).unwrap();
        for t in 0..grads.len() {
            let next = if t + 1 < grads.len() {
                grads[t + 1]
            } else {
                [0.0, 0.0]
            };
            q.step(&grads[t], &next).unwrap();
            assert_eq!(q.sq_err_sum(), 0.0);
        }
    }

    #[test]
    fn zero_gradient_bounds() {
        let b = DualBox {
            lower: -1.0,
            upper: -0.1,
            dim: 2,
        };
        let rounds = vec![
            DualRound {
                theta: vec![-0.5, -0.5],
                u: vec![2.0, 2.0],
                pred: vec![0.0, 0.0]
            };
            3
        ];
        let c = dual_regret_bound_check(&rounds, 1.0, &b).unwrap();
        assert!(c.lhs.abs() < 1e-12 && c.rhs == 0.0 && c.holds());
        let pr = vec![
            PrimalRound {
                x: Matrix::filled(2, 2, 0.5),
                grad: Matrix::zeros(2, 2),
                pred: Matrix::zeros(2, 2)
            };
            3
        ];
        let c = primal_regret_bound_check(&pr).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
        assert!(primal_regret_bound_check(&[]).is_err());
    }

    #[test]
    fn one_slot_linear_gap() {
        let x = AssignmentMatrix::uniform(1, 3).into_matrix();
        let g = Matrix::from_rows(&[vec![1.0, 4.0, 2.0]]).unwrap();
        let c = primal_regret_bound_check(&[PrimalRound {
            x,
            grad: g,
            pred: Matrix::zeros(1, 3),
        }])
        .unwrap();
        assert!((c.lhs - (4.0 - 7.0 / 3.0)).abs() < 1e-12);
        assert!(c.holds());
    }
}
