//! Per-slot run records.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// One slot of an assignment run. Learner fields are empty for baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub t: usize,
    pub x: Matrix,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// Floored utilities at `x`.
    pub u: Vec<f64>,
    /// Floored savings at `x`.
    pub h: Vec<f64>,
    /// Realized `g + w`.
    pub grad_primal: Matrix,
    /// Prediction of `g + w` charged at this slot.
    pub pred_primal: Matrix,
    pub kappa: Vec<f64>,
    pub pred_theta: Vec<f64>,
    pub mu: Vec<f64>,
    pub pred_phi: Vec<f64>,
    /// Coordinates clipped into the declared bounds at this slot.
    pub clipped: usize,
    /// Whether the lookahead fixed point used to predict this slot settled.
    pub lookahead_settled: bool,
}

/// One slot of a threshold run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinTbRecord {
    pub t: usize,
    pub y: Vec<f64>,
    pub theta: Vec<f64>,
    pub u: Vec<f64>,
    /// Weighted cost `phi * energy`.
    pub cost: f64,
    pub energy: f64,
    pub s: Vec<f64>,
    pub pred_s: Vec<f64>,
    pub m: Vec<f64>,
    pub pred_m: Vec<f64>,
    pub clipped: usize,
    pub lookahead_settled: bool,
}

/// A complete run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace<R> {
    pub policy: String,
    pub prediction: String,
    pub seed: u64,
    pub records: Vec<R>,
    /// Accumulated squared prediction errors per learner (primal first).
    pub sq_err_sums: Vec<f64>,
}

impl<R> RunTrace<R> {
    pub fn len(&self) -> usize {
        self.records.len()
    }
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub type AssignmentTrace = RunTrace<AssignmentRecord>;
pub type MinTbTrace = RunTrace<MinTbRecord>;

impl AssignmentTrace {
    pub fn clip_count(&self, upto: usize) -> usize {
        self.records.iter().take(upto).map(|r| r.clipped).sum()
    }
}

impl MinTbTrace {
    pub fn clip_count(&self, upto: usize) -> usize {
        self.records.iter().take(upto).map(|r| r.clipped).sum()
    }
}
