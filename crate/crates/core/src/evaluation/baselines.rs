//! Per-slot baselines. Both solve the current slot's problem with that
//! slot's functions in hand: they stand for alternative objectives, not for
//! an alternative information model.

use crate::error::Result;
use crate::fairness::FairnessParams;
use crate::matrix::Matrix;
use crate::models::{assignment_utility, energy_saving, AssignmentEnv};

use super::oracle::{maximize_multisimplex, AssignmentObjective, OracleOptions, OracleResult};
use super::trace::{AssignmentRecord, AssignmentTrace};

/// Maximizer of `F_alpha(u_t(x)) + F_beta(h_t(x))` for one slot.
pub fn slot_fair_policy(
    env: &AssignmentEnv,
    params: &FairnessParams,
    opts: &OracleOptions,
) -> Result<OracleResult> {
    slot_policy(env, params.alpha, params.beta, opts, &[])
}

/// Maximizer of `sum u_t(x) + sum h_t(x)` for one slot.
pub fn utilitarian_policy(env: &AssignmentEnv, opts: &OracleOptions) -> Result<OracleResult> {
    slot_policy(env, 0.0, 0.0, opts, &[])
}

fn slot_policy(
    env: &AssignmentEnv,
    alpha: f64,
    beta: f64,
    opts: &OracleOptions,
    warm: &[Matrix],
) -> Result<OracleResult> {
    let obj = AssignmentObjective::new(std::slice::from_ref(env), alpha, beta)?;
    let (r, c) = obj.shape();
    maximize_multisimplex(r, c, &obj, opts, warm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    SlotFair,
    Utilitarian,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::SlotFair => "slot-fair",
            Baseline::Utilitarian => "utilitarian",
        }
    }
}

/// Oracle budget used per slot by the baselines: fewer restarts than the
/// hindsight benchmark, plus a warm start from the previous slot's choice.
pub fn baseline_options(seed: u64) -> OracleOptions {
    OracleOptions {
        restarts: 3,
        max_iters: 2000,
        tol: 1e-7,
        seed,
    }
}

/// Runs a per-slot baseline over a horizon. Returns the trace and the number
/// of slots whose oracle did not certify optimality.
pub fn run_baseline(
    envs: &[AssignmentEnv],
    params: &FairnessParams,
    which: Baseline,
    seed: u64,
) -> Result<(AssignmentTrace, usize)> {
    let (alpha, beta) = match which {
        Baseline::SlotFair => (params.alpha, params.beta),
        Baseline::Utilitarian => (0.0, 0.0),
    };
    let mut records = Vec::with_capacity(envs.len());
    let mut warnings = 0;
    let mut prev: Option<Matrix> = None;
    for (t, env) in envs.iter().enumerate() {
        let opts = baseline_options(seed.wrapping_add(t as u64));
        let warm: Vec<Matrix> = prev.iter().cloned().collect();
        let res = slot_policy(env, alpha, beta, &opts, &warm)?;
        warnings += usize::from(res.warning());
        let u = assignment_utility(&res.x, env)?;
        let h = energy_saving(&res.x, env)?;
        let (rows, cols) = res.x.matrix().shape();
        prev = Some(res.x.matrix().clone());
        records.push(AssignmentRecord {
            t: t + 1,
            x: res.x.into_matrix(),
            theta: Vec::new(),
            phi: Vec::new(),
            u: u.value,
            h: h.value,
            grad_primal: Matrix::zeros(rows, cols),
            pred_primal: Matrix::zeros(rows, cols),
            kappa: Vec::new(),
            pred_theta: Vec::new(),
            mu: Vec::new(),
            pred_phi: Vec::new(),
            clipped: 0,
            lookahead_settled: true,
        });
    }
    Ok((
        AssignmentTrace {
            policy: which.name().into(),
            prediction: "clairvoyant-slot".into(),
            seed,
            records,
            sq_err_sums: Vec::new(),
        },
        warnings,
    ))
}
