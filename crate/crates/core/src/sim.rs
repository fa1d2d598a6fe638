//! Closed-loop simulation of the online controllers over an environment sequence.

use crate::assignment::{AssignmentObservation, AssignmentPolicy, AssignmentPredictions, Init};
use crate::error::{Error, Result};
use crate::evaluation::predictions::{make_predictions, PredictionMode};
use crate::evaluation::trace::{AssignmentRecord, AssignmentTrace, MinTbRecord, MinTbTrace};
use crate::fairness::FairnessParams;
use crate::matrix::AssignmentMatrix;
use crate::mintb::{MinTbObservation, MinTbParams, MinTbPolicy, MinTbPredictions};
use crate::models::{assignment_utility, energy_saving, mintb_eval, AssignmentEnv, MinTbEnv};

/// What the controller observes after playing `x` in `env`.
pub fn observe_assignment(
    x: &AssignmentMatrix,
    env: &AssignmentEnv,
) -> Result<AssignmentObservation> {
    let u = assignment_utility(x, env)?;
    let h = energy_saving(x, env)?;
    let dh_dx = h.jacobian();
    Ok(AssignmentObservation {
        u: u.value,
        h: h.value,
        du_dx: u.jacobian,
        dh_dx,
    })
}

pub fn observe_mintb(y: &[f64], env: &MinTbEnv) -> Result<MinTbObservation> {
    let e = mintb_eval(y, env)?;
    Ok(MinTbObservation {
        u: e.u,
        cost: e.cost,
        du_dy: e.du,
        dc_dy: e.dc,
    })
}

/// Gradients the assignment controller would see next slot if it played the
/// decision induced by predictions `p`.
fn assignment_lookahead(
    policy: &AssignmentPolicy,
    env: &AssignmentEnv,
    p: &AssignmentPredictions,
) -> Result<AssignmentPredictions> {
    let (x, theta, phi) = policy.propose(p)?;
    let obs = observe_assignment(&x, env)?;
    Ok(policy.gradients_at(&theta, &phi, &obs)?.as_predictions())
}

fn mintb_lookahead(
    policy: &MinTbPolicy,
    env: &MinTbEnv,
    p: &MinTbPredictions,
) -> Result<MinTbPredictions> {
    let (y, theta) = policy.propose(p)?;
    let obs = observe_mintb(&y, env)?;
    Ok(policy.gradients_at(&theta, &obs)?.as_predictions())
}

fn check_envs<E>(envs: &[E]) -> Result<()> {
    if envs.is_empty() {
        return Err(Error::Empty("environment sequence"));
    }
    Ok(())
}

/// Runs the assignment controller over `envs`.
pub fn run_assignment(
    envs: &[AssignmentEnv],
    params: &FairnessParams,
    mode: PredictionMode,
    init: Init,
    seed: u64,
) -> Result<AssignmentTrace> {
    check_envs(envs)?;
    mode.validate()?;
    let rows = envs[0].num_vbs();
    let cols = envs[0].num_servers();
    let mut policy = AssignmentPolicy::new(rows, cols, *params, init)?;
    let template = AssignmentPredictions::zeros(rows, cols);
    let mut settled_next = true;

    if mode.needs_lookahead() {
        // A forecast of the first slot drives the first decision, exactly as
        // it drives every later one.
        let snapshot = policy.clone();
        let mut f = |p: &AssignmentPredictions| assignment_lookahead(&snapshot, &envs[0], p);
        let (p, ok) = make_predictions(mode, &template, None, Some(&mut f), seed, 1)?;
        policy.decide(&p)?;
        settled_next = ok;
    }

    let mut records = Vec::with_capacity(envs.len());
    for (idx, env) in envs.iter().enumerate() {
        let t = idx + 1;
        let pred_primal = policy.primal_learner().last_pred().clone();
        let pred_theta = policy.theta_learner().last_pred().to_vec();
        let pred_phi = policy.phi_learner().last_pred().to_vec();
        let x = policy.x().matrix().clone();
        let theta = policy.theta().to_vec();
        let phi = policy.phi().to_vec();

        let obs = observe_assignment(policy.x(), env)?;
        let clipped = policy.clip(&obs).2;
        let grads = policy.observe(&obs)?;

        let settled = settled_next;
        let preds = match envs.get(idx + 1) {
            None => template.clone(),
            Some(next) => {
                let history = grads.as_predictions();
                let snapshot = policy.clone();
                let mut f = |p: &AssignmentPredictions| assignment_lookahead(&snapshot, next, p);
                let la: Option<
                    &mut dyn FnMut(&AssignmentPredictions) -> Result<AssignmentPredictions>,
                > = if mode.needs_lookahead() {
                    Some(&mut f)
                } else {
                    None
                };
                let (p, ok) =
                    make_predictions(mode, &template, Some(&history), la, seed, t as u64 + 1)?;
                settled_next = ok;
                p
            }
        };
        policy.decide(&preds)?;

        records.push(AssignmentRecord {
            t,
            x,
            theta,
            phi,
            u: obs.u,
            h: obs.h,
            grad_primal: grads.primal(),
            pred_primal,
            kappa: grads.kappa,
            pred_theta,
            mu: grads.mu,
            pred_phi,
            clipped,
            lookahead_settled: settled,
        });
    }
    Ok(AssignmentTrace {
        policy: "oftrl".into(),
        prediction: mode.label(),
        seed,
        records,
        sq_err_sums: vec![
            policy.primal_learner().sq_err_sum(),
            policy.theta_learner().sq_err_sum(),
            policy.phi_learner().sq_err_sum(),
        ],
    })
}

/// Runs the threshold controller over `envs`.
pub fn run_mintb(
    envs: &[MinTbEnv],
    params: &MinTbParams,
    mode: PredictionMode,
    init: Init,
    seed: u64,
) -> Result<MinTbTrace> {
    check_envs(envs)?;
    mode.validate()?;
    let dim = envs[0].num_users();
    let mut policy = MinTbPolicy::new(dim, *params, init)?;
    let template = MinTbPredictions::zeros(dim);
    let mut settled_next = true;

    if mode.needs_lookahead() {
        let snapshot = policy.clone();
        let mut f = |p: &MinTbPredictions| mintb_lookahead(&snapshot, &envs[0], p);
        let (p, ok) = make_predictions(mode, &template, None, Some(&mut f), seed, 1)?;
        policy.decide(&p)?;
        settled_next = ok;
    }

    let mut records = Vec::with_capacity(envs.len());
    for (idx, env) in envs.iter().enumerate() {
        let t = idx + 1;
        let pred_s = policy.primal_learner().last_pred().to_vec();
        let pred_m = policy.dual_learner().last_pred().to_vec();
        let y = policy.y().to_vec();
        let theta = policy.theta().to_vec();

        let ev = mintb_eval(&y, env)?;
        let obs = MinTbObservation {
            u: ev.u.clone(),
            cost: ev.cost,
            du_dy: ev.du,
            dc_dy: ev.dc,
        };
        let clipped = obs
            .u
            .iter()
            .filter(|&&u| u < params.u_min || u > params.u_max)
            .count();
        let grads = policy.observe(&obs)?;

        let settled = settled_next;
        let preds = match envs.get(idx + 1) {
            None => template.clone(),
            Some(next) => {
                let history = grads.as_predictions();
                let snapshot = policy.clone();
                let mut f = |p: &MinTbPredictions| mintb_lookahead(&snapshot, next, p);
                let la: Option<&mut dyn FnMut(&MinTbPredictions) -> Result<MinTbPredictions>> =
                    if mode.needs_lookahead() {
                        Some(&mut f)
                    } else {
                        None
                    };
                let (p, ok) =
                    make_predictions(mode, &template, Some(&history), la, seed, t as u64 + 1)?;
                settled_next = ok;
                p
            }
        };
        policy.decide(&preds)?;

        records.push(MinTbRecord {
            t,
            y,
            theta,
            u: ev.u,
            cost: ev.cost,
            energy: ev.energy,
            s: grads.s,
            pred_s,
            m: grads.m,
            pred_m,
            clipped,
            lookahead_settled: settled,
        });
    }
    Ok(MinTbTrace {
        policy: "oftrl".into(),
        prediction: mode.label(),
        seed,
        records,
        sq_err_sums: vec![
            policy.primal_learner().sq_err_sum(),
            policy.dual_learner().sq_err_sum(),
        ],
    })
}
