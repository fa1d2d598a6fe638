//! Horizon-fairness regret and the empirical audit of the theorem bounds.

use serde::{Deserialize, Serialize};

use crate::assignment::clip_into;
use crate::error::{Error, Result};
use crate::fairness::{fairness_sum, FairnessParams};
use crate::matrix::{sq_norm, sub_vec, AssignmentMatrix};
use crate::mintb::MinTbParams;
use crate::models::{assignment_utility, energy_saving, mintb_eval, AssignmentEnv, MinTbEnv};
use crate::oftrl::{entropic_bound_constant, BoundCheck};

use super::trace::{AssignmentRecord, MinTbRecord};

fn mean_of(rows: impl Iterator<Item = Vec<f64>>, dim: usize) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows {
        if r.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: r.len(),
            });
        }
        acc.iter_mut().zip(&r).for_each(|(a, v)| *a += v);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("trace"));
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    Ok(acc)
}

/// `F_alpha(u_avg) + F_beta(h_avg)`.
pub fn horizon_value(u_avg: &[f64], h_avg: &[f64], params: &FairnessParams) -> Result<f64> {
    if let Some(v) = u_avg.iter().chain(h_avg).find(|&&v| !(v > 0.0)) {
        return Err(Error::Domain(format!(
            "time-averaged value {v} is not positive"
        )));
    }
    Ok(fairness_sum(u_avg, params.alpha)? + fairness_sum(h_avg, params.beta)?)
}

/// Floored utilities and savings of a fixed assignment over the horizon.
pub fn fixed_assignment_values(
    x: &AssignmentMatrix,
    envs: &[AssignmentEnv],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut us = Vec::with_capacity(envs.len());
    let mut hs = Vec::with_capacity(envs.len());
    for e in envs {
        us.push(assignment_utility(x, e)?.value);
        hs.push(energy_saving(x, e)?.value);
    }
    Ok((us, hs))
}

/// Time averages of the floored utilities and savings in a trace.
pub fn trace_averages(records: &[AssignmentRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = records.first().ok_or(Error::Empty("trace"))?;
    Ok((
        mean_of(records.iter().map(|r| r.u.clone()), first.u.len())?,
        mean_of(records.iter().map(|r| r.h.clone()), first.h.len())?,
    ))
}

/// Horizon objective of `x_star` minus that of the trace, over `envs`
/// (which must be the slots the trace covers).
pub fn fairness_regret(
    records: &[AssignmentRecord],
    x_star: &AssignmentMatrix,
    envs: &[AssignmentEnv],
    params: &FairnessParams,
) -> Result<f64> {
    if records.len() != envs.len() {
        return Err(Error::Dimension {
            expected: envs.len(),
            got: records.len(),
        });
    }
    let (us, hs) = fixed_assignment_values(x_star, envs)?;
    let dim_u = us.first().map_or(0, Vec::len);
    let dim_h = hs.first().map_or(0, Vec::len);
    let star = horizon_value(
        &mean_of(us.into_iter(), dim_u)?,
        &mean_of(hs.into_iter(), dim_h)?,
        params,
    )?;
    let (ua, ha) = trace_averages(records)?;
    Ok(star - horizon_value(&ua, &ha, params)?)
}

/// `F_alpha(u_avg) - c_avg`.
pub fn galpha_value(u_avg: &[f64], cost_avg: f64, alpha: f64) -> Result<f64> {
    if let Some(v) = u_avg.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Domain(format!(
            "time-averaged utility {v} is not positive"
        )));
    }
    Ok(fairness_sum(u_avg, alpha)? - cost_avg)
}

/// Objective of a fixed threshold vector over the horizon.
pub fn galpha_fixed(y: &[f64], envs: &[MinTbEnv], alpha: f64) -> Result<f64> {
    let mut us = Vec::with_capacity(envs.len());
    let mut c = 0.0;
    for e in envs {
        let ev = mintb_eval(y, e)?;
        us.push(ev.u);
        c += ev.cost;
    }
    let u = mean_of(us.into_iter(), y.len())?;
    galpha_value(&u, c / envs.len() as f64, alpha)
}

/// Objective of a threshold trace.
pub fn galpha_trace(records: &[MinTbRecord], alpha: f64) -> Result<f64> {
    let first = records.first().ok_or(Error::Empty("trace"))?;
    let u = mean_of(records.iter().map(|r| r.u.clone()), first.u.len())?;
    let c = records.iter().map(|r| r.cost).sum::<f64>() / records.len() as f64;
    galpha_value(&u, c, alpha)
}

pub fn galpha_regret(
    records: &[MinTbRecord],
    y_star: &[f64],
    envs: &[MinTbEnv],
    params: &MinTbParams,
) -> Result<f64> {
    if records.len() != envs.len() {
        return Err(Error::Dimension {
            expected: envs.len(),
            got: records.len(),
        });
    }
    Ok(galpha_fixed(y_star, envs, params.alpha)? - galpha_trace(records, params.alpha)?)
}

/// The individual right-hand-side terms of a horizon regret bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremTerms {
    /// Primal learner prediction-error term (already divided by T).
    pub primal: f64,
    pub theta: f64,
    /// Saving dual term; zero for the threshold problem.
    pub phi: f64,
    pub theta_residual: f64,
    pub phi_residual: f64,
}

impl TheoremTerms {
    pub fn total(&self) -> f64 {
        self.primal + self.theta + self.phi + self.theta_residual + self.phi_residual
    }

    /// Sum of the three prediction-error terms.
    pub fn prediction_terms(&self) -> f64 {
        self.primal + self.theta + self.phi
    }
}

/// `(1/T) sum_t (v_t - v_bar) . w_t`.
fn drift_residual(points: &[&[f64]], weights: &[Vec<f64>]) -> f64 {
    let dim = points[0].len();
    let n = points.len() as f64;
    let mut bar = vec![0.0; dim];
    for p in points {
        bar.iter_mut().zip(p.iter()).for_each(|(b, v)| *b += v / n);
    }
    points
        .iter()
        .zip(weights)
        .map(|(p, w)| {
            p.iter()
                .zip(&bar)
                .zip(w)
                .map(|((v, b), x)| (v - b) * x)
                .sum::<f64>()
        })
        .sum::<f64>()
        / n
}

/// Realized regret against the full bound for an assignment run.
pub fn assignment_theorem_check(
    records: &[AssignmentRecord],
    x_star: &AssignmentMatrix,
    envs: &[AssignmentEnv],
    params: &FairnessParams,
) -> Result<(BoundCheck, TheoremTerms)> {
    let regret = fairness_regret(records, x_star, envs, params)?;
    let (rows, cols) = records[0].x.shape();
    let n = records.len() as f64;
    let theta_d = params.theta_box(rows)?.diameter();
    let phi_d = params.phi_box(cols)?.diameter();
    let (mut ep, mut et, mut ef) = (0.0, 0.0, 0.0);
    for r in records {
        let e = r.grad_primal.sub(&r.pred_primal)?.max_abs();
        ep += e * e;
        et += sq_norm(&sub_vec(&r.kappa, &r.pred_theta));
        ef += sq_norm(&sub_vec(&r.mu, &r.pred_phi));
    }
    let (us, hs) = fixed_assignment_values(x_star, envs)?;
    let us: Vec<Vec<f64>> = us
        .iter()
        .map(|u| clip_into(u, params.u_min, params.u_max).0)
        .collect();
    let hs: Vec<Vec<f64>> = hs
        .iter()
        .map(|h| clip_into(h, params.h_min, params.h_max).0)
        .collect();
    let thetas: Vec<&[f64]> = records.iter().map(|r| r.theta.as_slice()).collect();
    let phis: Vec<&[f64]> = records.iter().map(|r| r.phi.as_slice()).collect();
    let c = 4.0 * std::f64::consts::SQRT_2;
    let terms = TheoremTerms {
        primal: entropic_bound_constant(rows, cols) * ep.sqrt() / n,
        theta: c * theta_d * et.sqrt() / n,
        phi: c * phi_d * ef.sqrt() / n,
        theta_residual: drift_residual(&thetas, &us),
        phi_residual: drift_residual(&phis, &hs),
    };
    Ok((
        BoundCheck {
            lhs: regret,
            rhs: terms.total(),
        },
        terms,
    ))
}

/// Realized regret against the full bound for a threshold run.
pub fn mintb_theorem_check(
    records: &[MinTbRecord],
    y_star: &[f64],
    envs: &[MinTbEnv],
    params: &MinTbParams,
) -> Result<(BoundCheck, TheoremTerms)> {
    let regret = galpha_regret(records, y_star, envs, params)?;
    let dim = y_star.len();
    let n = records.len() as f64;
    let y_d = params.k * (dim as f64).sqrt();
    let theta_d = params.theta_box(dim)?.diameter();
    let (mut es, mut em) = (0.0, 0.0);
    for r in records {
        es += sq_norm(&sub_vec(&r.s, &r.pred_s));
        em += sq_norm(&sub_vec(&r.m, &r.pred_m));
    }
    let us: Vec<Vec<f64>> = envs
        .iter()
        .map(|e| Ok(clip_into(&mintb_eval(y_star, e)?.u, params.u_min, params.u_max).0))
        .collect::<Result<_>>()?;
    let thetas: Vec<&[f64]> = records.iter().map(|r| r.theta.as_slice()).collect();
    let c = 4.0 * std::f64::consts::SQRT_2;
    let terms = TheoremTerms {
        primal: c * y_d * es.sqrt() / n,
        theta: c * theta_d * em.sqrt() / n,
        phi: 0.0,
        theta_residual: drift_residual(&thetas, &us),
        phi_residual: 0.0,
    };
    Ok((
        BoundCheck {
            lhs: regret,
            rhs: terms.total(),
        },
        terms,
    ))
}
