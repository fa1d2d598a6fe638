//! Hindsight benchmarks: projected-gradient ascent over the multi-simplex and
//! a separable grid plus golden-section search over the threshold box.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::{f_alpha, FairnessParams};
use crate::matrix::{AssignmentMatrix, Matrix};
use crate::mintb::MinTbParams;
use crate::models::{empty_buffer_kernel, AssignmentEnv, MinTbEnv};
use crate::oftrl::EntropicOftrl;

/// Budget of the projected-gradient oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub restarts: usize,
    pub max_iters: usize,
    /// Certificate: norm of `x - P(x + grad)`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iters: 5000,
            tol: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub x: AssignmentMatrix,
    pub value: f64,
    /// Projected-gradient norm at `x`.
    pub pg_norm: f64,
    pub iterations: usize,
    /// False when the best restart did not reach the certificate tolerance.
    pub converged: bool,
}

impl OracleResult {
    pub fn warning(&self) -> bool {
        !self.converged
    }
}

/// Euclidean projection onto the probability simplex (sorting method).
pub fn project_simplex(v: &mut [f64]) {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &x) in s.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - tau).max(0.0);
    }
}

fn project_rows(m: &mut Matrix) {
    for i in 0..m.rows() {
        project_simplex(m.row_mut(i));
    }
}

fn pg_norm(x: &Matrix, g: &Matrix) -> f64 {
    let mut p = x.add(g).expect("shape");
    project_rows(&mut p);
    p.sub(x)
        .expect("shape")
        .as_slice()
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// A differentiable objective to maximize. `value` defaults to the first
/// half of `value_grad`; override it when the value alone is cheaper.
pub trait Objective {
    fn value_grad(&self, x: &Matrix) -> (f64, Matrix);
    fn value(&self, x: &Matrix) -> f64 {
        self.value_grad(x).0
    }
}

impl<F: Fn(&Matrix) -> (f64, Matrix)> Objective for F {
    fn value_grad(&self, x: &Matrix) -> (f64, Matrix) {
        self(x)
    }
}

struct Run {
    x: Matrix,
    value: f64,
    pg: f64,
    iters: usize,
}

/// Window of the nonmonotone line search.
const NONMONOTONE_WINDOW: usize = 10;
/// Progress is checked every `STALL_WINDOW` iterations; a window whose gain
/// in the best value is below `STALL_REL` (relative) ends the run.
const STALL_WINDOW: usize = 100;
const STALL_REL: f64 = 1e-7;
/// A restart whose iterate settles this close (Frobenius) to an earlier
/// restart's final point, without beating its value, is a duplicate.
const DUPLICATE_DIST: f64 = 1e-2;
/// Largest factor by which the next trial step may exceed the last accepted one.
const STEP_GROWTH: f64 = 4.0;

fn ascend<O: Objective + ?Sized>(
    f: &O,
    start: Matrix,
    opts: &OracleOptions,
    earlier: &[(Matrix, f64)],
) -> Run {
    let mut x = start;
    let (mut fx, mut g) = f.value_grad(&x);
    let mut step = 1.0 / g.max_abs().max(1e-300);
    let mut recent = std::collections::VecDeque::from([fx]);
    let mut best = (x.clone(), fx, pg_norm(&x, &g));
    let mut iters = 0;
    let mut window_start = fx;
    let mut pg = best.2;
    while iters < opts.max_iters && pg > opts.tol {
        iters += 1;
        let reference = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut accepted = None;
        let mut s = step;
        for _ in 0..60 {
            let mut d = g.clone();
            d.scale(s);
            let mut xn = x.add(&d).expect("shape");
            project_rows(&mut xn);
            let dx = xn.sub(&x).expect("shape");
            let gain = g.dot(&dx);
            if !(gain > 0.0) {
                break;
            }
            let fv = f.value(&xn);
            if fv.is_finite() && fv >= reference + 1e-4 * gain {
                accepted = Some((xn, dx));
                break;
            }
            s *= 0.5;
        }
        let Some((xn, dx)) = accepted else { break };
        let (fn_, gn) = f.value_grad(&xn);
        let dg = gn.sub(&g).expect("shape");
        let sy = -dx.dot(&dg);
        let ss = dx.dot(&dx);
        step = if sy > 0.0 {
            (ss / sy).clamp(1e-12 * s, STEP_GROWTH * s)
        } else {
            2.0 * s
        };
        x = xn;
        fx = fn_;
        g = gn;
        pg = pg_norm(&x, &g);
        if recent.len() == NONMONOTONE_WINDOW {
            recent.pop_front();
        }
        recent.push_back(fx);
        if fx > best.1 || (fx == best.1 && pg < best.2) {
            best = (x.clone(), fx, pg);
        }
        if iters % STALL_WINDOW == 0 {
            let duplicate = earlier.iter().any(|(p, v)| {
                fx <= *v
                    && x.sub(p)
                        .expect("shape")
                        .as_slice()
                        .iter()
                        .map(|d| d * d)
                        .sum::<f64>()
                        .sqrt()
                        < DUPLICATE_DIST
            });
            if duplicate || best.1 - window_start < STALL_REL * (1.0 + best.1.abs()) {
                break;
            }
            window_start = best.1;
        }
    }
    Run {
        x: best.0,
        value: best.1,
        pg: best.2,
        iters,
    }
}

/// Maximizes `f` over the product of `rows` simplices of size `cols`.
/// Restart 0 starts from the uniform matrix, the others from seeded
/// flat-Dirichlet points; extra starts are tried first. Ties between
/// restarts keep the earliest.
pub fn maximize_multisimplex<O: Objective + ?Sized>(
    rows: usize,
    cols: usize,
    f: &O,
    opts: &OracleOptions,
    extra_starts: &[Matrix],
) -> Result<OracleResult> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter("empty decision space".into()));
    }
    let sampler = EntropicOftrl::new(rows, cols)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<Matrix> = extra_starts.to_vec();
    starts.push(AssignmentMatrix::uniform(rows, cols).into_matrix());
    for _ in 1..opts.restarts.max(1) {
        starts.push(sampler.random_point(&mut rng).into_matrix());
    }
    let mut best: Option<Run> = None;
    let mut total = 0;
    let mut finished: Vec<(Matrix, f64)> = Vec::new();
    for s in starts {
        let r = ascend(f, s, opts, &finished);
        total += r.iters;
        finished.push((r.x.clone(), r.value));
        if best.as_ref().is_none_or(|b| r.value > b.value) {
            best = Some(r);
        }
    }
    let b = best.expect("at least one start");
    Ok(OracleResult {
        x: AssignmentMatrix::from_matrix_unchecked(b.x),
        value: b.value,
        pg_norm: b.pg,
        iterations: total,
        converged: b.pg <= opts.tol,
    })
}

/// Flattened per-slot coefficients of the horizon assignment objective.
pub struct AssignmentObjective {
    rows: usize,
    cols: usize,
    alpha: f64,
    beta: f64,
    slots: Vec<SlotCoeffs>,
}

struct SlotCoeffs {
    lam: Vec<f64>,
    load: Vec<f64>,
    cap: Vec<f64>,
    /// -dh_j/dx_ij, row-major.
    hslope: Vec<f64>,
    hfull: Vec<f64>,
    u_floor: f64,
    h_floor: f64,
}

impl AssignmentObjective {
    pub fn new(envs: &[AssignmentEnv], alpha: f64, beta: f64) -> Result<Self> {
        let first = envs.first().ok_or(Error::Empty("environment sequence"))?;
        let (rows, cols) = (first.num_vbs(), first.num_servers());
        let slots = envs
            .iter()
            .map(|e| {
                if e.num_vbs() != rows || e.num_servers() != cols {
                    return Err(Error::Dimension {
                        expected: rows * cols,
                        got: e.num_vbs() * e.num_servers(),
                    });
                }
                let mut hslope = vec![0.0; rows * cols];
                for i in 0..rows {
                    for j in 0..cols {
                        hslope[i * cols + j] =
                            e.scaling.phi_h * e.prices[j] * e.energy_coeffs().get(i, j);
                    }
                }
                Ok(SlotCoeffs {
                    lam: e.lambda.iter().map(|l| l * e.scaling.phi_u).collect(),
                    load: e.load_coeffs().as_slice().to_vec(),
                    cap: e.capacity.clone(),
                    hslope,
                    hfull: (0..cols).map(|j| e.full_saving(j)).collect(),
                    u_floor: e.scaling.u_floor,
                    h_floor: e.scaling.h_floor,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rows,
            cols,
            alpha,
            beta,
            slots,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Time-averaged floored utilities and savings at `x`.
    pub fn averages(&self, x: &Matrix) -> (Vec<f64>, Vec<f64>) {
        let (r, c) = (self.rows, self.cols);
        let xs = x.as_slice();
        let mut ub = vec![0.0; r];
        let mut hb = vec![0.0; c];
        let mut m = vec![0.0; c];
        for s in &self.slots {
            for j in 0..c {
                let l: f64 = (0..r).map(|k| xs[k * c + j] * s.load[k * c + j]).sum();
                m[j] = if l > s.cap[j] {
                    2.0 - l / s.cap[j]
                } else {
                    1.0
                };
            }
            for i in 0..r {
                let v: f64 = s.lam[i] * (0..c).map(|j| xs[i * c + j] * m[j]).sum::<f64>();
                ub[i] += v.max(s.u_floor);
            }
            for j in 0..c {
                let v = s.hfull[j]
                    - (0..r)
                        .map(|i| xs[i * c + j] * s.hslope[i * c + j])
                        .sum::<f64>();
                hb[j] += v.max(s.h_floor);
            }
        }
        let n = self.slots.len() as f64;
        ub.iter_mut().for_each(|v| *v /= n);
        hb.iter_mut().for_each(|v| *v /= n);
        (ub, hb)
    }

    /// Horizon objective `F_alpha(avg u) + F_beta(avg h)`.
    pub fn value(&self, x: &Matrix) -> f64 {
        let (ub, hb) = self.averages(x);
        match (sum_f(&ub, self.alpha), sum_f(&hb, self.beta)) {
            (Some(a), Some(b)) => a + b,
            _ => f64::NEG_INFINITY,
        }
    }

    /// The objective and its gradient.
    pub fn value_grad(&self, x: &Matrix) -> (f64, Matrix) {
        // One pass accumulates the averages together with weight-free pieces
        // of the gradient; the fairness weights are applied at the end.
        //   grad_kj = wu_k A_kj - sum_i wu_i x_ij B_ikj - wh_j H_kj
        let (r, c) = (self.rows, self.cols);
        let xs = x.as_slice();
        let mut ub = vec![0.0; r];
        let mut hb = vec![0.0; c];
        let mut a = vec![0.0; r * c];
        let mut bt = vec![0.0; r * r * c];
        let mut hs = vec![0.0; r * c];
        let mut m = vec![0.0; c];
        let mut over = vec![false; c];
        let mut live = vec![false; r];
        for s in &self.slots {
            for j in 0..c {
                let l: f64 = (0..r).map(|k| xs[k * c + j] * s.load[k * c + j]).sum();
                over[j] = l > s.cap[j];
                m[j] = if over[j] { 2.0 - l / s.cap[j] } else { 1.0 };
            }
            for i in 0..r {
                let v: f64 = s.lam[i] * (0..c).map(|j| xs[i * c + j] * m[j]).sum::<f64>();
                live[i] = v >= s.u_floor;
                ub[i] += v.max(s.u_floor);
                if live[i] {
                    for j in 0..c {
                        a[i * c + j] += s.lam[i] * m[j];
                    }
                }
            }
            for j in 0..c {
                let h = s.hfull[j]
                    - (0..r)
                        .map(|i| xs[i * c + j] * s.hslope[i * c + j])
                        .sum::<f64>();
                hb[j] += h.max(s.h_floor);
                if h >= s.h_floor {
                    for k in 0..r {
                        hs[k * c + j] += s.hslope[k * c + j];
                    }
                }
                if over[j] {
                    for i in (0..r).filter(|&i| live[i]) {
                        let f = s.lam[i] / s.cap[j];
                        for k in 0..r {
                            bt[(i * r + k) * c + j] += f * s.load[k * c + j];
                        }
                    }
                }
            }
        }
        let n = self.slots.len() as f64;
        ub.iter_mut().for_each(|v| *v /= n);
        hb.iter_mut().for_each(|v| *v /= n);
        let value = match (sum_f(&ub, self.alpha), sum_f(&hb, self.beta)) {
            (Some(a), Some(b)) => a + b,
            _ => return (f64::NEG_INFINITY, Matrix::zeros(r, c)),
        };
        let wu: Vec<f64> = ub.iter().map(|&v| v.powf(-self.alpha) / n).collect();
        let wh: Vec<f64> = hb.iter().map(|&v| v.powf(-self.beta) / n).collect();
        let mut grad = Matrix::zeros(r, c);
        let gs = grad.as_mut_slice();
        for k in 0..r {
            for j in 0..c {
                let coupled: f64 = (0..r)
                    .map(|i| wu[i] * xs[i * c + j] * bt[(i * r + k) * c + j])
                    .sum();
                gs[k * c + j] = wu[k] * a[k * c + j] - coupled - wh[j] * hs[k * c + j];
            }
        }
        (value, grad)
    }
}

impl Objective for AssignmentObjective {
    fn value_grad(&self, x: &Matrix) -> (f64, Matrix) {
        AssignmentObjective::value_grad(self, x)
    }
    fn value(&self, x: &Matrix) -> f64 {
        AssignmentObjective::value(self, x)
    }
}

fn sum_f(v: &[f64], a: f64) -> Option<f64> {
    v.iter().map(|&x| f_alpha(x, a).ok()).sum()
}

/// Best fixed assignment in hindsight for the horizon objective.
pub fn benchmark_assignment(
    envs: &[AssignmentEnv],
    params: &FairnessParams,
    opts: &OracleOptions,
) -> Result<OracleResult> {
    let obj = AssignmentObjective::new(envs, params.alpha, params.beta)?;
    let (r, c) = obj.shape();
    maximize_multisimplex(r, c, &obj, opts, &[])
}

/// Hindsight threshold vector and its objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinTbBenchmark {
    pub y: Vec<f64>,
    pub value: f64,
}

/// Grid resolution and golden-section iterations of the threshold oracle.
pub const MINTB_GRID: usize = 400;
const GOLDEN_ITERS: usize = 80;

/// Best fixed thresholds in hindsight for `F_alpha(avg u) - avg c`.
///
/// The objective separates across users, so each coordinate is maximized by a
/// dense grid over `[0, K]` followed by golden-section refinement around the
/// best grid cell (the per-user objective need not be concave).
pub fn benchmark_mintb(envs: &[MinTbEnv], params: &MinTbParams) -> Result<MinTbBenchmark> {
    let first = envs.first().ok_or(Error::Empty("environment sequence"))?;
    let dim = first.num_users();
    let n = envs.len() as f64;
    let mut y = Vec::with_capacity(dim);
    let mut value = 0.0;
    for i in 0..dim {
        let rho: Vec<f64> = envs.iter().map(|e| e.rho[i]).collect();
        let w: Vec<f64> = envs
            .iter()
            .map(|e| Ok(e.phi * e.beta.eval(e.snr[i])? * e.b[i]))
            .collect::<Result<Vec<_>>>()?;
        let obj = |yi: f64| -> f64 {
            let mut us = 0.0;
            let mut cs = 0.0;
            for (r, wt) in rho.iter().zip(&w) {
                let u = empty_buffer_kernel(yi, *r).0;
                us += u;
                cs += wt * u;
            }
            f_alpha(us / n, params.alpha).unwrap_or(f64::NEG_INFINITY) - cs / n
        };
        let h = params.k / MINTB_GRID as f64;
        let mut best_k = 0;
        let mut best_v = obj(0.0);
        for k in 1..=MINTB_GRID {
            let v = obj(k as f64 * h);
            if v > best_v {
                best_v = v;
                best_k = k;
            }
        }
        let lo = (best_k as f64 - 1.0).max(0.0) * h;
        let hi = ((best_k + 1) as f64 * h).min(params.k);
        let (yi, vi) = golden_max(&obj, lo, hi, GOLDEN_ITERS);
        let (yi, vi) = if vi >= best_v {
            (yi, vi)
        } else {
            (best_k as f64 * h, best_v)
        };
        y.push(yi);
        value += vi;
    }
    Ok(MinTbBenchmark { y, value })
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    // Endpoints matter when the optimum sits on the box boundary.
    [(a, f(a)), (b, f(b)), (c, fc), (d, fd)]
        .into_iter()
        .fold(
            (a, f64::NEG_INFINITY),
            |acc, p| if p.1 > acc.1 { p } else { acc },
        )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection() {
        let mut v = vec![0.5, 0.5];
        project_simplex(&mut v);
        assert_eq!(v, vec![0.5, 0.5]);
        let mut v = vec![3.0, 0.0, -1.0];
        project_simplex(&mut v);
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
        let mut v = vec![0.2, 0.2, 0.2];
        project_simplex(&mut v);
        assert!(v.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn concave_quadratic_maximum() {
        // max -(x00 - 0.3)^2 - (x01 - 0.7)^2 has its optimum inside the simplex.
        let f = |x: &Matrix| {
            let (a, b) = (x.get(0, 0) - 0.3, x.get(0, 1) - 0.7);
            (
                -(a * a) - b * b,
                Matrix::from_vec(1, 2, vec![-2.0 * a, -2.0 * b]).unwrap(),
            )
        };
        let r = maximize_multisimplex(1, 2, &f, &OracleOptions::default(), &[]).unwrap();
        assert!(r.converged);
        assert!((r.x.get(0, 0) - 0.3).abs() < 1e-7);
    }
}
