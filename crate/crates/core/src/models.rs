//! Environment functions: vBS utility and server energy saving for the
//! assignment problem, the buffer-empty utility and energy cost for the
//! threshold problem, and regression fitting of server profiles.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::matrix::{AssignmentMatrix, Matrix};

/// Bits per byte; loads are given in bytes while profiles are per bit.
pub const BITS_PER_BYTE: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServerKind {
    Cpu,
    Ha,
}

/// Linear processing-time and energy model at one SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub snr_db: f64,
    /// Processing time per bit (s).
    pub zeta: f64,
    /// Processing time per TB (s).
    pub o: f64,
    /// Energy per bit (J).
    pub delta: f64,
    /// Energy per TB (J).
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerProfile {
    pub id: String,
    pub kind: ServerKind,
    /// Sorted by SNR.
    pub points: Vec<ProfilePoint>,
}

impl ServerProfile {
    pub fn new(
        id: impl Into<String>,
        kind: ServerKind,
        mut points: Vec<ProfilePoint>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("profile points"));
        }
        if points.iter().any(|p| {
            ![p.snr_db, p.zeta, p.o, p.delta, p.gamma]
                .iter()
                .all(|v| v.is_finite())
        }) {
            return Err(Error::InvalidParameter(
                "profile coefficients must be finite".into(),
            ));
        }
        points.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
        Ok(Self {
            id: id.into(),
            kind,
            points,
        })
    }

    /// Profile at the nearest measured SNR; ties go to the lower SNR.
    pub fn at(&self, snr_db: f64) -> &ProfilePoint {
        let mut best = &self.points[0];
        for p in &self.points[1..] {
            if (p.snr_db - snr_db).abs() < (best.snr_db - snr_db).abs() {
                best = p;
            }
        }
        best
    }

    /// Hardware accelerators should have negligible per-bit terms. Returns a
    /// message for each SNR point where the per-bit share of a 1e5-bit TB
    /// exceeds 10%.
    pub fn ha_warnings(&self) -> Vec<String> {
        if self.kind != ServerKind::Ha {
            return Vec::new();
        }
        const REF_BITS: f64 = 1e5;
        let mut out = Vec::new();
        for p in &self.points {
            if p.zeta.abs() * REF_BITS > 0.1 * p.o.abs()
                || p.delta.abs() * REF_BITS > 0.1 * p.gamma.abs()
            {
                out.push(format!(
                    "{} at {} dB: per-bit terms are not negligible for an accelerator",
                    self.id, p.snr_db
                ));
            }
        }
        out
    }
}

fn synthetic_profile(
    id: &str,
    kind: ServerKind,
    zeta: f64,
    o: f64,
    delta: f64,
    gamma: f64,
) -> ServerProfile {
    // Lower SNR costs more decoder iterations: up to 1.5x at 10 dB versus 30 dB.
    let points = [10.0, 15.0, 20.0, 25.0, 30.0]
        .iter()
        .map(|&s| {
            let m = 1.0 + 0.5 * (30.0 - s) / 20.0;
            ProfilePoint {
                snr_db: s,
                zeta: zeta * m,
                o: o * m,
                delta: delta * m,
                gamma: gamma * m,
            }
        })
        .collect();
    ServerProfile::new(id, kind, points).expect("static profile")
}

/// Synthetic server pool: two accelerators, the second slower and hungrier
/// than the first in every respect, and two CPU pools.
pub fn default_profiles() -> Vec<ServerProfile> {
    vec![
        synthetic_profile("gpu1", ServerKind::Ha, 2e-10, 1.0e-3, 2e-10, 1.0e-3),
        synthetic_profile("gpu2", ServerKind::Ha, 4e-10, 2.0e-3, 4e-10, 2.0e-3),
        synthetic_profile("cpu1", ServerKind::Cpu, 4e-9, 5e-4, 2.5e-9, 5e-4),
        synthetic_profile("cpu2", ServerKind::Cpu, 5e-9, 6e-4, 3e-9, 6e-4),
    ]
}

/// Scaling and flooring applied on top of the raw model values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvScaling {
    /// Multiplier of the energy saving.
    pub phi_h: f64,
    /// Multiplier of the vBS utility (1 keeps utilities in bytes).
    pub phi_u: f64,
    pub u_floor: f64,
    pub h_floor: f64,
}

impl Default for EnvScaling {
    fn default() -> Self {
        Self {
            phi_h: 1.0,
            phi_u: 1.0,
            u_floor: 1e-3,
            h_floor: 1e-3,
        }
    }
}

/// One slot of the assignment problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentEnv {
    /// Bytes per slot per vBS.
    pub lambda: Vec<f64>,
    /// Average TB size per vBS (bytes).
    pub n: Vec<f64>,
    pub snr: Vec<f64>,
    pub prices: Vec<f64>,
    pub capacity: Vec<f64>,
    pub scaling: EnvScaling,
    /// Processing seconds if vBS k sends all its load to server j.
    load: Matrix,
    /// Joules if vBS k sends all its load to server j.
    energy: Matrix,
}

impl AssignmentEnv {
    pub fn new(
        lambda: Vec<f64>,
        n: Vec<f64>,
        snr: Vec<f64>,
        prices: Vec<f64>,
        capacity: Vec<f64>,
        profiles: &[ServerProfile],
        scaling: EnvScaling,
    ) -> Result<Self> {
        let i = lambda.len();
        let j = prices.len();
        check_dim(i, n.len())?;
        check_dim(i, snr.len())?;
        check_dim(j, capacity.len())?;
        check_dim(j, profiles.len())?;
        if n.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter("TB sizes must be positive".into()));
        }
        let mut load = Matrix::zeros(i, j);
        let mut energy = Matrix::zeros(i, j);
        for k in 0..i {
            let tbs = lambda[k] / n[k];
            let bits = BITS_PER_BYTE * n[k];
            for (s, prof) in profiles.iter().enumerate() {
                let p = prof.at(snr[k]);
                load.set(k, s, tbs * (p.zeta * bits + p.o));
                energy.set(k, s, tbs * (p.delta * bits + p.gamma));
            }
        }
        Self::with_coefficients(lambda, n, snr, prices, capacity, load, energy, scaling)
    }

    /// Builds an environment from precomputed per-(vBS, server) load and energy.
    #[allow(clippy::too_many_arguments)]
    pub fn with_coefficients(
        lambda: Vec<f64>,
        n: Vec<f64>,
        snr: Vec<f64>,
        prices: Vec<f64>,
        capacity: Vec<f64>,
        load: Matrix,
        energy: Matrix,
        scaling: EnvScaling,
    ) -> Result<Self> {
        let (i, j) = (lambda.len(), prices.len());
        load.check_shape(i, j)?;
        energy.check_shape(i, j)?;
        check_dim(i, n.len())?;
        check_dim(i, snr.len())?;
        check_dim(j, capacity.len())?;
        if lambda.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidParameter("loads must be nonnegative".into()));
        }
        if let Some(c) = capacity.iter().find(|&&c| !(c > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "server capacity must be positive, got {c}"
            )));
        }
        if prices.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidParameter("prices must be positive".into()));
        }
        if !(scaling.u_floor > 0.0
            && scaling.h_floor > 0.0
            && scaling.phi_h > 0.0
            && scaling.phi_u > 0.0)
        {
            return Err(Error::InvalidParameter(
                "scaling factors and floors must be positive".into(),
            ));
        }
        Ok(Self {
            lambda,
            n,
            snr,
            prices,
            capacity,
            scaling,
            load,
            energy,
        })
    }

    pub fn num_vbs(&self) -> usize {
        self.lambda.len()
    }
    pub fn num_servers(&self) -> usize {
        self.prices.len()
    }
    pub fn load_coeffs(&self) -> &Matrix {
        &self.load
    }
    pub fn energy_coeffs(&self) -> &Matrix {
        &self.energy
    }

    /// Reference saving of server j: its cost if it served no load.
    pub fn full_saving(&self, j: usize) -> f64 {
        let e: f64 = (0..self.num_vbs()).map(|i| self.energy.get(i, j)).sum();
        self.scaling.phi_h * self.prices[j] * e
    }

    fn server_factors(&self, x: &Matrix) -> (Vec<f64>, Vec<bool>) {
        let (i_n, j_n) = x.shape();
        let mut m = vec![1.0; j_n];
        let mut over = vec![false; j_n];
        for j in 0..j_n {
            let l: f64 = (0..i_n).map(|k| x.get(k, j) * self.load.get(k, j)).sum();
            let c = self.capacity[j];
            if l > c {
                over[j] = true;
                m[j] = 1.0 - (l - c) / c;
            }
        }
        (m, over)
    }
}

/// Per-vBS utility with its Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityEval {
    /// Model value, possibly negative under heavy overload.
    pub raw: Vec<f64>,
    /// `raw` floored at `u_floor`.
    pub value: Vec<f64>,
    pub floored: Vec<bool>,
    /// `jacobian[i]` holds d u_i / d x as an I x J matrix (of the raw model).
    pub jacobian: Vec<Matrix>,
}

fn check_x(x: &AssignmentMatrix, env: &AssignmentEnv) -> Result<()> {
    x.matrix().check_shape(env.num_vbs(), env.num_servers())
}

/// Raw per-vBS utility `sum_j x_ij lambda_i min{1, 2 - L_j/C_j}` (scaled by `phi_u`).
pub fn assignment_utility_raw(x: &Matrix, env: &AssignmentEnv) -> Vec<f64> {
    let (m, _) = env.server_factors(x);
    (0..x.rows())
        .map(|i| {
            let s: f64 = (0..x.cols()).map(|j| x.get(i, j) * m[j]).sum();
            env.scaling.phi_u * env.lambda[i] * s
        })
        .collect()
}

pub fn assignment_utility(x: &AssignmentMatrix, env: &AssignmentEnv) -> Result<UtilityEval> {
    check_x(x, env)?;
    let xm = x.matrix();
    let (i_n, j_n) = xm.shape();
    let (m, over) = env.server_factors(xm);
    let raw = assignment_utility_raw(xm, env);
    let phi = env.scaling.phi_u;
    let mut jacobian = Vec::with_capacity(i_n);
    for i in 0..i_n {
        let mut d = Matrix::zeros(i_n, j_n);
        let li = phi * env.lambda[i];
        for j in 0..j_n {
            d.add_at(i, j, li * m[j]);
            if over[j] {
                let w = xm.get(i, j) * li / env.capacity[j];
                for k in 0..i_n {
                    d.add_at(k, j, -w * env.load.get(k, j));
                }
            }
        }
        jacobian.push(d);
    }
    let floor = env.scaling.u_floor;
    let floored = raw.iter().map(|&v| v < floor).collect();
    let value = raw.iter().map(|&v| v.max(floor)).collect();
    Ok(UtilityEval {
        raw,
        value,
        floored,
        jacobian,
    })
}

/// `sum_i w_i d u_i / d x` without forming the Jacobian.
pub fn assignment_utility_vjp(x: &Matrix, env: &AssignmentEnv, w: &[f64]) -> Matrix {
    let (i_n, j_n) = x.shape();
    let (m, over) = env.server_factors(x);
    let phi = env.scaling.phi_u;
    let mut out = Matrix::zeros(i_n, j_n);
    for j in 0..j_n {
        let coupled = if over[j] {
            (0..i_n)
                .map(|i| w[i] * x.get(i, j) * phi * env.lambda[i])
                .sum::<f64>()
                / env.capacity[j]
        } else {
            0.0
        };
        for k in 0..i_n {
            let mut v = w[k] * phi * env.lambda[k] * m[j];
            if over[j] {
                v -= coupled * env.load.get(k, j);
            }
            out.set(k, j, v);
        }
    }
    out
}

/// Per-server energy saving with its (column-sparse) gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SavingEval {
    pub raw: Vec<f64>,
    pub value: Vec<f64>,
    pub floored: Vec<bool>,
    /// `slope.get(i, j)` is d h_j / d x_ij; d h_j / d x_il = 0 for l != j.
    pub slope: Matrix,
}

impl SavingEval {
    /// Dense Jacobian: `jacobian()[j]` is d h_j / d x.
    pub fn jacobian(&self) -> Vec<Matrix> {
        let (i_n, j_n) = self.slope.shape();
        (0..j_n)
            .map(|j| {
                let mut d = Matrix::zeros(i_n, j_n);
                for i in 0..i_n {
                    d.set(i, j, self.slope.get(i, j));
                }
                d
            })
            .collect()
    }
}

pub fn energy_saving_raw(x: &Matrix, env: &AssignmentEnv) -> Vec<f64> {
    (0..x.cols())
        .map(|j| {
            let s: f64 = (0..x.rows())
                .map(|i| (1.0 - x.get(i, j)) * env.energy.get(i, j))
                .sum();
            env.scaling.phi_h * env.prices[j] * s
        })
        .collect()
}

pub fn energy_saving(x: &AssignmentMatrix, env: &AssignmentEnv) -> Result<SavingEval> {
    check_x(x, env)?;
    let raw = energy_saving_raw(x.matrix(), env);
    let (i_n, j_n) = (env.num_vbs(), env.num_servers());
    let mut slope = Matrix::zeros(i_n, j_n);
    for i in 0..i_n {
        for j in 0..j_n {
            slope.set(
                i,
                j,
                -env.scaling.phi_h * env.prices[j] * env.energy.get(i, j),
            );
        }
    }
    let floor = env.scaling.h_floor;
    let floored = raw.iter().map(|&v| v < floor).collect();
    let value = raw.iter().map(|&v| v.max(floor)).collect();
    Ok(SavingEval {
        raw,
        value,
        floored,
        slope,
    })
}

/// `sum_j w_j d h_j / d x`.
pub fn energy_saving_vjp(env: &AssignmentEnv, w: &[f64]) -> Matrix {
    let (i_n, j_n) = (env.num_vbs(), env.num_servers());
    let mut out = Matrix::zeros(i_n, j_n);
    for i in 0..i_n {
        for j in 0..j_n {
            out.set(
                i,
                j,
                -w[j] * env.scaling.phi_h * env.prices[j] * env.energy.get(i, j),
            );
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Threshold (minimum TB size) problem.

/// Buffer-empty probability `(rho/y)(1 - exp(-y/rho))` and its derivative in y.
pub fn empty_buffer_kernel(y: f64, rho: f64) -> (f64, f64) {
    let z = y / rho;
    if z < 1e-3 {
        // Taylor expansions; exact limit 1 and -1/(2 rho) at y = 0.
        let u = 1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0;
        let du = -0.5 + z / 3.0 - z * z / 8.0 + z * z * z / 30.0;
        (u, du / rho)
    } else {
        let e = (-z).exp();
        let u = -(-z).exp_m1() / z;
        let du = (e * (1.0 + z) - 1.0) / (z * z);
        (u, du / rho)
    }
}

/// Piecewise-linear map from SNR (dB) to energy per TB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaTable {
    knots: Vec<(f64, f64)>,
}

impl BetaTable {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Empty("beta table"));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| w[0].0 == w[1].0) || knots.iter().any(|k| !(k.1 >= 0.0)) {
            return Err(Error::InvalidParameter(
                "beta knots need distinct SNRs and nonnegative values".into(),
            ));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    pub fn eval(&self, snr: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(snr >= lo && snr <= hi) {
            return Err(Error::Domain(format!(
                "SNR {snr} dB outside cost table range [{lo}, {hi}]"
            )));
        }
        for w in self.knots.windows(2) {
            let ((s0, b0), (s1, b1)) = (w[0], w[1]);
            if snr <= s1 {
                return Ok(b0 + (b1 - b0) * (snr - s0) / (s1 - s0));
            }
        }
        Ok(self.knots[self.knots.len() - 1].1)
    }
}

impl Default for BetaTable {
    /// Energy per TB (J) on an accelerator, falling with SNR.
    fn default() -> Self {
        Self::new(vec![
            (-10.0, 2.4e-3),
            (0.0, 2.0e-3),
            (10.0, 1.7e-3),
            (20.0, 1.4e-3),
            (30.0, 1.0e-3),
            (40.0, 0.8e-3),
        ])
        .expect("static table")
    }
}

/// One slot of the threshold problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinTbEnv {
    /// Data generation events per slot.
    pub b: Vec<f64>,
    /// Bits per event.
    pub rho: Vec<f64>,
    pub snr: Vec<f64>,
    pub beta: BetaTable,
    /// Weight of the cost against fairness.
    pub phi: f64,
}

impl MinTbEnv {
    pub fn new(
        b: Vec<f64>,
        rho: Vec<f64>,
        snr: Vec<f64>,
        beta: BetaTable,
        phi: f64,
    ) -> Result<Self> {
        check_dim(b.len(), rho.len())?;
        check_dim(b.len(), snr.len())?;
        if b.iter().chain(&rho).any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "events and bits per event must be positive".into(),
            ));
        }
        if !(phi >= 0.0) {
            return Err(Error::InvalidParameter(
                "cost weight must be nonnegative".into(),
            ));
        }
        Ok(Self {
            b,
            rho,
            snr,
            beta,
            phi,
        })
    }

    pub fn num_users(&self) -> usize {
        self.b.len()
    }

    /// Per-user weights `beta(s_i) b_i` of the cost.
    pub fn cost_weights(&self) -> Result<Vec<f64>> {
        self.snr
            .iter()
            .zip(&self.b)
            .map(|(&s, &b)| Ok(self.beta.eval(s)? * b))
            .collect()
    }
}

/// Utility, cost and unweighted energy of a threshold vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MinTbEval {
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    /// `phi * energy`.
    pub cost: f64,
    pub dc: Vec<f64>,
    /// Expected energy `sum_i beta(s_i) b_i u_i`.
    pub energy: f64,
}

fn check_y(y: &[f64], env: &MinTbEnv) -> Result<()> {
    check_dim(env.num_users(), y.len())?;
    if let Some(v) = y.iter().find(|&&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!(
            "threshold must be nonnegative, got {v}"
        )));
    }
    Ok(())
}

pub fn mintb_eval(y: &[f64], env: &MinTbEnv) -> Result<MinTbEval> {
    check_y(y, env)?;
    let w = env.cost_weights()?;
    let mut u = Vec::with_capacity(y.len());
    let mut du = Vec::with_capacity(y.len());
    for (&yi, &rho) in y.iter().zip(&env.rho) {
        let (a, b) = empty_buffer_kernel(yi, rho);
        u.push(a);
        du.push(b);
    }
    let energy: f64 = w.iter().zip(&u).map(|(a, b)| a * b).sum();
    let dc = w.iter().zip(&du).map(|(a, b)| env.phi * a * b).collect();
    Ok(MinTbEval {
        u,
        du,
        cost: env.phi * energy,
        dc,
        energy,
    })
}

pub fn mintb_utility(y: &[f64], env: &MinTbEnv) -> Result<(Vec<f64>, Vec<f64>)> {
    check_y(y, env)?;
    Ok(y.iter()
        .zip(&env.rho)
        .map(|(&yi, &rho)| empty_buffer_kernel(yi, rho))
        .unzip())
}

pub fn mintb_cost(y: &[f64], env: &MinTbEnv) -> Result<(f64, Vec<f64>)> {
    let e = mintb_eval(y, env)?;
    Ok((e.cost, e.dc))
}

// ---------------------------------------------------------------------------
// Profile fitting.

/// One row of a measurement file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub pu_id: String,
    pub snr_db: f64,
    pub tb_size_bits: f64,
    pub proc_time_s: f64,
    pub energy_j: f64,
}

/// Reads a `pu_id,snr_db,tb_size_bits,proc_time_s,energy_j` CSV.
pub fn read_measurements<R: Read>(reader: R) -> Result<Vec<Measurement>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["pu_id", "snr_db", "tb_size_bits", "proc_time_s", "energy_j"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<Measurement>() {
        match rec {
            Ok(m) => out.push(m),
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                return Err(Error::Parse {
                    line,
                    msg: e.to_string(),
                });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Empty("measurement file"));
    }
    Ok(out)
}

fn ols(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn infer_kind(id: &str) -> ServerKind {
    let l = id.to_ascii_lowercase();
    if l.starts_with("gpu") || l.starts_with("ha") || l.starts_with("acc") || l.starts_with("fpga")
    {
        ServerKind::Ha
    } else {
        ServerKind::Cpu
    }
}

/// Least-squares slope/intercept per (processing unit, SNR) group.
///
/// Processing units whose id starts with `gpu`, `ha`, `acc` or `fpga` are
/// treated as accelerators; everything else as CPU pools.
pub fn fit_linear_profiles(measurements: &[Measurement]) -> Result<Vec<ServerProfile>> {
    if measurements.is_empty() {
        return Err(Error::Empty("measurements"));
    }
    let mut groups: BTreeMap<(String, u64), Vec<&Measurement>> = BTreeMap::new();
    for m in measurements {
        if ![m.snr_db, m.tb_size_bits, m.proc_time_s, m.energy_j]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "non-finite measurement for {}",
                m.pu_id
            )));
        }
        groups
            .entry((m.pu_id.clone(), m.snr_db.to_bits()))
            .or_default()
            .push(m);
    }
    let mut per_pu: BTreeMap<String, Vec<ProfilePoint>> = BTreeMap::new();
    for ((pu, snr_bits), rows) in &groups {
        let snr = f64::from_bits(*snr_bits);
        let xs: Vec<f64> = rows.iter().map(|m| m.tb_size_bits).collect();
        let ts: Vec<f64> = rows.iter().map(|m| m.proc_time_s).collect();
        let es: Vec<f64> = rows.iter().map(|m| m.energy_j).collect();
        let name = || format!("{pu}@{snr}dB");
        let (zeta, o) = ols(&xs, &ts).ok_or_else(|| Error::DegenerateGroup(name()))?;
        let (delta, gamma) = ols(&xs, &es).ok_or_else(|| Error::DegenerateGroup(name()))?;
        per_pu.entry(pu.clone()).or_default().push(ProfilePoint {
            snr_db: snr,
            zeta,
            o,
            delta,
            gamma,
        });
    }
    per_pu
        .into_iter()
        .map(|(id, pts)| ServerProfile::new(id.clone(), infer_kind(&id), pts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple_env(cap: f64) -> AssignmentEnv {
        AssignmentEnv::with_coefficients(
            vec![1.0],
            vec![1.0],
            vec![20.0],
            vec![1.0],
            vec![cap],
            Matrix::filled(1, 1, 2.0 * cap),
            Matrix::filled(1, 1, 1.0),
            EnvScaling {
                u_floor: 1e-9,
                ..EnvScaling::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn load_twice_capacity_zeroes_utility() {
        let env = simple_env(3.0);
        let x = AssignmentMatrix::uniform(1, 1);
        let u = assignment_utility(&x, &env).unwrap();
        assert!(u.raw[0].abs() < 1e-15);
        assert!(u.floored[0]);
    }

    #[test]
    fn zero_capacity_rejected() {
        let r = AssignmentEnv::with_coefficients(
            vec![1.0],
            vec![1.0],
            vec![20.0],
            vec![1.0],
            vec![0.0],
            Matrix::zeros(1, 1),
            Matrix::zeros(1, 1),
            EnvScaling::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn underload_gives_full_utility() {
        let env = AssignmentEnv::new(
            vec![5e6, 4e6],
            vec![5e4, 4e4],
            vec![20.0, 12.0],
            vec![10.0, 11.0, 12.0, 13.0],
            vec![100.0; 4],
            &default_profiles(),
            EnvScaling::default(),
        )
        .unwrap();
        let u = assignment_utility(&AssignmentMatrix::uniform(2, 4), &env).unwrap();
        assert!((u.value[0] - 5e6).abs() < 1e-6 && (u.value[1] - 4e6).abs() < 1e-6);
    }

    #[test]
    fn saving_extremes() {
        let env = AssignmentEnv::new(
            vec![5e6, 4e6],
            vec![5e4, 4e4],
            vec![20.0, 12.0],
            vec![10.0, 11.0],
            vec![5.0; 2],
            &default_profiles()[..2],
            EnvScaling::default(),
        )
        .unwrap();
        let all_first =
            AssignmentMatrix::new(Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap())
                .unwrap();
        let h = energy_saving(&all_first, &env).unwrap();
        assert_eq!(h.raw[0], 0.0);
        assert!((h.raw[1] - env.full_saving(1)).abs() < 1e-12);
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(empty_buffer_kernel(0.0, 7.0), (1.0, -1.0 / 14.0));
        assert!((empty_buffer_kernel(5e4, 5e4).0 - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert!((empty_buffer_kernel(100.0 * 3e4, 3e4).0 - 0.01).abs() < 1e-6);
        // The two branches agree at the switch point.
        let (a, da) = empty_buffer_kernel(0.999e-3, 1.0);
        let (b, db) = empty_buffer_kernel(1.001e-3, 1.0);
        assert!((a - b).abs() < 1e-5 && (da - db).abs() < 1e-5);
    }

    #[test]
    fn cost_limits() {
        let env = MinTbEnv::new(
            vec![10.0, 40.0],
            vec![5e4, 1e5],
            vec![20.0, 30.0],
            BetaTable::default(),
            3.0,
        )
        .unwrap();
        let (c, _) = mintb_cost(&[0.0, 0.0], &env).unwrap();
        assert!((c - 3.0 * (1.4e-3 * 10.0 + 1.0e-3 * 40.0)).abs() < 1e-12);
        let zero = MinTbEnv {
            phi: 0.0,
            ..env.clone()
        };
        let (c, dc) = mintb_cost(&[1e4, 2e4], &zero).unwrap();
        assert_eq!(c, 0.0);
        assert!(dc.iter().all(|&v| v == 0.0));
        let bad = MinTbEnv {
            snr: vec![50.0, 20.0],
            ..env
        };
        assert!(mintb_cost(&[1.0, 1.0], &bad).is_err());
    }

    #[test]
    fn beta_interpolation() {
        let t = BetaTable::default();
        assert!((t.eval(25.0).unwrap() - 1.2e-3).abs() < 1e-15);
        assert!(t.eval(41.0).is_err());
    }

    #[test]
    fn nearest_snr_lookup() {
        let p = &default_profiles()[0];
        assert_eq!(p.at(17.4).snr_db, 15.0);
        assert_eq!(p.at(17.5).snr_db, 15.0);
        assert_eq!(p.at(17.6).snr_db, 20.0);
        assert_eq!(p.at(-5.0).snr_db, 10.0);
        assert!(default_profiles()
            .iter()
            .all(|p| p.ha_warnings().is_empty()));
    }

    #[test]
    fn exact_fit_recovery() {
        let mut rows = Vec::new();
        for &snr in &[10.0, 20.0] {
            for &size in &[1e4, 5e4, 1e5] {
                rows.push(Measurement {
                    pu_id: "cpu0".into(),
                    snr_db: snr,
                    tb_size_bits: size,
                    proc_time_s: 2e-9 * size + 1e-4,
                    energy_j: 3e-9 * size + 2e-4,
                });
            }
        }
        let p = fit_linear_profiles(&rows).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].kind, ServerKind::Cpu);
        for pt in &p[0].points {
            assert!((pt.zeta - 2e-9).abs() < 1e-12 && (pt.o - 1e-4).abs() < 1e-12);
            assert!((pt.delta - 3e-9).abs() < 1e-12 && (pt.gamma - 2e-4).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_group_named() {
        let m = |s| Measurement {
            pu_id: "gpu9".into(),
            snr_db: 15.0,
            tb_size_bits: 1e4,
            proc_time_s: s,
            energy_j: s,
        };
        match fit_linear_profiles(&[m(1.0), m(2.0)]) {
            Err(Error::DegenerateGroup(g)) => assert!(g.contains("gpu9") && g.contains("15")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
