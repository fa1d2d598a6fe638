//! Seed-reproducible environment generators and trace ingestion.
//!
//! Every random quantity is drawn from its own ChaCha8 stream selected by
//! `(tag, slot, entity)`, so values never depend on generation order.

use std::io::{Read, Write};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::FairnessParams;
use crate::mintb::{MinTbParams, DEFAULT_K};
use crate::models::{
    default_profiles, empty_buffer_kernel, AssignmentEnv, BetaTable, EnvScaling, MinTbEnv,
    ServerProfile,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    #[serde(rename = "assignment-1")]
    Assignment1,
    #[serde(rename = "assignment-2")]
    Assignment2,
    #[serde(rename = "mintb-1")]
    MinTb1,
    #[serde(rename = "mintb-2-trace")]
    MinTb2Trace,
    #[serde(rename = "mintb-3")]
    MinTb3,
    CustomFile,
}

impl ScenarioKind {
    pub fn is_assignment(self) -> bool {
        matches!(self, ScenarioKind::Assignment1 | ScenarioKind::Assignment2)
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Assignment1 => "assignment-1",
            ScenarioKind::Assignment2 => "assignment-2",
            ScenarioKind::MinTb1 => "mintb-1",
            ScenarioKind::MinTb2Trace => "mintb-2-trace",
            ScenarioKind::MinTb3 => "mintb-3",
            ScenarioKind::CustomFile => "custom-file",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "assignment-1" | "a1" => ScenarioKind::Assignment1,
            "assignment-2" | "a2" => ScenarioKind::Assignment2,
            "mintb-1" | "m1" => ScenarioKind::MinTb1,
            "mintb-2-trace" | "mintb-2" | "m2" => ScenarioKind::MinTb2Trace,
            "mintb-3" | "m3" => ScenarioKind::MinTb3,
            "custom-file" => ScenarioKind::CustomFile,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown scenario kind {other:?}"
                )))
            }
        })
    }
}

/// Optional parameter overrides; `None` keeps the scenario default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub lambda: Option<[f64; 2]>,
    pub tb_size: Option<[f64; 2]>,
    pub snr: Option<[f64; 2]>,
    pub price: Option<[f64; 2]>,
    pub capacity: Option<[f64; 2]>,
    /// Smallest capacity a draw is floored to (capacity must stay positive).
    pub capacity_floor: Option<f64>,
    pub events: Option<[f64; 2]>,
    pub rho: Option<[f64; 2]>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub phi_h: Option<f64>,
    pub phi_u: Option<f64>,
    /// Rescale utilities and savings so both are at most one.
    pub normalize: Option<bool>,
    pub phi: Option<f64>,
    pub k: Option<f64>,
    pub u_min: Option<f64>,
    pub u_max: Option<f64>,
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    /// `u_min` as a fraction of `u_max` when not given explicitly.
    pub u_min_frac: Option<f64>,
    /// `h_min` as a fraction of `h_max` when not given explicitly.
    pub h_min_frac: Option<f64>,
    /// Sine amplitude as a fraction of each server's mean capacity.
    pub sine_amplitude: Option<f64>,
    /// Noise standard deviation relative to the mean, before the 1/t decay.
    pub noise_rel_std: Option<f64>,
    /// Map users beyond the fifth back onto the five ping-pong patterns.
    pub wrap_users: Option<bool>,
    pub rho_scale: Option<Vec<f64>>,
    pub trace: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub beta_knots: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "J", default)]
    pub j: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub overrides: Overrides,
}

impl ScenarioSpec {
    /// The scenario with its stock dimensions.
    pub fn preset(kind: ScenarioKind, t: usize, seed: u64) -> Self {
        let (i, j) = match kind {
            ScenarioKind::Assignment1 | ScenarioKind::Assignment2 => (5, 4),
            ScenarioKind::MinTb1 => (10, 0),
            ScenarioKind::MinTb2Trace | ScenarioKind::MinTb3 | ScenarioKind::CustomFile => (5, 0),
        };
        Self {
            kind,
            i,
            j,
            t,
            seed,
            overrides: Overrides::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::InvalidParameter(
                "horizon T must be at least 1".into(),
            ));
        }
        if self.i == 0 {
            return Err(Error::InvalidParameter("I must be at least 1".into()));
        }
        if self.kind.is_assignment() && self.j == 0 {
            return Err(Error::InvalidParameter("J must be at least 1".into()));
        }
        let o = &self.overrides;
        for (name, r) in [
            ("lambda", o.lambda),
            ("tb_size", o.tb_size),
            ("snr", o.snr),
            ("price", o.price),
            ("capacity", o.capacity),
            ("events", o.events),
            ("rho", o.rho),
        ] {
            if let Some([lo, hi]) = r {
                if !(lo < hi) {
                    return Err(Error::InvalidParameter(format!(
                        "{name} range must satisfy lo < hi"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml_parse(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

fn toml_parse(s: &str) -> Result<ScenarioSpec> {
    toml::from_str(s).map_err(|e| Error::Parse {
        line: e
            .span()
            .map_or(0, |sp| s[..sp.start].lines().count().max(1)),
        msg: e.message().to_string(),
    })
}

/// Where a sequence came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: ScenarioSpec,
    pub generator_version: String,
    pub note: String,
}

/// A horizon of per-slot environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSequence<E> {
    pub envs: Vec<E>,
    pub provenance: Provenance,
}

impl<E> EnvSequence<E> {
    pub fn len(&self) -> usize {
        self.envs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }
}

fn provenance(spec: &ScenarioSpec, note: &str) -> Provenance {
    Provenance {
        spec: spec.clone(),
        generator_version: env!("CARGO_PKG_VERSION").into(),
        note: note.into(),
    }
}

// ---------------------------------------------------------------------------
// Stream-split random numbers.

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for quantity `tag` of `entity` at `slot` under `seed`.
pub fn stream_rng(seed: u64, tag: u64, slot: u64, entity: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix(splitmix(splitmix(tag) ^ slot) ^ entity));
    rng
}

mod tag {
    pub const LAMBDA: u64 = 1;
    pub const TB: u64 = 2;
    pub const SNR: u64 = 3;
    pub const PRICE: u64 = 4;
    pub const CAPACITY: u64 = 5;
    pub const EVENTS: u64 = 6;
    pub const RHO: u64 = 7;
    pub const NOISE: u64 = 8;
    pub const BURST: u64 = 9;
}

/// Slot index used for per-run constants (means) rather than per-slot draws.
const MEAN_SLOT: u64 = u64::MAX;

fn uniform(seed: u64, t: u64, slot: u64, e: u64, [lo, hi]: [f64; 2]) -> f64 {
    stream_rng(seed, t, slot, e).random_range(lo..hi)
}

fn gauss(seed: u64, t: u64, slot: u64, e: u64) -> f64 {
    stream_rng(seed, tag::NOISE ^ (t << 8), slot, e).sample(StandardNormal)
}

// ---------------------------------------------------------------------------
// Assignment scenarios.

pub const LAMBDA_RANGE: [f64; 2] = [4e6, 6e6];
pub const TB_RANGE: [f64; 2] = [4e4, 6e4];
pub const SNR_RANGE: [f64; 2] = [10.0, 30.0];
pub const PRICE_RANGE: [f64; 2] = [10.0, 15.0];
pub const CAPACITY_RANGE: [f64; 2] = [0.0, 10.0];
pub const DEFAULT_CAPACITY_FLOOR: f64 = 1e-2;
pub const DEFAULT_U_MIN_FRAC: f64 = 0.25;
pub const DEFAULT_H_MIN_FRAC: f64 = 0.05;

fn load_profiles(spec: &ScenarioSpec) -> Result<Vec<ServerProfile>> {
    let base = match &spec.overrides.profiles {
        Some(p) => {
            let f = std::fs::File::open(p)?;
            serde_json::from_reader::<_, Vec<ServerProfile>>(std::io::BufReader::new(f))?
        }
        None => default_profiles(),
    };
    if base.is_empty() {
        return Err(Error::Empty("server profiles"));
    }
    Ok((0..spec.j).map(|j| base[j % base.len()].clone()).collect())
}

struct AssignmentRanges {
    lambda: [f64; 2],
    tb: [f64; 2],
    snr: [f64; 2],
    price: [f64; 2],
    capacity: [f64; 2],
    cap_floor: f64,
}

fn assignment_ranges(o: &Overrides) -> AssignmentRanges {
    AssignmentRanges {
        lambda: o.lambda.unwrap_or(LAMBDA_RANGE),
        tb: o.tb_size.unwrap_or(TB_RANGE),
        snr: o.snr.unwrap_or(SNR_RANGE),
        price: o.price.unwrap_or(PRICE_RANGE),
        capacity: o.capacity.unwrap_or(CAPACITY_RANGE),
        cap_floor: o.capacity_floor.unwrap_or(DEFAULT_CAPACITY_FLOOR),
    }
}

fn provisional_scaling(o: &Overrides) -> EnvScaling {
    EnvScaling {
        phi_h: o.phi_h.unwrap_or(1.0),
        phi_u: o.phi_u.unwrap_or(1.0),
        ..EnvScaling::default()
    }
}

/// I.i.d. uniform draws per slot.
pub fn gen_assignment_s1(spec: &ScenarioSpec) -> Result<EnvSequence<AssignmentEnv>> {
    spec.validate()?;
    let r = assignment_ranges(&spec.overrides);
    let profiles = load_profiles(spec)?;
    let scaling = provisional_scaling(&spec.overrides);
    let s = spec.seed;
    let envs = (1..=spec.t as u64)
        .map(|t| {
            let per_vbs = |tg, range| {
                (0..spec.i as u64)
                    .map(|i| uniform(s, tg, t, i, range))
                    .collect::<Vec<_>>()
            };
            let per_srv = |tg, range| {
                (0..spec.j as u64)
                    .map(|j| uniform(s, tg, t, j, range))
                    .collect::<Vec<_>>()
            };
            let cap = per_srv(tag::CAPACITY, r.capacity)
                .into_iter()
                .map(|c| c.max(r.cap_floor))
                .collect();
            AssignmentEnv::new(
                per_vbs(tag::LAMBDA, r.lambda),
                per_vbs(tag::TB, r.tb),
                per_vbs(tag::SNR, r.snr),
                per_srv(tag::PRICE, r.price),
                cap,
                &profiles,
                scaling,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    finish_assignment(spec, envs, "i.i.d. uniform draws")
}

/// Fixed means with vanishing Gaussian perturbations and a periodic capacity.
pub fn gen_assignment_s2(spec: &ScenarioSpec) -> Result<EnvSequence<AssignmentEnv>> {
    spec.validate()?;
    let o = &spec.overrides;
    let r = assignment_ranges(o);
    let profiles = load_profiles(spec)?;
    let scaling = provisional_scaling(o);
    let amp = o.sine_amplitude.unwrap_or(0.5);
    let rel = o.noise_rel_std.unwrap_or(0.2);
    let s = spec.seed;
    let mean_vbs = |tg, range| {
        (0..spec.i as u64)
            .map(|i| uniform(s, tg, MEAN_SLOT, i, range))
            .collect::<Vec<_>>()
    };
    let mean_srv = |tg, range| {
        (0..spec.j as u64)
            .map(|j| uniform(s, tg, MEAN_SLOT, j, range))
            .collect::<Vec<_>>()
    };
    let (lam, tb, snr) = (
        mean_vbs(tag::LAMBDA, r.lambda),
        mean_vbs(tag::TB, r.tb),
        mean_vbs(tag::SNR, r.snr),
    );
    let (price, cap) = (
        mean_srv(tag::PRICE, r.price),
        mean_srv(tag::CAPACITY, r.capacity),
    );
    let period = (spec.t as f64).sqrt();
    let envs = (1..=spec.t as u64)
        .map(|t| {
            let decay = 1.0 / t as f64;
            let noisy = |tg: u64, means: &[f64], scale: f64, floor_frac: f64| -> Vec<f64> {
                means
                    .iter()
                    .enumerate()
                    .map(|(e, &m)| {
                        (m + scale * decay * rel * m * gauss(s, tg, t, e as u64))
                            .max(floor_frac * m)
                    })
                    .collect()
            };
            let phase = (2.0 * std::f64::consts::PI * t as f64 / period).sin();
            let c = cap
                .iter()
                .map(|&c| (c * (1.0 + amp * phase)).max(r.cap_floor))
                .collect();
            let snr_t: Vec<f64> = snr
                .iter()
                .enumerate()
                .map(|(e, &m)| m + decay * rel * m * gauss(s, tag::SNR, t, e as u64))
                .collect();
            AssignmentEnv::new(
                noisy(tag::LAMBDA, &lam, 1.0, 0.0),
                noisy(tag::TB, &tb, 1.0, 1e-3),
                snr_t,
                noisy(tag::PRICE, &price, 0.1, 1e-3),
                c,
                &profiles,
                scaling,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    finish_assignment(spec, envs, "fixed means, 1/t noise, sine capacity")
}

/// Applies the optional normalization and the floors implied by the bounds.
fn finish_assignment(
    spec: &ScenarioSpec,
    mut envs: Vec<AssignmentEnv>,
    note: &str,
) -> Result<EnvSequence<AssignmentEnv>> {
    if spec.overrides.normalize.unwrap_or(false) {
        let lam_max = envs
            .iter()
            .flat_map(|e| e.lambda.iter().cloned())
            .fold(0.0, f64::max);
        let h_ref = envs
            .iter()
            .flat_map(|e| (0..e.num_servers()).map(move |j| e.full_saving(j) / e.scaling.phi_h))
            .fold(0.0, f64::max);
        for e in &mut envs {
            e.scaling.phi_u = 1.0 / lam_max;
            e.scaling.phi_h = 1.0 / h_ref;
        }
    }
    let params = assignment_params_for(spec, &envs)?;
    for e in &mut envs {
        e.scaling.u_floor = params.u_min;
        e.scaling.h_floor = params.h_min;
    }
    Ok(EnvSequence {
        envs,
        provenance: provenance(spec, note),
    })
}

/// Fairness parameters for an assignment sequence: the envelope of the
/// largest possible utility and saving, with floors a fixed fraction below.
pub fn assignment_params_for(
    spec: &ScenarioSpec,
    envs: &[AssignmentEnv],
) -> Result<FairnessParams> {
    let o = &spec.overrides;
    let u_env = envs
        .iter()
        .flat_map(|e| e.lambda.iter().map(move |l| l * e.scaling.phi_u))
        .fold(0.0, f64::max);
    let h_env = envs
        .iter()
        .flat_map(|e| (0..e.num_servers()).map(move |j| e.full_saving(j)))
        .fold(0.0, f64::max);
    let u_max = o.u_max.unwrap_or(u_env);
    let h_max = o.h_max.unwrap_or(h_env);
    let p = FairnessParams {
        alpha: o.alpha.unwrap_or(1.0),
        beta: o.beta.unwrap_or(1.0),
        u_min: o
            .u_min
            .unwrap_or(o.u_min_frac.unwrap_or(DEFAULT_U_MIN_FRAC) * u_max),
        u_max,
        h_min: o
            .h_min
            .unwrap_or(o.h_min_frac.unwrap_or(DEFAULT_H_MIN_FRAC) * h_max),
        h_max,
    };
    p.validate()?;
    Ok(p)
}

/// Generates an assignment scenario and its fairness parameters.
pub fn build_assignment(
    spec: &ScenarioSpec,
) -> Result<(EnvSequence<AssignmentEnv>, FairnessParams)> {
    let seq = match spec.kind {
        ScenarioKind::Assignment1 => gen_assignment_s1(spec)?,
        ScenarioKind::Assignment2 => gen_assignment_s2(spec)?,
        k => {
            return Err(Error::InvalidParameter(format!(
                "{} is not an assignment scenario",
                k.name()
            )))
        }
    };
    let params = assignment_params_for(spec, &seq.envs)?;
    Ok((seq, params))
}

// ---------------------------------------------------------------------------
// Threshold scenarios.

pub const EVENTS_RANGE: [f64; 2] = [10.0, 40.0];
pub const RHO_RANGE: [f64; 2] = [5e4, 1e5];
pub const MINTB_SNR_RANGE: [f64; 2] = [20.0, 30.0];
/// Smallest bits-per-event value kept after perturbation.
pub const RHO_FLOOR: f64 = 1e3;

fn beta_table(o: &Overrides) -> Result<BetaTable> {
    match &o.beta_knots {
        Some(k) => BetaTable::new(k.iter().map(|&[s, b]| (s, b)).collect()),
        None => Ok(BetaTable::default()),
    }
}

/// I.i.d. uniform events, bits per event and SNR.
pub fn gen_mintb_s1(spec: &ScenarioSpec) -> Result<EnvSequence<MinTbEnv>> {
    spec.validate()?;
    let o = &spec.overrides;
    let (ev, rho, snr) = (
        o.events.unwrap_or(EVENTS_RANGE),
        o.rho.unwrap_or(RHO_RANGE),
        o.snr.unwrap_or(MINTB_SNR_RANGE),
    );
    let beta = beta_table(o)?;
    let phi = o.phi.unwrap_or(0.0);
    let s = spec.seed;
    let envs = (1..=spec.t as u64)
        .map(|t| {
            let draw = |tg, r| {
                (0..spec.i as u64)
                    .map(|i| uniform(s, tg, t, i, r))
                    .collect::<Vec<_>>()
            };
            MinTbEnv::new(
                draw(tag::EVENTS, ev),
                draw(tag::RHO, rho),
                draw(tag::SNR, snr),
                beta.clone(),
                phi,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnvSequence {
        envs,
        provenance: provenance(spec, "i.i.d. uniform draws"),
    })
}

/// Events pattern of user `i` (1-based) at slot `t`: 10 in the first half of
/// each period `2^i`, 40 in the second.
pub fn ping_pong_events(i: u32, t: u64) -> f64 {
    if t % (1u64 << i) < (1u64 << (i - 1)) {
        10.0
    } else {
        40.0
    }
}

/// SNR pattern of user `i` (1-based, at most 5): period `2^(5-i)`.
pub fn ping_pong_snr(i: u32, t: u64) -> f64 {
    let period = 1u64 << (5 - i);
    // Half period 2^(4-i); for i = 5 it is 1/2, i.e. every t mod 1 = 0 < 1/2.
    if ((t % period) as f64) < (period as f64) / 2.0 {
        20.0
    } else {
        30.0
    }
}

/// Adversarial ping-pong of events and SNR with a vanishing bits-per-event perturbation.
pub fn gen_mintb_s3(spec: &ScenarioSpec) -> Result<EnvSequence<MinTbEnv>> {
    spec.validate()?;
    let o = &spec.overrides;
    let wrap = o.wrap_users.unwrap_or(false);
    if spec.i > 5 && !wrap {
        return Err(Error::InvalidParameter(format!(
            "the ping-pong pattern is defined for at most 5 users, got {} (set wrap_users to reuse patterns)",
            spec.i
        )));
    }
    let rho_range = o.rho.unwrap_or(RHO_RANGE);
    let beta = beta_table(o)?;
    let phi = o.phi.unwrap_or(0.0);
    let s = spec.seed;
    let rho_bar: Vec<f64> = (0..spec.i as u64)
        .map(|i| uniform(s, tag::RHO, MEAN_SLOT, i, rho_range))
        .collect();
    let envs = (1..=spec.t as u64)
        .map(|t| {
            let users = 0..spec.i;
            let pat = |i: usize| (i % 5) as u32 + 1;
            let b = users.clone().map(|i| ping_pong_events(pat(i), t)).collect();
            let snr = users.clone().map(|i| ping_pong_snr(pat(i), t)).collect();
            let rho = users
                .map(|i| {
                    (rho_bar[i] + 1e4 * gauss(s, tag::RHO, t, i as u64) / t as f64).max(RHO_FLOOR)
                })
                .collect();
            MinTbEnv::new(b, rho, snr, beta.clone(), phi)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnvSequence {
        envs,
        provenance: provenance(spec, "ping-pong events and SNR"),
    })
}

/// Synthetic bursty trace standing in for operator measurements: each user
/// alternates on/off bursts of geometric length with jittered traffic.
/// It is labeled synthetic in its provenance.
pub fn synthetic_bursty_trace(
    users: usize,
    slots: usize,
    seed: u64,
) -> Result<EnvSequence<MinTbEnv>> {
    let mut envs = Vec::with_capacity(slots);
    let base: Vec<f64> = (0..users as u64)
        .map(|i| uniform(seed, tag::RHO, MEAN_SLOT, i, RHO_RANGE))
        .collect();
    let mut on = vec![false; users];
    let mut snr: Vec<f64> = (0..users as u64)
        .map(|i| uniform(seed, tag::SNR, MEAN_SLOT, i, [15.0, 28.0]))
        .collect();
    for t in 1..=slots as u64 {
        let mut b = Vec::with_capacity(users);
        let mut rho = Vec::with_capacity(users);
        for i in 0..users {
            let mut rng = stream_rng(seed, tag::BURST, t, i as u64);
            // Mean burst length 20 slots, mean gap 30 slots.
            let flip = if on[i] { 1.0 / 20.0 } else { 1.0 / 30.0 };
            if rng.random::<f64>() < flip {
                on[i] = !on[i];
            }
            b.push(if on[i] {
                rng.random_range(30.0..40.0)
            } else {
                rng.random_range(1.0..5.0)
            });
            let jitter: f64 = rng.sample(StandardNormal);
            rho.push((base[i] * (0.1 * jitter).exp()).max(RHO_FLOOR));
            let step: f64 = rng.sample(StandardNormal);
            snr[i] = (snr[i] + 0.5 * step).clamp(10.0, 30.0);
        }
        envs.push(MinTbEnv::new(
            b,
            rho,
            snr.clone(),
            BetaTable::default(),
            0.0,
        )?);
    }
    let mut spec = ScenarioSpec::preset(ScenarioKind::MinTb2Trace, slots, seed);
    spec.i = users;
    Ok(EnvSequence {
        envs,
        provenance: provenance(&spec, "SYNTHETIC bursty on/off trace"),
    })
}

/// Trace CSV header.
pub const TRACE_HEADER: [&str; 5] = ["slot", "user", "events_b", "bits_per_event_rho", "snr_db"];

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    slot: u64,
    user: usize,
    events_b: f64,
    bits_per_event_rho: f64,
    snr_db: f64,
}

/// Reads a trace and multiplies each user's bits per event by `rho_scale[user]`.
///
/// Rows must be ordered by slot then user; slots are consecutive integers and
/// every slot lists users `1..=I`.
pub fn load_trace<R: Read>(
    reader: R,
    rho_scale: Option<&[f64]>,
    beta: BetaTable,
    phi: f64,
) -> Result<Vec<MinTbEnv>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}", TRACE_HEADER.join(",")),
        });
    }
    let mut slots: Vec<(u64, Vec<TraceRow>)> = Vec::new();
    for rec in rdr.deserialize::<TraceRow>() {
        let row = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = slots.iter().map(|s| s.1.len()).sum::<usize>() + 2;
        match slots.last_mut() {
            Some((s, rows)) if *s == row.slot => {
                if row.user != rows.len() + 1 {
                    return Err(Error::Parse {
                        line,
                        msg: format!("expected user {}, got {}", rows.len() + 1, row.user),
                    });
                }
                rows.push(row);
            }
            last => {
                if let Some((s, _)) = last {
                    if row.slot != *s + 1 {
                        return Err(Error::Parse {
                            line,
                            msg: format!("slot {} does not follow slot {s}", row.slot),
                        });
                    }
                }
                if row.user != 1 {
                    return Err(Error::Parse {
                        line,
                        msg: format!("slot {} must start with user 1", row.slot),
                    });
                }
                slots.push((row.slot, vec![row]));
            }
        }
    }
    let users = slots.first().ok_or(Error::Empty("trace"))?.1.len();
    if let Some(scale) = rho_scale {
        if scale.len() != users {
            return Err(Error::Dimension {
                expected: users,
                got: scale.len(),
            });
        }
    }
    slots
        .into_iter()
        .map(|(slot, rows)| {
            if rows.len() != users {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("slot {slot} lists {} users, expected {users}", rows.len()),
                });
            }
            let rho = rows
                .iter()
                .enumerate()
                .map(|(i, r)| r.bits_per_event_rho * rho_scale.map_or(1.0, |s| s[i]))
                .collect();
            MinTbEnv::new(
                rows.iter().map(|r| r.events_b).collect(),
                rho,
                rows.iter().map(|r| r.snr_db).collect(),
                beta.clone(),
                phi,
            )
        })
        .collect()
}

/// Writes environments in the trace format, slots numbered from 1.
pub fn export_trace<W: Write>(writer: W, envs: &[MinTbEnv]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (t, e) in envs.iter().enumerate() {
        for i in 0..e.num_users() {
            w.serialize(TraceRow {
                slot: t as u64 + 1,
                user: i + 1,
                events_b: e.b[i],
                bits_per_event_rho: e.rho[i],
                snr_db: e.snr[i],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Default per-user scale of bits per event for the trace scenario.
pub const TRACE_RHO_SCALE: [f64; 5] = [1.0, 2.0, 4.0, 6.0, 8.0];

/// Generates or loads a threshold scenario and its parameters.
pub fn build_mintb(spec: &ScenarioSpec) -> Result<(EnvSequence<MinTbEnv>, MinTbParams)> {
    spec.validate()?;
    let o = &spec.overrides;
    let mut seq = match spec.kind {
        ScenarioKind::MinTb1 => gen_mintb_s1(spec)?,
        ScenarioKind::MinTb3 => gen_mintb_s3(spec)?,
        ScenarioKind::MinTb2Trace | ScenarioKind::CustomFile => {
            let scale: Option<Vec<f64>> = match (&o.rho_scale, spec.kind) {
                (Some(s), _) => Some(s.clone()),
                (None, ScenarioKind::MinTb2Trace) if spec.i == 5 => Some(TRACE_RHO_SCALE.to_vec()),
                _ => None,
            };
            let beta = beta_table(o)?;
            let phi = o.phi.unwrap_or(0.0);
            let (envs, note) = match &o.trace {
                Some(path) => {
                    let f = std::fs::File::open(path)?;
                    (
                        load_trace(f, scale.as_deref(), beta, phi)?,
                        format!("trace {}", path.display()),
                    )
                }
                None if spec.kind == ScenarioKind::MinTb2Trace => {
                    let mut envs = synthetic_bursty_trace(spec.i, spec.t, spec.seed)?.envs;
                    for e in &mut envs {
                        if let Some(s) = &scale {
                            e.rho.iter_mut().zip(s).for_each(|(r, k)| *r *= k);
                        }
                        e.beta = beta.clone();
                        e.phi = phi;
                    }
                    (envs, "SYNTHETIC bursty on/off trace".to_string())
                }
                None => {
                    return Err(Error::InvalidParameter(
                        "custom-file scenario needs overrides.trace".into(),
                    ))
                }
            };
            let envs: Vec<MinTbEnv> = envs.into_iter().take(spec.t).collect();
            if envs.len() < spec.t {
                return Err(Error::InvalidParameter(format!(
                    "trace has {} slots, T = {}",
                    envs.len(),
                    spec.t
                )));
            }
            EnvSequence {
                envs,
                provenance: provenance(spec, &note),
            }
        }
        k => {
            return Err(Error::InvalidParameter(format!(
                "{} is not a threshold scenario",
                k.name()
            )))
        }
    };
    if seq.envs.first().is_some_and(|e| e.num_users() != spec.i) {
        return Err(Error::Dimension {
            expected: spec.i,
            got: seq.envs[0].num_users(),
        });
    }
    let k = o.k.unwrap_or(DEFAULT_K);
    let rho_min = seq
        .envs
        .iter()
        .flat_map(|e| e.rho.iter().cloned())
        .fold(f64::INFINITY, f64::min);
    let params = MinTbParams {
        alpha: o.alpha.unwrap_or(1.0),
        u_min: o.u_min.unwrap_or_else(|| empty_buffer_kernel(k, rho_min).0),
        u_max: o.u_max.unwrap_or(1.0),
        k,
    };
    params.validate()?;
    seq.provenance.spec = spec.clone();
    Ok((seq, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s1_supports_and_reproducibility() {
        let spec = ScenarioSpec::preset(ScenarioKind::Assignment1, 50, 7);
        let a = gen_assignment_s1(&spec).unwrap();
        let b = gen_assignment_s1(&spec).unwrap();
        assert_eq!(a, b);
        for e in &a.envs {
            assert!(e.lambda.iter().all(|&l| (4e6..6e6).contains(&l)));
            assert!(e.prices.iter().all(|&p| (10.0..15.0).contains(&p)));
            assert!(e.capacity.iter().all(|&c| c > 0.0 && c < 10.0));
        }
        let other = gen_assignment_s1(&ScenarioSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.envs[0].lambda, other.envs[0].lambda);
    }

    #[test]
    fn spec_from_toml() {
        let spec = ScenarioSpec::from_toml_str(
            "kind = \"assignment-2\"\nI = 3\nJ = 2\nT = 40\nseed = 5\n[overrides]\nsine_amplitude = 0.3\n",
        )
        .unwrap();
        assert_eq!(spec.kind, ScenarioKind::Assignment2);
        assert_eq!((spec.i, spec.j, spec.t, spec.seed), (3, 2, 40, 5));
        assert_eq!(spec.overrides.sine_amplitude, Some(0.3));
        assert!(
            ScenarioSpec::from_toml_str("kind = \"assignment-1\"\nI = 3\nJ = 2\nT = 0\n").is_err()
        );
        assert!(ScenarioSpec::from_toml_str("kind = \"nope\"\nI = 3\nT = 4\n").is_err());
    }

    #[test]
    fn ping_pong_patterns() {
        let b1: Vec<f64> = (1..=4).map(|t| ping_pong_events(1, t)).collect();
        assert_eq!(b1, vec![40.0, 10.0, 40.0, 10.0]);
        for t in 1..=32u64 {
            let expect = if t % 8 < 4 { 10.0 } else { 40.0 };
            assert_eq!(ping_pong_events(3, t), expect);
        }
        assert!((1..10).all(|t| ping_pong_snr(5, t) == 20.0));
        assert_eq!(ping_pong_snr(4, 1), 30.0);
        assert_eq!(ping_pong_snr(4, 2), 20.0);
    }

    #[test]
    fn s3_rejects_too_many_users() {
        let mut spec = ScenarioSpec::preset(ScenarioKind::MinTb3, 10, 1);
        spec.i = 6;
        assert!(gen_mintb_s3(&spec).is_err());
        spec.overrides.wrap_users = Some(true);
        assert_eq!(gen_mintb_s3(&spec).unwrap().envs[0].num_users(), 6);
    }

    #[test]
    fn trace_round_trip_and_scaling() {
        let seq = synthetic_bursty_trace(5, 30, 3).unwrap();
        let mut buf = Vec::new();
        export_trace(&mut buf, &seq.envs).unwrap();
        let back = load_trace(&buf[..], None, BetaTable::default(), 0.0).unwrap();
        assert_eq!(back, seq.envs);
        let scaled =
            load_trace(&buf[..], Some(&TRACE_RHO_SCALE), BetaTable::default(), 0.0).unwrap();
        for (a, b) in scaled.iter().zip(&seq.envs) {
            for i in 0..5 {
                assert_eq!(a.rho[i], b.rho[i] * TRACE_RHO_SCALE[i]);
            }
        }
    }

    #[test]
    fn trace_errors() {
        assert!(load_trace(&b""[..], None, BetaTable::default(), 0.0).is_err());
        let only_header = "slot,user,events_b,bits_per_event_rho,snr_db\n";
        assert!(matches!(
            load_trace(only_header.as_bytes(), None, BetaTable::default(), 0.0),
            Err(Error::Empty(_))
        ));
        let gap = format!("{only_header}1,1,10,5e4,20\n3,1,10,5e4,20\n");
        match load_trace(gap.as_bytes(), None, BetaTable::default(), 0.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad = format!("{only_header}1,1,ten,5e4,20\n");
        assert!(matches!(
            load_trace(bad.as_bytes(), None, BetaTable::default(), 0.0),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
