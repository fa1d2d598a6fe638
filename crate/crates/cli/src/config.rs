//! Run configuration: flags, optional TOML file, and the resolved form.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hfair_core::evaluation::PredictionMode;
use hfair_core::scenarios::{ScenarioKind, ScenarioSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Horizon used when neither the flags nor a scenario file set one.
pub const DEFAULT_HORIZON: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Horizon-fair assignment learner.
    Alg1,
    /// Fair and cost-aware threshold learner.
    Alg2,
    SlotFair,
    Utilitarian,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Alg1 => "alg1",
            PolicyKind::Alg2 => "alg2",
            PolicyKind::SlotFair => "slot-fair",
            PolicyKind::Utilitarian => "utilitarian",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "alg1" => PolicyKind::Alg1,
            "alg2" => PolicyKind::Alg2,
            "slot-fair" => PolicyKind::SlotFair,
            "utilitarian" => PolicyKind::Utilitarian,
            other => {
                bail!("unknown policy {other:?} (expected alg1, alg2, slot-fair or utilitarian)")
            }
        })
    }

    fn default_for(kind: ScenarioKind) -> Self {
        if kind.is_assignment() {
            PolicyKind::Alg1
        } else {
            PolicyKind::Alg2
        }
    }
}

/// Everything a run can be configured with. Flags fill it first; a `--config`
/// file then overrides every field it sets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Preset name (e.g. `assignment-1`, `m3`) or path to a scenario TOML file.
    pub scenario: Option<String>,
    pub policy: Option<String>,
    pub pred: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub phi: Option<f64>,
    pub phi_h: Option<f64>,
    pub k: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn overlay(mut self, file: RunConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if file.$f.is_some() { self.$f = file.$f; } )* };
        }
        take!(scenario, policy, pred, alpha, beta, phi, phi_h, k, t, seeds, out);
        self
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// A fully resolved run, before seeds are applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    /// Scenario with all overrides applied; `seed` is replaced per run.
    pub spec: ScenarioSpec,
    pub policy: PolicyKind,
    pub pred: String,
    #[serde(skip)]
    pub mode: PredictionMode,
    pub seeds: Vec<u64>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl Resolved {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let scenario = cfg
            .scenario
            .as_deref()
            .context("no scenario given (use --scenario or the config file)")?;
        let mut spec = load_scenario(scenario, cfg.t)?;
        if let Some(t) = cfg.t {
            spec.t = t;
        }
        let o = &mut spec.overrides;
        o.alpha = cfg.alpha.or(o.alpha);
        o.beta = cfg.beta.or(o.beta);
        o.phi = cfg.phi.or(o.phi);
        o.phi_h = cfg.phi_h.or(o.phi_h);
        o.k = cfg.k.or(o.k);
        spec.validate()?;

        let policy = match &cfg.policy {
            Some(p) => PolicyKind::parse(p)?,
            None => PolicyKind::default_for(spec.kind),
        };
        match (policy, spec.kind.is_assignment()) {
            (PolicyKind::Alg2, true) => bail!("policy alg2 needs a threshold (mintb) scenario"),
            (PolicyKind::Alg1 | PolicyKind::SlotFair | PolicyKind::Utilitarian, false) => {
                bail!("policy {} needs an assignment scenario", policy.name())
            }
            _ => {}
        }
        let pred = cfg.pred.clone().unwrap_or_else(|| "none".into());
        let mode: PredictionMode = pred.parse()?;
        mode.validate()?;
        if matches!(policy, PolicyKind::SlotFair | PolicyKind::Utilitarian)
            && mode != PredictionMode::None
        {
            bail!("baseline policies take no predictions");
        }
        let seeds = cfg.seeds.clone().unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            bail!("seed list is empty");
        }
        let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self {
            spec,
            policy,
            pred: mode.label(),
            mode,
            seeds,
            out,
        })
    }

    /// SHA-256 of the resolved configuration without the output directory.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn spec_for(&self, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            seed,
            ..self.spec.clone()
        }
    }

    pub fn provenance(&self, seed: u64) -> String {
        format!(
            "hfair {} config_sha256={} scenario={} policy={} pred={} T={} seed={seed}",
            env!("CARGO_PKG_VERSION"),
            self.hash(),
            self.spec.kind.name(),
            self.policy.name(),
            self.pred,
            self.spec.t
        )
    }
}

/// A preset name or a scenario file.
pub fn load_scenario(name: &str, t: Option<usize>) -> Result<ScenarioSpec> {
    if let Ok(kind) = name.parse::<ScenarioKind>() {
        if kind == ScenarioKind::CustomFile {
            bail!("custom-file scenarios must be given as a TOML file");
        }
        return Ok(ScenarioSpec::preset(kind, t.unwrap_or(DEFAULT_HORIZON), 0));
    }
    let path = Path::new(name);
    if !path.exists() {
        bail!("scenario {name:?} is neither a preset nor an existing file");
    }
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))?;
    Ok(ScenarioSpec::from_toml_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig {
            scenario: Some("a1".into()),
            t: Some(20),
            ..Default::default()
        }
    }

    #[test]
    fn file_overrides_flags() {
        let flags = RunConfig {
            alpha: Some(2.0),
            beta: Some(1.0),
            ..base()
        };
        let file = RunConfig {
            alpha: Some(3.0),
            ..Default::default()
        };
        let merged = flags.overlay(file);
        assert_eq!(merged.alpha, Some(3.0));
        assert_eq!(merged.beta, Some(1.0));
    }

    #[test]
    fn policy_defaults_follow_scenario() {
        assert_eq!(
            Resolved::from_config(&base()).unwrap().policy,
            PolicyKind::Alg1
        );
        let m = RunConfig {
            scenario: Some("m1".into()),
            ..base()
        };
        assert_eq!(Resolved::from_config(&m).unwrap().policy, PolicyKind::Alg2);
    }

    #[test]
    fn mismatched_policy_is_rejected() {
        let c = RunConfig {
            policy: Some("alg2".into()),
            ..base()
        };
        assert!(Resolved::from_config(&c).is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = Resolved::from_config(&RunConfig {
            out: Some("x".into()),
            ..base()
        })
        .unwrap();
        let b = Resolved::from_config(&RunConfig {
            out: Some("y".into()),
            ..base()
        })
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = Resolved::from_config(&RunConfig {
            alpha: Some(2.0),
            ..base()
        })
        .unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
