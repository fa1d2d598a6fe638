//! Gradient predictors: none, naive (last gradient), and lookahead-based
//! perfect or noisy predictions.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentPredictions;
use crate::error::{Error, Result};
use crate::mintb::MinTbPredictions;
use crate::scenarios::stream_rng;

/// Accuracy coefficient of "good" noisy predictions.
pub const GOOD_ACCURACY: f64 = 0.001;
/// Accuracy coefficient of "moderate" noisy predictions.
pub const MODERATE_ACCURACY: f64 = 0.3;
/// Iteration cap of the lookahead fixed point.
pub const LOOKAHEAD_ITERS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PredictionMode {
    None,
    Perfect,
    /// `g~ = g + c n o g` with standard normal `n`.
    Noisy(f64),
    Naive,
}

impl PredictionMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            PredictionMode::Noisy(c) if !(*c >= 0.0 && c.is_finite()) => Err(
                Error::InvalidParameter(format!("accuracy coefficient must be >= 0, got {c}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn needs_lookahead(&self) -> bool {
        matches!(self, PredictionMode::Perfect | PredictionMode::Noisy(_))
    }

    pub fn label(&self) -> String {
        match self {
            PredictionMode::None => "none".into(),
            PredictionMode::Perfect => "perfect".into(),
            PredictionMode::Noisy(c) => format!("noisy:{c}"),
            PredictionMode::Naive => "naive".into(),
        }
    }
}

impl std::str::FromStr for PredictionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let m = match s {
            "none" => PredictionMode::None,
            "perfect" => PredictionMode::Perfect,
            "naive" => PredictionMode::Naive,
            "good" => PredictionMode::Noisy(GOOD_ACCURACY),
            "moderate" => PredictionMode::Noisy(MODERATE_ACCURACY),
            other => match other.strip_prefix("noisy:") {
                Some(c) => PredictionMode::Noisy(c.parse().map_err(|_| {
                    Error::InvalidParameter(format!("bad accuracy coefficient {c:?}"))
                })?),
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown prediction mode {other:?}"
                    )))
                }
            },
        };
        m.validate()?;
        Ok(m)
    }
}

/// Gradient bundles that can be flattened for noise injection.
pub trait GradientBundle: Clone + PartialEq {
    fn zeros_like(&self) -> Self;
    fn values_mut(&mut self) -> Vec<&mut f64>;
}

impl GradientBundle for AssignmentPredictions {
    fn zeros_like(&self) -> Self {
        AssignmentPredictions::zeros(self.primal.rows(), self.primal.cols())
    }
    fn values_mut(&mut self) -> Vec<&mut f64> {
        self.primal
            .as_mut_slice()
            .iter_mut()
            .chain(self.theta.iter_mut())
            .chain(self.phi.iter_mut())
            .collect()
    }
}

impl GradientBundle for MinTbPredictions {
    fn zeros_like(&self) -> Self {
        MinTbPredictions::zeros(self.primal.len())
    }
    fn values_mut(&mut self) -> Vec<&mut f64> {
        self.primal
            .iter_mut()
            .chain(self.theta.iter_mut())
            .collect()
    }
}

const NOISE_TAG: u64 = 0x5052_4544;

/// Multiplies each entry by `1 + c n` with a per-(seed, slot) noise draw.
pub fn apply_noise<P: GradientBundle>(p: &mut P, c: f64, seed: u64, slot: u64) {
    if c == 0.0 {
        return;
    }
    let mut rng = stream_rng(seed, NOISE_TAG, slot, 0);
    for v in p.values_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *v += c * n * *v;
    }
}

/// Builds the prediction for `slot`.
///
/// `template` fixes the shape, `history` is the last realized gradient and
/// `lookahead` maps a candidate prediction to the gradient the learner would
/// realize at `slot` if it decided with that prediction. Perfect and noisy
/// modes iterate that map to a fixed point (at most [`LOOKAHEAD_ITERS`]
/// rounds, starting from the history); the returned flag reports whether
/// it settled exactly.
pub fn make_predictions<P: GradientBundle>(
    mode: PredictionMode,
    template: &P,
    history: Option<&P>,
    lookahead: Option<&mut dyn FnMut(&P) -> Result<P>>,
    seed: u64,
    slot: u64,
) -> Result<(P, bool)> {
    match mode {
        PredictionMode::None => Ok((template.zeros_like(), true)),
        PredictionMode::Naive => Ok((
            history.cloned().unwrap_or_else(|| template.zeros_like()),
            true,
        )),
        PredictionMode::Perfect | PredictionMode::Noisy(_) => {
            let c = if let PredictionMode::Noisy(c) = mode {
                c
            } else {
                0.0
            };
            let f = lookahead.ok_or_else(|| {
                Error::LookaheadUnavailable(format!(
                    "{} predictions need the next slot",
                    mode.label()
                ))
            })?;
            let mut p = history.cloned().unwrap_or_else(|| template.zeros_like());
            for _ in 0..LOOKAHEAD_ITERS {
                let mut next = f(&p)?;
                apply_noise(&mut next, c, seed, slot);
                if next == p {
                    return Ok((p, true));
                }
                p = next;
            }
            Ok((p, false))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_modes() {
        assert_eq!(
            "good".parse::<PredictionMode>().unwrap(),
            PredictionMode::Noisy(0.001)
        );
        assert_eq!(
            "noisy:0.3".parse::<PredictionMode>().unwrap(),
            PredictionMode::Noisy(0.3)
        );
        assert!("noisy:-1".parse::<PredictionMode>().is_err());
        assert!("psychic".parse::<PredictionMode>().is_err());
    }

    #[test]
    fn none_and_missing_lookahead() {
        let t = MinTbPredictions {
            primal: vec![1.0, 2.0],
            theta: vec![3.0, 4.0],
        };
        let (p, ok) = make_predictions(PredictionMode::None, &t, Some(&t), None, 0, 1).unwrap();
        assert!(ok && p.primal == vec![0.0; 2] && p.theta == vec![0.0; 2]);
        let (p, _) = make_predictions(PredictionMode::Naive, &t, Some(&t), None, 0, 1).unwrap();
        assert_eq!(p, t);
        assert!(matches!(
            make_predictions(PredictionMode::Perfect, &t, None, None, 0, 1),
            Err(Error::LookaheadUnavailable(_))
        ));
    }

    #[test]
    fn decision_independent_lookahead_is_exact() {
        let target = MinTbPredictions {
            primal: vec![0.5, -2.0],
            theta: vec![1.0, 0.0],
        };
        let mut f = |_: &MinTbPredictions| Ok(target.clone());
        let (p, ok) = make_predictions(
            PredictionMode::Perfect,
            &target,
            None,
            Some(&mut f as &mut dyn FnMut(&_) -> _),
            0,
            3,
        )
        .unwrap();
        assert!(ok);
        assert_eq!(p, target);
    }
}
