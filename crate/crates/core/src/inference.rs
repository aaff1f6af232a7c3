//! Direction decision: fit both directions and compare the two residual tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::PairedSample;
use crate::error::{AnmError, Result};
use crate::regression::{fit_anm, AnmFit, RegressionConfig};

/// XORed into the configured seed to obtain the backward fit's seed.
pub const BACKWARD_SEED_XOR: u64 = 0xB4C4_D1EC_7104_5EED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    XcausesY,
    YcausesX,
    BadFit,
    BothPossible,
}

impl Outcome {
    pub fn from_acceptance(forward: bool, backward: bool) -> Self {
        match (forward, backward) {
            (true, false) => Outcome::XcausesY,
            (false, true) => Outcome::YcausesX,
            (false, false) => Outcome::BadFit,
            (true, true) => Outcome::BothPossible,
        }
    }

    /// The outcome with the roles of X and Y exchanged.
    pub fn swapped(self) -> Self {
        match self {
            Outcome::XcausesY => Outcome::YcausesX,
            Outcome::YcausesX => Outcome::XcausesY,
            o => o,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::XcausesY => "x_causes_y",
            Outcome::YcausesX => "y_causes_x",
            Outcome::BadFit => "bad_fit",
            Outcome::BothPossible => "both_possible",
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    /// Fit of `Y = f(X) + N`.
    pub forward: AnmFit,
    /// Fit of `X = g(Y) + Ñ`.
    pub backward: AnmFit,
    pub alpha: f64,
}

/// Applies the four-way truth table to the two fits.
pub fn decide(forward: AnmFit, backward: AnmFit, alpha: f64) -> Verdict {
    let outcome = Outcome::from_acceptance(forward.p_value > alpha, backward.p_value > alpha);
    Verdict {
        outcome,
        forward,
        backward,
        alpha,
    }
}

/// Fits both directions, the backward fit seeded with
/// `cfg.seed ^ BACKWARD_SEED_XOR`.
pub fn infer_direction(sample: &PairedSample, cfg: &RegressionConfig) -> Result<Verdict> {
    infer_direction_with_seeds(sample, cfg, cfg.seed, cfg.seed ^ BACKWARD_SEED_XOR)
}

pub fn infer_direction_with_seeds(
    sample: &PairedSample,
    cfg: &RegressionConfig,
    forward_seed: u64,
    backward_seed: u64,
) -> Result<Verdict> {
    let swapped = sample.swapped();
    let (forward, backward) = rayon::join(
        || fit_anm(sample, &cfg.with_seed(forward_seed)),
        || fit_anm(&swapped, &cfg.with_seed(backward_seed)),
    );
    Ok(decide(forward?, backward?, cfg.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub p_forward: f64,
    pub p_backward: f64,
}

/// Runs [`infer_direction`] on the first `n` rows for each `n` in `grid`.
pub fn pvalue_curve(sample: &PairedSample, grid: &[usize], cfg: &RegressionConfig) -> Result<Vec<CurvePoint>> {
    if let Some(&n) = grid.iter().find(|&&n| n == 0 || n > sample.len()) {
        return Err(AnmError::InvalidParameter(format!(
            "grid value {n} outside 1..={}",
            sample.len()
        )));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(AnmError::InvalidParameter("grid must be non-decreasing".into()));
    }
    grid.par_iter()
        .map(|&n| {
            let v = infer_direction(&sample.prefix(n)?, cfg)?;
            Ok(CurvePoint {
                n,
                p_forward: v.forward.p_value,
                p_backward: v.backward.p_value,
            })
        })
        .collect()
}
