//! Regressor families with analytic pmfs and their truncated weight tables.

use serde::{Deserialize, Serialize};

use crate::domain::{Pmf, ValueDomain};
use crate::error::{AnmError, Result};
use crate::stats::ln_gamma;

/// Probabilities are stored as integer weights on this scale.
pub const WEIGHT_SCALE: f64 = 1e9;
/// Unbounded supports stop once the remaining tail is below this.
pub const TAIL_MASS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DiscreteLaw {
    /// Successes in `n` trials, support `0..=n`.
    Binomial {
        n: u64,
        p: f64,
    },
    /// Trials up to and including the first success, support `1..`.
    Geometric {
        p: f64,
    },
    /// Successes in `draws` draws without replacement from `population`
    /// items of which `successes` are marked.
    Hypergeometric {
        population: u64,
        successes: u64,
        draws: u64,
    },
    /// Failures before the `r`-th success, support `0..`.
    NegativeBinomial {
        r: u64,
        p: f64,
    },
    Poisson {
        lambda: f64,
    },
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

impl DiscreteLaw {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| p > 0.0 && p < 1.0;
        let ok = match *self {
            DiscreteLaw::Binomial { n, p } => n >= 1 && prob(p),
            DiscreteLaw::Geometric { p } => prob(p),
            DiscreteLaw::Hypergeometric {
                population,
                successes,
                draws,
            } => population >= 1 && successes <= population && draws <= population,
            DiscreteLaw::NegativeBinomial { r, p } => r >= 1 && prob(p),
            DiscreteLaw::Poisson { lambda } => lambda > 0.0 && lambda.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(AnmError::InvalidParameter(format!("invalid law {self:?}")))
        }
    }

    /// Smallest value with positive mass, and the largest one if bounded.
    pub fn support_bounds(&self) -> (i64, Option<i64>) {
        match *self {
            DiscreteLaw::Binomial { n, .. } => (0, Some(n as i64)),
            DiscreteLaw::Geometric { .. } => (1, None),
            DiscreteLaw::Hypergeometric {
                population,
                successes,
                draws,
            } => (
                (draws + successes).saturating_sub(population) as i64,
                Some(successes.min(draws) as i64),
            ),
            DiscreteLaw::NegativeBinomial { .. } | DiscreteLaw::Poisson { .. } => (0, None),
        }
    }

    pub fn pmf(&self, k: i64) -> f64 {
        let (lo, hi) = self.support_bounds();
        if k < lo || hi.is_some_and(|h| k > h) {
            return 0.0;
        }
        let kf = k as f64;
        let ku = k as u64;
        let ln = match *self {
            DiscreteLaw::Binomial { n, p } => ln_choose(n, ku) + kf * p.ln() + (n - ku) as f64 * (1.0 - p).ln(),
            DiscreteLaw::Geometric { p } => (kf - 1.0) * (1.0 - p).ln() + p.ln(),
            DiscreteLaw::Hypergeometric {
                population,
                successes,
                draws,
            } => {
                ln_choose(successes, ku) + ln_choose(population - successes, draws - ku) - ln_choose(population, draws)
            }
            DiscreteLaw::NegativeBinomial { r, p } => {
                ln_gamma(kf + r as f64) - ln_gamma(kf + 1.0) - ln_gamma(r as f64)
                    + r as f64 * p.ln()
                    + kf * (1.0 - p).ln()
            }
            DiscreteLaw::Poisson { lambda } => kf * lambda.ln() - lambda - ln_gamma(kf + 1.0),
        };
        ln.exp()
    }

    /// Integer weights `round(pmf · WEIGHT_SCALE)`, truncated once the
    /// remaining tail of an unbounded law drops below [`TAIL_MASS`].
    pub fn weights(&self) -> Result<Pmf> {
        self.validate()?;
        let (lo, hi) = self.support_bounds();
        let mut pairs = Vec::new();
        let mut cum = 0.0;
        let mut k = lo;
        loop {
            if hi.is_some_and(|h| k > h) || (hi.is_none() && 1.0 - cum < TAIL_MASS) {
                break;
            }
            let p = self.pmf(k);
            cum += p;
            pairs.push((k, (p * WEIGHT_SCALE).round() as u64));
            k += 1;
            if k - lo > 100_000 {
                return Err(AnmError::InvalidParameter(format!("support of {self:?} too long")));
            }
        }
        Pmf::from_weights(pairs, ValueDomain::Integer)
    }
}

/// Weights for explicit probabilities on the given values.
pub fn categorical(probs: &[(i64, f64)], domain: ValueDomain) -> Result<Pmf> {
    if probs.iter().any(|&(_, p)| !p.is_finite() || p < 0.0) {
        return Err(AnmError::InvalidParameter(
            "probabilities must be finite and nonnegative".into(),
        ));
    }
    Pmf::from_weights(
        probs.iter().map(|&(v, p)| (v, (p * WEIGHT_SCALE).round() as u64)),
        domain,
    )
}
