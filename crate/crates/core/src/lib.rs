//! Causal direction inference for discrete data with additive noise models.
//!
//! A pair (X, Y) follows an additive noise model from X to Y when
//! `Y = f(X) + N` with the noise `N` independent of `X`. Values are either
//! integers or residues modulo m. The crate fits such models by dependence
//! minimization, compares both directions, and ships exact tools for
//! reasoning about when a model is reversible.

pub mod domain;
pub mod error;
pub mod inference;
pub mod regression;
pub mod seed;
pub mod simulate;
pub mod stats;
pub mod theory;

pub use domain::{FunctionTable, JointPmf, NoisePmf, PairedSample, Pmf, ValueDomain};
pub use error::{AnmError, Result};
pub use inference::{decide, infer_direction, pvalue_curve, CurvePoint, Outcome, Verdict};
pub use regression::{fit_anm, AnmFit, CandidateMode, DmTest, RegressionConfig};
pub use theory::{AnmModel, BackwardModel, Decomposition};
