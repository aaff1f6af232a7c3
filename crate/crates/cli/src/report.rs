//! Serialized artifacts: inference reports, suite summaries, p-value curves
//! and oracle verdicts.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use discrete_anm::inference::BACKWARD_SEED_XOR;
use discrete_anm::regression::{CandidateMode, DmTest};
use discrete_anm::simulate::{ExperimentSummary, Reversibility};
use discrete_anm::stats::TestMethod;
use discrete_anm::theory::{BackwardModel, Decomposition, ExampleKind, ModelFixture};
use discrete_anm::{
    AnmFit, CurvePoint, FunctionTable, NoisePmf, Outcome, PairedSample, RegressionConfig, ValueDomain, Verdict,
};
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CURVE_CSV_HEADER: &str = "n,p_forward,p_backward";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub function: FunctionTable,
    pub noise: NoisePmf,
    pub p_value: f64,
    pub statistic: f64,
    pub dof: usize,
    pub method: TestMethod,
    pub dm_evaluations: u64,
    pub sweeps_used: usize,
    pub accepted: bool,
}

impl From<&AnmFit> for DirectionReport {
    fn from(fit: &AnmFit) -> Self {
        DirectionReport {
            function: fit.f.clone(),
            noise: fit.noise.clone(),
            p_value: fit.p_value,
            statistic: fit.test.statistic,
            dof: fit.test.dof,
            method: fit.test.method,
            dm_evaluations: fit.dm_evaluations,
            sweeps_used: fit.sweeps_used,
            accepted: fit.accepted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub alpha: f64,
    pub max_sweeps: usize,
    pub seed_forward: u64,
    pub seed_backward: u64,
    pub candidates: CandidateMode,
    pub dm_test: DmTest,
    pub p_min: f64,
    pub n_perm: usize,
}

impl From<&RegressionConfig> for ConfigEcho {
    fn from(cfg: &RegressionConfig) -> Self {
        ConfigEcho {
            alpha: cfg.alpha,
            max_sweeps: cfg.max_sweeps,
            seed_forward: cfg.seed,
            seed_backward: cfg.seed ^ BACKWARD_SEED_XOR,
            candidates: cfg.candidates,
            dm_test: cfg.dm_test,
            p_min: cfg.p_min,
            n_perm: cfg.n_perm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub dataset: String,
    pub n_samples: usize,
    pub x_domain: ValueDomain,
    pub y_domain: ValueDomain,
    /// `Y = f(X) + N`.
    pub forward: DirectionReport,
    /// `X = g(Y) + Ñ`.
    pub backward: DirectionReport,
    pub verdict: Outcome,
    pub config: ConfigEcho,
    pub tool_version: String,
}

impl InferenceReport {
    pub fn new(dataset: impl Into<String>, sample: &PairedSample, verdict: &Verdict, cfg: &RegressionConfig) -> Self {
        InferenceReport {
            dataset: dataset.into(),
            n_samples: sample.len(),
            x_domain: sample.x_domain(),
            y_domain: sample.y_domain(),
            forward: (&verdict.forward).into(),
            backward: (&verdict.backward).into(),
            verdict: verdict.outcome,
            config: cfg.into(),
            tool_version: TOOL_VERSION.to_string(),
        }
    }

    /// The verdict agrees with the embedded p-values and alpha.
    pub fn is_consistent(&self) -> bool {
        let a = self.config.alpha;
        Outcome::from_acceptance(self.forward.p_value > a, self.backward.p_value > a) == self.verdict
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub source: String,
    pub model: ModelFixture,
    pub reversibility: Reversibility,
    pub matching_examples: Vec<ExampleKind>,
    /// Only computed for integer models.
    pub decomposition: Option<Decomposition>,
    /// `None` when no backward model exists or the search was out of reach.
    pub backward_model: Option<BackwardModel>,
    pub backward_search_completed: bool,
    pub divisibility_ok: bool,
    pub tool_version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown format {s:?}")),
        }
    }
}

pub enum Artifact<'a> {
    Reports(&'a [InferenceReport]),
    Summary(&'a ExperimentSummary),
    Curve(&'a [CurvePoint]),
    Oracle(&'a OracleReport),
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from(CURVE_CSV_HEADER);
    s.push('\n');
    for p in points {
        writeln!(s, "{},{:?},{:?}", p.n, p.p_forward, p.p_backward).unwrap();
    }
    s
}

pub fn render(artifact: &Artifact<'_>, format: Format) -> Result<String> {
    let json = |v: serde_json::Result<String>| {
        v.map(|mut s| {
            s.push('\n');
            s
        })
    };
    Ok(match (artifact, format) {
        (Artifact::Reports(r), Format::Json) => json(serde_json::to_string_pretty(r))?,
        (Artifact::Summary(s), Format::Json) => json(serde_json::to_string_pretty(s))?,
        (Artifact::Curve(c), Format::Json) => json(serde_json::to_string_pretty(c))?,
        (Artifact::Oracle(o), Format::Json) => json(serde_json::to_string_pretty(o))?,
        (Artifact::Summary(s), Format::Csv) => s.records_csv(),
        (Artifact::Curve(c), Format::Csv) => curve_csv(c),
        (Artifact::Reports(_) | Artifact::Oracle(_), Format::Csv) => {
            return Err(UsageError::new("this artifact has no CSV form").into())
        }
    })
}

pub fn emit_report(artifact: &Artifact<'_>, path: &Path, format: Format) -> Result<()> {
    let text = render(artifact, format)?;
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
