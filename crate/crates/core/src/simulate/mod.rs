//! Synthetic models, sampling and experiment suites.
//!
//! Seeds: model `k` of a suite uses `split(spec.seed, k)`; from that seed,
//! stream 0 draws the model, stream 1 the sample and stream 2 seeds the
//! regression.

pub mod distributions;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{FunctionTable, PairedSample, Pmf, ValueDomain};
use crate::error::{AnmError, Result};
use crate::inference::{infer_direction, Outcome};
use crate::regression::RegressionConfig;
use crate::seed::split;
use crate::theory::{backward_search, level_set_decomposition, near_examples, AnmModel, ExampleKind, ModelFixture};

pub use distributions::{categorical, DiscreteLaw, TAIL_MASS, WEIGHT_SCALE};

/// Tolerance of the near-example classifiers attached to suite records.
pub const NEAR_EXAMPLE_TOL: f64 = 0.05;

/// Draws `n` rows by inverse CDF on the integer weights.
pub fn sample_model(model: &AnmModel, n: usize, seed: u64) -> Result<PairedSample> {
    if n == 0 {
        return Err(AnmError::InvalidParameter("sample size must be at least 1".into()));
    }
    let cum = |p: &Pmf| -> Vec<u64> {
        p.weights()
            .iter()
            .scan(0u64, |acc, &w| {
                *acc += w;
                Some(*acc)
            })
            .collect()
    };
    let (cx, cn) = (cum(&model.p_x), cum(&model.noise));
    let draw = |rng: &mut ChaCha8Rng, c: &[u64]| -> usize {
        let u = rng.random_range(0..c[c.len() - 1]);
        c.partition_point(|&v| v <= u)
    };
    let dy = model.y_domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let x = model.p_x.values()[draw(&mut rng, &cx)];
            let e = model.noise.values()[draw(&mut rng, &cn)];
            (x, dy.add(model.f.get(x).unwrap(), e))
        })
        .collect();
    PairedSample::new(rows, model.x_domain(), dy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegressorKind {
    /// Flat-Dirichlet categorical on {1..4}.
    Support4,
    /// Flat-Dirichlet categorical on {1..6}.
    Support6,
    Binomial,
    Geometric,
    Hypergeometric,
    NegativeBinomial,
    Poisson,
    /// Categorical on all of Z/mZ.
    CyclicCategorical,
    /// One of the fixed benchmark models.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelFamily {
    Integer1a,
    Cyclic1b { m: u32, mt: u32 },
    Support3b { m: u32, mt: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedModel {
    pub model: AnmModel,
    pub regressor: RegressorKind,
    pub law: Option<DiscreteLaw>,
}

/// Normalized exponential draws, i.e. a flat Dirichlet sample.
fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn random_categorical(rng: &mut ChaCha8Rng, values: &[i64], domain: ValueDomain) -> Pmf {
    let p = random_simplex(rng, values.len());
    // keep every value in the support
    Pmf::from_weights(
        values
            .iter()
            .zip(p)
            .map(|(&v, p)| (v, ((p * WEIGHT_SCALE).round() as u64).max(1))),
        domain,
    )
    .expect("nonempty support")
}

fn random_regressor(rng: &mut ChaCha8Rng) -> (RegressorKind, Option<DiscreteLaw>, Pmf) {
    let kind = match rng.random_range(0..7) {
        0 => RegressorKind::Support4,
        1 => RegressorKind::Support6,
        2 => RegressorKind::Binomial,
        3 => RegressorKind::Geometric,
        4 => RegressorKind::Hypergeometric,
        5 => RegressorKind::NegativeBinomial,
        _ => RegressorKind::Poisson,
    };
    let law = match kind {
        RegressorKind::Binomial => Some(DiscreteLaw::Binomial {
            n: rng.random_range(2..=10),
            p: rng.random_range(0.1..=0.9),
        }),
        RegressorKind::Geometric => Some(DiscreteLaw::Geometric {
            p: rng.random_range(0.3..=0.9),
        }),
        RegressorKind::Hypergeometric => {
            let population = rng.random_range(6..=12);
            Some(DiscreteLaw::Hypergeometric {
                population,
                successes: rng.random_range(2..=population - 2),
                draws: rng.random_range(2..=population - 2),
            })
        }
        RegressorKind::NegativeBinomial => Some(DiscreteLaw::NegativeBinomial {
            r: rng.random_range(1..=5),
            p: rng.random_range(0.3..=0.9),
        }),
        RegressorKind::Poisson => Some(DiscreteLaw::Poisson {
            lambda: rng.random_range(1.0..=5.0),
        }),
        _ => None,
    };
    let pmf = match (kind, law) {
        (_, Some(law)) => law.weights().expect("ranges are valid"),
        (kind, None) => {
            let top = if kind == RegressorKind::Support4 { 4 } else { 6 };
            random_categorical(rng, &(1..=top).collect::<Vec<_>>(), ValueDomain::Integer)
        }
    };
    (kind, law, pmf)
}

fn random_cyclic(rng: &mut ChaCha8Rng, m: u32, mt: u32) -> AnmModel {
    let xs: Vec<i64> = (0..m as i64).collect();
    let ns: Vec<i64> = (0..mt as i64).collect();
    let p_x = random_categorical(rng, &xs, ValueDomain::Cyclic(m));
    let noise = random_categorical(rng, &ns, ValueDomain::Cyclic(mt));
    let f = loop {
        let f = FunctionTable::new(
            xs.iter().map(|&x| (x, rng.random_range(0..mt as i64))),
            ValueDomain::Cyclic(mt),
        );
        if !f.is_constant() {
            break f;
        }
    };
    AnmModel::new(p_x, f, noise).expect("consistent construction")
}

/// Draws a random model of the given family.
///
/// Integer models: one of seven regressor families picked uniformly,
/// `f` uniform on `[-7, 7]` at every support point, and noise a random
/// categorical on a contiguous block of 3 to 7 offsets containing 0.
/// Cyclic models: flat-Dirichlet regressor and noise laws on the whole
/// ring and a uniformly random non-constant `f`.
pub fn random_model(family: ModelFamily, seed: u64) -> Result<GeneratedModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match family {
        ModelFamily::Integer1a => {
            let (regressor, law, p_x) = random_regressor(&mut rng);
            let f = FunctionTable::new(
                p_x.values().iter().map(|&x| (x, rng.random_range(-7..=7))),
                ValueDomain::Integer,
            );
            let len = rng.random_range(3..=7i64);
            let start = rng.random_range(-(len - 1)..=0);
            let offsets: Vec<i64> = (start..start + len).collect();
            let noise = random_categorical(&mut rng, &offsets, ValueDomain::Integer);
            Ok(GeneratedModel {
                model: AnmModel::new(p_x, f, noise)?,
                regressor,
                law,
            })
        }
        ModelFamily::Cyclic1b { m, mt } | ModelFamily::Support3b { m, mt } => {
            if m < 2 || mt < 2 {
                return Err(AnmError::InvalidParameter(format!(
                    "cyclic sizes must be >= 2, got ({m}, {mt})"
                )));
            }
            Ok(GeneratedModel {
                model: random_cyclic(&mut rng, m, mt),
                regressor: RegressorKind::CyclicCategorical,
                law: None,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ds3aNoise {
    /// .05/.3/.3/.3/.05 on −2..=2.
    N1,
    /// .05/.18/.18/.18/.18/.18/.05 on −3..=3.
    N2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BenchmarkModel {
    /// Close to non-identifiable, reversible exactly at `r = 0`.
    Ds2a { r: f64 },
    /// Cyclic `m = m̃ = 4`, `f = id`; uniform noise at `r = 1/2`.
    Ds2b { r: f64 },
    /// `Y = round(X²/2) + N` with X uniform on `i` values centered at 0.
    Ds3a { noise: Ds3aNoise, i: u32 },
}

/// The fixed models of the synthetic benchmarks.
pub fn benchmark_model(id: BenchmarkModel) -> Result<AnmModel> {
    let int = ValueDomain::Integer;
    match id {
        BenchmarkModel::Ds2a { r } => {
            if !(-0.2..=0.2).contains(&r) {
                return Err(AnmError::InvalidParameter(format!(
                    "DS2a needs r in [-0.2, 0.2], got {r}"
                )));
            }
            let p_x = categorical(
                &[
                    (-3, 0.1 + r / 2.0),
                    (-1, 0.3 - r / 2.0),
                    (1, 0.15 - r / 2.0),
                    (3, 0.45 + r / 2.0),
                ],
                int,
            )?;
            let f = FunctionTable::new([(-3, 1), (1, 1), (-1, 2), (3, 2)], int);
            let noise = Pmf::from_weights([(-2, 2), (0, 5), (2, 3)], int)?;
            AnmModel::new(p_x, f, noise)
        }
        BenchmarkModel::Ds2b { r } => {
            if !(0.5..=0.8).contains(&r) {
                return Err(AnmError::InvalidParameter(format!(
                    "DS2b needs r in [0.5, 0.8], got {r}"
                )));
            }
            let c = ValueDomain::Cyclic(4);
            let p_x = Pmf::from_weights([(0, 6), (1, 1), (2, 1), (3, 2)], c)?;
            let f = FunctionTable::new((0..4).map(|x| (x, x)), c);
            let a = r / 2.0;
            let b = 0.5 - r / 2.0;
            let noise = categorical(&[(0, a), (1, a), (2, b), (3, b)], c)?;
            AnmModel::new(p_x, f, noise)
        }
        BenchmarkModel::Ds3a { noise, i } => {
            if !(3..=19).contains(&i) || i % 2 == 0 {
                return Err(AnmError::InvalidParameter(format!(
                    "DS3a needs odd i in 3..=19, got {i}"
                )));
            }
            let h = (i as i64 - 1) / 2;
            let p_x = Pmf::from_weights((-h..=h).map(|x| (x, 1)), int)?;
            // round half away from zero; x² is even or odd so x²/2 is exact or .5
            let f = FunctionTable::new((-h..=h).map(|x| (x, (x * x + 1) / 2)), int);
            let noise = match noise {
                Ds3aNoise::N1 => Pmf::from_weights([(-2, 5), (-1, 30), (0, 30), (1, 30), (2, 5)], int)?,
                Ds3aNoise::N2 => {
                    Pmf::from_weights([(-3, 5), (-2, 18), (-1, 18), (0, 18), (1, 18), (2, 18), (3, 5)], int)?
                }
            };
            AnmModel::new(p_x, f, noise)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SuiteId {
    Ds1a,
    Ds1b { m: u32, mt: u32 },
    Ds2a { r: f64 },
    Ds2b { r: f64 },
    Ds3a { noise: Ds3aNoise, i: u32 },
    Ds3b { m: u32, mt: u32 },
}

impl fmt::Display for SuiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SuiteId::Ds1a => write!(f, "ds1a"),
            SuiteId::Ds1b { m, mt } => write!(f, "ds1b:{m}:{mt}"),
            SuiteId::Ds2a { r } => write!(f, "ds2a:{r}"),
            SuiteId::Ds2b { r } => write!(f, "ds2b:{r}"),
            SuiteId::Ds3a { noise, i } => {
                let n = match noise {
                    Ds3aNoise::N1 => "n1",
                    Ds3aNoise::N2 => "n2",
                };
                write!(f, "ds3a:{n}:{i}")
            }
            SuiteId::Ds3b { m, mt } => write!(f, "ds3b:{m}:{mt}"),
        }
    }
}

impl FromStr for SuiteId {
    type Err = AnmError;

    /// `ds1a`, `ds1b:M:MT`, `ds2a:R`, `ds2b:R`, `ds3a:n1|n2:I`, `ds3b:M:MT`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || AnmError::Parse(format!("unknown suite {s:?}"));
        let lower = s.trim().to_ascii_lowercase();
        let parts: Vec<&str> = lower.split(':').collect();
        let num = |t: &str| t.parse::<u32>().map_err(|_| bad());
        let real = |t: &str| t.parse::<f64>().map_err(|_| bad());
        match parts.as_slice() {
            ["ds1a"] => Ok(SuiteId::Ds1a),
            ["ds1b", m, mt] => Ok(SuiteId::Ds1b {
                m: num(m)?,
                mt: num(mt)?,
            }),
            ["ds3b", m, mt] => Ok(SuiteId::Ds3b {
                m: num(m)?,
                mt: num(mt)?,
            }),
            ["ds2a", r] => Ok(SuiteId::Ds2a { r: real(r)? }),
            ["ds2b", r] => Ok(SuiteId::Ds2b { r: real(r)? }),
            ["ds3a", n, i] => {
                let noise = match *n {
                    "n1" => Ds3aNoise::N1,
                    "n2" => Ds3aNoise::N2,
                    _ => return Err(bad()),
                };
                Ok(SuiteId::Ds3a { noise, i: num(i)? })
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for SuiteId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SuiteId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub suite: SuiteId,
    pub n_models: usize,
    pub n_samples: usize,
    pub alpha: f64,
    pub seed: u64,
    #[serde(default)]
    pub regression: RegressionConfig,
}

impl SuiteSpec {
    pub fn new(suite: SuiteId, n_models: usize, n_samples: usize, seed: u64) -> Self {
        SuiteSpec {
            suite,
            n_models,
            n_samples,
            alpha: 0.05,
            seed,
            regression: RegressionConfig::default(),
        }
    }

    /// Model `k` of the suite (the fixed model for DS2a/2b/3a).
    pub fn model(&self, k: usize) -> Result<GeneratedModel> {
        let seed = split(split(self.seed, k as u64), 0);
        let fixed = |id| -> Result<GeneratedModel> {
            Ok(GeneratedModel {
                model: benchmark_model(id)?,
                regressor: RegressorKind::Fixed,
                law: None,
            })
        };
        match self.suite {
            SuiteId::Ds1a => random_model(ModelFamily::Integer1a, seed),
            SuiteId::Ds1b { m, mt } => random_model(ModelFamily::Cyclic1b { m, mt }, seed),
            SuiteId::Ds3b { m, mt } => random_model(ModelFamily::Support3b { m, mt }, seed),
            SuiteId::Ds2a { r } => fixed(BenchmarkModel::Ds2a { r }),
            SuiteId::Ds2b { r } => fixed(BenchmarkModel::Ds2b { r }),
            SuiteId::Ds3a { noise, i } => fixed(BenchmarkModel::Ds3a { noise, i }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_models == 0 || self.n_samples == 0 {
            return Err(AnmError::InvalidParameter(
                "n_models and n_samples must be positive".into(),
            ));
        }
        self.regression.with_alpha(self.alpha).validate()?;
        // fixed models check their own parameters
        self.model(0).map(|_| ())
    }
}

/// Population-level reversibility of a generated model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reversibility {
    Identifiable,
    ConstantFunction,
    UniformNoise,
    AffineBijection,
    /// Reversible through a disjoint decomposition, e.g. non-overlapping
    /// noise with distinct function values.
    Decomposition,
    /// Reversible with no simpler explanation.
    Other,
    /// The exact check was out of reach.
    Unknown,
}

impl Reversibility {
    pub fn is_reversible(self) -> bool {
        !matches!(self, Reversibility::Identifiable | Reversibility::Unknown)
    }
}

/// Classifies a model with the exact examples first, then the decomposition
/// (integer) or the exhaustive backward search (cyclic).
pub fn classify_reversibility(model: &AnmModel) -> Reversibility {
    let exact = near_examples(model, 0.0);
    if let Some(k) = exact.first() {
        return match k {
            ExampleKind::ConstantFunction => Reversibility::ConstantFunction,
            ExampleKind::UniformNoise => Reversibility::UniformNoise,
            ExampleKind::AffineBijection => Reversibility::AffineBijection,
        };
    }
    if !model.x_domain().is_cyclic() && !model.y_domain().is_cyclic() {
        return match level_set_decomposition(model) {
            Ok(Some(_)) => Reversibility::Decomposition,
            Ok(None) => Reversibility::Identifiable,
            Err(_) => Reversibility::Unknown,
        };
    }
    match backward_search(model) {
        Ok(Some(_)) => Reversibility::Other,
        Ok(None) => Reversibility::Identifiable,
        Err(_) => Reversibility::Unknown,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub index: usize,
    pub model_seed: u64,
    pub regressor: RegressorKind,
    pub reversibility: Reversibility,
    /// Example families the model is within [`NEAR_EXAMPLE_TOL`] of.
    pub near_examples: Vec<ExampleKind>,
    pub outcome: Outcome,
    pub p_forward: f64,
    pub p_backward: f64,
    pub dm_forward: u64,
    pub dm_backward: u64,
    /// The forward fit equals the true f up to an additive constant on the
    /// observed x values.
    pub f_recovered: bool,
    pub model: ModelFixture,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub correct: usize,
    pub wrong: usize,
    pub both_possible: usize,
    pub bad_fit: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeProportions {
    pub correct: f64,
    pub wrong: f64,
    pub both_possible: f64,
    pub bad_fit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub spec: SuiteSpec,
    pub counts: OutcomeCounts,
    pub proportions: OutcomeProportions,
    pub reversible_models: usize,
    pub records: Vec<ModelRecord>,
}

fn recovered(truth: &FunctionTable, fit: &FunctionTable) -> bool {
    let d = truth.codomain();
    let mut diffs = fit.iter().map(|(x, y)| truth.get(x).map(|t| d.sub(y, t)));
    match diffs.next() {
        Some(Some(first)) => diffs.all(|v| v == Some(first)),
        _ => false,
    }
}

fn run_one(spec: &SuiteSpec, k: usize) -> Result<ModelRecord> {
    let model_seed = split(spec.seed, k as u64);
    let generated = spec.model(k)?;
    let model = &generated.model;
    let sample = sample_model(model, spec.n_samples, split(model_seed, 1))?;
    let cfg = spec.regression.with_alpha(spec.alpha).with_seed(split(model_seed, 2));
    let v = infer_direction(&sample, &cfg)?;
    Ok(ModelRecord {
        index: k,
        model_seed,
        regressor: generated.regressor,
        reversibility: classify_reversibility(model),
        near_examples: near_examples(model, NEAR_EXAMPLE_TOL),
        outcome: v.outcome,
        p_forward: v.forward.p_value,
        p_backward: v.backward.p_value,
        dm_forward: v.forward.dm_evaluations,
        dm_backward: v.backward.dm_evaluations,
        f_recovered: recovered(&model.f, &v.forward.f),
        model: ModelFixture::from_model(model),
    })
}

/// Runs every model of the suite in parallel; records come back in index
/// order so the summary does not depend on scheduling.
pub fn run_suite(spec: &SuiteSpec) -> Result<ExperimentSummary> {
    spec.validate()?;
    let records = (0..spec.n_models)
        .into_par_iter()
        .map(|k| run_one(spec, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(spec.clone(), records))
}

pub fn summarize(spec: SuiteSpec, records: Vec<ModelRecord>) -> ExperimentSummary {
    let mut counts = OutcomeCounts::default();
    for r in &records {
        match r.outcome {
            Outcome::XcausesY => counts.correct += 1,
            Outcome::YcausesX => counts.wrong += 1,
            Outcome::BothPossible => counts.both_possible += 1,
            Outcome::BadFit => counts.bad_fit += 1,
        }
    }
    let n = records.len().max(1) as f64;
    let proportions = OutcomeProportions {
        correct: counts.correct as f64 / n,
        wrong: counts.wrong as f64 / n,
        both_possible: counts.both_possible as f64 / n,
        bad_fit: counts.bad_fit as f64 / n,
    };
    let reversible_models = records.iter().filter(|r| r.reversibility.is_reversible()).count();
    ExperimentSummary {
        spec,
        counts,
        proportions,
        reversible_models,
        records,
    }
}

pub const RECORD_CSV_HEADER: &str =
    "suite,index,model_seed,regressor,reversibility,outcome,p_forward,p_backward,dm_forward,dm_backward,f_recovered";

impl ExperimentSummary {
    /// One line per model, columns as in [`RECORD_CSV_HEADER`].
    pub fn records_csv(&self) -> String {
        let mut out = String::from(RECORD_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{:?},{:?},{},{},{},{},{},{}\n",
                self.spec.suite,
                r.index,
                r.model_seed,
                r.regressor,
                r.reversibility,
                r.outcome,
                r.p_forward,
                r.p_backward,
                r.dm_forward,
                r.dm_backward,
                r.f_recovered
            ));
        }
        out
    }
}
