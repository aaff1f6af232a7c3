use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use discrete_anm::simulate::{classify_reversibility, SuiteId, SuiteSpec};
use discrete_anm::theory::{
    backward_search, divisibility_check, interleaved_model, level_set_decomposition, matching_examples,
    random_small_model, staircase_model, ModelFixture,
};
use discrete_anm::{
    infer_direction, pvalue_curve, AnmError, AnmModel, CandidateMode, DmTest, PairedSample, RegressionConfig,
    ValueDomain,
};

use crate::fetch::{fetch_dataset, Dataset, FetchOptions};
use crate::input::{parse_csv, CellCoding, Column, CsvOptions, ValueMap};
use crate::report::{emit_report, Artifact, Format, InferenceReport, OracleReport, TOOL_VERSION};
use crate::UsageError;

#[derive(Debug, Parser)]
#[command(
    name = "anm",
    version,
    about = "Causal direction inference for discrete data with additive noise models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit both directions on a CSV file and report the verdict.
    Infer(InferArgs),
    /// p-values of both directions on growing prefixes of a CSV file.
    Curve(CurveArgs),
    /// Run a simulation suite.
    Simulate(SimulateArgs),
    /// Exact reversibility analysis of a known model.
    Oracle(OracleArgs),
    /// Download a dataset into the local cache.
    Fetch(FetchArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Significance level of the independence tests.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Write the full result as JSON.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegressionArgs {
    #[arg(long, default_value_t = 10)]
    pub max_sweeps: usize,
    /// `full` or `top:<k>`.
    #[arg(long, default_value = "full", value_parser = parse_candidates)]
    pub candidates: CandidateMode,
    /// `asymptotic` (always χ²) or `dispatch` (Fisher Monte Carlo when
    /// Cochran's condition fails).
    #[arg(long, default_value = "asymptotic", value_parser = parse_dm_test)]
    pub dm_test: DmTest,
    /// Monte Carlo tables for the Fisher test.
    #[arg(long, default_value_t = 10_000)]
    pub n_perm: usize,
}

impl RegressionArgs {
    pub fn config(&self, common: &CommonArgs) -> Result<RegressionConfig> {
        let cfg = RegressionConfig {
            max_sweeps: self.max_sweeps,
            candidates: self.candidates,
            dm_test: self.dm_test,
            n_perm: self.n_perm,
            ..RegressionConfig::default()
        }
        .with_alpha(common.alpha)
        .with_seed(common.seed);
        cfg.validate().map_err(UsageError::from_anm)?;
        Ok(cfg)
    }
}

fn parse_candidates(s: &str) -> Result<CandidateMode, String> {
    if s == "full" {
        return Ok(CandidateMode::FullRange);
    }
    match s.strip_prefix("top:").map(str::parse::<usize>) {
        Some(Ok(k)) if k > 0 => Ok(CandidateMode::TopK(k)),
        _ => Err(format!("expected `full` or `top:<k>` with k ≥ 1, got {s:?}")),
    }
}

fn parse_dm_test(s: &str) -> Result<DmTest, String> {
    match s {
        "asymptotic" => Ok(DmTest::Asymptotic),
        "dispatch" => Ok(DmTest::Dispatch),
        _ => Err(format!("expected `asymptotic` or `dispatch`, got {s:?}")),
    }
}

fn parse_domain(s: &str) -> Result<ValueDomain, String> {
    s.parse().map_err(|e: AnmError| e.to_string())
}

/// Which measurement the abalone preset pairs with sex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbaloneTarget {
    Length,
    Diameter,
    Height,
}

impl AbaloneTarget {
    pub const ALL: [AbaloneTarget; 3] = [AbaloneTarget::Length, AbaloneTarget::Diameter, AbaloneTarget::Height];

    pub fn column(self) -> usize {
        match self {
            AbaloneTarget::Length => 1,
            AbaloneTarget::Diameter => 2,
            AbaloneTarget::Height => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AbaloneTarget::Length => "length",
            AbaloneTarget::Diameter => "diameter",
            AbaloneTarget::Height => "height",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Abalone(AbaloneTarget),
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let target = match s {
            "abalone:length" => AbaloneTarget::Length,
            "abalone:diameter" => AbaloneTarget::Diameter,
            "abalone:height" => AbaloneTarget::Height,
            _ => return Err(format!("unknown preset {s:?} (abalone:length|diameter|height)")),
        };
        Ok(Preset::Abalone(target))
    }
}

/// Measurements in the abalone file are recorded in steps of 0.005.
pub const ABALONE_STEP: f64 = 0.005;
pub const ABALONE_PREFIX: usize = 1000;

/// Sex coded infant 0, male 1, female 2 as X; the measurement quantized to
/// its recording step as Y; first 1000 rows.
pub fn abalone_options(target: AbaloneTarget, x_domain: ValueDomain) -> CsvOptions {
    CsvOptions {
        x_col: Column::Index(0),
        y_col: Column::Index(target.column()),
        header: false,
        x_domain,
        x_coding: CellCoding::Map("I=0,M=1,F=2".parse().expect("static map")),
        y_coding: CellCoding::Quantize { step: ABALONE_STEP },
        limit: Some(ABALONE_PREFIX),
        ..CsvOptions::default()
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input CSV file. With a preset, a local copy of the dataset.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// `abalone:length`, `abalone:diameter` or `abalone:height`.
    #[arg(long)]
    pub preset: Option<Preset>,
    /// X column, by zero-based index or header name.
    #[arg(long, default_value = "0")]
    pub x_col: Column,
    #[arg(long, default_value = "1")]
    pub y_col: Column,
    /// The first line is a header.
    #[arg(long)]
    pub header: bool,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// `integer` or `cyclic:<m>`.
    #[arg(long, value_parser = parse_domain)]
    pub x_domain: Option<ValueDomain>,
    #[arg(long, value_parser = parse_domain)]
    pub y_domain: Option<ValueDomain>,
    /// Quantize decimal X cells: value / step, rounded.
    #[arg(long)]
    pub x_step: Option<f64>,
    #[arg(long)]
    pub y_step: Option<f64>,
    /// Categorical X coding, e.g. `I=0,M=1,F=2`.
    #[arg(long)]
    pub x_map: Option<ValueMap>,
    #[arg(long)]
    pub y_map: Option<ValueMap>,
    /// Use only the first N data rows.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Cache directory for preset downloads.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Download URL for preset data.
    #[arg(long)]
    pub url: Option<String>,
}

/// A named sample ready for inference.
pub struct LoadedSample {
    pub name: String,
    pub sample: PairedSample,
}

fn coding(step: Option<f64>, map: &Option<ValueMap>, axis: &str) -> Result<CellCoding> {
    match (step, map) {
        (Some(_), Some(_)) => Err(UsageError::new(format!("--{axis}-step and --{axis}-map are exclusive")).into()),
        (Some(s), None) if !(s > 0.0 && s.is_finite()) => {
            Err(UsageError::new(format!("--{axis}-step must be positive")).into())
        }
        (Some(step), None) => Ok(CellCoding::Quantize { step }),
        (None, Some(m)) => Ok(CellCoding::Map(m.clone())),
        (None, None) => Ok(CellCoding::Integer),
    }
}

impl InputArgs {
    /// One sample, or for the abalone preset without an explicit X domain
    /// one integer and one 3-cyclic run.
    pub fn load(&self) -> Result<Vec<LoadedSample>> {
        let Some(preset) = self.preset else {
            let Some(path) = &self.csv else {
                return Err(UsageError::new("either --csv or --preset is required").into());
            };
            if !self.delimiter.is_ascii() {
                return Err(UsageError::new("--delimiter must be an ASCII character").into());
            }
            let opts = CsvOptions {
                x_col: self.x_col.clone(),
                y_col: self.y_col.clone(),
                header: self.header,
                delimiter: self.delimiter as u8,
                x_domain: self.x_domain.unwrap_or(ValueDomain::Integer),
                y_domain: self.y_domain.unwrap_or(ValueDomain::Integer),
                x_coding: coding(self.x_step, &self.x_map, "x")?,
                y_coding: coding(self.y_step, &self.y_map, "y")?,
                limit: self.limit,
            };
            let sample = parse_csv(path, &opts)?;
            return Ok(vec![LoadedSample {
                name: path.display().to_string(),
                sample,
            }]);
        };

        let Preset::Abalone(target) = preset;
        let path = match &self.csv {
            Some(p) => p.clone(),
            None => {
                let opts = FetchOptions::resolve(Dataset::Abalone, self.cache_dir.clone(), self.url.clone());
                fetch_dataset(Dataset::Abalone, &opts)?.path
            }
        };
        let domains = match self.x_domain {
            Some(d) => vec![d],
            None => vec![ValueDomain::Integer, ValueDomain::Cyclic(3)],
        };
        domains
            .into_iter()
            .map(|d| {
                let mut opts = abalone_options(target, d);
                if let Some(l) = self.limit {
                    opts.limit = Some(l);
                }
                Ok(LoadedSample {
                    name: format!("abalone:{} x={d}", target.name()),
                    sample: parse_csv(&path, &opts)?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub regression: RegressionArgs,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub regression: RegressionArgs,
    /// Comma-separated prefix lengths. Defaults to multiples of --step.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub step: usize,
    /// Write the curve as CSV.
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub regression: RegressionArgs,
    /// `ds1a`, `ds1b:<m>:<m̃>`, `ds2a:<r>`, `ds2b:<r>`, `ds3a:<n1|n2>:<i>`
    /// or `ds3b:<m>:<m̃>`.
    #[arg(long)]
    pub suite: SuiteId,
    #[arg(long, default_value_t = 200)]
    pub models: usize,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Write one CSV row per model.
    #[arg(long)]
    pub records_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Model fixture JSON file.
    #[arg(long, conflicts_with = "builtin")]
    pub model: Option<PathBuf>,
    /// `staircase`, `interleaved`, `random-small`, or a suite id whose
    /// model 0 is analysed (random suites draw it from --seed).
    #[arg(long)]
    pub builtin: Option<String>,
    /// Also write the analysed model as a fixture file.
    #[arg(long)]
    pub fixture_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(default_value = "abalone")]
    pub dataset: Dataset,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub url: Option<String>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(UsageError::new(format!("--alpha must lie in (0, 1), got {alpha}")).into());
    }
    Ok(())
}

fn write_json(path: &Option<PathBuf>, artifact: Artifact<'_>) -> Result<()> {
    match path {
        Some(p) => emit_report(&artifact, p, Format::Json),
        None => Ok(()),
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Infer(a) => infer(a, out),
        Command::Curve(a) => curve(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Oracle(a) => oracle(a, out),
        Command::Fetch(a) => fetch(a, out),
    }
}

fn infer(a: InferArgs, out: &mut dyn Write) -> Result<()> {
    check_alpha(a.common.alpha)?;
    let cfg = a.regression.config(&a.common)?;
    let mut reports = Vec::new();
    for loaded in a.input.load()? {
        let verdict = infer_direction(&loaded.sample, &cfg)?;
        reports.push(InferenceReport::new(loaded.name, &loaded.sample, &verdict, &cfg));
    }
    for r in &reports {
        writeln!(
            out,
            "{}: n={} verdict={} p_forward={:e} p_backward={:e}",
            r.dataset, r.n_samples, r.verdict, r.forward.p_value, r.backward.p_value
        )?;
    }
    write_json(&a.common.json_out, Artifact::Reports(&reports))
}

fn curve(a: CurveArgs, out: &mut dyn Write) -> Result<()> {
    check_alpha(a.common.alpha)?;
    let cfg = a.regression.config(&a.common)?;
    let loaded = a.input.load()?;
    if loaded.len() != 1 {
        return Err(UsageError::new("curve needs a single sample; pass --x-domain with a preset").into());
    }
    let sample = &loaded[0].sample;
    let grid = if a.grid.is_empty() {
        if a.step == 0 {
            return Err(UsageError::new("--step must be positive").into());
        }
        (1..=sample.len() / a.step).map(|k| k * a.step).collect()
    } else {
        a.grid.clone()
    };
    if grid.is_empty() {
        return Err(UsageError::new(format!("empty grid for a sample of {} rows", sample.len())).into());
    }
    let points = pvalue_curve(sample, &grid, &cfg).map_err(UsageError::from_anm)?;
    let csv = crate::report::curve_csv(&points);
    out.write_all(csv.as_bytes())?;
    if let Some(p) = &a.csv_out {
        emit_report(&Artifact::Curve(&points), p, Format::Csv)?;
    }
    write_json(&a.common.json_out, Artifact::Curve(&points))
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    check_alpha(a.common.alpha)?;
    let regression = a.regression.config(&a.common)?;
    let spec = SuiteSpec {
        alpha: a.common.alpha,
        regression,
        ..SuiteSpec::new(a.suite, a.models, a.samples, a.common.seed)
    };
    spec.validate().map_err(UsageError::from_anm)?;
    let summary = discrete_anm::simulate::run_suite(&spec)?;
    let c = summary.counts;
    let p = summary.proportions;
    writeln!(
        out,
        "suite {} ({} models x {} samples, alpha {})",
        spec.suite, spec.n_models, spec.n_samples, spec.alpha
    )?;
    writeln!(out, "correct       {:>5}  {:.3}", c.correct, p.correct)?;
    writeln!(out, "wrong         {:>5}  {:.3}", c.wrong, p.wrong)?;
    writeln!(out, "both possible {:>5}  {:.3}", c.both_possible, p.both_possible)?;
    writeln!(out, "bad fit       {:>5}  {:.3}", c.bad_fit, p.bad_fit)?;
    writeln!(out, "reversible models: {}", summary.reversible_models)?;
    if let Some(path) = &a.records_out {
        emit_report(&Artifact::Summary(&summary), path, Format::Csv)?;
    }
    write_json(&a.common.json_out, Artifact::Summary(&summary))
}

fn builtin_model(name: &str, seed: u64) -> Result<AnmModel> {
    Ok(match name {
        "staircase" => staircase_model(),
        "interleaved" => interleaved_model(),
        "random-small" => random_small_model(seed),
        other => {
            let suite: SuiteId = other.parse().map_err(|e: AnmError| {
                UsageError::new(format!(
                    "unknown builtin {other:?}: {e} (staircase, interleaved, random-small or a suite id)"
                ))
            })?;
            SuiteSpec::new(suite, 1, 1, seed)
                .model(0)
                .map_err(UsageError::from_anm)?
                .model
        }
    })
}

fn load_fixture(path: &Path) -> Result<AnmModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    AnmModel::from_fixture_json(&text).with_context(|| format!("invalid model fixture {}", path.display()))
}

fn oracle(a: OracleArgs, out: &mut dyn Write) -> Result<()> {
    check_alpha(a.common.alpha)?;
    let (source, model) = match (&a.model, &a.builtin) {
        (Some(p), _) => (p.display().to_string(), load_fixture(p)?),
        (None, Some(b)) => (b.clone(), builtin_model(b, a.common.seed)?),
        (None, None) => return Err(UsageError::new("either --model or --builtin is required").into()),
    };
    let integer = !model.x_domain().is_cyclic() && !model.y_domain().is_cyclic();
    let decomposition = if integer {
        level_set_decomposition(&model)?
    } else {
        None
    };
    let (backward_model, completed) = match backward_search(&model) {
        Ok(b) => (b, true),
        Err(AnmError::EnumerationTooLarge(_)) => (None, false),
        Err(e) => return Err(e.into()),
    };
    let report = OracleReport {
        source,
        model: ModelFixture::from_model(&model),
        reversibility: classify_reversibility(&model),
        matching_examples: matching_examples(&model),
        decomposition,
        backward_model,
        backward_search_completed: completed,
        divisibility_ok: divisibility_check(&model),
        tool_version: TOOL_VERSION.to_string(),
    };
    writeln!(out, "model: {}", report.source)?;
    writeln!(out, "reversibility: {:?}", report.reversibility)?;
    let labels: Vec<&str> = report.matching_examples.iter().map(|k| k.label()).collect();
    writeln!(
        out,
        "matching examples: {}",
        if labels.is_empty() {
            "none".into()
        } else {
            labels.join(", ")
        }
    )?;
    if integer {
        writeln!(
            out,
            "decomposition: {}",
            if report.decomposition.is_some() {
                "found"
            } else {
                "none"
            }
        )?;
    }
    let backward = match (&report.backward_model, completed) {
        (Some(_), _) => "found",
        (None, true) => "none",
        (None, false) => "not attempted (search space too large)",
    };
    writeln!(out, "backward model: {backward}")?;
    writeln!(
        out,
        "divisibility condition: {}",
        if report.divisibility_ok { "holds" } else { "fails" }
    )?;
    if let Some(p) = &a.fixture_out {
        std::fs::write(p, model.to_fixture_json()).with_context(|| format!("cannot write {}", p.display()))?;
    }
    write_json(&a.common.json_out, Artifact::Oracle(&report))
}

fn fetch(a: FetchArgs, out: &mut dyn Write) -> Result<()> {
    check_alpha(a.common.alpha)?;
    let opts = FetchOptions::resolve(a.dataset, a.cache_dir, a.url);
    let fetched = fetch_dataset(a.dataset, &opts)?;
    writeln!(out, "{}", fetched.path.display())?;
    if let Some(p) = &a.common.json_out {
        let text = serde_json::to_string_pretty(&fetched)? + "\n";
        std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}
