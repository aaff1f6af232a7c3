//! CSV ingestion into a [`PairedSample`].

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use discrete_anm::{PairedSample, ValueDomain};

/// A column chosen by zero-based index or by header name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl FromStr for Column {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.to_string()),
        })
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Index(i) => write!(f, "{i}"),
            Column::Name(n) => f.write_str(n),
        }
    }
}

/// Categorical coding such as `I=0,M=1,F=2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueMap(pub BTreeMap<String, i64>);

impl FromStr for ValueMap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut map = BTreeMap::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected KEY=INT, got {part:?}"))?;
            let v: i64 = v.trim().parse().map_err(|_| format!("bad integer in {part:?}"))?;
            if map.insert(k.trim().to_string(), v).is_some() {
                return Err(format!("duplicate key {:?}", k.trim()));
            }
        }
        if map.is_empty() {
            return Err("empty value map".into());
        }
        Ok(ValueMap(map))
    }
}

/// How one column's cells become integers.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum CellCoding {
    /// Cells are integers.
    #[default]
    Integer,
    /// Decimal cells divided by `step` and rounded to the nearest integer.
    Quantize { step: f64 },
    /// Categorical cells looked up in a table.
    Map(ValueMap),
}

impl CellCoding {
    fn decode(&self, cell: &str) -> Result<i64, String> {
        let cell = cell.trim();
        match self {
            CellCoding::Integer => cell.parse().map_err(|_| format!("cannot parse {cell:?} as an integer")),
            CellCoding::Quantize { step } => {
                let v: f64 = cell.parse().map_err(|_| format!("cannot parse {cell:?} as a number"))?;
                let q = (v / step).round();
                if !q.is_finite() || q.abs() > 9.0e15 {
                    return Err(format!("{cell:?} out of range after quantization"));
                }
                Ok(q as i64)
            }
            CellCoding::Map(m) => {
                m.0.get(cell)
                    .copied()
                    .ok_or_else(|| format!("{cell:?} not in value map"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub x_col: Column,
    pub y_col: Column,
    pub header: bool,
    pub delimiter: u8,
    pub x_domain: ValueDomain,
    pub y_domain: ValueDomain,
    pub x_coding: CellCoding,
    pub y_coding: CellCoding,
    /// Keep only the first `limit` data rows.
    pub limit: Option<usize>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            x_col: Column::Index(0),
            y_col: Column::Index(1),
            header: false,
            delimiter: b',',
            x_domain: ValueDomain::Integer,
            y_domain: ValueDomain::Integer,
            x_coding: CellCoding::Integer,
            y_coding: CellCoding::Integer,
            limit: None,
        }
    }
}

pub fn parse_csv(path: &Path, opts: &CsvOptions) -> Result<PairedSample> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    parse_csv_reader(file, opts).with_context(|| format!("while reading {}", path.display()))
}

pub fn parse_csv_reader<R: Read>(reader: R, opts: &CsvOptions) -> Result<PairedSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.header)
        .delimiter(opts.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = if opts.header {
        Some(rdr.headers().context("cannot read header")?.clone())
    } else {
        None
    };
    let resolve = |c: &Column| -> Result<usize> {
        match (c, &headers) {
            (Column::Index(i), _) => Ok(*i),
            (Column::Name(n), Some(h)) => h
                .iter()
                .position(|f| f == n)
                .ok_or_else(|| anyhow!("missing column {n:?} in header")),
            (Column::Name(n), None) => bail!("column {n:?} given by name but the file has no header"),
        }
    };
    let xi = resolve(&opts.x_col)?;
    let yi = resolve(&opts.y_col)?;

    let mut rows = Vec::new();
    for rec in rdr.records() {
        if opts.limit.is_some_and(|l| rows.len() >= l) {
            break;
        }
        let rec = rec.context("malformed CSV")?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let cell = |i: usize, coding: &CellCoding, name: &Column| -> Result<i64> {
            let raw = rec.get(i).ok_or_else(|| anyhow!("row {line}: missing column {name}"))?;
            coding
                .decode(raw)
                .map_err(|e| anyhow!("row {line}, column {name}: {e}"))
        };
        let x = cell(xi, &opts.x_coding, &opts.x_col)?;
        let y = cell(yi, &opts.y_coding, &opts.y_col)?;
        rows.push((x, y));
    }
    if rows.is_empty() {
        bail!("no data rows");
    }
    Ok(PairedSample::new(rows, opts.x_domain, opts.y_domain)?)
}
