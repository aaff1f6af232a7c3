//! Value domains, paired samples, exact probability tables and residuals.
//!
//! All probability objects here store integer weights with an implicit
//! denominator (their sum). Empirical tables hold raw counts; model pmfs hold
//! weights on a fixed grid. Floats appear only through the `mass` accessors.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AnmError, Result};

/// Where the values of one variable live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ValueDomain {
    /// Values and addition in the integers.
    Integer,
    /// Values in `0..modulus`, addition modulo `modulus`.
    Cyclic(u32),
}

impl ValueDomain {
    pub fn cyclic(modulus: u32) -> Result<Self> {
        if modulus < 2 {
            return Err(AnmError::InvalidDomain(format!(
                "cyclic modulus must be at least 2, got {modulus}"
            )));
        }
        Ok(ValueDomain::Cyclic(modulus))
    }

    pub fn modulus(self) -> Option<u32> {
        match self {
            ValueDomain::Integer => None,
            ValueDomain::Cyclic(m) => Some(m),
        }
    }

    pub fn is_cyclic(self) -> bool {
        matches!(self, ValueDomain::Cyclic(_))
    }

    /// Maps a raw integer onto the canonical representative of the domain.
    #[inline]
    pub fn reduce(self, v: i64) -> i64 {
        match self {
            ValueDomain::Integer => v,
            ValueDomain::Cyclic(m) => v.rem_euclid(m as i64),
        }
    }

    #[inline]
    pub fn add(self, a: i64, b: i64) -> i64 {
        self.reduce(a + b)
    }

    #[inline]
    pub fn sub(self, a: i64, b: i64) -> i64 {
        self.reduce(a - b)
    }

    pub fn contains(self, v: i64) -> bool {
        match self {
            ValueDomain::Integer => true,
            ValueDomain::Cyclic(m) => (0..m as i64).contains(&v),
        }
    }

    /// Signed size of an offset: identity on the integers, the representative
    /// in `(-m/2, m/2]` for cyclic domains.
    pub fn centered(self, v: i64) -> i64 {
        match self {
            ValueDomain::Integer => v,
            ValueDomain::Cyclic(m) => {
                let m = m as i64;
                let r = v.rem_euclid(m);
                if 2 * r > m {
                    r - m
                } else {
                    r
                }
            }
        }
    }

    fn validate(self) -> Result<Self> {
        match self {
            ValueDomain::Cyclic(m) => ValueDomain::cyclic(m),
            d => Ok(d),
        }
    }
}

impl fmt::Display for ValueDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueDomain::Integer => write!(f, "integer"),
            ValueDomain::Cyclic(m) => write!(f, "cyclic:{m}"),
        }
    }
}

impl FromStr for ValueDomain {
    type Err = AnmError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "integer" || s == "int" {
            return Ok(ValueDomain::Integer);
        }
        if let Some(m) = s.strip_prefix("cyclic:") {
            let m: u32 = m
                .parse()
                .map_err(|_| AnmError::InvalidDomain(format!("bad cyclic modulus in {s:?}")))?;
            return ValueDomain::cyclic(m);
        }
        Err(AnmError::InvalidDomain(format!(
            "expected `integer` or `cyclic:<m>`, got {s:?}"
        )))
    }
}

impl From<ValueDomain> for String {
    fn from(d: ValueDomain) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for ValueDomain {
    type Error = AnmError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A finite list of observed `(x, y)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedSample {
    rows: Vec<(i64, i64)>,
    x_domain: ValueDomain,
    y_domain: ValueDomain,
}

impl PairedSample {
    /// Builds a sample. Values of cyclic coordinates are reduced into
    /// `[0, m)`.
    pub fn new(rows: Vec<(i64, i64)>, x_domain: ValueDomain, y_domain: ValueDomain) -> Result<Self> {
        if rows.is_empty() {
            return Err(AnmError::EmptyInput);
        }
        let x_domain = x_domain.validate()?;
        let y_domain = y_domain.validate()?;
        let rows = rows
            .into_iter()
            .map(|(x, y)| (x_domain.reduce(x), y_domain.reduce(y)))
            .collect();
        Ok(PairedSample {
            rows,
            x_domain,
            y_domain,
        })
    }

    pub fn integer(rows: Vec<(i64, i64)>) -> Result<Self> {
        Self::new(rows, ValueDomain::Integer, ValueDomain::Integer)
    }

    pub fn rows(&self) -> &[(i64, i64)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn x_domain(&self) -> ValueDomain {
        self.x_domain
    }

    pub fn y_domain(&self) -> ValueDomain {
        self.y_domain
    }

    pub fn xs(&self) -> Vec<i64> {
        self.rows.iter().map(|r| r.0).collect()
    }

    pub fn ys(&self) -> Vec<i64> {
        self.rows.iter().map(|r| r.1).collect()
    }

    /// The same observations with the roles of X and Y exchanged.
    pub fn swapped(&self) -> PairedSample {
        PairedSample {
            rows: self.rows.iter().map(|&(x, y)| (y, x)).collect(),
            x_domain: self.y_domain,
            y_domain: self.x_domain,
        }
    }

    /// The first `n` rows in their original order.
    pub fn prefix(&self, n: usize) -> Result<PairedSample> {
        if n == 0 {
            return Err(AnmError::EmptyInput);
        }
        if n > self.rows.len() {
            return Err(AnmError::InvalidParameter(format!(
                "prefix length {n} exceeds sample size {}",
                self.rows.len()
            )));
        }
        Ok(PairedSample {
            rows: self.rows[..n].to_vec(),
            x_domain: self.x_domain,
            y_domain: self.y_domain,
        })
    }

    pub fn with_domains(&self, x_domain: ValueDomain, y_domain: ValueDomain) -> Result<PairedSample> {
        PairedSample::new(self.rows.clone(), x_domain, y_domain)
    }
}

/// Joint probability table over a finite grid, stored as counts over a total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointPmf {
    x_values: Vec<i64>,
    y_values: Vec<i64>,
    /// Row-major, `x_values.len() * y_values.len()` cells.
    counts: Vec<u64>,
    total: u64,
    x_domain: ValueDomain,
    y_domain: ValueDomain,
}

impl JointPmf {
    /// Builds a table from arbitrary nonnegative cell weights. Rows and
    /// columns without mass are dropped so supports are exact.
    pub fn from_weights(
        cells: &BTreeMap<(i64, i64), u64>,
        x_domain: ValueDomain,
        y_domain: ValueDomain,
    ) -> Result<Self> {
        let mut xs: Vec<i64> = cells.iter().filter(|(_, &w)| w > 0).map(|(k, _)| k.0).collect();
        let mut ys: Vec<i64> = cells.iter().filter(|(_, &w)| w > 0).map(|(k, _)| k.1).collect();
        xs.sort_unstable();
        xs.dedup();
        ys.sort_unstable();
        ys.dedup();
        if xs.is_empty() {
            return Err(AnmError::EmptyInput);
        }
        let mut counts = vec![0u64; xs.len() * ys.len()];
        let mut total = 0u64;
        for (&(x, y), &w) in cells {
            if w == 0 {
                continue;
            }
            let i = xs.binary_search(&x).unwrap();
            let j = ys.binary_search(&y).unwrap();
            counts[i * ys.len() + j] += w;
            total = total.checked_add(w).ok_or(AnmError::Overflow)?;
        }
        Ok(JointPmf {
            x_values: xs,
            y_values: ys,
            counts,
            total,
            x_domain,
            y_domain,
        })
    }

    pub fn x_values(&self) -> &[i64] {
        &self.x_values
    }

    pub fn y_values(&self) -> &[i64] {
        &self.y_values
    }

    pub fn x_domain(&self) -> ValueDomain {
        self.x_domain
    }

    pub fn y_domain(&self) -> ValueDomain {
        self.y_domain
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Cell weights of the row belonging to the `i`-th x value.
    pub fn row(&self, i: usize) -> &[u64] {
        let w = self.y_values.len();
        &self.counts[i * w..(i + 1) * w]
    }

    pub fn count(&self, x: i64, y: i64) -> u64 {
        match (self.x_values.binary_search(&x), self.y_values.binary_search(&y)) {
            (Ok(i), Ok(j)) => self.counts[i * self.y_values.len() + j],
            _ => 0,
        }
    }

    pub fn mass(&self, x: i64, y: i64) -> f64 {
        self.count(x, y) as f64 / self.total as f64
    }

    /// Marginal weights of X, aligned with `x_values` (houses p).
    pub fn x_marginal(&self) -> Vec<u64> {
        (0..self.x_values.len()).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Marginal weights of Y, aligned with `y_values` (houses q).
    pub fn y_marginal(&self) -> Vec<u64> {
        let w = self.y_values.len();
        let mut out = vec![0u64; w];
        for (k, &c) in self.counts.iter().enumerate() {
            out[k % w] += c;
        }
        out
    }

    /// Nonzero cells as `((x, y), weight)` in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = ((i64, i64), u64)> + '_ {
        let w = self.y_values.len();
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(move |(k, &c)| ((self.x_values[k / w], self.y_values[k % w]), c))
    }
}

/// Empirical distribution of a sample: `count(x, y) / N`.
pub fn empirical_joint(sample: &PairedSample) -> Result<JointPmf> {
    if sample.is_empty() {
        return Err(AnmError::EmptyInput);
    }
    let mut cells = BTreeMap::new();
    for &(x, y) in sample.rows() {
        *cells.entry((x, y)).or_insert(0u64) += 1;
    }
    JointPmf::from_weights(&cells, sample.x_domain(), sample.y_domain())
}

/// A pmf over integer values with integer weights. Used for regressor
/// marginals, forward noise and backward noise alike.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pmf {
    values: Vec<i64>,
    weights: Vec<u64>,
    domain: ValueDomain,
}

/// Noise distributions are plain pmfs over offsets.
pub type NoisePmf = Pmf;

impl Pmf {
    /// Collects `(value, weight)` pairs, reducing values into the domain and
    /// merging duplicates. Zero weights are dropped.
    pub fn from_weights(pairs: impl IntoIterator<Item = (i64, u64)>, domain: ValueDomain) -> Result<Self> {
        let mut acc: BTreeMap<i64, u64> = BTreeMap::new();
        for (v, w) in pairs {
            if w > 0 {
                let e = acc.entry(domain.reduce(v)).or_insert(0);
                *e = e.checked_add(w).ok_or(AnmError::Overflow)?;
            }
        }
        if acc.is_empty() {
            return Err(AnmError::EmptyInput);
        }
        Ok(Pmf {
            values: acc.keys().copied().collect(),
            weights: acc.values().copied().collect(),
            domain,
        })
    }

    /// Empirical pmf of a list of residuals.
    pub fn from_values(values: &[i64], domain: ValueDomain) -> Result<Self> {
        Pmf::from_weights(values.iter().map(|&v| (v, 1)), domain)
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn domain(&self) -> ValueDomain {
        self.domain
    }

    pub fn total(&self) -> u64 {
        self.weights.iter().sum()
    }

    pub fn support_size(&self) -> usize {
        self.values.len()
    }

    pub fn weight(&self, v: i64) -> u64 {
        match self.values.binary_search(&self.domain.reduce(v)) {
            Ok(i) => self.weights[i],
            Err(_) => 0,
        }
    }

    pub fn mass(&self, v: i64) -> f64 {
        self.weight(v) as f64 / self.total() as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.values.iter().copied().zip(self.weights.iter().copied())
    }

    /// Offset carrying the largest weight. Ties go to the smallest
    /// `|offset|` (centered for cyclic domains), then to the positive one.
    pub fn mode(&self) -> i64 {
        let d = self.domain;
        let mut best = (self.values[0], self.weights[0]);
        for (v, w) in self.iter().skip(1) {
            let (bv, bw) = best;
            let better = w > bw
                || (w == bw && {
                    let (c, bc) = (d.centered(v), d.centered(bv));
                    c.abs() < bc.abs() || (c.abs() == bc.abs() && c > bc)
                });
            if better {
                best = (v, w);
            }
        }
        best.0
    }

    /// The pmf of `V - shift`.
    pub fn shifted_down(&self, shift: i64) -> Pmf {
        Pmf::from_weights(self.iter().map(|(v, w)| (v - shift, w)), self.domain)
            .expect("shifting preserves nonempty support")
    }

    /// True when the weight at 0 is at least every other weight.
    pub fn is_canonical(&self) -> bool {
        let w0 = self.weight(0);
        self.weights.iter().all(|&w| w <= w0)
    }

    pub fn is_uniform_on(&self, n_points: usize) -> bool {
        self.values.len() == n_points && self.weights.windows(2).all(|w| w[0] == w[1])
    }
}

/// A finite map `x -> y` with a declared codomain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionTable {
    entries: BTreeMap<i64, i64>,
    codomain: ValueDomain,
}

impl FunctionTable {
    pub fn new(entries: impl IntoIterator<Item = (i64, i64)>, codomain: ValueDomain) -> Self {
        FunctionTable {
            entries: entries.into_iter().map(|(x, y)| (x, codomain.reduce(y))).collect(),
            codomain,
        }
    }

    pub fn get(&self, x: i64) -> Option<i64> {
        self.entries.get(&x).copied()
    }

    pub fn apply(&self, x: i64) -> Result<i64> {
        self.get(x).ok_or(AnmError::FunctionUndefined(x))
    }

    pub fn codomain(&self) -> ValueDomain {
        self.codomain
    }

    pub fn support(&self) -> impl Iterator<Item = i64> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.entries.iter().map(|(&x, &y)| (x, y))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `x -> f(x) + shift`, reduced into the codomain.
    pub fn shifted(&self, shift: i64) -> FunctionTable {
        FunctionTable::new(self.iter().map(|(x, y)| (x, y + shift)), self.codomain)
    }

    pub fn is_constant(&self) -> bool {
        let mut vals = self.entries.values();
        match vals.next() {
            Some(first) => vals.all(|v| v == first),
            None => true,
        }
    }
}

/// Residuals `y - f(x)` of every row, reduced modulo the Y modulus when Y is
/// cyclic.
pub fn residuals(sample: &PairedSample, f: &FunctionTable) -> Result<Vec<i64>> {
    let d = sample.y_domain();
    sample.rows().iter().map(|&(x, y)| Ok(d.sub(y, f.apply(x)?))).collect()
}

/// Shifts `f` by the residual mode so the canonical noise has its largest
/// weight at offset 0.
pub fn canonicalize(f: &FunctionTable, residual_pmf: &NoisePmf) -> (FunctionTable, NoisePmf) {
    let shift = residual_pmf.mode();
    if shift == 0 {
        return (f.clone(), residual_pmf.clone());
    }
    (f.shifted(shift), residual_pmf.shifted_down(shift))
}
