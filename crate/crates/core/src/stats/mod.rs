//! Contingency tables and independence tests.
//!
//! Pearson's χ² test is the default. When Cochran's condition fails the
//! test switches to a conditional Monte Carlo version of Fisher's exact test
//! with the χ² statistic as discrepancy. The dependence measure used as the
//! regression loss is built on top of these p-values.

mod special;

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AnmError, Result};
use crate::seed;

pub use special::{chi_square_sf, gamma_q, ln_gamma};

/// Stream tag for Monte Carlo test seeds.
const FISHER_STREAM: u64 = 0x4649_5348_4552_4D43;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    row_labels: Vec<i64>,
    col_labels: Vec<i64>,
    /// Row-major counts.
    counts: Vec<u64>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    total: u64,
}

impl ContingencyTable {
    /// Builds a table from a dense count matrix, dropping empty rows and
    /// columns.
    pub fn from_counts(row_labels: &[i64], col_labels: &[i64], counts: &[u64]) -> Result<Self> {
        let (r, c) = (row_labels.len(), col_labels.len());
        if counts.len() != r * c {
            return Err(AnmError::LengthMismatch {
                left: counts.len(),
                right: r * c,
            });
        }
        let row_tot: Vec<u64> = (0..r).map(|i| counts[i * c..(i + 1) * c].iter().sum()).collect();
        let col_tot: Vec<u64> = (0..c).map(|j| (0..r).map(|i| counts[i * c + j]).sum()).collect();
        let rows: Vec<usize> = (0..r).filter(|&i| row_tot[i] > 0).collect();
        let cols: Vec<usize> = (0..c).filter(|&j| col_tot[j] > 0).collect();
        if rows.is_empty() {
            return Err(AnmError::EmptyInput);
        }
        let mut dense = Vec::with_capacity(rows.len() * cols.len());
        for &i in &rows {
            for &j in &cols {
                dense.push(counts[i * c + j]);
            }
        }
        Ok(ContingencyTable {
            row_labels: rows.iter().map(|&i| row_labels[i]).collect(),
            col_labels: cols.iter().map(|&j| col_labels[j]).collect(),
            counts: dense,
            row_sums: rows.iter().map(|&i| row_tot[i]).collect(),
            col_sums: cols.iter().map(|&j| col_tot[j]).collect(),
            total: row_tot.iter().sum(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_labels.len()
    }

    pub fn row_labels(&self) -> &[i64] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[i64] {
        &self.col_labels
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n_cols() + j]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn dof(&self) -> usize {
        (self.n_rows() - 1) * (self.n_cols() - 1)
    }

    pub fn expected(&self, i: usize, j: usize) -> f64 {
        self.row_sums[i] as f64 * self.col_sums[j] as f64 / self.total as f64
    }

    pub fn transposed(&self) -> ContingencyTable {
        let (r, c) = (self.n_rows(), self.n_cols());
        let mut counts = vec![0; r * c];
        for i in 0..r {
            for j in 0..c {
                counts[j * r + i] = self.counts[i * c + j];
            }
        }
        ContingencyTable {
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
            counts,
            row_sums: self.col_sums.clone(),
            col_sums: self.row_sums.clone(),
            total: self.total,
        }
    }
}

/// Cross-tabulates two equally long label vectors.
pub fn contingency_table(u: &[i64], v: &[i64]) -> Result<ContingencyTable> {
    if u.len() != v.len() {
        return Err(AnmError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    if u.is_empty() {
        return Err(AnmError::EmptyInput);
    }
    let mut rows = u.to_vec();
    rows.sort_unstable();
    rows.dedup();
    let mut cols = v.to_vec();
    cols.sort_unstable();
    cols.dedup();
    let mut counts = vec![0u64; rows.len() * cols.len()];
    for (a, b) in u.iter().zip(v) {
        let i = rows.binary_search(a).unwrap();
        let j = cols.binary_search(b).unwrap();
        counts[i * cols.len() + j] += 1;
    }
    ContingencyTable::from_counts(&rows, &cols, &counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestMethod {
    ChiSquare,
    FisherMc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub method: TestMethod,
}

/// Settings shared by the independence test and the dependence measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    /// p-values below this count as underflowed.
    pub p_min: f64,
    /// Monte Carlo tables drawn when Cochran's condition fails.
    pub n_perm: usize,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            p_min: 1e-12,
            n_perm: 10_000,
            seed: 0,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_perm < 1000 {
            return Err(AnmError::InvalidParameter(format!(
                "n_perm must be at least 1000, got {}",
                self.n_perm
            )));
        }
        if !(self.p_min > 0.0 && self.p_min < 1.0) {
            return Err(AnmError::InvalidParameter(format!(
                "p_min must lie in (0, 1), got {}",
                self.p_min
            )));
        }
        Ok(())
    }

    fn monte_carlo_seed(&self) -> u64 {
        seed::mix(self.seed ^ FISHER_STREAM)
    }
}

/// Pearson's χ² test of independence.
pub fn chi_square_test(t: &ContingencyTable) -> TestResult {
    let dof = t.dof();
    if dof == 0 {
        return TestResult {
            statistic: 0.0,
            dof,
            p_value: 1.0,
            method: TestMethod::ChiSquare,
        };
    }
    let mut stat = 0.0;
    for i in 0..t.n_rows() {
        for j in 0..t.n_cols() {
            let e = t.expected(i, j);
            if e > 0.0 {
                let d = t.count(i, j) as f64 - e;
                stat += d * d / e;
            }
        }
    }
    TestResult {
        statistic: stat,
        dof,
        p_value: chi_square_sf(stat, dof),
        method: TestMethod::ChiSquare,
    }
}

/// Cochran's condition: strictly more than 80% of the expected counts
/// exceed 5.
pub fn cochran_ok(t: &ContingencyTable) -> bool {
    let cells = t.n_rows() * t.n_cols();
    let mut large = 0usize;
    for i in 0..t.n_rows() {
        for j in 0..t.n_cols() {
            if t.expected(i, j) > 5.0 {
                large += 1;
            }
        }
    }
    // large / cells > 0.8 without rounding
    5 * large > 4 * cells
}

/// `N * Σ o² / (r c) - N`, the form used for Monte Carlo comparisons.
fn pearson_from_counts(counts: &[u64], inv_rc: &[f64], total: f64) -> f64 {
    let s: f64 = counts
        .iter()
        .zip(inv_rc)
        .map(|(&o, &w)| {
            let o = o as f64;
            o * o * w
        })
        .sum();
    total * s - total
}

/// Conditional Monte Carlo version of Fisher's exact test for r×c tables.
///
/// Draws `n_perm` tables with the observed margins by shuffling the column
/// labels of the expanded observations, and reports
/// `(1 + #{X²_perm ≥ X²_obs}) / (n_perm + 1)`.
pub fn fisher_exact_mc(t: &ContingencyTable, n_perm: usize, seed: u64) -> TestResult {
    let dof = t.dof();
    if dof == 0 {
        return TestResult {
            statistic: 0.0,
            dof,
            p_value: 1.0,
            method: TestMethod::FisherMc,
        };
    }
    let (r, c) = (t.n_rows(), t.n_cols());
    let n = t.total as f64;
    let inv_rc: Vec<f64> = (0..r * c)
        .map(|k| 1.0 / (t.row_sums[k / c] as f64 * t.col_sums[k % c] as f64))
        .collect();
    let observed = pearson_from_counts(&t.counts, &inv_rc, n);
    let threshold = observed - 1e-9 * observed.abs().max(1.0);

    // Column label of every observation; rows occupy consecutive blocks.
    let mut labels: Vec<u32> = Vec::with_capacity(t.total as usize);
    for j in 0..c {
        labels.extend(std::iter::repeat_n(j as u32, t.col_sums[j] as usize));
    }
    let mut bounds = Vec::with_capacity(r + 1);
    bounds.push(0usize);
    for &rs in &t.row_sums {
        bounds.push(bounds.last().unwrap() + rs as usize);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; r * c];
    let mut exceed = 0usize;
    for _ in 0..n_perm {
        labels.shuffle(&mut rng);
        counts.iter_mut().for_each(|x| *x = 0);
        for i in 0..r {
            let row = &mut counts[i * c..(i + 1) * c];
            for &l in &labels[bounds[i]..bounds[i + 1]] {
                row[l as usize] += 1;
            }
        }
        if pearson_from_counts(&counts, &inv_rc, n) >= threshold {
            exceed += 1;
        }
    }
    TestResult {
        statistic: chi_square_test(t).statistic,
        dof,
        p_value: (1 + exceed) as f64 / (n_perm + 1) as f64,
        method: TestMethod::FisherMc,
    }
}

/// Tests an already tabulated pair: χ² under Cochran's condition, the Monte
/// Carlo exact test otherwise.
pub fn test_table(t: &ContingencyTable, cfg: &TestConfig) -> TestResult {
    if t.dof() == 0 || cochran_ok(t) {
        chi_square_test(t)
    } else {
        fisher_exact_mc(t, cfg.n_perm, cfg.monte_carlo_seed())
    }
}

pub fn independence_test(u: &[i64], v: &[i64], cfg: &TestConfig) -> Result<TestResult> {
    let t = contingency_table(u, v)?;
    Ok(test_table(&t, cfg))
}

/// Loss for the discrete regression. Smaller means less dependent.
///
/// Scores whose p-value is representable compare by p (larger p is less
/// dependent). Once p drops below `p_min` the score is "underflowed" and
/// ranks after every representable one, ordered by the test statistic.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DependenceScore {
    pub underflow: bool,
    /// `-p` when not underflowed.
    pub primary: f64,
    pub fallback_stat: f64,
}

impl DependenceScore {
    pub fn new(p_value: f64, statistic: f64, p_min: f64) -> Self {
        let underflow = p_value < p_min;
        DependenceScore {
            underflow,
            primary: if underflow { 0.0 } else { -p_value },
            fallback_stat: statistic,
        }
    }

    pub fn from_test(t: &TestResult, p_min: f64) -> Self {
        Self::new(t.p_value, t.statistic, p_min)
    }
}

impl PartialEq for DependenceScore {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for DependenceScore {}

impl Ord for DependenceScore {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.underflow, other.underflow) {
            (false, true) => Ordering::Less,
            (true, false) => Ordering::Greater,
            (false, false) => self.primary.total_cmp(&other.primary),
            (true, true) => self.fallback_stat.total_cmp(&other.fallback_stat),
        }
    }
}

impl PartialOrd for DependenceScore {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn dependence_measure(u: &[i64], v: &[i64], cfg: &TestConfig) -> Result<DependenceScore> {
    let t = independence_test(u, v, cfg)?;
    Ok(DependenceScore::from_test(&t, cfg.p_min))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&[u64]]) -> ContingencyTable {
        let r = rows.len();
        let c = rows[0].len();
        let flat: Vec<u64> = rows.iter().flat_map(|row| row.iter().copied()).collect();
        let rl: Vec<i64> = (0..r as i64).collect();
        let cl: Vec<i64> = (0..c as i64).collect();
        ContingencyTable::from_counts(&rl, &cl, &flat).unwrap()
    }

    #[test]
    fn tally() {
        let t = contingency_table(&[0, 0, 1], &[5, 5, 7]).unwrap();
        assert_eq!(t.counts(), &[2, 0, 0, 1]);
        assert_eq!(t.row_labels(), &[0, 1]);
        assert_eq!(t.col_labels(), &[5, 7]);
    }

    #[test]
    fn constant_u_single_row() {
        let t = contingency_table(&[3, 3, 3], &[1, 2, 1]).unwrap();
        assert_eq!(t.n_rows(), 1);
        let r = chi_square_test(&t);
        assert_eq!((r.statistic, r.dof, r.p_value), (0.0, 0, 1.0));
    }

    #[test]
    fn table_errors() {
        assert!(matches!(
            contingency_table(&[1], &[1, 2]),
            Err(AnmError::LengthMismatch { .. })
        ));
        assert_eq!(contingency_table(&[], &[]).unwrap_err(), AnmError::EmptyInput);
    }

    #[test]
    fn chi_square_balanced() {
        let r = chi_square_test(&table(&[&[5, 5], &[5, 5]]));
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 1);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn chi_square_outer_product() {
        let r = chi_square_test(&table(&[&[4, 8], &[2, 4]]));
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn cochran() {
        assert!(cochran_ok(&table(&[&[100, 100], &[100, 100]])));
        assert!(!cochran_ok(&table(&[&[1, 1], &[1, 1]])));
        let mut rows = vec![vec![0u64; 10]; 10];
        for k in 0..50 {
            rows[k % 10][(k / 10 + k) % 10] += 1;
        }
        let refs: Vec<&[u64]> = rows.iter().map(|r| r.as_slice()).collect();
        let t = table(&refs);
        assert_eq!(t.total(), 50);
        assert!(!cochran_ok(&t));
    }

    #[test]
    fn fisher_outer_product_is_not_significant() {
        let r = fisher_exact_mc(&table(&[&[4, 8], &[2, 4]]), 2000, 1);
        assert!(r.p_value >= 0.95);
        assert_eq!(r.method, TestMethod::FisherMc);
    }

    #[test]
    fn fisher_is_deterministic() {
        let t = table(&[&[3, 1, 2], &[0, 4, 1]]);
        let a = fisher_exact_mc(&t, 1000, 99);
        let b = fisher_exact_mc(&t, 1000, 99);
        assert_eq!(a, b);
    }

    #[test]
    fn dispatch() {
        let cfg = TestConfig::default();
        let mut u = Vec::new();
        let mut v = Vec::new();
        for i in 0..400 {
            u.push(i % 2);
            v.push((i / 2) % 2);
        }
        assert_eq!(independence_test(&u, &v, &cfg).unwrap().method, TestMethod::ChiSquare);

        let u: Vec<i64> = (0..30).map(|i| i % 8).collect();
        let v: Vec<i64> = (0..30).map(|i| (i * 3 / 4) % 8).collect();
        let cfg = TestConfig { n_perm: 1000, ..cfg };
        assert_eq!(independence_test(&u, &v, &cfg).unwrap().method, TestMethod::FisherMc);

        let v = vec![4; 30];
        assert_eq!(independence_test(&u, &v, &cfg).unwrap().p_value, 1.0);
    }

    #[test]
    fn score_order() {
        let p_min = 1e-12;
        let s = |p: f64, stat: f64| DependenceScore::new(p, stat, p_min);
        assert!(s(0.7, 1.0) < s(0.3, 2.0));
        assert!(s(0.0, 40.0) < s(0.0, 90.0));
        assert!(s(1e-6, 30.0) < s(0.0, 10.0));
        assert!(s(1e-13, 90.0).underflow);
    }

    #[test]
    fn config_validation() {
        assert!(TestConfig::default().validate().is_ok());
        assert!(TestConfig {
            n_perm: 10,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
