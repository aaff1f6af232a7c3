//! Discrete regression by dependence minimization.
//!
//! Starting from the per-x conditional mode, each sweep revisits the observed
//! x values in a fresh random order and sets `f(x)` to the candidate that
//! makes the residuals least dependent on X, holding the other values fixed.
//! Sweeps stop once the residuals pass the independence test, once a sweep
//! changes nothing, or after `max_sweeps`.
//!
//! The work happens on per-x histograms of Y, so the cost of scoring one
//! candidate does not depend on the sample size.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    canonicalize, empirical_joint, residuals, FunctionTable, JointPmf, NoisePmf, PairedSample, Pmf, ValueDomain,
};
use crate::error::{AnmError, Result};
use crate::stats::{chi_square_sf, test_table, ContingencyTable, DependenceScore, TestConfig, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateMode {
    /// Every value between the smallest and largest observed Y (all of
    /// `0..m` for a cyclic codomain).
    FullRange,
    /// The `k` values seen most often together with x.
    TopK(usize),
}

/// Which p-value drives the regression loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DmTest {
    /// Asymptotic χ² p-value (statistic once it underflows).
    Asymptotic,
    /// The full independence test, including the Monte Carlo fallback.
    /// Much slower, and Monte Carlo p-values tie at their resolution floor.
    Dispatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    pub max_sweeps: usize,
    pub alpha: f64,
    pub candidates: CandidateMode,
    pub dm_test: DmTest,
    pub p_min: f64,
    pub n_perm: usize,
    pub seed: u64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig {
            max_sweeps: 10,
            alpha: 0.05,
            candidates: CandidateMode::FullRange,
            dm_test: DmTest::Asymptotic,
            p_min: 1e-12,
            n_perm: 10_000,
            seed: 0,
        }
    }
}

impl RegressionConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        RegressionConfig { seed, ..self }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        RegressionConfig { alpha, ..self }
    }

    pub fn test_config(&self) -> TestConfig {
        TestConfig {
            p_min: self.p_min,
            n_perm: self.n_perm,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(AnmError::InvalidParameter("max_sweeps must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AnmError::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.candidates == CandidateMode::TopK(0) {
            return Err(AnmError::InvalidParameter("TopK needs k >= 1".into()));
        }
        self.test_config().validate()
    }
}

/// One fitted direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnmFit {
    pub f: FunctionTable,
    pub residuals: Vec<i64>,
    pub noise: NoisePmf,
    pub test: TestResult,
    pub p_value: f64,
    /// Candidate functions scored, including the initial one.
    pub dm_evaluations: u64,
    pub sweeps_used: usize,
    pub accepted: bool,
}

/// `f(x) = argmax_y P(x, y)`, ties to the largest y.
pub fn init_function(joint: &JointPmf) -> FunctionTable {
    let ys = joint.y_values();
    let entries = joint.x_values().iter().enumerate().map(|(i, &x)| {
        let row = joint.row(i);
        let mut best = 0usize;
        for (j, &c) in row.iter().enumerate() {
            if c >= row[best] {
                best = j;
            }
        }
        (x, ys[best])
    });
    FunctionTable::new(entries, joint.y_domain())
}

fn full_range(joint: &JointPmf) -> Vec<i64> {
    match joint.y_domain() {
        ValueDomain::Cyclic(m) => (0..m as i64).collect(),
        ValueDomain::Integer => {
            let ys = joint.y_values();
            (ys[0]..=ys[ys.len() - 1]).collect()
        }
    }
}

/// Values tried for `f(x)`, ascending.
///
/// `TopK` ranks the observed y by count (ties to larger y). When fewer than
/// k values were seen with x, the list is padded with the full-range values
/// closest to the most frequent one.
pub fn candidate_values(joint: &JointPmf, x: i64, cfg: &RegressionConfig) -> Result<Vec<i64>> {
    let i = joint
        .x_values()
        .binary_search(&x)
        .map_err(|_| AnmError::InvalidParameter(format!("x = {x} not in the support of X")))?;
    let range = full_range(joint);
    let k = match cfg.candidates {
        CandidateMode::FullRange => return Ok(range),
        CandidateMode::TopK(k) => k,
    };
    let ys = joint.y_values();
    let mut seen: Vec<(u64, i64)> = joint
        .row(i)
        .iter()
        .zip(ys)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &y)| (c, y))
        .collect();
    seen.sort_unstable_by(|a, b| b.cmp(a));
    let mut out: Vec<i64> = seen.iter().take(k).map(|&(_, y)| y).collect();
    if out.len() < k {
        let anchor = out[0];
        let mut rest: Vec<i64> = range.into_iter().filter(|y| !out.contains(y)).collect();
        rest.sort_unstable_by_key(|&y| ((y - anchor).abs(), -y));
        out.extend(rest.into_iter().take(k - out.len()));
    }
    out.sort_unstable();
    Ok(out)
}

/// Dense (x, residual) tables for a fixed sample, re-tabulated per candidate.
struct Workspace {
    xs: Vec<i64>,
    /// Observed `(y, count)` per x.
    hist: Vec<Vec<(i64, u64)>>,
    row_tot: Vec<f64>,
    domain: ValueDomain,
    /// Residual `r` lives in column `r + offset`.
    offset: i64,
    width: usize,
    total: f64,
    counts: Vec<u64>,
    // scratch for the coordinate being optimized
    base_a: Vec<f64>,
    base_c: Vec<u64>,
    row_buf: Vec<u64>,
}

impl Workspace {
    fn new(joint: &JointPmf) -> Self {
        let ys = joint.y_values();
        let hist: Vec<Vec<(i64, u64)>> = (0..joint.x_values().len())
            .map(|i| {
                joint
                    .row(i)
                    .iter()
                    .zip(ys)
                    .filter(|(&c, _)| c > 0)
                    .map(|(&c, &y)| (y, c))
                    .collect()
            })
            .collect();
        let (offset, width) = match joint.y_domain() {
            ValueDomain::Cyclic(m) => (0, m as usize),
            ValueDomain::Integer => {
                let w = ys[ys.len() - 1] - ys[0];
                (w, (2 * w + 1) as usize)
            }
        };
        let r = hist.len();
        Workspace {
            xs: joint.x_values().to_vec(),
            row_tot: joint.x_marginal().iter().map(|&c| c as f64).collect(),
            hist,
            domain: joint.y_domain(),
            offset,
            width,
            total: joint.total() as f64,
            counts: vec![0; r * width],
            base_a: vec![0.0; width],
            base_c: vec![0; width],
            row_buf: vec![0; width],
        }
    }

    #[inline]
    fn col(&self, y: i64, fx: i64) -> usize {
        (self.domain.sub(y, fx) + self.offset) as usize
    }

    fn fill_row(&mut self, i: usize, fx: i64) {
        let w = self.width;
        let start = i * w;
        self.counts[start..start + w].iter_mut().for_each(|c| *c = 0);
        for k in 0..self.hist[i].len() {
            let (y, c) = self.hist[i][k];
            let j = self.col(y, fx);
            self.counts[start + j] += c;
        }
    }

    fn fill(&mut self, f: &[i64]) {
        for (i, &fx) in f.iter().enumerate() {
            self.fill_row(i, fx);
        }
    }

    fn table(&self) -> ContingencyTable {
        let cols: Vec<i64> = (0..self.width as i64).map(|j| j - self.offset).collect();
        ContingencyTable::from_counts(&self.xs, &cols, &self.counts).expect("sample is nonempty")
    }

    /// Caches column sums and `Σ o²/r` over every row except `i`.
    fn exclude_row(&mut self, i: usize) {
        let w = self.width;
        self.base_a.iter_mut().for_each(|a| *a = 0.0);
        self.base_c.iter_mut().for_each(|c| *c = 0);
        for (r, row) in self.counts.chunks_exact(w).enumerate() {
            if r == i {
                continue;
            }
            let inv = 1.0 / self.row_tot[r];
            for (j, &o) in row.iter().enumerate() {
                if o > 0 {
                    let o = o as f64;
                    self.base_a[j] += o * o * inv;
                    self.base_c[j] += row[j];
                }
            }
        }
    }

    /// χ² statistic and dof with row `i` mapped through `fx`; requires
    /// `exclude_row(i)`.
    fn chi_square_with(&mut self, i: usize, fx: i64) -> (f64, usize) {
        self.row_buf.iter_mut().for_each(|c| *c = 0);
        for k in 0..self.hist[i].len() {
            let (y, c) = self.hist[i][k];
            let j = self.col(y, fx);
            self.row_buf[j] += c;
        }
        let inv = 1.0 / self.row_tot[i];
        let mut s = 0.0;
        let mut n_cols = 0usize;
        for j in 0..self.width {
            let o = self.row_buf[j];
            let c = self.base_c[j] + o;
            if c == 0 {
                continue;
            }
            n_cols += 1;
            let of = o as f64;
            s += (self.base_a[j] + of * of * inv) / c as f64;
        }
        let dof = (self.xs.len() - 1) * (n_cols.max(1) - 1);
        let stat = if dof == 0 {
            0.0
        } else {
            (self.total * s - self.total).max(0.0)
        };
        (stat, dof)
    }
}

struct Scorer<'a> {
    cfg: &'a RegressionConfig,
    test_cfg: TestConfig,
}

impl Scorer<'_> {
    fn score(&self, ws: &mut Workspace, i: usize, fx: i64) -> DependenceScore {
        match self.cfg.dm_test {
            DmTest::Asymptotic => {
                let (stat, dof) = ws.chi_square_with(i, fx);
                let p = if dof == 0 { 1.0 } else { chi_square_sf(stat, dof) };
                DependenceScore::new(p, stat, self.cfg.p_min)
            }
            DmTest::Dispatch => {
                let w = ws.width;
                let saved: Vec<u64> = ws.counts[i * w..(i + 1) * w].to_vec();
                ws.fill_row(i, fx);
                let t = test_table(&ws.table(), &self.test_cfg);
                ws.counts[i * w..(i + 1) * w].copy_from_slice(&saved);
                DependenceScore::from_test(&t, self.cfg.p_min)
            }
        }
    }
}

/// Fit result plus the score of the working function after every accepted
/// coordinate update.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct Trace {
    pub fit: AnmFit,
    pub scores: Vec<DependenceScore>,
}

/// Fits `Y = f(X) + N` with the codomain taken from the sample's Y domain.
pub fn fit_anm(sample: &PairedSample, cfg: &RegressionConfig) -> Result<AnmFit> {
    fit_traced(sample, cfg).map(|t| t.fit)
}

pub(crate) fn fit_traced(sample: &PairedSample, cfg: &RegressionConfig) -> Result<Trace> {
    cfg.validate()?;
    let joint = empirical_joint(sample)?;
    let test_cfg = cfg.test_config();
    let scorer = Scorer { cfg, test_cfg };

    let init = init_function(&joint);
    let mut f: Vec<i64> = joint.x_values().iter().map(|&x| init.get(x).unwrap()).collect();
    let candidates: Vec<Vec<i64>> = joint
        .x_values()
        .iter()
        .map(|&x| candidate_values(&joint, x, cfg))
        .collect::<Result<_>>()?;

    let mut ws = Workspace::new(&joint);
    ws.fill(&f);
    ws.exclude_row(0);
    let mut current = scorer.score(&mut ws, 0, f[0]);
    let mut evaluations: u64 = 1;
    let mut scores = vec![current];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..f.len()).collect();
    let mut sweeps_used = 0;
    for sweep in 1..=cfg.max_sweeps {
        sweeps_used = sweep;
        order.shuffle(&mut rng);
        let mut changed = false;
        for &i in &order {
            let incumbent = f[i];
            ws.exclude_row(i);
            let mut best = (incumbent, current);
            for &y in &candidates[i] {
                if y == incumbent {
                    continue;
                }
                let s = scorer.score(&mut ws, i, y);
                evaluations += 1;
                // ascending y: later ties are larger, but never displace
                // the incumbent
                if s < best.1 || (s == best.1 && best.0 != incumbent) {
                    best = (y, s);
                }
            }
            if best.0 != incumbent {
                f[i] = best.0;
                ws.fill_row(i, best.0);
                current = best.1;
                scores.push(current);
                changed = true;
            }
        }
        let t = test_table(&ws.table(), &test_cfg);
        if t.p_value > cfg.alpha || !changed {
            break;
        }
    }

    let fitted = FunctionTable::new(
        joint.x_values().iter().copied().zip(f.iter().copied()),
        joint.y_domain(),
    );
    let raw = residuals(sample, &fitted)?;
    let raw_noise = Pmf::from_values(&raw, sample.y_domain())?;
    let (f_canon, noise) = canonicalize(&fitted, &raw_noise);
    let res = residuals(sample, &f_canon)?;
    let f_vec: Vec<i64> = joint.x_values().iter().map(|&x| f_canon.get(x).unwrap()).collect();
    ws.fill(&f_vec);
    let test = test_table(&ws.table(), &test_cfg);
    Ok(Trace {
        fit: AnmFit {
            f: f_canon,
            residuals: res,
            noise,
            p_value: test.p_value,
            accepted: test.p_value > cfg.alpha,
            test,
            dm_evaluations: evaluations,
            sweeps_used,
        },
        scores,
    })
}
