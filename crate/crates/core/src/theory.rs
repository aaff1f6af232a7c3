//! Exact population-level checks of reversibility.
//!
//! Models carry integer weights, so every equality below is an exact
//! integer identity. A model is reversible when the joint distribution it
//! induces also admits an additive noise model from Y to X.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{canonicalize, FunctionTable, NoisePmf, Pmf, ValueDomain};
use crate::error::{AnmError, Result};

/// Default limit on candidate evaluations in [`backward_search`].
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// `Y = f(X) + N` with the regressor law and the noise given as integer
/// weights. X lives in `p_x.domain()`, Y and N in `noise.domain()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnmModel {
    pub p_x: Pmf,
    pub f: FunctionTable,
    pub noise: NoisePmf,
}

/// Joint weights of (X, Y) on the product of the two supports, row-major in x.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactJoint {
    pub x_values: Vec<i64>,
    pub y_values: Vec<i64>,
    pub weights: Vec<u128>,
    pub total: u128,
}

impl ExactJoint {
    pub fn weight(&self, x: i64, y: i64) -> u128 {
        match (self.x_values.binary_search(&x), self.y_values.binary_search(&y)) {
            (Ok(i), Ok(j)) => self.weights[i * self.y_values.len() + j],
            _ => 0,
        }
    }

    fn column(&self, j: usize) -> impl Iterator<Item = (i64, u128)> + '_ {
        let ny = self.y_values.len();
        self.x_values
            .iter()
            .enumerate()
            .map(move |(i, &x)| (x, self.weights[i * ny + j]))
            .filter(|&(_, w)| w > 0)
    }

    pub fn y_marginal(&self) -> Vec<u128> {
        (0..self.y_values.len())
            .map(|j| self.column(j).map(|(_, w)| w).sum())
            .collect()
    }
}

impl AnmModel {
    pub fn new(p_x: Pmf, f: FunctionTable, noise: NoisePmf) -> Result<Self> {
        if f.codomain() != noise.domain() {
            return Err(AnmError::InvalidDomain(format!(
                "function codomain {} differs from noise domain {}",
                f.codomain(),
                noise.domain()
            )));
        }
        for &x in p_x.values() {
            f.apply(x)?;
        }
        let f = FunctionTable::new(p_x.values().iter().map(|&x| (x, f.get(x).unwrap())), f.codomain());
        Ok(AnmModel { p_x, f, noise })
    }

    pub fn x_domain(&self) -> ValueDomain {
        self.p_x.domain()
    }

    pub fn y_domain(&self) -> ValueDomain {
        self.noise.domain()
    }

    /// The same joint law written with canonical noise.
    pub fn canonical(&self) -> AnmModel {
        let (f, noise) = canonicalize(&self.f, &self.noise);
        AnmModel {
            p_x: self.p_x.clone(),
            f,
            noise,
        }
    }

    pub fn exact_joint(&self) -> ExactJoint {
        let dy = self.y_domain();
        let mut cells: BTreeMap<(i64, i64), u128> = BTreeMap::new();
        for (x, px) in self.p_x.iter() {
            let fx = self.f.get(x).expect("f covers supp X");
            for (e, ne) in self.noise.iter() {
                *cells.entry((x, dy.add(fx, e))).or_insert(0) += px as u128 * ne as u128;
            }
        }
        let x_values: Vec<i64> = self.p_x.values().to_vec();
        let y_values: Vec<i64> = cells
            .keys()
            .map(|&(_, y)| y)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut weights = vec![0u128; x_values.len() * y_values.len()];
        for ((x, y), w) in cells {
            let i = x_values.binary_search(&x).unwrap();
            let j = y_values.binary_search(&y).unwrap();
            weights[i * y_values.len() + j] = w;
        }
        ExactJoint {
            x_values,
            y_values,
            weights,
            total: self.p_x.total() as u128 * self.noise.total() as u128,
        }
    }

    pub fn y_support_size(&self) -> usize {
        let dy = self.y_domain();
        let ys: BTreeSet<i64> = self
            .p_x
            .values()
            .iter()
            .flat_map(|&x| {
                let fx = self.f.get(x).unwrap();
                self.noise.values().iter().map(move |&e| dy.add(fx, e))
            })
            .collect();
        ys.len()
    }
}

/// `X = g(Y) + Ñ` with `Ñ` independent of Y.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackwardModel {
    pub g: FunctionTable,
    pub noise_tilde: NoisePmf,
}

impl BackwardModel {
    /// Checks `P(x, y) = q(y) · ñ(x − g(y))` on every cell that either side
    /// could make positive.
    pub fn verify(&self, model: &AnmModel) -> bool {
        let joint = model.exact_joint();
        let q = joint.y_marginal();
        let dx = model.x_domain();
        let nt = self.noise_tilde.total() as u128;
        for (j, &y) in joint.y_values.iter().enumerate() {
            let Some(gy) = self.g.get(y) else {
                return false;
            };
            let xs: BTreeSet<i64> = joint
                .x_values
                .iter()
                .copied()
                .chain(self.noise_tilde.values().iter().map(|&r| dx.add(gy, r)))
                .collect();
            for x in xs {
                let lhs = joint.weight(x, y).checked_mul(nt);
                let rhs = q[j].checked_mul(self.noise_tilde.weight(dx.sub(x, gy)) as u128);
                match (lhs, rhs) {
                    (Some(l), Some(r)) if l == r => {}
                    _ => return false,
                }
            }
        }
        true
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Column of the joint at y, divided by its gcd. Two columns describe the
/// same conditional law exactly when their reduced forms coincide.
fn reduced_column(joint: &ExactJoint, j: usize) -> Vec<(i64, u128)> {
    let col: Vec<(i64, u128)> = joint.column(j).collect();
    let g = col.iter().fold(0, |acc, &(_, w)| gcd(acc, w));
    col.into_iter().map(|(x, w)| (x, w / g)).collect()
}

fn profile(col: &[(i64, u128)], g: i64, dx: ValueDomain) -> Vec<(i64, u128)> {
    let mut p: Vec<(i64, u128)> = col.iter().map(|&(x, w)| (dx.sub(x, g), w)).collect();
    p.sort_unstable();
    p
}

/// Searches for an additive noise model from Y to X.
///
/// For every y the candidate values of `g(y)` are the x values seen with y.
/// This loses nothing: if some g works, the conditional supports are
/// `g(y) + supp Ñ`, so shifting g by `min supp Ñ` gives a valid g inside
/// them. Once `g(y₀)` is fixed for the smallest y, the law of `X − g(y₀)`
/// given `Y = y₀` is fixed and every other y can be checked on its own. The
/// result is the lexicographically smallest such g, then canonicalized.
pub fn backward_search(model: &AnmModel) -> Result<Option<BackwardModel>> {
    backward_search_with_cap(model, DEFAULT_ENUMERATION_CAP)
}

pub fn backward_search_with_cap(model: &AnmModel, cap: u64) -> Result<Option<BackwardModel>> {
    let joint = model.exact_joint();
    let dx = model.x_domain();
    let cols: Vec<Vec<(i64, u128)>> = (0..joint.y_values.len()).map(|j| reduced_column(&joint, j)).collect();
    let mut evaluations: u64 = 0;
    let mut tick = || {
        evaluations += 1;
        if evaluations > cap {
            Err(AnmError::EnumerationTooLarge(format!(
                "more than {cap} candidate evaluations"
            )))
        } else {
            Ok(())
        }
    };

    'first: for &(g0, _) in &cols[0] {
        tick()?;
        let reference = profile(&cols[0], g0, dx);
        let mut g = vec![g0];
        for col in &cols[1..] {
            let mut found = None;
            for &(cand, _) in col {
                tick()?;
                if profile(col, cand, dx) == reference {
                    found = Some(cand);
                    break;
                }
            }
            match found {
                Some(c) => g.push(c),
                None => continue 'first,
            }
        }
        let weights = reference
            .iter()
            .map(|&(r, w)| u64::try_from(w).map(|w| (r, w)).map_err(|_| AnmError::Overflow))
            .collect::<Result<Vec<_>>>()?;
        let noise = Pmf::from_weights(weights, dx)?;
        let g = FunctionTable::new(joint.y_values.iter().copied().zip(g), dx);
        let (g, noise_tilde) = canonicalize(&g, &noise);
        return Ok(Some(BackwardModel { g, noise_tilde }));
    }
    Ok(None)
}

/// Partition of supp X into shifted copies `C_i = C_0 + d_i` on which f is
/// constant (`c_i`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub classes: Vec<Vec<i64>>,
    pub shifts: Vec<i64>,
    pub levels: Vec<i64>,
}

/// Looks for the disjoint decomposition that characterizes reversible
/// integer models with finite supports:
///
/// * the classes are shifted copies of `C_0` and f is constant on each;
/// * the sets `c_i + supp N` are pairwise disjoint;
/// * on each class, `P(X = x)` is the law on `C_0` shifted by `d_i` and
///   rescaled to `P(X ∈ C_i)`.
///
/// Disjointness forces the `c_i` to be distinct, so the classes can only be
/// the level sets of f.
pub fn level_set_decomposition(model: &AnmModel) -> Result<Option<Decomposition>> {
    if model.x_domain().is_cyclic() || model.y_domain().is_cyclic() {
        return Err(AnmError::InvalidDomain("decomposition needs integer domains".into()));
    }
    let mut level_sets: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
    for &x in model.p_x.values() {
        level_sets.entry(model.f.get(x).unwrap()).or_default().push(x);
    }
    let mut classes: Vec<(i64, Vec<i64>)> = level_sets.into_iter().collect();
    classes.sort_by_key(|(_, xs)| xs[0]);

    let base = &classes[0].1;
    let mut shifts = Vec::with_capacity(classes.len());
    for (_, xs) in &classes {
        if xs.len() != base.len() {
            return Ok(None);
        }
        let d = xs[0] - base[0];
        if xs.iter().zip(base).any(|(&x, &b)| x - b != d) {
            return Ok(None);
        }
        shifts.push(d);
    }

    let mut covered = BTreeSet::new();
    for (c, _) in &classes {
        for &e in model.noise.values() {
            if !covered.insert(c + e) {
                return Ok(None);
            }
        }
    }

    let mass = |xs: &[i64]| -> u128 { xs.iter().map(|&x| model.p_x.weight(x) as u128).sum() };
    let base_mass = mass(base);
    for ((_, xs), &d) in classes.iter().zip(&shifts) {
        let class_mass = mass(xs);
        for &x in xs {
            let lhs = model.p_x.weight(x) as u128 * base_mass;
            let rhs = model.p_x.weight(x - d) as u128 * class_mass;
            if lhs != rhs {
                return Ok(None);
            }
        }
    }

    let (levels, classes) = classes.into_iter().unzip();
    Ok(Some(Decomposition {
        classes,
        shifts,
        levels,
    }))
}

/// Necessary condition for reversibility: `|supp Y|` divides
/// `|supp X| · |supp N|`.
pub fn divisibility_check(model: &AnmModel) -> bool {
    let sy = model.y_support_size();
    (model.p_x.support_size() * model.noise.support_size()).is_multiple_of(sy)
}

/// Families of reversible models that hold for any choice of the remaining
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExampleKind {
    /// f constant on supp X, so X and Y are independent.
    ConstantFunction,
    /// Uniform noise on the whole cyclic codomain, again X ⊥ Y.
    UniformNoise,
    /// Cyclic `m = m̃`, uniform X and a bijective affine f.
    AffineBijection,
}

impl ExampleKind {
    pub fn label(self) -> &'static str {
        match self {
            ExampleKind::ConstantFunction => "constant_function",
            ExampleKind::UniformNoise => "uniform_noise",
            ExampleKind::AffineBijection => "affine_bijection",
        }
    }
}

/// Exact membership in the three example families.
pub fn matching_examples(model: &AnmModel) -> Vec<ExampleKind> {
    near_examples(model, 0.0)
}

/// Membership up to `tol`: constant function when at most `tol` of the X mass lies off
/// the heaviest level set of f; the uniform cases when every probability is
/// within `tol` of uniform. With `tol = 0` the checks are exact.
pub fn near_examples(model: &AnmModel, tol: f64) -> Vec<ExampleKind> {
    let mut out = Vec::new();

    let mut level_mass: BTreeMap<i64, u64> = BTreeMap::new();
    for (x, w) in model.p_x.iter() {
        *level_mass.entry(model.f.get(x).unwrap()).or_insert(0) += w;
    }
    let heaviest = level_mass.values().copied().max().unwrap_or(0);
    let off = model.p_x.total() - heaviest;
    if off == 0 || (off as f64) <= tol * model.p_x.total() as f64 {
        out.push(ExampleKind::ConstantFunction);
    }

    if let Some(mt) = model.y_domain().modulus() {
        if near_uniform(&model.noise, mt, tol) {
            out.push(ExampleKind::UniformNoise);
        }
    }

    if let (Some(m), Some(mt)) = (model.x_domain().modulus(), model.y_domain().modulus()) {
        if m == mt && near_uniform(&model.p_x, m, tol) && is_affine_bijection(&model.f, m) {
            out.push(ExampleKind::AffineBijection);
        }
    }
    out
}

fn near_uniform(p: &Pmf, m: u32, tol: f64) -> bool {
    if tol == 0.0 {
        return p.is_uniform_on(m as usize);
    }
    (0..m as i64).all(|k| (p.mass(k) - 1.0 / m as f64).abs() <= tol)
}

fn is_affine_bijection(f: &FunctionTable, m: u32) -> bool {
    let m = m as i64;
    if f.len() != m as usize {
        return false;
    }
    let (Some(b), Some(f1)) = (f.get(0), f.get(1)) else {
        return false;
    };
    let a = (f1 - b).rem_euclid(m);
    let coprime = gcd(a as u128, m as u128) == 1;
    coprime && (0..m).all(|x| f.get(x) == Some((a * x + b).rem_euclid(m)))
}

/// Small random integer model for oracle cross-checks: `|supp X| ≤ 5`,
/// `|supp Y| ≤ 6`, weights in 1..=3 so that exact ratios occur often.
pub fn random_small_model(seed: u64) -> AnmModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let nx = rng.random_range(1..=5usize);
        let mut xs: BTreeSet<i64> = BTreeSet::new();
        while xs.len() < nx {
            xs.insert(rng.random_range(0..8));
        }
        let n_levels = rng.random_range(1..=3);
        let levels: Vec<i64> = (0..n_levels).map(|_| rng.random_range(0..6)).collect();
        let f = FunctionTable::new(
            xs.iter().map(|&x| (x, levels[rng.random_range(0..levels.len())])),
            ValueDomain::Integer,
        );
        let p_x = Pmf::from_weights(xs.iter().map(|&x| (x, rng.random_range(1..=3))), ValueDomain::Integer).unwrap();
        let nn = rng.random_range(1..=3);
        let spread = rng.random_range(1..=3);
        let mut offsets = BTreeSet::new();
        while offsets.len() < nn {
            offsets.insert(rng.random_range(0..=spread.max(nn as i64 - 1)));
        }
        let noise = Pmf::from_weights(
            offsets.iter().map(|&e| (e, rng.random_range(1..=3))),
            ValueDomain::Integer,
        )
        .unwrap();
        let model = AnmModel::new(p_x, f, noise).unwrap();
        if model.y_support_size() <= 6 {
            return model;
        }
    }
}

/// JSON fixture: probabilities are decimal strings such as `"1/36"` or `"3"`
/// (weights need not be normalized).
///
/// ```json
/// { "x_domain": "integer", "y_domain": "integer",
///   "p_x": [[1, "1/4"], [2, "3/4"]],
///   "f": [[1, 0], [2, 5]],
///   "noise": [[0, "2/3"], [1, "1/3"]] }
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFixture {
    pub x_domain: ValueDomain,
    pub y_domain: ValueDomain,
    pub p_x: Vec<(i64, String)>,
    pub f: Vec<(i64, i64)>,
    pub noise: Vec<(i64, String)>,
}

fn parse_rational(s: &str) -> Result<(u64, u64)> {
    let bad = || AnmError::Parse(format!("not a nonnegative rational: {s:?}"));
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let n: u64 = n.parse().map_err(|_| bad())?;
    let d: u64 = d.parse().map_err(|_| bad())?;
    if d == 0 {
        return Err(bad());
    }
    Ok((n, d))
}

fn rational_weights(entries: &[(i64, String)], domain: ValueDomain) -> Result<Pmf> {
    let parsed = entries
        .iter()
        .map(|(v, s)| parse_rational(s).map(|r| (*v, r)))
        .collect::<Result<Vec<_>>>()?;
    let lcm = parsed.iter().try_fold(1u64, |acc, &(_, (_, d))| {
        let g = gcd(acc as u128, d as u128) as u64;
        (acc / g).checked_mul(d).ok_or(AnmError::Overflow)
    })?;
    let weights = parsed
        .into_iter()
        .map(|(v, (n, d))| n.checked_mul(lcm / d).map(|w| (v, w)).ok_or(AnmError::Overflow))
        .collect::<Result<Vec<_>>>()?;
    Pmf::from_weights(weights, domain)
}

impl ModelFixture {
    pub fn to_model(&self) -> Result<AnmModel> {
        let p_x = rational_weights(&self.p_x, self.x_domain)?;
        let noise = rational_weights(&self.noise, self.y_domain)?;
        let f = FunctionTable::new(self.f.iter().copied(), self.y_domain);
        AnmModel::new(p_x, f, noise)
    }

    pub fn from_model(model: &AnmModel) -> Self {
        let fmt = |p: &Pmf| -> Vec<(i64, String)> {
            let t = p.total();
            p.iter()
                .map(|(v, w)| {
                    let g = gcd(w as u128, t as u128) as u64;
                    (v, format!("{}/{}", w / g, t / g))
                })
                .collect()
        };
        ModelFixture {
            x_domain: model.x_domain(),
            y_domain: model.y_domain(),
            p_x: fmt(&model.p_x),
            f: model.f.iter().collect(),
            noise: fmt(&model.noise),
        }
    }
}

impl AnmModel {
    pub fn from_fixture_json(text: &str) -> Result<Self> {
        let fx: ModelFixture = serde_json::from_str(text).map_err(|e| AnmError::Parse(e.to_string()))?;
        fx.to_model()
    }

    pub fn to_fixture_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFixture::from_model(self)).expect("fixture serializes")
    }
}

/// Staircase model: `x ∈ 1..=7`, `f(x) = x − 1`, noise on {0, 1, 2} with
/// generic masses. Identifiable only from X to Y.
pub fn staircase_model() -> AnmModel {
    let p_x = Pmf::from_weights((1..=7).map(|x| (x, x as u64)), ValueDomain::Integer).unwrap();
    let f = FunctionTable::new((1..=7).map(|x| (x, x - 1)), ValueDomain::Integer);
    let noise = Pmf::from_weights([(0, 3), (1, 2), (2, 1)], ValueDomain::Integer).unwrap();
    AnmModel::new(p_x, f, noise).unwrap()
}

/// Two interleaved classes `a_i` (f = 3) and `b_i = a_i + 1` (f = 6) with
/// noise on {−2, 0, 2}; reversible by construction.
pub fn interleaved_model() -> AnmModel {
    let a = [1, 3, 6, 8, 11, 13, 16, 18];
    let mut px = Vec::new();
    let mut f = Vec::new();
    for (i, &x) in a.iter().enumerate() {
        let wa = if i < 4 { 1 } else { 2 };
        px.push((x, wa));
        px.push((x + 1, 2 * wa));
        f.push((x, 3));
        f.push((x + 1, 6));
    }
    let p_x = Pmf::from_weights(px, ValueDomain::Integer).unwrap();
    let noise = Pmf::from_weights([(-2, 1), (0, 2), (2, 1)], ValueDomain::Integer).unwrap();
    AnmModel::new(p_x, FunctionTable::new(f, ValueDomain::Integer), noise).unwrap()
}
