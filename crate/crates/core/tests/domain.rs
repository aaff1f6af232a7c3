use std::collections::BTreeMap;

use discrete_anm::domain::{canonicalize, empirical_joint, residuals, FunctionTable, PairedSample, Pmf, ValueDomain};
use discrete_anm::simulate::{benchmark_model, sample_model, BenchmarkModel};
use discrete_anm::AnmError;
use proptest::prelude::*;

#[test]
fn empirical_joint_counts() {
    let s = PairedSample::integer(vec![(0, 1)]).unwrap();
    let j = empirical_joint(&s).unwrap();
    assert_eq!(j.mass(0, 1), 1.0);

    let s = PairedSample::integer(vec![(0, 1), (0, 2), (1, 1), (0, 1)]).unwrap();
    let j = empirical_joint(&s).unwrap();
    assert_eq!(j.mass(0, 1), 0.5);
    assert_eq!(j.mass(0, 2), 0.25);
    assert_eq!(j.mass(1, 1), 0.25);
    assert_eq!(j.mass(1, 2), 0.0);
    assert_eq!(j.x_values(), &[0, 1]);
    assert_eq!(j.y_values(), &[1, 2]);
}

#[test]
fn empty_sample_is_rejected() {
    assert_eq!(PairedSample::integer(vec![]).unwrap_err(), AnmError::EmptyInput);
    assert_eq!(AnmError::EmptyInput.to_string(), "empty input");
}

#[test]
fn residual_examples() {
    let s = PairedSample::integer(vec![(1, 3)]).unwrap();
    let f = FunctionTable::new([(1, 3)], ValueDomain::Integer);
    assert_eq!(residuals(&s, &f).unwrap(), vec![0]);

    let c = ValueDomain::Cyclic(4);
    let s = PairedSample::new(vec![(5, 1)], ValueDomain::Integer, c).unwrap();
    let f = FunctionTable::new([(5, 3)], c);
    assert_eq!(residuals(&s, &f).unwrap(), vec![2]);

    let f = FunctionTable::new([(6, 3)], c);
    let err = residuals(&s, &f).unwrap_err();
    assert!(err.to_string().contains("function undefined at x"));
}

#[test]
fn canonicalize_examples() {
    let f = FunctionTable::new([(0, 0), (1, 0)], ValueDomain::Integer);
    let n = Pmf::from_weights([(1, 2), (2, 1)], ValueDomain::Integer).unwrap();
    let (f2, n2) = canonicalize(&f, &n);
    assert!(f2.iter().all(|(_, y)| y == 1));
    assert_eq!(n2.iter().collect::<Vec<_>>(), vec![(0, 2), (1, 1)]);

    let (f3, n3) = canonicalize(&f2, &n2);
    assert_eq!((f3, n3), (f2, n2));

    let c = ValueDomain::Cyclic(4);
    let f = FunctionTable::new([(0, 3)], c);
    let n = Pmf::from_weights([(2, 50), (3, 49), (0, 1)], c).unwrap();
    let (f2, n2) = canonicalize(&f, &n);
    assert_eq!(f2.get(0), Some(1));
    assert_eq!(n2.iter().collect::<Vec<_>>(), vec![(0, 50), (1, 49), (2, 1)]);
}

#[test]
fn canonicalize_tie_break() {
    // modes at -1 and 2: the smaller magnitude wins
    let n = Pmf::from_weights([(-1, 3), (2, 3), (0, 1)], ValueDomain::Integer).unwrap();
    assert_eq!(n.mode(), -1);
    // -1 and 1 tie on magnitude: the positive one wins
    let n = Pmf::from_weights([(-1, 3), (1, 3)], ValueDomain::Integer).unwrap();
    assert_eq!(n.mode(), 1);
    // cyclic offsets are compared through their centered representatives
    let n = Pmf::from_weights([(4, 2), (2, 2)], ValueDomain::Cyclic(5)).unwrap();
    assert_eq!(n.mode(), 4);
}

#[test]
fn cyclic_values_are_reduced_on_ingestion() {
    let s = PairedSample::new(vec![(-1, 7)], ValueDomain::Cyclic(3), ValueDomain::Cyclic(5)).unwrap();
    assert_eq!(s.rows(), &[(2, 2)]);
}

#[test]
fn ds2a_sample_marginal_and_residuals() {
    let model = benchmark_model(BenchmarkModel::Ds2a { r: 0.1 }).unwrap();
    let s = sample_model(&model, 50_000, 11).unwrap();
    let j = empirical_joint(&s).unwrap();
    let expect = [(-3, 0.15), (-1, 0.25), (1, 0.10), (3, 0.50)];
    let marg = j.x_marginal();
    let tv: f64 = expect
        .iter()
        .zip(&marg)
        .map(|(&(_, p), &c)| (p - c as f64 / j.total() as f64).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.02, "tv = {tv}");

    let r = residuals(&s, &model.f).unwrap();
    let emp = Pmf::from_values(&r, ValueDomain::Integer).unwrap();
    for (e, p) in [(-2, 0.2), (0, 0.5), (2, 0.3)] {
        assert!((emp.mass(e) - p).abs() < 0.01, "n({e}) = {}", emp.mass(e));
    }
    assert_eq!(emp.support_size(), 3);
}

fn rows_strategy() -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((-5i64..5, -20i64..20), 1..60)
}

proptest! {
    #[test]
    fn joint_mass_sums_to_one(rows in rows_strategy()) {
        let s = PairedSample::integer(rows.clone()).unwrap();
        let j = empirical_joint(&s).unwrap();
        let total: u64 = j.cells().map(|(_, c)| c).sum();
        prop_assert_eq!(total, rows.len() as u64);
        let mut counts: BTreeMap<(i64, i64), u64> = BTreeMap::new();
        for r in rows {
            *counts.entry(r).or_default() += 1;
        }
        for ((x, y), c) in counts {
            prop_assert_eq!(j.count(x, y), c);
        }
    }

    #[test]
    fn canonical_shift_moves_residuals(rows in rows_strategy(), m in prop::option::of(2u32..9)) {
        let dy = m.map_or(ValueDomain::Integer, ValueDomain::Cyclic);
        let s = PairedSample::new(rows, ValueDomain::Integer, dy).unwrap();
        let f = FunctionTable::new(s.xs().into_iter().map(|x| (x, x * 3)), dy);
        let r = residuals(&s, &f).unwrap();
        let pmf = Pmf::from_values(&r, dy).unwrap();
        let (fc, nc) = canonicalize(&f, &pmf);
        let j = pmf.mode();
        let rc = residuals(&s, &fc).unwrap();
        for (a, b) in r.iter().zip(&rc) {
            prop_assert_eq!(dy.sub(*a, j), *b);
        }
        prop_assert!(nc.is_canonical());
        prop_assert_eq!(Pmf::from_values(&rc, dy).unwrap(), nc.clone());
        prop_assert_eq!(canonicalize(&fc, &nc), (fc.clone(), nc));
        if let Some(m) = m {
            prop_assert!(rc.iter().all(|v| (0..m as i64).contains(v)));
            prop_assert!(fc.iter().all(|(_, y)| (0..m as i64).contains(&y)));
        }
    }
}
