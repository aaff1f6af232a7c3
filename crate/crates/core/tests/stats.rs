use discrete_anm::stats::{
    chi_square_sf, chi_square_test, cochran_ok, contingency_table, dependence_measure, fisher_exact_mc,
    independence_test, ContingencyTable, DependenceScore, TestConfig, TestMethod,
};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn table(rows: &[&[u64]]) -> ContingencyTable {
    let r: Vec<i64> = (0..rows.len() as i64).collect();
    let c: Vec<i64> = (0..rows[0].len() as i64).collect();
    let flat: Vec<u64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    ContingencyTable::from_counts(&r, &c, &flat).unwrap()
}

fn reference_sf(stat: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64).unwrap().sf(stat)
}

#[test]
fn tally_and_order_invariance() {
    let t = contingency_table(&[0, 0, 1], &[5, 5, 7]).unwrap();
    assert_eq!(t.counts(), &[2, 0, 0, 1]);
    let t2 = contingency_table(&[1, 0, 0], &[7, 5, 5]).unwrap();
    assert_eq!(t, t2);
    assert_eq!(contingency_table(&[3, 3], &[1, 2]).unwrap().n_rows(), 1);
}

#[test]
fn chi_square_fixed_tables() {
    let r = chi_square_test(&table(&[&[5, 5], &[5, 5]]));
    assert_eq!((r.statistic, r.dof, r.p_value), (0.0, 1, 1.0));

    let r = chi_square_test(&table(&[&[10, 20], &[20, 10]]));
    assert!((r.statistic - 20.0 / 3.0).abs() < 1e-12);
    assert_eq!(r.dof, 1);
    assert!((r.p_value - reference_sf(20.0 / 3.0, 1)).abs() < 1e-10);
    assert!((r.p_value - 0.00982).abs() < 5e-6);

    let r = chi_square_test(&table(&[&[4, 8], &[2, 4]]));
    assert!(r.statistic.abs() < 1e-12);
    assert!((r.p_value - 1.0).abs() < 1e-12);
}

#[test]
fn chi_square_tail_matches_reference() {
    for dof in [1usize, 2, 3, 5, 8, 17, 40, 99] {
        for &x in &[0.01, 0.5, 1.0, 3.0, 7.5, 20.0, 60.0, 150.0, 400.0] {
            let ours = chi_square_sf(x, dof);
            let theirs = reference_sf(x, dof);
            let rel = (ours - theirs).abs() / theirs.max(1e-300);
            assert!(
                rel < 1e-8 || (ours - theirs).abs() < 1e-15,
                "dof {dof} x {x}: {ours} vs {theirs}"
            );
        }
    }
}

#[test]
fn cochran_examples() {
    assert!(cochran_ok(&table(&[&[100, 100], &[100, 100]])));
    assert!(!cochran_ok(&table(&[&[1, 1], &[1, 1]])));
    let u: Vec<i64> = (0..50).map(|i| i % 10).collect();
    let v: Vec<i64> = (0..50).map(|i| (i * 3 + i / 10) % 10).collect();
    assert!(!cochran_ok(&contingency_table(&u, &v).unwrap()));
}

/// Exact conditional p-value of a 2×2 table: mass of all tables with the
/// same margins whose χ² statistic is at least the observed one.
fn exact_2x2(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let n = r1 + r2;
    let ln_choose = |n: u64, k: u64| -> f64 { (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum() };
    let stat = |a: u64| {
        let t = table(&[&[a, r1 - a], &[c1 - a, r2 - (c1 - a)]]);
        chi_square_test(&t).statistic
    };
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let obs = stat(a);
    (lo..=hi)
        .filter(|&k| stat(k) >= obs - 1e-9)
        .map(|k| (ln_choose(r1, k) + ln_choose(r2, c1 - k) - ln_choose(n, c1)).exp())
        .sum()
}

#[test]
fn fisher_matches_enumeration_on_symmetric_table() {
    let t = table(&[&[9, 1], &[1, 9]]);
    let exact = exact_2x2(9, 1, 1, 9);
    let r = fisher_exact_mc(&t, 10_000, 3);
    let se = (exact * (1.0 - exact) / 10_000.0).sqrt();
    assert!((r.p_value - exact).abs() <= 3.0 * se, "{} vs {exact}", r.p_value);
    assert_eq!(r.method, TestMethod::FisherMc);
}

#[test]
fn fisher_outer_product_and_determinism() {
    let t = table(&[&[2, 4], &[3, 6]]);
    assert!(fisher_exact_mc(&t, 2000, 1).p_value >= 0.95);
    let t = table(&[&[3, 1, 0], &[0, 2, 5]]);
    assert_eq!(fisher_exact_mc(&t, 2000, 9), fisher_exact_mc(&t, 2000, 9));
}

#[test]
fn dispatch_rule() {
    let cfg = TestConfig::default();
    let u: Vec<i64> = (0..400).map(|i| i % 2).collect();
    let v: Vec<i64> = (0..400).map(|i| (i / 2) % 2).collect();
    assert_eq!(independence_test(&u, &v, &cfg).unwrap().method, TestMethod::ChiSquare);

    let u: Vec<i64> = (0..30).map(|i| i % 8).collect();
    let v: Vec<i64> = (0..30).map(|i| (i * 5 + i / 8) % 8).collect();
    assert_eq!(independence_test(&u, &v, &cfg).unwrap().method, TestMethod::FisherMc);

    let r = independence_test(&u, &vec![4; 30], &cfg).unwrap();
    assert_eq!(r.p_value, 1.0);
}

#[test]
fn score_order_contract() {
    let p = 1e-12;
    assert!(DependenceScore::new(0.7, 1.0, p) < DependenceScore::new(0.3, 2.0, p));
    assert!(DependenceScore::new(1e-20, 40.0, p) < DependenceScore::new(1e-30, 90.0, p));
    assert!(DependenceScore::new(1e-6, 50.0, p) < DependenceScore::new(0.0, 1.0, p));
    let u: Vec<i64> = (0..100).map(|i| i % 3).collect();
    let s = dependence_measure(&u, &u, &TestConfig::default()).unwrap();
    assert!(s.underflow);
}

fn table_strategy() -> impl Strategy<Value = (usize, usize, Vec<u64>)> {
    (2usize..5, 2usize..5).prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(1u64..30, r * c)))
}

proptest! {
    #[test]
    fn statistic_invariances((r, c, counts) in table_strategy(), rot in 0usize..4) {
        let rl: Vec<i64> = (0..r as i64).collect();
        let cl: Vec<i64> = (0..c as i64).collect();
        let t = ContingencyTable::from_counts(&rl, &cl, &counts).unwrap();
        let base = chi_square_test(&t);
        // transpose
        let tt = chi_square_test(&t.transposed());
        prop_assert!((base.statistic - tt.statistic).abs() <= 1e-9 * base.statistic.max(1.0));
        // rotate rows and columns
        let perm: Vec<u64> = (0..r)
            .flat_map(|i| {
                let counts = &counts;
                (0..c).map(move |j| counts[((i + rot) % r) * c + (j + rot) % c])
            })
            .collect();
        let tp = chi_square_test(&ContingencyTable::from_counts(&rl, &cl, &perm).unwrap());
        prop_assert!((base.statistic - tp.statistic).abs() <= 1e-9 * base.statistic.max(1.0));
        prop_assert!((0.0..=1.0).contains(&base.p_value));
    }

    #[test]
    fn outer_products_have_zero_statistic(a in prop::collection::vec(1u64..6, 2..5), b in prop::collection::vec(1u64..6, 2..5)) {
        let counts: Vec<u64> = a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)).collect();
        let rl: Vec<i64> = (0..a.len() as i64).collect();
        let cl: Vec<i64> = (0..b.len() as i64).collect();
        let t = ContingencyTable::from_counts(&rl, &cl, &counts).unwrap();
        prop_assert!(chi_square_test(&t).statistic < 1e-9);
    }

    #[test]
    fn p_value_is_monotone(dof in 1usize..30, x in 0.0f64..200.0, dx in 0.0f64..50.0) {
        prop_assert!(chi_square_sf(x + dx, dof) <= chi_square_sf(x, dof));
    }

    #[test]
    fn scores_are_totally_ordered(ps in prop::collection::vec((0.0f64..1.0, 0.0f64..500.0, any::<bool>()), 2..20)) {
        let mut scores: Vec<DependenceScore> = ps
            .into_iter()
            .map(|(p, s, tiny)| DependenceScore::new(if tiny { p * 1e-15 } else { p }, s, 1e-12))
            .collect();
        scores.sort();
        for w in scores.windows(2) {
            prop_assert!(w[0] <= w[1]);
            if !w[0].underflow && w[1].underflow {
                prop_assert!(w[0] < w[1]);
            }
        }
        let last_ok = scores.iter().rposition(|s| !s.underflow);
        let first_under = scores.iter().position(|s| s.underflow);
        if let (Some(a), Some(b)) = (last_ok, first_under) {
            prop_assert!(a < b);
        }
    }
}
