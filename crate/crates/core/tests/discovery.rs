mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sepset_bandit::discovery::{
    discover, discover_with_alpha, g2_from_strata, g2_test, should_rerun, SepSetCatalog, Table, VarSpec,
};
use sepset_bandit::scm::make_game_env;
use sepset_bandit::special::{chi2_sf, gamma_q};
use sepset_bandit::{Arm, Dag, Dataset, DiscreteScm, Environment, Schema};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn chi2_matches_reference_implementation() {
    for df in [1usize, 2, 3, 4, 7, 10, 16, 25, 60, 200] {
        let reference = ChiSquared::new(df as f64).unwrap();
        for k in 0..200 {
            let x = 0.05 * k as f64 * (df as f64).sqrt() + 1e-3;
            let expected = reference.sf(x);
            if expected < 1e-280 {
                continue;
            }
            let got = chi2_sf(x, df);
            assert!(((got - expected) / expected).abs() < 1e-10, "df {df} x {x}: {got} vs {expected}");
        }
    }
}

#[test]
fn upper_gamma_far_tail_keeps_relative_accuracy() {
    // Q(1, x) = exp(-x)
    for x in [50.0, 200.0, 600.0] {
        let q = gamma_q(1.0, x);
        assert!(((q - (-x).exp()) / (-x).exp()).abs() < 1e-10);
    }
}

proptest! {
    #[test]
    fn statistic_is_symmetric(table in prop::collection::vec(0u64..40, 6), strata in 1usize..4) {
        let strata: Vec<Table> = (0..strata)
            .map(|k| Table { rows: 2, cols: 3, counts: table.iter().map(|c| (c + k as u64 * 7) % 40).collect() })
            .collect();
        let transposed: Vec<Table> = strata
            .iter()
            .map(|t| Table { rows: 3, cols: 2, counts: (0..6).map(|i| t.counts[(i % 2) * 3 + i / 2]).collect() })
            .collect();
        let a = g2_from_strata(&strata);
        let b = g2_from_strata(&transposed);
        prop_assert!((a.statistic - b.statistic).abs() < 1e-9 * (1.0 + a.statistic));
        prop_assert_eq!(a.df, b.df);
        prop_assert!((0.0..=1.0).contains(&a.p_value));
    }

    #[test]
    fn larger_level_accepts_a_subset(seed in any::<u64>(), a1 in 0.0f64..0.5, gap in 0.0f64..0.5) {
        let d = uniform_game(400, seed);
        let small = discover_with_alpha(&d, 3, a1).unwrap();
        let large = discover_with_alpha(&d, 3, a1 + gap).unwrap();
        prop_assert!(large.accepted.iter().all(|s| small.accepted.contains(s)));
    }
}

fn uniform_game(n: usize, seed: u64) -> Dataset {
    let env = make_game_env();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Dataset::new(Arc::new(Schema::for_environment(&env)));
    for _ in 0..n {
        let a = rng.random_range(0..9);
        d.append(a, &env.scm.sample(&env.arms[a], &mut rng)).unwrap();
    }
    d
}

fn xy_env(p_y_given_x: [f64; 2]) -> Environment {
    let g = Dag::from_names(&["X", "Y"], &[("X", "Y")], &[], "Y").unwrap();
    let cpt = vec![vec![0.5, 0.5], vec![1.0 - p_y_given_x[0], p_y_given_x[0], 1.0 - p_y_given_x[1], p_y_given_x[1]]];
    Environment::new("xy", DiscreteScm::new(g, vec![2, 2], cpt).unwrap()).unwrap()
}

#[test]
fn deterministic_copy_is_maximally_dependent() {
    let env = xy_env([0.0, 1.0]);
    let mut d = Dataset::new(Arc::new(Schema::for_environment(&env)));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        d.append(0, &env.scm.sample(&Arm::new(vec![]), &mut rng)).unwrap();
    }
    let r = g2_test(&d, VarSpec::Node(0), VarSpec::Node(1), &[]).unwrap();
    assert!(r.p_value < 1e-9);
    assert_eq!(r.df, 1);
}

#[test]
fn null_p_values_are_not_too_small() {
    let env = xy_env([0.5, 0.5]);
    let reps = 4000;
    let mut p: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + r as u64);
            let mut d = Dataset::new(Arc::new(Schema::for_environment(&env)));
            for _ in 0..2000 {
                d.append(0, &env.scm.sample(&Arm::new(vec![]), &mut rng)).unwrap();
            }
            g2_test(&d, VarSpec::Node(0), VarSpec::Node(1), &[]).unwrap().p_value
        })
        .collect();
    p.sort_by(f64::total_cmp);
    let excess = p.iter().enumerate().map(|(i, &u)| (i + 1) as f64 / reps as f64 - u).fold(0.0, f64::max);
    assert!(excess <= 0.05, "one-sided KS distance {excess}");
}

#[test]
fn chain_rejects_the_empty_set() {
    let g = Dag::from_names(&["I", "X", "Y"], &[("I", "X"), ("X", "Y")], &["I"], "Y").unwrap();
    let scm = DiscreteScm::new(g, vec![3, 2, 2], vec![vec![], vec![0.5, 0.5], vec![0.9, 0.1, 0.1, 0.9]]).unwrap();
    let env = Environment::new("chain", scm).unwrap();
    let mut d = Dataset::new(Arc::new(Schema::for_environment(&env)));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..3000 {
        let a = rng.random_range(0..3);
        d.append(a, &env.scm.sample(&env.arms[a], &mut rng)).unwrap();
    }
    let c = discover(&d, 1).unwrap();
    assert!(!c.accepted.contains(&vec![]));
}

#[test]
fn rerun_cadence_is_logarithmic() {
    let mut c = SepSetCatalog::empty();
    let mut runs = 0;
    for n in 1..=1_000_000usize {
        if should_rerun(&c, n) {
            runs += 1;
            c.last_run_n = Some(n);
        }
    }
    // log_{1.25}(10^6) ≈ 62
    assert!((55..=75).contains(&runs), "{runs}");
}
