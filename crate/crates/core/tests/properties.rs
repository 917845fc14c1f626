use dualitylab::dual::is_arbitrage_free;
use dualitylab::harness::superreplication_price;
use dualitylab::market::Branch;
use dualitylab::primal::wealth_path;
use dualitylab::utility::conjugate;
use dualitylab::{
    build_example_market, build_tree, solve_dual, solve_primal, ExampleMarketSpec, Limits, MarketModel64, SolverOptions64,
    TreeSpec, UtilityField64,
};
use proptest::prelude::*;
use std::collections::BTreeMap;

fn opts() -> SolverOptions64 {
    SolverOptions64::default()
}

/// Random one-asset tree with an up and a down branch (and sometimes a
/// middle one), so it is free of arbitrage by construction.
fn random_tree() -> impl Strategy<Value = MarketModel64> {
    (1usize..=3, 1.05f64..1.6, 0.55f64..0.95, 0.2f64..0.8, proptest::option::of(0.95f64..1.05)).prop_map(
        |(periods, up, down, p, mid)| {
            let mut br = vec![Branch { prob: p, factors: vec![up] }, Branch { prob: 1.0 - p, factors: vec![down] }];
            if let Some(m) = mid {
                br[0].prob *= 0.7;
                br[1].prob *= 0.7;
                br.push(Branch { prob: 0.3, factors: vec![m] });
            }
            build_tree(&TreeSpec::branching(periods, &br, &[1.0]), &Limits::default()).unwrap()
        },
    )
}

fn random_family() -> impl Strategy<Value = UtilityField64> {
    prop_oneof![
        Just(UtilityField64::log()),
        (0.2f64..0.8).prop_map(|g| UtilityField64::power(g).unwrap()),
        (0.3f64..0.9, 1.1f64..2.0).prop_map(|(a, b)| UtilityField64::bounded(a, b).unwrap()),
    ]
}

/// Strictly increasing probabilities in `(1/2, 1)`.
fn example_probs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    (0.5f64..0.6, proptest::collection::vec(0.01f64..0.08, n - 1)).prop_map(|(start, gaps)| {
        std::iter::once(start)
            .chain(gaps.iter().scan(start, |p, g| {
                *p += g;
                Some(*p)
            }))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn leaf_probabilities_sum_to_one(m in random_tree()) {
        let tr = m.tree();
        let total: f64 = tr.leaves().iter().map(|&k| tr.prob(k)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for &k in tr.order() {
            if !tr.is_leaf(k) {
                let s: f64 = tr.children(k).iter().map(|&j| tr.transition_prob(j)).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn example_assets_are_uncorrelated(p in example_probs(4)) {
        let m = build_example_market(&ExampleMarketSpec::new(p.clone()).unwrap(), &Limits::default()).unwrap();
        let tr = m.tree();
        let mean = |i: usize| tr.leaves().iter().map(|&k| tr.prob(k) * m.assets().prices(k)[i]).sum::<f64>();
        for i in 0..4 {
            prop_assert!((mean(i) - (0.5 + 1.5 * p[i])).abs() < 1e-12);
            for j in i + 1..4 {
                let cross: f64 = tr.leaves().iter().map(|&k| {
                    let s = m.assets().prices(k);
                    tr.prob(k) * s[i] * s[j]
                }).sum();
                prop_assert!((cross - mean(i) * mean(j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn more_assets_never_lower_the_value(p in example_probs(4), x in 0.3f64..3.0) {
        let m = build_example_market(&ExampleMarketSpec::new(p).unwrap(), &Limits::default()).unwrap();
        let f = UtilityField64::bounded(0.5, 1.1).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for n in 0..=4 {
            let u = solve_primal(&m.truncate(n).unwrap(), &f, x, &opts()).unwrap().value;
            prop_assert!(u >= prev - 1e-7, "n = {n}: {u} < {prev}");
            prev = u;
        }
    }

    #[test]
    fn fenchel_young(f in random_family(), x in 1e-2f64..1e2, y in 1e-2f64..1e2) {
        let v = conjugate(&f);
        let u = f.eval_utility(1, x).unwrap();
        prop_assert!(v.value(1, y) >= u - x * y - 1e-9 * (1.0 + u.abs() + x * y));
        let yx = f.marginal(1, x).unwrap();
        let gap = v.value(1, yx) - (u - x * yx);
        prop_assert!(gap.abs() <= 1e-9 * (1.0 + u.abs() + x * yx), "gap {gap}");
    }

    #[test]
    fn weighted_conjugate_rescales(f in random_family(), w in 0.1f64..5.0, y in 1e-2f64..1e2) {
        let weighted = f.clone().with_weights(BTreeMap::from([(1, w)])).unwrap();
        let lhs = conjugate(&weighted).value(1, y);
        let rhs = w * conjugate(&f).value(1, y / w);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn optimal_plan_is_admissible(m in random_tree(), f in random_family(), x in 0.2f64..5.0) {
        let sol = solve_primal(&m, &f, x, &opts()).unwrap();
        let w = wealth_path(&m, &sol.holdings, &sol.consumption, x);
        for (a, b) in w.iter().zip(&sol.wealth) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
        prop_assert!(w.iter().all(|&v| v >= -1e-9 * x));
        prop_assert!(sol.consumption.iter().all(|&c| c >= 0.0));
    }

    #[test]
    fn weak_duality(m in random_tree(), f in random_family(), x in 0.2f64..5.0, y in 0.2f64..5.0) {
        let u = solve_primal(&m, &f, x, &opts()).unwrap().value;
        let v = solve_dual(&m, &f, y, &opts()).unwrap().value;
        prop_assert!(u <= v + x * y + 1e-7 * (1.0 + u.abs()), "u {u} v {v}");
    }

    #[test]
    fn budget_is_a_supermartingale(m in random_tree(), f in random_family(), x in 0.2f64..5.0, y in 0.2f64..5.0) {
        let tr = m.tree();
        let p = solve_primal(&m, &f, x, &opts()).unwrap();
        let d = solve_dual(&m, &f, y, &opts()).unwrap();
        let terminal: f64 = tr.leaves().iter().map(|&k| tr.prob(k) * d.z[k] * p.wealth[k]).sum();
        let consumed: f64 = (0..tr.len()).map(|k| tr.prob(k) * d.z[k] * p.consumption[k] * m.clock().increment(k)).sum();
        prop_assert!(terminal + consumed <= x * (1.0 + 1e-7));
    }

    #[test]
    fn log_value_shifts_under_scaling(m in random_tree(), x in 0.2f64..5.0, lambda in 0.2f64..5.0) {
        let f = UtilityField64::log();
        let a = solve_primal(&m, &f, x, &opts()).unwrap().value;
        let b = solve_primal(&m, &f, lambda * x, &opts()).unwrap().value;
        let shift = lambda.ln() * m.expected_clock();
        prop_assert!((b - a - shift).abs() < 1e-6, "{b} - {a} vs {shift}");
    }

    #[test]
    fn superreplication_is_positively_homogeneous(
        m in random_tree(),
        payoff in proptest::collection::vec(0.0f64..2.0, 40),
        lambda in 0.1f64..10.0,
    ) {
        prop_assume!(is_arbitrage_free(&m));
        let tr = m.tree();
        let claim: Vec<f64> = (0..tr.len()).map(|k| if tr.is_leaf(k) { payoff[k % payoff.len()] } else { 0.0 }).collect();
        let scaled: Vec<f64> = claim.iter().map(|c| lambda * c).collect();
        let a = superreplication_price(&m, &claim).unwrap().price;
        let b = superreplication_price(&m, &scaled).unwrap().price;
        prop_assert!((b - lambda * a).abs() <= 1e-8 * (1.0 + b.abs()));
    }
}
