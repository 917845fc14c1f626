#![allow(dead_code)]

use dualitylab::market::Branch;
use dualitylab::{
    build_example_market, build_tree, ExampleMarketSpec, Limits, MarketModel64, TreeSpec, UtilityField64,
};

pub fn example(p: &[f64]) -> MarketModel64 {
    build_example_market(&ExampleMarketSpec::new(p.to_vec()).unwrap(), &Limits::default()).unwrap()
}

fn branching(periods: usize, branches: &[(f64, &[f64])], s0: &[f64]) -> TreeSpec<f64> {
    let br: Vec<Branch<f64>> = branches.iter().map(|&(prob, f)| Branch { prob, factors: f.to_vec() }).collect();
    TreeSpec::branching(periods, &br, s0)
}

pub fn bond_only() -> MarketModel64 {
    build_tree(&branching(1, &[(0.5, &[]), (0.5, &[])], &[]), &Limits::default()).unwrap()
}

/// Two periods, one stock moving by 1.2 or 0.9.
pub fn two_period_spec() -> TreeSpec<f64> {
    branching(2, &[(0.55, &[1.2]), (0.45, &[0.9])], &[1.0])
}

/// Two periods of a trinomial step in two correlated assets.
pub fn trinomial_two_assets() -> MarketModel64 {
    let spec = branching(2, &[(0.3, &[1.2, 1.1]), (0.4, &[0.95, 1.05]), (0.3, &[1.0, 0.8])], &[1.0, 2.0]);
    build_tree(&spec, &Limits::default()).unwrap()
}

/// Equal consumption at both dates.
pub fn uniform_clock() -> MarketModel64 {
    build_tree(&two_period_spec().with_clock_by_time(&[0.0, 0.5, 0.5], 1.0), &Limits::default()).unwrap()
}

/// State-dependent clock: the second period meters faster after a rise.
pub fn stochastic_clock() -> MarketModel64 {
    let mut spec = two_period_spec().with_clock_by_time(&[0.0, 1.0, 0.25], 2.0);
    for node in spec.nodes.clone() {
        if node.t == 2 && node.parent == Some(1) {
            spec.clock.insert(node.id, 0.75);
        }
    }
    build_tree(&spec, &Limits::default()).unwrap()
}

pub fn corpus() -> Vec<(&'static str, MarketModel64)> {
    vec![
        ("bond only", bond_only()),
        ("one-period, 1 asset", example(&[0.6])),
        ("one-period, 2 assets", example(&[0.55, 0.7])),
        ("one-period, 3 assets", example(&[0.5, 0.6, 0.7])),
        ("two-period trinomial, 2 assets", trinomial_two_assets()),
        ("two-period, uniform clock", uniform_clock()),
        ("two-period, stochastic clock", stochastic_clock()),
    ]
}

pub fn families() -> Vec<(&'static str, UtilityField64)> {
    vec![
        ("log", UtilityField64::log()),
        ("power 0.5", UtilityField64::power(0.5).unwrap()),
        ("bounded 0.5/1.5", UtilityField64::bounded(0.5, 1.5).unwrap()),
    ]
}
