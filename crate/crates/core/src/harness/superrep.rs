use super::HarnessError;
use crate::barrier::SolveError;
use crate::dual::{is_arbitrage_free, martingale_polytope};
use crate::linalg::Matrix;
use crate::lp::{LpOutcome, StandardLp};
use crate::market::MarketModel;
use crate::primal::wealth_path;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Superreplication<T> {
    pub price: T,
    /// Certifying holdings per node (empty at leaves).
    pub holdings: Vec<Vec<T>>,
    /// Wealth of the certifying strategy; nonnegative up to LP rounding.
    pub wealth: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSuperreplication<T> {
    pub value: T,
    /// Maximising density.
    pub z: Vec<T>,
}

fn check_claim<T: Real>(model: &MarketModel<T>, claim: &[T]) -> Result<(), HarnessError> {
    if claim.len() != model.tree().len() {
        return Err(HarnessError::Precondition(format!("claim covers {} nodes, tree has {}", claim.len(), model.tree().len())));
    }
    if let Some(k) = claim.iter().position(|&c| !(c >= T::zero() && c.is_finite())) {
        return Err(HarnessError::Precondition(format!("claim at node {k} is {} (must be finite and >= 0)", claim[k])));
    }
    Ok(())
}

fn lp_failure(what: &str) -> HarnessError {
    HarnessError::LinearProgram(what.to_string())
}

/// Least initial capital financing the consumption stream `claim` (a rate
/// per node, spent as `claim * dk`), with a certifying strategy. Under
/// arbitrage the program would price every claim at zero, so that case is
/// rejected up front.
pub fn superreplication_price<T: Real>(model: &MarketModel<T>, claim: &[T]) -> Result<Superreplication<T>, HarnessError> {
    check_claim(model, claim)?;
    if !is_arbitrage_free(model) {
        return Err(SolveError::Infeasible("the market admits arbitrage".into()).into());
    }
    let tr = model.tree();
    let n = model.n_active();
    let inner: Vec<usize> = (0..tr.len()).filter(|&k| !tr.is_leaf(k)).collect();
    let mut slot = vec![usize::MAX; tr.len()];
    for (s, &k) in inner.iter().enumerate() {
        slot[k] = s;
    }
    // columns: x+, x-, (h+, h-) per inner node and asset, one slack per node
    let hcol = |node: usize, i: usize, sign: usize| 2 + 2 * (slot[node] * n + i) + sign;
    let scol = 2 + 2 * inner.len() * n;
    let cols = scol + tr.len();
    let mut a = Matrix::zeros(tr.len(), cols);
    let mut b = vec![T::zero(); tr.len()];
    let mut spend = vec![T::zero(); tr.len()];
    for &k in tr.order() {
        let own = model.clock().increment(k) * claim[k];
        spend[k] = tr.parent(k).map_or(own, |p| spend[p] + own);
        a[(k, 0)] = T::one();
        a[(k, 1)] = -T::one();
        let path = tr.path(k);
        for w in path.windows(2) {
            let ds = model.price_increment(w[1]);
            for (i, &d) in ds.iter().enumerate() {
                a[(k, hcol(w[0], i, 0))] += d;
                a[(k, hcol(w[0], i, 1))] -= d;
            }
        }
        a[(k, scol + k)] = -T::one();
        b[k] = spend[k];
    }
    let mut cost = vec![T::zero(); cols];
    cost[0] = T::one();
    cost[1] = -T::one();
    match StandardLp::new(cost, a, b).solve() {
        LpOutcome::Optimal(sol) => {
            let price = sol.x[0] - sol.x[1];
            let holdings: Vec<Vec<T>> = (0..tr.len())
                .map(|k| {
                    if tr.is_leaf(k) {
                        Vec::new()
                    } else {
                        (0..n).map(|i| sol.x[hcol(k, i, 0)] - sol.x[hcol(k, i, 1)]).collect()
                    }
                })
                .collect();
            let padded: Vec<Vec<T>> =
                holdings.iter().map(|h| if h.is_empty() { vec![T::zero(); n] } else { h.clone() }).collect();
            let wealth = wealth_path(model, &padded, claim, price);
            Ok(Superreplication { price, holdings, wealth })
        }
        LpOutcome::Unbounded => Err(lp_failure("reported a price unbounded below")),
        LpOutcome::Infeasible => Err(lp_failure("reported infeasible")),
        LpOutcome::Stalled => Err(lp_failure("exhausted its pivot budget")),
    }
}

/// `sup_Z E[(claim Z) . kappa_T]` over the closed martingale polytope.
pub fn dual_superrep_price<T: Real>(model: &MarketModel<T>, claim: &[T]) -> Result<DualSuperreplication<T>, HarnessError> {
    check_claim(model, claim)?;
    let tr = model.tree();
    let poly = martingale_polytope(model);
    let mut a = Matrix::zeros(poly.rows().len(), tr.len());
    let mut b = vec![T::zero(); poly.rows().len()];
    for (r, row) in poly.rows().iter().enumerate() {
        for &(k, c) in &row.terms {
            a[(r, k)] += c;
        }
        b[r] = row.rhs;
    }
    let cost: Vec<T> = (0..tr.len()).map(|k| -(tr.prob(k) * model.clock().increment(k) * claim[k])).collect();
    match StandardLp::new(cost, a, b).solve() {
        LpOutcome::Optimal(sol) => Ok(DualSuperreplication { value: -sol.objective, z: sol.x }),
        LpOutcome::Infeasible => {
            Err(SolveError::Infeasible("no martingale density: the market admits arbitrage".into()).into())
        }
        LpOutcome::Unbounded => Err(lp_failure("reported an unbounded compact polytope")),
        LpOutcome::Stalled => Err(lp_failure("exhausted its pivot budget")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{build_example_market, build_tree, Branch, ExampleMarketSpec, Limits, TreeSpec};

    fn binomial() -> MarketModel<f64> {
        build_example_market(&ExampleMarketSpec::new(vec![0.6]).unwrap(), &Limits::default()).unwrap()
    }

    fn both(m: &MarketModel<f64>, claim: &[f64]) -> (f64, f64) {
        let p = superreplication_price(m, claim).unwrap();
        assert!(p.wealth.iter().all(|&w| w >= -1e-9), "{:?}", p.wealth);
        (p.price, dual_superrep_price(m, claim).unwrap().value)
    }

    #[test]
    fn worked_examples() {
        let bond = build_tree(
            &TreeSpec::branching(1, &[Branch { prob: 0.5, factors: vec![] }, Branch { prob: 0.5, factors: vec![] }], &[]),
            &Limits::default(),
        )
        .unwrap();
        let (p, d) = both(&bond, &[0.0, 1.0, 1.0]);
        assert!((p - 1.0).abs() < 1e-10 && (d - 1.0).abs() < 1e-10);

        // leaf 1 is down, leaf 2 is up
        let m = binomial();
        let (p, d) = both(&m, &[0.0, 0.5, 2.0]);
        assert!((p - 1.0).abs() < 1e-10 && (d - 1.0).abs() < 1e-10);
        let (p, d) = both(&m, &[0.0, 0.0, 1.0]);
        assert!((p - 1.0 / 3.0).abs() < 1e-10 && (d - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn prices_are_homogeneous() {
        let m = build_example_market(&ExampleMarketSpec::new(vec![0.5, 0.7]).unwrap(), &Limits::default()).unwrap();
        let claim = [0.0, 0.3, 1.0, 0.0, 2.0];
        let doubled: Vec<f64> = claim.iter().map(|c| 2.0 * c).collect();
        let (p1, d1) = both(&m, &claim);
        let (p2, d2) = both(&m, &doubled);
        assert!((p1 - d1).abs() < 1e-9);
        assert!((p2 - 2.0 * p1).abs() < 1e-9 && (d2 - 2.0 * d1).abs() < 1e-9);
    }

    #[test]
    fn arbitrage_breaks_both_programs() {
        let spec = TreeSpec::branching(
            1,
            &[Branch { prob: 0.5, factors: vec![2.0] }, Branch { prob: 0.5, factors: vec![1.5] }],
            &[1.0],
        );
        let m = build_tree(&spec, &Limits::default()).unwrap();
        let r = superreplication_price(&m, &[0.0, 1.0, 1.0]);
        assert!(matches!(r, Err(HarnessError::Solve(SolveError::Infeasible(_)))), "{r:?}");
        assert!(matches!(dual_superrep_price(&m, &[0.0, 1.0, 1.0]), Err(HarnessError::Solve(SolveError::Infeasible(_)))));
    }
}
