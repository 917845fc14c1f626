use rayon::prelude::*;
use serde::Serialize;

use super::HarnessError;
use crate::barrier::SolverOptions;
use crate::market::{build_example_market, ExampleMarketSpec, Limits};
use crate::primal::solve_primal;
use crate::scalar::Real;
use crate::utility::{Utility, UtilityFamily, UtilityField};

/// Tolerances of the portfolio checks.
pub const CHAIN_TOL: f64 = 1e-7;
pub const BOUND_TOL: f64 = 1e-6;
pub const SIGN_TOL: f64 = 1e-7;
pub const MARGIN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleRow {
    pub n: usize,
    /// `h^N_i` for `i = 0..=N`; index 0 is the bond.
    pub holdings: Vec<f64>,
    /// `1 / (N - i + 1)` for `i = 1..=N` (index 0 unused, set to infinity).
    pub bounds: Vec<f64>,
    pub value: f64,
    /// `u^N(1) - U(1)`
    pub margin: f64,
    pub kkt_residual: f64,
    /// `max_i (h_i - h_{i+1})` over stocks; nonpositive when ordered.
    pub worst_chain: f64,
    /// `max_i (h_i - 1/(N-i+1))` over stocks.
    pub worst_bound: f64,
    /// Smallest stock holding.
    pub min_stock: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleReport {
    pub p: Vec<f64>,
    pub threshold: f64,
    /// `U(1)`, the value of holding only the bond.
    pub u_at_one: f64,
    pub tol: f64,
    pub rows: Vec<ExampleRow>,
    pub chain_ok: bool,
    pub bounds_ok: bool,
    pub nonnegative_ok: bool,
    /// `h_1` at the largest N below a third of its value at the smallest.
    pub decay_ok: bool,
    /// Every margin at least the first one (minus slack) and positive.
    pub margin_ok: bool,
    pub converged_ok: bool,
    /// Sizes N whose optimal bond position is negative.
    pub negative_bond: Vec<usize>,
}

impl ExampleReport {
    pub fn passed(&self) -> bool {
        self.chain_ok && self.bounds_ok && self.nonnegative_ok && self.decay_ok && self.margin_ok && self.converged_ok
    }

    /// `h^N_i` across the computed N for a fixed stock `i >= 1`.
    pub fn trend(&self, i: usize) -> Vec<(usize, f64)> {
        self.rows.iter().filter(|r| i < r.holdings.len()).map(|r| (r.n, r.holdings[i])).collect()
    }

    /// Long-format rows `(N, i, holding, bound, value)`.
    pub fn long_rows(&self) -> Vec<(usize, usize, f64, f64, f64)> {
        self.rows
            .iter()
            .flat_map(|r| (0..r.holdings.len()).map(move |i| (r.n, i, r.holdings[i], r.bounds[i], r.value)))
            .collect()
    }
}

/// Solves the truncated independent-binomial market for every `N` in
/// `sizes` at initial wealth 1 and checks the ordering, sign and size of
/// the optimal holdings together with the gap to the bond-only value.
pub fn example_portfolio_study<T: Real>(
    spec: &ExampleMarketSpec<T>,
    field: &UtilityField<T>,
    sizes: &[usize],
    opts: &SolverOptions<T>,
    limits: &Limits,
) -> Result<ExampleReport, HarnessError> {
    if !matches!(field.family(), UtilityFamily::Bounded { .. }) {
        return Err(HarnessError::Precondition("the study needs a bounded utility".into()));
    }
    let p = spec.probabilities();
    if p.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::Precondition("probabilities must be strictly increasing".into()));
    }
    let threshold = field.example_threshold();
    let third = T::one() / T::of(3.0);
    if !(p[0] > threshold && p[0] > third) {
        return Err(HarnessError::Precondition(format!(
            "p_1 = {} must exceed max({threshold}, 1/3)",
            p[0]
        )));
    }
    let max_n = sizes.iter().copied().max().ok_or_else(|| HarnessError::Precondition("no market sizes".into()))?;
    if sizes.contains(&0) || sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::Precondition("sizes must be positive and strictly increasing".into()));
    }
    let market = build_example_market(&spec.prefix(max_n)?, limits)?;
    let u1 = field.value(0, T::one());
    let rows = sizes
        .par_iter()
        .map(|&n| -> Result<ExampleRow, HarnessError> {
            let m = market.truncate(n)?;
            let sol = solve_primal(&m, field, T::one(), opts)?;
            let stocks: Vec<f64> = sol.holdings[0].iter().map(|h| h.to_f64_lossy()).collect();
            let mut holdings = vec![sol.bond_holding(&m, 0).to_f64_lossy()];
            holdings.extend(&stocks);
            let mut bounds = vec![f64::INFINITY];
            bounds.extend((1..=n).map(|i| 1.0 / (n - i + 1) as f64));
            let worst_chain = stocks.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
            let worst_bound = (1..=n).map(|i| holdings[i] - bounds[i]).fold(f64::NEG_INFINITY, f64::max);
            Ok(ExampleRow {
                n,
                min_stock: stocks.iter().copied().fold(f64::INFINITY, f64::min),
                holdings,
                bounds,
                value: sol.value.to_f64_lossy(),
                margin: (sol.value - u1).to_f64_lossy(),
                kkt_residual: sol.kkt_residual.to_f64_lossy(),
                worst_chain: if n > 1 { worst_chain } else { 0.0 },
                worst_bound,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let tol = opts.tol.to_f64_lossy();
    let first = &rows[0];
    let last = &rows[rows.len() - 1];
    Ok(ExampleReport {
        p: p.iter().take(max_n).map(|v| v.to_f64_lossy()).collect(),
        threshold: threshold.to_f64_lossy(),
        u_at_one: u1.to_f64_lossy(),
        tol,
        chain_ok: rows.iter().all(|r| r.worst_chain <= CHAIN_TOL),
        bounds_ok: rows.iter().all(|r| r.worst_bound <= BOUND_TOL),
        nonnegative_ok: rows.iter().all(|r| r.min_stock >= -SIGN_TOL),
        decay_ok: rows.len() > 1 && last.holdings[1] < first.holdings[1] / 3.0,
        margin_ok: first.margin > 0.0 && rows.iter().all(|r| r.margin >= first.margin - MARGIN_TOL),
        // the barrier stops one factor of ten past the target at most
        converged_ok: rows.iter().all(|r| r.kkt_residual <= tol * (1.0 + 1e-6)),
        negative_bond: rows.iter().filter(|r| r.holdings[0] < 0.0).map(|r| r.n).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> UtilityField<f64> {
        UtilityField::bounded(0.5, 1.1).unwrap()
    }

    #[test]
    fn single_stock_is_bought() {
        let spec = ExampleMarketSpec::new(vec![0.6]).unwrap();
        let rep = example_portfolio_study(&spec, &field(), &[1], &SolverOptions::default(), &Limits::default()).unwrap();
        let h = rep.rows[0].holdings[1];
        assert!(h > 0.0 && h <= 1.0);
        assert!(rep.rows[0].margin > 0.0);
    }

    #[test]
    fn holdings_follow_expected_returns() {
        let spec = ExampleMarketSpec::new(vec![0.5, 0.6, 0.7, 0.8]).unwrap();
        let rep = example_portfolio_study(&spec, &field(), &[4], &SolverOptions::default(), &Limits::default()).unwrap();
        assert!(rep.chain_ok && rep.nonnegative_ok, "{:?}", rep.rows[0]);
        assert_eq!(rep.long_rows().len(), 5);
    }

    #[test]
    fn preconditions_are_enforced() {
        let opts = SolverOptions::default();
        let limits = Limits::default();
        let low = ExampleMarketSpec::new(vec![0.4, 0.6]).unwrap();
        assert!(matches!(
            example_portfolio_study(&low, &field(), &[1, 2], &opts, &limits),
            Err(HarnessError::Precondition(_))
        ));
        let good = ExampleMarketSpec::new(vec![0.6, 0.7]).unwrap();
        assert!(example_portfolio_study(&good, &UtilityField::log(), &[1], &opts, &limits).is_err());
        assert!(ExampleMarketSpec::new(vec![0.7, 0.6]).is_err());
    }
}
