//! Numerical checks of the duality relations between the primal and dual
//! value functions, the superreplication duality and the large-market
//! limits, plus the portfolio study on the independent-binomial market.

mod conjugacy;
mod convergence;
mod example;
mod relations;
mod superrep;

pub use conjugacy::{
    conjugacy_check, conjugate_pair_at_x, conjugate_pair_at_y, ConjugacyReport, PairGap,
};
pub use convergence::{value_convergence_study, ConvergenceReport, ConvergenceStudy, SandwichPoint, ValueCurves};
pub use example::{example_portfolio_study, ExampleReport, ExampleRow};
pub use relations::{optimality_relations_check, paired_solutions, RelationsReport};
pub use superrep::{dual_superrep_price, superreplication_price, DualSuperreplication, Superreplication};

use thiserror::Error;

use crate::barrier::{SolveError, SolverOptions};
use crate::market::{MarketModel, ModelError};
use crate::primal::solve_primal;
use crate::scalar::Real;
use crate::utility::UtilityField;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("linear program {0}")]
    LinearProgram(String),
}

/// Default grid: 16 log-spaced points in `[1e-2, 1e2]`.
pub const DEFAULT_GRID: (f64, f64, usize) = (1e-2, 1e2, 16);

/// `points` log-spaced values from `min` to `max` inclusive.
pub fn log_grid<T: Real>(min: T, max: T, points: usize) -> Result<Vec<T>, HarnessError> {
    if !(min > T::zero() && max > min && max.is_finite()) || points < 2 {
        return Err(HarnessError::Grid(format!("need 0 < min < max and at least 2 points, got [{min}, {max}] x {points}")));
    }
    let (lo, hi) = (min.ln(), max.ln());
    let last = T::from_usize(points - 1).expect("count");
    Ok((0..points)
        .map(|i| {
            if i == 0 {
                min
            } else if i + 1 == points {
                max
            } else {
                (lo + (hi - lo) * T::from_usize(i).expect("count") / last).exp()
            }
        })
        .collect())
}

/// Relative step of the centered differences used for `u'`.
pub const DERIVATIVE_STEP: f64 = 1e-4;

/// `u'(x)` by centered differences of the primal value.
pub fn primal_slope<T: Real>(
    model: &MarketModel<T>,
    field: &UtilityField<T>,
    x: T,
    opts: &SolverOptions<T>,
) -> Result<T, SolveError> {
    let h = T::of(DERIVATIVE_STEP) * x;
    let up = solve_primal(model, field, x + h, opts)?.value;
    let down = solve_primal(model, field, x - h, opts)?.value;
    Ok((up - down) / (T::two() * h))
}

/// Largest amount by which the maximum of a concave function over the hull
/// of `xs` can exceed its best sample, from the tangents at neighbouring
/// samples. `None` when the slopes say the maximum lies outside the grid.
pub(crate) fn concave_resolution<T: Real>(xs: &[T], g: &[T], dg: &[T]) -> Option<(usize, T)> {
    let best = (0..g.len()).fold(0, |b, i| if g[i] > g[b] { i } else { b });
    let last = xs.len() - 1;
    if (best == 0 && dg[0] < T::zero()) || (best == last && dg[last] > T::zero()) {
        return None;
    }
    let mut bound = g[best];
    for (a, b) in [(best.wrapping_sub(1), best), (best, best + 1)] {
        if a > last || b > last {
            continue;
        }
        bound = bound.max(tangent_cap(xs[a], g[a], dg[a], xs[b], g[b], dg[b]));
    }
    Some((best, bound - g[best]))
}

/// Upper bound on a concave function on `[a, b]` from its two end tangents.
fn tangent_cap<T: Real>(a: T, ga: T, da: T, b: T, gb: T, db: T) -> T {
    if da <= T::zero() {
        return ga;
    }
    if db >= T::zero() {
        return gb;
    }
    let s = (gb - ga + da * a - db * b) / (da - db);
    let s = s.max(a).min(b);
    (ga + da * (s - a)).min(gb + db * (s - b))
}
