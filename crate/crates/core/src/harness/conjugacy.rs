use serde::Serialize;

use super::{concave_resolution, ValueCurves};
use crate::barrier::{SolveError, SolverOptions};
use crate::dual::solve_dual;
use crate::market::MarketModel;
use crate::primal::solve_primal;
use crate::scalar::Real;
use crate::utility::UtilityField;

/// Discrete conjugacy of sampled value curves at one truncation level.
///
/// The gaps are `v(y) - max_x (u(x) - x y)` and `min_y (v(y) + x y) - u(x)`
/// over the sampled grids; both are nonnegative by weak duality. Each is
/// allowed to exceed `tol` by the grid-resolution bound obtained from the
/// tangents at the neighbouring samples. Grid points whose optimiser lies
/// outside the other grid are counted as unresolved and skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugacyReport {
    pub level: usize,
    pub tol: f64,
    pub worst_v_gap: f64,
    pub worst_v_resolution: f64,
    pub worst_u_gap: f64,
    pub worst_u_resolution: f64,
    /// Largest `gap - resolution` over both sides.
    pub worst_excess: f64,
    /// Most negative gap (a weak-duality violation when below `-tol`).
    pub min_gap: f64,
    pub unresolved: usize,
    pub passed: bool,
}

pub fn conjugacy_check<T: Real>(curves: &ValueCurves<T>, level: usize, tol: T) -> ConjugacyReport {
    let (xs, ys) = (&curves.x_grid, &curves.y_grid);
    let (u, du, v, dv) = (&curves.u[level], &curves.du[level], &curves.v[level], &curves.dv[level]);
    let tol = tol.to_f64_lossy();
    let mut rep = ConjugacyReport {
        level: curves.levels[level],
        tol,
        worst_v_gap: 0.0,
        worst_v_resolution: 0.0,
        worst_u_gap: 0.0,
        worst_u_resolution: 0.0,
        worst_excess: f64::NEG_INFINITY,
        min_gap: f64::INFINITY,
        unresolved: 0,
        passed: true,
    };
    let record = |gap: T, res: T, v_side: bool, rep: &mut ConjugacyReport| {
        let (gap, res) = (gap.to_f64_lossy(), res.to_f64_lossy());
        rep.min_gap = rep.min_gap.min(gap);
        rep.worst_excess = rep.worst_excess.max(gap - res);
        let (g, r) = if v_side {
            (&mut rep.worst_v_gap, &mut rep.worst_v_resolution)
        } else {
            (&mut rep.worst_u_gap, &mut rep.worst_u_resolution)
        };
        if gap.abs() > g.abs() {
            *g = gap;
            *r = res;
        }
        if gap > tol + res || gap < -tol {
            rep.passed = false;
        }
    };
    for (j, &y) in ys.iter().enumerate() {
        let g: Vec<T> = xs.iter().zip(u).map(|(&x, &ux)| ux - x * y).collect();
        let dg: Vec<T> = du.iter().map(|&d| d - y).collect();
        match concave_resolution(xs, &g, &dg) {
            Some((best, res)) => record(v[j] - g[best], res, true, &mut rep),
            None => rep.unresolved += 1,
        }
    }
    for (i, &x) in xs.iter().enumerate() {
        // minimising the convex v(y) + x y is maximising its negative
        let g: Vec<T> = ys.iter().zip(v).map(|(&y, &vy)| -(vy + x * y)).collect();
        let dg: Vec<T> = dv.iter().map(|&d| -(d + x)).collect();
        match concave_resolution(ys, &g, &dg) {
            Some((best, res)) => record(-g[best] - u[i], res, false, &mut rep),
            None => rep.unresolved += 1,
        }
    }
    if rep.worst_excess == f64::NEG_INFINITY {
        rep.worst_excess = 0.0;
        rep.min_gap = 0.0;
    }
    rep
}

/// A conjugate pair evaluated off the grid: `gap = v(y) + x y - u(x)`,
/// which vanishes exactly when `y = u'(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairGap {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
    pub gap: f64,
}

fn pair<T: Real>(x: T, y: T, u: T, v: T) -> PairGap {
    PairGap { x: x.to_f64_lossy(), y: y.to_f64_lossy(), u: u.to_f64_lossy(), v: v.to_f64_lossy(), gap: (v + x * y - u).to_f64_lossy() }
}

/// Pairs `x` with `y = u'(x)` (from the optimal plan) and measures the gap.
pub fn conjugate_pair_at_x<T: Real>(
    model: &MarketModel<T>,
    field: &UtilityField<T>,
    x: T,
    opts: &SolverOptions<T>,
) -> Result<PairGap, SolveError> {
    let p = solve_primal(model, field, x, opts)?;
    let (u, y) = (p.value, p.marginal_value(model, field));
    let v = solve_dual(model, field, y, opts)?.value;
    Ok(pair(x, y, u, v))
}

/// Pairs `y` with `x = -v'(y)` (envelope formula) and measures the gap.
pub fn conjugate_pair_at_y<T: Real>(
    model: &MarketModel<T>,
    field: &UtilityField<T>,
    y: T,
    opts: &SolverOptions<T>,
) -> Result<PairGap, SolveError> {
    let dual = solve_dual(model, field, y, opts)?;
    let x = -dual.slope(model, field);
    let u = solve_primal(model, field, x, opts)?.value;
    Ok(pair(x, y, u, dual.value))
}
