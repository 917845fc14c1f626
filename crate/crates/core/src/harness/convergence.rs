use rayon::prelude::*;
use serde::Serialize;

use super::{concave_resolution, HarnessError};
use crate::barrier::{SolveError, SolverOptions};
use crate::dual::solve_dual;
use crate::market::MarketModel;
use crate::primal::solve_primal;
use crate::scalar::Real;
use crate::utility::UtilityField;

/// Primal and dual value functions sampled on fixed grids, one row per
/// truncation level.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueCurves<T> {
    pub x_grid: Vec<T>,
    pub y_grid: Vec<T>,
    /// Number of tradable assets at each level.
    pub levels: Vec<usize>,
    pub u: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    /// Centered-difference estimates of `u'`.
    pub du: Vec<Vec<T>>,
    /// Envelope values `v'(y) = -E[Z I(y Z) dk]`.
    pub dv: Vec<Vec<T>>,
}

enum Task<T> {
    Primal(usize, T),
    Dual(usize, T),
}

impl<T: Real> ValueCurves<T> {
    /// Solves every (level, grid point) pair; parallel over the rayon pool
    /// of the caller, merged by index.
    pub fn sample(
        model: &MarketModel<T>,
        field: &UtilityField<T>,
        x_grid: &[T],
        y_grid: &[T],
        levels: &[usize],
        opts: &SolverOptions<T>,
    ) -> Result<Self, HarnessError> {
        for (name, g) in [("x", x_grid), ("y", y_grid)] {
            if g.is_empty() || g.iter().any(|&v| !(v > T::zero())) || g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(HarnessError::Grid(format!("{name}-grid must be nonempty, positive and strictly increasing")));
            }
        }
        if levels.is_empty() {
            return Err(HarnessError::Grid("no truncation levels".into()));
        }
        let models = levels.iter().map(|&n| model.truncate(n)).collect::<Result<Vec<_>, _>>()?;
        let mut tasks = Vec::new();
        for l in 0..levels.len() {
            tasks.extend(x_grid.iter().map(|&x| Task::Primal(l, x)));
            tasks.extend(y_grid.iter().map(|&y| Task::Dual(l, y)));
        }
        let out: Vec<(T, T)> = tasks
            .par_iter()
            .map(|task| -> Result<(T, T), SolveError> {
                match *task {
                    Task::Primal(l, x) => {
                        let p = solve_primal(&models[l], field, x, opts)?;
                        Ok((p.value, p.marginal_value(&models[l], field)))
                    }
                    Task::Dual(l, y) => {
                        let d = solve_dual(&models[l], field, y, opts)?;
                        Ok((d.value, d.slope(&models[l], field)))
                    }
                }
            })
            .collect::<Result<_, _>>()?;
        let (nx, ny) = (x_grid.len(), y_grid.len());
        let mut curves = Self {
            x_grid: x_grid.to_vec(),
            y_grid: y_grid.to_vec(),
            levels: levels.to_vec(),
            u: Vec::new(),
            v: Vec::new(),
            du: Vec::new(),
            dv: Vec::new(),
        };
        for chunk in out.chunks(nx + ny) {
            let (p, d) = chunk.split_at(nx);
            curves.u.push(p.iter().map(|r| r.0).collect());
            curves.du.push(p.iter().map(|r| r.1).collect());
            curves.v.push(d.iter().map(|r| r.0).collect());
            curves.dv.push(d.iter().map(|r| r.1).collect());
        }
        Ok(curves)
    }

    /// Long-format rows `(level, x or y, kind, value)` with kind one of
    /// `u`, `v`, `du`, `dv`.
    pub fn long_rows(&self) -> Vec<(usize, f64, &'static str, f64)> {
        let mut rows = Vec::new();
        for (l, &n) in self.levels.iter().enumerate() {
            for (kind, grid, vals) in [
                ("u", &self.x_grid, &self.u[l]),
                ("v", &self.y_grid, &self.v[l]),
                ("du", &self.x_grid, &self.du[l]),
                ("dv", &self.y_grid, &self.dv[l]),
            ] {
                rows.extend(grid.iter().zip(vals).map(|(&g, &v)| (n, g.to_f64_lossy(), kind, v.to_f64_lossy())));
            }
        }
        rows
    }
}

/// Weak-duality sandwich of the last level at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichPoint {
    pub x: f64,
    pub u: f64,
    /// `min_y (v(y) + x y)` over the y-grid.
    pub dual_min: f64,
    pub gap: f64,
    pub resolution: f64,
    /// The minimiser sits at the grid edge.
    pub unresolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub levels: Vec<usize>,
    /// Smallest `u^n - u^{n-1}` over the x-grid, per consecutive pair.
    pub u_steps: Vec<f64>,
    pub v_steps: Vec<f64>,
    /// `max |u^n - u^{n-1}|` over the x-grid, per consecutive pair.
    pub u_tails: Vec<f64>,
    pub v_tails: Vec<f64>,
    pub du_tails: Vec<f64>,
    pub dv_tails: Vec<f64>,
    pub sandwich: Vec<SandwichPoint>,
    pub monotone_slack: f64,
    pub sandwich_tol: f64,
    pub monotone: bool,
    /// Last tail below the first one (both for u).
    pub tail_shrinks: bool,
    pub sandwich_ok: bool,
}

impl ConvergenceReport {
    /// Monotone in `n` and sandwiched. Tail shrinkage is reported but not
    /// required: a flat tail is consistent with convergence too.
    pub fn passed(&self) -> bool {
        self.monotone && self.sandwich_ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy<T> {
    pub curves: ValueCurves<T>,
    pub report: ConvergenceReport,
}

/// Samples `u^n, v^n` for every level and checks monotonicity in `n`, the
/// Cauchy tails and the weak-duality sandwich of the last level, which
/// stands in for the limit. A non-monotone sequence is reported through
/// [`ConvergenceReport::monotone`] rather than as an error so the curves
/// stay available for inspection.
pub fn value_convergence_study<T: Real>(
    model: &MarketModel<T>,
    field: &UtilityField<T>,
    x_grid: &[T],
    y_grid: &[T],
    levels: &[usize],
    opts: &SolverOptions<T>,
    sandwich_tol: T,
) -> Result<ConvergenceStudy<T>, HarnessError> {
    let curves = ValueCurves::sample(model, field, x_grid, y_grid, levels, opts)?;
    let report = convergence_report(&curves, sandwich_tol.to_f64_lossy());
    Ok(ConvergenceStudy { curves, report })
}

/// Slack allowed on the monotonicity in `n`.
pub const MONOTONE_SLACK: f64 = 1e-7;

fn convergence_report<T: Real>(c: &ValueCurves<T>, sandwich_tol: f64) -> ConvergenceReport {
    let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
    let steps = |rows: &[Vec<T>]| -> (Vec<f64>, Vec<f64>) {
        rows.windows(2)
            .map(|w| {
                let d: Vec<f64> = f(&w[1]).iter().zip(f(&w[0])).map(|(a, b)| a - b).collect();
                (d.iter().copied().fold(f64::INFINITY, f64::min), d.iter().fold(0.0f64, |m, x| m.max(x.abs())))
            })
            .unzip()
    };
    let (u_steps, u_tails) = steps(&c.u);
    let (v_steps, v_tails) = steps(&c.v);
    let (_, du_tails) = steps(&c.du);
    let (_, dv_tails) = steps(&c.dv);
    let monotone = u_steps.iter().chain(&v_steps).all(|&s| s >= -MONOTONE_SLACK);
    let tail_shrinks = u_tails.len() >= 2 && u_tails.last() < u_tails.first();

    let last = c.levels.len() - 1;
    let (u, v, dv) = (&c.u[last], &c.v[last], &c.dv[last]);
    let sandwich: Vec<SandwichPoint> = c
        .x_grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let g: Vec<T> = c.y_grid.iter().zip(v).map(|(&y, &vy)| -(vy + x * y)).collect();
            let dg: Vec<T> = dv.iter().map(|&d| -(d + x)).collect();
            let best = (0..g.len()).fold(0, |b, j| if g[j] > g[b] { j } else { b });
            let (resolution, unresolved) = match concave_resolution(&c.y_grid, &g, &dg) {
                Some((_, r)) => (r.to_f64_lossy(), false),
                None => (f64::INFINITY, true),
            };
            let dual_min = (-g[best]).to_f64_lossy();
            let ux = u[i].to_f64_lossy();
            SandwichPoint { x: x.to_f64_lossy(), u: ux, dual_min, gap: dual_min - ux, resolution, unresolved }
        })
        .collect();
    let sandwich_ok = sandwich
        .iter()
        .filter(|s| !s.unresolved)
        .all(|s| s.gap >= -MONOTONE_SLACK && s.gap <= sandwich_tol + s.resolution)
        && sandwich.iter().any(|s| !s.unresolved);
    ConvergenceReport {
        levels: c.levels.clone(),
        u_steps,
        v_steps,
        u_tails,
        v_tails,
        du_tails,
        dv_tails,
        sandwich,
        monotone_slack: MONOTONE_SLACK,
        sandwich_tol,
        monotone,
        tail_shrinks,
        sandwich_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{build_example_market, build_tree, Branch, ExampleMarketSpec, Limits, TreeSpec};

    #[test]
    fn example_values_increase_with_assets() {
        let spec = ExampleMarketSpec::arithmetic(4, 0.5, 0.1).unwrap();
        let m = build_example_market(&spec, &Limits::default()).unwrap();
        let levels: Vec<usize> = (1..=4).collect();
        let study =
            value_convergence_study(&m, &UtilityField::log(), &[1.0], &[0.5, 1.0, 2.0], &levels, &SolverOptions::default(), 1e-3)
                .unwrap();
        assert!(study.report.monotone, "{:?}", study.report);
        assert_eq!(study.curves.long_rows().len(), 4 * (1 + 3 + 1 + 3));
    }

    #[test]
    fn bond_only_family_is_flat() {
        let spec = TreeSpec::branching(
            1,
            &[Branch { prob: 0.5, factors: vec![1.0, 1.0] }, Branch { prob: 0.5, factors: vec![1.0, 1.0] }],
            &[1.0, 1.0],
        );
        let m = build_tree(&spec, &Limits::default()).unwrap();
        let study =
            value_convergence_study(&m, &UtilityField::log(), &[0.5, 1.0], &[1.0], &[0, 1, 2], &SolverOptions::default(), 1e-3)
                .unwrap();
        assert!(study.report.u_tails.iter().all(|&t| t < 1e-9));
    }

    #[test]
    fn duplicates_add_nothing() {
        let spec = TreeSpec::branching(
            1,
            &[Branch { prob: 0.6, factors: vec![2.0, 2.0, 2.0] }, Branch { prob: 0.4, factors: vec![0.5, 0.5, 0.5] }],
            &[1.0, 1.0, 1.0],
        );
        let m = build_tree(&spec, &Limits::default()).unwrap();
        let field = UtilityField::power(0.5).unwrap();
        let study = value_convergence_study(&m, &field, &[1.0], &[1.0], &[1, 2, 3], &SolverOptions::default(), 1e-3).unwrap();
        assert!(study.report.u_tails.iter().all(|&t| t < 1e-8), "{:?}", study.report.u_tails);
    }
}
