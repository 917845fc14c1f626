use serde::Serialize;

use crate::barrier::{SolveError, SolverOptions};
use crate::dual::{solve_dual, DualSolution};
use crate::market::{MarketModel, NodeId};
use crate::primal::{solve_primal, PrimalSolution};
use crate::scalar::Real;
use crate::utility::{Utility, UtilityField};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationsReport {
    pub x: f64,
    pub y: f64,
    /// `max |y Z - U'(c)| / U'(c)` over consumption nodes.
    pub marginal_rel: f64,
    pub worst_node: Option<NodeId>,
    /// `E[(c y Z) . kappa_T]`
    pub budget: f64,
    /// `|budget - x y| / (x y)`
    pub budget_rel: f64,
    pub tol: f64,
    pub marginal_ok: bool,
    pub budget_ok: bool,
}

impl RelationsReport {
    pub fn passed(&self) -> bool {
        self.marginal_ok && self.budget_ok
    }
}

/// Checks `y Z = U'(c)` node-wise and `E[(c y Z) . kappa_T] = x y` for a
/// primal optimiser at `x` and a dual optimiser at `y`.
pub fn optimality_relations_check<T: Real>(
    model: &MarketModel<T>,
    field: &UtilityField<T>,
    primal: &PrimalSolution<T>,
    dual: &DualSolution<T>,
    tol: T,
) -> RelationsReport {
    let tr = model.tree();
    let (x, y) = (primal.x, dual.y);
    let mut worst = (None, T::zero());
    let mut budget = T::zero();
    for k in model.consumption_nodes() {
        let c = primal.consumption[k];
        let yz = y * dual.z[k];
        let mu = field.marginal_at(k, c);
        let rel = (yz - mu).abs() / mu;
        if worst.0.is_none() || rel > worst.1 {
            worst = (Some(k), rel);
        }
        budget += tr.prob(k) * model.clock().increment(k) * c * yz;
    }
    let budget_rel = (budget - x * y).abs() / (x * y);
    RelationsReport {
        x: x.to_f64_lossy(),
        y: y.to_f64_lossy(),
        marginal_rel: worst.1.to_f64_lossy(),
        worst_node: worst.0,
        budget: budget.to_f64_lossy(),
        budget_rel: budget_rel.to_f64_lossy(),
        tol: tol.to_f64_lossy(),
        marginal_ok: worst.1 <= tol,
        budget_ok: budget_rel <= tol,
    }
}

/// Solves the primal at `x`, pairs it with `y = u'(x)` taken from the
/// optimal plan and solves the dual there.
pub fn paired_solutions<T: Real>(
    model: &MarketModel<T>,
    field: &UtilityField<T>,
    x: T,
    opts: &SolverOptions<T>,
) -> Result<(PrimalSolution<T>, DualSolution<T>), SolveError> {
    let primal = solve_primal(model, field, x, opts)?;
    let y = primal.marginal_value(model, field);
    let dual = solve_dual(model, field, y, opts)?;
    Ok((primal, dual))
}
