//! Consumption and investment problem on a (truncated) market.
//!
//! Variables are the wealth `X_k` after consumption, the consumption rate
//! `c_k` on nodes with `dk_k > 0` and the holdings `h_k` of tradable assets
//! chosen at every non-terminal node. They are tied by
//! `X_j = X_k + h_k . (S_j - S_k) - dk_j c_j` for every child `j` of `k`,
//! with `X_root = x`. The bond absorbs the rest of the wealth.

use serde::Serialize;

use crate::barrier::{follow_path, BarrierProblem, SolveError, SolverOptions};
use crate::dual::is_arbitrage_free;
use crate::linalg::{sym_pinv, Matrix};
use crate::market::{MarketModel, NodeId};
use crate::scalar::{dot, max_abs, Real};
use crate::utility::{Utility, UtilityField};

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution<T> {
    pub x: T,
    /// Consumption rate per node; zero where the clock does not move.
    pub consumption: Vec<T>,
    /// Tradable holdings chosen at each node; empty at leaves.
    pub holdings: Vec<Vec<T>>,
    /// Wealth after consumption, recomputed from the dynamics.
    pub wealth: Vec<T>,
    pub value: T,
    /// Upper bound on the suboptimality of the returned plan.
    pub kkt_residual: T,
    pub iterations: usize,
}

impl<T: Real> PrimalSolution<T> {
    /// Bond position at `k`: wealth not held in tradable assets.
    pub fn bond_holding(&self, model: &MarketModel<T>, k: NodeId) -> T {
        self.wealth[k] - dot(&self.holdings[k], model.tradable_prices(k))
    }

    /// `u'(x)` from `x u'(x) = E[c U'(c) . kappa_T]`: scaling the optimal
    /// plan by `1 + e` is optimal to first order at wealth `(1 + e) x`.
    /// Unlike differences of `u` this stays exact where `U''` jumps.
    pub fn marginal_value(&self, model: &MarketModel<T>, field: &UtilityField<T>) -> T {
        let tr = model.tree();
        let total = model
            .consumption_nodes()
            .into_iter()
            .map(|k| {
                let c = self.consumption[k];
                tr.prob(k) * model.clock().increment(k) * c * field.marginal_at(k, c)
            })
            .sum::<T>();
        total / self.x
    }
}

/// Wealth after consumption at every node for the plan `(x, H, c)`.
pub fn wealth_path<T: Real>(model: &MarketModel<T>, holdings: &[Vec<T>], consumption: &[T], x: T) -> Vec<T> {
    let tr = model.tree();
    let mut w = vec![T::zero(); tr.len()];
    for &k in tr.order() {
        w[k] = match tr.parent(k) {
            None => x - model.clock().increment(k) * consumption[k],
            Some(p) => {
                let gain = dot(&holdings[p], &model.price_increment(k));
                w[p] + gain - model.clock().increment(k) * consumption[k]
            }
        };
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub min_wealth: f64,
    pub argmin: NodeId,
    pub tolerance: f64,
    pub negative_consumption: bool,
    pub passed: bool,
}

/// Checks `x + H.S - c.kappa >= 0` along every path.
pub fn admissibility_check<T: Real>(
    model: &MarketModel<T>,
    holdings: &[Vec<T>],
    consumption: &[T],
    x: T,
) -> Result<AdmissibilityReport, SolveError> {
    let tr = model.tree();
    let n = model.n_active();
    if consumption.len() != tr.len() || holdings.len() != tr.len() {
        return Err(SolveError::InvalidInput(format!("plan covers {} nodes, tree has {}", consumption.len(), tr.len())));
    }
    for (k, h) in holdings.iter().enumerate() {
        let want = if tr.is_leaf(k) { [0, n] } else { [n, n] };
        if !want.contains(&h.len()) {
            return Err(SolveError::InvalidInput(format!("holdings at node {k} have {} entries, expected {n}", h.len())));
        }
    }
    let padded: Vec<Vec<T>> =
        holdings.iter().map(|h| if h.is_empty() { vec![T::zero(); n] } else { h.clone() }).collect();
    let w = wealth_path(model, &padded, consumption, x);
    let (argmin, min) = w.iter().enumerate().fold((0, T::infinity()), |(i, m), (k, &v)| if v < m { (k, v) } else { (i, m) });
    let tol = T::of(1e-9) * x.max(T::one());
    let negative_consumption = consumption.iter().any(|&c| c < T::zero());
    Ok(AdmissibilityReport {
        min_wealth: min.to_f64_lossy(),
        argmin,
        tolerance: tol.to_f64_lossy(),
        negative_consumption,
        passed: min >= -tol && !negative_consumption,
    })
}

/// Closed-form log-optimal stock fraction and value for the one-period
/// binomial with factors 2 and 1/2 and up-probability `p`.
pub fn analytic_log_binomial<T: Real>(p: T, x: T) -> Result<(T, T), SolveError> {
    let third = T::one() / T::of(3.0);
    if !(p > third && p < T::one()) {
        return Err(SolveError::InvalidInput(format!("p = {p} outside the interior region (1/3, 1)")));
    }
    if !(x > T::zero()) {
        return Err(SolveError::InvalidInput(format!("initial wealth {x} must be positive")));
    }
    let pi = T::of(3.0) * p - T::one();
    let value = p * (T::one() + pi).ln() + (T::one() - p) * (T::one() - pi * T::half()).ln() + x.ln();
    Ok((pi, value))
}

#[derive(Debug, Clone)]
struct Plan<T> {
    wealth: Vec<T>,
    consumption: Vec<T>,
    holdings: Vec<Vec<T>>,
}

struct NodePrimal<'a, T> {
    model: &'a MarketModel<T>,
    field: &'a UtilityField<T>,
    x: T,
    /// `P_k dk_k`
    weight: Vec<T>,
    increments: Vec<Vec<T>>,
}

impl<'a, T: Real> NodePrimal<'a, T> {
    fn new(model: &'a MarketModel<T>, field: &'a UtilityField<T>, x: T) -> Self {
        let tr = model.tree();
        let weight = (0..tr.len()).map(|k| tr.prob(k) * model.clock().increment(k)).collect();
        let increments = (0..tr.len()).map(|k| model.price_increment(k)).collect();
        Self { model, field, x, weight, increments }
    }

    fn consumes(&self, k: NodeId) -> bool {
        self.model.clock().increment(k) > T::zero()
    }

    fn utility(&self, c: &[T]) -> T {
        (0..c.len()).filter(|&k| self.consumes(k)).map(|k| self.weight[k] * self.field.value(k, c[k])).sum()
    }

    fn start(&self) -> Plan<T> {
        let tr = self.model.tree();
        let rate = self.x / (T::two() * self.model.clock().bound());
        let consumption: Vec<T> = (0..tr.len()).map(|k| if self.consumes(k) { rate } else { T::zero() }).collect();
        let holdings: Vec<Vec<T>> =
            (0..tr.len()).map(|k| if tr.is_leaf(k) { Vec::new() } else { vec![T::zero(); self.model.n_active()] }).collect();
        let wealth = wealth_path(self.model, &pad(&holdings, self.model.n_active()), &consumption, self.x);
        Plan { wealth, consumption, holdings }
    }
}

fn pad<T: Real>(holdings: &[Vec<T>], n: usize) -> Vec<Vec<T>> {
    holdings.iter().map(|h| if h.is_empty() { vec![T::zero(); n] } else { h.clone() }).collect()
}

/// Per-node data of the backward pass reused going forward.
struct Elimination<T> {
    mp: Matrix<T>,
    b: Vec<T>,
    f: Vec<T>,
}

impl<T: Real> BarrierProblem<T> for NodePrimal<'_, T> {
    type State = Plan<T>;
    type Direction = Plan<T>;

    fn barrier_terms(&self) -> usize {
        let tr = self.model.tree();
        (tr.len() - 1) + (0..tr.len()).filter(|&k| self.consumes(k)).count()
    }

    fn objective(&self, s: &Plan<T>, t: T) -> T {
        let tr = self.model.tree();
        let mut f = T::zero();
        for k in 0..tr.len() {
            if k != tr.root() {
                if !(s.wealth[k] > T::zero()) {
                    return T::infinity();
                }
                f -= s.wealth[k].ln();
            }
            if self.consumes(k) {
                if !(s.consumption[k] > T::zero()) {
                    return T::infinity();
                }
                f -= s.consumption[k].ln();
            }
        }
        f - t * self.utility(&s.consumption)
    }

    fn newton(&self, s: &Plan<T>, t: T) -> (Plan<T>, T) {
        let tr = self.model.tree();
        let len = tr.len();
        let n = self.model.n_active();
        let mut gx = vec![T::zero(); len];
        let mut hx = vec![T::zero(); len];
        let mut gc = vec![T::zero(); len];
        let mut hc = vec![T::zero(); len];
        for k in 0..len {
            if k != tr.root() {
                let w = s.wealth[k];
                gx[k] = -w.recip();
                hx[k] = (w * w).recip();
            }
            if self.consumes(k) {
                let c = s.consumption[k];
                gc[k] = -t * self.weight[k] * self.field.marginal_at(k, c) - c.recip();
                hc[k] = -t * self.weight[k] * self.field.curvature(k, c) + (c * c).recip();
            }
        }
        let kappa = |k: NodeId| self.model.clock().increment(k);

        // Subtree cost as a function of the wealth change `s` at a node is
        // `P s^2 / 2 + Q s`; after eliminating consumption it is `alpha, beta`
        // in the pre-consumption wealth change.
        let mut p = vec![T::zero(); len];
        let mut q = vec![T::zero(); len];
        let mut alpha = vec![T::zero(); len];
        let mut beta = vec![T::zero(); len];
        let mut elim: Vec<Option<Elimination<T>>> = (0..len).map(|_| None).collect();
        for &k in tr.order().iter().rev() {
            let ch = tr.children(k);
            let (mut a2, mut b1) = (T::zero(), T::zero());
            if !ch.is_empty() {
                let (mut a, mut e) = (T::zero(), T::zero());
                let mut b = vec![T::zero(); n];
                let mut f = vec![T::zero(); n];
                let mut m = Matrix::zeros(n, n);
                for &j in ch {
                    let ds = &self.increments[j];
                    a += alpha[j];
                    e += beta[j];
                    for i in 0..n {
                        b[i] += alpha[j] * ds[i];
                        f[i] += beta[j] * ds[i];
                    }
                    m.add_outer(alpha[j], ds);
                }
                let mp = sym_pinv(&m, T::of(1e-13));
                let mpb = mp.mul_vec(&b);
                let mpf = mp.mul_vec(&f);
                a2 = a - dot(&b, &mpb);
                b1 = e - dot(&b, &mpf);
                elim[k] = Some(Elimination { mp, b, f });
            }
            p[k] = a2 + hx[k];
            q[k] = b1 + gx[k];
            let kk = kappa(k);
            if self.consumes(k) {
                let d = hc[k] + kk * kk * p[k];
                alpha[k] = p[k] * hc[k] / d;
                beta[k] = (q[k] * hc[k] + kk * p[k] * gc[k]) / d;
            } else {
                alpha[k] = p[k];
                beta[k] = q[k];
            }
        }

        let mut dir = Plan {
            wealth: vec![T::zero(); len],
            consumption: vec![T::zero(); len],
            holdings: s.holdings.iter().map(|h| vec![T::zero(); h.len()]).collect(),
        };
        for &k in tr.order() {
            let Some(el) = &elim[k] else { continue };
            let sk = dir.wealth[k];
            let rhs: Vec<T> = el.b.iter().zip(&el.f).map(|(&b, &f)| -(b * sk + f)).collect();
            let dh = el.mp.mul_vec(&rhs);
            for &j in tr.children(k) {
                let a = sk + dot(&dh, &self.increments[j]);
                let kk = kappa(j);
                if self.consumes(j) {
                    let d = hc[j] + kk * kk * p[j];
                    dir.consumption[j] = (kk * p[j] * a + kk * q[j] - gc[j]) / d;
                    dir.wealth[j] = (hc[j] * a + kk * gc[j] - kk * kk * q[j]) / d;
                } else {
                    dir.wealth[j] = a;
                }
            }
            dir.holdings[k] = dh;
        }
        let dec2 = (0..len)
            .map(|k| hx[k] * dir.wealth[k] * dir.wealth[k] + hc[k] * dir.consumption[k] * dir.consumption[k])
            .sum();
        (dir, dec2)
    }

    fn max_step(&self, s: &Plan<T>, d: &Plan<T>) -> T {
        let root = self.model.tree().root();
        let mut m = T::infinity();
        for k in 0..s.wealth.len() {
            if k != root && d.wealth[k] < T::zero() {
                m = m.min(-s.wealth[k] / d.wealth[k]);
            }
            if self.consumes(k) && d.consumption[k] < T::zero() {
                m = m.min(-s.consumption[k] / d.consumption[k]);
            }
        }
        m
    }

    fn advance(&self, s: &Plan<T>, d: &Plan<T>, step: T) -> Plan<T> {
        let axpy = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&u, &v)| u + step * v).collect::<Vec<T>>();
        Plan {
            wealth: axpy(&s.wealth, &d.wealth),
            consumption: axpy(&s.consumption, &d.consumption),
            holdings: s.holdings.iter().zip(&d.holdings).map(|(a, b)| axpy(a, b)).collect(),
        }
    }

    fn diverging(&self, s: &Plan<T>) -> bool {
        let cap = T::of(1e15) * (T::one() + self.x);
        max_abs(&s.wealth) > cap || max_abs(&s.consumption) > cap || s.holdings.iter().any(|h| max_abs(h) > cap)
    }
}

/// Replaces each node's holdings by the minimum-norm vector with the same
/// gains on every child.
fn min_norm_holdings<T: Real>(model: &MarketModel<T>, holdings: &mut [Vec<T>]) {
    let tr = model.tree();
    let n = model.n_active();
    for k in 0..tr.len() {
        if tr.is_leaf(k) || n == 0 {
            continue;
        }
        let mut gram = Matrix::zeros(n, n);
        for &j in tr.children(k) {
            gram.add_outer(T::one(), &model.price_increment(j));
        }
        let proj = sym_pinv(&gram, T::of(1e-12));
        holdings[k] = proj.mul_vec(&gram.mul_vec(&holdings[k]));
    }
}

/// Maximises `E[(U(c) . kappa)_T]` over plans admissible for wealth `x`.
pub fn solve_primal<T: Real>(
    model: &MarketModel<T>,
    field: &UtilityField<T>,
    x: T,
    opts: &SolverOptions<T>,
) -> Result<PrimalSolution<T>, SolveError> {
    if !(x > T::zero() && x.is_finite()) {
        return Err(SolveError::InvalidInput(format!("initial wealth {x} must be positive")));
    }
    opts.validate()?;
    if !is_arbitrage_free(model) {
        return Err(SolveError::Infeasible("no equivalent martingale measure: the truncated market admits arbitrage".into()));
    }
    let problem = NodePrimal::new(model, field, x);
    let path = follow_path(&problem, problem.start(), opts)?;
    let mut plan = path.state;
    min_norm_holdings(model, &mut plan.holdings);
    let wealth = wealth_path(model, &pad(&plan.holdings, model.n_active()), &plan.consumption, x);
    let value = problem.utility(&plan.consumption);
    if !value.is_finite() {
        return Err(SolveError::ValueDivergence(format!("primal value {value}")));
    }
    let m = T::from_usize(problem.barrier_terms().max(1)).expect("count");
    Ok(PrimalSolution {
        x,
        consumption: plan.consumption,
        holdings: plan.holdings,
        wealth,
        value,
        kkt_residual: (m + path.decrement * T::half()) / path.t,
        iterations: path.iterations,
    })
}
