//! Dual problem over martingale densities.
//!
//! Densities are node variables `Z_k >= 0` with `Z_root = 1` and, at every
//! non-terminal node, the conditional expectation of next-step `Z` and of
//! next-step `Z S^i` (tradable `i`) equal to their current values. The
//! dual value is `v(y) = min sum_k P_k dk_k V(k, y Z_k)`.

use serde::Serialize;

use crate::barrier::{follow_path, BarrierProblem, SolveError, SolverOptions};
use crate::linalg::{independent_rows, lu_solve, sym_pinv, Matrix};
use crate::lp::{LpOutcome, StandardLp};
use crate::market::{MarketModel, NodeId};
use crate::scalar::{dot, Real};
use crate::utility::{conjugate, ConjugateField, UtilityField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowKind {
    /// `Z_root = 1`.
    Normalization,
    /// `E[Z_next | node] = Z_node`.
    Density { node: NodeId },
    /// `E[Z_next S^asset_next | node] = Z_node S^asset_node`.
    Asset { node: NodeId, asset: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow<T> {
    pub kind: RowKind,
    /// Sparse coefficients over node densities.
    pub terms: Vec<(NodeId, T)>,
    pub rhs: T,
}

impl<T: Real> ConstraintRow<T> {
    pub fn eval(&self, z: &[T]) -> T {
        self.terms.iter().map(|&(k, a)| a * z[k]).sum::<T>() - self.rhs
    }
}

/// Linear description of the (closed) set of martingale densities.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingalePolytope<T> {
    rows: Vec<ConstraintRow<T>>,
    nodes: usize,
}

impl<T: Real> MartingalePolytope<T> {
    pub fn rows(&self) -> &[ConstraintRow<T>] {
        &self.rows
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Largest absolute equality violation.
    pub fn residual(&self, z: &[T]) -> T {
        self.rows.iter().fold(T::zero(), |m, r| m.max(r.eval(z).abs()))
    }

    pub fn contains(&self, z: &[T], tol: T) -> bool {
        z.len() == self.nodes && z.iter().all(|&v| v >= -tol) && self.residual(z) <= tol
    }
}

pub fn martingale_polytope<T: Real>(model: &MarketModel<T>) -> MartingalePolytope<T> {
    let tr = model.tree();
    let mut rows = vec![ConstraintRow { kind: RowKind::Normalization, terms: vec![(tr.root(), T::one())], rhs: T::one() }];
    for &j in tr.order() {
        let ch = tr.children(j);
        if ch.is_empty() {
            continue;
        }
        let mut terms: Vec<(NodeId, T)> = ch.iter().map(|&k| (k, tr.transition_prob(k))).collect();
        terms.push((j, -T::one()));
        rows.push(ConstraintRow { kind: RowKind::Density { node: j }, terms, rhs: T::zero() });
        for i in 0..model.n_active() {
            let mut terms: Vec<(NodeId, T)> =
                ch.iter().map(|&k| (k, tr.transition_prob(k) * model.tradable_prices(k)[i])).collect();
            terms.push((j, -model.tradable_prices(j)[i]));
            rows.push(ConstraintRow { kind: RowKind::Asset { node: j, asset: i }, terms, rhs: T::zero() });
        }
    }
    MartingalePolytope { rows, nodes: tr.len() }
}

/// A strictly positive one-step martingale measure at node `j`, or `None`
/// when the node admits arbitrage. Uses the physical transition law when
/// it already is a martingale measure, then the minimum-entropy tilt of it,
/// and as a last resort maximises the smallest conditional probability by
/// linear programming.
pub fn local_martingale_measure<T: Real>(model: &MarketModel<T>, j: NodeId) -> Option<Vec<T>> {
    let tr = model.tree();
    let ch = tr.children(j);
    let n = model.n_active();
    let increments: Vec<Vec<T>> = ch.iter().map(|&k| model.price_increment(k)).collect();
    let p: Vec<T> = ch.iter().map(|&k| tr.transition_prob(k)).collect();
    let scale = T::one() + increments.iter().flatten().fold(T::zero(), |m, &v| m.max(v.abs()));
    let tol = T::of(1e-13).max(T::epsilon() * T::of(64.0)) * scale;
    let drift_free = (0..n).all(|i| {
        let e: T = p.iter().zip(&increments).map(|(&q, d)| q * d[i]).sum();
        e.abs() <= tol
    });
    if drift_free {
        return Some(p);
    }
    if let Some(q) = entropy_tilt(&p, &increments, tol) {
        return Some(q);
    }
    // variables: q_1..q_K, eps, s_1..s_K; minimise -eps
    let kk = ch.len();
    let cols = 2 * kk + 1;
    let mut a = Matrix::zeros(1 + n + kk, cols);
    let mut b = vec![T::zero(); 1 + n + kk];
    for c in 0..kk {
        a[(0, c)] = T::one();
    }
    b[0] = T::one();
    for i in 0..n {
        for c in 0..kk {
            a[(1 + i, c)] = increments[c][i];
        }
    }
    for c in 0..kk {
        let r = 1 + n + c;
        a[(r, c)] = T::one();
        a[(r, kk)] = -T::one();
        a[(r, kk + 1 + c)] = -T::one();
    }
    let mut cost = vec![T::zero(); cols];
    cost[kk] = -T::one();
    match StandardLp::new(cost, a, b).solve() {
        LpOutcome::Optimal(sol) if sol.x[kk] > T::of(1e-12) => Some(sol.x[..kk].to_vec()),
        _ => None,
    }
}

/// Minimises `ln E_p[exp(lambda . dS)]` by damped Newton; the tilted law is
/// the martingale measure closest to `p` in relative entropy. `None` when the
/// minimiser does not exist (arbitrage) or is not reached.
fn entropy_tilt<T: Real>(p: &[T], increments: &[Vec<T>], tol: T) -> Option<Vec<T>> {
    let n = increments.first().map_or(0, Vec::len);
    let tilt = |lam: &[T]| -> (Vec<T>, T) {
        let expo: Vec<T> = increments.iter().map(|d| dot(lam, d)).collect();
        let top = expo.iter().fold(T::neg_infinity(), |m, &e| m.max(e));
        let w: Vec<T> = p.iter().zip(&expo).map(|(&pj, &e)| pj * (e - top).exp()).collect();
        let total: T = w.iter().copied().sum();
        (w.into_iter().map(|v| v / total).collect(), total.ln() + top)
    };
    let mut lam = vec![T::zero(); n];
    let (mut q, mut phi) = tilt(&lam);
    for _ in 0..200 {
        let mut grad = vec![T::zero(); n];
        for (&qj, d) in q.iter().zip(increments) {
            for (g, &di) in grad.iter_mut().zip(d) {
                *g += qj * di;
            }
        }
        if grad.iter().all(|g| g.abs() <= tol) {
            return q.iter().all(|&v| v > T::zero()).then_some(q);
        }
        let mut cov = Matrix::zeros(n, n);
        for (&qj, d) in q.iter().zip(increments) {
            let centered: Vec<T> = d.iter().zip(&grad).map(|(&a, &b)| a - b).collect();
            cov.add_outer(qj, &centered);
        }
        let mut step = sym_pinv(&cov, T::of(1e-13)).mul_vec(&grad);
        // cap the change of any exponent: tiny tilted masses make the
        // covariance nearly singular and the raw step overshoots
        let reach = increments.iter().fold(T::zero(), |m, d| m.max(dot(&step, d).abs()));
        if reach > T::two() {
            let shrink = T::two() / reach;
            step.iter_mut().for_each(|s| *s *= shrink);
        }
        let slope = dot(&grad, &step);
        if !(slope > T::zero()) {
            return None;
        }
        let mut size = T::one();
        loop {
            let trial: Vec<T> = lam.iter().zip(&step).map(|(&l, &s)| l - size * s).collect();
            let (q1, phi1) = tilt(&trial);
            // near the minimiser the decrease drowns in rounding
            let enough = if slope < T::epsilon().sqrt() {
                phi1 <= phi + T::epsilon() * T::of(16.0) * (T::one() + phi.abs())
            } else {
                phi1 <= phi - T::of(1e-4) * size * slope
            };
            if enough {
                lam = trial;
                q = q1;
                phi = phi1;
                break;
            }
            size *= T::half();
            if size < T::of(1e-10) {
                return None;
            }
        }
    }
    None
}

/// Strictly positive martingale density built node by node from
/// [`local_martingale_measure`]. Fails when some node admits arbitrage.
pub fn interior_density<T: Real>(model: &MarketModel<T>) -> Result<Vec<T>, SolveError> {
    let tr = model.tree();
    let mut z = vec![T::zero(); tr.len()];
    z[tr.root()] = T::one();
    for &j in tr.order() {
        let ch = tr.children(j);
        if ch.is_empty() {
            continue;
        }
        let q = local_martingale_measure(model, j)
            .ok_or_else(|| SolveError::Infeasible(format!("no equivalent martingale measure: arbitrage at node {j}")))?;
        for (&k, &qk) in ch.iter().zip(&q) {
            z[k] = z[j] * qk / tr.transition_prob(k);
        }
    }
    Ok(z)
}

/// Whether every node of the (truncated) market admits a strictly positive
/// one-step martingale measure.
pub fn is_arbitrage_free<T: Real>(model: &MarketModel<T>) -> bool {
    let tr = model.tree();
    tr.order().iter().filter(|&&j| !tr.is_leaf(j)).all(|&j| local_martingale_measure(model, j).is_some())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution<T> {
    /// Density at every node.
    pub z: Vec<T>,
    pub y: T,
    pub value: T,
    /// Some density vanishes (the optimum sits on the closure of the densities).
    pub attained_on_boundary: bool,
    pub iterations: usize,
    pub kkt_residual: T,
}

impl<T: Real> DualSolution<T> {
    /// `v'(y) = -E[Z I(y Z) dk]` at the optimum.
    pub fn slope(&self, model: &MarketModel<T>, field: &UtilityField<T>) -> T {
        let tr = model.tree();
        -(0..tr.len())
            .filter(|&k| model.clock().increment(k) > T::zero())
            .map(|k| tr.prob(k) * model.clock().increment(k) * self.z[k] * field.inverse_marginal_at(k, self.y * self.z[k]))
            .sum::<T>()
    }
}

const MAX_REFINE: usize = 10;

struct Factor<T> {
    alpha: Vec<T>,
    kinv: Vec<Option<Matrix<T>>>,
}

struct NodeDual<'a, T> {
    model: &'a MarketModel<T>,
    conj: ConjugateField<T>,
    y: T,
    /// `P_k dk_k`
    weight: Vec<T>,
    /// For each node: scaled rows `p_k (1, dS_k)` of its children.
    rows: Vec<Vec<Vec<T>>>,
}

impl<'a, T: Real> NodeDual<'a, T> {
    fn new(model: &'a MarketModel<T>, field: &UtilityField<T>, y: T) -> Self {
        let tr = model.tree();
        let weight = (0..tr.len()).map(|k| tr.prob(k) * model.clock().increment(k)).collect();
        let rows = (0..tr.len())
            .map(|j| {
                tr.children(j)
                    .iter()
                    .map(|&k| {
                        let p = tr.transition_prob(k);
                        std::iter::once(p).chain(model.price_increment(k).into_iter().map(|d| p * d)).collect()
                    })
                    .collect()
            })
            .collect();
        Self { model, conj: conjugate(field), y, weight, rows }
    }

    fn dual_value(&self, z: &[T]) -> T {
        let mut v = T::zero();
        for (k, &w) in self.weight.iter().enumerate() {
            if w > T::zero() {
                v += w * self.conj.value(k, self.y * z[k]);
            }
        }
        v
    }

    fn grad_hess(&self, z: &[T], t: T) -> (Vec<T>, Vec<T>) {
        let n = z.len();
        let mut g = vec![T::zero(); n];
        let mut h = vec![T::zero(); n];
        for k in 1..n {
            let zk = z[k];
            let mut gk = -zk.recip();
            let mut hk = (zk * zk).recip();
            let w = self.weight[k];
            if w > T::zero() {
                let eta = self.y * zk;
                gk += t * w * self.y * self.conj.derivative(k, eta);
                hk += t * w * self.y * self.y * self.conj.second_derivative(k, eta);
            }
            g[k] = gk;
            h[k] = hk;
        }
        (g, h)
    }

    /// Backward pass: Schur complements `alpha` and the pseudo-inverses of
    /// the per-node systems.
    fn factor(&self, h: &[T]) -> Factor<T> {
        let tr = self.model.tree();
        let n = h.len();
        let dim = self.model.n_active() + 1;
        let mut alpha = vec![T::zero(); n];
        let mut kinv: Vec<Option<Matrix<T>>> = vec![None; n];
        for &k in tr.order().iter().rev() {
            let ch = tr.children(k);
            let mut a = T::zero();
            if !ch.is_empty() {
                let mut km = Matrix::zeros(dim, dim);
                for (&j, r) in ch.iter().zip(&self.rows[k]) {
                    km.add_outer(alpha[j].recip(), r);
                }
                let kp = sym_pinv(&km, T::of(1e-13));
                a = kp[(0, 0)];
                kinv[k] = Some(kp);
            }
            if k != tr.root() {
                alpha[k] = a + h[k];
            }
        }
        Factor { alpha, kinv }
    }

    /// Solves `H d + g = A' lam` and `A d = f` (node by node, `f` absent
    /// meaning zero), where node `k` constrains `sum_j r_j d_j - e0 d_k`.
    fn solve(&self, fac: &Factor<T>, h: &[T], g: &[T], f: &[Option<Vec<T>>]) -> (Vec<T>, Vec<Option<Vec<T>>>) {
        let tr = self.model.tree();
        let n = h.len();
        let dim = self.model.n_active() + 1;
        let mut beta = vec![T::zero(); n];
        let mut rvs: Vec<Option<Vec<T>>> = vec![None; n];
        for &k in tr.order().iter().rev() {
            let mut b = T::zero();
            if let Some(kp) = &fac.kinv[k] {
                let mut rv = f[k].clone().unwrap_or_else(|| vec![T::zero(); dim]);
                for (&j, r) in tr.children(k).iter().zip(&self.rows[k]) {
                    let c = beta[j] / fac.alpha[j];
                    for (acc, &ri) in rv.iter_mut().zip(r) {
                        *acc += c * ri;
                    }
                }
                b = dot(kp.row(0), &rv);
                rvs[k] = Some(rv);
            }
            if k != tr.root() {
                beta[k] = b + g[k];
            }
        }
        let mut d = vec![T::zero(); n];
        let mut lam = vec![None; n];
        for &k in tr.order() {
            let (Some(kp), Some(rv)) = (&fac.kinv[k], &rvs[k]) else { continue };
            let mut rhs = rv.clone();
            rhs[0] += d[k];
            let l = kp.mul_vec(&rhs);
            for (&j, r) in tr.children(k).iter().zip(&self.rows[k]) {
                d[j] = (dot(r, &l) - beta[j]) / fac.alpha[j];
            }
            lam[k] = Some(l);
        }
        (d, lam)
    }

    /// Residuals of the stationarity and feasibility conditions of [`solve`]
    /// with `f = 0`.
    fn residual(&self, h: &[T], g: &[T], d: &[T], lam: &[Option<Vec<T>>]) -> (Vec<T>, Vec<Option<Vec<T>>>) {
        let tr = self.model.tree();
        let n = h.len();
        let mut stat = vec![T::zero(); n];
        let mut feas = vec![None; n];
        for &k in tr.order() {
            let Some(l) = &lam[k] else { continue };
            let mut acc = vec![T::zero(); l.len()];
            acc[0] = -d[k];
            for (&j, r) in tr.children(k).iter().zip(&self.rows[k]) {
                let own = lam[j].as_ref().map_or(T::zero(), |lj| lj[0]);
                stat[j] = h[j] * d[j] + g[j] - dot(r, l) + own;
                for (a, &ri) in acc.iter_mut().zip(r) {
                    *a += ri * d[j];
                }
            }
            feas[k] = Some(acc);
        }
        (stat, feas)
    }
}

impl<T: Real> BarrierProblem<T> for NodeDual<'_, T> {
    type State = Vec<T>;
    type Direction = Vec<T>;

    fn barrier_terms(&self) -> usize {
        self.weight.len() - 1
    }

    fn objective(&self, z: &Vec<T>, t: T) -> T {
        let mut f = T::zero();
        for k in 1..z.len() {
            if !(z[k] > T::zero()) {
                return T::infinity();
            }
            f -= z[k].ln();
        }
        f + t * self.dual_value(z)
    }

    fn newton(&self, z: &Vec<T>, t: T) -> (Vec<T>, T) {
        let (g, h) = self.grad_hess(z, t);
        let fac = self.factor(&h);
        let none = vec![None; z.len()];
        let (mut d, mut lam) = self.solve(&fac, &h, &g, &none);
        // the eliminated system is badly scaled at large t, so the step is
        // refined against the residual of the full optimality conditions
        let mut last = T::infinity();
        for _ in 0..MAX_REFINE {
            let (stat, feas) = self.residual(&h, &g, &d, &lam);
            let (dd, dl) = self.solve(&fac, &h, &stat, &feas);
            let size = dd.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            if !(size < last) {
                break;
            }
            last = size;
            for (a, b) in d.iter_mut().zip(&dd) {
                *a -= *b;
            }
            for (a, b) in lam.iter_mut().zip(&dl) {
                if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x -= *y;
                    }
                }
            }
            if size <= T::epsilon() * d.iter().fold(T::zero(), |m, v| m.max(v.abs())) {
                break;
            }
        }
        // Hessian is diagonal in Z
        let dec2 = h.iter().zip(&d).map(|(&hk, &dk)| hk * dk * dk).sum();
        (d, dec2)
    }

    fn max_step(&self, z: &Vec<T>, d: &Vec<T>) -> T {
        z.iter().zip(d).skip(1).filter(|(_, &dk)| dk < T::zero()).fold(T::infinity(), |m, (&zk, &dk)| m.min(-zk / dk))
    }

    fn advance(&self, z: &Vec<T>, d: &Vec<T>, step: T) -> Vec<T> {
        z.iter().zip(d).map(|(&a, &b)| a + step * b).collect()
    }
}

fn check_dual_inputs<T: Real>(y: T, opts: &SolverOptions<T>) -> Result<(), SolveError> {
    if !(y > T::zero() && y.is_finite()) {
        return Err(SolveError::InvalidInput(format!("dual argument y = {y} must be positive")));
    }
    opts.validate()
}

fn boundary_flag<T: Real>(z: &[T]) -> bool {
    z.iter().any(|&v| v < T::of(1e-7))
}

/// Minimises `E[V(y Z) . kappa_T]` over martingale densities.
pub fn solve_dual<T: Real>(
    model: &MarketModel<T>,
    field: &UtilityField<T>,
    y: T,
    opts: &SolverOptions<T>,
) -> Result<DualSolution<T>, SolveError> {
    check_dual_inputs(y, opts)?;
    let z0 = interior_density(model)?;
    let problem = NodeDual::new(model, field, y);
    let path = follow_path(&problem, z0, opts)?;
    let z = path.state;
    let value = problem.dual_value(&z);
    if !value.is_finite() {
        return Err(SolveError::ValueDivergence(format!("dual value {value}")));
    }
    let m = T::from_usize(problem.barrier_terms().max(1)).expect("count");
    Ok(DualSolution {
        attained_on_boundary: boundary_flag(&z),
        kkt_residual: (m + path.decrement * T::half()) / path.t,
        iterations: path.iterations,
        value,
        y,
        z,
    })
}

/// Maximum leaf count accepted by [`dual_over_measures`].
pub const MEASURE_ROUTE_MAX_LEAVES: usize = 600;

struct LeafMeasures<'a, T> {
    conj: ConjugateField<T>,
    y: T,
    /// Consumption nodes: (node, P_k dk_k, P_k, leaf positions below).
    terms: Vec<(NodeId, T, T, Vec<usize>)>,
    /// Independent rows of the homogeneous martingale constraints on leaves.
    a: Matrix<T>,
    _model: &'a MarketModel<T>,
}

impl<T: Real> LeafMeasures<'_, T> {
    fn node_mass(&self, q: &[T], below: &[usize]) -> T {
        below.iter().map(|&l| q[l]).sum()
    }

    fn dual_value(&self, q: &[T]) -> T {
        self.terms
            .iter()
            .map(|(k, w, p, below)| *w * self.conj.value(*k, self.y * self.node_mass(q, below) / *p))
            .sum()
    }
}

impl<T: Real> BarrierProblem<T> for LeafMeasures<'_, T> {
    type State = Vec<T>;
    type Direction = Vec<T>;

    fn barrier_terms(&self) -> usize {
        self.a.cols()
    }

    fn objective(&self, q: &Vec<T>, t: T) -> T {
        if q.iter().any(|&v| !(v > T::zero())) {
            return T::infinity();
        }
        t * self.dual_value(q) - q.iter().map(|v| v.ln()).sum::<T>()
    }

    fn newton(&self, q: &Vec<T>, t: T) -> (Vec<T>, T) {
        let nl = q.len();
        let nr = self.a.rows();
        let mut g: Vec<T> = q.iter().map(|&v| -v.recip()).collect();
        let mut curv = Vec::with_capacity(self.terms.len());
        let dim = nl + nr;
        let mut kkt = Matrix::zeros(dim, dim);
        for (l, &v) in q.iter().enumerate() {
            kkt[(l, l)] = (v * v).recip();
        }
        for (k, w, p, below) in &self.terms {
            let scale = self.y / *p;
            let eta = scale * self.node_mass(q, below);
            let gk = t * *w * scale * self.conj.derivative(*k, eta);
            let hk = t * *w * scale * scale * self.conj.second_derivative(*k, eta);
            curv.push(hk);
            for &l in below {
                g[l] += gk;
                for &m in below {
                    kkt[(l, m)] += hk;
                }
            }
        }
        for r in 0..nr {
            for c in 0..nl {
                let v = self.a[(r, c)];
                kkt[(nl + r, c)] = v;
                kkt[(c, nl + r)] = v;
            }
        }
        let mut rhs = vec![T::zero(); dim];
        for l in 0..nl {
            rhs[l] = -g[l];
        }
        match lu_solve(kkt, rhs) {
            Some(sol) => {
                let d = sol[..nl].to_vec();
                let mut dec2: T = q.iter().zip(&d).map(|(&v, &dl)| dl * dl / (v * v)).sum();
                for ((_, _, _, below), &hk) in self.terms.iter().zip(&curv) {
                    let s = self.node_mass(&d, below);
                    dec2 += hk * s * s;
                }
                (d, dec2)
            }
            None => (vec![T::zero(); nl], T::nan()),
        }
    }

    fn max_step(&self, q: &Vec<T>, d: &Vec<T>) -> T {
        q.iter().zip(d).filter(|(_, &dk)| dk < T::zero()).fold(T::infinity(), |m, (&v, &dk)| m.min(-v / dk))
    }

    fn advance(&self, q: &Vec<T>, d: &Vec<T>, step: T) -> Vec<T> {
        q.iter().zip(d).map(|(&a, &b)| a + step * b).collect()
    }
}

/// Cross-check of [`solve_dual`]: minimises the same objective directly over
/// martingale measures on the leaves (dense Newton on the leaf masses with
/// the martingale conditions as equality constraints). Limited to
/// [`MEASURE_ROUTE_MAX_LEAVES`] leaves.
pub fn dual_over_measures<T: Real>(
    model: &MarketModel<T>,
    field: &UtilityField<T>,
    y: T,
    opts: &SolverOptions<T>,
) -> Result<T, SolveError> {
    check_dual_inputs(y, opts)?;
    let tr = model.tree();
    let leaves = tr.leaves();
    if leaves.len() > MEASURE_ROUTE_MAX_LEAVES {
        return Err(SolveError::TooLarge(format!("{} leaves (limit {MEASURE_ROUTE_MAX_LEAVES})", leaves.len())));
    }
    let mut pos = vec![usize::MAX; tr.len()];
    for (i, &l) in leaves.iter().enumerate() {
        pos[l] = i;
    }
    // leaves below every node, and the child of `j` on the way to each leaf
    let mut below: Vec<Vec<usize>> = vec![Vec::new(); tr.len()];
    for &l in leaves {
        for k in tr.path(l) {
            below[k].push(pos[l]);
        }
    }
    let mut rows: Vec<Vec<T>> = Vec::new();
    for &j in tr.order() {
        if tr.is_leaf(j) {
            continue;
        }
        for i in 0..model.n_active() {
            let mut r = vec![T::zero(); leaves.len()];
            for &c in tr.children(j) {
                let d = model.tradable_prices(c)[i] - model.tradable_prices(j)[i];
                for &l in &below[c] {
                    r[l] = d;
                }
            }
            rows.push(r);
        }
    }
    let a_full = Matrix::from_rows(&rows);
    let keep = independent_rows(&a_full, T::of(1e-10));
    let a = if rows.is_empty() {
        Matrix::zeros(0, leaves.len())
    } else {
        Matrix::from_rows(&keep.iter().map(|&r| rows[r].clone()).collect::<Vec<_>>())
    };
    // homogeneous directions must also preserve total mass
    let mut with_mass: Vec<Vec<T>> = (0..a.rows()).map(|r| a.row(r).to_vec()).collect();
    with_mass.push(vec![T::one(); leaves.len()]);
    let a = Matrix::from_rows(&with_mass);

    let z = interior_density(model)?;
    let q0: Vec<T> = leaves.iter().map(|&l| tr.prob(l) * z[l]).collect();
    let terms = (0..tr.len())
        .filter(|&k| model.clock().increment(k) > T::zero())
        .map(|k| (k, tr.prob(k) * model.clock().increment(k), tr.prob(k), below[k].clone()))
        .collect();
    let problem = LeafMeasures { conj: conjugate(field), y, terms, a, _model: model };
    let path = follow_path(&problem, q0, opts)?;
    let value = problem.dual_value(&path.state);
    if !value.is_finite() {
        return Err(SolveError::ValueDivergence(format!("dual value {value}")));
    }
    Ok(value)
}
