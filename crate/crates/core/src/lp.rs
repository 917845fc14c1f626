//! Dense two-phase simplex for standard-form linear programs
//! `min c.x  s.t.  A x = b, x >= 0`.
//!
//! Uses Dantzig pricing and falls back to Bland's rule after a run of
//! degenerate pivots, so it terminates on the degenerate vertices that
//! martingale-measure polytopes produce.

use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct StandardLp<T> {
    pub cost: Vec<T>,
    pub a: Matrix<T>,
    pub b: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct LpSolution<T> {
    pub x: Vec<T>,
    pub objective: T,
    pub pivots: usize,
}

#[derive(Clone, Debug)]
pub enum LpOutcome<T> {
    Optimal(LpSolution<T>),
    Infeasible,
    Unbounded,
    /// Pivot budget exhausted.
    Stalled,
}

const MAX_PIVOTS: usize = 200_000;
const BLAND_AFTER: usize = 50;

struct Tableau<T> {
    // m constraint rows followed by the objective row; last column is the rhs
    t: Vec<Vec<T>>,
    basis: Vec<usize>,
    width: usize,
    pivots: usize,
}

impl<T: Real> Tableau<T> {
    fn rhs(&self, i: usize) -> T {
        self.t[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let prow = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f == T::zero() {
                continue;
            }
            for (v, &pv) in row.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            row[c] = T::zero();
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Runs simplex iterations on the current objective row over `allowed` columns.
    fn optimize(&mut self, allowed: usize, eps: T) -> Result<(), LpOutcome<T>> {
        let m = self.basis.len();
        let obj = m;
        let mut stale = 0usize;
        let mut last = self.t[obj][self.width];
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(LpOutcome::Stalled);
            }
            let bland = stale >= BLAND_AFTER;
            let mut enter = None;
            let mut best = -eps;
            for j in 0..allowed {
                let d = self.t[obj][j];
                if d < -eps {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if d < best {
                        best = d;
                        enter = Some(j);
                    }
                }
            }
            let Some(c) = enter else { return Ok(()) };
            let mut leave: Option<usize> = None;
            let mut ratio = T::infinity();
            for i in 0..m {
                let a = self.t[i][c];
                if a > eps {
                    let q = self.rhs(i) / a;
                    let better = match leave {
                        None => true,
                        Some(l) => q < ratio - eps || (q <= ratio + eps && self.basis[i] < self.basis[l]),
                    };
                    if better {
                        ratio = q;
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else { return Err(LpOutcome::Unbounded) };
            self.pivot(r, c);
            let now = self.t[obj][self.width];
            if (now - last).abs() <= eps {
                stale += 1;
            } else {
                stale = 0;
            }
            last = now;
        }
    }
}

impl<T: Real> StandardLp<T> {
    pub fn new(cost: Vec<T>, a: Matrix<T>, b: Vec<T>) -> Self {
        assert_eq!(cost.len(), a.cols());
        assert_eq!(b.len(), a.rows());
        Self { cost, a, b }
    }

    pub fn solve(&self) -> LpOutcome<T> {
        let m = self.a.rows();
        let n = self.a.cols();
        let eps = T::of(1e-10);
        let bscale = T::one() + crate::scalar::max_abs(&self.b);
        let width = n + m;
        let mut t = Vec::with_capacity(m + 1);
        for i in 0..m {
            let flip = self.b[i] < T::zero();
            let mut row = vec![T::zero(); width + 1];
            for j in 0..n {
                row[j] = if flip { -self.a[(i, j)] } else { self.a[(i, j)] };
            }
            row[n + i] = T::one();
            row[width] = if flip { -self.b[i] } else { self.b[i] };
            t.push(row);
        }
        // phase one objective: sum of artificials, priced out
        let mut z = vec![T::zero(); width + 1];
        for row in &t {
            for j in 0..n {
                z[j] -= row[j];
            }
            z[width] -= row[width];
        }
        t.push(z);
        let mut tab = Tableau { t, basis: (n..n + m).collect(), width, pivots: 0 };
        if let Err(e) = tab.optimize(n, eps) {
            return match e {
                LpOutcome::Unbounded => LpOutcome::Infeasible,
                other => other,
            };
        }
        if -tab.t[m][width] > T::of(1e-8) * bscale {
            return LpOutcome::Infeasible;
        }
        // drive artificials out of the basis; rows that cannot be cleared are redundant
        let mut redundant = Vec::new();
        for r in 0..m {
            if tab.basis[r] >= n {
                let col = (0..n).find(|&j| tab.t[r][j].abs() > T::of(1e-9));
                match col {
                    Some(c) => tab.pivot(r, c),
                    None => redundant.push(r),
                }
            }
        }
        for &r in redundant.iter().rev() {
            tab.t.remove(r);
            tab.basis.remove(r);
        }
        let m2 = tab.basis.len();
        let mut z = vec![T::zero(); width + 1];
        z[..n].copy_from_slice(&self.cost);
        for i in 0..m2 {
            let cb = if tab.basis[i] < n { self.cost[tab.basis[i]] } else { T::zero() };
            if cb == T::zero() {
                continue;
            }
            for j in 0..=width {
                z[j] -= cb * tab.t[i][j];
            }
        }
        tab.t[m2] = z;
        if let Err(e) = tab.optimize(n, eps) {
            return e;
        }
        let mut x = vec![T::zero(); n];
        for (i, &bi) in tab.basis.iter().enumerate() {
            if bi < n {
                x[bi] = tab.t[i][width].max(T::zero());
            }
        }
        let objective = crate::scalar::dot(&self.cost, &x);
        LpOutcome::Optimal(LpSolution { x, objective, pivots: tab.pivots })
    }
}
