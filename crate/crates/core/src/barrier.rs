//! Log-barrier path following shared by the primal and dual solvers.
//!
//! A problem supplies the barrier objective `t f(z) + phi(z)` and a Newton
//! direction for it; the driver handles centering, step control and the
//! schedule `t <- 10 t` until `m / t <= tol`.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("value diverges: {0}")]
    ValueDivergence(String),
    #[error("no convergence after {iterations} Newton steps (decrement {decrement:e})")]
    NonConvergence { iterations: usize, decrement: f64 },
    #[error("problem too large for this method: {0}")]
    TooLarge(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    /// Target bound on the suboptimality `m / t` of the final central point.
    pub tol: T,
    /// Budget of Newton steps across all centering rounds.
    pub max_iter: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self { tol: T::of(1e-8), max_iter: 500 }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self { tol, ..Self::default() }
    }

    pub(crate) fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol > T::zero()) || self.max_iter == 0 {
            return Err(SolveError::InvalidInput(format!("tolerance {} and budget {} must be positive", self.tol, self.max_iter)));
        }
        Ok(())
    }
}

pub(crate) trait BarrierProblem<T: Real> {
    type State: Clone;
    type Direction;

    /// Number of logarithmic barrier terms.
    fn barrier_terms(&self) -> usize;
    /// Barrier objective at weight `t`; `+inf` outside the domain.
    fn objective(&self, s: &Self::State, t: T) -> T;
    /// Newton direction and the squared Newton decrement.
    fn newton(&self, s: &Self::State, t: T) -> (Self::Direction, T);
    /// Largest step keeping the barrier arguments positive (may be `inf`).
    fn max_step(&self, s: &Self::State, d: &Self::Direction) -> T;
    fn advance(&self, s: &Self::State, d: &Self::Direction, step: T) -> Self::State;
    /// Detects unbounded growth of the iterate.
    fn diverging(&self, _s: &Self::State) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PathResult<S, T> {
    pub state: S,
    pub t: T,
    pub iterations: usize,
    pub decrement: T,
}

const GROWTH: f64 = 10.0;
const INNER_TOL: f64 = 1e-13;
const ARMIJO: f64 = 1e-2;

pub(crate) fn follow_path<T: Real, P: BarrierProblem<T>>(
    problem: &P,
    start: P::State,
    opts: &SolverOptions<T>,
) -> Result<PathResult<P::State, T>, SolveError> {
    opts.validate()?;
    let m = T::from_usize(problem.barrier_terms().max(1)).expect("count");
    let mut t = T::one();
    let mut state = start;
    let mut iterations = 0usize;
    let mut last_dec;
    // accuracy of the last centering, in units of f
    let mut resolved: T;
    loop {
        let mut prev = T::infinity();
        loop {
            let (dir, dec2) = problem.newton(&state, t);
            last_dec = dec2;
            if !dec2.is_finite() {
                return Err(SolveError::NonConvergence { iterations, decrement: f64::INFINITY });
            }
            let half = dec2 * T::half();
            let f0 = problem.objective(&state, t);
            // the decrement estimates f - min f, which rounding resolves only
            // down to a few ulps of f
            let floor = T::of(1e-7).max(T::of(64.0) * T::epsilon() * (T::one() + f0.abs()));
            resolved = half.max(floor) / t;
            if half <= T::of(INNER_TOL) || (half <= floor && dec2 >= prev * T::of(0.25)) {
                break;
            }
            prev = dec2;
            if iterations >= opts.max_iter {
                return Err(SolveError::NonConvergence { iterations, decrement: dec2.to_f64_lossy() });
            }
            iterations += 1;
            let mut step = T::one().min(T::of(0.99) * problem.max_step(&state, &dir));
            let slack = T::of(1e-13) * (T::one() + f0.abs());
            // close to the center a full step only has to avoid an increase
            let damped = half > T::of(0.25);
            let mut accepted = false;
            for _ in 0..80 {
                let next = problem.advance(&state, &dir, step);
                let f1 = problem.objective(&next, t);
                let ok = if damped {
                    f1 <= f0 - T::of(ARMIJO) * step * dec2 + slack
                } else {
                    f1 <= f0 + slack
                };
                if ok {
                    state = next;
                    accepted = true;
                    break;
                }
                step *= T::half();
            }
            if !accepted && half <= floor {
                break;
            }
            if !accepted {
                return Err(SolveError::NonConvergence { iterations, decrement: dec2.to_f64_lossy() });
            }
            if problem.diverging(&state) {
                return Err(SolveError::ValueDivergence("iterates grow without bound".into()));
            }
        }
        if m / t <= opts.tol {
            if resolved > opts.tol {
                // the tolerance is below what the precision can certify
                return Err(SolveError::NonConvergence { iterations, decrement: last_dec.to_f64_lossy() });
            }
            break;
        }
        t *= T::of(GROWTH);
    }
    Ok(PathResult { state, t, iterations, decrement: last_dec })
}
