//! Stochastic utility fields and their Legendre-Fenchel conjugates.
//!
//! A field is a deterministic base utility (log, power or the bounded
//! spliced family) optionally multiplied by a positive weight per node.
//! The bounded family has marginal `x^-alpha` on `(0, 1]` and `x^-beta`
//! above 1, with `U(0) = 0`, so it is bounded above by
//! `1/(1-alpha) + 1/(beta-1)`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::market::NodeId;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UtilityError {
    #[error("utility evaluated at negative wealth {0}")]
    NegativeArgument(f64),
    #[error("argument must be strictly positive, got {0}")]
    NonpositiveArgument(f64),
    #[error("invalid utility parameters: {0}")]
    InvalidParameters(String),
    #[error("could not bracket the inverse marginal at y = {0}")]
    Bracketing(f64),
}

/// Pointwise access to a utility `x -> U(node, x)` on `(0, inf)`.
///
/// Implementors need not validate inputs; the checked entry points live on
/// [`UtilityField`].
pub trait Utility<T: Real> {
    fn value(&self, node: NodeId, x: T) -> T;
    fn marginal_at(&self, node: NodeId, x: T) -> T;
    /// Second derivative; may jump where the field is only C^1.
    fn curvature(&self, node: NodeId, x: T) -> T;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilityFamily<T> {
    Log,
    Power { gamma: T },
    Bounded { alpha: T, beta: T },
}

impl<T: Real> UtilityFamily<T> {
    pub fn validate(&self) -> Result<(), UtilityError> {
        match *self {
            Self::Log => Ok(()),
            Self::Power { gamma } if gamma < T::one() && gamma != T::zero() && gamma.is_finite() => Ok(()),
            Self::Power { gamma } => Err(UtilityError::InvalidParameters(format!("power gamma = {gamma} must be < 1 and nonzero"))),
            Self::Bounded { alpha, beta } if alpha > T::zero() && alpha < T::one() && beta > T::one() && beta.is_finite() => Ok(()),
            Self::Bounded { alpha, beta } => Err(UtilityError::InvalidParameters(format!(
                "bounded family needs alpha in (0, 1) and beta > 1, got alpha = {alpha}, beta = {beta}"
            ))),
        }
    }

    fn value(&self, x: T) -> T {
        match *self {
            Self::Log => x.ln(),
            Self::Power { gamma } => {
                if x == T::zero() {
                    if gamma > T::zero() { T::zero() } else { T::neg_infinity() }
                } else {
                    x.powf(gamma) / gamma
                }
            }
            Self::Bounded { alpha, beta } => {
                let a1 = T::one() - alpha;
                if x <= T::one() {
                    x.powf(a1) / a1
                } else {
                    T::one() / a1 + (T::one() - x.powf(T::one() - beta)) / (beta - T::one())
                }
            }
        }
    }

    fn marginal(&self, x: T) -> T {
        match *self {
            Self::Log => x.recip(),
            Self::Power { gamma } => x.powf(gamma - T::one()),
            Self::Bounded { alpha, beta } => {
                if x <= T::one() {
                    x.powf(-alpha)
                } else {
                    x.powf(-beta)
                }
            }
        }
    }

    fn curvature(&self, x: T) -> T {
        match *self {
            Self::Log => -(x * x).recip(),
            Self::Power { gamma } => (gamma - T::one()) * x.powf(gamma - T::two()),
            Self::Bounded { alpha, beta } => {
                if x <= T::one() {
                    -alpha * x.powf(-alpha - T::one())
                } else {
                    -beta * x.powf(-beta - T::one())
                }
            }
        }
    }

    fn inverse_marginal(&self, y: T) -> T {
        match *self {
            Self::Log => y.recip(),
            Self::Power { gamma } => y.powf((gamma - T::one()).recip()),
            Self::Bounded { alpha, beta } => {
                if y >= T::one() {
                    y.powf(-alpha.recip())
                } else {
                    y.powf(-beta.recip())
                }
            }
        }
    }

    /// `lim_{x -> inf} U(x)`, which is also `V(0+)`.
    fn supremum(&self) -> T {
        match *self {
            Self::Log => T::infinity(),
            Self::Power { gamma } if gamma > T::zero() => T::infinity(),
            Self::Power { .. } => T::zero(),
            Self::Bounded { alpha, beta } => (T::one() - alpha).recip() + (beta - T::one()).recip(),
        }
    }
}

/// Base family times an optional positive weight per node (missing nodes
/// have weight 1).
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityField<T> {
    family: UtilityFamily<T>,
    weights: BTreeMap<NodeId, T>,
}

impl<T: Real> UtilityField<T> {
    pub fn new(family: UtilityFamily<T>) -> Result<Self, UtilityError> {
        family.validate()?;
        Ok(Self { family, weights: BTreeMap::new() })
    }

    pub fn log() -> Self {
        Self { family: UtilityFamily::Log, weights: BTreeMap::new() }
    }

    pub fn power(gamma: T) -> Result<Self, UtilityError> {
        Self::new(UtilityFamily::Power { gamma })
    }

    pub fn bounded(alpha: T, beta: T) -> Result<Self, UtilityError> {
        Self::new(UtilityFamily::Bounded { alpha, beta })
    }

    pub fn with_weights(mut self, weights: BTreeMap<NodeId, T>) -> Result<Self, UtilityError> {
        if let Some((k, w)) = weights.iter().find(|(_, w)| !(w.is_finite() && **w > T::zero())) {
            return Err(UtilityError::InvalidParameters(format!("weight {w} at node {k} must be positive and finite")));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn family(&self) -> UtilityFamily<T> {
        self.family
    }

    pub fn is_weighted(&self) -> bool {
        !self.weights.is_empty()
    }

    pub fn weights(&self) -> &BTreeMap<NodeId, T> {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, node: NodeId) -> T {
        self.weights.get(&node).copied().unwrap_or_else(T::one)
    }

    /// `U(node, x)` for `x >= 0`; at 0 the right limit, possibly `-inf`.
    pub fn eval_utility(&self, node: NodeId, x: T) -> Result<T, UtilityError> {
        if x < T::zero() || x.is_nan() {
            return Err(UtilityError::NegativeArgument(x.to_f64_lossy()));
        }
        Ok(self.value(node, x))
    }

    pub fn marginal(&self, node: NodeId, x: T) -> Result<T, UtilityError> {
        if !(x > T::zero()) {
            return Err(UtilityError::NonpositiveArgument(x.to_f64_lossy()));
        }
        Ok(self.marginal_at(node, x))
    }

    /// The `x` with `U'(node, x) = y`, in closed form for every built-in family.
    pub fn inverse_marginal(&self, node: NodeId, y: T) -> Result<T, UtilityError> {
        if !(y > T::zero()) {
            return Err(UtilityError::NonpositiveArgument(y.to_f64_lossy()));
        }
        Ok(self.inverse_marginal_at(node, y))
    }

    #[inline]
    pub(crate) fn inverse_marginal_at(&self, node: NodeId, y: T) -> T {
        self.family.inverse_marginal(y / self.weight(node))
    }

    /// Threshold the example market's up-probability must exceed:
    /// `(U(1) - U(1/2)) / (U(2) - U(1/2))` for the base family.
    pub fn example_threshold(&self) -> T {
        let f = &self.family;
        let lo = f.value(T::half());
        (f.value(T::one()) - lo) / (f.value(T::two()) - lo)
    }
}

impl<T: Real> Utility<T> for UtilityField<T> {
    #[inline]
    fn value(&self, node: NodeId, x: T) -> T {
        self.weight(node) * self.family.value(x)
    }

    #[inline]
    fn marginal_at(&self, node: NodeId, x: T) -> T {
        self.weight(node) * self.family.marginal(x)
    }

    #[inline]
    fn curvature(&self, node: NodeId, x: T) -> T {
        self.weight(node) * self.family.curvature(x)
    }
}

/// Solves `U'(node, x) = y` by bisection in log-space. The bracket starts at
/// `[1e-12, 1e12]` and widens by factors of `1e6` until it straddles the
/// root; iteration stops once `hi / lo - 1 <= 1e-12`.
pub fn inverse_marginal_bisect<T: Real, U: Utility<T> + ?Sized>(u: &U, node: NodeId, y: T) -> Result<T, UtilityError> {
    if !(y > T::zero()) {
        return Err(UtilityError::NonpositiveArgument(y.to_f64_lossy()));
    }
    let widen = T::of(1e6);
    let mut lo = T::of(1e-12);
    let mut hi = T::of(1e12);
    let mut guard = 0;
    while u.marginal_at(node, lo) <= y {
        lo /= widen;
        guard += 1;
        if guard > 40 || lo == T::zero() {
            return Err(UtilityError::Bracketing(y.to_f64_lossy()));
        }
    }
    while u.marginal_at(node, hi) >= y {
        hi *= widen;
        guard += 1;
        if guard > 40 || !hi.is_finite() {
            return Err(UtilityError::Bracketing(y.to_f64_lossy()));
        }
    }
    let tol = T::of(1e-12);
    for _ in 0..400 {
        if hi / lo - T::one() <= tol {
            break;
        }
        let mid = (lo * hi).sqrt();
        if u.marginal_at(node, mid) > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ConjugateStrategy {
    /// Closed-form `V`.
    Analytic,
    /// `V(y) = U(I(y)) - y I(y)` with `I` the inverse marginal.
    NumericInversion,
}

/// `V(node, y) = sup_{x > 0} (U(node, x) - x y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateField<T> {
    field: UtilityField<T>,
    strategy: ConjugateStrategy,
}

/// Conjugate with the analytic strategy where a closed form exists.
pub fn conjugate<T: Real>(field: &UtilityField<T>) -> ConjugateField<T> {
    let strategy = match field.family {
        UtilityFamily::Log | UtilityFamily::Power { .. } => ConjugateStrategy::Analytic,
        UtilityFamily::Bounded { .. } => ConjugateStrategy::NumericInversion,
    };
    ConjugateField { field: field.clone(), strategy }
}

impl<T: Real> ConjugateField<T> {
    pub fn with_strategy(field: &UtilityField<T>, strategy: ConjugateStrategy) -> Self {
        Self { field: field.clone(), strategy }
    }

    pub fn strategy(&self) -> ConjugateStrategy {
        self.strategy
    }

    pub fn field(&self) -> &UtilityField<T> {
        &self.field
    }

    /// `V(node, y)` for `y >= 0`; at 0 the right limit `sup U`, possibly `+inf`.
    pub fn value(&self, node: NodeId, y: T) -> T {
        let w = self.field.weight(node);
        if y <= T::zero() {
            return w * self.field.family.supremum();
        }
        let eta = y / w;
        let base = match (self.strategy, self.field.family) {
            (ConjugateStrategy::Analytic, UtilityFamily::Log) => -eta.ln() - T::one(),
            (ConjugateStrategy::Analytic, UtilityFamily::Power { gamma }) => {
                (T::one() - gamma) / gamma * eta.powf(gamma / (gamma - T::one()))
            }
            _ => {
                let x = self.field.family.inverse_marginal(eta);
                self.field.family.value(x) - eta * x
            }
        };
        w * base
    }

    /// `V'(node, y) = -I(node, y)`.
    pub fn derivative(&self, node: NodeId, y: T) -> T {
        -self.field.inverse_marginal_at(node, y)
    }

    /// `V''(node, y) = -1 / U''(I(y))`.
    pub fn second_derivative(&self, node: NodeId, y: T) -> T {
        let x = self.field.inverse_marginal_at(node, y);
        -self.field.curvature(node, x).recip()
    }

    /// `V(node, 0+)`.
    pub fn value_at_zero(&self, node: NodeId) -> T {
        self.value(node, T::zero())
    }
}

/// Marginal utility near the ends of the half-line.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct InadaReport {
    pub marginal_near_zero: f64,
    pub marginal_near_infinity: f64,
    pub zero_ok: bool,
    pub infinity_ok: bool,
}

impl InadaReport {
    pub fn passed(&self) -> bool {
        self.zero_ok && self.infinity_ok
    }
}

/// Probes `U'` at `1e-8` (expects more than `1e3`) and at `1e8` (expects
/// less than `1e-3`).
pub fn check_inada<T: Real, U: Utility<T> + ?Sized>(u: &U, node: NodeId) -> InadaReport {
    let near_zero = u.marginal_at(node, T::of(1e-8));
    let near_inf = u.marginal_at(node, T::of(1e8));
    InadaReport {
        marginal_near_zero: near_zero.to_f64_lossy(),
        marginal_near_infinity: near_inf.to_f64_lossy(),
        zero_ok: near_zero > T::of(1e3),
        infinity_ok: near_inf < T::of(1e-3),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn fields() -> Vec<UtilityField<f64>> {
        vec![UtilityField::log(), UtilityField::power(0.5).unwrap(), UtilityField::bounded(0.5, 2.0).unwrap()]
    }

    #[test]
    fn utility_values() {
        assert_eq!(UtilityField::<f64>::log().eval_utility(0, 1.0).unwrap(), 0.0);
        assert!((UtilityField::<f64>::power(0.5).unwrap().eval_utility(0, 4.0).unwrap() - 4.0).abs() < TOL);
        assert_eq!(UtilityField::<f64>::log().eval_utility(0, 0.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(UtilityField::bounded(0.5, 2.0).unwrap().eval_utility(0, 0.0).unwrap(), 0.0);
        assert!(matches!(UtilityField::<f64>::log().eval_utility(0, -1.0), Err(UtilityError::NegativeArgument(_))));
    }

    #[test]
    fn marginals() {
        assert!((UtilityField::<f64>::log().marginal(0, 2.0).unwrap() - 0.5).abs() < TOL);
        assert!((UtilityField::<f64>::power(0.5).unwrap().marginal(0, 4.0).unwrap() - 0.5).abs() < TOL);
        assert!((UtilityField::<f64>::bounded(0.5, 2.0).unwrap().marginal(0, 0.25).unwrap() - 2.0).abs() < TOL);
        assert!(UtilityField::<f64>::log().marginal(0, 0.0).is_err());
    }

    #[test]
    fn marginal_matches_finite_differences() {
        for f in fields() {
            for &x in &[0.1, 0.5, 0.9, 1.7, 10.0] {
                let h = 1e-5 * x;
                let fd = (f.value(0, x + h) - f.value(0, x - h)) / (2.0 * h);
                let m = f.marginal(0, x).unwrap();
                assert!(((fd - m) / m).abs() < 1e-6, "{f:?} x={x}: {fd} vs {m}");
            }
        }
    }

    #[test]
    fn inverse_marginals() {
        assert!((UtilityField::<f64>::log().inverse_marginal(0, 0.5).unwrap() - 2.0).abs() < TOL);
        assert!((UtilityField::<f64>::power(0.5).unwrap().inverse_marginal(0, 0.5).unwrap() - 4.0).abs() < TOL);
        assert!(UtilityField::<f64>::log().inverse_marginal(0, -1.0).is_err());
        for f in fields() {
            for &x in &[0.1, 1.0, 10.0] {
                let y = f.marginal(0, x).unwrap();
                let back = f.inverse_marginal(0, y).unwrap();
                assert!((back - x).abs() < 1e-9 * x);
                let bis = inverse_marginal_bisect(&f, 0, y).unwrap();
                assert!((bis - x).abs() < 1e-10 * x, "bisection {bis} vs {x}");
            }
        }
    }

    #[test]
    fn conjugates() {
        assert!((conjugate(&UtilityField::<f64>::log()).value(0, 1.0) + 1.0).abs() < TOL);
        assert!((conjugate(&UtilityField::<f64>::power(0.5).unwrap()).value(0, 1.0) - 1.0).abs() < TOL);
        let b = UtilityField::bounded(0.5, 2.0).unwrap();
        let v = conjugate(&b);
        assert_eq!(v.strategy(), ConjugateStrategy::NumericInversion);
        // brute-force grid maximisation of U(x) - 2x over [1e-6, 1e3]
        let y = 2.0;
        let n = 2_000_000;
        let (lo, hi) = (1e-6f64.ln(), 1e3f64.ln());
        let grid_max = (0..=n)
            .map(|i| (lo + (hi - lo) * i as f64 / n as f64).exp())
            .map(|x| b.value(0, x) - x * y)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((v.value(0, y) - grid_max).abs() < 1e-6, "{} vs {grid_max}", v.value(0, y));
        assert!((v.value_at_zero(0) - 3.0).abs() < TOL);
    }

    #[test]
    fn numeric_and_analytic_agree() {
        for f in [UtilityField::<f64>::log(), UtilityField::power(0.3).unwrap(), UtilityField::power(-1.5).unwrap()] {
            let a = ConjugateField::with_strategy(&f, ConjugateStrategy::Analytic);
            let n = ConjugateField::with_strategy(&f, ConjugateStrategy::NumericInversion);
            for &y in &[0.01, 0.3, 1.0, 7.0] {
                assert!((a.value(0, y) - n.value(0, y)).abs() < 1e-10 * (1.0 + a.value(0, y).abs()));
            }
        }
    }

    #[test]
    fn weighted_conjugate_identity() {
        let base = UtilityField::<f64>::bounded(0.5, 2.0).unwrap();
        let w = 2.5;
        let weighted = base.clone().with_weights([(3, w)].into_iter().collect()).unwrap();
        let vb = conjugate(&base);
        let vw = conjugate(&weighted);
        for &y in &[0.05, 0.5, 1.0, 2.5, 30.0] {
            assert!((vw.value(3, y) - w * vb.value(3, y / w)).abs() < 1e-10);
            assert_eq!(vw.value(4, y), vb.value(4, y));
        }
        assert!(base.with_weights([(0, 0.0)].into_iter().collect()).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(UtilityField::power(1.0).is_err());
        assert!(UtilityField::power(0.0).is_err());
        assert!(UtilityField::bounded(1.0, 2.0).is_err());
        assert!(UtilityField::bounded(0.5, 1.0).is_err());
    }

    struct Affine;
    impl Utility<f64> for Affine {
        fn value(&self, _: NodeId, x: f64) -> f64 {
            x
        }
        fn marginal_at(&self, _: NodeId, _: f64) -> f64 {
            1.0
        }
        fn curvature(&self, _: NodeId, _: f64) -> f64 {
            0.0
        }
    }

    #[test]
    fn inada_diagnostics() {
        assert!(check_inada(&UtilityField::<f64>::log(), 0).passed());
        assert!(check_inada(&UtilityField::power(0.5).unwrap(), 0).passed());
        let r = check_inada(&Affine, 0);
        assert!(!r.zero_ok && !r.infinity_ok);
        assert!(inverse_marginal_bisect(&Affine, 0, 0.5).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let f = UtilityField::<f32>::power(0.5).unwrap();
        assert!((f.eval_utility(0, 4.0).unwrap() - 4.0).abs() < 1e-6);
        assert!((conjugate(&f).value(0, 1.0) - 1.0).abs() < 1e-6);
    }
}
