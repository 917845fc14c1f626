//! Convex duality for utility maximisation with intermediate consumption on
//! finite scenario trees.
//!
//! [`primal::solve_primal`] maximises expected utility of consumption over
//! self-financing strategies, [`dual::solve_dual`] minimises the conjugate
//! over martingale densities, and [`harness`] checks the duality relations
//! between them as more assets become tradable. Everything is generic over
//! [`Real`]; the `*64` aliases fix the scalar to `f64`.

pub mod barrier;
pub mod dual;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod market;
pub mod primal;
pub mod scalar;
pub mod utility;

pub use barrier::{SolveError, SolverOptions};
pub use dual::{solve_dual, DualSolution};
pub use market::{build_example_market, build_tree, ExampleMarketSpec, Limits, MarketModel, ModelError, TreeSpec};
pub use primal::{solve_primal, PrimalSolution};
pub use scalar::Real;
pub use utility::{UtilityFamily, UtilityField};

pub type MarketModel64 = MarketModel<f64>;
pub type TreeSpec64 = TreeSpec<f64>;
pub type UtilityField64 = UtilityField<f64>;
pub type PrimalSolution64 = PrimalSolution<f64>;
pub type DualSolution64 = DualSolution<f64>;
pub type SolverOptions64 = SolverOptions<f64>;
pub type ValueCurves64 = harness::ValueCurves<f64>;

pub type MarketModel32 = MarketModel<f32>;
pub type UtilityField32 = UtilityField<f32>;
