//! Exact-rational analysis of labelled Markov chains: skewed bisimilarity
//! distances, certified differential-privacy delta bounds, and finite-horizon
//! total-variation lower bounds.
//!
//! All numerics are arbitrary-precision rationals; no floating point enters
//! any result. Distances are computed as least fixed points of a Kantorovich
//! lifting step, lower-bounded by Kleene iteration and upper-bounded by
//! checked pre-fixed-point certificates, so every reported enclosure is sound.

pub mod fixpoint;
pub mod kantorovich;
pub mod lmc;
pub mod lp;
pub mod modelgen;
pub mod rational;
pub mod smt;
pub mod tv;

pub use kantorovich::{Alpha, DistanceMatrix};
pub use lmc::Lmc;
pub use rational::Rational;
