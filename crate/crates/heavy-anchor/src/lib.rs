//! Nash equilibrium seeking in monotone and hypomonotone games.
//!
//! The library implements anchored gradient-play ("Heavy Anchor") dynamics
//! in two information settings: full decision information, where every agent
//! observes the joint action x and plays xdot = -F(x) - beta(x - r),
//! rdot = alpha(x - r); and partial decision information, where each agent
//! keeps an estimate of the joint action and the stacked estimates follow a
//! Laplacian-coupled lift of the same dynamics over a communication graph.
//!
//! Alongside the integrators, the crate mechanizes the convergence
//! certificates: operator moduli (hypomonotonicity, Lipschitz, inverse
//! Lipschitz), resolvent bounds, feasible (alpha, beta) intervals, and the
//! minimum consensus gain c, each returned with the auxiliary quantities
//! needed to audit the claim.

pub mod diagnostics;
pub mod dynamics;
pub mod game_model;
pub mod graph;
pub mod linalg;
pub mod operator_analysis;
pub mod param_synth;
pub mod scenario;
