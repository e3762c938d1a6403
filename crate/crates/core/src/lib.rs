//! Solvers and diagnostics for finite communicating Markov decision processes
//! under the average-reward criterion.
//!
//! The crate is organized around a small set of building blocks:
//!
//! - [`mdp`]: the model type, validation, policy evaluation (gain/bias),
//!   optimal solutions with Bellman gaps and pair classification, diameter.
//! - [`divergence`]: KL divergences between reward distributions, kernels and
//!   models; weighted information values; trajectory log-likelihood ratios.
//! - [`structure`]: closed pair sets, contractions (minors), invariant-measure
//!   polytopes and the representation of contracted measures.
//! - [`confusing`]: confusing/alternative model tests, local modifications,
//!   the constructive certificate builder and unlikelihood solvers.
//! - [`lowerbound`]: the regret lower bound `K(M)` via cutting planes, plus
//!   closed-form specializations (bandits, optimally recurrent models,
//!   switching-cost bandits, the navigation-free relaxation).
//! - [`hardness`]: knapsack widget families and brute-force decision
//!   procedures for the embedded reductions.
//! - [`simulator`]: seeded trajectory simulation and empirical checks of the
//!   exact identities (quasi-flow, pseudo-regret, likelihood, navigation).
//!
//! Everything is deterministic: random draws go through a counter-based
//! generator seeded explicitly, parallel maps collect in input order, and
//! tie-breaking is by canonical pair order throughout.

pub mod confusing;
pub mod error;
pub(crate) mod graph;
pub mod divergence;
pub mod gen;
pub mod hardness;
pub mod linalg;
pub mod lowerbound;
pub mod lp;
pub mod mdp;
pub mod par;
pub mod rng;
pub mod simulator;
pub mod structure;
pub mod tol;

pub use divergence::PairMeasure;
pub use mdp::{DetPolicy, Mdp, OptimalSolution, Policy, PolicyEvaluation, RewardDist};
