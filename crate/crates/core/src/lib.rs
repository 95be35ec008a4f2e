//! Solver toolkit for a two-level pricing game between an electricity
//! aggregator and storage-enabled users facing uncertain renewable supply.
//!
//! The lower level is a finite-horizon Markov game on private states
//! (public renewable forecast error plus each user's own storage). Its pure
//! equilibria are computed through a demand-only reduction that is an exact
//! Markov potential game: best-response improvement sweeps converge in
//! finitely many steps and the result lifts back to a private-state
//! equilibrium. A decentralized fictitious-play learner covers the
//! incomplete-information case, and the upper level optimizes the pricing
//! coefficients by exhaustive grid search over induced equilibria.

// Index loops mirror the stage/state/user math throughout.
#![allow(clippy::needless_range_loop)]
// Validation uses !(x > 0.0) so that NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod fp;
pub mod ingest;
pub mod mdp;
pub mod model;
pub mod mpg;
pub mod par;
pub mod payoff;
pub mod pricing;

pub use error::{IngestError, MdpError, ModelError, PayoffError, ValidationIssue};
pub use model::{
    build_reduced_game, chain_marginals, validate_game, ForecastChain, GameG1, GameG2,
    LeaderParams, PricingParams, UserSpec, Utility,
};
pub use mpg::{
    accelerated_best_response, best_response_policy, fip_solve, improvement_delta, lift_to_pme,
    EquilibriumResult, PmsProfile, PurePublicPolicy, UserPms,
};
