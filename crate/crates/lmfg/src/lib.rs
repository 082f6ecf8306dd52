//! Discrete-time linear mean-field games with discounted cost on finite
//! state and action spaces: equilibrium computation and verification.
//!
//! The crate is organized around one object, the linear mean-field model
//! ([`model::MfgModel`]), and three ways of interrogating it:
//!
//! * solve for a stationary mean-field equilibrium by writing the coupled
//!   optimality and invariance conditions of the two-player formulation as a
//!   square root-finding problem over occupation measures and KKT
//!   multipliers, then driving it to zero with a potential-reduction
//!   interior-point method ([`gnep`], [`ipsolver`]);
//! * verify candidate equilibria against independent dynamic-programming
//!   oracles ([`mdp`]) and exact optimal transport ([`transport`]);
//! * quantify how well the mean-field limit approximates the N-agent game,
//!   exactly for small N and by Monte Carlo for large N ([`finite_n`]), and
//!   evaluate every closed-form approximation bound ([`bounds`]).
//!
//! All dimensions are desk-scale by design: tensors are dense, linear
//! systems are solved directly, and every solver path is deterministic for a
//! fixed configuration.

pub mod bounds;
pub mod finite_n;
pub mod gnep;
pub mod ipsolver;
mod linalg;
pub mod mdp;
pub mod model;
#[cfg(test)]
pub(crate) mod testutil;
pub mod transport;
