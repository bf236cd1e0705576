//! Deterministic multi-agent simulator for indirect reciprocity sustained by
//! public gossip.
//!
//! The crate is organised around the round loop in [`sim`]: a [`scheduler`]
//! fixes who meets whom, [`env`] turns actions into rewards, [`gossip`]
//! validates and interprets the public message pool, and agents are
//! [`strategy::AgentPolicy`] implementations, either scripted or backed by a
//! chat-completions endpoint ([`llm`]). [`metrics`] recomputes every summary
//! statistic from the event log, and [`equilibrium`] checks the analytic
//! cooperation conditions for the matrix games.

// Parameter checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod equilibrium;
pub mod gossip;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod runner;
pub mod scheduler;
pub mod sim;
pub mod strategy;

pub use model::{
    AgentId, AgentMemory, BinaryAction, GameParams, GossipMessage, InteractionRecord, Payload,
    PublicPool, Tone,
};

/// Absolute tolerance used for real-valued invariant checks.
pub const TOLERANCE: f64 = 1e-9;
