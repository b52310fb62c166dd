//! Core of the auction arena: the auction engine, reward signals, learning
//! agents and the analytical game-theory checks.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom of this file pin the common `f64` instantiations.

pub mod actor_critic;
pub mod agents;
pub mod credit;
pub mod curiosity;
pub mod engine;
pub mod fsp;
pub mod game_theory;
pub mod gaussian;
pub mod nn;
pub mod rewards;
pub mod scalar;

pub use scalar::Scalar;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type AuctionConfigF64 = engine::AuctionConfig<f64>;
pub type EpisodeLogF64 = engine::EpisodeLog<f64>;
pub type GaussianPolicyHeadF64 = gaussian::GaussianPolicyHead<f64>;
pub type ActorCriticF64 = actor_critic::ActorCritic<f64>;
pub type AgentConfigF64 = agents::AgentConfig<f64>;
pub type FspAgentF64 = agents::FspAgent<f64>;
