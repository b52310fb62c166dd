//! Numerical checks of the equilibrium results behind the arena: the
//! allocation game's exact potential, second-price best responses with a
//! losing cost, and the fairness-constrained welfare optimum of the NE rule.

pub mod pareto;
pub mod potential;
pub mod spa;

use thiserror::Error;

pub use pareto::{
    fairness_ratio, ne_allocation, solve_lambda_star, verify_welfare_optimality, HalfPlaneRule, ParetoInstance,
    WelfareReport, Winner,
};
pub use potential::{player_utility, potential_value, verify_exact_potential, PotentialGameInstance};
pub use spa::{best_response_curve, check_piecewise_linear_form, spa_payoff, BranchReport, SpaInstance, ValuationDist};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid instance: {0}")]
    Instance(String),
    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),
    #[error("no samples where bidder {0} wins; fairness ratio undefined")]
    EmptyEvent(u8),
    #[error("fairness ratio {target} not reachable: {detail}")]
    Infeasible { target: f64, detail: String },
}
