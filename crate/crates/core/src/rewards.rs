//! Episode-level reward aggregates and the two extrinsic signals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    /// The bidder's own cumulated payoff over the episode.
    Payoff,
    /// Jain index of broker payments, identical for every bidder.
    Fairness,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("cannot aggregate an empty payoff window")]
    EmptyWindow,
    #[error("fairness index needs at least one bidder")]
    NoBidders,
    #[error("payment totals must be finite and non-negative")]
    NegativePayment,
}

/// Per-bidder payment and payoff sequences over one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaymentLedger<T> {
    pub payments: Vec<Vec<T>>,
    pub payoffs: Vec<Vec<T>>,
}

impl<T: Scalar> PaymentLedger<T> {
    pub fn new(bidders: usize) -> Self {
        Self { payments: vec![Vec::new(); bidders], payoffs: vec![Vec::new(); bidders] }
    }

    pub fn push(&mut self, bidder: usize, payment: T, payoff: T) {
        self.payments[bidder].push(payment);
        self.payoffs[bidder].push(payoff);
    }

    pub fn payment_totals(&self) -> Vec<T> {
        self.payments.iter().map(|p| p.iter().copied().sum()).collect()
    }
}

/// `U = Σ u` over the window.
pub fn cumulated_payoff<T: Scalar>(payoffs: &[T]) -> Result<T, RewardError> {
    if payoffs.is_empty() {
        return Err(RewardError::EmptyWindow);
    }
    Ok(payoffs.iter().copied().sum())
}

/// Jain's fairness index `(Σ s)² / (n Σ s²)`, in `[1/n, 1]`.
///
/// All-zero totals count as perfectly equal and yield 1.
pub fn jain_index<T: Scalar>(totals: &[T]) -> Result<T, RewardError> {
    if totals.is_empty() {
        return Err(RewardError::NoBidders);
    }
    if totals.iter().any(|s| !(*s >= T::zero()) || !s.is_finite()) {
        return Err(RewardError::NegativePayment);
    }
    let peak = totals.iter().copied().fold(T::zero(), T::max);
    if peak == T::zero() {
        return Ok(T::one());
    }
    // normalizing by the peak keeps the equal and one-hot cases exact
    let sum: T = totals.iter().map(|s| *s / peak).sum();
    let sq: T = totals.iter().map(|s| (*s / peak) * (*s / peak)).sum();
    let n = T::from_usize_lossy(totals.len());
    // clamp rounding excursions back into the provable range
    Ok((sum * sum / (n * sq)).min(T::one()).max(T::one() / n))
}

/// Extrinsic signal delivered to `bidder` at the end of an episode.
pub fn extrinsic_signal<T: Scalar>(kind: SignalKind, ledger: &PaymentLedger<T>, bidder: usize) -> T {
    match kind {
        SignalKind::Payoff => cumulated_payoff(&ledger.payoffs[bidder]).unwrap_or_else(|_| T::zero()),
        SignalKind::Fairness => jain_index(&ledger.payment_totals()).unwrap_or_else(|_| T::one()),
    }
}
