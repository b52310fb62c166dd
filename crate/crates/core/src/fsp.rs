//! Fictitious-self-play building blocks: observation records, state windows,
//! the `1/t` mixing schedule and the supervised average-strategy model.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::Observation;
use crate::nn::{Activation, Adam, Mlp, ParamStore, Tape};
use crate::scalar::Scalar;

/// Number of entries in an SL state: valuation, reserve, occupied flag,
/// bidder count, active bids, previous price.
pub const SL_FEATURES: usize = 6;
/// RL records append the others' last price and the previous payoff.
pub const RL_FEATURES: usize = SL_FEATURES + 2;

/// Divisors applied to raw observations so every feature is O(1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale<T> {
    pub price: T,
    pub reserve: T,
    pub bidders: T,
    pub payoff: T,
}

impl<T: Scalar> FeatureScale<T> {
    pub fn identity() -> Self {
        Self { price: T::one(), reserve: T::one(), bidders: T::one(), payoff: T::one() }
    }
}

/// Private and environment information, `(ρ, e)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlRecord<T> {
    pub state: Vec<T>,
    pub action: Vec<T>,
}

/// One observation as seen by the learner.
///
/// Feature order: `[valuation, reserve, occupied, num_bidders, active_bids,
/// last_price, others_price, prev_payoff]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlRecord<T> {
    pub features: Vec<T>,
}

pub fn sl_state<T: Scalar>(obs: &Observation<T>, scale: &FeatureScale<T>) -> Vec<T> {
    vec![
        obs.valuation / scale.price,
        obs.reserve / scale.reserve,
        if obs.occupied { T::one() } else { T::zero() },
        T::from_usize_lossy(obs.num_bidders) / scale.bidders,
        T::from_usize_lossy(obs.active_bids) / scale.bidders,
        obs.last_price / scale.price,
    ]
}

/// `others_price` is the last final price paid by a different bidder (zero
/// if this bidder won or nobody did); `prev_payoff` the payoff accumulated
/// since the previous decision.
pub fn rl_record<T: Scalar>(obs: &Observation<T>, others_price: T, prev_payoff: T, scale: &FeatureScale<T>) -> RlRecord<T> {
    let mut features = sl_state(obs, scale);
    features.push(others_price / scale.price);
    features.push(prev_payoff / scale.payoff);
    RlRecord { features }
}

/// The `ν` most recent records, oldest first, zero-padded on the left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateWindow<T> {
    pub records: Vec<Vec<T>>,
}

impl<T: Scalar> StateWindow<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Row-major `ν × features`.
    pub fn flatten(&self) -> Vec<T> {
        self.records.iter().flatten().copied().collect()
    }
}

pub fn build_state<T: Scalar>(memory: &VecDeque<RlRecord<T>>, window: usize, features: usize) -> StateWindow<T> {
    assert!(window > 0, "state window must be positive");
    let have = memory.len().min(window);
    let mut records = vec![vec![T::zero(); features]; window - have];
    records.extend(memory.iter().skip(memory.len() - have).map(|r| r.features.clone()));
    StateWindow { records }
}

/// Global step counter with `η = 1/t`. Never reset between episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixSchedule {
    pub t: u64,
}

impl Default for MixSchedule {
    fn default() -> Self {
        Self { t: 1 }
    }
}

impl MixSchedule {
    pub fn eta<T: Scalar>(&self) -> T {
        T::one() / T::lit(self.t as f64)
    }

    pub fn advance(&mut self) {
        self.t += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixMode {
    /// Play `ζ` with probability `η`, otherwise `ψ`.
    #[default]
    Stochastic,
    /// Play `(1 − η) ψ + η ζ`.
    Convex,
}

pub fn choose_action<T: Scalar, R: Rng + ?Sized>(psi: &[T], zeta: &[T], eta: T, mode: MixMode, rng: &mut R) -> Vec<T> {
    match mode {
        MixMode::Stochastic => {
            let pick_zeta = eta >= T::one() || (eta > T::zero() && T::lit(rng.random::<f64>()) < eta);
            if pick_zeta { zeta.to_vec() } else { psi.to_vec() }
        }
        MixMode::Convex => psi.iter().zip(zeta).map(|(p, z)| (T::one() - eta) * *p + eta * *z).collect(),
    }
}

/// Supervised model of the agent's own past play.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SlModel<T> {
    pub store: ParamStore<T>,
    net: Mlp,
    #[serde(skip)]
    adam: Option<Adam<T>>,
    lr: T,
}

impl<T: Scalar> SlModel<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: &[usize], outputs: usize, lr: T, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let mut sizes = vec![inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(outputs);
        let net = Mlp::new(&mut store, "sl", &sizes, Activation::Relu, Activation::Identity, rng);
        let adam = Some(Adam::new(&store, lr));
        Self { store, net, adam, lr }
    }

    pub fn predict(&self, state: &[T]) -> Vec<T> {
        let mut tape = Tape::new(&self.store);
        let x = tape.input(state.to_vec());
        let y = self.net.forward(&mut tape, x);
        tape.value(y).to_vec()
    }

    /// One Adam step on a mean-squared-error minibatch drawn without
    /// replacement; returns the batch loss before the step.
    pub fn update<R: Rng + ?Sized>(&mut self, memory: &VecDeque<SlRecord<T>>, batch_size: usize, rng: &mut R) -> T {
        assert!(!memory.is_empty(), "SL update on empty memory");
        let n = batch_size.min(memory.len()).max(1);
        let picks: Vec<usize> = if n == memory.len() { (0..n).collect() } else { index::sample(rng, memory.len(), n).into_vec() };
        let mut tape = Tape::new(&self.store);
        let mut seeds = Vec::with_capacity(n);
        let mut total = T::zero();
        let inv = T::one() / T::from_usize_lossy(n);
        for &i in &picks {
            let rec = &memory[i];
            let x = tape.input(rec.state.clone());
            let y = self.net.forward(&mut tape, x);
            let d: Vec<T> = tape.value(y).iter().zip(&rec.action).map(|(p, a)| *p - *a).collect();
            total += d.iter().map(|v| *v * *v).sum::<T>();
            seeds.push((y, d.iter().map(|v| T::lit(2.0) * *v * inv).collect::<Vec<T>>()));
        }
        let seed_refs: Vec<_> = seeds.iter().map(|(v, g)| (*v, g.as_slice())).collect();
        let grads = tape.backward(&seed_refs).params;
        drop(tape);
        if grads.is_finite() {
            let lr = self.lr;
            let adam = self.adam.get_or_insert_with(|| Adam::new(&self.store, lr));
            adam.step(&mut self.store, &grads);
        }
        total * inv
    }
}

/// Fixed-capacity FIFO.
pub fn push_bounded<X>(buf: &mut VecDeque<X>, item: X, capacity: usize) {
    if buf.len() == capacity {
        buf.pop_front();
    }
    buf.push_back(item);
}
