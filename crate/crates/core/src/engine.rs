//! Mechanics of one repeated auction game.
//!
//! Each time step the broker offers one commodity. Free bidders either back
//! off or submit a bid; the round is resolved as a first-price reverse
//! auction (score `d / b`, winner paid `b · d`) or a second-price forward
//! auction (highest bid wins, pays the second-highest bid, earns
//! `(b - p) · d`). Settlement then applies carrying costs, occupation and
//! bankruptcy resets. The engine is a pure state machine over accounts and
//! an explicit rng.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rewards::{self, PaymentLedger, SignalKind};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameKind {
    /// Sellers compete; low price and long service duration score best.
    FpReverse,
    /// Buyers compete; highest bid wins and pays the runner-up's bid.
    SpForward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuctionConfig<T> {
    pub game_kind: GameKind,
    pub num_bidders: usize,
    pub episode_length: usize,
    pub joining_cost: T,
    pub backoff_cost: T,
    pub carrying_cost: T,
    pub initial_reserve: T,
    pub bankruptcy_penalty: T,
    pub sp_duration: usize,
    pub fp_duration_base: T,
    pub fp_duration_slope: T,
    pub backoff_threshold: T,
    pub backoff_scale: T,
    pub bid_floor: T,
    /// Private valuations are drawn uniformly from this range at episode start.
    pub valuation_low: T,
    pub valuation_high: T,
}

impl<T: Scalar> Default for AuctionConfig<T> {
    fn default() -> Self {
        Self {
            game_kind: GameKind::FpReverse,
            num_bidders: 6,
            episode_length: 150,
            joining_cost: T::lit(0.1),
            backoff_cost: T::lit(0.05),
            carrying_cost: T::lit(0.1),
            initial_reserve: T::lit(20.0),
            bankruptcy_penalty: T::lit(5.0),
            sp_duration: 2,
            fp_duration_base: T::one(),
            fp_duration_slope: T::lit(0.5),
            backoff_threshold: T::lit(0.5),
            backoff_scale: T::lit(4.0),
            bid_floor: T::lit(0.1),
            valuation_low: T::one(),
            valuation_high: T::lit(10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("episode length must be positive")]
    EmptyEpisode,
    #[error("at least two bidders are required, got {0}")]
    TooFewBidders(usize),
    #[error("`{0}` must be non-negative")]
    NegativeCost(&'static str),
    #[error("initial reserve must be positive")]
    NonPositiveReserve,
    #[error("backoff threshold must lie strictly inside (0, 1)")]
    ThresholdOutOfRange,
    #[error("backoff scale must be positive")]
    NonPositiveBackoffScale,
    #[error("second-price service duration must be positive")]
    ZeroDuration,
    #[error("first-price duration base must be positive and slope non-negative")]
    InvalidDurationModel,
    #[error("valuation range must satisfy 0 < low <= high")]
    InvalidValuationRange,
}

impl<T: Scalar> AuctionConfig<T> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.episode_length == 0 {
            return Err(ConfigError::EmptyEpisode);
        }
        if self.num_bidders < 2 {
            return Err(ConfigError::TooFewBidders(self.num_bidders));
        }
        let costs = [
            ("joining_cost", self.joining_cost),
            ("backoff_cost", self.backoff_cost),
            ("carrying_cost", self.carrying_cost),
            ("bankruptcy_penalty", self.bankruptcy_penalty),
            ("bid_floor", self.bid_floor),
        ];
        if let Some((name, _)) = costs.iter().find(|(_, v)| !(*v >= T::zero())) {
            return Err(ConfigError::NegativeCost(name));
        }
        if !(self.initial_reserve > T::zero()) {
            return Err(ConfigError::NonPositiveReserve);
        }
        if !(self.backoff_threshold > T::zero() && self.backoff_threshold < T::one()) {
            return Err(ConfigError::ThresholdOutOfRange);
        }
        if !(self.backoff_scale > T::zero()) {
            return Err(ConfigError::NonPositiveBackoffScale);
        }
        if self.sp_duration == 0 {
            return Err(ConfigError::ZeroDuration);
        }
        if !(self.fp_duration_base > T::zero() && self.fp_duration_slope >= T::zero()) {
            return Err(ConfigError::InvalidDurationModel);
        }
        if !(self.valuation_low > T::zero() && self.valuation_high >= self.valuation_low) {
            return Err(ConfigError::InvalidValuationRange);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidderAccount<T> {
    pub bidder_id: usize,
    pub reserve: T,
    /// First step at which the bidder is free again.
    pub occupied_until: usize,
    pub valuation: T,
    pub games_bankrupted: u32,
}

impl<T: Scalar> BidderAccount<T> {
    pub fn new(bidder_id: usize, reserve: T, valuation: T) -> Self {
        Self { bidder_id, reserve, occupied_until: 0, valuation, games_bankrupted: 0 }
    }

    pub fn is_free(&self, step: usize) -> bool {
        self.occupied_until <= step
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidAction<T> {
    pub alpha: T,
    pub bid: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackoffDecision {
    Participate,
    Backoff(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Participation {
    Won,
    Lost,
    BackedOff,
    Occupied,
}

/// Participates iff `alpha` is strictly above the threshold; otherwise backs
/// off for `max(1, ceil(scale · alpha))` steps.
pub fn resolve_backoff<T: Scalar>(alpha: T, cfg: &AuctionConfig<T>) -> BackoffDecision {
    if alpha > cfg.backoff_threshold {
        BackoffDecision::Participate
    } else {
        let steps = (cfg.backoff_scale * alpha).ceil().to_usize().unwrap_or(0);
        BackoffDecision::Backoff(steps.max(1))
    }
}

/// Service duration of a first-price offer: `max(1, round(d₀ + κ·b))`.
pub fn fp_duration<T: Scalar>(bid: T, cfg: &AuctionConfig<T>) -> usize {
    let d = (cfg.fp_duration_base + cfg.fp_duration_slope * bid).round();
    d.to_usize().unwrap_or(0).max(1)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("bid price must be positive to be scored")]
    DegeneratePrice,
    #[error("bidder {0} acted while occupied")]
    OccupiedBidderActed(usize),
    #[error("bidder {0} submitted a non-finite action")]
    NonFiniteAction(usize),
    #[error("expected {expected} action slots, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Buyer-side score of a first-price offer; higher is better.
pub fn fp_score<T: Scalar>(bid: T, duration: usize) -> Result<T, EngineError> {
    if !(bid > T::zero()) {
        return Err(EngineError::DegeneratePrice);
    }
    Ok(T::from_usize_lossy(duration) / bid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome<T> {
    pub winner: Option<usize>,
    pub price: T,
    pub duration: usize,
    pub payoffs: Vec<T>,
    pub participation: Vec<Participation>,
    /// Actions after clamping, for bidders that acted.
    pub actions: Vec<Option<BidAction<T>>>,
    /// Bidders whose bid exceeded their reserve and was clamped.
    pub clamped: Vec<bool>,
    /// Backoff length per bidder (zero unless backed off).
    pub backoff: Vec<usize>,
    pub active_bids: usize,
}

/// Resolves one round. `actions[i]` must be `Some` exactly for free bidders.
pub fn run_round<T: Scalar, R: Rng + ?Sized>(
    actions: &[Option<BidAction<T>>],
    accounts: &[BidderAccount<T>],
    step: usize,
    cfg: &AuctionConfig<T>,
    rng: &mut R,
) -> Result<RoundOutcome<T>, EngineError> {
    let n = accounts.len();
    if actions.len() != n {
        return Err(EngineError::ActionCount { expected: n, got: actions.len() });
    }
    let mut out = RoundOutcome {
        winner: None,
        price: T::zero(),
        duration: 0,
        payoffs: vec![T::zero(); n],
        participation: vec![Participation::Occupied; n],
        actions: vec![None; n],
        clamped: vec![false; n],
        backoff: vec![0; n],
        active_bids: 0,
    };

    // (bidder, bid, duration) of everyone who submits a bid
    let mut bids: Vec<(usize, T, usize)> = Vec::new();
    for (i, (slot, acct)) in actions.iter().zip(accounts).enumerate() {
        let Some(raw) = slot else { continue };
        if !acct.is_free(step) {
            return Err(EngineError::OccupiedBidderActed(i));
        }
        if !(raw.alpha.is_finite() && raw.bid.is_finite()) {
            return Err(EngineError::NonFiniteAction(i));
        }
        let alpha = raw.alpha.max(T::zero()).min(T::one());
        out.clamped[i] = raw.bid > acct.reserve;
        let bid = raw.bid.max(cfg.bid_floor).min(acct.reserve);
        out.actions[i] = Some(BidAction { alpha, bid });
        match resolve_backoff(alpha, cfg) {
            BackoffDecision::Backoff(d) => {
                out.participation[i] = Participation::BackedOff;
                out.payoffs[i] = -cfg.backoff_cost;
                out.backoff[i] = d;
            }
            BackoffDecision::Participate => {
                out.participation[i] = Participation::Lost;
                out.payoffs[i] = -cfg.joining_cost;
                let d = match cfg.game_kind {
                    GameKind::FpReverse => fp_duration(bid, cfg),
                    GameKind::SpForward => cfg.sp_duration,
                };
                bids.push((i, bid, d));
            }
        }
    }
    out.active_bids = bids.len();

    let winner = match cfg.game_kind {
        GameKind::FpReverse => {
            let scored: Vec<(usize, T, usize, T)> = bids
                .iter()
                .filter_map(|&(i, b, d)| fp_score(b, d).ok().map(|s| (i, b, d, s)))
                .collect();
            pick_max(&scored, |e| e.3, rng).map(|(i, b, d, _)| {
                out.price = b;
                (i, b * T::from_usize_lossy(d), d)
            })
        }
        GameKind::SpForward => pick_max(&bids, |e| e.1, rng).map(|(i, b, d)| {
            let second = bids
                .iter()
                .filter(|e| e.0 != i)
                .map(|e| e.1)
                .fold(None, |acc: Option<T>, x| Some(acc.map_or(x, |a| a.max(x))));
            let price = second.unwrap_or(cfg.bid_floor);
            out.price = price;
            (i, (b - price) * T::from_usize_lossy(d), d)
        }),
    };
    if let Some((i, payoff, d)) = winner {
        out.winner = Some(i);
        out.payoffs[i] = payoff;
        out.participation[i] = Participation::Won;
        out.duration = d;
    }
    Ok(out)
}

/// Maximum by `key`, ties broken uniformly at random. Draws from `rng` only
/// when a tie actually occurs.
fn pick_max<E: Copy, T: Scalar, R: Rng + ?Sized>(entries: &[E], key: impl Fn(&E) -> T, rng: &mut R) -> Option<E> {
    let best = entries.iter().map(&key).fold(None, |acc: Option<T>, k| Some(acc.map_or(k, |a| a.max(k))))?;
    let tied: Vec<E> = entries.iter().copied().filter(|e| key(e) == best).collect();
    if tied.len() == 1 {
        Some(tied[0])
    } else {
        Some(tied[rng.random_range(0..tied.len())])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SettleEvent {
    Occupied { bidder: usize, until: usize },
    Bankrupt { bidder: usize },
}

/// Per-bidder bookkeeping of one settled step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settlement<T> {
    pub events: Vec<SettleEvent>,
    pub carrying: Vec<T>,
    pub penalties: Vec<T>,
    /// Amount credited by a bankruptcy reset (initial reserve minus the
    /// depleted balance), zero otherwise.
    pub reset_credit: Vec<T>,
    /// Round payoff minus carrying cost minus penalty.
    pub net_payoffs: Vec<T>,
    /// What the broker collects (second price) or pays out (first price).
    pub broker_flow: T,
}

/// Applies round payoffs and carrying costs, occupation, and bankruptcy
/// resets at time `step`.
pub fn settle_step<T: Scalar>(
    accounts: &mut [BidderAccount<T>],
    outcome: &RoundOutcome<T>,
    step: usize,
    cfg: &AuctionConfig<T>,
) -> Settlement<T> {
    let n = accounts.len();
    let mut s = Settlement {
        events: Vec::new(),
        carrying: vec![cfg.carrying_cost; n],
        penalties: vec![T::zero(); n],
        reset_credit: vec![T::zero(); n],
        net_payoffs: vec![T::zero(); n],
        broker_flow: if outcome.winner.is_some() { outcome.price } else { T::zero() },
    };
    for (i, acct) in accounts.iter_mut().enumerate() {
        acct.reserve = acct.reserve - cfg.carrying_cost + outcome.payoffs[i];
        if outcome.winner == Some(i) {
            acct.occupied_until = step + outcome.duration;
            s.events.push(SettleEvent::Occupied { bidder: i, until: acct.occupied_until });
        } else if outcome.backoff[i] > 0 {
            acct.occupied_until = step + outcome.backoff[i];
        }
        if acct.reserve <= T::zero() {
            s.reset_credit[i] = cfg.initial_reserve - acct.reserve;
            s.penalties[i] = cfg.bankruptcy_penalty;
            acct.reserve = cfg.initial_reserve;
            acct.occupied_until = step + 1;
            acct.games_bankrupted += 1;
            s.events.push(SettleEvent::Bankrupt { bidder: i });
        }
        s.net_payoffs[i] = outcome.payoffs[i] - cfg.carrying_cost - s.penalties[i];
    }
    s
}

/// What a bidder can see before deciding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation<T> {
    pub step: usize,
    pub bidder_id: usize,
    pub valuation: T,
    pub reserve: T,
    pub occupied: bool,
    pub num_bidders: usize,
    /// Bids submitted in the previous round.
    pub active_bids: usize,
    /// Final price of the previous round (zero when nobody won).
    pub last_price: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFeedback<T> {
    pub step: usize,
    pub participation: Participation,
    pub round_payoff: T,
    pub net_payoff: T,
    pub price: T,
    pub won: bool,
    pub bankrupt: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentDiagnostics<T> {
    pub intrinsic_reward: Option<T>,
    pub forward_loss: Option<T>,
    pub inverse_loss: Option<T>,
    pub epsilon_last: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct AgentError(pub String);

/// Bidder behaviour driven by the episode loop: `act` on free steps,
/// `observe` after every settled step, `end_episode` with the extrinsic
/// signal once the horizon is reached.
pub trait Agent<T: Scalar> {
    fn act(&mut self, obs: &Observation<T>) -> Result<BidAction<T>, AgentError>;

    fn observe(&mut self, feedback: &StepFeedback<T>, next: &Observation<T>) -> Result<(), AgentError>;

    fn end_episode(&mut self, extrinsic: T, terminal: &Observation<T>) -> Result<(), AgentError>;

    fn diagnostics(&self) -> AgentDiagnostics<T> {
        AgentDiagnostics::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord<T> {
    pub alpha: T,
    pub bid: T,
}

/// One `(step, bidder)` line of an episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow<T> {
    pub step: usize,
    pub bidder_id: usize,
    pub action: Option<ActionRecord<T>>,
    pub participation: Participation,
    /// Net step payoff: round payoff - carrying cost - penalty.
    pub payoff: T,
    pub price: T,
    pub reserve_after: T,
    pub occupied_until: usize,
    pub round_payoff: T,
    pub carrying_cost: T,
    pub penalty: T,
    pub reset_credit: T,
    pub bankrupt: bool,
    pub clamped: bool,
    pub won: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog<T> {
    pub num_bidders: usize,
    pub initial_reserve: T,
    pub valuations: Vec<T>,
    /// Step-major rows: `rows[step * num_bidders + bidder]`.
    pub rows: Vec<StepRow<T>>,
    /// Extrinsic signal delivered to each bidder at the horizon.
    pub signals: Vec<T>,
}

impl<T: Scalar> EpisodeLog<T> {
    pub fn steps(&self) -> usize {
        self.rows.len() / self.num_bidders.max(1)
    }

    pub fn row(&self, step: usize, bidder: usize) -> &StepRow<T> {
        &self.rows[step * self.num_bidders + bidder]
    }

    pub fn ledger(&self) -> PaymentLedger<T> {
        let mut ledger = PaymentLedger::new(self.num_bidders);
        for r in &self.rows {
            let paid = if r.won { r.price } else { T::zero() };
            ledger.push(r.bidder_id, paid, r.payoff);
        }
        ledger
    }

    /// One JSON document per `(step, bidder)`.
    pub fn to_json_lines(&self) -> serde_json::Result<String> {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("episode aborted at step {step} by bidder {bidder}: {message}")]
pub struct EpisodeAbort<T> {
    pub step: usize,
    pub bidder: usize,
    pub message: String,
    pub partial: EpisodeLog<T>,
}

fn observation<T: Scalar>(
    acct: &BidderAccount<T>,
    step: usize,
    n: usize,
    active_bids: usize,
    last_price: T,
) -> Observation<T> {
    Observation {
        step,
        bidder_id: acct.bidder_id,
        valuation: acct.valuation,
        reserve: acct.reserve,
        occupied: !acct.is_free(step),
        num_bidders: n,
        active_bids,
        last_price,
    }
}

/// Fresh accounts with valuations drawn from the configured range.
pub fn fresh_accounts<T: Scalar, R: Rng + ?Sized>(cfg: &AuctionConfig<T>, rng: &mut R) -> Vec<BidderAccount<T>> {
    (0..cfg.num_bidders)
        .map(|i| {
            let u = T::lit(rng.random::<f64>());
            let v = cfg.valuation_low + (cfg.valuation_high - cfg.valuation_low) * u;
            BidderAccount::new(i, cfg.initial_reserve, v)
        })
        .collect()
}

/// Plays `episode_length` steps, then delivers the extrinsic signal.
/// `on_step` is called after each settled step with the rows just logged.
pub fn run_episode<T, R, A>(
    agents: &mut [A],
    cfg: &AuctionConfig<T>,
    signal: SignalKind,
    rng: &mut R,
    mut on_step: impl FnMut(&[StepRow<T>], &[A]),
) -> Result<EpisodeLog<T>, EpisodeAbort<T>>
where
    T: Scalar,
    R: Rng + ?Sized,
    A: std::ops::DerefMut,
    A::Target: Agent<T>,
{
    let n = cfg.num_bidders;
    let mut accounts = fresh_accounts(cfg, rng);
    let mut log = EpisodeLog {
        num_bidders: n,
        initial_reserve: cfg.initial_reserve,
        valuations: accounts.iter().map(|a| a.valuation).collect(),
        rows: Vec::with_capacity(cfg.episode_length * n),
        signals: Vec::new(),
    };
    let abort = |log: &EpisodeLog<T>, step, bidder, message: String| EpisodeAbort {
        step,
        bidder,
        message,
        partial: log.clone(),
    };
    let mut last_price = T::zero();
    let mut active = 0;

    for step in 0..cfg.episode_length {
        let mut actions = vec![None; n];
        for (i, agent) in agents.iter_mut().enumerate() {
            if accounts[i].is_free(step) {
                let obs = observation(&accounts[i], step, n, active, last_price);
                let a = agent.act(&obs).map_err(|e| abort(&log, step, i, e.to_string()))?;
                actions[i] = Some(a);
            }
        }
        let outcome = run_round(&actions, &accounts, step, cfg, rng).map_err(|e| {
            let bidder = match e {
                EngineError::OccupiedBidderActed(i) | EngineError::NonFiniteAction(i) => i,
                _ => 0,
            };
            abort(&log, step, bidder, e.to_string())
        })?;
        let settlement = settle_step(&mut accounts, &outcome, step, cfg);
        let price = if outcome.winner.is_some() { outcome.price } else { T::zero() };
        let first_row = log.rows.len();
        for (i, acct) in accounts.iter().enumerate() {
            log.rows.push(StepRow {
                step,
                bidder_id: i,
                action: outcome.actions[i].map(|a| ActionRecord { alpha: a.alpha, bid: a.bid }),
                participation: outcome.participation[i],
                payoff: settlement.net_payoffs[i],
                price,
                reserve_after: acct.reserve,
                occupied_until: acct.occupied_until,
                round_payoff: outcome.payoffs[i],
                carrying_cost: settlement.carrying[i],
                penalty: settlement.penalties[i],
                reset_credit: settlement.reset_credit[i],
                bankrupt: settlement.penalties[i] > T::zero() || settlement.reset_credit[i] > T::zero(),
                clamped: outcome.clamped[i],
                won: outcome.winner == Some(i),
            });
        }
        last_price = price;
        active = outcome.active_bids;
        for (i, agent) in agents.iter_mut().enumerate() {
            let fb = StepFeedback {
                step,
                participation: outcome.participation[i],
                round_payoff: outcome.payoffs[i],
                net_payoff: settlement.net_payoffs[i],
                price,
                won: outcome.winner == Some(i),
                bankrupt: log.rows[first_row + i].bankrupt,
            };
            let next = observation(&accounts[i], step + 1, n, active, last_price);
            agent.observe(&fb, &next).map_err(|e| abort(&log, step, i, e.to_string()))?;
        }
        on_step(&log.rows[first_row..], agents);
    }

    let ledger = log.ledger();
    log.signals = (0..n).map(|i| rewards::extrinsic_signal(signal, &ledger, i)).collect();
    for (i, agent) in agents.iter_mut().enumerate() {
        let terminal = observation(&accounts[i], cfg.episode_length, n, active, last_price);
        agent
            .end_episode(log.signals[i], &terminal)
            .map_err(|e| abort(&log, cfg.episode_length, i, e.to_string()))?;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(kind: GameKind) -> AuctionConfig<f64> {
        AuctionConfig { game_kind: kind, bid_floor: 0.0, ..AuctionConfig::default() }
    }

    fn accounts(n: usize) -> Vec<BidderAccount<f64>> {
        (0..n).map(|i| BidderAccount::new(i, 20.0, 5.0)).collect()
    }

    fn bid(b: f64) -> Option<BidAction<f64>> {
        Some(BidAction { alpha: 1.0, bid: b })
    }

    #[test]
    fn backoff_resolution() {
        let c = AuctionConfig::<f64> { backoff_threshold: 0.5, backoff_scale: 4.0, ..Default::default() };
        assert_eq!(resolve_backoff(1.0, &c), BackoffDecision::Participate);
        assert_eq!(resolve_backoff(0.0, &c), BackoffDecision::Backoff(1));
        assert_eq!(resolve_backoff(0.5, &c), BackoffDecision::Backoff(2));
        assert_eq!(resolve_backoff(0.51, &c), BackoffDecision::Participate);
    }

    #[test]
    fn durations_and_scores() {
        let mut c = AuctionConfig::<f64> { fp_duration_base: 1.0, fp_duration_slope: 0.0, ..Default::default() };
        assert_eq!(fp_duration(7.3, &c), 1);
        c.fp_duration_slope = 0.5;
        assert_eq!(fp_duration(4.0, &c), 3);
        c.fp_duration_base = 0.0;
        c.fp_duration_slope = 0.1;
        assert_eq!(fp_duration(2.0, &c), 1);

        assert_eq!(fp_score(2.0, 4).unwrap(), 2.0);
        assert_eq!(fp_score(1.0, 1).unwrap(), 1.0);
        assert_eq!(fp_score(1.0, 2).unwrap(), fp_score(2.0, 4).unwrap());
        assert_eq!(fp_score(0.0, 3), Err(EngineError::DegeneratePrice));
    }

    #[test]
    fn second_price_round() {
        let c = cfg(GameKind::SpForward);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = run_round(&[bid(5.0), bid(3.0)], &accounts(2), 0, &c, &mut rng).unwrap();
        assert_eq!(out.winner, Some(0));
        assert_eq!(out.price, 3.0);
        assert_eq!(out.payoffs, vec![4.0, -c.joining_cost]);

        let out = run_round(&[bid(5.0), None], &accounts(2), 0, &c, &mut rng).unwrap();
        assert_eq!(out.winner, Some(0));
        assert_eq!(out.price, 0.0);
        assert_eq!(out.payoffs[0], 10.0);
        assert_eq!(out.participation[1], Participation::Occupied);
    }

    #[test]
    fn first_price_round() {
        // (b=2, d=4) scores 2 and beats (b=2, d=2) scoring 1; winner earns b·d.
        assert!(fp_score(2.0, 4).unwrap() > fp_score(2.0, 2).unwrap());
        let c = AuctionConfig { fp_duration_base: 0.0, fp_duration_slope: 2.0, ..cfg(GameKind::FpReverse) };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = run_round(&[bid(2.0), None], &accounts(2), 0, &c, &mut rng).unwrap();
        assert_eq!((out.winner, out.duration, out.price), (Some(0), 4, 2.0));
        assert_eq!(out.payoffs[0], 8.0);

        // d = b makes every score 1: ties are split at random
        let c = AuctionConfig { fp_duration_slope: 1.0, ..c };
        let mut wins = [0; 2];
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = run_round(&[bid(1.0), bid(4.0)], &accounts(2), 0, &c, &mut rng).unwrap();
            wins[out.winner.unwrap()] += 1;
        }
        assert!(wins[0] > 60 && wins[1] > 60, "ties should be split randomly: {wins:?}");
    }

    #[test]
    fn first_price_prefers_higher_score() {
        let c = AuctionConfig { fp_duration_base: 1.0, fp_duration_slope: 0.5, ..cfg(GameKind::FpReverse) };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // b=2 -> d=2 (score 1), b=1 -> d=2 (score 2)
        let out = run_round(&[bid(2.0), bid(1.0)], &accounts(2), 0, &c, &mut rng).unwrap();
        assert_eq!(out.winner, Some(1));
        assert_eq!(out.price, 1.0);
        assert_eq!(out.payoffs, vec![-c.joining_cost, 2.0]);
    }

    #[test]
    fn bids_are_clamped_to_reserve_and_flagged() {
        let c = cfg(GameKind::SpForward);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = run_round(&[bid(50.0), bid(3.0)], &accounts(2), 0, &c, &mut rng).unwrap();
        assert!(out.clamped[0] && !out.clamped[1]);
        assert_eq!(out.actions[0].unwrap().bid, 20.0);
    }

    #[test]
    fn zero_participants_has_no_winner() {
        let c = cfg(GameKind::SpForward);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let back = Some(BidAction { alpha: 0.0, bid: 1.0 });
        let out = run_round(&[back, back], &accounts(2), 0, &c, &mut rng).unwrap();
        assert_eq!(out.winner, None);
        assert!(out.participation.iter().all(|p| *p == Participation::BackedOff));
        assert!(out.payoffs.iter().all(|u| *u == -c.backoff_cost));
    }

    #[test]
    fn occupied_bidders_cannot_act() {
        let c = cfg(GameKind::SpForward);
        let mut accts = accounts(2);
        accts[0].occupied_until = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            run_round(&[bid(1.0), bid(1.0)], &accts, 2, &c, &mut rng),
            Err(EngineError::OccupiedBidderActed(0))
        );
    }

    #[test]
    fn settlement_arithmetic() {
        let c = AuctionConfig::<f64> { carrying_cost: 1.0, ..Default::default() };
        let mut accts = vec![BidderAccount::new(0, 10.0, 1.0), BidderAccount::new(1, 0.5, 1.0)];
        let outcome = RoundOutcome {
            winner: Some(0),
            price: 2.0,
            duration: 3,
            payoffs: vec![4.0, 0.0],
            participation: vec![Participation::Won, Participation::Occupied],
            actions: vec![None, None],
            clamped: vec![false; 2],
            backoff: vec![0; 2],
            active_bids: 1,
        };
        let s = settle_step(&mut accts, &outcome, 7, &c);
        assert_eq!(accts[0].reserve, 13.0);
        assert_eq!(accts[0].occupied_until, 10);
        assert!(!accts[0].is_free(8) && !accts[0].is_free(9) && accts[0].is_free(10));
        assert_eq!(accts[1].reserve, c.initial_reserve);
        assert_eq!(accts[1].games_bankrupted, 1);
        assert!(s.events.contains(&SettleEvent::Bankrupt { bidder: 1 }));
        assert_eq!(s.net_payoffs[1], -1.0 - c.bankruptcy_penalty);
    }

    #[test]
    fn config_validation() {
        let ok = AuctionConfig::<f64>::default();
        assert!(ok.validate().is_ok());
        assert_eq!(AuctionConfig { num_bidders: 1, ..ok.clone() }.validate(), Err(ConfigError::TooFewBidders(1)));
        assert_eq!(AuctionConfig { backoff_threshold: 1.0, ..ok.clone() }.validate(), Err(ConfigError::ThresholdOutOfRange));
        assert_eq!(AuctionConfig { episode_length: 0, ..ok.clone() }.validate(), Err(ConfigError::EmptyEpisode));
        assert_eq!(
            AuctionConfig { joining_cost: -1.0, ..ok }.validate(),
            Err(ConfigError::NegativeCost("joining_cost"))
        );
    }
}
