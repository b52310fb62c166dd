//! The three bidder kinds built on fictitious self-play:
//!
//! * `SHT` learns from immediate payoffs with the actor-critic reading the raw
//!   state window.
//! * `CUR` adds the curiosity module; the critic reads curiosity features and
//!   the reward is the intrinsic reward with full credit (`ε = 1`).
//! * `DRA` additionally weights payoffs by the attention credit model, which
//!   is trained on the end-of-episode extrinsic signal.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actor_critic::{ActorCritic, ActorCriticConfig, ActorCriticError, TrunkInput};
use crate::credit::{CreditBatch, CreditConfig, CreditError, CreditModel};
use crate::curiosity::{CuriosityConfig, CuriosityError, CuriosityModel};
use crate::engine::{Agent, AgentDiagnostics, AgentError, AuctionConfig, BidAction, Observation, StepFeedback};
use crate::fsp::{
    build_state, choose_action, push_bounded, rl_record, sl_state, FeatureScale, MixMode, MixSchedule, RlRecord,
    SlModel, SlRecord, RL_FEATURES, SL_FEATURES,
};
use crate::nn::ParamStore;
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;
const ACTION_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AgentKind {
    Sht,
    Cur,
    Dra,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Sht, AgentKind::Cur, AgentKind::Dra];

    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Sht => "SHT",
            AgentKind::Cur => "CUR",
            AgentKind::Dra => "DRA",
        }
    }

    pub fn has_curiosity(self) -> bool {
        self != AgentKind::Sht
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SHT" => Ok(AgentKind::Sht),
            "CUR" => Ok(AgentKind::Cur),
            "DRA" => Ok(AgentKind::Dra),
            _ => Err(format!("unknown agent kind `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct AgentConfig<T> {
    /// State window length `ν`.
    pub window: usize,
    pub sl_hidden: Vec<usize>,
    pub sl_lr: T,
    pub sl_batch: usize,
    pub sl_capacity: usize,
    pub rl_capacity: usize,
    pub mix: MixMode,
    pub actor_critic: ActorCriticConfig<T>,
    pub curiosity: CuriosityConfig<T>,
    pub credit: CreditConfig<T>,
    /// Past episode batches replayed at each credit training burst.
    pub credit_replay: usize,
    /// Initial policy mean as `(α, bid / valuation_high)`.
    pub initial_mean: [T; 2],
    /// Multiplier applied to the extrinsic signal before credit training.
    pub extrinsic_scale: T,
}

impl<T: Scalar> AgentConfig<T> {
    pub fn validate(&self) -> Result<(), FspError> {
        let bad = |m: &str| Err(FspError::Config(m.to_string()));
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.sl_hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        if self.sl_batch == 0 || self.sl_capacity == 0 || self.rl_capacity == 0 || self.credit_replay == 0 {
            return bad("batch, capacities and credit_replay must be at least 1");
        }
        if !(self.sl_lr > T::zero()) || !self.extrinsic_scale.is_finite() {
            return bad("sl_lr must be positive and extrinsic_scale finite");
        }
        if self.initial_mean.iter().any(|m| !m.is_finite()) {
            return bad("initial_mean must be finite");
        }
        Ok(())
    }
}

impl<T: Scalar> Default for AgentConfig<T> {
    fn default() -> Self {
        Self {
            window: 8,
            sl_hidden: vec![64, 64],
            sl_lr: T::lit(1e-3),
            sl_batch: 32,
            sl_capacity: 10_000,
            rl_capacity: 10_000,
            mix: MixMode::Stochastic,
            actor_critic: ActorCriticConfig::default(),
            curiosity: CuriosityConfig::default(),
            credit: CreditConfig::default(),
            credit_replay: 16,
            initial_mean: [T::lit(0.8), T::lit(0.3)],
            extrinsic_scale: T::one(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FspError {
    #[error(transparent)]
    ActorCritic(#[from] ActorCriticError),
    #[error(transparent)]
    Curiosity(#[from] CuriosityError),
    #[error(transparent)]
    Credit(#[from] CreditError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("agent config: {0}")]
    Config(String),
}

impl From<FspError> for AgentError {
    fn from(e: FspError) -> Self {
        AgentError(e.to_string())
    }
}

/// A decision whose outcome is still accumulating.
#[derive(Debug, Clone)]
struct Pending<T> {
    window: Vec<T>,
    action: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint<T> {
    pub version: u32,
    pub kind: AgentKind,
    pub schedule_t: u64,
    pub avg_reward: T,
    pub sl: ParamStore<T>,
    pub critic: ParamStore<T>,
    pub actor: ParamStore<T>,
    pub curiosity: Option<ParamStore<T>>,
    pub credit: Option<ParamStore<T>>,
}

pub struct FspAgent<T: Scalar> {
    pub kind: AgentKind,
    pub cfg: AgentConfig<T>,
    scale: FeatureScale<T>,
    rng: ChaCha8Rng,
    pub schedule: MixSchedule,
    pub sl: SlModel<T>,
    pub sl_memory: VecDeque<SlRecord<T>>,
    pub rl_memory: VecDeque<RlRecord<T>>,
    pub ac: ActorCritic<T>,
    pub curiosity: Option<CuriosityModel<T>>,
    pub credit: Option<CreditModel<T>>,
    credit_batches: VecDeque<CreditBatch<T>>,
    phi_history: VecDeque<Vec<T>>,
    payoff_history: VecDeque<T>,
    pending: Option<Pending<T>>,
    accumulated: T,
    others_price: T,
    r_prev: T,
    diagnostics: AgentDiagnostics<T>,
    acted: usize,
}

impl<T: Scalar> FspAgent<T> {
    pub fn new(kind: AgentKind, cfg: AgentConfig<T>, auction: &AuctionConfig<T>, seed: u64) -> Result<Self, FspError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = FeatureScale {
            price: auction.valuation_high,
            reserve: auction.initial_reserve,
            bidders: T::from_usize_lossy(auction.num_bidders),
            payoff: auction.valuation_high,
        };
        let nu = cfg.window;
        let sl = SlModel::new(SL_FEATURES, &cfg.sl_hidden, ACTION_DIM, cfg.sl_lr, &mut rng);
        let (input, curiosity, credit) = if kind.has_curiosity() {
            let cur = CuriosityModel::new(nu, RL_FEATURES, ACTION_DIM, cfg.curiosity.clone(), &mut rng)?;
            let f = cur.feature_dim();
            let credit =
                (kind == AgentKind::Dra).then(|| CreditModel::new(nu, f, cfg.credit.clone(), &mut rng));
            (TrunkInput::Features { dim: f }, Some(cur), credit)
        } else {
            (TrunkInput::Window { window: nu, features: RL_FEATURES }, None, None)
        };
        let mut ac = ActorCritic::new(input, ACTION_DIM, cfg.actor_critic.clone(), &mut rng)?;
        ac.set_mean_bias(&cfg.initial_mean);
        // curiosity kinds report the zero start of the r_prev feedback until
        // the first transition is learned
        let diagnostics = if kind.has_curiosity() {
            AgentDiagnostics {
                intrinsic_reward: Some(T::zero()),
                forward_loss: Some(T::zero()),
                inverse_loss: Some(T::zero()),
                epsilon_last: None,
            }
        } else {
            AgentDiagnostics::default()
        };
        Ok(Self {
            kind,
            cfg,
            scale,
            rng,
            schedule: MixSchedule::default(),
            sl,
            sl_memory: VecDeque::new(),
            rl_memory: VecDeque::new(),
            ac,
            curiosity,
            credit,
            credit_batches: VecDeque::new(),
            phi_history: VecDeque::new(),
            payoff_history: VecDeque::new(),
            pending: None,
            accumulated: T::zero(),
            others_price: T::zero(),
            r_prev: T::zero(),
            diagnostics,
            acted: 0,
        })
    }

    /// Number of `act` calls so far.
    pub fn acted(&self) -> usize {
        self.acted
    }

    /// Critic/actor input for a flattened window.
    fn policy_input(&self, window: &[T]) -> Result<Vec<T>, FspError> {
        match &self.curiosity {
            Some(c) => Ok(c.feature_extract(window)?),
            None => Ok(window.to_vec()),
        }
    }

    fn current_window(&self, extra: Option<RlRecord<T>>) -> Vec<T> {
        match extra {
            Some(r) => {
                let mut mem: VecDeque<RlRecord<T>> =
                    self.rl_memory.iter().skip(self.rl_memory.len().saturating_sub(self.cfg.window)).cloned().collect();
                mem.push_back(r);
                build_state(&mem, self.cfg.window, RL_FEATURES).flatten()
            }
            None => build_state(&self.rl_memory, self.cfg.window, RL_FEATURES).flatten(),
        }
    }

    fn phi_window(&self) -> Vec<Vec<T>> {
        let f = self.cfg.curiosity.feature_dim;
        let nu = self.cfg.window;
        let have = self.phi_history.len().min(nu);
        let mut w = vec![vec![T::zero(); f]; nu - have];
        w.extend(self.phi_history.iter().skip(self.phi_history.len() - have).cloned());
        w
    }

    /// Finishes the pending transition into `next_window`; returns the new
    /// best-response sample there and, for curiosity kinds, φ of that window.
    fn learn(&mut self, pending: Pending<T>, next_window: &[T]) -> Result<(Vec<T>, Option<Vec<T>>), FspError> {
        let u = self.accumulated / self.scale.payoff;
        let mut phi_next = None;
        let step = match self.kind {
            AgentKind::Sht => self.ac.update(&pending.window, next_window, &pending.action, u, &mut self.rng)?,
            AgentKind::Cur | AgentKind::Dra => {
                let epsilon = match &self.credit {
                    Some(credit) => {
                        let eps = credit.infer_credit(&self.phi_window())?.latest();
                        self.diagnostics.epsilon_last = Some(eps);
                        eps
                    }
                    None => T::one(),
                };
                let cur = self.curiosity.as_mut().expect("curiosity kinds own a curiosity model");
                let cs = cur.step(&pending.window, next_window, &pending.action, u, epsilon, self.r_prev)?;
                self.r_prev = cs.intrinsic_reward;
                self.diagnostics.intrinsic_reward = Some(cs.intrinsic_reward);
                self.diagnostics.forward_loss = Some(cs.forward_loss);
                self.diagnostics.inverse_loss = Some(cs.inverse_loss);
                let step =
                    self.ac.update(&cs.phi_now, &cs.phi_next, &pending.action, cs.intrinsic_reward, &mut self.rng)?;
                phi_next = Some(cs.phi_next);
                step
            }
        };
        if self.credit.is_some() {
            push_bounded(&mut self.payoff_history, u, self.cfg.window);
        }
        self.sl.update(&self.sl_memory, self.cfg.sl_batch, &mut self.rng);
        self.accumulated = T::zero();
        Ok((step.next_action, phi_next))
    }

    fn decide(&mut self, obs: &Observation<T>) -> Result<Vec<T>, FspError> {
        let rec = rl_record(obs, self.others_price, self.accumulated, &self.scale);
        push_bounded(&mut self.rl_memory, rec, self.cfg.rl_capacity);
        let window = self.current_window(None);
        let (zeta, phi) = match self.pending.take() {
            Some(p) => self.learn(p, &window)?,
            None => {
                let x = self.policy_input(&window)?;
                let zeta = self.ac.sample(&x, &mut self.rng)?;
                (zeta, Some(x))
            }
        };
        if self.credit.is_some() {
            let phi = match phi {
                Some(phi) => phi,
                None => self.policy_input(&window)?,
            };
            push_bounded(&mut self.phi_history, phi, self.cfg.window);
            if self.diagnostics.epsilon_last.is_none() {
                let credit = self.credit.as_ref().expect("checked above");
                self.diagnostics.epsilon_last = Some(credit.infer_credit(&self.phi_window())?.latest());
            }
        }
        let sl_now = sl_state(obs, &self.scale);
        let psi = self.sl.predict(&sl_now);
        let action = choose_action(&psi, &zeta, self.schedule.eta(), self.cfg.mix, &mut self.rng);
        push_bounded(&mut self.sl_memory, SlRecord { state: sl_now, action: action.clone() }, self.cfg.sl_capacity);
        self.pending = Some(Pending { window, action: action.clone() });
        self.schedule.advance();
        self.acted += 1;
        Ok(action)
    }

    fn to_bid(&self, a: &[T]) -> BidAction<T> {
        BidAction { alpha: a[0], bid: a[1] * self.scale.price }
    }

    /// Mean of the current best-response policy at the agent's present state.
    pub fn greedy_action(&self) -> Result<BidAction<T>, FspError> {
        let x = self.policy_input(&self.current_window(None))?;
        let head = self.ac.policy_head(&x)?;
        Ok(self.to_bid(&head.mean))
    }

    /// Policy mean and SL prediction on an explicit observation history.
    pub fn probe(&self, history: &[Observation<T>]) -> Result<(Vec<T>, Vec<T>), FspError> {
        let mem: VecDeque<RlRecord<T>> =
            history.iter().map(|o| rl_record(o, T::zero(), T::zero(), &self.scale)).collect();
        let window = build_state(&mem, self.cfg.window, RL_FEATURES).flatten();
        let head = self.ac.policy_head(&self.policy_input(&window)?)?;
        let last = history.last().map(|o| sl_state(o, &self.scale)).unwrap_or_else(|| vec![T::zero(); SL_FEATURES]);
        Ok((head.mean, self.sl.predict(&last)))
    }

    pub fn checkpoint(&self) -> AgentCheckpoint<T> {
        AgentCheckpoint {
            version: CHECKPOINT_VERSION,
            kind: self.kind,
            schedule_t: self.schedule.t,
            avg_reward: self.ac.avg_reward,
            sl: self.sl.store.clone(),
            critic: self.ac.critic.store.clone(),
            actor: self.ac.actor.store.clone(),
            curiosity: self.curiosity.as_ref().map(|c| c.store.clone()),
            credit: self.credit.as_ref().map(|c| c.store.clone()),
        }
    }

    /// Restores parameters into an agent built with the same configuration.
    pub fn restore(&mut self, ck: &AgentCheckpoint<T>) -> Result<(), FspError> {
        let err = |m: String| FspError::Checkpoint(m);
        if ck.version != CHECKPOINT_VERSION {
            return Err(err(format!("unsupported version {}", ck.version)));
        }
        if ck.kind != self.kind {
            return Err(err(format!("checkpoint is for {}, agent is {}", ck.kind, self.kind)));
        }
        self.sl.store.load_from(&ck.sl).map_err(err)?;
        self.ac.critic.store.load_from(&ck.critic).map_err(err)?;
        self.ac.actor.store.load_from(&ck.actor).map_err(err)?;
        match (&mut self.curiosity, &ck.curiosity) {
            (Some(c), Some(p)) => c.store.load_from(p).map_err(err)?,
            (None, None) => {}
            _ => return Err(err("curiosity parameters mismatch".into())),
        }
        match (&mut self.credit, &ck.credit) {
            (Some(c), Some(p)) => c.store.load_from(p).map_err(err)?,
            (None, None) => {}
            _ => return Err(err("credit parameters mismatch".into())),
        }
        self.schedule.t = ck.schedule_t;
        self.ac.avg_reward = ck.avg_reward;
        Ok(())
    }
}

impl<T: Scalar> Agent<T> for FspAgent<T> {
    fn act(&mut self, obs: &Observation<T>) -> Result<BidAction<T>, AgentError> {
        let a = self.decide(obs)?;
        Ok(self.to_bid(&a))
    }

    fn observe(&mut self, feedback: &StepFeedback<T>, _next: &Observation<T>) -> Result<(), AgentError> {
        self.accumulated += feedback.net_payoff;
        self.others_price = if feedback.won { T::zero() } else { feedback.price };
        Ok(())
    }

    fn end_episode(&mut self, extrinsic: T, terminal: &Observation<T>) -> Result<(), AgentError> {
        if let Some(p) = self.pending.take() {
            let rec = rl_record(terminal, self.others_price, self.accumulated, &self.scale);
            let window = self.current_window(Some(rec));
            self.learn(p, &window)?;
        }
        if self.credit.is_some() && !self.phi_history.is_empty() {
            let nu = self.cfg.window;
            let inputs = self.phi_window();
            let mut payoffs = vec![T::zero(); nu - self.payoff_history.len().min(nu)];
            payoffs.extend(self.payoff_history.iter().copied());
            let batch = CreditBatch::new(inputs, &payoffs, extrinsic * self.cfg.extrinsic_scale).map_err(FspError::from)?;
            push_bounded(&mut self.credit_batches, batch, self.cfg.credit_replay.max(1));
            let credit = self.credit.as_mut().expect("checked above");
            credit.arm();
            let batches: Vec<_> = self.credit_batches.iter().cloned().collect();
            credit.train_credit(&batches, self.cfg.credit.epochs).map_err(FspError::from)?;
        }
        Ok(())
    }

    fn diagnostics(&self) -> AgentDiagnostics<T> {
        self.diagnostics.clone()
    }
}
