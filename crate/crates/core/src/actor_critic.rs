//! Average-reward actor-critic with a Gaussian policy head.
//!
//! The critic estimates differential state values, the actor outputs the
//! mean and the raw Cholesky factor of a normal policy. Both are updated by
//! plain semi-gradient ascent scaled by the TD error.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{
    grad_log_density, sample_action, scale_tril_gradient, GaussianError, GaussianPolicyHead, GradientForm, PD_FLOOR,
};
use crate::nn::{ConvHighwayStack, Highway, Linear, ParamStore, Tape, Var};
use crate::scalar::{sigmoid, softplus, softplus_inv, Scalar};

/// `δ = u − ū + V(S') − V(S)`.
pub fn td_error<T: Scalar>(u: T, avg_reward: T, v_next: T, v_now: T) -> T {
    u - avg_reward + v_next - v_now
}

/// Exponential moving average `λ ū + (1 − λ) u`.
pub fn update_average_reward<T: Scalar>(avg_reward: T, u: T, rate: T) -> T {
    rate * avg_reward + (T::one() - rate) * u
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActorCriticError {
    #[error(transparent)]
    Policy(#[from] GaussianError),
    #[error("non-finite {what} (u={reward}, δ={delta}); update skipped")]
    NonFinite { what: &'static str, reward: f64, delta: f64 },
    #[error("input has {got} values, network expects {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// What the shared trunk reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrunkInput {
    /// A flattened `window × features` state window, read by temporal convolutions.
    Window { window: usize, features: usize },
    /// A flat feature vector, read by a dense layer.
    Features { dim: usize },
}

impl TrunkInput {
    pub fn input_dim(&self) -> usize {
        match *self {
            TrunkInput::Window { window, features } => window * features,
            TrunkInput::Features { dim } => dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActorCriticConfig<T> {
    pub critic_lr: T,
    pub actor_lr: T,
    pub avg_rate: T,
    pub filter_widths: Vec<usize>,
    pub channels: usize,
    /// Width of the dense trunk used for feature-vector inputs.
    pub hidden: usize,
    pub gradient_form: GradientForm,
    /// Initial standard deviation on every action dimension.
    pub init_std: T,
    /// Cap on the norm of `δ ∇` before the learning rate is applied; `None`
    /// applies the raw update.
    pub max_update_norm: Option<T>,
    /// Scale of the initial head weights relative to Glorot, so the untrained
    /// policy sits near its bias.
    pub head_init_scale: T,
}

impl<T: Scalar> Default for ActorCriticConfig<T> {
    fn default() -> Self {
        Self {
            critic_lr: T::lit(1e-3),
            actor_lr: T::lit(1e-4),
            avg_rate: T::lit(0.99),
            filter_widths: vec![2, 3, 4],
            channels: 32,
            hidden: 64,
            gradient_form: GradientForm::Exact,
            init_std: T::lit(0.3),
            max_update_norm: Some(T::lit(10.0)),
            head_init_scale: T::lit(0.01),
        }
    }
}

impl<T: Scalar> ActorCriticConfig<T> {
    pub fn validate(&self) -> Result<(), ActorCriticError> {
        let bad = |m: &str| Err(ActorCriticError::Config(m.to_string()));
        if !(self.critic_lr > T::zero() && self.actor_lr > T::zero()) {
            return bad("learning rates must be positive");
        }
        if !(self.avg_rate >= T::zero() && self.avg_rate < T::one()) {
            return bad("average-reward rate must lie in [0, 1)");
        }
        if self.filter_widths.is_empty() || self.filter_widths.contains(&0) || self.channels == 0 {
            return bad("need at least one positive filter width and channel");
        }
        if self.max_update_norm.is_some_and(|c| !(c > T::zero())) {
            return bad("update norm cap must be positive");
        }
        if !(self.init_std > T::lit(PD_FLOOR)) {
            return bad("initial std must exceed the positive-definite floor");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Trunk {
    Conv(ConvHighwayStack),
    Dense { input: Linear, highway: Highway },
}

impl Trunk {
    fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input: TrunkInput,
        cfg: &ActorCriticConfig<T>,
        rng: &mut R,
    ) -> (Self, usize) {
        match input {
            TrunkInput::Window { window, features } => {
                let stack =
                    ConvHighwayStack::new(store, name, window, features, &cfg.filter_widths, cfg.channels, rng);
                let out = stack.output_dim();
                (Trunk::Conv(stack), out)
            }
            TrunkInput::Features { dim } => {
                let input = Linear::new(store, &format!("{name}.in"), dim, cfg.hidden, rng);
                let highway = Highway::new(store, &format!("{name}.highway"), cfg.hidden, rng);
                (Trunk::Dense { input, highway }, cfg.hidden)
            }
        }
    }

    fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        match self {
            Trunk::Conv(stack) => stack.forward(tape, x),
            Trunk::Dense { input, highway } => {
                let h = input.forward(tape, x);
                let h = tape.relu(h);
                highway.forward(tape, h)
            }
        }
    }
}

/// Trunk plus a linear head, with its own parameter store.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadNet<T> {
    pub store: ParamStore<T>,
    trunk: Trunk,
    head: Linear,
    input: TrunkInput,
}

impl<T: Scalar> HeadNet<T> {
    fn new<R: Rng + ?Sized>(name: &str, input: TrunkInput, outputs: usize, cfg: &ActorCriticConfig<T>, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let (trunk, width) = Trunk::new(&mut store, &format!("{name}.trunk"), input, cfg, rng);
        let head = Linear::new(&mut store, &format!("{name}.head"), width, outputs, rng);
        Self { store, trunk, head, input }
    }

    fn check(&self, x: &[T]) -> Result<(), ActorCriticError> {
        let expected = self.input.input_dim();
        if x.len() != expected {
            return Err(ActorCriticError::InputShape { expected, got: x.len() });
        }
        Ok(())
    }

    fn forward(&self, tape: &mut Tape<'_, T>, x: &[T]) -> Var {
        let x = tape.input(x.to_vec());
        let h = self.trunk.forward(tape, x);
        self.head.forward(tape, h)
    }

    pub fn evaluate(&self, x: &[T]) -> Result<Vec<T>, ActorCriticError> {
        self.check(x)?;
        let mut tape = Tape::new(&self.store);
        let out = self.forward(&mut tape, x);
        Ok(tape.value(out).to_vec())
    }
}

/// Result of one actor-critic update.
#[derive(Debug, Clone, PartialEq)]
pub struct AcStep<T> {
    pub delta: T,
    pub avg_reward: T,
    pub v_now: T,
    pub v_next: T,
    /// Fresh best-response sample at the next state.
    pub next_action: Vec<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ActorCritic<T> {
    pub cfg: ActorCriticConfig<T>,
    pub critic: HeadNet<T>,
    pub actor: HeadNet<T>,
    pub avg_reward: T,
    action_dim: usize,
}

fn tril_len(k: usize) -> usize {
    k * (k + 1) / 2
}

impl<T: Scalar> ActorCritic<T> {
    pub fn new<R: Rng + ?Sized>(
        input: TrunkInput,
        action_dim: usize,
        cfg: ActorCriticConfig<T>,
        rng: &mut R,
    ) -> Result<Self, ActorCriticError> {
        cfg.validate()?;
        let mut critic = HeadNet::new("critic", input, 1, &cfg, rng);
        let mut actor = HeadNet::new("actor", input, action_dim + tril_len(action_dim), &cfg, rng);
        for net in [&mut critic, &mut actor] {
            let w = net.head.w;
            net.store.get_mut(w).data.iter_mut().for_each(|x| *x *= cfg.head_init_scale);
        }
        // start from an isotropic policy with the configured spread
        let raw_diag = softplus_inv(cfg.init_std - T::lit(PD_FLOOR));
        let bias = &mut actor.store.get_mut(actor.head.b).data;
        let mut idx = action_dim;
        for i in 0..action_dim {
            for j in 0..=i {
                if i == j {
                    bias[idx] = raw_diag;
                }
                idx += 1;
            }
        }
        Ok(Self { cfg, critic, actor, avg_reward: T::zero(), action_dim })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Sets the bias of the mean outputs, e.g. to start near a sensible bid.
    pub fn set_mean_bias(&mut self, mean: &[T]) {
        let bias = &mut self.actor.store.get_mut(self.actor.head.b).data;
        bias[..self.action_dim].copy_from_slice(mean);
    }

    pub fn critic_value(&self, x: &[T]) -> Result<T, ActorCriticError> {
        Ok(self.critic.evaluate(x)?[0])
    }

    fn head_from_raw(&self, raw: &[T]) -> Result<GaussianPolicyHead<T>, ActorCriticError> {
        let k = self.action_dim;
        let mut tril = vec![T::zero(); k * k];
        let mut idx = k;
        for i in 0..k {
            for j in 0..=i {
                tril[i * k + j] = if i == j { softplus(raw[idx]) + T::lit(PD_FLOOR) } else { raw[idx] };
                idx += 1;
            }
        }
        Ok(GaussianPolicyHead::new(raw[..k].to_vec(), tril)?)
    }

    pub fn policy_head(&self, x: &[T]) -> Result<GaussianPolicyHead<T>, ActorCriticError> {
        let raw = self.actor.evaluate(x)?;
        self.head_from_raw(&raw)
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &[T], rng: &mut R) -> Result<Vec<T>, ActorCriticError> {
        Ok(sample_action(&self.policy_head(x)?, rng))
    }

    /// One update on the transition `(s_now, action, reward, s_next)`, then a
    /// fresh sample at `s_next`. Nothing is modified if any quantity turns out
    /// non-finite.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        s_now: &[T],
        s_next: &[T],
        action: &[T],
        reward: T,
        rng: &mut R,
    ) -> Result<AcStep<T>, ActorCriticError> {
        self.critic.check(s_now)?;
        self.critic.check(s_next)?;
        let v_next = self.critic_value(s_next)?;

        let mut tape = Tape::new(&self.critic.store);
        let v = self.critic.forward(&mut tape, s_now);
        let v_now = tape.scalar(v);
        let avg_reward = update_average_reward(self.avg_reward, reward, self.cfg.avg_rate);
        let delta = td_error(reward, avg_reward, v_next, v_now);
        let nonfinite = |what| ActorCriticError::NonFinite {
            what,
            reward: reward.to_f64_lossy(),
            delta: delta.to_f64_lossy(),
        };
        if !delta.is_finite() || !avg_reward.is_finite() {
            return Err(nonfinite("TD error"));
        }
        let critic_grads = tape.backward(&[(v, &[T::one()])]).params;
        drop(tape);
        if !critic_grads.is_finite() {
            return Err(nonfinite("critic gradient"));
        }

        let mut tape = Tape::new(&self.actor.store);
        let out = self.actor.forward(&mut tape, s_now);
        let raw = tape.value(out).to_vec();
        let head = self.head_from_raw(&raw)?;
        let (d_mu, d_sigma) = grad_log_density(action, &head, self.cfg.gradient_form)?;
        let d_l = scale_tril_gradient(&head, &d_sigma);
        let k = self.action_dim;
        let mut seed = d_mu;
        for i in 0..k {
            for j in 0..=i {
                let idx = seed.len();
                seed.push(if i == j { d_l[i * k + i] * sigmoid(raw[idx]) } else { d_l[i * k + j] });
            }
        }
        let actor_grads = tape.backward(&[(out, &seed)]).params;
        drop(tape);
        if !actor_grads.is_finite() {
            return Err(nonfinite("actor gradient"));
        }

        let (mut critic_grads, mut actor_grads) = (critic_grads, actor_grads);
        for (g, lr, store) in [
            (&mut critic_grads, self.cfg.critic_lr, &mut self.critic.store),
            (&mut actor_grads, self.cfg.actor_lr, &mut self.actor.store),
        ] {
            g.scale(delta);
            if let Some(cap) = self.cfg.max_update_norm {
                g.clip_norm(cap);
            }
            store.axpy(g, lr);
        }
        self.avg_reward = avg_reward;
        let next_action = self.sample(s_next, rng)?;
        Ok(AcStep { delta, avg_reward, v_now, v_next, next_action })
    }
}
