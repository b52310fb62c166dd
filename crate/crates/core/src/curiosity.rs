//! Curiosity module: a feature extractor shaped by an inverse dynamics
//! model, and a forward model whose prediction error becomes an exploration
//! bonus blended with the credit-weighted payoff.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Activation, Adam, ConvHighwayStack, Linear, Mlp, ParamStore, Tape, Var};
use crate::scalar::Scalar;

/// `r_i = ξ L_f + (1 − ξ) ε u`.
pub fn intrinsic_reward<T: Scalar>(forward_loss: T, epsilon: T, payoff: T, xi: T) -> T {
    xi * forward_loss + (T::one() - xi) * epsilon * payoff
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CuriosityError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("input has {got} values, expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CuriosityConfig<T> {
    /// Blend weight `ξ` of the forward-model surprise.
    pub xi: T,
    pub feature_dim: usize,
    pub hidden: usize,
    pub filter_widths: Vec<usize>,
    pub channels: usize,
    pub lr: T,
}

impl<T: Scalar> Default for CuriosityConfig<T> {
    fn default() -> Self {
        Self { xi: T::lit(0.2), feature_dim: 32, hidden: 64, filter_widths: vec![2, 3, 4], channels: 32, lr: T::lit(1e-3) }
    }
}

impl<T: Scalar> CuriosityConfig<T> {
    pub fn validate(&self) -> Result<(), CuriosityError> {
        if !(self.xi >= T::zero() && self.xi <= T::one()) {
            return Err(CuriosityError::Config("ξ must lie in [0, 1]".into()));
        }
        if self.feature_dim == 0 || self.hidden == 0 || self.channels == 0 || self.filter_widths.is_empty() {
            return Err(CuriosityError::Config("model sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Losses measured before the parameter update, plus the features used.
#[derive(Debug, Clone, PartialEq)]
pub struct CuriosityStep<T> {
    pub intrinsic_reward: T,
    pub forward_loss: T,
    pub inverse_loss: T,
    pub phi_now: Vec<T>,
    pub phi_next: Vec<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CuriosityModel<T> {
    pub cfg: CuriosityConfig<T>,
    pub store: ParamStore<T>,
    stack: ConvHighwayStack,
    project: Linear,
    forward: Mlp,
    inverse: Mlp,
    action_dim: usize,
    #[serde(skip)]
    adam: Option<Adam<T>>,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum()
}

impl<T: Scalar> CuriosityModel<T> {
    pub fn new<R: Rng + ?Sized>(
        window: usize,
        features: usize,
        action_dim: usize,
        cfg: CuriosityConfig<T>,
        rng: &mut R,
    ) -> Result<Self, CuriosityError> {
        cfg.validate()?;
        let f = cfg.feature_dim;
        let mut store = ParamStore::new();
        let stack = ConvHighwayStack::new(&mut store, "icm.stack", window, features, &cfg.filter_widths, cfg.channels, rng);
        let project = Linear::new(&mut store, "icm.project", stack.output_dim(), f, rng);
        let forward = Mlp::new(
            &mut store,
            "icm.forward",
            &[f + action_dim + 1, cfg.hidden, f + 1],
            Activation::Relu,
            Activation::Identity,
            rng,
        );
        let inverse =
            Mlp::new(&mut store, "icm.inverse", &[2 * f, cfg.hidden, action_dim], Activation::Relu, Activation::Identity, rng);
        let adam = Some(Adam::new(&store, cfg.lr));
        Ok(Self { cfg, store, stack, project, forward, inverse, action_dim, adam })
    }

    pub fn feature_dim(&self) -> usize {
        self.cfg.feature_dim
    }

    fn extract_on(&self, tape: &mut Tape<'_, T>, window: &[T]) -> Var {
        let x = tape.input(window.to_vec());
        let h = self.stack.forward(tape, x);
        let z = self.project.forward(tape, h);
        tape.tanh(z)
    }

    fn forward_on(&self, tape: &mut Tape<'_, T>, phi: &[T], action: &[T], r_prev: T) -> Var {
        let mut input = phi.to_vec();
        input.extend_from_slice(action);
        // squashed so a large surprise cannot feed back into a larger one
        input.push(r_prev.tanh());
        let x = tape.input(input);
        self.forward.forward(tape, x)
    }

    fn check_window(&self, w: &[T]) -> Result<(), CuriosityError> {
        if w.len() != self.stack.input_dim() {
            return Err(CuriosityError::Shape { expected: self.stack.input_dim(), got: w.len() });
        }
        Ok(())
    }

    pub fn feature_extract(&self, window: &[T]) -> Result<Vec<T>, CuriosityError> {
        self.check_window(window)?;
        let mut tape = Tape::new(&self.store);
        let phi = self.extract_on(&mut tape, window);
        Ok(tape.value(phi).to_vec())
    }

    /// Predicted next features and predicted reward.
    pub fn forward_predict(&self, phi: &[T], action: &[T], r_prev: T) -> (Vec<T>, T) {
        let mut tape = Tape::new(&self.store);
        let out = self.forward_on(&mut tape, phi, action, r_prev);
        let v = tape.value(out);
        let f = self.feature_dim();
        (v[..f].to_vec(), v[f])
    }

    pub fn inverse_predict(&self, phi: &[T], phi_next: &[T]) -> Vec<T> {
        let mut tape = Tape::new(&self.store);
        let mut joined = phi.to_vec();
        joined.extend_from_slice(phi_next);
        let x = tape.input(joined);
        let out = self.inverse.forward(&mut tape, x);
        tape.value(out).to_vec()
    }

    /// `‖φ_next − φ̂‖² + (r − r̂)²`.
    pub fn forward_loss(predicted: &[T], predicted_reward: T, phi_next: &[T], reward: T) -> T {
        sq_dist(predicted, phi_next) + (predicted_reward - reward) * (predicted_reward - reward)
    }

    /// `‖a − â‖²`.
    pub fn inverse_loss(predicted: &[T], action: &[T]) -> T {
        sq_dist(predicted, action)
    }

    fn apply(&mut self, grads: &crate::nn::Grads<T>) -> Result<(), CuriosityError> {
        if !grads.is_finite() {
            return Err(CuriosityError::NonFinite("curiosity gradient"));
        }
        let lr = self.cfg.lr;
        let adam = self.adam.get_or_insert_with(|| Adam::new(&self.store, lr));
        adam.step(&mut self.store, grads);
        Ok(())
    }

    /// One joint step minimizing `L_i + L_f` on a transition between two
    /// windows. The extractor is shaped only through `L_i`; `L_f` treats the
    /// features as fixed inputs and targets. Returns the pre-update losses.
    pub fn train_step(
        &mut self,
        s_now: &[T],
        s_next: &[T],
        action: &[T],
        r_prev: T,
        r_target: T,
    ) -> Result<(T, T, Vec<T>, Vec<T>), CuriosityError> {
        self.check_window(s_now)?;
        self.check_window(s_next)?;
        if action.len() != self.action_dim {
            return Err(CuriosityError::Shape { expected: self.action_dim, got: action.len() });
        }
        let f = self.feature_dim();
        let mut tape = Tape::new(&self.store);
        let phi = self.extract_on(&mut tape, s_now);
        let phi_next = self.extract_on(&mut tape, s_next);
        let phi_v = tape.value(phi).to_vec();
        let phi_next_v = tape.value(phi_next).to_vec();

        let joined = tape.concat(&[phi, phi_next]);
        let a_hat = self.inverse.forward(&mut tape, joined);
        let inv_loss = Self::inverse_loss(tape.value(a_hat), action);
        let d_inv: Vec<T> = tape.value(a_hat).iter().zip(action).map(|(p, a)| T::lit(2.0) * (*p - *a)).collect();

        let pred = self.forward_on(&mut tape, &phi_v, action, r_prev);
        let pv = tape.value(pred).to_vec();
        let fwd_loss = Self::forward_loss(&pv[..f], pv[f], &phi_next_v, r_target);
        let mut d_fwd: Vec<T> = pv[..f].iter().zip(&phi_next_v).map(|(p, t)| T::lit(2.0) * (*p - *t)).collect();
        d_fwd.push(T::lit(2.0) * (pv[f] - r_target));

        if !fwd_loss.is_finite() || !inv_loss.is_finite() {
            return Err(CuriosityError::NonFinite("curiosity loss"));
        }
        let grads = tape.backward(&[(a_hat, &d_inv), (pred, &d_fwd)]).params;
        drop(tape);
        self.apply(&grads)?;
        Ok((fwd_loss, inv_loss, phi_v, phi_next_v))
    }

    /// Full curiosity step for one transition: trains the models, then
    /// blends the surprise with the credit-weighted payoff.
    pub fn step(
        &mut self,
        s_now: &[T],
        s_next: &[T],
        action: &[T],
        payoff: T,
        epsilon: T,
        r_prev: T,
    ) -> Result<CuriosityStep<T>, CuriosityError> {
        let xi = self.cfg.xi;
        let payoff_part = (T::one() - xi) * epsilon * payoff;
        let (forward_loss, inverse_loss, phi_now, phi_next) = self.train_step(s_now, s_next, action, r_prev, payoff_part)?;
        let r = intrinsic_reward(forward_loss, epsilon, payoff, xi);
        if !r.is_finite() {
            return Err(CuriosityError::NonFinite("intrinsic reward"));
        }
        Ok(CuriosityStep { intrinsic_reward: r, forward_loss, inverse_loss, phi_now, phi_next })
    }

    /// Trains only the forward model on given features; returns the
    /// pre-update loss.
    pub fn fit_forward(&mut self, phi: &[T], action: &[T], r_prev: T, phi_next: &[T], reward: T) -> Result<T, CuriosityError> {
        let f = self.feature_dim();
        let mut tape = Tape::new(&self.store);
        let pred = self.forward_on(&mut tape, phi, action, r_prev);
        let pv = tape.value(pred).to_vec();
        let loss = Self::forward_loss(&pv[..f], pv[f], phi_next, reward);
        let mut d: Vec<T> = pv[..f].iter().zip(phi_next).map(|(p, t)| T::lit(2.0) * (*p - *t)).collect();
        d.push(T::lit(2.0) * (pv[f] - reward));
        let grads = tape.backward(&[(pred, &d)]).params;
        drop(tape);
        self.apply(&grads)?;
        Ok(loss)
    }

    /// Trains only the inverse model on given features.
    pub fn fit_inverse(&mut self, phi: &[T], phi_next: &[T], action: &[T]) -> Result<T, CuriosityError> {
        let mut tape = Tape::new(&self.store);
        let mut joined = phi.to_vec();
        joined.extend_from_slice(phi_next);
        let x = tape.input(joined);
        let a_hat = self.inverse.forward(&mut tape, x);
        let loss = Self::inverse_loss(tape.value(a_hat), action);
        let d: Vec<T> = tape.value(a_hat).iter().zip(action).map(|(p, a)| T::lit(2.0) * (*p - *a)).collect();
        let grads = tape.backward(&[(a_hat, &d)]).params;
        drop(tape);
        self.apply(&grads)?;
        Ok(loss)
    }

    /// Gradient of `L_i` with respect to the extractor parameters only.
    pub fn extractor_gradient_norm(&self, s_now: &[T], s_next: &[T], action: &[T]) -> T {
        let mut tape = Tape::new(&self.store);
        let phi = self.extract_on(&mut tape, s_now);
        let phi_next = self.extract_on(&mut tape, s_next);
        let joined = tape.concat(&[phi, phi_next]);
        let a_hat = self.inverse.forward(&mut tape, joined);
        let d: Vec<T> = tape.value(a_hat).iter().zip(action).map(|(p, a)| T::lit(2.0) * (*p - *a)).collect();
        let grads = tape.backward(&[(a_hat, &d)]).params;
        let ids = [self.project.w, self.project.b];
        ids.iter().flat_map(|id| grads.get(*id).iter().map(|g| *g * *g)).sum::<T>().sqrt()
    }
}
