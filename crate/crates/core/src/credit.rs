//! Attention-based credit assignment.
//!
//! A recurrent encoder reads the last `ν` feature vectors; a recurrent
//! decoder regresses the `ν` short-term payoffs followed by the episode's
//! extrinsic signal, attending over the encoder states. The attention row of
//! the final decoder position is the credit vector `ε`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{AdditiveAttention, Adam, Gru, Linear, ParamStore, Tape, Var};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CreditError {
    #[error("training requested without a new extrinsic signal")]
    NotArmed,
    #[error("batch malformed: {0}")]
    Batch(String),
    #[error("non-finite loss at epoch {epoch} (last finite loss {last})")]
    NonFinite { epoch: usize, last: f64 },
    #[error("step offset {offset} outside window of {len}")]
    Offset { offset: usize, len: usize },
}

/// Simplex weights over the window, oldest slot first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditWeights<T>(pub Vec<T>);

impl<T: Scalar> CreditWeights<T> {
    pub fn credit_for_step(&self, offset: usize) -> Result<T, CreditError> {
        self.0.get(offset).copied().ok_or(CreditError::Offset { offset, len: self.0.len() })
    }

    /// The weight co-timed with the most recent payoff.
    pub fn latest(&self) -> T {
        *self.0.last().expect("credit window is never empty")
    }

    pub fn is_simplex(&self, tol: T) -> bool {
        let sum: T = self.0.iter().copied().sum();
        self.0.iter().all(|e| *e >= T::zero()) && (sum - T::one()).abs() <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditBatch<T> {
    pub inputs: Vec<Vec<T>>,
    /// `ν` payoffs followed by the extrinsic signal.
    pub targets: Vec<T>,
}

impl<T: Scalar> CreditBatch<T> {
    pub fn new(inputs: Vec<Vec<T>>, payoffs: &[T], extrinsic: T) -> Result<Self, CreditError> {
        if inputs.is_empty() || inputs.len() != payoffs.len() {
            return Err(CreditError::Batch(format!("{} inputs for {} payoffs", inputs.len(), payoffs.len())));
        }
        let mut targets = payoffs.to_vec();
        targets.push(extrinsic);
        Ok(Self { inputs, targets })
    }

    pub fn window(&self) -> usize {
        self.inputs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CreditConfig<T> {
    pub hidden: usize,
    pub attention: usize,
    pub lr: T,
    /// Epochs run each time an extrinsic signal arrives.
    pub epochs: usize,
}

impl<T: Scalar> Default for CreditConfig<T> {
    fn default() -> Self {
        Self { hidden: 32, attention: 32, lr: T::lit(1e-2), epochs: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CreditModel<T> {
    pub cfg: CreditConfig<T>,
    pub store: ParamStore<T>,
    encoder: Gru,
    decoder: Gru,
    attention: AdditiveAttention,
    output: Linear,
    window: usize,
    input_dim: usize,
    armed: bool,
    trainings: usize,
    #[serde(skip)]
    adam: Option<Adam<T>>,
}

fn one_hot<T: Scalar>(i: usize, n: usize) -> impl Iterator<Item = T> {
    (0..n).map(move |k| if k == i { T::one() } else { T::zero() })
}

struct Decoded {
    outputs: Vec<Var>,
    last_weights: Var,
}

impl<T: Scalar> CreditModel<T> {
    pub fn new<R: Rng + ?Sized>(window: usize, input_dim: usize, cfg: CreditConfig<T>, rng: &mut R) -> Self {
        assert!(window > 0, "credit window must be positive");
        let h = cfg.hidden;
        let mut store = ParamStore::new();
        // both recurrences also see a one-hot of their position in the window
        let encoder = Gru::new(&mut store, "credit.enc", input_dim + window, h, rng);
        let decoder = Gru::new(&mut store, "credit.dec", 1 + window + 1, h, rng);
        let attention = AdditiveAttention::new(&mut store, "credit.attn", h, h, cfg.attention, rng);
        let output = Linear::new(&mut store, "credit.out", 2 * h, 1, rng);
        let adam = Some(Adam::new(&store, cfg.lr));
        Self { cfg, store, encoder, decoder, attention, output, window, input_dim, armed: false, trainings: 0, adam }
    }

    /// Number of completed training bursts.
    pub fn trainings(&self) -> usize {
        self.trainings
    }

    pub fn is_armed(&self) -> bool {
        self.armed
    }

    /// Marks that a new extrinsic signal has arrived.
    pub fn arm(&mut self) {
        self.armed = true;
    }

    /// Runs encoder and decoder. With `teacher` the decoder is fed the
    /// previous target; otherwise its own previous output.
    fn run(&self, tape: &mut Tape<'_, T>, inputs: &[Vec<T>], teacher: Option<&[T]>) -> Decoded {
        let mut h = tape.input(vec![T::zero(); self.cfg.hidden]);
        let mut states = Vec::with_capacity(inputs.len());
        for (i, x) in inputs.iter().enumerate() {
            let mut x = x.clone();
            x.extend(one_hot::<T>(i, self.window));
            let x = tape.input(x);
            h = self.encoder.step(tape, x, h);
            states.push(h);
        }
        let projected = self.attention.project_keys(tape, &states);
        let mut s = tape.input(vec![T::zero(); self.cfg.hidden]);
        let mut prev = T::zero();
        let mut outputs = Vec::with_capacity(inputs.len() + 1);
        let mut last_weights = None;
        for o in 0..=inputs.len() {
            let mut y_in = vec![prev];
            y_in.extend(one_hot::<T>(o, self.window + 1));
            let y_in = tape.input(y_in);
            s = self.decoder.step(tape, y_in, s);
            let (weights, context) = self.attention.attend(tape, &states, &projected, s);
            let joined = tape.concat(&[s, context]);
            let y = self.output.forward(tape, joined);
            prev = match teacher {
                Some(t) => t[o],
                None => tape.scalar(y),
            };
            outputs.push(y);
            last_weights = Some(weights);
        }
        Decoded { outputs, last_weights: last_weights.expect("decoder runs at least once") }
    }

    fn check(&self, inputs: &[Vec<T>]) -> Result<(), CreditError> {
        if inputs.len() != self.window {
            return Err(CreditError::Batch(format!("sequence of {} (window {})", inputs.len(), self.window)));
        }
        if let Some(bad) = inputs.iter().find(|x| x.len() != self.input_dim) {
            return Err(CreditError::Batch(format!("input of width {} (expected {})", bad.len(), self.input_dim)));
        }
        Ok(())
    }

    /// Forward-only pass; the attention row of the extrinsic slot.
    pub fn infer_credit(&self, inputs: &[Vec<T>]) -> Result<CreditWeights<T>, CreditError> {
        self.check(inputs)?;
        let mut tape = Tape::new(&self.store);
        let d = self.run(&mut tape, inputs, None);
        Ok(CreditWeights(tape.value(d.last_weights).to_vec()))
    }

    /// Autoregressive predictions of the payoffs and the extrinsic signal.
    pub fn predict(&self, inputs: &[Vec<T>]) -> Result<Vec<T>, CreditError> {
        self.check(inputs)?;
        let mut tape = Tape::new(&self.store);
        let d = self.run(&mut tape, inputs, None);
        Ok(d.outputs.iter().map(|y| tape.scalar(*y)).collect())
    }

    /// Teacher-forced epochs over `batches`, one Adam step per batch.
    /// Allowed once per [`arm`](Self::arm); returns the mean loss of the final
    /// epoch.
    pub fn train_credit(&mut self, batches: &[CreditBatch<T>], epochs: usize) -> Result<T, CreditError> {
        if !self.armed {
            return Err(CreditError::NotArmed);
        }
        for b in batches {
            self.check(&b.inputs)?;
            if b.targets.len() != b.inputs.len() + 1 {
                return Err(CreditError::Batch("targets must hold ν payoffs and the extrinsic signal".into()));
            }
        }
        self.armed = false;
        let mut last = T::zero();
        for epoch in 0..epochs {
            let mut total = T::zero();
            for b in batches {
                let loss = self.fit_one(b);
                if !loss.is_finite() {
                    return Err(CreditError::NonFinite { epoch, last: last.to_f64_lossy() });
                }
                total += loss;
            }
            last = total / T::from_usize_lossy(batches.len().max(1));
        }
        self.trainings += 1;
        Ok(last)
    }

    fn fit_one(&mut self, batch: &CreditBatch<T>) -> T {
        let mut tape = Tape::new(&self.store);
        let d = self.run(&mut tape, &batch.inputs, Some(&batch.targets));
        let n = T::from_usize_lossy(batch.targets.len());
        let mut loss = T::zero();
        let mut seeds = Vec::with_capacity(d.outputs.len());
        for (y, t) in d.outputs.iter().zip(&batch.targets) {
            let e = tape.scalar(*y) - *t;
            loss += e * e / n;
            seeds.push((*y, vec![T::lit(2.0) * e / n]));
        }
        if !loss.is_finite() {
            return loss;
        }
        let refs: Vec<_> = seeds.iter().map(|(v, g)| (*v, g.as_slice())).collect();
        let grads = tape.backward(&refs).params;
        drop(tape);
        if grads.is_finite() {
            let lr = self.cfg.lr;
            let adam = self.adam.get_or_insert_with(|| Adam::new(&self.store, lr));
            adam.step(&mut self.store, &grads);
        }
        loss
    }
}
