use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Affine map `W x + b` with Glorot-uniform weights and zero bias.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let data = (0..inputs * outputs)
            .map(|_| T::lit(rng.random_range(-bound..bound)))
            .collect();
        let w = store.add(format!("{name}.w"), Tensor::from_vec(outputs, inputs, data));
        let b = store.add(format!("{name}.b"), Tensor::zeros(outputs, 1));
        Self { w, b, inputs, outputs }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        tape.affine(self.w, self.b, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<T: Scalar>(self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Linear>,
    hidden: Activation,
    output: Activation,
}

impl Mlp {
    /// `sizes` lists the input width, every hidden width, then the output width.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers, hidden, output }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let last = self.layers.len() - 1;
        self.layers.iter().enumerate().fold(x, |h, (i, layer)| {
            let z = layer.forward(tape, h);
            if i == last {
                self.output.apply(tape, z)
            } else {
                self.hidden.apply(tape, z)
            }
        })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }
}

/// Gated combination `t ⊙ h + (1 - t) ⊙ x` on plain values.
pub fn highway_forward<T: Scalar>(x: &[T], transformed: &[T], gate: &[T]) -> Vec<T> {
    x.iter()
        .zip(transformed)
        .zip(gate)
        .map(|((x, h), t)| *t * *h + (T::one() - *t) * *x)
        .collect()
}

/// Taped version of [`highway_forward`].
pub fn highway_combine<T: Scalar>(tape: &mut Tape<'_, T>, x: Var, transformed: Var, gate: Var) -> Var {
    let carry = tape.one_minus(gate);
    let a = tape.mul(gate, transformed);
    let b = tape.mul(carry, x);
    tape.add(a, b)
}

/// One highway layer: ReLU transform with a sigmoid gate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Highway {
    transform: Linear,
    gate: Linear,
}

impl Highway {
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, dim: usize, rng: &mut R) -> Self {
        let transform = Linear::new(store, &format!("{name}.h"), dim, dim, rng);
        let gate = Linear::new(store, &format!("{name}.t"), dim, dim, rng);
        // carry-biased start
        store.get_mut(gate.b).data.iter_mut().for_each(|b| *b = T::lit(-1.0));
        Self { transform, gate }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let h = self.transform.forward(tape, x);
        let h = tape.relu(h);
        let t = self.gate.forward(tape, x);
        let t = tape.sigmoid(t);
        highway_combine(tape, x, h, t)
    }
}

/// Temporal convolutions of several widths over a `window × features`
/// sequence, max-pooled over time and passed through a highway layer.
///
/// A filter wider than the window contributes a constant zero block, so the
/// output width is always `widths.len() * channels`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvHighwayStack {
    window: usize,
    features: usize,
    channels: usize,
    filters: Vec<(usize, Linear)>,
    highway: Highway,
}

impl ConvHighwayStack {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        window: usize,
        features: usize,
        widths: &[usize],
        channels: usize,
        rng: &mut R,
    ) -> Self {
        let filters = widths
            .iter()
            .map(|&w| (w, Linear::new(store, &format!("{name}.conv{w}"), w * features, channels, rng)))
            .collect();
        let highway = Highway::new(store, &format!("{name}.highway"), widths.len() * channels, rng);
        Self { window, features, channels, filters, highway }
    }

    pub fn output_dim(&self) -> usize {
        self.filters.len() * self.channels
    }

    pub fn input_dim(&self) -> usize {
        self.window * self.features
    }

    /// `x` is the row-major flattened window (oldest record first).
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        assert_eq!(tape.len(x), self.input_dim(), "window shape mismatch");
        let mut pooled = Vec::with_capacity(self.filters.len());
        for (width, filter) in &self.filters {
            if *width > self.window {
                pooled.push(tape.input(vec![T::zero(); self.channels]));
                continue;
            }
            let mut best: Option<Var> = None;
            for p in 0..=self.window - width {
                let patch = tape.slice(x, p * self.features, width * self.features);
                let z = filter.forward(tape, patch);
                let z = tape.relu(z);
                best = Some(match best {
                    Some(b) => tape.max(b, z),
                    None => z,
                });
            }
            pooled.push(best.expect("at least one filter position"));
        }
        let features = tape.concat(&pooled);
        self.highway.forward(tape, features)
    }
}

/// Gated recurrent cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Gru {
    update_x: Linear,
    update_h: Linear,
    reset_x: Linear,
    reset_h: Linear,
    cand_x: Linear,
    cand_h: Linear,
    pub hidden: usize,
}

impl Gru {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let mut lin = |part: &str, i: usize| Linear::new(store, &format!("{name}.{part}"), i, hidden, rng);
        Self {
            update_x: lin("zx", inputs),
            update_h: lin("zh", hidden),
            reset_x: lin("rx", inputs),
            reset_h: lin("rh", hidden),
            cand_x: lin("nx", inputs),
            cand_h: lin("nh", hidden),
            hidden,
        }
    }

    pub fn step<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var, h: Var) -> Var {
        let zx = self.update_x.forward(tape, x);
        let zh = self.update_h.forward(tape, h);
        let z = tape.add(zx, zh);
        let z = tape.sigmoid(z);
        let rx = self.reset_x.forward(tape, x);
        let rh = self.reset_h.forward(tape, h);
        let r = tape.add(rx, rh);
        let r = tape.sigmoid(r);
        let nx = self.cand_x.forward(tape, x);
        let nh = self.cand_h.forward(tape, h);
        let nh = tape.mul(r, nh);
        let n = tape.add(nx, nh);
        let n = tape.tanh(n);
        // h' = (1 - z) ⊙ n + z ⊙ h
        highway_combine(tape, n, h, z)
    }
}

/// Content-based additive attention: `score_i = vᵀ tanh(W_k k_i + W_q q)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdditiveAttention {
    key: Linear,
    query: Linear,
    score: Linear,
}

impl AdditiveAttention {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        key_dim: usize,
        query_dim: usize,
        attn_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            key: Linear::new(store, &format!("{name}.key"), key_dim, attn_dim, rng),
            query: Linear::new(store, &format!("{name}.query"), query_dim, attn_dim, rng),
            score: Linear::new(store, &format!("{name}.score"), attn_dim, 1, rng),
        }
    }

    /// Projects the keys once so several queries can reuse them.
    pub fn project_keys<T: Scalar>(&self, tape: &mut Tape<'_, T>, keys: &[Var]) -> Vec<Var> {
        keys.iter().map(|k| self.key.forward(tape, *k)).collect()
    }

    /// Returns `(weights, context)`; `weights` is a softmax over the keys.
    pub fn attend<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        keys: &[Var],
        projected: &[Var],
        query: Var,
    ) -> (Var, Var) {
        let q = self.query.forward(tape, query);
        let scores: Vec<Var> = projected
            .iter()
            .map(|k| {
                let s = tape.add(*k, q);
                let s = tape.tanh(s);
                self.score.forward(tape, s)
            })
            .collect();
        let scores = tape.concat(&scores);
        let weights = tape.softmax(scores);
        let mut context: Option<Var> = None;
        for (i, k) in keys.iter().enumerate() {
            let w = tape.slice(weights, i, 1);
            let term = tape.scale_by(w, *k);
            context = Some(match context {
                Some(c) => tape.add(c, term),
                None => term,
            });
        }
        let context = context.expect("attention over at least one key");
        (weights, context)
    }
}
