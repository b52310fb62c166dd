//! Reverse-mode differentiation over small dense vectors.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters live in
//! a [`ParamStore`] that outlives the tape; calling [`Tape::backward`] yields
//! one gradient buffer per stored parameter. Matrices are row-major and only
//! appear as the left operand of [`Tape::matvec`].

use serde::{Deserialize, Serialize};

use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor shape does not match data");
        Self { rows, cols, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Named trainable tensors of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        self.entries.push(ParamEntry { name: name.into(), tensor });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].tensor
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub(crate) fn data_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.entries[k].tensor.data
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    /// `θ ← θ + scale · g` for every parameter.
    pub fn axpy(&mut self, grads: &Grads<T>, scale: T) {
        for (entry, g) in self.entries.iter_mut().zip(&grads.data) {
            for (p, gi) in entry.tensor.data.iter_mut().zip(g) {
                *p += scale * *gi;
            }
        }
    }

    pub fn fill(&mut self, value: T) {
        for e in &mut self.entries {
            e.tensor.data.iter_mut().for_each(|x| *x = value);
        }
    }

    pub fn flat(&self) -> Vec<T> {
        self.entries.iter().flat_map(|e| e.tensor.data.iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.tensor.data.iter().all(|x| x.is_finite()))
    }

    /// Copies values from `other` when every name and shape agrees.
    pub fn load_from(&mut self, other: &ParamStore<T>) -> Result<(), String> {
        if other.entries.len() != self.entries.len() {
            return Err(format!(
                "parameter count mismatch: expected {}, found {}",
                self.entries.len(),
                other.entries.len()
            ));
        }
        for (mine, theirs) in self.entries.iter().zip(&other.entries) {
            if mine.name != theirs.name
                || mine.tensor.rows != theirs.tensor.rows
                || mine.tensor.cols != theirs.tensor.cols
            {
                return Err(format!("parameter `{}` does not match `{}`", mine.name, theirs.name));
            }
        }
        for (mine, theirs) in self.entries.iter_mut().zip(&other.entries) {
            mine.tensor.data.clone_from(&theirs.tensor.data);
        }
        Ok(())
    }
}

/// One gradient buffer per parameter of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub(crate) data: Vec<Vec<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn zeros(store: &ParamStore<T>) -> Self {
        Self { data: store.entries.iter().map(|e| vec![T::zero(); e.tensor.len()]).collect() }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.data[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads<T>) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        self.data.iter_mut().flatten().for_each(|x| *x *= k);
    }

    pub fn norm(&self) -> T {
        self.data.iter().flatten().map(|x| *x * *x).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|x| x.is_finite())
    }

    /// Rescales so the global norm does not exceed `max_norm`.
    pub fn clip_norm(&mut self, max_norm: T) {
        let n = self.norm();
        if n > max_norm && n > T::zero() {
            self.scale(max_norm / n);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatVec { w: Var, x: Var, rows: usize, cols: usize },
    Affine { w: Var, b: Var, x: Var, rows: usize, cols: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Offset(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softplus(Var),
    Exp(Var),
    Slice { a: Var, start: usize },
    Concat(Vec<Var>),
    Sum(Var),
    Max(Var, Var),
    Softmax(Var),
    ScaleBy { s: Var, v: Var },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Vec<T>,
    op: Op<T>,
}

pub struct Tape<'a, T> {
    store: &'a ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

/// Result of a backward pass.
pub struct Backward<T> {
    pub params: Grads<T>,
    node_grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Backward<T> {
    /// Gradient reaching `v` (typically an input leaf), if any flowed there.
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.node_grads[v.0].as_deref()
    }
}

/// Dot product with independent partial sums so the loop pipelines.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn accumulate<T: Scalar>(slot: &mut Option<Vec<T>>, len: usize, f: impl Fn(usize) -> T) {
    let buf = slot.get_or_insert_with(|| vec![T::zero(); len]);
    for (i, b) in buf.iter_mut().enumerate() {
        *b += f(i);
    }
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new(store: &'a ParamStore<T>) -> Self {
        Self { store, nodes: Vec::with_capacity(256), param_vars: vec![None; store.len()] }
    }

    fn data(&self, v: Var) -> &[T] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => &self.store.get(id).data,
            _ => &node.value,
        }
    }

    fn push(&mut self, value: Vec<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[T] {
        self.data(v)
    }

    pub fn scalar(&self, v: Var) -> T {
        self.data(v)[0]
    }

    pub fn len(&self, v: Var) -> usize {
        self.data(v).len()
    }

    pub fn input(&mut self, data: Vec<T>) -> Var {
        self.push(data, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        // parameter values are read from the store, not copied
        let v = self.push(Vec::new(), Op::Param(id));
        self.param_vars[id.0] = Some(v);
        v
    }

    /// `W x` where `W` is the parameter behind `w`.
    pub fn matvec(&mut self, w: ParamId, x: Var) -> Var {
        let (rows, cols) = {
            let t = self.store.get(w);
            (t.rows, t.cols)
        };
        let wv = self.param(w);
        assert_eq!(self.len(x), cols, "matvec shape mismatch");
        let wd = self.data(wv);
        let xd = self.data(x);
        let out = (0..rows)
            .map(|r| {
                dot(&wd[r * cols..(r + 1) * cols], xd)
            })
            .collect();
        self.push(out, Op::MatVec { w: wv, x, rows, cols })
    }

    /// `W x + b` as a single node.
    pub fn affine(&mut self, w: ParamId, b: ParamId, x: Var) -> Var {
        let (rows, cols) = {
            let t = self.store.get(w);
            (t.rows, t.cols)
        };
        let wv = self.param(w);
        let bv = self.param(b);
        assert_eq!(self.len(x), cols, "affine shape mismatch");
        let (wd, bd, xd) = (self.data(wv), self.data(bv), self.data(x));
        let out = (0..rows)
            .map(|r| {
                let row = &wd[r * cols..(r + 1) * cols];
                bd[r] + dot(row, xd)
            })
            .collect();
        self.push(out, Op::Affine { w: wv, b: bv, x, rows, cols })
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Vec<T> {
        let (av, bv) = (self.data(a), self.data(b));
        assert_eq!(av.len(), bv.len(), "elementwise shape mismatch");
        av.iter().zip(bv).map(|(x, y)| f(*x, *y)).collect()
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Vec<T> {
        self.data(a).iter().map(|x| f(*x)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let v = self.map(a, |x| x * k);
        self.push(v, Op::Scale(a, k))
    }

    /// Adds the constant `k` to every element.
    pub fn offset(&mut self, a: Var, k: T) -> Var {
        let v = self.map(a, |x| x + k);
        self.push(v, Op::Offset(a))
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.scale(a, -T::one());
        self.offset(n, T::one())
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.map(a, |x| x.tanh());
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.map(a, sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.map(a, |x| x.max(T::zero()));
        self.push(v, Op::Relu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.map(a, softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.map(a, |x| x.exp());
        self.push(v, Op::Exp(a))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.data(a)[start..start + len].to_vec();
        self.push(v, Op::Slice { a, start })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let v = parts.iter().flat_map(|p| self.data(*p).iter().copied()).collect();
        self.push(v, Op::Concat(parts.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().copied().sum::<T>();
        self.push(vec![s], Op::Sum(a))
    }

    pub fn max(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| if x >= y { x } else { y });
        self.push(v, Op::Max(a, b))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let xs = self.data(a);
        let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
        let e: Vec<T> = xs.iter().map(|x| (*x - m).exp()).collect();
        let z = e.iter().copied().sum::<T>();
        let v = e.into_iter().map(|x| x / z).collect();
        self.push(v, Op::Softmax(a))
    }

    /// Multiplies vector `v` by the single-element node `s`.
    pub fn scale_by(&mut self, s: Var, v: Var) -> Var {
        assert_eq!(self.len(s), 1, "scale_by expects a scalar node");
        let k = self.scalar(s);
        let out = self.map(v, |x| x * k);
        self.push(out, Op::ScaleBy { s, v })
    }

    /// `Σ (a - target)²` as a single-element node.
    pub fn squared_error(&mut self, a: Var, target: &[T]) -> Var {
        let t = self.input(target.to_vec());
        let d = self.sub(a, t);
        let sq = self.mul(d, d);
        self.sum(sq)
    }

    /// Back-propagates the given output gradients.
    pub fn backward(&self, seeds: &[(Var, &[T])]) -> Backward<T> {
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        for (v, g) in seeds {
            assert_eq!(self.len(*v), g.len(), "seed gradient shape mismatch");
            accumulate(&mut grads[v.0], g.len(), |i| g[i]);
        }
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let val = |v: Var| self.data(v);
            match &node.op {
                Op::Leaf | Op::Param(_) => {}
                Op::MatVec { w, x, rows, cols } | Op::Affine { w, x, rows, cols, .. } => {
                    if let Op::Affine { b, .. } = &node.op {
                        accumulate(&mut grads[b.0], g.len(), |i| g[i]);
                    }
                    let (rows, cols) = (*rows, *cols);
                    let (wd, xd) = (val(*w), val(*x));
                    let gw = grads[w.0].get_or_insert_with(|| vec![T::zero(); rows * cols]);
                    for (r, gr) in g.iter().enumerate() {
                        for (acc, xc) in gw[r * cols..(r + 1) * cols].iter_mut().zip(xd) {
                            *acc += *gr * *xc;
                        }
                    }
                    let gx = grads[x.0].get_or_insert_with(|| vec![T::zero(); cols]);
                    for (r, gr) in g.iter().enumerate() {
                        for (acc, wc) in gx.iter_mut().zip(&wd[r * cols..(r + 1) * cols]) {
                            *acc += *wc * *gr;
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.len(), |i| g[i]);
                    accumulate(&mut grads[b.0], g.len(), |i| g[i]);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[a.0], g.len(), |i| g[i]);
                    accumulate(&mut grads[b.0], g.len(), |i| -g[i]);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    accumulate(&mut grads[a.0], g.len(), |i| g[i] * bv[i]);
                    accumulate(&mut grads[b.0], g.len(), |i| g[i] * av[i]);
                }
                Op::Scale(a, k) => accumulate(&mut grads[a.0], g.len(), |i| g[i] * *k),
                Op::Offset(a) => accumulate(&mut grads[a.0], g.len(), |i| g[i]),
                Op::Tanh(a) => {
                    let y = &node.value;
                    accumulate(&mut grads[a.0], g.len(), |i| g[i] * (T::one() - y[i] * y[i]));
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    accumulate(&mut grads[a.0], g.len(), |i| g[i] * y[i] * (T::one() - y[i]));
                }
                Op::Relu(a) => {
                    let x = val(*a);
                    accumulate(&mut grads[a.0], g.len(), |i| {
                        if x[i] > T::zero() {
                            g[i]
                        } else {
                            T::zero()
                        }
                    });
                }
                Op::Softplus(a) => {
                    let x = val(*a);
                    accumulate(&mut grads[a.0], g.len(), |i| g[i] * sigmoid(x[i]));
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    accumulate(&mut grads[a.0], g.len(), |i| g[i] * y[i]);
                }
                Op::Slice { a, start } => {
                    let n = self.len(*a);
                    let start = *start;
                    let len = g.len();
                    accumulate(&mut grads[a.0], n, |i| {
                        if i >= start && i < start + len {
                            g[i - start]
                        } else {
                            T::zero()
                        }
                    });
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.len(*p);
                        accumulate(&mut grads[p.0], n, |i| g[off + i]);
                        off += n;
                    }
                }
                Op::Sum(a) => {
                    let n = self.len(*a);
                    accumulate(&mut grads[a.0], n, |_| g[0]);
                }
                Op::Max(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    accumulate(&mut grads[a.0], g.len(), |i| {
                        if av[i] >= bv[i] {
                            g[i]
                        } else {
                            T::zero()
                        }
                    });
                    accumulate(&mut grads[b.0], g.len(), |i| {
                        if av[i] >= bv[i] {
                            T::zero()
                        } else {
                            g[i]
                        }
                    });
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let dot = g.iter().zip(y).map(|(gi, yi)| *gi * *yi).sum::<T>();
                    accumulate(&mut grads[a.0], g.len(), |i| y[i] * (g[i] - dot));
                }
                Op::ScaleBy { s, v } => {
                    let (k, vv) = (val(*s)[0], val(*v));
                    let ds = g.iter().zip(vv).map(|(gi, x)| *gi * *x).sum::<T>();
                    accumulate(&mut grads[s.0], 1, |_| ds);
                    accumulate(&mut grads[v.0], g.len(), |i| g[i] * k);
                }
            }
            grads[idx] = Some(g);
        }

        let mut params = Grads { data: vec![Vec::new(); self.store.len()] };
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if let Op::Param(id) = &node.op {
                if let Some(g) = g.take() {
                    params.data[id.0] = g;
                }
            }
        }
        for (buf, e) in params.data.iter_mut().zip(self.store.entries()) {
            if buf.is_empty() {
                buf.resize(e.tensor.len(), T::zero());
            }
        }
        Backward { params, node_grads: grads }
    }
}
