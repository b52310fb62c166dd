use super::tape::{Grads, ParamStore};
use crate::scalar::Scalar;

/// Adam, minimizing.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    m: Grads<T>,
    v: Grads<T>,
    steps: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: Grads::zeros(store),
            v: Grads::zeros(store),
            steps: 0,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Grads<T>) {
        self.steps += 1;
        let c1 = T::one() - self.beta1.powi(self.steps);
        let c2 = T::one() - self.beta2.powi(self.steps);
        let scale = -self.lr;
        let tiny = T::min_positive_value();
        for (k, g) in grads.data.iter().enumerate() {
            let (m, v) = (&mut self.m.data[k], &mut self.v.data[k]);
            let p = store.data_mut(k);
            for i in 0..g.len() {
                let gi = g[i];
                m[i] = self.beta1 * m[i] + (T::one() - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (T::one() - self.beta2) * gi * gi;
                // flush decayed moments before they go subnormal
                if m[i].abs() < tiny {
                    m[i] = T::zero();
                }
                if v[i] < tiny {
                    v[i] = T::zero();
                }
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] += scale * (mhat / (vhat.sqrt() + self.eps));
            }
        }
    }
}
