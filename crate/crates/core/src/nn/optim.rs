use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use super::tape::{Grads, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    Constant,
    Linear,
    /// Geometric interpolation from `start` to `end`.
    Exponential,
}

/// Learning rate as a function of the step, with linear warmup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub start: f64,
    pub end: f64,
    pub decay: Decay,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule { start: 5e-5, end: 5e-7, decay: Decay::Exponential, warmup_steps: 0, total_steps: 1000 }
    }
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule { start: lr, end: lr, decay: Decay::Constant, warmup_steps: 0, total_steps: 1 }
    }

    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.start * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let frac = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        match self.decay {
            Decay::Constant => self.start,
            Decay::Linear => self.start + (self.end - self.start) * frac,
            Decay::Exponential => {
                if self.start <= 0.0 || self.end <= 0.0 {
                    self.start + (self.end - self.start) * frac
                } else {
                    self.start * (self.end / self.start).powf(frac)
                }
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = |_: ()| params.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect();
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: zeros(()), v: zeros(()), t: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Grads<T>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.t as i32));
        let c2 = T::of(1.0 - self.beta2.powi(self.t as i32));
        let (lr, eps) = (T::of(lr), T::of(self.eps));
        for (id, g) in grads.tensors.iter().enumerate() {
            let p = &mut params.get_mut(id).data;
            let (m, v) = (&mut self.m[id], &mut self.v[id]);
            for i in 0..p.len() {
                let gi = g.data[i];
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
