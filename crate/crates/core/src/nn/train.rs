//! Teacher-forced training with Adam.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::{inject_noise, TokenSeq, Vocab};

use super::model::MicroModel;
use super::optim::{Adam, LrSchedule};
use super::scalar::Scalar;
use super::tape::{Grads, Graph};

/// One training example: normalized image, clean token ids (BOS..EOS) and
/// structure targets at the head resolution (`3 x H/8 x W/8`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample<T> {
    pub image: Vec<T>,
    pub tokens: Vec<u32>,
    pub maps: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    /// Probability of corrupting each text/coordinate input token.
    pub noise_rate: f64,
    pub coord_radius: u32,
    /// MTP weights, one per head, summing to 1.
    pub mtp_weights: Vec<f64>,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            batch_size: 8,
            schedule: LrSchedule::default(),
            noise_rate: 0.03,
            coord_radius: 3,
            mtp_weights: vec![1.0],
            clip_norm: Some(1.0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub lr: f64,
    pub loss_seq: f64,
    pub loss_mtp: f64,
    pub loss_prior: f64,
    pub total: f64,
    pub grad_norm: f64,
}

/// Model, optimizer and sampling state of a training run.
pub struct Trainer<T: Scalar> {
    pub model: MicroModel<T>,
    pub cfg: TrainConfig,
    adam: Adam<T>,
    grads: Grads<T>,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    step: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: MicroModel<T>, cfg: TrainConfig) -> Result<Self> {
        if cfg.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        super::model::check_weights(&cfg.mtp_weights, model.cfg.mtp_heads)?;
        let adam = Adam::new(&model.params);
        let grads = Grads::zeros_like(&model.params);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Trainer { model, cfg, adam, grads, rng, order: Vec::new(), cursor: 0, step: 0 })
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Next batch of sample indices; reshuffles at each epoch boundary.
    fn next_batch(&mut self, n: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.cfg.batch_size);
        while batch.len() < self.cfg.batch_size.min(n) {
            if self.cursor >= self.order.len() || self.order.len() != n {
                self.order = (0..n).collect();
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }

    /// One optimizer step on a batch drawn from `data`.
    pub fn train_step(&mut self, data: &[TrainSample<T>], vocab: &Vocab) -> Result<StepMetrics> {
        if data.is_empty() {
            return Err(Error::Unusable("no training samples".into()));
        }
        let idx = self.next_batch(data.len());
        let batch: Vec<&TrainSample<T>> = idx.iter().map(|&i| &data[i]).collect();
        self.train_batch(&batch, vocab)
    }

    /// One optimizer step on an explicit batch.
    pub fn train_batch(&mut self, batch: &[&TrainSample<T>], vocab: &Vocab) -> Result<StepMetrics> {
        if batch.is_empty() {
            return Err(Error::Unusable("empty batch".into()));
        }
        let weights: Vec<T> = self.cfg.mtp_weights.iter().map(|&w| T::of(w)).collect();
        self.grads.zero();
        let mut sums = [0.0f64; 4];
        for (i, &s) in batch.iter().enumerate() {
            let inputs = if self.cfg.noise_rate > 0.0 {
                let seq = TokenSeq::from_ids(s.tokens.clone(), vocab);
                inject_noise(&seq, vocab, self.cfg.noise_rate, self.cfg.coord_radius, &mut self.rng).ids
            } else {
                s.tokens.clone()
            };
            let mut g = Graph::new(&self.model.params);
            let l = self.model.losses(&mut g, &s.image, &inputs, &s.tokens, &s.maps, &weights, vocab.pad())?;
            let vals = [l.seq, l.mtp, l.prior, l.total].map(|v| g.value(v).item().to_f64().unwrap());
            if let Some(bad) = vals.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss { step: self.step, detail: format!("batch item {i}: loss {bad}") });
            }
            for (acc, v) in sums.iter_mut().zip(vals) {
                *acc += v;
            }
            g.backward(l.total, &mut self.grads);
        }
        let b = batch.len() as f64;
        self.grads.scale(T::of(1.0 / b));
        let norm = self.grads.sq_norm().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step, detail: "gradient norm is not finite".into() });
        }
        if let Some(max) = self.cfg.clip_norm {
            if norm > max {
                self.grads.scale(T::of(max / norm));
            }
        }
        let lr = self.cfg.schedule.lr(self.step);
        self.adam.step(&mut self.model.params, &self.grads, lr);
        let m = StepMetrics {
            step: self.step,
            lr,
            loss_seq: sums[0] / b,
            loss_mtp: sums[1] / b,
            loss_prior: sums[2] / b,
            total: sums[3] / b,
            grad_norm: norm,
        };
        self.step += 1;
        Ok(m)
    }
}

/// Runs `cfg.steps` steps, calling `on_step` after each; stops early when
/// it returns `false`.
pub fn train<T: Scalar>(
    model: MicroModel<T>,
    data: &[TrainSample<T>],
    vocab: &Vocab,
    cfg: TrainConfig,
    mut on_step: impl FnMut(&StepMetrics, &MicroModel<T>) -> bool,
) -> Result<(MicroModel<T>, Vec<StepMetrics>)> {
    let steps = cfg.steps;
    let mut t = Trainer::new(model, cfg)?;
    let mut curve = Vec::with_capacity(steps);
    for _ in 0..steps {
        let m = t.train_step(data, vocab)?;
        curve.push(m);
        if !on_step(&m, &t.model) {
            break;
        }
    }
    Ok((t.model, curve))
}

/// Training curve as CSV: step, L_seq, L_prior, total (plus lr, MTP loss
/// and gradient norm).
pub fn write_curve_csv(path: impl AsRef<Path>, curve: &[StepMetrics]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "step,loss_seq,loss_prior,total,loss_mtp,lr,grad_norm")?;
    for m in curve {
        writeln!(w, "{},{},{},{},{},{},{}", m.step, m.loss_seq, m.loss_prior, m.total, m.loss_mtp, m.lr, m.grad_norm)?;
    }
    w.flush()?;
    Ok(())
}
