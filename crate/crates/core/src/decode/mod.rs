//! Greedy and blockwise multi-token decoding with step accounting.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{EncodedImage, KvCache, MicroModel, Scalar};
use crate::tokenize::{TokenSeq, Vocab};

/// A model that, after consuming a prefix, proposes the next tokens of
/// each of its parallel heads.
pub trait BlockPredictor {
    type Input: ?Sized;
    type Session;

    /// Number of parallel heads; head `i` predicts offset `i + 1`.
    fn heads(&self) -> usize;

    fn begin(&self, input: &Self::Input) -> Result<Self::Session>;

    /// Appends `ids` to the session prefix and returns the argmax of every
    /// head at the last position. One call is one forward pass.
    fn feed(&self, session: &mut Self::Session, ids: &[u32]) -> Result<Vec<u32>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeBudget {
    pub max_tokens: usize,
    /// Tokens emitted per outer step.
    pub n: usize,
    pub start: u32,
    pub stop: u32,
}

impl DecodeBudget {
    pub fn new(max_tokens: usize, n: usize, vocab: &Vocab) -> Self {
        DecodeBudget { max_tokens, n, start: vocab.bos(), stop: vocab.eos() }
    }

    fn validate(&self, heads: usize) -> Result<()> {
        if self.n == 0 || self.max_tokens == 0 {
            return Err(Error::InvalidConfig("block size and max_tokens must be at least 1".into()));
        }
        if self.n > heads {
            return Err(Error::InvalidConfig(format!("block size {} needs {} heads, model has {heads}", self.n, self.n)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    /// Emitted tokens, excluding the start token and including the stop
    /// token when one was produced.
    pub emitted: Vec<u32>,
    pub outer_steps: usize,
    pub forward_passes: usize,
    pub wall_seconds: f64,
}

impl DecodeTrace {
    pub fn stopped(&self, stop: u32) -> bool {
        self.emitted.last() == Some(&stop)
    }

    /// Start token followed by the emitted tokens.
    pub fn sequence(&self, start: u32) -> Vec<u32> {
        std::iter::once(start).chain(self.emitted.iter().copied()).collect()
    }

    pub fn token_seq(&self, start: u32, vocab: &Vocab) -> TokenSeq {
        TokenSeq::from_ids(self.sequence(start), vocab)
    }
}

/// One token per forward pass from the first head.
pub fn greedy_decode<P: BlockPredictor>(model: &P, input: &P::Input, budget: &DecodeBudget) -> Result<DecodeTrace> {
    if budget.n != 1 {
        return Err(Error::InvalidConfig(format!("greedy decoding uses n = 1, got {}", budget.n)));
    }
    budget.validate(model.heads())?;
    let t0 = Instant::now();
    let mut session = model.begin(input)?;
    let mut emitted = Vec::new();
    let mut passes = 0;
    let mut last = budget.start;
    while emitted.len() < budget.max_tokens {
        let next = model.feed(&mut session, &[last])?[0];
        passes += 1;
        emitted.push(next);
        if next == budget.stop {
            break;
        }
        last = next;
    }
    Ok(DecodeTrace { emitted, outer_steps: passes, forward_passes: passes, wall_seconds: t0.elapsed().as_secs_f64() })
}

/// Emits the first `n` heads' tokens per forward pass.
///
/// All heads of a block condition on the prefix before the block. A stop
/// token inside a block truncates it there.
pub fn mtp_decode<P: BlockPredictor>(model: &P, input: &P::Input, budget: &DecodeBudget) -> Result<DecodeTrace> {
    budget.validate(model.heads())?;
    let t0 = Instant::now();
    let mut session = model.begin(input)?;
    let mut emitted: Vec<u32> = Vec::new();
    let mut passes = 0;
    let mut fed_upto = 0;
    'outer: while emitted.len() < budget.max_tokens {
        let preds = if passes == 0 {
            model.feed(&mut session, &[budget.start])?
        } else {
            model.feed(&mut session, &emitted[fed_upto..])?
        };
        passes += 1;
        fed_upto = emitted.len();
        for &tok in &preds[..budget.n] {
            emitted.push(tok);
            if tok == budget.stop || emitted.len() == budget.max_tokens {
                break 'outer;
            }
        }
    }
    Ok(DecodeTrace { emitted, outer_steps: passes, forward_passes: passes, wall_seconds: t0.elapsed().as_secs_f64() })
}

/// Blockwise decoding of many inputs across the rayon pool.
pub fn decode_batch<P>(model: &P, inputs: &[&P::Input], budget: &DecodeBudget) -> Vec<Result<DecodeTrace>>
where
    P: BlockPredictor + Sync,
    P::Input: Sync,
{
    inputs.par_iter().map(|x| mtp_decode(model, x, budget)).collect()
}

/// Timing summary for one block size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub images: usize,
    pub mean_wall_seconds: f64,
    pub median_wall_seconds: f64,
    pub mean_steps: f64,
    pub mean_tokens: f64,
    /// `1 - mean_wall / mean_wall(n = 1)`, when an n = 1 row exists.
    pub speedup: Option<f64>,
}

/// Decodes every input under every budget sequentially on the calling
/// thread and summarizes wall-clock time and step counts.
pub fn bench_decode<P: BlockPredictor>(model: &P, inputs: &[&P::Input], budgets: &[DecodeBudget]) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(budgets.len());
    for b in budgets {
        let mut walls = Vec::with_capacity(inputs.len());
        let (mut steps, mut tokens) = (0usize, 0usize);
        for x in inputs {
            let t = mtp_decode(model, x, b)?;
            walls.push(t.wall_seconds);
            steps += t.outer_steps;
            tokens += t.emitted.len();
        }
        let k = inputs.len().max(1) as f64;
        rows.push(BenchRow {
            n: b.n,
            images: inputs.len(),
            mean_wall_seconds: walls.iter().sum::<f64>() / k,
            median_wall_seconds: median(&mut walls),
            mean_steps: steps as f64 / k,
            mean_tokens: tokens as f64 / k,
            speedup: None,
        });
    }
    if let Some(base) = rows.iter().find(|r| r.n == 1).map(|r| r.mean_wall_seconds) {
        for r in &mut rows {
            r.speedup = (base > 0.0).then(|| 1.0 - r.mean_wall_seconds / base);
        }
    }
    Ok(rows)
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

pub fn write_bench_csv(mut w: impl Write, rows: &[BenchRow]) -> Result<()> {
    writeln!(w, "n,images,mean_wall_seconds,median_wall_seconds,mean_steps,mean_tokens,speedup")?;
    for r in rows {
        let speedup = r.speedup.map(|s| format!("{s:.4}")).unwrap_or_default();
        writeln!(
            w,
            "{},{},{:.6},{:.6},{:.3},{:.3},{}",
            r.n, r.images, r.mean_wall_seconds, r.median_wall_seconds, r.mean_steps, r.mean_tokens, speedup
        )?;
    }
    Ok(())
}

fn argmax<T: Scalar>(xs: &[T]) -> u32 {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best as u32
}

impl<T: Scalar> BlockPredictor for MicroModel<T> {
    type Input = [T];
    type Session = (EncodedImage<T>, KvCache<T>);

    fn heads(&self) -> usize {
        self.cfg.mtp_heads
    }

    fn begin(&self, image: &[T]) -> Result<Self::Session> {
        Ok((self.encode_image(image)?, self.new_cache()))
    }

    fn feed(&self, (enc, cache): &mut Self::Session, ids: &[u32]) -> Result<Vec<u32>> {
        if cache.len() + ids.len() > self.cfg.max_len {
            return Err(Error::ShapeMismatch(format!("decoding past {} positions", self.cfg.max_len)));
        }
        Ok(self.step(enc, cache, ids)?.iter().map(|l| argmax(l)).collect())
    }
}
