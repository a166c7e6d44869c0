//! Data preparation, training and decoding shared by the subcommands.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tableseq::decode::{decode_batch, DecodeBudget, DecodeTrace};
use tableseq::imgproc::{compute_stats, normalize, NormStats};
use tableseq::nn::{MicroModel, ModelConfig, StepMetrics, TrainSample, Trainer};
use tableseq::synth::{generate_sample, DatasetConfig};
use tableseq::table::{read_jsonl, AnnotationRecord};
use tableseq::targets::{build_targets, downsample_targets, read_tsqt, RidgeConfig, StructMaps};
use tableseq::tokenize::{deserialize, serialize, SerializeOptions};
use tableseq::{Error, Image, QuantSpec, Table, Vocab};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// An image with its gold table, from a manifest or the generator.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    /// Image path as written in the manifest; pairs predictions with gold.
    pub key: String,
    pub image: Image,
    pub table: Table,
    /// Full-resolution structure targets, when already computed.
    pub maps: Option<StructMaps>,
}

/// Directory that relative paths in a manifest are resolved against.
pub fn manifest_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn require_path(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::PathMissing(path.to_path_buf()))
    }
}

pub fn read_manifest(path: &Path) -> CliResult<Vec<AnnotationRecord>> {
    require_path(path)?;
    Ok(read_jsonl(path)?)
}

/// Loads every record's image, table and (if listed) targets.
pub fn load_labeled(path: &Path) -> CliResult<Vec<LabeledImage>> {
    let base = manifest_base(path);
    read_manifest(path)?
        .par_iter()
        .map(|r| {
            let image = Image::read_pnm(base.join(&r.image))?;
            let maps = r.targets.as_ref().map(|t| read_tsqt(base.join(t))).transpose()?;
            Ok(LabeledImage { key: r.image.clone(), image, table: r.to_table()?, maps })
        })
        .collect()
}

/// Generates samples `0..cfg.count` of a synthetic dataset in memory.
pub fn synth_labeled(cfg: &DatasetConfig) -> CliResult<Vec<LabeledImage>> {
    (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let s = generate_sample(cfg, i)?;
            Ok(LabeledImage {
                key: format!("images/{i:05}.pgm"),
                image: s.rendered.image,
                table: s.rendered.table,
                maps: Some(s.maps),
            })
        })
        .collect()
}

/// Grayscale normalized input in the model's layout.
pub fn model_input(image: &Image, model: &ModelConfig, stats: &NormStats) -> CliResult<Vec<f32>> {
    if (image.height, image.width) != (model.image_h, model.image_w) {
        return Err(Error::Format(format!(
            "image is {}x{}, the model expects {}x{}",
            image.height, image.width, model.image_h, model.image_w
        ))
        .into());
    }
    Ok(normalize(&image.to_gray(), stats)?)
}

/// Normalization statistics of the grayscale images.
pub fn gray_stats(items: &[LabeledImage]) -> CliResult<NormStats> {
    let grays: Vec<Image> = items.iter().map(|x| x.image.to_gray()).collect();
    Ok(compute_stats(&grays)?)
}

/// Serializes the gold tables and downsamples the targets to the head grid.
pub fn prepare(
    items: &[LabeledImage],
    stats: &NormStats,
    model: &ModelConfig,
    vocab: &Vocab,
    quant: QuantSpec,
    ridge: &RidgeConfig,
) -> CliResult<Vec<TrainSample<f32>>> {
    let opts = SerializeOptions { quant, coords: true, replacement: Some('?') };
    let (hh, hw) = model.head_grid();
    items
        .par_iter()
        .map(|x| {
            let tokens = serialize(&x.table, vocab, &opts)?.ids;
            if tokens.len() > model.max_len {
                return Err(Error::Format(format!("{}: {} tokens exceed model.max_len {}", x.key, tokens.len(), model.max_len)).into());
            }
            let full = match &x.maps {
                Some(m) => m.clone(),
                None => build_targets(&x.table, ridge)?,
            };
            let maps = downsample_targets(&full, hh, hw).to_chw();
            Ok(TrainSample { image: model_input(&x.image, model, stats)?, tokens, maps })
        })
        .collect()
}

/// Trains a fresh model. With both pools non-empty every batch slot is
/// drawn from the synthetic pool with the curriculum probability;
/// otherwise the single pool is visited in shuffled epochs.
pub fn train_model(
    run: &RunConfig,
    synth: &[TrainSample<f32>],
    real: &[TrainSample<f32>],
    vocab: &Vocab,
    mut on_step: impl FnMut(&StepMetrics),
) -> CliResult<(MicroModel<f32>, Vec<StepMetrics>)> {
    let model = MicroModel::new(run.model.clone(), run.seed)?;
    let mut trainer = Trainer::new(model, run.train.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.train.seed ^ 0xC0FF_EE00);
    let steps = run.train.steps;
    let mut curve = Vec::with_capacity(steps);
    for step in 0..steps {
        let m = match (synth.is_empty(), real.is_empty()) {
            (true, true) => return Err(Error::Unusable("no training samples".into()).into()),
            (false, true) => trainer.train_step(synth, vocab)?,
            (true, false) => trainer.train_step(real, vocab)?,
            (false, false) => {
                let p = run.curriculum.synth_fraction(step, steps);
                let batch: Vec<&TrainSample<f32>> = (0..run.train.batch_size)
                    .map(|_| {
                        let pool = if rng.gen_bool(p.clamp(0.0, 1.0)) { synth } else { real };
                        &pool[rng.gen_range(0..pool.len())]
                    })
                    .collect();
                trainer.train_batch(&batch, vocab)?
            }
        };
        on_step(&m);
        curve.push(m);
    }
    Ok((trainer.model, curve))
}

/// One decoded image.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub table: Table,
    pub trace: Option<DecodeTrace>,
    pub repairs: Vec<String>,
    /// Why decoding or reconstruction failed; `table` is then a blank 1x1.
    pub failure: Option<String>,
}

/// Blank single-cell table standing in for an unusable prediction.
pub fn placeholder_table() -> Table {
    Table::from_texts(1, 1, &[""]).expect("1x1 table is valid")
}

/// Budget clamped so the prefix never outgrows the position table.
pub fn budget(model: &ModelConfig, max_tokens: usize, n: usize, vocab: &Vocab) -> DecodeBudget {
    DecodeBudget::new(max_tokens.min(model.max_len.saturating_sub(1)).max(1), n, vocab)
}

/// Decodes every input in parallel and rebuilds tables. Per-image
/// failures are recorded instead of aborting the batch.
pub fn decode_all(model: &MicroModel<f32>, inputs: &[Vec<f32>], budget: &DecodeBudget, vocab: &Vocab, quant: QuantSpec) -> Vec<Decoded> {
    let refs: Vec<&[f32]> = inputs.iter().map(Vec::as_slice).collect();
    decode_batch(model, &refs, budget)
        .into_iter()
        .map(|r| match r {
            Err(e) => Decoded { table: placeholder_table(), trace: None, repairs: Vec::new(), failure: Some(e.to_string()) },
            Ok(trace) => {
                // Deserialization tolerates a missing EOS when the budget ran out.
                match deserialize(&trace.token_seq(budget.start, vocab), vocab, quant) {
                    Ok((table, repairs)) => Decoded { table, trace: Some(trace), repairs, failure: None },
                    Err(e) => Decoded { table: placeholder_table(), trace: Some(trace), repairs: Vec::new(), failure: Some(e.to_string()) },
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_run() -> RunConfig {
        let mut run = RunConfig::default();
        run.data.count = 4;
        run.model.d_model = 16;
        run.model.ffn = 32;
        run.model.dec_layers = 1;
        run.set_mtp_heads(2);
        run.set_steps(2);
        run.train.batch_size = 2;
        run
    }

    #[test]
    fn prepare_train_decode_smoke() {
        let run = tiny_run();
        let vocab = Vocab::default();
        let items = synth_labeled(&run.data).unwrap();
        let stats = gray_stats(&items).unwrap();
        let samples = prepare(&items, &stats, &run.model, &vocab, run.data.quant, &run.data.ridge).unwrap();
        assert_eq!(samples[0].tokens[0], vocab.bos());
        assert_eq!(samples[0].maps.len(), 3 * 8 * 16);
        let (model, curve) = train_model(&run, &samples, &samples[..1], &vocab, |_| {}).unwrap();
        assert_eq!(curve.len(), 2);
        let inputs: Vec<Vec<f32>> = samples.iter().map(|s| s.image.clone()).collect();
        let out = decode_all(&model, &inputs, &budget(&run.model, 5, 2, &vocab), &vocab, run.data.quant);
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|d| d.trace.as_ref().is_some_and(|t| t.emitted.len() <= 6)));
    }

    #[test]
    fn wrong_image_size_is_a_data_error() {
        let stats = NormStats { mean: vec![128.0], std: vec![10.0] };
        let e = model_input(&Image::filled(10, 10, 1, 0), &ModelConfig::default(), &stats).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }
}
