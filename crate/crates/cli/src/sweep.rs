//! Inference-time key-bias sensitivity and grid-unit ablation.

use std::io::Write;

use serde::Serialize;
use tableseq::keybias::BiasConfig;
use tableseq::metrics::{evaluate, Metric};
use tableseq::nn::MicroModel;
use tableseq::tokenize::{deserialize, serialize, SerializeOptions};
use tableseq::{QuantSpec, Table, Vocab};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{budget, decode_all, gray_stats, prepare, synth_labeled, train_model};

/// Bias settings to evaluate.
///
/// The default layout has two one-factor blocks: `lambda0` varied at the
/// base `gamma`, then `gamma` varied at the base `lambda0`, skipping
/// settings already listed. `full` takes the cartesian product instead.
pub fn keybias_grid(base: &BiasConfig, lambda0: &[f64], gamma: &[f64], full: bool) -> Vec<BiasConfig> {
    let with = |l: f64, g: f64| BiasConfig { lambda0: l, gamma: g, ..*base };
    let mut out: Vec<BiasConfig> = Vec::new();
    let mut push = |c: BiasConfig| {
        if !out.iter().any(|o| o.lambda0 == c.lambda0 && o.gamma == c.gamma) {
            out.push(c);
        }
    };
    if full {
        for &l in lambda0 {
            for &g in gamma {
                push(with(l, g));
            }
        }
    } else {
        lambda0.iter().for_each(|&l| push(with(l, base.gamma)));
        gamma.iter().for_each(|&g| push(with(base.lambda0, g)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyBiasRow {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda0: f64,
    pub s_teds: f64,
    pub teds: f64,
    pub images: usize,
}

/// Decodes `inputs` once per bias setting with fixed weights.
pub fn keybias_sweep(
    model: &MicroModel<f32>,
    inputs: &[Vec<f32>],
    gold: &[Table],
    grid: &[BiasConfig],
    max_tokens: usize,
    vocab: &Vocab,
    quant: QuantSpec,
) -> CliResult<Vec<KeyBiasRow>> {
    if !model.cfg.use_keybias {
        return Err(CliError::Config("the checkpoint was built without key bias; nothing to sweep".into()));
    }
    let mut m = model.clone();
    let b = budget(&m.cfg, max_tokens, 1, vocab);
    grid.iter()
        .map(|bias| {
            bias.validate()?;
            m.cfg.keybias = *bias;
            let pairs: Vec<(Table, Table)> =
                decode_all(&m, inputs, &b, vocab, quant).into_iter().map(|d| d.table).zip(gold.iter().cloned()).collect();
            let r = evaluate(&pairs, &[Metric::Teds, Metric::Steds])?;
            Ok(KeyBiasRow {
                alpha: bias.alpha,
                beta: bias.beta,
                gamma: bias.gamma,
                lambda0: bias.lambda0,
                s_teds: r.s_teds.unwrap_or(0.0),
                teds: r.teds.unwrap_or(0.0),
                images: pairs.len(),
            })
        })
        .collect()
}

/// Largest per-coordinate box error after serializing at `quant` and
/// reading the tokens back.
pub fn box_reconstruction_error(tables: &[Table], vocab: &Vocab, quant: QuantSpec) -> CliResult<u32> {
    let opts = SerializeOptions { quant, coords: true, replacement: Some('?') };
    let mut worst = 0;
    for t in tables {
        let (back, _) = deserialize(&serialize(t, vocab, &opts)?, vocab, quant)?;
        if back.cells().len() != t.cells().len() {
            return Err(tableseq::Error::InvalidTable("cell count changed in the round trip".into()).into());
        }
        for (a, b) in t.cells().iter().zip(back.cells()) {
            if let (Some(x), Some(y)) = (a.bbox, b.bbox) {
                for (u, v) in [(x.x1, y.x1), (x.y1, y.y1), (x.x2, y.x2), (x.y2, y.y2)] {
                    worst = worst.max(u.abs_diff(v));
                }
            } else if a.bbox.is_some() {
                return Err(tableseq::Error::MissingBox { cell: a.id }.into());
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantRow {
    pub unit: u32,
    pub teds: f64,
    pub ap50: f64,
    pub max_box_err: u32,
    /// `unit / 2`, the worst case of rounding to the grid.
    pub bound: f64,
    pub mean_tokens: f64,
    pub final_loss: f64,
    pub images: usize,
}

/// For each unit: generate the dataset, train a fresh model for
/// `steps`, decode greedily and score on the same images.
pub fn quant_sweep(run: &RunConfig, units: &[u32], steps: usize, vocab: &Vocab, mut log: impl FnMut(&str)) -> CliResult<Vec<QuantRow>> {
    let mut rows = Vec::with_capacity(units.len());
    for &u in units {
        let quant = QuantSpec::new(u)?;
        let mut r = run.clone();
        r.data.quant = quant;
        r.set_steps(steps);
        let items = synth_labeled(&r.data)?;
        let gold: Vec<Table> = items.iter().map(|x| x.table.clone()).collect();
        let max_box_err = box_reconstruction_error(&gold, vocab, quant)?;
        let stats = gray_stats(&items)?;
        let samples = prepare(&items, &stats, &r.model, vocab, quant, &r.data.ridge)?;
        let (model, curve) = train_model(&r, &samples, &[], vocab, |_| {})?;
        let inputs: Vec<Vec<f32>> = samples.iter().map(|s| s.image.clone()).collect();
        let decoded = decode_all(&model, &inputs, &budget(&r.model, r.decode.max_tokens, 1, vocab), vocab, quant);
        let mean_tokens =
            decoded.iter().map(|d| d.trace.as_ref().map_or(0, |t| t.emitted.len())).sum::<usize>() as f64 / decoded.len().max(1) as f64;
        let pairs: Vec<(Table, Table)> = decoded.into_iter().map(|d| d.table).zip(gold).collect();
        let report = evaluate(&pairs, &[Metric::Teds, Metric::Ap50])?;
        let row = QuantRow {
            unit: u,
            teds: report.teds.unwrap_or(0.0),
            ap50: report.ap50.unwrap_or(0.0),
            max_box_err,
            bound: f64::from(u) / 2.0,
            mean_tokens,
            final_loss: curve.last().map_or(f64::NAN, |m| m.total),
            images: pairs.len(),
        };
        log(&format!("unit {u}: TEDS {:.4}, AP50 {:.4}, max box error {max_box_err} px", row.teds, row.ap50));
        rows.push(row);
    }
    Ok(rows)
}

/// Header plus one line per row, in field order.
pub fn write_rows<R: Serialize>(w: impl Write, rows: &[R]) -> CliResult<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
