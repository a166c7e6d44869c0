//! Seeded generation of (image, markup, targets) datasets on disk.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentProfile};
use super::render::{render_sample, RenderStyle, Rendered};
use super::{random_table_with, TextSpec};
use crate::error::Result;
use crate::quant::QuantSpec;
use crate::table::{write_jsonl, AnnotationRecord, Cell, Table};
use crate::targets::{build_targets, write_tsqt, RidgeConfig, StructMaps};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub count: usize,
    pub seed: u64,
    pub rows: (usize, usize),
    pub cols: (usize, usize),
    pub max_span: usize,
    pub text: TextSpec,
    /// Probability that the first row is a header row.
    pub header_prob: f64,
    pub augment: AugmentProfile,
    pub style: RenderStyle,
    pub quant: QuantSpec,
    pub ridge: RidgeConfig,
    /// Fraction of samples tagged `val`; the rest are `train`.
    pub val_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            count: 64,
            seed: 0,
            rows: (2, 4),
            cols: (2, 4),
            max_span: 2,
            text: TextSpec::default(),
            header_prob: 0.3,
            augment: AugmentProfile::none(),
            style: RenderStyle::default(),
            quant: QuantSpec::default(),
            ridge: RidgeConfig::default(),
            val_fraction: 0.0,
        }
    }
}

/// One generated sample, before it is written out.
#[derive(Debug, Clone)]
pub struct Sample {
    pub index: usize,
    pub seed: u64,
    pub rendered: Rendered,
    pub maps: StructMaps,
    pub split: &'static str,
    pub aug_log: Vec<String>,
}

impl Sample {
    pub fn table(&self) -> &Table {
        &self.rendered.table
    }
}

/// SplitMix64 finalizer; decorrelates per-sample seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates sample `index`; depends only on `cfg` and `index`.
pub fn generate_sample(cfg: &DatasetConfig, index: usize) -> Result<Sample> {
    let seed = derive_seed(cfg.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = random_table_with(&mut rng, cfg.rows.0..=cfg.rows.1, cfg.cols.0..=cfg.cols.1, cfg.max_span, &cfg.text);
    if rng.gen_bool(cfg.header_prob.clamp(0.0, 1.0)) {
        let (r, c) = (table.rows(), table.cols());
        let cells: Vec<Cell> = table.into_cells().into_iter().map(|x| { let h = x.row == 0; x.header(h) }).collect();
        table = Table::new(r, c, cells)?;
    }
    let aug = augment(&table, &cfg.augment, &mut rng);
    let mut style = cfg.style.clone();
    if aug.jitter {
        style.jitter = style.jitter.max(0.15);
        style.background = rng.gen_range(225..=255);
        style.ink = rng.gen_range(0..=60);
        style.ruling = rng.gen_range(0..=80);
    }
    let rendered = render_sample(&aug.table, &style, cfg.quant, &mut rng)?;
    let maps = build_targets(&rendered.table, &cfg.ridge)?;
    let split = if (index as f64) < cfg.count as f64 * (1.0 - cfg.val_fraction) { "train" } else { "val" };
    Ok(Sample { index, seed, rendered, maps, split, aug_log: aug.log })
}

/// Result of [`make_dataset`].
#[derive(Debug, Clone)]
pub struct DatasetSummary {
    pub manifest: PathBuf,
    pub records: Vec<AnnotationRecord>,
    /// Augmentation and rendering notes, prefixed with the sample index.
    pub log: Vec<String>,
}

/// Writes `images/NNNNN.pgm`, `targets/NNNNN.tsqt` and `manifest.jsonl`
/// under `out_dir`. Paths in the manifest are relative to `out_dir`.
pub fn make_dataset(cfg: &DatasetConfig, out_dir: impl AsRef<Path>) -> Result<DatasetSummary> {
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out.join("images"))?;
    std::fs::create_dir_all(out.join("targets"))?;
    let samples: Vec<Sample> = (0..cfg.count).into_par_iter().map(|i| generate_sample(cfg, i)).collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(samples.len());
    let mut log = Vec::new();
    for s in &samples {
        let image = format!("images/{:05}.pgm", s.index);
        let targets = format!("targets/{:05}.tsqt", s.index);
        s.rendered.image.write_pnm(out.join(&image))?;
        write_tsqt(out.join(&targets), &s.maps)?;
        let mut rec = AnnotationRecord::from_table(s.table(), image, s.rendered.markup.clone());
        rec.split = Some(s.split.to_owned());
        rec.targets = Some(targets);
        rec.seed = Some(s.seed);
        records.push(rec);
        log.extend(s.aug_log.iter().chain(&s.rendered.log).map(|l| format!("sample {}: {l}", s.index)));
    }
    let manifest = out.join("manifest.jsonl");
    write_jsonl(&manifest, &records)?;
    Ok(DatasetSummary { manifest, records, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::read_jsonl;

    #[test]
    fn empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig { count: 0, ..DatasetConfig::default() };
        let s = make_dataset(&cfg, dir.path()).unwrap();
        assert!(s.records.is_empty());
        assert_eq!(std::fs::read(&s.manifest).unwrap(), b"");
    }

    #[test]
    fn reproducible_bytes() {
        let cfg = DatasetConfig {
            count: 10,
            seed: 7,
            augment: AugmentProfile::standard(6, 6, 3),
            ..DatasetConfig::default()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        make_dataset(&cfg, a.path()).unwrap();
        make_dataset(&cfg, b.path()).unwrap();
        for rel in ["manifest.jsonl", "images/00000.pgm", "images/00009.pgm", "targets/00004.tsqt"] {
            assert_eq!(std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{rel}");
        }
        let recs = read_jsonl(a.path().join("manifest.jsonl")).unwrap();
        assert_eq!(recs.len(), 10);
        for r in &recs {
            let t = r.to_table().unwrap();
            let (h, w) = t.image_size().unwrap();
            assert!(t.cells().iter().all(|c| c.bbox.unwrap().x2 <= w && c.bbox.unwrap().y2 <= h));
        }
    }

    #[test]
    fn targets_in_unit_range() {
        let cfg = DatasetConfig { count: 8, seed: 3, ..DatasetConfig::default() };
        for i in 0..cfg.count {
            let s = generate_sample(&cfg, i).unwrap();
            assert!(s.maps.to_chw().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
