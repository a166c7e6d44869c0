//! Synthetic table generation: logical tables, structure augmentation and a
//! deterministic block-glyph renderer.

mod augment;
mod dataset;
pub mod font;
mod render;

use std::ops::RangeInclusive;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::table::{Cell, Table};

pub use augment::{apply, augment, AugmentKind, AugmentOp, AugmentProfile, Augmented};
pub use dataset::{derive_seed, generate_sample, make_dataset, DatasetConfig, DatasetSummary, Sample};
pub use render::{edge_thickness, estimate_bg, fit_text, inner_region, render_sample, Align, FitText, RenderStyle, Rendered};

const WORD_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

/// Short random alphanumeric string of `1..=max_len` characters.
pub fn random_word(rng: &mut impl Rng, max_len: usize) -> String {
    random_text(rng, 1, max_len, WORD_CHARS)
}

fn random_text(rng: &mut impl Rng, min_len: usize, max_len: usize, chars: &[u8]) -> String {
    let n = rng.gen_range(min_len.min(max_len)..=max_len.max(1));
    (0..n).map(|_| chars[rng.gen_range(0..chars.len())] as char).collect()
}

/// Cell text generator: length range and alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextSpec {
    pub min_len: usize,
    pub max_len: usize,
    pub alphabet: String,
}

impl Default for TextSpec {
    fn default() -> Self {
        TextSpec { min_len: 1, max_len: 3, alphabet: String::from_utf8(WORD_CHARS.to_vec()).unwrap() }
    }
}

/// Random rectangular table with spans up to `max_span` on either axis.
///
/// Slots are filled in row-major order; each free slot anchors a cell whose
/// span is shrunk until it only covers free slots.
pub fn random_table(
    rng: &mut impl Rng,
    rows: RangeInclusive<usize>,
    cols: RangeInclusive<usize>,
    max_span: usize,
) -> Table {
    let text = TextSpec { max_len: 6, ..TextSpec::default() };
    random_table_with(rng, rows, cols, max_span, &text)
}

/// [`random_table`] with a configurable text generator.
pub fn random_table_with(
    rng: &mut impl Rng,
    rows: RangeInclusive<usize>,
    cols: RangeInclusive<usize>,
    max_span: usize,
    text: &TextSpec,
) -> Table {
    let n_rows = rng.gen_range(rows);
    let n_cols = rng.gen_range(cols);
    let mut taken = vec![false; n_rows * n_cols];
    let mut cells = Vec::new();
    for r in 0..n_rows {
        for c in 0..n_cols {
            if taken[r * n_cols + c] {
                continue;
            }
            let span = |rng: &mut _, limit: usize| -> usize {
                if limit > 1 && max_span > 1 && Rng::gen_bool(rng, 0.3) {
                    Rng::gen_range(rng, 2..=limit.min(max_span))
                } else {
                    1
                }
            };
            let rs = span(rng, n_rows - r);
            let mut cs = span(rng, n_cols - c);
            while (0..cs).any(|k| taken[r * n_cols + c + k]) {
                cs -= 1;
            }
            for rr in r..r + rs {
                for cc in c..c + cs {
                    taken[rr * n_cols + cc] = true;
                }
            }
            cells.push(Cell::new(r, c, random_text(rng, text.min_len, text.max_len, text.alphabet.as_bytes())).with_span(rs, cs));
        }
    }
    Table::new(n_rows, n_cols, cells).expect("generator tiles the grid")
}
