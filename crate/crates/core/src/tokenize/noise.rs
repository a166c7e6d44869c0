use rand::Rng;

use crate::quant::MAX_INDEX;

use super::seq::TokenSeq;
use super::vocab::{TokenKind, Vocab};

/// Groups of characters that an OCR-like reader tends to confuse.
const CONFUSABLE: &[&str] = &[
    "0Oo", "1lI|i", "5Ss", "8B", "2Zz", "6Gb", "9gq", "Cc(", "Uu", "Vv", "Ww", "Xx", "Kk", "Pp", ".,", ":;", "-_~",
    "'`\"", "mn", "hb", "ec", "EF", "DO", "/\\",
];

/// Characters sharing a confusion group with `c` (excluding `c`).
pub fn confusable(c: u8) -> Vec<u8> {
    let mut out = Vec::new();
    for group in CONFUSABLE {
        if group.as_bytes().contains(&c) {
            for g in group.bytes() {
                if g != c && !out.contains(&g) {
                    out.push(g);
                }
            }
        }
    }
    out
}

/// Training-time corruption of a target sequence.
///
/// Each text token is replaced with probability `rate`, preferring a
/// confusable character and otherwise a uniformly drawn different printable
/// character. Each coordinate token is, with probability `rate`, shifted by
/// a uniform offset in `[-coord_radius, coord_radius]` and clamped. Tags and
/// control tokens are never touched, so lengths and classes are preserved.
pub fn inject_noise(seq: &TokenSeq, vocab: &Vocab, rate: f64, coord_radius: u32, rng: &mut impl Rng) -> TokenSeq {
    let rate = rate.clamp(0.0, 1.0);
    let printable: Vec<u8> = (0x20u8..=0x7e).collect();
    let r = coord_radius as i64;
    let mut ids = seq.ids.clone();
    for id in ids.iter_mut() {
        match vocab.kind(*id) {
            TokenKind::Text(b) => {
                if rate > 0.0 && rng.gen_bool(rate) {
                    let group = confusable(b);
                    let sub = if !group.is_empty() && rng.gen_bool(0.8) {
                        group[rng.gen_range(0..group.len())]
                    } else {
                        loop {
                            let c = printable[rng.gen_range(0..printable.len())];
                            if c != b {
                                break c;
                            }
                        }
                    };
                    *id = vocab.text_unit(sub).unwrap_or(*id);
                }
            }
            TokenKind::CoordX(i) | TokenKind::CoordY(i) => {
                if r > 0 && rate > 0.0 && rng.gen_bool(rate) {
                    let shifted = (i as i64 + rng.gen_range(-r..=r)).clamp(0, MAX_INDEX as i64) as u32;
                    *id = if matches!(vocab.kind(*id), TokenKind::CoordX(_)) {
                        vocab.coord_x(shifted)
                    } else {
                        vocab.coord_y(shifted)
                    };
                }
            }
            _ => {}
        }
    }
    TokenSeq { ids, classes: seq.classes.clone() }
}
