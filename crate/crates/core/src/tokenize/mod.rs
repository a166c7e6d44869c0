//! Unified vocabulary and table <-> token sequence conversion.

mod noise;
mod seq;
mod vocab;

pub use noise::{confusable, inject_noise};
pub use seq::{deserialize, serialize, RepairLog, SerializeOptions, TokenSeq};
pub use vocab::{Control, SpanAxis, Tag, TextMode, TokenClass, TokenId, TokenKind, Vocab, MAX_SPAN};

pub use crate::quant::QuantSpec;
