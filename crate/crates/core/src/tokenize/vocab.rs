use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::quant::MAX_INDEX;

pub type TokenId = u32;

/// Largest span extent with a dedicated token.
pub const MAX_SPAN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Control {
    Pad,
    Bos,
    Eos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Html,
    Table,
    Thead,
    Tbody,
    Tr,
    Td,
}

const TAGS: [(Tag, &str); 6] = [
    (Tag::Html, "html"),
    (Tag::Table, "table"),
    (Tag::Thead, "thead"),
    (Tag::Tbody, "tbody"),
    (Tag::Tr, "tr"),
    (Tag::Td, "td"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpanAxis {
    Row,
    Col,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Control(Control),
    Open(Tag),
    Close(Tag),
    Span(SpanAxis, usize),
    CoordX(u32),
    CoordY(u32),
    /// One text unit: a character in printable mode, a byte in byte mode.
    Text(u8),
}

/// Coarse class carried next to every token of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenClass {
    Tag,
    Text,
    CoordX,
    CoordY,
    Control,
}

impl TokenKind {
    pub fn class(&self) -> TokenClass {
        match self {
            TokenKind::Control(_) => TokenClass::Control,
            TokenKind::Open(_) | TokenKind::Close(_) | TokenKind::Span(..) => TokenClass::Tag,
            TokenKind::CoordX(_) => TokenClass::CoordX,
            TokenKind::CoordY(_) => TokenClass::CoordY,
            TokenKind::Text(_) => TokenClass::Text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TextMode {
    /// Characters 0x20..=0x7E.
    #[default]
    PrintableAscii,
    /// All 256 byte values; non-ASCII text is UTF-8 encoded.
    Bytes,
}

/// Token string <-> id bijection with contiguous ids.
///
/// Layout: control tokens, tag openers/closers, span tokens, 1000 x tokens,
/// 1000 y tokens, then text units.
#[derive(Debug, Clone)]
pub struct Vocab {
    mode: TextMode,
    strings: Vec<String>,
    kinds: Vec<TokenKind>,
    index: HashMap<String, TokenId>,
    text_ids: [Option<TokenId>; 256],
    x_base: TokenId,
    y_base: TokenId,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::new(TextMode::PrintableAscii)
    }
}

fn control_str(c: Control) -> &'static str {
    match c {
        Control::Pad => "<pad>",
        Control::Bos => "<s>",
        Control::Eos => "</s>",
    }
}

fn text_str(mode: TextMode, b: u8) -> String {
    match mode {
        TextMode::PrintableAscii => (b as char).to_string(),
        TextMode::Bytes if (0x20..=0x7e).contains(&b) => (b as char).to_string(),
        TextMode::Bytes => format!("<0x{b:02X}>"),
    }
}

impl Vocab {
    pub fn new(mode: TextMode) -> Self {
        let mut kinds = vec![
            TokenKind::Control(Control::Pad),
            TokenKind::Control(Control::Bos),
            TokenKind::Control(Control::Eos),
        ];
        for (tag, _) in TAGS {
            kinds.push(TokenKind::Open(tag));
            kinds.push(TokenKind::Close(tag));
        }
        for axis in [SpanAxis::Col, SpanAxis::Row] {
            for k in 2..=MAX_SPAN {
                kinds.push(TokenKind::Span(axis, k));
            }
        }
        kinds.extend((0..=MAX_INDEX).map(TokenKind::CoordX));
        kinds.extend((0..=MAX_INDEX).map(TokenKind::CoordY));
        match mode {
            TextMode::PrintableAscii => kinds.extend((0x20u8..=0x7e).map(TokenKind::Text)),
            TextMode::Bytes => kinds.extend((0u8..=255).map(TokenKind::Text)),
        }
        Self::from_kinds(mode, kinds)
    }

    fn from_kinds(mode: TextMode, kinds: Vec<TokenKind>) -> Self {
        let strings: Vec<String> = kinds.iter().map(|k| Self::kind_str(mode, k)).collect();
        let index = strings.iter().enumerate().map(|(i, s)| (s.clone(), i as TokenId)).collect();
        let mut text_ids = [None; 256];
        let (mut x_base, mut y_base) = (0, 0);
        for (i, k) in kinds.iter().enumerate() {
            match k {
                TokenKind::Text(b) => text_ids[*b as usize] = Some(i as TokenId),
                TokenKind::CoordX(0) => x_base = i as TokenId,
                TokenKind::CoordY(0) => y_base = i as TokenId,
                _ => {}
            }
        }
        Vocab { mode, strings, kinds, index, text_ids, x_base, y_base }
    }

    fn kind_str(mode: TextMode, k: &TokenKind) -> String {
        let tag_name = |t: &Tag| TAGS.iter().find(|(x, _)| x == t).unwrap().1;
        match k {
            TokenKind::Control(c) => control_str(*c).to_string(),
            TokenKind::Open(t) => format!("<{}>", tag_name(t)),
            TokenKind::Close(t) => format!("</{}>", tag_name(t)),
            TokenKind::Span(SpanAxis::Col, n) => format!("colspan_{n}"),
            TokenKind::Span(SpanAxis::Row, n) => format!("rowspan_{n}"),
            TokenKind::CoordX(i) => format!("<x_{i}>"),
            TokenKind::CoordY(i) => format!("<y_{i}>"),
            TokenKind::Text(b) => text_str(mode, *b),
        }
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    pub fn mode(&self) -> TextMode {
        self.mode
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.strings[id as usize]
    }

    pub fn kind(&self, id: TokenId) -> TokenKind {
        self.kinds[id as usize]
    }

    pub fn class(&self, id: TokenId) -> TokenClass {
        self.kinds[id as usize].class()
    }

    pub fn pad(&self) -> TokenId {
        0
    }

    pub fn bos(&self) -> TokenId {
        1
    }

    pub fn eos(&self) -> TokenId {
        2
    }

    pub fn open(&self, tag: Tag) -> TokenId {
        3 + 2 * TAGS.iter().position(|(t, _)| *t == tag).unwrap() as TokenId
    }

    pub fn close(&self, tag: Tag) -> TokenId {
        self.open(tag) + 1
    }

    pub fn span(&self, axis: SpanAxis, k: usize) -> Option<TokenId> {
        if !(2..=MAX_SPAN).contains(&k) {
            return None;
        }
        let base = 3 + 2 * TAGS.len() as TokenId;
        let axis_off = match axis {
            SpanAxis::Col => 0,
            SpanAxis::Row => (MAX_SPAN - 1) as TokenId,
        };
        Some(base + axis_off + (k - 2) as TokenId)
    }

    pub fn coord_x(&self, index: u32) -> TokenId {
        self.x_base + index.min(MAX_INDEX)
    }

    pub fn coord_y(&self, index: u32) -> TokenId {
        self.y_base + index.min(MAX_INDEX)
    }

    pub fn text_unit(&self, b: u8) -> Option<TokenId> {
        self.text_ids[b as usize]
    }

    /// Ids of all text tokens, in id order.
    pub fn text_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.text_ids.iter().flatten().copied()
    }

    /// Encodes one character; byte mode may need several tokens.
    pub fn encode_char(&self, ch: char, out: &mut Vec<TokenId>) -> bool {
        match self.mode {
            TextMode::PrintableAscii => {
                if ch.is_ascii() {
                    if let Some(id) = self.text_ids[ch as usize] {
                        out.push(id);
                        return true;
                    }
                }
                false
            }
            TextMode::Bytes => {
                let mut buf = [0u8; 4];
                for b in ch.encode_utf8(&mut buf).bytes() {
                    out.push(self.text_ids[b as usize].expect("byte vocab is complete"));
                }
                true
            }
        }
    }

    /// Writes one token per line; the line number is the id.
    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for s in &self.strings {
            writeln!(w, "{s}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let lines: Vec<String> = std::io::BufReader::new(file).lines().collect::<std::io::Result<_>>()?;
        Self::from_lines(&lines)
    }

    /// Rebuilds a vocabulary from its token strings, recovering each kind.
    pub fn from_lines(lines: &[String]) -> Result<Self> {
        let mode = if lines.iter().any(|l| l.starts_with("<0x")) { TextMode::Bytes } else { TextMode::PrintableAscii };
        let mut kinds = Vec::with_capacity(lines.len());
        for line in lines {
            kinds.push(Self::parse_kind(line).ok_or_else(|| Error::UnknownToken(line.clone()))?);
        }
        let v = Self::from_kinds(mode, kinds);
        if v.index.len() != v.strings.len() {
            return Err(Error::Format("vocabulary has duplicate tokens".into()));
        }
        let reference = Vocab::new(mode);
        if v.kinds != reference.kinds {
            return Err(Error::Format("vocabulary layout differs from the built-in layout".into()));
        }
        Ok(v)
    }

    fn parse_kind(s: &str) -> Option<TokenKind> {
        for c in [Control::Pad, Control::Bos, Control::Eos] {
            if s == control_str(c) {
                return Some(TokenKind::Control(c));
            }
        }
        for (tag, name) in TAGS {
            if s == format!("<{name}>") {
                return Some(TokenKind::Open(tag));
            }
            if s == format!("</{name}>") {
                return Some(TokenKind::Close(tag));
            }
        }
        if let Some(k) = s.strip_prefix("colspan_") {
            return k.parse().ok().map(|k| TokenKind::Span(SpanAxis::Col, k));
        }
        if let Some(k) = s.strip_prefix("rowspan_") {
            return k.parse().ok().map(|k| TokenKind::Span(SpanAxis::Row, k));
        }
        if let Some(hex) = s.strip_prefix("<0x").and_then(|h| h.strip_suffix('>')) {
            return u8::from_str_radix(hex, 16).ok().map(TokenKind::Text);
        }
        if let Some(i) = s.strip_prefix("<x_").and_then(|h| h.strip_suffix('>')) {
            return i.parse().ok().map(TokenKind::CoordX);
        }
        if let Some(i) = s.strip_prefix("<y_").and_then(|h| h.strip_suffix('>')) {
            return i.parse().ok().map(TokenKind::CoordY);
        }
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii() => Some(TokenKind::Text(c as u8)),
            _ => None,
        }
    }
}
