use crate::error::{Error, Result};
use crate::quant::QuantSpec;
use crate::table::markup::{place_rows, PendingCell};
use crate::table::{BBox, Table};

use super::vocab::{SpanAxis, Tag, TokenClass, TokenId, TokenKind, Vocab};

/// Token ids with their per-token class.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq {
    pub ids: Vec<TokenId>,
    pub classes: Vec<TokenClass>,
}

impl TokenSeq {
    pub fn from_ids(ids: Vec<TokenId>, vocab: &Vocab) -> Self {
        let classes = ids.iter().map(|&i| vocab.class(i)).collect();
        TokenSeq { ids, classes }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Space-separated token strings, for logs and debugging.
    pub fn render(&self, vocab: &Vocab) -> String {
        self.ids.iter().map(|&i| vocab.token(i)).collect::<Vec<_>>().join(" ")
    }
}

/// Human-readable record of every repair made while decoding.
pub type RepairLog = Vec<String>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SerializeOptions {
    pub quant: QuantSpec,
    /// Emit `<x_k><y_k>` pairs around each cell's text.
    pub coords: bool,
    /// Substitute for characters outside the text vocabulary; `None` makes
    /// them an error.
    pub replacement: Option<char>,
}

impl Default for SerializeOptions {
    fn default() -> Self {
        SerializeOptions { quant: QuantSpec::default(), coords: true, replacement: None }
    }
}

pub fn serialize(table: &Table, vocab: &Vocab, opts: &SerializeOptions) -> Result<TokenSeq> {
    let mut ids = vec![vocab.bos(), vocab.open(Tag::Html), vocab.open(Tag::Table)];
    let header_rows = table.header_rows();
    let emit_rows = |ids: &mut Vec<TokenId>, rows: std::ops::Range<usize>| -> Result<()> {
        for r in rows {
            ids.push(vocab.open(Tag::Tr));
            for cell in table.row_cells(r) {
                ids.push(vocab.open(Tag::Td));
                for (axis, k) in [(SpanAxis::Col, cell.colspan), (SpanAxis::Row, cell.rowspan)] {
                    if k > 1 {
                        let prefix = if axis == SpanAxis::Col { "colspan" } else { "rowspan" };
                        ids.push(vocab.span(axis, k).ok_or_else(|| Error::UnknownToken(format!("{prefix}_{k}")))?);
                    }
                }
                let bbox = if opts.coords {
                    Some(cell.bbox.ok_or(Error::MissingBox { cell: cell.id })?)
                } else {
                    None
                };
                if let Some(b) = bbox {
                    ids.push(vocab.coord_x(opts.quant.quantize_px(b.x1)));
                    ids.push(vocab.coord_y(opts.quant.quantize_px(b.y1)));
                }
                for ch in cell.text.chars() {
                    if !vocab.encode_char(ch, ids) {
                        match opts.replacement {
                            Some(rep) if vocab.encode_char(rep, ids) => {}
                            _ => return Err(Error::TextNotEncodable(ch)),
                        }
                    }
                }
                if let Some(b) = bbox {
                    ids.push(vocab.coord_x(opts.quant.quantize_px(b.x2)));
                    ids.push(vocab.coord_y(opts.quant.quantize_px(b.y2)));
                }
                ids.push(vocab.close(Tag::Td));
            }
            ids.push(vocab.close(Tag::Tr));
        }
        Ok(())
    };
    if header_rows > 0 {
        ids.push(vocab.open(Tag::Thead));
        emit_rows(&mut ids, 0..header_rows)?;
        ids.push(vocab.close(Tag::Thead));
    }
    ids.push(vocab.open(Tag::Tbody));
    emit_rows(&mut ids, header_rows..table.rows())?;
    ids.extend([vocab.close(Tag::Tbody), vocab.close(Tag::Table), vocab.close(Tag::Html), vocab.eos()]);
    Ok(TokenSeq::from_ids(ids, vocab))
}

#[derive(Default)]
struct CellAcc {
    rowspan: usize,
    colspan: usize,
    /// Set once anything other than a span token has been seen.
    content_started: bool,
    bytes: Vec<u8>,
    lead: Vec<TokenKind>,
    trail: Vec<TokenKind>,
    is_header: bool,
}

impl CellAcc {
    fn finish(self, quant: QuantSpec, pos: (usize, usize), log: &mut RepairLog) -> PendingCell {
        let bbox = match (self.lead.as_slice(), self.trail.as_slice()) {
            ([], []) => None,
            ([TokenKind::CoordX(x1), TokenKind::CoordY(y1)], [TokenKind::CoordX(x2), TokenKind::CoordY(y2)]) => {
                let (x1, x2) = (quant.dequantize(*x1), quant.dequantize(*x2));
                let (y1, y2) = (quant.dequantize(*y1), quant.dequantize(*y2));
                if x1 > x2 || y1 > y2 {
                    log.push(format!("inverted box in cell {pos:?} reordered"));
                }
                Some(BBox { x1: x1.min(x2), y1: y1.min(y2), x2: x1.max(x2), y2: y1.max(y2) })
            }
            _ => {
                log.push(format!("malformed coordinate tokens in cell {pos:?} dropped"));
                None
            }
        };
        PendingCell {
            rowspan: self.rowspan.max(1),
            colspan: self.colspan.max(1),
            text: String::from_utf8_lossy(&self.bytes).into_owned(),
            bbox,
            is_header: self.is_header,
        }
    }
}

/// Best-effort decoding of a token sequence back to a table.
///
/// Tokens before `<table>` and after `</table>` are ignored. Structural
/// problems are repaired and each repair appended to the log.
pub fn deserialize(seq: &TokenSeq, vocab: &Vocab, quant: QuantSpec) -> Result<(Table, RepairLog)> {
    deserialize_ids(&seq.ids, vocab, quant)
}

pub(crate) fn deserialize_ids(ids: &[TokenId], vocab: &Vocab, quant: QuantSpec) -> Result<(Table, RepairLog)> {
    let start = ids
        .iter()
        .position(|&i| vocab.kind(i) == TokenKind::Open(Tag::Table))
        .ok_or_else(|| Error::Unrecoverable("no <table> token".into()))?;
    let mut log = RepairLog::new();
    let mut rows: Vec<Vec<PendingCell>> = Vec::new();
    let mut row: Option<Vec<PendingCell>> = None;
    let mut cell: Option<CellAcc> = None;
    let mut in_head = false;
    let mut closed = false;

    fn close_cell(row: &mut Option<Vec<PendingCell>>, cell: &mut Option<CellAcc>, quant: QuantSpec, n_rows: usize, log: &mut RepairLog) {
        if let Some(acc) = cell.take() {
            let r = row.get_or_insert_with(Vec::new);
            let pos = (n_rows, r.len());
            r.push(acc.finish(quant, pos, log));
        }
    }
    fn close_row(rows: &mut Vec<Vec<PendingCell>>, row: &mut Option<Vec<PendingCell>>) {
        if let Some(r) = row.take() {
            rows.push(r);
        }
    }

    for &id in &ids[start + 1..] {
        let kind = vocab.kind(id);
        match kind {
            TokenKind::Control(_) => {
                if id == vocab.eos() {
                    break;
                }
            }
            TokenKind::Close(Tag::Table) => {
                closed = true;
                break;
            }
            TokenKind::Open(Tag::Thead) | TokenKind::Open(Tag::Tbody) | TokenKind::Close(Tag::Thead) | TokenKind::Close(Tag::Tbody) => {
                if cell.is_some() {
                    log.push(format!("implicit </td> before {}", vocab.token(id)));
                    close_cell(&mut row, &mut cell, quant, rows.len(), &mut log);
                }
                if row.is_some() {
                    log.push(format!("implicit </tr> before {}", vocab.token(id)));
                    close_row(&mut rows, &mut row);
                }
                in_head = kind == TokenKind::Open(Tag::Thead);
            }
            TokenKind::Open(Tag::Tr) => {
                if cell.is_some() {
                    log.push("implicit </td> before <tr>".into());
                    close_cell(&mut row, &mut cell, quant, rows.len(), &mut log);
                }
                if row.is_some() {
                    log.push("implicit </tr> before <tr>".into());
                    close_row(&mut rows, &mut row);
                }
                row = Some(Vec::new());
            }
            TokenKind::Close(Tag::Tr) => {
                if cell.is_some() {
                    log.push("implicit </td> before </tr>".into());
                    close_cell(&mut row, &mut cell, quant, rows.len(), &mut log);
                }
                if row.is_some() {
                    close_row(&mut rows, &mut row);
                } else {
                    log.push("unmatched </tr> dropped".into());
                }
            }
            TokenKind::Open(Tag::Td) => {
                if cell.is_some() {
                    log.push("implicit </td> before <td>".into());
                    close_cell(&mut row, &mut cell, quant, rows.len(), &mut log);
                }
                if row.is_none() {
                    log.push("implicit <tr> before <td>".into());
                    row = Some(Vec::new());
                }
                cell = Some(CellAcc { is_header: in_head, ..Default::default() });
            }
            TokenKind::Close(Tag::Td) => {
                if cell.is_some() {
                    close_cell(&mut row, &mut cell, quant, rows.len(), &mut log);
                } else {
                    log.push("unmatched </td> dropped".into());
                }
            }
            TokenKind::Span(axis, k) => match cell.as_mut() {
                Some(acc) if !acc.content_started => {
                    let slot = if axis == SpanAxis::Col { &mut acc.colspan } else { &mut acc.rowspan };
                    if *slot != 0 {
                        log.push(format!("repeated {} ignored", vocab.token(id)));
                    } else {
                        *slot = k;
                    }
                }
                _ => log.push(format!("misplaced {} dropped", vocab.token(id))),
            },
            TokenKind::CoordX(_) | TokenKind::CoordY(_) => match cell.as_mut() {
                Some(acc) => {
                    acc.content_started = true;
                    if acc.bytes.is_empty() && acc.trail.is_empty() && acc.lead.len() < 2 {
                        acc.lead.push(kind);
                    } else {
                        acc.trail.push(kind);
                    }
                }
                None => log.push(format!("coordinate {} outside a cell dropped", vocab.token(id))),
            },
            TokenKind::Text(b) => match cell.as_mut() {
                Some(acc) => {
                    acc.content_started = true;
                    if !acc.trail.is_empty() {
                        log.push("text after trailing coordinates".into());
                        acc.lead.append(&mut acc.trail);
                    }
                    acc.bytes.push(b);
                }
                None => log.push(format!("text {:?} outside a cell dropped", vocab.token(id))),
            },
            TokenKind::Open(Tag::Table) | TokenKind::Open(Tag::Html) | TokenKind::Close(Tag::Html) => {
                log.push(format!("unexpected {} dropped", vocab.token(id)));
            }
        }
    }
    if cell.is_some() {
        log.push("implicit </td> at end of sequence".into());
        close_cell(&mut row, &mut cell, quant, rows.len(), &mut log);
    }
    if row.is_some() {
        log.push("implicit </tr> at end of sequence".into());
        close_row(&mut rows, &mut row);
    }
    if !closed {
        log.push("missing </table>".into());
    }
    if rows.iter().all(Vec::is_empty) {
        log.push("no cells; produced a single empty cell".into());
        rows = vec![vec![PendingCell::default()]];
    }
    let (table, repairs) = place_rows(rows, false)?;
    log.extend(repairs);
    Ok((table, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{fixtures::spanned_3x3, Cell};

    fn boxed_1x1() -> Table {
        Table::new(1, 1, vec![Cell::new(0, 0, "v").with_bbox(BBox::new(0, 0, 10, 10).unwrap())]).unwrap()
    }

    #[test]
    fn serializes_one_cell_example() {
        let v = Vocab::default();
        let seq = serialize(&boxed_1x1(), &v, &SerializeOptions::default()).unwrap();
        assert_eq!(
            seq.render(&v),
            "<s> <html> <table> <tbody> <tr> <td> <x_0> <y_0> v <x_2> <y_2> </td> </tr> </tbody> </table> </html> </s>"
        );
        assert_eq!(seq.classes[6], TokenClass::CoordX);
        assert_eq!(seq.classes[8], TokenClass::Text);
    }

    #[test]
    fn missing_box_and_unencodable_text() {
        let v = Vocab::default();
        let t = spanned_3x3();
        assert!(matches!(serialize(&t, &v, &SerializeOptions::default()), Err(Error::MissingBox { cell: 0 })));
        let t = Table::from_texts(1, 1, &["é"]).unwrap();
        let opts = SerializeOptions { coords: false, ..Default::default() };
        assert!(matches!(serialize(&t, &v, &opts), Err(Error::TextNotEncodable('é'))));
        let opts = SerializeOptions { replacement: Some('?'), ..opts };
        let (back, _) = deserialize(&serialize(&t, &v, &opts).unwrap(), &v, opts.quant).unwrap();
        assert_eq!(back.cells()[0].text, "?");
        let bytes = Vocab::new(super::super::TextMode::Bytes);
        let (back, log) = deserialize(&serialize(&t, &bytes, &SerializeOptions { coords: false, ..Default::default() }).unwrap(), &bytes, opts.quant).unwrap();
        assert_eq!((back.cells()[0].text.as_str(), log.len()), ("é", 0));
    }

    #[test]
    fn spans_and_headers_round_trip() {
        let v = Vocab::default();
        let mut cells = spanned_3x3().into_cells();
        cells[0].is_header = true;
        cells[1].is_header = true;
        let t = Table::new(3, 3, cells).unwrap();
        let opts = SerializeOptions { coords: false, ..Default::default() };
        let seq = serialize(&t, &v, &opts).unwrap();
        assert!(seq.render(&v).contains("<td> colspan_2 rowspan_2 b i g </td>"));
        let (back, log) = deserialize(&seq, &v, opts.quant).unwrap();
        assert!(log.is_empty(), "{log:?}");
        assert_eq!(back, t);
    }

    #[test]
    fn missing_row_closer_is_logged_once() {
        let v = Vocab::default();
        let t = Table::from_texts(2, 2, &["a", "b", "c", "d"]).unwrap();
        let opts = SerializeOptions { coords: false, ..Default::default() };
        let mut seq = serialize(&t, &v, &opts).unwrap();
        let first_close = seq.ids.iter().position(|&i| i == v.close(Tag::Tr)).unwrap();
        seq.ids.remove(first_close);
        let (back, log) = deserialize(&TokenSeq::from_ids(seq.ids, &v), &v, opts.quant).unwrap();
        assert_eq!(back, t);
        assert_eq!(log.len(), 1, "{log:?}");
    }

    #[test]
    fn empty_sequence_is_unrecoverable() {
        let v = Vocab::default();
        assert!(matches!(deserialize(&TokenSeq::default(), &v, QuantSpec::default()), Err(Error::Unrecoverable(_))));
        let only_text = TokenSeq::from_ids(vec![v.bos(), v.text_unit(b'a').unwrap(), v.eos()], &v);
        assert!(matches!(deserialize(&only_text, &v, QuantSpec::default()), Err(Error::Unrecoverable(_))));
    }

    #[test]
    fn truncated_sequence_is_padded() {
        let v = Vocab::default();
        let t = Table::from_texts(2, 2, &["a", "b", "c", "d"]).unwrap();
        let opts = SerializeOptions { coords: false, ..Default::default() };
        let seq = serialize(&t, &v, &opts).unwrap();
        let cut = seq.ids.iter().rposition(|&i| i == v.open(Tag::Td)).unwrap();
        let (back, log) = deserialize(&TokenSeq::from_ids(seq.ids[..cut].to_vec(), &v), &v, opts.quant).unwrap();
        assert_eq!((back.rows(), back.cols()), (2, 2));
        assert_eq!(back.cells()[3].text, "");
        assert!(log.iter().any(|l| l.contains("padded")));
    }
}
