//! Strict HTML-subset table markup with `<x_k>`/`<y_k>` coordinate markers.
//!
//! Accepted tags: `table`, `thead`, `tbody`, `tr`, `td`, `th` (with
//! `rowspan`/`colspan` attributes) plus the coordinate markers. A cell may
//! carry exactly four markers, `<x_a><y_b>` before its text and `<x_c><y_d>`
//! after it, giving the box `(a, b, c, d)` in grid units.

use std::fmt::Write as _;

use super::{BBox, Cell, Table};
use crate::error::{Error, Result};
use crate::quant::{QuantSpec, MAX_INDEX};

#[derive(Debug, Clone, PartialEq)]
enum Item {
    Open { name: String, attrs: Vec<(String, String)> },
    Close(String),
    Marker { axis: char, index: u32 },
    Text(String),
}

fn lex(src: &str) -> Result<Vec<Item>> {
    let mut items = Vec::new();
    let mut rest = src;
    while !rest.is_empty() {
        if let Some(stripped) = rest.strip_prefix('<') {
            let end = stripped
                .find('>')
                .ok_or_else(|| Error::MalformedMarkup("unterminated tag".into()))?;
            let body = &stripped[..end];
            rest = &stripped[end + 1..];
            items.push(lex_tag(body)?);
        } else {
            let end = rest.find('<').unwrap_or(rest.len());
            items.push(Item::Text(unescape(&rest[..end])));
            rest = &rest[end..];
        }
    }
    Ok(items)
}

fn lex_tag(body: &str) -> Result<Item> {
    let body = body.trim();
    if let Some(name) = body.strip_prefix('/') {
        return Ok(Item::Close(name.trim().to_ascii_lowercase()));
    }
    if let Some((axis, idx)) = body.split_once('_') {
        if axis == "x" || axis == "y" {
            let index: u32 = idx
                .parse()
                .map_err(|_| Error::BadCoordMarker(format!("<{body}> has a non-numeric index")))?;
            if index > MAX_INDEX {
                return Err(Error::BadCoordMarker(format!("<{body}> exceeds {MAX_INDEX}")));
            }
            return Ok(Item::Marker { axis: axis.chars().next().unwrap(), index });
        }
    }
    let mut parts = body.splitn(2, char::is_whitespace);
    let name = parts.next().unwrap_or("").to_ascii_lowercase();
    let attrs = parse_attrs(parts.next().unwrap_or(""))?;
    Ok(Item::Open { name, attrs })
}

fn parse_attrs(mut s: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    loop {
        s = s.trim_start();
        if s.is_empty() {
            return Ok(out);
        }
        let eq = s
            .find('=')
            .ok_or_else(|| Error::MalformedMarkup(format!("attribute without value in {s:?}")))?;
        let key = s[..eq].trim().to_ascii_lowercase();
        s = s[eq + 1..].trim_start();
        let value;
        if let Some(q) = s.chars().next().filter(|c| *c == '"' || *c == '\'') {
            let close = s[1..]
                .find(q)
                .ok_or_else(|| Error::MalformedMarkup("unterminated attribute value".into()))?;
            value = s[1..1 + close].to_string();
            s = &s[close + 2..];
        } else {
            let end = s.find(char::is_whitespace).unwrap_or(s.len());
            value = s[..end].to_string();
            s = &s[end..];
        }
        out.push((key, value));
    }
}

fn unescape(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        let decoded = rest.find(';').and_then(|semi| {
            let ent = &rest[1..semi];
            let ch = match ent {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" | "#39" => Some('\''),
                _ => ent
                    .strip_prefix('#')
                    .and_then(|n| n.parse::<u32>().ok())
                    .and_then(char::from_u32),
            };
            ch.map(|c| (c, semi + 1))
        });
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(ch),
        }
    }
    out
}

/// A cell as read from markup or tokens, before grid placement.
#[derive(Debug, Clone, Default)]
pub(crate) struct PendingCell {
    pub rowspan: usize,
    pub colspan: usize,
    pub text: String,
    pub bbox: Option<BBox>,
    pub is_header: bool,
}

/// Places rows of cells on a grid using the HTML slot-filling rule.
///
/// In strict mode any overlap, overflow or hole is an error. Otherwise spans
/// are shrunk and holes padded with empty cells, each repair reported.
pub(crate) fn place_rows(rows: Vec<Vec<PendingCell>>, strict: bool) -> Result<(Table, Vec<String>)> {
    let n_rows = rows.len();
    if n_rows == 0 {
        return Err(Error::NonRectangular("table has no rows".into()));
    }
    let mut repairs = Vec::new();
    let mut occ: Vec<Vec<bool>> = vec![Vec::new(); n_rows];
    let mut cells = Vec::new();
    let mut header_rows = Vec::with_capacity(n_rows);
    for (r, row) in rows.into_iter().enumerate() {
        header_rows.push(row.first().map(|c| c.is_header));
        let mut c = 0;
        for pc in row {
            while occ[r].get(c).copied().unwrap_or(false) {
                c += 1;
            }
            let mut rs = pc.rowspan.max(1);
            let mut cs = pc.colspan.max(1);
            if r + rs > n_rows {
                if strict {
                    return Err(Error::NonRectangular(format!(
                        "rowspan {rs} at row {r} exceeds {n_rows} rows"
                    )));
                }
                repairs.push(format!("rowspan at ({r},{c}) clamped from {rs} to {}", n_rows - r));
                rs = n_rows - r;
            }
            let free = |occ: &Vec<Vec<bool>>, k: usize| (r..r + rs).all(|rr| !occ[rr].get(c + k).copied().unwrap_or(false));
            let mut fit = 0;
            while fit < cs && free(&occ, fit) {
                fit += 1;
            }
            if fit < cs {
                if strict {
                    return Err(Error::NonRectangular(format!("cell at ({r},{c}) overlaps a spanning cell")));
                }
                repairs.push(format!("colspan at ({r},{c}) shrunk from {cs} to {fit}"));
                cs = fit.max(1);
            }
            for row_occ in occ.iter_mut().skip(r).take(rs) {
                if row_occ.len() < c + cs {
                    row_occ.resize(c + cs, false);
                }
                for slot in &mut row_occ[c..c + cs] {
                    *slot = true;
                }
            }
            let mut cell = Cell::new(r, c, pc.text).with_span(rs, cs).header(pc.is_header);
            cell.bbox = pc.bbox;
            cells.push(cell);
            c += cs;
        }
    }
    let n_cols = occ.iter().map(Vec::len).max().unwrap_or(0);
    if n_cols == 0 {
        return Err(Error::NonRectangular("table has no cells".into()));
    }
    for (r, row_occ) in occ.iter().enumerate() {
        for c in 0..n_cols {
            if !row_occ.get(c).copied().unwrap_or(false) {
                if strict {
                    return Err(Error::NonRectangular(format!("slot ({r},{c}) is not covered")));
                }
                repairs.push(format!("padded empty cell at ({r},{c})"));
                let header = header_rows[r].unwrap_or(false);
                cells.push(Cell::new(r, c, "").header(header));
            }
        }
    }
    if !strict {
        // Header flags must stay a row prefix; demote stragglers.
        let mut limit = 0;
        for r in 0..n_rows {
            let mut anchored = cells.iter().filter(|c| c.row == r).peekable();
            if anchored.peek().is_none() {
                continue;
            }
            if anchored.all(|c| c.is_header) {
                limit = r + 1;
            } else {
                break;
            }
        }
        for cell in &mut cells {
            let want = cell.row < limit;
            if cell.is_header != want {
                repairs.push(format!("header flag of cell at ({},{}) set to {want}", cell.row, cell.col));
                cell.is_header = want;
            }
        }
    }
    Ok((Table::new(n_rows, n_cols, cells)?, repairs))
}

/// Parses table markup; coordinate markers are scaled by `quant.unit`.
pub fn parse_markup(markup: &str, quant: QuantSpec) -> Result<Table> {
    let items = lex(markup)?;
    #[derive(PartialEq)]
    enum State {
        Start,
        Table,
        Row,
        Cell,
        Done,
    }
    let mut state = State::Start;
    let mut section: Option<String> = None;
    let mut rows: Vec<Vec<PendingCell>> = Vec::new();
    let mut cell_items: Vec<Item> = Vec::new();
    let mut cell_attrs: Vec<(String, String)> = Vec::new();
    let mut cell_tag = String::new();

    let malformed = |msg: String| Err(Error::MalformedMarkup(msg));
    for item in items {
        match (&state, item) {
            (State::Cell, Item::Close(name)) if name == cell_tag => {
                let pc = finish_cell(&cell_items, &cell_attrs, section.as_deref() == Some("thead"), quant)?;
                rows.last_mut().expect("cell inside row").push(pc);
                cell_items.clear();
                state = State::Row;
            }
            (State::Cell, it @ (Item::Text(_) | Item::Marker { .. })) => cell_items.push(it),
            (State::Cell, other) => return malformed(format!("unexpected {other:?} inside a cell")),
            (_, Item::Text(t)) if t.trim().is_empty() => {}
            (_, Item::Text(t)) => return malformed(format!("text {t:?} outside a cell")),
            (_, Item::Marker { axis, index }) => {
                return Err(Error::BadCoordMarker(format!("<{axis}_{index}> outside a cell")))
            }
            (State::Start, Item::Open { name, .. }) if name == "table" => state = State::Table,
            (State::Table, Item::Open { name, .. }) if name == "thead" || name == "tbody" => {
                if section.is_some() {
                    return malformed(format!("<{name}> nested in <{}>", section.unwrap()));
                }
                section = Some(name);
            }
            (State::Table, Item::Close(name)) if section.as_deref() == Some(name.as_str()) => section = None,
            (State::Table, Item::Open { name, .. }) if name == "tr" => {
                rows.push(Vec::new());
                state = State::Row;
            }
            (State::Table, Item::Close(name)) if name == "table" && section.is_none() => state = State::Done,
            (State::Row, Item::Open { name, attrs }) if name == "td" || name == "th" => {
                cell_tag = name;
                cell_attrs = attrs;
                state = State::Cell;
            }
            (State::Row, Item::Close(name)) if name == "tr" => state = State::Table,
            (_, other) => return malformed(format!("unexpected {other:?}")),
        }
    }
    if state != State::Done {
        return malformed("unbalanced tags: missing closing tags".into());
    }
    let (table, _) = place_rows(rows, true)?;
    Ok(table)
}

fn finish_cell(items: &[Item], attrs: &[(String, String)], is_header: bool, quant: QuantSpec) -> Result<PendingCell> {
    let mut pc = PendingCell { rowspan: 1, colspan: 1, is_header, ..Default::default() };
    for (k, v) in attrs {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| Error::MalformedMarkup(format!("{k}={v:?} is not a positive integer")))?;
        match k.as_str() {
            "rowspan" => pc.rowspan = n,
            "colspan" => pc.colspan = n,
            _ => return Err(Error::MalformedMarkup(format!("unsupported attribute {k}"))),
        }
    }
    let markers: Vec<usize> = items
        .iter()
        .enumerate()
        .filter(|(_, it)| matches!(it, Item::Marker { .. }))
        .map(|(i, _)| i)
        .collect();
    let text_of = |range: &[Item]| {
        range
            .iter()
            .map(|it| match it {
                Item::Text(t) => t.as_str(),
                _ => "",
            })
            .collect::<String>()
    };
    match markers.len() {
        0 => pc.text = text_of(items),
        4 => {
            let n = items.len();
            if markers != [0, 1, n - 2, n - 1] {
                return Err(Error::BadCoordMarker("markers must lead and trail the cell text".into()));
            }
            let idx = |i: usize, want: char| match items[i] {
                Item::Marker { axis, index } if axis == want => Ok(index),
                _ => Err(Error::BadCoordMarker(format!("expected an <{want}_k> marker"))),
            };
            let (x1, y1, x2, y2) = (idx(0, 'x')?, idx(1, 'y')?, idx(n - 2, 'x')?, idx(n - 1, 'y')?);
            if x1 > x2 || y1 > y2 {
                return Err(Error::BadCoordMarker(format!("inverted box ({x1},{y1},{x2},{y2})")));
            }
            let u = quant.unit;
            pc.bbox = Some(BBox { x1: x1 * u, y1: y1 * u, x2: x2 * u, y2: y2 * u });
            pc.text = text_of(&items[2..n - 2]);
        }
        k => return Err(Error::BadCoordMarker(format!("{k} markers in one cell, expected 0 or 4"))),
    }
    Ok(pc)
}

/// Renders a table as markup; with `with_coords` every cell needs a box.
pub fn emit_markup(table: &Table, with_coords: bool, quant: QuantSpec) -> Result<String> {
    if with_coords {
        if let Some(c) = table.cells().iter().find(|c| c.bbox.is_none()) {
            return Err(Error::MissingBox { cell: c.id });
        }
    }
    let header_rows = table.header_rows();
    let mut out = String::from("<table>");
    let emit_rows = |out: &mut String, range: std::ops::Range<usize>| {
        for r in range {
            out.push_str("<tr>");
            for cell in table.row_cells(r) {
                out.push_str("<td");
                if cell.rowspan > 1 {
                    let _ = write!(out, " rowspan=\"{}\"", cell.rowspan);
                }
                if cell.colspan > 1 {
                    let _ = write!(out, " colspan=\"{}\"", cell.colspan);
                }
                out.push('>');
                let bbox = cell.bbox.filter(|_| with_coords);
                if let Some(b) = bbox {
                    let _ = write!(out, "<x_{}><y_{}>", quant.quantize_px(b.x1), quant.quantize_px(b.y1));
                }
                out.push_str(&escape_text(&cell.text));
                if let Some(b) = bbox {
                    let _ = write!(out, "<x_{}><y_{}>", quant.quantize_px(b.x2), quant.quantize_px(b.y2));
                }
                out.push_str("</td>");
            }
            out.push_str("</tr>");
        }
    };
    if header_rows > 0 {
        out.push_str("<thead>");
        emit_rows(&mut out, 0..header_rows);
        out.push_str("</thead>");
    }
    out.push_str("<tbody>");
    emit_rows(&mut out, header_rows..table.rows());
    out.push_str("</tbody></table>");
    Ok(out)
}
