//! Index-query answers and their scoring.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::table::{query_cell, query_col, query_row, QueryPolicy, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexTask {
    /// Cell retrieval by (row, col).
    Icr,
    /// Row retrieval.
    Irdr,
    /// Column retrieval.
    Icdr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexQuery {
    Cell(usize, usize),
    Row(usize),
    Col(usize),
}

impl IndexQuery {
    pub fn task(&self) -> IndexTask {
        match self {
            IndexQuery::Cell(..) => IndexTask::Icr,
            IndexQuery::Row(_) => IndexTask::Irdr,
            IndexQuery::Col(_) => IndexTask::Icdr,
        }
    }
}

/// Answer list of a query: one string for cells, spans expanded for rows
/// and columns.
pub fn answer(table: &Table, q: IndexQuery, policy: QueryPolicy) -> Result<Vec<String>> {
    match q {
        IndexQuery::Cell(i, j) => Ok(vec![query_cell(table, i, j, policy)?]),
        IndexQuery::Row(i) => query_row(table, i),
        IndexQuery::Col(j) => query_col(table, j),
    }
}

/// `n` uniformly drawn in-range queries for `task`.
pub fn random_queries(table: &Table, task: IndexTask, n: usize, rng: &mut impl Rng) -> Vec<IndexQuery> {
    (0..n)
        .map(|_| match task {
            IndexTask::Icr => IndexQuery::Cell(rng.gen_range(0..table.rows()), rng.gen_range(0..table.cols())),
            IndexTask::Irdr => IndexQuery::Row(rng.gen_range(0..table.rows())),
            IndexTask::Icdr => IndexQuery::Col(rng.gen_range(0..table.cols())),
        })
        .collect()
}

/// Canonical number form if `tok` is a plain or comma-grouped decimal:
/// grouping commas removed, trailing fractional zeros and a bare point
/// trimmed, leading `+` dropped.
fn canonical_number(tok: &str) -> Option<String> {
    let body = tok.strip_prefix('+').unwrap_or(tok);
    let (sign, digits) = match body.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", body),
    };
    let (int, frac) = match digits.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (digits, None),
    };
    let all_digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    let int_ok = if int.contains(',') {
        let groups: Vec<&str> = int.split(',').collect();
        (1..=3).contains(&groups[0].len()) && all_digits(groups[0]) && groups[1..].iter().all(|g| g.len() == 3 && all_digits(g))
    } else {
        all_digits(int)
    };
    if !int_ok || frac.is_some_and(|f| !f.is_empty() && !all_digits(f)) {
        return None;
    }
    let mut s = format!("{sign}{}", int.replace(',', ""));
    if let Some(f) = frac.map(|f| f.trim_end_matches('0')).filter(|f| !f.is_empty()) {
        s.push('.');
        s.push_str(f);
    }
    Some(s)
}

/// Lowercase, canonicalize numbers, strip punctuation from other tokens,
/// collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    s.to_lowercase()
        .split_whitespace()
        .filter_map(|tok| {
            let t = canonical_number(tok).unwrap_or_else(|| tok.chars().filter(|c| !c.is_ascii_punctuation()).collect());
            (!t.is_empty()).then_some(t)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Exact-match accuracy after normalization over paired answers.
pub fn icr_accuracy(pred: &[String], gold: &[String]) -> f64 {
    if gold.is_empty() {
        return 1.0;
    }
    let hits = pred.iter().zip(gold).filter(|(p, g)| normalize_answer(p) == normalize_answer(g)).count();
    hits as f64 / gold.len() as f64
}

/// `(tp, fp, fn)` of one list pair under positional pairing.
pub fn list_counts(pred: &[String], gold: &[String]) -> (usize, usize, usize) {
    let tp = pred.iter().zip(gold).filter(|(p, g)| normalize_answer(p) == normalize_answer(g)).count();
    (tp, pred.len() - tp, gold.len() - tp)
}

/// Micro-F1 over many list queries.
pub fn list_micro_f1(pairs: &[(Vec<String>, Vec<String>)]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pairs {
        let (a, b, c) = list_counts(p, g);
        tp += a;
        fp += b;
        fn_ += c;
    }
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("1,234.50"), normalize_answer("1234.5"));
        assert_eq!(normalize_answer("1,234.50"), "1234.5");
        assert_eq!(normalize_answer("  Total:\t 100. "), "total 100");
        assert_eq!(normalize_answer("-0.500"), "-0.5");
        assert_eq!(normalize_answer("+7.0"), "7");
        assert_eq!(normalize_answer("12,34"), "1234");
        assert_eq!(normalize_answer("N/A"), "na");
        assert_eq!(normalize_answer("..."), "");
    }

    #[test]
    fn one_wrong_cell_in_four() {
        let f1 = list_micro_f1(&[(s(&["a", "b", "x", "d"]), s(&["a", "b", "c", "d"]))]);
        assert_eq!(f1, 0.75);
        assert_eq!(icr_accuracy(&s(&["A."]), &s(&["a"])), 1.0);
    }

    #[test]
    fn gold_answers_score_perfectly() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let t = crate::table::fixtures::spanned_3x3();
        for task in [IndexTask::Icr, IndexTask::Irdr, IndexTask::Icdr] {
            let qs = random_queries(&t, task, 10, &mut rng);
            let pairs: Vec<_> = qs
                .iter()
                .map(|&q| (answer(&t, q, QueryPolicy::OwnerText).unwrap(), answer(&t, q, QueryPolicy::OwnerText).unwrap()))
                .collect();
            assert_eq!(list_micro_f1(&pairs), 1.0);
        }
    }
}
