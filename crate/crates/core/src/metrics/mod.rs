//! Evaluation metrics and corpus reports.

mod car;
mod index;
mod ted;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use car::{ap50, car_eval, car_eval_partial, match_boxes, table_ap_input, Prf};
pub use index::{
    answer, icr_accuracy, list_counts, list_micro_f1, normalize_answer, random_queries, IndexQuery, IndexTask,
};
pub use ted::{levenshtein, rename_cost, s_teds, teds, teds_trees, tree_edit_distance, Label, TableTree};

use crate::error::{Error, Result};
use crate::table::{QueryPolicy, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Teds,
    Steds,
    Car,
    Ap50,
    Index,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Teds, Metric::Steds, Metric::Car, Metric::Ap50, Metric::Index];

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "teds" => Ok(Metric::Teds),
            "steds" | "s-teds" | "s_teds" => Ok(Metric::Steds),
            "car" => Ok(Metric::Car),
            "ap50" | "ap" => Ok(Metric::Ap50),
            "index" => Ok(Metric::Index),
            other => Err(Error::InvalidConfig(format!("unknown metric `{other}`"))),
        }
    }
}

/// Scores of one prediction; metrics not requested stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub index: usize,
    pub teds: Option<f64>,
    pub s_teds: Option<f64>,
    pub car: Option<Prf>,
    pub ap50: Option<f64>,
    pub icr_acc: Option<f64>,
    pub irdr_f1: Option<f64>,
    pub icdr_f1: Option<f64>,
}

/// Per-sample scores and corpus aggregates.
///
/// TEDS, S-TEDS, CAR and ICR are sample means. AP50 ranks all detections of
/// the corpus together, and the row/column F1 pool their counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: Vec<SampleScores>,
    pub teds: Option<f64>,
    pub s_teds: Option<f64>,
    pub car: Option<Prf>,
    pub ap50: Option<f64>,
    pub icr_acc: Option<f64>,
    pub irdr_f1: Option<f64>,
    pub icdr_f1: Option<f64>,
}

/// Every cell, row and column of `gold` queried against both tables.
/// Out-of-range queries on the prediction answer empty.
fn index_pairs(pred: &Table, gold: &Table, policy: QueryPolicy) -> Result<[Vec<(Vec<String>, Vec<String>)>; 3]> {
    let ask = |q: IndexQuery| -> Result<(Vec<String>, Vec<String>)> {
        let g = answer(gold, q, policy)?;
        let p = match answer(pred, q, policy) {
            Ok(p) => p,
            Err(Error::IndexOutOfRange { .. }) => match q {
                IndexQuery::Cell(..) => vec![String::new()],
                _ => Vec::new(),
            },
            Err(e) => return Err(e),
        };
        Ok((p, g))
    };
    let mut icr = Vec::new();
    for i in 0..gold.rows() {
        for j in 0..gold.cols() {
            icr.push(ask(IndexQuery::Cell(i, j))?);
        }
    }
    let irdr = (0..gold.rows()).map(|i| ask(IndexQuery::Row(i))).collect::<Result<_>>()?;
    let icdr = (0..gold.cols()).map(|j| ask(IndexQuery::Col(j))).collect::<Result<_>>()?;
    Ok([icr, irdr, icdr])
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { 0.0 } else { s / n as f64 }
}

/// Scores prediction/gold pairs in parallel; aggregation runs in sample order.
///
/// Gold tables need boxes for CAR and AP50; predicted cells without one
/// count as unlocalized.
pub fn evaluate(pairs: &[(Table, Table)], metrics: &[Metric]) -> Result<EvalReport> {
    let want = |m| metrics.contains(&m);
    type Extra = (Option<(Vec<(crate::table::BBox, f64)>, Vec<crate::table::BBox>)>, Option<[Vec<(Vec<String>, Vec<String>)>; 3]>);
    let per: Vec<(SampleScores, Extra)> = pairs
        .par_iter()
        .enumerate()
        .map(|(index, (p, g))| {
            let mut s = SampleScores { index, ..Default::default() };
            if want(Metric::Teds) {
                s.teds = Some(teds(p, g));
            }
            if want(Metric::Steds) {
                s.s_teds = Some(s_teds(p, g));
            }
            if want(Metric::Car) {
                s.car = Some(car_eval_partial(p, g, 0.5)?);
            }
            let ap_in = if want(Metric::Ap50) {
                let input = table_ap_input(p, g)?;
                s.ap50 = Some(ap50(std::slice::from_ref(&input)));
                Some(input)
            } else {
                None
            };
            let idx = if want(Metric::Index) {
                let [icr, irdr, icdr] = index_pairs(p, g, QueryPolicy::OwnerText)?;
                let (pc, gc): (Vec<String>, Vec<String>) = icr.iter().map(|(a, b)| (a[0].clone(), b[0].clone())).unzip();
                s.icr_acc = Some(icr_accuracy(&pc, &gc));
                s.irdr_f1 = Some(list_micro_f1(&irdr));
                s.icdr_f1 = Some(list_micro_f1(&icdr));
                Some([icr, irdr, icdr])
            } else {
                None
            };
            Ok((s, (ap_in, idx)))
        })
        .collect::<Result<_>>()?;

    let mut report = EvalReport::default();
    let col = |f: &dyn Fn(&SampleScores) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = per.iter().filter_map(|(s, _)| f(s)).collect();
        (!v.is_empty()).then(|| mean(v.into_iter()))
    };
    report.teds = col(&|s| s.teds);
    report.s_teds = col(&|s| s.s_teds);
    report.icr_acc = col(&|s| s.icr_acc);
    if want(Metric::Car) && !per.is_empty() {
        report.car = Some(Prf {
            precision: mean(per.iter().filter_map(|(s, _)| s.car.map(|c| c.precision))),
            recall: mean(per.iter().filter_map(|(s, _)| s.car.map(|c| c.recall))),
            f1: mean(per.iter().filter_map(|(s, _)| s.car.map(|c| c.f1))),
        });
    }
    if want(Metric::Ap50) && !per.is_empty() {
        let images: Vec<_> = per.iter().filter_map(|(_, e)| e.0.clone()).collect();
        report.ap50 = Some(ap50(&images));
    }
    if want(Metric::Index) && !per.is_empty() {
        let pooled = |k: usize| {
            let all: Vec<_> = per.iter().filter_map(|(_, e)| e.1.as_ref()).flat_map(|x| x[k].iter().cloned()).collect();
            list_micro_f1(&all)
        };
        report.irdr_f1 = Some(pooled(1));
        report.icdr_f1 = Some(pooled(2));
    }
    report.samples = per.into_iter().map(|(s, _)| s).collect();
    Ok(report)
}

impl EvalReport {
    /// One row per sample; columns of metrics that were not computed are
    /// empty. `keys`, when given, label the samples in an extra column.
    pub fn write_csv(&self, mut w: impl Write, keys: Option<&[String]>) -> Result<()> {
        let key_col = if keys.is_some() { "key," } else { "" };
        writeln!(w, "index,{key_col}teds,s_teds,car_p,car_r,car_f1,ap50,icr_acc,irdr_f1,icdr_f1")?;
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for s in &self.samples {
            let key = keys.map(|k| format!("{},", k.get(s.index).map(String::as_str).unwrap_or("").replace(',', "_"))).unwrap_or_default();
            writeln!(
                w,
                "{},{key}{},{},{},{},{},{},{},{},{}",
                s.index,
                f(s.teds),
                f(s.s_teds),
                f(s.car.map(|c| c.precision)),
                f(s.car.map(|c| c.recall)),
                f(s.car.map(|c| c.f1)),
                f(s.ap50),
                f(s.icr_acc),
                f(s.irdr_f1),
                f(s.icdr_f1)
            )?;
        }
        Ok(())
    }

    /// Aggregates only, as pretty JSON.
    pub fn summary_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            o.remove("samples");
            o.insert("count".into(), self.samples.len().into());
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{BBox, Cell};

    fn boxed(t: &Table) -> Table {
        let cells = t
            .cells()
            .iter()
            .map(|c| {
                let (x, y) = (c.col as u32 * 10, c.row as u32 * 10);
                c.clone().with_bbox(BBox { x1: x, y1: y, x2: x + c.colspan as u32 * 10, y2: y + c.rowspan as u32 * 10 })
            })
            .collect();
        Table::new(t.rows(), t.cols(), cells).unwrap()
    }

    #[test]
    fn self_evaluation_is_perfect() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<_> = (0..20)
            .map(|_| {
                let t = boxed(&crate::synth::random_table(&mut rng, 1..=4, 1..=4, 2));
                (t.clone(), t)
            })
            .collect();
        let r = evaluate(&pairs, &Metric::ALL).unwrap();
        assert_eq!(r.samples.len(), 20);
        for v in [r.teds, r.s_teds, r.ap50, r.icr_acc, r.irdr_f1, r.icdr_f1] {
            assert_eq!(v, Some(1.0));
        }
        assert_eq!(r.car.unwrap().f1, 1.0);
        let mut csv = Vec::new();
        r.write_csv(&mut csv, None).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 21);
        assert!(r.summary_json().unwrap().contains("\"count\": 20"));
    }

    #[test]
    fn smaller_prediction_scores_below_one() {
        let gold = boxed(&Table::from_texts(2, 2, &["a", "b", "c", "d"]).unwrap());
        let pred = boxed(&Table::new(1, 2, vec![Cell::new(0, 0, "a"), Cell::new(0, 1, "b")]).unwrap());
        let r = evaluate(&[(pred, gold)], &Metric::ALL).unwrap();
        let s = &r.samples[0];
        assert_eq!(s.icr_acc, Some(0.5));
        assert!(s.teds.unwrap() < 1.0 && s.ap50.unwrap() < 1.0);
        // Rows: [a b] exact, [c d] vs nothing. Columns: one hit each of two.
        assert_eq!(s.irdr_f1, Some(2.0 * 2.0 / (4.0 + 2.0)));
        assert_eq!(s.icdr_f1, Some(2.0 * 2.0 / (4.0 + 2.0)));
    }

    #[test]
    fn metric_names() {
        assert_eq!(Metric::parse("S-TEDS").unwrap(), Metric::Steds);
        assert!(Metric::parse("grits").is_err());
    }
}
