//! Top-k accuracy, non-interpolated average precision, and MAP.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;

use crate::error::{Error, Result};

/// Fraction of rows whose true label is among the `k` highest scores. Equal
/// scores rank the lower class index first.
pub fn topk_accuracy(score_rows: &[Vec<f64>], labels: &[usize], k: usize) -> Result<f64> {
    if score_rows.len() != labels.len() {
        return Err(Error::param(format!(
            "{} score rows for {} labels",
            score_rows.len(),
            labels.len()
        )));
    }
    if score_rows.is_empty() {
        return Err(Error::param("top-k accuracy of zero rows"));
    }
    let mut hits = 0usize;
    for (row, &label) in score_rows.iter().zip(labels) {
        if k == 0 || k > row.len() {
            return Err(Error::param(format!("k = {k} invalid for {} classes", row.len())));
        }
        let s = *row
            .get(label)
            .ok_or_else(|| Error::param(format!("label {label} outside {} classes", row.len())))?;
        let ahead = row
            .iter()
            .enumerate()
            .filter(|&(j, &v)| v > s || (v == s && j < label))
            .count();
        if ahead < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / score_rows.len() as f64)
}

/// Non-interpolated AP of a ranked list. Items are sorted by descending
/// score; equal scores keep input order.
pub fn average_precision(scores: &[f64], relevant: &[bool]) -> Result<f64> {
    if scores.len() != relevant.len() {
        return Err(Error::param("scores and relevance flags differ in length"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut found = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if relevant[i] {
            found += 1;
            sum += found as f64 / (rank + 1) as f64;
        }
    }
    if found == 0 {
        return Err(Error::UndefinedAp);
    }
    Ok(sum / found as f64)
}

/// Unweighted mean of the defined per-class APs.
pub fn mean_ap(per_class: &[f64]) -> Result<f64> {
    if per_class.is_empty() {
        return Err(Error::param("MAP needs at least one defined class AP"));
    }
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}

/// Binary-relevance AP for each class. Classes without positives are
/// returned separately and left out of the map.
pub fn per_class_ap(
    score_rows: &[Vec<f64>],
    label_sets: &[Vec<usize>],
    class_count: usize,
) -> Result<(BTreeMap<usize, f64>, Vec<usize>)> {
    if score_rows.len() != label_sets.len() {
        return Err(Error::param("score rows and label sets differ in length"));
    }
    let mut aps = BTreeMap::new();
    let mut excluded = Vec::new();
    for c in 0..class_count {
        let scores: Vec<f64> = score_rows
            .iter()
            .map(|r| {
                r.get(c)
                    .copied()
                    .ok_or_else(|| Error::param(format!("score row lacks class {c}")))
            })
            .collect::<Result<_>>()?;
        let rel: Vec<bool> = label_sets.iter().map(|l| l.contains(&c)).collect();
        match average_precision(&scores, &rel) {
            Ok(ap) => {
                aps.insert(c, ap);
            }
            Err(Error::UndefinedAp) => excluded.push(c),
            Err(e) => return Err(e),
        }
    }
    if !excluded.is_empty() {
        warn!("classes {excluded:?} have no positives; excluded from MAP");
    }
    Ok((aps, excluded))
}

/// Evaluation summary of one split.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub per_class_ap: BTreeMap<usize, f64>,
    pub excluded_classes: Vec<usize>,
    pub map: Option<f64>,
    pub top1: Option<f64>,
    pub top5: Option<f64>,
    pub loss: Option<f64>,
    pub samples: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl EvalReport {
    /// Scores of `samples` rows against label sets; single-label corpora also
    /// get top-1 and top-5 (when there are at least five classes).
    pub fn from_scores(
        score_rows: &[Vec<f64>],
        label_sets: &[Vec<usize>],
        class_count: usize,
        single_label: bool,
    ) -> Result<Self> {
        if score_rows.is_empty() {
            return Err(Error::config("cannot evaluate an empty split"));
        }
        let (per_class_ap, excluded_classes) = per_class_ap(score_rows, label_sets, class_count)?;
        let aps: Vec<f64> = per_class_ap.values().copied().collect();
        let map = mean_ap(&aps).ok();
        let (mut top1, mut top5) = (None, None);
        if single_label {
            let labels: Vec<usize> = label_sets
                .iter()
                .map(|l| match l.as_slice() {
                    &[x] => Ok(x),
                    other => Err(Error::config(format!(
                        "single-label evaluation got labels {other:?}"
                    ))),
                })
                .collect::<Result<_>>()?;
            top1 = Some(topk_accuracy(score_rows, &labels, 1)?);
            if class_count >= 5 {
                top5 = Some(topk_accuracy(score_rows, &labels, 5)?);
            }
        }
        Ok(Self {
            per_class_ap,
            excluded_classes,
            map,
            top1,
            top5,
            loss: None,
            samples: score_rows.len(),
        })
    }

    /// One `key value` line per metric.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "samples {}", self.samples).unwrap();
        for (name, v) in [
            ("map", self.map),
            ("top1", self.top1),
            ("top5", self.top5),
            ("loss", self.loss),
        ] {
            if let Some(v) = v {
                writeln!(s, "{name} {v:.6}").unwrap();
            }
        }
        for (c, ap) in &self.per_class_ap {
            writeln!(s, "ap.{c} {ap:.6}").unwrap();
        }
        for c in &self.excluded_classes {
            writeln!(s, "ap.{c} undefined").unwrap();
        }
        s
    }

    /// Machine-readable `metric,class,value` table.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,class,value\n");
        writeln!(s, "samples,,{}", self.samples).unwrap();
        for (name, v) in [
            ("map", self.map),
            ("top1", self.top1),
            ("top5", self.top5),
            ("loss", self.loss),
        ] {
            writeln!(s, "{name},,{}", fmt_opt(v)).unwrap();
        }
        for (c, ap) in &self.per_class_ap {
            writeln!(s, "ap,{c},{ap:.6}").unwrap();
        }
        for c in &self.excluded_classes {
            writeln!(s, "ap,{c},").unwrap();
        }
        s
    }
}
