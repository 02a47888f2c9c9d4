//! Segmentation overlap and binary classification metrics.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fatseg::Label;
use crate::volume::{BinaryMask, FOREGROUND};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub dice: f64,
    pub jaccard: f64,
    pub intersection: u64,
    pub size_a: u64,
    pub size_b: u64,
    pub union: u64,
    /// Both masks empty; dice and jaccard are reported as 1.
    pub both_empty: bool,
}

impl OverlapReport {
    fn from_counts(intersection: u64, size_a: u64, size_b: u64) -> Self {
        let union = size_a + size_b - intersection;
        if union == 0 {
            return Self { dice: 1.0, jaccard: 1.0, intersection, size_a, size_b, union, both_empty: true };
        }
        Self {
            dice: 2.0 * intersection as f64 / (size_a + size_b) as f64,
            jaccard: intersection as f64 / union as f64,
            intersection,
            size_a,
            size_b,
            union,
            both_empty: false,
        }
    }
}

fn overlap_slices(a: &[u8], b: &[u8]) -> OverlapReport {
    let (mut inter, mut na, mut nb) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        let (fa, fb) = (x == FOREGROUND, y == FOREGROUND);
        na += fa as u64;
        nb += fb as u64;
        inter += (fa && fb) as u64;
    }
    OverlapReport::from_counts(inter, na, nb)
}

/// Dice and Jaccard over the whole grid.
pub fn overlap(a: &BinaryMask, b: &BinaryMask) -> Result<OverlapReport> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(a.shape().to_vec(), b.shape().to_vec()));
    }
    Ok(overlap_slices(a.data(), b.data()))
}

/// One report per z-slice.
pub fn overlap_per_slice(a: &BinaryMask, b: &BinaryMask) -> Result<Vec<OverlapReport>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(a.shape().to_vec(), b.shape().to_vec()));
    }
    Ok((0..a.shape().nz).map(|z| overlap_slices(a.view(z).data, b.view(z).data)).collect())
}

/// Mean and sample standard deviation, shown as `0.82±0.23`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary { mean, std, n })
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = f.precision().unwrap_or(2);
        write!(f, "{:.p$}±{:.p$}", self.mean, self.std, p = p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same predictions scored with the other class as positive.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }
}

/// Each metric is `None` when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub fdr: Option<f64>,
    pub npv: Option<f64>,
    pub f1: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    pub mcc: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

pub fn classification_metrics(c: ConfusionCounts) -> Result<ClassificationMetrics> {
    if c.total() == 0 {
        return Err(Error::EmptyCounts);
    }
    let ConfusionCounts { tp, fp, fn_, tn } = c;
    let recall = ratio(tp, tp + fn_);
    let specificity = ratio(tn, tn + fp);
    let mcc_den = ((tp + fp) as f64) * ((tp + fn_) as f64) * ((tn + fp) as f64) * ((tn + fn_) as f64);
    let mcc = (mcc_den != 0.0)
        .then(|| (tp as f64 * tn as f64 - fp as f64 * fn_ as f64) / mcc_den.sqrt());
    Ok(ClassificationMetrics {
        accuracy: ratio(tp + tn, c.total()),
        precision: ratio(tp, tp + fp),
        recall,
        specificity,
        fdr: ratio(fp, tp + fp),
        npv: ratio(tn, tn + fn_),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        balanced_accuracy: recall.zip(specificity).map(|(r, s)| (r + s) / 2.0),
        mcc,
    })
}

/// `|measured - reference| / |reference|`.
pub fn relative_error(measured: f64, reference: f64) -> Result<f64> {
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    if !(measured.is_finite() && reference.is_finite()) {
        return Err(Error::NonFiniteInput(format!("measured {measured}, reference {reference}")));
    }
    Ok((measured - reference).abs() / reference.abs())
}

pub fn batch_classify_eval(predictions: &[Label], truth: &[Label], positive: Label) -> Result<ConfusionCounts> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions vs {} truth labels",
            predictions.len(),
            truth.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predictions.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Reads a `case_id,label` CSV with a header row.
pub fn read_label_csv(path: impl AsRef<Path>) -> Result<Vec<(String, Label)>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(&name, &e))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(&name, &e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Csv { path: name.clone(), line, message };
        if rec.len() != 2 {
            return Err(bad(format!("expected 2 fields (case_id,label), found {}", rec.len())));
        }
        let label = rec[1].parse::<Label>().map_err(|e| bad(e.to_string()))?;
        rows.push((rec[0].to_string(), label));
    }
    Ok(rows)
}

pub(crate) fn csv_error(path: &str, e: &csv::Error) -> Error {
    if let csv::ErrorKind::Io(io) = e.kind() {
        if io.kind() == std::io::ErrorKind::NotFound {
            return Error::FileNotFound(path.into());
        }
    }
    let line = e.position().map_or(0, |p| p.line());
    Error::Csv { path: path.to_string(), line, message: e.to_string() }
}

/// Pairs predictions with truth by case id, in truth order.
pub fn align_by_case(
    predictions: &[(String, Label)],
    truth: &[(String, Label)],
) -> Result<(Vec<Label>, Vec<Label>)> {
    let mut by_id: HashMap<&str, Label> = HashMap::new();
    for (id, l) in predictions {
        if by_id.insert(id.as_str(), *l).is_some() {
            return Err(Error::InvalidInput(format!("duplicate prediction for case {id:?}")));
        }
    }
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions vs {} truth labels",
            predictions.len(),
            truth.len()
        )));
    }
    let mut p = Vec::with_capacity(truth.len());
    let mut t = Vec::with_capacity(truth.len());
    for (id, l) in truth {
        let pred = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::LengthMismatch(format!("no prediction for case {id:?}")))?;
        p.push(*pred);
        t.push(*l);
    }
    Ok((p, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Shape, Spacing};
    use proptest::prelude::*;

    fn mask(bits: &[u8]) -> BinaryMask {
        let data = bits.iter().map(|&b| if b != 0 { 255 } else { 0 }).collect();
        BinaryMask::new(Shape::new(bits.len(), 1, 1).unwrap(), Spacing::default(), data).unwrap()
    }

    #[test]
    fn identical_and_disjoint() {
        let a = mask(&[1, 1, 0, 0]);
        let r = overlap(&a, &a).unwrap();
        assert_eq!((r.dice, r.jaccard), (1.0, 1.0));
        let r = overlap(&a, &mask(&[0, 0, 1, 1])).unwrap();
        assert_eq!((r.dice, r.jaccard), (0.0, 0.0));
    }

    #[test]
    fn half_overlap() {
        let a = mask(&[1, 1, 1, 1, 0, 0]);
        let b = mask(&[0, 0, 1, 1, 1, 1]);
        let r = overlap(&a, &b).unwrap();
        assert_eq!((r.intersection, r.size_a, r.size_b, r.union), (2, 4, 4, 6));
        assert_eq!(r.dice, 0.5);
        assert!((r.jaccard - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_vs_empty_is_perfect_and_flagged() {
        let r = overlap(&mask(&[0, 0]), &mask(&[0, 0])).unwrap();
        assert!(r.both_empty);
        assert_eq!(r.dice, 1.0);
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(overlap(&mask(&[0, 0]), &mask(&[0])), Err(Error::ShapeMismatch(..))));
    }

    #[test]
    fn perfect_classifier() {
        let m = classification_metrics(ConfusionCounts::new(5, 0, 0, 5)).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.specificity, m.npv, m.f1, m.balanced_accuracy, m.mcc] {
            assert_eq!(v, Some(1.0));
        }
        assert_eq!(m.fdr, Some(0.0));
    }

    #[test]
    fn fixture_counts() {
        let m = classification_metrics(ConfusionCounts::new(2, 1, 1, 6)).unwrap();
        let close = |a: Option<f64>, b: f64| (a.unwrap() - b).abs() < 1e-12;
        assert!(close(m.accuracy, 0.8));
        assert!(close(m.precision, 2.0 / 3.0));
        assert!(close(m.recall, 2.0 / 3.0));
        assert!(close(m.specificity, 6.0 / 7.0));
        assert!(close(m.fdr, 1.0 / 3.0));
        assert!(close(m.npv, 6.0 / 7.0));
        assert!(close(m.f1, 2.0 / 3.0));
        assert!(close(m.balanced_accuracy, (2.0 / 3.0 + 6.0 / 7.0) / 2.0));
        assert!(close(m.mcc, 11.0 / 21.0));
    }

    #[test]
    fn zero_denominators_are_undefined() {
        let m = classification_metrics(ConfusionCounts::new(0, 0, 3, 7)).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.fdr, None);
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.mcc, None);
        assert!(matches!(classification_metrics(ConfusionCounts::default()), Err(Error::EmptyCounts)));
    }

    #[test]
    fn relative_error_cases() {
        assert!((relative_error(0.56, 0.50).unwrap() - 0.12).abs() < 1e-12);
        assert_eq!(relative_error(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(relative_error(0.0, 0.63).unwrap(), 1.0);
        assert!(matches!(relative_error(1.0, 0.0), Err(Error::ZeroReference)));
    }

    #[test]
    fn batch_eval_extremes() {
        use Label::*;
        let truth = vec![Crohns; 6];
        let c = batch_classify_eval(&truth, &truth, Crohns).unwrap();
        assert_eq!(c, ConfusionCounts::new(6, 0, 0, 0));
        let truth = vec![Crohns, IntestinalTb, Crohns];
        let flipped: Vec<_> = truth.iter().map(|l| l.other()).collect();
        let c = batch_classify_eval(&flipped, &truth, Crohns).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        assert!(matches!(
            batch_classify_eval(&truth[..2], &truth, Crohns),
            Err(Error::LengthMismatch(_))
        ));
    }

    #[test]
    fn label_csv_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        std::fs::write(&p, "case_id,label\na,CD\nb,ITB\nc,XX\n").unwrap();
        match read_label_csv(&p) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "case_id,label\na,CD\nb,ITB\n").unwrap();
        assert_eq!(read_label_csv(&p).unwrap().len(), 2);
    }

    #[test]
    fn summary_format() {
        let s = Summary::of(&[0.6, 0.8, 1.0]).unwrap();
        assert_eq!(format!("{s}"), "0.80±0.20");
        assert!(Summary::of(&[]).is_none());
    }

    proptest! {
        #[test]
        fn jaccard_dice_bijection(bits in proptest::collection::vec(0u8..4, 1..200)) {
            let a = mask(&bits.iter().map(|b| b & 1).collect::<Vec<_>>());
            let b = mask(&bits.iter().map(|b| b & 2).collect::<Vec<_>>());
            let r = overlap(&a, &b).unwrap();
            prop_assert!((r.jaccard - r.dice / (2.0 - r.dice)).abs() < 1e-12);
            let s = overlap(&b, &a).unwrap();
            prop_assert_eq!((r.dice, r.jaccard), (s.dice, s.jaccard));
        }

        #[test]
        fn swap_symmetry_and_ranges(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50) {
            let c = ConfusionCounts::new(tp, fp, fn_, tn);
            prop_assume!(c.total() > 0);
            let m = classification_metrics(c).unwrap();
            let s = classification_metrics(c.swapped()).unwrap();
            prop_assert_eq!(m.mcc, s.mcc);
            prop_assert_eq!(m.precision, s.npv);
            prop_assert_eq!(m.recall, s.specificity);
            for v in [m.accuracy, m.precision, m.recall, m.specificity, m.fdr, m.npv, m.f1, m.balanced_accuracy].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if let Some(mcc) = m.mcc {
                prop_assert!((-1.0..=1.0).contains(&mcc));
            }
        }
    }
}
