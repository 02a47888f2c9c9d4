//! Combined Crohn's / intestinal TB scoring from the fat ratio and an
//! aggregated pulmonary-TB probability.
//!
//! ```text
//! score_crohn = ratio - 0.63
//! score_tb    = a · (0.63 - ratio) + b · P(PTB)
//! ```
//!
//! P(PTB) is the mean of the three largest per-slice TB probabilities.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fatseg::{Label, RATIO_THRESHOLD};
use crate::metrics::csv_error;

pub const DEFAULT_STRIDE: usize = 10;
pub const PTB_THRESHOLD: f64 = 0.5;
const TOP_K: usize = 3;

/// What to do when fewer than three probabilities are available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShortSeries {
    /// Average whatever is there.
    #[default]
    MeanOfAvailable,
    /// Refuse to aggregate.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtbSeries {
    pub probs: Vec<f64>,
    pub stride: usize,
}

impl PtbSeries {
    pub fn new(probs: Vec<f64>, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidStride);
        }
        if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::OutOfRange(p));
        }
        Ok(Self { probs, stride })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringParams {
    pub a: f64,
    pub b: f64,
    pub ratio_threshold: f64,
    pub ptb_threshold: f64,
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self { a: 1.0, b: 1.0, ratio_threshold: RATIO_THRESHOLD, ptb_threshold: PTB_THRESHOLD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisResult {
    pub score_crohn: f64,
    pub score_tb: f64,
    pub p_ptb: f64,
    pub ptb_positive: bool,
    pub label: Label,
}

/// Slice indices `0, stride, 2·stride, …` below `n_slices`.
pub fn select_slices(n_slices: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::InvalidStride);
    }
    Ok((0..n_slices).step_by(stride).collect())
}

/// Mean of the top three probabilities (fewer if the series is shorter).
pub fn aggregate_ptb(s: &PtbSeries) -> Result<f64> {
    aggregate_ptb_with(s, ShortSeries::default())
}

pub fn aggregate_ptb_with(s: &PtbSeries, policy: ShortSeries) -> Result<f64> {
    if s.probs.is_empty() {
        return Err(Error::EmptySeries);
    }
    if policy == ShortSeries::Strict && s.probs.len() < TOP_K {
        return Err(Error::InvalidInput(format!(
            "{} probabilities, need at least {TOP_K}",
            s.probs.len()
        )));
    }
    let mut top = [f64::NEG_INFINITY; TOP_K];
    for &p in &s.probs {
        if p.is_nan() {
            return Err(Error::NonFiniteInput("NaN probability".into()));
        }
        if p > top[TOP_K - 1] {
            top[TOP_K - 1] = p;
            top.sort_by(|a, b| b.total_cmp(a));
        }
    }
    let k = s.probs.len().min(TOP_K);
    Ok(top[..k].iter().sum::<f64>() / k as f64)
}

/// `p_ptb > 0.5`, strictly.
pub fn classify_ptb(p_ptb: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&p_ptb) {
        return Err(Error::OutOfRange(p_ptb));
    }
    Ok(p_ptb > PTB_THRESHOLD)
}

/// Scores both diagnoses; the larger score wins and ties go to CD.
pub fn compute_scores(fat_ratio: f64, p_ptb: f64, params: &ScoringParams) -> Result<DiagnosisResult> {
    for (name, v) in [("fat_ratio", fat_ratio), ("a", params.a), ("b", params.b)] {
        if !v.is_finite() {
            return Err(Error::NonFiniteInput(format!("{name} = {v}")));
        }
    }
    if !p_ptb.is_finite() {
        return Err(Error::NonFiniteInput(format!("p_ptb = {p_ptb}")));
    }
    if !(0.0..=1.0).contains(&p_ptb) {
        return Err(Error::OutOfRange(p_ptb));
    }
    let t = params.ratio_threshold;
    let score_crohn = fat_ratio - t;
    let score_tb = params.a * (t - fat_ratio) + params.b * p_ptb;
    let label = if score_crohn >= score_tb { Label::Crohns } else { Label::IntestinalTb };
    Ok(DiagnosisResult {
        score_crohn,
        score_tb,
        p_ptb,
        ptb_positive: p_ptb > params.ptb_threshold,
        label,
    })
}

/// Reads `slice_index,prob` rows (with header) and keeps the rows whose
/// index falls on the stride grid.
pub fn read_ptb_csv(path: impl AsRef<Path>, stride: usize) -> Result<PtbSeries> {
    if stride == 0 {
        return Err(Error::InvalidStride);
    }
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(&name, &e))?;
    let mut probs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(&name, &e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Csv { path: name.clone(), line, message };
        if rec.len() != 2 {
            return Err(bad(format!("expected 2 fields (slice_index,prob), found {}", rec.len())));
        }
        let idx: usize = rec[0].parse().map_err(|_| bad(format!("bad slice index {:?}", &rec[0])))?;
        let p: f64 = rec[1].parse().map_err(|_| bad(format!("bad probability {:?}", &rec[1])))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(bad(format!("probability {p} outside [0, 1]")));
        }
        if idx.is_multiple_of(stride) {
            probs.push(p);
        }
    }
    PtbSeries::new(probs, stride)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(p: &[f64]) -> PtbSeries {
        PtbSeries::new(p.to_vec(), 1).unwrap()
    }

    #[test]
    fn slice_selection() {
        assert_eq!(select_slices(40, 10).unwrap(), vec![0, 10, 20, 30]);
        assert_eq!(select_slices(5, 1).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(select_slices(0, 3).unwrap().is_empty());
        assert!(matches!(select_slices(5, 0), Err(Error::InvalidStride)));
    }

    #[test]
    fn top_three_mean() {
        assert!((aggregate_ptb(&series(&[0.9, 0.8, 0.7, 0.1])).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(aggregate_ptb(&series(&[0.0, 0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(aggregate_ptb(&series(&[0.6, 0.4])).unwrap(), 0.5);
        assert!(matches!(aggregate_ptb(&series(&[])), Err(Error::EmptySeries)));
        assert!(aggregate_ptb_with(&series(&[0.6, 0.4]), ShortSeries::Strict).is_err());
    }

    #[test]
    fn ptb_threshold_is_strict() {
        assert!(classify_ptb(0.8).unwrap());
        assert!(!classify_ptb(0.5).unwrap());
        assert!(!classify_ptb(0.0).unwrap());
        assert!(matches!(classify_ptb(1.5), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn score_examples() {
        let p = ScoringParams::default();
        let r = compute_scores(0.90, 0.0, &p).unwrap();
        assert!((r.score_crohn - 0.27).abs() < 1e-12 && (r.score_tb + 0.27).abs() < 1e-12);
        assert_eq!(r.label, Label::Crohns);
        let r = compute_scores(0.50, 0.80, &p).unwrap();
        assert!((r.score_crohn + 0.13).abs() < 1e-12 && (r.score_tb - 0.93).abs() < 1e-12);
        assert_eq!(r.label, Label::IntestinalTb);
        assert!(r.ptb_positive);
        let r = compute_scores(0.63, 0.0, &p).unwrap();
        assert_eq!((r.score_crohn, r.score_tb), (0.0, 0.0));
        assert_eq!(r.label, Label::Crohns);
        assert!(compute_scores(f64::NAN, 0.0, &p).is_err());
    }

    #[test]
    fn csv_stride_filter() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ptb.csv");
        std::fs::write(&path, "slice_index,prob\n0,0.9\n5,0.99\n10,0.8\n20,0.7\n30,0.1\n").unwrap();
        let s = read_ptb_csv(&path, 10).unwrap();
        assert_eq!(s.probs, vec![0.9, 0.8, 0.7, 0.1]);
        std::fs::write(&path, "slice_index,prob\n0,0.9\n10,abc\n").unwrap();
        assert!(matches!(read_ptb_csv(&path, 10), Err(Error::Csv { line: 3, .. })));
    }

    proptest! {
        #[test]
        fn monotone_and_permutation_invariant(
            mut p in proptest::collection::vec(0.0f64..=1.0, 1..30),
            i in any::<proptest::sample::Index>(),
            bump in 0.0f64..=1.0,
        ) {
            let base = aggregate_ptb(&series(&p)).unwrap();
            let mut rev = p.clone();
            rev.reverse();
            prop_assert_eq!(aggregate_ptb(&series(&rev)).unwrap(), base);
            let j = i.index(p.len());
            p[j] = (p[j] + bump).min(1.0);
            prop_assert!(aggregate_ptb(&series(&p)).unwrap() >= base);
        }

        #[test]
        fn score_sum_identity(r in -2.0f64..3.0, p in 0.0f64..=1.0) {
            let d = compute_scores(r, p, &ScoringParams::default()).unwrap();
            prop_assert!((d.score_crohn + d.score_tb - p).abs() < 1e-12);
        }
    }
}
