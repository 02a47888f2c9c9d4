use std::path::{Path, PathBuf};

use serde::Serialize;
use vsfat_core::metrics::{align_by_case, read_label_csv};
use vsfat_core::phantom::{region_mask, Region};
use vsfat_core::scoring::read_ptb_csv;
use vsfat_core::{
    aggregate_ptb, batch_classify_eval, bench, classification_metrics, compute_scores, fat_mask, generate_phantom,
    load_mask, load_volume, measure_mask, metrics::overlap_per_slice, near_threshold_phantom, overlap,
    relative_error, save_mask, save_volume, segment_subcut, BinaryMask, ConfusionCounts, ClassificationMetrics,
    DiagnosisResult, Error, FatMeasurement, Label, PhantomSpec, PhantomTruth, PipelineConfig, SliceMeasurement,
    SliceSelector, SweepTrace,
};

use crate::output::emit;
use crate::{Failure, Format};

type Out = Result<(), Failure>;

fn selected_mask(input: &Path, mask_input: bool, cfg: &PipelineConfig, sel: SliceSelector) -> Result<BinaryMask, Error> {
    if mask_input {
        load_mask(input)?.extract_slices(sel)
    } else {
        fat_mask(&load_volume(input)?, sel, cfg)
    }
}

#[derive(Serialize)]
struct MaskReport<'a> {
    output: &'a Path,
    shape: [usize; 3],
    foreground: u64,
}

pub fn mask(input: &Path, output: &Path, cfg: &PipelineConfig, sel: SliceSelector, fmt: Format) -> Out {
    let m = fat_mask(&load_volume(input)?, sel, cfg)?;
    save_mask(&m, output)?;
    let s = m.shape();
    emit(&MaskReport { output, shape: [s.nx, s.ny, s.nz], foreground: m.count_foreground() }, fmt)
}

#[derive(Serialize)]
struct SegmentSlice {
    z: usize,
    subcut_area: f64,
    pixels: u64,
}

#[derive(Serialize)]
struct SegmentReport<'a> {
    output: &'a Path,
    shape: [usize; 3],
    foreground: u64,
    subcut_area: f64,
    slices: Vec<SegmentSlice>,
}

fn write_trace(path: &Path, traces: &[(usize, SweepTrace)]) -> Result<(), Error> {
    let with_z = traces.len() > 1;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let fail = |e: csv::Error| Error::InvalidInput(format!("{}: {e}", path.display()));
    let mut header = vec!["theta", "inner_x", "inner_y", "outer_x", "outer_y", "contribution"];
    if with_z {
        header.insert(0, "z");
    }
    w.write_record(&header).map_err(fail)?;
    for (z, trace) in traces {
        for r in &trace.records {
            let coord = |p: Option<vsfat_core::PixelPoint>, f: fn(vsfat_core::PixelPoint) -> i64| {
                p.map_or(String::new(), |p| f(p).to_string())
            };
            let (inner, outer) = (r.hit.inner, r.hit.outer);
            let mut row = vec![
                r.theta_deg.to_string(),
                coord(inner, |p| p.x),
                coord(inner, |p| p.y),
                coord(outer, |p| p.x),
                coord(outer, |p| p.y),
                r.contribution.to_string(),
            ];
            if with_z {
                row.insert(0, z.to_string());
            }
            w.write_record(&row).map_err(fail)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn segment(
    input: &Path,
    output: &Path,
    mask_input: bool,
    trace: Option<&Path>,
    cfg: &PipelineConfig,
    sel: SliceSelector,
    fmt: Format,
) -> Out {
    let fat = selected_mask(input, mask_input, cfg, sel)?;
    let z0 = *sel.resolve(usize::MAX)?.start();
    let (seg, traces) = segment_subcut(&fat, &cfg.sweep)?;
    save_mask(&seg, output)?;
    let traces: Vec<(usize, SweepTrace)> = traces.into_iter().enumerate().map(|(i, t)| (z0 + i, t)).collect();
    if let Some(path) = trace {
        write_trace(path, &traces)?;
    }
    let slices: Vec<SegmentSlice> = traces
        .iter()
        .map(|(z, t)| SegmentSlice { z: *z, subcut_area: t.area(), pixels: seg.view(z - z0).count_foreground() })
        .collect();
    let s = seg.shape();
    emit(
        &SegmentReport {
            output,
            shape: [s.nx, s.ny, s.nz],
            foreground: seg.count_foreground(),
            subcut_area: slices.iter().map(|s| s.subcut_area).sum(),
            slices,
        },
        fmt,
    )
}

#[derive(Serialize)]
struct RatioReport<'a> {
    total: u64,
    subcut: f64,
    visceral: f64,
    ratio: f64,
    label: Label,
    physical_total_mm: f64,
    physical_subcut_mm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_error: Option<f64>,
    slices: &'a [SliceMeasurement],
    warnings: &'a [String],
}

fn measure(input: &Path, mask_input: bool, cfg: &PipelineConfig, sel: SliceSelector) -> Result<FatMeasurement, Error> {
    let m = if mask_input {
        measure_mask(&load_mask(input)?, sel, &cfg.sweep)?
    } else {
        vsfat_core::fat_ratio_3d(&load_volume(input)?, sel, cfg)?
    };
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    Ok(m)
}

pub fn ratio(
    input: &Path,
    mask_input: bool,
    reference: Option<f64>,
    cfg: &PipelineConfig,
    sel: SliceSelector,
    fmt: Format,
) -> Out {
    let m = measure(input, mask_input, cfg, sel)?;
    let relative_error = reference.map(|r| relative_error(m.ratio, r)).transpose()?;
    emit(
        &RatioReport {
            total: m.total_fat,
            subcut: m.subcut,
            visceral: m.visceral,
            ratio: m.ratio,
            label: m.label()?,
            physical_total_mm: m.physical_total_mm,
            physical_subcut_mm: m.physical_subcut_mm,
            relative_error,
            slices: &m.slices,
            warnings: &m.warnings,
        },
        fmt,
    )
}

pub enum RatioSource {
    Value(f64),
    Volume { path: PathBuf, mask_input: bool },
}

#[derive(Serialize)]
struct ScoreReport {
    fat_ratio: f64,
    n_probabilities: usize,
    #[serde(flatten)]
    result: DiagnosisResult,
}

pub fn score(
    source: RatioSource,
    ptb_csv: Option<&Path>,
    stride: usize,
    params: &vsfat_core::ScoringParams,
    cfg: &PipelineConfig,
    sel: SliceSelector,
    fmt: Format,
) -> Out {
    let fat_ratio = match source {
        RatioSource::Value(r) => r,
        RatioSource::Volume { path, mask_input } => measure(&path, mask_input, cfg, sel)?.ratio,
    };
    let series = ptb_csv.map(|p| read_ptb_csv(p, stride)).transpose()?;
    let n = series.as_ref().map_or(0, |s| s.probs.len());
    let p_ptb = match &series {
        Some(s) if !s.probs.is_empty() => aggregate_ptb(s)?,
        _ => {
            eprintln!("warning: no slice probabilities, using P(PTB) = 0");
            0.0
        }
    };
    let result = compute_scores(fat_ratio, p_ptb, params)?;
    emit(&ScoreReport { fat_ratio, n_probabilities: n, result }, fmt)
}

pub fn compare(a: &Path, b: &Path, per_slice: bool, fmt: Format) -> Out {
    let (a, b) = (load_mask(a)?, load_mask(b)?);
    if per_slice {
        emit(&overlap_per_slice(&a, &b)?, fmt)
    } else {
        emit(&overlap(&a, &b)?, fmt)
    }
}

#[derive(Serialize)]
struct MetricsReport {
    positive: Label,
    n: u64,
    counts: ConfusionCounts,
    metrics: ClassificationMetrics,
}

pub fn metrics(predictions: &Path, truth: &Path, positive: Label, fmt: Format) -> Out {
    let (p, t) = align_by_case(&read_label_csv(predictions)?, &read_label_csv(truth)?)?;
    let counts = batch_classify_eval(&p, &t, positive)?;
    let metrics = classification_metrics(counts)?;
    emit(&MetricsReport { positive, n: counts.total(), counts, metrics }, fmt)
}

#[derive(Serialize)]
struct PhantomReport<'a> {
    output: &'a Path,
    truth: &'a Path,
    shape: [usize; 3],
    true_ratio: f64,
    rasterized_ratio: f64,
    fat_voxels_total: u64,
}

pub fn phantom(
    spec: &PhantomSpec,
    target: Option<f64>,
    output: &Path,
    truth_path: &Path,
    truth_mask: Option<&Path>,
    fmt: Format,
) -> Out {
    let (vol, truth): (_, PhantomTruth) = match target {
        Some(t) => near_threshold_phantom(t, spec)?,
        None => generate_phantom(spec)?,
    };
    save_volume(&vol, output)?;
    let text = serde_json::to_string_pretty(&truth)
        .map_err(|e| Failure::Data(Error::InvalidInput(format!("truth: {e}"))))?;
    std::fs::write(truth_path, text + "\n").map_err(Error::from)?;
    if let Some(path) = truth_mask {
        save_mask(&region_mask(&truth.spec, &[Region::SubcutFat])?, path)?;
    }
    let s = vol.shape();
    emit(
        &PhantomReport {
            output,
            truth: truth_path,
            shape: [s.nx, s.ny, s.nz],
            true_ratio: truth.true_ratio,
            rasterized_ratio: truth.rasterized_ratio,
            fat_voxels_total: truth.fat_voxels_total,
        },
        fmt,
    )
}

pub fn bench(input: &Path, reps: usize, cfg: &PipelineConfig, sel: SliceSelector, fmt: Format) -> Out {
    let report = bench::run_bench(input, cfg, sel, reps)?;
    eprintln!(
        "{} voxels, {} reps: total {} (with I/O {})",
        report.voxels,
        report.repetitions,
        report.total,
        report.total_with_io.as_ref().map_or_else(|| "-".into(), |s| s.to_string())
    );
    emit(&report, fmt)
}
