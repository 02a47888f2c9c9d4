//! Wall-clock timing of the pipeline stages.

use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fatseg::{measure_mask, PipelineConfig};
use crate::metrics::Summary;
use crate::nifti::load_volume;
use crate::preprocess::{open_mask, threshold_fat};
use crate::volume::{HuVolume, SliceSelector};

pub const MIN_REPETITIONS: usize = 3;

/// Seconds per repetition for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub mean_s: f64,
    pub std_s: f64,
    pub samples_s: Vec<f64>,
}

impl StageStats {
    fn from_samples(samples_s: Vec<f64>) -> Self {
        let s = Summary::of(&samples_s).unwrap_or(Summary { mean: 0.0, std: 0.0, n: 0 });
        Self { mean_s: s.mean, std_s: s.std, samples_s }
    }

    pub fn max_s(&self) -> f64 {
        self.samples_s.iter().copied().fold(0.0, f64::max)
    }
}

impl std::fmt::Display for StageStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4}±{:.4} s", self.mean_s, self.std_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub shape: [usize; 3],
    pub voxels: usize,
    pub repetitions: usize,
    pub threads: usize,
    /// Absent when benchmarking an in-memory volume.
    pub load: Option<StageStats>,
    pub threshold: StageStats,
    pub morphology: StageStats,
    pub sweep: StageStats,
    /// Threshold through sweep, file I/O excluded.
    pub total: StageStats,
    pub total_with_io: Option<StageStats>,
    pub ratio: f64,
}

struct Rep {
    threshold: f64,
    morphology: f64,
    sweep: f64,
    total: f64,
    ratio: f64,
}

fn time_pipeline(vol: &HuVolume, cfg: &PipelineConfig) -> Result<Rep> {
    let start = Instant::now();
    let mask = threshold_fat(vol, cfg.threshold)?;
    let t_threshold = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let opened = open_mask(&mask, cfg.morphology);
    let t_morph = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let m = measure_mask(&opened, SliceSelector::All, &cfg.sweep)?;
    let t_sweep = t.elapsed().as_secs_f64();

    let total = start.elapsed().as_secs_f64();
    Ok(Rep { threshold: t_threshold, morphology: t_morph, sweep: t_sweep, total, ratio: black_box(m.ratio) })
}

fn check_reps(repetitions: usize) -> Result<()> {
    if repetitions < MIN_REPETITIONS {
        return Err(Error::InvalidConfig(format!(
            "at least {MIN_REPETITIONS} repetitions required, got {repetitions}"
        )));
    }
    Ok(())
}

fn report(vol: &HuVolume, cfg: &PipelineConfig, reps: Vec<Rep>, io: Option<Vec<f64>>) -> BenchReport {
    let s = vol.shape();
    let col = |f: fn(&Rep) -> f64| StageStats::from_samples(reps.iter().map(f).collect());
    let total_with_io = io.as_ref().map(|load| {
        StageStats::from_samples(load.iter().zip(&reps).map(|(l, r)| l + r.total).collect())
    });
    BenchReport {
        shape: [s.nx, s.ny, s.nz],
        voxels: s.len(),
        repetitions: reps.len(),
        threads: cfg.sweep.threads,
        load: io.map(StageStats::from_samples),
        threshold: col(|r| r.threshold),
        morphology: col(|r| r.morphology),
        sweep: col(|r| r.sweep),
        total: col(|r| r.total),
        total_with_io,
        ratio: reps.last().map_or(f64::NAN, |r| r.ratio),
    }
}

/// Times an in-memory volume. One warm-up run is discarded.
pub fn bench_volume(
    vol: &HuVolume,
    sel: SliceSelector,
    cfg: &PipelineConfig,
    repetitions: usize,
) -> Result<BenchReport> {
    check_reps(repetitions)?;
    cfg.sweep.validate()?;
    let vol = vol.extract_slices(sel)?;
    time_pipeline(&vol, cfg)?;
    let reps = (0..repetitions).map(|_| time_pipeline(&vol, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(report(&vol, cfg, reps, None))
}

/// Times loading and processing a volume file. The pipeline total excludes
/// the load; `total_with_io` adds it back.
pub fn run_bench(
    path: impl AsRef<Path>,
    cfg: &PipelineConfig,
    sel: SliceSelector,
    repetitions: usize,
) -> Result<BenchReport> {
    check_reps(repetitions)?;
    cfg.sweep.validate()?;
    let path = path.as_ref();
    let mut loads = Vec::with_capacity(repetitions);
    let mut reps = Vec::with_capacity(repetitions);
    let mut last = None;
    for i in 0..=repetitions {
        let t = Instant::now();
        let vol = load_volume(path)?.extract_slices(sel)?;
        let load = t.elapsed().as_secs_f64();
        let rep = time_pipeline(&vol, cfg)?;
        if i > 0 {
            loads.push(load);
            reps.push(rep);
        }
        last = Some(vol);
    }
    let vol = last.expect("at least one repetition");
    Ok(report(&vol, cfg, reps, Some(loads)))
}
