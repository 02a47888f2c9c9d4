//! `vsfat`: visceral/subcutaneous fat ratio from CT volumes.
//!
//! Results go to stdout as JSON (or CSV with `--format csv`), diagnostics to
//! stderr. Exit status is 0 on success, 1 for usage errors and 2 when the
//! input data or the algorithm fails.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vsfat_core::{
    AngleUnit, BoundaryModel, CenterMode, MorphologyConfig, PipelineConfig, PixelPoint, RayLength, ScoringParams,
    SliceSelector, SweepConfig, ThresholdConfig,
};

#[derive(Parser, Debug)]
#[command(name = "vsfat", version, about = "Visceral/subcutaneous fat ratio from CT volumes")]
struct Cli {
    /// Output format for results.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Threshold and open a HU volume into a binary fat mask.
    Mask {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        pipe: PipelineArgs,
    },
    /// Paint the subcutaneous fat band found by the polar sweep.
    Segment {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Input is already a binary fat mask.
        #[arg(long)]
        mask_input: bool,
        /// Write the per-ray sweep trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        pipe: PipelineArgs,
    },
    /// Visceral/subcutaneous fat ratio and the threshold label.
    Ratio {
        input: PathBuf,
        #[arg(long)]
        mask_input: bool,
        /// Also report the relative error against this ratio.
        #[arg(long)]
        reference_ratio: Option<f64>,
        #[command(flatten)]
        pipe: PipelineArgs,
    },
    /// Combined Crohn's / intestinal TB score.
    Score {
        /// Precomputed fat ratio.
        #[arg(long, conflicts_with = "input", required_unless_present = "input")]
        ratio: Option<f64>,
        /// HU volume to measure the ratio from.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        mask_input: bool,
        /// Per-slice TB probabilities, `slice_index,prob`. Without it P(PTB) is 0.
        #[arg(long)]
        ptb_csv: Option<PathBuf>,
        #[arg(long, default_value_t = vsfat_core::scoring::DEFAULT_STRIDE)]
        stride: usize,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        coef_a: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        coef_b: f64,
        #[command(flatten)]
        pipe: PipelineArgs,
    },
    /// Dice and Jaccard between two masks.
    Compare {
        mask_a: PathBuf,
        mask_b: PathBuf,
        /// One report per slice instead of one overall.
        #[arg(long)]
        per_slice: bool,
    },
    /// Classification metrics from prediction and truth CSVs (`case_id,label`).
    Metrics {
        predictions: PathBuf,
        truth: PathBuf,
        /// Label treated as the positive class.
        #[arg(long, default_value = "CD")]
        positive: String,
    },
    /// Write a synthetic phantom volume and its ground-truth sidecar.
    Phantom {
        #[arg(short, long)]
        output: PathBuf,
        /// Ground-truth JSON path; defaults to `<output>.truth.json`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also write the true subcutaneous fat region as a mask.
        #[arg(long)]
        truth_mask: Option<PathBuf>,
        /// Full phantom description as JSON; other geometry flags are ignored.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        depth: usize,
        #[arg(long, default_value_t = 50.0)]
        ring_inner: f64,
        #[arg(long, default_value_t = 100.0)]
        ring_outer: f64,
        /// Visceral blob `dx,dy,r` relative to the center; repeatable.
        #[arg(long, value_parser = parse_blob)]
        blob: Vec<(f64, f64, f64)>,
        /// Replace blobs with one sized for this visceral/subcutaneous ratio.
        #[arg(long, conflicts_with = "blob")]
        target_ratio: Option<f64>,
        /// Add one-pixel line artifacts outside the body.
        #[arg(long)]
        artifacts: bool,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time each pipeline stage over repeated runs.
    Bench {
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[command(flatten)]
        pipe: PipelineArgs,
    },
}

#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    #[arg(long, default_value_t = -150, allow_negative_numbers = true)]
    hu_min: i16,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    hu_max: i16,
    /// Skip the erosion/dilation pass.
    #[arg(long)]
    no_opening: bool,
    /// Angular step of the sweep in degrees.
    #[arg(long, default_value_t = vsfat_core::fatseg::DEFAULT_GRANULAR_DEGREE)]
    granular_degree: f64,
    /// Sweep center `x,y`; defaults to the image center.
    #[arg(long, value_parser = parse_point)]
    center: Option<PixelPoint>,
    #[arg(long, value_enum, default_value_t = RayLengthArg::Diagonal)]
    ray_length: RayLengthArg,
    /// Multiply sector areas by the step in degrees instead of radians.
    #[arg(long)]
    faithful_degrees: bool,
    /// Boundary placement along each ray.
    #[arg(long, value_enum, default_value_t = EdgeArg::HalfStep)]
    edge: EdgeArg,
    /// Close one-pixel gaps in painted masks.
    #[arg(long)]
    close_gaps: bool,
    /// `z`, `z0:z1` or `all`.
    #[arg(long, default_value = "all", value_parser = parse_slices)]
    slices: SliceSelector,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RayLengthArg {
    Diagonal,
    /// End points at half the image extent.
    HalfExtent,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EdgeArg {
    HalfStep,
    Pixel,
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            threshold: ThresholdConfig { hu_min: self.hu_min, hu_max: self.hu_max },
            morphology: if self.no_opening { MorphologyConfig::disabled() } else { MorphologyConfig::default() },
            sweep: SweepConfig {
                granular_degree: self.granular_degree,
                center: self.center.map_or(CenterMode::ImageCenter, CenterMode::Explicit),
                ray_length: match self.ray_length {
                    RayLengthArg::Diagonal => RayLength::Diagonal,
                    RayLengthArg::HalfExtent => RayLength::HalfExtent,
                },
                angle_unit: if self.faithful_degrees { AngleUnit::Degrees } else { AngleUnit::Radians },
                boundary: match self.edge {
                    EdgeArg::HalfStep => BoundaryModel::HalfStep,
                    EdgeArg::Pixel => BoundaryModel::PixelCenter,
                },
                close_gaps: self.close_gaps,
                threads: self.parallel,
            },
        }
    }

    /// Flag combinations clap cannot check on its own.
    fn validate(&self) -> Result<(), String> {
        let cfg = self.config();
        cfg.threshold.validate().map_err(|e| e.to_string())?;
        cfg.sweep.validate().map_err(|e| e.to_string())?;
        Ok(())
    }
}

fn parse_point(s: &str) -> Result<PixelPoint, String> {
    s.parse()
}

fn parse_slices(s: &str) -> Result<SliceSelector, String> {
    s.parse().map_err(|e: vsfat_core::Error| e.to_string())
}

fn parse_blob(s: &str) -> Result<(f64, f64, f64), String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?} in blob {s:?}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [dx, dy, r] => Ok((dx, dy, r)),
        [r] => Ok((0.0, 0.0, r)),
        _ => Err(format!("blob must be `dx,dy,r` or `r`, got {s:?}")),
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(vsfat_core::Error),
}

impl From<vsfat_core::Error> for Failure {
    fn from(e: vsfat_core::Error) -> Self {
        Failure::Data(e)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let fmt = cli.format;
    let check = |p: &PipelineArgs| p.validate().map_err(Failure::Usage);
    match cli.command {
        Command::Mask { input, output, pipe } => {
            check(&pipe)?;
            commands::mask(&input, &output, &pipe.config(), pipe.slices, fmt)
        }
        Command::Segment { input, output, mask_input, trace, pipe } => {
            check(&pipe)?;
            commands::segment(&input, &output, mask_input, trace.as_deref(), &pipe.config(), pipe.slices, fmt)
        }
        Command::Ratio { input, mask_input, reference_ratio, pipe } => {
            check(&pipe)?;
            commands::ratio(&input, mask_input, reference_ratio, &pipe.config(), pipe.slices, fmt)
        }
        Command::Score { ratio, input, mask_input, ptb_csv, stride, coef_a, coef_b, pipe } => {
            check(&pipe)?;
            if stride == 0 {
                return Err(Failure::Usage("--stride must be at least 1".into()));
            }
            let params = ScoringParams { a: coef_a, b: coef_b, ..ScoringParams::default() };
            let source = match (ratio, input) {
                (Some(r), _) => commands::RatioSource::Value(r),
                (None, Some(p)) => commands::RatioSource::Volume { path: p, mask_input },
                (None, None) => return Err(Failure::Usage("either --ratio or --input is required".into())),
            };
            commands::score(source, ptb_csv.as_deref(), stride, &params, &pipe.config(), pipe.slices, fmt)
        }
        Command::Compare { mask_a, mask_b, per_slice } => commands::compare(&mask_a, &mask_b, per_slice, fmt),
        Command::Metrics { predictions, truth, positive } => {
            let positive = positive.parse().map_err(|e: vsfat_core::Error| Failure::Usage(e.to_string()))?;
            commands::metrics(&predictions, &truth, positive, fmt)
        }
        Command::Phantom {
            output,
            truth,
            truth_mask,
            spec,
            size,
            depth,
            ring_inner,
            ring_outer,
            blob,
            target_ratio,
            artifacts,
            noise,
            seed,
        } => {
            let spec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| {
                        Failure::Data(if e.kind() == std::io::ErrorKind::NotFound {
                            vsfat_core::Error::FileNotFound(path.clone())
                        } else {
                            e.into()
                        })
                    })?;
                    serde_json::from_str(&text)
                        .map_err(|e| Failure::Data(vsfat_core::Error::InvalidConfig(format!("{}: {e}", path.display()))))?
                }
                None => {
                    let mut s = vsfat_core::PhantomSpec::annulus(size, size, ring_inner, ring_outer).with_slices(depth);
                    for (dx, dy, r) in blob {
                        s = s.with_blob(dx, dy, r);
                    }
                    if artifacts {
                        s = s.with_table_artifacts();
                    }
                    s.noise_sigma = noise;
                    s.seed = seed;
                    s
                }
            };
            let truth = truth.unwrap_or_else(|| {
                let mut name = output.as_os_str().to_owned();
                name.push(".truth.json");
                PathBuf::from(name)
            });
            commands::phantom(&spec, target_ratio, &output, &truth, truth_mask.as_deref(), fmt)
        }
        Command::Bench { input, reps, pipe } => {
            check(&pipe)?;
            if reps < vsfat_core::bench::MIN_REPETITIONS {
                return Err(Failure::Usage(format!(
                    "--reps must be at least {}",
                    vsfat_core::bench::MIN_REPETITIONS
                )));
            }
            commands::bench(&input, reps, &pipe.config(), pipe.slices, fmt)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
