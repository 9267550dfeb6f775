use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use irtrack::config::PipelineConfig;
use irtrack::pipeline;
use irtrack::Error;

/// Small infrared target detection and tracking.
#[derive(Parser, Debug)]
#[command(name = "irtrack", version)]
struct Cli {
    /// Worker threads for detect, bench and upsample.
    #[arg(long, global = true, env = "IRTRACK_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect targets in a directory of PGM frames.
    Detect {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Run SORT over a detections CSV.
    Track {
        detections: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        sort: SortArgs,
    },
    /// Score a detections or tracks CSV against ground truth.
    Eval {
        predictions: PathBuf,
        ground_truth: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Radius in original-scale pixels.
        #[arg(long)]
        tp_distance: Option<f64>,
        /// Scale of the predictions relative to the ground truth.
        #[arg(long)]
        upsample: Option<usize>,
        /// Write the metrics here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Time detection at several worker counts.
    Bench {
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 4])]
        worker_counts: Vec<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Generate a synthetic sequence from a scenario JSON file.
    Synth { scenario: PathBuf, out_dir: PathBuf },
    /// Copy frames with track boxes drawn in.
    Render {
        input: PathBuf,
        tracks: PathBuf,
        out_dir: PathBuf,
    },
    /// Write bicubic-upsampled copies of the frames.
    Upsample {
        input: PathBuf,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 2)]
        factor: usize,
    },
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// JSON pipeline configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    upsample: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    center_size: Option<usize>,
    #[arg(long)]
    sector_count: Option<usize>,
    #[arg(long)]
    top_fraction: Option<f64>,
    #[arg(long)]
    dilation_side: Option<usize>,
    #[arg(long)]
    top_n: Option<usize>,
}

#[derive(Args, Debug)]
struct SortArgs {
    #[arg(long)]
    iou_min: Option<f64>,
    #[arg(long)]
    max_age: Option<usize>,
    #[arg(long)]
    min_hits: Option<usize>,
    /// Do not report tentative tracks during the first frames.
    #[arg(long)]
    no_warmup: bool,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig, Failure> {
        let mut c = load_config(self.config.as_deref())?;
        if let Some(v) = self.upsample {
            c.upsample_factor = v;
        }
        if self.patch_size.is_some() {
            c.patch_size = self.patch_size;
        }
        if self.center_size.is_some() {
            c.center_size = self.center_size;
        }
        if let Some(v) = self.sector_count {
            c.sector_count = v;
        }
        if let Some(v) = self.top_fraction {
            c.top_fraction = v;
        }
        if self.dilation_side.is_some() {
            c.dilation_side = self.dilation_side;
        }
        if let Some(v) = self.top_n {
            c.top_n_targets = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let workers = cli.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(Failure::Usage("--workers must be >= 1".into()));
    }
    match cli.command {
        Command::Detect {
            input,
            output,
            pipeline,
        } => {
            let config = pipeline.config()?;
            let m = pipeline::run_detect(&input, &output, &config, workers)?;
            let found: usize = m.detections_per_frame.iter().sum();
            eprintln!(
                "{} frames, {found} detections, {:.1} ms",
                m.frame_count, m.total_ms
            );
        }
        Command::Track {
            detections,
            output,
            config,
            sort,
        } => {
            let mut p = load_config(config.as_deref())?.sort;
            if let Some(v) = sort.iou_min {
                p.iou_min = v;
            }
            if let Some(v) = sort.max_age {
                p.max_age = v;
            }
            if let Some(v) = sort.min_hits {
                p.min_hits = v;
            }
            if sort.no_warmup {
                p.warmup_reporting = false;
            }
            let rows = pipeline::run_track(&detections, &output, &p)?;
            eprintln!("{} track rows", rows.len());
        }
        Command::Eval {
            predictions,
            ground_truth,
            config,
            tp_distance,
            upsample,
            output,
        } => {
            let c = load_config(config.as_deref())?;
            let tp = tp_distance.unwrap_or(c.tp_distance);
            let factor = upsample.unwrap_or(c.upsample_factor);
            let report = pipeline::run_eval(&predictions, &ground_truth, tp, factor)?;
            match output {
                Some(path) => pipeline::write_json(&path, &report)?,
                None => print_json(&report)?,
            }
        }
        Command::Bench {
            input,
            worker_counts,
            output,
            pipeline,
        } => {
            let config = pipeline.config()?;
            let report = pipeline::run_bench(&input, &config, &worker_counts)?;
            match output {
                Some(path) => pipeline::write_json(&path, &report)?,
                None => print_json(&report)?,
            }
            if !report.outputs_identical {
                return Err(Failure::Data(
                    "detections differ between worker counts".into(),
                ));
            }
        }
        Command::Synth { scenario, out_dir } => {
            let sc = pipeline::read_scenario(&scenario)?;
            let s = pipeline::run_synth(&sc, &out_dir)?;
            eprintln!("{} frames, {} specks", s.frame_count, s.speck_count);
        }
        Command::Render {
            input,
            tracks,
            out_dir,
        } => {
            let n = pipeline::run_render(&input, &tracks, &out_dir)?;
            eprintln!("{n} boxes drawn");
        }
        Command::Upsample {
            input,
            out_dir,
            factor,
        } => {
            if !matches!(factor, 2 | 4) {
                return Err(Failure::Usage(format!("--factor {factor}: must be 2 or 4")));
            }
            let n = pipeline::run_upsample(&input, factor, &out_dir, workers)?;
            eprintln!("{n} frames upsampled");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
