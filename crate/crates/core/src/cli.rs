//! Command-line front end: synthetic data, pretraining, transfer
//! fine-tuning, video evaluation, sweeps, gradient checks, and log reports.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{
    encode_ppm, load_manifest, load_video_manifest, synth_images, synth_two_domain, write_manifest,
    write_video_manifest, Dataset, Entry, ImageSource, SynthConfig,
};
use crate::error::{Error, Result};
use crate::layers::gradcheck::{self, CheckResult};
use crate::metrics::EvalReport;
use crate::netspec::{build_with, init_params_with, supported_architectures, ArchitectureConfig, HeadSpec, Init, LabelMode, NetworkSpec, DEFAULT_DROPOUT, FC1_WIDTH};
use crate::network::Network;
use crate::trainer::{format_metrics_log, train, EpochRecord, HeldOut, TrainConfig, TrainData, IMAGE_HEAD, VIDEO_HEAD};
use crate::transfer::{apply_freeze_policy, transplant, FreezePolicy};
use crate::video::{evaluate_split, frame_dataset, Frame, Split, VideoRecord};

/// Exit status of a successful command.
pub const EXIT_OK: i32 = 0;
/// Runtime failure or a failed internal validation (e.g. a gradient check).
pub const EXIT_FAILURE: i32 = 1;
/// Bad usage, configuration, or input data (including missing files).
pub const EXIT_INPUT: i32 = 2;
/// A checkpoint does not fit the requested network.
pub const EXIT_INCOMPATIBLE: i32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSettings {
    pub depth: usize,
    pub resolution: usize,
    pub fc1_width: usize,
    pub fc2_width: usize,
    pub kernel_divisor: usize,
    pub dropout: f64,
    pub init: Init,
    pub video_label_mode: LabelMode,
}

impl Default for ArchSettings {
    fn default() -> Self {
        Self {
            depth: 2,
            resolution: 32,
            fc1_width: FC1_WIDTH,
            fc2_width: 2048,
            kernel_divisor: 1,
            dropout: DEFAULT_DROPOUT,
            init: Init::default(),
            video_label_mode: LabelMode::Multi,
        }
    }
}

impl ArchSettings {
    fn builder(&self, depth: usize, resolution: usize) -> ArchitectureConfig {
        ArchitectureConfig {
            depth,
            resolution,
            fc1_width: self.fc1_width,
            fc2_width: self.fc2_width,
            kernel_divisor: self.kernel_divisor,
            dropout: self.dropout,
        }
    }

    fn build(&self, heads: Vec<HeadSpec>) -> Result<NetworkSpec> {
        build_with(&self.builder(self.depth, self.resolution), heads)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    pub images: Option<PathBuf>,
    pub heldout: Option<PathBuf>,
    pub videos: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Frame sampling rate for training on videos.
    pub fps: Option<f64>,
    pub mean_subtract: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSettings {
    /// `random` or a checkpoint path.
    pub init: String,
    pub policy: FreezePolicy,
    /// Image manifest mixed into fine-tuning.
    pub augment: Option<PathBuf>,
}

impl Default for TransferSettings {
    fn default() -> Self {
        Self {
            init: "random".into(),
            policy: FreezePolicy::FcPlusConv,
            augment: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub resolutions: Vec<usize>,
    pub depths: Vec<usize>,
    /// Training-set sizes; 0 means the full set.
    pub train_sizes: Vec<usize>,
    pub fps_list: Vec<f64>,
    pub workers: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            resolutions: vec![32],
            depths: vec![2],
            train_sizes: vec![0],
            fps_list: vec![1.0],
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    #[serde(flatten)]
    pub corpus: SynthConfig,
    pub heldout_count: usize,
    /// `raw` (exact tensors) or `ppm` (8-bit).
    pub format: String,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            corpus: SynthConfig::default(),
            heldout_count: 120,
            format: "raw".into(),
        }
    }
}

/// Everything a command runs with. Loaded from an optional TOML file, then
/// overridden by flags; a snapshot is saved in every run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub out: PathBuf,
    pub run_name: Option<String>,
    pub arch: ArchSettings,
    pub train: TrainConfig,
    pub data: DataSettings,
    pub transfer: TransferSettings,
    pub sweep: SweepSettings,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            seed: 0,
            out: PathBuf::from("runs"),
            run_name: None,
            arch: ArchSettings::default(),
            train: TrainConfig::default(),
            data: DataSettings::default(),
            transfer: TransferSettings::default(),
            sweep: SweepSettings::default(),
            synth: SynthSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("encoding config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("config file: {e}")))
    }
}

#[derive(Debug, Parser)]
#[command(name = "dcnv", version, about = "Frame-based video recognition with image-pretrained convolutional networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the seeded synthetic two-domain corpus with manifests.
    Synth(SynthArgs),
    /// Train an image classifier from random initialization.
    Pretrain(CommonArgs),
    /// Fine-tune on video frames from random or pre-trained initialization.
    Transfer(CommonArgs),
    /// Evaluate a checkpoint on a video split with late fusion.
    Eval(EvalArgs),
    /// Cross product of resolutions, depths, training sizes and frame rates.
    Sweep(SweepArgs),
    /// Finite-difference checks of every layer and loss.
    Gradcheck(GradcheckArgs),
    /// Summarize a metrics log as tables and plot-ready columns.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parent directory of run directories.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run directory name (default: <command>-<timestamp>).
    #[arg(long)]
    pub run_name: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_depth)]
    pub depth: Option<usize>,
    #[arg(long, value_parser = parse_resolution)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub fc1_width: Option<usize>,
    #[arg(long)]
    pub fc2_width: Option<usize>,
    /// Divide every convolution's kernel count by this.
    #[arg(long)]
    pub channel_div: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Weight initialization: `gaussian:<std>` or `he:<gain>`.
    #[arg(long, value_parser = parse_init)]
    pub weight_init: Option<Init>,
    /// Label mode of the video head.
    #[arg(long, value_parser = parse_label_mode)]
    pub video_labels: Option<LabelMode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Held-out evaluation every N epochs (0: last epoch only).
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Disable random crops and mirroring.
    #[arg(long)]
    pub no_augment_crops: bool,
    /// Frame sampling rate, e.g. `1`, `4` or `1/2`.
    #[arg(long, value_parser = parse_fps)]
    pub fps: Option<f64>,
    #[arg(long, value_parser = parse_policy)]
    pub policy: Option<FreezePolicy>,
    /// `random` or a checkpoint path.
    #[arg(long)]
    pub init: Option<String>,
    /// Image manifest mixed into video fine-tuning.
    #[arg(long)]
    pub augment: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    #[arg(long)]
    pub videos: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Subtract the training set's per-channel mean from every input.
    #[arg(long)]
    pub mean_subtract: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub image_count: Option<usize>,
    #[arg(long)]
    pub heldout_count: Option<usize>,
    #[arg(long)]
    pub video_count: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub label_noise: Option<f64>,
    /// `raw` or `ppm`.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Split to score.
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',')]
    pub resolutions: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<usize>>,
    /// Training-set sizes; `full` keeps every sample.
    #[arg(long, value_delimiter = ',', value_parser = parse_train_size)]
    pub train_sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_fps)]
    pub fps_list: Option<Vec<f64>>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Test fixture: negate the convolution kernel gradient.
    #[arg(long, hide = true)]
    pub inject_conv_fault: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics log written by pretrain or transfer.
    #[arg(long)]
    pub metrics: PathBuf,
    /// Directory for the per-head plot files (default: next to the log).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_fps(s: &str) -> std::result::Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad fps {s:?}"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad fps {s:?}"))?;
            a / b
        }
        None => s.trim().parse().map_err(|_| format!("bad fps {s:?}"))?,
    };
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("fps must be positive, got {s:?}"))
    }
}

fn parse_policy(s: &str) -> std::result::Result<FreezePolicy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_depth(s: &str) -> std::result::Result<usize, String> {
    match s.parse() {
        Ok(d @ 2..=5) => Ok(d),
        _ => Err(format!("depth must be 2, 3, 4 or 5, got {s:?}")),
    }
}

fn parse_resolution(s: &str) -> std::result::Result<usize, String> {
    match s.parse() {
        Ok(r @ (32 | 64 | 128 | 256)) => Ok(r),
        _ => Err(format!("resolution must be 32, 64, 128 or 256, got {s:?}")),
    }
}

fn parse_init(s: &str) -> std::result::Result<Init, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_label_mode(s: &str) -> std::result::Result<LabelMode, String> {
    match s {
        "single" => Ok(LabelMode::Single),
        "multi" => Ok(LabelMode::Multi),
        _ => Err(format!("label mode must be single or multi, got {s:?}")),
    }
}

fn parse_train_size(s: &str) -> std::result::Result<usize, String> {
    if s == "full" {
        Ok(0)
    } else {
        s.parse().map_err(|_| format!("bad training size {s:?}"))
    }
}

impl CommonArgs {
    fn resolve(&self, command: &str) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_toml(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => RunConfig::default(),
        };
        c.command = command.to_string();
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(c.out, self.out);
        if self.run_name.is_some() {
            c.run_name = self.run_name.clone();
        }
        set!(c.seed, self.seed);
        set!(c.arch.depth, self.depth);
        set!(c.arch.resolution, self.resolution);
        set!(c.arch.fc1_width, self.fc1_width);
        set!(c.arch.fc2_width, self.fc2_width);
        set!(c.arch.kernel_divisor, self.channel_div);
        set!(c.arch.dropout, self.dropout);
        set!(c.arch.init, self.weight_init);
        set!(c.arch.video_label_mode, self.video_labels);
        set!(c.train.epochs, self.epochs);
        set!(c.train.learning_rate, self.lr);
        set!(c.train.momentum, self.momentum);
        set!(c.train.weight_decay, self.weight_decay);
        set!(c.train.batch_size, self.batch_size);
        set!(c.train.eval_every, self.eval_every);
        if self.no_augment_crops {
            c.train.augment = false;
        }
        if self.fps.is_some() {
            c.data.fps = self.fps;
        }
        set!(c.transfer.policy, self.policy);
        set!(c.transfer.init, self.init);
        if self.augment.is_some() {
            c.transfer.augment = self.augment.clone();
        }
        for (dst, src) in [
            (&mut c.data.images, &self.images),
            (&mut c.data.heldout, &self.heldout),
            (&mut c.data.videos, &self.videos),
            (&mut c.data.checkpoint, &self.checkpoint),
        ] {
            if src.is_some() {
                *dst = src.clone();
            }
        }
        if self.mean_subtract {
            c.data.mean_subtract = true;
        }
        c.train.seed = c.seed;
        c.train.validate()?;
        Ok(c)
    }
}

/// Parse arguments, run the command, and map the outcome to an exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Parse { .. } | Error::Validation { .. } | Error::Config(_) => EXIT_INPUT,
        Error::Incompatible { .. } => EXIT_INCOMPATIBLE,
        _ => EXIT_FAILURE,
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Synth(a) => {
            let mut c = a.common.resolve("synth")?;
            let s = &mut c.synth;
            set_opt(&mut s.corpus.class_count, a.classes);
            set_opt(&mut s.corpus.image_domain_size, a.image_count);
            set_opt(&mut s.heldout_count, a.heldout_count);
            set_opt(&mut s.corpus.video_count, a.video_count);
            set_opt(&mut s.corpus.frames_per_video, a.frames);
            set_opt(&mut s.corpus.noise, a.noise);
            set_opt(&mut s.corpus.label_noise, a.label_noise);
            if let Some(f) = a.format {
                s.format = f;
            }
            s.corpus.seed = c.seed;
            s.corpus.resolution = c.arch.resolution;
            cmd_synth(&c).map(|_| EXIT_OK)
        }
        Command::Pretrain(a) => cmd_pretrain(&a.resolve("pretrain")?).map(|_| EXIT_OK),
        Command::Transfer(a) => cmd_transfer(&a.resolve("transfer")?).map(|_| EXIT_OK),
        Command::Eval(a) => {
            let split = Split::from_tag(&a.split)
                .ok_or_else(|| Error::config(format!("unknown split {:?}", a.split)))?;
            cmd_eval(&a.common.resolve("eval")?, split).map(|_| EXIT_OK)
        }
        Command::Sweep(a) => {
            let mut c = a.common.resolve("sweep")?;
            set_opt(&mut c.sweep.resolutions, a.resolutions);
            set_opt(&mut c.sweep.depths, a.depths);
            set_opt(&mut c.sweep.train_sizes, a.train_sizes);
            set_opt(&mut c.sweep.fps_list, a.fps_list);
            set_opt(&mut c.sweep.workers, a.workers);
            cmd_sweep(&c).map(|_| EXIT_OK)
        }
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Report(a) => cmd_report(&a).map(|_| EXIT_OK),
    }
}

fn set_opt<T>(dst: &mut T, src: Option<T>) {
    if let Some(v) = src {
        *dst = v;
    }
}

/// Create the run directory and save the resolved config into it.
pub fn prepare_run_dir(c: &RunConfig) -> Result<PathBuf> {
    let name = c
        .run_name
        .clone()
        .unwrap_or_else(|| format!("{}-{}", c.command, chrono::Local::now().format("%Y%m%d-%H%M%S")));
    let dir = c.out.join(name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let text = c.to_toml()?;
    info!("resolved config\n{text}");
    write_file(&dir.join("config.toml"), &text)?;
    Ok(dir)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::config(format!("--{what} is required")))
}

/// Column-aligned text and CSV renderings of one results table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for r in &self.rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    s.push_str("  ");
                }
                write!(s, "{c:<w$}").unwrap();
            }
            s.trim_end().to_string() + "\n"
        };
        let mut s = line(&self.headers);
        s.push_str(&line(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>()));
        for r in &self.rows {
            s.push_str(&line(r));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.headers.join(",") + "\n";
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let headers: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::format("empty table"))?
            .split(',')
            .map(str::to_string)
            .collect();
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        Ok(Self { headers, rows })
    }

    fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        write_file(&dir.join(format!("{stem}.txt")), &self.to_text())?;
        write_file(&dir.join(format!("{stem}.csv")), &self.to_csv())
    }
}

fn fmt4(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    write_file(&dir.join("report.txt"), &report.to_text())?;
    write_file(&dir.join("report.csv"), &report.to_csv())
}

fn log_epochs(rows: &[EpochRecord]) {
    for r in rows {
        info!(
            "epoch {} head {} train_loss {} heldout_loss {} heldout_metric {}",
            r.epoch,
            r.head,
            fmt4(r.train_loss),
            fmt4(r.heldout_loss),
            fmt4(r.heldout_metric)
        );
    }
}

fn save_image(img: &crate::tensor::Tensor, path: &Path, format: &str) -> Result<()> {
    let bytes = match format {
        "ppm" => encode_ppm(img)?,
        _ => img.to_bytes(),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_files(ds: &Dataset, dir: &Path, prefix: &str, format: &str) -> Result<Dataset> {
    let ext = if format == "ppm" { "ppm" } else { "dcnt" };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries = ds
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let ImageSource::Memory(t) = &e.source else {
                return Ok(e.clone());
            };
            let path = dir.join(format!("{prefix}{i:05}.{ext}"));
            save_image(t, &path, format)?;
            Ok(Entry { source: ImageSource::Path(path), ..e.clone() })
        })
        .collect::<Result<_>>()?;
    Dataset::new(ds.class_count, entries)
}

/// Write the synthetic corpus as image files plus `images.txt`,
/// `heldout.txt` and `videos.txt` manifests.
pub fn cmd_synth(c: &RunConfig) -> Result<PathBuf> {
    if !matches!(c.synth.format.as_str(), "raw" | "ppm") {
        return Err(Error::config(format!("unknown image format {:?}", c.synth.format)));
    }
    let dir = prepare_run_dir(c)?;
    let corpus = &c.synth.corpus;
    let out = synth_two_domain(corpus)?;
    let format = c.synth.format.as_str();
    let images = to_files(&out.images, &dir.join("images"), "img", format)?;
    write_manifest(&images, &dir.join("images.txt"))?;
    if c.synth.heldout_count > 0 {
        let held = synth_images(corpus, c.synth.heldout_count, 2)?;
        let held = to_files(&held, &dir.join("heldout"), "img", format)?;
        write_manifest(&held, &dir.join("heldout.txt"))?;
    }
    let ext = if format == "ppm" { "ppm" } else { "dcnt" };
    let mut videos = Vec::with_capacity(out.videos.len());
    for v in &out.videos {
        let vdir = dir.join("videos").join(&v.id);
        fs::create_dir_all(&vdir).map_err(|e| Error::io(&vdir, e))?;
        let frames = v
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let path = vdir.join(format!("f{i:04}.{ext}"));
                if let ImageSource::Memory(t) = &f.source {
                    save_image(t, &path, format)?;
                }
                Ok(Frame { timestamp: f.timestamp, source: ImageSource::Path(path) })
            })
            .collect::<Result<_>>()?;
        videos.push(VideoRecord { frames, ..v.clone() });
    }
    write_video_manifest(corpus.class_count, &videos, &dir.join("videos.txt"))?;
    println!(
        "wrote {} images, {} videos to {}",
        images.len(),
        videos.len(),
        dir.display()
    );
    Ok(dir)
}

fn load_images(path: &Path, resolution: usize) -> Result<Dataset> {
    let ds = load_manifest(path)?;
    if ds.is_empty() {
        return Err(Error::config(format!("{} has no samples", path.display())));
    }
    ds.materialize(resolution)
}

fn load_videos(path: &Path, resolution: usize) -> Result<(usize, Vec<VideoRecord>)> {
    let (k, videos) = load_video_manifest(path)?;
    let videos = videos
        .into_iter()
        .map(|v| {
            let frames = v
                .frames
                .iter()
                .map(|f| {
                    let t = f.source.load(resolution)?;
                    Ok(Frame { timestamp: f.timestamp, source: ImageSource::Memory(std::sync::Arc::new(t)) })
                })
                .collect::<Result<_>>()?;
            Ok(VideoRecord { frames, ..v })
        })
        .collect::<Result<_>>()?;
    Ok((k, videos))
}

/// Train the image head from random initialization; writes
/// `checkpoint.bin`, `metrics.csv` and (with a held-out set) `report.*`.
pub fn cmd_pretrain(c: &RunConfig) -> Result<PathBuf> {
    let images_path = require(&c.data.images, "images")?;
    let res = c.arch.resolution;
    let images = load_images(images_path, res)?;
    let heldout = c.data.heldout.as_deref().map(|p| load_images(p, res)).transpose()?;
    let mut spec = c.arch.build(vec![HeadSpec::single(IMAGE_HEAD, images.class_count)])?;
    if c.data.mean_subtract {
        spec.input_mean = Some(images.channel_means(res)?);
    }
    let dir = prepare_run_dir(c)?;
    let params = init_params_with(&spec, &mut ChaCha8Rng::seed_from_u64(c.seed), c.arch.init)?;
    let data = TrainData {
        images,
        frames: Dataset::default(),
        heldout: heldout
            .map(|d| vec![HeldOut::Images { head: IMAGE_HEAD.into(), dataset: d }])
            .unwrap_or_default(),
    };
    let out = train(&spec, params, &data, &c.train, log_epochs)?;
    save_checkpoint(&spec, &out.params, &dir.join("checkpoint.bin"))?;
    write_file(&dir.join("metrics.csv"), &format_metrics_log(&out.records))?;
    if let Some(r) = out.final_reports.get(IMAGE_HEAD) {
        write_report(&dir, r)?;
        print!("{}", r.to_text());
    }
    println!("run directory {}", dir.display());
    Ok(dir)
}

fn video_head(c: &RunConfig, class_count: usize) -> HeadSpec {
    HeadSpec::new(VIDEO_HEAD, class_count, c.arch.video_label_mode)
}

/// Fine-tune on training-split video frames (optionally mixed with an image
/// set), evaluate on the test split, and append a row to the shared
/// `transfer_results` table next to the run directory.
pub fn cmd_transfer(c: &RunConfig) -> Result<PathBuf> {
    let videos_path = require(&c.data.videos, "videos")?;
    let res = c.arch.resolution;
    let (k, videos) = load_videos(videos_path, res)?;
    let fps = c.data.fps.unwrap_or(1.0);
    let frames = frame_dataset(&videos, Split::Train, fps, k)?;
    if frames.is_empty() {
        return Err(Error::config("no training frames in the video manifest"));
    }
    let augment = c.transfer.augment.as_deref().map(|p| load_images(p, res)).transpose()?;
    let mut heads = Vec::new();
    if let Some(a) = &augment {
        heads.push(HeadSpec::single(IMAGE_HEAD, a.class_count));
    }
    heads.push(video_head(c, k));
    let mut spec = c.arch.build(heads)?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let pretrained = c.transfer.init != "random";
    let dir = prepare_run_dir(c)?;
    let mut params = if pretrained {
        let source = load_checkpoint(Path::new(&c.transfer.init))?;
        spec.input_mean = source.spec.input_mean.clone();
        let (params, report) = transplant(&source, &spec, &mut rng, c.arch.init)?;
        write_file(&dir.join("transplant.txt"), &report.to_text())?;
        params
    } else {
        if c.data.mean_subtract {
            spec.input_mean = Some(frames.channel_means(res)?);
        }
        init_params_with(&spec, &mut rng, c.arch.init)?
    };
    apply_freeze_policy(&mut params, c.transfer.policy);
    let data = TrainData {
        images: augment.unwrap_or_default(),
        frames,
        heldout: vec![HeldOut::Videos { head: VIDEO_HEAD.into(), videos: videos.clone(), split: Split::Test }],
    };
    let out = train(&spec, params, &data, &c.train, log_epochs)?;
    save_checkpoint(&spec, &out.params, &dir.join("checkpoint.bin"))?;
    write_file(&dir.join("metrics.csv"), &format_metrics_log(&out.records))?;
    let report = out
        .final_reports
        .get(VIDEO_HEAD)
        .cloned()
        .ok_or_else(|| Error::config("no test videos to evaluate"))?;
    write_report(&dir, &report)?;

    let row = vec![
        c.arch.depth.to_string(),
        if pretrained { "pretrained".into() } else { "random".into() },
        if data.images.is_empty() { "video".into() } else { "video + image".into() },
        match c.transfer.policy {
            FreezePolicy::FcOnly => "FC".into(),
            FreezePolicy::FcPlusConv => "FC+CONV".into(),
        },
        fmt4(report.map),
    ];
    let mut single = Table::new(&TRANSFER_HEADERS);
    single.rows.push(row.clone());
    single.write(&dir, "results")?;
    let shared = c.out.join("transfer_results.csv");
    let mut table = match fs::read_to_string(&shared) {
        Ok(text) => Table::from_csv(&text)?,
        Err(_) => Table::new(&TRANSFER_HEADERS),
    };
    table.rows.push(row);
    table.write(&c.out, "transfer_results")?;
    print!("{}", single.to_text());
    println!("run directory {}", dir.display());
    Ok(dir)
}

const TRANSFER_HEADERS: [&str; 5] = ["depth", "initialization", "training_set", "update", "map"];

/// Late-fusion evaluation of a checkpoint on one video split.
pub fn cmd_eval(c: &RunConfig, split: Split) -> Result<PathBuf> {
    let ckpt_path = require(&c.data.checkpoint, "checkpoint")?;
    let videos_path = require(&c.data.videos, "videos")?;
    let ckpt = load_checkpoint(ckpt_path)?;
    let res = ckpt.spec.input_resolution;
    let (k, videos) = load_videos(videos_path, res)?;
    let head = match ckpt.spec.head_index(VIDEO_HEAD) {
        Some(h) => h,
        None if ckpt.spec.heads.len() == 1 => 0,
        None => return Err(Error::config("checkpoint has no video head")),
    };
    let h = &ckpt.spec.heads[head];
    if h.class_count != k {
        return Err(Error::Incompatible {
            layer: format!("head:{}", h.name),
            source_desc: format!("checkpoint head with {} classes", h.class_count),
            target_desc: format!("video manifest with {k} classes"),
        });
    }
    let net = Network::new(&ckpt.spec, &ckpt.params)?;
    let report = evaluate_split(&net, head, &videos, split)?;
    let dir = prepare_run_dir(c)?;
    write_report(&dir, &report)?;
    print!("{}", report.to_text());
    println!("run directory {}", dir.display());
    Ok(dir)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    resolution: usize,
    depth: usize,
    train_size: usize,
    fps: Option<f64>,
}

const SWEEP_HEADERS: [&str; 11] = [
    "resolution", "depth", "train_size", "fps", "samples", "epochs", "train_loss", "test_loss", "metric",
    "value", "status",
];

enum SweepTask {
    Images { train: BTreeMap<usize, Dataset>, test: BTreeMap<usize, Dataset> },
    Videos { class_count: usize, videos: BTreeMap<usize, Vec<VideoRecord>> },
}

fn run_cell(c: &RunConfig, task: &SweepTask, cell: Cell) -> Vec<String> {
    let mut row = vec![
        cell.resolution.to_string(),
        cell.depth.to_string(),
        if cell.train_size == 0 { "full".into() } else { cell.train_size.to_string() },
        cell.fps.map(|f| format!("{f}")).unwrap_or_else(|| "-".into()),
    ];
    let builder = c.arch.builder(cell.depth, cell.resolution);
    if !supported_architectures().contains(&(cell.depth, cell.resolution)) {
        row.extend(["-", "-", "-", "-", "-", "-"].map(String::from));
        row.push("infeasible (unsupported depth for this resolution)".into());
        return row;
    }
    let result = (|| -> Result<Vec<String>> {
        let (heads, data, metric) = match task {
            SweepTask::Images { train, test } => {
                let tr = &train[&cell.resolution];
                let tr = if cell.train_size == 0 { tr.clone() } else { tr.truncated(cell.train_size) };
                let heads = vec![HeadSpec::single(IMAGE_HEAD, tr.class_count)];
                let held = test.get(&cell.resolution).map(|d| HeldOut::Images { head: IMAGE_HEAD.into(), dataset: d.clone() });
                (heads, TrainData { images: tr, frames: Dataset::default(), heldout: held.into_iter().collect() }, "top1")
            }
            SweepTask::Videos { class_count, videos } => {
                let vids = &videos[&cell.resolution];
                let mut train_vids: Vec<VideoRecord> = vids.iter().filter(|v| v.split == Split::Train).cloned().collect();
                if cell.train_size > 0 {
                    train_vids.truncate(cell.train_size);
                }
                let frames = frame_dataset(&train_vids, Split::Train, cell.fps.unwrap_or(1.0), *class_count)?;
                let heads = vec![video_head(c, *class_count)];
                let held = HeldOut::Videos { head: VIDEO_HEAD.into(), videos: vids.clone(), split: Split::Test };
                (heads, TrainData { images: Dataset::default(), frames, heldout: vec![held] }, "map")
            }
        };
        let spec = build_with(&builder, heads)?;
        let params = init_params_with(&spec, &mut ChaCha8Rng::seed_from_u64(c.seed), c.arch.init)?;
        let samples = data.images.len() + data.frames.len();
        let out = train(&spec, params, &data, &c.train, |_| {})?;
        let last = out.records.last();
        Ok(vec![
            samples.to_string(),
            c.train.epochs.to_string(),
            fmt4(last.and_then(|r| r.train_loss)),
            fmt4(last.and_then(|r| r.heldout_loss)),
            metric.into(),
            fmt4(last.and_then(|r| r.heldout_metric)),
            "ok".into(),
        ])
    })();
    match result {
        Ok(cols) => row.extend(cols),
        Err(e) => {
            let status = match &e {
                Error::Infeasible { .. } => format!("infeasible ({e})"),
                _ => format!("failed ({e})"),
            };
            warn!("sweep cell {cell:?}: {status}");
            row.extend(["-", "-", "-", "-", "-", "-"].map(String::from));
            row.push(status.replace(',', ";"));
        }
    }
    row
}

/// One row per (resolution, depth, training size, fps) cell. Uses the video
/// manifest when one is given (fps applies), otherwise the image manifests.
pub fn cmd_sweep(c: &RunConfig) -> Result<PathBuf> {
    let s = &c.sweep;
    let task = if let Some(v) = &c.data.videos {
        let mut by_res = BTreeMap::new();
        let mut k = 0;
        for &r in &s.resolutions {
            let (kk, vids) = load_videos(v, r)?;
            k = kk;
            by_res.insert(r, vids);
        }
        SweepTask::Videos { class_count: k, videos: by_res }
    } else {
        let images = require(&c.data.images, "images or --videos")?;
        let (mut train_sets, mut test_sets) = (BTreeMap::new(), BTreeMap::new());
        for &r in &s.resolutions {
            train_sets.insert(r, load_images(images, r)?);
            if let Some(h) = &c.data.heldout {
                test_sets.insert(r, load_images(h, r)?);
            }
        }
        SweepTask::Images { train: train_sets, test: test_sets }
    };
    let fps: Vec<Option<f64>> = match task {
        SweepTask::Videos { .. } => s.fps_list.iter().map(|&f| Some(f)).collect(),
        SweepTask::Images { .. } => vec![None],
    };
    let mut cells = Vec::new();
    for &resolution in &s.resolutions {
        for &depth in &s.depths {
            for &train_size in &s.train_sizes {
                for &f in &fps {
                    cells.push(Cell { resolution, depth, train_size, fps: f });
                }
            }
        }
    }
    let dir = prepare_run_dir(c)?;
    let rows: Mutex<Vec<Option<Vec<String>>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..s.workers.max(1).min(cells.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&cell) = cells.get(i) else { break };
                info!("sweep cell {}/{}: {cell:?}", i + 1, cells.len());
                let row = run_cell(c, &task, cell);
                rows.lock().expect("sweep worker panicked")[i] = Some(row);
            });
        }
    });
    let mut table = Table::new(&SWEEP_HEADERS);
    table.rows = rows.into_inner().expect("sweep worker panicked").into_iter().flatten().collect();
    table.write(&dir, "sweep")?;
    print!("{}", table.to_text());
    println!("run directory {}", dir.display());
    Ok(dir)
}

fn gradcheck_table(results: &[CheckResult]) -> Table {
    let mut t = Table::new(&["layer", "max_rel_error", "checked", "status"]);
    for r in results {
        t.rows.push(vec![
            r.name.clone(),
            format!("{:.3e}", r.max_rel_error),
            r.checked.to_string(),
            if r.passed() { "PASS".into() } else { "FAIL".into() },
        ]);
    }
    t
}

/// Run the finite-difference suite; exit status 1 if any check fails.
pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<i32> {
    let results = if a.inject_conv_fault {
        gradcheck::run_suite_with_conv(a.seed, &gradcheck::conv_backward_sign_fault)?
    } else {
        gradcheck::run_suite(a.seed)?
    };
    let text = gradcheck_table(&results).to_text();
    print!("{text}");
    if let Some(p) = &a.output {
        write_file(p, &text)?;
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        eprintln!("gradient check failed: {}", failed.join(", "));
        Ok(EXIT_FAILURE)
    }
}

/// Final-epoch table per head and one whitespace-separated plot file per
/// head (`epoch train_loss heldout_loss heldout_metric`, `nan` for gaps).
pub fn cmd_report(a: &ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&a.metrics).map_err(|e| Error::io(&a.metrics, e))?;
    let table = Table::from_csv(&text)?;
    if table.headers.join(",") != crate::trainer::METRICS_HEADER {
        return Err(Error::format(format!("{} is not a metrics log", a.metrics.display())));
    }
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.metrics.parent().map(Path::to_path_buf).unwrap_or_default());
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut per_head: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
    for r in &table.rows {
        if r.len() != 5 {
            return Err(Error::format(format!("metrics row {r:?} has {} fields", r.len())));
        }
        per_head.entry(r[1].clone()).or_default().push(r.clone());
    }
    let mut summary = Table::new(&["head", "epochs", "train_loss", "heldout_loss", "heldout_metric"]);
    for (head, rows) in &per_head {
        let mut plot = String::from("# epoch train_loss heldout_loss heldout_metric\n");
        for r in rows {
            let f = |s: &String| if s.is_empty() { "nan".to_string() } else { s.clone() };
            writeln!(plot, "{} {} {} {}", r[0], f(&r[2]), f(&r[3]), f(&r[4])).unwrap();
        }
        write_file(&out.join(format!("plot_{}.dat", head.replace(':', "_"))), &plot)?;
        let last = rows.last().expect("non-empty group");
        let last_of = |col: usize| {
            rows.iter()
                .rev()
                .find(|r| !r[col].is_empty())
                .map(|r| r[col].clone())
                .unwrap_or_else(|| "-".into())
        };
        summary.rows.push(vec![head.clone(), last[0].clone(), last_of(2), last_of(3), last_of(4)]);
    }
    print!("{}", summary.to_text());
    write_file(&out.join("summary.txt"), &summary.to_text())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.command = "transfer".into();
        c.data.fps = Some(4.0);
        c.transfer.policy = FreezePolicy::FcOnly;
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "seed = 5\n[train]\nepochs = 3\nlearning_rate = 0.5\n").unwrap();
        let args = CommonArgs {
            config: Some(p),
            epochs: Some(7),
            ..CommonArgs::default()
        };
        let c = args.resolve("pretrain").unwrap();
        assert_eq!((c.seed, c.train.seed, c.train.epochs, c.train.learning_rate), (5, 5, 7, 0.5));
    }

    #[test]
    fn fps_parsing() {
        assert_eq!(parse_fps("4").unwrap(), 4.0);
        assert_eq!(parse_fps("1/2").unwrap(), 0.5);
        assert!(parse_fps("0").is_err());
        assert!(parse_fps("x").is_err());
    }

    #[test]
    fn table_rendering() {
        let mut t = Table::new(&["a", "bbb"]);
        t.rows.push(vec!["long".into(), "1".into()]);
        assert_eq!(t.to_text(), "a     bbb\n----  ---\nlong  1\n");
        assert_eq!(Table::from_csv(&t.to_csv()).unwrap(), t);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["dcnv", "pretrain", "--depth", "7"]), EXIT_INPUT);
        assert_eq!(run(["dcnv", "frobnicate"]), EXIT_INPUT);
    }
}
