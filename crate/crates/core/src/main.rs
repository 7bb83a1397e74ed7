//! `roadmark` command-line front end.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use roadmark::config::PipelineConfig;
use roadmark::io::{read_cloud, read_labels, write_cloud, write_labels, write_lines, Layout};
use roadmark::metrics::{evaluate, render_table, ReportRow};
use roadmark::pipeline::{compare_channels, run_batch, run_frame, BatchReport, LoadedFrame};
use roadmark::synth::{scene_frame, Profile};
use roadmark::threshold::Channel;
use roadmark::{Error, Result};

const CLOUD_EXT: &str = "cloud";
const TRUTH_EXT: &str = "truth";

#[derive(Parser)]
#[command(
    name = "roadmark",
    version,
    about = "Road-marking extraction from LIDAR point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process one cloud file and write labels, lines and a report.
    Run {
        /// Organized cloud file (binary or text layout).
        cloud: PathBuf,
        /// Ground-truth label sidecar to score against.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Process a directory of cloud files or a synthetic scene suite.
    Batch {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic scene suite on disk.
    Synth {
        /// Scene profile: test_track or highway.
        #[arg(long, default_value = "test_track")]
        profile: Profile,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving `<id>.cloud` and `<id>.truth` pairs.
        #[arg(long)]
        out: PathBuf,
        /// Payload layout of the written clouds: binary or text.
        #[arg(long, default_value = "binary")]
        layout: Layout,
    },
    /// Score a predicted label file against a ground-truth label file.
    Eval {
        /// Predicted `.labels` file.
        predicted: PathBuf,
        /// Ground-truth label file.
        truth: PathBuf,
        /// Also write the JSON report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the same frames with both histogram channels.
    CompareChannels {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML parameter file; missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Histogram channel: reflectivity or intensity.
    #[arg(long)]
    channel: Option<Channel>,
    /// Overrides the configured RANSAC seed; also seeds synthetic scenes.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for result files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Frames processed concurrently; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            c = c.with_seed(s);
        }
        if let Some(ch) = self.channel {
            c = c.with_channel(ch);
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        if self.out.is_some() {
            c.out_dir.clone_from(&self.out);
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct Source {
    /// Directory of `.cloud` files; a `<stem>.truth` sidecar is used as
    /// ground truth when present.
    dir: Option<PathBuf>,
    /// Generate frames of this scene profile instead of reading a directory.
    #[arg(long, conflicts_with = "dir")]
    profile: Option<Profile>,
    #[arg(long, default_value_t = 10)]
    frames: usize,
}

enum Frames {
    Files(Vec<PathBuf>),
    Suite { profile: Profile, n: usize, seed: u64 },
}

impl Frames {
    fn resolve(source: &Source, seed: u64) -> Result<(Frames, String)> {
        match (&source.dir, source.profile) {
            (Some(dir), None) => {
                let files = cloud_files(dir)?;
                let name = dir
                    .file_name()
                    .map_or_else(|| "frames".into(), |s| s.to_string_lossy().into_owned());
                Ok((Frames::Files(files), name))
            }
            (None, Some(profile)) => Ok((
                Frames::Suite {
                    profile,
                    n: source.frames,
                    seed,
                },
                profile.to_string(),
            )),
            _ => Err(Error::Usage("give either a directory or --profile".into())),
        }
    }

    fn len(&self) -> usize {
        match self {
            Frames::Files(f) => f.len(),
            Frames::Suite { n, .. } => *n,
        }
    }

    fn load(&self, k: usize) -> Result<LoadedFrame> {
        match self {
            Frames::Files(files) => {
                let cloud = read_cloud(&files[k])?;
                let sidecar = files[k].with_extension(TRUTH_EXT);
                let truth = sidecar
                    .exists()
                    .then(|| read_labels(&sidecar, Some(cloud.len())))
                    .transpose()?;
                Ok(LoadedFrame { cloud, truth })
            }
            Frames::Suite { profile, seed, .. } => {
                let f = scene_frame(*profile, *seed, k)?;
                Ok(LoadedFrame {
                    cloud: f.cloud,
                    truth: Some(f.truth.labels),
                })
            }
        }
    }
}

fn cloud_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let io_err = |e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.extension().is_some_and(|e| e == CLOUD_EXT) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Usage(format!("no .{CLOUD_EXT} files in {}", dir.display())));
    }
    Ok(files)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &pretty(value))
}

/// Writes to stdout, tolerating a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn pretty(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

fn run(cloud_path: &Path, truth: Option<&Path>, common: &Common) -> Result<()> {
    let config = common.config()?;
    let cloud = read_cloud(cloud_path)?;
    let truth = truth.map(|p| read_labels(p, Some(cloud.len()))).transpose()?;
    let r = run_frame(&cloud, &config)?;
    let score = truth
        .as_deref()
        .map(|t| evaluate(&r.labels, t).map(|e| e.with_channel(config.threshold.channel)))
        .transpose()?;

    #[derive(Serialize)]
    struct RunReport<'a> {
        frame_id: &'a str,
        channel: Channel,
        valid: usize,
        prefiltered: usize,
        plane_inliers: usize,
        road: usize,
        candidates: usize,
        lines: usize,
        accepted_lines: usize,
        predicted_markings: usize,
        stopped_after: Option<&'static str>,
        timings: &'a roadmark::pipeline::StageTimings,
        score: Option<roadmark::metrics::EvalReport>,
    }
    let report = RunReport {
        frame_id: cloud.frame_id(),
        channel: config.threshold.channel,
        valid: r.valid.len(),
        prefiltered: r.prefiltered.len(),
        plane_inliers: r.plane_inliers.len(),
        road: r.road.len(),
        candidates: r.candidates.len(),
        lines: r.lines.len(),
        accepted_lines: r.accepted_lines().count(),
        predicted_markings: r.labels.iter().filter(|l| l.is_marking()).count(),
        stopped_after: r.stopped_after,
        timings: &r.timings,
        score,
    };
    let out = config
        .out_dir
        .unwrap_or_else(|| cloud_path.parent().map_or_else(PathBuf::new, Path::to_path_buf));
    create_dir(&out)?;
    let stem = cloud.frame_id();
    write_labels(&r.labels, out.join(format!("{stem}.labels")))?;
    write_lines(&r.lines, out.join(format!("{stem}.lines")))?;
    write_json(&out.join(format!("{stem}.json")), &report)?;
    emit(&pretty(&report));
    Ok(())
}

fn report_batch(b: &BatchReport) {
    for f in b.failures() {
        eprintln!(
            "frame {} ({}): {}",
            f.index,
            f.frame_id,
            f.error.as_deref().unwrap_or_default()
        );
    }
}

fn batch(source: &Source, common: &Common) -> Result<()> {
    let config = common.config()?;
    let (frames, name) = Frames::resolve(source, config.seed)?;
    let b = run_batch(frames.len(), |k| frames.load(k), &config)?;
    report_batch(&b);
    let rows: Vec<ReportRow> = b.report.iter().map(|r| ReportRow::new(&name, r)).collect();
    let table = render_table(&rows);
    if let Some(out) = &config.out_dir {
        create_dir(out)?;
        write_json(&out.join("batch.json"), &b)?;
        write_text(&out.join("summary.tsv"), &table)?;
    }
    emit(&table);
    if b.failures().count() == b.frames.len() {
        return Err(Error::Degenerate("every frame failed".into()));
    }
    Ok(())
}

fn compare(source: &Source, common: &Common) -> Result<()> {
    let config = common.config()?;
    let (frames, name) = Frames::resolve(source, config.seed)?;
    let cmp = compare_channels(frames.len(), |k| frames.load(k), &config)?;
    report_batch(&cmp.reflectivity);
    let table = render_table(&cmp.rows(&name));
    if let Some(out) = &config.out_dir {
        create_dir(out)?;
        write_json(&out.join("channels.json"), &cmp)?;
        write_text(&out.join("channels.tsv"), &table)?;
    }
    emit(&table);
    if cmp.reflectivity.failures().count() == cmp.reflectivity.frames.len() {
        return Err(Error::Degenerate("every frame failed".into()));
    }
    Ok(())
}

fn synth(profile: Profile, frames: usize, seed: u64, out: &Path, layout: Layout) -> Result<()> {
    if frames == 0 {
        return Err(Error::Usage("--frames must be at least 1".into()));
    }
    create_dir(out)?;
    for k in 0..frames {
        let f = scene_frame(profile, seed, k)?;
        let stem = f.cloud.frame_id().to_string();
        write_cloud(&f.cloud, out.join(format!("{stem}.{CLOUD_EXT}")), layout)?;
        write_labels(&f.truth.labels, out.join(format!("{stem}.{TRUTH_EXT}")))?;
    }
    emit(&format!("wrote {frames} {profile} frames to {}\n", out.display()));
    Ok(())
}

fn eval(predicted: &Path, truth: &Path, out: Option<&Path>) -> Result<()> {
    let t = read_labels(truth, None)?;
    let p = read_labels(predicted, Some(t.len()))?;
    let name = predicted
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut report = evaluate(&p, &t)?;
    for f in &mut report.frames {
        f.frame_id.clone_from(&name);
    }
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    emit(&pretty(&report));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { cloud, truth, common } => run(&cloud, truth.as_deref(), &common),
        Command::Batch { source, common } => batch(&source, &common),
        Command::Synth {
            profile,
            frames,
            seed,
            out,
            layout,
        } => synth(profile, frames, seed, &out, layout),
        Command::Eval { predicted, truth, out } => eval(&predicted, &truth, out.as_deref()),
        Command::CompareChannels { source, common } => compare(&source, &common),
    }
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
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
