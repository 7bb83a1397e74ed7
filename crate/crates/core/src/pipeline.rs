//! Stage composition, batch runs and channel comparison.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{IndexMask, Label, PointCloud};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::ground::{
    estimate_normals_with, fit_plane_ransac, region_grow_with_graph, select_road, NeighborGraph, PlaneModel,
};
use crate::lines::{fit_lines_projected, fit_lines_sequential, marking_labels, LineModel};
use crate::metrics::{aggregate, evaluate, EvalReport, ReportRow};
use crate::prefilter::prefilter;
use crate::threshold::{extract_candidates, Channel, ThresholdResult};

/// Wall-clock time spent in each stage, milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub prefilter_ms: f64,
    pub plane_ms: f64,
    pub region_ms: f64,
    pub threshold_ms: f64,
    pub lines_ms: f64,
    pub total_ms: f64,
}

/// Everything one frame produced. All masks index the input frame.
#[derive(Debug, Clone)]
pub struct FrameResult {
    pub frame_id: String,
    pub frame_len: usize,
    /// Valid returns.
    pub valid: IndexMask,
    pub prefiltered: IndexMask,
    pub plane: Option<PlaneModel>,
    pub plane_inliers: IndexMask,
    pub road: IndexMask,
    pub candidates: IndexMask,
    pub thresholds: Vec<ThresholdResult>,
    pub lines: Vec<LineModel>,
    pub labels: Vec<Label>,
    pub timings: StageTimings,
    /// First stage whose output was empty, if the run stopped early.
    pub stopped_after: Option<&'static str>,
}

impl FrameResult {
    fn empty(cloud: &PointCloud, valid: IndexMask) -> Self {
        let n = cloud.len();
        FrameResult {
            frame_id: cloud.frame_id().to_string(),
            frame_len: n,
            valid,
            prefiltered: IndexMask::empty(n),
            plane: None,
            plane_inliers: IndexMask::empty(n),
            road: IndexMask::empty(n),
            candidates: IndexMask::empty(n),
            thresholds: Vec::new(),
            lines: Vec::new(),
            labels: vec![Label::Other; n],
            timings: StageTimings::default(),
            stopped_after: None,
        }
    }

    /// `candidates ⊆ road ⊆ plane_inliers ⊆ prefiltered ⊆ valid`.
    pub fn check_nesting(&self) -> Result<()> {
        let chain = [
            ("candidates", &self.candidates),
            ("road", &self.road),
            ("plane inliers", &self.plane_inliers),
            ("prefiltered", &self.prefiltered),
            ("valid", &self.valid),
        ];
        for w in chain.windows(2) {
            if w[0].1.parent_len() != self.frame_len || !w[0].1.is_subset_of(w[1].1) {
                return Err(Error::Structural(format!("{} not contained in {}", w[0].0, w[1].0)));
            }
        }
        Ok(())
    }

    pub fn accepted_lines(&self) -> impl Iterator<Item = &LineModel> {
        self.lines.iter().filter(|l| l.accepted)
    }

    /// Equality of every output except timings.
    pub fn same_output(&self, other: &FrameResult) -> bool {
        self.frame_id == other.frame_id
            && self.frame_len == other.frame_len
            && self.valid == other.valid
            && self.prefiltered == other.prefiltered
            && self.plane == other.plane
            && self.plane_inliers == other.plane_inliers
            && self.road == other.road
            && self.candidates == other.candidates
            && self.thresholds == other.thresholds
            && self.lines == other.lines
            && self.labels == other.labels
            && self.stopped_after == other.stopped_after
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Runs pre-filter, plane fit, region growing, adaptive threshold and line
/// fitting on one frame. A stage that leaves nothing to work on ends the
/// run early with an all-`other` labeling; stage failures carry the stage
/// name.
pub fn run_frame(cloud: &PointCloud, config: &PipelineConfig) -> Result<FrameResult> {
    config.validate()?;
    let start = Instant::now();
    let n = cloud.len();
    let mut r = FrameResult::empty(cloud, cloud.valid_mask());
    let finish = |mut r: FrameResult, stage: Option<&'static str>| -> Result<FrameResult> {
        r.stopped_after = stage;
        r.timings.total_ms = ms(start);
        r.check_nesting()?;
        Ok(r)
    };

    let t = Instant::now();
    r.prefiltered = prefilter(cloud, &config.prefilter).map_err(|e| e.in_stage("prefilter"))?;
    r.timings.prefilter_ms = ms(t);
    if r.prefiltered.is_empty() {
        return finish(r, Some("prefilter"));
    }

    let t = Instant::now();
    let g = &config.ground;
    let sub_b = cloud.select(&r.prefiltered)?;
    let plane = fit_plane_ransac(&sub_b, g.th_plane, g.max_iter, g.seed).map_err(|e| e.in_stage("plane"))?;
    r.plane_inliers = r.prefiltered.compose(&plane.inliers)?;
    r.plane = Some(PlaneModel {
        inliers: r.plane_inliers.clone(),
        ..plane
    });
    r.timings.plane_ms = ms(t);
    if r.plane_inliers.is_empty() {
        return finish(r, Some("plane"));
    }

    let t = Instant::now();
    let sub_c = cloud.select(&r.plane_inliers)?;
    let road_local = (|| {
        let pos: Vec<[f64; 3]> = sub_c.points().iter().map(|p| p.position()).collect();
        let graph = NeighborGraph::build(&pos, g.k_neighbors)?;
        let normals = estimate_normals_with(&sub_c, &graph)?;
        let clusters = region_grow_with_graph(&sub_c, &normals, &graph, &g.region())?;
        select_road(&clusters, &sub_c, g.nadir_corridor, g.road_selection)
    })()
    .map_err(|e| e.in_stage("region"))?;
    r.road = r.plane_inliers.compose(&road_local)?;
    r.timings.region_ms = ms(t);
    if r.road.is_empty() {
        return finish(r, Some("region"));
    }

    let t = Instant::now();
    let sub_r = cloud.select(&r.road)?;
    let cand = extract_candidates(&sub_r, &config.threshold).map_err(|e| e.in_stage("threshold"))?;
    r.candidates = r.road.compose(&cand.mask)?;
    r.thresholds = cand.rings;
    r.timings.threshold_ms = ms(t);
    if r.candidates.is_empty() {
        return finish(r, Some("threshold"));
    }

    let t = Instant::now();
    let sub_k = cloud.select(&r.candidates)?;
    let lines = if config.lines.project_to_plane {
        fit_lines_projected(&sub_k, r.plane.as_ref().expect("plane set above"), &config.lines)
    } else {
        fit_lines_sequential(&sub_k, &config.lines)
    }
    .map_err(|e| e.in_stage("lines"))?;
    r.lines = lines
        .iter()
        .map(|l| l.reindexed(&r.candidates))
        .collect::<Result<_>>()?;
    r.labels = marking_labels(&r.lines, n)?;
    r.timings.lines_ms = ms(t);
    finish(r, None)
}

/// A frame handed to the batch runner.
#[derive(Debug, Clone)]
pub struct LoadedFrame {
    pub cloud: PointCloud,
    pub truth: Option<Vec<Label>>,
}

/// Per-frame line of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub index: usize,
    pub frame_id: String,
    pub candidates: usize,
    pub accepted_lines: usize,
    pub predicted_markings: usize,
    pub timings: StageTimings,
    pub score: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub channel: Channel,
    pub frames: Vec<FrameSummary>,
    /// Micro-averaged over successful frames that have ground truth.
    pub report: Option<EvalReport>,
}

impl BatchReport {
    pub fn failures(&self) -> impl Iterator<Item = &FrameSummary> {
        self.frames.iter().filter(|f| f.error.is_some())
    }

    /// Summary fields that do not depend on timing.
    pub fn same_output(&self, other: &BatchReport) -> bool {
        self.channel == other.channel
            && self.report == other.report
            && self.frames.len() == other.frames.len()
            && self.frames.iter().zip(&other.frames).all(|(a, b)| {
                (
                    a.index,
                    &a.frame_id,
                    a.candidates,
                    a.accepted_lines,
                    a.predicted_markings,
                    &a.score,
                    &a.error,
                ) == (
                    b.index,
                    &b.frame_id,
                    b.candidates,
                    b.accepted_lines,
                    b.predicted_markings,
                    &b.score,
                    &b.error,
                )
            })
    }
}

fn summarize(index: usize, frame: Result<LoadedFrame>, config: &PipelineConfig) -> FrameSummary {
    let mut s = FrameSummary {
        index,
        frame_id: String::new(),
        candidates: 0,
        accepted_lines: 0,
        predicted_markings: 0,
        timings: StageTimings::default(),
        score: None,
        error: None,
    };
    let outcome = frame.and_then(|f| {
        s.frame_id = f.cloud.frame_id().to_string();
        let r = run_frame(&f.cloud, config)?;
        let score = f
            .truth
            .as_deref()
            .map(|t| evaluate(&r.labels, t))
            .transpose()?
            .map(|e| with_frame_id(e, &s.frame_id).with_channel(config.threshold.channel));
        Ok((r, score))
    });
    match outcome {
        Ok((r, score)) => {
            s.candidates = r.candidates.len();
            s.accepted_lines = r.accepted_lines().count();
            s.predicted_markings = r.labels.iter().filter(|l| l.is_marking()).count();
            s.timings = r.timings;
            s.score = score;
        }
        Err(e) => s.error = Some(e.to_string()),
    }
    s
}

fn with_frame_id(mut e: EvalReport, id: &str) -> EvalReport {
    for f in &mut e.frames {
        f.frame_id = id.to_string();
    }
    e
}

fn in_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(job))
}

fn collect_report(channel: Channel, frames: Vec<FrameSummary>) -> Result<BatchReport> {
    let scored: Vec<EvalReport> = frames.iter().filter_map(|f| f.score.clone()).collect();
    let report = if scored.is_empty() {
        None
    } else {
        Some(aggregate(&scored)?)
    };
    Ok(BatchReport {
        channel,
        frames,
        report,
    })
}

/// Runs `n_frames` frames obtained from `load`, up to `config.workers` at a
/// time. A frame that fails to load or process is recorded and skipped.
pub fn run_batch<F>(n_frames: usize, load: F, config: &PipelineConfig) -> Result<BatchReport>
where
    F: Fn(usize) -> Result<LoadedFrame> + Sync,
{
    if n_frames == 0 {
        return Err(Error::Usage("batch needs at least one frame".into()));
    }
    config.validate()?;
    let frames = in_pool(config.workers, || {
        (0..n_frames)
            .into_par_iter()
            .map(|k| summarize(k, load(k), config))
            .collect::<Vec<_>>()
    })?;
    collect_report(config.threshold.channel, frames)
}

/// Two batch runs over the same frames that differ only in the histogram
/// channel. Each frame is loaded once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelComparison {
    pub reflectivity: BatchReport,
    pub intensity: BatchReport,
}

impl ChannelComparison {
    pub fn rows(&self, dataset: &str) -> Vec<ReportRow> {
        [&self.reflectivity, &self.intensity]
            .into_iter()
            .filter_map(|b| b.report.as_ref().map(|r| ReportRow::new(dataset, r)))
            .collect()
    }
}

pub fn compare_channels<F>(n_frames: usize, load: F, config: &PipelineConfig) -> Result<ChannelComparison>
where
    F: Fn(usize) -> Result<LoadedFrame> + Sync,
{
    if n_frames == 0 {
        return Err(Error::Usage("channel comparison needs at least one frame".into()));
    }
    config.validate()?;
    let refl = config.clone().with_channel(Channel::Reflectivity);
    let inte = config.clone().with_channel(Channel::Intensity);
    let pairs = in_pool(config.workers, || {
        (0..n_frames)
            .into_par_iter()
            .map(|k| match load(k) {
                Ok(f) => (summarize(k, Ok(f.clone()), &refl), summarize(k, Ok(f), &inte)),
                Err(e) => {
                    let msg = e.to_string();
                    (
                        summarize(k, Err(e), &refl),
                        summarize(k, Err(Error::Structural(msg)), &inte),
                    )
                }
            })
            .collect::<Vec<_>>()
    })?;
    let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(ChannelComparison {
        reflectivity: collect_report(Channel::Reflectivity, a)?,
        intensity: collect_report(Channel::Intensity, b)?,
    })
}
