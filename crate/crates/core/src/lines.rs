//! Sequential RANSAC line extraction over marking candidates.

use nalgebra::Vector3;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{IndexMask, Label, PointCloud};
use crate::error::{Error, Result};
use crate::ground::{covariance, symmetric_eigen, PlaneModel};
use crate::rng::{derive_seed, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineParams {
    /// Inlier distance to the infinite line, meters.
    pub th_lines: f64,
    pub max_lines: usize,
    /// A line needs strictly more supports than this to be accepted.
    pub min_support: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Fit on candidates projected onto the road plane.
    pub project_to_plane: bool,
}

impl Default for LineParams {
    fn default() -> Self {
        LineParams {
            th_lines: 0.15,
            max_lines: 10,
            min_support: 10,
            max_iter: 200,
            seed: 0,
            project_to_plane: false,
        }
    }
}

impl LineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.th_lines > 0.0) || self.max_lines == 0 || self.min_support == 0 || self.max_iter == 0 {
            return Err(Error::Config(
                "lines.th_lines, max_lines, min_support and max_iter must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineModel {
    pub anchor: [f64; 3],
    /// Unit direction with its first non-zero component positive.
    pub direction: [f64; 3],
    pub support: IndexMask,
    pub accepted: bool,
}

impl LineModel {
    /// Perpendicular distance from `p` to the infinite line.
    pub fn distance(&self, p: [f64; 3]) -> f64 {
        line_distance(&Vector3::from(self.anchor), &Vector3::from(self.direction), p)
    }

    /// Re-expresses the support through `outer`, the selection the line was
    /// fit on.
    pub fn reindexed(&self, outer: &IndexMask) -> Result<LineModel> {
        Ok(LineModel {
            support: outer.compose(&self.support)?,
            ..self.clone()
        })
    }
}

#[inline]
fn line_distance(anchor: &Vector3<f64>, dir: &Vector3<f64>, p: [f64; 3]) -> f64 {
    (Vector3::from(p) - anchor).cross(dir).norm()
}

fn canonical(dir: Vector3<f64>) -> Vector3<f64> {
    let d = dir.normalize();
    let first = d.iter().copied().find(|v| *v != 0.0).unwrap_or(1.0);
    if first < 0.0 {
        -d
    } else {
        d
    }
}

/// Fits up to `max_lines` lines one at a time on the valid points of
/// `candidates`, removing each line's supports before the next search.
///
/// Stops after `max_lines` lines, after a line with `min_support` or fewer
/// supports (kept in the output with `accepted == false`), or when fewer
/// than two points remain. Supports index into `candidates`.
pub fn fit_lines_sequential(candidates: &PointCloud, params: &LineParams) -> Result<Vec<LineModel>> {
    let pos: Vec<[f64; 3]> = candidates.points().iter().map(|p| p.position()).collect();
    let valid: Vec<usize> = candidates.valid_mask().into_indices();
    fit_lines_on(&pos, valid, params)
}

/// As [`fit_lines_sequential`] with candidates first projected onto `plane`.
pub fn fit_lines_projected(candidates: &PointCloud, plane: &PlaneModel, params: &LineParams) -> Result<Vec<LineModel>> {
    let pos: Vec<[f64; 3]> = candidates
        .points()
        .iter()
        .map(|p| plane.project(p.position()))
        .collect();
    let valid: Vec<usize> = candidates.valid_mask().into_indices();
    fit_lines_on(&pos, valid, params)
}

fn fit_lines_on(pos: &[[f64; 3]], mut remaining: Vec<usize>, params: &LineParams) -> Result<Vec<LineModel>> {
    params.validate()?;
    let th = params.th_lines;
    let mut lines = Vec::new();
    while lines.len() < params.max_lines && remaining.len() >= 2 {
        let line_seed = derive_seed(params.seed, lines.len() as u64);
        let count_near = |a: &Vector3<f64>, d: &Vector3<f64>| {
            remaining.iter().filter(|&&i| line_distance(a, d, pos[i]) <= th).count()
        };
        let best = (0..params.max_iter)
            .into_par_iter()
            .filter_map(|it| {
                let mut rng = stream_rng(line_seed, it as u64);
                let s = sample(&mut rng, remaining.len(), 2);
                let a = Vector3::from(pos[remaining[s.index(0)]]);
                let b = Vector3::from(pos[remaining[s.index(1)]]);
                let span = b - a;
                if !(span.norm() > 1e-9) {
                    return None;
                }
                let d = span.normalize();
                Some((count_near(&a, &d), it, a, d))
            })
            .reduce_with(|x, y| if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x });
        let Some((count, _, mut anchor, mut dir)) = best else {
            break;
        };

        let consensus = remaining
            .iter()
            .filter(|&&i| line_distance(&anchor, &dir, pos[i]) <= th)
            .map(|&i| pos[i]);
        let (centroid, cov, n) = covariance(consensus);
        if n >= 2 {
            let (_, vectors) = symmetric_eigen(cov);
            let rd: Vector3<f64> = vectors.column(2).into();
            if count_near(&centroid, &rd) >= count {
                anchor = centroid;
                dir = rd;
            }
        }
        let dir = canonical(dir);
        let (support, rest): (Vec<usize>, Vec<usize>) = remaining
            .iter()
            .partition(|&&i| line_distance(&anchor, &dir, pos[i]) <= th);
        remaining = rest;
        let accepted = support.len() > params.min_support;
        lines.push(LineModel {
            anchor: anchor.into(),
            direction: dir.into(),
            support: IndexMask::new(support, pos.len())?,
            accepted,
        });
        if !accepted {
            break;
        }
    }
    Ok(lines)
}

/// Per-point prediction: supports of accepted lines are markings.
pub fn marking_labels(lines: &[LineModel], frame_size: usize) -> Result<Vec<Label>> {
    let mut labels = vec![Label::Other; frame_size];
    for line in lines.iter().filter(|l| l.accepted) {
        if line.support.parent_len() != frame_size {
            return Err(Error::Structural(format!(
                "line support indexes {} points, frame has {frame_size}",
                line.support.parent_len()
            )));
        }
        for i in line.support.iter() {
            debug_assert_eq!(labels[i], Label::Other, "point {i} supports two lines");
            labels[i] = Label::Marking;
        }
    }
    Ok(labels)
}
