//! Organized point-cloud model.
//!
//! A [`PointCloud`] holds the returns of one sensor revolution in row-major
//! `(ring, col)` order. No-return slots stay in the sequence with
//! `valid == false` so that indices into the original frame remain stable
//! through every filtering stage; [`IndexMask`] carries those indices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One return of a multi-beam spinning LIDAR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Distance from the sensor origin in meters.
    pub range: f64,
    /// Raw return strength, uncompensated.
    pub intensity: f32,
    /// Calibrated reflectance, 0..=255.
    pub reflectivity: u16,
    pub ring: u16,
    pub col: u16,
    pub valid: bool,
}

impl LidarPoint {
    /// A no-return slot at `(ring, col)`.
    pub fn dropout(ring: u16, col: u16) -> Self {
        LidarPoint {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            range: 0.0,
            intensity: 0.0,
            reflectivity: 0,
            ring,
            col,
            valid: false,
        }
    }

    #[inline]
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    fn check(&self) -> Result<()> {
        if self.reflectivity > 255 {
            return Err(Error::Structural(format!(
                "reflectivity {} out of [0, 255] at ring {} col {}",
                self.reflectivity, self.ring, self.col
            )));
        }
        if !(self.intensity >= 0.0) || !self.intensity.is_finite() {
            return Err(Error::Structural(format!(
                "intensity {} must be finite and non-negative at ring {} col {}",
                self.intensity, self.ring, self.col
            )));
        }
        if !self.valid {
            return Ok(());
        }
        if !(self.range >= 0.0) || !self.range.is_finite() {
            return Err(Error::Structural(format!(
                "range {} must be finite and non-negative at ring {} col {}",
                self.range, self.ring, self.col
            )));
        }
        let norm = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        if (norm - self.range).abs() > 1e-3 * self.range.max(1.0) {
            return Err(Error::Structural(format!(
                "range {} inconsistent with position norm {} at ring {} col {}",
                self.range, norm, self.ring, self.col
            )));
        }
        Ok(())
    }
}

/// One sensor revolution, points sorted by `(ring, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<LidarPoint>,
    n_layers: u16,
    n_cols: u16,
    frame_id: String,
}

impl PointCloud {
    /// Builds a cloud, checking every point invariant.
    ///
    /// Points must be strictly increasing in `(ring, col)`, which also makes
    /// each grid slot unique.
    pub fn new(n_layers: u16, n_cols: u16, frame_id: impl Into<String>, points: Vec<LidarPoint>) -> Result<Self> {
        if n_layers == 0 || n_cols == 0 {
            return Err(Error::Structural(format!("grid {n_layers}x{n_cols} must be non-empty")));
        }
        let mut prev: Option<(u16, u16)> = None;
        for p in &points {
            if p.ring >= n_layers || p.col >= n_cols {
                return Err(Error::Structural(format!(
                    "point (ring {}, col {}) outside {}x{} grid",
                    p.ring, p.col, n_layers, n_cols
                )));
            }
            let key = (p.ring, p.col);
            if let Some(prev) = prev {
                if key <= prev {
                    return Err(Error::Structural(format!(
                        "points not strictly row-major: (ring {}, col {}) after (ring {}, col {})",
                        key.0, key.1, prev.0, prev.1
                    )));
                }
            }
            prev = Some(key);
            p.check()?;
        }
        Ok(PointCloud {
            points,
            n_layers,
            n_cols,
            frame_id: frame_id.into(),
        })
    }

    pub fn empty(n_layers: u16, n_cols: u16, frame_id: impl Into<String>) -> Result<Self> {
        Self::new(n_layers, n_cols, frame_id, Vec::new())
    }

    pub fn points(&self) -> &[LidarPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_layers(&self) -> u16 {
        self.n_layers
    }

    pub fn n_cols(&self) -> u16 {
        self.n_cols
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn set_frame_id(&mut self, id: impl Into<String>) {
        self.frame_id = id.into();
    }

    pub fn valid_count(&self) -> usize {
        self.points.iter().filter(|p| p.valid).count()
    }

    /// Mask of every valid return.
    pub fn valid_mask(&self) -> IndexMask {
        IndexMask::from_predicate(self.len(), |i| self.points[i].valid)
    }

    /// Sub-cloud holding exactly the masked points, order preserved.
    pub fn select(&self, mask: &IndexMask) -> Result<PointCloud> {
        if mask.parent_len() != self.len() {
            return Err(Error::Structural(format!(
                "mask built for a parent of {} points applied to a cloud of {}",
                mask.parent_len(),
                self.len()
            )));
        }
        Ok(PointCloud {
            points: mask.iter().map(|i| self.points[i]).collect(),
            n_layers: self.n_layers,
            n_cols: self.n_cols,
            frame_id: self.frame_id.clone(),
        })
    }

    /// Index range of all slots (valid or not) on `ring`.
    pub fn ring_span(&self, ring: u16) -> Result<std::ops::Range<usize>> {
        if ring >= self.n_layers {
            return Err(Error::Structural(format!(
                "ring {ring} out of range for {} layers",
                self.n_layers
            )));
        }
        let start = self.points.partition_point(|p| p.ring < ring);
        let end = self.points.partition_point(|p| p.ring <= ring);
        Ok(start..end)
    }

    /// Valid returns on `ring`.
    pub fn points_of_ring(&self, ring: u16) -> Result<Vec<&LidarPoint>> {
        let span = self.ring_span(ring)?;
        Ok(self.points[span].iter().filter(|p| p.valid).collect())
    }

    /// Drops no-return slots. Returns the compacted cloud and the mask of
    /// kept indices in `self`.
    pub fn compact(&self) -> (PointCloud, IndexMask) {
        let mask = self.valid_mask();
        let cloud = self.select(&mask).expect("mask built from self");
        (cloud, mask)
    }
}

/// Strictly increasing indices into a parent cloud of `parent_len` points.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexMask {
    indices: Vec<usize>,
    parent_len: usize,
}

impl IndexMask {
    pub fn new(indices: Vec<usize>, parent_len: usize) -> Result<Self> {
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Structural(format!(
                    "mask indices not strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= parent_len {
                return Err(Error::Structural(format!(
                    "mask index {last} out of bounds for parent of {parent_len}"
                )));
            }
        }
        Ok(IndexMask { indices, parent_len })
    }

    /// Sorts and de-duplicates before validating bounds.
    pub fn from_unsorted(mut indices: Vec<usize>, parent_len: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices, parent_len)
    }

    pub fn full(parent_len: usize) -> Self {
        IndexMask {
            indices: (0..parent_len).collect(),
            parent_len,
        }
    }

    pub fn empty(parent_len: usize) -> Self {
        IndexMask {
            indices: Vec::new(),
            parent_len,
        }
    }

    pub fn from_predicate(parent_len: usize, mut keep: impl FnMut(usize) -> bool) -> Self {
        IndexMask {
            indices: (0..parent_len).filter(|&i| keep(i)).collect(),
            parent_len,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn into_indices(self) -> Vec<usize> {
        self.indices
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn parent_len(&self) -> usize {
        self.parent_len
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// Re-indexes `inner` (a mask over the selection made by `self`) into
    /// `self`'s parent.
    pub fn compose(&self, inner: &IndexMask) -> Result<IndexMask> {
        if inner.parent_len != self.len() {
            return Err(Error::Structural(format!(
                "inner mask parent of {} does not match outer selection of {}",
                inner.parent_len,
                self.len()
            )));
        }
        Ok(IndexMask {
            indices: inner.iter().map(|i| self.indices[i]).collect(),
            parent_len: self.parent_len,
        })
    }

    pub fn is_subset_of(&self, other: &IndexMask) -> bool {
        self.parent_len == other.parent_len && self.iter().all(|i| other.contains(i))
    }

    pub fn is_disjoint(&self, other: &IndexMask) -> bool {
        let (mut a, mut b) = (self.indices.iter().peekable(), other.indices.iter().peekable());
        while let (Some(&&x), Some(&&y)) = (a.peek(), b.peek()) {
            match x.cmp(&y) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }
}

/// Per-point class used for ground truth and predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Road,
    Marking,
    Other,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Road => "road",
            Label::Marking => "marking",
            Label::Other => "other",
        }
    }

    pub fn parse(token: &str) -> Option<Label> {
        match token {
            "road" => Some(Label::Road),
            "marking" => Some(Label::Marking),
            "other" => Some(Label::Other),
            _ => None,
        }
    }

    pub fn is_marking(self) -> bool {
        self == Label::Marking
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn point(ring: u16, col: u16, x: f64, y: f64, z: f64) -> LidarPoint {
        LidarPoint {
            x,
            y,
            z,
            range: (x * x + y * y + z * z).sqrt(),
            intensity: 10.0,
            reflectivity: 40,
            ring,
            col,
            valid: true,
        }
    }

    fn five() -> PointCloud {
        let pts = (0..5).map(|j| point(0, j, j as f64, 1.0, -2.0)).collect();
        PointCloud::new(64, 1024, "f", pts).unwrap()
    }

    #[test]
    fn select_subset_keeps_order() {
        let c = five();
        let m = IndexMask::new(vec![0, 2, 4], 5).unwrap();
        let s = c.select(&m).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.points()[1], c.points()[2]);
        assert_eq!(s.n_layers(), 64);
    }

    #[test]
    fn select_full_is_identity() {
        let c = five();
        assert_eq!(c.select(&IndexMask::full(5)).unwrap(), c);
    }

    #[test]
    fn select_empty_keeps_metadata() {
        let c = five();
        let s = c.select(&IndexMask::empty(5)).unwrap();
        assert!(s.is_empty());
        assert_eq!((s.n_layers(), s.n_cols()), (64, 1024));
    }

    #[test]
    fn out_of_bounds_mask_is_structural() {
        assert!(matches!(IndexMask::new(vec![1, 5], 5), Err(Error::Structural(_))));
        assert!(IndexMask::new(vec![2, 2], 5).is_err());
        let c = five();
        assert!(c.select(&IndexMask::full(4)).is_err());
    }

    #[test]
    fn ring_queries() {
        let mut pts = Vec::new();
        for col in 0..1024u16 {
            pts.push(point(0, col, 5.0, 0.0, -2.0));
        }
        for col in 0..1024u16 {
            if col < 1000 {
                pts.push(point(3, col, 5.0, 0.0, -2.0));
            } else {
                pts.push(LidarPoint::dropout(3, col));
            }
        }
        let c = PointCloud::new(64, 1024, "r", pts).unwrap();
        assert_eq!(c.points_of_ring(0).unwrap().len(), 1024);
        assert_eq!(c.points_of_ring(3).unwrap().len(), 1000);
        assert_eq!(c.points_of_ring(7).unwrap().len(), 0);
        assert!(c.points_of_ring(64).is_err());
        let e = PointCloud::empty(64, 1024, "e").unwrap();
        assert!(e.points_of_ring(0).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_points() {
        let mut p = point(0, 0, 1.0, 0.0, 0.0);
        p.range = 2.0;
        assert!(PointCloud::new(1, 1, "", vec![p]).is_err());
        let mut p = point(0, 0, 1.0, 0.0, 0.0);
        p.reflectivity = 256;
        assert!(PointCloud::new(1, 1, "", vec![p]).is_err());
        let p = point(2, 0, 1.0, 0.0, 0.0);
        assert!(PointCloud::new(2, 1, "", vec![p]).is_err());
        let dup = vec![point(0, 0, 1.0, 0.0, 0.0), point(0, 0, 1.0, 0.0, 0.0)];
        assert!(PointCloud::new(1, 4, "", dup).is_err());
    }

    #[test]
    fn disjoint_and_subset() {
        let a = IndexMask::new(vec![1, 3, 5], 10).unwrap();
        let b = IndexMask::new(vec![0, 2, 4], 10).unwrap();
        let c = IndexMask::new(vec![1, 5], 10).unwrap();
        assert!(a.is_disjoint(&b));
        assert!(!a.is_disjoint(&c));
        assert!(c.is_subset_of(&a));
        assert!(!a.is_subset_of(&c));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cloud_strategy() -> impl Strategy<Value = PointCloud> {
            proptest::collection::vec((0u16..8, any::<bool>()), 0..200).prop_map(|rings| {
                let mut keys: Vec<(u16, u16)> = rings.iter().enumerate().map(|(k, (r, _))| (*r, k as u16)).collect();
                keys.sort();
                let pts = keys
                    .iter()
                    .zip(rings.iter())
                    .map(|(&(r, c), &(_, v))| {
                        if v {
                            point(r, c, 3.0, c as f64 * 0.01, -1.5)
                        } else {
                            LidarPoint::dropout(r, c)
                        }
                    })
                    .collect();
                PointCloud::new(8, 256, "p", pts).unwrap()
            })
        }

        proptest! {
            #[test]
            fn ring_counts_sum_to_valid(c in cloud_strategy()) {
                let total: usize = (0..8).map(|r| c.points_of_ring(r).unwrap().len()).sum();
                prop_assert_eq!(total, c.valid_count());
            }

            #[test]
            fn select_composes(c in cloud_strategy(), a in any::<u64>(), b in any::<u64>()) {
                let m1 = IndexMask::from_predicate(c.len(), |i| (a >> (i % 64)) & 1 == 1);
                let s1 = c.select(&m1).unwrap();
                let m2 = IndexMask::from_predicate(s1.len(), |i| (b >> (i % 64)) & 1 == 1);
                let lhs = s1.select(&m2).unwrap();
                let rhs = c.select(&m1.compose(&m2).unwrap()).unwrap();
                prop_assert_eq!(lhs, rhs);
            }
        }
    }
}
