use std::num::NonZero;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// k-nearest-neighbor lists for every point of a set, the point itself
/// included, sorted by distance then index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    k: usize,
    flat: Vec<u32>,
}

impl NeighborGraph {
    pub fn build(positions: &[[f64; 3]], k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if positions.len() < k {
            return Err(Error::Degenerate(format!(
                "{} points cannot supply {k} neighbors",
                positions.len()
            )));
        }
        if positions.len() > u32::MAX as usize {
            return Err(Error::Structural("too many points for a neighbor graph".into()));
        }
        let tree: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(positions);
        let qty = NonZero::new(k).unwrap();
        let flat = positions
            .par_iter()
            .flat_map_iter(|p| {
                let mut found = tree.nearest_n::<SquaredEuclidean>(p, qty);
                found.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.item.cmp(&b.item)));
                found.into_iter().map(|n| n.item as u32)
            })
            .collect::<Vec<u32>>();
        debug_assert_eq!(flat.len(), positions.len() * k);
        Ok(NeighborGraph { k, flat })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.flat.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.flat[i * self.k..(i + 1) * self.k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_brute_force() {
        let pts: Vec<[f64; 3]> = (0..200)
            .map(|i| {
                let t = i as f64;
                [(t * 0.37).sin() * 5.0, (t * 0.11).cos() * 3.0, -2.0]
            })
            .collect();
        let g = NeighborGraph::build(&pts, 7).unwrap();
        for (i, p) in pts.iter().enumerate() {
            let mut d: Vec<(f64, usize)> = pts
                .iter()
                .enumerate()
                .map(|(j, q)| {
                    let s: f64 = (0..3).map(|a| (p[a] - q[a]).powi(2)).sum();
                    (s, j)
                })
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<f64> = d[..7].iter().map(|x| x.0).collect();
            let got: Vec<f64> = g
                .neighbors(i)
                .iter()
                .map(|&j| (0..3).map(|a| (p[a] - pts[j as usize][a]).powi(2)).sum())
                .collect();
            assert_eq!(got, want);
            assert_eq!(g.neighbors(i)[0] as usize, i);
        }
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            NeighborGraph::build(&[[0.0; 3]; 3], 4),
            Err(Error::Degenerate(_))
        ));
    }
}
