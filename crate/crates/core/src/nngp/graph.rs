use serde::{Deserialize, Serialize};

use super::index::{Candidate, GridIndex, TopM};
use crate::error::{Error, Result};
use crate::geometry::Point;

/// How neighbor sets are searched. Both strategies return identical sets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NeighborSearch {
    #[default]
    Grid,
    Exhaustive,
}

/// Directed acyclic neighbor structure over an ordered point list: point `i`
/// conditions on the `min(m, i)` nearest points among `0..i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborGraph {
    m: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl NeighborGraph {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sorted neighbor indices of point `i`.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    /// For each point, the later points that list it as a neighbor.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.len()];
        for i in 0..self.len() {
            for &j in self.neighbors(i) {
                ch[j].push(i);
            }
        }
        ch
    }

    fn from_sets(m: usize, sets: impl IntoIterator<Item = Vec<usize>>) -> Self {
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        for s in sets {
            indices.extend_from_slice(&s);
            offsets.push(indices.len());
        }
        NeighborGraph {
            m,
            offsets,
            indices,
        }
    }
}

pub fn build_neighbor_graph(points: &[Point], m: usize) -> Result<NeighborGraph> {
    build_neighbor_graph_with(points, m, NeighborSearch::Grid)
}

pub fn build_neighbor_graph_with(
    points: &[Point],
    m: usize,
    search: NeighborSearch,
) -> Result<NeighborGraph> {
    if m < 1 {
        return Err(Error::validation("neighbor budget M must be at least 1"));
    }
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(Error::validation(format!(
            "non-finite location ({}, {})",
            p.x, p.y
        )));
    }
    let graph = match search {
        NeighborSearch::Grid => {
            let mut index = GridIndex::bounding(points, points.len());
            let sets: Vec<Vec<usize>> = points
                .iter()
                .map(|&p| {
                    let nb = index.nearest(p, m);
                    index.insert(p);
                    nb
                })
                .collect();
            NeighborGraph::from_sets(m, sets)
        }
        NeighborSearch::Exhaustive => NeighborGraph::from_sets(
            m,
            (0..points.len()).map(|i| {
                let mut top = TopM::new(m);
                for j in 0..i {
                    top.offer(Candidate {
                        dist2: points[j].dist2(points[i]),
                        id: j,
                    });
                }
                top.into_sorted_ids()
            }),
        ),
    };
    Ok(graph)
}

/// Permutation sorting points by x, then y (stable on exact ties).
pub fn lexicographic_order(points: &[Point]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .x
            .total_cmp(&points[b].x)
            .then(points[a].y.total_cmp(&points[b].y))
    });
    order
}
