//! Exact k-nearest-neighbor queries over a uniform bucket grid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Point;

/// Candidate ordered by squared distance, then by id (lower id wins ties).
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Candidate {
    pub dist2: f64,
    pub id: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Bounded max-heap keeping the `m` smallest candidates.
pub(crate) struct TopM {
    m: usize,
    heap: BinaryHeap<Candidate>,
}

impl TopM {
    pub fn new(m: usize) -> Self {
        TopM {
            m,
            heap: BinaryHeap::with_capacity(m + 1),
        }
    }

    #[inline]
    pub fn offer(&mut self, c: Candidate) {
        if self.m == 0 {
            return;
        }
        if self.heap.len() < self.m {
            self.heap.push(c);
        } else if let Some(top) = self.heap.peek() {
            if c < *top {
                self.heap.pop();
                self.heap.push(c);
            }
        }
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() == self.m
    }

    pub fn worst_dist2(&self) -> f64 {
        self.heap.peek().map_or(f64::INFINITY, |c| c.dist2)
    }

    /// Ids sorted ascending.
    pub fn into_sorted_ids(self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.heap.into_iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids
    }
}

/// Dynamic point set supporting insertion, removal and exact m-nearest queries.
#[derive(Clone, Debug)]
pub struct GridIndex {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
    points: Vec<Point>,
    alive: Vec<bool>,
    n_alive: usize,
}

const TARGET_PER_CELL: f64 = 2.0;
const MAX_CELLS: usize = 1 << 22;

impl GridIndex {
    /// Empty index over the box `[x0, x1] x [y0, y1]`, sized for about `expected` points.
    /// Points outside the box are still handled correctly, only less efficiently.
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64, expected: usize) -> Self {
        let expected = expected.max(1) as f64;
        // A flat box (e.g. collinear points) would otherwise get vanishing cells.
        let span = (x1 - x0).max(y1 - y0).max(0.0);
        let w = (x1 - x0).max(span / expected).max(f64::MIN_POSITIVE);
        let h = (y1 - y0).max(span / expected).max(f64::MIN_POSITIVE);
        let mut cell = (w * h * TARGET_PER_CELL / expected).sqrt();
        if !(cell.is_finite() && cell > 0.0) {
            cell = w.max(h).max(1.0);
        }
        let mut nx = ((w / cell).ceil() as usize).max(1);
        let mut ny = ((h / cell).ceil() as usize).max(1);
        while nx * ny > MAX_CELLS {
            cell *= 2.0;
            nx = ((w / cell).ceil() as usize).max(1);
            ny = ((h / cell).ceil() as usize).max(1);
        }
        GridIndex {
            x0,
            y0,
            cell,
            nx,
            ny,
            cells: vec![Vec::new(); nx * ny],
            points: Vec::new(),
            alive: Vec::new(),
            n_alive: 0,
        }
    }

    /// Index sized for `points` (not inserted).
    pub fn bounding(points: &[Point], expected: usize) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for p in points {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        if points.is_empty() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        GridIndex::new(x0, x1, y0, y1, expected)
    }

    pub fn from_points(points: &[Point]) -> Self {
        let mut idx = GridIndex::bounding(points, points.len());
        for &p in points {
            idx.insert(p);
        }
        idx
    }

    pub fn len(&self) -> usize {
        self.n_alive
    }

    pub fn is_empty(&self) -> bool {
        self.n_alive == 0
    }

    pub fn point(&self, id: usize) -> Point {
        self.points[id]
    }

    #[inline]
    fn cell_of(&self, p: Point) -> (usize, usize) {
        let cx = ((p.x - self.x0) / self.cell).floor();
        let cy = ((p.y - self.y0) / self.cell).floor();
        let cx = if cx.is_nan() {
            0.0
        } else {
            cx.clamp(0.0, (self.nx - 1) as f64)
        };
        let cy = if cy.is_nan() {
            0.0
        } else {
            cy.clamp(0.0, (self.ny - 1) as f64)
        };
        (cx as usize, cy as usize)
    }

    /// Inserts `p` and returns its id (ids are assigned consecutively).
    pub fn insert(&mut self, p: Point) -> usize {
        let id = self.points.len();
        let (cx, cy) = self.cell_of(p);
        self.cells[cy * self.nx + cx].push(id);
        self.points.push(p);
        self.alive.push(true);
        self.n_alive += 1;
        id
    }

    pub fn remove(&mut self, id: usize) {
        if !self.alive[id] {
            return;
        }
        let (cx, cy) = self.cell_of(self.points[id]);
        let bucket = &mut self.cells[cy * self.nx + cx];
        if let Some(pos) = bucket.iter().position(|&j| j == id) {
            bucket.swap_remove(pos);
        }
        self.alive[id] = false;
        self.n_alive -= 1;
    }

    /// The `m` live points nearest to `target` (ties to lower id), ids ascending.
    pub fn nearest(&self, target: Point, m: usize) -> Vec<usize> {
        let mut top = TopM::new(m);
        if m == 0 || self.n_alive == 0 {
            return Vec::new();
        }
        let (tx, ty) = self.cell_of(target);
        let max_ring = tx.max(self.nx - 1 - tx).max(ty).max(self.ny - 1 - ty);
        for r in 0..=max_ring {
            if r > 0 && top.is_full() {
                let bound = (r - 1) as f64 * self.cell;
                if bound * bound > top.worst_dist2() {
                    break;
                }
            }
            self.scan_ring(tx, ty, r, target, &mut top);
        }
        top.into_sorted_ids()
    }

    fn scan_ring(&self, tx: usize, ty: usize, r: usize, target: Point, top: &mut TopM) {
        let (tx, ty, r) = (tx as isize, ty as isize, r as isize);
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let mut visit = |cx: isize, cy: isize| {
            if cx < 0 || cy < 0 || cx >= nx || cy >= ny {
                return;
            }
            for &id in &self.cells[(cy * nx + cx) as usize] {
                top.offer(Candidate {
                    dist2: self.points[id].dist2(target),
                    id,
                });
            }
        };
        if r == 0 {
            visit(tx, ty);
            return;
        }
        for cx in (tx - r)..=(tx + r) {
            visit(cx, ty - r);
            visit(cx, ty + r);
        }
        for cy in (ty - r + 1)..=(ty + r - 1) {
            visit(tx - r, cy);
            visit(tx + r, cy);
        }
    }
}
