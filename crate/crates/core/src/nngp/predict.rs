use nalgebra::{DMatrix, DVector};

use super::index::GridIndex;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::gp::{clamp_variance, Covariance, JITTER};

/// Conditional moments of a new location given values at a neighbor subset.
/// `resid[j]` is the centred value at `points[j]`; the returned mean is centred too.
pub fn conditional_on<K: Covariance + ?Sized>(
    kernel: &K,
    points: &[Point],
    resid: &[f64],
    nbrs: &[usize],
    target: Point,
) -> Result<(f64, f64)> {
    let var = kernel.variance();
    if nbrs.is_empty() {
        return Ok((0.0, var));
    }
    let k = nbrs.len();
    let jitter = JITTER * var;
    let mut m = DMatrix::zeros(k, k);
    for b in 0..k {
        m[(b, b)] = var + jitter;
        for a in (b + 1)..k {
            let c = kernel.cov(points[nbrs[a]], points[nbrs[b]]);
            m[(a, b)] = c;
            m[(b, a)] = c;
        }
    }
    let cross = DVector::from_iterator(k, nbrs.iter().map(|&j| kernel.cov(points[j], target)));
    let chol = nalgebra::Cholesky::new(m).ok_or_else(|| {
        Error::Factorization("neighbor covariance of a prediction target is singular".into())
    })?;
    let w = chol.solve(&cross);
    let mu: f64 = w.iter().zip(nbrs).map(|(wj, &j)| wj * resid[j]).sum();
    let v = clamp_variance(var - w.dot(&cross), var)?;
    Ok((mu, v))
}

/// Nearest-neighbor kriging over a mutable reference set.
///
/// Values are stored centred on their prior means; callers add the prior mean
/// at the target back onto the returned conditional mean.
#[derive(Clone, Debug)]
pub struct NngpPredictor<K> {
    kernel: K,
    m: usize,
    index: GridIndex,
    points: Vec<Point>,
    resid: Vec<f64>,
}

impl<K: Covariance> NngpPredictor<K> {
    /// Empty predictor whose index is sized for about `expected` points in the box.
    pub fn with_bounds(kernel: K, m: usize, bounds: (f64, f64, f64, f64), expected: usize) -> Self {
        let (x0, x1, y0, y1) = bounds;
        NngpPredictor {
            kernel,
            m,
            index: GridIndex::new(x0, x1, y0, y1, expected),
            points: Vec::new(),
            resid: Vec::new(),
        }
    }

    /// Predictor over `points` with centred values `resid`.
    pub fn new(kernel: K, m: usize, points: &[Point], resid: &[f64]) -> Result<Self> {
        if points.len() != resid.len() {
            return Err(Error::validation(
                "one value per reference point is required",
            ));
        }
        if m < 1 {
            return Err(Error::validation("neighbor budget M must be at least 1"));
        }
        let mut index = GridIndex::bounding(points, points.len());
        for &p in points {
            index.insert(p);
        }
        Ok(NngpPredictor {
            kernel,
            m,
            index,
            points: points.to_vec(),
            resid: resid.to_vec(),
        })
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Adds a reference point, returning its id.
    pub fn insert(&mut self, p: Point, resid: f64) -> usize {
        let id = self.index.insert(p);
        self.points.push(p);
        self.resid.push(resid);
        id
    }

    pub fn remove(&mut self, id: usize) {
        self.index.remove(id);
    }

    pub fn neighbors(&self, target: Point) -> Vec<usize> {
        self.index.nearest(target, self.m)
    }

    /// Centred conditional mean and variance at `target`.
    pub fn moments(&self, target: Point) -> Result<(f64, f64)> {
        let nbrs = self.neighbors(target);
        conditional_on(&self.kernel, &self.points, &self.resid, &nbrs, target)
    }
}

/// Kriging moments at `target` from its `m` nearest reference points, zero prior mean.
pub fn nngp_conditional_new<K: Covariance>(
    points: &[Point],
    values: &[f64],
    target: Point,
    m: usize,
    kernel: &K,
) -> Result<(f64, f64)> {
    if !target.is_finite() {
        return Err(Error::validation("prediction target must be finite"));
    }
    NngpPredictor::new(kernel, m, points, values)?.moments(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::CovParams;

    #[test]
    fn no_reference_points_gives_prior() {
        let p = CovParams::new(0.7, 1.0).unwrap();
        let got = nngp_conditional_new(&[], &[], Point::new(1.0, 1.0), 5, &p).unwrap();
        assert_eq!(got, (0.0, 0.7));
    }

    #[test]
    fn interpolates_reference_value() {
        let p = CovParams::new(1.0, 2.0).unwrap();
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 0.0),
        ];
        let (mu, var) = nngp_conditional_new(&pts, &[0.3, -1.2, 0.8], pts[1], 2, &p).unwrap();
        assert!((mu + 1.2).abs() < 1e-8 && var < 1e-8, "{mu} {var}");
    }

    #[test]
    fn removal_excludes_point() {
        let p = CovParams::new(1.0, 2.0).unwrap();
        let mut pr = NngpPredictor::new(p, 1, &[Point::new(0.0, 0.0)], &[1.0]).unwrap();
        let id = pr.insert(Point::new(5.0, 5.0), -3.0);
        assert_eq!(pr.neighbors(Point::new(4.9, 5.0)), vec![id]);
        pr.remove(id);
        assert_eq!(pr.neighbors(Point::new(4.9, 5.0)), vec![0]);
    }
}
