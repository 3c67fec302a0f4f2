use nalgebra::DVector;

use super::Backend;
use crate::error::{Error, Result};
use crate::geometry::{Domain, EventSet, Point};
use crate::gp::{cholesky, covariance_matrix, RandomWalkCov, SpaceTimeCovParams};
use crate::nngp::{lexicographic_order, NngpPredictor};
use crate::par::map_slice;

/// Augmented data of one time slice. The reference ordering is the observed
/// points (lexicographic) followed by the thinned points in acceptance order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SliceState {
    pub observed: Vec<Point>,
    pub thinned: Vec<Point>,
    pub z_obs: Vec<f64>,
    pub z_thin: Vec<f64>,
    /// Prior mean of the latent field (kriged previous slice; zero for the first).
    pub mean_obs: Vec<f64>,
    pub mean_thin: Vec<f64>,
}

impl SliceState {
    /// Slice with the given observed points (sorted), zero latent values and no thinned points.
    pub fn from_observed(points: &[Point]) -> Self {
        let observed: Vec<Point> = lexicographic_order(points)
            .into_iter()
            .map(|i| points[i])
            .collect();
        let n = observed.len();
        SliceState {
            observed,
            z_obs: vec![0.0; n],
            mean_obs: vec![0.0; n],
            ..SliceState::default()
        }
    }

    pub fn n(&self) -> usize {
        self.observed.len()
    }

    pub fn m(&self) -> usize {
        self.thinned.len()
    }

    pub fn k(&self) -> usize {
        self.n() + self.m()
    }

    pub fn points(&self) -> Vec<Point> {
        let mut p = self.observed.clone();
        p.extend_from_slice(&self.thinned);
        p
    }

    pub fn z(&self) -> Vec<f64> {
        let mut z = self.z_obs.clone();
        z.extend_from_slice(&self.z_thin);
        z
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = self.mean_obs.clone();
        m.extend_from_slice(&self.mean_thin);
        m
    }

    /// `z − mean` over the reference ordering.
    pub fn residuals(&self) -> Vec<f64> {
        self.z()
            .iter()
            .zip(self.mean())
            .map(|(z, m)| z - m)
            .collect()
    }

    /// +1 at observed points, −1 at thinned points.
    pub fn signs(&self) -> Vec<f64> {
        let mut s = vec![1.0; self.n()];
        s.resize(self.k(), -1.0);
        s
    }

    pub fn set_z(&mut self, z: &[f64]) {
        let n = self.n();
        self.z_obs.copy_from_slice(&z[..n]);
        self.z_thin.copy_from_slice(&z[n..]);
    }

    pub fn set_mean(&mut self, mean: &[f64]) {
        let n = self.n();
        self.mean_obs.copy_from_slice(&mean[..n]);
        self.mean_thin.copy_from_slice(&mean[n..]);
    }

    pub fn push_thinned(&mut self, p: Point, z: f64, mean: f64) {
        self.thinned.push(p);
        self.z_thin.push(z);
        self.mean_thin.push(mean);
    }

    pub fn remove_thinned(&mut self, j: usize) {
        self.thinned.remove(j);
        self.z_thin.remove(j);
        self.mean_thin.remove(j);
    }

    pub fn clear_thinned(&mut self) {
        self.thinned.clear();
        self.z_thin.clear();
        self.mean_thin.clear();
    }
}

/// Full Gibbs state.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedState {
    pub slices: Vec<SliceState>,
    pub lambda_star: Vec<f64>,
    pub stp: SpaceTimeCovParams,
}

impl AugmentedState {
    pub fn new(
        events: &EventSet,
        domain: &Domain,
        lambda_star: Vec<f64>,
        stp: SpaceTimeCovParams,
    ) -> Result<Self> {
        events.validate_within(domain)?;
        if lambda_star.len() != events.n_slices() {
            return Err(Error::validation("one rate per slice is required"));
        }
        Ok(AugmentedState {
            slices: events
                .slices()
                .iter()
                .map(|s| SliceState::from_observed(s))
                .collect(),
            lambda_star,
            stp,
        })
    }

    pub fn k(&self) -> Vec<usize> {
        self.slices.iter().map(SliceState::k).collect()
    }

    /// Prior mean field of slice `t`: the previous slice's latent field kriged
    /// with its marginal random-walk covariance (zero for `t = 0`).
    pub fn mean_field(&self, t: usize, m: usize, backend: Backend) -> Result<MeanField> {
        if t == 0 {
            return Ok(MeanField::Zero);
        }
        let prev = &self.slices[t - 1];
        MeanField::krige(
            self.stp.marginal(t - 1),
            &prev.points(),
            &prev.z(),
            m,
            backend,
        )
    }

    /// Recomputes the stored prior means of slice `t`.
    pub fn refresh_means(&mut self, t: usize, m: usize, backend: Backend) -> Result<MeanField> {
        let field = self.mean_field(t, m, backend)?;
        let mean = field.at_many(&self.slices[t].points())?;
        self.slices[t].set_mean(&mean);
        Ok(field)
    }
}

/// Kriging predictor of a zero-mean field from its values at reference points.
#[derive(Clone, Debug)]
pub enum MeanField {
    Zero,
    Nngp(NngpPredictor<RandomWalkCov>),
    Dense {
        kernel: RandomWalkCov,
        points: Vec<Point>,
        weights: DVector<f64>,
    },
}

impl MeanField {
    pub fn krige(
        kernel: RandomWalkCov,
        points: &[Point],
        values: &[f64],
        m: usize,
        backend: Backend,
    ) -> Result<Self> {
        if points.is_empty() {
            return Ok(MeanField::Zero);
        }
        match backend {
            Backend::Nngp => Ok(MeanField::Nngp(NngpPredictor::new(
                kernel, m, points, values,
            )?)),
            Backend::Dense => {
                let chol = cholesky(
                    covariance_matrix(&kernel, points),
                    "reference covariance is not positive definite",
                )?;
                Ok(MeanField::Dense {
                    kernel,
                    points: points.to_vec(),
                    weights: chol.solve(&DVector::from_column_slice(values)),
                })
            }
        }
    }

    pub fn at(&self, p: Point) -> Result<f64> {
        use crate::gp::Covariance;
        match self {
            MeanField::Zero => Ok(0.0),
            MeanField::Nngp(pred) => Ok(pred.moments(p)?.0),
            MeanField::Dense {
                kernel,
                points,
                weights,
            } => Ok(points
                .iter()
                .zip(weights.iter())
                .map(|(&q, w)| kernel.cov(p, q) * w)
                .sum()),
        }
    }

    pub fn at_many(&self, targets: &[Point]) -> Result<Vec<f64>> {
        if let MeanField::Zero = self {
            return Ok(vec![0.0; targets.len()]);
        }
        map_slice(targets, 64, |&p| self.at(p))
            .into_iter()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::CovParams;

    #[test]
    fn ordering_and_signs() {
        let mut s = SliceState::from_observed(&[Point::new(2.0, 0.0), Point::new(1.0, 3.0)]);
        assert_eq!(s.observed[0], Point::new(1.0, 3.0));
        s.push_thinned(Point::new(0.5, 0.5), -1.0, 0.0);
        assert_eq!(s.k(), 3);
        assert_eq!(s.signs(), vec![1.0, 1.0, -1.0]);
        s.remove_thinned(0);
        assert_eq!(s.k(), 2);
    }

    #[test]
    fn dense_and_nngp_means_agree_at_saturation() {
        let stp = SpaceTimeCovParams::spatial(CovParams::new(1.0, 1.5).unwrap());
        let pts: Vec<Point> = (0..12)
            .map(|i| Point::new((i * 5 % 7) as f64 * 0.4, i as f64 * 0.25))
            .collect();
        let vals: Vec<f64> = (0..12).map(|i| (i as f64).cos()).collect();
        let a = MeanField::krige(stp.marginal(1), &pts, &vals, 12, Backend::Nngp).unwrap();
        let b = MeanField::krige(stp.marginal(1), &pts, &vals, 12, Backend::Dense).unwrap();
        for q in [Point::new(0.3, 0.7), Point::new(2.0, 2.0)] {
            assert!((a.at(q).unwrap() - b.at(q).unwrap()).abs() < 1e-8);
        }
    }
}
