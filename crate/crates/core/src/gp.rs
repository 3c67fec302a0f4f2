//! Exponential covariance kernels and exact dense Gaussian process algebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Relative diagonal jitter added before any factorization.
pub const JITTER: f64 = 1e-10;

/// Conditional variances down to `-VARIANCE_TOL` are treated as roundoff.
pub const VARIANCE_TOL: f64 = 1e-10;

/// Exponential kernel parameters `σ² exp(−φ d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovParams {
    pub sigma2: f64,
    pub phi: f64,
}

impl CovParams {
    pub fn new(sigma2: f64, phi: f64) -> Result<Self> {
        let p = CovParams { sigma2, phi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite() && self.phi > 0.0 && self.phi.is_finite())
        {
            return Err(Error::validation(format!(
                "covariance parameters must be positive and finite (sigma2={}, phi={})",
                self.sigma2, self.phi
            )));
        }
        Ok(())
    }
}

/// Initial-slice parameters and the innovation parameters shared by later slices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeCovParams {
    pub theta1: CovParams,
    pub theta: CovParams,
}

impl SpaceTimeCovParams {
    pub fn new(theta1: CovParams, theta: CovParams) -> Result<Self> {
        theta1.validate()?;
        theta.validate()?;
        Ok(SpaceTimeCovParams { theta1, theta })
    }

    /// Same parameters for every slice (purely spatial use).
    pub fn spatial(p: CovParams) -> Self {
        SpaceTimeCovParams {
            theta1: p,
            theta: p,
        }
    }

    /// Covariance of the innovation entering slice `t` (0-based).
    pub fn innovation(&self, t: usize) -> CovParams {
        if t == 0 {
            self.theta1
        } else {
            self.theta
        }
    }

    /// Marginal covariance of the random-walk field at slice `t` (0-based).
    pub fn marginal(&self, t: usize) -> RandomWalkCov {
        RandomWalkCov {
            initial: self.theta1,
            innovation: self.theta,
            steps: t,
        }
    }
}

/// Isotropic stationary covariance function.
pub trait Covariance: Sync {
    fn at_distance(&self, d: f64) -> f64;

    #[inline]
    fn cov(&self, a: Point, b: Point) -> f64 {
        self.at_distance(a.dist(b))
    }

    fn variance(&self) -> f64 {
        self.at_distance(0.0)
    }
}

impl Covariance for CovParams {
    #[inline]
    fn at_distance(&self, d: f64) -> f64 {
        self.sigma2 * (-self.phi * d).exp()
    }

    fn variance(&self) -> f64 {
        self.sigma2
    }
}

/// Covariance of `z_1 + η_2 + … + η_{steps+1}`: one initial exponential term
/// plus `steps` innovation terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomWalkCov {
    pub initial: CovParams,
    pub innovation: CovParams,
    pub steps: usize,
}

impl Covariance for RandomWalkCov {
    #[inline]
    fn at_distance(&self, d: f64) -> f64 {
        let mut c = self.initial.at_distance(d);
        if self.steps > 0 {
            c += self.steps as f64 * self.innovation.at_distance(d);
        }
        c
    }
}

impl<C: Covariance + ?Sized> Covariance for &C {
    fn at_distance(&self, d: f64) -> f64 {
        (**self).at_distance(d)
    }
    fn variance(&self) -> f64 {
        (**self).variance()
    }
}

pub fn exp_cov(s: Point, s2: Point, p: &CovParams) -> f64 {
    p.cov(s, s2)
}

/// Dense covariance matrix over `points`, jitter added on the diagonal.
pub fn covariance_matrix<C: Covariance + ?Sized>(kernel: &C, points: &[Point]) -> DMatrix<f64> {
    let n = points.len();
    let jitter = JITTER * kernel.variance();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        m[(j, j)] = kernel.variance() + jitter;
        for i in (j + 1)..n {
            let c = kernel.cov(points[i], points[j]);
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    m
}

pub fn cross_covariance<C: Covariance + ?Sized>(
    kernel: &C,
    points: &[Point],
    target: Point,
) -> DVector<f64> {
    DVector::from_iterator(points.len(), points.iter().map(|&p| kernel.cov(p, target)))
}

pub fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::Factorization(what.to_string()))
}

/// Clamp a conditional variance, rejecting values that are negative beyond roundoff.
pub fn clamp_variance(var: f64, scale: f64) -> Result<f64> {
    if var >= 0.0 {
        Ok(var)
    } else if var >= -VARIANCE_TOL * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::NegativeVariance(var))
    }
}

/// Gaussian process restricted to a finite set of locations.
#[derive(Clone, Debug)]
pub struct DenseGP {
    locations: Vec<Point>,
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    kernel: CovParams,
}

impl DenseGP {
    pub fn new(locations: Vec<Point>, kernel: CovParams) -> Result<Self> {
        let n = locations.len();
        Self::with_mean(locations, DVector::zeros(n), kernel)
    }

    pub fn with_mean(locations: Vec<Point>, mean: DVector<f64>, kernel: CovParams) -> Result<Self> {
        kernel.validate()?;
        if mean.len() != locations.len() {
            return Err(Error::validation(
                "mean length differs from number of locations",
            ));
        }
        let cov = covariance_matrix(&kernel, &locations);
        let chol = cholesky(cov, "dense GP covariance is not positive definite")?;
        Ok(DenseGP {
            locations,
            mean,
            chol,
            kernel,
        })
    }

    pub fn locations(&self) -> &[Point] {
        &self.locations
    }

    pub fn kernel(&self) -> &CovParams {
        &self.kernel
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        covariance_matrix(&self.kernel, &self.locations)
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Log density of `values` under N(mean, C).
    pub fn log_density(&self, values: &[f64]) -> f64 {
        let n = values.len();
        let r = DVector::from_column_slice(values) - &self.mean;
        let l = self.chol.l_dirty();
        let mut w = r.clone();
        l.solve_lower_triangular_mut(&mut w);
        let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
        -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + w.norm_squared())
    }
}

/// Kriging mean and variance at `target` given `values` observed at the GP locations.
/// The GP's prior mean is extended to `target` by `target_mean`.
pub fn dense_conditional_with_mean(
    gp: &DenseGP,
    values: &[f64],
    target: Point,
    target_mean: f64,
) -> Result<(f64, f64)> {
    if values.len() != gp.locations.len() {
        return Err(Error::validation("one value per location is required"));
    }
    let prior_var = gp.kernel.variance();
    if values.is_empty() {
        return Ok((target_mean, prior_var));
    }
    let c = cross_covariance(&gp.kernel, &gp.locations, target);
    let resid = DVector::from_column_slice(values) - &gp.mean;
    let w = gp.chol.solve(&c);
    let mu = target_mean + w.dot(&resid);
    let var = clamp_variance(prior_var - w.dot(&c), prior_var)?;
    Ok((mu, var))
}

/// Zero prior mean at the target, matching the default all-zero GP mean.
pub fn dense_conditional(gp: &DenseGP, values: &[f64], target: Point) -> Result<(f64, f64)> {
    dense_conditional_with_mean(gp, values, target, 0.0)
}

/// Expands the inverse of a k×k covariance to (k+1)×(k+1) after appending one
/// location with cross-covariance column `c_new` and conditional variance `var_new`.
pub fn block_inverse_update(
    cinv: &DMatrix<f64>,
    c_new: &DVector<f64>,
    var_new: f64,
) -> Result<DMatrix<f64>> {
    let k = cinv.nrows();
    if var_new <= 1e-12 || !var_new.is_finite() {
        return Err(Error::DegenerateUpdate { variance: var_new });
    }
    let b = cinv * c_new;
    let mut out = DMatrix::zeros(k + 1, k + 1);
    for j in 0..k {
        for i in 0..k {
            out[(i, j)] = cinv[(i, j)] + b[i] * b[j] / var_new;
        }
        out[(k, j)] = -b[j] / var_new;
        out[(j, k)] = -b[j] / var_new;
    }
    out[(k, k)] = 1.0 / var_new;
    Ok(out)
}

/// Inverse of the covariance with row/column `idx` removed, from the full inverse.
pub fn block_inverse_downdate(cinv: &DMatrix<f64>, idx: usize) -> DMatrix<f64> {
    let k = cinv.nrows();
    let pivot = cinv[(idx, idx)];
    let keep: Vec<usize> = (0..k).filter(|&i| i != idx).collect();
    DMatrix::from_fn(k - 1, k - 1, |i, j| {
        let (a, b) = (keep[i], keep[j]);
        cinv[(a, b)] - cinv[(a, idx)] * cinv[(idx, b)] / pivot
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(coords: &[(f64, f64)]) -> Vec<Point> {
        coords.iter().map(|&c| c.into()).collect()
    }

    #[test]
    fn kernel_values() {
        let p = CovParams::new(1.0, 2.0).unwrap();
        let a = Point::new(0.0, 0.0);
        assert_eq!(exp_cov(a, a, &p), 1.0);
        let b = Point::new(0.3, 0.4);
        assert!((exp_cov(a, b, &p) - 0.36787944117144233).abs() < 1e-15);
        let q = CovParams::new(0.3, 3.0).unwrap();
        let c = Point::new(1.0, 0.0);
        assert!((exp_cov(a, c, &q) - 0.014936120510359183).abs() < 1e-15);
        assert_eq!(exp_cov(b, a, &q), exp_cov(a, b, &q));
    }

    #[test]
    fn rejects_nonpositive_params() {
        assert!(CovParams::new(0.0, 1.0).is_err());
        assert!(CovParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn random_walk_variance_accumulates() {
        let st = SpaceTimeCovParams::new(
            CovParams::new(1.0, 2.0).unwrap(),
            CovParams::new(0.3, 3.0).unwrap(),
        )
        .unwrap();
        assert!((st.marginal(0).variance() - 1.0).abs() < 1e-15);
        assert!((st.marginal(3).variance() - 1.9).abs() < 1e-15);
    }

    #[test]
    fn conditional_interpolates_and_falls_back_to_prior() {
        let p = CovParams::new(1.0, 2.0).unwrap();
        let locs = pts(&[(0.0, 0.0), (1.0, 0.0)]);
        let gp = DenseGP::new(locs.clone(), p).unwrap();
        let (mu, var) = dense_conditional(&gp, &[0.7, -0.2], locs[0]).unwrap();
        assert!((mu - 0.7).abs() < 1e-8 && var < 1e-8);

        let empty = DenseGP::new(vec![], p).unwrap();
        assert_eq!(dense_conditional(&empty, &[], locs[0]).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn conditional_two_points_by_hand() {
        // target at origin, conditioning points at distances 1 and 2, 3 apart
        let p = CovParams::new(1.0, 2.0).unwrap();
        let locs = pts(&[(1.0, 0.0), (-2.0, 0.0)]);
        let gp = DenseGP::new(locs.clone(), p).unwrap();
        let (mu, var) = dense_conditional(&gp, &[1.0, -1.0], Point::new(0.0, 0.0)).unwrap();

        let (c1, c2, r) = ((-2.0f64).exp(), (-4.0f64).exp(), (-6.0f64).exp());
        let det = 1.0 - r * r;
        // inverse of [[1, r], [r, 1]] times c
        let w1 = (c1 - r * c2) / det;
        let w2 = (c2 - r * c1) / det;
        let want_mu = w1 - w2;
        let want_var = 1.0 - (w1 * c1 + w2 * c2);
        assert!((mu - want_mu).abs() < 1e-9, "{mu} vs {want_mu}");
        assert!((var - want_var).abs() < 1e-9, "{var} vs {want_var}");
    }

    #[test]
    fn block_update_two_by_two() {
        let p = CovParams::new(1.5, 0.7).unwrap();
        let d = 0.8f64;
        let c = 1.5 * (-0.7 * d).exp();
        let cinv = DMatrix::from_element(1, 1, 1.0 / 1.5);
        let var_new = 1.5 - c * c / 1.5;
        let out = block_inverse_update(&cinv, &DVector::from_element(1, c), var_new).unwrap();
        let det = 1.5 * 1.5 - c * c;
        let want = DMatrix::from_row_slice(2, 2, &[1.5 / det, -c / det, -c / det, 1.5 / det]);
        assert!((out - want).abs().max() < 1e-12);
        let _ = p;
    }

    #[test]
    fn block_update_independent_point() {
        let cinv = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let out = block_inverse_update(&cinv, &DVector::zeros(2), 0.25).unwrap();
        assert_eq!(out[(2, 2)], 4.0);
        assert_eq!(out[(0, 2)], 0.0);
        assert_eq!(out.view((0, 0), (2, 2)), cinv.view((0, 0), (2, 2)));
    }

    #[test]
    fn block_update_rejects_degenerate_variance() {
        let cinv = DMatrix::identity(1, 1);
        let err = block_inverse_update(&cinv, &DVector::zeros(1), 1e-13).unwrap_err();
        assert!(matches!(err, Error::DegenerateUpdate { .. }));
    }

    #[test]
    fn downdate_inverts_update() {
        let p = CovParams::new(1.0, 1.0).unwrap();
        let locs = pts(&[(0.0, 0.0), (0.5, 0.1), (0.9, 0.7), (0.2, 0.8)]);
        let full = covariance_matrix(&p, &locs).try_inverse().unwrap();
        let sub: Vec<Point> = [0, 1, 3].iter().map(|&i| locs[i]).collect();
        let want = covariance_matrix(&p, &sub).try_inverse().unwrap();
        let got = block_inverse_downdate(&full, 2);
        assert!((got - want).abs().max() < 1e-9);
    }

    #[test]
    fn clamp_variance_window() {
        assert_eq!(clamp_variance(-1e-12, 1.0).unwrap(), 0.0);
        assert!(clamp_variance(-1e-6, 1.0).is_err());
    }
}
