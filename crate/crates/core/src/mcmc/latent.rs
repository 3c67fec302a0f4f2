//! Latent-field update.
//!
//! The full conditional of `z` on one slice is `N(z; μ, C) Π Φ(w_i z_i)` with
//! `w_i = +1` on observed and `−1` on thinned points. With `v0 = W(z − μ) + ε`,
//! `ε ~ N(0, I)`, the constraint `ε_i > −w_i z_i` becomes `v0_i > −w_i μ_i`, so
//! the pair `(z, v0)` is jointly Gaussian restricted to an orthant in `v0`:
//! `v0 | z` is a product of univariate truncated normals and `z | v0` is the
//! Gaussian `N(μ + C W Γ⁻¹ v0, C − C W Γ⁻¹ W C)`, `Γ = I + W C W`.
//!
//! Under the NNGP backend `C` is the sparse-factor covariance `C̃` and `Γ` is
//! formed from it exactly; a separate neighbor approximation of `Γ` would make
//! the two conditionals incompatible, and the resulting chain can diverge.
//! That approximation only serves as a preconditioner.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::state::{AugmentedState, SliceState};
use super::{Backend, ChainConfig};
use crate::error::{Error, Result};
use crate::gp::{cholesky, covariance_matrix, CovParams};
use crate::nngp::{build_neighbor_graph, nngp_factor_pair, SparseFactor};
use crate::special::{normal_above, standard_normal, std_normal_above};

/// Exact draw of `v0 | z`.
fn draw_v0<R: Rng + ?Sized>(z: &[f64], mean: &[f64], signs: &[f64], rng: &mut R) -> Vec<f64> {
    z.iter()
        .zip(mean)
        .zip(signs)
        .map(|((&zi, &mi), &wi)| wi * (zi - mi) + std_normal_above(-wi * zi, rng))
        .collect()
}

/// Solves `Γ y = b` for `Γ = I + W C̃ W` by conjugate gradients, preconditioned
/// with the nearest-neighbor factor of `Γ` (exact when the graph is saturated).
fn solve_gamma(cf: &SparseFactor, gf: &SparseFactor, signs: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    const TOL: f64 = 1e-10;
    const MAX_ITER: usize = 1000;
    let apply = |x: &[f64]| -> Vec<f64> {
        let wx: Vec<f64> = x.iter().zip(signs).map(|(a, w)| a * w).collect();
        let cwx = cf.cov_mul(&wx);
        x.iter()
            .zip(&cwx)
            .zip(signs)
            .map(|((a, c), w)| a + w * c)
            .collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; b.len()];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z = gf.precision_mul(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..MAX_ITER {
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= TOL * b_norm {
            return Ok(x);
        }
        z = gf.precision_mul(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = dot(&r, &r).sqrt() / b_norm;
    if rel <= 1e-6 {
        return Ok(x);
    }
    Err(Error::NumericalFailure {
        iteration: 0,
        message: format!("auxiliary solve stalled at relative residual {rel:.2e}"),
        dump: None,
    })
}

fn sweep_dense<R: Rng + ?Sized>(
    precision: &DMatrix<f64>,
    v0: &mut [f64],
    lower: &[f64],
    rng: &mut R,
) {
    let mut pv = precision * DVector::from_column_slice(v0);
    for i in 0..v0.len() {
        let p_ii = precision[(i, i)];
        let cond_mean = v0[i] - pv[i] / p_ii;
        let new = normal_above(cond_mean, 1.0 / p_ii.sqrt(), lower[i], rng);
        let delta = new - v0[i];
        pv += precision.column(i) * delta;
        v0[i] = new;
    }
}

/// Draws new latent values for one slice given its points, prior means and
/// innovation kernel. Returns the new `z` in reference order.
pub fn sample_latent_slice<R: Rng + ?Sized>(
    slice: &SliceState,
    kernel: CovParams,
    m: usize,
    backend: Backend,
    v0_sweeps: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let k = slice.k();
    if k == 0 {
        return Ok(Vec::new());
    }
    let points = slice.points();
    let mean = slice.mean();
    let z = slice.z();
    let signs = slice.signs();

    let mut v0 = draw_v0(&z, &mean, &signs, rng);
    let x = match backend {
        Backend::Nngp => {
            let graph = build_neighbor_graph(&points, m)?;
            let (cf, gf) = nngp_factor_pair(&graph, &points, &kernel, &signs)?;
            // Matheron update: joint prior draw (x*, v*), then correct by the data residual.
            let zeros = vec![0.0; k];
            let x_star = cf.sample(&zeros, rng);
            let resid: Vec<f64> = (0..k)
                .map(|i| v0[i] - (signs[i] * x_star[i] + standard_normal(rng)))
                .collect();
            let y = solve_gamma(&cf, &gf, &signs, &resid)?;
            let wy: Vec<f64> = y.iter().zip(&signs).map(|(a, w)| a * w).collect();
            let corr = cf.cov_mul(&wy);
            x_star
                .iter()
                .zip(&corr)
                .map(|(a, b)| a + b)
                .collect::<Vec<f64>>()
        }
        Backend::Dense => {
            let lower: Vec<f64> = signs.iter().zip(&mean).map(|(w, m)| -w * m).collect();
            let c = covariance_matrix(&kernel, &points);
            let w = DVector::from_column_slice(&signs);
            let mut gamma = c.component_mul(&(&w * w.transpose()));
            for i in 0..k {
                gamma[(i, i)] += 1.0;
            }
            let chol_g = cholesky(gamma, "auxiliary covariance is not positive definite")?;
            if v0_sweeps > 0 {
                let precision = chol_g.inverse();
                for _ in 0..v0_sweeps {
                    sweep_dense(&precision, &mut v0, &lower, rng);
                }
            }
            let chol_c = cholesky(c.clone(), "slice covariance is not positive definite")?;
            let eps = DVector::from_iterator(k, (0..k).map(|_| standard_normal(rng)));
            let x_star = chol_c.l() * eps;
            let v_star = DVector::from_iterator(
                k,
                (0..k).map(|i| signs[i] * x_star[i] + standard_normal(rng)),
            );
            let y = chol_g.solve(&(DVector::from_column_slice(&v0) - v_star));
            let x = x_star + c * y.component_mul(&w);
            x.iter().copied().collect()
        }
    };
    Ok(x.iter().zip(&mean).map(|(a, b)| a + b).collect())
}

/// Latent update of every slice in time order. Prior means of slice `t` are
/// recomputed from the freshly updated slice `t − 1` before it is sampled.
pub fn sample_latent<R: Rng>(
    state: &mut AugmentedState,
    cfg: &ChainConfig,
    mut rng_for_slice: impl FnMut(usize) -> R,
) -> Result<()> {
    for t in 0..state.slices.len() {
        state.refresh_means(t, cfg.m, cfg.backend)?;
        let mut rng = rng_for_slice(t);
        let z = sample_latent_slice(
            &state.slices[t],
            state.stp.innovation(t),
            cfg.m,
            cfg.backend,
            cfg.v0_sweeps,
            &mut rng,
        )?;
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                iteration: 0,
                message: format!(
                    "non-finite latent value at point {} of slice {}",
                    i + 1,
                    t + 1
                ),
                dump: None,
            });
        }
        state.slices[t].set_z(&z);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_thinned_slice_is_pushed_negative() {
        let mut s = SliceState::default();
        for i in 0..3 {
            s.push_thinned(Point::new(i as f64, 0.0), 0.0, 0.0);
        }
        let kernel = CovParams::new(1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sum = 0.0;
        let n = 4000;
        for _ in 0..n {
            let z = sample_latent_slice(&s, kernel, 2, Backend::Nngp, 1, &mut rng).unwrap();
            s.set_z(&z);
            sum += z.iter().sum::<f64>();
        }
        assert!(sum / ((3 * n) as f64) < -0.2);
    }

    #[test]
    fn gamma_solve_uses_the_sparse_covariance_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Point> = (0..60)
            .map(|_| Point::new(rng.gen::<f64>(), rng.gen::<f64>()))
            .collect();
        let signs: Vec<f64> = (0..60)
            .map(|i| if i % 3 == 0 { -1.0 } else { 1.0 })
            .collect();
        let kernel = CovParams::new(1.0, 1.0).unwrap();
        let graph = build_neighbor_graph(&pts, 4).unwrap();
        let (cf, gf) = nngp_factor_pair(&graph, &pts, &kernel, &signs).unwrap();
        let b: Vec<f64> = (0..60).map(|_| standard_normal(&mut rng)).collect();
        let y = solve_gamma(&cf, &gf, &signs, &b).unwrap();
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(&signs));
        let gamma = DMatrix::identity(60, 60) + &w * cf.dense_covariance() * &w;
        let r = gamma * DVector::from_column_slice(&y) - DVector::from_column_slice(&b);
        assert!(r.norm() < 1e-9 * DVector::from_column_slice(&b).norm());
    }

    #[test]
    fn empty_slice_is_a_no_op() {
        let s = SliceState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = sample_latent_slice(
            &s,
            CovParams::new(1.0, 1.0).unwrap(),
            3,
            Backend::Dense,
            1,
            &mut rng,
        )
        .unwrap();
        assert!(z.is_empty());
    }
}
