use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::graph::NeighborGraph;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::gp::{clamp_variance, Covariance, JITTER};
use crate::par::map_range;
use crate::special::standard_normal;

/// Rows handed to one rayon task; keeps scheduling overhead small for cheap rows.
const ROW_CHUNK: usize = 64;

/// Sparse Cholesky-type factor `C̃ = (I − A)⁻¹ D (I − A)⁻ᵀ` with `A` strictly
/// lower-triangular and row `i` of `A` supported on the neighbor set of `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseFactor {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    coefs: Vec<f64>,
    d: Vec<f64>,
}

struct Row {
    coefs: Vec<f64>,
    d: f64,
}

impl SparseFactor {
    fn assemble(graph: &NeighborGraph, rows: Vec<Row>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut cols = Vec::new();
        let mut coefs = Vec::new();
        let mut d = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            cols.extend_from_slice(graph.neighbors(i));
            coefs.extend_from_slice(&row.coefs);
            offsets.push(cols.len());
            d.push(row.d);
        }
        SparseFactor {
            offsets,
            cols,
            coefs,
            d,
        }
    }

    /// Builds a factor from explicit rows; `rows[i]` lists `(column, coefficient)` pairs.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, d: Vec<f64>) -> Result<Self> {
        if rows.len() != d.len() {
            return Err(Error::validation("row count differs from diagonal length"));
        }
        if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| v.is_nan() || **v <= 0.0) {
            return Err(Error::validation(format!(
                "conditional variance d[{i}] = {v} is not positive"
            )));
        }
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut coefs = Vec::new();
        for (i, row) in rows.into_iter().enumerate() {
            for (j, a) in row {
                if j >= i {
                    return Err(Error::validation(
                        "factor rows must be strictly lower triangular",
                    ));
                }
                cols.push(j);
                coefs.push(a);
            }
            offsets.push(cols.len());
        }
        Ok(SparseFactor {
            offsets,
            cols,
            coefs,
            d,
        })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.cols[r.clone()], &self.coefs[r])
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// Conditional mean of element `i` given earlier values (both centred).
    #[inline]
    fn predict_row(&self, i: usize, centred: &[f64]) -> f64 {
        let (cols, coefs) = self.row(i);
        cols.iter().zip(coefs).map(|(&j, &a)| a * centred[j]).sum()
    }

    pub fn log_density(&self, values: &[f64], mean: &[f64]) -> f64 {
        let centred: Vec<f64> = values.iter().zip(mean).map(|(v, m)| v - m).collect();
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        (0..self.len())
            .map(|i| {
                let r = centred[i] - self.predict_row(i, &centred);
                -0.5 * (ln2pi + self.d[i].ln() + r * r / self.d[i])
            })
            .sum()
    }

    /// Sequential draw from N(mean, C̃).
    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Vec<f64> {
        self.sample_given_prefix(mean, &[], rng)
    }

    /// Sequential draw with the first `prefix.len()` values held fixed.
    pub fn sample_given_prefix<R: Rng + ?Sized>(
        &self,
        mean: &[f64],
        prefix: &[f64],
        rng: &mut R,
    ) -> Vec<f64> {
        let n = self.len();
        let mut centred = vec![0.0; n];
        for (i, v) in prefix.iter().enumerate() {
            centred[i] = v - mean[i];
        }
        for i in prefix.len()..n {
            centred[i] = self.predict_row(i, &centred) + self.d[i].sqrt() * standard_normal(rng);
        }
        centred.iter().zip(mean).map(|(c, m)| c + m).collect()
    }

    /// `(I − A) x`.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| x[i] - self.predict_row(i, x))
            .collect()
    }

    /// `C̃⁻¹ x = (I − A)ᵀ D⁻¹ (I − A) x`.
    pub fn precision_mul(&self, x: &[f64]) -> Vec<f64> {
        let s: Vec<f64> = self
            .residual(x)
            .iter()
            .zip(&self.d)
            .map(|(r, d)| r / d)
            .collect();
        let mut out = s.clone();
        for (i, &si) in s.iter().enumerate() {
            let (cols, coefs) = self.row(i);
            for (&j, &a) in cols.iter().zip(coefs) {
                out[j] -= a * si;
            }
        }
        out
    }

    /// `C̃ x = (I − A)⁻¹ D (I − A)⁻ᵀ x` by two sparse triangular solves.
    pub fn cov_mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        // (I − A)ᵀ p = x, back substitution
        let mut p = x.to_vec();
        for i in (0..n).rev() {
            let pi = p[i];
            let (cols, coefs) = self.row(i);
            for (&j, &a) in cols.iter().zip(coefs) {
                p[j] += a * pi;
            }
        }
        for (pi, d) in p.iter_mut().zip(&self.d) {
            *pi *= d;
        }
        // (I − A) y = q, forward substitution
        let mut y = p;
        for i in 0..n {
            let s = self.predict_row(i, &y);
            y[i] += s;
        }
        y
    }

    /// Column-wise view of `A`: for each `j`, the `(i, a_ij)` pairs with `j ∈ N(i)`.
    pub fn transposed(&self) -> Vec<Vec<(usize, f64)>> {
        let mut t = vec![Vec::new(); self.len()];
        for i in 0..self.len() {
            let (cols, coefs) = self.row(i);
            for (&j, &a) in cols.iter().zip(coefs) {
                t[j].push((i, a));
            }
        }
        t
    }

    /// Dense `I − A`.
    pub fn dense_i_minus_a(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::identity(n, n);
        for i in 0..n {
            let (cols, coefs) = self.row(i);
            for (&j, &a) in cols.iter().zip(coefs) {
                m[(i, j)] = -a;
            }
        }
        m
    }

    pub fn dense_precision(&self) -> DMatrix<f64> {
        let b = self.dense_i_minus_a();
        let dinv = DMatrix::from_diagonal(&DVector::from_iterator(
            self.len(),
            self.d.iter().map(|d| 1.0 / d),
        ));
        b.transpose() * dinv * b
    }

    pub fn dense_covariance(&self) -> DMatrix<f64> {
        let n = self.len();
        let binv = self
            .dense_i_minus_a()
            .try_inverse()
            .expect("unit lower-triangular matrices are invertible");
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&self.d));
        let c = &binv * d * binv.transpose();
        debug_assert_eq!(c.nrows(), n);
        c
    }
}

/// Regression weights and conditional variance of `target` on `neighbors`
/// under `kernel`. The matrix closure supplies the neighbor covariance entries.
fn solve_row(
    nbr_cov: DMatrix<f64>,
    cross: DVector<f64>,
    prior_var: f64,
    floor: f64,
    label: impl FnOnce() -> String,
) -> Result<Row> {
    if cross.is_empty() {
        return Ok(Row {
            coefs: Vec::new(),
            d: prior_var.max(floor),
        });
    }
    let chol = nalgebra::Cholesky::new(nbr_cov).ok_or_else(|| Error::Factorization(label()))?;
    let a = chol.solve(&cross);
    let var = clamp_variance(prior_var - a.dot(&cross), prior_var)?;
    Ok(Row {
        coefs: a.iter().copied().collect(),
        d: var.max(floor),
    })
}

fn neighbor_cov<K: Covariance + ?Sized>(
    kernel: &K,
    points: &[Point],
    nbrs: &[usize],
    jitter: f64,
) -> DMatrix<f64> {
    let k = nbrs.len();
    let mut m = DMatrix::zeros(k, k);
    for b in 0..k {
        m[(b, b)] = kernel.variance() + jitter;
        for a in (b + 1)..k {
            let c = kernel.cov(points[nbrs[a]], points[nbrs[b]]);
            m[(a, b)] = c;
            m[(b, a)] = c;
        }
    }
    m
}

fn check_graph(graph: &NeighborGraph, points: &[Point]) -> Result<()> {
    if graph.len() != points.len() {
        return Err(Error::validation(format!(
            "neighbor graph covers {} points but {} were supplied",
            graph.len(),
            points.len()
        )));
    }
    Ok(())
}

pub fn nngp_factor<K: Covariance + ?Sized>(
    graph: &NeighborGraph,
    points: &[Point],
    kernel: &K,
) -> Result<SparseFactor> {
    check_graph(graph, points)?;
    let var = kernel.variance();
    let jitter = JITTER * var;
    let rows = map_range(points.len(), ROW_CHUNK, |i| {
        let nbrs = graph.neighbors(i);
        let cross = DVector::from_iterator(
            nbrs.len(),
            nbrs.iter().map(|&j| kernel.cov(points[j], points[i])),
        );
        solve_row(
            neighbor_cov(kernel, points, nbrs, jitter),
            cross,
            var,
            jitter,
            || format!("neighbor covariance of row {i} is singular"),
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(SparseFactor::assemble(graph, rows))
}

/// Factors of both `C` and `Γ = I + W C W` (W = diag(signs)) on one graph,
/// sharing the neighbor covariance evaluations.
pub fn nngp_factor_pair<K: Covariance + ?Sized>(
    graph: &NeighborGraph,
    points: &[Point],
    kernel: &K,
    signs: &[f64],
) -> Result<(SparseFactor, SparseFactor)> {
    check_graph(graph, points)?;
    if signs.len() != points.len() {
        return Err(Error::validation("one sign per point is required"));
    }
    let var = kernel.variance();
    let jitter = JITTER * var;
    let rows = map_range(points.len(), ROW_CHUNK, |i| {
        let nbrs = graph.neighbors(i);
        let c_nn = neighbor_cov(kernel, points, nbrs, jitter);
        let cross = DVector::from_iterator(
            nbrs.len(),
            nbrs.iter().map(|&j| kernel.cov(points[j], points[i])),
        );
        let mut g_nn = c_nn.clone();
        for b in 0..nbrs.len() {
            for a in 0..nbrs.len() {
                g_nn[(a, b)] *= signs[nbrs[a]] * signs[nbrs[b]];
            }
            g_nn[(b, b)] += 1.0;
        }
        let g_cross = DVector::from_iterator(
            nbrs.len(),
            nbrs.iter()
                .zip(cross.iter())
                .map(|(&j, c)| signs[i] * signs[j] * c),
        );
        let c_row = solve_row(c_nn, cross, var, jitter, || {
            format!("neighbor covariance of row {i} is singular")
        })?;
        let g_row = solve_row(g_nn, g_cross, 1.0 + var, jitter, || {
            format!("neighbor Γ block of row {i} is singular")
        })?;
        Ok((c_row, g_row))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (c_rows, g_rows): (Vec<Row>, Vec<Row>) = rows.into_iter().unzip();
    Ok((
        SparseFactor::assemble(graph, c_rows),
        SparseFactor::assemble(graph, g_rows),
    ))
}

pub fn nngp_log_density(factor: &SparseFactor, values: &[f64], mean: &[f64]) -> f64 {
    factor.log_density(values, mean)
}

pub fn nngp_sample_prior<R: Rng + ?Sized>(
    factor: &SparseFactor,
    mean: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    factor.sample(mean, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::CovParams;
    use crate::nngp::build_neighbor_graph;

    #[test]
    fn single_point_factor() {
        let p = CovParams::new(2.5, 1.0).unwrap();
        let pts = [Point::new(0.3, 0.3)];
        let g = build_neighbor_graph(&pts, 3).unwrap();
        let f = nngp_factor(&g, &pts, &p).unwrap();
        assert_eq!(f.row(0).0.len(), 0);
        assert_eq!(f.d(), &[2.5]);
    }

    #[test]
    fn standard_normal_log_density() {
        let p = CovParams::new(1.0, 1.0).unwrap();
        let pts = [Point::new(0.0, 0.0)];
        let f = nngp_factor(&build_neighbor_graph(&pts, 1).unwrap(), &pts, &p).unwrap();
        let want = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((f.log_density(&[0.0], &[0.0]) - want).abs() < 1e-15);
    }

    #[test]
    fn from_rows_validates() {
        assert!(SparseFactor::from_rows(vec![vec![]], vec![0.0]).is_err());
        assert!(SparseFactor::from_rows(vec![vec![], vec![(1, 0.5)]], vec![1.0, 1.0]).is_err());
        assert!(SparseFactor::from_rows(vec![vec![], vec![(0, 0.5)]], vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn cov_mul_inverts_precision_mul() {
        let p = CovParams::new(1.0, 0.8).unwrap();
        let pts: Vec<Point> = (0..30)
            .map(|i| Point::new((i % 6) as f64 * 0.7, (i / 6) as f64 * 0.5))
            .collect();
        let f = nngp_factor(&build_neighbor_graph(&pts, 4).unwrap(), &pts, &p).unwrap();
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = f.cov_mul(&f.precision_mul(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
