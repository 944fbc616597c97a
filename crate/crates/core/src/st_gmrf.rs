//! Separable space-time GMRFs: stationary AR(1) in time with unit marginal
//! variance, Kronecker-combined with a spatial precision, plus sampling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sparse::{Cholesky, SparseSymmetric, TripletBuilder};

/// Default cap on the latent dimension `T·m`.
pub const DEFAULT_MAX_DIM: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArParams {
    pub phi: f64,
    pub t: usize,
}

impl ArParams {
    pub fn new(phi: f64, t: usize) -> Result<Self> {
        if !(phi.abs() < 1.0) {
            return Err(invalid(format!("AR(1) coefficient must satisfy |phi| < 1, got {phi}")));
        }
        if t == 0 {
            return Err(invalid("number of time steps must be at least 1"));
        }
        Ok(Self { phi, t })
    }

    /// Entries of the tridiagonal precision: `(diag(t), off-diagonal)`.
    fn coefficients(&self) -> ([f64; 3], f64) {
        let s = 1.0 - self.phi * self.phi;
        if self.t == 1 {
            return ([1.0, 1.0, 1.0], 0.0);
        }
        ([1.0 / s, (1.0 + self.phi * self.phi) / s, 1.0 / s], -self.phi / s)
    }

    fn diag(&self, t: usize) -> f64 {
        let (d, _) = self.coefficients();
        if t == 0 {
            d[0]
        } else if t + 1 == self.t {
            d[2]
        } else {
            d[1]
        }
    }

    /// `log det R = −(T−1) log(1−φ²)`.
    pub fn log_det(&self) -> f64 {
        -((self.t - 1) as f64) * (1.0 - self.phi * self.phi).ln()
    }
}

/// Precision of a stationary unit-variance AR(1) over `a.t` steps.
pub fn ar1_precision(a: &ArParams) -> Result<SparseSymmetric> {
    let a = ArParams::new(a.phi, a.t)?;
    let (_, off) = a.coefficients();
    let mut b = TripletBuilder::with_capacity(a.t, 2 * a.t);
    for t in 0..a.t {
        b.add(t, t, a.diag(t));
        if t + 1 < a.t {
            b.add(t + 1, t, off);
        }
    }
    Ok(b.build())
}

/// Pattern of `R ⊗ Q_s` (time-major blocks, index `t·m + j`) with a map
/// from each stored entry back to its spatial entry, so new values for
/// other `(Q_s, φ)` cost one pass.
#[derive(Debug, Clone)]
pub struct KroneckerStructure {
    t: usize,
    m: usize,
    pattern: SparseSymmetric,
    /// Per stored entry: time index of the column block, whether the entry
    /// sits in the sub-diagonal time block, and the spatial value index.
    src: Vec<(u32, bool, u32)>,
}

impl KroneckerStructure {
    pub fn new(qs: &SparseSymmetric, t: usize, max_dim: usize) -> Result<Self> {
        let m = qs.n();
        let dim = m.checked_mul(t).unwrap_or(usize::MAX);
        if dim > max_dim {
            return Err(Error::DimensionTooLarge { dim, cap: max_dim });
        }
        if t == 0 {
            return Err(invalid("number of time steps must be at least 1"));
        }
        // Full columns of Q_s with indices into its value array.
        let mut full: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m];
        let (cp, ri) = (qs.col_ptr(), qs.row_idx());
        for j in 0..m {
            for q in cp[j]..cp[j + 1] {
                let i = ri[q];
                full[j].push((i, q));
                if i != j {
                    full[i].push((j, q));
                }
            }
        }
        for col in &mut full {
            col.sort_unstable();
        }
        let nnz = t * qs.nnz() + t.saturating_sub(1) * (2 * qs.nnz() - m);
        let mut col_ptr = Vec::with_capacity(t * m + 1);
        let mut row_idx = Vec::with_capacity(nnz);
        let mut src = Vec::with_capacity(nnz);
        col_ptr.push(0);
        for tb in 0..t {
            for j in 0..m {
                for q in cp[j]..cp[j + 1] {
                    row_idx.push(tb * m + ri[q]);
                    src.push((tb as u32, false, q as u32));
                }
                if tb + 1 < t {
                    for &(i, q) in &full[j] {
                        row_idx.push((tb + 1) * m + i);
                        src.push((tb as u32, true, q as u32));
                    }
                }
                col_ptr.push(row_idx.len());
            }
        }
        let values = vec![0.0; row_idx.len()];
        let pattern = SparseSymmetric::from_csc(t * m, col_ptr, row_idx, values)?;
        Ok(Self { t, m, pattern, src })
    }

    pub fn pattern(&self) -> &SparseSymmetric {
        &self.pattern
    }

    pub fn n_spatial(&self) -> usize {
        self.m
    }

    pub fn n_times(&self) -> usize {
        self.t
    }

    /// `R(φ) ⊗ Q_s`, where `qs` has the pattern the structure was built from.
    pub fn assemble(&self, qs: &SparseSymmetric, a: &ArParams) -> Result<SparseSymmetric> {
        if a.t != self.t || qs.n() != self.m {
            return Err(invalid("dimensions differ from the analyzed space-time structure"));
        }
        let a = ArParams::new(a.phi, a.t)?;
        let (_, off) = a.coefficients();
        let qv = qs.values();
        let values = self
            .src
            .iter()
            .map(|&(tb, lower, q)| {
                let r = if lower { off } else { a.diag(tb as usize) };
                r * qv[q as usize]
            })
            .collect();
        Ok(self.pattern.with_values(values))
    }
}

/// `R ⊗ Q_s` in time-major block order.
pub fn st_precision(qs: &SparseSymmetric, a: &ArParams, max_dim: usize) -> Result<SparseSymmetric> {
    KroneckerStructure::new(qs, a.t, max_dim)?.assemble(qs, a)
}

/// `log det (R ⊗ Q_s) = T·log det Q_s + m·log det R`.
pub fn st_log_det(qs_log_det: f64, m: usize, a: &ArParams) -> f64 {
    a.t as f64 * qs_log_det + m as f64 * a.log_det()
}

/// Draws `n_samples` vectors with precision `q`.
pub fn sample_gmrf(q: &SparseSymmetric, seed: u64, n_samples: usize) -> Result<Vec<Vec<f64>>> {
    let chol = Cholesky::factor(q)?;
    Ok(sample_with_factor(&chol, seed, n_samples))
}

/// Space-time elimination order from a spatial one: the time slices of each
/// vertex are kept together (index `t·m + v`).
pub fn st_ordering(spatial: &[usize], t: usize) -> Vec<usize> {
    let m = spatial.len();
    spatial.iter().flat_map(|&v| (0..t).map(move |k| k * m + v)).collect()
}

/// Draws from an existing factorization; deterministic for a given seed.
pub fn sample_with_factor(chol: &Cholesky, seed: u64, n_samples: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = chol.n();
    (0..n_samples)
        .map(|_| {
            let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            chol.sample_with(&z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use crate::mesh::{build_mesh, MeshConfig};
    use crate::spde::{spde_precision, MaternParams};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn dense(a: &SparseSymmetric) -> DMatrix<f64> {
        DMatrix::from_row_slice(a.n(), a.n(), &a.to_dense())
    }

    fn small_qs() -> SparseSymmetric {
        let mesh = build_mesh(&[Polygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap()], &MeshConfig::new(0.3, 0.3, 0.0)).unwrap();
        assert!(mesh.n_vertices() <= 50);
        spde_precision(&mesh, &MaternParams::new(0.5, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn ar1_examples() {
        let r = ar1_precision(&ArParams::new(0.9, 1).unwrap()).unwrap();
        assert_eq!(r.to_dense(), vec![1.0]);
        let r = dense(&ar1_precision(&ArParams::new(0.0, 3).unwrap()).unwrap());
        assert_eq!(r, DMatrix::identity(3, 3));
        let r = dense(&ar1_precision(&ArParams::new(0.5, 2).unwrap()).unwrap());
        let want = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]) / 0.75;
        assert!((r - want).abs().max() < 1e-14);
        assert!(ArParams::new(1.0, 3).is_err());
        assert!(ArParams::new(-1.2, 3).is_err());
        assert!(ArParams::new(0.2, 0).is_err());
    }

    #[test]
    fn ar1_has_unit_marginal_variance_and_log_det() {
        for t in 1..=10 {
            for phi in [-0.6, 0.0, 0.3, 0.78, 0.95] {
                let a = ArParams::new(phi, t).unwrap();
                let r = dense(&ar1_precision(&a).unwrap());
                let cov = r.clone().try_inverse().unwrap();
                for i in 0..t {
                    assert_abs_diff_eq!(cov[(i, i)], 1.0, epsilon = 1e-10);
                    if i + 1 < t {
                        assert_abs_diff_eq!(cov[(i, i + 1)], phi, epsilon = 1e-10);
                    }
                }
                assert_abs_diff_eq!(r.determinant().ln(), a.log_det(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn kronecker_special_cases() {
        let qs = small_qs();
        let one = st_precision(&qs, &ArParams::new(0.6, 1).unwrap(), DEFAULT_MAX_DIM).unwrap();
        assert_eq!(one.to_dense(), qs.to_dense());
        let m = qs.n();
        let indep = dense(&st_precision(&qs, &ArParams::new(0.0, 3).unwrap(), DEFAULT_MAX_DIM).unwrap());
        let qd = dense(&qs);
        for a in 0..3 {
            for b in 0..3 {
                let block = indep.view((a * m, b * m), (m, m));
                if a == b {
                    assert_eq!(block, qd);
                } else {
                    assert!(block.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn kronecker_matches_dense_product_and_pattern() {
        let qs = small_qs();
        let a = ArParams::new(0.7, 4).unwrap();
        let q = st_precision(&qs, &a, DEFAULT_MAX_DIM).unwrap();
        let want = dense(&ar1_precision(&a).unwrap()).kronecker(&dense(&qs));
        assert!((dense(&q) - &want).abs().max() < 1e-12);
        let m = qs.n();
        assert_eq!(q.nnz(), 4 * qs.nnz() + 3 * (2 * qs.nnz() - m));
        let cov = want.try_inverse().unwrap();
        for j in 0..m {
            for t in 0..3 {
                let (i0, i1) = (t * m + j, (t + 1) * m + j);
                let corr = cov[(i0, i1)] / (cov[(i0, i0)] * cov[(i1, i1)]).sqrt();
                assert_abs_diff_eq!(corr, 0.7, epsilon = 1e-6);
            }
        }
        let ld = st_log_det(Cholesky::factor(&qs).unwrap().log_det(), m, &a);
        assert_abs_diff_eq!(Cholesky::factor(&q).unwrap().log_det(), ld, epsilon = 1e-8);
    }

    #[test]
    fn dimension_cap_enforced() {
        let qs = small_qs();
        let err = st_precision(&qs, &ArParams::new(0.5, 10).unwrap(), 5 * qs.n()).unwrap_err();
        assert!(matches!(err, Error::DimensionTooLarge { .. }));
    }

    #[test]
    fn identity_samples_have_unit_variance() {
        let draws = sample_gmrf(&SparseSymmetric::identity(1000), 7, 2000).unwrap();
        let n = (draws.len() * 1000) as f64;
        let var: f64 = draws.iter().flatten().map(|x| x * x).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.1);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let qs = small_qs();
        let a = sample_gmrf(&qs, 42, 3).unwrap();
        let b = sample_gmrf(&qs, 42, 3).unwrap();
        let c = sample_gmrf(&qs, 43, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(sample_gmrf(&qs.scaled(-1.0), 1, 1).is_err());
    }

    #[test]
    fn ar1_samples_have_target_lag_one_correlation() {
        let a = ArParams::new(0.78, 50).unwrap();
        let draws = sample_gmrf(&ar1_precision(&a).unwrap(), 2024, 500).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for x in &draws {
            for t in 0..49 {
                num += x[t] * x[t + 1];
                den += 0.5 * (x[t] * x[t] + x[t + 1] * x[t + 1]);
            }
        }
        assert!((num / den - 0.78).abs() < 0.05, "lag-1 correlation {}", num / den);
    }

    #[test]
    fn sample_covariance_converges() {
        let mesh = build_mesh(&[Polygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap()], &MeshConfig::new(0.5, 0.5, 0.0)).unwrap();
        assert!(mesh.n_vertices() <= 20);
        let q = spde_precision(&mesh, &MaternParams::new(0.8, 1.0).unwrap()).unwrap();
        let m = q.n();
        let draws = sample_gmrf(&q, 11, 100_000).unwrap();
        let mut emp = DMatrix::<f64>::zeros(m, m);
        for x in &draws {
            let v = nalgebra::DVector::from_column_slice(x);
            emp += &v * v.transpose();
        }
        emp /= draws.len() as f64;
        let cov = dense(&q).try_inverse().unwrap();
        let rel = (emp - &cov).norm() / cov.norm();
        assert!(rel < 0.05, "relative Frobenius error {rel}");
    }
}
