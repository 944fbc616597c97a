//! Finite-element matrices and the SPDE precision of a Matérn field with
//! smoothness ν = 1 (α = 2) in two dimensions.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mesh::Mesh;
use crate::sparse::{nested_dissection_order, sandwich_diag, SparseSymmetric, TripletBuilder};
use crate::special::{bessel_k, gamma};

/// Matérn field parameters: range `rho` (distance at which the correlation
/// is about 0.14 for ν = 1), marginal standard deviation `sigma` and
/// smoothness `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub rho: f64,
    pub sigma: f64,
    pub nu: f64,
}

impl MaternParams {
    /// Parameters with ν = 1.
    pub fn new(rho: f64, sigma: f64) -> Result<Self> {
        Self::with_nu(rho, sigma, 1.0)
    }

    pub fn with_nu(rho: f64, sigma: f64, nu: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(invalid(format!("range must be positive, got {rho}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("standard deviation must be positive, got {sigma}")));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(invalid(format!("smoothness must be positive, got {nu}")));
        }
        Ok(Self { rho, sigma, nu })
    }

    /// Inverse of [`MaternParams::kappa`] and [`MaternParams::tau`] for d = 2.
    pub fn from_kappa_tau(kappa: f64, tau: f64, nu: f64) -> Result<Self> {
        if !(kappa > 0.0 && tau > 0.0) {
            return Err(invalid("kappa and tau must be positive"));
        }
        let rho = (8.0 * nu).sqrt() / kappa;
        let var = gamma(nu) / (gamma(nu + 1.0) * 4.0 * PI * kappa.powf(2.0 * nu) * tau * tau);
        Self::with_nu(rho, var.sqrt(), nu)
    }

    pub fn kappa(&self) -> f64 {
        (8.0 * self.nu).sqrt() / self.rho
    }

    /// Scale of the white noise giving marginal variance σ² in d = 2:
    /// σ² = Γ(ν) / (Γ(ν+1) (4π) κ^{2ν} τ²).
    pub fn tau(&self) -> f64 {
        let k = self.kappa();
        (gamma(self.nu) / (gamma(self.nu + 1.0) * 4.0 * PI * k.powf(2.0 * self.nu))).sqrt() / self.sigma
    }

    pub fn log_kappa(&self) -> f64 {
        self.kappa().ln()
    }

    pub fn log_tau(&self) -> f64 {
        self.tau().ln()
    }
}

/// Matérn correlation at distance `r`; 1 at r = 0.
pub fn matern_correlation(r: f64, p: &MaternParams) -> f64 {
    debug_assert!(r >= 0.0);
    let x = p.kappa() * r;
    if x <= 0.0 {
        return 1.0;
    }
    if x > 700.0 {
        return 0.0;
    }
    let nu = p.nu;
    x.powf(nu) * bessel_k(nu, x) / (2f64.powf(nu - 1.0) * gamma(nu))
}

fn check_triangles(mesh: &Mesh) -> Result<()> {
    for t in 0..mesh.n_triangles() {
        let a = mesh.triangle_area(t);
        if !(a > 0.0) || !a.is_finite() {
            return Err(invalid(format!("triangle {t} is degenerate (area {a:e})")));
        }
    }
    Ok(())
}

/// Consistent mass matrix `C_jk = ∫ψ_jψ_k` and its lumped diagonal.
pub fn assemble_mass(mesh: &Mesh) -> Result<(SparseSymmetric, Vec<f64>)> {
    check_triangles(mesh)?;
    let m = mesh.n_vertices();
    let mut b = TripletBuilder::with_capacity(m, 6 * mesh.n_triangles());
    let mut lumped = alloc::vec![0.0; m];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.triangle_area(t);
        for i in 0..3 {
            lumped[tri[i]] += a / 3.0;
            b.add(tri[i], tri[i], a / 6.0);
            for j in 0..i {
                b.add(tri[i], tri[j], a / 12.0);
            }
        }
    }
    Ok((b.build(), lumped))
}

/// Stiffness matrix `G_jk = ∫∇ψ_j·∇ψ_k` for piecewise-linear elements.
pub fn assemble_stiffness(mesh: &Mesh) -> Result<SparseSymmetric> {
    check_triangles(mesh)?;
    let m = mesh.n_vertices();
    let mut b = TripletBuilder::with_capacity(m, 6 * mesh.n_triangles());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.triangle_area(t);
        let p = tri.map(|v| mesh.vertices[v]);
        let gx = [p[1].y - p[2].y, p[2].y - p[0].y, p[0].y - p[1].y];
        let gy = [p[2].x - p[1].x, p[0].x - p[2].x, p[1].x - p[0].x];
        for i in 0..3 {
            for j in 0..=i {
                b.add(tri[i], tri[j], (gx[i] * gx[j] + gy[i] * gy[j]) / (4.0 * a));
            }
        }
    }
    Ok(b.build())
}

/// Precomputed FEM pieces so that `Q_s(ρ, σ)` costs one pass over the
/// nonzeros. All value arrays share the pattern of `G C̃⁻¹ G`.
#[derive(Debug, Clone)]
pub struct SpdeOperator {
    c_lumped: Vec<f64>,
    pattern: SparseSymmetric,
    c_vals: Vec<f64>,
    g_vals: Vec<f64>,
    k2_vals: Vec<f64>,
    order: Vec<usize>,
}

impl SpdeOperator {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let (_, c_lumped) = assemble_mass(mesh)?;
        let g = assemble_stiffness(mesh)?;
        let inv_c: Vec<f64> = c_lumped.iter().map(|c| 1.0 / c).collect();
        if inv_c.iter().any(|v| !v.is_finite()) {
            return Err(invalid("mesh has a vertex with zero dual area"));
        }
        let k2 = sandwich_diag(&g, &inv_c);
        let nnz = k2.nnz();
        let mut c_vals = alloc::vec![0.0; nnz];
        let mut g_vals = alloc::vec![0.0; nnz];
        for (j, c) in c_lumped.iter().enumerate() {
            c_vals[k2.position(j, j).expect("diagonal present")] = *c;
        }
        for (i, j, v) in g.iter() {
            g_vals[k2.position(i, j).expect("G pattern is inside G C⁻¹ G")] = v;
        }
        let k2_vals = k2.values().to_vec();
        let coords: Vec<[f64; 2]> = mesh.vertices.iter().map(|p| [p.x, p.y]).collect();
        let order = nested_dissection_order(&k2.adjacency(), &coords);
        Ok(Self {
            order,
            c_lumped,
            pattern: k2,
            c_vals,
            g_vals,
            k2_vals,
        })
    }

    pub fn n(&self) -> usize {
        self.c_lumped.len()
    }

    /// Fill-reducing elimination order for matrices with [`Self::pattern`].
    pub fn ordering(&self) -> &[usize] {
        &self.order
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.c_lumped
    }

    /// Sparsity pattern shared by every precision this operator produces.
    pub fn pattern(&self) -> &SparseSymmetric {
        &self.pattern
    }

    /// `Q_s = τ²(κ⁴C̃ + 2κ²G + G C̃⁻¹ G)`.
    pub fn precision(&self, p: &MaternParams) -> Result<SparseSymmetric> {
        if p.nu != 1.0 {
            return Err(invalid(format!("SPDE precision is implemented for nu = 1 only, got {}", p.nu)));
        }
        let k = p.kappa();
        let (k2, k4) = (k * k, k * k * k * k);
        let t2 = p.tau() * p.tau();
        let values = (0..self.k2_vals.len())
            .map(|q| t2 * (k4 * self.c_vals[q] + 2.0 * k2 * self.g_vals[q] + self.k2_vals[q]))
            .collect();
        Ok(self.pattern.with_values(values))
    }
}

/// One-shot SPDE precision for a mesh.
pub fn spde_precision(mesh: &Mesh, p: &MaternParams) -> Result<SparseSymmetric> {
    SpdeOperator::new(mesh)?.precision(p)
}
