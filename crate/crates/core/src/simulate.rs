//! Ground-truth LGCP simulation: field sampling and thinning.
//!
//! The log-intensity at a point is the barycentric interpolation of the
//! vertex log-intensity `z_vᵀβ + x_{v,t}`, so within a triangle its maximum
//! is attained at a vertex.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Point;
use crate::likelihood::{CovariateField, Event, PointPattern, INTERCEPT};
use crate::mesh::Mesh;
use crate::sparse::SymbolicCholesky;
use crate::spde::{MaternParams, SpdeOperator};
use crate::st_gmrf::{sample_with_factor, st_ordering, st_precision, ArParams, DEFAULT_MAX_DIM};

/// Analytic covariate surfaces, evaluated at mesh vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateGenerator {
    Constant { value: f64 },
    /// `a + bx·x + by·y`.
    Linear { a: f64, bx: f64, by: f64 },
    /// Sum of isotropic Gaussian bumps `h·exp(−|s − c|² / (2w²))`.
    Bumps { bumps: Vec<Bump> },
    /// `amplitude · sin(fx·x) · cos(fy·y)`.
    Wave { amplitude: f64, fx: f64, fy: f64 },
    /// Euclidean distance to the nearest of `points`.
    Distance { points: Vec<Point> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Point,
    pub width: f64,
    pub height: f64,
}

impl CovariateGenerator {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Constant { value } => value.is_finite(),
            Self::Linear { a, bx, by } => a.is_finite() && bx.is_finite() && by.is_finite(),
            Self::Bumps { bumps } => bumps
                .iter()
                .all(|b| b.center.is_finite() && b.width > 0.0 && b.width.is_finite() && b.height.is_finite()),
            Self::Wave { amplitude, fx, fy } => amplitude.is_finite() && fx.is_finite() && fy.is_finite(),
            Self::Distance { points } => !points.is_empty() && points.iter().all(Point::is_finite),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("covariate generator has invalid parameters"))
        }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Linear { a, bx, by } => a + bx * p.x + by * p.y,
            Self::Bumps { bumps } => bumps
                .iter()
                .map(|b| {
                    let d2 = (p.x - b.center.x).powi(2) + (p.y - b.center.y).powi(2);
                    b.height * (-0.5 * d2 / (b.width * b.width)).exp()
                })
                .sum(),
            Self::Wave { amplitude, fx, fy } => amplitude * (fx * p.x).sin() * (fy * p.y).cos(),
            Self::Distance { points } => points.iter().map(|q| p.distance(q)).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn at_vertices(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.vertices.iter().map(|p| self.eval(p)).collect()
    }
}

fn default_cap() -> f64 {
    1e6
}

/// True parameters of a simulation. The field is omitted when `sigma == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    /// Coefficients by name; `intercept` is the constant term.
    pub beta: Vec<(String, f64)>,
    pub rho: f64,
    pub sigma: f64,
    #[serde(default)]
    pub phi: f64,
    pub n_times: usize,
    pub seed: u64,
    /// Largest admissible intensity (events per unit area per time step).
    #[serde(default = "default_cap")]
    pub intensity_cap: f64,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        if self.n_times == 0 {
            return Err(invalid("number of time steps must be at least 1"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(invalid("field standard deviation must be finite and non-negative"));
        }
        if self.sigma > 0.0 {
            MaternParams::new(self.rho, self.sigma)?;
            ArParams::new(self.phi, self.n_times)?;
        }
        if !(self.intensity_cap > 0.0) {
            return Err(invalid("intensity cap must be positive"));
        }
        for (name, b) in &self.beta {
            if !b.is_finite() {
                return Err(invalid(format!("coefficient `{name}` is not finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub pattern: PointPattern,
    /// Field and log-intensity per `(time, vertex)`, time-major.
    pub field: Vec<f64>,
    pub log_intensity: Vec<f64>,
    /// Dominating rate and number of candidates per time step.
    pub lambda_max: Vec<f64>,
    pub candidates: Vec<usize>,
}

/// Samples the space-time Matérn × AR(1) field at the mesh vertices.
pub fn sample_field(mesh: &Mesh, rho: f64, sigma: f64, phi: f64, n_times: usize, seed: u64) -> Result<Vec<f64>> {
    let spde = SpdeOperator::new(mesh)?;
    let qs = spde.precision(&MaternParams::new(rho, sigma)?)?;
    let q = st_precision(&qs, &ArParams::new(phi, n_times)?, DEFAULT_MAX_DIM)?;
    let symbolic = Arc::new(SymbolicCholesky::with_ordering(&q, st_ordering(spde.ordering(), n_times)));
    let chol = symbolic.factor(&q)?;
    Ok(sample_with_factor(&chol, seed, 1).remove(0))
}

/// Simulates events over the inner region of `mesh`.
pub fn simulate_lgcp(mesh: &Mesh, covariates: &CovariateField, sc: &SimScenario) -> Result<Simulation> {
    sc.validate()?;
    let m = mesh.n_vertices();
    let t_steps = sc.n_times;
    let mut fixed = vec![0.0; m];
    for (name, b) in &sc.beta {
        if name == INTERCEPT {
            fixed.iter_mut().for_each(|f| *f += b);
        } else {
            let col = covariates.get(name).ok_or_else(|| Error::MissingCovariate(name.clone()))?;
            fixed.iter_mut().zip(col).for_each(|(f, z)| *f += b * z);
        }
    }
    let field = if sc.sigma > 0.0 {
        sample_field(mesh, sc.rho, sc.sigma, sc.phi, t_steps, sc.seed)?
    } else {
        vec![0.0; t_steps * m]
    };
    let log_intensity: Vec<f64> = field.iter().enumerate().map(|(i, x)| x + fixed[i % m]).collect();

    let inner: Vec<usize> = (0..mesh.n_triangles()).filter(|&t| mesh.triangle_inner[t]).collect();
    let mut cum = Vec::with_capacity(inner.len());
    let mut area = 0.0;
    for &t in &inner {
        area += mesh.triangle_area(t);
        cum.push(area);
    }
    let inner_vertex: Vec<bool> = {
        let mut f = vec![false; m];
        for &t in &inner {
            for &v in &mesh.triangles[t] {
                f[v] = true;
            }
        }
        f
    };

    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    rng.set_stream(1);
    let mut events = Vec::new();
    let mut lambda_max = Vec::with_capacity(t_steps);
    let mut candidates = Vec::with_capacity(t_steps);
    for t in 0..t_steps {
        let eta = &log_intensity[t * m..(t + 1) * m];
        let peak = (0..m).filter(|&v| inner_vertex[v]).map(|v| eta[v]).fold(f64::NEG_INFINITY, f64::max);
        let lmax = 1.05 * peak.exp();
        if !(lmax <= sc.intensity_cap) {
            return Err(Error::IntensityOverflow {
                max: peak.exp(),
                cap: sc.intensity_cap,
            });
        }
        let n = if lmax * area > 0.0 {
            Poisson::new(lmax * area).map_err(|_| Error::NonFinite("candidate count"))?.sample(&mut rng) as usize
        } else {
            0
        };
        candidates.push(n);
        lambda_max.push(lmax);
        for _ in 0..n {
            let u: f64 = rng.random::<f64>() * area;
            let k = cum.partition_point(|&c| c <= u).min(inner.len() - 1);
            let tri = mesh.triangles[inner[k]];
            let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
            if r1 + r2 > 1.0 {
                r1 = 1.0 - r1;
                r2 = 1.0 - r2;
            }
            let w = [1.0 - r1 - r2, r1, r2];
            let [a, b, c] = tri.map(|v| mesh.vertices[v]);
            let p = Point::new(w[0] * a.x + w[1] * b.x + w[2] * c.x, w[0] * a.y + w[1] * b.y + w[2] * c.y);
            let log_l: f64 = (0..3).map(|j| w[j] * eta[tri[j]]).sum();
            if rng.random::<f64>() * lmax < log_l.exp() {
                events.push(Event { point: p, t: t + 1 });
            }
        }
    }
    Ok(Simulation {
        pattern: PointPattern::new(events, t_steps)?,
        field,
        log_intensity,
        lambda_max,
        candidates,
    })
}
