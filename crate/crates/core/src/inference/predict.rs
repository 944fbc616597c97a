//! Posterior log-intensity at arbitrary points.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::FitResult;
use crate::error::{invalid, Error, Result};
use crate::geometry::Point;
use crate::likelihood::{CovariateField, INTERCEPT};
use crate::mesh::{project, Mesh};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// False for targets outside the mesh; the values are then NaN.
    pub inside: bool,
    /// Posterior mean and SD of log λ.
    pub mean: f64,
    pub sd: f64,
    /// Posterior mean of λ, `exp(mean + sd²/2)`.
    pub intensity: f64,
}

/// Posterior mean and SD of `log λ(s, t)` at `targets` for time step `t`
/// (1-based).
pub fn predict_intensity(fit: &FitResult, mesh: &Mesh, covariates: &CovariateField, targets: &[Point], t: usize) -> Result<Vec<Prediction>> {
    let m = mesh.n_vertices();
    if m != fit.n_vertices {
        return Err(invalid("mesh differs from the one used for fitting"));
    }
    if t == 0 || t > fit.n_times {
        return Err(invalid(format!("time step {t} outside 1..={}", fit.n_times)));
    }
    let names: Vec<&str> = fit.fixed_effects.iter().map(|f| f.name.as_str()).collect();
    let p = names.len();
    let mut cols: Vec<Option<&[f64]>> = Vec::with_capacity(p);
    for name in &names {
        if *name == INTERCEPT && fit.spec.intercept {
            cols.push(None);
        } else {
            cols.push(Some(covariates.get(name).ok_or_else(|| Error::MissingCovariate((*name).into()))?));
        }
    }
    let edges = mesh.edges();
    let n_edges = edges.len();
    let field = fit.spec.field;
    let base = (t - 1) * m;
    let beta: Vec<f64> = fit.fixed_effects.iter().map(|f| f.mean).collect();
    let proj = project(mesh, targets);
    let edge_cov = |a: usize, b: usize| -> Result<f64> {
        let key = (a.min(b), a.max(b));
        let k = edges.binary_search(&key).map_err(|_| invalid("projector vertices do not share an edge"))?;
        Ok(fit.edge_cov[(t - 1) * n_edges + k])
    };
    let mut out = Vec::with_capacity(targets.len());
    for row in &proj.rows {
        if row.triangle.is_none() {
            out.push(Prediction {
                inside: false,
                mean: f64::NAN,
                sd: f64::NAN,
                intensity: f64::NAN,
            });
            continue;
        }
        let z: Vec<f64> = cols
            .iter()
            .map(|c| match c {
                None => 1.0,
                Some(col) => (0..3).map(|k| row.weights[k] * col[row.vertices[k]]).sum(),
            })
            .collect();
        let mut mean: f64 = z.iter().zip(&beta).map(|(a, b)| a * b).sum();
        let mut var = 0.0;
        for a in 0..p {
            for c in 0..p {
                var += z[a] * z[c] * fit.beta_cov[a * p + c];
            }
        }
        if field {
            for k in 0..3 {
                let wk = row.weights[k];
                if wk == 0.0 {
                    continue;
                }
                let ik = base + row.vertices[k];
                mean += wk * fit.field_mean[ik];
                var += wk * wk * fit.field_sd[ik] * fit.field_sd[ik];
                for c in 0..p {
                    var += 2.0 * wk * z[c] * fit.field_beta_cov[ik * p + c];
                }
                for l in 0..k {
                    let wl = row.weights[l];
                    if wl != 0.0 && row.vertices[l] != row.vertices[k] {
                        var += 2.0 * wk * wl * edge_cov(row.vertices[k], row.vertices[l])?;
                    }
                }
            }
        }
        let sd = var.max(0.0).sqrt();
        out.push(Prediction {
            inside: true,
            mean,
            sd,
            intensity: (mean + 0.5 * sd * sd).exp(),
        });
    }
    Ok(out)
}
