//! Inner Newton iteration and the Laplace approximation of the marginal
//! likelihood.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Hyper, Model};
use crate::error::{Error, Result};
use crate::likelihood::PseudoData;
use crate::sparse::{Cholesky, SparseSymmetric};
use crate::spde::MaternParams;
use crate::st_gmrf::{st_log_det, ArParams};

/// Per-row log-likelihood in terms of the linear predictor.
pub trait RowLikelihood {
    /// Value, first derivative and negated second derivative at `eta`.
    fn terms(&self, r: usize, eta: f64) -> (f64, f64, f64);
}

/// The augmented Poisson likelihood.
#[derive(Debug, Clone, Copy)]
pub struct Poisson<'a>(pub &'a PseudoData);

impl RowLikelihood for Poisson<'_> {
    #[inline]
    fn terms(&self, r: usize, eta: f64) -> (f64, f64, f64) {
        let (y, e) = (self.0.y[r], self.0.e[r]);
        if e == 0.0 {
            (y * eta, y, 0.0)
        } else {
            let mu = e * eta.exp();
            (y * eta - mu, y - mu, mu)
        }
    }
}

/// Independent Gaussian observations `y_r ~ N(η_r, 1/precision_r)`.
#[derive(Debug, Clone)]
pub struct Gaussian {
    pub y: Vec<f64>,
    pub precision: Vec<f64>,
}

impl RowLikelihood for Gaussian {
    fn terms(&self, r: usize, eta: f64) -> (f64, f64, f64) {
        let (d, p) = (self.y[r] - eta, self.precision[r]);
        (-0.5 * p * d * d, p * d, p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonOptions {
    /// Converged once the largest step component is below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50 }
    }
}

/// Posterior mode of the latent vector and the factorized negative Hessian.
#[derive(Debug, Clone)]
pub struct InnerMode {
    pub u: Vec<f64>,
    pub eta: Vec<f64>,
    pub chol: Cholesky,
    pub loglik: f64,
    /// `uᵀ Q_prior u` at the mode.
    pub latent_quad: f64,
    pub iterations: usize,
    pub grad_inf_norm: f64,
}

#[derive(Debug, Clone)]
pub struct LaplaceEval {
    pub mode: InnerMode,
    /// Laplace approximation of `log π(y | θ) + log π(θ)`.
    pub log_marginal: f64,
    /// Laplace approximation of `log π(y | θ)`.
    pub log_evidence: f64,
    pub log_prior_theta: f64,
}

impl Model {
    fn prior_apply(&self, qst: Option<&SparseSymmetric>, u: &[f64]) -> Vec<f64> {
        let nf = self.n_field;
        let mut out = match qst {
            Some(q) => q.mul_vec(&u[..nf]),
            None => Vec::new(),
        };
        out.extend(u[nf..].iter().zip(&self.beta_prec).map(|(b, p)| b * p));
        out
    }

    fn assemble_hessian(&self, qst: Option<&SparseSymmetric>, w: &[f64]) -> SparseSymmetric {
        let mut vals = vec![0.0; self.h_pattern.nnz()];
        if let (Some(f), Some(q)) = (&self.field, qst) {
            for (&pos, &v) in f.qst_pos.iter().zip(q.values()) {
                vals[pos as usize] += v;
            }
        }
        for (&pos, &prec) in self.beta_diag_pos.iter().zip(&self.beta_prec) {
            vals[pos] += prec;
        }
        for (r, &wr) in w.iter().enumerate() {
            if wr == 0.0 {
                continue;
            }
            let (_, val) = self.rows.row(r);
            let mut q = self.pair_ptr[r];
            for a in 0..val.len() {
                let wa = wr * val[a];
                for c in 0..=a {
                    vals[self.pair_pos[q] as usize] += wa * val[c];
                    q += 1;
                }
            }
        }
        self.h_pattern.with_values(vals)
    }

    /// Default starting point: zero field and effects, intercept at the
    /// homogeneous rate.
    pub fn default_start(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.n_latent()];
        if self.spec.intercept {
            let n = self.pd.y.iter().sum::<f64>();
            let e = self.pd.e.iter().sum::<f64>();
            if n > 0.0 && e > 0.0 {
                u[self.n_field] = (n / e).ln();
            }
        }
        u
    }

    /// Maximizes `Σ_r ℓ_r(η_r) − ½ uᵀQu` over `u` with damped Newton steps.
    pub fn inner_newton<L: RowLikelihood>(
        &self,
        lik: &L,
        qst: Option<&SparseSymmetric>,
        start: Option<&[f64]>,
        opts: &NewtonOptions,
    ) -> Result<InnerMode> {
        let n = self.n_latent();
        let mut u = match start {
            Some(s) if s.len() == n => s.to_vec(),
            _ => self.default_start(),
        };
        let rows = self.pd.n_rows();
        let objective = |u: &[f64], eta: &[f64]| -> f64 {
            let ll: f64 = (0..rows).map(|r| lik.terms(r, eta[r]).0).sum();
            let quad: f64 = u.iter().zip(self.prior_apply(qst, u)).map(|(a, b)| a * b).sum();
            ll - 0.5 * quad
        };
        let gradient = |u: &[f64], eta: &[f64], w: &mut Vec<f64>| -> Vec<f64> {
            let mut g: Vec<f64> = self.prior_apply(qst, u).into_iter().map(|v| -v).collect();
            w.clear();
            for r in 0..rows {
                let (_, d1, d2) = lik.terms(r, eta[r]);
                w.push(d2);
                let (idx, val) = self.rows.row(r);
                for (&i, &v) in idx.iter().zip(val) {
                    g[i as usize] += v * d1;
                }
            }
            g
        };

        let mut eta = self.linear_predictor(&u);
        let mut f = objective(&u, &eta);
        if !f.is_finite() {
            u = self.default_start();
            eta = self.linear_predictor(&u);
            f = objective(&u, &eta);
            if !f.is_finite() {
                return Err(Error::NonFinite("log posterior at the starting point"));
            }
        }
        let mut w = Vec::with_capacity(rows);
        let mut converged = false;
        let mut iterations = 0;
        let mut last_grad = f64::INFINITY;
        let mut last_chol = None;
        while iterations < opts.max_iter {
            iterations += 1;
            let g = gradient(&u, &eta, &mut w);
            last_grad = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let chol = self.h_symbolic.factor(&self.assemble_hessian(qst, &w))?;
            let delta = chol.solve(&g);
            let mut step = 1.0;
            loop {
                let cand: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
                let cand_eta = self.linear_predictor(&cand);
                let fc = objective(&cand, &cand_eta);
                if fc.is_finite() && fc >= f - 1e-12 * (1.0 + f.abs()) {
                    u = cand;
                    eta = cand_eta;
                    f = fc;
                    break;
                }
                step *= 0.5;
                if step < 1e-12 {
                    return Err(Error::NewtonNotConverged {
                        iterations,
                        grad_norm: last_grad,
                    });
                }
            }
            let max_step = delta.iter().fold(0.0f64, |a, d| a.max((step * d).abs()));
            if !max_step.is_finite() {
                return Err(Error::NonFinite("Newton step"));
            }
            last_chol = Some(chol);
            if max_step < opts.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NewtonNotConverged {
                iterations,
                grad_norm: last_grad,
            });
        }
        // The last step was below tolerance, so the Hessian factored before it
        // stands in for the one at the mode.
        let g = gradient(&u, &eta, &mut w);
        let chol = match last_chol {
            Some(c) => c,
            None => self.h_symbolic.factor(&self.assemble_hessian(qst, &w))?,
        };
        let loglik: f64 = (0..rows).map(|r| lik.terms(r, eta[r]).0).sum();
        let latent_quad = u.iter().zip(self.prior_apply(qst, &u)).map(|(a, b)| a * b).sum();
        Ok(InnerMode {
            u,
            eta,
            chol,
            loglik,
            latent_quad,
            iterations,
            grad_inf_norm: g.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        })
    }

    /// Space-time prior precision of the field and `log det` of the whole
    /// latent prior precision.
    pub fn prior_precision(&self, hyper: &Hyper) -> Result<(Option<SparseSymmetric>, f64)> {
        let ld_beta: f64 = self.beta_prec.iter().map(|p| p.ln()).sum();
        let Some(f) = &self.field else {
            return Ok((None, ld_beta));
        };
        let qs = f.spde.precision(&MaternParams::new(hyper.rho, hyper.sigma)?)?;
        let ld_s = f.qs_symbolic.factor(&qs)?.log_det();
        let phi = if self.pd.n_times == 1 { 0.0 } else { hyper.phi };
        let ar = ArParams::new(phi, self.pd.n_times)?;
        let qst = f.kron.assemble(&qs, &ar)?;
        Ok((Some(qst), st_log_det(ld_s, self.pd.n_vertices, &ar) + ld_beta))
    }

    /// Laplace approximation at `hyper`; `free` selects which θ components
    /// carry prior density.
    pub fn laplace(&self, hyper: &Hyper, free: &[bool; 3], warm: Option<&[f64]>, opts: &NewtonOptions) -> Result<LaplaceEval> {
        let (qst, ld_prior) = self.prior_precision(hyper)?;
        let lik = Poisson(&self.pd);
        let mode = match self.inner_newton(&lik, qst.as_ref(), warm, opts) {
            Ok(m) => m,
            Err(e) if warm.is_some() && e.is_numerical() => self.inner_newton(&lik, qst.as_ref(), None, opts)?,
            Err(e) => return Err(e),
        };
        let log_evidence = mode.loglik - 0.5 * mode.latent_quad + 0.5 * ld_prior - 0.5 * mode.chol.log_det();
        let log_prior_theta = if self.spec.field {
            self.priors.theta_logdensity(&hyper.theta(), free)
        } else {
            0.0
        };
        let log_marginal = log_evidence + log_prior_theta;
        if !log_marginal.is_finite() {
            return Err(Error::NonFinite("log marginal likelihood"));
        }
        Ok(LaplaceEval {
            mode,
            log_marginal,
            log_evidence,
            log_prior_theta,
        })
    }

    /// Laplace `log π(y | θ) + log π(θ)` with every applicable θ component free.
    pub fn log_marginal(&self, hyper: &Hyper, opts: &NewtonOptions) -> Result<f64> {
        let free = self.free_mask(&Default::default());
        Ok(self.laplace(hyper, &free, None, opts)?.log_marginal)
    }
}
