//! Empirical-Bayes Laplace inference for the LGCP.
//!
//! The latent vector is `u = (x, β)`: the space-time field at mesh vertices
//! (`T·m` values, time-major) followed by the fixed effects. For given
//! hyperparameters θ = (log ρ, log σ, z(φ)) the posterior mode of `u` is found
//! by Newton's method on a sparse Hessian whose pattern is analyzed once per
//! model. The outer optimizer maximizes the Laplace approximation of
//! `log π(y | θ) + log π(θ)`; marginals come from a selected inverse at θ̂.

mod ic;
mod laplace;
mod optim;
mod predict;
mod priors;

pub use ic::{draw_row_loglik, information_criteria, IcAccumulator, InformationCriteria};
pub use laplace::{Gaussian, InnerMode, LaplaceEval, NewtonOptions, Poisson, RowLikelihood};
pub use optim::{fd_hessian, nelder_mead, spd_inverse, Minimum, NelderMeadOptions};
pub use predict::{predict_intensity, Prediction};
pub use priors::{pc_prior_logdensity, phi_to_z, z_to_phi, PriorSpec};

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::likelihood::{evaluate_covariates, CovariateField, Design, PseudoData};
use crate::mesh::Mesh;
use crate::sparse::{SparseSymmetric, SymbolicCholesky, TripletBuilder};
use crate::spde::SpdeOperator;
use crate::st_gmrf::{st_ordering, KroneckerStructure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default = "yes")]
    pub field: bool,
}

fn yes() -> bool {
    true
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.intercept && self.covariates.is_empty() && !self.field {
            return Err(invalid("model needs an intercept, a covariate or a field"));
        }
        Ok(())
    }
}

/// Hyperparameters on their natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub rho: f64,
    pub sigma: f64,
    pub phi: f64,
}

impl Hyper {
    pub fn theta(&self) -> [f64; 3] {
        [self.rho.ln(), self.sigma.ln(), phi_to_z(self.phi)]
    }

    pub fn from_theta(theta: &[f64; 3]) -> Self {
        Self {
            rho: theta[0].exp(),
            sigma: theta[1].exp(),
            phi: z_to_phi(theta[2]),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedHyper {
    pub rho: Option<f64>,
    pub sigma: Option<f64>,
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_evals: usize,
    pub restarts: usize,
    pub initial_step: f64,
    pub ftol: f64,
    pub xtol: f64,
    /// Starting hyperparameters; `None` uses (ρ0/2, σ0/2, 0.5) from the priors.
    pub initial: Option<Hyper>,
    pub fixed: FixedHyper,
    pub newton: NewtonOptions,
    /// Step on the θ scale for the finite-difference Hessian.
    pub hessian_step: f64,
    /// Cap on the number of latent variables.
    pub max_dim: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        let nm = NelderMeadOptions::default();
        Self {
            max_evals: nm.max_evals,
            restarts: nm.restarts,
            initial_step: nm.initial_step,
            ftol: nm.ftol,
            xtol: nm.xtol,
            initial: None,
            fixed: FixedHyper::default(),
            newton: NewtonOptions::default(),
            hessian_step: 0.05,
            max_dim: crate::st_gmrf::DEFAULT_MAX_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEffect {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperEstimate {
    /// `range`, `sigma` or `phi`.
    pub name: String,
    pub mode: f64,
    pub lower: f64,
    pub upper: f64,
    /// Mode and standard deviation on the optimization scale.
    pub theta_mode: f64,
    pub theta_sd: Option<f64>,
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub outer_evals: usize,
    pub outer_restarts: usize,
    pub outer_converged: bool,
    pub newton_iterations: usize,
    pub grad_inf_norm: f64,
    /// Whether the finite-difference Hessian at θ̂ was negative definite.
    pub hessian_pd: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub priors: PriorSpec,
    pub n_vertices: usize,
    pub n_times: usize,
    pub fixed_effects: Vec<FixedEffect>,
    /// Row-major `p × p` posterior covariance of the fixed effects.
    pub beta_cov: Vec<f64>,
    pub hyper: Vec<HyperEstimate>,
    /// Hyperparameters at the mode (absent without a field).
    pub hyper_mode: Option<Hyper>,
    /// Posterior mean and SD of the field per `(time, vertex)`, time-major.
    pub field_mean: Vec<f64>,
    pub field_sd: Vec<f64>,
    /// Row-major `T·m × p` cross-covariance of field and fixed effects.
    pub field_beta_cov: Vec<f64>,
    /// Per time step, covariance of the field at the ends of each mesh edge
    /// (edges in [`Mesh::edges`] order).
    pub edge_cov: Vec<f64>,
    pub log_marginal: f64,
    pub loglik: f64,
    pub ic: Option<InformationCriteria>,
    pub diagnostics: Diagnostics,
}

impl FitResult {
    pub fn fixed_effect(&self, name: &str) -> Option<&FixedEffect> {
        self.fixed_effects.iter().find(|f| f.name == name)
    }

    pub fn hyper_estimate(&self, name: &str) -> Option<&HyperEstimate> {
        self.hyper.iter().find(|h| h.name == name)
    }
}

/// Result of [`Model::fit`]: the serializable summary plus the Gaussian
/// approximation at θ̂ (needed for information criteria).
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub result: FitResult,
    pub mode: InnerMode,
}

/// Sparse rows of the combined predictor matrix `[Ā | Z]`.
#[derive(Debug, Clone)]
struct Rows {
    ptr: Vec<usize>,
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl Rows {
    fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.ptr[r], self.ptr[r + 1]);
        (&self.idx[a..b], &self.val[a..b])
    }
}

#[derive(Debug, Clone)]
struct FieldParts {
    spde: SpdeOperator,
    kron: KroneckerStructure,
    qs_symbolic: Arc<SymbolicCholesky>,
    /// Position in the Hessian pattern of each stored entry of `Q_st`.
    qst_pos: Vec<u32>,
}

/// A model bound to data: pseudo-data, design, FEM operators and the
/// analyzed sparsity structure of the posterior precision.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    priors: PriorSpec,
    pd: PseudoData,
    design: Design,
    field: Option<FieldParts>,
    n_field: usize,
    beta_prec: Vec<f64>,
    h_pattern: SparseSymmetric,
    h_symbolic: Arc<SymbolicCholesky>,
    beta_diag_pos: Vec<usize>,
    rows: Rows,
    pair_ptr: Vec<usize>,
    pair_pos: Vec<u32>,
    edges: Vec<(usize, usize)>,
}

impl Model {
    pub fn new(
        mesh: &Mesh,
        pd: PseudoData,
        covariates: &CovariateField,
        spec: ModelSpec,
        priors: PriorSpec,
        max_dim: usize,
    ) -> Result<Self> {
        spec.validate()?;
        priors.validate()?;
        let m = mesh.n_vertices();
        if pd.n_vertices != m {
            return Err(invalid("pseudo-data were built on a different mesh"));
        }
        let t = pd.n_times;
        let design = evaluate_covariates(covariates, &pd, spec.intercept, &spec.covariates)?;
        let p = design.p();
        let beta_prec: Vec<f64> = design
            .names
            .iter()
            .map(|n| {
                let s = priors.beta_sd_for(n);
                1.0 / (s * s)
            })
            .collect();

        let (field_parts, n_field) = if spec.field {
            let spde = SpdeOperator::new(mesh)?;
            let kron = KroneckerStructure::new(spde.pattern(), t, max_dim)?;
            let qs_symbolic = Arc::new(SymbolicCholesky::with_ordering(spde.pattern(), spde.ordering().to_vec()));
            (Some((spde, kron, qs_symbolic)), t * m)
        } else {
            (None, 0)
        };
        let n = n_field + p;
        if n > max_dim {
            return Err(Error::DimensionTooLarge { dim: n, cap: max_dim });
        }

        // Rows of [Ā | Z], merging repeated vertices and dropping zero weights.
        let mut rows = Rows {
            ptr: vec![0],
            idx: Vec::new(),
            val: Vec::new(),
        };
        for r in 0..pd.n_rows() {
            if spec.field {
                let base = pd.time[r] as usize * m;
                let mut ent: Vec<(u32, f64)> = Vec::with_capacity(3);
                for k in 0..3 {
                    let w = pd.weights[r][k];
                    if w == 0.0 {
                        continue;
                    }
                    let i = (base + pd.vertices[r][k] as usize) as u32;
                    match ent.iter_mut().find(|e| e.0 == i) {
                        Some(e) => e.1 += w,
                        None => ent.push((i, w)),
                    }
                }
                ent.sort_by_key(|e| e.0);
                for (i, w) in ent {
                    rows.idx.push(i);
                    rows.val.push(w);
                }
            }
            for (c, &z) in design.row(r).iter().enumerate() {
                rows.idx.push((n_field + c) as u32);
                rows.val.push(z);
            }
            rows.ptr.push(rows.idx.len());
        }

        // Pattern: Q_st, dense fixed-effect rows, and every row's outer product.
        let mut b = TripletBuilder::new(n);
        if let Some((_, kron, _)) = &field_parts {
            for (i, j, _) in kron.pattern().iter() {
                b.add(i, j, 0.0);
            }
        }
        for c in 0..p {
            for i in 0..n_field + c + 1 {
                b.add(n_field + c, i, 0.0);
            }
        }
        for r in 0..pd.n_rows() {
            let (idx, _) = rows.row(r);
            let fi: Vec<u32> = idx.iter().copied().filter(|&i| (i as usize) < n_field).collect();
            for a in 0..fi.len() {
                for c in 0..a {
                    b.add(fi[a] as usize, fi[c] as usize, 0.0);
                }
            }
        }
        let h_pattern = b.build();
        let mut order = match &field_parts {
            Some((spde, _, _)) => st_ordering(spde.ordering(), t),
            None => Vec::new(),
        };
        order.extend(n_field..n);
        let h_symbolic = Arc::new(SymbolicCholesky::with_ordering(&h_pattern, order));
        let pos = |i: usize, j: usize| -> u32 {
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            h_pattern.position(r, c).expect("entry in Hessian pattern") as u32
        };
        let beta_diag_pos = (0..p).map(|c| pos(n_field + c, n_field + c) as usize).collect();
        let mut pair_ptr = vec![0usize];
        let mut pair_pos = Vec::new();
        for r in 0..pd.n_rows() {
            let (idx, _) = rows.row(r);
            for a in 0..idx.len() {
                for c in 0..=a {
                    pair_pos.push(pos(idx[a] as usize, idx[c] as usize));
                }
            }
            pair_ptr.push(pair_pos.len());
        }
        let field = field_parts.map(|(spde, kron, qs_symbolic)| {
            let qst_pos = kron.pattern().iter().map(|(i, j, _)| pos(i, j)).collect();
            FieldParts {
                spde,
                kron,
                qs_symbolic,
                qst_pos,
            }
        });
        Ok(Self {
            spec,
            priors,
            pd,
            design,
            field,
            n_field,
            beta_prec,
            h_pattern,
            h_symbolic,
            beta_diag_pos,
            rows,
            pair_ptr,
            pair_pos,
            edges: mesh.edges(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn priors(&self) -> &PriorSpec {
        &self.priors
    }

    pub fn pseudodata(&self) -> &PseudoData {
        &self.pd
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn n_latent(&self) -> usize {
        self.n_field + self.design.p()
    }

    pub fn n_field(&self) -> usize {
        self.n_field
    }

    /// `η = Ā x + Z β` for the latent vector `u = (x, β)`.
    pub fn linear_predictor(&self, u: &[f64]) -> Vec<f64> {
        (0..self.pd.n_rows())
            .map(|r| {
                let (idx, val) = self.rows.row(r);
                idx.iter().zip(val).map(|(&i, &v)| v * u[i as usize]).sum()
            })
            .collect()
    }

    /// Which of `(log ρ, log σ, z)` are optimized.
    pub fn free_mask(&self, fixed: &FixedHyper) -> [bool; 3] {
        if !self.spec.field {
            return [false; 3];
        }
        [fixed.rho.is_none(), fixed.sigma.is_none(), self.pd.n_times > 1 && fixed.phi.is_none()]
    }

    fn initial_hyper(&self, opts: &FitOptions) -> Result<Hyper> {
        let mut h = opts.initial.unwrap_or(Hyper {
            rho: 0.5 * self.priors.range_median,
            sigma: 0.5 * self.priors.sigma_upper,
            phi: 0.5,
        });
        if let Some(v) = opts.fixed.rho {
            h.rho = v;
        }
        if let Some(v) = opts.fixed.sigma {
            h.sigma = v;
        }
        if let Some(v) = opts.fixed.phi {
            h.phi = v;
        }
        if self.pd.n_times == 1 {
            h.phi = 0.0;
        }
        if !(h.rho > 0.0 && h.sigma > 0.0 && h.phi.abs() < 1.0) {
            return Err(invalid(format!("invalid hyperparameters {h:?}")));
        }
        Ok(h)
    }

    /// Runs the outer optimization and summarizes the posterior at θ̂.
    pub fn fit(&self, opts: &FitOptions) -> Result<FitOutput> {
        let start = self.initial_hyper(opts)?;
        let free = self.free_mask(&opts.fixed);
        let base = start.theta();
        let free_idx: Vec<usize> = (0..3).filter(|&k| free[k]).collect();
        let expand = |x: &[f64]| {
            let mut th = base;
            for (k, &i) in free_idx.iter().enumerate() {
                th[i] = x[k];
            }
            th
        };

        let mut warm: Option<Vec<f64>> = None;
        let mut first_error: Option<Error> = None;
        let mut objective = |x: &[f64]| -> f64 {
            let th = expand(x);
            match self.laplace(&Hyper::from_theta(&th), &free, warm.as_deref(), &opts.newton) {
                Ok(ev) => {
                    warm = Some(ev.mode.u.clone());
                    -ev.log_marginal
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                    f64::INFINITY
                }
            }
        };
        let x0: Vec<f64> = free_idx.iter().map(|&i| base[i]).collect();
        let nm = NelderMeadOptions {
            max_evals: opts.max_evals,
            restarts: opts.restarts,
            initial_step: opts.initial_step,
            ftol: opts.ftol,
            xtol: opts.xtol,
        };
        let min = nelder_mead(&mut objective, &x0, &nm);
        if !min.value.is_finite() {
            return Err(first_error.unwrap_or(Error::NonFinite("log marginal likelihood")));
        }
        if !min.converged {
            return Err(Error::OuterNotConverged {
                evals: min.evals,
                best_theta: expand(&min.x).to_vec(),
                best_value: -min.value,
            });
        }
        let theta_hat = expand(&min.x);
        let hyper_hat = Hyper::from_theta(&theta_hat);

        let (theta_sd, hessian_pd) = if free_idx.is_empty() {
            (Vec::new(), true)
        } else {
            let k = free_idx.len();
            let hess = fd_hessian(&mut objective, &min.x, opts.hessian_step);
            match spd_inverse(&hess, k) {
                Some(inv) => ((0..k).map(|i| Some(inv[i * k + i].sqrt())).collect(), true),
                None => (
                    (0..k)
                        .map(|i| {
                            let d = hess[i * k + i];
                            (d > 0.0).then(|| 1.0 / d.sqrt())
                        })
                        .collect(),
                    false,
                ),
            }
        };

        let ev = self.laplace(&hyper_hat, &free, None, &opts.newton)?;
        let mut hyper = Vec::new();
        if self.spec.field {
            let names = ["range", "sigma", "phi"];
            for i in 0..3 {
                if i == 2 && self.pd.n_times == 1 {
                    continue;
                }
                let sd = free_idx.iter().position(|&j| j == i).and_then(|k| theta_sd[k]);
                let to_natural = |v: f64| if i == 2 { z_to_phi(v) } else { v.exp() };
                let (lo, hi) = match sd {
                    Some(s) => (to_natural(theta_hat[i] - 1.96 * s), to_natural(theta_hat[i] + 1.96 * s)),
                    None => (to_natural(theta_hat[i]), to_natural(theta_hat[i])),
                };
                hyper.push(HyperEstimate {
                    name: String::from(names[i]),
                    mode: to_natural(theta_hat[i]),
                    lower: lo,
                    upper: hi,
                    theta_mode: theta_hat[i],
                    theta_sd: sd,
                    fixed: !free[i],
                });
            }
        }
        let result = self.summarize(&ev, hyper, self.spec.field.then_some(hyper_hat), Diagnostics {
            outer_evals: min.evals,
            outer_restarts: min.restarts,
            outer_converged: min.converged,
            newton_iterations: ev.mode.iterations,
            grad_inf_norm: ev.mode.grad_inf_norm,
            hessian_pd,
        })?;
        Ok(FitOutput { result, mode: ev.mode })
    }

    fn summarize(&self, ev: &LaplaceEval, hyper: Vec<HyperEstimate>, hyper_mode: Option<Hyper>, diagnostics: Diagnostics) -> Result<FitResult> {
        let sel = ev.mode.chol.selected_inverse();
        let nf = self.n_field;
        let p = self.design.p();
        let get = |i: usize, j: usize| sel.get(i, j).ok_or(Error::NonFinite("selected inverse pattern"));
        let mut beta_cov = vec![0.0; p * p];
        for a in 0..p {
            for c in 0..p {
                beta_cov[a * p + c] = get(nf + a, nf + c)?;
            }
        }
        let fixed_effects = (0..p)
            .map(|c| {
                let mean = ev.mode.u[nf + c];
                let sd = beta_cov[c * p + c].max(0.0).sqrt();
                FixedEffect {
                    name: self.design.names[c].clone(),
                    mean,
                    sd,
                    lower: mean - 1.96 * sd,
                    upper: mean + 1.96 * sd,
                }
            })
            .collect();
        let diag = sel.diag();
        let field_mean = ev.mode.u[..nf].to_vec();
        let field_sd = diag[..nf].iter().map(|v| v.max(0.0).sqrt()).collect();
        let mut field_beta_cov = Vec::with_capacity(nf * p);
        for i in 0..nf {
            for c in 0..p {
                field_beta_cov.push(get(i, nf + c)?);
            }
        }
        let m = self.pd.n_vertices;
        let mut edge_cov = Vec::new();
        if nf > 0 {
            edge_cov.reserve(self.pd.n_times * self.edges.len());
            for t in 0..self.pd.n_times {
                for &(a, b) in &self.edges {
                    edge_cov.push(get(t * m + a, t * m + b)?);
                }
            }
        }
        Ok(FitResult {
            spec: self.spec.clone(),
            priors: self.priors.clone(),
            n_vertices: m,
            n_times: self.pd.n_times,
            fixed_effects,
            beta_cov,
            hyper,
            hyper_mode,
            field_mean,
            field_sd,
            field_beta_cov,
            edge_cov,
            log_marginal: ev.log_marginal,
            loglik: ev.mode.loglik,
            ic: None,
            diagnostics,
        })
    }
}
