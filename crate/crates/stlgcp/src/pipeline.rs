//! The six commands: each reads its inputs from the configuration, runs the
//! corresponding core step and writes provenance-stamped outputs.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stlgcp_core::geometry::{buffer_network, domain_bbox, nearest_distance, point_in_domain, snap_to_network};
use stlgcp_core::inference::{
    draw_row_loglik, predict_intensity, FitResult, IcAccumulator, InformationCriteria, Model, ModelSpec, Prediction, PriorSpec,
};
use stlgcp_core::likelihood::{build_pseudodata_with, quadrature_nodes, CovariateField, PointPattern, Quadrature};
use stlgcp_core::mesh::build_mesh;
use stlgcp_core::simulate::{simulate_lgcp, SimScenario};
use stlgcp_core::{Mesh, MeshConfig, Point, Polygon, RoadNetwork};

use crate::config::{LoadedConfig, RunConfig};
use crate::formats::geo::{check_projected, read_facilities, read_polygons, read_roads};
use crate::formats::raster::{read_ascii, write_ascii, RasterGrid, RasterMeta};
use crate::formats::tables::{csv_writer, read_events, read_table, write_events, write_table, CovariateTable};
use crate::provenance::Provenance;

/// Draws are generated in blocks of this size, in parallel within a block.
const IC_BLOCK: usize = 64;

pub struct Run {
    pub config: RunConfig,
    pub provenance: Provenance,
}

impl Run {
    pub fn new(loaded: LoadedConfig) -> Self {
        let provenance = Provenance::new(&loaded.hash, loaded.seed());
        Self {
            config: loaded.config,
            provenance,
        }
    }

    fn prepare_output(&self) -> Result<()> {
        let dir = &self.config.output_dir;
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
    }
}

/// The study region as polygons; network domains keep their roads for
/// snapping and prediction.
pub enum Domain {
    Polygons(Vec<Polygon>),
    Network { roads: RoadNetwork, region: Vec<Polygon> },
}

impl Domain {
    pub fn region(&self) -> &[Polygon] {
        match self {
            Domain::Polygons(p) => p,
            Domain::Network { region, .. } => region,
        }
    }

    pub fn diameter(&self) -> f64 {
        domain_bbox(self.region()).diagonal()
    }
}

pub fn load_domain(cfg: &RunConfig) -> Result<Domain> {
    cfg.validate_inputs()?;
    let d = &cfg.domain;
    let domain = if let Some(path) = &d.polygon {
        let polys = read_polygons(path)?;
        if !d.assume_projected {
            check_projected(&domain_bbox(&polys), &path.display().to_string())?;
        }
        Domain::Polygons(polys)
    } else {
        let path = d.roads.as_ref().expect("validated");
        let roads = read_roads(path)?;
        if !d.assume_projected {
            check_projected(&roads.bbox(), &path.display().to_string())?;
        }
        let region = buffer_network(&roads, d.buffer)?;
        Domain::Network { roads, region }
    };
    Ok(domain)
}

pub fn priors(cfg: &RunConfig, domain: &Domain) -> Result<PriorSpec> {
    let p = &cfg.priors;
    let mut spec = PriorSpec::new(p.range_median.unwrap_or(0.5 * domain.diameter()), p.sigma_upper)?;
    spec.phi_z_sd = p.phi_z_sd;
    spec.beta_sd = p.beta_sd;
    spec.beta_sd_overrides = p.beta_sd_overrides.clone();
    spec.validate()?;
    Ok(spec)
}

pub fn mesh_config(cfg: &RunConfig, domain: &Domain) -> Result<MeshConfig> {
    let m = &cfg.mesh;
    let inner = m.max_edge_inner.unwrap_or(domain.diameter() / 40.0);
    let ext = match m.extension {
        Some(e) => e,
        None => priors(cfg, domain)?.range_median,
    };
    let mut mc = MeshConfig::new(inner, m.max_edge_outer.unwrap_or(4.0 * inner), ext);
    if let Some(a) = m.min_angle {
        mc.min_angle = a;
    }
    if let Some(v) = m.max_vertices {
        mc.max_vertices = v;
    }
    mc.validate()?;
    Ok(mc)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshFile {
    pub provenance: Provenance,
    pub config: MeshConfig,
    pub mesh: Mesh,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {}", path.display()))
}

pub fn read_mesh(path: &Path) -> Result<MeshFile> {
    let f: MeshFile = read_json(path, "mesh").context("run `mesh` first")?;
    f.mesh.validate()?;
    Ok(f)
}

/// `mesh`: triangulates the study region.
pub fn cmd_mesh(run: &Run) -> Result<PathBuf> {
    let cfg = &run.config;
    let domain = load_domain(cfg)?;
    let mc = mesh_config(cfg, &domain)?;
    let mesh = build_mesh(domain.region(), &mc)?;
    run.prepare_output()?;
    let path = cfg.mesh_path();
    write_json(&path, &MeshFile {
        provenance: run.provenance.clone(),
        config: mc,
        mesh,
    })?;
    Ok(path)
}

/// Facility distances and raster values at every mesh vertex.
pub fn compute_covariates(cfg: &RunConfig, mesh: &Mesh) -> Result<CovariateTable> {
    cfg.validate_inputs()?;
    let mut table = CovariateTable::new(mesh);
    if let Some(path) = &cfg.covariates.facilities {
        for layer in read_facilities(path)? {
            let col = mesh
                .vertices
                .par_iter()
                .map(|p| nearest_distance(p, &layer))
                .collect::<Result<Vec<f64>, _>>()?;
            table.push(&format!("dist_{}", layer.kind.as_str()), col)?;
        }
    }
    for r in &cfg.covariates.rasters {
        let grid = read_ascii(&r.path)?;
        let col = sample_raster(&grid, mesh).with_context(|| format!("covariate `{}` from {}", r.name, r.path.display()))?;
        table.push(&r.name, col)?;
    }
    Ok(table)
}

/// Bilinear raster values at the vertices. Extension-ring vertices beyond the
/// raster take the value at the nearest point of its extent.
pub fn sample_raster(grid: &RasterGrid, mesh: &Mesh) -> Result<Vec<f64>> {
    let (x1, y1) = (
        grid.x_ll + grid.n_cols as f64 * grid.cell_size,
        grid.y_ll + grid.n_rows as f64 * grid.cell_size,
    );
    let vals: Vec<Option<f64>> = mesh
        .vertices
        .par_iter()
        .zip(&mesh.inner_flag)
        .map(|(p, &inner)| {
            if inner {
                grid.sample(p)
            } else {
                grid.sample(&Point::new(p.x.clamp(grid.x_ll, x1), p.y.clamp(grid.y_ll, y1)))
            }
        })
        .collect();
    let missing: Vec<usize> = vals.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(i, _)| i).collect();
    if !missing.is_empty() {
        let shown: Vec<String> = missing.iter().take(20).map(|v| v.to_string()).collect();
        bail!(
            "{} mesh vertices fall on nodata cells or outside the raster (vertices {}{})",
            missing.len(),
            shown.join(", "),
            if missing.len() > 20 { ", ..." } else { "" }
        );
    }
    Ok(vals.into_iter().map(Option::unwrap).collect())
}

/// `covariates`: writes the per-vertex covariate table.
pub fn cmd_covariates(run: &Run) -> Result<PathBuf> {
    let cfg = &run.config;
    let mesh = read_mesh(&cfg.mesh_path())?.mesh;
    let table = compute_covariates(cfg, &mesh)?;
    run.prepare_output()?;
    let path = cfg.covariate_table_path();
    write_table(&path, &table, &run.provenance)?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Truth {
    pub provenance: Provenance,
    pub scenario: SimScenario,
    /// Per covariate `(name, center, scale)` used to standardize.
    pub standardization: Vec<(String, f64, f64)>,
    pub counts_per_time: Vec<usize>,
    pub lambda_max: Vec<f64>,
    /// Time-major field and log-intensity at the vertices.
    pub field: Vec<f64>,
    pub log_intensity: Vec<f64>,
}

/// `simulate`: generator covariates, events and the true field.
pub fn cmd_simulate(run: &Run) -> Result<PathBuf> {
    let cfg = &run.config;
    let sim = cfg.simulate.as_ref().ok_or_else(|| anyhow!("the configuration has no [simulate] section"))?;
    let mesh = read_mesh(&cfg.mesh_path())?.mesh;
    let mut table = compute_covariates(cfg, &mesh)?;
    for (name, g) in &sim.generators {
        g.validate()?;
        table.push(name, g.at_vertices(&mesh))?;
    }
    let cov = CovariateField::new(&mesh, table.columns.clone(), cfg.covariates.standardize)?;
    let scenario = SimScenario {
        beta: sim.beta.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        rho: sim.rho,
        sigma: sim.sigma,
        phi: sim.phi,
        n_times: sim.n_times,
        seed: cfg.seed,
        intensity_cap: sim.intensity_cap,
    };
    let out = simulate_lgcp(&mesh, &cov, &scenario)?;
    run.prepare_output()?;
    write_table(&cfg.covariate_table_path(), &table, &run.provenance)?;
    write_events(&cfg.events_path(), &out.pattern.events, &run.provenance)?;
    let path = cfg.output_dir.join("truth.json");
    write_json(&path, &Truth {
        provenance: run.provenance.clone(),
        standardization: cov
            .names
            .iter()
            .zip(&cov.standardization)
            .map(|(n, &(c, s))| (n.clone(), c, s))
            .collect(),
        counts_per_time: out.pattern.counts_per_time(),
        lambda_max: out.lambda_max,
        field: out.field,
        log_intensity: out.log_intensity,
        scenario,
    })?;
    Ok(path)
}

/// Events read from the configured file, snapped onto the roads for network
/// domains.
pub fn load_pattern(cfg: &RunConfig, domain: &Domain) -> Result<PointPattern> {
    let mut events = read_events(&cfg.events_path())?;
    if let (Domain::Network { roads, .. }, true) = (domain, cfg.events.snap) {
        for e in &mut events {
            e.point = snap_to_network(&e.point, roads)?.point;
        }
    }
    let n_times = match cfg.events.n_times {
        Some(t) => t,
        None => events.iter().map(|e| e.t).max().ok_or_else(|| anyhow!("no events and no events.n_times"))?,
    };
    Ok(PointPattern::new(events, n_times)?)
}

/// Mesh, covariates and events ready for fitting.
pub struct Inputs {
    pub domain: Domain,
    pub mesh: Mesh,
    pub mesh_config: MeshConfig,
    pub covariates: CovariateField,
    pub pattern: PointPattern,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let domain = load_domain(cfg)?;
    let mf = read_mesh(&cfg.mesh_path())?;
    let table = read_table(&cfg.covariate_table_path()).context("run `covariates` or `simulate` first")?;
    table.check_mesh(&mf.mesh)?;
    let covariates = CovariateField::new(&mf.mesh, table.columns, cfg.covariates.standardize)?;
    let pattern = load_pattern(cfg, &domain)?;
    Ok(Inputs {
        domain,
        mesh: mf.mesh,
        mesh_config: mf.config,
        covariates,
        pattern,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitFile {
    pub provenance: Provenance,
    pub model: String,
    pub quadrature: Quadrature,
    pub fit: FitResult,
}

/// DIC and WAIC from `n_draws` posterior draws, identical for any thread count.
pub fn parallel_ic(model: &Model, mode: &stlgcp_core::inference::InnerMode, n_draws: usize, seed: u64) -> InformationCriteria {
    let mut acc = IcAccumulator::new(model.pseudodata().n_rows());
    let mut start = 0;
    while start < n_draws {
        let end = (start + IC_BLOCK).min(n_draws);
        let block: Vec<Vec<f64>> = (start..end)
            .into_par_iter()
            .map(|d| draw_row_loglik(model, mode, seed, d as u64))
            .collect();
        for row_ll in &block {
            acc.add(row_ll);
        }
        start = end;
    }
    acc.finish(mode.loglik, seed)
}

/// `fit`: empirical-Bayes fit, information criteria and summary table.
pub fn cmd_fit(run: &Run) -> Result<PathBuf> {
    let cfg = &run.config;
    let inputs = load_inputs(cfg)?;
    let pd = build_pseudodata_with(&inputs.mesh, &inputs.pattern, cfg.model.quadrature)?;
    let spec = ModelSpec {
        intercept: cfg.model.intercept,
        covariates: cfg.model.covariates.clone(),
        field: cfg.model.field,
    };
    let priors = priors(cfg, &inputs.domain)?;
    let model = Model::new(&inputs.mesh, pd, &inputs.covariates, spec, priors, cfg.fit.options.max_dim)?;
    let out = model.fit(&cfg.fit.options)?;
    let mut fit = out.result;
    if cfg.fit.ic_draws > 0 {
        fit.ic = Some(parallel_ic(&model, &out.mode, cfg.fit.ic_draws, cfg.seed));
    }
    run.prepare_output()?;
    write_summary(&cfg.summary_path(), &fit, &run.provenance)?;
    let path = cfg.fit_path();
    write_json(&path, &FitFile {
        provenance: run.provenance.clone(),
        model: cfg.model.name.clone(),
        quadrature: cfg.model.quadrature,
        fit,
    })?;
    Ok(path)
}

pub fn write_summary(path: &Path, fit: &FitResult, prov: &Provenance) -> Result<()> {
    let mut w = csv_writer(path, prov)?;
    w.write_record(["parameter", "mean", "2.5%", "97.5%"])?;
    for f in &fit.fixed_effects {
        w.write_record([f.name.clone(), f.mean.to_string(), f.lower.to_string(), f.upper.to_string()])?;
    }
    for h in &fit.hyper {
        w.write_record([h.name.clone(), h.mode.to_string(), h.lower.to_string(), h.upper.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fit(path: &Path) -> Result<FitFile> {
    read_json(path, "fit").context("run `fit` first")
}

fn predict_par(fit: &FitResult, mesh: &Mesh, cov: &CovariateField, pts: &[Point], t: usize) -> Result<Vec<Prediction>> {
    let parts = pts
        .par_chunks(1024)
        .map(|c| predict_intensity(fit, mesh, cov, c, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Expected and observed event counts per time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Balance {
    pub t: usize,
    pub observed: usize,
    /// Integral of `exp(E[log λ])`.
    pub plugin: f64,
    /// Integral of the posterior mean `E[λ]`.
    pub posterior_mean: f64,
}

/// Integral of the posterior mean intensity over the study region by the
/// fitting quadrature, per time step.
pub fn mass_balance(fit: &FitFile, mesh: &Mesh, cov: &CovariateField, pattern: &PointPattern) -> Result<Vec<Balance>> {
    let nodes: Vec<(Point, f64)> = quadrature_nodes(mesh, fit.quadrature)
        .into_iter()
        .filter(|n| n.2 > 0.0)
        .map(|(v, w, e)| {
            let p = (0..3).fold(Point::new(0.0, 0.0), |acc, k| {
                let q = mesh.vertices[v[k] as usize];
                Point::new(acc.x + w[k] * q.x, acc.y + w[k] * q.y)
            });
            (p, e)
        })
        .collect();
    let pts: Vec<Point> = nodes.iter().map(|n| n.0).collect();
    let counts = pattern.counts_per_time();
    (1..=fit.fit.n_times)
        .map(|t| {
            let pred = predict_par(&fit.fit, mesh, cov, &pts, t)?;
            Ok(Balance {
                t,
                observed: counts.get(t - 1).copied().unwrap_or(0),
                plugin: pred.iter().zip(&nodes).map(|(p, n)| n.1 * p.mean.exp()).sum(),
                posterior_mean: pred.iter().zip(&nodes).map(|(p, n)| n.1 * p.intensity).sum(),
            })
        })
        .collect()
}

/// `predict`: log-intensity rasters (polygon domains) or per-segment points
/// (network domains), plus a per-time mass balance.
pub fn cmd_predict(run: &Run) -> Result<Vec<PathBuf>> {
    let cfg = &run.config;
    let inputs = load_inputs(cfg)?;
    let fit = read_fit(&cfg.fit_path())?;
    let n_times = fit.fit.n_times;
    let times: Vec<usize> = if cfg.predict.times.is_empty() {
        (1..=n_times).collect()
    } else {
        cfg.predict.times.clone()
    };
    if let Some(&t) = times.iter().find(|&&t| t == 0 || t > n_times) {
        bail!("predict.times contains {t}, outside 1..={n_times}");
    }
    run.prepare_output()?;
    let name = &cfg.model.name;
    let mut written = Vec::new();
    match &inputs.domain {
        Domain::Polygons(polys) => {
            let cs = cfg.predict.cell_size.unwrap_or(inputs.mesh_config.max_edge_inner);
            if !(cs > 0.0) {
                bail!("predict.cell_size must be positive");
            }
            let bb = domain_bbox(polys);
            let n_cols = ((bb.width() / cs).ceil() as usize).max(1);
            let n_rows = ((bb.height() / cs).ceil() as usize).max(1);
            let template = RasterGrid::new(n_cols, n_rows, bb.xmin, bb.ymin, cs)?;
            let cells: Vec<(usize, usize)> = (0..n_rows).flat_map(|r| (0..n_cols).map(move |c| (r, c))).collect();
            let inside: Vec<(usize, usize)> = cells
                .into_par_iter()
                .filter(|&(r, c)| point_in_domain(&template.cell_center(r, c), polys))
                .collect();
            let pts: Vec<Point> = inside.iter().map(|&(r, c)| template.cell_center(r, c)).collect();
            for &t in &times {
                let pred = predict_par(&fit.fit, &inputs.mesh, &inputs.covariates, &pts, t)?;
                let (mut mean, mut sd) = (template.clone(), template.clone());
                for (&(r, c), p) in inside.iter().zip(&pred) {
                    if p.inside {
                        mean.set(r, c, Some(p.mean));
                        sd.set(r, c, Some(p.sd));
                    }
                }
                for (grid, quantity) in [(&mean, "log_intensity_mean"), (&sd, "log_intensity_sd")] {
                    let path = cfg.output_dir.join(format!("pred_{name}_t{t}_{quantity}.asc"));
                    write_ascii(&path, grid, &RasterMeta {
                        provenance: run.provenance.clone(),
                        quantity: quantity.into(),
                        time: Some(t),
                    })?;
                    written.push(path);
                }
            }
        }
        Domain::Network { roads, .. } => {
            let targets = roads.sample_points(cfg.predict.network_spacing)?;
            let pts: Vec<Point> = targets.iter().map(|s| s.1).collect();
            let path = cfg.output_dir.join(format!("pred_{name}.csv"));
            let mut w = csv_writer(&path, &run.provenance)?;
            w.write_record(["segment_id", "x", "y", "t", "log_intensity_mean", "log_intensity_sd", "intensity"])?;
            for &t in &times {
                let pred = predict_par(&fit.fit, &inputs.mesh, &inputs.covariates, &pts, t)?;
                for ((id, p), q) in targets.iter().zip(&pred) {
                    w.write_record([
                        id.to_string(),
                        p.x.to_string(),
                        p.y.to_string(),
                        t.to_string(),
                        q.mean.to_string(),
                        q.sd.to_string(),
                        q.intensity.to_string(),
                    ])?;
                }
            }
            w.flush()?;
            written.push(path);
        }
    }
    let balance = mass_balance(&fit, &inputs.mesh, &inputs.covariates, &inputs.pattern)?;
    let path = cfg.output_dir.join(format!("balance_{name}.csv"));
    let mut w = csv_writer(&path, &run.provenance)?;
    for b in &balance {
        w.serialize(b)?;
    }
    w.flush()?;
    written.push(path);
    Ok(written)
}

/// `ic`: one row per fitted model. Without explicit files, every
/// `fit_*.json` in the output directory is used.
pub fn cmd_ic(run: &Run, fits: &[PathBuf]) -> Result<PathBuf> {
    let cfg = &run.config;
    let mut paths = fits.to_vec();
    if paths.is_empty() {
        let dir = &cfg.output_dir;
        for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
            let p = entry?.path();
            let fname = p.file_name().and_then(|s| s.to_str()).unwrap_or_default();
            if fname.starts_with("fit_") && fname.ends_with(".json") {
                paths.push(p);
            }
        }
        paths.sort();
    }
    if paths.is_empty() {
        bail!("no fitted models found in {}", cfg.output_dir.display());
    }
    run.prepare_output()?;
    let path = cfg.output_dir.join("ic.csv");
    let mut w = csv_writer(&path, &run.provenance)?;
    w.write_record(["model", "dic", "p_d", "waic", "p_waic", "log_marginal", "n_draws"])?;
    for p in &paths {
        let f = read_fit(p)?;
        let ic = f
            .fit
            .ic
            .as_ref()
            .ok_or_else(|| anyhow!("{} was fitted without information criteria (fit.ic_draws = 0)", p.display()))?;
        w.write_record([
            f.model.clone(),
            ic.dic.to_string(),
            ic.p_d.to_string(),
            ic.waic.to_string(),
            ic.p_waic.to_string(),
            f.fit.log_marginal.to_string(),
            ic.n_draws.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

