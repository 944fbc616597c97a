//! Run configuration: TOML or JSON files, `--set key=value` overrides and a
//! content hash that every output carries.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use stlgcp_core::inference::FitOptions;
use stlgcp_core::likelihood::Quadrature;
use stlgcp_core::simulate::CovariateGenerator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub domain: DomainConfig,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub events: EventsConfig,
    #[serde(default)]
    pub covariates: CovariatesConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub priors: PriorsSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub predict: PredictSection,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Study region: a polygon layer, or a road network buffered by `buffer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub polygon: Option<PathBuf>,
    pub roads: Option<PathBuf>,
    #[serde(default = "default_buffer")]
    pub buffer: f64,
    /// Accept inputs whose coordinates all look like degrees.
    #[serde(default)]
    pub assume_projected: bool,
}

fn default_buffer() -> f64 {
    30.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    /// Defaults to a fortieth of the domain diameter.
    pub max_edge_inner: Option<f64>,
    /// Defaults to four times `max_edge_inner`.
    pub max_edge_outer: Option<f64>,
    /// Defaults to the prior median range.
    pub extension: Option<f64>,
    pub min_angle: Option<f64>,
    pub max_vertices: Option<usize>,
    /// Mesh file; defaults to `<output_dir>/mesh.json`.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventsConfig {
    /// Events CSV; defaults to `<output_dir>/events.csv`.
    pub path: Option<PathBuf>,
    /// Number of time steps; defaults to the largest event time.
    pub n_times: Option<usize>,
    /// Snap events onto the road network (network domains only).
    #[serde(default = "yes")]
    pub snap: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterInput {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariatesConfig {
    #[serde(default = "yes")]
    pub standardize: bool,
    /// GeoJSON points with a `kind` property; one `dist_<kind>` column per kind.
    pub facilities: Option<PathBuf>,
    #[serde(default)]
    pub rasters: Vec<RasterInput>,
    /// Per-vertex table; defaults to `<output_dir>/covariates.csv`.
    pub table: Option<PathBuf>,
}

impl Default for CovariatesConfig {
    fn default() -> Self {
        Self {
            standardize: true,
            facilities: None,
            rasters: Vec::new(),
            table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_model_name")]
    pub name: String,
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default = "yes")]
    pub field: bool,
    #[serde(default = "default_quadrature")]
    pub quadrature: Quadrature,
}

fn default_model_name() -> String {
    "model".into()
}

fn default_quadrature() -> Quadrature {
    Quadrature::Midpoint
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            name: default_model_name(),
            intercept: true,
            covariates: Vec::new(),
            field: true,
            quadrature: default_quadrature(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorsSection {
    /// ρ0; defaults to half the domain diameter.
    pub range_median: Option<f64>,
    #[serde(default = "one")]
    pub sigma_upper: f64,
    #[serde(default = "one")]
    pub phi_z_sd: f64,
    #[serde(default = "ten")]
    pub beta_sd: f64,
    #[serde(default)]
    pub beta_sd_overrides: BTreeMap<String, f64>,
}

fn one() -> f64 {
    1.0
}

fn ten() -> f64 {
    10.0
}

impl Default for PriorsSection {
    fn default() -> Self {
        Self {
            range_median: None,
            sigma_upper: 1.0,
            phi_z_sd: 1.0,
            beta_sd: 10.0,
            beta_sd_overrides: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSection {
    /// Posterior draws for DIC/WAIC (0 skips them).
    #[serde(default = "default_ic_draws")]
    pub ic_draws: usize,
    #[serde(flatten)]
    pub options: FitOptions,
}

fn default_ic_draws() -> usize {
    1000
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            ic_draws: default_ic_draws(),
            options: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    /// Raster cell size for polygon domains; defaults to `max_edge_inner`.
    pub cell_size: Option<f64>,
    /// Time steps to predict (1-based); empty means all.
    #[serde(default)]
    pub times: Vec<usize>,
    /// Spacing of prediction points along road segments.
    #[serde(default = "default_spacing")]
    pub network_spacing: f64,
}

fn default_spacing() -> f64 {
    50.0
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            cell_size: None,
            times: Vec::new(),
            network_spacing: default_spacing(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// True fixed effects by term name (`intercept` for β0).
    pub beta: BTreeMap<String, f64>,
    pub rho: f64,
    pub sigma: f64,
    #[serde(default)]
    pub phi: f64,
    pub n_times: usize,
    #[serde(default = "default_cap")]
    pub intensity_cap: f64,
    /// Analytic covariates written to the covariate table.
    #[serde(default)]
    pub generators: BTreeMap<String, CovariateGenerator>,
}

fn default_cap() -> f64 {
    1e6
}

/// A parsed configuration with relative paths resolved against the config
/// file's directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub hash: String,
}

impl LoadedConfig {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }
}

/// Reads `path` (TOML unless the extension is `.json`), applies `overrides`
/// and resolves relative paths.
pub fn load(path: &Path, overrides: &[String]) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    from_str(&text, is_json(path), &base, overrides).with_context(|| format!("in config {}", path.display()))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn from_str(text: &str, json: bool, base: &Path, overrides: &[String]) -> Result<LoadedConfig> {
    let mut value: Value = if json {
        serde_json::from_str(text)?
    } else {
        serde_json::to_value(toml::from_str::<toml::Value>(text)?)?
    };
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let mut config: RunConfig = serde_json::from_value(value)?;
    // Hashed before path resolution, so a copied run directory keeps its hash.
    let hash = config_hash(&config)?;
    resolve_paths(&mut config, base);
    Ok(LoadedConfig { config, hash })
}

/// Sets a dotted key to a TOML-syntax value (bare words are taken as strings).
pub fn apply_override(value: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{assignment}` is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("override `{assignment}` has an empty key");
    }
    let parsed = match toml::from_str::<toml::Value>(&format!("v = {}", raw.trim())) {
        Ok(t) => serde_json::to_value(&t["v"])?,
        Err(_) => Value::String(raw.trim().to_string()),
    };
    let mut node = value;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            bail!("override `{key}`: `{part}` is not a table");
        }
        node = node
            .as_object_mut()
            .unwrap()
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match node.as_object_mut() {
        Some(map) => {
            map.insert(parts[parts.len() - 1].to_string(), parsed);
            Ok(())
        }
        None => bail!("override `{key}` does not address a table entry"),
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn resolve_paths(c: &mut RunConfig, base: &Path) {
    resolve(base, &mut c.output_dir);
    for p in [
        c.domain.polygon.as_mut(),
        c.domain.roads.as_mut(),
        c.mesh.path.as_mut(),
        c.events.path.as_mut(),
        c.covariates.facilities.as_mut(),
        c.covariates.table.as_mut(),
    ]
    .into_iter()
    .flatten()
    {
        resolve(base, p);
    }
    for r in &mut c.covariates.rasters {
        resolve(base, &mut r.path);
    }
}

/// SHA-256 of the canonical JSON form of the configuration.
pub fn config_hash(c: &RunConfig) -> Result<String> {
    let canonical = serde_json::to_string(c)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

impl RunConfig {
    pub fn mesh_path(&self) -> PathBuf {
        self.mesh.path.clone().unwrap_or_else(|| self.output_dir.join("mesh.json"))
    }

    pub fn events_path(&self) -> PathBuf {
        self.events.path.clone().unwrap_or_else(|| self.output_dir.join("events.csv"))
    }

    pub fn covariate_table_path(&self) -> PathBuf {
        self.covariates.table.clone().unwrap_or_else(|| self.output_dir.join("covariates.csv"))
    }

    pub fn fit_path(&self) -> PathBuf {
        self.output_dir.join(format!("fit_{}.json", self.model.name))
    }

    pub fn summary_path(&self) -> PathBuf {
        self.output_dir.join(format!("summary_{}.csv", self.model.name))
    }

    /// Checks that every referenced input exists.
    pub fn validate_inputs(&self) -> Result<()> {
        match (&self.domain.polygon, &self.domain.roads) {
            (Some(_), Some(_)) => bail!("domain: give either `polygon` or `roads`, not both"),
            (None, None) => bail!("domain: one of `polygon` or `roads` is required"),
            _ => {}
        }
        if !(self.domain.buffer > 0.0) {
            bail!("domain.buffer must be positive");
        }
        let mut inputs: Vec<&Path> = Vec::new();
        inputs.extend(self.domain.polygon.as_deref());
        inputs.extend(self.domain.roads.as_deref());
        inputs.extend(self.covariates.facilities.as_deref());
        inputs.extend(self.covariates.rasters.iter().map(|r| r.path.as_path()));
        for p in inputs {
            if !p.exists() {
                bail!("input file {} does not exist", p.display());
            }
        }
        Ok(())
    }
}
