#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stlgcp::formats::geo::{write_polygons, write_roads};
use stlgcp_core::{Point, Polygon, RoadNetwork, Segment};

pub const X0: f64 = 470_000.0;
pub const Y0: f64 = 990_000.0;

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_stlgcp"))
}

pub fn stlgcp(config: &Path, args: &[&str]) -> Output {
    Command::new(bin()).arg("--config").arg(config).args(args).output().expect("spawn stlgcp")
}

/// Runs a command and panics with its stderr on failure.
pub fn ok(config: &Path, args: &[&str]) {
    let out = stlgcp(config, args);
    assert!(
        out.status.success(),
        "stlgcp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Square study region of side `side` meters with its lower-left corner at (X0, Y0).
pub fn square(dir: &Path, side: f64) -> PathBuf {
    let path = dir.join("domain.geojson");
    let p = Polygon::rectangle(X0, Y0, X0 + side, Y0 + side).unwrap();
    write_polygons(&path, &[p]).unwrap();
    path
}

/// `n × n` street grid with `spacing` meters between parallel streets.
pub fn manhattan(dir: &Path, n: usize, spacing: f64) -> PathBuf {
    let path = dir.join("roads.geojson");
    let mut segs = Vec::new();
    for i in 0..n {
        let c = i as f64 * spacing;
        // Streets are split at every crossing, as in typical road data.
        for j in 0..n - 1 {
            let (a, b) = (j as f64 * spacing, (j + 1) as f64 * spacing);
            segs.push(Segment::new(segs.len() as u64, Point::new(X0 + c, Y0 + a), Point::new(X0 + c, Y0 + b)));
            segs.push(Segment::new(segs.len() as u64, Point::new(X0 + a, Y0 + c), Point::new(X0 + b, Y0 + c)));
        }
    }
    write_roads(&path, &RoadNetwork::new(segs).unwrap()).unwrap();
    path
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Small simulated polygon scenario with a bump covariate `pop`.
pub fn polygon_config(dir: &Path, seed: u64) -> PathBuf {
    square(dir, 1000.0);
    write(
        dir,
        "run.toml",
        &format!(
            r#"
seed = {seed}
[domain]
polygon = "domain.geojson"
[mesh]
max_edge_inner = 100.0
extension = 300.0
[model]
name = "full"
covariates = ["pop"]
[fit]
ic_draws = 100
[predict]
cell_size = 50.0
[simulate]
beta = {{ intercept = -8.5, pop = -0.163 }}
rho = 400.0
sigma = 0.8
phi = 0.5
n_times = 2
[simulate.generators.pop]
kind = "bumps"
bumps = [{{ center = {{ x = {cx}, y = {cy} }}, width = 250.0, height = 3.0 }}]
"#,
            cx = X0 + 300.0,
            cy = Y0 + 600.0
        ),
    )
}
