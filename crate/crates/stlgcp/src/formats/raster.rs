//! ESRI ASCII grids with a JSON sidecar for provenance, and bilinear sampling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stlgcp_core::Point;

use crate::provenance::Provenance;

/// A north-up grid; `values` are row-major starting from the top row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterGrid {
    pub n_cols: usize,
    pub n_rows: usize,
    /// Lower-left corner of the grid.
    pub x_ll: f64,
    pub y_ll: f64,
    pub cell_size: f64,
    pub nodata: f64,
    pub values: Vec<f64>,
}

pub const DEFAULT_NODATA: f64 = -9999.0;

impl RasterGrid {
    pub fn new(n_cols: usize, n_rows: usize, x_ll: f64, y_ll: f64, cell_size: f64) -> Result<Self> {
        let g = Self {
            n_cols,
            n_rows,
            x_ll,
            y_ll,
            cell_size,
            nodata: DEFAULT_NODATA,
            values: vec![DEFAULT_NODATA; n_cols * n_rows],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cols == 0 || self.n_rows == 0 {
            bail!("raster must have at least one row and column");
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            bail!("raster cell size must be positive");
        }
        if !(self.x_ll.is_finite() && self.y_ll.is_finite() && self.nodata.is_finite()) {
            bail!("raster origin and nodata value must be finite");
        }
        if self.values.len() != self.n_cols * self.n_rows {
            bail!("raster has {} values for {}x{} cells", self.values.len(), self.n_rows, self.n_cols);
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            bail!("raster value {i} is not finite");
        }
        Ok(())
    }

    /// Centre of cell `(row, col)`, rows counted from the top.
    pub fn cell_center(&self, row: usize, col: usize) -> Point {
        Point::new(
            self.x_ll + (col as f64 + 0.5) * self.cell_size,
            self.y_ll + ((self.n_rows - 1 - row) as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.values[row * self.n_cols + col];
        (v != self.nodata).then_some(v)
    }

    pub fn set(&mut self, row: usize, col: usize, v: Option<f64>) {
        self.values[row * self.n_cols + col] = match v {
            Some(x) if x.is_finite() => x,
            _ => self.nodata,
        };
    }

    /// Bilinear interpolation between cell centres, constant within half a
    /// cell of the outer edge. `None` outside the grid or when a contributing
    /// cell is nodata.
    pub fn sample(&self, p: &Point) -> Option<f64> {
        let cs = self.cell_size;
        let (w, h) = (self.n_cols as f64 * cs, self.n_rows as f64 * cs);
        let (dx, dy) = (p.x - self.x_ll, p.y - self.y_ll);
        if !(dx >= 0.0 && dx <= w && dy >= 0.0 && dy <= h) {
            return None;
        }
        let axis = |d: f64, n: usize| -> (usize, usize, f64) {
            let u = (d / cs - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = (u.floor() as usize).min(n.saturating_sub(2));
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, if i1 == i0 { 0.0 } else { u - i0 as f64 })
        };
        let (c0, c1, fx) = axis(dx, self.n_cols);
        let (b0, b1, fy) = axis(dy, self.n_rows);
        let row = |b: usize| self.n_rows - 1 - b;
        // Nested lerps reproduce constants exactly; zero-weight cells are not read.
        let lerp = |a: &dyn Fn() -> Option<f64>, b: &dyn Fn() -> Option<f64>, f: f64| -> Option<f64> {
            match f {
                0.0 => a(),
                1.0 => b(),
                _ => {
                    let a = a()?;
                    Some(a + f * (b()? - a))
                }
            }
        };
        let along = |r: usize| lerp(&|| self.get(r, c0), &|| self.get(r, c1), fx);
        lerp(&|| along(row(b0)), &|| along(row(b1)), fy)
    }
}

pub fn read_ascii(path: &Path) -> Result<RasterGrid> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_ascii(&text).with_context(|| format!("parsing ESRI ASCII grid {}", path.display()))
}

pub fn parse_ascii(text: &str) -> Result<RasterGrid> {
    let mut tokens = text.split_whitespace().peekable();
    let (mut ncols, mut nrows, mut cs) = (None, None, None);
    let (mut x, mut y, mut centre) = (None, None, false);
    let mut nodata = DEFAULT_NODATA;
    while let Some(tok) = tokens.peek() {
        if tok.parse::<f64>().is_ok() {
            break;
        }
        let key = tokens.next().unwrap().to_ascii_lowercase();
        let val = tokens.next().with_context(|| format!("header `{key}` has no value"))?;
        let num = || val.parse::<f64>().with_context(|| format!("header `{key}`: bad value `{val}`"));
        match key.as_str() {
            "ncols" => ncols = Some(val.parse::<usize>()?),
            "nrows" => nrows = Some(val.parse::<usize>()?),
            "xllcorner" => x = Some(num()?),
            "yllcorner" => y = Some(num()?),
            "xllcenter" => {
                x = Some(num()?);
                centre = true;
            }
            "yllcenter" => {
                y = Some(num()?);
                centre = true;
            }
            "cellsize" => cs = Some(num()?),
            "nodata_value" => nodata = num()?,
            _ => bail!("unknown header `{key}`"),
        }
    }
    let (Some(n_cols), Some(n_rows), Some(cell_size), Some(mut x_ll), Some(mut y_ll)) = (ncols, nrows, cs, x, y) else {
        bail!("header needs ncols, nrows, xll*, yll* and cellsize");
    };
    if centre {
        x_ll -= 0.5 * cell_size;
        y_ll -= 0.5 * cell_size;
    }
    let values: Vec<f64> = tokens.map(|t| t.parse::<f64>().with_context(|| format!("bad cell value `{t}`"))).collect::<Result<_>>()?;
    let g = RasterGrid {
        n_cols,
        n_rows,
        x_ll,
        y_ll,
        cell_size,
        nodata,
        values,
    };
    g.validate()?;
    Ok(g)
}

/// Values use the shortest representation that parses back exactly.
pub fn to_ascii(g: &RasterGrid) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ncols {}", g.n_cols);
    let _ = writeln!(s, "nrows {}", g.n_rows);
    let _ = writeln!(s, "xllcorner {}", g.x_ll);
    let _ = writeln!(s, "yllcorner {}", g.y_ll);
    let _ = writeln!(s, "cellsize {}", g.cell_size);
    let _ = writeln!(s, "NODATA_value {}", g.nodata);
    for row in g.values.chunks(g.n_cols) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

/// Sidecar written next to every raster output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterMeta {
    pub provenance: Provenance,
    pub quantity: String,
    pub time: Option<usize>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_ascii(path: &Path, g: &RasterGrid, meta: &RasterMeta) -> Result<()> {
    g.validate()?;
    std::fs::write(path, to_ascii(g)).with_context(|| format!("writing {}", path.display()))?;
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(meta)? + "\n").with_context(|| format!("writing {}", side.display()))
}

pub fn read_meta(path: &Path) -> Result<RasterMeta> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).with_context(|| format!("reading {}", side.display()))?;
    Ok(serde_json::from_str(&text)?)
}
