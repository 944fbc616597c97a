//! CSV files: events (`x,y,t`) and per-vertex covariate tables. Outputs start
//! with a provenance comment line; readers skip `#` lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stlgcp_core::likelihood::Event;
use stlgcp_core::{Mesh, Point};

use crate::provenance::Provenance;

/// Creates `path` and writes the provenance comment.
pub fn csv_writer(path: &Path, prov: &Provenance) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", prov.csv_comment())?;
    Ok(csv::Writer::from_writer(w))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file))
}

/// Provenance comment of a CSV written by this tool.
pub fn read_provenance(path: &Path) -> Result<Provenance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Provenance::parse_comment(text.lines().next().unwrap_or_default())
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    x: f64,
    y: f64,
    t: usize,
}

pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let mut rdr = csv_reader(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<EventRow>().enumerate() {
        let r = row.with_context(|| format!("{}: event row {}", path.display(), i + 1))?;
        if !(r.x.is_finite() && r.y.is_finite()) {
            bail!("{}: event row {} has non-finite coordinates", path.display(), i + 1);
        }
        out.push(Event {
            point: Point::new(r.x, r.y),
            t: r.t,
        });
    }
    Ok(out)
}

pub fn write_events(path: &Path, events: &[Event], prov: &Provenance) -> Result<()> {
    let mut w = csv_writer(path, prov)?;
    for e in events {
        w.serialize(EventRow {
            x: e.point.x,
            y: e.point.y,
            t: e.t,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Named per-vertex columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub coords: Vec<Point>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl CovariateTable {
    pub fn new(mesh: &Mesh) -> Self {
        Self {
            coords: mesh.vertices.clone(),
            columns: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.coords.len() {
            bail!("column `{name}` has {} values for {} vertices", values.len(), self.coords.len());
        }
        if self.columns.iter().any(|(n, _)| n == name) {
            bail!("duplicate covariate column `{name}`");
        }
        self.columns.push((name.to_string(), values));
        Ok(())
    }

    /// Fails unless the table was computed on `mesh`'s vertices.
    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.coords.len() != mesh.n_vertices() {
            bail!("covariate table has {} rows but the mesh has {} vertices; recompute covariates", self.coords.len(), mesh.n_vertices());
        }
        let scale = mesh.bbox().diagonal().max(1.0);
        for (v, (a, b)) in self.coords.iter().zip(&mesh.vertices).enumerate() {
            if a.distance(b) > 1e-9 * scale {
                bail!("covariate table row {v} does not match mesh vertex {v}; recompute covariates");
            }
        }
        Ok(())
    }
}

pub fn write_table(path: &Path, table: &CovariateTable, prov: &Provenance) -> Result<()> {
    let mut w = csv_writer(path, prov)?;
    let mut header = vec!["vertex".to_string(), "x".into(), "y".into()];
    header.extend(table.columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for (v, p) in table.coords.iter().enumerate() {
        let mut rec = vec![v.to_string(), p.x.to_string(), p.y.to_string()];
        rec.extend(table.columns.iter().map(|(_, c)| c[v].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<CovariateTable> {
    let mut rdr = csv_reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[..3] != ["vertex", "x", "y"] {
        bail!("{}: expected columns vertex,x,y,...", path.display());
    }
    let names = &header[3..];
    let mut coords = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .unwrap_or_default()
                .parse::<f64>()
                .with_context(|| format!("{}: row {}, column {}", path.display(), i + 1, header[k]))
        };
        let v: usize = rec.get(0).unwrap_or_default().parse().with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        if v != i {
            bail!("{}: row {} has vertex index {v}", path.display(), i + 1);
        }
        coords.push(Point::new(num(1)?, num(2)?));
        for (c, col) in cols.iter_mut().enumerate() {
            col.push(num(3 + c)?);
        }
    }
    Ok(CovariateTable {
        coords,
        columns: names.iter().cloned().zip(cols).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_round_trip_with_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let events = vec![
            Event {
                point: Point::new(0.1 + 0.2, 1e5 / 3.0),
                t: 1,
            },
            Event {
                point: Point::new(-4.0, 7.25),
                t: 3,
            },
        ];
        let prov = Provenance::new("deadbeef", 9);
        write_events(&p, &events, &prov).unwrap();
        assert_eq!(read_events(&p).unwrap(), events);
        assert_eq!(read_provenance(&p).unwrap(), prov);
    }

    #[test]
    fn events_reject_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        std::fs::write(&p, "x,y,t\n1,2,abc\n").unwrap();
        assert!(read_events(&p).is_err());
        std::fs::write(&p, "# hand written\nx, y, t\n1, 2, 1\n").unwrap();
        assert_eq!(read_events(&p).unwrap().len(), 1);
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let table = CovariateTable {
            coords: vec![Point::new(0.0, 0.0), Point::new(1.5, 2.0)],
            columns: vec![("pop".into(), vec![1.0 / 3.0, 2.0]), ("dist_school".into(), vec![0.0, 1e-7])],
        };
        write_table(&p, &table, &Provenance::new("h", 1)).unwrap();
        assert_eq!(read_table(&p).unwrap(), table);
        let mut t2 = table.clone();
        assert!(t2.push("pop", vec![0.0, 0.0]).is_err());
        assert!(t2.push("z", vec![0.0]).is_err());
    }
}
