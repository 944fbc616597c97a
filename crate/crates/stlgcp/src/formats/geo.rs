//! GeoJSON layers: study polygons, road networks and facility points.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use geojson::{Feature, FeatureCollection, GeoJson, Geometry, JsonObject, Value};
use stlgcp_core::geometry::BBox;
use stlgcp_core::{FacilityKind, FacilityLayer, Point, Polygon, RoadNetwork, Segment};

fn read(path: &Path) -> Result<Vec<(Geometry, Option<JsonObject>)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let gj: GeoJson = text.parse().with_context(|| format!("parsing GeoJSON {}", path.display()))?;
    Ok(match gj {
        GeoJson::FeatureCollection(fc) => fc
            .features
            .into_iter()
            .filter_map(|f| f.geometry.map(|g| (g, f.properties)))
            .collect(),
        GeoJson::Feature(f) => f.geometry.map(|g| (g, f.properties)).into_iter().collect(),
        GeoJson::Geometry(g) => vec![(g, None)],
    })
}

fn point(pos: &[f64]) -> Result<Point> {
    match pos {
        [x, y, ..] if x.is_finite() && y.is_finite() => Ok(Point::new(*x, *y)),
        _ => bail!("invalid position {pos:?}"),
    }
}

fn ring(r: &[Vec<f64>]) -> Result<Vec<Point>> {
    r.iter().map(|p| point(p)).collect()
}

fn polygon(rings: &[Vec<Vec<f64>>]) -> Result<Polygon> {
    let (ext, holes) = rings.split_first().ok_or_else(|| anyhow!("polygon without rings"))?;
    Ok(Polygon::new(ring(ext)?, holes.iter().map(|h| ring(h)).collect::<Result<_>>()?)?)
}

/// Every Polygon and MultiPolygon in the file.
pub fn read_polygons(path: &Path) -> Result<Vec<Polygon>> {
    let mut out = Vec::new();
    for (g, _) in read(path)? {
        match &g.value {
            Value::Polygon(p) => out.push(polygon(p)?),
            Value::MultiPolygon(ps) => {
                for p in ps {
                    out.push(polygon(p)?);
                }
            }
            other => bail!("{}: expected polygons, found {}", path.display(), other.type_name()),
        }
    }
    if out.is_empty() {
        bail!("{}: no polygons", path.display());
    }
    Ok(out)
}

/// Road network from LineString/MultiLineString features. Each pair of
/// consecutive vertices becomes a segment; ids follow file order.
pub fn read_roads(path: &Path) -> Result<RoadNetwork> {
    let mut segs = Vec::new();
    for (fi, (g, props)) in read(path)?.into_iter().enumerate() {
        let lines = match g.value {
            Value::LineString(l) => vec![l],
            Value::MultiLineString(ls) => ls,
            other => bail!("{}: expected line strings, found {}", path.display(), other.type_name()),
        };
        let name = props.as_ref().and_then(|p| p.get("name")).and_then(|v| v.as_str()).map(str::to_string);
        for line in lines {
            let pts = ring(&line)?;
            for w in pts.windows(2) {
                if w[0] == w[1] {
                    continue;
                }
                let mut s = Segment::new(segs.len() as u64, w[0], w[1]);
                s.metadata.insert("feature".into(), fi.to_string());
                if let Some(n) = &name {
                    s.metadata.insert("name".into(), n.clone());
                }
                segs.push(s);
            }
        }
    }
    if segs.is_empty() {
        bail!("{}: no road segments", path.display());
    }
    Ok(RoadNetwork::new(segs)?)
}

/// Point features grouped into layers by their `kind` property.
pub fn read_facilities(path: &Path) -> Result<Vec<FacilityLayer>> {
    let mut layers: BTreeMap<FacilityKind, Vec<Point>> = BTreeMap::new();
    for (g, props) in read(path)? {
        let kind = props
            .as_ref()
            .and_then(|p| p.get("kind"))
            .and_then(|v| v.as_str())
            .ok_or_else(|| anyhow!("{}: facility without a `kind` property", path.display()))?;
        let kind: FacilityKind = kind.parse()?;
        let pts = match &g.value {
            Value::Point(p) => vec![point(p)?],
            Value::MultiPoint(ps) => ps.iter().map(|p| point(p)).collect::<Result<_>>()?,
            other => bail!("{}: expected points, found {}", path.display(), other.type_name()),
        };
        layers.entry(kind).or_default().extend(pts);
    }
    Ok(layers.into_iter().map(|(kind, points)| FacilityLayer { kind, points }).collect())
}

fn feature(value: Value, props: JsonObject) -> Feature {
    Feature {
        geometry: Some(Geometry::new(value)),
        properties: Some(props),
        ..Default::default()
    }
}

fn write(path: &Path, features: Vec<Feature>) -> Result<()> {
    let gj = GeoJson::FeatureCollection(FeatureCollection {
        bbox: None,
        features,
        foreign_members: None,
    });
    std::fs::write(path, gj.to_string()).with_context(|| format!("writing {}", path.display()))
}

fn pos(p: &Point) -> Vec<f64> {
    vec![p.x, p.y]
}

pub fn write_polygons(path: &Path, polys: &[Polygon]) -> Result<()> {
    let features = polys
        .iter()
        .map(|p| {
            let mut rings: Vec<Vec<Vec<f64>>> = Vec::new();
            for r in p.rings() {
                let mut v: Vec<Vec<f64>> = r.iter().map(pos).collect();
                v.push(pos(&r[0]));
                rings.push(v);
            }
            feature(Value::Polygon(rings), JsonObject::new())
        })
        .collect();
    write(path, features)
}

/// One LineString feature per segment, carrying its id.
pub fn write_roads(path: &Path, net: &RoadNetwork) -> Result<()> {
    let features = net
        .segments()
        .iter()
        .map(|s| {
            let mut props = JsonObject::new();
            props.insert("id".into(), s.id.into());
            feature(Value::LineString(vec![pos(&s.a), pos(&s.b)]), props)
        })
        .collect();
    write(path, features)
}

pub fn write_facilities(path: &Path, layers: &[FacilityLayer]) -> Result<()> {
    let features = layers
        .iter()
        .flat_map(|l| {
            l.points.iter().map(move |p| {
                let mut props = JsonObject::new();
                props.insert("kind".into(), l.kind.as_str().into());
                feature(Value::Point(pos(p)), props)
            })
        })
        .collect();
    write(path, features)
}

/// Rejects inputs whose coordinates all fit in ±360, which suggests degrees
/// rather than projected meters.
pub fn check_projected(bbox: &BBox, what: &str) -> Result<()> {
    let m = [bbox.xmin, bbox.xmax, bbox.ymin, bbox.ymax].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m < 360.0 {
        bail!("{what}: all coordinates lie within ±360, which looks like longitude/latitude; reproject to meters or set domain.assume_projected = true");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let poly = Polygon::new(
            vec![Point::new(0.0, 0.0), Point::new(400.0, 0.0), Point::new(400.0, 400.0), Point::new(0.0, 400.0)],
            vec![vec![Point::new(100.0, 100.0), Point::new(100.0, 200.0), Point::new(200.0, 200.0), Point::new(200.0, 100.0)]],
        )
        .unwrap();
        let p = dir.path().join("d.geojson");
        write_polygons(&p, std::slice::from_ref(&poly)).unwrap();
        let back = read_polygons(&p).unwrap();
        assert_eq!(back.len(), 1);
        assert!((back[0].area() - poly.area()).abs() < 1e-9);

        let net = RoadNetwork::new(vec![
            Segment::new(0, Point::new(0.0, 0.0), Point::new(500.0, 0.0)),
            Segment::new(1, Point::new(500.0, 0.0), Point::new(500.0, 500.0)),
        ])
        .unwrap();
        let r = dir.path().join("r.geojson");
        write_roads(&r, &net).unwrap();
        let back = read_roads(&r).unwrap();
        assert_eq!(back.segments().len(), 2);
        assert_eq!(back.segments()[1].b, Point::new(500.0, 500.0));

        let layers = vec![FacilityLayer {
            kind: FacilityKind::School,
            points: vec![Point::new(1.0, 2.0), Point::new(3.0, 4.0)],
        }];
        let f = dir.path().join("f.geojson");
        write_facilities(&f, &layers).unwrap();
        assert_eq!(read_facilities(&f).unwrap(), layers);
    }

    #[test]
    fn multilinestring_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.geojson");
        std::fs::write(
            &p,
            r#"{"type":"Feature","properties":{"name":"main"},"geometry":{"type":"MultiLineString","coordinates":[[[0,0],[10,0],[10,0],[20,0]],[[0,5],[0,9]]]}}"#,
        )
        .unwrap();
        let net = read_roads(&p).unwrap();
        assert_eq!(net.segments().len(), 3);
        assert_eq!(net.segments()[0].metadata["name"], "main");
        assert!(read_polygons(&p).is_err());
        std::fs::write(&p, r#"{"type":"Point","coordinates":[1,2]}"#).unwrap();
        assert!(read_facilities(&p).is_err());
        assert!(read_roads(&dir.path().join("missing.geojson")).is_err());
    }

    #[test]
    fn degree_like_coordinates_flagged() {
        let small = stlgcp_core::geometry::bbox_of(&[Point::new(38.7, 9.0), Point::new(38.9, 9.1)]);
        assert!(check_projected(&small, "domain").is_err());
        let big = stlgcp_core::geometry::bbox_of(&[Point::new(470000.0, 990000.0), Point::new(480000.0, 1000000.0)]);
        assert!(check_projected(&big, "domain").is_ok());
    }
}
