//! PLY point clouds, knot CSV, profile CSV.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ply_rs::parser::Parser;
use ply_rs::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyDef, PropertyType, ScalarType,
};
use ply_rs::writer::Writer;
use revolve_core::spline::ProfileCurve;
use revolve_core::{FrameId, Point2, Point3, PointCloud};

use crate::error::{CliError, Result};

pub const KNOT_HEADER: &str = "frame,rho0_mm,h0_mm,rho1_mm,h1_mm,rho2_mm,h2_mm";
pub const PROFILE_HEADER: &str = "rho_mm,h_mm";

/// `.ply` files of a directory in lexicographic order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply")))
        .collect();
    files.sort();
    Ok(files)
}

fn scalar(p: &Property) -> Option<f64> {
    Some(match *p {
        Property::Char(v) => v as f64,
        Property::UChar(v) => v as f64,
        Property::Short(v) => v as f64,
        Property::UShort(v) => v as f64,
        Property::Int(v) => v as f64,
        Property::UInt(v) => v as f64,
        Property::Float(v) => v as f64,
        Property::Double(v) => v,
        _ => return None,
    })
}

/// Reads the `x y z` vertex properties of an ASCII or binary PLY file.
pub fn read_ply(path: &Path, frame: FrameId) -> Result<PointCloud> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let ply = Parser::<DefaultElement>::new()
        .read_ply(&mut BufReader::new(file))
        .map_err(|e| CliError::io(path, e))?;
    let vertices = ply
        .payload
        .get("vertex")
        .ok_or_else(|| CliError::io(path, "no vertex element"))?;
    let mut points = Vec::with_capacity(vertices.len());
    for v in vertices {
        let coord = |name: &str| {
            v.get(name)
                .and_then(scalar)
                .ok_or_else(|| CliError::io(path, format!("vertex without numeric {name}")))
        };
        points.push(Point3::new(coord("x")?, coord("y")?, coord("z")?));
    }
    PointCloud::new(frame, points).map_err(|e| CliError::io(path, e))
}

/// Writes a PLY file with double-precision `x y z` vertices.
pub fn write_ply(path: &Path, cloud: &PointCloud, encoding: Encoding) -> Result<()> {
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = encoding;
    let mut vertex = ElementDef::new("vertex".to_string());
    for name in ["x", "y", "z"] {
        vertex
            .properties
            .add(PropertyDef::new(name.to_string(), PropertyType::Scalar(ScalarType::Double)));
    }
    ply.header.elements.add(vertex);
    let payload = cloud
        .iter()
        .map(|p| {
            let mut e = DefaultElement::new();
            e.insert("x".to_string(), Property::Double(p.x));
            e.insert("y".to_string(), Property::Double(p.y));
            e.insert("z".to_string(), Property::Double(p.z));
            e
        })
        .collect();
    ply.payload.insert("vertex".to_string(), payload);
    let mut out = BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?);
    Writer::new()
        .write_ply(&mut out, &mut ply)
        .map_err(|e| CliError::io(path, e))?;
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn knot_row(frame: usize, curve: &ProfileCurve) -> String {
    let k = &curve.knots;
    format!("{frame},{},{},{},{},{},{}", k[0].x, k[0].y, k[1].x, k[1].y, k[2].x, k[2].y)
}

pub fn write_knots<'a>(path: &Path, rows: impl IntoIterator<Item = (usize, &'a ProfileCurve)>) -> Result<()> {
    let mut text = String::from(KNOT_HEADER);
    text.push('\n');
    for (frame, curve) in rows {
        text.push_str(&knot_row(frame, curve));
        text.push('\n');
    }
    write_text(path, &text)
}

/// Parses a knot CSV into a frame-indexed map.
pub fn read_knots(path: &Path) -> Result<BTreeMap<usize, ProfileCurve>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_knots(&text).map_err(|msg| CliError::io(path, msg))
}

pub fn parse_knots(text: &str) -> std::result::Result<BTreeMap<usize, ProfileCurve>, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == KNOT_HEADER => {}
        _ => return Err(format!("expected header `{KNOT_HEADER}`")),
    }
    let mut out = BTreeMap::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(format!("line {}: expected 7 fields", n + 1));
        }
        let frame: usize = fields[0].parse().map_err(|_| format!("line {}: bad frame index", n + 1))?;
        let mut v = [0.0; 6];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("line {}: bad number `{f}`", n + 1))?;
        }
        let curve = ProfileCurve::new(Point2::new(v[0], v[1]), Point2::new(v[2], v[3]), Point2::new(v[4], v[5]));
        if out.insert(frame, curve).is_some() {
            return Err(format!("line {}: duplicate frame {frame}", n + 1));
        }
    }
    Ok(out)
}

pub fn profile_csv(samples: &[Point2]) -> String {
    let mut text = String::from(PROFILE_HEADER);
    text.push('\n');
    for p in samples {
        text.push_str(&format!("{},{}\n", p.x, p.y));
    }
    text
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> PointCloud {
        PointCloud::new(
            FrameId::Sensor(0),
            vec![Point3::new(1.0, -2.5, 3.25), Point3::new(0.1, 1e-7, -400.0)],
        )
        .unwrap()
    }

    #[test]
    fn ply_round_trip_both_encodings() {
        let dir = tempfile::tempdir().unwrap();
        for (name, enc) in [("a.ply", Encoding::Ascii), ("b.ply", Encoding::BinaryLittleEndian)] {
            let path = dir.path().join(name);
            write_ply(&path, &cloud(), enc).unwrap();
            assert_eq!(read_ply(&path, FrameId::Sensor(0)).unwrap(), cloud());
        }
    }

    #[test]
    fn float_ply_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.ply");
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nend_header\n1 2 3 255\n4.5 5 6 0\n";
        fs::write(&path, text).unwrap();
        let c = read_ply(&path, FrameId::Sensor(1)).unwrap();
        assert_eq!(c.points()[1], Point3::new(4.5, 5.0, 6.0));
        fs::write(&path, "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n").unwrap();
        assert!(matches!(read_ply(&path, FrameId::Sensor(1)), Err(CliError::Io(_))));
        assert!(matches!(read_ply(&dir.path().join("missing.ply"), FrameId::Sensor(1)), Err(CliError::Io(_))));
    }

    #[test]
    fn frames_listed_lexicographically() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.ply", "a.ply", "c.txt", "a10.PLY"] {
            fs::write(dir.path().join(name), "").unwrap();
        }
        let names: Vec<_> = list_frames(dir.path())
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["a.ply", "a10.PLY", "b.ply"]);
    }

    #[test]
    fn knots_round_trip() {
        let a = ProfileCurve::from_coords([[0.0, 20.0], [60.5, 45.0], [100.0, 1.0 / 3.0]]);
        let b = ProfileCurve::from_coords([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        write_knots(&path, [(3, &a), (9, &b)]).unwrap();
        let back = read_knots(&path).unwrap();
        assert_eq!(back[&3], a);
        assert_eq!(back[&9], b);
        assert!(parse_knots("frame,x\n").is_err());
        assert!(parse_knots(&format!("{KNOT_HEADER}\n1,2,3\n")).is_err());
        assert!(parse_knots(&format!("{KNOT_HEADER}\n1,0,0,0,0,0,nan\n")).is_err());
        assert!(parse_knots(&format!("{KNOT_HEADER}\n1,0,0,0,0,0,0\n1,0,0,0,0,0,0\n")).is_err());
    }

    #[test]
    fn profile_columns() {
        let text = profile_csv(&[Point2::new(0.0, 1.5), Point2::new(2.25, 3.0)]);
        assert_eq!(text, "rho_mm,h_mm\n0,1.5\n2.25,3\n");
    }
}
