//! ASCII PLY point sets and CSV tables.
//!
//! Floats are written with 17 significant digits so that a write/read
//! cycle reproduces every `f64` bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes vertices as an ASCII PLY document.
pub fn ply_to_string(points: &[Vector3<f64>]) -> String {
    let mut s = String::with_capacity(64 + points.len() * 72);
    s.push_str("ply\nformat ascii 1.0\n");
    s.push_str(&format!("element vertex {}\n", points.len()));
    s.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in points {
        s.push_str(&format!("{} {} {}\n", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2])));
    }
    s
}

pub fn write_ply(path: &Path, points: &[Vector3<f64>]) -> Result<()> {
    fs::write(path, ply_to_string(points))?;
    Ok(())
}

/// Parses the vertex element of an ASCII PLY document. Extra vertex
/// properties and any elements after the vertices are ignored.
pub fn parse_ply(text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Ply("missing 'ply' magic".into()));
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut vertex_first = true;
    let mut seen_element = false;
    loop {
        let line = lines.next().ok_or_else(|| Error::Ply("missing end_header".into()))?.trim();
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(Error::Ply(format!("unsupported format '{other}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex_first = !seen_element;
                    count = Some(n.parse::<usize>().map_err(|e| Error::Ply(format!("vertex count: {e}")))?);
                }
                seen_element = true;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::Ply("list properties on vertices are not supported".into()))
            }
            ["property", "list", ..] => {}
            ["property", _, name] => {
                if in_vertex {
                    props.push((*name).to_string());
                }
            }
            _ => return Err(Error::Ply(format!("unexpected header line '{line}'"))),
        }
    }
    let count = count.ok_or_else(|| Error::Ply("no vertex element".into()))?;
    if !vertex_first {
        return Err(Error::Ply("vertex element must come first".into()));
    }
    let col = |axis: &str| {
        props
            .iter()
            .position(|p| p == axis)
            .ok_or_else(|| Error::Ply(format!("missing vertex property '{axis}'")))
    };
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let line = lines.next().ok_or_else(|| Error::Ply(format!("expected {count} vertices, got {k}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|w| w.parse::<f64>().map_err(|e| Error::Ply(format!("vertex {k}: {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() < props.len() {
            return Err(Error::Ply(format!("vertex {k}: expected {} values", props.len())));
        }
        out.push(Vector3::new(vals[ix], vals[iy], vals[iz]));
    }
    Ok(out)
}

pub fn read_ply(path: &Path) -> Result<Vec<Vector3<f64>>> {
    parse_ply(&fs::read_to_string(path)?)
}

/// Writes a header and rows of preformatted cells as CSV.
pub fn write_csv<W: Write>(out: W, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
