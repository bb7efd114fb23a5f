//! Field serialization: a two-column CSV (x, value) and a raw little-endian
//! f64 dump with a JSON sidecar recording {"L", "n"}.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid1D;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub fn field_to_csv(field: &Field) -> String {
    let mut out = String::with_capacity(field.grid().n() * 24);
    out.push_str("x,value\n");
    for (i, v) in field.values().iter().enumerate() {
        let _ = writeln!(out, "{},{}", field.grid().point(i), v);
    }
    out
}

pub fn write_csv(field: &Field, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, field_to_csv(field))?;
    Ok(())
}

/// Read a field from the two-column CSV format. The grid is inferred from the
/// row count and the spacing of the x column, which must be uniform from 0.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Field> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with('x')) {
            continue;
        }
        let mut cols = line.split(',');
        let (Some(xc), Some(vc)) = (cols.next(), cols.next()) else {
            return Err(Error::format(&name, format!("line {}: expected x,value", lineno + 1)));
        };
        let x: f64 = xc
            .trim()
            .parse()
            .map_err(|_| Error::format(&name, format!("line {}: bad x `{xc}`", lineno + 1)))?;
        let v: f64 = vc
            .trim()
            .parse()
            .map_err(|_| Error::format(&name, format!("line {}: bad value `{vc}`", lineno + 1)))?;
        xs.push(x);
        vs.push(v);
    }
    let n = vs.len();
    if n < 2 {
        return Err(Error::format(&name, "need at least two rows"));
    }
    let dx = xs[1] - xs[0];
    let grid = Grid1D::new(dx * n as f64, n)
        .map_err(|e| Error::format(&name, format!("grid inference failed: {e}")))?;
    for (i, &x) in xs.iter().enumerate() {
        if (x - grid.point(i)).abs() > 1e-9 * grid.length() {
            return Err(Error::format(
                &name,
                format!("row {i}: x = {x} is not on a uniform grid from 0"),
            ));
        }
    }
    Field::new(grid, vs)
}

/// Sidecar metadata for the raw format.
#[derive(serde::Serialize, serde::Deserialize)]
struct RawMeta {
    #[serde(rename = "L")]
    length: f64,
    n: usize,
}

/// Write `<path>` as raw little-endian f64 samples and `<path>.json` as the
/// grid sidecar.
pub fn write_raw(field: &Field, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(field.values().len() * 8);
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    let meta = RawMeta { length: field.grid().length(), n: field.grid().n() };
    let sidecar = path.with_extension(format!(
        "{}json",
        path.extension().map(|e| format!("{}.", e.to_string_lossy())).unwrap_or_default()
    ));
    fs::write(sidecar, serde_json::to_string_pretty(&meta).expect("sidecar serializes"))?;
    Ok(())
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<Field> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let sidecar = path.with_extension(format!(
        "{}json",
        path.extension().map(|e| format!("{}.", e.to_string_lossy())).unwrap_or_default()
    ));
    let meta: RawMeta = serde_json::from_str(&fs::read_to_string(&sidecar)?)
        .map_err(|e| Error::format(sidecar.display().to_string(), e.to_string()))?;
    let bytes = fs::read(path)?;
    if bytes.len() != meta.n * 8 {
        return Err(Error::format(
            &name,
            format!("expected {} bytes for n = {}, found {}", meta.n * 8, meta.n, bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let grid = Grid1D::new(meta.length, meta.n)
        .map_err(|e| Error::format(&name, format!("bad sidecar grid: {e}")))?;
    Field::new(grid, values)
}

/// Load a field from either supported format, by extension (.csv or raw).
pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_csv(path),
        _ => read_raw(path),
    }
}
