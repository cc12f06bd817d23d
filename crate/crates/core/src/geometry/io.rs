//! Field dump format: little-endian 64-bit floats, row-major over the grid,
//! with a JSON sidecar describing the payload.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HermitianField, ScalarField, TorusGrid};
use crate::Real;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldMeta {
    pub n: usize,
    #[serde(rename = "N")]
    pub points: usize,
    #[serde(rename = "L")]
    pub period: f64,
    pub kind: String,
    pub component_layout: String,
}

fn write_f64s(path: &Path, values: impl Iterator<Item = f64>) -> io::Result<()> {
    let mut w = io::BufWriter::new(fs::File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

fn read_f64s(path: &Path) -> io::Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "payload length not a multiple of 8",
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Write `<dir>/<name>.f64` and `<dir>/<name>.meta.json` for a scalar field.
pub fn write_scalar_field<T: Real>(
    field: &ScalarField<T>,
    dir: &Path,
    name: &str,
) -> io::Result<()> {
    let grid = field.grid();
    write_f64s(
        &dir.join(format!("{name}.f64")),
        field.values().iter().map(|v| v.to_f64().unwrap()),
    )?;
    let meta = FieldMeta {
        n: grid.dim(),
        points: grid.points_per_axis(),
        period: grid.period().to_f64().unwrap(),
        kind: "scalar".to_string(),
        component_layout: "value".to_string(),
    };
    fs::write(
        dir.join(format!("{name}.meta.json")),
        serde_json::to_string_pretty(&meta)?,
    )
}

pub fn read_scalar_field<T: Real>(dir: &Path, name: &str) -> io::Result<ScalarField<T>> {
    let meta: FieldMeta =
        serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.meta.json")))?)?;
    let grid = TorusGrid::new(meta.n, meta.points, T::from_f64(meta.period).unwrap())
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    let raw = read_f64s(&dir.join(format!("{name}.f64")))?;
    let values: Vec<T> = raw.into_iter().map(|v| T::from_f64(v).unwrap()).collect();
    ScalarField::from_values(&grid, values)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}

/// Write a Hermitian field: per site the n x n entries row-major, each as
/// interleaved (re, im).
pub fn write_hermitian_field<T: Real>(
    field: &HermitianField<T>,
    dir: &Path,
    name: &str,
) -> io::Result<()> {
    let grid = field.grid();
    write_f64s(
        &dir.join(format!("{name}.f64")),
        field
            .data()
            .iter()
            .flat_map(|c| [c.re.to_f64().unwrap(), c.im.to_f64().unwrap()]),
    )?;
    let meta = FieldMeta {
        n: grid.dim(),
        points: grid.points_per_axis(),
        period: grid.period().to_f64().unwrap(),
        kind: "hermitian".to_string(),
        component_layout: "entries row-major over (i,j); each entry interleaved re,im"
            .to_string(),
    };
    fs::write(
        dir.join(format!("{name}.meta.json")),
        serde_json::to_string_pretty(&meta)?,
    )
}
