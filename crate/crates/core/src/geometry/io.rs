//! `.f64grid` snapshots: one JSON header line, then little-endian `f64` values
//! in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Grid, ScalarField, SetMask};
use crate::error::{FlowError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub dims: Vec<usize>,
    pub spacing: f64,
    pub origin: Vec<f64>,
    pub time: f64,
    pub quantity: String,
}

pub fn write_field(path: &Path, field: &ScalarField, time: f64, quantity: &str) -> Result<()> {
    let header = Header {
        dims: field.grid.dims().to_vec(),
        spacing: field.grid.spacing(),
        origin: field.grid.origin().to_vec(),
        time,
        quantity: quantity.to_string(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for v in &field.values {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_mask(path: &Path, mask: &SetMask, time: f64) -> Result<()> {
    write_field(path, &mask.to_field(), time, "mask")
}

pub fn read_field(path: &Path) -> Result<(ScalarField, Header)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())?;
    let grid = Grid::new(header.dims.clone(), header.spacing, header.origin.clone())?;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * grid.len() {
        return Err(FlowError::input(format!(
            "payload holds {} bytes, expected {}",
            bytes.len(),
            8 * grid.len()
        )));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((ScalarField::new(grid, values)?, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::cube(2, 8, 1.0).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0] * 3.0 - x[1]);
        let p = dir.path().join("f.f64grid");
        write_field(&p, &f, 0.25, "levelset").unwrap();
        let (back, h) = read_field(&p).unwrap();
        assert_eq!(back, f);
        assert_eq!(h.time, 0.25);
        assert_eq!(h.quantity, "levelset");
        let raw = std::fs::read(&p).unwrap();
        let nl = raw.iter().position(|b| *b == b'\n').unwrap();
        assert_eq!(raw.len() - nl - 1, 8 * 64);
    }
}
