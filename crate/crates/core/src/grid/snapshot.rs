//! Binary field snapshots.
//!
//! Layout: one UTF-8 JSON header line such as `{"dim":2,"N":64}` followed by
//! `Nⁿ` little-endian `f64` values in row-major order. Optional header keys
//! (`kind`, `L`, `quad`, `center`) are written only when they carry
//! non-default information.

use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GridError, PeriodicGrid, ScalarField};

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed snapshot header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("invalid grid in snapshot: {0}")]
    Grid(#[from] GridError),
    #[error("snapshot payload has {got} bytes, expected {expected}")]
    Payload { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub dim: usize,
    #[serde(rename = "N")]
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

impl SnapshotHeader {
    pub fn for_grid(grid: &PeriodicGrid) -> Self {
        Self {
            dim: grid.dim(),
            points: grid.points_per_axis(),
            kind: None,
            half_width: (grid.half_width() != 1.0).then_some(grid.half_width()),
            quad: None,
            center: None,
        }
    }

    pub fn with_kind(mut self, kind: &str) -> Self {
        self.kind = Some(kind.to_string());
        self
    }

    pub fn grid(&self) -> Result<PeriodicGrid, GridError> {
        PeriodicGrid::with_half_width(self.dim, self.points, self.half_width.unwrap_or(1.0))
    }
}

pub fn write_snapshot<W: Write>(mut out: W, header: &SnapshotHeader, field: &ScalarField) -> Result<(), SnapshotError> {
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(8 * field.values().len());
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(input: R) -> Result<(SnapshotHeader, ScalarField), SnapshotError> {
    let mut reader = io::BufReader::new(input);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    let header: SnapshotHeader = serde_json::from_slice(&line)?;
    let grid = header.grid()?;
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let expected = 8 * grid.len();
    if payload.len() != expected {
        return Err(SnapshotError::Payload { expected, got: payload.len() });
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    let field = ScalarField::from_values(grid, values)?;
    Ok((header, field))
}
