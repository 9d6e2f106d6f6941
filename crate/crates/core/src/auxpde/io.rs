//! `ISOQF1` field files and their JSON sidecars.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AuxError, AuxProblem, Field2D, Grid2D, Result, SolveReport};

pub const MAGIC: &[u8; 6] = b"ISOQF1";
const HEADER_LEN: usize = 6 + 4 + 4 + 8 + 8 + 8 + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredField {
    pub field: Field2D,
    pub n: f64,
    pub p: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub schema_version: u32,
    pub problem: AuxProblem,
    pub grid: Grid2D,
    pub report: SolveReport,
}

pub fn encode(field: &Field2D, n: f64, p: u8) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.nr as u32).to_le_bytes());
    out.extend_from_slice(&(g.ns as u32).to_le_bytes());
    out.extend_from_slice(&g.rmax.to_le_bytes());
    out.extend_from_slice(&g.smax.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.push(p);
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<StoredField> {
    if bytes.len() < HEADER_LEN || &bytes[..6] != MAGIC {
        return Err(AuxError::Format("missing ISOQF1 header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let nr = u32_at(6) as usize;
    let ns = u32_at(10) as usize;
    let (rmax, smax, n) = (f64_at(14), f64_at(22), f64_at(30));
    let p = bytes[38];
    let expected = HEADER_LEN + 8 * nr * ns;
    if bytes.len() != expected {
        return Err(AuxError::Format(format!(
            "expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let grid = Grid2D::new(rmax, smax, nr, ns)?;
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(StoredField {
        field: Field2D::new(grid, values)?,
        n,
        p,
    })
}

pub fn write_field(path: &Path, field: &Field2D, problem: &AuxProblem) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode(field, f64::from(problem.n), problem.p as u8))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<StoredField> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// `dir/stem.ext` → `dir/stem.meta.json`.
pub fn meta_path(field_path: &Path) -> PathBuf {
    let stem = field_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    field_path.with_file_name(format!("{stem}.meta.json"))
}

pub fn write_meta(field_path: &Path, meta: &FieldMeta) -> Result<PathBuf> {
    let path = meta_path(field_path);
    let json = serde_json::to_string_pretty(meta).map_err(|e| AuxError::Format(e.to_string()))?;
    fs::write(&path, json + "\n")?;
    Ok(path)
}

pub fn read_meta(field_path: &Path) -> Result<FieldMeta> {
    let text = fs::read_to_string(meta_path(field_path))?;
    serde_json::from_str(&text).map_err(|e| AuxError::Format(e.to_string()))
}
