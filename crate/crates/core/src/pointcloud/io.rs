//! `.xyz` text and `FNSF` binary point/flow files.
//!
//! Binary layout (little-endian): `b"FNSF"`, `u32` version (1), `u64` record
//! count, then `count * 3` `f32` values with x, y, z interleaved.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{Real, Vec3};

use super::{FlowField, PointCloud};

pub const MAGIC: &[u8; 4] = b"FNSF";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    /// One `x y z` line per record.
    Text,
    /// `FNSF` v1 binary.
    Binary,
}

impl CloudFormat {
    /// `.xyz`/`.txt` map to text, everything else to binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("xyz") | Some("txt") => CloudFormat::Text,
            _ => CloudFormat::Binary,
        }
    }
}

pub fn write_cloud<T: Real, W: Write>(
    records: &[Vec3<T>],
    out: &mut W,
    format: CloudFormat,
) -> std::io::Result<()> {
    match format {
        CloudFormat::Text => {
            for r in records {
                writeln!(out, "{} {} {}", r[0], r[1], r[2])?;
            }
        }
        CloudFormat::Binary => {
            out.write_all(MAGIC)?;
            out.write_all(&VERSION.to_le_bytes())?;
            out.write_all(&(records.len() as u64).to_le_bytes())?;
            let mut buf = Vec::with_capacity(records.len() * 12);
            for r in records {
                for v in r {
                    let v = v.to_f32().expect("finite value fits f32");
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            out.write_all(&buf)?;
        }
    }
    Ok(())
}

/// Parses records from a reader; `path` is only used in error messages.
pub fn read_cloud<T: Real, R: Read>(
    input: R,
    format: CloudFormat,
    path: &Path,
) -> Result<Vec<Vec3<T>>> {
    match format {
        CloudFormat::Text => read_text(input, path),
        CloudFormat::Binary => read_binary(input, path),
    }
}

fn read_text<T: Real, R: Read>(input: R, path: &Path) -> Result<Vec<Vec3<T>>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let index = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let mut rec = [T::zero(); 3];
        let mut fields = line.split_ascii_whitespace();
        for (k, slot) in rec.iter_mut().enumerate() {
            let tok = fields.next().ok_or_else(|| Error::Parse {
                path: path.to_owned(),
                index,
                reason: format!("expected 3 values, found {k}"),
            })?;
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                path: path.to_owned(),
                index,
                reason: format!("not a number: {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
            *slot = T::of(v);
        }
        if fields.next().is_some() {
            return Err(Error::Parse {
                path: path.to_owned(),
                index,
                reason: "more than 3 values".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

fn read_binary<T: Real, R: Read>(mut input: R, path: &Path) -> Result<Vec<Vec3<T>>> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let bad = |index: usize, reason: String| Error::Parse {
        path: path.to_owned(),
        index,
        reason,
    };
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad(0, "missing FNSF header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(0, format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count.saturating_mul(12) {
        let whole = payload.len() / 12;
        return Err(bad(
            whole.min(count) + 1,
            format!("header declares {count} records, payload holds {} bytes", payload.len()),
        ));
    }
    let mut out = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(12).enumerate() {
        let mut rec = [T::zero(); 3];
        for (k, slot) in rec.iter_mut().enumerate() {
            let v = f32::from_le_bytes(chunk[k * 4..k * 4 + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i + 1 });
            }
            *slot = T::of(v as f64);
        }
        out.push(rec);
    }
    Ok(out)
}

fn save_records<T: Real>(records: &[Vec3<T>], path: &Path, format: CloudFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_cloud(records, &mut w, format).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn load_records<T: Real>(path: &Path, format: CloudFormat) -> Result<Vec<Vec3<T>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_cloud(file, format, path)
}

/// Loads a cloud, preserving point order.
pub fn load_cloud<T: Real>(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud<T>> {
    PointCloud::new(load_records(path.as_ref(), format)?)
}

pub fn save_cloud<T: Real>(
    cloud: &PointCloud<T>,
    path: impl AsRef<Path>,
    format: CloudFormat,
) -> Result<()> {
    save_records(cloud.points(), path.as_ref(), format)
}

pub fn load_flow<T: Real>(path: impl AsRef<Path>, format: CloudFormat) -> Result<FlowField<T>> {
    FlowField::new(load_records(path.as_ref(), format)?)
}

pub fn save_flow<T: Real>(
    flow: &FlowField<T>,
    path: impl AsRef<Path>,
    format: CloudFormat,
) -> Result<()> {
    save_records(flow.vectors(), path.as_ref(), format)
}
