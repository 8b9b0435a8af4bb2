//! Checkpoints: a text manifest (name, dtype, shape, byte offset) next to
//! one raw little-endian blob of all parameter values.
//!
//! The default dtype is `f64`, which round-trips bit-exactly; `f32` halves
//! the blob for archival at the cost of exactness.

use crate::optim::ParamStore;
use crate::tensor::Tensor;
use crate::F;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const BLOB_FILE: &str = "params.bin";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed manifest line {0}")]
    MalformedManifest(usize),
    #[error("unknown dtype `{0}`")]
    UnknownDtype(String),
    #[error("blob length {got} does not match manifest total {expected}")]
    BlobMismatch { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
    fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

/// Write all parameter values of a store into `dir`.
pub fn save(store: &ParamStore<F>, dir: &Path, dtype: Dtype) -> Result<(), CheckpointError> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = std::io::BufWriter::new(std::fs::File::create(dir.join(MANIFEST_FILE))?);
    let mut blob = std::io::BufWriter::new(std::fs::File::create(dir.join(BLOB_FILE))?);
    writeln!(manifest, "name,dtype,rows,cols,offset")?;
    let mut offset = 0usize;
    for (name, value) in store.snapshot_values() {
        let (r, c) = value.shape();
        writeln!(manifest, "{name},{},{r},{c},{offset}", dtype.name())?;
        match dtype {
            Dtype::F64 => {
                for &x in value.data() {
                    blob.write_all(&x.to_le_bytes())?;
                }
            }
            Dtype::F32 => {
                for &x in value.data() {
                    blob.write_all(&(x as f32).to_le_bytes())?;
                }
            }
        }
        offset += value.len() * dtype.width();
    }
    Ok(())
}

/// Load parameter values back; entries come out in manifest order.
pub fn load(dir: &Path) -> Result<Vec<(String, Tensor<F>)>, CheckpointError> {
    let manifest = std::fs::File::open(dir.join(MANIFEST_FILE))?;
    let mut blob = Vec::new();
    std::fs::File::open(dir.join(BLOB_FILE))?.read_to_end(&mut blob)?;

    let mut out = Vec::new();
    let mut expected_len = 0usize;
    for (i, line) in BufReader::new(manifest).lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 5 {
            return Err(CheckpointError::MalformedManifest(i + 1));
        }
        let bad = || CheckpointError::MalformedManifest(i + 1);
        let dtype = match f[1] {
            "f32" => Dtype::F32,
            "f64" => Dtype::F64,
            other => return Err(CheckpointError::UnknownDtype(other.to_string())),
        };
        let rows: usize = f[2].parse().map_err(|_| bad())?;
        let cols: usize = f[3].parse().map_err(|_| bad())?;
        let offset: usize = f[4].parse().map_err(|_| bad())?;
        let n = rows * cols;
        let bytes = n * dtype.width();
        expected_len = expected_len.max(offset + bytes);
        if offset + bytes > blob.len() {
            return Err(CheckpointError::BlobMismatch {
                expected: offset + bytes,
                got: blob.len(),
            });
        }
        let mut data = Vec::with_capacity(n);
        match dtype {
            Dtype::F64 => {
                for chunk in blob[offset..offset + bytes].chunks_exact(8) {
                    data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
                }
            }
            Dtype::F32 => {
                for chunk in blob[offset..offset + bytes].chunks_exact(4) {
                    data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
                }
            }
        }
        out.push((f[0].to_string(), Tensor::from_vec(rows, cols, data)));
    }
    if expected_len != blob.len() {
        return Err(CheckpointError::BlobMismatch {
            expected: expected_len,
            got: blob.len(),
        });
    }
    Ok(out)
}

/// Load checkpoint values into an existing store (shapes must match).
pub fn restore_into(store: &mut ParamStore<F>, dir: &Path) -> Result<(), CheckpointError> {
    for (name, value) in load(dir)? {
        store
            .set_value(&name, value)
            .expect("checkpoint matches the model layout");
    }
    Ok(())
}
