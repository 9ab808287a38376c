use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::numerics::DenseMatrix;

const MAGIC: &str = "UNLREC1";

/// Writes to a sibling temp file, then renames over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// `UNLREC1 <rows> <cols>\n` followed by row-major little-endian f64.
pub fn encode_matrix(m: &DenseMatrix) -> Vec<u8> {
    let mut out = format!("{MAGIC} {} {}\n", m.rows(), m.cols()).into_bytes();
    out.extend(m.to_le_bytes());
    out
}

pub fn decode_matrix(path: &Path, bytes: &[u8]) -> Result<DenseMatrix> {
    let bad = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8".into()))?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 3 || parts[0] != MAGIC {
        return Err(bad(format!("unexpected header `{header}`")));
    }
    let rows: usize = parts[1].parse().map_err(|_| bad("bad row count".into()))?;
    let cols: usize = parts[2].parse().map_err(|_| bad("bad column count".into()))?;
    let body = &bytes[nl + 1..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| bad("shape overflows".into()))?;
    if body.len() != expected {
        return Err(bad(format!("{} payload bytes for a {rows}x{cols} matrix", body.len())));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    DenseMatrix::from_vec(rows, cols, values)
}

pub fn save_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    atomic_write(path, &encode_matrix(m))
}

pub fn load_matrix(path: &Path) -> Result<DenseMatrix> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(path, &bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of a canonical `user\titem\n` rendering of sorted edges.
pub fn hash_edges(edges: &[Edge]) -> String {
    let mut sorted = edges.to_vec();
    sorted.sort_unstable();
    let mut h = Sha256::new();
    for e in sorted {
        h.update(format!("{}\t{}\n", e.user, e.item).as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
