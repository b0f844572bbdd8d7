//! Parameter checkpoints. Layout, all little-endian:
//!
//! | bytes | content                         |
//! |-------|---------------------------------|
//! | 8     | magic `COSEGW01`                |
//! | 8     | spec fingerprint (u64)          |
//! | 8     | parameter count (u64)           |
//! | 8*n   | parameters as IEEE-754 f64      |

use std::fs;
use std::path::Path;

use super::params::ModelParams;
use super::spec::ModelSpec;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"COSEGW01";

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let mut buf = Vec::with_capacity(24 + 8 * params.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&params.spec().fingerprint().to_le_bytes());
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_checkpoint(bytes: &[u8], spec: &ModelSpec, path: &Path) -> Result<ModelParams> {
    let fail = |detail: String| Error::Checkpoint {
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() < 24 {
        return Err(fail(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(fail("bad magic".into()));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let fingerprint = word(8);
    if fingerprint != spec.fingerprint() {
        return Err(fail(format!(
            "spec fingerprint {fingerprint:#018x} does not match {:#018x}",
            spec.fingerprint()
        )));
    }
    let count = word(16) as usize;
    if count != spec.param_count() {
        return Err(fail(format!("holds {count} parameters, spec needs {}", spec.param_count())));
    }
    let payload = &bytes[24..];
    if payload.len() != 8 * count {
        return Err(fail(format!("payload is {} bytes, expected {}", payload.len(), 8 * count)));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ModelParams::from_values(spec.clone(), values)
}

pub fn write_checkpoint(path: impl AsRef<Path>, params: &ModelParams) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>, spec: &ModelSpec) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, spec, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::init_model;

    #[test]
    fn round_trip_and_header() {
        let spec = ModelSpec::tiny(16, 16, 2);
        let params = init_model(&spec, 11).unwrap();
        let bytes = encode_checkpoint(&params);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 4762);
        assert_eq!(bytes.len(), 24 + 8 * 4762);
        let back = decode_checkpoint(&bytes, &spec, Path::new("mem")).unwrap();
        assert_eq!(back, params);
    }

    #[test]
    fn rejects_other_spec_and_truncation() {
        let spec = ModelSpec::tiny(16, 16, 2);
        let bytes = encode_checkpoint(&init_model(&spec, 1).unwrap());
        assert!(decode_checkpoint(&bytes, &ModelSpec::tiny(32, 32, 2), Path::new("m")).is_err());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1], &spec, Path::new("m")).is_err());
    }
}
