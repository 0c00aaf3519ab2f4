//! File plumbing shared by artifacts, matrices and reports: base64 float
//! payloads, SHA-256 digests and atomic writes.

use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Little-endian IEEE-754 doubles, base64 encoded.
pub fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::CorruptArtifact(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::CorruptArtifact(format!(
            "payload of {} bytes is not a whole number of f64 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest over the little-endian bytes of a sequence of float slices.
pub fn checksum_f64s<'a>(slices: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut h = Sha256::new();
    for s in slices {
        for v in s {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn f64_payload_round_trips(values in proptest::collection::vec(any::<f64>(), 0..64)) {
            let back = decode_f64s(&encode_f64s(&values)).unwrap();
            prop_assert_eq!(back.len(), values.len());
            for (a, b) in back.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn ragged_payload_is_corrupt() {
        let text = STANDARD.encode([1u8, 2, 3]);
        assert!(matches!(decode_f64s(&text), Err(Error::CorruptArtifact(_))));
        assert!(matches!(decode_f64s("%%%"), Err(Error::CorruptArtifact(_))));
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
