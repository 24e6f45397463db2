//! Content hashes used to link artifacts to the data they were derived from.

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

#[derive(Default)]
pub struct Fingerprinter {
    hasher: Sha256,
}

impl Fingerprinter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn str(mut self, s: &str) -> Self {
        self.hasher.update((s.len() as u64).to_le_bytes());
        self.hasher.update(s.as_bytes());
        self
    }

    pub fn f64(mut self, v: f64) -> Self {
        self.hasher.update(v.to_le_bytes());
        self
    }

    pub fn matrix(mut self, m: &DMatrix<f64>) -> Self {
        self.hasher.update((m.nrows() as u64).to_le_bytes());
        self.hasher.update((m.ncols() as u64).to_le_bytes());
        for v in m.iter() {
            self.hasher.update(v.to_le_bytes());
        }
        self
    }

    pub fn slice(mut self, xs: &[f64]) -> Self {
        self.hasher.update((xs.len() as u64).to_le_bytes());
        for v in xs {
            self.hasher.update(v.to_le_bytes());
        }
        self
    }

    pub fn finish(self) -> String {
        hex(&self.hasher.finalize())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn matrix_shape_matters() {
        let a = DMatrix::from_element(2, 3, 1.0);
        let b = DMatrix::from_element(3, 2, 1.0);
        assert_ne!(
            Fingerprinter::new().matrix(&a).finish(),
            Fingerprinter::new().matrix(&b).finish()
        );
    }
}
