//! Content digests used to fingerprint datasets, configs and stage outputs.

use sha2::{Digest, Sha256};

/// Incremental SHA-256 over length-prefixed parts, so that `["ab", "c"]`
/// and `["a", "bc"]` produce different digests.
#[derive(Default, Clone)]
pub struct Fingerprint {
    hasher: Sha256,
}

impl Fingerprint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn part(&mut self, bytes: impl AsRef<[u8]>) -> &mut Self {
        let bytes = bytes.as_ref();
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
        self
    }

    pub fn hex(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn parts_are_length_prefixed() {
        let a = Fingerprint::new().part("ab").part("c").hex();
        let b = Fingerprint::new().part("a").part("bc").hex();
        assert_ne!(a, b);
    }
}
