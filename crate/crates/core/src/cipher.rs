//! Hash-based stream cipher with an appended tag. A toy: no constant-time
//! comparison, no key separation beyond the nonce hash.

use thiserror::Error;

use crate::canonical::{sha256, sha256_concat};

pub const NONCE_LEN: usize = 16;
pub const TAG_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CipherError {
    #[error("sealed blob is {0} bytes, shorter than nonce and tag")]
    Truncated(usize),
    #[error("authentication tag mismatch")]
    TagMismatch,
}

/// XORs `data` with blocks `SHA-256(key || 0x00 || j)`, `j` as 8 big-endian
/// bytes.
pub fn keystream_xor(key: &[u8; 32], data: &[u8]) -> Vec<u8> {
    data.chunks(32)
        .enumerate()
        .flat_map(|(j, chunk)| {
            let block = sha256_concat(&[key, &[0x00], &(j as u64).to_be_bytes()]);
            chunk.iter().zip(block).map(|(d, k)| d ^ k).collect::<Vec<_>>()
        })
        .collect()
}

/// `SHA-256(key || 0x01 || ciphertext)`.
pub fn tag(key: &[u8; 32], ciphertext: &[u8]) -> [u8; 32] {
    sha256_concat(&[key, &[0x01], ciphertext])
}

fn subkey(key: &[u8; 32], nonce: &[u8; NONCE_LEN]) -> [u8; 32] {
    sha256_concat(&[key, nonce])
}

/// `nonce || ct || tag`, where the stream and tag run under
/// `SHA-256(key || nonce)`.
pub fn seal(key: &[u8; 32], nonce: &[u8; NONCE_LEN], plaintext: &[u8]) -> Vec<u8> {
    let k = subkey(key, nonce);
    let ct = keystream_xor(&k, plaintext);
    let t = tag(&k, &ct);
    let mut out = Vec::with_capacity(NONCE_LEN + ct.len() + TAG_LEN);
    out.extend_from_slice(nonce);
    out.extend_from_slice(&ct);
    out.extend_from_slice(&t);
    out
}

pub fn open(key: &[u8; 32], blob: &[u8]) -> Result<Vec<u8>, CipherError> {
    if blob.len() < NONCE_LEN + TAG_LEN {
        return Err(CipherError::Truncated(blob.len()));
    }
    let (nonce, rest) = blob.split_at(NONCE_LEN);
    let (ct, presented) = rest.split_at(rest.len() - TAG_LEN);
    let k = subkey(key, nonce.try_into().expect("split at nonce length"));
    if tag(&k, ct) != presented {
        return Err(CipherError::TagMismatch);
    }
    Ok(keystream_xor(&k, ct))
}

/// First 16 bytes of `SHA-256(parts...)`.
pub fn derive_nonce(parts: &[&[u8]]) -> [u8; NONCE_LEN] {
    let h = sha256_concat(parts);
    h[..NONCE_LEN].try_into().expect("digest longer than nonce")
}

/// 32-byte key from arbitrary material.
pub fn derive_key(material: &[u8]) -> [u8; 32] {
    sha256(material)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::{decode_hex, encode_hex};

    fn counting_key() -> [u8; 32] {
        std::array::from_fn(|i| i as u8)
    }

    // Reference values from an independent hashlib implementation.
    #[test]
    fn keystream_and_tag_reference() {
        let pt = b"toy stream cipher check: seventy-two bytes of data to span three blocks!!";
        let ct = keystream_xor(&counting_key(), pt);
        assert_eq!(
            encode_hex(&ct),
            "0x926e96a676a8bd80b14bcdc1fa04fe9f7b6eae26ec727c65e8bb9d3ddb9e0306a3909c03ee281a91a24993a5fb03ac8c71a5c594043ce7e6ced2f47781e0150a1b079d62b84387f52a"
        );
        assert_eq!(
            encode_hex(&tag(&counting_key(), &ct)),
            "0x02f196358025ca512dd08663aae4823736e30a535a3d109a309f91dcf5d988c9"
        );
        assert_eq!(keystream_xor(&counting_key(), &ct), pt.to_vec());
    }

    #[test]
    fn sealed_reference() {
        let blob = seal(&counting_key(), &[7u8; 16], b"Alice");
        let expected = decode_hex(
            "0x0707070707070707070707070707070785a280dbe3b0816b720f93853bcffdafa0c197e256c31fbad5f6fb2a6320608520b4a3ae8d",
        )
        .unwrap();
        assert_eq!(blob, expected);
        assert_eq!(open(&counting_key(), &blob).unwrap(), b"Alice");
    }

    #[test]
    fn tampering_detected() {
        let mut blob = seal(&counting_key(), &[1u8; 16], b"secret claim");
        for i in 0..blob.len() {
            blob[i] ^= 0x10;
            assert_eq!(open(&counting_key(), &blob), Err(CipherError::TagMismatch), "byte {i}");
            blob[i] ^= 0x10;
        }
        assert_eq!(open(&counting_key(), &blob[..40]), Err(CipherError::Truncated(40)));
        let mut other = counting_key();
        other[0] ^= 1;
        assert!(open(&other, &blob).is_err());
    }

    #[test]
    fn empty_plaintext() {
        let blob = seal(&counting_key(), &[0u8; 16], b"");
        assert_eq!(blob.len(), NONCE_LEN + TAG_LEN);
        assert_eq!(open(&counting_key(), &blob).unwrap(), Vec::<u8>::new());
    }
}
