//! Canonical JSON encoding used wherever bytes are hashed, signed or sent.
//!
//! Rules: UTF-8 JSON, object keys sorted byte-wise, no insignificant
//! whitespace, lists keep their order. Integers whose magnitude is at least
//! 2^53 and all byte strings are written as lowercase hex strings with a
//! `0x` prefix (negative big integers as `-0x...`).

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{Signed, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Largest magnitude still written as a plain JSON number is `2^53 - 1`.
pub const MAX_SAFE_INTEGER: u64 = (1 << 53) - 1;

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("non-canonical hex: {0}")]
    Hex(String),
}

/// Serializes any value into canonical JSON bytes.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let value = serde_json::to_value(value).expect("canonical types always serialize");
    let mut out = Vec::with_capacity(128);
    write_value(&value, &mut out);
    out
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    String::from_utf8(to_canonical_bytes(value)).expect("json is utf-8")
}

pub fn from_canonical_slice<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CanonicalError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// SHA-256 over the canonical encoding of `value`.
pub fn digest<T: Serialize + ?Sized>(value: &T) -> [u8; 32] {
    sha256(&to_canonical_bytes(value))
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// SHA-256 over the concatenation of `parts`.
pub fn sha256_concat(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

fn write_value(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(b) => out.extend_from_slice(if *b { b"true" } else { b"false" }),
        Value::Number(n) => out.extend_from_slice(n.to_string().as_bytes()),
        Value::String(s) => {
            out.extend_from_slice(serde_json::to_string(s).expect("string").as_bytes())
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                out.extend_from_slice(serde_json::to_string(k).expect("key").as_bytes());
                out.push(b':');
                write_value(v, out);
            }
            out.push(b'}');
        }
    }
}

/// Canonical encoding of a non-negative integer as it appears inside JSON.
pub fn encode_uint(value: &BigUint) -> String {
    to_canonical_string(&UintRef(value))
}

/// Canonical encoding of a signed integer as it appears inside JSON.
pub fn encode_int(value: &BigInt) -> String {
    to_canonical_string(&IntRef(value))
}

struct UintRef<'a>(&'a BigUint);
impl Serialize for UintRef<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        biguint::serialize(self.0, s)
    }
}
struct IntRef<'a>(&'a BigInt);
impl Serialize for IntRef<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        bigint::serialize(self.0, s)
    }
}

/// True when `needle` occurs in `haystack` as a complete JSON token, i.e.
/// bounded on both sides by structural characters (or the ends).
pub fn contains_json_token(haystack: &[u8], needle: &[u8]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    let is_boundary = |b: u8| matches!(b, b'[' | b']' | b'{' | b'}' | b',' | b':');
    haystack.windows(needle.len()).enumerate().any(|(i, w)| {
        w == needle
            && (i == 0 || is_boundary(haystack[i - 1]))
            && (i + needle.len() == haystack.len() || is_boundary(haystack[i + needle.len()]))
    })
}

pub fn encode_hex(bytes: &[u8]) -> String {
    format!("0x{}", hex::encode(bytes))
}

/// Decodes `0x`-prefixed lowercase hex; uppercase digits are rejected.
pub fn decode_hex(s: &str) -> Result<Vec<u8>, CanonicalError> {
    let digits = s
        .strip_prefix("0x")
        .ok_or_else(|| CanonicalError::Hex(s.to_string()))?;
    if !digits.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return Err(CanonicalError::Hex(s.to_string()));
    }
    hex::decode(digits).map_err(|_| CanonicalError::Hex(s.to_string()))
}

fn decode_big_hex(s: &str) -> Result<BigUint, String> {
    let digits = s.strip_prefix("0x").ok_or_else(|| format!("bad integer {s:?}"))?;
    if digits.is_empty()
        || digits.starts_with('0')
        || !digits.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    {
        return Err(format!("non-canonical hex integer {s:?}"));
    }
    let v = BigUint::parse_bytes(digits.as_bytes(), 16).ok_or_else(|| format!("bad hex {s:?}"))?;
    if v <= BigUint::from(MAX_SAFE_INTEGER) {
        return Err(format!("small integer {s:?} must be a plain number"));
    }
    Ok(v)
}

/// Serde helpers for [`BigUint`] fields.
pub mod biguint {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        match v.to_u64() {
            Some(x) if x <= MAX_SAFE_INTEGER => s.serialize_u64(x),
            _ => s.serialize_str(&format!("0x{}", v.to_str_radix(16))),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        match Value::deserialize(d)? {
            Value::Number(n) => match n.as_u64() {
                Some(x) if x <= MAX_SAFE_INTEGER => Ok(BigUint::from(x)),
                _ => Err(serde::de::Error::custom(format!("integer {n} out of range"))),
            },
            Value::String(s) => decode_big_hex(&s).map_err(serde::de::Error::custom),
            other => Err(serde::de::Error::custom(format!("expected integer, got {other}"))),
        }
    }
}

/// Serde helpers for [`BigInt`] fields.
pub mod bigint {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigInt, s: S) -> Result<S::Ok, S::Error> {
        match v.to_i64() {
            Some(x) if x.unsigned_abs() <= MAX_SAFE_INTEGER => s.serialize_i64(x),
            _ => {
                let sign = if v.is_negative() { "-" } else { "" };
                s.serialize_str(&format!("{sign}0x{}", v.magnitude().to_str_radix(16)))
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigInt, D::Error> {
        match Value::deserialize(d)? {
            Value::Number(n) => match n.as_i64() {
                Some(x) if x.unsigned_abs() <= MAX_SAFE_INTEGER => Ok(BigInt::from(x)),
                _ => Err(serde::de::Error::custom(format!("integer {n} out of range"))),
            },
            Value::String(s) => {
                let (sign, body) = match s.strip_prefix('-') {
                    Some(rest) => (Sign::Minus, rest),
                    None => (Sign::Plus, s.as_str()),
                };
                let mag = decode_big_hex(body).map_err(serde::de::Error::custom)?;
                Ok(BigInt::from_biguint(sign, mag))
            }
            other => Err(serde::de::Error::custom(format!("expected integer, got {other}"))),
        }
    }
}

/// Serde helpers for `Vec<BigUint>` fields.
pub mod biguint_vec {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Item(#[serde(with = "super::biguint")] BigUint);

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&UintRef(x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        let items: Vec<Item> = Vec::deserialize(d)?;
        Ok(items.into_iter().map(|i| i.0).collect())
    }
}

/// Serde helpers for byte strings.
pub mod bytes {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode_hex(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        decode_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde helpers for 32-byte arrays.
pub mod bytes32 {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode_hex(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let v = decode_hex(&s).map_err(serde::de::Error::custom)?;
        v.try_into()
            .map_err(|_| serde::de::Error::custom("expected 32 bytes"))
    }
}
