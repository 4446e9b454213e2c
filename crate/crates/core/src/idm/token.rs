use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::abe::UserId;
use crate::canonical::{self, biguint, bytes32};
use crate::dkg::RsaPublicKey;

/// The signed part of a token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TokenBody {
    pub subject: String,
    pub audiences: Vec<String>,
    pub issued_epoch: u64,
    pub expiry_epoch: u64,
    #[serde(with = "bytes32")]
    pub nonce: [u8; 32],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SsoToken {
    pub subject: String,
    pub audiences: Vec<String>,
    pub issued_epoch: u64,
    pub expiry_epoch: u64,
    #[serde(with = "bytes32")]
    pub nonce: [u8; 32],
    #[serde(with = "biguint")]
    pub signature: BigUint,
}

impl SsoToken {
    pub fn new(body: TokenBody, signature: BigUint) -> Self {
        Self {
            subject: body.subject,
            audiences: body.audiences,
            issued_epoch: body.issued_epoch,
            expiry_epoch: body.expiry_epoch,
            nonce: body.nonce,
            signature,
        }
    }

    pub fn body(&self) -> TokenBody {
        TokenBody {
            subject: self.subject.clone(),
            audiences: self.audiences.clone(),
            issued_epoch: self.issued_epoch,
            expiry_epoch: self.expiry_epoch,
            nonce: self.nonce,
        }
    }
}

/// `SHA-256(canon(body))` read big-endian, mapped to `[2, N)` by
/// `mod (N - 2) + 2`.
pub fn token_digest_residue(body: &TokenBody, n: &BigUint) -> BigUint {
    let h = BigUint::from_bytes_be(&canonical::digest(body));
    h % (n - 2u32) + 2u32
}

/// Hex of `SHA-256(canon(user) || nonce)`.
pub fn pseudonym(user: &UserId, nonce: &[u8; 32]) -> String {
    hex::encode(canonical::sha256_concat(&[&canonical::to_canonical_bytes(user), nonce]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenVerdict {
    Accept,
    BadSignature,
    WrongAudience,
    Expired,
}

impl TokenVerdict {
    pub fn accepted(self) -> bool {
        self == TokenVerdict::Accept
    }
}

pub fn verify_sso_token(token: &SsoToken, public: &RsaPublicKey, audience: &str, now_epoch: u64) -> TokenVerdict {
    let body = token.body();
    if body.issued_epoch >= body.expiry_epoch
        || !public.verify(&token_digest_residue(&body, &public.modulus), &token.signature)
    {
        return TokenVerdict::BadSignature;
    }
    if !token.audiences.iter().any(|a| a == audience) {
        return TokenVerdict::WrongAudience;
    }
    if now_epoch > token.expiry_epoch {
        return TokenVerdict::Expired;
    }
    TokenVerdict::Accept
}
