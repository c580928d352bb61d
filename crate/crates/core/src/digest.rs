use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a value's canonical JSON form (object keys sorted).
pub fn digest_of<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable");
    sha256_hex(serde_json::to_string(&v).expect("json").as_bytes())
}
