//! JSON key files. Big integers are base-10 strings; the private file keeps
//! only the factors and everything else is recomputed on load.

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{prime, PaillierError, PrivateKey, PublicKey};

pub const KEY_FILE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublicKeyFile {
    pub version: u32,
    pub n: String,
    pub g: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivateKeyFile {
    pub version: u32,
    pub p: String,
    pub q: String,
}

fn parse_decimal(field: &str, s: &str) -> Result<BigUint, PaillierError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(PaillierError::InvalidKey(format!("{field} is not a decimal integer")));
    }
    BigUint::parse_bytes(s.as_bytes(), 10)
        .ok_or_else(|| PaillierError::InvalidKey(format!("{field} is not a decimal integer")))
}

fn check_version(version: u32) -> Result<(), PaillierError> {
    if version != KEY_FILE_VERSION {
        return Err(PaillierError::InvalidKey(format!(
            "unsupported key file version {version}"
        )));
    }
    Ok(())
}

impl From<&PublicKey> for PublicKeyFile {
    fn from(pk: &PublicKey) -> Self {
        PublicKeyFile {
            version: KEY_FILE_VERSION,
            n: pk.n().to_str_radix(10),
            g: pk.g().to_str_radix(10),
        }
    }
}

impl TryFrom<PublicKeyFile> for PublicKey {
    type Error = PaillierError;

    fn try_from(file: PublicKeyFile) -> Result<Self, Self::Error> {
        check_version(file.version)?;
        let pk = PublicKey::from_modulus(parse_decimal("n", &file.n)?)?;
        if parse_decimal("g", &file.g)? != *pk.g() {
            return Err(PaillierError::InvalidKey("g must equal n + 1".into()));
        }
        Ok(pk)
    }
}

impl From<&PrivateKey> for PrivateKeyFile {
    fn from(sk: &PrivateKey) -> Self {
        PrivateKeyFile {
            version: KEY_FILE_VERSION,
            p: sk.p().to_str_radix(10),
            q: sk.q().to_str_radix(10),
        }
    }
}

impl TryFrom<PrivateKeyFile> for PrivateKey {
    type Error = PaillierError;

    fn try_from(file: PrivateKeyFile) -> Result<Self, Self::Error> {
        check_version(file.version)?;
        let p = parse_decimal("p", &file.p)?;
        let q = parse_decimal("q", &file.q)?;
        // witnesses only need to be unpredictable to whoever forged the file
        let mut rng = ChaCha20Rng::from_entropy();
        for (name, f) in [("p", &p), ("q", &q)] {
            if !prime::is_probable_prime(f, prime::MILLER_RABIN_ROUNDS, &mut rng)? {
                return Err(PaillierError::InvalidKey(format!("{name} is not prime")));
            }
        }
        PrivateKey::from_primes(p, q)
    }
}

impl PublicKey {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PublicKeyFile::from(self)).expect("key file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PaillierError> {
        let file: PublicKeyFile = serde_json::from_str(text)
            .map_err(|e| PaillierError::InvalidKey(format!("public key file: {e}")))?;
        file.try_into()
    }
}

impl PrivateKey {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PrivateKeyFile::from(self)).expect("key file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PaillierError> {
        let file: PrivateKeyFile = serde_json::from_str(text)
            .map_err(|e| PaillierError::InvalidKey(format!("private key file: {e}")))?;
        file.try_into()
    }
}
