//! Paillier cryptosystem over signed plaintexts.
//!
//! The generator is fixed to `g = n + 1`, so `g^m mod n^2 = 1 + m*n` and
//! encryption costs a single exponentiation of the nonce. Plaintexts are
//! signed integers in the symmetric range `[-(n-1)/2, (n-1)/2]`, mapped onto
//! `Z_n` by [`PublicKey::encode_signed`]. Every ciphertext carries the
//! fingerprint of the key that produced it so that mixing keys fails loudly
//! instead of decrypting to garbage.

mod keyfile;
pub mod prime;

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::par::Exec;

pub use keyfile::{PrivateKeyFile, PublicKeyFile, KEY_FILE_VERSION};

/// Smallest modulus size accepted by [`keygen`].
pub const MIN_KEY_BITS: u64 = 256;
/// Modulus size used when nothing else is requested.
pub const DEFAULT_KEY_BITS: u64 = 2048;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PaillierError {
    #[error("key size {0} bits is below the minimum of {MIN_KEY_BITS}")]
    KeyTooSmall(u64),
    #[error("entropy source failed: {0}")]
    Entropy(String),
    #[error("no {bits}-bit prime found within the search cap")]
    PrimeSearchExhausted { bits: u64 },
    #[error("plaintext magnitude exceeds (n-1)/2")]
    PlaintextOverflow,
    #[error("ciphertext was produced under key {found}, expected {expected}")]
    KeyMismatch { expected: KeyId, found: KeyId },
    #[error("malformed ciphertext residue")]
    MalformedCiphertext,
    #[error("invalid key material: {0}")]
    InvalidKey(String),
}

/// First eight bytes of SHA-256 over the big-endian modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyId(pub u64);

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl KeyId {
    fn of_modulus(n: &BigUint) -> Self {
        let digest = Sha256::digest(n.to_bytes_be());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        KeyId(u64::from_be_bytes(head))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
    g: BigUint,
    half: BigUint,
    bit_length: u64,
    key_id: KeyId,
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    public: PublicKey,
    p: BigUint,
    q: BigUint,
    lambda: BigUint,
    mu: BigUint,
    crt: CrtParams,
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivateKey")
            .field("key_id", &self.public.key_id)
            .finish_non_exhaustive()
    }
}

/// Precomputed values for CRT decryption and key-holder encryption.
#[derive(Clone, PartialEq, Eq)]
struct CrtParams {
    p_squared: BigUint,
    q_squared: BigUint,
    p_minus_one: BigUint,
    q_minus_one: BigUint,
    h_p: BigUint,
    h_q: BigUint,
    q_inv_p: BigUint,
    // n reduced modulo phi(p^2) and phi(q^2)
    n_mod_phi_p2: BigUint,
    n_mod_phi_q2: BigUint,
    p2_inv_q2: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    value: BigUint,
    key_id: KeyId,
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }
}

/// Generate a keypair whose modulus has exactly `bit_length` bits.
pub fn keygen<R: RngCore + CryptoRng>(
    bit_length: u64,
    rng: &mut R,
) -> Result<(PublicKey, PrivateKey), PaillierError> {
    if bit_length < MIN_KEY_BITS {
        return Err(PaillierError::KeyTooSmall(bit_length));
    }
    let p_bits = bit_length.div_ceil(2);
    let q_bits = bit_length / 2;
    loop {
        let p = prime::random_prime(p_bits, rng)?;
        let q = prime::random_prime(q_bits, rng)?;
        if p == q {
            continue;
        }
        // gcd(pq, (p-1)(q-1)) = 1 holds for balanced primes but is cheap to confirm
        let phi = (&p - 1u32) * (&q - 1u32);
        if !(&p * &q).gcd(&phi).is_one() {
            continue;
        }
        let sk = PrivateKey::from_primes(p, q)?;
        return Ok((sk.public_key().clone(), sk));
    }
}

/// Uniform integer in `[0, 2^bits)`.
pub fn random_bits<R: RngCore + ?Sized>(rng: &mut R, bits: u64) -> Result<BigUint, PaillierError> {
    if bits == 0 {
        return Ok(BigUint::zero());
    }
    let byte_len = bits.div_ceil(8) as usize;
    let mut bytes = vec![0u8; byte_len];
    rng.try_fill_bytes(&mut bytes)
        .map_err(|e| PaillierError::Entropy(e.to_string()))?;
    let excess = byte_len as u64 * 8 - bits;
    bytes[0] &= 0xffu8 >> excess;
    Ok(BigUint::from_bytes_be(&bytes))
}

/// Uniform integer in `[0, bound)` by rejection sampling.
pub fn random_below<R: RngCore + ?Sized>(
    rng: &mut R,
    bound: &BigUint,
) -> Result<BigUint, PaillierError> {
    assert!(!bound.is_zero(), "empty sampling range");
    let bits = bound.bits();
    loop {
        let candidate = random_bits(rng, bits)?;
        if &candidate < bound {
            return Ok(candidate);
        }
    }
}

impl PublicKey {
    /// Build a public key from an odd modulus. Size policy is enforced by
    /// [`keygen`] and session setup, not here.
    pub fn from_modulus(n: BigUint) -> Result<Self, PaillierError> {
        if n.is_even() || n < BigUint::from(3u32) {
            return Err(PaillierError::InvalidKey("modulus must be odd and at least 3".into()));
        }
        let n_squared = &n * &n;
        let g = &n + 1u32;
        let half = (&n - 1u32) >> 1;
        let bit_length = n.bits();
        let key_id = KeyId::of_modulus(&n);
        Ok(PublicKey {
            n,
            n_squared,
            g,
            half,
            bit_length,
            key_id,
        })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn bit_length(&self) -> u64 {
        self.bit_length
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    /// Largest representable plaintext magnitude, `(n-1)/2`.
    pub fn max_plaintext(&self) -> &BigUint {
        &self.half
    }

    /// Whether `v` lies in the signed plaintext range.
    pub fn in_range(&self, v: &BigInt) -> bool {
        v.magnitude() <= &self.half
    }

    pub fn encode_signed(&self, v: &BigInt) -> Result<BigUint, PaillierError> {
        if !self.in_range(v) {
            return Err(PaillierError::PlaintextOverflow);
        }
        Ok(match v.sign() {
            Sign::Minus => &self.n - v.magnitude(),
            _ => v.magnitude().clone(),
        })
    }

    /// Inverse of [`encode_signed`](Self::encode_signed); `residue` must be below `n`.
    pub fn decode_signed(&self, residue: &BigUint) -> BigInt {
        debug_assert!(residue < &self.n);
        if residue <= &self.half {
            BigInt::from_biguint(Sign::Plus, residue.clone())
        } else {
            BigInt::from_biguint(Sign::Minus, &self.n - residue)
        }
    }

    /// Draw a nonce uniformly from `Z_n^*`.
    pub fn random_nonce<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<BigUint, PaillierError> {
        loop {
            let r = random_below(rng, &self.n)?;
            if !r.is_zero() && r.gcd(&self.n).is_one() {
                return Ok(r);
            }
        }
    }

    /// `r^n mod n^2`, the randomizing factor of an encryption.
    pub fn nonce_power(&self, r: &BigUint) -> BigUint {
        r.modpow(&self.n, &self.n_squared)
    }

    /// `g^m mod n^2` for an encoded plaintext `m`.
    fn g_pow(&self, m: &BigUint) -> BigUint {
        (BigUint::one() + m * &self.n) % &self.n_squared
    }

    fn wrap(&self, value: BigUint) -> Ciphertext {
        Ciphertext {
            value,
            key_id: self.key_id,
        }
    }

    fn check(&self, ct: &Ciphertext) -> Result<(), PaillierError> {
        if ct.key_id != self.key_id {
            return Err(PaillierError::KeyMismatch {
                expected: self.key_id,
                found: ct.key_id,
            });
        }
        Ok(())
    }

    /// Encrypt with a caller-supplied nonce power `r^n mod n^2`.
    pub fn encrypt_with_nonce_power(
        &self,
        v: &BigInt,
        nonce_power: &BigUint,
    ) -> Result<Ciphertext, PaillierError> {
        let m = self.encode_signed(v)?;
        Ok(self.wrap(self.g_pow(&m) * nonce_power % &self.n_squared))
    }

    pub fn encrypt<R: RngCore + CryptoRng + ?Sized>(
        &self,
        v: &BigInt,
        rng: &mut R,
    ) -> Result<Ciphertext, PaillierError> {
        let r = self.random_nonce(rng)?;
        self.encrypt_with_nonce_power(v, &self.nonce_power(&r))
    }

    /// Encrypt a batch. Nonces are drawn from `rng` in order before the
    /// exponentiations run, so the result does not depend on `exec`.
    pub fn encrypt_batch<R: RngCore + CryptoRng + ?Sized>(
        &self,
        values: &[BigInt],
        rng: &mut R,
        exec: Exec,
    ) -> Result<Vec<Ciphertext>, PaillierError> {
        let nonces = values
            .iter()
            .map(|_| self.random_nonce(rng))
            .collect::<Result<Vec<_>, _>>()?;
        let jobs: Vec<(&BigInt, BigUint)> = values.iter().zip(nonces).collect();
        exec.try_map(&jobs, |(v, r)| {
            self.encrypt_with_nonce_power(v, &self.nonce_power(r))
        })
    }

    /// Validate a raw residue received from elsewhere and bind it to this key.
    pub fn ciphertext_from_residue(&self, value: BigUint) -> Result<Ciphertext, PaillierError> {
        if value.is_zero() || value >= self.n_squared || !value.gcd(&self.n).is_one() {
            return Err(PaillierError::MalformedCiphertext);
        }
        Ok(self.wrap(value))
    }

    /// Encryption of `a + b`.
    pub fn hom_add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, PaillierError> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.wrap(&a.value * &b.value % &self.n_squared))
    }

    /// Encryption of `a - b`.
    pub fn hom_sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, PaillierError> {
        let neg = self.hom_neg(b)?;
        self.hom_add(a, &neg)
    }

    /// Encryption of `-a` (modular inverse of the residue).
    pub fn hom_neg(&self, a: &Ciphertext) -> Result<Ciphertext, PaillierError> {
        self.check(a)?;
        let inv = a
            .value
            .modinv(&self.n_squared)
            .ok_or(PaillierError::MalformedCiphertext)?;
        Ok(self.wrap(inv))
    }

    /// Encryption of `k * a` for a signed constant `k`.
    pub fn hom_scale(&self, a: &Ciphertext, k: &BigInt) -> Result<Ciphertext, PaillierError> {
        self.check(a)?;
        if k.is_zero() {
            return Ok(self.wrap(BigUint::one()));
        }
        let base = if k.is_negative() {
            self.hom_neg(a)?
        } else {
            a.clone()
        };
        Ok(self.wrap(base.value.modpow(k.magnitude(), &self.n_squared)))
    }

    /// Raise the residue to an arbitrary nonnegative exponent, i.e. multiply
    /// the plaintext by `e` modulo `n`.
    pub fn hom_scale_mod_n(&self, a: &Ciphertext, e: &BigUint) -> Result<Ciphertext, PaillierError> {
        self.check(a)?;
        Ok(self.wrap(a.value.modpow(e, &self.n_squared)))
    }

    /// Encryption of `a + k` without fresh randomness.
    pub fn hom_add_plain(&self, a: &Ciphertext, k: &BigInt) -> Result<Ciphertext, PaillierError> {
        self.check(a)?;
        let m = self.encode_signed(k)?;
        Ok(self.wrap(&a.value * self.g_pow(&m) % &self.n_squared))
    }

    /// Multiply in a fresh encryption of zero.
    pub fn rerandomize<R: RngCore + CryptoRng + ?Sized>(
        &self,
        a: &Ciphertext,
        rng: &mut R,
    ) -> Result<Ciphertext, PaillierError> {
        self.check(a)?;
        let r = self.random_nonce(rng)?;
        Ok(self.wrap(&a.value * self.nonce_power(&r) % &self.n_squared))
    }

    /// Deterministic encryption with nonce 1. Only for intermediate values
    /// that are combined with a randomized ciphertext before leaving a party.
    pub fn encrypt_trivial(&self, v: &BigInt) -> Result<Ciphertext, PaillierError> {
        let m = self.encode_signed(v)?;
        Ok(self.wrap(self.g_pow(&m)))
    }
}

impl PrivateKey {
    pub fn from_primes(p: BigUint, q: BigUint) -> Result<Self, PaillierError> {
        if p == q {
            return Err(PaillierError::InvalidKey("p and q must differ".into()));
        }
        if p.is_even() || q.is_even() || p.bits() < 8 || q.bits() < 8 {
            return Err(PaillierError::InvalidKey("factors must be odd primes".into()));
        }
        let n = &p * &q;
        let public = PublicKey::from_modulus(n.clone())?;
        let p_minus_one = &p - 1u32;
        let q_minus_one = &q - 1u32;
        if !n.gcd(&(&p_minus_one * &q_minus_one)).is_one() {
            return Err(PaillierError::InvalidKey("gcd(n, phi(n)) != 1".into()));
        }
        let lambda = p_minus_one.lcm(&q_minus_one);
        // with g = n + 1, L(g^lambda mod n^2) = lambda mod n
        let mu = (&lambda % &n)
            .modinv(&n)
            .ok_or_else(|| PaillierError::InvalidKey("lambda not invertible mod n".into()))?;

        let p_squared = &p * &p;
        let q_squared = &q * &q;
        let h = |prime: &BigUint, prime_sq: &BigUint, prime_minus_one: &BigUint| {
            let x = public.g.modpow(prime_minus_one, prime_sq);
            let l = (x - 1u32) / prime;
            l.modinv(prime)
        };
        let h_p = h(&p, &p_squared, &p_minus_one)
            .ok_or_else(|| PaillierError::InvalidKey("p is not prime".into()))?;
        let h_q = h(&q, &q_squared, &q_minus_one)
            .ok_or_else(|| PaillierError::InvalidKey("q is not prime".into()))?;
        let q_inv_p = (&q % &p)
            .modinv(&p)
            .ok_or_else(|| PaillierError::InvalidKey("q not invertible mod p".into()))?;
        let p2_inv_q2 = (&p_squared % &q_squared)
            .modinv(&q_squared)
            .ok_or_else(|| PaillierError::InvalidKey("p^2 not invertible mod q^2".into()))?;
        let n_mod_phi_p2 = &n % (&p * &p_minus_one);
        let n_mod_phi_q2 = &n % (&q * &q_minus_one);

        Ok(PrivateKey {
            crt: CrtParams {
                p_squared,
                q_squared,
                p_minus_one,
                q_minus_one,
                h_p,
                h_q,
                q_inv_p,
                n_mod_phi_p2,
                n_mod_phi_q2,
                p2_inv_q2,
            },
            public,
            p,
            q,
            lambda,
            mu,
        })
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    /// Decrypt to the raw residue in `Z_n` using the CRT.
    pub fn decrypt_residue(&self, ct: &Ciphertext) -> Result<BigUint, PaillierError> {
        self.public.check(ct)?;
        let c = &self.crt;
        let l = |x: BigUint, prime: &BigUint| (x - 1u32) / prime;
        let m_p = l(ct.value.modpow(&c.p_minus_one, &c.p_squared), &self.p) * &c.h_p % &self.p;
        let m_q = l(ct.value.modpow(&c.q_minus_one, &c.q_squared), &self.q) * &c.h_q % &self.q;
        // m = m_q + q * ((m_p - m_q) * q^-1 mod p)
        let diff = (&m_p + &self.p - (&m_q % &self.p)) % &self.p;
        Ok(&m_q + &self.q * (diff * &c.q_inv_p % &self.p))
    }

    pub fn decrypt(&self, ct: &Ciphertext) -> Result<BigInt, PaillierError> {
        Ok(self.public.decode_signed(&self.decrypt_residue(ct)?))
    }

    /// Textbook decryption `L(c^lambda mod n^2) * mu mod n`, kept as an
    /// independent route to cross-check the CRT path.
    pub fn decrypt_with_lambda(&self, ct: &Ciphertext) -> Result<BigInt, PaillierError> {
        self.public.check(ct)?;
        let pk = &self.public;
        let u = ct.value.modpow(&self.lambda, &pk.n_squared);
        if !((&u - 1u32) % &pk.n).is_zero() {
            return Err(PaillierError::MalformedCiphertext);
        }
        let m = (u - 1u32) / &pk.n * &self.mu % &pk.n;
        Ok(pk.decode_signed(&m))
    }

    pub fn decrypt_batch(&self, cts: &[Ciphertext], exec: Exec) -> Result<Vec<BigInt>, PaillierError> {
        exec.try_map(cts, |ct| self.decrypt(ct))
    }

    /// `r^n mod n^2` computed with the factorization.
    pub fn nonce_power(&self, r: &BigUint) -> BigUint {
        let c = &self.crt;
        let a = r.modpow(&c.n_mod_phi_p2, &c.p_squared);
        let b = r.modpow(&c.n_mod_phi_q2, &c.q_squared);
        // x = a + p^2 * ((b - a) * (p^2)^-1 mod q^2)
        let a_mod_q2 = &a % &c.q_squared;
        let diff = (&b + &c.q_squared - a_mod_q2) % &c.q_squared;
        a + &c.p_squared * (diff * &c.p2_inv_q2 % &c.q_squared)
    }

    /// Encryption by the key holder; same distribution as
    /// [`PublicKey::encrypt`] but uses the CRT for the nonce power.
    pub fn encrypt<R: RngCore + CryptoRng + ?Sized>(
        &self,
        v: &BigInt,
        rng: &mut R,
    ) -> Result<Ciphertext, PaillierError> {
        let r = self.public.random_nonce(rng)?;
        self.public.encrypt_with_nonce_power(v, &self.nonce_power(&r))
    }

    pub fn encrypt_batch<R: RngCore + CryptoRng + ?Sized>(
        &self,
        values: &[BigInt],
        rng: &mut R,
        exec: Exec,
    ) -> Result<Vec<Ciphertext>, PaillierError> {
        let nonces = values
            .iter()
            .map(|_| self.public.random_nonce(rng))
            .collect::<Result<Vec<_>, _>>()?;
        let jobs: Vec<(&BigInt, BigUint)> = values.iter().zip(nonces).collect();
        exec.try_map(&jobs, |(v, r)| {
            self.public.encrypt_with_nonce_power(v, &self.nonce_power(r))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy_key() -> PublicKey {
        // n = 35 is not a real key; only the encoding helpers are exercised
        PublicKey::from_modulus(BigUint::from(35u32)).unwrap()
    }

    fn small_keys(seed: u64) -> (PublicKey, PrivateKey) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        keygen(256, &mut rng).unwrap()
    }

    fn big(v: i64) -> BigInt {
        BigInt::from(v)
    }

    #[test]
    fn signed_encoding_on_toy_modulus() {
        let pk = toy_key();
        assert_eq!(pk.encode_signed(&big(-4)).unwrap(), BigUint::from(31u32));
        assert_eq!(pk.encode_signed(&big(0)).unwrap(), BigUint::zero());
        assert_eq!(pk.encode_signed(&big(17)).unwrap(), BigUint::from(17u32));
        assert_eq!(pk.decode_signed(&BigUint::from(31u32)), big(-4));
        assert_eq!(pk.decode_signed(&BigUint::from(17u32)), big(17));
        for v in -17..=17 {
            assert_eq!(pk.decode_signed(&pk.encode_signed(&big(v)).unwrap()), big(v));
        }
        assert_eq!(pk.encode_signed(&big(18)), Err(PaillierError::PlaintextOverflow));
        assert_eq!(pk.encode_signed(&big(-18)), Err(PaillierError::PlaintextOverflow));
    }

    #[test]
    fn keygen_produces_requested_size() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (pk, sk) = keygen(512, &mut rng).unwrap();
        assert_eq!(pk.bit_length(), 512);
        assert_eq!(pk.n().bits(), 512);
        assert_eq!(pk.g(), &(pk.n() + 1u32));
        assert_eq!(pk.n_squared(), &(pk.n() * pk.n()));
        assert_eq!(sk.p() * sk.q(), *pk.n());
        assert_ne!(sk.p(), sk.q());
        let ct = pk.encrypt(&big(12345), &mut rng).unwrap();
        assert_eq!(sk.decrypt(&ct).unwrap(), big(12345));
    }

    #[test]
    fn keygen_rejects_small_sizes() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(keygen(128, &mut rng).unwrap_err(), PaillierError::KeyTooSmall(128));
    }

    #[test]
    fn distinct_seeds_give_distinct_moduli() {
        let (a, _) = small_keys(10);
        let (b, _) = small_keys(11);
        assert_ne!(a.n(), b.n());
        assert_ne!(a.key_id(), b.key_id());
    }

    #[test]
    fn roundtrip_and_extremes() {
        let (pk, sk) = small_keys(2);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let max = BigInt::from_biguint(Sign::Plus, pk.max_plaintext().clone());
        for v in [big(0), big(1), big(-1), big(7), big(-3), max.clone(), -max.clone()] {
            let ct = pk.encrypt(&v, &mut rng).unwrap();
            assert!(ct.value().gcd(pk.n()).is_one());
            assert_eq!(sk.decrypt(&ct).unwrap(), v);
            assert_eq!(sk.decrypt_with_lambda(&ct).unwrap(), v);
        }
        assert_eq!(
            pk.encrypt(&(max + 1), &mut rng).unwrap_err(),
            PaillierError::PlaintextOverflow
        );
    }

    #[test]
    fn encryption_is_probabilistic() {
        let (pk, sk) = small_keys(4);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let a = pk.encrypt(&big(5), &mut rng).unwrap();
        let b = pk.encrypt(&big(5), &mut rng).unwrap();
        assert_ne!(a.value(), b.value());
        let c = sk.encrypt(&big(5), &mut rng).unwrap();
        assert_ne!(a.value(), c.value());
        assert_eq!(sk.decrypt(&c).unwrap(), big(5));
    }

    #[test]
    fn homomorphic_examples() {
        let (pk, sk) = small_keys(6);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let enc = |v: i64, rng: &mut ChaCha20Rng| pk.encrypt(&big(v), rng).unwrap();
        let dec = |c: &Ciphertext| sk.decrypt(c).unwrap();

        assert_eq!(dec(&enc(0, &mut rng)), big(0));
        assert_eq!(dec(&pk.hom_add(&enc(2, &mut rng), &enc(3, &mut rng)).unwrap()), big(5));
        assert_eq!(dec(&pk.hom_add(&enc(3, &mut rng), &enc(4, &mut rng)).unwrap()), big(7));
        assert_eq!(dec(&pk.hom_add(&enc(-9, &mut rng), &enc(0, &mut rng)).unwrap()), big(-9));
        assert_eq!(dec(&pk.hom_add(&enc(5, &mut rng), &enc(-5, &mut rng)).unwrap()), big(0));
        assert_eq!(dec(&pk.hom_scale(&enc(5, &mut rng), &big(3)).unwrap()), big(15));
        assert_eq!(dec(&pk.hom_scale(&enc(6, &mut rng), &big(-1)).unwrap()), big(-6));
        assert_eq!(dec(&pk.hom_scale(&enc(6, &mut rng), &big(1)).unwrap()), big(6));
        assert_eq!(dec(&pk.hom_scale(&enc(6, &mut rng), &big(0)).unwrap()), big(0));
        // plaintext multiplication oracle: -2 * 7
        assert_eq!(dec(&pk.hom_scale(&enc(-2, &mut rng), &big(7)).unwrap()), big(-2 * 7));
        assert_eq!(dec(&pk.hom_sub(&enc(4, &mut rng), &enc(10, &mut rng)).unwrap()), big(-6));
        assert_eq!(dec(&pk.hom_add_plain(&enc(4, &mut rng), &big(-10)).unwrap()), big(-6));
        let c = enc(11, &mut rng);
        let r = pk.rerandomize(&c, &mut rng).unwrap();
        assert_ne!(c.value(), r.value());
        assert_eq!(dec(&r), big(11));
    }

    #[test]
    fn key_mismatch_is_detected() {
        let (pk_a, _) = small_keys(20);
        let (_, sk_b) = small_keys(21);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let ct = pk_a.encrypt(&big(1), &mut rng).unwrap();
        assert!(matches!(sk_b.decrypt(&ct), Err(PaillierError::KeyMismatch { .. })));
        let other = sk_b.public_key().encrypt(&big(1), &mut rng).unwrap();
        assert!(matches!(pk_a.hom_add(&ct, &other), Err(PaillierError::KeyMismatch { .. })));
    }

    #[test]
    fn residue_validation() {
        let (pk, _) = small_keys(22);
        assert_eq!(
            pk.ciphertext_from_residue(BigUint::zero()).unwrap_err(),
            PaillierError::MalformedCiphertext
        );
        assert_eq!(
            pk.ciphertext_from_residue(pk.n_squared().clone()).unwrap_err(),
            PaillierError::MalformedCiphertext
        );
        assert_eq!(
            pk.ciphertext_from_residue(pk.n().clone()).unwrap_err(),
            PaillierError::MalformedCiphertext
        );
        assert!(pk.ciphertext_from_residue(BigUint::from(2u32)).is_ok());
    }

    #[test]
    fn batch_encryption_matches_across_strategies() {
        let (pk, sk) = small_keys(23);
        let values: Vec<BigInt> = (-10..10).map(BigInt::from).collect();
        let a = pk
            .encrypt_batch(&values, &mut ChaCha20Rng::seed_from_u64(1), Exec::Sequential)
            .unwrap();
        let b = pk
            .encrypt_batch(&values, &mut ChaCha20Rng::seed_from_u64(1), Exec::Parallel)
            .unwrap();
        assert_eq!(a, b);
        let c = sk
            .encrypt_batch(&values, &mut ChaCha20Rng::seed_from_u64(1), Exec::Parallel)
            .unwrap();
        // CRT nonce power must equal the public one for identical nonces
        assert_eq!(a, c);
        assert_eq!(sk.decrypt_batch(&a, Exec::Parallel).unwrap(), values);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use std::sync::OnceLock;

        fn keys() -> &'static (PublicKey, PrivateKey) {
            static KEYS: OnceLock<(PublicKey, PrivateKey)> = OnceLock::new();
            KEYS.get_or_init(|| small_keys(99))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn encode_decode_identity(v in any::<i128>()) {
                let (pk, _) = keys();
                let v = BigInt::from(v);
                prop_assert_eq!(pk.decode_signed(&pk.encode_signed(&v).unwrap()), v);
            }

            #[test]
            fn add_and_scale_match_plain(a in any::<i64>(), b in any::<i64>(), k in any::<i32>(), seed in any::<u64>()) {
                let (pk, sk) = keys();
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let ca = pk.encrypt(&BigInt::from(a), &mut rng).unwrap();
                let cb = pk.encrypt(&BigInt::from(b), &mut rng).unwrap();
                let sum = sk.decrypt(&pk.hom_add(&ca, &cb).unwrap()).unwrap();
                prop_assert_eq!(sum, BigInt::from(a) + BigInt::from(b));
                let scaled = pk.hom_scale(&ca, &BigInt::from(k)).unwrap();
                prop_assert_eq!(sk.decrypt(&scaled).unwrap(), BigInt::from(a) * BigInt::from(k));
                prop_assert_eq!(sk.decrypt_with_lambda(&scaled).unwrap(), BigInt::from(a) * BigInt::from(k));
            }
        }
    }
}
