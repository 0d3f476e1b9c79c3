//! Probabilistic prime generation for key setup.

use std::sync::OnceLock;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};

use super::{random_below, random_bits, PaillierError};

/// Miller-Rabin rounds; each round has error at most 1/4, so 40 rounds
/// bound the false-positive probability by 2^-80.
pub const MILLER_RABIN_ROUNDS: usize = 40;

/// Candidates tried per prime before giving up.
pub const PRIME_SEARCH_CAP: usize = 200_000;

fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        const LIMIT: usize = 4096;
        let mut sieve = vec![true; LIMIT];
        sieve[0] = false;
        sieve[1] = false;
        let mut i = 2;
        while i * i < LIMIT {
            if sieve[i] {
                let mut j = i * i;
                while j < LIMIT {
                    sieve[j] = false;
                    j += i;
                }
            }
            i += 1;
        }
        (0..LIMIT as u32).filter(|&k| sieve[k as usize]).collect()
    })
}

/// Miller-Rabin with `rounds` random bases, preceded by trial division.
pub fn is_probable_prime<R: RngCore + CryptoRng>(
    candidate: &BigUint,
    rounds: usize,
    rng: &mut R,
) -> Result<bool, PaillierError> {
    let two = BigUint::from(2u32);
    if candidate < &two {
        return Ok(false);
    }
    for &p in small_primes() {
        let p = BigUint::from(p);
        if candidate == &p {
            return Ok(true);
        }
        if (candidate % &p).is_zero() {
            return Ok(false);
        }
    }

    let one = BigUint::one();
    let minus_one = candidate - &one;
    let mut d = minus_one.clone();
    let mut s = 0u32;
    while d.is_even() {
        d >>= 1;
        s += 1;
    }

    // bases drawn from [2, candidate - 2]
    let base_span = candidate - BigUint::from(3u32);
    'witness: for _ in 0..rounds {
        let a = random_below(rng, &base_span)? + &two;
        let mut x = a.modpow(&d, candidate);
        if x == one || x == minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, candidate);
            if x == minus_one {
                continue 'witness;
            }
            if x == one {
                return Ok(false);
            }
        }
        return Ok(false);
    }
    Ok(true)
}

/// Random prime with exactly `bits` bits and its two top bits set, so that
/// the product of two such primes has exactly the sum of their sizes.
pub fn random_prime<R: RngCore + CryptoRng>(
    bits: u64,
    rng: &mut R,
) -> Result<BigUint, PaillierError> {
    assert!(bits >= 8, "prime size too small");
    for _ in 0..PRIME_SEARCH_CAP {
        let mut candidate = random_bits(rng, bits)?;
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng)? {
            return Ok(candidate);
        }
    }
    Err(PaillierError::PrimeSearchExhausted { bits })
}
