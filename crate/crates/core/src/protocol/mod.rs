//! Two-party encrypted classification.
//!
//! The client owns the only Paillier key. It sends its encrypted image, and
//! the server evaluates the projection and all gallery distances under that
//! key, then runs an interactive argmin that leaves only the encrypted label
//! of the nearest gallery entry. Every plaintext the client sees along the
//! way is additively blinded by at least `kappa` bits.

mod client;
mod server;
mod transport;

use thiserror::Error;

use crate::paillier::{KeyId, PaillierError};
use crate::wire::WireError;

pub use client::{ClientConfig, ClientOutcome, ClientSession, Negotiated};
pub use server::{BlindRecord, ServerConfig, ServerEngine, ServerSession, SessionReport};
pub use transport::{
    run_session, run_session_recorded, Direction, LoopbackTransport, RecordingTransport, Transcript, Transport,
};

pub const DEFAULT_KAPPA: u32 = 40;

/// Codes carried by ERROR frames.
pub mod codes {
    pub const VERSION: u16 = 1;
    pub const PARAMETERS: u16 = 2;
    pub const CAPACITY: u16 = 3;
    pub const UNEXPECTED_MESSAGE: u16 = 4;
    pub const MALFORMED: u16 = 5;
    pub const KEY: u16 = 6;
    pub const INTERNAL: u16 = 7;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error("unsupported protocol version {0}")]
    Version(u16),
    #[error("unexpected {got} while {expecting}")]
    UnexpectedMessage {
        expecting: &'static str,
        got: &'static str,
    },
    #[error("parameter mismatch: {0}")]
    Parameter(String),
    #[error("plaintext capacity exceeded: {0}")]
    Capacity(String),
    #[error("frame for session {found:#018x} arrived on session {expected:#018x}")]
    SessionMismatch { expected: u64, found: u64 },
    #[error("peer aborted with code {code}: {message}")]
    Remote { code: u16, message: String },
    #[error("blind for round {0} is missing or already used")]
    Blind(u64),
    #[error("session already finished")]
    Finished,
}

impl ProtocolError {
    /// Code sent to the peer when this error aborts a session.
    pub fn code(&self) -> u16 {
        match self {
            ProtocolError::Version(_) => codes::VERSION,
            ProtocolError::Parameter(_) | ProtocolError::SessionMismatch { .. } => {
                codes::PARAMETERS
            }
            ProtocolError::Capacity(_) => codes::CAPACITY,
            ProtocolError::UnexpectedMessage { .. } | ProtocolError::Finished => {
                codes::UNEXPECTED_MESSAGE
            }
            ProtocolError::Wire(_) => codes::MALFORMED,
            ProtocolError::Paillier(PaillierError::KeyMismatch { .. })
            | ProtocolError::Paillier(PaillierError::InvalidKey(_))
            | ProtocolError::Paillier(PaillierError::KeyTooSmall(_)) => codes::KEY,
            ProtocolError::Paillier(PaillierError::MalformedCiphertext) => codes::MALFORMED,
            ProtocolError::Paillier(PaillierError::PlaintextOverflow) => codes::CAPACITY,
            ProtocolError::Paillier(_) | ProtocolError::Blind(_) => codes::INTERNAL,
            ProtocolError::Remote { code, .. } => *code,
        }
    }
}

/// Negotiated dimensions and bit sizes of one session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionParams {
    /// Every distance is below `2^l`.
    pub l: u32,
    pub kappa: u32,
    pub m_out: usize,
    pub n: usize,
    pub gallery_size: usize,
    pub class_count: usize,
    pub key_id: KeyId,
    pub key_bits: u64,
}

fn bits_of(v: usize) -> u64 {
    (usize::BITS - v.leading_zeros()) as u64
}

impl SessionParams {
    /// Projected features satisfy `|Omega_j| < 2^value_bits`.
    pub fn feature_value_bits(&self) -> u64 {
        (self.l as u64).div_ceil(2)
    }

    pub fn feature_blind_bits(&self) -> u64 {
        self.feature_value_bits() + self.kappa as u64
    }

    /// Comparison inputs `z` are below `2^(l+1)`.
    pub fn reduce_value_bits(&self) -> u64 {
        self.l as u64 + 1
    }

    pub fn reduce_blind_bits(&self) -> u64 {
        self.reduce_value_bits() + self.kappa as u64
    }

    /// Multiplication operands are distance or label differences.
    pub fn mul_value_bits(&self) -> u64 {
        (self.l as u64).max(bits_of(self.class_count)) + 1
    }

    pub fn mul_blind_bits(&self) -> u64 {
        self.mul_value_bits() + self.kappa as u64
    }

    /// Check that every blinded intermediate fits the plaintext space.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bits = self.key_bits;
        let cap = |what: &str, needed: u64| {
            Err(ProtocolError::Capacity(format!(
                "{what} needs {needed} bits but the key has {bits}"
            )))
        };
        if self.l == 0 || self.m_out == 0 || self.gallery_size == 0 || self.class_count == 0 {
            return Err(ProtocolError::Parameter("empty model dimension".into()));
        }
        // blinded comparison inputs, decoded as nonnegative residues
        if self.l as u64 + self.kappa as u64 + 2 >= bits {
            return cap("modular reduction", self.l as u64 + self.kappa as u64 + 3);
        }
        // signed values must stay below n/2 >= 2^(bits-2)
        let square_sum = bits_of(self.m_out) + 2 * (self.feature_blind_bits() + 1);
        if square_sum > bits - 2 {
            return cap("blinded square sum", square_sum + 2);
        }
        let product = 2 * (self.mul_blind_bits() + 1);
        if product > bits - 2 {
            return cap("blinded multiplication", product + 2);
        }
        Ok(())
    }
}
