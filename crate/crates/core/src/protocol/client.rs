use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{ProtocolError, SessionParams, DEFAULT_KAPPA};
use crate::dataset::ImageVector;
use crate::paillier::{Ciphertext, PrivateKey, PublicKey};
use crate::par::Exec;
use crate::wire::{
    bigint_wire_len, decode_frame, Frame, Message, DEFAULT_MAX_FRAME, HEADER_LEN, PROTOCOL_VERSION,
};

#[derive(Clone, Copy, Debug)]
pub struct ClientConfig {
    /// Blinding margin requested from the server.
    pub kappa: u32,
    pub exec: Exec,
    pub max_frame: usize,
    pub seed: Option<u64>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            kappa: DEFAULT_KAPPA,
            exec: Exec::default(),
            max_frame: DEFAULT_MAX_FRAME,
            seed: None,
        }
    }
}

/// Session parameters as announced by the server.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Negotiated {
    pub l: u32,
    pub kappa: u32,
    pub m_out: usize,
    pub gallery_size: usize,
    pub labels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientOutcome {
    pub label_code: usize,
    pub label: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Start,
    AwaitAccept,
    AwaitFeatures,
    Folding { awaiting_carry: bool },
    Done,
    Failed,
}

/// Client state machine. It performs no I/O: feed it each incoming frame
/// and send whatever frames it returns.
pub struct ClientSession {
    sk: PrivateKey,
    image: Option<ImageVector>,
    rng: ChaCha20Rng,
    config: ClientConfig,
    session_id: u64,
    phase: Phase,
    negotiated: Option<Negotiated>,
    outcome: Option<ClientOutcome>,
}

impl ClientSession {
    pub fn new(sk: PrivateKey, image: ImageVector, config: ClientConfig) -> Self {
        let mut rng = match config.seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_entropy(),
        };
        let session_id = rng.gen();
        ClientSession {
            sk,
            image: Some(image),
            rng,
            config,
            session_id,
            phase: Phase::Start,
            negotiated: None,
            outcome: None,
        }
    }

    /// A client already past the image upload and square-sum exchange, for
    /// exercising the comparison subprotocols on their own.
    pub fn subprotocol_peer(sk: PrivateKey, l: u32, session_id: u64, config: ClientConfig) -> Self {
        let rng = match config.seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_entropy(),
        };
        ClientSession {
            sk,
            image: None,
            rng,
            config,
            session_id,
            phase: Phase::Folding {
                awaiting_carry: false,
            },
            negotiated: Some(Negotiated {
                l,
                kappa: config.kappa,
                m_out: 1,
                gallery_size: 1,
                labels: vec![],
            }),
            outcome: None,
        }
    }

    pub fn session_id(&self) -> u64 {
        self.session_id
    }

    pub fn public_key(&self) -> &PublicKey {
        self.sk.public_key()
    }

    pub fn negotiated(&self) -> Option<&Negotiated> {
        self.negotiated.as_ref()
    }

    pub fn outcome(&self) -> Option<&ClientOutcome> {
        self.outcome.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.phase, Phase::Done | Phase::Failed)
    }

    fn frame(&self, message: Message) -> Frame {
        Frame::new(self.session_id, message)
    }

    /// The ERROR frame reporting `err` to the server.
    pub fn error_frame(&self, err: &ProtocolError) -> Frame {
        self.frame(Message::Error {
            code: err.code(),
            message: err.to_string(),
        })
    }

    /// The opening HELLO.
    pub fn start(&mut self) -> Result<Vec<Frame>, ProtocolError> {
        if self.phase != Phase::Start {
            return Err(ProtocolError::Finished);
        }
        let pixels = self.image.as_ref().map_or(0, |i| i.len());
        self.phase = Phase::AwaitAccept;
        Ok(vec![self.frame(Message::Hello {
            version: PROTOCOL_VERSION,
            modulus: self.sk.public_key().n().clone(),
            kappa: self.config.kappa,
            pixel_count: pixels as u32,
        })])
    }

    pub fn handle_bytes(&mut self, bytes: &[u8]) -> Result<Vec<Frame>, ProtocolError> {
        match decode_frame(bytes) {
            Ok(frame) => self.handle_frame(frame),
            Err(e) => {
                self.phase = Phase::Failed;
                Err(e.into())
            }
        }
    }

    pub fn handle_frame(&mut self, frame: Frame) -> Result<Vec<Frame>, ProtocolError> {
        if self.is_finished() {
            return Err(ProtocolError::Finished);
        }
        let result = self.dispatch(frame);
        if result.is_err() {
            self.phase = Phase::Failed;
        }
        result
    }

    fn dispatch(&mut self, frame: Frame) -> Result<Vec<Frame>, ProtocolError> {
        if frame.session_id != self.session_id {
            return Err(ProtocolError::SessionMismatch {
                expected: self.session_id,
                found: frame.session_id,
            });
        }
        let got = frame.message.kind().name();
        let expecting = match self.phase {
            Phase::Start => "not started",
            Phase::AwaitAccept => "awaiting ACCEPT",
            Phase::AwaitFeatures => "awaiting BLINDED_FEATURES",
            Phase::Folding { awaiting_carry: true } => "awaiting CARRY_MASKED",
            Phase::Folding { .. } => "comparing distances",
            Phase::Done | Phase::Failed => "finished",
        };
        let unexpected = || ProtocolError::UnexpectedMessage { expecting, got };
        match (self.phase, frame.message) {
            (_, Message::Error { code, message }) => Err(ProtocolError::Remote { code, message }),
            (Phase::AwaitAccept, Message::Accept {
                l,
                kappa,
                m_out,
                gallery_size,
                labels,
            }) => self.on_accept(Negotiated {
                l,
                kappa,
                m_out: m_out as usize,
                gallery_size: gallery_size as usize,
                labels,
            }),
            (Phase::AwaitFeatures, Message::BlindedFeatures(v)) => self.on_blinded_features(v),
            (Phase::Folding { .. }, Message::BlindedZ(z)) => self.on_blinded_z(z),
            (Phase::Folding { awaiting_carry: true }, Message::CarryMasked(v)) => self.on_carry_masked(v),
            (Phase::Folding { awaiting_carry: false }, Message::MulBlind(pairs)) => self.on_mul_blind(pairs),
            (Phase::Folding { awaiting_carry: false }, Message::ResultLabel(v)) => self.on_result(v),
            _ => Err(unexpected()),
        }
    }

    fn ciphertext(&self, v: BigUint) -> Result<Ciphertext, ProtocolError> {
        Ok(self.sk.public_key().ciphertext_from_residue(v)?)
    }

    fn decrypt_signed(&self, values: Vec<BigUint>) -> Result<Vec<BigInt>, ProtocolError> {
        let cts = values
            .into_iter()
            .map(|v| self.ciphertext(v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.sk.decrypt_batch(&cts, self.config.exec)?)
    }

    fn encrypt_all(&mut self, values: &[BigInt]) -> Result<Vec<BigUint>, ProtocolError> {
        Ok(self
            .sk
            .encrypt_batch(values, &mut self.rng, self.config.exec)?
            .into_iter()
            .map(|c| c.value().clone())
            .collect())
    }

    fn l(&self) -> u32 {
        self.negotiated.as_ref().map_or(0, |n| n.l)
    }

    fn on_accept(&mut self, neg: Negotiated) -> Result<Vec<Frame>, ProtocolError> {
        if neg.kappa < self.config.kappa {
            return Err(ProtocolError::Parameter(format!(
                "server offered kappa {} below the requested {}",
                neg.kappa, self.config.kappa
            )));
        }
        if neg.labels.is_empty() {
            return Err(ProtocolError::Parameter("empty label table".into()));
        }
        let image = self.image.take().ok_or(ProtocolError::Finished)?;
        let pk = self.sk.public_key().clone();
        SessionParams {
            l: neg.l,
            kappa: neg.kappa,
            m_out: neg.m_out,
            n: image.len(),
            gallery_size: neg.gallery_size,
            class_count: neg.labels.len(),
            key_id: pk.key_id(),
            key_bits: pk.bit_length(),
        }
        .validate()?;

        let pixels: Vec<BigInt> = image.pixels().iter().map(|&p| BigInt::from(p)).collect();
        let cts = self.encrypt_all(&pixels)?;
        let per_ct = 4 + (pk.n_squared().bits() as usize).div_ceil(8);
        let budget = self.config.max_frame.saturating_sub(HEADER_LEN + 12);
        let per_frame = budget / per_ct;
        if per_frame == 0 {
            return Err(ProtocolError::Parameter(format!(
                "frame limit {} cannot hold one ciphertext",
                self.config.max_frame
            )));
        }
        let total = cts.len() as u32;
        let mut frames = Vec::new();
        let mut offset = 0u32;
        for chunk in cts.chunks(per_frame) {
            debug_assert!(chunk.iter().all(|c| bigint_wire_len(c) <= per_ct));
            frames.push(self.frame(Message::EncImageChunk {
                offset,
                total,
                ciphertexts: chunk.to_vec(),
            }));
            offset += chunk.len() as u32;
        }
        self.negotiated = Some(neg);
        self.phase = Phase::AwaitFeatures;
        Ok(frames)
    }

    fn on_blinded_features(&mut self, blinded: Vec<BigUint>) -> Result<Vec<Frame>, ProtocolError> {
        let m_out = self.negotiated.as_ref().map_or(0, |n| n.m_out);
        if blinded.len() != m_out {
            return Err(ProtocolError::Parameter(format!(
                "expected {m_out} blinded features, got {}",
                blinded.len()
            )));
        }
        let sum: BigInt = self.decrypt_signed(blinded)?.iter().map(|s| s * s).sum();
        let enc = self.encrypt_all(&[sum])?;
        self.phase = Phase::Folding {
            awaiting_carry: false,
        };
        Ok(vec![self.frame(Message::SquareSum(enc[0].clone()))])
    }

    fn on_blinded_z(&mut self, blinded: BigUint) -> Result<Vec<Frame>, ProtocolError> {
        let l = self.l();
        let ct = self.ciphertext(blinded)?;
        let t = self.sk.decrypt_residue(&ct)?;
        let c = t % (BigUint::one() << l);
        let mut values = vec![BigInt::from(c.clone())];
        values.extend((0..l as u64).map(|i| BigInt::from(c.bit(i) as u8)));
        let mut enc = self.encrypt_all(&values)?.into_iter();
        let reduced = enc.next().expect("reduced value");
        // a pending carry exchange is abandoned when a new value arrives
        self.phase = Phase::Folding {
            awaiting_carry: true,
        };
        Ok(vec![self.frame(Message::ReducedZAndCarry {
            reduced,
            bits: enc.collect(),
        })])
    }

    fn on_carry_masked(&mut self, masked: Vec<BigUint>) -> Result<Vec<Frame>, ProtocolError> {
        if masked.len() != self.l() as usize + 1 {
            return Err(ProtocolError::Parameter(format!(
                "expected {} masked terms, got {}",
                self.l() + 1,
                masked.len()
            )));
        }
        let cts = masked
            .into_iter()
            .map(|v| self.ciphertext(v))
            .collect::<Result<Vec<_>, _>>()?;
        let sk = &self.sk;
        let residues = self.config.exec.try_map(&cts, |c| sk.decrypt_residue(c))?;
        let any_zero = residues.iter().any(|r| r.is_zero());
        let enc = self.encrypt_all(&[BigInt::from(any_zero as u8)])?;
        self.phase = Phase::Folding {
            awaiting_carry: false,
        };
        Ok(vec![self.frame(Message::CarryBit(enc[0].clone()))])
    }

    fn on_mul_blind(&mut self, pairs: Vec<(BigUint, BigUint)>) -> Result<Vec<Frame>, ProtocolError> {
        let flat: Vec<BigUint> = pairs.into_iter().flat_map(|(a, b)| [a, b]).collect();
        let plain = self.decrypt_signed(flat)?;
        let products: Vec<BigInt> = plain.chunks(2).map(|p| &p[0] * &p[1]).collect();
        let enc = self.encrypt_all(&products)?;
        Ok(vec![self.frame(Message::MulResult(enc))])
    }

    fn on_result(&mut self, value: BigUint) -> Result<Vec<Frame>, ProtocolError> {
        let code = self.decrypt_signed(vec![value])?.remove(0);
        let labels = &self.negotiated.as_ref().expect("negotiated").labels;
        let index = code
            .to_usize()
            .filter(|&i| i < labels.len() || labels.is_empty())
            .ok_or_else(|| ProtocolError::Parameter(format!("label code {code} out of range")))?;
        self.outcome = Some(ClientOutcome {
            label_code: index,
            label: labels.get(index).cloned().unwrap_or_default(),
        });
        self.phase = Phase::Done;
        Ok(vec![])
    }
}

impl std::fmt::Debug for ClientSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientSession")
            .field("session_id", &self.session_id)
            .field("phase", &self.phase)
            .finish_non_exhaustive()
    }
}
