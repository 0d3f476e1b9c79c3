use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{ProtocolError, SessionParams, Transport, DEFAULT_KAPPA};
use crate::paillier::{random_below, random_bits, Ciphertext, PublicKey, MIN_KEY_BITS};
use crate::par::Exec;
use crate::quantizer::QuantizedModel;
use crate::wire::{
    decode_frame, encode_frame, Frame, Message, DEFAULT_MAX_FRAME, PROTOCOL_VERSION,
};

#[derive(Clone, Copy, Debug)]
pub struct ServerConfig {
    /// Minimum blinding margin; a client may ask for more.
    pub kappa: u32,
    pub exec: Exec,
    pub max_frame: usize,
    /// Seeds the per-session generator; `None` draws from the OS.
    pub seed: Option<u64>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            kappa: DEFAULT_KAPPA,
            exec: Exec::default(),
            max_frame: DEFAULT_MAX_FRAME,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlindRecord {
    pub round: u64,
    pub value: BigUint,
}

/// Blinds issued per round. Each round is consumed exactly once.
#[derive(Debug, Default)]
struct BlindStore {
    next_round: u64,
    open: BTreeMap<u64, Vec<BigUint>>,
    log: Vec<BlindRecord>,
}

impl BlindStore {
    fn issue(&mut self, values: Vec<BigUint>) -> u64 {
        let round = self.next_round;
        self.next_round += 1;
        self.log.extend(values.iter().map(|v| BlindRecord {
            round,
            value: v.clone(),
        }));
        self.open.insert(round, values);
        round
    }

    fn consume(&mut self, round: u64) -> Result<Vec<BigUint>, ProtocolError> {
        self.open.remove(&round).ok_or(ProtocolError::Blind(round))
    }
}

fn unexpected(expecting: &'static str, got: &Message) -> ProtocolError {
    ProtocolError::UnexpectedMessage {
        expecting,
        got: got.kind().name(),
    }
}

/// Server half of every subprotocol. Holds the client's public key, the
/// session generator and the blinds; never any private key material.
pub struct ServerEngine {
    pk: PublicKey,
    params: SessionParams,
    l: u32,
    kappa: u32,
    session_id: u64,
    rng: ChaCha20Rng,
    exec: Exec,
    blinds: BlindStore,
    forced: VecDeque<BigUint>,
    carry: bool,
}

impl ServerEngine {
    /// `params` must describe `pk`; it is not re-validated here.
    pub fn new(pk: PublicKey, params: SessionParams, session_id: u64, rng: ChaCha20Rng, exec: Exec) -> Self {
        ServerEngine {
            pk,
            l: params.l,
            kappa: params.kappa,
            params,
            session_id,
            rng,
            exec,
            blinds: BlindStore::default(),
            forced: VecDeque::new(),
            carry: true,
        }
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.pk
    }

    pub fn params(&self) -> &SessionParams {
        &self.params
    }

    /// Use the given values, in order, instead of the next random blinds.
    pub fn force_next_blinds(&mut self, values: impl IntoIterator<Item = BigUint>) {
        self.forced.extend(values);
    }

    /// Turn the carry correction of the modular reduction off. The result is
    /// then wrong whenever the blinded low bits wrap.
    pub fn set_carry_correction(&mut self, enabled: bool) {
        self.carry = enabled;
    }

    /// Every blind issued so far, in order.
    pub fn blind_log(&self) -> &[BlindRecord] {
        &self.blinds.log
    }

    /// Rounds whose blinds have been issued but not yet consumed.
    pub fn open_rounds(&self) -> Vec<u64> {
        self.blinds.open.keys().copied().collect()
    }

    fn draw_blind(&mut self, bits: u64) -> Result<BigUint, ProtocolError> {
        match self.forced.pop_front() {
            Some(v) => Ok(v),
            None => Ok(random_bits(&mut self.rng, bits)?),
        }
    }

    fn encrypt(&mut self, v: &BigInt) -> Result<Ciphertext, ProtocolError> {
        Ok(self.pk.encrypt(v, &mut self.rng)?)
    }

    fn encrypt_all(&mut self, values: &[BigInt]) -> Result<Vec<Ciphertext>, ProtocolError> {
        Ok(self.pk.encrypt_batch(values, &mut self.rng, self.exec)?)
    }

    fn ciphertext(&self, v: BigUint) -> Result<Ciphertext, ProtocolError> {
        Ok(self.pk.ciphertext_from_residue(v)?)
    }

    fn send<T: Transport + ?Sized>(&self, t: &mut T, message: Message) -> Result<(), ProtocolError> {
        t.send_bytes(&encode_frame(&Frame::new(self.session_id, message)))
    }

    fn receive<T: Transport + ?Sized>(&self, t: &mut T) -> Result<Message, ProtocolError> {
        let frame = decode_frame(&t.recv_bytes()?)?;
        if frame.session_id != self.session_id {
            return Err(ProtocolError::SessionMismatch {
                expected: self.session_id,
                found: frame.session_id,
            });
        }
        match frame.message {
            Message::Error { code, message } => Err(ProtocolError::Remote { code, message }),
            m => Ok(m),
        }
    }

    fn exchange<T: Transport + ?Sized>(&self, t: &mut T, message: Message) -> Result<Message, ProtocolError> {
        self.send(t, message)?;
        self.receive(t)
    }

    /// `Omega_i = sum_j q_w[i][j] * (F_j - q_mean_j)` under encryption.
    pub fn server_project_encrypted(
        &self,
        q: &QuantizedModel,
        image: &[Ciphertext],
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        if image.len() != q.pixel_count() {
            return Err(ProtocolError::Parameter(format!(
                "image has {} ciphertexts, model expects {}",
                image.len(),
                q.pixel_count()
            )));
        }
        let pk = &self.pk;
        let jobs: Vec<(&Ciphertext, i64)> = image.iter().zip(q.q_mean.iter().copied()).collect();
        let centered = self
            .exec
            .try_map(&jobs, |(f, m)| pk.hom_add_plain(f, &BigInt::from(-m)))?;
        // positive and negative weights accumulate separately so each row
        // needs a single inversion
        let rows: Vec<&Vec<i64>> = q.q_projection.iter().collect();
        self.exec.try_map(&rows, |row| {
            let mut pos = BigUint::one();
            let mut neg = BigUint::one();
            for (c, &w) in centered.iter().zip(row.iter()) {
                if w == 0 {
                    continue;
                }
                let p = c.value().modpow(&BigUint::from(w.unsigned_abs()), pk.n_squared());
                if w > 0 {
                    pos = pos * p % pk.n_squared();
                } else {
                    neg = neg * p % pk.n_squared();
                }
            }
            let pos = pk.ciphertext_from_residue(pos)?;
            let neg = pk.ciphertext_from_residue(neg)?;
            Ok(pk.hom_sub(&pos, &neg)?)
        })
    }

    /// `Sigma_j = Omega_j + r_j` with fresh blinds; returns the blind round.
    pub fn server_blind_features(
        &mut self,
        omega: &[Ciphertext],
    ) -> Result<(u64, Vec<Ciphertext>), ProtocolError> {
        let bits = self.params.feature_blind_bits();
        let blinds = (0..omega.len())
            .map(|_| self.draw_blind(bits))
            .collect::<Result<Vec<_>, _>>()?;
        let enc = self.encrypt_all(&blinds.iter().cloned().map(BigInt::from).collect::<Vec<_>>())?;
        let blinded = omega
            .iter()
            .zip(&enc)
            .map(|(o, r)| self.pk.hom_add(o, r))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((self.blinds.issue(blinds), blinded))
    }

    /// `sum Omega_j^2 = sum Sigma_j^2 - sum (2 r_j Omega_j + r_j^2)`.
    pub fn server_recover_square_sum(
        &mut self,
        round: u64,
        square_sum: &Ciphertext,
        omega: &[Ciphertext],
    ) -> Result<Ciphertext, ProtocolError> {
        let blinds = self.blinds.consume(round)?;
        if blinds.len() != omega.len() {
            return Err(ProtocolError::Blind(round));
        }
        let mut acc = square_sum.clone();
        let mut r_squared = BigInt::zero();
        for (o, r) in omega.iter().zip(&blinds) {
            let r = BigInt::from(r.clone());
            acc = self.pk.hom_add(&acc, &self.pk.hom_scale(o, &(-2 * &r))?)?;
            r_squared += &r * &r;
        }
        Ok(self.pk.hom_add_plain(&acc, &-r_squared)?)
    }

    /// `D_i = sum y_ij^2 - 2 sum y_ij Omega_j + sum Omega_j^2` for each gallery entry.
    pub fn server_assemble_distances(
        &mut self,
        q: &QuantizedModel,
        omega: &[Ciphertext],
        omega_square_sum: &Ciphertext,
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        if omega.len() != q.m_out() {
            return Err(ProtocolError::Parameter(format!(
                "{} features for a model with {} outputs",
                omega.len(),
                q.m_out()
            )));
        }
        let norms: Vec<BigInt> = q
            .q_gallery
            .iter()
            .map(|e| e.features.iter().map(|&y| BigInt::from(y) * y).sum())
            .collect();
        let fresh = self.encrypt_all(&norms)?;
        let pk = &self.pk;
        let inverse = omega
            .iter()
            .map(|o| pk.hom_neg(o))
            .collect::<Result<Vec<_>, _>>()?;
        let jobs: Vec<(&Ciphertext, &Vec<i64>)> = fresh
            .iter()
            .zip(q.q_gallery.iter().map(|e| &e.features))
            .collect();
        self.exec.try_map(&jobs, |(start, y)| {
            let mut acc = pk.hom_add(start, omega_square_sum)?;
            for ((o, inv), &yj) in omega.iter().zip(&inverse).zip(y.iter()) {
                if yj == 0 {
                    continue;
                }
                // -2 y Omega: raise the inverse for positive y, the original for negative
                let base = if yj > 0 { inv } else { o };
                let term = pk.hom_scale(base, &BigInt::from(2 * yj.unsigned_abs() as u128))?;
                acc = pk.hom_add(&acc, &term)?;
            }
            Ok(acc)
        })
    }

    /// Encryption of `z mod 2^l` for `0 <= z < 2^(l+1)`.
    pub fn secure_mod_reduce<T: Transport + ?Sized>(
        &mut self,
        t: &mut T,
        z: &Ciphertext,
    ) -> Result<Ciphertext, ProtocolError> {
        let bits = self.params.reduce_blind_bits();
        let r = self.draw_blind(bits)?;
        let round = self.blinds.issue(vec![r.clone()]);
        let enc_r = self.encrypt(&BigInt::from(r))?;
        let blinded = self.pk.hom_add(z, &enc_r)?;

        let reply = self.exchange(t, Message::BlindedZ(blinded.value().clone()))?;
        let (reduced, bits) = match reply {
            Message::ReducedZAndCarry { reduced, bits } => (reduced, bits),
            m => return Err(unexpected("awaiting REDUCED_Z_AND_CARRY", &m)),
        };
        if bits.len() != self.l as usize {
            return Err(ProtocolError::Parameter(format!(
                "expected {} encrypted bits, got {}",
                self.l,
                bits.len()
            )));
        }
        let r = self.blinds.consume(round)?.remove(0);
        let modulus = BigUint::one() << self.l;
        let d = &r % &modulus;
        let c = self.ciphertext(reduced)?;
        let mut result = self.pk.hom_add_plain(&c, &-BigInt::from(d.clone()))?;
        if self.carry {
            let c_bits = bits
                .into_iter()
                .map(|b| self.ciphertext(b))
                .collect::<Result<Vec<_>, _>>()?;
            let lambda = self.carry_bit(t, &c_bits, &d)?;
            let shifted = self.pk.hom_scale_mod_n(&lambda, &modulus)?;
            result = self.pk.hom_add(&result, &shifted)?;
        }
        Ok(result)
    }

    /// Encrypted `[c < d]` where the client holds `c` (sent bitwise) and the
    /// server holds `d`. Compares `2c + 1` against `2d` so the inputs never
    /// tie, under a random orientation hidden from the client.
    fn carry_bit<T: Transport + ?Sized>(
        &mut self,
        t: &mut T,
        c_bits: &[Ciphertext],
        d: &BigUint,
    ) -> Result<Ciphertext, ProtocolError> {
        let pk = self.pk.clone();
        let one = pk.encrypt_trivial(&BigInt::one())?;
        let flip: bool = self.rng.gen();
        let s = if flip { -1i64 } else { 1 };

        let width = c_bits.len() + 1;
        let c_tilde: Vec<&Ciphertext> = std::iter::once(&one).chain(c_bits.iter()).collect();
        let d_tilde: Vec<bool> = (0..width).map(|i| i > 0 && d.bit(i as u64 - 1)).collect();

        let mut terms = vec![None; width];
        let mut suffix = pk.encrypt_trivial(&BigInt::zero())?;
        for i in (0..width).rev() {
            let constant = BigInt::from(s - d_tilde[i] as i64);
            let mut e = pk.hom_add_plain(c_tilde[i], &constant)?;
            e = pk.hom_add(&e, &pk.hom_scale(&suffix, &BigInt::from(3))?)?;
            terms[i] = Some(e);
            let xor = if d_tilde[i] {
                pk.hom_sub(&one, c_tilde[i])?
            } else {
                c_tilde[i].clone()
            };
            suffix = pk.hom_add(&suffix, &xor)?;
        }

        let masks = (0..width)
            .map(|_| loop {
                let m = random_below(&mut self.rng, pk.n())?;
                if !m.is_zero() {
                    break Ok(m);
                }
            })
            .collect::<Result<Vec<BigUint>, ProtocolError>>()?;
        let nonces = (0..width)
            .map(|_| pk.random_nonce(&mut self.rng))
            .collect::<Result<Vec<_>, _>>()?;
        let jobs: Vec<(Ciphertext, BigUint, BigUint)> = terms
            .into_iter()
            .map(Option::unwrap)
            .zip(masks)
            .zip(nonces)
            .map(|((e, m), r)| (e, m, r))
            .collect();
        let mut masked = self.exec.map(&jobs, |(e, m, r)| {
            e.value().modpow(m, pk.n_squared()) * pk.nonce_power(r) % pk.n_squared()
        });
        masked.shuffle(&mut self.rng);

        let reply = self.exchange(t, Message::CarryMasked(masked))?;
        let bit = match reply {
            Message::CarryBit(b) => self.ciphertext(b)?,
            m => return Err(unexpected("awaiting CARRY_BIT", &m)),
        };
        // a zero term means c~ < d~ when s = +1 and c~ > d~ when s = -1
        Ok(if flip { pk.hom_sub(&one, &bit)? } else { bit })
    }

    /// Bit `l` of `z`, given `z mod 2^l`.
    pub fn msb_extract(&self, z: &Ciphertext, z_mod: &Ciphertext) -> Result<Ciphertext, ProtocolError> {
        let high = self.pk.hom_sub(z, z_mod)?;
        let inv = (BigUint::one() << self.l)
            .modinv(self.pk.n())
            .ok_or_else(|| ProtocolError::Parameter("2^l is not invertible".into()))?;
        Ok(self.pk.hom_scale_mod_n(&high, &inv)?)
    }

    /// Encrypted products `a * b` for each pair, in one round trip.
    pub fn secure_multiply<T: Transport + ?Sized>(
        &mut self,
        t: &mut T,
        pairs: &[(Ciphertext, Ciphertext)],
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        let bits = self.params.mul_blind_bits();
        let blinds = (0..2 * pairs.len())
            .map(|_| self.draw_blind(bits))
            .collect::<Result<Vec<_>, _>>()?;
        let round = self.blinds.issue(blinds.clone());
        let enc = self.encrypt_all(&blinds.iter().cloned().map(BigInt::from).collect::<Vec<_>>())?;
        let mut wire = Vec::with_capacity(pairs.len());
        for (k, (a, b)) in pairs.iter().enumerate() {
            let a = self.pk.hom_add(a, &enc[2 * k])?;
            let b = self.pk.hom_add(b, &enc[2 * k + 1])?;
            wire.push((a.value().clone(), b.value().clone()));
        }

        let reply = self.exchange(t, Message::MulBlind(wire))?;
        let products = match reply {
            Message::MulResult(v) if v.len() == pairs.len() => v,
            Message::MulResult(v) => {
                return Err(ProtocolError::Parameter(format!(
                    "expected {} products, got {}",
                    pairs.len(),
                    v.len()
                )))
            }
            m => return Err(unexpected("awaiting MUL_RESULT", &m)),
        };
        let blinds: Vec<BigInt> = self.blinds.consume(round)?.into_iter().map(BigInt::from).collect();
        let pk = &self.pk;
        products
            .into_iter()
            .zip(pairs)
            .zip(blinds.chunks(2))
            .map(|((p, (a, b)), r)| {
                let (ra, rb) = (&r[0], &r[1]);
                let mut acc = pk.ciphertext_from_residue(p)?;
                acc = pk.hom_add(&acc, &pk.hom_scale(a, &-rb)?)?;
                acc = pk.hom_add(&acc, &pk.hom_scale(b, &-ra)?)?;
                Ok(pk.hom_add_plain(&acc, &-(ra * rb))?)
            })
            .collect()
    }

    /// The pair with the smaller distance; `first` wins ties.
    pub fn secure_min_pair<T: Transport + ?Sized>(
        &mut self,
        t: &mut T,
        first: &(Ciphertext, Ciphertext),
        second: &(Ciphertext, Ciphertext),
    ) -> Result<(Ciphertext, Ciphertext), ProtocolError> {
        let pk = self.pk.clone();
        let offset = BigInt::one() << self.l;
        // z = 2^l + D_second - D_first, so bit l is set iff D_second >= D_first
        let z = pk.hom_add_plain(&pk.hom_sub(&second.0, &first.0)?, &offset)?;
        let z_mod = self.secure_mod_reduce(t, &z)?;
        let beta = self.msb_extract(&z, &z_mod)?;
        let d_diff = pk.hom_sub(&first.0, &second.0)?;
        let e_diff = pk.hom_sub(&first.1, &second.1)?;
        let prods = self.secure_multiply(t, &[(beta.clone(), d_diff), (beta, e_diff)])?;
        Ok((
            pk.hom_add(&prods[0], &second.0)?,
            pk.hom_add(&prods[1], &second.1)?,
        ))
    }

    /// Left fold of [`secure_min_pair`](Self::secure_min_pair) in gallery
    /// order; the earliest index wins ties.
    pub fn argmin_fold<T: Transport + ?Sized>(
        &mut self,
        t: &mut T,
        entries: Vec<(Ciphertext, Ciphertext)>,
    ) -> Result<Ciphertext, ProtocolError> {
        let mut iter = entries.into_iter();
        let mut best = iter
            .next()
            .ok_or_else(|| ProtocolError::Parameter("empty gallery".into()))?;
        for next in iter {
            best = self.secure_min_pair(t, &best, &next)?;
        }
        Ok(best.1)
    }
}

/// Summary of a completed server session.
#[derive(Clone, Debug)]
pub struct SessionReport {
    pub session_id: u64,
    pub params: SessionParams,
    pub blinds: Vec<BlindRecord>,
    pub open_rounds: Vec<u64>,
}

/// One classification served over any transport. Single use.
pub struct ServerSession {
    model: Arc<QuantizedModel>,
    config: ServerConfig,
    rng: ChaCha20Rng,
}

impl ServerSession {
    pub fn new(model: Arc<QuantizedModel>, config: ServerConfig) -> Self {
        let rng = match config.seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_entropy(),
        };
        ServerSession { model, config, rng }
    }

    /// Run to completion. On failure an ERROR frame is sent to the peer
    /// when the connection is still usable.
    pub fn run<T: Transport + ?Sized>(self, t: &mut T) -> Result<SessionReport, ProtocolError> {
        let mut session_id = 0;
        let result = self.serve(t, &mut session_id);
        if let Err(e) = &result {
            let recoverable = !matches!(
                e,
                ProtocolError::Remote { .. } | ProtocolError::Wire(crate::wire::WireError::Closed)
            );
            if recoverable {
                let frame = Frame::new(
                    session_id,
                    Message::Error {
                        code: e.code(),
                        message: e.to_string(),
                    },
                );
                let _ = t.send_bytes(&encode_frame(&frame));
            }
        }
        result
    }

    fn serve<T: Transport + ?Sized>(self, t: &mut T, session_id: &mut u64) -> Result<SessionReport, ProtocolError> {
        let q = self.model;
        let hello = decode_frame(&t.recv_bytes()?)?;
        *session_id = hello.session_id;
        let (version, modulus, kappa, pixel_count) = match hello.message {
            Message::Hello {
                version,
                modulus,
                kappa,
                pixel_count,
            } => (version, modulus, kappa, pixel_count),
            Message::Error { code, message } => return Err(ProtocolError::Remote { code, message }),
            m => return Err(unexpected("awaiting HELLO", &m)),
        };
        if version != PROTOCOL_VERSION {
            return Err(ProtocolError::Version(version));
        }
        let pk = PublicKey::from_modulus(modulus)?;
        if pk.bit_length() < MIN_KEY_BITS {
            return Err(crate::paillier::PaillierError::KeyTooSmall(pk.bit_length()).into());
        }
        if pixel_count as usize != q.pixel_count() {
            return Err(ProtocolError::Parameter(format!(
                "client image has {pixel_count} pixels, model expects {}",
                q.pixel_count()
            )));
        }
        let params = SessionParams {
            l: q.l,
            kappa: kappa.max(self.config.kappa),
            m_out: q.m_out(),
            n: q.pixel_count(),
            gallery_size: q.q_gallery.len(),
            class_count: q.class_count(),
            key_id: pk.key_id(),
            key_bits: pk.bit_length(),
        };
        params.validate()?;

        let mut engine = ServerEngine::new(
            pk,
            params.clone(),
            hello.session_id,
            self.rng,
            self.config.exec,
        );
        engine.send(
            t,
            Message::Accept {
                l: params.l,
                kappa: params.kappa,
                m_out: params.m_out as u32,
                gallery_size: params.gallery_size as u32,
                labels: q.label_names.clone(),
            },
        )?;

        let mut image: Vec<Ciphertext> = Vec::with_capacity(params.n);
        while image.len() < params.n {
            match engine.receive(t)? {
                Message::EncImageChunk {
                    offset,
                    total,
                    ciphertexts,
                } => {
                    let fits = image.len() + ciphertexts.len() <= params.n;
                    if offset as usize != image.len() || total as usize != params.n || ciphertexts.is_empty() || !fits {
                        return Err(ProtocolError::Parameter(format!(
                            "bad image chunk at offset {offset} of {total}"
                        )));
                    }
                    for c in ciphertexts {
                        image.push(engine.ciphertext(c)?);
                    }
                }
                m => return Err(unexpected("receiving the encrypted image", &m)),
            }
        }

        let omega = engine.server_project_encrypted(&q, &image)?;
        let (round, blinded) = engine.server_blind_features(&omega)?;
        let reply = engine.exchange(
            t,
            Message::BlindedFeatures(blinded.iter().map(|c| c.value().clone()).collect()),
        )?;
        let square_sum = match reply {
            Message::SquareSum(s) => engine.ciphertext(s)?,
            m => return Err(unexpected("awaiting SQUARE_SUM", &m)),
        };
        let omega_sq = engine.server_recover_square_sum(round, &square_sum, &omega)?;
        let distances = engine.server_assemble_distances(&q, &omega, &omega_sq)?;
        let labels: Vec<BigInt> = q.q_gallery.iter().map(|e| BigInt::from(e.label)).collect();
        let labels = engine.encrypt_all(&labels)?;
        let label = engine.argmin_fold(t, distances.into_iter().zip(labels).collect())?;
        let label = engine.pk.rerandomize(&label, &mut engine.rng)?;
        engine.send(t, Message::ResultLabel(label.value().clone()))?;

        Ok(SessionReport {
            session_id: hello.session_id,
            params,
            blinds: engine.blind_log().to_vec(),
            open_rounds: engine.open_rounds(),
        })
    }
}

impl std::fmt::Debug for ServerEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerEngine")
            .field("key_id", &self.pk.key_id())
            .field("l", &self.l)
            .field("kappa", &self.kappa)
            .field("session_id", &self.session_id)
            .finish_non_exhaustive()
    }
}
