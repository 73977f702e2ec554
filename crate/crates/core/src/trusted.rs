//! Trusted-node extensions to Brahms.
//!
//! Three pieces live here:
//!
//! * a three-message challenge/response handshake that lets two holders of
//!   the shared trusted key recognise each other while looking identical, on
//!   the wire, to a handshake between untrusted nodes;
//! * the half-view swap two authenticated trusted nodes perform in place of
//!   a plain pull;
//! * eviction of part of the IDs pulled from untrusted nodes, at a fixed or
//!   adaptive rate.
//!
//! The hash is SHA-256 and the cipher is AES-256 in CTR mode, with the
//! first nonce of the hashed pair as IV, so every tag is a deterministic
//! function of `(key, nonces)`.

use aes::cipher::{KeyIvInit, StreamCipher};
use rand::seq::index;
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::brahms::{View, ViewEntry};
use crate::id::NodeId;

type Aes256Ctr = ctr::Ctr128BE<aes::Aes256>;

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 16;
pub const TAG_LEN: usize = 32;

/// Symmetric key. Trusted nodes share one; everybody else draws their own.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; KEY_LEN]);

impl SecretKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        SecretKey(bytes)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut k = [0u8; KEY_LEN];
        rng.fill(&mut k[..]);
        SecretKey(k)
    }
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

pub type Nonce = [u8; NONCE_LEN];
pub type Tag = [u8; TAG_LEN];

fn digest(first: &Nonce, second: &Nonce) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(first);
    h.update(second);
    h.finalize().into()
}

/// AES-256-CTR over 32 bytes. CTR is an involution, so this both encrypts and
/// decrypts.
fn apply_keystream(key: &SecretKey, first: &Nonce, data: [u8; 32]) -> [u8; 32] {
    let mut buf = data;
    let mut cipher = Aes256Ctr::new((&key.0).into(), first.into());
    cipher.apply_keystream(&mut buf);
    buf
}

/// `[H(first‖second)]_key`
pub fn seal_digest(key: &SecretKey, first: &Nonce, second: &Nonce) -> Tag {
    apply_keystream(key, first, digest(first, second))
}

/// Decrypts `tag` with `key` and compares it with `H(first‖second)`.
pub fn open_digest(key: &SecretKey, first: &Nonce, second: &Nonce, tag: &Tag) -> bool {
    apply_keystream(key, first, *tag) == digest(first, second)
}

/// Message 1, initiator to responder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Challenge {
    pub r_a: Nonce,
}

/// Message 2, responder to initiator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Response {
    pub r_b: Nonce,
    pub tag_b: Tag,
}

/// Message 3, initiator to responder.
///
/// Always sent. After a failed check the initiator sends random bytes of the
/// same length, which the responder cannot tell apart from a ciphertext
/// produced under a foreign key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Confirm {
    pub tag_a: Tag,
}

impl Challenge {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.r_a.to_vec()
    }
}

impl Response {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = self.r_b.to_vec();
        v.extend_from_slice(&self.tag_b);
        v
    }
}

impl Confirm {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.tag_a.to_vec()
    }
}

/// Initiator side of the handshake.
pub struct Initiator<'k> {
    key: &'k SecretKey,
    r_a: Nonce,
}

impl<'k> Initiator<'k> {
    pub fn start<R: Rng + ?Sized>(key: &'k SecretKey, rng: &mut R) -> (Self, Challenge) {
        let mut r_a = [0u8; NONCE_LEN];
        rng.fill(&mut r_a[..]);
        (Initiator { key, r_a }, Challenge { r_a })
    }

    /// Checks the response. Returns whether the peer is trusted and the
    /// confirmation to send back.
    pub fn finish<R: Rng + ?Sized>(self, resp: &Response, rng: &mut R) -> (bool, Confirm) {
        let trusts = open_digest(self.key, &self.r_a, &resp.r_b, &resp.tag_b);
        let tag_a = if trusts {
            seal_digest(self.key, &resp.r_b, &self.r_a)
        } else {
            let mut filler = [0u8; TAG_LEN];
            rng.fill(&mut filler[..]);
            filler
        };
        (trusts, Confirm { tag_a })
    }
}

/// Responder side of the handshake.
pub struct Responder<'k> {
    key: &'k SecretKey,
    r_a: Nonce,
    r_b: Nonce,
}

impl<'k> Responder<'k> {
    pub fn respond<R: Rng + ?Sized>(key: &'k SecretKey, ch: &Challenge, rng: &mut R) -> (Self, Response) {
        let mut r_b = [0u8; NONCE_LEN];
        rng.fill(&mut r_b[..]);
        let tag_b = seal_digest(key, &ch.r_a, &r_b);
        (
            Responder {
                key,
                r_a: ch.r_a,
                r_b,
            },
            Response { r_b, tag_b },
        )
    }

    pub fn finish(self, confirm: &Confirm) -> bool {
        open_digest(self.key, &self.r_b, &self.r_a, &confirm.tag_a)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HandshakeTranscript {
    pub challenge: Challenge,
    pub response: Response,
    pub confirm: Confirm,
}

impl HandshakeTranscript {
    pub fn message_lengths(&self) -> [usize; 3] {
        [
            self.challenge.to_bytes().len(),
            self.response.to_bytes().len(),
            self.confirm.to_bytes().len(),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct HandshakeOutcome {
    pub initiator_trusts: bool,
    pub responder_trusts: bool,
    pub transcript: HandshakeTranscript,
}

/// Runs all three messages between two in-process parties.
pub fn handshake<R: Rng + ?Sized>(
    initiator_key: &SecretKey,
    responder_key: &SecretKey,
    rng: &mut R,
) -> HandshakeOutcome {
    let (a, challenge) = Initiator::start(initiator_key, rng);
    let (b, response) = Responder::respond(responder_key, &challenge, rng);
    let (initiator_trusts, confirm) = a.finish(&response, rng);
    let responder_trusts = b.finish(&confirm);
    HandshakeOutcome {
        initiator_trusts,
        responder_trusts,
        transcript: HandshakeTranscript {
            challenge,
            response,
            confirm,
        },
    }
}

/// Result of a half-view swap.
#[derive(Clone, Debug)]
pub struct Exchange {
    pub initiator_view: View,
    pub responder_view: View,
    pub received_by_initiator: Vec<NodeId>,
    pub received_by_responder: Vec<NodeId>,
}

/// Shuffle-style half-view swap between two authenticated trusted nodes.
///
/// Each side sends a uniformly random half of its view; the initiator first
/// overwrites one entry of its half with its own ID. Sent entries are
/// replaced, slot for slot, by the received ones, so both views keep their
/// length. A received ID equal to the receiver's own ID leaves the sent entry
/// in place. Views shorter than two entries skip the exchange.
pub fn trusted_exchange<R: Rng + ?Sized>(initiator_view: &View, responder_view: &View, rng: &mut R) -> Exchange {
    let half = (initiator_view.len() / 2).min(responder_view.len() / 2);
    if initiator_view.len() < 2 || responder_view.len() < 2 || half == 0 {
        return Exchange {
            initiator_view: initiator_view.clone(),
            responder_view: responder_view.clone(),
            received_by_initiator: Vec::new(),
            received_by_responder: Vec::new(),
        };
    }

    let init_slots = index::sample(rng, initiator_view.len(), half).into_vec();
    let resp_slots = index::sample(rng, responder_view.len(), half).into_vec();

    let mut from_initiator: Vec<NodeId> = init_slots
        .iter()
        .map(|&i| initiator_view.entries()[i].id)
        .collect();
    let self_slot = rng.gen_range(0..half);
    from_initiator[self_slot] = initiator_view.owner();

    let from_responder: Vec<NodeId> = resp_slots
        .iter()
        .map(|&i| responder_view.entries()[i].id)
        .collect();

    let splice = |view: &View, slots: &[usize], incoming: &[NodeId]| {
        let mut entries = view.entries().to_vec();
        for (&slot, &id) in slots.iter().zip(incoming) {
            if id != view.owner() {
                entries[slot] = ViewEntry::fresh(id);
            }
        }
        View::from_entries(view.owner(), entries)
    };

    Exchange {
        initiator_view: splice(initiator_view, &init_slots, &from_responder),
        responder_view: splice(responder_view, &resp_slots, &from_initiator),
        received_by_initiator: from_responder,
        received_by_responder: from_initiator,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvictionPolicy {
    /// Evict the same share of untrusted pulled IDs every round.
    Fixed(f64),
    /// Evict according to the share of trusted pull partners this round.
    Adaptive,
}

impl EvictionPolicy {
    pub fn rate(&self, trusted_partners: usize, total_pull_partners: usize) -> f64 {
        match *self {
            EvictionPolicy::Fixed(r) => r,
            EvictionPolicy::Adaptive => adaptive_eviction_rate(trusted_partners, total_pull_partners),
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, EvictionPolicy::Adaptive)
    }
}

impl std::fmt::Display for EvictionPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvictionPolicy::Fixed(r) => write!(f, "{r:.6}"),
            EvictionPolicy::Adaptive => f.write_str("adaptive"),
        }
    }
}

pub const MIN_ADAPTIVE_RATE: f64 = 0.20;
pub const MAX_ADAPTIVE_RATE: f64 = 0.80;

/// `clamp(1 - p, 0.2, 0.8)` with `p` the share of trusted pull partners.
/// No partners at all means maximum caution.
pub fn adaptive_eviction_rate(trusted_partners: usize, total_pull_partners: usize) -> f64 {
    if total_pull_partners == 0 {
        return MAX_ADAPTIVE_RATE;
    }
    let p = trusted_partners.min(total_pull_partners) as f64 / total_pull_partners as f64;
    (1.0 - p).clamp(MIN_ADAPTIVE_RATE, MAX_ADAPTIVE_RATE)
}

/// Number of IDs kept out of `k` at eviction rate `rate`.
pub fn survivors(k: usize, rate: f64) -> usize {
    let keep = (1.0 - rate.clamp(0.0, 1.0)) * k as f64;
    ((keep + 1e-9).floor() as usize).min(k)
}

/// Keeps a uniformly random subsequence of `⌊(1 - rate)·k⌋` IDs, in their
/// original order.
pub fn evict<R: Rng + ?Sized>(pulled: &[NodeId], rate: f64, rng: &mut R) -> Vec<NodeId> {
    let keep = survivors(pulled.len(), rate);
    if keep == pulled.len() {
        return pulled.to_vec();
    }
    let mut idx = index::sample(rng, pulled.len(), keep).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pulled[i]).collect()
}
