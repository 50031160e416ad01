//! Coins as signed transfer chains.
//!
//! A coin starts life as a bare identifier owned by some node. Every spend
//! appends a [`SpendRecord`] signed by the current owner over the previous
//! coin encoding, a receiver-issued nonce and the receiver's id. The coin-id
//! never changes, so all versions of one coin share a key in clerk databases.
//!
//! # Canonical encoding
//!
//! All integers are big-endian. Layout of [`Coin::encode`]:
//!
//! ```text
//! u8      version (= 1)
//! u32     cid length, then cid bytes (32)
//! u32     genesis owner
//! u32     number of records
//! per record:
//!   u32   sender
//!   u32   receiver
//!   [16]  nonce
//!   u32   signature length, then signature bytes (32)
//! ```
//!
//! The signed message for a spend is
//! `u32 len(prev) ‖ prev encoding ‖ nonce[16] ‖ u32 receiver`.

use std::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::CoinError;

pub const ENCODING_VERSION: u8 = 1;
pub const COIN_ID_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 32;

/// Index of a node in the population, `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(u32::try_from(i).expect("node index exceeds u32"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

macro_rules! hex_serde {
    ($ty:ident) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&hex::encode(self.as_bytes()))
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
                $ty::from_slice(&bytes).map_err(serde::de::Error::custom)
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&hex::encode(self.as_bytes()))
            }
        }
    };
}

/// Genesis identifier of a coin; the shortest prefix of every version of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoinId([u8; COIN_ID_LEN]);

impl CoinId {
    pub fn new(bytes: [u8; COIN_ID_LEN]) -> Self {
        CoinId(bytes)
    }

    /// Parses a raw identifier. Anything but exactly 32 bytes is malformed.
    pub fn from_slice(bytes: &[u8]) -> Result<Self, CoinError> {
        let arr: [u8; COIN_ID_LEN] = bytes.try_into().map_err(|_| CoinError::MalformedCoinId(bytes.len()))?;
        Ok(CoinId(arr))
    }

    /// Hashes arbitrary minting material down to a coin-id.
    pub fn derive(material: &[u8]) -> Self {
        CoinId(Sha256::digest(material).into())
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; COIN_ID_LEN];
        rng.fill_bytes(&mut bytes);
        CoinId(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

hex_serde!(CoinId);

/// Receiver-issued challenge, fresh per receive event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Nonce([u8; 16]);

impl Nonce {
    pub fn new(value: u128) -> Self {
        Nonce(value.to_be_bytes())
    }

    pub fn generate<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Nonce::new(rng.gen())
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CoinError> {
        let arr: [u8; 16] = bytes.try_into().map_err(|_| CoinError::MalformedField("nonce"))?;
        Ok(Nonce(arr))
    }

    pub fn value(&self) -> u128 {
        u128::from_be_bytes(self.0)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

hex_serde!(Nonce);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature([u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, CoinError> {
        let arr: [u8; SIGNATURE_LEN] = bytes.try_into().map_err(|_| CoinError::MalformedField("signature"))?;
        Ok(Signature(arr))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

hex_serde!(Signature);

/// Signing capability of one node.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    node: NodeId,
    secret: [u8; 32],
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("node", &self.node).finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn new(node: NodeId, secret: [u8; 32]) -> Self {
        KeyPair { node, secret }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    /// Keyed tag: SHA-256(secret ‖ message).
    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(keyed_tag(&self.secret, message))
    }
}

fn keyed_tag(secret: &[u8; 32], message: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(secret);
    h.update(message);
    h.finalize().into()
}

/// Anything that can check a node's signature (the PKI of the model).
pub trait Verifier {
    fn verify(&self, signer: NodeId, message: &[u8], signature: &Signature) -> bool;
}

/// Deterministic key registry standing in for a network-wide PKI.
///
/// Secrets are derived from a registry seed, so every node can recompute the
/// tag of any other node; this is a simulation scheme, not a real signature.
#[derive(Debug, Clone)]
pub struct KeyRegistry {
    keys: Vec<KeyPair>,
}

impl KeyRegistry {
    pub fn new(n: usize, seed: u64) -> Self {
        let keys = (0..n)
            .map(|i| {
                let mut material = Vec::with_capacity(20);
                material.extend_from_slice(b"key:");
                material.extend_from_slice(&seed.to_be_bytes());
                material.extend_from_slice(&(i as u64).to_be_bytes());
                KeyPair::new(NodeId::from(i), Sha256::digest(&material).into())
            })
            .collect();
        KeyRegistry { keys }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keypair(&self, node: NodeId) -> Option<&KeyPair> {
        self.keys.get(node.index())
    }
}

impl Verifier for KeyRegistry {
    fn verify(&self, signer: NodeId, message: &[u8], signature: &Signature) -> bool {
        match self.keys.get(signer.index()) {
            Some(k) => keyed_tag(&k.secret, message) == signature.0,
            None => false,
        }
    }
}

/// One transfer `c_{i+1} = sig_s(c_i, z, r)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpendRecord {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub nonce: Nonce,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coin {
    cid: CoinId,
    genesis_owner: NodeId,
    chain: Vec<SpendRecord>,
}

/// Unspent coin: just its identifier, owned by `owner`.
pub fn make_genesis_coin(cid: CoinId, owner: NodeId) -> Coin {
    Coin { cid, genesis_owner: owner, chain: Vec::new() }
}

impl Coin {
    /// Builds a coin from raw parts without checking anything. Use
    /// [`Coin::verify_chain`] before trusting the result.
    pub fn from_parts(cid: CoinId, genesis_owner: NodeId, chain: Vec<SpendRecord>) -> Self {
        Coin { cid, genesis_owner, chain }
    }

    pub fn cid(&self) -> CoinId {
        self.cid
    }

    pub fn genesis_owner(&self) -> NodeId {
        self.genesis_owner
    }

    pub fn chain(&self) -> &[SpendRecord] {
        &self.chain
    }

    pub fn chain_mut(&mut self) -> &mut Vec<SpendRecord> {
        &mut self.chain
    }

    /// Number of transfers in the chain.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_genesis(&self) -> bool {
        self.chain.is_empty()
    }

    pub fn owner(&self) -> NodeId {
        self.chain.last().map_or(self.genesis_owner, |r| r.receiver)
    }

    /// The coin as it was after its first `len` spends.
    pub fn truncated(&self, len: usize) -> Coin {
        Coin {
            cid: self.cid,
            genesis_owner: self.genesis_owner,
            chain: self.chain[..len.min(self.chain.len())].to_vec(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        self.encode_prefix(self.chain.len())
    }

    fn encode_prefix(&self, len: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + 4 + COIN_ID_LEN + 8 + len * 60);
        out.push(ENCODING_VERSION);
        out.extend_from_slice(&(COIN_ID_LEN as u32).to_be_bytes());
        out.extend_from_slice(self.cid.as_bytes());
        out.extend_from_slice(&self.genesis_owner.0.to_be_bytes());
        out.extend_from_slice(&(len as u32).to_be_bytes());
        for rec in &self.chain[..len] {
            out.extend_from_slice(&rec.sender.0.to_be_bytes());
            out.extend_from_slice(&rec.receiver.0.to_be_bytes());
            out.extend_from_slice(rec.nonce.as_bytes());
            out.extend_from_slice(&(SIGNATURE_LEN as u32).to_be_bytes());
            out.extend_from_slice(rec.signature.as_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Coin, CoinError> {
        let mut rd = Reader { bytes, pos: 0 };
        let version = rd.take(1)?[0];
        if version != ENCODING_VERSION {
            return Err(CoinError::UnsupportedVersion(version));
        }
        let cid_len = rd.u32()? as usize;
        let cid = CoinId::from_slice(rd.take(cid_len)?)?;
        let genesis_owner = NodeId(rd.u32()?);
        let count = rd.u32()? as usize;
        let mut chain = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let sender = NodeId(rd.u32()?);
            let receiver = NodeId(rd.u32()?);
            let nonce = Nonce::from_slice(rd.take(16)?)?;
            let sig_len = rd.u32()? as usize;
            let signature = Signature::from_slice(rd.take(sig_len)?)?;
            chain.push(SpendRecord { sender, receiver, nonce, signature });
        }
        if rd.pos != bytes.len() {
            return Err(CoinError::TrailingBytes);
        }
        Ok(Coin { cid, genesis_owner, chain })
    }

    /// Hands the coin to `receiver`. The caller plays `sender`, which must be
    /// the current owner and must hold its own key.
    pub fn spend_extend(
        &self,
        sender: NodeId,
        key: &KeyPair,
        receiver: NodeId,
        nonce: Nonce,
    ) -> Result<Coin, CoinError> {
        let owner = self.owner();
        if sender != owner {
            return Err(CoinError::NotOwner { sender, owner });
        }
        if key.node() != sender {
            return Err(CoinError::KeyMismatch { sender, key: key.node() });
        }
        let signature = key.sign(&spend_message(&self.encode(), nonce, receiver));
        let mut chain = self.chain.clone();
        chain.push(SpendRecord { sender, receiver, nonce, signature });
        Ok(Coin { cid: self.cid, genesis_owner: self.genesis_owner, chain })
    }

    /// Every signature verifies and every sender owned the coin it signed.
    pub fn verify_chain(&self, verifier: &impl Verifier) -> bool {
        let mut owner = self.genesis_owner;
        for (k, rec) in self.chain.iter().enumerate() {
            if rec.sender != owner {
                return false;
            }
            let msg = spend_message(&self.encode_prefix(k), rec.nonce, rec.receiver);
            if !verifier.verify(rec.sender, &msg, &rec.signature) {
                return false;
            }
            owner = rec.receiver;
        }
        true
    }

    /// `self ⇒ other`: other extends self by at least one spend.
    pub fn is_prefix_of(&self, other: &Coin) -> bool {
        self.cid == other.cid
            && self.genesis_owner == other.genesis_owner
            && self.chain.len() < other.chain.len()
            && other.chain[..self.chain.len()] == self.chain[..]
    }

    pub fn is_immediate_prefix_of(&self, other: &Coin) -> bool {
        self.chain.len() + 1 == other.chain.len() && self.is_prefix_of(other)
    }
}

pub fn spend_message(prev_encoding: &[u8], nonce: Nonce, receiver: NodeId) -> Vec<u8> {
    let mut msg = Vec::with_capacity(prev_encoding.len() + 24);
    msg.extend_from_slice(&(prev_encoding.len() as u32).to_be_bytes());
    msg.extend_from_slice(prev_encoding);
    msg.extend_from_slice(nonce.as_bytes());
    msg.extend_from_slice(&receiver.0.to_be_bytes());
    msg
}

pub fn coin_id_of(coin: &Coin) -> CoinId {
    coin.cid
}

pub fn is_prefix(c: &Coin, c2: &Coin) -> bool {
    c.is_prefix_of(c2)
}

/// Same coin-id, distinct, and neither extends the other.
pub fn is_double_spend_pair(c1: &Coin, c2: &Coin) -> bool {
    c1.cid == c2.cid && c1 != c2 && !c1.is_prefix_of(c2) && !c2.is_prefix_of(c1)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], CoinError> {
        let end = self.pos.checked_add(len).ok_or(CoinError::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(CoinError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CoinError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}
