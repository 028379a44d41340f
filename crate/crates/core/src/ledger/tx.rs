use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::entityreg::{AccountId, EntityId};
use crate::primitives::{
    Commitment, Credential, Element, Group, RangeProof, RingSignature, Scalar, Transcript,
};

pub const TAG_TX: &[u8] = b"pvx/tx";
pub const TAG_EXCESS: &[u8] = b"pvx/excess";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TxKind {
    TransparentTransfer,
    Shield,
    Unshield,
    ShieldedTransfer,
    MediatedBatch,
    Issue,
}

impl TxKind {
    pub const ALL: [TxKind; 6] = [
        TxKind::TransparentTransfer,
        TxKind::Shield,
        TxKind::Unshield,
        TxKind::ShieldedTransfer,
        TxKind::MediatedBatch,
        TxKind::Issue,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TxKind::TransparentTransfer => "TransparentTransfer",
            TxKind::Shield => "Shield",
            TxKind::Unshield => "Unshield",
            TxKind::ShieldedTransfer => "ShieldedTransfer",
            TxKind::MediatedBatch => "MediatedBatch",
            TxKind::Issue => "Issue",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    fn code(&self) -> u8 {
        *self as u8
    }

    /// Kinds whose balance is proven over commitments rather than cleartext.
    pub fn is_confidential(&self) -> bool {
        matches!(
            self,
            TxKind::Shield | TxKind::Unshield | TxKind::ShieldedTransfer | TxKind::MediatedBatch
        )
    }
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransparentInput {
    pub account: AccountId,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransparentOutput {
    pub account: AccountId,
    pub amount: u64,
    pub owner: EntityId,
}

/// Spend of one member of a ring of earlier outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShieldedInput {
    /// Global output indices, strictly increasing.
    pub ring: Vec<u64>,
    /// Re-randomized commitment to the spent amount.
    pub pseudo_commitment: Commitment,
    pub signature: RingSignature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShieldedOutput {
    pub one_time_address: Element,
    pub ephemeral_public: Element,
    pub commitment: Commitment,
    pub range_proof: RangeProof,
    pub encrypted_amount: [u8; 8],
}

/// Schnorr proof of knowledge of `z` with `G^z` equal to the commitment
/// remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExcessSignature {
    pub nonce_commitment: Element,
    pub response: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub kind: TxKind,
    pub transparent_inputs: Vec<TransparentInput>,
    pub transparent_outputs: Vec<TransparentOutput>,
    pub shielded_inputs: Vec<ShieldedInput>,
    pub shielded_outputs: Vec<ShieldedOutput>,
    pub fee: u64,
    pub credentials: Vec<Credential>,
    /// Intermediary posting a mediated batch, or the issuer of new money.
    pub authority: Option<EntityId>,
    /// Distinguishes otherwise identical transparent payments.
    pub nonce: u64,
    pub excess: Option<ExcessSignature>,
}

pub type TxId = [u8; 32];

/// Length-prefixed field writer used for digests and state snapshots.
#[derive(Default)]
pub struct Encoder {
    pub buf: Vec<u8>,
}

impl Encoder {
    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(&(b.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(b);
        self
    }

    pub fn u64(&mut self, x: u64) -> &mut Self {
        self.buf.extend_from_slice(&x.to_be_bytes());
        self
    }

    pub fn count(&mut self, n: usize) -> &mut Self {
        self.buf.extend_from_slice(&(n as u32).to_be_bytes());
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn element(&mut self, g: &Group, e: &Element) -> &mut Self {
        let b = g.element_to_bytes(e);
        self.bytes(&b)
    }

    pub fn scalar(&mut self, g: &Group, s: &Scalar) -> &mut Self {
        let b = g.scalar_to_bytes(s);
        self.bytes(&b)
    }

    pub fn opt_str(&mut self, s: Option<&str>) -> &mut Self {
        match s {
            None => self.buf.push(0),
            Some(s) => {
                self.buf.push(1);
                self.str(s);
            }
        }
        self
    }
}

pub fn encode_range_proof(enc: &mut Encoder, g: &Group, p: &RangeProof) {
    enc.u64(p.bits as u64).count(p.bit_proofs.len());
    for b in &p.bit_proofs {
        enc.element(g, b.commitment.element())
            .scalar(g, &b.c0)
            .scalar(g, &b.c1)
            .scalar(g, &b.s0)
            .scalar(g, &b.s1);
    }
}

pub fn encode_credential(enc: &mut Encoder, g: &Group, c: &Credential) {
    enc.str(&c.attribute)
        .bytes(&c.serial)
        .element(g, &c.commitment)
        .scalar(g, &c.response);
}

impl Transaction {
    /// Canonical field-ordered encoding. Ring signature challenge/responses
    /// and the excess signature are included only when `with_signatures`.
    pub fn encode(&self, g: &Group, with_signatures: bool) -> Vec<u8> {
        let mut e = Encoder::default();
        e.buf.push(self.kind.code());
        e.count(self.transparent_inputs.len());
        for i in &self.transparent_inputs {
            e.str(&i.account.0).u64(i.amount);
        }
        e.count(self.transparent_outputs.len());
        for o in &self.transparent_outputs {
            e.str(&o.account.0).u64(o.amount).str(&o.owner.0);
        }
        e.count(self.shielded_inputs.len());
        for i in &self.shielded_inputs {
            e.count(i.ring.len());
            for idx in &i.ring {
                e.u64(*idx);
            }
            e.element(g, i.pseudo_commitment.element())
                .element(g, &i.signature.key_image);
            if with_signatures {
                let b = i.signature.to_bytes(g);
                e.bytes(&b);
            }
        }
        e.count(self.shielded_outputs.len());
        for o in &self.shielded_outputs {
            e.element(g, &o.one_time_address)
                .element(g, &o.ephemeral_public)
                .element(g, o.commitment.element());
            encode_range_proof(&mut e, g, &o.range_proof);
            e.bytes(&o.encrypted_amount);
        }
        e.u64(self.fee);
        e.count(self.credentials.len());
        for c in &self.credentials {
            encode_credential(&mut e, g, c);
        }
        e.opt_str(self.authority.as_ref().map(|a| a.0.as_str()));
        e.u64(self.nonce);
        if with_signatures {
            match &self.excess {
                None => e.buf.push(0),
                Some(x) => {
                    e.buf.push(1);
                    e.element(g, &x.nonce_commitment).scalar(g, &x.response);
                }
            }
        }
        e.buf
    }

    /// Message covered by ring and excess signatures.
    pub fn signing_digest(&self, g: &Group) -> [u8; 32] {
        let mut t = Transcript::new(TAG_TX);
        t.append(b"sign").append(&self.encode(g, false));
        t.digest()
    }

    pub fn id(&self, g: &Group) -> TxId {
        let mut t = Transcript::new(TAG_TX);
        t.append(b"id").append(&self.encode(g, true));
        t.digest()
    }

    pub fn key_images(&self) -> impl Iterator<Item = &Element> {
        self.shielded_inputs.iter().map(|i| &i.signature.key_image)
    }

    pub fn transparent_in_total(&self) -> Option<u64> {
        self.transparent_inputs
            .iter()
            .try_fold(0u64, |acc, i| acc.checked_add(i.amount))
    }

    pub fn transparent_out_total(&self) -> Option<u64> {
        self.transparent_outputs
            .iter()
            .try_fold(0u64, |acc, o| acc.checked_add(o.amount))
    }
}

pub fn excess_challenge(g: &Group, excess: &Element, nonce: &Element, digest: &[u8]) -> Scalar {
    let mut t = Transcript::new(TAG_EXCESS);
    t.append_element(g, excess)
        .append_element(g, nonce)
        .append(digest);
    t.challenge(g)
}

pub fn short_hex(id: &[u8]) -> String {
    hex::encode(&id[..id.len().min(8)])
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}
