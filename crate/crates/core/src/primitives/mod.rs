//! Cryptographic building blocks over a prime-order group.

mod credential;
mod group;
mod pedersen;
mod range;
mod ring;
mod stealth;

pub use credential::{
    credential_finalize, credential_issue, credential_request, credential_verify, BlindRequest,
    BlindSignature, Credential, HolderSession, IssuerKeypair, IssuerSession, SERIAL_LEN,
};
pub use group::{
    Element, Group, GroupParams, Profile, Scalar, Transcript, TAG_CRED, TAG_H, TAG_RANGE, TAG_RING,
    TAG_STEALTH,
};
pub use pedersen::{add_commitments, commit, negate_commitment, verify_opening, Commitment};
pub use range::{prove_range, verify_range, BitProof, RangeProof};
pub use ring::{
    key_image, ring_sign, ring_sign_with_commitments, ring_verify, ring_verify_with_commitments,
    signatures_linked, RingSignature,
};
pub use stealth::{
    amount_mask, derive_stealth_keypair, make_onetime_output, output_blinding, scan_output,
    OneTimeOutputKeys, StealthAddress, StealthKeypair,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("scalar out of range")]
    ScalarOutOfRange,
    #[error("value does not fit in {bits} bits")]
    ValueOutOfRange { bits: u32 },
    #[error("range width of {bits} bits does not fit below the group order")]
    RangeTooWide { bits: u32 },
    #[error("element is not in the prime-order subgroup")]
    NotInGroup,
    #[error("expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
    #[error("ring index {index} out of bounds for ring of {size}")]
    IndexOutOfBounds { index: usize, size: usize },
    #[error("secret key does not match ring member")]
    KeyMismatch,
    #[error("commitment offset does not open to zero amount")]
    CommitmentMismatch,
    #[error("empty ring")]
    EmptyRing,
    #[error("issuer response failed verification")]
    BadIssuerResponse,
}
