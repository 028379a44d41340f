//! Single-attribute eligibility credentials from blind Schnorr signatures.
//!
//! Flow: the issuer opens a session and publishes a nonce commitment `R`;
//! the holder blinds it with `(alpha, beta)` and sends the challenge
//! `c = H(R', X, attr, serial) + beta`; the issuer answers `s = k + c x`;
//! the holder unblinds to `s' = s + alpha`. The final `(R', s')` verifies as
//! `G^s' == R' * X^c'` and is independent of what the issuer saw.

use rand::RngCore;

use super::{CryptoError, Element, Group, Scalar, TAG_CRED};

pub const SERIAL_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuerKeypair {
    pub secret: Scalar,
    pub public: Element,
}

impl IssuerKeypair {
    pub fn derive(group: &Group, seed: &[u8]) -> Self {
        let secret = group.hash_to_nonzero_scalar(TAG_CRED, &[b"issuer", seed]);
        IssuerKeypair {
            public: group.exp_g(&secret),
            secret,
        }
    }
}

/// Issuer-side state for one issuance.
#[derive(Debug, Clone)]
pub struct IssuerSession {
    nonce: Scalar,
    pub commitment: Element,
}

impl IssuerSession {
    pub fn open<R: RngCore + ?Sized>(group: &Group, rng: &mut R) -> Self {
        let nonce = group.random_nonzero_scalar(rng);
        IssuerSession {
            commitment: group.exp_g(&nonce),
            nonce,
        }
    }
}

/// What the issuer receives from the holder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindRequest {
    pub challenge: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindSignature {
    pub response: Scalar,
}

/// Holder-side state kept between request and finalize.
#[derive(Debug, Clone)]
pub struct HolderSession {
    attribute: String,
    serial: [u8; SERIAL_LEN],
    alpha: Scalar,
    blinded_commitment: Element,
    issuer_commitment: Element,
    issuer_public: Element,
    request: BlindRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Credential {
    pub attribute: String,
    pub serial: [u8; SERIAL_LEN],
    pub commitment: Element,
    pub response: Scalar,
}

fn credential_challenge(
    group: &Group,
    commitment: &Element,
    issuer_public: &Element,
    attribute: &str,
    serial: &[u8],
) -> Scalar {
    let r = group.element_to_bytes(commitment);
    let x = group.element_to_bytes(issuer_public);
    group.hash_to_scalar(TAG_CRED, &[&r, &x, attribute.as_bytes(), serial])
}

/// Holder: picks a fresh serial and blinding factors, returns the request for
/// the issuer and the state needed to finalize.
pub fn credential_request<R: RngCore + ?Sized>(
    group: &Group,
    issuer_public: &Element,
    issuer_commitment: &Element,
    attribute: &str,
    rng: &mut R,
) -> (BlindRequest, HolderSession) {
    let mut serial = [0u8; SERIAL_LEN];
    rng.fill_bytes(&mut serial);
    let alpha = group.random_scalar(rng);
    let beta = group.random_scalar(rng);
    let blinded = group.mul(
        &group.mul(issuer_commitment, &group.exp_g(&alpha)),
        &group.exp(issuer_public, &beta),
    );
    let c_prime = credential_challenge(group, &blinded, issuer_public, attribute, &serial);
    let request = BlindRequest {
        challenge: group.add(&c_prime, &beta),
    };
    let session = HolderSession {
        attribute: attribute.to_string(),
        serial,
        alpha,
        blinded_commitment: blinded,
        issuer_commitment: issuer_commitment.clone(),
        issuer_public: issuer_public.clone(),
        request: request.clone(),
    };
    (request, session)
}

/// Issuer: signs the blinded challenge. Eligibility is checked out of band.
pub fn credential_issue(
    group: &Group,
    issuer_secret: &Scalar,
    session: IssuerSession,
    request: &BlindRequest,
) -> BlindSignature {
    BlindSignature {
        response: group.add(
            &session.nonce,
            &group.smul(&request.challenge, issuer_secret),
        ),
    }
}

/// Holder: checks the issuer's answer and unblinds it.
pub fn credential_finalize(
    group: &Group,
    session: HolderSession,
    blind: &BlindSignature,
) -> Result<Credential, CryptoError> {
    let lhs = group.exp_g(&blind.response);
    let rhs = group.mul(
        &session.issuer_commitment,
        &group.exp(&session.issuer_public, &session.request.challenge),
    );
    if lhs != rhs {
        return Err(CryptoError::BadIssuerResponse);
    }
    Ok(Credential {
        attribute: session.attribute,
        serial: session.serial,
        commitment: session.blinded_commitment,
        response: group.add(&blind.response, &session.alpha),
    })
}

pub fn credential_verify(group: &Group, issuer_public: &Element, credential: &Credential) -> bool {
    if !group.is_member(credential.commitment.value()) {
        return false;
    }
    let c = credential_challenge(
        group,
        &credential.commitment,
        issuer_public,
        &credential.attribute,
        &credential.serial,
    );
    group.exp_g(&credential.response)
        == group.mul(&credential.commitment, &group.exp(issuer_public, &c))
}
