//! Linkable ring signatures (LSAG) with an optional second, non-linkable row
//! proving that a pseudo-output commitment hides the same amount as the true
//! ring member's commitment.

use rand::RngCore;

use super::{CryptoError, Element, Group, Scalar, Transcript, TAG_RING};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingSignature {
    pub key_image: Element,
    /// Challenge entering slot 0.
    pub challenge: Scalar,
    /// Key-row responses, one per ring slot.
    pub responses: Vec<Scalar>,
    /// Commitment-row responses; empty for a plain LSAG.
    pub commitment_responses: Vec<Scalar>,
}

impl RingSignature {
    pub fn ring_size(&self) -> usize {
        self.responses.len()
    }

    /// Fixed-width encoding: key image, challenge, key responses, commitment
    /// responses.
    pub fn to_bytes(&self, group: &Group) -> Vec<u8> {
        let mut out = group.element_to_bytes(&self.key_image);
        out.extend(group.scalar_to_bytes(&self.challenge));
        for s in self.responses.iter().chain(&self.commitment_responses) {
            out.extend(group.scalar_to_bytes(s));
        }
        out
    }

    pub fn from_bytes(
        group: &Group,
        bytes: &[u8],
        ring_size: usize,
        with_commitments: bool,
    ) -> Result<Self, CryptoError> {
        let el = group.params().element_len;
        let sl = group.params().scalar_len;
        let rows = if with_commitments { 2 } else { 1 };
        let expected = el + sl + rows * ring_size * sl;
        if bytes.len() != expected {
            return Err(CryptoError::Length {
                expected,
                got: bytes.len(),
            });
        }
        let key_image = group.element_from_bytes(&bytes[..el])?;
        let challenge = group.scalar_from_bytes(&bytes[el..el + sl])?;
        let mut scalars = bytes[el + sl..]
            .chunks(sl)
            .map(|c| group.scalar_from_bytes(c))
            .collect::<Result<Vec<_>, _>>()?;
        let commitment_responses = scalars.split_off(ring_size);
        Ok(RingSignature {
            key_image,
            challenge,
            responses: scalars,
            commitment_responses,
        })
    }
}

fn key_image_base(group: &Group, member: &Element) -> Element {
    let bytes = group.element_to_bytes(member);
    group.hash_to_group(TAG_RING, &[b"key-image", &bytes])
}

/// `I = Hp(P)^x`.
pub fn key_image(group: &Group, one_time_address: &Element, secret: &Scalar) -> Element {
    group.exp(&key_image_base(group, one_time_address), secret)
}

fn prefix(
    group: &Group,
    message: &[u8],
    ring: &[Element],
    offsets: Option<&[Element]>,
    image: &Element,
) -> Transcript {
    let mut t = Transcript::new(TAG_RING);
    t.append(message).append_u64(ring.len() as u64);
    for p in ring {
        t.append_element(group, p);
    }
    if let Some(offsets) = offsets {
        for d in offsets {
            t.append_element(group, d);
        }
    }
    t.append_element(group, image);
    t
}

fn round_challenge(
    group: &Group,
    prefix: &Transcript,
    l: &Element,
    r: &Element,
    l2: Option<&Element>,
) -> Scalar {
    let mut t = prefix.clone();
    t.append_element(group, l).append_element(group, r);
    if let Some(l2) = l2 {
        t.append_element(group, l2);
    }
    t.challenge(group)
}

#[allow(clippy::too_many_arguments)]
fn sign_rows<R: RngCore + ?Sized>(
    group: &Group,
    message: &[u8],
    ring: &[Element],
    offsets: Option<&[Element]>,
    index: usize,
    secret: &Scalar,
    offset_secret: Option<&Scalar>,
    rng: &mut R,
) -> Result<RingSignature, CryptoError> {
    let n = ring.len();
    if n == 0 {
        return Err(CryptoError::EmptyRing);
    }
    if index >= n {
        return Err(CryptoError::IndexOutOfBounds { index, size: n });
    }
    if group.exp_g(secret) != ring[index] || secret.is_zero() {
        return Err(CryptoError::KeyMismatch);
    }
    if let (Some(offsets), Some(z)) = (offsets, offset_secret) {
        if offsets.len() != n {
            return Err(CryptoError::IndexOutOfBounds {
                index: offsets.len(),
                size: n,
            });
        }
        if group.exp_g(z) != offsets[index] {
            return Err(CryptoError::CommitmentMismatch);
        }
    }

    let image = key_image(group, &ring[index], secret);
    let pre = prefix(group, message, ring, offsets, &image);
    let bases: Vec<Element> = ring.iter().map(|p| key_image_base(group, p)).collect();

    let mut c = vec![group.zero(); n];
    let mut s = vec![group.zero(); n];
    let mut s2 = vec![group.zero(); if offsets.is_some() { n } else { 0 }];

    let alpha = group.random_scalar(rng);
    let beta = group.random_scalar(rng);
    let l2 = offsets.map(|_| group.exp_g(&beta));
    c[(index + 1) % n] = round_challenge(
        group,
        &pre,
        &group.exp_g(&alpha),
        &group.exp(&bases[index], &alpha),
        l2.as_ref(),
    );

    let mut i = (index + 1) % n;
    while i != index {
        s[i] = group.random_scalar(rng);
        let l = group.mul(&group.exp_g(&s[i]), &group.exp(&ring[i], &c[i]));
        let r = group.mul(&group.exp(&bases[i], &s[i]), &group.exp(&image, &c[i]));
        let l2 = offsets.map(|d| {
            s2[i] = group.random_scalar(rng);
            group.mul(&group.exp_g(&s2[i]), &group.exp(&d[i], &c[i]))
        });
        c[(i + 1) % n] = round_challenge(group, &pre, &l, &r, l2.as_ref());
        i = (i + 1) % n;
    }

    s[index] = group.sub(&alpha, &group.smul(&c[index], secret));
    if let Some(z) = offset_secret {
        s2[index] = group.sub(&beta, &group.smul(&c[index], z));
    }
    Ok(RingSignature {
        key_image: image,
        challenge: c[0].clone(),
        responses: s,
        commitment_responses: s2,
    })
}

fn verify_rows(
    group: &Group,
    message: &[u8],
    ring: &[Element],
    offsets: Option<&[Element]>,
    sig: &RingSignature,
) -> bool {
    let n = ring.len();
    let expected_s2 = if offsets.is_some() { n } else { 0 };
    if n == 0
        || sig.responses.len() != n
        || sig.commitment_responses.len() != expected_s2
        || offsets.is_some_and(|d| d.len() != n)
        || sig.key_image.is_identity()
        || !group.is_member(sig.key_image.value())
    {
        return false;
    }
    let pre = prefix(group, message, ring, offsets, &sig.key_image);
    let mut c = sig.challenge.clone();
    for i in 0..n {
        let base = key_image_base(group, &ring[i]);
        let l = group.mul(&group.exp_g(&sig.responses[i]), &group.exp(&ring[i], &c));
        let r = group.mul(
            &group.exp(&base, &sig.responses[i]),
            &group.exp(&sig.key_image, &c),
        );
        let l2 = offsets.map(|d| {
            group.mul(
                &group.exp_g(&sig.commitment_responses[i]),
                &group.exp(&d[i], &c),
            )
        });
        c = round_challenge(group, &pre, &l, &r, l2.as_ref());
    }
    c == sig.challenge
}

pub fn ring_sign<R: RngCore + ?Sized>(
    group: &Group,
    message: &[u8],
    ring: &[Element],
    index: usize,
    secret: &Scalar,
    rng: &mut R,
) -> Result<RingSignature, CryptoError> {
    sign_rows(group, message, ring, None, index, secret, None, rng)
}

pub fn ring_verify(group: &Group, message: &[u8], ring: &[Element], sig: &RingSignature) -> bool {
    verify_rows(group, message, ring, None, sig)
}

/// Two-row variant: `offsets[i] = C_i / C_pseudo`, and `offset_secret` is the
/// discrete log of `offsets[index]` base G.
#[allow(clippy::too_many_arguments)]
pub fn ring_sign_with_commitments<R: RngCore + ?Sized>(
    group: &Group,
    message: &[u8],
    ring: &[Element],
    offsets: &[Element],
    index: usize,
    secret: &Scalar,
    offset_secret: &Scalar,
    rng: &mut R,
) -> Result<RingSignature, CryptoError> {
    sign_rows(
        group,
        message,
        ring,
        Some(offsets),
        index,
        secret,
        Some(offset_secret),
        rng,
    )
}

pub fn ring_verify_with_commitments(
    group: &Group,
    message: &[u8],
    ring: &[Element],
    offsets: &[Element],
    sig: &RingSignature,
) -> bool {
    verify_rows(group, message, ring, Some(offsets), sig)
}

pub fn signatures_linked(a: &RingSignature, b: &RingSignature) -> bool {
    a.key_image == b.key_image
}
