//! Dual-key stealth addresses with one-time output keys.

use super::{CryptoError, Element, Group, Scalar, Transcript, TAG_STEALTH};

/// Published payment coordinates `(A, B)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StealthAddress {
    pub scan_public: Element,
    pub spend_public: Element,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StealthKeypair {
    pub scan_secret: Scalar,
    pub scan_public: Element,
    pub spend_secret: Scalar,
    pub spend_public: Element,
}

impl StealthKeypair {
    pub fn address(&self) -> StealthAddress {
        StealthAddress {
            scan_public: self.scan_public.clone(),
            spend_public: self.spend_public.clone(),
        }
    }
}

/// Sender-side view of a freshly derived output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneTimeOutputKeys {
    pub ephemeral_secret: Scalar,
    pub ephemeral_public: Element,
    pub one_time_address: Element,
    /// `A^e`; the recipient recomputes it as `E^a`.
    pub shared_secret: Element,
}

pub fn derive_stealth_keypair(group: &Group, seed: &[u8]) -> StealthKeypair {
    let scan_secret = group.hash_to_nonzero_scalar(TAG_STEALTH, &[b"scan", seed]);
    let spend_secret = group.hash_to_nonzero_scalar(TAG_STEALTH, &[b"spend", seed]);
    StealthKeypair {
        scan_public: group.exp_g(&scan_secret),
        spend_public: group.exp_g(&spend_secret),
        scan_secret,
        spend_secret,
    }
}

pub(crate) fn onetime_offset(group: &Group, shared: &Element) -> Scalar {
    let bytes = group.element_to_bytes(shared);
    group.hash_to_scalar(TAG_STEALTH, &[b"onetime", &bytes])
}

/// Blinding factor for the amount commitment of an output, recoverable by
/// the recipient from the shared secret.
pub fn output_blinding(group: &Group, shared: &Element) -> Scalar {
    let bytes = group.element_to_bytes(shared);
    group.hash_to_scalar(TAG_STEALTH, &[b"blind", &bytes])
}

/// XOR pad hiding the amount from everyone but sender and recipient.
pub fn amount_mask(group: &Group, shared: &Element) -> [u8; 8] {
    let bytes = group.element_to_bytes(shared);
    let mut t = Transcript::new(TAG_STEALTH);
    t.append(b"amount").append(&bytes);
    let d = t.digest();
    let mut out = [0u8; 8];
    out.copy_from_slice(&d[..8]);
    out
}

/// `P = G^{h(A^e)} * B`, `E = G^e`.
pub fn make_onetime_output(
    group: &Group,
    recipient: &StealthAddress,
    ephemeral_secret: &Scalar,
) -> Result<OneTimeOutputKeys, CryptoError> {
    if ephemeral_secret.is_zero() {
        return Err(CryptoError::ScalarOutOfRange);
    }
    for e in [&recipient.scan_public, &recipient.spend_public] {
        if !group.is_member(e.value()) || e.is_identity() {
            return Err(CryptoError::NotInGroup);
        }
    }
    let shared = group.exp(&recipient.scan_public, ephemeral_secret);
    let offset = onetime_offset(group, &shared);
    Ok(OneTimeOutputKeys {
        ephemeral_public: group.exp_g(ephemeral_secret),
        ephemeral_secret: ephemeral_secret.clone(),
        one_time_address: group.mul(&group.exp_g(&offset), &recipient.spend_public),
        shared_secret: shared,
    })
}

/// Returns the one-time spend secret `h(E^a) + b` iff the output belongs to
/// `keys`.
pub fn scan_output(
    group: &Group,
    keys: &StealthKeypair,
    ephemeral_public: &Element,
    one_time_address: &Element,
) -> Option<Scalar> {
    if !group.is_member(ephemeral_public.value()) {
        return None;
    }
    let shared = group.exp(ephemeral_public, &keys.scan_secret);
    let offset = onetime_offset(group, &shared);
    let expected = group.mul(&group.exp_g(&offset), &keys.spend_public);
    if &expected == one_time_address {
        Some(group.add(&offset, &keys.spend_secret))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::BTreeSet;

    #[test]
    fn deterministic_from_seed() {
        let g = Group::standard();
        let a = derive_stealth_keypair(&g, b"alice");
        let b = derive_stealth_keypair(&g, b"alice");
        assert_eq!(a, b);
        assert_eq!(a.scan_public, g.exp_g(&a.scan_secret));
        assert_eq!(a.spend_public, g.exp_g(&a.spend_secret));
        assert_ne!(a.scan_secret, a.spend_secret);
    }

    #[test]
    fn distinct_seeds_distinct_scan_publics() {
        let g = Group::standard();
        let mut seen = BTreeSet::new();
        for i in 0..10_000u32 {
            let kp = derive_stealth_keypair(&g, &i.to_be_bytes());
            assert!(seen.insert(kp.scan_public), "collision at seed {i}");
        }
    }

    #[test]
    fn roundtrip_and_wrong_key() {
        let g = Group::standard();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let bob = derive_stealth_keypair(&g, b"bob");
        let eve = derive_stealth_keypair(&g, b"eve");
        let e = g.random_nonzero_scalar(&mut rng);
        let out = make_onetime_output(&g, &bob.address(), &e).unwrap();
        let secret = scan_output(&g, &bob, &out.ephemeral_public, &out.one_time_address).unwrap();
        assert_eq!(g.exp_g(&secret), out.one_time_address);
        assert!(scan_output(&g, &eve, &out.ephemeral_public, &out.one_time_address).is_none());
    }

    #[test]
    fn outputs_are_structurally_unlinkable() {
        let g = Group::standard();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let bob = derive_stealth_keypair(&g, b"bob");
        let addr = bob.address();
        let mut fields = BTreeSet::new();
        for _ in 0..200 {
            let e = g.random_nonzero_scalar(&mut rng);
            let out = make_onetime_output(&g, &addr, &e).unwrap();
            for f in [&out.one_time_address, &out.ephemeral_public] {
                assert_ne!(f, &addr.scan_public);
                assert_ne!(f, &addr.spend_public);
                assert!(fields.insert(f.clone()));
            }
        }
    }

    #[test]
    fn malformed_recipient_rejected() {
        let g = Group::test();
        let bad = StealthAddress {
            scan_public: g.identity(),
            spend_public: g.generator(),
        };
        assert_eq!(
            make_onetime_output(&g, &bad, &g.one()),
            Err(CryptoError::NotInGroup)
        );
    }
}
