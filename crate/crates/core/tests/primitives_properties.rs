use std::sync::LazyLock;

use num_bigint::BigUint;
use proptest::prelude::*;
use pvx::primitives::{
    add_commitments, commit, credential_finalize, credential_issue, credential_request,
    credential_verify, derive_stealth_keypair, make_onetime_output, ring_sign, ring_verify,
    scan_output, Group, IssuerKeypair, IssuerSession,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

static STANDARD: LazyLock<Group> = LazyLock::new(Group::standard);
static TEST: LazyLock<Group> = LazyLock::new(Group::test);

fn scalar(g: &Group, bytes: &[u8]) -> pvx::primitives::Scalar {
    g.reduce(&BigUint::from_bytes_be(bytes))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn commitments_add_homomorphically(
        v1 in any::<[u8; 20]>(), r1 in any::<[u8; 20]>(),
        v2 in any::<[u8; 20]>(), r2 in any::<[u8; 20]>(),
    ) {
        for g in [&*STANDARD, &*TEST] {
            let (v1, r1, v2, r2) = (scalar(g, &v1), scalar(g, &r1), scalar(g, &v2), scalar(g, &r2));
            let lhs = add_commitments(g, &commit(g, &v1, &r1).unwrap(), &commit(g, &v2, &r2).unwrap());
            let rhs = commit(g, &g.add(&v1, &v2), &g.add(&r1, &r2)).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn commit_is_deterministic(v in any::<u64>(), r in any::<u64>()) {
        let g = &*STANDARD;
        let (v, r) = (g.reduce(&BigUint::from(v)), g.reduce(&BigUint::from(r)));
        prop_assert_eq!(commit(g, &v, &r).unwrap(), commit(g, &v, &r).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scanning_recovers_only_own_outputs(seed_a in any::<[u8; 8]>(), seed_b in any::<[u8; 8]>(), e in any::<[u8; 16]>()) {
        prop_assume!(seed_a != seed_b);
        let g = &*STANDARD;
        let alice = derive_stealth_keypair(g, &seed_a);
        let bob = derive_stealth_keypair(g, &seed_b);
        let e = g.reduce(&BigUint::from_bytes_be(&e));
        prop_assume!(!e.is_zero());
        let out = make_onetime_output(g, &alice.address(), &e).unwrap();
        let secret = scan_output(g, &alice, &out.ephemeral_public, &out.one_time_address);
        prop_assert!(secret.is_some());
        prop_assert_eq!(g.exp_g(&secret.unwrap()), out.one_time_address.clone());
        prop_assert!(scan_output(g, &bob, &out.ephemeral_public, &out.one_time_address).is_none());
    }
}

/// Every single-bit mutation of the message, a ring member, the key image,
/// the challenge or a response must make verification fail.
#[test]
fn ring_signatures_reject_ten_thousand_bit_flips() {
    let g = &*STANDARD;
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let size = 4;
    let secrets: Vec<_> = (0..size)
        .map(|_| g.random_nonzero_scalar(&mut rng))
        .collect();
    let ring: Vec<_> = secrets.iter().map(|x| g.exp_g(x)).collect();
    let message = b"spend output 17 to one-time address P".to_vec();
    let sig = ring_sign(g, &message, &ring, 2, &secrets[2], &mut rng).unwrap();
    assert!(ring_verify(g, &message, &ring, &sig));
    let sig_bytes = sig.to_bytes(g);
    let el = g.params().element_len;

    let mut rejected = 0;
    let mut undecodable = 0;
    let trials = 10_000;
    for _ in 0..trials {
        let mut msg = message.clone();
        let mut members = ring.clone();
        let mut bytes = sig_bytes.clone();
        match rng.gen_range(0..3) {
            0 => {
                let bit = rng.gen_range(0..msg.len() * 8);
                msg[bit / 8] ^= 1 << (bit % 8);
            }
            1 => {
                let slot = rng.gen_range(0..size);
                let mut b = g.element_to_bytes(&members[slot]);
                let bit = rng.gen_range(0..el * 8);
                b[bit / 8] ^= 1 << (bit % 8);
                match g.element_from_bytes(&b) {
                    Ok(e) => members[slot] = e,
                    Err(_) => {
                        undecodable += 1;
                        rejected += 1;
                        continue;
                    }
                }
            }
            _ => {
                let bit = rng.gen_range(0..bytes.len() * 8);
                bytes[bit / 8] ^= 1 << (bit % 8);
            }
        }
        let Ok(s) = pvx::primitives::RingSignature::from_bytes(g, &bytes, size, false) else {
            undecodable += 1;
            rejected += 1;
            continue;
        };
        if !ring_verify(g, &msg, &members, &s) {
            rejected += 1;
        }
    }
    assert_eq!(rejected, trials, "{undecodable} mutations failed to decode");
}

/// Chi-square statistic of `counts` against a uniform distribution.
fn chi_square(counts: &[u32]) -> f64 {
    let total: u32 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

/// 15 degrees of freedom, upper 0.1% point.
const CHI2_15_CRITICAL: f64 = 37.697;

#[test]
fn finalized_credentials_are_uniform_for_a_fixed_issuer_view() {
    let g = &*STANDARD;
    let issuer = IssuerKeypair::derive(g, b"mediator");
    // the issuer always publishes the same nonce commitment and sees
    // requests; what comes out must still look uniform
    let mut issuer_rng = ChaCha20Rng::seed_from_u64(1);
    let template = IssuerSession::open(g, &mut issuer_rng);
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let mut serials = [0u32; 16];
    let mut commitments = [0u32; 16];
    let mut responses = [0u32; 16];
    for _ in 0..1000 {
        let (req, holder) = credential_request(
            g,
            &issuer.public,
            &template.commitment,
            "eligible",
            &mut rng,
        );
        let blind = credential_issue(g, &issuer.secret, template.clone(), &req);
        let cred = credential_finalize(g, holder, &blind).unwrap();
        assert!(credential_verify(g, &issuer.public, &cred));
        serials[(cred.serial[0] & 0x0f) as usize] += 1;
        let c = g.element_to_bytes(&cred.commitment);
        commitments[(c[c.len() - 1] & 0x0f) as usize] += 1;
        let s = g.scalar_to_bytes(&cred.response);
        responses[(s[s.len() - 1] & 0x0f) as usize] += 1;
    }
    for (name, counts) in [
        ("serial", serials),
        ("commitment", commitments),
        ("response", responses),
    ] {
        let x2 = chi_square(&counts);
        assert!(
            x2 < CHI2_15_CRITICAL,
            "{name}: chi-square {x2:.2} over {counts:?}"
        );
    }
}
