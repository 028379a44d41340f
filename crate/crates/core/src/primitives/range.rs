//! Bit-decomposition range proofs.
//!
//! The value commitment is split into `k` bit commitments whose blindings are
//! chosen so that `prod C_i^(2^i) == C` holds exactly. Each bit commitment
//! carries a two-branch OR proof that it opens to 0 or 1.

use num_bigint::BigUint;
use rand::RngCore;

use super::{Commitment, CryptoError, Element, Group, Scalar, Transcript, TAG_RANGE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitProof {
    pub commitment: Commitment,
    pub c0: Scalar,
    pub c1: Scalar,
    pub s0: Scalar,
    pub s1: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeProof {
    pub bits: u32,
    pub bit_proofs: Vec<BitProof>,
}

fn check_width(group: &Group, bits: u32) -> Result<(), CryptoError> {
    if bits == 0 || BigUint::from(1u8) << bits as usize > group.params().order {
        return Err(CryptoError::RangeTooWide { bits });
    }
    Ok(())
}

fn bit_challenge(
    group: &Group,
    value_commitment: &Commitment,
    bits: u32,
    index: u32,
    bit_commitment: &Commitment,
    a0: &Element,
    a1: &Element,
) -> Scalar {
    let mut t = Transcript::new(TAG_RANGE);
    t.append_element(group, value_commitment.element())
        .append_u64(bits as u64)
        .append_u64(index as u64)
        .append_element(group, bit_commitment.element())
        .append_element(group, a0)
        .append_element(group, a1);
    t.challenge(group)
}

/// Proves that the commitment `G^r H^v` hides a value in `[0, 2^bits)`.
pub fn prove_range<R: RngCore + ?Sized>(
    group: &Group,
    v: u64,
    r: &Scalar,
    bits: u32,
    rng: &mut R,
) -> Result<RangeProof, CryptoError> {
    check_width(group, bits)?;
    if bits < 64 && v >> bits != 0 {
        return Err(CryptoError::ValueOutOfRange { bits });
    }
    let value_commitment = super::commit(group, &group.scalar_u64(v)?, r)?;

    // Bit blindings: the last one absorbs the remainder of r.
    let mut blindings = Vec::with_capacity(bits as usize);
    let mut weighted = group.zero();
    let mut weight = group.one();
    let two = group.scalar_u64(2)?;
    for _ in 0..bits - 1 {
        let ri = group.random_scalar(rng);
        weighted = group.add(&weighted, &group.smul(&weight, &ri));
        blindings.push(ri);
        weight = group.smul(&weight, &two);
    }
    let top_weight_inv = group
        .sinv(&weight)
        .ok_or(CryptoError::RangeTooWide { bits })?;
    blindings.push(group.smul(&group.sub(r, &weighted), &top_weight_inv));

    let h_inv = group.invert(&group.value_base());
    let mut bit_proofs = Vec::with_capacity(bits as usize);
    for (i, ri) in blindings.iter().enumerate() {
        let bit = (v >> i) & 1;
        let ci = super::commit(group, &group.scalar_u64(bit)?, ri)?;
        let y = [ci.0.clone(), group.mul(&ci.0, &h_inv)];
        let real = bit as usize;
        let fake = 1 - real;

        let nonce = group.random_scalar(rng);
        let c_fake = group.random_scalar(rng);
        let s_fake = group.random_scalar(rng);
        let mut a = [group.identity(), group.identity()];
        a[real] = group.exp_g(&nonce);
        a[fake] = group.mul(&group.exp_g(&s_fake), &group.exp(&y[fake], &c_fake));

        let c = bit_challenge(group, &value_commitment, bits, i as u32, &ci, &a[0], &a[1]);
        let c_real = group.sub(&c, &c_fake);
        let s_real = group.sub(&nonce, &group.smul(&c_real, ri));

        let (c0, c1, s0, s1) = if real == 0 {
            (c_real, c_fake, s_real, s_fake)
        } else {
            (c_fake, c_real, s_fake, s_real)
        };
        bit_proofs.push(BitProof {
            commitment: ci,
            c0,
            c1,
            s0,
            s1,
        });
    }
    Ok(RangeProof { bits, bit_proofs })
}

/// Checks a range proof against a value commitment.
pub fn verify_range(group: &Group, c: &Commitment, proof: &RangeProof) -> bool {
    if check_width(group, proof.bits).is_err() || proof.bit_proofs.len() != proof.bits as usize {
        return false;
    }
    let h_inv = group.invert(&group.value_base());
    for (i, bp) in proof.bit_proofs.iter().enumerate() {
        let y0 = &bp.commitment.0;
        let y1 = group.mul(y0, &h_inv);
        let a0 = group.mul(&group.exp_g(&bp.s0), &group.exp(y0, &bp.c0));
        let a1 = group.mul(&group.exp_g(&bp.s1), &group.exp(&y1, &bp.c1));
        let expected = bit_challenge(group, c, proof.bits, i as u32, &bp.commitment, &a0, &a1);
        if group.add(&bp.c0, &bp.c1) != expected {
            return false;
        }
    }
    // prod C_i^(2^i), Horner from the top bit down
    let mut acc = group.identity();
    for bp in proof.bit_proofs.iter().rev() {
        acc = group.mul(&group.mul(&acc, &acc), &bp.commitment.0);
    }
    acc == c.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::commit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn zero_value_verifies() {
        let g = Group::test();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let r = g.random_scalar(&mut rng);
        let proof = prove_range(&g, 0, &r, 8, &mut rng).unwrap();
        let c = commit(&g, &g.zero(), &r).unwrap();
        assert!(verify_range(&g, &c, &proof));
    }

    #[test]
    fn boundary_value_rejected_by_prover() {
        let g = Group::test();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let r = g.random_scalar(&mut rng);
        assert_eq!(
            prove_range(&g, 256, &r, 8, &mut rng),
            Err(CryptoError::ValueOutOfRange { bits: 8 })
        );
        assert!(prove_range(&g, 255, &r, 8, &mut rng).is_ok());
    }

    #[test]
    fn width_must_fit_group_order() {
        let g = Group::test();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let r = g.random_scalar(&mut rng);
        assert_eq!(
            prove_range(&g, 1, &r, 10, &mut rng),
            Err(CryptoError::RangeTooWide { bits: 10 })
        );
        assert!(prove_range(&g, 1, &r, 9, &mut rng).is_ok());
    }

    #[test]
    fn standard_profile_32_bits() {
        let g = Group::standard();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let r = g.random_scalar(&mut rng);
        let v = 0xdead_beef;
        let proof = prove_range(&g, v, &r, 32, &mut rng).unwrap();
        let c = commit(&g, &g.scalar_u64(v).unwrap(), &r).unwrap();
        assert!(verify_range(&g, &c, &proof));
        // wrong commitment
        let c2 = commit(&g, &g.scalar_u64(v + 1).unwrap(), &r).unwrap();
        assert!(!verify_range(&g, &c2, &proof));
    }

    #[test]
    fn every_value_in_small_range_verifies() {
        let g = Group::test();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for v in 0..16u64 {
            let r = g.random_scalar(&mut rng);
            let proof = prove_range(&g, v, &r, 4, &mut rng).unwrap();
            let c = commit(&g, &g.scalar_u64(v).unwrap(), &r).unwrap();
            assert!(verify_range(&g, &c, &proof), "v={v}");
        }
    }

    #[test]
    fn tampered_proof_fields_fail() {
        let g = Group::standard();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let r = g.random_scalar(&mut rng);
        let c = commit(&g, &g.scalar_u64(77).unwrap(), &r).unwrap();
        let proof = prove_range(&g, 77, &r, 8, &mut rng).unwrap();
        for i in 0..8 {
            let mut p = proof.clone();
            p.bit_proofs[i].s0 = g.add(&p.bit_proofs[i].s0, &g.one());
            assert!(!verify_range(&g, &c, &p));
            let mut p = proof.clone();
            p.bit_proofs[i].c1 = g.add(&p.bit_proofs[i].c1, &g.one());
            assert!(!verify_range(&g, &c, &p));
        }
        let mut p = proof.clone();
        p.bits = 7;
        assert!(!verify_range(&g, &c, &p));
    }
}
