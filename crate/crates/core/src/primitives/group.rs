//! Prime-order subgroup of Z_p^* for a safe prime p = 2q + 1.
//!
//! Two profiles are built in: `test` (p = 2039) whose values can be checked
//! by hand or brute force, and `standard` (129-bit p, 128-bit q) for
//! scenario runs. Elements are quadratic residues mod p; scalars live in Z_q.

use std::fmt;
use std::sync::Arc;

use crypto_bigint::modular::runtime_mod::{DynResidue, DynResidueParams};
use crypto_bigint::{Encoding, U192};
use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CryptoError;

/// Domain tag for the amount base H.
pub const TAG_H: &[u8] = b"pvx/H";
/// Domain tag for ring signatures and key images.
pub const TAG_RING: &[u8] = b"pvx/ring";
/// Domain tag for range proofs.
pub const TAG_RANGE: &[u8] = b"pvx/range";
/// Domain tag for eligibility credentials.
pub const TAG_CRED: &[u8] = b"pvx/cred";
/// Domain tag for stealth key and one-time address derivation.
pub const TAG_STEALTH: &[u8] = b"pvx/stealth";

const WINDOW: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Test,
    Standard,
}

impl Profile {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "test" => Some(Profile::Test),
            "standard" => Some(Profile::Standard),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Profile::Test => "test",
            Profile::Standard => "standard",
        }
    }

    /// Default range-proof bit width. The test group has q = 1019, so the
    /// width is capped such that a full transaction's worth of bounded terms
    /// stays below q.
    pub fn default_range_bits(&self) -> u32 {
        match self {
            Profile::Test => 7,
            Profile::Standard => 32,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scalar in Z_q. Always reduced.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({:x})", self.0)
    }
}

/// Element of the order-q subgroup.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element(BigUint);

impl Element {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_one()
    }
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Element({:x})", self.0)
    }
}

/// Public description of a group profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupParams {
    pub profile: Profile,
    pub modulus: BigUint,
    pub order: BigUint,
    pub generator: BigUint,
    pub value_base: BigUint,
    pub element_len: usize,
    pub scalar_len: usize,
}

type Residue = DynResidue<{ U192::LIMBS }>;
type Monty = DynResidueParams<{ U192::LIMBS }>;

fn to_wide(x: &BigUint) -> U192 {
    let raw = x.to_bytes_be();
    let mut buf = [0u8; 24];
    buf[24 - raw.len()..].copy_from_slice(&raw);
    U192::from_be_bytes(buf)
}

fn from_wide(x: &U192) -> BigUint {
    BigUint::from_bytes_be(&x.to_be_bytes())
}

struct FixedBase {
    // rows[i][d] = base^(d * 16^i), in Montgomery form
    rows: Vec<Vec<Residue>>,
}

impl FixedBase {
    fn new(base: &BigUint, monty: Monty, exp_bits: u64) -> Self {
        let nrows = (exp_bits as usize).div_ceil(WINDOW);
        let mut rows = Vec::with_capacity(nrows);
        let mut row_base = Residue::new(&to_wide(base), monty);
        for _ in 0..nrows {
            let mut row = Vec::with_capacity(1 << WINDOW);
            let mut acc = Residue::one(monty);
            for _ in 0..(1 << WINDOW) {
                row.push(acc);
                acc = acc.mul(&row_base);
            }
            // acc is now row_base^16
            row_base = acc;
            rows.push(row);
        }
        FixedBase { rows }
    }

    fn pow(&self, e: &BigUint, monty: Monty) -> BigUint {
        let words = to_wide(e).to_words();
        let mut acc = Residue::one(monty);
        for (i, row) in self.rows.iter().enumerate() {
            let bit = i * WINDOW;
            let d = (words[bit / 64] >> (bit % 64)) as usize & ((1 << WINDOW) - 1);
            if d != 0 {
                acc = acc.mul(&row[d]);
            }
        }
        from_wide(&acc.retrieve())
    }
}

struct Inner {
    params: GroupParams,
    monty: Monty,
    g_table: FixedBase,
    h_table: FixedBase,
}

/// Handle to a group profile; cheap to clone.
#[derive(Clone)]
pub struct Group(Arc<Inner>);

impl fmt::Debug for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Group({})", self.0.params.profile)
    }
}

impl PartialEq for Group {
    fn eq(&self, other: &Self) -> bool {
        self.0.params == other.0.params
    }
}

impl Eq for Group {}

const STANDARD_P: &str = "1000000000000000000000000000030a3";
const STANDARD_Q: &str = "80000000000000000000000000001851";

impl Group {
    pub fn new(profile: Profile) -> Self {
        let (p, q) = match profile {
            Profile::Test => (BigUint::from(2039u32), BigUint::from(1019u32)),
            Profile::Standard => (
                BigUint::parse_bytes(STANDARD_P.as_bytes(), 16).expect("constant"),
                BigUint::parse_bytes(STANDARD_Q.as_bytes(), 16).expect("constant"),
            ),
        };
        let g = BigUint::from(4u32);
        let element_len = (p.bits() as usize).div_ceil(8);
        let scalar_len = (q.bits() as usize).div_ceil(8);
        let h = hash_to_residue(&p, TAG_H, &[b""]);
        let monty = Monty::new(&to_wide(&p));
        let g_table = FixedBase::new(&g, monty, q.bits());
        let h_table = FixedBase::new(&h, monty, q.bits());
        Group(Arc::new(Inner {
            params: GroupParams {
                profile,
                modulus: p,
                order: q,
                generator: g,
                value_base: h,
                element_len,
                scalar_len,
            },
            monty,
            g_table,
            h_table,
        }))
    }

    pub fn test() -> Self {
        Self::new(Profile::Test)
    }

    pub fn standard() -> Self {
        Self::new(Profile::Standard)
    }

    pub fn params(&self) -> &GroupParams {
        &self.0.params
    }

    pub fn profile(&self) -> Profile {
        self.0.params.profile
    }

    fn p(&self) -> &BigUint {
        &self.0.params.modulus
    }

    fn q(&self) -> &BigUint {
        &self.0.params.order
    }

    // ---- elements ----

    pub fn identity(&self) -> Element {
        Element(BigUint::one())
    }

    /// Blinding base G.
    pub fn generator(&self) -> Element {
        Element(self.0.params.generator.clone())
    }

    /// Amount base H.
    pub fn value_base(&self) -> Element {
        Element(self.0.params.value_base.clone())
    }

    fn residue(&self, x: &BigUint) -> Residue {
        Residue::new(&to_wide(x), self.0.monty)
    }

    /// x^e mod p for an exponent of at most `bits` bits.
    fn pow_mod_p(&self, x: &BigUint, e: &BigUint, bits: u64) -> BigUint {
        let r = self.residue(x).pow_bounded_exp(&to_wide(e), bits as usize);
        from_wide(&r.retrieve())
    }

    pub fn mul(&self, a: &Element, b: &Element) -> Element {
        Element((&a.0 * &b.0) % self.p())
    }

    pub fn invert(&self, a: &Element) -> Element {
        // a^(p-2) mod p
        let e = self.p() - BigUint::from(2u32);
        Element(self.pow_mod_p(&a.0, &e, self.p().bits()))
    }

    pub fn div(&self, a: &Element, b: &Element) -> Element {
        self.mul(a, &self.invert(b))
    }

    pub fn exp(&self, base: &Element, e: &Scalar) -> Element {
        Element(self.pow_mod_p(&base.0, &e.0, self.q().bits()))
    }

    /// G^e via the precomputed table.
    pub fn exp_g(&self, e: &Scalar) -> Element {
        Element(self.0.g_table.pow(&e.0, self.0.monty))
    }

    /// H^e via the precomputed table.
    pub fn exp_h(&self, e: &Scalar) -> Element {
        Element(self.0.h_table.pow(&e.0, self.0.monty))
    }

    pub fn is_member(&self, x: &BigUint) -> bool {
        !x.is_zero() && x < self.p() && self.pow_mod_p(x, self.q(), self.q().bits()).is_one()
    }

    pub fn element(&self, x: BigUint) -> Result<Element, CryptoError> {
        if self.is_member(&x) {
            Ok(Element(x))
        } else {
            Err(CryptoError::NotInGroup)
        }
    }

    pub fn element_to_bytes(&self, e: &Element) -> Vec<u8> {
        to_fixed_be(&e.0, self.0.params.element_len)
    }

    pub fn element_from_bytes(&self, bytes: &[u8]) -> Result<Element, CryptoError> {
        if bytes.len() != self.0.params.element_len {
            return Err(CryptoError::Length {
                expected: self.0.params.element_len,
                got: bytes.len(),
            });
        }
        self.element(BigUint::from_bytes_be(bytes))
    }

    // ---- scalars ----

    pub fn scalar(&self, x: BigUint) -> Result<Scalar, CryptoError> {
        if &x < self.q() {
            Ok(Scalar(x))
        } else {
            Err(CryptoError::ScalarOutOfRange)
        }
    }

    pub fn scalar_u64(&self, x: u64) -> Result<Scalar, CryptoError> {
        self.scalar(BigUint::from(x))
    }

    pub fn reduce(&self, x: &BigUint) -> Scalar {
        Scalar(x % self.q())
    }

    /// Reduces a signed integer mod q.
    pub fn reduce_i128(&self, x: i128) -> Scalar {
        let mag = self.reduce(&BigUint::from(x.unsigned_abs()));
        if x < 0 {
            self.neg(&mag)
        } else {
            mag
        }
    }

    pub fn zero(&self) -> Scalar {
        Scalar(BigUint::zero())
    }

    pub fn one(&self) -> Scalar {
        Scalar(BigUint::one())
    }

    pub fn add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &b.0) % self.q())
    }

    pub fn sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + self.q() - &b.0) % self.q())
    }

    pub fn smul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 * &b.0) % self.q())
    }

    pub fn neg(&self, a: &Scalar) -> Scalar {
        Scalar((self.q() - &a.0) % self.q())
    }

    /// Multiplicative inverse mod q; `None` for zero.
    pub fn sinv(&self, a: &Scalar) -> Option<Scalar> {
        if a.is_zero() {
            return None;
        }
        let e = self.q() - BigUint::from(2u32);
        Some(Scalar(a.0.modpow(&e, self.q())))
    }

    pub fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        let mut buf = vec![0u8; self.0.params.scalar_len + 16];
        rng.fill_bytes(&mut buf);
        self.reduce(&BigUint::from_bytes_be(&buf))
    }

    pub fn random_nonzero_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        loop {
            let s = self.random_scalar(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }

    pub fn scalar_to_bytes(&self, s: &Scalar) -> Vec<u8> {
        to_fixed_be(&s.0, self.0.params.scalar_len)
    }

    pub fn scalar_from_bytes(&self, bytes: &[u8]) -> Result<Scalar, CryptoError> {
        if bytes.len() != self.0.params.scalar_len {
            return Err(CryptoError::Length {
                expected: self.0.params.scalar_len,
                got: bytes.len(),
            });
        }
        self.scalar(BigUint::from_bytes_be(bytes))
    }

    // ---- hashing ----

    pub fn hash_to_scalar(&self, tag: &[u8], parts: &[&[u8]]) -> Scalar {
        let digest = transcript_digest(tag, parts, None);
        self.reduce(&BigUint::from_bytes_be(&digest))
    }

    /// Like `hash_to_scalar` but retries with a counter until non-zero.
    pub fn hash_to_nonzero_scalar(&self, tag: &[u8], parts: &[&[u8]]) -> Scalar {
        let s = self.hash_to_scalar(tag, parts);
        if !s.is_zero() {
            return s;
        }
        let mut ctr = 1u32;
        loop {
            let digest = transcript_digest(tag, parts, Some(ctr));
            let s = self.reduce(&BigUint::from_bytes_be(&digest));
            if !s.is_zero() {
                return s;
            }
            ctr += 1;
        }
    }

    /// Hash onto a non-identity subgroup element by squaring mod p.
    pub fn hash_to_group(&self, tag: &[u8], parts: &[&[u8]]) -> Element {
        Element(hash_to_residue(self.p(), tag, parts))
    }
}

fn to_fixed_be(x: &BigUint, len: usize) -> Vec<u8> {
    let raw = x.to_bytes_be();
    let mut out = vec![0u8; len.saturating_sub(raw.len())];
    out.extend_from_slice(&raw);
    out
}

fn transcript_digest(tag: &[u8], parts: &[&[u8]], ctr: Option<u32>) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((tag.len() as u32).to_be_bytes());
    h.update(tag);
    for part in parts {
        h.update((part.len() as u32).to_be_bytes());
        h.update(part);
    }
    if let Some(c) = ctr {
        h.update(c.to_be_bytes());
    }
    h.finalize().into()
}

fn hash_to_residue(p: &BigUint, tag: &[u8], parts: &[&[u8]]) -> BigUint {
    let two = BigUint::from(2u32);
    let mut ctr = 0u32;
    loop {
        let digest = transcript_digest(tag, parts, Some(ctr));
        let x = BigUint::from_bytes_be(&digest) % p;
        let y = x.modpow(&two, p);
        if y > BigUint::one() {
            return y;
        }
        ctr += 1;
    }
}

/// Accumulates length-prefixed fields into a SHA-256 transcript.
#[derive(Clone)]
pub struct Transcript {
    hasher: Sha256,
}

impl Transcript {
    pub fn new(tag: &[u8]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update((tag.len() as u32).to_be_bytes());
        hasher.update(tag);
        Transcript { hasher }
    }

    pub fn append(&mut self, bytes: &[u8]) -> &mut Self {
        self.hasher.update((bytes.len() as u32).to_be_bytes());
        self.hasher.update(bytes);
        self
    }

    pub fn append_element(&mut self, group: &Group, e: &Element) -> &mut Self {
        let b = group.element_to_bytes(e);
        self.append(&b)
    }

    pub fn append_scalar(&mut self, group: &Group, s: &Scalar) -> &mut Self {
        let b = group.scalar_to_bytes(s);
        self.append(&b)
    }

    pub fn append_u64(&mut self, x: u64) -> &mut Self {
        self.append(&x.to_be_bytes())
    }

    pub fn challenge(&self, group: &Group) -> Scalar {
        let digest: [u8; 32] = self.hasher.clone().finalize().into();
        group.reduce(&BigUint::from_bytes_be(&digest))
    }

    pub fn digest(self) -> [u8; 32] {
        self.hasher.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn test_profile_constants() {
        let g = Group::test();
        let p = g.params();
        assert_eq!(p.modulus, BigUint::from(2039u32));
        assert_eq!(p.order, BigUint::from(1019u32));
        assert_eq!(p.generator, BigUint::from(4u32));
        // Frozen from an independent SHA-256 + modpow script.
        assert_eq!(p.value_base, BigUint::from(1899u32));
        assert_eq!(p.element_len, 2);
        assert_eq!(p.scalar_len, 2);
    }

    #[test]
    fn standard_profile_constants() {
        let g = Group::standard();
        let p = g.params();
        assert_eq!(p.modulus.bits(), 129);
        assert_eq!(p.order.bits(), 128);
        assert_eq!(
            p.value_base,
            BigUint::parse_bytes(b"a9e3958729bd69237c9a30ff40deed78", 16).unwrap()
        );
        assert!(g.is_member(&p.generator));
        assert!(g.is_member(&p.value_base));
    }

    #[test]
    fn fixed_base_matches_modpow() {
        for group in [Group::test(), Group::standard()] {
            let mut rng = ChaCha20Rng::seed_from_u64(3);
            for _ in 0..50 {
                let e = group.random_scalar(&mut rng);
                assert_eq!(group.exp_g(&e), group.exp(&group.generator(), &e));
                assert_eq!(group.exp_h(&e), group.exp(&group.value_base(), &e));
            }
        }
    }

    #[test]
    fn element_decoding_rejects_non_members() {
        let g = Group::test();
        // 7 is a quadratic non-residue mod 2039
        assert!(g.element_from_bytes(&[0, 7]).is_err());
        assert!(g.element_from_bytes(&[0, 0]).is_err());
        assert!(g.element_from_bytes(&[0x07, 0xf7]).is_err()); // 2039 itself
        assert!(g.element_from_bytes(&[0, 4]).is_ok());
        assert!(g.element_from_bytes(&[4]).is_err());
    }

    #[test]
    fn scalar_range_and_roundtrip() {
        let g = Group::test();
        assert!(g.scalar_u64(1018).is_ok());
        assert_eq!(g.scalar_u64(1019), Err(CryptoError::ScalarOutOfRange));
        let s = g.scalar_u64(777).unwrap();
        assert_eq!(g.scalar_from_bytes(&g.scalar_to_bytes(&s)).unwrap(), s);
        assert_eq!(g.reduce_i128(-1), g.scalar_u64(1018).unwrap());
    }
}
