use super::{CryptoError, Element, Group, Scalar};

/// Pedersen commitment G^r * H^v.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Commitment(pub Element);

impl Commitment {
    pub fn element(&self) -> &Element {
        &self.0
    }
}

/// Commits to amount `v` under blinding `r`. Both must already be reduced mod q.
pub fn commit(group: &Group, v: &Scalar, r: &Scalar) -> Result<Commitment, CryptoError> {
    let q = &group.params().order;
    if v.value() >= q || r.value() >= q {
        return Err(CryptoError::ScalarOutOfRange);
    }
    Ok(Commitment(group.mul(&group.exp_g(r), &group.exp_h(v))))
}

pub fn add_commitments(group: &Group, a: &Commitment, b: &Commitment) -> Commitment {
    Commitment(group.mul(&a.0, &b.0))
}

pub fn negate_commitment(group: &Group, a: &Commitment) -> Commitment {
    Commitment(group.invert(&a.0))
}

pub fn verify_opening(group: &Group, c: &Commitment, v: &Scalar, r: &Scalar) -> bool {
    matches!(commit(group, v, r), Ok(expected) if expected == *c)
}
