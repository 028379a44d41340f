use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::tx::{excess_challenge, sha256, Encoder, Transaction, TxId, TxKind};
use crate::entityreg::{AccountId, EntityId};
use crate::policy::DenyReason;
use crate::primitives::{
    commit, ring_verify_with_commitments, verify_opening, verify_range, Commitment, Element, Group,
    Scalar, SERIAL_LEN, TAG_STEALTH,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    Malformed,
    UnknownAccount,
    UnknownRingMember,
    InsufficientFunds,
    AmountOutOfRange,
    RingSignature,
    DoubleSpend,
    DuplicateOutput,
    RangeProof,
    BalanceProof,
    Policy(DenyReason),
    CredentialReused,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::Policy(r) => write!(f, "Policy({r})"),
            other => write!(f, "{other:?}"),
        }
    }
}

impl RejectReason {
    pub fn parse(s: &str) -> Option<Self> {
        if let Some(inner) = s.strip_prefix("Policy(").and_then(|r| r.strip_suffix(')')) {
            return DenyReason::parse(inner).map(RejectReason::Policy);
        }
        let all = [
            RejectReason::Malformed,
            RejectReason::UnknownAccount,
            RejectReason::UnknownRingMember,
            RejectReason::InsufficientFunds,
            RejectReason::AmountOutOfRange,
            RejectReason::RingSignature,
            RejectReason::DoubleSpend,
            RejectReason::DuplicateOutput,
            RejectReason::RangeProof,
            RejectReason::BalanceProof,
            RejectReason::CredentialReused,
        ];
        all.into_iter().find(|r| r.to_string() == s)
    }
}

/// Institutional admissibility check, run after the balance proof.
pub trait PolicyHook {
    fn check(&self, state: &LedgerState, tx: &Transaction) -> Result<(), RejectReason>;
}

pub struct PermitAll;

impl PolicyHook for PermitAll {
    fn check(&self, _: &LedgerState, _: &Transaction) -> Result<(), RejectReason> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LedgerConfig {
    pub group: Group,
    pub range_bits: u32,
    pub max_ring_size: usize,
}

impl LedgerConfig {
    pub fn new(group: Group) -> Self {
        let range_bits = group.profile().default_range_bits();
        LedgerConfig {
            group,
            range_bits,
            max_ring_size: 64,
        }
    }

    /// Largest transparent amount or fee allowed next to confidential legs.
    pub fn amount_limit(&self) -> u64 {
        1u64 << self.range_bits
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountEntry {
    pub owner: EntityId,
    pub balance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputRecord {
    pub one_time_address: Element,
    pub ephemeral_public: Element,
    pub commitment: Commitment,
    pub encrypted_amount: [u8; 8],
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerState {
    pub accounts: BTreeMap<AccountId, AccountEntry>,
    /// Every shielded output ever created, in creation order. Which ones are
    /// spent is not knowable from public data.
    pub outputs: Vec<OutputRecord>,
    pub one_time_addresses: BTreeSet<Element>,
    pub key_images: BTreeSet<Element>,
    pub serials: BTreeSet<[u8; SERIAL_LEN]>,
    pub applied: BTreeSet<TxId>,
    pub supply: u64,
    pub fees: u64,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub parent: [u8; 32],
    pub proposer: u32,
    pub transactions: Vec<Transaction>,
}

impl Block {
    pub fn digest(&self, g: &Group) -> [u8; 32] {
        let mut e = Encoder::default();
        e.bytes(b"pvx/block").u64(self.height).bytes(&self.parent);
        e.u64(self.proposer as u64).count(self.transactions.len());
        for tx in &self.transactions {
            e.bytes(&tx.id(g));
        }
        sha256(&e.buf)
    }
}

impl LedgerState {
    /// Empty ledger with the given accounts opened at zero balance.
    pub fn new<'a>(accounts: impl IntoIterator<Item = (&'a AccountId, &'a EntityId)>) -> Self {
        LedgerState {
            accounts: accounts
                .into_iter()
                .map(|(a, o)| {
                    (
                        a.clone(),
                        AccountEntry {
                            owner: o.clone(),
                            balance: 0,
                        },
                    )
                })
                .collect(),
            outputs: Vec::new(),
            one_time_addresses: BTreeSet::new(),
            key_images: BTreeSet::new(),
            serials: BTreeSet::new(),
            applied: BTreeSet::new(),
            supply: 0,
            fees: 0,
            height: 0,
        }
    }

    pub fn balance(&self, account: &AccountId) -> Option<u64> {
        self.accounts.get(account).map(|a| a.balance)
    }

    /// Appends `count` zero-valued outputs nobody can spend, so that early
    /// spends have an anonymity set to hide in.
    pub fn seed_outputs(&mut self, g: &Group, count: usize) -> Vec<Element> {
        let zero = g.zero();
        let commitment = commit(g, &zero, &zero).expect("zero is in range");
        let mut created = Vec::with_capacity(count);
        for _ in 0..count {
            let i = (self.outputs.len() as u64).to_be_bytes();
            let p = g.hash_to_group(TAG_STEALTH, &[b"seed", &i]);
            let e = g.hash_to_group(TAG_STEALTH, &[b"seed-ephemeral", &i]);
            self.one_time_addresses.insert(p.clone());
            self.outputs.push(OutputRecord {
                one_time_address: p.clone(),
                ephemeral_public: e,
                commitment: commitment.clone(),
                encrypted_amount: [0; 8],
                height: self.height,
            });
            created.push(p);
        }
        created
    }

    pub fn digest(&self, g: &Group) -> [u8; 32] {
        let mut e = Encoder::default();
        e.bytes(b"pvx/state")
            .u64(self.height)
            .u64(self.supply)
            .u64(self.fees);
        e.count(self.accounts.len());
        for (id, a) in &self.accounts {
            e.str(&id.0).str(&a.owner.0).u64(a.balance);
        }
        e.count(self.outputs.len());
        for o in &self.outputs {
            e.element(g, &o.one_time_address)
                .element(g, &o.ephemeral_public)
                .element(g, o.commitment.element())
                .bytes(&o.encrypted_amount)
                .u64(o.height);
        }
        e.count(self.key_images.len());
        for k in &self.key_images {
            e.element(g, k);
        }
        e.count(self.serials.len());
        for s in &self.serials {
            e.bytes(s);
        }
        e.count(self.applied.len());
        for id in &self.applied {
            e.bytes(id);
        }
        sha256(&e.buf)
    }
}

/// Shape rules per kind, before any cryptography.
fn check_shape(cfg: &LedgerConfig, tx: &Transaction) -> Result<(), RejectReason> {
    let ti = tx.transparent_inputs.len();
    let to = tx.transparent_outputs.len();
    let si = tx.shielded_inputs.len();
    let so = tx.shielded_outputs.len();
    let ok = match tx.kind {
        TxKind::TransparentTransfer => ti >= 1 && to >= 1 && si == 0 && so == 0,
        TxKind::Shield => ti >= 1 && to == 0 && si == 0 && so >= 1,
        TxKind::Unshield => ti == 0 && to == 1 && si >= 1 && so >= 1,
        TxKind::ShieldedTransfer => ti == 0 && to == 0 && si >= 1 && so >= 1,
        TxKind::MediatedBatch => ti == 0 && to == 0 && si >= 2 && so >= 2,
        TxKind::Issue => ti == 0 && to >= 1 && si == 0 && so == 0 && tx.fee == 0,
    };
    let authority_ok = match tx.kind {
        TxKind::MediatedBatch | TxKind::Issue => tx.authority.is_some(),
        _ => tx.authority.is_none(),
    };
    let excess_ok = tx.kind.is_confidential() == tx.excess.is_some();
    if !(ok && authority_ok && excess_ok) {
        return Err(RejectReason::Malformed);
    }
    // a transparent debit comes from a single owner
    if let Some(first) = tx.transparent_inputs.first() {
        if tx
            .transparent_inputs
            .iter()
            .any(|i| i.account != first.account)
        {
            return Err(RejectReason::Malformed);
        }
    }
    for input in &tx.shielded_inputs {
        let ring = &input.ring;
        if ring.is_empty()
            || ring.len() > cfg.max_ring_size
            || ring.windows(2).any(|w| w[0] >= w[1])
            || input.signature.ring_size() != ring.len()
            || input.signature.commitment_responses.len() != ring.len()
        {
            return Err(RejectReason::Malformed);
        }
    }
    Ok(())
}

fn check_accounts(state: &LedgerState, tx: &Transaction) -> Result<(), RejectReason> {
    for i in &tx.transparent_inputs {
        if !state.accounts.contains_key(&i.account) {
            return Err(RejectReason::UnknownAccount);
        }
    }
    for o in &tx.transparent_outputs {
        match state.accounts.get(&o.account) {
            None => return Err(RejectReason::UnknownAccount),
            Some(entry) if entry.owner != o.owner => return Err(RejectReason::Malformed),
            Some(_) => {}
        }
    }
    for input in &tx.shielded_inputs {
        if input
            .ring
            .last()
            .is_some_and(|&last| last >= state.outputs.len() as u64)
        {
            return Err(RejectReason::UnknownRingMember);
        }
    }
    Ok(())
}

/// Confidential kinds must not let the balance equation wrap the group order.
fn check_amount_bounds(cfg: &LedgerConfig, tx: &Transaction) -> Result<(), RejectReason> {
    if !tx.kind.is_confidential() {
        return Ok(());
    }
    let limit = cfg.amount_limit();
    let transparent = tx
        .transparent_inputs
        .iter()
        .map(|i| i.amount)
        .chain(tx.transparent_outputs.iter().map(|o| o.amount))
        .chain(std::iter::once(tx.fee));
    let terms = tx.transparent_inputs.len()
        + tx.transparent_outputs.len()
        + tx.shielded_inputs.len()
        + tx.shielded_outputs.len()
        + 1;
    let bound = BigUint::from(terms as u64) * BigUint::from(limit);
    let mut all_small = true;
    for a in transparent {
        all_small &= a < limit;
    }
    if !all_small || bound > cfg.group.params().order {
        return Err(RejectReason::AmountOutOfRange);
    }
    Ok(())
}

fn check_funds(state: &LedgerState, tx: &Transaction) -> Result<(), RejectReason> {
    let total = tx
        .transparent_in_total()
        .ok_or(RejectReason::InsufficientFunds)?;
    if let Some(first) = tx.transparent_inputs.first() {
        if state.balance(&first.account).unwrap_or(0) < total {
            return Err(RejectReason::InsufficientFunds);
        }
    }
    Ok(())
}

fn ring_offsets(
    g: &Group,
    state: &LedgerState,
    ring: &[u64],
    pseudo: &Commitment,
) -> (Vec<Element>, Vec<Element>) {
    let pseudo_inv = g.invert(pseudo.element());
    ring.iter()
        .map(|&i| {
            let o = &state.outputs[i as usize];
            (
                o.one_time_address.clone(),
                g.mul(o.commitment.element(), &pseudo_inv),
            )
        })
        .unzip()
}

/// `prod(C'_in) * prod(C_out)^-1 * H^-(transparent outflow + fee)`.
pub fn commitment_remainder(g: &Group, tx: &Transaction) -> Element {
    let mut acc = g.identity();
    for i in &tx.shielded_inputs {
        acc = g.mul(&acc, i.pseudo_commitment.element());
    }
    for o in &tx.shielded_outputs {
        acc = g.div(&acc, o.commitment.element());
    }
    let t_in = tx.transparent_in_total().unwrap_or(0) as i128;
    let t_out = tx.transparent_out_total().unwrap_or(0) as i128;
    let outflow = t_out - t_in + tx.fee as i128;
    let h = g.exp_h(&g.reduce_i128(outflow));
    g.div(&acc, &h)
}

fn check_balance(cfg: &LedgerConfig, tx: &Transaction, digest: &[u8]) -> Result<(), RejectReason> {
    let g = &cfg.group;
    if !tx.kind.is_confidential() {
        let out = tx
            .transparent_out_total()
            .ok_or(RejectReason::BalanceProof)?;
        let balanced = match tx.kind {
            TxKind::Issue => true,
            _ => tx.transparent_in_total() == out.checked_add(tx.fee),
        };
        return if balanced {
            Ok(())
        } else {
            Err(RejectReason::BalanceProof)
        };
    }
    let excess = tx.excess.as_ref().ok_or(RejectReason::Malformed)?;
    let x = commitment_remainder(g, tx);
    if !g.is_member(excess.nonce_commitment.value()) {
        return Err(RejectReason::BalanceProof);
    }
    let c = excess_challenge(g, &x, &excess.nonce_commitment, digest);
    let lhs = g.exp_g(&excess.response);
    let rhs = g.mul(&excess.nonce_commitment, &g.exp(&x, &c));
    if lhs == rhs {
        Ok(())
    } else {
        Err(RejectReason::BalanceProof)
    }
}

/// Checks that depend only on the transaction and the ring members it names:
/// ring signatures, range proofs and the balance proof. Ring members are
/// append-only, so a pass stays valid for the rest of the chain.
pub fn verify_stateless(
    cfg: &LedgerConfig,
    state: &LedgerState,
    tx: &Transaction,
) -> Result<(), RejectReason> {
    check_shape(cfg, tx)?;
    check_accounts(state, tx)?;
    let g = &cfg.group;
    let digest = tx.signing_digest(g);
    for input in &tx.shielded_inputs {
        let (ring, offsets) = ring_offsets(g, state, &input.ring, &input.pseudo_commitment);
        if !ring_verify_with_commitments(g, &digest, &ring, &offsets, &input.signature) {
            return Err(RejectReason::RingSignature);
        }
    }
    check_key_images_local(tx)?;
    for o in &tx.shielded_outputs {
        if o.range_proof.bits != cfg.range_bits || !verify_range(g, &o.commitment, &o.range_proof) {
            return Err(RejectReason::RangeProof);
        }
    }
    check_balance(cfg, tx, &digest)
}

fn check_key_images_local(tx: &Transaction) -> Result<(), RejectReason> {
    let mut seen = BTreeSet::new();
    for k in tx.key_images() {
        if !seen.insert(k) {
            return Err(RejectReason::DoubleSpend);
        }
    }
    Ok(())
}

fn check_outputs_fresh(state: &LedgerState, tx: &Transaction) -> Result<(), RejectReason> {
    let mut seen = BTreeSet::new();
    for o in &tx.shielded_outputs {
        if state.one_time_addresses.contains(&o.one_time_address)
            || !seen.insert(&o.one_time_address)
        {
            return Err(RejectReason::DuplicateOutput);
        }
    }
    Ok(())
}

fn check_serials(state: &LedgerState, tx: &Transaction) -> Result<(), RejectReason> {
    let mut seen = BTreeSet::new();
    for c in &tx.credentials {
        if state.serials.contains(&c.serial) || !seen.insert(c.serial) {
            return Err(RejectReason::CredentialReused);
        }
    }
    Ok(())
}

/// Full validation, in clause order: shape and references, ring signatures,
/// key images, range proofs, balance, policy, credential serials, funds.
pub fn validate_transaction(
    cfg: &LedgerConfig,
    state: &LedgerState,
    tx: &Transaction,
    policy: &dyn PolicyHook,
) -> Result<(), RejectReason> {
    validate_with(cfg, state, tx, policy, false)
}

/// As `validate_transaction`, optionally skipping the stateless
/// cryptographic checks when the caller has already run `verify_stateless`
/// for this exact transaction.
pub fn validate_with(
    cfg: &LedgerConfig,
    state: &LedgerState,
    tx: &Transaction,
    policy: &dyn PolicyHook,
    stateless_done: bool,
) -> Result<(), RejectReason> {
    let g = &cfg.group;
    check_shape(cfg, tx)?;
    check_accounts(state, tx)?;
    check_amount_bounds(cfg, tx)?;
    let digest = tx.signing_digest(g);
    if !stateless_done {
        for input in &tx.shielded_inputs {
            let (ring, offsets) = ring_offsets(g, state, &input.ring, &input.pseudo_commitment);
            if !ring_verify_with_commitments(g, &digest, &ring, &offsets, &input.signature) {
                return Err(RejectReason::RingSignature);
            }
        }
    }
    check_key_images_local(tx)?;
    if tx.key_images().any(|k| state.key_images.contains(k)) || state.applied.contains(&tx.id(g)) {
        return Err(RejectReason::DoubleSpend);
    }
    check_outputs_fresh(state, tx)?;
    if !stateless_done {
        for o in &tx.shielded_outputs {
            if o.range_proof.bits != cfg.range_bits
                || !verify_range(g, &o.commitment, &o.range_proof)
            {
                return Err(RejectReason::RangeProof);
            }
        }
        check_balance(cfg, tx, &digest)?;
    }
    policy.check(state, tx)?;
    check_serials(state, tx)?;
    check_funds(state, tx)
}

/// Applies an already validated transaction.
pub fn apply_transaction(cfg: &LedgerConfig, state: &mut LedgerState, tx: &Transaction) {
    let g = &cfg.group;
    for i in &tx.transparent_inputs {
        let entry = state
            .accounts
            .get_mut(&i.account)
            .expect("validated account");
        entry.balance = entry
            .balance
            .checked_sub(i.amount)
            .expect("validated funds");
    }
    for o in &tx.transparent_outputs {
        let entry = state
            .accounts
            .get_mut(&o.account)
            .expect("validated account");
        entry.balance = entry
            .balance
            .checked_add(o.amount)
            .expect("balance overflow");
    }
    if tx.kind == TxKind::Issue {
        let minted = tx.transparent_out_total().expect("validated amounts");
        state.supply = state.supply.checked_add(minted).expect("supply overflow");
    }
    state.fees = state.fees.checked_add(tx.fee).expect("fee overflow");
    for k in tx.key_images() {
        state.key_images.insert(k.clone());
    }
    for o in &tx.shielded_outputs {
        state.one_time_addresses.insert(o.one_time_address.clone());
        state.outputs.push(OutputRecord {
            one_time_address: o.one_time_address.clone(),
            ephemeral_public: o.ephemeral_public.clone(),
            commitment: o.commitment.clone(),
            encrypted_amount: o.encrypted_amount,
            height: state.height + 1,
        });
    }
    for c in &tx.credentials {
        state.serials.insert(c.serial);
    }
    state.applied.insert(tx.id(g));
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockError {
    pub index: usize,
    pub reason: RejectReason,
}

/// Validates and applies every transaction of `block` in order; on any
/// failure the state is left untouched.
pub fn apply_block(
    cfg: &LedgerConfig,
    state: &mut LedgerState,
    block: &Block,
    policy: &dyn PolicyHook,
) -> Result<(), BlockError> {
    let mut next = state.clone();
    for (index, tx) in block.transactions.iter().enumerate() {
        validate_transaction(cfg, &next, tx, policy)
            .map_err(|reason| BlockError { index, reason })?;
        apply_transaction(cfg, &mut next, tx);
    }
    next.height = block.height;
    *state = next;
    Ok(())
}

/// Opening known to the test harness for one output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputSecret {
    pub value: u64,
    pub blinding: Scalar,
    pub key_image: Element,
}

/// Harness-only: balances + unspent shielded value + fees = supply, with
/// every output opened from `secrets` (keyed by one-time address).
pub fn conservation_audit(
    cfg: &LedgerConfig,
    state: &LedgerState,
    secrets: &BTreeMap<Element, OutputSecret>,
) -> bool {
    let g = &cfg.group;
    let mut total: u128 = state.fees as u128;
    for a in state.accounts.values() {
        total += a.balance as u128;
    }
    for o in &state.outputs {
        let Some(s) = secrets.get(&o.one_time_address) else {
            return false;
        };
        let v = match g.scalar_u64(s.value) {
            Ok(v) => v,
            Err(_) => return false,
        };
        if !verify_opening(g, &o.commitment, &v, &s.blinding) {
            return false;
        }
        if !state.key_images.contains(&s.key_image) {
            total += s.value as u128;
        }
    }
    total == state.supply as u128
}
