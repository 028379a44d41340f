use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use thiserror::Error;

use super::state::{LedgerConfig, LedgerState, OutputSecret};
use super::tx::{
    excess_challenge, ExcessSignature, ShieldedInput, ShieldedOutput, Transaction,
    TransparentInput, TransparentOutput, TxKind,
};
use crate::entityreg::{AccountId, EntityId};
use crate::primitives::{
    amount_mask, commit, derive_stealth_keypair, key_image, make_onetime_output, output_blinding,
    prove_range, ring_sign_with_commitments, scan_output, Credential, CryptoError, Element, Group,
    RingSignature, Scalar, StealthAddress, StealthKeypair,
};

/// How decoy ring members are drawn from the output population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoySampler {
    /// Every earlier output equally likely.
    Uniform,
    /// Weight proportional to age, so old outputs dominate the decoys while
    /// real spends are not so skewed.
    AgeBiased,
}

impl DecoySampler {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(DecoySampler::Uniform),
            "age-biased" => Some(DecoySampler::AgeBiased),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DecoySampler::Uniform => "uniform",
            DecoySampler::AgeBiased => "age-biased",
        }
    }

    fn draw<R: RngCore + ?Sized>(&self, population: u64, rng: &mut R) -> u64 {
        match self {
            DecoySampler::Uniform => rng.gen_range(0..population),
            DecoySampler::AgeBiased => loop {
                // j = population - index has probability proportional to j
                let j = rng.gen_range(1..=population);
                if rng.gen_range(0..population) < j {
                    return population - j;
                }
            },
        }
    }

    /// Sorted ring of `ring_size` distinct indices below `population`
    /// containing `real`, and the position of `real` in it.
    pub fn build_ring<R: RngCore + ?Sized>(
        &self,
        population: u64,
        real: u64,
        ring_size: usize,
        rng: &mut R,
    ) -> Result<(Vec<u64>, usize), BuildError> {
        if ring_size == 0 || (population as usize) < ring_size || real >= population {
            return Err(BuildError::RingPopulation {
                population,
                requested: ring_size,
            });
        }
        let mut members = std::collections::BTreeSet::from([real]);
        while members.len() < ring_size {
            members.insert(self.draw(population, rng));
        }
        let ring: Vec<u64> = members.into_iter().collect();
        let pos = ring
            .iter()
            .position(|&i| i == real)
            .expect("real member present");
        Ok((ring, pos))
    }
}

impl fmt::Display for DecoySampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("insufficient funds: need {needed}, have {available}")]
    InsufficientFunds { needed: u64, available: u64 },
    #[error("unknown recipient `{0}`")]
    UnknownRecipient(String),
    #[error("ring population {population} smaller than requested ring size {requested}")]
    RingPopulation { population: u64, requested: usize },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnedOutput {
    pub index: u64,
    pub one_time_address: Element,
    pub value: u64,
    pub blinding: Scalar,
    pub spend_secret: Scalar,
    pub key_image: Element,
    pub spent: bool,
}

/// A private store: stealth keys plus the outputs found by scanning.
#[derive(Debug, Clone)]
pub struct Wallet {
    pub owner: EntityId,
    pub keys: StealthKeypair,
    pub outputs: Vec<OwnedOutput>,
    scanned: usize,
}

impl Wallet {
    pub fn new(group: &Group, owner: EntityId, seed: &[u8]) -> Self {
        Wallet {
            owner,
            keys: derive_stealth_keypair(group, seed),
            outputs: Vec::new(),
            scanned: 0,
        }
    }

    pub fn address(&self) -> StealthAddress {
        self.keys.address()
    }

    /// Picks up outputs addressed to this wallet and refreshes spent flags.
    pub fn scan(&mut self, cfg: &LedgerConfig, state: &LedgerState) {
        let g = &cfg.group;
        for (index, o) in state.outputs.iter().enumerate().skip(self.scanned) {
            let Some(spend_secret) =
                scan_output(g, &self.keys, &o.ephemeral_public, &o.one_time_address)
            else {
                continue;
            };
            let shared = g.exp(&o.ephemeral_public, &self.keys.scan_secret);
            let blinding = output_blinding(g, &shared);
            let mask = amount_mask(g, &shared);
            let mut raw = o.encrypted_amount;
            raw.iter_mut().zip(mask).for_each(|(b, m)| *b ^= m);
            let value = u64::from_be_bytes(raw);
            let opens = g
                .scalar_u64(value)
                .map(|v| crate::primitives::verify_opening(g, &o.commitment, &v, &blinding))
                .unwrap_or(false);
            if !opens {
                continue;
            }
            self.outputs.push(OwnedOutput {
                index: index as u64,
                one_time_address: o.one_time_address.clone(),
                value,
                blinding,
                key_image: key_image(g, &o.one_time_address, &spend_secret),
                spend_secret,
                spent: false,
            });
        }
        self.scanned = state.outputs.len();
        for o in &mut self.outputs {
            o.spent = state.key_images.contains(&o.key_image);
        }
    }

    pub fn balance(&self) -> u64 {
        self.outputs
            .iter()
            .filter(|o| !o.spent)
            .map(|o| o.value)
            .sum()
    }

    /// Oldest-first selection covering `needed`.
    fn select(&self, needed: u64) -> Result<Vec<&OwnedOutput>, BuildError> {
        let mut picked = Vec::new();
        let mut total = 0u64;
        for o in self.outputs.iter().filter(|o| !o.spent) {
            if total >= needed && !picked.is_empty() {
                break;
            }
            total += o.value;
            picked.push(o);
        }
        if total < needed || picked.is_empty() {
            return Err(BuildError::InsufficientFunds {
                needed,
                available: self.balance(),
            });
        }
        Ok(picked)
    }

    pub fn audit_secrets(&self) -> impl Iterator<Item = (Element, OutputSecret)> + '_ {
        self.outputs.iter().map(|o| {
            (
                o.one_time_address.clone(),
                OutputSecret {
                    value: o.value,
                    blinding: o.blinding.clone(),
                    key_image: o.key_image.clone(),
                },
            )
        })
    }
}

/// Shared inputs for every builder.
pub struct Builder<'a> {
    pub cfg: &'a LedgerConfig,
    pub state: &'a LedgerState,
    pub sampler: DecoySampler,
    pub ring_size: usize,
}

/// Secret side of a shielded spend, kept until the digest is known.
struct PendingInput {
    ring_keys: Vec<Element>,
    offsets: Vec<Element>,
    position: usize,
    spend_secret: Scalar,
    offset_secret: Scalar,
}

/// Sender-side opening of a created output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreatedOutput {
    pub one_time_address: Element,
    pub value: u64,
    pub blinding: Scalar,
}

/// Confidential transaction before its ring and excess signatures exist.
pub struct UnsignedTx {
    pub tx: Transaction,
    pending: Vec<PendingInput>,
    /// Sum of input pseudo blindings minus output blindings.
    excess: Scalar,
    pub created: Vec<CreatedOutput>,
}

impl UnsignedTx {
    /// Re-commits output `index` to `value` under its original blinding and
    /// re-proves its range when `value` fits. The excess is left alone, so
    /// unless the value is unchanged the balance no longer holds.
    pub fn set_output_value<R: RngCore + ?Sized>(
        &mut self,
        cfg: &LedgerConfig,
        index: usize,
        value: &Scalar,
        rng: &mut R,
    ) {
        let g = &cfg.group;
        let r = self.created[index].blinding.clone();
        let out = &mut self.tx.shielded_outputs[index];
        out.commitment = commit(g, value, &r).expect("reduced scalars");
        let small = value.value().to_u64_digits();
        if small.len() <= 1 {
            let v = small.first().copied().unwrap_or(0);
            if let Ok(p) = prove_range(g, v, &r, cfg.range_bits, rng) {
                out.range_proof = p;
            }
        }
    }

    /// Moves `delta` of blinding into output `index` while keeping the
    /// balance intact (the excess absorbs it).
    pub fn reblind_output(
        &mut self,
        cfg: &LedgerConfig,
        index: usize,
        value: &Scalar,
        delta: &Scalar,
    ) {
        let g = &cfg.group;
        let r = g.add(&self.created[index].blinding, delta);
        self.created[index].blinding = r.clone();
        self.tx.shielded_outputs[index].commitment = commit(g, value, &r).expect("reduced scalars");
        self.excess = g.sub(&self.excess, delta);
    }
}

impl<'a> Builder<'a> {
    fn group(&self) -> &Group {
        &self.cfg.group
    }

    fn empty(kind: TxKind) -> Transaction {
        Transaction {
            kind,
            transparent_inputs: Vec::new(),
            transparent_outputs: Vec::new(),
            shielded_inputs: Vec::new(),
            shielded_outputs: Vec::new(),
            fee: 0,
            credentials: Vec::new(),
            authority: None,
            nonce: 0,
            excess: None,
        }
    }

    fn owner_of(&self, account: &AccountId) -> Result<EntityId, BuildError> {
        self.state
            .accounts
            .get(account)
            .map(|a| a.owner.clone())
            .ok_or_else(|| BuildError::UnknownRecipient(account.0.clone()))
    }

    fn debit(&self, account: &AccountId, amount: u64) -> Result<TransparentInput, BuildError> {
        let available = self
            .state
            .balance(account)
            .ok_or_else(|| BuildError::UnknownRecipient(account.0.clone()))?;
        if available < amount {
            return Err(BuildError::InsufficientFunds {
                needed: amount,
                available,
            });
        }
        Ok(TransparentInput {
            account: account.clone(),
            amount,
        })
    }

    fn credit(&self, account: &AccountId, amount: u64) -> Result<TransparentOutput, BuildError> {
        Ok(TransparentOutput {
            account: account.clone(),
            amount,
            owner: self.owner_of(account)?,
        })
    }

    pub fn transparent<R: RngCore + ?Sized>(
        &self,
        from: &AccountId,
        to: &AccountId,
        amount: u64,
        fee: u64,
        rng: &mut R,
    ) -> Result<Transaction, BuildError> {
        let mut tx = Self::empty(TxKind::TransparentTransfer);
        let total = amount
            .checked_add(fee)
            .ok_or(BuildError::InsufficientFunds {
                needed: u64::MAX,
                available: 0,
            })?;
        tx.transparent_inputs.push(self.debit(from, total)?);
        tx.transparent_outputs.push(self.credit(to, amount)?);
        tx.fee = fee;
        tx.nonce = rng.next_u64();
        Ok(tx)
    }

    pub fn issue<R: RngCore + ?Sized>(
        &self,
        issuer: &EntityId,
        to: &AccountId,
        amount: u64,
        rng: &mut R,
    ) -> Result<Transaction, BuildError> {
        let mut tx = Self::empty(TxKind::Issue);
        tx.transparent_outputs.push(self.credit(to, amount)?);
        tx.authority = Some(issuer.clone());
        tx.nonce = rng.next_u64();
        Ok(tx)
    }

    fn add_output<R: RngCore + ?Sized>(
        &self,
        draft: &mut UnsignedTx,
        to: &StealthAddress,
        value: u64,
        rng: &mut R,
    ) -> Result<(), BuildError> {
        let g = self.group();
        let e = g.random_nonzero_scalar(rng);
        let keys = make_onetime_output(g, to, &e)?;
        let r = output_blinding(g, &keys.shared_secret);
        let c = commit(g, &g.scalar_u64(value)?, &r)?;
        let range_proof = prove_range(g, value, &r, self.cfg.range_bits, rng)?;
        let mut encrypted_amount = value.to_be_bytes();
        encrypted_amount
            .iter_mut()
            .zip(amount_mask(g, &keys.shared_secret))
            .for_each(|(b, m)| *b ^= m);
        draft.excess = g.sub(&draft.excess, &r);
        draft.created.push(CreatedOutput {
            one_time_address: keys.one_time_address.clone(),
            value,
            blinding: r,
        });
        draft.tx.shielded_outputs.push(ShieldedOutput {
            one_time_address: keys.one_time_address,
            ephemeral_public: keys.ephemeral_public,
            commitment: c,
            range_proof,
            encrypted_amount,
        });
        Ok(())
    }

    fn add_input<R: RngCore + ?Sized>(
        &self,
        draft: &mut UnsignedTx,
        owned: &OwnedOutput,
        rng: &mut R,
    ) -> Result<(), BuildError> {
        let g = self.group();
        let population = self.state.outputs.len() as u64;
        let (ring, position) =
            self.sampler
                .build_ring(population, owned.index, self.ring_size, rng)?;
        let pseudo_blinding = g.random_scalar(rng);
        let pseudo = commit(g, &g.scalar_u64(owned.value)?, &pseudo_blinding)?;
        let pseudo_inv = g.invert(pseudo.element());
        let (ring_keys, offsets): (Vec<Element>, Vec<Element>) = ring
            .iter()
            .map(|&i| {
                let o = &self.state.outputs[i as usize];
                (
                    o.one_time_address.clone(),
                    g.mul(o.commitment.element(), &pseudo_inv),
                )
            })
            .unzip();
        draft.excess = g.add(&draft.excess, &pseudo_blinding);
        draft.pending.push(PendingInput {
            ring_keys,
            offsets,
            position,
            spend_secret: owned.spend_secret.clone(),
            offset_secret: g.sub(&owned.blinding, &pseudo_blinding),
        });
        draft.tx.shielded_inputs.push(ShieldedInput {
            ring,
            pseudo_commitment: pseudo,
            signature: RingSignature {
                key_image: owned.key_image.clone(),
                challenge: g.zero(),
                responses: Vec::new(),
                commitment_responses: Vec::new(),
            },
        });
        Ok(())
    }

    /// Signs every input over the final digest and attaches the excess proof.
    pub fn sign<R: RngCore + ?Sized>(
        &self,
        mut draft: UnsignedTx,
        rng: &mut R,
    ) -> Result<(Transaction, Vec<CreatedOutput>), BuildError> {
        let g = self.group();
        draft.tx.nonce = rng.next_u64();
        let digest = draft.tx.signing_digest(g);
        for (input, p) in draft.tx.shielded_inputs.iter_mut().zip(&draft.pending) {
            input.signature = ring_sign_with_commitments(
                g,
                &digest,
                &p.ring_keys,
                &p.offsets,
                p.position,
                &p.spend_secret,
                &p.offset_secret,
                rng,
            )?;
        }
        let k = g.random_nonzero_scalar(rng);
        let nonce_commitment = g.exp_g(&k);
        let x = g.exp_g(&draft.excess);
        let c = excess_challenge(g, &x, &nonce_commitment, &digest);
        draft.tx.excess = Some(ExcessSignature {
            nonce_commitment,
            response: g.add(&k, &g.smul(&c, &draft.excess)),
        });
        Ok((draft.tx, draft.created))
    }

    fn draft(&self, kind: TxKind) -> UnsignedTx {
        UnsignedTx {
            tx: Self::empty(kind),
            pending: Vec::new(),
            excess: self.group().zero(),
            created: Vec::new(),
        }
    }

    /// Account to private store.
    pub fn prepare_shield<R: RngCore + ?Sized>(
        &self,
        from: &AccountId,
        to: &StealthAddress,
        amount: u64,
        fee: u64,
        rng: &mut R,
    ) -> Result<UnsignedTx, BuildError> {
        let mut d = self.draft(TxKind::Shield);
        let total = amount.saturating_add(fee);
        d.tx.transparent_inputs.push(self.debit(from, total)?);
        d.tx.fee = fee;
        self.add_output(&mut d, to, amount, rng)?;
        Ok(d)
    }

    pub fn shield<R: RngCore + ?Sized>(
        &self,
        from: &AccountId,
        to: &StealthAddress,
        amount: u64,
        fee: u64,
        rng: &mut R,
    ) -> Result<(Transaction, Vec<CreatedOutput>), BuildError> {
        let d = self.prepare_shield(from, to, amount, fee, rng)?;
        self.sign(d, rng)
    }

    fn spend_from_wallet<R: RngCore + ?Sized>(
        &self,
        d: &mut UnsignedTx,
        wallet: &Wallet,
        needed: u64,
        rng: &mut R,
    ) -> Result<u64, BuildError> {
        let picked = wallet.select(needed)?;
        let total: u64 = picked.iter().map(|o| o.value).sum();
        for o in picked {
            self.add_input(d, o, rng)?;
        }
        Ok(total - needed)
    }

    /// Private store to an institutional account.
    pub fn prepare_unshield<R: RngCore + ?Sized>(
        &self,
        wallet: &Wallet,
        to: &AccountId,
        amount: u64,
        fee: u64,
        credentials: Vec<Credential>,
        rng: &mut R,
    ) -> Result<UnsignedTx, BuildError> {
        let mut d = self.draft(TxKind::Unshield);
        d.tx.transparent_outputs.push(self.credit(to, amount)?);
        d.tx.fee = fee;
        d.tx.credentials = credentials;
        let change = self.spend_from_wallet(&mut d, wallet, amount.saturating_add(fee), rng)?;
        self.add_output(&mut d, &wallet.address(), change, rng)?;
        Ok(d)
    }

    pub fn unshield<R: RngCore + ?Sized>(
        &self,
        wallet: &Wallet,
        to: &AccountId,
        amount: u64,
        fee: u64,
        credentials: Vec<Credential>,
        rng: &mut R,
    ) -> Result<(Transaction, Vec<CreatedOutput>), BuildError> {
        let d = self.prepare_unshield(wallet, to, amount, fee, credentials, rng)?;
        self.sign(d, rng)
    }

    /// Direct private store to private store.
    pub fn prepare_shielded_transfer<R: RngCore + ?Sized>(
        &self,
        wallet: &Wallet,
        to: &StealthAddress,
        amount: u64,
        fee: u64,
        rng: &mut R,
    ) -> Result<UnsignedTx, BuildError> {
        let mut d = self.draft(TxKind::ShieldedTransfer);
        d.tx.fee = fee;
        let change = self.spend_from_wallet(&mut d, wallet, amount.saturating_add(fee), rng)?;
        self.add_output(&mut d, to, amount, rng)?;
        self.add_output(&mut d, &wallet.address(), change, rng)?;
        Ok(d)
    }

    pub fn shielded_transfer<R: RngCore + ?Sized>(
        &self,
        wallet: &Wallet,
        to: &StealthAddress,
        amount: u64,
        fee: u64,
        rng: &mut R,
    ) -> Result<(Transaction, Vec<CreatedOutput>), BuildError> {
        let d = self.prepare_shielded_transfer(wallet, to, amount, fee, rng)?;
        self.sign(d, rng)
    }

    /// Intermediary-posted batch; inputs and outputs are shuffled so that
    /// positions do not pair payers with payees.
    pub fn prepare_mediated_batch<R: RngCore + ?Sized>(
        &self,
        legs: &[BatchLeg<'_>],
        intermediary: &EntityId,
        fee_per_leg: u64,
        rng: &mut R,
    ) -> Result<UnsignedTx, BuildError> {
        let mut d = self.draft(TxKind::MediatedBatch);
        d.tx.authority = Some(intermediary.clone());
        for leg in legs {
            let change = self.spend_from_wallet(
                &mut d,
                leg.payer,
                leg.amount.saturating_add(fee_per_leg),
                rng,
            )?;
            self.add_output(&mut d, &leg.payee, leg.amount, rng)?;
            self.add_output(&mut d, &leg.payer.address(), change, rng)?;
            d.tx.credentials.extend(leg.credential.iter().cloned());
            d.tx.fee += fee_per_leg;
        }
        let mut order: Vec<usize> = (0..d.tx.shielded_inputs.len()).collect();
        order.shuffle(rng);
        let inputs = std::mem::take(&mut d.tx.shielded_inputs);
        let mut pending: Vec<Option<PendingInput>> = d.pending.drain(..).map(Some).collect();
        let mut inputs: Vec<Option<ShieldedInput>> = inputs.into_iter().map(Some).collect();
        for &i in &order {
            d.tx.shielded_inputs
                .push(inputs[i].take().expect("each index once"));
            d.pending.push(pending[i].take().expect("each index once"));
        }
        let mut zipped: Vec<(ShieldedOutput, CreatedOutput)> =
            d.tx.shielded_outputs
                .drain(..)
                .zip(d.created.drain(..))
                .collect();
        zipped.shuffle(rng);
        for (o, c) in zipped {
            d.tx.shielded_outputs.push(o);
            d.created.push(c);
        }
        Ok(d)
    }

    pub fn mediated_batch<R: RngCore + ?Sized>(
        &self,
        legs: &[BatchLeg<'_>],
        intermediary: &EntityId,
        fee_per_leg: u64,
        rng: &mut R,
    ) -> Result<(Transaction, Vec<CreatedOutput>), BuildError> {
        let d = self.prepare_mediated_batch(legs, intermediary, fee_per_leg, rng)?;
        self.sign(d, rng)
    }
}

/// One participant of a mediated batch.
pub struct BatchLeg<'w> {
    pub payer: &'w Wallet,
    pub payee: StealthAddress,
    pub amount: u64,
    pub credential: Option<Credential>,
}

/// Secrets of every output known to the given wallets, plus the public
/// zero openings of seeded outputs.
pub fn collect_audit_secrets<'w>(
    cfg: &LedgerConfig,
    wallets: impl IntoIterator<Item = &'w Wallet>,
    seeded: &[Element],
) -> BTreeMap<Element, OutputSecret> {
    let g = &cfg.group;
    let mut out: BTreeMap<Element, OutputSecret> = seeded
        .iter()
        .map(|p| {
            (
                p.clone(),
                OutputSecret {
                    value: 0,
                    blinding: g.zero(),
                    key_image: g.identity(),
                },
            )
        })
        .collect();
    for w in wallets {
        out.extend(w.audit_secrets());
    }
    out
}
