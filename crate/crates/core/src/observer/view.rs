use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::RangeInclusive;

use thiserror::Error;

use super::attack::Heuristic;
use crate::consensus::NodeId;
use crate::entityreg::{AccountId, EntityId, EntityKind, Registry};
use crate::ledger::{Block, Encoder, LedgerState, OwnedOutput, Transaction, TxId, TxKind, Wallet};
use crate::primitives::{commit, key_image, Element, Group, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObserverClass {
    /// Sees the whole chain and the registry.
    Regulator,
    /// A consensus node: the whole chain, plus owners of its own accounts.
    Institution(NodeId),
    /// The chain without the registry.
    Public,
    /// Like `Public`, running a linkability heuristic.
    Adversary(Heuristic),
}

impl fmt::Display for ObserverClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObserverClass::Regulator => f.write_str("regulator"),
            ObserverClass::Institution(n) => write!(f, "institution-{n}"),
            ObserverClass::Public => f.write_str("public"),
            ObserverClass::Adversary(h) => write!(f, "adversary-{h}"),
        }
    }
}

/// Read-only snapshot of a committed ledger and its world model.
#[derive(Clone, Copy)]
pub struct LedgerView<'a> {
    pub group: &'a Group,
    pub chain: &'a [Block],
    pub state: &'a LedgerState,
    pub registry: &'a Registry,
    /// Institution operating each consensus node, by node id.
    pub institutions: &'a [EntityId],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibleLeg {
    pub account: AccountId,
    pub amount: u64,
    /// Known only to observers allowed to map accounts to people.
    pub owner: Option<EntityId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibleRing {
    pub ring: Vec<u64>,
    pub key_image: Element,
    pub pseudo_commitment: Element,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibleOutput {
    pub one_time_address: Element,
    pub commitment: Element,
}

/// One transaction as a given observer class sees it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibleRecord {
    pub tx_id: TxId,
    pub height: u64,
    pub kind: TxKind,
    pub fee: u64,
    pub authority: Option<EntityId>,
    pub debits: Vec<VisibleLeg>,
    pub credits: Vec<VisibleLeg>,
    pub shielded_inputs: Vec<VisibleRing>,
    pub shielded_outputs: Vec<VisibleOutput>,
    pub credentials_presented: usize,
}

impl VisibleRecord {
    /// Canonical bytes of everything the record exposes.
    pub fn encode(&self, g: &Group) -> Vec<u8> {
        let mut e = Encoder::default();
        e.bytes(&self.tx_id)
            .u64(self.height)
            .str(self.kind.as_str());
        e.u64(self.fee)
            .opt_str(self.authority.as_ref().map(|a| a.0.as_str()));
        for legs in [&self.debits, &self.credits] {
            e.count(legs.len());
            for l in legs {
                e.str(&l.account.0)
                    .u64(l.amount)
                    .opt_str(l.owner.as_ref().map(|o| o.0.as_str()));
            }
        }
        e.count(self.shielded_inputs.len());
        for r in &self.shielded_inputs {
            e.count(r.ring.len());
            for &m in &r.ring {
                e.u64(m);
            }
            e.element(g, &r.key_image).element(g, &r.pseudo_commitment);
        }
        e.count(self.shielded_outputs.len());
        for o in &self.shielded_outputs {
            e.element(g, &o.one_time_address).element(g, &o.commitment);
        }
        e.count(self.credentials_presented);
        e.buf
    }
}

fn owner_visible(v: &LedgerView, class: ObserverClass, account: &AccountId) -> Option<EntityId> {
    let (institution, owner) = v.registry.lookup_account(account).ok()?;
    match class {
        ObserverClass::Regulator => Some(owner.clone()),
        ObserverClass::Institution(node) => {
            (v.institutions.get(node as usize) == Some(institution)).then(|| owner.clone())
        }
        ObserverClass::Public | ObserverClass::Adversary(_) => None,
    }
}

fn project(v: &LedgerView, class: ObserverClass, height: u64, tx: &Transaction) -> VisibleRecord {
    let g = v.group;
    let leg = |account: &AccountId, amount: u64| VisibleLeg {
        account: account.clone(),
        amount,
        owner: owner_visible(v, class, account),
    };
    VisibleRecord {
        tx_id: tx.id(g),
        height,
        kind: tx.kind,
        fee: tx.fee,
        authority: tx.authority.clone(),
        debits: tx
            .transparent_inputs
            .iter()
            .map(|i| leg(&i.account, i.amount))
            .collect(),
        credits: tx
            .transparent_outputs
            .iter()
            .map(|o| leg(&o.account, o.amount))
            .collect(),
        shielded_inputs: tx
            .shielded_inputs
            .iter()
            .map(|i| VisibleRing {
                ring: i.ring.clone(),
                key_image: i.signature.key_image.clone(),
                pseudo_commitment: i.pseudo_commitment.element().clone(),
            })
            .collect(),
        shielded_outputs: tx
            .shielded_outputs
            .iter()
            .map(|o| VisibleOutput {
                one_time_address: o.one_time_address.clone(),
                commitment: o.commitment.element().clone(),
            })
            .collect(),
        credentials_presented: tx.credentials.len(),
    }
}

/// Projects the committed chain for one observer class. Shielded legs expose
/// rings, key images and commitments only.
pub fn view(v: &LedgerView, class: ObserverClass) -> Vec<VisibleRecord> {
    v.chain
        .iter()
        .flat_map(|b| b.transactions.iter().map(move |tx| (b.height, tx)))
        .map(|(h, tx)| project(v, class, h, tx))
        .collect()
}

/// Share of committed transactions in which each node's institution can
/// name at least one party: it holds one of the accounts involved, or it is
/// the posting intermediary or issuer.
pub fn institution_share(v: &LedgerView) -> BTreeMap<EntityId, f64> {
    let txs: Vec<&Transaction> = v.chain.iter().flat_map(|b| &b.transactions).collect();
    let mut out = BTreeMap::new();
    for inst in v.institutions {
        let seen = txs
            .iter()
            .filter(|tx| {
                tx.authority.as_ref() == Some(inst)
                    || tx
                        .transparent_inputs
                        .iter()
                        .map(|i| &i.account)
                        .chain(tx.transparent_outputs.iter().map(|o| &o.account))
                        .any(|a| {
                            v.registry
                                .lookup_account(a)
                                .is_ok_and(|(holder, _)| holder == inst)
                        })
            })
            .count();
        let share = if txs.is_empty() {
            0.0
        } else {
            seen as f64 / txs.len() as f64
        };
        out.insert(inst.clone(), share);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ObserverError {
    #[error("`{0}` is not a registered business")]
    NotABusiness(EntityId),
    #[error("unknown entity `{0}`")]
    UnknownEntity(EntityId),
    #[error("transaction {0} is not on the chain")]
    UnknownTransaction(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxItem {
    pub height: u64,
    pub tx_id: TxId,
    pub kind: TxKind,
    pub account: AccountId,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxReport {
    pub entity: EntityId,
    pub period: (u64, u64),
    pub items: Vec<TaxItem>,
    pub total: u64,
}

/// Income statement: every committed transparent credit to the business's
/// accounts with block height in `period`.
pub fn tax_report(
    v: &LedgerView,
    entity: &EntityId,
    period: RangeInclusive<u64>,
) -> Result<TaxReport, ObserverError> {
    let kind = v
        .registry
        .entity(entity)
        .map_err(|_| ObserverError::UnknownEntity(entity.clone()))?
        .kind;
    if kind != EntityKind::RegisteredBusiness {
        return Err(ObserverError::NotABusiness(entity.clone()));
    }
    let accounts: BTreeSet<&AccountId> = v
        .registry
        .accounts_of(entity)
        .into_iter()
        .map(|a| &a.id)
        .collect();
    let mut items = Vec::new();
    for block in v.chain.iter().filter(|b| period.contains(&b.height)) {
        for tx in &block.transactions {
            for o in tx
                .transparent_outputs
                .iter()
                .filter(|o| accounts.contains(&o.account))
            {
                items.push(TaxItem {
                    height: block.height,
                    tx_id: tx.id(v.group),
                    kind: tx.kind,
                    account: o.account.clone(),
                    amount: o.amount,
                });
            }
        }
    }
    Ok(TaxReport {
        entity: entity.clone(),
        period: (*period.start(), *period.end()),
        total: items.iter().map(|i| i.amount).sum(),
        items,
    })
}

/// Secrets a participant hands to an investigator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Disclosure {
    pub outputs: Vec<DisclosedOutput>,
    pub inputs: Vec<DisclosedInput>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisclosedOutput {
    /// Position among the transaction's shielded outputs.
    pub position: usize,
    pub value: u64,
    pub blinding: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisclosedInput {
    /// Position among the transaction's shielded inputs.
    pub position: usize,
    /// Global index of the output claimed as the true spend.
    pub member: u64,
    pub spend_secret: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mismatch {
    NoSuchOutput(usize),
    CommitmentMismatch(usize),
    NoSuchInput(usize),
    NotARingMember { input: usize, member: u64 },
    KeyImageMismatch(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisclosureReport {
    pub tx_id: TxId,
    /// Opened output amounts by output position.
    pub amounts: Vec<(usize, u64)>,
    /// Confirmed true spends: (input position, global output index).
    pub spends: Vec<(usize, u64)>,
    pub consistent: bool,
    pub mismatches: Vec<Mismatch>,
}

impl Disclosure {
    /// What the author of a transaction knows about the outputs it made.
    pub fn from_created(tx: &Transaction, created: &[crate::ledger::CreatedOutput]) -> Disclosure {
        let outputs = created
            .iter()
            .filter_map(|c| {
                let position = tx
                    .shielded_outputs
                    .iter()
                    .position(|o| o.one_time_address == c.one_time_address)?;
                Some(DisclosedOutput {
                    position,
                    value: c.value,
                    blinding: c.blinding.clone(),
                })
            })
            .collect();
        Disclosure {
            outputs,
            inputs: Vec::new(),
        }
    }

    /// What a wallet can open about `tx`: its received outputs and its own
    /// spends.
    pub fn from_wallet(tx: &Transaction, wallet: &Wallet) -> Disclosure {
        let by_address: BTreeMap<&Element, &OwnedOutput> = wallet
            .outputs
            .iter()
            .map(|o| (&o.one_time_address, o))
            .collect();
        let by_image: BTreeMap<&Element, &OwnedOutput> =
            wallet.outputs.iter().map(|o| (&o.key_image, o)).collect();
        Disclosure {
            outputs: tx
                .shielded_outputs
                .iter()
                .enumerate()
                .filter_map(|(position, o)| {
                    by_address
                        .get(&o.one_time_address)
                        .map(|w| DisclosedOutput {
                            position,
                            value: w.value,
                            blinding: w.blinding.clone(),
                        })
                })
                .collect(),
            inputs: tx
                .shielded_inputs
                .iter()
                .enumerate()
                .filter_map(|(position, i)| {
                    by_image
                        .get(&i.signature.key_image)
                        .map(|w| DisclosedInput {
                            position,
                            member: w.index,
                            spend_secret: w.spend_secret.clone(),
                        })
                })
                .collect(),
        }
    }
}

fn find_tx<'a>(v: &LedgerView<'a>, id: &TxId) -> Option<&'a Transaction> {
    v.chain
        .iter()
        .flat_map(|b| &b.transactions)
        .find(|t| &t.id(v.group) == id)
}

/// Checks a participant's secrets against the committed transaction and
/// opens what they cover. Nothing beyond the disclosed secrets is used, so
/// a counterparty's own spends stay hidden.
pub fn cooperative_disclosure(
    v: &LedgerView,
    tx_id: &TxId,
    disclosure: &Disclosure,
) -> Result<DisclosureReport, ObserverError> {
    let g = v.group;
    let tx = find_tx(v, tx_id)
        .ok_or_else(|| ObserverError::UnknownTransaction(crate::ledger::short_hex(tx_id)))?;
    let mut mismatches = Vec::new();
    let mut amounts = Vec::new();
    for d in &disclosure.outputs {
        let Some(o) = tx.shielded_outputs.get(d.position) else {
            mismatches.push(Mismatch::NoSuchOutput(d.position));
            continue;
        };
        let opened = g
            .scalar_u64(d.value)
            .ok()
            .and_then(|val| commit(g, &val, &d.blinding).ok());
        if opened.as_ref() == Some(&o.commitment) {
            amounts.push((d.position, d.value));
        } else {
            mismatches.push(Mismatch::CommitmentMismatch(d.position));
        }
    }
    let mut spends = Vec::new();
    for d in &disclosure.inputs {
        let Some(input) = tx.shielded_inputs.get(d.position) else {
            mismatches.push(Mismatch::NoSuchInput(d.position));
            continue;
        };
        let Some(record) = input
            .ring
            .contains(&d.member)
            .then(|| v.state.outputs.get(d.member as usize))
            .flatten()
        else {
            mismatches.push(Mismatch::NotARingMember {
                input: d.position,
                member: d.member,
            });
            continue;
        };
        let pk_ok = g.exp_g(&d.spend_secret) == record.one_time_address;
        let image = key_image(g, &record.one_time_address, &d.spend_secret);
        if pk_ok && image == input.signature.key_image {
            spends.push((d.position, d.member));
        } else {
            mismatches.push(Mismatch::KeyImageMismatch(d.position));
        }
    }
    Ok(DisclosureReport {
        tx_id: *tx_id,
        amounts,
        spends,
        consistent: mismatches.is_empty(),
        mismatches,
    })
}

/// Ring positions of one shielded input that remain possible true spends
/// for someone holding the given one-time secrets (by global output index).
pub fn candidate_slots(
    v: &LedgerView,
    tx: &Transaction,
    input: usize,
    known: &BTreeMap<u64, Scalar>,
) -> Vec<usize> {
    let g = v.group;
    let i = &tx.shielded_inputs[input];
    let mut open = Vec::new();
    for (slot, member) in i.ring.iter().enumerate() {
        match known.get(member) {
            Some(secret) => {
                let p = &v.state.outputs[*member as usize].one_time_address;
                if key_image(g, p, secret) == i.signature.key_image {
                    return vec![slot];
                }
            }
            None => open.push(slot),
        }
    }
    open
}
