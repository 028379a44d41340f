//! Regulatory rule engine for the two architectures.
//!
//! `Supported` lets individuals hold value in private stores and pay each
//! other directly; `Mediated` forces private-to-private exchange through a
//! credential-checking intermediary and gives institutions blacklist and
//! identification-threshold powers over the transparent edge.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entityreg::{AccountId, EntityId, EntityKind, Registry, RegistryError};
use crate::ledger::{LedgerState, PolicyHook, RejectReason, Transaction, TxKind};
use crate::primitives::{credential_verify, Group};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Supported,
    Mediated,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Supported, Mode::Mediated];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Supported => "supported",
            Mode::Mediated => "mediated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "supported" => Some(Mode::Supported),
            "mediated" => Some(Mode::Mediated),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DenyReason {
    MediationRequired,
    BusinessToStoreForbidden,
    Blacklisted,
    CredentialRequired,
    CredentialReused,
    ThresholdIdentificationRequired,
    IssuerNotAuthorized,
}

impl DenyReason {
    pub const ALL: [DenyReason; 7] = [
        DenyReason::MediationRequired,
        DenyReason::BusinessToStoreForbidden,
        DenyReason::Blacklisted,
        DenyReason::CredentialRequired,
        DenyReason::CredentialReused,
        DenyReason::ThresholdIdentificationRequired,
        DenyReason::IssuerNotAuthorized,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DenyReason::MediationRequired => "MediationRequired",
            DenyReason::BusinessToStoreForbidden => "BusinessToStoreForbidden",
            DenyReason::Blacklisted => "Blacklisted",
            DenyReason::CredentialRequired => "CredentialRequired",
            DenyReason::CredentialReused => "CredentialReused",
            DenyReason::ThresholdIdentificationRequired => "ThresholdIdentificationRequired",
            DenyReason::IssuerNotAuthorized => "IssuerNotAuthorized",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Allow,
    Deny(DenyReason),
}

impl Verdict {
    pub fn is_allow(&self) -> bool {
        matches!(self, Verdict::Allow)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Allow => f.write_str("Allow"),
            Verdict::Deny(r) => write!(f, "Deny({r})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceClass {
    Account,
    PrivateStore,
    /// New money; only meaningful for `Issue`.
    Mint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DestClass {
    Account,
    PrivateStore,
}

impl SourceClass {
    pub const ALL: [SourceClass; 3] = [
        SourceClass::Account,
        SourceClass::PrivateStore,
        SourceClass::Mint,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SourceClass::Account => "account",
            SourceClass::PrivateStore => "store",
            SourceClass::Mint => "mint",
        }
    }
}

impl DestClass {
    pub const ALL: [DestClass; 2] = [DestClass::Account, DestClass::PrivateStore];

    pub fn as_str(&self) -> &'static str {
        match self {
            DestClass::Account => "account",
            DestClass::PrivateStore => "store",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AmountVisibility {
    Cleartext(u64),
    Hidden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CredentialStatus {
    Absent,
    Valid,
    Reused,
}

impl CredentialStatus {
    pub const ALL: [CredentialStatus; 3] = [
        CredentialStatus::Absent,
        CredentialStatus::Valid,
        CredentialStatus::Reused,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntentDescriptor {
    pub source_class: SourceClass,
    pub source_kind: Option<EntityKind>,
    pub destination_class: DestClass,
    pub destination_kind: Option<EntityKind>,
    /// Owner and account of a transparent destination, used for blacklists.
    pub destination_entity: Option<EntityId>,
    pub destination_account: Option<AccountId>,
    pub tx_kind: TxKind,
    pub amount: AmountVisibility,
    pub credentials: CredentialStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("descriptor is missing `{0}`")]
    Incomplete(&'static str),
    #[error("{kind:?} cannot move value from {from:?} to {to:?}")]
    ShapeMismatch {
        kind: TxKind,
        from: SourceClass,
        to: DestClass,
    },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    pub mode: Mode,
    pub blacklisted_entities: BTreeSet<EntityId>,
    pub blacklisted_accounts: BTreeSet<AccountId>,
    pub identification_threshold: Option<u64>,
    /// Entity whose registered key signs eligibility credentials.
    pub credential_issuer: Option<EntityId>,
    pub mediation_fee: u64,
}

impl RuleSet {
    pub fn new(mode: Mode) -> Self {
        RuleSet {
            mode,
            blacklisted_entities: BTreeSet::new(),
            blacklisted_accounts: BTreeSet::new(),
            identification_threshold: None,
            credential_issuer: None,
            mediation_fee: 0,
        }
    }

    pub fn is_blacklisted(&self, entity: Option<&EntityId>, account: Option<&AccountId>) -> bool {
        entity.is_some_and(|e| self.blacklisted_entities.contains(e))
            || account.is_some_and(|a| self.blacklisted_accounts.contains(a))
    }

    /// Flags an entity or an account id; ids are resolved against the registry.
    pub fn update_blacklist(
        &mut self,
        registry: &Registry,
        id: &str,
        flag: bool,
    ) -> Result<(), PolicyError> {
        let entity = EntityId(id.to_string());
        let account = AccountId(id.to_string());
        if registry.entity(&entity).is_ok() {
            set_flag(&mut self.blacklisted_entities, entity, flag);
        } else if registry.lookup_account(&account).is_ok() {
            set_flag(&mut self.blacklisted_accounts, account, flag);
        } else {
            return Err(RegistryError::UnknownEntity(entity).into());
        }
        Ok(())
    }
}

fn set_flag<T: Ord>(set: &mut BTreeSet<T>, id: T, flag: bool) {
    if flag {
        set.insert(id);
    } else {
        set.remove(&id);
    }
}

/// Source and destination classes each transaction kind moves value between.
pub fn kind_shape(kind: TxKind) -> (SourceClass, DestClass) {
    match kind {
        TxKind::TransparentTransfer => (SourceClass::Account, DestClass::Account),
        TxKind::Shield => (SourceClass::Account, DestClass::PrivateStore),
        TxKind::Unshield => (SourceClass::PrivateStore, DestClass::Account),
        TxKind::ShieldedTransfer | TxKind::MediatedBatch => {
            (SourceClass::PrivateStore, DestClass::PrivateStore)
        }
        TxKind::Issue => (SourceClass::Mint, DestClass::Account),
    }
}

pub fn authorize(desc: &IntentDescriptor, rules: &RuleSet) -> Result<Verdict, PolicyError> {
    let source_kind = desc
        .source_kind
        .ok_or(PolicyError::Incomplete("source kind"))?;
    let dest_kind = desc
        .destination_kind
        .ok_or(PolicyError::Incomplete("destination kind"))?;
    if kind_shape(desc.tx_kind) != (desc.source_class, desc.destination_class) {
        return Err(PolicyError::ShapeMismatch {
            kind: desc.tx_kind,
            from: desc.source_class,
            to: desc.destination_class,
        });
    }
    let mediated = rules.mode == Mode::Mediated;
    let deny = |r| Ok(Verdict::Deny(r));

    if desc.tx_kind == TxKind::Issue && !(mediated && source_kind == EntityKind::CentralBank) {
        return deny(DenyReason::IssuerNotAuthorized);
    }
    // Private stores belong to individuals only; businesses settle through
    // institutional accounts.
    let touches_store = desc.source_class == SourceClass::PrivateStore
        || desc.destination_class == DestClass::PrivateStore;
    if touches_store
        && (source_kind != EntityKind::Individual
            || desc.destination_class == DestClass::PrivateStore
                && dest_kind != EntityKind::Individual)
    {
        return deny(DenyReason::BusinessToStoreForbidden);
    }
    if !mediated {
        return Ok(Verdict::Allow);
    }

    match desc.tx_kind {
        TxKind::ShieldedTransfer => return deny(DenyReason::MediationRequired),
        TxKind::MediatedBatch => match desc.credentials {
            CredentialStatus::Absent => return deny(DenyReason::CredentialRequired),
            CredentialStatus::Reused => return deny(DenyReason::CredentialReused),
            CredentialStatus::Valid => {}
        },
        _ => {}
    }
    if desc.destination_class == DestClass::Account
        && rules.is_blacklisted(
            desc.destination_entity.as_ref(),
            desc.destination_account.as_ref(),
        )
    {
        return deny(DenyReason::Blacklisted);
    }
    if desc.tx_kind == TxKind::Unshield {
        if let Some(threshold) = rules.identification_threshold {
            let amount = match desc.amount {
                AmountVisibility::Cleartext(a) => a,
                AmountVisibility::Hidden => return Err(PolicyError::Incomplete("amount")),
            };
            if amount > threshold {
                match desc.credentials {
                    CredentialStatus::Valid => {}
                    CredentialStatus::Reused => return deny(DenyReason::CredentialReused),
                    CredentialStatus::Absent => {
                        return deny(DenyReason::ThresholdIdentificationRequired)
                    }
                }
            }
        }
    }
    Ok(Verdict::Allow)
}

pub const ELIGIBLE: &str = "eligible";

/// Ledger-side policy check: derives the intent descriptor from a
/// transaction's public data and the registry, then calls `authorize`.
pub struct PolicyContext<'a> {
    pub rules: &'a RuleSet,
    pub registry: &'a Registry,
    pub group: &'a Group,
}

impl PolicyContext<'_> {
    fn credential_status(&self, state: &LedgerState, tx: &Transaction) -> CredentialStatus {
        let issuer = self
            .rules
            .credential_issuer
            .as_ref()
            .and_then(|id| self.registry.issuer_key(id));
        let (Some(issuer), false) = (issuer, tx.credentials.is_empty()) else {
            return CredentialStatus::Absent;
        };
        let all_valid = tx
            .credentials
            .iter()
            .all(|c| c.attribute == ELIGIBLE && credential_verify(self.group, issuer, c));
        // every participant of a batch presents one
        if !all_valid || tx.kind == TxKind::MediatedBatch && tx.credentials.len() < 2 {
            return CredentialStatus::Absent;
        }
        let mut seen = BTreeSet::new();
        let reused = tx
            .credentials
            .iter()
            .any(|c| state.serials.contains(&c.serial) || !seen.insert(c.serial));
        if reused {
            CredentialStatus::Reused
        } else {
            CredentialStatus::Valid
        }
    }

    pub fn describe(
        &self,
        state: &LedgerState,
        tx: &Transaction,
    ) -> Result<IntentDescriptor, PolicyError> {
        let (source_class, destination_class) = kind_shape(tx.kind);
        let source_kind = match source_class {
            SourceClass::Account => {
                let input = tx
                    .transparent_inputs
                    .first()
                    .ok_or(PolicyError::Incomplete("source account"))?;
                Some(self.registry.account_owner_kind(&input.account)?)
            }
            // stores exist only for individuals
            SourceClass::PrivateStore => Some(EntityKind::Individual),
            SourceClass::Mint => {
                let issuer = tx
                    .authority
                    .as_ref()
                    .ok_or(PolicyError::Incomplete("issuer"))?;
                Some(self.registry.entity(issuer)?.kind)
            }
        };
        let dest = tx.transparent_outputs.first();
        let (destination_kind, destination_entity, destination_account, amount) =
            match destination_class {
                DestClass::Account => {
                    let out = dest.ok_or(PolicyError::Incomplete("destination account"))?;
                    (
                        Some(self.registry.account_owner_kind(&out.account)?),
                        Some(out.owner.clone()),
                        Some(out.account.clone()),
                        AmountVisibility::Cleartext(out.amount),
                    )
                }
                DestClass::PrivateStore => (
                    Some(EntityKind::Individual),
                    None,
                    None,
                    AmountVisibility::Hidden,
                ),
            };
        Ok(IntentDescriptor {
            source_class,
            source_kind,
            destination_class,
            destination_kind,
            destination_entity,
            destination_account,
            tx_kind: tx.kind,
            amount,
            credentials: self.credential_status(state, tx),
        })
    }
}

impl PolicyHook for PolicyContext<'_> {
    fn check(&self, state: &LedgerState, tx: &Transaction) -> Result<(), RejectReason> {
        let desc = self
            .describe(state, tx)
            .map_err(|_| RejectReason::Malformed)?;
        match authorize(&desc, self.rules) {
            Ok(Verdict::Allow) => Ok(()),
            Ok(Verdict::Deny(r)) => Err(RejectReason::Policy(r)),
            Err(_) => Err(RejectReason::Malformed),
        }
    }
}

/// One row of the printable allow/deny matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixRow {
    pub tx_kind: TxKind,
    pub source_class: SourceClass,
    pub source_kind: EntityKind,
    pub destination_class: DestClass,
    pub destination_kind: EntityKind,
    pub without_credentials: Verdict,
    pub with_credentials: Verdict,
    pub destination_blacklisted: Verdict,
}

/// Every well-shaped combination of kind and entity kinds under `mode`.
pub fn policy_matrix(mode: Mode) -> Vec<MatrixRow> {
    let mut rules = RuleSet::new(mode);
    rules.blacklisted_entities.insert(EntityId::from("listed"));
    let mut rows = Vec::new();
    for tx_kind in TxKind::ALL {
        let (source_class, destination_class) = kind_shape(tx_kind);
        for source_kind in EntityKind::ALL {
            for destination_kind in EntityKind::ALL {
                let desc = |credentials, dest: &str| IntentDescriptor {
                    source_class,
                    source_kind: Some(source_kind),
                    destination_class,
                    destination_kind: Some(destination_kind),
                    destination_entity: Some(EntityId::from(dest)),
                    destination_account: None,
                    tx_kind,
                    amount: match destination_class {
                        DestClass::Account => AmountVisibility::Cleartext(1),
                        DestClass::PrivateStore => AmountVisibility::Hidden,
                    },
                    credentials,
                };
                let run = |d: IntentDescriptor| authorize(&d, &rules).expect("well-shaped");
                rows.push(MatrixRow {
                    tx_kind,
                    source_class,
                    source_kind,
                    destination_class,
                    destination_kind,
                    without_credentials: run(desc(CredentialStatus::Absent, "payee")),
                    with_credentials: run(desc(CredentialStatus::Valid, "payee")),
                    destination_blacklisted: run(desc(CredentialStatus::Valid, "listed")),
                });
            }
        }
    }
    rows
}

pub fn render_matrix(mode: Mode) -> String {
    let rows = policy_matrix(mode);
    let mut out = format!("policy matrix, mode={mode}\n");
    out.push_str(&format!(
        "{:<20} {:<8} {:<21} {:<6} {:<21} {:<34} {:<34} {}\n",
        "kind",
        "from",
        "source kind",
        "to",
        "dest kind",
        "no credentials",
        "valid credentials",
        "dest blacklisted"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<20} {:<8} {:<21} {:<6} {:<21} {:<34} {:<34} {}\n",
            r.tx_kind.as_str(),
            r.source_class.as_str(),
            r.source_kind.as_str(),
            r.destination_class.as_str(),
            r.destination_kind.as_str(),
            r.without_credentials.to_string(),
            r.with_credentials.to_string(),
            r.destination_blacklisted
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entityreg::Entity;

    fn intent(kind: TxKind, src: EntityKind, dst: EntityKind) -> IntentDescriptor {
        let (source_class, destination_class) = kind_shape(kind);
        IntentDescriptor {
            source_class,
            source_kind: Some(src),
            destination_class,
            destination_kind: Some(dst),
            destination_entity: Some("bob".into()),
            destination_account: Some("bob-1".into()),
            tx_kind: kind,
            amount: AmountVisibility::Cleartext(100),
            credentials: CredentialStatus::Absent,
        }
    }

    use EntityKind::*;

    #[test]
    fn direct_store_to_store_depends_on_mode() {
        let d = intent(TxKind::ShieldedTransfer, Individual, Individual);
        assert_eq!(
            authorize(&d, &RuleSet::new(Mode::Mediated)).unwrap(),
            Verdict::Deny(DenyReason::MediationRequired)
        );
        assert_eq!(
            authorize(&d, &RuleSet::new(Mode::Supported)).unwrap(),
            Verdict::Allow
        );
    }

    #[test]
    fn business_cannot_pay_into_store() {
        let d = intent(TxKind::Shield, RegisteredBusiness, Individual);
        assert_eq!(
            authorize(&d, &RuleSet::new(Mode::Supported)).unwrap(),
            Verdict::Deny(DenyReason::BusinessToStoreForbidden)
        );
    }

    #[test]
    fn blacklist_round_trip() {
        let mut reg = Registry::new();
        for (id, kind) in [("bank", RegulatedInstitution), ("bob", RegisteredBusiness)] {
            reg.register_entity(Entity {
                id: id.into(),
                kind,
            })
            .unwrap();
        }
        reg.open_account("bob-1".into(), &"bank".into(), &"bob".into())
            .unwrap();
        let mut rules = RuleSet::new(Mode::Mediated);
        let d = intent(TxKind::Unshield, Individual, RegisteredBusiness);
        assert_eq!(authorize(&d, &rules).unwrap(), Verdict::Allow);
        rules.update_blacklist(&reg, "bob", true).unwrap();
        assert_eq!(
            authorize(&d, &rules).unwrap(),
            Verdict::Deny(DenyReason::Blacklisted)
        );
        rules.update_blacklist(&reg, "bob", false).unwrap();
        assert_eq!(authorize(&d, &rules).unwrap(), Verdict::Allow);
        // account-level listing works the same way
        rules.update_blacklist(&reg, "bob-1", true).unwrap();
        assert_eq!(
            authorize(&d, &rules).unwrap(),
            Verdict::Deny(DenyReason::Blacklisted)
        );
        assert!(rules.update_blacklist(&reg, "nobody", true).is_err());
    }

    #[test]
    fn threshold_needs_identification() {
        let mut rules = RuleSet::new(Mode::Mediated);
        rules.identification_threshold = Some(50);
        let mut d = intent(TxKind::Unshield, Individual, RegisteredBusiness);
        d.amount = AmountVisibility::Cleartext(50);
        assert_eq!(authorize(&d, &rules).unwrap(), Verdict::Allow);
        d.amount = AmountVisibility::Cleartext(51);
        assert_eq!(
            authorize(&d, &rules).unwrap(),
            Verdict::Deny(DenyReason::ThresholdIdentificationRequired)
        );
        d.credentials = CredentialStatus::Valid;
        assert_eq!(authorize(&d, &rules).unwrap(), Verdict::Allow);
        d.amount = AmountVisibility::Hidden;
        assert_eq!(
            authorize(&d, &rules),
            Err(PolicyError::Incomplete("amount"))
        );
    }

    #[test]
    fn incomplete_and_misshapen_descriptors_error() {
        let rules = RuleSet::new(Mode::Supported);
        let mut d = intent(TxKind::Shield, Individual, Individual);
        d.source_kind = None;
        assert_eq!(
            authorize(&d, &rules),
            Err(PolicyError::Incomplete("source kind"))
        );
        let mut d = intent(TxKind::Shield, Individual, Individual);
        d.destination_class = DestClass::Account;
        assert!(matches!(
            authorize(&d, &rules),
            Err(PolicyError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn issue_only_by_central_bank_when_mediated() {
        let d = intent(TxKind::Issue, CentralBank, RegulatedInstitution);
        assert_eq!(
            authorize(&d, &RuleSet::new(Mode::Mediated)).unwrap(),
            Verdict::Allow
        );
        assert_eq!(
            authorize(&d, &RuleSet::new(Mode::Supported)).unwrap(),
            Verdict::Deny(DenyReason::IssuerNotAuthorized)
        );
        let d = intent(TxKind::Issue, RegulatedInstitution, RegulatedInstitution);
        assert_eq!(
            authorize(&d, &RuleSet::new(Mode::Mediated)).unwrap(),
            Verdict::Deny(DenyReason::IssuerNotAuthorized)
        );
    }

    #[test]
    fn matrix_has_every_shaped_cell() {
        for mode in Mode::ALL {
            assert_eq!(policy_matrix(mode).len(), TxKind::ALL.len() * 36);
        }
        assert!(render_matrix(Mode::Mediated).contains("MediationRequired"));
    }
}
