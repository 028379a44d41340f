//! Entities, institutional accounts, published stealth addresses and
//! credential issuers.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::primitives::{Element, StealthAddress};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(pub String);

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        EntityId(s.to_string())
    }
}

impl From<&str> for AccountId {
    fn from(s: &str) -> Self {
        AccountId(s.to_string())
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    RegulatedInstitution,
    RegisteredBusiness,
    /// Natural persons and non-business partnerships.
    Individual,
    Intermediary,
    CentralBank,
    Regulator,
}

impl EntityKind {
    pub const ALL: [EntityKind; 6] = [
        EntityKind::RegulatedInstitution,
        EntityKind::RegisteredBusiness,
        EntityKind::Individual,
        EntityKind::Intermediary,
        EntityKind::CentralBank,
        EntityKind::Regulator,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EntityKind::RegulatedInstitution => "RegulatedInstitution",
            EntityKind::RegisteredBusiness => "RegisteredBusiness",
            EntityKind::Individual => "Individual",
            EntityKind::Intermediary => "Intermediary",
            EntityKind::CentralBank => "CentralBank",
            EntityKind::Regulator => "Regulator",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Kinds allowed to keep accounts for others.
    pub fn holds_accounts(&self) -> bool {
        matches!(
            self,
            EntityKind::RegulatedInstitution | EntityKind::CentralBank | EntityKind::Intermediary
        )
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: EntityId,
    pub kind: EntityKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountRecord {
    pub id: AccountId,
    pub institution: EntityId,
    pub owner: EntityId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PaymentCoordinates {
    Account(AccountId),
    Stealth(StealthAddress),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("duplicate entity id `{0}`")]
    DuplicateEntity(EntityId),
    #[error("duplicate account id `{0}`")]
    DuplicateAccount(AccountId),
    #[error("unknown entity `{0}`")]
    UnknownEntity(EntityId),
    #[error("unknown account `{0}`")]
    UnknownAccount(AccountId),
    #[error("`{0}` cannot hold accounts")]
    NotAnInstitution(EntityId),
    #[error("entity `{0}` has no payment coordinates")]
    NoCoordinates(EntityId),
    #[error("registered businesses cannot publish stealth addresses (`{0}`)")]
    BusinessStealth(EntityId),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    entities: BTreeMap<EntityId, Entity>,
    accounts: BTreeMap<AccountId, AccountRecord>,
    stealth: BTreeMap<EntityId, StealthAddress>,
    issuers: BTreeMap<EntityId, Element>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_entity(&mut self, entity: Entity) -> Result<(), RegistryError> {
        if self.entities.contains_key(&entity.id) {
            return Err(RegistryError::DuplicateEntity(entity.id));
        }
        self.entities.insert(entity.id.clone(), entity);
        Ok(())
    }

    pub fn open_account(
        &mut self,
        id: AccountId,
        institution: &EntityId,
        owner: &EntityId,
    ) -> Result<(), RegistryError> {
        if self.accounts.contains_key(&id) {
            return Err(RegistryError::DuplicateAccount(id));
        }
        let inst = self.entity(institution)?;
        if !inst.kind.holds_accounts() {
            return Err(RegistryError::NotAnInstitution(institution.clone()));
        }
        self.entity(owner)?;
        self.accounts.insert(
            id.clone(),
            AccountRecord {
                id,
                institution: institution.clone(),
                owner: owner.clone(),
            },
        );
        Ok(())
    }

    /// Opt-in publication, e.g. for merchants or individuals who want to be
    /// paid by name.
    pub fn publish_stealth(
        &mut self,
        entity: &EntityId,
        address: StealthAddress,
    ) -> Result<(), RegistryError> {
        if self.entity(entity)?.kind == EntityKind::RegisteredBusiness {
            return Err(RegistryError::BusinessStealth(entity.clone()));
        }
        self.stealth.insert(entity.clone(), address);
        Ok(())
    }

    pub fn register_issuer(
        &mut self,
        entity: &EntityId,
        public: Element,
    ) -> Result<(), RegistryError> {
        self.entity(entity)?;
        self.issuers.insert(entity.clone(), public);
        Ok(())
    }

    pub fn entity(&self, id: &EntityId) -> Result<&Entity, RegistryError> {
        self.entities
            .get(id)
            .ok_or_else(|| RegistryError::UnknownEntity(id.clone()))
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn accounts(&self) -> impl Iterator<Item = &AccountRecord> {
        self.accounts.values()
    }

    pub fn accounts_of(&self, owner: &EntityId) -> Vec<&AccountRecord> {
        self.accounts
            .values()
            .filter(|a| &a.owner == owner)
            .collect()
    }

    pub fn issuer_key(&self, entity: &EntityId) -> Option<&Element> {
        self.issuers.get(entity)
    }

    pub fn issuers(&self) -> impl Iterator<Item = (&EntityId, &Element)> {
        self.issuers.iter()
    }

    pub fn stealth_address(&self, entity: &EntityId) -> Option<&StealthAddress> {
        self.stealth.get(entity)
    }

    pub fn lookup_account(&self, id: &AccountId) -> Result<(&EntityId, &EntityId), RegistryError> {
        self.accounts
            .get(id)
            .map(|a| (&a.institution, &a.owner))
            .ok_or_else(|| RegistryError::UnknownAccount(id.clone()))
    }

    pub fn account_owner_kind(&self, id: &AccountId) -> Result<EntityKind, RegistryError> {
        let (_, owner) = self.lookup_account(id)?;
        Ok(self.entity(owner)?.kind)
    }

    /// Individuals with a published stealth address are paid privately;
    /// everyone else through their first account.
    pub fn lookup_recipient(&self, id: &EntityId) -> Result<PaymentCoordinates, RegistryError> {
        let entity = self.entity(id)?;
        if entity.kind == EntityKind::Individual {
            if let Some(addr) = self.stealth.get(id) {
                return Ok(PaymentCoordinates::Stealth(addr.clone()));
            }
        }
        self.accounts
            .values()
            .find(|a| &a.owner == id)
            .map(|a| PaymentCoordinates::Account(a.id.clone()))
            .ok_or_else(|| RegistryError::NoCoordinates(id.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{derive_stealth_keypair, Group};

    fn sample() -> Registry {
        let mut r = Registry::new();
        for (id, kind) in [
            ("bank", EntityKind::RegulatedInstitution),
            ("shop", EntityKind::RegisteredBusiness),
            ("alice", EntityKind::Individual),
            ("carol", EntityKind::Individual),
        ] {
            r.register_entity(Entity {
                id: id.into(),
                kind,
            })
            .unwrap();
        }
        r.open_account("shop-1".into(), &"bank".into(), &"shop".into())
            .unwrap();
        r.open_account("alice-1".into(), &"bank".into(), &"alice".into())
            .unwrap();
        r
    }

    #[test]
    fn business_resolves_to_account() {
        let r = sample();
        assert_eq!(
            r.lookup_recipient(&"shop".into()).unwrap(),
            PaymentCoordinates::Account("shop-1".into())
        );
        let (inst, owner) = r.lookup_account(&"shop-1".into()).unwrap();
        assert_eq!((inst.0.as_str(), owner.0.as_str()), ("bank", "shop"));
    }

    #[test]
    fn individual_with_stealth_resolves_privately() {
        let mut r = sample();
        let g = Group::test();
        let addr = derive_stealth_keypair(&g, b"alice").address();
        r.publish_stealth(&"alice".into(), addr.clone()).unwrap();
        assert_eq!(
            r.lookup_recipient(&"alice".into()).unwrap(),
            PaymentCoordinates::Stealth(addr)
        );
    }

    #[test]
    fn unknown_ids_error() {
        let r = sample();
        assert_eq!(
            r.lookup_recipient(&"nobody".into()),
            Err(RegistryError::UnknownEntity("nobody".into()))
        );
        assert_eq!(
            r.lookup_account(&"x".into()),
            Err(RegistryError::UnknownAccount("x".into()))
        );
        // individual with neither account nor stealth address
        assert_eq!(
            r.lookup_recipient(&"carol".into()),
            Err(RegistryError::NoCoordinates("carol".into()))
        );
    }

    #[test]
    fn duplicates_and_non_institutions_rejected() {
        let mut r = sample();
        assert!(matches!(
            r.register_entity(Entity {
                id: "alice".into(),
                kind: EntityKind::Individual
            }),
            Err(RegistryError::DuplicateEntity(_))
        ));
        assert!(matches!(
            r.open_account("a2".into(), &"shop".into(), &"alice".into()),
            Err(RegistryError::NotAnInstitution(_))
        ));
        assert!(matches!(
            r.open_account("alice-1".into(), &"bank".into(), &"alice".into()),
            Err(RegistryError::DuplicateAccount(_))
        ));
    }

    #[test]
    fn individuals_need_no_account() {
        let r = sample();
        assert!(r.accounts_of(&"carol".into()).is_empty());
        assert_eq!(
            r.entity(&"carol".into()).unwrap().kind,
            EntityKind::Individual
        );
    }
}
