//! Scenario files, the end-to-end runner and its reports.
//!
//! A scenario declares entities, genesis balances, consensus parameters and
//! an ordered list of steps. The runner pushes every payment through the
//! replicated ledger, where each replica applies the policy engine, and
//! checks outcomes against the per-step expectations.

mod generate;
mod parse;
mod report;
mod run;
#[cfg(test)]
mod tests;

use std::fmt;

use crate::consensus::{Fault, Partition};
use crate::entityreg::{AccountId, EntityId, EntityKind};
use crate::ledger::{DecoySampler, RejectReason};
use crate::policy::{DenyReason, Mode};
use crate::primitives::Profile;

pub use generate::random_scenario;
pub use parse::{parse_scenario, ParseError};
pub use report::{emit_report, parse_report, Format, Report, ReportError};
pub use run::{
    run_scenario, ConsensusSummary, ProbeOutcome, RunResult, StepOutcome, StepRecord,
    EXIT_MISMATCH, EXIT_OK, EXIT_PARSE, EXIT_SAFETY,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub profile: Profile,
    pub ring_size: usize,
    pub sampler: DecoySampler,
    /// Zero-valued decoy outputs present at genesis.
    pub seed_outputs: usize,
    pub consensus: ConsensusParams,
    pub rules: RulesSpec,
    pub entities: Vec<EntitySpec>,
    pub genesis: Vec<(AccountId, u64)>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusParams {
    pub n: usize,
    pub f: usize,
    pub seed: u64,
    pub drop: f64,
    pub min_delay: u64,
    pub max_delay: u64,
    /// Operator of each replica, in node order.
    pub institutions: Vec<EntityId>,
    pub faults: Vec<Fault>,
    pub partitions: Vec<Partition>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RulesSpec {
    pub blacklist: Vec<String>,
    pub identification_threshold: Option<u64>,
    pub credential_issuer: Option<EntityId>,
    pub mediation_fee: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntitySpec {
    pub id: EntityId,
    pub kind: EntityKind,
    /// (account, institution holding it)
    pub accounts: Vec<(AccountId, EntityId)>,
    /// Publish the private store's stealth address in the registry.
    pub publish: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// Line of the step in the source document.
    pub line: usize,
    pub action: Action,
    pub expect: Option<Expect>,
}

/// How a step presents eligibility credentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CredentialUse {
    None,
    Fresh,
    /// Presents a credential whose serial is already on the ledger.
    Reuse,
}

impl CredentialUse {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(CredentialUse::None),
            "fresh" => Some(CredentialUse::Fresh),
            "reuse" => Some(CredentialUse::Reuse),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Leg {
    pub from: EntityId,
    pub to: EntityId,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Issue {
        issuer: EntityId,
        to: AccountId,
        amount: u64,
    },
    /// Account to account.
    Transfer {
        from: AccountId,
        to: AccountId,
        amount: u64,
        fee: u64,
    },
    Shield {
        from: AccountId,
        to: EntityId,
        amount: u64,
        fee: u64,
    },
    Unshield {
        from: EntityId,
        to: AccountId,
        amount: u64,
        fee: u64,
        credential: CredentialUse,
    },
    /// Direct private store to private store.
    Send {
        from: EntityId,
        to: EntityId,
        amount: u64,
        fee: u64,
    },
    Batch {
        via: EntityId,
        legs: Vec<Leg>,
        fee: Option<u64>,
        credential: CredentialUse,
    },
    /// A fresh transaction spending outputs the store already spent.
    Respend {
        from: EntityId,
        to: EntityId,
        amount: u64,
    },
    /// Resubmits the exact transaction of an earlier step.
    Replay {
        step: usize,
    },
    Credential {
        holder: EntityId,
        count: usize,
    },
    Blacklist {
        id: String,
        flag: bool,
    },
    Probe(Probe),
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Issue { .. } => "issue",
            Action::Transfer { .. } => "transfer",
            Action::Shield { .. } => "shield",
            Action::Unshield { .. } => "unshield",
            Action::Send { .. } => "send",
            Action::Batch { .. } => "batch",
            Action::Respend { .. } => "respend",
            Action::Replay { .. } => "replay",
            Action::Credential { .. } => "credential",
            Action::Blacklist { flag: true, .. } => "blacklist",
            Action::Blacklist { flag: false, .. } => "unblacklist",
            Action::Probe(p) => p.name(),
        }
    }

    /// Whether the step submits a transaction.
    pub fn is_payment(&self) -> bool {
        !matches!(
            self,
            Action::Credential { .. } | Action::Blacklist { .. } | Action::Probe(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    /// Calibrates every linkability heuristic against the scenario's decoy
    /// sampler and ring size.
    LinkAttack { spends: usize, seed: u64 },
    /// Compares each business's tax report with the payments the runner saw
    /// complete.
    Taxation,
    /// Blacklists `target`, tries to pay it from a private store, then
    /// restores the previous rules.
    Blacklist {
        from: EntityId,
        target: EntityId,
        amount: u64,
    },
    /// Someone with no account and no credential tries to pay another
    /// private store, directly and then through an intermediary.
    Registration {
        from: EntityId,
        to: EntityId,
        via: Option<EntityId>,
        amount: u64,
    },
}

impl Probe {
    pub fn name(&self) -> &'static str {
        match self {
            Probe::LinkAttack { .. } => "probe:link-attack",
            Probe::Taxation => "probe:taxation",
            Probe::Blacklist { .. } => "probe:blacklist",
            Probe::Registration { .. } => "probe:registration",
        }
    }
}

/// Expected outcome of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    Accept,
    Deny(DenyReason),
    Reject(RejectReason),
    Fail,
}

impl Expect {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        match s {
            "accept" => return Some(Expect::Accept),
            "fail" => return Some(Expect::Fail),
            _ => {}
        }
        let (head, inner) = s.strip_suffix(')')?.split_once('(')?;
        match head {
            "deny" => DenyReason::parse(inner).map(Expect::Deny),
            "reject" => RejectReason::parse(inner).map(Expect::Reject),
            _ => None,
        }
    }
}

impl fmt::Display for Expect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expect::Accept => f.write_str("accept"),
            Expect::Deny(r) => write!(f, "deny({r})"),
            Expect::Reject(r) => write!(f, "reject({r})"),
            Expect::Fail => f.write_str("fail"),
        }
    }
}
