#![allow(dead_code)]

use std::path::PathBuf;

use pvx::entityreg::{AccountId, EntityId, EntityKind};
use pvx::ledger::{
    apply_transaction, validate_transaction, Builder, DecoySampler, LedgerConfig, LedgerState,
    PermitAll, RejectReason, Transaction, TxKind, Wallet,
};
use pvx::policy::{CredentialStatus, DenyReason, Mode, Verdict};
use pvx::primitives::Group;
use pvx::scenario::{
    parse_scenario, Action, CredentialUse, Expect, RunResult, Scenario, Step, StepOutcome,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Every shipped scenario, by file stem, in name order.
pub fn corpus() -> Vec<(String, Scenario)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenario directory")
        .map(|e| e.expect("directory entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let src = std::fs::read_to_string(&p).expect("readable scenario");
            let s = parse_scenario(&src).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (p.file_stem().unwrap().to_string_lossy().into_owned(), s)
        })
        .collect()
}

pub fn load(stem: &str) -> Scenario {
    let src = std::fs::read_to_string(scenario_dir().join(format!("{stem}.toml"))).unwrap();
    parse_scenario(&src).unwrap()
}

/// One point of the policy input space.
#[derive(Debug, Clone, Copy)]
pub struct Case {
    pub mode: Mode,
    pub kind: TxKind,
    pub source: EntityKind,
    pub destination: EntityKind,
    pub credentials: CredentialStatus,
    pub blacklisted: bool,
    /// Cleartext amount exceeds the identification threshold.
    pub above_threshold: bool,
}

/// The flow rules written out as an ordered list of refusals, independent of
/// the engine's own control flow.
pub fn expected_verdict(c: &Case) -> Verdict {
    use DenyReason::*;
    use TxKind::*;
    let mediated = c.mode == Mode::Mediated;
    let from_store = matches!(c.kind, Unshield | ShieldedTransfer | MediatedBatch);
    let to_store = matches!(c.kind, Shield | ShieldedTransfer | MediatedBatch);
    let individual = EntityKind::Individual;
    let refusals = [
        (
            c.kind == Issue && !(mediated && c.source == EntityKind::CentralBank),
            IssuerNotAuthorized,
        ),
        (
            (from_store || to_store) && c.source != individual,
            BusinessToStoreForbidden,
        ),
        (
            to_store && c.destination != individual,
            BusinessToStoreForbidden,
        ),
        (mediated && c.kind == ShieldedTransfer, MediationRequired),
        (
            mediated && c.kind == MediatedBatch && c.credentials == CredentialStatus::Absent,
            CredentialRequired,
        ),
        (
            mediated && c.kind == MediatedBatch && c.credentials == CredentialStatus::Reused,
            CredentialReused,
        ),
        (mediated && !to_store && c.blacklisted, Blacklisted),
        (
            mediated
                && c.kind == Unshield
                && c.above_threshold
                && c.credentials == CredentialStatus::Reused,
            CredentialReused,
        ),
        (
            mediated
                && c.kind == Unshield
                && c.above_threshold
                && c.credentials == CredentialStatus::Absent,
            ThresholdIdentificationRequired,
        ),
    ];
    refusals
        .into_iter()
        .find(|(hit, _)| *hit)
        .map_or(Verdict::Allow, |(_, r)| Verdict::Deny(r))
}

/// A funded private store and a ledger to forge against.
pub struct Forge {
    pub cfg: LedgerConfig,
    pub state: LedgerState,
    pub alice: Wallet,
    pub bob: Wallet,
}

impl Forge {
    pub fn new(group: Group) -> Self {
        let cfg = LedgerConfig::new(group.clone());
        let owner = (AccountId::from("alice-1"), EntityId::from("alice"));
        let mut state = LedgerState::new(std::iter::once((&owner.0, &owner.1)));
        state.seed_outputs(&group, 8);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut alice = Wallet::new(&group, "alice".into(), b"alice");
        let b = Builder {
            cfg: &cfg,
            state: &state,
            sampler: DecoySampler::Uniform,
            ring_size: 4,
        };
        let issue = b.issue(&"cb".into(), &owner.0, 100, &mut rng).unwrap();
        validate_transaction(&cfg, &state, &issue, &PermitAll).unwrap();
        apply_transaction(&cfg, &mut state, &issue);
        let b = Builder {
            cfg: &cfg,
            state: &state,
            sampler: DecoySampler::Uniform,
            ring_size: 4,
        };
        let (shield, _) = b
            .shield(&owner.0, &alice.address(), 100, 0, &mut rng)
            .unwrap();
        validate_transaction(&cfg, &state, &shield, &PermitAll).unwrap();
        apply_transaction(&cfg, &mut state, &shield);
        alice.scan(&cfg, &state);
        Forge {
            bob: Wallet::new(&group, "bob".into(), b"bob"),
            cfg,
            state,
            alice,
        }
    }

    /// A balanced transfer whose payment output commits to `payment(total)`
    /// and whose change absorbs the difference, modulo the group order.
    pub fn forge(&self, payment: impl Fn(i128) -> i128, seed: u64) -> Transaction {
        let g = &self.cfg.group;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let b = Builder {
            cfg: &self.cfg,
            state: &self.state,
            sampler: DecoySampler::Uniform,
            ring_size: 4,
        };
        let mut u = b
            .prepare_shielded_transfer(&self.alice, &self.bob.address(), 10, 0, &mut rng)
            .unwrap();
        let total = (u.created[0].value + u.created[1].value) as i128;
        let pay = payment(total);
        u.set_output_value(&self.cfg, 0, &g.reduce_i128(pay), &mut rng);
        u.set_output_value(&self.cfg, 1, &g.reduce_i128(total - pay), &mut rng);
        b.sign(u, &mut rng).unwrap().0
    }

    /// Change of q−1, which encodes −1, so the payment carries one unit more
    /// than the inputs hold.
    pub fn negative_value(&self, seed: u64) -> Transaction {
        self.forge(|total| total + 1, seed)
    }

    /// Payment of exactly 2^k, one past the largest provable value.
    pub fn range_overflow(&self, seed: u64) -> Transaction {
        let bits = self.cfg.range_bits;
        self.forge(|_| 1i128 << bits, seed)
    }

    pub fn validate(&self, tx: &Transaction) -> Result<(), RejectReason> {
        validate_transaction(&self.cfg, &self.state, tx, &PermitAll)
    }
}

/// `scenario` followed by a replay of every payment step that `first` saw
/// applied, each expected to be refused as a double spend.
pub fn with_replays(scenario: &Scenario, first: &RunResult) -> Scenario {
    let mut out = scenario.clone();
    for r in &first.steps {
        let original = &scenario.steps[r.index].action;
        if r.outcome.is_applied() && !matches!(original, Action::Replay { .. }) {
            out.steps.push(Step {
                line: 0,
                action: Action::Replay { step: r.index },
                expect: Some(Expect::Reject(RejectReason::DoubleSpend)),
            });
        }
    }
    out
}

/// Whether every step that resubmits spent outputs or a used credential was
/// refused for that reason.
pub fn reuse_refused(scenario: &Scenario, result: &RunResult) -> Result<usize, String> {
    let mut checked = 0;
    for r in &result.steps {
        let ok = match &scenario.steps[r.index].action {
            Action::Replay { .. } | Action::Respend { .. } => {
                r.outcome == StepOutcome::Rejected(RejectReason::DoubleSpend)
            }
            Action::Unshield {
                credential: CredentialUse::Reuse,
                ..
            }
            | Action::Batch {
                credential: CredentialUse::Reuse,
                ..
            } => matches!(
                r.outcome,
                StepOutcome::Denied(DenyReason::CredentialReused)
                    | StepOutcome::Rejected(RejectReason::CredentialReused)
            ),
            _ => continue,
        };
        if !ok {
            return Err(format!("{} step {}: {}", scenario.name, r.index, r.outcome));
        }
        checked += 1;
    }
    Ok(checked)
}
