use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::entityreg::{AccountId, Entity, EntityId, EntityKind, Registry};
use crate::policy::{DenyReason, Mode, PolicyContext, RuleSet, ELIGIBLE};
use crate::primitives::{
    credential_finalize, credential_issue, credential_request, Credential, Element, Group,
    IssuerKeypair, IssuerSession,
};

struct Fixture {
    cfg: LedgerConfig,
    state: LedgerState,
    alice: Wallet,
    bob: Wallet,
    seeded: Vec<Element>,
    rng: ChaCha20Rng,
}

fn acct(s: &str) -> AccountId {
    AccountId(s.into())
}

impl Fixture {
    fn new() -> Self {
        let g = Group::standard();
        let cfg = LedgerConfig::new(g.clone());
        let owners = [
            (acct("alice-1"), EntityId::from("alice")),
            (acct("shop-1"), EntityId::from("shop")),
            (acct("bank-1"), EntityId::from("bank")),
        ];
        let mut state = LedgerState::new(owners.iter().map(|(a, o)| (a, o)));
        let seeded = state.seed_outputs(&g, 8);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let b = Builder {
            cfg: &cfg,
            state: &state,
            sampler: DecoySampler::Uniform,
            ring_size: 4,
        };
        let issue = b
            .issue(&"cb".into(), &acct("alice-1"), 1000, &mut rng)
            .unwrap();
        validate_transaction(&cfg, &state, &issue, &PermitAll).unwrap();
        apply_transaction(&cfg, &mut state, &issue);
        Fixture {
            alice: Wallet::new(&g, "alice".into(), b"alice"),
            bob: Wallet::new(&g, "bob".into(), b"bob"),
            cfg,
            state,
            seeded,
            rng,
        }
    }

    fn builder(&self) -> Builder<'_> {
        Builder {
            cfg: &self.cfg,
            state: &self.state,
            sampler: DecoySampler::Uniform,
            ring_size: 4,
        }
    }

    fn commit_tx(&mut self, tx: &Transaction) {
        validate_transaction(&self.cfg, &self.state, tx, &PermitAll).unwrap();
        apply_transaction(&self.cfg, &mut self.state, tx);
        self.alice.scan(&self.cfg, &self.state);
        self.bob.scan(&self.cfg, &self.state);
    }

    fn shield_alice(&mut self, amount: u64) {
        let mut rng = self.rng.clone();
        let (tx, _) = self
            .builder()
            .shield(&acct("alice-1"), &self.alice.address(), amount, 1, &mut rng)
            .unwrap();
        self.rng = rng;
        self.commit_tx(&tx);
    }

    fn audit(&self) -> bool {
        let secrets = collect_audit_secrets(&self.cfg, [&self.alice, &self.bob], &self.seeded);
        conservation_audit(&self.cfg, &self.state, &secrets)
    }

    fn validate(&self, tx: &Transaction) -> Result<(), RejectReason> {
        validate_transaction(&self.cfg, &self.state, tx, &PermitAll)
    }
}

#[test]
fn issue_raises_supply_and_audits() {
    let f = Fixture::new();
    assert_eq!(f.state.supply, 1000);
    assert_eq!(f.state.balance(&acct("alice-1")), Some(1000));
    assert!(f.audit());
}

#[test]
fn corrupted_balance_fails_audit() {
    let mut f = Fixture::new();
    f.state.accounts.get_mut(&acct("alice-1")).unwrap().balance += 1;
    assert!(!f.audit());
}

#[test]
fn shield_moves_value_into_store() {
    let mut f = Fixture::new();
    f.shield_alice(100);
    assert_eq!(f.state.balance(&acct("alice-1")), Some(899));
    assert_eq!(f.alice.balance(), 100);
    assert_eq!(f.state.fees, 1);
    assert!(f.audit());
}

#[test]
fn unshield_pays_business_account() {
    let mut f = Fixture::new();
    f.shield_alice(100);
    let mut rng = f.rng.clone();
    let (tx, _) = f
        .builder()
        .unshield(&f.alice, &acct("shop-1"), 30, 2, vec![], &mut rng)
        .unwrap();
    assert_eq!(tx.kind, TxKind::Unshield);
    assert_eq!(tx.shielded_inputs[0].ring.len(), 4);
    f.commit_tx(&tx);
    assert_eq!(f.state.balance(&acct("shop-1")), Some(30));
    assert_eq!(f.alice.balance(), 68);
    assert!(f.audit());
    // replay
    assert_eq!(f.validate(&tx), Err(RejectReason::DoubleSpend));
}

#[test]
fn shielded_transfer_and_change() {
    let mut f = Fixture::new();
    f.shield_alice(60);
    f.shield_alice(50);
    let mut rng = f.rng.clone();
    let (tx, _) = f
        .builder()
        .shielded_transfer(&f.alice, &f.bob.address(), 90, 0, &mut rng)
        .unwrap();
    assert_eq!(tx.shielded_inputs.len(), 2);
    assert_eq!(tx.shielded_outputs.len(), 2);
    f.commit_tx(&tx);
    assert_eq!(f.bob.balance(), 90);
    assert_eq!(f.alice.balance(), 20);
    assert!(f.audit());
}

#[test]
fn transfer_exceeding_balance_errors() {
    let mut f = Fixture::new();
    let mut rng = f.rng.clone();
    let err = f
        .builder()
        .transparent(&acct("alice-1"), &acct("shop-1"), 1001, 0, &mut rng)
        .unwrap_err();
    assert!(matches!(err, BuildError::InsufficientFunds { .. }));
    let err = f
        .builder()
        .unshield(&f.alice, &acct("shop-1"), 1, 0, vec![], &mut rng)
        .unwrap_err();
    assert!(matches!(err, BuildError::InsufficientFunds { .. }));
    f.shield_alice(10);
    let b = Builder {
        ring_size: 100,
        ..f.builder()
    };
    assert!(matches!(
        b.unshield(&f.alice, &acct("shop-1"), 1, 0, vec![], &mut rng),
        Err(BuildError::RingPopulation { .. })
    ));
}

#[test]
fn transparent_replay_is_rejected_but_repeat_payment_is_not() {
    let mut f = Fixture::new();
    let mut rng = f.rng.clone();
    let tx1 = f
        .builder()
        .transparent(&acct("alice-1"), &acct("shop-1"), 5, 0, &mut rng)
        .unwrap();
    let tx2 = f
        .builder()
        .transparent(&acct("alice-1"), &acct("shop-1"), 5, 0, &mut rng)
        .unwrap();
    f.commit_tx(&tx1);
    assert_eq!(f.validate(&tx1), Err(RejectReason::DoubleSpend));
    assert_eq!(f.validate(&tx2), Ok(()));
}

fn issuer_credential(g: &Group, issuer: &IssuerKeypair, rng: &mut ChaCha20Rng) -> Credential {
    let session = IssuerSession::open(g, rng);
    let (req, holder) = credential_request(g, &issuer.public, &session.commitment, ELIGIBLE, rng);
    let blind = credential_issue(g, &issuer.secret, session, &req);
    credential_finalize(g, holder, &blind).unwrap()
}

/// Every validation clause, provoked in isolation, maps to its own reason.
#[test]
fn mutation_harness_maps_each_clause() {
    let mut f = Fixture::new();
    f.shield_alice(100);
    f.shield_alice(100);
    let g = f.cfg.group.clone();
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let b = f.builder();

    // shape: Issue with a fee
    let mut tx = b
        .issue(&"cb".into(), &acct("alice-1"), 5, &mut rng)
        .unwrap();
    tx.fee = 1;
    assert_eq!(f.validate(&tx), Err(RejectReason::Malformed));

    // unknown transparent account
    let mut tx = b
        .transparent(&acct("alice-1"), &acct("shop-1"), 5, 0, &mut rng)
        .unwrap();
    tx.transparent_outputs[0].account = acct("ghost");
    assert_eq!(f.validate(&tx), Err(RejectReason::UnknownAccount));

    let (honest, _) = b
        .unshield(&f.alice, &acct("shop-1"), 10, 0, vec![], &mut rng)
        .unwrap();
    assert_eq!(f.validate(&honest), Ok(()));

    // ring member past the end of the output list
    let mut tx = honest.clone();
    *tx.shielded_inputs[0].ring.last_mut().unwrap() = f.state.outputs.len() as u64;
    assert_eq!(f.validate(&tx), Err(RejectReason::UnknownRingMember));

    // forged response
    let mut tx = honest.clone();
    let r0 = &tx.shielded_inputs[0].signature.responses[0];
    tx.shielded_inputs[0].signature.responses[0] = g.add(r0, &g.one());
    assert_eq!(f.validate(&tx), Err(RejectReason::RingSignature));

    // key image already on chain
    let mut chain = f.state.clone();
    apply_transaction(&f.cfg, &mut chain, &honest);
    let (again, _) = b
        .unshield(&f.alice, &acct("shop-1"), 10, 0, vec![], &mut rng)
        .unwrap();
    assert_eq!(
        validate_transaction(&f.cfg, &chain, &again, &PermitAll),
        Err(RejectReason::DoubleSpend)
    );

    // one-time address already on chain, properly signed
    let mut u = b
        .prepare_unshield(&f.alice, &acct("shop-1"), 10, 0, vec![], &mut rng)
        .unwrap();
    u.tx.shielded_outputs[0].one_time_address = f.state.outputs[0].one_time_address.clone();
    let (tx, _) = b.sign(u, &mut rng).unwrap();
    assert_eq!(f.validate(&tx), Err(RejectReason::DuplicateOutput));

    // negative change balancing an inflated payment: value q-1 encodes -1
    let mut u = b
        .prepare_shielded_transfer(&f.alice, &f.bob.address(), 10, 0, &mut rng)
        .unwrap();
    u.set_output_value(&f.cfg, 0, &g.scalar_u64(101).unwrap(), &mut rng);
    u.set_output_value(&f.cfg, 1, &g.neg(&g.one()), &mut rng);
    let (tx, _) = b.sign(u, &mut rng).unwrap();
    assert_eq!(f.validate(&tx), Err(RejectReason::RangeProof));

    // inflated payment with a valid range proof: balance breaks
    let mut u = b
        .prepare_shielded_transfer(&f.alice, &f.bob.address(), 10, 0, &mut rng)
        .unwrap();
    u.set_output_value(&f.cfg, 0, &g.scalar_u64(11).unwrap(), &mut rng);
    let (tx, _) = b.sign(u, &mut rng).unwrap();
    assert_eq!(f.validate(&tx), Err(RejectReason::BalanceProof));

    // re-blinding with the excess absorbing the change keeps it valid
    let mut u = b
        .prepare_shielded_transfer(&f.alice, &f.bob.address(), 10, 0, &mut rng)
        .unwrap();
    let delta = g.scalar_u64(12345).unwrap();
    u.reblind_output(&f.cfg, 0, &g.scalar_u64(10).unwrap(), &delta);
    u.set_output_value(&f.cfg, 0, &g.scalar_u64(10).unwrap(), &mut rng);
    let (tx, _) = b.sign(u, &mut rng).unwrap();
    assert_eq!(f.validate(&tx), Ok(()));

    // policy
    let mut registry = Registry::new();
    for (id, kind) in [
        ("bank", EntityKind::RegulatedInstitution),
        ("alice", EntityKind::Individual),
        ("shop", EntityKind::RegisteredBusiness),
        ("mixer", EntityKind::Intermediary),
    ] {
        registry
            .register_entity(Entity {
                id: id.into(),
                kind,
            })
            .unwrap();
    }
    for (a, o) in [("alice-1", "alice"), ("shop-1", "shop"), ("bank-1", "bank")] {
        registry
            .open_account(acct(a), &"bank".into(), &o.into())
            .unwrap();
    }
    let issuer = IssuerKeypair::derive(&g, b"mixer");
    registry
        .register_issuer(&"mixer".into(), issuer.public.clone())
        .unwrap();
    let mut rules = RuleSet::new(Mode::Mediated);
    rules.credential_issuer = Some("mixer".into());
    let ctx = PolicyContext {
        rules: &rules,
        registry: &registry,
        group: &g,
    };
    let (direct, _) = b
        .shielded_transfer(&f.alice, &f.bob.address(), 10, 0, &mut rng)
        .unwrap();
    assert_eq!(
        validate_transaction(&f.cfg, &f.state, &direct, &ctx),
        Err(RejectReason::Policy(DenyReason::MediationRequired))
    );

    // reused serial where no policy requires it
    let cred = issuer_credential(&g, &issuer, &mut rng);
    let (tx, _) = b
        .unshield(
            &f.alice,
            &acct("shop-1"),
            10,
            0,
            vec![cred.clone()],
            &mut rng,
        )
        .unwrap();
    let mut used = f.state.clone();
    used.serials.insert(cred.serial);
    assert_eq!(
        validate_transaction(&f.cfg, &used, &tx, &PermitAll),
        Err(RejectReason::CredentialReused)
    );

    // funds drained between build and validation
    let tx = b
        .transparent(&acct("alice-1"), &acct("shop-1"), 500, 0, &mut rng)
        .unwrap();
    let mut poorer = f.state.clone();
    poorer.accounts.get_mut(&acct("alice-1")).unwrap().balance = 499;
    assert_eq!(
        validate_transaction(&f.cfg, &poorer, &tx, &PermitAll),
        Err(RejectReason::InsufficientFunds)
    );

    // transparent leg too large for the balance equation
    let (mut tx, _) = b
        .shield(&acct("alice-1"), &f.alice.address(), 10, 0, &mut rng)
        .unwrap();
    tx.transparent_inputs[0].amount = 1 << 33;
    assert_eq!(f.validate(&tx), Err(RejectReason::AmountOutOfRange));
}

#[test]
fn oversized_shield_cannot_be_built() {
    let f = Fixture::new();
    let mut rich = f.state.clone();
    rich.accounts.get_mut(&acct("alice-1")).unwrap().balance = 1 << 40;
    let b = Builder {
        state: &rich,
        ..f.builder()
    };
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    assert!(matches!(
        b.shield(&acct("alice-1"), &f.alice.address(), 1 << 33, 0, &mut rng),
        Err(BuildError::Crypto(_))
    ));
}

#[test]
fn validation_is_deterministic() {
    let mut f = Fixture::new();
    f.shield_alice(40);
    let mut rng = f.rng.clone();
    let (tx, _) = f
        .builder()
        .unshield(&f.alice, &acct("shop-1"), 10, 0, vec![], &mut rng)
        .unwrap();
    let a = f.validate(&tx);
    let b = f.validate(&tx);
    assert_eq!(a, b);
    assert_eq!(tx.id(&f.cfg.group), tx.clone().id(&f.cfg.group));
}

#[test]
fn mediated_batch_shuffles_and_validates() {
    let mut f = Fixture::new();
    f.shield_alice(50);
    let mut rng = f.rng.clone();
    let (tx, _) = f
        .builder()
        .shield(&acct("alice-1"), &f.bob.address(), 50, 0, &mut rng)
        .unwrap();
    f.commit_tx(&tx);
    let legs = [
        BatchLeg {
            payer: &f.alice,
            payee: f.bob.address(),
            amount: 20,
            credential: None,
        },
        BatchLeg {
            payer: &f.bob,
            payee: f.alice.address(),
            amount: 5,
            credential: None,
        },
    ];
    let (tx, _) = f
        .builder()
        .mediated_batch(&legs, &"mixer".into(), 1, &mut rng)
        .unwrap();
    assert_eq!(tx.shielded_outputs.len(), 4);
    assert_eq!(tx.fee, 2);
    f.commit_tx(&tx);
    assert_eq!(f.alice.balance(), 50 - 21 + 5);
    assert_eq!(f.bob.balance(), 50 - 6 + 20);
    assert!(f.audit());
}

/// Random valid transactions applied one by one or as blocks give the same
/// state digest.
#[test]
fn fold_equivalence_over_random_transactions() {
    let mut f = Fixture::new();
    let g = f.cfg.group.clone();
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut one_by_one = f.state.clone();
    let mut blocked = f.state.clone();
    let mut pending = Vec::new();
    let mut height = 0;
    let mut accepted = 0;
    while accepted < 100 {
        let b = Builder {
            cfg: &f.cfg,
            state: &one_by_one,
            sampler: DecoySampler::Uniform,
            ring_size: 3,
        };
        let built = match rng.gen_range(0..4) {
            0 => b
                .transparent(
                    &acct("alice-1"),
                    &acct("shop-1"),
                    rng.gen_range(1..5),
                    0,
                    &mut rng,
                )
                .map(|t| (t, vec![])),
            1 => b.shield(
                &acct("alice-1"),
                &f.alice.address(),
                rng.gen_range(1..9),
                0,
                &mut rng,
            ),
            2 => b.unshield(
                &f.alice,
                &acct("bank-1"),
                rng.gen_range(1..4),
                1,
                vec![],
                &mut rng,
            ),
            _ => b.shielded_transfer(&f.alice, &f.bob.address(), 1, 0, &mut rng),
        };
        let Ok((tx, _)) = built else { continue };
        validate_transaction(&f.cfg, &one_by_one, &tx, &PermitAll).unwrap();
        apply_transaction(&f.cfg, &mut one_by_one, &tx);
        f.alice.scan(&f.cfg, &one_by_one);
        f.bob.scan(&f.cfg, &one_by_one);
        pending.push(tx);
        accepted += 1;
        if pending.len() == 7 || accepted == 100 {
            height += 1;
            let block = Block {
                height,
                parent: [0; 32],
                proposer: 0,
                transactions: std::mem::take(&mut pending),
            };
            apply_block(&f.cfg, &mut blocked, &block, &PermitAll).unwrap();
            one_by_one.height = height;
            assert_eq!(one_by_one.digest(&g), blocked.digest(&g));
        }
    }
    f.state = one_by_one;
    assert!(f.audit());
}

#[test]
fn block_with_conflicting_spends_is_atomic() {
    let mut f = Fixture::new();
    f.shield_alice(30);
    let mut rng = f.rng.clone();
    let b = f.builder();
    let (t1, _) = b
        .unshield(&f.alice, &acct("shop-1"), 5, 0, vec![], &mut rng)
        .unwrap();
    let (t2, _) = b
        .unshield(&f.alice, &acct("bank-1"), 5, 0, vec![], &mut rng)
        .unwrap();
    let before = f.state.clone();
    let block = Block {
        height: 1,
        parent: [0; 32],
        proposer: 0,
        transactions: vec![t1, t2],
    };
    let err = apply_block(&f.cfg, &mut f.state, &block, &PermitAll).unwrap_err();
    assert_eq!(
        err,
        BlockError {
            index: 1,
            reason: RejectReason::DoubleSpend
        }
    );
    assert_eq!(f.state, before);
}

#[test]
fn reject_reason_round_trips_through_text() {
    for r in [
        RejectReason::BalanceProof,
        RejectReason::Policy(DenyReason::Blacklisted),
        RejectReason::CredentialReused,
    ] {
        assert_eq!(RejectReason::parse(&r.to_string()), Some(r));
    }
}
