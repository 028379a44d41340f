mod common;

use common::{expected_verdict, Case};
use proptest::prelude::*;
use pvx::entityreg::{EntityId, EntityKind};
use pvx::ledger::TxKind;
use pvx::policy::{
    authorize, kind_shape, policy_matrix, AmountVisibility, CredentialStatus, DenyReason,
    DestClass, IntentDescriptor, Mode, RuleSet, Verdict,
};

const THRESHOLD: u64 = 100;

fn rules(mode: Mode) -> RuleSet {
    let mut r = RuleSet::new(mode);
    r.blacklisted_entities.insert(EntityId::from("listed"));
    r.identification_threshold = Some(THRESHOLD);
    r
}

fn descriptor(c: &Case) -> IntentDescriptor {
    let (source_class, destination_class) = kind_shape(c.kind);
    IntentDescriptor {
        source_class,
        source_kind: Some(c.source),
        destination_class,
        destination_kind: Some(c.destination),
        destination_entity: Some(EntityId::from(if c.blacklisted {
            "listed"
        } else {
            "payee"
        })),
        destination_account: None,
        tx_kind: c.kind,
        amount: match destination_class {
            DestClass::Account => AmountVisibility::Cleartext(if c.above_threshold {
                THRESHOLD + 1
            } else {
                THRESHOLD
            }),
            DestClass::PrivateStore => AmountVisibility::Hidden,
        },
        credentials: c.credentials,
    }
}

fn verdict(c: &Case) -> Verdict {
    authorize(&descriptor(c), &rules(c.mode)).expect("well-formed descriptor")
}

fn all_cases() -> Vec<Case> {
    let mut out = Vec::new();
    for mode in Mode::ALL {
        for kind in TxKind::ALL {
            for source in EntityKind::ALL {
                for destination in EntityKind::ALL {
                    for credentials in CredentialStatus::ALL {
                        for blacklisted in [false, true] {
                            for above_threshold in [false, true] {
                                out.push(Case {
                                    mode,
                                    kind,
                                    source,
                                    destination,
                                    credentials,
                                    blacklisted,
                                    above_threshold,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[test]
fn every_cell_matches_the_flow_rules() {
    let cases = all_cases();
    assert_eq!(cases.len(), 2 * 6 * 6 * 6 * 3 * 2 * 2);
    let wrong: Vec<_> = cases
        .iter()
        .filter(|c| verdict(c) != expected_verdict(c))
        .map(|c| format!("{c:?}: got {}, want {}", verdict(c), expected_verdict(c)))
        .collect();
    assert!(
        wrong.is_empty(),
        "{} mismatches:\n{}",
        wrong.len(),
        wrong.join("\n")
    );
}

#[test]
fn printed_matrix_agrees_with_the_flow_rules() {
    for mode in Mode::ALL {
        let rows = policy_matrix(mode);
        assert_eq!(rows.len(), 6 * 6 * 6);
        for r in rows {
            let case = |credentials, blacklisted| Case {
                mode,
                kind: r.tx_kind,
                source: r.source_kind,
                destination: r.destination_kind,
                credentials,
                blacklisted,
                above_threshold: false,
            };
            assert_eq!(
                r.without_credentials,
                expected_verdict(&case(CredentialStatus::Absent, false))
            );
            assert_eq!(
                r.with_credentials,
                expected_verdict(&case(CredentialStatus::Valid, false))
            );
            assert_eq!(
                r.destination_blacklisted,
                expected_verdict(&case(CredentialStatus::Valid, true))
            );
        }
    }
}

#[test]
fn depicted_flows() {
    let person = EntityKind::Individual;
    let flow = |mode, kind, source, destination, credentials| {
        verdict(&Case {
            mode,
            kind,
            source,
            destination,
            credentials,
            blacklisted: false,
            above_threshold: false,
        })
    };
    let absent = CredentialStatus::Absent;
    let business = EntityKind::RegisteredBusiness;
    // accounts to private store, store to business, store to store
    for mode in Mode::ALL {
        assert_eq!(
            flow(mode, TxKind::Shield, person, person, absent),
            Verdict::Allow
        );
        assert_eq!(
            flow(mode, TxKind::Unshield, person, business, absent),
            Verdict::Allow
        );
        assert_eq!(
            flow(mode, TxKind::Shield, business, person, absent),
            Verdict::Deny(DenyReason::BusinessToStoreForbidden)
        );
    }
    assert_eq!(
        flow(
            Mode::Supported,
            TxKind::ShieldedTransfer,
            person,
            person,
            absent
        ),
        Verdict::Allow
    );
    assert_eq!(
        flow(
            Mode::Mediated,
            TxKind::ShieldedTransfer,
            person,
            person,
            absent
        ),
        Verdict::Deny(DenyReason::MediationRequired)
    );
    assert_eq!(
        flow(
            Mode::Mediated,
            TxKind::MediatedBatch,
            person,
            person,
            CredentialStatus::Valid
        ),
        Verdict::Allow
    );
    assert_eq!(
        flow(
            Mode::Mediated,
            TxKind::MediatedBatch,
            person,
            person,
            absent
        ),
        Verdict::Deny(DenyReason::CredentialRequired)
    );
    assert_eq!(
        flow(
            Mode::Supported,
            TxKind::MediatedBatch,
            person,
            person,
            absent
        ),
        Verdict::Allow
    );
}

fn case_strategy() -> impl Strategy<Value = Case> {
    (
        prop::sample::select(Mode::ALL.to_vec()),
        prop::sample::select(TxKind::ALL.to_vec()),
        prop::sample::select(EntityKind::ALL.to_vec()),
        prop::sample::select(EntityKind::ALL.to_vec()),
        prop::sample::select(CredentialStatus::ALL.to_vec()),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(
            |(mode, kind, source, destination, credentials, blacklisted, above)| Case {
                mode,
                kind,
                source,
                destination,
                credentials,
                blacklisted,
                above_threshold: above,
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn mediated_allow_implies_supported_allow_without_credentials(
        c in case_strategy().prop_filter_map("issuance is mediated-only", |c| {
            (c.kind != TxKind::Issue).then_some(Case { mode: Mode::Mediated, ..c })
        })
    ) {
        if verdict(&c).is_allow() {
            let relaxed = Case { mode: Mode::Supported, credentials: CredentialStatus::Absent, ..c };
            prop_assert!(verdict(&relaxed).is_allow(), "{:?}", c);
        }
    }

    #[test]
    fn blacklisting_never_permits(c in case_strategy()) {
        if verdict(&Case { blacklisted: true, ..c }).is_allow() {
            let open = Case { blacklisted: false, ..c };
            prop_assert!(verdict(&open).is_allow(), "{:?}", c);
        }
    }

    #[test]
    fn valid_credentials_never_hurt(c in case_strategy()) {
        if verdict(&Case { credentials: CredentialStatus::Absent, ..c }).is_allow() {
            let holder = Case { credentials: CredentialStatus::Valid, ..c };
            prop_assert!(verdict(&holder).is_allow(), "{:?}", c);
        }
    }

    #[test]
    fn small_amounts_never_need_more_than_large(c in case_strategy()) {
        if verdict(&Case { above_threshold: true, ..c }).is_allow() {
            let small = Case { above_threshold: false, ..c };
            prop_assert!(verdict(&small).is_allow(), "{:?}", c);
        }
    }
}
