use super::*;
use crate::ledger::RejectReason;
use crate::policy::DenyReason;

const CAST: &str = r#"
[[entities]]
id = "bank-a"
kind = "RegulatedInstitution"

[[entities]]
id = "bank-b"
kind = "RegulatedInstitution"

[[entities]]
id = "cb"
kind = "CentralBank"

[[entities]]
id = "mixer"
kind = "Intermediary"

[[entities]]
id = "alice"
kind = "Individual"
accounts = [{ id = "alice-1", at = "bank-a" }]

[[entities]]
id = "bob"
kind = "Individual"
accounts = [{ id = "bob-1", at = "bank-b" }]

[[entities]]
id = "shop"
kind = "RegisteredBusiness"
accounts = [{ id = "shop-1", at = "bank-b" }]

[[genesis]]
account = "alice-1"
amount = 1000

[[genesis]]
account = "bob-1"
amount = 1000
"#;

fn doc(mode: &str, n: usize, f: usize, steps: &str) -> String {
    format!(
        "name = \"t\"\nmode = \"{mode}\"\nring_size = 3\n\n[consensus]\nn = {n}\nf = {f}\nseed = 9\n\n[rules]\ncredential_issuer = \"mixer\"\nidentification_threshold = 300\nmediation_fee = 1\n{CAST}\n{steps}"
    )
}

const SUPPORTED_FLOW: &str = r#"
[[steps]]
action = "transfer"
from = "alice-1"
to = "shop-1"
amount = 50
fee = 1
expect = "accept"

[[steps]]
action = "shield"
from = "alice-1"
to = "alice"
amount = 400
fee = 1
expect = "accept"

[[steps]]
action = "send"
from = "alice"
to = "bob"
amount = 120
fee = 1
expect = "accept"

[[steps]]
action = "unshield"
from = "bob"
to = "shop-1"
amount = 60
fee = 1
expect = "accept"

[[steps]]
action = "shield"
from = "shop-1"
to = "alice"
amount = 10
expect = "deny(BusinessToStoreForbidden)"

[[steps]]
action = "replay"
step = 2
expect = "reject(DoubleSpend)"

[[steps]]
action = "probe:taxation"
"#;

fn parse(s: &str) -> Scenario {
    parse_scenario(s).unwrap_or_else(|e| panic!("{e}"))
}

#[test]
fn minimal_document_parses_with_defaults() {
    let s = parse(&doc("supported", 1, 0, ""));
    assert_eq!(s.mode, crate::policy::Mode::Supported);
    assert_eq!(s.ring_size, 3);
    assert_eq!(s.seed_outputs, 6);
    assert_eq!(s.consensus.institutions.len(), 1);
    assert_eq!(s.genesis.len(), 2);
    assert!(s.steps.is_empty());
}

#[test]
fn too_few_nodes_for_f_is_a_field_error() {
    let e = parse_scenario(&doc("supported", 3, 1, "")).unwrap_err();
    match e {
        ParseError::Field { field, message, .. } => {
            assert_eq!(field, "consensus.f");
            assert!(message.contains("3f+1 = 4"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_action_reports_its_line() {
    let src = doc("supported", 1, 0, "[[steps]]\naction = \"teleport\"\n");
    let line = src.lines().position(|l| l == "[[steps]]").unwrap() + 1;
    match parse_scenario(&src).unwrap_err() {
        ParseError::Field {
            line: at,
            field,
            message,
        } => {
            assert_eq!(at, line);
            assert_eq!(field, "steps[0].action");
            assert!(message.contains("teleport"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_keys_and_bad_references_are_rejected() {
    let extra = doc("supported", 1, 0, "").replace("ring_size = 3", "ring_size = 3\ncolour = 1");
    assert!(matches!(parse_scenario(&extra), Err(ParseError::Syntax(_))));

    let store = doc(
        "supported",
        1,
        0,
        "[[steps]]\naction = \"send\"\nfrom = \"shop\"\nto = \"bob\"\namount = 1\n",
    );
    assert!(matches!(
        parse_scenario(&store),
        Err(ParseError::Field { .. })
    ));

    let replay = doc(
        "supported",
        1,
        0,
        "[[steps]]\naction = \"replay\"\nstep = 0\n",
    );
    assert!(matches!(
        parse_scenario(&replay),
        Err(ParseError::Field { .. })
    ));

    let expect = doc(
        "supported",
        1,
        0,
        "[[steps]]\naction = \"transfer\"\nfrom = \"alice-1\"\nto = \"bob-1\"\namount = 1\nexpect = \"deny(Nope)\"\n",
    );
    assert!(matches!(
        parse_scenario(&expect),
        Err(ParseError::Field { .. })
    ));
}

#[test]
fn expectations_round_trip_through_text() {
    for e in [
        Expect::Accept,
        Expect::Fail,
        Expect::Deny(DenyReason::MediationRequired),
        Expect::Reject(RejectReason::DoubleSpend),
        Expect::Reject(RejectReason::Policy(DenyReason::Blacklisted)),
    ] {
        assert_eq!(Expect::parse(&e.to_string()), Some(e));
    }
}

#[test]
fn supported_flow_meets_every_expectation() {
    let r = run_scenario(&parse(&doc("supported", 4, 1, SUPPORTED_FLOW)));
    for s in &r.steps {
        assert_ne!(
            s.matched(),
            Some(false),
            "step {} {}: {}",
            s.index,
            s.action,
            s.outcome
        );
    }
    assert!(r.expectations_met());
    assert!(r.conservation_held);
    assert!(r.safety.is_none());
    assert_eq!(r.exit_code(), EXIT_OK);
    assert_eq!(r.height, 4);
    assert_eq!(r.supply, 2000);
    assert_eq!(r.fees, 4);
    let shop = r.tax_reports.iter().find(|t| t.entity.0 == "shop").unwrap();
    assert_eq!(shop.total, 110);
    assert!(matches!(
        r.steps[6].outcome,
        StepOutcome::Probe(ProbeOutcome::Taxation { complete: true, .. })
    ));
}

#[test]
fn mediated_mode_denies_direct_sends() {
    let steps = r#"
[[steps]]
action = "shield"
from = "alice-1"
to = "alice"
amount = 400
expect = "accept"

[[steps]]
action = "send"
from = "alice"
to = "bob"
amount = 10
expect = "deny(MediationRequired)"

[[steps]]
action = "unshield"
from = "alice"
to = "bob-1"
amount = 301
expect = "deny(ThresholdIdentificationRequired)"
"#;
    let r = run_scenario(&parse(&doc("mediated", 1, 0, steps)));
    assert!(r.expectations_met(), "{}", emit_report(&r, Format::Text));
}

#[test]
fn mismatch_sets_exit_code() {
    let steps = "[[steps]]\naction = \"transfer\"\nfrom = \"alice-1\"\nto = \"bob-1\"\namount = 5\nexpect = \"deny(Blacklisted)\"\n";
    let r = run_scenario(&parse(&doc("supported", 1, 0, steps)));
    assert_eq!(r.steps[0].matched(), Some(false));
    assert_eq!(r.exit_code(), EXIT_MISMATCH);
}

#[test]
fn runs_are_deterministic() {
    let s = parse(&doc("supported", 4, 1, SUPPORTED_FLOW));
    let a = run_scenario(&s);
    let b = run_scenario(&s);
    assert_eq!(a.ledger_digest, b.ledger_digest);
    assert_eq!(a.consensus.trace_digest, b.consensus.trace_digest);
    assert_eq!(
        emit_report(&a, Format::Structured),
        emit_report(&b, Format::Structured)
    );
}

#[test]
fn reports_render_and_round_trip() {
    let r = run_scenario(&parse(&doc("supported", 1, 0, SUPPORTED_FLOW)));
    let text = emit_report(&r, Format::Text);
    for key in [
        "Robust to cyberattacks",
        "Usable without registration",
        "Unlinkable transactions",
        "Electronic transactions",
        "Suitable for taxation",
        "Can block some illicit uses",
        "units of fiat currency",
    ] {
        assert!(text.contains(key), "missing {key} in\n{text}");
    }
    let structured = emit_report(&r, Format::Structured);
    let back = parse_report(&structured).unwrap();
    assert_eq!(back, Report::from(&r));
    assert_eq!(back.desiderata.len(), 7);

    assert!(matches!(
        Format::parse("yaml"),
        Err(ReportError::UnknownFormat(_))
    ));
    assert!(matches!(
        parse_report("name = 1"),
        Err(ReportError::Schema(_))
    ));
}

#[test]
fn random_scenarios_conserve_value() {
    for seed in 0..3 {
        let s = random_scenario(seed, 30);
        let r = run_scenario(&s);
        assert!(r.conservation_held, "seed {seed}");
        assert!(r.safety.is_none(), "seed {seed}");
        assert!(r.height >= 4, "seed {seed}: funding steps should apply");
    }
}
