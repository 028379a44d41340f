use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{Action, ConsensusParams, CredentialUse, EntitySpec, Leg, RulesSpec, Scenario, Step};
use crate::entityreg::{AccountId, EntityId, EntityKind};
use crate::ledger::DecoySampler;
use crate::policy::Mode;
use crate::primitives::Profile;

const STORES: [&str; 4] = ["alice", "bob", "carol", "dave"];
const ACCOUNTS: [&str; 4] = ["alice-1", "bob-1", "carol-1", "shop-1"];
/// Opening shields so that private stores hold value early on.
const FUNDING: [(&str, &str); 4] = [
    ("alice-1", "alice"),
    ("bob-1", "bob"),
    ("carol-1", "carol"),
    ("bob-1", "dave"),
];

fn id(s: &str) -> EntityId {
    EntityId::from(s)
}

fn acct(s: &str) -> AccountId {
    AccountId::from(s)
}

/// A well-formed scenario with `steps` randomly chosen steps mixing every
/// transaction kind, credentials, replays and blacklist changes. Outcomes are
/// not predicted; many steps are legitimately denied or fail for lack of
/// funds.
pub fn random_scenario(seed: u64, steps: usize) -> Scenario {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let entity = |name: &str, kind, accounts: &[(&str, &str)]| EntitySpec {
        id: id(name),
        kind,
        accounts: accounts.iter().map(|(a, at)| (acct(a), id(at))).collect(),
        publish: false,
    };
    let entities = vec![
        entity("bank-a", EntityKind::RegulatedInstitution, &[]),
        entity("bank-b", EntityKind::RegulatedInstitution, &[]),
        entity("cb", EntityKind::CentralBank, &[]),
        entity("mixer", EntityKind::Intermediary, &[]),
        entity("alice", EntityKind::Individual, &[("alice-1", "bank-a")]),
        entity("bob", EntityKind::Individual, &[("bob-1", "bank-b")]),
        entity("carol", EntityKind::Individual, &[("carol-1", "bank-a")]),
        entity("dave", EntityKind::Individual, &[]),
        entity(
            "shop",
            EntityKind::RegisteredBusiness,
            &[("shop-1", "bank-b")],
        ),
    ];
    let mode = if rng.gen_bool(0.5) {
        Mode::Supported
    } else {
        Mode::Mediated
    };
    let n = *[1usize, 4].choose(&mut rng).expect("nonempty");
    let institutions = (0..n)
        .map(|i| id(if i % 2 == 0 { "bank-a" } else { "bank-b" }))
        .collect();
    let ring_size = rng.gen_range(1..=4);

    let pick_store = |rng: &mut ChaCha20Rng| id(STORES.choose(rng).expect("nonempty"));
    let pick_account = |rng: &mut ChaCha20Rng| acct(ACCOUNTS.choose(rng).expect("nonempty"));
    let pick_credential = |rng: &mut ChaCha20Rng| {
        *[
            CredentialUse::None,
            CredentialUse::Fresh,
            CredentialUse::Reuse,
        ]
        .choose(rng)
        .expect("nonempty")
    };

    let mut out: Vec<Step> = Vec::with_capacity(steps);
    let mut payments: Vec<usize> = Vec::new();
    for index in 0..steps {
        let amount = rng.gen_range(1..=400);
        let fee = rng.gen_range(0..=2);
        let funding = FUNDING.get(index);
        let roll = if funding.is_some() {
            100
        } else {
            rng.gen_range(0..100)
        };
        let action = match roll {
            100 => {
                let (from, to) = funding.expect("funding step");
                Action::Shield {
                    from: acct(from),
                    to: id(to),
                    amount: 1_500,
                    fee: 1,
                }
            }
            0..=14 => Action::Transfer {
                from: pick_account(&mut rng),
                to: pick_account(&mut rng),
                amount,
                fee,
            },
            15..=32 => Action::Shield {
                from: pick_account(&mut rng),
                to: pick_store(&mut rng),
                amount,
                fee,
            },
            33..=45 => Action::Unshield {
                from: pick_store(&mut rng),
                to: pick_account(&mut rng),
                amount,
                fee,
                credential: pick_credential(&mut rng),
            },
            46..=57 => Action::Send {
                from: pick_store(&mut rng),
                to: pick_store(&mut rng),
                amount,
                fee,
            },
            58..=67 => {
                let mut payers = STORES.to_vec();
                payers.shuffle(&mut rng);
                let legs = payers[..2]
                    .iter()
                    .map(|p| Leg {
                        from: id(p),
                        to: pick_store(&mut rng),
                        amount: rng.gen_range(1..=200),
                    })
                    .collect();
                Action::Batch {
                    via: id("mixer"),
                    legs,
                    fee: None,
                    credential: pick_credential(&mut rng),
                }
            }
            68..=76 => Action::Credential {
                holder: pick_store(&mut rng),
                count: rng.gen_range(1..=2),
            },
            77..=82 => Action::Issue {
                issuer: id(if rng.gen_bool(0.8) { "cb" } else { "alice" }),
                to: pick_account(&mut rng),
                amount,
            },
            83..=88 => Action::Respend {
                from: pick_store(&mut rng),
                to: pick_store(&mut rng),
                amount,
            },
            89..=94 if !payments.is_empty() => Action::Replay {
                step: *payments.choose(&mut rng).expect("nonempty"),
            },
            _ => Action::Blacklist {
                id: if rng.gen_bool(0.5) { "shop" } else { "bob-1" }.to_string(),
                flag: rng.gen_bool(0.6),
            },
        };
        if action.is_payment() && !matches!(action, Action::Replay { .. }) {
            payments.push(index);
        }
        out.push(Step {
            line: 0,
            action,
            expect: None,
        });
    }

    Scenario {
        name: format!("random-{seed}"),
        mode,
        profile: Profile::Standard,
        ring_size,
        sampler: if rng.gen_bool(0.5) {
            DecoySampler::Uniform
        } else {
            DecoySampler::AgeBiased
        },
        seed_outputs: 8,
        consensus: ConsensusParams {
            n,
            f: (n - 1) / 3,
            seed,
            drop: if n > 1 { rng.gen_range(0.0..0.2) } else { 0.0 },
            min_delay: 1_000,
            max_delay: 10_000,
            institutions,
            faults: Vec::new(),
            partitions: Vec::new(),
        },
        rules: RulesSpec {
            blacklist: Vec::new(),
            identification_threshold: rng.gen_bool(0.5).then_some(250),
            credential_issuer: Some(id("mixer")),
            mediation_fee: 1,
        },
        entities,
        genesis: vec![
            (acct("alice-1"), 5_000),
            (acct("bob-1"), 5_000),
            (acct("carol-1"), 5_000),
            (acct("shop-1"), 2_000),
        ],
        steps: out,
    }
}
