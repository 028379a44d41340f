use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use super::{
    Action, ConsensusParams, CredentialUse, EntitySpec, Expect, Leg, Probe, RulesSpec, Scenario,
    Step,
};
use crate::consensus::{Fault, NodeId, Partition};
use crate::entityreg::{AccountId, Entity, EntityId, EntityKind, Registry};
use crate::ledger::DecoySampler;
use crate::policy::Mode;
use crate::primitives::Profile;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    /// Malformed document or unknown key; the message carries the location.
    #[error("{0}")]
    Syntax(String),
    #[error("line {line}: {field}: {message}")]
    Field {
        line: usize,
        field: String,
        message: String,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    name: String,
    mode: Spanned<String>,
    group: Option<Spanned<String>>,
    ring_size: Option<Spanned<usize>>,
    sampler: Option<Spanned<String>>,
    seed_outputs: Option<usize>,
    consensus: Spanned<ConsensusDoc>,
    #[serde(default)]
    rules: Option<Spanned<RulesDoc>>,
    entities: Vec<Spanned<EntityDoc>>,
    #[serde(default)]
    genesis: Vec<Spanned<GenesisDoc>>,
    #[serde(default)]
    steps: Vec<Spanned<StepDoc>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConsensusDoc {
    n: usize,
    f: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    drop: f64,
    min_delay: Option<u64>,
    max_delay: Option<u64>,
    institutions: Option<Vec<String>>,
    #[serde(default)]
    faults: Vec<FaultDoc>,
    #[serde(default)]
    partitions: Vec<PartitionDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultDoc {
    kind: String,
    node: NodeId,
    at: Option<u64>,
    from: Option<u64>,
    to: Option<u64>,
    height: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionDoc {
    groups: Vec<Vec<NodeId>>,
    from: u64,
    to: u64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RulesDoc {
    #[serde(default)]
    blacklist: Vec<String>,
    identification_threshold: Option<u64>,
    credential_issuer: Option<String>,
    #[serde(default)]
    mediation_fee: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityDoc {
    id: String,
    kind: String,
    #[serde(default)]
    accounts: Vec<AccountDoc>,
    #[serde(default)]
    publish: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AccountDoc {
    id: String,
    at: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenesisDoc {
    account: String,
    amount: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepDoc {
    action: String,
    from: Option<String>,
    to: Option<String>,
    amount: Option<u64>,
    fee: Option<u64>,
    issuer: Option<String>,
    holder: Option<String>,
    count: Option<usize>,
    credential: Option<String>,
    via: Option<String>,
    legs: Option<Vec<LegDoc>>,
    step: Option<usize>,
    id: Option<String>,
    target: Option<String>,
    spends: Option<usize>,
    seed: Option<u64>,
    expect: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LegDoc {
    from: String,
    to: String,
    amount: u64,
}

/// Maps byte offsets to 1-based line numbers.
struct Lines(Vec<usize>);

impl Lines {
    fn new(src: &str) -> Self {
        Lines(
            src.bytes()
                .enumerate()
                .filter(|(_, b)| *b == b'\n')
                .map(|(i, _)| i)
                .collect(),
        )
    }

    fn of<T>(&self, s: &Spanned<T>) -> usize {
        self.0.partition_point(|&nl| nl < s.span().start) + 1
    }
}

fn err(line: usize, field: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError::Field {
        line,
        field: field.into(),
        message: message.into(),
    }
}

/// Everything a step may reference, for validation.
struct Names {
    kinds: BTreeMap<EntityId, EntityKind>,
    accounts: BTreeSet<AccountId>,
    account_owner: BTreeMap<AccountId, EntityId>,
}

impl Names {
    fn entity(&self, line: usize, field: &str, id: &str) -> Result<EntityId, ParseError> {
        let id = EntityId::from(id);
        if self.kinds.contains_key(&id) {
            Ok(id)
        } else {
            Err(err(line, field, format!("unknown entity `{id}`")))
        }
    }

    fn store(&self, line: usize, field: &str, id: &str) -> Result<EntityId, ParseError> {
        let id = self.entity(line, field, id)?;
        if self.kinds[&id] != EntityKind::Individual {
            return Err(err(
                line,
                field,
                format!("`{id}` is a {} and has no private store", self.kinds[&id]),
            ));
        }
        Ok(id)
    }

    fn account(&self, line: usize, field: &str, id: &str) -> Result<AccountId, ParseError> {
        let id = AccountId::from(id);
        if self.accounts.contains(&id) {
            Ok(id)
        } else {
            Err(err(line, field, format!("unknown account `{id}`")))
        }
    }
}

pub fn parse_scenario(src: &str) -> Result<Scenario, ParseError> {
    let doc: Doc = toml::from_str(src).map_err(|e| ParseError::Syntax(e.to_string()))?;
    let lines = Lines::new(src);

    let mode = Mode::parse(doc.mode.get_ref()).ok_or_else(|| {
        err(
            lines.of(&doc.mode),
            "mode",
            "expected `supported` or `mediated`",
        )
    })?;
    let profile = match &doc.group {
        None => Profile::Standard,
        Some(g) => Profile::parse(g.get_ref())
            .ok_or_else(|| err(lines.of(g), "group", "expected `test` or `standard`"))?,
    };
    let sampler = match &doc.sampler {
        None => DecoySampler::Uniform,
        Some(s) => DecoySampler::parse(s.get_ref())
            .ok_or_else(|| err(lines.of(s), "sampler", "expected `uniform` or `age-biased`"))?,
    };
    let ring_size = match &doc.ring_size {
        None => 4,
        Some(r) if *r.get_ref() == 0 => {
            return Err(err(lines.of(r), "ring_size", "must be at least 1"))
        }
        Some(r) => *r.get_ref(),
    };

    let (kinds, registry, entities) = entities(&doc, &lines)?;
    let names = Names {
        accounts: registry.accounts().map(|a| a.id.clone()).collect(),
        account_owner: registry
            .accounts()
            .map(|a| (a.id.clone(), a.owner.clone()))
            .collect(),
        kinds,
    };
    let consensus = consensus(&doc, &lines, &names)?;
    let rules = rules(&doc, &lines, &names)?;

    let mut genesis = Vec::new();
    for (i, g) in doc.genesis.iter().enumerate() {
        let line = lines.of(g);
        let account =
            names.account(line, &format!("genesis[{i}].account"), &g.get_ref().account)?;
        genesis.push((account, g.get_ref().amount));
    }

    let mut steps = Vec::new();
    for (i, s) in doc.steps.iter().enumerate() {
        let step = step(i, lines.of(s), s.get_ref(), &names, &steps)?;
        steps.push(step);
    }

    Ok(Scenario {
        name: doc.name,
        mode,
        profile,
        ring_size,
        sampler,
        seed_outputs: doc.seed_outputs.unwrap_or(2 * ring_size),
        consensus,
        rules,
        entities,
        genesis,
        steps,
    })
}

type Cast = (BTreeMap<EntityId, EntityKind>, Registry, Vec<EntitySpec>);

fn entities(doc: &Doc, lines: &Lines) -> Result<Cast, ParseError> {
    let mut registry = Registry::new();
    let mut kinds = BTreeMap::new();
    for (i, e) in doc.entities.iter().enumerate() {
        let line = lines.of(e);
        let kind = EntityKind::parse(&e.get_ref().kind).ok_or_else(|| {
            err(
                line,
                format!("entities[{i}].kind"),
                format!("unknown entity kind `{}`", e.get_ref().kind),
            )
        })?;
        let id = EntityId::from(e.get_ref().id.as_str());
        registry
            .register_entity(Entity {
                id: id.clone(),
                kind,
            })
            .map_err(|x| err(line, format!("entities[{i}].id"), x.to_string()))?;
        kinds.insert(id, kind);
    }
    // accounts may sit at institutions declared further down
    let mut specs = Vec::new();
    for (i, e) in doc.entities.iter().enumerate() {
        let line = lines.of(e);
        let d = e.get_ref();
        let id = EntityId::from(d.id.as_str());
        let mut accounts = Vec::new();
        for (j, a) in d.accounts.iter().enumerate() {
            let account = AccountId::from(a.id.as_str());
            let at = EntityId::from(a.at.as_str());
            registry
                .open_account(account.clone(), &at, &id)
                .map_err(|x| err(line, format!("entities[{i}].accounts[{j}]"), x.to_string()))?;
            accounts.push((account, at));
        }
        if d.publish && kinds[&id] != EntityKind::Individual {
            return Err(err(
                line,
                format!("entities[{i}].publish"),
                "only individuals keep private stores",
            ));
        }
        specs.push(EntitySpec {
            kind: kinds[&id],
            id,
            accounts,
            publish: d.publish,
        });
    }
    Ok((kinds, registry, specs))
}

fn consensus(doc: &Doc, lines: &Lines, names: &Names) -> Result<ConsensusParams, ParseError> {
    let c = doc.consensus.get_ref();
    let line = lines.of(&doc.consensus);
    if c.n == 0 {
        return Err(err(line, "consensus.n", "need at least one node"));
    }
    if c.n < 3 * c.f + 1 {
        return Err(err(
            line,
            "consensus.f",
            format!(
                "n = {} cannot tolerate f = {}: need n >= 3f+1 = {}",
                c.n,
                c.f,
                3 * c.f + 1
            ),
        ));
    }
    if !(0.0..1.0).contains(&c.drop) {
        return Err(err(line, "consensus.drop", "must lie in [0, 1)"));
    }
    let min_delay = c.min_delay.unwrap_or(1_000);
    let max_delay = c.max_delay.unwrap_or(10_000);
    if min_delay > max_delay {
        return Err(err(line, "consensus.min_delay", "exceeds max_delay"));
    }
    let institutions = match &c.institutions {
        Some(list) => {
            if list.len() != c.n {
                return Err(err(
                    line,
                    "consensus.institutions",
                    format!("{} institutions for {} nodes", list.len(), c.n),
                ));
            }
            list.iter()
                .map(|s| {
                    let id = names.entity(line, "consensus.institutions", s)?;
                    if names.kinds[&id] != EntityKind::RegulatedInstitution {
                        return Err(err(
                            line,
                            "consensus.institutions",
                            format!("`{id}` is not a regulated institution"),
                        ));
                    }
                    Ok(id)
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        None => {
            let all: Vec<EntityId> = doc
                .entities
                .iter()
                .filter(|e| e.get_ref().kind == EntityKind::RegulatedInstitution.as_str())
                .map(|e| EntityId::from(e.get_ref().id.as_str()))
                .collect();
            if all.is_empty() {
                return Err(err(
                    line,
                    "consensus.institutions",
                    "no regulated institution to operate the nodes",
                ));
            }
            all.iter().cycle().take(c.n).cloned().collect()
        }
    };
    let mut faults = Vec::new();
    for (i, f) in c.faults.iter().enumerate() {
        let field = format!("consensus.faults[{i}]");
        if f.node as usize >= c.n {
            return Err(err(line, field, format!("node {} does not exist", f.node)));
        }
        let need = |v: Option<u64>, name: &str| {
            v.ok_or_else(|| err(line, format!("{field}.{name}"), "missing"))
        };
        faults.push(match f.kind.as_str() {
            "crash" => Fault::Crash {
                node: f.node,
                at: f.at.unwrap_or(0),
            },
            "mute" => Fault::Mute {
                node: f.node,
                from: need(f.from, "from")?,
                to: need(f.to, "to")?,
            },
            "equivocate" => Fault::Equivocate {
                node: f.node,
                height: need(f.height, "height")?,
            },
            other => {
                return Err(err(
                    line,
                    format!("{field}.kind"),
                    format!("unknown fault `{other}`"),
                ))
            }
        });
    }
    let mut partitions = Vec::new();
    for (i, p) in c.partitions.iter().enumerate() {
        if let Some(bad) = p.groups.iter().flatten().find(|&&n| n as usize >= c.n) {
            return Err(err(
                line,
                format!("consensus.partitions[{i}]"),
                format!("node {bad} does not exist"),
            ));
        }
        partitions.push(Partition {
            groups: p
                .groups
                .iter()
                .map(|g| g.iter().copied().collect())
                .collect(),
            from: p.from,
            to: p.to,
        });
    }
    Ok(ConsensusParams {
        n: c.n,
        f: c.f,
        seed: c.seed,
        drop: c.drop,
        min_delay,
        max_delay,
        institutions,
        faults,
        partitions,
    })
}

fn rules(doc: &Doc, lines: &Lines, names: &Names) -> Result<RulesSpec, ParseError> {
    let Some(r) = &doc.rules else {
        return Ok(RulesSpec::default());
    };
    let line = lines.of(r);
    let d = r.get_ref();
    for id in &d.blacklist {
        if !names.kinds.contains_key(&EntityId::from(id.as_str()))
            && !names.accounts.contains(&AccountId::from(id.as_str()))
        {
            return Err(err(line, "rules.blacklist", format!("unknown id `{id}`")));
        }
    }
    let credential_issuer = match &d.credential_issuer {
        None => None,
        Some(id) => {
            let id = names.entity(line, "rules.credential_issuer", id)?;
            if names.kinds[&id] != EntityKind::Intermediary {
                return Err(err(
                    line,
                    "rules.credential_issuer",
                    format!("`{id}` must be an Intermediary"),
                ));
            }
            Some(id)
        }
    };
    Ok(RulesSpec {
        blacklist: d.blacklist.clone(),
        identification_threshold: d.identification_threshold,
        credential_issuer,
        mediation_fee: d.mediation_fee,
    })
}

fn step(
    index: usize,
    line: usize,
    d: &StepDoc,
    names: &Names,
    earlier: &[Step],
) -> Result<Step, ParseError> {
    let at = |name: &str| format!("steps[{index}].{name}");
    let need_str = |v: &Option<String>, name: &str| -> Result<String, ParseError> {
        v.clone().ok_or_else(|| err(line, at(name), "missing"))
    };
    let amount = || d.amount.ok_or_else(|| err(line, at("amount"), "missing"));
    let fee = d.fee.unwrap_or(0);
    let credential = match &d.credential {
        None => CredentialUse::None,
        Some(c) => CredentialUse::parse(c).ok_or_else(|| {
            err(
                line,
                at("credential"),
                format!("expected `none`, `fresh` or `reuse`, got `{c}`"),
            )
        })?,
    };

    let action = match d.action.as_str() {
        "issue" => Action::Issue {
            issuer: names.entity(line, &at("issuer"), &need_str(&d.issuer, "issuer")?)?,
            to: names.account(line, &at("to"), &need_str(&d.to, "to")?)?,
            amount: amount()?,
        },
        "transfer" => Action::Transfer {
            from: names.account(line, &at("from"), &need_str(&d.from, "from")?)?,
            to: names.account(line, &at("to"), &need_str(&d.to, "to")?)?,
            amount: amount()?,
            fee,
        },
        "shield" => Action::Shield {
            from: names.account(line, &at("from"), &need_str(&d.from, "from")?)?,
            to: names.store(line, &at("to"), &need_str(&d.to, "to")?)?,
            amount: amount()?,
            fee,
        },
        "unshield" => Action::Unshield {
            from: names.store(line, &at("from"), &need_str(&d.from, "from")?)?,
            to: names.account(line, &at("to"), &need_str(&d.to, "to")?)?,
            amount: amount()?,
            fee,
            credential,
        },
        "send" => Action::Send {
            from: names.store(line, &at("from"), &need_str(&d.from, "from")?)?,
            to: names.store(line, &at("to"), &need_str(&d.to, "to")?)?,
            amount: amount()?,
            fee,
        },
        "batch" => {
            let via = names.entity(line, &at("via"), &need_str(&d.via, "via")?)?;
            let docs = d
                .legs
                .as_ref()
                .filter(|l| !l.is_empty())
                .ok_or_else(|| err(line, at("legs"), "need at least one leg"))?;
            let legs = docs
                .iter()
                .enumerate()
                .map(|(j, l)| {
                    Ok(Leg {
                        from: names.store(line, &at(&format!("legs[{j}].from")), &l.from)?,
                        to: names.store(line, &at(&format!("legs[{j}].to")), &l.to)?,
                        amount: l.amount,
                    })
                })
                .collect::<Result<Vec<_>, ParseError>>()?;
            Action::Batch {
                via,
                legs,
                fee: d.fee,
                credential,
            }
        }
        "respend" => Action::Respend {
            from: names.store(line, &at("from"), &need_str(&d.from, "from")?)?,
            to: names.store(line, &at("to"), &need_str(&d.to, "to")?)?,
            amount: amount()?,
        },
        "replay" => {
            let step = d.step.ok_or_else(|| err(line, at("step"), "missing"))?;
            match earlier.get(step) {
                Some(s) if s.action.is_payment() && !matches!(s.action, Action::Replay { .. }) => {}
                Some(_) => {
                    return Err(err(
                        line,
                        at("step"),
                        format!("step {step} does not submit a transaction"),
                    ))
                }
                None => {
                    return Err(err(
                        line,
                        at("step"),
                        format!("step {step} is not an earlier step"),
                    ))
                }
            }
            Action::Replay { step }
        }
        "credential" => {
            let holder = names.store(line, &at("holder"), &need_str(&d.holder, "holder")?)?;
            Action::Credential {
                holder,
                count: d.count.unwrap_or(1),
            }
        }
        "blacklist" | "unblacklist" => {
            let id = need_str(&d.id, "id")?;
            if !names.kinds.contains_key(&EntityId::from(id.as_str()))
                && !names.accounts.contains(&AccountId::from(id.as_str()))
            {
                return Err(err(line, at("id"), format!("unknown id `{id}`")));
            }
            Action::Blacklist {
                id,
                flag: d.action == "blacklist",
            }
        }
        "probe:link-attack" => Action::Probe(Probe::LinkAttack {
            spends: d.spends.unwrap_or(10_000),
            seed: d.seed.unwrap_or(0),
        }),
        "probe:taxation" => Action::Probe(Probe::Taxation),
        "probe:blacklist" => {
            let target = names.entity(line, &at("target"), &need_str(&d.target, "target")?)?;
            if !names.account_owner.values().any(|o| o == &target) {
                return Err(err(
                    line,
                    at("target"),
                    format!("`{target}` holds no account"),
                ));
            }
            Action::Probe(Probe::Blacklist {
                from: names.store(line, &at("from"), &need_str(&d.from, "from")?)?,
                target,
                amount: d.amount.unwrap_or(1),
            })
        }
        "probe:registration" => Action::Probe(Probe::Registration {
            from: names.store(line, &at("from"), &need_str(&d.from, "from")?)?,
            to: names.store(line, &at("to"), &need_str(&d.to, "to")?)?,
            via: d
                .via
                .as_deref()
                .map(|v| names.entity(line, &at("via"), v))
                .transpose()?,
            amount: d.amount.unwrap_or(1),
        }),
        other => return Err(err(line, at("action"), format!("unknown action `{other}`"))),
    };
    let expect = d
        .expect
        .as_deref()
        .map(|e| {
            Expect::parse(e).ok_or_else(|| {
                err(
                    line,
                    at("expect"),
                    format!("expected accept, fail, deny(Reason) or reject(Reason), got `{e}`"),
                )
            })
        })
        .transpose()?;
    Ok(Step {
        line,
        action,
        expect,
    })
}
