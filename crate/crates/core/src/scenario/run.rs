use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{Action, CredentialUse, Expect, Leg, Probe, Scenario};
use crate::consensus::{NodeId, SafetyViolation, SimConfig, TxOutcome, World};
use crate::entityreg::{AccountId, Entity, EntityId, EntityKind, Registry};
use crate::ledger::{
    apply_transaction, collect_audit_secrets, conservation_audit, validate_transaction, BatchLeg,
    Block, BuildError, Builder, LedgerConfig, LedgerState, PermitAll, RejectReason, Transaction,
    Wallet,
};
use crate::observer::{
    calibrate, desiderata_report, tax_report, AttackThresholds, DesiderataMatrix, LedgerView,
    LinkAttackStats, Probes, SyntheticConfig, TaxReport,
};
use crate::policy::{DenyReason, PolicyContext, RuleSet, ELIGIBLE};
use crate::primitives::{
    credential_finalize, credential_issue, credential_request, Credential, Element, Group,
    IssuerKeypair, IssuerSession, Profile, StealthAddress,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_SAFETY: i32 = 3;

/// Simulated time allowed for one transaction to resolve, microseconds.
const STEP_DEADLINE: u64 = 120_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeOutcome {
    LinkAttack(Vec<LinkAttackStats>),
    Taxation {
        complete: bool,
        businesses: usize,
        payments: usize,
    },
    Blacklist {
        blocked: bool,
        attempt: Box<StepOutcome>,
    },
    Registration {
        completed: bool,
        attempts: Vec<StepOutcome>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Applied {
        height: u64,
    },
    Denied(DenyReason),
    Rejected(RejectReason),
    /// The transaction could not be built, or never resolved.
    Failed(String),
    /// Administrative step carried out.
    Done,
    Probe(ProbeOutcome),
}

impl StepOutcome {
    fn from_tx(o: TxOutcome) -> Self {
        match o {
            TxOutcome::Applied { height, .. } => StepOutcome::Applied { height },
            TxOutcome::Rejected(r) => Self::from_reject(r),
            TxOutcome::Pending => StepOutcome::Failed("unresolved before the deadline".into()),
        }
    }

    fn from_reject(r: RejectReason) -> Self {
        match r {
            RejectReason::Policy(d) => StepOutcome::Denied(d),
            other => StepOutcome::Rejected(other),
        }
    }

    pub fn is_applied(&self) -> bool {
        matches!(self, StepOutcome::Applied { .. })
    }

    pub fn satisfies(&self, e: Expect) -> bool {
        match (e, self) {
            (
                Expect::Accept,
                StepOutcome::Applied { .. } | StepOutcome::Done | StepOutcome::Probe(_),
            ) => true,
            (Expect::Deny(r), StepOutcome::Denied(d)) => r == *d,
            (Expect::Reject(r), StepOutcome::Rejected(x)) => r == *x,
            (Expect::Fail, StepOutcome::Failed(_)) => true,
            _ => false,
        }
    }
}

impl fmt::Display for StepOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepOutcome::Applied { height } => write!(f, "applied({height})"),
            StepOutcome::Denied(r) => write!(f, "denied({r})"),
            StepOutcome::Rejected(r) => write!(f, "rejected({r})"),
            StepOutcome::Failed(m) => write!(f, "failed({m})"),
            StepOutcome::Done => f.write_str("done"),
            StepOutcome::Probe(p) => match p {
                ProbeOutcome::LinkAttack(stats) => {
                    f.write_str("link-attack(")?;
                    for (i, s) in stats.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{} z={:.2}", s.heuristic, s.z)?;
                    }
                    f.write_str(")")
                }
                ProbeOutcome::Taxation {
                    complete,
                    businesses,
                    payments,
                } => write!(
                    f,
                    "taxation(complete={complete}, businesses={businesses}, payments={payments})"
                ),
                ProbeOutcome::Blacklist { blocked, attempt } => {
                    write!(f, "blacklist(blocked={blocked}, attempt={attempt})")
                }
                ProbeOutcome::Registration {
                    completed,
                    attempts,
                } => {
                    write!(f, "registration(completed={completed}")?;
                    for a in attempts {
                        write!(f, ", {a}")?;
                    }
                    f.write_str(")")
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub index: usize,
    pub line: usize,
    pub action: &'static str,
    pub outcome: StepOutcome,
    pub expect: Option<Expect>,
}

impl StepRecord {
    /// `None` when the step carries no expectation.
    pub fn matched(&self) -> Option<bool> {
        self.expect.map(|e| self.outcome.satisfies(e))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConsensusSummary {
    pub nodes: usize,
    pub blocks_committed: u64,
    pub max_view: u64,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_dropped: u64,
    pub invalid_messages: u64,
    pub trace_digest: [u8; 32],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub name: String,
    pub mode: crate::policy::Mode,
    pub seed: u64,
    pub ledger_digest: [u8; 32],
    pub height: u64,
    pub supply: u64,
    pub fees: u64,
    pub steps: Vec<StepRecord>,
    pub consensus: ConsensusSummary,
    pub safety: Option<SafetyViolation>,
    /// Whether the value audit balanced after every step.
    pub conservation_held: bool,
    pub probes: Probes,
    pub desiderata: DesiderataMatrix,
    pub tax_reports: Vec<TaxReport>,
}

impl RunResult {
    pub fn expectations_met(&self) -> bool {
        self.conservation_held && self.steps.iter().all(|s| s.matched() != Some(false))
    }

    pub fn exit_code(&self) -> i32 {
        if self.safety.is_some() {
            EXIT_SAFETY
        } else if self.expectations_met() {
            EXIT_OK
        } else {
            EXIT_MISMATCH
        }
    }
}

/// Credentials held by one private-store owner.
#[derive(Default)]
struct Purse {
    fresh: Vec<Credential>,
    used: Vec<Credential>,
}

struct Runner<'s> {
    scenario: &'s Scenario,
    cfg: LedgerConfig,
    world: World,
    wallets: BTreeMap<EntityId, Wallet>,
    purses: BTreeMap<EntityId, Purse>,
    issuer: Option<IssuerKeypair>,
    seeded: Vec<Element>,
    rng: ChaCha20Rng,
    /// Transactions submitted so far, by step index.
    submitted: BTreeMap<usize, Transaction>,
    /// Per business, the sum of completed credits to its accounts.
    business_income: BTreeMap<EntityId, u64>,
    business_payments: usize,
    conservation_held: bool,
    safety: Option<SafetyViolation>,
    probes: Probes,
    step: usize,
}

fn group(profile: Profile) -> Group {
    match profile {
        Profile::Test => Group::test(),
        Profile::Standard => Group::standard(),
    }
}

pub fn run_scenario(scenario: &Scenario) -> RunResult {
    let mut runner = Runner::new(scenario);
    let mut steps = Vec::with_capacity(scenario.steps.len());
    for (index, step) in scenario.steps.iter().enumerate() {
        runner.step = index;
        let outcome = runner.execute(index, &step.action);
        runner.after_step();
        steps.push(StepRecord {
            index,
            line: step.line,
            action: step.action.name(),
            outcome,
            expect: step.expect,
        });
    }
    runner.finish(steps)
}

impl<'s> Runner<'s> {
    fn new(s: &'s Scenario) -> Self {
        let g = group(s.profile);
        let cfg = LedgerConfig::new(g.clone());
        let seed = s.consensus.seed;

        let mut registry = Registry::new();
        for e in &s.entities {
            registry
                .register_entity(Entity {
                    id: e.id.clone(),
                    kind: e.kind,
                })
                .expect("validated at parse time");
        }
        let mut wallets = BTreeMap::new();
        for e in &s.entities {
            for (account, at) in &e.accounts {
                registry
                    .open_account(account.clone(), at, &e.id)
                    .expect("validated at parse time");
            }
            if e.kind == EntityKind::Individual {
                let wallet = Wallet::new(&g, e.id.clone(), format!("{seed}/{}", e.id).as_bytes());
                if e.publish {
                    registry
                        .publish_stealth(&e.id, wallet.address())
                        .expect("individual");
                }
                wallets.insert(e.id.clone(), wallet);
            }
        }
        let issuer = s.rules.credential_issuer.as_ref().map(|id| {
            let keys = IssuerKeypair::derive(&g, id.0.as_bytes());
            registry
                .register_issuer(id, keys.public.clone())
                .expect("declared entity");
            keys
        });

        let mut rules = RuleSet::new(s.mode);
        for id in &s.rules.blacklist {
            rules
                .update_blacklist(&registry, id, true)
                .expect("validated at parse time");
        }
        rules.identification_threshold = s.rules.identification_threshold;
        rules.credential_issuer = s.rules.credential_issuer.clone();
        rules.mediation_fee = s.rules.mediation_fee;

        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x7363_656e_6172_696f);
        let mut state = LedgerState::new(registry.accounts().map(|a| (&a.id, &a.owner)));
        let seeded = state.seed_outputs(&g, s.seed_outputs);
        // genesis allocation is not subject to issuance policy
        for (account, amount) in &s.genesis {
            let tx = Builder {
                cfg: &cfg,
                state: &state,
                sampler: s.sampler,
                ring_size: s.ring_size,
            }
            .issue(&EntityId::from("genesis"), account, *amount, &mut rng)
            .expect("declared account");
            validate_transaction(&cfg, &state, &tx, &PermitAll).expect("genesis allocation");
            apply_transaction(&cfg, &mut state, &tx);
        }

        let c = &s.consensus;
        let mut sim = SimConfig::new(c.n, seed);
        sim.drop_probability = c.drop;
        sim.min_delay = c.min_delay;
        sim.max_delay = c.max_delay;
        let mut world = World::new(
            sim,
            cfg.clone(),
            state,
            c.institutions.clone(),
            registry,
            c.faults.clone(),
        )
        .expect("validated at parse time");
        world.set_rules(rules);
        world.partitions = c.partitions.clone();

        let purses = wallets
            .keys()
            .map(|k| (k.clone(), Purse::default()))
            .collect();
        Runner {
            scenario: s,
            cfg,
            world,
            wallets,
            purses,
            issuer,
            seeded,
            rng,
            submitted: BTreeMap::new(),
            business_income: BTreeMap::new(),
            business_payments: 0,
            conservation_held: true,
            safety: None,
            probes: Probes::default(),
            step: 0,
        }
    }

    fn builder<'a>(&'a self, state: &'a LedgerState) -> Builder<'a> {
        Builder {
            cfg: &self.cfg,
            state,
            sampler: self.scenario.sampler,
            ring_size: self.scenario.ring_size,
        }
    }

    fn address(&self, store: &EntityId) -> StealthAddress {
        self.wallets[store].address()
    }

    fn first_account(&self, owner: &EntityId) -> Option<AccountId> {
        self.world
            .registry
            .accounts_of(owner)
            .first()
            .map(|a| a.id.clone())
    }

    fn execute(&mut self, index: usize, action: &Action) -> StepOutcome {
        let built = match action {
            Action::Replay { step } => return self.replay(*step),
            Action::Credential { holder, count } => return self.obtain_credentials(holder, *count),
            Action::Blacklist { id, flag } => {
                let mut rules = self.rules().clone();
                return match rules.update_blacklist(&self.world.registry, id, *flag) {
                    Ok(()) => {
                        self.world.set_rules(rules);
                        StepOutcome::Done
                    }
                    Err(e) => StepOutcome::Failed(e.to_string()),
                };
            }
            Action::Probe(p) => return StepOutcome::Probe(self.probe(p)),
            other => self.build(other),
        };
        match built {
            Ok((tx, presented)) => {
                self.submitted.insert(index, tx.clone());
                self.submit(tx, &presented)
            }
            Err(m) => StepOutcome::Failed(m),
        }
    }

    /// Builds the transaction for a payment step, with the credentials it
    /// presents and their holders.
    fn build(&mut self, action: &Action) -> Result<(Transaction, Vec<EntityId>), String> {
        let state = self.world.canonical_state().clone();
        let mut rng = self.rng.clone();
        let b = self.builder(&state);
        let fail = |e: BuildError| e.to_string();
        let out = match action {
            Action::Issue { issuer, to, amount } => (
                b.issue(issuer, to, *amount, &mut rng).map_err(fail)?,
                vec![],
            ),
            Action::Transfer {
                from,
                to,
                amount,
                fee,
            } => (
                b.transparent(from, to, *amount, *fee, &mut rng)
                    .map_err(fail)?,
                vec![],
            ),
            Action::Shield {
                from,
                to,
                amount,
                fee,
            } => (
                b.shield(from, &self.address(to), *amount, *fee, &mut rng)
                    .map_err(fail)?
                    .0,
                vec![],
            ),
            Action::Unshield {
                from,
                to,
                amount,
                fee,
                credential,
            } => {
                let creds = self.pick_credentials(std::slice::from_ref(from), *credential)?;
                let holders = if creds.is_empty() {
                    vec![]
                } else {
                    vec![from.clone()]
                };
                (
                    b.unshield(&self.wallets[from], to, *amount, *fee, creds, &mut rng)
                        .map_err(fail)?
                        .0,
                    holders,
                )
            }
            Action::Send {
                from,
                to,
                amount,
                fee,
            } => (
                b.shielded_transfer(
                    &self.wallets[from],
                    &self.address(to),
                    *amount,
                    *fee,
                    &mut rng,
                )
                .map_err(fail)?
                .0,
                vec![],
            ),
            Action::Batch {
                via,
                legs,
                fee,
                credential,
            } => {
                let payers: Vec<EntityId> = legs.iter().map(|l| l.from.clone()).collect();
                let creds = self.pick_credentials(&payers, *credential)?;
                let holders = if creds.is_empty() { vec![] } else { payers };
                let fee = fee.unwrap_or(self.rules().mediation_fee);
                let batch = self.batch_legs(legs, creds);
                (
                    b.mediated_batch(&batch, via, fee, &mut rng)
                        .map_err(fail)?
                        .0,
                    holders,
                )
            }
            Action::Respend { from, to, amount } => {
                let mut stale = self.wallets[from].clone();
                stale.outputs.retain(|o| o.spent);
                if stale.outputs.is_empty() {
                    return Err(format!("`{from}` has spent nothing yet"));
                }
                stale.outputs.iter_mut().for_each(|o| o.spent = false);
                (
                    b.shielded_transfer(&stale, &self.address(to), *amount, 0, &mut rng)
                        .map_err(fail)?
                        .0,
                    vec![],
                )
            }
            _ => unreachable!("not a payment"),
        };
        self.rng = rng;
        Ok(out)
    }

    fn batch_legs(&self, legs: &[Leg], creds: Vec<Credential>) -> Vec<BatchLeg<'_>> {
        let mut creds = creds.into_iter();
        legs.iter()
            .map(|l| BatchLeg {
                payer: &self.wallets[&l.from],
                payee: self.address(&l.to),
                amount: l.amount,
                credential: creds.next(),
            })
            .collect()
    }

    fn rules(&self) -> &RuleSet {
        self.world.rules().expect("rules installed")
    }

    fn pick_credentials(
        &self,
        holders: &[EntityId],
        how: CredentialUse,
    ) -> Result<Vec<Credential>, String> {
        holders
            .iter()
            .filter_map(|h| {
                let purse = &self.purses[h];
                match how {
                    CredentialUse::None => None,
                    CredentialUse::Fresh => Some(
                        purse
                            .fresh
                            .first()
                            .cloned()
                            .ok_or_else(|| format!("`{h}` holds no unused credential")),
                    ),
                    CredentialUse::Reuse => Some(
                        purse
                            .used
                            .last()
                            .cloned()
                            .ok_or_else(|| format!("`{h}` has never presented a credential")),
                    ),
                }
            })
            .collect()
    }

    fn submit(&mut self, tx: Transaction, presented: &[EntityId]) -> StepOutcome {
        let via = (self.step % self.scenario.consensus.n) as NodeId;
        let handle = self.world.submit(tx.clone(), via);
        let deadline = self.world.now() + STEP_DEADLINE;
        self.world.run_until_resolved(deadline);
        let outcome = StepOutcome::from_tx(self.world.outcome(handle));
        if outcome.is_applied() {
            self.record_applied(&tx, presented);
        }
        outcome
    }

    fn record_applied(&mut self, tx: &Transaction, presented: &[EntityId]) {
        for (holder, c) in presented.iter().zip(&tx.credentials) {
            let purse = self.purses.get_mut(holder).expect("store owner");
            if let Some(i) = purse.fresh.iter().position(|x| x == c) {
                purse.fresh.remove(i);
                purse.used.push(c.clone());
            }
        }
        for o in &tx.transparent_outputs {
            let Ok((_, owner)) = self.world.registry.lookup_account(&o.account) else {
                continue;
            };
            let is_business = self
                .world
                .registry
                .entity(owner)
                .is_ok_and(|e| e.kind == EntityKind::RegisteredBusiness);
            if is_business {
                *self.business_income.entry(owner.clone()).or_default() += o.amount;
                self.business_payments += 1;
            }
        }
        let state = self.world.canonical_state().clone();
        for w in self.wallets.values_mut() {
            w.scan(&self.cfg, &state);
        }
    }

    fn replay(&mut self, step: usize) -> StepOutcome {
        let Some(tx) = self.submitted.get(&step).cloned() else {
            return StepOutcome::Failed(format!("step {step} produced no transaction"));
        };
        let state = self.world.canonical_state().clone();
        if state.applied.contains(&tx.id(&self.cfg.group)) {
            // replicas drop transactions they already applied, so the
            // verdict is the ledger's own
            let policy = PolicyContext {
                rules: self.rules(),
                registry: &self.world.registry,
                group: &self.cfg.group,
            };
            return match validate_transaction(&self.cfg, &state, &tx, &policy) {
                Ok(()) => StepOutcome::Failed("replay validated".into()),
                Err(r) => StepOutcome::from_reject(r),
            };
        }
        self.submit(tx, &[])
    }

    fn obtain_credentials(&mut self, holder: &EntityId, count: usize) -> StepOutcome {
        let Some(issuer) = &self.issuer else {
            return StepOutcome::Failed("no credential issuer configured".into());
        };
        let g = &self.cfg.group;
        for _ in 0..count {
            let session = IssuerSession::open(g, &mut self.rng);
            let (request, pending) = credential_request(
                g,
                &issuer.public,
                &session.commitment,
                ELIGIBLE,
                &mut self.rng,
            );
            let blind = credential_issue(g, &issuer.secret, session, &request);
            match credential_finalize(g, pending, &blind) {
                Ok(c) => self
                    .purses
                    .get_mut(holder)
                    .expect("store owner")
                    .fresh
                    .push(c),
                Err(e) => return StepOutcome::Failed(e.to_string()),
            }
        }
        StepOutcome::Done
    }

    fn probe(&mut self, p: &Probe) -> ProbeOutcome {
        match p {
            Probe::LinkAttack { spends, seed } => {
                let cfg = SyntheticConfig::new(
                    self.scenario.sampler,
                    self.scenario.ring_size,
                    *spends,
                    *seed,
                );
                let stats = calibrate(&cfg);
                self.probes.link_attacks = stats.clone();
                ProbeOutcome::LinkAttack(stats)
            }
            Probe::Taxation => {
                let (chain, _) = self.chain();
                let view = self.view(&chain);
                let mut complete = true;
                let businesses: Vec<EntityId> = self
                    .world
                    .registry
                    .entities()
                    .filter(|e| e.kind == EntityKind::RegisteredBusiness)
                    .map(|e| e.id.clone())
                    .collect();
                for b in &businesses {
                    let expected = self.business_income.get(b).copied().unwrap_or(0);
                    match tax_report(&view, b, 0..=u64::MAX) {
                        Ok(r) => complete &= r.total == expected,
                        Err(_) => complete = false,
                    }
                }
                self.probes.taxation_complete =
                    Some(self.probes.taxation_complete.unwrap_or(true) && complete);
                ProbeOutcome::Taxation {
                    complete,
                    businesses: businesses.len(),
                    payments: self.business_payments,
                }
            }
            Probe::Blacklist {
                from,
                target,
                amount,
            } => {
                let saved = self.rules().clone();
                let account = self.first_account(target).expect("validated at parse time");
                let mut listed = saved.clone();
                listed
                    .update_blacklist(&self.world.registry, &target.0, true)
                    .expect("declared entity");
                self.world.set_rules(listed);
                let attempt = match self.build(&Action::Unshield {
                    from: from.clone(),
                    to: account,
                    amount: *amount,
                    fee: 0,
                    credential: CredentialUse::None,
                }) {
                    Ok((tx, _)) => self.submit(tx, &[]),
                    Err(m) => StepOutcome::Failed(m),
                };
                self.world.set_rules(saved);
                let blocked = !attempt.is_applied();
                if !matches!(attempt, StepOutcome::Failed(_)) {
                    self.probes.blacklist_blocked =
                        Some(self.probes.blacklist_blocked.unwrap_or(true) && blocked);
                }
                ProbeOutcome::Blacklist {
                    blocked,
                    attempt: Box::new(attempt),
                }
            }
            Probe::Registration {
                from,
                to,
                via,
                amount,
            } => {
                let registered = !self.world.registry.accounts_of(from).is_empty()
                    || !self.purses[from].fresh.is_empty()
                    || !self.purses[from].used.is_empty();
                if registered {
                    return ProbeOutcome::Registration {
                        completed: false,
                        attempts: vec![StepOutcome::Failed(format!(
                            "`{from}` holds an account or a credential"
                        ))],
                    };
                }
                let mut attempts = Vec::new();
                let direct = Action::Send {
                    from: from.clone(),
                    to: to.clone(),
                    amount: *amount,
                    fee: 0,
                };
                let mediated = via.clone().or_else(|| {
                    self.world
                        .registry
                        .entities()
                        .find(|e| e.kind == EntityKind::Intermediary)
                        .map(|e| e.id.clone())
                });
                let mut candidates = vec![direct];
                if let Some(via) = mediated {
                    candidates.push(Action::Batch {
                        via,
                        legs: vec![Leg {
                            from: from.clone(),
                            to: to.clone(),
                            amount: *amount,
                        }],
                        fee: None,
                        credential: CredentialUse::None,
                    });
                }
                for action in candidates {
                    let outcome = match self.build(&action) {
                        Ok((tx, _)) => self.submit(tx, &[]),
                        Err(m) => StepOutcome::Failed(m),
                    };
                    let done = outcome.is_applied();
                    attempts.push(outcome);
                    if done {
                        break;
                    }
                }
                let completed = attempts.iter().any(StepOutcome::is_applied);
                if !attempts.iter().all(|a| matches!(a, StepOutcome::Failed(_))) {
                    self.probes.registration_free =
                        Some(self.probes.registration_free.unwrap_or(false) || completed);
                }
                ProbeOutcome::Registration {
                    completed,
                    attempts,
                }
            }
        }
    }

    /// Committed blocks of the most advanced correct replica.
    fn chain(&self) -> (Vec<Block>, u64) {
        let state = self.world.canonical_state();
        let node = self
            .world
            .nodes()
            .iter()
            .filter(|n| !self.world.is_byzantine(n.id()))
            .find(|n| n.height() == state.height)
            .expect("canonical replica");
        (
            node.chain.iter().map(|(b, _)| b.clone()).collect(),
            state.height,
        )
    }

    fn view<'a>(&'a self, chain: &'a [Block]) -> LedgerView<'a> {
        LedgerView {
            group: &self.cfg.group,
            chain,
            state: self.world.canonical_state(),
            registry: &self.world.registry,
            institutions: &self.scenario.consensus.institutions,
        }
    }

    fn after_step(&mut self) {
        let secrets = collect_audit_secrets(&self.cfg, self.wallets.values(), &self.seeded);
        if !conservation_audit(&self.cfg, self.world.canonical_state(), &secrets) {
            self.conservation_held = false;
        }
        if self.safety.is_none() {
            self.safety = self.world.check_safety().err();
        }
    }

    fn finish(mut self, steps: Vec<StepRecord>) -> RunResult {
        self.world.settle(STEP_DEADLINE);
        if self.safety.is_none() {
            self.safety = self.world.check_safety().err();
        }
        let (chain, _) = self.chain();
        let view = self.view(&chain);
        let tax_reports = self
            .world
            .registry
            .entities()
            .filter(|e| e.kind == EntityKind::RegisteredBusiness)
            .filter_map(|e| tax_report(&view, &e.id, 0..=u64::MAX).ok())
            .collect();
        let state = self.world.canonical_state();
        let stats = &self.world.stats;
        RunResult {
            name: self.scenario.name.clone(),
            mode: self.scenario.mode,
            seed: self.scenario.consensus.seed,
            ledger_digest: state.digest(&self.cfg.group),
            height: state.height,
            supply: state.supply,
            fees: state.fees,
            steps,
            consensus: ConsensusSummary {
                nodes: self.scenario.consensus.n,
                blocks_committed: stats.blocks_committed,
                max_view: stats.max_view,
                messages_sent: stats.messages_sent,
                messages_delivered: stats.messages_delivered,
                messages_dropped: stats.messages_dropped,
                invalid_messages: stats.invalid_messages,
                trace_digest: self.world.trace_digest(),
            },
            safety: self.safety.clone(),
            conservation_held: self.conservation_held,
            desiderata: desiderata_report(
                self.scenario.mode,
                &self.probes,
                &AttackThresholds::default(),
            ),
            probes: self.probes,
            tax_reports,
        }
    }
}
