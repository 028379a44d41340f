use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use super::message::{message_digest, ConsensusMessage, Digest, NodeId, NodeKeys};
use super::node::{ConfigError, Node, NodeConfig, NodeContext, NodeInput, NodeOutput, Target};
use crate::entityreg::{EntityId, Registry};
use crate::ledger::{LedgerConfig, LedgerState, PolicyHook, RejectReason, Transaction, TxId};
use crate::policy::{PolicyContext, RuleSet};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub nodes: usize,
    pub seed: u64,
    /// Network delay bounds, microseconds.
    pub min_delay: u64,
    pub max_delay: u64,
    pub drop_probability: f64,
    pub base_timeout: u64,
    pub backoff: u64,
    pub tick: u64,
    pub client_retry: u64,
    pub max_block_txs: usize,
}

impl SimConfig {
    pub fn new(nodes: usize, seed: u64) -> Self {
        SimConfig {
            nodes,
            seed,
            min_delay: 1_000,
            max_delay: 10_000,
            drop_probability: 0.0,
            base_timeout: 200_000,
            backoff: 2,
            tick: 50_000,
            client_retry: 400_000,
            max_block_txs: 64,
        }
    }

    /// Largest tolerated number of Byzantine replicas.
    pub fn f(&self) -> usize {
        self.nodes.saturating_sub(1) / 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    Crash {
        node: NodeId,
        at: u64,
    },
    /// Node neither sends nor receives during `[from, to)` but keeps its state.
    Mute {
        node: NodeId,
        from: u64,
        to: u64,
    },
    /// Leader proposes conflicting blocks for this height.
    Equivocate {
        node: NodeId,
        height: u64,
    },
}

/// Messages crossing between groups are lost during `[from, to)`. Nodes not
/// listed form one extra group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub groups: Vec<BTreeSet<NodeId>>,
    pub from: u64,
    pub to: u64,
}

impl Partition {
    fn group_of(&self, node: NodeId) -> usize {
        self.groups
            .iter()
            .position(|g| g.contains(&node))
            .unwrap_or(self.groups.len())
    }

    fn separates(&self, a: NodeId, b: NodeId, now: u64) -> bool {
        now >= self.from && now < self.to && self.group_of(a) != self.group_of(b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("need one institution per node: {nodes} nodes, {institutions} institutions")]
    Institutions { nodes: usize, institutions: usize },
    #[error("fault names node {0}, which does not exist")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Event {
    Deliver {
        to: NodeId,
        message: ConsensusMessage,
    },
    Timer {
        node: NodeId,
        token: u64,
    },
    Tick {
        node: NodeId,
    },
    ClientDeliver {
        node: NodeId,
        tx: usize,
    },
    ClientRetry {
        tx: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    Pending,
    Applied { height: u64, at: u64 },
    Rejected(RejectReason),
}

#[derive(Debug, Clone)]
struct ClientTx {
    tx: Transaction,
    id: TxId,
    submitted_at: u64,
    outcome: TxOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectionLog {
    pub time: u64,
    pub node: NodeId,
    pub tx: TxId,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimStats {
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_dropped: u64,
    pub by_variant: BTreeMap<&'static str, u64>,
    pub invalid_messages: u64,
    pub blocks_committed: u64,
    pub max_view: u64,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("nodes {a} and {b} committed different blocks at height {height}")]
pub struct SafetyViolation {
    pub height: u64,
    pub a: NodeId,
    pub b: NodeId,
}

/// Deterministic discrete-event world: replicas, a lossy network, scripted
/// faults and a retrying client.
pub struct World {
    pub cfg: SimConfig,
    pub ledger: LedgerConfig,
    /// Institutional rules every replica enforces, each from a block height
    /// on. Empty admits everything.
    rules: Vec<(u64, RuleSet)>,
    pub registry: Registry,
    pub partitions: Vec<Partition>,
    pub rejections: Vec<RejectionLog>,
    pub stats: SimStats,
    nodes: Vec<Node>,
    keys: NodeKeys,
    faults: Vec<Fault>,
    queue: BTreeMap<(u64, u64), Event>,
    counter: u64,
    now: u64,
    rng: ChaCha8Rng,
    clients: Vec<ClientTx>,
    trace: Sha256,
    /// Per transaction, the reason each node logged when rejecting it.
    rejected_by: BTreeMap<TxId, BTreeMap<NodeId, RejectReason>>,
}

impl World {
    pub fn new(
        cfg: SimConfig,
        ledger: LedgerConfig,
        genesis: LedgerState,
        institutions: Vec<EntityId>,
        registry: Registry,
        faults: Vec<Fault>,
    ) -> Result<Self, SimError> {
        if institutions.len() != cfg.nodes {
            return Err(SimError::Institutions {
                nodes: cfg.nodes,
                institutions: institutions.len(),
            });
        }
        let replicas: Vec<NodeId> = (0..cfg.nodes as NodeId).collect();
        let mut nodes = Vec::with_capacity(cfg.nodes);
        for (i, institution) in institutions.into_iter().enumerate() {
            let nc = NodeConfig {
                id: i as NodeId,
                institution,
                replicas: replicas.clone(),
                f: cfg.f(),
                base_timeout: cfg.base_timeout,
                backoff: cfg.backoff,
                tick: cfg.tick,
                max_block_txs: cfg.max_block_txs,
            };
            nc.check()?;
            nodes.push(Node::new(nc, genesis.clone()));
        }
        for fault in &faults {
            let node = match *fault {
                Fault::Crash { node, .. } | Fault::Mute { node, .. } => node,
                Fault::Equivocate { node, height } => {
                    if let Some(n) = nodes.get_mut(node as usize) {
                        n.equivocate_at = Some(height);
                    }
                    node
                }
            };
            if node as usize >= cfg.nodes {
                return Err(SimError::UnknownNode(node));
            }
        }
        let mut world = World {
            keys: NodeKeys::derive(cfg.seed, cfg.nodes),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            ledger,
            rules: Vec::new(),
            registry,
            partitions: Vec::new(),
            rejections: Vec::new(),
            stats: SimStats::default(),
            nodes,
            faults,
            queue: BTreeMap::new(),
            counter: 0,
            now: 0,
            clients: Vec::new(),
            trace: Sha256::new(),
            rejected_by: BTreeMap::new(),
        };
        for i in 0..world.cfg.nodes {
            let offset = world.cfg.tick * (i as u64 + 1) / world.cfg.nodes as u64;
            world.schedule(offset, Event::Tick { node: i as NodeId });
        }
        Ok(world)
    }

    /// The rules in force for the next block to be proposed.
    pub fn rules(&self) -> Option<&RuleSet> {
        self.rules.last().map(|(_, r)| r)
    }

    /// Puts `rules` in force from the block after the highest one any
    /// replica has committed. Blocks at or below that height keep being
    /// judged by the rules they were proposed under, so lagging replicas
    /// reach the same state.
    pub fn set_rules(&mut self, rules: RuleSet) {
        let from = self.nodes.iter().map(Node::height).max().unwrap_or(0) + 1;
        self.rules.retain(|(h, _)| *h < from);
        self.rules.push((from, rules));
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    fn schedule(&mut self, at: u64, event: Event) {
        self.counter += 1;
        self.queue.insert((at, self.counter), event);
    }

    pub fn is_crashed(&self, node: NodeId, at: u64) -> bool {
        self.faults
            .iter()
            .any(|f| matches!(*f, Fault::Crash { node: n, at: t } if n == node && at >= t))
    }

    fn is_silent(&self, node: NodeId, at: u64) -> bool {
        self.is_crashed(node, at)
            || self.faults.iter().any(|f| {
                matches!(*f, Fault::Mute { node: n, from, to } if n == node && at >= from && at < to)
            })
    }

    pub fn is_byzantine(&self, node: NodeId) -> bool {
        self.faults
            .iter()
            .any(|f| matches!(*f, Fault::Equivocate { node: n, .. } if n == node))
    }

    /// Hands a transaction to one replica and keeps retrying, to all
    /// replicas, until it is resolved.
    pub fn submit(&mut self, tx: Transaction, via: NodeId) -> usize {
        let id = tx.id(&self.ledger.group);
        let index = self.clients.len();
        self.clients.push(ClientTx {
            tx,
            id,
            submitted_at: self.now,
            outcome: TxOutcome::Pending,
        });
        let delay = self.delay();
        self.schedule(
            self.now + delay,
            Event::ClientDeliver {
                node: via,
                tx: index,
            },
        );
        self.schedule(
            self.now + self.cfg.client_retry,
            Event::ClientRetry { tx: index },
        );
        index
    }

    pub fn outcome(&self, handle: usize) -> TxOutcome {
        self.clients[handle].outcome
    }

    pub fn tx_id(&self, handle: usize) -> TxId {
        self.clients[handle].id
    }

    /// Commit latency of a resolved transaction, microseconds.
    pub fn latency(&self, handle: usize) -> Option<u64> {
        match self.clients[handle].outcome {
            TxOutcome::Applied { at, .. } => Some(at - self.clients[handle].submitted_at),
            _ => None,
        }
    }

    pub fn all_resolved(&self) -> bool {
        self.clients.iter().all(|c| c.outcome != TxOutcome::Pending)
    }

    fn delay(&mut self) -> u64 {
        self.rng.gen_range(self.cfg.min_delay..=self.cfg.max_delay)
    }

    fn record(&mut self, kind: u8, node: NodeId, extra: &[u8]) {
        self.trace.update(self.now.to_be_bytes());
        self.trace.update([kind]);
        self.trace.update(node.to_be_bytes());
        self.trace.update(extra);
    }

    /// Digest of every processed event; equal seeds give equal digests.
    pub fn trace_digest(&self) -> Digest {
        self.trace.clone().finalize().into()
    }

    /// Processes the next event. Returns false when nothing is left.
    pub fn step(&mut self) -> bool {
        let Some(((at, _), event)) = self.queue.pop_first() else {
            return false;
        };
        self.now = at;
        self.stats.events += 1;
        match event {
            Event::Tick { node } => {
                if !self.is_crashed(node, at) {
                    let next = at + self.cfg.tick;
                    self.schedule(next, Event::Tick { node });
                    if !self.is_silent(node, at) {
                        self.record(0, node, &[]);
                        self.run_node(node, |n, ctx| n.handle(ctx, NodeInput::Tick));
                    }
                }
            }
            Event::Timer { node, token } => {
                if !self.is_silent(node, at) {
                    self.record(1, node, &token.to_be_bytes());
                    self.run_node(node, |n, ctx| n.handle(ctx, NodeInput::Timer(token)));
                } else if !self.is_crashed(node, at) {
                    // a muted node's timer fires once it can act again
                    let resume = self.mute_end(node, at);
                    self.schedule(resume, Event::Timer { node, token });
                }
            }
            Event::Deliver { to, message } => {
                if self.is_silent(to, at) {
                    self.stats.messages_dropped += 1;
                } else {
                    self.stats.messages_delivered += 1;
                    let d = message_digest(&self.ledger.group, &message);
                    self.record(2, to, &d);
                    self.run_node(to, |n, ctx| n.handle(ctx, NodeInput::Message(message)));
                }
            }
            Event::ClientDeliver { node, tx } => {
                if !self.is_silent(node, at) {
                    let t = self.clients[tx].tx.clone();
                    let id = self.clients[tx].id;
                    self.record(3, node, &id);
                    self.run_node(node, |n, ctx| n.submit(ctx, t));
                }
            }
            Event::ClientRetry { tx } => {
                if self.clients[tx].outcome == TxOutcome::Pending {
                    for node in 0..self.cfg.nodes as NodeId {
                        let delay = self.delay();
                        self.schedule(at + delay, Event::ClientDeliver { node, tx });
                    }
                    self.schedule(at + self.cfg.client_retry, Event::ClientRetry { tx });
                }
            }
        }
        self.resolve_clients();
        true
    }

    fn mute_end(&self, node: NodeId, at: u64) -> u64 {
        self.faults
            .iter()
            .filter_map(|f| match *f {
                Fault::Mute { node: n, from, to } if n == node && at >= from && at < to => Some(to),
                _ => None,
            })
            .max()
            .unwrap_or(at)
    }

    fn run_node<F>(&mut self, id: NodeId, f: F)
    where
        F: FnOnce(&mut Node, &NodeContext) -> NodeOutput,
    {
        let out = {
            let contexts: Vec<(u64, PolicyContext)> = self
                .rules
                .iter()
                .map(|(from, rules)| {
                    let ctx = PolicyContext {
                        rules,
                        registry: &self.registry,
                        group: &self.ledger.group,
                    };
                    (*from, ctx)
                })
                .collect();
            let policies: Vec<(u64, &dyn PolicyHook)> = contexts
                .iter()
                .map(|(from, c)| (*from, c as &dyn PolicyHook))
                .collect();
            let ctx = NodeContext {
                ledger: &self.ledger,
                policies: &policies,
                keys: &self.keys,
                now: self.now,
            };
            f(&mut self.nodes[id as usize], &ctx)
        };
        self.absorb(id, out);
    }

    fn absorb(&mut self, id: NodeId, out: NodeOutput) {
        self.stats.invalid_messages += out.invalid_messages;
        self.stats.blocks_committed += out.committed.len() as u64;
        self.stats.max_view = self.stats.max_view.max(self.nodes[id as usize].view);
        for (tx, reason) in out.rejected {
            self.rejections.push(RejectionLog {
                time: self.now,
                node: id,
                tx,
                reason,
            });
            self.rejected_by.entry(tx).or_default().insert(id, reason);
        }
        if let Some((at, token)) = out.timer {
            self.schedule(at, Event::Timer { node: id, token });
        }
        for (target, message) in out.sends {
            let recipients: Vec<NodeId> = match target {
                Target::To(r) => vec![r],
                Target::AllOthers => (0..self.cfg.nodes as NodeId).filter(|&r| r != id).collect(),
            };
            for to in recipients {
                self.stats.messages_sent += 1;
                *self
                    .stats
                    .by_variant
                    .entry(message.body.variant())
                    .or_default() += 1;
                let cut = self
                    .partitions
                    .iter()
                    .any(|p| p.separates(id, to, self.now));
                let lost = self.cfg.drop_probability > 0.0
                    && self.rng.gen_bool(self.cfg.drop_probability.min(1.0));
                if cut || lost {
                    self.stats.messages_dropped += 1;
                    continue;
                }
                let delay = self.delay();
                self.schedule(
                    self.now + delay,
                    Event::Deliver {
                        to,
                        message: message.clone(),
                    },
                );
            }
        }
    }

    fn resolve_clients(&mut self) {
        let quorum = self.cfg.f() + 1;
        for i in 0..self.clients.len() {
            if self.clients[i].outcome != TxOutcome::Pending {
                continue;
            }
            let id = self.clients[i].id;
            let holders: Vec<&Node> = self
                .nodes
                .iter()
                .filter(|n| n.state.applied.contains(&id))
                .collect();
            if holders.len() >= quorum {
                let height = holders
                    .iter()
                    .filter_map(|n| {
                        n.chain
                            .iter()
                            .find(|(b, _)| {
                                b.transactions
                                    .iter()
                                    .any(|t| t.id(&self.ledger.group) == id)
                            })
                            .map(|(b, _)| b.height)
                    })
                    .min()
                    .unwrap_or(0);
                self.clients[i].outcome = TxOutcome::Applied {
                    height,
                    at: self.now,
                };
                continue;
            }
            if let Some(by) = self.rejected_by.get(&id) {
                if by.len() >= quorum {
                    let mut counts: BTreeMap<RejectReason, usize> = BTreeMap::new();
                    for r in by.values() {
                        *counts.entry(*r).or_default() += 1;
                    }
                    let reason = counts
                        .into_iter()
                        .max_by_key(|(r, c)| (*c, std::cmp::Reverse(*r)))
                        .map(|(r, _)| r)
                        .expect("nonempty");
                    self.clients[i].outcome = TxOutcome::Rejected(reason);
                }
            }
        }
    }

    pub fn run_until(&mut self, t: u64) {
        while self
            .queue
            .first_key_value()
            .is_some_and(|((at, _), _)| *at <= t)
        {
            self.step();
        }
        self.now = self.now.max(t);
    }

    /// Runs until every submitted transaction is resolved or `deadline`
    /// passes. Returns whether everything resolved.
    pub fn run_until_resolved(&mut self, deadline: u64) -> bool {
        while !self.all_resolved() {
            match self.queue.first_key_value() {
                Some(((at, _), _)) if *at <= deadline => {
                    self.step();
                }
                _ => return false,
            }
        }
        true
    }

    /// Lets lagging live replicas catch up after the workload is done.
    pub fn settle(&mut self, budget: u64) {
        let end = self.now + budget;
        while self.now < end {
            let target = self.live_max_height();
            if self.live_nodes().all(|n| n.height() == target) {
                break;
            }
            if !self.step() {
                break;
            }
        }
    }

    fn live_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes
            .iter()
            .filter(|n| !self.is_crashed(n.id(), self.now) && !self.is_byzantine(n.id()))
    }

    fn live_max_height(&self) -> u64 {
        self.live_nodes().map(Node::height).max().unwrap_or(0)
    }

    /// Every pair of correct replicas agrees on each height both committed.
    pub fn check_safety(&self) -> Result<(), SafetyViolation> {
        let g = &self.ledger.group;
        let honest: Vec<&Node> = self
            .nodes
            .iter()
            .filter(|n| !self.is_byzantine(n.id()))
            .collect();
        let mut by_height: BTreeMap<u64, (NodeId, Digest)> = BTreeMap::new();
        for node in honest {
            for (block, _) in &node.chain {
                let d = block.digest(g);
                match by_height.get(&block.height) {
                    Some(&(a, other)) if other != d => {
                        return Err(SafetyViolation {
                            height: block.height,
                            a,
                            b: node.id(),
                        })
                    }
                    Some(_) => {}
                    None => {
                        by_height.insert(block.height, (node.id(), d));
                    }
                }
            }
        }
        Ok(())
    }

    /// State of the most advanced correct replica.
    pub fn canonical_state(&self) -> &LedgerState {
        &self
            .nodes
            .iter()
            .filter(|n| !self.is_byzantine(n.id()))
            .max_by_key(|n| (n.height(), std::cmp::Reverse(n.id())))
            .expect("at least one correct replica")
            .state
    }
}
