use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::message::{
    valid_commit_certificate, valid_prepared_cert, Body, ConsensusMessage, Digest, NodeId,
    NodeKeys, PreparedCert,
};
use crate::entityreg::EntityId;
use crate::ledger::{
    apply_transaction, Block, LedgerConfig, LedgerState, PermitAll, PolicyHook, RejectReason,
    Transaction, TxId,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeConfig {
    pub id: NodeId,
    pub institution: EntityId,
    pub replicas: Vec<NodeId>,
    pub f: usize,
    /// Microseconds before a stalled node asks for a view change.
    pub base_timeout: u64,
    pub backoff: u64,
    /// Retransmission and status period, microseconds.
    pub tick: u64,
    pub max_block_txs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{n} replicas cannot tolerate f={f}: need n >= 3f+1")]
    QuorumBound { n: usize, f: usize },
    #[error("node {0} is not in its replica set")]
    NotAReplica(NodeId),
    #[error("replica ids must be 0..n in order")]
    ReplicaIds,
}

impl NodeConfig {
    pub fn check(&self) -> Result<(), ConfigError> {
        let n = self.replicas.len();
        if n < 3 * self.f + 1 {
            return Err(ConfigError::QuorumBound { n, f: self.f });
        }
        if !self.replicas.contains(&self.id) {
            return Err(ConfigError::NotAReplica(self.id));
        }
        if self
            .replicas
            .iter()
            .enumerate()
            .any(|(i, &r)| r != i as NodeId)
        {
            return Err(ConfigError::ReplicaIds);
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.replicas.len()
    }

    pub fn leader(&self, view: u64) -> NodeId {
        self.replicas[(view % self.n() as u64) as usize]
    }
}

/// Where an outbound message goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    To(NodeId),
    AllOthers,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeInput {
    Message(ConsensusMessage),
    Timer(u64),
    Tick,
}

#[derive(Debug, Default)]
pub struct NodeOutput {
    pub sends: Vec<(Target, ConsensusMessage)>,
    pub committed: Vec<Block>,
    pub rejected: Vec<(TxId, RejectReason)>,
    /// Absolute time and token of a requested timer.
    pub timer: Option<(u64, u64)>,
    pub invalid_messages: u64,
}

/// Read-only context shared by all nodes of a world.
pub struct NodeContext<'a> {
    pub ledger: &'a LedgerConfig,
    /// Policies keyed by the first block height each governs, ascending.
    /// Heights below the first entry admit everything.
    pub policies: &'a [(u64, &'a dyn PolicyHook)],
    pub keys: &'a NodeKeys,
    pub now: u64,
}

impl NodeContext<'_> {
    pub fn policy_at(&self, height: u64) -> &dyn PolicyHook {
        self.policies
            .iter()
            .rev()
            .find(|(from, _)| *from <= height)
            .map_or(&PermitAll, |(_, p)| *p)
    }
}

#[derive(Debug, Clone, Default)]
struct Slot {
    /// Accepted pre-prepare for the current view and next height.
    preprepare: Option<(u64, Block, Digest)>,
    sent_commit: bool,
}

type Votes = BTreeMap<(u64, u64, Digest), BTreeMap<NodeId, ConsensusMessage>>;

#[derive(Debug, Clone)]
pub struct Node {
    pub cfg: NodeConfig,
    pub view: u64,
    /// Target view while a view change is in progress.
    pub changing_to: Option<u64>,
    pub state: LedgerState,
    pub chain: Vec<(Block, Vec<ConsensusMessage>)>,
    pool: Vec<Transaction>,
    pool_ids: BTreeSet<TxId>,
    slot: Slot,
    known_blocks: BTreeMap<Digest, Block>,
    prepares: Votes,
    commits: Votes,
    prepared: Option<PreparedCert>,
    view_changes: BTreeMap<u64, BTreeMap<NodeId, ConsensusMessage>>,
    last_new_view: Option<ConsensusMessage>,
    awaiting_sync_for_view: Option<u64>,
    future_proposal: Option<(u64, Block)>,
    deadline: Option<u64>,
    timer_token: u64,
    backoff_level: u32,
    verified: BTreeSet<TxId>,
    /// Scripted Byzantine behavior: equivocate when proposing this height.
    pub equivocate_at: Option<u64>,
}

impl Node {
    pub fn new(cfg: NodeConfig, genesis: LedgerState) -> Self {
        Node {
            cfg,
            view: 0,
            changing_to: None,
            state: genesis,
            chain: Vec::new(),
            pool: Vec::new(),
            pool_ids: BTreeSet::new(),
            slot: Slot::default(),
            known_blocks: BTreeMap::new(),
            prepares: BTreeMap::new(),
            commits: BTreeMap::new(),
            prepared: None,
            view_changes: BTreeMap::new(),
            last_new_view: None,
            awaiting_sync_for_view: None,
            future_proposal: None,
            deadline: None,
            timer_token: 0,
            backoff_level: 0,
            verified: BTreeSet::new(),
            equivocate_at: None,
        }
    }

    pub fn height(&self) -> u64 {
        self.chain.len() as u64
    }

    pub fn id(&self) -> NodeId {
        self.cfg.id
    }

    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    fn tip(&self, ctx: &NodeContext) -> Digest {
        self.chain
            .last()
            .map(|(b, _)| b.digest(&ctx.ledger.group))
            .unwrap_or([0; 32])
    }

    fn is_leader(&self) -> bool {
        self.changing_to.is_none() && self.cfg.leader(self.view) == self.cfg.id
    }

    fn sign(&self, ctx: &NodeContext, body: Body) -> ConsensusMessage {
        ctx.keys.sign(&ctx.ledger.group, self.cfg.id, body)
    }

    fn broadcast(&self, ctx: &NodeContext, out: &mut NodeOutput, body: Body) -> ConsensusMessage {
        let m = self.sign(ctx, body);
        out.sends.push((Target::AllOthers, m.clone()));
        m
    }

    fn send(&self, ctx: &NodeContext, out: &mut NodeOutput, to: NodeId, body: Body) {
        let m = self.sign(ctx, body);
        out.sends.push((Target::To(to), m));
    }

    fn timeout(&self) -> u64 {
        self.cfg.base_timeout * self.cfg.backoff.pow(self.backoff_level.min(6))
    }

    /// Full validation the first time a transaction is seen, then only the
    /// state-dependent clauses, under the policy of the block that would
    /// follow `state`.
    fn validate(
        &mut self,
        ctx: &NodeContext,
        state: &LedgerState,
        tx: &Transaction,
    ) -> Result<(), RejectReason> {
        let id = tx.id(&ctx.ledger.group);
        let done = self.verified.contains(&id);
        let policy = ctx.policy_at(state.height + 1);
        let r = crate::ledger::validate_with(ctx.ledger, state, tx, policy, done);
        if r.is_ok() {
            self.verified.insert(id);
        }
        r
    }

    fn block_applies(&mut self, ctx: &NodeContext, block: &Block) -> Option<LedgerState> {
        let mut next = self.state.clone();
        for tx in &block.transactions {
            self.validate(ctx, &next, tx).ok()?;
            apply_transaction(ctx.ledger, &mut next, tx);
        }
        next.height = block.height;
        Some(next)
    }

    pub fn handle(&mut self, ctx: &NodeContext, input: NodeInput) -> NodeOutput {
        let mut out = NodeOutput::default();
        match input {
            NodeInput::Message(m) => {
                if m.sender as usize >= self.cfg.n()
                    || m.sender == self.cfg.id
                    || !ctx.keys.verify(&ctx.ledger.group, &m)
                {
                    out.invalid_messages += 1;
                } else {
                    self.on_message(ctx, &mut out, m);
                }
            }
            NodeInput::Timer(token) => {
                if token == self.timer_token && self.deadline.is_some() {
                    self.deadline = None;
                    let target = self.changing_to.unwrap_or(self.view) + 1;
                    self.backoff_level += 1;
                    self.start_view_change(ctx, &mut out, target);
                }
            }
            NodeInput::Tick => self.on_tick(ctx, &mut out),
        }
        self.try_propose(ctx, &mut out);
        self.arm_timer(ctx, &mut out);
        out
    }

    /// Client entry point: admit a transaction as if received directly.
    pub fn submit(&mut self, ctx: &NodeContext, tx: Transaction) -> NodeOutput {
        let mut out = NodeOutput::default();
        self.admit(ctx, &mut out, tx);
        self.try_propose(ctx, &mut out);
        self.arm_timer(ctx, &mut out);
        out
    }

    fn has_work(&self) -> bool {
        !self.pool.is_empty() || self.changing_to.is_some() || self.slot.preprepare.is_some()
    }

    fn arm_timer(&mut self, ctx: &NodeContext, out: &mut NodeOutput) {
        if !self.has_work() {
            self.deadline = None;
            return;
        }
        if self.deadline.is_none() {
            let at = ctx.now + self.timeout();
            self.timer_token += 1;
            self.deadline = Some(at);
            out.timer = Some((at, self.timer_token));
        }
    }

    fn admit(&mut self, ctx: &NodeContext, out: &mut NodeOutput, tx: Transaction) {
        let id = tx.id(&ctx.ledger.group);
        if self.pool_ids.contains(&id) || self.state.applied.contains(&id) {
            return;
        }
        let state = self.state.clone();
        match self.validate(ctx, &state, &tx) {
            Err(reason) => out.rejected.push((id, reason)),
            Ok(()) => {
                let leader = self.cfg.leader(self.view);
                if leader != self.cfg.id {
                    self.send(ctx, out, leader, Body::Request(Box::new(tx.clone())));
                }
                self.pool_ids.insert(id);
                self.pool.push(tx);
            }
        }
    }

    fn on_message(&mut self, ctx: &NodeContext, out: &mut NodeOutput, m: ConsensusMessage) {
        let g = &ctx.ledger.group;
        let h = self.height();
        let sender = m.sender;
        match m.body.clone() {
            Body::Request(tx) => self.admit(ctx, out, *tx),
            Body::PrePrepare { view, seq, block } => {
                if seq > h + 1 {
                    self.send(
                        ctx,
                        out,
                        sender,
                        Body::Status {
                            view: self.view,
                            height: h,
                        },
                    );
                } else {
                    self.accept_preprepare(ctx, out, sender, view, seq, block);
                }
            }
            Body::Prepare { view, seq, digest } => {
                if seq > h {
                    self.prepares
                        .entry((view, seq, digest))
                        .or_default()
                        .insert(sender, m);
                    self.check_progress(ctx, out);
                }
            }
            Body::Commit { view, seq, digest } => {
                if seq > h {
                    self.commits
                        .entry((view, seq, digest))
                        .or_default()
                        .insert(sender, m);
                    if seq > h + 1 {
                        self.send(
                            ctx,
                            out,
                            sender,
                            Body::Status {
                                view: self.view,
                                height: h,
                            },
                        );
                    }
                    self.check_progress(ctx, out);
                }
            }
            Body::ViewChange {
                new_view,
                height,
                prepared,
            } => {
                if let Some(cert) = &prepared {
                    if !valid_prepared_cert(
                        g,
                        ctx.keys,
                        self.cfg.f,
                        self.cfg.leader(cert.view),
                        cert,
                    ) {
                        out.invalid_messages += 1;
                        return;
                    }
                }
                if height < h {
                    self.send_sync(ctx, out, sender, height);
                }
                if new_view <= self.view {
                    return;
                }
                self.view_changes
                    .entry(new_view)
                    .or_default()
                    .insert(sender, m);
                self.maybe_join_view_change(ctx, out);
                self.try_new_view(ctx, out, new_view);
            }
            Body::NewView {
                view,
                view_changes,
                proposal,
            } => self.on_new_view(ctx, out, m, view, view_changes, proposal),
            Body::Status { view, height } => {
                if height < h {
                    self.send_sync(ctx, out, sender, height);
                }
                if view < self.view && self.changing_to.is_none() {
                    if let Some(nv) = &self.last_new_view {
                        out.sends.push((Target::To(sender), nv.clone()));
                    }
                }
            }
            Body::Sync { block, certificate } => {
                if block.height == h + 1
                    && block.parent == self.tip(ctx)
                    && valid_commit_certificate(g, ctx.keys, self.cfg.f, &block, &certificate)
                {
                    self.commit_block(ctx, out, block, certificate);
                }
            }
        }
    }

    fn send_sync(&self, ctx: &NodeContext, out: &mut NodeOutput, to: NodeId, their_height: u64) {
        let last = self.height().min(their_height + 8);
        for height in their_height + 1..=last {
            let (block, cert) = &self.chain[(height - 1) as usize];
            self.send(
                ctx,
                out,
                to,
                Body::Sync {
                    block: block.clone(),
                    certificate: cert.clone(),
                },
            );
        }
    }

    fn accept_preprepare(
        &mut self,
        ctx: &NodeContext,
        out: &mut NodeOutput,
        sender: NodeId,
        view: u64,
        seq: u64,
        block: Block,
    ) {
        let g = &ctx.ledger.group;
        if view != self.view
            || self.changing_to.is_some()
            || sender != self.cfg.leader(view)
            || seq != self.height() + 1
            || block.height != seq
            || block.parent != self.tip(ctx)
            || self.slot.preprepare.is_some()
        {
            return;
        }
        if self.block_applies(ctx, &block).is_none() {
            out.invalid_messages += 1;
            return;
        }
        let digest = block.digest(g);
        self.known_blocks.insert(digest, block.clone());
        self.slot.preprepare = Some((view, block, digest));
        if self.cfg.leader(view) != self.cfg.id {
            let m = self.broadcast(ctx, out, Body::Prepare { view, seq, digest });
            self.prepares
                .entry((view, seq, digest))
                .or_default()
                .insert(self.cfg.id, m);
        }
        self.check_progress(ctx, out);
    }

    fn check_progress(&mut self, ctx: &NodeContext, out: &mut NodeOutput) {
        let seq = self.height() + 1;
        let quorum = 2 * self.cfg.f + 1;
        if let Some((view, block, digest)) = self.slot.preprepare.clone() {
            let leader = self.cfg.leader(view);
            let votes: Vec<ConsensusMessage> = self
                .prepares
                .get(&(view, seq, digest))
                .map(|m| {
                    m.iter()
                        .filter(|(s, _)| **s != leader)
                        .map(|(_, v)| v.clone())
                        .collect()
                })
                .unwrap_or_default();
            if votes.len() >= 2 * self.cfg.f && !self.slot.sent_commit {
                self.slot.sent_commit = true;
                let better = self.prepared.as_ref().is_none_or(|p| p.view <= view);
                if better {
                    self.prepared = Some(PreparedCert {
                        view,
                        block,
                        prepares: votes.into_iter().take(2 * self.cfg.f).collect(),
                    });
                }
                let m = self.broadcast(ctx, out, Body::Commit { view, seq, digest });
                self.commits
                    .entry((view, seq, digest))
                    .or_default()
                    .insert(self.cfg.id, m);
            }
        }
        let ready = self
            .commits
            .iter()
            .filter(|((_, s, d), votes)| {
                *s == seq && votes.len() >= quorum && self.known_blocks.contains_key(d)
            })
            .map(|((_, _, d), votes)| (*d, votes.values().take(quorum).cloned().collect()))
            .next();
        if let Some((digest, cert)) = ready {
            let block = self.known_blocks[&digest].clone();
            self.commit_block(ctx, out, block, cert);
        }
    }

    fn commit_block(
        &mut self,
        ctx: &NodeContext,
        out: &mut NodeOutput,
        block: Block,
        cert: Vec<ConsensusMessage>,
    ) {
        let Some(next) = self.block_applies(ctx, &block) else {
            // a quorum-certified block that does not apply means the
            // replicated state has diverged; refuse it and count it
            out.invalid_messages += 1;
            return;
        };
        self.state = next;
        let g = &ctx.ledger.group;
        let ids: BTreeSet<TxId> = block.transactions.iter().map(|t| t.id(g)).collect();
        self.chain.push((block.clone(), cert));
        out.committed.push(block);
        let h = self.height();
        self.prepares.retain(|(_, s, _), _| *s > h);
        self.commits.retain(|(_, s, _), _| *s > h);
        self.known_blocks.clear();
        self.slot = Slot::default();
        if self.prepared.as_ref().is_some_and(|p| p.block.height <= h) {
            self.prepared = None;
        }
        self.backoff_level = 0;
        self.deadline = None;
        // drop what was committed and anything the new state invalidates
        let pool = std::mem::take(&mut self.pool);
        self.pool_ids.clear();
        let state = self.state.clone();
        for tx in pool {
            let id = tx.id(g);
            if ids.contains(&id) {
                continue;
            }
            match self.validate(ctx, &state, &tx) {
                Ok(()) => {
                    self.pool_ids.insert(id);
                    self.pool.push(tx);
                }
                Err(r) => out.rejected.push((id, r)),
            }
        }
        if let Some(v) = self.awaiting_sync_for_view {
            self.try_new_view(ctx, out, v);
        }
        if let Some((view, b)) = self.future_proposal.clone() {
            if b.height == self.height() + 1 {
                self.future_proposal = None;
                let leader = self.cfg.leader(view);
                self.accept_preprepare(ctx, out, leader, view, b.height, b);
            } else if b.height <= self.height() {
                self.future_proposal = None;
            }
        }
    }

    fn build_block(&mut self, ctx: &NodeContext) -> (Block, Vec<(TxId, RejectReason)>) {
        let g = &ctx.ledger.group;
        let mut next = self.state.clone();
        let mut txs = Vec::new();
        let mut rejected = Vec::new();
        let pool = std::mem::take(&mut self.pool);
        for tx in pool {
            if txs.len() >= self.cfg.max_block_txs {
                self.pool.push(tx);
                continue;
            }
            match self.validate(ctx, &next, &tx) {
                Ok(()) => {
                    apply_transaction(ctx.ledger, &mut next, &tx);
                    txs.push(tx.clone());
                    self.pool.push(tx);
                }
                Err(r) => {
                    let id = tx.id(g);
                    self.pool_ids.remove(&id);
                    rejected.push((id, r));
                }
            }
        }
        let block = Block {
            height: self.height() + 1,
            parent: self.tip(ctx),
            proposer: self.cfg.id,
            transactions: txs,
        };
        (block, rejected)
    }

    fn try_propose(&mut self, ctx: &NodeContext, out: &mut NodeOutput) {
        if !self.is_leader() || self.slot.preprepare.is_some() || self.pool.is_empty() {
            return;
        }
        let (block, rejected) = self.build_block(ctx);
        out.rejected.extend(rejected);
        if block.transactions.is_empty() {
            return;
        }
        self.propose(ctx, out, block);
    }

    fn propose(&mut self, ctx: &NodeContext, out: &mut NodeOutput, block: Block) {
        let view = self.view;
        let seq = block.height;
        if self.equivocate_at == Some(seq) {
            let mut other = block.clone();
            other.transactions.reverse();
            if other.transactions == block.transactions {
                other.transactions.clear();
            }
            let others: Vec<NodeId> = self
                .cfg
                .replicas
                .iter()
                .copied()
                .filter(|&r| r != self.cfg.id)
                .collect();
            let half = others.len().div_ceil(2);
            for (i, r) in others.into_iter().enumerate() {
                let b = if i < half {
                    block.clone()
                } else {
                    other.clone()
                };
                self.send(
                    ctx,
                    out,
                    r,
                    Body::PrePrepare {
                        view,
                        seq,
                        block: b,
                    },
                );
            }
        } else {
            self.broadcast(
                ctx,
                out,
                Body::PrePrepare {
                    view,
                    seq,
                    block: block.clone(),
                },
            );
        }
        let me = self.cfg.id;
        self.accept_preprepare(ctx, out, me, view, seq, block);
    }

    fn start_view_change(&mut self, ctx: &NodeContext, out: &mut NodeOutput, target: u64) {
        if target <= self.view || self.changing_to.is_some_and(|t| t >= target) {
            return;
        }
        self.changing_to = Some(target);
        self.slot = Slot::default();
        let h = self.height();
        let prepared = self
            .prepared
            .clone()
            .filter(|p| p.block.height == h + 1)
            .map(Box::new);
        let m = self.broadcast(
            ctx,
            out,
            Body::ViewChange {
                new_view: target,
                height: h,
                prepared,
            },
        );
        self.view_changes
            .entry(target)
            .or_default()
            .insert(self.cfg.id, m);
        self.deadline = None;
        self.try_new_view(ctx, out, target);
    }

    /// Joins the smallest higher view once `f+1` peers ask for views above
    /// ours.
    fn maybe_join_view_change(&mut self, ctx: &NodeContext, out: &mut NodeOutput) {
        let current = self.changing_to.unwrap_or(self.view);
        let mut senders = BTreeSet::new();
        let mut smallest = None;
        for (&v, msgs) in self.view_changes.range(current + 1..) {
            for &s in msgs.keys() {
                if s != self.cfg.id {
                    senders.insert(s);
                }
            }
            smallest.get_or_insert(v);
        }
        if senders.len() > self.cfg.f {
            if let Some(v) = smallest {
                self.start_view_change(ctx, out, v);
            }
        }
    }

    /// Block from the highest-view prepared certificate at `height`, which a
    /// new leader must re-propose.
    fn locked_block(vcs: &[ConsensusMessage], height: u64) -> Option<Block> {
        vcs.iter()
            .filter_map(|m| match &m.body {
                Body::ViewChange {
                    prepared: Some(c), ..
                } if c.block.height == height => Some((c.view, &c.block)),
                _ => None,
            })
            .max_by_key(|(v, _)| *v)
            .map(|(_, b)| b.clone())
    }

    fn try_new_view(&mut self, ctx: &NodeContext, out: &mut NodeOutput, view: u64) {
        if self.cfg.leader(view) != self.cfg.id
            || self.changing_to != Some(view)
            || self.view >= view
        {
            return;
        }
        let Some(msgs) = self.view_changes.get(&view) else {
            return;
        };
        if msgs.len() < 2 * self.cfg.f + 1 {
            return;
        }
        let vcs: Vec<ConsensusMessage> = msgs.values().cloned().collect();
        let base = vcs
            .iter()
            .filter_map(|m| match m.body {
                Body::ViewChange { height, .. } => Some(height),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        if self.height() < base {
            self.awaiting_sync_for_view = Some(view);
            if let Some(ahead) = vcs
                .iter()
                .find(|m| matches!(m.body, Body::ViewChange { height, .. } if height == base))
            {
                let to = ahead.sender;
                self.send(
                    ctx,
                    out,
                    to,
                    Body::Status {
                        view: self.view,
                        height: self.height(),
                    },
                );
            }
            return;
        }
        self.awaiting_sync_for_view = None;
        let next = self.height() + 1;
        let proposal = Self::locked_block(&vcs, next);
        let nv = self.broadcast(
            ctx,
            out,
            Body::NewView {
                view,
                view_changes: vcs,
                proposal: proposal.clone(),
            },
        );
        self.enter_view(view, nv);
        if let Some(b) = proposal {
            let me = self.cfg.id;
            self.accept_preprepare(ctx, out, me, view, next, b.clone());
            if self.slot.preprepare.is_some() {
                self.broadcast(
                    ctx,
                    out,
                    Body::PrePrepare {
                        view,
                        seq: next,
                        block: b,
                    },
                );
            }
        }
    }

    fn enter_view(&mut self, view: u64, new_view: ConsensusMessage) {
        self.view = view;
        self.changing_to = None;
        self.slot = Slot::default();
        self.deadline = None;
        self.last_new_view = Some(new_view);
        self.view_changes.retain(|&v, _| v > view);
    }

    fn on_new_view(
        &mut self,
        ctx: &NodeContext,
        out: &mut NodeOutput,
        m: ConsensusMessage,
        view: u64,
        vcs: Vec<ConsensusMessage>,
        proposal: Option<Block>,
    ) {
        let g = &ctx.ledger.group;
        if view < self.view
            || (view == self.view && self.changing_to.is_none())
            || m.sender != self.cfg.leader(view)
        {
            return;
        }
        let mut senders = BTreeSet::new();
        let mut base = 0;
        for vc in &vcs {
            match &vc.body {
                Body::ViewChange {
                    new_view,
                    height,
                    prepared,
                } if *new_view == view && ctx.keys.verify(g, vc) => {
                    if let Some(c) = prepared {
                        if !valid_prepared_cert(g, ctx.keys, self.cfg.f, self.cfg.leader(c.view), c)
                        {
                            out.invalid_messages += 1;
                            return;
                        }
                    }
                    senders.insert(vc.sender);
                    base = base.max(*height);
                }
                _ => {
                    out.invalid_messages += 1;
                    return;
                }
            }
        }
        if senders.len() < 2 * self.cfg.f + 1 {
            out.invalid_messages += 1;
            return;
        }
        if proposal.as_ref().is_some_and(|b| b.height != base + 1) {
            out.invalid_messages += 1;
            return;
        }
        let locked = Self::locked_block(&vcs, base + 1).map(|b| b.digest(g));
        if proposal.as_ref().map(|b| b.digest(g)) != locked {
            out.invalid_messages += 1;
            return;
        }
        self.enter_view(view, m.clone());
        if let Some(b) = proposal {
            let h = self.height();
            if b.height == h + 1 {
                self.accept_preprepare(ctx, out, m.sender, view, b.height, b);
            } else if b.height > h + 1 {
                self.future_proposal = Some((view, b));
                self.send(ctx, out, m.sender, Body::Status { view, height: h });
            }
        }
    }

    fn on_tick(&mut self, ctx: &NodeContext, out: &mut NodeOutput) {
        let h = self.height();
        self.broadcast(
            ctx,
            out,
            Body::Status {
                view: self.view,
                height: h,
            },
        );
        if let Some(target) = self.changing_to {
            if let Some(m) = self
                .view_changes
                .get(&target)
                .and_then(|v| v.get(&self.cfg.id))
            {
                out.sends.push((Target::AllOthers, m.clone()));
            }
            return;
        }
        let Some((view, block, digest)) = self.slot.preprepare.clone() else {
            return;
        };
        let seq = h + 1;
        if self.cfg.leader(view) == self.cfg.id {
            if let Some(nv) = self.last_new_view.clone().filter(|_| view > 0) {
                out.sends.push((Target::AllOthers, nv));
            }
            if self.equivocate_at != Some(seq) {
                self.broadcast(ctx, out, Body::PrePrepare { view, seq, block });
            }
        }
        for votes in [&self.prepares, &self.commits] {
            if let Some(m) = votes
                .get(&(view, seq, digest))
                .and_then(|v| v.get(&self.cfg.id))
            {
                out.sends.push((Target::AllOthers, m.clone()));
            }
        }
    }
}
