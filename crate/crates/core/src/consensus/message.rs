use std::collections::BTreeSet;

use crate::ledger::{sha256, Block, Encoder, Transaction};
use crate::primitives::{Group, Transcript};

pub type NodeId = u32;
pub type Digest = [u8; 32];

pub const TAG_MAC: &[u8] = b"pvx/mac";
pub const TAG_NODE_KEY: &[u8] = b"pvx/node-key";

/// Block together with the `2f` prepares that locked it in `view`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedCert {
    pub view: u64,
    pub block: Block,
    pub prepares: Vec<ConsensusMessage>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Request(Box<Transaction>),
    PrePrepare {
        view: u64,
        seq: u64,
        block: Block,
    },
    Prepare {
        view: u64,
        seq: u64,
        digest: Digest,
    },
    Commit {
        view: u64,
        seq: u64,
        digest: Digest,
    },
    ViewChange {
        new_view: u64,
        height: u64,
        prepared: Option<Box<PreparedCert>>,
    },
    NewView {
        view: u64,
        view_changes: Vec<ConsensusMessage>,
        proposal: Option<Block>,
    },
    /// Periodic height/view announcement used for catch-up.
    Status {
        view: u64,
        height: u64,
    },
    /// A committed block with the `2f+1` commits proving it.
    Sync {
        block: Block,
        certificate: Vec<ConsensusMessage>,
    },
}

impl Body {
    pub fn variant(&self) -> &'static str {
        match self {
            Body::Request(_) => "Request",
            Body::PrePrepare { .. } => "PrePrepare",
            Body::Prepare { .. } => "Prepare",
            Body::Commit { .. } => "Commit",
            Body::ViewChange { .. } => "ViewChange",
            Body::NewView { .. } => "NewView",
            Body::Status { .. } => "Status",
            Body::Sync { .. } => "Sync",
        }
    }
}

/// Authenticated message: `tag` is a MAC under the sender's node key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusMessage {
    pub sender: NodeId,
    pub body: Body,
    pub tag: Digest,
}

fn encode_block(e: &mut Encoder, g: &Group, b: &Block) {
    e.bytes(&b.digest(g));
}

fn encode_message(e: &mut Encoder, g: &Group, m: &ConsensusMessage) {
    e.u64(m.sender as u64);
    encode_body(e, g, &m.body);
    e.bytes(&m.tag);
}

fn encode_body(e: &mut Encoder, g: &Group, body: &Body) {
    e.str(body.variant());
    match body {
        Body::Request(tx) => {
            e.bytes(&tx.id(g));
        }
        Body::PrePrepare { view, seq, block } => {
            e.u64(*view).u64(*seq);
            encode_block(e, g, block);
        }
        Body::Prepare { view, seq, digest } | Body::Commit { view, seq, digest } => {
            e.u64(*view).u64(*seq).bytes(digest);
        }
        Body::ViewChange {
            new_view,
            height,
            prepared,
        } => {
            e.u64(*new_view).u64(*height);
            match prepared {
                None => e.count(0),
                Some(c) => {
                    e.count(1).u64(c.view);
                    encode_block(e, g, &c.block);
                    e.count(c.prepares.len());
                    for p in &c.prepares {
                        encode_message(e, g, p);
                    }
                    e
                }
            };
        }
        Body::NewView {
            view,
            view_changes,
            proposal,
        } => {
            e.u64(*view).count(view_changes.len());
            for m in view_changes {
                encode_message(e, g, m);
            }
            match proposal {
                None => e.count(0),
                Some(b) => {
                    e.count(1);
                    encode_block(e, g, b);
                    e
                }
            };
        }
        Body::Status { view, height } => {
            e.u64(*view).u64(*height);
        }
        Body::Sync { block, certificate } => {
            encode_block(e, g, block);
            e.count(certificate.len());
            for m in certificate {
                encode_message(e, g, m);
            }
        }
    }
}

/// Byte encoding of a message body, as covered by its MAC.
pub fn body_bytes(g: &Group, body: &Body) -> Vec<u8> {
    let mut e = Encoder::default();
    encode_body(&mut e, g, body);
    e.buf
}

/// Simulation-level symmetric keys, one per node. Every node can check every
/// tag, which stands in for pairwise MACs or signatures.
#[derive(Debug, Clone)]
pub struct NodeKeys {
    keys: Vec<Digest>,
}

impl NodeKeys {
    pub fn derive(seed: u64, n: usize) -> Self {
        let keys = (0..n as u64)
            .map(|i| {
                let mut t = Transcript::new(TAG_NODE_KEY);
                t.append_u64(seed).append_u64(i);
                t.digest()
            })
            .collect();
        NodeKeys { keys }
    }

    fn mac(&self, g: &Group, sender: NodeId, body: &Body) -> Option<Digest> {
        let key = self.keys.get(sender as usize)?;
        let mut t = Transcript::new(TAG_MAC);
        t.append(key).append(&body_bytes(g, body));
        Some(t.digest())
    }

    pub fn sign(&self, g: &Group, sender: NodeId, body: Body) -> ConsensusMessage {
        let tag = self.mac(g, sender, &body).expect("known sender");
        ConsensusMessage { sender, body, tag }
    }

    pub fn verify(&self, g: &Group, m: &ConsensusMessage) -> bool {
        self.mac(g, m.sender, &m.body) == Some(m.tag)
    }
}

/// `2f+1` authenticated commits from distinct senders for `block`.
pub fn valid_commit_certificate(
    g: &Group,
    keys: &NodeKeys,
    f: usize,
    block: &Block,
    cert: &[ConsensusMessage],
) -> bool {
    let digest = block.digest(g);
    let mut senders = BTreeSet::new();
    for m in cert {
        match &m.body {
            Body::Commit { seq, digest: d, .. }
                if *seq == block.height && *d == digest && keys.verify(g, m) =>
            {
                senders.insert(m.sender);
            }
            _ => return false,
        }
    }
    senders.len() > 2 * f
}

/// `2f` authenticated prepares from distinct non-leader replicas.
pub fn valid_prepared_cert(
    g: &Group,
    keys: &NodeKeys,
    f: usize,
    leader: NodeId,
    cert: &PreparedCert,
) -> bool {
    let digest = cert.block.digest(g);
    let mut senders = BTreeSet::new();
    for m in &cert.prepares {
        match &m.body {
            Body::Prepare {
                view,
                seq,
                digest: d,
            } if *view == cert.view
                && *seq == cert.block.height
                && *d == digest
                && m.sender != leader
                && keys.verify(g, m) =>
            {
                senders.insert(m.sender);
            }
            _ => return false,
        }
    }
    senders.len() >= 2 * f
}

pub fn message_digest(g: &Group, m: &ConsensusMessage) -> Digest {
    let mut e = Encoder::default();
    encode_message(&mut e, g, m);
    sha256(&e.buf)
}
