//! Byzantine-fault-tolerant replication of the ledger among institutional
//! nodes, driven by a deterministic network simulator.

mod message;
mod node;
mod sim;

pub use message::{
    body_bytes, message_digest, valid_commit_certificate, valid_prepared_cert, Body,
    ConsensusMessage, Digest, NodeId, NodeKeys, PreparedCert, TAG_MAC, TAG_NODE_KEY,
};
pub use node::{ConfigError, Node, NodeConfig, NodeContext, NodeInput, NodeOutput, Target};
pub use sim::{
    Fault, Partition, RejectionLog, SafetyViolation, SimConfig, SimError, SimStats, TxOutcome,
    World,
};
