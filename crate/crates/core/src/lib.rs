//! Deterministic simulator for two hybrid private-payment architectures:
//! institutionally supported privacy-enabling cryptocurrency and
//! institutionally mediated private value exchange.

pub mod consensus;
pub mod entityreg;
pub mod ledger;
pub mod observer;
pub mod policy;
pub mod primitives;
pub mod scenario;
