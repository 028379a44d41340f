//! Two-pool ledger: transparent institutional accounts and shielded outputs
//! held in private stores.

mod state;
mod tx;
mod wallet;

pub use state::{
    apply_block, apply_transaction, commitment_remainder, conservation_audit, validate_transaction,
    validate_with, verify_stateless, AccountEntry, Block, BlockError, LedgerConfig, LedgerState,
    OutputRecord, OutputSecret, PermitAll, PolicyHook, RejectReason,
};
pub use tx::{
    encode_credential, encode_range_proof, excess_challenge, sha256, short_hex, Encoder,
    ExcessSignature, ShieldedInput, ShieldedOutput, Transaction, TransparentInput,
    TransparentOutput, TxId, TxKind, TAG_EXCESS, TAG_TX,
};
pub use wallet::{
    collect_audit_secrets, BatchLeg, BuildError, Builder, CreatedOutput, DecoySampler, OwnedOutput,
    UnsignedTx, Wallet,
};

#[cfg(test)]
mod tests;
