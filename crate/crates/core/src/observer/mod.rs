//! What each party can see, regulator reports, cooperative disclosure,
//! linkability attacks and the desiderata matrix.

mod attack;
mod desiderata;
mod view;

pub use attack::{
    calibrate, guess, observations_from_chain, run_link_attack, synthetic_spends,
    truth_from_key_images, AttackThresholds, Heuristic, LinkAttackStats, RingObservation,
    SyntheticConfig,
};
pub use desiderata::{
    desiderata_report, DesiderataMatrix, DesiderataRow, Desideratum, Probes, Provenance, Rating,
};
pub use view::{
    candidate_slots, cooperative_disclosure, institution_share, tax_report, view, DisclosedInput,
    DisclosedOutput, Disclosure, DisclosureReport, LedgerView, Mismatch, ObserverClass,
    ObserverError, TaxItem, TaxReport, VisibleLeg, VisibleOutput, VisibleRecord, VisibleRing,
};
