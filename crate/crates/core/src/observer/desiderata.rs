use std::fmt;

use serde::{Deserialize, Serialize};

use super::attack::{AttackThresholds, LinkAttackStats};
use crate::policy::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Desideratum {
    RobustToCyberattacks,
    UsableWithoutRegistration,
    UnlinkableTransactions,
    ElectronicTransactions,
    SuitableForTaxation,
    CanBlockSomeIllicitUses,
    DenominatedInFiat,
}

impl Desideratum {
    pub const ALL: [Desideratum; 7] = [
        Desideratum::RobustToCyberattacks,
        Desideratum::UsableWithoutRegistration,
        Desideratum::UnlinkableTransactions,
        Desideratum::ElectronicTransactions,
        Desideratum::SuitableForTaxation,
        Desideratum::CanBlockSomeIllicitUses,
        Desideratum::DenominatedInFiat,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Desideratum::RobustToCyberattacks => "Robust to cyberattacks",
            Desideratum::UsableWithoutRegistration => "Usable without registration",
            Desideratum::UnlinkableTransactions => "Unlinkable transactions",
            Desideratum::ElectronicTransactions => "Electronic transactions",
            Desideratum::SuitableForTaxation => "Suitable for taxation",
            Desideratum::CanBlockSomeIllicitUses => "Can block some illicit uses",
            Desideratum::DenominatedInFiat => "Can be denominated in units of fiat currency",
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Desideratum::RobustToCyberattacks => "robust_to_cyberattacks",
            Desideratum::UsableWithoutRegistration => "usable_without_registration",
            Desideratum::UnlinkableTransactions => "unlinkable_transactions",
            Desideratum::ElectronicTransactions => "electronic_transactions",
            Desideratum::SuitableForTaxation => "suitable_for_taxation",
            Desideratum::CanBlockSomeIllicitUses => "can_block_some_illicit_uses",
            Desideratum::DenominatedInFiat => "denominated_in_fiat",
        }
    }

    pub fn parse_key(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.key() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rating {
    Full,
    Partial,
    None,
}

impl Rating {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rating::Full => "full",
            Rating::Partial => "partial",
            Rating::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Rating::Full, Rating::Partial, Rating::None]
            .into_iter()
            .find(|r| r.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Static,
    Measured,
    Unmeasured,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Static => "static",
            Provenance::Measured => "measured",
            Provenance::Unmeasured => "unmeasured",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Provenance::Static,
            Provenance::Measured,
            Provenance::Unmeasured,
        ]
        .into_iter()
        .find(|p| p.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesiderataRow {
    pub desideratum: Desideratum,
    /// `None` when the row could not be measured.
    pub rating: Option<Rating>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesiderataMatrix {
    pub mode: Mode,
    pub rows: Vec<DesiderataRow>,
}

impl DesiderataMatrix {
    pub fn rating(&self, d: Desideratum) -> Option<Rating> {
        self.rows
            .iter()
            .find(|r| r.desideratum == d)
            .and_then(|r| r.rating)
    }
}

/// Outcomes of live probes run during a scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Probes {
    /// Linkability heuristics run against the decoy sampler in use.
    pub link_attacks: Vec<LinkAttackStats>,
    /// Whether every completed payment to a business appeared in its tax
    /// report with the right amount.
    pub taxation_complete: Option<bool>,
    /// Whether a payment to a blacklisted party was stopped.
    pub blacklist_blocked: Option<bool>,
    /// Whether someone with neither an account nor a credential completed a
    /// payment.
    pub registration_free: Option<bool>,
}

impl Probes {
    pub fn is_empty(&self) -> bool {
        self.link_attacks.is_empty()
            && self.taxation_complete.is_none()
            && self.blacklist_blocked.is_none()
            && self.registration_free.is_none()
    }
}

fn measured(flag: Option<bool>) -> (Option<Rating>, Provenance) {
    match flag {
        Some(true) => (Some(Rating::Full), Provenance::Measured),
        Some(false) => (Some(Rating::None), Provenance::Measured),
        None => (None, Provenance::Unmeasured),
    }
}

/// Rates each desideratum for `mode`. Robustness, electronic use and fiat
/// denomination follow from the architecture; the rest come from probes.
pub fn desiderata_report(
    mode: Mode,
    probes: &Probes,
    thresholds: &AttackThresholds,
) -> DesiderataMatrix {
    let fixed = |r: Rating| (Some(r), Provenance::Static);
    let rows = Desideratum::ALL
        .into_iter()
        .map(|d| {
            let (rating, provenance) = match d {
                Desideratum::RobustToCyberattacks => fixed(Rating::None),
                Desideratum::ElectronicTransactions => fixed(Rating::Full),
                Desideratum::DenominatedInFiat => fixed(match mode {
                    Mode::Supported => Rating::None,
                    Mode::Mediated => Rating::Full,
                }),
                Desideratum::UsableWithoutRegistration => measured(probes.registration_free),
                Desideratum::SuitableForTaxation => measured(probes.taxation_complete),
                Desideratum::CanBlockSomeIllicitUses => measured(probes.blacklist_blocked),
                Desideratum::UnlinkableTransactions => {
                    if probes.link_attacks.is_empty() {
                        (None, Provenance::Unmeasured)
                    } else if probes
                        .link_attacks
                        .iter()
                        .all(|s| thresholds.is_calibrated(s))
                    {
                        (Some(Rating::Full), Provenance::Measured)
                    } else if probes.link_attacks.iter().any(|s| thresholds.is_broken(s)) {
                        (Some(Rating::None), Provenance::Measured)
                    } else {
                        (Some(Rating::Partial), Provenance::Measured)
                    }
                }
            };
            DesiderataRow {
                desideratum: d,
                rating,
                provenance,
            }
        })
        .collect();
    DesiderataMatrix { mode, rows }
}

impl fmt::Display for DesiderataMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Desiderata ({} mode)", self.mode)?;
        writeln!(f, "{:<46} {:<8} source", "property", "rating")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<46} {:<8} {}",
                r.desideratum.label(),
                r.rating.map_or("-", |x| x.as_str()),
                r.provenance.as_str()
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_probes_leave_measured_rows_open() {
        for mode in Mode::ALL {
            let m = desiderata_report(mode, &Probes::default(), &AttackThresholds::default());
            assert_eq!(m.rows.len(), 7);
            let open: Vec<_> = m
                .rows
                .iter()
                .filter(|r| r.provenance == Provenance::Unmeasured)
                .map(|r| r.desideratum)
                .collect();
            assert_eq!(
                open,
                vec![
                    Desideratum::UsableWithoutRegistration,
                    Desideratum::UnlinkableTransactions,
                    Desideratum::SuitableForTaxation,
                    Desideratum::CanBlockSomeIllicitUses,
                ]
            );
            assert!(open.iter().all(|d| m.rating(*d).is_none()));
        }
    }

    #[test]
    fn keys_round_trip() {
        for d in Desideratum::ALL {
            assert_eq!(Desideratum::parse_key(d.key()), Some(d));
        }
        for p in [
            Provenance::Static,
            Provenance::Measured,
            Provenance::Unmeasured,
        ] {
            assert_eq!(Provenance::parse(p.as_str()), Some(p));
        }
    }
}
