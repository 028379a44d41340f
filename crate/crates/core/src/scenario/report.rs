use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::run::RunResult;
use crate::observer::LinkAttackStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    /// TOML document with a fixed schema, see [`Report`].
    Structured,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self, ReportError> {
        match s {
            "text" => Ok(Format::Text),
            "structured" => Ok(Format::Structured),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("unknown report format `{0}` (expected `text` or `structured`)")]
    UnknownFormat(String),
    #[error("report does not fit the schema: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub name: String,
    pub mode: String,
    pub seed: u64,
    pub ledger_digest: String,
    pub height: u64,
    pub supply: u64,
    pub fees: u64,
    pub conservation_held: bool,
    /// `ok`, or the safety violation observed.
    pub safety: String,
    pub expectations_met: bool,
    pub consensus: ConsensusSection,
    #[serde(default)]
    pub steps: Vec<StepSection>,
    #[serde(default)]
    pub link_attacks: Vec<LinkAttackStats>,
    #[serde(default)]
    pub tax: Vec<TaxSection>,
    pub desiderata: Vec<DesiderataSection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusSection {
    pub nodes: usize,
    pub blocks_committed: u64,
    pub max_view: u64,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_dropped: u64,
    pub invalid_messages: u64,
    pub trace_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSection {
    pub index: usize,
    pub line: usize,
    pub action: String,
    pub outcome: String,
    pub expect: Option<String>,
    pub matched: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxSection {
    pub entity: String,
    pub total: u64,
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesiderataSection {
    pub property: String,
    pub rating: Option<String>,
    pub source: String,
}

impl From<&RunResult> for Report {
    fn from(r: &RunResult) -> Self {
        Report {
            name: r.name.clone(),
            mode: r.mode.to_string(),
            seed: r.seed,
            ledger_digest: hex::encode(r.ledger_digest),
            height: r.height,
            supply: r.supply,
            fees: r.fees,
            conservation_held: r.conservation_held,
            safety: r
                .safety
                .as_ref()
                .map_or_else(|| "ok".to_string(), |v| v.to_string()),
            expectations_met: r.expectations_met(),
            consensus: ConsensusSection {
                nodes: r.consensus.nodes,
                blocks_committed: r.consensus.blocks_committed,
                max_view: r.consensus.max_view,
                messages_sent: r.consensus.messages_sent,
                messages_delivered: r.consensus.messages_delivered,
                messages_dropped: r.consensus.messages_dropped,
                invalid_messages: r.consensus.invalid_messages,
                trace_digest: hex::encode(r.consensus.trace_digest),
            },
            steps: r
                .steps
                .iter()
                .map(|s| StepSection {
                    index: s.index,
                    line: s.line,
                    action: s.action.to_string(),
                    outcome: s.outcome.to_string(),
                    expect: s.expect.map(|e| e.to_string()),
                    matched: s.matched(),
                })
                .collect(),
            link_attacks: r.probes.link_attacks.clone(),
            tax: r
                .tax_reports
                .iter()
                .map(|t| TaxSection {
                    entity: t.entity.to_string(),
                    total: t.total,
                    items: t.items.len(),
                })
                .collect(),
            desiderata: r
                .desiderata
                .rows
                .iter()
                .map(|row| DesiderataSection {
                    property: row.desideratum.key().to_string(),
                    rating: row.rating.map(|x| x.as_str().to_string()),
                    source: row.provenance.as_str().to_string(),
                })
                .collect(),
        }
    }
}

pub fn emit_report(result: &RunResult, format: Format) -> String {
    match format {
        Format::Structured => {
            toml::to_string(&Report::from(result)).expect("report schema serializes")
        }
        Format::Text => text(result),
    }
}

pub fn parse_report(doc: &str) -> Result<Report, ReportError> {
    toml::from_str(doc).map_err(|e| ReportError::Schema(e.to_string()))
}

fn text(r: &RunResult) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "scenario {} (mode={}, seed={})", r.name, r.mode, r.seed);
    for s in &r.steps {
        let verdict = match s.matched() {
            Some(true) => "ok",
            Some(false) => "MISMATCH",
            None => "-",
        };
        let expect = s
            .expect
            .map(|e| format!(" expected {e}"))
            .unwrap_or_default();
        let _ = writeln!(
            w,
            "  [{:>3}] line {:<4} {:<20} {}{} {}",
            s.index, s.line, s.action, s.outcome, expect, verdict
        );
    }
    let c = &r.consensus;
    let _ = writeln!(
        w,
        "consensus: {} nodes, {} replica commits, max view {}, {} messages sent ({} dropped, {} invalid)",
        c.nodes, c.blocks_committed, c.max_view, c.messages_sent, c.messages_dropped, c.invalid_messages
    );
    let _ = writeln!(
        w,
        "ledger: height {}, supply {}, fees {}, digest {}",
        r.height,
        r.supply,
        r.fees,
        hex::encode(r.ledger_digest)
    );
    let _ = writeln!(
        w,
        "conservation: {}",
        if r.conservation_held {
            "held after every step"
        } else {
            "VIOLATED"
        }
    );
    let _ = writeln!(
        w,
        "safety: {}",
        r.safety
            .as_ref()
            .map_or("ok".to_string(), |v| v.to_string())
    );
    for t in &r.tax_reports {
        let _ = writeln!(
            w,
            "tax report {}: {} items, total {}",
            t.entity,
            t.items.len(),
            t.total
        );
    }
    for s in &r.probes.link_attacks {
        let _ = writeln!(
            w,
            "link attack {:<16} trials {:>6} accuracy {:.4} baseline {:.4} z {:+.2}",
            s.heuristic.as_str(),
            s.trials,
            s.accuracy,
            s.baseline,
            s.z
        );
    }
    let _ = write!(w, "{}", r.desiderata);
    let _ = writeln!(
        w,
        "result: {}",
        if r.expectations_met() {
            "all expectations met"
        } else {
            "expectation mismatch"
        }
    );
    out
}
