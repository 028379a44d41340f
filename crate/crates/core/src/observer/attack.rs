//! Ring-membership deanonymization heuristics and their calibration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ledger::{sha256, Block, DecoySampler};
use crate::primitives::Group;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heuristic {
    /// Guess the most recently created ring member.
    NewestMember,
    /// Guess a ring member uniformly at random.
    UniformGuess,
    /// Remove members known to be spent elsewhere, then guess uniformly
    /// among the rest.
    KeyImageGraph,
}

impl Heuristic {
    pub const ALL: [Heuristic; 3] = [
        Heuristic::NewestMember,
        Heuristic::UniformGuess,
        Heuristic::KeyImageGraph,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Heuristic::NewestMember => "newest-member",
            Heuristic::UniformGuess => "uniform-guess",
            Heuristic::KeyImageGraph => "key-image-graph",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|h| h.as_str() == s)
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a public observer learns from one shielded input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingObservation {
    /// Global output indices, increasing.
    pub ring: Vec<u64>,
    /// Opaque tag derived from the key image.
    pub key_image: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkAttackStats {
    pub heuristic: Heuristic,
    pub trials: u64,
    pub correct: u64,
    pub accuracy: f64,
    pub baseline: f64,
    pub z: f64,
}

impl LinkAttackStats {
    fn new(heuristic: Heuristic, trials: u64, correct: u64, baseline: f64) -> Self {
        let accuracy = if trials == 0 {
            0.0
        } else {
            correct as f64 / trials as f64
        };
        let var = trials as f64 * baseline * (1.0 - baseline);
        let z = if var > 0.0 {
            (correct as f64 - trials as f64 * baseline) / var.sqrt()
        } else {
            0.0
        };
        LinkAttackStats {
            heuristic,
            trials,
            correct,
            accuracy,
            baseline,
            z,
        }
    }
}

/// Decision thresholds for the two-sided binomial z-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackThresholds {
    /// `|z|` at or below this counts as indistinguishable from the baseline.
    pub calibrated: f64,
    /// `z` above this counts as a working attack.
    pub broken: f64,
}

impl Default for AttackThresholds {
    fn default() -> Self {
        AttackThresholds {
            calibrated: 3.0,
            broken: 5.0,
        }
    }
}

impl AttackThresholds {
    pub fn is_calibrated(&self, s: &LinkAttackStats) -> bool {
        s.z.abs() <= self.calibrated
    }

    pub fn is_broken(&self, s: &LinkAttackStats) -> bool {
        s.z > self.broken
    }
}

/// Guesses the true member of each observation. Returns one position per
/// observation.
pub fn guess(heuristic: Heuristic, observations: &[RingObservation], seed: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    match heuristic {
        Heuristic::NewestMember => observations.iter().map(|o| o.ring.len() - 1).collect(),
        Heuristic::UniformGuess => observations
            .iter()
            .map(|o| rng.gen_range(0..o.ring.len()))
            .collect(),
        Heuristic::KeyImageGraph => {
            let resolved = eliminate(observations);
            observations
                .iter()
                .enumerate()
                .map(|(i, o)| match resolved.get(&i) {
                    Some(&pos) => pos,
                    None => {
                        let spent: BTreeSet<u64> = resolved
                            .iter()
                            .filter(|(j, _)| **j != i)
                            .map(|(j, pos)| observations[*j].ring[*pos])
                            .collect();
                        let open: Vec<usize> = (0..o.ring.len())
                            .filter(|&p| !spent.contains(&o.ring[p]))
                            .collect();
                        if open.is_empty() {
                            rng.gen_range(0..o.ring.len())
                        } else {
                            open[rng.gen_range(0..open.len())]
                        }
                    }
                })
                .collect()
        }
    }
}

/// Chain-reaction analysis: a ring whose other members are all known spent
/// pins its own true member, which then becomes known spent.
fn eliminate(observations: &[RingObservation]) -> BTreeMap<usize, usize> {
    let mut resolved: BTreeMap<usize, usize> = BTreeMap::new();
    let mut spent_by: BTreeMap<u64, usize> = BTreeMap::new();
    loop {
        let mut progress = false;
        for (i, o) in observations.iter().enumerate() {
            if resolved.contains_key(&i) {
                continue;
            }
            let open: Vec<usize> = (0..o.ring.len())
                .filter(|&p| spent_by.get(&o.ring[p]).is_none_or(|&j| j == i))
                .collect();
            if open.len() == 1 {
                resolved.insert(i, open[0]);
                spent_by.insert(o.ring[open[0]], i);
                progress = true;
            }
        }
        if !progress {
            return resolved;
        }
    }
}

/// Scores a heuristic against ground truth (the true global output index of
/// each observation).
pub fn run_link_attack(
    heuristic: Heuristic,
    observations: &[RingObservation],
    truth: &[u64],
    seed: u64,
) -> LinkAttackStats {
    assert_eq!(observations.len(), truth.len(), "one truth per observation");
    let guesses = guess(heuristic, observations, seed);
    let correct = observations
        .iter()
        .zip(&guesses)
        .zip(truth)
        .filter(|((o, &g), &t)| o.ring[g] == t)
        .count() as u64;
    let n = observations.len() as u64;
    let baseline = if n == 0 {
        0.0
    } else {
        observations
            .iter()
            .map(|o| 1.0 / o.ring.len() as f64)
            .sum::<f64>()
            / n as f64
    };
    LinkAttackStats::new(heuristic, n, correct, baseline)
}

/// Ring observations from every shielded input of a chain.
pub fn observations_from_chain(g: &Group, chain: &[Block]) -> Vec<RingObservation> {
    chain
        .iter()
        .flat_map(|b| &b.transactions)
        .flat_map(|tx| &tx.shielded_inputs)
        .map(|i| RingObservation {
            ring: i.ring.clone(),
            key_image: sha256(&g.element_to_bytes(&i.signature.key_image)),
        })
        .collect()
}

/// Ground truth aligned with `observations`, looked up by key-image tag.
/// `None` if any spend is missing from `known`.
pub fn truth_from_key_images(
    observations: &[RingObservation],
    known: &BTreeMap<[u8; 32], u64>,
) -> Option<Vec<u64>> {
    observations
        .iter()
        .map(|o| known.get(&o.key_image).copied())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub sampler: DecoySampler,
    pub ring_size: usize,
    pub spends: usize,
    /// Outputs present before the first spend.
    pub initial_outputs: u64,
    /// New outputs appended after each spend.
    pub outputs_per_spend: u64,
    /// Share of spends made with no decoys at all.
    pub zero_decoy_fraction: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(sampler: DecoySampler, ring_size: usize, spends: usize, seed: u64) -> Self {
        SyntheticConfig {
            sampler,
            ring_size,
            spends,
            initial_outputs: 100_000,
            outputs_per_spend: 2,
            zero_decoy_fraction: 0.0,
            seed,
        }
    }
}

/// Simulated spending history: each spend takes a uniformly chosen unspent
/// output and hides it in a ring drawn by the wallet's decoy sampler.
pub fn synthetic_spends(cfg: &SyntheticConfig) -> (Vec<RingObservation>, Vec<u64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut population = cfg.initial_outputs.max(cfg.ring_size as u64);
    let mut spent = BTreeSet::new();
    let mut observations = Vec::with_capacity(cfg.spends);
    let mut truth = Vec::with_capacity(cfg.spends);
    for _ in 0..cfg.spends {
        let real = loop {
            let r = rng.gen_range(0..population);
            if spent.insert(r) {
                break r;
            }
        };
        let size = if rng.gen_bool(cfg.zero_decoy_fraction.clamp(0.0, 1.0)) {
            1
        } else {
            cfg.ring_size
        };
        let (ring, _) = cfg
            .sampler
            .build_ring(population, real, size, &mut rng)
            .expect("population covers the ring");
        let mut tag = b"synthetic-key-image".to_vec();
        tag.extend(cfg.seed.to_be_bytes());
        tag.extend(real.to_be_bytes());
        observations.push(RingObservation {
            ring,
            key_image: sha256(&tag),
        });
        truth.push(real);
        population += cfg.outputs_per_spend;
    }
    (observations, truth)
}

/// Runs every heuristic over a synthetic history.
pub fn calibrate(cfg: &SyntheticConfig) -> Vec<LinkAttackStats> {
    let (obs, truth) = synthetic_spends(cfg);
    Heuristic::ALL
        .iter()
        .map(|&h| run_link_attack(h, &obs, &truth, cfg.seed ^ 0x5eed))
        .collect()
}
