//! Traffic demands and their grouping for batch planning.
//!
//! A demand is one bidirectional connection request between two distinct
//! nodes. Demands come from three sources: a uniform all-pairs generator, a
//! population-gravity sampler, or a text file. Large demand sets are split
//! into bounded groups (seeded shuffle, then chunk) so each group can be
//! planned by an exact solver independently.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::topology::{NetworkGraph, NodeId};

/// Errors from demand parsing, generation, or partitioning.
#[derive(Debug, Error)]
pub enum DemandError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("demand {index}: {msg}")]
    Invalid { index: usize, msg: String },
    #[error("gravity generation: {0}")]
    Gravity(String),
    #[error("partition: {0}")]
    Partition(String),
}

/// One bidirectional connection request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Demand {
    pub index: usize,
    pub source: NodeId,
    pub destination: NodeId,
}

/// An ordered set of demands with dense indices `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSet {
    demands: Vec<Demand>,
}

impl DemandSet {
    /// Wraps a list of demands, checking indices are dense and endpoints sane.
    pub fn new(demands: Vec<Demand>, graph: &NetworkGraph) -> Result<Self, DemandError> {
        for (i, d) in demands.iter().enumerate() {
            if d.index != i {
                return Err(DemandError::Invalid {
                    index: d.index,
                    msg: format!("expected dense index {i}"),
                });
            }
            if d.source == d.destination {
                return Err(DemandError::Invalid {
                    index: d.index,
                    msg: "source equals destination".into(),
                });
            }
            if d.source >= graph.node_count() || d.destination >= graph.node_count() {
                return Err(DemandError::Invalid {
                    index: d.index,
                    msg: "endpoint outside graph".into(),
                });
            }
        }
        Ok(DemandSet { demands })
    }

    /// Parses `demand <index> <source> <destination>` lines.
    pub fn parse(text: &str, graph: &NetworkGraph) -> Result<Self, DemandError> {
        let mut demands = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 4 || fields[0] != "demand" {
                return Err(DemandError::Parse {
                    line,
                    msg: "expected `demand <index> <source> <destination>`".into(),
                });
            }
            let parse = |f: &str, what: &str| -> Result<usize, DemandError> {
                f.parse().map_err(|_| DemandError::Parse {
                    line,
                    msg: format!("invalid {what} `{f}`"),
                })
            };
            demands.push(Demand {
                index: parse(fields[1], "index")?,
                source: parse(fields[2], "source")?,
                destination: parse(fields[3], "destination")?,
            });
        }
        DemandSet::new(demands, graph)
    }

    /// Serializes to the `demand` line format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for d in &self.demands {
            let _ = writeln!(out, "demand {} {} {}", d.index, d.source, d.destination);
        }
        out
    }

    pub fn demands(&self) -> &[Demand] {
        &self.demands
    }

    pub fn len(&self) -> usize {
        self.demands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }

    /// Splits into groups of at most `max_group_size`: indices are shuffled
    /// with a seeded generator, then chunked in order. Every demand lands in
    /// exactly one group.
    pub fn partition(
        &self,
        max_group_size: usize,
        seed: u64,
    ) -> Result<DemandPartition, DemandError> {
        if max_group_size == 0 {
            return Err(DemandError::Partition("group size must be positive".into()));
        }
        let mut order: Vec<usize> = (0..self.demands.len()).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let groups = order
            .chunks(max_group_size)
            .map(|chunk| {
                let mut g = chunk.to_vec();
                g.sort_unstable();
                g
            })
            .collect();
        Ok(DemandPartition {
            groups,
            total: self.demands.len(),
        })
    }
}

/// Demand indices split into bounded groups.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandPartition {
    /// Each group holds ascending demand indices.
    pub groups: Vec<Vec<usize>>,
    total: usize,
}

impl DemandPartition {
    /// Total number of demands across all groups.
    pub fn total(&self) -> usize {
        self.total
    }
}

/// One demand per unordered node pair, indexed in (source, destination)
/// lexicographic order. For `n` nodes this yields `n (n - 1) / 2` demands.
pub fn generate_uniform(graph: &NetworkGraph) -> DemandSet {
    let n = graph.node_count();
    let mut demands = Vec::with_capacity(n * (n - 1) / 2);
    for s in 0..n {
        for d in (s + 1)..n {
            demands.push(Demand {
                index: demands.len(),
                source: s,
                destination: d,
            });
        }
    }
    DemandSet { demands }
}

/// Samples `count` demands with replacement; the probability of the pair
/// `(u, v)` is proportional to `population(u) * population(v)`.
pub fn generate_gravity(
    graph: &NetworkGraph,
    count: usize,
    seed: u64,
) -> Result<DemandSet, DemandError> {
    let n = graph.node_count();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    let mut cumulative = Vec::with_capacity(pairs.capacity());
    let mut total = 0.0f64;
    for u in 0..n {
        for v in (u + 1)..n {
            let w = graph.node(u).population * graph.node(v).population;
            if w > 0.0 {
                total += w;
                pairs.push((u, v));
                cumulative.push(total);
            }
        }
    }
    if total <= 0.0 {
        return Err(DemandError::Gravity(
            "all population products are zero; gravity traffic needs node populations".into(),
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut demands = Vec::with_capacity(count);
    for index in 0..count {
        let x: f64 = rng.gen::<f64>() * total;
        let at = cumulative.partition_point(|&c| c < x).min(pairs.len() - 1);
        let (source, destination) = pairs[at];
        demands.push(Demand {
            index,
            source,
            destination,
        });
    }
    Ok(DemandSet { demands })
}
