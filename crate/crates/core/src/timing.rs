//! Analytic latency model: buffering delays along coding trails and
//! restoration-time formulas for the protection schemes.
//!
//! Coded recovery never reconfigures cross-connects, so its restoration
//! time is failure-independent: propagation plus per-hop processing plus a
//! synchronization delay [`buffering_delays`] derived from where the coded
//! streams of a trail meet. Shared protection instead pays detection,
//! signaling, and one cross-connect configuration per backup hop when
//! signaling rides in-band. [`worst_case_rt`] evaluates all schemes over
//! every failure scenario and returns per-connection worst-case lines that
//! are affine in the cross-connect time, so reports can tabulate several
//! cross-connect times with exact column differences.

use crate::cpp::{CppPlan, EndKind, LinearTrail};
use crate::routing::RoutedPath;

/// Whether every node regenerates the signal electronically or most nodes
/// are bypassed optically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkKind {
    Opaque,
    Transparent,
}

/// Latency parameters, all in milliseconds (speed in ms per km).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingParams {
    /// Per-node processing time.
    pub m_ms: f64,
    /// Cross-connect configuration time.
    pub x_ms: f64,
    /// Failure detection time.
    pub f_ms: f64,
    /// Propagation speed.
    pub speed_ms_per_km: f64,
    pub kind: NetworkKind,
}

impl TimingParams {
    /// Opaque-network defaults: 0.3 ms node processing, 10 ms detection,
    /// 0.005 ms/km propagation.
    pub fn opaque(x_ms: f64) -> Self {
        TimingParams {
            m_ms: 0.3,
            x_ms,
            f_ms: 10.0,
            speed_ms_per_km: 0.005,
            kind: NetworkKind::Opaque,
        }
    }

    /// Transparent-network defaults: 0.01 ms node processing, 10 ms
    /// detection, 0.005 ms/km propagation.
    pub fn transparent(x_ms: f64) -> Self {
        TimingParams {
            m_ms: 0.01,
            x_ms,
            f_ms: 10.0,
            speed_ms_per_km: 0.005,
            kind: NetworkKind::Transparent,
        }
    }
}

/// Buffer depths that align the three streams combined at an end node: the
/// parity arriving from the right of the trail, the parity from the left,
/// and the locally injected signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Xor4Buffers {
    pub right_ms: f64,
    pub left_ms: f64,
    pub local_ms: f64,
}

/// Synchronization figures of one end node on one trail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndNodeTiming {
    pub connection: usize,
    pub kind: EndKind,
    pub position: usize,
    /// Wait for the latest contribution arriving from the right.
    pub b2_ms: f64,
    /// Wait for the latest contribution arriving from the left.
    pub b3_ms: f64,
}

impl EndNodeTiming {
    /// Synchronization delay at this end node.
    pub fn sync_ms(&self) -> f64 {
        self.b2_ms.max(self.b3_ms)
    }

    /// Buffer assignment: the earlier side waits for the later one and the
    /// local stream waits for both, so all three align at `sync_ms`.
    pub fn xor4(&self) -> Xor4Buffers {
        if self.b2_ms <= self.b3_ms {
            Xor4Buffers {
                right_ms: self.b3_ms - self.b2_ms,
                left_ms: 0.0,
                local_ms: self.b3_ms,
            }
        } else {
            Xor4Buffers {
                right_ms: 0.0,
                left_ms: self.b2_ms - self.b3_ms,
                local_ms: self.b2_ms,
            }
        }
    }
}

/// Synchronization picture of a whole trail.
#[derive(Debug, Clone, PartialEq)]
pub struct TrailTiming {
    /// One entry per trail end node, in trail order.
    pub end_nodes: Vec<EndNodeTiming>,
    /// Trail synchronization delay: the worst end-node delay.
    pub sync_ms: f64,
}

/// Computes per-end-node buffering delays for a coding trail.
///
/// The delays are measured relative to the arrival of the evaluated
/// connection's own parity, so a trail carrying a single connection has
/// all-zero delays. Every end node of *another* connection falls on the
/// right side (later trail position; ties at the same node count as right)
/// or the left side. The wait for one side is the largest propagation delay
/// from a connection with exactly one end node on that side, plus the sum
/// of the end-to-end propagation delays of connections lying entirely on
/// that side — nested pairs hand their alignment debt down the trail, so
/// their delays accumulate. Connections with a single end node on this
/// trail (covers of non-linear trees) contribute like the one-sided case.
pub fn buffering_delays(trail: &LinearTrail, params: &TimingParams) -> TrailTiming {
    let km = |a: usize, b: usize| trail.distance_km(a, b);
    let mut end_nodes = Vec::with_capacity(trail.end_nodes.len());
    for q in &trail.end_nodes {
        // Per other connection: positions of its end nodes on each side of
        // the cut. Keyed by connection id so sums accumulate in an order
        // that does not depend on the trail's orientation.
        let mut sides: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> =
            std::collections::BTreeMap::new();
        for other in &trail.end_nodes {
            if other.connection == q.connection {
                continue;
            }
            let entry = sides.entry(other.connection).or_default();
            if other.position >= q.position {
                entry.0.push(other.position);
            } else {
                entry.1.push(other.position);
            }
        }
        let side_wait = |pick: fn(&(Vec<usize>, Vec<usize>)) -> &[usize]| -> f64 {
            let mut latest: f64 = 0.0;
            let mut debt = 0.0;
            for entry in sides.values() {
                match pick(entry) {
                    [single] => {
                        latest = latest.max(km(*single, q.position) * params.speed_ms_per_km);
                    }
                    [a, b] => {
                        debt += km(*a, *b) * params.speed_ms_per_km;
                    }
                    _ => {}
                }
            }
            latest + debt
        };
        let b2_ms = side_wait(|e| &e.0);
        let b3_ms = side_wait(|e| &e.1);
        end_nodes.push(EndNodeTiming {
            connection: q.connection,
            kind: q.kind,
            position: q.position,
            b2_ms,
            b3_ms,
        });
    }
    let sync_ms = end_nodes
        .iter()
        .map(EndNodeTiming::sync_ms)
        .fold(0.0, f64::max);
    TrailTiming { end_nodes, sync_ms }
}

/// Synchronization delays of one connection at its two ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncDelays {
    pub source_ms: f64,
    pub dest_ms: f64,
    /// True when the delays come from trail covers of a non-linear tree
    /// and are upper-bound estimates rather than exact figures.
    pub estimate: bool,
}

/// Per-connection synchronization delays of a coded plan.
///
/// Every connection's end nodes appear on at least one trail of its tree;
/// when they appear on several (non-linear trees), the worst delay counts.
pub fn sync_delays(plan: &CppPlan, params: &TimingParams) -> Vec<SyncDelays> {
    let nc = plan.assignment.len();
    let mut source: Vec<Option<f64>> = vec![None; nc];
    let mut dest: Vec<Option<f64>> = vec![None; nc];
    let mut estimate = vec![false; nc];
    for group in &plan.groups {
        for tree in &group.trees {
            for trail in &tree.trails {
                let timing = buffering_delays(trail, params);
                for end in &timing.end_nodes {
                    let slot = match end.kind {
                        EndKind::Source => &mut source[end.connection],
                        EndKind::Destination => &mut dest[end.connection],
                    };
                    let s = end.sync_ms();
                    *slot = Some(slot.map_or(s, |prev: f64| prev.max(s)));
                }
            }
            if !tree.linear {
                for &m in &tree.members {
                    estimate[m] = true;
                }
            }
        }
    }
    (0..nc)
        .map(|i| SyncDelays {
            source_ms: source[i].expect("connection source on some trail"),
            dest_ms: dest[i].expect("connection destination on some trail"),
            estimate: estimate[i],
        })
        .collect()
}

/// Inputs of the restoration-time formulas for one failure scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtInputs {
    /// Propagation delay between source and destination over the primary
    /// route.
    pub d_sd_ms: f64,
    /// Backup hop count.
    pub h_b: usize,
    /// Hops between the node detecting the failure and the transmitting
    /// end of the connection.
    pub h_is: usize,
    /// Synchronization delay at the receiving end node (coded plans only).
    pub sync_ms: f64,
}

/// Proactive coded recovery: the decoder already runs; the receiver waits
/// out propagation, per-hop processing, and stream synchronization.
pub fn rt_cpp1(i: &RtInputs, p: &TimingParams) -> f64 {
    i.d_sd_ms + i.h_b as f64 * p.m_ms + i.sync_ms
}

/// Two-tier coded recovery: after detection, the transmitter is told to
/// resend around the failure with priority, skipping synchronization.
pub fn rt_cpp2(i: &RtInputs, p: &TimingParams) -> f64 {
    p.f_ms
        + 2.0 * i.d_sd_ms
        + (i.h_is + 1) as f64 * p.m_ms
        + (i.h_b + 1) as f64 * p.m_ms
}

/// Coded restoration time: opaque networks run both tiers and the faster
/// one wins; transparent networks always recover proactively.
pub fn rt_cpp(i: &RtInputs, p: &TimingParams) -> f64 {
    match p.kind {
        NetworkKind::Opaque => rt_cpp1(i, p).min(rt_cpp2(i, p)),
        NetworkKind::Transparent => rt_cpp1(i, p),
    }
}

/// How a shared-protection network carries its recovery signaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SppSignaling {
    /// A separate control plane configures all backup cross-connects in
    /// parallel: one cross-connect time total.
    SeparateControlPlane,
    /// Signaling travels in-band hop by hop: one cross-connect time per
    /// backup node.
    InBand,
}

/// Shared-protection restoration time under the chosen signaling model.
pub fn rt_spp(i: &RtInputs, p: &TimingParams, signaling: SppSignaling) -> f64 {
    match signaling {
        SppSignaling::SeparateControlPlane => {
            p.f_ms
                + 2.0 * i.d_sd_ms
                + (i.h_is + 1) as f64 * p.m_ms
                + p.x_ms
                + (i.h_b + 1) as f64 * p.m_ms
        }
        SppSignaling::InBand => {
            p.f_ms
                + i.d_sd_ms
                + (i.h_is + 1) as f64 * p.m_ms
                + (i.h_b + 1) as f64 * p.x_ms
                + 2.0 * i.d_sd_ms
                + 2.0 * (i.h_b + 1) as f64 * p.m_ms
        }
    }
}

/// Worst-case restoration time of one connection as an affine function of
/// the cross-connect time.
///
/// The base is rounded to a 2^-20 ms grid (sub-nanosecond) so that values
/// at different cross-connect times differ by exactly `slope * (x' - x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtLine {
    pub connection: usize,
    pub base_ms: f64,
    /// Cross-connect occurrences: 0 for coded recovery, 1 with a separate
    /// control plane, backup hops + 1 in-band.
    pub slope: f64,
}

impl RtLine {
    /// Restoration time at cross-connect time `x_ms`.
    pub fn at(&self, x_ms: f64) -> f64 {
        self.base_ms + self.slope * x_ms
    }
}

/// Worst-case lines of one scheme, one per connection.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeWorst {
    pub lines: Vec<RtLine>,
}

impl SchemeWorst {
    /// The worst restoration time at `x_ms` and the line attaining it
    /// (first such line on ties).
    pub fn at(&self, x_ms: f64) -> (f64, &RtLine) {
        let mut best = &self.lines[0];
        let mut value = best.at(x_ms);
        for line in &self.lines[1..] {
            let v = line.at(x_ms);
            if v > value {
                value = v;
                best = line;
            }
        }
        (value, best)
    }
}

/// Worst-case restoration times of all schemes over one plan.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstRt {
    /// Coded recovery (constant in the cross-connect time).
    pub cpp: SchemeWorst,
    /// Shared protection with a separate control plane.
    pub spp1: SchemeWorst,
    /// Shared protection with in-band signaling.
    pub spp2: SchemeWorst,
    /// True when some synchronization delay is an estimate.
    pub estimate: bool,
}

fn quantize_ms(x: f64) -> f64 {
    const GRID: f64 = 1048576.0; // 2^20 per ms
    (x * GRID).round() / GRID
}

/// Enumerates every failure scenario — each connection, each primary span,
/// both transmission directions — and returns per-connection worst-case
/// restoration-time lines for each scheme.
///
/// The detecting node is the failed span's endpoint nearer the transmitter,
/// so the detection distance ranges over 0 to primary hops − 1. The
/// synchronization delay is taken at the receiving end: the destination
/// when the source transmits, and vice versa.
///
/// # Panics
///
/// Panics when `primaries`, `backups`, and `sync` disagree in length.
pub fn worst_case_rt(
    primaries: &[RoutedPath],
    backups: &[RoutedPath],
    sync: &[SyncDelays],
    params: &TimingParams,
) -> WorstRt {
    assert_eq!(primaries.len(), backups.len());
    assert_eq!(primaries.len(), sync.len());
    let nc = primaries.len();
    let mut cpp = Vec::with_capacity(nc);
    let mut spp1 = Vec::with_capacity(nc);
    let mut spp2 = Vec::with_capacity(nc);
    for i in 0..nc {
        let d_sd_ms = primaries[i].length_km * params.speed_ms_per_km;
        let h_b = backups[i].hop_count();
        let hops = primaries[i].hop_count();
        let mut worst_cpp: f64 = 0.0;
        let mut worst_spp1: f64 = 0.0;
        let mut worst_spp2: f64 = 0.0;
        for span_idx in 0..hops {
            for &(h_is, sync_ms) in &[
                (span_idx, sync[i].dest_ms),
                (hops - 1 - span_idx, sync[i].source_ms),
            ] {
                let inputs = RtInputs {
                    d_sd_ms,
                    h_b,
                    h_is,
                    sync_ms,
                };
                worst_cpp = worst_cpp.max(rt_cpp(&inputs, params));
                // X enters the shared-scheme formulas linearly; collect the
                // X-free part here and let the line carry the slope.
                let zero_x = TimingParams { x_ms: 0.0, ..*params };
                worst_spp1 =
                    worst_spp1.max(rt_spp(&inputs, &zero_x, SppSignaling::SeparateControlPlane));
                worst_spp2 = worst_spp2.max(rt_spp(&inputs, &zero_x, SppSignaling::InBand));
            }
        }
        cpp.push(RtLine {
            connection: i,
            base_ms: quantize_ms(worst_cpp),
            slope: 0.0,
        });
        spp1.push(RtLine {
            connection: i,
            base_ms: quantize_ms(worst_spp1),
            slope: 1.0,
        });
        spp2.push(RtLine {
            connection: i,
            base_ms: quantize_ms(worst_spp2),
            slope: (h_b + 1) as f64,
        });
    }
    WorstRt {
        cpp: SchemeWorst { lines: cpp },
        spp1: SchemeWorst { lines: spp1 },
        spp2: SchemeWorst { lines: spp2 },
        estimate: sync.iter().any(|s| s.estimate),
    }
}
