//! Discrete-event simulator for the XOR parity streams of a coding trail.
//!
//! Time advances in rounds of one tick. Every end node of the trail
//! contributes one symbol per round: the source of a connection injects the
//! payload it transmits, the destination injects the copy it received over
//! the primary (available in the same round — both ends are modeled as
//! generating their parity at the same time). Two carrier streams sweep the
//! trail, one per direction; each station XORs its contribution into the
//! passing carrier. As long as every primary is healthy the carriers cancel
//! pairwise, so the four-way XOR of the two carriers and the local symbol
//! is zero at every end node — a conservation check the engine enforces.
//! When a primary fails, its destination's contribution disappears and the
//! same four-way XOR yields exactly the lost payload, bit for bit.
//!
//! Stations decode through fixed delay lines: the release schedule of an
//! end node is its own-parity propagation plus the larger of its two
//! buffering delays, quantized to whole rounds (ceiling). Symbols arriving
//! early wait in bounded buffers; a symbol missing at its scheduled release
//! is either a tolerated stall (trail severed, or an injected round skew)
//! or a configuration error — never silent corruption.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::cpp::{EndKind, LinearTrail};
use crate::routing::RoutedPath;
use crate::timing::{buffering_delays, TimingParams, TrailTiming};
use crate::topology::SpanId;

/// One symbol on a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSymbol {
    pub round: u64,
    pub payload: u64,
    /// Flagged recovery traffic that bypasses the alignment buffers.
    pub ambulance: bool,
    /// Whether the symbol carries an explicit round-number header
    /// (warm-up and resynchronization windows only).
    pub header: bool,
}

/// Recovery discipline of the trail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    /// Destinations decode continuously and switch over seamlessly.
    Proactive,
    /// Destinations decode, and additionally ask the transmitter to resend
    /// flagged traffic that skips the buffers once a failure is detected.
    TwoTier,
}

/// What a failure takes down.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureScope {
    /// Only primaries crossing the span fail; the trail keeps running.
    PrimaryOnly,
    /// The physical span fails: primaries crossing it and any trail hop
    /// riding it stop carrying symbols.
    Span,
}

/// A single-span failure at a given round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FailureEvent {
    pub span: SpanId,
    pub round: u64,
    pub scope: FailureScope,
}

/// How a payload reached its destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DeliveredVia {
    Primary,
    Decoded,
    Ambulance,
}

impl DeliveredVia {
    fn label(self) -> &'static str {
        match self {
            DeliveredVia::Primary => "primary",
            DeliveredVia::Decoded => "decoded",
            DeliveredVia::Ambulance => "ambulance",
        }
    }
}

/// One delivered payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryRow {
    pub connection: usize,
    pub round: u64,
    pub via: DeliveredVia,
    /// Rounds between emission and delivery.
    pub latency: u64,
    pub payload: u64,
}

/// Carrier value leaving a trail position (diagnostic trace).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRow {
    pub wall: u64,
    pub position: usize,
    pub rightward: bool,
    pub round: u64,
    pub payload: u64,
    pub header: bool,
}

/// Four-way XOR output of one end node (diagnostic trace).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeRow {
    pub wall: u64,
    pub connection: usize,
    pub kind: EndKind,
    pub round: u64,
    pub payload: u64,
}

/// Result of one simulation run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimReport {
    /// Deliveries sorted by (connection, round).
    pub rows: Vec<DeliveryRow>,
    /// Rounds from the failure to the first substitute delivery, per
    /// affected connection.
    pub recovery_rounds: BTreeMap<usize, u64>,
    /// Invariant violations observed (e.g. rounds that never arrived).
    pub defects: Vec<String>,
    /// First wall round at which decoding was back on schedule after an
    /// injected skew.
    pub realigned_wall: Option<u64>,
    /// Wall round after which round-number headers are dropped.
    pub headers_dropped_wall: u64,
    /// Carrier trace (only when requested).
    pub trace: Vec<TraceRow>,
    /// Four-way XOR outputs (only when requested).
    pub decodes: Vec<DecodeRow>,
}

impl SimReport {
    /// Renders the delivery log as CSV: connection, round, delivered-via,
    /// latency in rounds.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("connection,round,via,latency\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.connection,
                row.round,
                row.via.label(),
                row.latency
            ));
        }
        out
    }
}

/// Which XOR4 input a skew disturbance hits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkewInput {
    Right,
    Left,
    Local,
}

/// A transient round-number skew injected on one XOR4 input line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkewEvent {
    pub connection: usize,
    pub kind: EndKind,
    pub input: SkewInput,
    /// First wall round of the disturbance.
    pub wall: u64,
    /// How many rounds the input line stays stuck.
    pub rounds: u64,
}

/// Static inputs of a run.
pub struct SimSetup<'a> {
    pub trail: &'a LinearTrail,
    /// Analytic buffering delays for this trail; the engine checks that
    /// their whole-round quantization matches the trail geometry.
    pub timing: &'a TrailTiming,
    /// Primary routes indexed by connection id (used to map span failures
    /// to affected connections).
    pub primaries: &'a [RoutedPath],
    pub params: &'a TimingParams,
    /// Round length.
    pub tick_ms: f64,
}

/// Per-run options.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub mode: SimMode,
    /// Number of payload rounds emitted.
    pub rounds: u64,
    /// Payload seed per connection; missing connections fall back to
    /// `1000 + connection`.
    pub traffic_seeds: BTreeMap<usize, u64>,
    pub failure: Option<FailureEvent>,
    pub skew: Option<SkewEvent>,
    /// Rounds during which symbols carry round-number headers; defaults to
    /// the largest decode schedule plus one.
    pub warmup_rounds: Option<u64>,
    /// Record carrier and decode traces.
    pub trace: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            mode: SimMode::Proactive,
            rounds: 100,
            traffic_seeds: BTreeMap::new(),
            failure: None,
            skew: None,
            warmup_rounds: None,
            trace: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    /// The configured buffers cannot realize the trail's schedule.
    #[error("inconsistent buffer configuration: {0}")]
    BufferConfig(String),
    /// A round skew exceeded the available buffer depth.
    #[error("round skew exceeds buffer depth: {0}")]
    Skew(String),
    /// A scenario file could not be parsed.
    #[error("scenario line {line}: {msg}")]
    Scenario { line: usize, msg: String },
    /// A connection never recovered or another invariant broke.
    #[error("simulation defect: {0}")]
    Defect(String),
}

/// Tolerant tick quantization: whole-round ceiling with a guard against
/// sub-ulp float noise.
fn ceil_ticks(ms: f64, tick_ms: f64) -> u64 {
    let ratio = ms / tick_ms - 1e-9;
    if ratio <= 0.0 {
        0
    } else {
        ratio.ceil() as u64
    }
}

/// Whole rounds each trail span takes: propagation plus one node processing
/// time, never less than one round.
pub fn span_round_counts(trail: &LinearTrail, params: &TimingParams, tick_ms: f64) -> Vec<u64> {
    (0..trail.spans.len())
        .map(|j| {
            let km = trail.cum_km[j + 1] - trail.cum_km[j];
            ceil_ticks(km * params.speed_ms_per_km + params.m_ms, tick_ms).max(1)
        })
        .collect()
}

/// Buffering delays recomputed on the round-quantized trail metric, in ms.
///
/// Whole-round quantization of these delays always matches the per-span
/// round counts the simulator uses, so they are safe to feed to
/// [`simulate`] for geometries that are not tick-exact.
pub fn quantized_timing(trail: &LinearTrail, params: &TimingParams, tick_ms: f64) -> TrailTiming {
    let rounds_timing = integer_metric_timing(trail, params, tick_ms);
    let end_nodes = rounds_timing
        .end_nodes
        .iter()
        .map(|e| crate::timing::EndNodeTiming {
            b2_ms: e.b2_ms * tick_ms,
            b3_ms: e.b3_ms * tick_ms,
            ..*e
        })
        .collect();
    TrailTiming {
        end_nodes,
        sync_ms: rounds_timing.sync_ms * tick_ms,
    }
}

/// Buffering delays on the integer round metric: the returned "ms" values
/// are exact whole numbers of rounds.
fn integer_metric_timing(trail: &LinearTrail, params: &TimingParams, tick_ms: f64) -> TrailTiming {
    let span_r = span_round_counts(trail, params, tick_ms);
    let mut cum = vec![0.0];
    for r in &span_r {
        cum.push(cum.last().unwrap() + *r as f64);
    }
    let int_trail = LinearTrail {
        nodes: trail.nodes.clone(),
        spans: trail.spans.clone(),
        cum_km: cum,
        end_nodes: trail.end_nodes.clone(),
    };
    let unit = TimingParams {
        m_ms: 0.0,
        speed_ms_per_km: 1.0,
        ..*params
    };
    buffering_delays(&int_trail, &unit)
}

struct Member {
    connection: usize,
    /// Whole rounds between the two end nodes along the trail.
    seg_rounds: u64,
    primary_spans: BTreeSet<SpanId>,
    /// Round from which the source replaces its coded stream by zeros
    /// (two-tier mode only).
    zero_from: Option<u64>,
    payloads: Vec<u64>,
}

struct Station {
    member: usize,
    kind: EndKind,
    position: usize,
    /// Decode release offset: own-parity rounds plus the larger quantized
    /// buffering delay (which is also the node's skew tolerance).
    sched: u64,
    right_q: VecDeque<(u64, u64)>,
    left_q: VecDeque<(u64, u64)>,
    local_q: VecDeque<(u64, u64)>,
    cap_right: usize,
    cap_left: usize,
    cap_local: usize,
    next_round: u64,
}

/// Runs the trail simulation.
pub fn simulate(setup: &SimSetup, options: &SimOptions) -> Result<SimReport, SimError> {
    let trail = setup.trail;
    let tick = setup.tick_ms;
    if !(tick > 0.0) {
        return Err(SimError::BufferConfig("tick must be positive".into()));
    }
    if options.rounds == 0 {
        return Err(SimError::BufferConfig("need at least one round".into()));
    }
    let n_pos = trail.nodes.len();
    if n_pos < 2 {
        return Err(SimError::BufferConfig("trail needs at least one span".into()));
    }

    // Geometry in whole rounds.
    let span_r = span_round_counts(trail, setup.params, tick);
    let mut prefix = vec![0u64; n_pos];
    for p in 1..n_pos {
        prefix[p] = prefix[p - 1] + span_r[p - 1];
    }
    let total_r = prefix[n_pos - 1];

    // Quantized buffering delays from the trail geometry, checked against
    // the provided analytic timing.
    let int_timing = integer_metric_timing(trail, setup.params, tick);
    if setup.timing.end_nodes.len() != trail.end_nodes.len() {
        return Err(SimError::BufferConfig(
            "timing does not describe this trail".into(),
        ));
    }
    for (e, (t, it)) in trail
        .end_nodes
        .iter()
        .zip(setup.timing.end_nodes.iter().zip(&int_timing.end_nodes))
    {
        if t.connection != e.connection || t.kind != e.kind || t.position != e.position {
            return Err(SimError::BufferConfig(
                "timing does not describe this trail".into(),
            ));
        }
        let want = (it.b2_ms.round() as u64, it.b3_ms.round() as u64);
        let got = (ceil_ticks(t.b2_ms, tick), ceil_ticks(t.b3_ms, tick));
        if want != got {
            return Err(SimError::BufferConfig(format!(
                "connection {} {:?} expects buffer depths {:?} rounds, configured {:?}",
                e.connection, e.kind, want, got
            )));
        }
    }

    // Members: connections with both end nodes on the trail. The carriers
    // only cancel when every contribution is paired, so covers are
    // rejected here.
    let mut ends_by_conn: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, e) in trail.end_nodes.iter().enumerate() {
        ends_by_conn.entry(e.connection).or_default().push(i);
    }
    let mut members = Vec::new();
    let mut member_of_conn = BTreeMap::new();
    for (conn, ends) in &ends_by_conn {
        let (mut src, mut dst) = (None, None);
        for &i in ends {
            match trail.end_nodes[i].kind {
                EndKind::Source => src = Some(trail.end_nodes[i].position),
                EndKind::Destination => dst = Some(trail.end_nodes[i].position),
            }
        }
        let (src_pos, dst_pos) = match (src, dst, ends.len()) {
            (Some(s), Some(d), 2) => (s, d),
            _ => {
                return Err(SimError::BufferConfig(format!(
                    "connection {conn} is not a full source/destination pair on this trail"
                )))
            }
        };
        if *conn >= setup.primaries.len() {
            return Err(SimError::BufferConfig(format!(
                "no primary route for connection {conn}"
            )));
        }
        let seed = options
            .traffic_seeds
            .get(conn)
            .copied()
            .unwrap_or(1000 + *conn as u64);
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let payloads = (0..options.rounds).map(|_| rng.next_u64()).collect();
        member_of_conn.insert(*conn, members.len());
        members.push(Member {
            connection: *conn,
            seg_rounds: prefix[src_pos].abs_diff(prefix[dst_pos]),
            primary_spans: setup.primaries[*conn].spans.iter().copied().collect(),
            zero_from: None,
            payloads,
        });
    }
    if members.is_empty() {
        return Err(SimError::BufferConfig("trail carries no connections".into()));
    }

    // Stations in canonical trail order.
    let mut stations = Vec::new();
    for (e, it) in trail.end_nodes.iter().zip(&int_timing.end_nodes) {
        let m = member_of_conn[&e.connection];
        let b2r = it.b2_ms.round() as u64;
        let b3r = it.b3_ms.round() as u64;
        let depth = b2r.max(b3r);
        let sched = members[m].seg_rounds + depth;
        let arr_left = prefix[e.position];
        let arr_right = total_r - prefix[e.position];
        if sched < arr_left || sched < arr_right {
            return Err(SimError::BufferConfig(format!(
                "trail spans are not covered by member segments around position {}",
                e.position
            )));
        }
        stations.push(Station {
            member: m,
            kind: e.kind,
            position: e.position,
            sched,
            right_q: VecDeque::new(),
            left_q: VecDeque::new(),
            local_q: VecDeque::new(),
            cap_right: (sched - arr_right + depth + 1) as usize,
            cap_left: (sched - arr_left + depth + 1) as usize,
            cap_local: (sched + depth + 1) as usize,
            next_round: 0,
        });
    }
    let max_sched = stations.iter().map(|s| s.sched).max().unwrap_or(0);
    let mut stations_at: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in stations.iter().enumerate() {
        stations_at.entry(s.position).or_default().push(i);
    }

    // Failure bookkeeping.
    let failure = options.failure;
    let fail_round = failure.map(|f| f.round).unwrap_or(u64::MAX);
    let affected: Vec<usize> = failure
        .map(|f| {
            members
                .iter()
                .enumerate()
                .filter(|(_, m)| m.primary_spans.contains(&f.span))
                .map(|(i, _)| i)
                .collect()
        })
        .unwrap_or_default();
    let sole_affected = (affected.len() == 1).then(|| affected[0]);
    let cut_span: Option<usize> = failure.and_then(|f| {
        if f.scope == FailureScope::Span {
            trail.spans.iter().position(|&s| s == f.span)
        } else {
            None
        }
    });
    let healthy = |round: u64| round < fail_round;

    // Two-tier: the destination detects the loss after one silent round and
    // tells the source, which resends flagged payloads that skip the
    // buffers while zeroing its own coded stream.
    let mut ambulances: BTreeMap<u64, Vec<(usize, StreamSymbol)>> = BTreeMap::new();
    let mut amb_horizon = 0;
    if options.mode == SimMode::TwoTier {
        if let Some(m) = sole_affected {
            if fail_round < options.rounds {
                let seg = members[m].seg_rounds;
                let notify = fail_round + 1 + seg;
                members[m].zero_from = Some(notify);
                for k in fail_round..options.rounds {
                    let wall = k.max(notify) + seg;
                    let sym = StreamSymbol {
                        round: k,
                        payload: members[m].payloads[k as usize],
                        ambulance: true,
                        header: true,
                    };
                    ambulances.entry(wall).or_default().push((m, sym));
                    amb_horizon = amb_horizon.max(wall + 1);
                }
            }
        }
    }

    let headers_until = options.warmup_rounds.unwrap_or(max_sched + 1);
    let skew = options.skew;
    let skew_station = skew.map(|sk| {
        stations
            .iter()
            .position(|s| members[s.member].connection == sk.connection && s.kind == sk.kind)
            .ok_or_else(|| SimError::BufferConfig("skew names an unknown end node".into()))
    });
    let skew_station = match skew_station {
        Some(Ok(i)) => Some(i),
        Some(Err(e)) => return Err(e),
        None => None,
    };
    let held = |q: usize, input: SkewInput, w: u64| -> bool {
        match (skew, skew_station) {
            (Some(sk), Some(si)) => {
                si == q && sk.input == input && sk.wall <= w && w < sk.wall + sk.rounds
            }
            _ => false,
        }
    };
    let header_on = |w: u64| -> bool {
        if w < headers_until {
            return true;
        }
        match skew {
            Some(sk) => sk.wall <= w && w < sk.wall + sk.rounds + max_sched + 1,
            None => false,
        }
    };

    // Carrier lanes: per span, symbols in flight with their exit wall.
    let mut right_lane: Vec<VecDeque<(u64, StreamSymbol)>> =
        (0..span_r.len()).map(|_| VecDeque::new()).collect();
    let mut left_lane: Vec<VecDeque<(u64, StreamSymbol)>> =
        (0..span_r.len()).map(|_| VecDeque::new()).collect();

    let mut report = SimReport {
        headers_dropped_wall: headers_until,
        ..SimReport::default()
    };
    // (member, round) -> (delivery wall, via, payload); first delivery wins.
    let mut delivered: BTreeMap<(usize, u64), (u64, DeliveredVia, u64)> = BTreeMap::new();

    // A member's contribution to the carriers for a given round, if any.
    let contribution = |members: &[Member], st: &Station, round: u64| -> Option<u64> {
        let m = &members[st.member];
        let alive = healthy(round) || !affected.contains(&st.member);
        match st.kind {
            EndKind::Source => match m.zero_from {
                Some(z) if round >= z => None,
                _ => Some(m.payloads[round as usize]),
            },
            EndKind::Destination => alive.then(|| m.payloads[round as usize]),
        }
    };

    let horizon = (options.rounds + max_sched + 1)
        .max(amb_horizon)
        .max(skew.map(|sk| sk.wall + sk.rounds + max_sched + 2).unwrap_or(0));

    // Once the trail itself is severed, stations starved of one input
    // stall forever; their other queues fill up and further arrivals are
    // dropped (the stall is already reported as a defect). Overflow is an
    // error only while the trail is intact.
    let severed_at = |w: u64| cut_span.is_some() && w >= fail_round;
    let push_capped =
        |q: &mut VecDeque<(u64, u64)>, cap: usize, item: (u64, u64), severed: bool| -> bool {
            if severed && q.len() >= cap {
                return true;
            }
            q.push_back(item);
            q.len() <= cap
        };

    let mut overflow: Option<String> = None;
    for w in 0..horizon {
        let severed = severed_at(w);
        // --- Emissions -------------------------------------------------
        if w < options.rounds {
            for (i, st) in stations.iter_mut().enumerate() {
                let m = &members[st.member];
                let alive = healthy(w) || !affected.contains(&st.member);
                if st.kind == EndKind::Destination {
                    if alive {
                        delivered
                            .entry((st.member, w))
                            .or_insert((w, DeliveredVia::Primary, m.payloads[w as usize]));
                        if !push_capped(
                            &mut st.local_q,
                            st.cap_local,
                            (w, m.payloads[w as usize]),
                            severed,
                        ) {
                            overflow = Some(format!("local buffer of station {i} overflowed"));
                        }
                    }
                } else if !push_capped(
                    &mut st.local_q,
                    st.cap_local,
                    (w, m.payloads[w as usize]),
                    severed,
                ) {
                    overflow = Some(format!("local buffer of station {i} overflowed"));
                }
            }
            // Birth of the two carriers for round w.
            for rightward in [true, false] {
                let birth_pos = if rightward { 0 } else { n_pos - 1 };
                let mut sym = StreamSymbol {
                    round: w,
                    payload: 0,
                    ambulance: false,
                    header: header_on(w),
                };
                process_position(
                    &mut stations,
                    &stations_at,
                    &members,
                    &contribution,
                    &mut sym,
                    birth_pos,
                    rightward,
                    w,
                    severed,
                    options.trace,
                    &mut report.trace,
                    &mut overflow,
                );
                let (lane, entry_span, exit) = if rightward {
                    (&mut right_lane, 0usize, w + span_r[0])
                } else {
                    (
                        &mut left_lane,
                        n_pos - 2,
                        w + span_r[n_pos - 2],
                    )
                };
                let blocked = cut_span == Some(entry_span) && w >= fail_round;
                if !blocked {
                    lane[entry_span].push_back((exit, sym));
                }
            }
        }
        if let Some(msg) = overflow.take() {
            return Err(if skew.is_some() {
                SimError::Skew(msg)
            } else {
                SimError::BufferConfig(msg)
            });
        }

        // --- Carrier movement ------------------------------------------
        for j in 0..span_r.len() {
            while right_lane[j]
                .front()
                .map(|&(exit, _)| exit == w)
                .unwrap_or(false)
            {
                let (_, mut sym) = right_lane[j].pop_front().unwrap();
                if cut_span == Some(j) && w > fail_round {
                    continue; // severed mid-flight
                }
                let pos = j + 1;
                process_position(
                    &mut stations,
                    &stations_at,
                    &members,
                    &contribution,
                    &mut sym,
                    pos,
                    true,
                    w,
                    severed,
                    options.trace,
                    &mut report.trace,
                    &mut overflow,
                );
                if pos < n_pos - 1 {
                    let blocked = cut_span == Some(pos) && w >= fail_round;
                    if !blocked {
                        right_lane[pos].push_back((w + span_r[pos], sym));
                    }
                }
            }
        }
        for j in (0..span_r.len()).rev() {
            while left_lane[j]
                .front()
                .map(|&(exit, _)| exit == w)
                .unwrap_or(false)
            {
                let (_, mut sym) = left_lane[j].pop_front().unwrap();
                if cut_span == Some(j) && w > fail_round {
                    continue;
                }
                let pos = j;
                process_position(
                    &mut stations,
                    &stations_at,
                    &members,
                    &contribution,
                    &mut sym,
                    pos,
                    false,
                    w,
                    severed,
                    options.trace,
                    &mut report.trace,
                    &mut overflow,
                );
                if pos > 0 {
                    let blocked = cut_span == Some(pos - 1) && w >= fail_round;
                    if !blocked {
                        left_lane[pos - 1].push_back((w + span_r[pos - 1], sym));
                    }
                }
            }
        }
        if let Some(msg) = overflow.take() {
            return Err(if skew.is_some() {
                SimError::Skew(msg)
            } else {
                SimError::BufferConfig(msg)
            });
        }

        // --- Ambulance arrivals (skip all buffers) ----------------------
        if let Some(arrivals) = ambulances.remove(&w) {
            for (m, sym) in arrivals {
                delivered
                    .entry((m, sym.round))
                    .or_insert((w, DeliveredVia::Ambulance, sym.payload));
            }
        }

        // --- Scheduled decodes ------------------------------------------
        for q in 0..stations.len() {
            loop {
                let k = stations[q].next_round;
                if k >= options.rounds || k + stations[q].sched > w {
                    break;
                }
                if held(q, SkewInput::Right, w)
                    || held(q, SkewInput::Left, w)
                    || held(q, SkewInput::Local, w)
                {
                    break;
                }
                let front_ok = |queue: &VecDeque<(u64, u64)>| {
                    queue.front().map(|&(r, _)| r == k).unwrap_or(false)
                };
                let st = &stations[q];
                if !front_ok(&st.right_q) || !front_ok(&st.left_q) {
                    // With the static schedule checks done, a missing
                    // carrier means the trail is severed (tolerated stall)
                    // or the configuration is broken.
                    if cut_span.is_some() && w > fail_round {
                        break;
                    }
                    return Err(SimError::BufferConfig(format!(
                        "carrier symbol for round {k} missing at station {q} on wall {w}"
                    )));
                }
                let local = if front_ok(&st.local_q) {
                    Some(())
                } else {
                    None
                };
                let m = st.member;
                let is_dest = st.kind == EndKind::Destination;
                let local_dead =
                    is_dest && affected.contains(&m) && k >= fail_round && w > fail_round;
                if local.is_none() && !local_dead {
                    return Err(SimError::BufferConfig(format!(
                        "local symbol for round {k} missing at station {q} on wall {w}"
                    )));
                }
                let st = &mut stations[q];
                let (_, right) = st.right_q.pop_front().unwrap();
                let (_, left) = st.left_q.pop_front().unwrap();
                let local = if local.is_some() {
                    st.local_q.pop_front().unwrap().1
                } else {
                    0
                };
                let out = right ^ left ^ local;
                st.next_round += 1;
                let conn = members[m].connection;
                if options.trace {
                    report.decodes.push(DecodeRow {
                        wall: w,
                        connection: conn,
                        kind: stations[q].kind,
                        round: k,
                        payload: out,
                    });
                }
                if healthy(k) && out != 0 {
                    return Err(SimError::BufferConfig(format!(
                        "parity conservation violated at station {q} for round {k}"
                    )));
                }
                if is_dest && sole_affected == Some(m) && k >= fail_round {
                    let usable = match members[m].zero_from {
                        Some(z) => k < z,
                        None => true,
                    };
                    if usable {
                        delivered
                            .entry((m, k))
                            .or_insert((w, DeliveredVia::Decoded, out));
                    }
                }
            }
        }

        // --- Resynchronization bookkeeping -------------------------------
        if let Some(sk) = skew {
            if report.realigned_wall.is_none() && w >= sk.wall + sk.rounds {
                let on_schedule = stations.iter().all(|s| {
                    s.next_round >= options.rounds || s.next_round + s.sched > w
                });
                if on_schedule {
                    report.realigned_wall = Some(w);
                }
            }
        }
    }

    // --- Report assembly ---------------------------------------------
    for (&(m, round), &(wall, via, payload)) in &delivered {
        report.rows.push(DeliveryRow {
            connection: members[m].connection,
            round,
            via,
            latency: wall - round,
            payload,
        });
    }
    report
        .rows
        .sort_by_key(|r| (r.connection, r.round, r.via));

    if affected.len() > 1 {
        report.defects.push(format!(
            "simultaneous primary failures on one trail: connections {:?}",
            affected
                .iter()
                .map(|&m| members[m].connection)
                .collect::<Vec<_>>()
        ));
    }
    if let Some(m) = sole_affected {
        let conn = members[m].connection;
        let mut missing = Vec::new();
        let mut first = None;
        for k in fail_round..options.rounds {
            match delivered.get(&(m, k)) {
                Some(&(wall, via, _)) if via != DeliveredVia::Primary => {
                    let f = first.get_or_insert(wall);
                    *f = (*f).min(wall);
                }
                Some(_) => {}
                None => missing.push(k),
            }
        }
        if let Some(first_wall) = first {
            report
                .recovery_rounds
                .insert(conn, first_wall - fail_round);
        }
        if !missing.is_empty() {
            report.defects.push(format!(
                "connection {conn} never received rounds {:?}{} after the failure",
                &missing[..missing.len().min(3)],
                if missing.len() > 3 {
                    format!(" (+{} more)", missing.len() - 3)
                } else {
                    String::new()
                }
            ));
        } else if first.is_none() && fail_round < options.rounds {
            report
                .defects
                .push(format!("connection {conn} never recovers"));
        }
    }
    Ok(report)
}

/// Passes a carrier symbol across all stations at one position: each
/// station first captures the incoming value for its four-way XOR, then
/// XORs its own contribution into the stream. Stations sharing a node are
/// crossed in canonical order (reverse order for the left-moving carrier),
/// matching the tie-breaking of the analytic delays.
#[allow(clippy::too_many_arguments)]
fn process_position<F>(
    stations: &mut [Station],
    stations_at: &BTreeMap<usize, Vec<usize>>,
    members: &[Member],
    contribution: &F,
    sym: &mut StreamSymbol,
    position: usize,
    rightward: bool,
    wall: u64,
    severed: bool,
    trace: bool,
    trace_rows: &mut Vec<TraceRow>,
    overflow: &mut Option<String>,
) where
    F: Fn(&[Member], &Station, u64) -> Option<u64>,
{
    if let Some(idxs) = stations_at.get(&position) {
        let order: Vec<usize> = if rightward {
            idxs.clone()
        } else {
            idxs.iter().rev().copied().collect()
        };
        for q in order {
            let (cap, value) = {
                let st = &stations[q];
                (
                    if rightward { st.cap_left } else { st.cap_right },
                    (sym.round, sym.payload),
                )
            };
            let st = &mut stations[q];
            let queue = if rightward {
                &mut st.left_q
            } else {
                &mut st.right_q
            };
            if !(severed && queue.len() >= cap) {
                queue.push_back(value);
            }
            if queue.len() > cap {
                *overflow = Some(format!(
                    "{} buffer of station {q} overflowed",
                    if rightward { "left" } else { "right" }
                ));
            }
            if let Some(c) = contribution(members, &stations[q], sym.round) {
                sym.payload ^= c;
            }
        }
    }
    if trace {
        trace_rows.push(TraceRow {
            wall,
            position,
            rightward,
            round: sym.round,
            payload: sym.payload,
            header: sym.header,
        });
    }
}

/// Recomputes rounds-to-recovery per affected connection from a report's
/// delivery log, independently of the engine's own bookkeeping.
pub fn measure_recovery(
    report: &SimReport,
    failure: &FailureEvent,
) -> Result<BTreeMap<usize, u64>, SimError> {
    if !report.defects.is_empty() {
        return Err(SimError::Defect(report.defects.join("; ")));
    }
    let mut recovery = BTreeMap::new();
    let mut by_conn: BTreeMap<usize, Vec<&DeliveryRow>> = BTreeMap::new();
    for row in &report.rows {
        by_conn.entry(row.connection).or_default().push(row);
    }
    for (conn, rows) in by_conn {
        let substitutes: Vec<&&DeliveryRow> = rows
            .iter()
            .filter(|r| r.via != DeliveredVia::Primary)
            .collect();
        if substitutes.is_empty() {
            continue;
        }
        // Every post-failure round must be present exactly once.
        let horizon = rows.iter().map(|r| r.round).max().unwrap() + 1;
        let mut seen = BTreeSet::new();
        for r in &rows {
            if !seen.insert(r.round) {
                return Err(SimError::Defect(format!(
                    "connection {conn} delivered round {} twice",
                    r.round
                )));
            }
        }
        for k in failure.round..horizon {
            if !seen.contains(&k) {
                return Err(SimError::Defect(format!(
                    "connection {conn} never received round {k}"
                )));
            }
        }
        let first = substitutes
            .iter()
            .map(|r| r.round + r.latency)
            .min()
            .unwrap();
        recovery.insert(conn, first - failure.round);
    }
    Ok(recovery)
}

/// Traffic model of a scenario file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DemandSpec {
    Uniform,
    Gravity(usize),
    File(String),
}

/// A parsed simulation scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// `cost239`, `nsfnet`, or a topology file path.
    pub topology: String,
    pub network: crate::timing::NetworkKind,
    pub demands: DemandSpec,
    pub wavelengths: Option<usize>,
    pub length_limit: Option<f64>,
    pub partition: usize,
    pub seed: u64,
    pub tick_ms: f64,
    pub rounds: u64,
    /// Coding group whose trails are simulated.
    pub group: usize,
    pub traffic_seeds: BTreeMap<usize, u64>,
    pub failure: Option<FailureEvent>,
    pub mode: SimMode,
}

/// Parses the scenario text format: one `key value...` directive per line,
/// `#` comments. Keys: `topology`, `network`, `demands`, `wavelengths`,
/// `length-limit`, `partition`, `seed`, `tick`, `rounds`, `trail`
/// (required), `traffic <connection> <seed>`, `fail <span> <round>
/// [primary-only|span]`, `mode proactive|two_tier`.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, SimError> {
    let mut spec = ScenarioSpec {
        topology: "cost239".into(),
        network: crate::timing::NetworkKind::Opaque,
        demands: DemandSpec::Uniform,
        wavelengths: None,
        length_limit: None,
        partition: 20,
        seed: 1,
        tick_ms: 0.01,
        rounds: 100,
        group: usize::MAX,
        traffic_seeds: BTreeMap::new(),
        failure: None,
        mode: SimMode::Proactive,
    };
    let mut saw_trail = false;
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let err = |msg: String| SimError::Scenario { line, msg };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut it = content.split_whitespace();
        let key = it.next().unwrap();
        let rest: Vec<&str> = it.collect();
        let one = |rest: &[&str]| -> Result<String, SimError> {
            if rest.len() == 1 {
                Ok(rest[0].to_string())
            } else {
                Err(err(format!("`{key}` takes exactly one value")))
            }
        };
        match key {
            "topology" => spec.topology = one(&rest)?,
            "network" => {
                spec.network = match one(&rest)?.as_str() {
                    "opaque" => crate::timing::NetworkKind::Opaque,
                    "transparent" => crate::timing::NetworkKind::Transparent,
                    other => return Err(err(format!("unknown network `{other}`"))),
                }
            }
            "demands" => {
                spec.demands = match rest.as_slice() {
                    ["uniform"] => DemandSpec::Uniform,
                    ["gravity", n] => DemandSpec::Gravity(
                        n.parse().map_err(|_| err(format!("bad count `{n}`")))?,
                    ),
                    [path] => DemandSpec::File(path.to_string()),
                    _ => return Err(err("`demands` takes one model".into())),
                }
            }
            "wavelengths" => {
                spec.wavelengths = Some(
                    one(&rest)?
                        .parse()
                        .map_err(|_| err("bad wavelength count".into()))?,
                )
            }
            "length-limit" => {
                spec.length_limit = Some(
                    one(&rest)?
                        .parse()
                        .map_err(|_| err("bad length limit".into()))?,
                )
            }
            "partition" => {
                spec.partition = one(&rest)?
                    .parse()
                    .map_err(|_| err("bad partition size".into()))?
            }
            "seed" => {
                spec.seed = one(&rest)?
                    .parse()
                    .map_err(|_| err("bad seed".into()))?
            }
            "tick" => {
                spec.tick_ms = one(&rest)?
                    .parse()
                    .map_err(|_| err("bad tick".into()))?;
                if !(spec.tick_ms > 0.0) {
                    return Err(err("tick must be positive".into()));
                }
            }
            "rounds" => {
                spec.rounds = one(&rest)?
                    .parse()
                    .map_err(|_| err("bad round count".into()))?
            }
            "trail" => {
                spec.group = one(&rest)?
                    .parse()
                    .map_err(|_| err("bad group id".into()))?;
                saw_trail = true;
            }
            "traffic" => match rest.as_slice() {
                [conn, seed] => {
                    let c = conn
                        .parse()
                        .map_err(|_| err(format!("bad connection `{conn}`")))?;
                    let s = seed
                        .parse()
                        .map_err(|_| err(format!("bad seed `{seed}`")))?;
                    spec.traffic_seeds.insert(c, s);
                }
                _ => return Err(err("`traffic` takes connection and seed".into())),
            },
            "fail" => {
                let (span, round, scope) = match rest.as_slice() {
                    [s, r] => (s, r, FailureScope::PrimaryOnly),
                    [s, r, "primary-only"] | [s, r, "primary"] => {
                        (s, r, FailureScope::PrimaryOnly)
                    }
                    [s, r, "span"] => (s, r, FailureScope::Span),
                    [_, _, other] => {
                        return Err(err(format!("unknown failure scope `{other}`")))
                    }
                    _ => return Err(err("`fail` takes span and round".into())),
                };
                spec.failure = Some(FailureEvent {
                    span: span
                        .parse()
                        .map_err(|_| err(format!("bad span `{span}`")))?,
                    round: round
                        .parse()
                        .map_err(|_| err(format!("bad round `{round}`")))?,
                    scope,
                });
            }
            "mode" => {
                spec.mode = match one(&rest)?.as_str() {
                    "proactive" => SimMode::Proactive,
                    "two_tier" => SimMode::TwoTier,
                    other => return Err(err(format!("unknown mode `{other}`"))),
                }
            }
            other => return Err(err(format!("unknown directive `{other}`"))),
        }
    }
    if !saw_trail {
        return Err(SimError::Scenario {
            line: 0,
            msg: "missing required `trail <group-id>` directive".into(),
        });
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpp::EndNode;
    use crate::timing::{rt_cpp1, RtInputs};
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Unit-speed, zero-processing parameters: km are ms are (at tick 1)
    /// rounds.
    fn unit_params() -> TimingParams {
        TimingParams {
            m_ms: 0.0,
            x_ms: 1.0,
            f_ms: 10.0,
            speed_ms_per_km: 1.0,
            kind: crate::timing::NetworkKind::Opaque,
        }
    }

    /// Builds a trail from integer segment kms and end nodes.
    fn trail(segments_km: &[u32], ends: &[(usize, EndKind, usize)]) -> LinearTrail {
        let nodes: Vec<usize> = (0..=segments_km.len()).collect();
        let spans: Vec<usize> = (0..segments_km.len()).collect();
        let mut cum_km = vec![0.0];
        for &seg in segments_km {
            cum_km.push(cum_km.last().unwrap() + seg as f64);
        }
        let mut end_nodes: Vec<EndNode> = ends
            .iter()
            .map(|&(connection, kind, position)| EndNode {
                connection,
                kind,
                position,
            })
            .collect();
        end_nodes.sort_by_key(|e| (e.position, e.connection, e.kind));
        LinearTrail {
            nodes,
            spans,
            cum_km,
            end_nodes,
        }
    }

    /// A primary route for tests: two fake spans, never on the trail, with
    /// the given total length.
    fn fake_primary(connection: usize, length_km: f64) -> RoutedPath {
        RoutedPath {
            connection,
            nodes: vec![900 + 3 * connection, 901 + 3 * connection, 902 + 3 * connection],
            spans: vec![9000 + 2 * connection, 9001 + 2 * connection],
            length_km,
        }
    }

    /// Expected traffic stream of a connection under the default seed.
    fn traffic(connection: usize, rounds: u64) -> Vec<u64> {
        let mut rng = ChaCha12Rng::seed_from_u64(1000 + connection as u64);
        (0..rounds).map(|_| rng.next_u64()).collect()
    }

    /// Three chained connections covering a four-span trail.
    fn ladder() -> (LinearTrail, Vec<RoutedPath>) {
        let t = trail(
            &[1, 1, 1, 1],
            &[
                (0, EndKind::Source, 0),
                (0, EndKind::Destination, 2),
                (1, EndKind::Source, 1),
                (1, EndKind::Destination, 3),
                (2, EndKind::Source, 2),
                (2, EndKind::Destination, 4),
            ],
        );
        let primaries = vec![
            fake_primary(0, 2.0),
            fake_primary(1, 2.0),
            fake_primary(2, 2.0),
        ];
        (t, primaries)
    }

    #[test]
    fn healthy_trail_delivers_primaries_and_conserves_parity() {
        let (t, primaries) = ladder();
        let p = unit_params();
        let timing = buffering_delays(&t, &p);
        let setup = SimSetup {
            trail: &t,
            timing: &timing,
            primaries: &primaries,
            params: &p,
            tick_ms: 1.0,
        };
        let options = SimOptions {
            rounds: 30,
            trace: true,
            ..SimOptions::default()
        };
        let report = simulate(&setup, &options).unwrap();
        assert!(report.defects.is_empty());
        assert_eq!(report.rows.len(), 3 * 30);
        for row in &report.rows {
            assert_eq!(row.via, DeliveredVia::Primary);
            assert_eq!(row.latency, 0);
            assert_eq!(row.payload, traffic(row.connection, 30)[row.round as usize]);
        }
        // Parity conservation: every four-way XOR output is zero.
        assert!(!report.decodes.is_empty());
        assert!(report.decodes.iter().all(|d| d.payload == 0));
        // Round-number headers are dropped after the warm-up window.
        assert!(report
            .trace
            .iter()
            .all(|r| r.header == (r.round < report.headers_dropped_wall)));
        assert!(report.trace.iter().any(|r| !r.header));
    }

    #[test]
    fn carrier_ladder_matches_direct_recomputation() {
        // Independent oracle: the carrier leaving position p carries the
        // XOR of all contributions injected at positions before it (in
        // sweep order). Recompute every station output for 20 rounds.
        let (t, primaries) = ladder();
        let p = unit_params();
        let timing = buffering_delays(&t, &p);
        let setup = SimSetup {
            trail: &t,
            timing: &timing,
            primaries: &primaries,
            params: &p,
            tick_ms: 1.0,
        };
        let options = SimOptions {
            rounds: 20,
            trace: true,
            ..SimOptions::default()
        };
        let report = simulate(&setup, &options).unwrap();
        let streams: Vec<Vec<u64>> = (0..3).map(|c| traffic(c, 20)).collect();
        // Healthy destinations contribute the same payload as sources.
        let contribution = |e: &EndNode, k: usize| streams[e.connection][k];
        for row in &report.trace {
            let expected = t
                .end_nodes
                .iter()
                .filter(|e| {
                    if row.rightward {
                        e.position <= row.position
                    } else {
                        e.position >= row.position
                    }
                })
                .fold(0u64, |acc, e| acc ^ contribution(e, row.round as usize));
            assert_eq!(
                row.payload, expected,
                "carrier mismatch at position {} (rightward {}) round {}",
                row.position, row.rightward, row.round
            );
        }
        // Arrival walls follow the span geometry exactly.
        for row in &report.trace {
            let offset = if row.rightward {
                row.position as u64
            } else {
                (t.nodes.len() - 1 - row.position) as u64
            };
            assert_eq!(row.wall, row.round + offset);
        }
    }

    #[test]
    fn single_connection_recovery_matches_the_formula() {
        // One connection, spans of 2 and 3 km at 1 ms/km with 1 ms node
        // processing and 1 ms ticks: each span takes km + 1 rounds. The
        // primary has the same length as the trail segment, so recovery
        // must land exactly on ceil((d_sd + h_b * M) / tick) with no
        // synchronization wait.
        let t = trail(
            &[2, 3],
            &[(0, EndKind::Source, 0), (0, EndKind::Destination, 2)],
        );
        let p = TimingParams {
            m_ms: 1.0,
            ..unit_params()
        };
        let primaries = vec![fake_primary(0, 5.0)];
        let timing = buffering_delays(&t, &p);
        let setup = SimSetup {
            trail: &t,
            timing: &timing,
            primaries: &primaries,
            params: &p,
            tick_ms: 1.0,
        };
        let fail = FailureEvent {
            span: primaries[0].spans[0],
            round: 10,
            scope: FailureScope::PrimaryOnly,
        };
        let options = SimOptions {
            rounds: 30,
            failure: Some(fail),
            ..SimOptions::default()
        };
        let report = simulate(&setup, &options).unwrap();
        assert!(report.defects.is_empty());
        let stream = traffic(0, 30);
        for row in &report.rows {
            if row.round < 10 {
                assert_eq!(row.via, DeliveredVia::Primary);
            } else {
                assert_eq!(row.via, DeliveredVia::Decoded);
                assert_eq!(row.payload, stream[row.round as usize], "bit-exact decode");
            }
        }
        let formula = rt_cpp1(
            &RtInputs {
                d_sd_ms: primaries[0].length_km * p.speed_ms_per_km,
                h_b: 2,
                h_is: 0,
                sync_ms: 0.0,
            },
            &p,
        );
        let expected = (formula / 1.0).ceil() as u64; // 5 + 2*1 = 7 rounds
        assert_eq!(report.recovery_rounds[&0], expected);
        let measured = measure_recovery(&report, &fail).unwrap();
        assert_eq!(measured, report.recovery_rounds);
    }

    /// Random self-contained trail: segments drawn until they cover every
    /// span, unit metric, fake primaries as long as each segment.
    fn random_trail(rng: &mut ChaCha12Rng) -> (LinearTrail, Vec<RoutedPath>) {
        loop {
            let hops = rng.gen_range(2..=8usize);
            let segments: Vec<u32> = (0..hops).map(|_| rng.gen_range(1..=4)).collect();
            let conns = rng.gen_range(1..=4.min(hops));
            let mut covered = vec![false; hops];
            let mut ends = Vec::new();
            let mut lens = Vec::new();
            for c in 0..conns {
                let a = rng.gen_range(0..hops);
                let b = rng.gen_range(a + 1..=hops);
                for cover in covered.iter_mut().take(b).skip(a) {
                    *cover = true;
                }
                let (s, d) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
                ends.push((c, EndKind::Source, s));
                ends.push((c, EndKind::Destination, d));
                lens.push(segments[a..b].iter().map(|&k| k as f64).sum());
            }
            if !covered.iter().all(|&c| c) {
                continue;
            }
            let primaries = (0..conns).map(|c| fake_primary(c, lens[c])).collect();
            return (trail(&segments, &ends), primaries);
        }
    }

    #[test]
    fn exactness_holds_across_random_trails_and_failures() {
        let mut rng = ChaCha12Rng::seed_from_u64(421);
        let p = unit_params();
        for case in 0..40 {
            let (t, primaries) = random_trail(&mut rng);
            let timing = buffering_delays(&t, &p);
            let setup = SimSetup {
                trail: &t,
                timing: &timing,
                primaries: &primaries,
                params: &p,
                tick_ms: 1.0,
            };
            for conn in 0..primaries.len() {
                for &span in &primaries[conn].spans {
                    let fail = FailureEvent {
                        span,
                        round: rng.gen_range(1..=20),
                        scope: FailureScope::PrimaryOnly,
                    };
                    let options = SimOptions {
                        rounds: 40,
                        failure: Some(fail),
                        ..SimOptions::default()
                    };
                    let report = simulate(&setup, &options)
                        .unwrap_or_else(|e| panic!("case {case}: {e}"));
                    assert!(report.defects.is_empty(), "case {case}: {:?}", report.defects);
                    let stream = traffic(conn, 40);
                    for row in report.rows.iter().filter(|r| r.connection == conn) {
                        if row.round >= fail.round {
                            assert_eq!(row.via, DeliveredVia::Decoded);
                            assert_eq!(row.payload, stream[row.round as usize]);
                        }
                    }
                    // Unaffected connections never miss a beat.
                    for row in report.rows.iter().filter(|r| r.connection != conn) {
                        assert_eq!(row.via, DeliveredVia::Primary);
                        assert_eq!(row.latency, 0);
                    }
                    // Latency agrees with the analytic worst case for this
                    // end node (primary length equals segment length here).
                    let e = timing
                        .end_nodes
                        .iter()
                        .find(|e| e.connection == conn && e.kind == EndKind::Destination)
                        .unwrap();
                    let hops = t
                        .end_nodes
                        .iter()
                        .filter(|x| x.connection == conn)
                        .map(|x| x.position)
                        .fold((usize::MAX, 0), |(lo, hi), p| (lo.min(p), hi.max(p)));
                    let formula = rt_cpp1(
                        &RtInputs {
                            d_sd_ms: primaries[conn].length_km * p.speed_ms_per_km,
                            h_b: hops.1 - hops.0,
                            h_is: 0,
                            sync_ms: e.sync_ms(),
                        },
                        &p,
                    );
                    let expected = formula.ceil() as i64;
                    let measured = measure_recovery(&report, &fail).unwrap()[&conn] as i64;
                    assert!(
                        (measured - expected).abs() <= 1,
                        "case {case}: measured {measured} vs formula {expected}"
                    );
                }
            }
        }
    }

    #[test]
    fn two_tier_is_never_slower_and_uses_the_ambulance() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let p = unit_params();
        for _ in 0..50 {
            let (t, primaries) = random_trail(&mut rng);
            let timing = buffering_delays(&t, &p);
            let setup = SimSetup {
                trail: &t,
                timing: &timing,
                primaries: &primaries,
                params: &p,
                tick_ms: 1.0,
            };
            let conn = rng.gen_range(0..primaries.len());
            let fail = FailureEvent {
                span: primaries[conn].spans[0],
                round: rng.gen_range(1..=15),
                scope: FailureScope::PrimaryOnly,
            };
            let run = |mode| {
                let options = SimOptions {
                    rounds: 60,
                    mode,
                    failure: Some(fail),
                    ..SimOptions::default()
                };
                simulate(&setup, &options).unwrap()
            };
            let proactive = run(SimMode::Proactive);
            let two_tier = run(SimMode::TwoTier);
            assert!(proactive.defects.is_empty() && two_tier.defects.is_empty());
            assert!(
                two_tier.recovery_rounds[&conn] <= proactive.recovery_rounds[&conn],
                "two-tier must never be slower"
            );
            let stream = traffic(conn, 60);
            for row in two_tier.rows.iter().filter(|r| r.connection == conn) {
                if row.round >= fail.round {
                    assert_eq!(row.payload, stream[row.round as usize]);
                }
            }
        }
        // A tiny segment buried under heavy debts: the flagged resend that
        // skips the buffers must win by a wide margin.
        let t = trail(
            &[1, 9, 9, 9],
            &[
                (0, EndKind::Source, 0),
                (0, EndKind::Destination, 1),
                (1, EndKind::Source, 1),
                (1, EndKind::Destination, 2),
                (2, EndKind::Source, 2),
                (2, EndKind::Destination, 3),
                (3, EndKind::Source, 3),
                (3, EndKind::Destination, 4),
            ],
        );
        let primaries = vec![
            fake_primary(0, 1.0),
            fake_primary(1, 9.0),
            fake_primary(2, 9.0),
            fake_primary(3, 9.0),
        ];
        let timing = buffering_delays(&t, &p);
        let setup = SimSetup {
            trail: &t,
            timing: &timing,
            primaries: &primaries,
            params: &p,
            tick_ms: 1.0,
        };
        let fail = FailureEvent {
            span: primaries[0].spans[0],
            round: 5,
            scope: FailureScope::PrimaryOnly,
        };
        let run = |mode| {
            let options = SimOptions {
                rounds: 80,
                mode,
                failure: Some(fail),
                ..SimOptions::default()
            };
            simulate(&setup, &options).unwrap()
        };
        let proactive = run(SimMode::Proactive);
        let two_tier = run(SimMode::TwoTier);
        // Proactive waits for the debts (1 + 27 rounds); the ambulance
        // takes detection + two segment traversals (1 + 2 rounds).
        assert_eq!(proactive.recovery_rounds[&0], 28);
        assert_eq!(two_tier.recovery_rounds[&0], 3);
        assert!(two_tier
            .rows
            .iter()
            .any(|r| r.via == DeliveredVia::Ambulance));
    }

    #[test]
    fn skew_realigns_within_depth_or_errors() {
        // Two chained connections: every station has buffer depth 1.
        let t = trail(
            &[1, 1],
            &[
                (0, EndKind::Source, 0),
                (0, EndKind::Destination, 1),
                (1, EndKind::Source, 1),
                (1, EndKind::Destination, 2),
            ],
        );
        let primaries = vec![fake_primary(0, 1.0), fake_primary(1, 1.0)];
        let p = unit_params();
        let timing = buffering_delays(&t, &p);
        let setup = SimSetup {
            trail: &t,
            timing: &timing,
            primaries: &primaries,
            params: &p,
            tick_ms: 1.0,
        };
        let fail = FailureEvent {
            span: primaries[0].spans[0],
            round: 5,
            scope: FailureScope::PrimaryOnly,
        };
        let base = SimOptions {
            rounds: 30,
            failure: Some(fail),
            ..SimOptions::default()
        };
        let clean = simulate(&setup, &base).unwrap();
        let skewed = simulate(
            &setup,
            &SimOptions {
                skew: Some(SkewEvent {
                    connection: 0,
                    kind: EndKind::Destination,
                    input: SkewInput::Left,
                    wall: 12,
                    rounds: 1,
                }),
                ..base.clone()
            },
        )
        .unwrap();
        // Realigned no later than the skew end plus the buffer depth.
        let realigned = skewed.realigned_wall.unwrap();
        assert!(realigned <= 12 + 1 + 1, "realigned at {realigned}");
        // Identical payloads everywhere; identical timing outside the
        // disturbance window.
        assert_eq!(clean.rows.len(), skewed.rows.len());
        for (c, s) in clean.rows.iter().zip(&skewed.rows) {
            assert_eq!((c.connection, c.round, c.via, c.payload), (
                s.connection,
                s.round,
                s.via,
                s.payload
            ));
            let delivered = s.round + s.latency;
            if !(12..=realigned).contains(&delivered) {
                assert_eq!(c.latency, s.latency);
            } else {
                assert!(s.latency - c.latency <= 1);
            }
        }
        // A skew deeper than the buffers must surface as an error.
        let too_deep = simulate(
            &setup,
            &SimOptions {
                skew: Some(SkewEvent {
                    connection: 0,
                    kind: EndKind::Destination,
                    input: SkewInput::Left,
                    wall: 12,
                    rounds: 4,
                }),
                ..base
            },
        );
        assert!(matches!(too_deep, Err(SimError::Skew(_))));
    }

    #[test]
    fn severed_trail_stalls_without_corruption() {
        // Connection 0's primary rides a span that is also a trail hop in
        // connection 1's segment. A span-scope failure cuts both: the
        // proactive decode starves (reported, never garbage) while the
        // two-tier ambulance still gets through.
        let mut t = trail(
            &[1, 1, 1],
            &[
                (0, EndKind::Source, 0),
                (0, EndKind::Destination, 1),
                (1, EndKind::Source, 1),
                (1, EndKind::Destination, 3),
            ],
        );
        t.spans = vec![50, 51, 52];
        let mut primaries = vec![fake_primary(0, 1.0), fake_primary(1, 2.0)];
        primaries[0].spans = vec![52, 9000]; // rides trail span 52
        let p = unit_params();
        let timing = buffering_delays(&t, &p);
        let setup = SimSetup {
            trail: &t,
            timing: &timing,
            primaries: &primaries,
            params: &p,
            tick_ms: 1.0,
        };
        let fail = FailureEvent {
            span: 52,
            round: 8,
            scope: FailureScope::Span,
        };
        let proactive = simulate(
            &setup,
            &SimOptions {
                rounds: 25,
                failure: Some(fail),
                ..SimOptions::default()
            },
        )
        .unwrap();
        assert!(!proactive.defects.is_empty(), "starvation must be reported");
        assert!(matches!(
            measure_recovery(&proactive, &fail),
            Err(SimError::Defect(_))
        ));
        let stream = traffic(0, 25);
        for row in proactive.rows.iter().filter(|r| r.connection == 0) {
            assert_eq!(row.payload, stream[row.round as usize], "never garbage");
        }
        let two_tier = simulate(
            &setup,
            &SimOptions {
                rounds: 25,
                mode: SimMode::TwoTier,
                failure: Some(fail),
                ..SimOptions::default()
            },
        )
        .unwrap();
        assert!(two_tier.defects.is_empty());
        assert!(two_tier
            .rows
            .iter()
            .filter(|r| r.connection == 0 && r.round >= 8)
            .all(|r| r.via == DeliveredVia::Ambulance
                && r.payload == stream[r.round as usize]));
    }

    #[test]
    fn inconsistent_buffer_configuration_is_rejected() {
        let (t, primaries) = ladder();
        let p = unit_params();
        let mut timing = buffering_delays(&t, &p);
        timing.end_nodes[2].b2_ms += 5.0;
        let setup = SimSetup {
            trail: &t,
            timing: &timing,
            primaries: &primaries,
            params: &p,
            tick_ms: 1.0,
        };
        let err = simulate(&setup, &SimOptions::default()).unwrap_err();
        assert!(matches!(err, SimError::BufferConfig(_)));
        assert!(err.to_string().contains("buffer"));

        // Non-tick-exact geometry: the analytic delays quantize below the
        // per-span round counts, so they are rejected, while the
        // round-quantized recomputation is accepted.
        let warped = trail(
            &[1, 1],
            &[
                (0, EndKind::Source, 0),
                (0, EndKind::Destination, 2),
                (1, EndKind::Source, 0),
                (1, EndKind::Destination, 2),
            ],
        );
        let mut warped = warped;
        warped.cum_km = vec![0.0, 0.4, 0.8];
        let prim = vec![fake_primary(0, 0.8), fake_primary(1, 0.8)];
        let analytic = buffering_delays(&warped, &p);
        let bad = SimSetup {
            trail: &warped,
            timing: &analytic,
            primaries: &prim,
            params: &p,
            tick_ms: 1.0,
        };
        assert!(matches!(
            simulate(&bad, &SimOptions::default()),
            Err(SimError::BufferConfig(_))
        ));
        let quantized = quantized_timing(&warped, &p, 1.0);
        let good = SimSetup {
            trail: &warped,
            timing: &quantized,
            primaries: &prim,
            params: &p,
            tick_ms: 1.0,
        };
        assert!(simulate(&good, &SimOptions::default()).is_ok());
    }

    #[test]
    fn uncovered_or_unpaired_trails_are_rejected() {
        // Span 1 belongs to no segment: the carriers cannot be scheduled.
        let t = trail(
            &[1, 1, 1],
            &[
                (0, EndKind::Source, 0),
                (0, EndKind::Destination, 1),
                (1, EndKind::Source, 2),
                (1, EndKind::Destination, 3),
            ],
        );
        let primaries = vec![fake_primary(0, 1.0), fake_primary(1, 1.0)];
        let p = unit_params();
        let timing = buffering_delays(&t, &p);
        let setup = SimSetup {
            trail: &t,
            timing: &timing,
            primaries: &primaries,
            params: &p,
            tick_ms: 1.0,
        };
        let err = simulate(&setup, &SimOptions::default()).unwrap_err();
        assert!(err.to_string().contains("covered"));

        // An end node without its partner cannot cancel.
        let t2 = trail(
            &[1, 1],
            &[
                (0, EndKind::Source, 0),
                (0, EndKind::Destination, 2),
                (1, EndKind::Source, 1),
            ],
        );
        let timing2 = buffering_delays(&t2, &p);
        let setup2 = SimSetup {
            trail: &t2,
            timing: &timing2,
            primaries: &primaries,
            params: &p,
            tick_ms: 1.0,
        };
        let err2 = simulate(&setup2, &SimOptions::default()).unwrap_err();
        assert!(err2.to_string().contains("pair"));
    }

    #[test]
    fn reports_are_deterministic() {
        let (t, primaries) = ladder();
        let p = unit_params();
        let timing = buffering_delays(&t, &p);
        let setup = SimSetup {
            trail: &t,
            timing: &timing,
            primaries: &primaries,
            params: &p,
            tick_ms: 1.0,
        };
        let options = SimOptions {
            rounds: 40,
            mode: SimMode::TwoTier,
            failure: Some(FailureEvent {
                span: primaries[1].spans[1],
                round: 7,
                scope: FailureScope::PrimaryOnly,
            }),
            trace: true,
            ..SimOptions::default()
        };
        let a = simulate(&setup, &options).unwrap();
        let b = simulate(&setup, &options).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with("connection,round,via,latency\n"));
    }

    #[test]
    fn scenario_text_parses_and_validates() {
        let text = "\
# comment
topology nsfnet
network transparent
demands gravity 150
length-limit 6000
partition 12
seed 7
tick 0.5
rounds 250
trail 3
traffic 0 42
traffic 5 43
fail 17 90 span
mode two_tier
";
        let spec = parse_scenario(text).unwrap();
        assert_eq!(spec.topology, "nsfnet");
        assert_eq!(spec.network, crate::timing::NetworkKind::Transparent);
        assert_eq!(spec.demands, DemandSpec::Gravity(150));
        assert_eq!(spec.length_limit, Some(6000.0));
        assert_eq!(spec.partition, 12);
        assert_eq!(spec.seed, 7);
        assert_eq!(spec.tick_ms, 0.5);
        assert_eq!(spec.rounds, 250);
        assert_eq!(spec.group, 3);
        assert_eq!(spec.traffic_seeds[&0], 42);
        assert_eq!(spec.traffic_seeds[&5], 43);
        assert_eq!(
            spec.failure,
            Some(FailureEvent {
                span: 17,
                round: 90,
                scope: FailureScope::Span
            })
        );
        assert_eq!(spec.mode, SimMode::TwoTier);

        assert!(matches!(
            parse_scenario("rounds 10\n"),
            Err(SimError::Scenario { line: 0, .. })
        ));
        assert!(matches!(
            parse_scenario("trail 0\nbogus 1\n"),
            Err(SimError::Scenario { line: 2, .. })
        ));
        assert!(matches!(
            parse_scenario("trail 0\nfail 1\n"),
            Err(SimError::Scenario { line: 2, .. })
        ));
        let defaults = parse_scenario("trail 0\n").unwrap();
        assert_eq!(defaults.topology, "cost239");
        assert_eq!(defaults.partition, 20);
        assert_eq!(defaults.seed, 1);
        assert_eq!(defaults.mode, SimMode::Proactive);
    }
}
