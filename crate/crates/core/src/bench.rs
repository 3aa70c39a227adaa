//! Benchmark orchestration: runs the full planning pipeline — demand
//! partitioning, heuristic backup routing, exact wavelength assignment,
//! coded-group conversion — over several seeded repetitions and aggregates
//! the results into the spare-capacity / restoration-time comparison table.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::cpp::{convert, CodingGroup, CppError, CppOptions, CppPlan};
use crate::demand::{generate_gravity, generate_uniform, DemandError, DemandSet};
use crate::routing::{route_primaries, RoutedPath, RoutingError};
use crate::sim::{
    quantized_timing, simulate, span_round_counts, DemandSpec, FailureScope, ScenarioSpec,
    SimError, SimOptions, SimReport, SimSetup,
};
use crate::spp::{plan_spp, SppError, SppOptions};
use crate::timing::{
    sync_delays, worst_case_rt, NetworkKind, RtLine, SchemeWorst, TimingParams,
};
use crate::topology::{cost239, nsfnet, NetworkGraph, TopologyError};

/// Traffic model of a benchmark scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrafficKind {
    /// One demand per node pair.
    Uniform,
    /// Population-weighted sample of the given size.
    Gravity(usize),
    /// Demand file path.
    File(String),
}

/// Output format of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// A complete benchmark request.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// `cost239`, `nsfnet`, or a topology file path.
    pub topology: String,
    pub traffic: TrafficKind,
    pub network: NetworkKind,
    /// Spare wavelength count per group; `None` selects the minimum.
    pub wavelengths: Option<usize>,
    /// Coding group count; `None` mirrors the wavelength count.
    pub groups: Option<usize>,
    /// Backup length limit; `None` picks the topology default
    /// (4000 km / 6000 km for the shipped networks).
    pub length_limit_km: Option<f64>,
    /// Largest demand group solved as one model.
    pub partition_size: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Cross-connect times of the table columns.
    pub x_ms: Vec<f64>,
    /// Failure-detection time override.
    pub f_ms: Option<f64>,
    /// Node-processing time override.
    pub m_ms: Option<f64>,
    /// Propagation speed override (ms per km).
    pub prop_speed: Option<f64>,
    pub format: ReportFormat,
    /// Worker threads for concurrent repeats/groups; `None` keeps the
    /// process-wide default pool.
    pub workers: Option<usize>,
    /// Run one simulated failure per emitted coding group and assert
    /// bit-exact recovery.
    pub sim_smoke: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            topology: "cost239".into(),
            traffic: TrafficKind::Uniform,
            network: NetworkKind::Opaque,
            wavelengths: None,
            groups: None,
            length_limit_km: None,
            partition_size: 20,
            repeats: 10,
            seed: 1,
            x_ms: vec![0.5, 1.0, 5.0, 10.0],
            f_ms: None,
            m_ms: None,
            prop_speed: None,
            format: ReportFormat::Csv,
            workers: None,
            sim_smoke: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Spp(#[from] SppError),
    #[error(transparent)]
    Cpp(#[from] CppError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("report inconsistency: {0}")]
    Report(String),
}

/// One solved demand group of one repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub repeat: usize,
    pub group: usize,
    pub connections: usize,
    pub working_km: f64,
    pub spare_spp_km: f64,
    pub spare_cpp_km: f64,
    pub wavelengths: usize,
    pub coding_groups: usize,
    pub spp_optimal: bool,
    pub cpp_optimal: bool,
}

/// Aggregated view of one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSummary {
    /// Spare-capacity percentage, averaged over repeats.
    pub scap_mean: f64,
    /// Worst-case restoration time at each scenario X value, over the
    /// union of all repeats.
    pub rt_by_x: Vec<f64>,
    /// The restoration-time lines behind `rt_by_x` (connection relabeled
    /// to the global demand index).
    pub lines: Vec<RtLine>,
}

/// Solve bookkeeping across the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolverStats {
    pub groups_solved: usize,
    pub spp_suboptimal: usize,
    pub cpp_suboptimal: usize,
    /// Coding groups validated by a simulated failure.
    pub sim_validated: usize,
    /// Coding groups skipped by the smoke check (no self-contained trail).
    pub sim_skipped: usize,
}

/// Aggregated benchmark result.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub x_ms: Vec<f64>,
    pub cpp: SchemeSummary,
    pub spp1: SchemeSummary,
    pub spp2: SchemeSummary,
    pub rows: Vec<RawRow>,
    /// Some synchronization delays were non-linear-tree estimates.
    pub estimate: bool,
    pub stats: SolverStats,
}

/// Checks scenario invariants.
pub fn validate(scenario: &Scenario) -> Result<(), BenchError> {
    if scenario.repeats == 0 {
        return Err(BenchError::Scenario("repeats must be at least 1".into()));
    }
    if scenario.x_ms.is_empty() {
        return Err(BenchError::Scenario(
            "need at least one cross-connect time".into(),
        ));
    }
    if scenario.x_ms.iter().any(|&x| !(x > 0.0)) {
        return Err(BenchError::Scenario(
            "cross-connect times must be positive".into(),
        ));
    }
    if scenario.partition_size == 0 {
        return Err(BenchError::Scenario(
            "partition size must be positive".into(),
        ));
    }
    if let Some(f) = scenario.f_ms {
        if f < 0.0 {
            return Err(BenchError::Scenario(
                "failure-detection time must be non-negative".into(),
            ));
        }
    }
    if let Some(m) = scenario.m_ms {
        if m < 0.0 {
            return Err(BenchError::Scenario(
                "node-processing time must be non-negative".into(),
            ));
        }
    }
    if let Some(v) = scenario.prop_speed {
        if !(v > 0.0) {
            return Err(BenchError::Scenario(
                "propagation speed must be positive".into(),
            ));
        }
    }
    Ok(())
}

/// Loads a builtin topology by name, or parses the named file.
pub fn load_topology(name: &str) -> Result<NetworkGraph, BenchError> {
    match name {
        "cost239" => Ok(cost239()),
        "nsfnet" => Ok(nsfnet()),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| BenchError::Io(format!("{path}: {e}")))?;
            Ok(NetworkGraph::parse(&text)?)
        }
    }
}

/// Default backup length limit of a topology.
pub fn default_length_limit(topology: &str) -> f64 {
    match topology {
        "cost239" => 4000.0,
        "nsfnet" => 6000.0,
        _ => f64::INFINITY,
    }
}

/// Builds the demand set of a scenario.
pub fn resolve_demands(
    graph: &NetworkGraph,
    traffic: &TrafficKind,
    seed: u64,
) -> Result<DemandSet, BenchError> {
    match traffic {
        TrafficKind::Uniform => Ok(generate_uniform(graph)),
        TrafficKind::Gravity(count) => Ok(generate_gravity(graph, *count, seed)?),
        TrafficKind::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| BenchError::Io(format!("{path}: {e}")))?;
            Ok(DemandSet::parse(&text, graph)?)
        }
    }
}

/// Timing parameters of a scenario (X is carried separately by the lines).
fn scenario_params(scenario: &Scenario) -> TimingParams {
    let mut p = match scenario.network {
        NetworkKind::Opaque => TimingParams::opaque(scenario.x_ms[0]),
        NetworkKind::Transparent => TimingParams::transparent(scenario.x_ms[0]),
    };
    if let Some(f) = scenario.f_ms {
        p.f_ms = f;
    }
    if let Some(m) = scenario.m_ms {
        p.m_ms = m;
    }
    if let Some(v) = scenario.prop_speed {
        p.speed_ms_per_km = v;
    }
    p
}

/// Partition seed of one repeat: distinct per repeat, derived from the
/// scenario seed only.
fn partition_seed(seed: u64, repeat: usize) -> u64 {
    seed.wrapping_mul(10_000).wrapping_add(repeat as u64)
}

struct GroupOutcome {
    row: RawRow,
    cpp_lines: Vec<RtLine>,
    spp1_lines: Vec<RtLine>,
    spp2_lines: Vec<RtLine>,
    estimate: bool,
    sim_validated: usize,
    sim_skipped: usize,
}

/// Runs a scenario end to end.
pub fn run(scenario: &Scenario) -> Result<BenchReport, BenchError> {
    let graph = load_topology(&scenario.topology)?;
    let demands = resolve_demands(&graph, &scenario.traffic, scenario.seed)?;
    run_on(scenario, &graph, &demands)
}

/// Runs a scenario over an already-resolved graph and demand set.
pub fn run_on(
    scenario: &Scenario,
    graph: &NetworkGraph,
    demands: &DemandSet,
) -> Result<BenchReport, BenchError> {
    validate(scenario)?;
    if demands.is_empty() {
        return Err(BenchError::Scenario("no demands to protect".into()));
    }
    let params = scenario_params(scenario);
    let length_limit = scenario
        .length_limit_km
        .unwrap_or_else(|| default_length_limit(&scenario.topology));

    // All (repeat, demand-group) jobs up front; partitioning is the only
    // randomness and is seeded per repeat.
    let mut jobs = Vec::new();
    for repeat in 0..scenario.repeats {
        let partition = demands
            .partition(scenario.partition_size, partition_seed(scenario.seed, repeat))?;
        for (g, ids) in partition.groups.iter().enumerate() {
            jobs.push((repeat, g, ids.clone()));
        }
    }

    let solve_job = |(repeat, g, ids): &(usize, usize, Vec<usize>)| -> Result<GroupOutcome, BenchError> {
        let subset: Vec<crate::demand::Demand> =
            ids.iter().map(|&i| demands.demands()[i]).collect();
        let primaries = route_primaries(graph, &subset)?;
        let spp = plan_spp(
            graph,
            &primaries,
            &SppOptions {
                length_limit_km: length_limit,
                wavelengths: scenario.wavelengths,
                ..SppOptions::default()
            },
        )?;
        let cpp = convert(
            graph,
            &primaries,
            &spp,
            &CppOptions {
                groups: scenario.groups,
                ..CppOptions::default()
            },
        )?;
        let sync = sync_delays(&cpp, &params);
        let worst = worst_case_rt(&primaries, &spp.backups, &sync, &params);
        let relabel = |lines: &[RtLine]| -> Vec<RtLine> {
            lines
                .iter()
                .map(|l| RtLine {
                    connection: subset[l.connection].index,
                    ..*l
                })
                .collect()
        };
        let (sim_validated, sim_skipped) = if scenario.sim_smoke {
            smoke_check(&cpp, &primaries, &params)?
        } else {
            (0, 0)
        };
        Ok(GroupOutcome {
            row: RawRow {
                repeat: *repeat,
                group: *g,
                connections: subset.len(),
                working_km: spp.working_cost,
                spare_spp_km: spp.spare_cost,
                spare_cpp_km: cpp.spare_cost,
                wavelengths: spp.wavelength_count,
                coding_groups: cpp.group_count,
                spp_optimal: spp.optimal,
                cpp_optimal: cpp.optimal,
            },
            cpp_lines: relabel(&worst.cpp.lines),
            spp1_lines: relabel(&worst.spp1.lines),
            spp2_lines: relabel(&worst.spp2.lines),
            estimate: worst.estimate,
            sim_validated,
            sim_skipped,
        })
    };

    let outcomes: Result<Vec<GroupOutcome>, BenchError> = match scenario.workers {
        Some(n) => {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| BenchError::Scenario(format!("worker pool: {e}")))?;
            pool.install(|| jobs.par_iter().map(solve_job).collect())
        }
        None => {
            use rayon::prelude::*;
            jobs.par_iter().map(solve_job).collect()
        }
    };
    let outcomes = outcomes?;

    assemble_report(scenario, outcomes)
}

/// Folds the per-group outcomes into the final report and asserts its
/// invariants.
fn assemble_report(
    scenario: &Scenario,
    outcomes: Vec<GroupOutcome>,
) -> Result<BenchReport, BenchError> {
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut cpp_lines = Vec::new();
    let mut spp1_lines = Vec::new();
    let mut spp2_lines = Vec::new();
    let mut estimate = false;
    let mut stats = SolverStats::default();
    for o in outcomes {
        stats.groups_solved += 1;
        stats.spp_suboptimal += usize::from(!o.row.spp_optimal);
        stats.cpp_suboptimal += usize::from(!o.row.cpp_optimal);
        stats.sim_validated += o.sim_validated;
        stats.sim_skipped += o.sim_skipped;
        estimate |= o.estimate;
        rows.push(o.row);
        cpp_lines.extend(o.cpp_lines);
        spp1_lines.extend(o.spp1_lines);
        spp2_lines.extend(o.spp2_lines);
    }
    rows.sort_by_key(|r| (r.repeat, r.group));

    // SCaP: percentage per repeat (spare over working of the whole demand
    // set), then averaged across repeats.
    let (scap_spp, scap_cpp) = mean_scaps(&rows, scenario.repeats)?;

    let summarize = |lines: Vec<RtLine>| -> Result<SchemeSummary, BenchError> {
        if lines.is_empty() {
            return Err(BenchError::Report("no restoration-time lines".into()));
        }
        let worst = SchemeWorst { lines };
        let rt_by_x = scenario.x_ms.iter().map(|&x| worst.at(x).0).collect();
        Ok(SchemeSummary {
            scap_mean: 0.0,
            rt_by_x,
            lines: worst.lines,
        })
    };
    let mut cpp = summarize(cpp_lines)?;
    let mut spp1 = summarize(spp1_lines)?;
    let mut spp2 = summarize(spp2_lines)?;
    cpp.scap_mean = scap_cpp;
    spp1.scap_mean = scap_spp;
    spp2.scap_mean = scap_spp;

    let report = BenchReport {
        x_ms: scenario.x_ms.clone(),
        cpp,
        spp1,
        spp2,
        rows,
        estimate,
        stats,
    };
    check_report(&report)?;
    Ok(report)
}

/// Mean spare-capacity percentages recomputed from the raw rows.
fn mean_scaps(rows: &[RawRow], repeats: usize) -> Result<(f64, f64), BenchError> {
    let mut spare_spp = vec![0.0; repeats];
    let mut spare_cpp = vec![0.0; repeats];
    let mut working = vec![0.0; repeats];
    for r in rows {
        spare_spp[r.repeat] += r.spare_spp_km;
        spare_cpp[r.repeat] += r.spare_cpp_km;
        working[r.repeat] += r.working_km;
    }
    if working.iter().any(|&w| !(w > 0.0)) {
        return Err(BenchError::Report("a repeat has no working capacity".into()));
    }
    let mean = |spare: &[f64]| -> f64 {
        spare
            .iter()
            .zip(&working)
            .map(|(s, w)| 100.0 * s / w)
            .sum::<f64>()
            / repeats as f64
    };
    Ok((mean(&spare_spp), mean(&spare_cpp)))
}

/// Report invariants, asserted before any emission.
fn check_report(report: &BenchReport) -> Result<(), BenchError> {
    // Coded restoration does not involve the cross-connect time.
    if report.cpp.rt_by_x.windows(2).any(|w| w[0] != w[1]) {
        return Err(BenchError::Report(
            "coded restoration time varies with the cross-connect time".into(),
        ));
    }
    // Both shared rows carry the same spare capacity.
    if report.spp1.scap_mean != report.spp2.scap_mean {
        return Err(BenchError::Report(
            "shared-scheme spare capacities diverged".into(),
        ));
    }
    // Coding never saves spare relative to sharing.
    if report.cpp.scap_mean < report.spp1.scap_mean - 1e-9 {
        return Err(BenchError::Report(format!(
            "coded spare capacity {} undercuts shared {}",
            report.cpp.scap_mean, report.spp1.scap_mean
        )));
    }
    // The summary is recomputable from the raw rows.
    let repeats = report.rows.iter().map(|r| r.repeat).max().unwrap_or(0) + 1;
    let (scap_spp, scap_cpp) = mean_scaps(&report.rows, repeats)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
    if !close(scap_spp, report.spp1.scap_mean) || !close(scap_cpp, report.cpp.scap_mean) {
        return Err(BenchError::Report(
            "summary spare capacity does not match the raw rows".into(),
        ));
    }
    Ok(())
}

/// Simulates one failure per coding group of a plan and asserts bit-exact
/// recovery; returns (validated, skipped) group counts.
fn smoke_check(
    cpp: &CppPlan,
    primaries: &[RoutedPath],
    params: &TimingParams,
) -> Result<(usize, usize), BenchError> {
    let tick = 0.1;
    let mut validated = 0;
    let mut skipped = 0;
    for group in &cpp.groups {
        let Some(trail) = self_contained_trail(group) else {
            if !group.members.is_empty() {
                skipped += 1;
            }
            continue;
        };
        let timing = quantized_timing(trail, params, tick);
        let conn = trail.end_nodes[0].connection;
        let failure = crate::sim::FailureEvent {
            span: primaries[conn].spans[0],
            round: 3,
            scope: FailureScope::PrimaryOnly,
        };
        let rounds = 24;
        let report = simulate(
            &SimSetup {
                trail,
                timing: &timing,
                primaries,
                params,
                tick_ms: tick,
            },
            &SimOptions {
                rounds,
                failure: Some(failure),
                ..SimOptions::default()
            },
        )?;
        if !report.defects.is_empty() {
            return Err(BenchError::Report(format!(
                "simulated failure left defects: {}",
                report.defects.join("; ")
            )));
        }
        // Bit-exact decode of every post-failure round.
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1000 + conn as u64);
        let stream: Vec<u64> = (0..rounds).map(|_| rng.next_u64()).collect();
        for row in report.rows.iter().filter(|r| r.connection == conn) {
            if row.payload != stream[row.round as usize] {
                return Err(BenchError::Report(format!(
                    "decoded payload of connection {conn} round {} is wrong",
                    row.round
                )));
            }
        }
        // Recovery equals the analytic schedule: segment rounds plus the
        // larger quantized buffering delay at the receiving end.
        let span_r = span_round_counts(trail, params, tick);
        let (mut src_pos, mut dst_pos) = (None, None);
        for e in &trail.end_nodes {
            if e.connection == conn {
                match e.kind {
                    crate::cpp::EndKind::Source => src_pos = Some(e.position),
                    crate::cpp::EndKind::Destination => dst_pos = Some(e.position),
                }
            }
        }
        let (a, b) = (src_pos.unwrap(), dst_pos.unwrap());
        let seg: u64 = span_r[a.min(b)..a.max(b)].iter().sum();
        let dest = timing
            .end_nodes
            .iter()
            .find(|e| e.connection == conn && e.kind == crate::cpp::EndKind::Destination)
            .unwrap();
        let wait = ((dest.b2_ms.max(dest.b3_ms)) / tick).round() as u64;
        let expected = seg + wait;
        match report.recovery_rounds.get(&conn) {
            Some(&got) if got == expected => validated += 1,
            Some(&got) => {
                return Err(BenchError::Report(format!(
                    "recovery of connection {conn} took {got} rounds, schedule says {expected}"
                )))
            }
            None => {
                return Err(BenchError::Report(format!(
                    "connection {conn} did not recover in the smoke run"
                )))
            }
        }
    }
    Ok((validated, skipped))
}

/// First trail of a group on which every connection has both end nodes
/// (the only kind the stream simulation accepts).
fn self_contained_trail(group: &CodingGroup) -> Option<&crate::cpp::LinearTrail> {
    for tree in &group.trees {
        for trail in &tree.trails {
            let mut ends: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
            for e in &trail.end_nodes {
                let slot = ends.entry(e.connection).or_default();
                match e.kind {
                    crate::cpp::EndKind::Source => slot.0 = true,
                    crate::cpp::EndKind::Destination => slot.1 = true,
                }
            }
            if !ends.is_empty() && ends.values().all(|&(s, d)| s && d) {
                return Some(trail);
            }
        }
    }
    None
}

fn fmt_num(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders the comparison table. Both formats use the same numeric
/// formatting, so the values are identical character for character.
pub fn emit(report: &BenchReport, format: ReportFormat) -> String {
    let schemes = [
        ("CPP", &report.cpp),
        ("SPP1", &report.spp1),
        ("SPP2", &report.spp2),
    ];
    match format {
        ReportFormat::Csv => {
            let mut out = String::from("scheme,scap_percent");
            for x in &report.x_ms {
                out.push_str(&format!(",rt_ms_at_x_{x}"));
            }
            out.push('\n');
            for (name, s) in schemes {
                out.push_str(name);
                out.push(',');
                out.push_str(&fmt_num(s.scap_mean));
                for rt in &s.rt_by_x {
                    out.push(',');
                    out.push_str(&fmt_num(*rt));
                }
                out.push('\n');
            }
            out.push_str("\nrepeat,group,connections,working_km,spare_spp_km,spare_cpp_km,wavelengths,coding_groups,spp_optimal,cpp_optimal\n");
            for r in &report.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    r.repeat,
                    r.group,
                    r.connections,
                    fmt_num(r.working_km),
                    fmt_num(r.spare_spp_km),
                    fmt_num(r.spare_cpp_km),
                    r.wavelengths,
                    r.coding_groups,
                    r.spp_optimal,
                    r.cpp_optimal
                ));
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = String::from("| scheme | SCaP (%) |");
            for x in &report.x_ms {
                out.push_str(&format!(" RT @ X={x} ms |"));
            }
            out.push('\n');
            out.push_str("|---|---|");
            for _ in &report.x_ms {
                out.push_str("---|");
            }
            out.push('\n');
            for (name, s) in schemes {
                out.push_str(&format!("| {name} | {} |", fmt_num(s.scap_mean)));
                for rt in &s.rt_by_x {
                    out.push_str(&format!(" {} |", fmt_num(*rt)));
                }
                out.push('\n');
            }
            out.push('\n');
            out.push_str("| repeat | group | connections | working km | spare SPP km | spare CPP km | wavelengths | coding groups | SPP optimal | CPP optimal |\n");
            out.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
            for r in &report.rows {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
                    r.repeat,
                    r.group,
                    r.connections,
                    fmt_num(r.working_km),
                    fmt_num(r.spare_spp_km),
                    fmt_num(r.spare_cpp_km),
                    r.wavelengths,
                    r.coding_groups,
                    r.spp_optimal,
                    r.cpp_optimal
                ));
            }
            out
        }
    }
}

/// Result of resolving and simulating a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    /// One report per simulated trail, labeled `tree<i>.trail<j>`.
    pub reports: Vec<(String, SimReport)>,
    /// Trails the simulation cannot represent (covers of non-linear
    /// trees), with the reason.
    pub skipped: Vec<String>,
}

impl ScenarioOutcome {
    /// Concatenated CSV of all trail reports, with `#`-labeled sections.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (label, report) in &self.reports {
            out.push_str(&format!("# trail {label}\n"));
            out.push_str(&report.to_csv());
        }
        for s in &self.skipped {
            out.push_str(&format!("# skipped {s}\n"));
        }
        out
    }
}

/// Resolves a parsed scenario against its topology and runs the stream
/// simulation on every representable trail of the requested coding group.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioOutcome, BenchError> {
    let graph = load_topology(&spec.topology)?;
    run_scenario_on(spec, &graph)
}

/// [`run_scenario`] over an already-loaded graph.
pub fn run_scenario_on(
    spec: &ScenarioSpec,
    graph: &NetworkGraph,
) -> Result<ScenarioOutcome, BenchError> {
    let traffic = match &spec.demands {
        DemandSpec::Uniform => TrafficKind::Uniform,
        DemandSpec::Gravity(n) => TrafficKind::Gravity(*n),
        DemandSpec::File(path) => TrafficKind::File(path.clone()),
    };
    let demands = resolve_demands(graph, &traffic, spec.seed)?;
    let partition = demands.partition(spec.partition, partition_seed(spec.seed, 0))?;
    let length_limit = spec
        .length_limit
        .unwrap_or_else(|| default_length_limit(&spec.topology));
    let params = match spec.network {
        NetworkKind::Opaque => TimingParams::opaque(0.5),
        NetworkKind::Transparent => TimingParams::transparent(0.5),
    };

    // Coding groups are numbered consecutively across partition groups;
    // plan only as far as needed to reach the requested one.
    let mut base = 0usize;
    for ids in &partition.groups {
        let subset: Vec<crate::demand::Demand> =
            ids.iter().map(|&i| demands.demands()[i]).collect();
        let primaries = route_primaries(graph, &subset)?;
        let spp = plan_spp(
            graph,
            &primaries,
            &SppOptions {
                length_limit_km: length_limit,
                wavelengths: spec.wavelengths,
                ..SppOptions::default()
            },
        )?;
        let cpp = convert(graph, &primaries, &spp, &CppOptions::default())?;
        if spec.group < base + cpp.groups.len() {
            let group = &cpp.groups[spec.group - base];
            return simulate_group(group, &primaries, &params, spec);
        }
        base += cpp.groups.len();
    }
    Err(BenchError::Scenario(format!(
        "coding group {} does not exist (the plan has {base})",
        spec.group
    )))
}

fn simulate_group(
    group: &CodingGroup,
    primaries: &[RoutedPath],
    params: &TimingParams,
    spec: &ScenarioSpec,
) -> Result<ScenarioOutcome, BenchError> {
    let mut outcome = ScenarioOutcome {
        reports: Vec::new(),
        skipped: Vec::new(),
    };
    for (ti, tree) in group.trees.iter().enumerate() {
        for (tj, trail) in tree.trails.iter().enumerate() {
            let label = format!("tree{ti}.trail{tj}");
            let mut ends: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
            for e in &trail.end_nodes {
                let slot = ends.entry(e.connection).or_default();
                match e.kind {
                    crate::cpp::EndKind::Source => slot.0 = true,
                    crate::cpp::EndKind::Destination => slot.1 = true,
                }
            }
            if ends.is_empty() || ends.values().any(|&(s, d)| !(s && d)) {
                outcome.skipped.push(format!(
                    "{label}: carries end nodes without their partners"
                ));
                continue;
            }
            let timing = quantized_timing(trail, params, spec.tick_ms);
            let report = simulate(
                &SimSetup {
                    trail,
                    timing: &timing,
                    primaries,
                    params,
                    tick_ms: spec.tick_ms,
                },
                &SimOptions {
                    mode: spec.mode,
                    rounds: spec.rounds,
                    traffic_seeds: spec.traffic_seeds.clone(),
                    failure: spec.failure,
                    ..SimOptions::default()
                },
            )?;
            outcome.reports.push((label, report));
        }
    }
    Ok(outcome)
}
