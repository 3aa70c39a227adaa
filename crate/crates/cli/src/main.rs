//! Command-line front end: plans shared and coded protection over a
//! topology, renders the spare-capacity / restoration-time comparison,
//! runs the XOR-stream simulator on scenario files, and exports the
//! optimization models in LP format.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use xorpath::bench::{
    self, load_topology, resolve_demands, ReportFormat, Scenario, TrafficKind,
};
use xorpath::cpp::{build_cpp_ilp, min_groups};
use xorpath::milp::export_lp;
use xorpath::spp::{build_spp_ilp, min_wavelengths, simple_spp, RouteMode};
use xorpath::timing::NetworkKind;

#[derive(Parser)]
#[command(
    name = "xorpath",
    version,
    about = "Spare-capacity planning and XOR-coded path protection for mesh optical networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan protection and emit the spare-capacity / restoration-time table.
    Plan(PlanArgs),
    /// Run the XOR parity-stream simulator on a scenario file.
    Simulate(SimulateArgs),
    /// Export an optimization model in LP format.
    ExportLp(ExportLpArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NetworkArg {
    /// Electrical regeneration at every node.
    Opaque,
    /// All-optical transit.
    Transparent,
}

impl From<NetworkArg> for NetworkKind {
    fn from(v: NetworkArg) -> Self {
        match v {
            NetworkArg::Opaque => NetworkKind::Opaque,
            NetworkArg::Transparent => NetworkKind::Transparent,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
}

impl From<FormatArg> for ReportFormat {
    fn from(v: FormatArg) -> Self {
        match v {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Args)]
struct SharedArgs {
    /// Topology: `cost239`, `nsfnet`, or a topology file path.
    #[arg(long, default_value = "cost239")]
    topology: String,
    /// Traffic model: `uniform`, `gravity`, or a demand file path.
    #[arg(long, default_value = "uniform")]
    traffic: String,
    /// Demand count drawn by the gravity model.
    #[arg(long, default_value_t = 150)]
    demand_count: usize,
    #[arg(long, value_enum, default_value_t = NetworkArg::Opaque)]
    network: NetworkArg,
    /// Spare wavelengths per demand group (default: minimum feasible).
    #[arg(long)]
    wavelengths: Option<usize>,
    /// Coding group count (default: mirrors the wavelength count).
    #[arg(long)]
    groups: Option<usize>,
    /// Backup length limit in km (default: 4000 for cost239, 6000 for
    /// nsfnet, unlimited otherwise).
    #[arg(long)]
    length_limit: Option<f64>,
    /// Largest demand group solved as one model.
    #[arg(long, default_value_t = 20)]
    partition_size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl SharedArgs {
    fn traffic_kind(&self) -> TrafficKind {
        match self.traffic.as_str() {
            "uniform" => TrafficKind::Uniform,
            "gravity" => TrafficKind::Gravity(self.demand_count),
            path => TrafficKind::File(path.to_string()),
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    shared: SharedArgs,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Cross-connect times in ms, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 5.0, 10.0])]
    oxc_times: Vec<f64>,
    /// Failure-detection time override in ms.
    #[arg(long)]
    failure_detect: Option<f64>,
    /// Node-processing time override in ms.
    #[arg(long)]
    node_proc: Option<f64>,
    /// Propagation speed override in ms per km.
    #[arg(long)]
    prop_speed: Option<f64>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Worker threads for concurrent repeats and groups.
    #[arg(long)]
    workers: Option<usize>,
    /// Validate every coding group with one simulated failure.
    #[arg(long)]
    sim_smoke: bool,
    /// Write the table to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file path.
    #[arg(long)]
    scenario: PathBuf,
    /// Write the delivery log to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    /// Wavelength assignment over shared backups.
    Spp,
    /// Coding-group assignment.
    Cpp,
}

#[derive(Args)]
struct ExportLpArgs {
    #[command(flatten)]
    shared: SharedArgs,
    /// Which model to export.
    #[arg(long, value_enum)]
    stage: StageArg,
    /// Write the LP text to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Plan(args) => plan(args),
        Command::Simulate(args) => simulate(args),
        Command::ExportLp(args) => export(args),
    }
}

fn write_out(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn plan(args: PlanArgs) -> Result<()> {
    let scenario = Scenario {
        topology: args.shared.topology.clone(),
        traffic: args.shared.traffic_kind(),
        network: args.shared.network.into(),
        wavelengths: args.shared.wavelengths,
        groups: args.shared.groups,
        length_limit_km: args.shared.length_limit,
        partition_size: args.shared.partition_size,
        repeats: args.repeats,
        seed: args.shared.seed,
        x_ms: args.oxc_times,
        f_ms: args.failure_detect,
        m_ms: args.node_proc,
        prop_speed: args.prop_speed,
        format: args.format.into(),
        workers: args.workers,
        sim_smoke: args.sim_smoke,
    };
    let report = bench::run(&scenario).context("planning failed")?;
    let text = bench::emit(&report, scenario.format);
    write_out(args.out.as_ref(), &text)?;
    if report.estimate {
        eprintln!(
            "note: some synchronization delays are upper-bound estimates (non-linear protection trees)"
        );
    }
    let s = report.stats;
    eprintln!(
        "solved {} demand groups ({} shared / {} coded assignments hit the time budget){}",
        s.groups_solved,
        s.spp_suboptimal,
        s.cpp_suboptimal,
        if scenario.sim_smoke {
            format!(
                "; simulated {} coding groups ({} skipped)",
                s.sim_validated, s.sim_skipped
            )
        } else {
            String::new()
        }
    );
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.scenario)
        .with_context(|| format!("reading {}", args.scenario.display()))?;
    let spec = xorpath::sim::parse_scenario(&text)?;
    let outcome = bench::run_scenario(&spec).context("simulation failed")?;
    write_out(args.out.as_ref(), &outcome.to_csv())?;
    for (label, report) in &outcome.reports {
        for (conn, rounds) in &report.recovery_rounds {
            eprintln!("{label}: connection {conn} recovered in {rounds} rounds");
        }
        for defect in &report.defects {
            eprintln!("{label}: defect: {defect}");
        }
    }
    for s in &outcome.skipped {
        eprintln!("skipped {s}");
    }
    Ok(())
}

fn export(args: ExportLpArgs) -> Result<()> {
    let graph = load_topology(&args.shared.topology)?;
    let demands = resolve_demands(&graph, &args.shared.traffic_kind(), args.shared.seed)?;
    if demands.is_empty() {
        bail!("no demands to protect");
    }
    // The exported instance is the first demand group of the first repeat,
    // exactly as `plan` would solve it.
    let partition =
        demands.partition(args.shared.partition_size, args.shared.seed.wrapping_mul(10_000))?;
    let subset: Vec<xorpath::demand::Demand> = partition.groups[0]
        .iter()
        .map(|&i| demands.demands()[i])
        .collect();
    let primaries = xorpath::routing::route_primaries(&graph, &subset)?;
    let length_limit = args
        .shared
        .length_limit
        .unwrap_or_else(|| bench::default_length_limit(&args.shared.topology));
    let shared = simple_spp(&graph, &primaries, length_limit)?;
    let text = match args.stage {
        StageArg::Spp => {
            let t = match args.shared.wavelengths {
                Some(t) => t,
                None => min_wavelengths(&graph, &primaries, &shared.backups)?.max(1),
            };
            let (model, _) = build_spp_ilp(
                &graph,
                &primaries,
                t,
                RouteMode::Fixed(&shared.backups),
                true,
            )?;
            export_lp(&model)
        }
        StageArg::Cpp => {
            let c = match args.shared.groups {
                Some(c) => c,
                None => min_groups(&primaries)?.max(1),
            };
            let (model, _) = build_cpp_ilp(&graph, &primaries, &shared.backups, c, true)?;
            export_lp(&model)
        }
    };
    write_out(args.out.as_ref(), &text)
}
