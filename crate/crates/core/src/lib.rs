//! Spare-capacity planning and XOR-coded path protection for mesh networks.
//!
//! The crate plans shared backup capacity for connection demands on optical
//! mesh topologies and converts the shared plan into coding groups whose
//! members protect each other through XOR parity streams, removing the
//! reconfiguration step from recovery. It bundles:
//!
//! - [`topology`] / [`demand`] / [`routing`]: graphs, traffic, and
//!   deterministic shortest-path routing,
//! - [`milp`]: 0-1 models with a built-in exact solver and LP text export,
//! - [`spp`]: shared-backup routing and exact wavelength assignment.
//!
//! All algorithms are deterministic: equal inputs (including seeds) produce
//! byte-equal reports.

pub mod bench;
pub mod cpp;
pub mod demand;
pub mod milp;
pub mod routing;
pub mod sim;
pub mod spp;
pub mod timing;
pub mod topology;

pub use bench::{BenchError, BenchReport, ReportFormat, Scenario, TrafficKind};
pub use cpp::{CodingGroup, CppOptions, CppPlan, EndKind, EndNode, LinearTrail, ProtectionTree};
pub use demand::{Demand, DemandPartition, DemandSet};
pub use routing::{DisjointnessMatrix, RoutedPath};
pub use sim::{
    DeliveredVia, DeliveryRow, FailureEvent, FailureScope, ScenarioSpec, SimError, SimMode,
    SimOptions, SimReport, SimSetup, SkewEvent, StreamSymbol,
};
pub use spp::{SharedBackups, SppOptions, SppPlan};
pub use timing::{NetworkKind, SppSignaling, TimingParams, WorstRt};
pub use topology::{NetworkGraph, Node, NodeId, Span, SpanId};
