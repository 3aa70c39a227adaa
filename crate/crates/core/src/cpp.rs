//! Conversion of a shared protection plan into coded protection groups.
//!
//! Where shared protection reuses a spare wavelength by reconfiguring
//! cross-connects after a failure, coded protection keeps every backup live
//! and XORs the members of a *coding group* onto the group's wavelength.
//! Recovery is then pure decoding. The price is a stricter sharing rule:
//! group members must have pairwise link-disjoint primaries — it is no
//! longer enough for their backups to avoid each other, because all members
//! of a group are coded together.
//!
//! [`convert`] re-runs the reservation model over the fixed backup routes
//! with the stricter rule and extracts [`CodingGroup`]s: per group, the
//! union of member backups splits into span-disjoint trees, and each tree
//! with no branch node yields an ordered coding trail for the timing and
//! simulation layers.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use thiserror::Error;

use crate::milp::{self, Cmp, IlpModel, SolveOptions, SolveStatus, VarId};
use crate::routing::{greedy_conflict_clique, pairwise_disjointness, DisjointnessMatrix, RoutedPath};
use crate::spp::{chromatic, SppPlan};
use crate::topology::{NetworkGraph, NodeId, SpanId};

/// Errors from the conversion stage.
#[derive(Debug, Error)]
pub enum CppError {
    #[error("primary paths must be indexed 0..n in order")]
    BadPrimaries,
    #[error("{requested} coding groups are not enough; {minimum} needed")]
    TooFewGroups { requested: usize, minimum: usize },
    #[error("solver exhausted its budget without finding a grouping")]
    Budget,
    #[error("conversion failed verification: {0}")]
    Verify(String),
    #[error(transparent)]
    Milp(#[from] milp::MilpError),
}

/// Conversion knobs.
#[derive(Debug, Clone)]
pub struct CppOptions {
    /// Number of coding groups; `None` uses the shared plan's wavelength
    /// count, raised to the minimum feasible value when needed.
    pub groups: Option<usize>,
    /// Canonical group-order rows (cut symmetric relabelings).
    pub symmetry_breaking: bool,
    /// Time budget for the grouping solve.
    pub time_budget: Duration,
}

impl Default for CppOptions {
    fn default() -> Self {
        CppOptions {
            groups: None,
            symmetry_breaking: true,
            time_budget: Duration::from_secs(60),
        }
    }
}

/// Which end of a connection an end node represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EndKind {
    Source,
    Destination,
}

/// A connection endpoint pinned to a position along a coding trail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndNode {
    pub connection: usize,
    pub kind: EndKind,
    /// Index into the trail's node sequence.
    pub position: usize,
}

/// An ordered, linear coding trail.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTrail {
    /// Node sequence from one end of the trail to the other.
    pub nodes: Vec<NodeId>,
    /// Spans in path order; `spans[i]` joins `nodes[i]` and `nodes[i+1]`.
    pub spans: Vec<SpanId>,
    /// Cumulative km from `nodes[0]`; same length as `nodes`.
    pub cum_km: Vec<f64>,
    /// End nodes ordered by (position, connection, source-before-dest).
    pub end_nodes: Vec<EndNode>,
}

impl LinearTrail {
    /// Km between two trail positions.
    pub fn distance_km(&self, a: usize, b: usize) -> f64 {
        (self.cum_km[a] - self.cum_km[b]).abs()
    }

    pub fn length_km(&self) -> f64 {
        *self.cum_km.last().unwrap_or(&0.0)
    }
}

/// One span-disjoint component of a group's protection union.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtectionTree {
    /// Connections whose backups live in this component.
    pub members: Vec<usize>,
    pub nodes: Vec<NodeId>,
    pub spans: Vec<SpanId>,
    /// True when the component is a single path: its one trail is exact.
    /// Otherwise the trails cover the component (root-to-leaf walks for
    /// branching trees, per-member walks when the union has a cycle) and
    /// timing derived from them is an upper-bound estimate.
    pub linear: bool,
    pub trails: Vec<LinearTrail>,
}

/// A coding group: connections coded together on one spare wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingGroup {
    pub index: usize,
    pub members: Vec<usize>,
    pub trees: Vec<ProtectionTree>,
}

/// A complete coded-protection plan.
#[derive(Debug, Clone, PartialEq)]
pub struct CppPlan {
    pub groups: Vec<CodingGroup>,
    /// Group index per connection.
    pub assignment: Vec<usize>,
    /// `reserved[span][c]`: group `c` holds spare on `span`.
    pub reserved: Vec<Vec<bool>>,
    pub group_count: usize,
    pub spare_cost: f64,
    pub working_cost: f64,
    pub optimal: bool,
}

impl CppPlan {
    /// Spare-capacity percentage of this plan.
    pub fn scap(&self) -> f64 {
        crate::spp::scap(self.spare_cost, self.working_cost)
    }
}

/// Variable handles of a conversion model.
pub struct CppVars {
    /// `n[i][c]`: connection `i` joins coding group `c`.
    pub n: Vec<Vec<VarId>>,
    /// `a[e][c]`: group `c` reserves span `e`.
    pub a: Vec<Vec<VarId>>,
    /// `k[pair(i,j)]`: backups of `i` and `j` are span-disjoint. Carried
    /// over from the sharing model for uniformity; grouping no longer gets
    /// an escape through it.
    pub k: Vec<VarId>,
    pub disjoint: DisjointnessMatrix,
}

impl CppVars {
    /// Index of the unordered pair `(i, j)` in `k`, for `i != j`.
    pub fn pair(&self, i: usize, j: usize, n: usize) -> usize {
        let (lo, hi) = (i.min(j), i.max(j));
        lo * n - lo * (lo + 1) / 2 + (hi - lo - 1)
    }
}

/// Builds the grouping model over fixed backup routes for `c_count` groups.
///
/// Minimizes km-weighted reserved spare. Per connection `i`, group `c`,
/// pair `i < j`:
///
/// - exactly one group per connection;
/// - membership reserves the group's wavelength on every backup span
///   (backup routes are constants here, so only their spans emit rows);
/// - `k` may be 1 only for span-disjoint backups;
/// - two connections may share a group only when their primaries are
///   link-disjoint — span-disjoint backups no longer exempt a pair.
pub fn build_cpp_ilp(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    backups: &[RoutedPath],
    c_count: usize,
    symmetry_breaking: bool,
) -> Result<(IlpModel, CppVars), CppError> {
    check_pairing(primaries, backups)?;
    if c_count == 0 {
        return Err(CppError::TooFewGroups {
            requested: 0,
            minimum: 1,
        });
    }
    let nc = primaries.len();
    let ns = graph.span_count();
    let disjoint = pairwise_disjointness(primaries);
    let mut model = IlpModel::new();

    let n: Vec<Vec<VarId>> = (0..nc)
        .map(|i| {
            (0..c_count)
                .map(|c| model.add_var(format!("n_{i}_{c}")))
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;
    let a: Vec<Vec<VarId>> = (0..ns)
        .map(|e| {
            (0..c_count)
                .map(|c| model.add_var(format!("a_{e}_{c}")))
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;
    let mut k = Vec::with_capacity(nc * nc.saturating_sub(1) / 2);
    for i in 0..nc {
        for j in (i + 1)..nc {
            k.push(model.add_var(format!("k_{i}_{j}"))?);
        }
    }
    for e in 0..ns {
        for c in 0..c_count {
            model.set_cost(a[e][c], graph.span(e).cost_km)?;
        }
    }
    let vars = CppVars {
        n,
        a,
        k,
        disjoint,
    };

    for i in 0..nc {
        model.add_constraint(
            vars.n[i].iter().map(|&v| (v, 1.0)).collect(),
            Cmp::Eq,
            1.0,
        )?;
        for &e in &backups[i].spans {
            for c in 0..c_count {
                model.add_constraint(
                    vec![(vars.n[i][c], 1.0), (vars.a[e][c], -1.0)],
                    Cmp::Le,
                    0.0,
                )?;
            }
        }
    }
    for i in 0..nc {
        for j in (i + 1)..nc {
            if !backups[i].is_link_disjoint(&backups[j]) {
                let kij = vars.k[vars.pair(i, j, nc)];
                model.add_constraint(vec![(kij, 1.0)], Cmp::Le, 0.0)?;
            }
            if !vars.disjoint.disjoint(i, j) {
                for c in 0..c_count {
                    model.add_constraint(
                        vec![(vars.n[i][c], 1.0), (vars.n[j][c], 1.0)],
                        Cmp::Le,
                        1.0,
                    )?;
                }
            }
        }
    }
    // Strengthening rows, satisfied by every integer solution. Connections
    // whose primaries pairwise clash sit in distinct groups, so (a) a span
    // crossed by a clique of clashing backups carries at least a clique's
    // worth of reservations, and (b) a clique sends at most one member into
    // any one group. Spelling these out hands the relaxation and the
    // propagator a floor that pairwise rows alone cannot see.
    let clash = |i: usize, j: usize| !vars.disjoint.disjoint(i, j);
    for e in 0..ns {
        let crossers: Vec<usize> = (0..nc)
            .filter(|&i| backups[i].spans.contains(&e))
            .collect();
        let clique = greedy_conflict_clique(&crossers, clash);
        if clique.len() >= 2 {
            model.add_constraint(
                (0..c_count).map(|c| (vars.a[e][c], 1.0)).collect(),
                Cmp::Ge,
                clique.len() as f64,
            )?;
        }
    }
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    for i in 0..nc {
        let cand: Vec<usize> = (0..nc).filter(|&j| j == i || clash(i, j)).collect();
        let clique = greedy_conflict_clique(&cand, clash);
        if clique.len() >= 3 && seen.insert(clique.clone()) {
            for c in 0..c_count {
                model.add_constraint(
                    clique.iter().map(|&q| (vars.n[q][c], 1.0)).collect(),
                    Cmp::Le,
                    1.0,
                )?;
            }
        }
    }
    if symmetry_breaking {
        // Canonical group order: connection i rides one of the first i+1
        // groups, and a group is only opened once the one before it holds
        // some earlier connection. Any grouping can be relabeled into this
        // form, so the optimum is untouched while label permutations drop
        // out of the search.
        for i in 0..nc {
            for c in (i + 1)..c_count {
                model.add_constraint(vec![(vars.n[i][c], 1.0)], Cmp::Le, 0.0)?;
            }
            for c in 1..c_count.min(i + 1) {
                let mut terms = vec![(vars.n[i][c], 1.0)];
                for j in (c - 1)..i {
                    terms.push((vars.n[j][c - 1], -1.0));
                }
                model.add_constraint(terms, Cmp::Le, 0.0)?;
            }
        }
    }
    Ok((model, vars))
}

/// Minimum number of coding groups for these primaries: the chromatic
/// number of the graph whose edges join connections with non-disjoint
/// primaries.
pub fn min_groups(primaries: &[RoutedPath]) -> Result<usize, CppError> {
    check_primaries(primaries)?;
    let disjoint = pairwise_disjointness(primaries);
    Ok(chromatic(primaries.len(), &clash_edges(primaries.len(), &disjoint)).0)
}

fn clash_edges(nc: usize, disjoint: &DisjointnessMatrix) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..nc {
        for j in (i + 1)..nc {
            if !disjoint.disjoint(i, j) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Converts a shared plan into a coded plan over the same backup routes.
///
/// The group count defaults to the shared plan's wavelength count; when the
/// stricter grouping rule cannot be met with that many groups, the count is
/// raised to the minimum feasible value (the plan's `group_count` reports
/// the final choice). When the counts match and both solves are optimal,
/// the coded spare can never undercut the shared spare — that containment
/// is re-checked here.
pub fn convert(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    spp: &SppPlan,
    options: &CppOptions,
) -> Result<CppPlan, CppError> {
    let plan = convert_routes(graph, primaries, &spp.backups, spp.wavelength_count, options)?;
    if plan.group_count == spp.wavelength_count
        && plan.optimal
        && spp.optimal
        && plan.spare_cost < spp.spare_cost - 1e-6
    {
        return Err(CppError::Verify(format!(
            "coded spare {} undercuts shared spare {} at equal wavelength count",
            plan.spare_cost, spp.spare_cost
        )));
    }
    Ok(plan)
}

/// Conversion over explicit backup routes; `baseline_groups` plays the role
/// of the shared plan's wavelength count for the default group count.
pub fn convert_routes(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    backups: &[RoutedPath],
    baseline_groups: usize,
    options: &CppOptions,
) -> Result<CppPlan, CppError> {
    check_pairing(primaries, backups)?;
    let nc = primaries.len();
    let disjoint = pairwise_disjointness(primaries);
    let (minimum, coloring) = chromatic(nc, &clash_edges(nc, &disjoint));
    let c_count = match options.groups {
        Some(c) => {
            if c < minimum {
                return Err(CppError::TooFewGroups {
                    requested: c,
                    minimum,
                });
            }
            c
        }
        None => baseline_groups.max(minimum).max(1),
    };
    let (model, vars) = build_cpp_ilp(graph, primaries, backups, c_count, options.symmetry_breaking)?;

    let warm = warm_start_values(&model, &vars, backups, &coloring, c_count);
    let sol = milp::solve_with(
        &model,
        &SolveOptions {
            time_budget: options.time_budget,
            warm_start: warm,
        },
    );
    match sol.status {
        SolveStatus::Infeasible => {
            return Err(CppError::Verify(format!(
                "grouping model infeasible with {c_count} groups despite coloring bound {minimum}"
            )))
        }
        SolveStatus::Timeout if sol.values.is_none() => return Err(CppError::Budget),
        _ => {}
    }
    let values = sol.values.expect("feasible grouping present");
    let assignment: Vec<usize> = (0..nc)
        .map(|i| {
            (0..c_count)
                .find(|&c| values[vars.n[i][c].0])
                .ok_or_else(|| CppError::Verify(format!("connection {i} has no group")))
        })
        .collect::<Result<_, _>>()?;
    let reserved: Vec<Vec<bool>> = (0..graph.span_count())
        .map(|e| (0..c_count).map(|c| values[vars.a[e][c].0]).collect())
        .collect();
    let spare_cost: f64 = reserved
        .iter()
        .enumerate()
        .map(|(e, row)| graph.span(e).cost_km * row.iter().filter(|&&b| b).count() as f64)
        .sum();
    let working_cost: f64 = primaries.iter().map(|p| p.length_km).sum();
    let groups = extract_groups(graph, primaries, backups, &assignment, c_count);
    let plan = CppPlan {
        groups,
        assignment,
        reserved,
        group_count: c_count,
        spare_cost,
        working_cost,
        optimal: sol.status == SolveStatus::Optimal,
    };
    verify_cpp(graph, primaries, backups, &plan).map_err(CppError::Verify)?;
    Ok(plan)
}

/// Feasible incumbent from a witness coloring of the primary-clash graph.
fn warm_start_values(
    model: &IlpModel,
    vars: &CppVars,
    backups: &[RoutedPath],
    coloring: &[usize],
    c_count: usize,
) -> Option<Vec<bool>> {
    let nc = backups.len();
    if coloring.iter().any(|&c| c >= c_count) {
        return None;
    }
    let mut values = vec![false; model.var_count()];
    for i in 0..nc {
        values[vars.n[i][coloring[i]].0] = true;
        for &e in &backups[i].spans {
            values[vars.a[e][coloring[i]].0] = true;
        }
    }
    // k stays 0: it carries no cost and no row forces it up.
    if model.is_feasible(&values) {
        Some(values)
    } else {
        debug_assert!(false, "witness-coloring warm start should always be feasible");
        None
    }
}

/// Groups connections by assignment and splits each group's protection
/// union into span-disjoint trees with their coding trails.
pub fn extract_groups(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    backups: &[RoutedPath],
    assignment: &[usize],
    c_count: usize,
) -> Vec<CodingGroup> {
    let _ = primaries;
    let mut groups = Vec::new();
    for c in 0..c_count {
        let members: Vec<usize> = (0..assignment.len())
            .filter(|&i| assignment[i] == c)
            .collect();
        if members.is_empty() {
            continue;
        }
        let trees = split_trees(graph, backups, &members);
        groups.push(CodingGroup {
            index: c,
            members,
            trees,
        });
    }
    groups
}

/// Clusters members that transitively share backup spans and shapes each
/// cluster's span union into a tree/trail description.
fn split_trees(
    graph: &NetworkGraph,
    backups: &[RoutedPath],
    members: &[usize],
) -> Vec<ProtectionTree> {
    // Union-find over member list positions, linked through shared spans.
    let mut parent: Vec<usize> = (0..members.len()).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    let mut span_owner: BTreeMap<SpanId, usize> = BTreeMap::new();
    for (pos, &m) in members.iter().enumerate() {
        for &e in &backups[m].spans {
            match span_owner.get(&e) {
                Some(&other) => {
                    let (ra, rb) = (find(&mut parent, pos), find(&mut parent, other));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
                None => {
                    span_owner.insert(e, pos);
                }
            }
        }
    }
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for pos in 0..members.len() {
        let root = find(&mut parent, pos);
        clusters.entry(root).or_default().push(members[pos]);
    }
    clusters
        .into_values()
        .map(|cluster| build_tree(graph, backups, cluster))
        .collect()
}

fn build_tree(graph: &NetworkGraph, backups: &[RoutedPath], members: Vec<usize>) -> ProtectionTree {
    let mut span_set: BTreeSet<SpanId> = BTreeSet::new();
    for &m in &members {
        span_set.extend(backups[m].spans.iter().copied());
    }
    let spans: Vec<SpanId> = span_set.iter().copied().collect();
    let mut adjacency: BTreeMap<NodeId, Vec<SpanId>> = BTreeMap::new();
    for &e in &spans {
        let s = graph.span(e);
        adjacency.entry(s.a).or_default().push(e);
        adjacency.entry(s.b).or_default().push(e);
    }
    let nodes: Vec<NodeId> = adjacency.keys().copied().collect();
    let acyclic = spans.len() + 1 == nodes.len();
    let max_degree = adjacency.values().map(Vec::len).max().unwrap_or(0);
    let linear = acyclic && max_degree <= 2;

    let trails = if linear {
        let start = *adjacency
            .iter()
            .filter(|(_, inc)| inc.len() == 1)
            .map(|(n, _)| n)
            .min()
            .expect("a path has two ends");
        vec![walk_trail(graph, backups, &members, &adjacency, start, None)]
    } else if acyclic {
        // Branching tree: one trail per root-to-leaf walk, rooted at the
        // smallest-id leaf. Every tree node lies on at least one of them.
        let leaves: Vec<NodeId> = adjacency
            .iter()
            .filter(|(_, inc)| inc.len() == 1)
            .map(|(&n, _)| n)
            .collect();
        let root = leaves[0];
        leaves[1..]
            .iter()
            .map(|&leaf| walk_trail(graph, backups, &members, &adjacency, root, Some(leaf)))
            .collect()
    } else {
        // The union contains a cycle (possible when span-disjoint backups
        // meet at shared nodes inside one cluster). Fall back to one trail
        // per member so downstream consumers still get linear views.
        members
            .iter()
            .map(|&m| member_trail(graph, backups, &members, m))
            .collect()
    };
    ProtectionTree {
        members,
        nodes,
        spans,
        linear,
        trails,
    }
}

/// Walks a degree-≤2 component from `start`, or the unique tree path from
/// `start` to `target` when given, and attaches the member end nodes that
/// lie on the walked nodes.
fn walk_trail(
    graph: &NetworkGraph,
    backups: &[RoutedPath],
    members: &[usize],
    adjacency: &BTreeMap<NodeId, Vec<SpanId>>,
    start: NodeId,
    target: Option<NodeId>,
) -> LinearTrail {
    let path_nodes = match target {
        None => {
            let mut nodes = vec![start];
            let mut used: Option<SpanId> = None;
            let mut current = start;
            loop {
                let next = adjacency[&current]
                    .iter()
                    .copied()
                    .find(|&e| Some(e) != used);
                match next {
                    Some(e) => {
                        current = graph.span(e).opposite(current).unwrap();
                        nodes.push(current);
                        used = Some(e);
                    }
                    None => break,
                }
            }
            nodes
        }
        Some(goal) => {
            // Depth-first from start; tree structure makes the path unique.
            fn dfs(
                graph: &NetworkGraph,
                adjacency: &BTreeMap<NodeId, Vec<SpanId>>,
                current: NodeId,
                goal: NodeId,
                via: Option<SpanId>,
                path: &mut Vec<NodeId>,
            ) -> bool {
                path.push(current);
                if current == goal {
                    return true;
                }
                for &e in &adjacency[&current] {
                    if Some(e) == via {
                        continue;
                    }
                    let next = graph.span(e).opposite(current).unwrap();
                    if dfs(graph, adjacency, next, goal, Some(e), path) {
                        return true;
                    }
                }
                path.pop();
                false
            }
            let mut path = Vec::new();
            let found = dfs(graph, adjacency, start, goal, None, &mut path);
            debug_assert!(found, "leaf unreachable inside its own tree");
            path
        }
    };
    trail_from_nodes(graph, backups, members, path_nodes)
}

fn member_trail(
    graph: &NetworkGraph,
    backups: &[RoutedPath],
    members: &[usize],
    member: usize,
) -> LinearTrail {
    trail_from_nodes(graph, backups, members, backups[member].nodes.clone())
}

fn trail_from_nodes(
    graph: &NetworkGraph,
    backups: &[RoutedPath],
    members: &[usize],
    nodes: Vec<NodeId>,
) -> LinearTrail {
    let mut spans = Vec::with_capacity(nodes.len().saturating_sub(1));
    let mut cum_km = vec![0.0];
    for w in nodes.windows(2) {
        let span = graph
            .span_between(w[0], w[1])
            .expect("trail nodes are adjacent");
        spans.push(span.id);
        cum_km.push(cum_km.last().unwrap() + span.cost_km);
    }
    let position: BTreeMap<NodeId, usize> =
        nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut end_nodes = Vec::new();
    for &m in members {
        for (kind, node) in [
            (EndKind::Source, backups[m].source()),
            (EndKind::Destination, backups[m].destination()),
        ] {
            if let Some(&pos) = position.get(&node) {
                end_nodes.push(EndNode {
                    connection: m,
                    kind,
                    position: pos,
                });
            }
        }
    }
    end_nodes.sort_by_key(|e| (e.position, e.connection, e.kind));
    LinearTrail {
        nodes,
        spans,
        cum_km,
        end_nodes,
    }
}

/// Ordered trails of a group with an exactness tag: trails of non-linear
/// trees are deterministic covers, not exact coding orders.
pub fn extract_trails(group: &CodingGroup) -> Vec<(&LinearTrail, bool)> {
    group
        .trees
        .iter()
        .flat_map(|tree| tree.trails.iter().map(move |t| (t, tree.linear)))
        .collect()
}

/// Independent checker for a coded plan; returns the first violation.
///
/// Recomputes from graph, primaries, and backup routes alone: assignment
/// shape, the link-disjointness rule inside every group, reservation
/// coverage of member backups, tree structure (partition of members,
/// span-disjoint trees, backups confined to their tree), and both costs.
pub fn verify_cpp(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    backups: &[RoutedPath],
    plan: &CppPlan,
) -> Result<(), String> {
    let nc = primaries.len();
    if backups.len() != nc || plan.assignment.len() != nc {
        return Err("plan size does not match primaries".into());
    }
    for (i, b) in backups.iter().enumerate() {
        if b.connection != i
            || b.source() != primaries[i].source()
            || b.destination() != primaries[i].destination()
            || !b.is_link_disjoint(&primaries[i])
        {
            return Err(format!("backup {i} is not a valid protection route"));
        }
    }
    let disjoint = pairwise_disjointness(primaries);
    for i in 0..nc {
        let c = plan.assignment[i];
        if c >= plan.group_count {
            return Err(format!("connection {i} assigned to group {c} out of range"));
        }
        for &e in &backups[i].spans {
            if !plan.reserved[e][c] {
                return Err(format!(
                    "span {e} lacks a reservation for group {c} of connection {i}"
                ));
            }
        }
        for j in (i + 1)..nc {
            if plan.assignment[j] == c && !disjoint.disjoint(i, j) {
                return Err(format!(
                    "connections {i} and {j} share group {c} although their \
                     primaries can fail together"
                ));
            }
        }
    }
    // Groups restate the assignment exactly, in group order.
    let mut seen = vec![false; nc];
    let mut last_index = None;
    for group in &plan.groups {
        if group.members.is_empty() {
            return Err(format!("group {} is empty", group.index));
        }
        if group.index >= plan.group_count || Some(group.index) <= last_index {
            return Err("group indices out of order".into());
        }
        last_index = Some(group.index);
        for &m in &group.members {
            if plan.assignment[m] != group.index {
                return Err(format!(
                    "connection {m} listed in group {} but assigned to {}",
                    group.index, plan.assignment[m]
                ));
            }
            seen[m] = true;
        }
        // Trees partition the members; each is span-disjoint from the rest
        // and fully contains its members' backups.
        let mut tree_members: Vec<usize> = Vec::new();
        let mut used_spans: BTreeSet<SpanId> = BTreeSet::new();
        for tree in &group.trees {
            tree_members.extend(&tree.members);
            let span_set: BTreeSet<SpanId> = tree.spans.iter().copied().collect();
            if span_set.len() != tree.spans.len()
                || !used_spans.is_disjoint(&span_set)
            {
                return Err(format!(
                    "trees of group {} are not span-disjoint",
                    group.index
                ));
            }
            used_spans.extend(&span_set);
            for &m in &tree.members {
                if !backups[m].spans.iter().all(|e| span_set.contains(e)) {
                    return Err(format!(
                        "backup of connection {m} leaves its tree in group {}",
                        group.index
                    ));
                }
            }
            if tree.trails.is_empty() {
                return Err(format!("group {} has a tree without trails", group.index));
            }
        }
        tree_members.sort_unstable();
        if tree_members != group.members {
            return Err(format!(
                "trees of group {} do not partition its members",
                group.index
            ));
        }
    }
    if seen.iter().any(|&s| !s) {
        return Err("groups do not cover every connection".into());
    }
    let spare: f64 = plan
        .reserved
        .iter()
        .enumerate()
        .map(|(e, row)| graph.span(e).cost_km * row.iter().filter(|&&b| b).count() as f64)
        .sum();
    if (spare - plan.spare_cost).abs() > 1e-6 * (1.0 + spare.abs()) {
        return Err(format!(
            "spare cost mismatch: stated {}, recomputed {spare}",
            plan.spare_cost
        ));
    }
    let working: f64 = primaries.iter().map(|p| p.length_km).sum();
    if (working - plan.working_cost).abs() > 1e-6 * (1.0 + working.abs()) {
        return Err(format!(
            "working cost mismatch: stated {}, recomputed {working}",
            plan.working_cost
        ));
    }
    Ok(())
}

fn check_primaries(primaries: &[RoutedPath]) -> Result<(), CppError> {
    for (i, p) in primaries.iter().enumerate() {
        if p.connection != i || p.spans.is_empty() {
            return Err(CppError::BadPrimaries);
        }
    }
    Ok(())
}

fn check_pairing(primaries: &[RoutedPath], backups: &[RoutedPath]) -> Result<(), CppError> {
    check_primaries(primaries)?;
    if backups.len() != primaries.len() {
        return Err(CppError::BadPrimaries);
    }
    for (p, b) in primaries.iter().zip(backups) {
        if b.connection != p.connection
            || b.source() != p.source()
            || b.destination() != p.destination()
            || !b.is_link_disjoint(p)
        {
            return Err(CppError::BadPrimaries);
        }
    }
    Ok(())
}
