//! Shared path protection planning.
//!
//! Every connection gets a backup path that is link-disjoint from its
//! primary. Spare capacity is shared: two backups may reuse the same
//! wavelength on a common span when their primaries are link-disjoint,
//! because a single span failure can never activate both at once.
//!
//! Planning runs in two layers:
//!
//! - [`simple_spp`] routes backups sequentially with a bicriteria label
//!   search that prices each span by the *incremental* spare it would need,
//!   so later connections are drawn toward already-reserved capacity.
//! - [`plan_spp`] then assigns wavelengths to the routed backups with an
//!   exact 0-1 model (spare is wavelength-granular and must be contiguous
//!   end to end along a backup), minimizing the km-weighted reserved total.
//!
//! [`build_spp_ilp`] also exposes the full joint model in which backup
//! routes themselves are decision variables; it is exact but only practical
//! on small instances.

use std::collections::{BTreeSet, BinaryHeap};
use std::time::Duration;

use thiserror::Error;

use crate::milp::{self, Cmp, IlpModel, SolveOptions, SolveStatus, VarId};
use crate::routing::{greedy_conflict_clique, pairwise_disjointness, DisjointnessMatrix, RoutedPath};
use crate::topology::{NetworkGraph, SpanId};

/// Errors from backup planning.
#[derive(Debug, Error)]
pub enum SppError {
    #[error("connection {connection}: no backup path within {limit_km} km avoiding its primary")]
    NoBackup { connection: usize, limit_km: f64 },
    #[error("primary paths must be indexed 0..n in order")]
    BadPrimaries,
    #[error("no feasible wavelength assignment with {wavelengths} wavelengths (minimum {minimum})")]
    NoAssignment { wavelengths: usize, minimum: usize },
    #[error("no feasible protection plan with {wavelengths} wavelengths")]
    Infeasible { wavelengths: usize },
    #[error("solver exhausted its budget without finding a feasible plan")]
    Budget,
    #[error("plan failed verification: {0}")]
    Verify(String),
    #[error(transparent)]
    Milp(#[from] milp::MilpError),
}

/// Planning knobs.
#[derive(Debug, Clone)]
pub struct SppOptions {
    /// Maximum backup length in km.
    pub length_limit_km: f64,
    /// Spare wavelength count; `None` selects the minimum feasible.
    pub wavelengths: Option<usize>,
    /// Add canonical wavelength-order rows to fixed-route models. These cut
    /// symmetric relabelings of the wavelength set and never change the
    /// optimal cost.
    pub symmetry_breaking: bool,
    /// Time budget per exact solve.
    pub time_budget: Duration,
}

impl Default for SppOptions {
    fn default() -> Self {
        SppOptions {
            length_limit_km: f64::INFINITY,
            wavelengths: None,
            symmetry_breaking: true,
            time_budget: Duration::from_secs(120),
        }
    }
}

/// Output of the sequential backup-routing heuristic.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedBackups {
    pub backups: Vec<RoutedPath>,
    /// Spare wavelengths needed per span when spare is a fungible pool:
    /// the worst concurrent backup load over all single-span failures.
    pub spare_per_span: Vec<usize>,
}

impl SharedBackups {
    /// Km-weighted spare total of the pooled (non-contiguous) model.
    pub fn spare_cost(&self, graph: &NetworkGraph) -> f64 {
        self.spare_per_span
            .iter()
            .enumerate()
            .map(|(e, &s)| graph.span(e).cost_km * s as f64)
            .sum()
    }
}

/// A complete protection plan with wavelength-granular spare.
#[derive(Debug, Clone, PartialEq)]
pub struct SppPlan {
    pub backups: Vec<RoutedPath>,
    /// Wavelength index assigned to each connection's backup.
    pub wavelength: Vec<usize>,
    /// `reserved[span][t]`: wavelength `t` is reserved as spare on `span`.
    pub reserved: Vec<Vec<bool>>,
    pub wavelength_count: usize,
    /// Km-weighted reserved spare (the exact objective).
    pub spare_cost: f64,
    /// Km-weighted primary total.
    pub working_cost: f64,
    /// Pooled spare of the same backups, ignoring wavelength contiguity;
    /// never exceeds `spare_cost`.
    pub spare_no_continuity_cost: f64,
    /// Whether the wavelength assignment was proven cost-minimal.
    pub optimal: bool,
}

impl SppPlan {
    /// Spare-capacity percentage of this plan.
    pub fn scap(&self) -> f64 {
        scap(self.spare_cost, self.working_cost)
    }
}

/// Spare-capacity percentage: `100 * spare / working`.
pub fn scap(spare_cost: f64, working_cost: f64) -> f64 {
    100.0 * spare_cost / working_cost
}

// ---------------------------------------------------------------------------
// Sequential heuristic
// ---------------------------------------------------------------------------

/// Routes a shared backup for every primary, in connection order.
///
/// Each backup is the cheapest path by *incremental pooled spare*: a span
/// that already holds enough spare for this connection's failure scenarios
/// costs nothing, otherwise it costs its km length. Ties fall to the shorter
/// path in km, then to label insertion order, so results are deterministic.
pub fn simple_spp(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    length_limit_km: f64,
) -> Result<SharedBackups, SppError> {
    check_primaries(primaries)?;
    let ns = graph.span_count();
    // usage[e][f]: backups over span e activated by failure of span f.
    let mut usage = vec![vec![0u32; ns]; ns];
    let mut spare = vec![0u32; ns];
    let mut backups = Vec::with_capacity(primaries.len());

    for primary in primaries {
        let i = primary.connection;
        // Incremental cost of span e: its km if this connection would push
        // e's worst-case load beyond the current reservation, else zero.
        let price: Vec<f64> = (0..ns)
            .map(|e| {
                let worst = primary
                    .spans
                    .iter()
                    .map(|&f| usage[e][f])
                    .max()
                    .unwrap_or(0);
                if worst + 1 > spare[e] {
                    graph.span(e).cost_km
                } else {
                    0.0
                }
            })
            .collect();
        let forbidden: Vec<bool> = {
            let mut f = vec![false; ns];
            for &s in &primary.spans {
                f[s] = true;
            }
            f
        };
        let nodes = cheapest_restricted_path(
            graph,
            primary.source(),
            primary.destination(),
            &price,
            &forbidden,
            length_limit_km,
        )
        .ok_or(SppError::NoBackup {
            connection: i,
            limit_km: length_limit_km,
        })?;
        let backup = RoutedPath::from_nodes(i, nodes, graph)
            .expect("label search returns adjacent node sequences");
        for &e in &backup.spans {
            for &f in &primary.spans {
                usage[e][f] += 1;
                spare[e] = spare[e].max(usage[e][f]);
            }
        }
        backups.push(backup);
    }
    Ok(SharedBackups {
        backups,
        spare_per_span: spare.into_iter().map(|s| s as usize).collect(),
    })
}

/// Bicriteria (price, km) label search with a km cap.
///
/// Labels are popped in ascending `(price, km, node, id)` order, so the first
/// label to reach `dst` is the lexicographic (price, km) minimum and the
/// whole search is deterministic. Per-node Pareto sets prune dominated and
/// cyclic labels.
fn cheapest_restricted_path(
    graph: &NetworkGraph,
    src: usize,
    dst: usize,
    price: &[f64],
    forbidden: &[bool],
    limit_km: f64,
) -> Option<Vec<usize>> {
    struct Label {
        cost: f64,
        km: f64,
        node: usize,
        parent: Option<usize>,
    }
    let mut labels: Vec<Label> = vec![Label {
        cost: 0.0,
        km: 0.0,
        node: src,
        parent: None,
    }];
    // Keyed by (cost bits, km bits, node, label id); all values nonnegative,
    // so the bit ordering matches numeric order.
    let mut heap: BinaryHeap<std::cmp::Reverse<(u64, u64, usize, usize)>> = BinaryHeap::new();
    heap.push(std::cmp::Reverse((0, 0, src, 0)));
    let mut pareto: Vec<Vec<(f64, f64)>> = vec![Vec::new(); graph.node_count()];

    let dominated = |set: &[(f64, f64)], cost: f64, km: f64| {
        set.iter()
            .any(|&(c, k)| c <= cost + 1e-12 && k <= km + 1e-12)
    };

    while let Some(std::cmp::Reverse((_, _, node, id))) = heap.pop() {
        let (cost, km) = (labels[id].cost, labels[id].km);
        if node == dst {
            let mut rev = Vec::new();
            let mut cur = Some(id);
            while let Some(ix) = cur {
                rev.push(labels[ix].node);
                cur = labels[ix].parent;
            }
            rev.reverse();
            return Some(rev);
        }
        if dominated(&pareto[node], cost - 1e-12, km - 1e-12) {
            continue; // A strictly better label got here first.
        }
        pareto[node].push((cost, km));
        for &sid in graph.incident_spans(node) {
            if forbidden[sid] {
                continue;
            }
            let span = graph.span(sid);
            let next = span.opposite(node).unwrap();
            let nkm = km + span.cost_km;
            if nkm > limit_km * (1.0 + 1e-9) + 1e-9 {
                continue;
            }
            let ncost = cost + price[sid];
            if dominated(&pareto[next], ncost, nkm) {
                continue;
            }
            let nid = labels.len();
            labels.push(Label {
                cost: ncost,
                km: nkm,
                node: next,
                parent: Some(id),
            });
            heap.push(std::cmp::Reverse((
                ncost.to_bits(),
                nkm.to_bits(),
                next,
                nid,
            )));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Exact models
// ---------------------------------------------------------------------------

/// Whether backup routes are decision variables or pinned to given paths.
#[derive(Debug, Clone, Copy)]
pub enum RouteMode<'a> {
    /// Backup routes are optimized jointly with wavelengths.
    Free,
    /// Backup routes are fixed; only wavelengths and reservations move.
    Fixed(&'a [RoutedPath]),
}

/// Variable handles of a protection model.
pub struct SppVars {
    /// `y[i][e]`: backup of connection `i` uses span `e`.
    pub y: Vec<Vec<VarId>>,
    /// `n[i][t]`: backup of connection `i` rides wavelength `t`.
    pub n: Vec<Vec<VarId>>,
    /// `a[e][t]`: wavelength `t` reserved on span `e`.
    pub a: Vec<Vec<VarId>>,
    /// `k[pair(i,j)]`: backups of `i` and `j` are span-disjoint (upper
    /// bounded by that fact; 1 lets them share a wavelength freely).
    pub k: Vec<VarId>,
    /// Primary link-disjointness per pair, `m` in the sharing rule.
    pub disjoint: DisjointnessMatrix,
}

impl SppVars {
    /// Index of the unordered pair `(i, j)` in `k`, for `i != j`.
    pub fn pair(&self, i: usize, j: usize, n: usize) -> usize {
        let (lo, hi) = (i.min(j), i.max(j));
        lo * n - lo * (lo + 1) / 2 + (hi - lo - 1)
    }
}

/// Builds the 0-1 protection model for `t_count` wavelengths.
///
/// Minimizes the km-weighted reserved spare. Constraints, per connection
/// `i`, spans `e`, wavelengths `t`, pairs `i < j`:
///
/// - backup of `i` forms one path from source to destination: unit degree at
///   the endpoints, at most two incident backup spans at other nodes, and no
///   dangling span (a used span at a transit node needs a continuation);
/// - the backup avoids every span of its own primary;
/// - exactly one wavelength per backup;
/// - riding `t` across `e` forces the reservation `a[e][t]`;
/// - two backups may share a wavelength only when their primaries are
///   link-disjoint or the backups themselves share no span (`k`), and `k`
///   is only allowed where the backups are span-disjoint.
pub fn build_spp_ilp(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    t_count: usize,
    mode: RouteMode<'_>,
    symmetry_breaking: bool,
) -> Result<(IlpModel, SppVars), SppError> {
    check_primaries(primaries)?;
    if t_count == 0 {
        return Err(SppError::NoAssignment {
            wavelengths: 0,
            minimum: 1,
        });
    }
    if let RouteMode::Fixed(backups) = mode {
        if backups.len() != primaries.len() {
            return Err(SppError::BadPrimaries);
        }
        for (p, b) in primaries.iter().zip(backups) {
            if b.connection != p.connection
                || b.source() != p.source()
                || b.destination() != p.destination()
                || !b.is_link_disjoint(p)
            {
                return Err(SppError::BadPrimaries);
            }
        }
    }
    let nc = primaries.len();
    let ns = graph.span_count();
    let disjoint = pairwise_disjointness(primaries);
    let mut model = IlpModel::new();

    let y: Vec<Vec<VarId>> = (0..nc)
        .map(|i| {
            (0..ns)
                .map(|e| model.add_var(format!("y_{i}_{e}")))
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;
    let n: Vec<Vec<VarId>> = (0..nc)
        .map(|i| {
            (0..t_count)
                .map(|t| model.add_var(format!("n_{i}_{t}")))
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;
    let a: Vec<Vec<VarId>> = (0..ns)
        .map(|e| {
            (0..t_count)
                .map(|t| model.add_var(format!("a_{e}_{t}")))
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
        for t in 0..t_count {
            model.set_cost(a[e][t], graph.span(e).cost_km)?;
        }
    }
    let vars = SppVars {
        y,
        n,
        a,
        k,
        disjoint,
    };

    // Backup-path shape per connection.
    for (i, primary) in primaries.iter().enumerate() {
        let (s, d) = (primary.source(), primary.destination());
        for v in 0..graph.node_count() {
            let incident = graph.incident_spans(v);
            let terms: Vec<(VarId, f64)> =
                incident.iter().map(|&e| (vars.y[i][e], 1.0)).collect();
            if v == s || v == d {
                model.add_constraint(terms, Cmp::Eq, 1.0)?;
            } else {
                model.add_constraint(terms.clone(), Cmp::Le, 2.0)?;
                for &e in incident {
                    // No dangling span: using e at a transit node needs a
                    // second incident backup span to continue through.
                    let mut row = vec![(vars.y[i][e], 1.0)];
                    for &e2 in incident {
                        if e2 != e {
                            row.push((vars.y[i][e2], -1.0));
                        }
                    }
                    model.add_constraint(row, Cmp::Le, 0.0)?;
                }
            }
        }
        for &e in &primary.spans {
            model.add_constraint(vec![(vars.y[i][e], 1.0)], Cmp::Le, 0.0)?;
        }
        if let RouteMode::Fixed(backups) = mode {
            let chosen = backups[i].span_set();
            for e in 0..ns {
                let value = if chosen.contains(&e) { 1.0 } else { 0.0 };
                model.add_constraint(vec![(vars.y[i][e], 1.0)], Cmp::Eq, value)?;
            }
        }
    }

    // One wavelength per backup.
    for i in 0..nc {
        model.add_constraint(
            vars.n[i].iter().map(|&v| (v, 1.0)).collect(),
            Cmp::Eq,
            1.0,
        )?;
    }
    // Riding wavelength t over span e reserves it.
    for i in 0..nc {
        for e in 0..ns {
            for t in 0..t_count {
                model.add_constraint(
                    vec![(vars.n[i][t], 1.0), (vars.y[i][e], 1.0), (vars.a[e][t], -1.0)],
                    Cmp::Le,
                    1.0,
                )?;
            }
        }
    }
    // Wavelength sharing rules.
    for i in 0..nc {
        for j in (i + 1)..nc {
            let kij = vars.k[vars.pair(i, j, nc)];
            if !vars.disjoint.disjoint(i, j) {
                for t in 0..t_count {
                    model.add_constraint(
                        vec![(vars.n[i][t], 1.0), (vars.n[j][t], 1.0), (kij, -1.0)],
                        Cmp::Le,
                        1.0,
                    )?;
                }
            }
            for e in 0..ns {
                model.add_constraint(
                    vec![(vars.y[i][e], 1.0), (vars.y[j][e], 1.0), (kij, 1.0)],
                    Cmp::Le,
                    2.0,
                )?;
            }
        }
    }
    // Strengthening rows over fixed routes, satisfied by every integer
    // solution. Two backups that meet on a span and whose primaries are not
    // link-disjoint must ride different wavelengths; a clique of such
    // connections therefore (a) reserves a clique's worth of wavelengths on
    // any span they all cross and (b) sends at most one member onto any one
    // wavelength. Spelling these out hands the relaxation and the propagator
    // a floor that pairwise rows alone cannot see.
    if let RouteMode::Fixed(backups) = mode {
        let sets: Vec<_> = backups.iter().map(RoutedPath::span_set).collect();
        let conflict = |i: usize, j: usize| {
            !vars.disjoint.disjoint(i, j) && sets[i].intersection(&sets[j]).next().is_some()
        };
        for e in 0..ns {
            let crossers: Vec<usize> = (0..nc).filter(|&i| sets[i].contains(&e)).collect();
            let clique = greedy_conflict_clique(&crossers, conflict);
            if clique.len() >= 2 {
                model.add_constraint(
                    (0..t_count).map(|t| (vars.a[e][t], 1.0)).collect(),
                    Cmp::Ge,
                    clique.len() as f64,
                )?;
            }
        }
        let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
        for i in 0..nc {
            let cand: Vec<usize> = (0..nc).filter(|&j| j == i || conflict(i, j)).collect();
            let clique = greedy_conflict_clique(&cand, conflict);
            if clique.len() >= 3 && seen.insert(clique.clone()) {
                for t in 0..t_count {
                    model.add_constraint(
                        clique.iter().map(|&q| (vars.n[q][t], 1.0)).collect(),
                        Cmp::Le,
                        1.0,
                    )?;
                }
            }
        }
    }
    // Canonical wavelength order: connection i rides one of the first i+1,
    // and a wavelength is only opened once the one before it carries some
    // earlier connection. Any assignment relabels into this form, so the
    // optimum is untouched while label permutations drop out of the search.
    if symmetry_breaking && matches!(mode, RouteMode::Fixed(_)) {
        for i in 0..nc {
            for t in (i + 1)..t_count {
                model.add_constraint(vec![(vars.n[i][t], 1.0)], Cmp::Le, 0.0)?;
            }
            for t in 1..t_count.min(i + 1) {
                let mut terms = vec![(vars.n[i][t], 1.0)];
                for j in (t - 1)..i {
                    terms.push((vars.n[j][t - 1], -1.0));
                }
                model.add_constraint(terms, Cmp::Le, 0.0)?;
            }
        }
    }
    Ok((model, vars))
}

/// Conflict edges: pairs that must ride different wavelengths because their
/// primaries can fail together and their backups meet on some span.
fn conflict_edges(
    primaries: &[RoutedPath],
    backups: &[RoutedPath],
    disjoint: &DisjointnessMatrix,
) -> Vec<(usize, usize)> {
    let nc = primaries.len();
    let sets: Vec<_> = backups.iter().map(RoutedPath::span_set).collect();
    let mut edges = Vec::new();
    for i in 0..nc {
        for j in (i + 1)..nc {
            if !disjoint.disjoint(i, j) && sets[i].intersection(&sets[j]).next().is_some() {
                edges.push((i, j));
            }
        }
    }
    edges
}

fn greedy_coloring(nc: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); nc];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut order: Vec<usize> = (0..nc).collect();
    order.sort_by_key(|&v| (usize::MAX - adj[v].len(), v));
    let mut color = vec![usize::MAX; nc];
    for &v in &order {
        let mut taken: Vec<usize> = adj[v]
            .iter()
            .map(|&u| color[u])
            .filter(|&c| c != usize::MAX)
            .collect();
        taken.sort_unstable();
        let mut c = 0;
        for t in taken {
            if t == c {
                c += 1;
            } else if t > c {
                break;
            }
        }
        color[v] = c;
    }
    color
}

fn greedy_clique(nc: usize, edges: &[(usize, usize)]) -> usize {
    let mut adj = vec![vec![false; nc]; nc];
    let mut deg = vec![0usize; nc];
    for &(i, j) in edges {
        adj[i][j] = true;
        adj[j][i] = true;
        deg[i] += 1;
        deg[j] += 1;
    }
    let mut order: Vec<usize> = (0..nc).collect();
    order.sort_by_key(|&v| (usize::MAX - deg[v], v));
    let mut clique: Vec<usize> = Vec::new();
    for v in order {
        if clique.iter().all(|&u| adj[v][u]) {
            clique.push(v);
        }
    }
    clique.len().max(usize::from(nc > 0))
}

/// Renames colors by first use so that item `i` only uses colors `0..=i`.
pub(crate) fn canonicalize_coloring(color: &mut [usize]) {
    let top = color.iter().max().map_or(0, |&c| c + 1);
    let mut relabel: Vec<Option<usize>> = vec![None; top];
    let mut next = 0usize;
    for c in color.iter_mut() {
        *c = *relabel[*c].get_or_insert_with(|| {
            let v = next;
            next += 1;
            v
        });
    }
}

/// Exact chromatic number of the graph on `nc` vertices with `edges`, with a
/// witness coloring in canonical (first-use) order. Greedy bounds close most
/// cases; the remaining window is settled by feasibility models.
pub(crate) fn chromatic(nc: usize, edges: &[(usize, usize)]) -> (usize, Vec<usize>) {
    if nc == 0 {
        return (0, Vec::new());
    }
    let mut coloring = greedy_coloring(nc, edges);
    canonicalize_coloring(&mut coloring);
    let ub = coloring.iter().max().copied().unwrap_or(0) + 1;
    let lb = greedy_clique(nc, edges);
    for t in lb..ub {
        match color_with(nc, edges, t) {
            Ok(Some(witness)) => return (t, witness),
            Ok(None) => continue,
            Err(()) => break, // Budget ran out; the greedy bound stands.
        }
    }
    (ub, coloring)
}

/// Feasibility model: proper coloring with `t` colors, or None.
fn color_with(nc: usize, edges: &[(usize, usize)], t: usize) -> Result<Option<Vec<usize>>, ()> {
    let mut model = IlpModel::new();
    let cols: Vec<Vec<VarId>> = (0..nc)
        .map(|i| {
            (0..t)
                .map(|c| model.add_var(format!("col_{i}_{c}")).unwrap())
                .collect()
        })
        .collect();
    for i in 0..nc {
        model
            .add_constraint(cols[i].iter().map(|&v| (v, 1.0)).collect(), Cmp::Eq, 1.0)
            .unwrap();
        for c in (i + 1)..t {
            model
                .add_constraint(vec![(cols[i][c], 1.0)], Cmp::Le, 0.0)
                .unwrap();
        }
    }
    for &(i, j) in edges {
        for c in 0..t {
            model
                .add_constraint(vec![(cols[i][c], 1.0), (cols[j][c], 1.0)], Cmp::Le, 1.0)
                .unwrap();
        }
    }
    let sol = milp::solve(&model, Duration::from_secs(60));
    match sol.status {
        SolveStatus::Optimal => {
            let values = sol.values.expect("feasible coloring present");
            let mut witness = vec![0usize; nc];
            for i in 0..nc {
                witness[i] = (0..t).find(|&c| values[cols[i][c].0]).unwrap();
            }
            canonicalize_coloring(&mut witness);
            Ok(Some(witness))
        }
        SolveStatus::Infeasible => Ok(None),
        SolveStatus::Timeout => Err(()),
    }
}

/// Minimum number of wavelengths admitting a feasible assignment for the
/// given backups (the chromatic number of the conflict graph).
pub fn min_wavelengths(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    backups: &[RoutedPath],
) -> Result<usize, SppError> {
    let _ = graph;
    check_primaries(primaries)?;
    let disjoint = pairwise_disjointness(primaries);
    let edges = conflict_edges(primaries, backups, &disjoint);
    Ok(chromatic(primaries.len(), &edges).0)
}

/// Full plan: heuristic backup routes, then exact wavelength assignment.
pub fn plan_spp(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    options: &SppOptions,
) -> Result<SppPlan, SppError> {
    let shared = simple_spp(graph, primaries, options.length_limit_km)?;
    plan_spp_with_backups(graph, primaries, &shared, options)
}

/// Exact wavelength assignment over already-routed backups.
pub fn plan_spp_with_backups(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    shared: &SharedBackups,
    options: &SppOptions,
) -> Result<SppPlan, SppError> {
    check_primaries(primaries)?;
    let disjoint = pairwise_disjointness(primaries);
    let edges = conflict_edges(primaries, &shared.backups, &disjoint);
    let (minimum, coloring) = chromatic(primaries.len(), &edges);
    let t_count = options.wavelengths.unwrap_or_else(|| minimum.max(1));
    let (model, vars) = build_spp_ilp(
        graph,
        primaries,
        t_count,
        RouteMode::Fixed(&shared.backups),
        options.symmetry_breaking,
    )?;

    let warm = warm_start_values(&model, &vars, shared, &coloring, t_count);
    let sol = milp::solve_with(
        &model,
        &SolveOptions {
            time_budget: options.time_budget,
            warm_start: warm,
        },
    );
    match sol.status {
        SolveStatus::Infeasible => {
            return Err(SppError::NoAssignment {
                wavelengths: t_count,
                minimum,
            })
        }
        SolveStatus::Timeout if sol.values.is_none() => return Err(SppError::Budget),
        _ => {}
    }
    let values = sol.values.expect("feasible solution present");
    let plan = extract_plan(
        graph,
        primaries,
        &vars,
        &values,
        t_count,
        Some(&shared.backups),
        shared,
        sol.status == SolveStatus::Optimal,
    )?;
    verify_spp(graph, primaries, &plan).map_err(SppError::Verify)?;
    Ok(plan)
}

/// Feasible incumbent for the fixed-route model from a witness coloring.
fn warm_start_values(
    model: &IlpModel,
    vars: &SppVars,
    shared: &SharedBackups,
    coloring: &[usize],
    t_count: usize,
) -> Option<Vec<bool>> {
    let nc = shared.backups.len();
    if coloring.iter().any(|&c| c >= t_count) {
        return None;
    }
    let mut values = vec![false; model.var_count()];
    for i in 0..nc {
        for &e in &shared.backups[i].spans {
            values[vars.y[i][e].0] = true;
            values[vars.a[e][coloring[i]].0] = true;
        }
        values[vars.n[i][coloring[i]].0] = true;
    }
    for i in 0..nc {
        for j in (i + 1)..nc {
            let span_disjoint = shared.backups[i].is_link_disjoint(&shared.backups[j]);
            values[vars.k[vars.pair(i, j, nc)].0] = span_disjoint;
        }
    }
    if model.is_feasible(&values) {
        Some(values)
    } else {
        debug_assert!(false, "witness-coloring warm start should always be feasible");
        None
    }
}

/// Joint route + wavelength optimization. Exact, but exponential in instance
/// size; intended for small cases and for auditing the heuristic pipeline.
pub fn solve_spp_exact(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    t_count: usize,
    budget: Duration,
) -> Result<SppPlan, SppError> {
    let (model, vars) = build_spp_ilp(graph, primaries, t_count, RouteMode::Free, false)?;
    let sol = milp::solve(&model, budget);
    match sol.status {
        SolveStatus::Infeasible => {
            return Err(SppError::Infeasible {
                wavelengths: t_count,
            })
        }
        SolveStatus::Timeout => return Err(SppError::Budget),
        SolveStatus::Optimal => {}
    }
    let values = sol.values.expect("optimal solution present");
    // Pooled spare for the extracted backups, for reporting parity.
    let backups = extract_backups(graph, primaries, &vars, &values)?;
    let shared = pooled_spare(graph, primaries, &backups);
    let plan = extract_plan(
        graph, primaries, &vars, &values, t_count, None, &shared, true,
    )?;
    verify_spp(graph, primaries, &plan).map_err(SppError::Verify)?;
    Ok(plan)
}

/// Recomputes the pooled (non-contiguous) spare for given backups.
fn pooled_spare(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    backups: &[RoutedPath],
) -> SharedBackups {
    let ns = graph.span_count();
    let mut usage = vec![vec![0u32; ns]; ns];
    let mut spare = vec![0usize; ns];
    for (primary, backup) in primaries.iter().zip(backups) {
        for &e in &backup.spans {
            for &f in &primary.spans {
                usage[e][f] += 1;
                spare[e] = spare[e].max(usage[e][f] as usize);
            }
        }
    }
    SharedBackups {
        backups: backups.to_vec(),
        spare_per_span: spare,
    }
}

fn extract_backups(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    vars: &SppVars,
    values: &[bool],
) -> Result<Vec<RoutedPath>, SppError> {
    primaries
        .iter()
        .map(|p| {
            let i = p.connection;
            let support: Vec<bool> = (0..graph.span_count())
                .map(|e| values[vars.y[i][e].0])
                .collect();
            walk_support(graph, i, p.source(), p.destination(), &support)
        })
        .collect()
}

/// Walks the y-support from source to destination.
///
/// Degree constraints make the walk unique: endpoints touch exactly one
/// chosen span and transit nodes at most two, so any extra support forms
/// cycles disjoint from the path, which optimal solutions only carry on
/// spans whose reservations are already paid for. The walk drops them.
fn walk_support(
    graph: &NetworkGraph,
    connection: usize,
    src: usize,
    dst: usize,
    support: &[bool],
) -> Result<RoutedPath, SppError> {
    let mut nodes = vec![src];
    let mut current = src;
    let mut arrived: Option<SpanId> = None;
    for _ in 0..graph.node_count() {
        if current == dst {
            return RoutedPath::from_nodes(connection, nodes, graph)
                .map_err(|e| SppError::Verify(e.to_string()));
        }
        let next_span = graph
            .incident_spans(current)
            .iter()
            .copied()
            .find(|&e| support[e] && Some(e) != arrived)
            .ok_or_else(|| {
                SppError::Verify(format!(
                    "backup of connection {connection} dead-ends at node {current}"
                ))
            })?;
        current = graph.span(next_span).opposite(current).unwrap();
        nodes.push(current);
        arrived = Some(next_span);
    }
    Err(SppError::Verify(format!(
        "backup walk of connection {connection} did not reach node {dst}"
    )))
}

#[allow(clippy::too_many_arguments)]
fn extract_plan(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    vars: &SppVars,
    values: &[bool],
    t_count: usize,
    fixed_backups: Option<&[RoutedPath]>,
    shared: &SharedBackups,
    optimal: bool,
) -> Result<SppPlan, SppError> {
    let backups = match fixed_backups {
        Some(b) => b.to_vec(),
        None => extract_backups(graph, primaries, vars, values)?,
    };
    let wavelength: Vec<usize> = (0..primaries.len())
        .map(|i| {
            (0..t_count)
                .find(|&t| values[vars.n[i][t].0])
                .ok_or_else(|| {
                    SppError::Verify(format!("connection {i} has no wavelength"))
                })
        })
        .collect::<Result<_, _>>()?;
    let reserved: Vec<Vec<bool>> = (0..graph.span_count())
        .map(|e| (0..t_count).map(|t| values[vars.a[e][t].0]).collect())
        .collect();
    let spare_cost: f64 = reserved
        .iter()
        .enumerate()
        .map(|(e, row)| graph.span(e).cost_km * row.iter().filter(|&&b| b).count() as f64)
        .sum();
    let working_cost: f64 = primaries.iter().map(|p| p.length_km).sum();
    Ok(SppPlan {
        backups,
        wavelength,
        reserved,
        wavelength_count: t_count,
        spare_cost,
        working_cost,
        spare_no_continuity_cost: shared.spare_cost(graph),
        optimal,
    })
}

/// Independent plan checker; returns a description of the first violation.
///
/// Recomputes everything from the graph and primaries alone: path validity,
/// primary/backup link-disjointness, reservation coverage along each backup
/// at its wavelength, the sharing rule (same wavelength on a common span
/// only for link-disjoint primaries), and both cost figures.
pub fn verify_spp(
    graph: &NetworkGraph,
    primaries: &[RoutedPath],
    plan: &SppPlan,
) -> Result<(), String> {
    let nc = primaries.len();
    if plan.backups.len() != nc || plan.wavelength.len() != nc {
        return Err("plan size does not match primaries".into());
    }
    for (i, primary) in primaries.iter().enumerate() {
        let b = &plan.backups[i];
        if b.connection != i {
            return Err(format!("backup {i} carries wrong connection index"));
        }
        if b.source() != primary.source() || b.destination() != primary.destination() {
            return Err(format!("backup {i} endpoints differ from its primary"));
        }
        let rebuilt = RoutedPath::from_nodes(i, b.nodes.clone(), graph)
            .map_err(|e| format!("backup {i}: {e}"))?;
        if rebuilt.spans != b.spans || (rebuilt.length_km - b.length_km).abs() > 1e-6 {
            return Err(format!("backup {i} is not a valid walk of the graph"));
        }
        if !b.is_link_disjoint(primary) {
            return Err(format!("backup {i} shares a span with its primary"));
        }
        let t = plan.wavelength[i];
        if t >= plan.wavelength_count {
            return Err(format!("backup {i} rides wavelength {t} out of range"));
        }
        for &e in &b.spans {
            if !plan.reserved[e][t] {
                return Err(format!(
                    "span {e} lacks a reservation on wavelength {t} for backup {i}"
                ));
            }
        }
    }
    let disjoint = pairwise_disjointness(primaries);
    for i in 0..nc {
        for j in (i + 1)..nc {
            if plan.wavelength[i] == plan.wavelength[j]
                && !disjoint.disjoint(i, j)
                && !plan.backups[i].is_link_disjoint(&plan.backups[j])
            {
                return Err(format!(
                    "connections {i} and {j} share wavelength {t} on a common span \
                     although their primaries can fail together",
                    t = plan.wavelength[i]
                ));
            }
        }
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
    if plan.spare_no_continuity_cost > plan.spare_cost + 1e-6 {
        return Err(format!(
            "pooled spare {} exceeds wavelength-granular spare {}",
            plan.spare_no_continuity_cost, plan.spare_cost
        ));
    }
    Ok(())
}

fn check_primaries(primaries: &[RoutedPath]) -> Result<(), SppError> {
    for (i, p) in primaries.iter().enumerate() {
        if p.connection != i || p.spans.is_empty() {
            return Err(SppError::BadPrimaries);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::{route_primaries, shortest_path};
    use crate::topology::{self, NetworkGraph};
    use rand::Rng;
    use rand::SeedableRng;

    fn square() -> NetworkGraph {
        NetworkGraph::parse(
            "node 0 a\nnode 1 b\nnode 2 c\nnode 3 d\n\
             span 0 0 1 1\nspan 1 1 2 1\nspan 2 2 3 1\nspan 3 0 3 1\n",
        )
        .unwrap()
    }

    /// All simple paths from src to dst avoiding `forbidden` spans.
    fn all_backup_paths(
        graph: &NetworkGraph,
        connection: usize,
        src: usize,
        dst: usize,
        forbidden: &std::collections::BTreeSet<SpanId>,
    ) -> Vec<RoutedPath> {
        fn dfs(
            graph: &NetworkGraph,
            current: usize,
            dst: usize,
            forbidden: &std::collections::BTreeSet<SpanId>,
            path: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if current == dst {
                out.push(path.clone());
                return;
            }
            for &sid in graph.incident_spans(current) {
                if forbidden.contains(&sid) {
                    continue;
                }
                let next = graph.span(sid).opposite(current).unwrap();
                if path.contains(&next) {
                    continue;
                }
                path.push(next);
                dfs(graph, next, dst, forbidden, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        let mut path = vec![src];
        dfs(graph, src, dst, forbidden, &mut path, &mut out);
        out.into_iter()
            .map(|nodes| RoutedPath::from_nodes(connection, nodes, graph).unwrap())
            .collect()
    }

    /// Exhaustive optimum of the joint model: every combination of backup
    /// paths and wavelength assignments.
    fn enumerate_joint_optimum(
        graph: &NetworkGraph,
        primaries: &[RoutedPath],
        t_count: usize,
    ) -> Option<f64> {
        let nc = primaries.len();
        let disjoint = pairwise_disjointness(primaries);
        let choices: Vec<Vec<RoutedPath>> = primaries
            .iter()
            .map(|p| {
                all_backup_paths(graph, p.connection, p.source(), p.destination(), &p.span_set())
            })
            .collect();
        if choices.iter().any(Vec::is_empty) {
            return None;
        }
        let mut best: Option<f64> = None;
        let mut combo = vec![0usize; nc];
        loop {
            let backups: Vec<&RoutedPath> =
                combo.iter().zip(&choices).map(|(&c, v)| &v[c]).collect();
            let mut colors = vec![0usize; nc];
            loop {
                let ok = (0..nc).all(|i| {
                    ((i + 1)..nc).all(|j| {
                        colors[i] != colors[j]
                            || disjoint.disjoint(i, j)
                            || backups[i].is_link_disjoint(backups[j])
                    })
                });
                if ok {
                    let mut cost = 0.0;
                    for e in 0..graph.span_count() {
                        let used: std::collections::BTreeSet<usize> = (0..nc)
                            .filter(|&i| backups[i].span_set().contains(&e))
                            .map(|i| colors[i])
                            .collect();
                        cost += graph.span(e).cost_km * used.len() as f64;
                    }
                    if best.map_or(true, |b| cost < b - 1e-9) {
                        best = Some(cost);
                    }
                }
                // Next coloring.
                let mut i = 0;
                loop {
                    if i == nc {
                        break;
                    }
                    colors[i] += 1;
                    if colors[i] < t_count {
                        break;
                    }
                    colors[i] = 0;
                    i += 1;
                }
                if i == nc {
                    break;
                }
            }
            // Next path combo.
            let mut i = 0;
            loop {
                if i == nc {
                    return best;
                }
                combo[i] += 1;
                if combo[i] < choices[i].len() {
                    break;
                }
                combo[i] = 0;
                i += 1;
            }
        }
    }

    fn square_pair() -> (NetworkGraph, Vec<RoutedPath>) {
        let g = square();
        let primaries = vec![
            shortest_path(&g, 0, 0, 2).unwrap(),
            shortest_path(&g, 1, 1, 3).unwrap(),
        ];
        (g, primaries)
    }

    #[test]
    fn heuristic_backups_avoid_primaries_and_are_deterministic() {
        let g = topology::cost239();
        let primaries = route_primaries(&g, crate::demand::generate_uniform(&g).demands()).unwrap();
        let a = simple_spp(&g, &primaries, 4000.0).unwrap();
        let b = simple_spp(&g, &primaries, 4000.0).unwrap();
        assert_eq!(a, b);
        for (p, bkp) in primaries.iter().zip(&a.backups) {
            assert!(bkp.is_link_disjoint(p), "connection {}", p.connection);
            assert!(bkp.length_km <= 4000.0 * (1.0 + 1e-9));
            assert_eq!(bkp.source(), p.source());
            assert_eq!(bkp.destination(), p.destination());
        }
    }

    #[test]
    fn heuristic_sharing_beats_dedicated_reservation() {
        let g = topology::cost239();
        let primaries = route_primaries(&g, crate::demand::generate_uniform(&g).demands()).unwrap();
        let shared = simple_spp(&g, &primaries, 4000.0).unwrap();
        let dedicated: f64 = shared.backups.iter().map(|b| b.length_km).sum();
        assert!(
            shared.spare_cost(&g) < dedicated,
            "pooled spare {} should undercut dedicated {}",
            shared.spare_cost(&g),
            dedicated
        );
    }

    #[test]
    fn heuristic_length_limit_is_enforced() {
        let g = square();
        let primaries = vec![shortest_path(&g, 0, 0, 2).unwrap()];
        // The only disjoint backup 0-3-2 is 2 km long; a 1 km cap kills it.
        let err = simple_spp(&g, &primaries, 1.0).unwrap_err();
        assert!(matches!(err, SppError::NoBackup { connection: 0, .. }));
    }

    #[test]
    fn heuristic_prefers_reserved_spans_over_shorter_fresh_ones() {
        // Two identical demands: the second backup should reuse the first
        // one's reservation only where the sharing rule allows; with equal
        // primaries (not disjoint) it must not share, so spare doubles on
        // the reused span.
        let g = square();
        let primaries = vec![
            shortest_path(&g, 0, 0, 2).unwrap(),
            shortest_path(&g, 1, 0, 2).unwrap(),
        ];
        let shared = simple_spp(&g, &primaries, f64::INFINITY).unwrap();
        assert_eq!(shared.backups[0].nodes, shared.backups[1].nodes);
        let e03 = g.span_between(0, 3).unwrap().id;
        assert_eq!(shared.spare_per_span[e03], 2);
    }

    #[test]
    fn exact_joint_model_matches_enumeration_on_square() {
        let (g, primaries) = square_pair();
        let plan = solve_spp_exact(&g, &primaries, 2, Duration::from_secs(30)).unwrap();
        let oracle = enumerate_joint_optimum(&g, &primaries, 2).unwrap();
        assert!(
            (plan.spare_cost - oracle).abs() < 1e-6,
            "solver {} vs oracle {oracle}",
            plan.spare_cost
        );
        assert!(plan.optimal);
        verify_spp(&g, &primaries, &plan).unwrap();
    }

    #[test]
    fn exact_joint_model_matches_enumeration_on_random_graphs() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(99);
        let mut checked = 0;
        for _ in 0..40 {
            // Ring of 5 plus random chords keeps degree >= 2 everywhere.
            let n = 5;
            let mut text = String::new();
            for v in 0..n {
                text.push_str(&format!("node {v} n{v}\n"));
            }
            let mut spans: Vec<(usize, usize)> = (0..n).map(|v| (v, (v + 1) % n)).collect();
            for u in 0..n {
                for v in (u + 2)..n {
                    if (u, v) != (0, n - 1) && rng.gen_bool(0.4) {
                        spans.push((u, v));
                    }
                }
            }
            for (id, (u, v)) in spans.iter().enumerate() {
                let km = rng.gen_range(1..=5);
                text.push_str(&format!("span {id} {u} {v} {km}\n"));
            }
            let g = NetworkGraph::parse(&text).unwrap();
            let mut pairs = Vec::new();
            while pairs.len() < 2 {
                let s = rng.gen_range(0..n);
                let d = rng.gen_range(0..n);
                if s != d {
                    pairs.push((s, d));
                }
            }
            let primaries: Vec<RoutedPath> = pairs
                .iter()
                .enumerate()
                .map(|(i, &(s, d))| shortest_path(&g, i, s, d).unwrap())
                .collect();
            let t_count = rng.gen_range(1..=2);
            let oracle = enumerate_joint_optimum(&g, &primaries, t_count);
            match solve_spp_exact(&g, &primaries, t_count, Duration::from_secs(30)) {
                Ok(plan) => {
                    let oracle = oracle.expect("solver found a plan the oracle missed");
                    assert!(
                        (plan.spare_cost - oracle).abs() < 1e-6,
                        "solver {} vs oracle {oracle}",
                        plan.spare_cost
                    );
                    checked += 1;
                }
                Err(SppError::Infeasible { .. }) => assert!(oracle.is_none()),
                Err(other) => panic!("unexpected error {other}"),
            }
        }
        assert!(checked >= 20, "only {checked} solvable instances checked");
    }

    #[test]
    fn pipeline_plan_verifies_on_cost239_group() {
        let g = topology::cost239();
        let demands = crate::demand::generate_uniform(&g);
        let primaries = route_primaries(&g, &demands.demands()[..10]).unwrap();
        let options = SppOptions {
            length_limit_km: 4000.0,
            ..SppOptions::default()
        };
        let plan = plan_spp(&g, &primaries, &options).unwrap();
        assert!(plan.optimal);
        verify_spp(&g, &primaries, &plan).unwrap();
        assert!(plan.spare_no_continuity_cost <= plan.spare_cost + 1e-9);
        assert!(plan.scap() > 0.0);
        let again = plan_spp(&g, &primaries, &options).unwrap();
        assert_eq!(plan, again);
    }

    #[test]
    fn symmetry_rows_do_not_change_the_optimum() {
        let g = topology::cost239();
        let demands = crate::demand::generate_uniform(&g);
        let primaries = route_primaries(&g, &demands.demands()[..6]).unwrap();
        let shared = simple_spp(&g, &primaries, 4000.0).unwrap();
        let t = min_wavelengths(&g, &primaries, &shared.backups).unwrap().max(1);
        let mut costs = Vec::new();
        for flag in [false, true] {
            let (model, _) =
                build_spp_ilp(&g, &primaries, t, RouteMode::Fixed(&shared.backups), flag)
                    .unwrap();
            let sol = milp::solve(&model, Duration::from_secs(60));
            assert_eq!(sol.status, SolveStatus::Optimal);
            costs.push(sol.objective.unwrap());
        }
        assert!((costs[0] - costs[1]).abs() < 1e-6, "{costs:?}");
    }

    #[test]
    fn repeated_demands_stack_wavelengths() {
        // Three copies of the same demand: primaries collide pairwise, and
        // all backups take the same detour, so three wavelengths are needed.
        let g = square();
        let primaries: Vec<RoutedPath> = (0..3)
            .map(|i| shortest_path(&g, i, 0, 1).unwrap())
            .collect();
        let shared = simple_spp(&g, &primaries, f64::INFINITY).unwrap();
        let t = min_wavelengths(&g, &primaries, &shared.backups).unwrap();
        assert_eq!(t, 3);
        let plan = plan_spp(&g, &primaries, &SppOptions::default()).unwrap();
        assert_eq!(plan.wavelength_count, 3);
        // Backup 0-3-2-1 is 3 km; three contiguous copies cost 9.
        assert!((plan.spare_cost - 9.0).abs() < 1e-6);
        let mut ws = plan.wavelength.clone();
        ws.sort_unstable();
        assert_eq!(ws, vec![0, 1, 2]);
    }

    #[test]
    fn disjoint_primaries_share_one_wavelength() {
        let (g, primaries) = square_pair();
        // Primaries [0,1,2] and [1,0,3] share span 0-1: not disjoint, and the
        // backups [0,3,2] and [1,2,3] share span 2-3, so two wavelengths.
        let shared = simple_spp(&g, &primaries, f64::INFINITY).unwrap();
        assert_eq!(
            min_wavelengths(&g, &primaries, &shared.backups).unwrap(),
            2
        );
        // A pair with link-disjoint primaries colors with one wavelength.
        let far = vec![
            shortest_path(&g, 0, 0, 1).unwrap(),
            shortest_path(&g, 1, 2, 3).unwrap(),
        ];
        let shared_far = simple_spp(&g, &far, f64::INFINITY).unwrap();
        assert_eq!(min_wavelengths(&g, &far, &shared_far.backups).unwrap(), 1);
    }

    #[test]
    fn verify_rejects_corrupted_plans() {
        let g = topology::cost239();
        let demands = crate::demand::generate_uniform(&g);
        let primaries = route_primaries(&g, &demands.demands()[..5]).unwrap();
        let plan = plan_spp(
            &g,
            &primaries,
            &SppOptions {
                length_limit_km: 4000.0,
                ..SppOptions::default()
            },
        )
        .unwrap();

        let mut missing = plan.clone();
        let t = missing.wavelength[0];
        let e = missing.backups[0].spans[0];
        missing.reserved[e][t] = false;
        let err = verify_spp(&g, &primaries, &missing).unwrap_err();
        assert!(err.contains("reservation"), "{err}");

        let mut crossed = plan.clone();
        crossed.backups.swap(0, 1);
        assert!(verify_spp(&g, &primaries, &crossed).is_err());

        let mut overstated = plan;
        overstated.spare_cost += 100.0;
        let err = verify_spp(&g, &primaries, &overstated).unwrap_err();
        assert!(err.contains("spare cost"), "{err}");
    }

    #[test]
    fn label_search_minimizes_incremental_cost_then_length() {
        // Oracle: enumerate all simple paths and pick the (price, km)
        // lexicographic minimum; the label search must agree on both values.
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(4242);
        for _ in 0..60 {
            let n = 6;
            let mut text = String::new();
            for v in 0..n {
                text.push_str(&format!("node {v} n{v}\n"));
            }
            let mut spans: Vec<(usize, usize)> = (0..n).map(|v| (v, (v + 1) % n)).collect();
            for u in 0..n {
                for v in (u + 2)..n {
                    if (u, v) != (0, n - 1) && rng.gen_bool(0.3) {
                        spans.push((u, v));
                    }
                }
            }
            let mut text2 = text.clone();
            for (id, (u, v)) in spans.iter().enumerate() {
                text2.push_str(&format!("span {id} {u} {v} {}\n", rng.gen_range(1..=4)));
            }
            let g = NetworkGraph::parse(&text2).unwrap();
            let price: Vec<f64> = (0..g.span_count())
                .map(|_| if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(1..=6) as f64 })
                .collect();
            let (src, dst) = (0usize, 3usize);
            let limit = rng.gen_range(4..=12) as f64;
            let forbidden = vec![false; g.span_count()];

            let got = cheapest_restricted_path(&g, src, dst, &price, &forbidden, limit);
            // Oracle.
            let all = all_backup_paths(
                &g,
                0,
                src,
                dst,
                &std::collections::BTreeSet::new(),
            );
            let mut best: Option<(f64, f64)> = None;
            for p in &all {
                if p.length_km > limit * (1.0 + 1e-9) {
                    continue;
                }
                let c: f64 = p.spans.iter().map(|&e| price[e]).sum();
                let key = (c, p.length_km);
                if best.map_or(true, |b| key.0 < b.0 - 1e-9 || ((key.0 - b.0).abs() < 1e-9 && key.1 < b.1 - 1e-9)) {
                    best = Some(key);
                }
            }
            match (got, best) {
                (None, None) => {}
                (Some(nodes), Some((bc, bk))) => {
                    let p = RoutedPath::from_nodes(0, nodes, &g).unwrap();
                    let c: f64 = p.spans.iter().map(|&e| price[e]).sum();
                    assert!((c - bc).abs() < 1e-9, "cost {c} vs oracle {bc}");
                    assert!((p.length_km - bk).abs() < 1e-9, "km {} vs {bk}", p.length_km);
                }
                (got, best) => panic!("search {got:?} disagrees with oracle {best:?}"),
            }
        }
    }

    #[test]
    fn triangle_detour_costs_two_spans() {
        let g = NetworkGraph::parse(
            "node 0 a\nnode 1 b\nnode 2 c\nspan 0 0 1 1\nspan 1 1 2 1\nspan 2 0 2 1\n",
        )
        .unwrap();
        let primaries = vec![shortest_path(&g, 0, 0, 1).unwrap()];
        let shared = simple_spp(&g, &primaries, f64::INFINITY).unwrap();
        assert_eq!(shared.backups[0].nodes, vec![0, 2, 1]);
        let plan = plan_spp(&g, &primaries, &SppOptions::default()).unwrap();
        assert_eq!(plan.wavelength_count, 1);
        assert!((plan.spare_cost - 2.0).abs() < 1e-9);
        assert!((plan.scap() - 200.0).abs() < 1e-9);
    }

    #[test]
    fn more_wavelengths_never_cost_more() {
        let g = topology::cost239();
        let demands = crate::demand::generate_uniform(&g);
        let primaries = route_primaries(&g, &demands.demands()[..8]).unwrap();
        let shared = simple_spp(&g, &primaries, 4000.0).unwrap();
        let base = min_wavelengths(&g, &primaries, &shared.backups).unwrap().max(1);
        let mut previous = f64::INFINITY;
        for t in base..base + 3 {
            let plan = plan_spp_with_backups(
                &g,
                &primaries,
                &shared,
                &SppOptions {
                    wavelengths: Some(t),
                    ..SppOptions::default()
                },
            )
            .unwrap();
            assert!(
                plan.spare_cost <= previous + 1e-9,
                "T={t}: {} after {previous}",
                plan.spare_cost
            );
            previous = plan.spare_cost;
        }
    }

    #[test]
    fn fixing_heuristic_routes_never_beats_free_routing() {
        let (g, primaries) = square_pair();
        let t = 2;
        let free = solve_spp_exact(&g, &primaries, t, Duration::from_secs(30)).unwrap();
        let shared = simple_spp(&g, &primaries, f64::INFINITY).unwrap();
        let fixed = plan_spp_with_backups(
            &g,
            &primaries,
            &shared,
            &SppOptions {
                wavelengths: Some(t),
                ..SppOptions::default()
            },
        )
        .unwrap();
        assert!(fixed.spare_cost >= free.spare_cost - 1e-9);
    }

    #[test]
    fn model_has_the_documented_variable_count() {
        let (g, primaries) = square_pair();
        let t = 2;
        let (model, _) = build_spp_ilp(&g, &primaries, t, RouteMode::Free, false).unwrap();
        let nc = primaries.len();
        let ns = g.span_count();
        assert_eq!(
            model.var_count(),
            nc * ns + nc * t + ns * t + nc * (nc - 1) / 2
        );
    }
}
