//! Primary-path routing and pairwise link-disjointness.
//!
//! Working paths are km-shortest paths. Ties are broken by the
//! lexicographically smallest node-id sequence so that routing is fully
//! deterministic across runs and platforms.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::demand::Demand;
use crate::topology::{NetworkGraph, NodeId, SpanId};

/// Relative tolerance used when comparing km path lengths.
const LENGTH_EPS: f64 = 1e-9;

/// Errors from path routing.
#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("no path between nodes {from} and {to}")]
    NoPath { from: NodeId, to: NodeId },
    #[error("invalid endpoints: source {from}, destination {to}")]
    BadEndpoints { from: NodeId, to: NodeId },
}

/// A loop-free walk through the graph, with its km length.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutedPath {
    /// Index of the connection this path serves.
    pub connection: usize,
    /// Node sequence from source to destination.
    pub nodes: Vec<NodeId>,
    /// Spans traversed, in path order; `spans.len() == nodes.len() - 1`.
    pub spans: Vec<SpanId>,
    /// Total km cost.
    pub length_km: f64,
}

impl RoutedPath {
    /// Builds a path from a node sequence, resolving the spans in between.
    pub fn from_nodes(
        connection: usize,
        nodes: Vec<NodeId>,
        graph: &NetworkGraph,
    ) -> Result<Self, RoutingError> {
        let mut spans = Vec::with_capacity(nodes.len().saturating_sub(1));
        let mut length_km = 0.0;
        for w in nodes.windows(2) {
            let span = graph
                .span_between(w[0], w[1])
                .ok_or(RoutingError::NoPath {
                    from: w[0],
                    to: w[1],
                })?;
            spans.push(span.id);
            length_km += span.cost_km;
        }
        Ok(RoutedPath {
            connection,
            nodes,
            spans,
            length_km,
        })
    }

    pub fn source(&self) -> NodeId {
        *self.nodes.first().expect("path has nodes")
    }

    pub fn destination(&self) -> NodeId {
        *self.nodes.last().expect("path has nodes")
    }

    pub fn hop_count(&self) -> usize {
        self.spans.len()
    }

    /// The spans as an ordered set, for disjointness checks.
    pub fn span_set(&self) -> BTreeSet<SpanId> {
        self.spans.iter().copied().collect()
    }

    /// True when the two paths have no span in common.
    pub fn is_link_disjoint(&self, other: &RoutedPath) -> bool {
        let mine = self.span_set();
        !other.spans.iter().any(|s| mine.contains(s))
    }
}

/// Symmetric 0/1 matrix of pairwise link-disjointness, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DisjointnessMatrix {
    n: usize,
    bits: Vec<bool>,
}

impl DisjointnessMatrix {
    /// Size of the matrix (number of paths).
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// 1 when paths `i` and `j` share no span; the diagonal is fixed to 0.
    pub fn disjoint(&self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        self.bits[i * self.n + j]
    }
}

/// Km-shortest path from `source` to `destination`; among equally short
/// paths, the lexicographically smallest node sequence wins.
pub fn shortest_path(
    graph: &NetworkGraph,
    connection: usize,
    source: NodeId,
    destination: NodeId,
) -> Result<RoutedPath, RoutingError> {
    if source == destination
        || source >= graph.node_count()
        || destination >= graph.node_count()
    {
        return Err(RoutingError::BadEndpoints {
            from: source,
            to: destination,
        });
    }
    let dist_to_dest = dijkstra_from(graph, destination);
    if dist_to_dest[source].is_infinite() {
        return Err(RoutingError::NoPath {
            from: source,
            to: destination,
        });
    }
    // Walk greedily toward the destination, always taking the smallest next
    // node id that still lies on some shortest path. Every step strictly
    // decreases the remaining distance, so the walk terminates.
    let mut nodes = vec![source];
    let mut current = source;
    while current != destination {
        let remaining = dist_to_dest[current];
        let mut next: Option<NodeId> = None;
        for &sid in graph.incident_spans(current) {
            let span = graph.span(sid);
            let neighbor = span.opposite(current).unwrap();
            if close(span.cost_km + dist_to_dest[neighbor], remaining)
                && next.map_or(true, |best| neighbor < best)
            {
                next = Some(neighbor);
            }
        }
        let next = next.expect("shortest-path walk must progress");
        nodes.push(next);
        current = next;
    }
    RoutedPath::from_nodes(connection, nodes, graph)
}

/// Shortest primary path for each demand, in demand order.
pub fn route_primaries(
    graph: &NetworkGraph,
    demands: &[Demand],
) -> Result<Vec<RoutedPath>, RoutingError> {
    demands
        .iter()
        .enumerate()
        .map(|(i, d)| shortest_path(graph, i, d.source, d.destination))
        .collect()
}

/// Pairwise link-disjointness over a family of paths.
pub fn pairwise_disjointness(paths: &[RoutedPath]) -> DisjointnessMatrix {
    let n = paths.len();
    let sets: Vec<BTreeSet<SpanId>> = paths.iter().map(RoutedPath::span_set).collect();
    let mut bits = vec![false; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let disjoint = sets[i].intersection(&sets[j]).next().is_none();
            bits[i * n + j] = disjoint;
            bits[j * n + i] = disjoint;
        }
    }
    DisjointnessMatrix { n, bits }
}

/// Greedy clique among `members` under a pairwise conflict predicate.
/// Members are taken highest conflict degree first (index breaks ties), so
/// the result is deterministic.
pub(crate) fn greedy_conflict_clique(
    members: &[usize],
    conflict: impl Fn(usize, usize) -> bool,
) -> Vec<usize> {
    let mut order: Vec<(usize, usize)> = members
        .iter()
        .map(|&v| {
            let d = members
                .iter()
                .filter(|&&u| u != v && conflict(v, u))
                .count();
            (v, d)
        })
        .collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut clique: Vec<usize> = Vec::new();
    for (v, _) in order {
        if clique.iter().all(|&u| conflict(v, u)) {
            clique.push(v);
        }
    }
    clique.sort_unstable();
    clique
}

/// All-nodes km distances from `origin` (plain Dijkstra).
pub fn dijkstra_from(graph: &NetworkGraph, origin: NodeId) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.node_count()];
    let mut done = vec![false; graph.node_count()];
    dist[origin] = 0.0;
    loop {
        // Graphs here are tiny; a linear scan is simpler than a heap and
        // keeps the node selection order fully deterministic.
        let mut pick: Option<NodeId> = None;
        for v in 0..graph.node_count() {
            if !done[v]
                && dist[v].is_finite()
                && pick.map_or(true, |p| dist[v] < dist[p])
            {
                pick = Some(v);
            }
        }
        let Some(v) = pick else { break };
        done[v] = true;
        for &sid in graph.incident_spans(v) {
            let span = graph.span(sid);
            let u = span.opposite(v).unwrap();
            let candidate = dist[v] + span.cost_km;
            if candidate < dist[u] && !close(candidate, dist[u]) {
                dist[u] = candidate;
            }
        }
    }
    dist
}

fn close(a: f64, b: f64) -> bool {
    if !(a.is_finite() && b.is_finite()) {
        return a == b;
    }
    (a - b).abs() <= LENGTH_EPS * (1.0 + a.abs().max(b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{self, NetworkGraph};

    /// Exhaustive oracle: every simple path via DFS, then minimum length and
    /// lexicographically smallest node sequence.
    fn brute_force_shortest(
        graph: &NetworkGraph,
        source: NodeId,
        destination: NodeId,
    ) -> Option<Vec<NodeId>> {
        fn dfs(
            graph: &NetworkGraph,
            current: NodeId,
            destination: NodeId,
            path: &mut Vec<NodeId>,
            length: f64,
            best: &mut Option<(f64, Vec<NodeId>)>,
        ) {
            if current == destination {
                let better = match best {
                    None => true,
                    Some((len, nodes)) => {
                        length < *len - 1e-9 || ((length - *len).abs() <= 1e-9 && path < nodes)
                    }
                };
                if better {
                    *best = Some((length, path.clone()));
                }
                return;
            }
            for &sid in graph.incident_spans(current) {
                let span = graph.span(sid);
                let next = span.opposite(current).unwrap();
                if path.contains(&next) {
                    continue;
                }
                path.push(next);
                dfs(graph, next, destination, path, length + span.cost_km, best);
                path.pop();
            }
        }
        let mut best = None;
        let mut path = vec![source];
        dfs(graph, source, destination, &mut path, 0.0, &mut best);
        best.map(|(_, nodes)| nodes)
    }

    #[test]
    fn matches_brute_force_on_cost239() {
        let g = topology::cost239();
        for s in 0..g.node_count() {
            for d in 0..g.node_count() {
                if s == d {
                    continue;
                }
                let fast = shortest_path(&g, 0, s, d).unwrap();
                let oracle = brute_force_shortest(&g, s, d).unwrap();
                assert_eq!(fast.nodes, oracle, "pair ({s},{d})");
            }
        }
    }

    #[test]
    fn matches_brute_force_on_nsfnet() {
        let g = topology::nsfnet();
        for s in 0..g.node_count() {
            for d in (s + 1)..g.node_count() {
                let fast = shortest_path(&g, 0, s, d).unwrap();
                let oracle = brute_force_shortest(&g, s, d).unwrap();
                assert_eq!(fast.nodes, oracle, "pair ({s},{d})");
            }
        }
    }

    #[test]
    fn tie_break_prefers_smaller_node_ids() {
        // Square ring: both two-hop routes between opposite corners tie.
        let g = NetworkGraph::parse(
            "node 0 a\nnode 1 b\nnode 2 c\nnode 3 d\n\
             span 0 0 1 1\nspan 1 1 2 1\nspan 2 2 3 1\nspan 3 0 3 1\n",
        )
        .unwrap();
        assert_eq!(shortest_path(&g, 0, 0, 2).unwrap().nodes, vec![0, 1, 2]);
        // From 1 to 3 the candidates are [1,0,3] and [1,2,3]; lex picks 0.
        assert_eq!(shortest_path(&g, 0, 1, 3).unwrap().nodes, vec![1, 0, 3]);
    }

    #[test]
    fn path_invariants_hold() {
        let g = topology::cost239();
        let p = shortest_path(&g, 7, 0, 10).unwrap();
        assert_eq!(p.connection, 7);
        assert_eq!(p.source(), 0);
        assert_eq!(p.destination(), 10);
        assert_eq!(p.spans.len(), p.nodes.len() - 1);
        let mut seen = std::collections::HashSet::new();
        assert!(p.nodes.iter().all(|n| seen.insert(*n)), "loop-free");
        let total: f64 = p.spans.iter().map(|&s| g.span(s).cost_km).sum();
        assert!((total - p.length_km).abs() < 1e-9);
    }

    #[test]
    fn bad_endpoints_are_rejected() {
        let g = topology::triangle();
        assert!(shortest_path(&g, 0, 1, 1).is_err());
        assert!(shortest_path(&g, 0, 0, 99).is_err());
    }

    #[test]
    fn route_primaries_preserves_order() {
        let g = topology::cost239();
        let set = crate::demand::generate_uniform(&g);
        let paths = route_primaries(&g, set.demands()).unwrap();
        assert_eq!(paths.len(), set.len());
        for (i, (p, d)) in paths.iter().zip(set.demands()).enumerate() {
            assert_eq!(p.connection, i);
            assert_eq!(p.source(), d.source);
            assert_eq!(p.destination(), d.destination);
        }
    }

    #[test]
    fn disjointness_matrix_is_symmetric_with_zero_diagonal() {
        let g = topology::cost239();
        let set = crate::demand::generate_uniform(&g);
        let paths = route_primaries(&g, set.demands()).unwrap();
        let m = pairwise_disjointness(&paths);
        for i in 0..m.len() {
            assert!(!m.disjoint(i, i));
            for j in 0..m.len() {
                assert_eq!(m.disjoint(i, j), m.disjoint(j, i));
                if i != j {
                    // Oracle: direct span-set intersection.
                    let expected = paths[i].is_link_disjoint(&paths[j]);
                    assert_eq!(m.disjoint(i, j), expected);
                }
            }
        }
    }

    #[test]
    fn adjacent_nodes_route_over_their_span() {
        let g = topology::cost239();
        let p = shortest_path(&g, 0, 0, 1).unwrap();
        assert_eq!(p.nodes, vec![0, 1]);
        assert_eq!(p.length_km, 370.0);
    }
}
