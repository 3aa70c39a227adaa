//! Network graphs with bidirectional spans.
//!
//! A graph is a set of named nodes plus a set of spans. Each span joins two
//! distinct nodes, carries a positive cost in km, and stands for a pair of
//! opposite directed links. Planning code mostly works at span granularity;
//! [`link_views`] exposes the directed view where per-node flow matters.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

/// Index of a node inside its [`NetworkGraph`].
pub type NodeId = usize;
/// Index of a span inside its [`NetworkGraph`].
pub type SpanId = usize;

/// Errors produced while parsing or validating a topology.
#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("graph validation failed: {0}")]
    Validation(String),
}

/// A network node: switching site with an optional population weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    /// Population weight for gravity traffic, in arbitrary units (0 if absent).
    pub population: f64,
}

/// A bidirectional span between two nodes with a km cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Span {
    pub id: SpanId,
    pub a: NodeId,
    pub b: NodeId,
    pub cost_km: f64,
}

impl Span {
    /// The endpoint opposite to `n`, if `n` is an endpoint at all.
    pub fn opposite(&self, n: NodeId) -> Option<NodeId> {
        if n == self.a {
            Some(self.b)
        } else if n == self.b {
            Some(self.a)
        } else {
            None
        }
    }

    /// True if `n` is one of the two endpoints.
    pub fn touches(&self, n: NodeId) -> bool {
        self.a == n || self.b == n
    }
}

/// One directed half of a span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectedLink {
    pub span: SpanId,
    pub from: NodeId,
    pub to: NodeId,
}

/// Per-node incoming/outgoing directed links, ordered by span id.
#[derive(Debug, Clone)]
pub struct DirectedLinkView {
    pub incoming: Vec<Vec<DirectedLink>>,
    pub outgoing: Vec<Vec<DirectedLink>>,
}

/// An undirected mesh built from `node` and `span` records.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    spans: Vec<Span>,
    /// Span ids incident to each node, sorted ascending.
    adjacency: Vec<Vec<SpanId>>,
}

impl NetworkGraph {
    /// Builds a graph from parts and validates it.
    pub fn new(nodes: Vec<Node>, spans: Vec<Span>) -> Result<Self, TopologyError> {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for span in &spans {
            if span.a >= nodes.len() || span.b >= nodes.len() {
                return Err(TopologyError::Validation(format!(
                    "span {} references unknown node",
                    span.id
                )));
            }
            adjacency[span.a].push(span.id);
            adjacency[span.b].push(span.id);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let graph = NetworkGraph {
            nodes,
            spans,
            adjacency,
        };
        graph.validate()?;
        Ok(graph)
    }

    /// Parses the text format: `node <id> <name> [population]`,
    /// `span <id> <u> <v> <cost_km>`, `#` comments, blank lines ignored.
    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut nodes: Vec<Node> = Vec::new();
        let mut spans: Vec<Span> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            match fields[0] {
                "node" => {
                    if fields.len() != 3 && fields.len() != 4 {
                        return Err(TopologyError::Parse {
                            line,
                            msg: "expected `node <id> <name> [population]`".into(),
                        });
                    }
                    let id: NodeId = parse_field(fields[1], line, "node id")?;
                    if id != nodes.len() {
                        return Err(TopologyError::Parse {
                            line,
                            msg: format!("node ids must be dense and ascending, got {id}"),
                        });
                    }
                    let population = if fields.len() == 4 {
                        parse_field(fields[3], line, "population")?
                    } else {
                        0.0
                    };
                    nodes.push(Node {
                        id,
                        name: fields[2].to_string(),
                        population,
                    });
                }
                "span" => {
                    if fields.len() != 5 {
                        return Err(TopologyError::Parse {
                            line,
                            msg: "expected `span <id> <u> <v> <cost_km>`".into(),
                        });
                    }
                    let id: SpanId = parse_field(fields[1], line, "span id")?;
                    if id != spans.len() {
                        return Err(TopologyError::Parse {
                            line,
                            msg: format!("span ids must be dense and ascending, got {id}"),
                        });
                    }
                    spans.push(Span {
                        id,
                        a: parse_field(fields[2], line, "span endpoint")?,
                        b: parse_field(fields[3], line, "span endpoint")?,
                        cost_km: parse_field(fields[4], line, "span cost")?,
                    });
                }
                other => {
                    return Err(TopologyError::Parse {
                        line,
                        msg: format!("unknown record `{other}`"),
                    });
                }
            }
        }
        NetworkGraph::new(nodes, spans)
    }

    /// Serializes back to the text format; `parse(to_text(g))` reproduces `g`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            if n.population > 0.0 {
                let _ = writeln!(out, "node {} {} {}", n.id, n.name, fmt_num(n.population));
            } else {
                let _ = writeln!(out, "node {} {}", n.id, n.name);
            }
        }
        for s in &self.spans {
            let _ = writeln!(out, "span {} {} {} {}", s.id, s.a, s.b, fmt_num(s.cost_km));
        }
        out
    }

    fn validate(&self) -> Result<(), TopologyError> {
        if self.nodes.is_empty() {
            return Err(TopologyError::Validation("graph has no nodes".into()));
        }
        let mut seen_pairs: HashSet<(NodeId, NodeId)> = HashSet::new();
        for span in &self.spans {
            if span.a == span.b {
                return Err(TopologyError::Validation(format!(
                    "span {} is a self-loop at node {}",
                    span.id, span.a
                )));
            }
            if !(span.cost_km > 0.0) {
                return Err(TopologyError::Validation(format!(
                    "span {} has non-positive cost {}",
                    span.id, span.cost_km
                )));
            }
            let key = (span.a.min(span.b), span.a.max(span.b));
            if !seen_pairs.insert(key) {
                return Err(TopologyError::Validation(format!(
                    "duplicate span between nodes {} and {}",
                    key.0, key.1
                )));
            }
        }
        for node in &self.nodes {
            if self.adjacency[node.id].len() < 2 {
                return Err(TopologyError::Validation(format!(
                    "node {} ({}) has degree {} (< 2), no protection routing possible",
                    node.id,
                    node.name,
                    self.adjacency[node.id].len()
                )));
            }
        }
        // Connectivity sweep from node 0.
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        visited[0] = true;
        while let Some(v) = stack.pop() {
            for &sid in &self.adjacency[v] {
                let next = self.spans[sid].opposite(v).unwrap();
                if !visited[next] {
                    visited[next] = true;
                    stack.push(next);
                }
            }
        }
        if let Some(orphan) = visited.iter().position(|&v| !v) {
            return Err(TopologyError::Validation(format!(
                "node {orphan} is unreachable from node 0"
            )));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn span_count(&self) -> usize {
        self.spans.len()
    }

    pub fn span(&self, id: SpanId) -> &Span {
        &self.spans[id]
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    /// Span ids incident to `n`, ascending.
    pub fn incident_spans(&self, n: NodeId) -> &[SpanId] {
        &self.adjacency[n]
    }

    pub fn degree(&self, n: NodeId) -> usize {
        self.adjacency[n].len()
    }

    /// The span joining `u` and `v`, if any.
    pub fn span_between(&self, u: NodeId, v: NodeId) -> Option<&Span> {
        self.adjacency.get(u)?.iter().map(|&sid| &self.spans[sid]).find(
            |s| s.opposite(u) == Some(v),
        )
    }

    /// Total km cost of a set of spans.
    pub fn total_cost(&self, spans: impl IntoIterator<Item = SpanId>) -> f64 {
        spans.into_iter().map(|sid| self.spans[sid].cost_km).sum()
    }

    /// Looks a node up by name.
    pub fn node_by_name(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }
}

/// Expands every span into its two directed links, grouped per node.
pub fn link_views(graph: &NetworkGraph) -> DirectedLinkView {
    let mut incoming = vec![Vec::new(); graph.node_count()];
    let mut outgoing = vec![Vec::new(); graph.node_count()];
    for span in graph.spans() {
        for (from, to) in [(span.a, span.b), (span.b, span.a)] {
            let link = DirectedLink {
                span: span.id,
                from,
                to,
            };
            outgoing[from].push(link);
            incoming[to].push(link);
        }
    }
    DirectedLinkView { incoming, outgoing }
}

/// The COST 239 pan-European core (11 nodes, 26 spans), bundled.
pub fn cost239() -> NetworkGraph {
    NetworkGraph::parse(include_str!("../data/cost239.topo"))
        .expect("bundled COST 239 topology is valid")
}

/// The NSFNET T1 backbone (14 nodes, 21 spans), bundled.
pub fn nsfnet() -> NetworkGraph {
    NetworkGraph::parse(include_str!("../data/nsfnet.topo"))
        .expect("bundled NSFNET topology is valid")
}

/// Formats a float without a trailing `.0` when it is integral.
pub(crate) fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn parse_field<T: std::str::FromStr>(
    field: &str,
    line: usize,
    what: &str,
) -> Result<T, TopologyError> {
    field.parse().map_err(|_| TopologyError::Parse {
        line,
        msg: format!("invalid {what} `{field}`"),
    })
}

/// Handy triangle graph used across unit tests: 3 nodes, 3 unit spans.
#[cfg(test)]
pub(crate) fn triangle() -> NetworkGraph {
    NetworkGraph::parse(
        "node 0 a\nnode 1 b\nnode 2 c\n\
         span 0 0 1 1\nspan 1 1 2 1\nspan 2 0 2 1\n",
    )
    .unwrap()
}
