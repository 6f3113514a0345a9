//! Undirected labeled graphs, ego-network extraction and hop distances.
//!
//! Nodes are identified by their canonical label. Adjacency is kept in
//! ordered maps so that two graphs built from the same edge set compare
//! equal regardless of insertion order, and every traversal is
//! deterministic.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("self-loop on node `{0}` is not allowed")]
    SelfLoop(String),
    #[error("node label must be nonempty")]
    EmptyLabel,
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("edge weight {weight} on {u}--{v} must be finite and nonnegative")]
    InvalidWeight { u: String, v: String, weight: f64 },
    #[error("edge list line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Stable node identity. The canonical label doubles as the identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(label: impl Into<String>) -> Result<Self, GraphError> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        Ok(NodeId(label))
    }

    pub fn label(&self) -> &str {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for NodeId {
    type Err = GraphError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeId::new(s)
    }
}

/// Hop distance from a BFS source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Hops(usize),
    Unreachable,
}

impl Distance {
    pub fn hops(self) -> Option<usize> {
        match self {
            Distance::Hops(h) => Some(h),
            Distance::Unreachable => None,
        }
    }

    pub fn within(self, bound: usize) -> bool {
        matches!(self, Distance::Hops(h) if h <= bound)
    }
}

/// Undirected simple graph with optional nonnegative edge weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Graph {
    adj: BTreeMap<NodeId, BTreeMap<NodeId, f64>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from unweighted label pairs.
    pub fn from_edges<'a, I>(edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut g = Graph::new();
        for (u, v) in edges {
            g.add_edge(&NodeId::new(u)?, &NodeId::new(v)?, None)?;
        }
        Ok(g)
    }

    pub fn add_node(&mut self, node: &NodeId) {
        self.adj.entry(node.clone()).or_default();
    }

    /// Inserts `{u, v}` with weight `w` (default 1). Re-adding an existing
    /// edge replaces its weight.
    pub fn add_edge(&mut self, u: &NodeId, v: &NodeId, w: Option<f64>) -> Result<(), GraphError> {
        if u == v {
            return Err(GraphError::SelfLoop(u.to_string()));
        }
        let weight = w.unwrap_or(1.0);
        if !weight.is_finite() || weight < 0.0 {
            return Err(GraphError::InvalidWeight {
                u: u.to_string(),
                v: v.to_string(),
                weight,
            });
        }
        self.adj
            .entry(u.clone())
            .or_default()
            .insert(v.clone(), weight);
        self.adj
            .entry(v.clone())
            .or_default()
            .insert(u.clone(), weight);
        Ok(())
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.adj.contains_key(node)
    }

    pub fn has_edge(&self, u: &NodeId, v: &NodeId) -> bool {
        self.adj.get(u).is_some_and(|n| n.contains_key(v))
    }

    pub fn weight(&self, u: &NodeId, v: &NodeId) -> Option<f64> {
        self.adj.get(u).and_then(|n| n.get(v)).copied()
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(BTreeMap::len).sum::<usize>() / 2
    }

    /// Nodes in canonical (label) order.
    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.adj.keys()
    }

    pub fn neighbors(&self, node: &NodeId) -> Result<impl Iterator<Item = &NodeId>, GraphError> {
        self.adj
            .get(node)
            .map(|n| n.keys())
            .ok_or_else(|| GraphError::UnknownNode(node.to_string()))
    }

    pub fn degree(&self, node: &NodeId) -> Result<usize, GraphError> {
        self.adj
            .get(node)
            .map(BTreeMap::len)
            .ok_or_else(|| GraphError::UnknownNode(node.to_string()))
    }

    /// Each undirected edge once, as `(u, v, weight)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (&NodeId, &NodeId, f64)> {
        self.adj.iter().flat_map(|(u, nbrs)| {
            nbrs.iter()
                .filter(move |(v, _)| u < *v)
                .map(move |(v, w)| (u, v, *w))
        })
    }

    /// Subgraph induced by `keep`. Labels not in the graph are ignored.
    pub fn induced_subgraph(&self, keep: &BTreeSet<NodeId>) -> Graph {
        let mut adj = BTreeMap::new();
        for node in keep {
            if let Some(nbrs) = self.adj.get(node) {
                let kept: BTreeMap<NodeId, f64> = nbrs
                    .iter()
                    .filter(|(v, _)| keep.contains(*v))
                    .map(|(v, w)| (v.clone(), *w))
                    .collect();
                adj.insert(node.clone(), kept);
            }
        }
        Graph { adj }
    }

    /// Unweighted BFS hop counts from `source` to every node of the graph.
    pub fn geodesic_distances(
        &self,
        source: &NodeId,
    ) -> Result<BTreeMap<NodeId, Distance>, GraphError> {
        let indexed = self.indexed();
        let s = indexed
            .index_of(source)
            .ok_or_else(|| GraphError::UnknownNode(source.to_string()))?;
        let hops = indexed.bfs(s);
        Ok(indexed
            .labels
            .iter()
            .zip(hops)
            .map(|(label, h)| {
                let d = h.map_or(Distance::Unreachable, Distance::Hops);
                (label.clone(), d)
            })
            .collect())
    }

    /// The ego, its neighbours, and every edge among them.
    pub fn ego_network(&self, ego: &NodeId) -> Result<EgoNetwork, GraphError> {
        let nbrs = self
            .adj
            .get(ego)
            .ok_or_else(|| GraphError::UnknownNode(ego.to_string()))?;
        let mut keep: BTreeSet<NodeId> = nbrs.keys().cloned().collect();
        keep.insert(ego.clone());
        Ok(EgoNetwork {
            ego: ego.clone(),
            graph: self.induced_subgraph(&keep),
        })
    }

    /// Dense index snapshot used by the traversal and enumeration kernels.
    pub fn indexed(&self) -> IndexedGraph {
        let labels: Vec<NodeId> = self.adj.keys().cloned().collect();
        let position: BTreeMap<&NodeId, usize> =
            labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
        let neighbors = self
            .adj
            .values()
            .map(|nbrs| nbrs.keys().map(|v| position[v]).collect())
            .collect();
        IndexedGraph { labels, neighbors }
    }

    /// Reads the tab-separated edge-list format: `u<TAB>v[<TAB>weight]`,
    /// `#` comments and blank lines skipped.
    pub fn read_edge_list<R: BufRead>(reader: R) -> Result<Graph, GraphError> {
        let mut g = Graph::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| GraphError::Io(e.to_string()))?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            let parse_err = |message: String| GraphError::Parse {
                line: lineno,
                message,
            };
            match fields.as_slice() {
                [u] => g.add_node(&NodeId::new(u.trim()).map_err(|e| parse_err(e.to_string()))?),
                [u, v] | [u, v, ""] => {
                    let u = NodeId::new(u.trim()).map_err(|e| parse_err(e.to_string()))?;
                    let v = NodeId::new(v.trim()).map_err(|e| parse_err(e.to_string()))?;
                    g.add_edge(&u, &v, None)
                        .map_err(|e| parse_err(e.to_string()))?;
                }
                [u, v, w] => {
                    let u = NodeId::new(u.trim()).map_err(|e| parse_err(e.to_string()))?;
                    let v = NodeId::new(v.trim()).map_err(|e| parse_err(e.to_string()))?;
                    let w: f64 = w
                        .trim()
                        .parse()
                        .map_err(|_| parse_err(format!("bad weight `{w}`")))?;
                    g.add_edge(&u, &v, Some(w))
                        .map_err(|e| parse_err(e.to_string()))?;
                }
                _ => {
                    return Err(parse_err(format!(
                        "expected 2 or 3 fields, got {}",
                        fields.len()
                    )))
                }
            }
        }
        Ok(g)
    }

    /// Writes edges in canonical order. Isolated nodes are written as
    /// single-field lines so they survive a round trip.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (node, nbrs) in &self.adj {
            if nbrs.is_empty() {
                writeln!(out, "{node}")?;
            }
        }
        for (u, v, w) in self.edges() {
            if w == 1.0 {
                writeln!(out, "{u}\t{v}")?;
            } else {
                writeln!(out, "{u}\t{v}\t{w}")?;
            }
        }
        Ok(())
    }
}

/// Ego plus alters plus alter–alter ties.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoNetwork {
    ego: NodeId,
    graph: Graph,
}

impl EgoNetwork {
    /// Checks the ego-network invariants: ego present, every other node
    /// adjacent to it.
    pub fn new(ego: NodeId, graph: Graph) -> Result<Self, GraphError> {
        if !graph.contains(&ego) {
            return Err(GraphError::UnknownNode(ego.to_string()));
        }
        if let Some(stray) = graph
            .nodes()
            .find(|n| *n != &ego && !graph.has_edge(&ego, n))
        {
            return Err(GraphError::UnknownNode(format!(
                "{stray} (not adjacent to ego {ego})"
            )));
        }
        Ok(EgoNetwork { ego, graph })
    }

    pub fn ego(&self) -> &NodeId {
        &self.ego
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn alters(&self) -> impl Iterator<Item = &NodeId> {
        self.graph.nodes().filter(move |n| *n != &self.ego)
    }
}

/// Index-based adjacency view; node `i` carries `labels[i]`.
#[derive(Debug, Clone)]
pub struct IndexedGraph {
    pub labels: Vec<NodeId>,
    pub neighbors: Vec<Vec<usize>>,
}

impl IndexedGraph {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, node: &NodeId) -> Option<usize> {
        self.labels.binary_search(node).ok()
    }

    pub fn bfs(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Adjacency of the `n`-th power: `i ~ j` iff `0 < dist(i, j) <= n`.
    pub fn power(&self, n: usize) -> IndexedGraph {
        let neighbors = (0..self.len())
            .map(|s| {
                self.bfs(s)
                    .into_iter()
                    .enumerate()
                    .filter(|&(t, d)| t != s && d.is_some_and(|d| d <= n))
                    .map(|(t, _)| t)
                    .collect()
            })
            .collect();
        IndexedGraph {
            labels: self.labels.clone(),
            neighbors,
        }
    }
}
