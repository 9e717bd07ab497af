//! Node-labeled supervision graphs.
//!
//! Node 0 is the non-emitting start, node `G + 1` the non-emitting end, and
//! nodes `1..=G` each emit one alphabet symbol (possibly the blank). Edges
//! carry transition probabilities. Apart from self-loops every edge goes
//! from a lower to a higher node id, which is the order the trellis sweeps.

mod build;
mod io;

use std::collections::{HashSet, VecDeque};

use thiserror::Error;

use crate::alphabet::{Symbol, BLANK};
use crate::wfst::{Arc, Wfst, WfstError, EPSILON};

pub use build::{ctc_linear_graph, wfst_to_ctc_graph};

pub type NodeId = usize;

pub const START: NodeId = 0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("label sequence is empty")]
    EmptyLabels,
    #[error("symbol {0} is not in the alphabet")]
    UnknownSymbol(Symbol),
    #[error("blank cannot be used as a label")]
    BlankLabel,
    #[error("graph has no emitting nodes")]
    NoEmittingNodes,
    #[error("node id {0} out of range")]
    InvalidNode(NodeId),
    #[error("start node has an incoming edge from {0}")]
    StartHasIncoming(NodeId),
    #[error("end node has an outgoing edge to {0}")]
    EndHasOutgoing(NodeId),
    #[error("edge {src}->{dst} violates the node order")]
    NotTopological { src: NodeId, dst: NodeId },
    #[error("node {0} is not on any start-to-end path")]
    Disconnected(NodeId),
    #[error("edge {src}->{dst} has invalid weight {weight}")]
    InvalidWeight { src: NodeId, dst: NodeId, weight: f64 },
    #[error("duplicate edge {src}->{dst}")]
    DuplicateEdge { src: NodeId, dst: NodeId },
    #[error("reference length must be positive")]
    EmptyReference,
    #[error(transparent)]
    Wfst(#[from] WfstError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    /// Transition probability, finite and positive.
    pub weight: f64,
}

impl Edge {
    pub fn new(src: NodeId, dst: NodeId, weight: f64) -> Self {
        Self { src, dst, weight }
    }

    pub fn is_self_loop(&self) -> bool {
        self.src == self.dst
    }
}

/// One length-T walk through a graph, start and end nodes included.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnfoldedPath(pub Vec<NodeId>);

impl UnfoldedPath {
    /// Emitting nodes only.
    pub fn frames(&self) -> &[NodeId] {
        &self.0[1..self.0.len() - 1]
    }
}

/// For every symbol, the nodes that emit it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolIndex {
    nodes: Vec<Vec<NodeId>>,
}

impl SymbolIndex {
    pub fn nodes(&self, sym: Symbol) -> &[NodeId] {
        self.nodes.get(sym as usize).map_or(&[], Vec::as_slice)
    }

    pub fn num_symbols(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtcGraph {
    labels: Vec<Symbol>,
    edges: Vec<Edge>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

impl GtcGraph {
    /// Builds a graph from the labels of nodes `1..=G` and its edges,
    /// checking every structural invariant.
    pub fn new(labels: Vec<Symbol>, mut edges: Vec<Edge>) -> Result<Self, GraphError> {
        if labels.is_empty() {
            return Err(GraphError::NoEmittingNodes);
        }
        let end = labels.len() + 1;
        edges.sort_by_key(|e| (e.src, e.dst));
        for w in edges.windows(2) {
            if (w[0].src, w[0].dst) == (w[1].src, w[1].dst) {
                return Err(GraphError::DuplicateEdge {
                    src: w[0].src,
                    dst: w[0].dst,
                });
            }
        }
        for e in &edges {
            if e.src > end {
                return Err(GraphError::InvalidNode(e.src));
            }
            if e.dst > end {
                return Err(GraphError::InvalidNode(e.dst));
            }
            if e.dst == START {
                return Err(GraphError::StartHasIncoming(e.src));
            }
            if e.src == end {
                return Err(GraphError::EndHasOutgoing(e.dst));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(GraphError::InvalidWeight {
                    src: e.src,
                    dst: e.dst,
                    weight: e.weight,
                });
            }
            if e.src > e.dst || (e.src == e.dst && (e.src == START || e.src == end)) {
                return Err(GraphError::NotTopological {
                    src: e.src,
                    dst: e.dst,
                });
            }
        }
        let n = end + 1;
        let mut incoming = vec![Vec::new(); n];
        let mut outgoing = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            incoming[e.dst].push(i);
            outgoing[e.src].push(i);
        }
        let g = Self {
            labels,
            edges,
            incoming,
            outgoing,
        };
        g.check_connected()?;
        Ok(g)
    }

    /// Like [`GtcGraph::new`], but first renumbers nodes into breadth-first
    /// topological order. `labels[i]` belongs to input node `i + 1`; input
    /// node ids follow the same start/end convention.
    pub fn from_unordered(labels: Vec<Symbol>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let n = labels.len() + 2;
        let end = n - 1;
        let mut indeg = vec![0usize; n];
        let mut succ: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for e in &edges {
            if e.src >= n || e.dst >= n {
                return Err(GraphError::InvalidNode(e.src.max(e.dst)));
            }
            if !e.is_self_loop() {
                indeg[e.dst] += 1;
                succ[e.src].push(e.dst);
            }
        }
        for s in &mut succ {
            s.sort_unstable();
        }
        let mut order = vec![START];
        let mut queue = VecDeque::from([START]);
        while let Some(u) = queue.pop_front() {
            for &v in &succ[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 && v != end {
                    order.push(v);
                    queue.push_back(v);
                }
            }
        }
        if order.len() != n - 1 {
            let missing = (1..end).find(|v| !order.contains(v)).unwrap_or(end);
            return Err(GraphError::Disconnected(missing));
        }
        order.push(end);
        let mut rank = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            rank[old] = new;
        }
        let new_labels = order[1..n - 1].iter().map(|&old| labels[old - 1]).collect();
        let new_edges = edges
            .iter()
            .map(|e| Edge::new(rank[e.src], rank[e.dst], e.weight))
            .collect();
        Self::new(new_labels, new_edges)
    }

    fn check_connected(&self) -> Result<(), GraphError> {
        let n = self.num_nodes();
        let mut fwd = vec![false; n];
        fwd[START] = true;
        for g in 0..n {
            if fwd[g] {
                for e in self.outgoing(g) {
                    fwd[e.dst] = true;
                }
            }
        }
        let mut bwd = vec![false; n];
        bwd[self.end()] = true;
        for g in (0..n).rev() {
            if bwd[g] {
                for e in self.incoming(g) {
                    bwd[e.src] = true;
                }
            }
        }
        match (0..n).find(|&g| !(fwd[g] && bwd[g])) {
            Some(g) => Err(GraphError::Disconnected(g)),
            None => Ok(()),
        }
    }

    /// Number of emitting nodes `G`.
    pub fn num_emitting(&self) -> usize {
        self.labels.len()
    }

    /// `G + 2`.
    pub fn num_nodes(&self) -> usize {
        self.labels.len() + 2
    }

    pub fn end(&self) -> NodeId {
        self.labels.len() + 1
    }

    /// `None` for the start and end nodes.
    pub fn label(&self, g: NodeId) -> Option<Symbol> {
        if g == START || g >= self.end() {
            None
        } else {
            Some(self.labels[g - 1])
        }
    }

    /// Labels of nodes `1..=G`.
    pub fn labels(&self) -> &[Symbol] {
        &self.labels
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn incoming(&self, g: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.incoming[g].iter().map(move |&i| &self.edges[i])
    }

    pub fn outgoing(&self, g: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.outgoing[g].iter().map(move |&i| &self.edges[i])
    }

    pub fn max_symbol(&self) -> Symbol {
        self.labels.iter().copied().max().unwrap_or(BLANK)
    }

    pub fn symbol_index(&self, num_symbols: usize) -> SymbolIndex {
        let mut nodes = vec![Vec::new(); num_symbols];
        for (i, &l) in self.labels.iter().enumerate() {
            if let Some(v) = nodes.get_mut(l as usize) {
                v.push(i + 1);
            }
        }
        SymbolIndex { nodes }
    }

    /// Copy with every transition weight set to 1.
    pub fn with_unit_weights(&self) -> GtcGraph {
        let mut g = self.clone();
        for e in &mut g.edges {
            e.weight = 1.0;
        }
        g
    }

    /// Number of non-blank emitting nodes.
    pub fn num_label_nodes(&self) -> usize {
        self.labels.iter().filter(|&&l| l != BLANK).count()
    }

    /// Non-blank node count divided by the reference length.
    pub fn density(&self, ref_len: usize) -> Result<f64, GraphError> {
        if ref_len == 0 {
            return Err(GraphError::EmptyReference);
        }
        Ok(self.num_label_nodes() as f64 / ref_len as f64)
    }

    /// Every walk that spends exactly `frames` steps on emitting nodes.
    ///
    /// The result grows exponentially with `frames`; meant for small graphs.
    pub fn unfold(&self, frames: usize) -> Vec<UnfoldedPath> {
        let mut out = Vec::new();
        if frames == 0 {
            return out;
        }
        let end = self.end();
        // reach[t][g]: can g at emitting step t still finish at end?
        let mut reach = vec![vec![false; self.num_nodes()]; frames + 1];
        for e in self.incoming(end) {
            reach[frames][e.src] = true;
        }
        for t in (1..frames).rev() {
            for g in 1..end {
                reach[t][g] = self.outgoing(g).any(|e| e.dst != end && reach[t + 1][e.dst]);
            }
        }
        let mut path = vec![START];
        self.unfold_from(frames, &reach, &mut path, &mut out);
        out
    }

    fn unfold_from(
        &self,
        frames: usize,
        reach: &[Vec<bool>],
        path: &mut Vec<NodeId>,
        out: &mut Vec<UnfoldedPath>,
    ) {
        let t = path.len();
        let here = *path.last().unwrap();
        if t == frames + 1 {
            let mut p = path.clone();
            p.push(self.end());
            out.push(UnfoldedPath(p));
            return;
        }
        for e in self.outgoing(here) {
            if e.dst != self.end() && reach[t][e.dst] {
                path.push(e.dst);
                self.unfold_from(frames, reach, path, out);
                path.pop();
            }
        }
    }

    /// Label string of a walk: repeated consecutive labels merged, then
    /// blanks removed.
    pub fn collapse(&self, path: &UnfoldedPath) -> Vec<Symbol> {
        let mut out = Vec::new();
        let mut prev = None;
        for &g in path.frames() {
            let l = self.labels[g - 1];
            if Some(l) != prev && l != BLANK {
                out.push(l);
            }
            prev = Some(l);
        }
        out
    }

    /// Acceptor over the label strings the graph can emit.
    ///
    /// Every node becomes a state; entering a non-blank node reads its label,
    /// entering a blank node or the end is ε. Self-loops are dropped, so the
    /// result is acyclic. All weights are zero.
    pub fn label_acceptor(&self, label_space: u32) -> Wfst {
        let mut f = Wfst::new(label_space);
        f.add_states(self.num_nodes());
        f.set_start(START);
        f.set_final(self.end(), 0.0);
        let mut seen = HashSet::new();
        for e in self.edges.iter().filter(|e| !e.is_self_loop()) {
            let label = self.label(e.dst).unwrap_or(EPSILON);
            if seen.insert((e.src, e.dst)) {
                f.add_arc(e.src, Arc::accept(label, 0.0, e.dst));
            }
        }
        f
    }
}
