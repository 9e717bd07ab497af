use super::{Edge, GraphError, GtcGraph, NodeId, START};
use crate::alphabet::{Alphabet, Symbol, BLANK};
use crate::wfst::{Wfst, WfstError, EPSILON};

/// CTC topology for a single transcription.
///
/// Nodes alternate blank / label / blank / ... / blank; each has a self-loop,
/// and a label node may jump straight to the next label node when the two
/// labels differ. All weights are 1.
pub fn ctc_linear_graph(labels: &[Symbol], alphabet: &Alphabet) -> Result<GtcGraph, GraphError> {
    if labels.is_empty() {
        return Err(GraphError::EmptyLabels);
    }
    for &l in labels {
        if l == BLANK {
            return Err(GraphError::BlankLabel);
        }
        if !alphabet.contains(l) {
            return Err(GraphError::UnknownSymbol(l));
        }
    }
    let n = 2 * labels.len() + 1;
    let end = n + 1;
    let mut node_labels = Vec::with_capacity(n);
    for &l in labels {
        node_labels.push(BLANK);
        node_labels.push(l);
    }
    node_labels.push(BLANK);

    let mut edges = vec![Edge::new(START, 1, 1.0), Edge::new(START, 2, 1.0)];
    for g in 1..=n {
        edges.push(Edge::new(g, g, 1.0));
        if g < n {
            edges.push(Edge::new(g, g + 1, 1.0));
        }
        // label nodes sit at even ids
        if g % 2 == 0 && g + 2 <= n && node_labels[g - 1] != node_labels[g + 1] {
            edges.push(Edge::new(g, g + 2, 1.0));
        }
    }
    edges.push(Edge::new(n - 1, end, 1.0));
    edges.push(Edge::new(n, end, 1.0));
    GtcGraph::new(node_labels, edges)
}

/// CTC-style graph from an ε-free acyclic acceptor with negative-log weights.
///
/// Each state becomes a blank node and each arc a node carrying the arc's
/// label; all emitting nodes get a self-loop of weight 1. The arc probability
/// sits on every edge entering its node: from the source state's blank, from
/// the start node when leaving the start state, and from a preceding arc's
/// node when the blank between them is skipped (allowed only when the two
/// labels differ). Edges into the end node carry the final probability of
/// the state they finish in.
pub fn wfst_to_ctc_graph(fst: &Wfst, alphabet: &Alphabet) -> Result<GtcGraph, GraphError> {
    fst.validate()?;
    let has_eps = fst.states().any(|s| {
        fst.arcs(s)
            .iter()
            .any(|a| a.ilabel == EPSILON || a.olabel == EPSILON)
    });
    if has_eps {
        return Err(WfstError::EpsilonArcs.into());
    }
    if !fst.is_acceptor() {
        return Err(WfstError::NotAcceptor.into());
    }
    fst.topo_order()?;
    let fst = fst.connect()?;
    let start = fst.start().unwrap();

    // Input ids: 0 start, 1..=S blank per state, then one node per arc, then end.
    let num_states = fst.num_states();
    let blank = |s: usize| -> NodeId { 1 + s };
    let mut labels: Vec<Symbol> = vec![BLANK; num_states];
    let mut arcs = Vec::new();
    for s in fst.states() {
        for a in fst.arcs(s) {
            if !alphabet.contains(a.ilabel) {
                return Err(GraphError::UnknownSymbol(a.ilabel));
            }
            arcs.push((s, *a, 1 + num_states + arcs.len()));
            labels.push(a.ilabel);
        }
    }
    let end = labels.len() + 1;
    let prob = |w: f64| (-w).exp();

    let mut edges = Vec::new();
    edges.push(Edge::new(START, blank(start), 1.0));
    for s in fst.states() {
        edges.push(Edge::new(blank(s), blank(s), 1.0));
        if fst.is_final(s) {
            edges.push(Edge::new(blank(s), end, prob(fst.final_weight(s))));
        }
    }
    for &(src, arc, node) in &arcs {
        let p = prob(arc.weight);
        edges.push(Edge::new(node, node, 1.0));
        edges.push(Edge::new(blank(src), node, p));
        edges.push(Edge::new(node, blank(arc.nextstate), 1.0));
        if src == start {
            edges.push(Edge::new(START, node, p));
        }
        if fst.is_final(arc.nextstate) {
            edges.push(Edge::new(node, end, prob(fst.final_weight(arc.nextstate))));
        }
    }
    // Blank skips: arc into s followed by arc out of s.
    for &(_, into, from_node) in &arcs {
        for &(src, out, to_node) in &arcs {
            if src == into.nextstate && into.ilabel != out.ilabel {
                edges.push(Edge::new(from_node, to_node, prob(out.weight)));
            }
        }
    }
    GtcGraph::from_unordered(labels, edges)
}
