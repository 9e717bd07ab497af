//! The GTC objective: forward/backward recursions over a supervision graph,
//! the loss `-ln p(G|X)` and its gradient with respect to the logits.
//!
//! All trellis values are costs (negative natural logs). Trellises have
//! `T + 2` rows and `G + 2` columns: row 0 holds only the start node, rows
//! `1..=T` the emitting nodes at each frame, and row `T + 1` only the end
//! node, so that `alpha[T+1][G+1] == beta[0][0] == -ln p(G|X)`.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{GtcGraph, START};
use crate::posterior::{LogitMatrix, PosteriorMatrix};
use crate::semiring::neg_log_add;

/// Posteriors are clamped to this floor before taking logs.
pub const POSTERIOR_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GtcError {
    #[error("node {node} has symbol {symbol} but the posteriors have {num_symbols} symbols")]
    LabelOutOfRange {
        node: usize,
        symbol: u32,
        num_symbols: usize,
    },
    #[error("infeasible: no length-T path")]
    Infeasible,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid posteriors: {0}")]
    InvalidPosterior(String),
    #[error("frame {t} outside 1..={frames}")]
    FrameOutOfRange { t: usize, frames: usize },
}

/// Forward and backward trellises of one (graph, posteriors) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrellisState {
    pub alpha: Array2<f64>,
    pub beta: Array2<f64>,
    /// `-ln p(G|X)`, `+inf` when infeasible.
    pub neg_log_prob: f64,
}

impl TrellisState {
    pub fn is_feasible(&self) -> bool {
        self.neg_log_prob < f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad {
    pub loss: f64,
    /// `∂L/∂u`, one row per frame.
    pub grad: Array2<f64>,
}

fn check_labels(graph: &GtcGraph, num_symbols: usize) -> Result<(), GtcError> {
    for (i, &l) in graph.labels().iter().enumerate() {
        if l as usize >= num_symbols {
            return Err(GtcError::LabelOutOfRange {
                node: i + 1,
                symbol: l,
                num_symbols,
            });
        }
    }
    Ok(())
}

/// `-ln y` per frame and symbol, floored.
fn emission_costs(post: &PosteriorMatrix) -> Array2<f64> {
    post.values().mapv(|y| -y.max(POSTERIOR_FLOOR).ln())
}

/// ⊕ over `(value, weight)` pairs given as costs, in two passes.
#[inline]
fn lse<I: Iterator<Item = f64> + Clone>(costs: I) -> f64 {
    let min = costs.clone().fold(f64::INFINITY, f64::min);
    if min == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = costs.map(|c| (min - c).exp()).sum();
    min - s.ln()
}

struct CostGraph {
    /// (src, -ln w) per node
    incoming: Vec<Vec<(usize, f64)>>,
    /// (dst, -ln w) per node
    outgoing: Vec<Vec<(usize, f64)>>,
}

impl CostGraph {
    fn new(graph: &GtcGraph) -> Self {
        let n = graph.num_nodes();
        let mut incoming = vec![Vec::new(); n];
        let mut outgoing = vec![Vec::new(); n];
        for e in graph.edges() {
            let c = -e.weight.ln();
            incoming[e.dst].push((e.src, c));
            outgoing[e.src].push((e.dst, c));
        }
        Self { incoming, outgoing }
    }
}

fn forward_costs(graph: &GtcGraph, cg: &CostGraph, ycost: &Array2<f64>) -> Array2<f64> {
    let frames = ycost.nrows();
    let n = graph.num_nodes();
    let end = graph.end();
    let mut alpha = Array2::from_elem((frames + 2, n), f64::INFINITY);
    alpha[[0, START]] = 0.0;
    for t in 1..=frames {
        let (prev, mut cur) = alpha.multi_slice_mut((ndarray::s![t - 1, ..], ndarray::s![t, ..]));
        for g in 1..end {
            let acc = lse(cg.incoming[g].iter().map(|&(h, c)| prev[h] + c));
            if acc < f64::INFINITY {
                cur[g] = acc + ycost[[t - 1, graph.labels()[g - 1] as usize]];
            }
        }
    }
    alpha[[frames + 1, end]] = lse(cg.incoming[end].iter().map(|&(h, c)| alpha[[frames, h]] + c));
    alpha
}

fn backward_costs(graph: &GtcGraph, cg: &CostGraph, ycost: &Array2<f64>) -> Array2<f64> {
    let frames = ycost.nrows();
    let n = graph.num_nodes();
    let end = graph.end();
    let mut beta = Array2::from_elem((frames + 2, n), f64::INFINITY);
    beta[[frames + 1, end]] = 0.0;
    for t in (1..=frames).rev() {
        let (mut cur, next) = beta.multi_slice_mut((ndarray::s![t, ..], ndarray::s![t + 1, ..]));
        for g in 1..end {
            let acc = lse(cg.outgoing[g].iter().map(|&(h, c)| next[h] + c));
            if acc < f64::INFINITY {
                cur[g] = acc + ycost[[t - 1, graph.labels()[g - 1] as usize]];
            }
        }
    }
    beta[[0, START]] = lse(cg.outgoing[START].iter().map(|&(h, c)| beta[[1, h]] + c));
    beta
}

/// Forward variables `alpha[t][g]` as costs.
pub fn forward(graph: &GtcGraph, post: &PosteriorMatrix) -> Result<Array2<f64>, GtcError> {
    check_labels(graph, post.num_symbols())?;
    Ok(forward_costs(
        graph,
        &CostGraph::new(graph),
        &emission_costs(post),
    ))
}

/// Backward variables `beta[t][g]` as costs; `beta[t][g]` includes frame t's
/// emission.
pub fn backward(graph: &GtcGraph, post: &PosteriorMatrix) -> Result<Array2<f64>, GtcError> {
    check_labels(graph, post.num_symbols())?;
    Ok(backward_costs(
        graph,
        &CostGraph::new(graph),
        &emission_costs(post),
    ))
}

pub fn trellis(graph: &GtcGraph, post: &PosteriorMatrix) -> Result<TrellisState, GtcError> {
    check_labels(graph, post.num_symbols())?;
    let cg = CostGraph::new(graph);
    let ycost = emission_costs(post);
    let alpha = forward_costs(graph, &cg, &ycost);
    let beta = backward_costs(graph, &cg, &ycost);
    let neg_log_prob = alpha[[post.frames() + 1, graph.end()]];
    Ok(TrellisState {
        alpha,
        beta,
        neg_log_prob,
    })
}

/// `ln p(G|X)` assembled at frame `t` (1-based) as the sum over emitting
/// nodes of `alpha_t(g) beta_t(g) / y_t(l(g))`. Returns `-inf` when no path
/// passes through frame `t`.
pub fn log_probability_at(
    alpha: &Array2<f64>,
    beta: &Array2<f64>,
    post: &PosteriorMatrix,
    graph: &GtcGraph,
    t: usize,
) -> Result<f64, GtcError> {
    let shape = (post.frames() + 2, graph.num_nodes());
    if alpha.dim() != shape || beta.dim() != shape {
        return Err(GtcError::ShapeMismatch(format!(
            "trellis {:?}/{:?}, expected {shape:?}",
            alpha.dim(),
            beta.dim()
        )));
    }
    if t == 0 || t > post.frames() {
        return Err(GtcError::FrameOutOfRange {
            t,
            frames: post.frames(),
        });
    }
    check_labels(graph, post.num_symbols())?;
    let mut acc = f64::INFINITY;
    for g in 1..graph.end() {
        let y = post
            .get(t - 1, graph.labels()[g - 1] as usize)
            .max(POSTERIOR_FLOOR);
        let c = alpha[[t, g]] + beta[[t, g]] + y.ln();
        acc = neg_log_add(acc, c);
    }
    Ok(-acc)
}

/// `-ln p(G|X)`; `+inf` when the graph has no walk of length T.
pub fn loss(graph: &GtcGraph, post: &PosteriorMatrix) -> Result<f64, GtcError> {
    check_labels(graph, post.num_symbols())?;
    let alpha = forward_costs(graph, &CostGraph::new(graph), &emission_costs(post));
    Ok(alpha[[post.frames() + 1, graph.end()]])
}

fn gradient_from(
    graph: &GtcGraph,
    post: &PosteriorMatrix,
    state: &TrellisState,
) -> Result<Array2<f64>, GtcError> {
    if !state.is_feasible() {
        return Err(GtcError::Infeasible);
    }
    let k = post.num_symbols();
    let index = graph.symbol_index(k);
    let nlp = state.neg_log_prob;
    let mut grad = post.values().clone();
    for (t0, mut row) in grad.axis_iter_mut(Axis(0)).enumerate() {
        let t = t0 + 1;
        for sym in 0..k {
            let nodes = index.nodes(sym as u32);
            if nodes.is_empty() {
                continue;
            }
            let occ = lse(nodes.iter().map(|&g| state.alpha[[t, g]] + state.beta[[t, g]]));
            if occ == f64::INFINITY {
                continue;
            }
            let ycost = -post.get(t0, sym).max(POSTERIOR_FLOOR).ln();
            row[sym] -= (-occ + ycost + nlp).exp();
        }
    }
    Ok(grad)
}

/// `∂L/∂u[t][k] = y[t][k] - Σ_{g: l(g)=k} alpha_t(g) beta_t(g) / (y[t][k] p(G|X))`.
pub fn gradient(graph: &GtcGraph, post: &PosteriorMatrix) -> Result<Array2<f64>, GtcError> {
    let state = trellis(graph, post)?;
    gradient_from(graph, post, &state)
}

/// Loss and logit gradient from a single pair of trellis sweeps.
pub fn loss_and_gradient(graph: &GtcGraph, post: &PosteriorMatrix) -> Result<LossAndGrad, GtcError> {
    let state = trellis(graph, post)?;
    let grad = gradient_from(graph, post, &state)?;
    Ok(LossAndGrad {
        loss: state.neg_log_prob,
        grad,
    })
}

/// Softmax, loss and gradient for every item, in parallel. Results are in
/// input order and do not depend on the number of worker threads.
pub fn loss_and_grad_batch(items: &[(&GtcGraph, &LogitMatrix)]) -> Vec<Result<LossAndGrad, GtcError>> {
    items
        .par_iter()
        .map(|(graph, logits)| loss_and_gradient(graph, &logits.softmax()))
        .collect()
}
