//! Brute-force reference computations for tests.
//!
//! Everything here works by explicit enumeration in linear probability space
//! with compensated summation, and reads graphs and automata only through
//! their public accessors. None of it calls into the trellis, the WFST
//! algorithms or the pipeline.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use thiserror::Error;

use crate::graph::{GtcGraph, NodeId};
use crate::posterior::{LogitMatrix, PosteriorMatrix};
use crate::wfst::{Label, Wfst, EPSILON};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("instance too large for oracle (budget {limit})")]
    BudgetExceeded { limit: usize },
    #[error("infeasible instance")]
    Infeasible,
    #[error("step {0} outside [1e-7, 1e-3]")]
    InvalidStep(f64),
    #[error("machine is cyclic or has no start state")]
    Unsupported,
}

/// Caps on the number of complete paths / distinct strings visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub max_paths: usize,
    pub max_strings: usize,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        Self {
            max_paths: 1_000_000,
            max_strings: 100_000,
        }
    }
}

/// An oracle value together with the number of paths it enumerated.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    pub value: T,
    pub consumed: usize,
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn label_of(graph: &GtcGraph, g: NodeId) -> usize {
    graph.label(g).expect("emitting node") as usize
}

/// `p(G|X)` as the sum over every length-T walk of its product of
/// transition weights and posteriors.
pub fn brute_force_pg(
    graph: &GtcGraph,
    post: &PosteriorMatrix,
    budget: EnumerationBudget,
) -> Result<OracleResult<f64>, OracleError> {
    struct Walk<'a> {
        graph: &'a GtcGraph,
        post: &'a PosteriorMatrix,
        frames: usize,
        limit: usize,
        count: usize,
        sum: CompensatedSum,
    }
    impl Walk<'_> {
        fn go(&mut self, node: NodeId, t: usize, prod: f64) -> Result<(), OracleError> {
            let end = self.graph.end();
            for e in self.graph.outgoing(node) {
                if e.dst == end {
                    if t == self.frames {
                        self.count += 1;
                        if self.count > self.limit {
                            return Err(OracleError::BudgetExceeded { limit: self.limit });
                        }
                        self.sum.add(prod * e.weight);
                    }
                } else if t < self.frames {
                    let y = self.post.get(t, label_of(self.graph, e.dst));
                    self.go(e.dst, t + 1, prod * e.weight * y)?;
                }
            }
            Ok(())
        }
    }
    let mut w = Walk {
        graph,
        post,
        frames: post.frames(),
        limit: budget.max_paths,
        count: 0,
        sum: CompensatedSum::default(),
    };
    w.go(0, 0, 1.0)?;
    Ok(OracleResult {
        value: w.sum.value(),
        consumed: w.count,
    })
}

/// Forward variables by enumerating every prefix walk, in linear space.
/// Row `t` (1-based) holds the summed products of prefixes ending at each
/// node after `t` frames; row 0 is the start node.
pub fn brute_force_alpha(
    graph: &GtcGraph,
    post: &PosteriorMatrix,
    budget: EnumerationBudget,
) -> Result<OracleResult<Array2<f64>>, OracleError> {
    let frames = post.frames();
    let mut sums = vec![vec![CompensatedSum::default(); graph.num_nodes()]; frames + 1];
    sums[0][0].add(1.0);
    let mut count = 0;
    let mut stack = vec![(0usize, 0usize, 1.0f64)];
    while let Some((node, t, prod)) = stack.pop() {
        if t == frames {
            continue;
        }
        for e in graph.outgoing(node) {
            if e.dst == graph.end() {
                continue;
            }
            count += 1;
            if count > budget.max_paths {
                return Err(OracleError::BudgetExceeded {
                    limit: budget.max_paths,
                });
            }
            let p = prod * e.weight * post.get(t, label_of(graph, e.dst));
            sums[t + 1][e.dst].add(p);
            stack.push((e.dst, t + 1, p));
        }
    }
    let mut out = Array2::zeros((frames + 1, graph.num_nodes()));
    for (t, row) in sums.iter().enumerate() {
        for (g, s) in row.iter().enumerate() {
            out[[t, g]] = s.value();
        }
    }
    Ok(OracleResult {
        value: out,
        consumed: count,
    })
}

/// Backward variables by enumerating every suffix walk that reaches the end
/// node right after the last frame. Row `t` (1-based) includes frame t's
/// posterior; rows 0 and `T + 1` are left at zero.
pub fn brute_force_beta(
    graph: &GtcGraph,
    post: &PosteriorMatrix,
    budget: EnumerationBudget,
) -> Result<OracleResult<Array2<f64>>, OracleError> {
    let frames = post.frames();
    let mut out = Array2::zeros((frames + 2, graph.num_nodes()));
    let mut count = 0;
    for t in 1..=frames {
        for g in 1..graph.end() {
            let mut sum = CompensatedSum::default();
            let y = post.get(t - 1, label_of(graph, g));
            let mut stack = vec![(g, t, y)];
            while let Some((node, tt, prod)) = stack.pop() {
                for e in graph.outgoing(node) {
                    if e.dst == graph.end() {
                        if tt == frames {
                            count += 1;
                            sum.add(prod * e.weight);
                        }
                    } else if tt < frames {
                        count += 1;
                        let p = prod * e.weight * post.get(tt, label_of(graph, e.dst));
                        stack.push((e.dst, tt + 1, p));
                    }
                    if count > budget.max_paths {
                        return Err(OracleError::BudgetExceeded {
                            limit: budget.max_paths,
                        });
                    }
                }
            }
            out[[t, g]] = sum.value();
        }
    }
    Ok(OracleResult {
        value: out,
        consumed: count,
    })
}

/// Number of length-T walks from start to end, from powers of the adjacency
/// matrix.
pub fn walk_count(graph: &GtcGraph, frames: usize) -> u128 {
    let n = graph.num_nodes();
    let mut adj = vec![vec![0u128; n]; n];
    for e in graph.edges() {
        adj[e.src][e.dst] += 1;
    }
    // row vector of walk counts from the start
    let mut v = vec![0u128; n];
    v[0] = 1;
    for _ in 0..=frames {
        let mut next = vec![0u128; n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0 {
                continue;
            }
            for (j, &a) in adj[i].iter().enumerate() {
                next[j] += vi * a;
            }
        }
        v = next;
    }
    v[graph.end()]
}

fn softmax(u: &Array2<f64>) -> Array2<f64> {
    let mut y = u.clone();
    for mut row in y.axis_iter_mut(Axis(0)) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = CompensatedSum::default();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s.add(*v);
        }
        let s = s.value();
        row.mapv_inplace(|v| v / s);
    }
    y
}

/// Central differences of an arbitrary loss of the softmax of `logits`.
pub fn finite_diff_with<F>(logits: &LogitMatrix, step: f64, loss: F) -> Result<Array2<f64>, OracleError>
where
    F: Fn(&PosteriorMatrix) -> f64,
{
    if !(1e-7..=1e-3).contains(&step) {
        return Err(OracleError::InvalidStep(step));
    }
    let eval = |u: &Array2<f64>| -> Result<f64, OracleError> {
        let post = PosteriorMatrix::new(softmax(u)).map_err(|_| OracleError::Infeasible)?;
        let l = loss(&post);
        if l.is_finite() {
            Ok(l)
        } else {
            Err(OracleError::Infeasible)
        }
    };
    let base = logits.values().clone();
    eval(&base)?;
    let mut grad = Array2::zeros(base.dim());
    let mut u = base.clone();
    for t in 0..base.nrows() {
        for k in 0..base.ncols() {
            u[[t, k]] = base[[t, k]] + step;
            let plus = eval(&u)?;
            u[[t, k]] = base[[t, k]] - step;
            let minus = eval(&u)?;
            u[[t, k]] = base[[t, k]];
            grad[[t, k]] = (plus - minus) / (2.0 * step);
        }
    }
    Ok(grad)
}

/// Central-difference gradient of `-ln p(G|X)` computed by enumeration.
pub fn finite_diff_grad(
    graph: &GtcGraph,
    logits: &LogitMatrix,
    step: f64,
    budget: EnumerationBudget,
) -> Result<Array2<f64>, OracleError> {
    finite_diff_with(logits, step, |post| match brute_force_pg(graph, post, budget) {
        Ok(r) => -r.value.ln(),
        Err(_) => f64::NAN,
    })
}

/// Textbook CTC loss `-ln p(l|X)` with per-frame rescaling. Blank is symbol 0.
pub fn reference_ctc(labels: &[u32], post: &PosteriorMatrix) -> Result<f64, OracleError> {
    let frames = post.frames();
    let mut ext = vec![0u32];
    for &l in labels {
        ext.push(l);
        ext.push(0);
    }
    let s_len = ext.len();
    let y = |t: usize, s: usize| post.get(t, ext[s] as usize);
    let mut alpha = vec![0.0f64; s_len];
    alpha[0] = y(0, 0);
    if s_len > 1 {
        alpha[1] = y(0, 1);
    }
    let mut log_scale = 0.0;
    for t in 0..frames {
        if t > 0 {
            let prev = alpha.clone();
            for s in 0..s_len {
                let mut a = prev[s];
                if s >= 1 {
                    a += prev[s - 1];
                }
                if s >= 2 && ext[s] != 0 && ext[s] != ext[s - 2] {
                    a += prev[s - 2];
                }
                alpha[s] = a * y(t, s);
            }
        }
        let c: f64 = alpha.iter().sum();
        if c == 0.0 {
            return Err(OracleError::Infeasible);
        }
        for a in &mut alpha {
            *a /= c;
        }
        log_scale += c.ln();
    }
    let tail = alpha[s_len - 1] + if s_len >= 2 { alpha[s_len - 2] } else { 0.0 };
    if tail == 0.0 {
        return Err(OracleError::Infeasible);
    }
    Ok(-(log_scale + tail.ln()))
}

/// How to combine the weights of paths that spell the same string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathSum {
    /// Sum of probabilities, reported as a negative log.
    Log,
    /// Minimum cost.
    Tropical,
}

/// Every accepted input-label string (ε dropped) of an acyclic machine with
/// its combined path weight.
pub fn string_weights(
    fst: &Wfst,
    sum: PathSum,
    budget: EnumerationBudget,
) -> Result<OracleResult<BTreeMap<Vec<Label>, f64>>, OracleError> {
    let start = fst.start().ok_or(OracleError::Unsupported)?;
    let mut acc: BTreeMap<Vec<Label>, (CompensatedSum, f64)> = BTreeMap::new();
    let mut count = 0usize;
    let mut stack: Vec<(usize, Vec<Label>, f64, usize)> = vec![(start, Vec::new(), 0.0, 0)];
    while let Some((s, labels, cost, depth)) = stack.pop() {
        if depth > fst.num_states() {
            return Err(OracleError::Unsupported);
        }
        let fin = fst.final_weight(s);
        if fin < f64::INFINITY {
            count += 1;
            if count > budget.max_paths {
                return Err(OracleError::BudgetExceeded {
                    limit: budget.max_paths,
                });
            }
            let total = cost + fin;
            let entry = acc
                .entry(labels.clone())
                .or_insert((CompensatedSum::default(), f64::INFINITY));
            entry.0.add((-total).exp());
            entry.1 = entry.1.min(total);
            if acc.len() > budget.max_strings {
                return Err(OracleError::BudgetExceeded {
                    limit: budget.max_strings,
                });
            }
        }
        for arc in fst.arcs(s) {
            let mut l = labels.clone();
            if arc.ilabel != EPSILON {
                l.push(arc.ilabel);
            }
            stack.push((arc.nextstate, l, cost + arc.weight, depth + 1));
        }
    }
    let value = acc
        .into_iter()
        .map(|(k, (p, m))| {
            let w = match sum {
                PathSum::Log => -p.value().ln(),
                PathSum::Tropical => m,
            };
            (k, w)
        })
        .collect();
    Ok(OracleResult {
        value,
        consumed: count,
    })
}

/// Plain dynamic-programming edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
