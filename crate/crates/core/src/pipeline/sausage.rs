use super::{ConfusionNetwork, NBestList, PipelineConfig, PipelineError};
use crate::alphabet::{Alphabet, Symbol};
use crate::graph::{wfst_to_ctc_graph, GtcGraph};
use crate::semiring::{neg_log_sum, LogSemiring};
use crate::wfst::{determinize, minimize, remove_epsilon, Arc, Wfst, EPSILON};

/// Normalized `exp(mu * score)` per hypothesis, in input order.
fn hypothesis_weights(nbest: &NBestList, mu: f64) -> Vec<f64> {
    let scaled: Vec<f64> = nbest.hyps.iter().map(|h| mu * h.score).collect();
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scaled.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Step {
    Diagonal,
    Insert,
    Delete,
}

struct Builder {
    /// Accumulated weight per bin; entries kept in first-seen order.
    bins: Vec<Vec<(Symbol, f64)>>,
    total: f64,
}

impl Builder {
    fn has(&self, bin: usize, sym: Symbol) -> bool {
        self.bins[bin].iter().any(|(s, _)| *s == sym)
    }

    fn add(&mut self, bin: usize, sym: Symbol, w: f64) {
        match self.bins[bin].iter_mut().find(|(s, _)| *s == sym) {
            Some(e) => e.1 += w,
            None => self.bins[bin].push((sym, w)),
        }
    }

    /// Aligns `tokens` against the current bins and folds them in with
    /// weight `w`.
    #[allow(clippy::needless_range_loop)]
    fn align(&mut self, tokens: &[Symbol], w: f64) {
        let n = self.bins.len();
        let m = tokens.len();
        // cost[i][j]: first i bins against first j tokens
        let mut cost = vec![vec![0usize; m + 1]; n + 1];
        for i in 1..=n {
            cost[i][0] = cost[i - 1][0] + usize::from(!self.has(i - 1, EPSILON));
        }
        for j in 1..=m {
            cost[0][j] = j;
        }
        for i in 1..=n {
            for j in 1..=m {
                let diag = cost[i - 1][j - 1] + usize::from(!self.has(i - 1, tokens[j - 1]));
                let ins = cost[i][j - 1] + 1;
                let del = cost[i - 1][j] + usize::from(!self.has(i - 1, EPSILON));
                cost[i][j] = diag.min(ins).min(del);
            }
        }
        let mut steps = Vec::with_capacity(n + m);
        let (mut i, mut j) = (n, m);
        while i > 0 || j > 0 {
            let step = if i > 0
                && j > 0
                && cost[i][j] == cost[i - 1][j - 1] + usize::from(!self.has(i - 1, tokens[j - 1]))
            {
                Step::Diagonal
            } else if j > 0 && cost[i][j] == cost[i][j - 1] + 1 {
                Step::Insert
            } else {
                Step::Delete
            };
            match step {
                Step::Diagonal => {
                    i -= 1;
                    j -= 1;
                }
                Step::Insert => j -= 1,
                Step::Delete => i -= 1,
            }
            steps.push(step);
        }
        steps.reverse();

        let mut bin = 0;
        let mut tok = 0;
        for step in steps {
            match step {
                Step::Diagonal => {
                    self.add(bin, tokens[tok], w);
                    bin += 1;
                    tok += 1;
                }
                Step::Delete => {
                    self.add(bin, EPSILON, w);
                    bin += 1;
                }
                Step::Insert => {
                    let mut fresh = Vec::with_capacity(2);
                    if self.total > 0.0 {
                        fresh.push((EPSILON, self.total));
                    }
                    fresh.push((tokens[tok], w));
                    self.bins.insert(bin, fresh);
                    bin += 1;
                    tok += 1;
                }
            }
        }
        self.total += w;
    }
}

/// Step 1: weights hypotheses by `exp(mu * score)` and aligns them into a
/// sausage, highest weight first.
///
/// Alignment is Levenshtein against the growing network: matching a token
/// already in a bin is free, as is a gap at a bin that already holds ε;
/// other substitutions, gaps and new bins cost 1. Ties prefer the diagonal,
/// then a new bin, then a gap. A new bin gives ε the weight of every
/// hypothesis aligned before it.
pub fn nbest_to_cn(nbest: &NBestList, mu: f64) -> Result<ConfusionNetwork, PipelineError> {
    if nbest.hyps.is_empty() {
        return Err(PipelineError::EmptyNBest);
    }
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(PipelineError::InvalidMu(mu));
    }
    if let Some(h) = nbest.hyps.iter().find(|h| !h.score.is_finite()) {
        return Err(PipelineError::InvalidScore(h.score));
    }
    let weights = hypothesis_weights(nbest, mu);
    let mut order: Vec<usize> = (0..nbest.hyps.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));

    let mut b = Builder {
        bins: Vec::new(),
        total: 0.0,
    };
    for &k in &order {
        b.align(&nbest.hyps[k].tokens, weights[k]);
    }
    let bins = b
        .bins
        .into_iter()
        .map(|mut bin| {
            let z: f64 = bin.iter().map(|e| e.1).sum();
            for e in &mut bin {
                e.1 /= z;
            }
            bin.sort_by_key(|e| e.0);
            bin
        })
        .collect();
    Ok(ConfusionNetwork { bins })
}

/// Drops bin entries below `eta` and renormalizes; the most probable entry
/// of each bin always survives.
pub fn prune_cn(cn: &ConfusionNetwork, eta: f64) -> ConfusionNetwork {
    let bins = cn
        .bins
        .iter()
        .map(|bin| {
            let best = bin
                .iter()
                .enumerate()
                .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i);
            let kept: Vec<(Symbol, f64)> = bin
                .iter()
                .enumerate()
                .filter(|(i, e)| Some(*i) == best || e.1 >= eta)
                .map(|(_, e)| *e)
                .collect();
            let z: f64 = kept.iter().map(|e| e.1).sum();
            kept.into_iter().map(|(s, p)| (s, p / z)).collect()
        })
        .collect();
    ConfusionNetwork { bins }
}

/// Step 2: the sausage as a chain acceptor, then ε-removal, determinization
/// and minimization in the log semiring.
pub fn cn_to_wfst(cn: &ConfusionNetwork, label_space: u32) -> Result<Wfst, PipelineError> {
    let mut f = Wfst::new(label_space);
    f.add_states(cn.bins.len() + 1);
    f.set_start(0);
    f.set_final(cn.bins.len(), 0.0);
    for (i, bin) in cn.bins.iter().enumerate() {
        for &(sym, p) in bin {
            if p > 0.0 {
                f.add_arc(i, Arc::accept(sym, -p.ln(), i + 1));
            }
        }
    }
    let f = remove_epsilon::<LogSemiring>(&f)?;
    let f = determinize::<LogSemiring>(&f)?;
    Ok(minimize::<LogSemiring>(&f)?)
}

/// Per state, treats outgoing arcs plus final weight as a distribution,
/// drops arcs below `eta` (never the best arc, never the final weight) and
/// renormalizes. The result is trimmed and minimized again.
pub fn prune_wfst(fst: &Wfst, eta: f64) -> Result<Wfst, PipelineError> {
    let mut out = Wfst::new(fst.label_space());
    out.add_states(fst.num_states());
    if let Some(s) = fst.start() {
        out.set_start(s);
    }
    for s in fst.states() {
        let arcs = fst.arcs(s);
        let fin = fst.final_weight(s);
        let mut costs: Vec<f64> = arcs.iter().map(|a| a.weight).collect();
        costs.push(fin);
        let z = neg_log_sum(&costs);
        let best = arcs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.weight.total_cmp(&b.1.weight).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i);
        let kept: Vec<&Arc> = arcs
            .iter()
            .enumerate()
            .filter(|(i, a)| Some(*i) == best || (-(a.weight - z)).exp() >= eta)
            .map(|(_, a)| a)
            .collect();
        let mut kept_costs: Vec<f64> = kept.iter().map(|a| a.weight).collect();
        kept_costs.push(fin);
        let z = neg_log_sum(&kept_costs);
        for a in kept {
            out.add_arc(s, Arc::accept(a.ilabel, a.weight - z, a.nextstate));
        }
        if fin < f64::INFINITY {
            out.set_final(s, fin - z);
        }
    }
    Ok(minimize::<LogSemiring>(&out.connect()?)?)
}

/// N-best list to CTC-style supervision graph.
pub fn build_supervision_graph(
    nbest: &NBestList,
    alphabet: &Alphabet,
    config: &PipelineConfig,
) -> Result<GtcGraph, PipelineError> {
    config.validate()?;
    let prune = config.eta > 0.0;
    let mut cn = nbest_to_cn(nbest, config.mu)?;
    if prune && config.prune_after_step1 {
        cn = prune_cn(&cn, config.eta);
    }
    let mut fst = cn_to_wfst(&cn, alphabet.len() as u32)?;
    if prune && config.prune_after_step2 {
        fst = prune_wfst(&fst, config.eta)?;
    }
    let graph = wfst_to_ctc_graph(&fst, alphabet)?;
    Ok(if config.unit_weights {
        graph.with_unit_weights()
    } else {
        graph
    })
}
