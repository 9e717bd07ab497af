#![allow(dead_code)]

use gtc::alphabet::{Alphabet, Symbol};
use gtc::graph::{Edge, GtcGraph};
use gtc::pipeline::{Hypothesis, NBestList};
use gtc::posterior::{LogitMatrix, PosteriorMatrix};
use gtc::wfst::{Arc, Wfst};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random DAG with self-loops on every emitting node, all weights in (0, 1].
pub fn random_graph<R: Rng>(rng: &mut R, max_nodes: usize, num_labels: u32) -> GtcGraph {
    loop {
        let n = rng.random_range(1..=max_nodes);
        let labels: Vec<Symbol> = (0..n).map(|_| rng.random_range(0..=num_labels)).collect();
        let end = n + 1;
        let mut edges = Vec::new();
        let w = |r: &mut R| r.random_range(0.05..=1.0);
        for g in 1..=n {
            if rng.random_bool(0.8) {
                edges.push(Edge::new(g, g, w(rng)));
            }
        }
        for src in 0..=n {
            for dst in (src + 1)..=end {
                if src == 0 && dst == end {
                    continue;
                }
                let p = if dst == src + 1 { 0.85 } else { 0.3 };
                if rng.random_bool(p) {
                    edges.push(Edge::new(src, dst, w(rng)));
                }
            }
        }
        if let Ok(g) = GtcGraph::new(labels, edges) {
            return g;
        }
    }
}

pub fn random_logits<R: Rng>(rng: &mut R, frames: usize, symbols: usize, scale: f64) -> LogitMatrix {
    let v = Array2::from_shape_fn((frames, symbols), |_| rng.random_range(-scale..scale));
    LogitMatrix::new(v).unwrap()
}

pub fn random_posteriors<R: Rng>(rng: &mut R, frames: usize, symbols: usize) -> PosteriorMatrix {
    random_logits(rng, frames, symbols, 3.0).softmax()
}

/// Random acyclic automaton: states in topological order, arcs only forward.
pub fn random_wfst<R: Rng>(rng: &mut R, max_states: usize, space: u32, eps: bool, acceptor: bool) -> Wfst {
    let n = rng.random_range(2..=max_states);
    let mut f = Wfst::new(space);
    f.add_states(n);
    f.set_start(0);
    let lo = if eps { 0 } else { 1 };
    for s in 0..n - 1 {
        let k = rng.random_range(1..=3);
        for _ in 0..k {
            let d = rng.random_range(s + 1..n);
            let il = rng.random_range(lo..space);
            let ol = if acceptor { il } else { rng.random_range(lo..space) };
            f.add_arc(s, Arc::new(il, ol, rng.random_range(0.0..3.0), d));
        }
        if rng.random_bool(0.2) {
            f.set_final(s, rng.random_range(0.0..2.0));
        }
    }
    f.set_final(n - 1, rng.random_range(0.0..1.0));
    f
}

/// Reference with random substitutions, insertions and deletions.
pub fn corrupt<R: Rng>(
    rng: &mut R,
    reference: &[Symbol],
    rate: f64,
    num_labels: u32,
) -> (Vec<Symbol>, usize) {
    let mut out = Vec::new();
    let mut edits = 0;
    for &s in reference {
        let u: f64 = rng.random();
        if u < rate / 3.0 {
            edits += 1;
        } else if u < 2.0 * rate / 3.0 {
            out.push(rng.random_range(1..=num_labels));
            edits += 1;
        } else if u < rate {
            out.push(s);
            out.push(rng.random_range(1..=num_labels));
            edits += 1;
        } else {
            out.push(s);
        }
    }
    (out, edits)
}

/// N-best list with the shape of a real decoder's: a reference with a few
/// confusable sites, each offering the correct token, a substitution, a
/// deletion or an insertion with random log-probabilities. Hypotheses are
/// the top-N combinations by summed log-probability.
pub fn synthetic_nbest<R: Rng>(rng: &mut R, n: usize, num_labels: u32) -> (NBestList, Vec<Symbol>) {
    let len = rng.random_range(6..=14);
    let reference: Vec<Symbol> = (0..len).map(|_| rng.random_range(1..=num_labels)).collect();
    let num_sites = rng.random_range(2..=5usize.min(len));
    let mut positions: Vec<usize> = (0..len).collect();
    positions.shuffle(rng);
    let mut positions = positions[..num_sites].to_vec();
    positions.sort_unstable();

    // alternatives per site: (replacement tokens, log-prob)
    let mut sites: Vec<Vec<(Vec<Symbol>, f64)>> = Vec::new();
    for &p in &positions {
        let tok = reference[p];
        let other = |r: &mut R| loop {
            let t = r.random_range(1..=num_labels);
            if t != tok {
                return t;
            }
        };
        let mut alts = vec![(vec![tok], 0.0)];
        let k = rng.random_range(1..=3);
        for _ in 0..k {
            let alt = match rng.random_range(0..3) {
                0 => vec![other(rng)],
                1 => vec![],
                _ => vec![tok, other(rng)],
            };
            if !alts.iter().any(|a| a.0 == alt) {
                alts.push((alt, 0.0));
            }
        }
        let logits: Vec<f64> = alts.iter().map(|_| rng.random_range(0.0..2.0)).collect();
        let z = logits.iter().map(|v| v.exp()).sum::<f64>().ln();
        for (a, l) in alts.iter_mut().zip(logits) {
            a.1 = l - z;
        }
        sites.push(alts);
    }

    let mut combos: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
    for site in &sites {
        let mut next = Vec::new();
        for (c, s) in &combos {
            for (i, alt) in site.iter().enumerate() {
                let mut c2 = c.clone();
                c2.push(i);
                next.push((c2, s + alt.1));
            }
        }
        combos = next;
    }
    let mut hyps: Vec<Hypothesis> = Vec::new();
    for (choice, score) in combos {
        let mut tokens = Vec::new();
        let mut site = 0;
        for (p, &t) in reference.iter().enumerate() {
            if site < positions.len() && positions[site] == p {
                tokens.extend_from_slice(&sites[site][choice[site]].0);
                site += 1;
            } else {
                tokens.push(t);
            }
        }
        let score = score - rng.random_range(0.0..0.1);
        match hyps.iter_mut().find(|h| h.tokens == tokens) {
            Some(h) => h.score = h.score.max(score),
            None => hyps.push(Hypothesis { tokens, score }),
        }
    }
    hyps.sort_by(|a, b| b.score.total_cmp(&a.score));
    hyps.truncate(n);
    (NBestList::new("utt", hyps).unwrap(), reference)
}

pub fn chars(alphabet: &Alphabet, s: &str) -> Vec<Symbol> {
    s.chars()
        .map(|c| {
            let t = if c == ' ' { "_".to_string() } else { c.to_string() };
            alphabet.symbol(&t).unwrap()
        })
        .collect()
}

pub fn shuffle<R: Rng, T>(rng: &mut R, v: &mut [T]) {
    v.shuffle(rng);
}
