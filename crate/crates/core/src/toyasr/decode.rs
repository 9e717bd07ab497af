use std::collections::BTreeMap;

use super::model::FrameModel;
use crate::alphabet::{Symbol, BLANK};
use crate::pipeline::{Hypothesis, NBestList};
use crate::posterior::PosteriorMatrix;
use crate::semiring::neg_log_add;

/// Most likely symbol per frame, repeats merged, blanks dropped.
pub fn greedy_decode(post: &PosteriorMatrix) -> Vec<Symbol> {
    let mut out = Vec::new();
    let mut prev = None;
    for t in 0..post.frames() {
        let row = post.row(t);
        let best = (0..row.len())
            .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
            .unwrap() as Symbol;
        if Some(best) != prev && best != BLANK {
            out.push(best);
        }
        prev = Some(best);
    }
    out
}

/// Log-space ⊕ of natural-log probabilities.
fn log_add(a: f64, b: f64) -> f64 {
    -neg_log_add(-a, -b)
}

/// CTC prefix beam search without a language model.
///
/// Each prefix tracks the probability of alignments ending in blank and in
/// its last label. After every frame only the `beam` most probable prefixes
/// survive (ties broken by prefix order). Returns up to `n` hypotheses,
/// best first, each scored by the log of its summed alignment probability.
pub fn prefix_beam_search(post: &PosteriorMatrix, n: usize, beam: usize) -> Vec<Hypothesis> {
    let ninf = f64::NEG_INFINITY;
    let k = post.num_symbols();
    // prefix -> (log p ending in blank, log p ending in label)
    let mut beams: Vec<(Vec<Symbol>, (f64, f64))> = vec![(Vec::new(), (0.0, ninf))];
    for t in 0..post.frames() {
        let logy: Vec<f64> = post.row(t).iter().map(|y| y.ln()).collect();
        let mut next: BTreeMap<Vec<Symbol>, (f64, f64)> = BTreeMap::new();
        for (prefix, (pb, pnb)) in &beams {
            let total = log_add(*pb, *pnb);
            let e = next.entry(prefix.clone()).or_insert((ninf, ninf));
            e.0 = log_add(e.0, total + logy[BLANK as usize]);
            for sym in 1..k as Symbol {
                let ly = logy[sym as usize];
                if ly == ninf {
                    continue;
                }
                let mut ext = prefix.clone();
                ext.push(sym);
                if prefix.last() == Some(&sym) {
                    let same = next.entry(prefix.clone()).or_insert((ninf, ninf));
                    same.1 = log_add(same.1, pnb + ly);
                    let e = next.entry(ext).or_insert((ninf, ninf));
                    e.1 = log_add(e.1, pb + ly);
                } else {
                    let e = next.entry(ext).or_insert((ninf, ninf));
                    e.1 = log_add(e.1, total + ly);
                }
            }
        }
        let mut ranked: Vec<(Vec<Symbol>, (f64, f64))> = next.into_iter().collect();
        // stable sort keeps prefix order among equal scores
        ranked.sort_by(|a, b| log_add(b.1 .0, b.1 .1).total_cmp(&log_add(a.1 .0, a.1 .1)));
        ranked.truncate(beam.max(n).max(1));
        beams = ranked;
    }
    beams
        .into_iter()
        .take(n)
        .map(|(tokens, (pb, pnb))| Hypothesis {
            tokens,
            score: log_add(pb, pnb).min(0.0),
        })
        .filter(|h| h.score > f64::NEG_INFINITY)
        .collect()
}

/// N-best list from the model's posteriors for one utterance.
pub fn decode_nbest(
    model: &FrameModel,
    utterance: &str,
    features: &ndarray::Array2<f64>,
    n: usize,
    beam: usize,
) -> NBestList {
    let hyps = prefix_beam_search(&model.posteriors(features), n, beam);
    NBestList {
        utterance: utterance.to_string(),
        hyps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn peaked_posteriors_match_greedy() {
        let y = PosteriorMatrix::new(array![
            [0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0]
        ])
        .unwrap();
        let hyps = prefix_beam_search(&y, 5, 8);
        assert_eq!(hyps[0].tokens, vec![1, 1, 2]);
        assert_eq!(hyps[0].tokens, greedy_decode(&y));
        assert!(hyps[0].score.abs() < 1e-12);
        assert_eq!(hyps.len(), 1);
    }

    #[test]
    fn exhaustive_three_frames() {
        let y = PosteriorMatrix::new(array![[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.4, 0.1, 0.5]]).unwrap();
        // every alignment, grouped by collapsed string
        let mut sums: BTreeMap<Vec<Symbol>, f64> = BTreeMap::new();
        for a in 0..27usize {
            let path = [a / 9, (a / 3) % 3, a % 3];
            let p: f64 = path.iter().enumerate().map(|(t, &s)| y.get(t, s)).product();
            let mut s = Vec::new();
            let mut prev = None;
            for &k in &path {
                if Some(k) != prev && k != 0 {
                    s.push(k as Symbol);
                }
                prev = Some(k);
            }
            *sums.entry(s).or_default() += p;
        }
        let mut expect: Vec<(Vec<Symbol>, f64)> = sums.into_iter().collect();
        expect.sort_by(|a, b| b.1.total_cmp(&a.1));
        let got = prefix_beam_search(&y, 100, 100);
        assert_eq!(got.len(), expect.len());
        for (h, (s, p)) in got.iter().zip(&expect) {
            assert_eq!(&h.tokens, s);
            assert!((h.score - p.ln()).abs() < 1e-12);
        }
        let top1 = prefix_beam_search(&y, 1, 100);
        assert_eq!(top1[0], got[0]);
    }

    #[test]
    fn scores_are_sorted_and_non_positive() {
        let y = PosteriorMatrix::new(Array2::from_shape_fn((10, 4), |(t, k)| {
            [0.1, 0.2, 0.3, 0.4][(t + k) % 4]
        }))
        .unwrap();
        let hyps = prefix_beam_search(&y, 20, 20);
        assert_eq!(hyps.len(), 20);
        assert!(hyps.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(hyps.iter().all(|h| h.score <= 0.0));
    }
}
