mod common;

use std::collections::BTreeMap;

use common::*;
use gtc::alphabet::{Alphabet, Symbol};
use gtc::oracle::*;
use gtc::semiring::{LogSemiring, TropicalSemiring};
use gtc::wfst::*;
use rand::Rng;

fn weights(f: &Wfst, sum: PathSum) -> BTreeMap<Vec<Symbol>, f64> {
    string_weights(f, sum, EnumerationBudget::default())
        .unwrap()
        .value
}

fn assert_same_language(a: &BTreeMap<Vec<Symbol>, f64>, b: &BTreeMap<Vec<Symbol>, f64>, tol: f64) {
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, w) in a {
        assert!((w - b[k]).abs() <= tol, "{k:?}: {w} vs {}", b[k]);
    }
}

#[test]
fn optimization_preserves_log_weights() {
    let mut r = rng(200);
    for _ in 0..200 {
        let f = random_wfst(&mut r, 12, 5, true, true);
        let before = weights(&f, PathSum::Log);
        let e = remove_epsilon::<LogSemiring>(&f).unwrap();
        assert!(!e.has_epsilons());
        assert_same_language(&before, &weights(&e, PathSum::Log), 1e-10);
        let d = determinize::<LogSemiring>(&e).unwrap();
        assert!(d.is_deterministic());
        assert_same_language(&before, &weights(&d, PathSum::Log), 1e-10);
        let m = minimize::<LogSemiring>(&d).unwrap();
        assert!(m.num_states() <= d.num_states());
        assert_same_language(&before, &weights(&m, PathSum::Log), 1e-10);
    }
}

#[test]
fn optimization_preserves_tropical_weights() {
    let mut r = rng(201);
    for _ in 0..100 {
        let f = random_wfst(&mut r, 10, 4, true, true);
        let before = weights(&f, PathSum::Tropical);
        let e = remove_epsilon::<TropicalSemiring>(&f).unwrap();
        let d = determinize::<TropicalSemiring>(&e).unwrap();
        let m = minimize::<TropicalSemiring>(&d).unwrap();
        assert_same_language(&before, &weights(&m, PathSum::Tropical), 1e-10);
    }
}

#[test]
fn optimization_is_idempotent() {
    let a = Alphabet::numbered(4);
    let mut r = rng(202);
    let opt = |f: &Wfst| {
        let e = remove_epsilon::<LogSemiring>(f).unwrap();
        minimize::<LogSemiring>(&determinize::<LogSemiring>(&e).unwrap()).unwrap()
    };
    for _ in 0..100 {
        let f = random_wfst(&mut r, 12, 5, true, true);
        let once = opt(&f);
        let twice = opt(&once);
        assert_eq!(once.num_states(), twice.num_states());
        assert_eq!(once.num_arcs(), twice.num_arcs());
        assert_same_language(
            &weights(&once, PathSum::Log),
            &weights(&twice, PathSum::Log),
            1e-10,
        );
        // canonical numbering makes isomorphic machines serialize alike up to rounding
        let strip = |f: &Wfst| {
            f.to_text(&a)
                .unwrap()
                .lines()
                .map(|l| l.rsplit_once(' ').map_or(l.to_string(), |(h, _)| h.to_string()))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&once), strip(&twice));
    }
}

#[test]
fn shortest_distance_matches_enumeration() {
    let mut r = rng(203);
    for _ in 0..100 {
        let f = random_wfst(&mut r, 12, 4, true, true);
        let trop = weights(&f, PathSum::Tropical);
        let best = trop.values().cloned().fold(f64::INFINITY, f64::min);
        assert!((shortest_distance::<TropicalSemiring>(&f).unwrap() - best).abs() < 1e-10);
        let (labels, cost) = best_path(&f).unwrap();
        assert!((cost - best).abs() < 1e-10);
        assert!((trop[&labels] - best).abs() < 1e-10);
        let log = weights(&f, PathSum::Log);
        let total = gtc::semiring::neg_log_sum(&log.values().copied().collect::<Vec<_>>());
        assert!((shortest_distance::<LogSemiring>(&f).unwrap() - total).abs() < 1e-10);
    }
}

#[test]
fn composition_with_edit_fst_is_levenshtein() {
    let mut r = rng(204);
    let space = 5;
    for _ in 0..50 {
        // acceptor over five random strings
        let strings: Vec<Vec<Symbol>> = (0..5)
            .map(|_| {
                (0..r.random_range(0..=5))
                    .map(|_| r.random_range(1..space))
                    .collect()
            })
            .collect();
        let mut f = Wfst::new(space);
        let s0 = f.add_state();
        f.set_start(s0);
        for s in &strings {
            let mut cur = s0;
            for &l in s {
                let n = f.add_state();
                f.add_arc(cur, Arc::accept(l, 0.0, n));
                cur = n;
            }
            f.set_final(cur, 0.0);
        }
        let reference: Vec<Symbol> = (0..r.random_range(1..=6))
            .map(|_| r.random_range(1..space))
            .collect();
        let c = compose::<TropicalSemiring>(&f, &edit_distance_fst(space)).unwrap();
        let c = compose::<TropicalSemiring>(&c, &linear_acceptor(&reference, space)).unwrap();
        let got = shortest_distance::<TropicalSemiring>(&c).unwrap();
        let expect = strings.iter().map(|s| levenshtein(s, &reference)).min().unwrap();
        assert_eq!(got, expect as f64);
    }
}

#[test]
fn composition_of_acceptors_intersects() {
    let mut r = rng(205);
    for _ in 0..100 {
        let a = random_wfst(&mut r, 7, 3, true, true);
        let b = random_wfst(&mut r, 7, 3, true, true);
        let wa = weights(&a, PathSum::Log);
        let wb = weights(&b, PathSum::Log);
        let c = compose::<LogSemiring>(&a, &b).unwrap();
        let wc = if c.start().is_some() && c.num_states() > 0 {
            weights(&c, PathSum::Log)
        } else {
            BTreeMap::new()
        };
        let expect: BTreeMap<Vec<Symbol>, f64> = wa
            .iter()
            .filter_map(|(k, w)| wb.get(k).map(|v| (k.clone(), w + v)))
            .collect();
        assert_same_language(&expect, &wc, 1e-10);
        let id = compose::<LogSemiring>(&a, &identity_transducer(3)).unwrap();
        assert_same_language(&wa, &weights(&id, PathSum::Log), 1e-10);
    }
}

#[test]
fn text_round_trip() {
    let a = Alphabet::numbered(4);
    let mut r = rng(206);
    for _ in 0..20 {
        let f = random_wfst(&mut r, 8, 5, true, true);
        let back = Wfst::parse(&f.to_text(&a).unwrap(), &a, "f").unwrap();
        assert_eq!(back, f);
    }
}
