//! Epsilon removal, determinization, minimization and distances for
//! acyclic machines.

use std::collections::{BTreeMap, HashMap, VecDeque};

use super::{Arc, Label, StateId, Wfst, WfstError, EPSILON};
use crate::semiring::{Semiring, TropicalSemiring};

/// Weights are compared after rounding to this grid.
const QUANTUM: f64 = 1e-9;

fn quantize(w: f64) -> i64 {
    if w == f64::INFINITY {
        i64::MAX
    } else {
        (w / QUANTUM).round() as i64
    }
}

/// ⊕-sum of all paths from the start to each state.
pub fn forward_distances<S: Semiring>(fst: &Wfst) -> Result<Vec<f64>, WfstError> {
    let start = fst.start().ok_or(WfstError::NoStart)?;
    let order = fst.topo_order()?;
    let mut dist = vec![S::zero(); fst.num_states()];
    dist[start] = S::one();
    for s in order {
        if dist[s] == S::zero() {
            continue;
        }
        for arc in fst.arcs(s) {
            let w = S::times(dist[s], arc.weight);
            dist[arc.nextstate] = S::plus(dist[arc.nextstate], w);
        }
    }
    Ok(dist)
}

/// ⊕-sum of all paths from each state to a final state, final weight included.
pub fn backward_distances<S: Semiring>(fst: &Wfst) -> Result<Vec<f64>, WfstError> {
    let order = fst.topo_order()?;
    let mut dist: Vec<f64> = fst.states().map(|s| fst.final_weight(s)).collect();
    for &s in order.iter().rev() {
        let mut d = dist[s];
        for arc in fst.arcs(s) {
            d = S::plus(d, S::times(arc.weight, dist[arc.nextstate]));
        }
        dist[s] = d;
    }
    Ok(dist)
}

/// ⊕-total weight of all accepting paths.
///
/// With [`TropicalSemiring`] this is the cost of the best path; with
/// [`crate::semiring::LogSemiring`] it is the negative log of the total mass.
pub fn shortest_distance<S: Semiring>(fst: &Wfst) -> Result<f64, WfstError> {
    let dist = forward_distances::<S>(fst)?;
    let total = S::sum(fst.states().map(|s| S::times(dist[s], fst.final_weight(s))));
    if total == S::zero() {
        Err(WfstError::EmptyLanguage)
    } else {
        Ok(total)
    }
}

/// Input labels (ε dropped) and cost of the cheapest accepting path.
pub fn best_path(fst: &Wfst) -> Result<(Vec<Label>, f64), WfstError> {
    let start = fst.start().ok_or(WfstError::NoStart)?;
    let order = fst.topo_order()?;
    let n = fst.num_states();
    let mut dist = vec![f64::INFINITY; n];
    let mut back: Vec<Option<(StateId, Label)>> = vec![None; n];
    dist[start] = 0.0;
    for s in order {
        if dist[s] == f64::INFINITY {
            continue;
        }
        for arc in fst.arcs(s) {
            let d = TropicalSemiring::times(dist[s], arc.weight);
            if d < dist[arc.nextstate] {
                dist[arc.nextstate] = d;
                back[arc.nextstate] = Some((s, arc.ilabel));
            }
        }
    }
    let (best, cost) = fst
        .states()
        .map(|s| (s, TropicalSemiring::times(dist[s], fst.final_weight(s))))
        .fold(
            (None, f64::INFINITY),
            |acc, (s, c)| {
                if c < acc.1 {
                    (Some(s), c)
                } else {
                    acc
                }
            },
        );
    let mut s = best.ok_or(WfstError::EmptyLanguage)?;
    let mut labels = Vec::new();
    while let Some((p, l)) = back[s] {
        if l != EPSILON {
            labels.push(l);
        }
        s = p;
    }
    labels.reverse();
    Ok((labels, cost))
}

/// Removes ε:ε arcs from an acyclic machine.
///
/// Each state absorbs the non-ε arcs and final weights of its ε-closure,
/// weighted by the ⊕-sum of the ε-paths that reach them.
pub fn remove_epsilon<S: Semiring>(fst: &Wfst) -> Result<Wfst, WfstError> {
    fst.validate()?;
    let order = fst.topo_order()?;
    let n = fst.num_states();
    let mut closure: Vec<BTreeMap<StateId, f64>> = vec![BTreeMap::new(); n];
    for &s in order.iter().rev() {
        let mut c = BTreeMap::from([(s, S::one())]);
        for arc in fst.arcs(s).iter().filter(|a| a.is_epsilon()) {
            for (&p, &d) in &closure[arc.nextstate] {
                let w = S::times(arc.weight, d);
                let e = c.entry(p).or_insert_with(S::zero);
                *e = S::plus(*e, w);
            }
        }
        closure[s] = c;
    }

    let mut out = Wfst::new(fst.label_space());
    out.add_states(n);
    out.set_start(fst.start().unwrap());
    for (s, reach) in closure.iter().enumerate() {
        let mut fin = S::zero();
        for (&p, &d) in reach {
            fin = S::plus(fin, S::times(d, fst.final_weight(p)));
            for arc in fst.arcs(p).iter().filter(|a| !a.is_epsilon()) {
                out.add_arc(
                    s,
                    Arc {
                        weight: S::times(d, arc.weight),
                        ..*arc
                    },
                );
            }
        }
        out.set_final(s, fin);
    }
    out.connect()
}

/// Weighted subset construction for ε-free acyclic acceptors.
///
/// A subset is a set of (state, residual weight) pairs; the arc leaving a
/// subset on label `a` carries the ⊕ of all ways to read `a`, and the
/// residuals keep what is left over per destination.
pub fn determinize<S: Semiring>(fst: &Wfst) -> Result<Wfst, WfstError> {
    fst.validate()?;
    if !fst.is_acceptor() {
        return Err(WfstError::NotAcceptor);
    }
    if fst.has_epsilons() {
        return Err(WfstError::EpsilonArcs);
    }
    fst.topo_order()?;
    let start = fst.start().unwrap();

    type Subset = Vec<(StateId, f64)>;
    let key = |sub: &Subset| -> Vec<(StateId, i64)> { sub.iter().map(|&(s, r)| (s, quantize(r))).collect() };

    let mut out = Wfst::new(fst.label_space());
    let mut ids: HashMap<Vec<(StateId, i64)>, StateId> = HashMap::new();
    let mut queue: VecDeque<(StateId, Subset)> = VecDeque::new();

    let init: Subset = vec![(start, S::one())];
    let s0 = out.add_state();
    out.set_start(s0);
    ids.insert(key(&init), s0);
    queue.push_back((s0, init));

    while let Some((id, subset)) = queue.pop_front() {
        let fin = S::sum(subset.iter().map(|&(q, r)| S::times(r, fst.final_weight(q))));
        out.set_final(id, fin);

        let mut by_label: BTreeMap<Label, BTreeMap<StateId, f64>> = BTreeMap::new();
        for &(q, r) in &subset {
            for arc in fst.arcs(q) {
                let w = S::times(r, arc.weight);
                if w == S::zero() {
                    continue;
                }
                let e = by_label
                    .entry(arc.ilabel)
                    .or_default()
                    .entry(arc.nextstate)
                    .or_insert_with(S::zero);
                *e = S::plus(*e, w);
            }
        }
        for (label, dests) in by_label {
            let total = S::sum(dests.values().copied());
            let next: Subset = dests.into_iter().map(|(p, w)| (p, S::divide(w, total))).collect();
            let k = key(&next);
            let target = match ids.get(&k) {
                Some(&t) => t,
                None => {
                    let t = out.add_state();
                    ids.insert(k, t);
                    queue.push_back((t, next));
                    t
                }
            };
            out.add_arc(id, Arc::accept(label, total, target));
        }
    }
    Ok(out)
}

/// Moves weight toward the start state.
///
/// Every non-start state ends up with outgoing arcs and final weight that
/// ⊕-sum to one; the start state keeps the machine's total weight. The
/// input must be connected so that all backward distances are finite.
pub fn push_weights<S: Semiring>(fst: &Wfst) -> Result<Wfst, WfstError> {
    let start = fst.start().ok_or(WfstError::NoStart)?;
    let dist = backward_distances::<S>(fst)?;
    let mut out = fst.clone();
    for s in fst.states() {
        let here = if s == start { S::one() } else { dist[s] };
        if here == S::zero() {
            continue;
        }
        for arc in out.arcs_mut(s) {
            arc.weight = S::divide(S::times(arc.weight, dist[arc.nextstate]), here);
        }
        let f = fst.final_weight(s);
        out.set_final(s, S::divide(f, here));
    }
    Ok(out)
}

/// Minimizes a deterministic ε-free acyclic acceptor.
///
/// Weights are pushed toward the start, then states are merged bottom-up on
/// (final weight, arcs as (label, weight, target class)) signatures with
/// weights rounded to 1e-9. Output states are numbered breadth-first from the
/// start with arcs sorted by label, so equal machines serialize identically.
pub fn minimize<S: Semiring>(fst: &Wfst) -> Result<Wfst, WfstError> {
    fst.validate()?;
    if !fst.is_acceptor() {
        return Err(WfstError::NotAcceptor);
    }
    if fst.has_epsilons() {
        return Err(WfstError::EpsilonArcs);
    }
    if let Some(s) = fst.nondeterministic_state() {
        return Err(WfstError::Nondeterministic(s));
    }
    let connected = fst.connect()?;
    let pushed = push_weights::<S>(&connected)?;
    let start = pushed.start().unwrap();
    let order = pushed.topo_order()?;

    #[derive(PartialEq, Eq, Hash)]
    struct Signature {
        is_start: bool,
        fin: i64,
        arcs: Vec<(Label, i64, usize)>,
    }

    let n = pushed.num_states();
    let mut class = vec![usize::MAX; n];
    let mut reps: Vec<StateId> = Vec::new();
    let mut table: HashMap<Signature, usize> = HashMap::new();
    for &s in order.iter().rev() {
        let mut arcs: Vec<(Label, i64, usize)> = pushed
            .arcs(s)
            .iter()
            .map(|a| (a.ilabel, quantize(a.weight), class[a.nextstate]))
            .collect();
        arcs.sort_unstable();
        let sig = Signature {
            is_start: s == start,
            fin: quantize(pushed.final_weight(s)),
            arcs,
        };
        let c = *table.entry(sig).or_insert_with(|| {
            reps.push(s);
            reps.len() - 1
        });
        class[s] = c;
    }

    // Breadth-first renumbering of the quotient.
    let mut out = Wfst::new(pushed.label_space());
    let mut new_id = vec![usize::MAX; reps.len()];
    let mut queue = VecDeque::new();
    new_id[class[start]] = out.add_state();
    out.set_start(new_id[class[start]]);
    queue.push_back(class[start]);
    while let Some(c) = queue.pop_front() {
        let rep = reps[c];
        let mut arcs: Vec<Arc> = pushed.arcs(rep).to_vec();
        arcs.sort_by_key(|a| a.ilabel);
        let src = new_id[c];
        out.set_final(src, pushed.final_weight(rep));
        for arc in arcs {
            let tc = class[arc.nextstate];
            if new_id[tc] == usize::MAX {
                new_id[tc] = out.add_state();
                queue.push_back(tc);
            }
            out.add_arc(src, Arc::accept(arc.ilabel, arc.weight, new_id[tc]));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiring::LogSemiring;

    fn acceptor(n: usize, arcs: &[(usize, usize, Label, f64)], finals: &[(usize, f64)]) -> Wfst {
        let mut f = Wfst::new(4);
        f.add_states(n);
        f.set_start(0);
        for &(s, d, l, w) in arcs {
            f.add_arc(s, Arc::accept(l, w, d));
        }
        for &(s, w) in finals {
            f.set_final(s, w);
        }
        f
    }

    #[test]
    fn epsilon_tail_folds_into_arc() {
        // a:w1 then ε:w2 into the final state
        let f = acceptor(3, &[(0, 1, 1, 0.4), (1, 2, EPSILON, 0.7)], &[(2, 0.0)]);
        let g = remove_epsilon::<LogSemiring>(&f).unwrap();
        assert!(!g.has_epsilons());
        assert_eq!(g.num_arcs(), 1);
        let total = shortest_distance::<LogSemiring>(&g).unwrap();
        assert!((total - 1.1).abs() < 1e-12);
    }

    #[test]
    fn epsilon_free_machine_is_unchanged() {
        let f = acceptor(3, &[(0, 1, 1, 0.4), (1, 2, 2, 0.7)], &[(2, 0.1)]);
        let g = remove_epsilon::<LogSemiring>(&f).unwrap();
        assert_eq!(g, f);
    }

    #[test]
    fn remove_epsilon_rejects_cycles() {
        let f = acceptor(2, &[(0, 1, EPSILON, 0.0), (1, 0, EPSILON, 0.0)], &[(1, 0.0)]);
        assert_eq!(remove_epsilon::<LogSemiring>(&f), Err(WfstError::Cyclic));
    }

    #[test]
    fn determinize_merges_parallel_paths() {
        // two "a b" paths with weights w1 and w2
        let (w1, w2) = (0.5, 1.25);
        let f = acceptor(
            5,
            &[(0, 1, 1, w1), (1, 2, 2, 0.0), (0, 3, 1, w2), (3, 4, 2, 0.0)],
            &[(2, 0.0), (4, 0.0)],
        );
        let d = determinize::<LogSemiring>(&f).unwrap();
        assert!(d.is_deterministic());
        let (labels, _) = best_path(&d).unwrap();
        assert_eq!(labels, vec![1, 2]);
        let total = shortest_distance::<LogSemiring>(&d).unwrap();
        assert!((total - LogSemiring::plus(w1, w2)).abs() < 1e-12);
        // a single string, so a single arc per level
        assert_eq!(d.num_arcs(), 2);
    }

    #[test]
    fn determinize_requires_epsilon_free() {
        let f = acceptor(2, &[(0, 1, EPSILON, 0.0)], &[(1, 0.0)]);
        assert_eq!(determinize::<LogSemiring>(&f), Err(WfstError::EpsilonArcs));
    }

    #[test]
    fn minimize_merges_shared_suffix() {
        // "a c" and "b c" with the c-suffix built twice
        let f = acceptor(
            5,
            &[(0, 1, 1, 0.7), (0, 2, 2, 0.7), (1, 3, 3, 0.0), (2, 4, 3, 0.0)],
            &[(3, 0.0), (4, 0.0)],
        );
        let m = minimize::<LogSemiring>(&f).unwrap();
        assert_eq!(m.num_states(), 3);
        assert_eq!(m.num_arcs(), 3);
    }

    #[test]
    fn minimal_machine_keeps_its_size() {
        let f = acceptor(2, &[(0, 1, 1, 0.3)], &[(1, 0.0)]);
        let m = minimize::<LogSemiring>(&f).unwrap();
        assert_eq!(m.num_states(), 2);
        assert!((shortest_distance::<LogSemiring>(&m).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn minimize_rejects_nondeterministic() {
        let f = acceptor(3, &[(0, 1, 1, 0.0), (0, 2, 1, 0.0)], &[(1, 0.0), (2, 0.0)]);
        assert_eq!(minimize::<LogSemiring>(&f), Err(WfstError::Nondeterministic(0)));
    }

    #[test]
    fn pushed_states_are_stochastic() {
        let f = acceptor(
            4,
            &[(0, 1, 1, 0.2), (1, 2, 2, 1.0), (1, 3, 3, 2.0)],
            &[(2, 0.5), (3, 0.0), (1, 3.0)],
        );
        let p = push_weights::<LogSemiring>(&f).unwrap();
        for s in 1..4 {
            let mass = LogSemiring::sum(p.arcs(s).iter().map(|a| a.weight).chain([p.final_weight(s)]));
            assert!(mass.abs() < 1e-12, "state {s}: {mass}");
        }
    }

    #[test]
    fn shortest_distance_examples() {
        let f = acceptor(4, &[(0, 1, 1, 1.0), (1, 2, 1, 2.0), (2, 3, 1, 3.0)], &[(3, 0.0)]);
        assert_eq!(shortest_distance::<TropicalSemiring>(&f).unwrap(), 6.0);
        let g = acceptor(3, &[(0, 1, 1, 4.0), (0, 2, 2, 7.0)], &[(1, 0.0), (2, 0.0)]);
        assert_eq!(shortest_distance::<TropicalSemiring>(&g).unwrap(), 4.0);
        let e = acceptor(2, &[(0, 1, 1, 4.0)], &[]);
        assert_eq!(
            shortest_distance::<TropicalSemiring>(&e),
            Err(WfstError::EmptyLanguage)
        );
    }
}
