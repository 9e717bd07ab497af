use std::collections::{HashMap, VecDeque};

use super::{Arc, Label, StateId, Wfst, WfstError, EPSILON};
use crate::semiring::Semiring;

/// Composition with the three-state ε-matching filter.
///
/// Filter state 0 allows anything; after `a` moves alone on an ε output the
/// filter is in state 2, after `b` moves alone on an ε input it is in state 1,
/// and each state blocks the other kind of lone move. This keeps exactly one
/// composed path per pair of matching paths, so log-semiring sums are exact.
pub fn compose<S: Semiring>(a: &Wfst, b: &Wfst) -> Result<Wfst, WfstError> {
    if a.label_space() != b.label_space() {
        return Err(WfstError::AlphabetMismatch {
            left: a.label_space(),
            right: b.label_space(),
        });
    }
    a.validate()?;
    b.validate()?;

    type Triple = (StateId, StateId, u8);
    let mut out = Wfst::new(a.label_space());
    let mut ids: HashMap<Triple, StateId> = HashMap::new();
    let mut queue: VecDeque<Triple> = VecDeque::new();

    let init = (a.start().unwrap(), b.start().unwrap(), 0u8);
    ids.insert(init, out.add_state());
    out.set_start(0);
    queue.push_back(init);

    while let Some(triple @ (qa, qb, filter)) = queue.pop_front() {
        let src = ids[&triple];
        let mut target = |t: Triple, out: &mut Wfst, queue: &mut VecDeque<Triple>| -> StateId {
            *ids.entry(t).or_insert_with(|| {
                queue.push_back(t);
                out.add_state()
            })
        };
        out.set_final(src, S::times(a.final_weight(qa), b.final_weight(qb)));

        for ea in a.arcs(qa) {
            if ea.olabel == EPSILON {
                if filter != 1 {
                    let t = target((ea.nextstate, qb, 2), &mut out, &mut queue);
                    out.add_arc(src, Arc::new(ea.ilabel, EPSILON, ea.weight, t));
                }
                if filter == 0 {
                    for eb in b.arcs(qb).iter().filter(|e| e.ilabel == EPSILON) {
                        let t = target((ea.nextstate, eb.nextstate, 0), &mut out, &mut queue);
                        let w = S::times(ea.weight, eb.weight);
                        out.add_arc(src, Arc::new(ea.ilabel, eb.olabel, w, t));
                    }
                }
            } else {
                for eb in b.arcs(qb).iter().filter(|e| e.ilabel == ea.olabel) {
                    let t = target((ea.nextstate, eb.nextstate, 0), &mut out, &mut queue);
                    let w = S::times(ea.weight, eb.weight);
                    out.add_arc(src, Arc::new(ea.ilabel, eb.olabel, w, t));
                }
            }
        }
        if filter != 2 {
            for eb in b.arcs(qb).iter().filter(|e| e.ilabel == EPSILON) {
                let t = target((qa, eb.nextstate, 1), &mut out, &mut queue);
                out.add_arc(src, Arc::new(EPSILON, eb.olabel, eb.weight, t));
            }
        }
    }
    Ok(out)
}

/// Single-path acceptor spelling `labels` with zero cost.
pub fn linear_acceptor(labels: &[Label], label_space: u32) -> Wfst {
    let mut f = Wfst::new(label_space);
    f.add_states(labels.len() + 1);
    f.set_start(0);
    for (i, &l) in labels.iter().enumerate() {
        f.add_arc(i, Arc::accept(l, 0.0, i + 1));
    }
    f.set_final(labels.len(), 0.0);
    f
}

/// One-state transducer mapping every label to itself at cost zero.
pub fn identity_transducer(label_space: u32) -> Wfst {
    let mut f = Wfst::new(label_space);
    let s = f.add_state();
    f.set_start(s);
    f.set_final(s, 0.0);
    for l in 1..label_space {
        f.add_arc(s, Arc::accept(l, 0.0, s));
    }
    f
}

/// Levenshtein transducer over labels `1..label_space`.
///
/// Matches cost 0; substitution `x:y`, deletion `x:ε` and insertion `ε:y`
/// cost 1 each.
pub fn edit_distance_fst(label_space: u32) -> Wfst {
    let mut f = Wfst::new(label_space);
    let s = f.add_state();
    f.set_start(s);
    f.set_final(s, 0.0);
    for x in 1..label_space {
        for y in 1..label_space {
            let cost = if x == y { 0.0 } else { 1.0 };
            f.add_arc(s, Arc::new(x, y, cost, s));
        }
        f.add_arc(s, Arc::new(x, EPSILON, 1.0, s));
        f.add_arc(s, Arc::new(EPSILON, x, 1.0, s));
    }
    f
}
