//! Weighted finite-state acceptors and transducers over negative-log weights.
//!
//! Labels are alphabet symbols. Label `0` is ε, which is also the blank's
//! index in an [`Alphabet`]; the blank never labels an arc, so the two never
//! collide. Only acyclic machines are supported by the optimization passes.

mod compose;
mod optimize;

use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

use crate::alphabet::{Alphabet, Symbol};
use crate::error::ParseError;

pub use compose::{compose, edit_distance_fst, identity_transducer, linear_acceptor};
pub use optimize::{
    backward_distances, best_path, determinize, forward_distances, minimize, push_weights, remove_epsilon,
    shortest_distance,
};

pub type StateId = usize;
pub type Label = Symbol;

pub const EPSILON: Label = 0;
pub const EPSILON_TOKEN: &str = "<eps>";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WfstError {
    #[error("machine has no start state")]
    NoStart,
    #[error("machine contains a cycle")]
    Cyclic,
    #[error("machine contains epsilon arcs")]
    EpsilonArcs,
    #[error("state {0} has two outgoing arcs with the same label")]
    Nondeterministic(StateId),
    #[error("operation requires an acceptor")]
    NotAcceptor,
    #[error("label spaces differ: {left} vs {right}")]
    AlphabetMismatch { left: u32, right: u32 },
    #[error("no accepting path")]
    EmptyLanguage,
    #[error("invalid state id {0}")]
    InvalidState(StateId),
    #[error("label {label} outside label space of size {space}")]
    InvalidLabel { label: Label, space: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub ilabel: Label,
    pub olabel: Label,
    /// Negative log weight.
    pub weight: f64,
    pub nextstate: StateId,
}

impl Arc {
    pub fn new(ilabel: Label, olabel: Label, weight: f64, nextstate: StateId) -> Self {
        Self {
            ilabel,
            olabel,
            weight,
            nextstate,
        }
    }

    /// An acceptor arc.
    pub fn accept(label: Label, weight: f64, nextstate: StateId) -> Self {
        Self::new(label, label, weight, nextstate)
    }

    pub fn is_epsilon(&self) -> bool {
        self.ilabel == EPSILON && self.olabel == EPSILON
    }
}

/// A weighted automaton with a single start state and final weights.
///
/// `label_space` bounds the labels: valid labels are `0..label_space`, and
/// for machines built over an [`Alphabet`] it equals `alphabet.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Wfst {
    arcs: Vec<Vec<Arc>>,
    finals: Vec<f64>,
    start: Option<StateId>,
    label_space: u32,
}

impl Wfst {
    pub fn new(label_space: u32) -> Self {
        Self {
            arcs: Vec::new(),
            finals: Vec::new(),
            start: None,
            label_space,
        }
    }

    pub fn add_state(&mut self) -> StateId {
        self.arcs.push(Vec::new());
        self.finals.push(f64::INFINITY);
        self.arcs.len() - 1
    }

    pub fn add_states(&mut self, n: usize) {
        for _ in 0..n {
            self.add_state();
        }
    }

    pub fn set_start(&mut self, s: StateId) {
        assert!(s < self.num_states(), "start state {s} out of range");
        self.start = Some(s);
    }

    pub fn set_final(&mut self, s: StateId, weight: f64) {
        self.finals[s] = weight;
    }

    pub fn add_arc(&mut self, src: StateId, arc: Arc) {
        assert!(
            arc.nextstate < self.num_states(),
            "arc target {} out of range",
            arc.nextstate
        );
        self.arcs[src].push(arc);
    }

    pub fn start(&self) -> Option<StateId> {
        self.start
    }

    pub fn label_space(&self) -> u32 {
        self.label_space
    }

    pub fn num_states(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }

    pub fn arcs(&self, s: StateId) -> &[Arc] {
        &self.arcs[s]
    }

    pub(crate) fn arcs_mut(&mut self, s: StateId) -> &mut Vec<Arc> {
        &mut self.arcs[s]
    }

    /// `+inf` for non-final states.
    pub fn final_weight(&self, s: StateId) -> f64 {
        self.finals[s]
    }

    pub fn is_final(&self, s: StateId) -> bool {
        self.finals[s] < f64::INFINITY
    }

    pub fn states(&self) -> std::ops::Range<StateId> {
        0..self.arcs.len()
    }

    pub fn is_acceptor(&self) -> bool {
        self.arcs.iter().flatten().all(|a| a.ilabel == a.olabel)
    }

    pub fn has_epsilons(&self) -> bool {
        self.arcs.iter().flatten().any(Arc::is_epsilon)
    }

    /// First state with two outgoing arcs sharing an input label.
    pub fn nondeterministic_state(&self) -> Option<StateId> {
        self.states().find(|&s| {
            let mut labels: Vec<Label> = self.arcs[s].iter().map(|a| a.ilabel).collect();
            labels.sort_unstable();
            labels.windows(2).any(|w| w[0] == w[1])
        })
    }

    pub fn is_deterministic(&self) -> bool {
        self.nondeterministic_state().is_none()
    }

    /// Checks arc targets, labels and the start state.
    pub fn validate(&self) -> Result<(), WfstError> {
        let start = self.start.ok_or(WfstError::NoStart)?;
        if start >= self.num_states() {
            return Err(WfstError::InvalidState(start));
        }
        for arc in self.arcs.iter().flatten() {
            if arc.nextstate >= self.num_states() {
                return Err(WfstError::InvalidState(arc.nextstate));
            }
            for label in [arc.ilabel, arc.olabel] {
                if label >= self.label_space {
                    return Err(WfstError::InvalidLabel {
                        label,
                        space: self.label_space,
                    });
                }
            }
        }
        Ok(())
    }

    /// Kahn topological order over all states.
    pub fn topo_order(&self) -> Result<Vec<StateId>, WfstError> {
        let n = self.num_states();
        let mut indeg = vec![0usize; n];
        for arc in self.arcs.iter().flatten() {
            indeg[arc.nextstate] += 1;
        }
        let mut queue: VecDeque<StateId> = (0..n).filter(|&s| indeg[s] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(s) = queue.pop_front() {
            order.push(s);
            for arc in &self.arcs[s] {
                indeg[arc.nextstate] -= 1;
                if indeg[arc.nextstate] == 0 {
                    queue.push_back(arc.nextstate);
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(WfstError::Cyclic)
        }
    }

    pub fn is_acyclic(&self) -> bool {
        self.topo_order().is_ok()
    }

    /// Removes states that are not on some start-to-final path.
    ///
    /// Surviving states keep their relative order. Arcs with infinite weight
    /// are dropped. An empty language leaves a lone non-final start state.
    pub fn connect(&self) -> Result<Wfst, WfstError> {
        let start = self.start.ok_or(WfstError::NoStart)?;
        let n = self.num_states();
        let mut access = vec![false; n];
        let mut stack = vec![start];
        access[start] = true;
        while let Some(s) = stack.pop() {
            for arc in &self.arcs[s] {
                if arc.weight < f64::INFINITY && !access[arc.nextstate] {
                    access[arc.nextstate] = true;
                    stack.push(arc.nextstate);
                }
            }
        }
        let mut reverse: Vec<Vec<StateId>> = vec![Vec::new(); n];
        for s in 0..n {
            for arc in &self.arcs[s] {
                if arc.weight < f64::INFINITY {
                    reverse[arc.nextstate].push(s);
                }
            }
        }
        let mut coaccess = vec![false; n];
        let mut stack: Vec<StateId> = (0..n).filter(|&s| self.is_final(s)).collect();
        for &s in &stack {
            coaccess[s] = true;
        }
        while let Some(s) = stack.pop() {
            for &p in &reverse[s] {
                if !coaccess[p] {
                    coaccess[p] = true;
                    stack.push(p);
                }
            }
        }
        let mut out = Wfst::new(self.label_space);
        if !coaccess[start] {
            let s = out.add_state();
            out.set_start(s);
            return Ok(out);
        }
        let mut remap = vec![usize::MAX; n];
        for s in 0..n {
            if access[s] && coaccess[s] {
                remap[s] = out.add_state();
            }
        }
        for s in 0..n {
            if remap[s] == usize::MAX {
                continue;
            }
            out.finals[remap[s]] = self.finals[s];
            for arc in &self.arcs[s] {
                let t = remap[arc.nextstate];
                if t != usize::MAX && arc.weight < f64::INFINITY {
                    out.arcs[remap[s]].push(Arc { nextstate: t, ..*arc });
                }
            }
        }
        out.start = Some(remap[start]);
        Ok(out)
    }

    /// Sorts every state's arcs by (ilabel, olabel, nextstate).
    pub fn sort_arcs(&mut self) {
        for arcs in &mut self.arcs {
            arcs.sort_by(|a, b| {
                (a.ilabel, a.olabel, a.nextstate)
                    .cmp(&(b.ilabel, b.olabel, b.nextstate))
                    .then(a.weight.total_cmp(&b.weight))
            });
        }
    }

    /// Same machine with every input and output label set to the input label.
    pub fn project_input(&self) -> Wfst {
        let mut out = self.clone();
        for arc in out.arcs.iter_mut().flatten() {
            arc.olabel = arc.ilabel;
        }
        out
    }

    /// Serializes an acceptor in the line-oriented text format.
    pub fn to_text(&self, alphabet: &Alphabet) -> Result<String, WfstError> {
        if !self.is_acceptor() {
            return Err(WfstError::NotAcceptor);
        }
        let start = self.start.ok_or(WfstError::NoStart)?;
        let mut s = String::new();
        writeln!(s, "start {start}").unwrap();
        for src in self.states() {
            for arc in &self.arcs[src] {
                let label = if arc.ilabel == EPSILON {
                    EPSILON_TOKEN
                } else {
                    alphabet.token(arc.ilabel)
                };
                writeln!(s, "arc {src} {} {label} {}", arc.nextstate, arc.weight).unwrap();
            }
        }
        for st in self.states() {
            if self.is_final(st) {
                writeln!(s, "final {st} {}", self.finals[st]).unwrap();
            }
        }
        Ok(s)
    }

    /// Parses the text format produced by [`Wfst::to_text`].
    pub fn parse(text: &str, alphabet: &Alphabet, source_name: &str) -> Result<Wfst, ParseError> {
        let err = |line: usize, msg: String| ParseError::new(source_name, line, msg);
        let mut fst = Wfst::new(alphabet.len() as u32);
        let mut start = None;
        let ensure = |fst: &mut Wfst, s: StateId| {
            while fst.num_states() <= s {
                fst.add_state();
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let fields: Vec<&str> = raw.split_whitespace().collect();
            let state = |f: &str| {
                f.parse::<StateId>()
                    .map_err(|_| err(lineno, format!("bad state id {f:?}")))
            };
            let weight = |f: &str| {
                f.parse::<f64>()
                    .ok()
                    .filter(|w| !w.is_nan())
                    .ok_or_else(|| err(lineno, format!("bad weight {f:?}")))
            };
            match fields.as_slice() {
                [] => continue,
                ["start", s] => {
                    if start.is_some() {
                        return Err(err(lineno, "duplicate start record".into()));
                    }
                    let s = state(s)?;
                    ensure(&mut fst, s);
                    start = Some(s);
                }
                ["arc", src, dst, label, w] => {
                    let (src, dst) = (state(src)?, state(dst)?);
                    let label = if *label == EPSILON_TOKEN {
                        EPSILON
                    } else {
                        match alphabet.symbol(label) {
                            Some(l) if l != crate::alphabet::BLANK => l,
                            _ => return Err(err(lineno, format!("unknown label {label}"))),
                        }
                    };
                    let w = weight(w)?;
                    ensure(&mut fst, src.max(dst));
                    fst.add_arc(src, Arc::accept(label, w, dst));
                }
                ["final", s, w] => {
                    let s = state(s)?;
                    let w = weight(w)?;
                    ensure(&mut fst, s);
                    fst.set_final(s, w);
                }
                _ => return Err(err(lineno, format!("unrecognized record {raw:?}"))),
            }
        }
        match start {
            Some(s) => fst.set_start(s),
            None => return Err(err(0, "missing start record".into())),
        }
        Ok(fst)
    }
}
