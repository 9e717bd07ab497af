//! Pseudo-label supervision graphs from N-best lists.
//!
//! N-best list → confusion network → optimized acceptor → CTC-style graph,
//! with optional probability pruning after the first two stages.

mod ler;
mod sausage;

use std::fmt::Write as _;

use thiserror::Error;

use crate::alphabet::{Alphabet, Symbol};
use crate::error::ParseError;
use crate::graph::GraphError;
use crate::wfst::WfstError;

pub use ler::{graph_oracle_ler, nbest_oracle_ler, sequence_error_rate};
pub use sausage::{build_supervision_graph, cn_to_wfst, nbest_to_cn, prune_cn, prune_wfst};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("empty hypothesis list")]
    EmptyNBest,
    #[error("empty reference")]
    EmptyReference,
    #[error("non-finite hypothesis score {0}")]
    InvalidScore(f64),
    #[error("mu must be finite and >= 0, got {0}")]
    InvalidMu(f64),
    #[error("eta must lie in [0, 1), got {0}")]
    InvalidEta(f64),
    #[error(transparent)]
    Wfst(#[from] WfstError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One decoder hypothesis; `score` is a natural-log probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<Symbol>,
    pub score: f64,
}

/// Scored hypotheses for one utterance, best first by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct NBestList {
    pub utterance: String,
    pub hyps: Vec<Hypothesis>,
}

impl NBestList {
    pub fn new(utterance: impl Into<String>, hyps: Vec<Hypothesis>) -> Result<Self, PipelineError> {
        if hyps.is_empty() {
            return Err(PipelineError::EmptyNBest);
        }
        if let Some(h) = hyps.iter().find(|h| !h.score.is_finite()) {
            return Err(PipelineError::InvalidScore(h.score));
        }
        Ok(Self {
            utterance: utterance.into(),
            hyps,
        })
    }

    pub fn len(&self) -> usize {
        self.hyps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hyps.is_empty()
    }

    /// Highest-scoring hypothesis; the first one on ties.
    pub fn best(&self) -> &Hypothesis {
        let mut best = &self.hyps[0];
        for h in &self.hyps[1..] {
            if h.score > best.score {
                best = h;
            }
        }
        best
    }

    /// Keeps the first `n` hypotheses.
    pub fn truncated(&self, n: usize) -> NBestList {
        NBestList {
            utterance: self.utterance.clone(),
            hyps: self.hyps[..n.clamp(1, self.hyps.len())].to_vec(),
        }
    }
}

/// Parses `<utt>\t<score>\t<tokens>` records, grouping consecutive lines by
/// utterance id in file order.
pub fn parse_nbest(text: &str, alphabet: &Alphabet, source_name: &str) -> Result<Vec<NBestList>, ParseError> {
    let mut out: Vec<NBestList> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(ParseError::new(
                source_name,
                lineno,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let utt = fields[0].trim();
        if utt.is_empty() {
            return Err(ParseError::new(source_name, lineno, "empty utterance id"));
        }
        let score: f64 = fields[1]
            .trim()
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| ParseError::new(source_name, lineno, format!("bad score {:?}", fields[1])))?;
        let tokens = alphabet
            .encode(fields[2])
            .map_err(|msg| ParseError::new(source_name, lineno, msg))?;
        let hyp = Hypothesis { tokens, score };
        match out.last_mut() {
            Some(last) if last.utterance == utt => last.hyps.push(hyp),
            _ => out.push(NBestList {
                utterance: utt.to_string(),
                hyps: vec![hyp],
            }),
        }
    }
    Ok(out)
}

pub fn write_nbest(lists: &[NBestList], alphabet: &Alphabet) -> String {
    let mut s = String::new();
    for list in lists {
        for h in &list.hyps {
            writeln!(
                s,
                "{}\t{}\t{}",
                list.utterance,
                h.score,
                alphabet.decode(&h.tokens)
            )
            .unwrap();
        }
    }
    s
}

/// Sausage: a sequence of bins, each a distribution over tokens where
/// [`crate::wfst::EPSILON`] stands for "no token".
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionNetwork {
    pub bins: Vec<Vec<(Symbol, f64)>>,
}

impl ConfusionNetwork {
    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }

    /// Probability of `sym` in bin `i`, zero if absent.
    pub fn prob(&self, i: usize, sym: Symbol) -> f64 {
        self.bins[i]
            .iter()
            .find(|(s, _)| *s == sym)
            .map_or(0.0, |&(_, p)| p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub mu: f64,
    pub eta: f64,
    pub unit_weights: bool,
    pub prune_after_step1: bool,
    pub prune_after_step2: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mu: 0.6,
            eta: 0.0,
            unit_weights: false,
            prune_after_step1: true,
            prune_after_step2: true,
        }
    }
}

impl PipelineConfig {
    pub fn with_eta(eta: f64) -> Self {
        Self {
            eta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(PipelineError::InvalidMu(self.mu));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(PipelineError::InvalidEta(self.eta));
        }
        Ok(())
    }
}
