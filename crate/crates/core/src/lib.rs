//! Graph-based temporal classification: a CTC-style loss over arbitrary
//! supervision graphs, the WFST tooling that builds those graphs from
//! N-best lists, and brute-force oracles for testing.

pub mod alphabet;
pub mod error;
pub mod graph;
pub mod loss;
pub mod oracle;
pub mod pipeline;
pub mod posterior;
pub mod semiring;
pub mod toyasr;
pub mod wfst;

pub use alphabet::{Alphabet, Symbol, BLANK};
pub use error::{Error, ParseError, Result};
pub use graph::{ctc_linear_graph, wfst_to_ctc_graph, Edge, GtcGraph};
pub use loss::{gradient, loss, loss_and_grad_batch, loss_and_gradient, GtcError, LossAndGrad};
pub use pipeline::{
    build_supervision_graph, ConfusionNetwork, Hypothesis, NBestList, PipelineConfig, PipelineError,
};
pub use posterior::{LogitMatrix, PosteriorMatrix};
