use super::{NBestList, PipelineError};
use crate::alphabet::Symbol;
use crate::graph::GtcGraph;
use crate::semiring::TropicalSemiring;
use crate::wfst::{compose, edit_distance_fst, linear_acceptor, remove_epsilon, shortest_distance};

/// Levenshtein distance between two symbol strings.
fn edit_distance(a: &[Symbol], b: &[Symbol]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (diag + usize::from(x != y)).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Edit distance of `hyp` against `reference`, divided by `|reference|`.
pub fn sequence_error_rate(hyp: &[Symbol], reference: &[Symbol]) -> Result<f64, PipelineError> {
    if reference.is_empty() {
        return Err(PipelineError::EmptyReference);
    }
    Ok(edit_distance(hyp, reference) as f64 / reference.len() as f64)
}

/// Best per-hypothesis error rate in the list.
pub fn nbest_oracle_ler(nbest: &NBestList, reference: &[Symbol]) -> Result<f64, PipelineError> {
    if reference.is_empty() {
        return Err(PipelineError::EmptyReference);
    }
    let best = nbest
        .hyps
        .iter()
        .map(|h| edit_distance(&h.tokens, reference))
        .min()
        .ok_or(PipelineError::EmptyNBest)?;
    Ok(best as f64 / reference.len() as f64)
}

/// Minimum error rate over every label string the graph can emit, via
/// composition with the edit-distance transducer and the reference.
pub fn graph_oracle_ler(graph: &GtcGraph, reference: &[Symbol]) -> Result<f64, PipelineError> {
    if reference.is_empty() {
        return Err(PipelineError::EmptyReference);
    }
    let space = graph
        .max_symbol()
        .max(reference.iter().copied().max().unwrap_or(0))
        + 1;
    let acceptor = remove_epsilon::<TropicalSemiring>(&graph.label_acceptor(space))?;
    let edits = compose::<TropicalSemiring>(&acceptor, &edit_distance_fst(space))?;
    let lattice = compose::<TropicalSemiring>(&edits, &linear_acceptor(reference, space))?;
    let d = shortest_distance::<TropicalSemiring>(&lattice)?;
    Ok(d / reference.len() as f64)
}
