//! Text serialization: `node <id> <label>` and `edge <src> <dst> <weight>`.

use std::fmt::Write as _;

use super::{Edge, GtcGraph, START};
use crate::alphabet::{Alphabet, BLANK, BLANK_TOKEN};
use crate::error::ParseError;

const START_TOKEN: &str = "<s>";
const END_TOKEN: &str = "</s>";

impl GtcGraph {
    /// Weights are written in shortest round-trip decimal form, so parsing the
    /// output reproduces the graph exactly.
    pub fn to_text(&self, alphabet: &Alphabet) -> String {
        let mut s = String::new();
        writeln!(s, "node {START} {START_TOKEN}").unwrap();
        for (i, &l) in self.labels.iter().enumerate() {
            let tok = if l == BLANK {
                BLANK_TOKEN
            } else {
                alphabet.token(l)
            };
            writeln!(s, "node {} {tok}", i + 1).unwrap();
        }
        writeln!(s, "node {} {END_TOKEN}", self.end()).unwrap();
        for e in &self.edges {
            writeln!(s, "edge {} {} {}", e.src, e.dst, e.weight).unwrap();
        }
        s
    }

    pub fn parse(text: &str, alphabet: &Alphabet, source_name: &str) -> Result<Self, ParseError> {
        let err = |line: usize, msg: String| ParseError::new(source_name, line, msg);
        let mut nodes: Vec<(usize, Option<u32>, usize)> = Vec::new();
        let mut edges = Vec::new();
        let mut start_seen = false;
        let mut end_id = None;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let fields: Vec<&str> = raw.split_whitespace().collect();
            let id = |f: &str| {
                f.parse::<usize>()
                    .map_err(|_| err(lineno, format!("bad node id {f:?}")))
            };
            match fields.as_slice() {
                [] => continue,
                ["node", n, tok] => {
                    let n = id(n)?;
                    match *tok {
                        START_TOKEN => {
                            if n != START {
                                return Err(err(lineno, format!("start node must be {START}")));
                            }
                            start_seen = true;
                        }
                        END_TOKEN => end_id = Some(n),
                        tok => {
                            let sym = alphabet
                                .symbol(tok)
                                .ok_or_else(|| err(lineno, format!("unknown token {tok}")))?;
                            nodes.push((n, Some(sym), lineno));
                        }
                    }
                }
                ["edge", s, d, w] => {
                    let w = w
                        .parse::<f64>()
                        .map_err(|_| err(lineno, format!("bad weight {w:?}")))?;
                    edges.push(Edge::new(id(s)?, id(d)?, w));
                }
                _ => return Err(err(lineno, format!("unrecognized record {raw:?}"))),
            }
        }
        if !start_seen {
            return Err(err(0, "missing start node".into()));
        }
        let end = end_id.ok_or_else(|| err(0, "missing end node".into()))?;
        nodes.sort_by_key(|n| n.0);
        if end != nodes.len() + 1 {
            return Err(err(
                0,
                format!("end node id {end} but {} emitting nodes", nodes.len()),
            ));
        }
        for (k, &(n, _, line)) in nodes.iter().enumerate() {
            if n != k + 1 {
                return Err(err(line, format!("node ids must be dense, found {n}")));
            }
        }
        let labels = nodes.iter().map(|n| n.1.unwrap()).collect();
        GtcGraph::new(labels, edges).map_err(|e| err(0, e.to_string()))
    }
}
