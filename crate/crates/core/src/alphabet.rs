//! Output symbol inventory. Index 0 is always the blank.

use std::collections::HashMap;

use crate::error::ParseError;

/// Dense symbol index into an [`Alphabet`].
pub type Symbol = u32;

pub const BLANK: Symbol = 0;
pub const BLANK_TOKEN: &str = "<b>";

/// Tokens that the text formats reserve for structural purposes.
const RESERVED: [&str; 4] = [BLANK_TOKEN, "<s>", "</s>", "<eps>"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    tokens: Vec<String>,
    index: HashMap<String, Symbol>,
}

impl Alphabet {
    /// Builds an alphabet from label tokens; the blank is prepended.
    pub fn new<I, S>(tokens: I) -> Result<Self, ParseError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Self {
            tokens: vec![BLANK_TOKEN.to_string()],
            index: HashMap::from([(BLANK_TOKEN.to_string(), BLANK)]),
        };
        for tok in tokens {
            let tok = tok.into();
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(ParseError::new("alphabet", 0, format!("invalid token {tok:?}")));
            }
            if RESERVED.contains(&tok.as_str()) {
                return Err(ParseError::new("alphabet", 0, format!("token {tok} is reserved")));
            }
            if out.index.contains_key(&tok) {
                return Err(ParseError::new("alphabet", 0, format!("duplicate token {tok}")));
            }
            out.index.insert(tok.clone(), out.tokens.len() as Symbol);
            out.tokens.push(tok);
        }
        Ok(out)
    }

    /// An alphabet of `n` labels named `0`, `1`, ...
    pub fn numbered(n: usize) -> Self {
        Self::new((0..n).map(|i| i.to_string())).expect("numbered tokens are valid")
    }

    /// Parses the alphabet file: one token per line, blank excluded.
    pub fn parse(text: &str, source_name: &str) -> Result<Self, ParseError> {
        let mut toks = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if line.trim() != line || line.contains(char::is_whitespace) {
                return Err(ParseError::new(
                    source_name,
                    i + 1,
                    format!("invalid token {line:?}"),
                ));
            }
            toks.push(line.to_string());
        }
        Self::new(toks).map_err(|e| ParseError {
            source_name: source_name.to_string(),
            ..e
        })
    }

    pub fn to_text(&self) -> String {
        self.labels().map(|s| format!("{}\n", self.token(s))).collect()
    }

    /// Number of symbols including the blank.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of non-blank labels.
    pub fn num_labels(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn token(&self, sym: Symbol) -> &str {
        &self.tokens[sym as usize]
    }

    pub fn symbol(&self, token: &str) -> Option<Symbol> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, sym: Symbol) -> bool {
        (sym as usize) < self.tokens.len()
    }

    /// Iterates over the non-blank symbols.
    pub fn labels(&self) -> impl Iterator<Item = Symbol> + '_ {
        1..self.tokens.len() as Symbol
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps a whitespace-separated token string to symbols.
    pub fn encode(&self, text: &str) -> Result<Vec<Symbol>, String> {
        text.split_whitespace()
            .map(|t| match self.symbol(t) {
                Some(BLANK) => Err(format!("blank token {t} is not a label")),
                Some(s) => Ok(s),
                None => Err(format!("unknown token {t}")),
            })
            .collect()
    }

    pub fn decode(&self, syms: &[Symbol]) -> String {
        syms.iter().map(|&s| self.token(s)).collect::<Vec<_>>().join(" ")
    }
}
