//! Tokenized query corpora.
//!
//! A [`Corpus`] is an ordered list of [`QuerySeq`]s read either from the
//! plain-text interchange format (one query per line, tokens separated by
//! whitespace) or built from a JSON dataset release via [`build_split`].

mod dataset;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{
    build_split, load_dataset_json, parse_dataset_json, DatasetRecord, Sentence, SplitMode,
    SplitResolver, Variable,
};

/// Reserved separator used to name merged tokens (U+241F, SYMBOL FOR UNIT SEPARATOR).
pub const SEPARATOR: char = '\u{241F}';

/// One symbol of a query: an input token or a merged supertoken.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    /// Validates that `text` is non-empty and free of whitespace.
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.is_empty() {
            return Err(Error::InvalidToken {
                token: text,
                reason: "empty",
            });
        }
        if text.chars().any(char::is_whitespace) {
            return Err(Error::InvalidToken {
                token: text,
                reason: "contains whitespace",
            });
        }
        Ok(Token(text))
    }

    /// Name of the token produced by merging `left` and `right`.
    pub fn merged(left: &str, right: &str) -> Self {
        Token(merged_name(left, right))
    }

    pub(crate) fn new_unchecked(text: String) -> Self {
        Token(text)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// True when the token carries the reserved separator, i.e. was produced by a merge.
    pub fn is_merged(&self) -> bool {
        self.0.contains(SEPARATOR)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

pub(crate) fn merged_name(left: &str, right: &str) -> String {
    let mut s = String::with_capacity(left.len() + right.len() + SEPARATOR.len_utf8());
    s.push_str(left);
    s.push(SEPARATOR);
    s.push_str(right);
    s
}

/// A tokenized SQL query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySeq {
    pub tokens: Vec<Token>,
    pub source_id: String,
}

impl QuerySeq {
    pub fn new(tokens: Vec<Token>, source_id: impl Into<String>) -> Self {
        QuerySeq {
            tokens,
            source_id: source_id.into(),
        }
    }

    /// Builds a query from whitespace-separated text. Used mostly by tests.
    pub fn from_text(text: &str) -> Result<Self> {
        let tokens = text
            .split_whitespace()
            .map(Token::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(QuerySeq::new(tokens, ""))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> + '_ {
        self.tokens.iter().map(Token::as_str)
    }

    /// Tokens joined by single spaces.
    pub fn to_line(&self) -> String {
        let mut line = String::new();
        for (i, tok) in self.tokens.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(tok.as_str());
        }
        line
    }
}

/// Which partition of a dataset a corpus holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Valid,
    Test,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Train, Role::Valid, Role::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Valid => "valid",
            Role::Test => "test",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An ordered collection of queries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub queries: Vec<QuerySeq>,
    pub role: Role,
}

impl Corpus {
    pub fn new(queries: Vec<QuerySeq>, role: Role) -> Self {
        Corpus { queries, role }
    }

    pub fn empty(role: Role) -> Self {
        Corpus::new(Vec::new(), role)
    }

    /// Parses the plain-text corpus format held in memory.
    pub fn from_plaintext(text: &str, role: Role) -> Result<Self> {
        parse_lines(text, role).map_err(|line| Error::EmptyLine {
            path: "<input>".into(),
            line,
        })
    }

    /// Convenience constructor from one string per query.
    pub fn from_texts<S: AsRef<str>>(texts: &[S], role: Role) -> Result<Self> {
        let queries = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut q = QuerySeq::from_text(t.as_ref())?;
                q.source_id = format!("line {}", i + 1);
                Ok(q)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus::new(queries, role))
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.queries.iter().map(QuerySeq::len).sum()
    }

    /// Canonical plain-text form: one query per line, single spaces, LF endings.
    pub fn to_plaintext(&self) -> String {
        let mut out = String::new();
        for q in &self.queries {
            out.push_str(&q.to_line());
            out.push('\n');
        }
        out
    }

    pub fn save_plaintext(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_plaintext()).map_err(|e| Error::io(path, e))
    }

    /// Fails if any token carries the reserved separator. Training inputs must be base tokens.
    pub fn check_base_tokens(&self) -> Result<()> {
        for (i, q) in self.queries.iter().enumerate() {
            if let Some(tok) = q.tokens.iter().find(|t| t.is_merged()) {
                return Err(Error::ReservedSeparator {
                    query: i,
                    token: tok.as_str().to_owned(),
                });
            }
        }
        Ok(())
    }
}

/// Reads a plain-text corpus: one query per line, blank lines skipped.
pub fn load_plaintext(path: impl AsRef<Path>, role: Role) -> Result<Corpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lines(&text, role).map_err(|line| Error::EmptyLine {
        path: path.to_owned(),
        line,
    })
}

// A line is blank when it holds only ASCII whitespace; tokens are split on any
// Unicode whitespace, so a line of e.g. U+3000 is non-blank yet tokenless.
fn parse_lines(text: &str, role: Role) -> std::result::Result<Corpus, usize> {
    let mut queries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.bytes().all(|b| b.is_ascii_whitespace()) {
            continue;
        }
        let tokens: Vec<Token> = line
            .split_whitespace()
            .map(|t| Token::new_unchecked(t.to_owned()))
            .collect();
        if tokens.is_empty() {
            return Err(i + 1);
        }
        queries.push(QuerySeq::new(tokens, format!("line {}", i + 1)));
    }
    Ok(Corpus::new(queries, role))
}

/// Occurrence count of every token text in the corpus.
pub fn token_counts(corpus: &Corpus) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for tok in corpus.queries.iter().flat_map(|q| q.tokens.iter()) {
        *counts.entry(tok.as_str()).or_insert(0) += 1;
    }
    counts
}

/// Token texts occurring at least `min_count` times across the corpus.
pub fn vocabulary(corpus: &Corpus, min_count: usize) -> BTreeSet<String> {
    token_counts(corpus)
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(t, _)| t.to_owned())
        .collect()
}
