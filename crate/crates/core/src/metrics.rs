//! Corpus statistics: length reduction, OOV sets and query patterns.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::corpus::{vocabulary, Corpus, QuerySeq, SEPARATOR};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LengthStats {
    pub mean_before: f64,
    pub mean_after: f64,
    pub reduction_fraction: f64,
}

/// Mean query length before and after encoding. Corpora must be index-aligned.
pub fn length_stats(before: &Corpus, after: &Corpus) -> Result<LengthStats> {
    if before.len() != after.len() {
        return Err(Error::LengthMismatch {
            before: before.len(),
            after: after.len(),
        });
    }
    let mean = |c: &Corpus| {
        if c.is_empty() {
            0.0
        } else {
            c.total_tokens() as f64 / c.len() as f64
        }
    };
    let (mean_before, mean_after) = (mean(before), mean(after));
    let reduction_fraction = if mean_before > 0.0 {
        1.0 - mean_after / mean_before
    } else {
        0.0
    };
    Ok(LengthStats {
        mean_before,
        mean_after,
        reduction_fraction,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OovReport {
    pub oov_tokens: BTreeSet<String>,
    pub count: usize,
}

/// Validation tokens occurring fewer than `min_count` times in training.
pub fn oov_report(train: &Corpus, valid: &Corpus, min_count: usize) -> OovReport {
    let known = vocabulary(train, min_count);
    let oov_tokens: BTreeSet<String> = vocabulary(valid, 1)
        .into_iter()
        .filter(|t| !known.contains(t))
        .collect();
    OovReport {
        count: oov_tokens.len(),
        oov_tokens,
    }
}

/// Keywords, operators and punctuation kept verbatim by [`pattern_of`].
pub const PATTERN_KEYWORDS: &[&str] = &[
    "SELECT", "DISTINCT", "FROM", "WHERE", "AND", "OR", "NOT", "AS", "GROUP", "BY", "ORDER",
    "HAVING", "LIMIT", "UNION", "INTERSECT", "EXCEPT", "IN", "LIKE", "BETWEEN", "IS", "NULL",
    "EXISTS", "ALL", "ANY", "JOIN", "INNER", "LEFT", "RIGHT", "OUTER", "ON", "ASC", "DESC",
    "COUNT", "MAX", "MIN", "SUM", "AVG", "(", ")", ",", ";", "=", "<", ">", "<=", ">=", "<>", "!=",
    "*", "+", "-", "/", ".",
];

pub fn default_keywords() -> BTreeSet<String> {
    PATTERN_KEYWORDS.iter().map(|s| (*s).to_owned()).collect()
}

const VALUE: &str = "VALUE";
const IDENT: &str = "IDENT";

fn is_number(t: &str) -> bool {
    t.parse::<f64>().is_ok() && t.chars().any(|c| c.is_ascii_digit())
}

// Anonymization placeholders look like `city_name0` or `department1`.
fn is_placeholder(t: &str) -> bool {
    let stem = t.trim_end_matches(|c: char| c.is_ascii_digit());
    stem.len() < t.len()
        && stem.starts_with(|c: char| c.is_ascii_lowercase())
        && stem.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

/// Abstracts a query to its pattern: keywords stay, quoted literals, numbers
/// and placeholders become `VALUE`, everything else becomes `IDENT`.
///
/// A whole `" ... "` group collapses to one `VALUE`. Merged tokens are split
/// back into their parts first.
pub fn pattern_of(query: &QuerySeq, keywords: &BTreeSet<String>) -> String {
    let leaves: Vec<&str> = query
        .texts()
        .flat_map(|t| t.split(SEPARATOR))
        .collect();
    let mut out: Vec<&str> = Vec::with_capacity(leaves.len());
    let mut i = 0;
    while i < leaves.len() {
        let t = leaves[i];
        if t == "\"" {
            if let Some(close) = leaves[i + 1..].iter().position(|&x| x == "\"") {
                out.push(VALUE);
                i += close + 2;
                continue;
            }
            out.push(t);
        } else if keywords.contains(t) || keywords.contains(&t.to_ascii_uppercase()) {
            out.push(t);
        } else if is_number(t) || is_placeholder(t) {
            out.push(VALUE);
        } else {
            out.push(IDENT);
        }
        i += 1;
    }
    out.join(" ")
}

/// Fraction of `test` queries whose pattern never occurs in `train`.
/// An empty test corpus yields 0.
pub fn unseen_pattern_rate(train: &Corpus, test: &Corpus) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let keywords = default_keywords();
    let seen: BTreeSet<String> = train.queries.iter().map(|q| pattern_of(q, &keywords)).collect();
    let unseen = test
        .queries
        .iter()
        .filter(|q| !seen.contains(&pattern_of(q, &keywords)))
        .count();
    unseen as f64 / test.len() as f64
}
