//! Applying, inverting and persisting merge tables.
//!
//! Merged tokens are named `left U+241F right`, so an encoded corpus is
//! self-describing: [`decode`] only checks each merged name against the table
//! and expands it.
//!
//! The table file is line-oriented UTF-8:
//!
//! ```text
//! sqlbpe-merges v1 mode=plain r=20 m=100
//! SELECT<TAB>NAME
//! ...
//! ---
//! <base vocabulary, one token per line>
//! ```

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;

use crate::bpetrain::{MergeRule, Mode, DEFAULT_MIN_COUNT, DEFAULT_RETENTION_STEPS};
use crate::corpus::{merged_name, Corpus, QuerySeq, Token, SEPARATOR};
use crate::error::{Error, Result};

const MAGIC: &str = "sqlbpe-merges";
const VERSION: &str = "v1";
const VOCAB_MARKER: &str = "---";

/// Training parameters recorded in the table header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TableMeta {
    pub mode: Mode,
    pub retention_steps: usize,
    pub min_count: usize,
}

impl Default for TableMeta {
    fn default() -> Self {
        TableMeta {
            mode: Mode::Plain,
            retention_steps: DEFAULT_RETENTION_STEPS,
            min_count: DEFAULT_MIN_COUNT,
        }
    }
}

/// Ordered merge rules plus the base tokens seen at training time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergeTable {
    rules: Vec<MergeRule>,
    base_vocabulary: BTreeSet<String>,
    meta: TableMeta,
}

impl MergeTable {
    /// Validates the rules: every merged name is derived from its parts, no
    /// pair repeats, and any part carrying the separator was produced by an
    /// earlier rule.
    pub fn new(rules: Vec<MergeRule>, base_vocabulary: BTreeSet<String>, meta: TableMeta) -> Result<Self> {
        let mut produced: HashSet<&str> = HashSet::new();
        let mut pairs: HashSet<(&str, &str)> = HashSet::new();
        for (i, rule) in rules.iter().enumerate() {
            for part in [&rule.left, &rule.right] {
                Token::new(part.as_str()).map_err(|e| Error::InvalidTable(format!("rule {i}: {e}")))?;
                if part.contains(SEPARATOR) && !produced.contains(part.as_str()) {
                    return Err(Error::InvalidTable(format!(
                        "rule {i}: {part:?} is not produced by an earlier rule"
                    )));
                }
            }
            if rule.merged != merged_name(&rule.left, &rule.right) {
                return Err(Error::InvalidTable(format!("rule {i}: merged name mismatch")));
            }
            if rule.step_index != i {
                return Err(Error::InvalidTable(format!(
                    "rule {i}: step index {}",
                    rule.step_index
                )));
            }
            if !pairs.insert((&rule.left, &rule.right)) {
                return Err(Error::InvalidTable(format!("rule {i}: duplicate pair")));
            }
            produced.insert(&rule.merged);
        }
        for tok in &base_vocabulary {
            if tok.contains(SEPARATOR) {
                return Err(Error::InvalidTable(format!("base token {tok:?} contains the separator")));
            }
            Token::new(tok.as_str()).map_err(|e| Error::InvalidTable(e.to_string()))?;
        }
        Ok(MergeTable {
            rules,
            base_vocabulary,
            meta,
        })
    }

    pub fn empty() -> Self {
        MergeTable {
            rules: Vec::new(),
            base_vocabulary: BTreeSet::new(),
            meta: TableMeta::default(),
        }
    }

    /// Builds a table from bare pairs, numbering rules in order.
    pub fn from_pairs<L: AsRef<str>, R: AsRef<str>>(pairs: &[(L, R)]) -> Result<Self> {
        let rules = pairs
            .iter()
            .enumerate()
            .map(|(i, (l, r))| MergeRule::new(l.as_ref(), r.as_ref(), i))
            .collect();
        MergeTable::new(rules, BTreeSet::new(), TableMeta::default())
    }

    pub fn rules(&self) -> &[MergeRule] {
        &self.rules
    }

    pub fn base_vocabulary(&self) -> &BTreeSet<String> {
        &self.base_vocabulary
    }

    pub fn meta(&self) -> TableMeta {
        self.meta
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{MAGIC} {VERSION} mode={} r={} m={}\n",
            self.meta.mode, self.meta.retention_steps, self.meta.min_count
        );
        for rule in &self.rules {
            out.push_str(&rule.left);
            out.push('\t');
            out.push_str(&rule.right);
            out.push('\n');
        }
        out.push_str(VOCAB_MARKER);
        out.push('\n');
        for tok in &self.base_vocabulary {
            out.push_str(tok);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| malformed(1, "missing header"))?;
        let meta = parse_header(header)?;

        let mut rules = Vec::new();
        let mut base_vocabulary = BTreeSet::new();
        let mut in_vocab = false;
        for (n, line) in lines {
            if in_vocab {
                if line.is_empty() || line.chars().any(char::is_whitespace) {
                    return Err(malformed(n, "invalid base token"));
                }
                base_vocabulary.insert(line.to_owned());
                continue;
            }
            if line == VOCAB_MARKER {
                in_vocab = true;
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    rules.push(MergeRule::new(l, r, rules.len()));
                }
                _ => return Err(malformed(n, "expected <left>\\t<right>")),
            }
        }
        MergeTable::new(rules, base_vocabulary, meta)
    }
}

fn malformed(line: usize, message: &str) -> Error {
    Error::MalformedTable {
        line,
        message: message.to_owned(),
    }
}

fn parse_header(header: &str) -> Result<TableMeta> {
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.first() != Some(&MAGIC) {
        return Err(malformed(1, "not a merge table"));
    }
    match fields.get(1) {
        Some(&VERSION) => {}
        Some(v) => return Err(Error::Version((*v).to_owned())),
        None => return Err(malformed(1, "missing version")),
    }
    let mut meta = TableMeta::default();
    for field in &fields[2..] {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| malformed(1, "expected key=value"))?;
        match key {
            "mode" => meta.mode = value.parse().map_err(|e: String| malformed(1, &e))?,
            "r" => meta.retention_steps = value.parse().map_err(|_| malformed(1, "bad r"))?,
            "m" => meta.min_count = value.parse().map_err(|_| malformed(1, "bad m"))?,
            _ => return Err(malformed(1, "unknown header field")),
        }
    }
    Ok(meta)
}

pub fn save_table(table: &MergeTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, table.to_text()).map_err(|e| Error::io(path, e))
}

pub fn load_table(path: impl AsRef<Path>) -> Result<MergeTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MergeTable::from_text(&text)
}

/// Applies the table's rules in order to one token sequence.
///
/// Rather than sweeping every rule, this repeatedly applies the lowest-ranked
/// rule present that ranks after the last one applied. Rules in between have
/// no occurrences, so the result equals in-order application.
pub fn encode_tokens(tokens: &[Token], table: &MergeTable, ranks: &HashMap<(&str, &str), usize>) -> Vec<Token> {
    let mut seq: Vec<Token> = tokens.to_vec();
    let mut last: Option<usize> = None;
    loop {
        let next = seq
            .windows(2)
            .filter_map(|w| ranks.get(&(w[0].as_str(), w[1].as_str())).copied())
            .filter(|&r| last.is_none_or(|l| r > l))
            .min();
        let Some(rank) = next else { break };
        let rule = &table.rules[rank];
        let mut out = Vec::with_capacity(seq.len());
        let mut i = 0;
        while i < seq.len() {
            if i + 1 < seq.len() && seq[i].as_str() == rule.left && seq[i + 1].as_str() == rule.right {
                out.push(Token::new_unchecked(rule.merged.clone()));
                i += 2;
            } else {
                out.push(seq[i].clone());
                i += 1;
            }
        }
        seq = out;
        last = Some(rank);
    }
    seq
}

fn rank_map(table: &MergeTable) -> HashMap<(&str, &str), usize> {
    let mut ranks = HashMap::with_capacity(table.rules.len());
    for (i, rule) in table.rules.iter().enumerate() {
        ranks.entry((rule.left.as_str(), rule.right.as_str())).or_insert(i);
    }
    ranks
}

/// Encodes every query with the table. No parse trees are consulted.
pub fn encode(corpus: &Corpus, table: &MergeTable) -> Corpus {
    let ranks = rank_map(table);
    let queries = corpus
        .queries
        .par_iter()
        .map(|q| QuerySeq::new(encode_tokens(&q.tokens, table, &ranks), q.source_id.clone()))
        .collect();
    Corpus::new(queries, corpus.role)
}

/// Expands merged tokens back into base tokens.
pub fn decode(corpus: &Corpus, table: &MergeTable) -> Result<Corpus> {
    let mut parts: HashMap<&str, (&str, &str)> = HashMap::with_capacity(table.rules.len());
    for rule in &table.rules {
        parts
            .entry(rule.merged.as_str())
            .or_insert((rule.left.as_str(), rule.right.as_str()));
    }
    let queries = corpus
        .queries
        .par_iter()
        .map(|q| {
            let mut out = Vec::with_capacity(q.len());
            for tok in &q.tokens {
                expand(tok.as_str(), &parts, &mut out)?;
            }
            Ok(QuerySeq::new(out, q.source_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(queries, corpus.role))
}

fn expand(token: &str, parts: &HashMap<&str, (&str, &str)>, out: &mut Vec<Token>) -> Result<()> {
    let mut stack = vec![token];
    while let Some(t) = stack.pop() {
        if !t.contains(SEPARATOR) {
            out.push(Token::new_unchecked(t.to_owned()));
            continue;
        }
        let (l, r) = parts
            .get(t)
            .ok_or_else(|| Error::Underivable(token.to_owned()))?;
        stack.push(r);
        stack.push(l);
    }
    Ok(())
}
