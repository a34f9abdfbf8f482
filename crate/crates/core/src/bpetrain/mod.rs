//! Merge learning with a validation-driven stopping criterion.
//!
//! Training repeatedly picks the most frequent adjacent token pair in the
//! training corpus. A candidate is rejected when merging it would raise the
//! number of validation tokens that occur fewer than `m` times in the training
//! corpus; training stops after `r` rejections, when no candidate pair is
//! left, or at the `max_steps` cap. Rejected pairs are never reconsidered.
//!
//! In [`Mode::Ast`] a pair occurrence only counts (and is only replaced) when
//! the two tokens together cover a run of consecutive siblings in the query's
//! parse tree.
//!
//! The free functions [`pair_counts`], [`pair_with_max_count`],
//! [`replace_pair`] and [`adds_new_oov`] are the literal single-step
//! operations. [`train`] computes the same result incrementally.

mod state;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::{MergeTable, TableMeta};
use crate::corpus::{merged_name, Corpus, QuerySeq, Role, Token};
use crate::error::{Error, Result};
use crate::sqlast::AstTree;

pub type Pair = (String, String);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Plain,
    Ast,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Plain => "plain",
            Mode::Ast => "ast",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Mode::Plain),
            "ast" => Ok(Mode::Ast),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

pub const DEFAULT_RETENTION_STEPS: usize = 20;
pub const DEFAULT_MIN_COUNT: usize = 100;
/// Minimum count that worked better on the Advising dataset.
pub const ADVISING_MIN_COUNT: usize = 300;
pub const DEFAULT_MAX_STEPS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainerConfig {
    /// Rejected candidates tolerated before stopping (`r`).
    pub retention_steps: usize,
    /// Training-set occurrences every validation token must keep (`m`).
    pub min_count: usize,
    pub mode: Mode,
    /// Cap on accepted merges; `None` means unbounded.
    pub max_steps: Option<usize>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            retention_steps: DEFAULT_RETENTION_STEPS,
            min_count: DEFAULT_MIN_COUNT,
            mode: Mode::Plain,
            max_steps: Some(DEFAULT_MAX_STEPS),
        }
    }
}

/// One accepted merge: `left right` becomes `merged`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeRule {
    pub left: String,
    pub right: String,
    pub merged: String,
    pub step_index: usize,
}

impl MergeRule {
    pub fn new(left: impl Into<String>, right: impl Into<String>, step_index: usize) -> Self {
        let (left, right) = (left.into(), right.into());
        MergeRule {
            merged: merged_name(&left, &right),
            left,
            right,
            step_index,
        }
    }
}

/// A candidate rejected because it would have introduced new OOV tokens.
/// `step` counts evaluated candidates, accepted and rejected alike.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedPair {
    pub left: String,
    pub right: String,
    pub step: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    RetentionExhausted,
    NoBigrams,
    MaxSteps,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainReport {
    pub accepted: Vec<MergeRule>,
    pub rejected: Vec<RejectedPair>,
    pub stop_reason: StopReason,
}

/// A token during training, with the inclusive interval of original tokens it covers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingToken {
    pub text: String,
    pub span: (usize, usize),
}

/// Corpus representation used while training: tokens carry their leaf spans.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WorkingCorpus {
    pub queries: Vec<Vec<WorkingToken>>,
}

impl WorkingCorpus {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let queries = corpus
            .queries
            .iter()
            .map(|q| {
                q.texts()
                    .enumerate()
                    .map(|(i, t)| WorkingToken {
                        text: t.to_owned(),
                        span: (i, i),
                    })
                    .collect()
            })
            .collect();
        WorkingCorpus { queries }
    }

    pub fn to_corpus(&self, role: Role) -> Corpus {
        let queries = self
            .queries
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let tokens = q
                    .iter()
                    .map(|t| Token::new_unchecked(t.text.clone()))
                    .collect();
                QuerySeq::new(tokens, format!("line {}", i + 1))
            })
            .collect();
        Corpus::new(queries, role)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Parse trees for both corpora, index-aligned with their queries.
#[derive(Clone, Copy, Debug)]
pub struct AstTrees<'a> {
    pub train: &'a [AstTree],
    pub valid: &'a [AstTree],
}

/// Positions `i` at which `(tokens[i], tokens[i+1])` is a counted occurrence of
/// its pair: eligible (aligned, when a tree is given) and not overlapping the
/// previously counted occurrence of the same pair. `emit` receives each `i`.
pub(crate) fn scan_counted<T: PartialEq>(
    tokens: &[T],
    spans: impl Fn(usize) -> (usize, usize),
    tree: Option<&AstTree>,
    mut emit: impl FnMut(usize),
) {
    let mut prev_counted = false;
    for i in 0..tokens.len().saturating_sub(1) {
        let eligible = tree.is_none_or(|t| t.is_aligned(spans(i).0, spans(i + 1).1));
        let overlaps = prev_counted && i > 0 && tokens[i - 1] == tokens[i] && tokens[i] == tokens[i + 1];
        prev_counted = eligible && !overlaps;
        if prev_counted {
            emit(i);
        }
    }
}

/// Left-to-right positions where `(left, right)` would be replaced.
pub(crate) fn replacement_sites<T: PartialEq>(
    tokens: &[T],
    spans: impl Fn(usize) -> (usize, usize),
    tree: Option<&AstTree>,
    left: &T,
    right: &T,
) -> Vec<usize> {
    let mut sites = Vec::new();
    let mut i = 0;
    while i + 1 < tokens.len() {
        if tokens[i] == *left
            && tokens[i + 1] == *right
            && tree.is_none_or(|t| t.is_aligned(spans(i).0, spans(i + 1).1))
        {
            sites.push(i);
            i += 2;
        } else {
            i += 1;
        }
    }
    sites
}

fn trees_for(trees: Option<&[AstTree]>, i: usize) -> Option<&AstTree> {
    trees.map(|t| &t[i])
}

/// Counts of every adjacent pair, counting non-overlapping occurrences left to
/// right. With `trees`, only tree-aligned occurrences count.
pub fn pair_counts(corpus: &WorkingCorpus, trees: Option<&[AstTree]>) -> BTreeMap<Pair, usize> {
    let mut counts = BTreeMap::new();
    for (qi, q) in corpus.queries.iter().enumerate() {
        let texts: Vec<&str> = q.iter().map(|t| t.text.as_str()).collect();
        scan_counted(&texts, |i| q[i].span, trees_for(trees, qi), |i| {
            *counts
                .entry((texts[i].to_owned(), texts[i + 1].to_owned()))
                .or_insert(0) += 1;
        });
    }
    counts
}

/// The most frequent non-blacklisted pair; ties go to the lexicographically
/// smallest `(left, right)`.
pub fn pair_with_max_count(counts: &BTreeMap<Pair, usize>, blacklist: &BTreeSet<Pair>) -> Option<Pair> {
    // BTreeMap iterates in lexicographic order, so the first maximum wins.
    let mut best: Option<(&Pair, usize)> = None;
    for (pair, &count) in counts {
        if count == 0 || blacklist.contains(pair) {
            continue;
        }
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((pair, count));
        }
    }
    best.map(|(p, _)| p.clone())
}

fn replace_in(corpus: &mut WorkingCorpus, pair: &Pair, merged: &str, trees: Option<&[AstTree]>) {
    for (qi, q) in corpus.queries.iter_mut().enumerate() {
        let texts: Vec<&str> = q.iter().map(|t| t.text.as_str()).collect();
        let sites = replacement_sites(
            &texts,
            |i| q[i].span,
            trees_for(trees, qi),
            &pair.0.as_str(),
            &pair.1.as_str(),
        );
        if sites.is_empty() {
            continue;
        }
        let mut out = Vec::with_capacity(q.len() - sites.len());
        let mut sites = sites.into_iter().peekable();
        let mut i = 0;
        while i < q.len() {
            if sites.peek() == Some(&i) {
                sites.next();
                out.push(WorkingToken {
                    text: merged.to_owned(),
                    span: (q[i].span.0, q[i + 1].span.1),
                });
                i += 2;
            } else {
                out.push(q[i].clone());
                i += 1;
            }
        }
        *q = out;
    }
}

/// Replaces occurrences of `pair` by `merged` in both corpora.
pub fn replace_pair(
    train: &mut WorkingCorpus,
    valid: &mut WorkingCorpus,
    pair: &Pair,
    merged: &str,
    trees: Option<AstTrees<'_>>,
) {
    replace_in(train, pair, merged, trees.map(|t| t.train));
    replace_in(valid, pair, merged, trees.map(|t| t.valid));
}

fn working_counts(corpus: &WorkingCorpus) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for t in corpus.queries.iter().flatten() {
        *counts.entry(t.text.as_str()).or_insert(0) += 1;
    }
    counts
}

/// `|vocabulary(valid, 1) \ vocabulary(train, m)|` on working corpora.
pub fn oov_count(train: &WorkingCorpus, valid: &WorkingCorpus, min_count: usize) -> usize {
    let train_counts = working_counts(train);
    working_counts(valid)
        .keys()
        .filter(|t| train_counts.get(*t).copied().unwrap_or(0) < min_count)
        .count()
}

/// Whether merging `pair` would increase the OOV count of `valid` against `train`.
pub fn adds_new_oov(
    train: &WorkingCorpus,
    valid: &WorkingCorpus,
    pair: &Pair,
    min_count: usize,
    trees: Option<AstTrees<'_>>,
) -> bool {
    let before = oov_count(train, valid, min_count);
    let (mut t, mut v) = (train.clone(), valid.clone());
    replace_pair(&mut t, &mut v, pair, &merged_name(&pair.0, &pair.1), trees);
    oov_count(&t, &v, min_count) > before
}

/// Emitted by [`train_observed`] after every evaluated candidate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepEvent {
    pub step: usize,
    pub left: String,
    pub right: String,
    pub accepted: bool,
    /// OOV count before the candidate was evaluated.
    pub oov_before: usize,
    /// OOV count the merge would produce (the actual count afterwards when accepted).
    pub oov_after: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub table: MergeTable,
    pub report: TrainReport,
    /// Encoded training corpus with leaf spans.
    pub train: WorkingCorpus,
    /// Encoded validation corpus with leaf spans.
    pub valid: WorkingCorpus,
}

pub fn train(
    train: &Corpus,
    valid: &Corpus,
    config: &TrainerConfig,
    trees: Option<AstTrees<'_>>,
) -> Result<TrainOutput> {
    train_observed(train, valid, config, trees, |_| {})
}

/// [`train`] with a callback invoked after every evaluated candidate.
pub fn train_observed(
    train: &Corpus,
    valid: &Corpus,
    config: &TrainerConfig,
    trees: Option<AstTrees<'_>>,
    mut observer: impl FnMut(&StepEvent),
) -> Result<TrainOutput> {
    train.check_base_tokens()?;
    valid.check_base_tokens()?;
    let trees = match config.mode {
        Mode::Plain => None,
        Mode::Ast => {
            let t = trees.ok_or(Error::MissingTrees("train"))?;
            check_trees(train, t.train, "train")?;
            check_trees(valid, t.valid, "valid")?;
            Some(t)
        }
    };

    let mut st = state::TrainerState::new(train, valid, trees, config.min_count);
    let mut blacklist = std::collections::HashSet::new();
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    let mut step = 0;

    let stop_reason = loop {
        if rejected.len() >= config.retention_steps {
            break StopReason::RetentionExhausted;
        }
        let Some(pair) = st.best_pair(&blacklist) else {
            break StopReason::NoBigrams;
        };
        if config.max_steps.is_some_and(|k| accepted.len() >= k) {
            break StopReason::MaxSteps;
        }
        let oov_before = st.oov_count();
        let oov_after = st.oov_after_merge(pair);
        let (left, right) = st.texts(pair);
        let accept = oov_after <= oov_before;
        if accept {
            st.merge(pair);
            accepted.push(MergeRule::new(left.clone(), right.clone(), accepted.len()));
        } else {
            blacklist.insert(pair);
            rejected.push(RejectedPair {
                left: left.clone(),
                right: right.clone(),
                step,
            });
        }
        observer(&StepEvent {
            step,
            left,
            right,
            accepted: accept,
            oov_before,
            oov_after,
        });
        step += 1;
    };

    let (train_out, valid_out) = st.into_corpora();
    let mut base_vocabulary: BTreeSet<String> = crate::corpus::vocabulary(train, 1);
    base_vocabulary.extend(crate::corpus::vocabulary(valid, 1));
    let table = MergeTable::new(
        accepted.clone(),
        base_vocabulary,
        TableMeta {
            mode: config.mode,
            retention_steps: config.retention_steps,
            min_count: config.min_count,
        },
    )?;
    Ok(TrainOutput {
        table,
        report: TrainReport {
            accepted,
            rejected,
            stop_reason,
        },
        train: train_out,
        valid: valid_out,
    })
}

fn check_trees(corpus: &Corpus, trees: &[AstTree], name: &'static str) -> Result<()> {
    if trees.len() != corpus.len() {
        return Err(Error::TreeCountMismatch {
            corpus: name,
            queries: corpus.len(),
            trees: trees.len(),
        });
    }
    for (i, (q, t)) in corpus.queries.iter().zip(trees).enumerate() {
        if q.len() != t.leaf_count {
            return Err(Error::TreeShapeMismatch {
                query: i,
                leaves: t.leaf_count,
                tokens: q.len(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sqlast::parse;

    fn wc(texts: &[&str]) -> WorkingCorpus {
        WorkingCorpus::from_corpus(&Corpus::from_texts(texts, Role::Train).unwrap())
    }

    fn p(l: &str, r: &str) -> Pair {
        (l.to_owned(), r.to_owned())
    }

    fn lines(c: &WorkingCorpus) -> Vec<String> {
        c.to_corpus(Role::Train)
            .queries
            .iter()
            .map(|q| q.to_line().replace('\u{241F}', "+"))
            .collect()
    }

    fn cfg(r: usize, m: usize) -> TrainerConfig {
        TrainerConfig {
            retention_steps: r,
            min_count: m,
            ..TrainerConfig::default()
        }
    }

    #[test]
    fn defaults() {
        let c = TrainerConfig::default();
        assert_eq!((c.retention_steps, c.min_count, c.mode), (20, 100, Mode::Plain));
        assert_eq!(c.max_steps, Some(10_000));
    }

    #[test]
    fn pair_counts_plain() {
        let counts = pair_counts(&wc(&["a b c", "a b d"]), None);
        let expected: BTreeMap<Pair, usize> =
            [(p("a", "b"), 2), (p("b", "c"), 1), (p("b", "d"), 1)].into_iter().collect();
        assert_eq!(counts, expected);
        let counts = pair_counts(&wc(&["a a a"]), None);
        assert_eq!(counts, [(p("a", "a"), 1)].into_iter().collect());
        let counts = pair_counts(&wc(&["a a a a"]), None);
        assert_eq!(counts[&p("a", "a")], 2);
    }

    #[test]
    fn pair_counts_ast_where_clause() {
        let corpus = Corpus::from_texts(&["WHERE STATE = \" alabama \" ;"], Role::Train).unwrap();
        let trees = vec![parse(&corpus.queries[0].tokens).unwrap()];
        let counts = pair_counts(&WorkingCorpus::from_corpus(&corpus), Some(&trees));
        assert_eq!(counts.get(&p("=", "\"")), None);
        assert_eq!(counts[&p("\"", "alabama")], 1);
        assert_eq!(counts[&p("alabama", "\"")], 1);
        assert_eq!(counts.get(&p("\"", ";")), None);
    }

    #[test]
    fn max_pair_tie_break_and_blacklist() {
        let counts: BTreeMap<Pair, usize> = [(p("c", "d"), 2), (p("a", "b"), 2)].into_iter().collect();
        assert_eq!(pair_with_max_count(&counts, &BTreeSet::new()), Some(p("a", "b")));
        assert_eq!(pair_with_max_count(&BTreeMap::new(), &BTreeSet::new()), None);
        let one: BTreeMap<Pair, usize> = [(p("a", "b"), 2)].into_iter().collect();
        let bl: BTreeSet<Pair> = [p("a", "b")].into_iter().collect();
        assert_eq!(pair_with_max_count(&one, &bl), None);
    }

    #[test]
    fn replace_pair_scans_left_to_right() {
        let mut t = wc(&["a b a b c"]);
        let mut v = wc(&["a a a"]);
        replace_pair(&mut t, &mut v, &p("a", "b"), "Z", None);
        assert_eq!(lines(&t), vec!["Z Z c"]);
        assert_eq!(t.queries[0][1].span, (2, 3));
        replace_pair(&mut t, &mut v, &p("a", "a"), "Z", None);
        assert_eq!(lines(&v), vec!["Z a"]);
    }

    #[test]
    fn replace_pair_successive_merges() {
        let mut t = wc(&["SELECT NAME FROM CITY WHERE STATE"]);
        let mut v = WorkingCorpus::default();
        for (l, r) in [("SELECT", "NAME"), ("WHERE", "STATE"), ("CITY", "WHERE\u{241F}STATE")] {
            let merged = merged_name(l, r);
            replace_pair(&mut t, &mut v, &p(l, r), &merged, None);
        }
        assert_eq!(lines(&t), vec!["SELECT+NAME FROM CITY+WHERE+STATE"]);
    }

    #[test]
    fn adds_new_oov_examples() {
        assert!(adds_new_oov(&wc(&["a b", "a b"]), &wc(&["a c"]), &p("a", "b"), 1, None));
        assert!(!adds_new_oov(&wc(&["a b", "a b", "a c"]), &wc(&["a c"]), &p("a", "b"), 1, None));
        assert!(!adds_new_oov(&wc(&["a b", "a b"]), &WorkingCorpus::default(), &p("a", "b"), 1, None));
    }

    #[test]
    fn train_zero_retention_stops_immediately() {
        let c = Corpus::from_texts(&["a b", "a b"], Role::Train).unwrap();
        let out = train(&c, &c, &cfg(0, 1), None).unwrap();
        assert!(out.report.accepted.is_empty());
        assert!(out.report.rejected.is_empty());
        assert_eq!(out.report.stop_reason, StopReason::RetentionExhausted);
    }

    #[test]
    fn train_accepts_until_no_bigrams() {
        let c = Corpus::from_texts(&["a b", "a b"], Role::Train).unwrap();
        let out = train(&c, &c, &cfg(1, 1), None).unwrap();
        assert_eq!(out.report.accepted, vec![MergeRule::new("a", "b", 0)]);
        assert!(out.report.rejected.is_empty());
        assert_eq!(out.report.stop_reason, StopReason::NoBigrams);
        assert_eq!(lines(&out.train), vec!["a+b", "a+b"]);
    }

    #[test]
    fn train_rejects_oov_merge() {
        let t = Corpus::from_texts(&["a b", "a b"], Role::Train).unwrap();
        let v = Corpus::from_texts(&["a c"], Role::Valid).unwrap();
        let out = train(&t, &v, &cfg(1, 1), None).unwrap();
        assert!(out.report.accepted.is_empty());
        assert_eq!(
            out.report.rejected,
            vec![RejectedPair {
                left: "a".into(),
                right: "b".into(),
                step: 0
            }]
        );
        assert_eq!(out.report.stop_reason, StopReason::RetentionExhausted);
    }

    #[test]
    fn max_steps_caps_accepted_merges() {
        let c = Corpus::from_texts(&["a b c d e f"], Role::Train).unwrap();
        let config = TrainerConfig {
            max_steps: Some(2),
            ..cfg(5, 1)
        };
        let out = train(&c, &c, &config, None).unwrap();
        assert_eq!(out.report.accepted.len(), 2);
        assert_eq!(out.report.stop_reason, StopReason::MaxSteps);
    }

    #[test]
    fn ast_mode_requires_matching_trees() {
        let c = Corpus::from_texts(&["a b"], Role::Train).unwrap();
        let config = TrainerConfig {
            mode: Mode::Ast,
            ..cfg(1, 1)
        };
        assert!(matches!(train(&c, &c, &config, None), Err(Error::MissingTrees(_))));
        let trees = vec![parse(&["a", "b", "c"]).unwrap()];
        let err = train(&c, &c, &config, Some(AstTrees { train: &trees, valid: &trees })).unwrap_err();
        assert!(matches!(err, Error::TreeShapeMismatch { .. }));
    }

    #[test]
    fn separator_in_input_is_rejected() {
        let c = Corpus::from_texts(&["a\u{241F}b c"], Role::Train).unwrap();
        assert!(matches!(
            train(&c, &c, &cfg(1, 1), None),
            Err(Error::ReservedSeparator { .. })
        ));
    }
}
