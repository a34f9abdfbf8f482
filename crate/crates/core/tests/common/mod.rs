//! Test support: a naive reference trainer, a brute-force alignment
//! enumerator, and random corpus generators.
//!
//! Nothing here calls the library's counting, replacement or alignment code;
//! only parse trees (as plain data) and corpus types are shared.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use sqlbpe::corpus::{Corpus, Role};
use sqlbpe::sqlast::{AstNode, AstTree};

const SEP: char = '\u{241F}';

/// Every span equal to the union of a run of consecutive children of some node.
pub fn aligned_spans(tree: &AstTree) -> HashSet<(usize, usize)> {
    fn visit(node: &AstNode, out: &mut HashSet<(usize, usize)>) {
        let k = node.children.len();
        for a in 0..k {
            for b in a..k {
                out.insert((node.children[a].span.0, node.children[b].span.1));
            }
        }
        for c in &node.children {
            visit(c, out);
        }
    }
    let mut out = HashSet::new();
    visit(&tree.root, &mut out);
    for i in 0..tree.leaf_count {
        out.insert((i, i));
    }
    out
}

type Tok = (String, (usize, usize));
type Seq = Vec<Tok>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReferenceResult {
    pub accepted: Vec<(String, String)>,
    pub rejected: Vec<(String, String, usize)>,
    pub stop_reason: &'static str,
    pub train: Vec<Vec<String>>,
    pub valid: Vec<Vec<String>>,
    /// OOV count before and after every accepted merge.
    pub accepted_oov: Vec<(usize, usize)>,
}

fn to_seqs(c: &Corpus) -> Vec<Seq> {
    c.queries
        .iter()
        .map(|q| {
            q.texts()
                .enumerate()
                .map(|(i, t)| (t.to_owned(), (i, i)))
                .collect()
        })
        .collect()
}

fn eligible(spans: Option<&HashSet<(usize, usize)>>, a: &Tok, b: &Tok) -> bool {
    spans.is_none_or(|s| s.contains(&(a.1 .0, b.1 .1)))
}

fn replace_seq(seq: &Seq, pair: &(String, String), spans: Option<&HashSet<(usize, usize)>>) -> (Seq, usize) {
    let mut out = Vec::new();
    let mut n = 0;
    let mut i = 0;
    while i < seq.len() {
        if i + 1 < seq.len()
            && seq[i].0 == pair.0
            && seq[i + 1].0 == pair.1
            && eligible(spans, &seq[i], &seq[i + 1])
        {
            out.push((format!("{}{SEP}{}", pair.0, pair.1), (seq[i].1 .0, seq[i + 1].1 .1)));
            n += 1;
            i += 2;
        } else {
            out.push(seq[i].clone());
            i += 1;
        }
    }
    (out, n)
}

fn replace_all(c: &[Seq], pair: &(String, String), spans: Option<&[HashSet<(usize, usize)>]>) -> Vec<Seq> {
    c.iter()
        .enumerate()
        .map(|(i, s)| replace_seq(s, pair, spans.map(|sp| &sp[i])).0)
        .collect()
}

fn vocab(c: &[Seq], min: usize) -> BTreeSet<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in c.iter().flatten() {
        *counts.entry(&t.0).or_default() += 1;
    }
    counts
        .into_iter()
        .filter(|&(_, n)| n >= min)
        .map(|(t, _)| t.to_owned())
        .collect()
}

fn oov(train: &[Seq], valid: &[Seq], m: usize) -> usize {
    vocab(valid, 1).difference(&vocab(train, m)).count()
}

/// Full recount each step; count of a pair = replacements a scan would make.
fn counts(c: &[Seq], spans: Option<&[HashSet<(usize, usize)>]>) -> BTreeMap<(String, String), usize> {
    let mut types = BTreeSet::new();
    for (qi, s) in c.iter().enumerate() {
        for w in s.windows(2) {
            if eligible(spans.map(|sp| &sp[qi]), &w[0], &w[1]) {
                types.insert((w[0].0.clone(), w[1].0.clone()));
            }
        }
    }
    types
        .into_iter()
        .map(|p| {
            let n = c
                .iter()
                .enumerate()
                .map(|(qi, s)| replace_seq(s, &p, spans.map(|sp| &sp[qi])).1)
                .sum();
            (p, n)
        })
        .collect()
}

pub fn reference_train(
    train: &Corpus,
    valid: &Corpus,
    r: usize,
    m: usize,
    max_steps: Option<usize>,
    trees: Option<(&[AstTree], &[AstTree])>,
) -> ReferenceResult {
    let spans = trees.map(|(t, v)| {
        (
            t.iter().map(aligned_spans).collect::<Vec<_>>(),
            v.iter().map(aligned_spans).collect::<Vec<_>>(),
        )
    });
    let ts = spans.as_ref().map(|s| s.0.as_slice());
    let vs = spans.as_ref().map(|s| s.1.as_slice());

    let mut tr = to_seqs(train);
    let mut va = to_seqs(valid);
    let mut blacklist: Vec<(String, String)> = Vec::new();
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    let mut accepted_oov = Vec::new();
    let mut diff = 0;
    let mut step = 0;
    let stop_reason = loop {
        if diff == r {
            break "retention_exhausted";
        }
        let mut candidates: Vec<((String, String), usize)> = counts(&tr, ts)
            .into_iter()
            .filter(|(p, n)| *n > 0 && !blacklist.contains(p))
            .collect();
        if candidates.is_empty() {
            break "no_bigrams";
        }
        if max_steps == Some(accepted.len()) {
            break "max_steps";
        }
        candidates.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let maxpair = candidates[0].0.clone();
        let before = oov(&tr, &va, m);
        let tr2 = replace_all(&tr, &maxpair, ts);
        let va2 = replace_all(&va, &maxpair, vs);
        let after = oov(&tr2, &va2, m);
        if after > before {
            diff += 1;
            rejected.push((maxpair.0.clone(), maxpair.1.clone(), step));
            blacklist.push(maxpair);
        } else {
            accepted.push(maxpair);
            accepted_oov.push((before, after));
            tr = tr2;
            va = va2;
        }
        step += 1;
    };
    let texts = |c: &[Seq]| c.iter().map(|s| s.iter().map(|t| t.0.clone()).collect()).collect();
    ReferenceResult {
        accepted,
        rejected,
        stop_reason,
        train: texts(&tr),
        valid: texts(&va),
        accepted_oov,
    }
}

pub fn corpus_of(queries: &[Vec<String>], role: Role) -> Corpus {
    let lines: Vec<String> = queries.iter().map(|q| q.join(" ")).collect();
    Corpus::from_texts(&lines, role).unwrap()
}

/// Random token corpus over `alphabet` symbols `t0..`.
pub fn random_token_queries<R: Rng>(rng: &mut R, alphabet: usize, max_queries: usize, max_len: usize) -> Vec<Vec<String>> {
    let n = rng.gen_range(1..=max_queries);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            (0..len).map(|_| format!("t{}", rng.gen_range(0..alphabet))).collect()
        })
        .collect()
}

const COLUMNS: [&str; 5] = ["NAME", "STATE", "CITY", "POP", "T.AREA"];
const TABLES: [&str; 3] = ["CITY", "STATE", "RIVER"];
const WORDS: [&str; 4] = ["alabama", "texas", "new", "york"];
const NUMBERS: [&str; 3] = ["1", "150000", "state_name0"];

fn condition<R: Rng>(rng: &mut R, depth: usize, out: &mut Vec<String>) {
    let col = *COLUMNS.choose(rng).unwrap();
    match rng.gen_range(0..if depth > 0 { 5 } else { 3 }) {
        0 => out.extend([col, *["=", "<", ">"].choose(rng).unwrap(), *NUMBERS.choose(rng).unwrap()].map(String::from)),
        1 => {
            out.extend([col, "=", "\""].map(String::from));
            for _ in 0..rng.gen_range(1..=2) {
                out.push(WORDS.choose(rng).unwrap().to_string());
            }
            out.push("\"".into());
        }
        2 => out.extend([col, "BETWEEN", "1", "AND", "150000"].map(String::from)),
        3 => {
            out.extend([col, "IN", "(", "SELECT", *COLUMNS.choose(rng).unwrap(), "FROM", *TABLES.choose(rng).unwrap(), ")"].map(String::from));
        }
        _ => {
            out.push("(".into());
            condition(rng, depth - 1, out);
            out.push("OR".into());
            condition(rng, depth - 1, out);
            out.push(")".into());
        }
    }
}

/// A random query from a small SQL-like grammar, at most `max_tokens` long.
pub fn synthetic_sql<R: Rng>(rng: &mut R, max_tokens: usize) -> Vec<String> {
    loop {
        let mut q: Vec<String> = vec!["SELECT".into()];
        if rng.gen_bool(0.3) {
            q.push("DISTINCT".into());
        }
        match rng.gen_range(0..3) {
            0 => q.extend(["COUNT", "(", "*", ")"].map(String::from)),
            _ => {
                q.push(COLUMNS.choose(rng).unwrap().to_string());
                if rng.gen_bool(0.3) {
                    q.push(",".into());
                    q.push(COLUMNS.choose(rng).unwrap().to_string());
                }
            }
        }
        q.push("FROM".into());
        q.push(TABLES.choose(rng).unwrap().to_string());
        if rng.gen_bool(0.8) {
            q.push("WHERE".into());
            condition(rng, 1, &mut q);
            if rng.gen_bool(0.4) {
                q.push("AND".into());
                condition(rng, 1, &mut q);
            }
        }
        if rng.gen_bool(0.2) {
            q.extend(["ORDER", "BY", "POP"].map(String::from));
        }
        if rng.gen_bool(0.7) {
            q.push(";".into());
        }
        if q.len() <= max_tokens {
            return q;
        }
    }
}

/// A single-literal city query.
pub const ALABAMA_QUERY: &str = "SELECT NAME FROM CITY WHERE STATE = \" alabama \" ;";

/// A small corpus around that query where plain BPE would merge `= "`.
pub fn alabama_corpus() -> Vec<String> {
    let mut lines = vec![ALABAMA_QUERY.to_owned(); 4];
    lines.push("SELECT NAME FROM CITY WHERE STATE = \" texas \" ;".into());
    lines.push("SELECT POP FROM CITY WHERE STATE = \" new york \" ;".into());
    lines.push("SELECT NAME FROM RIVER WHERE STATE = \" alabama \" ;".into());
    lines
}
