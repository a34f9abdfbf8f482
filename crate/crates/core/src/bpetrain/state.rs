//! Incremental trainer state over interned token ids.
//!
//! Pair counts, the queries holding each pair, and per-token occurrence counts
//! are kept up to date for both corpora, so a merge only revisits the queries
//! that contain the merged pair and the OOV test only inspects the three
//! tokens whose counts change.

use std::collections::{BTreeSet, HashMap, HashSet};

use rayon::prelude::*;

use super::{replacement_sites, scan_counted, AstTrees, WorkingCorpus, WorkingToken};
use crate::corpus::{merged_name, Corpus};
use crate::sqlast::AstTree;

type Id = u32;
type IdPair = (Id, Id);

#[derive(Default)]
struct Interner {
    texts: Vec<String>,
    ids: HashMap<String, Id>,
}

impl Interner {
    fn intern(&mut self, text: &str) -> Id {
        if let Some(&id) = self.ids.get(text) {
            return id;
        }
        let id = Id::try_from(self.texts.len()).expect("vocabulary exceeds u32");
        self.texts.push(text.to_owned());
        self.ids.insert(text.to_owned(), id);
        id
    }

    fn text(&self, id: Id) -> &str {
        &self.texts[id as usize]
    }
}

struct Seq {
    ids: Vec<Id>,
    spans: Vec<(usize, usize)>,
}

/// Counted pair occurrences of one query, aggregated per pair.
fn query_pairs(seq: &Seq, tree: Option<&AstTree>) -> HashMap<IdPair, usize> {
    let mut out = HashMap::new();
    scan_counted(&seq.ids, |i| seq.spans[i], tree, |i| {
        *out.entry((seq.ids[i], seq.ids[i + 1])).or_insert(0) += 1;
    });
    out
}

struct Side<'t> {
    seqs: Vec<Seq>,
    trees: Option<&'t [AstTree]>,
    pair_counts: HashMap<IdPair, usize>,
    holders: HashMap<IdPair, BTreeSet<usize>>,
    token_counts: Vec<usize>,
}

impl<'t> Side<'t> {
    fn new(corpus: &Corpus, trees: Option<&'t [AstTree]>, interner: &mut Interner) -> Self {
        let seqs: Vec<Seq> = corpus
            .queries
            .iter()
            .map(|q| Seq {
                ids: q.texts().map(|t| interner.intern(t)).collect(),
                spans: (0..q.len()).map(|i| (i, i)).collect(),
            })
            .collect();

        // per-query counts in parallel; sums are order independent
        let per_query: Vec<HashMap<IdPair, usize>> = seqs
            .par_iter()
            .enumerate()
            .map(|(qi, seq)| query_pairs(seq, trees.map(|t| &t[qi])))
            .collect();

        let mut side = Side {
            seqs,
            trees,
            pair_counts: HashMap::new(),
            holders: HashMap::new(),
            token_counts: Vec::new(),
        };
        for (qi, pairs) in per_query.into_iter().enumerate() {
            side.add_query_pairs(qi, &pairs);
        }
        for i in 0..side.seqs.len() {
            for k in 0..side.seqs[i].ids.len() {
                let id = side.seqs[i].ids[k];
                side.bump(id, 1);
            }
        }
        side
    }

    fn tree(&self, qi: usize) -> Option<&'t AstTree> {
        self.trees.map(|t| &t[qi])
    }

    fn count(&self, id: Id) -> usize {
        self.token_counts.get(id as usize).copied().unwrap_or(0)
    }

    fn bump(&mut self, id: Id, delta: isize) {
        let idx = id as usize;
        if idx >= self.token_counts.len() {
            self.token_counts.resize(idx + 1, 0);
        }
        let c = &mut self.token_counts[idx];
        *c = c.checked_add_signed(delta).expect("token count underflow");
    }

    fn add_query_pairs(&mut self, qi: usize, pairs: &HashMap<IdPair, usize>) {
        for (&pair, &n) in pairs {
            *self.pair_counts.entry(pair).or_insert(0) += n;
            self.holders.entry(pair).or_default().insert(qi);
        }
    }

    fn remove_query_pairs(&mut self, qi: usize, pairs: &HashMap<IdPair, usize>) {
        for (pair, &n) in pairs {
            let c = self.pair_counts.get_mut(pair).expect("tracked pair");
            *c -= n;
            if *c == 0 {
                self.pair_counts.remove(pair);
            }
            if let Some(h) = self.holders.get_mut(pair) {
                h.remove(&qi);
                if h.is_empty() {
                    self.holders.remove(pair);
                }
            }
        }
    }

    fn pair_count(&self, pair: IdPair) -> usize {
        self.pair_counts.get(&pair).copied().unwrap_or(0)
    }

    fn merge(&mut self, pair: IdPair, merged: Id) {
        let Some(holders) = self.holders.get(&pair).cloned() else {
            return;
        };
        for qi in holders {
            let tree = self.tree(qi);
            let seq = &self.seqs[qi];
            let sites = replacement_sites(&seq.ids, |i| seq.spans[i], tree, &pair.0, &pair.1);
            if sites.is_empty() {
                continue;
            }
            let before = query_pairs(seq, tree);
            self.remove_query_pairs(qi, &before);

            let seq = &mut self.seqs[qi];
            let mut ids = Vec::with_capacity(seq.ids.len() - sites.len());
            let mut spans = Vec::with_capacity(ids.capacity());
            let mut sites_iter = sites.iter().peekable();
            let mut i = 0;
            while i < seq.ids.len() {
                if sites_iter.peek() == Some(&&i) {
                    sites_iter.next();
                    ids.push(merged);
                    spans.push((seq.spans[i].0, seq.spans[i + 1].1));
                    i += 2;
                } else {
                    ids.push(seq.ids[i]);
                    spans.push(seq.spans[i]);
                    i += 1;
                }
            }
            seq.ids = ids;
            seq.spans = spans;

            let n = sites.len() as isize;
            self.bump(pair.0, -n);
            self.bump(pair.1, -n);
            self.bump(merged, n);

            let after = query_pairs(&self.seqs[qi], tree);
            self.add_query_pairs(qi, &after);
        }
    }

    fn into_working(self, interner: &Interner) -> WorkingCorpus {
        let queries = self
            .seqs
            .into_iter()
            .map(|s| {
                s.ids
                    .iter()
                    .zip(&s.spans)
                    .map(|(&id, &span)| WorkingToken {
                        text: interner.text(id).to_owned(),
                        span,
                    })
                    .collect()
            })
            .collect();
        WorkingCorpus { queries }
    }
}

pub(super) struct TrainerState<'t> {
    interner: Interner,
    train: Side<'t>,
    valid: Side<'t>,
    min_count: usize,
    oov: usize,
}

impl<'t> TrainerState<'t> {
    pub(super) fn new(
        train: &Corpus,
        valid: &Corpus,
        trees: Option<AstTrees<'t>>,
        min_count: usize,
    ) -> Self {
        let mut interner = Interner::default();
        let train = Side::new(train, trees.map(|t| t.train), &mut interner);
        let valid = Side::new(valid, trees.map(|t| t.valid), &mut interner);
        let mut st = TrainerState {
            interner,
            train,
            valid,
            min_count,
            oov: 0,
        };
        st.oov = (0..st.interner.texts.len() as Id)
            .filter(|&id| st.is_oov(st.valid.count(id), st.train.count(id)))
            .count();
        st
    }

    fn is_oov(&self, valid_count: usize, train_count: usize) -> bool {
        valid_count >= 1 && train_count < self.min_count
    }

    pub(super) fn oov_count(&self) -> usize {
        self.oov
    }

    pub(super) fn texts(&self, pair: IdPair) -> (String, String) {
        (
            self.interner.text(pair.0).to_owned(),
            self.interner.text(pair.1).to_owned(),
        )
    }

    /// Highest-count pair outside `blacklist`, ties to the smallest texts.
    pub(super) fn best_pair(&self, blacklist: &HashSet<IdPair>) -> Option<IdPair> {
        let mut best: Option<(IdPair, usize)> = None;
        for (&pair, &count) in &self.train.pair_counts {
            if blacklist.contains(&pair) {
                continue;
            }
            let better = match best {
                None => true,
                Some((bp, bc)) => {
                    count > bc
                        || (count == bc
                            && (self.interner.text(pair.0), self.interner.text(pair.1))
                                < (self.interner.text(bp.0), self.interner.text(bp.1)))
                }
            };
            if better {
                best = Some((pair, count));
            }
        }
        best.map(|(p, _)| p)
    }

    fn merged_id(&mut self, pair: IdPair) -> Id {
        let name = merged_name(self.interner.text(pair.0), self.interner.text(pair.1));
        self.interner.intern(&name)
    }

    /// OOV count after a hypothetical merge of `pair`. Only the counts of the
    /// two parts and the merged token change, so only they are re-tested.
    pub(super) fn oov_after_merge(&mut self, pair: IdPair) -> usize {
        let merged = self.merged_id(pair);
        let n_train = self.train.pair_count(pair);
        let n_valid = self.valid.pair_count(pair);

        let mut touched = vec![pair.0, pair.1, merged];
        touched.sort_unstable();
        touched.dedup();

        let shifted = |count: usize, id: Id, n: usize| -> usize {
            let removed = n * (usize::from(id == pair.0) + usize::from(id == pair.1));
            let added = if id == merged { n } else { 0 };
            count - removed + added
        };

        let mut oov = self.oov;
        for id in touched {
            let (t, v) = (self.train.count(id), self.valid.count(id));
            let was = self.is_oov(v, t);
            let now = self.is_oov(shifted(v, id, n_valid), shifted(t, id, n_train));
            match (was, now) {
                (false, true) => oov += 1,
                (true, false) => oov -= 1,
                _ => {}
            }
        }
        oov
    }

    pub(super) fn merge(&mut self, pair: IdPair) {
        let oov = self.oov_after_merge(pair);
        let merged = self.merged_id(pair);
        self.train.merge(pair, merged);
        self.valid.merge(pair, merged);
        self.oov = oov;
    }

    pub(super) fn into_corpora(self) -> (WorkingCorpus, WorkingCorpus) {
        let TrainerState {
            interner,
            train,
            valid,
            ..
        } = self;
        (train.into_working(&interner), valid.into_working(&interner))
    }
}
