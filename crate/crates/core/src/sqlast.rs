//! SQL tokenization and a lightweight sibling-group parse tree.
//!
//! The grammar is deliberately small. It recognizes clauses, parenthesized
//! groups, double-quoted literals and comparisons, which is all the structure
//! AST-aligned merging needs. Anything else stays a leaf of its enclosing node,
//! so [`parse`] only fails on unbalanced parentheses.
//!
//! ```
//! use sqlbpe::sqlast::{parse, tokenize_sql};
//!
//! let tokens = tokenize_sql(r#"WHERE STATE = "alabama" ;"#).unwrap();
//! let tree = parse(&tokens).unwrap();
//! assert_eq!(
//!     tree.to_sexpr(&tokens),
//!     r#"(stmt (clause WHERE (cmp STATE = (lit " alabama ")) ;))"#
//! );
//! assert!(tree.is_aligned(3, 4)); // " alabama
//! assert!(!tree.is_aligned(2, 3)); // = "
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Token, SEPARATOR};
use crate::error::{Error, Result};

/// Top-level keywords that open a clause.
pub const CLAUSE_KEYWORDS: [&str; 10] = [
    "SELECT", "FROM", "WHERE", "GROUP", "HAVING", "ORDER", "LIMIT", "UNION", "INTERSECT", "EXCEPT",
];

const COMPARISON_OPERATORS: [&str; 10] = ["=", "<", ">", "<=", ">=", "<>", "!=", "LIKE", "IN", "IS"];

// Leaves that can never be a comparison operand.
const NON_OPERANDS: [&str; 11] = ["AND", "OR", "NOT", ",", ";", "(", ")", "\"", "BY", "AS", "BETWEEN"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Leaf,
    ParenGroup,
    QuotedLiteral,
    Comparison,
    Clause,
    Statement,
}

impl NodeKind {
    fn sexpr_name(self) -> &'static str {
        match self {
            NodeKind::Leaf => "leaf",
            NodeKind::ParenGroup => "paren",
            NodeKind::QuotedLiteral => "lit",
            NodeKind::Comparison => "cmp",
            NodeKind::Clause => "clause",
            NodeKind::Statement => "stmt",
        }
    }
}

/// A node covering the inclusive leaf interval `span`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AstNode {
    pub span: (usize, usize),
    pub kind: NodeKind,
    pub children: Vec<AstNode>,
}

impl AstNode {
    fn leaf(i: usize) -> Self {
        AstNode {
            span: (i, i),
            kind: NodeKind::Leaf,
            children: Vec::new(),
        }
    }

    fn group(kind: NodeKind, children: Vec<AstNode>) -> Self {
        let span = (children[0].span.0, children[children.len() - 1].span.1);
        AstNode {
            span,
            kind,
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Pre-order traversal of this node and all its descendants.
    pub fn walk(&self) -> Vec<&AstNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            out.push(node);
            stack.extend(node.children.iter().rev());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AstTree {
    pub root: AstNode,
    pub leaf_count: usize,
}

impl AstTree {
    /// True iff `start..=end` is the union of a run of consecutive children of
    /// some node. Out-of-range spans are not aligned.
    pub fn is_aligned(&self, start: usize, end: usize) -> bool {
        if start > end || end >= self.leaf_count {
            return false;
        }
        if start == end {
            return true;
        }
        let mut node = &self.root;
        loop {
            if node.is_leaf() {
                return node.span == (start, end);
            }
            let i = child_containing(node, start);
            let j = child_containing(node, end);
            if i == j {
                node = &node.children[i];
                continue;
            }
            return node.children[i].span.0 == start && node.children[j].span.1 == end;
        }
    }

    /// S-expression rendering, leaves printed as their token text.
    pub fn to_sexpr<S: AsRef<str>>(&self, tokens: &[S]) -> String {
        let mut out = String::new();
        write_sexpr(&self.root, tokens, &mut out);
        out
    }
}

fn child_containing(node: &AstNode, leaf: usize) -> usize {
    node.children.partition_point(|c| c.span.1 < leaf)
}

fn write_sexpr<S: AsRef<str>>(node: &AstNode, tokens: &[S], out: &mut String) {
    if node.is_leaf() {
        out.push_str(tokens[node.span.0].as_ref());
        return;
    }
    let _ = write!(out, "({}", node.kind.sexpr_name());
    for child in &node.children {
        out.push(' ');
        write_sexpr(child, tokens, out);
    }
    out.push(')');
}

/// Checked form of [`AstTree::is_aligned`].
pub fn is_tree_aligned(tree: &AstTree, span: (usize, usize)) -> Result<bool> {
    let (start, end) = span;
    if start > end || end >= tree.leaf_count {
        return Err(Error::SpanOutOfBounds {
            start,
            end,
            leaf_count: tree.leaf_count,
        });
    }
    Ok(tree.is_aligned(start, end))
}

/// Splits raw SQL into tokens.
///
/// Whitespace separates tokens; `( ) , ; = < >` and `"` always stand alone,
/// with `<=`, `>=`, `<>` and `!=` kept as single operator tokens. Text between
/// double quotes is split on whitespace only.
pub fn tokenize_sql(raw: &str) -> Result<Vec<Token>> {
    if raw.contains(SEPARATOR) {
        return Err(Error::InvalidToken {
            token: raw.to_owned(),
            reason: "contains the reserved separator",
        });
    }
    let chars: Vec<char> = raw.chars().collect();
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<Token>| {
        if !word.is_empty() {
            tokens.push(Token::new_unchecked(std::mem::take(word)));
        }
    };

    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        match c {
            c if c.is_whitespace() => flush(&mut word, &mut tokens),
            '"' => {
                flush(&mut word, &mut tokens);
                let close = chars[i + 1..]
                    .iter()
                    .position(|&c| c == '"')
                    .map(|p| p + i + 1)
                    .ok_or(Error::UnterminatedQuote { offset: i })?;
                tokens.push(Token::new_unchecked("\"".into()));
                let body: String = chars[i + 1..close].iter().collect();
                tokens.extend(
                    body.split_whitespace()
                        .map(|w| Token::new_unchecked(w.to_owned())),
                );
                tokens.push(Token::new_unchecked("\"".into()));
                i = close;
            }
            '(' | ')' | ',' | ';' => {
                flush(&mut word, &mut tokens);
                tokens.push(Token::new_unchecked(c.to_string()));
            }
            '<' | '>' | '=' | '!' => {
                let pair = match (c, next) {
                    ('<', Some('=')) | ('>', Some('=')) | ('<', Some('>')) | ('!', Some('=')) => {
                        Some(format!("{c}{}", next.unwrap_or_default()))
                    }
                    _ => None,
                };
                if let Some(op) = pair {
                    flush(&mut word, &mut tokens);
                    tokens.push(Token::new_unchecked(op));
                    i += 1;
                } else if c == '!' {
                    word.push(c);
                } else {
                    flush(&mut word, &mut tokens);
                    tokens.push(Token::new_unchecked(c.to_string()));
                }
            }
            _ => word.push(c),
        }
        i += 1;
    }
    flush(&mut word, &mut tokens);
    if tokens.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(tokens)
}

/// Builds the sibling-group tree over a query's tokens.
pub fn parse<S: AsRef<str>>(tokens: &[S]) -> Result<AstTree> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput);
    }
    let texts: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
    let matches = Matches::compute(&texts)?;
    let parser = Parser {
        texts: &texts,
        matches,
    };
    let children = parser.sequence(0, texts.len());
    Ok(AstTree {
        root: AstNode {
            span: (0, texts.len() - 1),
            kind: NodeKind::Statement,
            children,
        },
        leaf_count: texts.len(),
    })
}

// Partner index for every paired quote and parenthesis token.
struct Matches {
    partner: Vec<Option<usize>>,
}

impl Matches {
    fn compute(texts: &[&str]) -> Result<Self> {
        let mut partner = vec![None; texts.len()];
        // quotes pair left to right; a trailing unpaired quote stays a plain leaf
        let mut open_quote = None;
        for (i, t) in texts.iter().enumerate() {
            if *t == "\"" {
                match open_quote.take() {
                    Some(o) => {
                        partner[o] = Some(i);
                        partner[i] = Some(o);
                    }
                    None => open_quote = Some(i),
                }
            }
        }
        let mut stack = Vec::new();
        let mut i = 0;
        while i < texts.len() {
            match texts[i] {
                "\"" => {
                    if let Some(close) = partner[i] {
                        i = close;
                    }
                }
                "(" => stack.push(i),
                ")" => {
                    let open = stack.pop().ok_or(Error::UnbalancedParens { index: i })?;
                    partner[open] = Some(i);
                    partner[i] = Some(open);
                }
                _ => {}
            }
            i += 1;
        }
        if let Some(open) = stack.pop() {
            return Err(Error::UnbalancedParens { index: open });
        }
        Ok(Matches { partner })
    }
}

struct Parser<'a> {
    texts: &'a [&'a str],
    matches: Matches,
}

fn is_keyword(text: &str, set: &[&str]) -> bool {
    set.iter().any(|k| k.eq_ignore_ascii_case(text))
}

impl Parser<'_> {
    fn text(&self, node: &AstNode) -> Option<&str> {
        node.is_leaf().then(|| self.texts[node.span.0])
    }

    fn leaf_is(&self, node: &AstNode, kw: &str) -> bool {
        self.text(node).is_some_and(|t| t.eq_ignore_ascii_case(kw))
    }

    // Children covering exactly tokens[lo..hi].
    fn sequence(&self, lo: usize, hi: usize) -> Vec<AstNode> {
        let items = self.items(lo, hi);
        let mut out = Vec::new();
        let mut segment: Vec<AstNode> = Vec::new();
        let mut in_clause = false;
        for item in items {
            let opens = self
                .text(&item)
                .is_some_and(|t| is_keyword(t, &CLAUSE_KEYWORDS));
            if opens {
                self.close_segment(&mut out, std::mem::take(&mut segment), in_clause);
                in_clause = true;
            }
            segment.push(item);
        }
        self.close_segment(&mut out, segment, in_clause);
        out
    }

    fn close_segment(&self, out: &mut Vec<AstNode>, mut segment: Vec<AstNode>, is_clause: bool) {
        if segment.is_empty() {
            return;
        }
        if !is_clause {
            out.extend(self.comparisons(segment));
            return;
        }
        let mut head_len = 1;
        let two_word = self.leaf_is(&segment[0], "GROUP") || self.leaf_is(&segment[0], "ORDER");
        if two_word && segment.get(1).is_some_and(|n| self.leaf_is(n, "BY")) {
            head_len = 2;
        }
        let body = segment.split_off(head_len);
        segment.extend(self.comparisons(body));
        out.push(AstNode::group(NodeKind::Clause, segment));
    }

    // Leaves, paren groups and quoted literals at one nesting level.
    fn items(&self, lo: usize, hi: usize) -> Vec<AstNode> {
        let mut items = Vec::new();
        let mut i = lo;
        while i < hi {
            match (self.texts[i], self.matches.partner[i]) {
                ("(", Some(close)) => {
                    let mut children = vec![AstNode::leaf(i)];
                    children.extend(self.sequence(i + 1, close));
                    children.push(AstNode::leaf(close));
                    items.push(AstNode::group(NodeKind::ParenGroup, children));
                    i = close + 1;
                }
                ("\"", Some(close)) if close > i => {
                    let children = (i..=close).map(AstNode::leaf).collect();
                    items.push(AstNode::group(NodeKind::QuotedLiteral, children));
                    i = close + 1;
                }
                _ => {
                    items.push(AstNode::leaf(i));
                    i += 1;
                }
            }
        }
        items
    }

    fn is_operand(&self, node: &AstNode) -> bool {
        match self.text(node) {
            None => node.kind != NodeKind::Comparison,
            Some(t) => {
                !is_keyword(t, &NON_OPERANDS)
                    && !is_keyword(t, &COMPARISON_OPERATORS)
                    && !is_keyword(t, &CLAUSE_KEYWORDS)
            }
        }
    }

    // Length of the operator starting at items[i], including the operands of a
    // BETWEEN form, or None if items[i..] does not continue a comparison.
    fn operator_len(&self, items: &[AstNode], i: usize) -> Option<usize> {
        let head = self.text(&items[i])?;
        let operand = |k: usize| items.get(k).is_some_and(|n| self.is_operand(n));
        if head.eq_ignore_ascii_case("BETWEEN") {
            let and_at = items.get(i + 2).is_some_and(|n| self.leaf_is(n, "AND"));
            return (operand(i + 1) && and_at && operand(i + 3)).then_some(3);
        }
        let op_len = if head.eq_ignore_ascii_case("NOT") {
            let next = items.get(i + 1)?;
            (self.leaf_is(next, "LIKE") || self.leaf_is(next, "IN")).then_some(2)?
        } else if head.eq_ignore_ascii_case("IS") {
            if items.get(i + 1).is_some_and(|n| self.leaf_is(n, "NOT")) {
                2
            } else {
                1
            }
        } else if is_keyword(head, &COMPARISON_OPERATORS) {
            1
        } else {
            return None;
        };
        operand(i + op_len).then_some(op_len)
    }

    fn comparisons(&self, items: Vec<AstNode>) -> Vec<AstNode> {
        let mut out: Vec<AstNode> = Vec::with_capacity(items.len());
        let mut i = 0;
        while i < items.len() {
            let left_ok = out.last().is_some_and(|n| self.is_operand(n));
            if let Some(len) = left_ok.then(|| self.operator_len(&items, i)).flatten() {
                let mut children = vec![out.pop().expect("left operand")];
                children.extend(items[i..=i + len].iter().cloned());
                out.push(AstNode::group(NodeKind::Comparison, children));
                i += len + 1;
            } else {
                out.push(items[i].clone());
                i += 1;
            }
        }
        out
    }
}
