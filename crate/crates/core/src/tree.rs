//! Binary process trees, their bounded language, and three serialisations:
//! nested text (`->( 'a', X( tau, 'b' ) )`), JSON, and Graphviz DOT.

use std::collections::BTreeSet;
use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::dfg::dot_escape;
use crate::log::{Activity, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "->")]
    Sequence,
    #[serde(rename = "X")]
    Xor,
    #[serde(rename = "+")]
    Parallel,
    #[serde(rename = "*")]
    Loop,
}

impl Operator {
    /// Tie-break priority order.
    pub const ALL: [Operator; 4] = [
        Operator::Sequence,
        Operator::Xor,
        Operator::Parallel,
        Operator::Loop,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Sequence => "->",
            Operator::Xor => "X",
            Operator::Parallel => "+",
            Operator::Loop => "*",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Operator> {
        Operator::ALL.into_iter().find(|op| op.symbol() == s)
    }

    /// Whether swapping the two children yields the same model.
    pub fn is_commutative(self) -> bool {
        matches!(self, Operator::Xor | Operator::Parallel)
    }

    fn glyph(self) -> &'static str {
        match self {
            Operator::Sequence => "→",
            Operator::Xor => "×",
            Operator::Parallel => "∧",
            Operator::Loop => "↻",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// A process tree. For loops the left child is the body, the right child
/// the redo part.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProcessTree {
    Leaf(Activity),
    Tau,
    Node {
        op: Operator,
        left: Box<ProcessTree>,
        right: Box<ProcessTree>,
    },
}

impl ProcessTree {
    pub fn leaf(label: &str) -> ProcessTree {
        ProcessTree::Leaf(Activity::new(label).expect("valid activity label"))
    }

    pub fn node(op: Operator, left: ProcessTree, right: ProcessTree) -> ProcessTree {
        ProcessTree::Node {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn seq(left: ProcessTree, right: ProcessTree) -> ProcessTree {
        ProcessTree::node(Operator::Sequence, left, right)
    }

    pub fn xor(left: ProcessTree, right: ProcessTree) -> ProcessTree {
        ProcessTree::node(Operator::Xor, left, right)
    }

    pub fn par(left: ProcessTree, right: ProcessTree) -> ProcessTree {
        ProcessTree::node(Operator::Parallel, left, right)
    }

    pub fn looped(body: ProcessTree, redo: ProcessTree) -> ProcessTree {
        ProcessTree::node(Operator::Loop, body, redo)
    }

    /// Activity leaves in left-to-right order, with repetitions.
    pub fn leaves(&self) -> Vec<&Activity> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Activity>) {
        match self {
            ProcessTree::Leaf(a) => out.push(a),
            ProcessTree::Tau => {}
            ProcessTree::Node { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            ProcessTree::Node { left, right, .. } => 1 + left.depth().max(right.depth()),
            _ => 0,
        }
    }

    /// All traces of the tree's language with at most `max_len` events.
    /// Loops are unrolled as `body (redo body)*` until no new trace fits.
    pub fn language(&self, max_len: usize) -> BTreeSet<Trace> {
        self.language_vec(max_len)
            .into_iter()
            .map(Trace::new)
            .collect()
    }

    fn language_vec(&self, max_len: usize) -> BTreeSet<Vec<Activity>> {
        match self {
            ProcessTree::Tau => BTreeSet::from([Vec::new()]),
            ProcessTree::Leaf(a) => {
                if max_len >= 1 {
                    BTreeSet::from([vec![a.clone()]])
                } else {
                    BTreeSet::new()
                }
            }
            ProcessTree::Node { op, left, right } => {
                let l = left.language_vec(max_len);
                let r = right.language_vec(max_len);
                combine_languages(*op, &l, &r, max_len)
            }
        }
    }

    /// Nested text form, e.g. `->( 'a', X( tau, 'b' ) )`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_text(&mut out);
        out
    }

    fn write_text(&self, out: &mut String) {
        match self {
            ProcessTree::Tau => out.push_str("tau"),
            ProcessTree::Leaf(a) => {
                out.push('\'');
                for c in a.as_str().chars() {
                    if c == '\'' || c == '\\' {
                        out.push('\\');
                    }
                    out.push(c);
                }
                out.push('\'');
            }
            ProcessTree::Node { op, left, right } => {
                out.push_str(op.symbol());
                out.push_str("( ");
                left.write_text(out);
                out.push_str(", ");
                right.write_text(out);
                out.push_str(" )");
            }
        }
    }

    /// Parses the nested text form.
    pub fn parse_text(input: &str) -> Result<ProcessTree, TreeParseError> {
        let mut parser = TextParser {
            chars: input.char_indices().collect(),
            pos: 0,
        };
        let tree = parser.tree()?;
        parser.skip_ws();
        if parser.pos < parser.chars.len() {
            return Err(parser.error("trailing input"));
        }
        Ok(tree)
    }

    /// JSON form: `{"leaf": "a"}`, `{"tau": true}`, or
    /// `{"op": "->", "children": [..]}`.
    pub fn to_json(&self) -> Value {
        match self {
            ProcessTree::Tau => json!({ "tau": true }),
            ProcessTree::Leaf(a) => json!({ "leaf": a.as_str() }),
            ProcessTree::Node { op, left, right } => json!({
                "op": op.symbol(),
                "children": [left.to_json(), right.to_json()],
            }),
        }
    }

    pub fn from_json(value: &Value) -> Result<ProcessTree, TreeParseError> {
        let bad = |what: &str| TreeParseError {
            offset: 0,
            reason: what.to_string(),
        };
        if let Some(label) = value.get("leaf").and_then(Value::as_str) {
            return Activity::new(label)
                .map(ProcessTree::Leaf)
                .map_err(|e| bad(&e.to_string()));
        }
        if value.get("tau").is_some() {
            return Ok(ProcessTree::Tau);
        }
        let op = value
            .get("op")
            .and_then(Value::as_str)
            .and_then(Operator::from_symbol)
            .ok_or_else(|| bad("expected leaf, tau or op"))?;
        match value
            .get("children")
            .and_then(Value::as_array)
            .map(Vec::as_slice)
        {
            Some([l, r]) => Ok(ProcessTree::node(
                op,
                ProcessTree::from_json(l)?,
                ProcessTree::from_json(r)?,
            )),
            _ => Err(bad("operator nodes need exactly two children")),
        }
    }

    /// Graphviz rendering: operators as circles, activities as boxes, τ as a
    /// small filled square. Nodes are numbered in pre-order.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph process_tree {\n  node [fontname=\"Helvetica\"];\n");
        let mut next = 0usize;
        self.write_dot(&mut out, &mut next, None);
        out.push_str("}\n");
        out
    }

    fn write_dot(&self, out: &mut String, next: &mut usize, parent: Option<usize>) {
        let id = *next;
        *next += 1;
        match self {
            ProcessTree::Tau => {
                let _ = writeln!(
                    out,
                    "  n{id} [shape=square, style=filled, fillcolor=black, width=0.2, label=\"\"];"
                );
            }
            ProcessTree::Leaf(a) => {
                let _ = writeln!(
                    out,
                    "  n{id} [shape=box, label=\"{}\"];",
                    dot_escape(a.as_str())
                );
            }
            ProcessTree::Node { op, .. } => {
                let _ = writeln!(out, "  n{id} [shape=circle, label=\"{}\"];", op.glyph());
            }
        }
        if let Some(p) = parent {
            let _ = writeln!(out, "  n{p} -> n{id};");
        }
        if let ProcessTree::Node { left, right, .. } = self {
            left.write_dot(out, next, Some(id));
            right.write_dot(out, next, Some(id));
        }
    }
}

impl fmt::Display for ProcessTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Language of `op(left, right)` given the children's bounded languages.
pub(crate) fn combine_languages(
    op: Operator,
    left: &BTreeSet<Vec<Activity>>,
    right: &BTreeSet<Vec<Activity>>,
    max_len: usize,
) -> BTreeSet<Vec<Activity>> {
    let concat = |x: &[Activity], y: &[Activity]| {
        let mut t = x.to_vec();
        t.extend_from_slice(y);
        t
    };
    match op {
        Operator::Xor => left.union(right).cloned().collect(),
        Operator::Sequence => {
            let mut out = BTreeSet::new();
            for x in left {
                for y in right {
                    if x.len() + y.len() <= max_len {
                        out.insert(concat(x, y));
                    }
                }
            }
            out
        }
        Operator::Parallel => {
            let mut out = BTreeSet::new();
            for x in left {
                for y in right {
                    if x.len() + y.len() <= max_len {
                        interleave(x, y, &mut Vec::new(), &mut out);
                    }
                }
            }
            out
        }
        Operator::Loop => {
            let mut out: BTreeSet<Vec<Activity>> = left.clone();
            let mut frontier: Vec<Vec<Activity>> = left.iter().cloned().collect();
            while !frontier.is_empty() {
                let mut fresh = Vec::new();
                for prefix in &frontier {
                    for redo in right {
                        for body in left {
                            if prefix.len() + redo.len() + body.len() > max_len {
                                continue;
                            }
                            let t = concat(&concat(prefix, redo), body);
                            if out.insert(t.clone()) {
                                fresh.push(t);
                            }
                        }
                    }
                }
                frontier = fresh;
            }
            out
        }
    }
}

fn interleave(
    x: &[Activity],
    y: &[Activity],
    prefix: &mut Vec<Activity>,
    out: &mut BTreeSet<Vec<Activity>>,
) {
    match (x.split_first(), y.split_first()) {
        (None, None) => {
            out.insert(prefix.clone());
        }
        (Some((h, rest)), None) | (None, Some((h, rest))) => {
            let len = prefix.len();
            prefix.push(h.clone());
            prefix.extend_from_slice(rest);
            out.insert(prefix.clone());
            prefix.truncate(len);
        }
        (Some((hx, rx)), Some((hy, ry))) => {
            prefix.push(hx.clone());
            interleave(rx, y, prefix, out);
            prefix.pop();
            prefix.push(hy.clone());
            interleave(x, ry, prefix, out);
            prefix.pop();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("tree syntax error at offset {offset}: {reason}")]
pub struct TreeParseError {
    pub offset: usize,
    pub reason: String,
}

struct TextParser {
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl TextParser {
    fn error(&self, reason: &str) -> TreeParseError {
        let offset = self
            .chars
            .get(self.pos)
            .map(|(o, _)| *o)
            .unwrap_or_else(|| {
                self.chars
                    .last()
                    .map(|(o, c)| o + c.len_utf8())
                    .unwrap_or(0)
            });
        TreeParseError {
            offset,
            reason: reason.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|(_, c)| *c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: char) -> Result<(), TreeParseError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected {c:?}")))
        }
    }

    fn tree(&mut self) -> Result<ProcessTree, TreeParseError> {
        self.skip_ws();
        match self.peek() {
            Some('\'') => self.quoted(),
            Some(_) => {
                let start = self.pos;
                while self
                    .peek()
                    .is_some_and(|c| !c.is_whitespace() && c != '(' && c != ',' && c != ')')
                {
                    self.pos += 1;
                }
                let word: String = self.chars[start..self.pos].iter().map(|(_, c)| c).collect();
                if word == "tau" {
                    return Ok(ProcessTree::Tau);
                }
                let op = Operator::from_symbol(&word).ok_or_else(|| {
                    self.pos = start;
                    self.error(&format!("unknown token {word:?}"))
                })?;
                self.expect('(')?;
                let left = self.tree()?;
                self.expect(',')?;
                let right = self.tree()?;
                self.expect(')')?;
                Ok(ProcessTree::node(op, left, right))
            }
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn quoted(&mut self) -> Result<ProcessTree, TreeParseError> {
        self.pos += 1;
        let mut label = String::new();
        loop {
            match self.peek() {
                None => return Err(self.error("unterminated label")),
                Some('\\') => {
                    self.pos += 1;
                    match self.peek() {
                        Some(c) => label.push(c),
                        None => return Err(self.error("dangling escape")),
                    }
                }
                Some('\'') => break,
                Some(c) => label.push(c),
            }
            self.pos += 1;
        }
        let activity = Activity::new(&label).map_err(|e| self.error(&e.to_string()))?;
        self.pos += 1;
        Ok(ProcessTree::Leaf(activity))
    }
}
