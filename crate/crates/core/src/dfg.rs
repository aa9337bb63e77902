//! Directly-follows graphs with artificial start (▷) and end (□) nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};

use crate::log::{Activity, EventLog, END_MARKER, START_MARKER};

/// A DFG node. Ordering puts the start marker first and the end marker last.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Start,
    Activity(Activity),
    End,
}

impl Node {
    pub fn activity(&self) -> Option<&Activity> {
        match self {
            Node::Activity(a) => Some(a),
            _ => None,
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Start => f.write_str(START_MARKER),
            Node::End => f.write_str(END_MARKER),
            Node::Activity(a) => write!(f, "{a}"),
        }
    }
}

impl From<Activity> for Node {
    fn from(a: Activity) -> Self {
        Node::Activity(a)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dfg {
    edges: BTreeMap<(Node, Node), u64>,
    node_freq: BTreeMap<Node, u64>,
}

impl Dfg {
    /// Builds the DFG of a log: for each trace `<a1..an>` adds `▷→a1`,
    /// `ai→ai+1` and `an→□`, or `▷→□` for an empty trace.
    pub fn build(log: &EventLog) -> Dfg {
        let mut dfg = Dfg::default();
        for trace in log.traces() {
            *dfg.node_freq.entry(Node::Start).or_insert(0) += 1;
            *dfg.node_freq.entry(Node::End).or_insert(0) += 1;
            let mut prev = Node::Start;
            for a in trace.iter() {
                let node = Node::Activity(a.clone());
                *dfg.node_freq.entry(node.clone()).or_insert(0) += 1;
                *dfg.edges.entry((prev, node.clone())).or_insert(0) += 1;
                prev = node;
            }
            *dfg.edges.entry((prev, Node::End)).or_insert(0) += 1;
        }
        dfg
    }

    /// The DFG of `log` with every trace filtered to `subset`.
    pub fn project(log: &EventLog, subset: &BTreeSet<Activity>) -> Dfg {
        Dfg::build(&log.project(subset))
    }

    /// Multiplicity of the edge `from → to`.
    pub fn edge(&self, from: &Node, to: &Node) -> u64 {
        // BTreeMap lookups on tuple keys need owned keys.
        self.edges
            .get(&(from.clone(), to.clone()))
            .copied()
            .unwrap_or(0)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&Node, &Node, u64)> {
        self.edges.iter().map(|((f, t), n)| (f, t, *n))
    }

    pub fn distinct_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn total_edges(&self) -> u64 {
        self.edges.values().sum()
    }

    /// Event count for activities; trace count for the markers.
    pub fn frequency(&self, node: &Node) -> u64 {
        self.node_freq.get(node).copied().unwrap_or(0)
    }

    /// Non-marker nodes.
    pub fn activities(&self) -> BTreeSet<Activity> {
        self.node_freq
            .keys()
            .filter_map(|n| n.activity().cloned())
            .collect()
    }

    pub fn incoming(&self, node: &Node) -> u64 {
        self.edges
            .iter()
            .filter(|((_, t), _)| t == node)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn outgoing(&self, node: &Node) -> u64 {
        self.edges
            .iter()
            .filter(|((f, _), _)| f == node)
            .map(|(_, n)| n)
            .sum()
    }

    /// Graphviz rendering with multiplicities as edge labels.
    pub fn to_dot(&self) -> String {
        let mut ids = BTreeMap::new();
        for node in self.node_freq.keys() {
            let id = ids.len();
            ids.insert(node.clone(), id);
        }
        let mut out = String::from("digraph dfg {\n  rankdir=LR;\n");
        for (node, id) in &ids {
            let (shape, label) = match node {
                Node::Start => ("circle", START_MARKER.to_string()),
                Node::End => ("doublecircle", END_MARKER.to_string()),
                Node::Activity(a) => ("box", format!("{a} ({})", self.frequency(node))),
            };
            let _ = writeln!(
                out,
                "  n{id} [shape={shape}, label=\"{}\"];",
                dot_escape(&label)
            );
        }
        for ((from, to), n) in &self.edges {
            let _ = writeln!(out, "  n{} -> n{} [label=\"{n}\"];", ids[from], ids[to]);
        }
        out.push_str("}\n");
        out
    }
}

pub(crate) fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
