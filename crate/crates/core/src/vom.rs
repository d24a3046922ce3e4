//! Variable-order Markov tree in the style of the Continuator.
//!
//! Every context that occurred in a learned sequence is stored reversed as a
//! root-to-node path; each node keeps pointers to the positions that
//! followed that context. A query walks the context from its last symbol
//! backwards and reads the continuation counts off the deepest node reached.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use num_rational::Ratio;
use rand::RngCore;

/// Position following a context occurrence. `position` is 1-based, so it
/// names the continuation symbol `sequence[position - 1]`; a value of
/// `len + 1` marks an occurrence at the very end with no continuation yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pointer {
    pub sequence: usize,
    pub position: usize,
}

impl fmt::Display for Pointer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.sequence, self.position)
    }
}

#[derive(Debug, Clone)]
struct Node<S> {
    children: BTreeMap<S, usize>,
    pointers: Vec<Pointer>,
}

impl<S> Node<S> {
    fn empty() -> Self {
        Node {
            children: BTreeMap::new(),
            pointers: Vec::new(),
        }
    }
}

const ROOT: usize = 0;

#[derive(Debug, Clone)]
pub struct VomTree<S> {
    nodes: Vec<Node<S>>,
    sequences: Vec<Vec<S>>,
    max_depth: Option<usize>,
}

/// Continuation counts at the node a query settled on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NextSymbolDistribution<S> {
    pub counts: BTreeMap<S, u64>,
    pub total_pointers: u64,
    /// Length of the context suffix that was matched.
    pub depth: usize,
}

impl<S: Ord + Clone> NextSymbolDistribution<S> {
    pub fn probability(&self, symbol: &S) -> Ratio<u64> {
        Ratio::new(
            self.counts.get(symbol).copied().unwrap_or(0),
            self.total_pointers,
        )
    }

    /// Most-pointed symbol; the smallest symbol wins a tie.
    pub fn argmax(&self) -> S {
        let mut best: Option<(&S, u64)> = None;
        for (s, &c) in &self.counts {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((s, c));
            }
        }
        best.expect("distribution has support").0.clone()
    }

    pub fn support(&self) -> impl Iterator<Item = (&S, Ratio<u64>)> {
        self.counts
            .iter()
            .map(move |(s, &c)| (s, Ratio::new(c, self.total_pointers)))
    }
}

/// How `predict` turns a distribution into one symbol.
pub enum Selection<'a> {
    Argmax,
    /// Draw one continuation pointer uniformly at random.
    Sample(&'a mut dyn RngCore),
}

impl<S: Ord + Clone> Default for VomTree<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Ord + Clone> VomTree<S> {
    pub fn new() -> Self {
        VomTree {
            nodes: vec![Node::empty()],
            sequences: Vec::new(),
            max_depth: None,
        }
    }

    /// Limits stored contexts to `depth` symbols.
    pub fn with_max_depth(depth: usize) -> Self {
        VomTree {
            max_depth: Some(depth.max(1)),
            ..Self::new()
        }
    }

    pub fn max_depth(&self) -> Option<usize> {
        self.max_depth
    }

    pub fn clear(&mut self) {
        self.nodes.truncate(1);
        self.nodes[ROOT] = Node::empty();
        self.sequences.clear();
    }

    /// Replaces everything learned so far with a single sequence.
    pub fn rebuild(&mut self, sequence: &[S]) {
        self.clear();
        self.learn_sequence(sequence);
    }

    pub fn sequences(&self) -> &[Vec<S>] {
        &self.sequences
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn pointer_count(&self) -> usize {
        self.nodes.iter().map(|n| n.pointers.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// For every prefix end `i`, walks `s[i], s[i-1], ...` down the tree,
    /// creating nodes as needed, and appends a pointer to position `i + 1`
    /// (1-based `i + 2`) to each node on the way.
    pub fn learn_sequence(&mut self, s: &[S]) {
        if s.is_empty() {
            return;
        }
        let sequence = self.sequences.len();
        self.sequences.push(s.to_vec());
        for end in 0..s.len() {
            let pointer = Pointer {
                sequence,
                position: end + 2,
            };
            let lowest = match self.max_depth {
                Some(d) => (end + 1).saturating_sub(d),
                None => 0,
            };
            let mut node = ROOT;
            for j in (lowest..=end).rev() {
                let next = match self.nodes[node].children.get(&s[j]) {
                    Some(&child) => child,
                    None => {
                        let child = self.nodes.len();
                        self.nodes.push(Node::empty());
                        self.nodes[node].children.insert(s[j].clone(), child);
                        child
                    }
                };
                self.nodes[next].pointers.push(pointer);
                node = next;
            }
        }
    }

    /// Symbol a pointer addresses, if the position lies inside its sequence.
    pub fn continuation(&self, pointer: Pointer) -> Option<&S> {
        self.sequences
            .get(pointer.sequence)
            .and_then(|s| s.get(pointer.position.wrapping_sub(1)))
    }

    fn counts_at(&self, node: usize) -> BTreeMap<S, u64> {
        let mut counts = BTreeMap::new();
        for &p in &self.nodes[node].pointers {
            if let Some(sym) = self.continuation(p) {
                *counts.entry(sym.clone()).or_insert(0) += 1;
            }
        }
        counts
    }

    fn find(&self, context: &[S]) -> Option<usize> {
        let mut node = ROOT;
        for sym in context.iter().rev() {
            node = *self.nodes[node].children.get(sym)?;
        }
        Some(node)
    }

    /// Continuation counts stored at the node spelling exactly `context`
    /// (no backing off to shorter suffixes).
    pub fn exact_continuations(&self, context: &[S]) -> Option<BTreeMap<S, u64>> {
        self.find(context).map(|n| self.counts_at(n))
    }

    /// Pointers stored at the node spelling exactly `context`.
    pub fn pointers(&self, context: &[S]) -> Option<&[Pointer]> {
        self.find(context)
            .map(|n| self.nodes[n].pointers.as_slice())
    }

    /// Number of context symbols that can be matched, walking backwards.
    pub fn matched_depth(&self, context: &[S]) -> usize {
        self.walk(context).len()
    }

    fn walk(&self, context: &[S]) -> Vec<usize> {
        let mut path = Vec::new();
        let mut node = ROOT;
        for sym in context.iter().rev() {
            match self.nodes[node].children.get(sym) {
                Some(&child) => {
                    path.push(child);
                    node = child;
                }
                None => break,
            }
        }
        path
    }

    /// Walks the context from its last symbol as deep as the tree allows and
    /// returns the continuation distribution of the deepest node that has at
    /// least one continuation. `None` signals the zero-frequency case.
    pub fn query_distribution(&self, context: &[S]) -> Option<NextSymbolDistribution<S>> {
        let path = self.walk(context);
        for (depth, &node) in path.iter().enumerate().rev() {
            let counts = self.counts_at(node);
            if !counts.is_empty() {
                let total_pointers = counts.values().sum();
                return Some(NextSymbolDistribution {
                    counts,
                    total_pointers,
                    depth: depth + 1,
                });
            }
        }
        None
    }

    pub fn predict(&self, context: &[S], selection: Selection<'_>) -> Option<S> {
        let dist = self.query_distribution(context)?;
        match selection {
            Selection::Argmax => Some(dist.argmax()),
            Selection::Sample(rng) => {
                let draw = rng.next_u64() % dist.total_pointers;
                let mut acc = 0;
                for (sym, &c) in &dist.counts {
                    acc += c;
                    if draw < acc {
                        return Some(sym.clone());
                    }
                }
                unreachable!("draw below total pointer count")
            }
        }
    }
}

impl<S: Ord + Clone + fmt::Display> VomTree<S> {
    /// Depth-first text rendering: one node per line, children in symbol
    /// order, each followed by its `(sequence,position)` pointers.
    pub fn dump(&self) -> String {
        let mut out = String::from("root\n");
        self.dump_node(ROOT, 1, &mut out);
        out
    }

    fn dump_node(&self, node: usize, depth: usize, out: &mut String) {
        for (sym, &child) in &self.nodes[node].children {
            let _ = write!(out, "{}{}", "  ".repeat(depth), sym);
            for p in &self.nodes[child].pointers {
                let _ = write!(out, " {p}");
            }
            out.push('\n');
            self.dump_node(child, depth + 1, out);
        }
    }
}
