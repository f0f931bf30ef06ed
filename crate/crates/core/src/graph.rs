//! Directed acyclic graphs over system nodes plus context (intervention)
//! nodes, with d-separation queries and oracle separating sets.
//!
//! # Text format
//!
//! ```text
//! # comments start with '#'
//! nodes: I_A I_B A B S Y     (optional, fixes node ids and declares isolated nodes)
//! context: I_A I_B
//! target: Y
//! I_A -> A
//! I_B -> B
//! A -> S
//! B -> S
//! S -> Y
//! ```
//!
//! Node ids are assigned in the order of the `nodes:` line, then in order of
//! first appearance. Names are any whitespace-free token not containing `->`
//! or `:`. `context:` may be empty or absent; `target:` is required.

use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use thiserror::Error;

/// Dense node identifier; names live in [`Dag::name`].
pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph contains a cycle through node `{0}`")]
    Cycle(String),
    #[error("context node `{0}` has an incoming edge")]
    ContextHasParent(String),
    #[error("target `{0}` is a context node")]
    TargetIsContext(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),
    #[error("self loop on `{0}`")]
    SelfLoop(String),
    #[error("node sets are not disjoint: `{0}` appears twice")]
    Overlap(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// An acyclic causal graph `G = (V ∪ I, E)` with a distinguished target `Y`.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    names: Vec<String>,
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
    is_context: Vec<bool>,
    target: NodeId,
    order: Vec<NodeId>,
}

impl Dag {
    /// Builds and validates a graph. Duplicate edges are merged.
    pub fn new(
        names: Vec<String>,
        edges: &[(NodeId, NodeId)],
        context: &[NodeId],
        target: NodeId,
    ) -> Result<Self, GraphError> {
        let n = names.len();
        let mut seen = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if seen.insert(name.as_str(), i).is_some() {
                return Err(GraphError::DuplicateNode(name.clone()));
            }
        }
        let check = |v: NodeId| {
            if v < n {
                Ok(())
            } else {
                Err(GraphError::UnknownNode(format!("#{v}")))
            }
        };
        check(target)?;
        let mut parents = vec![BTreeSet::new(); n];
        let mut children = vec![BTreeSet::new(); n];
        for &(p, c) in edges {
            check(p)?;
            check(c)?;
            if p == c {
                return Err(GraphError::SelfLoop(names[p].clone()));
            }
            parents[c].insert(p);
            children[p].insert(c);
        }
        let mut is_context = vec![false; n];
        for &c in context {
            check(c)?;
            is_context[c] = true;
        }
        for v in 0..n {
            if is_context[v] && !parents[v].is_empty() {
                return Err(GraphError::ContextHasParent(names[v].clone()));
            }
        }
        if is_context[target] {
            return Err(GraphError::TargetIsContext(names[target].clone()));
        }
        let parents: Vec<Vec<NodeId>> = parents.into_iter().map(|s| s.into_iter().collect()).collect();
        let children: Vec<Vec<NodeId>> = children.into_iter().map(|s| s.into_iter().collect()).collect();
        let order = topological_sort(&parents, &children).map_err(|v| GraphError::Cycle(names[v].clone()))?;
        Ok(Self { names, parents, children, is_context, target, order })
    }

    /// Builds a graph from node names; convenient for hand-written graphs.
    pub fn from_names(
        nodes: &[&str],
        edges: &[(&str, &str)],
        context: &[&str],
        target: &str,
    ) -> Result<Self, GraphError> {
        let names: Vec<String> = nodes.iter().map(|s| s.to_string()).collect();
        let lookup = |s: &str| {
            nodes
                .iter()
                .position(|n| *n == s)
                .ok_or_else(|| GraphError::UnknownNode(s.to_string()))
        };
        let edges = edges
            .iter()
            .map(|&(p, c)| Ok((lookup(p)?, lookup(c)?)))
            .collect::<Result<Vec<_>, GraphError>>()?;
        let context = context.iter().map(|c| lookup(c)).collect::<Result<Vec<_>, _>>()?;
        Self::new(names, &edges, &context, lookup(target)?)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.names[v]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn target(&self) -> NodeId {
        self.target
    }

    pub fn is_context(&self, v: NodeId) -> bool {
        self.is_context[v]
    }

    /// Parents of `v` in increasing id order (context parents included).
    pub fn parents(&self, v: NodeId) -> &[NodeId] {
        &self.parents[v]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v]
    }

    /// Parents of `v` that are system (non-context) nodes.
    pub fn system_parents(&self, v: NodeId) -> Vec<NodeId> {
        self.parents[v].iter().copied().filter(|&p| !self.is_context[p]).collect()
    }

    /// Context nodes in id order.
    pub fn context_nodes(&self) -> Vec<NodeId> {
        (0..self.len()).filter(|&v| self.is_context[v]).collect()
    }

    /// System nodes (`V`, including the target) in id order.
    pub fn system_nodes(&self) -> Vec<NodeId> {
        (0..self.len()).filter(|&v| !self.is_context[v]).collect()
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        (0..self.len())
            .flat_map(|p| self.children[p].iter().map(move |&c| (p, c)))
            .collect()
    }

    /// Parents precede children; ties are broken by smallest node id.
    pub fn topological_order(&self) -> &[NodeId] {
        &self.order
    }

    /// `an(C)`: the nodes in `set` together with all their ancestors.
    pub fn ancestors(&self, set: &[NodeId]) -> Vec<bool> {
        let mut mark = vec![false; self.len()];
        let mut stack: Vec<NodeId> = set.to_vec();
        while let Some(v) = stack.pop() {
            if !mark[v] {
                mark[v] = true;
                stack.extend(self.parents[v].iter().copied());
            }
        }
        mark
    }

    /// Whether every path between `a` and `b` is blocked by `c`.
    ///
    /// Uses the reachability ("Bayes ball") formulation, linear in the number
    /// of edges. The three sets must be pairwise disjoint.
    pub fn d_separated(&self, a: &[NodeId], b: &[NodeId], c: &[NodeId]) -> Result<bool, GraphError> {
        let n = self.len();
        let mut role = vec![0u8; n];
        for (tag, set) in [(1u8, a), (2, b), (4, c)] {
            for &v in set {
                if v >= n {
                    return Err(GraphError::UnknownNode(format!("#{v}")));
                }
                if role[v] != 0 {
                    return Err(GraphError::Overlap(self.names[v].clone()));
                }
                role[v] = tag;
            }
        }
        let in_c = |v: NodeId| role[v] == 4;
        let anc_c = self.ancestors(c);

        // (node, arrived_from_child): traversal direction along the last edge.
        let mut visited = vec![[false; 2]; n];
        let mut queue: VecDeque<(NodeId, bool)> = a.iter().map(|&v| (v, true)).collect();
        while let Some((v, up)) = queue.pop_front() {
            if visited[v][up as usize] {
                continue;
            }
            visited[v][up as usize] = true;
            if role[v] == 2 {
                return Ok(false);
            }
            if up {
                if !in_c(v) {
                    queue.extend(self.parents[v].iter().map(|&p| (p, true)));
                    queue.extend(self.children[v].iter().map(|&ch| (ch, false)));
                }
            } else {
                if !in_c(v) {
                    queue.extend(self.children[v].iter().map(|&ch| (ch, false)));
                }
                if anc_c[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, true)));
                }
            }
        }
        Ok(true)
    }

    /// All candidate conditioning sets `S ⊆ V \ {Y}` with `|S| <= max_size`,
    /// ordered by size and then lexicographically by node id.
    pub fn candidate_sets(&self, max_size: usize) -> Vec<Vec<NodeId>> {
        let pool: Vec<NodeId> = self.system_nodes().into_iter().filter(|&v| v != self.target).collect();
        let max_size = max_size.min(pool.len());
        (0..=max_size)
            .flat_map(|k| pool.iter().copied().combinations(k))
            .collect()
    }

    /// Sets `S` among [`Dag::candidate_sets`] with `I ⊥ Y | S` in the graph.
    pub fn oracle_separating_sets(&self, max_size: usize) -> Vec<Vec<NodeId>> {
        let context = self.context_nodes();
        self.candidate_sets(max_size)
            .into_iter()
            .filter(|s| {
                self.d_separated(&context, &[self.target], s)
                    .expect("candidate sets are disjoint from context and target")
            })
            .collect()
    }

    pub fn format_set(&self, set: &[NodeId]) -> String {
        format!("{{{}}}", set.iter().map(|&v| self.name(v)).join(","))
    }

    /// Parses a set written as space/comma separated names, optionally in braces.
    pub fn parse_set(&self, text: &str) -> Result<Vec<NodeId>, GraphError> {
        let mut set: Vec<NodeId> = text
            .trim()
            .trim_start_matches('{')
            .trim_end_matches('}')
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| self.node_id(t).ok_or_else(|| GraphError::UnknownNode(t.to_string())))
            .collect::<Result<_, _>>()?;
        set.sort_unstable();
        set.dedup();
        Ok(set)
    }
}

/// Kahn's algorithm with a min-heap so that the order is deterministic.
/// On failure returns some node that lies on a cycle.
fn topological_sort(parents: &[Vec<NodeId>], children: &[Vec<NodeId>]) -> Result<Vec<NodeId>, NodeId> {
    let n = parents.len();
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut heap: BinaryHeap<Reverse<NodeId>> = (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = heap.pop() {
        order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                heap.push(Reverse(c));
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).find(|&v| indeg[v] > 0).unwrap_or(0))
    }
}

/// Strips a trailing `# comment` and surrounding whitespace.
pub(crate) fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

/// Accumulates graph lines of the text format; shared with the SCM parser.
#[derive(Default)]
pub(crate) struct GraphText {
    names: Vec<String>,
    edges: Vec<(NodeId, NodeId)>,
    context: Vec<NodeId>,
    target: Option<NodeId>,
}

impl GraphText {
    fn intern(&mut self, name: &str, line: usize) -> Result<NodeId, GraphError> {
        if name.is_empty() || name.contains("->") || name.contains(':') {
            return Err(GraphError::Parse { line, msg: format!("invalid node name `{name}`") });
        }
        Ok(match self.names.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                self.names.push(name.to_string());
                self.names.len() - 1
            }
        })
    }

    /// Consumes one graph line. Returns `Ok(false)` if the line is not part of
    /// the graph grammar (so callers can handle their own extensions).
    pub(crate) fn feed(&mut self, raw: &str, line: usize) -> Result<bool, GraphError> {
        let text = strip_comment(raw);
        if text.is_empty() {
            return Ok(true);
        }
        if let Some((key, rest)) = text.split_once(':') {
            match key.trim() {
                "nodes" => {
                    for tok in rest.split_whitespace() {
                        if self.names.iter().any(|n| n == tok) {
                            return Err(GraphError::DuplicateNode(tok.to_string()));
                        }
                        self.intern(tok, line)?;
                    }
                }
                "context" => {
                    for tok in rest.split_whitespace() {
                        let id = self.intern(tok, line)?;
                        self.context.push(id);
                    }
                }
                "target" => {
                    let toks: Vec<&str> = rest.split_whitespace().collect();
                    if toks.len() != 1 || self.target.is_some() {
                        return Err(GraphError::Parse { line, msg: "expected exactly one target".into() });
                    }
                    self.target = Some(self.intern(toks[0], line)?);
                }
                _ => return Ok(false),
            }
            return Ok(true);
        }
        if let Some((p, c)) = text.split_once("->") {
            let p = self.intern(p.trim(), line)?;
            let c = self.intern(c.trim(), line)?;
            self.edges.push((p, c));
            return Ok(true);
        }
        Ok(false)
    }

    pub(crate) fn finish(self) -> Result<Dag, GraphError> {
        let target = self
            .target
            .ok_or(GraphError::Parse { line: 0, msg: "missing `target:` line".into() })?;
        Dag::new(self.names, &self.edges, &self.context, target)
    }
}

impl FromStr for Dag {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut text = GraphText::default();
        for (i, line) in s.lines().enumerate() {
            if !text.feed(line, i + 1)? {
                return Err(GraphError::Parse { line: i + 1, msg: format!("unrecognized line `{}`", line.trim()) });
            }
        }
        text.finish()
    }
}

impl fmt::Display for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes: {}", self.names.join(" "))?;
        writeln!(f, "context: {}", self.context_nodes().iter().map(|&v| self.name(v)).join(" "))?;
        writeln!(f, "target: {}", self.name(self.target))?;
        for (p, c) in self.edges() {
            writeln!(f, "{}->{}", self.name(p), self.name(c))?;
        }
        Ok(())
    }
}
