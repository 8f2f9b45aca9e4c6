//! Propagation-tree data model.
//!
//! A propagation tree records how a news post spreads: the root node holds
//! the news content and every other node is a comment (or repost) attached to
//! exactly one earlier node. Nodes are indexed `0..N-1` in a topological
//! order, so a parent index is always strictly smaller than the child index.
//!
//! Well-formedness is checked by [`PropagationTree::validate`], which returns
//! violation descriptors instead of failing: callers decide whether a
//! violation is fatal, repairable, or merely reportable.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors for tree construction, lookup, and (de)serialization.
#[derive(Debug, Error)]
pub enum TreeError {
    #[error("node index {index} out of range for tree with {len} nodes")]
    NodeOutOfRange { index: usize, len: usize },
    #[error("tree {sample_id} is malformed: {detail}")]
    Malformed { sample_id: String, detail: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid JSON on line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Whether a node came from the source dataset or was added by the
/// enhancement engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NodeOrigin {
    #[default]
    Real,
    Synthetic,
}

/// Veracity label of a news item. Serialized as `0` (true news), `1` (fake
/// news), or `null` (unlabeled).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Label {
    TrueNews,
    FakeNews,
    #[default]
    Unlabeled,
}

impl Label {
    /// Numeric code used on the wire: 0 = true, 1 = fake, absent = unlabeled.
    pub fn as_code(self) -> Option<u8> {
        match self {
            Label::TrueNews => Some(0),
            Label::FakeNews => Some(1),
            Label::Unlabeled => None,
        }
    }

    pub fn from_code(code: Option<u8>) -> Result<Self, String> {
        match code {
            Some(0) => Ok(Label::TrueNews),
            Some(1) => Ok(Label::FakeNews),
            None => Ok(Label::Unlabeled),
            Some(other) => Err(format!("label must be 0, 1, or null, got {other}")),
        }
    }

    pub fn is_labeled(self) -> bool {
        self != Label::Unlabeled
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::TrueNews => write!(f, "true"),
            Label::FakeNews => write!(f, "fake"),
            Label::Unlabeled => write!(f, "unlabeled"),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.as_code().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let code = Option::<u8>::deserialize(deserializer)?;
        Label::from_code(code).map_err(serde::de::Error::custom)
    }
}

/// One node of a propagation tree: the news root (`index == 0`) or a comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropNode {
    /// Position in the tree's topological order; the root is always 0.
    pub index: usize,
    /// Index of the node this one replies to; `None` only for the root.
    pub parent_index: Option<usize>,
    /// News text for the root, comment text otherwise. Never empty in a
    /// well-formed tree.
    pub content: String,
    /// Posting time as Unix seconds, when the source provides one.
    #[serde(default)]
    pub timestamp: Option<i64>,
    /// Dataset node or one produced by the enhancement engine.
    #[serde(default)]
    pub origin: NodeOrigin,
    /// Opaque author handle from the source, when available.
    #[serde(default)]
    pub author_id: Option<String>,
}

impl PropNode {
    /// A real (dataset) node with no timestamp or author.
    pub fn new(index: usize, parent_index: Option<usize>, content: impl Into<String>) -> Self {
        PropNode {
            index,
            parent_index,
            content: content.into(),
            timestamp: None,
            origin: NodeOrigin::Real,
            author_id: None,
        }
    }

    pub fn with_timestamp(mut self, timestamp: i64) -> Self {
        self.timestamp = Some(timestamp);
        self
    }

    pub fn with_author(mut self, author_id: impl Into<String>) -> Self {
        self.author_id = Some(author_id.into());
        self
    }

    pub fn synthetic(mut self) -> Self {
        self.origin = NodeOrigin::Synthetic;
        self
    }

    pub fn is_root(&self) -> bool {
        self.index == 0 && self.parent_index.is_none()
    }
}

/// Kinds of well-formedness violations reported by
/// [`PropagationTree::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// The tree has no nodes or node 0 is missing.
    MissingRoot,
    /// Node 0 carries a parent reference.
    RootHasParent,
    /// A non-root node has no parent reference.
    MissingParent,
    /// A node's stored index does not match its position in the node list,
    /// so indices are not the gapless sequence `0..N-1`.
    IndexMismatch,
    /// A parent reference is not strictly smaller than the node's own index
    /// (covers self-references, forward references, and dangling parents).
    NonTopologicalParent,
    /// A node has empty (or whitespace-only) content.
    EmptyContent,
    /// A child's timestamp precedes its parent's.
    TimestampInversion,
}

/// A single well-formedness violation. Violations are data, not errors:
/// ingestion repairs some of them and reports the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Offending node index when the violation is node-scoped.
    pub node_index: Option<usize>,
    pub detail: String,
}

impl Violation {
    fn tree(kind: ViolationKind, detail: impl Into<String>) -> Self {
        Violation {
            kind,
            node_index: None,
            detail: detail.into(),
        }
    }

    fn node(kind: ViolationKind, index: usize, detail: impl Into<String>) -> Self {
        Violation {
            kind,
            node_index: Some(index),
            detail: detail.into(),
        }
    }
}

/// A full propagation tree: one news root plus its comment cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationTree {
    /// Stable identifier of the news item within its dataset.
    pub sample_id: String,
    pub label: Label,
    /// Nodes stored in index order; `nodes[i].index == i` when well-formed.
    pub nodes: Vec<PropNode>,
}

impl PropagationTree {
    pub fn new(sample_id: impl Into<String>, label: Label, nodes: Vec<PropNode>) -> Self {
        PropagationTree {
            sample_id: sample_id.into(),
            label,
            nodes,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of comment nodes (everything but the root).
    pub fn comment_count(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn root(&self) -> Option<&PropNode> {
        self.nodes.first().filter(|n| n.is_root())
    }

    /// Comment nodes in index order.
    pub fn comments(&self) -> impl Iterator<Item = &PropNode> {
        self.nodes.iter().skip(1)
    }

    pub fn node(&self, index: usize) -> Result<&PropNode, TreeError> {
        self.nodes.get(index).ok_or(TreeError::NodeOutOfRange {
            index,
            len: self.nodes.len(),
        })
    }

    /// Checks every well-formedness rule and returns all violations found.
    ///
    /// An empty result means the tree is well-formed: a single root at index
    /// 0, gapless topological indices, non-empty content everywhere, and no
    /// child posted before its parent (when both carry timestamps).
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        if self.nodes.is_empty() {
            violations.push(Violation::tree(
                ViolationKind::MissingRoot,
                "tree has no nodes",
            ));
            return violations;
        }

        for (pos, node) in self.nodes.iter().enumerate() {
            if node.index != pos {
                violations.push(Violation::node(
                    ViolationKind::IndexMismatch,
                    node.index,
                    format!("node at position {pos} carries index {}", node.index),
                ));
            }
            if pos == 0 {
                if let Some(parent) = node.parent_index {
                    violations.push(Violation::node(
                        ViolationKind::RootHasParent,
                        node.index,
                        format!("root node references parent {parent}"),
                    ));
                }
            } else {
                match node.parent_index {
                    None => violations.push(Violation::node(
                        ViolationKind::MissingParent,
                        node.index,
                        "non-root node has no parent reference",
                    )),
                    Some(parent) if parent >= pos => violations.push(Violation::node(
                        ViolationKind::NonTopologicalParent,
                        node.index,
                        format!("parent reference {parent} is not before position {pos}"),
                    )),
                    Some(parent) => {
                        if let (Some(child_ts), Some(parent_ts)) =
                            (node.timestamp, self.nodes[parent].timestamp)
                        {
                            if child_ts < parent_ts {
                                violations.push(Violation::node(
                                    ViolationKind::TimestampInversion,
                                    node.index,
                                    format!(
                                        "timestamp {child_ts} precedes parent timestamp {parent_ts}"
                                    ),
                                ));
                            }
                        }
                    }
                }
            }
            if node.content.trim().is_empty() {
                violations.push(Violation::node(
                    ViolationKind::EmptyContent,
                    node.index,
                    "node content is empty",
                ));
            }
        }
        violations
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Sort key that orders siblings for traversal: by timestamp ascending,
    /// nodes without a timestamp after all timestamped ones, ties broken by
    /// index.
    fn order_key(&self, index: usize) -> (bool, i64, usize) {
        let node = &self.nodes[index];
        (node.timestamp.is_none(), node.timestamp.unwrap_or(0), index)
    }

    /// Children of every node, each list sorted by `(timestamp, index)`.
    ///
    /// Callers should validate first; parent references that are not
    /// strictly backward are ignored here.
    pub fn child_table(&self) -> Vec<Vec<usize>> {
        let mut table = vec![Vec::new(); self.nodes.len()];
        for (pos, node) in self.nodes.iter().enumerate() {
            if let Some(parent) = node.parent_index {
                if parent < pos {
                    table[parent].push(pos);
                }
            }
        }
        for children in &mut table {
            children.sort_by_key(|&c| self.order_key(c));
        }
        table
    }

    /// Children of one node, sorted by `(timestamp, index)`.
    pub fn children_of(&self, index: usize) -> Result<Vec<usize>, TreeError> {
        self.node(index)?;
        Ok(self
            .child_table()
            .into_iter()
            .nth(index)
            .unwrap_or_default())
    }

    /// Depth of one node; the root is at depth 0.
    pub fn depth_of(&self, index: usize) -> Result<usize, TreeError> {
        self.node(index)?;
        let mut depth = 0;
        let mut current = index;
        let mut steps = 0;
        while let Some(parent) = self.nodes[current].parent_index {
            if parent >= self.nodes.len() || steps > self.nodes.len() {
                return Err(TreeError::Malformed {
                    sample_id: self.sample_id.clone(),
                    detail: format!("parent chain from node {index} does not reach the root"),
                });
            }
            depth += 1;
            steps += 1;
            current = parent;
        }
        Ok(depth)
    }

    /// Depths of all nodes, in index order. Requires topological parent
    /// references (`validate` reports none of kind `NonTopologicalParent`).
    pub fn depths(&self) -> Result<Vec<usize>, TreeError> {
        let mut depths = vec![0usize; self.nodes.len()];
        for (pos, node) in self.nodes.iter().enumerate() {
            match node.parent_index {
                None => depths[pos] = 0,
                Some(parent) if parent < pos => depths[pos] = depths[parent] + 1,
                Some(parent) => {
                    return Err(TreeError::Malformed {
                        sample_id: self.sample_id.clone(),
                        detail: format!("node {pos} has non-topological parent {parent}"),
                    })
                }
            }
        }
        Ok(depths)
    }

    /// Histogram of undirected node degrees (parent edge plus child edges),
    /// keyed by degree.
    pub fn degree_histogram(&self) -> BTreeMap<usize, usize> {
        let mut child_counts = vec![0usize; self.nodes.len()];
        for (pos, node) in self.nodes.iter().enumerate() {
            if let Some(parent) = node.parent_index {
                if parent < pos {
                    child_counts[parent] += 1;
                }
            }
        }
        let mut histogram = BTreeMap::new();
        for (pos, node) in self.nodes.iter().enumerate() {
            let degree = child_counts[pos] + usize::from(node.parent_index.is_some());
            *histogram.entry(degree).or_insert(0) += 1;
        }
        histogram
    }

    /// Node indices in global time order: earliest timestamp first, ties by
    /// index, nodes without timestamps after all timestamped ones — except
    /// that a node never precedes its parent, whatever the timestamps say.
    ///
    /// Fails if the parent structure does not connect every node to the root.
    pub fn time_order(&self) -> Result<Vec<usize>, TreeError> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;

        if self.nodes.is_empty() {
            return Ok(Vec::new());
        }
        let child_table = self.child_table();
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((self.order_key(0), 0usize)));
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse((_, index))) = heap.pop() {
            order.push(index);
            for &child in &child_table[index] {
                heap.push(Reverse((self.order_key(child), child)));
            }
        }
        if order.len() != self.nodes.len() {
            return Err(TreeError::Malformed {
                sample_id: self.sample_id.clone(),
                detail: format!(
                    "only {} of {} nodes are reachable from the root",
                    order.len(),
                    self.nodes.len()
                ),
            });
        }
        Ok(order)
    }

    /// Edge set as `(parent_content, child_content)` pairs; used by tests and
    /// by structural comparisons that must ignore index renumbering.
    pub fn content_edges(&self) -> Vec<(String, String)> {
        let mut edges: Vec<(String, String)> = self
            .nodes
            .iter()
            .filter_map(|node| {
                node.parent_index
                    .map(|parent| (self.nodes[parent].content.clone(), node.content.clone()))
            })
            .collect();
        edges.sort();
        edges
    }
}

/// Serializes one tree as a single JSON line.
pub fn to_json_line(tree: &PropagationTree) -> serde_json::Result<String> {
    serde_json::to_string(tree)
}

/// Reads a JSON-lines file of trees. Blank lines are skipped; any malformed
/// line fails the whole read with its line number.
pub fn read_trees_jsonl(path: impl AsRef<Path>) -> Result<Vec<PropagationTree>, TreeError> {
    let reader = BufReader::new(File::open(path)?);
    let mut trees = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let tree = serde_json::from_str(&line).map_err(|source| TreeError::Json {
            line: lineno + 1,
            source,
        })?;
        trees.push(tree);
    }
    Ok(trees)
}

/// Writes trees as a JSON-lines file, one tree per line, in the given order.
pub fn write_trees_jsonl(
    path: impl AsRef<Path>,
    trees: &[PropagationTree],
) -> Result<(), TreeError> {
    let mut writer = BufWriter::new(File::create(path)?);
    for tree in trees {
        let line = to_json_line(tree).map_err(|source| TreeError::Json { line: 0, source })?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
