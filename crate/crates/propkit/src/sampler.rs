//! Bidirectional learning-sample construction from propagation trees.
//!
//! A tree is first linearized twice — breadth-first and depth-first, siblings
//! ordered by `(timestamp, index)` — and each linearization is re-indexed by
//! discovery position, so entry `i` of a path is the triple
//! `(parent position, i, content)` with the root at position 0.
//!
//! From each path of length `L` (comments, excluding the root) the sampler
//! cuts masked sub-paths in both directions:
//!
//! * forward, for every pivot `m` in `0..=L-1`: the visible prefix is
//!   positions `0..=m`, the masked slot stands where position `m+1` would be,
//!   and the training target is the entry at `m+1`;
//! * backward, for every pivot `m` in `2..=L`: the visible context is
//!   positions `0..=m-2` plus the entry at `m`, the masked slot stands at
//!   position `m-1`, and the target is the entry at `m-1`.
//!
//! That yields `L` forward and `L-1` backward samples per path, `2(2(N-1)-1)`
//! per tree across both traversals. Each sub-path is rendered into an
//! instruction with [`render_phi1`] and exported as instruction/output JSONL
//! for fine-tuning.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::prompt::{render_masked_instruction, render_node, NodeTriple, Slot, TemplateId};
use crate::tree::{Label, PropNode, PropagationTree, TreeError};

/// Which linearization produced a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraversalKind {
    Breadth,
    Depth,
}

impl TraversalKind {
    pub const BOTH: [TraversalKind; 2] = [TraversalKind::Breadth, TraversalKind::Depth];
}

/// Masking direction along a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    /// Signed step used on the wire: forward masking is `+1`, backward `-1`.
    pub fn as_step(self) -> i8 {
        match self {
            Direction::Forward => 1,
            Direction::Backward => -1,
        }
    }
}

/// A full linearization of one tree, re-indexed by discovery position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalPath {
    pub kind: TraversalKind,
    pub entries: Vec<NodeTriple>,
}

impl TraversalPath {
    /// Number of comment entries (path length excluding the root).
    pub fn comment_len(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }
}

/// One masked sub-path: the visible slots (with the mask in place) and the
/// triple the model should recover.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSubPath {
    pub direction: Direction,
    /// The pivot `m` of the cut that produced this sub-path.
    pub pivot: usize,
    pub slots: Vec<Slot>,
    pub target: NodeTriple,
}

/// A fully rendered learning sample, ready for export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSample {
    pub sample_id: String,
    pub path_kind: TraversalKind,
    pub direction: Direction,
    pub pivot: usize,
    pub template: TemplateId,
    /// The instruction shown to the model.
    pub prompt: String,
    /// The node-JSON answer the model should produce.
    pub target: String,
}

/// Linearizes a valid tree breadth-first or depth-first (preorder), siblings
/// ordered by `(timestamp, index)`, and re-indexes entries by position.
pub fn traverse(tree: &PropagationTree, kind: TraversalKind) -> Result<TraversalPath, TreeError> {
    let child_table = tree.child_table();
    let mut order = Vec::with_capacity(tree.node_count());
    match kind {
        TraversalKind::Breadth => {
            let mut queue = std::collections::VecDeque::from([0usize]);
            while let Some(index) = queue.pop_front() {
                order.push(index);
                queue.extend(&child_table[index]);
            }
        }
        TraversalKind::Depth => {
            let mut stack = vec![0usize];
            while let Some(index) = stack.pop() {
                order.push(index);
                stack.extend(child_table[index].iter().rev());
            }
        }
    }
    if tree.nodes.is_empty() || order.len() != tree.node_count() {
        return Err(TreeError::Malformed {
            sample_id: tree.sample_id.clone(),
            detail: format!(
                "traversal reached {} of {} nodes; tree must be validated first",
                order.len(),
                tree.node_count()
            ),
        });
    }

    let mut position_of = vec![0usize; tree.node_count()];
    for (position, &index) in order.iter().enumerate() {
        position_of[index] = position;
    }
    let entries = order
        .iter()
        .enumerate()
        .map(|(position, &index)| {
            let node = &tree.nodes[index];
            NodeTriple::new(
                node.parent_index.map(|p| position_of[p]),
                position,
                node.content.clone(),
            )
        })
        .collect();
    Ok(TraversalPath { kind, entries })
}

/// Rebuilds a tree from path triples, taking positions as node indices.
///
/// The inverse of [`traverse`] up to index renumbering: the node contents and
/// the parent/child structure are exactly those of the traversed tree.
/// Timestamps and author handles are not carried by triples and come back
/// empty.
pub fn reconstruct_tree(
    entries: &[NodeTriple],
    sample_id: impl Into<String>,
    label: Label,
) -> PropagationTree {
    let nodes = entries
        .iter()
        .map(|entry| PropNode::new(entry.index, entry.parent, entry.content.clone()))
        .collect();
    PropagationTree::new(sample_id, label, nodes)
}

/// Cuts every forward and backward masked sub-path out of one traversal path.
pub fn mask_subpaths(path: &TraversalPath) -> Vec<MaskedSubPath> {
    let entries = &path.entries;
    let len = path.comment_len();
    let mut subpaths = Vec::new();
    if len == 0 {
        return subpaths;
    }
    for pivot in 0..len {
        let mut slots: Vec<Slot> = entries[..=pivot].iter().cloned().map(Slot::Node).collect();
        slots.push(Slot::Mask);
        subpaths.push(MaskedSubPath {
            direction: Direction::Forward,
            pivot,
            slots,
            target: entries[pivot + 1].clone(),
        });
    }
    for pivot in 2..=len {
        let mut slots: Vec<Slot> = entries[..=pivot - 2]
            .iter()
            .cloned()
            .map(Slot::Node)
            .collect();
        slots.push(Slot::Mask);
        slots.push(Slot::Node(entries[pivot].clone()));
        subpaths.push(MaskedSubPath {
            direction: Direction::Backward,
            pivot,
            slots,
            target: entries[pivot - 1].clone(),
        });
    }
    subpaths
}

/// Renders the instruction text for one masked sub-path.
pub fn render_phi1(subpath: &MaskedSubPath, template: TemplateId) -> String {
    render_masked_instruction(&subpath.slots, template)
}

/// Builds every learning sample for one tree: both traversals, both masking
/// directions, rendered with the given template.
pub fn build_samples(
    tree: &PropagationTree,
    template: TemplateId,
) -> Result<Vec<MaskedSample>, TreeError> {
    let mut samples = Vec::new();
    for kind in TraversalKind::BOTH {
        let path = traverse(tree, kind)?;
        for subpath in mask_subpaths(&path) {
            samples.push(MaskedSample {
                sample_id: tree.sample_id.clone(),
                path_kind: kind,
                direction: subpath.direction,
                pivot: subpath.pivot,
                template,
                prompt: render_phi1(&subpath, template),
                target: render_node(&subpath.target),
            });
        }
    }
    Ok(samples)
}

/// On-disk shape of one exported sample.
#[derive(Debug, Serialize, Deserialize)]
struct ExportRecord<'a> {
    instruction: &'a str,
    output: &'a str,
    meta: ExportMeta<'a>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExportMeta<'a> {
    sample_id: &'a str,
    path_kind: TraversalKind,
    direction: i8,
    m: usize,
}

/// Writes samples as instruction/output JSONL, sorted by
/// `(sample_id, path_kind, direction, pivot)` so identical inputs always
/// produce identical bytes.
pub fn export_samples(samples: &[MaskedSample], path: impl AsRef<Path>) -> Result<(), TreeError> {
    let mut ordered: Vec<&MaskedSample> = samples.iter().collect();
    ordered.sort_by(|a, b| {
        (&a.sample_id, a.path_kind, a.direction, a.pivot).cmp(&(
            &b.sample_id,
            b.path_kind,
            b.direction,
            b.pivot,
        ))
    });
    let mut writer = BufWriter::new(File::create(path)?);
    for sample in ordered {
        let record = ExportRecord {
            instruction: &sample.prompt,
            output: &sample.target,
            meta: ExportMeta {
                sample_id: &sample.sample_id,
                path_kind: sample.path_kind,
                direction: sample.direction.as_step(),
                m: sample.pivot,
            },
        };
        let line =
            serde_json::to_string(&record).map_err(|source| TreeError::Json { line: 0, source })?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::PropNode;

    /// 0 -> {1, 2}, 1 -> {3}; timestamps follow index order, so the breadth
    /// and depth linearizations genuinely differ.
    fn branching_tree() -> PropagationTree {
        PropagationTree::new(
            "b1",
            Label::TrueNews,
            vec![
                PropNode::new(0, None, "root news").with_timestamp(0),
                PropNode::new(1, Some(0), "left").with_timestamp(10),
                PropNode::new(2, Some(0), "right").with_timestamp(20),
                PropNode::new(3, Some(1), "left child").with_timestamp(30),
            ],
        )
    }

    fn contents(path: &TraversalPath) -> Vec<&str> {
        path.entries.iter().map(|e| e.content.as_str()).collect()
    }

    #[test]
    fn breadth_and_depth_orders_differ_as_expected() {
        let tree = branching_tree();
        let bfs = traverse(&tree, TraversalKind::Breadth).unwrap();
        let dfs = traverse(&tree, TraversalKind::Depth).unwrap();
        assert_eq!(
            contents(&bfs),
            vec!["root news", "left", "right", "left child"]
        );
        assert_eq!(
            contents(&dfs),
            vec!["root news", "left", "left child", "right"]
        );
    }

    #[test]
    fn entries_are_reindexed_by_position() {
        // Sibling order is timestamp-driven: node 3 (ts 150) visits before
        // node 1 (ts 250), so positions diverge from tree indices.
        let tree = PropagationTree::new(
            "r1",
            Label::Unlabeled,
            vec![
                PropNode::new(0, None, "root").with_timestamp(100),
                PropNode::new(1, Some(0), "late").with_timestamp(250),
                PropNode::new(2, Some(1), "nested").with_timestamp(300),
                PropNode::new(3, Some(0), "early").with_timestamp(150),
            ],
        );
        let path = traverse(&tree, TraversalKind::Breadth).unwrap();
        let triples: Vec<(Option<usize>, usize, &str)> = path
            .entries
            .iter()
            .map(|e| (e.parent, e.index, e.content.as_str()))
            .collect();
        assert_eq!(
            triples,
            vec![
                (None, 0, "root"),
                (Some(0), 1, "early"),
                (Some(0), 2, "late"),
                (Some(2), 3, "nested"),
            ]
        );
        for (position, entry) in path.entries.iter().enumerate() {
            assert_eq!(entry.index, position);
            if let Some(parent) = entry.parent {
                assert!(parent < position);
            }
        }
    }

    #[test]
    fn reconstruction_recovers_nodes_and_edges() {
        for seed in 0..20u64 {
            let tree = crate::fixture::random_tree(seed, 2 + (seed as usize * 3) % 30);
            for kind in TraversalKind::BOTH {
                let path = traverse(&tree, kind).unwrap();
                let rebuilt = reconstruct_tree(&path.entries, &tree.sample_id, tree.label);
                assert!(rebuilt.validate().is_empty());
                let mut original: Vec<_> = tree.nodes.iter().map(|n| n.content.clone()).collect();
                let mut recovered: Vec<_> =
                    rebuilt.nodes.iter().map(|n| n.content.clone()).collect();
                original.sort();
                recovered.sort();
                assert_eq!(original, recovered);
                assert_eq!(tree.content_edges(), rebuilt.content_edges());
            }
        }
    }

    #[test]
    fn subpath_counts_follow_the_length_law() {
        for node_count in 2..=12usize {
            let tree = crate::fixture::random_tree(99 + node_count as u64, node_count);
            let len = node_count - 1;
            for kind in TraversalKind::BOTH {
                let path = traverse(&tree, kind).unwrap();
                let subpaths = mask_subpaths(&path);
                let forward = subpaths
                    .iter()
                    .filter(|s| s.direction == Direction::Forward)
                    .count();
                let backward = subpaths.len() - forward;
                assert_eq!(forward, len);
                assert_eq!(backward, len.saturating_sub(1));
            }
            let samples = build_samples(&tree, TemplateId::P1).unwrap();
            assert_eq!(samples.len(), 2 * (2 * len - 1));
        }
    }

    #[test]
    fn forward_subpath_layout_masks_the_next_slot() {
        let tree = branching_tree();
        let path = traverse(&tree, TraversalKind::Breadth).unwrap();
        let subpaths = mask_subpaths(&path);
        // Shortest forward cut: root visible, mask in the next slot.
        let first = &subpaths[0];
        assert_eq!(first.direction, Direction::Forward);
        assert_eq!(first.pivot, 0);
        assert_eq!(first.slots.len(), 2);
        assert!(matches!(first.slots[0], Slot::Node(ref t) if t.index == 0));
        assert!(matches!(first.slots[1], Slot::Mask));
        assert_eq!(first.target, path.entries[1]);
    }

    #[test]
    fn backward_subpath_layout_keeps_the_later_node_visible() {
        let tree = branching_tree();
        let path = traverse(&tree, TraversalKind::Breadth).unwrap();
        let backward: Vec<_> = mask_subpaths(&path)
            .into_iter()
            .filter(|s| s.direction == Direction::Backward)
            .collect();
        // Pivot 2: context is position 0, the mask stands for position 1,
        // and position 2 stays visible after it.
        let first = &backward[0];
        assert_eq!(first.pivot, 2);
        assert_eq!(first.slots.len(), 3);
        assert!(matches!(first.slots[0], Slot::Node(ref t) if t.index == 0));
        assert!(matches!(first.slots[1], Slot::Mask));
        assert!(matches!(first.slots[2], Slot::Node(ref t) if t.index == 2));
        assert_eq!(first.target, path.entries[1]);
    }

    #[test]
    fn single_comment_tree_yields_one_forward_sample_only() {
        let tree = PropagationTree::new(
            "tiny",
            Label::Unlabeled,
            vec![
                PropNode::new(0, None, "just news"),
                PropNode::new(1, Some(0), "only reply"),
            ],
        );
        let samples = build_samples(&tree, TemplateId::P1).unwrap();
        assert_eq!(samples.len(), 2); // one per traversal
        assert!(samples.iter().all(|s| s.direction == Direction::Forward));
        assert!(samples.iter().all(|s| s.pivot == 0));
    }

    #[test]
    fn export_is_sorted_and_schema_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.jsonl");
        let mut samples = Vec::new();
        for seed in [4u64, 2] {
            let tree = crate::fixture::random_tree(seed, 5);
            samples.extend(build_samples(&tree, TemplateId::P1).unwrap());
        }
        export_samples(&samples, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let records: Vec<serde_json::Value> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(records.len(), samples.len());
        let keys: Vec<(String, String, i64, i64)> = records
            .iter()
            .map(|r| {
                (
                    r["meta"]["sample_id"].as_str().unwrap().to_string(),
                    r["meta"]["path_kind"].as_str().unwrap().to_string(),
                    -r["meta"]["direction"].as_i64().unwrap(),
                    r["meta"]["m"].as_i64().unwrap(),
                )
            })
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted, "export must be deterministically ordered");
        for record in &records {
            assert!(record["instruction"]
                .as_str()
                .unwrap()
                .starts_with("Given the propagation tree:"));
            let output: serde_json::Value =
                serde_json::from_str(record["output"].as_str().unwrap()).unwrap();
            assert!(output["node index"].is_u64());
        }
    }
}
