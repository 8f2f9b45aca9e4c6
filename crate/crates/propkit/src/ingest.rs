//! Dataset ingestion: raw source layouts in, canonical trees out.
//!
//! Three source formats are supported:
//!
//! * `pheme_dir` — one directory per thread, with `source-tweets/<id>.json`,
//!   `reactions/<id>.json`, and an optional `annotation.json` carrying the
//!   veracity label;
//! * `weibo_json` — one JSON array file (or a directory of JSON files) of
//!   cascade objects, each with a root `text` and a flat `reposts` list whose
//!   entries name their parent by id (a missing/null parent means the root);
//! * `canonical_jsonl` — the toolkit's own one-tree-per-line format, read
//!   leniently so a corrupt line never aborts the batch.
//!
//! Ingestion never fails on bad records: it drops them with a reason, repairs
//! what can be repaired (timestamps posted before the parent are clamped to
//! the parent's time), and accounts for everything in an [`IngestReport`].
//! Node indices are assigned in arrival-time order, parents always first, so
//! the emitted trees are canonical and pass validation. The whole process is
//! deterministic: identical input bytes yield identical output bytes.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::tree::{Label, PropNode, PropagationTree};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    Config(String),
    #[error("split requires at least {required} trees, got {actual}")]
    TooFewTrees { required: usize, actual: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Supported raw dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    PhemeDir,
    WeiboJson,
    CanonicalJsonl,
}

impl std::str::FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pheme_dir" => Ok(SourceFormat::PhemeDir),
            "weibo_json" => Ok(SourceFormat::WeiboJson),
            "canonical_jsonl" => Ok(SourceFormat::CanonicalJsonl),
            other => Err(format!(
                "unknown format '{other}', expected pheme_dir, weibo_json, or canonical_jsonl"
            )),
        }
    }
}

/// Describes a dataset and how to split it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub source_format: SourceFormat,
    #[serde(default = "default_split_seed")]
    pub split_seed: u64,
    /// Train/validation/test fractions; positive and summing to 1.
    #[serde(default = "default_split_ratio")]
    pub split_ratio: (f64, f64, f64),
}

fn default_split_seed() -> u64 {
    13
}

fn default_split_ratio() -> (f64, f64, f64) {
    (0.7, 0.1, 0.2)
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, source_format: SourceFormat) -> Self {
        DatasetManifest {
            name: name.into(),
            source_format,
            split_seed: default_split_seed(),
            split_ratio: default_split_ratio(),
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let (train, val, test) = self.split_ratio;
        if !(train > 0.0 && val > 0.0 && test > 0.0) {
            return Err(IngestError::Config(format!(
                "split ratio components must be positive, got ({train}, {val}, {test})"
            )));
        }
        if ((train + val + test) - 1.0).abs() > 1e-9 {
            return Err(IngestError::Config(format!(
                "split ratio must sum to 1, got {}",
                train + val + test
            )));
        }
        Ok(())
    }
}

/// A record that ingestion could not keep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedRecord {
    pub record_id: String,
    pub reason: String,
}

/// A violation ingestion repaired instead of dropping. `node_index` is set
/// when the repair is addressable to a node of the emitted tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairedRecord {
    pub sample_id: String,
    pub node_index: Option<usize>,
    pub action: String,
}

/// Full accounting of one ingestion run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub dataset: String,
    pub format: SourceFormat,
    pub records_seen: usize,
    pub trees_emitted: usize,
    pub nodes_emitted: usize,
    pub dropped: Vec<DroppedRecord>,
    pub repaired: Vec<RepairedRecord>,
}

impl IngestReport {
    fn new(dataset: &str, format: SourceFormat) -> Self {
        IngestReport {
            dataset: dataset.to_string(),
            format,
            records_seen: 0,
            trees_emitted: 0,
            nodes_emitted: 0,
            dropped: Vec::new(),
            repaired: Vec::new(),
        }
    }

    fn drop_record(&mut self, record_id: impl Into<String>, reason: impl Into<String>) {
        self.dropped.push(DroppedRecord {
            record_id: record_id.into(),
            reason: reason.into(),
        });
    }
}

/// A source record before tree assembly.
#[derive(Debug, Clone)]
struct RawNode {
    id: String,
    parent: Option<String>,
    content: String,
    timestamp: Option<i64>,
    author: Option<String>,
    record_id: String,
}

fn value_to_id(value: &Value) -> Option<String> {
    match value {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Parses a `created_at`-style field: Unix seconds or the classic Twitter
/// timestamp string. Returns the timestamp and whether the field was present
/// but unparseable.
fn parse_time(value: Option<&Value>) -> (Option<i64>, bool) {
    match value {
        None | Some(Value::Null) => (None, false),
        Some(Value::Number(n)) => (n.as_i64(), n.as_i64().is_none()),
        Some(Value::String(s)) => {
            match chrono::DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y") {
                Ok(dt) => (Some(dt.timestamp()), false),
                Err(_) => match s.parse::<i64>() {
                    Ok(ts) => (Some(ts), false),
                    Err(_) => (None, true),
                },
            }
        }
        Some(_) => (None, true),
    }
}

/// Builds one canonical tree from a root record and its comment records.
///
/// Indices are assigned by a parent-first arrival-time walk: a node becomes
/// eligible once its parent is placed, and eligible nodes are placed earliest
/// timestamp first (missing timestamps last, ties by source id). Comments
/// whose parent never gets placed — unknown ids, dropped parents, reference
/// cycles — are dropped as orphans. Timestamps earlier than the parent's are
/// clamped to the parent's and reported as repairs.
fn assemble_tree(
    sample_id: &str,
    label: Label,
    root: RawNode,
    comments: Vec<RawNode>,
    report: &mut IngestReport,
) -> Option<PropagationTree> {
    if root.content.trim().is_empty() {
        report.drop_record(&root.record_id, "empty root content; tree dropped");
        return None;
    }

    let mut by_id: HashMap<String, RawNode> = HashMap::new();
    let mut insertion_order: Vec<String> = Vec::new();
    for comment in comments {
        if comment.id == root.id || by_id.contains_key(&comment.id) {
            report.drop_record(&comment.record_id, format!("duplicate id {}", comment.id));
            continue;
        }
        if comment.content.trim().is_empty() {
            report.drop_record(&comment.record_id, "empty content");
            continue;
        }
        if comment.parent.is_none() {
            report.drop_record(&comment.record_id, "missing parent reference");
            continue;
        }
        insertion_order.push(comment.id.clone());
        by_id.insert(comment.id.clone(), comment);
    }

    let mut children: HashMap<&str, Vec<&str>> = HashMap::new();
    for id in &insertion_order {
        let parent = by_id[id].parent.as_deref().expect("checked above");
        children.entry(parent).or_default().push(id);
    }

    // Parent-first placement, earliest effective timestamp first. The heap
    // key uses the timestamp *after* clamping so a clamped child competes at
    // its repaired time; the repair itself is recorded at pop time, once the
    // node's final index is known.
    type HeapEntry = Reverse<((bool, i64, String), usize, Option<i64>)>;
    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::new();

    let mut nodes: Vec<PropNode> = vec![PropNode {
        index: 0,
        parent_index: None,
        content: root.content.clone(),
        timestamp: root.timestamp,
        origin: Default::default(),
        author_id: root.author.clone(),
    }];
    let mut placed: HashSet<String> = HashSet::from([root.id.clone()]);

    let push_children = |heap: &mut BinaryHeap<HeapEntry>,
                         parent_id: &str,
                         parent_index: usize,
                         parent_ts: Option<i64>| {
        for &child_id in children.get(parent_id).map(Vec::as_slice).unwrap_or(&[]) {
            let child = &by_id[child_id];
            let effective_ts = match (child.timestamp, parent_ts) {
                (Some(child_ts), Some(parent_ts)) if child_ts < parent_ts => Some(parent_ts),
                (child_ts, _) => child_ts,
            };
            heap.push(Reverse((
                (
                    effective_ts.is_none(),
                    effective_ts.unwrap_or(0),
                    child_id.to_string(),
                ),
                parent_index,
                effective_ts,
            )));
        }
    };

    push_children(&mut heap, &root.id, 0, root.timestamp);
    while let Some(Reverse(((_, _, id), parent_index, effective_ts))) = heap.pop() {
        let raw = &by_id[&id];
        let index = nodes.len();
        if raw.timestamp != effective_ts {
            report.repaired.push(RepairedRecord {
                sample_id: sample_id.to_string(),
                node_index: Some(index),
                action: format!(
                    "timestamp {} clamped to parent timestamp {}",
                    raw.timestamp.unwrap_or_default(),
                    effective_ts.unwrap_or_default()
                ),
            });
        }
        nodes.push(PropNode {
            index,
            parent_index: Some(parent_index),
            content: raw.content.clone(),
            timestamp: effective_ts,
            origin: Default::default(),
            author_id: raw.author.clone(),
        });
        placed.insert(id.clone());
        push_children(&mut heap, &id, index, effective_ts);
    }

    let mut orphans: Vec<&String> = insertion_order
        .iter()
        .filter(|id| !placed.contains(*id))
        .collect();
    orphans.sort();
    for id in orphans {
        report.drop_record(&by_id[id].record_id, "orphan node");
    }

    let tree = PropagationTree::new(sample_id, label, nodes);
    debug_assert!(
        tree.validate().is_empty(),
        "assembled trees must be canonical"
    );
    report.nodes_emitted += tree.node_count();
    Some(tree)
}

fn label_from_annotation(value: &Value) -> Label {
    let from_str = |s: &str| match s.to_ascii_lowercase().as_str() {
        "0" | "true" | "real" | "nonrumour" | "non-rumor" => Some(Label::TrueNews),
        "1" | "false" | "fake" | "rumour" | "rumor" => Some(Label::FakeNews),
        _ => None,
    };
    if let Some(label) = value.get("label") {
        if let Some(code) = label.as_u64() {
            if let Ok(parsed) = Label::from_code(Some(code.min(255) as u8)) {
                return parsed;
            }
        }
        if let Some(s) = label.as_str() {
            if let Some(parsed) = from_str(s) {
                return parsed;
            }
        }
    }
    if let Some(veracity) = value.get("veracity").and_then(|v| v.as_str()) {
        if let Some(parsed) = from_str(veracity) {
            return parsed;
        }
    }
    Label::Unlabeled
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    Ok(entries)
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

/// Parses one tweet-style record. The second return flags a `created_at`
/// that was present but unreadable (the timestamp is treated as missing).
fn parse_tweet(value: &Value, record_id: &str) -> Result<(RawNode, bool), String> {
    let object = value.as_object().ok_or("record is not a JSON object")?;
    let id = object.get("id").and_then(value_to_id).ok_or("missing id")?;
    let content = object
        .get("text")
        .and_then(|v| v.as_str())
        .ok_or("missing text")?
        .to_string();
    let parent = object.get("in_reply_to_status_id").and_then(value_to_id);
    let (timestamp, unparseable) = parse_time(object.get("created_at"));
    let author = value.pointer("/user/id").and_then(value_to_id);
    Ok((
        RawNode {
            id,
            parent,
            content,
            timestamp,
            author,
            record_id: record_id.to_string(),
        },
        unparseable,
    ))
}

fn ingest_pheme_dir(
    path: &Path,
    report: &mut IngestReport,
) -> Result<Vec<PropagationTree>, IngestError> {
    let mut trees = Vec::new();
    for thread_dir in sorted_entries(path)? {
        if !thread_dir.is_dir() {
            continue;
        }
        let thread = thread_dir
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_default();
        if thread.starts_with('.') {
            continue;
        }

        let label = match read_json(&thread_dir.join("annotation.json")) {
            Ok(value) => label_from_annotation(&value),
            Err(_) => Label::Unlabeled,
        };

        // Exactly one source tweet is expected; extras are dropped.
        let source_dir = thread_dir.join("source-tweets");
        let mut sources = match sorted_entries(&source_dir) {
            Ok(entries) => entries,
            Err(_) => {
                report.drop_record(&thread, "missing source tweet; tree dropped");
                continue;
            }
        };
        sources.retain(|p| p.extension().map(|e| e == "json").unwrap_or(false));
        if sources.is_empty() {
            report.drop_record(&thread, "missing source tweet; tree dropped");
            continue;
        }
        for extra in &sources[1..] {
            report.records_seen += 1;
            report.drop_record(
                format!(
                    "{thread}/{}",
                    extra.file_name().unwrap_or_default().to_string_lossy()
                ),
                "extra source tweet",
            );
        }

        report.records_seen += 1;
        let root_record_id = format!(
            "{thread}/{}",
            sources[0].file_name().unwrap_or_default().to_string_lossy()
        );
        let note_bad_date = |report: &mut IngestReport, record_id: &str| {
            report.repaired.push(RepairedRecord {
                sample_id: thread.clone(),
                node_index: None,
                action: format!("unparseable created_at ignored ({record_id})"),
            });
        };
        let root = match read_json(&sources[0]).and_then(|v| parse_tweet(&v, &root_record_id)) {
            Ok((mut root, bad_date)) => {
                if bad_date {
                    note_bad_date(report, &root_record_id);
                }
                root.parent = None;
                root
            }
            Err(reason) => {
                report.drop_record(
                    &root_record_id,
                    format!("unparseable record: {reason}; tree dropped"),
                );
                continue;
            }
        };

        let mut comments = Vec::new();
        if let Ok(reaction_files) = sorted_entries(&thread_dir.join("reactions")) {
            for file in reaction_files {
                if file.extension().map(|e| e != "json").unwrap_or(true) {
                    continue;
                }
                report.records_seen += 1;
                let record_id = format!(
                    "{thread}/{}",
                    file.file_name().unwrap_or_default().to_string_lossy()
                );
                match read_json(&file).and_then(|v| parse_tweet(&v, &record_id)) {
                    Ok((node, bad_date)) => {
                        if bad_date {
                            note_bad_date(report, &record_id);
                        }
                        comments.push(node);
                    }
                    Err(reason) => {
                        report.drop_record(&record_id, format!("unparseable record: {reason}"));
                    }
                }
            }
        }

        if let Some(tree) = assemble_tree(&thread, label, root, comments, report) {
            trees.push(tree);
        }
    }
    Ok(trees)
}

/// Parses one cascade object of the Weibo-style layout.
fn parse_cascade(
    value: &Value,
    fallback_id: &str,
    report: &mut IngestReport,
) -> Option<PropagationTree> {
    let object = match value.as_object() {
        Some(o) => o,
        None => {
            report.records_seen += 1;
            report.drop_record(fallback_id, "cascade is not a JSON object");
            return None;
        }
    };
    let cascade_id = object
        .get("id")
        .and_then(value_to_id)
        .unwrap_or_else(|| fallback_id.to_string());

    let label = if let Some(rumor) = object.get("rumor").and_then(|v| v.as_bool()) {
        if rumor {
            Label::FakeNews
        } else {
            Label::TrueNews
        }
    } else {
        label_from_annotation(value)
    };

    report.records_seen += 1;
    let content = match object.get("text").and_then(|v| v.as_str()) {
        Some(text) => text.to_string(),
        None => {
            report.drop_record(
                &cascade_id,
                "unparseable record: missing text; tree dropped",
            );
            return None;
        }
    };
    let (timestamp, _) = parse_time(object.get("time"));
    let root = RawNode {
        id: format!("root:{cascade_id}"),
        parent: None,
        content,
        timestamp,
        author: object.get("user").and_then(value_to_id),
        record_id: cascade_id.clone(),
    };
    let root_id = root.id.clone();

    let mut comments = Vec::new();
    for (position, repost) in object
        .get("reposts")
        .and_then(|v| v.as_array())
        .map(Vec::as_slice)
        .unwrap_or(&[])
        .iter()
        .enumerate()
    {
        report.records_seen += 1;
        let record_id = format!("{cascade_id}/repost-{position}");
        let repost_obj = match repost.as_object() {
            Some(o) => o,
            None => {
                report.drop_record(&record_id, "unparseable record: repost is not an object");
                continue;
            }
        };
        let id = repost_obj
            .get("id")
            .and_then(value_to_id)
            .unwrap_or_else(|| format!("repost:{position}"));
        let content = match repost_obj.get("text").and_then(|v| v.as_str()) {
            Some(text) => text.to_string(),
            None => {
                report.drop_record(&record_id, "unparseable record: missing text");
                continue;
            }
        };
        // A null or absent parent means a direct reply to the news root.
        let parent = match repost_obj.get("parent") {
            None | Some(Value::Null) => Some(root_id.clone()),
            Some(v) => value_to_id(v),
        };
        let (timestamp, _) = parse_time(repost_obj.get("time"));
        comments.push(RawNode {
            id,
            parent,
            content,
            timestamp,
            author: repost_obj.get("user").and_then(value_to_id),
            record_id,
        });
    }

    assemble_tree(&cascade_id, label, root, comments, report)
}

fn ingest_weibo_json(
    path: &Path,
    report: &mut IngestReport,
) -> Result<Vec<PropagationTree>, IngestError> {
    let mut trees = Vec::new();
    if path.is_dir() {
        for file in sorted_entries(path)? {
            if file.extension().map(|e| e != "json").unwrap_or(true) {
                continue;
            }
            let fallback = file
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_default();
            match read_json(&file) {
                Ok(value) => trees.extend(parse_cascade(&value, &fallback, report)),
                Err(reason) => {
                    report.records_seen += 1;
                    report.drop_record(&fallback, format!("unparseable record: {reason}"));
                }
            }
        }
    } else {
        let value = read_json(path).map_err(|reason| {
            IngestError::Config(format!("cannot read {}: {reason}", path.display()))
        })?;
        let cascades = value
            .as_array()
            .cloned()
            .unwrap_or_else(|| vec![value.clone()]);
        for (position, cascade) in cascades.iter().enumerate() {
            trees.extend(parse_cascade(
                cascade,
                &format!("cascade-{position}"),
                report,
            ));
        }
    }
    Ok(trees)
}

/// Reads canonical JSONL leniently: a malformed line is dropped with its line
/// number, valid trees are re-checked, timestamp inversions are clamped, and
/// trees with any other violation are dropped whole.
fn ingest_canonical_jsonl(
    path: &Path,
    report: &mut IngestReport,
) -> Result<Vec<PropagationTree>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut trees = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        report.records_seen += 1;
        let mut tree: PropagationTree = match serde_json::from_str(line) {
            Ok(tree) => tree,
            Err(reason) => {
                report.drop_record(
                    format!("line {}", lineno + 1),
                    format!("unparseable record: {reason}"),
                );
                continue;
            }
        };

        // Clamp inversions (parents first, so clamps cascade correctly).
        for index in 1..tree.nodes.len() {
            let parent = match tree.nodes[index].parent_index {
                Some(parent) if parent < index => parent,
                _ => continue,
            };
            if let (Some(child_ts), Some(parent_ts)) =
                (tree.nodes[index].timestamp, tree.nodes[parent].timestamp)
            {
                if child_ts < parent_ts {
                    tree.nodes[index].timestamp = Some(parent_ts);
                    report.repaired.push(RepairedRecord {
                        sample_id: tree.sample_id.clone(),
                        node_index: Some(index),
                        action: format!(
                            "timestamp {child_ts} clamped to parent timestamp {parent_ts}"
                        ),
                    });
                }
            }
        }

        let violations = tree.validate();
        if violations.is_empty() {
            report.nodes_emitted += tree.node_count();
            trees.push(tree);
        } else {
            let kinds: Vec<String> = violations.iter().map(|v| format!("{:?}", v.kind)).collect();
            report.drop_record(
                tree.sample_id.clone(),
                format!("fails validation: {}", kinds.join(", ")),
            );
        }
    }
    Ok(trees)
}

/// Ingests one dataset. Returns the canonical trees (sorted by sample id)
/// and the full accounting report.
pub fn ingest(
    path: &Path,
    manifest: &DatasetManifest,
) -> Result<(Vec<PropagationTree>, IngestReport), IngestError> {
    manifest.validate()?;
    let mut report = IngestReport::new(&manifest.name, manifest.source_format);
    let mut trees = match manifest.source_format {
        SourceFormat::PhemeDir => ingest_pheme_dir(path, &mut report)?,
        SourceFormat::WeiboJson => ingest_weibo_json(path, &mut report)?,
        SourceFormat::CanonicalJsonl => ingest_canonical_jsonl(path, &mut report)?,
    };

    // Sample ids must be unique across the batch; keep the first occurrence.
    let mut seen: HashSet<String> = HashSet::new();
    let mut kept = Vec::with_capacity(trees.len());
    for tree in trees.drain(..) {
        if seen.insert(tree.sample_id.clone()) {
            kept.push(tree);
        } else {
            report.nodes_emitted -= tree.node_count();
            report.drop_record(tree.sample_id.clone(), "duplicate sample id");
        }
    }
    kept.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    report.trees_emitted = kept.len();
    Ok((kept, report))
}

/// The three partitions produced by [`split`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSets {
    pub train: Vec<PropagationTree>,
    pub val: Vec<PropagationTree>,
    pub test: Vec<PropagationTree>,
}

/// Deterministically partitions trees by shuffled sample id.
///
/// Trees are sorted by sample id neutralizing input order, shuffled with a
/// seeded generator, and cut into train/val/test. Partition sizes are the
/// floors of `ratio * N` with the remainder going to train. Requires at
/// least 10 trees.
pub fn split(
    trees: &[PropagationTree],
    manifest: &DatasetManifest,
) -> Result<SplitSets, IngestError> {
    manifest.validate()?;
    let n = trees.len();
    if n < 10 {
        return Err(IngestError::TooFewTrees {
            required: 10,
            actual: n,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| trees[a].sample_id.cmp(&trees[b].sample_id));

    // Fisher-Yates with a pinned generator, so the shuffle never depends on
    // library internals changing underneath us.
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.split_seed);
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }

    let (train_ratio, val_ratio, _) = manifest.split_ratio;
    let n_train = (train_ratio * n as f64).floor() as usize;
    let n_val = (val_ratio * n as f64).floor() as usize;
    let n_test = (manifest.split_ratio.2 * n as f64).floor() as usize;
    let remainder = n - (n_train + n_val + n_test);
    let n_train = n_train + remainder;

    let pick = |range: std::ops::Range<usize>| -> Vec<PropagationTree> {
        order[range].iter().map(|&i| trees[i].clone()).collect()
    };
    Ok(SplitSets {
        train: pick(0..n_train),
        val: pick(n_train..n_train + n_val),
        test: pick(n_train + n_val..n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_json(path: &Path, value: &Value) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    }

    fn tweet(id: u64, text: &str, created_at: Value, reply_to: Option<u64>) -> Value {
        serde_json::json!({
            "id": id,
            "text": text,
            "created_at": created_at,
            "in_reply_to_status_id": reply_to,
            "user": {"id": format!("u{id}")},
        })
    }

    fn build_pheme_thread(root: &Path, thread: &str, label: &str) {
        let dir = root.join(thread);
        write_json(
            &dir.join("annotation.json"),
            &serde_json::json!({"veracity": label}),
        );
        write_json(
            &dir.join("source-tweets/100.json"),
            &tweet(100, "news claim spreading fast", Value::from(1000), None),
        );
        write_json(
            &dir.join("reactions/101.json"),
            &tweet(101, "this is suspicious", Value::from(1010), Some(100)),
        );
        write_json(
            &dir.join("reactions/102.json"),
            // Timestamp before the parent: must be clamped.
            &tweet(102, "replying to the reply", Value::from(900), Some(101)),
        );
        write_json(
            &dir.join("reactions/103.json"),
            // Orphan: parent id 999 never exists.
            &tweet(103, "detached comment", Value::from(1050), Some(999)),
        );
    }

    #[test]
    fn pheme_ingestion_assembles_repairs_and_drops() {
        let dir = tempfile::tempdir().unwrap();
        build_pheme_thread(dir.path(), "thread-a", "false");
        let manifest = DatasetManifest::new("unit", SourceFormat::PhemeDir);
        let (trees, report) = ingest(dir.path(), &manifest).unwrap();

        assert_eq!(trees.len(), 1);
        let tree = &trees[0];
        assert_eq!(tree.sample_id, "thread-a");
        assert_eq!(tree.label, Label::FakeNews);
        assert_eq!(tree.node_count(), 3); // root + 2 kept reactions
        assert!(tree.validate().is_empty());
        // The inverted timestamp was clamped to its parent's.
        assert_eq!(tree.nodes[2].timestamp, Some(1010));

        assert_eq!(report.records_seen, 4);
        assert_eq!(report.trees_emitted, 1);
        assert_eq!(report.nodes_emitted, 3);
        assert_eq!(report.dropped.len(), 1);
        assert!(report.dropped[0].reason.contains("orphan"));
        assert_eq!(report.repaired.len(), 1);
        assert!(report.repaired[0].action.contains("clamped"));
    }

    #[test]
    fn pheme_ingestion_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        build_pheme_thread(dir.path(), "thread-a", "true");
        build_pheme_thread(dir.path(), "thread-b", "false");
        let manifest = DatasetManifest::new("unit", SourceFormat::PhemeDir);
        let (trees1, report1) = ingest(dir.path(), &manifest).unwrap();
        let (trees2, report2) = ingest(dir.path(), &manifest).unwrap();
        assert_eq!(trees1, trees2);
        assert_eq!(report1, report2);
        assert_eq!(trees1[0].sample_id, "thread-a");
        assert_eq!(trees1[1].sample_id, "thread-b");
    }

    #[test]
    fn twitter_style_timestamps_parse() {
        let (ts, bad) = parse_time(Some(&Value::from("Wed Jan 07 11:14:08 +0000 2015")));
        assert_eq!(ts, Some(1420629248));
        assert!(!bad);
        let (ts, bad) = parse_time(Some(&Value::from("not a date")));
        assert_eq!(ts, None);
        assert!(bad);
    }

    #[test]
    fn weibo_cascades_attach_reposts_and_drop_orphans() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cascades.json");
        let value = serde_json::json!([
            {
                "id": "w1",
                "rumor": true,
                "text": "weibo news item",
                "time": 5000,
                "reposts": [
                    {"id": "r1", "parent": null, "text": "direct reply", "time": 5100},
                    {"id": "r2", "parent": "r1", "text": "nested reply", "time": 5200},
                    {"id": "r3", "parent": "missing", "text": "orphan reply", "time": 5300},
                ],
            },
            {
                "id": "w2",
                "label": 0,
                "text": "calm news item",
                "time": 6000,
                "reposts": [],
            },
        ]);
        fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();

        let manifest = DatasetManifest::new("unit", SourceFormat::WeiboJson);
        let (trees, report) = ingest(&path, &manifest).unwrap();
        assert_eq!(trees.len(), 2);
        assert_eq!(trees[0].sample_id, "w1");
        assert_eq!(trees[0].label, Label::FakeNews);
        assert_eq!(trees[0].node_count(), 3);
        assert_eq!(trees[1].label, Label::TrueNews);
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].reason, "orphan node");
        assert_eq!(report.records_seen, 5);
    }

    #[test]
    fn canonical_ingestion_survives_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trees.jsonl");
        let good = crate::fixture::random_tree(1, 5);
        let mut inverted = crate::fixture::random_tree(2, 4);
        inverted.sample_id = "inverted".into();
        inverted.nodes[2].timestamp = Some(0); // before its parent
        let mut lines = vec![
            crate::tree::to_json_line(&good).unwrap(),
            "{not valid json".to_string(),
            crate::tree::to_json_line(&inverted).unwrap(),
        ];
        // A structurally broken tree: non-root node without a parent.
        let mut broken = crate::fixture::random_tree(3, 3);
        broken.sample_id = "broken".into();
        broken.nodes[1].parent_index = None;
        lines.push(crate::tree::to_json_line(&broken).unwrap());
        fs::write(&path, lines.join("\n")).unwrap();

        let manifest = DatasetManifest::new("unit", SourceFormat::CanonicalJsonl);
        let (trees, report) = ingest(&path, &manifest).unwrap();
        assert_eq!(trees.len(), 2);
        assert!(trees.iter().all(|t| t.validate().is_empty()));
        assert_eq!(report.records_seen, 4);
        assert_eq!(report.dropped.len(), 2);
        assert!(report.dropped[0].record_id.contains("line 2"));
        assert_eq!(report.dropped[1].record_id, "broken");
        assert_eq!(report.repaired.len(), 1);
        assert_eq!(report.repaired[0].sample_id, "inverted");
    }

    #[test]
    fn canonical_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trees.jsonl");
        let trees = crate::fixture::random_trees(21, 12, 2, 20);
        crate::tree::write_trees_jsonl(&path, &trees).unwrap();
        let manifest = DatasetManifest::new("unit", SourceFormat::CanonicalJsonl);
        let (read_back, report) = ingest(&path, &manifest).unwrap();
        let mut expected = trees.clone();
        expected.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        assert_eq!(read_back, expected);
        assert!(report.dropped.is_empty());
        assert!(report.repaired.is_empty());
    }

    #[test]
    fn split_sizes_follow_the_floor_law() {
        let manifest = DatasetManifest::new("unit", SourceFormat::CanonicalJsonl);
        for (n, expected) in [(10usize, (7, 1, 2)), (100, (70, 10, 20)), (37, (27, 3, 7))] {
            let trees = crate::fixture::random_trees(50 + n as u64, n, 2, 6);
            let sets = split(&trees, &manifest).unwrap();
            assert_eq!(
                (sets.train.len(), sets.val.len(), sets.test.len()),
                expected,
                "n = {n}"
            );
            // Partitions are disjoint and cover everything.
            let mut ids: Vec<&str> = sets
                .train
                .iter()
                .chain(&sets.val)
                .chain(&sets.test)
                .map(|t| t.sample_id.as_str())
                .collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), n);
        }
    }

    #[test]
    fn split_is_seed_deterministic_and_order_insensitive() {
        let manifest = DatasetManifest::new("unit", SourceFormat::CanonicalJsonl);
        let trees = crate::fixture::random_trees(60, 20, 2, 8);
        let mut reversed = trees.clone();
        reversed.reverse();
        let a = split(&trees, &manifest).unwrap();
        let b = split(&reversed, &manifest).unwrap();
        assert_eq!(a, b);

        let other_seed = DatasetManifest {
            split_seed: 14,
            ..manifest
        };
        let c = split(&trees, &other_seed).unwrap();
        assert_ne!(a, c, "different seeds should give different shuffles");
    }

    #[test]
    fn split_rejects_small_sets_and_bad_ratios() {
        let manifest = DatasetManifest::new("unit", SourceFormat::CanonicalJsonl);
        let trees = crate::fixture::random_trees(61, 9, 2, 4);
        assert!(matches!(
            split(&trees, &manifest),
            Err(IngestError::TooFewTrees { .. })
        ));
        let bad = DatasetManifest {
            split_ratio: (0.8, 0.1, 0.2),
            ..manifest
        };
        let trees = crate::fixture::random_trees(62, 12, 2, 4);
        assert!(matches!(split(&trees, &bad), Err(IngestError::Config(_))));
    }
}
