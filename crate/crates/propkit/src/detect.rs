//! Fake-news detection harness.
//!
//! The harness turns trees into small fixed-size feature vectors, trains a
//! self-contained logistic-regression baseline, and evaluates any
//! [`Detector`] — the baseline, a subprocess speaking line-delimited JSON, or
//! an HTTP service — with accuracy, precision/recall/F1, macro-F1, a
//! tie-aware AUC, and a confusion matrix. [`truncate_early`] rebuilds the
//! early snapshot of a tree for the early-detection scenario. Everything is
//! deterministic: training uses zero initialization and full-batch gradient
//! descent, and no randomness enters evaluation.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    max_breadth, max_depth, semantic_homogeneity, structural_entropy, Embedder, HashedBowEmbedder,
    MetricsError,
};
use crate::tree::PropagationTree;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("training error: {0}")]
    Training(String),
    #[error("external detector error: {0}")]
    Adapter(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Features

pub const FEATURE_NAMES: [&str; 8] = [
    "node_count",
    "max_depth",
    "max_breadth",
    "structural_entropy",
    "mean_branching",
    "leaf_fraction",
    "mean_content_length",
    "semantic_homogeneity",
];

/// Extracts the eight-dimensional feature vector used by the baseline.
/// Semantic homogeneity contributes 0 when undefined (fewer than two
/// comments).
pub fn extract_features(
    tree: &PropagationTree,
    embedder: &dyn Embedder,
) -> Result<Vec<f64>, DetectError> {
    let n = tree.node_count();
    let child_counts: Vec<usize> = {
        let mut counts = vec![0usize; n];
        for node in &tree.nodes {
            if let Some(parent) = node.parent_index {
                if parent < n {
                    counts[parent] += 1;
                }
            }
        }
        counts
    };
    let internal: Vec<usize> = child_counts.iter().copied().filter(|&c| c > 0).collect();
    let mean_branching = if internal.is_empty() {
        0.0
    } else {
        internal.iter().sum::<usize>() as f64 / internal.len() as f64
    };
    let leaf_fraction = child_counts.iter().filter(|&&c| c == 0).count() as f64 / n.max(1) as f64;
    let mean_content_length = tree
        .nodes
        .iter()
        .map(|node| node.content.chars().count() as f64)
        .sum::<f64>()
        / n.max(1) as f64;
    let homogeneity = semantic_homogeneity(tree, embedder)?.unwrap_or(0.0);

    Ok(vec![
        n as f64,
        max_depth(tree) as f64,
        max_breadth(tree) as f64,
        structural_entropy(tree),
        mean_branching,
        leaf_fraction,
        mean_content_length,
        homogeneity,
    ])
}

// ---------------------------------------------------------------------------
// Standardization and the logistic baseline

/// Per-feature z-scoring fit on the training set. Features with zero
/// variance carry no signal and are dropped entirely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Indices of the features that survived (positive variance).
    pub kept: Vec<usize>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, DetectError> {
        let width = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| DetectError::Training("empty feature matrix".into()))?;
        let n = rows.len() as f64;
        let mut means = vec![0.0; width];
        for row in rows {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut sds = vec![0.0; width];
        for row in rows {
            for ((s, v), m) in sds.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut sds {
            *s = (*s / n).sqrt();
        }
        let kept = (0..width).filter(|&j| sds[j] > 0.0).collect::<Vec<_>>();
        if kept.is_empty() {
            return Err(DetectError::Training(
                "all features have zero variance".into(),
            ));
        }
        Ok(Standardizer { means, sds, kept })
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        self.kept
            .iter()
            .map(|&j| (row[j] - self.means[j]) / self.sds[j])
            .collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Full-batch gradient descent on the logistic loss: zero-initialized
/// weights, mean gradient, fixed epoch count and step size. Returns
/// `[intercept, w_1, ..., w_d]`.
fn train_logistic(rows: &[Vec<f64>], targets: &[f64], epochs: usize, step: f64) -> Vec<f64> {
    let d = rows.first().map(Vec::len).unwrap_or(0);
    let n = rows.len() as f64;
    let mut weights = vec![0.0; d + 1];
    for _ in 0..epochs {
        let mut gradient = vec![0.0; d + 1];
        for (row, &target) in rows.iter().zip(targets) {
            let z = weights[0]
                + row
                    .iter()
                    .zip(&weights[1..])
                    .map(|(x, w)| x * w)
                    .sum::<f64>();
            let error = sigmoid(z) - target;
            gradient[0] += error;
            for (g, x) in gradient[1..].iter_mut().zip(row) {
                *g += error * x;
            }
        }
        for (w, g) in weights.iter_mut().zip(&gradient) {
            *w -= step * g / n;
        }
    }
    weights
}

/// A detector's verdict on one tree: hard label (1 = fake) plus a score
/// where higher means more likely fake.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    pub score: f64,
}

/// Anything that can judge a propagation tree.
pub trait Detector: Sync {
    fn name(&self) -> &str;

    fn predict(&self, tree: &PropagationTree) -> Result<Prediction, DetectError>;

    /// Batch hook so adapters can amortize process or connection setup; the
    /// default just maps [`Detector::predict`].
    fn predict_batch(&self, trees: &[&PropagationTree]) -> Result<Vec<Prediction>, DetectError> {
        trees.iter().map(|tree| self.predict(tree)).collect()
    }
}

const TRAIN_EPOCHS: usize = 500;
const TRAIN_STEP: f64 = 0.1;

/// The built-in baseline: standardized features through logistic regression.
#[derive(Debug, Clone)]
pub struct BaselineDetector {
    standardizer: Standardizer,
    weights: Vec<f64>,
    embedder: HashedBowEmbedder,
}

impl BaselineDetector {
    /// Trains on the labeled, structurally valid trees of `train`; other
    /// trees are ignored. Both classes must be present.
    pub fn train(train: &[PropagationTree]) -> Result<Self, DetectError> {
        let embedder = HashedBowEmbedder::default();
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for tree in train {
            let code = match tree.label.as_code() {
                Some(code) => code,
                None => continue,
            };
            if !tree.is_valid() {
                continue;
            }
            rows.push(extract_features(tree, &embedder)?);
            targets.push(code as f64);
        }
        if !targets.contains(&0.0) || !targets.contains(&1.0) {
            return Err(DetectError::Training(
                "training set must contain both true and fake trees".into(),
            ));
        }
        let standardizer = Standardizer::fit(&rows)?;
        let standardized: Vec<Vec<f64>> =
            rows.iter().map(|row| standardizer.transform(row)).collect();
        let weights = train_logistic(&standardized, &targets, TRAIN_EPOCHS, TRAIN_STEP);
        Ok(BaselineDetector {
            standardizer,
            weights,
            embedder,
        })
    }

    pub fn score(&self, tree: &PropagationTree) -> Result<f64, DetectError> {
        let features = extract_features(tree, &self.embedder)?;
        let z_scores = self.standardizer.transform(&features);
        let z = self.weights[0]
            + z_scores
                .iter()
                .zip(&self.weights[1..])
                .map(|(x, w)| x * w)
                .sum::<f64>();
        Ok(sigmoid(z))
    }
}

impl Detector for BaselineDetector {
    fn name(&self) -> &str {
        "baseline-logistic"
    }

    fn predict(&self, tree: &PropagationTree) -> Result<Prediction, DetectError> {
        let score = self.score(tree)?;
        Ok(Prediction {
            label: u8::from(score >= 0.5),
            score,
        })
    }
}

// ---------------------------------------------------------------------------
// External detector adapters

/// Runs an external command once per batch. Protocol: one tree as a JSON
/// line on stdin, one `{"label": 0|1, "score": <float>}` JSON line on
/// stdout, in lockstep.
pub struct SubprocessDetector {
    name: String,
    program: String,
    args: Vec<String>,
}

impl SubprocessDetector {
    pub fn new(name: impl Into<String>, program: impl Into<String>, args: Vec<String>) -> Self {
        SubprocessDetector {
            name: name.into(),
            program: program.into(),
            args,
        }
    }
}

impl Detector for SubprocessDetector {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, tree: &PropagationTree) -> Result<Prediction, DetectError> {
        Ok(self.predict_batch(&[tree])?.remove(0))
    }

    fn predict_batch(&self, trees: &[&PropagationTree]) -> Result<Vec<Prediction>, DetectError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| DetectError::Adapter(format!("cannot spawn {}: {e}", self.program)))?;
        let mut stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let mut reader = BufReader::new(stdout);

        let mut predictions = Vec::with_capacity(trees.len());
        for tree in trees {
            let line = serde_json::to_string(tree)?;
            stdin
                .write_all(line.as_bytes())
                .and_then(|_| stdin.write_all(b"\n"))
                .and_then(|_| stdin.flush())
                .map_err(|e| DetectError::Adapter(format!("write to detector failed: {e}")))?;
            let mut response = String::new();
            reader
                .read_line(&mut response)
                .map_err(|e| DetectError::Adapter(format!("read from detector failed: {e}")))?;
            if response.trim().is_empty() {
                return Err(DetectError::Adapter(
                    "detector closed its output before answering".into(),
                ));
            }
            let prediction: Prediction = serde_json::from_str(response.trim())
                .map_err(|e| DetectError::Adapter(format!("malformed detector response: {e}")))?;
            if prediction.label > 1 {
                return Err(DetectError::Adapter(format!(
                    "detector label must be 0 or 1, got {}",
                    prediction.label
                )));
            }
            predictions.push(prediction);
        }
        drop(stdin);
        let status = child
            .wait()
            .map_err(|e| DetectError::Adapter(format!("detector did not exit: {e}")))?;
        if !status.success() {
            return Err(DetectError::Adapter(format!(
                "detector exited with {status}"
            )));
        }
        Ok(predictions)
    }
}

/// POSTs each tree as JSON to an HTTP endpoint answering with a
/// [`Prediction`] body.
pub struct HttpDetector {
    name: String,
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpDetector {
    pub fn new(
        name: impl Into<String>,
        endpoint: impl Into<String>,
        timeout_secs: u64,
    ) -> Result<Self, DetectError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(timeout_secs))
            .build()
            .map_err(|e| DetectError::Adapter(e.to_string()))?;
        Ok(HttpDetector {
            name: name.into(),
            endpoint: endpoint.into(),
            client,
        })
    }
}

impl Detector for HttpDetector {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, tree: &PropagationTree) -> Result<Prediction, DetectError> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(tree)
            .send()
            .map_err(|e| DetectError::Adapter(e.to_string()))?;
        if !response.status().is_success() {
            return Err(DetectError::Adapter(format!(
                "detector returned status {}",
                response.status()
            )));
        }
        let prediction: Prediction = response
            .json()
            .map_err(|e| DetectError::Adapter(format!("malformed detector response: {e}")))?;
        if prediction.label > 1 {
            return Err(DetectError::Adapter(format!(
                "detector label must be 0 or 1, got {}",
                prediction.label
            )));
        }
        Ok(prediction)
    }
}

// ---------------------------------------------------------------------------
// Evaluation

/// Rank-based AUC with midranks on tied scores, so a constant scorer lands
/// on exactly 0.5. `None` when only one class is present.
pub fn auc_midrank(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0;
        for &position in &order[i..=j] {
            ranks[position] = midrank;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    let n_pos = n_pos as f64;
    let n_neg = n_neg as f64;
    Some((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Aggregate evaluation results for one detector on one tree set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub detector: String,
    pub scenario: String,
    pub evaluated: usize,
    pub skipped: usize,
    pub accuracy: f64,
    /// Precision for the fake (positive) class.
    pub precision: f64,
    /// Recall for the fake (positive) class.
    pub recall: f64,
    pub f1: f64,
    pub macro_f1: f64,
    pub auc: Option<f64>,
    /// Rows are truth (true news, fake news), columns are prediction:
    /// `[[tn, fp], [fn, tp]]`.
    pub confusion: [[usize; 2]; 2],
    pub warnings: Vec<String>,
}

fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(numerator: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

/// Evaluates a detector on the labeled, structurally valid trees of `trees`;
/// everything else is skipped with a warning.
pub fn evaluate(
    detector: &dyn Detector,
    trees: &[PropagationTree],
    scenario: &str,
) -> Result<EvalReport, DetectError> {
    let mut warnings = Vec::new();
    let mut usable = Vec::new();
    let mut truth = Vec::new();
    for tree in trees {
        match tree.label.as_code() {
            Some(code) if tree.is_valid() => {
                usable.push(tree);
                truth.push(code);
            }
            Some(_) => warnings.push(format!(
                "sample {} fails validation; skipped",
                tree.sample_id
            )),
            None => warnings.push(format!("sample {} is unlabeled; skipped", tree.sample_id)),
        }
    }
    if usable.is_empty() {
        warnings.push("no labeled trees to evaluate".to_string());
        return Ok(EvalReport {
            detector: detector.name().to_string(),
            scenario: scenario.to_string(),
            evaluated: 0,
            skipped: trees.len(),
            accuracy: 0.0,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            macro_f1: 0.0,
            auc: None,
            confusion: [[0, 0], [0, 0]],
            warnings,
        });
    }

    let predictions = detector.predict_batch(&usable)?;
    let mut confusion = [[0usize; 2]; 2];
    for (&truth_code, prediction) in truth.iter().zip(&predictions) {
        confusion[truth_code as usize][prediction.label.min(1) as usize] += 1;
    }
    let [[tn, fp], [fn_, tp]] = confusion;
    let accuracy = ratio(tn + tp, usable.len());
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = f1_from(precision, recall);
    let precision_neg = ratio(tn, tn + fn_);
    let recall_neg = ratio(tn, tn + fp);
    let macro_f1 = (f1 + f1_from(precision_neg, recall_neg)) / 2.0;
    let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
    let auc = auc_midrank(&scores, &truth);
    if auc.is_none() {
        warnings.push("only one class present; AUC undefined".to_string());
    }

    Ok(EvalReport {
        detector: detector.name().to_string(),
        scenario: scenario.to_string(),
        evaluated: usable.len(),
        skipped: trees.len() - usable.len(),
        accuracy,
        precision,
        recall,
        f1,
        macro_f1,
        auc,
        confusion,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Early-detection scenario

/// Rebuilds the early snapshot of a tree: keeps the root and the earliest
/// `ceil(rho * comment_count)` comments by (timestamp, index), missing
/// timestamps last, then drops any comment whose parent did not survive and
/// re-compacts indices in the original relative order.
pub fn truncate_early(tree: &PropagationTree, rho: f64) -> PropagationTree {
    let n = tree.node_count();
    let comment_count = n.saturating_sub(1);
    let keep_target = (rho.clamp(0.0, 1.0) * comment_count as f64).ceil() as usize;

    let mut by_time: Vec<usize> = (1..n).collect();
    by_time.sort_by_key(|&index| {
        let node = &tree.nodes[index];
        (node.timestamp.is_none(), node.timestamp.unwrap_or(0), index)
    });
    let mut selected = vec![false; n];
    selected[0] = true;
    for &index in by_time.iter().take(keep_target) {
        selected[index] = true;
    }

    // Indices are topological in a valid tree, so one ascending pass drops
    // whole subtrees whose root lost its parent.
    let mut kept = vec![false; n];
    kept[0] = true;
    for index in 1..n {
        if selected[index] {
            kept[index] = tree.nodes[index]
                .parent_index
                .map(|parent| parent < index && kept[parent])
                .unwrap_or(false);
        }
    }

    let survivors: Vec<usize> = (0..n).filter(|&i| kept[i]).collect();
    let remap: HashMap<usize, usize> = survivors
        .iter()
        .enumerate()
        .map(|(new_index, &old_index)| (old_index, new_index))
        .collect();
    let nodes = survivors
        .iter()
        .map(|&old_index| {
            let mut node = tree.nodes[old_index].clone();
            node.index = remap[&old_index];
            node.parent_index = node.parent_index.map(|parent| remap[&parent]);
            node
        })
        .collect();
    PropagationTree::new(&tree.sample_id, tree.label, nodes)
}

/// Truncates every tree to its early snapshot, then evaluates.
pub fn evaluate_early(
    detector: &dyn Detector,
    trees: &[PropagationTree],
    rho: f64,
) -> Result<EvalReport, DetectError> {
    let truncated: Vec<PropagationTree> =
        trees.iter().map(|tree| truncate_early(tree, rho)).collect();
    evaluate(detector, &truncated, &format!("early(rho={rho})"))
}

// ---------------------------------------------------------------------------
// Scenarios

/// The evaluation setting a detection run is configured for. The scenario
/// itself carries only data; dataset wiring (which corpus is the source,
/// whether truncated trees get synthetic enhancement first) happens in the
/// caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// Train and test on the same platform's split.
    General,
    /// Test trees are truncated to the fraction `rho` of their earliest
    /// comments before evaluation.
    Early { rho: f64 },
    /// Train on one platform's corpus, test on another's.
    CrossPlatform { source: String, target: String },
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scenario::General => write!(f, "general"),
            Scenario::Early { rho } => write!(f, "early(rho={rho})"),
            Scenario::CrossPlatform { source, target } => {
                write!(f, "cross_platform({source}->{target})")
            }
        }
    }
}

/// Writes an evaluation report as pretty JSON.
pub fn write_report(report: &EvalReport, path: &Path) -> Result<(), DetectError> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
