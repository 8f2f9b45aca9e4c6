//! Quality metrics for propagation trees.
//!
//! Structural metrics describe a single tree (entropy of the degree
//! distribution, maximum depth, maximum breadth). Semantic metrics compare
//! node contents, either inside one tree (homogeneity) or between a generated
//! tree and the original it was derived from (semantic and sentiment
//! consistency). Text is turned into vectors by an [`Embedder`]; the built-in
//! [`HashedBowEmbedder`] is fully offline and deterministic, and remote
//! HTTP-backed providers can be plugged in for both embeddings and sentiment.
//!
//! [`evaluate_propagation`] bundles everything into a [`MetricReport`] with
//! per-sample rows, macro averages, fixed-bin histograms, and warnings for
//! samples that could not be paired. Reports can be exported as CSV and as a
//! self-contained SVG chart.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{PropagationTree, TreeError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("embedding provider error: {0}")]
    Embedding(String),
    #[error("sentiment provider error: {0}")]
    Sentiment(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

// ---------------------------------------------------------------------------
// Embeddings

/// Maps a batch of texts to fixed-size vectors.
pub trait Embedder: Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, MetricsError>;
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// FNV-1a, 64-bit.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &byte in bytes {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect::<Vec<_>>()
        .into_iter()
}

/// Offline embedding: token counts hashed into a fixed number of buckets,
/// then L2-normalized. Texts with no tokens map to the zero vector.
#[derive(Debug, Clone)]
pub struct HashedBowEmbedder {
    pub dimensions: usize,
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        HashedBowEmbedder { dimensions: 256 }
    }
}

impl Embedder for HashedBowEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, MetricsError> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut vector = vec![0.0; self.dimensions];
                for token in tokenize(text) {
                    let bucket = (fnv1a64(token.as_bytes()) % self.dimensions as u64) as usize;
                    vector[bucket] += 1.0;
                }
                let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for v in &mut vector {
                        *v /= norm;
                    }
                }
                vector
            })
            .collect())
    }
}

#[derive(Serialize)]
struct ProviderRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    vectors: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct SentimentResponse {
    labels: Vec<String>,
}

fn provider_client(timeout_secs: u64) -> Result<reqwest::blocking::Client, MetricsError> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(timeout_secs))
        .build()
        .map_err(|e| MetricsError::Transport(e.to_string()))
}

fn provider_post<T: serde::de::DeserializeOwned>(
    client: &reqwest::blocking::Client,
    endpoint: &str,
    texts: &[String],
) -> Result<T, MetricsError> {
    let response = client
        .post(endpoint)
        .json(&ProviderRequest { texts })
        .send()
        .map_err(|e| MetricsError::Transport(e.to_string()))?;
    if !response.status().is_success() {
        return Err(MetricsError::Transport(format!(
            "provider returned status {}",
            response.status()
        )));
    }
    response
        .json::<T>()
        .map_err(|e| MetricsError::Transport(format!("malformed provider response: {e}")))
}

/// Embeddings served by an HTTP endpoint taking `{"texts": [...]}` and
/// returning `{"vectors": [[...], ...]}`.
pub struct RemoteEmbedder {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, timeout_secs: u64) -> Result<Self, MetricsError> {
        Ok(RemoteEmbedder {
            endpoint: endpoint.into(),
            client: provider_client(timeout_secs)?,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, MetricsError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let response: EmbeddingResponse = provider_post(&self.client, &self.endpoint, texts)?;
        if response.vectors.len() != texts.len() {
            return Err(MetricsError::Embedding(format!(
                "provider returned {} vectors for {} texts",
                response.vectors.len(),
                texts.len()
            )));
        }
        Ok(response.vectors)
    }
}

// ---------------------------------------------------------------------------
// Sentiment

/// Three-way sentiment polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

impl std::str::FromStr for Sentiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "negative" | "neg" => Ok(Sentiment::Negative),
            "neutral" | "neu" => Ok(Sentiment::Neutral),
            "positive" | "pos" => Ok(Sentiment::Positive),
            other => Err(format!("unknown sentiment label '{other}'")),
        }
    }
}

/// Classifies a batch of texts into sentiment polarities.
pub trait SentimentProvider: Sync {
    fn sentiment(&self, texts: &[String]) -> Result<Vec<Sentiment>, MetricsError>;
}

const POSITIVE_WORDS: &[&str] = &[
    "good",
    "great",
    "excellent",
    "amazing",
    "wonderful",
    "love",
    "loved",
    "best",
    "happy",
    "glad",
    "fantastic",
    "awesome",
    "brilliant",
    "helpful",
    "true",
    "accurate",
    "correct",
    "trust",
    "agree",
    "support",
    "confirmed",
    "reliable",
    "honest",
    "hopeful",
    "win",
    "safe",
    "calm",
    "clear",
    "thanks",
    "thank",
];

const NEGATIVE_WORDS: &[&str] = &[
    "bad",
    "terrible",
    "awful",
    "horrible",
    "hate",
    "hated",
    "worst",
    "sad",
    "angry",
    "fear",
    "fake",
    "false",
    "wrong",
    "lie",
    "lies",
    "liar",
    "hoax",
    "scam",
    "doubt",
    "deny",
    "denies",
    "misleading",
    "dangerous",
    "panic",
    "unsafe",
    "suspicious",
    "shame",
    "disgusting",
    "fraud",
    "rumor",
];

/// Offline sentiment: counts polarity words; more positive than negative
/// tokens is positive, fewer is negative, equal is neutral.
#[derive(Debug, Clone, Default)]
pub struct LexiconSentiment;

impl SentimentProvider for LexiconSentiment {
    fn sentiment(&self, texts: &[String]) -> Result<Vec<Sentiment>, MetricsError> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut score = 0i64;
                for token in tokenize(text) {
                    if POSITIVE_WORDS.contains(&token.as_str()) {
                        score += 1;
                    } else if NEGATIVE_WORDS.contains(&token.as_str()) {
                        score -= 1;
                    }
                }
                match score.cmp(&0) {
                    std::cmp::Ordering::Greater => Sentiment::Positive,
                    std::cmp::Ordering::Less => Sentiment::Negative,
                    std::cmp::Ordering::Equal => Sentiment::Neutral,
                }
            })
            .collect())
    }
}

/// Sentiment served by an HTTP endpoint taking `{"texts": [...]}` and
/// returning `{"labels": ["positive", ...]}`.
pub struct RemoteSentiment {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl RemoteSentiment {
    pub fn new(endpoint: impl Into<String>, timeout_secs: u64) -> Result<Self, MetricsError> {
        Ok(RemoteSentiment {
            endpoint: endpoint.into(),
            client: provider_client(timeout_secs)?,
        })
    }
}

impl SentimentProvider for RemoteSentiment {
    fn sentiment(&self, texts: &[String]) -> Result<Vec<Sentiment>, MetricsError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let response: SentimentResponse = provider_post(&self.client, &self.endpoint, texts)?;
        if response.labels.len() != texts.len() {
            return Err(MetricsError::Sentiment(format!(
                "provider returned {} labels for {} texts",
                response.labels.len(),
                texts.len()
            )));
        }
        response
            .labels
            .iter()
            .map(|label| label.parse().map_err(MetricsError::Sentiment))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Structural metrics

/// Shannon entropy (base 2) of the tree's undirected degree distribution.
pub fn structural_entropy(tree: &PropagationTree) -> f64 {
    let histogram = tree.degree_histogram();
    let total: usize = histogram.values().sum();
    if total == 0 {
        return 0.0;
    }
    histogram
        .values()
        .map(|&count| {
            let p = count as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

/// Longest root-to-node distance in edges; 0 for a root-only tree. Nodes
/// whose parent chain is broken count as depth 0.
pub fn max_depth(tree: &PropagationTree) -> usize {
    (0..tree.node_count())
        .map(|index| tree.depth_of(index).unwrap_or(0))
        .max()
        .unwrap_or(0)
}

/// Largest number of nodes sharing one depth level; 1 for a root-only tree.
pub fn max_breadth(tree: &PropagationTree) -> usize {
    let mut per_level: HashMap<usize, usize> = HashMap::new();
    for index in 0..tree.node_count() {
        *per_level
            .entry(tree.depth_of(index).unwrap_or(0))
            .or_insert(0) += 1;
    }
    per_level.values().copied().max().unwrap_or(0)
}

// ---------------------------------------------------------------------------
// Semantic metrics

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm_a = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        0.0
    } else {
        // Rounding can push the ratio an ulp past the mathematical bounds.
        (dot / (norm_a * norm_b)).clamp(-1.0, 1.0)
    }
}

fn mean_vector(vectors: &[Vec<f64>]) -> Option<Vec<f64>> {
    let first = vectors.first()?;
    let mut mean = vec![0.0; first.len()];
    for vector in vectors {
        for (m, v) in mean.iter_mut().zip(vector) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= vectors.len() as f64;
    }
    Some(mean)
}

fn tree_contents(tree: &PropagationTree) -> Vec<String> {
    tree.nodes.iter().map(|n| n.content.clone()).collect()
}

fn comment_contents(tree: &PropagationTree) -> Vec<String> {
    tree.comments().map(|n| n.content.clone()).collect()
}

/// Cosine similarity between the mean embeddings of two trees' node
/// contents (every node, news root included).
pub fn semantic_consistency(
    generated: &PropagationTree,
    original: &PropagationTree,
    embedder: &dyn Embedder,
) -> Result<f64, MetricsError> {
    let generated_mean = mean_vector(&embedder.embed(&tree_contents(generated))?);
    let original_mean = mean_vector(&embedder.embed(&tree_contents(original))?);
    match (generated_mean, original_mean) {
        (Some(g), Some(o)) => Ok(cosine(&g, &o)),
        _ => Ok(0.0),
    }
}

/// The dominant sentiment over a tree's comments. Ties (including the empty
/// comment set) resolve pessimistically: negative before neutral before
/// positive.
pub fn majority_sentiment(
    tree: &PropagationTree,
    provider: &dyn SentimentProvider,
) -> Result<Sentiment, MetricsError> {
    let labels = provider.sentiment(&comment_contents(tree))?;
    let mut counts: HashMap<Sentiment, usize> = HashMap::new();
    for label in labels {
        *counts.entry(label).or_insert(0) += 1;
    }
    let count_of = |s: Sentiment| counts.get(&s).copied().unwrap_or(0);
    let mut best = Sentiment::Negative;
    for candidate in [Sentiment::Neutral, Sentiment::Positive] {
        if count_of(candidate) > count_of(best) {
            best = candidate;
        }
    }
    Ok(best)
}

/// 1.0 when both trees share the same majority comment sentiment, else 0.0.
pub fn sentiment_consistency(
    generated: &PropagationTree,
    original: &PropagationTree,
    provider: &dyn SentimentProvider,
) -> Result<f64, MetricsError> {
    let a = majority_sentiment(generated, provider)?;
    let b = majority_sentiment(original, provider)?;
    Ok(if a == b { 1.0 } else { 0.0 })
}

/// Mean pairwise cosine over the comment nodes' embeddings. Undefined
/// (`None`) for trees with fewer than two comments.
pub fn semantic_homogeneity(
    tree: &PropagationTree,
    embedder: &dyn Embedder,
) -> Result<Option<f64>, MetricsError> {
    let contents = comment_contents(tree);
    if contents.len() < 2 {
        return Ok(None);
    }
    let vectors = embedder.embed(&contents)?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            total += cosine(&vectors[i], &vectors[j]);
            pairs += 1;
        }
    }
    Ok(Some(total / pairs as f64))
}

// ---------------------------------------------------------------------------
// Report

/// Metrics for one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub node_count: usize,
    pub structural_entropy: f64,
    pub max_depth: usize,
    pub max_breadth: usize,
    pub semantic_homogeneity: Option<f64>,
}

/// Comparison metrics for one generated/original pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedMetrics {
    pub sample_id: String,
    pub semantic_consistency: f64,
    pub sentiment_consistency: f64,
}

/// Fixed-bin histogram with explicit out-of-range counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub label: String,
    pub start: f64,
    pub bin_width: f64,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
}

impl Histogram {
    fn build<I: IntoIterator<Item = f64>>(
        label: &str,
        start: f64,
        bin_width: f64,
        bins: usize,
        values: I,
    ) -> Histogram {
        let mut histogram = Histogram {
            label: label.to_string(),
            start,
            bin_width,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        };
        for value in values {
            let offset = (value - start) / bin_width;
            if offset < 0.0 {
                histogram.underflow += 1;
            } else if (offset.floor() as usize) >= bins {
                histogram.overflow += 1;
            } else {
                histogram.counts[offset.floor() as usize] += 1;
            }
        }
        histogram
    }
}

/// Everything [`evaluate_propagation`] measures, in one serializable bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub sample_count: usize,
    pub mean_structural_entropy: f64,
    pub mean_max_depth: f64,
    pub mean_max_breadth: f64,
    pub mean_semantic_homogeneity: Option<f64>,
    pub semantic_consistency: Option<f64>,
    pub sentiment_consistency: Option<f64>,
    pub per_sample: Vec<SampleMetrics>,
    pub paired: Vec<PairedMetrics>,
    pub histograms: Vec<Histogram>,
    pub warnings: Vec<String>,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Measures a set of trees, optionally against the originals they were
/// generated from (matched by sample id). Unmatched samples are excluded
/// from the consistency averages and reported as warnings, never silently
/// scored as zero.
pub fn evaluate_propagation(
    generated: &[PropagationTree],
    originals: Option<&[PropagationTree]>,
    embedder: &dyn Embedder,
    sentiment: &dyn SentimentProvider,
    method: &str,
) -> Result<MetricReport, MetricsError> {
    let mut order: Vec<&PropagationTree> = generated.iter().collect();
    order.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let mut warnings = Vec::new();
    let mut per_sample = Vec::with_capacity(order.len());
    for tree in &order {
        per_sample.push(SampleMetrics {
            sample_id: tree.sample_id.clone(),
            node_count: tree.node_count(),
            structural_entropy: structural_entropy(tree),
            max_depth: max_depth(tree),
            max_breadth: max_breadth(tree),
            semantic_homogeneity: semantic_homogeneity(tree, embedder)?,
        });
    }

    let mut paired = Vec::new();
    if let Some(originals) = originals {
        let by_id: HashMap<&str, &PropagationTree> = originals
            .iter()
            .map(|t| (t.sample_id.as_str(), t))
            .collect();
        for tree in &order {
            match by_id.get(tree.sample_id.as_str()) {
                Some(original) => paired.push(PairedMetrics {
                    sample_id: tree.sample_id.clone(),
                    semantic_consistency: semantic_consistency(tree, original, embedder)?,
                    sentiment_consistency: sentiment_consistency(tree, original, sentiment)?,
                }),
                None => warnings.push(format!(
                    "no original tree for sample {}; excluded from consistency metrics",
                    tree.sample_id
                )),
            }
        }
        let generated_ids: std::collections::HashSet<&str> =
            order.iter().map(|t| t.sample_id.as_str()).collect();
        let mut missing: Vec<&str> = by_id
            .keys()
            .filter(|id| !generated_ids.contains(**id))
            .copied()
            .collect();
        missing.sort();
        for id in missing {
            warnings.push(format!("original sample {id} has no generated counterpart"));
        }
    }

    let entropy_values: Vec<f64> = per_sample.iter().map(|s| s.structural_entropy).collect();
    let depth_values: Vec<f64> = per_sample.iter().map(|s| s.max_depth as f64).collect();
    let breadth_values: Vec<f64> = per_sample.iter().map(|s| s.max_breadth as f64).collect();
    let homogeneity_values: Vec<f64> = per_sample
        .iter()
        .filter_map(|s| s.semantic_homogeneity)
        .collect();

    let histograms = vec![
        Histogram::build(
            "structural_entropy",
            0.0,
            0.25,
            12,
            entropy_values.iter().copied(),
        ),
        Histogram::build("max_depth", 0.0, 1.0, 16, depth_values.iter().copied()),
        Histogram::build("max_breadth", 0.0, 2.0, 16, breadth_values.iter().copied()),
        Histogram::build(
            "semantic_homogeneity",
            0.0,
            0.1,
            10,
            homogeneity_values.iter().copied(),
        ),
    ];

    Ok(MetricReport {
        method: method.to_string(),
        sample_count: per_sample.len(),
        mean_structural_entropy: mean(&entropy_values),
        mean_max_depth: mean(&depth_values),
        mean_max_breadth: mean(&breadth_values),
        mean_semantic_homogeneity: if homogeneity_values.is_empty() {
            None
        } else {
            Some(mean(&homogeneity_values))
        },
        semantic_consistency: if paired.is_empty() {
            None
        } else {
            Some(mean(
                &paired
                    .iter()
                    .map(|p| p.semantic_consistency)
                    .collect::<Vec<_>>(),
            ))
        },
        sentiment_consistency: if paired.is_empty() {
            None
        } else {
            Some(mean(
                &paired
                    .iter()
                    .map(|p| p.sentiment_consistency)
                    .collect::<Vec<_>>(),
            ))
        },
        per_sample,
        paired,
        histograms,
        warnings,
    })
}

/// Writes one CSV row per sample; paired columns are blank when a sample
/// has no matching original.
pub fn write_csv(report: &MetricReport, path: &Path) -> Result<(), MetricsError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "sample_id",
        "node_count",
        "structural_entropy",
        "max_depth",
        "max_breadth",
        "semantic_homogeneity",
        "semantic_consistency",
        "sentiment_consistency",
    ])?;
    let paired_by_id: HashMap<&str, &PairedMetrics> = report
        .paired
        .iter()
        .map(|p| (p.sample_id.as_str(), p))
        .collect();
    for row in &report.per_sample {
        let paired = paired_by_id.get(row.sample_id.as_str());
        writer.write_record([
            row.sample_id.clone(),
            row.node_count.to_string(),
            row.structural_entropy.to_string(),
            row.max_depth.to_string(),
            row.max_breadth.to_string(),
            row.semantic_homogeneity
                .map(|v| v.to_string())
                .unwrap_or_default(),
            paired
                .map(|p| p.semantic_consistency.to_string())
                .unwrap_or_default(),
            paired
                .map(|p| p.sentiment_consistency.to_string())
                .unwrap_or_default(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

const SVG_PANEL_WIDTH: f64 = 360.0;
const SVG_PANEL_HEIGHT: f64 = 240.0;
const SVG_MARGIN: f64 = 40.0;

fn svg_panel(histogram: &Histogram, origin_x: f64, origin_y: f64, out: &mut String) {
    use std::fmt::Write;

    let plot_w = SVG_PANEL_WIDTH - 2.0 * SVG_MARGIN;
    let plot_h = SVG_PANEL_HEIGHT - 2.0 * SVG_MARGIN;
    let max_count = histogram.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bar_w = plot_w / histogram.counts.len() as f64;

    let _ = write!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" font-family=\"monospace\">{} (under={}, over={})</text>",
        origin_x + SVG_MARGIN,
        origin_y + SVG_MARGIN - 16.0,
        histogram.label,
        histogram.underflow,
        histogram.overflow,
    );
    // Axes.
    let _ = write!(
        out,
        "<path d=\"M {x0:.1} {y0:.1} L {x0:.1} {y1:.1} L {x1:.1} {y1:.1}\" stroke=\"#333\" fill=\"none\"/>",
        x0 = origin_x + SVG_MARGIN,
        y0 = origin_y + SVG_MARGIN,
        y1 = origin_y + SVG_MARGIN + plot_h,
        x1 = origin_x + SVG_MARGIN + plot_w,
    );
    for (bin, &count) in histogram.counts.iter().enumerate() {
        let height = plot_h * count as f64 / max_count;
        let x = origin_x + SVG_MARGIN + bin as f64 * bar_w;
        let y = origin_y + SVG_MARGIN + plot_h - height;
        let _ = write!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#4878a8\" stroke=\"#fff\" stroke-width=\"0.5\"><title>[{:.2}, {:.2}): {}</title></rect>",
            x,
            y,
            bar_w,
            height,
            histogram.start + bin as f64 * histogram.bin_width,
            histogram.start + (bin + 1) as f64 * histogram.bin_width,
            count,
        );
    }
    // Extent labels on the x axis.
    let _ = write!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" font-family=\"monospace\">{:.2}</text>",
        origin_x + SVG_MARGIN,
        origin_y + SVG_MARGIN + plot_h + 14.0,
        histogram.start,
    );
    let _ = write!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" font-family=\"monospace\" text-anchor=\"end\">{:.2}</text>",
        origin_x + SVG_MARGIN + plot_w,
        origin_y + SVG_MARGIN + plot_h + 14.0,
        histogram.start + histogram.counts.len() as f64 * histogram.bin_width,
    );
    // Max-count label on the y axis.
    let _ = write!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" font-family=\"monospace\" text-anchor=\"end\">{}</text>",
        origin_x + SVG_MARGIN - 4.0,
        origin_y + SVG_MARGIN + 10.0,
        histogram.counts.iter().copied().max().unwrap_or(0),
    );
}

/// Renders the report's histograms as a 2x2 panel SVG. The output is plain
/// deterministic text: the same report always produces the same bytes.
pub fn render_svg(report: &MetricReport) -> String {
    use std::fmt::Write;

    let columns = 2usize;
    let rows = report.histograms.len().div_ceil(columns);
    let width = SVG_PANEL_WIDTH * columns as f64;
    let height = SVG_PANEL_HEIGHT * rows as f64 + 24.0;

    let mut out = String::new();
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = write!(
        out,
        "<text x=\"{:.1}\" y=\"16\" font-size=\"14\" font-family=\"monospace\" font-weight=\"bold\">{} — {} samples</text>",
        SVG_MARGIN,
        report.method,
        report.sample_count,
    );
    for (position, histogram) in report.histograms.iter().enumerate() {
        let origin_x = (position % columns) as f64 * SVG_PANEL_WIDTH;
        let origin_y = (position / columns) as f64 * SVG_PANEL_HEIGHT + 24.0;
        svg_panel(histogram, origin_x, origin_y, &mut out);
    }
    out.push_str("</svg>");
    out
}

pub fn write_svg(report: &MetricReport, path: &Path) -> Result<(), MetricsError> {
    std::fs::write(path, render_svg(report))?;
    Ok(())
}
