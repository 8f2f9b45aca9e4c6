//! Validation-gated tree enhancement.
//!
//! The engine grows a propagation tree one synthetic comment at a time. The
//! current tree is rendered as a time-ordered sequence of node triples, the
//! model is asked for the next comment node, and the answer has to clear
//! three gates, strictly in order:
//!
//! 1. **syntactic** — the output parses as a node-JSON object;
//! 2. **structural** — the parent reference names an existing position, the
//!    claimed index is the append position, and there is no self-reference;
//! 3. **content** — non-empty, not refusal boilerplate, not repetitive, and
//!    at least a minimum number of words.
//!
//! A failed gate consumes one attempt; each generation slot gets
//! `max_retries + 1` attempts before the run stops (or aborts, by policy).
//! Accepted nodes are appended with `origin = synthetic` and a timestamp one
//! second after their parent's, and the whole exchange — every attempt, every
//! verdict — is kept in a [`GenerationTranscript`].

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GenAttempt};
use crate::prompt::{
    parse_candidate, render_next_node_instruction, CandidateNode, NodeJsonIssue, NodeTriple,
    TemplateId,
};
use crate::tree::{NodeOrigin, PropNode, PropagationTree, TreeError, Violation};

/// Embedded default list of refusal markers; see `fixtures/refusal_phrases.txt`.
const REFUSAL_PHRASES_RAW: &str = include_str!("../fixtures/refusal_phrases.txt");

fn default_refusal_phrases() -> &'static [String] {
    static PHRASES: OnceLock<Vec<String>> = OnceLock::new();
    PHRASES.get_or_init(|| {
        REFUSAL_PHRASES_RAW
            .lines()
            .map(str::trim)
            .filter(|line| !line.is_empty() && !line.starts_with('#'))
            .map(|line| line.to_ascii_lowercase())
            .collect()
    })
}

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error("tree {sample_id} fails validation with {} violation(s); repair it before enhancing", violations.len())]
    InvalidInput {
        sample_id: String,
        violations: Vec<Violation>,
    },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Which gate a candidate failed, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    Syntactic,
    Structural,
    Content,
    /// No gate fired: the candidate passed.
    None,
}

/// Machine-readable failure cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    MalformedJson,
    MissingField,
    InvalidParentRef,
    SelfLoop,
    DuplicateIndex,
    Cycle,
    EmptyContent,
    RefusalBoilerplate,
    Repetitive,
    TooShort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictOutcome {
    Pass,
    Fail,
}

/// The outcome of validating one candidate. `outcome == Pass` exactly when
/// `gate == None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub outcome: VerdictOutcome,
    pub gate: Gate,
    pub reason: Option<FailReason>,
    /// Set when the candidate passed with a repair (e.g. a rewritten index).
    pub warning: Option<String>,
}

impl ValidationVerdict {
    pub fn pass() -> Self {
        ValidationVerdict {
            outcome: VerdictOutcome::Pass,
            gate: Gate::None,
            reason: None,
            warning: None,
        }
    }

    pub fn pass_with_warning(warning: impl Into<String>) -> Self {
        ValidationVerdict {
            warning: Some(warning.into()),
            ..ValidationVerdict::pass()
        }
    }

    pub fn fail(gate: Gate, reason: FailReason) -> Self {
        debug_assert!(gate != Gate::None, "failures must name a gate");
        ValidationVerdict {
            outcome: VerdictOutcome::Fail,
            gate,
            reason: Some(reason),
            warning: None,
        }
    }

    pub fn is_pass(&self) -> bool {
        self.outcome == VerdictOutcome::Pass
    }
}

/// What to do when one slot exhausts all of its attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExhaustionPolicy {
    /// Keep what was accepted so far, stop generating, mark the run partial.
    #[default]
    SkipAndStop,
    /// Discard the enrichment and mark the run aborted.
    Abort,
}

/// Enhancement settings. Defaults: 30 generated nodes, the structured
/// template, lenient index handling, two-word minimum content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceConfig {
    /// Number of synthetic nodes to generate per tree.
    pub k: u32,
    pub template: TemplateId,
    pub slot_exhaustion: ExhaustionPolicy,
    /// Rewrite an off-by-one "node index" to the append position (with a
    /// warning) instead of rejecting; parent references are never rewritten.
    pub rewrite_index: bool,
    /// Candidates with fewer words than this fail the content gate.
    pub min_content_words: usize,
    /// A single token repeated this many times in a row is repetitive.
    pub max_consecutive_repeat: usize,
    /// Overrides the built-in refusal marker list when non-empty.
    pub custom_refusal_phrases: Vec<String>,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        EnhanceConfig {
            k: 30,
            template: TemplateId::P1,
            slot_exhaustion: ExhaustionPolicy::SkipAndStop,
            rewrite_index: true,
            min_content_words: 2,
            max_consecutive_repeat: 5,
            custom_refusal_phrases: Vec::new(),
        }
    }
}

impl EnhanceConfig {
    fn refusal_phrases(&self) -> Vec<String> {
        if self.custom_refusal_phrases.is_empty() {
            default_refusal_phrases().to_vec()
        } else {
            self.custom_refusal_phrases
                .iter()
                .map(|p| p.to_ascii_lowercase())
                .collect()
        }
    }
}

/// How one enhancement run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    /// Every requested node was accepted.
    Complete,
    /// A slot ran out of attempts; the nodes accepted before it are kept.
    Partial,
    /// A slot ran out of attempts under the abort policy; the input tree is
    /// returned unchanged.
    Aborted,
}

/// One generation attempt plus its verdict (or the transport error that
/// consumed the attempt instead).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    /// 0-based generation slot this attempt belongs to.
    pub slot: u32,
    pub attempt: GenAttempt,
    pub verdict: Option<ValidationVerdict>,
    pub error: Option<String>,
}

/// Full record of one enhancement run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTranscript {
    pub sample_id: String,
    pub k_target: u32,
    pub status: RunStatus,
    pub accepted_nodes: Vec<PropNode>,
    pub attempts: Vec<AttemptRecord>,
}

fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

fn has_long_token_run(text: &str, limit: usize) -> bool {
    let mut run = 0usize;
    let mut previous: Option<String> = None;
    for token in text.split_whitespace() {
        let token = token.to_lowercase();
        if previous.as_deref() == Some(token.as_str()) {
            run += 1;
        } else {
            run = 1;
            previous = Some(token);
        }
        if run >= limit {
            return true;
        }
    }
    false
}

fn check_content(
    content: &str,
    tree: &PropagationTree,
    config: &EnhanceConfig,
) -> Option<FailReason> {
    if content.trim().is_empty() {
        return Some(FailReason::EmptyContent);
    }
    let lowered = content.to_lowercase();
    if config.refusal_phrases().iter().any(|p| lowered.contains(p)) {
        return Some(FailReason::RefusalBoilerplate);
    }
    let normalized = normalize_text(content);
    if tree
        .nodes
        .iter()
        .any(|n| normalize_text(&n.content) == normalized)
    {
        return Some(FailReason::Repetitive);
    }
    if has_long_token_run(content, config.max_consecutive_repeat) {
        return Some(FailReason::Repetitive);
    }
    if content.split_whitespace().count() < config.min_content_words {
        return Some(FailReason::TooShort);
    }
    None
}

/// Runs a raw model answer through the three gates against the current tree.
///
/// On a pass, returns the parsed candidate — with its index rewritten to the
/// append position when the lenient policy repaired it (the verdict then
/// carries a warning). The candidate's parent reference is positional within
/// the rendered sequence; the engine maps it onto a tree node.
pub fn validate_candidate(
    raw_output: &str,
    tree: &PropagationTree,
    config: &EnhanceConfig,
) -> (ValidationVerdict, Option<CandidateNode>) {
    let mut candidate = match parse_candidate(raw_output) {
        Ok(candidate) => candidate,
        Err(NodeJsonIssue::MalformedJson(_)) => {
            return (
                ValidationVerdict::fail(Gate::Syntactic, FailReason::MalformedJson),
                None,
            )
        }
        Err(NodeJsonIssue::MissingField(_)) => {
            return (
                ValidationVerdict::fail(Gate::Syntactic, FailReason::MissingField),
                None,
            )
        }
    };

    let count = tree.node_count();
    if candidate.parent_index == candidate.node_index {
        return (
            ValidationVerdict::fail(Gate::Structural, FailReason::SelfLoop),
            None,
        );
    }
    if candidate.parent_index >= count {
        return (
            ValidationVerdict::fail(Gate::Structural, FailReason::InvalidParentRef),
            None,
        );
    }
    let mut warning = None;
    if candidate.node_index != count {
        if config.rewrite_index {
            warning = Some(format!(
                "node index {} rewritten to append position {count}",
                candidate.node_index
            ));
            candidate.node_index = count;
        } else if candidate.node_index < count {
            return (
                ValidationVerdict::fail(Gate::Structural, FailReason::DuplicateIndex),
                None,
            );
        } else {
            // An index beyond the append position would leave a gap in the
            // contiguous order and detach the node from the tree.
            return (
                ValidationVerdict::fail(Gate::Structural, FailReason::Cycle),
                None,
            );
        }
    }

    if let Some(reason) = check_content(&candidate.content, tree, config) {
        return (ValidationVerdict::fail(Gate::Content, reason), None);
    }

    let verdict = match warning {
        Some(w) => ValidationVerdict::pass_with_warning(w),
        None => ValidationVerdict::pass(),
    };
    (verdict, Some(candidate))
}

/// Renders the next-node instruction for the current sequence.
pub fn render_phi2(sequence: &[NodeTriple], template: TemplateId) -> String {
    render_next_node_instruction(sequence, template)
}

/// Grows `tree` by up to `config.k` synthetic comment nodes.
///
/// Returns the enriched tree (the input tree unchanged under the abort
/// policy) together with the full transcript. Real nodes are never modified:
/// stripping every `origin == synthetic` node recovers the input exactly.
pub fn enhance(
    tree: &PropagationTree,
    gateway: &Gateway,
    config: &EnhanceConfig,
) -> Result<(PropagationTree, GenerationTranscript), EnhanceError> {
    let violations = tree.validate();
    if !violations.is_empty() {
        return Err(EnhanceError::InvalidInput {
            sample_id: tree.sample_id.clone(),
            violations,
        });
    }

    // The rendered sequence starts as the time-ordered traversal of the
    // input tree; accepted nodes are appended to it. `position_to_index`
    // maps sequence positions back to tree indices.
    let mut position_to_index = tree.time_order()?;
    let mut sequence: Vec<NodeTriple> = {
        let mut position_of = vec![0usize; tree.node_count()];
        for (position, &index) in position_to_index.iter().enumerate() {
            position_of[index] = position;
        }
        position_to_index
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
            .collect()
    };

    let mut enriched = tree.clone();
    let mut transcript = GenerationTranscript {
        sample_id: tree.sample_id.clone(),
        k_target: config.k,
        status: RunStatus::Complete,
        accepted_nodes: Vec::new(),
        attempts: Vec::new(),
    };
    let attempts_per_slot = gateway.config().max_retries + 1;

    'slots: for slot in 0..config.k {
        let prompt = render_phi2(&sequence, config.template);
        let mut accepted = false;
        for attempt_no in 1..=attempts_per_slot {
            let attempt = match gateway.generate(&prompt, attempt_no) {
                Ok(attempt) => attempt,
                Err(error) => {
                    // Transport and replay failures consume an attempt too.
                    transcript.attempts.push(AttemptRecord {
                        slot,
                        attempt: GenAttempt {
                            prompt: prompt.clone(),
                            raw_output: String::new(),
                            latency_ms: 0,
                            attempt_no,
                        },
                        verdict: None,
                        error: Some(error.to_string()),
                    });
                    continue;
                }
            };
            let (verdict, candidate) = validate_candidate(&attempt.raw_output, &enriched, config);
            let passed = verdict.is_pass();
            transcript.attempts.push(AttemptRecord {
                slot,
                attempt,
                verdict: Some(verdict),
                error: None,
            });
            if let (true, Some(candidate)) = (passed, candidate) {
                let parent_tree_index = position_to_index[candidate.parent_index];
                let new_index = enriched.node_count();
                let node = PropNode {
                    index: new_index,
                    parent_index: Some(parent_tree_index),
                    content: candidate.content.clone(),
                    timestamp: enriched.nodes[parent_tree_index].timestamp.map(|ts| ts + 1),
                    origin: NodeOrigin::Synthetic,
                    author_id: None,
                };
                enriched.nodes.push(node.clone());
                sequence.push(NodeTriple::new(
                    Some(candidate.parent_index),
                    sequence.len(),
                    candidate.content,
                ));
                position_to_index.push(new_index);
                transcript.accepted_nodes.push(node);
                accepted = true;
                break;
            }
        }
        if !accepted {
            match config.slot_exhaustion {
                ExhaustionPolicy::SkipAndStop => {
                    transcript.status = RunStatus::Partial;
                    break 'slots;
                }
                ExhaustionPolicy::Abort => {
                    transcript.status = RunStatus::Aborted;
                    return Ok((tree.clone(), transcript));
                }
            }
        }
    }

    debug_assert!(enriched.validate().is_empty());
    Ok((enriched, transcript))
}

/// Enhances a batch of trees in parallel, preserving input order. Each tree
/// is independent; per-tree failures come back as `Err` entries.
pub fn enhance_batch(
    trees: &[PropagationTree],
    gateway: &Gateway,
    config: &EnhanceConfig,
) -> Vec<Result<(PropagationTree, GenerationTranscript), EnhanceError>> {
    trees
        .par_iter()
        .map(|tree| enhance(tree, gateway, config))
        .collect()
}

/// Drops every synthetic node. The result of enhancing and then stripping is
/// exactly the input tree.
pub fn strip_synthetic(tree: &PropagationTree) -> PropagationTree {
    let mut stripped = tree.clone();
    stripped.nodes.retain(|n| n.origin == NodeOrigin::Real);
    stripped
}
