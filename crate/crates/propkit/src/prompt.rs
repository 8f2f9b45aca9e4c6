//! Prompt rendering and the node-JSON wire contract.
//!
//! Both learning-sample construction and tree enhancement talk to a language
//! model about propagation trees in the same textual shape: the tree is a
//! JSON array of node objects with the keys `"parent node index"`,
//! `"node index"`, and `"content"`, and the model is asked to answer with one
//! more object of the same shape. This module owns that rendering, the three
//! instruction templates (structured, minimal, detailed), and the strict
//! parser for model answers. Prompt texts are frozen: golden-file tests
//! compare them byte for byte.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// JSON object keys used for nodes inside prompts and model answers.
pub const KEY_PARENT_INDEX: &str = "parent node index";
pub const KEY_NODE_INDEX: &str = "node index";
pub const KEY_CONTENT: &str = "content";

/// Placeholder value marking the masked slot of a sub-path.
pub const MASK_TOKEN: &str = "[masked]";

/// The schema reminder appended to structured and detailed instructions.
const SCHEMA_HINT: &str = "{parent node index: num, node index: num, content: text}";

/// A node as it appears in a rendered sequence: parent position, own
/// position, and text. Positions are sequence-local — the root of a rendered
/// sequence is always 0 and each entry's parent appears earlier in it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTriple {
    pub parent: Option<usize>,
    pub index: usize,
    pub content: String,
}

impl NodeTriple {
    pub fn new(parent: Option<usize>, index: usize, content: impl Into<String>) -> Self {
        NodeTriple {
            parent,
            index,
            content: content.into(),
        }
    }
}

/// One rendered position of a sequence: a concrete node or the masked slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Slot {
    Node(NodeTriple),
    Mask,
}

/// Instruction template variants: `P1` structured (the default), `P2`
/// minimal, `P3` detailed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum TemplateId {
    #[default]
    P1,
    P2,
    P3,
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemplateId::P1 => write!(f, "P1"),
            TemplateId::P2 => write!(f, "P2"),
            TemplateId::P3 => write!(f, "P3"),
        }
    }
}

impl FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "P1" => Ok(TemplateId::P1),
            "P2" => Ok(TemplateId::P2),
            "P3" => Ok(TemplateId::P3),
            other => Err(format!(
                "unknown template '{other}', expected P1, P2, or P3"
            )),
        }
    }
}

fn json_string(text: &str) -> String {
    serde_json::to_string(text).expect("strings always serialize")
}

/// Renders one node object, e.g.
/// `{"parent node index": 0, "node index": 1, "content": "some reply"}`.
/// The root renders its parent as `null`.
pub fn render_node(triple: &NodeTriple) -> String {
    let parent = match triple.parent {
        Some(p) => p.to_string(),
        None => "null".to_string(),
    };
    format!(
        "{{\"{KEY_PARENT_INDEX}\": {parent}, \"{KEY_NODE_INDEX}\": {index}, \"{KEY_CONTENT}\": {content}}}",
        index = triple.index,
        content = json_string(&triple.content),
    )
}

/// Renders the masked slot with every field set to `"[masked]"`.
pub fn render_mask() -> String {
    format!(
        "{{\"{KEY_PARENT_INDEX}\": \"{MASK_TOKEN}\", \"{KEY_NODE_INDEX}\": \"{MASK_TOKEN}\", \"{KEY_CONTENT}\": \"{MASK_TOKEN}\"}}"
    )
}

/// Renders a sequence of slots as a JSON array literal.
pub fn render_sequence(slots: &[Slot]) -> String {
    let parts: Vec<String> = slots
        .iter()
        .map(|slot| match slot {
            Slot::Node(triple) => render_node(triple),
            Slot::Mask => render_mask(),
        })
        .collect();
    format!("[{}]", parts.join(", "))
}

/// Instruction asking the model to fill in the masked node of a sub-path.
pub fn render_masked_instruction(slots: &[Slot], template: TemplateId) -> String {
    let tree = render_sequence(slots);
    match template {
        TemplateId::P1 => format!(
            "Given the propagation tree: {tree}, please predict the masked comment node \
             ({mask}) in a JSON format as same as other nodes, i.e., {SCHEMA_HINT}.",
            mask = render_mask(),
        ),
        TemplateId::P2 => {
            format!("Given the propagation tree: {tree}, please predict the masked comment node.")
        }
        TemplateId::P3 => format!(
            "Given the propagation tree: {tree}, please carefully analyze the structural \
             patterns and semantic context, then predict the masked comment node that \
             maintains both structural consistency and semantic coherence in a JSON format, \
             i.e., {SCHEMA_HINT}."
        ),
    }
}

/// Instruction asking the model to extend the sequence with the next comment
/// node.
pub fn render_next_node_instruction(sequence: &[NodeTriple], template: TemplateId) -> String {
    let slots: Vec<Slot> = sequence.iter().cloned().map(Slot::Node).collect();
    let tree = render_sequence(&slots);
    match template {
        TemplateId::P1 => format!(
            "Given the propagation tree: {tree}, please predict the next comment node in a \
             JSON format as same as other nodes, i.e., {SCHEMA_HINT}."
        ),
        TemplateId::P2 => {
            format!("Given the propagation tree: {tree}, please predict the next comment node.")
        }
        TemplateId::P3 => format!(
            "Given the propagation tree: {tree}, please carefully analyze the structural \
             patterns and semantic context, then predict the next comment node that maintains \
             both structural consistency and semantic coherence in a JSON format, i.e., \
             {SCHEMA_HINT}."
        ),
    }
}

/// A parsed model answer: one concrete node object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateNode {
    pub parent_index: usize,
    pub node_index: usize,
    pub content: String,
}

/// Why a model answer failed to parse as a node object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeJsonIssue {
    /// The text is not valid JSON at all.
    MalformedJson(String),
    /// Valid JSON, but not an object with the three required fields of the
    /// required types.
    MissingField(String),
}

/// Strictly parses a model answer as a node object.
///
/// The answer must be a JSON object whose `"parent node index"` and
/// `"node index"` are non-negative integers and whose `"content"` is a
/// string. Surrounding whitespace is tolerated; nothing else is.
pub fn parse_candidate(raw: &str) -> Result<CandidateNode, NodeJsonIssue> {
    let value: serde_json::Value = serde_json::from_str(raw.trim())
        .map_err(|e| NodeJsonIssue::MalformedJson(e.to_string()))?;
    let object = value
        .as_object()
        .ok_or_else(|| NodeJsonIssue::MissingField("answer is not a JSON object".into()))?;

    let integer_field = |key: &str| -> Result<usize, NodeJsonIssue> {
        let value = object
            .get(key)
            .ok_or_else(|| NodeJsonIssue::MissingField(format!("missing field \"{key}\"")))?;
        value.as_u64().map(|n| n as usize).ok_or_else(|| {
            NodeJsonIssue::MissingField(format!("field \"{key}\" must be a non-negative integer"))
        })
    };

    let parent_index = integer_field(KEY_PARENT_INDEX)?;
    let node_index = integer_field(KEY_NODE_INDEX)?;
    let content = object
        .get(KEY_CONTENT)
        .and_then(|v| v.as_str())
        .ok_or_else(|| {
            NodeJsonIssue::MissingField(format!("field \"{KEY_CONTENT}\" must be a string"))
        })?
        .to_string();

    Ok(CandidateNode {
        parent_index,
        node_index,
        content,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_slots() -> Vec<Slot> {
        vec![
            Slot::Node(NodeTriple::new(None, 0, "breaking story")),
            Slot::Node(NodeTriple::new(Some(0), 1, "a reply")),
        ]
    }

    #[test]
    fn node_rendering_matches_contract() {
        assert_eq!(
            render_node(&NodeTriple::new(None, 0, "hello")),
            "{\"parent node index\": null, \"node index\": 0, \"content\": \"hello\"}"
        );
        assert_eq!(
            render_node(&NodeTriple::new(Some(2), 5, "with \"quotes\"")),
            "{\"parent node index\": 2, \"node index\": 5, \"content\": \"with \\\"quotes\\\"\"}"
        );
        assert_eq!(
            render_mask(),
            "{\"parent node index\": \"[masked]\", \"node index\": \"[masked]\", \
             \"content\": \"[masked]\"}"
        );
    }

    #[test]
    fn sequence_rendering_is_a_json_array() {
        let rendered = render_sequence(&two_node_slots());
        assert!(rendered.starts_with('['));
        assert!(rendered.ends_with(']'));
        // The rendered sequence must itself parse as JSON.
        let value: serde_json::Value = serde_json::from_str(&rendered).unwrap();
        assert_eq!(value.as_array().unwrap().len(), 2);
        assert_eq!(value[1]["parent node index"], 0);
    }

    #[test]
    fn masked_instruction_varies_by_template() {
        let mut slots = two_node_slots();
        slots.push(Slot::Mask);
        let p1 = render_masked_instruction(&slots, TemplateId::P1);
        let p2 = render_masked_instruction(&slots, TemplateId::P2);
        let p3 = render_masked_instruction(&slots, TemplateId::P3);
        assert!(p1.contains("in a JSON format as same as other nodes"));
        assert!(p1.ends_with("i.e., {parent node index: num, node index: num, content: text}."));
        assert!(p2.ends_with("please predict the masked comment node."));
        assert!(!p2.contains("JSON"));
        assert!(p3.contains("carefully analyze the structural patterns"));
    }

    #[test]
    fn next_node_instruction_varies_by_template() {
        let sequence = vec![NodeTriple::new(None, 0, "news")];
        let p1 = render_next_node_instruction(&sequence, TemplateId::P1);
        let p2 = render_next_node_instruction(&sequence, TemplateId::P2);
        let p3 = render_next_node_instruction(&sequence, TemplateId::P3);
        assert!(p1.contains("please predict the next comment node in a JSON format"));
        assert!(p2.ends_with("please predict the next comment node."));
        assert!(p3.contains("maintains both structural consistency and semantic coherence"));
    }

    #[test]
    fn candidate_parsing_accepts_the_contract_shape() {
        let parsed = parse_candidate(
            " {\"parent node index\": 0, \"node index\": 3, \"content\": \"ok then\"} \n",
        )
        .unwrap();
        assert_eq!(parsed.parent_index, 0);
        assert_eq!(parsed.node_index, 3);
        assert_eq!(parsed.content, "ok then");
    }

    #[test]
    fn candidate_parsing_distinguishes_malformed_from_missing() {
        assert!(matches!(
            parse_candidate("not json at all"),
            Err(NodeJsonIssue::MalformedJson(_))
        ));
        assert!(matches!(
            parse_candidate("[1, 2, 3]"),
            Err(NodeJsonIssue::MissingField(_))
        ));
        assert!(matches!(
            parse_candidate("{\"node index\": 1, \"content\": \"x\"}"),
            Err(NodeJsonIssue::MissingField(_))
        ));
        assert!(matches!(
            parse_candidate("{\"parent node index\": -1, \"node index\": 1, \"content\": \"x\"}"),
            Err(NodeJsonIssue::MissingField(_))
        ));
        assert!(matches!(
            parse_candidate("{\"parent node index\": 0, \"node index\": 1, \"content\": 5}"),
            Err(NodeJsonIssue::MissingField(_))
        ));
    }

    #[test]
    fn template_ids_parse_case_insensitively() {
        assert_eq!("p2".parse::<TemplateId>().unwrap(), TemplateId::P2);
        assert!("P9".parse::<TemplateId>().is_err());
    }
}
