//! Seeded generators for synthetic propagation trees.
//!
//! Everything here is deterministic: the same seed always yields the same
//! trees, byte for byte. The generators are used by the test suites and are
//! handy for benchmarking or demoing the pipeline without real data.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tree::{Label, PropNode, PropagationTree};

const WORDS: &[&str] = &[
    "report",
    "claims",
    "official",
    "source",
    "photo",
    "video",
    "witness",
    "update",
    "confirmed",
    "denied",
    "local",
    "breaking",
    "statement",
    "question",
    "evidence",
    "doubt",
    "share",
    "account",
    "reply",
    "thread",
];

fn sentence(rng: &mut ChaCha8Rng, tag: &str) -> String {
    let len = rng.gen_range(3..8);
    let mut words = Vec::with_capacity(len + 1);
    for _ in 0..len {
        words.push(WORDS[rng.gen_range(0..WORDS.len())]);
    }
    // The tag keeps contents unique within a tree, which structural
    // round-trip checks rely on.
    words.push("#");
    let mut text = words.join(" ");
    text.push_str(tag);
    text
}

/// A random well-formed tree with `node_count` nodes.
///
/// Parents are drawn uniformly from the earlier nodes, timestamps grow from
/// the parent's by 1..3600 seconds, and every node gets distinct content, so
/// the result always passes validation.
pub fn random_tree(seed: u64, node_count: usize) -> PropagationTree {
    assert!(node_count >= 1, "a tree needs at least the news root");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(node_count);
    let root_ts = 1_600_000_000 + rng.gen_range(0..1_000_000);
    nodes.push(
        PropNode::new(0, None, sentence(&mut rng, &format!("s{seed}n0")))
            .with_timestamp(root_ts)
            .with_author(format!("a{}", rng.gen_range(0..50))),
    );
    for index in 1..node_count {
        let parent = rng.gen_range(0..index);
        let parent_ts = nodes[parent]
            .timestamp
            .expect("generated nodes are timestamped");
        let ts = parent_ts + rng.gen_range(1..3600);
        nodes.push(
            PropNode::new(
                index,
                Some(parent),
                sentence(&mut rng, &format!("s{seed}n{index}")),
            )
            .with_timestamp(ts)
            .with_author(format!("a{}", rng.gen_range(0..50))),
        );
    }
    let label = match rng.gen_range(0..2) {
        0 => Label::TrueNews,
        _ => Label::FakeNews,
    };
    PropagationTree::new(format!("fx-{seed}"), label, nodes)
}

/// A batch of random trees with node counts drawn from `min_nodes..=max_nodes`.
pub fn random_trees(
    seed: u64,
    count: usize,
    min_nodes: usize,
    max_nodes: usize,
) -> Vec<PropagationTree> {
    assert!(1 <= min_nodes && min_nodes <= max_nodes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.gen_range(min_nodes..=max_nodes);
            let tree_seed = seed
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(i as u64);
            let mut tree = random_tree(tree_seed, n);
            tree.sample_id = format!("fx-{seed}-{i:03}");
            tree
        })
        .collect()
}

/// A deep chain with a few stray branches; labeled fake.
fn chain_tree(rng: &mut ChaCha8Rng, sample_id: String) -> PropagationTree {
    let depth = rng.gen_range(6..=12);
    let mut nodes = Vec::new();
    let root_ts = 1_650_000_000 + rng.gen_range(0..10_000);
    nodes.push(
        PropNode::new(0, None, sentence(rng, &format!("{sample_id}n0"))).with_timestamp(root_ts),
    );
    // Spine: each node replies to the previous one.
    for index in 1..=depth {
        let ts = nodes[index - 1].timestamp.unwrap() + rng.gen_range(30..600);
        nodes.push(
            PropNode::new(
                index,
                Some(index - 1),
                sentence(rng, &format!("{sample_id}n{index}")),
            )
            .with_timestamp(ts),
        );
    }
    // A couple of off-spine replies so chains are not literally paths.
    for _ in 0..rng.gen_range(0..3) {
        let index = nodes.len();
        let parent = rng.gen_range(1..=depth);
        let ts = nodes[parent].timestamp.unwrap() + rng.gen_range(30..600);
        nodes.push(
            PropNode::new(
                index,
                Some(parent),
                sentence(rng, &format!("{sample_id}n{index}")),
            )
            .with_timestamp(ts),
        );
    }
    PropagationTree::new(sample_id, Label::FakeNews, nodes)
}

/// A broad star with shallow follow-ups; labeled true.
fn star_tree(rng: &mut ChaCha8Rng, sample_id: String) -> PropagationTree {
    let breadth = rng.gen_range(6..=15);
    let mut nodes = Vec::new();
    let root_ts = 1_650_000_000 + rng.gen_range(0..10_000);
    nodes.push(
        PropNode::new(0, None, sentence(rng, &format!("{sample_id}n0"))).with_timestamp(root_ts),
    );
    for index in 1..=breadth {
        let ts = root_ts + rng.gen_range(30..600);
        nodes.push(
            PropNode::new(
                index,
                Some(0),
                sentence(rng, &format!("{sample_id}n{index}")),
            )
            .with_timestamp(ts),
        );
    }
    // At most a couple of depth-2 replies; stars stay shallow.
    for _ in 0..rng.gen_range(0..3) {
        let index = nodes.len();
        let parent = rng.gen_range(1..=breadth);
        let ts = nodes[parent].timestamp.unwrap() + rng.gen_range(30..600);
        nodes.push(
            PropNode::new(
                index,
                Some(parent),
                sentence(rng, &format!("{sample_id}n{index}")),
            )
            .with_timestamp(ts),
        );
    }
    PropagationTree::new(sample_id, Label::TrueNews, nodes)
}

/// A linearly separable detection corpus: deep chains labeled fake and broad
/// stars labeled true, interleaved deterministically.
pub fn separable_corpus(seed: u64, count: usize) -> Vec<PropagationTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            if i % 2 == 0 {
                chain_tree(&mut rng, format!("sep-{seed}-{i:03}-chain"))
            } else {
                star_tree(&mut rng, format!("sep-{seed}-{i:03}-star"))
            }
        })
        .collect()
}
