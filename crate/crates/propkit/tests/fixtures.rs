//! Integrity checks for the bundled test fixtures: the 20-thread Twitter-style
//! corpus, the 4-cascade Weibo-style file, and the labeled sentiment lines.

use std::path::PathBuf;

use propkit::ingest::{ingest, split, DatasetManifest, SourceFormat};
use propkit::metrics::{LexiconSentiment, Sentiment, SentimentProvider};
use propkit::tree::Label;

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

#[test]
fn pheme20_ingests_cleanly_with_known_counts() {
    let manifest = DatasetManifest::new("pheme20", SourceFormat::PhemeDir);
    let (trees, report) = ingest(&fixture_path("pheme20"), &manifest).unwrap();

    assert_eq!(trees.len(), 20);
    assert_eq!(report.trees_emitted, 20);
    assert_eq!(report.records_seen, 141);
    assert_eq!(report.nodes_emitted, 141);
    assert!(report.dropped.is_empty(), "fixture has no bad records");
    assert!(report.repaired.is_empty(), "fixture needs no repairs");

    assert!(trees.iter().all(|t| t.validate().is_empty()));
    let fake = trees.iter().filter(|t| t.label == Label::FakeNews).count();
    let real = trees.iter().filter(|t| t.label == Label::TrueNews).count();
    assert_eq!((real, fake), (10, 10));

    // Sorted by sample id, every node carries a timestamp and an author.
    let mut ids: Vec<&str> = trees.iter().map(|t| t.sample_id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    ids.dedup();
    assert_eq!(ids.len(), 20);
    for tree in &trees {
        assert!(tree.nodes.iter().all(|n| n.timestamp.is_some()));
        assert!(tree.nodes.iter().all(|n| n.author_id.is_some()));
        assert!(tree.node_count() >= 5, "threads have at least 4 reactions");
    }
}

#[test]
fn pheme20_ingestion_is_deterministic() {
    let manifest = DatasetManifest::new("pheme20", SourceFormat::PhemeDir);
    let (trees_a, report_a) = ingest(&fixture_path("pheme20"), &manifest).unwrap();
    let (trees_b, report_b) = ingest(&fixture_path("pheme20"), &manifest).unwrap();
    assert_eq!(trees_a, trees_b);
    assert_eq!(report_a, report_b);
}

#[test]
fn pheme20_splits_into_14_2_4_with_both_classes_in_train() {
    let manifest = DatasetManifest::new("pheme20", SourceFormat::PhemeDir);
    let (trees, _) = ingest(&fixture_path("pheme20"), &manifest).unwrap();
    let sets = split(&trees, &manifest).unwrap();
    assert_eq!(sets.train.len(), 14);
    assert_eq!(sets.val.len(), 2);
    assert_eq!(sets.test.len(), 4);
    assert!(sets.train.iter().any(|t| t.label == Label::FakeNews));
    assert!(sets.train.iter().any(|t| t.label == Label::TrueNews));
}

#[test]
fn weibo4_exercises_orphan_drop_and_timestamp_clamp() {
    let manifest = DatasetManifest::new("weibo4", SourceFormat::WeiboJson);
    let (trees, report) = ingest(&fixture_path("weibo4.json"), &manifest).unwrap();

    assert_eq!(trees.len(), 4);
    assert_eq!(report.records_seen, 12);
    assert_eq!(report.nodes_emitted, 11);
    assert!(trees.iter().all(|t| t.validate().is_empty()));

    assert_eq!(report.dropped.len(), 1);
    assert_eq!(report.dropped[0].record_id, "w-aurora/repost-2");
    assert_eq!(report.dropped[0].reason, "orphan node");

    assert_eq!(report.repaired.len(), 1);
    assert_eq!(report.repaired[0].sample_id, "w-harbor");
    assert!(report.repaired[0].action.contains("clamped"));

    let by_id = |id: &str| trees.iter().find(|t| t.sample_id == id).unwrap();
    assert_eq!(by_id("w-aurora").label, Label::FakeNews);
    assert_eq!(by_id("w-aurora").node_count(), 3);
    assert_eq!(by_id("w-harbor").label, Label::TrueNews);
    // The too-early repost was clamped up to the root's time.
    assert!(by_id("w-harbor")
        .nodes
        .iter()
        .all(|n| n.timestamp.unwrap() >= 6000));
    assert_eq!(by_id("w-meadow").label, Label::TrueNews);
    assert_eq!(by_id("w-meadow").node_count(), 4);
    assert_eq!(by_id("w-quarry").label, Label::FakeNews);
    assert_eq!(by_id("w-quarry").node_count(), 1);
}

#[test]
fn sentiment10_labels_match_the_lexicon_provider() {
    let text = std::fs::read_to_string(fixture_path("sentiment10.jsonl")).unwrap();
    let provider = LexiconSentiment;
    let mut checked = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        let content = row["text"].as_str().unwrap().to_string();
        let expected: Sentiment = row["label"].as_str().unwrap().parse().unwrap();
        let got = provider.sentiment(std::slice::from_ref(&content)).unwrap()[0];
        assert_eq!(got, expected, "text: {content}");
        checked += 1;
    }
    assert_eq!(checked, 10);
}
