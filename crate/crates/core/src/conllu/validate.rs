//! Corpus well-formedness checks. Violations are data, not failures.

use std::collections::BTreeSet;
use std::fmt;

use super::{Corpus, NodeId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub doc_index: usize,
    pub sent_index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sent_index {
            Some(si) => write!(f, "doc {} sent {}: {}", self.doc_index, si, self.message),
            None => write!(f, "doc {}: {}", self.doc_index, self.message),
        }
    }
}

/// Returns every invariant violation in the corpus; empty iff well-formed.
pub fn validate(corpus: &Corpus) -> Vec<Violation> {
    let mut out = Vec::new();
    for (di, doc) in corpus.documents.iter().enumerate() {
        for (si, sent) in doc.sentences.iter().enumerate() {
            let mut push = |message: String| {
                out.push(Violation { doc_index: di, sent_index: Some(si), message })
            };

            let word_ids: Vec<u32> = sent
                .nodes
                .iter()
                .filter_map(|n| match n.id {
                    NodeId::Word(w) => Some(w),
                    NodeId::Empty(_, _) => None,
                })
                .collect();
            let n = word_ids.len() as u32;
            for (i, &w) in word_ids.iter().enumerate() {
                if w != i as u32 + 1 {
                    push(format!("surface word ids are not 1..{n} consecutive (found {w} at rank {})", i + 1));
                    break;
                }
            }

            // Empty-node id shape: major within 0..n, minors consecutive from 1.
            let mut minors_seen: std::collections::BTreeMap<u32, u32> = Default::default();
            for node in &sent.nodes {
                if let NodeId::Empty(major, minor) = node.id {
                    if major > n {
                        push(format!("empty node {major}.{minor} follows nonexistent word {major}"));
                    }
                    let expect = minors_seen.get(&major).copied().unwrap_or(0) + 1;
                    if minor != expect {
                        push(format!("empty node {major}.{minor}: expected minor {expect}"));
                    }
                    minors_seen.insert(major, minor.max(expect));
                }
            }

            // Canonical interleaving: (major, minor) keys strictly increasing.
            for pair in sent.nodes.windows(2) {
                if pair[0].id.order_key() >= pair[1].id.order_key() {
                    push(format!(
                        "nodes {} and {} are out of canonical order",
                        pair[0].id, pair[1].id
                    ));
                }
            }

            let word_set: BTreeSet<u32> = word_ids.iter().copied().collect();
            for node in &sent.nodes {
                if let Some(h) = node.head {
                    if h != 0 && !word_set.contains(&h) {
                        push(format!("node {} has head {h} which is not a surface word", node.id));
                    }
                }
            }
        }

        let node_count = doc.node_count();
        for entity in &doc.entities {
            if entity.mentions.is_empty() {
                out.push(Violation {
                    doc_index: di,
                    sent_index: None,
                    message: format!("entity {} has no mentions", entity.id),
                });
            }
            for mention in &entity.mentions {
                let mut push = |message: String| {
                    out.push(Violation { doc_index: di, sent_index: None, message })
                };
                if mention.span.is_empty() {
                    push(format!("mention of entity {} has an empty span", entity.id));
                    continue;
                }
                if mention.end() >= node_count {
                    push(format!(
                        "mention of entity {} references position {} beyond document end",
                        entity.id,
                        mention.end()
                    ));
                    continue;
                }
                if mention.span.windows(2).any(|w| w[1] != w[0] + 1) {
                    push(format!("mention of entity {} has a non-contiguous span", entity.id));
                }
                if !mention.span.contains(&mention.head) {
                    push(format!(
                        "mention of entity {} has head position {} outside its span",
                        entity.id, mention.head
                    ));
                }
                let first = doc.locate(mention.start()).map(|(s, _)| s);
                let last = doc.locate(mention.end()).map(|(s, _)| s);
                if first != last {
                    push(format!("mention of entity {} crosses a sentence boundary", entity.id));
                }
            }
        }
    }
    out
}
