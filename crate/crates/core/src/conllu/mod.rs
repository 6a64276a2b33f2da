//! CoNLL-U reading, writing, and validation with CorefUD-style coreference
//! annotations.
//!
//! The reader keeps everything it does not interpret verbatim: comment
//! lines, multiword-token rows, the LEMMA/UPOS/XPOS/FEATS/DEPS columns, and
//! any MISC item other than `Entity`. `Entity` items are decoded into
//! [`Mention`]/[`Entity`] structures and regenerated on write, so
//! `parse -> serialize` round-trips files that use the canonical bracket
//! layout byte-for-byte and normalizes everything else deterministically.

mod entity;
mod parse;
mod validate;
mod write;

pub use entity::{EntityField, EntityHeader};
pub use parse::{parse_conllu, ParseWarning, Parsed};
pub use validate::{validate, Violation};
pub use write::serialize_conllu;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unmatched entity bracket(s) at end of document {doc}: {entity_ids:?}")]
    UnmatchedEntity { doc: String, entity_ids: Vec<String> },
    #[error("mention of entity {entity_id} crosses a sentence boundary")]
    CrossSentenceMention { entity_id: String },
    #[error("mention of entity {entity_id} has a non-contiguous span")]
    DiscontiguousMention { entity_id: String },
    #[error("mention of entity {entity_id} has an out-of-range node position {pos}")]
    MentionOutOfRange { entity_id: String, pos: usize },
}

/// Identifier of a CoNLL-U node line.
///
/// Surface words carry a plain integer word order; empty nodes carry a
/// `major.minor` pair where `major` is the surface word they follow
/// (`0` means sentence-initial).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeId {
    Word(u32),
    Empty(u32, u32),
}

impl NodeId {
    pub fn is_empty_node(&self) -> bool {
        matches!(self, NodeId::Empty(_, _))
    }

    /// Position in the canonical within-sentence ordering: word `m` sorts as
    /// `(m, 0)`, empty node `m.k` as `(m, k)`.
    pub fn order_key(&self) -> (u32, u32) {
        match *self {
            NodeId::Word(m) => (m, 0),
            NodeId::Empty(m, k) => (m, k),
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NodeId::Word(w) => write!(f, "{w}"),
            NodeId::Empty(m, k) => write!(f, "{m}.{k}"),
        }
    }
}

/// One MISC column item. The `Entity` item is interpreted (and regenerated on
/// write); everything else is carried verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MiscItem {
    /// Placeholder marking where the original `Entity=` item sat.
    EntitySlot,
    Opaque(String),
}

/// A node line: a surface word or an empty node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: String,
    /// `Some(0)` is the artificial root; `None` renders as `_`.
    pub head: Option<u32>,
    pub deprel: String,
    pub deps: String,
    pub misc: Vec<MiscItem>,
}

impl Node {
    /// Bare node with every opaque column set to `_`.
    pub fn bare(id: NodeId, form: impl Into<String>) -> Self {
        Node {
            id,
            form: form.into(),
            lemma: "_".into(),
            upos: "_".into(),
            xpos: "_".into(),
            feats: "_".into(),
            head: None,
            deprel: "_".into(),
            deps: "_".into(),
            misc: Vec::new(),
        }
    }
}

/// Multiword-token range line, carried verbatim and re-emitted before its
/// first covered word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwtLine {
    pub start: u32,
    pub end: u32,
    /// All ten raw columns, tab-joined on output.
    pub cols: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    /// Comment lines (including the leading `#`), emitted verbatim.
    pub comments: Vec<String>,
    /// Word and empty-node lines in file order (canonically: word `m`
    /// followed by empty nodes `m.1`, `m.2`, ...).
    pub nodes: Vec<Node>,
    pub mwts: Vec<MwtLine>,
}

impl Sentence {
    pub fn word_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.id.is_empty_node()).count()
    }

    /// Index within `nodes` of the surface word with this id.
    pub fn word_index(&self, word_id: u32) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == NodeId::Word(word_id))
    }

    /// Inserts a node keeping the canonical `(major, minor)` ordering.
    /// Returns the index it was placed at.
    pub fn insert_node(&mut self, node: Node) -> usize {
        let key = node.id.order_key();
        let idx = self
            .nodes
            .iter()
            .position(|n| n.id.order_key() > key)
            .unwrap_or(self.nodes.len());
        self.nodes.insert(idx, node);
        idx
    }

    /// Next free minor for an empty node following surface word `major`.
    pub fn next_empty_minor(&self, major: u32) -> u32 {
        self.nodes
            .iter()
            .filter_map(|n| match n.id {
                NodeId::Empty(m, k) if m == major => Some(k),
                _ => None,
            })
            .max()
            .map_or(1, |k| k + 1)
    }
}

/// Position of a node in the flattened document-level node ordering.
pub type NodePos = usize;

/// A coreference mention: a contiguous run of node positions with a
/// designated head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    /// Document-level node positions, ascending and contiguous.
    pub span: Vec<NodePos>,
    pub head: NodePos,
    pub entity_id: String,
    pub etype: Option<String>,
    pub other: Option<String>,
}

impl Mention {
    pub fn new(span: Vec<NodePos>, head: NodePos, entity_id: impl Into<String>) -> Self {
        Mention { span, head, entity_id: entity_id.into(), etype: None, other: None }
    }

    pub fn start(&self) -> NodePos {
        *self.span.first().expect("mention span is non-empty")
    }

    pub fn end(&self) -> NodePos {
        *self.span.last().expect("mention span is non-empty")
    }

    /// 1-based index of the head within the span.
    pub fn head_index(&self) -> usize {
        self.span.iter().position(|&p| p == self.head).map_or(1, |i| i + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub mentions: Vec<Mention>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: Option<String>,
    pub sentences: Vec<Sentence>,
    /// Entities in first-mention order; mention spans are document-level
    /// node positions (see [`Document::node_at`]).
    pub entities: Vec<Entity>,
}

impl Document {
    pub fn node_count(&self) -> usize {
        self.sentences.iter().map(|s| s.nodes.len()).sum()
    }

    /// Maps a document-level position to `(sentence index, node index)`.
    pub fn locate(&self, pos: NodePos) -> Option<(usize, usize)> {
        let mut offset = 0;
        for (si, sent) in self.sentences.iter().enumerate() {
            if pos < offset + sent.nodes.len() {
                return Some((si, pos - offset));
            }
            offset += sent.nodes.len();
        }
        None
    }

    pub fn node_at(&self, pos: NodePos) -> Option<&Node> {
        let (si, ni) = self.locate(pos)?;
        Some(&self.sentences[si].nodes[ni])
    }

    /// Document-level position of node `ni` of sentence `si`.
    pub fn position_of(&self, si: usize, ni: usize) -> NodePos {
        self.sentences[..si].iter().map(|s| s.nodes.len()).sum::<usize>() + ni
    }

    pub fn all_mentions(&self) -> impl Iterator<Item = &Mention> {
        self.entities.iter().flat_map(|e| e.mentions.iter())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    /// Field layout of `Entity` opening brackets, from `# global.Entity`.
    pub entity_header: EntityHeader,
}

impl Corpus {
    pub fn sentence_count(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }

    /// Total number of surface words (the corpus "word size" used for
    /// sampling weights).
    pub fn word_count(&self) -> usize {
        self.documents
            .iter()
            .flat_map(|d| d.sentences.iter())
            .map(|s| s.word_count())
            .sum()
    }

    /// Drops all coreference annotations.
    pub fn strip_entities(&mut self) {
        for doc in &mut self.documents {
            doc.entities.clear();
            for sent in &mut doc.sentences {
                for node in &mut sent.nodes {
                    node.misc.retain(|m| !matches!(m, MiscItem::EntitySlot));
                }
            }
        }
    }

    /// Drops all empty nodes. Entities must be stripped first (mention
    /// positions would otherwise dangle); callers that want a raw-text
    /// corpus call [`Corpus::strip_entities`] and then this.
    pub fn strip_empty_nodes(&mut self) {
        for doc in &mut self.documents {
            for sent in &mut doc.sentences {
                sent.nodes.retain(|n| !n.id.is_empty_node());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_insert_order() {
        let mut sent = Sentence::default();
        sent.nodes.push(Node::bare(NodeId::Word(1), "a"));
        sent.nodes.push(Node::bare(NodeId::Word(2), "b"));
        let idx = sent.insert_node(Node::bare(NodeId::Empty(1, 1), "_"));
        assert_eq!(idx, 1);
        let idx = sent.insert_node(Node::bare(NodeId::Empty(1, 2), "_"));
        assert_eq!(idx, 2);
        let idx = sent.insert_node(Node::bare(NodeId::Empty(0, 1), "_"));
        assert_eq!(idx, 0);
        let ids: Vec<NodeId> = sent.nodes.iter().map(|n| n.id).collect();
        assert_eq!(
            ids,
            vec![
                NodeId::Empty(0, 1),
                NodeId::Word(1),
                NodeId::Empty(1, 1),
                NodeId::Empty(1, 2),
                NodeId::Word(2),
            ]
        );
    }

    #[test]
    fn next_minor_counts_per_major() {
        let mut sent = Sentence::default();
        sent.nodes.push(Node::bare(NodeId::Word(1), "a"));
        assert_eq!(sent.next_empty_minor(1), 1);
        sent.insert_node(Node::bare(NodeId::Empty(1, 1), "_"));
        assert_eq!(sent.next_empty_minor(1), 2);
        assert_eq!(sent.next_empty_minor(0), 1);
    }

    #[test]
    fn document_positions() {
        let mut doc = Document::default();
        let mut s1 = Sentence::default();
        s1.nodes.push(Node::bare(NodeId::Word(1), "a"));
        s1.nodes.push(Node::bare(NodeId::Word(2), "b"));
        let mut s2 = Sentence::default();
        s2.nodes.push(Node::bare(NodeId::Word(1), "c"));
        doc.sentences = vec![s1, s2];
        assert_eq!(doc.locate(2), Some((1, 0)));
        assert_eq!(doc.node_at(2).unwrap().form, "c");
        assert_eq!(doc.position_of(1, 0), 2);
        assert_eq!(doc.locate(3), None);
    }
}
