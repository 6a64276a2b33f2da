//! Document segmentation: one segment per focus sentence, preceding context
//! filling the remaining subword budget after the focus sentence and a
//! bounded window of following tokens are reserved.

use crate::conllu::Document;
use crate::tokenizer::SubwordTokenizer;

/// Upper bound on the right-context window, in subwords.
pub const MAX_RIGHT_CONTEXT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentConfig {
    /// Maximum total subwords per segment (512 during training).
    pub max_segment: usize,
    /// Whether to add surrounding context at all (the empty-node baseline
    /// processes bare sentences).
    pub with_context: bool,
}

impl SegmentConfig {
    pub fn new(max_segment: usize) -> Self {
        SegmentConfig { max_segment, with_context: true }
    }

    pub fn no_context(max_segment: usize) -> Self {
        SegmentConfig { max_segment, with_context: false }
    }
}

/// A node of the document, addressed by sentence and node index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordRef {
    pub sent: usize,
    pub node: usize,
}

#[derive(Debug, Clone)]
pub struct Segment {
    /// Sentence whose words this segment owns.
    pub sent_idx: usize,
    /// All words present: left context, focus, right context, in order.
    pub words: Vec<WordRef>,
    /// Index into `words` where the focus range starts.
    pub focus_start: usize,
    pub focus_len: usize,
    pub subword_ids: Vec<u32>,
    /// First-subword offset of each entry of `words`.
    pub first_subword: Vec<usize>,
    pub left_subwords: usize,
    pub right_subwords: usize,
}

impl Segment {
    pub fn focus_words(&self) -> &[WordRef] {
        &self.words[self.focus_start..self.focus_start + self.focus_len]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentWarning {
    /// Focus sentence exceeded the subword budget and was split.
    SentenceSplit { sent: usize, chunks: usize },
    /// A single word exceeded the whole budget; its subwords were truncated.
    WordTruncated { sent: usize, node: usize },
}

/// Splits a document into segments. Focus ranges partition the document's
/// nodes; every right context is at most [`MAX_RIGHT_CONTEXT`] subwords.
pub fn segment_document(
    doc: &Document,
    tokenizer: &SubwordTokenizer,
    config: &SegmentConfig,
) -> (Vec<Segment>, Vec<SegmentWarning>) {
    segment_document_with(doc, config, |sent, node| {
        let n = &doc.sentences[sent].nodes[node];
        tokenizer.subwords(&n.form, n.id.is_empty_node())
    })
}

/// Segmentation over an arbitrary subword source (external encoder adapters
/// bring their own tokenizers).
pub fn segment_document_with(
    doc: &Document,
    config: &SegmentConfig,
    subwords: impl Fn(usize, usize) -> Vec<u32>,
) -> (Vec<Segment>, Vec<SegmentWarning>) {
    assert!(config.max_segment >= 1, "max_segment must be positive");
    let mut warnings = Vec::new();

    // Tokenize every node once.
    let mut pieces: Vec<Vec<Vec<u32>>> = Vec::with_capacity(doc.sentences.len());
    for (si, sent) in doc.sentences.iter().enumerate() {
        let mut row = Vec::with_capacity(sent.nodes.len());
        for ni in 0..sent.nodes.len() {
            let mut ids = subwords(si, ni);
            assert!(!ids.is_empty(), "tokenizer returned zero subwords");
            if ids.len() > config.max_segment {
                ids.truncate(config.max_segment);
                warnings.push(SegmentWarning::WordTruncated { sent: si, node: ni });
            }
            row.push(ids);
        }
        pieces.push(row);
    }

    // Flat node order for context walks.
    let flat: Vec<WordRef> = doc
        .sentences
        .iter()
        .enumerate()
        .flat_map(|(si, s)| (0..s.nodes.len()).map(move |ni| WordRef { sent: si, node: ni }))
        .collect();
    let flat_index = |w: WordRef| -> usize {
        doc.sentences[..w.sent].iter().map(|s| s.nodes.len()).sum::<usize>() + w.node
    };
    let size = |w: WordRef| pieces[w.sent][w.node].len();

    let mut segments = Vec::new();
    for (si, sent) in doc.sentences.iter().enumerate() {
        // Chunk the focus sentence greedily at the subword budget.
        let mut chunks: Vec<(usize, usize)> = Vec::new();
        let mut start = 0;
        let mut used = 0;
        for ni in 0..sent.nodes.len() {
            let c = pieces[si][ni].len();
            if ni > start && used + c > config.max_segment {
                chunks.push((start, ni));
                start = ni;
                used = 0;
            }
            used += c;
        }
        if start < sent.nodes.len() {
            chunks.push((start, sent.nodes.len()));
        }
        if chunks.len() > 1 {
            warnings.push(SegmentWarning::SentenceSplit { sent: si, chunks: chunks.len() });
        }

        for &(a, b) in &chunks {
            let focus: Vec<WordRef> = (a..b).map(|ni| WordRef { sent: si, node: ni }).collect();
            let focus_subwords: usize = focus.iter().map(|&w| size(w)).sum();

            // Right context: whole words, capped both by the window and the
            // remaining budget.
            let mut right: Vec<WordRef> = Vec::new();
            let mut right_subwords = 0;
            if config.with_context && !focus.is_empty() {
                let right_cap =
                    MAX_RIGHT_CONTEXT.min(config.max_segment.saturating_sub(focus_subwords));
                let mut idx = flat_index(*focus.last().expect("non-empty focus")) + 1;
                while idx < flat.len() {
                    let w = flat[idx];
                    if right_subwords + size(w) > right_cap {
                        break;
                    }
                    right_subwords += size(w);
                    right.push(w);
                    idx += 1;
                }
            }

            // Left context fills whatever budget remains, walking backwards.
            let mut left: Vec<WordRef> = Vec::new();
            let mut left_subwords = 0;
            if config.with_context && !focus.is_empty() {
                let left_cap =
                    config.max_segment.saturating_sub(focus_subwords + right_subwords);
                let mut idx = flat_index(focus[0]);
                while idx > 0 {
                    idx -= 1;
                    let w = flat[idx];
                    if left_subwords + size(w) > left_cap {
                        break;
                    }
                    left_subwords += size(w);
                    left.push(w);
                }
                left.reverse();
            }

            let mut words = left;
            let focus_start = words.len();
            let focus_len = focus.len();
            words.extend(focus);
            words.extend(right);

            let mut subword_ids = Vec::new();
            let mut first_subword = Vec::with_capacity(words.len());
            for &w in &words {
                first_subword.push(subword_ids.len());
                subword_ids.extend_from_slice(&pieces[w.sent][w.node]);
            }

            segments.push(Segment {
                sent_idx: si,
                words,
                focus_start,
                focus_len,
                subword_ids,
                first_subword,
                left_subwords,
                right_subwords,
            });
        }
    }
    (segments, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{Node, NodeId, Sentence};

    fn doc_of(sentences: &[&[&str]]) -> Document {
        let mut doc = Document::default();
        for words in sentences {
            let mut sent = Sentence::default();
            for (i, w) in words.iter().enumerate() {
                sent.nodes.push(Node::bare(NodeId::Word(i as u32 + 1), *w));
            }
            doc.sentences.push(sent);
        }
        doc
    }

    fn tok(doc: &Document) -> SubwordTokenizer {
        SubwordTokenizer::build(
            doc.sentences.iter().flat_map(|s| s.nodes.iter()).map(|n| n.form.as_str()),
        )
    }

    #[test]
    fn single_short_sentence_has_no_context() {
        let doc = doc_of(&[&["a", "b", "c"]]);
        let (segments, warnings) = segment_document(&doc, &tok(&doc), &SegmentConfig::new(512));
        assert!(warnings.is_empty());
        assert_eq!(segments.len(), 1);
        assert_eq!(segments[0].left_subwords, 0);
        assert_eq!(segments[0].right_subwords, 0);
        assert_eq!(segments[0].focus_len, 3);
    }

    #[test]
    fn middle_sentence_gets_full_left_and_capped_right() {
        let s1: Vec<&str> = vec!["w"; 10];
        let s2: Vec<&str> = vec!["x"; 10];
        let s3: Vec<&str> = vec!["y"; 10];
        let doc = doc_of(&[&s1, &s2, &s3]);
        let (segments, _) = segment_document(&doc, &tok(&doc), &SegmentConfig::new(512));
        let seg = &segments[1];
        assert_eq!(seg.sent_idx, 1);
        assert_eq!(seg.left_subwords, 10);
        assert_eq!(seg.right_subwords, 10.min(MAX_RIGHT_CONTEXT));
        assert_eq!(seg.focus_len, 10);
    }

    #[test]
    fn focus_ranges_partition_document() {
        let s1: Vec<&str> = vec!["alpha"; 30];
        let s2: Vec<&str> = vec!["beta"; 70];
        let doc = doc_of(&[&s1, &s2]);
        let (segments, _) = segment_document(&doc, &tok(&doc), &SegmentConfig::new(64));
        let mut owned: Vec<WordRef> = segments.iter().flat_map(|s| s.focus_words().to_vec()).collect();
        let all: Vec<WordRef> = doc
            .sentences
            .iter()
            .enumerate()
            .flat_map(|(si, s)| (0..s.nodes.len()).map(move |ni| WordRef { sent: si, node: ni }))
            .collect();
        owned.sort_by_key(|w| (w.sent, w.node));
        assert_eq!(owned, all);
        for seg in &segments {
            assert!(seg.subword_ids.len() <= 64);
            assert!(seg.right_subwords <= MAX_RIGHT_CONTEXT);
        }
    }

    #[test]
    fn long_sentence_splits_with_warning() {
        let s: Vec<&str> = vec!["tok"; 100];
        let doc = doc_of(&[&s]);
        let (segments, warnings) = segment_document(&doc, &tok(&doc), &SegmentConfig::new(40));
        assert!(warnings
            .iter()
            .any(|w| matches!(w, SegmentWarning::SentenceSplit { sent: 0, chunks: 3 })));
        assert_eq!(segments.len(), 3);
    }
}
