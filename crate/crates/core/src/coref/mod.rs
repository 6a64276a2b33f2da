//! Mention detection, mention representation, and antecedent linking.
//!
//! Mentions are detected with per-word tags from the span codec, each
//! mention is represented as the concatenation of its first and last word
//! representation, and every mention picks its most likely entity link
//! (possibly itself) with a causal self-attention layer over all earlier
//! mentions of the document.
//!
//! In the single-stage variant the model also generates zero mentions
//! jointly: two empty-node candidates per word with a head that predicts
//! either NONE or the dependency relation. A zero mention is placed right
//! after its dependency head in the word order, its representation is the
//! candidate representation concatenated to itself, and it must consist of
//! exactly that single empty node.

pub mod infer;
pub mod prep;

use std::collections::HashMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::TagVocab;
use crate::conllu::Document;
use crate::encoder::{word_representations_var, EncoderConfig, ToyEncoder};
use crate::nn::{Dense, Graph, MlpBlock, ParamStore};
use crate::scalar::Scalar;
use crate::segment::{segment_document, Segment, SegmentConfig};
use crate::tape::Var;
use crate::zero::argmax;

const MASK_NEG: f64 = -1e9;

#[derive(Debug, Error)]
pub enum CorefError {
    #[error("ensemble members disagree on {0}")]
    EnsembleMismatch(String),
    #[error("ensemble needs at least one model")]
    EmptyEnsemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    TwoStage,
    SingleStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorefConfig {
    pub encoder: EncoderConfig,
    pub variant: Variant,
    pub tag_max_depth: u8,
    pub tag_max_opens: u8,
    pub tag_hidden: usize,
    /// Query/key width of the linking attention.
    pub link_dim: usize,
    /// Hidden width of the zero-mention candidate generator and label head
    /// (single-stage only).
    pub zero_hidden: usize,
    pub dropout: f64,
}

impl Default for CorefConfig {
    fn default() -> Self {
        CorefConfig {
            encoder: EncoderConfig::default(),
            variant: Variant::TwoStage,
            tag_max_depth: 4,
            tag_max_opens: 3,
            tag_hidden: 128,
            link_dim: 64,
            zero_hidden: 128,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MentionKind {
    Surface,
    Zero,
}

/// A mention in document coordinates: sentence index plus node-index span
/// within the sentence. Zero mentions anchor at their dependency head word
/// (`start == end == head word's node index`) and carry the relation label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionCandidate {
    pub sent: usize,
    pub start: usize,
    pub end: usize,
    pub kind: MentionKind,
    /// `(head word id, deprel, slot)` for single-stage zero mentions.
    pub zero: Option<(u32, String, usize)>,
}

impl MentionCandidate {
    pub fn surface(sent: usize, start: usize, end: usize) -> Self {
        MentionCandidate { sent, start, end, kind: MentionKind::Surface, zero: None }
    }

    /// Global ordering: (sentence, start, end, surface-before-zero, slot).
    /// Zero mentions sit just after their anchor word, so their position
    /// component is (anchor, 1) against (node, 0) for surface positions.
    pub fn sort_key(&self) -> (usize, usize, u8, usize, u8, usize) {
        let zero_rank = matches!(self.kind, MentionKind::Zero) as u8;
        let slot = self.zero.as_ref().map_or(0, |z| z.2);
        (self.sent, self.start, zero_rank, self.end, zero_rank, slot)
    }
}

/// Antecedent choice per mention: `antecedents[i] <= i`, equality meaning a
/// self-link that starts a new entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkDecision {
    pub antecedents: Vec<usize>,
}

/// Row-wise causal argmax over a score matrix (`scores[(i, j)]` for
/// `j <= i`), ties broken toward the smaller index.
pub fn decode_links(scores: &Array2<f64>) -> LinkDecision {
    let n = scores.dim().0;
    assert_eq!(scores.dim().1, n, "link score matrix must be square");
    let antecedents = (0..n)
        .map(|i| argmax(scores.row(i).iter().copied().take(i + 1)))
        .collect();
    LinkDecision { antecedents }
}

/// Union-find over link edges; entity ids are assigned in first-mention
/// order.
pub fn clusters_from_links(decision: &LinkDecision) -> Vec<Vec<usize>> {
    let n = decision.antecedents.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (i, &a) in decision.antecedents.iter().enumerate() {
        assert!(a <= i, "no forward links");
        let (ra, ri) = (find(&mut parent, a), find(&mut parent, i));
        if ra != ri {
            // Attach to the earlier root so cluster roots stay minimal.
            let (lo, hi) = (ra.min(ri), ra.max(ri));
            parent[hi] = lo;
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut cluster_of: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match cluster_of.get(&root) {
            Some(&c) => clusters[c].push(i),
            None => {
                cluster_of.insert(root, clusters.len());
                clusters.push(vec![i]);
            }
        }
    }
    clusters
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CorefModel<S: Scalar> {
    pub config: CorefConfig,
    pub tokenizer: crate::tokenizer::SubwordTokenizer,
    pub tag_vocab: TagVocab,
    /// Relation labels of the single-stage zero head (index 0 = unknown);
    /// the head's label space is NONE plus these.
    pub deprels: Vec<String>,
    pub store: ParamStore<S>,
    encoder: ToyEncoder,
    tag_head: MlpBlock,
    link_q: Dense,
    link_k: Dense,
    zero_cand1: MlpBlock,
    zero_cand2: MlpBlock,
    zero_label: MlpBlock,
}

impl<S: Scalar> CorefModel<S> {
    pub fn new(
        config: CorefConfig,
        tokenizer: crate::tokenizer::SubwordTokenizer,
        deprels: Vec<String>,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let d = config.encoder.d;
        let tag_vocab = TagVocab::new(config.tag_max_depth, config.tag_max_opens);
        let encoder = ToyEncoder::new(&mut store, &config.encoder, tokenizer.vocab_size(), &mut rng);
        let tag_head = MlpBlock::new(
            &mut store,
            "coref.tags",
            d,
            config.tag_hidden,
            tag_vocab.len(),
            &mut rng,
        );
        let link_q = Dense::new(&mut store, "coref.link_q", 2 * d, config.link_dim, &mut rng);
        let link_k = Dense::new(&mut store, "coref.link_k", 2 * d, config.link_dim, &mut rng);
        // Zero-mention machinery mirrors the empty-node baseline, with the
        // candidate width pinned to d so [c; c] matches mention widths.
        let zero_cand1 =
            MlpBlock::new(&mut store, "coref.zero_cand1", d, config.zero_hidden, d, &mut rng);
        let zero_cand2 =
            MlpBlock::new(&mut store, "coref.zero_cand2", 2 * d, config.zero_hidden, d, &mut rng);
        let zero_label = MlpBlock::new(
            &mut store,
            "coref.zero_label",
            d,
            config.zero_hidden,
            1 + deprels.len(),
            &mut rng,
        );
        CorefModel {
            config,
            tokenizer,
            tag_vocab,
            deprels,
            store,
            encoder,
            tag_head,
            link_q,
            link_k,
            zero_cand1,
            zero_cand2,
            zero_label,
        }
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn zero_label_count(&self) -> usize {
        1 + self.deprels.len()
    }

    pub fn segments(&self, doc: &Document, max_segment: usize) -> Vec<Segment> {
        let cfg = SegmentConfig::new(max_segment);
        segment_document(doc, &self.tokenizer, &cfg).0
    }

    /// Forward pass over one segment.
    pub fn forward_segment(&self, g: &mut Graph<S>, segment: &Segment) -> SegmentForward {
        let encoded = self.encoder.encode(g, &segment.subword_ids);
        let words = word_representations_var(g, segment, encoded);
        let focus: Vec<usize> =
            (segment.focus_start..segment.focus_start + segment.focus_len).collect();
        let focus_words = g.tape.gather_rows(words, &focus);
        let tag_logits = self.tag_head.apply(g, focus_words);

        let zero = match self.config.variant {
            Variant::TwoStage => None,
            Variant::SingleStage => {
                let c1 = self.zero_cand1.apply(g, words);
                let c2_in = g.tape.concat_cols(c1, words);
                let c2 = self.zero_cand2.apply(g, c2_in);
                let candidates = g.tape.concat_rows(&[c1, c2]);
                let labels = self.zero_label.apply(g, candidates);
                Some(ZeroForward { candidates, labels })
            }
        };
        SegmentForward { words, tag_logits, zero }
    }

    /// Representation matrix for a mention list: `[first ; last]` rows,
    /// zero mentions using their candidate representation twice.
    pub fn mention_reprs(
        &self,
        g: &mut Graph<S>,
        fwd: &SegmentForward,
        mentions: &[SegmentMention],
    ) -> Option<Var> {
        if mentions.is_empty() {
            return None;
        }
        let source = match &fwd.zero {
            Some(z) => g.tape.concat_rows(&[fwd.words, z.candidates]),
            None => fwd.words,
        };
        let word_count = g.tape.value(fwd.words).dim().0;
        let firsts: Vec<usize> = mentions
            .iter()
            .map(|m| match m.repr {
                MentionRepr::Span { first, .. } => first,
                MentionRepr::Candidate { row } => word_count + row,
            })
            .collect();
        let lasts: Vec<usize> = mentions
            .iter()
            .map(|m| match m.repr {
                MentionRepr::Span { last, .. } => last,
                MentionRepr::Candidate { row } => word_count + row,
            })
            .collect();
        let a = g.tape.gather_rows(source, &firsts);
        let b = g.tape.gather_rows(source, &lasts);
        Some(g.tape.concat_cols(a, b))
    }

    /// Causal link scores for a mention-representation matrix.
    pub fn link_scores(&self, g: &mut Graph<S>, reprs: Var) -> Var {
        let m = g.tape.value(reprs).dim().0;
        let q = self.link_q.apply(g, reprs);
        let k = self.link_k.apply(g, reprs);
        let kt = g.tape.transpose(k);
        let scores = g.tape.matmul(q, kt);
        let scores = g.tape.scale(scores, S::from_f64(1.0 / (self.config.link_dim as f64).sqrt()));
        let mask = Array2::from_shape_fn((m, m), |(i, j)| {
            if j <= i {
                S::zero()
            } else {
                S::from_f64(MASK_NEG)
            }
        });
        let mask = g.tape.constant(mask);
        g.tape.add(scores, mask)
    }

    /// Plain-array query/key projections for inference-time linking.
    pub fn link_q_plain(&self, reprs: &Array2<S>) -> Array2<S> {
        apply_dense_plain(&self.store, &self.link_q, reprs)
    }

    pub fn link_k_plain(&self, reprs: &Array2<S>) -> Array2<S> {
        apply_dense_plain(&self.store, &self.link_k, reprs)
    }
}

fn apply_dense_plain<S: Scalar>(store: &ParamStore<S>, dense: &Dense, x: &Array2<S>) -> Array2<S> {
    let w = store.value(dense.weight_id());
    let b = store.value(dense.bias_id());
    x.dot(w) + b
}

pub struct ZeroForward {
    /// Candidate representations, slot-major, shape `(2w, d)` over all
    /// segment words.
    pub candidates: Var,
    /// NONE-or-deprel logits, shape `(2w, 1 + |deprels|)`.
    pub labels: Var,
}

pub struct SegmentForward {
    /// Representations of every segment word (context and focus).
    pub words: Var,
    /// Tag logits over focus words only.
    pub tag_logits: Var,
    pub zero: Option<ZeroForward>,
}

/// How a mention's representation is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MentionRepr {
    /// Indices into the segment's word rows.
    Span { first: usize, last: usize },
    /// Row of the zero-candidate matrix.
    Candidate { row: usize },
}

/// A mention as seen from one segment, ready for representation building.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMention {
    pub mention: MentionCandidate,
    pub repr: MentionRepr,
    /// Entity key for training targets.
    pub entity: Option<usize>,
    /// Whether this mention's link is part of the segment's loss (i.e. it
    /// belongs to the focus range rather than the context).
    pub is_query: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn single_mention_self_links() {
        let scores = array![[0.3]];
        let decision = decode_links(&scores);
        assert_eq!(decision.antecedents, vec![0]);
    }

    #[test]
    fn hand_built_scores_pick_earlier() {
        let scores = array![[0.0, 9.0], [2.0, 1.0]];
        let decision = decode_links(&scores);
        // Row 0 ignores the masked column, row 1 prefers column 0.
        assert_eq!(decision.antecedents, vec![0, 0]);
    }

    #[test]
    fn decode_matches_bruteforce_and_is_shift_invariant() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.random_range(1..8usize);
            let scores = Array2::from_shape_fn((n, n), |_| rng.random_range(-3.0..3.0));
            let decision = decode_links(&scores);
            for i in 0..n {
                // Brute-force causal argmax.
                let mut best = 0;
                for j in 0..=i {
                    if scores[(i, j)] > scores[(i, best)] {
                        best = j;
                    }
                }
                assert_eq!(decision.antecedents[i], best);
                assert!(decision.antecedents[i] <= i);
            }
            // Per-row constant shifts leave decisions unchanged.
            let mut shifted = scores.clone();
            for i in 0..n {
                let c = rng.random_range(-5.0..5.0);
                shifted.row_mut(i).mapv_inplace(|x| x + c);
            }
            assert_eq!(decode_links(&shifted), decision);
        }
    }

    #[test]
    fn all_self_links_make_singletons() {
        let decision = LinkDecision { antecedents: vec![0, 1, 2, 3] };
        let clusters = clusters_from_links(&decision);
        assert_eq!(clusters, vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn chain_collapses_to_one_cluster() {
        let decision = LinkDecision { antecedents: vec![0, 0, 1] };
        let clusters = clusters_from_links(&decision);
        assert_eq!(clusters, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn clusters_match_transitive_closure_oracle() {
        let mut rng = StdRng::seed_from_u64(10);
        for _ in 0..300 {
            let n = rng.random_range(1..12usize);
            let antecedents: Vec<usize> = (0..n).map(|i| rng.random_range(0..=i)).collect();
            let clusters = clusters_from_links(&LinkDecision { antecedents: antecedents.clone() });

            // Oracle: repeated closure over the undirected edges {i, a(i)}.
            let mut label: Vec<usize> = (0..n).collect();
            loop {
                let mut changed = false;
                for (i, &a) in antecedents.iter().enumerate() {
                    let m = label[i].min(label[a]);
                    if label[i] != m || label[a] != m {
                        label[i] = m;
                        label[a] = m;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            let mut oracle: Vec<Vec<usize>> = Vec::new();
            let mut seen: HashMap<usize, usize> = HashMap::new();
            for i in 0..n {
                match seen.get(&label[i]) {
                    Some(&c) => oracle[c].push(i),
                    None => {
                        seen.insert(label[i], oracle.len());
                        oracle.push(vec![i]);
                    }
                }
            }
            assert_eq!(clusters, oracle);

            // Output partitions the mention list.
            let mut all: Vec<usize> = clusters.iter().flatten().copied().collect();
            all.sort();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn zero_mentions_sort_after_surface_at_same_anchor() {
        let surface = MentionCandidate::surface(0, 2, 2);
        let zero = MentionCandidate {
            sent: 0,
            start: 2,
            end: 2,
            kind: MentionKind::Zero,
            zero: Some((3, "nsubj".into(), 0)),
        };
        let next_surface = MentionCandidate::surface(0, 3, 3);
        assert!(surface.sort_key() < zero.sort_key());
        assert!(zero.sort_key() < next_surface.sort_key());
    }
}
