//! Empty-node prediction: the stage-1 baseline.
//!
//! For every input word the model generates two latent empty-node
//! candidates and runs three heads over them: existence (does this
//! candidate produce an empty node), word order (which word the empty node
//! follows, chosen by attention over the sentence words), and dependency
//! relation (classified from the candidate joined with the representation
//! of the most likely word-order position). The generating word becomes the
//! dependency head of the predicted node.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::{Corpus, Node, NodeId, Sentence};
use crate::encoder::{word_representations_var, EncoderConfig, ToyEncoder};
use crate::nn::{Graph, MlpBlock, ParamStore};
use crate::scalar::Scalar;
use crate::segment::{segment_document, Segment, SegmentConfig};
use crate::tape::{sigmoid, Var};
use crate::tokenizer::SubwordTokenizer;

#[derive(Debug, Error)]
pub enum ZeroError {
    #[error("gold and predicted corpora have different shapes: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroPredictorConfig {
    pub encoder: EncoderConfig,
    /// Width of the dense-relu-dropout blocks in front of each head.
    pub hidden_units: usize,
    /// Candidate representation width.
    pub candidate_dim: usize,
    /// Query/key width of the word-order attention head.
    pub attention_dim: usize,
    pub dropout: f64,
    pub existence_threshold: f64,
}

impl Default for ZeroPredictorConfig {
    fn default() -> Self {
        ZeroPredictorConfig {
            encoder: EncoderConfig::default(),
            hidden_units: 2048,
            candidate_dim: 768,
            attention_dim: 128,
            dropout: 0.5,
            existence_threshold: 0.5,
        }
    }
}

/// A predicted empty node, in the coordinates used for evaluation: the
/// dependency head word, the relation label, and the word the node follows
/// in the surface order (0 = sentence-initial).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EmptyNodePrediction {
    pub head_word: u32,
    pub deprel: String,
    pub order_after: u32,
}

/// Per-candidate forward outputs for one sentence chunk. Candidates are
/// slot-major: rows `0..n` are slot 1, rows `n..2n` slot 2.
pub struct CandidateOutputs {
    pub n_words: usize,
    pub candidates: Var,
    /// Existence logits, shape `(2n, 1)`.
    pub existence: Var,
    /// Word-order logits over the chunk's words, shape `(2n, n)`.
    pub order: Var,
    /// Dependency-relation logits, shape `(2n, |deprels|)`.
    pub deprel: Var,
    /// Word chosen by the order head for each candidate (0-based chunk
    /// index); feeds the deprel head.
    pub order_argmax: Vec<usize>,
}

/// Gold targets for one candidate slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldSlot {
    pub exists: bool,
    /// 0-based chunk index of the word the node follows; `None` masks the
    /// order loss (sentence-initial gold nodes are not representable by the
    /// order head, which scores existing words only).
    pub order_target: Option<usize>,
    pub deprel_id: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldAlignment {
    /// Slot-major, aligned with [`CandidateOutputs`] rows.
    pub slots: Vec<GoldSlot>,
    /// Gold nodes beyond the two-per-head-word cap.
    pub dropped_over_cap: usize,
    /// Gold nodes whose head is not a surface word of the chunk.
    pub dropped_unheaded: usize,
}

impl GoldAlignment {
    pub fn positive_count(&self) -> usize {
        self.slots.iter().filter(|s| s.exists).count()
    }
}

/// Loss terms for one chunk; `total` is their plain sum.
pub struct ZeroLoss {
    pub total: Var,
    pub existence: f64,
    pub order: f64,
    pub deprel: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ZeroModel<S: Scalar> {
    pub config: ZeroPredictorConfig,
    pub tokenizer: SubwordTokenizer,
    /// Relation labels; index 0 is the unknown label.
    pub deprels: Vec<String>,
    pub store: ParamStore<S>,
    encoder: ToyEncoder,
    cand1: MlpBlock,
    cand2: MlpBlock,
    exist_head: MlpBlock,
    order_query: MlpBlock,
    order_key: crate::nn::Dense,
    deprel_head: MlpBlock,
}

/// Deprel vocabulary from gold empty nodes: observed labels plus `<unk>`.
pub fn deprel_vocabulary<'a>(corpora: impl Iterator<Item = &'a Corpus>) -> Vec<String> {
    let mut labels: Vec<String> = corpora
        .flat_map(|c| c.documents.iter())
        .flat_map(|d| d.sentences.iter())
        .flat_map(|s| s.nodes.iter())
        .filter(|n| n.id.is_empty_node())
        .map(|n| n.deprel.clone())
        .collect();
    labels.sort();
    labels.dedup();
    let mut out = vec!["<unk>".to_string()];
    out.extend(labels);
    out
}

impl<S: Scalar> ZeroModel<S> {
    pub fn new(
        config: ZeroPredictorConfig,
        tokenizer: SubwordTokenizer,
        deprels: Vec<String>,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let d = config.d();
        let encoder = ToyEncoder::new(&mut store, &config.encoder, tokenizer.vocab_size(), &mut rng);
        let cand1 = MlpBlock::new(
            &mut store,
            "zero.cand1",
            d,
            config.hidden_units,
            config.candidate_dim,
            &mut rng,
        );
        let cand2 = MlpBlock::new(
            &mut store,
            "zero.cand2",
            config.candidate_dim + d,
            config.hidden_units,
            config.candidate_dim,
            &mut rng,
        );
        let exist_head = MlpBlock::new(
            &mut store,
            "zero.exist",
            config.candidate_dim,
            config.hidden_units,
            1,
            &mut rng,
        );
        let order_query = MlpBlock::new(
            &mut store,
            "zero.order_q",
            config.candidate_dim,
            config.hidden_units,
            config.attention_dim,
            &mut rng,
        );
        let order_key =
            crate::nn::Dense::new(&mut store, "zero.order_k", d, config.attention_dim, &mut rng);
        let deprel_head = MlpBlock::new(
            &mut store,
            "zero.deprel",
            config.candidate_dim + d,
            config.hidden_units,
            deprels.len(),
            &mut rng,
        );
        ZeroModel {
            config,
            tokenizer,
            deprels,
            store,
            encoder,
            cand1,
            cand2,
            exist_head,
            order_query,
            order_key,
            deprel_head,
        }
    }

    /// Structural widths, used by invariant checks: (candidate width, word
    /// width, deprel-head input width).
    pub fn head_widths(&self) -> (usize, usize, usize) {
        (self.config.candidate_dim, self.config.d(), self.deprel_head.hidden.in_dim)
    }

    pub fn deprel_id(&self, label: &str) -> usize {
        self.deprels.iter().position(|d| d == label).unwrap_or(0)
    }

    /// Segments a document for this model: bare sentences, no context.
    pub fn segments(&self, doc: &crate::conllu::Document) -> Vec<Segment> {
        let cfg = SegmentConfig::no_context(self.config.encoder.max_segment_train);
        segment_document(doc, &self.tokenizer, &cfg).0
    }

    /// Word representations for a chunk's focus words.
    pub fn focus_word_reprs(&self, g: &mut Graph<S>, segment: &Segment) -> Var {
        let encoded = self.encoder.encode(g, &segment.subword_ids);
        let words = word_representations_var(g, segment, encoded);
        let focus: Vec<usize> =
            (segment.focus_start..segment.focus_start + segment.focus_len).collect();
        g.tape.gather_rows(words, &focus)
    }

    /// Builds the candidate set: two per word, slot-major.
    pub fn generate_candidates(&self, g: &mut Graph<S>, word_reprs: Var) -> Var {
        let c1 = self.cand1.apply(g, word_reprs);
        let c2_in = g.tape.concat_cols(c1, word_reprs);
        let c2 = self.cand2.apply(g, c2_in);
        g.tape.concat_rows(&[c1, c2])
    }

    /// Runs the three heads over a candidate set.
    pub fn predict_heads(&self, g: &mut Graph<S>, candidates: Var, word_reprs: Var) -> CandidateOutputs {
        let n_words = g.tape.value(word_reprs).dim().0;
        let existence = self.exist_head.apply(g, candidates);

        let q = self.order_query.apply(g, candidates);
        let k = self.order_key.apply(g, word_reprs);
        let kt = g.tape.transpose(k);
        let scores = g.tape.matmul(q, kt);
        let order = g.tape.scale(scores, S::from_f64(1.0 / (self.config.attention_dim as f64).sqrt()));

        let order_argmax: Vec<usize> =
            g.tape.value(order).rows().into_iter().map(|row| argmax(row.iter().copied())).collect();
        let picked = g.tape.gather_rows(word_reprs, &order_argmax);
        let deprel_in = g.tape.concat_cols(candidates, picked);
        let deprel = self.deprel_head.apply(g, deprel_in);

        CandidateOutputs { n_words, candidates, existence, order, deprel, order_argmax }
    }

    pub fn forward(&self, g: &mut Graph<S>, segment: &Segment) -> CandidateOutputs {
        let word_reprs = self.focus_word_reprs(g, segment);
        let candidates = self.generate_candidates(g, word_reprs);
        self.predict_heads(g, candidates, word_reprs)
    }

    /// Aligns a sentence's gold empty nodes to candidate slots: grouped by
    /// dependency-head word, ordered by word-order position, first two per
    /// group assigned to slots 1 and 2. `gold_sentence` carries the empty
    /// nodes; `surface_doc` is the surface-only view the segment was built
    /// from.
    pub fn align_gold(
        &self,
        gold_sentence: &Sentence,
        surface_doc: &crate::conllu::Document,
        segment: &Segment,
    ) -> GoldAlignment {
        let focus = segment.focus_words();
        let n = focus.len();
        let mut alignment = GoldAlignment { slots: vec![GoldSlot::default(); 2 * n], ..Default::default() };

        // Chunk word id range (1-based, inclusive).
        let word_id_at = |i: usize| match surface_doc.sentences[focus[i].sent].nodes[focus[i].node].id {
            NodeId::Word(w) => w,
            NodeId::Empty(_, _) => unreachable!("zero-model input is surface-only"),
        };
        if n == 0 {
            return alignment;
        }
        let lo = word_id_at(0);
        let hi = word_id_at(n - 1);

        let mut gold: Vec<(u32, u32, u32, &str)> = gold_sentence
            .nodes
            .iter()
            .filter_map(|node| match node.id {
                NodeId::Empty(major, minor) => {
                    Some((node.head?, major, minor, node.deprel.as_str()))
                }
                NodeId::Word(_) => None,
            })
            .collect();
        gold.sort_by_key(|&(head, major, minor, _)| (head, major, minor));

        let mut used: std::collections::HashMap<u32, usize> = Default::default();
        for (head, major, _minor, deprel) in gold {
            if head < lo || head > hi {
                alignment.dropped_unheaded += 1;
                continue;
            }
            let slot = *used.get(&head).unwrap_or(&0);
            if slot >= 2 {
                alignment.dropped_over_cap += 1;
                continue;
            }
            used.insert(head, slot + 1);
            let word_idx = (head - lo) as usize;
            let order_target = if major >= lo && major <= hi {
                Some((major - lo) as usize)
            } else {
                // Sentence-initial (major 0) or out-of-chunk positions are
                // not scorable by the order head.
                None
            };
            alignment.slots[slot * n + word_idx] = GoldSlot {
                exists: true,
                order_target,
                deprel_id: Some(self.deprel_id(deprel)),
            };
        }
        alignment
    }

    /// Unweighted sum of the three head losses.
    pub fn loss(&self, g: &mut Graph<S>, out: &CandidateOutputs, gold: &GoldAlignment) -> ZeroLoss {
        let rows = 2 * out.n_words;
        assert_eq!(gold.slots.len(), rows, "alignment size mismatch");

        let mut exist_targets = Array2::zeros((rows, 1));
        for (i, slot) in gold.slots.iter().enumerate() {
            if slot.exists {
                exist_targets[(i, 0)] = S::one();
            }
        }
        let exist_weights = Array2::from_elem((rows, 1), S::one());
        let existence = g.tape.bce_sum(out.existence, exist_targets, exist_weights);

        let mut order_targets = Array2::zeros((rows, out.n_words));
        let mut order_weights = vec![S::zero(); rows];
        for (i, slot) in gold.slots.iter().enumerate() {
            if let Some(t) = slot.order_target {
                order_targets[(i, t)] = S::one();
                order_weights[i] = S::one();
            }
        }
        let order = g.tape.ce_rows(out.order, order_targets, order_weights);

        let mut deprel_targets = Array2::zeros((rows, self.deprels.len()));
        let mut deprel_weights = vec![S::zero(); rows];
        for (i, slot) in gold.slots.iter().enumerate() {
            if let Some(id) = slot.deprel_id {
                deprel_targets[(i, id)] = S::one();
                deprel_weights[i] = S::one();
            }
        }
        let deprel = g.tape.ce_rows(out.deprel, deprel_targets, deprel_weights);

        let partial = g.tape.add(existence, order);
        let total = g.tape.add(partial, deprel);
        ZeroLoss {
            total,
            existence: g.tape.scalar_value(existence).to_f64(),
            order: g.tape.scalar_value(order).to_f64(),
            deprel: g.tape.scalar_value(deprel).to_f64(),
        }
    }

    /// Per-head probabilities extracted from a forward pass (ensembling
    /// averages these across models before decoding).
    pub fn probabilities(&self, g: &Graph<S>, out: &CandidateOutputs) -> ZeroProbs {
        ZeroProbs {
            n_words: out.n_words,
            existence: g.tape.value(out.existence).mapv(|x| sigmoid(x).to_f64()),
            order: softmax_rows_f64(g.tape.value(out.order)),
            deprel: softmax_rows_f64(g.tape.value(out.deprel)),
        }
    }

    /// Predicts empty nodes for every sentence of a surface-only document.
    pub fn predict_document(&self, doc: &crate::conllu::Document) -> Vec<Vec<EmptyNodePrediction>> {
        let mut per_sentence = vec![Vec::new(); doc.sentences.len()];
        for segment in self.segments(doc) {
            let mut g = Graph::eval(&self.store);
            let out = self.forward(&mut g, &segment);
            let probs = self.probabilities(&g, &out);
            let preds = decode_probs(&probs, &segment, doc, self.config.existence_threshold, &self.deprels);
            per_sentence[segment.sent_idx].extend(preds);
        }
        per_sentence
    }
}

impl ZeroPredictorConfig {
    pub fn d(&self) -> usize {
        self.encoder.d
    }
}

/// Probability-space outputs of the three heads.
#[derive(Debug, Clone)]
pub struct ZeroProbs {
    pub n_words: usize,
    pub existence: Array2<f64>,
    pub order: Array2<f64>,
    pub deprel: Array2<f64>,
}

fn softmax_rows_f64<S: Scalar>(logits: &Array2<S>) -> Array2<f64> {
    let mut out = logits.mapv(|x| x.to_f64());
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum: f64 = row.iter().sum();
        row.mapv_inplace(|x| x / sum);
    }
    out
}

pub fn argmax<S: PartialOrd + Copy>(values: impl Iterator<Item = S>) -> usize {
    let mut best = 0;
    let mut best_val: Option<S> = None;
    for (i, v) in values.enumerate() {
        if best_val.map_or(true, |b| v > b) {
            best = i;
            best_val = Some(v);
        }
    }
    best
}

/// Decodes head probabilities into empty-node predictions for a chunk.
pub fn decode_probs(
    probs: &ZeroProbs,
    segment: &Segment,
    doc: &crate::conllu::Document,
    threshold: f64,
    deprels: &[String],
) -> Vec<EmptyNodePrediction> {
    let n = probs.n_words;
    let focus = segment.focus_words();
    assert_eq!(focus.len(), n);
    let word_id = |i: usize| match doc.sentences[focus[i].sent].nodes[focus[i].node].id {
        NodeId::Word(w) => w,
        NodeId::Empty(_, _) => unreachable!("zero-model input is surface-only"),
    };
    let mut out = Vec::new();
    for w in 0..n {
        for slot in 0..2 {
            let row = slot * n + w;
            if probs.existence[(row, 0)] <= threshold {
                continue;
            }
            let order_idx = argmax(probs.order.row(row).iter().copied());
            let deprel_idx = argmax(probs.deprel.row(row).iter().copied());
            out.push(EmptyNodePrediction {
                head_word: word_id(w),
                deprel: deprels[deprel_idx].clone(),
                order_after: word_id(order_idx),
            });
        }
    }
    out
}

/// Inserts predictions into a sentence as empty-node rows (`FORM` is `_`,
/// HEAD/DEPREL filled, minors assigned in prediction order).
pub fn insert_empty_nodes(sentence: &mut Sentence, predictions: &[EmptyNodePrediction]) {
    let mut sorted = predictions.to_vec();
    sorted.sort();
    for pred in sorted {
        let minor = sentence.next_empty_minor(pred.order_after);
        let mut node = Node::bare(NodeId::Empty(pred.order_after, minor), "_");
        node.head = Some(pred.head_word);
        node.deprel = pred.deprel.clone();
        sentence.insert_node(node);
    }
}

/// Gold/predicted triples of one sentence, for evaluation.
pub fn sentence_triples(sentence: &Sentence) -> Vec<EmptyNodePrediction> {
    sentence
        .nodes
        .iter()
        .filter_map(|n| match n.id {
            NodeId::Empty(major, _) => Some(EmptyNodePrediction {
                head_word: n.head.unwrap_or(0),
                deprel: n.deprel.clone(),
                order_after: major,
            }),
            NodeId::Word(_) => None,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub gold_total: usize,
    pub pred_total: usize,
}

/// Table-style intrinsic evaluation: a predicted empty node is correct iff
/// its dependency head, dependency relation, and word order all match,
/// counted per sentence as a multiset intersection.
pub fn evaluate_empty_nodes(gold: &Corpus, pred: &Corpus) -> Result<PrecisionRecall, ZeroError> {
    if gold.documents.len() != pred.documents.len() {
        return Err(ZeroError::ShapeMismatch(format!(
            "{} vs {} documents",
            gold.documents.len(),
            pred.documents.len()
        )));
    }
    let mut matched = 0;
    let mut gold_total = 0;
    let mut pred_total = 0;
    for (gd, pd) in gold.documents.iter().zip(&pred.documents) {
        if gd.sentences.len() != pd.sentences.len() {
            return Err(ZeroError::ShapeMismatch(format!(
                "document {:?}: {} vs {} sentences",
                gd.doc_id,
                gd.sentences.len(),
                pd.sentences.len()
            )));
        }
        for (gs, ps) in gd.sentences.iter().zip(&pd.sentences) {
            let g = sentence_triples(gs);
            let p = sentence_triples(ps);
            matched += multiset_intersection(&g, &p);
            gold_total += g.len();
            pred_total += p.len();
        }
    }
    Ok(precision_recall(matched, gold_total, pred_total))
}

pub fn precision_recall(matched: usize, gold_total: usize, pred_total: usize) -> PrecisionRecall {
    if gold_total == 0 && pred_total == 0 {
        return PrecisionRecall { precision: 1.0, recall: 1.0, f1: 1.0, matched, gold_total, pred_total };
    }
    let precision = if pred_total == 0 { 0.0 } else { matched as f64 / pred_total as f64 };
    let recall = if gold_total == 0 { 0.0 } else { matched as f64 / gold_total as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PrecisionRecall { precision, recall, f1, matched, gold_total, pred_total }
}

fn multiset_intersection(a: &[EmptyNodePrediction], b: &[EmptyNodePrediction]) -> usize {
    let mut counts: std::collections::HashMap<&EmptyNodePrediction, isize> = Default::default();
    for x in a {
        *counts.entry(x).or_insert(0) += 1;
    }
    let mut matched = 0;
    for y in b {
        if let Some(c) = counts.get_mut(y) {
            if *c > 0 {
                *c -= 1;
                matched += 1;
            }
        }
    }
    matched
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::Document;

    fn tiny_model() -> ZeroModel<f64> {
        let config = ZeroPredictorConfig {
            encoder: EncoderConfig { d: 16, layers: 1, heads: 2, ffn: 32, ..Default::default() },
            hidden_units: 24,
            candidate_dim: 12,
            attention_dim: 8,
            dropout: 0.0,
            existence_threshold: 0.5,
        };
        let tokenizer = SubwordTokenizer::build(["ana", "spi", "bene", "."].into_iter());
        ZeroModel::new(config, tokenizer, vec!["<unk>".into(), "nsubj".into()], 3)
    }

    fn sentence(words: &[&str]) -> Sentence {
        let mut s = Sentence::default();
        for (i, w) in words.iter().enumerate() {
            s.nodes.push(Node::bare(NodeId::Word(i as u32 + 1), *w));
        }
        s
    }

    fn doc(words: &[&str]) -> Document {
        Document { doc_id: None, sentences: vec![sentence(words)], entities: vec![] }
    }

    #[test]
    fn candidate_and_head_shapes() {
        let model = tiny_model();
        let doc = doc(&["ana", "spi", "bene", "."]);
        let segment = model.segments(&doc).remove(0);
        let mut g = Graph::eval(&model.store);
        let out = model.forward(&mut g, &segment);
        assert_eq!(out.n_words, 4);
        assert_eq!(g.tape.value(out.candidates).dim(), (8, 12));
        assert_eq!(g.tape.value(out.existence).dim(), (8, 1));
        assert_eq!(g.tape.value(out.order).dim(), (8, 4));
        assert_eq!(g.tape.value(out.deprel).dim(), (8, 2));
    }

    #[test]
    fn default_config_candidate_width_is_768() {
        let config = ZeroPredictorConfig::default();
        assert_eq!(config.candidate_dim, 768);
        assert_eq!(config.hidden_units, 2048);
    }

    #[test]
    fn deprel_head_width_is_candidate_plus_word() {
        let model = tiny_model();
        let (cand, d, deprel_in) = model.head_widths();
        assert_eq!(deprel_in, cand + d);
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let model = tiny_model();
        let doc = doc(&["ana", "spi", "."]);
        let segment = model.segments(&doc).remove(0);
        let run = || {
            let mut g = Graph::eval(&model.store);
            let out = model.forward(&mut g, &segment);
            g.tape.value(out.existence).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn align_no_empties_is_all_negative() {
        let model = tiny_model();
        let d = doc(&["ana", "spi", "."]);
        let segment = model.segments(&d).remove(0);
        let alignment = model.align_gold(&d.sentences[0], &d, &segment);
        assert_eq!(alignment.slots.len(), 6);
        assert!(alignment.slots.iter().all(|s| !s.exists));
    }

    #[test]
    fn align_one_empty_fills_one_slot() {
        let model = tiny_model();
        let mut d = doc(&["ana", "spi", "bene", "."]);
        let mut empty = Node::bare(NodeId::Empty(1, 1), "_");
        empty.head = Some(2);
        empty.deprel = "nsubj".into();
        d.sentences[0].insert_node(empty);
        // Segment the surface-only view.
        let mut surface = d.clone();
        surface.sentences[0].nodes.retain(|n| !n.id.is_empty_node());
        let segment = model.segments(&surface).remove(0);
        let alignment = model.align_gold(&d.sentences[0], &surface, &segment);
        let n = 4;
        let slot = &alignment.slots[0 * n + 1]; // slot 1 of word 2
        assert!(slot.exists);
        assert_eq!(slot.order_target, Some(0));
        assert_eq!(slot.deprel_id, Some(1));
        assert_eq!(alignment.positive_count(), 1);
        assert_eq!(alignment.dropped_over_cap, 0);
    }

    #[test]
    fn align_caps_two_per_head_word() {
        let model = tiny_model();
        let mut d = doc(&["ana", "spi", "."]);
        for minor in 1..=3 {
            let mut empty = Node::bare(NodeId::Empty(2, minor), "_");
            empty.head = Some(2);
            empty.deprel = "nsubj".into();
            d.sentences[0].insert_node(empty);
        }
        let mut surface = d.clone();
        surface.sentences[0].nodes.retain(|n| !n.id.is_empty_node());
        let segment = model.segments(&surface).remove(0);
        let alignment = model.align_gold(&d.sentences[0], &surface, &segment);
        // Independent count of the overflow: 3 gold nodes, cap 2.
        let gold_count = d.sentences[0].nodes.iter().filter(|n| n.id.is_empty_node()).count();
        assert_eq!(alignment.positive_count(), 2);
        assert_eq!(alignment.dropped_over_cap, gold_count - 2);
    }

    #[test]
    fn order_argmax_is_shift_invariant() {
        let logits = ndarray::array![[0.4, 1.2, -0.3], [2.0, 1.0, 0.0]];
        let shifted = logits.mapv(|x| x + 5.0);
        for (a, b) in logits.rows().into_iter().zip(shifted.rows()) {
            assert_eq!(argmax(a.iter().copied()), argmax(b.iter().copied()));
        }
    }

    #[test]
    fn existence_threshold_on_hand_logits() {
        // sigmoid(-2.0)=0.1192, sigmoid(0.3)=0.5744, sigmoid(-0.1)=0.4750,
        // sigmoid(1.5)=0.8176; threshold 0.5 keeps rows 1 and 3.
        let logits = [-2.0f64, 0.3, -0.1, 1.5];
        let kept: Vec<usize> = logits
            .iter()
            .enumerate()
            .filter(|(_, &x)| sigmoid(x) > 0.5)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(kept, vec![1, 3]);
    }

    #[test]
    fn perfect_and_empty_evaluation() {
        let model = tiny_model();
        let mut d = doc(&["ana", "spi", "."]);
        let mut empty = Node::bare(NodeId::Empty(1, 1), "_");
        empty.head = Some(2);
        empty.deprel = "nsubj".into();
        d.sentences[0].insert_node(empty);
        let corpus = Corpus { documents: vec![d], ..Default::default() };
        let _ = &model;

        let perfect = evaluate_empty_nodes(&corpus, &corpus).unwrap();
        assert_eq!((perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0));

        let mut stripped = corpus.clone();
        stripped.strip_empty_nodes();
        let miss = evaluate_empty_nodes(&corpus, &stripped).unwrap();
        assert_eq!((miss.precision, miss.recall, miss.f1), (0.0, 0.0, 0.0));

        let both_empty = evaluate_empty_nodes(&stripped, &stripped).unwrap();
        assert_eq!(both_empty.f1, 1.0);
    }

    #[test]
    fn evaluation_swaps_precision_and_recall() {
        let mut gold = doc(&["ana", "spi", "."]);
        let mut e1 = Node::bare(NodeId::Empty(1, 1), "_");
        e1.head = Some(2);
        e1.deprel = "nsubj".into();
        gold.sentences[0].insert_node(e1);
        let mut pred = gold.clone();
        let mut e2 = Node::bare(NodeId::Empty(2, 1), "_");
        e2.head = Some(2);
        e2.deprel = "obj".into();
        pred.sentences[0].insert_node(e2);
        let gold = Corpus { documents: vec![gold], ..Default::default() };
        let pred = Corpus { documents: vec![pred], ..Default::default() };
        let ab = evaluate_empty_nodes(&gold, &pred).unwrap();
        let ba = evaluate_empty_nodes(&pred, &gold).unwrap();
        assert_eq!(ab.precision, ba.recall);
        assert_eq!(ab.recall, ba.precision);
        assert_eq!(ab.f1, ba.f1);
    }

    #[test]
    fn insert_assigns_minors_in_order() {
        let mut s = sentence(&["ana", "spi", "."]);
        insert_empty_nodes(
            &mut s,
            &[
                EmptyNodePrediction { head_word: 2, deprel: "nsubj".into(), order_after: 1 },
                EmptyNodePrediction { head_word: 2, deprel: "obj".into(), order_after: 1 },
            ],
        );
        let ids: Vec<NodeId> = s.nodes.iter().map(|n| n.id).collect();
        assert_eq!(
            ids,
            vec![
                NodeId::Word(1),
                NodeId::Empty(1, 1),
                NodeId::Empty(1, 2),
                NodeId::Word(2),
                NodeId::Word(3)
            ]
        );
    }
}
