//! Training preparation: projecting gold annotations into per-segment
//! targets, and the combined document loss.

use std::collections::HashMap;

use ndarray::Array2;

use super::{
    CorefModel, MentionCandidate, MentionKind, MentionRepr, SegmentMention, Variant,
};
use crate::codec::{self, Overlap, SpanSet};
use crate::conllu::Document;
use crate::nn::Graph;
use crate::scalar::Scalar;
use crate::segment::Segment;
use crate::tape::Var;

/// Counters for gold structures the model cannot represent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrepStats {
    /// Single-stage: mentions containing an empty node reduced to a single
    /// empty node at their head.
    pub reduced_to_zero: usize,
    /// Single-stage: empty nodes stripped out of surface-headed mentions.
    pub stripped_empties: usize,
    /// Mentions dropped entirely (unrepresentable).
    pub dropped_mentions: usize,
    /// Zero mentions beyond the two-per-head-word cap.
    pub dropped_over_cap: usize,
    /// Gold tags clamped into the tag vocabulary.
    pub clamped_tags: usize,
    /// Crossing gold spans dropped by the lenient codec.
    pub crossing_dropped: usize,
}

/// A gold mention in view coordinates, plus its entity index.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldMention {
    pub mention: MentionCandidate,
    pub entity: usize,
}

/// Gold annotations projected onto the document view the encoder sees.
#[derive(Debug, Clone)]
pub struct GoldProjection {
    /// Surface-only copy in single-stage mode, verbatim copy in two-stage.
    pub view: Document,
    /// All mentions, globally sorted.
    pub mentions: Vec<GoldMention>,
    pub stats: PrepStats,
}

/// Projects a gold document for the given variant.
///
/// Two-stage keeps mentions as they are (spans may mix words and empty
/// nodes). Single-stage drops empty nodes from the input and restates every
/// mention under the one-empty-node-mention restriction: a mention whose
/// head is an empty node becomes a zero mention anchored after that node's
/// dependency head; other mentions lose their empty nodes.
pub fn project_gold(doc: &Document, variant: Variant) -> GoldProjection {
    let mut stats = PrepStats::default();
    let mut mentions: Vec<GoldMention> = Vec::new();

    match variant {
        Variant::TwoStage => {
            for (ei, entity) in doc.entities.iter().enumerate() {
                for m in &entity.mentions {
                    let Some((sent, start)) = doc.locate(m.start()) else {
                        stats.dropped_mentions += 1;
                        continue;
                    };
                    let end = start + m.span.len() - 1;
                    mentions.push(GoldMention {
                        mention: MentionCandidate::surface(sent, start, end),
                        entity: ei,
                    });
                }
            }
            let mut view = doc.clone();
            view.entities.clear();
            sort_mentions(&mut mentions);
            GoldProjection { view, mentions, stats }
        }
        Variant::SingleStage => {
            let mut view = doc.clone();
            view.entities.clear();
            // Map (sent, node idx) -> surface node idx before stripping.
            let mut surface_idx: Vec<Vec<Option<usize>>> = Vec::new();
            for sent in &doc.sentences {
                let mut row = Vec::with_capacity(sent.nodes.len());
                let mut next = 0usize;
                for node in &sent.nodes {
                    if node.id.is_empty_node() {
                        row.push(None);
                    } else {
                        row.push(Some(next));
                        next += 1;
                    }
                }
                surface_idx.push(row);
            }
            for sent in &mut view.sentences {
                sent.nodes.retain(|n| !n.id.is_empty_node());
            }

            // Zero mentions grouped per (sentence, head word) for slots.
            let mut slot_used: HashMap<(usize, u32), usize> = HashMap::new();
            for (ei, entity) in doc.entities.iter().enumerate() {
                for m in &entity.mentions {
                    let Some((sent, start)) = doc.locate(m.start()) else {
                        stats.dropped_mentions += 1;
                        continue;
                    };
                    let nodes = &doc.sentences[sent].nodes;
                    let local: Vec<usize> = (start..start + m.span.len()).collect();
                    let empties: Vec<usize> =
                        local.iter().copied().filter(|&i| nodes[i].id.is_empty_node()).collect();

                    if empties.is_empty() {
                        let first = surface_idx[sent][local[0]].expect("surface node");
                        let last =
                            surface_idx[sent][*local.last().expect("non-empty span")].expect("surface node");
                        mentions.push(GoldMention {
                            mention: MentionCandidate::surface(sent, first, last),
                            entity: ei,
                        });
                        continue;
                    }

                    let (_, head_local) = doc.locate(m.head).expect("validated mention head");
                    let head_node = &nodes[head_local];
                    if head_node.id.is_empty_node() {
                        // Reduce to the single empty node at the head.
                        if local.len() > 1 {
                            stats.reduced_to_zero += 1;
                        }
                        let Some(head_word) = head_node.head else {
                            stats.dropped_mentions += 1;
                            continue;
                        };
                        let Some(anchor) = view.sentences[sent].word_index(head_word) else {
                            stats.dropped_mentions += 1;
                            continue;
                        };
                        let slot = slot_used.entry((sent, head_word)).or_insert(0);
                        if *slot >= 2 {
                            stats.dropped_over_cap += 1;
                            continue;
                        }
                        let this_slot = *slot;
                        *slot += 1;
                        mentions.push(GoldMention {
                            mention: MentionCandidate {
                                sent,
                                start: anchor,
                                end: anchor,
                                kind: MentionKind::Zero,
                                zero: Some((head_word, head_node.deprel.clone(), this_slot)),
                            },
                            entity: ei,
                        });
                    } else {
                        // Strip empty nodes; the remaining words of a
                        // contiguous node range stay contiguous.
                        stats.stripped_empties += empties.len();
                        let surface: Vec<usize> = local
                            .iter()
                            .copied()
                            .filter_map(|i| surface_idx[sent][i])
                            .collect();
                        if surface.is_empty() {
                            stats.dropped_mentions += 1;
                            continue;
                        }
                        mentions.push(GoldMention {
                            mention: MentionCandidate::surface(
                                sent,
                                surface[0],
                                *surface.last().expect("non-empty"),
                            ),
                            entity: ei,
                        });
                    }
                }
            }
            sort_mentions(&mut mentions);
            GoldProjection { view, mentions, stats }
        }
    }
}

fn sort_mentions(mentions: &mut [GoldMention]) {
    mentions.sort_by(|a, b| {
        a.mention
            .sort_key()
            .cmp(&b.mention.sort_key())
            .then_with(|| a.entity.cmp(&b.entity))
    });
}

/// Per-candidate-row target of the zero-mention head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroTarget {
    /// 0 = NONE, `1 + deprel_id` otherwise.
    pub label: usize,
    pub in_loss: bool,
}

/// One segment's training example.
#[derive(Debug, Clone)]
pub struct SegPrep {
    pub segment: Segment,
    /// Tag-vocabulary index per focus word.
    pub tag_targets: Vec<usize>,
    /// Per candidate row, single-stage only.
    pub zero_targets: Option<Vec<ZeroTarget>>,
    /// Mentions visible in this segment, sorted; queries carry the loss.
    pub mentions: Vec<SegmentMention>,
}

#[derive(Debug, Clone)]
pub struct DocPrep {
    pub view: Document,
    pub segments: Vec<SegPrep>,
    pub stats: PrepStats,
}

impl<S: Scalar> CorefModel<S> {
    /// Builds the full training example for one gold document.
    pub fn prepare_document(&self, doc: &Document, max_segment: usize) -> DocPrep {
        let GoldProjection { view, mentions, mut stats } =
            project_gold(doc, self.config.variant);
        let segments = self.segments(&view, max_segment);
        let mut out_segments = Vec::with_capacity(segments.len());

        for segment in segments {
            let word_index: HashMap<(usize, usize), usize> = segment
                .words
                .iter()
                .enumerate()
                .map(|(i, w)| ((w.sent, w.node), i))
                .collect();
            let focus = segment.focus_words();
            let focus_set: HashMap<(usize, usize), usize> =
                focus.iter().enumerate().map(|(i, w)| ((w.sent, w.node), i)).collect();
            let word_count = segment.words.len();

            // Visible mentions, in global order.
            let mut seg_mentions: Vec<SegmentMention> = Vec::new();
            for gm in &mentions {
                let m = &gm.mention;
                let (Some(&first), Some(&last)) = (
                    word_index.get(&(m.sent, m.start)),
                    word_index.get(&(m.sent, m.end)),
                ) else {
                    continue;
                };
                let is_query = focus_set.contains_key(&(m.sent, m.start))
                    && focus_set.contains_key(&(m.sent, m.end));
                let repr = match m.kind {
                    MentionKind::Surface => MentionRepr::Span { first, last },
                    MentionKind::Zero => {
                        let slot = m.zero.as_ref().expect("zero info").2;
                        MentionRepr::Candidate { row: slot * word_count + first }
                    }
                };
                seg_mentions.push(SegmentMention {
                    mention: m.clone(),
                    repr,
                    entity: Some(gm.entity),
                    is_query,
                });
            }

            // Tag targets over the focus range: surface query mentions only.
            let f0 = focus.first().map(|w| w.node).unwrap_or(0);
            let spans: SpanSet = seg_mentions
                .iter()
                .filter(|sm| {
                    sm.is_query
                        && sm.mention.kind == MentionKind::Surface
                        && sm.mention.sent == segment.sent_idx
                })
                .map(|sm| (sm.mention.start - f0, sm.mention.end - f0))
                .collect();
            let tag_targets = match codec::encode(&spans, focus.len().max(1), Overlap::Lenient) {
                Ok(encoded) => {
                    stats.crossing_dropped += encoded.dropped.len();
                    encoded
                        .tags
                        .0
                        .iter()
                        .take(focus.len())
                        .map(|&tag| {
                            let (idx, clamped) = self.tag_vocab.index_clamped(tag);
                            if clamped {
                                stats.clamped_tags += 1;
                            }
                            idx
                        })
                        .collect()
                }
                Err(_) => vec![0; focus.len()],
            };

            // Zero-head targets per candidate row.
            let zero_targets = match self.config.variant {
                Variant::TwoStage => None,
                Variant::SingleStage => {
                    let mut targets = vec![ZeroTarget { label: 0, in_loss: false }; 2 * word_count];
                    for (i, w) in segment.words.iter().enumerate() {
                        let in_focus = focus_set.contains_key(&(w.sent, w.node));
                        for slot in 0..2 {
                            targets[slot * word_count + i].in_loss = in_focus;
                        }
                    }
                    for sm in &seg_mentions {
                        if let MentionRepr::Candidate { row } = sm.repr {
                            let (_, deprel, _) = sm.mention.zero.as_ref().expect("zero info");
                            targets[row].label = 1 + self.deprel_index(deprel);
                        }
                    }
                    Some(targets)
                }
            };

            out_segments.push(SegPrep { segment, tag_targets, zero_targets, mentions: seg_mentions });
        }

        DocPrep { view, segments: out_segments, stats }
    }

    fn deprel_index(&self, label: &str) -> usize {
        self.deprels.iter().position(|d| d == label).unwrap_or(0)
    }
}

/// Loss terms of one document; `total` is the unweighted sum.
pub struct CorefLoss {
    pub total: Var,
    pub tag: f64,
    pub link: f64,
    pub zero: f64,
}

impl<S: Scalar> CorefModel<S> {
    /// Combined loss over all segments of a prepared document: mention-tag
    /// cross-entropy, antecedent cross-entropy (mass split uniformly over
    /// earlier mentions of the same entity, self if none), and in the
    /// single-stage variant the NONE-or-deprel cross-entropy, simply added.
    pub fn document_loss(&self, g: &mut Graph<S>, prep: &DocPrep) -> CorefLoss {
        let mut terms: Vec<Var> = Vec::new();
        let mut tag_total = 0.0;
        let mut link_total = 0.0;
        let mut zero_total = 0.0;

        for seg in &prep.segments {
            let fwd = self.forward_segment(g, &seg.segment);

            // Tags.
            let vocab = self.tag_vocab.len();
            let rows = seg.tag_targets.len();
            if rows > 0 {
                let mut targets = Array2::zeros((rows, vocab));
                for (i, &t) in seg.tag_targets.iter().enumerate() {
                    targets[(i, t)] = S::one();
                }
                let weights = vec![S::one(); rows];
                let tag_loss = g.tape.ce_rows(fwd.tag_logits, targets, weights);
                tag_total += g.tape.scalar_value(tag_loss).to_f64();
                terms.push(tag_loss);
            }

            // Links.
            if let Some(reprs) = self.mention_reprs(g, &fwd, &seg.mentions) {
                let scores = self.link_scores(g, reprs);
                let m = seg.mentions.len();
                let mut targets = Array2::zeros((m, m));
                let mut weights = vec![S::zero(); m];
                for (i, sm) in seg.mentions.iter().enumerate() {
                    if !sm.is_query {
                        continue;
                    }
                    let antecedents: Vec<usize> = (0..i)
                        .filter(|&j| seg.mentions[j].entity == sm.entity)
                        .collect();
                    if antecedents.is_empty() {
                        targets[(i, i)] = S::one();
                    } else {
                        let mass = S::from_f64(1.0 / antecedents.len() as f64);
                        for j in antecedents {
                            targets[(i, j)] = mass;
                        }
                    }
                    weights[i] = S::one();
                }
                let link_loss = g.tape.ce_rows(scores, targets, weights);
                link_total += g.tape.scalar_value(link_loss).to_f64();
                terms.push(link_loss);
            }

            // Zero labels.
            if let (Some(zero_fwd), Some(zero_targets)) = (&fwd.zero, &seg.zero_targets) {
                let labels = self.zero_label_count();
                let rows = zero_targets.len();
                let mut targets = Array2::zeros((rows, labels));
                let mut weights = vec![S::zero(); rows];
                for (i, t) in zero_targets.iter().enumerate() {
                    targets[(i, t.label)] = S::one();
                    if t.in_loss {
                        weights[i] = S::one();
                    }
                }
                let zero_loss = g.tape.ce_rows(zero_fwd.labels, targets, weights);
                zero_total += g.tape.scalar_value(zero_loss).to_f64();
                terms.push(zero_loss);
            }
        }

        let total = match terms.split_first() {
            None => g.tape.constant(Array2::zeros((1, 1))),
            Some((&first, rest)) => {
                let mut acc = first;
                for &t in rest {
                    acc = g.tape.add(acc, t);
                }
                acc
            }
        };
        CorefLoss { total, tag: tag_total, link: link_total, zero: zero_total }
    }
}

/// True iff every mention that contains an empty node consists of exactly
/// one empty node (checked over the document's entity annotations).
pub fn satisfies_single_zero_restriction(doc: &Document) -> bool {
    for mention in doc.all_mentions() {
        let has_empty = mention.span.iter().any(|&p| {
            doc.node_at(p).map(|n| n.id.is_empty_node()).unwrap_or(false)
        });
        if has_empty && mention.span.len() != 1 {
            return false;
        }
    }
    true
}
