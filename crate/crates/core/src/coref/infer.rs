//! Document-level prediction. One code path serves single models and
//! ensembles: per-head probability distributions are averaged across
//! members before decoding, so a one-model "ensemble" reproduces that
//! model's output exactly.

use ndarray::{Array1, Array2};

use super::{
    clusters_from_links, CorefError, CorefModel, LinkDecision, MentionCandidate, MentionKind,
    MentionRepr, SegmentForward, Variant,
};
use crate::codec::{decode as codec_decode, Tag, TagSequence};
use crate::conllu::{Document, NodeId};
use crate::nn::Graph;
use crate::scalar::Scalar;
use crate::segment::Segment;
use crate::zero::argmax;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PredictStats {
    /// Codec repairs applied to predicted tag sequences.
    pub tag_repairs: usize,
}

#[derive(Debug, Clone)]
pub struct DocPrediction {
    pub mentions: Vec<MentionCandidate>,
    pub links: LinkDecision,
    pub clusters: Vec<Vec<usize>>,
    pub stats: PredictStats,
}

/// Averages distributions as `p0 + sum(pi - p0) / k`, which is exact for
/// identical members (an ensemble of equal checkpoints reproduces the
/// single model bit for bit).
fn average_rows(rows: &[Array2<f64>]) -> Array2<f64> {
    let first = &rows[0];
    if rows.len() == 1 {
        return first.clone();
    }
    let mut correction: Array2<f64> = Array2::zeros(first.dim());
    for row in rows {
        correction = correction + (row - first);
    }
    let k = rows.len() as f64;
    first + &correction.mapv(|x| x / k)
}

fn softmax_f64(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

struct MemberState<S: Scalar> {
    /// Key projections of every mention predicted so far in the document.
    keys: Vec<Array1<S>>,
}

struct SegmentEval {
    tag_probs: Array2<f64>,
    zero_probs: Option<Array2<f64>>,
}

fn eval_segment<S: Scalar>(
    model: &CorefModel<S>,
    segment: &Segment,
) -> (SegmentEval, Array2<S>, Option<Array2<S>>) {
    let mut g = Graph::eval(&model.store);
    let fwd: SegmentForward = model.forward_segment(&mut g, segment);
    let words = g.tape.value(fwd.words).clone();
    let mut tag_probs = g.tape.value(fwd.tag_logits).mapv(|x| x.to_f64());
    for mut row in tag_probs.rows_mut() {
        softmax_f64(row.as_slice_mut().expect("contiguous row"));
    }
    let (zero_probs, candidates) = match &fwd.zero {
        Some(z) => {
            let mut probs = g.tape.value(z.labels).mapv(|x| x.to_f64());
            for mut row in probs.rows_mut() {
                softmax_f64(row.as_slice_mut().expect("contiguous row"));
            }
            (Some(probs), Some(g.tape.value(z.candidates).clone()))
        }
        None => (None, None),
    };
    (SegmentEval { tag_probs, zero_probs }, words, candidates)
}

/// Predicts mentions, links, and clusters for one document view (two-stage:
/// words plus empty nodes; single-stage: surface words only). Earlier
/// mentions of the document stay available as link antecedents across
/// segments via their stored key projections.
pub fn predict_document<S: Scalar>(
    models: &[&CorefModel<S>],
    view: &Document,
    max_segment: usize,
) -> Result<DocPrediction, CorefError> {
    let first = *models.first().ok_or(CorefError::EmptyEnsemble)?;
    for m in &models[1..] {
        if m.config.variant != first.config.variant {
            return Err(CorefError::EnsembleMismatch("variant".into()));
        }
        if m.tag_vocab != first.tag_vocab {
            return Err(CorefError::EnsembleMismatch("tag vocabulary".into()));
        }
        if m.deprels != first.deprels {
            return Err(CorefError::EnsembleMismatch("deprel vocabulary".into()));
        }
        if m.tokenizer != first.tokenizer {
            return Err(CorefError::EnsembleMismatch("tokenizer vocabulary".into()));
        }
    }

    let mut stats = PredictStats::default();
    let mut mentions: Vec<MentionCandidate> = Vec::new();
    let mut states: Vec<MemberState<S>> =
        models.iter().map(|_| MemberState { keys: Vec::new() }).collect();
    let mut antecedents: Vec<usize> = Vec::new();

    for segment in first.segments(view, max_segment) {
        let mut evals = Vec::with_capacity(models.len());
        let mut member_words = Vec::with_capacity(models.len());
        let mut member_cands = Vec::with_capacity(models.len());
        for model in models {
            let (eval, words, cands) = eval_segment(model, &segment);
            evals.push(eval);
            member_words.push(words);
            member_cands.push(cands);
        }

        // Decode mention tags from the averaged distributions.
        let tag_probs = average_rows(&evals.iter().map(|e| e.tag_probs.clone()).collect::<Vec<_>>());
        let tags: Vec<Tag> = tag_probs
            .rows()
            .into_iter()
            .map(|row| first.tag_vocab.tags[argmax(row.iter().copied())])
            .collect();
        let decoded = codec_decode(&TagSequence(tags));
        stats.tag_repairs += decoded.repairs;

        let focus = segment.focus_words();
        let f0 = focus.first().map(|w| w.node).unwrap_or(0);
        let mut new_mentions: Vec<MentionCandidate> = Vec::new();
        let mut spans: Vec<(usize, usize)> = decoded.spans.spans().to_vec();
        spans.dedup();
        for (rel_start, rel_end) in spans {
            new_mentions.push(MentionCandidate::surface(
                segment.sent_idx,
                f0 + rel_start,
                f0 + rel_end,
            ));
        }

        // Zero mentions from the averaged NONE-or-deprel head.
        if first.config.variant == Variant::SingleStage {
            let zero_probs = average_rows(
                &evals
                    .iter()
                    .map(|e| e.zero_probs.clone().expect("single-stage zero head"))
                    .collect::<Vec<_>>(),
            );
            let word_count = segment.words.len();
            for (fi, w) in focus.iter().enumerate() {
                let word_idx = segment.focus_start + fi;
                let NodeId::Word(word_id) = view.sentences[w.sent].nodes[w.node].id else {
                    continue;
                };
                for slot in 0..2 {
                    let row = slot * word_count + word_idx;
                    let label = argmax(zero_probs.row(row).iter().copied());
                    if label == 0 {
                        continue;
                    }
                    new_mentions.push(MentionCandidate {
                        sent: w.sent,
                        start: w.node,
                        end: w.node,
                        kind: MentionKind::Zero,
                        zero: Some((word_id, first.deprels[label - 1].clone(), slot)),
                    });
                }
            }
        }
        new_mentions.sort_by_key(|m| m.sort_key());

        if new_mentions.is_empty() {
            continue;
        }

        // Per-member representations and key/query projections.
        let word_index: std::collections::HashMap<(usize, usize), usize> = segment
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| ((w.sent, w.node), i))
            .collect();
        let word_count = segment.words.len();
        let reprs_of = |m: &MentionCandidate| -> MentionRepr {
            match m.kind {
                MentionKind::Surface => MentionRepr::Span {
                    first: word_index[&(m.sent, m.start)],
                    last: word_index[&(m.sent, m.end)],
                },
                MentionKind::Zero => {
                    let slot = m.zero.as_ref().expect("zero info").2;
                    MentionRepr::Candidate { row: slot * word_count + word_index[&(m.sent, m.start)] }
                }
            }
        };

        let mut member_queries: Vec<Array2<S>> = Vec::with_capacity(models.len());
        let mut member_new_keys: Vec<Array2<S>> = Vec::with_capacity(models.len());
        for (mi, model) in models.iter().enumerate() {
            let words = &member_words[mi];
            let cands = member_cands[mi].as_ref();
            let d = words.dim().1;
            let mut reprs = Array2::zeros((new_mentions.len(), 2 * d));
            for (row, m) in new_mentions.iter().enumerate() {
                let (first_vec, last_vec) = match reprs_of(m) {
                    MentionRepr::Span { first, last } => (words.row(first), words.row(last)),
                    MentionRepr::Candidate { row: c } => {
                        let cands = cands.expect("single-stage candidates");
                        (cands.row(c), cands.row(c))
                    }
                };
                for (i, &v) in first_vec.iter().enumerate() {
                    reprs[(row, i)] = v;
                }
                for (i, &v) in last_vec.iter().enumerate() {
                    reprs[(row, d + i)] = v;
                }
            }
            member_queries.push(model.link_q_plain(&reprs));
            member_new_keys.push(model.link_k_plain(&reprs));
        }

        // Link each new mention against everything before it.
        for (i, _) in new_mentions.iter().enumerate() {
            let global = mentions.len() + i;
            let mut member_probs: Vec<Array2<f64>> = Vec::with_capacity(models.len());
            for (mi, model) in models.iter().enumerate() {
                let scale = 1.0 / (model.config.link_dim as f64).sqrt();
                let q = member_queries[mi].row(i);
                let mut scores = vec![0.0f64; global + 1];
                for (j, score) in scores.iter_mut().enumerate() {
                    let key = if j < states[mi].keys.len() {
                        states[mi].keys[j].view()
                    } else {
                        member_new_keys[mi].row(j - states[mi].keys.len())
                    };
                    *score = q
                        .iter()
                        .zip(key.iter())
                        .map(|(&a, &b)| (a * b).to_f64())
                        .sum::<f64>()
                        * scale;
                }
                softmax_f64(&mut scores);
                member_probs
                    .push(Array2::from_shape_vec((1, global + 1), scores).expect("row"));
            }
            let probs = average_rows(&member_probs);
            antecedents.push(argmax(probs.row(0).iter().copied()));
        }

        for (mi, new_keys) in member_new_keys.iter().enumerate() {
            for row in new_keys.rows() {
                states[mi].keys.push(row.to_owned());
            }
        }
        mentions.extend(new_mentions);
    }

    let links = LinkDecision { antecedents };
    let clusters = clusters_from_links(&links);
    Ok(DocPrediction { mentions, links, clusters, stats })
}
