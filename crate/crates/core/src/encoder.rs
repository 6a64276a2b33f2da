//! Contextual encoding of segments.
//!
//! The builtin encoder is a small trainable transformer (token embeddings +
//! sinusoidal positions, multi-head self-attention blocks with residuals
//! and layer norm). External pretrained encoders attach through the
//! [`EncoderBackend`] adapter and are treated as frozen feature extractors:
//! the heads on top stay trainable, the backend itself is inference-only.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Dense, Graph, LayerNorm, ParamStore};
use crate::scalar::Scalar;
use crate::segment::Segment;
use crate::tape::Var;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("encoder backend `{0}` is not attached")]
    BackendUnavailable(String),
    #[error("external encoder backends cannot be trained")]
    BackendNotTrainable,
    #[error("backend returned {got} vectors for {expected} subwords")]
    BackendShape { expected: usize, got: usize },
}

/// Which encoder the pipeline runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderKind {
    BuiltinToy,
    /// Named adapter that must be attached at run time.
    External(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Word-representation width.
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    /// Maximum segment size during training.
    pub max_segment_train: usize,
    /// Maximum segment size during inference (relative/sinusoidal positions
    /// extrapolate, so this may exceed the training size).
    pub max_segment_infer: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::BuiltinToy,
            d: 64,
            layers: 2,
            heads: 2,
            ffn: 256,
            max_segment_train: 512,
            max_segment_infer: 512,
        }
    }
}

/// Adapter contract for external pretrained encoders: text tokens in,
/// subword ids and vectors out.
pub trait EncoderBackend<S: Scalar>: Send + Sync {
    fn hidden_size(&self) -> usize;
    /// Subword ids for one node form (`is_empty_node` marks empty nodes).
    fn subwords(&self, form: &str, is_empty_node: bool) -> Vec<u32>;
    /// Vectors for a segment's subwords: shape `(#subwords, hidden_size)`.
    fn encode(&self, subword_ids: &[u32]) -> Result<Array2<S>, EncoderError>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AttentionHead {
    wq: Dense,
    wk: Dense,
    wv: Dense,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EncoderBlock {
    heads: Vec<AttentionHead>,
    wo: Dense,
    ln_attn: LayerNorm,
    ffn_in: Dense,
    ffn_out: Dense,
    ln_ffn: LayerNorm,
}

/// The builtin trainable encoder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyEncoder {
    pub d: usize,
    embedding: usize,
    blocks: Vec<EncoderBlock>,
}

impl ToyEncoder {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        config: &EncoderConfig,
        vocab_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(config.d % config.heads == 0, "d must be divisible by the head count");
        let dh = config.d / config.heads;
        let embedding = store.add("encoder.embedding", crate::nn::glorot(vocab_size, config.d, rng));
        let blocks = (0..config.layers)
            .map(|l| {
                let p = format!("encoder.block{l}");
                EncoderBlock {
                    heads: (0..config.heads)
                        .map(|h| AttentionHead {
                            wq: Dense::new(store, &format!("{p}.h{h}.wq"), config.d, dh, rng),
                            wk: Dense::new(store, &format!("{p}.h{h}.wk"), config.d, dh, rng),
                            wv: Dense::new(store, &format!("{p}.h{h}.wv"), config.d, dh, rng),
                        })
                        .collect(),
                    wo: Dense::new(store, &format!("{p}.wo"), config.d, config.d, rng),
                    ln_attn: LayerNorm::new(store, &format!("{p}.ln_attn"), config.d),
                    ffn_in: Dense::new(store, &format!("{p}.ffn_in"), config.d, config.ffn, rng),
                    ffn_out: Dense::new(store, &format!("{p}.ffn_out"), config.ffn, config.d, rng),
                    ln_ffn: LayerNorm::new(store, &format!("{p}.ln_ffn"), config.d),
                }
            })
            .collect();
        ToyEncoder { d: config.d, embedding: embedding.0, blocks }
    }

    /// Encodes a subword sequence to per-subword vectors, shape `(n, d)`.
    pub fn encode<S: Scalar>(&self, g: &mut Graph<S>, subword_ids: &[u32]) -> Var {
        assert!(!subword_ids.is_empty(), "cannot encode an empty segment");
        let table = g.param(crate::nn::ParamId(self.embedding));
        let indices: Vec<usize> = subword_ids.iter().map(|&i| i as usize).collect();
        let embedded = g.tape.gather_rows(table, &indices);
        let positions = g.tape.constant(sinusoidal_positions(subword_ids.len(), self.d));
        let mut x = g.tape.add(embedded, positions);

        let dh = self.d / self.blocks.first().map_or(1, |b| b.heads.len().max(1));
        let scale = S::from_f64(1.0 / (dh as f64).sqrt());
        for block in &self.blocks {
            let mut head_outputs = Vec::with_capacity(block.heads.len());
            for head in &block.heads {
                let q = head.wq.apply(g, x);
                let k = head.wk.apply(g, x);
                let v = head.wv.apply(g, x);
                let kt = g.tape.transpose(k);
                let scores = g.tape.matmul(q, kt);
                let scores = g.tape.scale(scores, scale);
                let attn = g.tape.softmax(scores);
                head_outputs.push(g.tape.matmul(attn, v));
            }
            let mut ctx = head_outputs[0];
            for &h in &head_outputs[1..] {
                ctx = g.tape.concat_cols(ctx, h);
            }
            let attn_out = block.wo.apply(g, ctx);
            let attn_out = g.dropout(attn_out);
            let res = g.tape.add(x, attn_out);
            x = block.ln_attn.apply(g, res);

            let h = block.ffn_in.apply(g, x);
            let h = g.tape.relu(h);
            let h = g.dropout(h);
            let h = block.ffn_out.apply(g, h);
            let res = g.tape.add(x, h);
            x = block.ln_ffn.apply(g, res);
        }
        x
    }
}

/// Fixed sinusoidal position encodings, shape `(len, d)`.
pub fn sinusoidal_positions<S: Scalar>(len: usize, d: usize) -> Array2<S> {
    Array2::from_shape_fn((len, d), |(pos, i)| {
        let pair = (i / 2) as f64;
        let rate = 10000f64.powf(2.0 * pair / d as f64);
        let angle = pos as f64 / rate;
        S::from_f64(if i % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// First-subword pooling over plain arrays: `out[i] = vectors[first(i)]`.
pub fn word_representations<S: Scalar>(segment: &Segment, vectors: &Array2<S>) -> Array2<S> {
    assert_eq!(
        vectors.dim().0,
        segment.subword_ids.len(),
        "vector count must match subword count"
    );
    let mut out = Array2::zeros((segment.words.len(), vectors.dim().1));
    for (i, &first) in segment.first_subword.iter().enumerate() {
        out.row_mut(i).assign(&vectors.row(first));
    }
    out
}

/// Tape-side first-subword pooling: one row per segment word.
pub fn word_representations_var<S: Scalar>(
    g: &mut Graph<S>,
    segment: &Segment,
    subword_vectors: Var,
) -> Var {
    g.tape.gather_rows(subword_vectors, &segment.first_subword)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::WordRef;
    use rand::SeedableRng;

    fn tiny_config() -> EncoderConfig {
        EncoderConfig { d: 16, layers: 2, heads: 2, ffn: 32, ..Default::default() }
    }

    #[test]
    fn output_shape_is_subwords_by_d() {
        let mut store: ParamStore<f64> = ParamStore::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = ToyEncoder::new(&mut store, &tiny_config(), 20, &mut rng);
        let mut g = Graph::eval(&store);
        let out = enc.encode(&mut g, &[1, 2, 3, 4, 5]);
        assert_eq!(g.tape.value(out).dim(), (5, 16));
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let mut store: ParamStore<f32> = ParamStore::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = ToyEncoder::new(&mut store, &tiny_config(), 20, &mut rng);
        let run = |store: &ParamStore<f32>| {
            let mut g = Graph::eval(store);
            let out = enc.encode(&mut g, &[3, 1, 4, 1, 5]);
            g.tape.value(out).clone()
        };
        assert_eq!(run(&store), run(&store));
    }

    #[test]
    fn first_subword_pooling_matches_loop() {
        let segment = Segment {
            sent_idx: 0,
            words: vec![
                WordRef { sent: 0, node: 0 },
                WordRef { sent: 0, node: 1 },
                WordRef { sent: 0, node: 2 },
            ],
            focus_start: 0,
            focus_len: 3,
            subword_ids: vec![7, 8, 9, 10, 11],
            first_subword: vec![0, 1, 4],
            left_subwords: 0,
            right_subwords: 0,
        };
        let vectors =
            Array2::from_shape_fn((5, 3), |(r, c)| (r * 10 + c) as f64);
        let pooled = word_representations(&segment, &vectors);
        assert_eq!(pooled.dim(), (3, 3));
        for (i, &first) in segment.first_subword.iter().enumerate() {
            for c in 0..3 {
                assert_eq!(pooled[(i, c)], vectors[(first, c)]);
            }
        }
    }

    #[test]
    fn single_subword_words_pool_to_identity() {
        let segment = Segment {
            sent_idx: 0,
            words: vec![WordRef { sent: 0, node: 0 }, WordRef { sent: 0, node: 1 }],
            focus_start: 0,
            focus_len: 2,
            subword_ids: vec![4, 5],
            first_subword: vec![0, 1],
            left_subwords: 0,
            right_subwords: 0,
        };
        let vectors = Array2::from_shape_fn((2, 2), |(r, c)| (r + c) as f64);
        assert_eq!(word_representations(&segment, &vectors), vectors);
    }

    #[test]
    fn position_encoding_rows_are_distinct() {
        let pe: Array2<f64> = sinusoidal_positions(8, 16);
        for i in 0..7 {
            let a = pe.row(i);
            let b = pe.row(i + 1);
            assert!(a.iter().zip(b.iter()).any(|(x, y)| (x - y).abs() > 1e-9));
        }
    }
}
