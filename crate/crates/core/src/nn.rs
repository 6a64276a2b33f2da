//! Parameter storage and small layer building blocks on top of the tape.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tape::{Tape, Var};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("parameter set mismatch: {0}")]
    ParamMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// Named trainable parameters of one model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ParamStore<S: Scalar> {
    names: Vec<String>,
    values: Vec<Array2<S>>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        ParamStore { names: Vec::new(), values: Vec::new() }
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn add(&mut self, name: impl Into<String>, value: Array2<S>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name `{name}`"
        );
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array2<S> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<S> {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn total_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Replaces values with `other`'s, matching by name. Shapes and the name
    /// set must agree exactly.
    pub fn load_from(&mut self, other: &ParamStore<S>) -> Result<(), NnError> {
        if self.names != other.names {
            return Err(NnError::ParamMismatch(format!(
                "expected {} parameters, checkpoint has {}",
                self.names.len(),
                other.names.len()
            )));
        }
        for (mine, theirs) in self.values.iter_mut().zip(&other.values) {
            if mine.dim() != theirs.dim() {
                return Err(NnError::ParamMismatch("parameter shape mismatch".into()));
            }
            *mine = theirs.clone();
        }
        Ok(())
    }
}

/// Whether a forward pass is for training (dropout active) or inference.
pub enum Mode {
    Train { dropout: f64, rng: ChaCha8Rng },
    Eval,
}

/// One forward/backward pass: a tape plus lazily bound parameters.
pub struct Graph<'s, S: Scalar> {
    pub tape: Tape<S>,
    store: &'s ParamStore<S>,
    bound: Vec<Option<Var>>,
    pub mode: Mode,
}

impl<'s, S: Scalar> Graph<'s, S> {
    pub fn eval(store: &'s ParamStore<S>) -> Self {
        Graph { tape: Tape::new(), store, bound: vec![None; store.len()], mode: Mode::Eval }
    }

    pub fn train(store: &'s ParamStore<S>, dropout: f64, rng: ChaCha8Rng) -> Self {
        Graph {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
            mode: Mode::Train { dropout, rng },
        }
    }

    /// Binds a parameter as a trainable leaf (once per graph).
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(var) = self.bound[id.0] {
            return var;
        }
        let var = self.tape.leaf(self.store.value(id).clone(), true);
        self.bound[id.0] = Some(var);
        var
    }

    /// Inverted dropout: identity in eval mode.
    pub fn dropout(&mut self, x: Var) -> Var {
        let Mode::Train { dropout, rng } = &mut self.mode else { return x };
        if *dropout <= 0.0 {
            return x;
        }
        let keep = 1.0 - *dropout;
        let scale = S::from_f64(1.0 / keep);
        let dim = self.tape.value(x).dim();
        let mask = Array2::from_shape_fn(dim, |_| {
            if rng.random_bool(keep) {
                scale
            } else {
                S::zero()
            }
        });
        let mask = self.tape.constant(mask);
        self.tape.mul(x, mask)
    }

    /// Gradients of all bound parameters after `tape.backward`.
    pub fn param_grads(&self) -> Vec<(ParamId, Array2<S>)> {
        let mut out = Vec::new();
        for (i, bound) in self.bound.iter().enumerate() {
            if let Some(var) = bound {
                if let Some(grad) = self.tape.grad(*var) {
                    out.push((ParamId(i), grad.clone()));
                }
            }
        }
        out
    }
}

/// Dropout mask statistics helper used by tests and sanity checks: fraction
/// of zeroed entries over `samples` Bernoulli draws.
pub fn dropout_zero_fraction(dropout: f64, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut zeros = 0usize;
    for _ in 0..samples {
        if !rng.random_bool(1.0 - dropout) {
            zeros += 1;
        }
    }
    zeros as f64 / samples as f64
}

/// Glorot-uniform initialization.
pub fn glorot<S: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<S> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| S::from_f64(rng.random_range(-limit..limit)))
}

/// Fully connected layer.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Dense {
    w: usize,
    b: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.add(format!("{name}.w"), glorot(in_dim, out_dim, rng));
        let b = store.add(format!("{name}.b"), Array2::zeros((1, out_dim)));
        Dense { w: w.0, b: b.0, in_dim, out_dim }
    }

    pub fn apply<S: Scalar>(&self, g: &mut Graph<S>, x: Var) -> Var {
        let w = g.param(ParamId(self.w));
        let b = g.param(ParamId(self.b));
        let xw = g.tape.matmul(x, w);
        g.tape.add_row(xw, b)
    }

    pub fn weight_id(&self) -> ParamId {
        ParamId(self.w)
    }

    pub fn bias_id(&self) -> ParamId {
        ParamId(self.b)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LayerNorm {
    gain: usize,
    bias: usize,
}

impl LayerNorm {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, dim: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Array2::from_elem((1, dim), S::one()));
        let bias = store.add(format!("{name}.bias"), Array2::zeros((1, dim)));
        LayerNorm { gain: gain.0, bias: bias.0 }
    }

    pub fn apply<S: Scalar>(&self, g: &mut Graph<S>, x: Var) -> Var {
        let gain = g.param(ParamId(self.gain));
        let bias = g.param(ParamId(self.bias));
        g.tape.layer_norm(x, gain, bias)
    }
}

/// The dense-relu-dropout-dense block shared by the candidate generator and
/// the prediction heads.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MlpBlock {
    pub hidden: Dense,
    pub out: Dense,
}

impl MlpBlock {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        MlpBlock {
            hidden: Dense::new(store, &format!("{name}.hidden"), in_dim, hidden_dim, rng),
            out: Dense::new(store, &format!("{name}.out"), hidden_dim, out_dim, rng),
        }
    }

    pub fn apply<S: Scalar>(&self, g: &mut Graph<S>, x: Var) -> Var {
        let h = self.hidden.apply(g, x);
        let h = g.tape.relu(h);
        let h = g.dropout(h);
        self.out.apply(g, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn params_bind_once() {
        let mut store: ParamStore<f64> = ParamStore::default();
        let id = store.add("p", array![[1.0, 2.0]]);
        let mut g = Graph::eval(&store);
        let a = g.param(id);
        let b = g.param(id);
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let store: ParamStore<f64> = ParamStore::default();
        let mut g = Graph::eval(&store);
        let x = g.tape.constant(array![[1.0, 2.0], [3.0, 4.0]]);
        let y = g.dropout(x);
        assert_eq!(x, y);
    }

    #[test]
    fn dropout_train_zero_fraction_near_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frac = dropout_zero_fraction(0.5, 1000, &mut rng);
        assert!((0.45..=0.55).contains(&frac), "zero fraction {frac}");
    }

    #[test]
    fn dense_shapes_and_grads_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store: ParamStore<f64> = ParamStore::default();
        let dense = Dense::new(&mut store, "d", 3, 2, &mut rng);
        let mut g = Graph::eval(&store);
        let x = g.tape.constant(array![[1.0, 0.0, -1.0]]);
        let y = dense.apply(&mut g, x);
        assert_eq!(g.tape.value(y).dim(), (1, 2));
        let loss = g.tape.sum_all(y);
        g.tape.backward(loss);
        assert_eq!(g.param_grads().len(), 2);
    }

    #[test]
    fn load_from_checks_names_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a: ParamStore<f64> = ParamStore::default();
        Dense::new(&mut a, "d", 3, 2, &mut rng);
        let mut b: ParamStore<f64> = ParamStore::default();
        Dense::new(&mut b, "d", 3, 2, &mut rng);
        assert!(a.load_from(&b).is_ok());
        assert_eq!(a.value(ParamId(0)), b.value(ParamId(0)));
        let mut c: ParamStore<f64> = ParamStore::default();
        Dense::new(&mut c, "other", 3, 2, &mut rng);
        assert!(a.load_from(&c).is_err());
    }
}
