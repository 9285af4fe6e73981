//! Parameter store and the layer zoo: linear, layer norm, MLP, multi-head
//! attention and pre-norm transformer blocks.
//!
//! Layers hold parameter names and dimensions only; values live in a
//! [`ParamStore`] so checkpointing and optimization can treat every model
//! uniformly.

use super::graph::{Graph, Var};
use super::{NnError, Scalar};
use indexmap::IndexMap;
use ndarray::{ArrayD, IxDyn};
use rand::Rng;

pub struct ParamEntry<F: Scalar> {
    pub value: ArrayD<F>,
    pub trainable: bool,
}

/// Ordered map of named parameter tensors.
pub struct ParamStore<F: Scalar> {
    entries: IndexMap<String, ParamEntry<F>>,
}

impl<F: Scalar> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<F>, trainable: bool) {
        assert!(
            !self.entries.contains_key(name),
            "duplicate parameter {name:?}"
        );
        self.entries
            .insert(name.to_string(), ParamEntry { value, trainable });
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<F>> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ArrayD<F>> {
        self.entries.get_mut(name).map(|e| &mut e.value)
    }

    pub fn set(&mut self, name: &str, value: ArrayD<F>) -> Result<(), NnError> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| NnError::MissingParam(name.to_string()))?;
        if entry.value.shape() != value.shape() {
            return Err(NnError::ParamShape {
                name: name.to_string(),
                expected: entry.value.shape().to_vec(),
                got: value.shape().to_vec(),
            });
        }
        entry.value = value;
        Ok(())
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.entries.get(name).map(|e| e.trainable).unwrap_or(false)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamEntry<F>)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }
}

/// Gaussian init with the given standard deviation. Values are drawn in f64
/// and converted so f32 and f64 instantiations of a model start identically.
pub fn randn_init<F: Scalar>(rng: &mut impl Rng, shape: &[usize], std: f64) -> ArrayD<F> {
    ArrayD::from_shape_fn(IxDyn(shape), |_| {
        F::cast_from(rng.sample::<f64, _>(rand_distr::StandardNormal) * std)
    })
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: String,
    pub b: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<F: Scalar>(
        ps: &mut ParamStore<F>,
        rng: &mut impl Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let std = (1.0 / in_dim as f64).sqrt();
        ps.insert(&format!("{name}.w"), randn_init(rng, &[in_dim, out_dim], std), true);
        ps.insert(
            &format!("{name}.b"),
            ArrayD::zeros(IxDyn(&[out_dim])),
            true,
        );
        Self {
            w: format!("{name}.w"),
            b: format!("{name}.b"),
            in_dim,
            out_dim,
        }
    }

    /// Applies the affine map to the last axis of `x`.
    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, ps: &ParamStore<F>, x: Var) -> Var {
        let shape = g.value(x).shape().to_vec();
        let d = *shape.last().expect("non-empty input");
        assert_eq!(d, self.in_dim, "linear {}: input dim", self.w);
        let rows: usize = shape[..shape.len() - 1].iter().product();
        let flat = g.reshape(x, &[rows, d]);
        let w = g.param(ps, &self.w);
        let b = g.param(ps, &self.b);
        let y = g.matmul(flat, w);
        let y = g.add_bias(y, b);
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.out_dim;
        g.reshape(y, &out_shape)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormLayer {
    pub gamma: String,
    pub beta: String,
}

impl LayerNormLayer {
    pub fn new<F: Scalar>(ps: &mut ParamStore<F>, name: &str, dim: usize) -> Self {
        ps.insert(
            &format!("{name}.gamma"),
            ArrayD::from_elem(IxDyn(&[dim]), F::one()),
            true,
        );
        ps.insert(&format!("{name}.beta"), ArrayD::zeros(IxDyn(&[dim])), true);
        Self {
            gamma: format!("{name}.gamma"),
            beta: format!("{name}.beta"),
        }
    }

    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, ps: &ParamStore<F>, x: Var) -> Var {
        let gamma = g.param(ps, &self.gamma);
        let beta = g.param(ps, &self.beta);
        g.layer_norm(x, gamma, beta, 1e-5)
    }
}

/// Multi-layer perceptron with GELU between layers.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<F: Scalar>(
        ps: &mut ParamStore<F>,
        rng: &mut impl Rng,
        name: &str,
        dims: &[usize],
    ) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least in/out dims");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(ps, rng, &format!("{name}.{i}"), w[0], w[1]))
            .collect();
        Self { layers }
    }

    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, ps: &ParamStore<F>, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, ps, h);
            if i != last {
                h = g.gelu(h);
            }
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: String,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<F: Scalar>(
        ps: &mut ParamStore<F>,
        rng: &mut impl Rng,
        name: &str,
        rows: usize,
        dim: usize,
    ) -> Self {
        ps.insert(&format!("{name}.table"), randn_init(rng, &[rows, dim], 0.02), true);
        Self {
            table: format!("{name}.table"),
            rows,
            dim,
        }
    }

    pub fn forward<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        ps: &ParamStore<F>,
        indices: &[usize],
    ) -> Var {
        let table = g.param(ps, &self.table);
        g.gather(table, indices)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub model_dim: usize,
}

impl MultiHeadAttention {
    pub fn new<F: Scalar>(
        ps: &mut ParamStore<F>,
        rng: &mut impl Rng,
        name: &str,
        model_dim: usize,
        heads: usize,
    ) -> Self {
        assert_eq!(model_dim % heads, 0, "model dim divisible by heads");
        Self {
            wq: Linear::new(ps, rng, &format!("{name}.wq"), model_dim, model_dim),
            wk: Linear::new(ps, rng, &format!("{name}.wk"), model_dim, model_dim),
            wv: Linear::new(ps, rng, &format!("{name}.wv"), model_dim, model_dim),
            wo: Linear::new(ps, rng, &format!("{name}.wo"), model_dim, model_dim),
            heads,
            model_dim,
        }
    }

    /// Self-attention over (batch, seq, model_dim).
    pub fn forward<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        ps: &ParamStore<F>,
        x: Var,
        mask: Option<&ndarray::Array2<F>>,
    ) -> Var {
        let shape = g.value(x).shape().to_vec();
        let (bsz, seq) = (shape[0], shape[1]);
        let dh = self.model_dim / self.heads;
        let q = self.wq.forward(g, ps, x);
        let k = self.wk.forward(g, ps, x);
        let v = self.wv.forward(g, ps, x);
        let split = |g: &mut Graph<F>, t: Var| {
            let t = g.reshape(t, &[bsz, seq, self.heads, dh]);
            let t = g.permute(t, &[0, 2, 1, 3]);
            g.reshape(t, &[bsz * self.heads, seq, dh])
        };
        let qh = split(g, q);
        let kh = split(g, k);
        let vh = split(g, v);
        let out = g.attention(qh, kh, vh, mask);
        let out = g.reshape(out, &[bsz, self.heads, seq, dh]);
        let out = g.permute(out, &[0, 2, 1, 3]);
        let out = g.reshape(out, &[bsz, seq, self.model_dim]);
        self.wo.forward(g, ps, out)
    }
}

/// Pre-norm transformer block: x + attn(ln(x)), then x + ff(ln(x)).
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub ln1: LayerNormLayer,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNormLayer,
    pub ff1: Linear,
    pub ff2: Linear,
}

impl TransformerBlock {
    pub fn new<F: Scalar>(
        ps: &mut ParamStore<F>,
        rng: &mut impl Rng,
        name: &str,
        model_dim: usize,
        heads: usize,
        ff_dim: usize,
    ) -> Self {
        Self {
            ln1: LayerNormLayer::new(ps, &format!("{name}.ln1"), model_dim),
            attn: MultiHeadAttention::new(ps, rng, &format!("{name}.attn"), model_dim, heads),
            ln2: LayerNormLayer::new(ps, &format!("{name}.ln2"), model_dim),
            ff1: Linear::new(ps, rng, &format!("{name}.ff1"), model_dim, ff_dim),
            ff2: Linear::new(ps, rng, &format!("{name}.ff2"), ff_dim, model_dim),
        }
    }

    pub fn forward<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        ps: &ParamStore<F>,
        x: Var,
        mask: Option<&ndarray::Array2<F>>,
    ) -> Var {
        let h = self.ln1.forward(g, ps, x);
        let a = self.attn.forward(g, ps, h, mask);
        let x = g.add(x, a);
        let h = self.ln2.forward(g, ps, x);
        let h = self.ff1.forward(g, ps, h);
        let h = g.gelu(h);
        let h = self.ff2.forward(g, ps, h);
        g.add(x, h)
    }
}

/// Stack of pre-norm blocks with a final layer norm. A per-sample embedding
/// (the diffusion timestep) can be injected at the input of every block.
#[derive(Debug, Clone)]
pub struct Transformer {
    pub blocks: Vec<TransformerBlock>,
    pub final_ln: LayerNormLayer,
}

impl Transformer {
    pub fn new<F: Scalar>(
        ps: &mut ParamStore<F>,
        rng: &mut impl Rng,
        name: &str,
        model_dim: usize,
        heads: usize,
        ff_dim: usize,
        depth: usize,
    ) -> Self {
        let blocks = (0..depth)
            .map(|i| {
                TransformerBlock::new(ps, rng, &format!("{name}.block{i}"), model_dim, heads, ff_dim)
            })
            .collect();
        Self {
            blocks,
            final_ln: LayerNormLayer::new(ps, &format!("{name}.final_ln"), model_dim),
        }
    }

    /// `inject` has shape (batch, model_dim) and is added to every token at
    /// the input of each block.
    pub fn forward<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        ps: &ParamStore<F>,
        mut x: Var,
        inject: Option<Var>,
        mask: Option<&ndarray::Array2<F>>,
    ) -> Var {
        for block in &self.blocks {
            if let Some(t) = inject {
                x = g.add_bcast(x, t, 1);
            }
            x = block.forward(g, ps, x, mask);
        }
        self.final_ln.forward(g, ps, x)
    }
}
