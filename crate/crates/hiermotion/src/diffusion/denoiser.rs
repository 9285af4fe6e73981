//! Conditioned transformer denoiser.
//!
//! Tokens: the condition modalities first (each projected to model width),
//! then one token per sequence position embedding the noisy data, with
//! per-frame conditions added to their positions. The diffusion timestep is
//! sinusoidally embedded, passed through a two-layer MLP and added to every
//! token at the input of each block. An optional length head predicts a
//! multinomial over sequence lengths from a learned query token and the
//! pooled condition embedding.

use super::condition::{CondBatch, ConditionSet};
use super::{q_sample, sample_with, DiffusionError, DiffusionSchedule};
use crate::nn::{
    sinusoidal_embed, Adam, Graph, Linear, Mlp, Normalizer, ParamStore, Scalar, Transformer, Var,
};
use ndarray::{Array2, Array3, ArrayD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub data_dim: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ff_dim: usize,
    /// Condition token names and input dims, in fixed order.
    pub cond_tokens: Vec<(String, usize)>,
    /// Dim of per-position conditions, when used.
    pub per_frame_dim: Option<usize>,
    /// Longest data sequence the positional table supports.
    pub max_len: usize,
    /// When set, the model carries a length head over {1..n_max}.
    pub n_max: Option<usize>,
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<(), DiffusionError> {
        if self.model_dim % 2 != 0 || self.model_dim % self.heads != 0 {
            return Err(DiffusionError::ConditionMismatch(
                "model_dim must be even and divisible by heads".into(),
            ));
        }
        if self.max_len == 0 || self.data_dim == 0 {
            return Err(DiffusionError::ConditionMismatch(
                "data_dim and max_len must be positive".into(),
            ));
        }
        Ok(())
    }

    fn n_cond(&self) -> usize {
        self.cond_tokens.len()
    }
}

pub enum LengthMode {
    Sample,
    Argmax,
}

pub struct DenoiserTransformer<F: Scalar> {
    pub config: DenoiserConfig,
    pub params: ParamStore<F>,
    in_proj: Linear,
    out_proj: Linear,
    cond_projs: Vec<Linear>,
    per_frame_proj: Option<Linear>,
    time_mlp: Mlp,
    transformer: Transformer,
    length_mlp: Option<Mlp>,
    x0_norm: Normalizer,
    cond_norms: Vec<Normalizer>,
    pf_norm: Option<Normalizer>,
}

impl<F: Scalar> DenoiserTransformer<F> {
    pub fn new(config: DenoiserConfig, rng: &mut impl Rng) -> Result<Self, DiffusionError> {
        config.validate()?;
        let mut ps = ParamStore::new();
        let dm = config.model_dim;
        let in_proj = Linear::new(&mut ps, rng, "in", config.data_dim, dm);
        let out_proj = Linear::new(&mut ps, rng, "out", dm, config.data_dim);
        let cond_projs = config
            .cond_tokens
            .iter()
            .map(|(name, dim)| Linear::new(&mut ps, rng, &format!("cond.{name}"), *dim, dm))
            .collect();
        let per_frame_proj = config
            .per_frame_dim
            .map(|dim| Linear::new(&mut ps, rng, "per_frame", dim, dm));
        let time_mlp = Mlp::new(&mut ps, rng, "time", &[dm, dm, dm]);
        let transformer = Transformer::new(
            &mut ps,
            rng,
            "tf",
            dm,
            config.heads,
            config.ff_dim,
            config.blocks,
        );
        ps.insert(
            "pos.table",
            crate::nn::randn_init(rng, &[config.n_cond() + config.max_len, dm], 0.02),
            true,
        );
        let length_mlp = if let Some(n_max) = config.n_max {
            ps.insert(
                "len.h_tok",
                crate::nn::randn_init(rng, &[dm], 0.02),
                true,
            );
            Some(Mlp::new(&mut ps, rng, "len.mlp", &[2 * dm, dm, n_max]))
        } else {
            None
        };
        let x0_norm = Normalizer::unit(config.data_dim);
        x0_norm.register(&mut ps, "norm.x0");
        let mut cond_norms = Vec::new();
        for (name, dim) in &config.cond_tokens {
            let n = Normalizer::unit(*dim);
            n.register(&mut ps, &format!("norm.cond.{name}"));
            cond_norms.push(n);
        }
        let pf_norm = config.per_frame_dim.map(|dim| {
            let n = Normalizer::unit(dim);
            n.register(&mut ps, "norm.pf");
            n
        });
        Ok(Self {
            config,
            params: ps,
            in_proj,
            out_proj,
            cond_projs,
            per_frame_proj,
            time_mlp,
            transformer,
            length_mlp,
            x0_norm,
            cond_norms,
            pf_norm,
        })
    }

    /// Installs normalizers fitted on the training set.
    pub fn set_normalizers(
        &mut self,
        x0: Normalizer,
        conds: Vec<Normalizer>,
        per_frame: Option<Normalizer>,
    ) {
        assert_eq!(conds.len(), self.cond_norms.len());
        x0.store(&mut self.params, "norm.x0");
        for ((n, (name, _)), slot) in conds
            .iter()
            .zip(&self.config.cond_tokens)
            .zip(self.cond_norms.iter_mut())
        {
            n.store(&mut self.params, &format!("norm.cond.{name}"));
            *slot = n.clone();
        }
        if let (Some(pf), Some(slot)) = (per_frame, self.pf_norm.as_mut()) {
            pf.store(&mut self.params, "norm.pf");
            *slot = pf;
        }
        self.x0_norm = x0;
    }

    pub fn normalize_x0(&self, seq: &Array2<f64>) -> Array2<f64> {
        let mut out = seq.clone();
        for mut row in out.rows_mut() {
            let n = self.x0_norm.normalize(row.as_slice().unwrap());
            row.assign(&ndarray::Array1::from_vec(n));
        }
        out
    }

    pub fn denormalize_x0(&self, seq: &Array2<f64>) -> Array2<f64> {
        let mut out = seq.clone();
        for mut row in out.rows_mut() {
            let n = self.x0_norm.denormalize(row.as_slice().unwrap());
            row.assign(&ndarray::Array1::from_vec(n));
        }
        out
    }

    /// Stacks and normalizes a batch of condition sets.
    pub fn prepare_conditions(
        &self,
        sets: &[&ConditionSet],
        seq_len: usize,
    ) -> Result<CondBatch, DiffusionError> {
        let mut batch = CondBatch::stack(
            sets,
            &self.config.cond_tokens,
            self.config.per_frame_dim,
            seq_len,
        )?;
        for (arr, norm) in batch.tokens.iter_mut().zip(&self.cond_norms) {
            for mut row in arr.rows_mut() {
                let n = norm.normalize(row.as_slice().unwrap());
                row.assign(&ndarray::Array1::from_vec(n));
            }
        }
        if let (Some(pf), Some(norm)) = (batch.per_frame.as_mut(), &self.pf_norm) {
            for mut mat in pf.outer_iter_mut() {
                for mut row in mat.rows_mut() {
                    let n = norm.normalize(row.as_slice().unwrap());
                    row.assign(&ndarray::Array1::from_vec(n));
                }
            }
        }
        Ok(batch)
    }

    fn to_f(&self, a: &ArrayD<f64>) -> ArrayD<F> {
        a.mapv(F::cast_from)
    }

    /// Embeds the condition tokens: (batch, n_cond, model_dim).
    fn embed_conditions(&self, g: &mut Graph<F>, cond: &CondBatch) -> Var {
        let b = cond.batch_size();
        let dm = self.config.model_dim;
        let mut toks = Vec::with_capacity(self.cond_projs.len());
        for (arr, proj) in cond.tokens.iter().zip(&self.cond_projs) {
            let leaf = g.leaf(self.to_f(&arr.clone().into_dyn()));
            let emb = proj.forward(g, &self.params, leaf);
            toks.push(g.reshape(emb, &[b, 1, dm]));
        }
        g.concat(&toks, 1)
    }

    /// Predicts the clean signal from the noisy batch.
    ///
    /// `x_t` is (batch, seq, data_dim) in normalized space; `ts` gives the
    /// diffusion step per batch element. The output has the same shape.
    pub fn forward(
        &self,
        g: &mut Graph<F>,
        x_t: &Array3<f64>,
        cond: &CondBatch,
        ts: &[usize],
    ) -> Result<Var, DiffusionError> {
        let (b, s, d) = x_t.dim();
        if d != self.config.data_dim || s > self.config.max_len {
            return Err(DiffusionError::ConditionMismatch(format!(
                "x_t shape ({b}, {s}, {d}) incompatible with data_dim {} / max_len {}",
                self.config.data_dim, self.config.max_len
            )));
        }
        if ts.len() != b {
            return Err(DiffusionError::ConditionMismatch(
                "one timestep per batch element".into(),
            ));
        }
        let dm = self.config.model_dim;
        let n_cond = self.config.n_cond();

        let x_leaf = g.leaf(self.to_f(&x_t.clone().into_dyn()));
        let mut data = self.in_proj.forward(g, &self.params, x_leaf);
        if let (Some(proj), Some(pf)) = (&self.per_frame_proj, &cond.per_frame) {
            let pf_leaf = g.leaf(self.to_f(&pf.clone().into_dyn()));
            let pf_emb = proj.forward(g, &self.params, pf_leaf);
            data = g.add(data, pf_emb);
        }
        let seq = if n_cond > 0 {
            let cond_emb = self.embed_conditions(g, cond);
            g.concat(&[cond_emb, data], 1)
        } else {
            data
        };
        let pos = g.param(&self.params, "pos.table");
        let pos_slice = g.slice_axis(pos, 0, 0, n_cond + s);
        let seq = g.add_bcast(seq, pos_slice, 0);

        let mut t_raw = Array2::<f64>::zeros((b, dm));
        for (i, &t) in ts.iter().enumerate() {
            let e = sinusoidal_embed(t as u64, dm)?;
            for (j, v) in e.into_iter().enumerate() {
                t_raw[(i, j)] = v;
            }
        }
        let t_leaf = g.leaf(self.to_f(&t_raw.into_dyn()));
        let t_emb = self.time_mlp.forward(g, &self.params, t_leaf);

        let hidden = self
            .transformer
            .forward(g, &self.params, seq, Some(t_emb), None);
        let data_out = g.slice_axis(hidden, 1, n_cond, s);
        Ok(self.out_proj.forward(g, &self.params, data_out))
    }

    /// Length logits from the learned query token and pooled conditions.
    pub fn length_logits(&self, g: &mut Graph<F>, cond: &CondBatch) -> Result<Var, DiffusionError> {
        let mlp = self.length_mlp.as_ref().ok_or(DiffusionError::NoLengthHead)?;
        let b = cond.batch_size();
        let dm = self.config.model_dim;
        let cond_emb = self.embed_conditions(g, cond);
        let pooled = g.mean_axis(cond_emb, 1);
        let h_tok = g.param(&self.params, "len.h_tok");
        let zeros = g.leaf(ArrayD::zeros(IxDyn(&[b, dm])));
        let h_exp = g.add_bcast(zeros, h_tok, 0);
        let joint = g.concat(&[h_exp, pooled], 1);
        Ok(mlp.forward(g, &self.params, joint))
    }

    /// Cross-entropy of true lengths (1-based) under the length head.
    pub fn length_loss(
        &self,
        g: &mut Graph<F>,
        cond: &CondBatch,
        lengths: &[usize],
    ) -> Result<Var, DiffusionError> {
        let n_max = self.config.n_max.ok_or(DiffusionError::NoLengthHead)?;
        let logits = self.length_logits(g, cond)?;
        let targets: Vec<usize> = lengths
            .iter()
            .map(|&n| {
                if n == 0 || n > n_max {
                    Err(DiffusionError::LengthOutOfRange { n, n_max })
                } else {
                    Ok(n - 1)
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(g.cross_entropy(logits, &targets))
    }

    /// Training objective: MSE between the predicted and true clean signal
    /// for a batch of same-length sequences (raw, unnormalized input).
    pub fn x0_loss(
        &self,
        g: &mut Graph<F>,
        x0: &[Array2<f64>],
        conds: &[&ConditionSet],
        ts: &[usize],
        eps: &[Array2<f64>],
        sched: &DiffusionSchedule,
    ) -> Result<Var, DiffusionError> {
        let b = x0.len();
        let s = x0[0].shape()[0];
        let d = self.config.data_dim;
        let cond = self.prepare_conditions(conds, s)?;
        let mut x0_arr = Array3::<f64>::zeros((b, s, d));
        let mut xt_arr = Array3::<f64>::zeros((b, s, d));
        for i in 0..b {
            let x0n = self.normalize_x0(&x0[i]);
            let xt = q_sample(&x0n, ts[i], &eps[i], sched)?;
            x0_arr
                .index_axis_mut(ndarray::Axis(0), i)
                .assign(&x0n);
            xt_arr.index_axis_mut(ndarray::Axis(0), i).assign(&xt);
        }
        let pred = self.forward(g, &xt_arr, &cond, ts)?;
        let target = g.leaf(self.to_f(&x0_arr.into_dyn()));
        Ok(g.mse(pred, target))
    }

    /// Reverse-chain sampling for a single condition set; returns the
    /// denormalized clean signal (length, data_dim).
    pub fn sample(
        &self,
        cond: &ConditionSet,
        length: usize,
        sched: &DiffusionSchedule,
        rng: &mut impl Rng,
    ) -> Result<Array2<f64>, DiffusionError> {
        if length == 0 || length > self.config.max_len {
            return Err(DiffusionError::BadLength);
        }
        let batch = self.prepare_conditions(&[cond], length)?;
        let d = self.config.data_dim;
        let out = sample_with(
            |x, t| {
                let mut g = Graph::<F>::new();
                let mut xt = Array3::<f64>::zeros((1, length, d));
                xt.index_axis_mut(ndarray::Axis(0), 0).assign(x);
                let pred = self
                    .forward(&mut g, &xt, &batch, &[t])
                    .expect("shapes validated");
                let v = g.value(pred);
                Array2::from_shape_fn((length, d), |(i, j)| v[[0, i, j]].cast_f64())
            },
            length,
            d,
            sched,
            rng,
        )?;
        Ok(self.denormalize_x0(&out))
    }

    /// Draws or argmaxes a sequence length from the length head.
    pub fn predict_length(
        &self,
        cond: &ConditionSet,
        rng: &mut impl Rng,
        mode: LengthMode,
    ) -> Result<usize, DiffusionError> {
        let n_max = self.config.n_max.ok_or(DiffusionError::NoLengthHead)?;
        let batch = self.prepare_conditions(&[cond], 1)?;
        let mut g = Graph::<F>::new();
        let logits = self.length_logits(&mut g, &batch)?;
        let row: Vec<f64> = (0..n_max).map(|i| g.value(logits)[[0, i]].cast_f64()).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        match mode {
            LengthMode::Argmax => {
                let mut best = 0;
                for (i, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = i;
                    }
                }
                Ok(best + 1)
            }
            LengthMode::Sample => {
                let u: f64 = rng.gen::<f64>() * z;
                let mut acc = 0.0;
                for (i, e) in exps.iter().enumerate() {
                    acc += e;
                    if u <= acc {
                        return Ok(i + 1);
                    }
                }
                Ok(n_max)
            }
        }
    }

    /// Probability vector of the length head for a single condition.
    pub fn length_distribution(&self, cond: &ConditionSet) -> Result<Vec<f64>, DiffusionError> {
        let n_max = self.config.n_max.ok_or(DiffusionError::NoLengthHead)?;
        let batch = self.prepare_conditions(&[cond], 1)?;
        let mut g = Graph::<F>::new();
        let logits = self.length_logits(&mut g, &batch)?;
        let row: Vec<f64> = (0..n_max).map(|i| g.value(logits)[[0, i]].cast_f64()).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / z).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), DiffusionError> {
        let config = serde_json::to_value(&self.config).map_err(crate::nn::NnError::from)?;
        crate::nn::save_checkpoint(path, &self.params, &config)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DiffusionError> {
        let (params, config) = crate::nn::load_checkpoint::<F>(path)?;
        let config: DenoiserConfig =
            serde_json::from_value(config).map_err(crate::nn::NnError::from)?;
        let mut rng = crate::rng::stream_rng(0, "denoiser/load");
        let mut model = Self::new(config, &mut rng)?;
        for (name, entry) in params.iter() {
            model
                .params
                .set(name, entry.value.clone())
                .map_err(DiffusionError::Nn)?;
        }
        model.x0_norm = Normalizer::load(&model.params, "norm.x0").expect("registered");
        model.cond_norms = model
            .config
            .cond_tokens
            .iter()
            .map(|(name, _)| {
                Normalizer::load(&model.params, &format!("norm.cond.{name}")).expect("registered")
            })
            .collect();
        if model.config.per_frame_dim.is_some() {
            model.pf_norm = Normalizer::load(&model.params, "norm.pf");
        }
        Ok(model)
    }
}

/// One Adam training step over a batch; returns the scalar loss.
pub fn train_step<F: Scalar>(
    model: &mut DenoiserTransformer<F>,
    adam: &mut Adam<F>,
    x0: &[Array2<f64>],
    conds: &[&ConditionSet],
    lengths: Option<&[usize]>,
    sched: &DiffusionSchedule,
    rng: &mut impl Rng,
) -> Result<f64, DiffusionError> {
    let b = x0.len();
    let s = x0[0].shape()[0];
    let d = model.config.data_dim;
    let ts: Vec<usize> = (0..b).map(|_| rng.gen_range(1..=sched.t_max())).collect();
    let eps: Vec<Array2<f64>> = (0..b)
        .map(|_| {
            Array2::from_shape_fn((s, d), |_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        })
        .collect();
    let mut g = Graph::<F>::new();
    let mut loss = model.x0_loss(&mut g, x0, conds, &ts, &eps, sched)?;
    if let Some(lens) = lengths {
        let cond = model.prepare_conditions(conds, s)?;
        let len_loss = model.length_loss(&mut g, &cond, lens)?;
        loss = g.add(loss, len_loss);
    }
    let value = g.scalar_value(loss).cast_f64();
    if !value.is_finite() {
        return Err(DiffusionError::NanLoss(adam.step_count()));
    }
    g.backward(loss);
    adam.step(&mut model.params, &g.param_grads())?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AdamConfig;

    fn tiny_config(n_max: Option<usize>) -> DenoiserConfig {
        DenoiserConfig {
            data_dim: 4,
            model_dim: 16,
            heads: 2,
            blocks: 1,
            ff_dim: 32,
            cond_tokens: vec![("goal".into(), 3)],
            per_frame_dim: None,
            max_len: 8,
            n_max,
        }
    }

    fn goal_cond(v: f64) -> ConditionSet {
        ConditionSet::new(vec![("goal".into(), vec![v, 0.5, -0.25])])
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let mut rng = crate::rng::stream_rng(71, "denoiser/shape");
        let model = DenoiserTransformer::<f64>::new(tiny_config(None), &mut rng).unwrap();
        let cond_set = goal_cond(1.0);
        for s in [1usize, 5] {
            let cond = model.prepare_conditions(&[&cond_set, &cond_set], s).unwrap();
            let x = Array3::<f64>::zeros((2, s, 4));
            let mut g = Graph::new();
            let y = model.forward(&mut g, &x, &cond, &[3, 7]).unwrap();
            assert_eq!(g.value(y).shape(), &[2, s, 4]);
        }
    }

    #[test]
    fn sample_is_bit_deterministic_given_seed() {
        let mut rng = crate::rng::stream_rng(72, "denoiser/det");
        let model = DenoiserTransformer::<f64>::new(tiny_config(None), &mut rng).unwrap();
        let sched = super::super::make_schedule(10, 1e-3, 0.1).unwrap();
        let cond = goal_cond(0.3);
        let mut r1 = crate::rng::stream_rng(5, "denoiser/sample");
        let mut r2 = crate::rng::stream_rng(5, "denoiser/sample");
        let a = model.sample(&cond, 4, &sched, &mut r1).unwrap();
        let b = model.sample(&cond, 4, &sched, &mut r2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overfits_constant_sequence() {
        let mut rng = crate::rng::stream_rng(73, "denoiser/overfit");
        let mut model = DenoiserTransformer::<f64>::new(tiny_config(None), &mut rng).unwrap();
        let sched = super::super::make_schedule(20, 1e-3, 0.15).unwrap();
        let target = Array2::from_shape_fn((3, 4), |(i, j)| 0.3 * i as f64 - 0.2 * j as f64);
        let cond = goal_cond(0.0);
        model.set_normalizers(
            Normalizer::fit(target.rows().into_iter().map(|r| r.to_slice().unwrap()), 4),
            vec![Normalizer::unit(3)],
            None,
        );
        let mut adam = Adam::new(AdamConfig::with_lr(3e-3));
        let mut last = f64::INFINITY;
        let mut first = None;
        for step in 0..800 {
            let x0 = vec![target.clone(); 4];
            let conds = vec![&cond; 4];
            let loss =
                train_step(&mut model, &mut adam, &x0, &conds, None, &sched, &mut rng).unwrap();
            if first.is_none() {
                first = Some(loss);
            }
            if step > 700 {
                last = last.min(loss);
            }
        }
        assert!(
            last < 1e-3,
            "converged loss {last} (initial {:?})",
            first.unwrap()
        );
        // Samples land near the constant target.
        let mut srng = crate::rng::stream_rng(74, "denoiser/overfit-sample");
        let out = model.sample(&cond, 3, &sched, &mut srng).unwrap();
        let max_err = out
            .iter()
            .zip(target.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 0.1, "max error {max_err}");
    }

    #[test]
    fn length_head_learns_constant_and_respects_support() {
        let mut rng = crate::rng::stream_rng(75, "denoiser/len");
        let mut model = DenoiserTransformer::<f64>::new(tiny_config(Some(6)), &mut rng).unwrap();
        let cond = goal_cond(0.8);
        let mut adam = Adam::new(AdamConfig::with_lr(1e-2));
        for _ in 0..200 {
            let batch = model.prepare_conditions(&[&cond, &cond], 1).unwrap();
            let mut g = Graph::new();
            let loss = model.length_loss(&mut g, &batch, &[4, 4]).unwrap();
            g.backward(loss);
            adam.step(&mut model.params, &g.param_grads()).unwrap();
        }
        let n = model
            .predict_length(&cond, &mut rng, LengthMode::Argmax)
            .unwrap();
        assert_eq!(n, 4);
        for _ in 0..50 {
            let n = model
                .predict_length(&cond, &mut rng, LengthMode::Sample)
                .unwrap();
            assert!((1..=6).contains(&n));
        }
        // no length head -> error
        let bare = DenoiserTransformer::<f64>::new(tiny_config(None), &mut rng).unwrap();
        assert!(matches!(
            bare.predict_length(&cond, &mut rng, LengthMode::Argmax),
            Err(DiffusionError::NoLengthHead)
        ));
    }

    #[test]
    fn uniform_logits_give_uniform_length_distribution() {
        // Zeroing the length-head output layer forces all-zero logits.
        let mut rng = crate::rng::stream_rng(76, "denoiser/uniform");
        let mut model = DenoiserTransformer::<f64>::new(tiny_config(Some(5)), &mut rng).unwrap();
        let w_name = "len.mlp.1.w";
        let shape = model.params.get(w_name).unwrap().shape().to_vec();
        model
            .params
            .set(w_name, ArrayD::zeros(IxDyn(&shape)))
            .unwrap();
        let b_name = "len.mlp.1.b";
        let shape = model.params.get(b_name).unwrap().shape().to_vec();
        model
            .params
            .set(b_name, ArrayD::zeros(IxDyn(&shape)))
            .unwrap();
        let dist = model.length_distribution(&goal_cond(0.1)).unwrap();
        for p in dist {
            assert!((p - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_behavior() {
        let mut rng = crate::rng::stream_rng(77, "denoiser/ckpt");
        let model = DenoiserTransformer::<f64>::new(tiny_config(Some(4)), &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("denoiser.ckpt");
        model.save(&path).unwrap();
        let back = DenoiserTransformer::<f64>::load(&path).unwrap();
        let cond = goal_cond(-0.4);
        let sched = super::super::make_schedule(5, 1e-3, 0.1).unwrap();
        let mut r1 = crate::rng::stream_rng(1, "s");
        let mut r2 = crate::rng::stream_rng(1, "s");
        let a = model.sample(&cond, 2, &sched, &mut r1).unwrap();
        let b = back.sample(&cond, 2, &sched, &mut r2).unwrap();
        assert_eq!(a, b);
    }
}
