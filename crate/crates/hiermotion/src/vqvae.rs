//! Goal-pose generator: per-part encoders, per-part codebooks, a shared
//! decoder, and a conditional autoregressive prior over the codebook
//! indices.
//!
//! A pose splits into five joint groups; each group's encoder output is
//! quantized against its own codebook and the concatenated codes feed one
//! shared decoder. The prior is a small causal transformer over the five
//! index tokens, conditioned on the goal's environment occupancy and the
//! action label.

use crate::motion::{Action, Pose, Skeleton, NUM_ACTIONS, NUM_PARTS};
use crate::nn::{
    causal_mask, randn_init, Adam, AdamConfig, Embedding, Graph, Linear, Mlp, NnError, Normalizer,
    ParamStore, Scalar, Transformer, Var,
};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VqError {
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("query dim {got} does not match codebook dim {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("training dataset must not be empty")]
    EmptyDataset,
    #[error("model has not been trained")]
    Untrained,
    #[error("loss inputs must have {expected} part pairs, got {got}")]
    PartCountMismatch { expected: usize, got: usize },
    #[error("pose has wrong joint count")]
    BadPose,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// One per-part table of code vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub entries: Array2<f64>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.entries.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn code_dim(&self) -> usize {
        self.entries.shape()[1]
    }

    /// Nearest entry in Euclidean distance; ties break toward the lowest
    /// index.
    pub fn quantize(&self, z_hat: &[f64]) -> Result<(usize, Vec<f64>), VqError> {
        if self.is_empty() {
            return Err(VqError::EmptyCodebook);
        }
        if z_hat.len() != self.code_dim() {
            return Err(VqError::DimMismatch {
                expected: self.code_dim(),
                got: z_hat.len(),
            });
        }
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, row) in self.entries.rows().into_iter().enumerate() {
            let d: f64 = row
                .iter()
                .zip(z_hat)
                .map(|(&e, &q)| (e - q) * (e - q))
                .sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        Ok((best, self.entries.row(best).to_vec()))
    }

    /// True when no two entries coincide.
    pub fn entries_distinct(&self) -> bool {
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let d: f64 = self
                    .entries
                    .row(i)
                    .iter()
                    .zip(self.entries.row(j).iter())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
                if d == 0.0 {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VqvaeConfig {
    /// Codebook size K per part.
    pub codebook_size: usize,
    /// Code dim d.
    pub code_dim: usize,
    /// Commitment weight β.
    pub commitment_beta: f64,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub num_joints: usize,
    #[serde(default)]
    pub trained: bool,
}

impl Default for VqvaeConfig {
    fn default() -> Self {
        Self {
            codebook_size: 64,
            code_dim: 32,
            commitment_beta: 0.25,
            enc_hidden: 64,
            dec_hidden: 128,
            num_joints: 15,
            trained: false,
        }
    }
}

pub struct PartVqvae<F: Scalar> {
    pub config: VqvaeConfig,
    pub params: ParamStore<F>,
    skeleton: Skeleton,
    encoders: Vec<Mlp>,
    decoder: Mlp,
    pose_norm: Normalizer,
}

impl<F: Scalar> PartVqvae<F> {
    pub fn new(config: VqvaeConfig, skeleton: &Skeleton, rng: &mut impl Rng) -> Self {
        let mut ps = ParamStore::new();
        let pose_dim = skeleton.num_joints() * 3;
        let encoders = (0..NUM_PARTS)
            .map(|i| {
                let part_dim = skeleton.parts[i].len() * 3;
                Mlp::new(
                    &mut ps,
                    rng,
                    &format!("enc{i}"),
                    &[part_dim, config.enc_hidden, config.enc_hidden, config.code_dim],
                )
            })
            .collect();
        let decoder = Mlp::new(
            &mut ps,
            rng,
            "dec",
            &[
                NUM_PARTS * config.code_dim,
                config.dec_hidden,
                config.dec_hidden,
                pose_dim,
            ],
        );
        for i in 0..NUM_PARTS {
            ps.insert(
                &format!("codebook.{i}"),
                randn_init(rng, &[config.codebook_size, config.code_dim], 0.1),
                true,
            );
        }
        let pose_norm = Normalizer::unit(pose_dim);
        pose_norm.register(&mut ps, "norm.pose");
        Self {
            config,
            params: ps,
            skeleton: skeleton.clone(),
            encoders,
            decoder,
            pose_norm,
        }
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn codebook(&self, part: usize) -> Codebook {
        let arr = self.params.get(&format!("codebook.{part}")).unwrap();
        let k = arr.shape()[0];
        let d = arr.shape()[1];
        Codebook {
            entries: Array2::from_shape_fn((k, d), |(i, j)| arr[[i, j]].cast_f64()),
        }
    }

    fn normalized_parts(&self, pose: &Pose) -> Result<Vec<Vec<f64>>, VqError> {
        if pose.num_joints() != self.skeleton.num_joints() {
            return Err(VqError::BadPose);
        }
        let flat = self.pose_norm.normalize(&pose.flatten());
        Ok((0..NUM_PARTS)
            .map(|p| {
                self.skeleton.parts[p]
                    .iter()
                    .flat_map(|&j| flat[3 * j..3 * j + 3].to_vec())
                    .collect()
            })
            .collect())
    }

    /// Encoder output ẑ_i for each part (no quantization), batched.
    fn encode_batch(&self, g: &mut Graph<F>, poses: &[&Pose]) -> Result<Vec<Var>, VqError> {
        let b = poses.len();
        let mut zhats = Vec::with_capacity(NUM_PARTS);
        let parts: Vec<Vec<Vec<f64>>> = poses
            .iter()
            .map(|p| self.normalized_parts(p))
            .collect::<Result<_, _>>()?;
        for i in 0..NUM_PARTS {
            let dim = self.skeleton.parts[i].len() * 3;
            let mut arr = Array2::<f64>::zeros((b, dim));
            for (row, per_pose) in parts.iter().enumerate() {
                for (col, &v) in per_pose[i].iter().enumerate() {
                    arr[(row, col)] = v;
                }
            }
            let leaf = g.leaf(arr.mapv(F::cast_from).into_dyn());
            zhats.push(self.encoders[i].forward(g, &self.params, leaf));
        }
        Ok(zhats)
    }

    /// Codebook indices for a pose.
    pub fn encode_pose(&self, pose: &Pose) -> Result<[usize; NUM_PARTS], VqError> {
        if !self.config.trained {
            return Err(VqError::Untrained);
        }
        let mut g = Graph::<F>::new();
        let zhats = self.encode_batch(&mut g, &[pose])?;
        let mut indices = [0usize; NUM_PARTS];
        for i in 0..NUM_PARTS {
            let z: Vec<f64> = g.value(zhats[i]).iter().map(|v| v.cast_f64()).collect();
            let (idx, _) = self.codebook(i).quantize(&z)?;
            indices[i] = idx;
        }
        Ok(indices)
    }

    /// Decodes codebook indices back to a pose.
    pub fn decode_indices(&self, indices: &[usize; NUM_PARTS]) -> Result<Pose, VqError> {
        let mut g = Graph::<F>::new();
        let mut codes = Vec::with_capacity(NUM_PARTS);
        for (i, &idx) in indices.iter().enumerate() {
            let table = g.param(&self.params, &format!("codebook.{i}"));
            codes.push(g.gather(table, &[idx]));
        }
        let z = g.concat(&codes, 1);
        let out = self.decoder.forward(&mut g, &self.params, z);
        let flat: Vec<f64> = g.value(out).iter().map(|v| v.cast_f64()).collect();
        let raw = self.pose_norm.denormalize(&flat);
        Pose::from_flat(&raw).map_err(|_| VqError::BadPose)
    }

    /// Mean per-joint reconstruction error in meters over a pose set.
    pub fn mean_joint_error(&self, poses: &[Pose]) -> Result<f64, VqError> {
        let mut total = 0.0;
        let mut count = 0usize;
        for pose in poses {
            let idx = self.encode_pose(pose)?;
            let recon = self.decode_indices(&idx)?;
            for (a, b) in pose.joints.iter().zip(&recon.joints) {
                let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2))
                    .sqrt();
                total += d;
                count += 1;
            }
        }
        Ok(total / count as f64)
    }

    pub fn save(&self, path: &Path) -> Result<(), VqError> {
        let config = serde_json::to_value(&self.config).map_err(NnError::from)?;
        crate::nn::save_checkpoint(path, &self.params, &config)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VqError> {
        let (params, config) = crate::nn::load_checkpoint::<F>(path)?;
        let config: VqvaeConfig = serde_json::from_value(config).map_err(NnError::from)?;
        let mut rng = crate::rng::stream_rng(0, "vqvae/load");
        let mut model = Self::new(config, &Skeleton::default15(), &mut rng);
        for (name, entry) in params.iter() {
            model.params.set(name, entry.value.clone())?;
        }
        model.pose_norm = Normalizer::load(&model.params, "norm.pose").expect("registered");
        Ok(model)
    }
}

/// Builds the VQ-VAE objective on the tape with exact stop-gradient
/// semantics: the reconstruction term trains encoders (straight-through)
/// and the decoder, the codebook term trains only the codes, and the
/// commitment term (weight β) trains only the encoders. Norms are squared
/// L2 sums per sample, averaged over the batch.
pub fn vqvae_loss<F: Scalar>(
    g: &mut Graph<F>,
    pose: Var,
    recon: Var,
    z_hats: &[Var],
    codes: &[Var],
    beta: f64,
) -> Result<Var, VqError> {
    if z_hats.len() != codes.len() {
        return Err(VqError::PartCountMismatch {
            expected: z_hats.len(),
            got: codes.len(),
        });
    }
    let b = g.value(pose).shape()[0] as f64;
    let inv_b = F::cast_from(1.0 / b);
    let diff = g.sub(pose, recon);
    let sq = g.mul(diff, diff);
    let recon_term = g.sum_all(sq);
    let mut total = g.scale(recon_term, inv_b);
    for (&zh, &q) in z_hats.iter().zip(codes) {
        let zh_sg = g.detach(zh);
        let d1 = g.sub(zh_sg, q);
        let sq1 = g.mul(d1, d1);
        let code_term = g.sum_all(sq1);
        let code_term = g.scale(code_term, inv_b);
        total = g.add(total, code_term);

        let q_sg = g.detach(q);
        let d2 = g.sub(q_sg, zh);
        let sq2 = g.mul(d2, d2);
        let commit = g.sum_all(sq2);
        let commit = g.scale(commit, F::cast_from(beta / b));
        total = g.add(total, commit);
    }
    Ok(total)
}

/// Nearest-code assignment of a pose batch under the current codebooks:
/// one index per part per pose.
pub fn quantize_poses<F: Scalar>(
    model: &PartVqvae<F>,
    batch: &[&Pose],
) -> Result<Vec<[usize; NUM_PARTS]>, VqError> {
    let mut g = Graph::<F>::new();
    let zhats = model.encode_batch(&mut g, batch)?;
    let mut out = vec![[0usize; NUM_PARTS]; batch.len()];
    for i in 0..NUM_PARTS {
        let book = model.codebook(i);
        for (row, slots) in out.iter_mut().enumerate() {
            let z: Vec<f64> = (0..model.config.code_dim)
                .map(|j| g.value(zhats[i])[[row, j]].cast_f64())
                .collect();
            slots[i] = book.quantize(&z)?.0;
        }
    }
    Ok(out)
}

/// Builds the full training objective on the tape for a pose batch:
/// part-wise encoding, nearest-code quantization, a straight-through
/// decoder pass, and the quantized-autoencoder loss over normalized poses.
pub fn build_training_loss<F: Scalar>(
    model: &PartVqvae<F>,
    g: &mut Graph<F>,
    batch: &[&Pose],
) -> Result<Var, VqError> {
    let assignment = quantize_poses(model, batch)?;
    build_training_loss_with_indices(model, g, batch, &assignment)
}

/// The training objective with a frozen code assignment (quantization is
/// piecewise constant, so training gradients hold the assignment fixed).
pub fn build_training_loss_with_indices<F: Scalar>(
    model: &PartVqvae<F>,
    g: &mut Graph<F>,
    batch: &[&Pose],
    assignment: &[[usize; NUM_PARTS]],
) -> Result<Var, VqError> {
    if assignment.len() != batch.len() {
        return Err(VqError::PartCountMismatch {
            expected: batch.len(),
            got: assignment.len(),
        });
    }
    let pose_dim = model.skeleton.num_joints() * 3;
    let beta = model.config.commitment_beta;
    let zhats = model.encode_batch(g, batch)?;
    // gather the assigned rows inside the graph so codebook rows receive
    // gradients
    let mut codes = Vec::with_capacity(NUM_PARTS);
    for i in 0..NUM_PARTS {
        let indices: Vec<usize> = assignment.iter().map(|a| a[i]).collect();
        let table = g.param(&model.params, &format!("codebook.{i}"));
        codes.push(g.gather(table, &indices));
    }
    // straight-through input to the decoder
    let mut dec_parts = Vec::with_capacity(NUM_PARTS);
    for i in 0..NUM_PARTS {
        let gap = g.sub(codes[i], zhats[i]);
        let gap_sg = g.detach(gap);
        dec_parts.push(g.add(zhats[i], gap_sg));
    }
    let z = g.concat(&dec_parts, 1);
    let recon = model.decoder.forward(g, &model.params, z);
    let mut target = Array2::<f64>::zeros((batch.len(), pose_dim));
    for (row, pose) in batch.iter().enumerate() {
        let n = model.pose_norm.normalize(&pose.flatten());
        for (col, &v) in n.iter().enumerate() {
            target[(row, col)] = v;
        }
    }
    let target = g.leaf(target.mapv(F::cast_from).into_dyn());
    vqvae_loss(g, target, recon, &zhats, &codes, beta)
}

/// Stop-gradient values captured at one parameter point.
pub struct FrozenQuantization {
    pub assignment: Vec<[usize; NUM_PARTS]>,
    pub zhats: Vec<Array2<f64>>,
    pub codes: Vec<Array2<f64>>,
}

/// Captures the encoder outputs and selected codes for a batch.
pub fn freeze_quantization<F: Scalar>(
    model: &PartVqvae<F>,
    batch: &[&Pose],
) -> Result<FrozenQuantization, VqError> {
    let assignment = quantize_poses(model, batch)?;
    let mut g = Graph::<F>::new();
    let zhat_vars = model.encode_batch(&mut g, batch)?;
    let d = model.config.code_dim;
    let mut zhats = Vec::with_capacity(NUM_PARTS);
    let mut codes = Vec::with_capacity(NUM_PARTS);
    for i in 0..NUM_PARTS {
        let z = Array2::from_shape_fn((batch.len(), d), |(r, c)| {
            g.value(zhat_vars[i])[[r, c]].cast_f64()
        });
        let book = model.codebook(i);
        let q = Array2::from_shape_fn((batch.len(), d), |(r, c)| {
            book.entries[(assignment[r][i], c)]
        });
        zhats.push(z);
        codes.push(q);
    }
    Ok(FrozenQuantization {
        assignment,
        zhats,
        codes,
    })
}

/// The differentiable surrogate whose gradient the straight-through
/// training loss computes: every stop-gradient operand is replaced by the
/// constant captured in `frozen`. At the freeze point its value equals the
/// training loss, and because it is an ordinary smooth function its
/// autodiff gradients can be verified by finite differences.
pub fn build_surrogate_loss<F: Scalar>(
    model: &PartVqvae<F>,
    g: &mut Graph<F>,
    batch: &[&Pose],
    frozen: &FrozenQuantization,
) -> Result<Var, VqError> {
    if frozen.assignment.len() != batch.len() {
        return Err(VqError::PartCountMismatch {
            expected: batch.len(),
            got: frozen.assignment.len(),
        });
    }
    let pose_dim = model.skeleton.num_joints() * 3;
    let beta = model.config.commitment_beta;
    let b = batch.len() as f64;
    let inv_b = F::cast_from(1.0 / b);
    let zhats = model.encode_batch(g, batch)?;
    let to_leaf = |g: &mut Graph<F>, a: &Array2<f64>| g.leaf(a.mapv(F::cast_from).into_dyn());

    // decoder input: live encoder output plus the frozen gap constant
    let mut dec_parts = Vec::with_capacity(NUM_PARTS);
    for i in 0..NUM_PARTS {
        let gap = to_leaf(g, &(&frozen.codes[i] - &frozen.zhats[i]));
        dec_parts.push(g.add(zhats[i], gap));
    }
    let z = g.concat(&dec_parts, 1);
    let recon = model.decoder.forward(g, &model.params, z);
    let mut target = Array2::<f64>::zeros((batch.len(), pose_dim));
    for (row, pose) in batch.iter().enumerate() {
        let n = model.pose_norm.normalize(&pose.flatten());
        for (col, &v) in n.iter().enumerate() {
            target[(row, col)] = v;
        }
    }
    let target = to_leaf(g, &target);
    let diff = g.sub(target, recon);
    let sq = g.mul(diff, diff);
    let recon_term = g.sum_all(sq);
    let mut total = g.scale(recon_term, inv_b);
    for i in 0..NUM_PARTS {
        let indices: Vec<usize> = frozen.assignment.iter().map(|a| a[i]).collect();
        let table = g.param(&model.params, &format!("codebook.{i}"));
        let q = g.gather(table, &indices);
        // codebook term: frozen encoder output against live codes
        let zh_const = to_leaf(g, &frozen.zhats[i]);
        let d1 = g.sub(zh_const, q);
        let sq1 = g.mul(d1, d1);
        let t1 = g.sum_all(sq1);
        let t1 = g.scale(t1, inv_b);
        total = g.add(total, t1);
        // commitment term: frozen codes against live encoder output
        let q_const = to_leaf(g, &frozen.codes[i]);
        let d2 = g.sub(q_const, zhats[i]);
        let sq2 = g.mul(d2, d2);
        let t2 = g.sum_all(sq2);
        let t2 = g.scale(t2, F::cast_from(beta / b));
        total = g.add(total, t2);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
pub struct VqTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for VqTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch: 32,
            lr: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VqTrainStats {
    pub losses: Vec<f64>,
    pub final_joint_error: f64,
    pub codes_used: usize,
}

/// Trains the part VQ-VAE on a set of goal poses.
pub fn train_vqvae<F: Scalar>(
    poses: &[Pose],
    skeleton: &Skeleton,
    config: VqvaeConfig,
    train: VqTrainConfig,
) -> Result<(PartVqvae<F>, VqTrainStats), VqError> {
    if poses.is_empty() {
        return Err(VqError::EmptyDataset);
    }
    let mut init_rng = crate::rng::stream_rng(train.seed, "vqvae/init");
    let mut model = PartVqvae::<F>::new(config, skeleton, &mut init_rng);
    let pose_dim = skeleton.num_joints() * 3;
    let flats: Vec<Vec<f64>> = poses.iter().map(|p| p.flatten()).collect();
    let norm = Normalizer::fit(flats.iter().map(|f| f.as_slice()), pose_dim);
    norm.store(&mut model.params, "norm.pose");
    model.pose_norm = norm;

    let mut adam = Adam::new(AdamConfig::with_lr(train.lr));
    let mut batch_rng = crate::rng::stream_rng(train.seed, "vqvae/batch");
    let mut losses = Vec::with_capacity(train.steps);
    for _ in 0..train.steps {
        let batch: Vec<&Pose> = (0..train.batch)
            .map(|_| &poses[batch_rng.gen_range(0..poses.len())])
            .collect();
        let mut g = Graph::<F>::new();
        let loss = build_training_loss(&model, &mut g, &batch)?;
        losses.push(g.scalar_value(loss).cast_f64());
        g.backward(loss);
        adam.step(&mut model.params, &g.param_grads())?;
    }
    model.config.trained = true;
    let final_joint_error = model.mean_joint_error(poses)?;
    let mut used = std::collections::HashSet::new();
    for pose in poses {
        let idx = model.encode_pose(pose)?;
        for (part, &i) in idx.iter().enumerate() {
            used.insert((part, i));
        }
    }
    Ok((
        model,
        VqTrainStats {
            losses,
            final_joint_error,
            codes_used: used.len(),
        },
    ))
}

// --- autoregressive index prior ---

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub model_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ff_dim: usize,
    pub codebook_size: usize,
    pub occupancy_dim: usize,
    #[serde(default)]
    pub trained: bool,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            model_dim: 64,
            heads: 4,
            blocks: 2,
            ff_dim: 128,
            codebook_size: 64,
            occupancy_dim: 128,
            trained: false,
        }
    }
}

/// Number of condition tokens ahead of the index tokens: pooled occupancy
/// and the action label.
const PRIOR_COND_TOKENS: usize = 2;

pub struct IndexPrior<F: Scalar> {
    pub config: PriorConfig,
    pub params: ParamStore<F>,
    occ_proj: Linear,
    act_proj: Linear,
    tok_embed: Embedding,
    transformer: Transformer,
    heads: Vec<Linear>,
}

impl<F: Scalar> IndexPrior<F> {
    pub fn new(config: PriorConfig, rng: &mut impl Rng) -> Self {
        let mut ps = ParamStore::new();
        let dm = config.model_dim;
        let occ_proj = Linear::new(&mut ps, rng, "occ", config.occupancy_dim, dm);
        let act_proj = Linear::new(&mut ps, rng, "act", NUM_ACTIONS, dm);
        // rows: one per (part, index) pair plus a start token
        let tok_embed = Embedding::new(
            &mut ps,
            rng,
            "tok",
            NUM_PARTS * config.codebook_size + 1,
            dm,
        );
        let transformer = Transformer::new(&mut ps, rng, "tf", dm, config.heads, config.ff_dim, config.blocks);
        ps.insert(
            "pos.table",
            randn_init(rng, &[PRIOR_COND_TOKENS + NUM_PARTS, dm], 0.02),
            true,
        );
        let heads = (0..NUM_PARTS)
            .map(|i| Linear::new(&mut ps, rng, &format!("head{i}"), dm, config.codebook_size))
            .collect();
        Self {
            config,
            params: ps,
            occ_proj,
            act_proj,
            tok_embed,
            transformer,
            heads,
        }
    }

    fn start_row(&self) -> usize {
        NUM_PARTS * self.config.codebook_size
    }

    /// Per-part logits (batch, parts, K). Step i's logits depend only on
    /// indices before i thanks to the causal mask and shifted inputs.
    pub fn forward_logits(
        &self,
        g: &mut Graph<F>,
        occupancy: &Array2<f64>,
        actions: &Array2<f64>,
        indices: &[[usize; NUM_PARTS]],
    ) -> Var {
        let b = indices.len();
        let dm = self.config.model_dim;
        let occ_leaf = g.leaf(occupancy.mapv(F::cast_from).into_dyn());
        let act_leaf = g.leaf(actions.mapv(F::cast_from).into_dyn());
        let occ_tok = self.occ_proj.forward(g, &self.params, occ_leaf);
        let occ_tok = g.reshape(occ_tok, &[b, 1, dm]);
        let act_tok = self.act_proj.forward(g, &self.params, act_leaf);
        let act_tok = g.reshape(act_tok, &[b, 1, dm]);
        // shifted data tokens: [start, s_0 .. s_{L-2}]
        let mut flat = Vec::with_capacity(b * NUM_PARTS);
        for row in indices {
            flat.push(self.start_row());
            for part in 0..NUM_PARTS - 1 {
                flat.push(part * self.config.codebook_size + row[part]);
            }
        }
        let data = self.tok_embed.forward(g, &self.params, &flat);
        let data = g.reshape(data, &[b, NUM_PARTS, dm]);
        let seq = g.concat(&[occ_tok, act_tok, data], 1);
        let pos = g.param(&self.params, "pos.table");
        let pos = g.slice_axis(pos, 0, 0, PRIOR_COND_TOKENS + NUM_PARTS);
        let seq = g.add_bcast(seq, pos, 0);
        let mask = causal_mask::<F>(PRIOR_COND_TOKENS + NUM_PARTS);
        let hidden = self.transformer.forward(g, &self.params, seq, None, Some(&mask));
        let mut out = Vec::with_capacity(NUM_PARTS);
        for (part, head) in self.heads.iter().enumerate() {
            let h = g.slice_axis(hidden, 1, PRIOR_COND_TOKENS + part, 1);
            let h = g.reshape(h, &[b, dm]);
            let logits = head.forward(g, &self.params, h);
            out.push(g.reshape(logits, &[b, 1, self.config.codebook_size]));
        }
        g.concat(&out, 1)
    }

    /// Left-to-right sampling of part indices. Temperature 0 is greedy.
    pub fn sample_indices(
        &self,
        occupancy: &[f64],
        action: Action,
        temperature: f64,
        rng: &mut impl Rng,
    ) -> [usize; NUM_PARTS] {
        let occ = Array2::from_shape_vec((1, occupancy.len()), occupancy.to_vec()).unwrap();
        let act = Array2::from_shape_vec((1, NUM_ACTIONS), action.one_hot().to_vec()).unwrap();
        let mut indices = [[0usize; NUM_PARTS]];
        for part in 0..NUM_PARTS {
            let mut g = Graph::<F>::new();
            let logits = self.forward_logits(&mut g, &occ, &act, &indices);
            let row: Vec<f64> = (0..self.config.codebook_size)
                .map(|k| g.value(logits)[[0, part, k]].cast_f64())
                .collect();
            indices[0][part] = sample_categorical(&row, temperature, rng);
        }
        indices[0]
    }

    /// Per-step categorical distribution for a prefix (used in tests).
    pub fn step_distribution(
        &self,
        occupancy: &[f64],
        action: Action,
        prefix: &[usize; NUM_PARTS],
        step: usize,
    ) -> Vec<f64> {
        let occ = Array2::from_shape_vec((1, occupancy.len()), occupancy.to_vec()).unwrap();
        let act = Array2::from_shape_vec((1, NUM_ACTIONS), action.one_hot().to_vec()).unwrap();
        let mut g = Graph::<F>::new();
        let logits = self.forward_logits(&mut g, &occ, &act, &[*prefix]);
        let row: Vec<f64> = (0..self.config.codebook_size)
            .map(|k| g.value(logits)[[0, step, k]].cast_f64())
            .collect();
        softmax_vec(&row, 1.0)
    }

    pub fn save(&self, path: &Path) -> Result<(), VqError> {
        let config = serde_json::to_value(&self.config).map_err(NnError::from)?;
        crate::nn::save_checkpoint(path, &self.params, &config)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VqError> {
        let (params, config) = crate::nn::load_checkpoint::<F>(path)?;
        let config: PriorConfig = serde_json::from_value(config).map_err(NnError::from)?;
        let mut rng = crate::rng::stream_rng(0, "prior/load");
        let mut model = Self::new(config, &mut rng);
        for (name, entry) in params.iter() {
            model.params.set(name, entry.value.clone())?;
        }
        Ok(model)
    }
}

fn softmax_vec(logits: &[f64], temperature: f64) -> Vec<f64> {
    let t = temperature.max(1e-12);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| ((l - max) / t).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn sample_categorical(logits: &[f64], temperature: f64, rng: &mut impl Rng) -> usize {
    if temperature <= 0.0 {
        let mut best = 0;
        for (i, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = i;
            }
        }
        return best;
    }
    let probs = softmax_vec(logits, temperature);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u <= acc {
            return i;
        }
    }
    probs.len() - 1
}

/// One training example for the prior.
#[derive(Debug, Clone)]
pub struct PriorExample {
    pub occupancy: Vec<f64>,
    pub action: Action,
    pub indices: [usize; NUM_PARTS],
}

#[derive(Debug, Clone)]
pub struct PriorTrainStats {
    pub losses: Vec<f64>,
    pub top1_accuracy: f64,
}

/// Trains the index prior with cross-entropy on ground-truth indices.
pub fn train_prior<F: Scalar>(
    examples: &[PriorExample],
    config: PriorConfig,
    train: VqTrainConfig,
) -> Result<(IndexPrior<F>, PriorTrainStats), VqError> {
    if examples.is_empty() {
        return Err(VqError::EmptyDataset);
    }
    let mut init_rng = crate::rng::stream_rng(train.seed, "prior/init");
    let mut model = IndexPrior::<F>::new(config, &mut init_rng);
    let mut adam = Adam::new(AdamConfig::with_lr(train.lr));
    let mut batch_rng = crate::rng::stream_rng(train.seed, "prior/batch");
    let occ_dim = model.config.occupancy_dim;
    let mut losses = Vec::with_capacity(train.steps);
    for _ in 0..train.steps {
        let batch: Vec<&PriorExample> = (0..train.batch)
            .map(|_| &examples[batch_rng.gen_range(0..examples.len())])
            .collect();
        let b = batch.len();
        let mut occ = Array2::<f64>::zeros((b, occ_dim));
        let mut act = Array2::<f64>::zeros((b, NUM_ACTIONS));
        let mut idx = Vec::with_capacity(b);
        let mut targets = Vec::with_capacity(b * NUM_PARTS);
        for (row, ex) in batch.iter().enumerate() {
            for (j, &v) in ex.occupancy.iter().enumerate() {
                occ[(row, j)] = v;
            }
            for (j, &v) in ex.action.one_hot().iter().enumerate() {
                act[(row, j)] = v;
            }
            idx.push(ex.indices);
            targets.extend_from_slice(&ex.indices);
        }
        let mut g = Graph::<F>::new();
        let logits = model.forward_logits(&mut g, &occ, &act, &idx);
        let flat = g.reshape(logits, &[b * NUM_PARTS, model.config.codebook_size]);
        let loss = g.cross_entropy(flat, &targets);
        losses.push(g.scalar_value(loss).cast_f64());
        g.backward(loss);
        adam.step(&mut model.params, &g.param_grads())?;
    }
    model.config.trained = true;
    // top-1 accuracy over the training examples
    let mut correct = 0usize;
    let mut total = 0usize;
    for ex in examples {
        let occ = Array2::from_shape_vec((1, occ_dim), ex.occupancy.clone()).unwrap();
        let act = Array2::from_shape_vec((1, NUM_ACTIONS), ex.action.one_hot().to_vec()).unwrap();
        let mut g = Graph::<F>::new();
        let logits = model.forward_logits(&mut g, &occ, &act, &[ex.indices]);
        for part in 0..NUM_PARTS {
            let mut best = 0;
            for k in 0..model.config.codebook_size {
                if g.value(logits)[[0, part, k]] > g.value(logits)[[0, part, best]] {
                    best = k;
                }
            }
            if best == ex.indices[part] {
                correct += 1;
            }
            total += 1;
        }
    }
    Ok((
        model,
        PriorTrainStats {
            losses,
            top1_accuracy: correct as f64 / total as f64,
        },
    ))
}

/// Samples a goal pose: draws part indices from the prior and decodes them.
pub fn sample_goal_pose<F: Scalar>(
    vqvae: &PartVqvae<F>,
    prior: &IndexPrior<F>,
    occupancy: &[f64],
    action: Action,
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<Pose, VqError> {
    let indices = prior.sample_indices(occupancy, action, temperature, rng);
    vqvae.decode_indices(&indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    #[test]
    fn quantize_exact_entry_and_simple_case() {
        let mut entries = Array2::zeros((8, 2));
        for i in 0..8 {
            entries[(i, 0)] = i as f64;
            entries[(i, 1)] = -(i as f64);
        }
        let book = Codebook { entries };
        let (idx, code) = book.quantize(&[7.0, -7.0]).unwrap();
        assert_eq!(idx, 7);
        assert_eq!(code, vec![7.0, -7.0]);

        let book = Codebook {
            entries: arr2(&[[0.0, 0.0], [1.0, 1.0]]),
        };
        let (idx, _) = book.quantize(&[0.2, 0.1]).unwrap();
        assert_eq!(idx, 0);
    }

    #[test]
    fn quantize_matches_exhaustive_scan() {
        let mut rng = crate::rng::stream_rng(81, "vq/scan");
        let entries = Array2::from_shape_fn((64, 8), |_| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let book = Codebook {
            entries: entries.clone(),
        };
        for _ in 0..1000 {
            let q: Vec<f64> = (0..8)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let (idx, _) = book.quantize(&q).unwrap();
            // independent exhaustive scan
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for i in 0..64 {
                let d: f64 = (0..8).map(|j| (entries[(i, j)] - q[j]).powi(2)).sum();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            assert_eq!(idx, best);
        }
    }

    #[test]
    fn quantize_errors() {
        let empty = Codebook {
            entries: Array2::zeros((0, 4)),
        };
        assert!(matches!(empty.quantize(&[0.0; 4]), Err(VqError::EmptyCodebook)));
        let book = Codebook {
            entries: Array2::zeros((2, 4)),
        };
        assert!(matches!(
            book.quantize(&[0.0; 3]),
            Err(VqError::DimMismatch { .. })
        ));
    }

    #[test]
    fn vqvae_loss_hand_examples() {
        // perfect reconstruction and matching codes: loss 0
        let mut g = Graph::<f64>::new();
        let pose = g.leaf(arr2(&[[0.5, -0.5]]).into_dyn());
        let recon = g.leaf(arr2(&[[0.5, -0.5]]).into_dyn());
        let zh = g.leaf(arr2(&[[1.0, 2.0]]).into_dyn());
        let q = g.leaf(arr2(&[[1.0, 2.0]]).into_dyn());
        let loss = vqvae_loss(&mut g, pose, recon, &[zh], &[q], 0.25).unwrap();
        assert_abs_diff_eq!(g.scalar_value(loss), 0.0, epsilon = 1e-15);

        // pose - recon = (1, 0), codes equal z_hats: loss 1
        let mut g = Graph::<f64>::new();
        let pose = g.leaf(arr2(&[[1.0, 0.0]]).into_dyn());
        let recon = g.leaf(arr2(&[[0.0, 0.0]]).into_dyn());
        let zh = g.leaf(arr2(&[[1.0]]).into_dyn());
        let q = g.leaf(arr2(&[[1.0]]).into_dyn());
        let loss = vqvae_loss(&mut g, pose, recon, &[zh], &[q], 0.25).unwrap();
        assert_abs_diff_eq!(g.scalar_value(loss), 1.0, epsilon = 1e-15);

        // recon error 0.1, per-part gap 0.04, beta 0.25, L=5:
        // 0.1 + 5·0.04 + 0.25·5·0.04 = 0.35
        let mut g = Graph::<f64>::new();
        let pose = g.leaf(arr2(&[[0.1f64.sqrt(), 0.0]]).into_dyn());
        let recon = g.leaf(arr2(&[[0.0, 0.0]]).into_dyn());
        let mut zhats = Vec::new();
        let mut codes = Vec::new();
        for _ in 0..5 {
            zhats.push(g.leaf(arr2(&[[0.2]]).into_dyn()));
            codes.push(g.leaf(arr2(&[[0.0]]).into_dyn()));
        }
        let loss = vqvae_loss(&mut g, pose, recon, &zhats, &codes, 0.25).unwrap();
        assert_abs_diff_eq!(g.scalar_value(loss), 0.35, epsilon = 1e-12);
    }

    #[test]
    fn stop_gradient_semantics() {
        // Codebook gradient comes only from the codebook term; encoder
        // (z_hat) gradient only from the commitment term (plus recon path,
        // absent here because recon is a leaf).
        let beta = 0.25;
        let build = |g: &mut Graph<f64>, zh: Var, q: Var, include_commit: bool, include_code: bool| {
            let pose = g.leaf(arr2(&[[0.0]]).into_dyn());
            let recon = g.leaf(arr2(&[[0.0]]).into_dyn());
            let diff = g.sub(pose, recon);
            let sq = g.mul(diff, diff);
            let mut total = g.sum_all(sq);
            if include_code {
                let zh_sg = g.detach(zh);
                let d = g.sub(zh_sg, q);
                let s = g.mul(d, d);
                let t = g.sum_all(s);
                total = g.add(total, t);
            }
            if include_commit {
                let q_sg = g.detach(q);
                let d = g.sub(q_sg, zh);
                let s = g.mul(d, d);
                let t = g.sum_all(s);
                let t = g.scale(t, beta);
                total = g.add(total, t);
            }
            total
        };
        // full loss
        let mut g = Graph::<f64>::new();
        let zh = g.leaf_grad(arr2(&[[0.7, -0.3]]).into_dyn());
        let q = g.leaf_grad(arr2(&[[0.1, 0.4]]).into_dyn());
        let loss = build(&mut g, zh, q, true, true);
        g.backward(loss);
        let q_grad_full = g.grad(q).unwrap().clone();
        let zh_grad_full = g.grad(zh).unwrap().clone();

        // without the commitment term: codebook gradient identical
        let mut g = Graph::<f64>::new();
        let zh = g.leaf_grad(arr2(&[[0.7, -0.3]]).into_dyn());
        let q = g.leaf_grad(arr2(&[[0.1, 0.4]]).into_dyn());
        let loss = build(&mut g, zh, q, false, true);
        g.backward(loss);
        let q_grad_no_commit = g.grad(q).unwrap().clone();
        for (a, b) in q_grad_full.iter().zip(q_grad_no_commit.iter()) {
            assert!((a - b).abs() < 1e-15);
        }

        // without the codebook term: encoder gradient identical
        let mut g = Graph::<f64>::new();
        let zh = g.leaf_grad(arr2(&[[0.7, -0.3]]).into_dyn());
        let q = g.leaf_grad(arr2(&[[0.1, 0.4]]).into_dyn());
        let loss = build(&mut g, zh, q, true, false);
        g.backward(loss);
        let zh_grad_no_code = g.grad(zh).unwrap().clone();
        for (a, b) in zh_grad_full.iter().zip(zh_grad_no_code.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn toy_pose(seed: f64) -> Pose {
        let joints: Vec<[f64; 3]> = (0..15)
            .map(|j| {
                [
                    0.1 * (seed + j as f64).sin(),
                    0.9 + 0.05 * (seed * 2.0 + j as f64).cos(),
                    0.1 * (seed * 3.0 + j as f64).sin(),
                ]
            })
            .collect();
        Pose::new(joints).unwrap()
    }

    fn small_cfg() -> VqvaeConfig {
        VqvaeConfig {
            codebook_size: 16,
            code_dim: 8,
            enc_hidden: 32,
            dec_hidden: 64,
            ..Default::default()
        }
    }

    #[test]
    fn single_pose_memorization() {
        let skel = Skeleton::default15();
        let poses = vec![toy_pose(1.0)];
        let (model, stats) = train_vqvae::<f64>(
            &poses,
            &skel,
            small_cfg(),
            VqTrainConfig {
                steps: 500,
                batch: 4,
                lr: 3e-3,
                seed: 1,
            },
        )
        .unwrap();
        assert!(
            stats.final_joint_error < 1e-3,
            "error {}",
            stats.final_joint_error
        );
        // determinism of encoding
        let a = model.encode_pose(&poses[0]).unwrap();
        let b = model.encode_pose(&poses[0]).unwrap();
        assert_eq!(a, b);
        // loss decreases over the first 100 steps after smoothing
        let smooth: Vec<f64> = stats
            .losses
            .windows(10)
            .map(|w| w.iter().sum::<f64>() / 10.0)
            .collect();
        assert!(smooth[90] < smooth[0]);
    }

    #[test]
    fn two_cluster_dataset_uses_multiple_codes() {
        let skel = Skeleton::default15();
        let mut poses = Vec::new();
        for i in 0..6 {
            poses.push(toy_pose(i as f64 * 0.01)); // cluster A
            poses.push(toy_pose(40.0 + i as f64 * 0.01)); // cluster B
        }
        let (model, stats) = train_vqvae::<f64>(
            &poses,
            &skel,
            small_cfg(),
            VqTrainConfig {
                steps: 700,
                batch: 8,
                lr: 3e-3,
                seed: 2,
            },
        )
        .unwrap();
        assert!(stats.codes_used >= 2, "codes used {}", stats.codes_used);
        // encodings stay within range
        let mut rng = crate::rng::stream_rng(82, "vq/range");
        for _ in 0..50 {
            let p = toy_pose(rng.gen_range(0.0..50.0));
            let idx = model.encode_pose(&p).unwrap();
            assert!(idx.iter().all(|&i| i < model.config.codebook_size));
        }
        // reconstruction error via encode/decode matches the train metric
        let err = model.mean_joint_error(&poses).unwrap();
        assert!(err <= stats.final_joint_error + 1e-9);
    }

    #[test]
    fn codebooks_have_distinct_entries_after_training() {
        let skel = Skeleton::default15();
        let poses = vec![toy_pose(0.0), toy_pose(5.0)];
        let (model, _) = train_vqvae::<f64>(
            &poses,
            &skel,
            small_cfg(),
            VqTrainConfig {
                steps: 100,
                batch: 4,
                lr: 1e-3,
                seed: 3,
            },
        )
        .unwrap();
        for part in 0..NUM_PARTS {
            assert!(model.codebook(part).entries_distinct());
        }
    }

    #[test]
    fn untrained_model_rejects_encode() {
        let skel = Skeleton::default15();
        let mut rng = crate::rng::stream_rng(83, "vq/untrained");
        let model = PartVqvae::<f64>::new(small_cfg(), &skel, &mut rng);
        assert!(matches!(
            model.encode_pose(&toy_pose(0.0)),
            Err(VqError::Untrained)
        ));
    }

    #[test]
    fn empty_dataset_is_error() {
        let skel = Skeleton::default15();
        assert!(matches!(
            train_vqvae::<f64>(&[], &skel, small_cfg(), VqTrainConfig::default()),
            Err(VqError::EmptyDataset)
        ));
    }

    fn tiny_prior_cfg() -> PriorConfig {
        PriorConfig {
            model_dim: 32,
            heads: 2,
            blocks: 1,
            ff_dim: 64,
            codebook_size: 16,
            occupancy_dim: 8,
            trained: false,
        }
    }

    #[test]
    fn prior_causality_is_exact() {
        let mut rng = crate::rng::stream_rng(84, "prior/causal");
        let model = IndexPrior::<f64>::new(tiny_prior_cfg(), &mut rng);
        let occ = vec![0.5; 8];
        let base = [3usize, 7, 1, 0, 9];
        let mut perturbed = base;
        perturbed[2] = 12; // change s_2
        for step in 0..=2 {
            // logits at steps <= 2 must be bitwise identical
            let a = model.step_distribution(&occ, Action::Sit, &base, step);
            let b = model.step_distribution(&occ, Action::Sit, &perturbed, step);
            assert_eq!(a, b, "step {step} distribution changed");
        }
        // and a later step should generally change
        let a = model.step_distribution(&occ, Action::Sit, &base, 3);
        let b = model.step_distribution(&occ, Action::Sit, &perturbed, 3);
        assert_ne!(a, b);
    }

    #[test]
    fn prior_distributions_normalize_and_greedy_is_deterministic() {
        let mut rng = crate::rng::stream_rng(85, "prior/greedy");
        let model = IndexPrior::<f64>::new(tiny_prior_cfg(), &mut rng);
        let occ = vec![0.0; 8];
        let dist = model.step_distribution(&occ, Action::Lie, &[0; 5], 0);
        let sum: f64 = dist.iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
        let a = model.sample_indices(&occ, Action::Lie, 0.0, &mut rng);
        let b = model.sample_indices(&occ, Action::Lie, 0.0, &mut rng);
        assert_eq!(a, b);
    }

    #[test]
    fn prior_learns_two_pose_frequencies() {
        // Two index patterns with equal training frequency; sampled
        // frequencies should match within 5 percentage points.
        let occ = vec![0.25; 8];
        let ex_a = PriorExample {
            occupancy: occ.clone(),
            action: Action::Sit,
            indices: [1, 2, 3, 4, 5],
        };
        let ex_b = PriorExample {
            occupancy: occ.clone(),
            action: Action::Sit,
            indices: [9, 8, 7, 6, 5],
        };
        let (model, stats) = train_prior::<f64>(
            &[ex_a.clone(), ex_b.clone()],
            tiny_prior_cfg(),
            VqTrainConfig {
                steps: 600,
                batch: 8,
                lr: 3e-3,
                seed: 4,
            },
        )
        .unwrap();
        assert!(stats.top1_accuracy >= 0.9, "top1 {}", stats.top1_accuracy);
        let mut rng = crate::rng::stream_rng(86, "prior/freq");
        let mut count_a = 0usize;
        let mut count_b = 0usize;
        let n = 2000;
        for _ in 0..n {
            let s = model.sample_indices(&occ, Action::Sit, 1.0, &mut rng);
            if s == ex_a.indices {
                count_a += 1;
            } else if s == ex_b.indices {
                count_b += 1;
            }
        }
        let fa = count_a as f64 / n as f64;
        let fb = count_b as f64 / n as f64;
        assert!((fa - 0.5).abs() < 0.05, "freq a = {fa}");
        assert!((fb - 0.5).abs() < 0.05, "freq b = {fb}");
    }
}
