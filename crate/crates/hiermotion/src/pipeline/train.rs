//! Training entry points for the six sub-models and the trained-model
//! bundle they assemble into.

use super::extract::TrainingSet;
use super::features::{GAMMA_DIM, GOAL_TOKEN_DIM, MILESTONE_DIM, START_TOKEN_DIM, TRAJ_LEN};
use super::PipelineError;
use crate::diffusion::{
    make_schedule, train_step, ConditionSet, DenoiserConfig, DenoiserTransformer,
    DiffusionSchedule,
};
use crate::motion::Pose;
use crate::nn::{Adam, AdamConfig, Normalizer, Scalar};
use crate::sensing::{SensorConfig, OBJECT_FEATURE_DIM};
use crate::synth::Dataset;
use crate::vqvae::{
    train_prior, train_vqvae, IndexPrior, PartVqvae, PriorConfig, PriorExample, VqTrainConfig,
    VqvaeConfig,
};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Transformer widths shared by the four denoisers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    pub model_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ff_dim: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            model_dim: 128,
            heads: 4,
            blocks: 4,
            ff_dim: 512,
        }
    }
}

/// Shared pipeline hyperparameters persisted next to the checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineParams {
    pub sensor: SensorConfig,
    pub t_max: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub n_max: usize,
    pub dims: ModelDims,
    pub vqvae: VqvaeConfig,
    pub prior: PriorConfig,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            sensor: SensorConfig::default(),
            t_max: 100,
            // β_end above the textbook 0.02 so ᾱ_T < 0.05 holds at T = 100
            beta_start: 1e-4,
            beta_end: 0.07,
            n_max: 12,
            dims: ModelDims::default(),
            vqvae: VqvaeConfig::default(),
            prior: PriorConfig::default(),
        }
    }
}

impl PipelineParams {
    pub fn schedule(&self) -> Result<DiffusionSchedule, PipelineError> {
        Ok(make_schedule(self.t_max, self.beta_start, self.beta_end)?)
    }

    fn milestone_config(&self) -> DenoiserConfig {
        DenoiserConfig {
            data_dim: MILESTONE_DIM,
            model_dim: self.dims.model_dim,
            heads: self.dims.heads,
            blocks: self.dims.blocks,
            ff_dim: self.dims.ff_dim,
            cond_tokens: vec![
                ("I_s".into(), OBJECT_FEATURE_DIM),
                ("I_g".into(), OBJECT_FEATURE_DIM),
                ("O_s".into(), self.sensor.n_spheres),
                ("O_g".into(), self.sensor.n_spheres),
                ("g".into(), GOAL_TOKEN_DIM),
                ("s".into(), START_TOKEN_DIM),
            ],
            per_frame_dim: None,
            max_len: self.n_max,
            n_max: Some(self.n_max),
        }
    }

    fn pose_config(&self) -> DenoiserConfig {
        DenoiserConfig {
            data_dim: 45,
            model_dim: self.dims.model_dim,
            heads: self.dims.heads,
            blocks: self.dims.blocks,
            ff_dim: self.dims.ff_dim,
            cond_tokens: vec![("theta_s".into(), 45), ("theta_g".into(), 45)],
            per_frame_dim: Some(GAMMA_DIM),
            max_len: self.n_max,
            n_max: None,
        }
    }

    fn trajectory_config(&self) -> DenoiserConfig {
        DenoiserConfig {
            data_dim: MILESTONE_DIM,
            model_dim: self.dims.model_dim,
            heads: self.dims.heads,
            blocks: self.dims.blocks,
            ff_dim: self.dims.ff_dim,
            cond_tokens: vec![
                ("I_a".into(), OBJECT_FEATURE_DIM),
                ("I_b".into(), OBJECT_FEATURE_DIM),
                ("O_a".into(), self.sensor.n_spheres),
                ("O_b".into(), self.sensor.n_spheres),
                ("m_a".into(), MILESTONE_DIM),
                ("m_b".into(), MILESTONE_DIM),
                ("t_ab".into(), 4),
            ],
            per_frame_dim: None,
            max_len: TRAJ_LEN,
            n_max: None,
        }
    }

    fn infill_config(&self) -> DenoiserConfig {
        DenoiserConfig {
            data_dim: 45,
            model_dim: self.dims.model_dim,
            heads: self.dims.heads,
            blocks: self.dims.blocks,
            ff_dim: self.dims.ff_dim,
            cond_tokens: vec![("pose_a".into(), 45), ("pose_b".into(), 45)],
            per_frame_dim: Some(GAMMA_DIM),
            max_len: TRAJ_LEN,
            n_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch: 32,
            lr: 1e-4,
            seed: 0,
        }
    }
}

/// Per-step losses of a training run.
#[derive(Debug, Clone)]
pub struct TrainCurve(pub Vec<(usize, f64)>);

impl TrainCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (i, l) in &self.0 {
            s.push_str(&format!("{i},{l}\n"));
        }
        s
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.0.last().map(|(_, l)| *l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubModel {
    Vqvae,
    Prior,
    Milestones,
    MilestonePoses,
    Trajectory,
    Infill,
}

impl SubModel {
    pub const ALL: [SubModel; 6] = [
        SubModel::Vqvae,
        SubModel::Prior,
        SubModel::Milestones,
        SubModel::MilestonePoses,
        SubModel::Trajectory,
        SubModel::Infill,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SubModel::Vqvae => "vqvae",
            SubModel::Prior => "prior",
            SubModel::Milestones => "milestones",
            SubModel::MilestonePoses => "milestone-poses",
            SubModel::Trajectory => "trajectory",
            SubModel::Infill => "infill",
        }
    }

    pub fn parse(s: &str) -> Result<Self, PipelineError> {
        Self::ALL
            .iter()
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| PipelineError::UnknownSubModel(s.to_string()))
    }

    pub fn checkpoint_name(&self) -> String {
        format!("{}.ckpt", self.name())
    }
}

fn fit_cond_normalizers(
    sets: &[&ConditionSet],
    spec: &[(String, usize)],
) -> Vec<Normalizer> {
    spec.iter()
        .map(|(name, dim)| {
            let rows: Vec<&[f64]> = sets.iter().filter_map(|s| s.token(name)).collect();
            Normalizer::fit(rows, *dim)
        })
        .collect()
}

fn fit_pf_normalizer(sets: &[&ConditionSet], dim: usize) -> Normalizer {
    let rows: Vec<&[f64]> = sets
        .iter()
        .flat_map(|s| s.per_frame.iter().flatten().map(|r| r.as_slice()))
        .collect();
    Normalizer::fit(rows, dim)
}

fn fit_x0_normalizer(arrays: &[&Array2<f64>], dim: usize) -> Normalizer {
    let rows: Vec<&[f64]> = arrays
        .iter()
        .flat_map(|a| a.rows().into_iter().map(|r| r.to_slice().unwrap()))
        .collect();
    Normalizer::fit(rows, dim)
}

/// Draws a batch of same-length items grouped by milestone count.
fn grouped_batch<'a>(
    groups: &'a [(usize, Vec<usize>)],
    batch: usize,
    rng: &mut impl Rng,
) -> (usize, Vec<usize>, &'a [usize]) {
    let total: usize = groups.iter().map(|(_, v)| v.len()).sum();
    let mut pick = rng.gen_range(0..total);
    let mut chosen = &groups[0];
    for g in groups {
        if pick < g.1.len() {
            chosen = g;
            break;
        }
        pick -= g.1.len();
    }
    let idxs: Vec<usize> = (0..batch)
        .map(|_| chosen.1[rng.gen_range(0..chosen.1.len())])
        .collect();
    (chosen.0, idxs, &chosen.1)
}

/// Trains the milestone-point model (with its length head).
pub fn train_milestones_model<F: Scalar>(
    ts: &TrainingSet,
    params: &PipelineParams,
    train: &TrainConfig,
) -> Result<(DenoiserTransformer<F>, TrainCurve), PipelineError> {
    let sched = params.schedule()?;
    let cfg = params.milestone_config();
    let mut rng = crate::rng::stream_rng(train.seed, "train/milestones/init");
    let mut model = DenoiserTransformer::<F>::new(cfg.clone(), &mut rng)?;
    let conds: Vec<&ConditionSet> = ts.items.iter().map(|i| &i.milestone_cond).collect();
    let x0s: Vec<&Array2<f64>> = ts.items.iter().map(|i| &i.milestone_x0).collect();
    model.set_normalizers(
        fit_x0_normalizer(&x0s, MILESTONE_DIM),
        fit_cond_normalizers(&conds, &cfg.cond_tokens),
        None,
    );
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, item) in ts.items.iter().enumerate() {
        groups.entry(item.n).or_default().push(i);
    }
    let groups: Vec<(usize, Vec<usize>)> = groups.into_iter().collect();
    let mut adam = Adam::new(AdamConfig::with_lr(train.lr));
    let mut batch_rng = crate::rng::stream_rng(train.seed, "train/milestones/batch");
    let mut curve = Vec::with_capacity(train.steps);
    for step in 0..train.steps {
        let (n, idxs, _) = grouped_batch(&groups, train.batch, &mut batch_rng);
        let x0: Vec<Array2<f64>> = idxs.iter().map(|&i| ts.items[i].milestone_x0.clone()).collect();
        let conds: Vec<&ConditionSet> = idxs.iter().map(|&i| &ts.items[i].milestone_cond).collect();
        let lens: Vec<usize> = vec![n; idxs.len()];
        let loss = train_step(
            &mut model,
            &mut adam,
            &x0,
            &conds,
            Some(&lens),
            &sched,
            &mut batch_rng,
        )?;
        curve.push((step, loss));
    }
    Ok((model, TrainCurve(curve)))
}

/// Trains the milestone-pose model.
pub fn train_pose_model<F: Scalar>(
    ts: &TrainingSet,
    params: &PipelineParams,
    train: &TrainConfig,
) -> Result<(DenoiserTransformer<F>, TrainCurve), PipelineError> {
    let sched = params.schedule()?;
    let cfg = params.pose_config();
    let mut rng = crate::rng::stream_rng(train.seed, "train/poses/init");
    let mut model = DenoiserTransformer::<F>::new(cfg.clone(), &mut rng)?;
    let conds: Vec<&ConditionSet> = ts.items.iter().map(|i| &i.pose_cond).collect();
    let x0s: Vec<&Array2<f64>> = ts.items.iter().map(|i| &i.pose_x0).collect();
    model.set_normalizers(
        fit_x0_normalizer(&x0s, 45),
        fit_cond_normalizers(&conds, &cfg.cond_tokens),
        Some(fit_pf_normalizer(&conds, GAMMA_DIM)),
    );
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, item) in ts.items.iter().enumerate() {
        groups.entry(item.n).or_default().push(i);
    }
    let groups: Vec<(usize, Vec<usize>)> = groups.into_iter().collect();
    let mut adam = Adam::new(AdamConfig::with_lr(train.lr));
    let mut batch_rng = crate::rng::stream_rng(train.seed, "train/poses/batch");
    let mut curve = Vec::with_capacity(train.steps);
    for step in 0..train.steps {
        let (_, idxs, _) = grouped_batch(&groups, train.batch, &mut batch_rng);
        let x0: Vec<Array2<f64>> = idxs.iter().map(|&i| ts.items[i].pose_x0.clone()).collect();
        let conds: Vec<&ConditionSet> = idxs.iter().map(|&i| &ts.items[i].pose_cond).collect();
        let loss = train_step(&mut model, &mut adam, &x0, &conds, None, &sched, &mut batch_rng)?;
        curve.push((step, loss));
    }
    Ok((model, TrainCurve(curve)))
}

fn train_segment_model<F: Scalar>(
    ts: &TrainingSet,
    cfg: DenoiserConfig,
    sched: &DiffusionSchedule,
    train: &TrainConfig,
    stream: &str,
    pick: impl Fn(&super::extract::PreparedSegment) -> (&ConditionSet, &Array2<f64>),
    pf_dim: Option<usize>,
) -> Result<(DenoiserTransformer<F>, TrainCurve), PipelineError> {
    let mut rng = crate::rng::stream_rng(train.seed, &format!("train/{stream}/init"));
    let mut model = DenoiserTransformer::<F>::new(cfg.clone(), &mut rng)?;
    let segments: Vec<(&ConditionSet, &Array2<f64>)> = ts
        .items
        .iter()
        .flat_map(|i| i.segments.iter().map(&pick))
        .collect();
    if segments.is_empty() {
        return Err(PipelineError::EmptyTrainingSet);
    }
    let conds: Vec<&ConditionSet> = segments.iter().map(|(c, _)| *c).collect();
    let x0s: Vec<&Array2<f64>> = segments.iter().map(|(_, x)| *x).collect();
    model.set_normalizers(
        fit_x0_normalizer(&x0s, cfg.data_dim),
        fit_cond_normalizers(&conds, &cfg.cond_tokens),
        pf_dim.map(|d| fit_pf_normalizer(&conds, d)),
    );
    let mut adam = Adam::new(AdamConfig::with_lr(train.lr));
    let mut batch_rng = crate::rng::stream_rng(train.seed, &format!("train/{stream}/batch"));
    let mut curve = Vec::with_capacity(train.steps);
    for step in 0..train.steps {
        let idxs: Vec<usize> = (0..train.batch)
            .map(|_| batch_rng.gen_range(0..segments.len()))
            .collect();
        let x0: Vec<Array2<f64>> = idxs.iter().map(|&i| segments[i].1.clone()).collect();
        let conds: Vec<&ConditionSet> = idxs.iter().map(|&i| segments[i].0).collect();
        let loss = train_step(&mut model, &mut adam, &x0, &conds, None, sched, &mut batch_rng)?;
        curve.push((step, loss));
    }
    Ok((model, TrainCurve(curve)))
}

pub fn train_trajectory_model<F: Scalar>(
    ts: &TrainingSet,
    params: &PipelineParams,
    train: &TrainConfig,
) -> Result<(DenoiserTransformer<F>, TrainCurve), PipelineError> {
    train_segment_model(
        ts,
        params.trajectory_config(),
        &params.schedule()?,
        train,
        "trajectory",
        |s| (&s.traj_cond, &s.traj_x0),
        None,
    )
}

pub fn train_infill_model<F: Scalar>(
    ts: &TrainingSet,
    params: &PipelineParams,
    train: &TrainConfig,
) -> Result<(DenoiserTransformer<F>, TrainCurve), PipelineError> {
    train_segment_model(
        ts,
        params.infill_config(),
        &params.schedule()?,
        train,
        "infill",
        |s| (&s.infill_cond, &s.infill_x0),
        Some(GAMMA_DIM),
    )
}

/// Goal poses of the training set, for the VQ-VAE.
pub fn goal_poses(ts: &TrainingSet) -> Vec<Pose> {
    ts.items.iter().map(|i| i.goal_pose.clone()).collect()
}

pub fn train_vqvae_model<F: Scalar>(
    ts: &TrainingSet,
    params: &PipelineParams,
    train: &TrainConfig,
) -> Result<(PartVqvae<F>, TrainCurve), PipelineError> {
    let poses = goal_poses(ts);
    let (model, stats) = train_vqvae::<F>(
        &poses,
        &crate::motion::Skeleton::default15(),
        params.vqvae.clone(),
        VqTrainConfig {
            steps: train.steps,
            batch: train.batch,
            lr: train.lr,
            seed: train.seed,
        },
    )?;
    let curve = TrainCurve(stats.losses.iter().copied().enumerate().collect());
    Ok((model, curve))
}

pub fn train_prior_model<F: Scalar>(
    ts: &TrainingSet,
    vqvae: &PartVqvae<F>,
    params: &PipelineParams,
    train: &TrainConfig,
) -> Result<(IndexPrior<F>, TrainCurve), PipelineError> {
    let examples: Vec<PriorExample> = ts
        .items
        .iter()
        .map(|item| {
            Ok(PriorExample {
                occupancy: item.goal_occupancy.clone(),
                action: item.goal_action,
                indices: vqvae.encode_pose(&item.goal_pose)?,
            })
        })
        .collect::<Result<_, PipelineError>>()?;
    let mut cfg = params.prior.clone();
    cfg.codebook_size = params.vqvae.codebook_size;
    cfg.occupancy_dim = params.sensor.n_spheres;
    let (model, stats) = train_prior::<F>(
        &examples,
        cfg,
        VqTrainConfig {
            steps: train.steps,
            batch: train.batch,
            lr: train.lr,
            seed: train.seed,
        },
    )?;
    let curve = TrainCurve(stats.losses.iter().copied().enumerate().collect());
    Ok((model, curve))
}

/// All six trained sub-models plus the shared parameters.
pub struct ModelBundle<F: Scalar> {
    pub vqvae: PartVqvae<F>,
    pub prior: IndexPrior<F>,
    pub milestones: DenoiserTransformer<F>,
    pub milestone_poses: DenoiserTransformer<F>,
    pub trajectory: DenoiserTransformer<F>,
    pub infill: DenoiserTransformer<F>,
    pub params: PipelineParams,
    pub schedule: DiffusionSchedule,
}

impl<F: Scalar> ModelBundle<F> {
    /// Fresh random-weight bundle (an untrained pipeline).
    pub fn untrained(params: PipelineParams, seed: u64) -> Result<Self, PipelineError> {
        let schedule = params.schedule()?;
        let mut rng = crate::rng::stream_rng(seed, "bundle/untrained");
        let mut prior_cfg = params.prior.clone();
        prior_cfg.codebook_size = params.vqvae.codebook_size;
        prior_cfg.occupancy_dim = params.sensor.n_spheres;
        let mut vq_cfg = params.vqvae.clone();
        vq_cfg.trained = true; // allow encode/decode with random weights
        Ok(Self {
            vqvae: PartVqvae::new(vq_cfg, &crate::motion::Skeleton::default15(), &mut rng),
            prior: IndexPrior::new(prior_cfg, &mut rng),
            milestones: DenoiserTransformer::new(params.milestone_config(), &mut rng)?,
            milestone_poses: DenoiserTransformer::new(params.pose_config(), &mut rng)?,
            trajectory: DenoiserTransformer::new(params.trajectory_config(), &mut rng)?,
            infill: DenoiserTransformer::new(params.infill_config(), &mut rng)?,
            schedule,
            params,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir)?;
        self.vqvae.save(&dir.join(SubModel::Vqvae.checkpoint_name()))?;
        self.prior.save(&dir.join(SubModel::Prior.checkpoint_name()))?;
        self.milestones
            .save(&dir.join(SubModel::Milestones.checkpoint_name()))?;
        self.milestone_poses
            .save(&dir.join(SubModel::MilestonePoses.checkpoint_name()))?;
        self.trajectory
            .save(&dir.join(SubModel::Trajectory.checkpoint_name()))?;
        self.infill.save(&dir.join(SubModel::Infill.checkpoint_name())) ?;
        std::fs::write(
            dir.join("pipeline.json"),
            serde_json::to_vec_pretty(&self.params)?,
        )?;
        Ok(())
    }

    /// Loads a bundle, naming every missing checkpoint.
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let missing: Vec<String> = SubModel::ALL
            .iter()
            .map(|m| m.checkpoint_name())
            .chain(std::iter::once("pipeline.json".to_string()))
            .filter(|name| !dir.join(name).exists())
            .collect();
        if !missing.is_empty() {
            return Err(PipelineError::MissingCheckpoint(missing.join(", ")));
        }
        let params: PipelineParams =
            serde_json::from_slice(&std::fs::read(dir.join("pipeline.json"))?)?;
        let schedule = params.schedule()?;
        Ok(Self {
            vqvae: PartVqvae::load(&dir.join(SubModel::Vqvae.checkpoint_name()))?,
            prior: IndexPrior::load(&dir.join(SubModel::Prior.checkpoint_name()))?,
            milestones: DenoiserTransformer::load(
                &dir.join(SubModel::Milestones.checkpoint_name()),
            )?,
            milestone_poses: DenoiserTransformer::load(
                &dir.join(SubModel::MilestonePoses.checkpoint_name()),
            )?,
            trajectory: DenoiserTransformer::load(
                &dir.join(SubModel::Trajectory.checkpoint_name()),
            )?,
            infill: DenoiserTransformer::load(&dir.join(SubModel::Infill.checkpoint_name()))?,
            schedule,
            params,
        })
    }
}

/// Trains one sub-model from a dataset and writes its checkpoint plus a
/// training-curve CSV into `models_dir`. The prior requires the VQ-VAE
/// checkpoint to already exist there.
pub fn train_submodel(
    sub: SubModel,
    dataset: &Dataset,
    params: &PipelineParams,
    train: &TrainConfig,
    models_dir: &Path,
) -> Result<TrainCurve, PipelineError> {
    std::fs::create_dir_all(models_dir)?;
    let ts = prepare_training(dataset, params)?;
    let curve = match sub {
        SubModel::Vqvae => {
            let (model, curve) = train_vqvae_model::<f32>(&ts, params, train)?;
            model.save(&models_dir.join(sub.checkpoint_name()))?;
            curve
        }
        SubModel::Prior => {
            let vq_path = models_dir.join(SubModel::Vqvae.checkpoint_name());
            if !vq_path.exists() {
                return Err(PipelineError::MissingCheckpoint(
                    SubModel::Vqvae.checkpoint_name(),
                ));
            }
            let vqvae = PartVqvae::<f32>::load(&vq_path)?;
            let (model, curve) = train_prior_model(&ts, &vqvae, params, train)?;
            model.save(&models_dir.join(sub.checkpoint_name()))?;
            curve
        }
        SubModel::Milestones => {
            let (model, curve) = train_milestones_model::<f32>(&ts, params, train)?;
            model.save(&models_dir.join(sub.checkpoint_name()))?;
            curve
        }
        SubModel::MilestonePoses => {
            let (model, curve) = train_pose_model::<f32>(&ts, params, train)?;
            model.save(&models_dir.join(sub.checkpoint_name()))?;
            curve
        }
        SubModel::Trajectory => {
            let (model, curve) = train_trajectory_model::<f32>(&ts, params, train)?;
            model.save(&models_dir.join(sub.checkpoint_name()))?;
            curve
        }
        SubModel::Infill => {
            let (model, curve) = train_infill_model::<f32>(&ts, params, train)?;
            model.save(&models_dir.join(sub.checkpoint_name()))?;
            curve
        }
    };
    std::fs::write(
        models_dir.join(format!("{}_curve.csv", sub.name())),
        curve.to_csv(),
    )?;
    std::fs::write(
        models_dir.join("pipeline.json"),
        serde_json::to_vec_pretty(params)?,
    )?;
    Ok(curve)
}

fn prepare_training(
    dataset: &Dataset,
    params: &PipelineParams,
) -> Result<TrainingSet, PipelineError> {
    super::extract::prepare_training_set(dataset, &params.sensor)
}

/// Per-submodel training budgets for whole-bundle runs.
#[derive(Debug, Clone, Copy)]
pub struct BundleTrainConfig {
    pub vqvae: TrainConfig,
    pub prior: TrainConfig,
    pub milestones: TrainConfig,
    pub milestone_poses: TrainConfig,
    pub trajectory: TrainConfig,
    pub infill: TrainConfig,
}

impl BundleTrainConfig {
    pub fn uniform(cfg: TrainConfig) -> Self {
        Self {
            vqvae: cfg,
            prior: cfg,
            milestones: cfg,
            milestone_poses: cfg,
            trajectory: cfg,
            infill: cfg,
        }
    }
}

/// Trains all six sub-models in memory and returns the assembled bundle.
pub fn train_full_bundle(
    dataset: &Dataset,
    params: &PipelineParams,
    cfg: &BundleTrainConfig,
) -> Result<ModelBundle<f32>, PipelineError> {
    let ts = prepare_training(dataset, params)?;
    let (vqvae, _) = train_vqvae_model::<f32>(&ts, params, &cfg.vqvae)?;
    let (prior, _) = train_prior_model(&ts, &vqvae, params, &cfg.prior)?;
    let (milestones, _) = train_milestones_model::<f32>(&ts, params, &cfg.milestones)?;
    let (milestone_poses, _) = train_pose_model::<f32>(&ts, params, &cfg.milestone_poses)?;
    let (trajectory, _) = train_trajectory_model::<f32>(&ts, params, &cfg.trajectory)?;
    let (infill, _) = train_infill_model::<f32>(&ts, params, &cfg.infill)?;
    Ok(ModelBundle {
        vqvae,
        prior,
        milestones,
        milestone_poses,
        trajectory,
        infill,
        schedule: params.schedule()?,
        params: params.clone(),
    })
}
