use std::sync::Arc;

use customnet_autograd::{AdamW, AdamWConfig, Graph, ParamStore, Real, Session, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_FORMAT};
use super::model::{init_params, CustomNet, DenoiserBatch, EpsilonModel, ModelConfig};
use super::schedule::{q_sample_with, NoiseSchedule, ScheduleConfig};
use crate::conditioning::{assemble_batch, condition_dropout, Branch, ConditionBundle};
use crate::datapipe::{EpochStream, TrainingPair};
use crate::error::{Error, Result};

/// Optimization settings. The full-scale reference regime is lr 2e-6,
/// batch 96 and 500K steps from a pretrained checkpoint; the defaults are
/// the from-scratch toy regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Total optimizer steps, pretraining included.
    pub steps: u64,
    /// Leading steps on object-only pairs; 0 trains directly.
    pub pretrain_steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub ema_decay: f64,
    pub p_text: f64,
    pub p_all: f64,
    /// Chance of the composition branch for pairs that have a background.
    pub p_composition: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            pretrain_steps: 5_000,
            batch_size: 32,
            lr: 2e-4,
            weight_decay: 0.01,
            grad_clip: 1.0,
            ema_decay: 0.999,
            p_text: 0.1,
            p_all: 0.1,
            p_composition: 0.5,
            seed: 0,
            checkpoint_every: 1_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if self.pretrain_steps > self.steps {
            return Err(Error::invalid("pretrain_steps", "exceeds total steps"));
        }
        for (n, p) in [("p_text", self.p_text), ("p_all", self.p_all), ("p_composition", self.p_composition)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(n, format!("{p} outside [0, 1]")));
            }
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::invalid("lr", "lr must be positive and ema_decay in [0, 1)"));
        }
        Ok(())
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Image in `[0, 1]` to the `[-1, 1]` latent of the identity codec.
pub fn encode_latent<F: Real>(data: &[f32]) -> Vec<F> {
    data.iter().map(|&v| F::from_f64(2.0 * v as f64 - 1.0)).collect()
}

/// Draws branch, dropout, timestep and noise for each pair and assembles
/// the denoiser batch. Randomness is consumed pair by pair in order.
pub fn prepare_batch<F: Real, R: Rng + ?Sized>(
    pairs: &[&TrainingPair],
    schedule: &NoiseSchedule,
    rng: &mut R,
    cfg: &TrainConfig,
    concat_object: bool,
) -> Result<DenoiserBatch<F>> {
    if pairs.is_empty() {
        return Err(Error::invalid("batch", "empty batch"));
    }
    let res = pairs[0].resolution();
    let per = res * res * 3;
    let mut bundles = Vec::with_capacity(pairs.len());
    let mut t = Vec::with_capacity(pairs.len());
    let mut z_t = Vec::with_capacity(pairs.len() * per);
    let mut eps_all = Vec::with_capacity(pairs.len() * per);
    for pair in pairs {
        let composition = pair.background.is_some() && rng.random::<f64>() < cfg.p_composition;
        let branch = if composition { Branch::Composition } else { Branch::Generation };
        let bundle = condition_dropout(ConditionBundle::from_pair(pair, branch)?, rng, cfg.p_text, cfg.p_all)?;
        let ti = rng.random_range(1..=schedule.steps());
        let eps = Tensor::<F>::from_fn(vec![per], |_| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            F::from_f64(z)
        });
        let z0 = Tensor::new(vec![per], encode_latent::<F>(pair.target.data()));
        z_t.extend_from_slice(q_sample_with(&z0, schedule.alpha_bar(ti), &eps).data());
        eps_all.extend_from_slice(eps.data());
        bundles.push(bundle);
        t.push(ti);
    }
    let b = pairs.len();
    let z_t = Tensor::new(vec![b, res, res, 3], z_t);
    let refs: Vec<&ConditionBundle> = bundles.iter().collect();
    let x_in = assemble_batch(&z_t, &refs, concat_object);
    Ok(DenoiserBatch {
        x_in,
        t,
        bundles,
        eps: Arc::new(Tensor::new(vec![b, res, res, 3], eps_all)),
    })
}

/// Mean squared error between the drawn and the predicted noise.
pub fn training_loss<'g, F: Real, M: EpsilonModel<F>>(
    model: &M,
    s: &Session<'g, F>,
    batch: &DenoiserBatch<F>,
) -> Result<Var<'g, F>> {
    Ok(model.predict(s, batch)?.mse(batch.eps.clone()))
}

/// Optimizer state and weights of a training run.
pub struct Trainer {
    pub model: CustomNet,
    pub schedule: NoiseSchedule,
    pub config: TrainConfig,
    pub params: ParamStore<f32>,
    pub ema: ParamStore<f32>,
    pub opt: AdamW<f32>,
    pub rng: ChaCha8Rng,
    pub step: u64,
    pub config_digest: String,
}

impl Trainer {
    pub fn new(model: ModelConfig, schedule: ScheduleConfig, config: TrainConfig, config_digest: String) -> Result<Self> {
        config.validate()?;
        let params = init_params(&model, config.seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self {
            model: CustomNet::new(model)?,
            schedule: NoiseSchedule::from_config(&schedule)?,
            opt: AdamW::new(config.adamw()),
            ema: params.clone(),
            params,
            config,
            rng,
            step: 0,
            config_digest,
        })
    }

    /// Resumes a run; the checkpoint must carry the same config digest.
    pub fn resume(ckpt: &Checkpoint, config: TrainConfig, config_digest: String) -> Result<Self> {
        ckpt.check_digest(&config_digest)?;
        config.validate()?;
        let rng = ckpt
            .meta
            .rng
            .clone()
            .ok_or_else(|| Error::Checkpoint("checkpoint has no rng state".into()))?;
        Ok(Self {
            model: CustomNet::new(ckpt.meta.model.clone())?,
            schedule: NoiseSchedule::from_config(&ckpt.meta.schedule)?,
            opt: ckpt.optimizer(config.adamw()),
            ema: ckpt.ema.clone().unwrap_or_else(|| ckpt.params.clone()),
            params: ckpt.params.clone(),
            config,
            rng,
            step: ckpt.meta.step,
            config_digest,
        })
    }

    /// One optimizer step on a batch; returns the loss before the update.
    pub fn train_step(&mut self, pairs: &[&TrainingPair]) -> Result<f64> {
        let step = self.step + 1;
        let (loss, mut grads) = {
            let g = Graph::new();
            let s = Session::train(&g, &self.params);
            let batch = prepare_batch::<f32, _>(pairs, &self.schedule, &mut self.rng, &self.config, self.model.config.concat_object)?;
            let loss = training_loss(&self.model, &s, &batch)?;
            let value = loss.value().item() as f64;
            if !value.is_finite() {
                return Err(Error::Diverged { step, loss: value });
            }
            let mut raw = g.backward(loss);
            (value, s.collect_grads(&mut raw))
        };
        if !grads.all_finite() {
            return Err(Error::Diverged { step, loss });
        }
        grads.clip_global_norm(self.config.grad_clip as f32);
        self.opt.step(&mut self.params, &grads);
        let decay = self.config.ema_decay.min((1.0 + step as f64) / (10.0 + step as f64)) as f32;
        for (name, e) in self.ema.iter_mut() {
            let p = self.params.get(name).expect("same names");
            for (a, &b) in e.data_mut().iter_mut().zip(p.data()) {
                *a = decay * *a + (1.0 - decay) * b;
            }
        }
        self.step = step;
        Ok(loss)
    }

    pub fn checkpoint(&self, stream: Option<EpochStream>, stage: usize) -> Checkpoint {
        let (mut m, mut v) = (std::collections::BTreeMap::new(), std::collections::BTreeMap::new());
        for (n, mt, vt) in self.opt.state() {
            m.insert(n.to_string(), mt.clone());
            v.insert(n.to_string(), vt.clone());
        }
        Checkpoint {
            meta: CheckpointMeta {
                format: CHECKPOINT_FORMAT.into(),
                config_digest: self.config_digest.clone(),
                model: self.model.config.clone(),
                schedule: self.schedule.config,
                step: self.step,
                rng: Some(self.rng.clone()),
                stream,
                stage,
                optimizer_step: self.opt.step_count(),
            },
            params: self.params.clone(),
            ema: Some(self.ema.clone()),
            moments: (!m.is_empty()).then_some((m, v)),
        }
    }
}
