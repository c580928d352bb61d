use std::sync::Arc;

use customnet_autograd::{Graph, ParamStore, Session, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{encode_conditions, CustomNet};
use super::schedule::NoiseSchedule;
use super::unet::CondTokens;
use crate::conditioning::{assemble_batch, ConditionBundle};
use crate::error::{Error, Result};
use crate::world::RgbImage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub steps: usize,
    /// Classifier-free guidance scale; 1 is purely conditional, 0 purely
    /// unconditional.
    pub guidance: f64,
    pub eta: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            guidance: 2.0,
            eta: 0.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<()> {
        if self.steps == 0 || self.steps > schedule.steps() {
            return Err(Error::invalid(
                "steps",
                format!("{} outside [1, {}]", self.steps, schedule.steps()),
            ));
        }
        if !(self.guidance >= 0.0 && self.guidance.is_finite()) {
            return Err(Error::invalid("guidance", format!("{} must be non-negative", self.guidance)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid("eta", format!("{} outside [0, 1]", self.eta)));
        }
        Ok(())
    }
}

/// Noise predictor used by the sampler, on `[b, h, w, 3]` latents.
pub trait GuidedDenoiser {
    /// Conditional or unconditional noise prediction at timestep `t`.
    fn predict(&self, z_t: &Tensor<f64>, t: usize, conditional: bool) -> Result<Tensor<f64>>;

    /// Both predictions; implementors may batch them.
    fn predict_both(&self, z_t: &Tensor<f64>, t: usize) -> Result<(Tensor<f64>, Tensor<f64>)> {
        Ok((self.predict(z_t, t, true)?, self.predict(z_t, t, false)?))
    }
}

/// Sampler timesteps, descending: `floor((i + 1) T / S)` for `i < S`.
pub fn ddim_timesteps(total: usize, steps: usize) -> Vec<usize> {
    (0..steps).rev().map(|i| (i + 1) * total / steps).collect()
}

/// `eps_u + s (eps_c - eps_u)`.
pub fn guided_eps(cond: &Tensor<f64>, uncond: &Tensor<f64>, scale: f64) -> Tensor<f64> {
    cond.zip_map(uncond, |c, u| u + scale * (c - u))
}

fn guided<D: GuidedDenoiser + ?Sized>(d: &D, z: &Tensor<f64>, t: usize, scale: f64) -> Result<Tensor<f64>> {
    if scale == 1.0 {
        d.predict(z, t, true)
    } else if scale == 0.0 {
        d.predict(z, t, false)
    } else {
        let (c, u) = d.predict_both(z, t)?;
        Ok(guided_eps(&c, &u, scale))
    }
}

/// One DDIM update from `t` to `t_prev` (0 means the clean sample), with
/// the predicted clean latent clipped to `[-1, 1]`.
pub fn ddim_step(
    z: &Tensor<f64>,
    eps: &Tensor<f64>,
    ab_t: f64,
    ab_prev: f64,
    eta: f64,
    noise: Option<&Tensor<f64>>,
) -> Tensor<f64> {
    let sigma = eta * ((1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev)).max(0.0).sqrt();
    let dir = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
    let (sa, sb) = (ab_t.sqrt(), (1.0 - ab_t).sqrt());
    let mut out = z.zip_map(eps, |zi, ei| {
        let x0 = ((zi - sb * ei) / sa).clamp(-1.0, 1.0);
        ab_prev.sqrt() * x0 + dir * ei
    });
    if let (Some(n), true) = (noise, sigma > 0.0) {
        out = out.zip_map(n, |o, ni| o + sigma * ni);
    }
    out
}

/// Runs the reverse process from `z_T`. Each batch item draws its noise
/// from its own generator, so a sample only depends on its own seed.
pub fn ddim_sample<D: GuidedDenoiser + ?Sized>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    z_t: Tensor<f64>,
    cfg: &SamplerConfig,
    rngs: &mut [ChaCha8Rng],
) -> Result<Tensor<f64>> {
    cfg.validate(schedule)?;
    let b = z_t.dim(0);
    if rngs.len() != b {
        return Err(Error::invalid("seeds", format!("{} generators for batch {b}", rngs.len())));
    }
    let per = z_t.numel() / b;
    let ts = ddim_timesteps(schedule.steps(), cfg.steps);
    let mut z = z_t;
    for (k, &t) in ts.iter().enumerate() {
        let t_prev = ts.get(k + 1).copied().unwrap_or(0);
        let eps = guided(denoiser, &z, t, cfg.guidance)?;
        let noise = (cfg.eta > 0.0 && t_prev > 0).then(|| {
            let mut data: Vec<f64> = Vec::with_capacity(z.numel());
            for r in rngs.iter_mut() {
                data.extend((0..per).map(|_| -> f64 { StandardNormal.sample(r) }));
            }
            Tensor::new(z.shape().to_vec(), data)
        });
        z = ddim_step(&z, &eps, schedule.alpha_bar(t), schedule.alpha_bar(t_prev), cfg.eta, noise.as_ref());
    }
    Ok(z)
}

/// Token values computed once per sampling run.
struct CachedTokens {
    object: Arc<Tensor<f32>>,
    text: Arc<Tensor<f32>>,
    valid: Arc<Vec<bool>>,
}

impl CachedTokens {
    fn new(model: &CustomNet, params: &ParamStore<f32>, bundles: &[&ConditionBundle]) -> Result<Self> {
        let g = Graph::new();
        let s = Session::infer(&g, params);
        let tok = encode_conditions(&s, &model.config, bundles)?;
        Ok(Self {
            object: tok.object.value(),
            text: tok.text.value(),
            valid: tok.text_valid,
        })
    }

    fn cat(a: &Self, b: &Self) -> Self {
        let valid: Vec<bool> = a.valid.iter().chain(b.valid.iter()).copied().collect();
        Self {
            object: Arc::new(Tensor::cat_outer(&[(*a.object).clone(), (*b.object).clone()])),
            text: Arc::new(Tensor::cat_outer(&[(*a.text).clone(), (*b.text).clone()])),
            valid: Arc::new(valid),
        }
    }
}

/// Adapts the trained network to the sampler for a fixed set of conditions.
pub struct ModelDenoiser<'a> {
    model: &'a CustomNet,
    params: &'a ParamStore<f32>,
    cond: Vec<ConditionBundle>,
    uncond: Vec<ConditionBundle>,
    cond_tokens: CachedTokens,
    uncond_tokens: CachedTokens,
    both_tokens: CachedTokens,
}

impl<'a> ModelDenoiser<'a> {
    pub fn new(model: &'a CustomNet, params: &'a ParamStore<f32>, bundles: &[ConditionBundle]) -> Result<Self> {
        if bundles.is_empty() {
            return Err(Error::invalid("conditions", "empty batch"));
        }
        let cond = bundles.to_vec();
        let uncond: Vec<ConditionBundle> = bundles.iter().map(ConditionBundle::unconditional).collect();
        let cref: Vec<&ConditionBundle> = cond.iter().collect();
        let uref: Vec<&ConditionBundle> = uncond.iter().collect();
        let cond_tokens = CachedTokens::new(model, params, &cref)?;
        let uncond_tokens = CachedTokens::new(model, params, &uref)?;
        let both_tokens = CachedTokens::cat(&cond_tokens, &uncond_tokens);
        Ok(Self {
            model,
            params,
            cond,
            uncond,
            cond_tokens,
            uncond_tokens,
            both_tokens,
        })
    }

    fn run(&self, z: &Tensor<f64>, t: usize, bundles: &[&ConditionBundle], tokens: &CachedTokens) -> Tensor<f64> {
        let g = Graph::new();
        let s = Session::infer(&g, self.params);
        let x_in = assemble_batch(&z.cast::<f32>(), bundles, self.model.config.concat_object);
        let tok = CondTokens {
            object: s.input((*tokens.object).clone()),
            text: s.input((*tokens.text).clone()),
            text_valid: tokens.valid.clone(),
        };
        let ts = vec![t as f64; bundles.len()];
        self.model.forward(&s, s.input(x_in), &ts, tok).value().cast()
    }
}

impl GuidedDenoiser for ModelDenoiser<'_> {
    fn predict(&self, z_t: &Tensor<f64>, t: usize, conditional: bool) -> Result<Tensor<f64>> {
        let (bundles, tokens) = if conditional {
            (&self.cond, &self.cond_tokens)
        } else {
            (&self.uncond, &self.uncond_tokens)
        };
        let refs: Vec<&ConditionBundle> = bundles.iter().collect();
        Ok(self.run(z_t, t, &refs, tokens))
    }

    fn predict_both(&self, z_t: &Tensor<f64>, t: usize) -> Result<(Tensor<f64>, Tensor<f64>)> {
        let b = z_t.dim(0);
        let zz = Tensor::cat_outer(&[z_t.clone(), z_t.clone()]);
        let refs: Vec<&ConditionBundle> = self.cond.iter().chain(self.uncond.iter()).collect();
        let out = self.run(&zz, t, &refs, &self.both_tokens);
        Ok((out.slice_outer(0, b), out.slice_outer(b, 2 * b)))
    }
}

/// Initial latent for a seed.
pub fn initial_latent(seed: u64, res: usize) -> (Tensor<f64>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Tensor::randn(vec![1, res, res, 3], 1.0, &mut rng);
    (z, rng)
}

/// `[-1, 1]` latent of one batch item back to an image.
pub fn decode_latent(z: &Tensor<f64>, index: usize) -> Result<RgbImage> {
    let (h, w) = (z.dim(1), z.dim(2));
    let item = z.slice_outer(index, index + 1);
    let data = item.data().iter().map(|&v| ((v + 1.0) / 2.0).clamp(0.0, 1.0) as f32).collect();
    RgbImage::from_data(w, h, data)
}

/// Samples one image per condition; sample `i` depends only on `seeds[i]`.
pub fn sample_batch(
    model: &CustomNet,
    params: &ParamStore<f32>,
    schedule: &NoiseSchedule,
    bundles: &[ConditionBundle],
    seeds: &[u64],
    cfg: &SamplerConfig,
) -> Result<Vec<RgbImage>> {
    if bundles.len() != seeds.len() {
        return Err(Error::invalid("seeds", "one seed per condition required"));
    }
    cfg.validate(schedule)?;
    let res = model.config.resolution;
    for b in bundles {
        if b.resolution() != res {
            return Err(Error::invalid("reference", format!("resolution {} != model {res}", b.resolution())));
        }
    }
    let (zs, mut rngs): (Vec<_>, Vec<_>) = seeds.iter().map(|&s| initial_latent(s, res)).unzip();
    let z = Tensor::cat_outer(&zs);
    let den = ModelDenoiser::new(model, params, bundles)?;
    let out = ddim_sample(&den, schedule, z, cfg, &mut rngs)?;
    (0..bundles.len()).map(|i| decode_latent(&out, i)).collect()
}

/// Single-image convenience wrapper.
pub fn sample(
    model: &CustomNet,
    params: &ParamStore<f32>,
    schedule: &NoiseSchedule,
    bundle: &ConditionBundle,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<RgbImage> {
    Ok(sample_batch(model, params, schedule, std::slice::from_ref(bundle), &[seed], cfg)?.remove(0))
}
