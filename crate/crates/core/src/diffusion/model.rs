use std::sync::Arc;

use customnet_autograd::{ParamStore, Real, Session, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::unet::{init_unet, unet_forward, CondTokens, UNetConfig};
use crate::conditioning::{fuse, init_fusion, ConditionBundle, UNET_IN_CHANNELS};
use crate::encoders::{encode_objects, encode_texts, init_encoders, rgba_batch, EncoderConfig};
use crate::error::{Error, Result};
use crate::nn::Init;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub resolution: usize,
    pub unet: UNetConfig,
    pub encoders: EncoderConfig,
    /// When off, the pose vector is zeroed before fusion.
    pub use_pose: bool,
    /// When off, the placed-object channels of the input are zeroed.
    pub concat_object: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            resolution: 32,
            unet: UNetConfig::default(),
            encoders: EncoderConfig::default(),
            use_pose: true,
            concat_object: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.unet.validate(self.resolution)?;
        if self.unet.in_channels != UNET_IN_CHANNELS || self.unet.out_channels != 3 {
            return Err(Error::invalid(
                "unet",
                format!("channels must be {UNET_IN_CHANNELS} in and 3 out"),
            ));
        }
        let enc = &self.encoders;
        if enc.embed_dim == 0 || enc.text_max_len == 0 || enc.object_widths.is_empty() {
            return Err(Error::invalid("encoders", "embedding width, text length and object widths must be positive"));
        }
        Ok(())
    }
}

/// Freshly initialized parameters for every component.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore<f32>> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = Init {
        store: &mut store,
        rng: &mut rng,
    };
    let d = cfg.encoders.embed_dim;
    init_encoders(&mut init, &cfg.encoders);
    init_fusion(&mut init, d);
    let std = (1.0 / d as f64).sqrt();
    init.normal("null.object", &[1, d], std);
    init.normal("null.text", &[1, d], std);
    init_unet(&mut init, &cfg.unet, d);
    Ok(store)
}

/// Encodes the token conditions of a batch. Dropped objects become the
/// null object token. The text sequence gets the null text token in front;
/// it is the only valid key when the text is null, and masked otherwise.
pub fn encode_conditions<'g, F: Real>(
    s: &Session<'g, F>,
    cfg: &ModelConfig,
    bundles: &[&ConditionBundle],
) -> Result<CondTokens<'g, F>> {
    let b = bundles.len();
    let d = cfg.encoders.embed_dim;
    let l = cfg.encoders.text_max_len;
    let refs: Vec<_> = bundles.iter().map(|x| &x.reference).collect();
    let emb = encode_objects(s, &cfg.encoders, s.input(rgba_batch(&refs)));
    let poses: Vec<f64> = bundles
        .iter()
        .flat_map(|x| if cfg.use_pose { x.pose } else { [0.0; 4] })
        .collect();
    let fused = fuse(s, emb, s.input(Tensor::from_f64_slice(vec![b, 4], &poses)));
    let null_obj = s.param("null.object").reshape(vec![d]).repeat_outer(b);
    let drop: Vec<bool> = bundles.iter().map(|x| x.drop_object).collect();
    let object = fused.select_outer(null_obj, &drop).reshape(vec![b, 1, d]);

    let null_text: Vec<bool> = bundles.iter().map(|x| x.text_is_null()).collect();
    let tokens: Vec<&[usize]> = bundles
        .iter()
        .zip(&null_text)
        .map(|(x, &n)| if n { &[][..] } else { x.caption.tokens() })
        .collect();
    let (text, valid) = encode_texts(s, &cfg.encoders, &tokens)?;
    let null_tok = s.param("null.text").repeat_outer(b);
    let text = Var::concat(&[null_tok, text], 1);
    let mut text_valid = Vec::with_capacity(b * (l + 1));
    for (i, &n) in null_text.iter().enumerate() {
        text_valid.push(n);
        text_valid.extend_from_slice(&valid[i * l..(i + 1) * l]);
    }
    Ok(CondTokens {
        object,
        text,
        text_valid: Arc::new(text_valid),
    })
}

/// One denoiser call: assembled inputs, timesteps and their conditions.
#[derive(Clone, Debug)]
pub struct DenoiserBatch<F> {
    /// `[batch, h, w, 10]`
    pub x_in: Tensor<F>,
    pub t: Vec<usize>,
    pub bundles: Vec<ConditionBundle>,
    /// The noise drawn for `x_in`, i.e. the regression target. Models must
    /// not read it; it is exposed for reference predictors in tests.
    pub eps: Arc<Tensor<F>>,
}

/// Anything that predicts noise for a batch.
pub trait EpsilonModel<F: Real> {
    fn predict<'g>(&self, s: &Session<'g, F>, batch: &DenoiserBatch<F>) -> Result<Var<'g, F>>;
}

/// The conditional denoiser: encoders, fusion and U-Net.
#[derive(Clone, Debug, PartialEq)]
pub struct CustomNet {
    pub config: ModelConfig,
}

impl CustomNet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    /// Forward pass with precomputed tokens.
    pub fn forward<'g, F: Real>(
        &self,
        s: &Session<'g, F>,
        x_in: Var<'g, F>,
        t: &[f64],
        tokens: CondTokens<'g, F>,
    ) -> Var<'g, F> {
        unet_forward(s, &self.config.unet, x_in, t, tokens)
    }
}

impl<F: Real> EpsilonModel<F> for CustomNet {
    fn predict<'g>(&self, s: &Session<'g, F>, batch: &DenoiserBatch<F>) -> Result<Var<'g, F>> {
        let refs: Vec<&ConditionBundle> = batch.bundles.iter().collect();
        let tokens = encode_conditions(s, &self.config, &refs)?;
        let t: Vec<f64> = batch.t.iter().map(|&t| t as f64).collect();
        Ok(self.forward(s, s.input(batch.x_in.clone()), &t, tokens))
    }
}
