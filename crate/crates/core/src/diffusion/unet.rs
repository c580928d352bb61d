//! Channels-last U-Net with residual blocks, a sinusoidal timestep
//! embedding and cross-attention blocks at the coarsest levels.
//!
//! Level `i` runs at resolution `res / 2^i` with `widths[i]` channels. The
//! down path applies one residual block per level (plus attention where
//! enabled) and a stride-2 convolution between levels; the up path
//! upsamples, concatenates the skip and applies one residual block per
//! level. The output convolution starts at zero.

use std::sync::Arc;

use customnet_autograd::{Real, Session, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{dual_attention, merged_attention};
use crate::error::{Error, Result};
use crate::nn::{self, Init};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    /// Separate softmaxes over object and text keys, summed.
    Dual,
    /// One softmax over the concatenated keys.
    Merged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub widths: Vec<usize>,
    /// Number of coarsest levels with cross-attention.
    pub attn_levels: usize,
    pub groups: usize,
    pub attention: AttentionMode,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 10,
            out_channels: 3,
            widths: vec![32, 64, 128],
            attn_levels: 2,
            groups: 8,
            attention: AttentionMode::Dual,
        }
    }
}

impl UNetConfig {
    pub fn temb_dim(&self) -> usize {
        4 * self.widths[0]
    }

    fn has_attn(&self, level: usize) -> bool {
        level + self.attn_levels >= self.widths.len()
    }

    pub fn validate(&self, res: usize) -> Result<()> {
        let levels = self.widths.len();
        if levels == 0 {
            return Err(Error::invalid("widths", "need at least one level"));
        }
        let div = 1usize << (levels - 1);
        if res % div != 0 || res == 0 {
            return Err(Error::invalid(
                "resolution",
                format!("{res} is not a multiple of 2^{} = {div}", levels - 1),
            ));
        }
        if self.widths[0] % 2 != 0 {
            return Err(Error::invalid("widths", "first width must be even for the timestep embedding"));
        }
        let mut channels: Vec<usize> = self.widths.clone();
        for i in 0..levels.saturating_sub(1) {
            channels.push(self.widths[i] + self.widths[i + 1]);
        }
        if let Some(c) = channels.iter().find(|&&c| c % self.groups != 0) {
            return Err(Error::invalid("groups", format!("{c} channels not divisible by {} groups", self.groups)));
        }
        Ok(())
    }
}

fn init_resblock<R: Rng>(init: &mut Init<'_, R>, name: &str, cin: usize, cout: usize, temb: usize) {
    init.norm(&format!("{name}.norm1"), cin);
    init.conv(&format!("{name}.conv1"), 3, cin, cout);
    init.linear(&format!("{name}.temb"), temb, cout);
    init.norm(&format!("{name}.norm2"), cout);
    init.conv(&format!("{name}.conv2"), 3, cout, cout);
    if cin != cout {
        init.conv(&format!("{name}.skip"), 1, cin, cout);
    }
}

fn init_attn<R: Rng>(init: &mut Init<'_, R>, name: &str, c: usize, d: usize) {
    init.norm(&format!("{name}.norm"), c);
    init.linear_nobias(&format!("{name}.q"), c, c);
    for p in ["k_obj", "v_obj", "k_txt", "v_txt"] {
        init.linear_nobias(&format!("{name}.{p}"), d, c);
    }
    init.linear_zero(&format!("{name}.out"), c, c);
}

pub(crate) fn init_unet<R: Rng>(init: &mut Init<'_, R>, cfg: &UNetConfig, cond_dim: usize) {
    let w = &cfg.widths;
    let temb = cfg.temb_dim();
    init.linear("unet.time.l1", w[0], temb);
    init.linear("unet.time.l2", temb, temb);
    init.conv("unet.in", 3, cfg.in_channels, w[0]);
    let mut c = w[0];
    for (i, &wi) in w.iter().enumerate() {
        init_resblock(init, &format!("unet.down{i}.res"), c, wi, temb);
        if cfg.has_attn(i) {
            init_attn(init, &format!("unet.down{i}.attn"), wi, cond_dim);
        }
        if i + 1 < w.len() {
            init.conv(&format!("unet.down{i}.downsample"), 3, wi, wi);
        }
        c = wi;
    }
    for i in (0..w.len() - 1).rev() {
        init_resblock(init, &format!("unet.up{i}.res"), c + w[i], w[i], temb);
        if cfg.has_attn(i) {
            init_attn(init, &format!("unet.up{i}.attn"), w[i], cond_dim);
        }
        c = w[i];
    }
    init.norm("unet.out_norm", w[0]);
    init.conv_zero("unet.out", 3, w[0], cfg.out_channels);
}

/// Sinusoidal embedding `[batch, dim]` of (possibly fractional) timesteps.
pub fn timestep_embedding<F: Real>(t: &[f64], dim: usize) -> Tensor<F> {
    let half = dim / 2;
    let mut data = Vec::with_capacity(t.len() * dim);
    for &tv in t {
        for i in 0..half {
            let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
            data.push(F::from_f64((tv * freq).sin()));
        }
        for i in 0..half {
            let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
            data.push(F::from_f64((tv * freq).cos()));
        }
    }
    Tensor::new(vec![t.len(), dim], data)
}

/// Conditioning tokens for the attention blocks.
#[derive(Clone)]
pub struct CondTokens<'g, F> {
    /// `[batch, 1, d]`
    pub object: Var<'g, F>,
    /// `[batch, m, d]`
    pub text: Var<'g, F>,
    /// `[batch * m]`
    pub text_valid: Arc<Vec<bool>>,
}

struct Ctx<'a, 'g, F> {
    s: &'a Session<'g, F>,
    cfg: &'a UNetConfig,
    temb: Var<'g, F>,
    object: Var<'g, F>,
    text: Var<'g, F>,
    text_valid: Arc<Vec<bool>>,
}

impl<'g, F: Real> Ctx<'_, 'g, F> {
    fn resblock(&self, name: &str, x: Var<'g, F>) -> Var<'g, F> {
        let s = self.s;
        let g = self.cfg.groups;
        let h = nn::group_norm(s, &format!("{name}.norm1"), x, g).silu();
        let h = nn::conv(s, &format!("{name}.conv1"), h, 1, 1);
        let h = h.add_per_sample(nn::linear(s, &format!("{name}.temb"), self.temb.silu()));
        let h = nn::group_norm(s, &format!("{name}.norm2"), h, g).silu();
        let h = nn::conv(s, &format!("{name}.conv2"), h, 1, 1);
        let skip_name = format!("{name}.skip");
        let skip = if s.params().contains(&format!("{skip_name}.w")) {
            nn::conv(s, &skip_name, x, 1, 0)
        } else {
            x
        };
        skip.add(h)
    }

    fn attn(&self, name: &str, x: Var<'g, F>) -> Var<'g, F> {
        let s = self.s;
        let shape = x.shape();
        let (b, hw, c) = (shape[0], shape[1] * shape[2], shape[3]);
        let h = nn::group_norm(s, &format!("{name}.norm"), x, self.cfg.groups).reshape(vec![b, hw, c]);
        let q = nn::linear_nobias(s, &format!("{name}.q"), h);
        let ko = nn::linear_nobias(s, &format!("{name}.k_obj"), self.object);
        let vo = nn::linear_nobias(s, &format!("{name}.v_obj"), self.object);
        let kb = nn::linear_nobias(s, &format!("{name}.k_txt"), self.text);
        let vb = nn::linear_nobias(s, &format!("{name}.v_txt"), self.text);
        let valid = Some(self.text_valid.clone());
        let a = match self.cfg.attention {
            AttentionMode::Dual => dual_attention(q, ko, vo, kb, vb, valid),
            AttentionMode::Merged => merged_attention(q, ko, vo, kb, vb, valid),
        };
        x.add(nn::linear(s, &format!("{name}.out"), a).reshape(shape))
    }
}

/// Noise prediction `[batch, h, w, out]` for input `[batch, h, w, in]`.
pub fn unet_forward<'g, F: Real>(
    s: &Session<'g, F>,
    cfg: &UNetConfig,
    x: Var<'g, F>,
    t: &[f64],
    tokens: CondTokens<'g, F>,
) -> Var<'g, F> {
    let w = &cfg.widths;
    let temb = s.input(timestep_embedding(t, w[0]));
    let temb = nn::linear(s, "unet.time.l2", nn::linear(s, "unet.time.l1", temb).silu());
    let ctx = Ctx {
        s,
        cfg,
        temb,
        object: tokens.object,
        text: tokens.text,
        text_valid: tokens.text_valid,
    };
    let mut h = nn::conv(s, "unet.in", x, 1, 1);
    let mut skips = Vec::new();
    for i in 0..w.len() {
        h = ctx.resblock(&format!("unet.down{i}.res"), h);
        if cfg.has_attn(i) {
            h = ctx.attn(&format!("unet.down{i}.attn"), h);
        }
        if i + 1 < w.len() {
            skips.push(h);
            h = nn::conv(s, &format!("unet.down{i}.downsample"), h, 2, 1);
        }
    }
    for i in (0..w.len() - 1).rev() {
        h = Var::concat(&[h.upsample2x(), skips[i]], 3);
        h = ctx.resblock(&format!("unet.up{i}.res"), h);
        if cfg.has_attn(i) {
            h = ctx.attn(&format!("unet.up{i}.attn"), h);
        }
    }
    let h = nn::group_norm(s, "unet.out_norm", h, cfg.groups).silu();
    nn::conv(s, "unet.out", h, 1, 1)
}
