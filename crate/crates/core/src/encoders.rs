//! Trainable stand-ins for the image and text encoders: a strided
//! convolutional object encoder with a unit-norm global embedding, and a
//! token + position embedding text encoder with one masked self-attention
//! layer.

use std::sync::Arc;

use customnet_autograd::{Graph, ParamStore, Real, Session, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Init};
use crate::world::caption::vocab_size;
use crate::world::{Caption, RgbaImage};

pub const EMBED_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Shared embedding width of object and text tokens.
    pub embed_dim: usize,
    pub object_widths: Vec<usize>,
    pub text_max_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            object_widths: vec![16, 32, 64],
            text_max_len: 16,
        }
    }
}

pub(crate) fn init_encoders<R: Rng>(init: &mut Init<'_, R>, cfg: &EncoderConfig) {
    let d = cfg.embed_dim;
    let mut cin = 4;
    for (i, &w) in cfg.object_widths.iter().enumerate() {
        init.conv(&format!("obj_enc.conv{i}"), 3, cin, w);
        cin = w;
    }
    init.linear("obj_enc.proj", cin, d);

    let std = (1.0 / d as f64).sqrt();
    init.normal("text_enc.tok", &[vocab_size(), d], std);
    init.normal("text_enc.pos", &[cfg.text_max_len, d], std);
    init.norm("text_enc.ln", d);
    for p in ["q", "k", "v"] {
        init.linear_nobias(&format!("text_enc.{p}"), d, d);
    }
    init.linear("text_enc.out", d, d);
}

/// Object embeddings `[batch, d]`, unit norm, from premultiplied RGBA
/// images `[batch, h, w, 4]`.
pub fn encode_objects<'g, F: Real>(s: &Session<'g, F>, cfg: &EncoderConfig, images: Var<'g, F>) -> Var<'g, F> {
    let mut h = images;
    for i in 0..cfg.object_widths.len() {
        h = nn::conv(s, &format!("obj_enc.conv{i}"), h, 2, 1).silu();
    }
    let pooled = h.mean_spatial();
    nn::linear(s, "obj_enc.proj", pooled).l2_normalize(F::from_f64(EMBED_EPS))
}

/// Token sequences `[batch, max_len, d]` with zeroed padding, and the
/// validity mask `[batch * max_len]`.
pub fn encode_texts<'g, F: Real>(
    s: &Session<'g, F>,
    cfg: &EncoderConfig,
    tokens: &[&[usize]],
) -> Result<(Var<'g, F>, Arc<Vec<bool>>)> {
    let (b, l, d) = (tokens.len(), cfg.text_max_len, cfg.embed_dim);
    let v = vocab_size();
    let mut ids = Vec::with_capacity(b * l);
    let mut valid = Vec::with_capacity(b * l);
    for seq in tokens {
        if seq.len() > l {
            return Err(Error::invalid("caption", format!("{} tokens exceed maximum {l}", seq.len())));
        }
        if let Some(&t) = seq.iter().find(|&&t| t >= v) {
            return Err(Error::invalid("caption", format!("token {t} outside vocabulary of {v}")));
        }
        for i in 0..l {
            ids.push(seq.get(i).copied().unwrap_or(0));
            valid.push(i < seq.len());
        }
    }
    let mask = Arc::new(Tensor::from_fn(vec![b, l, 1], |i| if valid[i] { F::one() } else { F::zero() }));
    let mask_full = Arc::new(Tensor::from_fn(vec![b, l, d], |i| mask.data()[i / d]));
    let tok = s.param("text_enc.tok").embedding(&ids).reshape(vec![b, l, d]);
    let pos = s.param("text_enc.pos").repeat_outer(b);
    let x = tok.add(pos);
    let h = nn::layer_norm(s, "text_enc.ln", x);
    let q = nn::linear_nobias(s, "text_enc.q", h);
    let k = nn::linear_nobias(s, "text_enc.k", h);
    let vv = nn::linear_nobias(s, "text_enc.v", h);
    let valid = Arc::new(valid);
    let a = q.attention(k, vv, Some(valid.clone()));
    let out = x.add(nn::linear(s, "text_enc.out", a)).mul_const(mask_full);
    Ok((out, valid))
}

/// Unit-norm object embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectEmbedding(pub Vec<f64>);

impl ObjectEmbedding {
    pub fn cosine(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

/// Per-token embeddings `[len, d]` and validity flags.
#[derive(Clone, Debug, PartialEq)]
pub struct TextEmbeddingSeq {
    pub matrix: Tensor<f64>,
    pub mask: Vec<bool>,
}

pub fn rgba_batch<F: Real>(images: &[&RgbaImage]) -> Tensor<F> {
    let (h, w) = (images[0].height(), images[0].width());
    let mut data = Vec::with_capacity(images.len() * h * w * 4);
    for img in images {
        data.extend(img.data().iter().map(|&v| F::from_f64(v as f64)));
    }
    Tensor::new(vec![images.len(), h, w, 4], data)
}

/// Embeds a single image. The image must be at the model resolution.
pub fn encode_object<F: Real>(params: &ParamStore<F>, cfg: &EncoderConfig, image: &RgbaImage, res: usize) -> Result<ObjectEmbedding> {
    Ok(encode_object_batch(params, cfg, &[image], res)?.remove(0))
}

pub fn encode_object_batch<F: Real>(
    params: &ParamStore<F>,
    cfg: &EncoderConfig,
    images: &[&RgbaImage],
    res: usize,
) -> Result<Vec<ObjectEmbedding>> {
    if let Some(img) = images.iter().find(|i| i.width() != res || i.height() != res) {
        return Err(Error::invalid(
            "image",
            format!("{}x{} image, encoder expects {res}x{res}", img.width(), img.height()),
        ));
    }
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let g = Graph::new();
    let s = Session::infer(&g, params);
    let e = encode_objects(&s, cfg, s.input(rgba_batch(images))).value();
    let d = cfg.embed_dim;
    Ok(e.data()
        .chunks(d)
        .map(|r| ObjectEmbedding(r.iter().map(|v| v.as_f64()).collect()))
        .collect())
}

pub fn encode_text<F: Real>(params: &ParamStore<F>, cfg: &EncoderConfig, caption: &Caption) -> Result<TextEmbeddingSeq> {
    let g = Graph::new();
    let s = Session::infer(&g, params);
    let (out, mask) = encode_texts(&s, cfg, &[caption.tokens()])?;
    Ok(TextEmbeddingSeq {
        matrix: out.value().cast::<f64>().reshape(vec![cfg.text_max_len, cfg.embed_dim]),
        mask: mask.to_vec(),
    })
}
