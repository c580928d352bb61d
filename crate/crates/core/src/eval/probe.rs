//! Background-family classifier trained only on procedural backgrounds,
//! independent of the generator.

use std::collections::HashMap;
use std::path::Path;

use customnet_autograd::{softmax_last, AdamW, AdamWConfig, Graph, ParamStore, Session, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use super::metrics::{mask_bbox, BackgroundProbe};
use crate::datapipe::BBox;
use crate::error::{Error, Result};
use crate::nn::{self, Init};
use crate::world::{render_background, BackgroundSpec, Family, RgbImage};

const WIDTHS: [usize; 3] = [16, 32, 32];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Held-out images for the acceptance gate.
    pub gate_samples: usize,
    /// Required mean probability on the true family.
    pub gate: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            steps: 1500,
            batch_size: 32,
            lr: 3e-3,
            gate_samples: 500,
            gate: 0.99,
            seed: 0x0b5e,
        }
    }
}

/// Trained probe and its held-out gate measurement.
pub struct FamilyProbe {
    pub params: ParamStore<f32>,
    pub resolution: usize,
    pub gate_score: f64,
}

fn init(seed: u64) -> ParamStore<f32> {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = Init {
        store: &mut store,
        rng: &mut rng,
    };
    let mut cin = 3;
    for (i, &w) in WIDTHS.iter().enumerate() {
        init.conv(&format!("probe.conv{i}"), 3, cin, w);
        cin = w;
    }
    init.linear("probe.head", cin, Family::ALL.len());
    store
}

fn logits<'g>(s: &Session<'g, f32>, images: Tensor<f32>) -> customnet_autograd::Var<'g, f32> {
    let mut h = s.input(images);
    for i in 0..WIDTHS.len() {
        h = nn::conv(s, &format!("probe.conv{i}"), h, 2, 1).silu();
    }
    nn::linear(s, "probe.head", h.mean_spatial())
}

fn batch_tensor(images: &[RgbImage]) -> Tensor<f32> {
    let res = images[0].width();
    let data = images.iter().flat_map(|i| i.data().iter().copied()).collect();
    Tensor::new(vec![images.len(), res, res, 3], data)
}

/// A training or gate image: a random background, optionally with a random
/// box filled as at scoring time, plus pixel noise.
fn draw<R: Rng>(rng: &mut R, res: usize, augment: bool) -> (RgbImage, Family) {
    let family = Family::ALL[rng.random_range(0..Family::ALL.len())];
    let mut img = render_background(&BackgroundSpec::random(family, rng), res);
    if augment {
        if rng.random_bool(0.75) {
            let aspect = rng.random_range(0.5..2.0);
            img = mask_bbox(&img, &BBox::sample(rng, aspect, 0.2, 0.8));
        }
        let sigma = rng.random_range(0.0..0.08);
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).expect("valid sigma");
            for v in img.data_mut() {
                *v = (*v + noise.sample(rng) as f32).clamp(0.0, 1.0);
            }
        }
    }
    (img, family)
}

impl FamilyProbe {
    /// Trains from scratch; deterministic in `cfg.seed`.
    pub fn train(res: usize, cfg: &ProbeConfig) -> Result<Self> {
        let mut params = init(cfg.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut opt = AdamW::new(AdamWConfig {
            lr: cfg.lr,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        });
        for _ in 0..cfg.steps {
            let (imgs, labels): (Vec<_>, Vec<_>) = (0..cfg.batch_size).map(|_| draw(&mut rng, res, true)).unzip();
            let labels: Vec<usize> = labels.iter().map(|f| f.index()).collect();
            let grads = {
                let g = Graph::new();
                let s = Session::train(&g, &params);
                let loss = logits(&s, batch_tensor(&imgs)).cross_entropy(&labels);
                let mut raw = g.backward(loss);
                s.collect_grads(&mut raw)
            };
            opt.step(&mut params, &grads);
        }
        let mut probe = Self {
            params,
            resolution: res,
            gate_score: 0.0,
        };
        let mut gate_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9a7e);
        let mut total = 0.0;
        for _ in 0..cfg.gate_samples {
            let (img, family) = draw(&mut gate_rng, res, false);
            total += probe.family_probs(&img)?[family.index()];
        }
        probe.gate_score = total / cfg.gate_samples.max(1) as f64;
        Ok(probe)
    }

    pub fn passes_gate(&self, cfg: &ProbeConfig) -> bool {
        self.gate_score >= cfg.gate
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = self
            .params
            .iter()
            .map(|(n, t)| (n.to_string(), t.shape().to_vec(), t.data().iter().flat_map(|v| v.to_le_bytes()).collect()))
            .collect();
        let views = bytes
            .iter()
            .map(|(n, s, b)| Ok((n.clone(), TensorView::new(Dtype::F32, s.clone(), b).map_err(st_err)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut meta = HashMap::new();
        meta.insert("resolution".to_string(), self.resolution.to_string());
        meta.insert("gate_score".to_string(), self.gate_score.to_string());
        let out = safetensors::serialize(views, Some(meta)).map_err(st_err)?;
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let st = SafeTensors::deserialize(&bytes).map_err(st_err)?;
        let (_, header) = SafeTensors::read_metadata(&bytes).map_err(st_err)?;
        let meta = header.metadata().clone().unwrap_or_default();
        let field = |k: &str| meta.get(k).ok_or_else(|| Error::Checkpoint(format!("probe: missing {k}")));
        let resolution = field("resolution")?.parse().map_err(|_| Error::Checkpoint("probe: bad resolution".into()))?;
        let gate_score = field("gate_score")?.parse().map_err(|_| Error::Checkpoint("probe: bad gate".into()))?;
        let mut params = ParamStore::new();
        for (name, view) in st.tensors() {
            let data = view
                .data()
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            params.insert(name, Tensor::new(view.shape().to_vec(), data));
        }
        Ok(Self {
            params,
            resolution,
            gate_score,
        })
    }
}

fn st_err(e: safetensors::SafeTensorError) -> Error {
    Error::Checkpoint(e.to_string())
}

impl BackgroundProbe for FamilyProbe {
    fn family_probs(&self, image: &RgbImage) -> Result<[f64; 4]> {
        if image.width() != self.resolution || image.height() != self.resolution {
            return Err(Error::invalid("image", format!("probe expects {r}×{r}", r = self.resolution)));
        }
        let g = Graph::new();
        let s = Session::infer(&g, &self.params);
        let p = softmax_last(&logits(&s, batch_tensor(std::slice::from_ref(image))).value());
        Ok(std::array::from_fn(|i| p.data()[i] as f64))
    }
}

/// Assigns equal mass to every family.
pub struct UniformProbe;

impl BackgroundProbe for UniformProbe {
    fn family_probs(&self, _: &RgbImage) -> Result<[f64; 4]> {
        Ok([1.0 / Family::ALL.len() as f64; 4])
    }
}
