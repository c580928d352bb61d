//! Central-difference checks of the trainable components in double
//! precision: step 1e-5, relative error below 1e-3 on randomly chosen
//! parameter entries.

use std::sync::Arc;

use customnet::camera::{embed_pose, RelativePose};
use customnet::conditioning::{fuse, ConditionBundle};
use customnet::datapipe::BBox;
use customnet::diffusion::{encode_conditions, init_params, CustomNet, ModelConfig, UNetConfig};
use customnet::encoders::{encode_objects, encode_texts, rgba_batch, EncoderConfig};
use customnet::world::{Caption, RgbImage, RgbaImage};
use customnet_autograd::{Graph, ParamStore, Session, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-3;
pub const SAMPLES: usize = 240;

pub type Loss = dyn for<'g> Fn(&Session<'g, f64>) -> Var<'g, f64>;

/// Pins the closure's signature to the higher-ranked form.
pub fn loss_fn<L: for<'g> Fn(&Session<'g, f64>) -> Var<'g, f64>>(l: L) -> L {
    l
}

pub fn eval(params: &ParamStore<f64>, loss: &Loss) -> f64 {
    let g = Graph::new();
    let s = Session::infer(&g, params);
    loss(&s).value().item()
}

/// Checks `SAMPLES` random entries among the parameters whose names start
/// with `prefix`. Returns (checked, nonzero analytic, worst rel err).
pub fn check(params: &ParamStore<f64>, prefix: &str, loss: &Loss, seed: u64) -> (usize, usize, f64) {
    let g = Graph::new();
    let s = Session::train(&g, params);
    let out = loss(&s);
    let mut grads = g.backward(out);
    let grads = s.collect_grads(&mut grads);

    let entries: Vec<(String, usize)> = params
        .iter()
        .filter(|(n, _)| n.starts_with(prefix))
        .flat_map(|(n, t)| (0..t.numel()).map(move |i| (n.to_string(), i)))
        .collect();
    assert!(entries.len() >= SAMPLES, "{prefix}: only {} parameters", entries.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = params.clone();
    let (mut nonzero, mut worst) = (0, 0.0f64);
    for _ in 0..SAMPLES {
        let (name, i) = &entries[rng.random_range(0..entries.len())];
        let orig = p.get(name).unwrap().data()[*i];
        p.get_mut(name).unwrap().data_mut()[*i] = orig + STEP;
        let plus = eval(&p, loss);
        p.get_mut(name).unwrap().data_mut()[*i] = orig - STEP;
        let minus = eval(&p, loss);
        p.get_mut(name).unwrap().data_mut()[*i] = orig;
        let numeric = (plus - minus) / (2.0 * STEP);
        let analytic = grads.get(name).unwrap().data()[*i];
        if analytic.abs() > 1e-8 {
            nonzero += 1;
        }
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        if err >= TOL {
            eprintln!("{name}[{i}]: analytic {analytic:e} numeric {numeric:e} rel err {err:e}");
        }
        worst = worst.max(err);
    }
    (SAMPLES, nonzero, worst)
}

pub fn mini_config() -> ModelConfig {
    ModelConfig {
        resolution: 8,
        unet: UNetConfig {
            widths: vec![8, 16],
            attn_levels: 1,
            groups: 4,
            ..UNetConfig::default()
        },
        encoders: EncoderConfig {
            embed_dim: 16,
            object_widths: vec![8, 16],
            text_max_len: 8,
        },
        ..ModelConfig::default()
    }
}

/// Initial parameters with every entry jittered, so zero-initialized
/// output layers do not hide the gradients of everything before them.
pub fn jittered_params(cfg: &ModelConfig, seed: u64) -> ParamStore<f64> {
    let mut p = init_params(cfg, seed).unwrap().cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for (_, t) in p.iter_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    p
}

pub fn random_rgba(res: usize, rng: &mut ChaCha8Rng) -> RgbaImage {
    let mut data = Vec::with_capacity(res * res * 4);
    for _ in 0..res * res {
        let a: f32 = rng.random_range(0.0..1.0);
        for _ in 0..3 {
            data.push(a * rng.random_range(0.0f32..1.0));
        }
        data.push(a);
    }
    RgbaImage::from_data(res, res, data).unwrap()
}

pub fn projection(shape: &[usize], seed: u64) -> Arc<Tensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Arc::new(Tensor::randn(shape.to_vec(), 1.0, &mut rng))
}


/// Outcome of one component's check.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub checked: usize,
    pub nonzero: usize,
    pub worst: f64,
}

impl Check {
    fn new(name: &'static str, (checked, nonzero, worst): (usize, usize, f64)) -> Self {
        Self { name, checked, nonzero, worst }
    }

    /// Within tolerance on enough entries, and enough of them informative
    /// (the text table has many rows no caption touches).
    pub fn passed(&self) -> bool {
        let informative = if self.name == "text encoder" { 50 } else { self.checked / 2 };
        self.checked >= 200 && self.worst < TOL && self.nonzero >= informative
    }
}

/// Fusion MLP over embedding and pose.
pub fn fusion_mlp() -> Check {
    let cfg = mini_config();
    let params = jittered_params(&cfg, 11);
    let d = cfg.encoders.embed_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let emb = Tensor::<f64>::randn(vec![3, d], 1.0, &mut rng);
    let poses: Vec<f64> = (0..3)
        .flat_map(|i| embed_pose(&RelativePose::from_deltas(0.3 * i as f64, 1.1 * i as f64 + 0.4, -0.1)))
        .collect();
    let poses = Tensor::new(vec![3, 4], poses);
    let w = projection(&[3, d], 5);
    let loss = loss_fn(move |s| {
        fuse(s, s.input(emb.clone()), s.input(poses.clone())).dot_const(w.clone())
    });
    Check::new("fusion MLP", check(&params, "fuse.", &loss, 1))
}

pub fn object_encoder() -> Check {
    let cfg = mini_config();
    let params = jittered_params(&cfg, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let imgs = [random_rgba(8, &mut rng), random_rgba(8, &mut rng)];
    let batch: Tensor<f64> = rgba_batch(&imgs.iter().collect::<Vec<_>>());
    let w = projection(&[2, cfg.encoders.embed_dim], 6);
    let enc = cfg.encoders.clone();
    let loss = loss_fn(move |s| encode_objects(s, &enc, s.input(batch.clone())).dot_const(w.clone()));
    Check::new("object encoder", check(&params, "obj_enc.", &loss, 2))
}

pub fn text_encoder() -> Check {
    let cfg = mini_config();
    let params = jittered_params(&cfg, 13);
    let captions = [
        Caption::from_text("a red cube on a checker background").unwrap(),
        Caption::from_text("a blue sphere on a solid background").unwrap(),
        Caption::from_text("green").unwrap(),
    ];
    let enc = cfg.encoders.clone();
    let w = projection(&[3, enc.text_max_len, enc.embed_dim], 7);
    let loss = loss_fn(move |s| {
        let tokens: Vec<&[usize]> = captions.iter().map(|c| c.tokens()).collect();
        encode_texts(s, &enc, &tokens).unwrap().0.dot_const(w.clone())
    });
    // most token-table rows are unused by three captions, so sample from
    // the attention and output layers as well as the table
    Check::new("text encoder", check(&params, "text_enc.", &loss, 3))
}

/// The whole 8×8 model: encoders, fusion and U-Net.
pub fn mini_unet() -> Check {
    let cfg = mini_config();
    let params = jittered_params(&cfg, 14);
    let model = CustomNet::new(cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let bg = RgbImage::from_data(8, 8, (0..8 * 8 * 3).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let bundles = vec![
        ConditionBundle::new(
            random_rgba(8, &mut rng),
            &RelativePose::from_deltas(0.2, 2.0, 0.1),
            BBox::new(0.25, 0.0, 0.5, 0.75).unwrap(),
            Caption::from_text("a red cube on a checker background").unwrap(),
            None,
            8,
        )
        .unwrap(),
        ConditionBundle::new(
            random_rgba(8, &mut rng),
            &RelativePose::from_deltas(-0.3, 4.0, 0.0),
            BBox::new(0.0, 0.5, 0.5, 0.5).unwrap(),
            Caption::empty(),
            Some(bg),
            8,
        )
        .unwrap(),
    ];
    let z = Tensor::<f64>::randn(vec![2, 8, 8, 3], 1.0, &mut rng);
    let x_in = customnet::conditioning::assemble_batch(&z, &bundles.iter().collect::<Vec<_>>(), true);
    let w = projection(&[2, 8, 8, 3], 9);
    let loss = loss_fn(move |s| {
        let refs: Vec<&ConditionBundle> = bundles.iter().collect();
        let tokens = encode_conditions(s, &model.config, &refs).unwrap();
        model
            .forward(s, s.input(x_in.clone()), &[10.0, 600.0], tokens)
            .dot_const(w.clone())
    });
    Check::new("8x8 U-Net", check(&params, "", &loss, 4))
}
