//! Run directories, cached datasets, resumable training runs, evaluation
//! and ablation arms.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::datapipe::{build_dataset, DataConfig, DatasetKind, DatasetManifest, EpochStream, TrainingPair};
use crate::diffusion::{Checkpoint, CustomNet, NoiseSchedule, Trainer};
use crate::digest::digest_of;
use crate::error::{Error, Result};
use crate::eval::report::ConditionSamples;
use crate::eval::{build_report, FamilyProbe, MetricsReport};
use crate::world::RgbImage;

pub const CHECKPOINT_FILE: &str = "checkpoint.safetensors";
pub const LOSS_FILE: &str = "loss.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const REPORT_FILE: &str = "report.json";

/// Creates `root/<timestamp>-<label>`, adding a numeric suffix instead of
/// reusing an existing directory, and records the resolved config.
pub fn create_run_dir(root: &Path, label: &str, cfg: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = format!("{stamp}-{label}");
    let mut dir = root.join(&base);
    let mut i = 1;
    loop {
        match fs::create_dir(&dir) {
            Ok(()) => break,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                dir = root.join(format!("{base}-{i}"));
                i += 1;
            }
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    write_config(&dir, cfg)?;
    Ok(dir)
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("config.digest");
    fs::write(&path, cfg.digest()).map_err(|e| Error::io(&path, e))
}

/// The configuration recorded in a run directory.
pub fn read_run_config(dir: &Path) -> Result<RunConfig> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    RunConfig::resolve(Some(&text), Vec::new(), &[])
}

/// Opens a cached dataset or builds it. The cache key covers kind, size,
/// seed and pipeline settings.
pub fn cached_dataset(root: &Path, kind: DatasetKind, n: usize, seed: u64, cfg: &DataConfig) -> Result<DatasetManifest> {
    let kind_name = format!("{kind:?}").to_lowercase();
    let dir = root.join(format!("{kind_name}-{n}-s{seed}-{}", &digest_of(cfg)[..12]));
    if dir.join("manifest.jsonl").exists() {
        let m = DatasetManifest::open(&dir)?;
        if m.header.n != n || m.header.seed != seed || m.header.kind != kind {
            return Err(Error::CorruptDataset {
                record: "header".into(),
                reason: format!("{} does not match its cache key", dir.display()),
            });
        }
        return Ok(m);
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    log::info!("building {kind_name} dataset of {n} records in {}", dir.display());
    build_dataset(kind, n, seed, cfg, &dir)
}

/// Object-only multi-view pairs for the pretraining stage.
pub fn pretrain_dataset(cfg: &RunConfig) -> Result<DatasetManifest> {
    let pipeline = DataConfig {
        object_only: true,
        ..cfg.data.pipeline.clone()
    };
    cached_dataset(&cfg.data.root, DatasetKind::Synthetic, cfg.data.pretrain_size, cfg.data.pretrain_seed, &pipeline)
}

pub fn train_dataset(cfg: &RunConfig) -> Result<DatasetManifest> {
    let kind = if cfg.data.natural {
        DatasetKind::Mixed
    } else {
        DatasetKind::Synthetic
    };
    cached_dataset(&cfg.data.root, kind, cfg.data.train_size, cfg.data.train_seed, &cfg.data.pipeline)
}

/// Held-out synthetic conditions with backgrounds.
pub fn eval_dataset(cfg: &RunConfig) -> Result<DatasetManifest> {
    let pipeline = DataConfig {
        object_only: false,
        ..cfg.data.pipeline.clone()
    };
    cached_dataset(&cfg.data.root, DatasetKind::Synthetic, cfg.eval.conditions, cfg.eval.seed, &pipeline)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub steps: u64,
    /// Mean of the last (up to) 500 logged losses.
    pub final_loss: f64,
    pub checkpoint: PathBuf,
}

fn read_losses(path: &Path) -> Result<Vec<(u64, f64)>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .skip(1)
        .filter_map(|l| {
            let mut f = l.split(',');
            Some((f.next()?.parse().ok()?, f.next()?.parse().ok()?))
        })
        .collect())
}

/// Rewrites the loss log keeping rows up to `step`, so a resumed run does
/// not log a step twice.
fn truncate_losses(path: &Path, step: u64, lr: f64) -> Result<()> {
    let rows = read_losses(path)?;
    let mut out = String::from("step,loss,lr\n");
    for (s, l) in rows.into_iter().filter(|(s, _)| *s <= step) {
        out.push_str(&format!("{s},{l},{lr}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Trains into `dir`, resuming from its checkpoint when one exists. The
/// first `pretrain_steps` steps draw from the object-only set.
pub fn train_run(cfg: &RunConfig, dir: &Path) -> Result<TrainOutcome> {
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    let loss_path = dir.join(LOSS_FILE);
    let arch = cfg.architecture_digest();
    let tc = &cfg.train;
    let (mut trainer, mut stage, mut stream) = if ckpt_path.exists() {
        let ckpt = Checkpoint::load(&ckpt_path)?;
        truncate_losses(&loss_path, ckpt.meta.step, tc.lr)?;
        let stage = ckpt.meta.stage;
        let stream = ckpt.meta.stream.clone();
        log::info!("resuming {} at step {}", dir.display(), ckpt.meta.step);
        (Trainer::resume(&ckpt, tc.clone(), arch)?, stage, stream)
    } else {
        truncate_losses(&loss_path, 0, tc.lr)?;
        (Trainer::new(cfg.model.clone(), cfg.schedule, tc.clone(), arch)?, 0, None)
    };
    let pretrain: Option<Vec<TrainingPair>> = if tc.pretrain_steps > trainer.step {
        Some(pretrain_dataset(cfg)?.load_all()?)
    } else {
        None
    };
    let main: Vec<TrainingPair> = if tc.steps > tc.pretrain_steps {
        train_dataset(cfg)?.load_all()?
    } else {
        Vec::new()
    };
    let mut log = fs::OpenOptions::new()
        .append(true)
        .open(&loss_path)
        .map_err(|e| Error::io(&loss_path, e))?;
    let save = |trainer: &Trainer, stream: &Option<EpochStream>, stage: usize| -> Result<()> {
        trainer.checkpoint(stream.clone(), stage).save(&ckpt_path)
    };
    while trainer.step < tc.steps {
        let want = if trainer.step < tc.pretrain_steps { 0 } else { 1 };
        let pairs = if want == 0 {
            pretrain.as_ref().expect("loaded while pretraining")
        } else {
            &main
        };
        if want != stage || stream.is_none() {
            stage = want;
            stream = Some(EpochStream::new(pairs.len(), tc.batch_size, tc.seed.wrapping_add(stage as u64)));
        }
        let idx = stream.as_mut().expect("set above").next_batch();
        let batch: Vec<&TrainingPair> = idx.iter().map(|&i| &pairs[i]).collect();
        let loss = trainer.train_step(&batch)?;
        writeln!(log, "{},{loss},{}", trainer.step, tc.lr).map_err(|e| Error::io(&loss_path, e))?;
        if trainer.step % tc.checkpoint_every.max(1) == 0 || trainer.step == tc.steps {
            log.flush().map_err(|e| Error::io(&loss_path, e))?;
            save(&trainer, &stream, stage)?;
            log::info!("step {}: loss {loss:.4}", trainer.step);
        }
    }
    if !ckpt_path.exists() {
        save(&trainer, &stream, stage)?;
    }
    let losses = read_losses(&loss_path)?;
    let tail = &losses[losses.len().saturating_sub(500)..];
    let final_loss = tail.iter().map(|(_, l)| l).sum::<f64>() / tail.len().max(1) as f64;
    Ok(TrainOutcome {
        steps: trainer.step,
        final_loss,
        checkpoint: ckpt_path,
    })
}

/// Loads the probe cached for this configuration or trains it.
pub fn cached_probe(cfg: &RunConfig) -> Result<FamilyProbe> {
    let res = cfg.data.pipeline.resolution;
    let path = cfg
        .data
        .root
        .join(format!("probe-{res}-{}.safetensors", &digest_of(&cfg.probe)[..12]));
    if path.exists() {
        return FamilyProbe::load(&path);
    }
    log::info!("training background probe");
    let probe = FamilyProbe::train(res, &cfg.probe)?;
    fs::create_dir_all(&cfg.data.root).map_err(|e| Error::io(&cfg.data.root, e))?;
    probe.save(&path)?;
    Ok(probe)
}

/// Side-by-side strip per condition: reference, target, generation-branch
/// and composition-branch samples.
pub fn sample_sheet(pairs: &[TrainingPair], samples: &[ConditionSamples]) -> Result<RgbImage> {
    let n = pairs.len().min(samples.len());
    if n == 0 {
        return Err(Error::invalid("samples", "nothing to show"));
    }
    let res = pairs[0].resolution();
    let mut sheet = RgbImage::zeros(4 * res, n * res);
    for (row, (p, s)) in pairs.iter().zip(samples).take(n).enumerate() {
        for (col, img) in [p.reference.to_rgb(), p.target.clone(), s.generation.clone(), s.composition.clone()]
            .iter()
            .enumerate()
        {
            for y in 0..res {
                for x in 0..res {
                    sheet
                        .pixel_mut(col * res + x, row * res + y)
                        .copy_from_slice(img.pixel(x, y));
                }
            }
        }
    }
    Ok(sheet)
}

/// Evaluates a checkpoint on the held-out set and writes the report files
/// and a sample sheet into `out`.
pub fn eval_run(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<MetricsReport> {
    let ckpt = Checkpoint::load(checkpoint)?;
    ckpt.check_digest(&cfg.architecture_digest())?;
    let model = CustomNet::new(ckpt.meta.model.clone())?;
    let schedule = NoiseSchedule::from_config(&ckpt.meta.schedule)?;
    let manifest = eval_dataset(cfg)?;
    let probe = cached_probe(cfg)?;
    if !probe.passes_gate(&cfg.probe) {
        log::warn!("probe gate {:.4} below {}", probe.gate_score, cfg.probe.gate);
    }
    let (mut report, samples) = build_report(
        &manifest,
        &cfg.training_seeds(),
        &model,
        ckpt.inference_params(),
        &schedule,
        &probe,
        &cfg.eval,
        &cfg.digest(),
    )?;
    report.probe_gate = probe.gate_score;
    report.write(out)?;
    let path = out.join(REPORT_FILE);
    fs::write(&path, serde_json::to_string(&report)?).map_err(|e| Error::io(&path, e))?;
    let shown = manifest.load_all()?.into_iter().take(8).collect::<Vec<_>>();
    sample_sheet(&shown, &samples)?.save_png(&out.join("samples.png"))?;
    Ok(report)
}

pub fn load_report(dir: &Path) -> Result<MetricsReport> {
    let path = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Experiment arms: the full model and single-factor ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    Full,
    NoPose,
    NoPretrain,
    NoConcat,
    NoNaturalPipeline,
    MergedAttention,
}

/// The arms run by the `ablate` command.
pub const ABLATION_ARMS: [Arm; 4] = [Arm::NoPretrain, Arm::NoConcat, Arm::NoNaturalPipeline, Arm::MergedAttention];

impl Arm {
    pub const ALL: [Arm; 6] = [
        Arm::Full,
        Arm::NoPose,
        Arm::NoPretrain,
        Arm::NoConcat,
        Arm::NoNaturalPipeline,
        Arm::MergedAttention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Full => "full",
            Arm::NoPose => "no-pose",
            Arm::NoPretrain => "no-pretrain",
            Arm::NoConcat => "no-concat",
            Arm::NoNaturalPipeline => "no-natural-pipeline",
            Arm::MergedAttention => "merged-attention",
        }
    }

    /// The configuration of this arm derived from the full one.
    pub fn apply(self, cfg: &RunConfig) -> RunConfig {
        let mut c = cfg.clone();
        match self {
            Arm::Full => {}
            Arm::NoPose => c.model.use_pose = false,
            Arm::NoPretrain => c.train.pretrain_steps = 0,
            Arm::NoConcat => c.model.concat_object = false,
            Arm::NoNaturalPipeline => c.data.natural = false,
            Arm::MergedAttention => c.model.unet.attention = crate::diffusion::AttentionMode::Merged,
        }
        c
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid("arm", format!("unknown arm {s:?}")))
    }
}

/// Trains (or resumes) and evaluates one arm under `root/<arm>`. A finished
/// evaluation is reused.
pub fn run_arm(base: &RunConfig, arm: Arm, root: &Path) -> Result<MetricsReport> {
    let cfg = arm.apply(base);
    let dir = root.join(arm.name());
    if dir.join(CONFIG_FILE).exists() {
        let recorded = read_run_config(&dir)?;
        if recorded.digest() != cfg.digest() {
            return Err(Error::DigestMismatch {
                expected: recorded.digest(),
                found: cfg.digest(),
            });
        }
    } else {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_config(&dir, &cfg)?;
    }
    let eval_dir = dir.join("eval");
    if eval_dir.join(REPORT_FILE).exists() {
        return load_report(&eval_dir);
    }
    let outcome = train_run(&cfg, &dir)?;
    log::info!("{}: trained {} steps, final loss {:.4}", arm.name(), outcome.steps, outcome.final_loss);
    eval_run(&cfg, &outcome.checkpoint, &eval_dir)
}
