use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use customnet::config::RunConfig;
use customnet::experiment::{
    create_run_dir, eval_dataset, eval_run, pretrain_dataset, read_run_config, run_arm, train_dataset,
    train_run, Arm, ABLATION_ARMS, CHECKPOINT_FILE, CONFIG_FILE,
};
use customnet::service::{AppState, SampleRequest, WireBBox};
use customnet::world::{RgbImage, RgbaImage};
use customnet::{Error, Result};

#[derive(Parser)]
#[command(name = "customnet", version, about = "Object customization diffusion at desk scale")]
struct Cli {
    /// TOML config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.steps=100`.
    #[arg(long = "set", global = true)]
    sets: Vec<String>,
    /// Parent directory of timestamped run directories.
    #[arg(long, global = true, default_value = "runs")]
    runs: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build (or reuse) the cached pretraining, training and eval datasets.
    BuildData,
    /// Train a model; `--resume` continues an existing run directory.
    Train {
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate one image.
    Sample(SampleArgs),
    /// Evaluate a trained run on the held-out conditions.
    Eval {
        #[arg(long)]
        run: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        addr: Option<String>,
    },
    /// Train and evaluate ablation arms.
    Ablate {
        /// Arms to run; defaults to the four ablations.
        #[arg(long, value_delimiter = ',')]
        arms: Vec<String>,
        /// Continue an existing ablation directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Run directory holding config.toml and checkpoint.safetensors.
    #[arg(long)]
    run: Option<PathBuf>,
    /// Checkpoint file, used with the global config.
    #[arg(long, conflicts_with = "run")]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    object_id: Option<String>,
    /// RGBA PNG reference at model resolution.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Δθ,Δφ,Δr
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0.0, 0.0, 0.0])]
    rel_pose: Vec<f64>,
    /// x,y,w,h in normalized coordinates.
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.25, 0.5, 0.5])]
    bbox: Vec<f64>,
    #[arg(long)]
    prompt: Option<String>,
    /// RGB PNG background at model resolution.
    #[arg(long)]
    background: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    guidance: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_config(cli: &Cli, run: Option<&Path>) -> Result<RunConfig> {
    match run {
        Some(dir) => {
            let path = dir.join(CONFIG_FILE);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            RunConfig::resolve(Some(&text), std::env::vars(), &cli.sets)
        }
        None => RunConfig::load(cli.config.as_deref(), &cli.sets),
    }
}

fn load_model(cli: &Cli, m: &ModelArgs) -> Result<AppState> {
    let (cfg, ckpt) = match (&m.run, &m.checkpoint) {
        (Some(run), _) => (load_config(cli, Some(run))?, run.join(CHECKPOINT_FILE)),
        (None, Some(ckpt)) => (load_config(cli, None)?, ckpt.clone()),
        (None, None) => return Err(Error::invalid("checkpoint", "give --run or --checkpoint")),
    };
    AppState::load(cfg, &ckpt)
}

fn b64_png(path: &Path, rgba: bool) -> Result<String> {
    use base64::Engine;
    let bytes = if rgba {
        RgbaImage::load_png(path)?.png_bytes()?
    } else {
        RgbImage::load_png(path)?.png_bytes()?
    };
    Ok(base64::engine::general_purpose::STANDARD.encode(bytes))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::BuildData => {
            let cfg = load_config(cli, None)?;
            cfg.validate()?;
            let dir = create_run_dir(&cli.runs, "build-data", &cfg)?;
            let mut built = serde_json::Map::new();
            if cfg.train.pretrain_steps > 0 {
                built.insert("pretrain".into(), pretrain_dataset(&cfg)?.dir.display().to_string().into());
            }
            built.insert("train".into(), train_dataset(&cfg)?.dir.display().to_string().into());
            built.insert("eval".into(), eval_dataset(&cfg)?.dir.display().to_string().into());
            write_json(&dir.join("datasets.json"), &built)?;
            println!("{}", dir.display());
        }
        Command::Train { resume } => {
            let (cfg, dir) = match resume {
                Some(dir) => (read_run_config(dir)?, dir.clone()),
                None => {
                    let cfg = load_config(cli, None)?;
                    cfg.validate()?;
                    let dir = create_run_dir(&cli.runs, "train", &cfg)?;
                    (cfg, dir)
                }
            };
            let outcome = train_run(&cfg, &dir)?;
            write_json(&dir.join("train.json"), &outcome)?;
            println!("{}", dir.display());
        }
        Command::Sample(a) => {
            if a.rel_pose.len() != 3 {
                return Err(Error::invalid("rel_pose", "expected dtheta,dphi,dradius"));
            }
            if a.bbox.len() != 4 {
                return Err(Error::invalid("bbox", "expected x,y,w,h"));
            }
            let state = load_model(cli, &a.model)?;
            let req = SampleRequest {
                object_id: a.object_id.clone(),
                reference: a.reference.as_deref().map(|p| b64_png(p, true)).transpose()?,
                rel_pose: [a.rel_pose[0], a.rel_pose[1], a.rel_pose[2]],
                bbox: WireBBox {
                    x: a.bbox[0],
                    y: a.bbox[1],
                    w: a.bbox[2],
                    h: a.bbox[3],
                },
                prompt: a.prompt.clone(),
                background: a.background.as_deref().map(|p| b64_png(p, false)).transpose()?,
                steps: a.steps,
                guidance: a.guidance,
                seed: a.seed,
            };
            let img = state.generate(&req)?;
            let dir = create_run_dir(&cli.runs, "sample", &state.config)?;
            write_json(&dir.join("request.json"), &req)?;
            let out = dir.join("sample.png");
            img.save_png(&out)?;
            println!("{}", out.display());
        }
        Command::Eval { run } => {
            let cfg = load_config(cli, Some(run))?;
            let dir = create_run_dir(run, "eval", &cfg)?;
            let report = eval_run(&cfg, &run.join(CHECKPOINT_FILE), &dir)?;
            println!("{}", report.summary_json()?);
            println!("{}", dir.display());
        }
        Command::Serve { model, addr } => {
            let state = load_model(cli, model)?;
            let addr = addr.clone().unwrap_or_else(|| state.config.service.addr.clone());
            let addr = addr
                .parse()
                .map_err(|e| Error::invalid("service.addr", format!("{addr:?}: {e}")))?;
            let dir = create_run_dir(&cli.runs, "serve", &state.config)?;
            write_json(
                &dir.join("serve.json"),
                &serde_json::json!({"addr": addr, "checkpoint_digest": state.checkpoint_digest}),
            )?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            rt.block_on(customnet::service::serve(Arc::new(state), addr))?;
        }
        Command::Ablate { arms, resume } => {
            let arms: Vec<Arm> = if arms.is_empty() {
                ABLATION_ARMS.to_vec()
            } else {
                arms.iter().map(|a| a.parse()).collect::<Result<_>>()?
            };
            let (cfg, dir) = match resume {
                Some(dir) => (read_run_config(dir)?, dir.clone()),
                None => {
                    let cfg = load_config(cli, None)?;
                    cfg.validate()?;
                    (cfg.clone(), create_run_dir(&cli.runs, "ablate", &cfg)?)
                }
            };
            let mut summary = serde_json::Map::new();
            for arm in arms {
                let report = run_arm(&cfg, arm, &dir)?;
                summary.insert(arm.name().into(), serde_json::from_str(&report.summary_json()?)?);
            }
            write_json(&dir.join("ablation.json"), &summary)?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error: kind=usage message={first:?}");
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
