//! Held-out evaluation: sampling both branches per condition, scoring every
//! axis, and writing the row CSV and JSON summary.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::Path;

use customnet_autograd::ParamStore;
use serde::{Deserialize, Serialize};

use super::metrics::{
    background_text_score, composition_fidelity, identity_score, location_iou, view_fidelity, BackgroundProbe,
    ObjectEncoder,
};
use crate::conditioning::{Branch, ConditionBundle};
use crate::datapipe::{scene_view, DatasetManifest, TrainingPair};
use crate::diffusion::{sample_batch, CustomNet, NoiseSchedule, SamplerConfig};
use crate::digest::digest_of;
use crate::error::{Error, Result};
use crate::world::RgbImage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub conditions: usize,
    /// Seed of the held-out manifest; must differ from every training seed.
    pub seed: u64,
    pub sampler: SamplerConfig,
    /// Foreground threshold in `[0, 1]` units.
    pub tau: f64,
    pub open_radius: usize,
    /// Rows with an azimuth change at least this large enter the view
    /// fidelity comparison.
    pub large_azimuth: f64,
    pub sample_seed: u64,
    /// Conditions sampled together.
    pub chunk: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            conditions: 200,
            seed: 9_000_001,
            sampler: SamplerConfig::default(),
            tau: 0.1,
            open_radius: 1,
            large_azimuth: FRAC_PI_2,
            sample_seed: 77,
            chunk: 16,
        }
    }
}

/// One held-out condition. Identity and background scores come from the
/// generation-branch sample, the rest from the composition-branch sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub id: String,
    pub azimuth_distance: f64,
    pub identity: f64,
    /// Same crop against the next row's reference.
    pub cross_identity: f64,
    pub view_fidelity_target: f64,
    pub view_fidelity_source: f64,
    pub location_iou: f64,
    pub location_empty: bool,
    pub background_score: f64,
    pub composition_mse: f64,
}

pub const CSV_HEADER: &str = "id,azimuth_distance,identity,cross_identity,view_fidelity_target,view_fidelity_source,location_iou,location_empty,background_score,composition_mse";

impl MetricsRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.id,
            self.azimuth_distance,
            self.identity,
            self.cross_identity,
            self.view_fidelity_target,
            self.view_fidelity_source,
            self.location_iou,
            self.location_empty,
            self.background_score,
            self.composition_mse
        )
    }

    fn is_finite(&self) -> bool {
        [
            self.azimuth_distance,
            self.identity,
            self.cross_identity,
            self.view_fidelity_target,
            self.view_fidelity_source,
            self.location_iou,
            self.background_score,
            self.composition_mse,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, std: 0.0, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Self { mean, std: var.sqrt(), n }
    }
}

/// Headline numbers of the large-scale reference system. They need
/// pretrained web-scale encoders and are shown for orientation only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRegime {
    pub dino_i: f64,
    pub clip_i: f64,
    pub clip_t: f64,
    pub note: String,
}

impl Default for ReferenceRegime {
    fn default() -> Self {
        Self {
            dino_i: 0.7742,
            clip_i: 0.8164,
            clip_t: 0.2258,
            note: "reference regime (pretrained encoders, 256x256); not comparable and not gating".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub aggregates: BTreeMap<String, Aggregate>,
    pub config_digest: String,
    pub sample_count: usize,
    pub reference_regime: ReferenceRegime,
    /// Held-out accuracy mass of the background probe used for scoring.
    #[serde(default)]
    pub probe_gate: f64,
}

/// Aggregates recomputed from rows; `large_azimuth` selects the view rows.
pub fn aggregate_rows(rows: &[MetricsRow], large_azimuth: f64) -> BTreeMap<String, Aggregate> {
    let col = |f: &dyn Fn(&MetricsRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let large: Vec<&MetricsRow> = rows.iter().filter(|r| r.azimuth_distance >= large_azimuth).collect();
    let col_large = |f: &dyn Fn(&MetricsRow) -> f64| large.iter().map(|r| f(r)).collect::<Vec<_>>();
    let mut a = BTreeMap::new();
    a.insert("identity".into(), Aggregate::of(&col(&|r| r.identity)));
    a.insert("cross_identity".into(), Aggregate::of(&col(&|r| r.cross_identity)));
    a.insert("identity_margin".into(), Aggregate::of(&col(&|r| r.identity - r.cross_identity)));
    a.insert("view_fidelity_target".into(), Aggregate::of(&col(&|r| r.view_fidelity_target)));
    a.insert("view_fidelity_source".into(), Aggregate::of(&col(&|r| r.view_fidelity_source)));
    a.insert("view_fidelity_target_large".into(), Aggregate::of(&col_large(&|r| r.view_fidelity_target)));
    a.insert("view_fidelity_source_large".into(), Aggregate::of(&col_large(&|r| r.view_fidelity_source)));
    a.insert("location_iou".into(), Aggregate::of(&col(&|r| r.location_iou)));
    a.insert("location_empty".into(), Aggregate::of(&col(&|r| r.location_empty as u8 as f64)));
    a.insert("background_score".into(), Aggregate::of(&col(&|r| r.background_score)));
    a.insert("composition_mse".into(), Aggregate::of(&col(&|r| r.composition_mse)));
    a
}

impl MetricsReport {
    pub fn from_rows(rows: Vec<MetricsRow>, config_digest: String, large_azimuth: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("eval_manifest", "no samples to evaluate"));
        }
        if let Some(r) = rows.iter().find(|r| !r.is_finite()) {
            return Err(Error::invalid("metrics", format!("row {} has a non-finite score", r.id)));
        }
        Ok(Self {
            aggregates: aggregate_rows(&rows, large_azimuth),
            sample_count: rows.len(),
            rows,
            config_digest,
            reference_regime: ReferenceRegime::default(),
            probe_gate: 0.0,
        })
    }

    pub fn mean(&self, key: &str) -> f64 {
        self.aggregates.get(key).map_or(f64::NAN, |a| a.mean)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.csv());
        }
        out
    }

    /// `{metric: {mean, std, n}}` plus report metadata.
    pub fn summary_json(&self) -> Result<String> {
        let v = serde_json::json!({
            "metrics": self.aggregates,
            "config_digest": self.config_digest,
            "sample_count": self.sample_count,
            "reference_regime": self.reference_regime,
            "probe_gate": self.probe_gate,
            "report_digest": self.digest(),
        });
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn digest(&self) -> String {
        digest_of(self)
    }

    /// Writes `metrics.csv` and `metrics.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("metrics.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join("metrics.json");
        std::fs::write(&json, self.summary_json()?).map_err(|e| Error::io(&json, e))
    }
}

/// Parses rows back from [`MetricsReport::to_csv`] output.
pub fn rows_from_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::invalid("csv", "unexpected header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 10 {
                return Err(Error::invalid("csv", format!("expected 10 fields: {l}")));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| Error::invalid("csv", format!("bad number {}", f[i])));
            Ok(MetricsRow {
                id: f[0].to_string(),
                azimuth_distance: num(1)?,
                identity: num(2)?,
                cross_identity: num(3)?,
                view_fidelity_target: num(4)?,
                view_fidelity_source: num(5)?,
                location_iou: num(6)?,
                location_empty: f[7] == "true",
                background_score: num(8)?,
                composition_mse: num(9)?,
            })
        })
        .collect()
}

/// Generated images of one condition.
#[derive(Clone, Debug)]
pub struct ConditionSamples {
    pub generation: RgbImage,
    pub composition: RgbImage,
}

/// Scores one condition given its samples.
#[allow(clippy::too_many_arguments)]
pub fn score_condition(
    pair: &TrainingPair,
    other: &TrainingPair,
    samples: &ConditionSamples,
    encoder: &ObjectEncoder<'_>,
    probe: &dyn BackgroundProbe,
    cfg: &EvalConfig,
) -> Result<MetricsRow> {
    let (scene, bg) = match (&pair.scene, &pair.background) {
        (Some(s), Some(b)) => (s, b),
        _ => return Err(Error::invalid("eval_manifest", format!("{}: held-out pairs need a scene and a background", pair.id))),
    };
    let res = pair.resolution();
    let gen = &samples.generation;
    let comp = &samples.composition;
    let source = scene_view(scene, &pair.src_pose, &pair.bbox, res)?.quantized();
    let (vt, vs) = view_fidelity(comp, &pair.bbox, &pair.target, &source)?;
    let loc = location_iou(comp, bg, &pair.bbox, cfg.tau, cfg.open_radius)?;
    Ok(MetricsRow {
        id: pair.id.clone(),
        azimuth_distance: pair.rel_pose().azimuth_distance(),
        identity: identity_score(encoder, gen, &pair.bbox, &pair.reference)?,
        cross_identity: identity_score(encoder, gen, &pair.bbox, &other.reference)?,
        view_fidelity_target: vt,
        view_fidelity_source: vs,
        location_iou: loc.iou,
        location_empty: loc.empty,
        background_score: background_text_score(probe, gen, &pair.bbox, pair.caption.family())?,
        composition_mse: composition_fidelity(comp, bg, &pair.bbox)?,
    })
}

/// Samples both branches for every held-out condition and scores them.
/// Sample seeds are `sample_seed + index`, so rows do not depend on the
/// chunking.
#[allow(clippy::too_many_arguments)]
pub fn build_report(
    manifest: &DatasetManifest,
    train_seeds: &[u64],
    model: &CustomNet,
    params: &ParamStore<f32>,
    schedule: &NoiseSchedule,
    probe: &dyn BackgroundProbe,
    cfg: &EvalConfig,
    config_digest: &str,
) -> Result<(MetricsReport, Vec<ConditionSamples>)> {
    if manifest.len() == 0 {
        return Err(Error::invalid("eval_manifest", "no samples to evaluate"));
    }
    if train_seeds.contains(&manifest.header.seed) {
        return Err(Error::invalid(
            "eval_seed",
            format!("seed {} is also a training seed", manifest.header.seed),
        ));
    }
    let pairs = manifest.load_all()?;
    let encoder = ObjectEncoder {
        params,
        config: &model.config.encoders,
    };
    let mut samples = Vec::with_capacity(pairs.len());
    for (c, chunk) in pairs.chunks(cfg.chunk.max(1)).enumerate() {
        let seeds: Vec<u64> = (0..chunk.len())
            .map(|i| cfg.sample_seed + (c * cfg.chunk.max(1) + i) as u64)
            .collect();
        let mut per_branch = Vec::new();
        for branch in [Branch::Generation, Branch::Composition] {
            let bundles = chunk
                .iter()
                .map(|p| ConditionBundle::from_pair(p, branch))
                .collect::<Result<Vec<_>>>()?;
            per_branch.push(sample_batch(model, params, schedule, &bundles, &seeds, &cfg.sampler)?);
        }
        let comp = per_branch.pop().expect("two branches");
        let gen = per_branch.pop().expect("two branches");
        samples.extend(gen.into_iter().zip(comp).map(|(generation, composition)| ConditionSamples { generation, composition }));
        log::info!("eval: sampled {}/{}", samples.len(), pairs.len());
    }
    let n = pairs.len();
    let rows = (0..n)
        .map(|i| score_condition(&pairs[i], &pairs[(i + 1) % n], &samples[i], &encoder, probe, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok((MetricsReport::from_rows(rows, config_digest.to_string(), cfg.large_azimuth)?, samples))
}
