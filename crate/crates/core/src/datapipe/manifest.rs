//! On-disk datasets: one PNG per image plus a JSON-lines manifest whose
//! first line is a header.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::natural::{build_natural_pair, generate_scene, RenderSynthesizer, SceneCaptioner};
use super::pair::{build_synthetic_pair, DataConfig, Provenance, SceneInfo, TrainingPair};
use super::BBox;
use crate::camera::SphericalPose;
use crate::digest::{digest_of, sha256_hex};
use crate::error::{Error, Result};
use crate::world::{Caption, RgbImage, RgbaImage};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Synthetic,
    Natural,
    Mixed,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(Self::Synthetic),
            "natural" => Ok(Self::Natural),
            "mixed" => Ok(Self::Mixed),
            _ => Err(Error::invalid("kind", format!("{s:?} is not synthetic, natural or mixed"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub version: u32,
    pub kind: DatasetKind,
    pub n: usize,
    pub seed: u64,
    pub config_digest: String,
    pub resolution: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub ref_path: String,
    pub tgt_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bg_path: Option<String>,
    pub theta_src: f64,
    pub phi_src: f64,
    pub r_src: f64,
    pub theta_dst: f64,
    pub phi_dst: f64,
    pub r_dst: f64,
    pub bbox: BBox,
    pub caption: Caption,
    pub provenance: Provenance,
    /// File name stem (`ref`, `tgt`, `bg`) to SHA-256 hex.
    pub sha256s: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneInfo>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub dir: PathBuf,
    pub header: ManifestHeader,
    pub records: Vec<ManifestRecord>,
}

/// Whether record `i` of a mixed dataset is synthetic. Spreads the
/// `a : b` ratio evenly so every prefix is as close to it as possible.
pub fn mixed_is_synthetic(i: usize, ratio: [u32; 2]) -> bool {
    let (a, t) = (ratio[0] as usize, (ratio[0] + ratio[1]) as usize);
    (i + 1) * a / t > i * a / t
}

/// Rng for record `index`, independent of generation order.
pub fn record_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn record_id(index: usize) -> String {
    format!("{index:06}")
}

/// Generates pair `index` of a dataset in memory.
pub fn generate_pair(kind: DatasetKind, index: usize, seed: u64, cfg: &DataConfig) -> Result<TrainingPair> {
    let synthetic = match kind {
        DatasetKind::Synthetic => true,
        DatasetKind::Natural => false,
        DatasetKind::Mixed => mixed_is_synthetic(index, cfg.mixed_ratio),
    };
    let mut rng = record_rng(seed, index);
    let id = record_id(index);
    if synthetic {
        build_synthetic_pair(&mut rng, cfg, id)
    } else {
        let source = generate_scene(&mut rng, cfg)?;
        let synth = RenderSynthesizer { config: cfg.clone() };
        build_natural_pair(&source, &mut rng, cfg, &synth, &SceneCaptioner, id)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<String> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(bytes))
}

fn write_pair(dir: &Path, pair: &TrainingPair) -> Result<ManifestRecord> {
    let mut sha = BTreeMap::new();
    let rel = |stem: &str| format!("images/{}_{stem}.png", pair.id);
    let ref_path = rel("ref");
    sha.insert("ref".into(), write_file(&dir.join(&ref_path), &pair.reference.png_bytes()?)?);
    let tgt_path = rel("tgt");
    sha.insert("tgt".into(), write_file(&dir.join(&tgt_path), &pair.target.png_bytes()?)?);
    let bg_path = match &pair.background {
        Some(bg) => {
            let p = rel("bg");
            sha.insert("bg".into(), write_file(&dir.join(&p), &bg.png_bytes()?)?);
            Some(p)
        }
        None => None,
    };
    Ok(ManifestRecord {
        id: pair.id.clone(),
        ref_path,
        tgt_path,
        bg_path,
        theta_src: pair.src_pose.theta(),
        phi_src: pair.src_pose.phi(),
        r_src: pair.src_pose.radius(),
        theta_dst: pair.dst_pose.theta(),
        phi_dst: pair.dst_pose.phi(),
        r_dst: pair.dst_pose.radius(),
        bbox: pair.bbox,
        caption: pair.caption.clone(),
        provenance: pair.provenance,
        sha256s: sha,
        scene: pair.scene.clone(),
    })
}

fn partial_dir(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    out.with_file_name(name)
}

/// Builds `n` pairs into `out`. The directory must not exist; output is
/// staged in a sibling `.partial` directory that is removed on failure.
pub fn build_dataset(kind: DatasetKind, n: usize, seed: u64, cfg: &DataConfig, out: &Path) -> Result<DatasetManifest> {
    if n == 0 {
        return Err(Error::invalid("n", "dataset needs at least one record"));
    }
    if kind == DatasetKind::Mixed && cfg.mixed_ratio.iter().sum::<u32>() == 0 {
        return Err(Error::invalid("mixed_ratio", "ratio must have a positive total"));
    }
    if out.exists() {
        return Err(Error::invalid("out", format!("{} already exists", out.display())));
    }
    let stage = partial_dir(out);
    if stage.exists() {
        fs::remove_dir_all(&stage).map_err(|e| Error::io(&stage, e))?;
    }
    let result = stage_dataset(kind, n, seed, cfg, &stage);
    match result {
        Ok(mut manifest) => {
            fs::rename(&stage, out).map_err(|e| Error::io(out, e))?;
            manifest.dir = out.to_path_buf();
            Ok(manifest)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&stage);
            Err(e)
        }
    }
}

fn stage_dataset(kind: DatasetKind, n: usize, seed: u64, cfg: &DataConfig, dir: &Path) -> Result<DatasetManifest> {
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let records = (0..n)
        .into_par_iter()
        .map(|i| write_pair(dir, &generate_pair(kind, i, seed, cfg)?))
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        dir: dir.to_path_buf(),
        header: ManifestHeader {
            version: MANIFEST_VERSION,
            kind,
            n,
            seed,
            config_digest: digest_of(cfg),
            resolution: cfg.resolution,
        },
        records,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(&manifest.to_jsonl()?).map_err(|e| Error::io(&path, e))?;
    f.sync_all().map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

impl DatasetManifest {
    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(&self.header)?;
        out.push(b'\n');
        for r in &self.records {
            out.extend(serde_json::to_vec(r)?);
            out.push(b'\n');
        }
        Ok(out)
    }

    /// SHA-256 of the manifest file contents.
    pub fn digest(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_jsonl()?))
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        let header: ManifestHeader = serde_json::from_str(lines.next().ok_or_else(|| Error::CorruptDataset {
            record: "header".into(),
            reason: "empty manifest".into(),
        })?)?;
        if header.version != MANIFEST_VERSION {
            return Err(Error::CorruptDataset {
                record: "header".into(),
                reason: format!("version {} unsupported", header.version),
            });
        }
        let records = lines
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::CorruptDataset {
                    record: format!("line {}", i + 2),
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<ManifestRecord>>>()?;
        if records.len() != header.n {
            return Err(Error::CorruptDataset {
                record: "header".into(),
                reason: format!("header says {} records, found {}", header.n, records.len()),
            });
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            header,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn read_checked(&self, rec: &ManifestRecord, stem: &str, rel: &str) -> Result<Vec<u8>> {
        let path = self.dir.join(rel);
        let bytes = fs::read(&path).map_err(|e| Error::CorruptDataset {
            record: rec.id.clone(),
            reason: format!("{}: {e}", path.display()),
        })?;
        let want = rec.sha256s.get(stem).ok_or_else(|| Error::CorruptDataset {
            record: rec.id.clone(),
            reason: format!("no checksum for {stem}"),
        })?;
        let got = sha256_hex(&bytes);
        if &got != want {
            return Err(Error::CorruptDataset {
                record: rec.id.clone(),
                reason: format!("{rel} checksum {got} != recorded {want}"),
            });
        }
        Ok(bytes)
    }

    /// Reads and checksums one record.
    pub fn load_pair(&self, index: usize) -> Result<TrainingPair> {
        let rec = &self.records[index];
        let corrupt = |reason: String| Error::CorruptDataset {
            record: rec.id.clone(),
            reason,
        };
        let reference = RgbaImage::from_png_bytes(&self.read_checked(rec, "ref", &rec.ref_path)?)?;
        let target = RgbImage::from_png_bytes(&self.read_checked(rec, "tgt", &rec.tgt_path)?)?;
        let background = match &rec.bg_path {
            Some(p) => Some(RgbImage::from_png_bytes(&self.read_checked(rec, "bg", p)?)?),
            None => None,
        };
        let pose = |t, p, r| SphericalPose::new(t, p, r).map_err(|e| corrupt(e.to_string()));
        let pair = TrainingPair {
            id: rec.id.clone(),
            reference,
            target,
            src_pose: pose(rec.theta_src, rec.phi_src, rec.r_src)?,
            dst_pose: pose(rec.theta_dst, rec.phi_dst, rec.r_dst)?,
            bbox: rec.bbox,
            caption: rec.caption.clone(),
            background,
            provenance: rec.provenance,
            scene: rec.scene.clone(),
        };
        pair.validate().map_err(|e| corrupt(e.to_string()))?;
        Ok(pair)
    }

    pub fn load_all(&self) -> Result<Vec<TrainingPair>> {
        (0..self.len()).into_par_iter().map(|i| self.load_pair(i)).collect()
    }

    /// Checks every file against its recorded checksum.
    pub fn verify(&self) -> Result<()> {
        for rec in &self.records {
            self.read_checked(rec, "ref", &rec.ref_path)?;
            self.read_checked(rec, "tgt", &rec.tgt_path)?;
            if let Some(p) = &rec.bg_path {
                self.read_checked(rec, "bg", p)?;
            }
        }
        Ok(())
    }
}

/// Permutation of `0..n` determined by `seed`.
pub fn shuffled_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// One shuffled pass over a manifest in batches; the last batch may be
/// short.
pub struct BatchIter<'a> {
    manifest: &'a DatasetManifest,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Vec<TrainingPair>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        Some(idx.iter().map(|&i| self.manifest.load_pair(i)).collect())
    }
}

pub fn load_batches(manifest: &DatasetManifest, batch_size: usize, shuffle_seed: u64) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be positive"));
    }
    Ok(BatchIter {
        manifest,
        order: shuffled_order(manifest.len(), shuffle_seed),
        pos: 0,
        batch_size,
    })
}

/// Endless sequence of index batches over `n` items: each epoch is a fresh
/// permutation derived from `(seed, epoch)`, so the stream can be resumed
/// from its `(epoch, offset)` position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochStream {
    pub n: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub epoch: u64,
    pub offset: usize,
    #[serde(skip)]
    order: Vec<usize>,
}

impl EpochStream {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        assert!(n > 0 && batch_size > 0);
        Self {
            n,
            batch_size,
            seed,
            epoch: 0,
            offset: 0,
            order: Vec::new(),
        }
    }

    fn epoch_order(&self) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.epoch);
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Next batch of exactly `batch_size` indices, crossing epoch
    /// boundaries as needed.
    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch_size);
        while out.len() < self.batch_size {
            if self.order.is_empty() {
                self.order = self.epoch_order();
            }
            let take = (self.batch_size - out.len()).min(self.n - self.offset);
            out.extend_from_slice(&self.order[self.offset..self.offset + take]);
            self.offset += take;
            if self.offset == self.n {
                self.offset = 0;
                self.epoch += 1;
                self.order.clear();
            }
        }
        out
    }
}
