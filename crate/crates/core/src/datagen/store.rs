//! On-disk dataset layout.
//!
//! `manifest.json` holds the spec, seed, split ids and one entry per array
//! file. Array files are raw little-endian `f64` in row-major order; each
//! file's SHA-256 is checked on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dataset, GeneratedData, GroundTruth, HierarchicalSample, Level, Procedure, ProcedureSpec};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_TAG: &str = "lecnce-dataset-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayEntry {
    pub file: String,
    pub sha256: String,
    /// Shapes of the arrays concatenated in the file, in order.
    pub shapes: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub level: Level,
    pub index: usize,
    pub step_labels: Vec<usize>,
    /// frames, parent, augmented parent, children.
    pub arrays: ArrayEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcedureEntry {
    pub id: usize,
    pub title: String,
    pub steps: Vec<usize>,
    pub samples: Vec<SampleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitIds {
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub spec: ProcedureSpec,
    pub split: SplitIds,
    /// concepts, visual map, text map.
    pub ground_truth: ArrayEntry,
    pub procedures: Vec<ProcedureEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn encode(arrays: &[&[f64]]) -> Vec<u8> {
    let total: usize = arrays.iter().map(|a| a.len()).sum();
    let mut out = Vec::with_capacity(total * 8);
    for a in arrays {
        for x in *a {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn write_arrays(dir: &Path, file: String, mats: &[&Matrix]) -> Result<ArrayEntry> {
    let slices: Vec<&[f64]> = mats.iter().map(|m| m.as_slice()).collect();
    let bytes = encode(&slices);
    fs::write(dir.join(&file), &bytes)?;
    Ok(ArrayEntry {
        file,
        sha256: sha256_hex(&bytes),
        shapes: mats.iter().map(|m| m.shape()).collect(),
    })
}

fn read_arrays(dir: &Path, entry: &ArrayEntry) -> Result<Vec<Matrix>> {
    if entry.file.contains('/') || entry.file.contains('\\') || entry.file.contains("..") {
        return Err(Error::Malformed(format!("illegal file name {:?}", entry.file)));
    }
    let bytes = fs::read(dir.join(&entry.file))?;
    let digest = sha256_hex(&bytes);
    if digest != entry.sha256 {
        return Err(Error::ChecksumMismatch(format!(
            "{}: expected {}, found {digest}",
            entry.file, entry.sha256
        )));
    }
    let expected: usize = entry.shapes.iter().map(|(r, c)| r * c * 8).sum();
    if bytes.len() != expected {
        return Err(Error::Malformed(format!(
            "{}: {} bytes, shapes require {expected}",
            entry.file,
            bytes.len()
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    entry
        .shapes
        .iter()
        .map(|&(r, c)| Matrix::from_vec(r, c, values.by_ref().take(r * c).collect()))
        .collect()
}

fn row_vector(v: &[f64]) -> Matrix {
    Matrix::from_vec(1, v.len(), v.to_vec()).expect("row vector")
}

/// Writes both splits under `dir` (created if missing).
pub fn save(dir: &Path, data: &GeneratedData) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let truth = &data.train.truth;
    let ground_truth = write_arrays(
        dir,
        "ground_truth.bin".into(),
        &[&truth.concepts, &truth.visual_map, &truth.text_map],
    )?;
    let mut all: Vec<&Procedure> = data
        .train
        .procedures
        .iter()
        .chain(&data.holdout.procedures)
        .collect();
    all.sort_by_key(|p| p.id);
    let mut procedures = Vec::with_capacity(all.len());
    for p in all {
        let mut samples = Vec::new();
        for level in Level::ALL {
            for (index, s) in p.samples(level).iter().enumerate() {
                let file = format!("p{:04}_{}_{:03}.bin", p.id, level.name(), index);
                let arrays = write_arrays(
                    dir,
                    file,
                    &[
                        &s.frame_features,
                        &row_vector(&s.parent_text_feature),
                        &row_vector(&s.parent_text_augmented),
                        &s.child_text_features,
                    ],
                )?;
                samples.push(SampleEntry {
                    level,
                    index,
                    step_labels: s.step_labels.clone(),
                    arrays,
                });
            }
        }
        procedures.push(ProcedureEntry {
            id: p.id,
            title: p.title.clone(),
            steps: p.steps.clone(),
            samples,
        });
    }
    let manifest = Manifest {
        format: FORMAT_TAG.into(),
        seed: data.train.spec.seed,
        spec: data.train.spec.clone(),
        split: SplitIds {
            train: data.train.procedure_ids(),
            holdout: data.holdout.procedure_ids(),
        },
        ground_truth,
        procedures,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

fn load_sample(dir: &Path, procedure_id: usize, e: &SampleEntry) -> Result<HierarchicalSample> {
    let mut arrays = read_arrays(dir, &e.arrays)?;
    if arrays.len() != 4 {
        return Err(Error::Malformed(format!(
            "{}: expected 4 arrays, found {}",
            e.arrays.file,
            arrays.len()
        )));
    }
    let children = arrays.pop().expect("4 arrays");
    let aug = arrays.pop().expect("4 arrays").into_vec();
    let parent = arrays.pop().expect("4 arrays").into_vec();
    let frames = arrays.pop().expect("4 arrays");
    if e.step_labels.len() != frames.rows() {
        return Err(Error::Malformed(format!(
            "{}: {} labels for {} frames",
            e.arrays.file,
            e.step_labels.len(),
            frames.rows()
        )));
    }
    Ok(HierarchicalSample {
        level: e.level,
        procedure_id,
        frame_features: frames,
        parent_text_feature: parent,
        parent_text_augmented: aug,
        child_text_features: children,
        step_labels: e.step_labels.clone(),
    })
}

pub fn load(dir: &Path) -> Result<GeneratedData> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT_TAG {
        return Err(Error::Malformed(format!(
            "unsupported dataset format {:?}",
            manifest.format
        )));
    }
    let mut gt = read_arrays(dir, &manifest.ground_truth)?;
    if gt.len() != 3 {
        return Err(Error::Malformed("ground truth needs 3 arrays".into()));
    }
    let text_map = gt.pop().expect("3 arrays");
    let visual_map = gt.pop().expect("3 arrays");
    let concepts = gt.pop().expect("3 arrays");
    let truth = GroundTruth {
        concepts,
        visual_map,
        text_map,
    };

    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for pe in &manifest.procedures {
        let mut clips = Vec::new();
        let mut phases = Vec::new();
        let mut videos = Vec::new();
        for se in &pe.samples {
            let s = load_sample(dir, pe.id, se)?;
            match se.level {
                Level::Clip => clips.push(s),
                Level::Phase => phases.push(s),
                Level::Video => videos.push(s),
            }
        }
        if videos.len() != 1 {
            return Err(Error::Malformed(format!(
                "procedure {} has {} video samples",
                pe.id,
                videos.len()
            )));
        }
        let p = Procedure {
            id: pe.id,
            title: pe.title.clone(),
            steps: pe.steps.clone(),
            clips,
            phases,
            video: videos.pop().expect("one video"),
        };
        if manifest.split.holdout.contains(&pe.id) {
            holdout.push(p);
        } else if manifest.split.train.contains(&pe.id) {
            train.push(p);
        } else {
            return Err(Error::Malformed(format!(
                "procedure {} is in neither split",
                pe.id
            )));
        }
    }
    let make = |procedures| Dataset {
        spec: manifest.spec.clone(),
        truth: truth.clone(),
        procedures,
    };
    Ok(GeneratedData {
        train: make(train),
        holdout: make(holdout),
    })
}
