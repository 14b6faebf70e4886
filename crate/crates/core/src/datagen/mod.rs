//! Synthetic procedural videos with known ground truth.
//!
//! A library of `S` step concepts lives on the unit sphere of a latent space.
//! A procedure is an ordered selection of `K` steps; every step is shown as a
//! few clips, each clip as a run of frames with a narration. Frames and texts
//! are the latent vectors pushed through fixed random linear rendering maps
//! (one visual, one textual) after adding Gaussian noise.
//!
//! Each clip also carries an instance offset drawn from the orthogonal
//! complement of the concept span and shared by its frames and its narration.
//! It leaves nearest-concept step identity untouched while making individual
//! clip/narration pairs distinguishable for retrieval.
//!
//! Three sample levels are produced per procedure:
//!
//! | level | frames          | parent text | children               |
//! |-------|-----------------|-------------|------------------------|
//! | clip  | one clip        | narration   | none                   |
//! | phase | one step        | keystep     | the step's narrations  |
//! | video | whole procedure | abstract    | the procedure keysteps |

pub mod store;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm, Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcedureSpec {
    /// Number of distinct step concepts `S`.
    pub step_library_size: usize,
    pub latent_dim: usize,
    pub visual_dim: usize,
    pub text_dim: usize,
    /// Steps per procedure `K`.
    pub steps_per_procedure: usize,
    pub frames_per_step: usize,
    /// Clips (and narrations) per step.
    pub narrations_per_step: usize,
    pub noise_sigma: f64,
    /// Clip instance offset scale, in units of `noise_sigma`.
    pub instance_scale: f64,
    /// Noise multiplier of the cleaned-up ("augmented") text renderings.
    pub augmented_noise_ratio: f64,
    /// Probability of swapping each adjacent pair of steps.
    pub order_noise: f64,
    pub min_concept_angle_deg: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for ProcedureSpec {
    fn default() -> Self {
        Self {
            step_library_size: 12,
            latent_dim: 16,
            visual_dim: 32,
            text_dim: 24,
            steps_per_procedure: 6,
            frames_per_step: 8,
            narrations_per_step: 2,
            noise_sigma: 0.1,
            instance_scale: 5.0,
            augmented_noise_ratio: 0.5,
            order_noise: 0.0,
            min_concept_angle_deg: 30.0,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

impl ProcedureSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InfeasibleSpec(msg));
        if self.step_library_size == 0 {
            return bad("step library is empty".into());
        }
        if self.steps_per_procedure == 0 || self.steps_per_procedure > self.step_library_size {
            return bad(format!(
                "steps_per_procedure {} must be in 1..={}",
                self.steps_per_procedure, self.step_library_size
            ));
        }
        if self.latent_dim < 2 || self.visual_dim < 2 || self.text_dim < 2 {
            return bad("all dimensions must be at least 2".into());
        }
        if self.visual_dim < self.latent_dim || self.text_dim < self.latent_dim {
            return bad(format!(
                "rendering maps must be injective: visual {} and text {} must be >= latent {}",
                self.visual_dim, self.text_dim, self.latent_dim
            ));
        }
        if self.narrations_per_step == 0 || self.frames_per_step < self.narrations_per_step {
            return bad(format!(
                "need 1 <= narrations_per_step ({}) <= frames_per_step ({})",
                self.narrations_per_step, self.frames_per_step
            ));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        if !(self.instance_scale >= 0.0) || !(self.augmented_noise_ratio >= 0.0) {
            return bad("instance_scale and augmented_noise_ratio must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.order_noise) {
            return bad(format!("order_noise {} outside [0, 1]", self.order_noise));
        }
        if !(0.0..90.0).contains(&self.min_concept_angle_deg) {
            return bad(format!(
                "min_concept_angle_deg {} outside [0, 90)",
                self.min_concept_angle_deg
            ));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad(format!(
                "holdout_fraction {} outside (0, 1)",
                self.holdout_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Clip,
    Phase,
    Video,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Clip, Level::Phase, Level::Video];

    pub fn name(self) -> &'static str {
        match self {
            Level::Clip => "clip",
            Level::Phase => "phase",
            Level::Video => "video",
        }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalSample {
    pub level: Level,
    pub procedure_id: usize,
    /// T × visual_dim.
    pub frame_features: Matrix,
    pub parent_text_feature: Vec<f64>,
    /// Lower-noise rendering of the same parent text.
    pub parent_text_augmented: Vec<f64>,
    /// N × text_dim in temporal order (N = 0 at clip level).
    pub child_text_features: Matrix,
    /// Step id per frame.
    pub step_labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Procedure {
    pub id: usize,
    pub title: String,
    /// Step ids in the order performed.
    pub steps: Vec<usize>,
    pub clips: Vec<HierarchicalSample>,
    pub phases: Vec<HierarchicalSample>,
    pub video: HierarchicalSample,
}

impl Procedure {
    pub fn samples(&self, level: Level) -> &[HierarchicalSample] {
        match level {
            Level::Clip => &self.clips,
            Level::Phase => &self.phases,
            Level::Video => std::slice::from_ref(&self.video),
        }
    }
}

/// Concepts and rendering maps shared by every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// S × latent_dim, unit rows.
    pub concepts: Matrix,
    /// visual_dim × latent_dim.
    pub visual_map: Matrix,
    /// text_dim × latent_dim.
    pub text_map: Matrix,
}

impl GroundTruth {
    /// Noise-free text rendering of every step concept, one row per class.
    pub fn class_prompt_features(&self) -> Matrix {
        render_rows(&self.text_map, &self.concepts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: ProcedureSpec,
    pub truth: GroundTruth,
    pub procedures: Vec<Procedure>,
}

impl Dataset {
    pub fn samples(&self, level: Level) -> impl Iterator<Item = &HierarchicalSample> {
        self.procedures.iter().flat_map(move |p| p.samples(level))
    }

    pub fn procedure_ids(&self) -> Vec<usize> {
        self.procedures.iter().map(|p| p.id).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub train: Dataset,
    pub holdout: Dataset,
}

/// `y = A·x` for each row `x`.
fn render_rows(map: &Matrix, latent_rows: &Matrix) -> Matrix {
    latent_rows.matmul_t(map).expect("latent dimension matches map")
}

fn render(map: &Matrix, latent: &[f64]) -> Vec<f64> {
    map.iter_rows().map(|r| dot(r, latent)).collect()
}

fn place_concepts(spec: &ProcedureSpec, rng: &mut Rng) -> Result<Matrix> {
    const MAX_ATTEMPTS: usize = 10_000;
    let max_cos = spec.min_concept_angle_deg.to_radians().cos();
    let mut concepts: Vec<Vec<f64>> = Vec::with_capacity(spec.step_library_size);
    while concepts.len() < spec.step_library_size {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let u = rng.unit_vector(spec.latent_dim);
            if concepts.iter().all(|c| dot(c, &u) <= max_cos) {
                concepts.push(u);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InfeasibleSpec(format!(
                "could not place concept {} of {} with pairwise angle >= {} degrees in {} dimensions",
                concepts.len() + 1,
                spec.step_library_size,
                spec.min_concept_angle_deg,
                spec.latent_dim
            )));
        }
    }
    Matrix::from_rows(&concepts)
}

/// Gram-Schmidt: orthonormal rows spanning `rows`, dropping dependent ones.
fn orthonormalize(rows: impl IntoIterator<Item = Vec<f64>>, basis: &mut Vec<Vec<f64>>) {
    for mut v in rows {
        for b in basis.iter() {
            let p = dot(&v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
}

/// Orthonormal basis of the orthogonal complement of the concept span.
fn concept_complement(concepts: &Matrix) -> Vec<Vec<f64>> {
    let d = concepts.cols();
    let mut span = Vec::new();
    orthonormalize(concepts.iter_rows().map(<[f64]>::to_vec), &mut span);
    let k = span.len();
    let axes = (0..d).map(|i| {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        e
    });
    orthonormalize(axes, &mut span);
    span.split_off(k)
}

fn rendering_map(rows: usize, latent: usize, rng: &mut Rng) -> Matrix {
    loop {
        let m = rng.normal_matrix(rows, latent, 1.0 / (latent as f64).sqrt());
        let mut basis = Vec::new();
        orthonormalize(m.transpose().iter_rows().map(<[f64]>::to_vec), &mut basis);
        if basis.len() == latent {
            return m;
        }
    }
}

struct Renderer<'a> {
    spec: &'a ProcedureSpec,
    truth: &'a GroundTruth,
    complement: &'a [Vec<f64>],
}

impl Renderer<'_> {
    fn noise(&self, rng: &mut Rng, scale: f64) -> Vec<f64> {
        (0..self.spec.latent_dim).map(|_| scale * rng.normal()).collect()
    }

    fn instance_offset(&self, rng: &mut Rng) -> Vec<f64> {
        let scale = self.spec.instance_scale * self.spec.noise_sigma;
        let mut off = vec![0.0; self.spec.latent_dim];
        for b in self.complement {
            let z = scale * rng.normal();
            for (o, e) in off.iter_mut().zip(b) {
                *o += z * e;
            }
        }
        off
    }

    /// `(original, augmented)` text features for a latent text meaning.
    fn text_pair(&self, rng: &mut Rng, meaning: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let eps = self.noise(rng, self.spec.noise_sigma);
        let r = self.spec.augmented_noise_ratio;
        let orig: Vec<f64> = meaning.iter().zip(&eps).map(|(m, e)| m + e).collect();
        let aug: Vec<f64> = meaning.iter().zip(&eps).map(|(m, e)| m + r * e).collect();
        (
            render(&self.truth.text_map, &orig),
            render(&self.truth.text_map, &aug),
        )
    }

    fn frames(&self, rng: &mut Rng, meaning: &[f64], count: usize) -> Matrix {
        let rows: Vec<Vec<f64>> = (0..count)
            .map(|_| {
                let eps = self.noise(rng, self.spec.noise_sigma);
                let latent: Vec<f64> = meaning.iter().zip(&eps).map(|(m, e)| m + e).collect();
                render(&self.truth.visual_map, &latent)
            })
            .collect();
        Matrix::from_rows(&rows).expect("equal row lengths")
    }

    fn procedure(&self, id: usize, rng: &mut Rng) -> Procedure {
        let spec = self.spec;
        let mut library: Vec<usize> = (0..spec.step_library_size).collect();
        rng.shuffle(&mut library);
        let mut steps = library[..spec.steps_per_procedure].to_vec();
        steps.sort_unstable();
        for k in 0..steps.len().saturating_sub(1) {
            if rng.bernoulli(spec.order_noise) {
                steps.swap(k, k + 1);
            }
        }

        let mut clips = Vec::new();
        let mut phases = Vec::new();
        let mut keysteps = Vec::new();
        let per = spec.narrations_per_step;
        for &s in &steps {
            let concept = self.truth.concepts.row(s).to_vec();
            let mut step_frames = Vec::new();
            let mut narrations = Vec::new();
            for k in 0..per {
                let count = (k + 1) * spec.frames_per_step / per - k * spec.frames_per_step / per;
                let offset = self.instance_offset(rng);
                let meaning: Vec<f64> = concept.iter().zip(&offset).map(|(c, o)| c + o).collect();
                let frames = self.frames(rng, &meaning, count);
                let (narr, narr_aug) = self.text_pair(rng, &meaning);
                clips.push(HierarchicalSample {
                    level: Level::Clip,
                    procedure_id: id,
                    frame_features: frames.clone(),
                    parent_text_feature: narr.clone(),
                    parent_text_augmented: narr_aug,
                    child_text_features: Matrix::zeros(0, spec.text_dim),
                    step_labels: vec![s; count],
                });
                step_frames.push(frames);
                narrations.push(narr);
            }
            let (key, key_aug) = self.text_pair(rng, &concept);
            phases.push(HierarchicalSample {
                level: Level::Phase,
                procedure_id: id,
                frame_features: Matrix::vstack(&step_frames).expect("same width"),
                parent_text_feature: key.clone(),
                parent_text_augmented: key_aug,
                child_text_features: Matrix::from_rows(&narrations).expect("same width"),
                step_labels: vec![s; spec.frames_per_step],
            });
            keysteps.push(key);
        }

        let mut mean = vec![0.0; spec.latent_dim];
        for &s in &steps {
            for (m, c) in mean.iter_mut().zip(self.truth.concepts.row(s)) {
                *m += c;
            }
        }
        for m in &mut mean {
            *m /= steps.len() as f64;
        }
        let (abs, abs_aug) = self.text_pair(rng, &mean);
        let phase_frames: Vec<Matrix> = phases.iter().map(|p| p.frame_features.clone()).collect();
        let video = HierarchicalSample {
            level: Level::Video,
            procedure_id: id,
            frame_features: Matrix::vstack(&phase_frames).expect("same width"),
            parent_text_feature: abs,
            parent_text_augmented: abs_aug,
            child_text_features: Matrix::from_rows(&keysteps).expect("same width"),
            step_labels: phases.iter().flat_map(|p| p.step_labels.clone()).collect(),
        };
        Procedure {
            id,
            title: format!("synthetic procedure {id:03}"),
            steps,
            clips,
            phases,
            video,
        }
    }
}

/// Generates `n_procedures` procedures and splits them into train and
/// held-out sets at procedure granularity.
pub fn generate_dataset(spec: &ProcedureSpec, n_procedures: usize) -> Result<GeneratedData> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let concepts = place_concepts(spec, &mut root.fork(1))?;
    let mut map_rng = root.fork(2);
    let visual_map = rendering_map(spec.visual_dim, spec.latent_dim, &mut map_rng);
    let text_map = rendering_map(spec.text_dim, spec.latent_dim, &mut map_rng);
    let complement = concept_complement(&concepts);
    let truth = GroundTruth {
        concepts,
        visual_map,
        text_map,
    };
    let renderer = Renderer {
        spec,
        truth: &truth,
        complement: &complement,
    };
    let procedures = (0..n_procedures)
        .map(|id| renderer.procedure(id, &mut root.fork(1000 + id as u64)))
        .collect();
    let all = Dataset {
        spec: spec.clone(),
        truth,
        procedures,
    };
    let (train, holdout) = split_holdout(&all, spec.holdout_fraction, &mut root.fork(3))?;
    Ok(GeneratedData { train, holdout })
}

/// Moves `max(1, ⌊fraction·n⌋)` randomly chosen whole procedures into the
/// held-out set.
pub fn split_holdout(dataset: &Dataset, fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::DegenerateSplit(format!(
            "fraction {fraction} outside (0, 1)"
        )));
    }
    let n = dataset.procedures.len();
    let held = ((fraction * n as f64).floor() as usize).max(1);
    if held >= n {
        return Err(Error::DegenerateSplit(format!(
            "{n} procedures cannot give a non-empty train set with {held} held out"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut is_held = vec![false; n];
    for &i in &order[..held] {
        is_held[i] = true;
    }
    let part = |keep: bool| Dataset {
        spec: dataset.spec.clone(),
        truth: dataset.truth.clone(),
        procedures: dataset
            .procedures
            .iter()
            .zip(&is_held)
            .filter(|(_, &h)| h == keep)
            .map(|(p, _)| p.clone())
            .collect(),
    };
    Ok((part(false), part(true)))
}
