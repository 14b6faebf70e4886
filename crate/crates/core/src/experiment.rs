//! Evaluation of a trained dual encoder on a synthetic dataset.

use serde::{Deserialize, Serialize};

use crate::alignment::DtwAlgorithm;
use crate::datagen::{Dataset, Level};
use crate::error::{Error, Result};
use crate::evalkit::{
    accuracy_f1, few_shot_selection, linear_probe, modality_gap, order_discrimination, pool_video_embedding,
    recall_at_k, zero_shot_classify, Classification, EvalReport, ProbeConfig, ProbeSummary, PromptSet, RecallAtK,
    DEFAULT_K_VALUES,
};
use crate::numerics::{Matrix, Rng};
use crate::trainer::{subsample_frames, DualEncoder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub zero_shot: bool,
    pub retrieval: bool,
    pub probe: bool,
    /// Percentage of training procedures used by the probe.
    pub shots_percent: f64,
    /// Clip/narration pairs drawn for retrieval.
    pub retrieval_items: usize,
    pub k_values: Vec<usize>,
    pub probe_config: ProbeConfig,
    /// Frames sampled per video for order discrimination.
    pub video_frames: usize,
    /// Taken from the loss settings.
    #[serde(skip)]
    pub beta: f64,
    /// Taken from the loss settings.
    #[serde(skip)]
    pub dtw_algorithm: DtwAlgorithm,
    /// Taken from the resolved run seed.
    #[serde(skip)]
    pub seed: u64,
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.shots_percent > 0.0 && self.shots_percent <= 100.0) {
            return Err(Error::InvalidConfig(format!(
                "shots_percent {} outside (0, 100]",
                self.shots_percent
            )));
        }
        if self.retrieval_items == 0 || self.k_values.is_empty() || self.video_frames == 0 {
            return Err(Error::InvalidConfig(
                "retrieval_items, k_values and video_frames must be non-empty".into(),
            ));
        }
        if let Some(k) = self.k_values.iter().find(|&&k| k == 0 || k > self.retrieval_items) {
            return Err(Error::InvalidConfig(format!(
                "recall k = {k} must lie in 1..={}",
                self.retrieval_items
            )));
        }
        if self.probe_config.batch_size == 0 {
            return Err(Error::InvalidConfig("probe batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            zero_shot: true,
            retrieval: true,
            probe: false,
            shots_percent: 100.0,
            retrieval_items: 32,
            k_values: DEFAULT_K_VALUES.to_vec(),
            probe_config: ProbeConfig::default(),
            video_frames: 64,
            beta: 0.1,
            dtw_algorithm: DtwAlgorithm::Greedy,
            seed: 0,
        }
    }
}

/// Per-frame embeddings and step labels over all videos of `data`.
fn frame_embeddings(model: &DualEncoder, data: &Dataset) -> Result<(Matrix, Vec<usize>)> {
    let videos: Vec<Matrix> = data.samples(Level::Video).map(|s| s.frame_features.clone()).collect();
    if videos.is_empty() {
        return Err(Error::EmptySet);
    }
    let labels = data
        .samples(Level::Video)
        .flat_map(|s| s.step_labels.iter().copied())
        .collect();
    Ok((model.embed_visual(&Matrix::vstack(&videos)?)?, labels))
}

pub fn class_embeddings(model: &DualEncoder, data: &Dataset) -> Result<Matrix> {
    let prompts = data.truth.class_prompt_features();
    let per_class = prompts
        .iter_rows()
        .map(|r| model.embed_text_rows(&[r]))
        .collect::<Result<Vec<_>>>()?;
    PromptSet::new(per_class)?.class_embeddings()
}

/// Frame-level step recognition against the class prompts.
pub fn zero_shot(model: &DualEncoder, data: &Dataset) -> Result<Classification> {
    let (emb, labels) = frame_embeddings(model, data)?;
    let classes = class_embeddings(model, data)?;
    let preds = zero_shot_classify(&emb, &classes)?;
    accuracy_f1(&preds, &labels, classes.rows())
}

/// Narration → clip (`t2i`) and clip → narration (`i2t`) recall over a
/// seeded selection of `items` held-out clips.
pub fn clip_retrieval(model: &DualEncoder, data: &Dataset, items: usize, k_values: &[usize], rng: &mut Rng) -> Result<RecallAtK> {
    let clips: Vec<_> = data.samples(Level::Clip).collect();
    if clips.len() < items || items == 0 {
        return Err(Error::KExceedsCorpus {
            k: items,
            corpus: clips.len(),
        });
    }
    let mut idx: Vec<usize> = (0..clips.len()).collect();
    rng.shuffle(&mut idx);
    idx.truncate(items);
    idx.sort_unstable();
    let mut clip_rows = Vec::with_capacity(items);
    let mut text_rows = Vec::with_capacity(items);
    for &i in &idx {
        let frames = model.embed_visual(&clips[i].frame_features)?;
        clip_rows.push(pool_video_embedding(&frames, frames.rows())?);
        text_rows.push(clips[i].parent_text_feature.as_slice());
    }
    let clip_emb = Matrix::from_rows(&clip_rows)?;
    let text_emb = model.embed_text_rows(&text_rows)?;
    recall_at_k(&text_emb.matmul_t(&clip_emb)?, k_values)
}

/// Fraction of videos whose frames align more cheaply with their keysteps in
/// order than reversed.
pub fn video_order_discrimination(
    model: &DualEncoder,
    data: &Dataset,
    frames: usize,
    beta: f64,
    algorithm: DtwAlgorithm,
) -> Result<f64> {
    let pairs = data
        .samples(Level::Video)
        .map(|s| {
            let f = model.embed_visual(&subsample_frames(&s.frame_features, frames))?;
            let c = model.embed_text(&s.child_text_features)?;
            Ok((f, c))
        })
        .collect::<Result<Vec<_>>>()?;
    order_discrimination(&pairs, beta, algorithm)
}

/// Distance between the centroids of pooled clip and narration embeddings.
pub fn clip_modality_gap(model: &DualEncoder, data: &Dataset) -> Result<f64> {
    let mut clip_rows = Vec::new();
    let mut text_rows = Vec::new();
    for c in data.samples(Level::Clip) {
        let f = model.embed_visual(&c.frame_features)?;
        clip_rows.push(pool_video_embedding(&f, f.rows())?);
        text_rows.push(c.parent_text_feature.as_slice());
    }
    modality_gap(&Matrix::from_rows(&clip_rows)?, &model.embed_text_rows(&text_rows)?)
}

/// Linear probe on frozen frame embeddings, training on a whole-procedure
/// few-shot subset of `train`.
pub fn probe(
    model: &DualEncoder,
    train: &Dataset,
    test: &Dataset,
    shots_percent: f64,
    cfg: &ProbeConfig,
    rng: &mut Rng,
) -> Result<ProbeSummary> {
    let chosen = few_shot_selection(train.procedures.len(), shots_percent, rng)?;
    let subset = Dataset {
        spec: train.spec.clone(),
        truth: train.truth.clone(),
        procedures: chosen.iter().map(|&i| train.procedures[i].clone()).collect(),
    };
    let (tx, ty) = frame_embeddings(model, &subset)?;
    let (vx, vy) = frame_embeddings(model, test)?;
    let r = linear_probe(&tx, &ty, &vx, &vy, cfg, rng)?;
    Ok(ProbeSummary {
        shots_percent,
        train_size: r.train_size,
        accuracy: r.metrics.accuracy,
        macro_f1: r.metrics.macro_f1,
        per_class_f1: r.metrics.per_class_f1,
    })
}

/// Runs the selected protocols on `test` (and `train` for the probe).
pub fn evaluate(model: &DualEncoder, train: &Dataset, test: &Dataset, opts: &EvalOptions) -> Result<EvalReport> {
    let root = Rng::new(opts.seed);
    let mut report = EvalReport::empty();
    if opts.zero_shot {
        let c = zero_shot(model, test)?;
        report.accuracy = Some(c.accuracy);
        report.macro_f1 = Some(c.macro_f1);
        report.per_class_f1 = Some(c.per_class_f1);
        report.order_discrimination = Some(video_order_discrimination(
            model,
            test,
            opts.video_frames,
            opts.beta,
            opts.dtw_algorithm,
        )?);
    }
    if opts.retrieval {
        report.recall = Some(clip_retrieval(
            model,
            test,
            opts.retrieval_items,
            &opts.k_values,
            &mut root.fork(1),
        )?);
        report.modality_gap = Some(clip_modality_gap(model, test)?);
    }
    if opts.probe {
        report.probe = Some(probe(
            model,
            train,
            test,
            opts.shots_percent,
            &opts.probe_config,
            &mut root.fork(2),
        )?);
    }
    Ok(report)
}
