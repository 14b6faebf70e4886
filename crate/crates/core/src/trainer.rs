//! Alternating hierarchical training of one visual and one text encoder.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, HierarchicalSample, Level};
use crate::encoders::{self, adamw_step, init_params, Activation, AdamWConfig, EncoderParams, OptimizerState};
use crate::error::{Error, Result};
use crate::evalkit::pool_indices;
use crate::losses::{clip_lecnce, hier_lecnce, mean_pool, mean_pool_backward, LossConfig};
use crate::numerics::{EmbeddingMatrix, Matrix, Rng};
use crate::textaug::sample_text;

pub const CHECKPOINT_FORMAT: &str = "lecnce-checkpoint-v1";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOG_FILE: &str = "train_log.csv";
pub const LOG_HEADER: &str = "step,level,total,component_vl,component_vv,component_infonce,component_dtw,wall_ms";

/// One value per level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerLevel {
    pub clip: usize,
    pub phase: usize,
    pub video: usize,
}

impl PerLevel {
    pub fn get(&self, level: Level) -> usize {
        match level {
            Level::Clip => self.clip,
            Level::Phase => self.phase,
            Level::Video => self.video,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Set from the top-level `loss` section, not from this one.
    #[serde(skip)]
    pub loss: LossConfig,
    /// Consecutive batches per level within one cycle.
    pub schedule: PerLevel,
    pub batch_sizes: PerLevel,
    /// Frames fed per sample, capped by the sample length.
    pub frames: PerLevel,
    /// Number of schedule cycles.
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Set from the resolved run seed.
    #[serde(skip)]
    pub seed: u64,
    pub p_augmented: f64,
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    pub activation: Activation,
    /// Clip-view distortion: additive Gaussian noise scale.
    pub view_noise_sigma: f64,
    /// Clip-view distortion: probability of zeroing a coordinate.
    pub view_dropout: f64,
}

impl TrainConfig {
    pub const FULL_SCALE_SCHEDULE: PerLevel = PerLevel {
        clip: 25,
        phase: 15,
        video: 115,
    };
    pub const FULL_SCALE_BATCH_SIZES: PerLevel = PerLevel {
        clip: 120,
        phase: 80,
        video: 25,
    };

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let s = self.schedule;
        if s.clip + s.phase + s.video == 0 {
            return Err(Error::AllZeroSchedule);
        }
        for level in Level::ALL {
            if self.batch_sizes.get(level) < 2 {
                return Err(Error::InvalidConfig(format!(
                    "{level} batch size must be at least 2"
                )));
            }
            if self.frames.get(level) == 0 {
                return Err(Error::InvalidConfig(format!("{level} frame count must be positive")));
            }
        }
        if !(self.learning_rate >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig(
                "learning_rate and weight_decay must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_augmented) {
            return Err(Error::InvalidConfig(format!(
                "p_augmented {} outside [0, 1]",
                self.p_augmented
            )));
        }
        if !(0.0..1.0).contains(&self.view_dropout) || !(self.view_noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig(
                "view_dropout must be in [0, 1) and view_noise_sigma >= 0".into(),
            ));
        }
        if self.embed_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::BadDims("zero encoder width".into()));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            schedule: PerLevel {
                clip: 5,
                phase: 3,
                video: 3,
            },
            batch_sizes: PerLevel {
                clip: 16,
                phase: 8,
                video: 4,
            },
            frames: PerLevel {
                clip: 4,
                phase: 16,
                video: 64,
            },
            epochs: 30,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            seed: 0,
            p_augmented: 0.5,
            hidden_dims: vec![64],
            embed_dim: 32,
            activation: Activation::Tanh,
            view_noise_sigma: 0.05,
            view_dropout: 0.1,
        }
    }
}

/// The repeating level pattern `[clip × c, phase × p, video × v]`.
pub fn make_schedule(schedule: PerLevel) -> Result<impl Iterator<Item = Level> + Clone> {
    if schedule.clip + schedule.phase + schedule.video == 0 {
        return Err(Error::AllZeroSchedule);
    }
    let cycle: Vec<Level> = Level::ALL
        .iter()
        .flat_map(|&l| std::iter::repeat_n(l, schedule.get(l)))
        .collect();
    Ok(cycle.into_iter().cycle())
}

/// The single shared parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualEncoder {
    pub visual: EncoderParams,
    pub text: EncoderParams,
}

impl DualEncoder {
    pub fn init(visual_dim: usize, text_dim: usize, cfg: &TrainConfig, rng: &mut Rng) -> Result<Self> {
        let dims = |input: usize| {
            let mut d = vec![input];
            d.extend(&cfg.hidden_dims);
            d.push(cfg.embed_dim);
            d
        };
        Ok(Self {
            visual: init_params(&dims(visual_dim), cfg.activation, &mut rng.fork(1))?,
            text: init_params(&dims(text_dim), cfg.activation, &mut rng.fork(2))?,
        })
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.visual.tensors();
        t.extend(self.text.tensors());
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.visual.tensors_mut();
        t.extend(self.text.tensors_mut());
        t
    }

    pub fn optimizer(&self, cfg: AdamWConfig) -> OptimizerState {
        let shapes: Vec<usize> = self.tensors().iter().map(|t| t.len()).collect();
        OptimizerState::new(&shapes, cfg)
    }

    pub fn embed_visual(&self, x: &Matrix) -> Result<EmbeddingMatrix> {
        Ok(encoders::forward(&self.visual, x)?.0)
    }

    pub fn embed_text(&self, x: &Matrix) -> Result<EmbeddingMatrix> {
        Ok(encoders::forward(&self.text, x)?.0)
    }

    pub fn embed_text_rows(&self, rows: &[&[f64]]) -> Result<EmbeddingMatrix> {
        self.embed_text(&Matrix::from_rows(rows)?)
    }
}

/// Loss values of one optimization step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub level: Level,
    pub total: f64,
    pub vl: Option<f64>,
    pub vv: Option<f64>,
    pub infonce: Option<f64>,
    pub dtw: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LossRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:.3}",
                r.step,
                r.level,
                r.total,
                opt(r.vl),
                opt(r.vv),
                opt(r.infonce),
                opt(r.dtw),
                r.wall_ms
            );
        }
        out
    }

    pub fn level_totals(&self, level: Level) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.level == level)
            .map(|r| r.total)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub seed: u64,
    pub visual_dims: Vec<usize>,
    pub text_dims: Vec<usize>,
    pub activation: Activation,
    pub model: DualEncoder,
    pub optimizer: OptimizerState,
    /// Completed schedule cycles.
    pub epoch: usize,
    pub global_step: u64,
}

impl Checkpoint {
    pub fn new(model: &DualEncoder, optimizer: &OptimizerState, seed: u64, epoch: usize, global_step: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            seed,
            visual_dims: model.visual.layer_dims(),
            text_dims: model.text.layer_dims(),
            activation: model.visual.activation,
            model: model.clone(),
            optimizer: optimizer.clone(),
            epoch,
            global_step,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Malformed(format!("unsupported checkpoint format {:?}", c.format)));
        }
        if c.visual_dims != c.model.visual.layer_dims() || c.text_dims != c.model.text.layer_dims() {
            return Err(Error::Malformed("checkpoint dims disagree with parameters".into()));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Rows of `m` at uniformly spaced positions, at most `n` of them.
pub fn subsample_frames(m: &Matrix, n: usize) -> Matrix {
    if m.rows() <= n {
        return m.clone();
    }
    m.select_rows(&pool_indices(m.rows(), n))
}

fn distort(frames: &Matrix, cfg: &TrainConfig, rng: &mut Rng) -> Matrix {
    let mut out = frames.clone();
    for v in out.as_mut_slice() {
        let noisy = *v + cfg.view_noise_sigma * rng.normal();
        *v = if rng.bernoulli(cfg.view_dropout) { 0.0 } else { noisy };
    }
    out
}

/// Forward, loss, backward and one AdamW update on a single batch.
pub fn train_step(
    level: Level,
    batch: &[&HierarchicalSample],
    model: &mut DualEncoder,
    optimizer: &mut OptimizerState,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<LossRecord> {
    if let Some(s) = batch.iter().find(|s| s.level != level) {
        return Err(Error::MissingLevelData(format!(
            "{level} batch contains a {} sample",
            s.level
        )));
    }
    if batch.len() < 2 {
        return Err(Error::MissingLevelData(format!("{level} batch has fewer than 2 samples")));
    }
    let n_frames = cfg.frames.get(level);
    let frames: Vec<Matrix> = batch
        .iter()
        .map(|s| subsample_frames(&s.frame_features, n_frames))
        .collect();
    let parents: Vec<&[f64]> = batch
        .iter()
        .map(|s| {
            sample_text(
                s.parent_text_feature.as_slice(),
                s.parent_text_augmented.as_slice(),
                cfg.p_augmented,
                rng,
            )
        })
        .collect();

    let mut visual_in: Vec<Matrix> = frames.clone();
    if level == Level::Clip {
        for f in &frames {
            visual_in.push(distort(f, cfg, rng));
        }
        for f in &frames {
            visual_in.push(distort(f, cfg, rng));
        }
    }
    let all_sizes: Vec<usize> = visual_in.iter().map(Matrix::rows).collect();
    let (v_emb, v_cache) = encoders::forward(&model.visual, &Matrix::vstack(&visual_in)?)?;
    let v_parts = v_emb.split_rows(&all_sizes)?;

    let mut text_rows: Vec<&[f64]> = parents.clone();
    let mut child_sizes = Vec::new();
    if level != Level::Clip {
        for s in batch {
            child_sizes.push(s.child_text_features.rows());
            text_rows.extend(s.child_text_features.iter_rows());
        }
    }
    let (t_emb, t_cache) = encoders::forward(&model.text, &Matrix::from_rows(&text_rows)?)?;
    let b = batch.len();
    let mut t_sizes = vec![b];
    t_sizes.extend(&child_sizes);
    let t_parts = t_emb.split_rows(&t_sizes)?;

    let (record, grad_visual, grad_text) = match level {
        Level::Clip => {
            let clip_frames = &v_parts[..b];
            let pool_view = |parts: &[Matrix]| -> Result<(Vec<_>, Matrix)> {
                let pooled = parts.iter().map(mean_pool).collect::<Result<Vec<_>>>()?;
                let rows: Vec<&[f64]> = pooled.iter().map(|p| p.embedding.as_slice()).collect();
                let m = Matrix::from_rows(&rows)?;
                Ok((pooled, m))
            };
            let (pa, view_a) = pool_view(&v_parts[b..2 * b])?;
            let (pb, view_b) = pool_view(&v_parts[2 * b..])?;
            let loss = clip_lecnce(clip_frames, &t_parts[0], &view_a, &view_b, &cfg.loss)?;
            let mut gv: Vec<Matrix> = loss.grad_clip_frames.clone();
            gv.extend(pa.iter().enumerate().map(|(i, p)| mean_pool_backward(p, loss.grad_view_a.row(i))));
            gv.extend(pb.iter().enumerate().map(|(i, p)| mean_pool_backward(p, loss.grad_view_b.row(i))));
            let record = LossRecord {
                step: 0,
                level,
                total: loss.value,
                vl: Some(loss.vl),
                vv: Some(loss.vv),
                infonce: None,
                dtw: None,
                wall_ms: 0.0,
            };
            (record, Matrix::vstack(&gv)?, loss.grad_narrations)
        }
        Level::Phase | Level::Video => {
            let loss = hier_lecnce(&v_parts, &t_parts[0], &t_parts[1..], &cfg.loss)?;
            let mut gt = vec![loss.grad_parents];
            gt.extend(loss.grad_children);
            let record = LossRecord {
                step: 0,
                level,
                total: loss.value,
                vl: None,
                vv: None,
                infonce: Some(loss.infonce),
                dtw: Some(loss.dtw),
                wall_ms: 0.0,
            };
            (record, Matrix::vstack(&loss.grad_segment_frames)?, Matrix::vstack(&gt)?)
        }
    };
    if !record.total.is_finite() {
        return Ok(record);
    }
    let gv = encoders::backward(&model.visual, &v_cache, &grad_visual)?;
    let gt = encoders::backward(&model.text, &t_cache, &grad_text)?;
    let mut grads = gv.params.tensors();
    grads.extend(gt.params.tensors());
    adamw_step(model.tensors_mut(), grads, optimizer)?;
    Ok(record)
}

/// Seeded shuffling over one level's samples. A fresh permutation is drawn
/// whenever fewer than a full batch remains.
#[derive(Debug, Clone)]
struct LevelSampler {
    order: Vec<usize>,
    pos: usize,
    rng: Rng,
}

impl LevelSampler {
    fn new(n: usize, rng: Rng) -> Self {
        let mut s = Self {
            order: (0..n).collect(),
            pos: n,
            rng,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.rng.shuffle(&mut self.order);
        self.pos = 0;
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        if self.pos + size > self.order.len() {
            self.reshuffle();
        }
        let b = self.order[self.pos..self.pos + size].to_vec();
        self.pos += size;
        b
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DualEncoder,
    pub optimizer: OptimizerState,
    pub log: TrainLog,
    pub checkpoint: Checkpoint,
}

/// Runs `cfg.epochs` schedule cycles. With `out_dir`, the checkpoint is
/// rewritten after every cycle and the log is written at the end.
pub fn train_run(cfg: &TrainConfig, data: &Dataset, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let samples: Vec<Vec<&HierarchicalSample>> = Level::ALL
        .iter()
        .map(|&l| data.samples(l).collect())
        .collect();
    for (i, level) in Level::ALL.iter().enumerate() {
        if cfg.schedule.get(*level) == 0 {
            continue;
        }
        let have = samples[i].len();
        let need = cfg.batch_sizes.get(*level);
        if have == 0 {
            return Err(Error::MissingLevelData(format!("no {level} samples")));
        }
        if have < need {
            return Err(Error::MissingLevelData(format!(
                "{have} {level} samples cannot fill a batch of {need}"
            )));
        }
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }

    let root = Rng::new(cfg.seed);
    let mut model = DualEncoder::init(data.spec.visual_dim, data.spec.text_dim, cfg, &mut root.fork(1))?;
    let mut optimizer = model.optimizer(cfg.adamw());
    let mut samplers: Vec<LevelSampler> = (0..3)
        .map(|i| LevelSampler::new(samples[i].len(), root.fork(10 + i as u64)))
        .collect();
    let mut step_rng = root.fork(20);
    let cycle_len = cfg.schedule.clip + cfg.schedule.phase + cfg.schedule.video;
    let mut schedule = make_schedule(cfg.schedule)?;
    let mut log = TrainLog::default();
    let mut global_step = 0u64;
    let mut checkpoint = Checkpoint::new(&model, &optimizer, cfg.seed, 0, 0);

    for epoch in 0..cfg.epochs {
        for _ in 0..cycle_len {
            let level = schedule.next().expect("cyclic schedule");
            let li = level as usize;
            let idx = samplers[li].next_batch(cfg.batch_sizes.get(level));
            let batch: Vec<&HierarchicalSample> = idx.iter().map(|&i| samples[li][i]).collect();
            let start = Instant::now();
            let mut rec = train_step(level, &batch, &mut model, &mut optimizer, cfg, &mut step_rng)?;
            rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            rec.step = global_step;
            if !rec.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: global_step,
                    level: level.to_string(),
                    value: rec.total,
                });
            }
            log.records.push(rec);
            global_step += 1;
        }
        checkpoint = Checkpoint::new(&model, &optimizer, cfg.seed, epoch + 1, global_step);
        if let Some(dir) = out_dir {
            checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
        }
    }
    if let Some(dir) = out_dir {
        checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
        fs::write(dir.join(LOG_FILE), log.to_csv())?;
    }
    Ok(TrainOutcome {
        model,
        optimizer,
        log,
        checkpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, ProcedureSpec};

    fn data() -> Dataset {
        generate_dataset(&ProcedureSpec::default(), 10).unwrap().train
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_sizes: PerLevel {
                clip: 8,
                phase: 4,
                video: 2,
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schedule_patterns() {
        let s: Vec<Level> = make_schedule(TrainConfig::FULL_SCALE_SCHEDULE).unwrap().take(155).collect();
        assert!(s[..25].iter().all(|&l| l == Level::Clip));
        assert!(s[25..40].iter().all(|&l| l == Level::Phase));
        assert!(s[40..].iter().all(|&l| l == Level::Video));
        let only: Vec<Level> = make_schedule(PerLevel { clip: 1, phase: 0, video: 0 })
            .unwrap()
            .take(20)
            .collect();
        assert!(only.iter().all(|&l| l == Level::Clip));
        let p = PerLevel { clip: 2, phase: 1, video: 3 };
        let seq: Vec<Level> = make_schedule(p).unwrap().take(60).collect();
        assert_eq!(seq[..6], seq[6..12]);
        assert_ne!(seq[..5], seq[5..10]);
        assert!(matches!(
            make_schedule(PerLevel { clip: 0, phase: 0, video: 0 }).map(|_| ()),
            Err(Error::AllZeroSchedule)
        ));
    }

    #[test]
    fn zero_lr_steps_repeat_exactly() {
        let d = data();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..quick_cfg()
        };
        let mut model = DualEncoder::init(32, 24, &cfg, &mut Rng::new(1)).unwrap();
        let mut opt = model.optimizer(cfg.adamw());
        for level in Level::ALL {
            let batch: Vec<&HierarchicalSample> = d.samples(level).take(2).collect();
            let a = train_step(level, &batch, &mut model, &mut opt, &cfg, &mut Rng::new(5)).unwrap();
            let b = train_step(level, &batch, &mut model, &mut opt, &cfg, &mut Rng::new(5)).unwrap();
            assert_eq!(a.total, b.total);
        }
    }

    #[test]
    fn clip_record_sums_components() {
        let d = data();
        let cfg = quick_cfg();
        let mut model = DualEncoder::init(32, 24, &cfg, &mut Rng::new(1)).unwrap();
        let mut opt = model.optimizer(cfg.adamw());
        let batch: Vec<&HierarchicalSample> = d.samples(Level::Clip).take(8).collect();
        let r = train_step(Level::Clip, &batch, &mut model, &mut opt, &cfg, &mut Rng::new(2)).unwrap();
        assert!((r.total - (r.vl.unwrap() + r.vv.unwrap())).abs() <= 1e-12);
    }

    #[test]
    fn every_level_updates_the_same_parameters() {
        let d = data();
        let cfg = quick_cfg();
        let mut model = DualEncoder::init(32, 24, &cfg, &mut Rng::new(1)).unwrap();
        let mut opt = model.optimizer(cfg.adamw());
        for level in Level::ALL {
            let before = model.clone();
            let batch: Vec<&HierarchicalSample> = d.samples(level).take(2).collect();
            train_step(level, &batch, &mut model, &mut opt, &cfg, &mut Rng::new(2)).unwrap();
            assert_ne!(before.visual, model.visual, "{level}");
            assert_ne!(before.text, model.text, "{level}");
        }
        assert_eq!(opt.step_count, 3);
    }

    #[test]
    fn wrong_level_batch_is_rejected() {
        let d = data();
        let cfg = quick_cfg();
        let mut model = DualEncoder::init(32, 24, &cfg, &mut Rng::new(1)).unwrap();
        let mut opt = model.optimizer(cfg.adamw());
        let batch: Vec<&HierarchicalSample> = d.samples(Level::Clip).take(2).collect();
        assert!(matches!(
            train_step(Level::Video, &batch, &mut model, &mut opt, &cfg, &mut Rng::new(2)),
            Err(Error::MissingLevelData(_))
        ));
    }

    #[test]
    fn lambda_zero_logs_pure_infonce() {
        let d = data();
        let cfg = TrainConfig {
            loss: LossConfig {
                lambda: 0.0,
                ..LossConfig::default()
            },
            ..quick_cfg()
        };
        let out = train_run(&cfg, &d, None).unwrap();
        for r in out.log.records.iter().filter(|r| r.level != Level::Clip) {
            assert_eq!(r.total, r.infonce.unwrap());
        }
    }

    #[test]
    fn runs_are_deterministic_and_checkpoints_round_trip() {
        let d = data();
        let cfg = quick_cfg();
        let a = train_run(&cfg, &d, None).unwrap();
        let b = train_run(&cfg, &d, None).unwrap();
        assert_eq!(a.checkpoint.to_json().unwrap(), b.checkpoint.to_json().unwrap());
        let text = a.checkpoint.to_json().unwrap();
        let again = Checkpoint::from_json(&text).unwrap().to_json().unwrap();
        assert_eq!(text, again);
        assert_eq!(a.log.records.len(), 2 * 11);
        assert!(a.log.records.windows(2).all(|w| w[0].step < w[1].step));
    }

    #[test]
    fn too_few_samples_for_a_batch() {
        let d = data();
        let cfg = TrainConfig {
            batch_sizes: PerLevel {
                clip: 8,
                phase: 4,
                video: 50,
            },
            ..quick_cfg()
        };
        assert!(matches!(train_run(&cfg, &d, None), Err(Error::MissingLevelData(_))));
    }

    #[test]
    fn csv_schema() {
        let d = data();
        let out = train_run(&quick_cfg(), &d, None).unwrap();
        let csv = out.log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), LOG_HEADER);
        for l in lines {
            assert_eq!(l.split(',').count(), 8);
        }
    }
}
