//! Evaluation protocols on frozen embeddings.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::alignment::{reverse_columns, DtwAlgorithm};
use crate::error::{Error, Result};
use crate::losses::build_cost_matrix;
use crate::numerics::{norm, EmbeddingMatrix, Matrix, Rng, ZERO_NORM};

pub const DEFAULT_K_VALUES: [usize; 3] = [1, 5, 10];
pub const DEFAULT_POOL_FRAMES: usize = 10;

fn check_dims(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    if a.cols() != b.cols() {
        return Err(Error::DimMismatch(format!(
            "{what}: {} vs {} columns",
            a.cols(),
            b.cols()
        )));
    }
    Ok(())
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-class prompt embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    /// Class `c` → k_c × d prompt embeddings, k_c ≥ 1.
    pub classes: Vec<Matrix>,
}

impl PromptSet {
    pub fn new(classes: Vec<Matrix>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::EmptySet);
        }
        let d = classes[0].cols();
        for (c, m) in classes.iter().enumerate() {
            if m.rows() == 0 {
                return Err(Error::InvalidConfig(format!("class {c} has no prompts")));
            }
            if m.cols() != d {
                return Err(Error::DimMismatch(format!("class {c} prompts have width {}", m.cols())));
            }
        }
        Ok(Self { classes })
    }

    /// One row per class: the renormalized mean of its prompt embeddings.
    pub fn class_embeddings(&self) -> Result<EmbeddingMatrix> {
        let rows = self
            .classes
            .iter()
            .map(|m| mean_unit(m.iter_rows()))
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows)
    }
}

fn mean_unit<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for r in rows {
        if sum.is_empty() {
            sum = vec![0.0; r.len()];
        }
        for (s, x) in sum.iter_mut().zip(r) {
            *s += x;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptySet);
    }
    for s in &mut sum {
        *s /= n as f64;
    }
    let len = norm(&sum);
    if len < ZERO_NORM {
        return Err(Error::DegenerateMean(len));
    }
    Ok(sum.into_iter().map(|x| x / len).collect())
}

/// Most similar class per image row; ties go to the lowest class index.
pub fn zero_shot_classify(image_emb: &EmbeddingMatrix, class_embs: &EmbeddingMatrix) -> Result<Vec<usize>> {
    check_dims(image_emb, class_embs, "zero-shot")?;
    if class_embs.rows() == 0 {
        return Err(Error::EmptySet);
    }
    let sim = image_emb.matmul_t(class_embs)?;
    Ok(sim.iter_rows().map(argmax).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallAtK {
    /// Rows as queries.
    pub t2i: IndexMap<String, f64>,
    /// Columns as queries.
    pub i2t: IndexMap<String, f64>,
}

/// Position of `target` when `scores` is sorted descending with ties in
/// index order.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > t || (s == t && j < target))
        .count()
}

/// Recall@k with ground truth `i ↔ i`. Queries are `0..min(rows, cols)` in
/// each direction; every column (row) is a candidate.
pub fn recall_at_k(sim: &Matrix, k_values: &[usize]) -> Result<RecallAtK> {
    let (r, c) = sim.shape();
    let n = r.min(c);
    if n == 0 {
        return Err(Error::EmptySet);
    }
    for &k in k_values {
        if k == 0 {
            return Err(Error::InvalidConfig("recall k must be >= 1".into()));
        }
        let corpus = r.min(c);
        if k > corpus {
            return Err(Error::KExceedsCorpus { k, corpus });
        }
    }
    let t2i_ranks: Vec<usize> = (0..n).map(|i| rank_of(sim.row(i), i)).collect();
    let cols = sim.transpose();
    let i2t_ranks: Vec<usize> = (0..n).map(|j| rank_of(cols.row(j), j)).collect();
    let table = |ranks: &[usize]| {
        k_values
            .iter()
            .map(|&k| {
                let hits = ranks.iter().filter(|&&rk| rk < k).count();
                (k.to_string(), hits as f64 / n as f64)
            })
            .collect()
    };
    Ok(RecallAtK {
        t2i: table(&t2i_ranks),
        i2t: table(&i2t_ranks),
    })
}

/// Indices `⌊t·(T−1)/(n−1)⌋` for `t = 0..n`, or all rows when `T ≤ n`.
pub fn pool_indices(total: usize, n_samples: usize) -> Vec<usize> {
    if total <= n_samples {
        return (0..total).collect();
    }
    if n_samples <= 1 {
        return vec![0];
    }
    (0..n_samples)
        .map(|t| t * (total - 1) / (n_samples - 1))
        .collect()
}

/// Renormalized mean of uniformly spaced frames.
pub fn pool_video_embedding(frames: &EmbeddingMatrix, n_samples: usize) -> Result<Vec<f64>> {
    if frames.rows() == 0 || n_samples == 0 {
        return Err(Error::EmptySet);
    }
    let idx = pool_indices(frames.rows(), n_samples);
    mean_unit(idx.iter().map(|&i| frames.row(i)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
}

pub fn accuracy_f1(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<Classification> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch(preds.len(), labels.len()));
    }
    if labels.is_empty() || n_classes == 0 {
        return Err(Error::EmptySet);
    }
    if let Some(&bad) = preds.iter().chain(labels).find(|&&x| x >= n_classes) {
        return Err(Error::Malformed(format!(
            "class {bad} outside 0..{n_classes}"
        )));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fneg = vec![0usize; n_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p == l {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[l] += 1;
        }
    }
    let per_class_f1: Vec<f64> = (0..n_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect();
    Ok(Classification {
        accuracy: tp.iter().sum::<usize>() as f64 / labels.len() as f64,
        macro_f1: per_class_f1.iter().sum::<f64>() / n_classes as f64,
        per_class_f1,
    })
}

/// Euclidean distance between the two modality centroids.
pub fn modality_gap(image_embs: &EmbeddingMatrix, text_embs: &EmbeddingMatrix) -> Result<f64> {
    if image_embs.rows() == 0 || text_embs.rows() == 0 {
        return Err(Error::EmptySet);
    }
    check_dims(image_embs, text_embs, "modality gap")?;
    let centroid = |m: &Matrix| -> Vec<f64> {
        let mut c = vec![0.0; m.cols()];
        for r in m.iter_rows() {
            for (s, x) in c.iter_mut().zip(r) {
                *s += x;
            }
        }
        c.iter().map(|x| x / m.rows() as f64).collect()
    };
    let a = centroid(image_embs);
    let b = centroid(text_embs);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            weight_decay: 0.0005,
            epochs: 40,
            batch_size: 32,
        }
    }
}

/// Multinomial logistic regression `logits = x·W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    /// d × C.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl LinearClassifier {
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul(&self.weight)?;
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.iter_rows().map(argmax).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub classifier: LinearClassifier,
    pub train_size: usize,
    pub metrics: Classification,
}

/// Trains a linear classifier on frozen `train_x` by mini-batch SGD with L2
/// decay on the weights, then scores it on the test split.
pub fn linear_probe(
    train_x: &Matrix,
    train_y: &[usize],
    test_x: &Matrix,
    test_y: &[usize],
    cfg: &ProbeConfig,
    rng: &mut Rng,
) -> Result<ProbeResult> {
    if train_x.rows() != train_y.len() {
        return Err(Error::LengthMismatch(train_x.rows(), train_y.len()));
    }
    if test_x.rows() != test_y.len() {
        return Err(Error::LengthMismatch(test_x.rows(), test_y.len()));
    }
    check_dims(train_x, test_x, "probe")?;
    let mut seen: Vec<usize> = train_y.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() < 2 {
        return Err(Error::SingleClass);
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("probe batch_size must be >= 1".into()));
    }
    let n_classes = train_y.iter().chain(test_y).max().map_or(0, |m| m + 1);
    let d = train_x.cols();
    let mut clf = LinearClassifier {
        weight: Matrix::zeros(d, n_classes),
        bias: vec![0.0; n_classes],
    };
    let mut order: Vec<usize> = (0..train_x.rows()).collect();
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let xb = train_x.select_rows(batch);
            let mut g = clf.logits(&xb)?;
            for (r, &i) in batch.iter().enumerate() {
                let row = g.row_mut(r);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - m).exp();
                    s += *v;
                }
                for v in row.iter_mut() {
                    *v /= s;
                }
                row[train_y[i]] -= 1.0;
            }
            let m = batch.len() as f64;
            let gw = xb.t_matmul(&g)?;
            for (w, gw) in clf.weight.as_mut_slice().iter_mut().zip(gw.as_slice()) {
                *w -= cfg.learning_rate * (gw / m + cfg.weight_decay * *w);
            }
            for (c, b) in clf.bias.iter_mut().enumerate() {
                let gb: f64 = (0..g.rows()).map(|r| g[(r, c)]).sum();
                *b -= cfg.learning_rate * gb / m;
            }
        }
    }
    let preds = clf.predict(test_x)?;
    let metrics = accuracy_f1(&preds, test_y, n_classes)?;
    Ok(ProbeResult {
        classifier: clf,
        train_size: train_x.rows(),
        metrics,
    })
}

/// Chooses `max(1, round(percent/100 · n))` whole items for few-shot training.
pub fn few_shot_selection(n_items: usize, percent: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(Error::InvalidConfig(format!("shots {percent} outside (0, 100]")));
    }
    if n_items == 0 {
        return Err(Error::EmptySet);
    }
    let take = ((percent / 100.0 * n_items as f64).round() as usize).clamp(1, n_items);
    let mut idx: Vec<usize> = (0..n_items).collect();
    rng.shuffle(&mut idx);
    idx.truncate(take);
    idx.sort_unstable();
    Ok(idx)
}

/// Fraction of `(frames, children)` pairs whose forward alignment is cheaper
/// than the alignment to the reversed children.
pub fn order_discrimination(
    pairs: &[(EmbeddingMatrix, EmbeddingMatrix)],
    beta: f64,
    algorithm: DtwAlgorithm,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut wins = 0usize;
    for (frames, children) in pairs {
        let c = build_cost_matrix(frames, children, beta)?;
        let fwd = algorithm.align(&c)?.cost;
        let rev = algorithm.align(&reverse_columns(&c))?.cost;
        wins += usize::from(fwd < rev);
    }
    Ok(wins as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub shots_percent: f64,
    pub train_size: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
}

/// Machine-readable evaluation output; sections not requested are null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    pub per_class_f1: Option<Vec<f64>>,
    pub recall: Option<RecallAtK>,
    pub modality_gap: Option<f64>,
    pub probe: Option<ProbeSummary>,
    pub order_discrimination: Option<f64>,
}

impl EvalReport {
    pub fn empty() -> Self {
        Self {
            accuracy: None,
            macro_f1: None,
            per_class_f1: None,
            recall: None,
            modality_gap: None,
            probe: None,
            order_discrimination: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dot, l2_normalize_rows};

    fn unit_rows(rng: &mut Rng, n: usize, d: usize) -> Matrix {
        l2_normalize_rows(&rng.normal_matrix(n, d, 1.0)).unwrap()
    }

    #[test]
    fn zero_shot_examples() {
        let classes = Matrix::identity(5);
        let img = Matrix::from_rows(&[classes.row(3).to_vec()]).unwrap();
        assert_eq!(zero_shot_classify(&img, &classes).unwrap(), [3]);
        let same = Matrix::from_rows(&vec![vec![0.6, 0.8]; 4]).unwrap();
        let img = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert_eq!(zero_shot_classify(&img, &same).unwrap(), [0]);
        assert!(matches!(
            zero_shot_classify(&img, &classes),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn zero_shot_matches_brute_force() {
        let mut rng = Rng::new(11);
        let img = unit_rows(&mut rng, 20, 6);
        let cls = unit_rows(&mut rng, 5, 6);
        let got = zero_shot_classify(&img, &cls).unwrap();
        for (i, &g) in got.iter().enumerate() {
            let sims: Vec<f64> = (0..5).map(|c| dot(img.row(i), cls.row(c))).collect();
            let best = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let expect = sims.iter().position(|&s| s == best).unwrap();
            assert_eq!(g, expect);
        }
    }

    #[test]
    fn multi_prompt_classes_average() {
        let p = PromptSet::new(vec![
            Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap(),
            Matrix::from_rows(&[[-1.0, 0.0]]).unwrap(),
        ])
        .unwrap();
        let e = p.class_embeddings().unwrap();
        let h = 0.5f64.sqrt();
        assert!((e[(0, 0)] - h).abs() < 1e-15 && (e[(0, 1)] - h).abs() < 1e-15);
        assert_eq!(e.row(1), &[-1.0, 0.0]);
    }

    #[test]
    fn recall_examples() {
        let r = recall_at_k(&Matrix::identity(10), &[1, 5, 10]).unwrap();
        assert_eq!(r.t2i["1"], 1.0);
        assert_eq!(r.i2t["1"], 1.0);
        let mut anti = Matrix::zeros(10, 10);
        for i in 0..10 {
            anti[(i, 9 - i)] = 1.0;
        }
        let r = recall_at_k(&anti, &[10]).unwrap();
        assert_eq!((r.t2i["10"], r.i2t["10"]), (1.0, 1.0));
        assert!(matches!(
            recall_at_k(&anti, &[11]),
            Err(Error::KExceedsCorpus { k: 11, corpus: 10 })
        ));
    }

    #[test]
    fn recall_rectangular() {
        let sim = Matrix::from_rows(&[[0.9, 0.1, 0.95], [0.2, 0.8, 0.1]]).unwrap();
        let r = recall_at_k(&sim, &[1, 2]).unwrap();
        assert_eq!(r.t2i["1"], 0.5);
        assert_eq!(r.t2i["2"], 1.0);
        assert_eq!(r.i2t["1"], 1.0);
        assert!(matches!(recall_at_k(&sim, &[3]), Err(Error::KExceedsCorpus { .. })));
    }

    #[test]
    fn ties_count_lower_index_first() {
        assert_eq!(rank_of(&[0.5, 0.5, 0.5], 0), 0);
        assert_eq!(rank_of(&[0.5, 0.5, 0.5], 2), 2);
    }

    #[test]
    fn pooling_examples() {
        assert_eq!(pool_indices(30, 10), [0, 3, 6, 9, 12, 16, 19, 22, 25, 29]);
        let frames = Matrix::from_rows(&vec![vec![0.6, 0.8]; 5]).unwrap();
        let p = pool_video_embedding(&frames, 10).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        let anti = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        assert!(matches!(
            pool_video_embedding(&anti, 10),
            Err(Error::DegenerateMean(_))
        ));
    }

    #[test]
    fn f1_examples() {
        let c = accuracy_f1(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!((c.accuracy, c.macro_f1), (1.0, 1.0));
        assert_eq!(c.per_class_f1, [1.0; 3]);
        let c = accuracy_f1(&[1, 0], &[0, 1], 2).unwrap();
        assert_eq!((c.accuracy, c.macro_f1), (0.0, 0.0));
        assert!(matches!(
            accuracy_f1(&[0], &[0, 1], 2),
            Err(Error::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn f1_hand_confusion() {
        // labels:  0 0 0 1 1 2 2 2 2
        // preds:   0 0 1 1 2 2 2 2 0
        // class 0: tp 2, fp 1, fn 1 → 4/6
        // class 1: tp 1, fp 1, fn 1 → 2/4
        // class 2: tp 3, fp 1, fn 1 → 6/8
        let labels = [0, 0, 0, 1, 1, 2, 2, 2, 2];
        let preds = [0, 0, 1, 1, 2, 2, 2, 2, 0];
        let c = accuracy_f1(&preds, &labels, 3).unwrap();
        assert_eq!(c.accuracy, 6.0 / 9.0);
        assert_eq!(c.per_class_f1, [4.0 / 6.0, 0.5, 0.75]);
        assert_eq!(c.macro_f1, (4.0 / 6.0 + 0.5 + 0.75) / 3.0);
        let c = accuracy_f1(&[0, 0], &[0, 0], 3).unwrap();
        assert_eq!(c.per_class_f1, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn gap_examples() {
        let mut rng = Rng::new(2);
        let a = unit_rows(&mut rng, 7, 4);
        assert_eq!(modality_gap(&a, &a).unwrap(), 0.0);
        let e1 = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let e2 = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!((modality_gap(&e1, &e2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            modality_gap(&Matrix::zeros(0, 2), &e2),
            Err(Error::EmptySet)
        ));
    }

    #[test]
    fn untrained_probe_predicts_class_zero() {
        let mut rng = Rng::new(4);
        let x = rng.normal_matrix(12, 3, 1.0);
        let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let cfg = ProbeConfig {
            epochs: 0,
            ..ProbeConfig::default()
        };
        let r = linear_probe(&x, &y, &x, &y, &cfg, &mut rng).unwrap();
        assert_eq!(r.metrics.accuracy, 4.0 / 12.0);
        assert!(r.classifier.predict(&x).unwrap().iter().all(|&p| p == 0));
    }

    #[test]
    fn probe_needs_two_classes() {
        let x = Matrix::zeros(4, 2);
        assert!(matches!(
            linear_probe(&x, &[1; 4], &x, &[1; 4], &ProbeConfig::default(), &mut Rng::new(0)),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn few_shot_is_whole_items() {
        let mut rng = Rng::new(9);
        assert_eq!(few_shot_selection(40, 10.0, &mut rng).unwrap().len(), 4);
        assert_eq!(few_shot_selection(5, 1.0, &mut rng).unwrap().len(), 1);
        assert_eq!(few_shot_selection(5, 100.0, &mut rng).unwrap(), [0, 1, 2, 3, 4]);
    }
}
