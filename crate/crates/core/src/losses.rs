//! Training objectives with hand-derived gradients.
//!
//! * [`info_nce`]: multi-positive InfoNCE over a similarity matrix, optionally
//!   averaged over both retrieval directions.
//! * [`build_cost_matrix`]: frame/text costs `c[i][j] = −log softmaxⱼ(vᵢ·bⱼ/β)`.
//! * [`dtw_hinge`]: margin between the alignment cost of the ordered child
//!   texts and of the same texts in reverse order.
//! * [`clip_lecnce`] and [`hier_lecnce`]: the clip-level and phase/video-level
//!   composite objectives.
//!
//! Every function returns the loss value together with the gradient with
//! respect to each input embedding matrix. Inputs are treated as free
//! variables; callers that produced them by normalization chain through
//! [`normalize_backward`].

use serde::{Deserialize, Serialize};

use crate::alignment::{dtw_subgradient, reverse_columns, AlignmentResult, CostMatrix, DtwAlgorithm};
use crate::error::{Error, Result};
use crate::numerics::{dot, log_sum_exp, norm, EmbeddingMatrix, Matrix, ZERO_NORM};

/// Largest tolerated deviation of an input row norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HingeForm {
    /// `max(0, DTW(C) − DTW(Ĉ) + φ)`
    #[default]
    Standard,
    /// `max(DTW(C) − DTW(Ĉ), φ)`
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub temperature_infonce: f64,
    /// Cost-matrix temperature.
    pub beta: f64,
    /// Hinge margin.
    pub phi: f64,
    /// Weight of the alignment hinge in the phase/video objective.
    pub lambda: f64,
    pub hinge_form: HingeForm,
    pub symmetric: bool,
    pub dtw_algorithm: DtwAlgorithm,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature_infonce: 0.07,
            beta: 0.1,
            phi: 0.1,
            lambda: 0.01,
            hinge_form: HingeForm::Standard,
            symmetric: true,
            dtw_algorithm: DtwAlgorithm::Greedy,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_infonce > 0.0) || !self.temperature_infonce.is_finite() {
            return Err(Error::NonPositiveTemperature(self.temperature_infonce));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::NonPositiveTemperature(self.beta));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.phi >= 0.0) || !self.phi.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "phi must be a non-negative margin, got {}",
                self.phi
            )));
        }
        Ok(())
    }
}

/// One positive per row, on the diagonal.
pub fn diagonal_positives(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|i| vec![i]).collect()
}

#[derive(Debug, Clone)]
pub struct InfoNce {
    pub value: f64,
    pub grad_sim: Matrix,
}

/// InfoNCE with a set of positive columns per row.
///
/// Row loss: `log Σⱼ e^{sᵢⱼ/τ} − log Σ_{j∈Pᵢ} e^{sᵢⱼ/τ}`, averaged over rows.
/// With `symmetric`, the same loss is also taken down every column that is a
/// positive of at least one row (its positives being those rows) and the two
/// directional means are averaged.
pub fn info_nce(
    sim: &Matrix,
    positives: &[Vec<usize>],
    temperature: f64,
    symmetric: bool,
) -> Result<InfoNce> {
    if !(temperature > 0.0) {
        return Err(Error::NonPositiveTemperature(temperature));
    }
    let (rows, cols) = sim.shape();
    if positives.len() != rows {
        return Err(Error::DimMismatch(format!(
            "{} positive sets for {rows} rows",
            positives.len()
        )));
    }
    if rows == 0 {
        return Err(Error::EmptySet);
    }
    let mut pos: Vec<Vec<usize>> = Vec::with_capacity(rows);
    for (i, p) in positives.iter().enumerate() {
        if p.is_empty() {
            return Err(Error::EmptyPositiveSet(i));
        }
        if let Some(&bad) = p.iter().find(|&&j| j >= cols) {
            return Err(Error::DimMismatch(format!(
                "row {i} positive {bad} outside {cols} columns"
            )));
        }
        let mut p = p.clone();
        p.sort_unstable();
        p.dedup();
        pos.push(p);
    }

    let direction_weight = if symmetric { 0.5 } else { 1.0 };
    let mut grad = Matrix::zeros(rows, cols);

    let mut row_total = 0.0;
    let mut buf = Vec::with_capacity(cols.max(rows));
    for (i, p_i) in pos.iter().enumerate() {
        let s = sim.row(i);
        buf.clear();
        buf.extend(p_i.iter().map(|&j| s[j]));
        let (loss, g_all, g_pos) = nce_term(s, &buf, temperature);
        row_total += loss;
        let w = direction_weight / rows as f64;
        let g = grad.row_mut(i);
        for (gj, a) in g.iter_mut().zip(&g_all) {
            *gj += w * a;
        }
        for (&j, p) in p_i.iter().zip(&g_pos) {
            g[j] -= w * p;
        }
    }
    let row_mean = row_total / rows as f64;
    if !symmetric {
        return Ok(InfoNce {
            value: row_mean,
            grad_sim: grad,
        });
    }

    let mut col_pos: Vec<Vec<usize>> = vec![Vec::new(); cols];
    for (i, p) in pos.iter().enumerate() {
        for &j in p {
            col_pos[j].push(i);
        }
    }
    let used = col_pos.iter().filter(|q| !q.is_empty()).count();
    let mut col_total = 0.0;
    let mut column = vec![0.0; rows];
    for (j, q) in col_pos.iter().enumerate() {
        if q.is_empty() {
            continue;
        }
        for (i, c) in column.iter_mut().enumerate() {
            *c = sim[(i, j)];
        }
        buf.clear();
        buf.extend(q.iter().map(|&i| column[i]));
        let (loss, g_all, g_pos) = nce_term(&column, &buf, temperature);
        col_total += loss;
        let w = direction_weight / used as f64;
        for (i, a) in g_all.iter().enumerate() {
            grad[(i, j)] += w * a;
        }
        for (&i, p) in q.iter().zip(&g_pos) {
            grad[(i, j)] -= w * p;
        }
    }
    let col_mean = col_total / used as f64;
    Ok(InfoNce {
        value: 0.5 * row_mean + 0.5 * col_mean,
        grad_sim: grad,
    })
}

/// Loss `lse(all/τ) − lse(pos/τ)` with gradients `softmax(all)/τ` and
/// `softmax(pos)/τ` (the latter to be subtracted at the positive slots).
fn nce_term(all: &[f64], pos: &[f64], temperature: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let lse_all = log_sum_exp(all, temperature);
    let lse_pos = log_sum_exp(pos, temperature);
    let g_all = all
        .iter()
        .map(|&x| (x / temperature - lse_all).exp() / temperature)
        .collect();
    let g_pos = pos
        .iter()
        .map(|&x| (x / temperature - lse_pos).exp() / temperature)
        .collect();
    // lse over a superset is never smaller; clamp the rounding residue.
    ((lse_all - lse_pos).max(0.0), g_all, g_pos)
}

fn check_unit_rows(m: &Matrix) -> Result<()> {
    for (i, r) in m.iter_rows().enumerate() {
        let n = norm(r);
        if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::RowNotNormalized { row: i, norm: n });
        }
    }
    Ok(())
}

/// `c[i][j] = −log( e^{vᵢ·bⱼ/β} / Σₖ e^{vᵢ·bₖ/β} )` for unit-norm frames `v`
/// (T×d) and child texts `b` (N×d).
pub fn build_cost_matrix(
    frames: &EmbeddingMatrix,
    texts: &EmbeddingMatrix,
    beta: f64,
) -> Result<CostMatrix> {
    if !(beta > 0.0) {
        return Err(Error::NonPositiveTemperature(beta));
    }
    if frames.cols() != texts.cols() {
        return Err(Error::DimMismatch(format!(
            "frames have dimension {}, texts {}",
            frames.cols(),
            texts.cols()
        )));
    }
    check_unit_rows(frames)?;
    check_unit_rows(texts)?;
    let sim = frames.matmul_t(texts)?;
    let mut values = Matrix::zeros(sim.rows(), sim.cols());
    for i in 0..sim.rows() {
        let row = sim.row(i);
        let lse = log_sum_exp(row, beta);
        for (j, &s) in row.iter().enumerate() {
            values[(i, j)] = (lse - s / beta).max(0.0);
        }
    }
    CostMatrix::new(values, beta, false)
}

/// Chains `∂L/∂C` back to the frame and text embeddings of a matrix built by
/// [`build_cost_matrix`].
pub fn cost_matrix_backward(
    frames: &EmbeddingMatrix,
    texts: &EmbeddingMatrix,
    cost: &CostMatrix,
    grad_cost: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let (t, n) = (cost.frames(), cost.texts());
    if grad_cost.shape() != (t, n) || frames.rows() != t || texts.rows() != n {
        return Err(Error::ShapeMismatch(format!(
            "cost {t}x{n}, grad {:?}, frames {}, texts {}",
            grad_cost.shape(),
            frames.rows(),
            texts.rows()
        )));
    }
    let beta = cost.beta();
    // ∂c_ij/∂s_ik = (p_ik − δ_jk)/β with p_ik = e^{−c_ik}.
    let mut grad_sim = Matrix::zeros(t, n);
    for i in 0..t {
        let g_row = grad_cost.row(i);
        let g_sum = g_row.iter().fold(0.0, |a, b| a + b);
        for k in 0..n {
            let p = (-cost.values()[(i, k)]).exp();
            grad_sim[(i, k)] = (p * g_sum - g_row[k]) / beta;
        }
    }
    let grad_frames = grad_sim.matmul(texts)?;
    let grad_texts = grad_sim.t_matmul(frames)?;
    Ok((grad_frames, grad_texts))
}

#[derive(Debug, Clone)]
pub struct DtwHinge {
    pub value: f64,
    pub dtw_forward: f64,
    pub dtw_reversed: f64,
    /// Whether the gradient is non-zero.
    pub active: bool,
    pub forward: AlignmentResult,
    pub reversed: AlignmentResult,
    pub grad_forward: Matrix,
    pub grad_reversed: Matrix,
}

/// Hinge between the forward alignment cost and the reversed one.
///
/// Gradients are fixed-path subgradients: `+1` on the forward path and `−1` on
/// the reversed path while the hinge is active, zero otherwise.
pub fn dtw_hinge(
    c_forward: &CostMatrix,
    c_reversed: &CostMatrix,
    phi: f64,
    form: HingeForm,
    algorithm: DtwAlgorithm,
) -> Result<DtwHinge> {
    if c_forward.values().shape() != c_reversed.values().shape() {
        return Err(Error::ShapeMismatch(format!(
            "forward {:?} vs reversed {:?}",
            c_forward.values().shape(),
            c_reversed.values().shape()
        )));
    }
    let forward = algorithm.align(c_forward)?;
    let reversed = algorithm.align(c_reversed)?;
    let gap = forward.cost - reversed.cost;
    let (value, active) = match form {
        HingeForm::Standard => {
            let v = gap + phi;
            (v.max(0.0), v > 0.0)
        }
        HingeForm::Literal => (gap.max(phi), gap > phi),
    };
    let (t, n) = c_forward.values().shape();
    let (grad_forward, grad_reversed) = if active {
        let gf = dtw_subgradient(c_forward, &forward)?;
        let gr = dtw_subgradient(c_reversed, &reversed)?.scaled(-1.0);
        (gf, gr)
    } else {
        (Matrix::zeros(t, n), Matrix::zeros(t, n))
    };
    Ok(DtwHinge {
        value,
        dtw_forward: forward.cost,
        dtw_reversed: reversed.cost,
        active,
        forward,
        reversed,
        grad_forward,
        grad_reversed,
    })
}

/// Backward pass of `u = z / ‖z‖`: `(g − u(u·g)) / ‖z‖`.
pub fn normalize_backward(unit: &[f64], pre_norm: f64, grad: &[f64]) -> Vec<f64> {
    let radial = dot(unit, grad);
    unit.iter()
        .zip(grad)
        .map(|(u, g)| (g - u * radial) / pre_norm)
        .collect()
}

/// Mean of frame embeddings, renormalized.
#[derive(Debug, Clone)]
pub struct Pooled {
    pub embedding: Vec<f64>,
    mean_norm: f64,
    count: usize,
}

pub fn mean_pool(frames: &EmbeddingMatrix) -> Result<Pooled> {
    let t = frames.rows();
    if t == 0 {
        return Err(Error::EmptySet);
    }
    let mut mean = vec![0.0; frames.cols()];
    for r in frames.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= t as f64;
    }
    let n = norm(&mean);
    if n < ZERO_NORM {
        return Err(Error::DegenerateMean(n));
    }
    Ok(Pooled {
        embedding: mean.iter().map(|m| m / n).collect(),
        mean_norm: n,
        count: t,
    })
}

/// Gradient of a pooled embedding with respect to each of its frames.
pub fn mean_pool_backward(pooled: &Pooled, grad: &[f64]) -> Matrix {
    let g = normalize_backward(&pooled.embedding, pooled.mean_norm, grad);
    let mut out = Matrix::zeros(pooled.count, g.len());
    for i in 0..pooled.count {
        for (o, v) in out.row_mut(i).iter_mut().zip(&g) {
            *o = v / pooled.count as f64;
        }
    }
    out
}

fn pool_all(segments: &[Matrix]) -> Result<(Vec<Pooled>, Matrix)> {
    let pooled = segments
        .iter()
        .map(mean_pool)
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<&[f64]> = pooled.iter().map(|p| p.embedding.as_slice()).collect();
    let m = Matrix::from_rows(&rows)?;
    Ok((pooled, m))
}

#[derive(Debug, Clone)]
pub struct ClipLoss {
    pub value: f64,
    /// Clip ↔ narration term.
    pub vl: f64,
    /// View ↔ view term.
    pub vv: f64,
    pub grad_clip_frames: Vec<Matrix>,
    pub grad_narrations: Matrix,
    pub grad_view_a: Matrix,
    pub grad_view_b: Matrix,
}

/// Clip-level objective: InfoNCE between pooled clip embeddings and their
/// narrations plus InfoNCE between two distorted views of every clip.
///
/// Row `i` of every input belongs to clip `i`; positives are diagonal.
pub fn clip_lecnce(
    clip_frames: &[Matrix],
    narrations: &EmbeddingMatrix,
    view_a: &EmbeddingMatrix,
    view_b: &EmbeddingMatrix,
    cfg: &LossConfig,
) -> Result<ClipLoss> {
    let b = clip_frames.len();
    if narrations.rows() != b || view_a.rows() != b || view_b.rows() != b {
        return Err(Error::ShapeMismatch(format!(
            "{b} clips, {} narrations, {}/{} views",
            narrations.rows(),
            view_a.rows(),
            view_b.rows()
        )));
    }
    let positives = diagonal_positives(b);
    let (pooled, clips) = pool_all(clip_frames)?;

    let sim_vl = clips.matmul_t(narrations)?;
    let vl = info_nce(&sim_vl, &positives, cfg.temperature_infonce, cfg.symmetric)?;
    let sim_vv = view_a.matmul_t(view_b)?;
    let vv = info_nce(&sim_vv, &positives, cfg.temperature_infonce, cfg.symmetric)?;

    let grad_clips = vl.grad_sim.matmul(narrations)?;
    let grad_narrations = vl.grad_sim.t_matmul(&clips)?;
    let grad_clip_frames = pooled
        .iter()
        .enumerate()
        .map(|(i, p)| mean_pool_backward(p, grad_clips.row(i)))
        .collect();
    let grad_view_a = vv.grad_sim.matmul(view_b)?;
    let grad_view_b = vv.grad_sim.t_matmul(view_a)?;

    Ok(ClipLoss {
        value: vl.value + vv.value,
        vl: vl.value,
        vv: vv.value,
        grad_clip_frames,
        grad_narrations,
        grad_view_a,
        grad_view_b,
    })
}

#[derive(Debug, Clone)]
pub struct HierLoss {
    pub value: f64,
    pub infonce: f64,
    /// Mean alignment hinge over the batch (before λ).
    pub dtw: f64,
    pub hinges: Vec<DtwHinge>,
    pub grad_segment_frames: Vec<Matrix>,
    pub grad_parents: Matrix,
    pub grad_children: Vec<Matrix>,
}

/// Phase/video-level objective `L_infonce + λ·L_dtw`.
///
/// `L_infonce` contrasts each pooled segment with its parent text. `L_dtw` is
/// the mean over samples of [`dtw_hinge`] on the cost matrix between the
/// segment frames and the ordered child texts, against the same matrix with
/// its columns reversed.
pub fn hier_lecnce(
    segment_frames: &[Matrix],
    parent_texts: &EmbeddingMatrix,
    child_texts: &[Matrix],
    cfg: &LossConfig,
) -> Result<HierLoss> {
    let b = segment_frames.len();
    if parent_texts.rows() != b || child_texts.len() != b {
        return Err(Error::ShapeMismatch(format!(
            "{b} segments, {} parents, {} child sequences",
            parent_texts.rows(),
            child_texts.len()
        )));
    }
    if let Some(i) = child_texts.iter().position(|c| c.rows() == 0) {
        return Err(Error::EmptyChildSequence(i));
    }
    let (pooled, segments) = pool_all(segment_frames)?;
    let sim = segments.matmul_t(parent_texts)?;
    let nce = info_nce(
        &sim,
        &diagonal_positives(b),
        cfg.temperature_infonce,
        cfg.symmetric,
    )?;
    let grad_segments = nce.grad_sim.matmul(parent_texts)?;
    let grad_parents = nce.grad_sim.t_matmul(&segments)?;
    let mut grad_segment_frames: Vec<Matrix> = pooled
        .iter()
        .enumerate()
        .map(|(i, p)| mean_pool_backward(p, grad_segments.row(i)))
        .collect();
    let mut grad_children: Vec<Matrix> = child_texts
        .iter()
        .map(|c| Matrix::zeros(c.rows(), c.cols()))
        .collect();

    let mut hinges = Vec::with_capacity(b);
    let mut dtw_total = 0.0;
    for i in 0..b {
        let c = build_cost_matrix(&segment_frames[i], &child_texts[i], cfg.beta)?;
        let c_rev = reverse_columns(&c);
        let h = dtw_hinge(&c, &c_rev, cfg.phi, cfg.hinge_form, cfg.dtw_algorithm)?;
        dtw_total += h.value;
        if cfg.lambda > 0.0 && h.active {
            let mut g_cost = h.grad_forward.clone();
            g_cost.add_assign(&reverse_columns_matrix(&h.grad_reversed))?;
            g_cost.scale(cfg.lambda / b as f64);
            let (gf, gc) = cost_matrix_backward(&segment_frames[i], &child_texts[i], &c, &g_cost)?;
            grad_segment_frames[i].add_assign(&gf)?;
            grad_children[i].add_assign(&gc)?;
        }
        hinges.push(h);
    }
    let dtw = dtw_total / b as f64;
    let value = if cfg.lambda == 0.0 {
        nce.value
    } else {
        nce.value + cfg.lambda * dtw
    };
    Ok(HierLoss {
        value,
        infonce: nce.value,
        dtw,
        hinges,
        grad_segment_frames,
        grad_parents,
        grad_children,
    })
}

fn reverse_columns_matrix(m: &Matrix) -> Matrix {
    let (t, n) = m.shape();
    let mut out = Matrix::zeros(t, n);
    for i in 0..t {
        for j in 0..n {
            out[(i, j)] = m[(i, n - 1 - j)];
        }
    }
    out
}
