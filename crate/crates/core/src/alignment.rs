//! Monotone alignment of frames (rows) against child texts (columns).
//!
//! Two cost sources are provided:
//!
//! * [`dtw_greedy`]: a backtrack from `(T, N)` to `(1, 1)` that at every cell
//!   moves to the cheapest of the diagonal, upper and left neighbours of the
//!   raw cost matrix, accumulating every visited entry. It is not globally
//!   optimal.
//! * [`dtw_dp`]: classic dynamic programming over the accumulated-cost table.
//!
//! Paths are 1-based and listed from `(T, N)` toward `(1, 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    values: Matrix,
    beta: f64,
    reversed: bool,
}

impl CostMatrix {
    /// Wraps `values` after checking that it is non-empty with finite,
    /// non-negative entries.
    pub fn new(values: Matrix, beta: f64, reversed: bool) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::EmptyMatrix);
        }
        for i in 0..values.rows() {
            for j in 0..values.cols() {
                let v = values[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidCost {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
        Ok(Self {
            values,
            beta,
            reversed,
        })
    }

    /// Convenience constructor for hand-written matrices (β = 1, forward).
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, 1.0, false)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    /// Number of frames `T`.
    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    /// Number of child texts `N`.
    pub fn texts(&self) -> usize {
        self.values.cols()
    }

    /// 1-based entry access.
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[(i - 1, j - 1)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub cost: f64,
    /// 1-based `(frame, text)` cells from `(T, N)` down to `(1, 1)`.
    pub path: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtwAlgorithm {
    #[default]
    Greedy,
    Dp,
}

impl DtwAlgorithm {
    pub fn align(self, c: &CostMatrix) -> Result<AlignmentResult> {
        match self {
            DtwAlgorithm::Greedy => dtw_greedy(c),
            DtwAlgorithm::Dp => dtw_dp(c),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DtwAlgorithm::Greedy => "greedy",
            DtwAlgorithm::Dp => "dp",
        }
    }
}

impl std::str::FromStr for DtwAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(DtwAlgorithm::Greedy),
            "dp" => Ok(DtwAlgorithm::Dp),
            other => Err(Error::InvalidConfig(format!(
                "unknown DTW algorithm {other:?} (expected greedy or dp)"
            ))),
        }
    }
}

/// Greedy backtracking alignment.
///
/// Starting at `(T, N)` the current entry is accumulated, then the walk moves
/// diagonally if that neighbour is no more expensive than both the upper and
/// the left one, otherwise up if the upper one is no more expensive than the
/// left one, otherwise left. On the first column the only legal move is up and
/// on the first row the only legal move is left. The walk ends after `(1, 1)`.
pub fn dtw_greedy(c: &CostMatrix) -> Result<AlignmentResult> {
    let (t, n) = (c.frames(), c.texts());
    if t == 0 || n == 0 {
        return Err(Error::EmptyMatrix);
    }
    let (mut i, mut j) = (t, n);
    let mut cost = 0.0;
    let mut path = Vec::with_capacity(t + n - 1);
    while i > 0 && j > 0 {
        cost += c.at(i, j);
        path.push((i, j));
        if i > 1 && j > 1 {
            let diag = c.at(i - 1, j - 1);
            let up = c.at(i - 1, j);
            let left = c.at(i, j - 1);
            if diag <= up && diag <= left {
                i -= 1;
                j -= 1;
            } else if up <= left {
                i -= 1;
            } else {
                j -= 1;
            }
        } else if j == 1 && i > 1 {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    Ok(AlignmentResult { cost, path })
}

#[derive(Clone, Copy)]
enum Move {
    Diag,
    Up,
    Left,
}

/// Globally minimal monotone path with steps down, right and diagonal.
///
/// Backtracking prefers diagonal, then up, then left among equal accumulated
/// costs.
pub fn dtw_dp(c: &CostMatrix) -> Result<AlignmentResult> {
    let (t, n) = (c.frames(), c.texts());
    if t == 0 || n == 0 {
        return Err(Error::EmptyMatrix);
    }
    // acc[i][j] for 1-based i, j; row/column 0 are +inf borders except acc[0][0].
    let w = n + 1;
    let mut acc = vec![f64::INFINITY; (t + 1) * w];
    acc[0] = 0.0;
    for i in 1..=t {
        for j in 1..=n {
            let diag = acc[(i - 1) * w + (j - 1)];
            let up = acc[(i - 1) * w + j];
            let left = acc[i * w + (j - 1)];
            acc[i * w + j] = c.at(i, j) + diag.min(up).min(left);
        }
    }

    let mut path = Vec::with_capacity(t + n - 1);
    let (mut i, mut j) = (t, n);
    loop {
        path.push((i, j));
        if i == 1 && j == 1 {
            break;
        }
        let diag = acc[(i - 1) * w + (j - 1)];
        let up = acc[(i - 1) * w + j];
        let left = acc[i * w + (j - 1)];
        let mv = if i > 1 && j > 1 && diag <= up && diag <= left {
            Move::Diag
        } else if i > 1 && (j == 1 || up <= left) {
            Move::Up
        } else {
            Move::Left
        };
        match mv {
            Move::Diag => {
                i -= 1;
                j -= 1;
            }
            Move::Up => i -= 1,
            Move::Left => j -= 1,
        }
    }
    Ok(AlignmentResult {
        cost: acc[t * w + n],
        path,
    })
}

/// Reverses the column (child text) order and toggles the reversed flag.
pub fn reverse_columns(c: &CostMatrix) -> CostMatrix {
    let (t, n) = (c.frames(), c.texts());
    let mut values = Matrix::zeros(t, n);
    for i in 0..t {
        for j in 0..n {
            values[(i, j)] = c.values[(i, n - 1 - j)];
        }
    }
    CostMatrix {
        values,
        beta: c.beta,
        reversed: !c.reversed,
    }
}

/// Fixed-path subgradient of the alignment cost: 1 on path cells, 0 elsewhere.
pub fn dtw_subgradient(c: &CostMatrix, result: &AlignmentResult) -> Result<Matrix> {
    let (t, n) = (c.frames(), c.texts());
    let mut g = Matrix::zeros(t, n);
    for &(i, j) in &result.path {
        if i == 0 || j == 0 || i > t || j > n {
            return Err(Error::PathMismatch(i, j));
        }
        g[(i - 1, j - 1)] += 1.0;
    }
    Ok(g)
}

/// Sum of the entries along `path`, in path order.
pub fn path_cost(c: &CostMatrix, path: &[(usize, usize)]) -> Result<f64> {
    let (t, n) = (c.frames(), c.texts());
    let mut s = 0.0;
    for &(i, j) in path {
        if i == 0 || j == 0 || i > t || j > n {
            return Err(Error::PathMismatch(i, j));
        }
        s += c.at(i, j);
    }
    Ok(s)
}
