//! Rotary application, attention scores, causal masking and softmax.
//!
//! Pairs are adjacent: pair `i` (0-based) covers columns `2i` and `2i + 1`.
//! The half-split convention used by some checkpoints is a permutation of
//! this one and is not supported.

use std::fmt::Write as _;

use half::f16;
use ndarray::{s, Array2, ArrayView2, Axis};

use crate::encoding::{xpos_decay, FrequencyBasis, PositionSchedule, Precision, XPosParams};
use crate::{Error, Result};

/// One head's queries, keys or values: an `n × d` matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTensor {
    data: Array2<f64>,
}

impl HeadTensor {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "head tensor entries must be finite, found {v}"
            )));
        }
        Ok(HeadTensor { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        HeadTensor::new(data)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    pub fn row(&self, j: usize) -> Vec<f64> {
        self.data.row(j).to_vec()
    }
}

/// Cosines and sines of `position_j · θ_i` for every row and pair.
#[derive(Debug, Clone)]
pub struct RotaryTable {
    cos: Array2<f64>,
    sin: Array2<f64>,
}

impl RotaryTable {
    pub fn new(schedule: &PositionSchedule, basis: &FrequencyBasis) -> Self {
        let n = schedule.len();
        let pairs = basis.pairs();
        let mut cos = Array2::zeros((n, pairs));
        let mut sin = Array2::zeros((n, pairs));
        for (j, &p) in schedule.positions().iter().enumerate() {
            for (i, &f) in basis.freqs().iter().enumerate() {
                let (s, c) = (p * f).sin_cos();
                cos[[j, i]] = c;
                sin[[j, i]] = s;
            }
        }
        RotaryTable { cos, sin }
    }

    pub fn rows(&self) -> usize {
        self.cos.nrows()
    }

    pub fn pairs(&self) -> usize {
        self.cos.ncols()
    }

    fn check(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.nrows() != self.rows() || x.ncols() != 2 * self.pairs() {
            return Err(Error::Shape(format!(
                "tensor is {}x{} but rotary table covers {} rows of dimension {}",
                x.nrows(),
                x.ncols(),
                self.rows(),
                2 * self.pairs()
            )));
        }
        Ok(())
    }

    fn apply(&self, x: ArrayView2<f64>, sign: f64) -> Result<Array2<f64>> {
        self.check(&x)?;
        let mut out = Array2::zeros(x.raw_dim());
        for j in 0..x.nrows() {
            for i in 0..self.pairs() {
                let c = self.cos[[j, i]];
                let s = sign * self.sin[[j, i]];
                let (a, b) = (x[[j, 2 * i]], x[[j, 2 * i + 1]]);
                out[[j, 2 * i]] = a * c - b * s;
                out[[j, 2 * i + 1]] = a * s + b * c;
            }
        }
        Ok(out)
    }

    /// Rotates each pair forward by its angle.
    pub fn rotate(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.apply(x, 1.0)
    }

    /// Applies the transpose (inverse) rotation; used to pull gradients back
    /// through the rotary map.
    pub fn rotate_back(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.apply(x, -1.0)
    }
}

/// Rotates every 2-slice of `x` by `position · θ`.
pub fn apply_rotary(
    x: &HeadTensor,
    schedule: &PositionSchedule,
    basis: &FrequencyBasis,
) -> Result<HeadTensor> {
    if x.d() % 2 != 0 {
        return Err(Error::InvalidDimension(x.d()));
    }
    if x.d() != basis.d() {
        return Err(Error::Shape(format!(
            "tensor dimension {} does not match basis dimension {}",
            x.d(),
            basis.d()
        )));
    }
    if schedule.len() != x.n() {
        return Err(Error::Shape(format!(
            "schedule has {} positions for {} rows",
            schedule.len(),
            x.n()
        )));
    }
    let table = RotaryTable::new(schedule, basis);
    Ok(HeadTensor {
        data: table.rotate(x.data.view())?,
    })
}

/// An `n × n` attention score matrix, either raw (masked entries hold
/// `-inf`) or row-normalized (masked entries hold exactly 0).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    data: Array2<f64>,
    normalized: bool,
    causal: bool,
    empty_rows: Vec<usize>,
}

/// Summary of the unmasked entries of a raw score matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub max_abs: f64,
    pub count: usize,
}

impl ScoreMatrix {
    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.data[[m, n]]
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_causal(&self) -> bool {
        self.causal
    }

    pub fn is_masked(&self, m: usize, n: usize) -> bool {
        self.causal && n > m
    }

    /// Rows that had no allowed entry when normalized; they are all zero.
    pub fn empty_rows(&self) -> &[usize] {
        &self.empty_rows
    }

    pub fn stats(&self) -> ScoreStats {
        let mut st = ScoreStats {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            mean: 0.0,
            max_abs: 0.0,
            count: 0,
        };
        let mut sum = 0.0;
        for ((m, n), &v) in self.data.indexed_iter() {
            if self.is_masked(m, n) {
                continue;
            }
            st.min = st.min.min(v);
            st.max = st.max.max(v);
            st.max_abs = st.max_abs.max(v.abs());
            sum += v;
            st.count += 1;
        }
        if st.count > 0 {
            st.mean = sum / st.count as f64;
        }
        st
    }

    /// Row-major CSV, masked entries written as empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for m in 0..self.n() {
            for n in 0..self.data.ncols() {
                if n > 0 {
                    out.push(',');
                }
                if !self.is_masked(m, n) {
                    let _ = write!(out, "{}", self.data[[m, n]]);
                }
            }
            out.push('\n');
        }
        out
    }
}

fn pair_dot(a: &ArrayView2<f64>, b: &ArrayView2<f64>, m: usize, n: usize, i: usize) -> f64 {
    a[[m, 2 * i]] * b[[n, 2 * i]] + a[[m, 2 * i + 1]] * b[[n, 2 * i + 1]]
}

/// Scores from already-rotated queries and keys.
///
/// Without xPos, `S[m,n] = ⟨rq_m, rk_n⟩ / √d`. With xPos in wide precision,
/// each pair's contribution is weighted by the fused factor
/// `ζ_i^((p_m − p_n)/scale_base)`, which is exactly 1 on the diagonal. In
/// narrow precision the query and key amplitudes are materialized
/// separately in half precision, which overflows for long contexts.
pub fn rotated_scores(
    rq: ArrayView2<f64>,
    rk: ArrayView2<f64>,
    positions: &[f64],
    xpos: Option<&XPosParams>,
    causal: bool,
) -> Result<ScoreMatrix> {
    let (n, d) = rq.dim();
    if rk.dim() != (n, d) {
        return Err(Error::Shape(format!(
            "queries are {n}x{d} but keys are {}x{}",
            rk.nrows(),
            rk.ncols()
        )));
    }
    if positions.len() != n {
        return Err(Error::Shape(format!(
            "{} positions for {n} rows",
            positions.len()
        )));
    }
    if d % 2 != 0 {
        return Err(Error::InvalidDimension(d));
    }
    if let Some(x) = xpos {
        if x.decay().len() * 2 != d {
            return Err(Error::Shape(format!(
                "xPos decay has {} pairs for head dimension {d}",
                x.decay().len()
            )));
        }
        if x.precision() == Precision::Narrow {
            return narrow_scores(rq, rk, positions, x, causal);
        }
    }
    let pairs = d / 2;
    let sqrt_d = (d as f64).sqrt();
    let mut data = match xpos.filter(|x| !x.is_identity()) {
        None => rq.dot(&rk.t()).mapv_into(|v| v / sqrt_d),
        Some(x) => {
            let mut data = Array2::zeros((n, n));
            for m in 0..n {
                let upto = if causal { m + 1 } else { n };
                for k in 0..upto {
                    let offset = positions[m] - positions[k];
                    let mut acc = 0.0;
                    for i in 0..pairs {
                        acc += x.relative_factor(i, offset) * pair_dot(&rq, &rk, m, k, i);
                    }
                    data[[m, k]] = acc / sqrt_d;
                }
            }
            data
        }
    };
    if causal {
        for m in 0..n {
            data.row_mut(m).slice_mut(s![m + 1..]).fill(f64::NEG_INFINITY);
        }
    }
    Ok(ScoreMatrix {
        data,
        normalized: false,
        causal,
        empty_rows: Vec::new(),
    })
}

fn to_half(v: f64, position: f64, component: usize) -> Result<f16> {
    let h = f16::from_f64(v);
    if h.is_infinite() || h.is_nan() {
        return Err(Error::NumericOverflow {
            position,
            component,
            value: v,
        });
    }
    Ok(h)
}

fn narrow_scores(
    rq: ArrayView2<f64>,
    rk: ArrayView2<f64>,
    positions: &[f64],
    xpos: &XPosParams,
    causal: bool,
) -> Result<ScoreMatrix> {
    let (n, d) = rq.dim();
    let mut q_half = Vec::with_capacity(n * d);
    let mut k_half = Vec::with_capacity(n * d);
    for (j, &p) in positions.iter().enumerate() {
        let up = xpos_decay(d, xpos, p)?;
        let down = xpos_decay(d, xpos, -p)?;
        for c in 0..d {
            q_half.push(to_half(rq[[j, c]] * up[c / 2], p, c / 2)?);
            k_half.push(to_half(rk[[j, c]] * down[c / 2], -p, c / 2)?);
        }
    }
    let sqrt_d = (d as f32).sqrt();
    let mut data = Array2::zeros((n, n));
    for m in 0..n {
        for k in 0..n {
            if causal && k > m {
                data[[m, k]] = f64::NEG_INFINITY;
                continue;
            }
            let acc: f32 = (0..d)
                .map(|c| q_half[m * d + c].to_f32() * k_half[k * d + c].to_f32())
                .sum();
            data[[m, k]] = f64::from(acc / sqrt_d);
        }
    }
    Ok(ScoreMatrix {
        data,
        normalized: false,
        causal,
        empty_rows: Vec::new(),
    })
}

/// Pre-softmax scores `⟨rot(q_m), rot(k_n)⟩ / √d`, optionally xPos-weighted
/// and causally masked.
pub fn scores(
    q: &HeadTensor,
    k: &HeadTensor,
    schedule: &PositionSchedule,
    basis: &FrequencyBasis,
    xpos: Option<&XPosParams>,
    causal: bool,
) -> Result<ScoreMatrix> {
    if q.n() != k.n() || q.d() != k.d() {
        return Err(Error::Shape(format!(
            "queries are {}x{} but keys are {}x{}",
            q.n(),
            q.d(),
            k.n(),
            k.d()
        )));
    }
    let rq = apply_rotary(q, schedule, basis)?;
    let rk = apply_rotary(k, schedule, basis)?;
    rotated_scores(
        rq.data.view(),
        rk.data.view(),
        schedule.positions(),
        xpos,
        causal,
    )
}

/// Numerically stable row softmax. Masked entries become exactly 0; a row
/// with no allowed entry becomes all zeros and is listed in
/// [`ScoreMatrix::empty_rows`].
pub fn softmax_rows(scores: &ScoreMatrix) -> Result<ScoreMatrix> {
    if scores.normalized {
        return Err(Error::InvalidParameter(
            "score matrix is already normalized".into(),
        ));
    }
    let mut data = scores.data.clone();
    let mut empty_rows = Vec::new();
    for (m, mut row) in data.axis_iter_mut(Axis(0)).enumerate() {
        let max = row
            .iter()
            .copied()
            .filter(|v| *v != f64::NEG_INFINITY)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            row.fill(0.0);
            empty_rows.push(m);
            continue;
        }
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = if *v == f64::NEG_INFINITY {
                0.0
            } else {
                (*v - max).exp()
            };
            z += *v;
        }
        row.mapv_inplace(|v| v / z);
    }
    Ok(ScoreMatrix {
        data,
        normalized: true,
        causal: scores.causal,
        empty_rows,
    })
}

/// `softmax(scores) · v`.
#[allow(clippy::too_many_arguments)]
pub fn attend(
    q: &HeadTensor,
    k: &HeadTensor,
    v: &HeadTensor,
    schedule: &PositionSchedule,
    basis: &FrequencyBasis,
    xpos: Option<&XPosParams>,
    causal: bool,
) -> Result<HeadTensor> {
    if v.n() != q.n() {
        return Err(Error::Shape(format!(
            "values have {} rows for {} queries",
            v.n(),
            q.n()
        )));
    }
    let probs = softmax_rows(&scores(q, k, schedule, basis, xpos, causal)?)?;
    Ok(HeadTensor {
        data: probs.data.dot(&v.data),
    })
}

/// The `[start, end)` rows of `x` as a fresh head tensor.
pub fn slice_rows(x: &HeadTensor, start: usize, end: usize) -> HeadTensor {
    HeadTensor {
        data: x.data.slice(s![start..end, ..]).to_owned(),
    }
}
