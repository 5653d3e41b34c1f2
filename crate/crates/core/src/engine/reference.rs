//! Floating-point multi-head attention, used only to measure the fixed-point error.

use num_traits::Float;

use crate::config::RunParams;
use crate::fxp::QTensor;

use super::{EngineError, HeadWeights};

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Float> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    /// Real-valued mirror of a fixed-point tensor.
    pub fn from_qtensor(t: &QTensor) -> Self {
        let data = t.dequantize().into_iter().map(|x| T::from(x).expect("representable")).collect();
        Matrix { rows: t.rows(), cols: t.cols(), data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Real mirror of one head's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RefHeadWeights<T> {
    pub w_q: Matrix<T>,
    pub w_k: Matrix<T>,
    pub w_v: Matrix<T>,
    pub b_q: Vec<T>,
    pub b_k: Vec<T>,
    pub b_v: Vec<T>,
}

impl<T: Float> RefHeadWeights<T> {
    pub fn from_quantized(w: &HeadWeights) -> Self {
        let bias = |b: &QTensor| Matrix::<T>::from_qtensor(b).data;
        RefHeadWeights {
            w_q: Matrix::from_qtensor(&w.w_q),
            w_k: Matrix::from_qtensor(&w.w_k),
            w_v: Matrix::from_qtensor(&w.w_v),
            b_q: bias(&w.b_q),
            b_k: bias(&w.b_k),
            b_v: bias(&w.b_v),
        }
    }
}

/// `x * w^T + b` for `w` stored as `d_k x d_model`.
fn project<T: Float>(x: &Matrix<T>, w: &Matrix<T>, b: &[T]) -> Matrix<T> {
    let mut out = Matrix::zeros(x.rows, w.rows);
    for i in 0..x.rows {
        for (k, &bias) in b.iter().enumerate().take(w.rows) {
            let dot = x.row(i).iter().zip(w.row(k)).fold(T::zero(), |s, (&a, &c)| s + a * c);
            out.set(i, k, dot + bias);
        }
    }
    out
}

/// One head of `softmax(mask(Q K^T / sqrt(d_k))) V`.
pub fn head_reference<T: Float>(x: &Matrix<T>, w: &RefHeadWeights<T>, causal_mask: bool) -> Matrix<T> {
    let q = project(x, &w.w_q, &w.b_q);
    let k = project(x, &w.w_k, &w.b_k);
    let v = project(x, &w.w_v, &w.b_v);
    let sl = x.rows;
    let d_k = q.cols;
    let scale = T::one() / T::from(d_k).expect("d_k fits").sqrt();
    let mut out = Matrix::zeros(sl, d_k);
    let mut weights = vec![T::zero(); sl];
    for i in 0..sl {
        let visible = if causal_mask { i + 1 } else { sl };
        for (j, w) in weights.iter_mut().enumerate() {
            *w = if j < visible {
                q.row(i).iter().zip(k.row(j)).fold(T::zero(), |s, (&a, &c)| s + a * c) * scale
            } else {
                T::neg_infinity()
            };
        }
        let max = weights.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for w in weights.iter_mut() {
            *w = (*w - max).exp();
            total = total + *w;
        }
        for c in 0..d_k {
            let acc = weights.iter().enumerate().fold(T::zero(), |s, (m, &p)| s + p * v.get(m, c));
            out.set(i, c, acc / total);
        }
    }
    out
}

/// Float multi-head attention over real mirrors, heads concatenated column-wise.
pub fn mha_reference<T: Float>(
    run: &RunParams,
    x: &Matrix<T>,
    weights: &[RefHeadWeights<T>],
) -> Result<Matrix<T>, EngineError> {
    if weights.len() != run.h as usize {
        return Err(EngineError::WrongHeadCount { expected: run.h as usize, found: weights.len() });
    }
    if x.rows != run.seq() || x.cols != run.width() {
        return Err(EngineError::ShapeMismatch {
            what: "input".into(),
            expected: (run.seq(), run.width()),
            found: (x.rows, x.cols),
        });
    }
    let d_k = run.d_k();
    let mut out = Matrix::zeros(run.seq(), run.width());
    for (head, w) in weights.iter().enumerate() {
        let o = head_reference(x, w, run.causal_mask);
        for i in 0..o.rows {
            for c in 0..d_k {
                out.set(i, head * d_k + c, o.get(i, c));
            }
        }
    }
    Ok(out)
}
