//! The three processing modules: QKV projection, scaled scores, and probability-value product.

use crate::fxp::{narrow_raw, quantize, Accumulator, QFormat, QTensor};
use crate::tiling::{slice_input_tile, slice_weight_tile, TileSchedule};

use super::{EngineError, HeadWeights, DATA, WIDE};

fn expect_format(t: &QTensor, fmt: QFormat) -> Result<(), EngineError> {
    if t.format() != fmt {
        return Err(EngineError::FormatMismatch { expected: fmt, found: t.format() });
    }
    Ok(())
}

fn shape_err(what: &str, expected: (usize, usize), found: (usize, usize)) -> EngineError {
    EngineError::ShapeMismatch { what: what.to_string(), expected, found }
}

/// Projections plus the number of output elements whose accumulator saturated.
pub(crate) struct Projection {
    pub q: QTensor,
    pub k: QTensor,
    pub v: QTensor,
    pub saturated: usize,
}

pub(crate) fn project_qkv_tracked(
    x: &QTensor,
    w: &HeadWeights,
    sched: &TileSchedule,
) -> Result<Projection, EngineError> {
    expect_format(x, DATA)?;
    let (sl, d_model) = x.shape();
    let d_k = w.d_k();
    if w.d_model() != d_model {
        return Err(shape_err("weights", (d_k, d_model), (d_k, w.d_model())));
    }
    if sched.width() != d_model {
        return Err(shape_err("tile schedule", (1, d_model), (1, sched.width())));
    }

    let mut accs = [
        vec![Accumulator::new(WIDE); sl * d_k],
        vec![Accumulator::new(WIDE); sl * d_k],
        vec![Accumulator::new(WIDE); sl * d_k],
    ];
    let weights = [&w.w_q, &w.w_k, &w.w_v];
    for step in sched.steps() {
        let x_tile = slice_input_tile(x, step)?;
        for (acc, full) in accs.iter_mut().zip(weights) {
            let w_tile = slice_weight_tile(full, step)?;
            for i in 0..sl {
                let xr = x_tile.row(i);
                for k in 0..d_k {
                    let a = &mut acc[i * d_k + k];
                    for (&xv, &wv) in xr.iter().zip(w_tile.row(k)) {
                        a.mac(xv, wv);
                    }
                }
            }
        }
    }

    // bias joins once, aligned to the wide fraction, after the last tile
    let bias_shift = WIDE.frac_bits() - DATA.frac_bits();
    let biases = [&w.b_q, &w.b_k, &w.b_v];
    let mut saturated = 0;
    let mut outs = Vec::with_capacity(3);
    for (mut acc, bias) in accs.into_iter().zip(biases) {
        let data = acc
            .iter_mut()
            .enumerate()
            .map(|(idx, a)| {
                a.add(i128::from(bias.get(0, idx % d_k)) << bias_shift);
                saturated += usize::from(a.saturated());
                a.narrow(DATA)
            })
            .collect();
        outs.push(QTensor::new(sl, d_k, DATA, data).expect("narrowed values are in range"));
    }
    let v = outs.pop().expect("three projections");
    let k = outs.pop().expect("three projections");
    let q = outs.pop().expect("three projections");
    Ok(Projection { q, k, v, saturated })
}

/// Query, key, and value projections for one head, accumulated tile by tile.
pub fn project_qkv(
    x: &QTensor,
    w: &HeadWeights,
    sched: &TileSchedule,
) -> Result<(QTensor, QTensor, QTensor), EngineError> {
    let p = project_qkv_tracked(x, w, sched)?;
    Ok((p.q, p.k, p.v))
}

/// `1/sqrt(d_k)` in the wide format.
pub fn score_scale(d_k: usize) -> i64 {
    quantize(1.0 / (d_k as f64).sqrt(), WIDE).expect("finite").raw()
}

pub(crate) fn scores_tracked(
    q: &QTensor,
    k: &QTensor,
    d_k: usize,
    causal_mask: bool,
) -> Result<(QTensor, usize), EngineError> {
    expect_format(q, DATA)?;
    expect_format(k, DATA)?;
    if q.cols() != k.cols() {
        return Err(shape_err("keys", (k.rows(), q.cols()), k.shape()));
    }
    let sl_q = q.rows();
    let sl_k = k.rows();
    let scale = i128::from(score_scale(d_k));
    let product_frac = 2 * WIDE.frac_bits();
    let mut saturated = 0;
    let mut data = Vec::with_capacity(sl_q * sl_k);
    for i in 0..sl_q {
        for j in 0..sl_k {
            if causal_mask && j > i {
                data.push(DATA.min_raw());
                continue;
            }
            let mut acc = Accumulator::new(WIDE);
            for (&a, &b) in q.row(i).iter().zip(k.row(j)) {
                acc.mac(a, b);
            }
            saturated += usize::from(acc.saturated());
            // min_raw is reserved for masked entries, so real scores clip one code above it
            let s = narrow_raw(i128::from(acc.raw()) * scale, product_frac, DATA).0;
            data.push(s.max(DATA.min_raw() + 1));
        }
    }
    Ok((QTensor::new(sl_q, sl_k, DATA, data).expect("narrowed values are in range"), saturated))
}

/// Scaled dot-product scores `Q K^T / sqrt(d_k)`, with optional causal masking to `min_raw`.
///
/// Unmasked scores saturate to `[min_raw + 1, max_raw]`.
pub fn scores(q: &QTensor, k: &QTensor, d_k: usize, causal_mask: bool) -> Result<QTensor, EngineError> {
    scores_tracked(q, k, d_k, causal_mask).map(|(s, _)| s)
}

pub(crate) fn attend_tracked(p: &QTensor, v: &QTensor) -> Result<(QTensor, usize), EngineError> {
    expect_format(p, DATA)?;
    expect_format(v, DATA)?;
    if p.cols() != v.rows() {
        return Err(shape_err("values", (p.cols(), v.cols()), v.shape()));
    }
    let (sl, inner) = p.shape();
    let d_k = v.cols();
    let mut saturated = 0;
    let mut data = Vec::with_capacity(sl * d_k);
    for i in 0..sl {
        let pr = p.row(i);
        for j in 0..d_k {
            let mut acc = Accumulator::new(WIDE);
            for (m, &pv) in pr.iter().enumerate().take(inner) {
                acc.mac(pv, v.get(m, j));
            }
            saturated += usize::from(acc.saturated());
            data.push(acc.narrow(DATA));
        }
    }
    Ok((QTensor::new(sl, d_k, DATA, data).expect("narrowed values are in range"), saturated))
}

/// Probability-weighted sum of value rows.
pub fn attend(p: &QTensor, v: &QTensor) -> Result<QTensor, EngineError> {
    attend_tracked(p, v).map(|(o, _)| o)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: Vec<i64>) -> QTensor {
        QTensor::new(rows, cols, DATA, data).unwrap()
    }

    fn weights(d_k: usize, d_model: usize, fill: i64, bias: [i64; 3]) -> HeadWeights {
        let w = || QTensor::from_fn(d_k, d_model, DATA, |r, c| fill * ((r + c) as i64 % 3 - 1));
        let b = |v| QTensor::from_fn(1, d_k, DATA, |_, _| v);
        HeadWeights::new(w(), w(), w(), b(bias[0]), b(bias[1]), b(bias[2])).unwrap()
    }

    #[test]
    fn zero_input_leaves_bias() {
        let w = weights(3, 8, 40, [5, -7, 100]);
        let x = QTensor::zeros(4, 8, DATA);
        let (q, k, v) = project_qkv(&x, &w, &TileSchedule::new(8, 4).unwrap()).unwrap();
        assert!(q.data().iter().all(|&r| r == 5));
        assert!(k.data().iter().all(|&r| r == -7));
        assert!(v.data().iter().all(|&r| r == 100));
    }

    #[test]
    fn tile_count_does_not_change_projection() {
        let w = weights(2, 8, 90, [1, 2, 3]);
        let x = QTensor::from_fn(3, 8, DATA, |r, c| (r as i64 * 37 + c as i64 * 11) % 255 - 127);
        let one = project_qkv(&x, &w, &TileSchedule::new(8, 8).unwrap()).unwrap();
        let four = project_qkv(&x, &w, &TileSchedule::new(8, 2).unwrap()).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn projection_shape_errors() {
        let w = weights(2, 8, 1, [0; 3]);
        let x = QTensor::zeros(2, 6, DATA);
        assert!(matches!(
            project_qkv(&x, &w, &TileSchedule::new(6, 3).unwrap()),
            Err(EngineError::ShapeMismatch { .. })
        ));
        let x = QTensor::zeros(2, 8, DATA);
        assert!(matches!(
            project_qkv(&x, &w, &TileSchedule::new(4, 4).unwrap()),
            Err(EngineError::ShapeMismatch { .. })
        ));
        let wide = QTensor::zeros(2, 8, WIDE);
        assert!(matches!(
            project_qkv(&wide, &w, &TileSchedule::new(8, 4).unwrap()),
            Err(EngineError::FormatMismatch { .. })
        ));
    }

    #[test]
    fn score_examples() {
        let z = QTensor::zeros(3, 2, DATA);
        assert!(scores(&z, &z, 2, false).unwrap().data().iter().all(|&r| r == 0));
        let half = t(1, 1, vec![64]);
        assert_eq!(scores(&half, &half, 1, false).unwrap().data(), &[32]);
        let q = t(2, 1, vec![100, -100]);
        let s = scores(&q, &q, 1, true).unwrap();
        assert_eq!(s.get(0, 1), DATA.min_raw());
        assert_ne!(s.get(1, 0), DATA.min_raw());
        // -1.0 would collide with the mask code
        let a = t(1, 1, vec![127]);
        let b = t(1, 1, vec![-128]);
        assert_eq!(scores(&a, &b, 1, false).unwrap().data(), &[DATA.min_raw() + 1]);
        assert!(matches!(scores(&q, &t(2, 2, vec![0; 4]), 1, false), Err(EngineError::ShapeMismatch { .. })));
    }

    #[test]
    fn scale_constant() {
        assert_eq!(score_scale(1), 16384);
        assert_eq!(score_scale(4), 8192);
        // 16384 / sqrt(96) = 1672.16
        assert_eq!(score_scale(96), 1672);
    }

    #[test]
    fn attend_examples() {
        let v = t(3, 2, vec![10, -20, 64, 127, -128, 3]);
        let p = t(3, 3, vec![0, 127, 0, 127, 0, 0, 0, 0, 127]);
        let out = attend(&p, &v).unwrap();
        // 127/128 * v, rounded
        assert_eq!(out.data(), &[64, 126, 10, -20, -127, 3]);
        let zero_v = QTensor::zeros(3, 2, DATA);
        assert!(attend(&p, &zero_v).unwrap().data().iter().all(|&r| r == 0));
        assert!(matches!(attend(&p, &t(2, 2, vec![0; 4])), Err(EngineError::ShapeMismatch { .. })));
    }
}
