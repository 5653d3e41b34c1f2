//! Row softmax over 8-bit scores using a 256-entry exponential table.
//!
//! For a row with maximum code `m`, entry `s` maps to table index `m - s`
//! (0..=255). Table entries are `exp(-k * 2^-7)` in unsigned Q0.16, so a row
//! is normalized by an exact integer sum and each probability is one
//! integer division rounded half to even.

use std::sync::OnceLock;

use crate::fxp::{QFormat, QTensor};

use super::EngineError;

pub const EXP_TABLE_LEN: usize = 256;
pub const EXP_TABLE_FRAC_BITS: u32 = 16;

/// `table[k] = round(exp(-k / 128) * 2^16)`.
pub fn exp_table() -> &'static [u32; EXP_TABLE_LEN] {
    static TABLE: OnceLock<[u32; EXP_TABLE_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let lsb = QFormat::Q0_7.lsb();
        let one = f64::from(1u32 << EXP_TABLE_FRAC_BITS);
        std::array::from_fn(|k| ((-(k as f64) * lsb).exp() * one).round_ties_even() as u32)
    })
}

/// `round_half_even(num / den)` for non-negative integers.
fn div_round_half_even(num: u128, den: u128) -> u128 {
    let q = num / den;
    let r = num % den;
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
    }
}

/// Softmax of one row of raw codes. Entries equal to `min_raw` are masked and get probability 0.
pub fn softmax_row(row: &[i64], fmt: QFormat, out: &mut [i64]) -> Result<(), ()> {
    let masked = fmt.min_raw();
    let max = row.iter().copied().filter(|&s| s != masked).max().ok_or(())?;
    let table = exp_table();
    let index = |s: i64| (max - s) as usize;
    let sum: u128 = row.iter().filter(|&&s| s != masked).map(|&s| u128::from(table[index(s)])).sum();
    let scale = 1u128 << QFormat::Q0_7.frac_bits();
    for (o, &s) in out.iter_mut().zip(row) {
        *o = if s == masked {
            0
        } else {
            let p = div_round_half_even(u128::from(table[index(s)]) * scale, sum);
            QFormat::Q0_7.saturate(p as i128).0
        };
    }
    Ok(())
}

/// Softmax applied independently to every row of an 8-bit score matrix.
pub fn softmax_rows(s: &QTensor) -> Result<QTensor, EngineError> {
    if s.format() != QFormat::Q0_7 {
        return Err(EngineError::FormatMismatch { expected: QFormat::Q0_7, found: s.format() });
    }
    let (rows, cols) = s.shape();
    let mut data = vec![0i64; rows * cols];
    for r in 0..rows {
        softmax_row(s.row(r), s.format(), &mut data[r * cols..(r + 1) * cols])
            .map_err(|()| EngineError::DegenerateRow { row: r })?;
    }
    Ok(QTensor::new(rows, cols, QFormat::Q0_7, data).expect("probabilities are in range"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q: QFormat = QFormat::Q0_7;

    fn row(data: Vec<i64>) -> QTensor {
        QTensor::new(1, data.len(), Q, data).unwrap()
    }

    #[test]
    fn table_endpoints() {
        let t = exp_table();
        assert_eq!(t[0], 65536);
        assert_eq!(t[64], 39750); // exp(-0.5) * 65536 = 39749.59
        assert_eq!(t[128], 24109); // exp(-1) * 65536 = 24109.35
        assert!(t.windows(2).all(|w| w[0] >= w[1]));
        assert!(t[255] > 0);
    }

    #[test]
    fn table_checksum() {
        // every entry sits at least 0.001 away from a rounding boundary, so libm differences cannot move it
        let t = exp_table();
        let sum: u64 = t.iter().map(|&v| u64::from(v)).sum();
        let weighted: u64 = t.iter().enumerate().map(|(k, &v)| k as u64 * u64::from(v)).sum();
        assert_eq!((sum, t[255], weighted), (7_281_699, 8939, 636_654_309));
    }

    #[test]
    fn uniform_row() {
        let p = softmax_rows(&row(vec![17; 4])).unwrap();
        assert_eq!(p.data(), &[32, 32, 32, 32]);
    }

    #[test]
    fn one_hot_with_masking() {
        let p = softmax_rows(&row(vec![-128, 127, -128, -128])).unwrap();
        assert_eq!(p.data(), &[0, 127, 0, 0]);
    }

    #[test]
    fn two_element_row_matches_scalar_oracle() {
        // softmax(0.5, 0.0) = (0.62246, 0.37754) -> x128 = (79.67, 48.33)
        let e = (0.5f64).exp();
        let (p0, p1) = (e / (e + 1.0), 1.0 / (e + 1.0));
        assert!((p0 - 0.62246).abs() < 1e-5 && (p1 - 0.37754).abs() < 1e-5);
        assert_eq!(((p0 * 128.0).round_ties_even(), (p1 * 128.0).round_ties_even()), (80.0, 48.0));
        let p = softmax_rows(&row(vec![64, 0])).unwrap();
        assert_eq!(p.data(), &[80, 48]);
    }

    #[test]
    fn all_masked_row_is_degenerate() {
        let s = QTensor::new(2, 2, Q, vec![1, 2, -128, -128]).unwrap();
        assert_eq!(softmax_rows(&s), Err(EngineError::DegenerateRow { row: 1 }));
    }

    proptest! {
        #[test]
        fn row_sums_near_one(data in prop::collection::vec(-127i64..=127, 2..64)) {
            let n = data.len();
            let p = softmax_rows(&row(data)).unwrap();
            let sum: f64 = p.dequantize().iter().sum();
            let tol = n as f64 * 2f64.powi(-8);
            prop_assert!((sum - 1.0).abs() <= tol, "sum {} outside 1 +- {}", sum, tol);
        }

        #[test]
        fn close_to_float_softmax(data in prop::collection::vec(-127i64..=127, 1..32)) {
            let p = softmax_rows(&row(data.clone())).unwrap();
            let reals: Vec<f64> = data.iter().map(|&r| Q.to_real(r)).collect();
            let m = reals.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = reals.iter().map(|x| (x - m).exp()).sum();
            for (i, x) in reals.iter().enumerate() {
                let exact = (x - m).exp() / z;
                prop_assert!((Q.to_real(p.get(0, i)) - exact).abs() <= 2f64.powi(-7));
            }
        }
    }
}
