//! Seeded test data.
//!
//! Generator: ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`). Each raw
//! element is the low byte of one `next_u32()` read as `i8`, arithmetically
//! shifted right by the tensor's amplitude shift. Draw order: `X` row-major,
//! then per head `W_q, W_k, W_v, b_q, b_k, b_v`, each row-major.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::config::RunParams;
use crate::engine::{HeadWeights, DATA};
use crate::fxp::QTensor;

pub const PRNG_ALGORITHM: &str = "chacha8-u32lowbyte-i8";

/// Frozen bound on `max |fixed - float|` per output element for unit-gain corpora.
/// Measured worst case over seeds 0..200 was 0.039 (h=2, d_model=32, SL=8) and
/// 0.074 (h=4, d_model=64, SL=16).
pub const ERROR_THRESHOLD: f64 = 0.125;

/// Amplitude shifts: raw values are uniform over `[-128 >> s, 127 >> s]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Amplitude {
    pub input_shift: u32,
    pub weight_shift: u32,
    pub bias_shift: u32,
}

impl Amplitude {
    /// Full-range input, weights scaled by [`unit_gain_shift`], biases at a quarter of full range.
    pub fn unit_gain(d_model: u32) -> Self {
        Amplitude { input_shift: 0, weight_shift: unit_gain_shift(d_model), bias_shift: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub x: QTensor,
    pub heads: Vec<HeadWeights>,
}

pub struct TensorRng(ChaCha8Rng);

impl TensorRng {
    pub fn new(seed: u64) -> Self {
        TensorRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn raw(&mut self, shift: u32) -> i64 {
        i64::from((self.0.next_u32() as u8 as i8) >> shift.min(7))
    }

    pub fn tensor(&mut self, rows: usize, cols: usize, shift: u32) -> QTensor {
        QTensor::from_fn(rows, cols, DATA, |_, _| self.raw(shift))
    }
}

pub fn generate(seed: u64, run: &RunParams, amp: Amplitude) -> Corpus {
    let mut rng = TensorRng::new(seed);
    let (sl, d, d_k) = (run.seq(), run.width(), run.d_k());
    let x = rng.tensor(sl, d, amp.input_shift);
    let heads = (0..run.h)
        .map(|_| {
            let w_q = rng.tensor(d_k, d, amp.weight_shift);
            let w_k = rng.tensor(d_k, d, amp.weight_shift);
            let w_v = rng.tensor(d_k, d, amp.weight_shift);
            let b_q = rng.tensor(1, d_k, amp.bias_shift);
            let b_k = rng.tensor(1, d_k, amp.bias_shift);
            let b_v = rng.tensor(1, d_k, amp.bias_shift);
            HeadWeights::new(w_q, w_k, w_v, b_q, b_k, b_v).expect("generated shapes agree")
        })
        .collect();
    Corpus { x, heads }
}

/// Weight shift that keeps projections mostly inside [-1, 1): `ceil(log2(sqrt(d_model)))`.
pub fn unit_gain_shift(d_model: u32) -> u32 {
    let mut s = 0;
    while (1u64 << (2 * s)) < u64::from(d_model) {
        s += 1;
    }
    s.min(7)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let run = RunParams::new(2, 16, 4);
        assert_eq!(generate(42, &run, Amplitude::default()), generate(42, &run, Amplitude::default()));
        assert_ne!(generate(42, &run, Amplitude::default()).x, generate(43, &run, Amplitude::default()).x);
    }

    #[test]
    fn shapes_follow_run() {
        let c = generate(1, &RunParams::new(8, 768, 64), Amplitude::default());
        assert_eq!(c.x.shape(), (64, 768));
        assert_eq!(c.heads.len(), 8);
        assert_eq!(c.heads[0].w_q.shape(), (96, 768));
        assert_eq!(c.heads[7].b_v.shape(), (1, 96));
    }

    #[test]
    fn shifts_bound_amplitude() {
        let amp = Amplitude { input_shift: 0, weight_shift: 3, bias_shift: 7 };
        let c = generate(7, &RunParams::new(1, 32, 4), amp);
        assert!(c.heads[0].w_q.data().iter().all(|&r| (-16..=15).contains(&r)));
        assert!(c.heads[0].b_q.data().iter().all(|&r| r == 0 || r == -1));
        assert!(c.x.data().iter().any(|&r| r.abs() > 64));
    }

    #[test]
    fn unit_gain_shifts() {
        assert_eq!(unit_gain_shift(1), 0);
        assert_eq!(unit_gain_shift(4), 1);
        assert_eq!(unit_gain_shift(5), 2);
        assert_eq!(unit_gain_shift(32), 3);
        assert_eq!(unit_gain_shift(64), 3);
        assert_eq!(unit_gain_shift(768), 5);
    }
}
