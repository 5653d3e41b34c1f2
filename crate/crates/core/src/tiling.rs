//! Column tiling of weight matrices and input buffers.
//!
//! Weights are stored per head as `d_k x d_model`; the row dimension is
//! already divided by the head count, so only columns are tiled. Each tile
//! is `TS` columns wide and the schedule visits them in ascending order.

use thiserror::Error;

use crate::config::{DesignParams, RunParams};
use crate::fxp::QTensor;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TilingError {
    #[error("tile [{col_lo}, {col_hi}) lies outside a tensor with {cols} columns")]
    OutOfRange { col_lo: usize, col_hi: usize, cols: usize },
    #[error("tile size {ts} does not divide width {width}")]
    NotDivisible { width: usize, ts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileStep {
    pub index: usize,
    pub col_lo: usize,
    pub col_hi: usize,
}

impl TileStep {
    pub fn width(&self) -> usize {
        self.col_hi - self.col_lo
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileSchedule {
    steps: Vec<TileStep>,
    ts: usize,
}

impl TileSchedule {
    /// Partition `[0, width)` into `width / ts` contiguous tiles.
    pub fn new(width: usize, ts: usize) -> Result<Self, TilingError> {
        if ts == 0 || width == 0 || !width.is_multiple_of(ts) {
            return Err(TilingError::NotDivisible { width, ts });
        }
        let steps =
            (0..width / ts).map(|index| TileStep { index, col_lo: index * ts, col_hi: (index + 1) * ts }).collect();
        Ok(TileSchedule { steps, ts })
    }

    pub fn steps(&self) -> &[TileStep] {
        &self.steps
    }

    pub fn tile_size(&self) -> usize {
        self.ts
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Total width covered.
    pub fn width(&self) -> usize {
        self.steps.len() * self.ts
    }
}

/// Schedule for a validated run.
///
/// Panics if `d_model` is not a multiple of the tile size, which
/// `validate_run_params` rules out.
pub fn build_tile_schedule(run: &RunParams, design: &DesignParams) -> TileSchedule {
    TileSchedule::new(run.width(), design.tile_size as usize).expect("run params were validated against the design")
}

fn slice(t: &QTensor, step: &TileStep) -> Result<QTensor, TilingError> {
    if step.col_lo > step.col_hi || step.col_hi > t.cols() {
        return Err(TilingError::OutOfRange { col_lo: step.col_lo, col_hi: step.col_hi, cols: t.cols() });
    }
    Ok(t.columns(step.col_lo, step.col_hi))
}

/// Column block of a per-head weight matrix (`d_k x d_model` -> `d_k x TS`).
pub fn slice_weight_tile(w_head: &QTensor, step: &TileStep) -> Result<QTensor, TilingError> {
    slice(w_head, step)
}

/// Column block of the input buffer (`SL x d_model` -> `SL x TS`).
pub fn slice_input_tile(x: &QTensor, step: &TileStep) -> Result<QTensor, TilingError> {
    slice(x, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fxp::QFormat;
    use proptest::prelude::*;

    fn t(rows: usize, cols: usize, data: Vec<i64>) -> QTensor {
        QTensor::new(rows, cols, QFormat::Q0_7, data).unwrap()
    }

    #[test]
    fn schedule_for_default_run() {
        let sched = build_tile_schedule(&RunParams::new(8, 768, 64), &DesignParams::default());
        assert_eq!(sched.len(), 12);
        assert_eq!(sched.steps()[0], TileStep { index: 0, col_lo: 0, col_hi: 64 });
        assert_eq!(sched.steps()[1], TileStep { index: 1, col_lo: 64, col_hi: 128 });
        assert_eq!(sched.steps()[11], TileStep { index: 11, col_lo: 704, col_hi: 768 });
    }

    #[test]
    fn degenerate_schedules() {
        let one = TileSchedule::new(64, 64).unwrap();
        assert_eq!(one.steps(), &[TileStep { index: 0, col_lo: 0, col_hi: 64 }]);
        let two = TileSchedule::new(128, 64).unwrap();
        assert_eq!(two.steps().iter().map(|s| (s.col_lo, s.col_hi)).collect::<Vec<_>>(), vec![(0, 64), (64, 128)]);
        assert!(TileSchedule::new(100, 64).is_err());
        assert!(TileSchedule::new(64, 0).is_err());
    }

    #[test]
    fn weight_slice_examples() {
        let w = t(2, 4, vec![1, 2, 3, 4, 5, 6, 7, 8]);
        let sched = TileSchedule::new(4, 2).unwrap();
        assert_eq!(slice_weight_tile(&w, &sched.steps()[1]).unwrap(), t(2, 2, vec![3, 4, 7, 8]));
        let whole = TileSchedule::new(4, 4).unwrap();
        assert_eq!(slice_weight_tile(&w, &whole.steps()[0]).unwrap(), w);
        let outside = TileStep { index: 2, col_lo: 4, col_hi: 6 };
        assert!(matches!(slice_weight_tile(&w, &outside), Err(TilingError::OutOfRange { .. })));
    }

    #[test]
    fn input_slice_examples() {
        let x = t(1, 2, vec![-5, 9]);
        let sched = TileSchedule::new(2, 1).unwrap();
        assert_eq!(slice_input_tile(&x, &sched.steps()[1]).unwrap(), t(1, 1, vec![9]));
        let whole = TileSchedule::new(2, 2).unwrap();
        assert_eq!(slice_input_tile(&x, &whole.steps()[0]).unwrap(), x);
    }

    proptest! {
        #[test]
        fn partition_law(tiles in 1usize..40, ts in 1usize..80) {
            let sched = TileSchedule::new(tiles * ts, ts).unwrap();
            prop_assert_eq!(sched.len() * ts, tiles * ts);
            let mut covered = vec![0u8; tiles * ts];
            let mut prev_hi = 0;
            for (i, s) in sched.steps().iter().enumerate() {
                prop_assert_eq!(s.index, i);
                prop_assert_eq!(s.col_lo, prev_hi);
                prop_assert_eq!(s.width(), ts);
                prev_hi = s.col_hi;
                for n in &mut covered[s.col_lo..s.col_hi] {
                    *n += 1;
                }
            }
            prop_assert!(covered.iter().all(|&n| n == 1));
        }
    }
}
