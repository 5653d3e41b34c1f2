//! Functional model of the attention datapath.
//!
//! Each head runs the same three modules the hardware instantiates per head:
//! the tiled QKV projection, the scaled score matrix, and the
//! probability-value product, with a table-driven softmax in between. All
//! arithmetic is integer and deterministic; heads may be evaluated
//! concurrently without changing a single bit of the result.

pub mod reference;
mod softmax;
mod stages;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{validate_run_params, DesignParams, RunParams, Violation};
use crate::fxp::{FxpError, QFormat, QTensor};
use crate::tiling::{build_tile_schedule, TileSchedule, TilingError};

pub use softmax::{exp_table, softmax_rows, EXP_TABLE_FRAC_BITS, EXP_TABLE_LEN};
pub use stages::{attend, project_qkv, score_scale, scores};

/// Datapath format for activations, weights, biases, and probabilities.
pub const DATA: QFormat = QFormat::Q0_7;
/// Accumulator format for every dot product.
pub const WIDE: QFormat = QFormat::ACC;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("{what}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch { what: String, expected: (usize, usize), found: (usize, usize) },
    #[error("format mismatch: expected {expected}, found {found}")]
    FormatMismatch { expected: QFormat, found: QFormat },
    #[error("softmax row {row} has every entry masked")]
    DegenerateRow { row: usize },
    #[error("expected weights for {expected} heads, found {found}")]
    WrongHeadCount { expected: usize, found: usize },
    #[error("invalid run parameters: {}", crate::config::join_violations(.0))]
    InvalidRun(Vec<Violation>),
    #[error(transparent)]
    Tiling(#[from] TilingError),
    #[error(transparent)]
    Fxp(#[from] FxpError),
}

/// Projection parameters for one head. Weight matrices are `d_k x d_model`, biases `1 x d_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadWeights {
    pub w_q: QTensor,
    pub w_k: QTensor,
    pub w_v: QTensor,
    pub b_q: QTensor,
    pub b_k: QTensor,
    pub b_v: QTensor,
}

impl HeadWeights {
    pub fn new(
        w_q: QTensor,
        w_k: QTensor,
        w_v: QTensor,
        b_q: QTensor,
        b_k: QTensor,
        b_v: QTensor,
    ) -> Result<Self, EngineError> {
        let shape = w_q.shape();
        for w in [&w_k, &w_v] {
            if w.shape() != shape {
                return Err(EngineError::ShapeMismatch { what: "weight".into(), expected: shape, found: w.shape() });
            }
        }
        for b in [&b_q, &b_k, &b_v] {
            if b.shape() != (1, shape.0) {
                return Err(EngineError::ShapeMismatch {
                    what: "bias".into(),
                    expected: (1, shape.0),
                    found: b.shape(),
                });
            }
        }
        for t in [&w_q, &w_k, &w_v, &b_q, &b_k, &b_v] {
            if t.format() != DATA {
                return Err(EngineError::FormatMismatch { expected: DATA, found: t.format() });
            }
        }
        Ok(HeadWeights { w_q, w_k, w_v, b_q, b_k, b_v })
    }

    pub fn d_k(&self) -> usize {
        self.w_q.rows()
    }

    pub fn d_model(&self) -> usize {
        self.w_q.cols()
    }

    pub fn tensors(&self) -> [&QTensor; 6] {
        [&self.w_q, &self.w_k, &self.w_v, &self.b_q, &self.b_k, &self.b_v]
    }
}

/// Every intermediate of one head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionState {
    pub q: QTensor,
    pub k: QTensor,
    pub v: QTensor,
    /// Scaled, possibly masked scores.
    pub s_raw: QTensor,
    /// Softmax probabilities.
    pub p: QTensor,
    pub out: QTensor,
    /// Output elements whose wide accumulator clipped at some point.
    pub saturated: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MhaOutput {
    pub heads: Vec<QTensor>,
    /// `SL x d_model`; column block `i` is `heads[i]`.
    pub concat: QTensor,
    pub saturated: usize,
}

/// How heads are scheduled across threads. Results are identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeadEvaluation {
    Serial,
    #[default]
    Parallel,
}

/// Run one head through projection, scores, softmax, and the value product.
pub fn run_head(
    x: &QTensor,
    w: &HeadWeights,
    sched: &TileSchedule,
    causal_mask: bool,
) -> Result<AttentionState, EngineError> {
    let proj = stages::project_qkv_tracked(x, w, sched)?;
    let (s_raw, sat_s) = stages::scores_tracked(&proj.q, &proj.k, w.d_k(), causal_mask)?;
    let p = softmax_rows(&s_raw)?;
    let (out, sat_o) = stages::attend_tracked(&p, &proj.v)?;
    Ok(AttentionState { q: proj.q, k: proj.k, v: proj.v, s_raw, p, out, saturated: proj.saturated + sat_s + sat_o })
}

fn check_inputs(
    run: &RunParams,
    design: &DesignParams,
    x: &QTensor,
    weights: &[HeadWeights],
) -> Result<(), EngineError> {
    validate_run_params(design, run).into_result().map_err(EngineError::InvalidRun)?;
    if weights.len() != run.h as usize {
        return Err(EngineError::WrongHeadCount { expected: run.h as usize, found: weights.len() });
    }
    if x.shape() != (run.seq(), run.width()) {
        return Err(EngineError::ShapeMismatch {
            what: "input".into(),
            expected: (run.seq(), run.width()),
            found: x.shape(),
        });
    }
    if let Some(w) = weights.iter().find(|w| w.w_q.shape() != (run.d_k(), run.width())) {
        return Err(EngineError::ShapeMismatch {
            what: "weight".into(),
            expected: (run.d_k(), run.width()),
            found: w.w_q.shape(),
        });
    }
    Ok(())
}

/// All per-head intermediate states, in head order.
pub fn mha_states(
    run: &RunParams,
    design: &DesignParams,
    x: &QTensor,
    weights: &[HeadWeights],
    mode: HeadEvaluation,
) -> Result<Vec<AttentionState>, EngineError> {
    check_inputs(run, design, x, weights)?;
    let sched = build_tile_schedule(run, design);
    let one = |w: &HeadWeights| run_head(x, w, &sched, run.causal_mask);
    match mode {
        HeadEvaluation::Serial => weights.iter().map(one).collect(),
        HeadEvaluation::Parallel => weights.par_iter().map(one).collect(),
    }
}

pub fn mha_forward_with(
    run: &RunParams,
    design: &DesignParams,
    x: &QTensor,
    weights: &[HeadWeights],
    mode: HeadEvaluation,
) -> Result<MhaOutput, EngineError> {
    let states = mha_states(run, design, x, weights, mode)?;
    let saturated = states.iter().map(|s| s.saturated).sum();
    let heads: Vec<QTensor> = states.into_iter().map(|s| s.out).collect();
    let concat = QTensor::hconcat(&heads)?;
    Ok(MhaOutput { heads, concat, saturated })
}

/// Multi-head attention on the fixed-point datapath, heads evaluated in parallel.
pub fn mha_forward(
    run: &RunParams,
    design: &DesignParams,
    x: &QTensor,
    weights: &[HeadWeights],
) -> Result<MhaOutput, EngineError> {
    mha_forward_with(run, design, x, weights, HeadEvaluation::Parallel)
}

/// Elementwise error of the fixed-point output against the float reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub max_abs: f64,
    pub mean_abs: f64,
    /// `(max_abs, mean_abs)` per head.
    pub per_head: Vec<(f64, f64)>,
}

pub fn compare_to_reference(run: &RunParams, fixed: &QTensor, reference: &reference::Matrix<f64>) -> ErrorReport {
    let d_k = run.d_k();
    let h = run.h as usize;
    let mut per_head = vec![(0.0f64, 0.0f64); h];
    let mut max_abs = 0.0f64;
    let mut total = 0.0f64;
    for i in 0..fixed.rows() {
        for c in 0..fixed.cols() {
            let err = (fixed.format().to_real(fixed.get(i, c)) - reference.get(i, c)).abs();
            max_abs = max_abs.max(err);
            total += err;
            let slot = &mut per_head[c / d_k];
            slot.0 = slot.0.max(err);
            slot.1 += err;
        }
    }
    let per_head_count = (fixed.rows() * d_k) as f64;
    for slot in &mut per_head {
        slot.1 /= per_head_count;
    }
    ErrorReport { max_abs, mean_abs: total / (fixed.rows() * fixed.cols()) as f64, per_head }
}
