use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{DesignParams, ResourceVector, RunParams};

use super::cycles::estimate_cycles;

const FROZEN: &str = include_str!("../../calibration/u55c.toml");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CalibrationError {
    #[error("cannot parse calibration file: {0}")]
    Parse(String),
    #[error("no calibration reaches the target with the given search ranges")]
    NoSolution,
}

/// Affine cost of one resource kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceCoefficients {
    /// Per head, per tile column (QKV projection PEs).
    pub qkv: u64,
    /// Per head, per head-dimension element (score PEs).
    pub qk: u64,
    /// Per head, per sequence position (value-product PEs).
    pub sv: u64,
    pub overhead: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceModel {
    pub dsp: ResourceCoefficients,
    pub bram18k: ResourceCoefficients,
    pub lut: ResourceCoefficients,
    pub ff: ResourceCoefficients,
}

/// Frozen constants fitting the analytical model to measured numbers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub mem_bytes_per_cycle: u32,
    pub pipeline_depth: u32,
    pub softmax_cycles_per_row: u32,
    pub resources: ResourceModel,
}

impl Calibration {
    /// The checked-in calibration for the U55C build.
    pub fn frozen() -> Calibration {
        Calibration::from_toml(FROZEN).expect("checked-in calibration parses")
    }

    pub fn from_toml(text: &str) -> Result<Calibration, CalibrationError> {
        toml::from_str(text).map_err(|e| CalibrationError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration serializes")
    }
}

/// A measured latency used to fit or check the cycle model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyAnchor {
    pub run: RunParams,
    pub cycles: u64,
}

/// Cycle constants solved by [`calibrate_cycle_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleFit {
    pub mem_bytes_per_cycle: u32,
    pub pipeline_depth: u32,
    pub softmax_cycles_per_row: u32,
    /// Worst relative error over the checks, in parts per million.
    pub worst_error_ppm: u64,
}

/// Search bandwidth and pipeline depth, solve the softmax cost so `target` is hit
/// exactly, and keep the solution with the smallest worst-case error on `checks`.
///
/// Ties go to the smaller bandwidth, then the smaller depth.
pub fn calibrate_cycle_model(
    template: &DesignParams,
    target: LatencyAnchor,
    checks: &[LatencyAnchor],
    bandwidths: std::ops::RangeInclusive<u32>,
    depths: std::ops::RangeInclusive<u32>,
) -> Result<CycleFit, CalibrationError> {
    let mut best: Option<CycleFit> = None;
    let seq = u64::from(target.run.seq_len);
    for b in bandwidths {
        for d in depths.clone() {
            let mut design = template.clone();
            design.mem_bytes_per_cycle = b;
            design.pipeline_depth = d;
            design.softmax_cycles_per_row = 0;
            let base = estimate_cycles(&design, &target.run).total_cycles;
            if base >= target.cycles || !(target.cycles - base).is_multiple_of(seq) {
                continue;
            }
            let c_sm = (target.cycles - base) / seq;
            let Ok(c_sm) = u32::try_from(c_sm) else { continue };
            design.softmax_cycles_per_row = c_sm;
            let worst = checks
                .iter()
                .map(|a| {
                    let got = estimate_cycles(&design, &a.run).total_cycles;
                    (got.abs_diff(a.cycles) as u128 * 1_000_000 / u128::from(a.cycles)) as u64
                })
                .max()
                .unwrap_or(0);
            let fit = CycleFit {
                mem_bytes_per_cycle: b,
                pipeline_depth: d,
                softmax_cycles_per_row: c_sm,
                worst_error_ppm: worst,
            };
            if best.is_none_or(|cur| worst < cur.worst_error_ppm) {
                best = Some(fit);
            }
        }
    }
    best.ok_or(CalibrationError::NoSolution)
}

/// Overhead that makes `coeffs` reproduce `target` on `design`.
pub fn fit_overhead(design: &DesignParams, coeffs: ResourceCoefficients, target: u64) -> Option<u64> {
    let mut probe = coeffs;
    probe.overhead = 0;
    let variable = super::resources::estimate_one(design, &probe);
    target.checked_sub(variable)
}

/// Resource targets for all four kinds, fitted with [`fit_overhead`].
pub fn fit_resource_model(
    design: &DesignParams,
    coeffs: ResourceModel,
    target: ResourceVector,
) -> Option<ResourceModel> {
    let fit =
        |c: ResourceCoefficients, t| fit_overhead(design, c, t).map(|overhead| ResourceCoefficients { overhead, ..c });
    Some(ResourceModel {
        dsp: fit(coeffs.dsp, target.dsp)?,
        bram18k: fit(coeffs.bram18k, target.bram18k)?,
        lut: fit(coeffs.lut, target.lut)?,
        ff: fit(coeffs.ff, target.ff)?,
    })
}
