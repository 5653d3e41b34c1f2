//! Analytical performance and resource model.
//!
//! Cycle counts are integers. Latency, GOP, and GOPS are produced in any
//! [`Scalar`]; with [`crate::Rational`] the identity
//! `gops * latency_s == gop` holds exactly for every report.

mod calibration;
mod cycles;
mod dse;
mod resources;

use thiserror::Error;

use crate::config::{validate_run_params, DesignParams, ResourceVector, RunParams, Violation};
use crate::scalar::Scalar;

pub use calibration::{
    calibrate_cycle_model, fit_overhead, fit_resource_model, Calibration, CalibrationError, CycleFit, LatencyAnchor,
    ResourceCoefficients, ResourceModel,
};
pub use cycles::{estimate_cycles, tile_load_bytes, CycleBreakdown};
pub use dse::{dse_sweep, DseEntry};
pub use resources::{estimate_resources, estimate_resources_with};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerfError {
    #[error("latency is zero")]
    DivisionByZero,
    #[error("no candidate configuration is feasible")]
    NoFeasibleConfig,
    #[error("invalid run parameters: {}", crate::config::join_violations(.0))]
    InvalidRun(Vec<Violation>),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

/// Operations per layer: two per MAC over the three projections, `Q K^T`, and `S V`.
pub fn op_count_ops(run: &RunParams) -> u128 {
    let sl = u128::from(run.seq_len);
    let d = u128::from(run.d_model);
    2 * (3 * sl * d * d + 2 * sl * sl * d)
}

/// Giga-operations per layer.
pub fn op_count<T: Scalar>(run: &RunParams) -> T {
    T::from_ratio(op_count_ops(run) as i128, 1_000_000_000)
}

pub fn latency_ms<T: Scalar>(design: &DesignParams, breakdown: &CycleBreakdown) -> T {
    let clock = design.clock_mhz;
    // cycles / (MHz * 1000) = cycles * denom / (numer * 1000)
    T::from_ratio(i128::from(breakdown.total_cycles) * clock.denom(), clock.numer() * 1000)
}

pub fn gops<T: Scalar>(gop: T, latency_ms: T) -> Result<T, PerfError> {
    if latency_ms == T::zero() {
        return Err(PerfError::DivisionByZero);
    }
    Ok(gop * T::from_int(1000) / latency_ms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerfReport<T> {
    pub run: RunParams,
    pub tile_size: u32,
    pub breakdown: CycleBreakdown,
    pub latency_ms: T,
    pub gop: T,
    pub gops: T,
    pub resources: ResourceVector,
    pub feasible: bool,
}

impl<T: Scalar> PerfReport<T> {
    /// `gops * latency_s == gop`, exact for rational scalars.
    pub fn identity_holds(&self) -> bool {
        self.gops.clone() * self.latency_ms.clone() / T::from_int(1000) == self.gop
    }
}

pub fn perf_report_with<T: Scalar>(
    design: &DesignParams,
    run: &RunParams,
    model: &ResourceModel,
) -> Result<PerfReport<T>, PerfError> {
    validate_run_params(design, run).into_result().map_err(PerfError::InvalidRun)?;
    let breakdown = estimate_cycles(design, run);
    let latency: T = latency_ms(design, &breakdown);
    let gop: T = op_count(run);
    let gops = gops(gop.clone(), latency.clone())?;
    let resources = estimate_resources_with(design, model);
    Ok(PerfReport {
        run: *run,
        tile_size: design.tile_size,
        breakdown,
        latency_ms: latency,
        gop,
        gops,
        feasible: resources.fits_within(&design.resource_budget),
        resources,
    })
}

pub fn perf_report<T: Scalar>(design: &DesignParams, run: &RunParams) -> Result<PerfReport<T>, PerfError> {
    perf_report_with(design, run, &Calibration::frozen().resources)
}

/// A row of the measured results table: configuration, latency (ms), GOPS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredRow {
    pub test: u32,
    pub run: RunParams,
    /// Latency in microseconds, to keep the table in integers.
    pub latency_us: u64,
    pub gops: u32,
}

impl MeasuredRow {
    /// Clock cycles the measured latency corresponds to.
    pub fn cycles_at(&self, clock_mhz: u64) -> u64 {
        self.latency_us * clock_mhz
    }
}

/// Measured U55C results, all with TS = 64.
pub const MEASURED: [MeasuredRow; 8] = [
    MeasuredRow {
        test: 1,
        run: RunParams { h: 8, d_model: 768, seq_len: 64, causal_mask: false },
        latency_us: 940,
        gops: 328,
    },
    MeasuredRow {
        test: 2,
        run: RunParams { h: 4, d_model: 768, seq_len: 64, causal_mask: false },
        latency_us: 1401,
        gops: 220,
    },
    MeasuredRow {
        test: 3,
        run: RunParams { h: 2, d_model: 768, seq_len: 64, causal_mask: false },
        latency_us: 2281,
        gops: 135,
    },
    MeasuredRow {
        test: 4,
        run: RunParams { h: 8, d_model: 512, seq_len: 64, causal_mask: false },
        latency_us: 597,
        gops: 184,
    },
    MeasuredRow {
        test: 5,
        run: RunParams { h: 8, d_model: 256, seq_len: 64, causal_mask: false },
        latency_us: 352,
        gops: 312,
    },
    MeasuredRow {
        test: 6,
        run: RunParams { h: 8, d_model: 768, seq_len: 128, causal_mask: false },
        latency_us: 2000,
        gops: 314,
    },
    MeasuredRow {
        test: 7,
        run: RunParams { h: 8, d_model: 768, seq_len: 32, causal_mask: false },
        latency_us: 534,
        gops: 285,
    },
    MeasuredRow {
        test: 8,
        run: RunParams { h: 8, d_model: 768, seq_len: 16, causal_mask: false },
        latency_us: 13000,
        gops: 16,
    },
];

/// Rows the cycle model is checked against. Test 5 and test 8 break the
/// trend of their neighbours and are left out.
pub const FIDELITY_TESTS: [u32; 3] = [2, 3, 6];

pub fn measured(test: u32) -> Option<MeasuredRow> {
    MEASURED.iter().copied().find(|r| r.test == test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    #[test]
    fn op_count_examples() {
        assert_eq!(op_count_ops(&RunParams::new(1, 1, 1)), 10);
        assert_eq!(op_count_ops(&RunParams::new(8, 512, 64)), 109_051_904);
        assert_eq!(op_count_ops(&RunParams::new(8, 768, 64)), 239_075_328);
        let gop: f64 = op_count(&RunParams::new(8, 512, 64));
        assert!((gop - 0.10905).abs() < 1e-5);
    }

    #[test]
    fn latency_examples() {
        let design = DesignParams::default();
        let b = |c| CycleBreakdown { total_cycles: c, ..CycleBreakdown::default() };
        assert_eq!(latency_ms::<Rational>(&design, &b(400_000)), Rational::from_integer(1));
        assert_eq!(latency_ms::<Rational>(&design, &b(0)), Rational::from_integer(0));
        let odd = DesignParams { clock_mhz: Rational::new(1001, 4), ..design };
        assert_eq!(latency_ms::<Rational>(&odd, &b(1001)), Rational::new(4, 1000));
    }

    #[test]
    fn gops_examples() {
        let g = gops(Rational::new(11, 100), Rational::new(597, 1000)).unwrap();
        assert_eq!(g.round().to_integer(), 184);
        assert_eq!(gops(1.0f64, 1000.0).unwrap(), 1.0);
        let g = gops(Rational::new(308, 1000), Rational::new(94, 100)).unwrap();
        assert_eq!(g.round().to_integer(), 328);
        assert_eq!(gops(Rational::new(1, 1), Rational::from_integer(0)), Err(PerfError::DivisionByZero));
    }

    #[test]
    fn report_identity_is_exact() {
        let design = DesignParams::default();
        for row in MEASURED {
            let r: PerfReport<Rational> = perf_report(&design, &row.run).unwrap();
            assert!(r.identity_holds(), "test {}", row.test);
            assert!(r.feasible);
        }
    }

    #[test]
    fn measured_table_is_self_consistent_where_expected() {
        let row = measured(4).unwrap();
        let g = gops(Rational::new(11, 100), Rational::new(row.latency_us as i128, 1000)).unwrap();
        assert_eq!(g.round().to_integer(), i128::from(row.gops));
        assert_eq!(measured(1).unwrap().cycles_at(400), 376_000);
        assert!(measured(9).is_none());
    }

    #[test]
    fn report_rejects_invalid_runs() {
        let err = perf_report::<f64>(&DesignParams::default(), &RunParams::new(5, 768, 64)).unwrap_err();
        assert!(matches!(err, PerfError::InvalidRun(_)));
    }
}
