use rayon::prelude::*;

use crate::config::{validate_run_params, DesignParams, ResourceVector, RunParams};
use crate::Rational;

use super::{perf_report_with, PerfError, PerfReport, ResourceModel};

#[derive(Debug, Clone, PartialEq)]
pub struct DseEntry {
    pub design: DesignParams,
    pub report: PerfReport<Rational>,
}

/// Sweep tile size and head count for a fixed workload.
///
/// Each candidate builds `max_heads = h` and `tile_size = ts` on top of the
/// template and runs `run` with `h` heads. Candidates that break divisibility
/// or exceed `budget` are dropped. The result is sorted by latency, then DSP
/// count, then tile size.
pub fn dse_sweep(
    template: &DesignParams,
    budget: &ResourceVector,
    ts_candidates: &[u32],
    h_candidates: &[u32],
    run: &RunParams,
    model: &ResourceModel,
) -> Result<Vec<DseEntry>, PerfError> {
    if ts_candidates.is_empty() || h_candidates.is_empty() {
        return Err(PerfError::InvalidSweep("candidate lists must be non-empty".into()));
    }
    let grid: Vec<(u32, u32)> =
        ts_candidates.iter().flat_map(|&ts| h_candidates.iter().map(move |&h| (ts, h))).collect();
    let mut entries: Vec<DseEntry> = grid
        .par_iter()
        .filter_map(|&(ts, h)| {
            let design = DesignParams { tile_size: ts, max_heads: h, resource_budget: *budget, ..template.clone() };
            design.validate().ok()?;
            let run = RunParams { h, ..*run };
            if !validate_run_params(&design, &run).is_ok() {
                return None;
            }
            let report = perf_report_with::<Rational>(&design, &run, model).ok()?;
            report.feasible.then_some(DseEntry { design, report })
        })
        .collect();
    if entries.is_empty() {
        return Err(PerfError::NoFeasibleConfig);
    }
    entries.sort_by(|a, b| {
        a.report
            .latency_ms
            .cmp(&b.report.latency_ms)
            .then(a.report.resources.dsp.cmp(&b.report.resources.dsp))
            .then(a.design.tile_size.cmp(&b.design.tile_size))
    });
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perf::{estimate_resources, Calibration};

    #[test]
    fn default_design_is_feasible_at_its_own_estimate() {
        let design = DesignParams::default();
        let budget = estimate_resources(&design);
        let model = Calibration::frozen().resources;
        let out = dse_sweep(&design, &budget, &[64], &[8], &RunParams::new(8, 768, 64), &model).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].design, DesignParams { resource_budget: budget, ..design });
    }

    #[test]
    fn zero_dsp_budget_is_infeasible() {
        let budget = ResourceVector { dsp: 0, ..ResourceVector::U55C };
        let model = Calibration::frozen().resources;
        let err =
            dse_sweep(&DesignParams::default(), &budget, &[32, 64], &[2, 4, 8], &RunParams::new(8, 768, 64), &model);
        assert_eq!(err, Err(PerfError::NoFeasibleConfig));
    }

    #[test]
    fn more_heads_rank_first() {
        let model = Calibration::frozen().resources;
        let out = dse_sweep(
            &DesignParams::default(),
            &ResourceVector::U55C,
            &[64],
            &[2, 4, 8],
            &RunParams::new(8, 768, 64),
            &model,
        )
        .unwrap();
        let hs: Vec<u32> = out.iter().map(|e| e.report.run.h).collect();
        assert_eq!(hs, vec![8, 4, 2]);
        assert!(out.windows(2).all(|w| w[0].report.latency_ms < w[1].report.latency_ms));
    }

    #[test]
    fn indivisible_candidates_are_dropped() {
        let model = Calibration::frozen().resources;
        let out = dse_sweep(
            &DesignParams::default(),
            &ResourceVector::U55C,
            &[64, 100],
            &[5, 8],
            &RunParams::new(8, 768, 64),
            &model,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].design.tile_size, out[0].design.max_heads), (64, 8));
        assert!(dse_sweep(
            &DesignParams::default(),
            &ResourceVector::U55C,
            &[],
            &[8],
            &RunParams::new(8, 768, 64),
            &model
        )
        .is_err());
    }
}
