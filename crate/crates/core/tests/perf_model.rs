use attn_accel_core::config::DesignParams;
use attn_accel_core::perf::{
    calibrate_cycle_model, estimate_cycles, estimate_resources, fit_resource_model, measured, perf_report, Calibration,
    LatencyAnchor, ResourceCoefficients, ResourceModel, FIDELITY_TESTS,
};
use attn_accel_core::{ExactPerfReport, ResourceVector, RunParams};
use proptest::prelude::*;

fn anchor(test: u32) -> LatencyAnchor {
    let row = measured(test).unwrap();
    LatencyAnchor { run: row.run, cycles: row.cycles_at(400) }
}

#[test]
fn frozen_cycle_constants_are_reproducible() {
    let checks: Vec<LatencyAnchor> = FIDELITY_TESTS.iter().map(|&t| anchor(t)).collect();
    let fit = calibrate_cycle_model(&DesignParams::default(), anchor(1), &checks, 1..=64, 4..=32).unwrap();
    let frozen = Calibration::frozen();
    assert_eq!(fit.mem_bytes_per_cycle, frozen.mem_bytes_per_cycle);
    assert_eq!(fit.pipeline_depth, frozen.pipeline_depth);
    assert_eq!(fit.softmax_cycles_per_row, frozen.softmax_cycles_per_row);
    assert!(fit.worst_error_ppm < 150_000, "{}", fit.worst_error_ppm);
}

#[test]
fn frozen_overheads_are_reproducible() {
    let frozen = Calibration::frozen().resources;
    let slopes = |c: ResourceCoefficients| ResourceCoefficients { overhead: 0, ..c };
    let probe = ResourceModel {
        dsp: slopes(frozen.dsp),
        bram18k: slopes(frozen.bram18k),
        lut: slopes(frozen.lut),
        ff: slopes(frozen.ff),
    };
    let target = ResourceVector::new(4157, 3148, 1_284_782, 661_996);
    assert_eq!(fit_resource_model(&DesignParams::default(), probe, target), Some(frozen));
}

#[test]
fn default_design_matches_measured_resources() {
    assert_eq!(estimate_resources(&DesignParams::default()), ResourceVector::new(4157, 3148, 1_284_782, 661_996));
}

#[test]
fn score_stage_scales_with_square_of_sequence() {
    let d = DesignParams::default();
    let depth = u64::from(d.pipeline_depth);
    for sl in [8u32, 16, 32, 64] {
        let a = estimate_cycles(&d, &RunParams::new(8, 768, sl)).qk_cycles - depth;
        let b = estimate_cycles(&d, &RunParams::new(8, 768, 2 * sl)).qk_cycles - depth;
        assert_eq!(b, 4 * a);
    }
}

proptest! {
    #[test]
    fn latency_grows_with_sequence(sl in 1u32..128, h_pow in 0u32..4) {
        let d = DesignParams::default();
        let h = 1 << h_pow;
        let a = estimate_cycles(&d, &RunParams::new(h, 768, sl)).total_cycles;
        let b = estimate_cycles(&d, &RunParams::new(h, 768, sl + 1)).total_cycles;
        prop_assert!(b > a);
    }

    #[test]
    fn latency_grows_with_width(sl in 1u32..=128, tiles in 1u32..12) {
        let d = DesignParams::default();
        let a = estimate_cycles(&d, &RunParams::new(8, 64 * tiles, sl)).total_cycles;
        let b = estimate_cycles(&d, &RunParams::new(8, 64 * (tiles + 1), sl)).total_cycles;
        prop_assert!(b > a);
    }

    #[test]
    fn every_report_satisfies_the_identity(sl in 1u32..=128, h_pow in 0u32..4, tiles in 1u32..=12) {
        let r: ExactPerfReport = perf_report(&DesignParams::default(), &RunParams::new(1 << h_pow, 64 * tiles, sl)).unwrap();
        prop_assert!(r.identity_holds());
        prop_assert_eq!(r.breakdown.total_cycles, r.breakdown.stage_sum());
    }

    #[test]
    fn more_heads_need_more_resources(h_pow in 0u32..3) {
        let small = DesignParams { max_heads: 1 << h_pow, ..DesignParams::default() };
        let big = DesignParams { max_heads: 2 << h_pow, ..DesignParams::default() };
        let (a, b) = (estimate_resources(&small), estimate_resources(&big));
        prop_assert!(b.dsp > a.dsp && b.lut > a.lut && b.ff > a.ff && b.bram18k >= a.bram18k);
    }

    #[test]
    fn latency_does_not_grow_with_heads(sl in 1u32..=128, tiles in 1u32..=12, h_pow in 0u32..3) {
        let d = DesignParams::default();
        let a = estimate_cycles(&d, &RunParams::new(1 << h_pow, 64 * tiles, sl)).total_cycles;
        let b = estimate_cycles(&d, &RunParams::new(2 << h_pow, 64 * tiles, sl)).total_cycles;
        prop_assert!(b <= a);
    }
}
