use attn_accel_core::config::DesignParams;
use attn_accel_core::corpus::{generate, Amplitude, TensorRng};
use attn_accel_core::engine::{mha_forward, DATA};
use attn_accel_core::fxp::QTensor;
use attn_accel_core::tiling::{build_tile_schedule, slice_input_tile, slice_weight_tile, TileSchedule};
use attn_accel_core::RunParams;
use proptest::prelude::*;

fn reassemble(
    t: &QTensor,
    ts: usize,
    slice: fn(&QTensor, &attn_accel_core::tiling::TileStep) -> Result<QTensor, attn_accel_core::tiling::TilingError>,
) -> QTensor {
    let sched = TileSchedule::new(t.cols(), ts).unwrap();
    let parts: Vec<QTensor> = sched.steps().iter().map(|s| slice(t, s).unwrap()).collect();
    assert!(parts.iter().all(|p| p.cols() == ts));
    QTensor::hconcat(&parts).unwrap()
}

#[test]
fn weight_and_input_tiles_reassemble() {
    let mut rng = TensorRng::new(5);
    let w = rng.tensor(96, 768, 0);
    let x = rng.tensor(64, 768, 0);
    for ts in [1, 16, 64, 96, 192, 384, 768] {
        assert_eq!(reassemble(&w, ts, slice_weight_tile), w, "weights, TS={ts}");
        assert_eq!(reassemble(&x, ts, slice_input_tile), x, "input, TS={ts}");
    }
}

#[test]
fn default_design_has_twelve_tiles() {
    let sched = build_tile_schedule(&RunParams::new(8, 768, 64), &DesignParams::default());
    assert_eq!(sched.len(), 12);
    assert_eq!(sched.steps()[11].col_lo, 704);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_is_independent_of_tile_size(seed in any::<u64>(), h_pow in 0u32..3, d_pow in 3u32..6, sl in 1u32..9, mask in any::<bool>()) {
        let h = 1 << h_pow;
        let d = 1 << d_pow;
        let run = RunParams::new(h, d, sl).with_mask(mask);
        let c = generate(seed, &run, Amplitude::default());
        let outputs: Vec<_> = [d, d / 2, d / 4, 2]
            .iter()
            .map(|&ts| {
                let design = DesignParams { tile_size: ts, max_d_model: d, ..DesignParams::default() };
                mha_forward(&run, &design, &c.x, &c.heads).unwrap().concat
            })
            .collect();
        prop_assert_eq!(outputs[0].format(), DATA);
        for o in &outputs[1..] {
            prop_assert_eq!(o, &outputs[0]);
        }
    }
}
