use attn_accel_core::config::DesignParams;
use attn_accel_core::corpus::{generate, Amplitude, TensorRng, ERROR_THRESHOLD};
use attn_accel_core::engine::reference::{mha_reference, Matrix};
use attn_accel_core::engine::{
    compare_to_reference, mha_forward, mha_forward_with, mha_states, HeadEvaluation, HeadWeights, DATA,
};
use attn_accel_core::fxp::QTensor;
use attn_accel_core::{RefHeadWeights, RunParams};
use proptest::prelude::*;

fn design(d_model: u32, ts: u32) -> DesignParams {
    DesignParams { max_d_model: d_model, tile_size: ts, ..DesignParams::default() }
}

#[test]
fn serial_and_parallel_agree() {
    let run = RunParams::new(8, 128, 16).with_mask(true);
    let c = generate(11, &run, Amplitude::default());
    let d = design(128, 32);
    let serial = mha_forward_with(&run, &d, &c.x, &c.heads, HeadEvaluation::Serial).unwrap();
    let parallel = mha_forward_with(&run, &d, &c.x, &c.heads, HeadEvaluation::Parallel).unwrap();
    assert_eq!(serial, parallel);
}

#[test]
fn concat_blocks_equal_single_head_runs() {
    let run = RunParams::new(4, 64, 8);
    let c = generate(3, &run, Amplitude::default());
    let d = design(64, 16);
    let all = mha_forward(&run, &d, &c.x, &c.heads).unwrap();
    let states = mha_states(&run, &d, &c.x, &c.heads, HeadEvaluation::Serial).unwrap();
    let d_k = run.d_k();
    for (i, st) in states.iter().enumerate() {
        assert_eq!(st.out, all.heads[i]);
        assert_eq!(all.concat.columns(i * d_k, (i + 1) * d_k), all.heads[i]);
    }
}

#[test]
fn zero_everything_is_near_zero() {
    let run = RunParams::new(2, 16, 4);
    let z = |r, c| QTensor::zeros(r, c, DATA);
    let heads: Vec<HeadWeights> =
        (0..2).map(|_| HeadWeights::new(z(8, 16), z(8, 16), z(8, 16), z(1, 8), z(1, 8), z(1, 8)).unwrap()).collect();
    let x = z(4, 16);
    let out = mha_forward(&run, &design(16, 8), &x, &heads).unwrap();
    let refs: Vec<RefHeadWeights> = heads.iter().map(RefHeadWeights::from_quantized).collect();
    let r = mha_reference(&run, &Matrix::from_qtensor(&x), &refs).unwrap();
    assert!(compare_to_reference(&run, &out.concat, &r).max_abs <= 2f64.powi(-8));
}

#[test]
fn unit_gain_corpora_stay_within_threshold() {
    for (h, d, sl, ts) in [(2u32, 32u32, 8u32, 16u32), (4, 64, 16, 16)] {
        let run = RunParams::new(h, d, sl);
        for seed in 0..10 {
            let c = generate(seed, &run, Amplitude::unit_gain(d));
            let out = mha_forward(&run, &design(d, ts), &c.x, &c.heads).unwrap();
            assert_eq!(out.saturated, 0);
            let refs: Vec<RefHeadWeights> = c.heads.iter().map(RefHeadWeights::from_quantized).collect();
            let r = mha_reference(&run, &Matrix::from_qtensor(&c.x), &refs).unwrap();
            let e = compare_to_reference(&run, &out.concat, &r);
            assert!(e.max_abs <= ERROR_THRESHOLD, "seed {seed} h{h}: {}", e.max_abs);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn causal_rows_ignore_later_values(seed in any::<u64>(), row in 0usize..8) {
        let run = RunParams::new(2, 16, 8).with_mask(true);
        let c = generate(seed, &run, Amplitude::default());
        let d = design(16, 8);
        let base = mha_states(&run, &d, &c.x, &c.heads, HeadEvaluation::Serial).unwrap();
        let mut rng = TensorRng::new(seed ^ 0x5a5a);
        for st in &base {
            let mut v = st.v.data().to_vec();
            for m in row + 1..8 {
                for j in 0..st.v.cols() {
                    v[m * st.v.cols() + j] = rng.raw(0);
                }
            }
            let v = QTensor::new(st.v.rows(), st.v.cols(), DATA, v).unwrap();
            let out = attn_accel_core::engine::attend(&st.p, &v).unwrap();
            prop_assert_eq!(out.row(row), st.out.row(row));
        }
    }

    #[test]
    fn masked_probabilities_are_zero(seed in any::<u64>()) {
        let run = RunParams::new(1, 8, 6).with_mask(true);
        let c = generate(seed, &run, Amplitude::default());
        let st = &mha_states(&run, &design(8, 4), &c.x, &c.heads, HeadEvaluation::Serial).unwrap()[0];
        for i in 0..6 {
            for j in i + 1..6 {
                prop_assert_eq!(st.p.get(i, j), 0);
            }
        }
    }
}
