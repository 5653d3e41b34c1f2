use crate::config::{DesignParams, ResourceVector};

use super::calibration::{Calibration, ResourceCoefficients, ResourceModel};

/// Per-head PE counts are sized for the design maxima: `tile_size` projection
/// lanes, `max_d_model / max_heads` score lanes, `max_seq_len` value-product lanes.
pub(crate) fn estimate_one(design: &DesignParams, c: &ResourceCoefficients) -> u64 {
    let heads = u64::from(design.max_heads);
    if heads == 0 {
        return c.overhead;
    }
    let d_k = u64::from(design.max_d_model) / heads;
    let per_head = c.qkv * u64::from(design.tile_size) + c.qk * d_k + c.sv * u64::from(design.max_seq_len);
    heads * per_head + c.overhead
}

pub fn estimate_resources_with(design: &DesignParams, model: &ResourceModel) -> ResourceVector {
    ResourceVector {
        dsp: estimate_one(design, &model.dsp),
        bram18k: estimate_one(design, &model.bram18k),
        lut: estimate_one(design, &model.lut),
        ff: estimate_one(design, &model.ff),
    }
}

/// Resource estimate under the frozen calibration.
pub fn estimate_resources(design: &DesignParams) -> ResourceVector {
    estimate_resources_with(design, &Calibration::frozen().resources)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_design_matches_reported_utilization() {
        let r = estimate_resources(&DesignParams::default());
        assert_eq!(r, ResourceVector::new(4157, 3148, 1_284_782, 661_996));
        assert!(r.fits_within(&ResourceVector::U55C));
    }

    #[test]
    fn zero_heads_leaves_overheads() {
        let model = Calibration::frozen().resources;
        let design = DesignParams { max_heads: 0, ..DesignParams::default() };
        let r = estimate_resources_with(&design, &model);
        assert_eq!(
            r,
            ResourceVector::new(model.dsp.overhead, model.bram18k.overhead, model.lut.overhead, model.ff.overhead)
        );
    }

    #[test]
    fn doubling_tile_size_is_affine() {
        let model = Calibration::frozen().resources;
        let base = DesignParams::default();
        let doubled = DesignParams { tile_size: 128, ..base.clone() };
        let a = estimate_resources_with(&base, &model);
        let b = estimate_resources_with(&doubled, &model);
        assert_eq!(b.dsp - a.dsp, 8 * model.dsp.qkv * 64);
        assert_eq!(b.lut - a.lut, 8 * model.lut.qkv * 64);
    }
}
