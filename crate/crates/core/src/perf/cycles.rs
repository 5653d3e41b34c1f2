use crate::config::{num_tiles, DesignParams, RunParams};

/// Per-head cycle counts by stage. Heads run concurrently, so these are also the layer totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CycleBreakdown {
    /// Tile-load cycles not hidden behind compute.
    pub load_cycles: u64,
    pub qkv_cycles: u64,
    pub qk_cycles: u64,
    pub softmax_cycles: u64,
    pub sv_cycles: u64,
    pub total_cycles: u64,
}

impl CycleBreakdown {
    pub fn stage_sum(&self) -> u64 {
        self.load_cycles + self.qkv_cycles + self.qk_cycles + self.softmax_cycles + self.sv_cycles
    }
}

/// Bytes of one weight-plus-input tile load: three `d_k x TS` weight tiles and one `SL x TS` input tile.
pub fn tile_load_bytes(design: &DesignParams, run: &RunParams) -> u64 {
    let ts = u64::from(design.tile_size);
    let d_k = run.d_k() as u64;
    3 * d_k * ts + u64::from(run.seq_len) * ts
}

/// Stage-level cycle model.
///
/// Every pipelined loop runs at II = 1 and pays `pipeline_depth` fill cycles.
/// The projection loop streams `SL x d_k` outputs per tile with the TS-wide
/// inner loop unrolled; scores stream `SL x SL`, the value product `SL x d_k`,
/// and softmax costs a fixed number of cycles per row.
pub fn estimate_cycles(design: &DesignParams, run: &RunParams) -> CycleBreakdown {
    let tiles = num_tiles(run, design) as u64;
    let sl = u64::from(run.seq_len);
    let d_k = run.d_k() as u64;
    let depth = u64::from(design.pipeline_depth);

    let load_per_tile = tile_load_bytes(design, run).div_ceil(u64::from(design.mem_bytes_per_cycle));
    let compute_per_tile = sl * d_k + depth;
    let qkv_cycles = tiles * compute_per_tile;
    let load_cycles = if design.overlap_load_compute {
        tiles * load_per_tile.max(compute_per_tile) - qkv_cycles
    } else {
        tiles * load_per_tile
    };
    let qk_cycles = sl * sl + depth;
    let softmax_cycles = u64::from(design.softmax_cycles_per_row) * sl;
    let sv_cycles = sl * d_k + depth;

    let mut b = CycleBreakdown { load_cycles, qkv_cycles, qk_cycles, softmax_cycles, sv_cycles, total_cycles: 0 };
    b.total_cycles = b.stage_sum();
    b
}
