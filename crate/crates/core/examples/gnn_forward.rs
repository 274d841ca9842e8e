//! One forward pass of an untrained beamforming GNN, plus the cost of the
//! two graph-convolution schedules.
//!
//! cargo run --release --example gnn_forward

use spacemimo::gnn::{init_params, mac_count, GnnDims, MultiGnn};
use spacemimo::train::SystemConfig;

fn main() -> spacemimo::Result<()> {
    let sys = SystemConfig::default();
    let dims = GnnDims::scaled(sys.antennas, 8);
    let params = init_params(dims, 1)?.with_input_scale(sys.input_scale());
    println!("{} parameters per satellite network", params.len());

    let model = MultiGnn::tied(params);
    let sample = sys.draw(5)?;
    let w = model.beamformers(&sample.h, sys.power)?;
    for k in 0..sys.satellites {
        println!("satellite {k}: transmit power {:.6} W", w.w.block_power(k));
    }

    let full = GnnDims::full(sys.antennas);
    println!("\nMACs per inference at full width");
    println!("{:>4} {:>14} {:>14}", "M", "per-pair", "hoisted");
    for m in [2, 4, 8, 16] {
        let r = mac_count(m, full)?;
        println!("{m:>4} {:>14} {:>14}", r.total_per_pair, r.total_hoisted);
    }
    Ok(())
}
