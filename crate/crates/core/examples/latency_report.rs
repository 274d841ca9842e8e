//! Per-layer latency of the full-width network on the modeled systolic
//! array.
//!
//! cargo run --release --example latency_report

use spacemimo::accel::{latency_model, AcceleratorConfig};
use spacemimo::gnn::GnnDims;

fn main() -> spacemimo::Result<()> {
    let dims = GnnDims::full(4);
    for bits in [8, 16] {
        let r = latency_model(&dims, 4, &AcceleratorConfig::default().with_bits(bits))?;
        println!("{bits}-bit, M = 4");
        println!(
            "{:<15} {:>9} {:>9} {:>9} {:>9}  bound",
            "layer", "shape", "compute", "memory", "effective"
        );
        for l in &r.layers {
            let shape = format!("{}x{}", l.rows, l.cols);
            println!(
                "{:<15} {shape:>9} {:>9} {:>9} {:>9}  {}",
                l.name,
                l.compute_cycles,
                l.memory_cycles,
                l.effective_cycles,
                l.bound.tag()
            );
        }
        println!("prologue {} cycles, {}\n", r.prologue_cycles, r.summary());
    }
    Ok(())
}
