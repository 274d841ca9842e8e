//! Fixed-point inference of a briefly trained network against its float
//! forward pass.
//!
//! cargo run --release --example quantized_inference

use spacemimo::accel::{quantize_params, quantized_beamformers, AcceleratorConfig};
use spacemimo::beamform::wsr;
use spacemimo::gnn::GnnDims;
use spacemimo::train::{train, TrainConfig};

fn main() -> spacemimo::Result<()> {
    let cfg = TrainConfig {
        epochs: 5,
        samples_per_epoch: 2000,
        test_samples: 200,
        dims: GnnDims::scaled(4, 16),
        ..TrainConfig::default()
    };
    let model = train(&cfg)?.best;
    let sys = &cfg.system;
    let samples = sys.ensemble(99, 200)?;
    let budget = sys.link_budget();
    let float: f64 = samples
        .iter()
        .map(|s| Ok(wsr(&s.h, &model.beamformers(&s.h, sys.power)?, &budget)?.weighted_sum))
        .sum::<spacemimo::Result<f64>>()?;
    println!("float     {:>10.3} Mbit/s", float / 200.0 / 1e6);
    for bits in [8, 16] {
        let q = model
            .sets
            .iter()
            .map(|p| quantize_params(p, bits))
            .collect::<spacemimo::Result<Vec<_>>>()?;
        let acfg = AcceleratorConfig::default().with_bits(bits);
        let mut total = 0.0;
        for s in &samples {
            total += wsr(
                &s.h,
                &quantized_beamformers(&q, &s.h, sys.power, &acfg)?,
                &budget,
            )?
            .weighted_sum;
        }
        println!(
            "{bits:>2}-bit    {:>10.3} Mbit/s  ratio {:.4}",
            total / 200.0 / 1e6,
            total / float
        );
    }
    Ok(())
}
