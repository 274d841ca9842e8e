//! Short training run at reduced width; prints the learning curve.
//!
//! cargo run --release --example train_small

use spacemimo::gnn::GnnDims;
use spacemimo::train::{train, TrainConfig};

fn main() -> spacemimo::Result<()> {
    let cfg = TrainConfig {
        epochs: 15,
        samples_per_epoch: 2000,
        test_samples: 500,
        dims: GnnDims::scaled(4, 16),
        early_stop: None,
        ..TrainConfig::default()
    };
    let out = train(&cfg)?;
    println!("{:>5} {:>12} {:>12}", "epoch", "train", "test");
    for r in &out.history {
        println!(
            "{:>5} {:>12.3} {:>12.3}",
            r.epoch,
            r.train_wsr / 1e6,
            r.test_wsr / 1e6
        );
    }
    println!("best test epoch {}", out.best_epoch);
    Ok(())
}
