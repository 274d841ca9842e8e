//! Baseline WSR against transmit power and satellite count, with an SVG of
//! the power sweep written to the working directory.
//!
//! cargo run --release --example power_sweep

use spacemimo::beamform::Scheme;
use spacemimo::experiment::{run_sweep, sweep_chart, ExperimentConfig, PowerPolicy, SweepVariable};

fn main() -> spacemimo::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.run.eval_samples = 300;
    cfg.run.schemes = Scheme::BASELINES.to_vec();

    let p = run_sweep(
        &cfg,
        SweepVariable::PowerDbw,
        &[-10.0, -5.0, 0.0, 5.0, 10.0],
        &[PowerPolicy::FixedPerSatellite],
        None,
    )?;
    for scheme in Scheme::BASELINES {
        let ys: Vec<String> = p
            .series(scheme, PowerPolicy::FixedPerSatellite)
            .iter()
            .map(|(_, y)| format!("{:8.2}", y / 1e6))
            .collect();
        println!("{:<12} {}", scheme.name(), ys.join(" "));
    }
    std::fs::write("power_sweep.svg", sweep_chart(&p))?;

    let k = run_sweep(
        &cfg,
        SweepVariable::Satellites,
        &[1.0, 2.0, 3.0, 4.0],
        &PowerPolicy::ALL,
        None,
    )?;
    println!("\nK sweep, Mbit/s");
    for policy in PowerPolicy::ALL {
        for scheme in [Scheme::ZfLocal, Scheme::MmseGlobal] {
            let ys: Vec<String> = k
                .series(scheme, policy)
                .iter()
                .map(|(_, y)| format!("{:8.2}", y / 1e6))
                .collect();
            println!(
                "{:<20} {:<12} {}",
                policy.name(),
                scheme.name(),
                ys.join(" ")
            );
        }
    }
    Ok(())
}
