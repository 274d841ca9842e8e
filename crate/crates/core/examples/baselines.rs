//! Mean weighted sum rate of the classical precoders on the default
//! two-satellite scenario.
//!
//! cargo run --release --example baselines

use spacemimo::beamform::{wsr, RateReport, Scheme};
use spacemimo::train::SystemConfig;

fn main() -> spacemimo::Result<()> {
    let sys = SystemConfig::default();
    let samples = sys.ensemble(11, 500)?;
    let budget = sys.link_budget();
    println!(
        "K={} M={} N={} P={} W",
        sys.satellites, sys.users, sys.antennas, sys.power
    );
    for scheme in Scheme::BASELINES {
        let mut total = 0.0;
        for s in &samples {
            let w = scheme
                .baseline(&s.h, sys.power, sys.noise_var)
                .expect("baseline")?;
            assert!(w.satisfies_budget(1e-9));
            total += wsr(&s.h, &w, &budget)?.weighted_sum;
        }
        println!(
            "{:<12} {:>10.3} Mbit/s",
            scheme.name(),
            total / samples.len() as f64 / 1e6
        );
    }

    println!("\nfirst sample, per-user rates in bit/s");
    println!("{}", RateReport::csv_header(sys.users));
    let first = &samples[0];
    for scheme in Scheme::BASELINES {
        let w = scheme
            .baseline(&first.h, sys.power, sys.noise_var)
            .expect("baseline")?;
        let r = wsr(&first.h, &w, &budget)?;
        println!(
            "{}",
            r.csv_row(first.seed, scheme, sys.dims(), 10.0 * sys.power.log10())
        );
    }
    Ok(())
}
