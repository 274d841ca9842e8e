//! Monte-Carlo check of the shadowed-Rician fading power and the beam
//! pattern across off-axis angles.
//!
//! cargo run --release --example channel_stats

use spacemimo::channel::{
    beam_gain, path_loss_coeff, sample_shadowed_rician, ChannelParams, FadingParams, ScatterPhase,
};
use spacemimo::rng;

fn main() {
    let fading = FadingParams::new(0.063, 2.0, 8.97e-4);
    let mut r = rng::stream(7);
    let n = 1_000_000;
    let mut acc = 0.0;
    for _ in 0..n {
        acc += sample_shadowed_rician(&fading, 0.0, ScatterPhase::HalfTurn, &mut r).norm_sqr();
    }
    let mc = acc / n as f64;
    println!(
        "E|h|^2: monte carlo {mc:.6}, closed form 2b + Omega = {:.6}",
        fading.mean_power()
    );

    let p = ChannelParams::default();
    println!(
        "path-loss coefficient at 600 km, 20 GHz: {:.4e}",
        path_loss_coeff(p.d0, p.dh, p.carrier_freq)
    );
    println!("{:>10} {:>14}", "phi (deg)", "gain / b_max");
    for deg in [0.0, 0.01, 0.1, 0.2, 0.4, 0.8] {
        let g = beam_gain(f64::to_radians(deg), p.phi_3db, 1.0);
        println!("{deg:>10.2} {g:>14.6}");
    }
    println!(
        "mean entry power of the default link: {:.4e}",
        p.mean_entry_power()
    );
}
