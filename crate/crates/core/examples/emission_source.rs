//! Poisson emission of packet pairs and the overlap probability p0.

use beamsplit::source::{expected_overlap_probability, generate_emissions, SourceConfig};

fn main() {
    let config = SourceConfig {
        mean_emission_rate: 1e4,
        run_duration: 20.0,
        rng_seed: 7,
        ..SourceConfig::default()
    };
    let pairs = generate_emissions(&config).expect("valid config");
    let gaps: Vec<f64> = pairs.windows(2).map(|w| w[1].emission_time - w[0].emission_time).collect();
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;

    println!("emissions: {} (expected {})", pairs.len(), config.mean_emission_rate * config.run_duration);
    println!("mean gap: {mean_gap:.3e} s (expected {:.3e} s)", 1.0 / config.mean_emission_rate);
    println!("packet support: {:.1e} s", config.packet_support());
    for alpha in [1e-9, 10e-9, 100e-9] {
        let p0 = expected_overlap_probability(&config, alpha).unwrap();
        println!("alpha = {alpha:.0e} s -> p0 = {p0:.3e}");
    }
}
