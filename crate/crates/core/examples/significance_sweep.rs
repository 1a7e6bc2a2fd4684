//! Raising the emission rate until overlaps (p0) swamp p1*p2.

use beamsplit::experiment::{run_experiment, RunConfig};
use beamsplit::PhysicsModel;

fn main() {
    println!("{:>10} {:>9} {:>9} {:>10}  verdict", "rate", "p0", "p1*p2", "p3");
    for rate in [1e3, 1e5, 1e6, 3e6, 4e6, 4.4e6, 4.6e6, 5e6, 8e6] {
        let mut config = RunConfig::default();
        config.apparatus.physics_model = PhysicsModel::Copenhagen;
        config.source.mean_emission_rate = rate;
        config.source.run_duration = 2e5 / rate;
        let out = run_experiment(&config).expect("valid config");
        let r = &out.report.coincidence;
        println!(
            "{rate:>10.2e} {:>9.5} {:>9.5} {:>10.3e}  {:?}",
            r.p0_theoretical.unwrap(),
            r.product_p1p2.value,
            r.p3.value,
            r.verdict
        );
    }
}
