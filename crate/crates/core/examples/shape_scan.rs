//! With the mirror removed, p(s) traces the green packet's time profile.

use beamsplit::experiment::{linear_grid, run_shape_scan, RunConfig};
use beamsplit::source::EnvelopeSpec;
use beamsplit::PhysicsModel;

fn main() {
    let mut config = RunConfig::default();
    config.source.run_duration = 300.0;
    config.source.blue = EnvelopeSpec::gaussian(50e-12, 1.0);
    config.source.green = EnvelopeSpec::rectangular(6e-9, 1.0);
    config.apparatus.physics_model = PhysicsModel::Copenhagen;
    config.apparatus.splitter_transmittance = 1.0;
    config.window.alpha = 0.2e-9;

    let scan = run_shape_scan(&config, &linear_grid(-6e-9, 6e-9, 49)).expect("valid config");
    for p in &scan.points {
        let bar = "#".repeat((p.p.value * 60.0 / 0.1).round() as usize);
        println!("{:+6.2} ns {:.4} {bar}", p.s * 1e9, p.p.value);
    }
    print!("{}", scan.summary());
}
