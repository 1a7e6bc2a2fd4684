//! The same source and optics under both detector models.

use beamsplit::experiment::{run_experiment, RunConfig};
use beamsplit::PhysicsModel;

fn main() {
    for model in [PhysicsModel::Copenhagen, PhysicsModel::Planck] {
        let mut config = RunConfig::default();
        config.source.run_duration = 200.0;
        config.apparatus.physics_model = model;
        config.apparatus.dead_time = [10e-9, 0.0, 0.0];
        let out = run_experiment(&config).expect("valid config");
        let r = &out.report.coincidence;
        println!("{}:", model.label());
        println!("  N0 = {}", r.n0);
        println!("  p1 = {:.4} [{:.4}, {:.4}]", r.p1.value, r.p1.lower, r.p1.upper);
        println!("  p2 = {:.4} [{:.4}, {:.4}]", r.p2.value, r.p2.lower, r.p2.upper);
        println!("  p3 = {:.3e}, p1*p2 = {:.3e}, p0 = {:.1e}", r.p3.value, r.product_p1p2.value, r.p0_theoretical.unwrap());
        println!("  p3 - p1*p2 = {:+.2} SE", r.difference_in_std_errors());
        println!("  verdict: {:?}", r.verdict);
    }
}
