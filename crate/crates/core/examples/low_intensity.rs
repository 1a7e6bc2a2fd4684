//! Dim sources: once p1*p2 falls to the floor, neither model can be told
//! apart from the other and the guard flags the run.

use beamsplit::experiment::{run_experiment, RunConfig};

fn main() {
    for gain in [2e8, 2e7, 2e6, 5e5] {
        let mut config = RunConfig::default();
        config.source.run_duration = 100.0;
        config.apparatus.planck.fill_gain = gain;
        let out = run_experiment(&config).expect("valid config");
        let guard = &out.report.low_intensity;
        println!(
            "fill_gain {gain:.0e}: N0 = {:6}, p1*p2 = {:.2e}, flagged = {}, verdict {:?}",
            out.report.coincidence.n0,
            guard.product_p1p2,
            guard.flagged,
            out.report.coincidence.verdict
        );
    }
}
