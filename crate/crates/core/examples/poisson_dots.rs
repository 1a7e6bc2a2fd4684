//! Dot counts from one packet against fresh absorber banks, compared with
//! the Poisson law. Small banks deviate; large ones converge.

use beamsplit::apparatus::planck::AbsorberBank;
use beamsplit::experiment::{fill_gain_for_lambda, run_poisson_diagnostic};
use beamsplit::source::EnvelopeSpec;
use beamsplit::stats::poisson_pmf;

fn main() {
    let packet = EnvelopeSpec::gaussian(1e-9, 1.0);
    for absorbers in [64, 1024] {
        for lambda in [0.5, 1.0, 2.0] {
            let bank = AbsorberBank {
                fill_levels: vec![0.0; absorbers],
                fill_gain: fill_gain_for_lambda(&packet, lambda),
            };
            let d = run_poisson_diagnostic(&packet, &bank, 100_000, 1).unwrap();
            let fit = d.fit.as_ref().unwrap();
            println!(
                "n = {absorbers:4}, lambda = {lambda}: mean {:.4}, var {:.4}, P(0) = {:.4} vs {:.4}, chi2 p = {:.4}",
                d.mean,
                d.variance,
                d.frequency(0),
                poisson_pmf(0, lambda),
                fit.p_value
            );
        }
    }
}
