//! Photon, electron and atom presets share the physics; only the source
//! defaults differ.

use beamsplit::experiment::{RunConfig, Species};

fn main() {
    for species in [Species::Photon, Species::Electron, Species::Atom] {
        let c = RunConfig::for_species(species);
        println!(
            "{species:?}: rate {:.0}/s, duration {:.0} s, sigma {:.1e} s",
            c.source.mean_emission_rate, c.source.run_duration, c.source.green.duration_or_sigma
        );
    }
    let parsed = RunConfig::from_toml_str("species = \"electron\"\n[apparatus]\nphysics_model = \"copenhagen\"\n").unwrap();
    println!("{}", parsed.to_toml_string().unwrap());
}
