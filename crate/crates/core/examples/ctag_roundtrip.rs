//! Write a run to a CTAG file, read it back and re-analyze it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use beamsplit::experiment::{analyze, run_experiment, RunConfig};
use beamsplit::timetag::{read_stream, write_stream};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = RunConfig::default();
    config.source.run_duration = 10.0;
    let out = run_experiment(&config)?;

    let path = std::env::temp_dir().join("beamsplit_example.ctag");
    let mut w = BufWriter::new(File::create(&path)?);
    write_stream(&out.streams, &mut w)?;
    w.flush()?;

    let back = read_stream(&mut BufReader::new(File::open(&path)?))?;
    let report = analyze(&back, None)?;
    println!("wrote {} ({} events)", path.display(), back.total_events());
    println!("streams identical: {}", back == out.streams);
    println!("report identical: {}", report == out.report);
    println!("{}", serde_json::to_string_pretty(&report.coincidence)?);
    Ok(())
}
