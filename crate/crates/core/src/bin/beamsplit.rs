use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use beamsplit::apparatus::planck::AbsorberBank;
use beamsplit::bell::{check_feasibility, PairwiseSpec};
use beamsplit::coincidence::{Verdict, WindowConfig};
use beamsplit::experiment::{
    analyze, fill_gain_for_lambda, linear_grid, run_poisson_diagnostic, run_shape_scan, simulate_streams,
    ExperimentError, ExperimentReport, PoissonDiagnostic, ReportFormat, RunConfig,
};
use beamsplit::timetag::{read_stream, write_csv, write_stream, EventStreams, StreamError};
use beamsplit::{ConfigError, PhysicsModel};

#[derive(Parser)]
#[command(name = "beamsplit", version, about = "Split-packet coincidence simulator and analyzer")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    model: Option<Model>,
    /// Coincidence half-width in seconds.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Exit with status 2 when the verdict is inconclusive.
    #[arg(long, global = true)]
    fail_on_inconclusive: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Copenhagen,
    Planck,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a run and write run.ctag.
    Simulate,
    /// Analyze a CTAG file and write the report.
    Analyze { input: PathBuf },
    /// Simulate and analyze in one step.
    Run,
    /// Measure p(s) with the mirror removed.
    ScanShape {
        #[arg(long, default_value_t = -10e-9, allow_hyphen_values = true)]
        s_min: f64,
        #[arg(long, default_value_t = 10e-9, allow_hyphen_values = true)]
        s_max: f64,
        #[arg(long, default_value_t = 81)]
        points: usize,
        /// Set the transmittance to 1 instead of rejecting the configuration.
        #[arg(long)]
        remove_mirror: bool,
    },
    /// Check whether marginals and pairwise agreements admit a joint distribution.
    BellCheck {
        /// m1 m2 m3 a12 a13 a23
        #[arg(num_args = 6, required = true, allow_hyphen_values = true)]
        values: Vec<f64>,
    },
    /// Histogram dot counts of one packet against fresh absorber banks.
    PoissonCheck {
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1024)]
        absorbers: usize,
        #[arg(long, default_value_t = 100_000)]
        replications: u64,
    },
}

enum Failure {
    Config(String),
    Inconclusive,
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Inconclusive => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<StreamError> for Failure {
    fn from(e: StreamError) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("config error: {m}"),
                Failure::Inconclusive => eprintln!("verdict inconclusive"),
                Failure::Io(m) => eprintln!("i/o error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml_str(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.source.rng_seed = seed;
    }
    if let Some(model) = cli.model {
        config.apparatus.physics_model = match model {
            Model::Copenhagen => PhysicsModel::Copenhagen,
            Model::Planck => PhysicsModel::Planck,
        };
    }
    if let Some(alpha) = cli.alpha {
        config.window.alpha = alpha;
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.display().to_string();
    }
    if let Some(format) = cli.format {
        config.output.format = match format {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        };
    }
    config.output.fail_on_inconclusive |= cli.fail_on_inconclusive;
    config.validate()?;
    Ok(config)
}

fn out_dir(dir: &str) -> Result<PathBuf, Failure> {
    let path = PathBuf::from(dir);
    fs::create_dir_all(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn save_streams(streams: &EventStreams, dir: &Path, format: ReportFormat) -> Result<(), Failure> {
    let path = dir.join("run.ctag");
    let file = fs::File::create(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    write_stream(streams, &mut w)?;
    w.flush()?;
    if format == ReportFormat::Csv {
        let path = dir.join("run.csv");
        let file = fs::File::create(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        write_csv(streams, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn report_csv(report: &ExperimentReport) -> String {
    let c = &report.coincidence;
    let mut out = String::from("quantity,value,lower,upper\n");
    out.push_str(&format!("n0,{},,\n", c.n0));
    for (name, e) in [("p1", &c.p1), ("p2", &c.p2), ("p3", &c.p3), ("p1p2", &c.product_p1p2)] {
        out.push_str(&format!("{name},{},{},{}\n", e.value, e.lower, e.upper));
    }
    if let Some(p0) = c.p0_theoretical {
        out.push_str(&format!("p0,{p0},,\n"));
    }
    out.push_str(&format!("alpha,{},,\n", c.alpha_used));
    out
}

fn emit_report(report: &ExperimentReport, dir: &Path, format: ReportFormat, fail_on_inconclusive: bool) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(report)?;
    match format {
        ReportFormat::Json => write_file(&dir.join("report.json"), json.as_bytes())?,
        ReportFormat::Csv => write_file(&dir.join("report.csv"), report_csv(report).as_bytes())?,
    }
    let c = &report.coincidence;
    println!(
        "n0 = {}  p1 = {:.6}  p2 = {:.6}  p3 = {:.3e}  p1*p2 = {:.6}  p0 = {}  verdict = {:?}",
        c.n0,
        c.p1.value,
        c.p2.value,
        c.p3.value,
        c.product_p1p2.value,
        c.p0_theoretical.map_or("unknown".to_string(), |p| format!("{p:.3e}")),
        c.verdict,
    );
    if report.low_intensity.flagged {
        println!("warning: p1*p2 = {:.3e} is at or below the floor {:.1e}", report.low_intensity.product_p1p2, report.low_intensity.floor);
    }
    for w in &c.warnings {
        println!("warning: {w}");
    }
    if fail_on_inconclusive && c.verdict == Verdict::Inconclusive {
        return Err(Failure::Inconclusive);
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Simulate => {
            let config = load_config(cli)?;
            let dir = out_dir(&config.output.dir)?;
            let streams = simulate_streams(&config)?;
            save_streams(&streams, &dir, config.output.format)?;
            let [n0, n1, n2] = streams.counts();
            println!("wrote {} (D0 {n0}, D1 {n1}, D2 {n2})", dir.join("run.ctag").display());
            Ok(())
        }
        Command::Run => {
            let config = load_config(cli)?;
            let dir = out_dir(&config.output.dir)?;
            let streams = simulate_streams(&config)?;
            save_streams(&streams, &dir, config.output.format)?;
            let report = analyze(&streams, None)?;
            emit_report(&report, &dir, config.output.format, config.output.fail_on_inconclusive)
        }
        Command::Analyze { input } => {
            let file = fs::File::open(input).map_err(|e| Failure::Io(format!("{}: {e}", input.display())))?;
            let streams = read_stream(&mut BufReader::new(file))?;
            let recorded = streams.metadata.run_config.clone();
            let mut window = recorded.as_ref().map(|c| c.window).unwrap_or_default();
            if let Some(alpha) = cli.alpha {
                window = WindowConfig { alpha, ..window };
            }
            let dir = out_dir(
                &cli.out
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .or(recorded.as_ref().map(|c| c.output.dir.clone()))
                    .unwrap_or_else(|| "out".to_string()),
            )?;
            let format = match cli.format {
                Some(Format::Csv) => ReportFormat::Csv,
                Some(Format::Json) => ReportFormat::Json,
                None => recorded.as_ref().map(|c| c.output.format).unwrap_or_default(),
            };
            let fail = cli.fail_on_inconclusive || recorded.as_ref().is_some_and(|c| c.output.fail_on_inconclusive);
            let report = analyze(&streams, Some(window))?;
            emit_report(&report, &dir, format, fail)
        }
        Command::ScanShape { s_min, s_max, points, remove_mirror } => {
            let mut config = load_config(cli)?;
            if *remove_mirror {
                config.apparatus.splitter_transmittance = 1.0;
            }
            let dir = out_dir(&config.output.dir)?;
            let grid = linear_grid(*s_min, *s_max, *points);
            let scan = run_shape_scan(&config, &grid)?;
            write_file(&dir.join("shape.csv"), scan.to_csv().as_bytes())?;
            let summary = scan.summary();
            write_file(&dir.join("shape.txt"), summary.as_bytes())?;
            if config.output.format == ReportFormat::Json {
                write_file(&dir.join("shape.json"), serde_json::to_string_pretty(&scan)?.as_bytes())?;
            }
            print!("{summary}");
            Ok(())
        }
        Command::BellCheck { values } => {
            let spec = PairwiseSpec::from_slice(values)?;
            let result = check_feasibility(&spec)?;
            println!("{}", serde_json::to_string_pretty(&result.to_json())?);
            Ok(())
        }
        Command::PoissonCheck { lambda, absorbers, replications } => {
            let config = load_config(cli)?;
            if !(lambda.is_finite() && *lambda >= 0.0) {
                return Err(ConfigError::new("lambda", "must be finite and >= 0").into());
            }
            let packet = config.source.green;
            let bank = AbsorberBank {
                fill_levels: vec![0.0; *absorbers],
                fill_gain: fill_gain_for_lambda(&packet, *lambda),
            };
            let diag = run_poisson_diagnostic(&packet, &bank, *replications, config.seed())?;
            let dir = out_dir(&config.output.dir)?;
            match config.output.format {
                ReportFormat::Json => write_file(&dir.join("poisson.json"), serde_json::to_string_pretty(&diag)?.as_bytes())?,
                ReportFormat::Csv => write_file(&dir.join("poisson.csv"), poisson_csv(&diag).as_bytes())?,
            }
            print_poisson(&diag);
            Ok(())
        }
    }
}

fn poisson_csv(diag: &PoissonDiagnostic) -> String {
    let mut out = String::from("dots,count,frequency,poisson\n");
    for (n, c) in diag.histogram.iter().enumerate() {
        let pmf = beamsplit::stats::poisson_pmf(n as u64, diag.lambda);
        out.push_str(&format!("{n},{c},{},{pmf}\n", diag.frequency(n)));
    }
    out
}

fn print_poisson(diag: &PoissonDiagnostic) {
    println!(
        "lambda = {:.6}  absorbers = {}  replications = {}  mean = {:.6}  variance = {:.6}",
        diag.lambda, diag.absorbers, diag.replications, diag.mean, diag.variance
    );
    match &diag.fit {
        Some(fit) => println!(
            "chi-square = {:.3}  dof = {}  p-value = {:.4}",
            fit.statistic, fit.degrees_of_freedom, fit.p_value
        ),
        None => println!("degenerate histogram: no chi-square fit"),
    }
}
