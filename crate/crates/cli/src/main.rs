use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use consip_core::config::ConfigError;
use consip_core::medium::{self, LossModel};
use consip_core::metrics::{self, SlotHistogram};
use consip_core::report;
use consip_core::simulator::{self, SimError, SimReport, Simulation};
use consip_core::verifier::{
    self, ExchangeScript, SkipDoubleListening, SoakError, VerifyError, VerifySetup,
};
use consip_core::ScenarioConfig;
use thiserror::Error;

#[derive(Parser, Debug)]
#[command(
    name = "consip",
    version,
    about = "Simulate and verify per-link hopping-function exchange over TSCH"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario TOML file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulated duration per run, in 365-day years.
    #[arg(long, global = true)]
    duration_years: Option<f64>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    /// Override a configuration key, e.g. `--set loss.eps_f=0.2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its report, latency summaries and histograms.
    Run {
        /// Replay a loss trace (one F/A/D per attempt, e.g. a counterexample)
        /// instead of drawing random outcomes.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Power and latency versus update period, for both application periods.
    Table1,
    /// Power versus IE payload size.
    Table2,
    /// Exchange latency statistics.
    Table3,
    /// PDF and CDF of the switch latency.
    Fig4,
    /// Evenly spaced versus contiguous cell placement.
    Placement,
    /// Exhaustively check every loss pattern up to a horizon.
    Verify {
        /// Number of firings to explore (at most 12).
        #[arg(long, default_value_t = 8)]
        horizon: usize,
        /// Scripted sender events, e.g. `request@0,abort@2`.
        #[arg(long, default_value = "request@0")]
        script: String,
        /// Check the broken receiver that skips double listening.
        #[arg(long, hide = true)]
        mutant: bool,
    },
    /// Long random run with every runtime assertion armed.
    Soak {
        #[arg(long, default_value_t = 100_000)]
        exchanges: u64,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Failure(_) => ExitCode::from(1),
            CliError::Usage(_) => ExitCode::from(2),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => CliError::Usage(c.to_string()),
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(format!("i/o error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Failure(format!("csv error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(c: &Common) -> Result<ScenarioConfig, CliError> {
    let text = match &c.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = ScenarioConfig::from_toml_with_overrides(&text, &c.overrides)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(years) = c.duration_years {
        cfg = cfg.with_duration_years(years);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Output directory guard: refuses to clobber files without `--force`.
struct OutDir {
    dir: PathBuf,
    force: bool,
}

impl OutDir {
    fn prepare(dir: &Path, force: bool, names: &[&str]) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        if !force {
            if let Some(existing) = names.iter().map(|n| dir.join(n)).find(|p| p.exists()) {
                return Err(CliError::Usage(format!(
                    "{} already exists; pass --force to overwrite",
                    existing.display()
                )));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            force,
        })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        debug_assert!(self.force || !path.exists());
        Ok(BufWriter::new(File::create(path)?))
    }
}

const RUN_FILES: [&str; 7] = [
    "report.csv",
    "latency.csv",
    "exchange_latency.csv",
    "latency_histogram.csv",
    "d_sw_histogram.csv",
    "d_dl_histogram.csv",
    "d_tot_histogram.csv",
];

fn run(cli: Cli) -> Result<(), CliError> {
    let c = &cli.common;
    if let Some(jobs) = c.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Failure(e.to_string()))?;
    }
    match &cli.command {
        Command::Run { trace } => cmd_run(c, trace.as_deref()),
        Command::Table1 => {
            let cfg = load_config(c)?;
            let out = OutDir::prepare(&c.out, c.force, &["table1.csv"])?;
            let rows = report::table1(&cfg)?;
            report::write_power_table(out.create("table1.csv")?, &rows)?;
            println!(
                "wrote {} rows to {}",
                rows.len(),
                c.out.join("table1.csv").display()
            );
            Ok(())
        }
        Command::Table2 => {
            let cfg = load_config(c)?;
            let out = OutDir::prepare(&c.out, c.force, &["table2.csv"])?;
            let rows = report::table2(&cfg)?;
            report::write_ie_size_table(out.create("table2.csv")?, &rows[1..])?;
            println!(
                "wrote {} rows to {}",
                rows.len() - 1,
                c.out.join("table2.csv").display()
            );
            Ok(())
        }
        Command::Table3 => {
            let cfg = load_config(c)?;
            let out = OutDir::prepare(&c.out, c.force, &["table3.csv"])?;
            let r = report::table3(&cfg)?;
            report::write_exchange_table(out.create("table3.csv")?, &r)?;
            print!("{}", report::summary_text(&r));
            Ok(())
        }
        Command::Fig4 => {
            let cfg = load_config(c)?;
            let out = OutDir::prepare(&c.out, c.force, &["fig4_d_sw.csv"])?;
            let r = report::table3(&cfg)?;
            metrics::write_pdf_cdf_csv(out.create("fig4_d_sw.csv")?, &r.d_sw.pdf_cdf(r.slot_s))?;
            println!(
                "wrote {} bins to {}",
                r.d_sw.iter().count(),
                c.out.join("fig4_d_sw.csv").display()
            );
            Ok(())
        }
        Command::Placement => {
            let cfg = load_config(c)?;
            let out = OutDir::prepare(&c.out, c.force, &["placement.csv"])?;
            let p = simulator::placement_experiment(&cfg)?;
            report::write_placement(out.create("placement.csv")?, &p)?;
            print!("{}", report::summary_text(&p.spaced));
            print!("{}", report::summary_text(&p.contiguous));
            Ok(())
        }
        Command::Verify {
            horizon,
            script,
            mutant,
        } => cmd_verify(c, *horizon, script, *mutant),
        Command::Soak { exchanges } => {
            let cfg = load_config(c)?;
            match verifier::random_soak(&cfg, *exchanges, cfg.seed) {
                Ok(s) => {
                    println!(
                        "soak ok: seed {}, {} exchanges requested, {} completed, no violations",
                        s.seed, s.exchanges_requested, s.exchanges_completed
                    );
                    Ok(())
                }
                Err(SoakError::Violation { seed, detail }) => Err(CliError::Failure(format!(
                    "soak violation (seed {seed}):\n{detail}"
                ))),
                Err(SoakError::Sim(e)) => Err(e.into()),
            }
        }
    }
}

fn cmd_run(c: &Common, trace: Option<&Path>) -> Result<(), CliError> {
    let cfg = load_config(c)?;
    let sim = match trace {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read trace {}: {e}", path.display()))
            })?;
            let outcomes =
                medium::parse_trace(&text).map_err(|e| CliError::Usage(e.to_string()))?;
            Simulation::with_loss_model(&cfg, LossModel::trace(outcomes))?
        }
        None => Simulation::new(&cfg)?,
    };
    let out = OutDir::prepare(&c.out, c.force, &RUN_FILES)?;
    let r: SimReport = sim.run()?;
    report::write_report_row(out.create("report.csv")?, &r)?;
    report::write_latency_summary(out.create("latency.csv")?, &r)?;
    report::write_exchange_table(out.create("exchange_latency.csv")?, &r)?;
    let hist = |name: &str, h: &SlotHistogram| -> Result<(), CliError> {
        metrics::write_histogram_csv(out.create(name)?, h, r.slot_s)?;
        Ok(())
    };
    hist("latency_histogram.csv", &r.latency)?;
    hist("d_sw_histogram.csv", &r.d_sw)?;
    hist("d_dl_histogram.csv", &r.d_dl)?;
    hist("d_tot_histogram.csv", &r.d_tot)?;
    print!("{}", report::summary_text(&r));
    Ok(())
}

fn cmd_verify(c: &Common, horizon: usize, script: &str, mutant: bool) -> Result<(), CliError> {
    if horizon > verifier::MAX_HORIZON {
        return Err(CliError::Usage(format!(
            "horizon {horizon} exceeds the limit of {}",
            verifier::MAX_HORIZON
        )));
    }
    let script = ExchangeScript::parse(script).map_err(|e| CliError::Usage(e.to_string()))?;
    let result = if mutant {
        let setup = VerifySetup::default();
        let rx = SkipDoubleListening::new(
            setup.cell_i,
            setup.cell_j,
            setup.channel_offset,
            verifier::scripted_function(0),
        );
        verifier::verify_with(&setup, horizon, &script, rx)
    } else {
        verifier::verify(horizon, &script)
    };
    match result {
        Ok(r) => {
            println!(
                "verify ok: horizon {}, script {script}, {} paths, {} states, no violations",
                r.horizon, r.paths, r.states
            );
            Ok(())
        }
        Err(VerifyError::HorizonTooLarge(h)) => {
            Err(CliError::Usage(format!("horizon {h} is over budget")))
        }
        Err(VerifyError::Counterexample(cx)) => {
            print!("{cx}");
            let out = OutDir::prepare(&c.out, c.force, &["counterexample.trace"])?;
            fs::write(out.dir.join("counterexample.trace"), cx.to_trace_file())?;
            Err(CliError::Failure(format!(
                "counterexample written to {}",
                c.out.join("counterexample.trace").display()
            )))
        }
    }
}
