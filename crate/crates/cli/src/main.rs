//! `perfsig`: fit per-window performance signatures to transaction logs,
//! detect slow-down events, profile workloads, simulate M/M/1 ground
//! truth, and render report charts.

mod charts;
mod pipeline;
mod report;

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use perfsig_core::detect::{DetectorConfig, NormalizationMode};
use perfsig_core::ingest::{self, InputFormat, ParsedLog};
use perfsig_core::profile::workload_profile;
use perfsig_core::simulate::{inject_and_label, AnomalySchedule, ScheduleEntry, SimConfig};

use pipeline::PipelineParams;
use report::{AnalysisReport, RunConfig};

/// Exit code for `analyze --gate` runs that found alerting events.
const EXIT_GATED_ANOMALY: u8 = 2;

#[derive(Parser)]
#[command(
    name = "perfsig",
    version,
    about = "Whole-of-service performance signature analysis",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a transaction log: window, fit, detect, profile.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic transaction log from an M/M/1 queue.
    Simulate(SimulateArgs),
    /// Print the workload mix profile of a transaction log.
    Profile(ProfileArgs),
    /// Render SVG charts and CSV tables from an analysis report.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Ndjson,
}

impl From<FormatArg> for InputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => InputFormat::Csv,
            FormatArg::Ndjson => InputFormat::Ndjson,
        }
    }
}

impl FormatArg {
    fn name(self) -> &'static str {
        match self {
            FormatArg::Csv => "csv",
            FormatArg::Ndjson => "ndjson",
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input log path, or `-` for stdin.
    input: String,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv, env = "PERFSIG_FORMAT")]
    format: FormatArg,
    /// Sample window length in seconds.
    #[arg(long, default_value_t = 300, env = "PERFSIG_WINDOW_LENGTH")]
    window_length: u64,
    /// Windows with fewer records are kept but not fitted.
    #[arg(long, default_value_t = 30, env = "PERFSIG_MIN_SAMPLES")]
    min_samples: usize,
    /// Maximum bin probability for an anomalous grouping.
    #[arg(long, default_value_t = 0.05, env = "PERFSIG_SIGNIFICANCE")]
    significance: f64,
    /// Quantization increment for normalized changes.
    #[arg(long, default_value_t = 0.1, env = "PERFSIG_BIN_WIDTH")]
    bin_width: f64,
    /// Normalized-delta band treated as "stable".
    #[arg(long, default_value_t = 0.1, env = "PERFSIG_STABLE_BAND")]
    stable_band: f64,
    /// Change normalization scope: `full_period` or `rolling:<n>`.
    #[arg(long, default_value = "full_period", env = "PERFSIG_NORM_MODE")]
    norm_mode: String,
    /// ECDF decimation budget per window.
    #[arg(long, default_value_t = 512, env = "PERFSIG_MAX_POINTS")]
    max_points: usize,
    /// Fitter iteration budget.
    #[arg(long, default_value_t = 50, env = "PERFSIG_MAX_ITERATIONS")]
    max_iterations: usize,
    /// Fitter convergence tolerance.
    #[arg(long, default_value_t = 1e-10, env = "PERFSIG_TOL")]
    tol: f64,
    /// Treat tail slow-downs as alerting events.
    #[arg(long, env = "PERFSIG_ALERT_TAIL")]
    alert_tail: bool,
    /// Write rejected lines (NDJSON) here instead of stderr.
    #[arg(long, env = "PERFSIG_REJECTS")]
    rejects: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, short, env = "PERFSIG_OUTPUT")]
    output: Option<PathBuf>,
    /// Exit with code 2 when alerting events are present.
    #[arg(long, env = "PERFSIG_GATE")]
    gate: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Arrival rate, jobs per millisecond.
    #[arg(long, env = "PERFSIG_LAMBDA")]
    lambda: f64,
    /// Service rate, jobs per millisecond.
    #[arg(long, env = "PERFSIG_MU")]
    mu: f64,
    /// Simulation horizon in milliseconds.
    #[arg(long, env = "PERFSIG_DURATION")]
    duration: f64,
    #[arg(long, default_value_t = 0, env = "PERFSIG_SEED")]
    seed: u64,
    /// JSON schedule file: `[{"start_ms":..,"end_ms":..,"mu_factor":..}]`.
    /// Intervals must align to the window grid.
    #[arg(long, env = "PERFSIG_SCHEDULE")]
    schedule: Option<PathBuf>,
    /// Window length in seconds, for schedule alignment and labels.
    #[arg(long, default_value_t = 300, env = "PERFSIG_WINDOW_LENGTH")]
    window_length: u64,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv, env = "PERFSIG_FORMAT")]
    format: FormatArg,
    /// Record file to write.
    #[arg(long, env = "PERFSIG_OUT")]
    out: PathBuf,
    /// Labels CSV to write; defaults to `<out stem>.labels.csv`.
    #[arg(long, env = "PERFSIG_LABELS")]
    labels: Option<PathBuf>,
    /// Transaction mix, e.g. `login:0.3,search:0.5,checkout:0.2`.
    #[arg(long, env = "PERFSIG_TX_MIX")]
    tx_mix: Option<String>,
    /// Allow schedule intervals with effective rho >= 1.
    #[arg(long, env = "PERFSIG_ALLOW_OVERLOAD")]
    allow_overload: bool,
}

#[derive(Args)]
struct ProfileArgs {
    /// Input log path, or `-` for stdin.
    input: String,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv, env = "PERFSIG_FORMAT")]
    format: FormatArg,
    #[arg(long, short, env = "PERFSIG_OUTPUT")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Analysis report JSON produced by `analyze`.
    report: PathBuf,
    /// Directory for rendered charts and CSV tables.
    #[arg(long, env = "PERFSIG_OUT_DIR")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Profile(args) => cmd_profile(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn open_input(path: &str) -> Result<Box<dyn BufRead>> {
    if path == "-" {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        let file = fs::File::open(path).with_context(|| format!("cannot open {path}"))?;
        Ok(Box::new(BufReader::new(file)))
    }
}

fn parse_norm_mode(text: &str) -> Result<NormalizationMode> {
    if text == "full_period" {
        return Ok(NormalizationMode::FullPeriod);
    }
    if let Some(n) = text.strip_prefix("rolling:") {
        let n: usize = n
            .parse()
            .map_err(|_| anyhow!("bad rolling window in norm mode `{text}`"))?;
        if n == 0 {
            bail!("rolling window must be at least 1");
        }
        return Ok(NormalizationMode::Rolling(n));
    }
    bail!("norm mode must be `full_period` or `rolling:<n>`, got `{text}`")
}

fn write_rejects(parsed: &ParsedLog, target: &Option<PathBuf>) -> Result<()> {
    if parsed.rejects.is_empty() {
        return Ok(());
    }
    let mut lines = String::new();
    for r in &parsed.rejects {
        lines.push_str(&serde_json::to_string(r).expect("reject serializes"));
        lines.push('\n');
    }
    match target {
        Some(path) => fs::write(path, lines)
            .with_context(|| format!("cannot write rejects to {}", path.display()))?,
        None => eprint!("{lines}"),
    }
    Ok(())
}

fn emit(text: &str, output: &Option<PathBuf>) -> Result<()> {
    match output {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?
        }
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn validate_analyze_args(args: &AnalyzeArgs) -> Result<()> {
    if args.window_length == 0 || args.window_length > (i64::MAX as u64) / 1000 {
        bail!("window length must be between 1 second and i64::MAX milliseconds");
    }
    if args.max_points < 2 {
        bail!("max points must be at least 2");
    }
    if args.max_iterations == 0 {
        bail!("max iterations must be at least 1");
    }
    if !args.tol.is_finite() || args.tol <= 0.0 {
        bail!("tolerance must be positive");
    }
    if !(args.significance > 0.0 && args.significance < 0.5) {
        bail!("significance must be in (0, 0.5)");
    }
    if !(args.bin_width > 0.0 && args.bin_width <= 1.0) {
        bail!("bin width must be in (0, 1]");
    }
    // keeps the bin vector a few thousand entries at most
    if args.bin_width < 1e-4 {
        bail!("bin width below 1e-4 is not supported");
    }
    if !args.stable_band.is_finite() || args.stable_band < 0.0 {
        bail!("stable band must be nonnegative");
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    validate_analyze_args(&args)?;
    let norm_mode = parse_norm_mode(&args.norm_mode)?;
    let input = open_input(&args.input)?;
    let parsed = ingest::parse_records(input, args.format.into())?;
    write_rejects(&parsed, &args.rejects)?;

    let params = PipelineParams {
        window_length_ms: (args.window_length as i64) * 1000,
        min_samples: args.min_samples,
        max_points: args.max_points,
        max_iterations: args.max_iterations,
        tol: args.tol,
        bin_width: args.bin_width,
        norm_mode,
        detector: DetectorConfig {
            significance: args.significance,
            stable_band: args.stable_band,
            alert_tail: args.alert_tail,
        },
    };
    let config = RunConfig {
        input: args.input.clone(),
        format: args.format.name().to_string(),
        window_length_s: args.window_length,
        min_samples: args.min_samples,
        max_points: args.max_points,
        max_iterations: args.max_iterations,
        tol: args.tol,
        significance: args.significance,
        bin_width: args.bin_width,
        stable_band: args.stable_band,
        norm_mode: args.norm_mode.clone(),
        alert_tail: args.alert_tail,
        gate: args.gate,
    };
    let report = pipeline::analyze(parsed, &params, config)?;
    emit(&report.to_json(), &args.output)?;

    if args.gate && report.events.iter().any(|e| e.alerting) {
        return Ok(ExitCode::from(EXIT_GATED_ANOMALY));
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_tx_mix(text: &str) -> Result<Vec<(String, f64)>> {
    text.split(',')
        .map(|pair| {
            let (label, p) = pair
                .split_once(':')
                .ok_or_else(|| anyhow!("bad tx mix entry `{pair}`, expected label:probability"))?;
            let label = label.trim();
            if label.is_empty() {
                bail!("tx mix labels must be non-empty");
            }
            let p: f64 = p
                .parse()
                .with_context(|| format!("bad probability in `{pair}`"))?;
            Ok((label.to_string(), p))
        })
        .collect()
}

fn load_schedule(path: &Option<PathBuf>) -> Result<AnomalySchedule> {
    match path {
        None => Ok(AnomalySchedule::empty()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read schedule {}", path.display()))?;
            let entries: Vec<ScheduleEntry> =
                serde_json::from_str(&text).context("schedule must be a JSON array of entries")?;
            Ok(AnomalySchedule { entries })
        }
    }
}

fn default_labels_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "records".to_string());
    out.with_file_name(format!("{stem}.labels.csv"))
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    if args.window_length == 0 || args.window_length > (i64::MAX as u64) / 1000 {
        bail!("window length must be between 1 second and i64::MAX milliseconds");
    }
    let mut config = SimConfig::new(args.lambda, args.mu, args.duration, args.seed);
    config.allow_transient_overload = args.allow_overload;
    if let Some(mix) = &args.tx_mix {
        config.tx_type_mix = Some(parse_tx_mix(mix)?);
    }
    let schedule = load_schedule(&args.schedule)?;
    let window_ms = (args.window_length as i64) * 1000;

    let (output, labels) = inject_and_label(&config, &schedule, window_ms)?;

    let mut records_text = String::new();
    match args.format {
        FormatArg::Csv => {
            records_text.push_str(ingest::CSV_HEADER);
            records_text.push('\n');
            for r in &output.records {
                records_text.push_str(&format!(
                    "{},{},{}\n",
                    r.timestamp_ms, r.tx_type, r.response_ms
                ));
            }
        }
        FormatArg::Ndjson => {
            for r in &output.records {
                let label = serde_json::to_string(&r.tx_type).expect("label serializes");
                records_text.push_str(&format!(
                    "{{\"timestamp\":{},\"transaction_type\":{},\"response_ms\":{}}}\n",
                    r.timestamp_ms, label, r.response_ms
                ));
            }
        }
    }
    fs::write(&args.out, records_text)
        .with_context(|| format!("cannot write {}", args.out.display()))?;

    let labels_path = args
        .labels
        .clone()
        .unwrap_or_else(|| default_labels_path(&args.out));
    let mut labels_text = String::from("window_start,label\n");
    for l in &labels {
        let label = serde_json::to_string(&l.label).expect("label serializes");
        labels_text.push_str(&format!("{},{}\n", l.window_start, label.trim_matches('"')));
    }
    fs::write(&labels_path, labels_text)
        .with_context(|| format!("cannot write {}", labels_path.display()))?;

    eprintln!(
        "simulated {} arrivals ({} departed, {} in flight at horizon) -> {}",
        output.arrivals,
        output.records.len(),
        output.dropped_in_flight,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_profile(args: ProfileArgs) -> Result<ExitCode> {
    let input = open_input(&args.input)?;
    let parsed = ingest::parse_records(input, args.format.into())?;
    if parsed.records.is_empty() {
        bail!("no records to profile");
    }
    let profile = workload_profile(&parsed.records)?;
    let mut text = report::to_deterministic_json(&profile);
    text.push('\n');
    emit(&text, &args.output)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.report)
        .with_context(|| format!("cannot read {}", args.report.display()))?;
    let report = AnalysisReport::from_json(&text)
        .with_context(|| format!("{} is not an analysis report", args.report.display()))?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    for artifact in charts::render_all(&report) {
        let path = args.out_dir.join(artifact.name);
        fs::write(&path, artifact.contents)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    eprintln!("wrote charts and tables to {}", args.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_valid() {
        Cli::command().debug_assert();
    }

    #[test]
    fn norm_mode_parsing() {
        assert_eq!(
            parse_norm_mode("full_period").unwrap(),
            NormalizationMode::FullPeriod
        );
        assert_eq!(
            parse_norm_mode("rolling:12").unwrap(),
            NormalizationMode::Rolling(12)
        );
        assert!(parse_norm_mode("rolling:0").is_err());
        assert!(parse_norm_mode("sliding").is_err());
    }

    #[test]
    fn tx_mix_parsing() {
        let mix = parse_tx_mix("login:0.3,search:0.5,checkout:0.2").unwrap();
        assert_eq!(mix.len(), 3);
        assert_eq!(mix[1], ("search".to_string(), 0.5));
        assert!(parse_tx_mix("login").is_err());
        assert!(parse_tx_mix("login:x").is_err());
    }

    #[test]
    fn labels_path_derivation() {
        assert_eq!(
            default_labels_path(Path::new("/tmp/records.csv")),
            PathBuf::from("/tmp/records.labels.csv")
        );
    }
}
