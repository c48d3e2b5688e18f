//! Operator commands: `simulate`, `run`, `train`, `report`, `ranges`.

use std::fs::File;
use std::io::{BufWriter, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::anomaly::{self, AnomalyLabel};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eventlog::{Event, EventLog};
use crate::forecast::{self, Checkpoint};
use crate::ingest::{self, IngestStats, ScenarioSpec};
use crate::model::{NormalRanges, PatientProfile, VitalGroup, VitalKind, VitalSample};
use crate::pipeline::{checkpoint_path, Pipeline, PipelineConfig, RunSummary};
use crate::triage::{self, PredictedRisk, TriageReport};

#[derive(Debug, Parser)]
#[command(name = "vitalfuse", version, about = "Vital-signs fusion and triage")]
pub struct Cli {
    /// Key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub no_color: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a replay file from a scenario.
    Simulate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline over a TCP listener or a replay file.
    Run {
        #[arg(long, conflicts_with = "replay")]
        listen: Option<String>,
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Replay pacing; 0 is as fast as possible.
        #[arg(long, default_value_t = 0.0)]
        speed: f64,
        /// JSON array of patient profiles.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Stop listening after this many seconds.
        #[arg(long)]
        max_seconds: Option<f64>,
    },
    /// Fit a forecaster on a patient's logged history.
    Train {
        #[arg(long)]
        patient: String,
        #[arg(long)]
        kind: VitalKind,
    },
    /// Print a patient's risk history.
    Report {
        #[arg(long)]
        patient: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Print the normal-range table in config-file form.
    Ranges,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(&cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            eprintln!("vitalfuse: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::validation(format!("config {}: {e}", path.display())))?;
            let mut cfg = RunConfig::default();
            cfg.apply_str(&text)?;
            cfg
        }
        None => RunConfig::default(),
    };
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(s) = cfg.seed {
        cfg.lstm.rng_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_ranges(cfg: &RunConfig) -> Result<NormalRanges> {
    match &cfg.ranges_file {
        Some(p) => NormalRanges::from_config_str(&std::fs::read_to_string(p)?),
        None => Ok(NormalRanges::default()),
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(cli)?;
    let color = !cli.no_color && std::env::var_os("NO_COLOR").is_none();
    match &cli.command {
        Command::Simulate { scenario, out: path } => {
            cmd_simulate(&cfg, scenario.as_deref(), path.as_deref(), out)
        }
        Command::Run {
            listen,
            replay,
            speed,
            profiles,
            max_seconds,
        } => {
            let source = match (listen.clone().or(cfg.listen.clone()), replay) {
                (_, Some(r)) => Source::Replay(r.clone(), *speed),
                (Some(l), None) => Source::Listen(l, *max_seconds),
                (None, None) => return Err(Error::validation("run needs --listen or --replay")),
            };
            let summary = cmd_run(&cfg, source, profiles.as_deref(), color, out)?;
            if !summary.conservation_ok {
                return Err(Error::Numerical("sample conservation check failed".into()));
            }
            Ok(())
        }
        Command::Train { patient, kind } => cmd_train(&cfg, patient, *kind, out),
        Command::Report { patient, format } => cmd_report(&cfg, patient, *format, color, out),
        Command::Ranges => {
            out.write_all(load_ranges(&cfg)?.to_config_string().as_bytes())?;
            Ok(())
        }
    }
}

fn profiles_path(replay: &Path) -> PathBuf {
    let mut s = replay.as_os_str().to_owned();
    s.push(".profiles.json");
    PathBuf::from(s)
}

pub fn cmd_simulate(
    cfg: &RunConfig,
    scenario: Option<&Path>,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let scenario = scenario
        .or(cfg.scenario.as_deref())
        .ok_or_else(|| Error::validation("simulate needs --scenario"))?;
    let text = std::fs::read_to_string(scenario)
        .map_err(|e| Error::validation(format!("scenario {}: {e}", scenario.display())))?;
    let mut spec = ScenarioSpec::from_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::validation(format!("scenario {}: {j}", scenario.display())),
        other => other,
    })?;
    if let Some(seed) = cfg.seed {
        spec.rng_seed = seed;
    }
    let samples = ingest::sim::simulate_with_ranges(&spec, &load_ranges(cfg)?)?;
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            ingest::write_samples(&mut w, samples.iter())?;
            w.flush()?;
            let mut profiles = serde_json::to_string_pretty(&spec.profiles())?;
            profiles.push('\n');
            std::fs::write(profiles_path(p), profiles)?;
            log::info!("wrote {} samples to {}", samples.len(), p.display());
        }
        None => {
            ingest::write_samples(out, samples.iter())?;
        }
    }
    Ok(())
}

pub enum Source {
    Replay(PathBuf, f64),
    Listen(String, Option<f64>),
}

fn read_profiles(path: &Path) -> Result<Vec<PatientProfile>> {
    let list: Vec<PatientProfile> = serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Error::validation(format!("profiles {}: {e}", path.display())))?;
    for p in &list {
        PatientProfile::new(p.patient_id.clone(), p.age_years)?;
    }
    Ok(list)
}

pub fn cmd_run(
    cfg: &RunConfig,
    source: Source,
    profiles: Option<&Path>,
    color: bool,
    out: &mut dyn Write,
) -> Result<RunSummary> {
    let profiles = match (profiles, &source) {
        (Some(p), _) => read_profiles(p)?,
        (None, Source::Replay(r, _)) if profiles_path(r).exists() => read_profiles(&profiles_path(r))?,
        _ => Vec::new(),
    };
    let pcfg = PipelineConfig::from_run_config(cfg, load_ranges(cfg)?);
    let log = EventLog::open(&cfg.data_dir)?;
    let mut pipeline = Pipeline::new(pcfg, &profiles, log)?;
    let stats = match source {
        Source::Replay(path, speed) => {
            if !(speed.is_finite() && speed >= 0.0) {
                return Err(Error::validation("speed must be non-negative"));
            }
            ingest::replay(&path, speed, &mut pipeline)?
        }
        Source::Listen(endpoint, max_seconds) => {
            let shared = Arc::new(Mutex::new(pipeline));
            let stats = listen(&endpoint, Arc::clone(&shared), max_seconds, color)?;
            pipeline = Arc::try_unwrap(shared)
                .map_err(|_| Error::Numerical("pipeline still shared after shutdown".into()))?
                .into_inner()
                .map_err(|_| Error::Numerical("pipeline lock poisoned".into()))?;
            stats
        }
    };
    let summary = pipeline.finish(&stats)?;
    render_table(pipeline.latest(), color, out)?;
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(cfg.data_dir.join("summary.json"), text)?;
    writeln!(
        out,
        "{} samples accepted, {} dropped, {} triage reports",
        summary.clean.accepted,
        summary.clean.drops(),
        summary.triage_reports
    )?;
    Ok(summary)
}

fn listen(
    endpoint: &str,
    shared: Arc<Mutex<Pipeline<EventLog>>>,
    max_seconds: Option<f64>,
    color: bool,
) -> Result<IngestStats> {
    let server = ingest::serve(endpoint, Arc::clone(&shared))?;
    eprintln!("listening on {}", server.local_addr());
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = Arc::clone(&stop);
        if let Err(e) = ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst)) {
            log::warn!("no interrupt handler: {e}");
        }
    }
    let started = Instant::now();
    let limit = max_seconds.map(Duration::from_secs_f64);
    let mut last_draw = Instant::now();
    let interactive = std::io::stdout().is_terminal();
    while !stop.load(Ordering::SeqCst) && limit.map_or(true, |l| started.elapsed() < l) {
        std::thread::sleep(Duration::from_millis(50));
        if interactive && last_draw.elapsed() >= Duration::from_secs(1) {
            last_draw = Instant::now();
            let p = shared.lock().expect("pipeline lock");
            let mut o = std::io::stdout().lock();
            let _ = write!(o, "\x1b[2J\x1b[H");
            let _ = render_table(p.latest(), color, &mut o);
        }
    }
    Ok(server.shutdown())
}

fn band_cell(b: crate::model::Band) -> String {
    format!("{:<8}", b.as_str())
}

/// One row per patient: risk, bands and the timestamp of the last epoch.
pub fn render_table<'a>(
    reports: impl Iterator<Item = &'a TriageReport>,
    color: bool,
    out: &mut dyn Write,
) -> Result<()> {
    write!(out, "{:<12}{:<9}", "patient", "risk")?;
    for g in VitalGroup::ALL {
        write!(out, "{:<8}", short_group(g))?;
    }
    writeln!(out, "last_ts_ms")?;
    for r in reports {
        let risk = format!("{:<9}", r.risk.as_str());
        let risk = if color {
            format!("{}{risk}\x1b[0m", triage::color(r.risk).ansi())
        } else {
            risk
        };
        write!(out, "{:<12}{risk}", r.patient_id)?;
        for b in r.bands.to_array() {
            write!(out, "{}", band_cell(b))?;
        }
        writeln!(out, "{}", r.ts_ms)?;
    }
    Ok(())
}

fn short_group(g: VitalGroup) -> &'static str {
    match g {
        VitalGroup::Respiratory => "resp",
        VitalGroup::BloodPh => "ph",
        VitalGroup::Heart => "heart",
        VitalGroup::BloodPressure => "bp",
        VitalGroup::Temperature => "temp",
    }
}

fn patient_events(cfg: &RunConfig, patient: &str) -> Result<Vec<Event>> {
    let path = EventLog::patient_path(&cfg.data_dir, patient);
    if !path.exists() {
        return Err(Error::validation(format!("unknown patient {patient}")));
    }
    EventLog::read_patient(&cfg.data_dir, patient)
}

/// Per-epoch values of `kind` from a patient's log, leaving out epochs
/// whose reading was labelled a reading error.
pub fn logged_series(events: &[Event], kind: VitalKind, epoch_s: f64) -> Result<Vec<f64>> {
    let samples: Vec<VitalSample> = events
        .iter()
        .filter_map(|e| match e {
            Event::Sample(s) => Some(s.clone()),
            _ => None,
        })
        .collect();
    let suspect: std::collections::HashSet<i64> = events
        .iter()
        .filter_map(|e| match e {
            Event::Anomaly(a) if a.labels[kind.group().index()] == Some(AnomalyLabel::ReadingError) => {
                Some(a.ts_ms)
            }
            _ => None,
        })
        .collect();
    let grid = anomaly::align_epochs(&samples, epoch_s)?;
    Ok(grid
        .rows
        .iter()
        .filter(|r| !suspect.contains(&r.ts_ms))
        .filter_map(|r| r.values[kind.index()])
        .collect())
}

pub fn cmd_train(cfg: &RunConfig, patient: &str, kind: VitalKind, out: &mut dyn Write) -> Result<()> {
    let events = patient_events(cfg, patient)?;
    let series = logged_series(&events, kind, cfg.epoch_s)?;
    if series.len() < forecast::MIN_TRAIN_LEN {
        return Err(Error::validation(format!(
            "{patient} has {} logged epochs of {kind}, need at least {}",
            series.len(),
            forecast::MIN_TRAIN_LEN
        )));
    }
    let outcome = forecast::train(&series, &cfg.lstm)?;
    let dir = cfg.data_dir.join("models");
    std::fs::create_dir_all(&dir)?;
    let path = checkpoint_path(&dir, patient, kind);
    Checkpoint::new(&outcome.model, outcome.standardizer).save(&path)?;
    std::fs::write(path.with_extension("loss.csv"), forecast::loss_curve_csv(&outcome.loss_curve))?;
    let first = outcome.loss_curve.first().copied().unwrap_or(f64::NAN);
    let last = outcome.loss_curve.last().copied().unwrap_or(f64::NAN);
    writeln!(
        out,
        "trained {patient}/{kind} on {} epochs: loss {first:.6} -> {last:.6}, checkpoint {}",
        series.len(),
        path.display()
    )?;
    Ok(())
}

/// Document printed by `report --format json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientReport {
    pub patient_id: String,
    pub history: Vec<TriageReport>,
    pub predicted: Option<PredictedRisk>,
}

pub fn patient_report(cfg: &RunConfig, patient: &str) -> Result<PatientReport> {
    let history: Vec<TriageReport> = patient_events(cfg, patient)?
        .into_iter()
        .filter_map(|e| match e {
            Event::Triage(t) => Some(t),
            _ => None,
        })
        .collect();
    let predicted = history.last().and_then(|t| t.predicted.clone());
    Ok(PatientReport {
        patient_id: patient.to_string(),
        history,
        predicted,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    ts_ms: i64,
    risk: &'a str,
    color: &'a str,
    path: &'a str,
    matched_row: Option<usize>,
    respiratory: &'a str,
    blood_ph: &'a str,
    heart: &'a str,
    blood_pressure: &'a str,
    temperature: &'a str,
    predicted_risk: Option<&'a str>,
    recommendations: String,
}

fn path_str(p: triage::TriagePath) -> &'static str {
    match p {
        triage::TriagePath::RuleTable => "rule_table",
        triage::TriagePath::DsFallback => "ds_fallback",
    }
}

fn recommendation_text(t: &TriageReport) -> String {
    t.recommendations
        .iter()
        .map(|r| format!("{}: {}", r.vital.token(), r.text))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn cmd_report(
    cfg: &RunConfig,
    patient: &str,
    format: Format,
    color: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let report = patient_report(cfg, patient)?;
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, &report)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            for t in &report.history {
                let b = t.bands.to_array().map(|b| b.as_str());
                w.serialize(CsvRow {
                    ts_ms: t.ts_ms,
                    risk: t.risk.as_str(),
                    color: triage::color(t.risk).as_str(),
                    path: path_str(t.path),
                    matched_row: t.matched_row,
                    respiratory: b[0],
                    blood_ph: b[1],
                    heart: b[2],
                    blood_pressure: b[3],
                    temperature: b[4],
                    predicted_risk: t.predicted.as_ref().map(|p| p.risk.as_str()),
                    recommendations: recommendation_text(t),
                })
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
            }
            w.flush()?;
        }
        Format::Text => {
            writeln!(out, "patient {} ({} epochs)", report.patient_id, report.history.len())?;
            for t in &report.history {
                let risk = format!("{:<8}", t.risk.as_str());
                let risk = if color {
                    format!("{}{risk}\x1b[0m", triage::color(t.risk).ansi())
                } else {
                    risk
                };
                let how = match t.matched_row {
                    Some(r) => format!("rule {r}"),
                    None => "fusion".to_string(),
                };
                write!(out, "{}  {risk} {:<8}", t.ts_ms, how)?;
                for b in t.bands.to_array() {
                    write!(out, " {}", band_cell(b))?;
                }
                writeln!(out)?;
                if t.risk != crate::model::RiskLevel::Low {
                    for r in &t.recommendations {
                        writeln!(out, "    {}: {}", r.vital.token(), r.text)?;
                    }
                }
            }
            match &report.predicted {
                Some(p) => writeln!(out, "next epoch: {}", p.risk)?,
                None => writeln!(out, "next epoch: unknown")?,
            }
        }
    }
    Ok(())
}
