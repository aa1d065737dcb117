// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use barosync::ingest::{compensate_recording, read_recording, write_recording, META_FILE};
use barosync::pipeline::{self, AlignmentReport, EvalProtocol, PipelineConfig};
use barosync::stage1::{self, Verdict};
use barosync::synth::{self, AccelSpec, Scenario, SessionConfig};
use barosync::{compose_time_axes, Error, Recording};

mod config;

const OK: u8 = 0;
const INTERNAL: u8 = 1;
const USAGE: u8 = 2;
const REJECTED: u8 = 3;
const INSUFFICIENT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "barosync",
    version,
    about = "Synchronize wearable sensor recordings using air pressure and acceleration"
)]
struct Cli {
    /// More log output on standard error (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Worker threads for group and eval runs. Defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// `key = value` file with pipeline settings. Flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Tuning {
    /// Pre-alignment loss.
    #[arg(long, value_parser = config::parse_method)]
    method: Option<barosync::stage1::PrealignMethod>,

    /// Largest mean absolute pressure difference accepted as simultaneous.
    #[arg(long)]
    threshold_pa: Option<f64>,

    /// Half-width of the acceleration refinement around the pressure lag.
    #[arg(long)]
    range_s: Option<f64>,

    /// Pressure lag search window `LO,HI` in seconds (t_b - t_a).
    #[arg(long, value_parser = config::parse_range, allow_hyphen_values = true)]
    search_s: Option<(f64, f64)>,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether two recordings were made at the same time.
    Check {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Estimate the clock model of recording B relative to recording A.
    Align {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write B re-stamped onto A's time axis into this directory.
        #[arg(long)]
        apply: Option<PathBuf>,
    },
    /// Align several recordings against the longest one.
    Group {
        /// Recording directories, or one directory holding them.
        #[arg(required = true)]
        recordings: Vec<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
        /// Directory for per-device reports and re-stamped recordings.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic recordings with ground truth.
    Synth {
        #[arg(long, value_enum, default_value_t = ScenarioArg::Active)]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = 3600.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 2)]
        devices: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of sessions; session k uses seed + k.
        #[arg(long, default_value_t = 1)]
        sessions: u64,
        /// Two devices recording on different days.
        #[arg(long)]
        nonsimultaneous: bool,
        #[arg(long, value_enum, default_value_t = AccelArg::Both)]
        accel: AccelArg,
        /// Amplitude in °C of a slow temperature swing modulating the skew.
        #[arg(long)]
        temperature_c: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error table over a synthetic dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Split durations in seconds, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [300.0, 600.0, 900.0, 1800.0, 3600.0])]
        durations: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        max_splits: usize,
        #[command(flatten)]
        tuning: Tuning,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probability that two pressure readings differ by more than 2A.
    Rejprob {
        #[arg(long, default_value_t = 928.0)]
        sigma: f64,
        #[arg(long = "a", visible_alias = "A", default_value_t = 100.0)]
        a: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Active,
    Passive,
}

#[derive(Clone, Copy, ValueEnum)]
enum AccelArg {
    Both,
    Hires,
    Lowres,
    None,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Io { .. } | Error::Format { .. } | Error::Invalid(_) | Error::Fifo(_) => USAGE,
            Error::InsufficientData(_) | Error::Degenerate(_) | Error::EmptyLagRange(_) => INSUFFICIENT,
            Error::Stage { .. } => INTERNAL,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: USAGE, message: message.into() }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    usage(format!("{}: {e}", path.display()))
}

fn pipeline_config(file: Option<&Path>, tuning: &Tuning) -> Result<PipelineConfig, Failure> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = file {
        config::load(path, &mut cfg).map_err(usage)?;
    }
    if let Some(m) = tuning.method {
        cfg.stage1.method = m;
    }
    if let Some(t) = tuning.threshold_pa {
        cfg.stage1.rejection_threshold_pa = t;
    }
    if let Some(r) = tuning.range_s {
        cfg.stage2.refinement_range_s = r;
    }
    if let Some(r) = tuning.search_s {
        cfg.stage1.search_range_s = Some(r);
    }
    cfg.stage1.validate().map_err(|e| usage(e.to_string()))?;
    cfg.stage2.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn load(path: &Path, cfg: &PipelineConfig) -> Result<Recording, Failure> {
    if !path.is_dir() {
        return Err(usage(format!("{}: not a recording directory", path.display())));
    }
    let rec = read_recording(path)?;
    Ok(compensate_recording(&rec, &cfg.fifo)?)
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| usage(format!("standard output: {e}")))
        }
    }
}

fn log_warnings(report: &AlignmentReport) {
    for w in &report.warnings {
        warn!("{} vs {}: {w}", report.device_a, report.device_b);
    }
}

fn cmd_check(a: &Path, b: &Path, cfg: &PipelineConfig) -> Result<u8, Failure> {
    let (ra, rb) = (load(a, cfg)?, load(b, cfg)?);
    let (p1, p2) = if ra.pressure.sample_rate_hz <= rb.pressure.sample_rate_hz {
        (ra.pressure.clone(), barosync::ingest::resample_linear(&rb.pressure, ra.pressure.sample_rate_hz)?)
    } else {
        (barosync::ingest::resample_linear(&ra.pressure, rb.pressure.sample_rate_hz)?, rb.pressure.clone())
    };
    let check = stage1::check_simultaneous(&p1, &p2, &cfg.stage1)?;
    let verdict = match check.verdict {
        Verdict::Simultaneous => "simultaneous",
        Verdict::NonSimultaneous => "non-simultaneous",
        Verdict::InsufficientData => "insufficient-data",
    };
    let out = serde_json::json!({
        "device_a": ra.device_id,
        "device_b": rb.device_id,
        "verdict": verdict,
        "statistic_pa": check.statistic_pa,
        "threshold_pa": cfg.stage1.rejection_threshold_pa,
        "lag_s": check.best_lag.map(|l| l.lag_s),
    });
    write_text(None, &out.to_string())?;
    Ok(match check.verdict {
        Verdict::Simultaneous => OK,
        Verdict::NonSimultaneous => REJECTED,
        Verdict::InsufficientData => INSUFFICIENT,
    })
}

fn cmd_align(
    a: &Path,
    b: &Path,
    cfg: &PipelineConfig,
    out: Option<&Path>,
    apply: Option<&Path>,
) -> Result<u8, Failure> {
    let (ra, rb) = (load(a, cfg)?, load(b, cfg)?);
    let report = pipeline::synchronize_pair(&ra, &rb, cfg)?;
    log_warnings(&report);
    write_text(out, &report.to_json())?;
    if !report.simultaneous {
        info!("{} and {} were not recorded at the same time", ra.device_id, rb.device_id);
        return Ok(REJECTED);
    }
    if let (Some(dir), Some(model)) = (apply, report.clock_model) {
        let aligned = compose_time_axes(&ra, &rb, &model)?;
        write_recording(&aligned, dir)?;
        info!("wrote {} re-stamped onto {} to {}", rb.device_id, ra.device_id, dir.display());
    }
    Ok(OK)
}

fn recording_dirs(args: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    if let [single] = args {
        if single.is_dir() && !single.join(META_FILE).is_file() {
            let entries = fs::read_dir(single).map_err(|e| io_failure(single, e))?;
            let mut dirs: Vec<PathBuf> =
                entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.join(META_FILE).is_file()).collect();
            dirs.sort();
            return Ok(dirs);
        }
    }
    Ok(args.to_vec())
}

fn cmd_group(args: &[PathBuf], cfg: &PipelineConfig, out: Option<&Path>) -> Result<u8, Failure> {
    let recordings = recording_dirs(args)?.iter().map(|p| load(p, cfg)).collect::<Result<Vec<_>, _>>()?;
    let group = pipeline::synchronize_group(&recordings, cfg)?;
    let mut members = Vec::new();
    for m in &group.members {
        let entry = match &m.outcome {
            Ok(r) => {
                log_warnings(r);
                let status = if r.simultaneous { "accepted" } else { "rejected" };
                serde_json::json!({
                    "device_id": m.device_id,
                    "status": status,
                    "offset_s": r.clock_model.map(|c| c.offset_s),
                    "skew_ppm": r.clock_model.map(|c| c.skew_ppm()),
                    "reference_time_s": r.clock_model.map(|c| c.reference_time_s),
                })
            }
            Err(e) => {
                warn!("{}: {e}", m.device_id);
                serde_json::json!({ "device_id": m.device_id, "status": "failed", "error": e.to_string() })
            }
        };
        members.push(entry);
    }
    let reference = &recordings[group.reference].device_id;
    let summary = serde_json::json!({ "reference": reference, "members": members });
    if let Some(dir) = out {
        let reports = dir.join("reports");
        fs::create_dir_all(&reports).map_err(|e| io_failure(&reports, e))?;
        for m in &group.members {
            if let Ok(r) = &m.outcome {
                let p = reports.join(format!("{}.json", m.device_id));
                fs::write(&p, r.to_json()).map_err(|e| io_failure(&p, e))?;
            }
        }
        for rec in &group.aligned {
            write_recording(rec, &dir.join(&rec.device_id))?;
        }
    }
    write_text(None, &serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    Ok(OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    scenario: ScenarioArg,
    duration_s: f64,
    devices: usize,
    seed: u64,
    sessions: u64,
    nonsimultaneous: bool,
    accel: AccelArg,
    temperature_c: Option<f64>,
    out: &Path,
) -> Result<u8, Failure> {
    let scenario = match scenario {
        ScenarioArg::Active => Scenario::Active,
        ScenarioArg::Passive => Scenario::Passive,
    };
    if sessions == 0 {
        return Err(usage("--sessions must be at least 1"));
    }
    for k in 0..sessions {
        let mut cfg = SessionConfig::new(scenario, duration_s, devices, seed + k);
        cfg.accel = match accel {
            AccelArg::Both => vec![AccelSpec::high_resolution(), AccelSpec::standard()],
            AccelArg::Hires => vec![AccelSpec::high_resolution()],
            AccelArg::Lowres => vec![AccelSpec::standard()],
            AccelArg::None => vec![],
        };
        if let Some(amp) = temperature_c {
            cfg.clock.temperature = Some((amp, 3.0 * 3600.0));
        }
        let session =
            if nonsimultaneous { synth::generate_nonsimultaneous_pair(&cfg)? } else { synth::generate_session(&cfg)? };
        let dir = if sessions == 1 { out.to_path_buf() } else { out.join(format!("session_{:03}", k)) };
        synth::write_session(&session, &dir)?;
        info!("wrote {} recordings to {}", session.recordings.len(), dir.display());
    }
    Ok(OK)
}

fn cmd_eval(dataset: &Path, protocol: EvalProtocol, out: Option<&Path>) -> Result<u8, Failure> {
    if !dataset.is_dir() {
        return Err(usage(format!("{}: not a directory", dataset.display())));
    }
    let eval = pipeline::evaluate(dataset, &protocol)?;
    let failed = eval.pairs.iter().filter(|p| !p.error_s.is_finite()).count();
    if failed > 0 {
        warn!("{failed} of {} pairs could not be aligned; counted as infinite error", eval.pairs.len());
    }
    match out {
        Some(p) => {
            let file = fs::File::create(p).map_err(|e| io_failure(p, e))?;
            pipeline::write_eval_csv(&eval.rows, file)?;
        }
        None => pipeline::write_eval_csv(&eval.rows, std::io::stdout().lock())?,
    }
    Ok(OK)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| usage(format!("--jobs: {e}")))?;
    }
    let file = cli.config.as_deref();
    match cli.command {
        Command::Check { a, b, tuning } => cmd_check(&a, &b, &pipeline_config(file, &tuning)?),
        Command::Align { a, b, tuning, out, apply } => {
            cmd_align(&a, &b, &pipeline_config(file, &tuning)?, out.as_deref(), apply.as_deref())
        }
        Command::Group { recordings, tuning, out } => {
            cmd_group(&recordings, &pipeline_config(file, &tuning)?, out.as_deref())
        }
        Command::Synth {
            scenario,
            duration_s,
            devices,
            seed,
            sessions,
            nonsimultaneous,
            accel,
            temperature_c,
            out,
        } => cmd_synth(scenario, duration_s, devices, seed, sessions, nonsimultaneous, accel, temperature_c, &out),
        Command::Eval { dataset, durations, max_splits, tuning, out } => {
            if durations.iter().any(|d| !(*d > 0.0)) {
                return Err(usage("--durations must be positive"));
            }
            let protocol = EvalProtocol {
                durations_s: durations,
                max_splits,
                config: pipeline_config(file, &tuning)?,
                ..EvalProtocol::default()
            };
            cmd_eval(&dataset, protocol, out.as_deref())
        }
        Command::Rejprob { sigma, a } => {
            if !(sigma > 0.0 && a >= 0.0) {
                return Err(usage("--sigma must be positive and --a non-negative"));
            }
            write_text(None, &format!("{}", stage1::rejection_probability(sigma, a)))?;
            Ok(OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { OK });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(f)) => {
            eprintln!("barosync: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(INTERNAL),
    }
}
