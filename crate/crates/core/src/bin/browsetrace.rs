//! `browsetrace` command-line interface.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 I/O error.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use browsetrace::cleaning::CleaningError;
use browsetrace::event::UserId;
use browsetrace::io::{self, ReadError};
use browsetrace::metrics::idle::{IdleMeasure, DEFAULT_HOURLY_FLOOR};
use browsetrace::navgraph::{build_navtree, export_navtree, NavFormat};
use browsetrace::pipeline::{self, PipelineConfig, PipelineError};
use browsetrace::server;
use browsetrace::session::dump_session;
use browsetrace::store::{EventStore, StoreError};
use browsetrace::synth::{self, RandomParams, SynthError, TraceSchedule};

#[derive(Debug, Parser)]
#[command(name = "browsetrace", version, about = "Browsing-telemetry pipeline")]
struct Cli {
    /// Worker threads for parallel stages (0 = number of cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Log filter, e.g. `info` or `browsetrace=debug`.
    #[arg(long, global = true, env = "BROWSETRACE_LOG", default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the ingestion service (POST /v1/events, GET /v1/users/{id}/events).
    Serve {
        #[arg(long, env = "BROWSETRACE_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Directory holding one log file per user.
        #[arg(long, env = "BROWSETRACE_STORE")]
        store: PathBuf,
        /// Skip fsync after each batch.
        #[arg(long)]
        no_fsync: bool,
    },
    /// Generate a synthetic event stream from a schedule.
    Gen(GenArgs),
    /// Filter users, drop duplicates and estimate missing closes.
    Clean {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Orphan events are written here.
        #[arg(long)]
        quarantine: Option<PathBuf>,
        /// Keep only the N users with the most events.
        #[arg(long)]
        top_users: Option<usize>,
        /// Cleaning counts as key=value lines.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Reconstruct sessions and dump them as text.
    Sessionize {
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute one metric family.
    #[command(subcommand)]
    Analyze(Analyze),
    /// Navigation trees.
    ///
    /// With --session, exports that session's tree. Without it, writes one
    /// CSV row per session: user_id, session_id, n_nodes, branching_factor,
    /// avg_root_distance.
    Graph {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        session: Option<u64>,
        /// Disambiguates --session when several users share the id.
        #[arg(long)]
        user: Option<UserId>,
        /// dot or edge-list.
        #[arg(long, default_value = "dot")]
        format: NavFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole pipeline and write every artifact plus summary.txt.
    ///
    /// Files: cleaning_report.txt, quarantine.ndjsonl, parallel.csv,
    /// idle.csv, idle_hourly.csv, popularity.csv, popularity_means.csv,
    /// navgraph.csv, summary.txt.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        idle: ThresholdArgs,
        #[arg(long)]
        top_users: Option<usize>,
        #[arg(long, default_value_t = 100)]
        top_domains: usize,
        #[arg(long, default_value_t = 80.0)]
        common_pct: f64,
        /// Count focused time only in a focused, non-minimized window.
        #[arg(long)]
        strict_focus: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hour bins with fewer sessions are flagged low-confidence.
        #[arg(long, default_value_t = DEFAULT_HOURLY_FLOOR)]
        hourly_floor: usize,
    },
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Schedule file.
    #[arg(long, group = "source")]
    schedule: Option<PathBuf>,
    /// Built-in schedule: searcher, radio-listener or power-user.
    #[arg(long, group = "source")]
    preset: Option<String>,
    /// Random schedule from this seed.
    #[arg(long, group = "source")]
    random: Option<u64>,
    /// Seeds the URL key (when the schedule has none) and the corruption.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Probability of duplicating each lifecycle event.
    #[arg(long, default_value_t = 0.0)]
    duplicates: f64,
    /// Probability of dropping each session or window close.
    #[arg(long, default_value_t = 0.0)]
    drop_closes: f64,
    /// Where to record injected corruption.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Also write the resolved schedule text here.
    #[arg(long)]
    dump_schedule: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    /// Implicit-idle thresholds in seconds, ascending.
    #[arg(long, value_delimiter = ',', default_values_t = [60, 240, 960])]
    thresholds: Vec<i64>,
}

impl ThresholdArgs {
    fn millis(&self) -> Result<Vec<i64>, CliError> {
        let ms: Vec<i64> = self.thresholds.iter().map(|s| s.saturating_mul(1000)).collect();
        pipeline::validate_thresholds(&ms)?;
        Ok(ms)
    }
}

#[derive(Debug, Subcommand)]
enum Analyze {
    /// Per-user parallel browsing.
    ///
    /// Columns: user_id, mean_windows, median_tabs, p_ge_2_tabs, p_ge_4,
    /// p_ge_8, p_ge_16, never_visible_frac, reuse_ratio, reuse_bound.
    Parallel {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-user idle time.
    ///
    /// Columns: user_id, median_session_len, explicit_idle_ratio, then
    /// implicit_idle_ratio_<T>s per threshold. The hourly CSV has hour,
    /// n_sessions, median_idle_ratio, low_confidence.
    Idle {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        idle: ThresholdArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the hour-of-day profile.
        #[arg(long)]
        hourly: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_HOURLY_FLOOR)]
        hourly_floor: usize,
    },
    /// Cross-user website popularity.
    ///
    /// Columns: domain, visit_time_ratio, page_load_ratio, focused_ratio,
    /// active_ratio, n_users. Values are medians across users.
    Popularity {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 100)]
        top: usize,
        #[arg(long, default_value_t = 80.0)]
        common_pct: f64,
        /// Sort key: visit_time, page_load, focused, active or all.
        #[arg(long, default_value = "all")]
        metric: String,
        #[arg(long)]
        strict_focus: bool,
        #[arg(long)]
        out: PathBuf,
        /// Also write cross-user means in the same layout.
        #[arg(long)]
        means: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl From<ReadError> for CliError {
    fn from(e: ReadError) -> Self {
        CliError::Pipeline(e.into())
    }
}

impl From<CleaningError> for CliError {
    fn from(e: CleaningError) -> Self {
        CliError::Pipeline(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Pipeline(e) => e.exit_code(),
            CliError::Synth(_) | CliError::Data(_) => 2,
            CliError::Usage(_) => 1,
            CliError::Store(_) | CliError::Io { .. } => 3,
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    Ok(pipeline::write_artifact(path, bytes)?)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn sessions_of(input: &Path) -> Result<pipeline::UserSessions, CliError> {
    let events = pipeline::read_input(input)?;
    let (users, anomalies) = pipeline::sessionize(&events);
    if !anomalies.is_empty() {
        tracing::warn!(count = anomalies.len(), "events dropped during sessionization");
    }
    Ok(users)
}

fn gen(a: GenArgs) -> Result<(), CliError> {
    let schedule: TraceSchedule = match (&a.schedule, &a.preset, a.random) {
        (Some(p), _, _) => read_text(p)?.parse()?,
        (_, Some(name), _) => synth::preset(name).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown preset {name:?}; available: {}",
                synth::PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            ))
        })?,
        (_, _, Some(seed)) => synth::random_schedule(seed, &RandomParams::default()),
        _ => return Err(CliError::Usage("one of --schedule, --preset or --random is required".into())),
    };
    for (name, r) in [("--duplicates", a.duplicates), ("--drop-closes", a.drop_closes)] {
        if !(0.0..=1.0).contains(&r) {
            return Err(CliError::Usage(format!("{name} must be in [0, 1], got {r}")));
        }
    }
    let clean = synth::generate(&schedule, a.seed)?;
    let (events, manifest) = synth::corrupt(&clean, a.duplicates, a.drop_closes, a.seed);
    write(&a.out, &io::encode_events(&events))?;
    if let Some(m) = &a.manifest {
        write(m, manifest.to_text().as_bytes())?;
    }
    if let Some(s) = &a.dump_schedule {
        write(s, schedule.to_string().as_bytes())?;
    }
    tracing::info!(events = events.len(), corrupted = manifest.entries.len(), "trace generated");
    Ok(())
}

fn analyze(cmd: Analyze) -> Result<(), CliError> {
    match cmd {
        Analyze::Parallel { input, out } => {
            let users = sessions_of(&input)?;
            write(&out, &pipeline::parallel_csv(&users)?)
        }
        Analyze::Idle { input, idle, out, hourly, hourly_floor } => {
            let thresholds = idle.millis()?;
            let users = sessions_of(&input)?;
            let profiles = pipeline::idle_profiles(&users, &thresholds);
            write(&out, &pipeline::idle_csv(&profiles, &thresholds)?)?;
            if let Some(h) = hourly {
                write(&h, &pipeline::hourly_csv(&profiles, IdleMeasure::Explicit, hourly_floor)?)?;
            }
            Ok(())
        }
        Analyze::Popularity { input, top, common_pct, metric, strict_focus, out, means } => {
            pipeline::validate_pct(common_pct)?;
            let metric = if metric == "all" { metric } else { normalize_metric(&metric)? };
            let users = sessions_of(&input)?;
            let mode = PipelineConfig { strict_focus, ..Default::default() }.focus_mode();
            let rows = pipeline::popularity_rows(&users, mode, top, common_pct, &metric)?;
            write(&out, &pipeline::popularity_csv(&rows)?)?;
            if let Some(m) = means {
                write(&m, &pipeline::popularity_means_csv(&rows)?)?;
            }
            Ok(())
        }
    }
}

fn normalize_metric(m: &str) -> Result<String, CliError> {
    m.parse::<browsetrace::metrics::popularity::Metric>()
        .map(|m| m.as_str().to_string())
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn graph(
    input: &Path,
    session: Option<u64>,
    user: Option<UserId>,
    format: NavFormat,
    out: &Path,
) -> Result<(), CliError> {
    let users = sessions_of(input)?;
    let Some(sid) = session else {
        return write(out, &pipeline::navgraph_csv(&pipeline::navtrees(&users))?);
    };
    let matches: Vec<_> = users
        .iter()
        .filter(|(u, _)| user.is_none_or(|x| x == **u))
        .flat_map(|(u, ss)| ss.iter().filter(|s| s.session_id == sid).map(move |s| (*u, s)))
        .collect();
    match matches.as_slice() {
        [] => Err(CliError::Data(format!("session {sid} not found"))),
        [(_, s)] => write(out, &export_navtree(&build_navtree(s), format)),
        many => Err(CliError::Usage(format!(
            "session {sid} exists for users {}; pass --user",
            many.iter().map(|(u, _)| u.to_string()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    match cli.command {
        Command::Serve { listen, store, no_fsync } => {
            let store = Arc::new(EventStore::open_with_sync(store, !no_fsync)?);
            let rt = tokio::runtime::Runtime::new().map_err(|source| CliError::Io { path: PathBuf::new(), source })?;
            rt.block_on(server::serve(listen, store))
                .map_err(|source| CliError::Io { path: PathBuf::from(listen.to_string()), source })
        }
        Command::Gen(a) => gen(a),
        Command::Clean { input, out, quarantine, top_users, report } => {
            if top_users == Some(0) {
                return Err(CliError::Usage("--top-users must be at least 1".into()));
            }
            let events = pipeline::read_input(&input)?;
            let cleaned = pipeline::clean_events(events, top_users)?;
            write(&out, &io::encode_events(&cleaned.events))?;
            if let Some(q) = quarantine {
                write(&q, &io::encode_events(&cleaned.quarantine))?;
            }
            let kv = cleaned.report.to_key_value();
            match report {
                Some(r) => write(&r, kv.as_bytes()),
                None => {
                    eprint!("{kv}");
                    Ok(())
                }
            }
        }
        Command::Sessionize { input, out } => {
            let users = sessions_of(&input)?;
            let text: String = users.values().flatten().map(dump_session).collect();
            match out {
                Some(p) => write(&p, text.as_bytes()),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Analyze(a) => analyze(a),
        Command::Graph { input, session, user, format, out } => graph(&input, session, user, format, &out),
        Command::Report { input, out, idle, top_users, top_domains, common_pct, strict_focus, seed, hourly_floor } => {
            let config = PipelineConfig {
                input,
                output: out,
                thresholds_ms: idle.millis()?,
                top_users,
                top_domains,
                common_pct,
                strict_focus,
                seed,
                jobs: cli.jobs,
                hourly_floor,
            };
            pipeline::run_report(&config)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_new(&cli.log).unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
