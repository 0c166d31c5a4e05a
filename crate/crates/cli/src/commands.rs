//! Argument definitions and subcommand implementations.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use roadsense_core::canonical;
use roadsense_core::drivesim::{self, Scenario};
use roadsense_core::geo::Polyline;
use roadsense_core::model::{self, PackageStreams, MANIFEST_FILE};
use roadsense_core::packstore::{self, LibraryEntry, PackstoreError, UploadState, UploadStatus, PARTIAL_SUFFIX};
use roadsense_core::timeline::{self, TimeIndex, Timestamped};
use roadsense_syncd::replay::NetworkProfile;
use roadsense_syncd::uploader::{UploadError, UploadOptions, Uploader};
use roadsense_syncd::{ClientError, ServerConfig, SyncClient};
use serde::Serialize;

use crate::analysis;
use crate::config::Config;
use crate::report;
use crate::CliError;

/// Road telemetry packages: simulate, sync, query and analyze.
#[derive(Debug, Parser)]
#[command(name = "roadsense", version)]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic drive into a package library.
    Simulate(SimulateArgs),
    /// Run the sync server in the foreground until interrupted.
    Serve(ServeArgs),
    /// Upload every pending package of a library.
    Upload(UploadArgs),
    /// Download committed packages from the server into a library.
    Pull(PullArgs),
    /// Nearest-timestamp or time-range lookups in one package.
    Query(QueryArgs),
    /// Analyze one package and write report files.
    Analyze(AnalyzeArgs),
    /// Show the upload state of every package in a library.
    Status(StatusArgs),
    /// Check package directories against their manifests.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON; without it the default drive for `--seed` is used.
    #[arg(long, conflicts_with = "seed")]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Library root the package is written under.
    #[arg(long)]
    pub library: PathBuf,
    /// Write the scenario route as a GeoJSON LineString.
    #[arg(long)]
    pub route_out: Option<PathBuf>,
    /// Write a synthetic reference IRI CSV for the drive.
    #[arg(long)]
    pub reference_out: Option<PathBuf>,
    /// Write the injected ground truth as JSON.
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
    /// Reference record length; defaults to the analysis segment length.
    #[arg(long)]
    pub segment_len_m: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub max_body_mb: usize,
}

#[derive(Debug, Args)]
pub struct UploadArgs {
    #[arg(long)]
    pub library: PathBuf,
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub endpoint: String,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub chunk_size: Option<usize>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Network profile JSON (`drop_at_fraction`, `latency_ms`,
    /// `disconnect_count`, `crash_at_fraction`).
    #[arg(long)]
    pub chaos: Option<PathBuf>,
    /// Overrides the profile's `drop_at_fraction`.
    #[arg(long)]
    pub drop_at: Option<f64>,
    /// Overrides the profile's `disconnect_count`.
    #[arg(long)]
    pub disconnects: Option<u32>,
    /// Overrides the profile's `latency_ms`.
    #[arg(long)]
    pub latency_ms: Option<u64>,
    /// Overrides the profile's `crash_at_fraction`.
    #[arg(long)]
    pub crash_at: Option<f64>,
    /// Write one JSONL transcript per package here.
    #[arg(long)]
    pub transcript_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PullArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub endpoint: String,
    #[arg(long)]
    pub library: PathBuf,
    /// Only packages committed after this sequence number.
    #[arg(long, default_value_t = 0)]
    pub since_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StreamName {
    Sensors,
    Gps,
    Frames,
    /// IMU samples fused with position, speed and frame.
    Aligned,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("when").required(true).args(["at", "from"])))]
pub struct QueryArgs {
    pub package: PathBuf,
    #[arg(long, value_enum, default_value_t = StreamName::Sensors)]
    pub stream: StreamName,
    /// Nearest record to this session time, ms.
    #[arg(long, allow_hyphen_values = true)]
    pub at: Option<i64>,
    #[arg(long)]
    pub tol_ms: Option<u64>,
    /// Records in `[from, to]`, ms.
    #[arg(long, requires = "to", allow_hyphen_values = true)]
    pub from: Option<i64>,
    #[arg(long, requires = "from", allow_hyphen_values = true)]
    pub to: Option<i64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub package: PathBuf,
    /// GeoJSON LineString the drive followed; enables segments.
    #[arg(long)]
    pub route: Option<PathBuf>,
    /// Reference IRI CSV; requires `--route`.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub segment_len_m: Option<f64>,
    /// Spike threshold, robust z.
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub merge_gap_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StatusArgs {
    #[arg(long)]
    pub library: PathBuf,
    /// Re-derive interrupted uploads' progress from this server.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Move every failed upload back to pending.
    #[arg(long)]
    pub requeue: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    /// Treat each path as a library root and check every package in it.
    #[arg(long)]
    pub library: bool,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => simulate(a, &config),
        Command::Serve(a) => serve(a),
        Command::Upload(a) => upload(a, &config),
        Command::Pull(a) => pull(a),
        Command::Query(a) => query(a, &config),
        Command::Analyze(a) => analyze(a, &config),
        Command::Status(a) => status(a),
        Command::Validate(a) => validate(a),
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn from_packstore(e: PackstoreError) -> CliError {
    match e {
        PackstoreError::Io(e) => CliError::Io(e.to_string()),
        PackstoreError::AlreadyExists(id) => CliError::Io(format!("package {id} already exists")),
        other => CliError::Validation(other.to_string()),
    }
}

fn from_client(e: ClientError) -> CliError {
    CliError::Network(e.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let bytes = canonical::to_canonical_vec(value).map_err(|e| io(path, e))?;
    std::fs::write(path, bytes).map_err(|e| io(path, e))
}

fn simulate(a: SimulateArgs, config: &Config) -> Result<(), CliError> {
    let scenario: Scenario = match &a.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Argument(format!("{}: {e}", path.display())))?
        }
        None => drivesim::default_drive(a.seed),
    };
    let drive = drivesim::generate_drive(&scenario).map_err(|e| CliError::Argument(e.to_string()))?;
    std::fs::create_dir_all(&a.library).map_err(|e| io(&a.library, e))?;
    let created =
        packstore::create_package(&a.library, &drive.streams, &drive.package_meta()).map_err(from_packstore)?;
    if let Some(path) = &a.route_out {
        let line = Polyline::new(scenario.route.clone()).map_err(|e| CliError::Argument(e.to_string()))?;
        write_json(path, &line.to_geojson())?;
    }
    if let Some(path) = &a.reference_out {
        let seg = a.segment_len_m.unwrap_or(config.analysis.segment_len_m);
        if !(seg > 0.0 && seg.is_finite()) {
            return Err(CliError::Argument("segment length must be > 0".into()));
        }
        let reference = drivesim::synthetic_reference(&scenario, &drive.truth, seg);
        std::fs::write(path, reference.to_csv()).map_err(|e| io(path, e))?;
    }
    if let Some(path) = &a.truth_out {
        write_json(path, &drive.truth)?;
    }
    println!("{}", created.dir.display());
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let mut cfg = ServerConfig::new(a.listen, &a.data_dir);
    cfg.max_body_bytes = a.max_body_mb.saturating_mul(1024 * 1024);
    let handle = roadsense_syncd::spawn_background(cfg).map_err(|e| io(&a.data_dir, e))?;
    println!("listening on {}", handle.url());
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_io()
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    runtime
        .block_on(tokio::signal::ctrl_c())
        .map_err(|e| CliError::Io(e.to_string()))?;
    eprintln!("shutting down");
    handle.shutdown().map_err(|e| CliError::Io(e.to_string()))
}

fn chaos_profile(a: &UploadArgs) -> Result<Option<NetworkProfile>, CliError> {
    let mut profile = match &a.chaos {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::Argument(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let overrides = a.drop_at.is_some() || a.disconnects.is_some() || a.latency_ms.is_some() || a.crash_at.is_some();
    if overrides {
        let p = profile.get_or_insert_with(NetworkProfile::default);
        if let Some(v) = a.drop_at {
            p.drop_at_fraction = Some(v);
        }
        if let Some(v) = a.disconnects {
            p.disconnect_count = v;
        }
        if let Some(v) = a.latency_ms {
            p.latency_ms = v;
        }
        if let Some(v) = a.crash_at {
            p.crash_at_fraction = Some(v);
        }
    }
    for f in profile.iter().flat_map(|p| [p.drop_at_fraction, p.crash_at_fraction]).flatten() {
        if !(0.0..=1.0).contains(&f) {
            return Err(CliError::Argument(format!("fraction {f} outside [0, 1]")));
        }
    }
    Ok(profile)
}

fn entry_line(name: &str, e: &LibraryEntry) -> String {
    let Some(state) = &e.state else {
        return format!("{name}  invalid  {}", e.validation.problems().join("; "));
    };
    let total: u64 = state.blobs.values().map(|b| b.bytes).sum();
    let mut line = format!(
        "{name}  {}  {}/{} bytes  attempts={}",
        state.status,
        state.bytes_sent(),
        total,
        state.attempt_count
    );
    if !e.is_valid() {
        line.push_str(&format!("  invalid: {}", e.validation.problems().join("; ")));
    }
    if let Some(err) = &state.last_error {
        line.push_str(&format!("  last_error: {err}"));
    }
    for issue in &e.issues {
        line.push_str(&format!("  note: {issue}"));
    }
    line
}

fn upload(a: UploadArgs, config: &Config) -> Result<(), CliError> {
    let profile = chaos_profile(&a)?;
    let mut opts = UploadOptions {
        policy: config.upload.retry,
        chunk_size: a.chunk_size.unwrap_or(config.upload.chunk_size).max(1),
        latency: Duration::from_millis(profile.as_ref().map_or(0, |p| p.latency_ms)),
    };
    if let Some(n) = a.max_retries {
        opts.policy.max_retries = n;
    }
    let parallelism = a.parallelism.unwrap_or(config.upload.parallelism).max(1);
    let client = SyncClient::new(&a.endpoint);
    let index = packstore::recover(&a.library, Some(&client)).map_err(from_packstore)?;
    if let Some(dir) = &a.transcript_dir {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }

    let queue = Mutex::new(index.uploadable().map(|e| e.dir.clone()).collect::<Vec<_>>().into_iter());
    let results = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..parallelism {
            scope.spawn(|| loop {
                let Some(dir) = queue.lock().expect("queue lock").next() else {
                    break;
                };
                let mut uploader = Uploader::new(&client, opts.clone());
                if let Some(p) = &profile {
                    let total = std::fs::read(dir.join(MANIFEST_FILE))
                        .ok()
                        .and_then(|b| model::parse_manifest(&b).ok())
                        .map_or(0, |m| m.total_bytes());
                    uploader = uploader.with_faults(p.fault_plan(total));
                }
                let result = uploader.upload(&dir);
                results
                    .lock()
                    .expect("results lock")
                    .push((dir, result, std::mem::take(&mut uploader.transcript)));
            });
        }
    });
    let mut results = results.into_inner().expect("results lock");
    results.sort_by(|x, y| x.0.cmp(&y.0));

    let mut worst: Option<CliError> = None;
    let mut note = |e: CliError| {
        if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
            worst = Some(e);
        }
    };
    for (name, entry) in &index.entries {
        if !entry.is_valid() {
            println!("{}", entry_line(name, entry));
            note(CliError::Validation(format!("{name} is invalid")));
        }
    }
    for (dir, result, transcript) in &results {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(tdir) = &a.transcript_dir {
            let path = tdir.join(format!("{name}.jsonl"));
            std::fs::write(&path, transcript.to_jsonl()).map_err(|e| io(&path, e))?;
        }
        match result {
            Ok(state) => {
                println!(
                    "{name}  {}  {} bytes  attempts={}",
                    state.status,
                    state.bytes_sent(),
                    state.attempt_count
                );
                if state.status != UploadStatus::Complete {
                    note(CliError::Network(format!(
                        "{name}: {}",
                        state.last_error.as_deref().unwrap_or("gave up")
                    )));
                }
            }
            Err(e) => {
                println!("{name}  error  {e}");
                note(match e {
                    UploadError::InvalidPackage(m) => CliError::Validation(format!("{name}: {m}")),
                    UploadError::Io(err) => CliError::Io(format!("{name}: {err}")),
                    UploadError::Packstore(err) => CliError::Io(format!("{name}: {err}")),
                    other => CliError::Network(format!("{name}: {other}")),
                });
            }
        }
    }
    let done = results
        .iter()
        .filter(|r| matches!(&r.1, Ok(s) if s.status == UploadStatus::Complete))
        .count();
    eprintln!("{done} of {} uploads complete", results.len());
    worst.map_or(Ok(()), Err)
}

fn safe_package_name(id: &str) -> bool {
    !id.is_empty() && !id.starts_with('.') && !id.contains(['/', '\\']) && model::check_relative_path(id).is_ok()
}

fn pull(a: PullArgs) -> Result<(), CliError> {
    let client = SyncClient::new(&a.endpoint);
    let committed = client.query(a.since_seq).map_err(from_client)?;
    std::fs::create_dir_all(&a.library).map_err(|e| io(&a.library, e))?;
    let mut last_seq = a.since_seq;
    let mut invalid = Vec::new();
    for c in &committed {
        last_seq = last_seq.max(c.commit_seq);
        let id = &c.manifest.package_id;
        if !safe_package_name(id) {
            invalid.push(id.clone());
            println!("{}  {id}  rejected: unsafe package id", c.commit_seq);
            continue;
        }
        let dest = a.library.join(id);
        if dest.exists() {
            let ok = model::validate_package(&dest).map(|r| r.valid).unwrap_or(false);
            println!("{}  {id}  {}", c.commit_seq, if ok { "present" } else { "present (invalid)" });
            continue;
        }
        let scratch = a.library.join(format!(".{id}{PARTIAL_SUFFIX}"));
        let fetched = fetch_package(&client, &c.manifest, &scratch);
        let result = fetched.and_then(|()| {
            let report = model::validate_package(&scratch).map_err(|e| io(&scratch, e))?;
            if !report.valid {
                return Err(CliError::Validation(report.problems().join("; ")));
            }
            let mut state = UploadState::new(&c.manifest);
            for b in state.blobs.values_mut() {
                b.sent = b.bytes;
            }
            state.status = UploadStatus::Complete;
            packstore::save_state(&scratch, &state).map_err(|e| io(&scratch, e))?;
            std::fs::rename(&scratch, &dest).map_err(|e| io(&dest, e))
        });
        match result {
            Ok(()) => println!("{}  {id}  pulled", c.commit_seq),
            Err(e) => {
                let _ = std::fs::remove_dir_all(&scratch);
                if matches!(e, CliError::Validation(_)) {
                    println!("{}  {id}  invalid: {e}", c.commit_seq);
                    invalid.push(id.clone());
                } else {
                    return Err(e);
                }
            }
        }
    }
    println!("last_seq {last_seq}");
    if invalid.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{} package(s) failed verification", invalid.len())))
    }
}

fn fetch_package(client: &SyncClient, manifest: &model::PackageManifest, scratch: &Path) -> Result<(), CliError> {
    if scratch.exists() {
        std::fs::remove_dir_all(scratch).map_err(|e| io(scratch, e))?;
    }
    std::fs::create_dir_all(scratch).map_err(|e| io(scratch, e))?;
    let bytes = model::serialize_manifest(manifest).map_err(|e| CliError::Validation(e.to_string()))?;
    std::fs::write(scratch.join(MANIFEST_FILE), bytes).map_err(|e| io(scratch, e))?;
    for b in &manifest.blobs {
        model::check_relative_path(&b.name).map_err(|r| CliError::Validation(format!("{}: {r}", b.name)))?;
        let data = client.download(&manifest.package_id, &b.name).map_err(from_client)?;
        let path = scratch.join(&b.name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        std::fs::write(&path, data).map_err(|e| io(&path, e))?;
    }
    Ok(())
}

fn print_jsonl<T: Serialize>(items: &[T]) -> Result<(), CliError> {
    for item in items {
        println!("{}", serde_json::to_string(item).map_err(|e| CliError::Io(e.to_string()))?);
    }
    Ok(())
}

fn lookup<T: Timestamped + Clone + Serialize>(items: &[T], a: &QueryArgs, tol_ms: u64) -> Result<Vec<T>, CliError> {
    let index = TimeIndex::build(items.to_vec()).map_err(|e| CliError::Validation(e.to_string()))?;
    match (a.at, a.from, a.to) {
        (Some(t), _, _) => Ok(index.nearest(t, tol_ms).cloned().into_iter().collect()),
        (None, Some(t0), Some(t1)) => index
            .range(t0, t1)
            .map(|r| r.to_vec())
            .map_err(|e| CliError::Argument(e.to_string())),
        _ => Err(CliError::Argument("give --at or --from/--to".into())),
    }
}

fn query(a: QueryArgs, config: &Config) -> Result<(), CliError> {
    let streams = PackageStreams::load(&a.package).map_err(|e| match e {
        model::ModelError::Io(err) => io(&a.package, err),
        other => CliError::Validation(other.to_string()),
    })?;
    let tol = a.tol_ms.unwrap_or(config.query.tol_ms);
    let found = match a.stream {
        StreamName::Sensors => {
            let r = lookup(&streams.samples, &a, tol)?;
            print_jsonl(&r)?;
            r.len()
        }
        StreamName::Gps => {
            let r = lookup(&streams.gps, &a, tol)?;
            print_jsonl(&r)?;
            r.len()
        }
        StreamName::Frames => {
            let r = lookup(&streams.frames, &a, tol)?;
            print_jsonl(&r)?;
            r.len()
        }
        StreamName::Aligned => {
            let picked = TimeIndex::build(lookup(&streams.samples, &a, tol)?)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let invalid = |e: timeline::TimelineError| CliError::Validation(e.to_string());
            let gps = TimeIndex::build(streams.gps.clone()).map_err(invalid)?;
            let frames = TimeIndex::build(streams.frames.clone()).map_err(invalid)?;
            let r = timeline::align_streams(&picked, &gps, &frames, &config.analysis.align);
            print_jsonl(&r)?;
            r.len()
        }
    };
    if found == 0 {
        eprintln!("no matching records");
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs, config: &Config) -> Result<(), CliError> {
    let mut cfg = config.analysis;
    if let Some(v) = a.segment_len_m {
        cfg.segment_len_m = v;
    }
    if let Some(v) = a.k {
        cfg.spikes.k = v;
    }
    if let Some(v) = a.merge_gap_ms {
        cfg.spikes.merge_gap_ms = v;
    }
    if a.reference.is_some() && a.route.is_none() {
        return Err(CliError::Argument("--reference requires --route: joining is by chainage".into()));
    }
    let route = a.route.as_deref().map(analysis::load_route).transpose()?;
    let reference = a.reference.as_deref().map(analysis::load_reference).transpose()?;
    let r = analysis::analyze(&a.package, route.as_ref(), reference.as_ref(), &cfg)?;
    report::emit_report(&r, &a.out)?;
    println!(
        "{}: {} potholes, {} steering events, {} segments",
        r.package_id, r.event_counts.pothole, r.event_counts.steering_event, r.segments.len()
    );
    if let Some(g) = &r.gps_accuracy {
        println!(
            "gps cross-track: mean {:.2} m, p95 {:.2} m over {} fixes",
            g.mean_cross_track_m, g.p95_cross_track_m, g.fixes
        );
    }
    if let Some(f) = &r.fit {
        match (&f.metrics, &f.error) {
            (Some(m), _) => println!(
                "fit over {} segments: rmse {:.4}, rmspe {:.2}%, r² {:.4}",
                f.pairs.len(),
                m.rmse,
                m.rmspe_percent,
                m.r_squared
            ),
            (None, Some(e)) => println!("fit unavailable: {e}"),
            _ => {}
        }
    }
    println!("report written to {}", a.out.display());
    Ok(())
}

fn status(a: StatusArgs) -> Result<(), CliError> {
    let client = a.endpoint.as_deref().map(SyncClient::new);
    let remote = client.as_ref().map(|c| c as &dyn packstore::RemoteOffsets);
    let mut index = packstore::recover(&a.library, remote).map_err(from_packstore)?;
    if a.requeue {
        for e in index.entries.values_mut() {
            if let Some(s) = e.state.as_ref().filter(|s| s.status == UploadStatus::Failed) {
                let next = s.requeue().map_err(|e| CliError::Validation(e.to_string()))?;
                packstore::save_state(&e.dir, &next).map_err(|err| io(&e.dir, err))?;
                e.state = Some(next);
            }
        }
    }
    if index.is_empty() {
        println!("no packages in {}", a.library.display());
    }
    for (name, entry) in &index.entries {
        println!("{}", entry_line(name, entry));
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<(), CliError> {
    let mut dirs = Vec::new();
    for p in &a.paths {
        if a.library {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| io(p, e))?
                .filter_map(|e| e.ok())
                .filter(|e| e.file_type().is_ok_and(|t| t.is_dir()))
                .filter(|e| !e.file_name().to_string_lossy().starts_with('.'))
                .map(|e| e.path())
                .collect();
            found.sort();
            dirs.extend(found);
        } else {
            dirs.push(p.clone());
        }
    }
    let mut bad = 0;
    for d in &dirs {
        let r = model::validate_package(d).map_err(|e| io(d, e))?;
        if r.valid {
            println!("OK       {}", d.display());
        } else {
            bad += 1;
            println!("INVALID  {}", d.display());
            for p in r.problems() {
                println!("    {p}");
            }
        }
    }
    if bad == 0 {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{bad} of {} package(s) invalid", dirs.len())))
    }
}
