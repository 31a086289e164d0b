//! Run orchestration: executes a resolved experiment trial by trial, writes a
//! deterministic artifact set, verifies replays byte for byte, and renders
//! the human-readable accounting.
//!
//! Artifact layout of a run directory:
//!
//! * `resolved.toml`: the canonical configuration actually executed.
//! * `events-NNN.jsonl`: per-trial event log (notes only in summary logging).
//! * `results.json`: per-trial outcomes, statistics, and fits.
//! * scenario plot tables (`scan_points-NNN.csv`, `lines-NNN.csv`,
//!   `fit_vs_true-NNN.csv`, `rabi_curve-NNN.csv`).
//! * `manifest.json`: wall-clock metadata plus a hash index of everything
//!   above; written last, excluded from replay comparison.
//!
//! Everything except the manifest is a pure function of (canonical config,
//! seed, trial index), which is what makes `replay` a byte-for-byte check.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{assign_and_fit, deconvolute, MeasuredLine};
use crate::config::{ExperimentConfig, LogMode, ResolvedExperiment, Scenario};
use crate::dynamics::{cycle_time_accounting, Apparatus, TimeSummary, Trajectory};
use crate::error::{Error, Result};
use crate::event::{EventKind, EventRecord, EventSink, RunStats, WriterSink};
use crate::protocols::{
    default_duration_grid, measure_transition_rate_traced, project_rotational_state,
    pump_to_rotational_ground, qnd_readout, spectrum_scan_traced, thermal_prior, FoundLine,
    KnownSpectrum, Outcome, ProtocolResult, RatePoint, ScanInputs, ScanPoint,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Cap on the assignment search when fitting scanned carriers blind.
const FIT_J_MAX: u32 = 60;
/// Projection attempts before a rate scenario gives up on reaching its level.
const RATE_PROJECTION_ATTEMPTS: u32 = 20;

/// One entry of the manifest's output index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
    /// Whether the file is a pure function of config and seed.
    pub deterministic: bool,
}

/// Everything needed to reproduce and verify a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Hash of `resolved.toml` as written.
    pub config_sha256: String,
    pub seed: u64,
    pub trials: u32,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub wall_s: f64,
    /// Simulated seconds summed over trials.
    pub simulated_s_total: f64,
    pub outputs: Vec<OutputRecord>,
}

/// Fit of the scanned spectrum against the configured truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub carriers: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_sigma_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_sigma_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rms_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runner_up_gap_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub j_upper: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
    pub true_b_hz: f64,
    pub true_d_hz: f64,
}

/// Outcome and bookkeeping of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u32,
    pub result: ProtocolResult,
    /// Preparatory protocol results (e.g. the projection before a pump).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior_steps: Vec<ProtocolResult>,
    pub stats: RunStats,
    pub accounting: TimeSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events_file: Option<String>,
}

/// Top-level content of `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub tool_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub trials: Vec<TrialRecord>,
}

/// What `run` hands back to the caller.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub results: RunResults,
    /// True when any trial ended with an inconclusive outcome or a budget
    /// stop; maps to the partial-results exit code.
    pub partial: bool,
}

/// What `replay` hands back.
#[derive(Debug)]
pub struct ReplayReport {
    pub files_verified: usize,
    pub warnings: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Event sink of one trial: streams JSONL, optionally only protocol notes.
struct TrialSink {
    writer: WriterSink<BufWriter<fs::File>>,
    notes_only: bool,
}

impl EventSink for TrialSink {
    fn record(&mut self, record: &EventRecord) -> Result<()> {
        if self.notes_only
            && !matches!(record.kind, EventKind::Note { .. } | EventKind::SpacingSet { .. })
        {
            return Ok(());
        }
        self.writer.record(record)
    }
}

/// Extra plot-data files produced by a trial, name to content.
type TrialFiles = Vec<(String, Vec<u8>)>;

fn csv(header: &str, rows: Vec<String>) -> Vec<u8> {
    let mut text = String::with_capacity(header.len() + 1 + rows.len() * 32);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    text.into_bytes()
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn scan_points_csv(trace: &[ScanPoint]) -> Vec<u8> {
    csv(
        "delta_omega_o_hz,attempts,dark_fires",
        trace
            .iter()
            .map(|p| format!("{},{},{}", p.delta_omega_o_hz, p.attempts, p.fires))
            .collect(),
    )
}

fn lines_csv(lines: &[FoundLine]) -> Vec<u8> {
    csv(
        "mode,red_offset_hz,blue_offset_hz,carrier_offset_hz,comb_order,absolute_red_hz,\
         absolute_carrier_hz,uncertainty_hz",
        lines
            .iter()
            .map(|l| {
                format!(
                    "{},{},{},{},{},{},{},{}",
                    l.mode,
                    l.red_offset / TAU,
                    l.blue_offset / TAU,
                    l.carrier_offset / TAU,
                    fmt_opt(l.comb_order),
                    fmt_opt(l.absolute_red_hz),
                    fmt_opt(l.absolute_carrier_hz),
                    l.uncertainty_hz
                )
            })
            .collect(),
    )
}

fn fit_vs_true_csv(fit: &FitSummary) -> Vec<u8> {
    let row = |name: &str, fitted: Option<f64>, sigma: Option<f64>, truth: f64| {
        format!(
            "{name},{},{},{},{}",
            fmt_opt(fitted),
            fmt_opt(sigma),
            truth,
            fmt_opt(fitted.map(|f| f - truth))
        )
    };
    csv(
        "parameter,fitted_hz,sigma_hz,true_hz,error_hz",
        vec![
            row("b", fit.b_hz, fit.b_sigma_hz, fit.true_b_hz),
            row("d", fit.d_hz, fit.d_sigma_hz, fit.true_d_hz),
        ],
    )
}

fn rabi_curve_csv(curve: &[RatePoint]) -> Vec<u8> {
    csv(
        "duration_s,dark_fraction,trials",
        curve
            .iter()
            .map(|p| format!("{},{},{}", p.duration_s, p.fraction, p.trials))
            .collect(),
    )
}

fn fit_scanned_lines(
    lines: &[FoundLine],
    resolved: &ResolvedExperiment,
    modes: &crate::crystal::ModeStructure,
) -> FitSummary {
    let omega_m = resolved.setup.drive.omega_m;
    let measured: Vec<MeasuredLine> = lines
        .iter()
        .flat_map(|l| l.to_measured(omega_m, modes.omega(l.mode)))
        .collect();
    let dec = deconvolute(&measured, omega_m, modes);
    let mut summary = FitSummary {
        carriers: dec.carriers.len(),
        rejected: dec.rejected,
        b_hz: None,
        d_hz: None,
        b_sigma_hz: None,
        d_sigma_hz: None,
        rms_hz: None,
        runner_up_gap_hz: None,
        j_upper: Vec::new(),
        fit_error: None,
        true_b_hz: resolved.setup.model.b_hz,
        true_d_hz: resolved.setup.model.d_hz,
    };
    match assign_and_fit(&dec.carriers, resolved.setup.model.selection_rule, FIT_J_MAX) {
        Ok(fit) => {
            summary.b_hz = Some(fit.b_hz);
            summary.d_hz = Some(fit.d_hz);
            summary.b_sigma_hz = Some(fit.b_sigma_hz);
            summary.d_sigma_hz = Some(fit.d_sigma_hz);
            summary.rms_hz = Some(fit.rms_hz);
            summary.runner_up_gap_hz = fit.runner_up_gap_hz;
            summary.j_upper = fit.j_upper;
        }
        Err(e) => summary.fit_error = Some(e.to_string()),
    }
    summary
}

/// Runs the rate scenario, projecting into the requested level first when
/// the configuration does not pin it there.
fn run_rate_scenario(
    traj: &mut dyn Apparatus,
    resolved: &ResolvedExperiment,
    spectrum: &KnownSpectrum,
    j_upper: u32,
    durations: &[f64],
    prior_steps: &mut Vec<ProtocolResult>,
) -> Result<(ProtocolResult, Vec<RatePoint>)> {
    let pinned = matches!(
        resolved.setup.initial,
        crate::dynamics::InitialState::Fixed(j) if j == j_upper
    );
    if !pinned {
        let prior = thermal_prior(spectrum, resolved.setup.env.temperature_k);
        let mut landed = false;
        for _ in 0..RATE_PROJECTION_ATTEMPTS {
            let projection =
                project_rotational_state(traj, spectrum, &resolved.canonical.protocol, &prior)?;
            let outcome = projection.outcome.clone();
            prior_steps.push(projection);
            match outcome {
                Outcome::ProjectedJ { j } if j == j_upper => {
                    landed = true;
                    break;
                }
                _ => {
                    // Wrong level or no answer: let the environment reshuffle
                    // and try again.
                    traj.idle(2.0)?;
                }
            }
        }
        if !landed {
            return Ok((
                ProtocolResult {
                    outcome: Outcome::RateUndetermined {
                        reason: format!(
                            "molecule never projected into J={j_upper} within \
                             {RATE_PROJECTION_ATTEMPTS} attempts"
                        ),
                    },
                    confidence: 0.0,
                    simulated_s: 0.0,
                },
                Vec::new(),
            ));
        }
    }
    measure_transition_rate_traced(
        traj,
        spectrum,
        &resolved.canonical.protocol,
        j_upper,
        durations,
    )
}

fn run_trial(
    resolved: &ResolvedExperiment,
    trial: u32,
    out_dir: &Path,
) -> Result<(TrialRecord, TrialFiles)> {
    let events_name = format!("events-{trial:03}.jsonl");
    let file = fs::File::create(out_dir.join(&events_name))?;
    let sink = TrialSink {
        writer: WriterSink::new(BufWriter::new(file)),
        notes_only: resolved.run.logging == LogMode::Summary,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(resolved.run.seed);
    rng.set_stream(u64::from(trial));
    let mut traj = Trajectory::new(&resolved.setup, rng, sink)?;
    let protocol = &resolved.canonical.protocol;

    let mut prior_steps = Vec::new();
    let mut fit = None;
    let mut files = TrialFiles::new();
    let suffix = format!("{trial:03}");

    let result = match &resolved.scenario {
        Scenario::FullScan => {
            let inputs = ScanInputs {
                temperature_k: resolved.setup.env.temperature_k,
                selection_rule: resolved.setup.model.selection_rule,
            };
            let (result, trace) = spectrum_scan_traced(&mut traj, &inputs, protocol)?;
            files.push((format!("scan_points-{suffix}.csv"), scan_points_csv(&trace)));
            if let Outcome::Resonances { lines, .. } = &result.outcome {
                files.push((format!("lines-{suffix}.csv"), lines_csv(lines)));
                let summary = fit_scanned_lines(lines, resolved, traj.mode_structure());
                files.push((format!("fit_vs_true-{suffix}.csv"), fit_vs_true_csv(&summary)));
                fit = Some(summary);
            }
            result
        }
        Scenario::Projection => {
            let spectrum = KnownSpectrum::new(
                &resolved.setup.model,
                &resolved.setup.drive,
                &resolved.setup.crystal,
            )?;
            let prior = thermal_prior(&spectrum, resolved.setup.env.temperature_k);
            project_rotational_state(&mut traj, &spectrum, protocol, &prior)?
        }
        Scenario::GroundPump => {
            let spectrum = KnownSpectrum::new(
                &resolved.setup.model,
                &resolved.setup.drive,
                &resolved.setup.crystal,
            )?;
            let prior = thermal_prior(&spectrum, resolved.setup.env.temperature_k);
            let projection = project_rotational_state(&mut traj, &spectrum, protocol, &prior)?;
            match projection.outcome {
                Outcome::ProjectedJ { j } => {
                    prior_steps.push(projection);
                    pump_to_rotational_ground(&mut traj, &spectrum, protocol, j)?
                }
                _ => projection,
            }
        }
        Scenario::QndReadout { j_hypothesis } => {
            let spectrum = KnownSpectrum::new(
                &resolved.setup.model,
                &resolved.setup.drive,
                &resolved.setup.crystal,
            )?;
            qnd_readout(&mut traj, &spectrum, protocol, *j_hypothesis)?
        }
        Scenario::RateMeasurement { j_upper, durations_s, points, max_duration_s } => {
            let spectrum = KnownSpectrum::new(
                &resolved.setup.model,
                &resolved.setup.drive,
                &resolved.setup.crystal,
            )?;
            let durations = durations_s.clone().unwrap_or_else(|| {
                default_duration_grid(points.unwrap_or(12), max_duration_s.unwrap_or(20e-6))
            });
            let (result, curve) = run_rate_scenario(
                &mut traj,
                resolved,
                &spectrum,
                *j_upper,
                &durations,
                &mut prior_steps,
            )?;
            if !curve.is_empty() {
                files.push((format!("rabi_curve-{suffix}.csv"), rabi_curve_csv(&curve)));
            }
            result
        }
    };

    let stats = *traj.stats();
    let accounting = cycle_time_accounting(&stats, &resolved.setup.timing, protocol.attempts_per_point);
    let (sink, _, _) = traj.into_parts();
    sink.writer
        .into_inner()
        .into_inner()
        .map_err(|e| Error::Io(e.into_error()))?
        .sync_all()
        .ok();
    Ok((
        TrialRecord {
            trial,
            result,
            prior_steps,
            stats,
            accounting,
            fit,
            events_file: Some(events_name),
        },
        files,
    ))
}

fn is_partial(record: &TrialRecord) -> bool {
    match &record.result.outcome {
        Outcome::ProjectionFailed
        | Outcome::UnreachableGround { .. }
        | Outcome::RateUndetermined { .. } => true,
        Outcome::GroundReached { verified, .. } => !verified,
        Outcome::Resonances { complete, .. } => !complete,
        _ => false,
    }
}

/// Executes a resolved experiment into `out_dir` and writes the artifact set.
pub fn run(resolved: &ResolvedExperiment, out_dir: &Path) -> Result<RunOutput> {
    fs::create_dir_all(out_dir)?;
    let started_unix_ms = unix_ms();
    let t0 = Instant::now();

    let resolved_text = resolved.canonical.to_toml();
    fs::write(out_dir.join("resolved.toml"), &resolved_text)?;
    let config_sha256 = sha256_hex(resolved_text.as_bytes());

    let trial_outputs: Vec<(TrialRecord, TrialFiles)> = (0..resolved.run.trials)
        .into_par_iter()
        .map(|trial| run_trial(resolved, trial, out_dir))
        .collect::<Result<Vec<_>>>()?;

    let mut trials = Vec::with_capacity(trial_outputs.len());
    let mut extra_files = Vec::new();
    for (record, files) in trial_outputs {
        trials.push(record);
        extra_files.extend(files);
    }
    for (name, bytes) in &extra_files {
        fs::write(out_dir.join(name), bytes)?;
    }

    let results = RunResults {
        tool_version: TOOL_VERSION.into(),
        config_sha256: config_sha256.clone(),
        seed: resolved.run.seed,
        trials,
    };
    let mut results_bytes = serde_json::to_vec_pretty(&results)
        .map_err(|e| Error::Config(format!("results serialization: {e}")))?;
    results_bytes.push(b'\n');
    fs::write(out_dir.join("results.json"), &results_bytes)?;

    // Hash the deterministic artifacts for the manifest's output index.
    let mut names = vec!["resolved.toml".to_string(), "results.json".to_string()];
    names.extend(results.trials.iter().filter_map(|t| t.events_file.clone()));
    names.extend(extra_files.iter().map(|(n, _)| n.clone()));
    let mut outputs = Vec::with_capacity(names.len() + 1);
    for name in &names {
        let bytes = fs::read(out_dir.join(name))?;
        outputs.push(OutputRecord {
            path: name.clone(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
            deterministic: true,
        });
    }

    let partial = results.trials.iter().any(is_partial);
    let simulated_s_total = results.trials.iter().map(|t| t.stats.sim_time_s).sum();
    let finished_unix_ms = unix_ms();
    let mut manifest = RunManifest {
        tool_version: TOOL_VERSION.into(),
        config_sha256,
        seed: resolved.run.seed,
        trials: resolved.run.trials,
        started_unix_ms,
        finished_unix_ms,
        wall_s: t0.elapsed().as_secs_f64(),
        simulated_s_total,
        outputs,
    };
    manifest.outputs.push(OutputRecord {
        path: "manifest.json".into(),
        bytes: 0,
        sha256: String::new(),
        deterministic: false,
    });
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
    manifest_bytes.push(b'\n');
    fs::write(out_dir.join("manifest.json"), manifest_bytes)?;

    Ok(RunOutput { dir: out_dir.to_path_buf(), manifest, results, partial })
}

fn first_divergent_line(original: &[u8], regenerated: &[u8]) -> String {
    let orig_lines: Vec<&[u8]> = original.split(|&b| b == b'\n').collect();
    let regen_lines: Vec<&[u8]> = regenerated.split(|&b| b == b'\n').collect();
    for (i, (o, r)) in orig_lines.iter().zip(&regen_lines).enumerate() {
        if o != r {
            return format!(
                "line {}: expected {:?}, found {:?}",
                i + 1,
                String::from_utf8_lossy(r),
                String::from_utf8_lossy(o)
            );
        }
    }
    format!(
        "file lengths differ: {} lines on disk, {} regenerated",
        orig_lines.len(),
        regen_lines.len()
    )
}

/// Locates the run directory from a manifest path or the directory itself.
fn run_dir_of(path: &Path) -> Result<PathBuf> {
    if path.is_dir() {
        return Ok(path.to_path_buf());
    }
    if path.file_name().map(|n| n == "manifest.json").unwrap_or(false) {
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
        return Ok(parent.unwrap_or(Path::new(".")).to_path_buf());
    }
    Err(Error::Config(format!(
        "replay target {} is neither a run directory nor a manifest.json",
        path.display()
    )))
}

/// Re-executes a completed run from its persisted configuration and verifies
/// that every deterministic artifact is byte-identical, reporting the first
/// divergence otherwise.
pub fn replay(path: &Path) -> Result<ReplayReport> {
    let dir = run_dir_of(path)?;
    let manifest_bytes = fs::read(dir.join("manifest.json")).map_err(|e| {
        Error::Config(format!("cannot read {}/manifest.json: {e}", dir.display()))
    })?;
    let manifest: RunManifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| Error::Config(format!("manifest parse error: {e}")))?;
    let resolved_text = fs::read_to_string(dir.join("resolved.toml")).map_err(|e| {
        Error::Config(format!("cannot read {}/resolved.toml: {e}", dir.display()))
    })?;

    let mut warnings = Vec::new();
    if manifest.tool_version != TOOL_VERSION {
        warnings.push(format!(
            "version mismatch: run was recorded by {} and is replayed by {}",
            manifest.tool_version, TOOL_VERSION
        ));
    }

    let config = ExperimentConfig::from_toml(&resolved_text, &[])?;
    let resolved = config.resolve()?;
    let scratch = dir.join(".replay");
    if scratch.exists() {
        fs::remove_dir_all(&scratch)?;
    }
    let outcome = (|| -> Result<usize> {
        run(&resolved, &scratch)?;
        let mut verified = 0usize;
        for output in manifest.outputs.iter().filter(|o| o.deterministic) {
            let original = fs::read(dir.join(&output.path)).map_err(|e| {
                Error::ReplayDivergence(format!("{}: missing on disk ({e})", output.path))
            })?;
            let regenerated = fs::read(scratch.join(&output.path)).map_err(|e| {
                Error::ReplayDivergence(format!("{}: not regenerated ({e})", output.path))
            })?;
            if original != regenerated {
                return Err(Error::ReplayDivergence(format!(
                    "{}: {}",
                    output.path,
                    first_divergent_line(&original, &regenerated)
                )));
            }
            verified += 1;
        }
        Ok(verified)
    })();
    let _ = fs::remove_dir_all(&scratch);
    Ok(ReplayReport { files_verified: outcome?, warnings })
}

fn describe_outcome(outcome: &Outcome) -> String {
    match outcome {
        Outcome::ProjectedJ { j } => format!("projected into J = {j}"),
        Outcome::ProjectionFailed => "projection excluded every candidate level".into(),
        Outcome::UnreachableGround { j_start } => {
            format!("ground state unreachable from J = {j_start}")
        }
        Outcome::GroundReached { carrier_pulses, verified } => format!(
            "ground state reached after {carrier_pulses} pulses ({})",
            if *verified { "verified" } else { "unverified" }
        ),
        Outcome::RateEstimate { rate_hz, ci_hz, amplitude } => format!(
            "rate {:.3} kHz (95 % CI {:.3} to {:.3} kHz, contrast {:.2})",
            rate_hz / 1e3,
            ci_hz.0 / 1e3,
            ci_hz.1 / 1e3,
            amplitude
        ),
        Outcome::RateUndetermined { reason } => format!("rate undetermined: {reason}"),
        Outcome::QndVerdict { in_hypothesis, posterior, dark_count, cycles } => format!(
            "hypothesis {} (posterior {:.4}, {dark_count} darks in {cycles} cycles)",
            if *in_hypothesis { "confirmed" } else { "rejected" },
            posterior
        ),
        Outcome::Resonances { lines, complete } => format!(
            "{} resonance pairs ({})",
            lines.len(),
            if *complete { "complete" } else { "budget hit, incomplete" }
        ),
    }
}

/// Renders the accounting of a completed run directory.
pub fn report(path: &Path) -> Result<String> {
    let dir = run_dir_of(path)?;
    let manifest: RunManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)
        .map_err(|e| Error::Config(format!("manifest parse error: {e}")))?;
    let results: RunResults = serde_json::from_slice(&fs::read(dir.join("results.json"))?)
        .map_err(|e| Error::Config(format!("results parse error: {e}")))?;

    let mut out = String::new();
    let _ = writeln!(out, "run {}", dir.display());
    let _ = writeln!(
        out,
        "  tool {} | seed {} | {} trial(s) | config {}",
        manifest.tool_version,
        manifest.seed,
        manifest.trials,
        &manifest.config_sha256[..12.min(manifest.config_sha256.len())]
    );
    let _ = writeln!(
        out,
        "  wall {:.2} s | simulated {:.1} s total",
        manifest.wall_s, manifest.simulated_s_total
    );
    for trial in &results.trials {
        let _ = writeln!(out, "trial {}", trial.trial);
        for step in &trial.prior_steps {
            let _ = writeln!(
                out,
                "  step: {} ({:.1} s simulated)",
                describe_outcome(&step.outcome),
                step.simulated_s
            );
        }
        let _ = writeln!(
            out,
            "  outcome: {} (confidence {:.3})",
            describe_outcome(&trial.result.outcome),
            trial.result.confidence
        );
        let a = &trial.accounting;
        let _ = writeln!(
            out,
            "  timing: {:.3} ms/cycle, {:.1} points/s, {} detection cycles, \
             {:.2} simulated hours",
            a.per_cycle_s * 1e3,
            a.points_per_second,
            a.cycles,
            a.simulated_hours
        );
        let s = &trial.stats;
        let _ = writeln!(
            out,
            "  counters: {} pulses, {} transfers, {} detections ({} dark), {} retherms",
            s.pulses, s.transfers, s.detections, s.darks, s.retherms
        );
        if let Some(fit) = &trial.fit {
            let _ = writeln!(out, "  lines fitted from {} carriers:", fit.carriers);
            match (fit.b_hz, fit.d_hz) {
                (Some(b), Some(d)) => {
                    let _ = writeln!(
                        out,
                        "    B = {:.0} Hz +- {:.0} (true {:.0}, off by {:+.0})",
                        b,
                        fit.b_sigma_hz.unwrap_or(f64::NAN),
                        fit.true_b_hz,
                        b - fit.true_b_hz
                    );
                    let _ = writeln!(
                        out,
                        "    D = {:.0} Hz +- {:.0} (true {:.0}, off by {:+.0})",
                        d,
                        fit.d_sigma_hz.unwrap_or(f64::NAN),
                        fit.true_d_hz,
                        d - fit.true_d_hz
                    );
                    let _ = writeln!(
                        out,
                        "    assigned J: {:?}, rms {:.1} Hz",
                        fit.j_upper,
                        fit.rms_hz.unwrap_or(f64::NAN)
                    );
                }
                _ => {
                    let _ = writeln!(
                        out,
                        "    fit failed: {}",
                        fit.fit_error.as_deref().unwrap_or("unknown")
                    );
                }
            }
            for r in &fit.rejected {
                let _ = writeln!(out, "    rejected: {r}");
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn divergence_reports_first_line() {
        let msg = first_divergent_line(b"a\nb\nc\n", b"a\nx\nc\n");
        assert!(msg.starts_with("line 2"), "{msg}");
    }

    #[test]
    fn run_dir_accepts_manifest_path() {
        let dir = run_dir_of(Path::new("manifest.json")).unwrap();
        assert_eq!(dir, Path::new("."));
    }
}
