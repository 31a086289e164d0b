//! Stochastic single-trajectory engine: comb Raman pulses, atomic sideband
//! transfers, fluorescence detections, resets, and rethermalization acting on
//! one (molecule, atom, motion) state under a simulated wall clock and a
//! seeded random source.
//!
//! Protocols drive the engine exclusively through the [`Apparatus`] trait,
//! which exposes knob settings and detection outcomes but never the molecular
//! truth; the concrete [`Trajectory`] additionally exposes its state and
//! event log for post-hoc verification and reporting.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crystal::{mode_structure, CrystalSpec, Mode, ModeStructure};
use crate::error::{Error, Result};
use crate::event::{AtomicLevel, EventKind, EventRecord, EventSink, RunStats, Transition};
use crate::molecule::{
    resonance_offsets, thermal_distribution, CombDrive, ResonanceLine, RotorModel,
    ThermalEnvironment,
};

/// Complete simulator state of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Rotational level of the molecule.
    pub j: u32,
    /// Motional quanta in the selected normal mode.
    pub n_motion: u32,
    /// Electronic level of the atomic ion.
    pub atom: AtomicLevel,
    /// Simulated elapsed time, s.
    pub sim_clock_s: f64,
    /// Time since the rotational state last had a chance to rethermalize, s.
    pub time_since_retherm_s: f64,
}

/// One comb Raman pulse: offset set point, duration, and the normal mode the
/// protocol is addressing. The addressed mode is bookkeeping for the event
/// log; which lines respond is decided by frequency alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Relative comb offset during the pulse, rad/s.
    pub delta_omega_o: f64,
    /// Pulse window length, s.
    pub duration_s: f64,
    pub mode: Mode,
}

/// Imperfections of the apparatus. Probabilities are per attempt; the
/// defaults reproduce the reference single-shot detection fidelity of 0.8
/// with an otherwise ideal machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// P(report bright | atom in g).
    pub detection_fidelity_bright: f64,
    /// P(report dark | atom in e).
    pub detection_fidelity_dark: f64,
    /// Motional heating of the selected mode, quanta/s.
    pub heating_rate_quanta_per_s: f64,
    /// Mean residual quanta after recooling.
    pub recool_residual_nbar: f64,
    /// Success probability of optical pumping back to g.
    pub pump_success: f64,
    /// Multiplier on every molecular Raman transition probability.
    pub raman_pulse_fidelity: f64,
    /// Success probability of the atomic sideband transfer pi-pulse.
    pub transfer_fidelity: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            detection_fidelity_bright: 0.8,
            detection_fidelity_dark: 0.8,
            heating_rate_quanta_per_s: 0.0,
            recool_residual_nbar: 0.0,
            pump_success: 1.0,
            raman_pulse_fidelity: 1.0,
            transfer_fidelity: 1.0,
        }
    }
}

impl NoiseModel {
    /// Perfect apparatus; useful as a baseline in tests and budgets.
    pub fn ideal() -> Self {
        Self {
            detection_fidelity_bright: 1.0,
            detection_fidelity_dark: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("detection_fidelity_bright", self.detection_fidelity_bright),
            ("detection_fidelity_dark", self.detection_fidelity_dark),
            ("pump_success", self.pump_success),
            ("raman_pulse_fidelity", self.raman_pulse_fidelity),
            ("transfer_fidelity", self.transfer_fidelity),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!(
                    "{name} must be a probability in [0, 1], got {p}"
                )));
            }
        }
        if !(self.heating_rate_quanta_per_s >= 0.0) || !self.heating_rate_quanta_per_s.is_finite() {
            return Err(Error::Domain(format!(
                "heating rate must be nonnegative, got {}",
                self.heating_rate_quanta_per_s
            )));
        }
        if !(self.recool_residual_nbar >= 0.0) || !self.recool_residual_nbar.is_finite() {
            return Err(Error::Domain(format!(
                "residual nbar must be nonnegative, got {}",
                self.recool_residual_nbar
            )));
        }
        Ok(())
    }
}

/// Durations of the four phases of one experimental cycle. The defaults add
/// up to 1 ms: 10 us pulse window, 10 us transfer, 200 us detection, 780 us
/// pumping and recooling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CycleTiming {
    pub pulse_s: f64,
    pub transfer_s: f64,
    pub detect_s: f64,
    pub reset_s: f64,
}

impl Default for CycleTiming {
    fn default() -> Self {
        Self { pulse_s: 10e-6, transfer_s: 10e-6, detect_s: 200e-6, reset_s: 780e-6 }
    }
}

impl CycleTiming {
    /// Duration of one pulse-transfer-detect-reset cycle, s.
    pub fn cycle_s(&self) -> f64 {
        self.pulse_s + self.transfer_s + self.detect_s + self.reset_s
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("pulse_s", self.pulse_s),
            ("transfer_s", self.transfer_s),
            ("detect_s", self.detect_s),
            ("reset_s", self.reset_s),
        ] {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

/// How the molecular rotational state starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Sampled from the thermal distribution of the environment.
    Thermal,
    /// Pinned at a given J (diagnostics and unit tests).
    Fixed(u32),
}

/// Everything needed to build a trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySetup {
    pub crystal: CrystalSpec,
    pub model: RotorModel,
    pub env: ThermalEnvironment,
    pub drive: CombDrive,
    pub noise: NoiseModel,
    pub timing: CycleTiming,
    /// Normal mode used for transfer and detection.
    pub selected_mode: Mode,
    /// Line-matching window is `factor / duration` in cyclic Hz.
    pub fourier_window_factor: f64,
    pub initial: InitialState,
}

impl TrajectorySetup {
    /// MgH+ co-trapped with Mg+, room-temperature start, reference noise.
    pub fn mgh_defaults() -> Self {
        Self {
            crystal: CrystalSpec::mgh_mg(),
            model: RotorModel::mgh(),
            env: ThermalEnvironment::room_temperature(),
            drive: CombDrive::comb_1ghz_800nm(),
            noise: NoiseModel::default(),
            timing: CycleTiming::default(),
            selected_mode: Mode::Minus,
            fourier_window_factor: 1.0,
            initial: InitialState::Thermal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.timing.validate()?;
        self.model.validate_for_temperature(self.env.temperature_k)?;
        if !(self.fourier_window_factor.is_finite() && self.fourier_window_factor > 0.0) {
            return Err(Error::Domain(format!(
                "fourier window factor must be positive, got {}",
                self.fourier_window_factor
            )));
        }
        if let InitialState::Fixed(j) = self.initial {
            if j > self.model.j_max {
                return Err(Error::Domain(format!(
                    "initial J = {j} exceeds j_max = {}",
                    self.model.j_max
                )));
            }
        }
        Ok(())
    }
}

/// Knob-and-outcome interface protocols are allowed to use. Nothing here
/// reveals the rotational state or the line table; the only information
/// channel back to the caller is `detect_bright`.
pub trait Apparatus {
    /// Current comb mode spacing, rad/s.
    fn comb_spacing(&self) -> f64;
    /// Retune the comb repetition rate (dither for order inference).
    fn set_comb_spacing(&mut self, omega_m: f64) -> Result<()>;
    /// Mode read out by `sideband_transfer`.
    fn selected_mode(&self) -> Mode;
    /// Measured normal-mode frequency, rad/s (crystal property, known from
    /// tickling the trap independently of the molecule's internals).
    fn mode_frequency(&self, mode: Mode) -> f64;
    fn raman_pulse(&mut self, pulse: &PulseSpec) -> Result<()>;
    fn sideband_transfer(&mut self) -> Result<()>;
    fn detect_bright(&mut self) -> Result<bool>;
    fn reset(&mut self) -> Result<()>;
    fn idle(&mut self, duration_s: f64) -> Result<()>;
    /// Milestone annotation into the event log.
    fn note(&mut self, label: &str) -> Result<()>;
    fn timing(&self) -> CycleTiming;
    fn elapsed_s(&self) -> f64;
}

/// One stochastic trajectory of the full experiment.
pub struct Trajectory<R: Rng, S: EventSink> {
    env: ThermalEnvironment,
    noise: NoiseModel,
    timing: CycleTiming,
    modes: ModeStructure,
    selected_mode: Mode,
    fourier_window_factor: f64,
    lines: Vec<ResonanceLine>,
    /// (line residue modulo the current spacing in rad/s, line index), sorted.
    residues: Vec<(f64, usize)>,
    omega_m: f64,
    thermal_cdf: Vec<f64>,
    state: SystemState,
    time_since_recool_s: f64,
    rng: R,
    sink: S,
    stats: RunStats,
}

impl<R: Rng, S: EventSink> Trajectory<R, S> {
    pub fn new(setup: &TrajectorySetup, mut rng: R, sink: S) -> Result<Self> {
        setup.validate()?;
        let modes = mode_structure(&setup.crystal, setup.drive.k_effective())?;
        let lines = resonance_offsets(&setup.model, &setup.drive, &modes)?.lines;
        let probabilities = thermal_distribution(&setup.model, setup.env.temperature_k);
        let mut thermal_cdf = Vec::with_capacity(probabilities.len());
        let mut acc = 0.0;
        for p in probabilities {
            acc += p;
            thermal_cdf.push(acc);
        }
        let j0 = match setup.initial {
            InitialState::Fixed(j) => j,
            InitialState::Thermal => {
                let u: f64 = rng.gen();
                thermal_cdf.partition_point(|&c| c <= u) as u32
            }
        };
        let mut trajectory = Self {
            env: setup.env,
            noise: setup.noise,
            timing: setup.timing,
            modes,
            selected_mode: setup.selected_mode,
            fourier_window_factor: setup.fourier_window_factor,
            lines,
            residues: Vec::new(),
            omega_m: setup.drive.omega_m,
            thermal_cdf,
            state: SystemState {
                j: j0.min(setup.model.j_max),
                n_motion: 0,
                atom: AtomicLevel::G,
                sim_clock_s: 0.0,
                time_since_retherm_s: 0.0,
            },
            time_since_recool_s: 0.0,
            rng,
            sink,
            stats: RunStats::default(),
        };
        trajectory.rebuild_residues();
        Ok(trajectory)
    }

    /// Simulator truth; protocols must not look at this (see [`Apparatus`]).
    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn mode_structure(&self) -> &ModeStructure {
        &self.modes
    }

    pub fn sink_mut(&mut self) -> &mut S {
        &mut self.sink
    }

    pub fn into_parts(self) -> (S, RunStats, SystemState) {
        (self.sink, self.stats, self.state)
    }

    fn rebuild_residues(&mut self) {
        self.residues = self
            .lines
            .iter()
            .enumerate()
            .map(|(idx, line)| ((TAU * line.absolute_hz).rem_euclid(self.omega_m), idx))
            .collect();
        self.residues.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }

    fn advance(&mut self, dt: f64) {
        self.state.sim_clock_s += dt;
        self.state.time_since_retherm_s += dt;
        self.time_since_recool_s += dt;
        self.stats.sim_time_s = self.state.sim_clock_s;
    }

    fn emit(&mut self, kind: EventKind) -> Result<()> {
        let record = EventRecord {
            t_s: self.state.sim_clock_s,
            kind,
            j: self.state.j,
            n_motion: self.state.n_motion,
            atom: self.state.atom,
        };
        self.sink.record(&record)
    }

    fn sample_thermal_j(&mut self) -> u32 {
        let u: f64 = self.rng.gen();
        self.thermal_cdf.partition_point(|&c| c <= u) as u32
    }

    /// Apply pending rethermalization before the rotational state is acted
    /// on. Over an interval dt the state is resampled with probability
    /// 1 - exp(-dt/tau); conditional on at least one thermal contact the
    /// final state is thermal, so a single coin per flush is exact.
    fn settle_rotation(&mut self) -> Result<()> {
        let dt = self.state.time_since_retherm_s;
        if dt <= 0.0 {
            return Ok(());
        }
        self.state.time_since_retherm_s = 0.0;
        let tau = self.env.rethermalization_tau_s;
        if !tau.is_finite() {
            return Ok(());
        }
        let p = -(-dt / tau).exp_m1();
        if self.rng.gen::<f64>() < p {
            self.state.j = self.sample_thermal_j();
            self.stats.retherms += 1;
            self.emit(EventKind::Retherm)?;
        }
        Ok(())
    }

    /// Apply pending motional heating before the motion is acted on.
    fn settle_motion(&mut self) {
        let rate = self.noise.heating_rate_quanta_per_s;
        let dt = self.time_since_recool_s;
        if rate <= 0.0 || dt <= 0.0 {
            return;
        }
        self.time_since_recool_s = 0.0;
        let lambda = rate * dt;
        let gained = self.sample_poisson(lambda);
        if gained > 0 {
            self.state.n_motion += gained;
            self.stats.heating_quanta += u64::from(gained);
        }
    }

    fn sample_poisson(&mut self, lambda: f64) -> u32 {
        // Knuth's multiplicative method; heating budgets keep lambda small.
        let limit = (-lambda).exp();
        let mut k = 0u32;
        let mut p = 1.0;
        loop {
            p *= self.rng.gen::<f64>();
            if p <= limit || k > 100_000 {
                return k;
            }
            k += 1;
        }
    }

    /// Mean-nbar thermal occupation sample: geometric with ratio
    /// nbar / (1 + nbar).
    fn sample_residual_quanta(&mut self) -> u32 {
        let nbar = self.noise.recool_residual_nbar;
        if nbar <= 0.0 {
            return 0;
        }
        let r = nbar / (1.0 + nbar);
        let u = 1.0 - self.rng.gen::<f64>(); // in (0, 1]
        (u.ln() / r.ln()).floor() as u32
    }

    /// Direction and selected-mode quantum change the line would impose on
    /// the current state, or None when it cannot act.
    ///
    /// Sideband lines add a quantum in their rotationally "forward" direction
    /// (red lowers J, blue raises it) and can run backward only by absorbing
    /// a quantum, which requires the mode to be excited. The spectator mode
    /// is recooled with the rest of the crystal at every reset and is not
    /// tracked, so spectator-mode sidebands act strictly one way and leave
    /// `n_motion` alone. Carriers swap the rotational pair with no motional
    /// involvement.
    fn allowed_step(&self, line: &ResonanceLine) -> Option<(u32, i32)> {
        let j = self.state.j;
        let selected = line.mode == Some(self.selected_mode);
        let has_quanta = self.state.n_motion >= 1;
        match line.n {
            0 => {
                if j == line.j_upper {
                    Some((line.j_lower, 0))
                } else if j == line.j_lower {
                    Some((line.j_upper, 0))
                } else {
                    None
                }
            }
            -1 => {
                if j == line.j_upper {
                    Some((line.j_lower, i32::from(selected)))
                } else if j == line.j_lower && selected && has_quanta {
                    Some((line.j_upper, -1))
                } else {
                    None
                }
            }
            1 => {
                if j == line.j_lower {
                    Some((line.j_upper, i32::from(selected)))
                } else if j == line.j_upper && selected && has_quanta {
                    Some((line.j_lower, -1))
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// Indices of lines whose residue lies within the circular window around
    /// the target offset.
    fn candidate_lines(&self, target: f64, window_rad: f64) -> Vec<usize> {
        if self.residues.is_empty() {
            return Vec::new();
        }
        if 2.0 * window_rad >= self.omega_m {
            return self.residues.iter().map(|&(_, idx)| idx).collect();
        }
        let mut out = Vec::new();
        let lo = target - window_rad;
        let hi = target + window_rad;
        let push_range = |a: f64, b: f64, out: &mut Vec<usize>| {
            let start = self.residues.partition_point(|&(r, _)| r < a);
            let end = self.residues.partition_point(|&(r, _)| r <= b);
            for &(_, idx) in &self.residues[start..end] {
                out.push(idx);
            }
        };
        if lo < 0.0 {
            push_range(0.0, hi, &mut out);
            push_range(lo + self.omega_m, self.omega_m, &mut out);
        } else if hi > self.omega_m {
            push_range(lo, self.omega_m, &mut out);
            push_range(0.0, hi - self.omega_m, &mut out);
        } else {
            push_range(lo, hi, &mut out);
        }
        out
    }

    fn apply_best_line(
        &mut self,
        target: f64,
        window_cyc: f64,
        duration_s: f64,
    ) -> Result<Option<Transition>> {
        let window_rad = TAU * window_cyc;
        let mut best: Option<(f64, usize, u32, i32)> = None;
        for idx in self.candidate_lines(target, window_rad) {
            let residue = (TAU * self.lines[idx].absolute_hz).rem_euclid(self.omega_m);
            let diff = (residue - target).abs();
            let delta_rad = diff.min(self.omega_m - diff);
            if delta_rad >= window_rad {
                continue;
            }
            let Some((j_to, dn)) = self.allowed_step(&self.lines[idx]) else {
                continue;
            };
            let delta_cyc = delta_rad / TAU;
            if best.map_or(true, |(b, ..)| delta_cyc < b) {
                best = Some((delta_cyc, idx, j_to, dn));
            }
        }
        let Some((delta_cyc, idx, j_to, dn)) = best else {
            return Ok(None);
        };
        let line = self.lines[idx];
        let p = rabi_probability(line.rate_hz, delta_cyc, duration_s)
            * self.noise.raman_pulse_fidelity;
        if self.rng.gen::<f64>() < p {
            let j_from = self.state.j;
            self.state.j = j_to;
            match dn {
                1 => self.state.n_motion += 1,
                -1 => self.state.n_motion -= 1,
                _ => {}
            }
            Ok(Some(Transition { j_from, j_to, n: line.n, mode: line.mode }))
        } else {
            Ok(None)
        }
    }
}

impl<R: Rng, S: EventSink> Apparatus for Trajectory<R, S> {
    fn comb_spacing(&self) -> f64 {
        self.omega_m
    }

    fn set_comb_spacing(&mut self, omega_m: f64) -> Result<()> {
        if !(omega_m.is_finite() && omega_m > 0.0) {
            return Err(Error::Domain(format!(
                "comb mode spacing must be positive, got {omega_m} rad/s"
            )));
        }
        self.omega_m = omega_m;
        self.rebuild_residues();
        self.stats.spacing_changes += 1;
        self.emit(EventKind::SpacingSet { spacing_hz: omega_m / TAU })
    }

    fn selected_mode(&self) -> Mode {
        self.selected_mode
    }

    fn mode_frequency(&self, mode: Mode) -> f64 {
        self.modes.omega(mode)
    }

    fn raman_pulse(&mut self, pulse: &PulseSpec) -> Result<()> {
        if !(pulse.duration_s.is_finite() && pulse.duration_s > 0.0) {
            return Err(Error::Domain(format!(
                "pulse duration must be positive, got {} s",
                pulse.duration_s
            )));
        }
        self.settle_rotation()?;
        self.settle_motion();
        let window_cyc = self.fourier_window_factor / pulse.duration_s;
        let target = pulse.delta_omega_o.rem_euclid(self.omega_m);
        let transition = self.apply_best_line(target, window_cyc, pulse.duration_s)?;
        self.advance(pulse.duration_s);
        self.stats.pulses += 1;
        if transition.is_some() {
            self.stats.pulse_transitions += 1;
        }
        self.emit(EventKind::Pulse {
            offset_hz: target / TAU,
            duration_s: pulse.duration_s,
            addressed_mode: pulse.mode,
            transition,
        })
    }

    fn sideband_transfer(&mut self) -> Result<()> {
        if self.state.atom == AtomicLevel::E {
            return Err(Error::ProtocolSequence(
                "sideband transfer requires the atom in g; reset before transferring again".into(),
            ));
        }
        self.settle_motion();
        let excited = if self.state.n_motion >= 1 {
            let ok = self.noise.transfer_fidelity >= 1.0
                || self.rng.gen::<f64>() < self.noise.transfer_fidelity;
            if ok {
                self.state.n_motion -= 1;
                self.state.atom = AtomicLevel::E;
            }
            ok
        } else {
            false
        };
        self.advance(self.timing.transfer_s);
        self.stats.transfers += 1;
        if excited {
            self.stats.transfer_excitations += 1;
        }
        self.emit(EventKind::Transfer { excited })
    }

    fn detect_bright(&mut self) -> Result<bool> {
        let truly_bright = self.state.atom == AtomicLevel::G;
        let fidelity = if truly_bright {
            self.noise.detection_fidelity_bright
        } else {
            self.noise.detection_fidelity_dark
        };
        let faithful = fidelity >= 1.0 || self.rng.gen::<f64>() < fidelity;
        let bright = if faithful { truly_bright } else { !truly_bright };
        self.advance(self.timing.detect_s);
        self.stats.detections += 1;
        if bright {
            self.stats.brights += 1;
        } else {
            self.stats.darks += 1;
        }
        self.emit(EventKind::Detect { bright })?;
        Ok(bright)
    }

    fn reset(&mut self) -> Result<()> {
        if self.state.atom == AtomicLevel::E {
            let pumped = self.noise.pump_success >= 1.0
                || self.rng.gen::<f64>() < self.noise.pump_success;
            if pumped {
                self.state.atom = AtomicLevel::G;
            }
        }
        self.state.n_motion = self.sample_residual_quanta();
        self.time_since_recool_s = 0.0;
        self.advance(self.timing.reset_s);
        self.stats.resets += 1;
        self.emit(EventKind::Reset)
    }

    fn idle(&mut self, duration_s: f64) -> Result<()> {
        if !(duration_s.is_finite() && duration_s >= 0.0) {
            return Err(Error::Domain(format!(
                "idle duration must be nonnegative, got {duration_s} s"
            )));
        }
        self.advance(duration_s);
        self.stats.idle_s += duration_s;
        self.emit(EventKind::Idle { duration_s })
    }

    fn note(&mut self, label: &str) -> Result<()> {
        self.emit(EventKind::Note { label: label.to_string() })
    }

    fn timing(&self) -> CycleTiming {
        self.timing
    }

    fn elapsed_s(&self) -> f64 {
        self.state.sim_clock_s
    }
}

/// Generalized two-level transition probability after driving for `t_s`
/// at Rabi rate `rate_hz` with residual detuning `delta_hz`, both cyclic:
/// `P = f^2/(f^2 + d^2) sin^2(pi sqrt(f^2 + d^2) t)`.
pub fn rabi_probability(rate_hz: f64, delta_hz: f64, t_s: f64) -> f64 {
    let f2 = rate_hz * rate_hz;
    let w2 = f2 + delta_hz * delta_hz;
    if w2 <= 0.0 {
        return 0.0;
    }
    f2 / w2 * (PI * w2.sqrt() * t_s).sin().powi(2)
}

/// Resonant pi-pulse duration for a cyclic Rabi rate: `1 / (2 f)`.
pub fn pi_time(rate_hz: f64) -> f64 {
    1.0 / (2.0 * rate_hz)
}

/// Timing summary of a completed run, in the accounting style of the
/// worst-case scan budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSummary {
    pub per_cycle_s: f64,
    pub cycles: u64,
    pub points_per_second: f64,
    pub simulated_s: f64,
    pub simulated_hours: f64,
}

/// Derive per-cycle and throughput figures from run statistics.
pub fn cycle_time_accounting(
    stats: &RunStats,
    timing: &CycleTiming,
    attempts_per_point: u32,
) -> TimeSummary {
    let per_cycle_s = timing.cycle_s();
    TimeSummary {
        per_cycle_s,
        cycles: stats.detections,
        points_per_second: 1.0 / (per_cycle_s * f64::from(attempts_per_point.max(1))),
        simulated_s: stats.sim_time_s,
        simulated_hours: stats.sim_time_s / 3600.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::MemorySink;
    use crate::molecule::SelectionRule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn engine(
        setup: &TrajectorySetup,
        seed: u64,
    ) -> Trajectory<ChaCha8Rng, MemorySink> {
        Trajectory::new(setup, ChaCha8Rng::seed_from_u64(seed), MemorySink::default()).unwrap()
    }

    fn line_for(
        setup: &TrajectorySetup,
        pair: (u32, u32),
        n: i32,
        mode: Option<Mode>,
    ) -> ResonanceLine {
        let modes = mode_structure(&setup.crystal, setup.drive.k_effective()).unwrap();
        resonance_offsets(&setup.model, &setup.drive, &modes)
            .unwrap()
            .lines
            .into_iter()
            .find(|l| l.j_upper == pair.0 && l.j_lower == pair.1 && l.n == n && l.mode == mode)
            .unwrap()
    }

    fn setup_fixed(j: u32) -> TrajectorySetup {
        let mut setup = TrajectorySetup::mgh_defaults();
        setup.noise = NoiseModel::ideal();
        setup.initial = InitialState::Fixed(j);
        setup
    }

    #[test]
    fn resonant_pi_pulse_cycle() {
        let setup = setup_fixed(4);
        let line = line_for(&setup, (4, 2), -1, Some(Mode::Minus));
        let mut traj = engine(&setup, 7);
        let pulse = PulseSpec {
            delta_omega_o: line.delta_omega_o,
            duration_s: pi_time(line.rate_hz),
            mode: Mode::Minus,
        };
        traj.raman_pulse(&pulse).unwrap();
        assert_eq!(traj.state().j, 2);
        assert_eq!(traj.state().n_motion, 1);
        traj.sideband_transfer().unwrap();
        assert_eq!(traj.state().n_motion, 0);
        assert_eq!(traj.state().atom, AtomicLevel::E);
        assert!(!traj.detect_bright().unwrap());
        traj.reset().unwrap();
        assert_eq!(traj.state().atom, AtomicLevel::G);
        assert_eq!(traj.state().j, 2, "reset leaves the molecule alone");
    }

    #[test]
    fn one_way_rule_blocks_raising_at_motional_ground() {
        // Molecule in the lower level of a red line, motion in the ground
        // state: the raising direction can never fire.
        let setup = setup_fixed(2);
        let line = line_for(&setup, (4, 2), -1, Some(Mode::Minus));
        let mut traj = engine(&setup, 11);
        let pulse = PulseSpec {
            delta_omega_o: line.delta_omega_o,
            duration_s: pi_time(line.rate_hz),
            mode: Mode::Minus,
        };
        for _ in 0..200 {
            traj.raman_pulse(&pulse).unwrap();
            assert_eq!(traj.state().j, 2);
            assert_eq!(traj.state().n_motion, 0);
        }
    }

    #[test]
    fn red_line_runs_backward_with_a_quantum_present() {
        let setup = setup_fixed(4);
        let line = line_for(&setup, (4, 2), -1, Some(Mode::Minus));
        let mut traj = engine(&setup, 13);
        let pulse = PulseSpec {
            delta_omega_o: line.delta_omega_o,
            duration_s: pi_time(line.rate_hz),
            mode: Mode::Minus,
        };
        traj.raman_pulse(&pulse).unwrap();
        assert_eq!((traj.state().j, traj.state().n_motion), (2, 1));
        // Without a reset the deposited quantum lets the line run back up.
        traj.raman_pulse(&pulse).unwrap();
        assert_eq!((traj.state().j, traj.state().n_motion), (4, 0));
    }

    #[test]
    fn off_resonant_pulse_is_a_noop() {
        let setup = setup_fixed(3);
        let line = line_for(&setup, (4, 2), -1, Some(Mode::Minus));
        let mut traj = engine(&setup, 17);
        let pulse = PulseSpec {
            delta_omega_o: line.delta_omega_o,
            duration_s: pi_time(line.rate_hz),
            mode: Mode::Minus,
        };
        for _ in 0..100 {
            traj.raman_pulse(&pulse).unwrap();
            assert_eq!(traj.state().j, 3);
        }
        // The record stream still logs every attempt.
        assert_eq!(traj.stats().pulses, 100);
        assert_eq!(traj.stats().pulse_transitions, 0);
    }

    #[test]
    fn carrier_swaps_without_motion() {
        let setup = setup_fixed(4);
        let line = line_for(&setup, (4, 2), 0, None);
        let mut traj = engine(&setup, 19);
        let pulse = PulseSpec {
            delta_omega_o: line.delta_omega_o,
            duration_s: pi_time(line.rate_hz),
            mode: Mode::Minus,
        };
        traj.raman_pulse(&pulse).unwrap();
        assert_eq!((traj.state().j, traj.state().n_motion), (2, 0));
        traj.raman_pulse(&pulse).unwrap();
        assert_eq!((traj.state().j, traj.state().n_motion), (4, 0));
    }

    #[test]
    fn transfer_requires_ground_level_atom() {
        let setup = setup_fixed(4);
        let line = line_for(&setup, (4, 2), -1, Some(Mode::Minus));
        let mut traj = engine(&setup, 23);
        let pulse = PulseSpec {
            delta_omega_o: line.delta_omega_o,
            duration_s: pi_time(line.rate_hz),
            mode: Mode::Minus,
        };
        traj.raman_pulse(&pulse).unwrap();
        traj.sideband_transfer().unwrap();
        assert!(matches!(
            traj.sideband_transfer(),
            Err(Error::ProtocolSequence(_))
        ));
    }

    #[test]
    fn transfer_forbidden_at_motional_ground() {
        let setup = setup_fixed(4);
        let mut traj = engine(&setup, 29);
        traj.sideband_transfer().unwrap();
        assert_eq!(traj.state().atom, AtomicLevel::G);
        assert!(traj.detect_bright().unwrap());
    }

    #[test]
    fn detection_fidelity_statistics() {
        let mut setup = setup_fixed(0);
        setup.noise = NoiseModel::default(); // 0.8 fidelities
        let mut traj = engine(&setup, 31);
        let trials = 10_000;
        let mut brights = 0;
        for _ in 0..trials {
            if traj.detect_bright().unwrap() {
                brights += 1;
            }
        }
        let rate = f64::from(brights) / f64::from(trials);
        assert!((rate - 0.8).abs() < 0.016, "bright rate {rate}");
    }

    #[test]
    fn reset_residual_occupancy() {
        let mut setup = setup_fixed(0);
        let mut noise = NoiseModel::ideal();
        noise.recool_residual_nbar = 0.1;
        setup.noise = noise;
        let mut traj = engine(&setup, 37);
        let trials = 20_000;
        let mut ground = 0;
        for _ in 0..trials {
            traj.reset().unwrap();
            if traj.state().n_motion == 0 {
                ground += 1;
            }
        }
        let rate = f64::from(ground) / f64::from(trials);
        let expect = 1.0 / 1.1;
        assert!((rate - expect).abs() < 0.01, "ground rate {rate}");
    }

    #[test]
    fn frozen_rotation_with_infinite_tau() {
        let mut setup = setup_fixed(7);
        setup.env = ThermalEnvironment::new(300.0, f64::INFINITY).unwrap();
        let line = line_for(&setup, (4, 2), -1, Some(Mode::Minus));
        let mut traj = engine(&setup, 41);
        let pulse = PulseSpec {
            delta_omega_o: line.delta_omega_o,
            duration_s: pi_time(line.rate_hz),
            mode: Mode::Minus,
        };
        for _ in 0..50 {
            traj.idle(100.0).unwrap();
            traj.raman_pulse(&pulse).unwrap();
            assert_eq!(traj.state().j, 7);
        }
        assert_eq!(traj.stats().retherms, 0);
    }

    #[test]
    fn rethermalization_resamples_over_long_waits() {
        let mut setup = setup_fixed(0);
        setup.noise = NoiseModel::ideal();
        setup.env = ThermalEnvironment::new(300.0, 1e-3).unwrap();
        // Probe far from every line so the pulse only flushes the clock.
        let mut traj = engine(&setup, 43);
        let pulse = PulseSpec {
            delta_omega_o: TAU * 0.2031e9,
            duration_s: 10e-6,
            mode: Mode::Minus,
        };
        let mut histogram = vec![0u32; 31];
        for _ in 0..4000 {
            traj.idle(1.0).unwrap();
            traj.raman_pulse(&pulse).unwrap();
            histogram[traj.state().j as usize] += 1;
        }
        assert!(traj.stats().retherms > 3500);
        let peak = histogram
            .iter()
            .enumerate()
            .max_by_key(|&(_, c)| *c)
            .unwrap()
            .0;
        assert!((3..=5).contains(&peak), "thermal peak at J = {peak}");
    }

    #[test]
    fn zero_elapsed_time_never_retherms() {
        let mut setup = setup_fixed(9);
        setup.env = ThermalEnvironment::new(300.0, 1e-9).unwrap();
        let mut traj = engine(&setup, 47);
        // No clock advance has happened yet, so the flush must be a no-op.
        traj.settle_rotation().unwrap();
        assert_eq!(traj.state().j, 9);
        assert_eq!(traj.stats().retherms, 0);
    }

    #[test]
    fn heating_accumulates_quanta() {
        let mut setup = setup_fixed(0);
        let mut noise = NoiseModel::ideal();
        noise.heating_rate_quanta_per_s = 1000.0;
        setup.noise = noise;
        let mut traj = engine(&setup, 53);
        traj.idle(0.1).unwrap();
        traj.sideband_transfer().unwrap(); // flushes heating, then removes one
        let n = traj.state().n_motion;
        assert!((50..250).contains(&n), "heated to n = {n}");
        assert_eq!(traj.state().atom, AtomicLevel::E);
    }

    #[test]
    fn determinism_bit_identical_logs() {
        let run = |seed: u64| -> Vec<String> {
            let mut setup = TrajectorySetup::mgh_defaults();
            setup.initial = InitialState::Thermal;
            let line = line_for(&setup, (4, 2), -1, Some(Mode::Minus));
            let mut traj = engine(&setup, seed);
            let pulse = PulseSpec {
                delta_omega_o: line.delta_omega_o,
                duration_s: setup.timing.pulse_s,
                mode: Mode::Minus,
            };
            for i in 0..200 {
                traj.raman_pulse(&pulse).unwrap();
                traj.sideband_transfer().unwrap();
                traj.detect_bright().unwrap();
                traj.reset().unwrap();
                if i % 50 == 0 {
                    traj.idle(0.5).unwrap();
                }
            }
            let (sink, _, _) = traj.into_parts();
            sink.records.iter().map(|r| r.to_line()).collect()
        };
        let a = run(2024);
        let b = run(2024);
        let c = run(2025);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rabi_probability_shape() {
        let f = 174e3;
        assert!((rabi_probability(f, 0.0, pi_time(f)) - 1.0).abs() < 1e-9);
        assert_eq!(rabi_probability(f, 0.0, 0.0), 0.0);
        // Detuned by one linewidth the peak response drops to half.
        let p = rabi_probability(f, f, pi_time(f));
        assert!(p <= 0.5 + 1e-12);
        assert_eq!(rabi_probability(0.0, 1e3, 1e-5), 0.0);
    }

    #[test]
    fn timing_accounting_matches_budget() {
        let timing = CycleTiming::default();
        assert!((timing.cycle_s() - 1e-3).abs() < 1e-15);
        let stats = RunStats { detections: 1000, sim_time_s: 1.0, ..RunStats::default() };
        let summary = cycle_time_accounting(&stats, &timing, 100);
        assert!(summary.per_cycle_s <= 1e-3 + 1e-15);
        assert!((summary.points_per_second - 10.0).abs() < 1e-9);
    }

    #[test]
    fn spectator_sideband_changes_j_without_motion() {
        let mut setup = setup_fixed(4);
        setup.selected_mode = Mode::Minus;
        let line = line_for(&setup, (4, 2), -1, Some(Mode::Plus));
        let mut traj = engine(&setup, 59);
        let pulse = PulseSpec {
            delta_omega_o: line.delta_omega_o,
            duration_s: pi_time(line.rate_hz),
            mode: Mode::Plus,
        };
        traj.raman_pulse(&pulse).unwrap();
        assert_eq!(traj.state().j, 2);
        assert_eq!(traj.state().n_motion, 0, "spectator quanta are not tracked");
        // And the transfer on the selected mode sees nothing.
        traj.sideband_transfer().unwrap();
        assert_eq!(traj.state().atom, AtomicLevel::G);
    }

    #[test]
    fn selection_rule_symmetric_top_lines_exist() {
        let mut setup = setup_fixed(3);
        setup.model = RotorModel::new(
            190e9,
            10e6,
            SelectionRule::DeltaJ1And2,
            1.57,
            280e-9,
            30,
        )
        .unwrap();
        let line = line_for(&setup, (3, 1), -1, Some(Mode::Minus));
        assert_eq!(line.j_lower, 1);
        let mut traj = engine(&setup, 61);
        let pulse = PulseSpec {
            delta_omega_o: line.delta_omega_o,
            duration_s: pi_time(line.rate_hz),
            mode: Mode::Minus,
        };
        traj.raman_pulse(&pulse).unwrap();
        assert_eq!(traj.state().j, 1);
    }
}
