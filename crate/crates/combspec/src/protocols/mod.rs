//! The four experimental procedures, written as deterministic state machines
//! over the [`Apparatus`](crate::dynamics::Apparatus) interface: projective
//! state preparation, transition-rate measurement, QND readout, and the blind
//! spectrum scan with comb-order inference.
//!
//! Protocols obtain information about the molecule exclusively through
//! detection outcomes. Procedures for "known molecular constants" receive a
//! [`KnownSpectrum`] built from public model parameters, never from the
//! engine's internal state.

pub mod comb_order;
pub(crate) mod probe;
pub mod projection;
pub mod qnd;
pub mod rate;
pub mod scan;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::crystal::{mode_structure, CrystalSpec, Mode, ModeStructure};
use crate::dynamics::Apparatus;
use crate::error::{Error, Result};
use crate::molecule::{carrier_rabi_rate, resonance_offsets, CombDrive, ResonanceLine, RotorModel};

pub use comb_order::infer_comb_order;
pub use projection::{project_rotational_state, pump_to_rotational_ground, thermal_prior};
pub use qnd::qnd_readout;
pub use rate::{
    default_duration_grid, measure_transition_rate, measure_transition_rate_traced, RatePoint,
};
pub use scan::{spectrum_scan, spectrum_scan_traced, FoundLine, ScanInputs, ScanPoint};

/// Tunable budgets and thresholds shared by the protocols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Raman attempts per comb detuning point during the blind scan.
    pub attempts_per_point: u32,
    /// Default Raman pulse window, s.
    pub pulse_duration_s: f64,
    /// Blind-scan offset step, rad/s.
    pub scan_step: f64,
    /// Offset grid used when re-localizing a line precisely, rad/s.
    pub fine_step: f64,
    /// Consecutive bright outcomes required to declare a level unoccupied.
    pub empty_threshold: u32,
    /// Down/up cycles in one QND readout.
    pub qnd_repetitions: u32,
    /// Single-shot detection fidelity assumed in Bayesian bookkeeping.
    pub assumed_detection_fidelity: f64,
    /// Extra fluorescence windows used to confirm a dark before acting on it
    /// (the atomic state survives detection, so re-reading is free of
    /// back-action).
    pub confirm_detections: u32,
    /// Overall simulated-time budget of a scan, s.
    pub max_simulated_s: f64,
    /// Portion of the budget reserved for the adaptive revisit phase, s.
    pub revisit_budget_s: f64,
    /// Cycles per pulse duration in a rate measurement.
    pub rate_cycles_per_duration: u32,
    /// Largest comb order considered during order inference.
    pub order_max: u32,
    /// Cumulative repetition-rate dither fractions of the order-inference
    /// ladder; the last entry is the headline dither. Consecutive rungs
    /// should grow slowly enough that each rung's search window stays well
    /// inside the mode splitting, or the ladder will refuse to sweep.
    pub dither_fractions: Vec<f64>,
    /// Thermal occupancy below which a predicted line is not chased.
    pub occupancy_floor: f64,
    /// Probe/restore pair count per offset when localizing a line.
    pub localization_pairs: u32,
    /// Alternating pair count when confirming a candidate pair of lines.
    pub investigate_pairs: u32,
    /// Probe/restore pairs per offset in revisit bursts.
    pub burst_pairs: u32,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            attempts_per_point: 100,
            pulse_duration_s: 10e-6,
            scan_step: TAU * 10e3,
            fine_step: TAU * 1e3,
            empty_threshold: 30,
            qnd_repetitions: 15,
            assumed_detection_fidelity: 0.8,
            confirm_detections: 2,
            max_simulated_s: 1.18e4,
            revisit_budget_s: 1.5e3,
            rate_cycles_per_duration: 200,
            order_max: 20_000,
            dither_fractions: vec![3e-8, 4e-7, 5e-6, 7e-5, 1e-3],
            occupancy_floor: 0.01,
            localization_pairs: 12,
            investigate_pairs: 8,
            burst_pairs: 4,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("attempts_per_point", self.attempts_per_point),
            ("empty_threshold", self.empty_threshold),
            ("qnd_repetitions", self.qnd_repetitions),
            ("rate_cycles_per_duration", self.rate_cycles_per_duration),
            ("order_max", self.order_max),
            ("localization_pairs", self.localization_pairs),
            ("investigate_pairs", self.investigate_pairs),
            ("burst_pairs", self.burst_pairs),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("pulse_duration_s", self.pulse_duration_s),
            ("scan_step", self.scan_step),
            ("fine_step", self.fine_step),
            ("max_simulated_s", self.max_simulated_s),
            ("revisit_budget_s", self.revisit_budget_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.5..1.0).contains(&self.assumed_detection_fidelity) {
            return Err(Error::Config(format!(
                "assumed_detection_fidelity must lie in [0.5, 1), got {}",
                self.assumed_detection_fidelity
            )));
        }
        // A dense scan must not step over a full line response.
        let step_hz = self.scan_step / TAU;
        let width_hz = 1.0 / self.pulse_duration_s;
        if step_hz > width_hz {
            return Err(Error::Config(format!(
                "scan step {step_hz} Hz exceeds the Fourier width {width_hz} Hz of a \
                 {} s pulse; lines could fall between points",
                self.pulse_duration_s
            )));
        }
        if self.dither_fractions.is_empty()
            || self
                .dither_fractions
                .windows(2)
                .any(|w| !(w[0] > 0.0 && w[0] < w[1]))
            || !self.dither_fractions.iter().all(|&r| r > 0.0 && r < 0.1)
        {
            return Err(Error::Config(
                "dither_fractions must be strictly increasing, positive, and small".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.occupancy_floor) {
            return Err(Error::Config(format!(
                "occupancy_floor must lie in [0, 1), got {}",
                self.occupancy_floor
            )));
        }
        Ok(())
    }
}

/// What a protocol produced, with its confidence and time cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub outcome: Outcome,
    /// Posterior confidence in the outcome, in [0, 1].
    pub confidence: f64,
    /// Simulated time consumed by this protocol, s.
    pub simulated_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// The molecule was projected into this rotational level.
    ProjectedJ { j: u32 },
    /// Every probe-able candidate level was excluded.
    ProjectionFailed,
    /// Parity forbids reaching J = 0 from the starting level.
    UnreachableGround { j_start: u32 },
    GroundReached { carrier_pulses: u32, verified: bool },
    RateEstimate {
        rate_hz: f64,
        /// 95 % confidence interval.
        ci_hz: (f64, f64),
        /// Fitted contrast of the oscillation.
        amplitude: f64,
    },
    RateUndetermined { reason: String },
    QndVerdict {
        in_hypothesis: bool,
        posterior: f64,
        dark_count: u32,
        cycles: u32,
    },
    Resonances {
        lines: Vec<FoundLine>,
        /// False when the scan ran out of budget with predictions unresolved.
        complete: bool,
    },
}

/// Everything an experimenter knows when the molecular constants are known:
/// the rotor model, the crystal mode structure, and the comb-derived line
/// table with rates. Built purely from public model parameters.
#[derive(Debug, Clone)]
pub struct KnownSpectrum {
    pub model: RotorModel,
    pub modes: ModeStructure,
    /// Carrier Rabi rate, cyclic Hz.
    pub f0_hz: f64,
    lines: Vec<ResonanceLine>,
}

impl KnownSpectrum {
    pub fn new(model: &RotorModel, drive: &CombDrive, crystal: &CrystalSpec) -> Result<Self> {
        let modes = mode_structure(crystal, drive.k_effective())?;
        let f0_hz = carrier_rabi_rate(model, drive)?;
        let lines = resonance_offsets(model, drive, &modes)?.lines;
        Ok(Self { model: *model, modes, f0_hz, lines })
    }

    pub fn lines(&self) -> &[ResonanceLine] {
        &self.lines
    }

    pub fn line(&self, j_upper: u32, j_lower: u32, n: i32, mode: Option<Mode>) -> Option<&ResonanceLine> {
        self.lines
            .iter()
            .find(|l| l.j_upper == j_upper && l.j_lower == j_lower && l.n == n && l.mode == mode)
    }

    /// Sideband Rabi rate on a mode, cyclic Hz.
    pub fn sideband_rate_hz(&self, mode: Mode) -> f64 {
        self.f0_hz * self.modes.eta(mode)
    }

    /// Offset at which a line is resonant for a given comb spacing, rad/s in
    /// [0, omega_m).
    pub fn offset_at(&self, line: &ResonanceLine, omega_m: f64) -> f64 {
        (TAU * line.absolute_hz).rem_euclid(omega_m)
    }
}

/// Circular distance between two offsets modulo the comb spacing, rad/s.
pub(crate) fn circular_distance(a: f64, b: f64, omega_m: f64) -> f64 {
    let d = (a - b).rem_euclid(omega_m);
    d.min(omega_m - d)
}

/// Retune the comb spacing, if necessary, so that every target line is
/// isolated: no other known line's residue falls within twice the matching
/// window of a target. With round-number constants many lines alias exactly
/// at the nominal spacing; an experimenter who knows the spectrum picks a
/// repetition rate where the working lines are unambiguous.
pub fn choose_clean_spacing(
    app: &mut dyn Apparatus,
    spectrum: &KnownSpectrum,
    targets_hz: &[f64],
    window_hz: f64,
) -> Result<()> {
    let base = app.comb_spacing();
    let clearance = TAU * 2.0 * window_hz;
    'candidate: for k in 0..500u32 {
        let omega_m = base * (1.0 + f64::from(k) * 7.07e-4);
        for &target in targets_hz {
            let target_residue = (TAU * target).rem_euclid(omega_m);
            for line in spectrum.lines() {
                if (line.absolute_hz - target).abs() < 0.5 {
                    continue; // the target itself
                }
                let residue = (TAU * line.absolute_hz).rem_euclid(omega_m);
                if circular_distance(target_residue, residue, omega_m) < clearance {
                    continue 'candidate;
                }
            }
        }
        if k > 0 {
            app.set_comb_spacing(omega_m)?;
        }
        return Ok(());
    }
    Err(Error::Undetermined(format!(
        "no comb spacing near {} Hz isolates the requested lines",
        base / TAU
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ProtocolConfig::default().validate().unwrap();
    }

    #[test]
    fn config_rejects_coarse_steps() {
        let mut config = ProtocolConfig::default();
        config.scan_step = TAU * 200e3; // wider than the 100 kHz window
        assert!(config.validate().is_err());
    }

    #[test]
    fn config_rejects_unsorted_dithers() {
        let mut config = ProtocolConfig::default();
        config.dither_fractions = vec![1e-3, 1e-7];
        assert!(config.validate().is_err());
    }

    #[test]
    fn known_spectrum_rates() {
        let spectrum = KnownSpectrum::new(
            &RotorModel::mgh(),
            &CombDrive::comb_1ghz_800nm(),
            &CrystalSpec::mgh_mg(),
        )
        .unwrap();
        // The larger Lamb-Dicke parameter belongs to the lower mode.
        assert!(spectrum.sideband_rate_hz(Mode::Minus) > spectrum.sideband_rate_hz(Mode::Plus));
        let line = spectrum.line(4, 2, -1, Some(Mode::Minus)).unwrap();
        // Residues of ~1e13 rad/s absolutes carry ~0.01 rad/s of float error.
        assert!((spectrum.offset_at(line, TAU * 1e9) - line.delta_omega_o).abs() < 0.05);
    }

    #[test]
    fn circular_distance_wraps() {
        let m = TAU * 1e9;
        assert!((circular_distance(0.1, m - 0.1, m) - 0.2).abs() < 1e-5);
        assert!((circular_distance(1.0, 4.0, m) - 3.0).abs() < 1e-12);
    }
}
