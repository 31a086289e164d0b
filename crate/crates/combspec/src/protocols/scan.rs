//! The blind spectrum scan: sweep the comb offset over one full spacing,
//! chase every response down to a localized red/blue sideband pair with its
//! comb order, then revisit adaptively until the emerging rotational ladder
//! has no unexplained gaps.
//!
//! Phase A steps the offset across [0, omega_m) with a fixed attempt budget
//! per point. Because the pulse matching window is much wider than the usable
//! Rabi response, the first fire of a zone almost always happens far out on
//! the wing, and it moves the molecule one level along, where the probed
//! offset may have nothing left to drive. Every confirmed dark is therefore
//! followed by a staggered-duration re-arm on both partner offsets, a
//! centroid refinement of the response center, and only then the red/blue
//! disambiguation: driving two mode quanta red of the center (if that fires,
//! the response was the blue leg), else two quanta blue (the response was the
//! red leg). The red leg is then localized by centroid and its comb order
//! inferred by the dither ladder.
//!
//! Phase B fits the carriers found so far, predicts which thermally occupied
//! transitions are still missing (including lines hiding under the residue of
//! an already-found line, which a single sweep cannot distinguish), and
//! parks on the predicted offsets until the molecule wanders into one of
//! those levels and responds.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::analysis::{assign_and_fit, CarrierLine, FitResult, MeasuredLine};
use crate::crystal::Mode;
use crate::dynamics::Apparatus;
use crate::error::{Error, Result};
use crate::molecule::{thermal_distribution, RotorModel, SelectionRule};
use crate::protocols::comb_order::infer_comb_order;
use crate::protocols::probe::{
    alternate_fires, center_out_offsets, localize_two_pass, probe_cycle, restore_upper,
};
use crate::protocols::{circular_distance, Outcome, ProtocolConfig, ProtocolResult};

/// Knowledge the blind scan is allowed to start from: the environment and
/// the selection rule of the species, but no frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanInputs {
    pub temperature_k: f64,
    pub selection_rule: SelectionRule,
}

/// A resonance pair located by the scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoundLine {
    pub mode: Mode,
    /// Offset of the red (n = -1) leg, rad/s in [0, omega_m).
    pub red_offset: f64,
    /// Offset of the blue (n = +1) leg.
    pub blue_offset: f64,
    /// Midpoint of the pair: where the carrier would be resonant.
    pub carrier_offset: f64,
    /// Comb order of the red leg; None when inference failed.
    pub comb_order: Option<u32>,
    pub absolute_red_hz: Option<f64>,
    pub absolute_carrier_hz: Option<f64>,
    /// One-sigma localization uncertainty, Hz.
    pub uncertainty_hz: f64,
}

impl FoundLine {
    fn from_red(
        mode: Mode,
        red_center: f64,
        order: Option<u32>,
        omega_m: f64,
        omega_mode: f64,
        uncertainty_hz: f64,
    ) -> Self {
        let red_offset = red_center.rem_euclid(omega_m);
        let blue_offset = (red_center + 2.0 * omega_mode).rem_euclid(omega_m);
        let carrier_offset = (red_center + omega_mode).rem_euclid(omega_m);
        let absolute_red_hz = order.map(|n| (f64::from(n) * omega_m + red_offset) / TAU);
        let absolute_carrier_hz = absolute_red_hz.map(|f| f + omega_mode / TAU);
        Self {
            mode,
            red_offset,
            blue_offset,
            carrier_offset,
            comb_order: order,
            absolute_red_hz,
            absolute_carrier_hz,
            uncertainty_hz,
        }
    }

    /// Expands the pair into measurement records for the analysis pipeline.
    pub fn to_measured(&self, omega_m: f64, omega_mode: f64) -> Vec<MeasuredLine> {
        let blue_order = self.comb_order.map(|n| {
            n + ((self.red_offset + 2.0 * omega_mode) / omega_m).floor() as u32
        });
        vec![
            MeasuredLine {
                delta_omega_o: self.red_offset,
                comb_order: self.comb_order,
                n: -1,
                mode: Some(self.mode),
                uncertainty_hz: self.uncertainty_hz,
            },
            MeasuredLine {
                delta_omega_o: self.blue_offset,
                comb_order: blue_order,
                n: 1,
                mode: Some(self.mode),
                uncertainty_hz: self.uncertainty_hz,
            },
        ]
    }
}

/// One probed offset of the Phase A sweep: the raw material for the
/// offset-versus-dark-rate plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    /// Probed comb offset, cyclic Hz.
    pub delta_omega_o_hz: f64,
    /// Probe cycles spent at this offset.
    pub attempts: u32,
    /// Confirmed dark detections among them.
    pub fires: u32,
}

/// A real pair must fire on both legs of an alternation: every fire re-arms
/// the partner, so one-sided counts mean a drain (a cascade down an aliased
/// ladder, or thermal arrivals), not a pair.
fn alternated(a: u32, b: u32) -> bool {
    a >= 1 && b >= 1
}
/// Assignment search cap on the upper rotational level.
const J_SEARCH_MAX: u32 = 60;
/// Widest half-window a revisit burst will sweep, rad/s.
const MAX_BURST_HALF_WIDTH: f64 = TAU * 5e6;
/// Worst weighted rms against the fitted ladder for the assignment to count
/// as trustworthy, Hz. Localization leaves a few kHz per carrier, so a sound
/// assignment sits well below this and a scrambled one far above.
const FIT_SANE_RMS_HZ: f64 = 1e5;

/// Coefficients of the ladder law at upper level j: the carrier frequency is
/// B times the first minus D times the second.
fn ladder_terms(j: u32) -> (f64, f64) {
    let jf = f64::from(j);
    (4.0 * jf - 2.0, 4.0 * (2.0 * jf - 1.0) * (jf * jf - jf + 1.0))
}

struct Scanner<'a> {
    app: &'a mut dyn Apparatus,
    config: &'a ProtocolConfig,
    inputs: ScanInputs,
    omega_m: f64,
    omega_mode: f64,
    two_omega: f64,
    /// Half width of the pulse matching window, rad/s.
    window: f64,
    mode: Mode,
    lines: Vec<FoundLine>,
    trace: Vec<ScanPoint>,
    /// Barren order-mining attempts per residue: (red offset, consecutive
    /// mines that produced nothing new).
    mine_strikes: Vec<(f64, u32)>,
    t0: f64,
}

struct Prediction {
    carrier_hz: f64,
    half_width: f64,
}

impl<'a> Scanner<'a> {
    fn elapsed(&self) -> f64 {
        self.app.elapsed_s() - self.t0
    }

    fn in_skip_zone(&self, x: f64) -> bool {
        let half = self.window + self.config.scan_step;
        self.lines.iter().any(|l| {
            circular_distance(x, l.red_offset, self.omega_m) < half
                || circular_distance(x, l.blue_offset, self.omega_m) < half
        })
    }

    /// Phase A: exhaustive sweep of the offset axis.
    fn sweep(&mut self, deadline_s: f64) -> Result<()> {
        let steps = (self.omega_m / self.config.scan_step).floor() as u64;
        for i in 0..steps {
            if self.elapsed() > deadline_s {
                self.app.note("scan: sweep stopped at the time budget")?;
                return Ok(());
            }
            let x = i as f64 * self.config.scan_step;
            if self.in_skip_zone(x) {
                continue;
            }
            self.sweep_point(x)?;
        }
        Ok(())
    }

    fn sweep_point(&mut self, x: f64) -> Result<()> {
        let mut investigations = 0u32;
        let mut fires = 0u32;
        let mut attempts = 0u32;
        for _ in 0..self.config.attempts_per_point {
            attempts += 1;
            if probe_cycle(self.app, x, self.config.pulse_duration_s, self.config.confirm_detections)? {
                fires += 1;
                if investigations >= 3 {
                    continue;
                }
                investigations += 1;
                if self.investigate(x)? {
                    break;
                }
            }
        }
        self.trace.push(ScanPoint { delta_omega_o_hz: x / TAU, attempts, fires });
        Ok(())
    }

    /// Puts the molecule back on whichever leg just fired at `y`: the partner
    /// offset two quanta up re-arms after a red fire, two quanta down after a
    /// blue fire. The staggered durations inside the restore keep a detuned
    /// partner reachable even when `y` sits on the wing of the response.
    fn rearm(&mut self, y: f64) -> Result<()> {
        let dur = self.config.pulse_duration_s;
        let confirms = self.config.confirm_detections;
        if !restore_upper(self.app, y + self.two_omega, dur, confirms, 6)? {
            restore_upper(self.app, y - self.two_omega, dur, confirms, 6)?;
        }
        Ok(())
    }

    /// Centroid of the response around a triggering offset, harvested while
    /// two-sided re-arms keep the molecule cycling. The triggering fire nearly
    /// always sits on the wing of the matching window, so alternation at the
    /// raw offset is hopeless; this pulls the estimate onto the line first.
    /// The span extends half a window beyond the window itself because the
    /// true center can sit a full window away from the trigger.
    fn refine_center(&mut self, x: f64) -> Result<Option<f64>> {
        let step = self.config.scan_step;
        let half_points = (1.5 * self.window / step).ceil() as u32;
        let offsets = center_out_offsets(x, step, half_points);
        let mut weighted = 0.0;
        let mut fires = 0u32;
        let mut silent = 0u32;
        for &y in &offsets {
            for _ in 0..3 {
                if probe_cycle(self.app, y, self.config.pulse_duration_s, self.config.confirm_detections)? {
                    weighted += y - x;
                    fires += 1;
                    silent = 0;
                    self.rearm(y)?;
                } else {
                    silent += 1;
                    if silent >= 9 {
                        // A long dead stretch usually means a failed re-arm
                        // parked the molecule in a level this zone cannot
                        // drive; both partner offsets can lift it back.
                        self.rearm(y)?;
                        silent = 0;
                    }
                }
            }
        }
        if fires < 3 {
            return Ok(None);
        }
        Ok(Some(x + weighted / f64::from(fires)))
    }

    /// A point responded: re-arm the molecule, pull the offset onto the
    /// response center, find out whether the center is the red or the blue
    /// leg of a pair, then localize and record the pair. Returns true when a
    /// line was recorded.
    fn investigate(&mut self, x: f64) -> Result<bool> {
        let dbg = std::env::var_os("COMBSPEC_TRACE").is_some();
        self.rearm(x)?;
        let refined = self.refine_center(x)?;
        if dbg {
            eprintln!("investigate x={:.4} MHz refined={:?}", x / TAU / 1e6, refined.map(|c| c / TAU / 1e6));
        }
        let Some(center) = refined else {
            return Ok(false);
        };
        let dur = self.config.pulse_duration_s;
        let confirms = self.config.confirm_detections;
        let pairs = self.config.investigate_pairs;
        // If the center is the blue leg the fires moved the molecule up; the
        // red leg two quanta below brings it back, and the two legs alternate.
        let (down, up) =
            alternate_fires(self.app, center - self.two_omega, center, pairs, dur, confirms)?;
        if dbg {
            eprintln!("  blue-hyp down={down} up={up}");
        }
        let red_approx = if alternated(down, up) {
            center - self.two_omega
        } else {
            // The partner below stayed quiet: the center is the red leg and
            // the blue leg sits two quanta up.
            let (up2, down2) =
                alternate_fires(self.app, center + self.two_omega, center, pairs, dur, confirms)?;
            if dbg {
                eprintln!("  red-hyp up={up2} down={down2}");
            }
            if alternated(up2, down2) {
                center
            } else {
                return Ok(false);
            }
        };
        let rec = self.localize_and_record(red_approx)?;
        if dbg {
            eprintln!("  localize_and_record({:.4} MHz) -> {rec}", red_approx / TAU / 1e6);
        }
        Ok(rec)
    }

    fn localize_and_record(&mut self, red_approx: f64) -> Result<bool> {
        let Some((center, fires)) = localize_two_pass(
            self.app,
            red_approx,
            self.two_omega,
            self.config.scan_step,
            self.config.pulse_duration_s,
            self.config.confirm_detections,
            self.config.localization_pairs,
        )?
        else {
            return Ok(false);
        };
        // Centroid error: profile spread over the fire count.
        let sigma_hz = 0.45 * (self.window / TAU) / f64::from(fires.max(1)).sqrt();
        let order = match infer_comb_order(self.app, center, self.config) {
            Ok(n) => Some(n),
            Err(Error::Undetermined(reason)) => {
                self.app.note(&format!("scan: comb order pending: {reason}"))?;
                None
            }
            Err(e) => return Err(e),
        };
        let line = FoundLine::from_red(
            self.mode,
            center,
            order,
            self.omega_m,
            self.omega_mode,
            sigma_hz.max(1e3),
        );
        self.record(line)
    }

    /// Deduplicates against known lines, then stores. Returns true when the
    /// set of lines changed.
    fn record(&mut self, line: FoundLine) -> Result<bool> {
        for existing in &mut self.lines {
            let same_order = line.comb_order.is_some() && existing.comb_order == line.comb_order;
            let same_residue = circular_distance(
                line.red_offset,
                existing.red_offset,
                self.omega_m,
            ) < TAU * 40e3;
            if same_order || (line.comb_order.is_none() && same_residue)
                || (existing.comb_order.is_none() && same_residue)
            {
                // Same physical line: keep the better-determined record.
                if existing.comb_order.is_none() && line.comb_order.is_some()
                    || (existing.comb_order == line.comb_order
                        && line.uncertainty_hz < existing.uncertainty_hz)
                {
                    *existing = line;
                }
                return Ok(false);
            }
        }
        self.app.note(&format!(
            "scan: pair at red offset {:.1} Hz, order {:?}",
            line.red_offset / TAU,
            line.comb_order
        ))?;
        self.lines.push(line);
        Ok(true)
    }

    fn carriers(&self) -> Vec<CarrierLine> {
        self.lines
            .iter()
            .filter_map(|l| {
                l.absolute_carrier_hz.map(|f| CarrierLine {
                    frequency_hz: f,
                    uncertainty_hz: l.uncertainty_hz,
                    paired: true,
                })
            })
            .collect()
    }

    /// Builds a rotor model from fitted constants for occupancy estimates,
    /// backing off the level cap until the model is self-consistent.
    fn occupancy_model(&self, b_hz: f64, d_hz: f64) -> Option<RotorModel> {
        let d = d_hz.clamp(0.0, 1e-4 * b_hz);
        for j_max in [40, 30, 20, 10] {
            if let Ok(model) = RotorModel::new(
                b_hz,
                d,
                self.inputs.selection_rule,
                1.0,
                400e-9,
                j_max,
            ) {
                return Some(model);
            }
        }
        None
    }

    /// Fit of the ordered carriers found so far. None until three carriers
    /// carry comb orders, or while no assignment fits convincingly.
    fn current_fit(&self) -> Option<FitResult> {
        let carriers = self.carriers();
        if carriers.len() < 3 {
            return None;
        }
        assign_and_fit(&carriers, self.inputs.selection_rule, J_SEARCH_MAX)
            .ok()
            .filter(|f| f.rms_hz < FIT_SANE_RMS_HZ)
    }

    /// Predicted carriers of thermally relevant transitions that have no
    /// matching found line yet.
    fn predictions(&self, fit: Option<&FitResult>) -> Vec<Prediction> {
        let carriers = self.carriers();
        let found: Vec<f64> = carriers.iter().map(|c| c.frequency_hz).collect();
        let mut preds = Vec::new();
        if let Some(fit) = fit {
            let Some(model) = self.occupancy_model(fit.b_hz, fit.d_hz) else {
                return preds;
            };
            let occ = thermal_distribution(&model, self.inputs.temperature_k);
            for j in 2..=model.j_max {
                let occupancy =
                    occ.get(j as usize).copied().unwrap_or(0.0) + occ.get(j as usize - 2).copied().unwrap_or(0.0);
                if occupancy < self.config.occupancy_floor {
                    continue;
                }
                let Ok(f) = crate::molecule::transition_frequency(&model, j, j - 2) else {
                    continue;
                };
                let jf = f64::from(j);
                let sigma = ((4.0 * jf - 2.0) * fit.b_sigma_hz).hypot(
                    ((jf * (jf + 1.0)).powi(2) - ((jf - 2.0) * (jf - 1.0)).powi(2))
                        * fit.d_sigma_hz,
                );
                let half_width = (TAU * 3.0 * sigma + self.window).min(MAX_BURST_HALF_WIDTH);
                if found.iter().any(|&g| (g - f).abs() < (half_width / TAU).max(1e6)) {
                    continue;
                }
                preds.push(Prediction { carrier_hz: f, half_width });
            }
        } else if carriers.len() == 2 {
            // Two ordered carriers admit an exact two-constant solution per
            // assignment hypothesis. Every hypothesis with a physical
            // solution contributes predictions; bursts at the false ones stay
            // quiet, so the real ladder sorts itself out.
            let (c1, c2) = (found[0].min(found[1]), found[0].max(found[1]));
            for j1 in 2..=16u32 {
                for j2 in (j1 + 1)..=20u32 {
                    let (a1, y1) = ladder_terms(j1);
                    let (a2, y2) = ladder_terms(j2);
                    let det = a1 * y2 - a2 * y1;
                    if det.abs() < 1.0 {
                        continue;
                    }
                    let b = (c1 * y2 - c2 * y1) / det;
                    let d = (c1 * a2 - c2 * a1) / det;
                    if !(b.is_finite() && b > 0.0 && d >= 0.0 && d <= 1e-4 * b) {
                        continue;
                    }
                    let Some(model) = self.occupancy_model(b, d) else { continue };
                    let occ = thermal_distribution(&model, self.inputs.temperature_k);
                    for j in 2..=model.j_max.min(20) {
                        if j == j1 || j == j2 {
                            continue;
                        }
                        let occupancy = occ.get(j as usize).copied().unwrap_or(0.0)
                            + occ.get(j as usize - 2).copied().unwrap_or(0.0);
                        if occupancy < self.config.occupancy_floor {
                            continue;
                        }
                        let Ok(f) = crate::molecule::transition_frequency(&model, j, j - 2)
                        else {
                            continue;
                        };
                        if found.iter().any(|&g| (g - f).abs() < 2e6) {
                            continue;
                        }
                        // An exact solve is only as wrong as the carrier
                        // localization, so the matching window is enough.
                        preds.push(Prediction { carrier_hz: f, half_width: self.window });
                    }
                }
            }
        }
        preds.sort_by(|a, b| a.carrier_hz.partial_cmp(&b.carrier_hz).unwrap());
        preds.dedup_by(|a, b| (a.carrier_hz - b.carrier_hz).abs() < 2e6);
        preds
    }

    /// Parks on a pair whose position is known and waits for the molecule to
    /// wander in. Returns true on a capture (molecule now in the upper
    /// level).
    fn park_burst(&mut self, red_offset: f64) -> Result<bool> {
        let (down, up) = alternate_fires(
            self.app,
            red_offset,
            red_offset + self.two_omega,
            self.config.burst_pairs,
            self.config.pulse_duration_s,
            self.config.confirm_detections,
        )?;
        Ok(down + up >= 1)
    }

    /// Sweeps a window around a predicted red-leg offset; on a response,
    /// restores upward and reports the firing offset.
    fn prediction_burst(&mut self, center: f64, half_width: f64) -> Result<Option<f64>> {
        let step = self.window; // line response spans two window halves
        let points = (2.0 * half_width / step).ceil() as u32;
        for i in 0..=points {
            let x = center - half_width + f64::from(i) * step;
            if probe_cycle(self.app, x, self.config.pulse_duration_s, self.config.confirm_detections)? {
                restore_upper(
                    self.app,
                    x + self.two_omega,
                    self.config.pulse_duration_s,
                    self.config.confirm_detections,
                    4,
                )?;
                return Ok(Some(x));
            }
        }
        Ok(None)
    }

    /// Confirms a revisit capture as a real pair, localizes, and records.
    /// Revisits target red legs, so no leg disambiguation is needed, but the
    /// capture offset still sits anywhere in the matching window and must be
    /// refined before a fixed-duration alternation can respond.
    fn confirm_and_record(&mut self, red_guess: f64) -> Result<bool> {
        let Some(center) = self.refine_center(red_guess)? else {
            return Ok(false);
        };
        let (up, down) = alternate_fires(
            self.app,
            center + self.two_omega,
            center,
            self.config.investigate_pairs,
            self.config.pulse_duration_s,
            self.config.confirm_detections,
        )?;
        if !alternated(up, down) {
            return Ok(false);
        }
        self.localize_and_record(center)
    }

    fn strikes(&self, red_offset: f64) -> u32 {
        self.mine_strikes
            .iter()
            .find(|(o, _)| circular_distance(*o, red_offset, self.omega_m) < TAU * 40e3)
            .map_or(0, |(_, s)| *s)
    }

    fn note_strike(&mut self, red_offset: f64, found_new: bool) {
        let hit = self
            .mine_strikes
            .iter_mut()
            .find(|(o, _)| circular_distance(*o, red_offset, self.omega_m) < TAU * 40e3);
        match (hit, found_new) {
            (Some((_, s)), true) => *s = 0,
            (Some((_, s)), false) => *s += 1,
            (None, found_new) => {
                self.mine_strikes.push((red_offset, u32::from(!found_new)));
            }
        }
    }

    /// The molecule was just captured in a pair at an already-localized
    /// residue. Runs the order ladder on whichever ladder rung it occupies;
    /// transitions whose offsets alias onto a known residue surface this way
    /// as new comb orders. Returns whether the set of lines changed, or None
    /// when the ladder could not finish and learned nothing either way.
    fn mine_order(&mut self, line: &FoundLine) -> Result<Option<bool>> {
        let order = match infer_comb_order(self.app, line.red_offset, self.config) {
            Ok(n) => n,
            Err(Error::Undetermined(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let mined = FoundLine::from_red(
            self.mode,
            line.red_offset,
            Some(order),
            self.omega_m,
            self.omega_mode,
            line.uncertainty_hz,
        );
        self.record(mined).map(Some)
    }

    /// Phase B: resolve pending comb orders and chase predicted lines until
    /// nothing is missing or the budget runs out. Returns completeness.
    fn revisit(&mut self, deadline_s: f64) -> Result<bool> {
        loop {
            if self.elapsed() > deadline_s {
                return Ok(false);
            }
            if self.lines.is_empty() {
                // Nothing responded anywhere; there is no offset worth
                // parking on, and a blind protocol has nothing else to try.
                return Ok(false);
            }
            let pending: Vec<f64> = self
                .lines
                .iter()
                .filter(|l| l.comb_order.is_none())
                .map(|l| l.red_offset)
                .collect();
            let fit = self.current_fit();
            let preds = self.predictions(fit.as_ref());
            if pending.is_empty() && preds.is_empty() && fit.is_some() {
                return Ok(true);
            }
            let round_start = self.app.elapsed_s();
            for &offset in &pending {
                if self.elapsed() > deadline_s {
                    return Ok(false);
                }
                if self.park_burst(offset)? {
                    // Make sure the molecule really sits in this pair, then
                    // rerun localization and the order ladder.
                    self.confirm_and_record(offset)?;
                }
            }
            if fit.is_none() {
                // Too few ordered carriers to predict from. A residue
                // already found can hide further transitions aliased onto
                // it, each with its own comb order; park there and order
                // whatever rung the molecule turns up in. Residues that
                // repeatedly mine nothing new are retired: they are not
                // stacked, and the time is better spent elsewhere.
                let ordered: Vec<FoundLine> = self
                    .lines
                    .iter()
                    .filter(|l| l.comb_order.is_some())
                    .cloned()
                    .collect();
                for line in ordered {
                    if self.elapsed() > deadline_s {
                        return Ok(false);
                    }
                    if self.strikes(line.red_offset) >= 3 {
                        continue;
                    }
                    if self.park_burst(line.red_offset)? {
                        if let Some(found_new) = self.mine_order(&line)? {
                            self.note_strike(line.red_offset, found_new);
                        }
                    }
                }
            }
            for pred in &preds {
                if self.elapsed() > deadline_s {
                    return Ok(false);
                }
                let red_center = (TAU * pred.carrier_hz - self.omega_mode).rem_euclid(self.omega_m);
                if let Some(x) = self.prediction_burst(red_center, pred.half_width)? {
                    self.confirm_and_record(x)?;
                }
            }
            // If the round was cheap, let the environment reshuffle the
            // rotational state before asking the same questions again.
            let round_cost = self.app.elapsed_s() - round_start;
            if round_cost < 0.2 {
                self.app.idle(0.2 - round_cost)?;
            }
        }
    }
}

/// Runs the full blind scan. See the module docs for the phases.
///
/// The returned lines are sorted by absolute frequency when known, residue
/// otherwise; `complete` reports whether every found line carries a comb
/// order and the fitted ladder has no thermally expected gaps.
pub fn spectrum_scan(
    app: &mut dyn Apparatus,
    inputs: &ScanInputs,
    config: &ProtocolConfig,
) -> Result<ProtocolResult> {
    spectrum_scan_traced(app, inputs, config).map(|(result, _)| result)
}

/// [`spectrum_scan`] plus the per-point sweep record for plotting.
pub fn spectrum_scan_traced(
    app: &mut dyn Apparatus,
    inputs: &ScanInputs,
    config: &ProtocolConfig,
) -> Result<(ProtocolResult, Vec<ScanPoint>)> {
    config.validate()?;
    if !(inputs.temperature_k.is_finite() && inputs.temperature_k > 0.0) {
        return Err(Error::Config(format!(
            "scan temperature must be positive, got {}",
            inputs.temperature_k
        )));
    }
    let t0 = app.elapsed_s();
    let mode = app.selected_mode();
    let omega_mode = app.mode_frequency(mode);
    let omega_m = app.comb_spacing();
    let mut scanner = Scanner {
        app,
        config,
        inputs: *inputs,
        omega_m,
        omega_mode,
        two_omega: 2.0 * omega_mode,
        window: TAU / config.pulse_duration_s,
        mode,
        lines: Vec::new(),
        trace: Vec::new(),
        mine_strikes: Vec::new(),
        t0,
    };
    let sweep_deadline = config.max_simulated_s - config.revisit_budget_s;
    scanner.sweep(sweep_deadline)?;
    scanner.app.note(&format!(
        "scan: sweep done, {} pairs, revisiting",
        scanner.lines.len()
    ))?;
    let complete = scanner.revisit(config.max_simulated_s)?;
    let simulated_s = scanner.app.elapsed_s() - t0;
    let trace = scanner.trace;
    let mut lines = scanner.lines;
    lines.sort_by(|a, b| {
        let ka = a.absolute_carrier_hz.unwrap_or(a.carrier_offset / TAU);
        let kb = b.absolute_carrier_hz.unwrap_or(b.carrier_offset / TAU);
        ka.partial_cmp(&kb).unwrap()
    });
    let confidence = if complete { 0.95 } else { 0.5 };
    Ok((
        ProtocolResult {
            outcome: Outcome::Resonances { lines, complete },
            confidence,
            simulated_s,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measured_lines_from_pair() {
        let omega_m = TAU * 1e9;
        let omega_mode = TAU * 0.99e6;
        let line = FoundLine::from_red(Mode::Minus, TAU * 360e6, Some(2656), omega_m, omega_mode, 5e3);
        let measured = line.to_measured(omega_m, omega_mode);
        assert_eq!(measured.len(), 2);
        assert_eq!(measured[0].n, -1);
        assert_eq!(measured[1].n, 1);
        assert_eq!(measured[0].comb_order, Some(2656));
        // The blue leg stays inside the same spacing here.
        assert_eq!(measured[1].comb_order, Some(2656));
        let red_abs = (2656.0 * omega_m + TAU * 360e6) / TAU;
        assert!((line.absolute_red_hz.unwrap() - red_abs).abs() < 1e-6);
        assert!(
            (line.absolute_carrier_hz.unwrap() - (red_abs + 0.99e6)).abs() < 1e-6
        );
    }

    #[test]
    fn blue_leg_can_wrap_into_the_next_order() {
        let omega_m = TAU * 1e9;
        let omega_mode = TAU * 0.99e6;
        // Red leg near the top of the spacing: the blue leg wraps.
        let line =
            FoundLine::from_red(Mode::Minus, TAU * 999.5e6, Some(10), omega_m, omega_mode, 5e3);
        let measured = line.to_measured(omega_m, omega_mode);
        assert_eq!(measured[1].comb_order, Some(11));
        assert!(line.blue_offset < TAU * 2e6);
    }
}
