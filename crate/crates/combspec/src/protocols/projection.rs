//! Projective preparation of the rotational state.
//!
//! The molecule starts in a thermal mixture. Probing the red motional
//! sideband of a candidate transition and detecting the deposited quantum
//! collapses the rotational state: a confirmed dark means the molecule made
//! the transition and now sits in the lower level. Levels that stay bright
//! for a long string of attempts are declared empty and excluded, and the
//! search moves down the occupancy-ordered candidate list.

use crate::dynamics::{pi_time, Apparatus};
use crate::error::{Error, Result};
use crate::molecule::thermal_distribution;
use crate::protocols::probe::probe_cycle;
use crate::protocols::{choose_clean_spacing, KnownSpectrum, Outcome, ProtocolConfig, ProtocolResult};

/// A probe-able candidate level: the red sideband of (j_upper -> j_lower)
/// collapses j_upper into j_lower.
struct Candidate {
    j_upper: u32,
    j_lower: u32,
    absolute_hz: f64,
}

fn candidates(spectrum: &KnownSpectrum, prior: &[f64], app: &dyn Apparatus) -> Vec<Candidate> {
    let mode = app.selected_mode();
    let mut out = Vec::new();
    for (j, &p) in prior.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let j = j as u32;
        let pair = [(j, j.wrapping_sub(2)), (j, j.wrapping_sub(1))]
            .into_iter()
            .find(|&(u, l)| u >= 1 && l < u && spectrum.line(u, l, -1, Some(mode)).is_some());
        if let Some((u, l)) = pair {
            let line = spectrum.line(u, l, -1, Some(mode)).unwrap();
            out.push(Candidate { j_upper: u, j_lower: l, absolute_hz: line.absolute_hz });
        }
    }
    out
}

/// Posterior that a confirmed dark really was a transition, given the
/// assumed single-shot detection fidelity and the current occupancy weight
/// of the probed level.
fn dark_posterior(weight: f64, fidelity: f64, windows: u32) -> f64 {
    let p_in = weight * fidelity.powi(windows as i32);
    let p_out = (1.0 - weight) * (1.0 - fidelity).powi(windows as i32);
    p_in / (p_in + p_out)
}

/// Collapses the thermal mixture onto a single rotational level.
///
/// `prior` is the occupancy prior indexed by J (for a thermal start, the
/// Boltzmann weights at the known environment temperature). Probing follows
/// descending prior weight. The result is `ProjectedJ` with the lower level
/// of the transition that fired, or `ProjectionFailed` when every candidate
/// was excluded.
pub fn project_rotational_state(
    app: &mut dyn Apparatus,
    spectrum: &KnownSpectrum,
    config: &ProtocolConfig,
    prior: &[f64],
) -> Result<ProtocolResult> {
    config.validate()?;
    if prior.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || prior.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config("projection prior must be nonnegative and nonzero".into()));
    }
    let t0 = app.elapsed_s();
    let mut cands = candidates(spectrum, prior, app);
    if cands.is_empty() {
        return Ok(ProtocolResult {
            outcome: Outcome::ProjectionFailed,
            confidence: 1.0,
            simulated_s: 0.0,
        });
    }
    // Heaviest candidates first; ties resolved toward lower J.
    cands.sort_by(|a, b| {
        let (pa, pb) = (prior[a.j_upper as usize], prior[b.j_upper as usize]);
        pb.partial_cmp(&pa).unwrap().then(a.j_upper.cmp(&b.j_upper))
    });

    let duration = pi_time(spectrum.sideband_rate_hz(app.selected_mode()));
    let targets: Vec<f64> = cands.iter().map(|c| c.absolute_hz).collect();
    choose_clean_spacing(app, spectrum, &targets, 1.0 / duration)?;
    let omega_m = app.comb_spacing();

    let fid = config.assumed_detection_fidelity;
    let windows = 1 + config.confirm_detections;
    let total: f64 = prior.iter().sum();
    for cand in &cands {
        let offset = spectrum
            .offset_at(spectrum.line(cand.j_upper, cand.j_lower, -1, Some(app.selected_mode())).unwrap(), omega_m);
        for _ in 0..config.empty_threshold {
            if probe_cycle(app, offset, duration, config.confirm_detections)? {
                let weight = prior[cand.j_upper as usize] / total;
                return Ok(ProtocolResult {
                    outcome: Outcome::ProjectedJ { j: cand.j_lower },
                    confidence: dark_posterior(weight, fid, windows),
                    simulated_s: app.elapsed_s() - t0,
                });
            }
        }
        app.note(&format!("projection: J={} excluded", cand.j_upper))?;
    }
    Ok(ProtocolResult {
        outcome: Outcome::ProjectionFailed,
        confidence: 1.0 - (1.0 - fid).powi(windows as i32),
        simulated_s: app.elapsed_s() - t0,
    })
}

/// Walks the molecule from a known level down to J = 0 with carrier pulses,
/// then verifies arrival by probing the lowest blue sideband (which can fire
/// only from the ground level) and pumping back down.
///
/// Carrier transitions leave no motional quantum, so the walk itself is
/// blind; only the final verification produces a detection.
pub fn pump_to_rotational_ground(
    app: &mut dyn Apparatus,
    spectrum: &KnownSpectrum,
    config: &ProtocolConfig,
    j_start: u32,
) -> Result<ProtocolResult> {
    config.validate()?;
    let t0 = app.elapsed_s();
    let rule = spectrum.model.selection_rule;

    // Plan the carrier chain.
    let mut chain: Vec<(u32, u32)> = Vec::new();
    let mut j = j_start;
    while j > 0 {
        let step = if j >= 2 && rule.allows(j, j - 2) {
            2
        } else if rule.allows(j, j - 1) {
            1
        } else {
            return Ok(ProtocolResult {
                outcome: Outcome::UnreachableGround { j_start },
                confidence: 1.0,
                simulated_s: app.elapsed_s() - t0,
            });
        };
        chain.push((j, j - step));
        j -= step;
    }

    // The verification pair is the lowest transition out of the ground level.
    let verify_upper = if rule.allows(1, 0) { 1 } else { 2 };
    let mode = app.selected_mode();
    let carrier_time = pi_time(spectrum.f0_hz);
    let sideband_time = pi_time(spectrum.sideband_rate_hz(mode));

    let mut targets: Vec<f64> = chain
        .iter()
        .map(|&(u, l)| spectrum.line(u, l, 0, None).map(|x| x.absolute_hz).ok_or_else(|| {
            Error::ForbiddenTransition(format!("no carrier line for {u}->{l}"))
        }))
        .collect::<Result<_>>()?;
    let verify_blue = spectrum
        .line(verify_upper, 0, 1, Some(mode))
        .ok_or_else(|| Error::ForbiddenTransition(format!("no blue line for {verify_upper}->0")))?
        .absolute_hz;
    let verify_carrier = spectrum
        .line(verify_upper, 0, 0, None)
        .ok_or_else(|| Error::ForbiddenTransition(format!("no carrier line for {verify_upper}->0")))?
        .absolute_hz;
    targets.push(verify_blue);
    targets.push(verify_carrier);
    // The carrier window is the widest in play; isolate against it.
    choose_clean_spacing(app, spectrum, &targets, 1.0 / carrier_time)?;
    let omega_m = app.comb_spacing();

    let mut pulses = 0u32;
    for &(u, l) in &chain {
        let line = spectrum.line(u, l, 0, None).unwrap();
        let offset = spectrum.offset_at(line, omega_m);
        app.raman_pulse(&crate::dynamics::PulseSpec {
            delta_omega_o: offset,
            duration_s: carrier_time,
            mode,
        })?;
        pulses += 1;
    }

    // Verify: the blue sideband out of the ground level fires only from J=0.
    let blue_offset = (verify_blue * std::f64::consts::TAU).rem_euclid(omega_m);
    let carrier_offset = (verify_carrier * std::f64::consts::TAU).rem_euclid(omega_m);
    let fid = config.assumed_detection_fidelity;
    let windows = 1 + config.confirm_detections;
    let mut verified = false;
    let mut brights_before = 0u32;
    for _ in 0..config.empty_threshold {
        if probe_cycle(app, blue_offset, sideband_time, config.confirm_detections)? {
            verified = true;
            // The fire promoted the molecule; pump it back down.
            app.raman_pulse(&crate::dynamics::PulseSpec {
                delta_omega_o: carrier_offset,
                duration_s: carrier_time,
                mode,
            })?;
            break;
        }
        brights_before += 1;
    }
    // Posterior for "the molecule was in the ground level" from the observed
    // bright run and final outcome, with a flat 0.5 prior.
    let p_ground = 0.5
        * (1.0 - fid).powi(brights_before as i32)
        * if verified { fid.powi(windows as i32) } else { 1.0 };
    let p_other = 0.5
        * fid.powi(brights_before as i32)
        * if verified { (1.0 - fid).powi(windows as i32) } else { 1.0 };
    Ok(ProtocolResult {
        outcome: Outcome::GroundReached { carrier_pulses: pulses, verified },
        confidence: p_ground / (p_ground + p_other),
        simulated_s: app.elapsed_s() - t0,
    })
}

/// Thermal prior over J for a model at a known temperature, as used by
/// [`project_rotational_state`].
pub fn thermal_prior(spectrum: &KnownSpectrum, temperature_k: f64) -> Vec<f64> {
    thermal_distribution(&spectrum.model, temperature_k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dark_posterior_limits() {
        // Certain occupancy and good fidelity: near-certain projection.
        assert!(dark_posterior(0.99, 0.8, 3) > 0.999);
        // Rare level: three agreeing windows still dominate a 1 % prior.
        let p = dark_posterior(0.01, 0.8, 3);
        assert!(p > 0.35 && p < 0.45, "{p}");
    }
}
