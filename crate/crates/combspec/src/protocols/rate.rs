//! Sideband Rabi-rate measurement on a line whose frequency is known but
//! whose strength is not.
//!
//! The molecule is parked in the upper level of the pair. For a grid of pulse
//! durations the red sideband is driven repeatedly and the dark fraction
//! recorded; every detected transition is undone by pulsing the matching blue
//! sideband until it fires, which needs no rate knowledge. The dark fraction
//! traces c + a sin^2(pi f t), and a least-squares fit over f recovers the
//! rate. Detection infidelity only rescales c and a, never the frequency.

use crate::dynamics::Apparatus;
use crate::error::{Error, Result};
use crate::protocols::probe::{probe_cycle, restore_upper};
use crate::protocols::{choose_clean_spacing, KnownSpectrum, Outcome, ProtocolConfig, ProtocolResult};

/// Evenly spaced pulse durations from `max_s / count` up to `max_s`.
pub fn default_duration_grid(count: u32, max_s: f64) -> Vec<f64> {
    (1..=count).map(|i| f64::from(i) * max_s / f64::from(count)).collect()
}

/// One point of the measured Rabi curve: the raw material for the P(t) plot.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RatePoint {
    pub duration_s: f64,
    /// Dark fraction observed at this duration.
    pub fraction: f64,
    /// Probe cycles behind the fraction.
    pub trials: u32,
}

/// Result of fitting c + a sin^2(pi f t) to dark fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct RabiFit {
    pub rate_hz: f64,
    /// Half width of the 95 % confidence interval.
    pub ci_half_width_hz: f64,
    pub amplitude: f64,
    pub floor: f64,
    pub sse: f64,
}

fn sin2_lsq(durations: &[f64], fractions: &[f64], weights: &[f64], f: f64) -> (f64, f64, f64) {
    let (mut s, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&t, &p), &w) in durations.iter().zip(fractions).zip(weights) {
        let x = (std::f64::consts::PI * f * t).sin().powi(2);
        s += w;
        sx += w * x;
        sxx += w * x * x;
        sy += w * p;
        sxy += w * x * p;
    }
    let denom = s * sxx - sx * sx;
    if denom.abs() < 1e-12 * s * s {
        return (0.0, sy / s.max(1.0), f64::INFINITY);
    }
    let a = (s * sxy - sx * sy) / denom;
    let c = (sy - a * sx) / s;
    let mut sse = 0.0;
    for ((&t, &p), &w) in durations.iter().zip(fractions).zip(weights) {
        let x = (std::f64::consts::PI * f * t).sin().powi(2);
        let r = p - c - a * x;
        sse += w * r * r;
    }
    (a, c, sse)
}

/// Fits dark fractions against pulse duration. Returns None when the data
/// carry no usable fringe (flat response, or too few points).
pub fn fit_rabi_frequency(
    durations: &[f64],
    fractions: &[f64],
    weights: &[f64],
) -> Option<RabiFit> {
    if durations.len() < 4 || durations.len() != fractions.len() || durations.len() != weights.len()
    {
        return None;
    }
    let t_min = durations.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(t_min.is_finite() && t_min > 0.0) {
        return None;
    }
    let f_max = 1.0 / (2.0 * t_min);
    let f_min = 1e3_f64.min(f_max / 100.0);
    let steps = 4000usize;
    let df = (f_max - f_min) / steps as f64;
    let mut best = (f_min, f64::INFINITY);
    for i in 0..=steps {
        let f = f_min + i as f64 * df;
        let (_, _, sse) = sin2_lsq(durations, fractions, weights, f);
        if sse < best.1 {
            best = (f, sse);
        }
    }
    // Parabolic refinement on the discrete minimum.
    let (f0, sse0) = best;
    let (_, _, sse_lo) = sin2_lsq(durations, fractions, weights, f0 - df);
    let (_, _, sse_hi) = sin2_lsq(durations, fractions, weights, f0 + df);
    let curvature = (sse_lo - 2.0 * sse0 + sse_hi) / (df * df);
    let f_hat = if curvature > 0.0 {
        (f0 + 0.5 * df * (sse_lo - sse_hi) / (sse_lo - 2.0 * sse0 + sse_hi))
            .clamp(f_min, f_max)
    } else {
        f0
    };
    let (a, c, sse) = sin2_lsq(durations, fractions, weights, f_hat);
    let dof = durations.len() as f64 - 3.0;
    if dof < 1.0 || !a.is_finite() {
        return None;
    }
    let sigma2 = sse / dof;
    let ci = if curvature > 0.0 {
        1.96 * (2.0 * sigma2 / curvature).sqrt()
    } else {
        f64::INFINITY
    };
    Some(RabiFit { rate_hz: f_hat, ci_half_width_hz: ci, amplitude: a, floor: c, sse })
}

/// Measures the Rabi rate of the red sideband of (j_upper -> j_lower).
///
/// Assumes the molecule currently occupies `j_upper` (prepare it with
/// [`project_rotational_state`](crate::protocols::project_rotational_state)).
/// Durations are probed in interleaved passes so that a temporary loss of the
/// molecule spreads evenly over the grid instead of biasing one end.
pub fn measure_transition_rate(
    app: &mut dyn Apparatus,
    spectrum: &KnownSpectrum,
    config: &ProtocolConfig,
    j_upper: u32,
    durations_s: &[f64],
) -> Result<ProtocolResult> {
    measure_transition_rate_traced(app, spectrum, config, j_upper, durations_s)
        .map(|(result, _)| result)
}

/// [`measure_transition_rate`] plus the measured curve for plotting.
pub fn measure_transition_rate_traced(
    app: &mut dyn Apparatus,
    spectrum: &KnownSpectrum,
    config: &ProtocolConfig,
    j_upper: u32,
    durations_s: &[f64],
) -> Result<(ProtocolResult, Vec<RatePoint>)> {
    config.validate()?;
    if durations_s.len() < 4 || durations_s.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Config("need at least four positive pulse durations".into()));
    }
    let t0 = app.elapsed_s();
    let mode = app.selected_mode();
    let rule = spectrum.model.selection_rule;
    let j_lower = if j_upper >= 2 && rule.allows(j_upper, j_upper - 2) {
        j_upper - 2
    } else if j_upper >= 1 && rule.allows(j_upper, j_upper - 1) {
        j_upper - 1
    } else {
        return Err(Error::ForbiddenTransition(format!("no transition out of J={j_upper}")));
    };
    let red = spectrum
        .line(j_upper, j_lower, -1, Some(mode))
        .ok_or_else(|| Error::ForbiddenTransition(format!("no red line for J={j_upper}")))?;
    let blue = spectrum
        .line(j_upper, j_lower, 1, Some(mode))
        .ok_or_else(|| Error::ForbiddenTransition(format!("no blue line for J={j_upper}")))?;
    choose_clean_spacing(
        app,
        spectrum,
        &[red.absolute_hz, blue.absolute_hz],
        1.0 / config.pulse_duration_s,
    )?;
    let omega_m = app.comb_spacing();
    let red_offset = spectrum.offset_at(red, omega_m);
    let blue_offset = spectrum.offset_at(blue, omega_m);

    let n = durations_s.len();
    let mut darks = vec![0u32; n];
    let mut trials = vec![0u32; n];
    let passes = config.rate_cycles_per_duration.min(10).max(1);
    let per_pass = config.rate_cycles_per_duration / passes;
    let remainder = config.rate_cycles_per_duration - per_pass * passes;
    for pass in 0..passes {
        let cycles = per_pass + u32::from(pass < remainder);
        for i in 0..n {
            let idx = (i + pass as usize) % n;
            for _ in 0..cycles {
                trials[idx] += 1;
                if probe_cycle(app, red_offset, durations_s[idx], 0)? {
                    darks[idx] += 1;
                    restore_upper(
                        app,
                        blue_offset,
                        config.pulse_duration_s,
                        config.confirm_detections,
                        6,
                    )?;
                }
            }
        }
    }

    let fractions: Vec<f64> = darks
        .iter()
        .zip(&trials)
        .map(|(&k, &m)| f64::from(k) / f64::from(m.max(1)))
        .collect();
    let weights: Vec<f64> = trials.iter().map(|&m| f64::from(m)).collect();
    let simulated_s = app.elapsed_s() - t0;
    let fit = fit_rabi_frequency(durations_s, &fractions, &weights);
    let outcome = match fit {
        Some(fit) if fit.amplitude > 0.02 && fit.ci_half_width_hz.is_finite() => {
            app.note(&format!("rate: {:.1} Hz +- {:.1}", fit.rate_hz, fit.ci_half_width_hz))?;
            Outcome::RateEstimate {
                rate_hz: fit.rate_hz,
                ci_hz: (fit.rate_hz - fit.ci_half_width_hz, fit.rate_hz + fit.ci_half_width_hz),
                amplitude: fit.amplitude,
            }
        }
        Some(fit) => Outcome::RateUndetermined {
            reason: format!(
                "no usable fringe: amplitude {:.4}, ci {:.1} Hz",
                fit.amplitude, fit.ci_half_width_hz
            ),
        },
        None => Outcome::RateUndetermined { reason: "fit did not converge".into() },
    };
    let confidence = match &outcome {
        Outcome::RateEstimate { .. } => 0.95,
        _ => 0.0,
    };
    let curve = durations_s
        .iter()
        .zip(&fractions)
        .zip(&trials)
        .map(|((&duration_s, &fraction), &trials)| RatePoint { duration_s, fraction, trials })
        .collect();
    Ok((ProtocolResult { outcome, confidence, simulated_s }, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exact_sin2() {
        let durations = default_duration_grid(20, 5e-6);
        let f_true = 174e3;
        let fractions: Vec<f64> = durations
            .iter()
            .map(|&t| 0.1 + 0.7 * (std::f64::consts::PI * f_true * t).sin().powi(2))
            .collect();
        let weights = vec![200.0; durations.len()];
        let fit = fit_rabi_frequency(&durations, &fractions, &weights).unwrap();
        assert!((fit.rate_hz - f_true).abs() < 0.001 * f_true, "{}", fit.rate_hz);
        assert!((fit.amplitude - 0.7).abs() < 1e-3);
        assert!((fit.floor - 0.1).abs() < 1e-3);
    }

    #[test]
    fn flat_data_has_no_fringe() {
        let durations = default_duration_grid(20, 5e-6);
        let fractions = vec![0.2; 20];
        let weights = vec![200.0; 20];
        let fit = fit_rabi_frequency(&durations, &fractions, &weights).unwrap();
        assert!(fit.amplitude.abs() < 0.02);
    }

    #[test]
    fn duration_grid_spans_up_to_max() {
        let grid = default_duration_grid(20, 5e-6);
        assert_eq!(grid.len(), 20);
        assert!((grid[0] - 0.25e-6).abs() < 1e-12);
        assert!((grid[19] - 5e-6).abs() < 1e-12);
    }
}
