//! Quantum-non-demolition readout of the rotational state.
//!
//! One cycle drives the red sideband of the hypothesis transition (down),
//! detects, then the matching blue sideband (up), and detects again. When the
//! molecule occupies the hypothesis level both legs keep firing, because each
//! leg re-arms the other; when it sits anywhere else, both stay quiet. Every
//! detection updates a Bayesian likelihood ratio, so the aggregate verdict is
//! far more reliable than any single imperfect detection, and the molecule
//! ends the readout in the level it started in.

use crate::dynamics::{pi_time, Apparatus};
use crate::error::{Error, Result};
use crate::protocols::probe::probe_cycle;
use crate::protocols::{choose_clean_spacing, KnownSpectrum, Outcome, ProtocolConfig, ProtocolResult};

/// Tests the hypothesis "the molecule is in level `j_hypothesis`".
///
/// Returns the verdict with its posterior probability (flat 0.5 prior),
/// computed from `2 * qnd_repetitions` single-shot detections at the assumed
/// detection fidelity.
pub fn qnd_readout(
    app: &mut dyn Apparatus,
    spectrum: &KnownSpectrum,
    config: &ProtocolConfig,
    j_hypothesis: u32,
) -> Result<ProtocolResult> {
    config.validate()?;
    let t0 = app.elapsed_s();
    let mode = app.selected_mode();
    let rule = spectrum.model.selection_rule;
    let j_lower = if j_hypothesis >= 2 && rule.allows(j_hypothesis, j_hypothesis - 2) {
        j_hypothesis - 2
    } else if j_hypothesis >= 1 && rule.allows(j_hypothesis, j_hypothesis - 1) {
        j_hypothesis - 1
    } else {
        return Err(Error::ForbiddenTransition(format!(
            "no transition out of J={j_hypothesis} to probe"
        )));
    };
    let red = spectrum
        .line(j_hypothesis, j_lower, -1, Some(mode))
        .ok_or_else(|| Error::ForbiddenTransition(format!("no red line for J={j_hypothesis}")))?;
    let blue = spectrum
        .line(j_hypothesis, j_lower, 1, Some(mode))
        .ok_or_else(|| Error::ForbiddenTransition(format!("no blue line for J={j_hypothesis}")))?;

    let duration = pi_time(spectrum.sideband_rate_hz(mode));
    choose_clean_spacing(app, spectrum, &[red.absolute_hz, blue.absolute_hz], 1.0 / duration)?;
    let omega_m = app.comb_spacing();
    let red_offset = spectrum.offset_at(red, omega_m);
    let blue_offset = spectrum.offset_at(blue, omega_m);

    let fid = config.assumed_detection_fidelity;
    // Log-likelihood ratio of "in hypothesis" vs "elsewhere"; dark favors in.
    let step = (fid / (1.0 - fid)).ln();
    let mut log_lr = 0.0;
    let mut dark_count = 0u32;
    for _ in 0..config.qnd_repetitions {
        for offset in [red_offset, blue_offset] {
            if probe_cycle(app, offset, duration, 0)? {
                dark_count += 1;
                log_lr += step;
            } else {
                log_lr -= step;
            }
        }
    }
    let posterior_in = 1.0 / (1.0 + (-log_lr).exp());
    let in_hypothesis = posterior_in >= 0.5;
    Ok(ProtocolResult {
        outcome: Outcome::QndVerdict {
            in_hypothesis,
            posterior: posterior_in,
            dark_count,
            cycles: config.qnd_repetitions,
        },
        confidence: posterior_in.max(1.0 - posterior_in),
        simulated_s: app.elapsed_s() - t0,
    })
}
