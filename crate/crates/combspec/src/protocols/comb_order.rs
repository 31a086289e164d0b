//! Inference of the integer comb order N of a resonance.
//!
//! A line seen at offset o with comb spacing w sits at the absolute frequency
//! N*w + o for some unknown integer N. Dithering the repetition rate by a
//! fraction r moves the resonance by -N*r*w, so re-finding the line measures
//! N. A single large dither is ambiguous because the shift wraps modulo the
//! spacing, and a single small one is too coarse to pin an integer; instead a
//! ladder of cumulative dithers is used, each rung shrinking the candidate
//! set, with the final rung at the full headline dither.
//!
//! Each rung's search window has to respect the local line geometry. The
//! pair's own carrier sits one mode splitting above the red leg and the
//! other mode's red sideband a little below it, both rigid offsets that a
//! dither preserves, and both flip the level silently when probed. Sweeping
//! downward stops at the red leg before reaching anything below it, and the
//! rung fractions are chosen so the marched stretch above the line stays
//! shorter than the splitting, keeping the carrier out of reach too.

use std::f64::consts::TAU;

use crate::dynamics::Apparatus;
use crate::error::{Error, Result};
use crate::protocols::probe::{localize_two_pass, restore_upper, sweep_first_fire};
use crate::protocols::ProtocolConfig;

/// Padding added around candidate predictions when sweeping, rad/s. Covers
/// the matching window plus localization error.
const SWEEP_PAD: f64 = TAU * 150e3;
/// Acceptance tolerance when matching a measured position against a
/// candidate prediction, rad/s. A little over three standard deviations of
/// the centroid localization.
const MATCH_TOL: f64 = TAU * 25e3;

/// Infers the comb order of the red line currently centered at `red_center`
/// (offset in rad/s at the present comb spacing). The molecule must occupy
/// the upper level of the pair; it is shuttled by restore pulses throughout
/// and left in the upper level on success.
///
/// Fails with [`Error::Undetermined`] when the resonance cannot be
/// re-established after a dither (for example the molecule rethermalized
/// away mid-ladder) or when no unique order survives the ladder.
pub fn infer_comb_order(
    app: &mut dyn Apparatus,
    red_center: f64,
    config: &ProtocolConfig,
) -> Result<u32> {
    config.validate()?;
    let omega0 = app.comb_spacing();
    let result = ladder(app, red_center, omega0, config);
    app.set_comb_spacing(omega0)?;
    result
}

fn ladder(
    app: &mut dyn Apparatus,
    red_center: f64,
    omega0: f64,
    config: &ProtocolConfig,
) -> Result<u32> {
    let two_omega = 2.0 * app.mode_frequency(app.selected_mode());
    let duration = config.pulse_duration_s;
    let confirms = config.confirm_detections;
    let mut candidates: Vec<u32> = (1..=config.order_max).collect();
    // Where the red leg sits at the spacing currently set, updated after
    // every rung. Used to re-arm the molecule into the upper level before
    // each retune; once the spacing changes, the line position is only
    // predicted, so the re-arm has to happen while it is still known.
    let mut known_center = red_center;

    let dbg = std::env::var_os("COMBSPEC_TRACE").is_some();
    for (rung, &r) in config.dither_fractions.iter().enumerate() {
        let shift_per_order = r * omega0;
        let pred = |n: u32| red_center - f64::from(n) * shift_per_order;
        let lo = pred(*candidates.last().unwrap()) - SWEEP_PAD;
        let hi = pred(candidates[0]) + SWEEP_PAD;
        if dbg {
            eprintln!(
                "      ladder rung {rung} r={r:e} cands {}..{} window [{:.4}, {:.4}] MHz",
                candidates[0],
                candidates.last().unwrap(),
                lo / TAU / 1e6,
                hi / TAU / 1e6
            );
        }
        // The marched stretch above the line is at worst the window span
        // minus one pad. Past the mode splitting it would cross the pair's
        // carrier image and risk a silent level flip, so such a rung is
        // refused outright.
        let march_limit = two_omega / 2.0 - TAU / duration - MATCH_TOL;
        if hi - lo - SWEEP_PAD > march_limit {
            return Err(Error::Undetermined(format!(
                "dither rung {rung} would march {:.0} kHz above the line, \
                 past the carrier image {:.0} kHz up; ladder fractions rise \
                 too fast",
                (hi - lo - SWEEP_PAD) / TAU / 1e3,
                two_omega / 2.0 / TAU / 1e3
            )));
        }
        restore_upper(app, known_center + two_omega, duration, confirms, 6)?;
        app.set_comb_spacing(omega0 * (1.0 + r))?;

        // March down from above. Downward matters twice over: the sweep
        // stops at the red leg before reaching the other mode's red
        // sideband below it, and the stretch above the line is short
        // enough (checked above) that the carrier is never probed either.
        let steps = ((hi - lo) / config.scan_step).ceil() as u32;
        let offsets = (0..=steps).map(|i| hi - f64::from(i) * config.scan_step);
        let hit0 = sweep_first_fire(app, offsets, two_omega, duration, confirms, 4)?;
        if dbg {
            eprintln!("      ladder rung {rung} hit {:?}", hit0.map(|h| h / TAU / 1e6));
        }
        let Some(hit) = hit0 else {
            return Err(Error::Undetermined(format!(
                "resonance not re-established after dither rung {rung} (fraction {r:e})"
            )));
        };
        let Some((measured, _)) =
            localize_two_pass(app, hit, two_omega, config.scan_step, duration, confirms, 10)?
        else {
            return Err(Error::Undetermined(format!(
                "resonance lost while localizing after dither rung {rung}"
            )));
        };
        known_center = measured;
        candidates.retain(|&n| (pred(n) - measured).abs() < MATCH_TOL);
        match candidates.len() {
            0 => {
                return Err(Error::Undetermined(format!(
                    "no comb order consistent with the shift at dither rung {rung}"
                )))
            }
            1 if rung + 1 == config.dither_fractions.len() => {
                // Cross-check the headline measurement against the integer.
                let n = candidates[0];
                let implied = (red_center - measured) / shift_per_order;
                if (implied - f64::from(n)).abs() > 0.25 {
                    return Err(Error::Undetermined(format!(
                        "shift at the final dither implies order {implied:.2}, \
                         inconsistent with surviving candidate {n}"
                    )));
                }
                return Ok(n);
            }
            _ => {}
        }
    }
    Err(Error::Undetermined(format!(
        "{} comb orders remain consistent after the full ladder",
        candidates.len()
    )))
}
