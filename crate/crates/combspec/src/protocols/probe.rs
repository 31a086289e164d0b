//! Low-level probing moves shared by the protocols: single
//! pulse/transfer/detect/reset cycles, two-leg alternation, and centroid
//! localization of a line profile.

use crate::dynamics::{Apparatus, PulseSpec};
use crate::error::Result;

/// One full cycle at a comb offset: Raman pulse, sideband transfer, detection
/// with optional confirmation windows, then reset.
///
/// Returns true only when the first detection reads dark and every extra
/// confirmation window agrees. Fluorescence detection leaves the atomic state
/// untouched, so re-reading suppresses false darks without back-action.
pub(crate) fn probe_cycle(
    app: &mut dyn Apparatus,
    offset: f64,
    duration_s: f64,
    confirms: u32,
) -> Result<bool> {
    let mode = app.selected_mode();
    app.raman_pulse(&PulseSpec { delta_omega_o: offset, duration_s, mode })?;
    app.sideband_transfer()?;
    let mut dark = !app.detect_bright()?;
    if dark {
        for _ in 0..confirms {
            if app.detect_bright()? {
                dark = false;
                break;
            }
        }
    }
    app.reset()?;
    Ok(dark)
}

/// Alternates two legs that shuttle the molecule in opposite directions
/// (typically a red line and the matching blue line) and counts confirmed
/// fires on each. A real pair keeps responding because every fire re-arms the
/// other leg; an unrelated offset stays quiet.
pub(crate) fn alternate_fires(
    app: &mut dyn Apparatus,
    first_offset: f64,
    second_offset: f64,
    pairs: u32,
    duration_s: f64,
    confirms: u32,
) -> Result<(u32, u32)> {
    let mut first = 0;
    let mut second = 0;
    for _ in 0..pairs {
        if probe_cycle(app, first_offset, duration_s, confirms)? {
            first += 1;
        }
        if probe_cycle(app, second_offset, duration_s, confirms)? {
            second += 1;
        }
    }
    Ok((first, second))
}

/// Attempts to put the molecule back in the upper level of a pair by pulsing
/// the blue leg until a confirmed fire. Pulse lengths are staggered so a null
/// of the unknown Rabi oscillation cannot block the restore. The stagger
/// leans short: the matching window narrows as one over the duration, so a
/// longer pulse can push a detuned partner out of reach entirely, while a
/// shorter one keeps it reachable and shifts the Rabi phase.
pub(crate) fn restore_upper(
    app: &mut dyn Apparatus,
    blue_offset: f64,
    duration_s: f64,
    confirms: u32,
    attempts: u32,
) -> Result<bool> {
    const STAGGER: [f64; 6] = [1.0, 0.8, 0.6, 1.2, 0.9, 0.7];
    for k in 0..attempts as usize {
        let cycle = (k / STAGGER.len()) as f64;
        let stretched = duration_s * STAGGER[k % STAGGER.len()] * (1.0 + 0.03 * cycle);
        if probe_cycle(app, blue_offset, stretched, confirms)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Sweeps offsets in order, one probe cycle each, until a confirmed fire.
/// After a fire the molecule is restored upward via the leg two mode quanta
/// above the probe. Returns the offset that fired.
pub(crate) fn sweep_first_fire(
    app: &mut dyn Apparatus,
    offsets: impl IntoIterator<Item = f64>,
    two_omega: f64,
    duration_s: f64,
    confirms: u32,
    restore_attempts: u32,
) -> Result<Option<f64>> {
    for x in offsets {
        if probe_cycle(app, x, duration_s, confirms)? {
            restore_upper(app, x + two_omega, duration_s, confirms, restore_attempts)?;
            return Ok(Some(x));
        }
    }
    Ok(None)
}

/// Offsets spiraling outward from a center: 0, +1, -1, +2, -2, ... steps.
/// Center-out order keeps the sampling balanced if the molecule is lost to
/// rethermalization partway through.
pub(crate) fn center_out_offsets(center: f64, step: f64, half_points: u32) -> Vec<f64> {
    let mut xs = Vec::with_capacity(2 * half_points as usize + 1);
    xs.push(center);
    for k in 1..=half_points {
        let d = f64::from(k) * step;
        xs.push(center + d);
        xs.push(center - d);
    }
    xs
}

/// Measures the response profile of a red line around a guess and returns the
/// centroid of the fire rate, an unbiased estimate of the line center as long
/// as the sampled span covers the whole response. The molecule is armed into
/// the upper level on entry (a red probe from the lower level is silent, and
/// nothing inside the loop could lift it), and each fire is followed by a
/// restore on the leg two mode quanta up, so it keeps shuttling inside the
/// pair.
///
/// Returns `(center, fires)` or None when too few fires were collected to
/// trust the estimate (molecule lost, or no line here).
pub(crate) fn centroid_localize(
    app: &mut dyn Apparatus,
    red_guess: f64,
    two_omega: f64,
    span: f64,
    step: f64,
    pairs_per_offset: u32,
    duration_s: f64,
    confirms: u32,
) -> Result<Option<(f64, u32)>> {
    restore_upper(app, red_guess + two_omega, duration_s, confirms, 6)?;
    let half_points = (span / step).ceil() as u32;
    let offsets = center_out_offsets(red_guess, step, half_points);
    let mut weighted = 0.0;
    let mut fires_total = 0u32;
    let mut silent = 0u32;
    for &x in &offsets {
        for _ in 0..pairs_per_offset {
            if probe_cycle(app, x, duration_s, confirms)? {
                weighted += x - red_guess;
                fires_total += 1;
                silent = 0;
                restore_upper(app, x + two_omega, duration_s, confirms, 4)?;
            } else {
                silent += 1;
                if silent >= 9 {
                    // A dead stretch means a failed restore left the molecule
                    // in the lower level; lift it back through the partner.
                    restore_upper(app, red_guess + two_omega, duration_s, confirms, 6)?;
                    silent = 0;
                }
            }
        }
    }
    if fires_total < 5 {
        return Ok(None);
    }
    Ok(Some((red_guess + weighted / f64::from(fires_total), fires_total)))
}

/// Two-pass centroid localization: a cheap rough pass centers the sampling
/// span, a heavier second pass measures. The second pass matters because a
/// span clipped asymmetrically against the line profile biases a centroid;
/// re-centering first removes the clipping.
pub(crate) fn localize_two_pass(
    app: &mut dyn Apparatus,
    red_guess: f64,
    two_omega: f64,
    step: f64,
    duration_s: f64,
    confirms: u32,
    pairs_fine: u32,
) -> Result<Option<(f64, u32)>> {
    use std::f64::consts::TAU;
    let dbg = std::env::var_os("COMBSPEC_TRACE").is_some();
    let rough = centroid_localize(app, red_guess, two_omega, TAU * 150e3, step, 3, duration_s, confirms)?;
    if dbg {
        eprintln!("    rough pass at {:.4} MHz -> {:?}", red_guess / TAU / 1e6, rough.map(|(c, f)| (c / TAU / 1e6, f)));
    }
    let Some((center_rough, _)) = rough else { return Ok(None) };
    let fine = centroid_localize(
        app,
        center_rough,
        two_omega,
        TAU * 160e3,
        step,
        pairs_fine,
        duration_s,
        confirms,
    )?;
    if dbg {
        eprintln!("    fine pass at {:.4} MHz -> {:?}", center_rough / TAU / 1e6, fine.map(|(c, f)| (c / TAU / 1e6, f)));
    }
    Ok(fine)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_out_order() {
        let xs = center_out_offsets(10.0, 1.0, 2);
        assert_eq!(xs, vec![10.0, 11.0, 9.0, 12.0, 8.0]);
    }
}
