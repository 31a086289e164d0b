//! Temporary debug driver: dump the resonance table and check sweep-grid
//! response statistics at a stacked residue. Delete before release.

use std::f64::consts::TAU;

use combspec::config::ExperimentConfig;
use combspec::dynamics::{Apparatus, PulseSpec, Trajectory};
use combspec::event::NullSink;
use combspec::molecule::resonance_offsets;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn probe(app: &mut dyn Apparatus, offset: f64, dur: f64) -> bool {
    let mode = app.selected_mode();
    app.raman_pulse(&PulseSpec { delta_omega_o: offset, duration_s: dur, mode })
        .unwrap();
    app.sideband_transfer().unwrap();
    let mut dark = !app.detect_bright().unwrap();
    if dark {
        for _ in 0..2 {
            if app.detect_bright().unwrap() {
                dark = false;
                break;
            }
        }
    }
    app.reset().unwrap();
    dark
}

fn main() {
    let text = std::fs::read_to_string("configs/mgh_full_scan.toml").unwrap();
    let config = ExperimentConfig::from_toml(&text, &[]).unwrap();
    let resolved = config.resolve().unwrap();

    let setup = &resolved.setup;
    let modes = combspec::crystal::mode_structure(&setup.crystal, setup.drive.k_effective()).unwrap();
    let set = resonance_offsets(&setup.model, &setup.drive, &modes).unwrap();
    println!("lines: {}", set.lines.len());
    for l in &set.lines {
        let kind = match (l.n, l.mode) {
            (0, _) => "car",
            (-1, Some(m)) => {
                if format!("{m:?}") == "Minus" { "red-" } else { "red+" }
            }
            (1, Some(m)) => {
                if format!("{m:?}") == "Minus" { "blu-" } else { "blu+" }
            }
            _ => "?",
        };
        println!(
            "J {:>2}->{:>2} {kind} N {:>5} residue {:>14.1} Hz rate {:>9.1}",
            l.j_upper,
            l.j_lower,
            l.comb_order,
            l.delta_omega_o / TAU,
            l.rate_hz
        );
    }

    // Sweep-slice check: one continuous trajectory marching the grid exactly
    // like the sweep does (100 probes per point, no restores), across the
    // whole neighborhood of the 639.0104 MHz red stack.
    let rng = ChaCha8Rng::seed_from_u64(42);
    let mut traj = Trajectory::new(setup, rng, NullSink).unwrap();
    let app: &mut dyn Apparatus = &mut traj;
    let n_points = 400;
    let mut hits = Vec::new();
    for i in 0..n_points {
        let x = TAU * (637.5e6 + f64::from(i) * 1e4);
        let mut fires = 0u32;
        for _ in 0..100 {
            if probe(app, x, 1e-5) {
                fires += 1;
            }
        }
        if fires > 0 {
            hits.push((x / TAU / 1e6, fires));
        }
    }
    println!("sweep slice 637.5..641.5 MHz firing points: {hits:?}");
}
