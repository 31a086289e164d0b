//! TOML run configuration: schema, named presets, `key=value` overrides, and
//! resolution into a concrete [`TrajectorySetup`] plus scenario.
//!
//! Resolution is a fixed point: `resolve` produces a canonical configuration
//! with every preset expanded and every default written out, and resolving
//! that canonical form again yields the same experiment bit for bit. The
//! canonical text is what a run persists, so a replay never depends on
//! defaults that may have changed since.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::crystal::{CrystalSpec, Mode};
use crate::dynamics::{CycleTiming, InitialState, NoiseModel, TrajectorySetup};
use crate::error::{Error, Result};
use crate::molecule::{CombDrive, RotorModel, SelectionRule, ThermalEnvironment};
use crate::protocols::ProtocolConfig;

/// Top-level schema of a run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub crystal: CrystalSection,
    pub molecule: MoleculeSection,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub comb: CombSection,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub timing: CycleTiming,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    pub scenario: Scenario,
    #[serde(default)]
    pub run: RunSection,
}

/// Two-ion crystal: either a named preset, explicit values, or a preset with
/// individual fields overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CrystalSection {
    /// `"mgh_mg"`: a 24MgH+ molecular ion co-trapped with 24Mg+.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atom_mass_amu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub molecule_mass_amu: Option<f64>,
    /// Axial frequency of the atomic ion alone in the trap, cyclic Hz.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atom_trap_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MoleculeSection {
    /// `"mgh"`: 24MgH+ in its rovibronic ground manifold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection_rule: Option<SelectionRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dipole_e_a0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resonance_wavelength_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_max: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSection {
    pub temperature_k: f64,
    /// Rotational rethermalization time constant, s; `inf` freezes J.
    pub rethermalization_tau_s: f64,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        Self { temperature_k: 300.0, rethermalization_tau_s: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CombSection {
    /// `"comb_1ghz_800nm"`: 1 GHz repetition rate, 800 nm center, 30 THz
    /// span, 1 W per comb focused to 20 um.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_wavelength_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_per_comb_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beam_waist_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span_hz: Option<f64>,
    /// Normal mode the transfer beams address.
    pub addressed_mode: Mode,
}

impl Default for CombSection {
    fn default() -> Self {
        Self {
            preset: None,
            spacing_hz: None,
            offset_hz: None,
            center_wavelength_m: None,
            power_per_comb_w: None,
            beam_waist_m: None,
            span_hz: None,
            addressed_mode: Mode::Minus,
        }
    }
}

/// What the run actually does with the apparatus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// Blind sweep, localization, comb orders, revisits; the found lines are
    /// then deconvoluted and fitted against the configured truth.
    FullScan,
    /// Single projective measurement of J starting from a thermal prior.
    Projection,
    /// Projective measurement followed by pumping to the rotational ground
    /// state.
    GroundPump,
    /// Repeated non-destructive readout against a hypothesis level.
    QndReadout { j_hypothesis: u32 },
    /// Rabi-rate measurement on the red sideband out of `j_upper`.
    RateMeasurement {
        j_upper: u32,
        /// Explicit pulse-duration grid, s; omit to use an even grid.
        #[serde(skip_serializing_if = "Option::is_none")]
        durations_s: Option<Vec<f64>>,
        /// Number of grid points when `durations_s` is omitted.
        #[serde(skip_serializing_if = "Option::is_none")]
        points: Option<u32>,
        /// Longest pulse of the generated grid, s.
        #[serde(skip_serializing_if = "Option::is_none")]
        max_duration_s: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LogMode {
    /// Every pulse, transfer, detection, and reset as one JSONL event.
    Full,
    /// Protocol notes and per-trial statistics only.
    #[default]
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub trials: u32,
    pub logging: LogMode,
    /// Output directory; the CLI `--out` flag takes precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    /// Pin the initial rotational state instead of drawing it thermally.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_j: Option<u32>,
    /// Line-matching window is `factor / duration` in cyclic Hz.
    pub fourier_window_factor: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 1,
            logging: LogMode::Summary,
            out: None,
            initial_j: None,
            fourier_window_factor: 1.0,
        }
    }
}

fn config_err(section: &str, e: Error) -> Error {
    Error::Config(format!("[{section}] {e}"))
}

impl CrystalSection {
    fn canonical(&self) -> Result<Self> {
        let base = match self.preset.as_deref() {
            None => Self::default(),
            Some("mgh_mg") => Self {
                preset: None,
                atom_mass_amu: Some(23.985),
                molecule_mass_amu: Some(24.993),
                atom_trap_hz: Some(1e6),
            },
            Some(other) => {
                return Err(Error::Config(format!(
                    "[crystal] unknown preset {other:?}; known: \"mgh_mg\""
                )))
            }
        };
        let merged = Self {
            preset: None,
            atom_mass_amu: self.atom_mass_amu.or(base.atom_mass_amu),
            molecule_mass_amu: self.molecule_mass_amu.or(base.molecule_mass_amu),
            atom_trap_hz: self.atom_trap_hz.or(base.atom_trap_hz),
        };
        for (name, v) in [
            ("atom_mass_amu", merged.atom_mass_amu),
            ("molecule_mass_amu", merged.molecule_mass_amu),
            ("atom_trap_hz", merged.atom_trap_hz),
        ] {
            if v.is_none() {
                return Err(Error::Config(format!(
                    "[crystal] {name} is required unless a preset supplies it"
                )));
            }
        }
        Ok(merged)
    }

    fn build(&self) -> Result<CrystalSpec> {
        CrystalSpec::from_amu(
            self.atom_mass_amu.unwrap(),
            self.molecule_mass_amu.unwrap(),
            self.atom_trap_hz.unwrap(),
        )
        .map_err(|e| config_err("crystal", e))
    }
}

impl MoleculeSection {
    fn canonical(&self) -> Result<Self> {
        let base = match self.preset.as_deref() {
            None => Self::default(),
            Some("mgh") => Self {
                preset: None,
                b_hz: Some(190e9),
                d_hz: Some(10e6),
                selection_rule: Some(SelectionRule::DeltaJ2Only),
                dipole_e_a0: Some(1.57),
                resonance_wavelength_m: Some(280e-9),
                j_max: Some(30),
            },
            Some(other) => {
                return Err(Error::Config(format!(
                    "[molecule] unknown preset {other:?}; known: \"mgh\""
                )))
            }
        };
        let merged = Self {
            preset: None,
            b_hz: self.b_hz.or(base.b_hz),
            d_hz: self.d_hz.or(base.d_hz),
            selection_rule: self.selection_rule.or(base.selection_rule),
            dipole_e_a0: self.dipole_e_a0.or(base.dipole_e_a0),
            resonance_wavelength_m: self.resonance_wavelength_m.or(base.resonance_wavelength_m),
            j_max: self.j_max.or(base.j_max),
        };
        if merged.b_hz.is_none()
            || merged.d_hz.is_none()
            || merged.selection_rule.is_none()
            || merged.dipole_e_a0.is_none()
            || merged.resonance_wavelength_m.is_none()
            || merged.j_max.is_none()
        {
            return Err(Error::Config(
                "[molecule] all of b_hz, d_hz, selection_rule, dipole_e_a0, \
                 resonance_wavelength_m, j_max are required unless a preset supplies them"
                    .into(),
            ));
        }
        Ok(merged)
    }

    fn build(&self) -> Result<RotorModel> {
        RotorModel::new(
            self.b_hz.unwrap(),
            self.d_hz.unwrap(),
            self.selection_rule.unwrap(),
            self.dipole_e_a0.unwrap(),
            self.resonance_wavelength_m.unwrap(),
            self.j_max.unwrap(),
        )
        .map_err(|e| config_err("molecule", e))
    }
}

impl CombSection {
    fn canonical(&self) -> Result<Self> {
        // A section with nothing but the addressed mode means the standard
        // comb.
        let no_values = self.spacing_hz.is_none()
            && self.offset_hz.is_none()
            && self.center_wavelength_m.is_none()
            && self.power_per_comb_w.is_none()
            && self.beam_waist_m.is_none()
            && self.span_hz.is_none();
        let preset = match &self.preset {
            Some(p) => Some(p.as_str()),
            None if no_values => Some("comb_1ghz_800nm"),
            None => None,
        };
        let base = match preset {
            None => Self::default(),
            Some("comb_1ghz_800nm") => Self {
                preset: None,
                spacing_hz: Some(1e9),
                offset_hz: Some(0.0),
                center_wavelength_m: Some(800e-9),
                power_per_comb_w: Some(1.0),
                beam_waist_m: Some(20e-6),
                span_hz: Some(30e12),
                addressed_mode: self.addressed_mode,
            },
            Some(other) => {
                return Err(Error::Config(format!(
                    "[comb] unknown preset {other:?}; known: \"comb_1ghz_800nm\""
                )))
            }
        };
        let merged = Self {
            preset: None,
            spacing_hz: self.spacing_hz.or(base.spacing_hz),
            offset_hz: self.offset_hz.or(base.offset_hz),
            center_wavelength_m: self.center_wavelength_m.or(base.center_wavelength_m),
            power_per_comb_w: self.power_per_comb_w.or(base.power_per_comb_w),
            beam_waist_m: self.beam_waist_m.or(base.beam_waist_m),
            span_hz: self.span_hz.or(base.span_hz),
            addressed_mode: self.addressed_mode,
        };
        if merged.spacing_hz.is_none()
            || merged.offset_hz.is_none()
            || merged.center_wavelength_m.is_none()
            || merged.power_per_comb_w.is_none()
            || merged.beam_waist_m.is_none()
            || merged.span_hz.is_none()
        {
            return Err(Error::Config(
                "[comb] all of spacing_hz, offset_hz, center_wavelength_m, power_per_comb_w, \
                 beam_waist_m, span_hz are required unless a preset supplies them"
                    .into(),
            ));
        }
        Ok(merged)
    }

    fn build(&self) -> Result<CombDrive> {
        CombDrive::new(
            TAU * self.spacing_hz.unwrap(),
            TAU * self.offset_hz.unwrap(),
            self.center_wavelength_m.unwrap(),
            self.power_per_comb_w.unwrap(),
            self.beam_waist_m.unwrap(),
            self.span_hz.unwrap(),
        )
        .map_err(|e| config_err("comb", e))
    }
}

/// A fully resolved experiment, ready to run.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    /// The canonical configuration: presets expanded, defaults written out.
    pub canonical: ExperimentConfig,
    pub setup: TrajectorySetup,
    pub scenario: Scenario,
    pub run: RunSection,
}

impl ExperimentConfig {
    /// Parses a configuration, applying `key=value` overrides on the raw
    /// document before schema validation.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value = text
            .parse::<toml::Table>()
            .map_err(|e| Error::Config(format!("config parse error: {e}")))?
            .into();
        for entry in overrides {
            apply_override(&mut value, entry)?;
        }
        Self::deserialize(value).map_err(|e| Error::Config(format!("config schema error: {e}")))
    }

    /// Expands presets, fills defaults, validates everything, and builds the
    /// simulator setup.
    pub fn resolve(&self) -> Result<ResolvedExperiment> {
        let crystal = self.crystal.canonical()?;
        let molecule = self.molecule.canonical()?;
        let comb = self.comb.canonical()?;
        let env = ThermalEnvironment::new(
            self.environment.temperature_k,
            self.environment.rethermalization_tau_s,
        )
        .map_err(|e| config_err("environment", e))?;
        self.noise.validate().map_err(|e| config_err("noise", e))?;
        self.timing.validate().map_err(|e| config_err("timing", e))?;
        self.protocol.validate().map_err(|e| config_err("protocol", e))?;
        if self.run.trials == 0 {
            return Err(Error::Config("[run] trials must be at least 1".into()));
        }
        match &self.scenario {
            Scenario::RateMeasurement { durations_s: Some(d), .. } if d.len() < 4 => {
                return Err(Error::Config(
                    "[scenario] durations_s needs at least four points".into(),
                ));
            }
            Scenario::RateMeasurement { points: Some(p), .. } if *p < 4 => {
                return Err(Error::Config("[scenario] points must be at least 4".into()));
            }
            _ => {}
        }
        let initial = match self.run.initial_j {
            None => InitialState::Thermal,
            Some(j) => InitialState::Fixed(j),
        };
        let setup = TrajectorySetup {
            crystal: crystal.build()?,
            model: molecule.build()?,
            env,
            drive: comb.build()?,
            noise: self.noise,
            timing: self.timing,
            selected_mode: comb.addressed_mode,
            fourier_window_factor: self.run.fourier_window_factor,
            initial,
        };
        setup.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(j) = self.run.initial_j {
            if j > setup.model.j_max {
                return Err(Error::Config(format!(
                    "[run] initial_j = {j} exceeds the molecule's j_max = {}",
                    setup.model.j_max
                )));
            }
        }
        let canonical = ExperimentConfig {
            crystal,
            molecule,
            environment: self.environment.clone(),
            comb,
            noise: self.noise,
            timing: self.timing,
            protocol: self.protocol.clone(),
            scenario: self.scenario.clone(),
            run: self.run.clone(),
        };
        Ok(ResolvedExperiment {
            canonical,
            setup,
            scenario: self.scenario.clone(),
            run: self.run.clone(),
        })
    }

    /// Serializes the configuration as TOML text.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Applies one `path.to.key=value` override to a parsed TOML document.
fn apply_override(root: &mut toml::Value, entry: &str) -> Result<()> {
    let (path, raw) = entry.split_once('=').ok_or_else(|| {
        Error::Config(format!("override {entry:?} is not of the form key=value"))
    })?;
    let path = path.trim();
    if path.is_empty() {
        return Err(Error::Config(format!("override {entry:?} has an empty key")));
    }
    // Parse the value as a TOML literal; bare words fall back to strings.
    let parsed: toml::Value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| {
            Error::Config(format!("override {entry:?}: {part} is not a table"))
        })?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("override {entry:?} targets a non-table")))?;
    table.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [crystal]
        preset = "mgh_mg"
        [molecule]
        preset = "mgh"
        [scenario]
        kind = "full_scan"
    "#;

    #[test]
    fn minimal_config_resolves_to_presets() {
        let config = ExperimentConfig::from_toml(MINIMAL, &[]).unwrap();
        let resolved = config.resolve().unwrap();
        let reference = TrajectorySetup::mgh_defaults();
        assert_eq!(resolved.setup.crystal.m_atom_kg, reference.crystal.m_atom_kg);
        assert_eq!(resolved.setup.model.b_hz, reference.model.b_hz);
        assert_eq!(resolved.setup.drive.omega_m, reference.drive.omega_m);
        assert_eq!(resolved.setup.noise, reference.noise);
        assert_eq!(resolved.run.seed, 0);
    }

    #[test]
    fn canonical_form_is_a_fixed_point() {
        let config = ExperimentConfig::from_toml(MINIMAL, &[]).unwrap();
        let resolved = config.resolve().unwrap();
        let text = resolved.canonical.to_toml();
        let reparsed = ExperimentConfig::from_toml(&text, &[]).unwrap();
        assert_eq!(reparsed, resolved.canonical);
        let re_resolved = reparsed.resolve().unwrap();
        assert_eq!(re_resolved.canonical, resolved.canonical);
        assert_eq!(re_resolved.setup.drive.omega_m, resolved.setup.drive.omega_m);
    }

    #[test]
    fn unknown_field_is_rejected_by_name() {
        let text = format!("{MINIMAL}\n[environment]\ntemperatur_k = 300.0\n");
        let err = ExperimentConfig::from_toml(&text, &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("temperatur_k"), "{err}");
    }

    #[test]
    fn missing_section_is_rejected_by_name() {
        let err = ExperimentConfig::from_toml(
            "[crystal]\npreset = \"mgh_mg\"\n[scenario]\nkind = \"full_scan\"\n",
            &[],
        )
        .unwrap_err();
        assert!(err.to_string().contains("molecule"), "{err}");
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let config = ExperimentConfig::from_toml(
            MINIMAL,
            &[
                "run.seed=42".into(),
                "noise.detection_fidelity_bright=0.95".into(),
                "molecule.b_hz=2e11".into(),
                "comb.addressed_mode=plus".into(),
            ],
        )
        .unwrap();
        assert_eq!(config.run.seed, 42);
        assert_eq!(config.noise.detection_fidelity_bright, 0.95);
        assert_eq!(config.molecule.b_hz, Some(2e11));
        assert_eq!(config.comb.addressed_mode, Mode::Plus);
    }

    #[test]
    fn preset_with_tweak_keeps_other_fields() {
        let text = r#"
            [crystal]
            preset = "mgh_mg"
            atom_trap_hz = 2e6
            [molecule]
            preset = "mgh"
            [scenario]
            kind = "projection"
        "#;
        let resolved = ExperimentConfig::from_toml(text, &[]).unwrap().resolve().unwrap();
        assert_eq!(resolved.setup.crystal.omega_atom, TAU * 2e6);
        assert_eq!(resolved.canonical.crystal.atom_mass_amu, Some(23.985));
    }

    #[test]
    fn bad_override_value_is_a_config_error() {
        let err = ExperimentConfig::from_toml(MINIMAL, &["run.seed=not_a_number".into()])
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn infinite_tau_is_accepted() {
        let text = format!("{MINIMAL}\n[environment]\nrethermalization_tau_s = inf\n");
        let resolved = ExperimentConfig::from_toml(&text, &[]).unwrap().resolve().unwrap();
        assert!(resolved.setup.env.rethermalization_tau_s.is_infinite());
        // And it survives the canonical round trip.
        let text2 = resolved.canonical.to_toml();
        let again = ExperimentConfig::from_toml(&text2, &[]).unwrap().resolve().unwrap();
        assert!(again.setup.env.rethermalization_tau_s.is_infinite());
    }

    #[test]
    fn initial_j_beyond_model_is_rejected() {
        let err = ExperimentConfig::from_toml(MINIMAL, &["run.initial_j=99".into()])
            .unwrap_err_resolve();
        assert!(matches!(err, Error::Config(_)));
    }

    trait ResolveErr {
        fn unwrap_err_resolve(self) -> Error;
    }
    impl ResolveErr for Result<ExperimentConfig> {
        fn unwrap_err_resolve(self) -> Error {
            self.unwrap().resolve().unwrap_err()
        }
    }
}
