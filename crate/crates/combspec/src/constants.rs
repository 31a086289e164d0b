//! Physical constants (CODATA 2018).
//!
//! All simulator physics routes through this single set of values so that a
//! run is reproducible down to the constant set it was computed with.

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Planck constant, J s.
pub const H: f64 = 6.626_070_15e-34;

/// Boltzmann constant, J/K.
pub const KB: f64 = 1.380_649e-23;

/// Elementary charge, C.
pub const E_CHARGE: f64 = 1.602_176_634e-19;

/// Bohr radius, m.
pub const A0: f64 = 5.291_772_109_03e-11;

/// Speed of light in vacuum, m/s.
pub const C_LIGHT: f64 = 2.997_924_58e8;

/// Vacuum permittivity, F/m.
pub const EPSILON0: f64 = 8.854_187_812_8e-12;

/// Atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;

/// One atomic unit of electric dipole moment (e times a0), C m.
pub const E_A0: f64 = E_CHARGE * A0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dipole_unit_magnitude() {
        // e*a0 is about 8.48e-30 C m
        assert!((E_A0 - 8.478e-30).abs() < 0.01e-30);
    }

    #[test]
    fn boltzmann_over_planck_scale() {
        // kB/h at 300 K corresponds to about 6.25 THz
        let f = KB * 300.0 / H;
        assert!((f / 6.25e12 - 1.0).abs() < 0.01);
    }
}
