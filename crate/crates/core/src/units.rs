//! Hartree atomic units and conversions from the laboratory units used in
//! configuration files.
//!
//! Internally ħ = m = 1 and the electron charge is e0 = -1.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Reduced Planck constant.
pub const HBAR: f64 = 1.0;
/// Electron mass.
pub const M_E: f64 = 1.0;
/// Electron charge. Negative.
pub const E0: f64 = -1.0;

/// Speed of light in atomic units (CODATA 2018).
pub const SPEED_OF_LIGHT: f64 = 137.035_999_084;

/// Bohr radii per nanometre (a0 = 0.052 917 721 090 3 nm).
pub const BOHR_PER_NM: f64 = 1.0 / 0.052_917_721_090_3;
/// Hartree per electronvolt (Eh = 27.211 386 245 988 eV).
pub const HARTREE_PER_EV: f64 = 1.0 / 27.211_386_245_988;
/// Atomic time units per femtosecond (1 a.u. = 0.024 188 843 265 857 fs).
pub const AU_TIME_PER_FS: f64 = 1.0 / 0.024_188_843_265_857;
/// Atomic field units per GV/m (1 a.u. = 514.220 674 763 GV/m).
pub const AU_FIELD_PER_GVM: f64 = 1.0 / 514.220_674_763;

/// The fixed physical constants, bundled for callers that want them as a value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub hbar: f64,
    pub m_e: f64,
    pub e0: f64,
    pub bohr_per_nm: f64,
    pub hartree_per_ev: f64,
    pub au_time_per_fs: f64,
    pub au_field_per_gvm: f64,
}

pub const CONSTANTS: Constants = Constants {
    hbar: HBAR,
    m_e: M_E,
    e0: E0,
    bohr_per_nm: BOHR_PER_NM,
    hartree_per_ev: HARTREE_PER_EV,
    au_time_per_fs: AU_TIME_PER_FS,
    au_field_per_gvm: AU_FIELD_PER_GVM,
};

/// External unit tags accepted at the configuration boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Nanometre,
    Micrometre,
    ElectronVolt,
    Femtosecond,
    GigaVoltPerMetre,
}

impl Unit {
    /// Internal units per one external unit.
    pub fn factor(self) -> f64 {
        match self {
            Unit::Nanometre => BOHR_PER_NM,
            Unit::Micrometre => 1.0e3 * BOHR_PER_NM,
            Unit::ElectronVolt => HARTREE_PER_EV,
            Unit::Femtosecond => AU_TIME_PER_FS,
            Unit::GigaVoltPerMetre => AU_FIELD_PER_GVM,
        }
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(tag: &str) -> Result<Self> {
        match tag {
            "nm" => Ok(Unit::Nanometre),
            "um" | "μm" | "µm" => Ok(Unit::Micrometre),
            "eV" => Ok(Unit::ElectronVolt),
            "fs" => Ok(Unit::Femtosecond),
            "GV/m" => Ok(Unit::GigaVoltPerMetre),
            other => Err(Error::UnknownUnit(other.to_string())),
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self {
            Unit::Nanometre => "nm",
            Unit::Micrometre => "μm",
            Unit::ElectronVolt => "eV",
            Unit::Femtosecond => "fs",
            Unit::GigaVoltPerMetre => "GV/m",
        };
        f.write_str(tag)
    }
}

pub fn to_internal(value: f64, unit: Unit) -> f64 {
    value * unit.factor()
}

pub fn from_internal(value: f64, unit: Unit) -> f64 {
    value / unit.factor()
}

/// Convert using a textual unit tag.
pub fn to_internal_tagged(value: f64, tag: &str) -> Result<f64> {
    Ok(to_internal(value, tag.parse()?))
}

pub fn ev(value: f64) -> f64 {
    to_internal(value, Unit::ElectronVolt)
}

pub fn hartree_to_ev(value: f64) -> f64 {
    from_internal(value, Unit::ElectronVolt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const ALL: [Unit; 5] = [
        Unit::Nanometre,
        Unit::Micrometre,
        Unit::ElectronVolt,
        Unit::Femtosecond,
        Unit::GigaVoltPerMetre,
    ];

    #[test]
    fn lattice_constant_in_bohr() {
        assert_relative_eq!(to_internal(0.5, Unit::Nanometre), 9.44863, max_relative = 1e-6);
    }

    #[test]
    fn gap_in_hartree() {
        // 3.2 / 27.211386245988
        assert_relative_eq!(ev(3.2), 0.117_597_83, max_relative = 1e-7);
    }

    #[test]
    fn zero_maps_to_zero() {
        for u in ALL {
            assert_eq!(to_internal(0.0, u), 0.0);
        }
    }

    #[test]
    fn unknown_tag_rejected() {
        assert!(matches!(to_internal_tagged(1.0, "furlong"), Err(Error::UnknownUnit(_))));
        assert_eq!(to_internal_tagged(1.0, "fs").unwrap(), AU_TIME_PER_FS);
    }

    #[test]
    fn electron_charge_is_negative() {
        assert!(CONSTANTS.e0 < 0.0);
    }

    proptest! {
        #[test]
        fn round_trip(x in -1.0e6f64..1.0e6, idx in 0usize..5) {
            let u = ALL[idx];
            let back = from_internal(to_internal(x, u), u);
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(f64::MIN_POSITIVE));
        }
    }
}
