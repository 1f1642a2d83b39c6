//! Run configuration (TOML). Every field has a default; an empty file gives
//! the reference setup.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bloch::PhaseConvention;
use crate::potential::{PotentialKind, PotentialSpec, MIN_GRID_POINTS};
use crate::propagate::{EnsembleMode, Integrator, PropagationOptions};
use crate::pulse::PulseSpec;
use crate::units::{self, to_internal, Unit};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    pub kind: PotentialKind,
    pub depth_ev: f64,
    pub a_nm: f64,
    /// V1 well centres as fractions of `a`.
    pub centers: Vec<f64>,
    pub width_bohr: f64,
    pub x0_bohr: f64,
    pub calibrate: bool,
    pub target_gap_ev: f64,
    /// Fixed depth multiplier, used when `calibrate = false`.
    pub depth_scale: f64,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            kind: PotentialKind::V1,
            depth_ev: 25.0,
            a_nm: 0.5,
            centers: vec![-0.2, 0.107],
            width_bohr: 15.0,
            x0_bohr: 0.2475,
            calibrate: true,
            target_gap_ev: 3.2,
            depth_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Real-space samples per cell (= plane waves), `N`.
    pub n_grid: usize,
    /// k-points including both zone edges, `M`.
    pub n_k: usize,
    /// Bands kept, `N_b`.
    pub n_bands: usize,
    /// Occupied band, counted from 0.
    pub valence_band: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_grid: 256,
            n_k: 201,
            n_bands: 8,
            valence_band: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    pub wavelength_um: f64,
    pub duration_fs: f64,
    pub peak_field_gvm: f64,
    /// Vector-potential amplitude in atomic units; replaces `F0/ω`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude_au: Option<f64>,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            wavelength_um: 3.0,
            duration_fs: 300.0,
            peak_field_gvm: 1.0,
            amplitude_au: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub ensemble: EnsembleMode,
    pub steps_per_cycle: usize,
    pub integrator: Integrator,
    pub include_a_squared: bool,
    /// Worker threads; 0 uses the environment default.
    pub threads: usize,
    pub out_dir: PathBuf,
    /// Reserved; the physics is deterministic.
    pub seed: u64,
    pub phase_convention: PhaseConvention,
    /// Pass threshold for `δ_J`.
    pub gauge_tolerance: f64,
    pub spectrum_points: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            ensemble: EnsembleMode::SingleK,
            steps_per_cycle: crate::propagate::DEFAULT_STEPS_PER_CYCLE,
            integrator: Integrator::Magnus4,
            include_a_squared: true,
            threads: 0,
            out_dir: PathBuf::from("out"),
            seed: 0,
            phase_convention: PhaseConvention::MaxFourier,
            gauge_tolerance: 5e-2,
            spectrum_points: crate::observables::DEFAULT_SPECTRUM_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub bands: bool,
    pub matels: bool,
    pub currents: bool,
    pub spectrum: bool,
    pub gauge_report: bool,
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            bands: true,
            matels: true,
            currents: true,
            spectrum: true,
            gauge_report: true,
            svg: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialConfig,
    pub grid: GridConfig,
    pub pulse: PulseConfig,
    pub run: RunSection,
    pub output: OutputConfig,
}

fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Validation {
        field,
        reason: reason.into(),
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.potential;
        positive("potential.a_nm", p.a_nm)?;
        positive("potential.width_bohr", p.width_bohr)?;
        positive("potential.x0_bohr", p.x0_bohr)?;
        positive("potential.depth_scale", p.depth_scale)?;
        if p.kind != PotentialKind::Free {
            positive("potential.depth_ev", p.depth_ev)?;
        }
        if p.calibrate {
            positive("potential.target_gap_ev", p.target_gap_ev)?;
            if p.kind == PotentialKind::Free {
                return Err(invalid("potential.calibrate", "a free-electron potential has no gap to calibrate"));
            }
        }
        if p.kind == PotentialKind::V1 {
            if p.centers.is_empty() {
                return Err(invalid("potential.centers", "at least one centre is required"));
            }
            if let Some(c) = p.centers.iter().find(|c| !(c.abs() < 0.5)) {
                return Err(invalid("potential.centers", format!("{c} lies outside (-0.5, 0.5)")));
            }
        }

        let g = &self.grid;
        if g.n_grid < MIN_GRID_POINTS || !g.n_grid.is_multiple_of(2) {
            return Err(invalid("grid.n_grid", format!("must be even and at least {MIN_GRID_POINTS}, got {}", g.n_grid)));
        }
        if g.n_k < 8 {
            return Err(invalid("grid.n_k", format!("must be at least 8, got {}", g.n_k)));
        }
        if g.n_bands < 1 || g.n_bands > g.n_grid {
            return Err(invalid("grid.n_bands", format!("must lie in 1..={}, got {}", g.n_grid, g.n_bands)));
        }
        if g.valence_band + 1 >= g.n_bands {
            return Err(invalid("grid.valence_band", format!("needs a band above it among the {} kept", g.n_bands)));
        }
        if self.run.ensemble == EnsembleMode::SingleK && g.n_k.is_multiple_of(2) {
            return Err(invalid("grid.n_k", "single_k needs k = 0 on the grid (odd n_k)"));
        }

        let pl = &self.pulse;
        positive("pulse.wavelength_um", pl.wavelength_um)?;
        positive("pulse.duration_fs", pl.duration_fs)?;
        if !(pl.peak_field_gvm >= 0.0 && pl.peak_field_gvm.is_finite()) {
            return Err(invalid("pulse.peak_field_gvm", format!("must be non-negative, got {}", pl.peak_field_gvm)));
        }
        if let Some(a0) = pl.amplitude_au {
            if !(a0 >= 0.0 && a0.is_finite()) {
                return Err(invalid("pulse.amplitude_au", format!("must be non-negative, got {a0}")));
            }
        }

        let r = &self.run;
        if r.steps_per_cycle < 16 {
            return Err(invalid("run.steps_per_cycle", format!("must be at least 16, got {}", r.steps_per_cycle)));
        }
        positive("run.gauge_tolerance", r.gauge_tolerance)?;
        if r.spectrum_points < 64 {
            return Err(invalid("run.spectrum_points", format!("must be at least 64, got {}", r.spectrum_points)));
        }
        Ok(())
    }

    pub fn lattice_constant(&self) -> f64 {
        to_internal(self.potential.a_nm, Unit::Nanometre)
    }

    /// Potential before any calibration.
    pub fn potential_spec(&self) -> PotentialSpec {
        let p = &self.potential;
        let a = self.lattice_constant();
        PotentialSpec {
            kind: p.kind,
            depth: units::ev(p.depth_ev),
            a,
            centers: p.centers.iter().map(|f| f * a).collect(),
            width: p.width_bohr,
            x0: p.x0_bohr,
            depth_scale: p.depth_scale,
        }
    }

    pub fn pulse_spec(&self) -> PulseSpec {
        PulseSpec::new(
            to_internal(self.pulse.wavelength_um, Unit::Micrometre),
            to_internal(self.pulse.duration_fs, Unit::Femtosecond),
            to_internal(self.pulse.peak_field_gvm, Unit::GigaVoltPerMetre),
            self.pulse.amplitude_au,
        )
    }

    pub fn propagation_options(&self) -> PropagationOptions {
        PropagationOptions {
            steps_per_cycle: self.run.steps_per_cycle,
            integrator: self.run.integrator,
            include_a_squared: self.run.include_a_squared,
        }
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_toml(&text)
}
