//! Model crystal potentials and their lattice-periodic samples.
//!
//! Two attractive model potentials are provided: a pair of windowed `cos²`
//! wells (`V1`) and a single `tanh`-shaped well (`V2`). Both are defined for a
//! single centre cell and made a-periodic by summing lattice images.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::units::{self, hartree_to_ev};
use crate::{Error, Result};

/// Smallest real-space grid accepted anywhere in the crate.
pub const MIN_GRID_POINTS: usize = 8;

const IMAGE_TAIL_TOLERANCE: f64 = 1e-12;
const MAX_IMAGES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    V1,
    V2,
    /// V = 0; free-electron reference.
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    /// Well depth parameter (Hartree), positive.
    pub depth: f64,
    /// Lattice constant (Bohr).
    pub a: f64,
    /// Well centres of V1 (Bohr), inside (-a/2, a/2).
    pub centers: Vec<f64>,
    /// Length L of the V1 window: each well is `cos²(π (x - c) / L)` for
    /// `|x - c| <= L/2` and zero beyond.
    pub width: f64,
    /// V2 offset parameter (Bohr).
    pub x0: f64,
    /// Multiplies `depth`; the knob tuned by [`calibrate_gap`].
    pub depth_scale: f64,
}

impl PotentialSpec {
    /// Two wells at -0.2a and 0.107a, 25 eV deep, window length 15 Bohr.
    pub fn v1(a: f64) -> Self {
        Self {
            kind: PotentialKind::V1,
            depth: units::ev(25.0),
            a,
            centers: vec![-0.2 * a, 0.107 * a],
            width: 15.0,
            x0: 0.2475,
            depth_scale: 1.0,
        }
    }

    pub fn v2(a: f64) -> Self {
        Self {
            kind: PotentialKind::V2,
            ..Self::v1(a)
        }
    }

    pub fn free(a: f64) -> Self {
        Self {
            kind: PotentialKind::Free,
            ..Self::v1(a)
        }
    }

    pub fn with_depth_scale(mut self, depth_scale: f64) -> Self {
        self.depth_scale = depth_scale;
        self
    }

    pub fn effective_depth(&self) -> f64 {
        self.depth * self.depth_scale
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::Potential(format!("lattice constant must be positive, got {}", self.a)));
        }
        if self.kind != PotentialKind::Free && !(self.depth > 0.0 && self.depth.is_finite()) {
            return Err(Error::Potential(format!("depth must be positive, got {}", self.depth)));
        }
        if !(self.depth_scale > 0.0 && self.depth_scale.is_finite()) {
            return Err(Error::Potential(format!("depth scale must be positive, got {}", self.depth_scale)));
        }
        if self.kind == PotentialKind::V1 {
            if self.centers.is_empty() {
                return Err(Error::Potential("V1 needs at least one centre".into()));
            }
            if let Some(c) = self.centers.iter().find(|c| c.abs() >= 0.5 * self.a) {
                return Err(Error::Potential(format!("V1 centre {c} outside the unit cell")));
            }
            if !(self.width > 0.0) {
                return Err(Error::Potential(format!("V1 window length must be positive, got {}", self.width)));
            }
        }
        Ok(())
    }

    /// Single-cell (non-periodized) potential at `x`.
    pub fn eval_cell(&self, x: f64) -> f64 {
        match self.kind {
            PotentialKind::V1 => eval_cell_v1(x, self),
            PotentialKind::V2 => eval_cell_v2(x, self),
            PotentialKind::Free => 0.0,
        }
    }

    /// Number of lattice images on each side needed for the omitted tail to
    /// stay below `1e-12 * depth`, plus one so that `x + a` is covered too.
    pub fn image_count(&self) -> Result<usize> {
        match self.kind {
            PotentialKind::Free => Ok(0),
            PotentialKind::V1 => {
                let reach = 0.5 * self.width + 0.5 * self.a
                    + self.centers.iter().fold(0.0f64, |m, c| m.max(c.abs()));
                // one spare image so shifted arguments x + a stay covered
                Ok((reach / self.a).ceil() as usize + 1)
            }
            PotentialKind::V2 => {
                // |V2(x)| <= 4 depth exp(-2(|x| - x0)); geometric tail over images.
                let ratio = (-2.0 * self.a).exp();
                for j in 0..MAX_IMAGES {
                    let nearest = (j as f64 + 1.0) * self.a - 0.5 * self.a;
                    let tail = 2.0 * 4.0 * (-2.0 * (nearest - self.x0)).exp() / (1.0 - ratio);
                    if tail < IMAGE_TAIL_TOLERANCE {
                        return Ok(j + 1);
                    }
                }
                Err(Error::Potential("image sum does not converge".into()))
            }
        }
    }

    /// Lattice-periodic potential at an arbitrary position.
    pub fn periodized_at(&self, x: f64, images: usize) -> f64 {
        let j = images as i64;
        (-j..=j)
            .map(|r| self.eval_cell(x - r as f64 * self.a))
            .sum()
    }
}

fn cos2_window(y: f64, length: f64) -> f64 {
    let arg = PI * y / length;
    if arg.abs() <= 0.5 * PI {
        arg.cos().powi(2)
    } else {
        0.0
    }
}

/// `-depth · Σ_c cos²[π(x - c)/L]`, each window zero outside `[-π/2, π/2]`.
pub fn eval_cell_v1(x: f64, spec: &PotentialSpec) -> f64 {
    let depth = spec.effective_depth();
    spec.centers
        .iter()
        .map(|&c| -depth * cos2_window(x - c, spec.width))
        .sum()
}

/// `-depth · [1 + tanh(x + x0)] · [1 + tanh(-x + x0)]`, x in Bohr.
pub fn eval_cell_v2(x: f64, spec: &PotentialSpec) -> f64 {
    let depth = spec.effective_depth();
    -depth * ((1.0 + (x + spec.x0).tanh()) * (1.0 + (-x + spec.x0).tanh()))
}

/// Periodic potential sampled on the unit-cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSamples {
    pub a: f64,
    /// `x_m = (2m - N) a / (2N)`, i.e. N points covering [-a/2, a/2).
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl PotentialSamples {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Unit-cell grid `x_m = (2m - N) a / (2N)`; exactly symmetric under
/// `m -> N - m`.
pub fn cell_grid(a: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|m| (2.0 * m as f64 - n as f64) * a / (2.0 * n as f64))
        .collect()
}

pub fn periodize(spec: &PotentialSpec, n: usize) -> Result<PotentialSamples> {
    spec.validate()?;
    if n < MIN_GRID_POINTS {
        return Err(Error::Potential(format!("grid needs at least {MIN_GRID_POINTS} points, got {n}")));
    }
    let images = spec.image_count()?;
    let grid = cell_grid(spec.a, n);
    let values: Vec<f64> = grid.iter().map(|&x| spec.periodized_at(x, images)).collect();
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Potential(format!("non-finite potential sample {v}")));
    }
    Ok(PotentialSamples {
        a: spec.a,
        grid,
        values,
    })
}

/// Outcome of a depth calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub depth_scale: f64,
    pub raw_gap_ev: f64,
    pub calibrated_gap_ev: f64,
    pub iterations: usize,
}

pub const CALIBRATION_SCALE_RANGE: (f64, f64) = (0.25, 4.0);
/// Calibration stops once the gap is this close to the target (eV).
pub const CALIBRATION_TOLERANCE_EV: f64 = 1e-4;

/// Bisect `depth_scale` in [0.25, 4] until the direct gap reported by
/// `gap_of` (Hartree) matches `target_gap` (Hartree).
pub fn calibrate_gap<F>(spec: &PotentialSpec, target_gap: f64, mut gap_of: F) -> Result<(PotentialSpec, Calibration)>
where
    F: FnMut(&PotentialSpec) -> Result<f64>,
{
    if !(target_gap > 0.0) {
        return Err(Error::Potential(format!("target gap must be positive, got {target_gap}")));
    }
    let tol = units::ev(CALIBRATION_TOLERANCE_EV);
    let raw = gap_of(spec)?;
    if (raw - target_gap).abs() <= tol {
        let cal = Calibration {
            depth_scale: spec.depth_scale,
            raw_gap_ev: hartree_to_ev(raw),
            calibrated_gap_ev: hartree_to_ev(raw),
            iterations: 0,
        };
        return Ok((spec.clone(), cal));
    }

    let (mut lo, mut hi) = CALIBRATION_SCALE_RANGE;
    let g_lo = gap_of(&spec.clone().with_depth_scale(lo))? - target_gap;
    let g_hi = gap_of(&spec.clone().with_depth_scale(hi))? - target_gap;
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::GapNotBracketed {
            target_ev: hartree_to_ev(target_gap),
            lo,
            hi,
            gap_lo_ev: hartree_to_ev(g_lo + target_gap),
            gap_hi_ev: hartree_to_ev(g_hi + target_gap),
        });
    }
    let increasing = g_hi > g_lo;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let candidate = spec.clone().with_depth_scale(mid);
        let gap = gap_of(&candidate)?;
        let resid = gap - target_gap;
        if resid.abs() <= tol || iterations >= 80 {
            if resid.abs() > tol {
                return Err(Error::Potential(format!(
                    "calibration stalled at depth scale {mid} with gap {} eV",
                    hartree_to_ev(gap)
                )));
            }
            let cal = Calibration {
                depth_scale: mid,
                raw_gap_ev: hartree_to_ev(raw),
                calibrated_gap_ev: hartree_to_ev(gap),
                iterations,
            };
            return Ok((candidate, cal));
        }
        if (resid > 0.0) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}
