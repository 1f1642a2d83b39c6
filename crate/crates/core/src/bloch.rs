//! Bloch eigenproblem on the discrete k-grid.
//!
//! The lattice-periodic parts `u_{n,k}` are expanded in the `N` plane waves
//! `e^{i G_j x}`, `G_j = 2πj/a`, `j = -N/2 .. N/2-1`, that live on the
//! `N`-point cell grid. In that basis the kinetic operator `(−i∂ + k)²/2` is
//! diagonal and the potential is the circulant matrix of its discrete Fourier
//! coefficients, so each `H(k)` is a dense Hermitian `N × N` matrix.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMat, ZERO};
use crate::potential::{PotentialSamples, MIN_GRID_POINTS};
use crate::units::{HBAR, M_E};
use crate::{Error, Result};

/// Relative spread within which plane-wave magnitudes count as tied.
const TIE_TOLERANCE: f64 = 1e-10;

/// Smallest real-space amplitude, relative to the peak, usable as a phase anchor.
const ANCHOR_FLOOR: f64 = 1e-3;

/// `k_m = -π/a + m·dk`, `m = 0..M-1`, `dk = 2π/(a(M-1))`. Both zone edges are
/// present; only the first `M-1` points are distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct KGrid {
    pub a: f64,
    pub dk: f64,
    pub points: Vec<f64>,
}

impl KGrid {
    pub fn new(a: f64, count: usize) -> Result<Self> {
        if count < MIN_GRID_POINTS {
            return Err(Error::Bloch(format!("k-grid needs at least {MIN_GRID_POINTS} points, got {count}")));
        }
        let intervals = (count - 1) as f64;
        let dk = 2.0 * PI / (a * intervals);
        // integer numerator keeps k_m = -k_{M-1-m} exact and k = 0 exact
        let points = (0..count)
            .map(|m| (2.0 * m as f64 - intervals) * PI / (a * intervals))
            .collect();
        Ok(Self { a, dk, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of distinct Brillouin-zone points (`M - 1`).
    pub fn unique_len(&self) -> usize {
        self.points.len() - 1
    }

    pub fn zero_index(&self) -> Option<usize> {
        let intervals = self.unique_len();
        intervals.is_multiple_of(2).then_some(intervals / 2)
    }

    /// Distinct-point index reached from `index` after `shift` steps of `dk`,
    /// together with the number of reciprocal-lattice vectors `2π/a` that were
    /// subtracted to bring it back into `[-π/a, π/a)`.
    pub fn shifted(&self, index: usize, shift: i64) -> (usize, i64) {
        let period = self.unique_len() as i64;
        let raw = index as i64 + shift;
        (raw.rem_euclid(period) as usize, raw.div_euclid(period))
    }

    /// Signed index difference `to - from`, reduced to `(-(M-1)/2, (M-1)/2]`.
    pub fn displacement(&self, from: usize, to: usize) -> i64 {
        let period = self.unique_len() as i64;
        let mut d = (to as i64 - from as i64).rem_euclid(period);
        if d > period / 2 {
            d -= period;
        }
        d
    }
}

/// Plane waves `G_j = 2πj/a`, `j = -N/2 .. N/2 - 1`, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWaveBasis {
    pub a: f64,
    pub g: Vec<f64>,
}

impl PlaneWaveBasis {
    pub fn new(a: f64, n: usize) -> Result<Self> {
        if n < MIN_GRID_POINTS || !n.is_multiple_of(2) {
            return Err(Error::Bloch(format!("cell grid size must be even and >= {MIN_GRID_POINTS}, got {n}")));
        }
        let half = (n / 2) as i64;
        let g = (-half..half).map(|j| 2.0 * PI * j as f64 / a).collect();
        Ok(Self { a, g })
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// `Ṽ_d = (1/N) Σ_m V(x_m) e^{-i 2π d x_m / a}` for `d = 0..N-1`.
    pub fn potential_coefficients(&self, samples: &PotentialSamples) -> Vec<Complex64> {
        let n = samples.len();
        (0..n)
            .map(|d| {
                let mut acc = ZERO;
                for (&x, &v) in samples.grid.iter().zip(&samples.values) {
                    let theta = -2.0 * PI * d as f64 * x / samples.a;
                    acc += v * Complex64::from_polar(1.0, theta);
                }
                acc / n as f64
            })
            .collect()
    }

    /// Real-space samples `u(x_m) = a^{-1/2} Σ_j c_j e^{i G_j x_m}`.
    pub fn to_real_space(&self, coeffs: &[Complex64], grid: &[f64]) -> Vec<Complex64> {
        let norm = 1.0 / self.a.sqrt();
        grid.iter()
            .map(|&x| {
                coeffs
                    .iter()
                    .zip(&self.g)
                    .map(|(c, &g)| c * Complex64::from_polar(1.0, g * x))
                    .sum::<Complex64>()
                    * norm
            })
            .collect()
    }
}

/// `(ħ²/2m)(−i∂ + k)² + V` in the plane-wave basis; Hermitian by construction.
pub fn build_bloch_hamiltonian(k: f64, basis: &PlaneWaveBasis, potential_coeffs: &[Complex64]) -> CMat {
    let n = basis.len();
    let mut h = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            // G_i - G_j = 2π(i - j)/a with 0 < i - j < N
            let v = potential_coeffs[i - j];
            h[(i, j)] = v;
            h[(j, i)] = v.conj();
        }
        let q = basis.g[i] + k;
        h[(i, i)] = Complex64::new(HBAR * HBAR * q * q / (2.0 * M_E) + potential_coeffs[0].re, 0.0);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConvention {
    /// Largest-modulus Fourier coefficient real and positive (lowest index on ties).
    #[default]
    MaxFourier,
    /// First non-negligible real-space sample real and positive.
    FirstSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlochState {
    pub band: usize,
    pub k: f64,
    pub energy: f64,
    /// Plane-wave coefficients, unit 2-norm (cell-normalized `u`).
    pub coeffs: Vec<Complex64>,
}

impl BlochState {
    pub fn samples(&self, basis: &PlaneWaveBasis, grid: &[f64]) -> Vec<Complex64> {
        basis.to_real_space(&self.coeffs, grid)
    }
}

/// Multiply the state by a unit phase according to `convention`.
pub fn fix_phase(mut state: BlochState, basis: &PlaneWaveBasis, grid: &[f64], convention: PhaseConvention) -> BlochState {
    fix_phase_in_place(&mut state.coeffs, basis, grid, convention);
    state
}

fn fix_phase_in_place(coeffs: &mut [Complex64], basis: &PlaneWaveBasis, grid: &[f64], convention: PhaseConvention) {
    let (anchor, anchor_index) = match convention {
        PhaseConvention::MaxFourier => {
            // symmetric pairs tie in magnitude; take the first within roundoff
            let peak = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
            let best = coeffs
                .iter()
                .position(|c| c.norm() >= peak * (1.0 - TIE_TOLERANCE))
                .unwrap_or(0);
            (coeffs[best], Some(best))
        }
        PhaseConvention::FirstSample => {
            let samples = basis.to_real_space(coeffs, grid);
            let peak = samples.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let first = samples
                .into_iter()
                .find(|z| z.norm() > ANCHOR_FLOOR * peak)
                .unwrap_or(Complex64::new(1.0, 0.0));
            (first, None)
        }
    };
    let modulus = anchor.norm();
    if modulus == 0.0 {
        return;
    }
    let phase = anchor.conj() / modulus;
    coeffs.iter_mut().for_each(|c| *c *= phase);
    if let Some(j) = anchor_index {
        coeffs[j] = Complex64::new(coeffs[j].re, 0.0);
    }
}

/// The `n_bands` lowest eigenpairs of `H(k)`, energies ascending.
pub fn solve_bands(
    k: f64,
    basis: &PlaneWaveBasis,
    potential_coeffs: &[Complex64],
    grid: &[f64],
    n_bands: usize,
    convention: PhaseConvention,
) -> Result<Vec<BlochState>> {
    let n = basis.len();
    if n_bands == 0 || n_bands > n {
        return Err(Error::Bloch(format!("band count must be in 1..={n}, got {n_bands}")));
    }
    let h = build_bloch_hamiltonian(k, basis, potential_coeffs);
    let (values, vectors) = linalg::eigh(&h).ok_or(Error::Eigensolver { k })?;
    if values.iter().any(|e| !e.is_finite()) {
        return Err(Error::Eigensolver { k });
    }
    Ok((0..n_bands)
        .map(|band| {
            let mut coeffs: Vec<Complex64> = (0..n).map(|j| vectors[(j, band)]).collect();
            let norm = linalg::vec_norm_sqr(&coeffs).sqrt();
            coeffs.iter_mut().for_each(|c| *c /= norm);
            fix_phase_in_place(&mut coeffs, basis, grid, convention);
            BlochState {
                band,
                k,
                energy: values[band],
                coeffs,
            }
        })
        .collect())
}

/// Bands at one k-point: energies and plane-wave coefficients (row `n`).
#[derive(Debug, Clone, PartialEq)]
pub struct KBands {
    pub k: f64,
    pub energies: Vec<f64>,
    pub coeffs: CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandStructure {
    pub grid: KGrid,
    pub basis: PlaneWaveBasis,
    pub cell_grid: Vec<f64>,
    pub n_bands: usize,
    pub bands: Vec<KBands>,
}

impl BandStructure {
    pub fn energy(&self, k_index: usize, band: usize) -> f64 {
        self.bands[k_index].energies[band]
    }

    pub fn state(&self, k_index: usize, band: usize) -> BlochState {
        let kb = &self.bands[k_index];
        BlochState {
            band,
            k: kb.k,
            energy: kb.energies[band],
            coeffs: kb.coeffs.row(band).to_vec(),
        }
    }

    /// Smallest `E_{v+1}(k) - E_v(k)` over the distinct k-points, with its k.
    pub fn direct_gap(&self, valence: usize) -> Result<(f64, f64)> {
        if valence + 1 >= self.n_bands {
            return Err(Error::Bloch(format!("direct gap above band {valence} needs at least {} bands", valence + 2)));
        }
        Ok(self.bands[..self.grid.unique_len()]
            .iter()
            .map(|kb| (kb.energies[valence + 1] - kb.energies[valence], kb.k))
            .fold((f64::INFINITY, 0.0), |best, cur| if cur.0 < best.0 { cur } else { best }))
    }
}

pub fn compute_band_structure(
    grid: &KGrid,
    samples: &PotentialSamples,
    n_bands: usize,
    convention: PhaseConvention,
) -> Result<BandStructure> {
    let basis = PlaneWaveBasis::new(samples.a, samples.len())?;
    let vq = basis.potential_coefficients(samples);
    let n = basis.len();
    let bands = grid
        .points
        .par_iter()
        .map(|&k| {
            let states = solve_bands(k, &basis, &vq, &samples.grid, n_bands, convention)?;
            let energies = states.iter().map(|s| s.energy).collect();
            let coeffs = CMat::from_fn(n_bands, n, |b, j| states[b].coeffs[j]);
            Ok(KBands { k, energies, coeffs })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BandStructure {
        grid: grid.clone(),
        basis,
        cell_grid: samples.grid.clone(),
        n_bands,
        bands,
    })
}

/// Direct gap above `valence` from eigenvalues only, scanning `k <= 0`
/// (time reversal makes `E(k) = E(-k)`).
pub fn direct_gap_scan(grid: &KGrid, samples: &PotentialSamples, valence: usize) -> Result<(f64, f64)> {
    let basis = PlaneWaveBasis::new(samples.a, samples.len())?;
    if valence + 1 >= basis.len() {
        return Err(Error::Bloch(format!("valence band {valence} has no band above it")));
    }
    let vq = basis.potential_coefficients(samples);
    let half = grid.unique_len() / 2 + 1;
    let gaps = grid.points[..half]
        .par_iter()
        .map(|&k| {
            let h = build_bloch_hamiltonian(k, &basis, &vq);
            let e = linalg::eigvalsh(&h).ok_or(Error::Eigensolver { k })?;
            Ok((e[valence + 1] - e[valence], k))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(gaps
        .into_iter()
        .fold((f64::INFINITY, 0.0), |best, cur| if cur.0 < best.0 { cur } else { best }))
}

/// Sorted free-electron energies `(k + 2πj/a)²/2` over all integers `j`.
pub fn free_electron_levels(k: f64, a: f64, count: usize) -> Vec<f64> {
    let span = count as i64 + 2;
    let mut levels: Vec<f64> = (-span..=span)
        .map(|j| {
            let q = k + 2.0 * PI * j as f64 / a;
            HBAR * HBAR * q * q / (2.0 * M_E)
        })
        .collect();
    levels.sort_by(|x, y| x.total_cmp(y));
    levels.truncate(count);
    levels
}
