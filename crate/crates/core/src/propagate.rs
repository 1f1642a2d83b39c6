//! Velocity-gauge propagation of Bloch-state amplitudes, one k-block at a time.
//!
//! In the velocity gauge `H_ext` is diagonal in k, so a state that starts in
//! `|n0, k0⟩` stays inside the `k0` block and is described by the amplitude
//! vector `c_n(t)`:
//!
//! `iħ dc/dt = [diag(E_n(k0)) + (−e0/m) P(k0) A(t) + (e0² A²/2m)] c`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::KGrid;
use crate::linalg::{self, CMat, ZERO};
use crate::pulse::PulseSpec;
use crate::units::{E0, HBAR, M_E};
use crate::{Error, Result};

pub const DEFAULT_STEPS_PER_CYCLE: usize = 2048;
/// Propagation aborts when `|Σ|c|² − 1|` exceeds this.
pub const NORM_ABORT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    /// Only `|n0, k=0⟩` is occupied.
    #[default]
    SingleK,
    /// Every distinct k-point of band `n0` is occupied.
    FullBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleSpec {
    pub mode: EnsembleMode,
    pub valence: usize,
}

impl EnsembleSpec {
    /// Grid indices of the initially occupied k-points.
    pub fn initial_k_indices(&self, grid: &KGrid) -> Result<Vec<usize>> {
        match self.mode {
            EnsembleMode::SingleK => grid
                .zero_index()
                .map(|i| vec![i])
                .ok_or_else(|| Error::Bloch("single-k ensemble needs k = 0 on the grid (odd point count)".into())),
            EnsembleMode::FullBand => Ok((0..grid.unique_len()).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Fourth-order Magnus step with an exactly applied exponential.
    #[default]
    Magnus4,
    /// Classic explicit Runge–Kutta.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    pub steps_per_cycle: usize,
    pub integrator: Integrator,
    /// Keep the `e0² A²/2m` term (a pure global phase).
    pub include_a_squared: bool,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            steps_per_cycle: DEFAULT_STEPS_PER_CYCLE,
            integrator: Integrator::Magnus4,
            include_a_squared: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientState {
    pub k_index: usize,
    pub k0: f64,
    pub t: f64,
    pub c: Vec<Complex64>,
}

impl CoefficientState {
    pub fn norm_sqr(&self) -> f64 {
        linalg::vec_norm_sqr(&self.c)
    }

    /// The pure-state density block `c c†`.
    pub fn density(&self) -> CMat {
        let n = self.c.len();
        CMat::from_fn(n, n, |i, j| self.c[i] * self.c[j].conj())
    }
}

pub fn init_state(k_index: usize, k0: f64, valence: usize, n_bands: usize) -> Result<CoefficientState> {
    if valence >= n_bands {
        return Err(Error::Bloch(format!("valence band {valence} not among {n_bands} bands")));
    }
    let mut c = vec![ZERO; n_bands];
    c[valence] = Complex64::new(1.0, 0.0);
    Ok(CoefficientState {
        k_index,
        k0,
        t: 0.0,
        c,
    })
}

/// The Hamiltonian of one k-block.
#[derive(Debug, Clone)]
pub struct KBlock<'a> {
    pub energies: &'a [f64],
    pub momentum: &'a CMat,
    pub pulse: &'a PulseSpec,
    pub include_a_squared: bool,
    /// `−i[P, diag(E)]`, the commutator needed by the Magnus step.
    commutator: CMat,
}

impl<'a> KBlock<'a> {
    pub fn new(energies: &'a [f64], momentum: &'a CMat, pulse: &'a PulseSpec, include_a_squared: bool) -> Self {
        let n = energies.len();
        let commutator = CMat::from_fn(n, n, |i, j| {
            Complex64::new(0.0, -1.0) * momentum[(i, j)] * (energies[j] - energies[i])
        });
        Self {
            energies,
            momentum,
            pulse,
            include_a_squared,
            commutator,
        }
    }

    /// Coefficients of `P` and `I` in `H(t) = diag(E) + α P + β I`.
    fn coupling(&self, t: f64) -> (f64, f64) {
        let a = self.pulse.vector_potential(t);
        let alpha = -E0 * a / M_E;
        let beta = if self.include_a_squared {
            E0 * E0 * a * a / (2.0 * M_E)
        } else {
            0.0
        };
        (alpha, beta)
    }

    pub fn hamiltonian(&self, t: f64) -> CMat {
        let (alpha, beta) = self.coupling(t);
        let mut h = self.momentum.scale(Complex64::new(alpha, 0.0));
        for (i, e) in self.energies.iter().enumerate() {
            h[(i, i)] += e + beta;
        }
        h
    }

    /// `dc/dt = −(i/ħ) H(t) c`.
    pub fn rhs(&self, c: &[Complex64], t: f64) -> Vec<Complex64> {
        let (alpha, beta) = self.coupling(t);
        let pc = self.momentum.matvec(c);
        let f = Complex64::new(0.0, -1.0 / HBAR);
        c.iter()
            .zip(&pc)
            .zip(self.energies)
            .map(|((ci, pci), e)| f * ((e + beta) * ci + alpha * pci))
            .collect()
    }

    fn rk4_step(&self, c: &[Complex64], t: f64, h: f64) -> Vec<Complex64> {
        let axpy = |x: &[Complex64], k: &[Complex64], s: f64| -> Vec<Complex64> {
            x.iter().zip(k).map(|(a, b)| a + b * s).collect()
        };
        let k1 = self.rhs(c, t);
        let k2 = self.rhs(&axpy(c, &k1, 0.5 * h), t + 0.5 * h);
        let k3 = self.rhs(&axpy(c, &k2, 0.5 * h), t + 0.5 * h);
        let k4 = self.rhs(&axpy(c, &k3, h), t + h);
        c.iter()
            .enumerate()
            .map(|(i, ci)| ci + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0))
            .collect()
    }

    fn magnus4_step(&self, c: &[Complex64], t: f64, h: f64) -> Vec<Complex64> {
        let offset = 3f64.sqrt() / 6.0;
        let (a1, b1) = self.coupling(t + (0.5 - offset) * h);
        let (a2, b2) = self.coupling(t + (0.5 + offset) * h);
        // Ω = −(i/ħ)[h/2 (H1 + H2)] − (√3/12)(h/ħ)² [H2, H1]
        //   = −i Heff with [H2, H1] = (α2 − α1)[P, D]
        let scale = h / HBAR;
        let p_coef = 0.5 * scale * (a1 + a2);
        let c_coef = 3f64.sqrt() / 12.0 * scale * scale * (a2 - a1);
        let n = self.energies.len();
        let mut heff = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                heff[(i, j)] = p_coef * self.momentum[(i, j)] + c_coef * self.commutator[(i, j)];
            }
            heff[(i, i)] += scale * (self.energies[i] + 0.5 * (b1 + b2));
        }
        linalg::expm_minus_i_apply(&heff, c)
    }

    pub fn step(&self, integrator: Integrator, c: &[Complex64], t: f64, h: f64) -> Vec<Complex64> {
        match integrator {
            Integrator::Magnus4 => self.magnus4_step(c, t, h),
            Integrator::Rk4 => self.rk4_step(c, t, h),
        }
    }
}

/// Recorded amplitudes of one k-block at the requested sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub k_index: usize,
    pub k0: f64,
    pub times: Vec<f64>,
    pub amplitudes: Vec<Vec<Complex64>>,
    /// Largest `|Σ|c|² − 1|` met along the main step sequence.
    pub max_norm_drift: f64,
}

impl Trajectory {
    pub fn state(&self, i: usize) -> CoefficientState {
        CoefficientState {
            k_index: self.k_index,
            k0: self.k0,
            t: self.times[i],
            c: self.amplitudes[i].clone(),
        }
    }
}

/// Number of uniform steps covering `[0, T]` at (at least) the requested
/// density; the step is `T / n` so the last step ends exactly at `T`.
pub fn step_count(pulse: &PulseSpec, steps_per_cycle: usize) -> usize {
    let nominal = pulse.carrier_period() / steps_per_cycle as f64;
    ((pulse.duration / nominal).ceil() as usize).max(1)
}

/// Propagate `initial` across the pulse and record it at `sample_times`.
///
/// The main trajectory takes uniform steps. A sample time that falls inside
/// a step is reached by a separate partial step from the start of that step,
/// so the main step sequence does not depend on where samples are taken.
pub fn propagate_k(
    initial: &CoefficientState,
    block: &KBlock<'_>,
    sample_times: &[f64],
    options: &PropagationOptions,
) -> Result<Trajectory> {
    let pulse = block.pulse;
    if sample_times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Bloch("sample times must be ascending".into()));
    }
    if sample_times.iter().any(|&t| t < 0.0 || t > pulse.duration) {
        return Err(Error::Bloch("sample times must lie inside [0, T]".into()));
    }
    let n_steps = step_count(pulse, options.steps_per_cycle);
    let h = pulse.duration / n_steps as f64;

    let mut amplitudes = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0;
    let mut c = initial.c.clone();
    let norm0 = linalg::vec_norm_sqr(&c);
    let mut max_drift = 0.0f64;

    while next_sample < sample_times.len() && sample_times[next_sample] <= 0.0 {
        amplitudes.push(c.clone());
        next_sample += 1;
    }
    for step in 0..n_steps {
        let t0 = step as f64 * h;
        let t1 = if step + 1 == n_steps { pulse.duration } else { (step + 1) as f64 * h };
        while next_sample < sample_times.len() && sample_times[next_sample] < t1 {
            let ts = sample_times[next_sample];
            let partial = if ts > t0 {
                block.step(options.integrator, &c, t0, ts - t0)
            } else {
                c.clone()
            };
            amplitudes.push(partial);
            next_sample += 1;
        }
        c = block.step(options.integrator, &c, t0, t1 - t0);
        let drift = (linalg::vec_norm_sqr(&c) - norm0).abs();
        max_drift = max_drift.max(drift);
        if drift > NORM_ABORT {
            return Err(Error::NormDrift {
                drift,
                t: t1,
                k0: initial.k0,
            });
        }
        while next_sample < sample_times.len() && sample_times[next_sample] <= t1 {
            amplitudes.push(c.clone());
            next_sample += 1;
        }
    }
    Ok(Trajectory {
        k_index: initial.k_index,
        k0: initial.k0,
        times: sample_times.to_vec(),
        amplitudes,
        max_norm_drift: max_drift,
    })
}

/// Step-halving convergence factor `|c_h − c_{h/2}| / |c_{h/2} − c_{h/4}|` of
/// the amplitudes at `T`; a fourth-order scheme gives about 16.
pub fn richardson_factor(initial: &CoefficientState, block: &KBlock<'_>, options: &PropagationOptions) -> Result<(f64, [f64; 2])> {
    let end = [block.pulse.duration];
    let run = |spc: usize| -> Result<Vec<Complex64>> {
        let opts = PropagationOptions {
            steps_per_cycle: spc,
            ..*options
        };
        Ok(propagate_k(initial, block, &end, &opts)?.amplitudes.remove(0))
    };
    let c1 = run(options.steps_per_cycle)?;
    let c2 = run(2 * options.steps_per_cycle)?;
    let c4 = run(4 * options.steps_per_cycle)?;
    let diff = |x: &[Complex64], y: &[Complex64]| x.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let d1 = diff(&c1, &c2);
    let d2 = diff(&c2, &c4);
    Ok((d1 / d2, [d1, d2]))
}

/// Free phase `e^{−iEt/ħ}`.
pub fn free_phase(energy: f64, t: f64) -> Complex64 {
    Complex64::from_polar(1.0, -energy * t / HBAR)
}
