//! Currents in both gauges, their gauge discrepancy, and the HHG spectrum.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::linalg::CMat;
use crate::sum::{ComplexKahanSum, KahanSum};
use crate::units::{E0, M_E};
use crate::{Error, Result};

/// Largest imaginary residue tolerated in an assembled current.
pub const IMAG_TOLERANCE: f64 = 1e-10;
pub const MIN_SPECTRUM_SAMPLES: usize = 64;
pub const DEFAULT_SPECTRUM_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GaugeCurrents {
    /// `J = j + Ṗ`.
    pub total: f64,
    /// Band-diagonal part `j`.
    pub intra: f64,
    /// Coherence part `Ṗ`.
    pub inter: f64,
}

impl GaugeCurrents {
    fn from_parts(intra: f64, inter: f64) -> Self {
        Self {
            total: intra + inter,
            intra,
            inter,
        }
    }
}

/// Ensemble normalisation: crystal length `𝒱` and occupied-state count `𝒩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Normalisation {
    pub volume: f64,
    pub occupied: usize,
}

impl Normalisation {
    /// `𝒱 = a (M − 1)`.
    pub fn new(a: f64, unique_k: usize, occupied: usize) -> Self {
        Self {
            volume: a * unique_k as f64,
            occupied,
        }
    }
}

/// `Σ_k Σ_{n,n'} c*_n c_{n'} P_{nn'}(k)` split into diagonal and off-diagonal.
fn band_sums(blocks: &[(usize, &[Complex64])], momentum: &[CMat]) -> Result<(f64, f64)> {
    let mut diag = KahanSum::new();
    let mut off = ComplexKahanSum::new();
    for &(k, c) in blocks {
        let p = &momentum[k];
        for (n, cn) in c.iter().enumerate() {
            diag.add(cn.norm_sqr() * p[(n, n)].re);
            for (m, cm) in c.iter().enumerate() {
                if m != n {
                    off.add(cn.conj() * cm * p[(n, m)]);
                }
            }
        }
    }
    let off = off.value();
    if off.im.abs() > IMAG_TOLERANCE {
        return Err(Error::Observables(format!(
            "interband current has imaginary residue {:e}",
            off.im
        )));
    }
    Ok((diag.value(), off.re))
}

/// Velocity-gauge currents. `blocks` pairs each initial k-index with its
/// amplitudes `c`.
pub fn current_velocity(
    blocks: &[(usize, &[Complex64])],
    vector_potential: f64,
    momentum: &[CMat],
    norm: &Normalisation,
) -> Result<GaugeCurrents> {
    let (diag, off) = band_sums(blocks, momentum)?;
    let f = E0 / (norm.volume * M_E);
    let rigid = norm.occupied as f64 * E0 * E0 / (norm.volume * M_E) * vector_potential;
    Ok(GaugeCurrents::from_parts(f * diag - rigid, f * off))
}

/// Length-gauge currents. `blocks` pairs each shifted k-index with the
/// amplitudes `b` held there.
pub fn current_length(blocks: &[(usize, &[Complex64])], momentum: &[CMat], norm: &Normalisation) -> Result<GaugeCurrents> {
    let (diag, off) = band_sums(blocks, momentum)?;
    let f = E0 / (norm.volume * M_E);
    Ok(GaugeCurrents::from_parts(f * diag, f * off))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurrentSample {
    pub t: f64,
    pub shift: i64,
    pub vector_potential: f64,
    pub field: f64,
    pub velocity: GaugeCurrents,
    pub length: GaugeCurrents,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurrentRecord {
    pub samples: Vec<CurrentSample>,
}

impl CurrentRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn series(&self, f: impl Fn(&CurrentSample) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Discrepancy {
    pub delta_total: f64,
    pub delta_intra: f64,
    pub delta_inter: f64,
}

/// `δ_X = max_m |X_v − X_l| / max_m |J_v|`.
pub fn gauge_discrepancy(record: &CurrentRecord) -> Result<Discrepancy> {
    if record.samples.is_empty() {
        return Err(Error::Observables("empty current record".into()));
    }
    let scale = record.samples.iter().map(|s| s.velocity.total.abs()).fold(0.0, f64::max);
    let delta = |f: fn(&GaugeCurrents) -> f64| {
        let worst = record
            .samples
            .iter()
            .map(|s| (f(&s.velocity) - f(&s.length)).abs())
            .fold(0.0, f64::max);
        if worst == 0.0 {
            0.0
        } else {
            worst / scale
        }
    };
    Ok(Discrepancy {
        delta_total: delta(|g| g.total),
        delta_intra: delta(|g| g.intra),
        delta_inter: delta(|g| g.inter),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Hann,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// `ω / ω_carrier`.
    pub harmonic_order: Vec<f64>,
    pub power: Vec<f64>,
    pub window: Window,
    /// `|Σ|x|² − Σ|X|²/N| / Σ|x|²` of the windowed signal.
    pub parseval_error: f64,
}

/// Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson slopes).
pub fn pchip(x: &[f64], y: &[f64], at: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert!(n >= 2 && y.len() == n);
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
    } else {
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }
    let mut seg = 0;
    at.iter()
        .map(|&t| {
            while seg + 2 < n && t > x[seg + 1] {
                seg += 1;
            }
            while seg > 0 && t < x[seg] {
                seg -= 1;
            }
            let s = ((t - x[seg]) / h[seg]).clamp(0.0, 1.0);
            let s2 = s * s;
            let s3 = s2 * s;
            let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
            let h10 = s3 - 2.0 * s2 + s;
            let h01 = -2.0 * s3 + 3.0 * s2;
            let h11 = s3 - s2;
            h00 * y[seg] + h10 * h[seg] * d[seg] + h01 * y[seg + 1] + h11 * h[seg] * d[seg + 1]
        })
        .collect()
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Hann-windowed power spectrum of a signal sampled at non-uniform times.
///
/// The signal is resampled onto `points` uniform instants `t_0 + i·Δt` with
/// `Δt = (t_end − t_0)/points`, windowed, and transformed. `power[k] = |X_k|²/N`
/// for `k = 0..=N/2`, at harmonic order `k·2π/(N Δt ω)`.
pub fn hhg_spectrum(times: &[f64], values: &[f64], omega: f64, points: usize) -> Result<Spectrum> {
    if times.len() < MIN_SPECTRUM_SAMPLES {
        return Err(Error::Observables(format!(
            "spectrum needs at least {MIN_SPECTRUM_SAMPLES} samples, got {}",
            times.len()
        )));
    }
    if times.len() != values.len() || points < 2 {
        return Err(Error::Observables("spectrum input length mismatch".into()));
    }
    let t0 = times[0];
    let span = times[times.len() - 1] - t0;
    let dt = span / points as f64;
    let grid: Vec<f64> = (0..points).map(|i| t0 + i as f64 * dt).collect();
    let resampled = pchip(times, values, &grid);
    let mut buf: Vec<Complex64> = resampled
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = (PI * i as f64 / points as f64).sin();
            Complex64::new(v * w * w, 0.0)
        })
        .collect();
    let energy: f64 = buf.iter().map(|z| z.norm_sqr()).sum();
    FftPlanner::new().plan_fft_forward(points).process(&mut buf);
    let n = points as f64;
    let spectral: f64 = buf.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
    let parseval_error = if energy > 0.0 {
        (energy - spectral).abs() / energy
    } else {
        spectral
    };
    let half = points / 2;
    let order_step = 2.0 * PI / (n * dt * omega);
    Ok(Spectrum {
        harmonic_order: (0..=half).map(|k| k as f64 * order_step).collect(),
        power: buf[..=half].iter().map(|z| z.norm_sqr() / n).collect(),
        window: Window::Hann,
        parseval_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm() -> Normalisation {
        Normalisation::new(2.0, 4, 1)
    }

    fn hermitian(n: usize, seed: f64) -> CMat {
        let mut m = CMat::from_fn(n, n, |i, j| Complex64::new((seed * (i + 2 * j) as f64).sin(), (seed * (3 * i + j) as f64).cos()));
        m = m.add_scaled(Complex64::new(1.0, 0.0), &m.adjoint());
        m
    }

    #[test]
    fn single_band_state_has_no_interband_part() {
        let p = vec![hermitian(3, 0.3)];
        let c = [Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        let j = current_velocity(&[(0, &c)], 0.0, &p, &norm()).unwrap();
        assert_eq!(j.inter, 0.0);
        assert_eq!(j.intra, E0 / 2.0 * p[0][(0, 0)].re);
        assert_eq!(j.total, j.intra + j.inter);
    }

    #[test]
    fn rigid_term_only_in_velocity_gauge() {
        let p = vec![CMat::zeros(2, 2)];
        let c = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let v = current_velocity(&[(0, &c)], 0.5, &p, &norm()).unwrap();
        let l = current_length(&[(0, &c)], &p, &norm()).unwrap();
        assert_eq!(v.intra, -0.5 / 8.0);
        assert_eq!(l.intra, 0.0);
    }

    #[test]
    fn imaginary_residue_is_rejected() {
        let mut p = CMat::zeros(2, 2);
        p[(0, 1)] = Complex64::new(1.0, 0.0);
        let c = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        assert!(current_length(&[(0, &c)], &[p], &norm()).is_err());
    }

    proptest! {
        #[test]
        fn decomposition_is_exact_and_real(re in proptest::collection::vec(-1.0f64..1.0, 4), im in proptest::collection::vec(-1.0f64..1.0, 4), seed in 0.1f64..3.0, a in -1.0f64..1.0) {
            let p = vec![hermitian(4, seed)];
            let c: Vec<Complex64> = re.iter().zip(&im).map(|(r, i)| Complex64::new(*r, *i)).collect();
            let v = current_velocity(&[(0, &c)], a, &p, &norm()).unwrap();
            prop_assert_eq!(v.total, v.intra + v.inter);
            let l = current_length(&[(0, &c)], &p, &norm()).unwrap();
            prop_assert_eq!(l.total, l.intra + l.inter);
        }
    }

    fn sample(t: f64, jv: f64, jl: f64) -> CurrentSample {
        CurrentSample {
            t,
            shift: 0,
            vector_potential: 0.0,
            field: 0.0,
            velocity: GaugeCurrents::from_parts(jv, 0.0),
            length: GaugeCurrents::from_parts(jl, 0.0),
        }
    }

    #[test]
    fn discrepancy_of_identical_series_is_zero() {
        let r = CurrentRecord {
            samples: (0..5).map(|i| sample(i as f64, i as f64, i as f64)).collect(),
        };
        let d = gauge_discrepancy(&r).unwrap();
        assert_eq!(d.delta_total, 0.0);
        assert_eq!(d.delta_intra, 0.0);
        assert!(gauge_discrepancy(&CurrentRecord::default()).is_err());
    }

    #[test]
    fn discrepancy_scale() {
        let r = CurrentRecord {
            samples: vec![sample(0.0, 2.0, 1.5), sample(1.0, -4.0, -4.0)],
        };
        assert_eq!(gauge_discrepancy(&r).unwrap().delta_total, 0.125);
    }

    #[test]
    fn pchip_reproduces_linear_and_stays_monotone() {
        let x = [0.0, 0.5, 1.7, 2.0, 3.5];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let at: Vec<f64> = (0..=35).map(|i| i as f64 * 0.1).collect();
        for (t, v) in at.iter().zip(pchip(&x, &y, &at)) {
            assert!((v - (2.0 * t - 1.0)).abs() < 1e-12);
        }
        let ys = [0.0, 0.1, 0.9, 1.0, 1.0];
        let vals = pchip(&x, &ys, &at);
        assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        assert_eq!(pchip(&x, &ys, &x), ys.to_vec());
    }

    #[test]
    fn sine_peaks_at_first_order() {
        let omega = 0.05;
        let t_end = 40.0 * 2.0 * PI / omega;
        let times: Vec<f64> = (0..=4000).map(|i| t_end * (i as f64 / 4000.0).powf(1.1)).collect();
        let values: Vec<f64> = times.iter().map(|t| (omega * t).sin()).collect();
        let s = hhg_spectrum(&times, &values, omega, 4096).unwrap();
        let (imax, _) = s
            .power
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
        assert!((s.harmonic_order[imax] - 1.0).abs() < 0.05, "{}", s.harmonic_order[imax]);
        assert!(s.parseval_error < 1e-8);
        assert!(s.power.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn zero_signal_has_zero_spectrum() {
        let times: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let s = hhg_spectrum(&times, &vec![0.0; 100], 0.1, 256).unwrap();
        assert!(s.power.iter().all(|&p| p == 0.0));
        assert!(hhg_spectrum(&times[..10], &[0.0; 10], 0.1, 256).is_err());
    }
}
