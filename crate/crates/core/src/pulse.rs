//! Driving pulse: `A(t) = A0 sin²(πt/T) cos(ωt)` on `[0, T]`, zero elsewhere,
//! and `F = −dA/dt`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::units::{E0, HBAR, SPEED_OF_LIGHT};

/// Scan density used to bracket gauge-commensurate instants.
pub const SCAN_SAMPLES_PER_CYCLE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    /// Carrier wavelength (Bohr).
    pub wavelength: f64,
    /// Carrier angular frequency.
    pub omega: f64,
    /// Total duration T.
    pub duration: f64,
    /// Nominal peak field F0.
    pub peak_field: f64,
    /// Vector-potential amplitude A0.
    pub amplitude: f64,
}

impl PulseSpec {
    /// `A0 = F0 / ω` unless an explicit amplitude is supplied.
    pub fn new(wavelength: f64, duration: f64, peak_field: f64, amplitude_override: Option<f64>) -> Self {
        let omega = 2.0 * PI * SPEED_OF_LIGHT / wavelength;
        Self {
            wavelength,
            omega,
            duration,
            peak_field,
            amplitude: amplitude_override.unwrap_or(peak_field / omega),
        }
    }

    pub fn carrier_period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn vector_potential(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.duration {
            return 0.0;
        }
        let env = (PI * t / self.duration).sin();
        self.amplitude * env * env * (self.omega * t).cos()
    }

    pub fn electric_field(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.duration {
            return 0.0;
        }
        let w = PI / self.duration;
        let env = (w * t).sin();
        -self.amplitude
            * (w * (2.0 * w * t).sin() * (self.omega * t).cos()
                - self.omega * env * env * (self.omega * t).sin())
    }

    /// Field-induced crystal-momentum shift `−e0 A(t)/ħ`.
    pub fn momentum_shift(&self, t: f64) -> f64 {
        -E0 * self.vector_potential(t) / HBAR
    }

    /// `max |F|` on a dense scan.
    pub fn achieved_peak_field(&self) -> f64 {
        let n = self.scan_len() * 4;
        (0..=n)
            .map(|i| self.electric_field(self.duration * i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }

    /// `floor(|e0| A0 / (ħ dk))`.
    pub fn max_shift(&self, dk: f64) -> i64 {
        (E0.abs() * self.amplitude.abs() / (HBAR * dk)).floor() as i64
    }

    fn scan_len(&self) -> usize {
        let cycles = self.duration / self.carrier_period();
        ((cycles * SCAN_SAMPLES_PER_CYCLE as f64).ceil() as usize).max(SCAN_SAMPLES_PER_CYCLE)
    }
}

/// An instant at which the momentum shift equals `shift · dk` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaugeTime {
    pub t: f64,
    pub shift: i64,
}

/// All `t` in `[0, T]` with `−e0 A(t)/ħ = s·dk` for integer `s`, ascending.
///
/// Crossings are bracketed on a scan of [`SCAN_SAMPLES_PER_CYCLE`] points per
/// carrier period and refined by bisection down to floating-point resolution.
/// `t = 0` and `t = T` are always included with shift 0.
pub fn gauge_times(pulse: &PulseSpec, dk: f64) -> Vec<GaugeTime> {
    assert!(dk > 0.0, "k-grid spacing must be positive");
    let n = pulse.scan_len();
    let h = pulse.duration / n as f64;
    let mut times = vec![GaugeTime { t: 0.0, shift: 0 }];
    let mut t_prev = 0.0;
    let mut q_prev = pulse.momentum_shift(0.0);
    for i in 1..=n {
        let t_next = if i == n { pulse.duration } else { i as f64 * h };
        let q_next = pulse.momentum_shift(t_next);
        let lo_level = (q_prev.min(q_next) / dk).ceil() as i64;
        let hi_level = (q_prev.max(q_next) / dk).floor() as i64;
        let mut found: Vec<GaugeTime> = Vec::new();
        for s in lo_level..=hi_level {
            let g_prev = q_prev - s as f64 * dk;
            let g_next = q_next - s as f64 * dk;
            // counts a root at the right end, never at the left one
            let crosses = (g_prev < 0.0 && g_next >= 0.0) || (g_prev > 0.0 && g_next <= 0.0);
            if crosses {
                let t = refine(pulse, s, dk, t_prev, t_next);
                found.push(GaugeTime { t, shift: s });
            }
        }
        found.sort_by(|x, y| x.t.total_cmp(&y.t));
        for gt in found {
            if times.last().is_none_or(|last| gt.t > last.t) {
                times.push(gt);
            }
        }
        t_prev = t_next;
        q_prev = q_next;
    }
    if times.last().is_none_or(|last| last.t < pulse.duration) {
        times.push(GaugeTime {
            t: pulse.duration,
            shift: 0,
        });
    } else if let Some(last) = times.last_mut() {
        last.t = pulse.duration;
    }
    times
}

fn refine(pulse: &PulseSpec, shift: i64, dk: f64, mut lo: f64, mut hi: f64) -> f64 {
    let level = shift as f64 * dk;
    let g = |t: f64| pulse.momentum_shift(t) - level;
    let mut g_lo = g(lo);
    let g_hi = g(hi);
    if g_hi == 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return mid;
        }
        if (g_mid < 0.0) == (g_lo < 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    if g(lo).abs() <= g(hi).abs() {
        lo
    } else {
        hi
    }
}
