//! End-to-end orchestration: potential → bands → matrix elements →
//! propagation → gauge transformation → observables, plus CSV/JSON output.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::bloch::{self, BandStructure, KGrid};
use crate::config::RunConfig;
use crate::gauge::{self, ShiftCheck};
use crate::matels::{self, MatrixElements};
use crate::observables::{self, CurrentRecord, CurrentSample, Discrepancy, Normalisation, Spectrum};
use crate::potential::{self, Calibration, PotentialSpec};
use crate::propagate::{self, EnsembleSpec, KBlock, Trajectory};
use crate::pulse::{self, GaugeTime, PulseSpec};
use crate::units::{from_internal, hartree_to_ev, Unit, E0, HBAR, M_E};
use crate::{Error, Result};

/// Allowed `|Σ|c|² − 1|` over the whole run.
pub const NORM_DRIFT_TOLERANCE: f64 = 1e-8;
/// Allowed relative mismatch of the two gauges where they must coincide.
pub const BOUNDARY_TOLERANCE: f64 = 1e-10;
pub const PARSEVAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct BandStage {
    pub potential: PotentialSpec,
    pub calibration: Option<Calibration>,
    pub bands: BandStructure,
    /// Direct gap above the valence band (Hartree) and where it sits.
    pub gap: (f64, f64),
}

/// Build the (optionally calibrated) potential and its band structure.
pub fn band_stage(cfg: &RunConfig) -> Result<BandStage> {
    let spec = cfg.potential_spec();
    spec.validate()?;
    let grid = KGrid::new(spec.a, cfg.grid.n_k)?;
    let n = cfg.grid.n_grid;
    let valence = cfg.grid.valence_band;
    let (spec, calibration) = if cfg.potential.calibrate {
        let target = crate::units::ev(cfg.potential.target_gap_ev);
        let (spec, cal) = potential::calibrate_gap(&spec, target, |s| {
            let samples = potential::periodize(s, n)?;
            Ok(bloch::direct_gap_scan(&grid, &samples, valence)?.0)
        })?;
        (spec, Some(cal))
    } else {
        (spec, None)
    };
    let samples = potential::periodize(&spec, n)?;
    let bands = bloch::compute_band_structure(&grid, &samples, cfg.grid.n_bands, cfg.run.phase_convention)?;
    let gap = bands.direct_gap(valence)?;
    Ok(BandStage {
        potential: spec,
        calibration,
        bands,
        gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: RunConfig,
    pub stage: BandStage,
    pub pulse: PulseSpec,
    pub gauge_times: Vec<GaugeTime>,
    pub matels: MatrixElements,
    pub sources: Vec<usize>,
    pub trajectories: Vec<Trajectory>,
    pub record: CurrentRecord,
    pub shift_checks: Vec<ShiftCheck>,
    /// Largest overlap unitarity defect per shift.
    pub defects: Vec<(i64, f64)>,
    pub discrepancy: Discrepancy,
    pub spectrum: Spectrum,
    pub spectrum_length: Spectrum,
    pub max_norm_drift: f64,
    /// Largest `|b − c|` and `|J_v − J_l|` at `t = 0` and `t = T`, the
    /// latter relative to `max(max|J_v|, zone-edge carrier current)`.
    pub boundary_error: f64,
    pub normalisation: Normalisation,
}

pub fn simulate(cfg: &RunConfig) -> Result<Simulation> {
    cfg.validate()?;
    let stage = band_stage(cfg)?;
    let grid = &stage.bands.grid;
    let pulse = cfg.pulse_spec();
    let gauge_times = pulse::gauge_times(&pulse, grid.dk);
    let max_shift = gauge_times.iter().map(|g| g.shift.abs()).max().unwrap_or(0);

    let ensemble = EnsembleSpec {
        mode: cfg.run.ensemble,
        valence: cfg.grid.valence_band,
    };
    let sources = ensemble.initial_k_indices(grid)?;
    let matels = MatrixElements::compute(&stage.bands, &sources, max_shift);
    let defects = matels.overlaps.defect_by_shift();

    let times: Vec<f64> = gauge_times.iter().map(|g| g.t).collect();
    let spectral_times = spectral_sample_times(&times, pulse.duration);
    let options = cfg.propagation_options();
    let n_bands = cfg.grid.n_bands;
    let trajectories = sources
        .par_iter()
        .map(|&src| {
            let kb = &stage.bands.bands[src];
            let block = KBlock::new(&kb.energies, &matels.momentum[src], &pulse, options.include_a_squared);
            let init = propagate::init_state(src, kb.k, ensemble.valence, n_bands)?;
            propagate::propagate_k(&init, &block, &spectral_times, &options)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_norm_drift = trajectories.iter().map(|t| t.max_norm_drift).fold(0.0, f64::max);
    let normalisation = Normalisation::new(grid.a, grid.unique_len(), sources.len());

    // positions of the gauge times inside the (possibly denser) sample list
    let gauge_slots: Vec<usize> = times
        .iter()
        .map(|t| spectral_times.partition_point(|s| s < t))
        .collect();

    let per_time = gauge_times
        .par_iter()
        .zip(&gauge_slots)
        .map(|(gt, &slot)| {
            let blocks: Vec<(usize, &[Complex64])> = trajectories
                .iter()
                .map(|tr| (tr.k_index, tr.amplitudes[slot].as_slice()))
                .collect();
            let a = pulse.vector_potential(gt.t);
            let velocity = observables::current_velocity(&blocks, a, &matels.momentum, &normalisation)?;
            let snap = gauge::snapshot(gt.t, gt.shift, &blocks, &matels.overlaps)?;
            let shifted: Vec<(usize, &[Complex64])> = snap.states.iter().map(|s| (s.target, s.b.as_slice())).collect();
            let length = observables::current_length(&shifted, &matels.momentum, &normalisation)?;
            let bound = defects[(gt.shift + max_shift) as usize].1 + 1e-12;
            let check = gauge::population_shift_check(&snap, grid, &pulse, bound);
            let boundary = if gt.shift == 0 && (gt.t == 0.0 || gt.t == pulse.duration) {
                snap.states
                    .iter()
                    .zip(&blocks)
                    .flat_map(|(s, (_, c))| s.b.iter().zip(c.iter()).map(|(x, y)| (x - y).norm()))
                    .fold(0.0, f64::max)
            } else {
                0.0
            };
            let sample = CurrentSample {
                t: gt.t,
                shift: gt.shift,
                vector_potential: a,
                field: pulse.electric_field(gt.t),
                velocity,
                length,
            };
            Ok((sample, check, boundary))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut record = CurrentRecord::default();
    let mut shift_checks = Vec::with_capacity(per_time.len());
    let mut boundary_error = 0.0f64;
    for (sample, check, boundary) in per_time {
        record.samples.push(sample);
        shift_checks.push(check);
        boundary_error = boundary_error.max(boundary);
    }
    let discrepancy = observables::gauge_discrepancy(&record)?;
    // a zone-edge carrier sets the floor so that a vanishing current is not
    // compared with itself
    let edge_current = normalisation.occupied as f64 * E0.abs() * HBAR * PI / (grid.a * normalisation.volume * M_E);
    let scale = record
        .samples
        .iter()
        .map(|s| s.velocity.total.abs())
        .fold(edge_current, f64::max);
    for s in [record.samples.first(), record.samples.last()].into_iter().flatten() {
        boundary_error = boundary_error.max((s.velocity.total - s.length.total).abs() / scale);
    }

    let spectral_currents: Vec<f64> = (0..spectral_times.len())
        .into_par_iter()
        .map(|i| {
            let blocks: Vec<(usize, &[Complex64])> = trajectories
                .iter()
                .map(|tr| (tr.k_index, tr.amplitudes[i].as_slice()))
                .collect();
            let a = pulse.vector_potential(spectral_times[i]);
            Ok(observables::current_velocity(&blocks, a, &matels.momentum, &normalisation)?.total)
        })
        .collect::<Result<Vec<_>>>()?;
    let points = cfg.run.spectrum_points;
    let spectrum = observables::hhg_spectrum(&spectral_times, &spectral_currents, pulse.omega, points)?;
    let spectrum_length = if record.samples.len() >= observables::MIN_SPECTRUM_SAMPLES {
        observables::hhg_spectrum(&times, &record.series(|s| s.length.total), pulse.omega, points)?
    } else {
        spectrum.clone()
    };

    Ok(Simulation {
        config: cfg.clone(),
        stage,
        pulse,
        gauge_times,
        matels,
        sources,
        trajectories,
        record,
        shift_checks,
        defects,
        discrepancy,
        spectrum,
        spectrum_length,
        max_norm_drift,
        boundary_error,
        normalisation,
    })
}

/// Gauge times, topped up with a uniform grid when there are too few of them
/// for a spectrum.
fn spectral_sample_times(gauge: &[f64], duration: f64) -> Vec<f64> {
    let min = observables::MIN_SPECTRUM_SAMPLES;
    if gauge.len() >= min {
        return gauge.to_vec();
    }
    let mut all: Vec<f64> = (0..=min).map(|i| duration * i as f64 / min as f64).collect();
    all.extend_from_slice(gauge);
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

impl Simulation {
    pub fn shift_failures(&self) -> usize {
        self.shift_checks.iter().filter(|c| !c.pass).count()
    }

    pub fn max_unitarity_defect(&self) -> f64 {
        self.defects.iter().map(|d| d.1).fold(0.0, f64::max)
    }

    pub fn checks(&self) -> Vec<Check> {
        let d = &self.discrepancy;
        vec![
            Check {
                name: "norm_drift",
                pass: self.max_norm_drift <= NORM_DRIFT_TOLERANCE,
                value: self.max_norm_drift,
                threshold: NORM_DRIFT_TOLERANCE,
            },
            Check {
                name: "gauge_invariance",
                pass: d.delta_total <= self.config.run.gauge_tolerance,
                value: d.delta_total,
                threshold: self.config.run.gauge_tolerance,
            },
            Check {
                name: "acceleration_theorem",
                pass: self.shift_failures() == 0,
                value: self.shift_failures() as f64,
                threshold: 0.0,
            },
            Check {
                name: "boundary_identity",
                pass: self.boundary_error <= BOUNDARY_TOLERANCE,
                value: self.boundary_error,
                threshold: BOUNDARY_TOLERANCE,
            },
            Check {
                name: "parseval",
                pass: self.spectrum.parseval_error <= PARSEVAL_TOLERANCE
                    && self.spectrum_length.parseval_error <= PARSEVAL_TOLERANCE,
                value: self.spectrum.parseval_error.max(self.spectrum_length.parseval_error),
                threshold: PARSEVAL_TOLERANCE,
            },
        ]
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|c| c.pass)
    }

    pub fn metadata(&self, wall_time_s: f64, threads: usize) -> serde_json::Value {
        let stage = &self.stage;
        let cal = stage.calibration;
        serde_json::json!({
            "config": self.config,
            "depth_scale": stage.potential.depth_scale,
            "raw_gap_ev": cal.map(|c| c.raw_gap_ev).unwrap_or(hartree_to_ev(stage.gap.0)),
            "achieved_gap_ev": hartree_to_ev(stage.gap.0),
            "gap_k": stage.gap.1,
            "calibration_iterations": cal.map(|c| c.iterations).unwrap_or(0),
            "achieved_peak_field_gvm": from_internal(self.pulse.achieved_peak_field(), Unit::GigaVoltPerMetre),
            "vector_potential_amplitude": self.pulse.amplitude,
            "dk": stage.bands.grid.dk,
            "max_shift": self.gauge_times.iter().map(|g| g.shift.abs()).max().unwrap_or(0),
            "gauge_time_count": self.gauge_times.len(),
            "occupied_states": self.sources.len(),
            "unitarity_defect_max": self.max_unitarity_defect(),
            "unitarity_defects": self.defects.iter().map(|(s, d)| serde_json::json!({"shift": s, "defect": d})).collect::<Vec<_>>(),
            "norm_drift": self.max_norm_drift,
            "delta_J": self.discrepancy.delta_total,
            "delta_j": self.discrepancy.delta_intra,
            "delta_P": self.discrepancy.delta_inter,
            "boundary_error": self.boundary_error,
            "shift_check_failures": self.shift_failures(),
            "parseval_error": self.spectrum.parseval_error,
            "steps": propagate::step_count(&self.pulse, self.config.run.steps_per_cycle),
            "threads": threads,
            "wall_time_s": wall_time_s,
            "checks": self.checks(),
            "passed": self.passed(),
        })
    }
}

/// Shortest round-trip representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_bands(path: &Path, bands: &BandStructure) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["k", "band", "energy_ev"])?;
    for kb in &bands.bands {
        for (n, e) in kb.energies.iter().enumerate() {
            w.write_record([fmt_f64(kb.k), n.to_string(), fmt_f64(hartree_to_ev(*e))])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_momentum(path: &Path, bands: &BandStructure, matels: &MatrixElements) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["k_index", "k", "n", "m", "p_re", "p_im"])?;
    for (i, p) in matels.momentum.iter().enumerate() {
        let k = bands.grid.points[i];
        for n in 0..p.rows() {
            for m in 0..p.cols() {
                let z = p[(n, m)];
                w.write_record([i.to_string(), fmt_f64(k), n.to_string(), m.to_string(), fmt_f64(z.re), fmt_f64(z.im)])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_overlap_defects(path: &Path, matels: &MatrixElements) -> Result<()> {
    let ov = &matels.overlaps;
    let rows: Vec<(usize, i64, usize, i64, f64)> = ov
        .sources()
        .par_iter()
        .flat_map_iter(|&src| {
            (-ov.max_shift..=ov.max_shift).map(move |shift| {
                let b = ov.block(src, shift).expect("shift inside precomputed range");
                (src, shift, b.target, b.wrap, matels::unitarity_defect(&b.s))
            })
        })
        .collect();
    let mut w = csv_writer(path)?;
    w.write_record(["source", "shift", "target", "wrap", "unitarity_defect"])?;
    for (src, shift, target, wrap, d) in rows {
        w.write_record([src.to_string(), shift.to_string(), target.to_string(), wrap.to_string(), fmt_f64(d)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const CURRENT_COLUMNS: [&str; 10] = ["t", "shift", "A", "F", "J_v", "j_v", "Pdot_v", "J_l", "j_l", "Pdot_l"];

pub fn write_currents(path: &Path, record: &CurrentRecord) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(CURRENT_COLUMNS)?;
    for s in &record.samples {
        w.write_record([
            fmt_f64(s.t),
            s.shift.to_string(),
            fmt_f64(s.vector_potential),
            fmt_f64(s.field),
            fmt_f64(s.velocity.total),
            fmt_f64(s.velocity.intra),
            fmt_f64(s.velocity.inter),
            fmt_f64(s.length.total),
            fmt_f64(s.length.intra),
            fmt_f64(s.length.inter),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read back a currents file written by [`write_currents`].
pub fn read_currents(path: &Path) -> Result<CurrentRecord> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let headers = r.headers()?.clone();
    if headers.iter().ne(CURRENT_COLUMNS.iter().copied()) {
        return Err(Error::Observables(format!("{}: unexpected columns", path.display())));
    }
    let mut record = CurrentRecord::default();
    for row in r.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|e| Error::Observables(format!("{}: bad number `{}`: {e}", path.display(), &row[i])))
        };
        let shift = row[1]
            .parse::<i64>()
            .map_err(|e| Error::Observables(format!("{}: bad shift `{}`: {e}", path.display(), &row[1])))?;
        record.samples.push(CurrentSample {
            t: num(0)?,
            shift,
            vector_potential: num(2)?,
            field: num(3)?,
            velocity: observables::GaugeCurrents {
                total: num(4)?,
                intra: num(5)?,
                inter: num(6)?,
            },
            length: observables::GaugeCurrents {
                total: num(7)?,
                intra: num(8)?,
                inter: num(9)?,
            },
        });
    }
    Ok(record)
}

pub fn write_spectrum(path: &Path, velocity: &Spectrum, length: &Spectrum) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["harmonic_order", "power", "power_length"])?;
    for (i, (o, p)) in velocity.harmonic_order.iter().zip(&velocity.power).enumerate() {
        let pl = length.power.get(i).copied().unwrap_or(f64::NAN);
        w.write_record([fmt_f64(*o), fmt_f64(*p), fmt_f64(pl)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_gauge_report(path: &Path, checks: &[ShiftCheck]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "shift", "max_norm_defect", "displacement", "integrated_shift", "pass"])?;
    for c in checks {
        w.write_record([
            fmt_f64(c.t),
            c.shift.to_string(),
            fmt_f64(c.max_norm_defect),
            c.displacement.to_string(),
            fmt_f64(c.integrated_shift),
            c.pass.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Observables(e.to_string()))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Outcome of a full run on disk.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub simulation: Simulation,
    pub written: Vec<PathBuf>,
    pub wall_time_s: f64,
}

/// Run everything and write the artifacts selected in `[output]`.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path, threads: usize) -> Result<RunSummary> {
    let start = Instant::now();
    let sim = simulate(cfg)?;
    ensure_dir(out_dir)?;
    let mut written = Vec::new();
    let out = &cfg.output;
    let mut emit = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let path = out_dir.join(name);
        f(&path)?;
        written.push(path);
        Ok(())
    };
    if out.bands {
        emit("bands.csv", &|p| write_bands(p, &sim.stage.bands))?;
    }
    if out.matels {
        emit("matels_k.csv", &|p| write_momentum(p, &sim.stage.bands, &sim.matels))?;
        emit("matels_shift.csv", &|p| write_overlap_defects(p, &sim.matels))?;
    }
    if out.currents {
        emit("currents.csv", &|p| write_currents(p, &sim.record))?;
    }
    if out.spectrum {
        emit("spectrum.csv", &|p| write_spectrum(p, &sim.spectrum, &sim.spectrum_length))?;
    }
    if out.gauge_report {
        emit("gauge_report.csv", &|p| write_gauge_report(p, &sim.shift_checks))?;
    }
    if out.svg {
        emit("currents.svg", &|p| crate::plot::write_currents_svg(p, &sim.record))?;
        emit("spectrum.svg", &|p| crate::plot::write_spectrum_svg(p, &sim.spectrum))?;
    }
    let wall_time_s = start.elapsed().as_secs_f64();
    let meta_path = out_dir.join("run_metadata.json");
    write_json(&meta_path, &sim.metadata(wall_time_s, threads))?;
    written.push(meta_path);
    Ok(RunSummary {
        simulation: sim,
        written,
        wall_time_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialKind;

    fn desk() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.potential.kind = PotentialKind::V2;
        cfg.potential.calibrate = false;
        cfg.grid.n_grid = 32;
        cfg.grid.n_k = 9;
        cfg.grid.n_bands = 32;
        cfg.pulse.duration_fs = 20.0;
        cfg.run.steps_per_cycle = 256;
        cfg
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn spectral_times_are_topped_up() {
        let t = spectral_sample_times(&[0.0, 10.0], 10.0);
        assert_eq!(t.len(), 65);
        let dense: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(spectral_sample_times(&dense, 99.0), dense);
    }

    #[test]
    fn desk_run_passes_checks() {
        let sim = simulate(&desk()).unwrap();
        for c in sim.checks() {
            assert!(c.pass, "{c:?}");
        }
        let first = sim.record.samples.first().unwrap();
        let scale = sim.record.samples.iter().map(|s| s.velocity.total.abs()).fold(0.0, f64::max);
        assert!(first.velocity.total.abs() < 1e-8 * scale);
        assert_eq!(sim.record.samples.len(), sim.gauge_times.len());
    }

    #[test]
    fn zero_field_gives_flat_currents() {
        let mut cfg = desk();
        cfg.pulse.peak_field_gvm = 0.0;
        let sim = simulate(&cfg).unwrap();
        let j0 = sim.record.samples[0].velocity.total;
        for s in &sim.record.samples {
            assert!((s.velocity.total - j0).abs() <= 1e-10 * j0.abs(), "{} vs {j0}", s.velocity.total);
            assert_eq!(s.velocity.inter, 0.0);
        }
        let dc = sim.spectrum.power[0];
        let comb = sim
            .spectrum
            .harmonic_order
            .iter()
            .zip(&sim.spectrum.power)
            .filter(|(o, _)| **o >= 1.5)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        assert!(comb <= 1e-20 * dc, "{comb} vs {dc}");
        for c in sim.checks() {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn currents_csv_round_trips() {
        let sim = simulate(&desk()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("currents.csv");
        write_currents(&path, &sim.record).unwrap();
        assert_eq!(read_currents(&path).unwrap(), sim.record);
    }
}
