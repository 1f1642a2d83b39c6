//! The ten acceptance criteria. Each prints one PASS/FAIL line; the test
//! fails if any criterion fails.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use solid_hhg::bloch::{compute_band_structure, free_electron_levels, BandStructure, KGrid, PhaseConvention};
use solid_hhg::config::RunConfig;
use solid_hhg::linalg::{CMat, ZERO};
use solid_hhg::matels::{hext_v_matrix, momentum_matrix, overlap_matrix};
use solid_hhg::observables::{current_velocity, Normalisation};
use solid_hhg::pipeline::{run_pipeline, simulate, RunSummary, Simulation};
use solid_hhg::potential::{periodize, PotentialKind};
use solid_hhg::propagate::{init_state, propagate_k, richardson_factor, EnsembleMode, KBlock};
use solid_hhg::units::{hartree_to_ev, E0, HBAR, M_E};
use solid_hhg::Complex64;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(o: &Outcome) {
    // bypass the test harness capture so the lines always reach the log
    let mut out = std::io::stdout();
    let _ = writeln!(
        out,
        "acceptance {:>2} [{}] {}: {}",
        o.id,
        if o.pass { "PASS" } else { "FAIL" },
        o.name,
        o.detail
    );
    let _ = out.flush();
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

fn desk_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.potential.kind = PotentialKind::V2;
    cfg.potential.calibrate = false;
    cfg.grid.n_grid = 32;
    cfg.grid.n_k = 17;
    cfg.grid.n_bands = 32;
    cfg.pulse.duration_fs = 30.0;
    cfg
}

fn default_run(dir: &Path, threads: usize) -> RunSummary {
    let cfg = RunConfig::default();
    in_pool(threads, || run_pipeline(&cfg, dir, threads)).expect("default run")
}

fn criteria_1_2(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let sim = simulate(&desk_config()).expect("desk run");
    let secs = start.elapsed().as_secs_f64();
    let d = sim.discrepancy;
    out.push(Outcome {
        id: 1,
        name: "total current is gauge invariant (complete basis)",
        pass: d.delta_total <= 1e-8 && secs < 60.0,
        detail: format!("delta_J = {:e} (<= 1e-8), runtime {secs:.1} s (< 60 s)", d.delta_total),
    });
    out.push(Outcome {
        id: 2,
        name: "intraband split is gauge dependent",
        pass: d.delta_intra >= 1e3 * d.delta_total,
        detail: format!(
            "delta_j = {:e}, ratio to delta_J = {:e} (>= 1e3)",
            d.delta_intra,
            d.delta_intra / d.delta_total
        ),
    });
}

fn criterion_3(out: &mut Vec<Outcome>, sim: &Simulation, secs: f64) {
    let d = sim.discrepancy;
    out.push(Outcome {
        id: 3,
        name: "8-band truncation keeps totals close, splits apart",
        pass: d.delta_total <= 5e-2 && d.delta_intra >= 10.0 * d.delta_total,
        detail: format!(
            "delta_J = {:e} (<= 5e-2), delta_j = {:e} (>= 10 delta_J), runtime {secs:.1} s",
            d.delta_total, d.delta_intra
        ),
    });
}

fn criterion_4(out: &mut Vec<Outcome>, sim: &Simulation, dir: &Path) {
    let gap_ev = hartree_to_ev(sim.stage.gap.0);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("run_metadata.json")).expect("metadata")).expect("json");
    let raw = meta.get("raw_gap_ev").and_then(|v| v.as_f64());
    // independent check: eigenvalues at every distinct k of the calibrated crystal
    let bs = &sim.stage.bands;
    let oracle = bs.bands[..bs.grid.unique_len()]
        .iter()
        .map(|kb| kb.energies[1] - kb.energies[0])
        .fold(f64::INFINITY, f64::min);
    let pass = (gap_ev - 3.2).abs() <= 1e-3 && raw.is_some() && (hartree_to_ev(oracle) - gap_ev).abs() < 1e-12;
    out.push(Outcome {
        id: 4,
        name: "band gap calibrated to 3.2 eV",
        pass,
        detail: format!(
            "gap = {gap_ev:.6} eV (3.2 +- 1e-3), raw gap in metadata = {:?} eV, depth scale {:.6}",
            raw, sim.stage.potential.depth_scale
        ),
    });
}

fn free_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.potential.kind = PotentialKind::Free;
    cfg.potential.calibrate = false;
    cfg.grid.n_grid = 64;
    cfg.grid.n_k = 33;
    cfg.grid.n_bands = 8;
    cfg.pulse.duration_fs = 60.0;
    cfg
}

fn criterion_5(out: &mut Vec<Outcome>) {
    let cfg = free_config();
    let sim = simulate(&cfg).expect("free run");
    let bs = &sim.stage.bands;

    let mut band_err = 0.0f64;
    for kb in &bs.bands {
        let exact = free_electron_levels(kb.k, bs.grid.a, cfg.grid.n_bands);
        for (e, x) in kb.energies.iter().zip(&exact) {
            band_err = band_err.max((e - x).abs() / x.abs().max(1e-3));
        }
    }

    // k0 = 0 through the pipeline, plus several non-degenerate k0 directly
    let pulse = sim.pulse;
    let times: Vec<f64> = sim.gauge_times.iter().map(|g| g.t).collect();
    let mut interband = 0.0f64;
    let mut current_err = 0.0f64;
    let unique = bs.grid.unique_len();
    let mut checked = Vec::new();
    for src in [unique / 2, 3, 7, 12, 20, 29] {
        let kb = &bs.bands[src];
        let p = &sim.matels.momentum[src];
        let block = KBlock::new(&kb.energies, p, &pulse, true);
        let init = init_state(src, kb.k, 0, cfg.grid.n_bands).unwrap();
        let traj = propagate_k(&init, &block, &times, &cfg.propagation_options()).expect("free propagation");
        let norm = Normalisation::new(bs.grid.a, unique, 1);
        let expected: Vec<f64> = times
            .iter()
            .map(|&t| E0 / M_E * (HBAR * kb.k - E0 * pulse.vector_potential(t)) / norm.volume)
            .collect();
        let scale = expected.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (c, (&t, x)) in traj.amplitudes.iter().zip(times.iter().zip(&expected)) {
            interband = interband.max(c[1..].iter().map(|z| z.norm_sqr()).sum::<f64>());
            let j = current_velocity(&[(src, c.as_slice())], pulse.vector_potential(t), &sim.matels.momentum, &norm)
                .unwrap()
                .total;
            current_err = current_err.max((j - x).abs() / scale);
        }
        checked.push(src);
    }
    // the pipeline's own k0 = 0 record against the closed form
    let norm = sim.normalisation;
    let pipeline_err = sim
        .record
        .samples
        .iter()
        .map(|s| (s.velocity.total - (-E0 * E0 / M_E * s.vector_potential / norm.volume)).abs())
        .fold(0.0f64, f64::max)
        / sim.record.samples.iter().fold(0.0f64, |m, s| m.max(s.velocity.total.abs()));
    current_err = current_err.max(pipeline_err);

    out.push(Outcome {
        id: 5,
        name: "free-electron oracle",
        pass: band_err <= 1e-10 && interband <= 1e-10 && current_err <= 1e-8,
        detail: format!(
            "band rel err {band_err:e} (<= 1e-10), interband population {interband:e} (<= 1e-10), \
             current rel err {current_err:e} (<= 1e-8) at k-indices {checked:?}"
        ),
    });
}

fn criterion_6(out: &mut Vec<Outcome>, sim: &Simulation) {
    let src = sim.sources[0];
    let kb = &sim.stage.bands.bands[src];
    let block = KBlock::new(&kb.energies, &sim.matels.momentum[src], &sim.pulse, true);
    let init = init_state(src, kb.k, sim.config.grid.valence_band, sim.config.grid.n_bands).unwrap();
    let (factor, diffs) = richardson_factor(&init, &block, &sim.config.propagation_options()).expect("richardson");
    out.push(Outcome {
        id: 6,
        name: "norm conservation and fourth-order convergence",
        pass: sim.max_norm_drift <= 1e-8 && (12.0..=20.0).contains(&factor),
        detail: format!(
            "norm drift {:e} (<= 1e-8), step-halving factor {factor:.3} in [12, 20] (changes {:e}, {:e})",
            sim.max_norm_drift, diffs[0], diffs[1]
        ),
    });
}

fn criterion_7(out: &mut Vec<Outcome>) {
    let mut cfg = RunConfig::default();
    cfg.run.ensemble = EnsembleMode::FullBand;
    let start = Instant::now();
    let sim = simulate(&cfg).expect("full-band run");
    let failures = sim.shift_failures();
    let matches = sim.shift_checks.iter().all(|c| c.displacement == c.shift);
    out.push(Outcome {
        id: 7,
        name: "acceleration theorem at every gauge time (full band)",
        pass: failures == 0 && matches && !sim.shift_checks.is_empty(),
        detail: format!(
            "{} gauge times, {} occupied k, {failures} failures, max |shift| {}, runtime {:.1} s",
            sim.shift_checks.len(),
            sim.sources.len(),
            sim.shift_checks.iter().map(|c| c.shift.abs()).max().unwrap_or(0),
            start.elapsed().as_secs_f64()
        ),
    });
}

/// `Σ_j c*_{n,j} (k + G_j) c_{m,j}` for every (n, m) without symmetrisation.
fn raw_momentum(bs: &BandStructure, k_index: usize) -> CMat {
    let kb = &bs.bands[k_index];
    CMat::from_fn(bs.n_bands, bs.n_bands, |n, m| {
        let rn = kb.coeffs.row(n);
        let rm = kb.coeffs.row(m);
        let mut acc = ZERO;
        for (j, g) in bs.basis.g.iter().enumerate() {
            acc += rn[j].conj() * rm[j] * (HBAR * (kb.k + g));
        }
        acc
    })
}

fn band_velocity_error(bs: &BandStructure, stride: usize, band: usize) -> Vec<f64> {
    let unique = bs.grid.unique_len();
    (1..unique / stride)
        .map(|i| {
            let k = i * stride;
            let p = momentum_matrix(bs, k)[(band, band)].re / M_E;
            let fd = (bs.energy(k + 1, band) - bs.energy(k - 1, band)) / (2.0 * bs.grid.dk);
            (p - fd).abs()
        })
        .collect()
}

fn criterion_8(out: &mut Vec<Outcome>, sim: &Simulation) {
    let bs = &sim.stage.bands;
    let a0 = sim.pulse.amplitude;
    let mut p_herm = 0.0f64;
    let mut p_match = 0.0f64;
    let mut h_herm = 0.0f64;
    let mut s_ident = 0.0f64;
    for k in 0..bs.grid.len() {
        let raw = raw_momentum(bs, k);
        p_herm = p_herm.max(raw.hermiticity_defect());
        let p = &sim.matels.momentum[k];
        p_match = p_match.max(p.add_scaled(Complex64::new(-1.0, 0.0), &raw).max_abs());
        h_herm = h_herm.max(hext_v_matrix(p, a0).hermiticity_defect());
        let s = overlap_matrix(bs, k, k);
        s_ident = s_ident.max(s.add_scaled(Complex64::new(-1.0, 0.0), &CMat::identity(bs.n_bands)).max_abs());
    }

    // band velocity P_nn/m against centred differences of E(k), at the
    // k-points shared by the grid and its refinement
    let samples = periodize(&sim.stage.potential, sim.config.grid.n_grid).unwrap();
    let m = sim.config.grid.n_k;
    let coarse = compute_band_structure(&KGrid::new(bs.grid.a, m).unwrap(), &samples, 2, PhaseConvention::MaxFourier).unwrap();
    let fine = compute_band_structure(&KGrid::new(bs.grid.a, 2 * m - 1).unwrap(), &samples, 2, PhaseConvention::MaxFourier).unwrap();
    let mut ratios = Vec::new();
    for band in 0..2 {
        let ec = band_velocity_error(&coarse, 1, band);
        let ef = band_velocity_error(&fine, 2, band);
        let worst_c = ec.iter().copied().fold(0.0, f64::max);
        let worst_f = ef.iter().copied().fold(0.0, f64::max);
        ratios.push(worst_c / worst_f);
    }
    let fd_ok = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    out.push(Outcome {
        id: 8,
        name: "matrix-element properties",
        pass: p_herm <= 1e-10 && p_match <= 1e-10 && h_herm <= 1e-10 && s_ident <= 1e-10 && fd_ok,
        detail: format!(
            "P hermiticity {p_herm:e}, P vs raw sum {p_match:e}, H_ext hermiticity {h_herm:e}, \
             |S^kk - I| {s_ident:e} (all <= 1e-10); band-velocity error ratio on halving dk {ratios:.3?} (~4)"
        ),
    });
}

fn criterion_9(out: &mut Vec<Outcome>, sim: &Simulation) {
    let first = sim.record.samples.first().unwrap();
    let last = sim.record.samples.last().unwrap();
    let ends_ok = first.t == 0.0 && last.t == sim.pulse.duration && first.shift == 0 && last.shift == 0;
    out.push(Outcome {
        id: 9,
        name: "gauges coincide at t = 0 and t = T",
        pass: ends_ok && sim.boundary_error <= 1e-12,
        detail: format!(
            "max(|b - c|, |J_v - J_l| rel) = {:e} (<= 1e-12); J_v - J_l = {:e} at 0, {:e} at T",
            sim.boundary_error,
            first.velocity.total - first.length.total,
            last.velocity.total - last.length.total
        ),
    });
}

fn criterion_10(out: &mut Vec<Outcome>, a: &Path, b: &Path, threads: (usize, usize)) {
    let names = ["bands.csv", "matels_k.csv", "matels_shift.csv", "currents.csv", "spectrum.csv", "gauge_report.csv"];
    let mut differing = Vec::new();
    for n in names {
        let x = fs::read(a.join(n)).expect("csv A");
        let y = fs::read(b.join(n)).expect("csv B");
        if x != y || x.is_empty() {
            differing.push(n);
        }
    }
    out.push(Outcome {
        id: 10,
        name: "byte-identical CSVs across thread counts",
        pass: differing.is_empty(),
        detail: format!(
            "{} files compared between {} and {} threads; differing: {:?}",
            names.len(),
            threads.0,
            threads.1,
            differing
        ),
    });
}

#[test]
fn acceptance_criteria() {
    let mut outcomes = Vec::new();
    criteria_1_2(&mut outcomes);

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let run_a = default_run(dir_a.path(), 1);
    let secs = start.elapsed().as_secs_f64();
    let sim = &run_a.simulation;
    criterion_3(&mut outcomes, sim, secs);
    criterion_4(&mut outcomes, sim, dir_a.path());
    criterion_5(&mut outcomes);
    criterion_6(&mut outcomes, sim);
    criterion_7(&mut outcomes);
    criterion_8(&mut outcomes, sim);
    criterion_9(&mut outcomes, sim);
    let _run_b = default_run(dir_b.path(), 3);
    criterion_10(&mut outcomes, dir_a.path(), dir_b.path(), (1, 3));

    outcomes.sort_by_key(|o| o.id);
    for o in &outcomes {
        report(o);
    }
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "acceptance criteria failed: {failed:?}");
}
