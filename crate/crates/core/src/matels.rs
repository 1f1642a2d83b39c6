//! Bloch-basis matrix elements: momentum, velocity-gauge interaction and
//! cross-k overlaps.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bloch::BandStructure;
use crate::linalg::{self, CMat, ONE, ZERO};
use crate::units::{E0, HBAR, M_E};
use crate::{Error, Result};

/// `P_{nn'}(k) = ħk δ_{nn'} − iħ ∫_Ω u*_{n,k} ∂_x u_{n',k}`.
///
/// With `u` expanded in plane waves the derivative is exact and the matrix
/// reduces to `Σ_j c*_{n,j} ħ(k + G_j) c_{n',j}`.
pub fn momentum_matrix(bs: &BandStructure, k_index: usize) -> CMat {
    let kb = &bs.bands[k_index];
    let nb = bs.n_bands;
    let weights: Vec<f64> = bs.basis.g.iter().map(|g| HBAR * (kb.k + g)).collect();
    let mut p = CMat::zeros(nb, nb);
    for n in 0..nb {
        let rn = kb.coeffs.row(n);
        for m in n..nb {
            let rm = kb.coeffs.row(m);
            let v: Complex64 = rn
                .iter()
                .zip(rm)
                .zip(&weights)
                .map(|((x, y), w)| x.conj() * y * *w)
                .sum();
            if n == m {
                p[(n, n)] = Complex64::new(v.re, 0.0);
            } else {
                p[(n, m)] = v;
                p[(m, n)] = v.conj();
            }
        }
    }
    p
}

/// The `D_{nn'}(k) = −iħ ∫ u* ∂u` part of the momentum matrix.
pub fn gradient_matrix(bs: &BandStructure, k_index: usize) -> CMat {
    let k = bs.bands[k_index].k;
    let p = momentum_matrix(bs, k_index);
    p.add_scaled(Complex64::new(-HBAR * k, 0.0), &CMat::identity(bs.n_bands))
}

/// `(−e0/m) P A + (e0² A² / 2m) I`, the k-diagonal block of `H_ext^v`.
pub fn hext_v_matrix(p: &CMat, vector_potential: f64) -> CMat {
    let n = p.rows();
    let mut h = p.scale(Complex64::new(-E0 / M_E * vector_potential, 0.0));
    let diag = E0 * E0 * vector_potential * vector_potential / (2.0 * M_E);
    for i in 0..n {
        h[(i, i)] += diag;
    }
    h
}

/// `S_{nn'} = ∫_Ω u*_{n,k_i} e^{i w (2π/a) x} u_{n',k_j}`.
///
/// `wrap` is the number of reciprocal-lattice vectors separating the actual
/// momentum of the target state from its grid representative; on the cell
/// grid the phase factor is a cyclic shift of plane-wave labels. With
/// `wrap = 0` this is the plain cell overlap.
pub fn overlap_matrix_wrapped(bs: &BandStructure, k_i: usize, k_j: usize, wrap: i64) -> CMat {
    let nb = bs.n_bands;
    let n = bs.basis.len();
    let ci = &bs.bands[k_i].coeffs;
    let cj = &bs.bands[k_j].coeffs;
    let shift = wrap.rem_euclid(n as i64) as usize;
    CMat::from_fn(nb, nb, |a, b| {
        let ra = ci.row(a);
        let rb = cj.row(b);
        let mut acc = ZERO;
        for (j, x) in ra.iter().enumerate() {
            acc += x.conj() * rb[(j + n - shift) % n];
        }
        acc
    })
}

pub fn overlap_matrix(bs: &BandStructure, k_i: usize, k_j: usize) -> CMat {
    overlap_matrix_wrapped(bs, k_i, k_j, 0)
}

/// `‖S S† − I‖₂`, the largest singular value of the defect.
///
/// For a truncated overlap `S†S ≤ I`, so this bounds the norm lost by any
/// state transformed with `S`.
pub fn unitarity_defect(s: &CMat) -> f64 {
    let gram = s.matmul(&s.adjoint()).add_scaled(-ONE, &CMat::identity(s.rows()));
    linalg::hermitian_spectral_norm(&gram).unwrap_or(f64::INFINITY)
}

/// Overlap blocks `S^{k0 + s dk, k0}` for a set of source points and all
/// shifts `|s| <= max_shift`.
#[derive(Debug, Clone)]
pub struct OverlapTensor {
    pub max_shift: i64,
    sources: Vec<usize>,
    blocks: Vec<Vec<ShiftBlock>>,
}

#[derive(Debug, Clone)]
pub struct ShiftBlock {
    pub target: usize,
    pub wrap: i64,
    pub s: CMat,
}

impl OverlapTensor {
    pub fn compute(bs: &BandStructure, sources: &[usize], max_shift: i64) -> Self {
        let blocks = sources
            .par_iter()
            .map(|&src| {
                (-max_shift..=max_shift)
                    .map(|shift| {
                        let (target, wrap) = bs.grid.shifted(src, shift);
                        ShiftBlock {
                            target,
                            wrap,
                            s: overlap_matrix_wrapped(bs, target, src, wrap),
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            max_shift,
            sources: sources.to_vec(),
            blocks,
        }
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn block(&self, source: usize, shift: i64) -> Result<&ShiftBlock> {
        let missing = || Error::MissingOverlap {
            k_index: source,
            shift,
        };
        if shift.abs() > self.max_shift {
            return Err(missing());
        }
        let pos = self.sources.iter().position(|&s| s == source).ok_or_else(missing)?;
        Ok(&self.blocks[pos][(shift + self.max_shift) as usize])
    }

    /// Largest unitarity defect over all sources, per shift.
    pub fn defect_by_shift(&self) -> Vec<(i64, f64)> {
        (-self.max_shift..=self.max_shift)
            .map(|shift| {
                let idx = (shift + self.max_shift) as usize;
                let worst = self
                    .blocks
                    .par_iter()
                    .map(|row| unitarity_defect(&row[idx].s))
                    .reduce(|| 0.0, f64::max);
                (shift, worst)
            })
            .collect()
    }
}

/// All precomputed matrix elements a run needs.
#[derive(Debug, Clone)]
pub struct MatrixElements {
    /// `P(k)` at every grid point (including the duplicated zone edge).
    pub momentum: Vec<CMat>,
    pub overlaps: OverlapTensor,
}

impl MatrixElements {
    pub fn compute(bs: &BandStructure, sources: &[usize], max_shift: i64) -> Self {
        let momentum = (0..bs.grid.len())
            .into_par_iter()
            .map(|i| momentum_matrix(bs, i))
            .collect();
        Self {
            momentum,
            overlaps: OverlapTensor::compute(bs, sources, max_shift),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{compute_band_structure, KGrid, PhaseConvention};
    use crate::potential::{periodize, PotentialSpec};
    use crate::units::{to_internal, Unit};

    fn a() -> f64 {
        to_internal(0.5, Unit::Nanometre)
    }

    fn bands(spec: PotentialSpec, n: usize, m: usize, nb: usize) -> BandStructure {
        let s = periodize(&spec, n).unwrap();
        compute_band_structure(&KGrid::new(a(), m).unwrap(), &s, nb, PhaseConvention::MaxFourier).unwrap()
    }

    #[test]
    fn free_momentum_is_diagonal_in_plane_waves() {
        let bs = bands(PotentialSpec::free(a()), 32, 17, 4);
        // k = 0.25·(π/a)-ish point, away from degeneracies
        let ki = 10;
        let k = bs.grid.points[ki];
        let p = momentum_matrix(&bs, ki);
        let mut expected: Vec<f64> = (-3..=3).map(|j| k + 2.0 * std::f64::consts::PI * j as f64 / a()).collect();
        expected.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
        for n in 0..4 {
            assert!((p[(n, n)].re - expected[n]).abs() < 1e-12);
            for m in 0..4 {
                if m != n {
                    assert!(p[(n, m)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn momentum_hermitian_and_parity_selection() {
        let bs = bands(PotentialSpec::v2(a()), 64, 17, 6);
        for i in 0..bs.grid.len() {
            let p = momentum_matrix(&bs, i);
            assert!(p.hermiticity_defect() <= 1e-10);
            assert!(p.diagonal().iter().all(|z| z.im == 0.0));
        }
        let p0 = momentum_matrix(&bs, bs.grid.zero_index().unwrap());
        for n in 0..6 {
            assert!(p0[(n, n)].re.abs() <= 1e-10, "P_{n}{n}(0) = {}", p0[(n, n)]);
        }
    }

    #[test]
    fn interaction_matrix_scaling() {
        let bs = bands(PotentialSpec::v1(a()), 32, 9, 4);
        let p = momentum_matrix(&bs, 3);
        assert_eq!(hext_v_matrix(&p, 0.0).max_abs(), 0.0);
        let a1 = 0.07;
        let h1 = hext_v_matrix(&p, a1);
        let h2 = hext_v_matrix(&p, 2.0 * a1);
        let quad = |h: &CMat, av: f64| h.add_scaled(Complex64::new(E0 / M_E * av, 0.0), &p);
        let d1 = quad(&h1, a1);
        let d2 = quad(&h2, 2.0 * a1);
        for i in 0..4 {
            assert!((d2[(i, i)] - 4.0 * d1[(i, i)]).norm() < 1e-15);
        }
        let lin1 = h1.add_scaled(-ONE, &d1);
        let lin2 = h2.add_scaled(-ONE, &d2);
        assert!(lin2.add_scaled(Complex64::new(-2.0, 0.0), &lin1).max_abs() < 1e-15);
        assert!(h2.hermiticity_defect() <= 1e-15);
    }

    #[test]
    fn same_k_overlap_is_identity() {
        let bs = bands(PotentialSpec::v1(a()), 64, 17, 8);
        for i in 0..bs.grid.len() {
            let s = overlap_matrix(&bs, i, i);
            assert!(s.add_scaled(-ONE, &CMat::identity(8)).max_abs() <= 1e-10);
            assert!(unitarity_defect(&s) <= 1e-10);
        }
    }

    #[test]
    fn overlap_conjugate_symmetry() {
        let bs = bands(PotentialSpec::v2(a()), 32, 17, 5);
        let s12 = overlap_matrix(&bs, 2, 7);
        let s21 = overlap_matrix(&bs, 7, 2);
        assert!(s12.adjoint().add_scaled(-ONE, &s21).max_abs() <= 1e-12);
    }

    #[test]
    fn free_overlaps_are_permutations() {
        let bs = bands(PotentialSpec::free(a()), 32, 17, 5);
        // two generic (non-degenerate) k points
        let s = overlap_matrix(&bs, 9, 11);
        for n in 0..5 {
            let row_max = (0..5).map(|m| s[(n, m)].norm()).fold(0.0, f64::max);
            let row_sum: f64 = (0..5).map(|m| s[(n, m)].norm()).sum();
            assert!((row_max - 1.0).abs() < 1e-12 || row_max < 1e-12);
            assert!((row_sum - row_max).abs() < 1e-12);
        }
    }

    #[test]
    fn complete_basis_is_unitary() {
        let bs = bands(PotentialSpec::v2(a()), 16, 9, 16);
        for (i, j, w) in [(0, 3, 0), (6, 1, 1), (2, 5, -1)] {
            let s = overlap_matrix_wrapped(&bs, i, j, w);
            assert!(unitarity_defect(&s) <= 1e-10);
        }
    }

    #[test]
    fn truncation_defect_shrinks_with_bands() {
        let full = bands(PotentialSpec::v2(a()), 32, 17, 32);
        let mut defects = Vec::new();
        for nb in [2usize, 8, 32] {
            let s = overlap_matrix(&full, 8, 12);
            let sub = CMat::from_fn(nb, nb, |i, j| s[(i, j)]);
            defects.push(unitarity_defect(&sub));
        }
        assert!(defects[2] <= 1e-10);
        assert!(defects[0] >= defects[2]);
    }

    #[test]
    fn band_velocity_matches_energy_slope() {
        // centred difference error is O(dk²): halving dk quarters it
        let spec = PotentialSpec::v1(a());
        let s = periodize(&spec, 64).unwrap();
        let err_for = |m: usize| {
            let grid = KGrid::new(a(), m).unwrap();
            let bs = compute_band_structure(&grid, &s, 3, PhaseConvention::MaxFourier).unwrap();
            // k-point at 1/4 of the zone, away from extrema
            let i = (m - 1) / 4 + (m - 1) / 8;
            let p = momentum_matrix(&bs, i);
            let band = 1;
            let fd = (bs.energy(i + 1, band) - bs.energy(i - 1, band)) / (2.0 * grid.dk) / HBAR;
            (p[(band, band)].re / M_E - fd).abs()
        };
        let coarse = err_for(33);
        let fine = err_for(65);
        let ratio = coarse / fine;
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio} ({coarse}, {fine})");
    }
}
