//! Small dense complex matrices and the Hermitian eigensolver bridge.
//!
//! Band-space matrices are at most a few dozen rows; a plain row-major
//! buffer is enough for them. Large Hermitian eigenproblems go to `faer`.

use std::ops::{Index, IndexMut};

use faer::{Mat, Side};
use num_complex::Complex64;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &CMat) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == ZERO {
                    continue;
                }
                let rrow = rhs.row(l);
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.rows];
        self.matvec_into(v, &mut out);
        out
    }

    pub fn matvec_into(&self, v: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(v.len(), self.cols);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: Complex64, other: &CMat) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + alpha * b).collect(),
        }
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| alpha * a).collect(),
        }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max |A - A†|` entrywise.
    pub fn hermiticity_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn to_faer(&self) -> Mat<Complex64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending; eigenvectors are
/// the columns of the returned matrix.
pub fn eigh(h: &CMat) -> Option<(Vec<f64>, CMat)> {
    let evd = h.to_faer().self_adjoint_eigen(Side::Lower).ok()?;
    let values: Vec<f64> = evd.S().column_vector().iter().map(|z| z.re).collect();
    let u = evd.U();
    let vectors = CMat::from_fn(h.rows, h.cols, |i, j| u[(i, j)]);
    Some((values, vectors))
}

pub fn eigvalsh(h: &CMat) -> Option<Vec<f64>> {
    h.to_faer().self_adjoint_eigenvalues(Side::Lower).ok()
}

/// Largest singular value of a Hermitian matrix, i.e. its largest |eigenvalue|.
pub fn hermitian_spectral_norm(h: &CMat) -> Option<f64> {
    Some(eigvalsh(h)?.into_iter().map(f64::abs).fold(0.0, f64::max))
}

pub fn vec_norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `exp(-i H) v` for Hermitian `H` by a scaled Taylor series.
///
/// The diagonal mean is removed first and restored as a phase; the remainder
/// is split into sub-steps of infinity norm at most 1/2, each summed until
/// the next term drops below machine precision.
pub fn expm_minus_i_apply(h: &CMat, v: &[Complex64]) -> Vec<Complex64> {
    let n = h.rows;
    assert_eq!(h.cols, n);
    assert_eq!(v.len(), n);
    let mu = h.diagonal().iter().map(|z| z.re).sum::<f64>() / n.max(1) as f64;
    let mut shifted = h.clone();
    for i in 0..n {
        shifted[(i, i)] -= mu;
    }
    let norm = shifted.inf_norm();
    let substeps = ((norm / 0.5).ceil() as usize).max(1);
    // -i H / s
    let gen = shifted.scale(Complex64::new(0.0, -1.0 / substeps as f64));

    let mut out = v.to_vec();
    let mut term = vec![ZERO; n];
    let mut next = vec![ZERO; n];
    for _ in 0..substeps {
        term.copy_from_slice(&out);
        let scale = out.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for order in 1..64 {
            gen.matvec_into(&term, &mut next);
            let inv = 1.0 / order as f64;
            let mut term_max = 0.0f64;
            for ((t, x), o) in term.iter_mut().zip(&next).zip(out.iter_mut()) {
                *t = x * inv;
                *o += *t;
                term_max = term_max.max(t.norm());
            }
            if term_max <= 1e-18 * scale {
                break;
            }
        }
    }
    let phase = Complex64::from_polar(1.0, -mu);
    out.iter_mut().for_each(|z| *z *= phase);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_hermitian(n: usize, spread: f64) -> CMat {
        let a = CMat::from_fn(n, n, |i, j| {
            Complex64::new(
                ((i * 7 + j * 3) % 11) as f64 * 0.1,
                ((i + 2 * j) % 5) as f64 * 0.07 - 0.1,
            )
        });
        let mut h = a.add_scaled(ONE, &a.adjoint()).scale(Complex64::new(0.5, 0.0));
        for i in 0..n {
            h[(i, i)] += spread * i as f64;
        }
        h
    }

    #[test]
    fn eigh_reconstructs() {
        let h = sample_hermitian(6, 1.0);
        let (vals, vecs) = eigh(&h).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let d = CMat::from_diagonal(&vals);
        let back = vecs.matmul(&d).matmul(&vecs.adjoint());
        assert!(back.add_scaled(-ONE, &h).max_abs() < 1e-12);
    }

    #[test]
    fn taylor_exponential_matches_spectral() {
        for spread in [0.1, 3.0, 40.0] {
            let h = sample_hermitian(8, spread);
            let v: Vec<Complex64> = (0..8).map(|i| Complex64::new(1.0 / (1.0 + i as f64), 0.3)).collect();
            let (vals, vecs) = eigh(&h).unwrap();
            let coeffs = vecs.adjoint().matvec(&v);
            let rotated: Vec<Complex64> = coeffs
                .iter()
                .zip(&vals)
                .map(|(c, e)| c * Complex64::from_polar(1.0, -e))
                .collect();
            let reference = vecs.matvec(&rotated);
            let got = expm_minus_i_apply(&h, &v);
            for (a, b) in got.iter().zip(&reference) {
                assert!((a - b).norm() < 1e-12, "spread {spread}: {a} vs {b}");
            }
            assert_relative_eq!(vec_norm_sqr(&got), vec_norm_sqr(&v), max_relative = 1e-13);
        }
    }

    #[test]
    fn hermiticity_of_sum_with_adjoint() {
        let a = CMat::from_fn(4, 4, |i, j| Complex64::new(i as f64, j as f64));
        assert!(a.hermiticity_defect() > 0.0);
        let h = a.add_scaled(ONE, &a.adjoint());
        assert_eq!(h.hermiticity_defect(), 0.0);
    }
}
