//! Small dense complex Hermitian linear algebra.
//!
//! Matrices here are Gram matrices of a handful of vectors, so a cyclic
//! Jacobi eigensolver is both fast enough and accurate to near machine
//! precision.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of cyclic Jacobi sweeps.
pub const MAX_SWEEPS: usize = 100;

/// Relative asymmetry tolerated (and removed) at construction.
const HERMITIAN_RTOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Square complex matrix with `M = M†`, stored column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct HermitianMatrix {
    order: usize,
    entries: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column-major unitary matrix; column `k` belongs to `values[k]`.
    pub vectors: Vec<Complex64>,
    pub order: usize,
}

impl EigenDecomposition {
    pub fn vector(&self, k: usize) -> Vec<Complex64> {
        self.vectors[k * self.order..(k + 1) * self.order].to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdReport {
    pub psd: bool,
    pub min_eigenvalue: f64,
    pub threshold: f64,
    /// Unit eigenvector of the smallest eigenvalue, when that eigenvalue is negative.
    pub witness: Option<Vec<Complex64>>,
}

impl HermitianMatrix {
    /// Accepts a matrix that is Hermitian up to rounding and symmetrizes it.
    pub fn from_column_major(order: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != order * order {
            return Err(Error::InvalidArgument(format!(
                "{} entries for a matrix of order {order}",
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidArgument(
                "matrix has non-finite entries".into(),
            ));
        }
        let scale = frobenius(&entries);
        let mut asym = 0.0f64;
        for j in 0..order {
            for i in 0..=j {
                let d = entries[i + j * order] - entries[j + i * order].conj();
                asym = asym.max(d.norm());
            }
        }
        if asym > HERMITIAN_RTOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidArgument(format!(
                "matrix is not Hermitian (residual {asym:e})"
            )));
        }
        let mut m = HermitianMatrix { order, entries };
        m.symmetrize();
        Ok(m)
    }

    /// Row-major nested input.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(
                "matrix rows must form a square".into(),
            ));
        }
        let mut entries = vec![ZERO; n * n];
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                entries[i + j * n] = *v;
            }
        }
        Self::from_column_major(n, entries)
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn zeros(order: usize) -> Self {
        HermitianMatrix {
            order,
            entries: vec![ZERO; order * order],
        }
    }

    pub fn identity(order: usize) -> Self {
        Self::diagonal(&vec![1.0; order])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for (i, &x) in d.iter().enumerate() {
            m.entries[i + i * n] = Complex64::new(x, 0.0);
        }
        m
    }

    pub fn ones(order: usize) -> Self {
        HermitianMatrix {
            order,
            entries: vec![ONE; order * order],
        }
    }

    /// `X X†` for a column-major `order × cols` matrix `X`; always PSD.
    pub fn gram_of_columns(order: usize, x: &[Complex64]) -> Result<Self> {
        if order == 0 || !x.len().is_multiple_of(order) {
            return Err(Error::InvalidArgument(
                "factor shape does not match order".into(),
            ));
        }
        let cols = x.len() / order;
        let mut m = Self::zeros(order);
        for j in 0..order {
            for i in 0..=j {
                let v: Complex64 = (0..cols)
                    .map(|k| x[i + k * order] * x[j + k * order].conj())
                    .sum();
                m.entries[i + j * order] = v;
                m.entries[j + i * order] = v.conj();
            }
        }
        m.symmetrize();
        Ok(m)
    }

    fn symmetrize(&mut self) {
        let n = self.order;
        for j in 0..n {
            self.entries[j + j * n] = Complex64::new(self.entries[j + j * n].re, 0.0);
            for i in 0..j {
                let v = 0.5 * (self.entries[i + j * n] + self.entries[j + i * n].conj());
                self.entries[i + j * n] = v;
                self.entries[j + i * n] = v.conj();
            }
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i + j * self.order]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        (0..self.order)
            .map(|i| (0..self.order).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.entries)
    }

    fn check_order(&self, other: &HermitianMatrix) -> Result<()> {
        if self.order == other.order {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left: self.order,
                right: other.order,
            })
        }
    }

    fn zip_with(
        &self,
        other: &HermitianMatrix,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Self> {
        self.check_order(other)?;
        let mut m = HermitianMatrix {
            order: self.order,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        };
        m.symmetrize();
        Ok(m)
    }

    pub fn add(&self, other: &HermitianMatrix) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &HermitianMatrix) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Entrywise (Schur) product.
    pub fn hadamard(&self, other: &HermitianMatrix) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianMatrix {
            order: self.order,
            entries: self.entries.iter().map(|v| v * s).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.order;
        (0..n)
            .map(|i| (0..n).map(|j| self.entries[i + j * n] * v[j]).sum())
            .collect()
    }

    /// `v† M v`, real for Hermitian `M`.
    pub fn quadratic_form(&self, v: &[Complex64]) -> f64 {
        let mv = self.mul_vec(v);
        v.iter()
            .zip(&mv)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .re
    }

    pub fn det(&self) -> Complex64 {
        det_lu(self.order, &self.entries)
    }

    pub fn eig(&self) -> Result<EigenDecomposition> {
        eig_hermitian(self)
    }

    /// PSD test against the threshold `-tol · max(1, ‖M‖_F)`.
    pub fn is_psd(&self, tol: f64) -> Result<PsdReport> {
        let threshold = -tol * self.frobenius_norm().max(1.0);
        if self.order == 0 {
            return Ok(PsdReport {
                psd: true,
                min_eigenvalue: 0.0,
                threshold,
                witness: None,
            });
        }
        let eig = self.eig()?;
        let min = eig.values[0];
        Ok(PsdReport {
            psd: min >= threshold,
            min_eigenvalue: min,
            threshold,
            witness: (min < 0.0).then(|| eig.vector(0)),
        })
    }
}

fn frobenius(entries: &[Complex64]) -> f64 {
    entries.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Cyclic Jacobi eigensolver for complex Hermitian matrices.
///
/// Each rotation first removes the phase of the pivot `a_pq` with a diagonal
/// unitary and then applies the real symmetric Jacobi rotation.
pub fn eig_hermitian(m: &HermitianMatrix) -> Result<EigenDecomposition> {
    let n = m.order;
    let mut a = m.entries.clone();
    let mut v = vec![ZERO; n * n];
    for i in 0..n {
        v[i + i * n] = ONE;
    }
    let scale = frobenius(&a);
    let off = |a: &[Complex64]| -> f64 {
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    s += a[i + j * n].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut converged = scale == 0.0 || off(&a) <= f64::EPSILON * scale;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::ConvergenceFailure { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p + q * n];
                let g = apq.norm();
                if g <= f64::MIN_POSITIVE {
                    continue;
                }
                let phase = apq / g;
                let app = a[p + p * n].re;
                let aqq = a[q + q * n].re;
                let theta = (aqq - app) / (2.0 * g);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // U restricted to columns (p, q).
                let u_pp = Complex64::new(c, 0.0);
                let u_pq = Complex64::new(s, 0.0);
                let u_qp = -s * phase.conj();
                let u_qq = c * phase.conj();

                for k in 0..n {
                    let akp = a[k + p * n];
                    let akq = a[k + q * n];
                    a[k + p * n] = akp * u_pp + akq * u_qp;
                    a[k + q * n] = akp * u_pq + akq * u_qq;
                }
                for k in 0..n {
                    let apk = a[p + k * n];
                    let aqk = a[q + k * n];
                    a[p + k * n] = u_pp.conj() * apk + u_qp.conj() * aqk;
                    a[q + k * n] = u_pq.conj() * apk + u_qq.conj() * aqk;
                }
                a[p + q * n] = ZERO;
                a[q + p * n] = ZERO;
                a[p + p * n] = Complex64::new(a[p + p * n].re, 0.0);
                a[q + q * n] = Complex64::new(a[q + q * n].re, 0.0);

                for k in 0..n {
                    let vkp = v[k + p * n];
                    let vkq = v[k + q * n];
                    v[k + p * n] = vkp * u_pp + vkq * u_qp;
                    v[k + q * n] = vkp * u_pq + vkq * u_qq;
                }
            }
        }
        converged = off(&a) <= f64::EPSILON * scale;
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i + i * n].re.total_cmp(&a[j + j * n].re));
    let values = idx.iter().map(|&i| a[i + i * n].re).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &i in &idx {
        vectors.extend_from_slice(&v[i * n..(i + 1) * n]);
    }
    Ok(EigenDecomposition {
        values,
        vectors,
        order: n,
    })
}

/// Determinant of a general column-major complex matrix by LU with partial
/// pivoting.
pub fn det_lu(n: usize, entries: &[Complex64]) -> Complex64 {
    let mut a = entries.to_vec();
    let mut det = ONE;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i + col * n].norm().total_cmp(&a[j + col * n].norm()))
            .unwrap_or(col);
        if a[pivot + col * n] == ZERO {
            return ZERO;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col + k * n, pivot + k * n);
            }
            det = -det;
        }
        let d = a[col + col * n];
        det *= d;
        for r in (col + 1)..n {
            let factor = a[r + col * n] / d;
            if factor == ZERO {
                continue;
            }
            for k in col..n {
                let x = a[col + k * n];
                a[r + k * n] -= factor * x;
            }
        }
    }
    det
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: Vec<Vec<Complex64>>,
}

impl TryFrom<MatrixJson> for HermitianMatrix {
    type Error = Error;

    fn try_from(raw: MatrixJson) -> Result<Self> {
        HermitianMatrix::from_rows(&raw.rows)
    }
}

impl From<HermitianMatrix> for MatrixJson {
    fn from(m: HermitianMatrix) -> Self {
        MatrixJson { rows: m.rows() }
    }
}
