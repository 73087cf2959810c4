//! Closed-form quadratic exponential-vector kernel
//! `⟨Ψ(f), Ψ(g)⟩ = exp(-(c/2) ∫ Log(1 - 4 f̄ g))`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::HermitianMatrix;
use crate::testfn::{common_refinement, StepFunction};

/// Existence radius of quadratic exponential vectors in the sup norm.
pub const EXISTENCE_RADIUS: f64 = 0.5;

/// The coupling constant `c > 0` of the commutation relations.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CouplingConstant(f64);

impl CouplingConstant {
    pub fn new(c: f64) -> Result<Self> {
        if c > 0.0 && c.is_finite() {
            Ok(CouplingConstant(c))
        } else {
            Err(Error::InvalidCoupling(c))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for CouplingConstant {
    type Error = Error;

    fn try_from(c: f64) -> Result<Self> {
        CouplingConstant::new(c)
    }
}

impl From<CouplingConstant> for f64 {
    fn from(c: CouplingConstant) -> f64 {
        c.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: Complex64,
    /// Principal logarithm of `value`.
    pub log_value: Complex64,
}

/// `Ψ(f)` exists iff `‖f‖∞ < 1/2`, strictly.
pub fn qexp_exists(f: &StepFunction) -> bool {
    f.norm_inf() < EXISTENCE_RADIUS
}

pub(crate) fn check_admissible(f: &StepFunction, index: Option<usize>) -> Result<()> {
    if qexp_exists(f) {
        Ok(())
    } else {
        Err(Error::Domain {
            index,
            norm_inf: f.norm_inf(),
        })
    }
}

/// Logarithm of the kernel without the admissibility check.
fn log_kernel(f: &StepFunction, g: &StepFunction, c: CouplingConstant) -> Result<Complex64> {
    let r = common_refinement(f, g)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (cell, u, v) in r.overlap() {
        let w = Complex64::new(1.0, 0.0) - 4.0 * u.conj() * v;
        // |4ūv| < 1 keeps w in the disk of radius 1 around 1, so the
        // principal branch is continuous along t ↦ 1 - 4tūv.
        assert!(w.re > 0.0, "1 - 4ūv left the right half-plane: {w}");
        acc += cell.measure() * w.ln();
    }
    Ok(-0.5 * c.get() * acc)
}

pub fn kernel(f: &StepFunction, g: &StepFunction, c: CouplingConstant) -> Result<KernelValue> {
    check_admissible(f, Some(0))?;
    check_admissible(g, Some(1))?;
    let log_value = log_kernel(f, g, c)?;
    Ok(KernelValue {
        value: log_value.exp(),
        log_value,
    })
}

/// Gram matrix `(⟨Ψ(f_i), Ψ(f_j)⟩)_{ij}`.
///
/// Only the upper triangle is evaluated; the lower one is its conjugate.
pub fn kernel_gram(fs: &[StepFunction], c: CouplingConstant) -> Result<HermitianMatrix> {
    for (i, f) in fs.iter().enumerate() {
        check_admissible(f, Some(i))?;
    }
    let n = fs.len();
    let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        for i in 0..=j {
            let v = if i == j {
                Complex64::new(log_kernel(&fs[i], &fs[j], c)?.re.exp(), 0.0)
            } else {
                log_kernel(&fs[i], &fs[j], c)?.exp()
            };
            entries[i + j * n] = v;
            entries[j + i * n] = v.conj();
        }
    }
    HermitianMatrix::from_column_major(n, entries)
}
