//! n-particle inner products `I(n) = ⟨B⁺ⁿ_f Φ, B⁺ⁿ_g Φ⟩`.
//!
//! Two independent routes are provided:
//!
//! * the commutator recursion
//!   `I(n+1) = c Σ_{k=0}^{n} 2^{2k+1} n!(n+1)!/((n-k)!)² ⟨f^{k+1}, g^{k+1}⟩ I(n-k)`;
//! * the sum over integer partitions `n = Σ k·i_k` with weight
//!   `(n!)² Π_k (1/i_k!) (2^{2k-1} c ⟨f^k, g^k⟩ / k)^{i_k}`, i.e. Faà di Bruno
//!   applied to the kernel `exp(-(c/2) ∫ log(1 - 4t f̄ g))`.
//!
//! Summing `I(n)/(n!)²` reproduces the kernel; [`series_kernel`] does so with
//! a rigorous bound on the truncated tail.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_admissible, CouplingConstant};
use crate::testfn::{common_refinement, StepFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Recursion,
    PartitionSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NParticleInner {
    pub n: usize,
    pub value: Complex64,
    pub method: Method,
}

/// Integer partition of `n` stored as `(part, multiplicity)` pairs with
/// strictly decreasing parts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartitionMultiset {
    n: usize,
    multiplicities: Vec<(usize, usize)>,
}

impl PartitionMultiset {
    fn from_parts(parts: &[usize]) -> Self {
        let mut multiplicities: Vec<(usize, usize)> = Vec::new();
        for &p in parts {
            match multiplicities.last_mut() {
                Some((k, i)) if *k == p => *i += 1,
                _ => multiplicities.push((p, 1)),
            }
        }
        PartitionMultiset {
            n: parts.iter().sum(),
            multiplicities,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `(k, i_k)` pairs, largest part first; only nonzero multiplicities.
    pub fn multiplicities(&self) -> &[(usize, usize)] {
        &self.multiplicities
    }

    pub fn largest_part(&self) -> usize {
        self.multiplicities.first().map_or(0, |m| m.0)
    }

    /// Number of parts, `i_1 + … + i_k`.
    pub fn len(&self) -> usize {
        self.multiplicities.iter().map(|m| m.1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.multiplicities.is_empty()
    }
}

/// All partitions of `n`, in reverse lexicographic order of their
/// non-increasing part sequences: `[n], [n-1, 1], …, [1, …, 1]`.
pub fn enumerate_partitions(n: usize) -> Vec<PartitionMultiset> {
    let mut out = Vec::new();
    if n == 0 {
        out.push(PartitionMultiset::from_parts(&[]));
        return out;
    }
    let mut parts = vec![n];
    loop {
        out.push(PartitionMultiset::from_parts(&parts));
        // Strip trailing ones, decrement the last part > 1, refill greedily.
        let mut rem = 0;
        while parts.last() == Some(&1) {
            parts.pop();
            rem += 1;
        }
        let Some(last) = parts.last_mut() else {
            break;
        };
        *last -= 1;
        let cap = *last;
        rem += 1;
        while rem > 0 {
            let p = rem.min(cap);
            parts.push(p);
            rem -= p;
        }
    }
    out
}

/// `⟨f^k, g^k⟩` for `k = 1..=max_k`, sharing one refinement.
pub fn power_moments(f: &StepFunction, g: &StepFunction, max_k: usize) -> Result<Vec<Complex64>> {
    let r = common_refinement(f, g)?;
    Ok((1..=max_k).map(|k| r.inner_pow(k as u32)).collect())
}

/// `I(0..=n)` by the commutator recursion, given `moments[k-1] = ⟨f^k, g^k⟩`.
fn recursion_table(moments: &[Complex64], c: f64, n: usize) -> Result<Vec<Complex64>> {
    let mut table = Vec::with_capacity(n + 1);
    table.push(Complex64::new(1.0, 0.0));
    for m in 0..n {
        // weight(k) = 2^{2k+1} m!(m+1)!/((m-k)!)², built from weight(0) = 2(m+1)
        let mut weight = 2.0 * (m as f64 + 1.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..=m {
            if k > 0 {
                let r = (m - k + 1) as f64;
                weight *= 4.0 * r * r;
            }
            acc += weight * moments[k] * table[m - k];
        }
        let next = c * acc;
        if !(next.re.is_finite() && next.im.is_finite()) {
            return Err(Error::Overflow { n: m + 1 });
        }
        table.push(next);
    }
    Ok(table)
}

pub fn inner_n_recursive(
    f: &StepFunction,
    g: &StepFunction,
    c: CouplingConstant,
    n: usize,
) -> Result<NParticleInner> {
    let moments = power_moments(f, g, n)?;
    let table = recursion_table(&moments, c.get(), n)?;
    Ok(NParticleInner {
        n,
        value: table[n],
        method: Method::Recursion,
    })
}

/// `I(0..=n)` in one pass.
pub fn inner_n_table(
    f: &StepFunction,
    g: &StepFunction,
    c: CouplingConstant,
    n: usize,
) -> Result<Vec<Complex64>> {
    let moments = power_moments(f, g, n)?;
    recursion_table(&moments, c.get(), n)
}

/// Per-partition weighting used by [`inner_n_partition_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionWeights {
    /// `(n!)² Π_k (1/i_k!) (2^{2k-1} c / k)^{i_k}`; agrees with the kernel.
    FaaDiBruno,
    /// `(n!)² 2^{2n-1} c^{Σ i_k} / (Π_k i_k! · Π_k k^{i_k})`. Only correct for
    /// `n = 1`; kept as a known-wrong mutant for the self-test.
    UniformPrefactor,
}

fn partition_sum(
    moments: &[Complex64],
    c: f64,
    n: usize,
    weights: PartitionWeights,
) -> Result<Complex64> {
    let n_fact_sq = (1..=n).map(|k| k as f64).product::<f64>().powi(2);
    let mut total = Complex64::new(0.0, 0.0);
    for p in enumerate_partitions(n) {
        let mut term = Complex64::new(n_fact_sq, 0.0);
        if weights == PartitionWeights::UniformPrefactor && n > 0 {
            term *= 2f64.powi(2 * n as i32 - 1);
        }
        for &(k, i) in p.multiplicities() {
            let base = match weights {
                PartitionWeights::FaaDiBruno => {
                    2f64.powi(2 * k as i32 - 1) * c / k as f64 * moments[k - 1]
                }
                PartitionWeights::UniformPrefactor => c / k as f64 * moments[k - 1],
            };
            let i_fact: f64 = (1..=i).map(|j| j as f64).product();
            term *= base.powu(i as u32) / i_fact;
        }
        total += term;
    }
    if !(total.re.is_finite() && total.im.is_finite()) {
        return Err(Error::Overflow { n });
    }
    Ok(total)
}

pub fn inner_n_partition(
    f: &StepFunction,
    g: &StepFunction,
    c: CouplingConstant,
    n: usize,
) -> Result<NParticleInner> {
    inner_n_partition_with(f, g, c, n, PartitionWeights::FaaDiBruno)
}

pub fn inner_n_partition_with(
    f: &StepFunction,
    g: &StepFunction,
    c: CouplingConstant,
    n: usize,
    weights: PartitionWeights,
) -> Result<NParticleInner> {
    let moments = power_moments(f, g, n)?;
    Ok(NParticleInner {
        n,
        value: partition_sum(&moments, c.get(), n, weights)?,
        method: Method::PartitionSum,
    })
}

/// Inner product `⟨f^{⊗n}, g^{⊗n}⟩_n` of the interacting Fock space
/// isomorphic to the quadratic Fock space; the same sum as
/// [`inner_n_partition`].
pub fn ifs_inner(
    f: &StepFunction,
    g: &StepFunction,
    c: CouplingConstant,
    n: usize,
) -> Result<NParticleInner> {
    inner_n_partition(f, g, c, n)
}

/// Truncation control for the kernel series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    /// Last index kept in the partial sum.
    pub truncation: usize,
    /// Total bound: `truncation_error + rounding`.
    pub bound: f64,
    /// Geometric majorant of `|Σ_{m>N} I(m)/(m!)²|`.
    pub truncation_error: f64,
    /// Allowance for floating-point error of the partial sum.
    pub rounding: f64,
    /// Ratio `ρ` used for the geometric majorant.
    pub ratio_at_n: f64,
}

/// Sup over `m > n` of the per-step growth ratio of
/// `V_m = ‖B⁺ᵐ_f Φ‖ ‖B⁺ᵐ_g Φ‖ / (m!)²`.
///
/// From `‖B⁺ᵐ_f Φ‖² ≤ (4m(m-1)‖f‖∞² + 2mc‖f‖₂²) ‖B⁺⁽ᵐ⁻¹⁾_f Φ‖²` the ratio
/// `V_m / V_{m-1}` is at most `√(G_f(m) G_g(m))` with
/// `G(m) = 4‖f‖∞² + (2c‖f‖₂² - 4‖f‖∞²)/m`. Each `G` is monotone in `m`,
/// so its sup over `m > n` is `max(G(n+1), 4‖f‖∞²)`. No radius check.
pub fn tail_ratio(f: &StepFunction, g: &StepFunction, c: CouplingConstant, n: usize) -> f64 {
    let sup_g = |h: &StepFunction| {
        let a = h.norm_inf().powi(2);
        let b = h.norm_2_sq();
        let m = (n + 1) as f64;
        (4.0 * a + (2.0 * c.get() * b - 4.0 * a) / m).max(4.0 * a)
    };
    (sup_g(f) * sup_g(g)).sqrt()
}

/// `I(n)/(n!)²` for `n = 0..=n_max` without forming factorials:
/// `J(m+1) = c/(m+1) Σ_k 2^{2k+1} ⟨f^{k+1}, g^{k+1}⟩ J(m-k)`.
fn scaled_table(moments: &[Complex64], c: f64, n_max: usize) -> Vec<Complex64> {
    let mut table = Vec::with_capacity(n_max + 1);
    table.push(Complex64::new(1.0, 0.0));
    for m in 0..n_max {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut pow2 = 2.0;
        for k in 0..=m {
            acc += pow2 * moments[k] * table[m - k];
            pow2 *= 4.0;
        }
        table.push(c / (m as f64 + 1.0) * acc);
    }
    table
}

/// Partial sum `Σ_{n≤N} I(n)/(n!)²` of `⟨Ψ(f), Ψ(g)⟩` with a bound on the
/// distance to the full series.
pub fn series_kernel(
    f: &StepFunction,
    g: &StepFunction,
    c: CouplingConstant,
    truncation: usize,
) -> Result<(Complex64, TailBound)> {
    check_admissible(f, Some(0))?;
    check_admissible(g, Some(1))?;
    let rho = tail_ratio(f, g, c, truncation);
    if rho >= 1.0 {
        return Err(Error::TailNotContracting {
            n: truncation,
            ratio: rho,
        });
    }
    let cross = scaled_table(&power_moments(f, g, truncation)?, c.get(), truncation);
    let ff = scaled_table(&power_moments(f, f, truncation)?, c.get(), truncation);
    let gg = scaled_table(&power_moments(g, g, truncation)?, c.get(), truncation);

    let partial: Complex64 = cross.iter().sum();
    let abs_sum: f64 = cross.iter().map(|z| z.norm()).sum();
    // |I(m)| ≤ ‖B⁺ᵐ_f Φ‖ ‖B⁺ᵐ_g Φ‖, so V_N bounds the last kept term's envelope.
    let v_n = (ff[truncation].re.max(0.0) * gg[truncation].re.max(0.0)).sqrt();
    let truncation_error = v_n * rho / (1.0 - rho);
    let rounding = 16.0 * (truncation as f64 + 2.0) * f64::EPSILON * abs_sum;
    Ok((
        partial,
        TailBound {
            truncation,
            bound: truncation_error + rounding,
            truncation_error,
            rounding,
            ratio_at_n: rho,
        },
    ))
}

/// Checks `‖B⁺ᵐ_f Φ‖² ≤ (4m(m-1)‖f‖∞² + 2mc‖f‖₂²) ‖B⁺⁽ᵐ⁻¹⁾_f Φ‖²` for
/// `m = 1..=m_max`, up to a relative rounding slack of 1e-12.
pub fn norm_growth_check(f: &StepFunction, c: CouplingConstant, m_max: usize) -> Result<bool> {
    if m_max == 0 {
        return Err(Error::InvalidArgument("m_max must be at least 1".into()));
    }
    let norms = inner_n_table(f, f, c, m_max)?;
    let a = f.norm_inf().powi(2);
    let b = f.norm_2_sq();
    Ok((1..=m_max).all(|m| {
        let mf = m as f64;
        let rhs = (4.0 * mf * (mf - 1.0) * a + 2.0 * mf * c.get() * b) * norms[m - 1].re;
        norms[m].re <= rhs * (1.0 + 1e-12)
    }))
}
