//! Finite linear combinations `Σ αᵢ Ψ(fᵢ)` of quadratic exponential vectors.
//!
//! Norms come from the kernel Gram matrix, so `Γ₂(T)` is a contraction on
//! the span of `Ψ(f₁), …, Ψ(f_l)` exactly when `B ⪯ A`, where `A` is the
//! Gram matrix of the `fᵢ` and `B` that of the `Tfᵢ`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_admissible, kernel_gram, CouplingConstant};
use crate::linalg::HermitianMatrix;
use crate::nparticle::inner_n_table;
use crate::operators::{apply, is_well_defined_gamma2, OperatorSpec};
use crate::sampling;
use crate::testfn::{Cell, StepFunction};

/// Default PSD tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Relative growth that counts as a contraction witness.
pub const WITNESS_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FockSpanJson", into = "FockSpanJson")]
pub struct FockSpan {
    coefficients: Vec<Complex64>,
    functions: Vec<StepFunction>,
    c: CouplingConstant,
}

#[derive(Serialize, Deserialize)]
struct FockSpanJson {
    #[serde(with = "crate::json::complex_vec")]
    coefficients: Vec<Complex64>,
    functions: Vec<StepFunction>,
    c: CouplingConstant,
}

impl TryFrom<FockSpanJson> for FockSpan {
    type Error = Error;

    fn try_from(raw: FockSpanJson) -> Result<Self> {
        FockSpan::new(raw.coefficients, raw.functions, raw.c)
    }
}

impl From<FockSpan> for FockSpanJson {
    fn from(s: FockSpan) -> Self {
        FockSpanJson {
            coefficients: s.coefficients,
            functions: s.functions,
            c: s.c,
        }
    }
}

impl FockSpan {
    pub fn new(
        coefficients: Vec<Complex64>,
        functions: Vec<StepFunction>,
        c: CouplingConstant,
    ) -> Result<Self> {
        if coefficients.is_empty() || coefficients.len() != functions.len() {
            return Err(Error::InvalidArgument(format!(
                "a span needs as many coefficients ({}) as functions ({}), at least one",
                coefficients.len(),
                functions.len()
            )));
        }
        for (i, f) in functions.iter().enumerate() {
            check_admissible(f, Some(i))?;
        }
        Ok(FockSpan {
            coefficients,
            functions,
            c,
        })
    }

    /// `Ψ(f)` alone.
    pub fn single(f: StepFunction, c: CouplingConstant) -> Result<Self> {
        FockSpan::new(vec![Complex64::new(1.0, 0.0)], vec![f], c)
    }

    /// The vacuum `Φ = Ψ(0)`.
    pub fn vacuum(dim: usize, c: CouplingConstant) -> Self {
        FockSpan {
            coefficients: vec![Complex64::new(1.0, 0.0)],
            functions: vec![StepFunction::zero(dim)],
            c,
        }
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn functions(&self) -> &[StepFunction] {
        &self.functions
    }

    pub fn coupling(&self) -> CouplingConstant {
        self.c
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn gram(&self) -> Result<HermitianMatrix> {
        kernel_gram(&self.functions, self.c)
    }
}

/// `‖Σ αᵢ Ψ(fᵢ)‖ = √(α† G α)`.
pub fn span_norm(xi: &FockSpan) -> Result<f64> {
    let g = xi.gram()?;
    Ok(g.quadratic_form(&xi.coefficients).max(0.0).sqrt())
}

/// `Σ αᵢ Ψ(fᵢ) ↦ Σ αᵢ Ψ(Tfᵢ)`.
pub fn gamma2_apply(t: &OperatorSpec, xi: &FockSpan) -> Result<FockSpan> {
    if !is_well_defined_gamma2(t) {
        return Err(Error::DomainViolation(
            "operator does not map the sup-norm ball into itself".into(),
        ));
    }
    let functions = xi
        .functions
        .iter()
        .map(|f| apply(t, f))
        .collect::<Result<Vec<_>>>()?;
    FockSpan::new(xi.coefficients.clone(), functions, xi.c)
}

/// `Γ₂(e^z) = e^{z H₀}` on a span, defined for `Re z ≤ 0`.
pub fn semigroup_apply(z: Complex64, xi: &FockSpan) -> Result<FockSpan> {
    if z.re > 0.0 {
        return Err(Error::DomainViolation(format!(
            "e^{{zH₀}} is only a contraction for Re z ≤ 0, got z = {z}"
        )));
    }
    gamma2_apply(&OperatorSpec::ScalarExp { z }, xi)
}

/// Checks that the `m`-particle component scales by `e^{itm}` under
/// `f ↦ e^{it} f`, i.e. `I_m(e^{it} f, g) = e^{-itm} I_m(f, g)` for all
/// `m ≤ n` (antilinear in the first slot).
pub fn h0_eigencheck(
    f: &StepFunction,
    g: &StepFunction,
    c: CouplingConstant,
    n: usize,
    t: f64,
    tol: f64,
) -> Result<bool> {
    check_admissible(f, Some(0))?;
    check_admissible(g, Some(1))?;
    let rotated = f.scale(Complex64::from_polar(1.0, t));
    let base = inner_n_table(f, g, c, n)?;
    let turned = inner_n_table(&rotated, g, c, n)?;
    Ok(base.iter().zip(&turned).enumerate().all(|(m, (b, r))| {
        let expected = Complex64::from_polar(1.0, -t * m as f64) * b;
        (r - expected).norm() <= tol * expected.norm() + f64::MIN_POSITIVE
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoewnerReport {
    /// `A − B ⪰ 0`, i.e. `B ⪯ A`.
    pub psd_a_minus_b: bool,
    pub min_eigenvalue: f64,
    pub threshold: f64,
    #[serde(with = "crate::json::complex_obj")]
    pub determinant: Complex64,
    /// Unit vector `v` with `v†(A − B)v < 0`, present when not PSD.
    #[serde(with = "crate::json::complex_vec_opt", default)]
    pub witness_vector: Option<Vec<Complex64>>,
}

/// Decides `B ⪯ A` from the spectrum of `A − B`.
pub fn loewner_leq(b: &HermitianMatrix, a: &HermitianMatrix, tol: f64) -> Result<LoewnerReport> {
    if a.order() != b.order() {
        return Err(Error::DimensionMismatch {
            left: b.order(),
            right: a.order(),
        });
    }
    let diff = a.sub(b)?;
    let psd = diff.is_psd(tol)?;
    Ok(LoewnerReport {
        psd_a_minus_b: psd.psd,
        min_eigenvalue: psd.min_eigenvalue,
        threshold: psd.threshold,
        determinant: diff.det(),
        witness_vector: if psd.psd { None } else { psd.witness },
    })
}

/// Two exponential vectors on which the window average increases a norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub lambda: f64,
    pub c: CouplingConstant,
    pub operator: OperatorSpec,
    pub functions: Vec<StepFunction>,
    pub images: Vec<StepFunction>,
    pub a: HermitianMatrix,
    pub b: HermitianMatrix,
    pub report: LoewnerReport,
}

impl Counterexample {
    /// The span `Σ vᵢ Ψ(fᵢ)` built from the Loewner witness.
    pub fn witness_span(&self) -> Option<FockSpan> {
        let v = self.report.witness_vector.clone()?;
        FockSpan::new(v, self.functions.clone(), self.c).ok()
    }
}

/// `f₁ = λχ_[0,½)`, `f₂ = λχ_[0,1)`, `T = Average([0,1))`; compares the Gram
/// matrices `A` of `f₁, f₂` and `B` of `Tf₁, Tf₂`.
pub fn counterexample(lambda: f64, c: CouplingConstant) -> Result<Counterexample> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "λ must be positive, got {lambda}"
        )));
    }
    let unit = Cell::interval(0.0, 1.0)?;
    let value = Complex64::new(lambda, 0.0);
    let functions = vec![
        StepFunction::constant(Cell::interval(0.0, 0.5)?, value),
        StepFunction::constant(unit.clone(), value),
    ];
    let operator = OperatorSpec::Average { window: unit };
    let a = kernel_gram(&functions, c)?;
    let images = functions
        .iter()
        .map(|f| apply(&operator, f))
        .collect::<Result<Vec<_>>>()?;
    let b = kernel_gram(&images, c)?;
    let report = loewner_leq(&b, &a, DEFAULT_TOL)?;
    Ok(Counterexample {
        lambda,
        c,
        operator,
        functions,
        images,
        a,
        b,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessSource {
    /// The sampled coefficients themselves.
    Sampled,
    /// The lowest eigenvector of `A − B` for the sampled functions.
    Eigenvector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub trial: usize,
    pub source: WitnessSource,
    pub span: FockSpan,
    pub norm_before: f64,
    pub norm_after: f64,
}

fn growth(a: &HermitianMatrix, b: &HermitianMatrix, v: &[Complex64]) -> Option<(f64, f64)> {
    let before = a.quadratic_form(v).max(0.0).sqrt();
    let after = b.quadratic_form(v).max(0.0).sqrt();
    (before > 0.0 && after > before * (1.0 + WITNESS_MARGIN)).then_some((before, after))
}

/// A random function of constant modulus and phase together with its
/// restrictions to random windows.
/// Independent samples rarely come close to linear dependence, which is
/// where norm growth shows up first.
fn nested_family(rng: &mut impl Rng, regions: &[Cell], l: usize) -> Result<Vec<StepFunction>> {
    let level = sampling::disk(rng, 0.45);
    let base = sampling::step_function_over(rng, regions, 6, 0.45).map_values(|_| level);
    let mut lo = regions[0].lo().to_vec();
    let mut hi = regions[0].hi().to_vec();
    for r in regions {
        for ax in 0..lo.len() {
            lo[ax] = lo[ax].min(r.lo()[ax]);
            hi[ax] = hi[ax].max(r.hi()[ax]);
        }
    }
    let mut family = vec![base.clone()];
    while family.len() < l {
        let (mut a, mut b) = (rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[0]..hi[0]));
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        if b <= a {
            continue;
        }
        let (mut wlo, mut whi) = (lo.clone(), hi.clone());
        wlo[0] = a;
        whi[0] = b;
        family.push(base.mul(&StepFunction::indicator(Cell::new(wlo, whi)?))?);
    }
    Ok(family)
}

/// `f, Tf, T²f, …`; norm growth is easiest to see near vectors that `T`
/// leaves nearly fixed.
fn orbit_family(
    rng: &mut impl Rng,
    t: &OperatorSpec,
    regions: &[Cell],
    l: usize,
) -> Option<Vec<StepFunction>> {
    let mut family = vec![sampling::step_function_over(rng, regions, 6, 0.45)];
    while family.len() < l {
        let next = apply(t, family.last()?).ok()?;
        if check_admissible(&next, None).is_err() {
            return None;
        }
        family.push(next);
    }
    Some(family)
}

/// Samples random spans (2 to 4 functions, at most 6 cells, values of
/// modulus ≤ 0.45) and returns the first one whose norm grows under `Γ₂(T)`.
/// Besides independent functions, a third of the trials use restrictions
/// of one function and a third use orbits `f, Tf, T²f, …`. Trials where `T`
/// cannot act on the sample are skipped.
pub fn contraction_witness_search(
    t: &OperatorSpec,
    c: CouplingConstant,
    trials: usize,
    seed: u64,
) -> Result<Option<Witness>> {
    if !is_well_defined_gamma2(t) {
        return Err(Error::DomainViolation(
            "operator does not map the sup-norm ball into itself".into(),
        ));
    }
    let regions = sampling::operator_regions(t)?;
    let mut rng = sampling::rng(seed);
    for trial in 0..trials {
        let l = rng.gen_range(2..=4);
        let functions = match rng.gen_range(0..3) {
            0 => (0..l)
                .map(|_| sampling::step_function_over(&mut rng, &regions, 6, 0.45))
                .collect(),
            1 => nested_family(&mut rng, &regions, l)?,
            _ => {
                let Some(orbit) = orbit_family(&mut rng, t, &regions, l) else {
                    continue;
                };
                orbit
            }
        };
        let coefficients = sampling::unit_ball(&mut rng, l);
        let Ok(images) = functions
            .iter()
            .map(|f| apply(t, f))
            .collect::<Result<Vec<_>>>()
        else {
            continue;
        };
        let (Ok(a), Ok(b)) = (kernel_gram(&functions, c), kernel_gram(&images, c)) else {
            continue;
        };
        let mut candidates = vec![(WitnessSource::Sampled, coefficients)];
        if let Some(v) = loewner_leq(&b, &a, DEFAULT_TOL)?.witness_vector {
            candidates.push((WitnessSource::Eigenvector, v));
        }
        for (source, v) in candidates {
            if let Some((norm_before, norm_after)) = growth(&a, &b, &v) {
                return Ok(Some(Witness {
                    trial,
                    source,
                    span: FockSpan::new(v, functions, c)?,
                    norm_before,
                    norm_after,
                }));
            }
        }
    }
    Ok(None)
}

/// Verifies `0 ⪯ A∘C ⪯ B∘D` given `0 ⪯ A ⪯ B` and `0 ⪯ C ⪯ D`.
pub fn schur_order_check(
    a: &HermitianMatrix,
    b: &HermitianMatrix,
    c: &HermitianMatrix,
    d: &HermitianMatrix,
    tol: f64,
) -> Result<bool> {
    let n = a.order();
    for m in [b, c, d] {
        if m.order() != n {
            return Err(Error::DimensionMismatch {
                left: n,
                right: m.order(),
            });
        }
    }
    let zero = HermitianMatrix::zeros(n);
    let preconditions = [
        ("0 ⪯ A", &zero, a),
        ("A ⪯ B", a, b),
        ("0 ⪯ C", &zero, c),
        ("C ⪯ D", c, d),
    ];
    for (name, lower, upper) in preconditions {
        if !loewner_leq(lower, upper, tol)?.psd_a_minus_b {
            return Err(Error::PreconditionFailed(format!("{name} does not hold")));
        }
    }
    let ac = a.hadamard(c)?;
    let bd = b.hadamard(d)?;
    Ok(ac.is_psd(tol)?.psd && loewner_leq(&ac, &bd, tol)?.psd_a_minus_b)
}
