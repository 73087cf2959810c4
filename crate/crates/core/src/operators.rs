//! One-particle operators on step functions and the classification of
//! their quadratic second quantization `Γ₂(T): Ψ(f) ↦ Ψ(Tf)`.
//!
//! The operator grammar ([`OperatorSpec`]) covers multiplications, gauge
//! transformations, measure-preserving cell rearrangements, window
//! averages, scalar exponentials and compositions. In this finite model a
//! *-endomorphism is a [`CellMap`]: disjoint sources sent affinely onto
//! disjoint targets of equal measure. It is a *-automorphism when the
//! targets tile the same region as the sources.
//!
//! [`decompose_isometry`] goes the other way: from the images of indicator
//! functions it recovers a phase `α` and a cell map `τ` with
//! `T = e^{iα} T_τ`, or reports which structural property fails.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::testfn::{inner_pow, measures_match, refine_all, Cell, StepFunction};

/// Slack on `|T χ_I| = 1` over the support of `T χ_I`.
pub const UNIMODULAR_TOL: f64 = 1e-10;
/// Relative slack on measure equalities.
pub const MEASURE_TOL: f64 = 1e-12;
/// Pointwise slack of the decomposition round trip.
pub const ROUND_TRIP_TOL: f64 = 1e-12;
/// Tolerance of the moment comparison `⟨(Tf)^k, (Tg)^k⟩ = ⟨f^k, g^k⟩`.
pub const MOMENT_TOL: f64 = 1e-10;

/// Allowed measure drift of a box under an affine move: relative slack plus a
/// few ulps of each endpoint, which dominates for very thin boxes.
fn measure_slack(cell: &Cell) -> f64 {
    let sides: Vec<f64> = cell
        .lo()
        .iter()
        .zip(cell.hi())
        .map(|(a, b)| b - a)
        .collect();
    let mut ulps = 0.0;
    for (i, (lo, hi)) in cell.lo().iter().zip(cell.hi()).enumerate() {
        let others: f64 = sides
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, s)| s)
            .product();
        ulps += 8.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1.0) * others;
    }
    MEASURE_TOL * cell.measure() + ulps
}

/// Measure-preserving injective map between boxes.
///
/// Each pair sends its source affinely (per axis) onto its target; the
/// Jacobian is `|target| / |source| = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CellPair>", into = "Vec<CellPair>")]
pub struct CellMap {
    pairs: Vec<(Cell, Cell)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellPair {
    source: Cell,
    target: Cell,
}

impl TryFrom<Vec<CellPair>> for CellMap {
    type Error = Error;

    fn try_from(raw: Vec<CellPair>) -> Result<Self> {
        CellMap::new(raw.into_iter().map(|p| (p.source, p.target)).collect())
    }
}

impl From<CellMap> for Vec<CellPair> {
    fn from(m: CellMap) -> Self {
        m.pairs
            .into_iter()
            .map(|(source, target)| CellPair { source, target })
            .collect()
    }
}

fn pairwise_disjoint<'a>(cells: impl Iterator<Item = &'a Cell> + Clone) -> Option<(usize, usize)> {
    let v: Vec<&Cell> = cells.collect();
    for i in 0..v.len() {
        for j in (i + 1)..v.len() {
            if v[i].intersect(v[j]).is_some() {
                return Some((i, j));
            }
        }
    }
    None
}

impl CellMap {
    pub fn new(pairs: Vec<(Cell, Cell)>) -> Result<Self> {
        if let Some((s, _)) = pairs.first() {
            let dim = s.dim();
            for (s, t) in &pairs {
                for d in [s.dim(), t.dim()] {
                    if d != dim {
                        return Err(Error::DimensionMismatch {
                            left: dim,
                            right: d,
                        });
                    }
                }
            }
        }
        for (i, (s, t)) in pairs.iter().enumerate() {
            if (s.measure() - t.measure()).abs() > measure_slack(s).max(measure_slack(t)) {
                return Err(Error::InvalidOperator(format!(
                    "pair {i} is not measure preserving: |source| = {}, |target| = {}",
                    s.measure(),
                    t.measure()
                )));
            }
        }
        if let Some((i, j)) = pairwise_disjoint(pairs.iter().map(|p| &p.0)) {
            return Err(Error::InvalidOperator(format!(
                "sources {i} and {j} overlap"
            )));
        }
        if let Some((i, j)) = pairwise_disjoint(pairs.iter().map(|p| &p.1)) {
            return Err(Error::InvalidOperator(format!(
                "targets {i} and {j} overlap"
            )));
        }
        Ok(CellMap { pairs })
    }

    pub fn identity(cells: &[Cell]) -> Result<Self> {
        CellMap::new(cells.iter().map(|c| (c.clone(), c.clone())).collect())
    }

    /// Translation of each cell by `shift`.
    pub fn translation(cells: &[Cell], shift: &[f64]) -> Result<Self> {
        let pairs = cells
            .iter()
            .map(|c| {
                let lo = c.lo().iter().zip(shift).map(|(a, s)| a + s).collect();
                let hi = c.hi().iter().zip(shift).map(|(a, s)| a + s).collect();
                Ok((c.clone(), Cell::new(lo, hi)?))
            })
            .collect::<Result<Vec<_>>>()?;
        CellMap::new(pairs)
    }

    pub fn pairs(&self) -> &[(Cell, Cell)] {
        &self.pairs
    }

    pub fn dim(&self) -> Option<usize> {
        self.pairs.first().map(|p| p.0.dim())
    }

    pub fn sources(&self) -> impl Iterator<Item = &Cell> {
        self.pairs.iter().map(|p| &p.0)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Cell> {
        self.pairs.iter().map(|p| &p.1)
    }

    /// True when the targets tile exactly the region covered by the sources.
    pub fn is_bijective(&self) -> bool {
        let total: f64 = self.sources().map(Cell::measure).sum();
        let covered: f64 = self
            .targets()
            .flat_map(|t| self.sources().map(move |s| t.overlap_measure(s)))
            .sum();
        measures_match(covered, total)
    }
}

/// Image of `piece ⊂ source` under the affine map `source → target`.
/// Boundaries shared with the source land exactly on the target's.
fn affine_image(source: &Cell, target: &Cell, piece: &Cell) -> Result<Cell> {
    let dim = source.dim();
    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    for ax in 0..dim {
        let (s0, s1) = (source.lo()[ax], source.hi()[ax]);
        let (t0, t1) = (target.lo()[ax], target.hi()[ax]);
        let scale = (t1 - t0) / (s1 - s0);
        let map = |x: f64| {
            if x == s0 {
                t0
            } else if x == s1 {
                t1
            } else {
                t0 + (x - s0) * scale
            }
        };
        lo.push(map(piece.lo()[ax]));
        hi.push(map(piece.hi()[ax]));
    }
    Cell::new(lo, hi)
}

/// Symbolic one-particle operator.
///
/// JSON form: `{"op": "compose", "items": [{"op": "gauge", "alpha": …},
/// {"op": "rearrange", "pairs": [{"source": …, "target": …}]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OperatorSpec {
    /// `f ↦ φ f`.
    Mult { phi: StepFunction },
    /// `f ↦ e^{iα} f` with real `α` (zero off its cells).
    Gauge { alpha: StepFunction },
    /// `f ↦ f ∘ τ⁻¹` on the sources of `pairs`.
    Rearrange {
        pairs: CellMap,
        /// Silently drop support outside the sources instead of failing.
        #[serde(default)]
        allow_unmapped: bool,
    },
    /// `f ↦ (∫_W f) χ_W`.
    Average { window: Cell },
    /// `f ↦ e^z f`.
    ScalarExp {
        #[serde(with = "crate::json::complex_obj")]
        z: Complex64,
    },
    /// Product of the items, applied right to left.
    Compose { items: Vec<OperatorSpec> },
}

impl OperatorSpec {
    pub fn identity() -> Self {
        OperatorSpec::ScalarExp {
            z: Complex64::new(0.0, 0.0),
        }
    }

    pub fn gauge(alpha: StepFunction) -> Result<Self> {
        let op = OperatorSpec::Gauge { alpha };
        op.validate()?;
        Ok(op)
    }

    pub fn rearrange(pairs: CellMap) -> Self {
        OperatorSpec::Rearrange {
            pairs,
            allow_unmapped: false,
        }
    }

    /// `S ∘ T`.
    pub fn then_after(self, inner: OperatorSpec) -> Self {
        OperatorSpec::Compose {
            items: vec![self, inner],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OperatorSpec::Gauge { alpha } => {
                if let Some(v) = alpha.values().iter().find(|v| v.im != 0.0) {
                    return Err(Error::InvalidOperator(format!(
                        "gauge phase must be real, got {v}"
                    )));
                }
                Ok(())
            }
            OperatorSpec::ScalarExp { z } if !(z.re.is_finite() && z.im.is_finite()) => {
                Err(Error::InvalidOperator(format!("non-finite exponent {z}")))
            }
            OperatorSpec::Compose { items } => items.iter().try_for_each(OperatorSpec::validate),
            _ => Ok(()),
        }
    }

    /// Non-composite factors, outermost first.
    pub fn factors(&self) -> Vec<&OperatorSpec> {
        match self {
            OperatorSpec::Compose { items } => items.iter().flat_map(|t| t.factors()).collect(),
            other => vec![other],
        }
    }

    /// Cells that carry the operator's geometry (multipliers, phases,
    /// rearrangement sources and targets, averaging windows).
    pub fn geometry_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for t in self.factors() {
            match t {
                OperatorSpec::Mult { phi } => out.extend(phi.cells().iter().cloned()),
                OperatorSpec::Gauge { alpha } => out.extend(alpha.cells().iter().cloned()),
                OperatorSpec::Rearrange { pairs, .. } => {
                    for (s, t) in pairs.pairs() {
                        out.push(s.clone());
                        out.push(t.clone());
                    }
                }
                OperatorSpec::Average { window } => out.push(window.clone()),
                OperatorSpec::ScalarExp { .. } | OperatorSpec::Compose { .. } => {}
            }
        }
        out
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            left: expected,
            right: got,
        })
    }
}

/// One-particle action `f ↦ Tf`.
pub fn apply(t: &OperatorSpec, f: &StepFunction) -> Result<StepFunction> {
    t.validate()?;
    apply_unchecked(t, f)
}

fn apply_unchecked(t: &OperatorSpec, f: &StepFunction) -> Result<StepFunction> {
    match t {
        OperatorSpec::Mult { phi } => phi.mul(f),
        OperatorSpec::Gauge { alpha } => {
            let p = refine_all(&[alpha, f])?;
            let mut cells = Vec::new();
            let mut values = Vec::new();
            for (cell, v) in p.cells.into_iter().zip(p.values) {
                if let Some(fv) = v[1] {
                    let phase = v[0].map_or(0.0, |a| a.re);
                    cells.push(cell);
                    values.push(Complex64::from_polar(1.0, phase) * fv);
                }
            }
            Ok(StepFunction::from_disjoint(f.dim(), cells, values))
        }
        OperatorSpec::Rearrange {
            pairs,
            allow_unmapped,
        } => {
            if let Some(d) = pairs.dim() {
                check_dim(d, f.dim())?;
            }
            let mut cells = Vec::new();
            let mut values = Vec::new();
            let mut mapped = 0.0;
            for (source, target) in pairs.pairs() {
                for (cell, v) in f.iter() {
                    if let Some(piece) = cell.intersect(source) {
                        if v != Complex64::new(0.0, 0.0) {
                            mapped += piece.measure();
                        }
                        cells.push(affine_image(source, target, &piece)?);
                        values.push(v);
                    }
                }
            }
            let support = f.support_measure();
            let unmapped = support - mapped;
            if !allow_unmapped && unmapped > MEASURE_TOL * support.max(1.0) {
                return Err(Error::UnmappedSupport { measure: unmapped });
            }
            Ok(StepFunction::from_disjoint(f.dim(), cells, values))
        }
        OperatorSpec::Average { window } => {
            check_dim(window.dim(), f.dim())?;
            let integral: Complex64 = f
                .iter()
                .map(|(cell, v)| cell.overlap_measure(window) * v)
                .sum();
            Ok(StepFunction::constant(window.clone(), integral))
        }
        OperatorSpec::ScalarExp { z } => {
            if *z == Complex64::new(0.0, 0.0) {
                Ok(f.clone())
            } else {
                Ok(f.scale(z.exp()))
            }
        }
        OperatorSpec::Compose { items } => items
            .iter()
            .rev()
            .try_fold(f.clone(), |acc, t| apply_unchecked(t, &acc)),
    }
}

/// Structural test that `T` maps the sup-norm ball into itself, which is
/// exactly when `Γ₂(T)` is defined on every exponential vector.
pub fn is_well_defined_gamma2(t: &OperatorSpec) -> bool {
    t.factors().into_iter().all(|f| match f {
        OperatorSpec::Mult { phi } => phi.norm_inf() <= 1.0,
        OperatorSpec::Gauge { .. } | OperatorSpec::Rearrange { .. } => true,
        // ‖Tf‖∞ = |∫_W f| ≤ ‖f‖∞ |W|
        OperatorSpec::Average { window } => window.measure() <= 1.0 + MEASURE_TOL,
        OperatorSpec::ScalarExp { z } => z.re <= 0.0,
        OperatorSpec::Compose { .. } => unreachable!("factors are flattened"),
    })
}

/// Structural L² and L∞ contractivity of every factor.
pub fn is_lp_contraction(t: &OperatorSpec) -> bool {
    // For this grammar the two sup-norm and L² conditions coincide factorwise:
    // multipliers need ‖φ‖∞ ≤ 1, windows need |W| ≤ 1 (‖Tf‖₂ = |∫_W f| |W|^{1/2}).
    is_well_defined_gamma2(t)
}

/// True when `T` is built only from multipliers with `‖φ‖∞ ≤ 1`, gauges,
/// rearrangements and `e^z` with `Re z ≤ 0`; such a product can be rewritten
/// as `M_φ T₁` with `T₁` a homomorphism, so `Γ₂(T)` is a contraction.
pub fn is_structural_contraction(t: &OperatorSpec) -> bool {
    t.factors().into_iter().all(|f| match f {
        OperatorSpec::Mult { phi } => phi.norm_inf() <= 1.0,
        OperatorSpec::Gauge { .. } | OperatorSpec::Rearrange { .. } => true,
        OperatorSpec::ScalarExp { z } => z.re <= 0.0,
        OperatorSpec::Average { .. } => false,
        OperatorSpec::Compose { .. } => unreachable!("factors are flattened"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentFailure {
    pub sample: usize,
    pub k: u32,
    pub expected: Complex64,
    pub actual: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub passed: bool,
    pub first_failure: Option<MomentFailure>,
}

/// Compares `⟨(Tf)^k, (Tg)^k⟩` with `⟨f^k, g^k⟩` for `k = 1..=max_k` over
/// all samples, stopping at the first mismatch (samples in order, then k).
pub fn moment_isometry_check(
    t: &OperatorSpec,
    samples: &[(StepFunction, StepFunction)],
    max_k: u32,
) -> Result<MomentCheck> {
    if max_k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    for (idx, (f, g)) in samples.iter().enumerate() {
        let tf = apply(t, f)?;
        let tg = apply(t, g)?;
        for k in 1..=max_k {
            let expected = inner_pow(f, g, k)?;
            let actual = inner_pow(&tf, &tg, k)?;
            if (actual - expected).norm() > MOMENT_TOL * expected.norm().max(1.0) {
                return Ok(MomentCheck {
                    passed: false,
                    first_failure: Some(MomentFailure {
                        sample: idx,
                        k,
                        expected,
                        actual,
                    }),
                });
            }
        }
    }
    Ok(MomentCheck {
        passed: true,
        first_failure: None,
    })
}

/// An operator given by its images of the indicators of a fixed partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOperator {
    basis: Vec<Cell>,
    columns: Vec<StepFunction>,
}

impl DiscreteOperator {
    pub fn new(basis: Vec<Cell>, columns: Vec<StepFunction>) -> Result<Self> {
        if basis.len() != columns.len() {
            return Err(Error::InvalidArgument(format!(
                "{} basis cells but {} columns",
                basis.len(),
                columns.len()
            )));
        }
        if let Some(c) = basis.first() {
            let dim = c.dim();
            for d in basis
                .iter()
                .map(Cell::dim)
                .chain(columns.iter().map(StepFunction::dim))
            {
                check_dim(dim, d)?;
            }
        }
        if let Some((i, j)) = pairwise_disjoint(basis.iter()) {
            return Err(Error::InvalidArgument(format!(
                "basis cells {i} and {j} overlap"
            )));
        }
        Ok(DiscreteOperator { basis, columns })
    }

    /// Tabulates `T χ_I` for every basis cell `I`.
    pub fn from_spec(t: &OperatorSpec, basis: Vec<Cell>) -> Result<Self> {
        let columns = basis
            .iter()
            .map(|c| apply(t, &StepFunction::indicator(c.clone())))
            .collect::<Result<Vec<_>>>()?;
        DiscreteOperator::new(basis, columns)
    }

    pub fn basis(&self) -> &[Cell] {
        &self.basis
    }

    pub fn columns(&self) -> &[StepFunction] {
        &self.columns
    }
}

/// Which property of an isometric `T` a column violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    /// `|T χ_I| ≠ 1` somewhere on its support.
    Unimodular,
    /// `|supp T χ_I| ≠ |I|`.
    Measure,
    /// Images of disjoint cells overlap.
    Disjoint,
    /// No single phase function reproduces the columns.
    Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotIsometry {
    pub violation: Violation,
    /// Offending basis indices.
    pub cells: Vec<usize>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryDecomposition {
    /// Real phase, supported on the targets of `map`.
    pub alpha: StepFunction,
    pub map: CellMap,
    /// Largest pointwise deviation of the reconstruction from the columns.
    pub residual: f64,
}

impl IsometryDecomposition {
    /// `Gauge(α) ∘ Rearrange(τ)`.
    pub fn operator(&self) -> OperatorSpec {
        OperatorSpec::Gauge {
            alpha: self.alpha.clone(),
        }
        .then_after(OperatorSpec::rearrange(self.map.clone()))
    }
}

fn max_pointwise_diff(a: &StepFunction, b: &StepFunction) -> Result<f64> {
    let p = refine_all(&[a, b])?;
    Ok(p.values
        .iter()
        .map(|v| {
            let x = v[0].unwrap_or_default();
            let y = v[1].unwrap_or_default();
            (x - y).norm()
        })
        .fold(0.0, f64::max))
}

/// Recovers `T = e^{iα} T_τ` from the images of basis indicators.
///
/// Checks, in order: each column is unimodular on its support, its support
/// has the measure of its basis cell, supports of different columns are
/// disjoint, and the reconstructed `Gauge(α) ∘ Rearrange(τ)` reproduces
/// every column. `τ` sends consecutive slabs of the basis cell (cut along
/// the first axis) onto the support cells of its column.
pub fn decompose_isometry(
    op: &DiscreteOperator,
) -> Result<std::result::Result<IsometryDecomposition, NotIsometry>> {
    let zero = Complex64::new(0.0, 0.0);
    let supports: Vec<Vec<(&Cell, Complex64)>> = op
        .columns
        .iter()
        .map(|col| col.iter().filter(|(_, v)| *v != zero).collect())
        .collect();

    for (j, supp) in supports.iter().enumerate() {
        let dev = supp
            .iter()
            .map(|(_, v)| (v.norm() - 1.0).abs())
            .fold(0.0, f64::max);
        if dev > UNIMODULAR_TOL {
            return Ok(Err(NotIsometry {
                violation: Violation::Unimodular,
                cells: vec![j],
                residual: dev,
            }));
        }
    }
    for (j, supp) in supports.iter().enumerate() {
        let m: f64 = supp.iter().map(|(c, _)| c.measure()).sum();
        let target = op.basis[j].measure();
        if (m - target).abs() > measure_slack(&op.basis[j]) {
            return Ok(Err(NotIsometry {
                violation: Violation::Measure,
                cells: vec![j],
                residual: (m - target).abs() / target,
            }));
        }
    }
    for j in 0..supports.len() {
        for l in (j + 1)..supports.len() {
            let overlap: f64 = supports[j]
                .iter()
                .flat_map(|(a, _)| supports[l].iter().map(move |(b, _)| a.overlap_measure(b)))
                .sum();
            let scale = op.basis[j].measure().min(op.basis[l].measure());
            if overlap > MEASURE_TOL * scale {
                return Ok(Err(NotIsometry {
                    violation: Violation::Disjoint,
                    cells: vec![j, l],
                    residual: overlap,
                }));
            }
        }
    }

    let dim = op.basis.first().map_or(1, Cell::dim);
    let mut pairs = Vec::new();
    let mut alpha_cells = Vec::new();
    let mut alpha_values = Vec::new();
    for (basis_cell, supp) in op.basis.iter().zip(&supports) {
        let total = basis_cell.measure();
        let (x0, x1) = (basis_cell.lo()[0], basis_cell.hi()[0]);
        let mut acc = 0.0;
        let mut lo_x = x0;
        for (idx, (piece, v)) in supp.iter().enumerate() {
            acc += piece.measure();
            let hi_x = if idx + 1 == supp.len() {
                x1
            } else {
                x0 + (x1 - x0) * (acc / total)
            };
            if hi_x <= lo_x {
                // a piece too thin to resolve on this axis
                return Ok(Err(NotIsometry {
                    violation: Violation::Measure,
                    cells: vec![pairs.len()],
                    residual: piece.measure(),
                }));
            }
            let mut lo = basis_cell.lo().to_vec();
            let mut hi = basis_cell.hi().to_vec();
            lo[0] = lo_x;
            hi[0] = hi_x;
            pairs.push((Cell::new(lo, hi)?, (*piece).clone()));
            alpha_cells.push((*piece).clone());
            alpha_values.push(Complex64::new(v.arg(), 0.0));
            lo_x = hi_x;
        }
    }
    let map = match CellMap::new(pairs) {
        Ok(m) => m,
        Err(_) => {
            return Ok(Err(NotIsometry {
                violation: Violation::Measure,
                cells: Vec::new(),
                residual: f64::NAN,
            }))
        }
    };
    let alpha = match StepFunction::new(dim, alpha_cells, alpha_values) {
        Ok(a) => a,
        Err(_) => {
            return Ok(Err(NotIsometry {
                violation: Violation::Disjoint,
                cells: Vec::new(),
                residual: f64::NAN,
            }))
        }
    };
    let mut decomposition = IsometryDecomposition {
        alpha,
        map,
        residual: 0.0,
    };
    let rebuilt = decomposition.operator();
    for (j, (basis_cell, column)) in op.basis.iter().zip(&op.columns).enumerate() {
        let image = apply(&rebuilt, &StepFunction::indicator(basis_cell.clone()))?;
        let diff = max_pointwise_diff(&image, column)?;
        if diff > ROUND_TRIP_TOL {
            return Ok(Err(NotIsometry {
                violation: Violation::Phase,
                cells: vec![j],
                residual: diff,
            }));
        }
        decomposition.residual = decomposition.residual.max(diff);
    }
    Ok(Ok(decomposition))
}

/// Supporting facts behind a [`Classification`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    /// Factor `index` (outermost first) fails the sup-norm ball test.
    NotWellDefined {
        index: usize,
    },
    MomentMismatch(MomentFailure),
    NotIsometry(NotIsometry),
    /// The decomposed map does not cover the working region.
    NotSurjective {
        covered: f64,
        total: f64,
    },
    /// Factor `index` is outside the multiplier/homomorphism grammar.
    NotStructural {
        index: usize,
    },
    /// `‖Tf‖_p > ‖f‖_p` on a sample.
    NormIncrease {
        sample: usize,
        norm: String,
        before: f64,
        after: f64,
    },
    ApplyFailed {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub well_defined: bool,
    pub isometry: bool,
    pub unitary: bool,
    /// Certified contraction of `Γ₂(T)` via the multiplier/homomorphism form.
    pub contraction_sufficient: bool,
    /// L² and L∞ contractivity, necessary for `Γ₂(T)` to be a contraction.
    pub necessary_ok: bool,
    pub evidence: Vec<Evidence>,
}

/// Region on which unitarity is decided: the samples' supports together
/// with every rearrangement's sources and targets.
fn working_partition(
    t: &OperatorSpec,
    samples: &[(StepFunction, StepFunction)],
) -> Result<Vec<Cell>> {
    let mut pieces: Vec<StepFunction> = Vec::new();
    for (f, g) in samples {
        pieces.push(f.clone());
        pieces.push(g.clone());
    }
    for factor in t.factors() {
        if let OperatorSpec::Rearrange { pairs, .. } = factor {
            for (s, tg) in pairs.pairs() {
                pieces.push(StepFunction::indicator(s.clone()));
                pieces.push(StepFunction::indicator(tg.clone()));
            }
        }
    }
    let refs: Vec<&StepFunction> = pieces.iter().collect();
    Ok(refine_all(&refs)?.cells)
}

pub fn classify(
    t: &OperatorSpec,
    samples: &[(StepFunction, StepFunction)],
    max_k: u32,
) -> Result<Classification> {
    t.validate()?;
    let mut evidence = Vec::new();
    let factors = t.factors();

    let well_defined = is_well_defined_gamma2(t);
    if !well_defined {
        for (index, f) in factors.iter().enumerate() {
            if !is_well_defined_gamma2(f) {
                evidence.push(Evidence::NotWellDefined { index });
            }
        }
    }

    let mut isometry = false;
    if well_defined {
        match moment_isometry_check(t, samples, max_k) {
            Ok(check) => {
                isometry = check.passed;
                if let Some(fail) = check.first_failure {
                    evidence.push(Evidence::MomentMismatch(fail));
                }
            }
            Err(e) => evidence.push(Evidence::ApplyFailed {
                message: e.to_string(),
            }),
        }
    }

    let mut unitary = false;
    if isometry {
        let basis = working_partition(t, samples)?;
        let total: f64 = basis.iter().map(Cell::measure).sum();
        match DiscreteOperator::from_spec(t, basis.clone()).and_then(|d| decompose_isometry(&d)) {
            Ok(Ok(dec)) => {
                let covered: f64 = dec
                    .map
                    .targets()
                    .flat_map(|tg| basis.iter().map(move |b| tg.overlap_measure(b)))
                    .sum();
                let image: f64 = dec.map.targets().map(Cell::measure).sum();
                unitary = measures_match(covered, total) && measures_match(image, total);
                if !unitary {
                    evidence.push(Evidence::NotSurjective { covered, total });
                }
            }
            Ok(Err(not_iso)) => evidence.push(Evidence::NotIsometry(not_iso)),
            Err(e) => evidence.push(Evidence::ApplyFailed {
                message: e.to_string(),
            }),
        }
    }

    let structural = is_structural_contraction(t);
    if !structural {
        for (index, f) in factors.iter().enumerate() {
            if !is_structural_contraction(f) {
                evidence.push(Evidence::NotStructural { index });
            }
        }
    }

    let mut necessary_ok = is_lp_contraction(t);
    for (sample, (f, _)) in samples.iter().enumerate() {
        let Ok(tf) = apply(t, f) else { continue };
        for (norm, before, after) in [
            ("l2", f.norm_2(), tf.norm_2()),
            ("linf", f.norm_inf(), tf.norm_inf()),
        ] {
            if after > before * (1.0 + MOMENT_TOL) + f64::MIN_POSITIVE {
                necessary_ok = false;
                evidence.push(Evidence::NormIncrease {
                    sample,
                    norm: norm.to_string(),
                    before,
                    after,
                });
            }
        }
    }

    let c = Classification {
        well_defined,
        isometry,
        unitary,
        contraction_sufficient: structural && necessary_ok,
        necessary_ok,
        evidence,
    };
    debug_assert!(!c.unitary || c.isometry);
    debug_assert!(!c.isometry || c.well_defined);
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn iv(a: f64, b: f64) -> Cell {
        Cell::interval(a, b).unwrap()
    }

    fn unit_average() -> OperatorSpec {
        OperatorSpec::Average {
            window: iv(0.0, 1.0),
        }
    }

    fn swap() -> CellMap {
        CellMap::new(vec![
            (iv(0.0, 1.0), iv(1.0, 2.0)),
            (iv(1.0, 2.0), iv(0.0, 1.0)),
        ])
        .unwrap()
    }

    #[test]
    fn cell_map_invariants() {
        assert!(CellMap::new(vec![(iv(0.0, 1.0), iv(5.0, 5.5))]).is_err());
        assert!(CellMap::new(vec![
            (iv(0.0, 1.0), iv(2.0, 3.0)),
            (iv(1.0, 2.0), iv(2.5, 3.5))
        ])
        .is_err());
        assert!(CellMap::new(vec![
            (iv(0.0, 1.0), iv(2.0, 3.0)),
            (iv(0.5, 1.5), iv(4.0, 5.0))
        ])
        .is_err());
        assert!(swap().is_bijective());
        assert!(!CellMap::translation(&[iv(0.0, 1.0)], &[1.0])
            .unwrap()
            .is_bijective());
    }

    #[test]
    fn identity_is_identity() {
        let f = StepFunction::from_intervals(&[(0.0, 0.3, c(0.1, 0.2)), (0.7, 1.0, c(-0.3, 0.0))])
            .unwrap();
        assert_eq!(apply(&OperatorSpec::identity(), &f).unwrap(), f);
    }

    #[test]
    fn average_of_half_indicator() {
        let f = StepFunction::constant(iv(0.0, 0.5), c(0.4, 0.0));
        let tf = apply(&unit_average(), &f).unwrap();
        assert_eq!(tf.cells(), &[iv(0.0, 1.0)]);
        assert_relative_eq!(tf.values()[0].re, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn gauge_after_shift() {
        let alpha = StepFunction::constant(iv(1.0, 2.0), c(0.7, 0.0));
        let t = OperatorSpec::gauge(alpha)
            .unwrap()
            .then_after(OperatorSpec::rearrange(
                CellMap::translation(&[iv(0.0, 1.0)], &[1.0]).unwrap(),
            ));
        let tf = apply(&t, &StepFunction::indicator(iv(0.0, 1.0))).unwrap();
        assert_eq!(tf.cells(), &[iv(1.0, 2.0)]);
        assert!((tf.values()[0] - Complex64::from_polar(1.0, 0.7)).norm() < 1e-15);
    }

    #[test]
    fn rearrange_maps_pieces_affinely() {
        let map = CellMap::new(vec![(iv(0.0, 1.0), iv(3.0, 4.0))]).unwrap();
        let f = StepFunction::from_intervals(&[(0.0, 0.25, c(0.1, 0.0)), (0.25, 1.0, c(0.2, 0.0))])
            .unwrap();
        let tf = apply(&OperatorSpec::rearrange(map), &f).unwrap();
        assert_eq!(tf.cells(), &[iv(3.0, 3.25), iv(3.25, 4.0)]);
    }

    #[test]
    fn rearrange_unmapped_support() {
        let map = CellMap::new(vec![(iv(0.0, 1.0), iv(3.0, 4.0))]).unwrap();
        let f = StepFunction::constant(iv(0.5, 1.5), c(0.1, 0.0));
        let err = apply(&OperatorSpec::rearrange(map.clone()), &f).unwrap_err();
        assert!(matches!(err, Error::UnmappedSupport { measure } if (measure - 0.5).abs() < 1e-15));
        let lenient = OperatorSpec::Rearrange {
            pairs: map,
            allow_unmapped: true,
        };
        assert_eq!(apply(&lenient, &f).unwrap().cells(), &[iv(3.5, 4.0)]);
        // zero values outside the sources are not support
        let g = StepFunction::from_intervals(&[(0.0, 1.0, c(0.1, 0.0)), (1.0, 2.0, c(0.0, 0.0))])
            .unwrap();
        assert!(apply(
            &OperatorSpec::rearrange(CellMap::identity(&[iv(0.0, 1.0)]).unwrap()),
            &g
        )
        .is_ok());
    }

    #[test]
    fn gauge_rejects_complex_phase() {
        let alpha = StepFunction::constant(iv(0.0, 1.0), c(0.0, 1.0));
        assert!(OperatorSpec::gauge(alpha).is_err());
    }

    #[test]
    fn well_definedness_is_structural() {
        let alpha = StepFunction::constant(iv(0.0, 1.0), c(12.0, 0.0));
        assert!(is_well_defined_gamma2(&OperatorSpec::Gauge { alpha }));
        let phi = StepFunction::constant(iv(0.0, 1.0), c(1.2, 0.0));
        assert!(!is_well_defined_gamma2(&OperatorSpec::Mult { phi }));
        assert!(!is_well_defined_gamma2(&OperatorSpec::ScalarExp {
            z: c(0.1, 0.0)
        }));
        assert!(is_well_defined_gamma2(&OperatorSpec::ScalarExp {
            z: c(-0.1, 3.0)
        }));
        assert!(is_well_defined_gamma2(&unit_average()));
        assert!(!is_well_defined_gamma2(&OperatorSpec::Average {
            window: iv(0.0, 2.0)
        }));
        let nested = OperatorSpec::Compose {
            items: vec![unit_average(), OperatorSpec::ScalarExp { z: c(0.1, 0.0) }],
        };
        assert!(!is_well_defined_gamma2(&nested));
    }

    #[test]
    fn moment_check_examples() {
        let chi = StepFunction::indicator(iv(0.0, 1.0));
        let shrink = OperatorSpec::Mult {
            phi: StepFunction::constant(iv(0.0, 1.0), c(0.9, 0.0)),
        };
        let r = moment_isometry_check(&shrink, &[(chi.clone(), chi.clone())], 4).unwrap();
        assert!(!r.passed);
        let fail = r.first_failure.unwrap();
        assert_eq!(fail.k, 1);
        assert_relative_eq!(fail.actual.re, 0.81, epsilon = 1e-15);

        let f = StepFunction::constant(iv(0.0, 0.5), c(0.4, 0.0));
        let r = moment_isometry_check(&unit_average(), &[(f.clone(), f)], 4).unwrap();
        let fail = r.first_failure.unwrap();
        assert_eq!(fail.k, 1);
        assert_relative_eq!(fail.actual.re, 0.04, epsilon = 1e-15);
        assert_relative_eq!(fail.expected.re, 0.08, epsilon = 1e-15);

        let alpha =
            StepFunction::from_intervals(&[(0.0, 0.5, c(1.0, 0.0)), (1.0, 2.0, c(-2.0, 0.0))])
                .unwrap();
        let t = OperatorSpec::gauge(alpha)
            .unwrap()
            .then_after(OperatorSpec::rearrange(swap()));
        let f = StepFunction::from_intervals(&[(0.0, 0.2, c(0.1, 0.3)), (1.5, 2.0, c(-0.2, 0.1))])
            .unwrap();
        let g = StepFunction::from_intervals(&[(0.1, 1.2, c(0.3, -0.1))]).unwrap();
        assert!(moment_isometry_check(&t, &[(f, g)], 8).unwrap().passed);
    }

    #[test]
    fn decompose_identity() {
        let basis = vec![iv(0.0, 0.5), iv(0.5, 1.0)];
        let op = DiscreteOperator::from_spec(&OperatorSpec::identity(), basis.clone()).unwrap();
        let dec = decompose_isometry(&op).unwrap().unwrap();
        assert!(dec.alpha.values().iter().all(|v| *v == c(0.0, 0.0)));
        let pairs: Vec<(Cell, Cell)> = basis.iter().map(|b| (b.clone(), b.clone())).collect();
        assert_eq!(dec.map.pairs(), pairs.as_slice());
    }

    #[test]
    fn decompose_swap_with_phase() {
        let alpha =
            StepFunction::from_intervals(&[(0.0, 1.0, c(0.3, 0.0)), (1.0, 2.0, c(-1.1, 0.0))])
                .unwrap();
        let t = OperatorSpec::gauge(alpha.clone())
            .unwrap()
            .then_after(OperatorSpec::rearrange(swap()));
        let op = DiscreteOperator::from_spec(&t, vec![iv(0.0, 1.0), iv(1.0, 2.0)]).unwrap();
        let dec = decompose_isometry(&op).unwrap().unwrap();
        assert_eq!(dec.map, swap());
        assert!(dec.residual <= 1e-12);
        for x in [0.5, 1.5] {
            assert_relative_eq!(
                dec.alpha.eval(&[x]).re,
                alpha.eval(&[x]).re,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn decompose_average_fails_unimodularity() {
        let op =
            DiscreteOperator::from_spec(&unit_average(), vec![iv(0.0, 0.5), iv(0.5, 1.0)]).unwrap();
        let not = decompose_isometry(&op).unwrap().unwrap_err();
        assert_eq!(not.violation, Violation::Unimodular);
        assert_eq!(not.cells, vec![0]);
        assert_relative_eq!(not.residual, 0.5);
    }

    #[test]
    fn decompose_detects_measure_and_overlap() {
        let basis = vec![iv(0.0, 1.0), iv(1.0, 2.0)];
        let shrunk = DiscreteOperator::new(
            basis.clone(),
            vec![
                StepFunction::indicator(iv(0.0, 0.5)),
                StepFunction::indicator(iv(1.0, 2.0)),
            ],
        )
        .unwrap();
        assert_eq!(
            decompose_isometry(&shrunk).unwrap().unwrap_err().violation,
            Violation::Measure
        );
        let collide = DiscreteOperator::new(
            basis,
            vec![
                StepFunction::indicator(iv(0.0, 1.0)),
                StepFunction::indicator(iv(0.5, 1.5)),
            ],
        )
        .unwrap();
        let not = decompose_isometry(&collide).unwrap().unwrap_err();
        assert_eq!(not.violation, Violation::Disjoint);
        assert_eq!(not.cells, vec![0, 1]);
    }

    #[test]
    fn classify_examples() {
        let f = StepFunction::from_intervals(&[(0.0, 0.4, c(0.2, 0.1)), (1.2, 2.0, c(-0.3, 0.0))])
            .unwrap();
        let samples = vec![(f.clone(), f.clone())];
        let alpha = StepFunction::constant(iv(0.0, 2.0), c(0.4, 0.0));
        let unitary = OperatorSpec::gauge(alpha)
            .unwrap()
            .then_after(OperatorSpec::rearrange(swap()));
        let cl = classify(&unitary, &samples, 6).unwrap();
        assert!(cl.well_defined && cl.isometry && cl.unitary && cl.contraction_sufficient);

        let phi = StepFunction::constant(iv(0.0, 2.0), c(0.5, 0.0));
        let cl = classify(&OperatorSpec::Mult { phi }, &samples, 6).unwrap();
        assert!(cl.contraction_sufficient && cl.necessary_ok && !cl.isometry);

        let g = StepFunction::constant(iv(0.0, 0.5), c(0.4, 0.0));
        let cl = classify(&unit_average(), &[(g.clone(), g)], 6).unwrap();
        assert!(cl.necessary_ok && !cl.contraction_sufficient && !cl.isometry);

        let shift = OperatorSpec::rearrange(CellMap::translation(&[iv(0.0, 1.0)], &[5.0]).unwrap());
        let h = StepFunction::constant(iv(0.0, 1.0), c(0.3, 0.0));
        let cl = classify(&shift, &[(h.clone(), h)], 6).unwrap();
        assert!(cl.isometry && !cl.unitary);
    }

    #[test]
    fn operator_json_grammar() {
        let raw = r#"{"op": "compose", "items": [
            {"op": "gauge", "alpha": {"dim": 1, "cells": [{"lo": [0], "hi": [1], "re": 0.5}]}},
            {"op": "rearrange", "pairs": [{"source": {"lo": [0], "hi": [1]}, "target": {"lo": [1], "hi": [2]}}]},
            {"op": "scalar_exp", "z": {"re": -0.1, "im": 2.0}},
            {"op": "average", "window": {"lo": [0], "hi": [1]}},
            {"op": "mult", "phi": {"dim": 1, "cells": [{"lo": [0], "hi": [1], "re": 0.5}]}}
        ]}"#;
        let t: OperatorSpec = serde_json::from_str(raw).unwrap();
        assert_eq!(t.factors().len(), 5);
        let back: OperatorSpec = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
        let bad = r#"{"op": "rearrange", "pairs": [{"source": {"lo": [0], "hi": [1]}, "target": {"lo": [1], "hi": [3]}}]}"#;
        assert!(serde_json::from_str::<OperatorSpec>(bad).is_err());
    }
}
