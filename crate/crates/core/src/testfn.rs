//! Step functions on ℝᵈ: the computational model of the test-function
//! algebra L² ∩ L∞.
//!
//! A [`StepFunction`] is a finite list of pairwise disjoint, axis-aligned,
//! half-open boxes carrying complex values. Everything outside the listed
//! cells is zero. All algebra goes through a common refinement: the grid
//! spanned by every cell boundary of the operands, restricted to boxes that
//! lie inside at least one operand cell. Refinement is exact because new
//! boundaries are copies of existing ones.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when comparing measures computed along different
/// rounding paths.
const MEASURE_RTOL: f64 = 1e-12;

/// Half-open box `[lo, hi)` in ℝᵈ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CellBounds", into = "CellBounds")]
pub struct Cell {
    lo: Vec<f64>,
    hi: Vec<f64>,
    measure: f64,
}

impl Cell {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::InvalidCell("zero-dimensional cell".into()));
        }
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                left: lo.len(),
                right: hi.len(),
            });
        }
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidCell(format!("non-finite bound on axis {i}")));
            }
            if a >= b {
                return Err(Error::InvalidCell(format!(
                    "empty side on axis {i}: [{a}, {b})"
                )));
            }
        }
        let measure = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        Ok(Cell { lo, hi, measure })
    }

    /// One-dimensional interval `[a, b)`.
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Cell::new(vec![a], vec![b])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && self
                .lo
                .iter()
                .zip(&self.hi)
                .zip(x)
                .all(|((a, b), v)| a <= v && v < b)
    }

    /// Intersection with positive measure, if any.
    pub fn intersect(&self, other: &Cell) -> Option<Cell> {
        if self.dim() != other.dim() {
            return None;
        }
        let lo: Vec<f64> = self
            .lo
            .iter()
            .zip(&other.lo)
            .map(|(a, b)| a.max(*b))
            .collect();
        let hi: Vec<f64> = self
            .hi
            .iter()
            .zip(&other.hi)
            .map(|(a, b)| a.min(*b))
            .collect();
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return None;
        }
        Cell::new(lo, hi).ok()
    }

    pub fn overlap_measure(&self, other: &Cell) -> f64 {
        self.intersect(other).map_or(0.0, |c| c.measure)
    }

    pub fn contains_cell(&self, other: &Cell) -> bool {
        self.dim() == other.dim()
            && self.lo.iter().zip(&other.lo).all(|(a, b)| a <= b)
            && self.hi.iter().zip(&other.hi).all(|(a, b)| b <= a)
    }
}

/// Simple function: complex values on finitely many disjoint cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepFunctionJson", into = "StepFunctionJson")]
pub struct StepFunction {
    dim: usize,
    cells: Vec<Cell>,
    values: Vec<Complex64>,
}

impl StepFunction {
    /// Builds a step function, rejecting cells whose interiors overlap.
    pub fn new(dim: usize, cells: Vec<Cell>, values: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if cells.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} cells but {} values",
                cells.len(),
                values.len()
            )));
        }
        for cell in &cells {
            if cell.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: cell.dim(),
                });
            }
        }
        if let Some(v) = values
            .iter()
            .find(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(Error::InvalidArgument(format!("non-finite value {v}")));
        }
        for i in 0..cells.len() {
            for j in (i + 1)..cells.len() {
                if cells[i].intersect(&cells[j]).is_some() {
                    return Err(Error::OverlappingCells {
                        first: i,
                        second: j,
                    });
                }
            }
        }
        Ok(StepFunction { dim, cells, values })
    }

    /// Used only where disjointness holds by construction.
    pub(crate) fn from_disjoint(dim: usize, cells: Vec<Cell>, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(cells.len(), values.len());
        StepFunction { dim, cells, values }
    }

    pub fn zero(dim: usize) -> Self {
        StepFunction {
            dim,
            cells: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn constant(cell: Cell, value: Complex64) -> Self {
        StepFunction {
            dim: cell.dim(),
            cells: vec![cell],
            values: vec![value],
        }
    }

    pub fn indicator(cell: Cell) -> Self {
        Self::constant(cell, Complex64::new(1.0, 0.0))
    }

    /// 1-d step function from `(a, b, value)` triples.
    pub fn from_intervals(pieces: &[(f64, f64, Complex64)]) -> Result<Self> {
        let cells = pieces
            .iter()
            .map(|&(a, b, _)| Cell::interval(a, b))
            .collect::<Result<Vec<_>>>()?;
        StepFunction::new(1, cells, pieces.iter().map(|p| p.2).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Cell, Complex64)> {
        self.cells.iter().zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// True when every value is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == Complex64::new(0.0, 0.0))
    }

    /// Pointwise evaluation; zero off the listed cells.
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.iter()
            .find(|(c, _)| c.contains_point(x))
            .map_or(Complex64::new(0.0, 0.0), |(_, v)| v)
    }

    /// Lebesgue measure of the set where the function is nonzero.
    pub fn support_measure(&self) -> f64 {
        self.iter()
            .filter(|(_, v)| *v != Complex64::new(0.0, 0.0))
            .map(|(c, _)| c.measure())
            .sum()
    }

    pub fn map_values(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        StepFunction {
            dim: self.dim,
            cells: self.cells.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn scale(&self, z: Complex64) -> Self {
        self.map_values(|v| z * v)
    }

    pub fn conj(&self) -> Self {
        self.map_values(|v| v.conj())
    }

    /// Pointwise power. `pow(f, 1)` returns the values untouched.
    pub fn pow(&self, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("power must be at least 1".into()));
        }
        Ok(self.map_values(|v| v.powu(k)))
    }

    /// Pointwise product; supported on the intersection of the supports.
    pub fn mul(&self, other: &StepFunction) -> Result<Self> {
        let r = common_refinement(self, other)?;
        let mut cells = Vec::new();
        let mut values = Vec::new();
        for ((cell, a), b) in r.cells.into_iter().zip(r.values_a).zip(r.values_b) {
            if let (Some(a), Some(b)) = (a, b) {
                cells.push(cell);
                values.push(a * b);
            }
        }
        Ok(StepFunction::from_disjoint(self.dim, cells, values))
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `(Σ |cell| · |value|^p)^{1/p}` for `p ≥ 1`.
    pub fn norm_p(&self, p: f64) -> Result<f64> {
        if !p.is_finite() || p < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "norm exponent must be >= 1, got {p}"
            )));
        }
        let s: f64 = self
            .iter()
            .map(|(c, v)| c.measure() * v.norm().powf(p))
            .sum();
        Ok(s.powf(1.0 / p))
    }

    pub fn norm_2(&self) -> f64 {
        self.norm_2_sq().sqrt()
    }

    pub fn norm_2_sq(&self) -> f64 {
        self.iter().map(|(c, v)| c.measure() * v.norm_sqr()).sum()
    }

    /// `⟨f, g⟩ = ∫ f̄ g`.
    pub fn inner(&self, other: &StepFunction) -> Result<Complex64> {
        inner_pow(self, other, 1)
    }
}

/// The two operands of a binary operation, restated on one partition.
///
/// `values_a[i]` is `None` when cell `i` lies outside every cell of the
/// first operand (and likewise for `values_b`).
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub cells: Vec<Cell>,
    pub values_a: Vec<Option<Complex64>>,
    pub values_b: Vec<Option<Complex64>>,
}

impl Refinement {
    /// `Σ |cell| · conj(a)^k · b^k` over cells where both operands are present.
    pub fn inner_pow(&self, k: u32) -> Complex64 {
        self.cells
            .iter()
            .zip(self.values_a.iter().zip(&self.values_b))
            .filter_map(|(cell, pair)| match pair {
                (Some(a), Some(b)) => Some(cell.measure() * a.conj().powu(k) * b.powu(k)),
                _ => None,
            })
            .sum()
    }

    /// Cells where both operands are present, with their values.
    pub fn overlap(&self) -> impl Iterator<Item = (&Cell, Complex64, Complex64)> {
        self.cells
            .iter()
            .zip(self.values_a.iter().zip(&self.values_b))
            .filter_map(|(cell, pair)| match pair {
                (Some(a), Some(b)) => Some((cell, *a, *b)),
                _ => None,
            })
    }
}

/// Partition refining any number of step functions at once.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub cells: Vec<Cell>,
    /// `values[i][j]`: value of operand `j` on cell `i`.
    pub values: Vec<Vec<Option<Complex64>>>,
}

/// Grid refinement of several step functions of a common dimension.
///
/// The output covers the union of the supports (zero-valued cells
/// included); cells are ordered lexicographically by grid position.
pub fn refine_all(fns: &[&StepFunction]) -> Result<Partition> {
    let Some(first) = fns.first() else {
        return Ok(Partition {
            cells: Vec::new(),
            values: Vec::new(),
        });
    };
    let dim = first.dim;
    if let Some(f) = fns.iter().find(|f| f.dim != dim) {
        return Err(Error::DimensionMismatch {
            left: dim,
            right: f.dim,
        });
    }

    let mut axes: Vec<Vec<f64>> = vec![Vec::new(); dim];
    for f in fns {
        for cell in &f.cells {
            for (ax, axis) in axes.iter_mut().enumerate() {
                axis.push(cell.lo[ax]);
                axis.push(cell.hi[ax]);
            }
        }
    }
    for ax in &mut axes {
        ax.sort_by(f64::total_cmp);
        ax.dedup();
    }
    let locate = |ax: usize, x: f64| -> usize {
        axes[ax]
            .binary_search_by(|p| p.total_cmp(&x))
            .expect("cell bound is a breakpoint")
    };

    let mut grid: BTreeMap<Vec<usize>, Vec<Option<Complex64>>> = BTreeMap::new();
    for (j, f) in fns.iter().enumerate() {
        for (cell, value) in f.iter() {
            let ranges: Vec<(usize, usize)> = (0..dim)
                .map(|ax| (locate(ax, cell.lo[ax]), locate(ax, cell.hi[ax])))
                .collect();
            let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
            'boxes: loop {
                grid.entry(idx.clone())
                    .or_insert_with(|| vec![None; fns.len()])[j] = Some(value);
                for ax in (0..dim).rev() {
                    idx[ax] += 1;
                    if idx[ax] < ranges[ax].1 {
                        continue 'boxes;
                    }
                    idx[ax] = ranges[ax].0;
                }
                break;
            }
        }
    }

    let mut cells = Vec::with_capacity(grid.len());
    let mut values = Vec::with_capacity(grid.len());
    for (idx, vals) in grid {
        let lo = idx.iter().enumerate().map(|(ax, &i)| axes[ax][i]).collect();
        let hi = idx
            .iter()
            .enumerate()
            .map(|(ax, &i)| axes[ax][i + 1])
            .collect();
        cells.push(Cell::new(lo, hi)?);
        values.push(vals);
    }
    Ok(Partition { cells, values })
}

pub fn common_refinement(f: &StepFunction, g: &StepFunction) -> Result<Refinement> {
    let p = refine_all(&[f, g])?;
    let (values_a, values_b) = p.values.into_iter().map(|v| (v[0], v[1])).unzip();
    Ok(Refinement {
        cells: p.cells,
        values_a,
        values_b,
    })
}

/// `⟨f^k, g^k⟩ = ∫ conj(f)^k g^k`.
pub fn inner_pow(f: &StepFunction, g: &StepFunction, k: u32) -> Result<Complex64> {
    if k == 0 {
        return Err(Error::InvalidArgument("power must be at least 1".into()));
    }
    Ok(common_refinement(f, g)?.inner_pow(k))
}

/// True when `a` and `b` agree to the slack used for measure comparisons.
pub(crate) fn measures_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= MEASURE_RTOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellBounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<CellBounds> for Cell {
    type Error = Error;

    fn try_from(b: CellBounds) -> Result<Self> {
        Cell::new(b.lo, b.hi)
    }
}

impl From<Cell> for CellBounds {
    fn from(c: Cell) -> Self {
        CellBounds { lo: c.lo, hi: c.hi }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellJson {
    lo: Vec<f64>,
    hi: Vec<f64>,
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StepFunctionJson {
    #[serde(default = "default_dim")]
    dim: usize,
    cells: Vec<CellJson>,
}

fn default_dim() -> usize {
    1
}

impl TryFrom<StepFunctionJson> for StepFunction {
    type Error = Error;

    fn try_from(raw: StepFunctionJson) -> Result<Self> {
        let mut cells = Vec::with_capacity(raw.cells.len());
        let mut values = Vec::with_capacity(raw.cells.len());
        for c in raw.cells {
            cells.push(Cell::new(c.lo, c.hi)?);
            values.push(Complex64::new(c.re, c.im));
        }
        StepFunction::new(raw.dim, cells, values)
    }
}

impl From<StepFunction> for StepFunctionJson {
    fn from(f: StepFunction) -> Self {
        StepFunctionJson {
            dim: f.dim,
            cells: f
                .cells
                .into_iter()
                .zip(f.values)
                .map(|(c, v)| CellJson {
                    lo: c.lo,
                    hi: c.hi,
                    re: v.re,
                    im: v.im,
                })
                .collect(),
        }
    }
}
