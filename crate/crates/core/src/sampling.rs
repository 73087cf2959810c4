//! Seeded random generators for test functions, operators, spans and
//! positive semidefinite matrices. Everything is driven by a ChaCha stream,
//! so a seed fully determines the output on every platform.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::linalg::HermitianMatrix;
use crate::operators::{CellMap, OperatorSpec};
use crate::testfn::{refine_all, Cell, StepFunction};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point of the closed complex disk of the given radius.
pub fn disk(rng: &mut impl Rng, radius: f64) -> Complex64 {
    let r = radius * rng.gen::<f64>().sqrt();
    Complex64::from_polar(r, rng.gen_range(-PI..PI))
}

/// Uniform point of the unit ball of `ℂⁿ`.
pub fn unit_ball(rng: &mut impl Rng, n: usize) -> Vec<Complex64> {
    loop {
        let v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        if v.iter().map(|z| z.norm_sqr()).sum::<f64>() <= 1.0 {
            return v;
        }
    }
}

/// Step function with `1..=max_cells` slabs of `region` (cut along the
/// first axis) and values drawn from the disk of radius `max_abs`.
pub fn step_function_in(
    rng: &mut impl Rng,
    region: &Cell,
    max_cells: usize,
    max_abs: f64,
) -> StepFunction {
    let k = rng.gen_range(1..=max_cells.max(1));
    let (a, b) = (region.lo()[0], region.hi()[0]);
    let mut cuts: Vec<f64> = (0..2 * k).map(|_| rng.gen_range(a..b)).collect();
    cuts.sort_by(f64::total_cmp);
    let mut cells = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for pair in cuts.chunks(2) {
        let (lo_x, hi_x) = (pair[0], pair[1]);
        let value = disk(rng, max_abs);
        if hi_x <= lo_x {
            continue;
        }
        let mut lo = region.lo().to_vec();
        let mut hi = region.hi().to_vec();
        lo[0] = lo_x;
        hi[0] = hi_x;
        if let Ok(cell) = Cell::new(lo, hi) {
            cells.push(cell);
            values.push(value);
        }
    }
    StepFunction::new(region.dim(), cells, values).expect("slabs of one region are disjoint")
}

/// Step function on `[0, length)`.
pub fn step_function(
    rng: &mut impl Rng,
    length: f64,
    max_cells: usize,
    max_abs: f64,
) -> StepFunction {
    let region = Cell::interval(0.0, length).expect("positive length");
    step_function_in(rng, &region, max_cells, max_abs)
}

/// Step function whose pieces are spread over several regions.
pub fn step_function_over(
    rng: &mut impl Rng,
    regions: &[Cell],
    max_cells: usize,
    max_abs: f64,
) -> StepFunction {
    let mut chosen: Vec<&Cell> = regions.iter().filter(|_| rng.gen_bool(0.5)).collect();
    if chosen.is_empty() {
        chosen.push(regions.choose(rng).expect("at least one region"));
    }
    let mut out = StepFunction::zero(regions[0].dim());
    for region in chosen {
        if out.len() >= max_cells {
            break;
        }
        let budget = rng.gen_range(1..=(max_cells - out.len()));
        out = sum_disjoint(&out, &step_function_in(rng, region, budget, max_abs));
    }
    out
}

fn sum_disjoint(a: &StepFunction, b: &StepFunction) -> StepFunction {
    let cells = a.cells().iter().chain(b.cells()).cloned().collect();
    let values = a.values().iter().chain(b.values()).copied().collect();
    StepFunction::new(a.dim(), cells, values).expect("pieces come from disjoint regions")
}

/// Disjoint pieces of the operator's geometry, or the unit interval when it
/// has none; the natural place to sample functions for `t`.
pub fn operator_regions(t: &OperatorSpec) -> Result<Vec<Cell>> {
    let geometry: Vec<StepFunction> = t
        .geometry_cells()
        .into_iter()
        .map(StepFunction::indicator)
        .collect();
    if geometry.is_empty() {
        return Ok(vec![Cell::interval(0.0, 1.0)?]);
    }
    let refs: Vec<&StepFunction> = geometry.iter().collect();
    Ok(refine_all(&refs)?.cells)
}

/// `n` equal slabs tiling `[0, length)`.
pub fn uniform_partition(length: f64, n: usize) -> Vec<Cell> {
    (0..n)
        .map(|i| {
            let lo = length * i as f64 / n as f64;
            let hi = if i + 1 == n {
                length
            } else {
                length * (i + 1) as f64 / n as f64
            };
            Cell::interval(lo, hi).expect("non-degenerate slab")
        })
        .collect()
}

/// Random permutation of the slabs of `[0, length)`.
pub fn permutation_map(rng: &mut impl Rng, length: f64, pieces: usize) -> CellMap {
    let cells = uniform_partition(length, pieces);
    let mut targets = cells.clone();
    targets.shuffle(rng);
    // nominally equal slabs may differ in the last ulp, within the
    // measure tolerance of `CellMap`
    let pairs = cells.into_iter().zip(targets).collect();
    CellMap::new(pairs).expect("equal slabs")
}

/// `Gauge(α) ∘ Rearrange(π)` with a random permutation `π` of the slabs of
/// `[0, length)` and a random phase on each slab.
pub fn isometry(rng: &mut impl Rng, length: f64, pieces: usize) -> OperatorSpec {
    let map = permutation_map(rng, length, pieces);
    let cells = uniform_partition(length, pieces);
    let values = cells
        .iter()
        .map(|_| Complex64::new(rng.gen_range(-PI..PI), 0.0))
        .collect();
    let alpha = StepFunction::new(1, cells, values).expect("partition is disjoint");
    OperatorSpec::Gauge { alpha }.then_after(OperatorSpec::rearrange(map))
}

/// A factor from the structural contraction grammar acting on `[0, length)`:
/// multiplier with `|φ| ≤ 1`, gauge, slab permutation, or `e^z` with `Re z ≤ 0`.
pub fn contraction_factor(rng: &mut impl Rng, length: f64) -> OperatorSpec {
    match rng.gen_range(0..4) {
        0 => OperatorSpec::Mult {
            phi: step_function(rng, length, 4, 1.0),
        },
        1 => {
            let phases =
                step_function(rng, length, 4, 1.0).map_values(|v| Complex64::new(PI * v.re, 0.0));
            OperatorSpec::Gauge { alpha: phases }
        }
        2 => {
            let pieces = rng.gen_range(1..=4);
            OperatorSpec::rearrange(permutation_map(rng, length, pieces))
        }
        _ => OperatorSpec::ScalarExp {
            z: Complex64::new(-rng.gen_range(0.0..2.0), rng.gen_range(-PI..PI)),
        },
    }
}

/// Composition of `1..=max_factors` contraction factors.
pub fn contraction(rng: &mut impl Rng, length: f64, max_factors: usize) -> OperatorSpec {
    let n = rng.gen_range(1..=max_factors.max(1));
    let items = (0..n).map(|_| contraction_factor(rng, length)).collect();
    OperatorSpec::Compose { items }
}

/// `X X†` for a random complex `order × rank` factor; PSD and possibly singular.
pub fn psd_matrix(rng: &mut impl Rng, order: usize) -> Result<HermitianMatrix> {
    let rank = rng.gen_range(1..=order);
    let x: Vec<Complex64> = (0..order * rank).map(|_| disk(rng, 1.0)).collect();
    HermitianMatrix::gram_of_columns(order, &x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::is_structural_contraction;

    #[test]
    fn seeds_are_reproducible() {
        let a = step_function(&mut rng(7), 1.0, 10, 0.45);
        let b = step_function(&mut rng(7), 1.0, 10, 0.45);
        assert_eq!(a, b);
        assert_ne!(a, step_function(&mut rng(8), 1.0, 10, 0.45));
    }

    #[test]
    fn sampled_functions_respect_bounds() {
        let mut r = rng(1);
        for _ in 0..200 {
            let f = step_function(&mut r, 2.0, 6, 0.45);
            assert!(f.len() <= 6);
            assert!(f.norm_inf() <= 0.45);
            assert!(f
                .cells()
                .iter()
                .all(|c| c.lo()[0] >= 0.0 && c.hi()[0] <= 2.0));
        }
    }

    #[test]
    fn sampled_operators_are_in_grammar() {
        let mut r = rng(3);
        for _ in 0..50 {
            assert!(is_structural_contraction(&contraction(&mut r, 1.0, 4)));
            assert!(is_structural_contraction(&isometry(&mut r, 2.0, 5)));
        }
    }

    #[test]
    fn psd_samples_are_psd() {
        let mut r = rng(5);
        for n in 1..=6 {
            assert!(psd_matrix(&mut r, n).unwrap().is_psd(1e-10).unwrap().psd);
        }
    }
}
