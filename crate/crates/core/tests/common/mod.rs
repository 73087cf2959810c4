#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qfock::{Cell, StepFunction};

pub fn complex_in_disk(radius: f64) -> impl Strategy<Value = Complex64> {
    (0.0..=1.0f64, -PI..PI).prop_map(move |(r, t)| Complex64::from_polar(radius * r.sqrt(), t))
}

/// Step functions on `[0, length)` with up to `max_cells` cells.
pub fn step_fn(length: f64, max_cells: usize, max_abs: f64) -> impl Strategy<Value = StepFunction> {
    (1..=max_cells)
        .prop_flat_map(move |k| {
            (
                prop::collection::vec(0.0..length, 2 * k),
                prop::collection::vec(complex_in_disk(max_abs), k),
            )
        })
        .prop_map(|(mut cuts, values)| {
            cuts.sort_by(f64::total_cmp);
            let pieces: Vec<(f64, f64, Complex64)> = cuts
                .chunks(2)
                .zip(values)
                .filter(|(c, _)| c[0] < c[1])
                .map(|(c, v)| (c[0], c[1], v))
                .collect();
            StepFunction::from_intervals(&pieces).unwrap()
        })
}

/// Two-dimensional step functions on cells of a 4×4 grid over `[0,2)²`,
/// each chosen cell shrunk by random margins.
pub fn step_fn_2d(max_abs: f64) -> impl Strategy<Value = StepFunction> {
    prop::collection::btree_map(
        (0..4usize, 0..4usize),
        (complex_in_disk(max_abs), 0.0..0.2f64, 0.0..0.2f64),
        1..8,
    )
    .prop_map(|cells| {
        let (cs, vs): (Vec<Cell>, Vec<Complex64>) = cells
            .into_iter()
            .map(|((i, j), (v, mx, my))| {
                let (x, y) = (i as f64 * 0.5, j as f64 * 0.5);
                (
                    Cell::new(vec![x + mx, y], vec![x + 0.5, y + 0.5 - my]).unwrap(),
                    v,
                )
            })
            .unzip();
        StepFunction::new(2, cs, vs).unwrap()
    })
}

pub fn rel_close(a: Complex64, b: Complex64, rtol: f64) -> bool {
    (a - b).norm() <= rtol * a.norm().max(b.norm()) + 1e-300
}
