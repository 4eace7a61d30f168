//! Post-processing of cell fields.

use trt_core::mesh::Grid;

/// Largest relative spread of `f` over the orbits of the square's symmetry
/// group (rotations by 90° and the four reflections) about the domain
/// center, for cells within `radius` cells of the center in the max norm.
///
/// Each orbit contributes `(max − min) / max|f|`; a field with the full
/// symmetry of the square scores 0. The grid must be square.
pub fn octant_asymmetry(grid: &Grid, f: &[f64], radius: usize) -> f64 {
    assert_eq!(grid.nx, grid.ny, "octant asymmetry needs a square grid");
    assert_eq!(f.len(), grid.n_cells());
    let n = grid.nx as i64;
    // doubled offsets from the center keep even grids on integers
    let off = |i: i64| 2 * i - (n - 1);
    let idx = |o: i64| ((o + n - 1) / 2) as usize;
    let r = 2 * radius as i64;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let (a, b) = (off(i), off(j));
            if a.abs() > r || b.abs() > r {
                continue;
            }
            let images = [(a, b), (-a, b), (a, -b), (-a, -b), (b, a), (-b, a), (b, -a), (-b, -a)];
            let values: Vec<f64> = images.iter().map(|&(x, y)| f[grid.cell(idx(x), idx(y))]).collect();
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale > 0.0 {
                worst = worst.max((hi - lo) / scale);
            }
        }
    }
    worst
}
