//! Hull iteration by compatible segments and the exact rigidity oracle.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::operator::{Operator, DEFAULT_WAVE_CONE_TOL};
use crate::wells::WellSet;

/// Default number of interpolation points per compatible segment.
pub const SEGMENT_SAMPLES: usize = 17;

/// Default node budget for the backtracking rigidity search.
pub const SEARCH_BUDGET: u64 = 100_000_000;

/// One sweep of the lamination-hull iteration: every compatible pair of
/// points contributes a sampled segment.  Points closer than `dedup_tol` to
/// an existing one are dropped, which makes repeated sweeps detect a fixed
/// point.
pub fn laminar_hull_step(
    op: &Operator,
    samples: &[DVector<f64>],
    per_segment: usize,
    dedup_tol: f64,
) -> Result<Vec<DVector<f64>>> {
    if op.order() != 1 {
        return Err(Error::UnsupportedOrder {
            order: op.order(),
            reason: "hull sweeps use exact first-order cone tests",
        });
    }
    let mut out: Vec<DVector<f64>> = samples.to_vec();
    let push = |cloud: &mut Vec<DVector<f64>>, cand: DVector<f64>| {
        if cloud.iter().all(|p| (p - &cand).norm() > dedup_tol) {
            cloud.push(cand);
        }
    };
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let diff = &samples[j] - &samples[i];
            if diff.norm() <= dedup_tol {
                continue;
            }
            let cert = op.wave_cone_contains(&diff, DEFAULT_WAVE_CONE_TOL)?;
            if !cert.member {
                continue;
            }
            for k in 1..per_segment.saturating_sub(1) {
                let lambda = k as f64 / (per_segment - 1) as f64;
                push(&mut out, &samples[i] + &diff * lambda);
            }
        }
    }
    Ok(out)
}

/// All label fields on a tiny periodic grid whose every face jump is
/// annihilated by the symbol in the face normal.
///
/// The search backtracks cell by cell with a per-axis compatibility table, so
/// incompatible well sets collapse to the constant fields almost instantly.
/// A node budget guards against genuinely exponential instances.
pub fn exact_rigidity_search(
    grid: &Grid,
    wells: &WellSet,
    op: &Operator,
    budget: u64,
) -> Result<Vec<Vec<u8>>> {
    let k = wells.len();
    if k == 0 {
        return Err(Error::InvalidInput("empty well set".into()));
    }
    if k > u8::MAX as usize {
        return Err(Error::InvalidInput("too many wells for label storage".into()));
    }
    let d = grid.dim();
    let n = grid.cells_per_axis();
    let cells = grid.cell_count();

    // compat[axis][a][b]: may wells a and b touch across a face with normal
    // e_axis?
    let mut compat = vec![vec![vec![false; k]; k]; d];
    let scale: f64 = (0..k)
        .map(|i| wells.well_flat(i).norm())
        .fold(1.0, f64::max);
    for axis in 0..d {
        let mut e = DVector::zeros(d);
        e[axis] = 1.0;
        for a in 0..k {
            for b in 0..k {
                if a == b {
                    compat[axis][a][b] = true;
                    continue;
                }
                let jump = wells.well_flat(a) - wells.well_flat(b);
                let resid = op.symbol_apply(&e, &jump)?.norm();
                compat[axis][a][b] = resid <= 1e-12 * scale;
            }
        }
    }

    // Strides for lexicographic cell order (last axis fastest).
    let mut strides = vec![0usize; d];
    let mut acc = 1usize;
    for axis in (0..d).rev() {
        strides[axis] = acc;
        acc *= n;
    }
    let coord = |cell: usize, axis: usize| (cell / strides[axis]) % n;

    let mut labels = vec![0u8; cells];
    let mut found: Vec<Vec<u8>> = Vec::new();
    let mut nodes: u64 = 0;

    // Iterative backtracking over cells in lexicographic order.
    let mut cell = 0usize;
    let mut next_label = vec![0usize; cells];
    loop {
        if cell == cells {
            found.push(labels.clone());
            cell -= 1;
            continue;
        }
        let tried = next_label[cell];
        if tried == k {
            next_label[cell] = 0;
            if cell == 0 {
                break;
            }
            cell -= 1;
            continue;
        }
        next_label[cell] += 1;
        nodes += 1;
        if nodes > budget {
            return Err(Error::EnumerationBudget(format!(
                "rigidity search exceeded {budget} nodes"
            )));
        }
        let lab = tried;
        let mut ok = true;
        for axis in 0..d {
            let c = coord(cell, axis);
            if c > 0 {
                let prev = cell - strides[axis];
                if !compat[axis][lab][labels[prev] as usize] {
                    ok = false;
                    break;
                }
            }
            if c == n - 1 && n > 1 {
                // Periodic wrap: the first cell of this line is already set.
                let first = cell - (n - 1) * strides[axis];
                if !compat[axis][lab][labels[first] as usize] {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        labels[cell] = lab as u8;
        cell += 1;
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::la;

    #[test]
    fn hull_step_samples_compatible_segments() {
        let op = Operator::divergence(3, 3);
        let ws = WellSet::t3();
        // {A1, S1} are compatible: the segment gets sampled.
        let cloud = vec![ws.well_flat(0), ws.s_flat(0)];
        let out = laminar_hull_step(&op, &cloud, SEGMENT_SAMPLES, 1e-9).unwrap();
        assert_eq!(out.len(), 2 + (SEGMENT_SAMPLES - 2));

        // {A1, A2} are incompatible: unchanged.
        let cloud = vec![ws.well_flat(0), ws.well_flat(1)];
        let out = laminar_hull_step(&op, &cloud, SEGMENT_SAMPLES, 1e-9).unwrap();
        assert_eq!(out.len(), 2);

        // Singleton: unchanged.
        let cloud = vec![ws.well_flat(0)];
        let out = laminar_hull_step(&op, &cloud, SEGMENT_SAMPLES, 1e-9).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn t3_is_rigid_on_tiny_grids() {
        let op = Operator::divergence(3, 3);
        let ws = WellSet::t3();
        let grid = Grid::new(3, 2).unwrap();
        let fields = exact_rigidity_search(&grid, &ws, &op, SEARCH_BUDGET).unwrap();
        assert_eq!(fields.len(), 3);
        for f in &fields {
            assert!(f.iter().all(|l| *l == f[0]));
        }
    }

    #[test]
    fn compatible_pair_is_flexible() {
        let op = Operator::divergence(3, 3);
        let ws = WellSet::t3();
        let pair = WellSet::pair(ws.well(0), ws.s(0), 0.5);
        let grid = Grid::new(3, 2).unwrap();
        let fields = exact_rigidity_search(&grid, &pair, &op, SEARCH_BUDGET).unwrap();
        // Laminates along e1 exist: strictly more than the two constants.
        assert!(fields.len() > 2);
        // Every admitted field depends on x1 only.
        for f in &fields {
            for c in 0..grid.cell_count() {
                let x1 = c / 4; // strides: 4, 2, 1 for n = 2
                let base = x1 * 4;
                assert_eq!(f[c], f[base]);
            }
        }
        // Exactly the 2^n fields constant in the transverse directions.
        assert_eq!(fields.len(), 4);
    }

    #[test]
    fn single_well_gives_one_field() {
        let op = Operator::divergence(3, 3);
        let ws = WellSet::new(vec![la::diag3(1.0, 2.0, 3.0)]);
        let grid = Grid::new(3, 2).unwrap();
        let fields = exact_rigidity_search(&grid, &ws, &op, SEARCH_BUDGET).unwrap();
        assert_eq!(fields.len(), 1);
    }

    #[test]
    fn removing_compatibility_never_adds_fields() {
        let op = Operator::divergence(3, 3);
        let ws = WellSet::t3();
        let grid = Grid::new(3, 2).unwrap();
        // {A1, S1} is compatible; replacing S1 by the incompatible A2 must
        // shrink the admissible family.
        let flexible = WellSet::pair(ws.well(0), ws.s(0), 0.5);
        let rigid = WellSet::pair(ws.well(0), ws.well(1), 0.5);
        let many = exact_rigidity_search(&grid, &flexible, &op, SEARCH_BUDGET).unwrap();
        let few = exact_rigidity_search(&grid, &rigid, &op, SEARCH_BUDGET).unwrap();
        assert!(few.len() <= many.len());
        assert_eq!(few.len(), 2);
    }
}
