//! Python bindings for the main types and operations: operators and wave
//! cones, hull algebra, constructions with exact energies, and scaling fits.
//!
//! Matrices cross the boundary as nested lists (row major).

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use microlam_core::constructions::{
    admissible_scales, build_t3_laminate, build_two_well_branching, BranchingParams,
    BranchingVariant, T3Params,
};
use microlam_core::grid::Grid;
use microlam_core::hulls::{exact_rigidity_search, SEARCH_BUDGET};
use microlam_core::la;
use microlam_core::operator::{Operator, DEFAULT_WAVE_CONE_TOL, RANK_TOL};
use microlam_core::scaling::{exponent_balance, fit_scaling, FitModel};
use microlam_core::wells::{
    hull_decompose, t3_hull_contains, DiagonalRelationTable, HullDecomposition, WellSet,
};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map(Vec::len).unwrap_or(0);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("matrix must be rectangular and nonempty"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// `2p/(2p+1)` as an exact integer pair.
#[pyfunction]
fn balance_exponent(degeneracy: usize) -> PyResult<(i64, i64)> {
    let r = exponent_balance(degeneracy).map_err(err)?;
    Ok((*r.numer(), *r.denom()))
}

/// Wave-cone membership of a state for a built-in operator.
#[pyfunction]
#[pyo3(signature = (op, state, tol = DEFAULT_WAVE_CONE_TOL))]
fn wave_cone(op: &str, state: Vec<Vec<f64>>, tol: f64) -> PyResult<(bool, f64, Option<Vec<f64>>)> {
    let op = Operator::by_name(op).map_err(err)?;
    let mu = la::flatten(&to_matrix(state)?);
    let cert = op.wave_cone_contains(&mu, tol).map_err(err)?;
    Ok((
        cert.member,
        cert.residual,
        cert.direction.map(|d| d.iter().cloned().collect()),
    ))
}

/// Orthonormal basis of the lamination space of a state.
#[pyfunction]
fn lamination_space(op: &str, state: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let op = Operator::by_name(op).map_err(err)?;
    let mu = la::flatten(&to_matrix(state)?);
    let basis = op.lamination_space(&mu).map_err(err)?;
    Ok(basis.iter().map(|v| v.iter().cloned().collect()).collect())
}

/// Sampled constant-rank check: `(constant, min_rank, max_rank)`.
#[pyfunction]
#[pyo3(signature = (op, samples = 500))]
fn constant_rank(op: &str, samples: usize) -> PyResult<(bool, usize, usize)> {
    let op = Operator::by_name(op).map_err(err)?;
    let check = op.constant_rank(samples, RANK_TOL).map_err(err)?;
    Ok((check.constant, check.min_rank, check.max_rank))
}

/// Symbol matrix at a frequency.
#[pyfunction]
fn symbol(op: &str, xi: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let op = Operator::by_name(op).map_err(err)?;
    let sym = op.symbol(&DVector::from_vec(xi)).map_err(err)?;
    Ok(from_matrix(&sym))
}

/// The three wells and auxiliary midpoint matrices.
#[pyfunction]
fn t3_wells() -> (Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>) {
    let ws = WellSet::t3();
    let wells = (0..3).map(|i| from_matrix(&ws.well(i))).collect();
    let aux = (0..3).map(|i| from_matrix(&ws.s(i))).collect();
    (wells, aux)
}

/// Membership in the relaxed hull of the three-state system.
#[pyfunction]
fn hull_contains(datum: Vec<Vec<f64>>) -> PyResult<bool> {
    Ok(t3_hull_contains(&to_matrix(datum)?).is_some())
}

/// Decomposition of an admissible datum into leg points.
#[pyfunction]
fn hull_split(datum: Vec<Vec<f64>>) -> PyResult<(String, f64)> {
    let f = to_matrix(datum)?;
    let dec = hull_decompose(&f).map_err(err)?;
    let back = microlam_core::wells::recompose(&dec);
    let desc = match dec {
        HullDecomposition::Leg { leg, t } => format!("leg {} t {}", leg + 1, t),
        HullDecomposition::Split {
            lambda,
            nu1,
            nu2,
            leg_a,
            leg_b,
        } => format!(
            "split lambda {} nu1 {} nu2 {} legs {} {}",
            lambda,
            nu1,
            nu2,
            leg_a + 1,
            leg_b + 1
        ),
    };
    Ok((desc, (back - f).norm()))
}

/// Evaluates the diagonal-entry relation from entry `i` to `j` (1-based).
#[pyfunction]
fn diagonal_relation(i: usize, j: usize, x: f64) -> PyResult<f64> {
    if !(1..=3).contains(&i) || !(1..=3).contains(&j) || i == j {
        return Err(PyValueError::new_err("indices must be distinct and in 1..=3"));
    }
    Ok(DiagonalRelationTable::new().relation(i - 1, j - 1).eval(x))
}

/// Exact energies of the branching construction:
/// `(elastic, surface, total, jump_pass)`.
#[pyfunction]
#[pyo3(signature = (n, eps, theta = 0.3, lambda = 0.5))]
fn branching_energies(n: usize, eps: f64, theta: f64, lambda: f64) -> PyResult<(f64, f64, f64, bool)> {
    let wells = WellSet::t3();
    let params = BranchingParams {
        n,
        theta,
        lambda,
        dim: 3,
        a: wells.well(0),
        b: wells.s(0),
    };
    let build = build_two_well_branching(&params, eps, BranchingVariant::TwoFace).map_err(err)?;
    let op = Operator::divergence(3, 3);
    let jump = build.complex.interface_check(&op).map_err(err)?;
    Ok((
        build.report.e_el_pair,
        build.report.e_surf,
        build.report.e_total,
        jump.pass(),
    ))
}

/// Exact energies of the iterated three-state laminate for a stage count and
/// target pitch ratio: `(elastic, surface, scales)`.
#[pyfunction]
fn t3_energies(stages: usize, ratio: f64) -> PyResult<(f64, f64, Vec<f64>)> {
    let scales = admissible_scales(ratio, stages).map_err(err)?;
    let wells = WellSet::t3();
    let build = build_t3_laminate(&wells.s(2), &T3Params { scales: scales.clone() }, true)
        .map_err(err)?;
    let rc = build.complex.as_ref().expect("materialized");
    Ok((rc.elastic_energy(), rc.surface_energy(), scales))
}

/// Number of admissible exact fields on a small periodic grid.
#[pyfunction]
#[pyo3(signature = (cells, wells = "t3"))]
fn rigidity_count(cells: usize, wells: &str) -> PyResult<usize> {
    let ws = match wells {
        "t3" => WellSet::t3(),
        "pair" => {
            let t3 = WellSet::t3();
            WellSet::pair(t3.well(0), t3.s(0), 0.5)
        }
        other => return Err(PyValueError::new_err(format!("unknown well set '{other}'"))),
    };
    let grid = Grid::new(3, cells).map_err(err)?;
    let op = Operator::divergence(ws.rows(), ws.cols());
    Ok(exact_rigidity_search(&grid, &ws, &op, SEARCH_BUDGET)
        .map_err(err)?
        .len())
}

/// Least-squares scaling fit: `(amplitude, rate, r_squared)`.
#[pyfunction]
fn scaling_fit(eps: Vec<f64>, energy: Vec<f64>, model: &str) -> PyResult<(f64, f64, f64)> {
    let model = match model {
        "algebraic" => FitModel::Algebraic,
        "stretched" => FitModel::Stretched,
        other => return Err(PyValueError::new_err(format!("unknown model '{other}'"))),
    };
    if eps.len() != energy.len() {
        return Err(PyValueError::new_err("eps and energy lengths differ"));
    }
    let pts: Vec<(f64, f64)> = eps.into_iter().zip(energy).collect();
    let fit = fit_scaling(&pts, model).map_err(err)?;
    Ok((fit.amplitude, fit.rate, fit.r_squared))
}

#[pymodule]
fn microlam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(balance_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(wave_cone, m)?)?;
    m.add_function(wrap_pyfunction!(lamination_space, m)?)?;
    m.add_function(wrap_pyfunction!(constant_rank, m)?)?;
    m.add_function(wrap_pyfunction!(symbol, m)?)?;
    m.add_function(wrap_pyfunction!(t3_wells, m)?)?;
    m.add_function(wrap_pyfunction!(hull_contains, m)?)?;
    m.add_function(wrap_pyfunction!(hull_split, m)?)?;
    m.add_function(wrap_pyfunction!(diagonal_relation, m)?)?;
    m.add_function(wrap_pyfunction!(branching_energies, m)?)?;
    m.add_function(wrap_pyfunction!(t3_energies, m)?)?;
    m.add_function(wrap_pyfunction!(rigidity_count, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_fit, m)?)?;
    Ok(())
}
