//! Elastic and interfacial energies.
//!
//! Two elastic energies coexist on purpose.  The *pair* energy integrates
//! `|u - chi|^2` for an explicit deformation; the *relaxed* energy drops the
//! boundary conditions and minimizes per Fourier mode by projecting the phase
//! spectrum onto the range of the adjoint symbol.  Upper-bound constructions
//! are scored with the pair energy, lower-bound diagnostics with the relaxed
//! one; conflating them would fake agreement.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dft, PhaseField, ScalarField, Spectrum, TensorField};
use crate::operator::{numerical_rank, Operator, RANK_TOL};

/// Energies of one configuration at a given regularization strength.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyReport {
    pub eps: f64,
    pub e_el_pair: f64,
    pub e_el_relaxed: f64,
    pub e_surf: f64,
    pub e_total: f64,
}

impl EnergyReport {
    pub fn new(eps: f64, e_el_pair: f64, e_el_relaxed: f64, e_surf: f64) -> Self {
        Self {
            eps,
            e_el_pair,
            e_el_relaxed,
            e_surf,
            e_total: e_el_pair + eps * e_surf,
        }
    }
}

/// Result of the per-mode projection energy.
#[derive(Debug, Clone)]
pub struct RelaxedEnergy {
    /// Fluctuation part plus mean mismatch.
    pub total: f64,
    /// `|mean(chi) - datum|^2`.
    pub mean_term: f64,
    /// Sum over nonzero modes of the projected squared spectrum.
    pub fluctuation: f64,
    /// Modes skipped because the sampled symbol rank was ambiguous there.
    pub skipped_modes: usize,
    /// Per-mode contributions (flat spectral indexing), when retained.
    pub spectrum: Option<Vec<f64>>,
}

/// Midpoint quadrature of `|u - chi|^2` over the grid.
pub fn elastic_energy_pair(u: &TensorField, chi: &PhaseField) -> Result<f64> {
    if u.grid != chi.grid {
        return Err(Error::GridMismatch("pair energy needs matching grids".into()));
    }
    if u.rows != chi.wells.rows() || u.cols != chi.wells.cols() {
        return Err(Error::GridMismatch("pair energy needs matching value shapes".into()));
    }
    let nc = u.rows * u.cols;
    let mats: Vec<Vec<f64>> = (0..chi.wells.len())
        .map(|w| {
            let m = chi.wells.well(w);
            let mut flat = Vec::with_capacity(nc);
            for i in 0..u.rows {
                for j in 0..u.cols {
                    flat.push(m[(i, j)]);
                }
            }
            flat
        })
        .collect();
    let cellvol = u.grid.cell_volume();
    let mut acc = 0.0;
    for cell in 0..u.grid.cell_count() {
        let w = &mats[chi.labels[cell] as usize];
        let base = cell * nc;
        let mut local = 0.0;
        for c in 0..nc {
            let d = u.data[base + c] - w[c];
            local += d * d;
        }
        acc += local * cellvol;
    }
    Ok(acc)
}

/// Anisotropic discrete total variation of the phase field: Frobenius jump
/// times face area over interior and periodic faces.
pub fn surface_energy(chi: &PhaseField) -> f64 {
    let g = &chi.grid;
    let n = g.cells_per_axis();
    let k = chi.wells.len();
    let mut dist = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            dist[a * k + b] = (chi.wells.well(a) - chi.wells.well(b)).norm();
        }
    }
    let face_area = 1.0 / (n as f64).powi(g.dim() as i32 - 1);
    let mut tv = 0.0;
    for cell in 0..g.cell_count() {
        let la = chi.labels[cell] as usize;
        for axis in 0..g.dim() {
            let c = g.coord(cell, axis);
            let next = if c + 1 == n {
                cell - c * g.stride(axis)
            } else {
                cell + g.stride(axis)
            };
            tv += dist[la * k + chi.labels[next] as usize] * face_area;
        }
    }
    tv
}

/// Per-mode Fourier projection energy with the mean mismatch at frequency
/// zero.
///
/// For the divergence the projection of a matrix spectrum is `M k/|k|`; for a
/// general constant-rank operator it is the projection onto the row space of
/// the symbol, computed per mode from an SVD.  Modes where the sampled rank
/// deviates from the global rank are skipped and counted.
pub fn elastic_energy_relaxed(
    chi: &PhaseField,
    datum: &DMatrix<f64>,
    op: &Operator,
    keep_spectrum: bool,
) -> Result<RelaxedEnergy> {
    let grid = chi.grid;
    let rows = chi.wells.rows();
    let cols = chi.wells.cols();
    if op.space_dim() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "operator space dimension {} vs grid dimension {}",
            op.space_dim(),
            grid.dim()
        )));
    }
    if op.state_dim() != rows * cols {
        return Err(Error::DimensionMismatch {
            what: "operator state dimension",
            expected: (rows * cols).to_string(),
            got: op.state_dim().to_string(),
        });
    }
    if datum.nrows() != rows || datum.ncols() != cols {
        return Err(Error::DimensionMismatch {
            what: "exterior datum",
            expected: format!("{rows}x{cols}"),
            got: format!("{}x{}", datum.nrows(), datum.ncols()),
        });
    }

    // Component spectra, row-major component order.
    let spectra: Vec<Spectrum> = (0..rows * cols)
        .map(|c| dft(&chi.component(c / cols, c % cols)))
        .collect();

    let cells = grid.cell_count();
    let divergence = op.is_divergence();
    let rank_check = op.constant_rank(200, RANK_TOL)?;
    let global_rank = rank_check.max_rank;

    let per_mode: Vec<(f64, usize)> = (1..cells)
        .into_par_iter()
        .map(|idx| {
            let k = grid.freq_vector(idx);
            let norm = (k.iter().map(|v| (*v * *v) as f64).sum::<f64>()).sqrt();
            if divergence {
                // |M khat|^2 row-wise.
                let mut acc = 0.0;
                for i in 0..rows {
                    let mut dot = Complex64::default();
                    for j in 0..cols {
                        dot += spectra[i * cols + j].data[idx] * (k[j] as f64 / norm);
                    }
                    acc += dot.norm_sqr();
                }
                (acc, 0)
            } else {
                let khat = DVector::from_iterator(k.len(), k.iter().map(|v| *v as f64 / norm));
                let sym = op.symbol(&khat).expect("dims checked");
                let svd = sym.svd(false, true);
                let sigma = &svd.singular_values;
                let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
                let rank = numerical_rank(sigma.as_slice(), smax);
                if rank != global_rank {
                    return (0.0, 1);
                }
                let vt = svd.v_t.expect("requested V^T");
                // Projection onto the row space: sum over the leading right
                // singular vectors of |v . z|^2 with complex z.
                let mut acc = 0.0;
                for r in 0..rank {
                    let mut dot = Complex64::default();
                    for c in 0..op.state_dim() {
                        dot += spectra[c].data[idx] * vt[(r, c)];
                    }
                    acc += dot.norm_sqr();
                }
                (acc, 0)
            }
        })
        .collect();

    let fluctuation: f64 = per_mode.iter().map(|(v, _)| v).sum();
    let skipped_modes: usize = per_mode.iter().map(|(_, s)| s).sum();
    let mean_term = {
        let mut acc = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                let d = spectra[i * cols + j].data[0].re - datum[(i, j)];
                acc += d * d;
            }
        }
        acc
    };
    let spectrum = keep_spectrum.then(|| {
        let mut s = vec![0.0; cells];
        s[0] = mean_term;
        for (i, (v, _)) in per_mode.iter().enumerate() {
            s[i + 1] = *v;
        }
        s
    });
    Ok(RelaxedEnergy {
        total: fluctuation + mean_term,
        mean_term,
        fluctuation,
        skipped_modes,
        spectrum,
    })
}

/// Independent route for diagonal-valued phases: the negative-Sobolev form
/// `sum_i || d_i f_i ||^2` in Fourier variables plus the mean mismatch.
pub fn diagonal_relaxed_energy(chi: &PhaseField, datum: &DMatrix<f64>) -> Result<f64> {
    let grid = chi.grid;
    let d = grid.dim();
    if chi.wells.rows() != chi.wells.cols() || chi.wells.rows() != d {
        return Err(Error::GridMismatch(
            "diagonal route needs square values matching the grid dimension".into(),
        ));
    }
    let spectra: Vec<Spectrum> = (0..d).map(|i| dft(&chi.diagonal(i))).collect();
    let mut acc = 0.0;
    for idx in 1..grid.cell_count() {
        let k = grid.freq_vector(idx);
        let norm_sq = k.iter().map(|v| (*v * *v) as f64).sum::<f64>();
        for (i, spec) in spectra.iter().enumerate() {
            let ki = k[i] as f64;
            acc += ki * ki / norm_sq * spec.data[idx].norm_sqr();
        }
    }
    // Mean mismatch over all components (off-diagonal means are exact for
    // diagonal wells and diagonal data).
    let mean = chi.as_tensor().mean();
    acc += (mean - datum).norm_squared();
    Ok(acc)
}

/// Outcome of a frequency-control inequality check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Spectral elastic energy of a scalar field under a linear multiplier
/// `xi -> m(xi/|xi|)`, nonzero modes only.
pub fn multiplier_elastic_energy(
    f: &ScalarField,
    multiplier: &dyn Fn(&DVector<f64>) -> f64,
) -> f64 {
    let grid = f.grid;
    let spec = dft(f);
    let mut acc = 0.0;
    for idx in 1..grid.cell_count() {
        let k = grid.freq_vector(idx);
        let norm = (k.iter().map(|v| (*v * *v) as f64).sum::<f64>()).sqrt();
        let khat = DVector::from_iterator(k.len(), k.iter().map(|v| *v as f64 / norm));
        let gain = multiplier(&khat);
        acc += gain * gain * spec.data[idx].norm_sqr();
    }
    acc
}

/// Low-frequency control: spectral mass in the slab `|P_V k| <= mu` against
/// the multiplier elastic energy scaled by `c mu^2`.
pub fn low_freq_control_check(
    f: &ScalarField,
    kernel_basis: &[DVector<f64>],
    mu: f64,
    multiplier: &dyn Fn(&DVector<f64>) -> f64,
    c: f64,
) -> Result<ControlCheck> {
    if mu <= 1.0 {
        return Err(Error::InvalidInput("low-frequency control needs mu > 1".into()));
    }
    let grid = f.grid;
    let spec = dft(f);
    let mut lhs = 0.0;
    for idx in 0..grid.cell_count() {
        let k = grid.freq_vector(idx);
        let mut proj_sq = 0.0;
        for v in kernel_basis {
            let dot: f64 = (0..grid.dim()).map(|a| v[a] * k[a] as f64).sum();
            proj_sq += dot * dot;
        }
        if proj_sq.sqrt() <= mu {
            lhs += spec.data[idx].norm_sqr();
        }
    }
    let elastic = multiplier_elastic_energy(f, multiplier);
    let rhs = c * mu * mu * elastic;
    Ok(ControlCheck {
        lhs,
        rhs,
        pass: lhs <= rhs + 1e-12 * f.norm_l2_sq(),
    })
}

/// High-frequency control: spectral mass above radius `mu` against the
/// interfacial energy plus the domain perimeter, scaled by `c / mu`.
pub fn high_freq_control_check(f: &ScalarField, mu: f64, c: f64) -> Result<ControlCheck> {
    if mu <= 0.0 {
        return Err(Error::InvalidInput("high-frequency control needs mu > 0".into()));
    }
    let grid = f.grid;
    let spec = dft(f);
    let mut lhs = 0.0;
    for idx in 0..grid.cell_count() {
        let k = grid.freq_vector(idx);
        let norm = (k.iter().map(|v| (*v * *v) as f64).sum::<f64>()).sqrt();
        if norm >= mu {
            lhs += spec.data[idx].norm_sqr();
        }
    }
    let perimeter = 2.0 * grid.dim() as f64;
    let rhs = c / mu * (f.total_variation() + perimeter);
    Ok(ControlCheck {
        lhs,
        rhs,
        pass: lhs <= rhs + 1e-12 * f.norm_l2_sq(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::la;
    use crate::wells::WellSet;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn laminate_phase(grid: Grid, wells: &WellSet, a: usize, b: usize, axis: usize) -> PhaseField {
        let n = grid.cells_per_axis();
        let labels = (0..grid.cell_count())
            .map(|c| {
                if grid.coord(c, axis) < n / 2 {
                    a as u8
                } else {
                    b as u8
                }
            })
            .collect();
        PhaseField::new(grid, labels, wells.clone()).unwrap()
    }

    #[test]
    fn pair_energy_examples() {
        let grid = Grid::new(3, 8).unwrap();
        let wells = WellSet::t3();
        let chi = laminate_phase(grid, &wells, 0, 1, 0);
        let u = chi.as_tensor();
        assert_eq!(elastic_energy_pair(&u, &chi).unwrap(), 0.0);

        // u = chi + c everywhere gives |c|^2.
        let mut shifted = u.clone();
        let nc = 9;
        for cell in 0..grid.cell_count() {
            shifted.data[cell * nc] += 0.3; // add c = 0.3 E11
        }
        let e = elastic_energy_pair(&shifted, &chi).unwrap();
        assert_relative_eq!(e, 0.09, epsilon = 1e-12);
    }

    #[test]
    fn surface_energy_examples() {
        let grid = Grid::new(3, 8).unwrap();
        let wells = WellSet::t3();
        // Constant field: zero.
        let constant = PhaseField::new(grid, vec![0; grid.cell_count()], wells.clone()).unwrap();
        assert_eq!(surface_energy(&constant), 0.0);

        // Periodic A1 | S1 laminate: two interfaces of area one each.
        let pair = WellSet::pair(wells.well(0), wells.s(0), 0.5);
        let chi = laminate_phase(grid, &pair, 0, 1, 0);
        let expected = 2.0 * (wells.s(0) - wells.well(0)).norm();
        assert_relative_eq!(surface_energy(&chi), expected, epsilon = 1e-12);
        assert_relative_eq!(expected, 2.0 * 2.0 * 10.0_f64.sqrt() / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn tilted_interface_tv_is_bounded_by_sqrt_d() {
        // 45-degree interface in 2d: anisotropic TV overestimates the
        // perimeter by at most sqrt(2).
        let grid = Grid::new(2, 32).unwrap();
        let wells = WellSet::pair(la::diag3(0., 0., 0.), la::diag3(1., 1., 1.), 0.5);
        let labels: Vec<u8> = (0..grid.cell_count())
            .map(|c| {
                let x = grid.center(c);
                u8::from(x[1] > x[0])
            })
            .collect();
        // Well shapes are 3x3; the grid is 2d, which is fine for TV purposes.
        let chi = PhaseField::new(grid, labels, wells.clone()).unwrap();
        let tv = surface_energy(&chi);
        let jump = (wells.well(1) - wells.well(0)).norm();
        let exact = 2.0_f64.sqrt() * jump; // diagonal length sqrt(2)
        // Periodic wrap adds two more unit-length interfaces.
        let wrap = 2.0 * jump;
        let total_exact = exact + wrap;
        assert!(tv >= total_exact - 1e-9);
        assert!(tv <= 2.0_f64.sqrt() * total_exact + 1e-9);
    }

    #[test]
    fn relaxed_energy_trivial_and_distance() {
        let grid = Grid::new(3, 8).unwrap();
        let wells = WellSet::t3();
        let op = Operator::divergence(3, 3);
        let constant = PhaseField::new(grid, vec![0; grid.cell_count()], wells.clone()).unwrap();

        // chi = A1, F = A1: zero.
        let r = elastic_energy_relaxed(&constant, &wells.well(0), &op, false).unwrap();
        assert!(r.total < 1e-24);

        // chi = A1, F = S3: |A1 - S3|^2 = 10/9.
        let r = elastic_energy_relaxed(&constant, &wells.s(2), &op, false).unwrap();
        assert_relative_eq!(r.total, 10.0 / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn compatible_laminate_with_matching_mean_has_zero_relaxed_energy() {
        // A1/S1 laminate along e1 with mean S3 = (A1+S1)/2: only modes along
        // e1 carry mass and the first column of both wells vanishes.
        let grid = Grid::new(3, 8).unwrap();
        let wells = WellSet::t3();
        let pair = WellSet::pair(wells.well(0), wells.s(0), 0.5);
        let op = Operator::divergence(3, 3);
        let chi = laminate_phase(grid, &pair, 0, 1, 0);
        let r = elastic_energy_relaxed(&chi, &wells.s(2), &op, false).unwrap();
        assert!(r.total < 1e-22, "relaxed energy {}", r.total);
    }

    #[test]
    fn incompatible_pair_nucleation_bound() {
        // Random two-phase fields from the incompatible pair {A1, A2}:
        // relaxed energy >= 0.9 C min(lambda, 1-lambda)^2 with C the sphere
        // minimum of the squared symbol response.
        let grid = Grid::new(3, 8).unwrap();
        let wells = WellSet::t3();
        let op = Operator::divergence(3, 3);
        let diff = wells.well_flat(1) - wells.well_flat(0);
        let c = op.min_symbol_response(&diff, 2000).unwrap().powi(2);
        assert!(c > 0.2, "A2 - A1 has smallest singular value 1/2, so C ~ 1/4");

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let lambda: f64 = rng.random_range(0.1..0.9);
            let labels: Vec<u8> = (0..grid.cell_count())
                .map(|_| u8::from(rng.random_range(0.0..1.0) >= lambda))
                .collect();
            let frac = labels.iter().filter(|l| **l == 0).count() as f64
                / grid.cell_count() as f64;
            let pair = WellSet::pair(wells.well(0), wells.well(1), frac);
            let chi = PhaseField::new(grid, labels, pair.clone()).unwrap();
            let f = pair.boundary_matrix().unwrap();
            let r = elastic_energy_relaxed(&chi, &f, &op, false).unwrap();
            let bound = 0.9 * c * frac.min(1.0 - frac).powi(2);
            assert!(
                r.total >= bound,
                "relaxed {} must dominate {bound}",
                r.total
            );
        }
    }

    #[test]
    fn diagonal_route_agrees_with_projection_route() {
        let grid = Grid::new(3, 8).unwrap();
        let wells = WellSet::t3();
        let op = Operator::divergence(3, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let labels: Vec<u8> = (0..grid.cell_count())
            .map(|_| rng.random_range(0..3) as u8)
            .collect();
        let chi = PhaseField::new(grid, labels, wells.clone()).unwrap();
        let f = wells.s(2);
        let general = elastic_energy_relaxed(&chi, &f, &op, false).unwrap().total;
        let diagonal = diagonal_relaxed_energy(&chi, &f).unwrap();
        assert_relative_eq!(general, diagonal, max_relative = 1e-12);
    }

    #[test]
    fn frequency_controls_trivial_cases() {
        let grid = Grid::new(2, 16).unwrap();
        // Band-limited field: max |k| = 1 < mu = 4 gives zero lhs.
        let f = ScalarField::from_fn(grid, |x| (2.0 * std::f64::consts::PI * x[0]).cos());
        let check = high_freq_control_check(&f, 4.0, 1.0).unwrap();
        assert!(check.lhs < 1e-20, "band-limited tail is FFT dust only");
        assert!(check.pass);

        // Spectrum outside the slab: single mode at k = (3, 0), kernel = e2,
        // slab |k . e2| <= mu misses nothing (k2 = 0), so take kernel e1.
        let f = ScalarField::from_fn(grid, |x| (2.0 * std::f64::consts::PI * 3.0 * x[0]).cos());
        let kernel = vec![DVector::from_vec(vec![1.0, 0.0])];
        let multiplier = |khat: &DVector<f64>| khat[1]; // kernel e1
        let check = low_freq_control_check(&f, &kernel, 2.0, &multiplier, 1.0).unwrap();
        assert!(check.lhs < 1e-20, "only the empty mean mode is in the slab");
        assert!(check.pass);
    }

    #[test]
    fn sawtooth_tail_decays_like_inverse_mu() {
        // Laminate of period 1/4 on a fine grid: spectral tail above mu
        // decays like 1/mu.
        let grid = Grid::new(2, 64).unwrap();
        let f = ScalarField::from_fn(grid, |x| {
            let t = (x[0] * 4.0).fract();
            if t < 0.5 {
                0.5
            } else {
                -0.5
            }
        });
        let spec_tail = |mu: f64| -> f64 {
            let spec = dft(&f);
            let mut acc = 0.0;
            for idx in 0..grid.cell_count() {
                let k = grid.freq_vector(idx);
                let norm = (k.iter().map(|v| (*v * *v) as f64).sum::<f64>()).sqrt();
                if norm >= mu {
                    acc += spec.data[idx].norm_sqr();
                }
            }
            acc
        };
        let t8 = spec_tail(8.0);
        let t16 = spec_tail(16.0);
        // Halving is approximate; accept a factor window.
        assert!(t16 < 0.8 * t8);
        assert!(t16 > 0.2 * t8);
    }
}
