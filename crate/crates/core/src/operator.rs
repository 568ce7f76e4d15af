//! Constant-coefficient homogeneous operators, their symbols and wave cones.
//!
//! An operator of order `k` maps smooth fields `R^d -> R^n` to `R^m` fields
//! and is stored through its coefficient matrices, one per multi-index of
//! length `k`.  Everything downstream (energies, compatibility of laminates,
//! kernel projections) only consumes the symbol, i.e. the matrix polynomial
//! obtained by replacing derivatives with frequency components.  Symbols are
//! kept real; the global `i^k` phase is dropped since only norms and kernels
//! are used.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative singular-value threshold for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Default residual tolerance for sampled wave-cone membership (order >= 2).
pub const DEFAULT_WAVE_CONE_TOL: f64 = 1e-8;

/// A multi-index `alpha` with `|alpha| = order`, stored as per-axis exponents.
pub type MultiIndex = Vec<usize>;

/// A homogeneous, linear, constant-coefficient operator given by its
/// coefficient matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    order: usize,
    space_dim: usize,
    state_dim: usize,
    eq_dim: usize,
    coeffs: Vec<(MultiIndex, DMatrix<f64>)>,
    name: Option<String>,
}

/// Outcome of a wave-cone membership query.
#[derive(Debug, Clone)]
pub struct WaveConeCertificate {
    pub member: bool,
    /// Unit direction annihilating the state, when one exists.
    pub direction: Option<DVector<f64>>,
    /// Smallest symbol residual found (singular value for order one).
    pub residual: f64,
}

/// Result of sampling the symbol rank over the unit sphere.
#[derive(Debug, Clone, Copy)]
pub struct RankCheck {
    pub constant: bool,
    pub min_rank: usize,
    pub max_rank: usize,
}

/// First-order operators rewritten as a divergence of a linear image,
/// `A(D) u = div(omega(u))`.
#[derive(Debug, Clone)]
pub struct OmegaReduction {
    first_order: Vec<DMatrix<f64>>,
    kernel: Vec<DVector<f64>>,
    /// Largest deviation of `omega(mu) xi` from the symbol applied to `mu`
    /// over the verification probes.
    pub probe_residual: f64,
}

impl Operator {
    /// Builds an operator from explicit coefficient matrices.
    pub fn new(
        order: usize,
        space_dim: usize,
        state_dim: usize,
        eq_dim: usize,
        coeffs: Vec<(MultiIndex, DMatrix<f64>)>,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidInput("operator order must be positive".into()));
        }
        let mut any_nonzero = false;
        for (alpha, mat) in &coeffs {
            if alpha.len() != space_dim {
                return Err(Error::DimensionMismatch {
                    what: "multi-index length",
                    expected: space_dim.to_string(),
                    got: alpha.len().to_string(),
                });
            }
            let len: usize = alpha.iter().sum();
            if len != order {
                return Err(Error::InvalidInput(format!(
                    "multi-index {alpha:?} has length {len}, operator order is {order}"
                )));
            }
            if mat.nrows() != eq_dim || mat.ncols() != state_dim {
                return Err(Error::DimensionMismatch {
                    what: "coefficient matrix",
                    expected: format!("{eq_dim}x{state_dim}"),
                    got: format!("{}x{}", mat.nrows(), mat.ncols()),
                });
            }
            if mat.iter().any(|v| *v != 0.0) {
                any_nonzero = true;
            }
        }
        if !any_nonzero {
            return Err(Error::InvalidInput("all coefficient matrices are zero".into()));
        }
        Ok(Self {
            order,
            space_dim,
            state_dim,
            eq_dim,
            coeffs,
            name: None,
        })
    }

    /// Row-wise divergence on `rows x cols` matrix fields.
    ///
    /// States are flattened row-major (`u_ij` at index `i*cols + j`), so the
    /// symbol acts as `M -> M xi`.
    pub fn divergence(rows: usize, cols: usize) -> Self {
        let d = cols;
        let n = rows * cols;
        let mut coeffs = Vec::with_capacity(d);
        for j in 0..d {
            let mut alpha = vec![0usize; d];
            alpha[j] = 1;
            let mut mat = DMatrix::zeros(rows, n);
            for i in 0..rows {
                mat[(i, i * cols + j)] = 1.0;
            }
            coeffs.push((alpha, mat));
        }
        let mut op = Self::new(1, d, n, rows, coeffs).expect("divergence is well-formed");
        op.name = Some(format!("div{rows}x{cols}"));
        op
    }

    /// Row-wise curl in three dimensions on `3x3` matrix fields.
    pub fn curl3() -> Self {
        // (curl w)_a = sum_{b,c} eps_{abc} d_b w_c, applied to each row.
        let eps = |a: usize, b: usize, c: usize| -> f64 {
            match (a, b, c) {
                (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
                (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
                _ => 0.0,
            }
        };
        let mut coeffs = Vec::new();
        for b in 0..3 {
            let mut alpha = vec![0usize; 3];
            alpha[b] = 1;
            let mut mat = DMatrix::zeros(9, 9);
            for row in 0..3 {
                for a in 0..3 {
                    for c in 0..3 {
                        let v = eps(a, b, c);
                        if v != 0.0 {
                            mat[(row * 3 + a, row * 3 + c)] = v;
                        }
                    }
                }
            }
            coeffs.push((alpha, mat));
        }
        let mut op = Self::new(1, 3, 9, 9, coeffs).expect("curl3 is well-formed");
        op.name = Some("curl3".into());
        op
    }

    /// Second-order `curl curl` in two dimensions on `2x2` matrix fields.
    ///
    /// The symbol applied to `M` is the scalar
    /// `xi_2^2 M_11 - xi_1 xi_2 (M_12 + M_21) + xi_1^2 M_22`.
    pub fn curl_curl_2d() -> Self {
        let mut coeffs = Vec::new();
        // alpha = (2,0): picks M_22
        let mut m20 = DMatrix::zeros(1, 4);
        m20[(0, 3)] = 1.0;
        coeffs.push((vec![2, 0], m20));
        // alpha = (1,1): -(M_12 + M_21)
        let mut m11 = DMatrix::zeros(1, 4);
        m11[(0, 1)] = -1.0;
        m11[(0, 2)] = -1.0;
        coeffs.push((vec![1, 1], m11));
        // alpha = (0,2): picks M_11
        let mut m02 = DMatrix::zeros(1, 4);
        m02[(0, 0)] = 1.0;
        coeffs.push((vec![0, 2], m02));
        let mut op = Self::new(2, 2, 4, 1, coeffs).expect("curl curl is well-formed");
        op.name = Some("curlcurl2".into());
        op
    }

    /// Resolves one of the built-in operator names.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "div" => Ok(Self::divergence(3, 3)),
            "div2" => Ok(Self::divergence(2, 2)),
            "curl3" => Ok(Self::curl3()),
            "curlcurl2" => Ok(Self::curl_curl_2d()),
            other => Err(Error::InvalidInput(format!("unknown operator name '{other}'"))),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }
    pub fn space_dim(&self) -> usize {
        self.space_dim
    }
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }
    pub fn eq_dim(&self) -> usize {
        self.eq_dim
    }
    pub fn coeffs(&self) -> &[(MultiIndex, DMatrix<f64>)] {
        &self.coeffs
    }
    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    /// True when the symbol acts on matrix fields as `M -> M xi`.
    pub fn is_divergence(&self) -> bool {
        self.name
            .as_deref()
            .is_some_and(|n| n.starts_with("div") && n.contains('x'))
    }

    /// Evaluates the symbol at a frequency `xi`.
    pub fn symbol(&self, xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        if xi.len() != self.space_dim {
            return Err(Error::DimensionMismatch {
                what: "frequency vector",
                expected: self.space_dim.to_string(),
                got: xi.len().to_string(),
            });
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("frequency vector has non-finite entries".into()));
        }
        let mut acc = DMatrix::zeros(self.eq_dim, self.state_dim);
        for (alpha, mat) in &self.coeffs {
            let mut coeff = 1.0;
            for (axis, &exp) in alpha.iter().enumerate() {
                for _ in 0..exp {
                    coeff *= xi[axis];
                }
            }
            if coeff != 0.0 {
                acc += mat * coeff;
            }
        }
        Ok(acc)
    }

    /// Applies the symbol at `xi` to a state vector.
    pub fn symbol_apply(&self, xi: &DVector<f64>, state: &DVector<f64>) -> Result<DVector<f64>> {
        if state.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                what: "state vector",
                expected: self.state_dim.to_string(),
                got: state.len().to_string(),
            });
        }
        Ok(self.symbol(xi)? * state)
    }

    /// For order one: the `m x d` matrix with columns `A^j mu`, so that the
    /// symbol applied to `mu` is this matrix acting on `xi`.
    pub fn direction_matrix(&self, mu: &DVector<f64>) -> Result<DMatrix<f64>> {
        if self.order != 1 {
            return Err(Error::UnsupportedOrder {
                order: self.order,
                reason: "direction matrix defined only for first-order operators",
            });
        }
        if mu.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                what: "state vector",
                expected: self.state_dim.to_string(),
                got: mu.len().to_string(),
            });
        }
        let mut out = DMatrix::zeros(self.eq_dim, self.space_dim);
        for (alpha, mat) in &self.coeffs {
            let axis = alpha.iter().position(|&e| e == 1).expect("order-one index");
            out.set_column(axis, &(mat * mu).column(0));
        }
        Ok(out)
    }

    /// Tests whether `mu` lies in the wave cone.
    ///
    /// For first-order operators membership is exact linear algebra (kernel of
    /// the direction matrix).  For higher order the symbol residual is
    /// minimised over a sphere lattice with local refinement, and membership
    /// is declared when the refined residual drops below `tol` relative to
    /// the largest symbol gain.
    pub fn wave_cone_contains(&self, mu: &DVector<f64>, tol: f64) -> Result<WaveConeCertificate> {
        if mu.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                what: "state vector",
                expected: self.state_dim.to_string(),
                got: mu.len().to_string(),
            });
        }
        if mu.norm() == 0.0 {
            return Err(Error::InvalidInput(
                "wave-cone membership is undefined for the zero state".into(),
            ));
        }
        if self.order == 1 {
            let l = self.direction_matrix(mu)?;
            let svd = l.clone().svd(false, true);
            let sigma = &svd.singular_values;
            let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
            let smin = if sigma.len() < self.space_dim {
                0.0
            } else {
                sigma.iter().cloned().fold(f64::INFINITY, f64::min)
            };
            let rank = numerical_rank(sigma.as_slice(), smax);
            let member = rank < self.space_dim;
            let direction = if member {
                let vt = svd.v_t.expect("requested V^T");
                // Smallest singular direction: last row of V^T (nalgebra sorts
                // singular values in decreasing order).
                let row = vt.row(vt.nrows() - 1).transpose();
                let mut dir = DVector::from_column_slice(row.as_slice());
                // When rank deficiency exceeds one, any kernel vector works.
                let nrm = dir.norm();
                dir /= nrm;
                Some(dir)
            } else {
                None
            };
            return Ok(WaveConeCertificate {
                member,
                direction,
                residual: smin,
            });
        }

        // Sampled minimisation for higher order.
        let lattice = sphere_lattice(self.space_dim, 10_000);
        let mut best_xi = lattice[0].clone();
        let mut best = f64::INFINITY;
        for xi in &lattice {
            let r = self.symbol_apply(xi, mu)?.norm_squared();
            if r < best {
                best = r;
                best_xi = xi.clone();
            }
        }
        let refined = self.refine_on_sphere(&best_xi, mu);
        let r_final = self.symbol_apply(&refined, mu)?.norm();
        let gain = self.max_symbol_gain();
        let member = r_final <= tol * mu.norm() * gain.max(1e-300);
        Ok(WaveConeCertificate {
            member,
            direction: member.then(|| refined),
            residual: r_final,
        })
    }

    /// Orthonormal basis of the lamination space of `mu` (first order only).
    ///
    /// The empty basis signals that `mu` is outside the wave cone.
    pub fn lamination_space(&self, mu: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        if self.order != 1 {
            return Err(Error::UnsupportedOrder {
                order: self.order,
                reason: "lamination spaces of higher-order operators are algebraic varieties",
            });
        }
        if mu.norm() == 0.0 {
            return Err(Error::InvalidInput(
                "lamination space is undefined for the zero state".into(),
            ));
        }
        let l = self.direction_matrix(mu)?;
        Ok(kernel_basis(&l))
    }

    /// Samples the symbol rank over the sphere.
    pub fn constant_rank(&self, samples: usize, tol: f64) -> Result<RankCheck> {
        if samples < 100 {
            return Err(Error::InvalidInput("need at least 100 sphere samples".into()));
        }
        let lattice = sphere_lattice(self.space_dim, samples);
        // Rank is measured against the largest singular value over the whole
        // sphere; per-point normalization would hide uniformly scaled drops.
        let spectra: Vec<Vec<f64>> = lattice
            .iter()
            .map(|xi| {
                let svd = self.symbol(xi)?.svd(false, false);
                Ok(svd.singular_values.as_slice().to_vec())
            })
            .collect::<Result<_>>()?;
        let global_max = spectra
            .iter()
            .flat_map(|s| s.iter().cloned())
            .fold(0.0_f64, f64::max);
        let mut min_rank = usize::MAX;
        let mut max_rank = 0usize;
        for sigma in &spectra {
            let rank = if global_max == 0.0 {
                0
            } else {
                sigma.iter().filter(|s| **s / global_max > tol).count()
            };
            min_rank = min_rank.min(rank);
            max_rank = max_rank.max(rank);
        }
        Ok(RankCheck {
            constant: min_rank == max_rank,
            min_rank,
            max_rank,
        })
    }

    /// Rewrites a first-order operator as `div(omega(u))` and verifies the
    /// symbol identity on random probes.
    pub fn omega_reduction(&self) -> Result<OmegaReduction> {
        if self.order != 1 {
            return Err(Error::UnsupportedOrder {
                order: self.order,
                reason: "the divergence rewriting applies to first-order operators",
            });
        }
        let mut first_order = vec![DMatrix::zeros(self.eq_dim, self.state_dim); self.space_dim];
        for (alpha, mat) in &self.coeffs {
            let axis = alpha.iter().position(|&e| e == 1).expect("order-one index");
            first_order[axis] = mat.clone();
        }
        // ker(omega) = intersection of the kernels of all A^j.
        let mut stacked = DMatrix::zeros(self.eq_dim * self.space_dim, self.state_dim);
        for (j, mat) in first_order.iter().enumerate() {
            stacked
                .view_mut((j * self.eq_dim, 0), (self.eq_dim, self.state_dim))
                .copy_from(mat);
        }
        let kernel = kernel_basis(&stacked);

        let mut red = OmegaReduction {
            first_order,
            kernel,
            probe_residual: 0.0,
        };
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x00AE_6A11);
        let mut worst = 0.0_f64;
        for _ in 0..32 {
            let mu = DVector::from_fn(self.state_dim, |_, _| rng.random_range(-1.0..1.0));
            let xi = DVector::from_fn(self.space_dim, |_, _| rng.random_range(-1.0..1.0));
            let lhs = red.map(&mu)? * &xi;
            let rhs = self.symbol_apply(&xi, &mu)?;
            let denom = 1.0 + mu.norm() * xi.norm();
            worst = worst.max((lhs - rhs).norm() / denom);
        }
        red.probe_residual = worst;
        Ok(red)
    }

    /// Largest symbol gain over the sampled sphere.
    pub fn max_symbol_gain(&self) -> f64 {
        let lattice = sphere_lattice(self.space_dim, 512);
        lattice
            .iter()
            .map(|xi| {
                let sym = self.symbol(xi).expect("valid lattice point");
                sym.svd(false, false)
                    .singular_values
                    .iter()
                    .cloned()
                    .fold(0.0_f64, f64::max)
            })
            .fold(0.0_f64, f64::max)
    }

    /// Smallest value of `|symbol(xi) state|` over the sampled sphere.
    pub fn min_symbol_response(&self, state: &DVector<f64>, samples: usize) -> Result<f64> {
        let lattice = sphere_lattice(self.space_dim, samples.max(100));
        let mut best = f64::INFINITY;
        for xi in &lattice {
            best = best.min(self.symbol_apply(xi, state)?.norm());
        }
        Ok(best)
    }

    fn refine_on_sphere(&self, start: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        // Projected gradient descent on |symbol(xi) mu|^2 over the sphere.
        let mut xi = start.clone();
        let mut step = 0.1;
        let mut value = self
            .symbol_apply(&xi, mu)
            .map(|v| v.norm_squared())
            .unwrap_or(f64::INFINITY);
        for _ in 0..200 {
            let grad = self.residual_gradient(&xi, mu);
            let tangential = &grad - &xi * grad.dot(&xi);
            if tangential.norm() < 1e-16 {
                break;
            }
            let mut advanced = false;
            for _ in 0..30 {
                let mut cand = &xi - &tangential * step;
                let nrm = cand.norm();
                if nrm == 0.0 {
                    step *= 0.5;
                    continue;
                }
                cand /= nrm;
                let v = self
                    .symbol_apply(&cand, mu)
                    .map(|v| v.norm_squared())
                    .unwrap_or(f64::INFINITY);
                if v < value {
                    xi = cand;
                    value = v;
                    step *= 1.5;
                    advanced = true;
                    break;
                }
                step *= 0.5;
            }
            if !advanced {
                break;
            }
        }
        xi
    }

    fn residual_gradient(&self, xi: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        // d/dxi_j |A(xi) mu|^2 = 2 (A(xi) mu) . (d_j A(xi) mu)
        let l = self.symbol_apply(xi, mu).expect("consistent dims");
        let mut grad = DVector::zeros(self.space_dim);
        for j in 0..self.space_dim {
            let mut dmat = DVector::zeros(self.eq_dim);
            for (alpha, mat) in &self.coeffs {
                if alpha[j] == 0 {
                    continue;
                }
                let mut coeff = alpha[j] as f64;
                for (axis, &exp) in alpha.iter().enumerate() {
                    let e = if axis == j { exp - 1 } else { exp };
                    for _ in 0..e {
                        coeff *= xi[axis];
                    }
                }
                if coeff != 0.0 {
                    dmat += mat * mu * coeff;
                }
            }
            grad[j] = 2.0 * l.dot(&dmat);
        }
        grad
    }
}

impl OmegaReduction {
    /// The linear map `omega` applied to a state, producing an `m x d` matrix.
    pub fn map(&self, state: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = self.first_order.len();
        let m = self.first_order[0].nrows();
        if state.len() != self.first_order[0].ncols() {
            return Err(Error::DimensionMismatch {
                what: "state vector",
                expected: self.first_order[0].ncols().to_string(),
                got: state.len().to_string(),
            });
        }
        let mut out = DMatrix::zeros(m, d);
        for (j, mat) in self.first_order.iter().enumerate() {
            out.set_column(j, &(mat * state).column(0));
        }
        Ok(out)
    }

    /// Orthonormal basis of `ker omega`.
    pub fn kernel(&self) -> &[DVector<f64>] {
        &self.kernel
    }
}

/// Rotates an `m x d` state value into a new frame, `u -> u R`.
///
/// `R` must be orthogonal; the rotated piecewise-constant field
/// `x -> u(R x) R` is divergence free exactly when the original one is.
pub fn rotate_frame(u: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if r.nrows() != r.ncols() || r.ncols() != u.ncols() {
        return Err(Error::DimensionMismatch {
            what: "rotation matrix",
            expected: format!("{0}x{0}", u.ncols()),
            got: format!("{}x{}", r.nrows(), r.ncols()),
        });
    }
    let gram = r.transpose() * r;
    let eye = DMatrix::identity(r.nrows(), r.ncols());
    if (gram - eye).norm() > 1e-12 {
        return Err(Error::InvalidInput("rotation matrix is not orthogonal".into()));
    }
    Ok(u * r)
}

/// Numerical rank with the crate-wide relative threshold.
pub fn numerical_rank(sigma: &[f64], smax: f64) -> usize {
    if smax == 0.0 {
        return 0;
    }
    sigma.iter().filter(|s| **s / smax > RANK_TOL).count()
}

/// Orthonormal kernel basis of a rectangular matrix via SVD.
pub fn kernel_basis(mat: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = mat.ncols();
    let svd = mat.clone().svd(false, true);
    let sigma = &svd.singular_values;
    let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let rank = numerical_rank(sigma.as_slice(), smax);
    let vt = svd.v_t.expect("requested V^T");
    let mut basis = Vec::new();
    // Rows of V^T beyond the rank span the kernel; V^T from nalgebra has
    // min(m, n) rows, missing kernel directions are completed below.
    for i in rank..vt.nrows() {
        basis.push(vt.row(i).transpose());
    }
    if vt.nrows() < n {
        // Complete the orthonormal system by Gram-Schmidt against V rows.
        let mut have: Vec<DVector<f64>> = (0..vt.nrows()).map(|i| vt.row(i).transpose()).collect();
        for k in 0..n {
            let mut cand = DVector::zeros(n);
            cand[k] = 1.0;
            for v in &have {
                let p = cand.dot(v);
                cand -= v * p;
            }
            if cand.norm() > 1e-8 {
                cand /= cand.norm();
                have.push(cand.clone());
                basis.push(cand);
            }
        }
    }
    basis
}

/// Deterministic quasi-uniform lattice on the unit sphere.
///
/// Fibonacci lattice in three dimensions, uniform angles in two, and a seeded
/// low-discrepancy fallback in higher dimension.
pub fn sphere_lattice(dim: usize, count: usize) -> Vec<DVector<f64>> {
    let count = count.max(4);
    match dim {
        1 => vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![-1.0])],
        2 => (0..count)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * (i as f64) / (count as f64);
                DVector::from_vec(vec![theta.cos(), theta.sin()])
            })
            .collect(),
        3 => {
            let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / (count as f64);
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = 2.0 * std::f64::consts::PI * (i as f64) / golden;
                    DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
                })
                .collect()
        }
        _ => {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5EED_5B1F);
            (0..count)
                .map(|_| {
                    loop {
                        let v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
                        let nrm = v.norm();
                        if nrm > 1e-3 {
                            return v / nrm;
                        }
                    }
                })
                .collect()
        }
    }
}

// --- serialization -----------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CoeffJson {
    alpha: Vec<usize>,
    matrix: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct OperatorJson {
    order: usize,
    d: usize,
    n: usize,
    m: usize,
    coeffs: Vec<CoeffJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

impl Serialize for Operator {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(alpha, mat)| CoeffJson {
                alpha: alpha.clone(),
                matrix: (0..mat.nrows())
                    .map(|i| (0..mat.ncols()).map(|j| mat[(i, j)]).collect())
                    .collect(),
            })
            .collect();
        OperatorJson {
            order: self.order,
            d: self.space_dim,
            n: self.state_dim,
            m: self.eq_dim,
            coeffs,
            name: self.name.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Operator {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = OperatorJson::deserialize(de)?;
        let coeffs = raw
            .coeffs
            .into_iter()
            .map(|c| {
                let rows = c.matrix.len();
                let cols = c.matrix.first().map_or(0, Vec::len);
                let mat = DMatrix::from_fn(rows, cols, |i, j| c.matrix[i][j]);
                (c.alpha, mat)
            })
            .collect();
        let mut op = Operator::new(raw.order, raw.d, raw.n, raw.m, coeffs)
            .map_err(serde::de::Error::custom)?;
        op.name = raw.name;
        Ok(op)
    }
}
