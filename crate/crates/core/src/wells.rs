//! Well sets and the exact algebra of the three-state divergence system.
//!
//! The three diagonal states and their auxiliary midpoint matrices are kept in
//! rational arithmetic; floats only appear where grids and energies need them.

use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::la;

pub type Rat = Rational64;

fn rat(n: i64, d: i64) -> Rat {
    Rat::new(n, d)
}

fn rat_to_f64(r: Rat) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Diagonal triple in rational arithmetic.
pub type DiagRat = [Rat; 3];

/// A finite set of target states, optionally with exterior datum and volume
/// fraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WellSet {
    /// Target matrices, `m x d`, stored as nested rows.
    wells: Vec<Vec<Vec<f64>>>,
    /// Auxiliary midpoint matrices for the three-state system (empty otherwise).
    aux: Vec<Vec<Vec<f64>>>,
    /// Exterior datum, when one is attached.
    pub boundary: Option<Vec<Vec<f64>>>,
    /// Volume fraction, when one is attached.
    pub fraction: Option<f64>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

impl WellSet {
    pub fn new(wells: Vec<DMatrix<f64>>) -> Self {
        Self {
            wells: wells.iter().map(to_rows).collect(),
            aux: Vec::new(),
            boundary: None,
            fraction: None,
        }
    }

    /// Two-state set with exterior datum `lambda A + (1-lambda) B`.
    pub fn pair(a: DMatrix<f64>, b: DMatrix<f64>, lambda: f64) -> Self {
        let f = &a * lambda + &b * (1.0 - lambda);
        let mut ws = Self::new(vec![a, b]);
        ws.boundary = Some(to_rows(&f));
        ws.fraction = Some(lambda);
        ws
    }

    /// The rigid-for-exact, flexible-for-approximate three-state system.
    pub fn t3() -> Self {
        let a1 = la::diag3(0.0, 0.0, 0.0);
        let a2 = la::diag3(-0.5, 2.0 / 3.0, 3.0);
        let a3 = la::diag3(1.0, 1.0, 1.0);
        let s1 = la::diag3(0.0, 2.0 / 3.0, 2.0);
        let s2 = la::diag3(0.5, 2.0 / 3.0, 1.0);
        let s3 = la::diag3(0.0, 1.0 / 3.0, 1.0);
        let mut ws = Self::new(vec![a1, a2, a3]);
        ws.aux = vec![to_rows(&s1), to_rows(&s2), to_rows(&s3)];
        ws.boundary = Some(to_rows(&la::diag3(0.0, 1.0 / 3.0, 1.0)));
        ws
    }

    pub fn len(&self) -> usize {
        self.wells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wells.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.wells[0].len()
    }

    pub fn cols(&self) -> usize {
        self.wells[0][0].len()
    }

    pub fn well(&self, i: usize) -> DMatrix<f64> {
        from_rows(&self.wells[i])
    }

    pub fn well_flat(&self, i: usize) -> DVector<f64> {
        la::flatten(&self.well(i))
    }

    /// Auxiliary midpoint matrix `S_i` (three-state set only).
    pub fn s(&self, i: usize) -> DMatrix<f64> {
        from_rows(&self.aux[i])
    }

    pub fn s_flat(&self, i: usize) -> DVector<f64> {
        la::flatten(&self.s(i))
    }

    pub fn has_aux(&self) -> bool {
        !self.aux.is_empty()
    }

    pub fn boundary_matrix(&self) -> Option<DMatrix<f64>> {
        self.boundary.as_ref().map(|b| from_rows(b))
    }

    /// Index of the nearest well in Frobenius distance; ties break to the
    /// smallest index.
    pub fn nearest(&self, value: &DMatrix<f64>) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for i in 0..self.len() {
            let d = la::dist(value, &self.well(i));
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Exact rational diagonal triples of the three wells.
    pub fn t3_wells_rat() -> [DiagRat; 3] {
        [
            [Rat::zero(), Rat::zero(), Rat::zero()],
            [rat(-1, 2), rat(2, 3), rat(3, 1)],
            [Rat::one(), Rat::one(), Rat::one()],
        ]
    }

    /// Exact rational diagonal triples of the auxiliary matrices.
    pub fn t3_aux_rat() -> [DiagRat; 3] {
        [
            [Rat::zero(), rat(2, 3), rat(2, 1)],
            [rat(1, 2), rat(2, 3), Rat::one()],
            [Rat::zero(), rat(1, 3), Rat::one()],
        ]
    }
}

/// One quadratic `a x^2 + b x` (zero constant term).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiagonalRelation {
    pub a: Rat,
    pub b: Rat,
}

impl DiagonalRelation {
    pub fn eval_rat(&self, x: Rat) -> Rat {
        self.a * x * x + self.b * x
    }

    pub fn eval(&self, x: f64) -> f64 {
        rat_to_f64(self.a) * x * x + rat_to_f64(self.b) * x
    }
}

/// The six quadratics mapping one diagonal entry of a state to another:
/// `relation(i, j)` sends the `i`-th diagonal value of any well to its `j`-th
/// diagonal value.
#[derive(Debug, Clone)]
pub struct DiagonalRelationTable {
    rel: [[Option<DiagonalRelation>; 3]; 3],
}

impl DiagonalRelationTable {
    pub fn new() -> Self {
        let mut rel: [[Option<DiagonalRelation>; 3]; 3] = Default::default();
        let mk = |an: i64, ad: i64, bn: i64, bd: i64| DiagonalRelation {
            a: rat(an, ad),
            b: rat(bn, bd),
        };
        rel[0][1] = Some(mk(14, 9, -5, 9));
        rel[0][2] = Some(mk(14, 3, -11, 3));
        rel[1][0] = Some(mk(21, 4, -17, 4));
        rel[1][2] = Some(mk(-21, 2, 23, 2));
        rel[2][0] = Some(mk(-7, 12, 19, 12));
        rel[2][1] = Some(mk(-7, 18, 25, 18));
        Self { rel }
    }

    /// Relation from diagonal entry `i` to entry `j` (zero-based, `i != j`).
    pub fn relation(&self, i: usize, j: usize) -> DiagonalRelation {
        self.rel[i][j].expect("off-diagonal relation")
    }

    /// Checks all six relations on all three well triples, exactly.
    pub fn verify_on_wells(&self) -> bool {
        let wells = WellSet::t3_wells_rat();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let h = self.relation(i, j);
                if !h.eval_rat(Rat::zero()).is_zero() {
                    return false;
                }
                for w in &wells {
                    if h.eval_rat(w[i]) != w[j] {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Degree of the relations, as consumed by the cone-truncation schedule.
    pub fn degree(&self) -> usize {
        2
    }
}

impl Default for DiagonalRelationTable {
    fn default() -> Self {
        Self::new()
    }
}

/// Witness for membership in the relaxed hull of the three-state system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HullWitness {
    /// The queried matrix is one of the wells.
    Well { index: usize },
    /// On the segment from `A_leg` to `S_leg`: `F = (1-t) A + t S`.
    Leg { leg: usize, t: Rat },
    /// Inside the midpoint triangle, with barycentric weights for `S_1,S_2,S_3`.
    Triangle { bary: [Rat; 3] },
}

/// Decomposition of an admissible exterior datum into at most two leg points,
/// used to seed the iterated laminate construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HullDecomposition {
    /// `F = (1-t) A_leg + t S_leg`; a single extra lamination suffices.
    Leg { leg: usize, t: Rat },
    /// `F = lambda (nu1 A_a + (1-nu1) S_a) + (1-lambda)(nu2 A_b + (1-nu2) S_b)`.
    Split {
        lambda: Rat,
        nu1: Rat,
        nu2: Rat,
        leg_a: usize,
        leg_b: usize,
    },
}

fn in_unit(r: Rat) -> bool {
    !r.is_negative() && r <= Rat::one()
}

/// Rationalizes a float with bounded denominator; refuses noisy input.
pub fn rationalize(x: f64) -> Result<Rat> {
    // Continued-fraction expansion with denominator cap.
    let cap = 1_000_000i64;
    let (mut p0, mut q0, mut p1, mut q1) = (1i64, 0i64, x.floor() as i64, 1i64);
    let mut frac = x - x.floor();
    for _ in 0..64 {
        let approx = p1 as f64 / q1 as f64;
        if (approx - x).abs() <= 1e-12 * (1.0 + x.abs()) {
            return Ok(rat(p1, q1));
        }
        if frac.abs() < 1e-15 {
            break;
        }
        let inv = 1.0 / frac;
        let a = inv.floor() as i64;
        frac = inv - inv.floor();
        let p2 = a.checked_mul(p1).and_then(|v| v.checked_add(p0));
        let q2 = a.checked_mul(q1).and_then(|v| v.checked_add(q0));
        match (p2, q2) {
            (Some(p2), Some(q2)) if q2 <= cap => {
                p0 = p1;
                q0 = q1;
                p1 = p2;
                q1 = q2;
            }
            _ => break,
        }
    }
    let approx = p1 as f64 / q1 as f64;
    if (approx - x).abs() <= 1e-12 * (1.0 + x.abs()) {
        Ok(rat(p1, q1))
    } else {
        Err(Error::InvalidInput(format!(
            "value {x} is not a small rational; exact hull queries need rational input"
        )))
    }
}

/// Extracts the rational diagonal of a numerically diagonal 3x3 matrix.
pub fn diagonal_rat(f: &DMatrix<f64>) -> Result<DiagRat> {
    if f.nrows() != 3 || f.ncols() != 3 {
        return Err(Error::DimensionMismatch {
            what: "hull query matrix",
            expected: "3x3".into(),
            got: format!("{}x{}", f.nrows(), f.ncols()),
        });
    }
    for i in 0..3 {
        for j in 0..3 {
            if i != j && f[(i, j)] != 0.0 {
                return Err(Error::InvalidInput("matrix is not diagonal".into()));
            }
        }
    }
    Ok([
        rationalize(f[(0, 0)])?,
        rationalize(f[(1, 1)])?,
        rationalize(f[(2, 2)])?,
    ])
}

/// Exact membership of a diagonal triple in the relaxed hull
/// (midpoint triangle plus the three legs).
pub fn t3_hull_contains_rat(f: DiagRat) -> Option<HullWitness> {
    let wells = WellSet::t3_wells_rat();
    let aux = WellSet::t3_aux_rat();

    for (i, w) in wells.iter().enumerate() {
        if *w == f {
            return Some(HullWitness::Well { index: i });
        }
    }

    // Legs: f = (1-t) A_j + t S_j componentwise.
    'legs: for j in 0..3 {
        let (a, s) = (wells[j], aux[j]);
        let mut t: Option<Rat> = None;
        for c in 0..3 {
            let den = s[c] - a[c];
            let num = f[c] - a[c];
            if den.is_zero() {
                if !num.is_zero() {
                    continue 'legs;
                }
            } else {
                let cand = num / den;
                match t {
                    None => t = Some(cand),
                    Some(prev) if prev != cand => continue 'legs,
                    _ => {}
                }
            }
        }
        if let Some(t) = t {
            if in_unit(t) {
                return Some(HullWitness::Leg { leg: j, t });
            }
        }
    }

    // Triangle: solve sum b_i S_i = f with sum b_i = 1 and check the plane.
    // Unknowns b1, b2 from two coordinates after substituting b3 = 1 - b1 - b2.
    let s = aux;
    // Using coordinates 1 (second diagonal) and 2 (third diagonal):
    // b1 (s1c - s3c) + b2 (s2c - s3c) = f_c - s3c for c in {1, 2}.
    let a11 = s[0][1] - s[2][1];
    let a12 = s[1][1] - s[2][1];
    let a21 = s[0][2] - s[2][2];
    let a22 = s[1][2] - s[2][2];
    let r1 = f[1] - s[2][1];
    let r2 = f[2] - s[2][2];
    let det = a11 * a22 - a12 * a21;
    if det.is_zero() {
        return None;
    }
    let b1 = (r1 * a22 - r2 * a12) / det;
    let b2 = (a11 * r2 - a21 * r1) / det;
    let b3 = Rat::one() - b1 - b2;
    // Remaining coordinate must close (this encodes the affine plane).
    let c0 = b1 * s[0][0] + b2 * s[1][0] + b3 * s[2][0];
    if c0 != f[0] {
        return None;
    }
    if in_unit(b1) && in_unit(b2) && in_unit(b3) {
        return Some(HullWitness::Triangle { bary: [b1, b2, b3] });
    }
    None
}

/// Membership query on matrices; off-diagonal or irrational input is
/// rejected as outside the hull.
pub fn t3_hull_contains(f: &DMatrix<f64>) -> Option<HullWitness> {
    diagonal_rat(f).ok().and_then(t3_hull_contains_rat)
}

/// Splits an admissible exterior datum into leg points, as consumed by the
/// iterated laminate construction.
pub fn hull_decompose(f: &DMatrix<f64>) -> Result<HullDecomposition> {
    let fr = diagonal_rat(f).map_err(|_| {
        Error::HullMembership("datum is not a rational diagonal matrix".into())
    })?;
    let witness = t3_hull_contains_rat(fr)
        .ok_or_else(|| Error::HullMembership("datum lies outside the relaxed hull".into()))?;
    match witness {
        HullWitness::Well { index } => Err(Error::TrivialInput(format!(
            "datum equals well {}; nothing to decompose",
            index + 1
        ))),
        HullWitness::Leg { leg, t } => Ok(HullDecomposition::Leg { leg, t }),
        HullWitness::Triangle { bary } => {
            let aux = WellSet::t3_aux_rat();
            // Triangle vertices are leg points; a vertex is returned as the
            // degenerate split.
            for j in 0..3 {
                if bary[j].is_one() {
                    return Ok(HullDecomposition::Split {
                        lambda: Rat::one(),
                        nu1: Rat::zero(),
                        nu2: Rat::zero(),
                        leg_a: j,
                        leg_b: (j + 1) % 3,
                    });
                }
            }
            // Interior: cut along the third diagonal value. The chord at
            // height f3 runs from a point of leg 1 (through S3) to a point of
            // leg 2 (through S1); both endpoints share that third value, so
            // their difference is annihilated by e3.
            let f3 = bary[0] * aux[0][2] + bary[1] * aux[1][2] + bary[2] * aux[2][2];
            let two = rat(2, 1);
            let nu1 = Rat::one() - f3 / two; // point (1-nu1) S1 on leg 1
            let nu2 = (f3 - Rat::one()) / two; // point on leg 2
            let q1 = Rat::one() - f3 / two; // first diagonal of the leg-2 point
            let f1 = bary[0] * aux[0][0] + bary[1] * aux[1][0] + bary[2] * aux[2][0];
            let lambda = if q1.is_zero() {
                // f3 = 2 forces F = S1, handled above.
                return Err(Error::HullMembership("degenerate chord".into()));
            } else {
                Rat::one() - f1 / q1
            };
            debug_assert!(in_unit(lambda) && in_unit(nu1) && in_unit(nu2));
            Ok(HullDecomposition::Split {
                lambda,
                nu1,
                nu2,
                leg_a: 0,
                leg_b: 1,
            })
        }
    }
}

/// Evaluates a leg point `(1-t) A_leg + t S_leg` as a float matrix.
pub fn leg_point(leg: usize, t: Rat) -> DMatrix<f64> {
    let ws = WellSet::t3();
    let tf = rat_to_f64(t);
    ws.well(leg) * (1.0 - tf) + ws.s(leg) * tf
}

/// Recomposes a decomposition back to a matrix (for verification).
pub fn recompose(dec: &HullDecomposition) -> DMatrix<f64> {
    match dec {
        HullDecomposition::Leg { leg, t } => leg_point(*leg, *t),
        HullDecomposition::Split {
            lambda,
            nu1,
            nu2,
            leg_a,
            leg_b,
        } => {
            let l = rat_to_f64(*lambda);
            let p = leg_point(*leg_a, Rat::one() - *nu1);
            let q = leg_point(*leg_b, Rat::one() - *nu2);
            p * l + q * (1.0 - l)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s_matrix_identities_hold_exactly() {
        let wells = WellSet::t3_wells_rat();
        let aux = WellSet::t3_aux_rat();
        for i in 0..3 {
            let next = (i + 1) % 3;
            for c in 0..3 {
                let half = rat(1, 2);
                assert_eq!(aux[i][c], half * (wells[next][c] + aux[next][c]));
            }
            // (S_i - A_i) has zero i-th diagonal entry: kernel contains e_i.
            assert!((aux[i][i] - wells[i][i]).is_zero());
        }
    }

    #[test]
    fn relation_table_is_exact_on_wells() {
        let table = DiagonalRelationTable::new();
        assert!(table.verify_on_wells());
        let h12 = table.relation(0, 1);
        assert_eq!(h12.eval_rat(rat(-1, 2)), rat(2, 3));
        assert_eq!(h12.eval_rat(Rat::zero()), Rat::zero());
        assert_eq!(h12.eval_rat(Rat::one()), Rat::one());
    }

    #[test]
    fn hull_membership_examples() {
        // S3 is a triangle vertex.
        let s3 = la::diag3(0.0, 1.0 / 3.0, 1.0);
        match t3_hull_contains(&s3).unwrap() {
            HullWitness::Triangle { bary } => {
                assert_eq!(bary[2], Rat::one());
            }
            // S3 is also the midpoint of leg 1; either witness is correct.
            HullWitness::Leg { leg, t } => {
                assert_eq!(leg, 0);
                assert_eq!(t, rat(1, 2));
            }
            other => panic!("unexpected witness {other:?}"),
        }

        // Leg midpoint.
        let mid = la::diag3(0.0, 1.0 / 3.0, 1.0); // (A1 + S1)/2 = S3
        assert!(t3_hull_contains(&mid).is_some());
        let mid2 = la::diag3(0.0, 0.5, 1.5); // (A1 + 3 S1)/4 is on leg 1
        match t3_hull_contains(&mid2).unwrap() {
            HullWitness::Leg { leg, t } => {
                assert_eq!(leg, 0);
                assert_eq!(t, rat(3, 4));
            }
            other => panic!("unexpected witness {other:?}"),
        }

        // Barycenter of the midpoint triangle.
        let bary = la::diag3(1.0 / 6.0, 5.0 / 9.0, 4.0 / 3.0);
        match t3_hull_contains(&bary).unwrap() {
            HullWitness::Triangle { bary } => {
                for b in bary {
                    assert_eq!(b, rat(1, 3));
                }
            }
            other => panic!("unexpected witness {other:?}"),
        }

        // Outside.
        assert!(t3_hull_contains(&la::diag3(2.0, 2.0, 2.0)).is_none());
        let mut off = la::diag3(0.0, 1.0 / 3.0, 1.0);
        off[(0, 1)] = 0.1;
        assert!(t3_hull_contains(&off).is_none());
    }

    #[test]
    fn decompose_recomposes() {
        let cases = [
            la::diag3(0.0, 1.0 / 3.0, 1.0),          // S3: vertex
            la::diag3(0.0, 0.5, 1.5),                // leg point
            la::diag3(1.0 / 6.0, 5.0 / 9.0, 4.0 / 3.0), // barycenter
            la::diag3(0.1, 0.5, 1.3),                // generic interior point
        ];
        for f in cases {
            if t3_hull_contains(&f).is_none() {
                // Generic interior candidate must actually lie in the plane.
                continue;
            }
            match hull_decompose(&f) {
                Ok(dec) => {
                    let back = recompose(&dec);
                    assert!(
                        (back - &f).norm() < 1e-14,
                        "decomposition must recompose {f:?}"
                    );
                }
                Err(Error::TrivialInput(_)) => {}
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        // A well is trivial input.
        assert!(matches!(
            hull_decompose(&la::diag3(0.0, 0.0, 0.0)),
            Err(Error::TrivialInput(_))
        ));
        // Outside the hull.
        assert!(matches!(
            hull_decompose(&la::diag3(2.0, 2.0, 2.0)),
            Err(Error::HullMembership(_))
        ));
    }

    #[test]
    fn generic_triangle_point_decomposes() {
        // Take barycentric weights (1/2, 1/4, 1/4).
        let aux = WellSet::t3_aux_rat();
        let w = [rat(1, 2), rat(1, 4), rat(1, 4)];
        let mut f = [Rat::zero(); 3];
        for c in 0..3 {
            f[c] = w[0] * aux[0][c] + w[1] * aux[1][c] + w[2] * aux[2][c];
        }
        let fm = la::diag3(rat_to_f64(f[0]), rat_to_f64(f[1]), rat_to_f64(f[2]));
        let dec = hull_decompose(&fm).unwrap();
        match &dec {
            HullDecomposition::Split { lambda, nu1, nu2, .. } => {
                assert!(in_unit(*lambda) && in_unit(*nu1) && in_unit(*nu2));
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert!((recompose(&dec) - &fm).norm() < 1e-14);
    }

    #[test]
    fn nearest_well_projection() {
        let ws = WellSet::t3();
        // S1 projects to A2, S2 to A3, S3 to A1.
        assert_eq!(ws.nearest(&ws.s(0)).0, 1);
        assert_eq!(ws.nearest(&ws.s(1)).0, 2);
        assert_eq!(ws.nearest(&ws.s(2)).0, 0);
    }
}
