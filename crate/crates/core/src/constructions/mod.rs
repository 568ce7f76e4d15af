//! Exact geometric generators for the upper-bound constructions.
//!
//! Every builder emits an exact [`RegionComplex`] (half-space geometry,
//! affine values) plus analytic energy accounting.  Grids only enter through
//! rasterization, so the same construction can be scored twice: exactly from
//! the complex and discretely from the rasterized fields.

pub mod branching;
pub mod laminate;
pub mod t3;

pub use branching::{
    branching_unit_cell, build_two_well_branching, BranchingBuild, BranchingParams,
    BranchingVariant, UnitCell,
};
pub use laminate::simple_laminate;
pub use t3::{admissible_scales, build_t3_laminate, t3_schedule_for_eps, T3Build, T3Ledger, T3Params};

/// Cut-off and oscillation profiles shared by the builders.
pub mod profiles {
    /// Interior ramp: 0 below 1/8, affine `4t - 1/2` on `[1/8, 3/8]`, 1 above.
    pub fn ramp_interior(t: f64) -> f64 {
        if t < 0.125 {
            0.0
        } else if t <= 0.375 {
            4.0 * t - 0.5
        } else {
            1.0
        }
    }

    pub fn ramp_interior_slope(t: f64) -> f64 {
        if (0.125..=0.375).contains(&t) {
            4.0
        } else {
            0.0
        }
    }

    /// Boundary ramp: 1 on `[0, 1/2]`, affine `-4t + 3` on `(1/2, 3/4)`,
    /// 0 above.
    pub fn ramp_boundary(t: f64) -> f64 {
        if t <= 0.5 {
            1.0
        } else if t < 0.75 {
            -4.0 * t + 3.0
        } else {
            0.0
        }
    }

    pub fn ramp_boundary_slope(t: f64) -> f64 {
        if t > 0.5 && t < 0.75 {
            -4.0
        } else {
            0.0
        }
    }

    /// One-periodic tent with first-portion fraction `q`: slope `1 - q` on
    /// `[0, q)`, slope `-q` on `[q, 1)`.  For `q = 1/2` this is the sawtooth
    /// with slopes of one half.
    pub fn tent(t: f64, q: f64) -> f64 {
        let s = t.rem_euclid(1.0);
        if s < q {
            (1.0 - q) * s
        } else {
            q * (1.0 - s)
        }
    }

    pub fn tent_slope(t: f64, q: f64) -> f64 {
        let s = t.rem_euclid(1.0);
        if s < q {
            1.0 - q
        } else {
            -q
        }
    }

}
