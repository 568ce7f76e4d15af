//! Simple laminates between two compatible states.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{AffineValue, HalfSpace, Region, RegionComplex};
use crate::la;
use crate::operator::{Operator, DEFAULT_WAVE_CONE_TOL};
use crate::wells::WellSet;

/// Alternating slabs of `a` and `b` with the given interface normal,
/// fraction of `a`, and `periods` repetitions on the unit box.
///
/// The normal must annihilate the difference (it certifies the lamination
/// direction); incompatible pairs are rejected with the wave-cone residual.
pub fn simple_laminate(
    op: &Operator,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    normal: &DVector<f64>,
    fraction: f64,
    periods: usize,
) -> Result<RegionComplex> {
    let dim = op.space_dim();
    if periods == 0 {
        return Err(Error::ParameterDomain("laminate needs at least one period".into()));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::ParameterDomain(format!(
            "volume fraction {fraction} outside [0, 1]"
        )));
    }
    let wells = WellSet::pair(a.clone(), b.clone(), fraction);
    let diff = la::flatten(&(b - a));

    if diff.norm() == 0.0 {
        // Degenerate pair: a single region, no interfaces.
        let region = Region {
            halfspaces: Vec::new(),
            value: AffineValue::constant(a.clone(), dim),
            chi: 0,
        };
        return RegionComplex::assemble(dim, vec![0.0; dim], vec![1.0; dim], wells, vec![region]);
    }

    let cert = op.wave_cone_contains(&diff, DEFAULT_WAVE_CONE_TOL)?;
    if !cert.member {
        return Err(Error::IncompatibleStates { residual: cert.residual });
    }
    // The slab normal itself must certify the direction.
    let scale = diff.norm() * normal.norm();
    let resid = op.symbol_apply(normal, &diff)?.norm();
    if resid > 1e-10 * scale {
        return Err(Error::IncompatibleStates { residual: resid });
    }

    let n = normal / normal.norm();
    let period = 1.0 / periods as f64;
    let mut regions = Vec::with_capacity(2 * periods);
    for k in 0..periods {
        let base = k as f64 * period;
        let split = base + fraction * period;
        let top = base + period;
        // a-portion: base <= x.n <= split
        regions.push(Region {
            halfspaces: vec![
                HalfSpace::new(n.iter().cloned().collect(), split),
                HalfSpace::new(n.iter().map(|v| -v).collect(), -base),
            ],
            value: AffineValue::constant(a.clone(), dim),
            chi: 0,
        });
        regions.push(Region {
            halfspaces: vec![
                HalfSpace::new(n.iter().cloned().collect(), top),
                HalfSpace::new(n.iter().map(|v| -v).collect(), -split),
            ],
            value: AffineValue::constant(b.clone(), dim),
            chi: 1,
        });
    }
    RegionComplex::assemble(dim, vec![0.0; dim], vec![1.0; dim], wells, regions)
}
