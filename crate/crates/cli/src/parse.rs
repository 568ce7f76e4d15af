//! Matrix and number literals for the command line.
//!
//! Accepted forms: `diag(a,b,c)`, `[[a,b],[c,d]]`, the named matrices
//! `A1..A3`, `S1..S3`, `Id`/`Id2`, and `0`.  Scalars may be decimal or
//! rational (`2/3`).

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use microlam_core::wells::WellSet;

/// Parses a scalar, allowing `p/q` rationals.
pub fn scalar(s: &str) -> Result<f64> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num.trim().parse().context("bad rational numerator")?;
        let d: f64 = den.trim().parse().context("bad rational denominator")?;
        if d == 0.0 {
            bail!("zero denominator in '{s}'");
        }
        return Ok(n / d);
    }
    s.parse().with_context(|| format!("bad number '{s}'"))
}

/// Parses a matrix literal.
pub fn matrix(s: &str) -> Result<DMatrix<f64>> {
    let s = s.trim();
    let wells = WellSet::t3();
    match s {
        "A1" => return Ok(wells.well(0)),
        "A2" => return Ok(wells.well(1)),
        "A3" => return Ok(wells.well(2)),
        "S1" => return Ok(wells.s(0)),
        "S2" => return Ok(wells.s(1)),
        "S3" => return Ok(wells.s(2)),
        "Id" => return Ok(DMatrix::identity(3, 3)),
        "Id2" => return Ok(DMatrix::identity(2, 2)),
        "0" => return Ok(DMatrix::zeros(3, 3)),
        _ => {}
    }
    if let Some(inner) = s.strip_prefix("diag(").and_then(|r| r.strip_suffix(')')) {
        let vals: Vec<f64> = inner
            .split(',')
            .map(scalar)
            .collect::<Result<_>>()
            .context("bad diag(..) entries")?;
        let n = vals.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, v) in vals.into_iter().enumerate() {
            m[(i, i)] = v;
        }
        return Ok(m);
    }
    if s.starts_with("[[") && s.ends_with("]]") {
        let body = &s[1..s.len() - 1];
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for row in body.split("],") {
            let row = row.trim().trim_start_matches('[').trim_end_matches(']');
            if row.is_empty() {
                continue;
            }
            rows.push(row.split(',').map(scalar).collect::<Result<_>>()?);
        }
        let r = rows.len();
        let c = rows.first().map(Vec::len).unwrap_or(0);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            bail!("ragged matrix literal '{s}'");
        }
        return Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]));
    }
    bail!("cannot parse matrix '{s}' (try diag(a,b,c), [[..],[..]], or A1/S3/Id)")
}

/// Parses a vector literal `a,b,c` or `e1`/`e2`/`e3`.
pub fn vector(s: &str, dim: usize) -> Result<nalgebra::DVector<f64>> {
    let s = s.trim();
    for (name, axis) in [("e1", 0usize), ("e2", 1), ("e3", 2)] {
        if s == name {
            let mut v = nalgebra::DVector::zeros(dim);
            if axis >= dim {
                bail!("axis {name} outside dimension {dim}");
            }
            v[axis] = 1.0;
            return Ok(v);
        }
    }
    let vals: Vec<f64> = s.split(',').map(scalar).collect::<Result<_>>()?;
    if vals.len() != dim {
        bail!("vector '{s}' has {} entries, expected {dim}", vals.len());
    }
    Ok(nalgebra::DVector::from_vec(vals))
}

/// 17-significant-digit rendering used for all numeric output.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_literals() {
        let m = matrix("diag(0,2/3,2)").unwrap();
        assert_eq!(m[(1, 1)], 2.0 / 3.0);
        let m = matrix("[[1,2],[3,4]]").unwrap();
        assert_eq!(m[(1, 0)], 3.0);
        assert_eq!(matrix("S3").unwrap()[(1, 1)], 1.0 / 3.0);
        assert!(matrix("garbage").is_err());
        assert!(matrix("[[1,2],[3]]").is_err());
        let v = vector("e2", 3).unwrap();
        assert_eq!(v[1], 1.0);
    }
}
