//! Periodic grids, matrix-valued fields, spectral transforms and cone
//! multipliers.
//!
//! All fields live on the unit torus `[0,1)^d` sampled at cell centers.  The
//! discrete transform uses Fourier-series normalization: the coefficient at
//! frequency zero is the mean, and the squared `L^2([0,1]^d)` norm (the cell
//! average of `|f|^2`) equals the sum of squared coefficient moduli.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wells::WellSet;

/// A cubic periodic grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    cells_per_axis: usize,
}

impl Grid {
    pub fn new(dim: usize, cells_per_axis: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidInput(format!("unsupported grid dimension {dim}")));
        }
        if cells_per_axis < 2 || cells_per_axis % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "cells per axis must be even and at least 2, got {cells_per_axis}"
            )));
        }
        Ok(Self { dim, cells_per_axis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_axis.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        1.0 / self.cell_count() as f64
    }

    /// Stride of an axis in the flat cell index (last axis fastest).
    pub fn stride(&self, axis: usize) -> usize {
        self.cells_per_axis.pow((self.dim - 1 - axis) as u32)
    }

    pub fn coord(&self, cell: usize, axis: usize) -> usize {
        (cell / self.stride(axis)) % self.cells_per_axis
    }

    /// Center of a cell.
    pub fn center(&self, cell: usize) -> Vec<f64> {
        (0..self.dim)
            .map(|a| (self.coord(cell, a) as f64 + 0.5) / self.cells_per_axis as f64)
            .collect()
    }

    /// Signed integer frequency for an FFT bin.
    pub fn frequency(&self, bin: usize) -> i64 {
        let n = self.cells_per_axis as i64;
        let b = bin as i64;
        if b <= n / 2 - 1 {
            b
        } else {
            b - n
        }
    }

    /// Signed frequency vector of a flat spectral index.
    pub fn freq_vector(&self, idx: usize) -> Vec<i64> {
        (0..self.dim).map(|a| self.frequency(self.coord(idx, a))).collect()
    }
}

/// Scalar field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.cell_count() {
            return Err(Error::GridMismatch(format!(
                "scalar payload has {} cells, grid has {}",
                data.len(),
                grid.cell_count()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("field has non-finite entries".into()));
        }
        Ok(Self { grid, data })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.cell_count()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let data = (0..grid.cell_count()).map(|c| f(&grid.center(c))).collect();
        Self { grid, data }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Squared `L^2([0,1]^d)` norm (cell average of the squared values).
    pub fn norm_l2_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64
    }

    /// Anisotropic discrete total variation: sum of absolute jumps over
    /// interior and periodic faces, weighted by face area.
    pub fn total_variation(&self) -> f64 {
        let g = &self.grid;
        let n = g.cells_per_axis();
        let face_area = 1.0 / (n as f64).powi(g.dim() as i32 - 1);
        let mut tv = 0.0;
        for cell in 0..g.cell_count() {
            for axis in 0..g.dim() {
                let c = g.coord(cell, axis);
                let next = if c + 1 == n {
                    cell - c * g.stride(axis)
                } else {
                    cell + g.stride(axis)
                };
                tv += (self.data[next] - self.data[cell]).abs() * face_area;
            }
        }
        tv
    }
}

/// Complex spectrum of a scalar field.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub grid: Grid,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    /// Sum of squared moduli; equals the squared L2 norm of the field.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

fn fft_axis(grid: &Grid, data: &mut [Complex64], axis: usize, inverse: bool) {
    let n = grid.cells_per_axis();
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let stride = grid.stride(axis);
    let cells = grid.cell_count();
    let lines = cells / n;
    let mut scratch = vec![Complex64::default(); n];
    for line in 0..lines {
        // Base index of this line: reinsert a zero coordinate on `axis`.
        let outer = line / stride;
        let inner = line % stride;
        let base = outer * stride * n + inner;
        for i in 0..n {
            scratch[i] = data[base + i * stride];
        }
        fft.process(&mut scratch);
        for i in 0..n {
            data[base + i * stride] = scratch[i];
        }
    }
}

/// Forward transform with Fourier-series normalization.
pub fn dft(field: &ScalarField) -> Spectrum {
    let grid = field.grid;
    let mut data: Vec<Complex64> = field.data.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    for axis in 0..grid.dim() {
        fft_axis(&grid, &mut data, axis, false);
    }
    let scale = 1.0 / grid.cell_count() as f64;
    for c in &mut data {
        *c *= scale;
    }
    Spectrum { grid, data }
}

/// Inverse transform; drops the imaginary residue of real-origin spectra.
pub fn idft(spec: &Spectrum) -> ScalarField {
    let grid = spec.grid;
    let mut data = spec.data.clone();
    for axis in 0..grid.dim() {
        fft_axis(&grid, &mut data, axis, true);
    }
    ScalarField {
        grid,
        data: data.into_iter().map(|c| c.re).collect(),
    }
}

/// A frequency cone around the plane orthogonal to one axis:
/// `|k_axis| <= aperture * |k|` up to radius `|k| <= radius`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConeSpec {
    /// Zero-based axis index.
    pub axis: usize,
    /// Relative aperture, in `(0, 1]`.
    pub aperture: f64,
    /// Frequency radius.
    pub radius: f64,
}

impl ConeSpec {
    pub fn new(axis: usize, aperture: f64, radius: f64) -> Result<Self> {
        if aperture <= 0.0 || aperture > 1.0 {
            return Err(Error::InvalidInput(format!(
                "cone aperture must be in (0, 1], got {aperture}"
            )));
        }
        if radius <= 0.0 {
            return Err(Error::InvalidInput("cone radius must be positive".into()));
        }
        Ok(Self { axis, aperture, radius })
    }

    /// Sharp indicator of the cone at a signed frequency.
    pub fn contains(&self, k: &[i64]) -> bool {
        let norm = (k.iter().map(|v| (*v * *v) as f64).sum::<f64>()).sqrt();
        let kj = k[self.axis].unsigned_abs() as f64;
        kj <= self.aperture * norm && norm <= self.radius
    }

    /// Smooth multiplier: identically one on the cone, supported in the
    /// doubled cone, quintic smoothstep ramps in radius and angle.
    pub fn smooth_weight(&self, k: &[i64]) -> f64 {
        let norm = (k.iter().map(|v| (*v * *v) as f64).sum::<f64>()).sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        let radial = ramp(norm / self.radius);
        let angular = ramp(k[self.axis].unsigned_abs() as f64 / (self.aperture * norm));
        radial * angular
    }
}

/// 1 for `t <= 1`, 0 for `t >= 2`, quintic smoothstep in between.
fn ramp(t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        let u = 2.0 - t;
        u * u * u * (6.0 * u * u - 15.0 * u + 10.0)
    }
}

/// Applies the cone cut-off to a spectrum.
pub fn cone_multiplier(spec: &Spectrum, cone: &ConeSpec, smooth: bool) -> Spectrum {
    let grid = spec.grid;
    let data = spec
        .data
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let k = grid.freq_vector(idx);
            if smooth {
                c * cone.smooth_weight(&k)
            } else if cone.contains(&k) {
                *c
            } else {
                Complex64::default()
            }
        })
        .collect();
    Spectrum { grid, data }
}

/// Matrix-valued field, one `rows x cols` value per cell.
///
/// Storage is row-major and component-fastest: the value entry `(i, j)` of
/// cell `c` sits at `c * rows * cols + i * cols + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub grid: Grid,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl TensorField {
    pub fn zeros(grid: Grid, rows: usize, cols: usize) -> Self {
        Self {
            grid,
            rows,
            cols,
            data: vec![0.0; grid.cell_count() * rows * cols],
        }
    }

    pub fn from_fn(grid: Grid, rows: usize, cols: usize, f: impl Fn(&[f64]) -> DMatrix<f64>) -> Self {
        let mut out = Self::zeros(grid, rows, cols);
        for cell in 0..grid.cell_count() {
            let m = f(&grid.center(cell));
            out.set_value(cell, &m);
        }
        out
    }

    pub fn value(&self, cell: usize) -> DMatrix<f64> {
        let nc = self.rows * self.cols;
        DMatrix::from_fn(self.rows, self.cols, |i, j| {
            self.data[cell * nc + i * self.cols + j]
        })
    }

    pub fn set_value(&mut self, cell: usize, m: &DMatrix<f64>) {
        let nc = self.rows * self.cols;
        for i in 0..self.rows {
            for j in 0..self.cols {
                self.data[cell * nc + i * self.cols + j] = m[(i, j)];
            }
        }
    }

    /// Scalar field of one component.
    pub fn component(&self, i: usize, j: usize) -> ScalarField {
        let nc = self.rows * self.cols;
        let data = (0..self.grid.cell_count())
            .map(|c| self.data[c * nc + i * self.cols + j])
            .collect();
        ScalarField { grid: self.grid, data }
    }

    pub fn mean(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.rows, self.cols);
        for c in 0..self.grid.cell_count() {
            acc += self.value(c);
        }
        acc / self.grid.cell_count() as f64
    }
}

/// Piecewise-constant well-valued field, stored through labels.
#[derive(Debug, Clone)]
pub struct PhaseField {
    pub grid: Grid,
    pub labels: Vec<u8>,
    pub wells: WellSet,
}

impl PhaseField {
    pub fn new(grid: Grid, labels: Vec<u8>, wells: WellSet) -> Result<Self> {
        if labels.len() != grid.cell_count() {
            return Err(Error::GridMismatch(format!(
                "label payload has {} cells, grid has {}",
                labels.len(),
                grid.cell_count()
            )));
        }
        if labels.iter().any(|l| *l as usize >= wells.len()) {
            return Err(Error::InvalidInput("label outside the well set".into()));
        }
        Ok(Self { grid, labels, wells })
    }

    /// The induced matrix field.
    pub fn as_tensor(&self) -> TensorField {
        let rows = self.wells.rows();
        let cols = self.wells.cols();
        let mut out = TensorField::zeros(self.grid, rows, cols);
        let mats: Vec<DMatrix<f64>> = (0..self.wells.len()).map(|i| self.wells.well(i)).collect();
        for cell in 0..self.grid.cell_count() {
            out.set_value(cell, &mats[self.labels[cell] as usize]);
        }
        out
    }

    /// Scalar field of one matrix component of the induced field.
    pub fn component(&self, i: usize, j: usize) -> ScalarField {
        let vals: Vec<f64> = (0..self.wells.len())
            .map(|w| self.wells.well(w)[(i, j)])
            .collect();
        ScalarField {
            grid: self.grid,
            data: self.labels.iter().map(|l| vals[*l as usize]).collect(),
        }
    }

    /// Diagonal trace field `f_i`.
    pub fn diagonal(&self, i: usize) -> ScalarField {
        self.component(i, i)
    }

    /// Volume fraction of each well.
    pub fn fractions(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.wells.len()];
        for l in &self.labels {
            counts[*l as usize] += 1;
        }
        counts
            .into_iter()
            .map(|c| c as f64 / self.grid.cell_count() as f64)
            .collect()
    }
}

// --- field files --------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    d: usize,
    #[serde(rename = "N_g")]
    n_g: usize,
    value_shape: Vec<usize>,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    wells: Option<WellSet>,
}

/// Either payload kind of a field file.
#[derive(Debug, Clone)]
pub enum FieldData {
    Tensor(TensorField),
    Phase(PhaseField),
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".json");
    os.into()
}

/// Writes `<path>` (little-endian f64 payload) and `<path>.json` (sidecar).
pub fn save_field(path: &Path, field: &FieldData) -> Result<()> {
    let (sidecar, payload): (Sidecar, Vec<f64>) = match field {
        FieldData::Tensor(t) => (
            Sidecar {
                d: t.grid.dim(),
                n_g: t.grid.cells_per_axis(),
                value_shape: vec![t.rows, t.cols],
                kind: "tensor".into(),
                wells: None,
            },
            t.data.clone(),
        ),
        FieldData::Phase(p) => (
            Sidecar {
                d: p.grid.dim(),
                n_g: p.grid.cells_per_axis(),
                value_shape: vec![p.wells.rows(), p.wells.cols()],
                kind: "phase".into(),
                wells: Some(p.wells.clone()),
            },
            p.labels.iter().map(|l| *l as f64).collect(),
        ),
    };
    let mut file = std::fs::File::create(path)?;
    let mut bytes = Vec::with_capacity(payload.len() * 8);
    for v in &payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&bytes)?;
    let json = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Reads a field written by [`save_field`], bit exactly.
pub fn load_field(path: &Path) -> Result<FieldData> {
    let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let grid = Grid::new(sidecar.d, sidecar.n_g)?;
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidInput("payload is not a multiple of 8 bytes".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    match sidecar.kind.as_str() {
        "tensor" => {
            let (rows, cols) = (sidecar.value_shape[0], sidecar.value_shape[1]);
            if values.len() != grid.cell_count() * rows * cols {
                return Err(Error::GridMismatch("tensor payload size mismatch".into()));
            }
            Ok(FieldData::Tensor(TensorField {
                grid,
                rows,
                cols,
                data: values,
            }))
        }
        "phase" => {
            let wells = sidecar
                .wells
                .ok_or_else(|| Error::InvalidInput("phase sidecar lacks wells".into()))?;
            let labels = values.iter().map(|v| *v as u8).collect();
            Ok(FieldData::Phase(PhaseField::new(grid, labels, wells)?))
        }
        other => Err(Error::InvalidInput(format!("unknown field kind '{other}'"))),
    }
}
