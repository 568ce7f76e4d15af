//! Exact polyhedral region complexes.
//!
//! A region complex is a tiling of a box domain by convex polyhedra, each
//! carrying an affine matrix-valued deformation and a well label.  Assembly
//! derives everything the builders do not want to hand-maintain: face
//! polygons, volumes, shared interfaces with sample points, elastic
//! integrals (exact Gauss rules, the integrands are quadratic), and traces
//! on the domain boundary.  The jump-condition check on the assembled
//! interfaces is the discrete, testable form of the differential constraint
//! for piecewise-affine fields.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Grid, PhaseField, TensorField};
use crate::la;
use crate::operator::Operator;
use crate::wells::WellSet;

const PLANE_TOL: f64 = 1e-9;
const AREA_TOL: f64 = 1e-12;
const VOLUME_TOL: f64 = 1e-12;

/// Closed halfspace `normal . x <= offset`; the normal is unit length.
#[derive(Debug, Clone)]
pub struct HalfSpace {
    pub normal: DVector<f64>,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        let n = DVector::from_vec(normal);
        let len = n.norm();
        assert!(len > 0.0, "halfspace normal must be nonzero");
        Self {
            normal: n / len,
            offset: offset / len,
        }
    }

    /// Axis-aligned halfspace `x_axis <= hi` or `x_axis >= lo`.
    pub fn axis(axis: usize, dim: usize, upper: bool, bound: f64) -> Self {
        let mut n = vec![0.0; dim];
        n[axis] = if upper { 1.0 } else { -1.0 };
        Self::new(n, if upper { bound } else { -bound })
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        let mut dot = 0.0;
        for (a, v) in self.normal.iter().enumerate() {
            dot += v * x[a];
        }
        dot <= self.offset + tol
    }
}

/// Affine matrix-valued map `x -> base + sum_a grad[a] x_a`.
#[derive(Debug, Clone)]
pub struct AffineValue {
    pub base: DMatrix<f64>,
    pub grad: Vec<DMatrix<f64>>,
}

impl AffineValue {
    pub fn constant(m: DMatrix<f64>, dim: usize) -> Self {
        let (r, c) = (m.nrows(), m.ncols());
        Self {
            base: m,
            grad: vec![DMatrix::zeros(r, c); dim],
        }
    }

    pub fn is_constant(&self) -> bool {
        self.grad.iter().all(|g| g.iter().all(|v| *v == 0.0))
    }

    pub fn at(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.base.clone();
        for (a, g) in self.grad.iter().enumerate() {
            out += g * x[a];
        }
        out
    }
}

/// One convex region: halfspaces, deformation value, well label.
#[derive(Debug, Clone)]
pub struct Region {
    pub halfspaces: Vec<HalfSpace>,
    pub value: AffineValue,
    pub chi: usize,
}

/// A planar face shared by two regions.
#[derive(Debug, Clone)]
pub struct Interface {
    /// Index of the region the normal points away from.
    pub minus: usize,
    /// Index of the region the normal points into.
    pub plus: usize,
    pub normal: DVector<f64>,
    pub area: f64,
    /// Affinely spanning sample points (vertices and centroid).
    pub samples: Vec<Vec<f64>>,
    /// Whether the well label jumps across this face.
    pub chi_jump: bool,
}

/// A region face lying on the domain boundary.
#[derive(Debug, Clone)]
pub struct BoundaryFace {
    pub region: usize,
    pub axis: usize,
    pub upper: bool,
    pub area: f64,
    pub samples: Vec<Vec<f64>>,
}

/// Assembled exact tiling with derived interface and volume data.
#[derive(Debug, Clone)]
pub struct RegionComplex {
    pub dim: usize,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    pub wells: WellSet,
    pub regions: Vec<Region>,
    pub interfaces: Vec<Interface>,
    pub boundary_faces: Vec<BoundaryFace>,
    pub volumes: Vec<f64>,
    /// Exact `integral |u - well(chi)|^2` per region.
    pub elastic_integrals: Vec<f64>,
}

/// Report of the jump-condition check.
#[derive(Debug, Clone)]
pub struct InterfaceReport {
    /// Largest jump residual relative to the value scale.
    pub max_residual: f64,
    /// Largest interior constraint residual of affine regions.
    pub max_interior_residual: f64,
    /// Interfaces whose residual exceeded the tolerance.
    pub offenders: Vec<(usize, f64)>,
    pub tolerance: f64,
}

impl InterfaceReport {
    pub fn pass(&self) -> bool {
        self.offenders.is_empty() && self.max_interior_residual <= self.tolerance
    }
}

// --- low-level polytope helpers ------------------------------------------

/// In-plane convex clipping of a polygon by the halfplane `a . p <= b`.
fn clip_polygon_2d(poly: &[(f64, f64)], a: (f64, f64), b: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    let n = poly.len();
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let dp = a.0 * p.0 + a.1 * p.1 - b;
        let dq = a.0 * q.0 + a.1 * q.1 - b;
        if dp <= PLANE_TOL {
            out.push(p);
            if dq > PLANE_TOL && dp < -PLANE_TOL {
                let t = dp / (dp - dq);
                out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
            }
        } else if dq <= -PLANE_TOL {
            let t = dp / (dp - dq);
            out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    out
}

fn polygon_area_2d(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        acc += p.0 * q.1 - q.0 * p.1;
    }
    acc.abs() * 0.5
}

fn polygon_centroid_2d(poly: &[(f64, f64)]) -> (f64, f64) {
    // Fan triangulation; robust for convex polygons.
    let mut area = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 1..poly.len() - 1 {
        let (a, b, c) = (poly[0], poly[i], poly[i + 1]);
        let tri = ((b.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (b.1 - a.1)) * 0.5;
        area += tri;
        cx += tri * (a.0 + b.0 + c.0) / 3.0;
        cy += tri * (a.1 + b.1 + c.1) / 3.0;
    }
    if area.abs() < 1e-300 {
        let n = poly.len() as f64;
        return (
            poly.iter().map(|p| p.0).sum::<f64>() / n,
            poly.iter().map(|p| p.1).sum::<f64>() / n,
        );
    }
    (cx / area, cy / area)
}

/// Geometry of one face of a region: polygon vertices in ambient coordinates.
#[derive(Debug, Clone)]
struct Face {
    normal: DVector<f64>,
    vertices: Vec<Vec<f64>>,
    area: f64,
    centroid: Vec<f64>,
}

/// In-plane frame of a plane `normal . x = offset`.
fn plane_frame(normal: &DVector<f64>, offset: f64, dim: usize) -> (Vec<f64>, Vec<DVector<f64>>) {
    let origin: Vec<f64> = (0..dim).map(|a| normal[a] * offset).collect();
    if dim == 2 {
        let t = DVector::from_vec(vec![-normal[1], normal[0]]);
        (origin, vec![t])
    } else {
        // Pick the coordinate axis least aligned with the normal.
        let mut k = 0;
        for a in 1..3 {
            if normal[a].abs() < normal[k].abs() {
                k = a;
            }
        }
        let mut e = DVector::zeros(3);
        e[k] = 1.0;
        let mut t1 = DVector::from_vec(vec![
            normal[1] * e[2] - normal[2] * e[1],
            normal[2] * e[0] - normal[0] * e[2],
            normal[0] * e[1] - normal[1] * e[0],
        ]);
        t1 /= t1.norm();
        let t2 = DVector::from_vec(vec![
            normal[1] * t1[2] - normal[2] * t1[1],
            normal[2] * t1[0] - normal[0] * t1[2],
            normal[0] * t1[1] - normal[1] * t1[0],
        ]);
        (origin, vec![t1, t2])
    }
}

/// The face of the polytope on halfspace `idx`, clipped by all the others.
/// Optionally further clipped by a second region's halfspaces.
fn face_on(
    halfspaces: &[HalfSpace],
    idx: usize,
    extra: Option<&[HalfSpace]>,
    dim: usize,
) -> Option<Face> {
    let h = &halfspaces[idx];
    let (origin, frame) = plane_frame(&h.normal, h.offset, dim);
    const BIG: f64 = 64.0;

    let clips = halfspaces
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != idx)
        .map(|(_, g)| g)
        .chain(extra.into_iter().flatten());

    if dim == 2 {
        // The face is a segment parametrized by t along the single tangent.
        let t = &frame[0];
        let mut lo = -BIG;
        let mut hi = BIG;
        for g in clips {
            // g.normal . (origin + s t) <= g.offset
            let a = g.normal.dot(t);
            let b = g.offset - g.normal.dot(&DVector::from_vec(origin.clone()));
            if a.abs() <= 1e-14 {
                if b < -PLANE_TOL {
                    return None;
                }
            } else if a > 0.0 {
                hi = hi.min(b / a);
            } else {
                lo = lo.max(b / a);
            }
        }
        if hi - lo < AREA_TOL {
            return None;
        }
        let p = |s: f64| -> Vec<f64> { (0..2).map(|a| origin[a] + s * t[a]).collect() };
        let v0 = p(lo);
        let v1 = p(hi);
        let centroid = p(0.5 * (lo + hi));
        Some(Face {
            normal: h.normal.clone(),
            area: hi - lo,
            vertices: vec![v0, v1],
            centroid,
        })
    } else {
        let mut poly = vec![(-BIG, -BIG), (BIG, -BIG), (BIG, BIG), (-BIG, BIG)];
        let o = DVector::from_vec(origin.clone());
        for g in clips {
            let a = (g.normal.dot(&frame[0]), g.normal.dot(&frame[1]));
            let b = g.offset - g.normal.dot(&o);
            if a.0.abs() <= 1e-14 && a.1.abs() <= 1e-14 {
                if b < -PLANE_TOL {
                    return None;
                }
                continue;
            }
            poly = clip_polygon_2d(&poly, a, b);
            if poly.len() < 3 {
                return None;
            }
        }
        let area = polygon_area_2d(&poly);
        if area < AREA_TOL {
            return None;
        }
        let lift = |p: (f64, f64)| -> Vec<f64> {
            (0..3)
                .map(|a| origin[a] + p.0 * frame[0][a] + p.1 * frame[1][a])
                .collect()
        };
        let c2 = polygon_centroid_2d(&poly);
        Some(Face {
            normal: h.normal.clone(),
            area,
            vertices: poly.into_iter().map(lift).collect(),
            centroid: lift(c2),
        })
    }
}

/// Degree-2 exact integral of `x -> |value(x) - target|^2` over the simplex
/// spanned by `apex` and a face triangle/segment.
fn quadratic_simplex_integral(
    verts: &[&[f64]],
    value: &AffineValue,
    target: &DMatrix<f64>,
    dim: usize,
) -> f64 {
    let g = |x: &[f64]| -> f64 {
        let diff = value.at(x) - target;
        diff.norm_squared()
    };
    if dim == 2 {
        // Triangle midpoint rule, exact to degree 2.
        let (a, b, c) = (verts[0], verts[1], verts[2]);
        let area = ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs() * 0.5;
        if area == 0.0 {
            return 0.0;
        }
        let mid = |p: &[f64], q: &[f64]| -> Vec<f64> {
            vec![(p[0] + q[0]) * 0.5, (p[1] + q[1]) * 0.5]
        };
        area / 3.0 * (g(&mid(a, b)) + g(&mid(b, c)) + g(&mid(c, a)))
    } else {
        // Symmetric 4-point tetrahedron rule, exact to degree 2.
        let (a, b, c, d) = (verts[0], verts[1], verts[2], verts[3]);
        let det = {
            let m = DMatrix::from_fn(3, 3, |i, j| {
                let v = [b, c, d][j];
                v[i] - a[i]
            });
            m.determinant()
        };
        let vol = det.abs() / 6.0;
        if vol == 0.0 {
            return 0.0;
        }
        const ALPHA: f64 = 0.585_410_196_624_968_5;
        const BETA: f64 = 0.138_196_601_125_010_5;
        let mut acc = 0.0;
        for main in 0..4 {
            let mut p = [0.0; 3];
            for (vi, v) in [a, b, c, d].iter().enumerate() {
                let w = if vi == main { ALPHA } else { BETA };
                for k in 0..3 {
                    p[k] += w * v[k];
                }
            }
            acc += g(&p);
        }
        vol * acc / 4.0
    }
}

impl RegionComplex {
    /// Assembles a complex from raw regions over the box `[lo, hi]`.
    ///
    /// Empty regions are dropped; interfaces, volumes and elastic integrals
    /// are derived; a tiling check compares the volume sum with the box.
    pub fn assemble(
        dim: usize,
        domain_lo: Vec<f64>,
        domain_hi: Vec<f64>,
        wells: WellSet,
        mut raw: Vec<Region>,
    ) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidInput(format!("unsupported complex dimension {dim}")));
        }
        // Bound every region by the domain box so all faces are finite, then
        // merge halfspaces sharing a normal (duplicate planes would make the
        // same face extract twice).
        for r in &mut raw {
            for axis in 0..dim {
                r.halfspaces.push(HalfSpace::axis(axis, dim, true, domain_hi[axis]));
                r.halfspaces.push(HalfSpace::axis(axis, dim, false, domain_lo[axis]));
            }
            let mut merged: Vec<HalfSpace> = Vec::with_capacity(r.halfspaces.len());
            for h in r.halfspaces.drain(..) {
                if let Some(existing) = merged
                    .iter_mut()
                    .find(|g| g.normal.dot(&h.normal) > 1.0 - 1e-12)
                {
                    existing.offset = existing.offset.min(h.offset);
                } else {
                    merged.push(h);
                }
            }
            r.halfspaces = merged;
        }

        // Face extraction, volumes, integrals; drop degenerate regions.
        let mut regions = Vec::with_capacity(raw.len());
        let mut faces_per_region: Vec<Vec<Face>> = Vec::with_capacity(raw.len());
        let mut volumes = Vec::new();
        let mut elastic = Vec::new();
        let mut bboxes: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for region in raw.into_iter() {
            let mut faces = Vec::new();
            for i in 0..region.halfspaces.len() {
                if let Some(face) = face_on(&region.halfspaces, i, None, dim) {
                    faces.push(face);
                }
            }
            if faces.len() < dim + 1 {
                continue;
            }
            // Volume via the divergence theorem over the complete face set.
            let vol: f64 = faces
                .iter()
                .map(|f| {
                    let dot: f64 = (0..dim).map(|a| f.centroid[a] * f.normal[a]).sum();
                    dot * f.area
                })
                .sum::<f64>()
                / dim as f64;
            if vol < VOLUME_TOL {
                continue;
            }
            // Interior point for simplex fans: average of face centroids.
            let mut inner = vec![0.0; dim];
            for f in &faces {
                for a in 0..dim {
                    inner[a] += f.centroid[a];
                }
            }
            for v in &mut inner {
                *v /= faces.len() as f64;
            }
            let target = wells.well(region.chi);
            let mut integral = 0.0;
            if region.value.is_constant() {
                integral = (region.value.at(&inner) - &target).norm_squared() * vol;
            } else {
                for f in &faces {
                    if dim == 2 {
                        integral += quadratic_simplex_integral(
                            &[&inner, &f.vertices[0], &f.vertices[1]],
                            &region.value,
                            &target,
                            dim,
                        );
                    } else {
                        for i in 1..f.vertices.len() - 1 {
                            integral += quadratic_simplex_integral(
                                &[
                                    &inner,
                                    &f.vertices[0],
                                    &f.vertices[i],
                                    &f.vertices[i + 1],
                                ],
                                &region.value,
                                &target,
                                dim,
                            );
                        }
                    }
                }
            }
            let mut lo = vec![f64::INFINITY; dim];
            let mut hi = vec![f64::NEG_INFINITY; dim];
            for f in &faces {
                for v in &f.vertices {
                    for a in 0..dim {
                        lo[a] = lo[a].min(v[a]);
                        hi[a] = hi[a].max(v[a]);
                    }
                }
            }
            bboxes.push((lo, hi));
            faces_per_region.push(faces);
            volumes.push(vol);
            elastic.push(integral);
            regions.push(region);
        }

        // Tiling check.
        let domain_vol: f64 = (0..dim).map(|a| domain_hi[a] - domain_lo[a]).product();
        let total: f64 = volumes.iter().sum();
        if (total - domain_vol).abs() > 1e-7 * domain_vol.max(1.0) {
            return Err(Error::Tiling(format!(
                "regions cover volume {total:.12}, domain has {domain_vol:.12}"
            )));
        }

        // Bucket grid over the domain for neighbor candidate generation.
        let buckets_per_axis: usize = 16;
        let nb = buckets_per_axis.pow(dim as u32);
        let mut bucket_members: Vec<Vec<u32>> = vec![Vec::new(); nb];
        {
            let span: Vec<f64> = (0..dim).map(|a| domain_hi[a] - domain_lo[a]).collect();
            let to_bucket = |x: f64, a: usize| -> usize {
                let rel = ((x - domain_lo[a]) / span[a]).clamp(0.0, 1.0 - 1e-12);
                (rel * buckets_per_axis as f64) as usize
            };
            for (ri, bb) in bboxes.iter().enumerate() {
                let b_lo: Vec<usize> = (0..dim).map(|a| to_bucket(bb.0[a] - 1e-9, a)).collect();
                let b_hi: Vec<usize> = (0..dim).map(|a| to_bucket(bb.1[a] + 1e-9, a)).collect();
                let mut idx = b_lo.clone();
                'odo: loop {
                    let flat = idx
                        .iter()
                        .fold(0usize, |acc, &v| acc * buckets_per_axis + v);
                    bucket_members[flat].push(ri as u32);
                    for axis in (0..dim).rev() {
                        if idx[axis] < b_hi[axis] {
                            idx[axis] += 1;
                            for k in axis + 1..dim {
                                idx[k] = b_lo[k];
                            }
                            continue 'odo;
                        }
                    }
                    break;
                }
            }
        }
        let mut candidates: Vec<Vec<u32>> = vec![Vec::new(); regions.len()];
        for members in &bucket_members {
            for (pos, &i) in members.iter().enumerate() {
                for &j in &members[pos + 1..] {
                    candidates[i as usize].push(j);
                }
            }
        }
        for c in &mut candidates {
            c.sort_unstable();
            c.dedup();
        }

        // Shared interfaces: for each region face, clip against neighbors
        // whose bounding box touches and who own a matching opposite plane.
        let mut interfaces = Vec::new();
        let mut boundary_faces = Vec::new();
        for i in 0..regions.len() {
            for face in &faces_per_region[i] {
                // Domain boundary face?
                let mut on_boundary = None;
                for axis in 0..dim {
                    if face.normal[axis].abs() > 1.0 - 1e-12 {
                        let level = face.centroid[axis];
                        if (level - domain_lo[axis]).abs() <= PLANE_TOL && face.normal[axis] < 0.0 {
                            on_boundary = Some((axis, false));
                        }
                        if (level - domain_hi[axis]).abs() <= PLANE_TOL && face.normal[axis] > 0.0 {
                            on_boundary = Some((axis, true));
                        }
                    }
                }
                if let Some((axis, upper)) = on_boundary {
                    let mut samples = face.vertices.clone();
                    samples.push(face.centroid.clone());
                    boundary_faces.push(BoundaryFace {
                        region: i,
                        axis,
                        upper,
                        area: face.area,
                        samples,
                    });
                    continue;
                }
                // Each shared face is recorded once, from the lower index.
                for &jj in &candidates[i] {
                    let j = jj as usize;
                    if !bbox_touch(&bboxes[i], &bboxes[j], dim) {
                        continue;
                    }
                    // Opposite plane in region j?
                    let opposite = regions[j].halfspaces.iter().any(|g| {
                        let ndot: f64 = (0..dim).map(|a| g.normal[a] * face.normal[a]).sum();
                        ndot < -(1.0 - 1e-9)
                            && (g.offset + face_plane_offset(face)).abs() <= PLANE_TOL
                    });
                    if !opposite {
                        continue;
                    }
                    // Clip this face by the other region's halfspaces.
                    if let Some(shared) = face_with_extra(face, &regions[j].halfspaces, dim) {
                        let mut samples = shared.vertices.clone();
                        samples.push(shared.centroid.clone());
                        interfaces.push(Interface {
                            minus: i,
                            plus: j,
                            normal: face.normal.clone(),
                            area: shared.area,
                            samples,
                            chi_jump: regions[i].chi != regions[j].chi,
                        });
                    }
                }
            }
        }

        Ok(Self {
            dim,
            domain_lo,
            domain_hi,
            wells,
            regions,
            interfaces,
            boundary_faces,
            volumes,
            elastic_integrals: elastic,
        })
    }

    /// Exact elastic energy of the deformation/phase pair.
    pub fn elastic_energy(&self) -> f64 {
        self.elastic_integrals.iter().sum()
    }

    /// Exact interfacial energy: Frobenius jump of the phase value times
    /// area, summed over interior interfaces.
    pub fn surface_energy(&self) -> f64 {
        self.interfaces
            .iter()
            .filter(|f| f.chi_jump)
            .map(|f| {
                let a = self.wells.well(self.regions[f.minus].chi);
                let b = self.wells.well(self.regions[f.plus].chi);
                la::dist(&a, &b) * f.area
            })
            .sum()
    }

    /// Volume fraction of each well label.
    pub fn fractions(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.wells.len()];
        for (r, v) in self.regions.iter().zip(&self.volumes) {
            acc[r.chi] += v;
        }
        let domain: f64 = (0..self.dim)
            .map(|a| self.domain_hi[a] - self.domain_lo[a])
            .product();
        for a in &mut acc {
            *a /= domain;
        }
        acc
    }

    /// Jump-condition check: the symbol in the face normal applied to the
    /// deformation jump must vanish on every interface; affine regions must
    /// also satisfy the constraint in their interior.
    pub fn interface_check(&self, op: &Operator) -> Result<InterfaceReport> {
        if op.order() != 1 {
            return Err(Error::UnsupportedOrder {
                order: op.order(),
                reason: "piecewise jump conditions are a first-order notion",
            });
        }
        let scale = self
            .regions
            .iter()
            .map(|r| r.value.base.norm() + r.value.grad.iter().map(|g| g.norm()).sum::<f64>())
            .fold(1.0_f64, f64::max);
        let tolerance = 1e-12 * scale;
        let mut max_residual = 0.0_f64;
        let mut offenders = Vec::new();
        for (idx, face) in self.interfaces.iter().enumerate() {
            let vm = &self.regions[face.minus].value;
            let vp = &self.regions[face.plus].value;
            let mut worst = 0.0_f64;
            for s in &face.samples {
                let jump = vp.at(s) - vm.at(s);
                let r = op.symbol_apply(&face.normal, &la::flatten(&jump))?.norm();
                worst = worst.max(r);
            }
            max_residual = max_residual.max(worst);
            if worst > tolerance {
                offenders.push((idx, worst));
            }
        }
        // Interior constraint of affine regions: sum_a A^a grad_a u = 0.
        let mut max_interior = 0.0_f64;
        for region in &self.regions {
            if region.value.is_constant() {
                continue;
            }
            let mut resid = DVector::zeros(op.eq_dim());
            for axis in 0..self.dim {
                let mut e = DVector::zeros(self.dim);
                e[axis] = 1.0;
                resid += op.symbol_apply(&e, &la::flatten(&region.value.grad[axis]))?;
            }
            max_interior = max_interior.max(resid.norm());
        }
        Ok(InterfaceReport {
            max_residual,
            max_interior_residual: max_interior,
            offenders,
            tolerance,
        })
    }

    /// Largest deviation of the deformation trace from `datum` on the given
    /// domain faces.
    pub fn exterior_trace_residual(&self, faces: &[(usize, bool)], datum: &DMatrix<f64>) -> f64 {
        let mut worst = 0.0_f64;
        for bf in &self.boundary_faces {
            if !faces.iter().any(|(a, u)| *a == bf.axis && *u == bf.upper) {
                continue;
            }
            let value = &self.regions[bf.region].value;
            for s in &bf.samples {
                worst = worst.max((value.at(s) - datum).norm());
            }
        }
        worst
    }

    /// Largest jump residual against extending the field by `datum` beyond
    /// the given domain faces: the symbol in the face normal applied to
    /// `trace - datum` must vanish for the extension to stay admissible.
    pub fn exterior_compatibility_residual(
        &self,
        op: &Operator,
        faces: &[(usize, bool)],
        datum: &DMatrix<f64>,
    ) -> Result<f64> {
        let mut worst = 0.0_f64;
        for bf in &self.boundary_faces {
            if !faces.iter().any(|(a, u)| *a == bf.axis && *u == bf.upper) {
                continue;
            }
            let value = &self.regions[bf.region].value;
            let mut normal = DVector::zeros(self.dim);
            normal[bf.axis] = if bf.upper { 1.0 } else { -1.0 };
            for s in &bf.samples {
                let jump = value.at(s) - datum;
                worst = worst.max(op.symbol_apply(&normal, &la::flatten(&jump))?.norm());
            }
        }
        Ok(worst)
    }

    /// Cell-center rasterization onto a periodic grid.
    ///
    /// Ties at region boundaries resolve to the smallest region index.
    pub fn rasterize(&self, grid: Grid) -> Result<(PhaseField, TensorField)> {
        if grid.dim() != self.dim {
            return Err(Error::GridMismatch(format!(
                "complex dimension {} vs grid dimension {}",
                self.dim,
                grid.dim()
            )));
        }
        // Bucket index over the domain for point location.
        let buckets_per_axis = (grid.cells_per_axis() / 4).clamp(4, 32);
        let nb = buckets_per_axis.pow(self.dim as u32);
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); nb];
        let span: Vec<f64> = (0..self.dim)
            .map(|a| self.domain_hi[a] - self.domain_lo[a])
            .collect();
        let to_bucket = |x: f64, a: usize| -> usize {
            let rel = ((x - self.domain_lo[a]) / span[a]).clamp(0.0, 1.0 - 1e-12);
            (rel * buckets_per_axis as f64) as usize
        };
        for (ri, region) in self.regions.iter().enumerate() {
            // Region bbox from its halfspace-clipped extent: use face data via
            // a cheap interval scan of axis halfspaces, falling back to the
            // domain box.
            let mut lo = self.domain_lo.clone();
            let mut hi = self.domain_hi.clone();
            for h in &region.halfspaces {
                for a in 0..self.dim {
                    if h.normal[a] > 1.0 - 1e-12 {
                        hi[a] = hi[a].min(h.offset);
                    }
                    if h.normal[a] < -(1.0 - 1e-12) {
                        lo[a] = lo[a].max(-h.offset);
                    }
                }
            }
            let b_lo: Vec<usize> = (0..self.dim).map(|a| to_bucket(lo[a] - 1e-9, a)).collect();
            let b_hi: Vec<usize> = (0..self.dim).map(|a| to_bucket(hi[a] + 1e-9, a)).collect();
            let mut idx = b_lo.clone();
            'odo: loop {
                let flat = idx
                    .iter()
                    .fold(0usize, |acc, &v| acc * buckets_per_axis + v);
                buckets[flat].push(ri as u32);
                // advance odometer over the bucket box
                for axis in (0..self.dim).rev() {
                    if idx[axis] < b_hi[axis] {
                        idx[axis] += 1;
                        for k in axis + 1..self.dim {
                            idx[k] = b_lo[k];
                        }
                        continue 'odo;
                    }
                }
                break;
            }
        }
        for b in &mut buckets {
            b.sort_unstable();
            b.dedup();
        }

        let rows = self.wells.rows();
        let cols = self.wells.cols();
        let mut labels = vec![0u8; grid.cell_count()];
        let mut tensor = TensorField::zeros(grid, rows, cols);
        for cell in 0..grid.cell_count() {
            let x = grid.center(cell);
            let flat = (0..self.dim).fold(0usize, |acc, a| {
                acc * buckets_per_axis + to_bucket(x[a], a)
            });
            let mut hit = None;
            for &ri in &buckets[flat] {
                let region = &self.regions[ri as usize];
                if region.halfspaces.iter().all(|h| h.contains(&x, 1e-12)) {
                    hit = Some(ri as usize);
                    break;
                }
            }
            let ri = hit.ok_or_else(|| {
                Error::Tiling(format!("cell center {x:?} is not covered by any region"))
            })?;
            labels[cell] = self.regions[ri].chi as u8;
            tensor.set_value(cell, &self.regions[ri].value.at(&x));
        }
        let phase = PhaseField::new(grid, labels, self.wells.clone())?;
        Ok((phase, tensor))
    }
}

/// Offset of the face plane along its unit normal; the matching opposite
/// halfspace of a neighbor has normal `-n` and offset `-(n . x)`.
fn face_plane_offset(face: &Face) -> f64 {
    let mut dot = 0.0;
    for (a, v) in face.normal.iter().enumerate() {
        dot += v * face.centroid[a];
    }
    dot
}

fn bbox_touch(a: &(Vec<f64>, Vec<f64>), b: &(Vec<f64>, Vec<f64>), dim: usize) -> bool {
    (0..dim).all(|k| a.0[k] <= b.1[k] + 1e-9 && b.0[k] <= a.1[k] + 1e-9)
}

/// Re-clips an extracted face by a second region's halfspaces.
fn face_with_extra(face: &Face, extra: &[HalfSpace], dim: usize) -> Option<Face> {
    // Build a miniature halfspace list describing the face's own plane and
    // rerun extraction with the neighbor's constraints.
    let mut hs = Vec::with_capacity(extra.len() + 1);
    let mut offset = 0.0;
    for (a, v) in face.normal.iter().enumerate() {
        offset += v * face.centroid[a];
    }
    hs.push(HalfSpace {
        normal: face.normal.clone(),
        offset,
    });
    // Constrain to the original face polygon by its edges: simpler and robust,
    // clip the plane by both regions' halfspaces instead.
    hs.extend(extra.iter().cloned());
    face_on_with_window(&hs, 0, face, dim)
}

/// Clips halfspace 0's plane by the rest, then intersects with the window
/// polygon of an already-extracted face on the same plane.
fn face_on_with_window(halfspaces: &[HalfSpace], idx: usize, window: &Face, dim: usize) -> Option<Face> {
    let h = &halfspaces[idx];
    let (origin, frame) = plane_frame(&h.normal, h.offset, dim);
    let o = DVector::from_vec(origin.clone());
    if dim == 2 {
        let t = &frame[0];
        let mut lo = -f64::INFINITY;
        let mut hi = f64::INFINITY;
        // Window segment bounds in this parametrization.
        for v in &window.vertices {
            let s = (0..2).map(|a| (v[a] - origin[a]) * t[a]).sum::<f64>();
            if lo == f64::NEG_INFINITY {
                lo = s;
                hi = s;
            } else {
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
        for (i, g) in halfspaces.iter().enumerate() {
            if i == idx {
                continue;
            }
            let a = g.normal.dot(t);
            let b = g.offset - g.normal.dot(&o);
            if a.abs() <= 1e-14 {
                if b < -PLANE_TOL {
                    return None;
                }
            } else if a > 0.0 {
                hi = hi.min(b / a);
            } else {
                lo = lo.max(b / a);
            }
        }
        if hi - lo < AREA_TOL {
            return None;
        }
        let p = |s: f64| -> Vec<f64> { (0..2).map(|a| origin[a] + s * t[a]).collect() };
        Some(Face {
            normal: h.normal.clone(),
            area: hi - lo,
            vertices: vec![p(lo), p(hi)],
            centroid: p(0.5 * (lo + hi)),
        })
    } else {
        // Start from the window polygon expressed in this plane frame.
        let mut poly: Vec<(f64, f64)> = window
            .vertices
            .iter()
            .map(|v| {
                let rel: Vec<f64> = (0..3).map(|a| v[a] - origin[a]).collect();
                (
                    rel.iter().zip(frame[0].iter()).map(|(x, y)| x * y).sum(),
                    rel.iter().zip(frame[1].iter()).map(|(x, y)| x * y).sum(),
                )
            })
            .collect();
        for (i, g) in halfspaces.iter().enumerate() {
            if i == idx {
                continue;
            }
            let a = (g.normal.dot(&frame[0]), g.normal.dot(&frame[1]));
            let b = g.offset - g.normal.dot(&o);
            if a.0.abs() <= 1e-14 && a.1.abs() <= 1e-14 {
                if b < -PLANE_TOL {
                    return None;
                }
                continue;
            }
            poly = clip_polygon_2d(&poly, a, b);
            if poly.len() < 3 {
                return None;
            }
        }
        let area = polygon_area_2d(&poly);
        if area < AREA_TOL {
            return None;
        }
        let lift = |p: (f64, f64)| -> Vec<f64> {
            (0..3)
                .map(|a| origin[a] + p.0 * frame[0][a] + p.1 * frame[1][a])
                .collect()
        };
        let c2 = polygon_centroid_2d(&poly);
        Some(Face {
            normal: h.normal.clone(),
            area,
            vertices: poly.into_iter().map(lift).collect(),
            centroid: lift(c2),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_domain(dim: usize) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; dim], vec![1.0; dim])
    }

    fn box_region(dim: usize, lo: &[f64], hi: &[f64], value: DMatrix<f64>, chi: usize) -> Region {
        let mut hs = Vec::new();
        for a in 0..dim {
            hs.push(HalfSpace::axis(a, dim, true, hi[a]));
            hs.push(HalfSpace::axis(a, dim, false, lo[a]));
        }
        Region {
            halfspaces: hs,
            value: AffineValue::constant(value, dim),
            chi,
        }
    }

    #[test]
    fn two_half_cubes_assemble() {
        let wells = WellSet::t3();
        let (lo, hi) = unit_domain(3);
        let a = box_region(3, &[0., 0., 0.], &[0.5, 1., 1.], wells.well(0), 0);
        let b = box_region(3, &[0.5, 0., 0.], &[1., 1., 1.], wells.well(1), 1);
        let rc = RegionComplex::assemble(3, lo, hi, wells, vec![a, b]).unwrap();
        assert_eq!(rc.regions.len(), 2);
        assert!((rc.volumes[0] - 0.5).abs() < 1e-12);
        assert!((rc.volumes[1] - 0.5).abs() < 1e-12);
        assert_eq!(rc.interfaces.len(), 1);
        let f = &rc.interfaces[0];
        assert!((f.area - 1.0).abs() < 1e-12);
        assert!(f.chi_jump);
        // fractions
        let fr = rc.fractions();
        assert!((fr[0] - 0.5).abs() < 1e-12 && (fr[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn missing_region_fails_tiling() {
        let wells = WellSet::t3();
        let (lo, hi) = unit_domain(3);
        let a = box_region(3, &[0., 0., 0.], &[0.5, 1., 1.], wells.well(0), 0);
        let err = RegionComplex::assemble(3, lo, hi, wells, vec![a]);
        assert!(matches!(err, Err(Error::Tiling(_))));
    }

    #[test]
    fn rasterize_half_cubes() {
        let wells = WellSet::t3();
        let (lo, hi) = unit_domain(3);
        let a = box_region(3, &[0., 0., 0.], &[0.5, 1., 1.], wells.well(0), 0);
        let b = box_region(3, &[0.5, 0., 0.], &[1., 1., 1.], wells.well(1), 1);
        let rc = RegionComplex::assemble(3, lo, hi, wells, vec![a, b]).unwrap();
        let grid = Grid::new(3, 8).unwrap();
        let (phase, tensor) = rc.rasterize(grid).unwrap();
        let fr = phase.fractions();
        assert!((fr[0] - 0.5).abs() < 1e-12);
        // 4 slabs of each along x1
        for cell in 0..grid.cell_count() {
            let x1 = grid.coord(cell, 0);
            assert_eq!(phase.labels[cell], u8::from(x1 >= 4));
        }
        let v = tensor.value(0);
        assert_eq!(v, rc.wells.well(0));
    }

    #[test]
    fn laminate_period_quarter_is_exact_on_multiples_of_eight() {
        let wells = WellSet::t3();
        let (lo, hi) = unit_domain(2);
        let mut regions = Vec::new();
        for k in 0..4 {
            let base = k as f64 * 0.25;
            regions.push(box_region(
                2,
                &[base, 0.],
                &[base + 0.125, 1.],
                wells.well(0),
                0,
            ));
            regions.push(box_region(
                2,
                &[base + 0.125, 0.],
                &[base + 0.25, 1.],
                wells.well(1),
                1,
            ));
        }
        let rc = RegionComplex::assemble(2, lo, hi, wells, regions).unwrap();
        let grid = Grid::new(2, 8).unwrap();
        let (phase, _) = rc.rasterize(grid).unwrap();
        let fr = phase.fractions();
        assert_eq!(fr[0], 0.5);
        assert_eq!(fr[1], 0.5);
    }

    #[test]
    fn jump_check_flags_corrupted_values() {
        let wells = WellSet::t3();
        let op = Operator::divergence(3, 3);
        let (lo, hi) = unit_domain(3);
        // A1 | S1 laminate along x1 is compatible.
        let a = box_region(3, &[0., 0., 0.], &[0.5, 1., 1.], wells.well(0), 0);
        let s = box_region(3, &[0.5, 0., 0.], &[1., 1., 1.], wells.s(0), 1);
        let rc = RegionComplex::assemble(3, lo.clone(), hi.clone(), wells.clone(), vec![a, s])
            .unwrap();
        let report = rc.interface_check(&op).unwrap();
        assert!(report.pass(), "compatible laminate must pass: {report:?}");
        assert!(report.max_residual <= report.tolerance);

        // Corrupt: A1 | A2 has a rank-three jump.
        let a = box_region(3, &[0., 0., 0.], &[0.5, 1., 1.], wells.well(0), 0);
        let b = box_region(3, &[0.5, 0., 0.], &[1., 1., 1.], wells.well(1), 1);
        let rc = RegionComplex::assemble(3, lo, hi, wells, vec![a, b]).unwrap();
        let report = rc.interface_check(&op).unwrap();
        assert!(!report.pass());
        assert!(report.max_residual > 0.1);
    }

    #[test]
    fn affine_region_integrals_are_exact() {
        // Region value u(x) = diag(x1, 0, 0) against well 0 (zero):
        // integral over [0,1]^3 of x1^2 = 1/3.
        let wells = WellSet::t3();
        let (lo, hi) = unit_domain(3);
        let mut grad = vec![DMatrix::zeros(3, 3); 3];
        grad[0][(0, 0)] = 1.0;
        let region = Region {
            halfspaces: Vec::new(),
            value: AffineValue {
                base: DMatrix::zeros(3, 3),
                grad,
            },
            chi: 0,
        };
        let rc = RegionComplex::assemble(3, lo, hi, wells, vec![region]).unwrap();
        assert!((rc.elastic_energy() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tilted_interface_area() {
        // Split the unit square along the diagonal x2 = x1.
        let wells = WellSet::t3();
        let (lo, hi) = unit_domain(2);
        let mut lower = box_region(2, &[0., 0.], &[1., 1.], wells.well(0), 0);
        lower.halfspaces.push(HalfSpace::new(vec![-1.0, 1.0], 0.0)); // x2 <= x1
        let mut upper = box_region(2, &[0., 0.], &[1., 1.], wells.well(1), 1);
        upper.halfspaces.push(HalfSpace::new(vec![1.0, -1.0], 0.0)); // x1 <= x2
        let rc = RegionComplex::assemble(2, lo, hi, wells, vec![lower, upper]).unwrap();
        assert!((rc.volumes[0] - 0.5).abs() < 1e-12);
        assert_eq!(rc.interfaces.len(), 1);
        assert!((rc.interfaces[0].area - 2.0_f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn exterior_trace_check() {
        let wells = WellSet::t3();
        let (lo, hi) = unit_domain(2);
        let r = box_region(2, &[0., 0.], &[1., 1.], wells.s(2), 0);
        let rc = RegionComplex::assemble(2, lo, hi, wells.clone(), vec![r]).unwrap();
        let datum = wells.s(2);
        let resid = rc.exterior_trace_residual(&[(0, false), (0, true), (1, false), (1, true)], &datum);
        assert!(resid < 1e-12);
        let wrong = wells.well(2);
        let resid = rc.exterior_trace_residual(&[(0, false)], &wrong);
        assert!(resid > 0.1);
    }
}
