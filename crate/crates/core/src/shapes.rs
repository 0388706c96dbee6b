//! Reference sets with exact boundary data, and quadrature oracles for
//! their Minkowski tensors.
//!
//! Every built-in shape admits inner and outer tangent balls of a known
//! radius, has an exact signed distance function, and a piecewise-smooth
//! boundary parametrization carrying exact normals and curvatures. Ground
//! truth tensors are computed from these by composite Gauss-Legendre panels,
//! which is spectrally accurate on the smooth pieces.

use crate::error::{Error, Result};
use crate::quad;
use crate::special::sphere_surface;
use crate::tensor::{mcmullen_required, SymTensor, TensorIndex};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Shape family. Ball supports d = 2 and 3; the others are planar.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeKind {
    Ball {
        center: [f64; 3],
        radius: f64,
    },
    Ellipse {
        center: [f64; 3],
        /// Semi-axes along the coordinate axes, major first.
        semi_axes: [f64; 2],
    },
    RoundedBox {
        center: [f64; 3],
        /// Half-widths of the full shape, rounding included.
        half_widths: [f64; 2],
        corner_radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    dim: usize,
    kind: ShapeKind,
}

/// One quadrature node on the boundary: position, outward unit normal,
/// principal curvatures, and the boundary-measure weight.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryPanel {
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub curvatures: [f64; 2],
    pub weight: f64,
}

/// Smooth boundary piece of a planar shape.
#[derive(Debug, Clone, Copy)]
pub enum Piece2D {
    /// Counterclockwise circular arc with outward radial normal.
    Arc {
        center: [f64; 2],
        radius: f64,
        ang0: f64,
        ang1: f64,
    },
    /// Straight segment with a fixed outward normal.
    Segment {
        p0: [f64; 2],
        p1: [f64; 2],
        normal: [f64; 2],
    },
    /// Full ellipse in angle parametrization.
    EllipseArc {
        center: [f64; 2],
        a: f64,
        b: f64,
        t0: f64,
        t1: f64,
    },
}

impl Piece2D {
    /// Parameter range.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            Piece2D::Arc { ang0, ang1, .. } => (ang0, ang1),
            Piece2D::Segment { .. } => (0.0, 1.0),
            Piece2D::EllipseArc { t0, t1, .. } => (t0, t1),
        }
    }

    /// Point, outward normal, curvature, and speed at parameter `t`.
    pub fn eval(&self, t: f64) -> ([f64; 2], [f64; 2], f64, f64) {
        match *self {
            Piece2D::Arc { center, radius, .. } => {
                let n = [t.cos(), t.sin()];
                (
                    [center[0] + radius * n[0], center[1] + radius * n[1]],
                    n,
                    1.0 / radius,
                    radius,
                )
            }
            Piece2D::Segment { p0, p1, normal } => {
                let dx = [p1[0] - p0[0], p1[1] - p0[1]];
                let speed = (dx[0] * dx[0] + dx[1] * dx[1]).sqrt();
                ([p0[0] + t * dx[0], p0[1] + t * dx[1]], normal, 0.0, speed)
            }
            Piece2D::EllipseArc { center, a, b, .. } => {
                let (s, c) = t.sin_cos();
                let speed = (a * a * s * s + b * b * c * c).sqrt();
                let n = [b * c / speed, a * s / speed];
                let kappa = a * b / speed.powi(3);
                ([center[0] + a * c, center[1] + b * s], n, kappa, speed)
            }
        }
    }

    /// Arc length, by quadrature where no closed form is used.
    pub fn length(&self) -> f64 {
        match *self {
            Piece2D::Arc { radius, ang0, ang1, .. } => radius * (ang1 - ang0),
            Piece2D::Segment { p0, p1, .. } => {
                ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt()
            }
            Piece2D::EllipseArc { .. } => {
                let (t0, t1) = self.range();
                quad::integrate_composite(|t| self.eval(t).3, t0, t1, 32, 8)
            }
        }
    }
}

impl Shape {
    pub fn ball(dim: usize, center: &[f64], radius: f64) -> Result<Shape> {
        if dim != 2 && dim != 3 {
            return Err(Error::Shape("ball supports dim 2 or 3".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::Shape(format!("radius must be > 0, got {radius}")));
        }
        Ok(Shape {
            dim,
            kind: ShapeKind::Ball {
                center: pad(center, dim),
                radius,
            },
        })
    }

    pub fn ellipse(center: &[f64], a: f64, b: f64) -> Result<Shape> {
        if !(a >= b && b > 0.0) {
            return Err(Error::Shape(format!(
                "semi-axes must satisfy a >= b > 0, got ({a}, {b})"
            )));
        }
        Ok(Shape {
            dim: 2,
            kind: ShapeKind::Ellipse {
                center: pad(center, 2),
                semi_axes: [a, b],
            },
        })
    }

    pub fn rounded_box(center: &[f64], half_widths: [f64; 2], corner_radius: f64) -> Result<Shape> {
        let [hx, hy] = half_widths;
        if !(corner_radius > 0.0 && corner_radius <= hx.min(hy)) {
            return Err(Error::Shape(format!(
                "corner radius must satisfy 0 < r <= min half-width, got {corner_radius}"
            )));
        }
        Ok(Shape {
            dim: 2,
            kind: ShapeKind::RoundedBox {
                center: pad(center, 2),
                half_widths,
                corner_radius,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ShapeKind {
        &self.kind
    }

    /// Largest r such that inner and outer tangent balls of radius r exist
    /// at every boundary point.
    pub fn regularity_radius(&self) -> f64 {
        match &self.kind {
            ShapeKind::Ball { radius, .. } => *radius,
            ShapeKind::Ellipse { semi_axes, .. } => semi_axes[1] * semi_axes[1] / semi_axes[0],
            ShapeKind::RoundedBox { corner_radius, .. } => *corner_radius,
        }
    }

    pub fn translate(&self, c: &[f64]) -> Shape {
        let mut s = self.clone();
        let ctr = match &mut s.kind {
            ShapeKind::Ball { center, .. } => center,
            ShapeKind::Ellipse { center, .. } => center,
            ShapeKind::RoundedBox { center, .. } => center,
        };
        for i in 0..self.dim {
            ctr[i] += c[i];
        }
        s
    }

    /// Exact signed distance (negative inside).
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ShapeKind::Ball { center, radius } => {
                let mut r2 = 0.0;
                for i in 0..self.dim {
                    r2 += (x[i] - center[i]).powi(2);
                }
                r2.sqrt() - radius
            }
            ShapeKind::Ellipse { center, semi_axes } => {
                ellipse_signed_distance(x[0] - center[0], x[1] - center[1], semi_axes[0], semi_axes[1])
            }
            ShapeKind::RoundedBox {
                center,
                half_widths,
                corner_radius,
            } => {
                let r = *corner_radius;
                let qx = (x[0] - center[0]).abs() - (half_widths[0] - r);
                let qy = (x[1] - center[1]).abs() - (half_widths[1] - r);
                let ox = qx.max(0.0);
                let oy = qy.max(0.0);
                (ox * ox + oy * oy).sqrt() + qx.max(qy).min(0.0) - r
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) <= 0.0
    }

    /// Axis-aligned bounding box (lo, hi).
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let (c, ext) = match &self.kind {
            ShapeKind::Ball { center, radius } => (*center, [*radius; 3]),
            ShapeKind::Ellipse { center, semi_axes } => {
                (*center, [semi_axes[0], semi_axes[1], 0.0])
            }
            ShapeKind::RoundedBox {
                center, half_widths, ..
            } => (*center, [half_widths[0], half_widths[1], 0.0]),
        };
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for i in 0..self.dim {
            lo[i] = c[i] - ext[i];
            hi[i] = c[i] + ext[i];
        }
        (lo, hi)
    }

    /// Smooth boundary pieces (planar shapes only).
    pub fn boundary_pieces(&self) -> Result<Vec<Piece2D>> {
        match &self.kind {
            ShapeKind::Ball { center, radius } if self.dim == 2 => Ok(vec![Piece2D::Arc {
                center: [center[0], center[1]],
                radius: *radius,
                ang0: 0.0,
                ang1: 2.0 * PI,
            }]),
            ShapeKind::Ball { .. } => Err(Error::Shape(
                "boundary pieces are planar; use boundary_panels for d=3".into(),
            )),
            ShapeKind::Ellipse { center, semi_axes } => Ok(vec![Piece2D::EllipseArc {
                center: [center[0], center[1]],
                a: semi_axes[0],
                b: semi_axes[1],
                t0: 0.0,
                t1: 2.0 * PI,
            }]),
            ShapeKind::RoundedBox {
                center,
                half_widths,
                corner_radius,
            } => {
                let (cx, cy) = (center[0], center[1]);
                let (hx, hy) = (half_widths[0], half_widths[1]);
                let r = *corner_radius;
                let (ix, iy) = (hx - r, hy - r); // straight-edge half-lengths
                let mut pieces = Vec::new();
                let mut seg = |p0: [f64; 2], p1: [f64; 2], normal: [f64; 2]| {
                    if (p1[0] - p0[0]).abs() + (p1[1] - p0[1]).abs() > 1e-15 {
                        pieces.push(Piece2D::Segment { p0, p1, normal });
                    }
                };
                seg([cx + hx, cy - iy], [cx + hx, cy + iy], [1.0, 0.0]);
                seg([cx - ix, cy + hy], [cx + ix, cy + hy], [0.0, 1.0]);
                seg([cx - hx, cy - iy], [cx - hx, cy + iy], [-1.0, 0.0]);
                seg([cx - ix, cy - hy], [cx + ix, cy - hy], [0.0, -1.0]);
                let arc = |ccx: f64, ccy: f64, a0: f64| Piece2D::Arc {
                    center: [ccx, ccy],
                    radius: r,
                    ang0: a0,
                    ang1: a0 + PI / 2.0,
                };
                pieces.push(arc(cx + ix, cy + iy, 0.0));
                pieces.push(arc(cx - ix, cy + iy, PI / 2.0));
                pieces.push(arc(cx - ix, cy - iy, PI));
                pieces.push(arc(cx + ix, cy - iy, 1.5 * PI));
                Ok(pieces)
            }
        }
    }

    /// Boundary quadrature: `n_panels` composite panels with 8 Gauss-Legendre
    /// nodes each, distributed over the smooth pieces proportionally to
    /// their length. Weight sums converge to the boundary measure.
    pub fn boundary_panels(&self, n_panels: usize) -> Result<Vec<BoundaryPanel>> {
        if n_panels < 8 {
            return Err(Error::Shape(format!(
                "need at least 8 panels, got {n_panels}"
            )));
        }
        if self.dim == 3 {
            return self.sphere_panels(n_panels);
        }
        let pieces = self.boundary_pieces()?;
        let lengths: Vec<f64> = pieces.iter().map(|p| p.length()).collect();
        let total: f64 = lengths.iter().sum();
        let (nodes, weights) = quad::gauss_legendre(8);
        let mut out = Vec::new();
        for (piece, len) in pieces.iter().zip(&lengths) {
            let np = ((n_panels as f64 * len / total).round() as usize).max(1);
            let (t0, t1) = piece.range();
            let h = (t1 - t0) / np as f64;
            for p in 0..np {
                let mid = t0 + (p as f64 + 0.5) * h;
                for (x, w) in nodes.iter().zip(weights) {
                    let t = mid + 0.5 * h * x;
                    let (pt, n, kappa, speed) = piece.eval(t);
                    out.push(BoundaryPanel {
                        point: [pt[0], pt[1], 0.0],
                        normal: [n[0], n[1], 0.0],
                        curvatures: [kappa, 0.0],
                        weight: w * 0.5 * h * speed,
                    });
                }
            }
        }
        Ok(out)
    }

    fn sphere_panels(&self, n_panels: usize) -> Result<Vec<BoundaryPanel>> {
        let ShapeKind::Ball { center, radius } = &self.kind else {
            return Err(Error::Shape("only balls are supported in d=3".into()));
        };
        let (c, rr) = (*center, *radius);
        // Product rule: Gauss-Legendre in cos(polar) x periodic panels in
        // azimuth, which integrates smooth sphere integrands spectrally.
        let n_mu = ((n_panels as f64 / 2.0).sqrt().ceil() as usize).max(4);
        let n_phi = 2 * n_mu;
        let (nodes, weights) = quad::gauss_legendre(8);
        let mut out = Vec::new();
        let hmu = 2.0 / n_mu as f64;
        let hphi = 2.0 * PI / n_phi as f64;
        for i in 0..n_mu {
            for (xm, wm) in nodes.iter().zip(weights) {
                let mu = -1.0 + (i as f64 + 0.5) * hmu + 0.5 * hmu * xm;
                let sin_theta = (1.0 - mu * mu).max(0.0).sqrt();
                for j in 0..n_phi {
                    for (xp, wp) in nodes.iter().zip(weights) {
                        let phi = (j as f64 + 0.5) * hphi + 0.5 * hphi * xp;
                        let n = [sin_theta * phi.cos(), sin_theta * phi.sin(), mu];
                        out.push(BoundaryPanel {
                            point: [c[0] + rr * n[0], c[1] + rr * n[1], c[2] + rr * n[2]],
                            normal: n,
                            curvatures: [1.0 / rr, 1.0 / rr],
                            weight: wm * wp * 0.25 * hmu * hphi * rr * rr,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

fn pad(x: &[f64], dim: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[..dim].copy_from_slice(&x[..dim]);
    out
}

/// Exact distance from a point to an ellipse boundary (first-quadrant
/// bisection on the orthogonality condition), signed by containment.
fn ellipse_signed_distance(px: f64, py: f64, a: f64, b: f64) -> f64 {
    let y0 = px.abs();
    let y1 = py.abs();
    let inside = (px / a).powi(2) + (py / b).powi(2) <= 1.0;
    let dist = if y1 > 1e-300 {
        // Root of F(t) = (a y0/(t+a^2))^2 + (b y1/(t+b^2))^2 - 1 on
        // (-b^2, inf); F decreases from +inf to -1.
        let f = |t: f64| {
            let u = a * y0 / (t + a * a);
            let v = b * y1 / (t + b * b);
            u * u + v * v - 1.0
        };
        let mut lo = b * y1 - b * b; // F(lo) >= 0
        let mut hi = (a * a * y0 * y0 + b * b * y1 * y1).sqrt() - b * b; // F(hi) <= 0
        for _ in 0..120 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-16 * (1.0 + hi.abs()) {
                break;
            }
        }
        let t = 0.5 * (lo + hi);
        let cx = a * a * y0 / (t + a * a);
        let cy = b * b * y1 / (t + b * b);
        ((y0 - cx).powi(2) + (y1 - cy).powi(2)).sqrt()
    } else if a > b {
        // On the major axis the nearest point leaves the vertex once the
        // foot parameter allows it.
        let crit = (a * a - b * b) / a;
        if y0 < crit {
            let cx = a * a * y0 / (a * a - b * b);
            let cy = b * (1.0 - (cx / a).powi(2)).max(0.0).sqrt();
            ((y0 - cx).powi(2) + cy * cy).sqrt()
        } else {
            (y0 - a).abs()
        }
    } else {
        (y0 - a).abs()
    };
    if inside {
        -dist
    } else {
        dist
    }
}

// ---------------------------------------------------------------------------
// Tensor oracles
// ---------------------------------------------------------------------------

/// Default panel count for oracle quadrature.
pub const ORACLE_PANELS: usize = 1024;

/// Ground-truth Minkowski tensor of a reference shape by boundary
/// quadrature. Supported degrees: k = d (volume, s = 0), k = d-1
/// (surface), and k = d-2 with s >= 0 in d = 2 (curvature-weighted).
///
/// Surface tensors carry the full boundary measure: the (0,0) surface
/// tensor of a shape equals its perimeter / surface area.
pub fn minkowski_tensor(shape: &Shape, k: u32, r: u32, s: u32, n_panels: usize) -> Result<SymTensor> {
    let d = shape.dim();
    let rank = (r + s) as usize;
    if rank > 4 {
        return Err(Error::Shape(format!("oracle rank cap is 4, got r+s={rank}")));
    }
    let r_fact = factorial(r);
    let s_fact = factorial(s);
    if k as usize == d {
        if s != 0 {
            return Err(Error::Shape("volume tensors have no normal part".into()));
        }
        return volume_by_divergence(shape, r, n_panels);
    }
    let panels = shape.boundary_panels(n_panels)?;
    let (coeff, with_curvature) = if k as usize == d - 1 {
        (2.0 / sphere_surface(s + 1) / (r_fact * s_fact), false)
    } else if k as usize + 2 == d {
        if d != 2 {
            return Err(Error::Shape("curvature tensors are implemented in d=2".into()));
        }
        (1.0 / sphere_surface(s + 2) / (r_fact * s_fact), true)
    } else {
        return Err(Error::Shape(format!("unsupported tensor degree k={k} in d={d}")));
    };
    let mut acc = SymTensor::zeros(d, rank);
    for p in &panels {
        let xr = SymTensor::sym_pow(&p.point[..d], r as usize);
        let us = SymTensor::sym_pow(&p.normal[..d], s as usize);
        let prod = xr.sym_product(&us)?;
        let mut w = p.weight;
        if with_curvature {
            w *= p.curvatures[0];
        }
        acc = acc.add(&prod.scale(w))?;
    }
    Ok(acc.scale(coeff))
}

/// Volume tensor (1/r!) int_X x^r dx, reduced to a boundary integral by the
/// divergence theorem so all oracles share the same panel machinery.
fn volume_by_divergence(shape: &Shape, r: u32, n_panels: usize) -> Result<SymTensor> {
    let d = shape.dim();
    let panels = shape.boundary_panels(n_panels)?;
    let mut out = SymTensor::zeros(d, r as usize);
    let indices = crate::tensor::multi_indices(d, r as usize);
    for (slot, alpha) in indices.iter().enumerate() {
        // Antiderivative along axis 0: F = (x0^(e0+1)/(e0+1) * rest, 0, ..).
        let e0 = alpha.iter().filter(|&&i| i == 0).count() as i32;
        let mut v = 0.0;
        for p in &panels {
            let mut f = p.point[0].powi(e0 + 1) / (e0 + 1) as f64;
            for &i in alpha.iter().filter(|&&i| i != 0) {
                f *= p.point[i as usize];
            }
            v += p.weight * f * p.normal[0];
        }
        out.components_mut()[slot] = v;
    }
    Ok(out.scale(1.0 / factorial(r)))
}

/// Volume tensor oracle.
pub fn volume_tensor_oracle(shape: &Shape, r: u32) -> Result<SymTensor> {
    minkowski_tensor(shape, shape.dim() as u32, r, 0, ORACLE_PANELS)
}

/// Surface tensor oracle in the full-boundary-measure normalization.
pub fn surface_tensor_oracle(shape: &Shape, r: u32, s: u32) -> Result<SymTensor> {
    minkowski_tensor(shape, shape.dim() as u32 - 1, r, s, ORACLE_PANELS)
}

/// Mean-curvature tensor oracle (d = 2): (1/r!) (1/2pi) int x^r kappa dH.
pub fn curvature_tensor_oracle(shape: &Shape, r: u32) -> Result<SymTensor> {
    if shape.dim() != 2 {
        return Err(Error::Shape("curvature tensors are implemented in d=2".into()));
    }
    minkowski_tensor(shape, 0, r, 0, ORACLE_PANELS)
}

/// Oracle tensors for every family member the McMullen relation at (k, r)
/// requires.
pub fn oracle_family(
    shape: &Shape,
    k: u32,
    r: u32,
    n_panels: usize,
) -> Result<BTreeMap<TensorIndex, SymTensor>> {
    let mut family = BTreeMap::new();
    for idx in mcmullen_required(shape.dim(), k, r) {
        let t = minkowski_tensor(shape, idx.k, idx.r, idx.s, n_panels)?;
        family.insert(idx, t);
    }
    Ok(family)
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|i| i as f64).product()
}
