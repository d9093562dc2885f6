//! The 3-dimensional Heisenberg group, its contact structure, and the group
//! of Heisenberg rigid motions.
//!
//! Points live in coordinates `(x, y, z)` with the twisted product
//! `(x1,y1,z1) * (x2,y2,z2) = (x1+x2, y1+y2, z1+z2 + y1*x2 - x1*y2)`.
//! The left-invariant frame is `e1 = d/dx + y d/dz`, `e2 = d/dy - x d/dz`,
//! `T = d/dz`; the contact plane is the kernel of `theta = dz + x dy - y dx`
//! and carries the 90-degree rotation `J` with `J e1 = e2`, `J e2 = -e1`.
//! The adapted metric makes `(e1, e2, T)` orthonormal.
//!
//! A rigid motion is a rotation about the z-axis followed by a left
//! translation; as matrices these form the subgroup of GL(4) with shape
//!
//! ```text
//! | 1   0        0        0 |
//! | p1  a        b        0 |
//! | p2  c        d        0 |
//! | p3  a*p2-c*p1  b*p2-d*p1  1 |
//! ```
//!
//! acting on points written as columns `(1, x, y, z)`. The third-row pair is
//! always recomputed from `p` and `R`, never read from input, which keeps
//! every stored matrix in the group by construction.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector3};
use thiserror::Error;

use crate::numerics::so2_project;

/// Default tolerance for contact-plane membership checks.
pub const CONTACT_TOL: f64 = 1e-9;
/// Default tolerance for group-membership checks.
pub const GROUP_TOL: f64 = 1e-9;
/// Rotation blocks are snapped back to SO(2) when drift exceeds this.
pub const SO2_SNAP_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum H1Error {
    #[error("vector is not in the contact plane: theta residual {residual:.3e} exceeds {tol:.3e}")]
    NotInContactPlane { residual: f64, tol: f64 },
    #[error("tangent vectors are based at different points")]
    BasePointMismatch,
    #[error("matrix is not in the motion group: {reason} (residual {residual:.3e})")]
    NotInGroup { reason: &'static str, residual: f64 },
    #[error("cannot build a frame from a zero horizontal vector")]
    ZeroHorizontalVector,
}

/// A point of the Heisenberg group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct H1Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl H1Point {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        H1Point { x, y, z }
    }

    pub const fn origin() -> Self {
        H1Point { x: 0.0, y: 0.0, z: 0.0 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        H1Point { x: a[0], y: a[1], z: a[2] }
    }

    pub fn dist(self, other: H1Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

/// Group product of two points.
pub fn group_mul(p: H1Point, q: H1Point) -> H1Point {
    H1Point {
        x: p.x + q.x,
        y: p.y + q.y,
        z: p.z + q.z + p.y * q.x - p.x * q.y,
    }
}

/// Group inverse: componentwise negation.
pub fn group_inv(p: H1Point) -> H1Point {
    H1Point { x: -p.x, y: -p.y, z: -p.z }
}

/// A tangent vector carrying both its coordinate components (in
/// `d/dx, d/dy, d/dz`) and its components in the left-invariant frame
/// `(e1, e2, T)`. The two are converted eagerly at construction;
/// re-deriving one from the other on demand invites sign mistakes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector {
    base: H1Point,
    coord: Vector3<f64>,
    frame: Vector3<f64>,
}

impl TangentVector {
    /// From coordinate components at `base`.
    pub fn from_coord(base: H1Point, coord: Vector3<f64>) -> Self {
        let frame = Vector3::new(
            coord.x,
            coord.y,
            coord.z + base.x * coord.y - base.y * coord.x,
        );
        TangentVector { base, coord, frame }
    }

    /// From components in the left-invariant frame at `base`.
    pub fn from_frame(base: H1Point, frame: Vector3<f64>) -> Self {
        let coord = Vector3::new(
            frame.x,
            frame.y,
            frame.z - base.x * frame.y + base.y * frame.x,
        );
        TangentVector { base, coord, frame }
    }

    /// Horizontal vector `v1 e1 + v2 e2` at `base`.
    pub fn horizontal(base: H1Point, v1: f64, v2: f64) -> Self {
        Self::from_frame(base, Vector3::new(v1, v2, 0.0))
    }

    /// The Reeb direction `T` at `base`.
    pub fn reeb(base: H1Point) -> Self {
        Self::from_frame(base, Vector3::new(0.0, 0.0, 1.0))
    }

    pub fn base(&self) -> H1Point {
        self.base
    }

    pub fn coord(&self) -> Vector3<f64> {
        self.coord
    }

    pub fn frame(&self) -> Vector3<f64> {
        self.frame
    }

    /// Norm in the adapted metric.
    pub fn norm(&self) -> f64 {
        self.frame.norm()
    }

    /// Norm of the contact-plane part.
    pub fn horizontal_norm(&self) -> f64 {
        self.frame.xy().norm()
    }
}

/// Value of the contact form on a tangent vector; equals the `T`-component
/// in the left-invariant frame.
pub fn contact_form(v: &TangentVector) -> f64 {
    v.frame.z
}

/// The CR rotation `J` on contact vectors: `(v1, v2) -> (-v2, v1)`.
pub fn apply_j0(v: &TangentVector) -> Result<TangentVector, H1Error> {
    apply_j0_with_tol(v, CONTACT_TOL)
}

pub fn apply_j0_with_tol(v: &TangentVector, tol: f64) -> Result<TangentVector, H1Error> {
    let residual = contact_form(v).abs();
    if residual > tol {
        return Err(H1Error::NotInContactPlane { residual, tol });
    }
    Ok(TangentVector::from_frame(
        v.base,
        Vector3::new(-v.frame.y, v.frame.x, 0.0),
    ))
}

/// Adapted-metric inner product; both vectors must share a base point.
pub fn adapted_inner(v: &TangentVector, w: &TangentVector) -> Result<f64, H1Error> {
    if v.base.dist(w.base) > 1e-9 {
        return Err(H1Error::BasePointMismatch);
    }
    Ok(v.frame.dot(&w.frame))
}

/// A Heisenberg rigid motion: rotation `R` about the z-axis followed by
/// left translation by `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeisenbergMotion {
    p: H1Point,
    rot: Matrix2<f64>,
}

impl HeisenbergMotion {
    pub fn identity() -> Self {
        HeisenbergMotion { p: H1Point::origin(), rot: Matrix2::identity() }
    }

    /// Motion with translation `p` and rotation angle `theta`.
    pub fn new(p: H1Point, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        HeisenbergMotion { p, rot: Matrix2::new(c, -s, s, c) }
    }

    pub fn translation(p: H1Point) -> Self {
        HeisenbergMotion { p, rot: Matrix2::identity() }
    }

    pub fn rotation(theta: f64) -> Self {
        Self::new(H1Point::origin(), theta)
    }

    /// Build from parts, validating (and if necessary snapping) the rotation
    /// block. Fails when `rot` is farther than `tol` from SO(2).
    pub fn from_parts(p: H1Point, rot: Matrix2<f64>, tol: f64) -> Result<Self, H1Error> {
        let ortho = (rot.transpose() * rot - Matrix2::identity()).norm();
        let det = rot.determinant() - 1.0;
        let residual = ortho + det.abs();
        if residual > tol {
            return Err(H1Error::NotInGroup { reason: "rotation block not in SO(2)", residual });
        }
        let rot = if residual > SO2_SNAP_TOL {
            so2_project(&rot).map_err(|_| H1Error::NotInGroup {
                reason: "rotation block not projectable",
                residual,
            })?
        } else {
            rot
        };
        Ok(HeisenbergMotion { p, rot })
    }

    pub fn translation_part(&self) -> H1Point {
        self.p
    }

    pub fn rotation_part(&self) -> Matrix2<f64> {
        self.rot
    }

    /// Rotation angle in `(-pi, pi]`.
    pub fn theta(&self) -> f64 {
        self.rot[(1, 0)].atan2(self.rot[(0, 0)])
    }

    /// The 4x4 matrix representation; dependent entries recomputed.
    pub fn matrix(&self) -> Matrix4<f64> {
        let (a, b, c, d) = (self.rot[(0, 0)], self.rot[(0, 1)], self.rot[(1, 0)], self.rot[(1, 1)]);
        let (p1, p2, p3) = (self.p.x, self.p.y, self.p.z);
        Matrix4::new(
            1.0, 0.0, 0.0, 0.0, //
            p1, a, b, 0.0, //
            p2, c, d, 0.0, //
            p3, a * p2 - c * p1, b * p2 - d * p1, 1.0,
        )
    }

    /// Recover a motion from its matrix representation. The sparsity pattern
    /// and the rotation block are checked within `tol`; the dependent
    /// third-row entries are recomputed, not trusted.
    pub fn from_matrix(m: &Matrix4<f64>, tol: f64) -> Result<Self, H1Error> {
        let sparsity = (m[(0, 0)] - 1.0).abs()
            + m[(0, 1)].abs()
            + m[(0, 2)].abs()
            + m[(0, 3)].abs()
            + m[(1, 3)].abs()
            + m[(2, 3)].abs()
            + (m[(3, 3)] - 1.0).abs();
        if sparsity > tol {
            return Err(H1Error::NotInGroup { reason: "sparsity pattern violated", residual: sparsity });
        }
        let rot = Matrix2::new(m[(1, 1)], m[(1, 2)], m[(2, 1)], m[(2, 2)]);
        let p = H1Point::new(m[(1, 0)], m[(2, 0)], m[(3, 0)]);
        Self::from_parts(p, rot, tol)
    }

    /// Apply the motion to a point.
    pub fn apply(&self, q: H1Point) -> H1Point {
        let (a, b, c, d) = (self.rot[(0, 0)], self.rot[(0, 1)], self.rot[(1, 0)], self.rot[(1, 1)]);
        let rq = H1Point::new(a * q.x + b * q.y, c * q.x + d * q.y, q.z);
        group_mul(self.p, rq)
    }

    /// Group composition: `(self.compose(other)).apply(q) == self.apply(other.apply(q))`.
    pub fn compose(&self, other: &HeisenbergMotion) -> HeisenbergMotion {
        let rot = self.rot * other.rot;
        let (a, b, c, d) = (self.rot[(0, 0)], self.rot[(0, 1)], self.rot[(1, 0)], self.rot[(1, 1)]);
        let q = other.p;
        let rq = H1Point::new(a * q.x + b * q.y, c * q.x + d * q.y, q.z);
        HeisenbergMotion { p: group_mul(self.p, rq), rot }
    }

    pub fn inverse(&self) -> HeisenbergMotion {
        let rot = self.rot.transpose();
        let q = group_inv(self.p);
        let (a, b, c, d) = (rot[(0, 0)], rot[(0, 1)], rot[(1, 0)], rot[(1, 1)]);
        let rq = H1Point::new(a * q.x + b * q.y, c * q.x + d * q.y, q.z);
        HeisenbergMotion { p: rq, rot }
    }

    /// Differential of the motion. In left-invariant frame components the
    /// horizontal pair rotates by `R` and the `T`-component is untouched,
    /// which is exactly what preserves the contact form and the CR rotation.
    pub fn pushforward(&self, v: &TangentVector) -> TangentVector {
        let f = v.frame();
        let h = self.rot * Vector2::new(f.x, f.y);
        TangentVector::from_frame(self.apply(v.base()), Vector3::new(h.x, h.y, f.z))
    }
}

/// Apply a motion to a point (function form of [`HeisenbergMotion::apply`]).
pub fn motion_apply(g: &HeisenbergMotion, q: H1Point) -> H1Point {
    g.apply(q)
}

pub fn motion_compose(g1: &HeisenbergMotion, g2: &HeisenbergMotion) -> HeisenbergMotion {
    g1.compose(g2)
}

pub fn motion_inverse(g: &HeisenbergMotion) -> HeisenbergMotion {
    g.inverse()
}

pub fn motion_pushforward(g: &HeisenbergMotion, v: &TangentVector) -> TangentVector {
    g.pushforward(v)
}

/// An oriented frame `(p; X, Y, T)` with `X` a unit contact vector and
/// `Y = J X`. Frames are in bijection with rigid motions: the frame is the
/// image of the standard frame at the origin under a unique motion, and its
/// matrix is that motion's matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedFrame {
    p: H1Point,
    rot: Matrix2<f64>,
}

impl OrientedFrame {
    /// The standard frame `(0; e1, e2, T)`.
    pub fn standard() -> Self {
        OrientedFrame { p: H1Point::origin(), rot: Matrix2::identity() }
    }

    /// Frame at `p` with `X` the normalization of the given horizontal
    /// direction `(x1, x2)` in frame components.
    pub fn from_horizontal_direction(p: H1Point, x1: f64, x2: f64) -> Result<Self, H1Error> {
        let norm = (x1 * x1 + x2 * x2).sqrt();
        if norm < 1e-15 {
            return Err(H1Error::ZeroHorizontalVector);
        }
        let (a, c) = (x1 / norm, x2 / norm);
        // columns: X = (a, c), Y = J X = (-c, a)
        Ok(OrientedFrame { p, rot: Matrix2::new(a, -c, c, a) })
    }

    /// Frame whose `X` is the contact-plane part of `v` (normalized);
    /// `v` must be based where the frame sits.
    pub fn from_tangent(v: &TangentVector, tol: f64) -> Result<Self, H1Error> {
        let residual = contact_form(v).abs();
        if residual > tol {
            return Err(H1Error::NotInContactPlane { residual, tol });
        }
        Self::from_horizontal_direction(v.base(), v.frame().x, v.frame().y)
    }

    pub fn base(&self) -> H1Point {
        self.p
    }

    pub fn x(&self) -> TangentVector {
        TangentVector::horizontal(self.p, self.rot[(0, 0)], self.rot[(1, 0)])
    }

    pub fn y(&self) -> TangentVector {
        TangentVector::horizontal(self.p, self.rot[(0, 1)], self.rot[(1, 1)])
    }

    pub fn t(&self) -> TangentVector {
        TangentVector::reeb(self.p)
    }

    /// The motion carrying the standard frame to this one.
    pub fn as_motion(&self) -> HeisenbergMotion {
        HeisenbergMotion { p: self.p, rot: self.rot }
    }

    pub fn from_motion(g: &HeisenbergMotion) -> Self {
        OrientedFrame { p: g.p, rot: g.rot }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        self.as_motion().matrix()
    }

    pub fn from_matrix(m: &Matrix4<f64>, tol: f64) -> Result<Self, H1Error> {
        HeisenbergMotion::from_matrix(m, tol).map(|g| OrientedFrame { p: g.p, rot: g.rot })
    }

    /// The motion `g` with `g . self = other` (frames are a torsor under the
    /// motion group).
    pub fn motion_to(&self, other: &OrientedFrame) -> HeisenbergMotion {
        other.as_motion().compose(&self.as_motion().inverse())
    }
}

/// Function forms matching the frame <-> matrix bijection.
pub fn frame_to_matrix(f: &OrientedFrame) -> Matrix4<f64> {
    f.to_matrix()
}

pub fn matrix_to_frame(m: &Matrix4<f64>) -> Result<OrientedFrame, H1Error> {
    OrientedFrame::from_matrix(m, GROUP_TOL)
}

/// Coefficients of the motion-group Maurer-Cartan form evaluated on a
/// tangent direction: `w1, w2, w3` on the point part and `w12` on the
/// rotation part.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MaurerCartanValue {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w12: f64,
}

impl MaurerCartanValue {
    pub fn new(w1: f64, w2: f64, w3: f64, w12: f64) -> Self {
        MaurerCartanValue { w1, w2, w3, w12 }
    }

    /// Assemble the Lie-algebra matrix. Structural zeros are exact.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        Matrix4::new(
            0.0, 0.0, 0.0, 0.0, //
            self.w1, 0.0, -self.w12, 0.0, //
            self.w2, self.w12, 0.0, 0.0, //
            self.w3, self.w2, -self.w1, 0.0,
        )
    }
}

/// Derivative of a moving frame in matrix form: `dM = M * omega`. Columns
/// read `dp = X w1 + Y w2 + T w3`, `dX = Y w12 + T w2`,
/// `dY = -X w12 - T w1`, `dT = 0`.
pub fn moving_frame_derivative(f: &OrientedFrame, mc: &MaurerCartanValue) -> Matrix4<f64> {
    f.to_matrix() * mc.to_matrix()
}
