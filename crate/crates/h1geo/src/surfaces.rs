//! Normal parametrized surfaces: coefficient fields, integrability,
//! reconstruction, and curvature.
//!
//! A point of a surface is singular when its tangent plane coincides with
//! the contact plane; away from those points the intersection of the tangent
//! bundle with the contact bundle integrates to the characteristic
//! foliation. A parametrization `F(u, v)` is *normal* when (1) the patch has
//! no singular points, (2) `F_u` spans the characteristic foliation, and
//! (3) `|F_u| = 1` in the adapted metric.
//!
//! With `X = F_u`, `Y = J X`, the five coefficient fields are
//!
//! ```text
//! a = <F_v, X>   b = <F_v, Y>   c = <F_v, T>
//! l = <F_uu, Y>  m = <F_uv, Y>
//! ```
//!
//! subject to `a_u = b l`, `b_u = -a l + m`, `c_u = 2 b`, `l_v = m_u`.
//! They determine the surface up to a rigid motion. The quotient
//! `alpha = b / c` (p-variation), the p-mean curvature `l`, and the induced
//! metric form a complete invariant system; the Gaussian curvature of the
//! induced metric is expressible in `alpha`, `l`, and derivatives of
//! `alpha` along the tangent frame `e1` (characteristic direction) and
//! `e_Sigma = (alpha e2 + T)/sqrt(1+alpha^2)`.
//!
//! Sign convention: this crate's `K` is the classical Gaussian curvature
//! (positive for round spheres), for both the coefficient-based formula and
//! the first-fundamental-form oracle, and the integrability residual is
//! written in the same convention.

use nalgebra::{Matrix4, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::heisenberg::{H1Error, H1Point, HeisenbergMotion, MaurerCartanValue, OrientedFrame, TangentVector};
use crate::numerics::{
    fd_partial, integrate_group_ode, simpson_integrate, Axis, GridField, NumericsError,
};

/// Default tolerance for singular-point detection on analytic inputs.
pub const DEFAULT_SINGULAR_TOL: f64 = 1e-9;
/// Singular-cell threshold for `alpha = b/c`, relative to the median of |c|.
pub const EPS_SING_REL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("patch grid must be at least 5x5, got {nu}x{nv}")]
    GridTooSmall { nu: usize, nv: usize },
    #[error("field length {got} does not match grid size {need}")]
    LengthMismatch { need: usize, got: usize },
    #[error("surface is singular at cell ({0}, {1}): tangent plane equals the contact plane")]
    Singular(usize, usize),
    #[error("parametrization is not normal: max |theta(F_u)| = {max_theta_fu:.3e}, max ||F_u|-1| = {max_unit_dev:.3e}")]
    NotNormal { max_theta_fu: f64, max_unit_dev: f64 },
    #[error("characteristic curve left the sampled region while normalizing row {row}")]
    FlowLeftPatch { row: usize },
    #[error("integrability violated: max residual {max_residual:.6e} at cell {argmax:?}")]
    IntegrabilityViolation { max_residual: f64, argmax: (usize, usize) },
    #[error("reparametrization is degenerate: h'(v) vanishes at v = {at_v}")]
    DegenerateReparam { at_v: f64 },
    #[error("cell ({0}, {1}) is singular-adjacent; value masked")]
    SingularCell(usize, usize),
    #[error("induced metric degenerate at cell ({0}, {1})")]
    DegenerateMetric(usize, usize),
    #[error("closed-surface totals are not offered; integrate nonsingular patches instead")]
    ClosedSurfaceUnsupported,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    H1(#[from] H1Error),
}

/// A grid of values with a validity mask; cells adjacent to the singular set
/// are masked rather than reported as errors so pipelines survive
/// near-singular boundaries.
#[derive(Clone, Debug)]
pub struct MaskedGrid {
    pub values: GridField,
    pub valid: Vec<bool>,
}

impl MaskedGrid {
    pub fn all_valid(values: GridField) -> Self {
        let n = values.nu() * values.nv();
        MaskedGrid { values, valid: vec![true; n] }
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[j * self.values.nu() + i]
    }

    pub fn fully_valid(&self) -> bool {
        self.valid.iter().all(|&b| b)
    }

    /// Max |value| over valid interior cells, with its cell.
    pub fn max_abs_valid_interior(&self) -> (f64, (usize, usize)) {
        let (nu, nv) = (self.values.nu(), self.values.nv());
        let mut best = (0.0_f64, (1, 1));
        for j in 1..nv - 1 {
            for i in 1..nu - 1 {
                if self.is_valid(i, j) {
                    let v = self.values.get(i, j).abs();
                    if v > best.0 {
                        best = (v, (i, j));
                    }
                }
            }
        }
        best
    }
}

/// Optional analytic partial-derivative samples accompanying a patch.
/// Any subset may be supplied; the rest fall back to finite differences.
#[derive(Clone, Debug, Default)]
pub struct PatchPartials {
    pub fu: Option<Vec<Vector3<f64>>>,
    pub fv: Option<Vec<Vector3<f64>>>,
    pub fuu: Option<Vec<Vector3<f64>>>,
    pub fuv: Option<Vec<Vector3<f64>>>,
}

/// A sampled parametrized surface on a uniform `(u, v)` grid, row-major
/// with `u` fastest.
#[derive(Clone, Debug)]
pub struct SurfacePatch {
    u0: f64,
    du: f64,
    nu: usize,
    v0: f64,
    dv: f64,
    nv: usize,
    points: Vec<H1Point>,
    partials: PatchPartials,
}

impl SurfacePatch {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        u0: f64,
        du: f64,
        nu: usize,
        v0: f64,
        dv: f64,
        nv: usize,
        points: Vec<H1Point>,
        partials: PatchPartials,
    ) -> Result<Self, SurfaceError> {
        if nu < 5 || nv < 5 {
            return Err(SurfaceError::GridTooSmall { nu, nv });
        }
        if points.len() != nu * nv {
            return Err(SurfaceError::LengthMismatch { need: nu * nv, got: points.len() });
        }
        for grid in [&partials.fu, &partials.fv, &partials.fuu, &partials.fuv]
            .into_iter()
            .flatten()
        {
            if grid.len() != nu * nv {
                return Err(SurfaceError::LengthMismatch { need: nu * nv, got: grid.len() });
            }
        }
        assert!(du > 0.0 && dv > 0.0, "grid steps must be positive");
        Ok(SurfacePatch { u0, du, nu, v0, dv, nv, points, partials })
    }

    /// Sample a coordinate map on a uniform grid, points only.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fn(
        u0: f64,
        du: f64,
        nu: usize,
        v0: f64,
        dv: f64,
        nv: usize,
        f: impl Fn(f64, f64) -> H1Point,
    ) -> Self {
        let mut points = Vec::with_capacity(nu * nv);
        for j in 0..nv {
            for i in 0..nu {
                points.push(f(u0 + i as f64 * du, v0 + j as f64 * dv));
            }
        }
        SurfacePatch { u0, du, nu, v0, dv, nv, points, partials: PatchPartials::default() }
    }

    /// Sample a coordinate map together with its analytic partials
    /// `(F, F_u, F_v, F_uu, F_uv)`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fn_with_partials(
        u0: f64,
        du: f64,
        nu: usize,
        v0: f64,
        dv: f64,
        nv: usize,
        f: impl Fn(f64, f64) -> (H1Point, Vector3<f64>, Vector3<f64>, Vector3<f64>, Vector3<f64>),
    ) -> Self {
        let n = nu * nv;
        let mut points = Vec::with_capacity(n);
        let mut fu = Vec::with_capacity(n);
        let mut fv = Vec::with_capacity(n);
        let mut fuu = Vec::with_capacity(n);
        let mut fuv = Vec::with_capacity(n);
        for j in 0..nv {
            for i in 0..nu {
                let (p, pu, pv, puu, puv) = f(u0 + i as f64 * du, v0 + j as f64 * dv);
                points.push(p);
                fu.push(pu);
                fv.push(pv);
                fuu.push(puu);
                fuv.push(puv);
            }
        }
        SurfacePatch {
            u0,
            du,
            nu,
            v0,
            dv,
            nv,
            points,
            partials: PatchPartials {
                fu: Some(fu),
                fv: Some(fv),
                fuu: Some(fuu),
                fuv: Some(fuv),
            },
        }
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn du(&self) -> f64 {
        self.du
    }

    pub fn dv(&self) -> f64 {
        self.dv
    }

    pub fn u0(&self) -> f64 {
        self.u0
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn u_at(&self, i: usize) -> f64 {
        self.u0 + i as f64 * self.du
    }

    pub fn v_at(&self, j: usize) -> f64 {
        self.v0 + j as f64 * self.dv
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> H1Point {
        self.points[j * self.nu + i]
    }

    pub fn points(&self) -> &[H1Point] {
        &self.points
    }

    pub fn partials(&self) -> &PatchPartials {
        &self.partials
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.fu.is_some() && self.partials.fv.is_some()
    }

    /// Strip analytic partials, forcing finite differences everywhere.
    pub fn without_partials(mut self) -> Self {
        self.partials = PatchPartials::default();
        self
    }

    /// Keep first-order partials (if present), drop second-order ones.
    pub fn without_second_partials(mut self) -> Self {
        self.partials.fuu = None;
        self.partials.fuv = None;
        self
    }

    fn coord(&self, i: usize, j: usize) -> Vector3<f64> {
        let p = self.point(i, j);
        Vector3::new(p.x, p.y, p.z)
    }

    /// First partial in `u`: analytic samples or order-2 finite differences.
    pub fn fu_grid(&self) -> Vec<Vector3<f64>> {
        if let Some(fu) = &self.partials.fu {
            return fu.clone();
        }
        fd_vec3(&|i, j| self.coord(i, j), self.nu, self.nv, Axis::U, 1, self.du)
    }

    pub fn fv_grid(&self) -> Vec<Vector3<f64>> {
        if let Some(fv) = &self.partials.fv {
            return fv.clone();
        }
        fd_vec3(&|i, j| self.coord(i, j), self.nu, self.nv, Axis::V, 1, self.dv)
    }

    pub fn fuu_grid(&self) -> Vec<Vector3<f64>> {
        if let Some(fuu) = &self.partials.fuu {
            return fuu.clone();
        }
        if let Some(fu) = &self.partials.fu {
            return fd_vec3(&|i, j| fu[j * self.nu + i], self.nu, self.nv, Axis::U, 1, self.du);
        }
        fd_vec3(&|i, j| self.coord(i, j), self.nu, self.nv, Axis::U, 2, self.du)
    }

    /// Mixed partial, composed u then v.
    pub fn fuv_grid(&self) -> Vec<Vector3<f64>> {
        if let Some(fuv) = &self.partials.fuv {
            return fuv.clone();
        }
        let fu = self.fu_grid();
        fd_vec3(&|i, j| fu[j * self.nu + i], self.nu, self.nv, Axis::V, 1, self.dv)
    }

    /// Image of the patch under a rigid motion; partials map through the
    /// motion's constant coordinate Jacobian.
    pub fn map_motion(&self, g: &HeisenbergMotion) -> SurfacePatch {
        let points: Vec<H1Point> = self.points.iter().map(|&p| g.apply(p)).collect();
        let map = |src: &Option<Vec<Vector3<f64>>>| {
            src.as_ref().map(|grid| {
                grid.iter()
                    .zip(&self.points)
                    .map(|(vec, &p)| g.pushforward(&TangentVector::from_coord(p, *vec)).coord())
                    .collect()
            })
        };
        SurfacePatch {
            points,
            partials: PatchPartials {
                fu: map(&self.partials.fu),
                fv: map(&self.partials.fv),
                fuu: map(&self.partials.fuu),
                fuv: map(&self.partials.fuv),
            },
            ..*self
        }
    }
}

fn fd_vec3(
    sample: &dyn Fn(usize, usize) -> Vector3<f64>,
    nu: usize,
    nv: usize,
    axis: Axis,
    order: u8,
    h: f64,
) -> Vec<Vector3<f64>> {
    let n_axis = match axis {
        Axis::U => nu,
        Axis::V => nv,
    };
    let mut out = vec![Vector3::zeros(); nu * nv];
    for j in 0..nv {
        for i in 0..nu {
            let idx = match axis {
                Axis::U => i,
                Axis::V => j,
            };
            let f = |k: usize| match axis {
                Axis::U => sample(k, j),
                Axis::V => sample(i, k),
            };
            let value = match (order, idx) {
                (1, 0) => (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h),
                (1, k) if k == n_axis - 1 => {
                    (3.0 * f(n_axis - 1) - 4.0 * f(n_axis - 2) + f(n_axis - 3)) / (2.0 * h)
                }
                (1, k) => (f(k + 1) - f(k - 1)) / (2.0 * h),
                (2, 0) => (2.0 * f(0) - 5.0 * f(1) + 4.0 * f(2) - f(3)) / (h * h),
                (2, k) if k == n_axis - 1 => {
                    (2.0 * f(n_axis - 1) - 5.0 * f(n_axis - 2) + 4.0 * f(n_axis - 3)
                        - f(n_axis - 4))
                        / (h * h)
                }
                (2, k) => (f(k + 1) - 2.0 * f(k) + f(k - 1)) / (h * h),
                _ => unreachable!(),
            };
            out[j * nu + i] = value;
        }
    }
    out
}

/// Contact-form value of a coordinate vector at a base point.
fn theta_at(p: H1Point, v: &Vector3<f64>) -> f64 {
    v.z + p.x * v.y - p.y * v.x
}

/// Frame components of a coordinate vector at a base point.
fn frame_at(p: H1Point, v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.x, v.y, theta_at(p, v))
}

/// Unit characteristic directions over the whole grid, signs fixed by a
/// continuity sweep (u first, then v) from the patch corner. The seed sign
/// makes the first nonzero frame component positive, multiplied by
/// `orientation`.
pub fn characteristic_field(
    patch: &SurfacePatch,
    tol: Option<f64>,
    orientation: f64,
) -> Result<Vec<TangentVector>, SurfaceError> {
    let tol = tol.unwrap_or(DEFAULT_SINGULAR_TOL);
    let fu = patch.fu_grid();
    let fv = patch.fv_grid();
    let (nu, nv) = (patch.nu, patch.nv);
    let mut out: Vec<Option<TangentVector>> = vec![None; nu * nv];
    for j in 0..nv {
        for i in 0..nu {
            let p = patch.point(i, j);
            let (du_vec, dv_vec) = (fu[j * nu + i], fv[j * nu + i]);
            let (tu, tv) = (theta_at(p, &du_vec), theta_at(p, &dv_vec));
            if tu.abs() <= tol && tv.abs() <= tol {
                return Err(SurfaceError::Singular(i, j));
            }
            let w = du_vec * tv - dv_vec * tu;
            let wf = frame_at(p, &w);
            let norm = wf.xy().norm();
            if norm <= tol {
                return Err(SurfaceError::Singular(i, j));
            }
            let mut x = TangentVector::horizontal(p, wf.x / norm, wf.y / norm);
            let reference = if i > 0 {
                out[j * nu + i - 1]
            } else if j > 0 {
                out[(j - 1) * nu]
            } else {
                None
            };
            let flip = match reference {
                Some(prev) => x.frame().xy().dot(&prev.frame().xy()) < 0.0,
                None => {
                    let f = x.frame();
                    let lead = if f.x.abs() > 1e-12 { f.x } else { f.y };
                    lead * orientation < 0.0
                }
            };
            if flip {
                x = TangentVector::horizontal(p, -x.frame().x, -x.frame().y);
            }
            out[j * nu + i] = Some(x);
        }
    }
    Ok(out.into_iter().map(|x| x.unwrap()).collect())
}

/// Unit characteristic direction at a single cell (sign fixed by the same
/// sweep as [`characteristic_field`]).
pub fn characteristic_direction(
    patch: &SurfacePatch,
    i: usize,
    j: usize,
    tol: Option<f64>,
) -> Result<TangentVector, SurfaceError> {
    let field = characteristic_field(patch, tol, 1.0)?;
    Ok(field[j * patch.nu + i])
}

/// Per-condition outcome of the normal-parametrization check.
#[derive(Clone, Copy, Debug)]
pub struct NormalityReport {
    pub normal: bool,
    pub no_singular_points: bool,
    pub fu_spans_foliation: bool,
    pub fu_unit: bool,
    pub max_theta_fu: f64,
    pub max_unit_dev: f64,
    pub first_singular: Option<(usize, usize)>,
}

/// Check the three normal-coordinate conditions at tolerance `tol`.
pub fn is_normal_parametrization(patch: &SurfacePatch, tol: f64) -> NormalityReport {
    let fu = patch.fu_grid();
    let fv = patch.fv_grid();
    let (nu, nv) = (patch.nu, patch.nv);
    let mut max_theta_fu = 0.0_f64;
    let mut max_unit_dev = 0.0_f64;
    let mut first_singular = None;
    for j in 0..nv {
        for i in 0..nu {
            let p = patch.point(i, j);
            let tu = theta_at(p, &fu[j * nu + i]);
            let tv = theta_at(p, &fv[j * nu + i]);
            if tu.abs() <= tol && tv.abs() <= tol && first_singular.is_none() {
                first_singular = Some((i, j));
            }
            max_theta_fu = max_theta_fu.max(tu.abs());
            let f = frame_at(p, &fu[j * nu + i]);
            max_unit_dev = max_unit_dev.max((f.norm() - 1.0).abs());
        }
    }
    let no_singular_points = first_singular.is_none();
    let fu_spans_foliation = max_theta_fu <= tol;
    let fu_unit = max_unit_dev <= tol;
    NormalityReport {
        normal: no_singular_points && fu_spans_foliation && fu_unit,
        no_singular_points,
        fu_spans_foliation,
        fu_unit,
        max_theta_fu,
        max_unit_dev,
        first_singular,
    }
}

fn catmull_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

struct PatchInterp<'a> {
    patch: &'a SurfacePatch,
    fu: Vec<Vector3<f64>>,
    fv: Vec<Vector3<f64>>,
}

impl<'a> PatchInterp<'a> {
    fn new(patch: &'a SurfacePatch) -> Self {
        PatchInterp { patch, fu: patch.fu_grid(), fv: patch.fv_grid() }
    }

    fn inside(&self, u: f64, v: f64) -> bool {
        let p = self.patch;
        let (u1, v1) = (p.u_at(p.nu - 1), p.v_at(p.nv - 1));
        // tolerance well below one substep but above the flow's float drift,
        // so marginal landings on the boundary are kept
        let eps = 1e-3 * p.du.min(p.dv);
        u >= p.u0 - eps && u <= u1 + eps && v >= p.v0 - eps && v <= v1 + eps
    }

    /// Catmull-Rom interpolation of position and first partials. Stencil
    /// points falling one step outside the grid are quadratically
    /// extrapolated; plain index clamping would cost linear precision in the
    /// edge intervals.
    fn eval(&self, u: f64, v: f64) -> (H1Point, Vector3<f64>, Vector3<f64>) {
        let p = self.patch;
        let x = ((u - p.u0) / p.du).clamp(0.0, (p.nu - 1) as f64);
        let y = ((v - p.v0) / p.dv).clamp(0.0, (p.nv - 1) as f64);
        let i0 = (x.floor() as usize).min(p.nu - 2);
        let j0 = (y.floor() as usize).min(p.nv - 2);
        let tx = x - i0 as f64;
        let ty = y - j0 as f64;
        let wx = catmull_weights(tx);
        let wy = catmull_weights(ty);

        let fetch = |grid: &dyn Fn(usize, usize) -> Vector3<f64>, i: isize, j: isize| {
            let n_u = p.nu as isize;
            let n_v = p.nv as isize;
            let along_u = |jj: usize, ii: isize| -> Vector3<f64> {
                if ii < 0 {
                    grid(0, jj) * 3.0 - grid(1, jj) * 3.0 + grid(2, jj)
                } else if ii >= n_u {
                    grid(p.nu - 1, jj) * 3.0 - grid(p.nu - 2, jj) * 3.0 + grid(p.nu - 3, jj)
                } else {
                    grid(ii as usize, jj)
                }
            };
            if j < 0 {
                along_u(0, i) * 3.0 - along_u(1, i) * 3.0 + along_u(2, i)
            } else if j >= n_v {
                along_u(p.nv - 1, i) * 3.0 - along_u(p.nv - 2, i) * 3.0 + along_u(p.nv - 3, i)
            } else {
                along_u(j as usize, i)
            }
        };

        let points = |i: usize, j: usize| p.coord(i, j);
        let fu_grid = |i: usize, j: usize| self.fu[j * p.nu + i];
        let fv_grid = |i: usize, j: usize| self.fv[j * p.nu + i];
        let mut pos = Vector3::zeros();
        let mut fu = Vector3::zeros();
        let mut fv = Vector3::zeros();
        for (dj, &wyj) in wy.iter().enumerate() {
            let j = j0 as isize + dj as isize - 1;
            for (di, &wxi) in wx.iter().enumerate() {
                let i = i0 as isize + di as isize - 1;
                let w = wxi * wyj;
                pos += fetch(&points, i, j) * w;
                fu += fetch(&fu_grid, i, j) * w;
                fv += fetch(&fv_grid, i, j) * w;
            }
        }
        (H1Point::new(pos.x, pos.y, pos.z), fu, fv)
    }
}

/// Build normal coordinates by flowing along the unit characteristic field
/// from the first-column seed line. The output keeps the contiguous block of
/// rows whose flow stays inside the sampled region for the full `u` extent;
/// if fewer than five rows survive the flow has genuinely left the patch.
///
/// A patch that already passes [`is_normal_parametrization`] at `1e-10` is
/// returned unchanged.
pub fn normalize_patch(patch: &SurfacePatch, orientation: f64) -> Result<SurfacePatch, SurfaceError> {
    if is_normal_parametrization(patch, 1e-10).normal {
        return Ok(patch.clone());
    }
    let interp = PatchInterp::new(patch);
    let (nu, nv) = (patch.nu, patch.nv);
    let h = patch.du;
    let substeps = 4;
    let hs = h / substeps as f64;

    // direction of the characteristic flow in parameter space
    let dir = |u: f64, v: f64, prev: Option<(f64, f64)>| -> Result<(f64, f64), SurfaceError> {
        let (pt, fu, fv) = interp.eval(u, v);
        let (tu, tv) = (theta_at(pt, &fu), theta_at(pt, &fv));
        let w = fu * tv - fv * tu;
        let speed = frame_at(pt, &w).xy().norm();
        if speed < 1e-12 {
            return Err(SurfaceError::Singular(0, 0));
        }
        let mut a = tv / speed;
        let mut b = -tu / speed;
        let flip = match prev {
            Some((pa, pb)) => a * pa + b * pb < 0.0,
            None => {
                let wf = frame_at(pt, &w);
                let lead = if wf.x.abs() > 1e-12 { wf.x } else { wf.y };
                lead * orientation < 0.0
            }
        };
        if flip {
            a = -a;
            b = -b;
        }
        Ok((a, b))
    };

    let mut rows: Vec<Option<Vec<(H1Point, Vector3<f64>)>>> = Vec::with_capacity(nv);
    for j in 0..nv {
        let mut state = (patch.u0, patch.v_at(j));
        let mut prev = None;
        let mut row = Vec::with_capacity(nu);
        let mut ok = true;
        let record = |s: (f64, f64), prev: Option<(f64, f64)>| -> Result<(H1Point, Vector3<f64>, (f64, f64)), SurfaceError> {
            let d = dir(s.0, s.1, prev)?;
            let (pt, fu, fv) = interp.eval(s.0, s.1);
            let tangent = fu * d.0 + fv * d.1;
            Ok((pt, tangent, d))
        };
        match record(state, prev) {
            Ok((pt, tan, d)) => {
                row.push((pt, tan));
                prev = Some(d);
            }
            Err(_) => {
                rows.push(None);
                continue;
            }
        }
        'march: for _ in 1..nu {
            for _ in 0..substeps {
                // classical 4-stage step of the parameter-space flow
                let k1 = match dir(state.0, state.1, prev) {
                    Ok(d) => d,
                    Err(_) => {
                        ok = false;
                        break 'march;
                    }
                };
                let mid1 = (state.0 + 0.5 * hs * k1.0, state.1 + 0.5 * hs * k1.1);
                if !interp.inside(mid1.0, mid1.1) {
                    ok = false;
                    break 'march;
                }
                let k2 = dir(mid1.0, mid1.1, Some(k1)).map_err(|_| ()).unwrap_or(k1);
                let mid2 = (state.0 + 0.5 * hs * k2.0, state.1 + 0.5 * hs * k2.1);
                if !interp.inside(mid2.0, mid2.1) {
                    ok = false;
                    break 'march;
                }
                let k3 = dir(mid2.0, mid2.1, Some(k2)).map_err(|_| ()).unwrap_or(k2);
                let end = (state.0 + hs * k3.0, state.1 + hs * k3.1);
                if !interp.inside(end.0, end.1) {
                    ok = false;
                    break 'march;
                }
                let k4 = dir(end.0, end.1, Some(k3)).map_err(|_| ()).unwrap_or(k3);
                state = (
                    state.0 + hs / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                    state.1 + hs / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
                );
                if !interp.inside(state.0, state.1) {
                    ok = false;
                    break 'march;
                }
                prev = Some(k1);
            }
            match record(state, prev) {
                Ok((pt, tan, d)) => {
                    row.push((pt, tan));
                    prev = Some(d);
                }
                Err(_) => {
                    ok = false;
                    break 'march;
                }
            }
        }
        rows.push(if ok { Some(row) } else { None });
    }

    // keep the longest contiguous block of surviving rows
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for (j, row) in rows.iter().enumerate() {
        match (row.is_some(), start) {
            (true, None) => start = Some(j),
            (false, Some(s)) => {
                if best.map_or(true, |(bs, be)| j - s > be - bs) {
                    best = Some((s, j));
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if best.map_or(true, |(bs, be)| nv - s > be - bs) {
            best = Some((s, nv));
        }
    }
    let (j_lo, j_hi) = match best {
        Some((s, e)) if e - s >= 5 => (s, e),
        _ => {
            let row = rows.iter().position(|r| r.is_none()).unwrap_or(0);
            return Err(SurfaceError::FlowLeftPatch { row });
        }
    };

    let nv_out = j_hi - j_lo;
    let mut points = Vec::with_capacity(nu * nv_out);
    let mut fu_out = Vec::with_capacity(nu * nv_out);
    for row in rows[j_lo..j_hi].iter() {
        let row = row.as_ref().unwrap();
        for (pt, tan) in row {
            points.push(*pt);
            fu_out.push(*tan);
        }
    }
    SurfacePatch::new(
        0.0,
        h,
        nu,
        patch.v_at(j_lo),
        patch.dv,
        nv_out,
        points,
        PatchPartials { fu: Some(fu_out), ..Default::default() },
    )
}

/// The five coefficient fields of a normal parametrized surface.
#[derive(Clone, Debug)]
pub struct SurfaceCoefficients {
    pub u0: f64,
    pub v0: f64,
    pub a: GridField,
    pub b: GridField,
    pub c: GridField,
    pub l: GridField,
    pub m: GridField,
}

impl SurfaceCoefficients {
    pub fn nu(&self) -> usize {
        self.a.nu()
    }

    pub fn nv(&self) -> usize {
        self.a.nv()
    }

    pub fn du(&self) -> f64 {
        self.a.du()
    }

    pub fn dv(&self) -> f64 {
        self.a.dv()
    }

    /// Build from closures over `(u, v)`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fn(
        u0: f64,
        du: f64,
        nu: usize,
        v0: f64,
        dv: f64,
        nv: usize,
        f: impl Fn(f64, f64) -> (f64, f64, f64, f64, f64),
    ) -> Self {
        let eval = |pick: fn((f64, f64, f64, f64, f64)) -> f64| {
            GridField::from_fn(nu, nv, du, dv, |i, j| {
                pick(f(u0 + i as f64 * du, v0 + j as f64 * dv))
            })
        };
        SurfaceCoefficients {
            u0,
            v0,
            a: eval(|t| t.0),
            b: eval(|t| t.1),
            c: eval(|t| t.2),
            l: eval(|t| t.3),
            m: eval(|t| t.4),
        }
    }

    /// Singular-cell threshold: [`EPS_SING_REL`] times the median of |c|.
    pub fn eps_sing(&self) -> f64 {
        let mut mags: Vec<f64> = self.c.data().iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        EPS_SING_REL * mags[mags.len() / 2]
    }

    pub fn max_abs_difference(&self, other: &SurfaceCoefficients) -> f64 {
        let pairs = [
            (&self.a, &other.a),
            (&self.b, &other.b),
            (&self.c, &other.c),
            (&self.l, &other.l),
            (&self.m, &other.m),
        ];
        pairs
            .iter()
            .map(|(x, y)| x.zip_map(y, |p, q| p - q).max_abs().0)
            .fold(0.0, f64::max)
    }
}

/// Compute the coefficient fields of a normal patch. The parametrization is
/// verified first at tolerance `normality_tol`.
pub fn coefficients(
    patch: &SurfacePatch,
    normality_tol: f64,
) -> Result<SurfaceCoefficients, SurfaceError> {
    let report = is_normal_parametrization(patch, normality_tol);
    if !report.normal {
        return Err(SurfaceError::NotNormal {
            max_theta_fu: report.max_theta_fu,
            max_unit_dev: report.max_unit_dev,
        });
    }
    let fu = patch.fu_grid();
    let fv = patch.fv_grid();
    let fuu = patch.fuu_grid();
    let fuv = patch.fuv_grid();
    let (nu, nv) = (patch.nu, patch.nv);
    let mut grids = [
        GridField::zeros(nu, nv, patch.du, patch.dv),
        GridField::zeros(nu, nv, patch.du, patch.dv),
        GridField::zeros(nu, nv, patch.du, patch.dv),
        GridField::zeros(nu, nv, patch.du, patch.dv),
        GridField::zeros(nu, nv, patch.du, patch.dv),
    ];
    for j in 0..nv {
        for i in 0..nu {
            let p = patch.point(i, j);
            let idx = j * nu + i;
            let x = frame_at(p, &fu[idx]);
            let y = Vector3::new(-x.y, x.x, 0.0);
            let fv_f = frame_at(p, &fv[idx]);
            let fuu_f = frame_at(p, &fuu[idx]);
            let fuv_f = frame_at(p, &fuv[idx]);
            grids[0].set(i, j, fv_f.x * x.x + fv_f.y * x.y);
            grids[1].set(i, j, fv_f.dot(&y));
            grids[2].set(i, j, fv_f.z);
            grids[3].set(i, j, fuu_f.dot(&y));
            grids[4].set(i, j, fuv_f.dot(&y));
        }
    }
    let [a, b, c, l, m] = grids;
    SurfaceCoefficients { u0: patch.u0, v0: patch.v0, a, b, c, l, m }
        .validated()
}

impl SurfaceCoefficients {
    fn validated(self) -> Result<Self, SurfaceError> {
        let all = [&self.a, &self.b, &self.c, &self.l, &self.m];
        for g in all {
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(SurfaceError::DegenerateMetric(0, 0));
            }
        }
        Ok(self)
    }
}

/// Residual of one equation of a report.
#[derive(Clone, Debug)]
pub struct EquationResidual {
    pub name: &'static str,
    pub max_residual: f64,
    pub argmax_cell: (usize, usize),
}

/// Outcome of an integrability-style residual check. The pass criterion uses
/// interior cells (central differences); boundary cells are reported
/// separately since one-sided stencils are noisier.
#[derive(Clone, Debug)]
pub struct ResidualReport {
    pub pass: bool,
    pub tol: f64,
    pub max_residual: f64,
    pub argmax_cell: (usize, usize),
    pub boundary_max_residual: f64,
    pub per_equation: Vec<EquationResidual>,
    pub info_max_l: Option<f64>,
}

fn boundary_max(grid: &GridField) -> f64 {
    let (nu, nv) = (grid.nu(), grid.nv());
    let mut worst = 0.0_f64;
    for j in 0..nv {
        for i in 0..nu {
            if i == 0 || j == 0 || i == nu - 1 || j == nv - 1 {
                worst = worst.max(grid.get(i, j).abs());
            }
        }
    }
    worst
}

fn report_from_residuals(
    residuals: Vec<(&'static str, GridField)>,
    tol: f64,
    info_max_l: Option<f64>,
) -> ResidualReport {
    let mut per_equation = Vec::with_capacity(residuals.len());
    let mut max_residual = 0.0_f64;
    let mut argmax_cell = (1, 1);
    let mut boundary = 0.0_f64;
    for (name, grid) in &residuals {
        let (max_r, cell) = grid.max_abs_interior();
        per_equation.push(EquationResidual { name, max_residual: max_r, argmax_cell: cell });
        if max_r > max_residual {
            max_residual = max_r;
            argmax_cell = cell;
        }
        boundary = boundary.max(boundary_max(grid));
    }
    ResidualReport {
        pass: max_residual <= tol,
        tol,
        max_residual,
        argmax_cell,
        boundary_max_residual: boundary,
        per_equation,
        info_max_l,
    }
}

/// Residuals of the coefficient integrability system
/// `a_u - b l`, `b_u + a l - m`, `c_u - 2 b`, `l_v - m_u`.
pub fn check_integrability(coeffs: &SurfaceCoefficients, tol: f64) -> Result<ResidualReport, SurfaceError> {
    let a_u = fd_partial(&coeffs.a, Axis::U, 1)?;
    let b_u = fd_partial(&coeffs.b, Axis::U, 1)?;
    let c_u = fd_partial(&coeffs.c, Axis::U, 1)?;
    let l_v = fd_partial(&coeffs.l, Axis::V, 1)?;
    let m_u = fd_partial(&coeffs.m, Axis::U, 1)?;

    let bl = coeffs.b.zip_map(&coeffs.l, |b, l| b * l);
    let al = coeffs.a.zip_map(&coeffs.l, |a, l| a * l);
    let r1 = a_u.zip_map(&bl, |x, y| x - y);
    let r2 = b_u.zip_map(&al, |x, y| x + y).zip_map(&coeffs.m, |x, m| x - m);
    let r3 = c_u.zip_map(&coeffs.b, |x, b| x - 2.0 * b);
    let r4 = l_v.zip_map(&m_u, |x, y| x - y);
    Ok(report_from_residuals(
        vec![("a_u - b*l", r1), ("b_u + a*l - m", r2), ("c_u - 2*b", r3), ("l_v - m_u", r4)],
        tol,
        None,
    ))
}

/// The p-minimal specialization: `a_u = 0`, `b_uu = 0`, `c_u = 2 b`, and
/// `m = b_u`. The report also carries max |l|; the conditions certify
/// p-minimality only where `l` vanishes.
pub fn check_pminimal(coeffs: &SurfaceCoefficients, tol: f64) -> Result<ResidualReport, SurfaceError> {
    let a_u = fd_partial(&coeffs.a, Axis::U, 1)?;
    let b_uu = fd_partial(&coeffs.b, Axis::U, 2)?;
    let c_u = fd_partial(&coeffs.c, Axis::U, 1)?;
    let b_u = fd_partial(&coeffs.b, Axis::U, 1)?;
    let r3 = c_u.zip_map(&coeffs.b, |x, b| x - 2.0 * b);
    let r4 = coeffs.m.zip_map(&b_u, |m, x| m - x);
    let max_l = coeffs.l.max_abs().0;
    Ok(report_from_residuals(
        vec![("a_u", a_u), ("b_uu", b_uu), ("c_u - 2*b", r3), ("m - b_u", r4)],
        tol,
        Some(max_l),
    ))
}

/// Order of path integration for surface reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathOrder {
    /// u-line at the first v row, then v-fibers.
    UFirst,
    /// v-line at the first u column, then u-fibers.
    VFirst,
}

fn interp_row(grid: &GridField, x: f64, j: usize) -> f64 {
    let n = grid.nu();
    let t = (x / grid.du()).clamp(0.0, (n - 1) as f64);
    let i = (t.floor() as usize).min(n - 2);
    let w = t - i as f64;
    grid.get(i, j) * (1.0 - w) + grid.get(i + 1, j) * w
}

fn interp_col(grid: &GridField, i: usize, y: f64) -> f64 {
    let n = grid.nv();
    let t = (y / grid.dv()).clamp(0.0, (n - 1) as f64);
    let j = (t.floor() as usize).min(n - 2);
    let w = t - j as f64;
    grid.get(i, j) * (1.0 - w) + grid.get(i, j + 1) * w
}

/// Reconstruct a normal patch from coefficient fields by integrating the
/// frame system `M_u = M phi_u`, `M_v = M phi_v` with
/// `phi_u = (1, 0, 0; l)` and `phi_v = (a, b, c; m)`. Integrability is
/// checked first at `tol`. Returns the patch with the characteristic field
/// attached as its analytic `F_u`.
pub fn reconstruct_surface(
    coeffs: &SurfaceCoefficients,
    initial: &OrientedFrame,
    tol: f64,
    order: PathOrder,
) -> Result<SurfacePatch, SurfaceError> {
    let report = check_integrability(coeffs, tol)?;
    if !report.pass {
        return Err(SurfaceError::IntegrabilityViolation {
            max_residual: report.max_residual,
            argmax: report.argmax_cell,
        });
    }
    let (nu, nv) = (coeffs.nu(), coeffs.nv());
    let (du, dv) = (coeffs.du(), coeffs.dv());
    let mut frames = vec![Matrix4::identity(); nu * nv];

    match order {
        PathOrder::UFirst => {
            let gen_u = |u: f64| MaurerCartanValue::new(1.0, 0.0, 0.0, interp_row(&coeffs.l, u, 0)).to_matrix();
            let base_row = integrate_group_ode(
                &initial.to_matrix(),
                gen_u,
                0.0,
                (nu - 1) as f64 * du,
                nu - 1,
                1,
            )?;
            for (i, m) in base_row.iter().enumerate() {
                frames[i] = *m;
            }
            for i in 0..nu {
                let gen_v = |v: f64| {
                    MaurerCartanValue::new(
                        interp_col(&coeffs.a, i, v),
                        interp_col(&coeffs.b, i, v),
                        interp_col(&coeffs.c, i, v),
                        interp_col(&coeffs.m, i, v),
                    )
                    .to_matrix()
                };
                let fiber = integrate_group_ode(
                    &frames[i],
                    gen_v,
                    0.0,
                    (nv - 1) as f64 * dv,
                    nv - 1,
                    1,
                )?;
                for (j, m) in fiber.iter().enumerate() {
                    frames[j * nu + i] = *m;
                }
            }
        }
        PathOrder::VFirst => {
            let gen_v = |v: f64| {
                MaurerCartanValue::new(
                    interp_col(&coeffs.a, 0, v),
                    interp_col(&coeffs.b, 0, v),
                    interp_col(&coeffs.c, 0, v),
                    interp_col(&coeffs.m, 0, v),
                )
                .to_matrix()
            };
            let base_col = integrate_group_ode(
                &initial.to_matrix(),
                gen_v,
                0.0,
                (nv - 1) as f64 * dv,
                nv - 1,
                1,
            )?;
            for j in 0..nv {
                let gen_u = |u: f64| {
                    MaurerCartanValue::new(1.0, 0.0, 0.0, interp_row(&coeffs.l, u, j)).to_matrix()
                };
                let line = integrate_group_ode(
                    &base_col[j],
                    gen_u,
                    0.0,
                    (nu - 1) as f64 * du,
                    nu - 1,
                    1,
                )?;
                for (i, m) in line.iter().enumerate() {
                    frames[j * nu + i] = *m;
                }
            }
        }
    }

    let mut points = Vec::with_capacity(nu * nv);
    let mut fu = Vec::with_capacity(nu * nv);
    for m in &frames {
        points.push(H1Point::new(m[(1, 0)], m[(2, 0)], m[(3, 0)]));
        fu.push(Vector3::new(m[(1, 1)], m[(2, 1)], m[(3, 1)]));
    }
    SurfacePatch::new(
        coeffs.u0,
        du,
        nu,
        coeffs.v0,
        dv,
        nv,
        points,
        PatchPartials { fu: Some(fu), ..Default::default() },
    )
}

/// A normal-coordinate change `u~ = sign*u + g(v)`, `v~ = h(v)` with
/// `h'(v) != 0`.
pub struct Reparametrization<'a> {
    pub sign: f64,
    pub g: &'a dyn Fn(f64) -> f64,
    pub dg: &'a dyn Fn(f64) -> f64,
    pub h: &'a dyn Fn(f64) -> f64,
    pub dh: &'a dyn Fn(f64) -> f64,
}

/// Transformation laws of the coefficients under a normal-coordinate change:
/// solve `a = sign*(g' + h' a~)`, `b = sign*h' b~`, `c = h' c~`,
/// `l = sign*l~`, `m = g' l~ + h' m~` for the tilde fields. Values are
/// sampled at the image points of the original grid.
pub fn transform_coefficients(
    coeffs: &SurfaceCoefficients,
    reparam: &Reparametrization,
) -> Result<SurfaceCoefficients, SurfaceError> {
    assert!(
        reparam.sign == 1.0 || reparam.sign == -1.0,
        "orientation sign must be +1 or -1"
    );
    let (nu, nv) = (coeffs.nu(), coeffs.nv());
    let s = reparam.sign;
    for j in 0..nv {
        let v = coeffs.v0 + j as f64 * coeffs.dv();
        if (reparam.dh)(v).abs() < 1e-12 {
            return Err(SurfaceError::DegenerateReparam { at_v: v });
        }
    }
    let build = |f: &dyn Fn(usize, usize, f64, f64) -> f64| {
        GridField::from_fn(nu, nv, coeffs.du(), coeffs.dv(), |i, j| {
            let v = coeffs.v0 + j as f64 * coeffs.dv();
            f(i, j, (reparam.dg)(v), (reparam.dh)(v))
        })
    };
    let a = build(&|i, j, dg, dh| (s * coeffs.a.get(i, j) - dg) / dh);
    let b = build(&|i, j, _, dh| s * coeffs.b.get(i, j) / dh);
    let c = build(&|i, j, _, dh| coeffs.c.get(i, j) / dh);
    let l = build(&|i, j, _, _| s * coeffs.l.get(i, j));
    let m = build(&|i, j, dg, dh| (coeffs.m.get(i, j) - dg * s * coeffs.l.get(i, j)) / dh);
    SurfaceCoefficients { u0: coeffs.u0, v0: coeffs.v0, a, b, c, l, m }.validated()
}

/// p-variation `alpha = b / c`; cells with `|c|` below the singular
/// threshold are masked.
pub fn p_variation(coeffs: &SurfaceCoefficients) -> MaskedGrid {
    let eps = coeffs.eps_sing();
    let (nu, nv) = (coeffs.nu(), coeffs.nv());
    let mut values = GridField::zeros(nu, nv, coeffs.du(), coeffs.dv());
    let mut valid = vec![true; nu * nv];
    for j in 0..nv {
        for i in 0..nu {
            let c = coeffs.c.get(i, j);
            if c.abs() > eps {
                values.set(i, j, coeffs.b.get(i, j) / c);
            } else {
                valid[j * nu + i] = false;
            }
        }
    }
    MaskedGrid { values, valid }
}

/// Components of the induced metric `E du^2 + 2 F du dv + G dv^2`.
#[derive(Clone, Debug)]
pub struct MetricPatch {
    pub e: GridField,
    pub f: GridField,
    pub g: GridField,
}

impl MetricPatch {
    pub fn nu(&self) -> usize {
        self.e.nu()
    }

    pub fn nv(&self) -> usize {
        self.e.nv()
    }

    pub fn max_abs_difference(&self, other: &MetricPatch) -> f64 {
        [(&self.e, &other.e), (&self.f, &other.f), (&self.g, &other.g)]
            .iter()
            .map(|(x, y)| x.zip_map(y, |p, q| p - q).max_abs().0)
            .fold(0.0, f64::max)
    }
}

/// Induced metric of a normal parametrization:
/// `E = 1`, `F = a`, `G = a^2 + b^2 + c^2`.
pub fn induced_metric(coeffs: &SurfaceCoefficients) -> MetricPatch {
    let e = coeffs.a.map(|_| 1.0);
    let f = coeffs.a.clone();
    let g = coeffs
        .a
        .zip_map(&coeffs.b, |a, b| a * a + b * b)
        .zip_map(&coeffs.c, |x, c| x + c * c);
    MetricPatch { e, f, g }
}

/// Derivatives of a grid field along the tangent frame: `e1 f = f_u` and
/// `e_Sigma f = (f_v - a f_u) / (c sqrt(1+alpha^2))`. Singular-adjacent
/// cells are masked.
pub fn directional_derivatives(
    field: &GridField,
    coeffs: &SurfaceCoefficients,
) -> Result<(GridField, MaskedGrid), SurfaceError> {
    let f_u = fd_partial(field, Axis::U, 1)?;
    let f_v = fd_partial(field, Axis::V, 1)?;
    let eps = coeffs.eps_sing();
    let (nu, nv) = (coeffs.nu(), coeffs.nv());
    let mut esig = GridField::zeros(nu, nv, coeffs.du(), coeffs.dv());
    let mut valid = vec![true; nu * nv];
    for j in 0..nv {
        for i in 0..nu {
            let c = coeffs.c.get(i, j);
            if c.abs() <= eps {
                valid[j * nu + i] = false;
                continue;
            }
            let alpha = coeffs.b.get(i, j) / c;
            let denom = c * (1.0 + alpha * alpha).sqrt();
            esig.set(
                i,
                j,
                (f_v.get(i, j) - coeffs.a.get(i, j) * f_u.get(i, j)) / denom,
            );
        }
    }
    Ok((f_u, MaskedGrid { values: esig, valid }))
}

/// Gaussian curvature of the induced metric from the invariant data
/// `(alpha, l)`:
///
/// ```text
/// K = -[(e1 a)^2 + 2(1+a^2)(e1 a) + 4 a^2 (1+a^2) - l (eS a) sqrt(1+a^2)]
///     / (1+a^2)^2      (a = alpha)
/// ```
///
/// in the classical sign convention (flat plane and vertical cylinder give
/// zero, round-sphere metrics give +1).
pub fn gaussian_curvature_formula(
    alpha: &MaskedGrid,
    l: &GridField,
    coeffs: &SurfaceCoefficients,
) -> Result<MaskedGrid, SurfaceError> {
    let (e1a, esiga) = directional_derivatives(&alpha.values, coeffs)?;
    let (nu, nv) = (coeffs.nu(), coeffs.nv());
    let mut values = GridField::zeros(nu, nv, coeffs.du(), coeffs.dv());
    let mut valid = vec![true; nu * nv];
    let rows: Vec<Vec<(f64, bool)>> = (0..nv)
        .into_par_iter()
        .map(|j| {
            (0..nu)
                .map(|i| {
                    if !alpha.is_valid(i, j) || !esiga.is_valid(i, j) {
                        return (0.0, false);
                    }
                    let a = alpha.values.get(i, j);
                    let da = e1a.get(i, j);
                    let dsa = esiga.values.get(i, j);
                    let w = 1.0 + a * a;
                    let bracket =
                        da * da + 2.0 * w * da + 4.0 * a * a * w - l.get(i, j) * dsa * w.sqrt();
                    (-bracket / (w * w), true)
                })
                .collect()
        })
        .collect();
    for (j, row) in rows.into_iter().enumerate() {
        for (i, (val, ok)) in row.into_iter().enumerate() {
            values.set(i, j, val);
            valid[j * nu + i] = ok;
        }
    }
    Ok(MaskedGrid { values, valid })
}

/// Independent oracle: Gaussian curvature of a 2D metric `(E, F, G)` by the
/// classical determinant (Brioschi) formula, all derivatives by finite
/// differences.
pub fn gaussian_curvature_reference(metric: &MetricPatch) -> Result<GridField, SurfaceError> {
    let (nu, nv) = (metric.nu(), metric.nv());
    for j in 0..nv {
        for i in 0..nu {
            let (e, f, g) = (metric.e.get(i, j), metric.f.get(i, j), metric.g.get(i, j));
            if e <= 0.0 || e * g - f * f <= 0.0 {
                return Err(SurfaceError::DegenerateMetric(i, j));
            }
        }
    }
    let e_u = fd_partial(&metric.e, Axis::U, 1)?;
    let e_v = fd_partial(&metric.e, Axis::V, 1)?;
    let e_vv = fd_partial(&metric.e, Axis::V, 2)?;
    let f_u = fd_partial(&metric.f, Axis::U, 1)?;
    let f_v = fd_partial(&metric.f, Axis::V, 1)?;
    let f_uv = fd_partial(&f_u, Axis::V, 1)?;
    let g_u = fd_partial(&metric.g, Axis::U, 1)?;
    let g_v = fd_partial(&metric.g, Axis::V, 1)?;
    let g_uu = fd_partial(&metric.g, Axis::U, 2)?;

    let mut out = GridField::zeros(nu, nv, metric.e.du(), metric.e.dv());
    let rows: Vec<Vec<f64>> = (0..nv)
        .into_par_iter()
        .map(|j| {
            (0..nu)
                .map(|i| {
                    let (e, f, g) = (metric.e.get(i, j), metric.f.get(i, j), metric.g.get(i, j));
                    let m1 = nalgebra::Matrix3::new(
                        -0.5 * e_vv.get(i, j) + f_uv.get(i, j) - 0.5 * g_uu.get(i, j),
                        0.5 * e_u.get(i, j),
                        f_u.get(i, j) - 0.5 * e_v.get(i, j),
                        f_v.get(i, j) - 0.5 * g_u.get(i, j),
                        e,
                        f,
                        0.5 * g_v.get(i, j),
                        f,
                        g,
                    );
                    let m2 = nalgebra::Matrix3::new(
                        0.0,
                        0.5 * e_v.get(i, j),
                        0.5 * g_u.get(i, j),
                        0.5 * e_v.get(i, j),
                        e,
                        f,
                        0.5 * g_u.get(i, j),
                        f,
                        g,
                    );
                    let den = e * g - f * f;
                    (m1.determinant() - m2.determinant()) / (den * den)
                })
                .collect()
        })
        .collect();
    for (j, row) in rows.into_iter().enumerate() {
        for (i, val) in row.into_iter().enumerate() {
            out.set(i, j, val);
        }
    }
    Ok(out)
}

/// Residual of the Codazzi-like relation
/// `eS l = [e1 e1 a + 6 a (e1 a) + 4 a^3 + a l^2] / sqrt(1+a^2)`.
pub fn check_codazzi(
    alpha: &MaskedGrid,
    l: &GridField,
    coeffs: &SurfaceCoefficients,
    tol: f64,
) -> Result<ResidualReport, SurfaceError> {
    let (_, esig_l) = directional_derivatives(l, coeffs)?;
    let e1a = fd_partial(&alpha.values, Axis::U, 1)?;
    let e1e1a = fd_partial(&alpha.values, Axis::U, 2)?;
    let (nu, nv) = (coeffs.nu(), coeffs.nv());
    let mut residual = GridField::zeros(nu, nv, coeffs.du(), coeffs.dv());
    for j in 0..nv {
        for i in 0..nu {
            if !alpha.is_valid(i, j) || !esig_l.is_valid(i, j) {
                continue;
            }
            let a = alpha.values.get(i, j);
            let lv = l.get(i, j);
            let rhs = (e1e1a.get(i, j) + 6.0 * a * e1a.get(i, j) + 4.0 * a * a * a + a * lv * lv)
                / (1.0 + a * a).sqrt();
            residual.set(i, j, esig_l.values.get(i, j) - rhs);
        }
    }
    Ok(report_from_residuals(vec![("codazzi", residual)], tol, None))
}

/// Residual of the full integrability relation tying `alpha`, `l`, and the
/// (classical-sign) Gaussian curvature `K`:
///
/// ```text
/// (1+a^2)^(3/2) (eS l) = (1+a^2)(e1 e1 a) - a (e1 a)^2 + 4 a (1+a^2)(e1 a)
///                        - a (1+a^2)^2 K + a l sqrt(1+a^2) (eS a)
///                        + a (1+a^2) l^2
/// ```
pub fn check_surface_integrability(
    alpha: &MaskedGrid,
    l: &GridField,
    k: &GridField,
    coeffs: &SurfaceCoefficients,
    tol: f64,
) -> Result<ResidualReport, SurfaceError> {
    let (_, esig_l) = directional_derivatives(l, coeffs)?;
    let (e1a, esiga) = directional_derivatives(&alpha.values, coeffs)?;
    let e1e1a = fd_partial(&alpha.values, Axis::U, 2)?;
    let (nu, nv) = (coeffs.nu(), coeffs.nv());
    let mut residual = GridField::zeros(nu, nv, coeffs.du(), coeffs.dv());
    for j in 0..nv {
        for i in 0..nu {
            if !alpha.is_valid(i, j) || !esig_l.is_valid(i, j) || !esiga.is_valid(i, j) {
                continue;
            }
            let a = alpha.values.get(i, j);
            let lv = l.get(i, j);
            let w = 1.0 + a * a;
            let da = e1a.get(i, j);
            let lhs = w.powf(1.5) * esig_l.values.get(i, j);
            let rhs = w * e1e1a.get(i, j) - a * da * da + 4.0 * a * w * da
                - a * w * w * k.get(i, j)
                + a * lv * w.sqrt() * esiga.values.get(i, j)
                + a * w * lv * lv;
            residual.set(i, j, lhs - rhs);
        }
    }
    Ok(report_from_residuals(vec![("surface integrability", residual)], tol, None))
}

/// The Euler-density integrand (the Gaussian curvature) and the patch total
/// against the induced area form `c sqrt(1+alpha^2) du dv`. Totals over
/// closed surfaces are refused; only nonsingular patch integrals are
/// offered.
pub fn euler_integrand(
    alpha: &MaskedGrid,
    l: &GridField,
    coeffs: &SurfaceCoefficients,
) -> Result<MaskedGrid, SurfaceError> {
    gaussian_curvature_formula(alpha, l, coeffs)
}

/// Integrate `integrand` against the induced area form over the patch with
/// the composite Simpson rule. Any masked (singular-adjacent) cell aborts
/// the integral.
pub fn patch_total(
    integrand: &MaskedGrid,
    coeffs: &SurfaceCoefficients,
) -> Result<f64, SurfaceError> {
    let (nu, nv) = (coeffs.nu(), coeffs.nv());
    if let Some(idx) = integrand.valid.iter().position(|&b| !b) {
        return Err(SurfaceError::SingularCell(idx % nu, idx / nu));
    }
    let alpha = p_variation(coeffs);
    let mut row_totals = Vec::with_capacity(nv);
    for j in 0..nv {
        let mut row = Vec::with_capacity(nu);
        for i in 0..nu {
            let a = alpha.values.get(i, j);
            let density = coeffs.c.get(i, j) * (1.0 + a * a).sqrt();
            row.push(integrand.values.get(i, j) * density);
        }
        row_totals.push(simpson_integrate(&row, coeffs.du())?);
    }
    Ok(simpson_integrate(&row_totals, coeffs.dv())?)
}

/// Area of the patch in the induced metric.
pub fn patch_area(coeffs: &SurfaceCoefficients) -> Result<f64, SurfaceError> {
    let alpha = p_variation(coeffs);
    let ones = MaskedGrid { values: alpha.values.map(|_| 1.0), valid: alpha.valid.clone() };
    patch_total(&ones, coeffs)
}

/// An orthonormal coframe for the induced metric, as `(du, dv)` coefficient
/// grids: `w1 = w1_du du + w1_dv dv`, `w2 = w2_du du + w2_dv dv`.
#[derive(Clone, Debug)]
pub struct Coframe {
    pub w1_du: GridField,
    pub w1_dv: GridField,
    pub w2_du: GridField,
    pub w2_dv: GridField,
}

impl Coframe {
    /// Orthonormal coframe of a normal parametrization:
    /// `w1 = du + a dv`, `w2 = c sqrt(1+alpha^2) dv`.
    pub fn from_coefficients(coeffs: &SurfaceCoefficients) -> Coframe {
        let alpha = p_variation(coeffs);
        let w2_dv = coeffs
            .c
            .zip_map(&alpha.values, |c, a| c * (1.0 + a * a).sqrt());
        Coframe {
            w1_du: coeffs.a.map(|_| 1.0),
            w1_dv: coeffs.a.clone(),
            w2_du: coeffs.a.map(|_| 0.0),
            w2_dv,
        }
    }

    /// Area density `w1 ^ w2` in `du ^ dv` units.
    pub fn density(&self, i: usize, j: usize) -> f64 {
        self.w1_du.get(i, j) * self.w2_dv.get(i, j) - self.w1_dv.get(i, j) * self.w2_du.get(i, j)
    }

    pub fn nu(&self) -> usize {
        self.w1_du.nu()
    }

    pub fn nv(&self) -> usize {
        self.w1_du.nv()
    }

    /// Metric components reproduced by the coframe,
    /// `g = w1 (x) w1 + w2 (x) w2`.
    pub fn metric(&self) -> MetricPatch {
        let e = self
            .w1_du
            .zip_map(&self.w2_du, |p, r| p * p + r * r);
        let f = self
            .w1_du
            .zip_map(&self.w1_dv, |p, q| p * q)
            .zip_map(&self.w2_du.zip_map(&self.w2_dv, |r, s| r * s), |x, y| x + y);
        let g = self
            .w1_dv
            .zip_map(&self.w2_dv, |q, s| q * q + s * s);
        MetricPatch { e, f, g }
    }

    fn coarsen(&self) -> Coframe {
        Coframe {
            w1_du: self.w1_du.coarsen(),
            w1_dv: self.w1_dv.coarsen(),
            w2_du: self.w2_du.coarsen(),
            w2_dv: self.w2_dv.coarsen(),
        }
    }
}

/// Levi-Civita connection form of an orthonormal coframe, solved from the
/// first structure equations; returned in `(du, dv)` coefficients.
pub fn structure_connection(coframe: &Coframe) -> Result<(GridField, GridField), SurfaceError> {
    let (nu, nv) = (coframe.nu(), coframe.nv());
    let dw1 = fd_partial(&coframe.w1_dv, Axis::U, 1)?
        .zip_map(&fd_partial(&coframe.w1_du, Axis::V, 1)?, |a, b| a - b);
    let dw2 = fd_partial(&coframe.w2_dv, Axis::U, 1)?
        .zip_map(&fd_partial(&coframe.w2_du, Axis::V, 1)?, |a, b| a - b);
    let mut p_grid = GridField::zeros(nu, nv, coframe.w1_du.du(), coframe.w1_du.dv());
    let mut q_grid = GridField::zeros(nu, nv, coframe.w1_du.du(), coframe.w1_du.dv());
    for j in 0..nv {
        for i in 0..nu {
            let (p, q) = (coframe.w1_du.get(i, j), coframe.w1_dv.get(i, j));
            let (r, s) = (coframe.w2_du.get(i, j), coframe.w2_dv.get(i, j));
            // dw1 = conn ^ w2, dw2 = -conn ^ w1 for conn = P du + Q dv
            //   P s - Q r = dw1 coefficient
            //   Q p - P q = dw2 coefficient
            let det = s * p - r * q;
            if det.abs() < 1e-14 {
                return Err(SurfaceError::DegenerateMetric(i, j));
            }
            let rhs1 = dw1.get(i, j);
            let rhs2 = dw2.get(i, j);
            let pp = (rhs1 * p - (-r) * rhs2) / det;
            let qq = (s * rhs2 - rhs1 * (-q)) / det;
            p_grid.set(i, j, pp);
            q_grid.set(i, j, qq);
        }
    }
    Ok((p_grid, q_grid))
}

/// Gaussian curvature from a coframe via the connection form,
/// `K = -(d conn) / (w1 ^ w2)`, classical sign.
pub fn gaussian_curvature_from_coframe(coframe: &Coframe) -> Result<GridField, SurfaceError> {
    let (p, q) = structure_connection(coframe)?;
    let dconn = fd_partial(&q, Axis::U, 1)?.zip_map(&fd_partial(&p, Axis::V, 1)?, |a, b| a - b);
    let (nu, nv) = (coframe.nu(), coframe.nv());
    let mut out = GridField::zeros(nu, nv, p.du(), p.dv());
    for j in 0..nv {
        for i in 0..nu {
            out.set(i, j, -dconn.get(i, j) / coframe.density(i, j));
        }
    }
    Ok(out)
}

/// Both displays of the ambient connection form and the coframe connection,
/// in coframe components, together with the intermediate coefficients.
#[derive(Clone, Debug)]
pub struct ConnectionForms {
    /// First display: built from the supplied coframe connection.
    pub omega12_first: (GridField, GridField),
    /// Second display: `l w1 + (2 alpha^2 + e1 alpha)/sqrt(1+alpha^2) w2`.
    pub omega12_second: (GridField, GridField),
    /// Coframe connection rebuilt from `(alpha, l)` alone.
    pub omega_hat12_formula: (GridField, GridField),
    /// Intermediates `D = l/(1+alpha^2)`, `A = 2 alpha/(1+alpha^2)`,
    /// `B = l alpha / sqrt(1+alpha^2)`.
    pub d_coef: GridField,
    pub a_coef: GridField,
    pub b_coef: GridField,
}

/// Assemble the connection forms from the invariant data. `omega_hat_12` is
/// the coframe connection in coframe components (for instance from
/// [`structure_connection`] converted by the coframe basis).
pub fn connection_forms(
    alpha: &GridField,
    l: &GridField,
    e1_alpha: &GridField,
    omega_hat_12: &(GridField, GridField),
) -> ConnectionForms {
    let w = |a: f64| 1.0 + a * a;
    let first_1 = alpha.zip_map(&omega_hat_12.0, |a, h1| a / w(a).sqrt() * h1).zip_map(
        &l.zip_map(alpha, |lv, a| lv / w(a)),
        |x, y| x + y,
    );
    let first_2 = alpha
        .zip_map(&omega_hat_12.1, |a, h2| a / w(a).sqrt() * h2)
        .zip_map(&e1_alpha.zip_map(alpha, |da, a| da / w(a).powf(1.5)), |x, y| x + y);
    let second_1 = l.clone();
    let second_2 = alpha.zip_map(e1_alpha, |a, da| (2.0 * a * a + da) / w(a).sqrt());
    let hat_1 = l.zip_map(alpha, |lv, a| lv * a / w(a).sqrt());
    let hat_2 = alpha.zip_map(e1_alpha, |a, da| 2.0 * a + a * da / w(a));
    let d_coef = l.zip_map(alpha, |lv, a| lv / w(a));
    let a_coef = alpha.map(|a| 2.0 * a / w(a));
    let b_coef = l.zip_map(alpha, |lv, a| lv * a / w(a).sqrt());
    ConnectionForms {
        omega12_first: (first_1, first_2),
        omega12_second: (second_1, second_2),
        omega_hat12_formula: (hat_1, hat_2),
        d_coef,
        a_coef,
        b_coef,
    }
}

/// The assembled invariants of a normal patch: p-variation, p-mean
/// curvature, Gaussian curvature (formula route), the orthonormal coframe,
/// and the connection coefficients in the coframe basis.
#[derive(Clone, Debug)]
pub struct SurfaceInvariants {
    pub alpha: MaskedGrid,
    pub l: GridField,
    pub k_formula: MaskedGrid,
    pub coframe: Coframe,
    pub omega12: (GridField, GridField),
    pub omega_hat12: (GridField, GridField),
}

/// Compute the complete invariant package from coefficient fields.
pub fn surface_invariants(coeffs: &SurfaceCoefficients) -> Result<SurfaceInvariants, SurfaceError> {
    let alpha = p_variation(coeffs);
    let k_formula = gaussian_curvature_formula(&alpha, &coeffs.l, coeffs)?;
    let coframe = Coframe::from_coefficients(coeffs);
    let (e1a, _) = directional_derivatives(&alpha.values, coeffs)?;
    let forms = connection_forms(&alpha.values, &coeffs.l, &e1a, &(
        GridField::zeros(coeffs.nu(), coeffs.nv(), coeffs.du(), coeffs.dv()),
        GridField::zeros(coeffs.nu(), coeffs.nv(), coeffs.du(), coeffs.dv()),
    ));
    Ok(SurfaceInvariants {
        alpha,
        l: coeffs.l.clone(),
        k_formula,
        coframe,
        omega12: forms.omega12_second,
        omega_hat12: forms.omega_hat12_formula,
    })
}

fn dual_frame_derivative(
    field: &GridField,
    coframe: &Coframe,
) -> Result<(GridField, GridField), SurfaceError> {
    let f_u = fd_partial(field, Axis::U, 1)?;
    let f_v = fd_partial(field, Axis::V, 1)?;
    let (nu, nv) = (coframe.nu(), coframe.nv());
    let mut e1f = GridField::zeros(nu, nv, field.du(), field.dv());
    let mut e2f = GridField::zeros(nu, nv, field.du(), field.dv());
    for j in 0..nv {
        for i in 0..nu {
            let (p, q) = (coframe.w1_du.get(i, j), coframe.w1_dv.get(i, j));
            let (r, s) = (coframe.w2_du.get(i, j), coframe.w2_dv.get(i, j));
            let det = p * s - q * r;
            if det.abs() < 1e-14 {
                return Err(SurfaceError::DegenerateMetric(i, j));
            }
            // dual frame: e1 = (s d_u - r d_v)/det, e2 = (-q d_u + p d_v)/det
            e1f.set(i, j, (s * f_u.get(i, j) - r * f_v.get(i, j)) / det);
            e2f.set(i, j, (-q * f_u.get(i, j) + p * f_v.get(i, j)) / det);
        }
    }
    Ok((e1f, e2f))
}

/// Residual of the invariant integrability relation for coframe data, with
/// all derivatives taken along the coframe's dual frame. Used as the
/// pre-check of [`reconstruct_from_invariants`].
pub fn invariants_integrability_residual(
    coframe: &Coframe,
    alpha: &GridField,
    l: &GridField,
) -> Result<GridField, SurfaceError> {
    let k = gaussian_curvature_from_coframe(coframe)?;
    let (e1a, esiga) = dual_frame_derivative(alpha, coframe)?;
    let (e1e1a, _) = dual_frame_derivative(&e1a, coframe)?;
    let (_, esigl) = dual_frame_derivative(l, coframe)?;
    let (nu, nv) = (coframe.nu(), coframe.nv());
    let mut residual = GridField::zeros(nu, nv, alpha.du(), alpha.dv());
    for j in 0..nv {
        for i in 0..nu {
            let a = alpha.get(i, j);
            let lv = l.get(i, j);
            let w = 1.0 + a * a;
            let lhs = w.powf(1.5) * esigl.get(i, j);
            let rhs = w * e1e1a.get(i, j) - a * e1a.get(i, j) * e1a.get(i, j)
                + 4.0 * a * w * e1a.get(i, j)
                - a * w * w * k.get(i, j)
                + a * lv * w.sqrt() * esiga.get(i, j)
                + a * w * lv * lv;
            residual.set(i, j, lhs - rhs);
        }
    }
    Ok(residual)
}

/// Reconstruct an embedding from a complete invariant set: an orthonormal
/// coframe for the metric, the p-variation, and the p-mean curvature. The
/// integrability pre-check compares the residual against 50x an estimate of
/// its own finite-difference truncation (by grid coarsening).
pub fn reconstruct_from_invariants(
    coframe: &Coframe,
    alpha: &GridField,
    l: &GridField,
    initial: &OrientedFrame,
    order: PathOrder,
) -> Result<SurfacePatch, SurfaceError> {
    let residual = invariants_integrability_residual(coframe, alpha, l)?;
    let coarse = invariants_integrability_residual(
        &coframe.coarsen(),
        &alpha.coarsen(),
        &l.coarsen(),
    )?;
    let (fine_max, fine_cell) = residual.max_abs_interior();
    let mut diff = 0.0_f64;
    for j in 1..coarse.nu() - 1 {
        for i in 1..coarse.nv() - 1 {
            diff = diff.max((coarse.get(i, j) - residual.get(2 * i, 2 * j)).abs());
        }
    }
    let trunc_estimate = diff / 3.0;
    let threshold = (50.0 * trunc_estimate).max(1e-12);
    if fine_max > threshold {
        return Err(SurfaceError::IntegrabilityViolation {
            max_residual: fine_max,
            argmax: fine_cell,
        });
    }

    let (conn_p, conn_q) = structure_connection(coframe)?;
    let (e1a, _) = dual_frame_derivative(alpha, coframe)?;
    let (nu, nv) = (coframe.nu(), coframe.nv());
    let (du, dv) = (alpha.du(), alpha.dv());

    // Maurer-Cartan coefficients on d/du and d/dv per cell
    let mc_grids = |pick_du: bool| -> [GridField; 4] {
        let mut w1 = GridField::zeros(nu, nv, du, dv);
        let mut w2 = GridField::zeros(nu, nv, du, dv);
        let mut w3 = GridField::zeros(nu, nv, du, dv);
        let mut w12 = GridField::zeros(nu, nv, du, dv);
        for j in 0..nv {
            for i in 0..nu {
                let a = alpha.get(i, j);
                let wfac = (1.0 + a * a).sqrt();
                let (hat1, hat2, conn) = if pick_du {
                    (coframe.w1_du.get(i, j), coframe.w2_du.get(i, j), conn_p.get(i, j))
                } else {
                    (coframe.w1_dv.get(i, j), coframe.w2_dv.get(i, j), conn_q.get(i, j))
                };
                // omega12 = alpha/sqrt(1+a^2) hat-conn + l/(1+a^2) w1
                //           + e1(alpha)/(1+a^2)^(3/2) w2
                let om12 = a / wfac * conn
                    + l.get(i, j) / (wfac * wfac) * hat1
                    + e1a.get(i, j) / (wfac * wfac * wfac) * hat2;
                w1.set(i, j, hat1);
                w2.set(i, j, a / wfac * hat2);
                w3.set(i, j, hat2 / wfac);
                w12.set(i, j, om12);
            }
        }
        [w1, w2, w3, w12]
    };
    let phi_u = mc_grids(true);
    let phi_v = mc_grids(false);

    let gen_from = |grids: &[GridField; 4], along_u: bool, fixed: usize| {
        let [w1, w2, w3, w12] = grids.clone();
        move |t: f64| {
            let (a, b, c, k) = if along_u {
                (
                    interp_row(&w1, t, fixed),
                    interp_row(&w2, t, fixed),
                    interp_row(&w3, t, fixed),
                    interp_row(&w12, t, fixed),
                )
            } else {
                (
                    interp_col(&w1, fixed, t),
                    interp_col(&w2, fixed, t),
                    interp_col(&w3, fixed, t),
                    interp_col(&w12, fixed, t),
                )
            };
            MaurerCartanValue::new(a, b, c, k).to_matrix()
        }
    };

    let mut frames = vec![Matrix4::identity(); nu * nv];
    match order {
        PathOrder::UFirst => {
            let base = integrate_group_ode(
                &initial.to_matrix(),
                gen_from(&phi_u, true, 0),
                0.0,
                (nu - 1) as f64 * du,
                nu - 1,
                1,
            )?;
            for (i, m) in base.iter().enumerate() {
                frames[i] = *m;
            }
            for i in 0..nu {
                let fiber = integrate_group_ode(
                    &frames[i],
                    gen_from(&phi_v, false, i),
                    0.0,
                    (nv - 1) as f64 * dv,
                    nv - 1,
                    1,
                )?;
                for (j, m) in fiber.iter().enumerate() {
                    frames[j * nu + i] = *m;
                }
            }
        }
        PathOrder::VFirst => {
            let base = integrate_group_ode(
                &initial.to_matrix(),
                gen_from(&phi_v, false, 0),
                0.0,
                (nv - 1) as f64 * dv,
                nv - 1,
                1,
            )?;
            for j in 0..nv {
                let line = integrate_group_ode(
                    &base[j],
                    gen_from(&phi_u, true, j),
                    0.0,
                    (nu - 1) as f64 * du,
                    nu - 1,
                    1,
                )?;
                for (i, m) in line.iter().enumerate() {
                    frames[j * nu + i] = *m;
                }
            }
        }
    }

    let mut points = Vec::with_capacity(nu * nv);
    let mut fu = Vec::with_capacity(nu * nv);
    for (idx, m) in frames.iter().enumerate() {
        let (i, j) = (idx % nu, idx / nu);
        points.push(H1Point::new(m[(1, 0)], m[(2, 0)], m[(3, 0)]));
        // F_u = w1(d/du) X + w2(d/du) Y + w3(d/du) T from the frame columns
        let x_col = Vector3::new(m[(1, 1)], m[(2, 1)], m[(3, 1)]);
        let y_col = Vector3::new(m[(1, 2)], m[(2, 2)], m[(3, 2)]);
        let t_col = Vector3::new(0.0, 0.0, 1.0);
        fu.push(
            x_col * phi_u[0].get(i, j) + y_col * phi_u[1].get(i, j) + t_col * phi_u[2].get(i, j),
        );
    }
    SurfacePatch::new(
        0.0,
        du,
        nu,
        0.0,
        dv,
        nv,
        points,
        PatchPartials { fu: Some(fu), ..Default::default() },
    )
}

/// Invariants measured off an arbitrary (not necessarily normal) nonsingular
/// patch: induced metric, |alpha|, and p-mean curvature magnitude along the
/// continuity-signed characteristic field.
pub struct GeneralInvariants {
    pub metric: MetricPatch,
    pub alpha: MaskedGrid,
    pub l: GridField,
}

/// Extract metric, p-variation, and p-mean curvature from any nonsingular
/// patch. Derivatives are finite differences; points only.
pub fn extract_invariants_general(patch: &SurfacePatch) -> Result<GeneralInvariants, SurfaceError> {
    let fu = patch.fu_grid();
    let fv = patch.fv_grid();
    let field = characteristic_field(patch, None, 1.0)?;
    let (nu, nv) = (patch.nu, patch.nv);
    let (du, dv) = (patch.du, patch.dv);

    let mut e = GridField::zeros(nu, nv, du, dv);
    let mut f = GridField::zeros(nu, nv, du, dv);
    let mut g = GridField::zeros(nu, nv, du, dv);
    let mut alpha_vals = GridField::zeros(nu, nv, du, dv);
    let mut valid = vec![true; nu * nv];
    let mut l_vals = GridField::zeros(nu, nv, du, dv);

    // characteristic direction in parameter space, for e1-derivatives
    let mut par_a = GridField::zeros(nu, nv, du, dv);
    let mut par_b = GridField::zeros(nu, nv, du, dv);
    for j in 0..nv {
        for i in 0..nu {
            let idx = j * nu + i;
            let p = patch.point(i, j);
            let fu_f = frame_at(p, &fu[idx]);
            let fv_f = frame_at(p, &fv[idx]);
            e.set(i, j, fu_f.dot(&fu_f));
            f.set(i, j, fu_f.dot(&fv_f));
            g.set(i, j, fv_f.dot(&fv_f));

            let x = field[idx].frame();
            let y = Vector3::new(-x.y, x.x, 0.0);
            // solve A fu + B fv = x on horizontal components
            let det = fu_f.x * fv_f.y - fu_f.y * fv_f.x;
            let (aa, bb) = if det.abs() > 1e-12 {
                ((x.x * fv_f.y - x.y * fv_f.x) / det, (fu_f.x * x.y - fu_f.y * x.x) / det)
            } else {
                // fall back to the theta-based combination
                let tu = fu_f.z;
                let tv = fv_f.z;
                let w = Vector3::new(
                    fu_f.x * tv - fv_f.x * tu,
                    fu_f.y * tv - fv_f.y * tu,
                    0.0,
                );
                let nrm = w.xy().norm();
                (tv / nrm, -tu / nrm)
            };
            par_a.set(i, j, aa);
            par_b.set(i, j, bb);

            // alpha: tangent vector of the form alpha*Y + T
            // solve A2 fu + B2 fv = vector with zero X-component and unit T
            let m11 = fu_f.dot(&x);
            let m12 = fv_f.dot(&x);
            let m21 = fu_f.z;
            let m22 = fv_f.z;
            let det2 = m11 * m22 - m12 * m21;
            if det2.abs() < 1e-12 {
                valid[idx] = false;
            } else {
                let a2 = -m12 / det2;
                let b2 = m11 / det2;
                let vec = fu_f * a2 + fv_f * b2;
                alpha_vals.set(i, j, vec.dot(&y));
            }
        }
    }

    // l = <e1 X, Y> with e1 X = A d_u X + B d_v X on coordinate components
    let xu = fd_vec3(&|i, j| field[j * nu + i].coord(), nu, nv, Axis::U, 1, du);
    let xv = fd_vec3(&|i, j| field[j * nu + i].coord(), nu, nv, Axis::V, 1, dv);
    for j in 0..nv {
        for i in 0..nu {
            let idx = j * nu + i;
            let p = patch.point(i, j);
            let dx = xu[idx] * par_a.get(i, j) + xv[idx] * par_b.get(i, j);
            let dx_f = frame_at(p, &dx);
            let x = field[idx].frame();
            let y = Vector3::new(-x.y, x.x, 0.0);
            l_vals.set(i, j, dx_f.dot(&y));
        }
    }

    Ok(GeneralInvariants {
        metric: MetricPatch { e, f, g },
        alpha: MaskedGrid { values: alpha_vals, valid },
        l: l_vals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn vertical_plane(n: usize) -> SurfacePatch {
        SurfacePatch::from_fn_with_partials(
            0.0,
            1.0 / (n - 1) as f64,
            n,
            0.0,
            1.0 / (n - 1) as f64,
            n,
            |u, v| {
                (
                    H1Point::new(u, 0.0, v),
                    Vector3::new(1.0, 0.0, 0.0),
                    Vector3::new(0.0, 0.0, 1.0),
                    Vector3::zeros(),
                    Vector3::zeros(),
                )
            },
        )
    }

    fn cylinder_normal(n: usize) -> SurfacePatch {
        SurfacePatch::from_fn_with_partials(
            0.0,
            1.0 / (n - 1) as f64,
            n,
            0.0,
            1.0 / (n - 1) as f64,
            n,
            |u, v| {
                let (s, c) = u.sin_cos();
                (
                    H1Point::new(c, s, v - u),
                    Vector3::new(-s, c, -1.0),
                    Vector3::new(0.0, 0.0, 1.0),
                    Vector3::new(-c, -s, 0.0),
                    Vector3::zeros(),
                )
            },
        )
    }

    /// The plane z = 0 in polar normal coordinates, away from its singular
    /// point: F(u, v) = (u cos v, u sin v, 0) with coefficients
    /// a = 0, b = u, c = u^2, l = 0, m = 1 and alpha = 1/u.
    fn radial_plane(u_lo: f64, u_hi: f64, n: usize) -> SurfacePatch {
        SurfacePatch::from_fn_with_partials(
            u_lo,
            (u_hi - u_lo) / (n - 1) as f64,
            n,
            0.0,
            1.0 / (n - 1) as f64,
            n,
            |u, v| {
                let (s, c) = v.sin_cos();
                (
                    H1Point::new(u * c, u * s, 0.0),
                    Vector3::new(c, s, 0.0),
                    Vector3::new(-u * s, u * c, 0.0),
                    Vector3::zeros(),
                    Vector3::new(-s, c, 0.0),
                )
            },
        )
    }

    #[test]
    fn characteristic_direction_examples() {
        let plane = vertical_plane(11);
        let x = characteristic_direction(&plane, 5, 5, None).unwrap();
        assert!((x.frame() - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);

        // raw cylinder: X proportional to -sin u e1 + cos u e2
        let cyl = SurfacePatch::from_fn(0.0, 0.05, 21, 0.0, 0.05, 21, |u, v| {
            H1Point::new(u.cos(), u.sin(), v)
        });
        let x = characteristic_direction(&cyl, 10, 10, None).unwrap();
        let u: f64 = 10.0 * 0.05;
        let expect = Vector3::new(-u.sin(), u.cos(), 0.0);
        assert!(
            (x.frame() - expect).norm() < 1e-3 || (x.frame() + expect).norm() < 1e-3,
            "characteristic direction {:?}",
            x.frame()
        );

        // plane z = 0 through the origin: singular there
        let flat = SurfacePatch::from_fn(-0.5, 0.125, 9, -0.5, 0.125, 9, |u, v| {
            H1Point::new(u, v, 0.0)
        });
        assert!(matches!(
            characteristic_field(&flat, None, 1.0),
            Err(SurfaceError::Singular(4, 4))
        ));
    }

    #[test]
    fn normality_examples() {
        assert!(is_normal_parametrization(&vertical_plane(9), 1e-9).normal);

        let raw_cyl = SurfacePatch::from_fn_with_partials(
            0.0,
            0.05,
            21,
            0.0,
            0.05,
            21,
            |u, v| {
                let (s, c) = u.sin_cos();
                (
                    H1Point::new(c, s, v),
                    Vector3::new(-s, c, 0.0),
                    Vector3::new(0.0, 0.0, 1.0),
                    Vector3::new(-c, -s, 0.0),
                    Vector3::zeros(),
                )
            },
        );
        let report = is_normal_parametrization(&raw_cyl, 1e-9);
        assert!(!report.normal);
        assert!(!report.fu_spans_foliation);
        assert_abs_diff_eq!(report.max_theta_fu, 1.0, epsilon = 1e-12);

        assert!(is_normal_parametrization(&cylinder_normal(21), 1e-9).normal);
    }

    #[test]
    fn coefficient_examples() {
        let coeffs = coefficients(&vertical_plane(11), 1e-9).unwrap();
        for grid in [&coeffs.a, &coeffs.b, &coeffs.l, &coeffs.m] {
            assert_eq!(grid.max_abs().0, 0.0);
        }
        assert_eq!(coeffs.c.zip_map(&coeffs.c, |c, _| c - 1.0).max_abs().0, 0.0);

        let coeffs = coefficients(&cylinder_normal(21), 1e-8).unwrap();
        assert!(coeffs.a.max_abs().0 < 1e-12);
        assert!(coeffs.b.max_abs().0 < 1e-12);
        assert!(coeffs.c.map(|c| c - 1.0).max_abs().0 < 1e-12);
        assert!(coeffs.l.map(|l| l - 1.0).max_abs().0 < 1e-12);
        assert!(coeffs.m.max_abs().0 < 1e-12);

        let radial = radial_plane(1.0, 2.0, 21);
        let coeffs = coefficients(&radial, 1e-9).unwrap();
        for j in 0..21 {
            for i in 0..21 {
                let u = 1.0 + i as f64 * coeffs.du();
                assert_abs_diff_eq!(coeffs.a.get(i, j), 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(coeffs.b.get(i, j), u, epsilon = 1e-12);
                assert_abs_diff_eq!(coeffs.c.get(i, j), u * u, epsilon = 1e-12);
                assert_abs_diff_eq!(coeffs.l.get(i, j), 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(coeffs.m.get(i, j), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn coefficients_reject_non_normal() {
        let raw_cyl = SurfacePatch::from_fn(0.0, 0.05, 21, 0.0, 0.05, 21, |u, v| {
            H1Point::new(u.cos(), u.sin(), v)
        });
        assert!(matches!(
            coefficients(&raw_cyl, 1e-3),
            Err(SurfaceError::NotNormal { .. })
        ));
    }

    #[test]
    fn coefficients_invariant_under_motion() {
        let g = HeisenbergMotion::new(H1Point::new(0.3, -0.9, 1.7), 1.2);
        let patch = cylinder_normal(21);
        let moved = patch.map_motion(&g);
        let c0 = coefficients(&patch, 1e-8).unwrap();
        let c1 = coefficients(&moved, 1e-8).unwrap();
        assert!(c0.max_abs_difference(&c1) < 1e-8);

        let radial = radial_plane(1.0, 2.0, 17);
        let moved = radial.map_motion(&g);
        let c0 = coefficients(&radial, 1e-9).unwrap();
        let c1 = coefficients(&moved, 1e-9).unwrap();
        assert!(c0.max_abs_difference(&c1) < 1e-8);
    }

    #[test]
    fn integrability_examples() {
        let coeffs = coefficients(&cylinder_normal(21), 1e-8).unwrap();
        let report = check_integrability(&coeffs, 1e-12).unwrap();
        assert!(report.pass);
        assert!(report.max_residual < 1e-13);

        let radial = coefficients(&radial_plane(1.0, 2.0, 21), 1e-9).unwrap();
        let report = check_integrability(&radial, 1e-9).unwrap();
        assert!(report.pass, "radial-plane residual {}", report.max_residual);

        // single-cell perturbation of b is flagged
        let mut tampered = radial.clone();
        let old = tampered.b.get(10, 10);
        tampered.b.set(10, 10, old + 0.1);
        let report = check_integrability(&tampered, 1e-6).unwrap();
        assert!(!report.pass);
        assert!(report.max_residual >= 0.19);
        let c_eq = report
            .per_equation
            .iter()
            .find(|e| e.name == "c_u - 2*b")
            .unwrap();
        assert!(
            (c_eq.max_residual - 0.2).abs() < 1e-6,
            "c_u - 2b residual {}",
            c_eq.max_residual
        );
        assert_eq!(c_eq.argmax_cell, (10, 10));
    }

    #[test]
    fn pminimal_examples() {
        let plane = coefficients(&vertical_plane(11), 1e-9).unwrap();
        let report = check_pminimal(&plane, 1e-12).unwrap();
        assert!(report.pass);
        assert_eq!(report.info_max_l, Some(0.0));

        let cyl = coefficients(&cylinder_normal(21), 1e-8).unwrap();
        let report = check_pminimal(&cyl, 1e-9).unwrap();
        assert!(report.info_max_l.unwrap() > 0.9, "cylinder has l = 1");

        // b = v, c = 2uv + 1, a = 0, m = 0: b_uu = 0 and c_u = 2b hold
        let coeffs = SurfaceCoefficients::from_fn(0.0, 0.1, 11, 0.0, 0.1, 11, |u, v| {
            (0.0, v, 2.0 * u * v + 1.0, 0.0, 0.0)
        });
        let report = check_pminimal(&coeffs, 1e-10).unwrap();
        assert!(report.pass, "p-minimal residual {}", report.max_residual);
        let b_uu = report.per_equation.iter().find(|e| e.name == "b_uu").unwrap();
        let cu = report.per_equation.iter().find(|e| e.name == "c_u - 2*b").unwrap();
        assert!(b_uu.max_residual < 1e-10);
        assert!(cu.max_residual < 1e-10);
    }

    #[test]
    fn reconstruct_zero_curvature_is_vertical_plane() {
        let coeffs = SurfaceCoefficients::from_fn(0.0, 0.02, 51, 0.0, 0.02, 51, |_, _| {
            (0.0, 0.0, 1.0, 0.0, 0.0)
        });
        let patch =
            reconstruct_surface(&coeffs, &OrientedFrame::standard(), 1e-9, PathOrder::UFirst)
                .unwrap();
        for j in 0..51 {
            for i in 0..51 {
                let p = patch.point(i, j);
                assert_abs_diff_eq!(p.x, i as f64 * 0.02, epsilon = 1e-10);
                assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-10);
                assert_abs_diff_eq!(p.z, j as f64 * 0.02, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn reconstruct_cylinder_round_trip() {
        let n = 201;
        let coeffs = SurfaceCoefficients::from_fn(0.0, 1.0 / 200.0, n, 0.0, 1.0 / 200.0, n, |_, _| {
            (0.0, 0.0, 1.0, 1.0, 0.0)
        });
        let patch =
            reconstruct_surface(&coeffs, &OrientedFrame::standard(), 1e-9, PathOrder::UFirst)
                .unwrap();
        let back = coefficients(&patch, 1e-6).unwrap();
        let err = coeffs.max_abs_difference(&back);
        assert!(err <= 1e-5, "cylinder coefficient round trip error {err}");
    }

    #[test]
    fn reconstruct_path_order_agreement() {
        let n = 41;
        let coeffs = coefficients(&radial_plane(1.0, 2.0, n), 1e-9).unwrap();
        let p1 = reconstruct_surface(&coeffs, &OrientedFrame::standard(), 1e-3, PathOrder::UFirst)
            .unwrap();
        let p2 = reconstruct_surface(&coeffs, &OrientedFrame::standard(), 1e-3, PathOrder::VFirst)
            .unwrap();
        let mut worst = 0.0_f64;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max(p1.point(i, j).dist(p2.point(i, j)));
            }
        }
        assert!(worst <= 1e-5, "path order disagreement {worst}");
    }

    #[test]
    fn reconstruct_rejects_tampered_coefficients() {
        let n = 21;
        let mut coeffs = coefficients(&radial_plane(1.0, 2.0, n), 1e-9).unwrap();
        coeffs.b.set(10, 10, coeffs.b.get(10, 10) + 0.1);
        assert!(matches!(
            reconstruct_surface(&coeffs, &OrientedFrame::standard(), 1e-4, PathOrder::UFirst),
            Err(SurfaceError::IntegrabilityViolation { .. })
        ));
    }

    #[test]
    fn transform_identity_and_sign() {
        let coeffs = coefficients(&radial_plane(1.0, 2.0, 17), 1e-9).unwrap();
        let id = Reparametrization {
            sign: 1.0,
            g: &|_| 0.0,
            dg: &|_| 0.0,
            h: &|v| v,
            dh: &|_| 1.0,
        };
        let same = transform_coefficients(&coeffs, &id).unwrap();
        assert!(coeffs.max_abs_difference(&same) < 1e-15);

        let flip = Reparametrization {
            sign: -1.0,
            g: &|_| 0.0,
            dg: &|_| 0.0,
            h: &|v| v,
            dh: &|_| 1.0,
        };
        let flipped = transform_coefficients(&coeffs, &flip).unwrap();
        assert!(flipped.a.zip_map(&coeffs.a, |x, y| x + y).max_abs().0 < 1e-15);
        assert!(flipped.b.zip_map(&coeffs.b, |x, y| x + y).max_abs().0 < 1e-15);
        assert!(flipped.l.zip_map(&coeffs.l, |x, y| x + y).max_abs().0 < 1e-15);
        assert!(flipped.c.zip_map(&coeffs.c, |x, y| x - y).max_abs().0 < 1e-15);

        let degenerate = Reparametrization {
            sign: 1.0,
            g: &|_| 0.0,
            dg: &|_| 0.0,
            h: &|v| v * v,
            dh: &|v| 2.0 * v,
        };
        assert!(matches!(
            transform_coefficients(&coeffs, &degenerate),
            Err(SurfaceError::DegenerateReparam { .. })
        ));
    }

    #[test]
    fn alpha_and_metric_examples() {
        let cyl = coefficients(&cylinder_normal(21), 1e-8).unwrap();
        let alpha = p_variation(&cyl);
        assert!(alpha.fully_valid());
        assert!(alpha.values.max_abs().0 < 1e-12);
        let metric = induced_metric(&cyl);
        assert!(metric.e.map(|x| x - 1.0).max_abs().0 < 1e-12);
        assert!(metric.f.max_abs().0 < 1e-12);
        assert!(metric.g.map(|x| x - 1.0).max_abs().0 < 1e-12);

        let radial = coefficients(&radial_plane(1.0, 2.0, 17), 1e-9).unwrap();
        let alpha = p_variation(&radial);
        for j in 0..17 {
            for i in 0..17 {
                let u = 1.0 + i as f64 * radial.du();
                assert_abs_diff_eq!(alpha.values.get(i, j), 1.0 / u, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn directional_derivative_examples() {
        let plane = coefficients(&vertical_plane(11), 1e-9).unwrap();
        let constant = GridField::from_fn(11, 11, plane.du(), plane.dv(), |_, _| 3.5);
        let (e1, esig) = directional_derivatives(&constant, &plane).unwrap();
        assert!(e1.max_abs().0 < 1e-12);
        assert!(esig.values.max_abs().0 < 1e-12);

        let u_field = GridField::from_fn(11, 11, plane.du(), plane.dv(), |i, _| i as f64 * plane.du());
        let (e1, esig) = directional_derivatives(&u_field, &plane).unwrap();
        assert!(e1.map(|x| x - 1.0).max_abs().0 < 1e-10);
        assert!(esig.values.max_abs().0 < 1e-10);

        let v_field = GridField::from_fn(11, 11, plane.du(), plane.dv(), |_, j| j as f64 * plane.dv());
        let (e1, esig) = directional_derivatives(&v_field, &plane).unwrap();
        assert!(e1.max_abs().0 < 1e-10);
        assert!(esig.values.map(|x| x - 1.0).max_abs().0 < 1e-10);
    }

    #[test]
    fn gaussian_curvature_flat_cases() {
        for patch in [vertical_plane(21), cylinder_normal(21)] {
            let coeffs = coefficients(&patch, 1e-8).unwrap();
            let alpha = p_variation(&coeffs);
            let k_formula = gaussian_curvature_formula(&alpha, &coeffs.l, &coeffs).unwrap();
            assert!(k_formula.values.max_abs().0 <= 1e-8);
            let k_ref = gaussian_curvature_reference(&induced_metric(&coeffs)).unwrap();
            assert!(k_ref.max_abs().0 <= 1e-8);
        }
    }

    #[test]
    fn gaussian_curvature_radial_plane_closed_form() {
        // K = -(2u^2 + 3)/(1 + u^2)^2 for the z = 0 plane in polar normal
        // coordinates
        let n = 81;
        let coeffs = coefficients(&radial_plane(1.0, 2.0, n), 1e-9).unwrap();
        let alpha = p_variation(&coeffs);
        let k_formula = gaussian_curvature_formula(&alpha, &coeffs.l, &coeffs).unwrap();
        let k_ref = gaussian_curvature_reference(&induced_metric(&coeffs)).unwrap();
        let mut worst_formula = 0.0_f64;
        let mut worst_ref = 0.0_f64;
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let u = 1.0 + i as f64 * coeffs.du();
                let exact = -(2.0 * u * u + 3.0) / (1.0 + u * u).powi(2);
                worst_formula = worst_formula.max((k_formula.values.get(i, j) - exact).abs());
                worst_ref = worst_ref.max((k_ref.get(i, j) - exact).abs());
            }
        }
        assert!(worst_formula <= 1e-3, "formula route error {worst_formula}");
        assert!(worst_ref <= 1e-3, "reference route error {worst_ref}");
    }

    #[test]
    fn gaussian_reference_sphere_metric() {
        // away from the polar caps, where 1/G does not amplify FD noise
        let n = 301;
        let u_lo = std::f64::consts::FRAC_PI_4;
        let du = (std::f64::consts::FRAC_PI_2) / (n - 1) as f64;
        let e = GridField::from_fn(n, n, du, du, |_, _| 1.0);
        let f = GridField::from_fn(n, n, du, du, |_, _| 0.0);
        let g = GridField::from_fn(n, n, du, du, |i, _| (u_lo + i as f64 * du).sin().powi(2));
        let k = gaussian_curvature_reference(&MetricPatch { e, f, g }).unwrap();
        let mut worst = 0.0_f64;
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                worst = worst.max((k.get(i, j) - 1.0).abs());
            }
        }
        assert!(worst <= 1e-4, "sphere metric curvature error {worst}");
    }

    #[test]
    fn codazzi_and_integrability_examples() {
        for patch in [vertical_plane(21), cylinder_normal(21)] {
            let coeffs = coefficients(&patch, 1e-8).unwrap();
            let alpha = p_variation(&coeffs);
            let cod = check_codazzi(&alpha, &coeffs.l, &coeffs, 1e-9).unwrap();
            assert!(cod.pass, "codazzi residual {}", cod.max_residual);
            let k = gaussian_curvature_formula(&alpha, &coeffs.l, &coeffs).unwrap();
            let full =
                check_surface_integrability(&alpha, &coeffs.l, &k.values, &coeffs, 1e-9).unwrap();
            assert!(full.pass, "integrability residual {}", full.max_residual);
        }

        let coeffs = coefficients(&radial_plane(1.0, 2.0, 161), 1e-9).unwrap();
        let alpha = p_variation(&coeffs);
        let cod = check_codazzi(&alpha, &coeffs.l, &coeffs, 1e-3).unwrap();
        assert!(cod.pass, "radial codazzi residual {}", cod.max_residual);
        let k = gaussian_curvature_formula(&alpha, &coeffs.l, &coeffs).unwrap();
        let full =
            check_surface_integrability(&alpha, &coeffs.l, &k.values, &coeffs, 1e-3).unwrap();
        assert!(full.pass, "radial integrability residual {}", full.max_residual);
    }

    #[test]
    fn euler_total_examples() {
        let plane = coefficients(&vertical_plane(21), 1e-9).unwrap();
        let alpha = p_variation(&plane);
        let k = euler_integrand(&alpha, &plane.l, &plane).unwrap();
        let total = patch_total(&k, &plane).unwrap();
        assert_abs_diff_eq!(total, 0.0, epsilon = 1e-10);
        // area of the unit square with c = 1, alpha = 0
        assert_abs_diff_eq!(patch_area(&plane).unwrap(), 1.0, epsilon = 1e-12);

        let cyl = coefficients(&cylinder_normal(21), 1e-8).unwrap();
        let alpha = p_variation(&cyl);
        let k = euler_integrand(&alpha, &cyl.l, &cyl).unwrap();
        assert_abs_diff_eq!(patch_total(&k, &cyl).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn coframe_is_orthonormal_for_induced_metric() {
        let coeffs = coefficients(&radial_plane(1.0, 2.0, 17), 1e-9).unwrap();
        let coframe = Coframe::from_coefficients(&coeffs);
        let rebuilt = coframe.metric();
        let metric = induced_metric(&coeffs);
        assert!(rebuilt.max_abs_difference(&metric) < 1e-12);
    }

    #[test]
    fn connection_forms_consistency() {
        // alpha = 0: omega12 = l w1, hat connection vanishes
        let cyl = coefficients(&cylinder_normal(21), 1e-8).unwrap();
        let alpha = p_variation(&cyl);
        let (e1a, _) = directional_derivatives(&alpha.values, &cyl).unwrap();
        let zero = GridField::zeros(21, 21, cyl.du(), cyl.dv());
        let forms = connection_forms(&alpha.values, &cyl.l, &e1a, &(zero.clone(), zero));
        assert!(forms.omega12_second.0.map(|x| x - 1.0).max_abs().0 < 1e-12);
        assert!(forms.omega12_second.1.max_abs().0 < 1e-12);
        assert!(forms.omega_hat12_formula.0.max_abs().0 < 1e-12);
        assert!(forms.omega_hat12_formula.1.max_abs().0 < 1e-12);

        // general patch: the two displays agree when the hat connection is
        // solved from the structure equations
        let coeffs = coefficients(&radial_plane(1.0, 2.0, 81), 1e-9).unwrap();
        let alpha = p_variation(&coeffs);
        let (e1a, _) = directional_derivatives(&alpha.values, &coeffs).unwrap();
        let coframe = Coframe::from_coefficients(&coeffs);
        let (conn_p, conn_q) = structure_connection(&coframe).unwrap();
        // convert (du, dv) components to coframe components
        let (nu, nv) = (coframe.nu(), coframe.nv());
        let mut hat1 = GridField::zeros(nu, nv, coeffs.du(), coeffs.dv());
        let mut hat2 = GridField::zeros(nu, nv, coeffs.du(), coeffs.dv());
        for j in 0..nv {
            for i in 0..nu {
                let (p, q) = (coframe.w1_du.get(i, j), coframe.w1_dv.get(i, j));
                let (r, s) = (coframe.w2_du.get(i, j), coframe.w2_dv.get(i, j));
                let det = p * s - q * r;
                let cp = conn_p.get(i, j);
                let cq = conn_q.get(i, j);
                hat1.set(i, j, (cp * s - cq * r) / det);
                hat2.set(i, j, (cq * p - cp * q) / det);
            }
        }
        let forms = connection_forms(&alpha.values, &coeffs.l, &e1a, &(hat1.clone(), hat2.clone()));
        let d1 = forms
            .omega12_first
            .0
            .zip_map(&forms.omega12_second.0, |x, y| x - y)
            .max_abs_interior()
            .0;
        let d2 = forms
            .omega12_first
            .1
            .zip_map(&forms.omega12_second.1, |x, y| x - y)
            .max_abs_interior()
            .0;
        assert!(d1.max(d2) < 1e-4, "connection display mismatch {d1} {d2}");

        // hat connection formula matches the structure-equation solve
        let h1 = forms
            .omega_hat12_formula
            .0
            .zip_map(&hat1, |x, y| x - y)
            .max_abs_interior()
            .0;
        let h2 = forms
            .omega_hat12_formula
            .1
            .zip_map(&hat2, |x, y| x - y)
            .max_abs_interior()
            .0;
        assert!(h1.max(h2) < 1e-4, "hat connection mismatch {h1} {h2}");
    }

    #[test]
    fn from_invariants_flat_inputs() {
        let n = 101;
        let du = 1.0 / (n - 1) as f64;
        let flat = Coframe {
            w1_du: GridField::from_fn(n, n, du, du, |_, _| 1.0),
            w1_dv: GridField::zeros(n, n, du, du),
            w2_du: GridField::zeros(n, n, du, du),
            w2_dv: GridField::from_fn(n, n, du, du, |_, _| 1.0),
        };
        let alpha = GridField::zeros(n, n, du, du);

        // l = 0: the vertical plane
        let l = GridField::zeros(n, n, du, du);
        let patch = reconstruct_from_invariants(
            &flat,
            &alpha,
            &l,
            &OrientedFrame::standard(),
            PathOrder::UFirst,
        )
        .unwrap();
        for j in 0..n {
            for i in 0..n {
                let p = patch.point(i, j);
                assert_abs_diff_eq!(p.x, i as f64 * du, epsilon = 1e-10);
                assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-10);
                assert_abs_diff_eq!(p.z, j as f64 * du, epsilon = 1e-10);
            }
        }

        // l = 1: congruent to the sheared cylinder
        let l = GridField::from_fn(n, n, du, du, |_, _| 1.0);
        let patch = reconstruct_from_invariants(
            &flat,
            &alpha,
            &l,
            &OrientedFrame::standard(),
            PathOrder::UFirst,
        )
        .unwrap();
        let extracted = coefficients(&patch, 1e-6).unwrap();
        assert!(extracted.a.max_abs().0 < 1e-5);
        assert!(extracted.b.max_abs().0 < 1e-5);
        assert!(extracted.c.map(|c| c - 1.0).max_abs().0 < 1e-5);
        assert!(extracted.l.map(|l| l - 1.0).max_abs().0 < 1e-4);
    }

    #[test]
    fn from_invariants_initial_frame_equivariance() {
        let n = 31;
        let du = 1.0 / (n - 1) as f64;
        let flat = Coframe {
            w1_du: GridField::from_fn(n, n, du, du, |_, _| 1.0),
            w1_dv: GridField::zeros(n, n, du, du),
            w2_du: GridField::zeros(n, n, du, du),
            w2_dv: GridField::from_fn(n, n, du, du, |_, _| 1.0),
        };
        let alpha = GridField::zeros(n, n, du, du);
        let l = GridField::from_fn(n, n, du, du, |_, _| 1.0);
        let f1 = OrientedFrame::standard();
        let f2 = OrientedFrame::from_horizontal_direction(H1Point::new(0.5, -0.3, 0.9), 0.6, 0.8)
            .unwrap();
        let p1 = reconstruct_from_invariants(&flat, &alpha, &l, &f1, PathOrder::UFirst).unwrap();
        let p2 = reconstruct_from_invariants(&flat, &alpha, &l, &f2, PathOrder::UFirst).unwrap();
        let g = f1.motion_to(&f2);
        let mut worst = 0.0_f64;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max(g.apply(p1.point(i, j)).dist(p2.point(i, j)));
            }
        }
        assert!(worst <= 1e-5, "equivariance deviation {worst}");
    }

    #[test]
    fn from_invariants_rejects_inconsistent_data() {
        let n = 31;
        let du = 1.0 / (n - 1) as f64;
        let flat = Coframe {
            w1_du: GridField::from_fn(n, n, du, du, |_, _| 1.0),
            w1_dv: GridField::zeros(n, n, du, du),
            w2_du: GridField::zeros(n, n, du, du),
            w2_dv: GridField::from_fn(n, n, du, du, |_, _| 1.0),
        };
        // alpha varying along u with flat metric and l = 0 violates the
        // integrability relation (it forces nonzero curvature terms)
        let alpha = GridField::from_fn(n, n, du, du, |i, _| 0.5 * (i as f64 * du));
        let l = GridField::zeros(n, n, du, du);
        assert!(matches!(
            reconstruct_from_invariants(&flat, &alpha, &l, &OrientedFrame::standard(), PathOrder::UFirst),
            Err(SurfaceError::IntegrabilityViolation { .. })
        ));
    }

    #[test]
    fn general_extraction_matches_radial_plane() {
        let patch = radial_plane(1.0, 2.0, 41);
        let inv = extract_invariants_general(&patch).unwrap();
        let mut worst_alpha = 0.0_f64;
        let mut worst_l = 0.0_f64;
        for j in 1..40 {
            for i in 1..40 {
                let u = 1.0 + i as f64 * patch.du();
                worst_alpha = worst_alpha.max((inv.alpha.values.get(i, j).abs() - 1.0 / u).abs());
                worst_l = worst_l.max(inv.l.get(i, j).abs());
            }
        }
        assert!(worst_alpha <= 1e-4, "alpha extraction error {worst_alpha}");
        assert!(worst_l <= 1e-4, "l extraction error {worst_l}");
        // metric: E = 1, F = 0, G = u^2 (1 + u^2)
        for j in 0..41 {
            for i in 0..41 {
                let u = 1.0 + i as f64 * patch.du();
                assert_abs_diff_eq!(inv.metric.e.get(i, j), 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(inv.metric.f.get(i, j), 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(
                    inv.metric.g.get(i, j),
                    u * u * (1.0 + u * u),
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn normalize_patch_examples() {
        // already normal: unchanged
        let plane = vertical_plane(11);
        let normalized = normalize_patch(&plane, 1.0).unwrap();
        assert_eq!(normalized.points().len(), plane.points().len());
        for (p, q) in normalized.points().iter().zip(plane.points()) {
            assert!(p.dist(*q) < 1e-12);
        }

        // raw cylinder: sheared into normal coordinates, v-range shrinks
        let raw = SurfacePatch::from_fn_with_partials(
            0.0,
            1.0 / 40.0,
            41,
            0.0,
            3.0 / 120.0,
            121,
            |u, v| {
                let (s, c) = u.sin_cos();
                (
                    H1Point::new(c, s, v),
                    Vector3::new(-s, c, 0.0),
                    Vector3::new(0.0, 0.0, 1.0),
                    Vector3::new(-c, -s, 0.0),
                    Vector3::zeros(),
                )
            },
        );
        let normalized = normalize_patch(&raw, 1.0).unwrap();
        let report = is_normal_parametrization(&normalized, 1e-6);
        assert!(report.normal, "normalized cylinder: theta {:.2e}, unit {:.2e}",
            report.max_theta_fu, report.max_unit_dev);
        let coeffs = coefficients(&normalized, 1e-6).unwrap();
        assert!(coeffs.a.max_abs().0 < 1e-3);
        assert!(coeffs.b.max_abs().0 < 1e-3);
        assert!(coeffs.c.map(|c| c - 1.0).max_abs().0 < 1e-3);
        assert!(coeffs.l.map(|l| l - 1.0).max_abs().0 < 1e-2);

        // tilted plane away from its singular set: straight characteristics
        let tilted = SurfacePatch::from_fn(1.0, 0.02, 41, 0.0, 0.02, 41, |u, v| {
            H1Point::new(u, v, 0.3 * v)
        });
        let normalized = normalize_patch(&tilted, 1.0).unwrap();
        let fuu = normalized.clone().without_partials().fuu_grid();
        let mut worst = 0.0_f64;
        for j in 1..normalized.nv() - 1 {
            for i in 1..normalized.nu() - 1 {
                worst = worst.max(fuu[j * normalized.nu() + i].norm());
            }
        }
        assert!(worst <= 1e-2, "characteristic lines not straight: {worst}");
    }
}
