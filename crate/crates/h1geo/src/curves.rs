//! Horizontally regular curves: invariants, arclength normalization,
//! reconstruction from prescribed invariants, congruence detection, and
//! geodesics.
//!
//! A curve is horizontally regular when the contact-plane part of its
//! velocity never vanishes. Such a curve is characterized, up to a rigid
//! motion, by two scalar functions of horizontal arclength: the
//! p-curvature `k` (the signed curvature of the xy-projection) and the
//! T-variation `tau` (the Reeb component of the unit-horizontal-speed
//! velocity). In an arbitrary parameter,
//!
//! ```text
//! k   = (x' y'' - x'' y') / ((x')^2 + (y')^2)^(3/2)
//! tau = (x y' - x' y + z') / ((x')^2 + (y')^2)^(1/2)
//! ```
//!
//! Reconstruction integrates the frame equation `dM/ds = M * omega(s)` with
//! `omega = (w1, w2, w3, w12) = (1, 0, tau(s), k(s))` and reads the curve off
//! the point column.

use nalgebra::Vector3;
use thiserror::Error;

use crate::heisenberg::{
    apply_j0, H1Error, H1Point, HeisenbergMotion, MaurerCartanValue, OrientedFrame, TangentVector,
};
use crate::numerics::{
    cumulative_integral, integrate_group_ode, integrate_ode, MonotoneCubic, NumericsError,
    OdeProblem,
};

/// Default horizontal-regularity threshold, relative to the curve's largest
/// horizontal speed.
pub const REGULARITY_EPS_REL: f64 = 1e-8;
/// `|c3|` below this is treated as the straight-line branch.
pub const C3_ZERO_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("curve needs at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("parameter grid must be strictly increasing and uniform")]
    NonUniformGrid,
    #[error("derivative sample count does not match curve samples")]
    DerivativeCountMismatch,
    #[error("curve is not horizontally regular at index {index} (horizontal speed {speed:.3e})")]
    NotHorizontallyRegular { index: usize, speed: f64 },
    #[error("curves are sampled on different parameter grids")]
    GridMismatch,
    #[error("curves are not congruent: max deviation {max_deviation:.6e}")]
    NotCongruent { max_deviation: f64 },
    #[error("degenerate geodesic parameters: a1^2 + a2^2 = 0 with c3 != 0")]
    DegenerateParams,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    H1(#[from] H1Error),
}

/// A sampled parametrized curve on a uniform parameter grid, optionally with
/// analytic first/second derivative samples. Without them, derivatives fall
/// back to order-2 finite differences (central inside, one-sided at the
/// ends).
#[derive(Clone, Debug)]
pub struct ParamCurve {
    t: Vec<f64>,
    points: Vec<H1Point>,
    d1: Option<Vec<Vector3<f64>>>,
    d2: Option<Vec<Vector3<f64>>>,
}

impl ParamCurve {
    pub fn new(
        t: Vec<f64>,
        points: Vec<H1Point>,
        d1: Option<Vec<Vector3<f64>>>,
        d2: Option<Vec<Vector3<f64>>>,
    ) -> Result<Self, CurveError> {
        if t.len() < 5 {
            return Err(CurveError::TooFewSamples { need: 5, got: t.len() });
        }
        if points.len() != t.len() {
            return Err(CurveError::DerivativeCountMismatch);
        }
        let h = t[1] - t[0];
        if h <= 0.0 || !h.is_finite() {
            return Err(CurveError::NonUniformGrid);
        }
        let scale = h.abs().max(t[0].abs()).max(t[t.len() - 1].abs());
        for w in t.windows(2) {
            if w[1] <= w[0] || ((w[1] - w[0]) - h).abs() > 1e-9 * scale.max(1.0) {
                return Err(CurveError::NonUniformGrid);
            }
        }
        for d in [&d1, &d2].into_iter().flatten() {
            if d.len() != t.len() {
                return Err(CurveError::DerivativeCountMismatch);
            }
        }
        Ok(ParamCurve { t, points, d1, d2 })
    }

    /// Sample a coordinate map with analytic first and second derivatives on
    /// a uniform grid.
    pub fn from_fn(
        t0: f64,
        t1: f64,
        n: usize,
        f: impl Fn(f64) -> (H1Point, Vector3<f64>, Vector3<f64>),
    ) -> Self {
        assert!(n >= 5, "need at least 5 samples");
        let h = (t1 - t0) / (n - 1) as f64;
        let mut t = Vec::with_capacity(n);
        let mut points = Vec::with_capacity(n);
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        for i in 0..n {
            let ti = t0 + i as f64 * h;
            let (p, v, a) = f(ti);
            t.push(ti);
            points.push(p);
            d1.push(v);
            d2.push(a);
        }
        ParamCurve { t, points, d1: Some(d1), d2: Some(d2) }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    pub fn params(&self) -> &[f64] {
        &self.t
    }

    pub fn points(&self) -> &[H1Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> H1Point {
        self.points[i]
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.d1.is_some()
    }

    pub fn analytic_d1(&self) -> Option<&[Vector3<f64>]> {
        self.d1.as_deref()
    }

    pub fn analytic_d2(&self) -> Option<&[Vector3<f64>]> {
        self.d2.as_deref()
    }

    /// Drop analytic derivative samples, forcing finite differences.
    pub fn without_analytic_derivatives(mut self) -> Self {
        self.d1 = None;
        self.d2 = None;
        self
    }

    fn coord(&self, i: usize) -> Vector3<f64> {
        let p = self.points[i];
        Vector3::new(p.x, p.y, p.z)
    }

    /// First derivative at a sample.
    pub fn d1_at(&self, i: usize) -> Vector3<f64> {
        if let Some(d1) = &self.d1 {
            return d1[i];
        }
        let h = self.step();
        let n = self.len();
        if i == 0 {
            (-3.0 * self.coord(0) + 4.0 * self.coord(1) - self.coord(2)) / (2.0 * h)
        } else if i == n - 1 {
            (3.0 * self.coord(n - 1) - 4.0 * self.coord(n - 2) + self.coord(n - 3)) / (2.0 * h)
        } else {
            (self.coord(i + 1) - self.coord(i - 1)) / (2.0 * h)
        }
    }

    /// Second derivative at a sample.
    pub fn d2_at(&self, i: usize) -> Vector3<f64> {
        if let Some(d2) = &self.d2 {
            return d2[i];
        }
        // differentiate analytic first derivatives when available
        if let Some(d1) = &self.d1 {
            let h = self.step();
            let n = self.len();
            return if i == 0 {
                (-3.0 * d1[0] + 4.0 * d1[1] - d1[2]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * d1[n - 1] - 4.0 * d1[n - 2] + d1[n - 3]) / (2.0 * h)
            } else {
                (d1[i + 1] - d1[i - 1]) / (2.0 * h)
            };
        }
        let h = self.step();
        let n = self.len();
        let h2 = h * h;
        if i == 0 {
            (2.0 * self.coord(0) - 5.0 * self.coord(1) + 4.0 * self.coord(2) - self.coord(3)) / h2
        } else if i == n - 1 {
            (2.0 * self.coord(n - 1) - 5.0 * self.coord(n - 2) + 4.0 * self.coord(n - 3)
                - self.coord(n - 4))
                / h2
        } else {
            (self.coord(i + 1) - 2.0 * self.coord(i) + self.coord(i - 1)) / h2
        }
    }

    /// Horizontal speed `sqrt(x'^2 + y'^2)` at a sample.
    pub fn horizontal_speed(&self, i: usize) -> f64 {
        let d = self.d1_at(i);
        (d.x * d.x + d.y * d.y).sqrt()
    }

    /// Image of the curve under a rigid motion; analytic derivatives map
    /// through the motion's (constant) coordinate Jacobian.
    pub fn map_motion(&self, g: &HeisenbergMotion) -> ParamCurve {
        let points: Vec<H1Point> = self.points.iter().map(|&p| g.apply(p)).collect();
        let map_derivs = |src: &Option<Vec<Vector3<f64>>>| {
            src.as_ref().map(|d| {
                d.iter()
                    .zip(&self.points)
                    .map(|(v, &p)| {
                        g.pushforward(&TangentVector::from_coord(p, *v)).coord()
                    })
                    .collect()
            })
        };
        ParamCurve { t: self.t.clone(), points, d1: map_derivs(&self.d1), d2: map_derivs(&self.d2) }
    }
}

/// Split a velocity into its contact-plane part and Reeb coefficient.
pub fn velocity_decomposition(curve: &ParamCurve, index: usize) -> (TangentVector, f64) {
    let v = TangentVector::from_coord(curve.point(index), curve.d1_at(index));
    let f = v.frame();
    (TangentVector::horizontal(v.base(), f.x, f.y), f.z)
}

/// Outcome of the horizontal-regularity scan.
#[derive(Clone, Copy, Debug)]
pub struct RegularityReport {
    pub regular: bool,
    pub first_failure: Option<usize>,
    pub min_speed: f64,
    pub eps_used: f64,
}

/// Check `sqrt(x'^2 + y'^2) > eps` at every sample. With `eps = None` the
/// threshold is [`REGULARITY_EPS_REL`] times the largest horizontal speed.
pub fn is_horizontally_regular(curve: &ParamCurve, eps: Option<f64>) -> RegularityReport {
    let speeds: Vec<f64> = (0..curve.len()).map(|i| curve.horizontal_speed(i)).collect();
    let scale = speeds.iter().cloned().fold(0.0_f64, f64::max);
    let eps_used = eps.unwrap_or(REGULARITY_EPS_REL * scale);
    let mut min_speed = f64::INFINITY;
    let mut first_failure = None;
    for (i, &s) in speeds.iter().enumerate() {
        min_speed = min_speed.min(s);
        if s <= eps_used && first_failure.is_none() {
            first_failure = Some(i);
        }
    }
    RegularityReport { regular: first_failure.is_none(), first_failure, min_speed, eps_used }
}

fn require_regular(curve: &ParamCurve, eps: Option<f64>) -> Result<(), CurveError> {
    let report = is_horizontally_regular(curve, eps);
    match report.first_failure {
        None => Ok(()),
        Some(index) => {
            Err(CurveError::NotHorizontallyRegular { index, speed: curve.horizontal_speed(index) })
        }
    }
}

/// Cumulative horizontal arclength `s(t_i)`, anchored at `s(t_0) = 0`.
pub fn horizontal_arclength(curve: &ParamCurve) -> Result<Vec<f64>, CurveError> {
    require_regular(curve, None)?;
    let speeds: Vec<f64> = (0..curve.len()).map(|i| curve.horizontal_speed(i)).collect();
    Ok(cumulative_integral(&speeds, curve.step())?)
}

fn lerp_samples(t: &[f64], values: &[Vector3<f64>], tq: f64) -> Vector3<f64> {
    let n = t.len();
    let h = t[1] - t[0];
    let x = ((tq - t[0]) / h).clamp(0.0, (n - 1) as f64);
    let i = (x.floor() as usize).min(n - 2);
    let w = x - i as f64;
    values[i] * (1.0 - w) + values[i + 1] * w
}

fn hermite_interp(
    t: &[f64],
    values: &[Vector3<f64>],
    derivs: &[Vector3<f64>],
    tq: f64,
) -> Vector3<f64> {
    let n = t.len();
    let k = match t.binary_search_by(|v| v.partial_cmp(&tq).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(0) => 0,
        Err(i) if i >= n => n - 2,
        Err(i) => i - 1,
    };
    let h = t[k + 1] - t[k];
    let x = (tq - t[k]) / h;
    let (x2, x3) = (x * x, x * x * x);
    let h00 = 2.0 * x3 - 3.0 * x2 + 1.0;
    let h10 = x3 - 2.0 * x2 + x;
    let h01 = -2.0 * x3 + 3.0 * x2;
    let h11 = x3 - x2;
    values[k] * h00 + derivs[k] * (h * h10) + values[k + 1] * h01 + derivs[k + 1] * (h * h11)
}

/// Reparametrize by horizontal arclength onto `n_out` uniform samples.
/// The inversion of `s(t)` uses a monotone cubic, so it cannot overshoot.
pub fn reparametrize_by_arclength(
    curve: &ParamCurve,
    n_out: usize,
) -> Result<ParamCurve, CurveError> {
    assert!(n_out >= 5, "need at least 5 output samples");
    let s = horizontal_arclength(curve)?;
    let t_of_s = MonotoneCubic::new(&s, curve.params())?;
    let n = curve.len();

    let coords: Vec<Vector3<f64>> = (0..n).map(|i| curve.coord(i)).collect();
    let d1: Vec<Vector3<f64>> = (0..n).map(|i| curve.d1_at(i)).collect();
    let d2: Vec<Vector3<f64>> = (0..n).map(|i| curve.d2_at(i)).collect();

    let s_end = *s.last().unwrap();
    let ds = s_end / (n_out - 1) as f64;
    let mut t_out = Vec::with_capacity(n_out);
    let mut points = Vec::with_capacity(n_out);
    let mut v_out = Vec::with_capacity(n_out);
    let mut a_out = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let sj = j as f64 * ds;
        let tq = t_of_s.eval(sj);
        let pos = hermite_interp(curve.params(), &coords, &d1, tq);
        let vel = hermite_interp(curve.params(), &d1, &d2, tq);
        let acc = lerp_samples(curve.params(), &d2, tq);
        let sigma = (vel.x * vel.x + vel.y * vel.y).sqrt();
        let dsigma = (vel.x * acc.x + vel.y * acc.y) / sigma;
        let dgamma_ds = vel / sigma;
        let d2gamma_ds2 = acc / (sigma * sigma) - vel * (dsigma / (sigma * sigma * sigma));
        t_out.push(sj);
        points.push(H1Point::new(pos.x, pos.y, pos.z));
        v_out.push(dgamma_ds);
        a_out.push(d2gamma_ds2);
    }
    ParamCurve::new(t_out, points, Some(v_out), Some(a_out))
}

/// p-curvature at a sample, in an arbitrary parametrization.
pub fn p_curvature(curve: &ParamCurve, index: usize) -> Result<f64, CurveError> {
    let d = curve.d1_at(index);
    let speed2 = d.x * d.x + d.y * d.y;
    let report = is_horizontally_regular(curve, None);
    if speed2.sqrt() <= report.eps_used {
        return Err(CurveError::NotHorizontallyRegular { index, speed: speed2.sqrt() });
    }
    let dd = curve.d2_at(index);
    Ok((d.x * dd.y - dd.x * d.y) / speed2.powf(1.5))
}

/// T-variation at a sample, in an arbitrary parametrization.
pub fn t_variation(curve: &ParamCurve, index: usize) -> Result<f64, CurveError> {
    let d = curve.d1_at(index);
    let speed = (d.x * d.x + d.y * d.y).sqrt();
    let report = is_horizontally_regular(curve, None);
    if speed <= report.eps_used {
        return Err(CurveError::NotHorizontallyRegular { index, speed });
    }
    let p = curve.point(index);
    Ok((p.x * d.y - d.x * p.y + d.z) / speed)
}

/// The complete curve invariant: `k` and `tau` sampled on a uniform
/// horizontal-arclength grid.
#[derive(Clone, Debug)]
pub struct CurveSignature {
    s0: f64,
    ds: f64,
    k: Vec<f64>,
    tau: Vec<f64>,
}

impl CurveSignature {
    pub fn new(s0: f64, ds: f64, k: Vec<f64>, tau: Vec<f64>) -> Result<Self, CurveError> {
        if k.len() < 2 || k.len() != tau.len() {
            return Err(CurveError::TooFewSamples { need: 2, got: k.len().min(tau.len()) });
        }
        if !(ds > 0.0) || !ds.is_finite() || !s0.is_finite() {
            return Err(CurveError::NonUniformGrid);
        }
        if k.iter().chain(tau.iter()).any(|v| !v.is_finite()) {
            return Err(CurveError::NonUniformGrid);
        }
        Ok(CurveSignature { s0, ds, k, tau })
    }

    /// From explicit arclength samples; the grid must be uniform.
    pub fn from_samples(s: &[f64], k: Vec<f64>, tau: Vec<f64>) -> Result<Self, CurveError> {
        if s.len() < 2 || s.len() != k.len() || s.len() != tau.len() {
            return Err(CurveError::TooFewSamples { need: 2, got: s.len() });
        }
        let ds = s[1] - s[0];
        let scale = s.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if ds <= 0.0 || s.windows(2).any(|w| ((w[1] - w[0]) - ds).abs() > 1e-9 * scale) {
            return Err(CurveError::NonUniformGrid);
        }
        Self::new(s[0], ds, k, tau)
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn ds(&self) -> f64 {
        self.ds
    }

    pub fn s(&self, i: usize) -> f64 {
        self.s0 + i as f64 * self.ds
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    fn interp(&self, values: &[f64], s: f64) -> f64 {
        let x = ((s - self.s0) / self.ds).clamp(0.0, (self.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.len() - 2);
        let w = x - i as f64;
        values[i] * (1.0 - w) + values[i + 1] * w
    }

    /// Piecewise-linear evaluation of `k`, used to supply half-step values
    /// to the reconstruction integrator.
    pub fn k_at(&self, s: f64) -> f64 {
        self.interp(&self.k, s)
    }

    pub fn tau_at(&self, s: f64) -> f64 {
        self.interp(&self.tau, s)
    }

    /// Pointwise max deviation from another signature on the same grid.
    pub fn linf_distance(&self, other: &CurveSignature) -> f64 {
        assert_eq!(self.len(), other.len(), "signature grids differ");
        let mut worst = 0.0_f64;
        for i in 0..self.len() {
            worst = worst.max((self.k[i] - other.k[i]).abs());
            worst = worst.max((self.tau[i] - other.tau[i]).abs());
        }
        worst
    }
}

/// Full invariant extraction: reparametrize by arclength, then sample `k`
/// and `tau` on a uniform `n_out`-point grid starting at `s = 0`.
pub fn signature(curve: &ParamCurve, n_out: usize) -> Result<CurveSignature, CurveError> {
    require_regular(curve, None)?;
    let s = horizontal_arclength(curve)?;
    let n = curve.len();
    let mut k = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n);
    for i in 0..n {
        let d = curve.d1_at(i);
        let dd = curve.d2_at(i);
        let p = curve.point(i);
        let speed2 = d.x * d.x + d.y * d.y;
        k.push((d.x * dd.y - dd.x * d.y) / speed2.powf(1.5));
        tau.push((p.x * d.y - d.x * p.y + d.z) / speed2.sqrt());
    }
    let k_of_s = MonotoneCubic::new(&s, &k)?;
    let tau_of_s = MonotoneCubic::new(&s, &tau)?;
    let s_end = *s.last().unwrap();
    let ds = s_end / (n_out - 1) as f64;
    let mut k_out = Vec::with_capacity(n_out);
    let mut tau_out = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let sj = j as f64 * ds;
        k_out.push(k_of_s.eval(sj));
        tau_out.push(tau_of_s.eval(sj));
    }
    CurveSignature::new(0.0, ds, k_out, tau_out)
}

/// Integrate the frame equation for a prescribed signature. Returns the
/// curve sampled on the signature grid, with analytic derivatives read off
/// the frames (`gamma' = X + tau T`, `gamma'' = k Y + tau' T`).
pub fn reconstruct_curve(
    sig: &CurveSignature,
    initial: &OrientedFrame,
) -> Result<ParamCurve, CurveError> {
    let n = sig.len();
    let s0 = sig.s0();
    let s1 = sig.s(n - 1);
    let gen = |s: f64| {
        MaurerCartanValue::new(1.0, 0.0, sig.tau_at(s), sig.k_at(s)).to_matrix()
    };
    let trajectory = integrate_group_ode(&initial.to_matrix(), gen, s0, s1, n - 1, 1)?;

    let mut t = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    let mut d1 = Vec::with_capacity(n);
    let mut d2 = Vec::with_capacity(n);
    for (i, m) in trajectory.iter().enumerate() {
        let x_col = Vector3::new(m[(1, 1)], m[(2, 1)], m[(3, 1)]);
        let y_col = Vector3::new(m[(1, 2)], m[(2, 2)], m[(3, 2)]);
        let tau = sig.tau()[i];
        let k = sig.k()[i];
        // tau' by local order-2 differences on the signature grid
        let dtau = if i == 0 {
            (-3.0 * sig.tau()[0] + 4.0 * sig.tau()[1] - sig.tau()[2]) / (2.0 * sig.ds())
        } else if i == n - 1 {
            (3.0 * sig.tau()[n - 1] - 4.0 * sig.tau()[n - 2] + sig.tau()[n - 3]) / (2.0 * sig.ds())
        } else {
            (sig.tau()[i + 1] - sig.tau()[i - 1]) / (2.0 * sig.ds())
        };
        t.push(sig.s(i));
        points.push(H1Point::new(m[(1, 0)], m[(2, 0)], m[(3, 0)]));
        d1.push(x_col + Vector3::new(0.0, 0.0, tau));
        d2.push(y_col * k + Vector3::new(0.0, 0.0, dtau));
    }
    ParamCurve::new(t, points, Some(d1), Some(d2))
}

fn unit_frame_at(curve: &ParamCurve, i: usize) -> Result<OrientedFrame, CurveError> {
    let d = curve.d1_at(i);
    let v = TangentVector::from_coord(curve.point(i), d);
    let f = v.frame();
    Ok(OrientedFrame::from_horizontal_direction(curve.point(i), f.x, f.y)?)
}

/// Solve for the rigid motion aligning two arclength-parametrized curves on
/// a common grid, then verify the alignment along the whole curve. The frame
/// alignment diagnostic `A(s) = <g.X1, X2> + <g.Y1, Y2>` must stay within
/// `tol` of 2.
pub fn congruence_motion(
    c1: &ParamCurve,
    c2: &ParamCurve,
    tol: f64,
) -> Result<(HeisenbergMotion, f64), CurveError> {
    require_regular(c1, None)?;
    require_regular(c2, None)?;
    if c1.len() != c2.len() {
        return Err(CurveError::GridMismatch);
    }
    let scale = c1.params().last().unwrap().abs().max(1.0);
    if c1
        .params()
        .iter()
        .zip(c2.params())
        .any(|(a, b)| (a - b).abs() > 1e-9 * scale)
    {
        return Err(CurveError::GridMismatch);
    }

    let f1 = unit_frame_at(c1, 0)?;
    let f2 = unit_frame_at(c2, 0)?;
    let g = f1.motion_to(&f2);

    let mut max_deviation = 0.0_f64;
    for i in 0..c1.len() {
        let mapped = g.apply(c1.point(i));
        max_deviation = max_deviation.max(mapped.dist(c2.point(i)));

        let x1 = unit_frame_at(c1, i)?;
        let x2 = unit_frame_at(c2, i)?;
        let gx1 = g.pushforward(&x1.x());
        let gy1 = g.pushforward(&x1.y());
        // frame-component dot products; base points agree within the verdict
        let a = gx1.frame().dot(&x2.x().frame()) + gy1.frame().dot(&x2.y().frame());
        max_deviation = max_deviation.max((a - 2.0).abs());
    }
    if max_deviation <= tol {
        Ok((g, max_deviation))
    } else {
        Err(CurveError::NotCongruent { max_deviation })
    }
}

/// State of the geodesic Hamiltonian system: a point and its momenta.
#[derive(Clone, Copy, Debug)]
pub struct HamiltonianState {
    pub x: H1Point,
    pub xi: [f64; 3],
}

fn hamiltonian_rhs(state: &[f64], out: &mut [f64]) {
    let (x1, x2, _x3) = (state[0], state[1], state[2]);
    let (xi1, xi2, xi3) = (state[3], state[4], state[5]);
    out[0] = xi1 + x2 * xi3;
    out[1] = xi2 - x1 * xi3;
    out[2] = x2 * xi1 - x1 * xi2 + xi3 * (x1 * x1 + x2 * x2);
    out[3] = xi2 * xi3 - x1 * xi3 * xi3;
    out[4] = -xi1 * xi3 - x2 * xi3 * xi3;
    out[5] = 0.0;
}

/// Integrate the geodesic Hamiltonian system from `init` to `t_end`.
/// The third momentum is a conserved quantity of the flow.
pub fn geodesic_flow(
    init: &HamiltonianState,
    t_end: f64,
    n_steps: usize,
) -> Result<ParamCurve, CurveError> {
    Ok(geodesic_flow_full(init, t_end, n_steps)?.0)
}

/// As [`geodesic_flow`], also returning the momentum trajectory.
pub fn geodesic_flow_full(
    init: &HamiltonianState,
    t_end: f64,
    n_steps: usize,
) -> Result<(ParamCurve, Vec<[f64; 3]>), CurveError> {
    assert!(n_steps >= 4, "need at least 4 steps to form a curve");
    let problem = OdeProblem {
        dim: 6,
        rhs: |_t: f64, y: &[f64], dy: &mut [f64]| hamiltonian_rhs(y, dy),
        initial: vec![init.x.x, init.x.y, init.x.z, init.xi[0], init.xi[1], init.xi[2]],
        t0: 0.0,
        t1: t_end,
        steps: n_steps,
    };
    let trajectory = integrate_ode(&problem)?;
    let h = t_end / n_steps as f64;
    let mut t = Vec::with_capacity(trajectory.len());
    let mut points = Vec::with_capacity(trajectory.len());
    let mut d1 = Vec::with_capacity(trajectory.len());
    let mut d2 = Vec::with_capacity(trajectory.len());
    let mut momenta = Vec::with_capacity(trajectory.len());
    let mut rhs = [0.0; 6];
    for (i, state) in trajectory.iter().enumerate() {
        hamiltonian_rhs(state, &mut rhs);
        let (x1, x2) = (state[0], state[1]);
        let (xi1, xi2, xi3) = (state[3], state[4], state[5]);
        let (dx1, dx2) = (rhs[0], rhs[1]);
        let (dxi1, dxi2) = (rhs[3], rhs[4]);
        // second derivatives by differentiating the Hamiltonian field
        let ddx1 = dxi1 + dx2 * xi3;
        let ddx2 = dxi2 - dx1 * xi3;
        let ddx3 = dx2 * xi1 + x2 * dxi1 - dx1 * xi2 - x1 * dxi2
            + xi3 * (2.0 * x1 * dx1 + 2.0 * x2 * dx2);
        t.push(i as f64 * h);
        points.push(H1Point::new(state[0], state[1], state[2]));
        d1.push(Vector3::new(rhs[0], rhs[1], rhs[2]));
        d2.push(Vector3::new(ddx1, ddx2, ddx3));
        momenta.push([xi1, xi2, xi3]);
    }
    Ok((ParamCurve::new(t, points, Some(d1), Some(d2))?, momenta))
}

/// Parameters of the closed-form geodesics: rotational branch parameters
/// `(a1, a2)`, integration constants `(d1, d2, d3)`, the conserved momentum
/// `c3`, and line coefficients `(c1, c2)` for the `c3 = 0` branch.
#[derive(Clone, Copy, Debug)]
pub struct GeodesicParams {
    pub c3: f64,
    pub a1: f64,
    pub a2: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub c1: f64,
    pub c2: f64,
}

impl GeodesicParams {
    pub fn line(c1: f64, c2: f64, d: [f64; 3]) -> Self {
        GeodesicParams { c3: 0.0, a1: 0.0, a2: 0.0, d1: d[0], d2: d[1], d3: d[2], c1, c2 }
    }

    pub fn rotational(c3: f64, a1: f64, a2: f64, d: [f64; 3]) -> Self {
        GeodesicParams { c3, a1, a2, d1: d[0], d2: d[1], d3: d[2], c1: 0.0, c2: 0.0 }
    }

    /// The matching initial state of the Hamiltonian system.
    pub fn initial_state(&self) -> Result<HamiltonianState, CurveError> {
        if self.c3.abs() < C3_ZERO_TOL {
            let x = H1Point::new(self.d1, self.d2, self.d3);
            return Ok(HamiltonianState { x, xi: [self.c1, self.c2, 0.0] });
        }
        if self.a1 * self.a1 + self.a2 * self.a2 < 1e-30 {
            return Err(CurveError::DegenerateParams);
        }
        let (x, dx) = if self.c3 > 0.0 {
            let x = H1Point::new(
                self.a2 + self.d1,
                self.a1 + self.d2,
                self.a2 * self.d2 - self.a1 * self.d1 + self.d3,
            );
            let omega = 2.0 * self.c3;
            (x, (omega * self.a1, -omega * self.a2))
        } else {
            let x = H1Point::new(
                self.a2 + self.d1,
                -self.a1 + self.d2,
                self.a1 * self.d1 + self.a2 * self.d2 + self.d3,
            );
            let omega = -2.0 * self.c3;
            (x, (omega * self.a1, omega * self.a2))
        };
        let xi1 = dx.0 - x.y * self.c3;
        let xi2 = dx.1 + x.x * self.c3;
        Ok(HamiltonianState { x, xi: [xi1, xi2, self.c3] })
    }
}

/// Evaluate the closed-form geodesic on a uniform `t`-grid.
pub fn geodesic_closed_form(
    params: &GeodesicParams,
    t0: f64,
    t1: f64,
    n: usize,
) -> Result<ParamCurve, CurveError> {
    assert!(n >= 5, "need at least 5 samples");
    let p = *params;
    if p.c3.abs() < C3_ZERO_TOL {
        let slope = p.c1 * p.d2 - p.c2 * p.d1;
        return Ok(ParamCurve::from_fn(t0, t1, n, |t| {
            (
                H1Point::new(p.c1 * t + p.d1, p.c2 * t + p.d2, slope * t + p.d3),
                Vector3::new(p.c1, p.c2, slope),
                Vector3::zeros(),
            )
        }));
    }
    if p.a1 * p.a1 + p.a2 * p.a2 < 1e-30 {
        return Err(CurveError::DegenerateParams);
    }
    let a2sum = p.a1 * p.a1 + p.a2 * p.a2;
    if p.c3 > 0.0 {
        let w = 2.0 * p.c3;
        let (s1, s2) = (p.a2 * p.d1 + p.a1 * p.d2, p.a2 * p.d2 - p.a1 * p.d1);
        Ok(ParamCurve::from_fn(t0, t1, n, |t| {
            let (sn, cs) = (w * t).sin_cos();
            let x = H1Point::new(
                p.a1 * sn + p.a2 * cs + p.d1,
                -p.a2 * sn + p.a1 * cs + p.d2,
                s1 * sn + s2 * cs + w * a2sum * t + p.d3,
            );
            let v = Vector3::new(
                w * (p.a1 * cs - p.a2 * sn),
                w * (-p.a2 * cs - p.a1 * sn),
                w * (s1 * cs - s2 * sn) + w * a2sum,
            );
            let a = Vector3::new(
                -w * w * (p.a1 * sn + p.a2 * cs),
                -w * w * (-p.a2 * sn + p.a1 * cs),
                -w * w * (s1 * sn + s2 * cs),
            );
            (x, v, a)
        }))
    } else {
        let w = -2.0 * p.c3;
        // z-coefficients forced by vanishing T-variation along the flow:
        // z = (a1 d2 - a2 d1) sin + (a1 d1 + a2 d2) cos + 2 c3 A t + d3
        let (s1, s2) = (p.a1 * p.d2 - p.a2 * p.d1, p.a1 * p.d1 + p.a2 * p.d2);
        Ok(ParamCurve::from_fn(t0, t1, n, |t| {
            let (sn, cs) = (w * t).sin_cos();
            let x = H1Point::new(
                p.a1 * sn + p.a2 * cs + p.d1,
                p.a2 * sn - p.a1 * cs + p.d2,
                s1 * sn + s2 * cs + 2.0 * p.c3 * a2sum * t + p.d3,
            );
            let v = Vector3::new(
                w * (p.a1 * cs - p.a2 * sn),
                w * (p.a2 * cs + p.a1 * sn),
                w * (s1 * cs - s2 * sn) + 2.0 * p.c3 * a2sum,
            );
            let a = Vector3::new(
                -w * w * (p.a1 * sn + p.a2 * cs),
                -w * w * (p.a2 * sn - p.a1 * cs),
                -w * w * (s1 * sn + s2 * cs),
            );
            (x, v, a)
        }))
    }
}

/// A curve is a geodesic exactly when its T-variation vanishes and its
/// p-curvature is constant (both measured on the arclength parametrization).
pub fn is_geodesic(curve: &ParamCurve, tol: f64) -> Result<bool, CurveError> {
    let sig = signature(curve, curve.len())?;
    let max_tau = sig.tau().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let kmax = sig.k().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kmin = sig.k().iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(max_tau <= tol && (kmax - kmin) <= tol)
}

/// Unit contact-plane direction of the velocity plus `J` of it; used by the
/// congruence diagnostic and exposed for frame-based cross-checks.
pub fn frame_along(
    curve: &ParamCurve,
    i: usize,
) -> Result<(TangentVector, TangentVector), CurveError> {
    let (h, _) = velocity_decomposition(curve, i);
    let n = h.horizontal_norm();
    if n == 0.0 {
        return Err(CurveError::NotHorizontallyRegular { index: i, speed: 0.0 });
    }
    let x = TangentVector::horizontal(h.base(), h.frame().x / n, h.frame().y / n);
    let y = apply_j0(&x)?;
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line_curve() -> ParamCurve {
        ParamCurve::from_fn(0.0, 1.0, 101, |t| {
            (H1Point::new(t, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::zeros())
        })
    }

    fn circle_lift() -> ParamCurve {
        ParamCurve::from_fn(0.0, std::f64::consts::TAU, 629, |t| {
            let (s, c) = t.sin_cos();
            (
                H1Point::new(c, s, 0.0),
                Vector3::new(-s, c, 0.0),
                Vector3::new(-c, -s, 0.0),
            )
        })
    }

    #[test]
    fn velocity_decomposition_examples() {
        let c = line_curve();
        let (h, tpart) = velocity_decomposition(&c, 50);
        assert_eq!(h.frame(), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(tpart, 0.0);

        let vertical = ParamCurve::from_fn(0.0, 1.0, 11, |t| {
            (H1Point::new(0.0, 0.0, t), Vector3::new(0.0, 0.0, 1.0), Vector3::zeros())
        });
        let (h, tpart) = velocity_decomposition(&vertical, 5);
        assert_eq!(h.frame().norm(), 0.0);
        assert_eq!(tpart, 1.0);

        let circ = circle_lift();
        let i = 100;
        let t = circ.params()[i];
        let (h, tpart) = velocity_decomposition(&circ, i);
        assert_abs_diff_eq!(h.frame().x, -t.sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(h.frame().y, t.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(tpart, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn regularity_examples() {
        assert!(is_horizontally_regular(&line_curve(), None).regular);

        let vertical = ParamCurve::from_fn(0.0, 1.0, 11, |t| {
            (H1Point::new(0.0, 0.0, t), Vector3::new(0.0, 0.0, 1.0), Vector3::zeros())
        });
        let report = is_horizontally_regular(&vertical, None);
        assert!(!report.regular);
        assert_eq!(report.first_failure, Some(0));

        let cubic = ParamCurve::from_fn(-1.0, 1.0, 101, |t| {
            (
                H1Point::new(t * t * t, 0.0, 0.0),
                Vector3::new(3.0 * t * t, 0.0, 0.0),
                Vector3::new(6.0 * t, 0.0, 0.0),
            )
        });
        let report = is_horizontally_regular(&cubic, Some(1e-8));
        assert!(!report.regular);
        assert_eq!(report.first_failure, Some(50)); // t = 0
    }

    #[test]
    fn arclength_examples() {
        let s = horizontal_arclength(&line_curve()).unwrap();
        for (i, &si) in s.iter().enumerate() {
            assert_abs_diff_eq!(si, i as f64 * 0.01, epsilon = 1e-13);
        }

        let s = horizontal_arclength(&circle_lift()).unwrap();
        let params = circle_lift();
        for (i, &si) in s.iter().enumerate() {
            assert_abs_diff_eq!(si, params.params()[i], epsilon = 1e-12);
        }

        let fast = ParamCurve::from_fn(0.0, 1.0, 101, |t| {
            (H1Point::new(2.0 * t, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0), Vector3::zeros())
        });
        let s = horizontal_arclength(&fast).unwrap();
        assert_abs_diff_eq!(*s.last().unwrap(), 2.0, epsilon = 1e-13);

        let vertical = ParamCurve::from_fn(0.0, 1.0, 11, |t| {
            (H1Point::new(0.0, 0.0, t), Vector3::new(0.0, 0.0, 1.0), Vector3::zeros())
        });
        assert!(matches!(
            horizontal_arclength(&vertical),
            Err(CurveError::NotHorizontallyRegular { .. })
        ));
    }

    #[test]
    fn reparametrize_examples() {
        let fast = ParamCurve::from_fn(0.0, 1.0, 101, |t| {
            (H1Point::new(2.0 * t, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0), Vector3::zeros())
        });
        let rep = reparametrize_by_arclength(&fast, 11).unwrap();
        for j in 0..11 {
            let sj = 2.0 * j as f64 / 10.0;
            assert_abs_diff_eq!(rep.params()[j], sj, epsilon = 1e-12);
            assert_abs_diff_eq!(rep.point(j).x, sj, epsilon = 1e-10);
        }

        // idempotence on an already unit-horizontal-speed curve
        let circ = circle_lift();
        let rep = reparametrize_by_arclength(&circ, circ.len()).unwrap();
        let mut worst = 0.0_f64;
        for j in 0..rep.len() {
            worst = worst.max(rep.point(j).dist(circ.point(j)));
        }
        assert!(worst <= 1e-8, "resampling deviation {worst}");

        // double-speed circle becomes the unit-speed circle
        let fast_circle = ParamCurve::from_fn(0.0, std::f64::consts::PI, 401, |t| {
            let (s, c) = (2.0 * t).sin_cos();
            (
                H1Point::new(c, s, 0.0),
                Vector3::new(-2.0 * s, 2.0 * c, 0.0),
                Vector3::new(-4.0 * c, -4.0 * s, 0.0),
            )
        });
        let rep = reparametrize_by_arclength(&fast_circle, 401).unwrap();
        let mut worst = 0.0_f64;
        for j in 0..rep.len() {
            let sj = rep.params()[j];
            worst = worst.max(rep.point(j).dist(H1Point::new(sj.cos(), sj.sin(), 0.0)));
            worst = worst.max((rep.horizontal_speed(j) - 1.0).abs());
        }
        assert!(worst <= 1e-6, "reparametrized circle deviation {worst}");
    }

    #[test]
    fn curvature_examples() {
        let line = line_curve();
        assert_abs_diff_eq!(p_curvature(&line, 30).unwrap(), 0.0);
        assert_abs_diff_eq!(t_variation(&line, 30).unwrap(), 0.0);

        let circ = circle_lift();
        for i in [0, 57, 300, 628] {
            assert_abs_diff_eq!(p_curvature(&circ, i).unwrap(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(t_variation(&circ, i).unwrap(), 1.0, epsilon = 1e-12);
        }

        // helix-type geodesic instance
        let helix = ParamCurve::from_fn(0.0, 4.0, 201, |t| {
            let (s, c) = t.sin_cos();
            (
                H1Point::new(s, c, t),
                Vector3::new(c, -s, 1.0),
                Vector3::new(-s, -c, 0.0),
            )
        });
        for i in [0, 50, 123, 200] {
            assert_abs_diff_eq!(p_curvature(&helix, i).unwrap(), -1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(t_variation(&helix, i).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn signature_examples() {
        let sig = signature(&line_curve(), 51).unwrap();
        assert!(sig.k().iter().all(|&v| v.abs() < 1e-12));
        assert!(sig.tau().iter().all(|&v| v.abs() < 1e-12));

        let sig = signature(&circle_lift(), 101).unwrap();
        assert!(sig.k().iter().all(|&v| (v - 1.0).abs() < 1e-9));
        assert!(sig.tau().iter().all(|&v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn signature_motion_invariance() {
        let circ = circle_lift();
        let g = HeisenbergMotion::new(H1Point::new(0.4, -1.1, 0.8), 1.9);
        let moved = circ.map_motion(&g);
        let sig1 = signature(&circ, 201).unwrap();
        let sig2 = signature(&moved, 201).unwrap();
        assert!(sig1.linf_distance(&sig2) <= 1e-8);
    }

    #[test]
    fn reconstruct_examples() {
        // zero signature: straight horizontal line through the initial frame
        let n = 2001;
        let ds = 1.0 / (n - 1) as f64;
        let sig = CurveSignature::new(0.0, ds, vec![0.0; n], vec![0.0; n]).unwrap();
        let curve = reconstruct_curve(&sig, &OrientedFrame::standard()).unwrap();
        for (i, p) in curve.points().iter().enumerate() {
            assert_abs_diff_eq!(p.x, i as f64 * ds, epsilon = 1e-10);
            assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.z, 0.0, epsilon = 1e-12);
        }

        // k = tau = 1 round trip
        let sig = CurveSignature::new(0.0, ds, vec![1.0; n], vec![1.0; n]).unwrap();
        let curve = reconstruct_curve(&sig, &OrientedFrame::standard()).unwrap();
        let sig2 = signature(&curve, n).unwrap();
        assert!(sig.linf_distance(&sig2) <= 1e-6);
    }

    #[test]
    fn reconstruct_matches_closed_form_geodesic() {
        // k = -1, tau = 0 is a rotational geodesic
        let n = 1001;
        let s_end = 2.0;
        let ds = s_end / (n - 1) as f64;
        let sig = CurveSignature::new(0.0, ds, vec![-1.0; n], vec![0.0; n]).unwrap();
        let rec = reconstruct_curve(&sig, &OrientedFrame::standard()).unwrap();
        assert!(is_geodesic(&rec, 1e-8).unwrap());

        // closed form with |k| = 1/sqrt(a1^2+a2^2) = 1, horizontal speed 1:
        // c3 > 0, a1^2 + a2^2 = 1 and 2 c3 sqrt(a1^2+a2^2) = 1
        let params = GeodesicParams::rotational(0.5, 1.0, 0.0, [0.0, 0.0, 0.0]);
        let cf = geodesic_closed_form(&params, 0.0, s_end, n).unwrap();
        let cf_sig = signature(&cf, n).unwrap();
        assert!(cf_sig.k().iter().all(|&v| (v + 1.0).abs() < 1e-9));

        let (g, dev) = congruence_motion(&rec, &cf, 1e-6).unwrap();
        assert!(dev <= 1e-6, "congruence deviation {dev}");
        let _ = g;
    }

    #[test]
    fn congruence_examples() {
        let circ = circle_lift();
        let rep = reparametrize_by_arclength(&circ, 401).unwrap();
        let (g, dev) = congruence_motion(&rep, &rep, 1e-9).unwrap();
        assert!(dev <= 1e-12);
        assert!(g.translation_part().dist(H1Point::origin()) <= 1e-9);
        assert_abs_diff_eq!(g.theta(), 0.0, epsilon = 1e-9);

        let g0 = HeisenbergMotion::new(H1Point::new(-0.7, 0.2, 1.4), 0.6);
        let moved = rep.map_motion(&g0);
        let (g, _) = congruence_motion(&rep, &moved, 1e-6).unwrap();
        assert!((g.matrix() - g0.matrix()).norm() <= 1e-8);

        let line_long = ParamCurve::from_fn(0.0, *rep.params().last().unwrap(), 401, |t| {
            (H1Point::new(t, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::zeros())
        });
        assert!(matches!(
            congruence_motion(&line_long, &rep, 1e-6),
            Err(CurveError::NotCongruent { .. })
        ));
    }

    #[test]
    fn geodesic_flow_line_case() {
        let init = HamiltonianState { x: H1Point::origin(), xi: [0.7, -0.4, 0.0] };
        let curve = geodesic_flow(&init, 2.0, 500).unwrap();
        for (i, p) in curve.points().iter().enumerate() {
            let t = curve.params()[i];
            assert_abs_diff_eq!(p.x, 0.7 * t, epsilon = 1e-10);
            assert_abs_diff_eq!(p.y, -0.4 * t, epsilon = 1e-10);
            assert_abs_diff_eq!(p.z, 0.0, epsilon = 1e-10);
        }
        let sig = signature(&curve, 101).unwrap();
        assert!(sig.k().iter().all(|&v| v.abs() < 1e-10));
        assert!(sig.tau().iter().all(|&v| v.abs() < 1e-10));
    }

    #[test]
    fn geodesic_flow_matches_unit_circle_helix() {
        let init = HamiltonianState { x: H1Point::new(0.0, 1.0, 0.0), xi: [0.5, 0.0, 0.5] };
        let (curve, momenta) = geodesic_flow_full(&init, 1.0, 1000).unwrap();
        let mut worst = 0.0_f64;
        for (i, p) in curve.points().iter().enumerate() {
            let t = curve.params()[i];
            worst = worst.max(p.dist(H1Point::new(t.sin(), t.cos(), t)));
        }
        assert!(worst <= 1e-6, "closed-form deviation {worst}");
        // conserved momentum: exact constancy of xi3
        assert!(momenta.iter().all(|m| (m[2] - 0.5).abs() <= 1e-12));
        assert!(is_geodesic(&curve, 1e-5).unwrap());
    }

    #[test]
    fn closed_form_examples() {
        let pos = GeodesicParams::rotational(0.8, 0.6, -0.3, [0.4, 0.1, -0.2]);
        let c = geodesic_closed_form(&pos, 0.0, 2.0, 501).unwrap();
        let sig = signature(&c, 201).unwrap();
        let expect = -1.0 / (0.6_f64 * 0.6 + 0.3 * 0.3).sqrt();
        assert!(sig.k().iter().all(|&v| (v - expect).abs() < 1e-8));
        assert!(sig.tau().iter().all(|&v| v.abs() < 1e-8));

        let neg = GeodesicParams::rotational(-0.8, 0.6, -0.3, [0.4, 0.1, -0.2]);
        let c = geodesic_closed_form(&neg, 0.0, 2.0, 501).unwrap();
        let sig = signature(&c, 201).unwrap();
        assert!(sig.k().iter().all(|&v| (v + expect).abs() < 1e-8));
        assert!(sig.tau().iter().all(|&v| v.abs() < 1e-8));

        let line = GeodesicParams::line(1.5, -0.5, [2.0, 1.0, 0.5]);
        let c = geodesic_closed_form(&line, 0.0, 1.0, 101).unwrap();
        let p = c.point(100);
        assert_abs_diff_eq!(p.x, 3.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.5, epsilon = 1e-12);
        // z slope c1 d2 - c2 d1 = 1.5 + 1.0 = 2.5
        assert_abs_diff_eq!(p.z, 0.5 + 2.5, epsilon = 1e-12);

        let degenerate = GeodesicParams::rotational(1.0, 0.0, 0.0, [0.0; 3]);
        assert!(matches!(
            geodesic_closed_form(&degenerate, 0.0, 1.0, 11),
            Err(CurveError::DegenerateParams)
        ));
    }

    #[test]
    fn closed_form_initial_state_matches_flow() {
        for params in [
            GeodesicParams::rotational(0.7, 0.5, -0.2, [0.3, -0.1, 0.6]),
            GeodesicParams::rotational(-0.9, -0.4, 0.8, [-0.2, 0.5, 0.0]),
            GeodesicParams::line(0.9, 0.4, [1.0, -1.0, 0.3]),
        ] {
            let init = params.initial_state().unwrap();
            let flow = geodesic_flow(&init, 1.0, 2000).unwrap();
            let cf = geodesic_closed_form(&params, 0.0, 1.0, 2001).unwrap();
            let mut worst = 0.0_f64;
            for i in 0..flow.len() {
                worst = worst.max(flow.point(i).dist(cf.point(i)));
            }
            assert!(worst <= 1e-6, "flow vs closed form {worst}");
        }
    }

    #[test]
    fn is_geodesic_examples() {
        let params = GeodesicParams::rotational(0.5, 1.0, 0.0, [0.0; 3]);
        let c = geodesic_closed_form(&params, 0.0, 3.0, 301).unwrap();
        assert!(is_geodesic(&c, 1e-8).unwrap());

        assert!(!is_geodesic(&circle_lift(), 1e-6).unwrap());
        assert!(is_geodesic(&line_curve(), 1e-10).unwrap());
    }

    #[test]
    fn reversed_positive_branch_is_congruent_to_negative_branch() {
        let a = (0.5_f64, 0.3_f64);
        let pos = GeodesicParams::rotational(0.6, a.0, a.1, [0.0; 3]);
        let fwd = geodesic_closed_form(&pos, 0.0, 1.5, 601).unwrap();

        // traverse backward: t -> -t
        let rev = ParamCurve::from_fn(0.0, 1.5, 601, |t| {
            let tt = 1.5 - t;
            let i = ((tt / 1.5) * 600.0).round() as usize;
            let p = fwd.point(i);
            let v = fwd.d1_at(i);
            let acc = fwd.d2_at(i);
            (p, -v, acc)
        });
        let rev_sig = signature(&rev, 101).unwrap();
        let expect = 1.0 / (a.0 * a.0 + a.1 * a.1).sqrt();
        assert!(rev_sig.k().iter().all(|&v| (v - expect).abs() < 1e-6));
        assert!(rev_sig.tau().iter().all(|&v| v.abs() < 1e-6));

        // a matching negative-branch instance has the same signature, hence
        // is congruent; check through the congruence solver
        let neg = GeodesicParams::rotational(-0.6, a.0, a.1, [0.0; 3]);
        let neg_cf = geodesic_closed_form(&neg, 0.0, 1.5, 601).unwrap();
        let s_end = horizontal_arclength(&rev).unwrap().last().cloned().unwrap();
        let s_end_neg = horizontal_arclength(&neg_cf).unwrap().last().cloned().unwrap();
        assert_abs_diff_eq!(s_end, s_end_neg, epsilon = 1e-9);
        let r1 = reparametrize_by_arclength(&rev, 401).unwrap();
        let r2 = reparametrize_by_arclength(&neg_cf, 401).unwrap();
        let (_, dev) = congruence_motion(&r1, &r2, 1e-4).unwrap();
        assert!(dev <= 1e-4, "reverse-orientation congruence deviation {dev}");
    }
}
