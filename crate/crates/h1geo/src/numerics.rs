//! Shared numerical kernels.
//!
//! Everything downstream — arclength quadrature, frame-ODE reconstruction,
//! grid derivatives of surface coefficients — funnels through the fixed-step
//! integrators, the composite Simpson rule, and the order-2 finite
//! differences defined here. Integration is deliberately fixed-step:
//! signatures and coefficient grids arrive uniformly sampled, and an adaptive
//! scheme would desynchronize the state from the data grid.

use nalgebra::{Matrix2, Matrix4, Vector2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("state became non-finite at step {step}")]
    NonFiniteState { step: usize },
    #[error("quadrature needs at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("grid too small along the axis: need {need} samples, got {got}")]
    GridTooSmall { need: usize, got: usize },
    #[error("matrix too far from SO(2): Frobenius distance {0:.3e}")]
    TooFarFromGroup(f64),
    #[error("interpolation abscissae must be strictly increasing")]
    NonMonotonicAbscissae,
}

/// Fixed-step initial value problem in `R^dim`.
pub struct OdeProblem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub dim: usize,
    pub rhs: F,
    pub initial: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

/// Classical 4-stage explicit integrator; returns the full trajectory
/// including the initial state (`steps + 1` entries).
pub fn integrate_ode<F>(problem: &OdeProblem<F>) -> Result<Vec<Vec<f64>>, NumericsError>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    assert!(problem.steps >= 1, "step count must be >= 1");
    assert_eq!(problem.initial.len(), problem.dim, "initial state dimension mismatch");
    let n = problem.dim;
    let h = (problem.t1 - problem.t0) / problem.steps as f64;
    let mut trajectory = Vec::with_capacity(problem.steps + 1);
    let mut state = problem.initial.clone();
    trajectory.push(state.clone());

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    for step in 0..problem.steps {
        let t = problem.t0 + step as f64 * h;
        (problem.rhs)(t, &state, &mut k1);
        for i in 0..n {
            tmp[i] = state[i] + 0.5 * h * k1[i];
        }
        (problem.rhs)(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = state[i] + 0.5 * h * k2[i];
        }
        (problem.rhs)(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = state[i] + h * k3[i];
        }
        (problem.rhs)(t + h, &tmp, &mut k4);
        for i in 0..n {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFiniteState { step });
        }
        trajectory.push(state.clone());
    }
    Ok(trajectory)
}

/// Project a near-rotation onto SO(2): normalize the first column and set the
/// second to its 90-degree rotation. Idempotent on rotations.
pub fn so2_project(m: &Matrix2<f64>) -> Result<Matrix2<f64>, NumericsError> {
    let c0 = Vector2::new(m[(0, 0)], m[(1, 0)]);
    let norm = c0.norm();
    if norm < 0.5 {
        return Err(NumericsError::TooFarFromGroup((m - Matrix2::identity()).norm()));
    }
    let u = c0 / norm;
    let r = Matrix2::new(u.x, -u.y, u.y, u.x);
    let dist = (m - r).norm();
    if dist > 0.5 {
        return Err(NumericsError::TooFarFromGroup(dist));
    }
    Ok(r)
}

/// Restore the PSH(1) shape of a 4x4 state: exact structural zeros, rotation
/// block projected to SO(2), dependent entries recomputed from `p` and `R`.
pub fn reproject_group_matrix(m: &mut Matrix4<f64>) -> Result<(), NumericsError> {
    let rot = Matrix2::new(m[(1, 1)], m[(1, 2)], m[(2, 1)], m[(2, 2)]);
    let r = so2_project(&rot)?;
    let (p1, p2) = (m[(1, 0)], m[(2, 0)]);
    *m = Matrix4::new(
        1.0,
        0.0,
        0.0,
        0.0,
        p1,
        r[(0, 0)],
        r[(0, 1)],
        0.0,
        p2,
        r[(1, 0)],
        r[(1, 1)],
        0.0,
        m[(3, 0)],
        r[(0, 0)] * p2 - r[(1, 0)] * p1,
        r[(0, 1)] * p2 - r[(1, 1)] * p1,
        1.0,
    );
    Ok(())
}

/// Group-membership residual of a 4x4 PSH(1) candidate: orthogonality drift
/// of the rotation block plus the error in the dependent last-row entries and
/// structural zeros.
pub fn group_membership_residual(m: &Matrix4<f64>) -> f64 {
    let rot = Matrix2::new(m[(1, 1)], m[(1, 2)], m[(2, 1)], m[(2, 2)]);
    let ortho = (rot.transpose() * rot - Matrix2::identity()).norm();
    let det = (rot.determinant() - 1.0).abs();
    let (p1, p2) = (m[(1, 0)], m[(2, 0)]);
    let dep = ((m[(3, 1)] - (rot[(0, 0)] * p2 - rot[(1, 0)] * p1)).powi(2)
        + (m[(3, 2)] - (rot[(0, 1)] * p2 - rot[(1, 1)] * p1)).powi(2))
    .sqrt();
    let zeros = (m[(0, 0)] - 1.0).abs()
        + m[(0, 1)].abs()
        + m[(0, 2)].abs()
        + m[(0, 3)].abs()
        + m[(1, 3)].abs()
        + m[(2, 3)].abs()
        + (m[(3, 3)] - 1.0).abs();
    ortho + det + dep + zeros
}

/// Integrate `dM/dt = M * gen(t)` on 4x4 PSH(1) states with the classical
/// 4-stage scheme, re-projecting onto the group every `reproject_every` steps
/// (and at the end). `gen` must return psh(1)-valued matrices.
pub fn integrate_group_ode<G>(
    initial: &Matrix4<f64>,
    gen: G,
    t0: f64,
    t1: f64,
    steps: usize,
    reproject_every: usize,
) -> Result<Vec<Matrix4<f64>>, NumericsError>
where
    G: Fn(f64) -> Matrix4<f64>,
{
    assert!(steps >= 1, "step count must be >= 1");
    let h = (t1 - t0) / steps as f64;
    let mut m = *initial;
    let mut trajectory = Vec::with_capacity(steps + 1);
    trajectory.push(m);
    let every = reproject_every.max(1);
    for step in 0..steps {
        let t = t0 + step as f64 * h;
        let g1 = gen(t);
        let gm = gen(t + 0.5 * h);
        let g4 = gen(t + h);
        let k1 = m * g1;
        let k2 = (m + k1 * (0.5 * h)) * gm;
        let k3 = (m + k2 * (0.5 * h)) * gm;
        let k4 = (m + k3 * h) * g4;
        m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFiniteState { step });
        }
        if (step + 1) % every == 0 || step + 1 == steps {
            reproject_group_matrix(&mut m)?;
        }
        trajectory.push(m);
    }
    Ok(trajectory)
}

/// Composite Simpson rule on uniformly spaced samples. With an even sample
/// count the last interval falls back to the trapezoid rule.
pub fn simpson_integrate(samples: &[f64], step: f64) -> Result<f64, NumericsError> {
    let n = samples.len();
    if n < 3 {
        return Err(NumericsError::TooFewSamples(n));
    }
    let simpson_end = if n % 2 == 1 { n } else { n - 1 };
    let mut acc = samples[0] + samples[simpson_end - 1];
    let mut i = 1;
    while i < simpson_end - 1 {
        acc += 4.0 * samples[i];
        i += 2;
    }
    let mut i = 2;
    while i < simpson_end - 1 {
        acc += 2.0 * samples[i];
        i += 2;
    }
    let mut total = acc * step / 3.0;
    if n % 2 == 0 {
        total += 0.5 * step * (samples[n - 2] + samples[n - 1]);
    }
    Ok(total)
}

/// Cumulative integral of uniformly spaced samples, Simpson-consistent: at
/// even indices it reproduces the composite Simpson value, odd indices use
/// the quadratic through the three nearest samples.
pub fn cumulative_integral(samples: &[f64], step: f64) -> Result<Vec<f64>, NumericsError> {
    let n = samples.len();
    if n < 3 {
        return Err(NumericsError::TooFewSamples(n));
    }
    let mut s = vec![0.0; n];
    for i in 1..n {
        if i % 2 == 0 {
            s[i] = s[i - 2] + step / 3.0 * (samples[i - 2] + 4.0 * samples[i - 1] + samples[i]);
        } else if i + 1 < n {
            // first half of the parabola through (i-1, i, i+1)
            s[i] = s[i - 1]
                + step / 12.0 * (5.0 * samples[i - 1] + 8.0 * samples[i] - samples[i + 1]);
        } else {
            // trailing interval: parabola through the last three samples
            s[i] = s[i - 1]
                + step / 12.0 * (-samples[i - 2] + 8.0 * samples[i - 1] + 5.0 * samples[i]);
        }
    }
    Ok(s)
}

/// Scalar field sampled on a uniform 2D grid, row-major with `u` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    nu: usize,
    nv: usize,
    du: f64,
    dv: f64,
    data: Vec<f64>,
}

impl GridField {
    pub fn zeros(nu: usize, nv: usize, du: f64, dv: f64) -> Self {
        assert!(nu >= 3 && nv >= 3, "grid must be at least 3x3");
        assert!(du > 0.0 && dv > 0.0, "grid steps must be positive");
        GridField { nu, nv, du, dv, data: vec![0.0; nu * nv] }
    }

    pub fn from_fn(nu: usize, nv: usize, du: f64, dv: f64, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut g = Self::zeros(nu, nv, du, dv);
        for j in 0..nv {
            for i in 0..nu {
                g.data[j * nu + i] = f(i, j);
            }
        }
        g
    }

    pub fn from_data(nu: usize, nv: usize, du: f64, dv: f64, data: Vec<f64>) -> Self {
        assert!(nu >= 3 && nv >= 3, "grid must be at least 3x3");
        assert_eq!(data.len(), nu * nv, "data length must equal nu*nv");
        GridField { nu, nv, du, dv, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nu + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[j * self.nu + i] = value;
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            nu: self.nu,
            nv: self.nv,
            du: self.du,
            dv: self.dv,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> GridField {
        assert_eq!((self.nu, self.nv), (other.nu, other.nv), "grid shape mismatch");
        GridField {
            nu: self.nu,
            nv: self.nv,
            du: self.du,
            dv: self.dv,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Max |value| and its cell over all samples.
    pub fn max_abs(&self) -> (f64, (usize, usize)) {
        let mut best = (0.0_f64, (0, 0));
        for j in 0..self.nv {
            for i in 0..self.nu {
                let v = self.get(i, j).abs();
                if v > best.0 {
                    best = (v, (i, j));
                }
            }
        }
        best
    }

    /// Max |value| and its cell over interior samples only.
    pub fn max_abs_interior(&self) -> (f64, (usize, usize)) {
        let mut best = (0.0_f64, (1, 1));
        for j in 1..self.nv - 1 {
            for i in 1..self.nu - 1 {
                let v = self.get(i, j).abs();
                if v > best.0 {
                    best = (v, (i, j));
                }
            }
        }
        best
    }

    /// Every other sample in both directions; steps double.
    pub fn coarsen(&self) -> GridField {
        let nu = self.nu.div_ceil(2);
        let nv = self.nv.div_ceil(2);
        GridField::from_fn(nu, nv, 2.0 * self.du, 2.0 * self.dv, |i, j| self.get(2 * i, 2 * j))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    U,
    V,
}

/// Finite-difference partial of a grid field: central order-2 in the
/// interior, one-sided order-2 on the boundary. `order` is 1 or 2.
pub fn fd_partial(field: &GridField, axis: Axis, order: u8) -> Result<GridField, NumericsError> {
    assert!(order == 1 || order == 2, "derivative order must be 1 or 2");
    let (n, h) = match axis {
        Axis::U => (field.nu, field.du),
        Axis::V => (field.nv, field.dv),
    };
    let need = if order == 1 { 3 } else { 4 };
    if n < need {
        return Err(NumericsError::GridTooSmall { need, got: n });
    }
    let sample = |i: usize, j: usize, k: usize| match axis {
        Axis::U => field.get(k, j),
        Axis::V => {
            let _ = i;
            field.get(i, k)
        }
    };
    let mut out = GridField::zeros(field.nu, field.nv, field.du, field.dv);
    for j in 0..field.nv {
        for i in 0..field.nu {
            let idx = match axis {
                Axis::U => i,
                Axis::V => j,
            };
            let f = |k: usize| sample(i, j, k);
            let value = match (order, idx) {
                (1, 0) => (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h),
                (1, k) if k == n - 1 => (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) / (2.0 * h),
                (1, k) => (f(k + 1) - f(k - 1)) / (2.0 * h),
                (2, 0) => (2.0 * f(0) - 5.0 * f(1) + 4.0 * f(2) - f(3)) / (h * h),
                (2, k) if k == n - 1 => {
                    (2.0 * f(n - 1) - 5.0 * f(n - 2) + 4.0 * f(n - 3) - f(n - 4)) / (h * h)
                }
                (2, k) => (f(k + 1) - 2.0 * f(k) + f(k - 1)) / (h * h),
                _ => unreachable!(),
            };
            out.set(i, j, value);
        }
    }
    Ok(out)
}

/// Mixed partial by composition, u then v.
pub fn fd_mixed(field: &GridField) -> Result<GridField, NumericsError> {
    fd_partial(&fd_partial(field, Axis::U, 1)?, Axis::V, 1)
}

/// Shape-preserving cubic interpolant (Fritsch-Carlson derivative limiter).
/// Monotone data yields a monotone interpolant, so inverting an arclength
/// table cannot overshoot.
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self, NumericsError> {
        assert_eq!(x.len(), y.len(), "abscissae/ordinate length mismatch");
        let n = x.len();
        if n < 3 {
            return Err(NumericsError::TooFewSamples(n));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(NumericsError::NonMonotonicAbscissae);
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] <= 0.0 {
                d[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d[0] = edge_derivative(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = edge_derivative(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        Ok(MonotoneCubic { x: x.to_vec(), y: y.to_vec(), d })
    }

    /// Cubic Hermite evaluation; queries outside the table are clamped to the
    /// nearest end interval.
    pub fn eval(&self, xq: f64) -> f64 {
        let n = self.x.len();
        let k = match self.x.binary_search_by(|v| v.partial_cmp(&xq).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) if i >= n => n - 2,
            Err(i) => i - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let t = (xq - self.x[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}

fn edge_derivative(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let mut d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        d = 0.0;
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        d = 3.0 * d0;
    }
    d
}
