//! Shared builders for the integration and acceptance suites.

use h1geo::curves::ParamCurve;
use h1geo::heisenberg::{H1Point, HeisenbergMotion};
use h1geo::surfaces::SurfaceCoefficients;
use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_motion(rng: &mut ChaCha8Rng) -> HeisenbergMotion {
    let p = H1Point::new(
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
    );
    HeisenbergMotion::new(p, rng.random_range(-3.0..3.0))
}

/// Unit-horizontal-speed circle lift `(cos t, sin t, 0)` with `k = tau = 1`.
pub fn circle_lift(n: usize) -> ParamCurve {
    ParamCurve::from_fn(0.0, std::f64::consts::TAU, n, |t| {
        let (s, c) = t.sin_cos();
        (
            H1Point::new(c, s, 0.0),
            Vector3::new(-s, c, 0.0),
            Vector3::new(-c, -s, 0.0),
        )
    })
}

/// A closed-form family of coefficient fields satisfying the integrability
/// system identically: with constant `l = lambda` and `m = m(v)`,
///
/// ```text
/// a = m/lambda + A(v) cos(lambda u) + B(v) sin(lambda u)
/// b = B(v) cos(lambda u) - A(v) sin(lambda u)
/// c = c0(v) + (2/lambda) [ B(v) sin(lambda u) + A(v) (cos(lambda u) - 1) ]
/// ```
///
/// solves `a_u = b l`, `b_u = -a l + m`, `c_u = 2 b`, `l_v = m_u` exactly,
/// so each sample is the coefficient set of a genuine normal patch.
pub struct CoefficientFamily {
    pub lambda: f64,
    pub m0: f64,
    pub m1: f64,
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
    pub c0: f64,
    pub c1: f64,
    pub om: f64,
}

impl CoefficientFamily {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        CoefficientFamily {
            lambda: rng.random_range(0.6..1.4),
            m0: rng.random_range(-0.3..0.3),
            m1: rng.random_range(-0.2..0.2),
            a0: rng.random_range(-0.25..0.25),
            a1: rng.random_range(-0.1..0.1),
            b0: rng.random_range(-0.25..0.25),
            b1: rng.random_range(-0.1..0.1),
            c0: rng.random_range(2.5..3.5),
            c1: rng.random_range(-0.3..0.3),
            om: rng.random_range(0.5..1.5),
        }
    }

    fn m_of(&self, v: f64) -> f64 {
        self.m0 + self.m1 * (self.om * v).sin()
    }

    fn a_of(&self, v: f64) -> f64 {
        self.a0 + self.a1 * (self.om * v).cos()
    }

    fn b_of(&self, v: f64) -> f64 {
        self.b0 + self.b1 * (self.om * v + 0.4).sin()
    }

    fn c_of(&self, v: f64) -> f64 {
        self.c0 + self.c1 * (self.om * v).sin()
    }

    pub fn eval(&self, u: f64, v: f64) -> (f64, f64, f64, f64, f64) {
        let (sn, cs) = (self.lambda * u).sin_cos();
        let (av, bv, cv, mv) = (self.a_of(v), self.b_of(v), self.c_of(v), self.m_of(v));
        let a = mv / self.lambda + av * cs + bv * sn;
        let b = bv * cs - av * sn;
        let c = cv + 2.0 / self.lambda * (bv * sn + av * (cs - 1.0));
        (a, b, c, self.lambda, mv)
    }

    pub fn sample(&self, nu: usize, nv: usize, du: f64, dv: f64) -> SurfaceCoefficients {
        SurfaceCoefficients::from_fn(0.0, du, nu, 0.0, dv, nv, |u, v| self.eval(u, v))
    }
}

pub fn random_integrable_coefficients(
    rng: &mut ChaCha8Rng,
    nu: usize,
    nv: usize,
    du: f64,
    dv: f64,
) -> SurfaceCoefficients {
    CoefficientFamily::random(rng).sample(nu, nv, du, dv)
}
