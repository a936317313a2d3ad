//! Smooth closed boundary curves and the equispaced Nyström grids built on them.
//!
//! Curves are parameterized over `[0, 2π)` counter-clockwise, so the outward
//! normal is the tangent rotated clockwise. All derivatives are analytic.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// A closed curve described in closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Curve {
    /// Circle of the given radius centered at the origin.
    Circle { radius: f64 },
    /// Star-shaped curve `x(t) = r(t) (cos t, sin t)` with
    /// `r(t) = cos[0] + Σ_{m≥1} cos[m] cos(mt) + Σ_{m≥1} sin[m-1] sin(mt)`.
    Fourier {
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

/// Position and the first three parameter derivatives at one parameter value.
#[derive(Clone, Copy, Debug)]
pub struct CurvePoint {
    pub x: Point,
    pub d1: Point,
    pub d2: Point,
    pub d3: Point,
}

pub fn make_circle(radius: f64) -> Result<Curve> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!("circle radius must be positive, got {radius}")));
    }
    Ok(Curve::Circle { radius })
}

impl Curve {
    pub fn eval(&self, t: f64) -> CurvePoint {
        match self {
            Curve::Circle { radius: a } => {
                let (s, c) = t.sin_cos();
                CurvePoint {
                    x: [a * c, a * s],
                    d1: [-a * s, a * c],
                    d2: [-a * c, -a * s],
                    d3: [a * s, -a * c],
                }
            }
            Curve::Fourier { cos, sin } => {
                // r and its first three derivatives
                let mut r = [0.0; 4];
                for (m, &a) in cos.iter().enumerate() {
                    let mf = m as f64;
                    let (s, c) = (mf * t).sin_cos();
                    r[0] += a * c;
                    r[1] -= a * mf * s;
                    r[2] -= a * mf * mf * c;
                    r[3] += a * mf * mf * mf * s;
                }
                for (j, &b) in sin.iter().enumerate() {
                    let mf = (j + 1) as f64;
                    let (s, c) = (mf * t).sin_cos();
                    r[0] += b * s;
                    r[1] += b * mf * c;
                    r[2] -= b * mf * mf * s;
                    r[3] -= b * mf * mf * mf * c;
                }
                let (s, c) = t.sin_cos();
                // e = (cos t, sin t), e' = (-sin t, cos t), e'' = -e, e''' = -e'
                let e = [c, s];
                let ep = [-s, c];
                let comb = |a: f64, b: f64| [a * e[0] + b * ep[0], a * e[1] + b * ep[1]];
                CurvePoint {
                    x: comb(r[0], 0.0),
                    d1: comb(r[1], r[0]),
                    d2: comb(r[2] - r[0], 2.0 * r[1]),
                    d3: comb(r[3] - 3.0 * r[1], 3.0 * r[2] - r[0]),
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Curve::Circle { radius } => make_circle(*radius).map(|_| ()),
            Curve::Fourier { cos, sin } => {
                if cos.is_empty() {
                    return Err(Error::invalid("fourier curve needs at least the constant coefficient"));
                }
                if cos.iter().chain(sin.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::invalid("fourier coefficients must be finite"));
                }
                Ok(())
            }
        }
    }
}

/// Equispaced Nyström grid on a curve.
#[derive(Clone, Debug)]
pub struct Grid {
    pub curve: Curve,
    pub n: usize,
    pub h: f64,
    pub t: Vec<f64>,
    pub points: Vec<Point>,
    pub normals: Vec<Point>,
    pub jacobian: Vec<f64>,
    pub curvature: Vec<f64>,
    pub d1: Vec<Point>,
    pub d2: Vec<Point>,
    pub d3: Vec<Point>,
}

pub fn discretize(curve: &Curve, n: usize) -> Result<Grid> {
    if n < 8 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!("node count must be even and at least 8, got {n}")));
    }
    curve.validate()?;
    let h = 2.0 * PI / n as f64;

    // Sample four times finer than the grid to catch degenerate parameterizations
    // and clockwise orientation.
    let mut signed_area = 0.0;
    let fine = 4 * n;
    for i in 0..fine {
        let p = curve.eval(2.0 * PI * i as f64 / fine as f64);
        let speed = p.d1[0].hypot(p.d1[1]);
        if !(speed > 1e-12) {
            return Err(Error::invalid("curve has vanishing speed |x'(t)|"));
        }
        signed_area += p.x[0] * p.d1[1] - p.x[1] * p.d1[0];
    }
    if signed_area <= 0.0 {
        return Err(Error::invalid("curve must be oriented counter-clockwise"));
    }

    let mut g = Grid {
        curve: curve.clone(),
        n,
        h,
        t: Vec::with_capacity(n),
        points: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        jacobian: Vec::with_capacity(n),
        curvature: Vec::with_capacity(n),
        d1: Vec::with_capacity(n),
        d2: Vec::with_capacity(n),
        d3: Vec::with_capacity(n),
    };
    for i in 0..n {
        let t = i as f64 * h;
        let p = curve.eval(t);
        let jac = p.d1[0].hypot(p.d1[1]);
        g.t.push(t);
        g.points.push(p.x);
        g.normals.push([p.d1[1] / jac, -p.d1[0] / jac]);
        g.jacobian.push(jac);
        g.curvature.push((p.d1[0] * p.d2[1] - p.d1[1] * p.d2[0]) / jac.powi(3));
        g.d1.push(p.d1);
        g.d2.push(p.d2);
        g.d3.push(p.d3);
    }
    Ok(g)
}

impl Grid {
    /// Trapezoidal approximation of the curve length.
    pub fn length(&self) -> f64 {
        self.jacobian.iter().sum::<f64>() * self.h
    }

    /// Trapezoidal quadrature weights `h |x'(t_j)|`.
    pub fn weights(&self) -> Vec<f64> {
        self.jacobian.iter().map(|j| j * self.h).collect()
    }
}
