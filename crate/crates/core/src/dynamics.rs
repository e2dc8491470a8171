//! Diffeomorphisms of the test manifolds with analytic chart derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{tangent_frame, wrap_unit, Manifold, ManifoldPoint, TangentFrame};
use crate::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DiffeoKind {
    /// Arnold cat map `(u, v) ↦ (2u + v, u + v) mod 1` on the flat torus.
    Cat,
    /// Circle rotation `u ↦ u + ω mod 1`.
    Rotation { omega: f64 },
}

/// A diffeomorphism `T: M → M` in chart coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diffeo {
    manifold: Manifold,
    kind: DiffeoKind,
}

/// Points `x, Tx, …, T^n x` and the chart derivatives `D_{T^i x}T`, `i < n`.
#[derive(Clone, Debug)]
pub struct OrbitSegment {
    pub points: Vec<ManifoldPoint>,
    pub cocycle: Vec<Matrix>,
}

/// Result of testing `x` against period `period`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeriodResidual {
    pub period: usize,
    pub residual: f64,
    pub periodic: bool,
}

const CAT: [[f64; 2]; 2] = [[2.0, 1.0], [1.0, 1.0]];

impl Diffeo {
    pub fn cat_map() -> Self {
        Self { manifold: Manifold::flat_torus(), kind: DiffeoKind::Cat }
    }

    pub fn rotation(omega: f64) -> Self {
        Self { manifold: Manifold::circle(), kind: DiffeoKind::Rotation { omega } }
    }

    /// Parse a system id: `"cat"` or `"rotation:<ω>"`.
    pub fn from_id(id: &str) -> Result<Self> {
        if id == "cat" {
            return Ok(Self::cat_map());
        }
        if let Some(rest) = id.strip_prefix("rotation:") {
            if let Ok(omega) = rest.trim().parse::<f64>() {
                if omega.is_finite() {
                    return Ok(Self::rotation(omega));
                }
            }
        }
        Err(Error::UnknownId { kind: "system", id: id.to_string() })
    }

    pub fn id(&self) -> String {
        match self.kind {
            DiffeoKind::Cat => "cat".to_string(),
            DiffeoKind::Rotation { omega } => format!("rotation:{omega}"),
        }
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn kind(&self) -> DiffeoKind {
        self.kind
    }

    pub fn forward_chart(&self, c: &[f64]) -> Vec<f64> {
        match self.kind {
            DiffeoKind::Cat => vec![wrap_unit(2.0 * c[0] + c[1]), wrap_unit(c[0] + c[1])],
            DiffeoKind::Rotation { omega } => vec![wrap_unit(c[0] + omega)],
        }
    }

    pub fn inverse_chart(&self, c: &[f64]) -> Vec<f64> {
        match self.kind {
            DiffeoKind::Cat => vec![wrap_unit(c[0] - c[1]), wrap_unit(2.0 * c[1] - c[0])],
            DiffeoKind::Rotation { omega } => vec![wrap_unit(c[0] - omega)],
        }
    }

    /// Derivative of the forward map in chart coordinates.
    pub fn chart_derivative(&self, _c: &[f64]) -> Matrix {
        match self.kind {
            DiffeoKind::Cat => Matrix::from_fn(2, 2, |i, j| CAT[i][j]),
            DiffeoKind::Rotation { .. } => Matrix::identity(1, 1),
        }
    }

    pub fn step(&self, x: &ManifoldPoint) -> ManifoldPoint {
        let chart = self.forward_chart(&x.chart);
        let ambient = self.manifold.parametrize(&chart);
        ManifoldPoint { chart, ambient }
    }

    pub fn step_back(&self, x: &ManifoldPoint) -> ManifoldPoint {
        let chart = self.inverse_chart(&x.chart);
        let ambient = self.manifold.parametrize(&chart);
        ManifoldPoint { chart, ambient }
    }

    /// `T^n x` for `n ≥ 0`, or `T^{-|n|} x` for negative `n`.
    pub fn iterate(&self, x: &ManifoldPoint, n: i64) -> ManifoldPoint {
        let mut p = x.clone();
        if n >= 0 {
            for _ in 0..n {
                p = self.step(&p);
            }
        } else {
            for _ in 0..(-n) {
                p = self.step_back(&p);
            }
        }
        p
    }
}

/// Orbit segment of length `n + 1` starting at `x`.
pub fn orbit(t: &Diffeo, x: &ManifoldPoint, n: usize) -> OrbitSegment {
    let mut points = Vec::with_capacity(n + 1);
    let mut cocycle = Vec::with_capacity(n);
    points.push(x.clone());
    for i in 0..n {
        let p = &points[i];
        cocycle.push(t.chart_derivative(&p.chart));
        let next = t.step(p);
        points.push(next);
    }
    OrbitSegment { points, cocycle }
}

/// Residuals `ρ(T^p x, x)` for `p = 1..=p_max`, flagging those below `tol`.
pub fn periodic_screen(t: &Diffeo, x: &ManifoldPoint, p_max: usize, tol: f64) -> Vec<PeriodResidual> {
    let m = t.manifold();
    let mut p = x.clone();
    (1..=p_max)
        .map(|period| {
            p = t.step(&p);
            let residual = m.distance(&p, x);
            PeriodResidual { period, residual, periodic: residual < tol }
        })
        .collect()
}

/// Error if `x` is numerically `p`-periodic for some `p ≤ p_max`.
pub fn ensure_nonperiodic(t: &Diffeo, x: &ManifoldPoint, p_max: usize, tol: f64) -> Result<()> {
    match periodic_screen(t, x, p_max, tol).into_iter().find(|r| r.periodic) {
        Some(r) => Err(Error::PeriodicPoint { period: r.period, residual: r.residual }),
        None => Ok(()),
    }
}

/// Chart-coordinate derivative of `T^n` at `x` (product of the cocycle).
pub fn chart_cocycle(t: &Diffeo, x: &ManifoldPoint, n: usize) -> Matrix {
    let d = t.manifold().intrinsic_dim();
    let mut acc = Matrix::identity(d, d);
    let mut p = x.clone();
    for _ in 0..n {
        acc = t.chart_derivative(&p.chart) * acc;
        p = t.step(&p);
    }
    acc
}

/// Push the frame at `x` forward by `n` steps. Returns the frame at `T^n x`
/// and the matrix of `D_x T^n` from frame coordinates at `x` to frame
/// coordinates at `T^n x`.
pub fn pushforward(t: &Diffeo, frame: &TangentFrame, n: usize) -> Result<(TangentFrame, Matrix)> {
    let m = t.manifold();
    let end = t.iterate(&frame.base, n as i64);
    let end_frame = tangent_frame(m, &end)?;
    let chart = chart_cocycle(t, &frame.base, n);
    Ok((end_frame.clone(), chart_to_frame(&end_frame, &chart, frame)?))
}

/// Express a chart-coordinate linear map `from → to` in frame coordinates.
pub(crate) fn chart_to_frame(to: &TangentFrame, chart_map: &Matrix, from: &TangentFrame) -> Result<Matrix> {
    let inv = from
        .chart_factor
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateChart { chart: from.base.chart.clone(), sigma_min: 0.0 })?;
    Ok(&to.chart_factor * chart_map * inv)
}
