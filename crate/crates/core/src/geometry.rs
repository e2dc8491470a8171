//! Compact test manifolds embedded in Euclidean space by explicit periodic
//! parametrizations.
//!
//! Both manifolds use the scaling `1/(2π)` so that a unit step in a chart
//! coordinate has unit ambient arc length. The Riemannian distance is then
//! the flat distance on the chart torus `ℝ^d/ℤ^d`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{singular_values, thin_qr};
use crate::{Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManifoldKind {
    /// `S¹ ⊂ ℝ²`, `u ↦ (cos 2πu, sin 2πu)/(2π)`.
    Circle,
    /// `T² ⊂ ℝ⁴`, `(u, v) ↦ (cos 2πu, sin 2πu, cos 2πv, sin 2πv)/(2π)`.
    Torus2,
}

/// A compact manifold given by a global periodic chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifold {
    kind: ManifoldKind,
}

/// A point in chart coordinates (canonicalized to `[0,1)^d`) together with
/// its ambient image.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldPoint {
    pub chart: Vec<f64>,
    pub ambient: Vector,
}

/// Orthonormal basis of `T_xM ⊂ ℝ^N`.
///
/// `chart_factor` is the upper-triangular `R` of the thin QR factorization
/// `J(x) = basis · R` of the chart Jacobian; it converts chart tangent vectors
/// into frame coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentFrame {
    pub base: ManifoldPoint,
    pub basis: Matrix,
    pub chart_factor: Matrix,
}

impl Manifold {
    pub fn flat_torus() -> Self {
        Self { kind: ManifoldKind::Torus2 }
    }

    pub fn circle() -> Self {
        Self { kind: ManifoldKind::Circle }
    }

    /// Look a manifold up by its configuration id (`"torus2"` or `"circle"`).
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "torus2" => Ok(Self::flat_torus()),
            "circle" => Ok(Self::circle()),
            _ => Err(Error::UnknownId { kind: "manifold", id: id.to_string() }),
        }
    }

    pub fn id(&self) -> &'static str {
        match self.kind {
            ManifoldKind::Circle => "circle",
            ManifoldKind::Torus2 => "torus2",
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle => 1,
            ManifoldKind::Torus2 => 2,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        2 * self.intrinsic_dim()
    }

    /// Ratio between Riemannian length and chart length of tangent vectors.
    /// Both parametrizations are isometric onto their chart torus.
    pub fn metric_scale(&self) -> f64 {
        1.0
    }

    pub fn parametrize(&self, chart: &[f64]) -> Vector {
        let mut out = Vector::zeros(self.ambient_dim());
        for (i, &c) in chart.iter().take(self.intrinsic_dim()).enumerate() {
            let angle = TAU * c;
            out[2 * i] = angle.cos() / TAU;
            out[2 * i + 1] = angle.sin() / TAU;
        }
        out
    }

    /// `N×d` Jacobian of the parametrization.
    pub fn chart_jacobian(&self, chart: &[f64]) -> Matrix {
        let d = self.intrinsic_dim();
        let mut j = Matrix::zeros(self.ambient_dim(), d);
        for (i, &c) in chart.iter().take(d).enumerate() {
            let angle = TAU * c;
            j[(2 * i, i)] = -angle.sin();
            j[(2 * i + 1, i)] = angle.cos();
        }
        j
    }

    /// Canonical chart coordinates in `[0,1)^d`.
    pub fn canonicalize(&self, chart: &[f64]) -> Vec<f64> {
        chart.iter().take(self.intrinsic_dim()).map(|&c| wrap_unit(c)).collect()
    }

    /// Build a point from (possibly non-canonical) chart coordinates.
    pub fn point(&self, chart: &[f64]) -> ManifoldPoint {
        assert_eq!(chart.len(), self.intrinsic_dim(), "chart dimension mismatch");
        let chart = self.canonicalize(chart);
        let ambient = self.parametrize(&chart);
        ManifoldPoint { chart, ambient }
    }

    /// Flat distance between chart coordinates, with periodic wrap-around.
    pub fn chart_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let t = periodic_gap(x - y);
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Riemannian distance of the induced metric.
    pub fn distance(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> f64 {
        self.chart_distance(&x.chart, &y.chart)
    }
}

/// Map a real to `[0, 1)`.
pub(crate) fn wrap_unit(c: f64) -> f64 {
    let w = c.rem_euclid(1.0);
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Distance from `t` to the nearest integer.
pub(crate) fn periodic_gap(t: f64) -> f64 {
    let r = t.abs().rem_euclid(1.0);
    r.min(1.0 - r)
}

/// Orthonormal tangent frame at `x`, spanning the column space of the chart Jacobian.
pub fn tangent_frame(manifold: &Manifold, x: &ManifoldPoint) -> Result<TangentFrame> {
    let jac = manifold.chart_jacobian(&x.chart);
    let smin = singular_values(&jac).last().copied().unwrap_or(0.0);
    if smin < 1e-10 {
        return Err(Error::DegenerateChart { chart: x.chart.clone(), sigma_min: smin });
    }
    let (basis, chart_factor) = thin_qr(&jac);
    Ok(TangentFrame { base: x.clone(), basis, chart_factor })
}
