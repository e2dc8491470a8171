//! The delay-coordinate map, its differential, the pair matrix `D_{x,y}` and
//! orthogonal projections onto random subspaces.

use rand::Rng;

use crate::dynamics::{chart_to_frame, Diffeo};
use crate::error::{Error, Result};
use crate::geometry::{tangent_frame, ManifoldPoint, TangentFrame};
use crate::linalg::thin_qr;
use crate::observables::Observable;
use crate::rng::gaussian_vector;
use crate::{Matrix, Vector};

/// A map from the manifold to `ℝ^k` with a differential along the tangent space.
pub trait Embedding: Sync {
    fn output_dim(&self) -> usize;

    fn embed(&self, x: &ManifoldPoint) -> Vector;

    /// `k×d` matrix of the differential in the frame coordinates at `frame.base`.
    fn differential(&self, frame: &TangentFrame) -> Result<Matrix>;
}

/// `φ_{h,k}(x) = (h(x), h(Tx), …, h(T^{k-1}x))`.
#[derive(Clone, Debug)]
pub struct DelayMap {
    dynamics: Diffeo,
    observable: Observable,
    k: usize,
}

/// `φ_α(x) − φ_α(y) = D α + w`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMatrix {
    pub d: Matrix,
    pub w: Vector,
}

impl DelayMap {
    pub fn new(dynamics: Diffeo, observable: Observable, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Precondition("delay length k must be at least 1".into()));
        }
        let n = dynamics.manifold().ambient_dim();
        if observable.basis().ambient_dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "observable acts on R^{}, manifold lives in R^{n}",
                observable.basis().ambient_dim()
            )));
        }
        Ok(Self { dynamics, observable, k })
    }

    pub fn dynamics(&self) -> &Diffeo {
        &self.dynamics
    }

    pub fn observable(&self) -> &Observable {
        &self.observable
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Same dynamics and `k`, different observable.
    pub fn with_observable(&self, observable: Observable) -> Result<Self> {
        Self::new(self.dynamics, observable, self.k)
    }

    fn truncated_orbit(&self, x: &ManifoldPoint) -> Vec<ManifoldPoint> {
        let mut pts = Vec::with_capacity(self.k);
        pts.push(x.clone());
        for i in 1..self.k {
            let next = self.dynamics.step(&pts[i - 1]);
            pts.push(next);
        }
        pts
    }

    pub fn delay_eval(&self, x: &ManifoldPoint) -> Vector {
        Vector::from_iterator(self.k, self.truncated_orbit(x).iter().map(|p| self.observable.eval(p.ambient.as_slice())))
    }

    /// Differential of the delay map by the chain rule: row `i` is the
    /// tangential gradient of `h_α` at `T^i x` composed with `D_x T^i`.
    pub fn delay_differential(&self, frame: &TangentFrame) -> Result<Matrix> {
        let m = self.dynamics.manifold();
        let d = m.intrinsic_dim();
        let mut out = Matrix::zeros(self.k, d);
        let mut point = frame.base.clone();
        let mut chart_cocycle = Matrix::identity(d, d);
        for i in 0..self.k {
            let here = if i == 0 { frame.clone() } else { tangent_frame(m, &point)? };
            let grad = self.observable.ambient_gradient(point.ambient.as_slice());
            let tangential = here.basis.transpose() * grad;
            let cocycle = chart_to_frame(&here, &chart_cocycle, frame)?;
            out.row_mut(i).copy_from(&(tangential.transpose() * cocycle));
            if i + 1 < self.k {
                chart_cocycle = self.dynamics.chart_derivative(&point.chart) * chart_cocycle;
                point = self.dynamics.step(&point);
            }
        }
        Ok(out)
    }

    /// Pair matrix of the monomial basis along the two truncated orbits.
    pub fn pair_matrix(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> PairMatrix {
        let basis = self.observable.basis();
        let ox = self.truncated_orbit(x);
        let oy = self.truncated_orbit(y);
        let mut d = Matrix::zeros(self.k, basis.len());
        let mut w = Vector::zeros(self.k);
        for (i, (px, py)) in ox.iter().zip(&oy).enumerate() {
            let row = basis.evaluate(px.ambient.as_slice()) - basis.evaluate(py.ambient.as_slice());
            d.row_mut(i).copy_from(&row.transpose());
            w[i] = self.observable.base_eval(px.ambient.as_slice()) - self.observable.base_eval(py.ambient.as_slice());
        }
        PairMatrix { d, w }
    }
}

impl Embedding for DelayMap {
    fn output_dim(&self) -> usize {
        self.k
    }

    fn embed(&self, x: &ManifoldPoint) -> Vector {
        self.delay_eval(x)
    }

    fn differential(&self, frame: &TangentFrame) -> Result<Matrix> {
        self.delay_differential(frame)
    }
}

/// Orthogonal projection `P_V` onto `V ∈ Gr(k, N)`, reported in the
/// coordinates of an orthonormal basis of `V`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    basis: Matrix,
}

impl Projection {
    /// Projection onto the span of the given columns, which must be orthonormal.
    pub fn from_orthonormal(basis: Matrix) -> Result<Self> {
        let k = basis.ncols();
        if (basis.transpose() * &basis - Matrix::identity(k, k)).norm() > 1e-12 {
            return Err(Error::Precondition("projection basis is not orthonormal".into()));
        }
        Ok(Self { basis })
    }

    /// Projection onto the first `k` coordinate axes of `ℝ^N`.
    pub fn coordinate(n: usize, k: usize) -> Self {
        Self { basis: Matrix::identity(n, k) }
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    /// `V Vᵀ` as an `N×N` projector.
    pub fn projector(&self) -> Matrix {
        &self.basis * self.basis.transpose()
    }

    pub fn apply(&self, z: &Vector) -> Vector {
        self.basis.transpose() * z
    }
}

/// Haar-distributed `V ∈ Gr(k, N)`: orthonormalized `N×k` Gaussian matrix.
pub fn sample_projection<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Projection> {
    if k == 0 || k > n {
        return Err(Error::Precondition(format!("need 1 <= k <= N, got k = {k}, N = {n}")));
    }
    loop {
        let g = Matrix::from_columns(&(0..k).map(|_| gaussian_vector(rng, n)).collect::<Vec<_>>());
        let (q, r) = thin_qr(&g);
        // a rank-deficient draw has probability zero; redraw if it happens
        if (0..k).all(|i| r[(i, i)] > 1e-12) {
            return Ok(Projection { basis: q.columns(0, k).into_owned() });
        }
    }
}

/// `Vᵀ x + φ(x)`: a projection optionally perturbing a base map into `ℝ^k`.
pub fn project_eval(p: &Projection, base: Option<&dyn Embedding>, x: &ManifoldPoint) -> Result<Vector> {
    let mut out = p.apply(&x.ambient);
    if let Some(phi) = base {
        if phi.output_dim() != p.k() {
            return Err(Error::DimensionMismatch(format!(
                "base map has {} outputs, projection has {}",
                phi.output_dim(),
                p.k()
            )));
        }
        out += phi.embed(x);
    }
    Ok(out)
}

impl Embedding for Projection {
    fn output_dim(&self) -> usize {
        self.k()
    }

    fn embed(&self, x: &ManifoldPoint) -> Vector {
        self.apply(&x.ambient)
    }

    fn differential(&self, frame: &TangentFrame) -> Result<Matrix> {
        Ok(self.basis.transpose() * &frame.basis)
    }
}
