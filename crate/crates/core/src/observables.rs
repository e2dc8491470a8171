//! Polynomially perturbed observables `h_α = h + Σ_j α_j h_j`, where `h_j`
//! runs over the monomials of degree at most `D` in the ambient coordinates,
//! and the polynomial gradient interpolation used to realize prescribed
//! differentials.

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TangentFrame;
use crate::linalg::min_norm_solve;
use crate::{Matrix, Vector, RANK_RTOL};

/// Largest monomial degree accepted by [`MonomialBasis::new`].
pub const MAX_DEGREE: usize = 12;

/// Residual tolerance for gradient interpolation.
pub const INTERPOLATION_TOL: f64 = 1e-8;

/// Number of `N`-variate monomials of degree at most `D`: `binomial(N + D, N)`.
pub fn basis_size(n: usize, d: usize) -> usize {
    // product form keeps every intermediate an exact integer
    let mut acc: u128 = 1;
    for i in 1..=n.min(d) as u128 {
        acc = acc * (n.max(d) as u128 + i) / i;
    }
    acc as usize
}

/// Monomials `z^β`, `|β| ≤ D`, ordered by total degree and then
/// lexicographically with `z₁` leading (`x₁ > x₂ > …`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonomialBasis {
    ambient_dim: usize,
    max_degree: usize,
    exponents: Vec<Vec<u32>>,
}

impl MonomialBasis {
    pub fn new(ambient_dim: usize, max_degree: usize) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(Error::Precondition("ambient dimension must be at least 1".into()));
        }
        if max_degree > MAX_DEGREE {
            return Err(Error::DegreeTooHigh { degree: max_degree, max: MAX_DEGREE });
        }
        let mut exponents = Vec::with_capacity(basis_size(ambient_dim, max_degree));
        for total in 0..=max_degree as u32 {
            let mut current = vec![0u32; ambient_dim];
            push_compositions(total, 0, &mut current, &mut exponents);
        }
        Ok(Self { ambient_dim, max_degree, exponents })
    }

    /// Basis of degree `2k − 1`, large enough for every interpolation the
    /// delay construction needs at delay length `k`.
    pub fn for_delay(ambient_dim: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Precondition("k must be at least 1".into()));
        }
        Self::new(ambient_dim, 2 * k - 1)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Position of a multi-index in the basis.
    pub fn index_of(&self, beta: &[u32]) -> Option<usize> {
        self.exponents.iter().position(|e| e.as_slice() == beta)
    }

    fn powers(&self, z: &[f64]) -> Vec<Vec<f64>> {
        z.iter()
            .map(|&c| {
                let mut p = Vec::with_capacity(self.max_degree + 1);
                let mut acc = 1.0;
                for _ in 0..=self.max_degree {
                    p.push(acc);
                    acc *= c;
                }
                p
            })
            .collect()
    }

    /// Values of every monomial at `z`.
    pub fn evaluate(&self, z: &[f64]) -> Vector {
        let pw = self.powers(z);
        Vector::from_iterator(
            self.len(),
            self.exponents.iter().map(|beta| {
                beta.iter().enumerate().map(|(l, &e)| pw[l][e as usize]).product::<f64>()
            }),
        )
    }

    /// `N×m` matrix whose column `j` is `∇ z^{β_j}`.
    pub fn gradients(&self, z: &[f64]) -> Matrix {
        let pw = self.powers(z);
        let n = self.ambient_dim;
        let mut g = Matrix::zeros(n, self.len());
        for (j, beta) in self.exponents.iter().enumerate() {
            for l in 0..n {
                if beta[l] == 0 {
                    continue;
                }
                let mut v = f64::from(beta[l]) * pw[l][beta[l] as usize - 1];
                for (q, &e) in beta.iter().enumerate() {
                    if q != l {
                        v *= pw[q][e as usize];
                    }
                }
                g[(l, j)] = v;
            }
        }
        g
    }
}

fn push_compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let n = current.len();
    if pos == n - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        push_compositions(remaining - e, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// Unperturbed observable `h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseObservable {
    Zero,
    /// `cos(2π u₁)` of the first chart coordinate, which equals `2π z₁` in
    /// ambient coordinates for both test manifolds.
    Cos1,
}

impl BaseObservable {
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "zero" => Ok(Self::Zero),
            "cos1" => Ok(Self::Cos1),
            _ => Err(Error::UnknownId { kind: "base observable", id: id.to_string() }),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Cos1 => "cos1",
        }
    }

    fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Cos1 => TAU * z[0],
        }
    }

    fn gradient(&self, n: usize) -> Vector {
        let mut g = Vector::zeros(n);
        if let Self::Cos1 = self {
            g[0] = TAU;
        }
        g
    }
}

/// `h_α(z) = h(z) + Σ_j α_j z^{β_j}` on ambient space.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    basis: Arc<MonomialBasis>,
    base: BaseObservable,
    alpha: Vector,
}

impl Observable {
    pub fn new(basis: Arc<MonomialBasis>, base: BaseObservable, alpha: Vector) -> Result<Self> {
        if alpha.len() != basis.len() {
            return Err(Error::DimensionMismatch(format!(
                "alpha has {} entries, basis has {}",
                alpha.len(),
                basis.len()
            )));
        }
        Ok(Self { basis, base, alpha })
    }

    /// The unperturbed observable (`α = 0`).
    pub fn unperturbed(basis: Arc<MonomialBasis>, base: BaseObservable) -> Self {
        let m = basis.len();
        Self { basis, base, alpha: Vector::zeros(m) }
    }

    /// A single monomial `c · z^β` on top of the zero base.
    pub fn monomial(basis: Arc<MonomialBasis>, beta: &[u32], c: f64) -> Result<Self> {
        let j = basis
            .index_of(beta)
            .ok_or_else(|| Error::Precondition(format!("monomial {beta:?} not in basis")))?;
        let mut alpha = Vector::zeros(basis.len());
        alpha[j] = c;
        Ok(Self { basis, base: BaseObservable::Zero, alpha })
    }

    pub fn basis(&self) -> &Arc<MonomialBasis> {
        &self.basis
    }

    pub fn base(&self) -> BaseObservable {
        self.base
    }

    pub fn alpha(&self) -> &Vector {
        &self.alpha
    }

    pub fn with_alpha(&self, alpha: Vector) -> Result<Self> {
        Self::new(self.basis.clone(), self.base, alpha)
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.base.eval(z) + self.alpha.dot(&self.basis.evaluate(z))
    }

    /// Value of the unperturbed part `h(z)`.
    pub fn base_eval(&self, z: &[f64]) -> f64 {
        self.base.eval(z)
    }

    pub fn ambient_gradient(&self, z: &[f64]) -> Vector {
        self.base.gradient(self.basis.ambient_dim()) + self.basis.gradients(z) * &self.alpha
    }
}

/// Coefficients of a polynomial `p` in `basis` with `∇p(z_i) = u_i`.
///
/// Solves the stacked `kN × m` gradient system in the minimum-norm sense with
/// relative rank tolerance [`RANK_RTOL`]; a rank below `kN` (coincident or
/// nearly coincident points) is reported as [`Error::IllConditioned`].
pub fn interpolate_gradients(basis: &MonomialBasis, points: &[Vector], targets: &[Vector]) -> Result<Vector> {
    let n = basis.ambient_dim();
    let k = points.len();
    if targets.len() != k {
        return Err(Error::DimensionMismatch(format!("{k} points but {} targets", targets.len())));
    }
    if points.iter().chain(targets).any(|v| v.len() != n) {
        return Err(Error::DimensionMismatch(format!("points and targets must live in R^{n}")));
    }
    let rows = k * n;
    let mut system = Matrix::zeros(rows, basis.len());
    let mut rhs = Vector::zeros(rows);
    for (i, (z, u)) in points.iter().zip(targets).enumerate() {
        let g = basis.gradients(z.as_slice());
        system.view_mut((i * n, 0), (n, basis.len())).copy_from(&g);
        rhs.rows_mut(i * n, n).copy_from(u);
    }
    let (alpha, rank) = min_norm_solve(&system, &rhs, RANK_RTOL);
    if rank < rows {
        return Err(Error::IllConditioned { rank, required: rows });
    }
    let residual = (0..k)
        .map(|i| (system.rows(i * n, n) * &alpha - &targets[i]).norm())
        .fold(0.0, f64::max);
    if residual > INTERPOLATION_TOL {
        return Err(Error::InterpolationResidual { residual, tol: INTERPOLATION_TOL });
    }
    Ok(alpha)
}

/// Coefficients of a polynomial whose restriction to the manifold has the
/// prescribed differentials `covectors[i]` (in frame coordinates) at the base
/// points of `frames`.
pub fn tangential_interpolation(basis: &MonomialBasis, frames: &[TangentFrame], covectors: &[Vector]) -> Result<Vector> {
    if frames.len() != covectors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} frames but {} covectors",
            frames.len(),
            covectors.len()
        )));
    }
    // u_i = F_i c_i satisfies <u_i, F_i v> = c_i·v on the tangent space
    let points: Vec<Vector> = frames.iter().map(|f| f.base.ambient.clone()).collect();
    let targets: Vec<Vector> = frames.iter().zip(covectors).map(|(f, c)| &f.basis * c).collect();
    let alpha = interpolate_gradients(basis, &points, &targets)?;
    let grads_tangential = frames
        .iter()
        .zip(covectors)
        .map(|(f, c)| (f.basis.transpose() * (basis.gradients(f.base.ambient.as_slice()) * &alpha) - c).norm())
        .fold(0.0, f64::max);
    if grads_tangential > INTERPOLATION_TOL {
        return Err(Error::InterpolationResidual { residual: grads_tangential, tol: INTERPOLATION_TOL });
    }
    Ok(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{tangent_frame, Manifold};
    use crate::rng::{gaussian_vector, stream, uniform_ball};
    use rand::Rng;
    use std::collections::HashSet;

    fn enumerate_count(n: usize, d: usize) -> usize {
        // brute-force oracle: all β ∈ {0..d}^n with |β| ≤ d
        let mut count = 0;
        let mut beta = vec![0usize; n];
        loop {
            if beta.iter().sum::<usize>() <= d {
                count += 1;
            }
            let mut i = 0;
            while i < n {
                beta[i] += 1;
                if beta[i] <= d {
                    break;
                }
                beta[i] = 0;
                i += 1;
            }
            if i == n {
                return count;
            }
        }
    }

    #[test]
    fn basis_size_examples() {
        assert_eq!(basis_size(1, 1), 2);
        assert_eq!(basis_size(2, 3), 10);
        assert_eq!(basis_size(4, 5), 126);
        for n in 1..=4 {
            for d in 0..=6 {
                assert_eq!(basis_size(n, d), enumerate_count(n, d));
                assert_eq!(MonomialBasis::new(n, d).unwrap().len(), basis_size(n, d));
            }
        }
    }

    #[test]
    fn basis_order_and_distinctness() {
        let b = MonomialBasis::new(3, 4).unwrap();
        let set: HashSet<_> = b.exponents().iter().cloned().collect();
        assert_eq!(set.len(), b.len());
        for w in b.exponents().windows(2) {
            let (da, db) = (w[0].iter().sum::<u32>(), w[1].iter().sum::<u32>());
            assert!(da < db || (da == db && w[0] > w[1]));
        }
        assert_eq!(b.exponents()[1], vec![1, 0, 0]);
    }

    #[test]
    fn degree_limit_is_enforced() {
        assert!(matches!(MonomialBasis::new(2, 13), Err(Error::DegreeTooHigh { .. })));
        assert!(MonomialBasis::new(2, 12).is_ok());
    }

    #[test]
    fn eval_examples() {
        let b = Arc::new(MonomialBasis::new(2, 3).unwrap());
        let zero = Observable::unperturbed(b.clone(), BaseObservable::Zero);
        assert_eq!(zero.eval(&[0.4, -2.0]), 0.0);
        assert_eq!(zero.ambient_gradient(&[0.4, -2.0]), Vector::zeros(2));
        let x1 = Observable::monomial(b.clone(), &[1, 0], 1.0).unwrap();
        assert_eq!(x1.eval(&[0.3, 7.0]), 0.3);
        let x1x2 = Observable::monomial(b, &[1, 1], 1.0).unwrap();
        assert_eq!(x1x2.ambient_gradient(&[2.0, 3.0]), Vector::from_vec(vec![3.0, 2.0]));
    }

    #[test]
    fn eval_matches_direct_summation() {
        let b = Arc::new(MonomialBasis::new(4, 5).unwrap());
        let mut rng = stream(0, "obs-test", 0);
        for _ in 0..100 {
            let alpha = uniform_ball(&mut rng, b.len(), 1.0);
            let z: Vec<f64> = (0..4).map(|_| rng.random_range(-0.3..0.3)).collect();
            let obs = Observable::new(b.clone(), BaseObservable::Cos1, alpha.clone()).unwrap();
            let mut naive = TAU * z[0];
            for (j, beta) in b.exponents().iter().enumerate() {
                let mut term = alpha[j];
                for (l, &e) in beta.iter().enumerate() {
                    for _ in 0..e {
                        term *= z[l];
                    }
                }
                naive += term;
            }
            assert!((obs.eval(&z) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_and_linearity_holds() {
        let b = Arc::new(MonomialBasis::new(4, 5).unwrap());
        let mut rng = stream(1, "obs-test", 0);
        for _ in 0..100 {
            let a1 = uniform_ball(&mut rng, b.len(), 1.0);
            let a2 = uniform_ball(&mut rng, b.len(), 1.0);
            let z: Vec<f64> = (0..4).map(|_| rng.random_range(-0.2..0.2)).collect();
            let o1 = Observable::new(b.clone(), BaseObservable::Zero, a1.clone()).unwrap();
            let o2 = Observable::new(b.clone(), BaseObservable::Zero, a2.clone()).unwrap();
            let o12 = Observable::new(b.clone(), BaseObservable::Zero, &a1 + &a2).unwrap();
            assert!((o12.eval(&z) - o1.eval(&z) - o2.eval(&z)).abs() < 1e-12);

            let obs = Observable::new(b.clone(), BaseObservable::Cos1, a1).unwrap();
            let g = obs.ambient_gradient(&z);
            let h = 1e-6;
            for l in 0..4 {
                let mut p = z.clone();
                let mut m = z.clone();
                p[l] += h;
                m[l] -= h;
                let fd = (obs.eval(&p) - obs.eval(&m)) / (2.0 * h);
                assert!((fd - g[l]).abs() <= 1e-6 * g[l].abs().max(1.0), "{fd} vs {}", g[l]);
            }
        }
    }

    #[test]
    fn single_point_linear_interpolation() {
        let b = MonomialBasis::new(3, 1).unwrap();
        let u = Vector::from_vec(vec![0.5, -1.0, 2.0]);
        let alpha = interpolate_gradients(&b, &[Vector::zeros(3)], &[u.clone()]).unwrap();
        assert!((b.gradients(&[0.0; 3]) * &alpha - u).norm() < 1e-14);
    }

    #[test]
    fn coincident_points_are_ill_conditioned() {
        let b = MonomialBasis::new(4, 5).unwrap();
        let z = Vector::from_vec(vec![0.1, 0.05, -0.1, 0.02]);
        let u = Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let err = interpolate_gradients(&b, &[z.clone(), z], &[u.clone(), u]).unwrap_err();
        assert!(matches!(err, Error::IllConditioned { rank: 4, required: 8 }));
    }

    #[test]
    fn random_interpolation_on_torus_points() {
        let torus = Manifold::flat_torus();
        let mut rng = stream(2, "obs-test", 0);
        for trial in 0..100 {
            let k = 1 + trial % 5;
            let b = MonomialBasis::for_delay(4, k).unwrap();
            let points: Vec<Vector> =
                (0..k).map(|_| torus.point(&[rng.random(), rng.random()]).ambient).collect();
            let targets: Vec<Vector> = (0..k).map(|_| gaussian_vector(&mut rng, 4)).collect();
            let alpha = interpolate_gradients(&b, &points, &targets).unwrap();
            // independent check: evaluate gradients directly
            for (z, u) in points.iter().zip(&targets) {
                let obs = Observable::new(Arc::new(b.clone()), BaseObservable::Zero, alpha.clone()).unwrap();
                assert!((obs.ambient_gradient(z.as_slice()) - u).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn tangential_interpolation_examples() {
        let torus = Manifold::flat_torus();
        let b = MonomialBasis::for_delay(4, 3).unwrap();
        let mut rng = stream(4, "obs-test", 0);
        let frames: Vec<TangentFrame> = (0..3)
            .map(|_| tangent_frame(&torus, &torus.point(&[rng.random(), rng.random()])).unwrap())
            .collect();

        let zeros = vec![Vector::zeros(2); 3];
        let alpha = tangential_interpolation(&b, &frames, &zeros).unwrap();
        for f in &frames {
            let g = f.basis.transpose() * (b.gradients(f.base.ambient.as_slice()) * &alpha);
            assert!(g.norm() < 1e-10);
        }

        let covectors: Vec<Vector> = (0..3).map(|_| gaussian_vector(&mut rng, 2)).collect();
        let alpha = tangential_interpolation(&b, &frames, &covectors).unwrap();
        for (f, c) in frames.iter().zip(&covectors) {
            let g = f.basis.transpose() * (b.gradients(f.base.ambient.as_slice()) * &alpha);
            assert!((g - c).norm() < 1e-8);
        }

        let e1 = Vector::from_vec(vec![1.0, 0.0]);
        let alpha = tangential_interpolation(&b, &frames[..1], &[e1.clone()]).unwrap();
        let f = &frames[0];
        let g = f.basis.transpose() * (b.gradients(f.base.ambient.as_slice()) * &alpha);
        assert!((g - e1).norm() < 1e-10);
    }
}
