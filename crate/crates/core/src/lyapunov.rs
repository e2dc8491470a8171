//! Lyapunov exponents of the base system and of the system observed through
//! a delay map.
//!
//! Exponents are in nats per step. Tangent vectors are handled in frame
//! coordinates, which are orthonormal for the Riemannian metric, so operator
//! norms of frame-coordinate matrices are the geometric ones.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{chart_to_frame, Diffeo, DiffeoKind, OrbitSegment};
use crate::embedding::DelayMap;
use crate::error::{Error, Result};
use crate::geometry::{tangent_frame, ManifoldPoint, TangentFrame};
use crate::linalg::{pseudoinverse, singular_values, thin_qr};
use crate::{Matrix, Vector, RANK_RTOL};

/// Oseledets data for systems whose splitting is constant in chart coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OseledetsData {
    /// Strictly increasing.
    pub exponents: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// Chart-coordinate spanning sets of `H_i`, one `d × d_i` matrix per exponent.
    #[serde(skip)]
    pub chart_directions: Vec<Matrix>,
}

impl OseledetsData {
    /// Closed-form data: eigen-directions of the cat matrix, or the whole
    /// tangent line with exponent 0 for a rotation.
    pub fn analytic(t: &Diffeo) -> Self {
        match t.kind() {
            DiffeoKind::Cat => {
                let s5 = 5f64.sqrt();
                let lam = (3.0 + s5) / 2.0;
                // (2 − λ)a + b = 0 for each eigenvalue λ of [[2,1],[1,1]]
                let dir = |l: f64| Matrix::from_column_slice(2, 1, &[1.0, l - 2.0]);
                Self {
                    exponents: vec![-lam.ln(), lam.ln()],
                    multiplicities: vec![1, 1],
                    chart_directions: vec![dir(1.0 / lam), dir(lam)],
                }
            }
            DiffeoKind::Rotation { .. } => Self {
                exponents: vec![0.0],
                multiplicities: vec![1],
                chart_directions: vec![Matrix::identity(1, 1)],
            },
        }
    }

    /// Data from QR-limit directions, for systems with constant derivative.
    pub fn from_direct(t: &Diffeo, x: &ManifoldPoint, n: usize) -> Result<Self> {
        let est = direct_exponents(t, x, n)?;
        if est.windows(2).any(|w| w[1].exponent - w[0].exponent < 1e-8) {
            return Err(Error::Precondition("QR exponents are not simple".into()));
        }
        Ok(Self {
            exponents: est.iter().map(|e| e.exponent).collect(),
            multiplicities: vec![1; est.len()],
            chart_directions: est.iter().map(|e| Matrix::from_column_slice(e.direction.len(), 1, e.direction.as_slice())).collect(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// Orthonormal frame-coordinate bases of the `H_i` at the frame's base point.
    pub fn subspaces(&self, frame: &TangentFrame) -> Vec<Matrix> {
        self.chart_directions.iter().map(|v| thin_qr(&(&frame.chart_factor * v)).0).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectExponent {
    pub exponent: f64,
    /// Final QR direction in chart coordinates at the end of the run.
    pub direction: Vector,
}

/// QR estimate of the Lyapunov spectrum along the orbit of `x`.
///
/// A frame is pushed through the derivative cocycle and re-orthonormalized
/// every step. The first `n/10` steps are discarded as a transient so the
/// frame has aligned with the splitting before the `n` averaged steps.
/// Both supported manifolds have isometric flat charts, so the cocycle is
/// taken in chart coordinates and directions are returned in them.
pub fn direct_exponents(t: &Diffeo, x: &ManifoldPoint, n: usize) -> Result<Vec<DirectExponent>> {
    if n < 10 {
        return Err(Error::Precondition(format!("direct exponents need n >= 10, got {n}")));
    }
    let d = t.manifold().intrinsic_dim();
    let warmup = n / 10;
    let mut q = Matrix::identity(d, d);
    let mut p = x.clone();
    let mut sums = vec![0.0; d];
    for step in 0..warmup + n {
        let (qn, r) = thin_qr(&(t.chart_derivative(&p.chart) * &q));
        if step >= warmup {
            for (i, s) in sums.iter_mut().enumerate() {
                *s += r[(i, i)].abs().ln();
            }
        }
        q = qn;
        p = t.step(&p);
    }
    let mut out: Vec<DirectExponent> = sums
        .iter()
        .enumerate()
        .map(|(i, s)| DirectExponent { exponent: s / n as f64, direction: q.column(i).into_owned() })
        .collect();
    out.sort_by(|a, b| a.exponent.total_cmp(&b.exponent));
    Ok(out)
}

fn check_rank(diff: &Matrix) -> Result<(f64, f64)> {
    let s = singular_values(diff);
    let (smax, smin) = (s[0], *s.last().expect("nonempty differential"));
    if !(smin > RANK_RTOL * smax) {
        return Err(Error::RankDeficient { ratio: if smax > 0.0 { smin / smax } else { 0.0 } });
    }
    Ok((smax, smin))
}

/// `D_z(S^n)` for `z = φ(x)`, stored as `exp(log_scale) · matrix`.
#[derive(Clone, Debug)]
pub struct ObservedCocycle {
    pub n: usize,
    pub log_scale: f64,
    /// `k × k`, normalized.
    pub matrix: Matrix,
    /// Orthonormal `k × d` basis of `T_zφ(M)`, the image of the delay differential at `x`.
    pub image_basis: Matrix,
    pub frame: TangentFrame,
}

impl ObservedCocycle {
    /// `(1/n)·log(‖A_n w‖/‖w‖)`, or the raw log gain when `n = 0`.
    pub fn growth_rate(&self, w: &Vector) -> f64 {
        let g = self.log_scale + (&self.matrix * w).norm().ln() - w.norm().ln();
        if self.n == 0 { g } else { g / self.n as f64 }
    }

    /// The operator restricted to the image, `k × d` in the image basis.
    /// May overflow for long runs of expanding systems.
    pub fn restricted(&self) -> Matrix {
        &self.matrix * &self.image_basis * self.log_scale.exp()
    }
}

/// Chart cocycle of `T^n` stored as `(log scale, normalized matrix)`.
fn scaled_chart_cocycle(t: &Diffeo, x: &ManifoldPoint, n: usize) -> (f64, Matrix, ManifoldPoint) {
    let d = t.manifold().intrinsic_dim();
    let mut acc = Matrix::identity(d, d);
    let mut log_scale = 0.0;
    let mut p = x.clone();
    for _ in 0..n {
        acc = t.chart_derivative(&p.chart) * acc;
        let s = acc.amax();
        acc /= s;
        log_scale += s.ln();
        p = t.step(&p);
    }
    (log_scale, acc, p)
}

/// `A_n = D_{T^n x}φ · D_xT^n · (D_xφ)^+`, the derivative of the `n`-step
/// prediction map on the embedded manifold.
pub fn observed_cocycle(dm: &DelayMap, x: &ManifoldPoint, n: usize) -> Result<ObservedCocycle> {
    let t = dm.dynamics();
    let m = t.manifold();
    let frame = tangent_frame(m, x)?;
    let dx = dm.delay_differential(&frame)?;
    check_rank(&dx)?;
    let (log_scale, chart, end) = scaled_chart_cocycle(t, x, n);
    let end_frame = tangent_frame(m, &end)?;
    let de = dm.delay_differential(&end_frame)?;
    check_rank(&de)?;
    let cocycle = chart_to_frame(&end_frame, &chart, &frame)?;
    Ok(ObservedCocycle {
        n,
        log_scale,
        matrix: de * cocycle * pseudoinverse(&dx),
        image_basis: thin_qr(&dx).0,
        frame,
    })
}

/// Per-step record of a frequency run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub n: usize,
    /// `max_i sup_{v ∈ H_i} |(1/n) log(‖D_xT^n v‖/‖v‖) − χ_i|`.
    pub direct_deviation: f64,
    /// Same for the observed cocycle on the `H̃_i`; `None` if the differential at `T^n x` is rank deficient.
    pub observed_deviation: Option<f64>,
    /// `log max(‖D_{T^n x}φ‖, ‖(D_{T^n x}φ)^+‖)`.
    pub log_m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyReport {
    pub base_chart: Vec<f64>,
    pub steps: usize,
    pub eps: Vec<f64>,
    /// Fraction of `n ∈ {1, …, N}` whose observed deviation is below each `ε`.
    pub fractions: Vec<f64>,
    /// `log max(‖D_xφ‖, ‖(D_xφ)^+‖)` at the base point.
    pub base_log_k: f64,
    pub rank_deficient: usize,
    pub records: Vec<StepRecord>,
}

fn log_m(diff: &Matrix) -> Option<f64> {
    check_rank(diff).ok().map(|(smax, smin)| smax.max(1.0 / smin).ln())
}

fn deviation(log_scale: f64, sv: &[f64], n: usize, chi: f64) -> f64 {
    let rate = |s: f64| (log_scale + s.ln()) / n as f64;
    sv.iter().map(|&s| (rate(s) - chi).abs()).fold(0.0, f64::max)
}

/// Frequency of steps `1 ≤ n ≤ N` at which the observed growth rates on
/// every `H̃_i` are uniformly `ε`-close to the exponents.
///
/// Rank-deficient steps count as failures and are tallied separately.
pub fn observed_frequency(dm: &DelayMap, x: &ManifoldPoint, data: &OseledetsData, steps: usize, eps: &[f64]) -> Result<FrequencyReport> {
    let t = dm.dynamics();
    let m = t.manifold();
    if data.dimension() != m.intrinsic_dim() {
        return Err(Error::DimensionMismatch("Oseledets data does not match the manifold".into()));
    }
    if steps == 0 {
        return Err(Error::Precondition("frequency needs N >= 1".into()));
    }
    let frame = tangent_frame(m, x)?;
    let dx = dm.delay_differential(&frame)?;
    check_rank(&dx)?;
    let base_log_k = log_m(&dx).expect("rank checked");
    // W S^{-1} from Y_i = D_xφ B_i = U S Wᵀ
    let bases = data.subspaces(&frame);
    let right: Vec<Matrix> = bases
        .iter()
        .map(|b| {
            let svd = (&dx * b).svd(false, true);
            let vt = svd.v_t.expect("v_t requested");
            vt.transpose() * Matrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s))
        })
        .collect();

    // sequential pass: restricted cocycles G_i with log scales
    let l = data.exponents.len();
    let mut gs: Vec<Matrix> = data.multiplicities.iter().map(|&di| Matrix::identity(di, di)).collect();
    let mut scales = vec![0.0; l];
    let mut p = x.clone();
    let mut cur_frame = frame.clone();
    let mut cur_bases = bases;
    let mut states = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = t.step(&p);
        let next_frame = tangent_frame(m, &next)?;
        let a = chart_to_frame(&next_frame, &t.chart_derivative(&p.chart), &cur_frame)?;
        let next_bases = data.subspaces(&next_frame);
        for i in 0..l {
            let step = next_bases[i].transpose() * &a * &cur_bases[i];
            gs[i] = step * &gs[i];
            let s = gs[i].amax();
            gs[i] /= s;
            scales[i] += s.ln();
        }
        states.push((next_frame.clone(), next_bases.clone(), gs.clone(), scales.clone()));
        p = next;
        cur_frame = next_frame;
        cur_bases = next_bases;
    }

    let records: Result<Vec<StepRecord>> = states
        .par_iter()
        .enumerate()
        .map(|(j, (fr, bs, gs, scales))| {
            let n = j + 1;
            let mut direct: f64 = 0.0;
            for i in 0..l {
                direct = direct.max(deviation(scales[i], &singular_values(&gs[i]), n, data.exponents[i]));
            }
            let de = dm.delay_differential(fr)?;
            let lm = log_m(&de);
            let observed = lm.map(|_| {
                (0..l)
                    .map(|i| {
                        let sv = singular_values(&(&de * &bs[i] * &gs[i] * &right[i]));
                        deviation(scales[i], &sv, n, data.exponents[i])
                    })
                    .fold(0.0, f64::max)
            });
            Ok(StepRecord { n, direct_deviation: direct, observed_deviation: observed, log_m: lm })
        })
        .collect();
    let records = records?;
    let fractions = eps
        .iter()
        .map(|&e| records.iter().filter(|r| r.observed_deviation.is_some_and(|d| d < e)).count() as f64 / steps as f64)
        .collect();
    Ok(FrequencyReport {
        base_chart: x.chart.clone(),
        steps,
        eps: eps.to_vec(),
        fractions,
        base_log_k,
        rank_deficient: records.iter().filter(|r| r.observed_deviation.is_none()).count(),
        records,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmOccupancy {
    pub m_grid: Vec<f64>,
    /// Fraction of orbit points with `‖D_xφ‖ ≤ M` and `‖(D_xφ)^+‖ ≤ M`.
    pub fractions: Vec<f64>,
    pub points: usize,
    /// Rank-deficient points; never counted as inside any `E_M`.
    pub rank_deficient: usize,
    pub min_norm: f64,
    pub max_norm: f64,
}

/// Birkhoff occupancy of the sets `E_M` along an orbit segment.
pub fn em_occupancy(dm: &DelayMap, orbit: &OrbitSegment, m_grid: &[f64]) -> Result<EmOccupancy> {
    let man = *dm.dynamics().manifold();
    let norms: Result<Vec<Option<f64>>> = orbit
        .points
        .par_iter()
        .map(|p| {
            let d = dm.delay_differential(&tangent_frame(&man, p)?)?;
            Ok(check_rank(&d).ok().map(|(smax, smin)| smax.max(1.0 / smin)))
        })
        .collect();
    let norms = norms?;
    let n = norms.len();
    let valid: Vec<f64> = norms.iter().flatten().copied().collect();
    Ok(EmOccupancy {
        m_grid: m_grid.to_vec(),
        fractions: m_grid
            .iter()
            .map(|&mm| if n == 0 { 0.0 } else { valid.iter().filter(|&&v| v <= mm).count() as f64 / n as f64 })
            .collect(),
        points: n,
        rank_deficient: n - valid.len(),
        min_norm: valid.iter().copied().fold(f64::INFINITY, f64::min),
        max_norm: valid.iter().copied().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::orbit;
    use crate::geometry::Manifold;
    use crate::observables::{BaseObservable, MonomialBasis, Observable};
    use crate::rng::{stream, uniform_ball};
    use std::sync::Arc;

    fn log_lambda() -> f64 {
        ((3.0 + 5f64.sqrt()) / 2.0).ln()
    }

    fn delay(t: Diffeo, k: usize, radius: f64) -> DelayMap {
        let n = t.manifold().ambient_dim();
        let basis = Arc::new(MonomialBasis::for_delay(n, k).unwrap());
        let alpha = uniform_ball(&mut stream(0, "observable", 0), basis.len(), radius);
        DelayMap::new(t, Observable::new(basis, BaseObservable::Cos1, alpha).unwrap(), k).unwrap()
    }

    fn x0() -> ManifoldPoint {
        Manifold::flat_torus().point(&[0.1234, 0.5678])
    }

    #[test]
    fn cat_spectrum_and_directions() {
        let t = Diffeo::cat_map();
        let est = direct_exponents(&t, &x0(), 1000).unwrap();
        assert!((est[0].exponent + log_lambda()).abs() < 1e-6);
        assert!((est[1].exponent - log_lambda()).abs() < 1e-6);
        assert!((est[0].exponent + est[1].exponent).abs() < 1e-8);
        // eigenvector oracle
        let a = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let eig = a.symmetric_eigen();
        for e in &est {
            let j = (0..2).min_by(|&i, &j| (eig.eigenvalues[i].ln() - e.exponent).abs().total_cmp(&(eig.eigenvalues[j].ln() - e.exponent).abs())).unwrap();
            let cos = eig.eigenvectors.column(j).dot(&e.direction).abs();
            assert!(cos.min(1.0).acos() < 1e-6);
        }
    }

    #[test]
    fn rotation_exponent_is_zero() {
        let t = Diffeo::rotation(0.6180339887);
        let est = direct_exponents(&t, &Manifold::circle().point(&[0.3]), 100).unwrap();
        assert_eq!(est.len(), 1);
        assert_eq!(est[0].exponent, 0.0);
        assert!(matches!(direct_exponents(&t, &Manifold::circle().point(&[0.3]), 5), Err(Error::Precondition(_))));
    }

    #[test]
    fn analytic_and_qr_splittings_agree() {
        let t = Diffeo::cat_map();
        let a = OseledetsData::analytic(&t);
        let q = OseledetsData::from_direct(&t, &x0(), 500).unwrap();
        let frame = tangent_frame(t.manifold(), &x0()).unwrap();
        for (u, v) in a.subspaces(&frame).iter().zip(q.subspaces(&frame)) {
            assert!((u.column(0).dot(&v.column(0)).abs() - 1.0).abs() < 1e-10);
        }
        // the analytic directions are invariant under the cat matrix
        let d = t.chart_derivative(&[0.0, 0.0]);
        for (v, chi) in a.chart_directions.iter().zip(&a.exponents) {
            let w = &d * v;
            assert!((w - v * chi.exp()).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_step_cocycle_is_identity_on_image() {
        let dm = delay(Diffeo::cat_map(), 3, 1.0);
        let c = observed_cocycle(&dm, &x0(), 0).unwrap();
        let w = &c.image_basis * Vector::from_vec(vec![0.3, -1.2]);
        assert!((&c.matrix * &w * c.log_scale.exp() - &w).norm() < 1e-10);
    }

    #[test]
    fn square_delay_map_is_conjugate_to_the_cocycle() {
        // k = d: the delay differentials are invertible and
        // (D_{T^n x}φ)^{-1} A_n D_xφ = D_xT^n
        let dm = delay(Diffeo::cat_map(), 2, 1.0);
        let t = dm.dynamics();
        let x = x0();
        for n in [1, 3, 5] {
            let c = observed_cocycle(&dm, &x, n).unwrap();
            let frame = tangent_frame(t.manifold(), &x).unwrap();
            let (end_frame, direct) = crate::dynamics::pushforward(t, &frame, n).unwrap();
            let dx = dm.delay_differential(&frame).unwrap();
            let de = dm.delay_differential(&end_frame).unwrap();
            let back = de.try_inverse().unwrap() * &c.matrix * dx * c.log_scale.exp();
            let (a, b) = (singular_values(&back), singular_values(&direct));
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-8 * v.max(1.0), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn observed_growth_on_the_expanding_line() {
        let dm = delay(Diffeo::cat_map(), 3, 1.0);
        let x = x0();
        let c = observed_cocycle(&dm, &x, 50).unwrap();
        let data = OseledetsData::analytic(dm.dynamics());
        let frame = tangent_frame(dm.dynamics().manifold(), &x).unwrap();
        let h = &data.subspaces(&frame)[1];
        let dx = dm.delay_differential(&frame).unwrap();
        let v = (dx * h).column(0).into_owned();
        assert!((c.growth_rate(&v) - log_lambda()).abs() < 0.05);
    }

    #[test]
    fn frequency_on_the_cat_map() {
        let dm = delay(Diffeo::cat_map(), 3, 1.0);
        let data = OseledetsData::analytic(dm.dynamics());
        let rep = observed_frequency(&dm, &x0(), &data, 1000, &[0.01, 0.05, 0.1]).unwrap();
        assert!(rep.fractions[1] >= 0.95, "{:?}", rep.fractions);
        assert!(rep.fractions.windows(2).all(|w| w[0] <= w[1]));
        assert!(rep.records.last().unwrap().observed_deviation.unwrap() < 0.02);
        for r in &rep.records {
            assert!(r.direct_deviation < 1e-9);
            let bound = r.direct_deviation + (r.log_m.unwrap() + rep.base_log_k) / r.n as f64;
            assert!(r.observed_deviation.unwrap() <= bound + 1e-12);
        }
    }

    #[test]
    fn frequency_on_a_rotation() {
        let dm = delay(Diffeo::rotation(0.6180339887), 2, 0.1);
        let data = OseledetsData::analytic(dm.dynamics());
        let x = Manifold::circle().point(&[0.123]);
        let rep = observed_frequency(&dm, &x, &data, 1000, &[0.1]).unwrap();
        assert!(rep.fractions[0] >= 0.99);
        // N = 1 with ε below the first deviation
        let one = observed_frequency(&dm, &x, &data, 1, &[0.0]).unwrap();
        assert_eq!(one.fractions, vec![0.0]);
    }

    #[test]
    fn em_occupancy_is_monotone_with_trivial_ends() {
        let dm = delay(Diffeo::cat_map(), 3, 1.0);
        let seg = orbit(dm.dynamics(), &x0(), 2000);
        let grid = crate::prediction::log_grid(0.5, 1e4, 12);
        let occ = em_occupancy(&dm, &seg, &grid).unwrap();
        assert_eq!(occ.fractions[0], 0.0);
        assert_eq!(*occ.fractions.last().unwrap(), 1.0);
        assert!(occ.fractions.windows(2).all(|w| w[0] <= w[1]));
        let edges = em_occupancy(&dm, &seg, &[occ.min_norm * 0.999, occ.max_norm]).unwrap();
        assert_eq!(edges.fractions, vec![0.0, 1.0]);
    }
}
