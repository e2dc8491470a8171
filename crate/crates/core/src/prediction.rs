//! Empirical prediction map and prediction-error functionals.
//!
//! The invariant measure is replaced by the empirical measure of a point
//! cloud, so `χ_ε(y)` and `σ_ε(y)` become averages over the cloud points
//! whose images fall in the open ball `B(y, ε)`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::Diffeo;
use crate::embedding::{DelayMap, Embedding};
use crate::error::{Error, Result};
use crate::geometry::ManifoldPoint;
use crate::linalg::{fit_line, median};
use crate::rng::stream;
use crate::sampling::{ball_query, PointCloud};
use crate::Vector;

/// Cells with fewer cloud points than this are dropped from error curves.
pub const MIN_BALL_POINTS: usize = 5;
/// Neighbour order used for the resolution floor.
pub const FLOOR_NEIGHBOR: usize = 5;
const FLOOR_SUBSAMPLE: usize = 2000;

/// A cloud together with the one-step images `φ(T x_i)`.
#[derive(Clone, Debug)]
pub struct PredictionDataset {
    pub cloud: PointCloud,
    pub images: Vec<Vector>,
    pub system: String,
    pub k: usize,
}

impl PredictionDataset {
    /// Embed `points` and their forward images through `map`.
    pub fn build(dynamics: &Diffeo, points: Vec<ManifoldPoint>, map: &dyn Embedding) -> Result<Self> {
        let m = *dynamics.manifold();
        let images: Vec<Vector> = points.par_iter().map(|p| map.embed(&dynamics.step(p))).collect();
        let cloud = PointCloud::build(m, points, map, false)?;
        Ok(Self { cloud, images, system: dynamics.id(), k: map.output_dim() })
    }

    pub fn from_delay(dm: &DelayMap, points: Vec<ManifoldPoint>) -> Result<Self> {
        Self::build(dm.dynamics(), points, dm)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// The same dataset with a constant vector added to every image.
    pub fn translate_images(&self, shift: &Vector) -> Self {
        Self { images: self.images.iter().map(|v| v + shift).collect(), ..self.clone() }
    }

    /// Median distance to the `FLOOR_NEIGHBOR`-th nearest neighbour over an
    /// evenly strided subsample of the cloud.
    pub fn resolution_floor(&self) -> Option<f64> {
        let n = self.len();
        let stride = n.div_ceil(FLOOR_SUBSAMPLE).max(1);
        let dists: Vec<f64> = (0..n)
            .step_by(stride)
            .collect::<Vec<_>>()
            .par_iter()
            .filter_map(|&i| self.cloud.index().kth_neighbor_distance(i, FLOOR_NEIGHBOR))
            .collect();
        median(&dists)
    }

    /// Exact diameter of the image set `{φ(x_i)}` (quadratic in the cloud size).
    pub fn image_diameter(&self) -> f64 {
        let e = &self.cloud.embedded;
        (0..e.len())
            .into_par_iter()
            .map(|i| e[i + 1..].iter().map(|w| (&e[i] - w).norm()).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max)
    }

    fn ball(&self, y: &Vector, eps: f64) -> Result<Vec<usize>> {
        let idx = ball_query(&self.cloud, y, eps)?;
        if idx.is_empty() {
            return Err(Error::EmptyBall { eps });
        }
        Ok(idx)
    }
}

fn mean_image(ds: &PredictionDataset, idx: &[usize]) -> Vector {
    let mut acc = Vector::zeros(ds.images[idx[0]].len());
    for &i in idx {
        acc += &ds.images[i];
    }
    acc / idx.len() as f64
}

fn spread(ds: &PredictionDataset, idx: &[usize], center: &Vector) -> f64 {
    let ss: f64 = idx.iter().map(|&i| (&ds.images[i] - center).norm_squared()).sum();
    (ss / idx.len() as f64).sqrt()
}

/// Mean one-step image over the ball `B(y, ε)`.
pub fn chi(ds: &PredictionDataset, y: &Vector, eps: f64) -> Result<Vector> {
    Ok(mean_image(ds, &ds.ball(y, eps)?))
}

/// Root-mean-square deviation of the one-step images from `chi` over `B(y, ε)`.
pub fn sigma(ds: &PredictionDataset, y: &Vector, eps: f64) -> Result<f64> {
    let idx = ds.ball(y, eps)?;
    Ok(spread(ds, &idx, &mean_image(ds, &idx)))
}

/// `(σ, ball size)` at `y`.
pub fn sigma_with_count(ds: &PredictionDataset, y: &Vector, eps: f64) -> Result<(f64, usize)> {
    let idx = ds.ball(y, eps)?;
    Ok((spread(ds, &idx, &mean_image(ds, &idx)), idx.len()))
}

/// Nearest-neighbour realization of the prediction map; ties go to the lowest index.
pub fn predict(ds: &PredictionDataset, y: &Vector) -> Result<Vector> {
    let (i, _) = ds
        .cloud
        .index()
        .nearest(y.as_slice())
        .ok_or_else(|| Error::Precondition("prediction needs a nonempty dataset".into()))?;
    Ok(ds.images[i].clone())
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DroppedCell {
    pub probe: usize,
    pub eps: f64,
    pub count: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub eps: Vec<f64>,
    /// Median σ over the retained probes of each cell.
    pub median_sigma: Vec<Option<f64>>,
    /// Median ball occupancy over the retained probes of each cell.
    pub median_occupancy: Vec<Option<f64>>,
    /// Per-probe σ, `None` where the cell was dropped.
    pub per_probe: Vec<Vec<Option<f64>>>,
    pub dropped: Vec<DroppedCell>,
    pub resolution_floor: Option<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

/// Error curve at explicit probe points `y_j` in the embedding space.
pub fn error_curve_at(ds: &PredictionDataset, probes: &[Vector], eps_grid: &[f64]) -> Result<ErrorCurve> {
    if ds.is_empty() {
        return Err(Error::Precondition("empty prediction dataset".into()));
    }
    if eps_grid.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Precondition("ε grid must be positive".into()));
    }
    let floor = ds.resolution_floor();
    let cells: Vec<Vec<std::result::Result<(f64, usize), DroppedCell>>> = probes
        .par_iter()
        .enumerate()
        .map(|(j, y)| {
            eps_grid
                .iter()
                .map(|&eps| {
                    let drop = |count: usize, reason: &str| DroppedCell { probe: j, eps, count, reason: reason.into() };
                    if floor.is_some_and(|f| eps < f) {
                        return Err(drop(0, "below resolution floor"));
                    }
                    match sigma_with_count(ds, y, eps) {
                        Ok((_, c)) if c < MIN_BALL_POINTS => Err(drop(c, "too few points")),
                        Ok(v) => Ok(v),
                        Err(Error::EmptyBall { .. }) => Err(drop(0, "empty ball")),
                        Err(e) => panic!("unexpected error in σ evaluation: {e}"),
                    }
                })
                .collect()
        })
        .collect();
    let mut dropped = Vec::new();
    let mut per_probe = Vec::with_capacity(probes.len());
    for row in &cells {
        per_probe.push(
            row.iter()
                .map(|c| match c {
                    Ok((s, _)) => Some(*s),
                    Err(d) => {
                        dropped.push(d.clone());
                        None
                    }
                })
                .collect::<Vec<_>>(),
        );
    }
    let mut median_sigma = Vec::with_capacity(eps_grid.len());
    let mut median_occupancy = Vec::with_capacity(eps_grid.len());
    for c in 0..eps_grid.len() {
        let kept: Vec<(f64, usize)> = cells.iter().filter_map(|row| row[c].as_ref().ok().copied()).collect();
        median_sigma.push(median(&kept.iter().map(|v| v.0).collect::<Vec<_>>()));
        median_occupancy.push(median(&kept.iter().map(|v| v.1 as f64).collect::<Vec<_>>()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps_grid
        .iter()
        .zip(&median_sigma)
        .filter_map(|(&e, s)| s.filter(|&s| s > 0.0).map(|s| (e.ln(), s.ln())))
        .unzip();
    let fit = fit_line(&xs, &ys);
    Ok(ErrorCurve {
        eps: eps_grid.to_vec(),
        median_sigma,
        median_occupancy,
        per_probe,
        dropped,
        resolution_floor: floor,
        slope: fit.map(|f| f.0),
        intercept: fit.map(|f| f.1),
    })
}

/// Error curve at `probes` cloud points drawn uniformly (hence μ-distributed).
pub fn error_curve(ds: &PredictionDataset, probes: usize, eps_grid: &[f64], seed: u64) -> Result<ErrorCurve> {
    if ds.is_empty() {
        return Err(Error::Precondition("empty prediction dataset".into()));
    }
    let mut rng = stream(seed, "prediction", 0);
    let ys: Vec<Vector> = (0..probes).map(|_| ds.cloud.embedded[rng.random_range(0..ds.len())].clone()).collect();
    error_curve_at(ds, &ys, eps_grid)
}
