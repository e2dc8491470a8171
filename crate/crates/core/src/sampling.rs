//! Reference measures on the test manifolds, Cantor test sets, box-counting
//! dimension estimates and an exact fixed-radius spatial index.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{periodic_screen, Diffeo};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::geometry::{tangent_frame, Manifold, ManifoldPoint};
use crate::linalg::fit_line;
use crate::rng::{stream, StreamRng};
use crate::{Matrix, Vector};

/// Tolerance used when screening sampled points for low periods.
pub const PERIODIC_TOL: f64 = 1e-8;

/// Second chart coordinate of the Cantor-product test set on the torus.
pub const CANTOR_FIXED_COORD: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MeasureKind {
    /// Normalized Riemannian volume.
    Lebesgue,
    /// Consecutive orbit points in segments of the given length, each segment
    /// started from a Lebesgue-random point.
    Orbit { segment: usize },
    /// Middle-third Cantor set truncated at `level` in the first chart
    /// coordinate, times the fixed point [`CANTOR_FIXED_COORD`] in the second.
    Cantor { level: u32 },
}

impl MeasureKind {
    /// Parse `"lebesgue"`, `"orbit:<n>"` or `"cantor:<level>"`.
    pub fn from_id(id: &str) -> Result<Self> {
        let bad = || Error::UnknownId { kind: "measure", id: id.to_string() };
        if id == "lebesgue" {
            return Ok(Self::Lebesgue);
        }
        if let Some(n) = id.strip_prefix("orbit:") {
            let segment = n.parse::<usize>().map_err(|_| bad())?;
            return if segment == 0 { Err(bad()) } else { Ok(Self::Orbit { segment }) };
        }
        if let Some(l) = id.strip_prefix("cantor:") {
            let level = l.parse::<u32>().map_err(|_| bad())?;
            return if (1..=30).contains(&level) { Ok(Self::Cantor { level }) } else { Err(bad()) };
        }
        Err(bad())
    }

    pub fn id(&self) -> String {
        match self {
            Self::Lebesgue => "lebesgue".into(),
            Self::Orbit { segment } => format!("orbit:{segment}"),
            Self::Cantor { level } => format!("cantor:{level}"),
        }
    }
}

/// Seeded sampler for one of the reference measures.
///
/// With a screening configuration attached, sampled points that are
/// numerically `p`-periodic for some `p < k` are discarded and redrawn.
#[derive(Clone, Debug)]
pub struct MeasureSampler {
    manifold: Manifold,
    kind: MeasureKind,
    seed: u64,
    dynamics: Option<Diffeo>,
    screen_periods: usize,
}

impl MeasureSampler {
    pub fn new(manifold: Manifold, kind: MeasureKind, seed: u64) -> Self {
        Self { manifold, kind, seed, dynamics: None, screen_periods: 0 }
    }

    /// Attach dynamics; points periodic with period `< k` are resampled.
    /// Required for orbit sampling.
    pub fn with_dynamics(mut self, dynamics: Diffeo, k: usize) -> Self {
        self.dynamics = Some(dynamics);
        self.screen_periods = k.saturating_sub(1);
        self
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    fn screened(&self, x: &ManifoldPoint) -> bool {
        match (&self.dynamics, self.screen_periods) {
            (Some(t), p) if p > 0 => periodic_screen(t, x, p, PERIODIC_TOL).iter().any(|r| r.periodic),
            _ => false,
        }
    }

    fn lebesgue_point(&self, rng: &mut StreamRng) -> ManifoldPoint {
        let chart: Vec<f64> = (0..self.manifold.intrinsic_dim()).map(|_| rng.random()).collect();
        self.manifold.point(&chart)
    }

    fn cantor_point(&self, rng: &mut StreamRng, level: u32) -> ManifoldPoint {
        let mut u = 0.0;
        let mut scale = 1.0;
        for _ in 0..level {
            scale /= 3.0;
            if rng.random::<bool>() {
                u += 2.0 * scale;
            }
        }
        // keep the offset off the interval edges so base-3 digits are stable
        u += scale * rng.random_range(1e-9..1.0 - 1e-9);
        let mut chart = vec![u];
        if self.manifold.intrinsic_dim() == 2 {
            chart.push(CANTOR_FIXED_COORD);
        }
        self.manifold.point(&chart)
    }

    /// Draw `n` points. The stream depends only on the seed, so repeated
    /// calls with the same sampler return identical samples.
    pub fn sample(&self, n: usize) -> Result<Vec<ManifoldPoint>> {
        if n == 0 {
            return Err(Error::Precondition("sample size must be at least 1".into()));
        }
        let mut rng = stream(self.seed, "sampling", 0);
        let mut out = Vec::with_capacity(n);
        match self.kind {
            MeasureKind::Lebesgue | MeasureKind::Cantor { .. } => {
                while out.len() < n {
                    let p = match self.kind {
                        MeasureKind::Cantor { level } => self.cantor_point(&mut rng, level),
                        _ => self.lebesgue_point(&mut rng),
                    };
                    if !self.screened(&p) {
                        out.push(p);
                    }
                }
            }
            MeasureKind::Orbit { segment } => {
                let t = self
                    .dynamics
                    .ok_or_else(|| Error::Precondition("orbit sampling requires dynamics".into()))?;
                while out.len() < n {
                    let mut p = self.lebesgue_point(&mut rng);
                    if self.screened(&p) {
                        continue;
                    }
                    for _ in 0..segment.min(n - out.len()) {
                        let next = t.step(&p);
                        out.push(p);
                        p = next;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Least-squares slope of `log(#occupied boxes)` against `log(1/scale)`,
/// boxes taken on the grid `scale·ℤ^d` in chart coordinates.
pub fn boxcount_dimension(points: &[Vec<f64>], scales: &[f64]) -> Result<f64> {
    if scales.len() < 4 {
        return Err(Error::InsufficientScales { got: scales.len(), required: 4 });
    }
    if points.len() < 1000 {
        return Err(Error::InsufficientPoints { got: points.len(), required: 1000 });
    }
    if scales.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Precondition("box scales must be positive".into()));
    }
    let mut xs = Vec::with_capacity(scales.len());
    let mut ys = Vec::with_capacity(scales.len());
    for &s in scales {
        let boxes: HashSet<Vec<i64>> =
            points.iter().map(|p| p.iter().map(|&c| (c / s).floor() as i64).collect()).collect();
        xs.push((1.0 / s).ln());
        ys.push((boxes.len() as f64).ln());
    }
    fit_line(&xs, &ys)
        .map(|(slope, _)| slope)
        .ok_or_else(|| Error::Precondition("box scales must not all coincide".into()))
}

const LEAF_SIZE: usize = 16;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node>, lo: Vec<f64>, hi: Vec<f64> },
}

/// k-d tree over points of `ℝ^k` answering exact open-ball queries.
#[derive(Clone, Debug)]
pub struct KdTree {
    dim: usize,
    coords: Vec<f64>,
    order: Vec<usize>,
    root: Node,
}

impl KdTree {
    pub fn new(points: &[Vector]) -> Self {
        let dim = points.first().map_or(0, |p| p.len());
        let coords: Vec<f64> = points.iter().flat_map(|p| p.iter().copied()).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = build(&coords, dim, &mut order, 0);
        Self { dim, coords, order, root }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn dist2(&self, i: usize, c: &[f64]) -> f64 {
        self.point(i).iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Indices `i` with `‖p_i − center‖ < eps`, ascending.
    pub fn within(&self, center: &[f64], eps: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.is_empty() {
            return out;
        }
        self.collect(&self.root, center, eps, &mut out);
        out.sort_unstable();
        out
    }

    fn collect(&self, node: &Node, c: &[f64], eps: f64, out: &mut Vec<usize>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    // compare norms, not squared norms, so the strict test
                    // agrees bit-for-bit with a linear scan
                    if self.dist2(i, c).sqrt() < eps {
                        out.push(i);
                    }
                }
            }
            Node::Split { left, right, lo, hi, .. } => {
                if box_gap(lo, hi, c) < eps {
                    self.collect(left, c, eps, out);
                    self.collect(right, c, eps, out);
                }
            }
        }
    }

    /// Nearest point to `center`; ties go to the lowest index.
    pub fn nearest(&self, center: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        self.nearest_in(&self.root, center, &mut best);
        best.map(|(i, d2)| (i, d2.sqrt()))
    }

    fn nearest_in(&self, node: &Node, c: &[f64], best: &mut Option<(usize, f64)>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let d2 = self.dist2(i, c);
                    let better = match *best {
                        None => true,
                        Some((bi, bd)) => d2 < bd || (d2 == bd && i < bi),
                    };
                    if better {
                        *best = Some((i, d2));
                    }
                }
            }
            Node::Split { axis, value, left, right, lo, hi } => {
                if let Some((_, bd)) = *best {
                    let g = box_gap(lo, hi, c);
                    if g * g > bd {
                        return;
                    }
                }
                let (first, second) = if c[*axis] < *value { (left, right) } else { (right, left) };
                self.nearest_in(first, c, best);
                self.nearest_in(second, c, best);
            }
        }
    }

    /// Distance from point `i` to its `kth` nearest other point (1-based).
    pub fn kth_neighbor_distance(&self, i: usize, kth: usize) -> Option<f64> {
        if kth == 0 || kth >= self.len() {
            return None;
        }
        // grow the radius until the ball holds enough points
        let c = self.point(i).to_vec();
        let mut r = 1e-6;
        loop {
            let hits = self.within(&c, r);
            if hits.len() > kth {
                let mut d: Vec<f64> =
                    hits.iter().filter(|&&j| j != i).map(|&j| self.dist2(j, &c).sqrt()).collect();
                d.sort_by(f64::total_cmp);
                return Some(d[kth - 1]);
            }
            r *= 2.0;
        }
    }
}

fn bounds(coords: &[f64], dim: usize, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &i in idx {
        for a in 0..dim {
            let v = coords[i * dim + a];
            lo[a] = lo[a].min(v);
            hi[a] = hi[a].max(v);
        }
    }
    (lo, hi)
}

fn build(coords: &[f64], dim: usize, order: &mut [usize], offset: usize) -> Node {
    let n = order.len();
    if n <= LEAF_SIZE || dim == 0 {
        return Node::Leaf { start: offset, end: offset + n };
    }
    let (lo, hi) = bounds(coords, dim, order);
    let axis = (0..dim).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
    if hi[axis] - lo[axis] == 0.0 {
        return Node::Leaf { start: offset, end: offset + n };
    }
    let mid = n / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        coords[a * dim + axis].total_cmp(&coords[b * dim + axis]).then(a.cmp(&b))
    });
    let value = coords[order[mid] * dim + axis];
    let (l, r) = order.split_at_mut(mid);
    let left = build(coords, dim, l, offset);
    let right = build(coords, dim, r, offset + mid);
    Node::Split { axis, value, left: Box::new(left), right: Box::new(right), lo, hi }
}

fn box_gap(lo: &[f64], hi: &[f64], c: &[f64]) -> f64 {
    lo.iter()
        .zip(hi)
        .zip(c)
        .map(|((l, h), x)| {
            let g = if x < l {
                l - x
            } else if x > h {
                x - h
            } else {
                0.0
            };
            g * g
        })
        .sum::<f64>()
        .sqrt()
        // bounding boxes are exact, shave a hair off so rounding in the gap
        // never prunes a point the leaf test would accept
        * (1.0 - 1e-12)
}

/// Sampled points, their images in `ℝ^k` and a spatial index over the images.
#[derive(Clone, Debug)]
pub struct PointCloud {
    manifold: Manifold,
    pub points: Vec<ManifoldPoint>,
    pub embedded: Vec<Vector>,
    /// Differentials of the embedding at each point in frame coordinates, when computed.
    pub differentials: Option<Vec<Matrix>>,
    index: KdTree,
}

impl PointCloud {
    pub fn from_parts(
        manifold: Manifold,
        points: Vec<ManifoldPoint>,
        embedded: Vec<Vector>,
        differentials: Option<Vec<Matrix>>,
    ) -> Result<Self> {
        if points.len() != embedded.len() || differentials.as_ref().is_some_and(|d| d.len() != points.len()) {
            return Err(Error::DimensionMismatch("cloud components have different lengths".into()));
        }
        let index = KdTree::new(&embedded);
        Ok(Self { manifold, points, embedded, differentials, index })
    }

    /// Embed `points` through `map`, optionally recording differentials.
    pub fn build(manifold: Manifold, points: Vec<ManifoldPoint>, map: &dyn Embedding, with_differentials: bool) -> Result<Self> {
        use rayon::prelude::*;
        let embedded: Vec<Vector> = points.par_iter().map(|p| map.embed(p)).collect();
        let differentials = if with_differentials {
            let diffs: Result<Vec<Matrix>> = points
                .par_iter()
                .map(|p| map.differential(&tangent_frame(&manifold, p)?))
                .collect();
            Some(diffs?)
        } else {
            None
        };
        Self::from_parts(manifold, points, embedded, differentials)
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    /// The same cloud with every embedded coordinate (and differential) multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let embedded: Vec<Vector> = self.embedded.iter().map(|v| v * lambda).collect();
        let differentials = self.differentials.as_ref().map(|ds| ds.iter().map(|d| d * lambda).collect());
        let index = KdTree::new(&embedded);
        Self { manifold: self.manifold, points: self.points.clone(), embedded, differentials, index }
    }

    /// Largest distance between embedded points along any bounding-box diagonal.
    pub fn embedded_diameter_bound(&self) -> f64 {
        let Some(first) = self.embedded.first() else { return 0.0 };
        let mut lo = first.clone();
        let mut hi = first.clone();
        for v in &self.embedded {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (hi - lo).norm()
    }
}

/// Indices of cloud points whose image lies in the open ball `B(center, eps)`.
pub fn ball_query(pc: &PointCloud, center: &Vector, eps: f64) -> Result<Vec<usize>> {
    if !(eps > 0.0) {
        return Err(Error::Precondition("ball radius must be positive".into()));
    }
    if !pc.is_empty() && center.len() != pc.embedded[0].len() {
        return Err(Error::DimensionMismatch("query center has the wrong dimension".into()));
    }
    Ok(pc.index.within(center.as_slice(), eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Projection;
    use crate::rng::gaussian_vector;

    fn linear_scan(points: &[Vector], c: &Vector, eps: f64) -> Vec<usize> {
        (0..points.len()).filter(|&i| (&points[i] - c).norm() < eps).collect()
    }

    #[test]
    fn lebesgue_sampler_is_deterministic() {
        let s = MeasureSampler::new(Manifold::flat_torus(), MeasureKind::Lebesgue, 0);
        let a = s.sample(4).unwrap();
        let b = s.sample(4).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.chart.iter().all(|&c| (0.0..1.0).contains(&c))));
        let bits = |v: &[ManifoldPoint]| v.iter().flat_map(|p| p.chart.iter().map(|c| c.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = MeasureSampler::new(Manifold::flat_torus(), MeasureKind::Lebesgue, 1).sample(4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn cantor_samples_avoid_middle_digit() {
        let s = MeasureSampler::new(Manifold::flat_torus(), MeasureKind::Cantor { level: 8 }, 3);
        for p in s.sample(2000).unwrap() {
            let mut idx = (p.chart[0] * 3f64.powi(8)).floor() as u64;
            for _ in 0..8 {
                assert_ne!(idx % 3, 1, "chart {}", p.chart[0]);
                idx /= 3;
            }
            assert_eq!(p.chart[1], CANTOR_FIXED_COORD);
        }
    }

    #[test]
    fn orbit_sampler_birkhoff_mean() {
        let cat = Diffeo::cat_map();
        let s = MeasureSampler::new(*cat.manifold(), MeasureKind::Orbit { segment: 100_000 }, 0).with_dynamics(cat, 3);
        let pts = s.sample(100_000).unwrap();
        for w in pts.windows(2).take(1000) {
            assert_eq!(cat.step(&w[0]), w[1]);
        }
        let mean = pts.iter().map(|p| (std::f64::consts::TAU * p.chart[0]).cos()).sum::<f64>() / pts.len() as f64;
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn orbit_sampler_needs_dynamics() {
        let s = MeasureSampler::new(Manifold::flat_torus(), MeasureKind::Orbit { segment: 10 }, 0);
        assert!(s.sample(5).is_err());
    }

    #[test]
    fn measure_ids() {
        assert_eq!(MeasureKind::from_id("cantor:8").unwrap(), MeasureKind::Cantor { level: 8 });
        assert_eq!(MeasureKind::from_id("orbit:500").unwrap().id(), "orbit:500");
        assert!(MeasureKind::from_id("orbit:0").is_err());
        assert!(MeasureKind::from_id("gaussian").is_err());
    }

    #[test]
    fn box_counting_examples() {
        let torus = Manifold::flat_torus();
        let leb = MeasureSampler::new(torus, MeasureKind::Lebesgue, 0).sample(100_000).unwrap();
        let charts: Vec<Vec<f64>> = leb.iter().map(|p| p.chart.clone()).collect();
        let scales: Vec<f64> = (1..=6).map(|j| 0.5f64.powi(j)).collect();
        let dim = boxcount_dimension(&charts, &scales).unwrap();
        assert!((dim - 2.0).abs() < 0.1, "{dim}");

        let cantor = MeasureSampler::new(torus, MeasureKind::Cantor { level: 8 }, 0).sample(100_000).unwrap();
        let charts: Vec<Vec<f64>> = cantor.iter().map(|p| p.chart.clone()).collect();
        let scales: Vec<f64> = (1..=6).map(|j| 3f64.powi(-j)).collect();
        let dim = boxcount_dimension(&charts, &scales).unwrap();
        assert!((dim - 2f64.ln() / 3f64.ln()).abs() < 0.05, "{dim}");

        let single = vec![vec![0.3, 0.4]; 1000];
        assert_eq!(boxcount_dimension(&single, &scales).unwrap(), 0.0);
        assert!(matches!(
            boxcount_dimension(&single, &scales[..3]),
            Err(Error::InsufficientScales { got: 3, .. })
        ));
    }

    #[test]
    fn kd_tree_matches_linear_scan() {
        let mut rng = stream(0, "kd-test", 0);
        for dim in 1..=4 {
            let pts: Vec<Vector> = (0..1000).map(|_| gaussian_vector(&mut rng, dim)).collect();
            let tree = KdTree::new(&pts);
            for _ in 0..100 {
                let c = gaussian_vector(&mut rng, dim);
                let eps = rng.random_range(0.01..1.5);
                assert_eq!(tree.within(c.as_slice(), eps), linear_scan(&pts, &c, eps));
            }
            for _ in 0..50 {
                let c = gaussian_vector(&mut rng, dim);
                let (i, d) = tree.nearest(c.as_slice()).unwrap();
                let best = (0..pts.len())
                    .min_by(|&a, &b| (&pts[a] - &c).norm().total_cmp(&(&pts[b] - &c).norm()))
                    .unwrap();
                assert_eq!(i, best);
                assert!((d - (&pts[best] - &c).norm()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn nearest_breaks_ties_by_lowest_index() {
        let pts = vec![Vector::from_vec(vec![1.0]); 40];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&[1.0]).unwrap().0, 0);
        assert_eq!(tree.within(&[1.0], 0.5).len(), 40);
    }

    #[test]
    fn ball_query_examples() {
        let torus = Manifold::flat_torus();
        let pts = MeasureSampler::new(torus, MeasureKind::Lebesgue, 5).sample(500).unwrap();
        let pc = PointCloud::build(torus, pts, &Projection::coordinate(4, 3), false).unwrap();
        let mut min_gap = f64::INFINITY;
        for i in 0..pc.len() {
            for j in 0..i {
                let g = (&pc.embedded[i] - &pc.embedded[j]).norm();
                if g > 0.0 {
                    min_gap = min_gap.min(g);
                }
            }
        }
        assert_eq!(ball_query(&pc, &pc.embedded[17], min_gap * 0.5).unwrap(), vec![17]);
        let diam = pc.embedded_diameter_bound();
        assert_eq!(ball_query(&pc, &pc.embedded[0], diam + 1.0).unwrap().len(), pc.len());
        assert!(ball_query(&pc, &pc.embedded[0], 0.0).is_err());
    }

    #[test]
    fn kth_neighbor_distance_matches_brute_force() {
        let mut rng = stream(1, "kd-test", 0);
        let pts: Vec<Vector> = (0..300).map(|_| gaussian_vector(&mut rng, 3)).collect();
        let tree = KdTree::new(&pts);
        for i in [0, 50, 299] {
            let mut d: Vec<f64> = (0..300).filter(|&j| j != i).map(|j| (&pts[i] - &pts[j]).norm()).collect();
            d.sort_by(f64::total_cmp);
            assert_eq!(tree.kth_neighbor_distance(i, 5).unwrap(), d[4]);
        }
    }
}
