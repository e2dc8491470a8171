use std::sync::Arc;

use delayembed::dynamics::Diffeo;
use delayembed::embedding::{sample_projection, DelayMap, Embedding};
use delayembed::geometry::{tangent_frame, Manifold};
use delayembed::observables::{BaseObservable, MonomialBasis, Observable};
use delayembed::prediction::{chi, sigma, PredictionDataset};
use delayembed::rng::{stream, uniform_ball};
use delayembed::sampling::{KdTree, MeasureKind, MeasureSampler};
use delayembed::Vector;
use proptest::prelude::*;

fn cat_delay(k: usize, seed: u64) -> DelayMap {
    let basis = Arc::new(MonomialBasis::for_delay(4, k).unwrap());
    let alpha = uniform_ball(&mut stream(seed, "observable", 0), basis.len(), 1.0);
    DelayMap::new(Diffeo::cat_map(), Observable::new(basis, BaseObservable::Cos1, alpha).unwrap(), k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn torus_distance_is_a_metric(a in prop::array::uniform2(0.0..1.0f64), b in prop::array::uniform2(0.0..1.0f64), c in prop::array::uniform2(0.0..1.0f64)) {
        let m = Manifold::flat_torus();
        let (x, y, z) = (m.point(&a), m.point(&b), m.point(&c));
        prop_assert_eq!(m.distance(&x, &y), m.distance(&y, &x));
        prop_assert!(m.distance(&x, &z) <= m.distance(&x, &y) + m.distance(&y, &z) + 1e-12);
        prop_assert!((&x.ambient - &y.ambient).norm() <= m.distance(&x, &y) + 1e-12);
    }

    #[test]
    fn cat_map_round_trips(a in prop::array::uniform2(0.0..1.0f64), n in 1i64..8) {
        let t = Diffeo::cat_map();
        let x = t.manifold().point(&a);
        let back = t.iterate(&t.iterate(&x, n), -n);
        prop_assert!(t.manifold().distance(&x, &back) < 1e-9);
    }

    #[test]
    fn observable_is_affine_in_alpha(seed in 0u64..1000, s in -2.0..2.0f64, a in prop::array::uniform2(0.0..1.0f64)) {
        let basis = Arc::new(MonomialBasis::for_delay(4, 2).unwrap());
        let mut rng = stream(seed, "prop", 0);
        let (u, v) = (uniform_ball(&mut rng, basis.len(), 1.0), uniform_ball(&mut rng, basis.len(), 1.0));
        let z = Manifold::flat_torus().point(&a).ambient;
        let o = |al: Vector| Observable::new(basis.clone(), BaseObservable::Zero, al).unwrap().eval(z.as_slice());
        let lhs = o(&u * s + &v);
        prop_assert!((lhs - (s * o(u) + o(v))).abs() < 1e-10);
    }

    #[test]
    fn pair_matrix_identity(seed in 0u64..1000, a in prop::array::uniform2(0.0..1.0f64), b in prop::array::uniform2(0.0..1.0f64)) {
        let dm = cat_delay(3, seed);
        let m = Manifold::flat_torus();
        let (x, y) = (m.point(&a), m.point(&b));
        let pm = dm.pair_matrix(&x, &y);
        let lhs = dm.embed(&x) - dm.embed(&y);
        let rhs = &pm.d * dm.observable().alpha() + &pm.w;
        prop_assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn random_projections_are_orthogonal_projectors(seed in 0u64..10_000, k in 1usize..=4) {
        let p = sample_projection(4, k, &mut stream(seed, "prop", 1)).unwrap();
        let pr = p.projector();
        prop_assert!((&pr * &pr - &pr).amax() < 1e-12);
        prop_assert!((pr.transpose() - &pr).amax() < 1e-12);
    }

    #[test]
    fn delay_differential_has_full_rank(a in prop::array::uniform2(0.0..1.0f64)) {
        let dm = cat_delay(3, 0);
        let m = Manifold::flat_torus();
        let d = dm.differential(&tangent_frame(&m, &m.point(&a)).unwrap()).unwrap();
        prop_assert!(delayembed::linalg::has_full_column_rank(&d));
    }

    #[test]
    fn kd_tree_matches_linear_scan(seed in 0u64..1000, eps in 0.01..0.5f64) {
        let mut rng = stream(seed, "prop", 2);
        let pts: Vec<Vector> = (0..300).map(|_| uniform_ball(&mut rng, 3, 1.0)).collect();
        let tree = KdTree::new(&pts);
        let c = uniform_ball(&mut rng, 3, 1.0);
        let scan: Vec<usize> = (0..pts.len()).filter(|&i| (&pts[i] - &c).norm() < eps).collect();
        prop_assert_eq!(tree.within(c.as_slice(), eps), scan);
    }
}

#[test]
fn parallel_axis_and_translation_on_cat_map() {
    let dm = cat_delay(3, 0);
    let pts = MeasureSampler::new(Manifold::flat_torus(), MeasureKind::Lebesgue, 4).sample(5000).unwrap();
    let ds = PredictionDataset::from_delay(&dm, pts).unwrap();
    let shift = Vector::from_vec(vec![10.0, -3.0, 0.5]);
    let moved = ds.translate_images(&shift);
    for i in (0..5000).step_by(250) {
        let y = ds.cloud.embedded[i].clone();
        for eps in [0.1, 0.3, 1.0] {
            let idx: Vec<usize> = (0..ds.len()).filter(|&j| (&ds.cloud.embedded[j] - &y).norm() < eps).collect();
            let mean_sq = idx.iter().map(|&j| ds.images[j].norm_squared()).sum::<f64>() / idx.len() as f64;
            let (c, s) = (chi(&ds, &y, eps).unwrap(), sigma(&ds, &y, eps).unwrap());
            assert!((s * s + c.norm_squared() - mean_sq).abs() < 1e-10 * mean_sq.max(1.0));
            assert!((sigma(&moved, &y, eps).unwrap() - s).abs() < 1e-10);
        }
    }
}
