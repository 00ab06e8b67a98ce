//! Zonotope predicates against an independent planar oracle.
//!
//! A planar zonotope is the intersection of one slab per generator, with
//! normal perpendicular to that generator. This gives an exact gauge that
//! shares no code with the LP path.

use infoplan_core::geometry::Zonotope;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn slab_gauge(g: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
    let mut s: f64 = 0.0;
    for i in 0..g.ncols() {
        let n = DVector::from_vec(vec![-g[(1, i)], g[(0, i)]]);
        if n.norm() < 1e-12 {
            continue;
        }
        let width: f64 = (0..g.ncols()).map(|j| n.dot(&g.column(j)).abs()).sum();
        s = s.max(n.dot(d).abs() / width);
    }
    s
}

fn slab_contains(z: &Zonotope, p: &DVector<f64>) -> bool {
    slab_gauge(z.generators(), &(p - z.center())) <= 1.0 + 1e-9
}

fn sample_point(z: &Zonotope, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let beta = DVector::from_iterator(z.num_generators(), (0..z.num_generators()).map(|_| rng.random_range(-1.0..=1.0)));
    z.center() + z.generators() * beta
}

prop_compose! {
    fn zonotope2()(c in prop::collection::vec(-3.0..3.0f64, 2),
                   l in 2usize..6)
                  (c in Just(c), g in prop::collection::vec(-2.0..2.0f64, 2 * l), l in Just(l)) -> Zonotope {
        Zonotope::new(DVector::from_vec(c), DMatrix::from_column_slice(2, l, &g)).unwrap()
    }
}

fn well_spread(z: &Zonotope) -> bool {
    // both rows nonzero and generators not all collinear
    let g = z.generators();
    (g.clone() * g.transpose()).determinant().abs() > 1e-3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gauge_matches_slab_oracle(z in zonotope2(), p in prop::collection::vec(-6.0..6.0f64, 2)) {
        prop_assume!(well_spread(&z));
        let p = DVector::from_vec(p);
        let got = z.contains_point(&p).unwrap();
        let want = slab_gauge(z.generators(), &(&p - z.center()));
        prop_assert!((got.scale - want).abs() <= 1e-8 * want.max(1.0), "{} vs {}", got.scale, want);
    }

    #[test]
    fn sampled_points_are_contained(z in zonotope2(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let p = sample_point(&z, &mut rng);
            prop_assert!(z.contains_point(&p).unwrap().contains);
        }
    }

    #[test]
    fn scaling_generators_keeps_containment(z in zonotope2(), p in prop::collection::vec(-5.0..5.0f64, 2), gamma in 1.0..4.0f64) {
        let p = DVector::from_vec(p);
        let big = Zonotope::new(z.center().clone(), z.generators() * gamma).unwrap();
        if z.contains_point(&p).unwrap().contains {
            prop_assert!(big.contains_point(&p).unwrap().contains);
        }
    }

    #[test]
    fn intersection_is_symmetric_and_matches_oracle(a in zonotope2(), b in zonotope2(), seed in any::<u64>()) {
        let (ea, sa) = a.intersection_empty(&b).unwrap();
        let (eb, sb) = b.intersection_empty(&a).unwrap();
        prop_assert_eq!(ea, eb);
        prop_assert!((sa - sb).abs() <= 1e-9 * sa.max(1.0));
        let mut g = DMatrix::zeros(2, a.num_generators() + b.num_generators());
        g.columns_mut(0, a.num_generators()).copy_from(a.generators());
        g.columns_mut(a.num_generators(), b.num_generators()).copy_from(b.generators());
        let want = slab_gauge(&g, &(a.center() - b.center()));
        prop_assert!((sa - want).abs() <= 1e-8 * want.max(1.0));
        // Never report disjoint sets that share a sampled point.
        if ea {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..50 {
                prop_assert!(!slab_contains(&b, &sample_point(&a, &mut rng)));
            }
        }
    }

    #[test]
    fn linear_map_is_pointwise(z in zonotope2(), m in prop::collection::vec(-2.0..2.0f64, 4), seed in any::<u64>()) {
        let a = DMatrix::from_row_slice(2, 2, &m);
        prop_assume!(a.determinant().abs() > 0.1);
        let az = z.linear_map(&a).unwrap();
        let inv = a.clone().try_inverse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let x = sample_point(&z, &mut rng);
            prop_assert!(az.contains_point(&(&a * &x)).unwrap().contains);
            let y = sample_point(&az, &mut rng);
            prop_assert!(z.contains_point(&(&inv * &y)).unwrap().contains);
        }
    }

    #[test]
    fn minkowski_sum_commutes_and_associates(a in zonotope2(), b in zonotope2(), c in zonotope2(), seed in any::<u64>()) {
        let ab = a.minkowski_sum(&b).unwrap();
        let ba = b.minkowski_sum(&a).unwrap();
        let left = ab.minkowski_sum(&c).unwrap();
        let right = a.minkowski_sum(&b.minkowski_sum(&c).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let p = sample_point(&ab, &mut rng);
            prop_assert!(ba.contains_point(&p).unwrap().contains);
            let q = sample_point(&ba, &mut rng);
            prop_assert!(ab.contains_point(&q).unwrap().contains);
            let r = sample_point(&left, &mut rng);
            prop_assert!(right.contains_point(&r).unwrap().contains);
            let s = sample_point(&right, &mut rng);
            prop_assert!(left.contains_point(&s).unwrap().contains);
        }
    }
}

/// 100 seeded instances, counting one-sided disagreements with the oracle.
#[test]
fn predicates_never_violate_sampling_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut violations = 0;
    for _ in 0..100 {
        let rand_z = |rng: &mut ChaCha8Rng| {
            let l = rng.random_range(2..6);
            let c = DVector::from_iterator(2, (0..2).map(|_| rng.random_range(-3.0..3.0)));
            let g = DMatrix::from_fn(2, l, |_, _| rng.random_range(-2.0..2.0));
            Zonotope::new(c, g).unwrap()
        };
        let a = rand_z(&mut rng);
        let b = rand_z(&mut rng);
        for _ in 0..20 {
            let p = sample_point(&a, &mut rng);
            if !a.contains_point(&p).unwrap().contains {
                violations += 1;
            }
            if a.intersection_empty(&b).unwrap().0 && slab_contains(&b, &p) {
                violations += 1;
            }
        }
    }
    assert_eq!(violations, 0);
}
