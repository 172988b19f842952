use explo2_core::{
    delta_magnitude, distance_matrix, explore_range, extend_weighting, fit, minimize, similarity,
    surrogate_gradient, weighting_scale_zero, Bounds, CandidateSimilarity, ExplorationField, KernelSystem,
    ScalarField, ShiftedSystem, Surrogate,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cloud(max_n: usize, max_d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_d).prop_flat_map(move |d| {
        prop::collection::vec(prop::collection::vec(-2.0..2.0f64, d), 2..=max_n)
    })
}

fn separated(points: &[Vec<f64>], min: f64) -> bool {
    points.iter().enumerate().all(|(i, a)| {
        points[..i]
            .iter()
            .all(|b| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() > min)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delta_magnitude_is_the_magnitude_increment(
        pts in cloud(12, 4),
        t in prop::sample::select(vec![0.1, 1.0, 10.0]),
        seed in 0u64..1000,
    ) {
        prop_assume!(separated(&pts, 1e-2));
        let dim = pts[0].len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Bounds::cube(dim, -2.0, 2.0).unwrap().sample_uniform(&mut rng);
        let mut all = pts.clone();
        all.push(x.clone());
        prop_assume!(separated(&all, 1e-2));

        let sys = similarity(&distance_matrix(&pts).unwrap(), t).unwrap();
        let c = CandidateSimilarity::from_point(&pts, &x, t).unwrap();
        let delta = delta_magnitude(&sys, &c).unwrap();
        prop_assert!(delta >= 0.0);
        let bigger = similarity(&distance_matrix(&all).unwrap(), t).unwrap();
        let diff = bigger.magnitude() - sys.magnitude();
        prop_assert!((delta - diff).abs() <= 1e-8 * (1.0 + sys.magnitude()));

        let ext = extend_weighting(&sys, &c).unwrap();
        let total: f64 = ext.iter().sum();
        prop_assert!((total - sys.magnitude() - delta).abs() <= 1e-10 * (1.0 + total.abs()));
    }

    #[test]
    fn interpolant_is_linear_in_values(
        pts in cloud(15, 5),
        ys in prop::collection::vec(-10.0..10.0f64, 15),
        exp in -4i32..4,
    ) {
        prop_assume!(separated(&pts, 1e-3));
        let n = pts.len();
        let ys = &ys[..n];
        let c = 2f64.powi(exp);
        let scaled: Vec<f64> = ys.iter().map(|y| c * y).collect();
        let sys = ShiftedSystem::new(&distance_matrix(&pts).unwrap(), 0.5).unwrap();
        let a = fit(&pts, ys, &sys).unwrap();
        let b = fit(&pts, &scaled, &sys).unwrap();
        for (u, v) in a.coeffs().iter().zip(b.coeffs()) {
            prop_assert_eq!(c * u, v);
        }
    }

    #[test]
    fn interpolant_reproduces_nodes(pts in cloud(30, 8), seed in 0u64..100) {
        prop_assume!(separated(&pts, 1e-3));
        let ys: Vec<f64> = pts.iter().enumerate().map(|(i, p)| p.iter().sum::<f64>() * (seed as f64 + 1.0) + i as f64).collect();
        let sys = ShiftedSystem::new(&distance_matrix(&pts).unwrap(), f64::EPSILON.sqrt()).unwrap();
        let interp = fit(&pts, &ys, &sys).unwrap();
        for (p, y) in pts.iter().zip(&ys) {
            prop_assert!((interp.eval(p).unwrap() - y).abs() <= 1e-6 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn inner_solver_stays_in_box_and_descends(
        center in prop::collection::vec(-3.0..3.0f64, 3),
        start in prop::collection::vec(-1.0..1.0f64, 3),
    ) {
        let bounds = Bounds::cube(3, -1.0, 1.0).unwrap();
        let c = center.clone();
        let field = (3, move |x: &[f64]| -> f64 {
            x.iter().zip(&c).map(|(a, b)| (a - b).powi(2) + (3.0 * a).sin()).sum()
        });
        let res = minimize(&field, &start, &bounds, 1e-6, 600);
        prop_assert!(bounds.contains(&res.x_min));
        if res.converged {
            prop_assert!(res.f_min <= field.value(&start));
        }
    }

    #[test]
    fn surrogate_gradient_matches_differences(seed in 0u64..1000, lambda in 0.0..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bounds = Bounds::cube(3, -5.0, 5.0).unwrap();
        let pts: Vec<Vec<f64>> = (0..20).map(|_| bounds.sample_uniform(&mut rng)).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.iter().map(|v| v * v - (3.0 * v).cos()).sum()).collect();
        let field = ExplorationField::new(pts.clone(), f64::EPSILON.sqrt()).unwrap();
        let interp = fit(&pts, &ys, field.system()).unwrap();
        let r_max = explore_range(&field, &bounds, 100, &mut rng);
        let s = Surrogate::new(&interp, &field, r_max, lambda);
        let x = bounds.sample_uniform(&mut rng);
        let g = surrogate_gradient(&s, &x).unwrap();
        let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..3 {
            let h = 1e-5 * (1.0 + x[i].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (s.eval(&xp).unwrap() - s.eval(&xm).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * scale.max(1e-12));
        }
    }

    #[test]
    fn scale_zero_limit(pts in cloud(10, 3)) {
        prop_assume!(separated(&pts, 5e-2));
        let d = distance_matrix(&pts).unwrap();
        let (w0, v0) = weighting_scale_zero(&d).unwrap();
        prop_assert_eq!(&w0, &v0);
        let sum: f64 = w0.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-10);
        let sys = ShiftedSystem::new(&d, 1e-6).unwrap();
        for (a, b) in sys.weighting().iter().zip(&w0) {
            prop_assert!((a - b).abs() < 1e-4);
        }
        prop_assert!(KernelSystem::len(&sys) == pts.len());
    }
}
