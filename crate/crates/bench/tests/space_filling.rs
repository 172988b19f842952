use explo2_bench::baselines::random_search;
use explo2_core::{run, Bounds, Explo2Config, LambdaSchedule, RunTrace};

fn min_pairwise(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            best = best.min(d);
        }
    }
    best
}

fn points(trace: &RunTrace) -> Vec<Vec<f64>> {
    trace.records.iter().map(|r| r.point.clone()).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

#[test]
fn pure_exploration_spreads_points_wider_than_random_search() {
    // constant objective: the surrogate reduces to -R/R∨
    let flat = |_: &[f64]| 1.0;
    let budget = 40;
    for dim in [2, 3] {
        let bounds = Bounds::cube(dim, -1.0, 1.0).unwrap();
        let mut explore = Vec::new();
        let mut random = Vec::new();
        for seed in 0..10 {
            let mut config = Explo2Config::new(budget);
            config.seed = seed;
            config.lambda = LambdaSchedule::Custom(vec![1.0; budget]);
            let (cloud, _) = run(&flat, &bounds, &config).unwrap();
            explore.push(min_pairwise(&cloud.xs));
            random.push(min_pairwise(&points(&random_search(&flat, &bounds, budget, seed))));
        }
        let (e, r) = (median(explore), median(random));
        assert!(e > r, "D = {dim}: pure exploration {e} vs random {r}");
    }
}
