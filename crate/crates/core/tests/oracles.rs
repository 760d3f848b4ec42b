use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scorekit::estimators::ScoreProblem;
use scorekit::kernels::{GramMode, MatrixKernelSpec, ScalarRadialKernel};
use scorekit::oracles::{
    make_grid_distribution, median_bandwidth, normalized_error, normalized_error_at, stein_refit_score,
    MixtureDistribution, OracleScore, ZeroScore,
};

/// All pairwise distances, sorted, middle element(s) averaged.
fn brute_force_median(x: &Array2<f64>) -> f64 {
    let mut dists = vec![];
    for i in 0..x.nrows() {
        for j in i + 1..x.nrows() {
            let mut s = 0.0;
            for k in 0..x.ncols() {
                let t = x[[i, k]] - x[[j, k]];
                s += t * t;
            }
            dists.push(s.sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    }
}

#[test]
fn median_bandwidth_matches_brute_force_at_scale() {
    let dist = MixtureDistribution::standard_normal(16).unwrap();
    let x = dist.sample(512, 4).unwrap();
    assert_eq!(median_bandwidth(&x).unwrap(), brute_force_median(x.as_array()));
}

#[test]
fn zero_estimator_on_standard_normal_is_near_one() {
    for d in [1, 4, 16] {
        let dist = MixtureDistribution::standard_normal(d).unwrap();
        let report = normalized_error(&ZeroScore(d), &dist, 1024, 3).unwrap();
        assert!((report.error - 1.0).abs() < 0.15, "d={d}: {}", report.error);
    }
}

#[test]
fn analytic_score_has_zero_error_for_any_seed() {
    let dist = make_grid_distribution(8, 2).unwrap();
    for seed in 0..5 {
        assert_eq!(normalized_error(&OracleScore(dist.clone()), &dist, 256, seed).unwrap().error, 0.0);
    }
}

#[test]
fn error_is_permutation_invariant() {
    let dist = make_grid_distribution(3, 0).unwrap();
    let train = dist.sample(30, 1).unwrap();
    let bw = median_bandwidth(&train).unwrap();
    let est = ScoreProblem::new(train, MatrixKernelSpec::curl_free(ScalarRadialKernel::imq(bw).unwrap()), GramMode::Dense)
        .unwrap()
        .tikhonov(0.01)
        .unwrap();
    let eval = dist.sample(64, 2).unwrap().into_array();
    let mut reversed = eval.clone();
    reversed.invert_axis(ndarray::Axis(0));
    let a = normalized_error_at(&est, &dist, eval.view()).unwrap();
    let b = normalized_error_at(&est, &dist, reversed.view()).unwrap();
    assert!((a - b).abs() <= 1e-14 * a, "{a} vs {b}");
}

#[test]
fn grid_vertices_are_distinct_binary_points() {
    for (d, seed) in [(4, 7), (6, 1), (10, 3)] {
        let dist = make_grid_distribution(d, seed).unwrap();
        let means = dist.means();
        assert_eq!(means.nrows(), d);
        assert!(means.iter().all(|&v| v == 0.0 || v == 1.0));
        for i in 0..d {
            for j in i + 1..d {
                assert_ne!(means.row(i), means.row(j));
            }
        }
        assert!(dist.weights().iter().all(|&w| (w - 1.0 / d as f64).abs() < 1e-15));
        assert_eq!(make_grid_distribution(d, seed).unwrap().means(), means);
    }
}

#[test]
fn score_matches_central_differences_of_log_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let d = rng.gen_range(1..6);
        let k = rng.gen_range(1..5);
        let means = Array2::from_shape_fn((k, d), |_| rng.gen_range(-3.0..3.0));
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        let dist = MixtureDistribution::new(means, Array1::from_iter(w.iter().map(|v| v / total)), rng.gen_range(0.5..2.0))
            .unwrap();
        let x = Array1::from_shape_fn(d, |_| rng.gen_range(-4.0..4.0));
        let s = dist.true_score(x.view());
        let h = 1e-5;
        for i in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (dist.log_density(xp.view()) - dist.log_density(xm.view())) / (2.0 * h);
            assert!((fd - s[i]).abs() <= 1e-6 * s[i].abs().max(1.0), "{fd} vs {}", s[i]);
        }
    }
}

#[test]
fn stein_refit_tracks_closed_form_extension_curl_free() {
    // appending one query to M samples perturbs the system by O(1/M)
    let dist = MixtureDistribution::standard_normal(2).unwrap();
    let train = dist.sample(200, 5).unwrap();
    let spec = MatrixKernelSpec::curl_free(ScalarRadialKernel::imq(median_bandwidth(&train).unwrap()).unwrap());
    let est = ScoreProblem::new(train.clone(), spec, GramMode::Dense).unwrap().truncated_tikhonov(0.05).unwrap();
    for q in [ndarray::array![0.3, -0.2], ndarray::array![-1.0, 0.5], ndarray::array![1.5, 1.0]] {
        let refit = stein_refit_score(&train, &spec, 0.05, q.view()).unwrap();
        let closed = est.predict_one(q.view()).unwrap();
        let gap = (&refit - &closed).mapv(|v| v * v).sum().sqrt();
        let scale = closed.mapv(|v| v * v).sum().sqrt();
        assert!(gap <= 0.05 * scale.max(0.1), "{q}: {refit} vs {closed}");
    }
}
