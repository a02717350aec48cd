use edlab_core::kernel::{
    build_exact_kernel, build_gaussian_kernel, kernel_moments, max_entry_difference, max_row_total_variation,
    solve_alpha, squared_step_lengths,
};
use edlab_core::{FieldRole, PhysicalConstants, ScalarField, SpatialGrid};

fn natural() -> PhysicalConstants {
    PhysicalConstants::natural()
}

fn entropy(g: SpatialGrid, f: impl Fn(f64) -> f64) -> ScalarField {
    ScalarField::from_fn(g, FieldRole::Entropy, f).unwrap()
}

#[test]
fn constant_entropy_gives_symmetric_rows() {
    let g = SpatialGrid::periodic(0.0, 2.0, 200).unwrap();
    let k = build_exact_kernel(&entropy(g, |_| 3.0), 400.0, &natural()).unwrap();
    let n = g.len();
    for i in [0, 17, 100, 199] {
        for d in 1..30 {
            let a = k.entry(i, (i + d) % n);
            let b = k.entry(i, (i + n - d) % n);
            assert!((a - b).abs() < 1e-15);
        }
        // Translation equivariance: every row is a shift of row 0.
        for j in 0..n {
            assert!((k.entry(i, j) - k.entry(0, (j + n - i) % n)).abs() < 1e-15);
        }
    }
}

#[test]
fn linear_entropy_shifts_mean() {
    let g = SpatialGrid::reflecting(-5.0, 5.0, 1001).unwrap();
    let kslope = 2.5;
    let alpha = 100.0;
    let k = build_exact_kernel(&entropy(g, |x| kslope * x), alpha, &natural()).unwrap();
    let m = kernel_moments(&k, 500).unwrap();
    assert!((m.mean_step - kslope / alpha).abs() < 1e-8, "{}", m.mean_step);
    assert!((m.covariance - 1.0 / alpha).abs() < 1e-2 / alpha);
}

#[test]
fn rows_are_stochastic_for_any_entropy() {
    let g = SpatialGrid::periodic(-1.0, 1.0, 128).unwrap();
    let s = entropy(g, |x| 5.0 * (3.0 * x).sin() + 40.0 * x * x);
    for alpha in [1.0, 50.0, 5e4] {
        for k in [build_exact_kernel(&s, alpha, &natural()).unwrap(), build_gaussian_kernel(&s, alpha, &natural()).unwrap()] {
            assert!(k.row_sum_error() < 1e-12);
            assert!(k.matrix().iter().all(|&p| p >= 0.0));
        }
    }
}

#[test]
fn gaussian_matches_exact_for_constant_and_linear_entropy() {
    let p = SpatialGrid::periodic(0.0, 1.0, 200).unwrap();
    let s = entropy(p, |_| -2.0);
    let d = max_entry_difference(
        &build_exact_kernel(&s, 300.0, &natural()).unwrap(),
        &build_gaussian_kernel(&s, 300.0, &natural()).unwrap(),
    )
    .unwrap();
    assert!(d < 1e-10, "{d}");

    let r = SpatialGrid::reflecting(-3.0, 3.0, 301).unwrap();
    let s = entropy(r, |x| 1.7 * x);
    let d = max_entry_difference(
        &build_exact_kernel(&s, 300.0, &natural()).unwrap(),
        &build_gaussian_kernel(&s, 300.0, &natural()).unwrap(),
    )
    .unwrap();
    assert!(d < 1e-10, "{d}");
}

#[test]
fn gaussian_approximation_improves_with_alpha() {
    let g = SpatialGrid::reflecting(-3.0, 3.0, 601).unwrap();
    let s = entropy(g, |x| -x * x);
    let tv = |alpha: f64| {
        max_row_total_variation(
            &build_exact_kernel(&s, alpha, &natural()).unwrap(),
            &build_gaussian_kernel(&s, alpha, &natural()).unwrap(),
        )
        .unwrap()
    };
    let (coarse, fine) = (tv(10.0), tv(100.0));
    assert!(fine < coarse, "TV at alpha=100 {fine} not below alpha=10 {coarse}");
}

#[test]
fn solve_alpha_constant_entropy() {
    let g = SpatialGrid::periodic(0.0, 4.0, 400).unwrap();
    let s = entropy(g, |_| 0.0);
    let fit = solve_alpha(&s, 0.01, &natural()).unwrap();
    assert!((fit.alpha / 100.0 - 1.0).abs() < 1e-3, "{}", fit.alpha);
    assert!(fit.pointwise_spread < 1e-8);
    let half = solve_alpha(&s, 0.005, &natural()).unwrap();
    assert!((half.alpha / fit.alpha - 2.0).abs() < 2e-3);
}

#[test]
fn solve_alpha_linear_entropy_matches_brute_force() {
    let g = SpatialGrid::reflecting(-4.0, 4.0, 801).unwrap();
    let kslope = 1.0;
    let s = entropy(g, |x| kslope * x);
    let kappa = 0.01;
    let fit = solve_alpha(&s, kappa, &natural()).unwrap();
    // Closed form away from the walls: kappa = 1/alpha + (k/alpha)^2.
    let closed = (1.0 + (1.0 + 4.0 * kappa * kslope * kslope).sqrt()) / (2.0 * kappa);
    assert!((fit.alpha / closed - 1.0).abs() < 0.05, "{} vs {closed}", fit.alpha);

    let k = build_exact_kernel(&s, fit.alpha, &natural()).unwrap();
    let per_row = squared_step_lengths(&k);
    let avg: f64 = per_row.iter().zip(g.weights()).map(|(l, w)| l * w).sum::<f64>() / g.extent();
    let coords = g.coords();
    let brute: f64 = (0..g.len())
        .map(|i| g.weight(i) * (0..g.len()).map(|j| k.entry(i, j) * (coords[j] - coords[i]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / g.extent();
    assert!((avg / kappa - 1.0).abs() < 1e-8);
    assert!((brute / kappa - 1.0).abs() < 1e-8);
}

#[test]
fn moments_of_symmetric_row_and_scaling() {
    let g = SpatialGrid::periodic(0.0, 2.0, 800).unwrap();
    let s = entropy(g, |_| 0.0);
    let m = kernel_moments(&build_exact_kernel(&s, 200.0, &natural()).unwrap(), 123).unwrap();
    assert!(m.mean_step.abs() < 1e-10);
    assert!((m.covariance * 200.0 - 1.0).abs() < 0.01);
    let m4 = kernel_moments(&build_exact_kernel(&s, 800.0, &natural()).unwrap(), 123).unwrap();
    assert!((m.covariance / m4.covariance - 4.0).abs() < 0.04);
}

#[test]
fn drift_and_fluctuation_scaling() {
    let g = SpatialGrid::reflecting(-2.0, 2.0, 4001).unwrap();
    let s = entropy(g, |x| 0.8 * x);
    let alphas = [10.0, 100.0, 1e3, 1e4];
    let mut pts = Vec::new();
    for &a in &alphas {
        let m = kernel_moments(&build_gaussian_kernel(&s, a, &natural()).unwrap(), 2000).unwrap();
        pts.push((a.ln(), m.mean_step.ln(), 0.5 * m.covariance.ln()));
    }
    let slope = |f: fn(&(f64, f64, f64)) -> f64| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(f).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (f(p) - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    };
    let drift = slope(|p| p.1);
    let spread = slope(|p| p.2);
    assert!((drift + 1.0).abs() < 0.02, "{drift}");
    assert!((spread + 0.5).abs() < 0.01, "{spread}");
}
