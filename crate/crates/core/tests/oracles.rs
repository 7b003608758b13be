//! Closed-form oracles for transforms, envelopes, energies, rays and filtrations.

use hrma_core::checks::{huber_head, segment_data, softplus_instance};
use hrma_core::filtration::{phong_sturm_ray, weight_histogram};
use hrma_core::geodesic::{default_t_grid, ray_dual, ray_from_curve};
use hrma_core::legendre::{legendre, subgradient_range};
use hrma_core::monge_ampere::{energy_dual, energy_quadrature, ma_measure, EnergyFrame};
use hrma_core::test_curve::maximal_envelope;
use hrma_core::{ConcaveTransform, ConvexGridFunction, DualGrid, Grid, GridFunction, TestCurve};

fn convex(g: &Grid, f: impl Fn(&[f64]) -> f64) -> ConvexGridFunction {
    ConvexGridFunction::certify(GridFunction::from_fn(g.clone(), f).unwrap()).unwrap()
}

fn max_err(f: &GridFunction, exact: impl Fn(&[f64]) -> f64) -> f64 {
    let g = f.grid();
    (0..g.len()).map(|i| (f.value(i) - exact(&g.point(i)[..g.dim()])).abs()).fold(0.0, f64::max)
}

#[test]
fn quadratic_conjugate_is_exact_on_aligned_grids() {
    let g = Grid::interval(-1.0, 1.0, 129).unwrap();
    let f = convex(&g, |x| x[0] * x[0] / 2.0);
    let c = legendre(&f, &DualGrid::new(g.clone())).unwrap();
    assert!(max_err(&c, |y| y[0] * y[0] / 2.0) < 1e-15);

    let g2 = Grid::rect((-1.0, 1.0), (-1.0, 1.0), (33, 33)).unwrap();
    let f2 = convex(&g2, |x| (x[0] * x[0] + x[1] * x[1]) / 2.0);
    let c2 = legendre(&f2, &DualGrid::new(g2.clone())).unwrap();
    assert!(max_err(&c2, |y| (y[0] * y[0] + y[1] * y[1]) / 2.0) < 1e-15);
}

#[test]
fn abs_conjugate_is_the_shifted_hinge() {
    // sup_{|x| <= 1} xy - |x| = max(0, |y| - 1).
    let g = Grid::interval(-1.0, 1.0, 65).unwrap();
    let f = convex(&g, |x| x[0].abs());
    let c = legendre(&f, &DualGrid::new(Grid::interval(-2.0, 2.0, 129).unwrap())).unwrap();
    assert!(max_err(&c, |y| (y[0].abs() - 1.0).max(0.0)) < 1e-15);
}

#[test]
fn softplus_conjugate_is_the_binary_entropy() {
    let inst = softplus_instance().unwrap();
    let h = inst.phi().grid().max_spacing();
    let sigma = |x: f64| 1.0 / (1.0 + (-x).exp());
    for j in 1..64 {
        let y = j as f64 / 64.0;
        if y <= sigma(-4.0) || y >= sigma(4.0) {
            continue;
        }
        let entropy = y * y.ln() + (1.0 - y) * (1.0 - y).ln();
        // Sampling the sup on a grid of spacing h loses at most h^2 max(phi'') / 8.
        let err = (inst.conjugate_at([y, 0.0]) - entropy).abs();
        assert!(err <= h * h / 32.0 + 1e-14, "y = {y}: {err}");
    }
}

#[test]
fn huber_is_the_maximal_envelope_of_quadratic() {
    // Slopes capped at a: x^2/2 for |x| <= a, a|x| - a^2/2 beyond.
    let g = Grid::interval(-1.0, 1.0, 129).unwrap();
    let phi = convex(&g, |x| x[0] * x[0] / 2.0);
    let dual = DualGrid::new(g.clone());
    let base = subgradient_range(&phi, &dual).unwrap();
    let u = ConcaveTransform::on_region(&base, |y| -y[0].abs()).unwrap();
    let lambdas: Vec<f64> = (-8..=0).map(|j| j as f64 / 8.0).collect();
    let tc = TestCurve::from_concave_transform(&phi, &u, lambdas.clone(), &dual).unwrap();
    let env = maximal_envelope(&phi, &tc, &dual).unwrap();
    // Slopes +-1 are attained only at boundary nodes, so the discrete slope set stops at 1 - h.
    let top = 1.0 - g.max_spacing();
    for (j, l) in lambdas.iter().enumerate() {
        let a = (-l).min(top);
        let exact = |x: &[f64]| if x[0].abs() <= a { x[0] * x[0] / 2.0 } else { a * x[0].abs() - a * a / 2.0 };
        assert!(max_err(env.sample(j), exact) < 1e-12, "lambda {l}");
    }
}

#[test]
fn quadratic_pair_energy_is_one_ninth() {
    // E(3x^2/4, x^2/2) = int_{-1}^{1} (y^2/2 - y^2/3) dy = 1/9.
    let g = Grid::interval(-1.0, 1.0, 257).unwrap();
    let f0 = convex(&g, |x| x[0] * x[0] / 2.0);
    let f1 = convex(&g, |x| 0.75 * x[0] * x[0]);
    let dual = DualGrid::covering(&f1, &[257]).unwrap();
    let frame = EnergyFrame::of(&f0, &dual).unwrap();
    let d = energy_dual(&f1, &f0, &frame).unwrap().value;
    let q = energy_quadrature(&f1, &f0, &frame, 11).unwrap().value;
    // The discrete region loses at most one dual cell at each end, where the integrand is 1/6.
    let tol = 2.0 * dual.grid().max_spacing() / 6.0;
    assert!((d - 1.0 / 9.0).abs() < tol, "{d}");
    assert!((q - 1.0 / 9.0).abs() < tol, "{q}");
}

#[test]
fn huber_dual_ray_matches_the_shifted_head() {
    // (phi* + t|y|)* with phi* = y^2/2 on [-1, 1] is H(max(|x| - t, 0)).
    let g = Grid::interval(-2.0, 2.0, 257).unwrap();
    let phi = convex(&g, |x| huber_head(x[0]));
    let dual = DualGrid::covering(&phi, &[257]).unwrap();
    let base = subgradient_range(&phi, &dual).unwrap();
    let u = ConcaveTransform::on_region(&base, |y| -y[0].abs()).unwrap();
    let ts = default_t_grid();
    let ray = ray_dual(&phi, &u, &dual, &ts).unwrap();
    let spacing = g.max_spacing() + dual.grid().max_spacing();
    for (t, f) in ts.iter().zip(ray.frames()) {
        let err = max_err(f, |x| huber_head((x[0].abs() - t).max(0.0)));
        assert!(err <= 4.0 * spacing * (1.0 + t), "t = {t}: {err}");
    }
}

#[test]
fn trivial_curve_ray_translates_exactly() {
    let g = Grid::interval(-1.0, 1.0, 65).unwrap();
    let phi = convex(&g, |x| x[0] * x[0] / 2.0);
    let lambdas: Vec<f64> = (-4..=4).map(|j| j as f64 / 4.0).collect();
    let tc = TestCurve::constant_then_cutoff(&phi, lambdas, 0.5).unwrap();
    let ray = ray_from_curve(&tc, &default_t_grid()).unwrap();
    for (t, f) in ray.t_grid().iter().zip(ray.frames()) {
        assert!(f.sup_distance(&phi.shift(0.5 * t).unwrap()).unwrap() < 1e-15);
    }
}

#[test]
fn quadratic_mass_counts_interior_dual_nodes() {
    // Slopes of x^2/2 at the 255 interior nodes hit 255 distinct dual nodes.
    let g = Grid::interval(-1.0, 1.0, 257).unwrap();
    let phi = convex(&g, |x| x[0] * x[0] / 2.0);
    let dual = DualGrid::new(g.clone());
    let mu = ma_measure(&phi, &dual).unwrap();
    assert!((mu.total() - 255.0 * dual.grid().cell_volume()).abs() < 1e-12);
}

#[test]
fn segment_filtration_closure_and_histogram() {
    let mut data = segment_data(0, 1).unwrap();
    for k in [1, 4, 9] {
        let c = data.multiplicative_closure(k).unwrap().clone();
        let expected: Vec<[i64; 2]> = (0..=k as i64).map(|j| [j, 0]).collect();
        assert_eq!(c.points, expected);
        assert_eq!(c.weights, (0..=k as i64).collect::<Vec<_>>());
        let h = weight_histogram(&mut data, k).unwrap();
        for row in &h.rows {
            assert_eq!(row.dim_f as i64, k as i64 + 1 - row.lambda);
        }
    }
}

#[test]
fn equal_weights_give_a_translated_phong_sturm_ray() {
    let inst = softplus_instance().unwrap();
    let mut data = segment_data(2, 2).unwrap();
    let s = inst.sections(data.multiplicative_closure(8).unwrap()).unwrap();
    let ray = phong_sturm_ray(&inst, &s, &default_t_grid()).unwrap();
    for (t, f) in ray.t_grid().iter().zip(ray.frames()) {
        assert!(f.sup_distance(&ray.frame(0).shift(2.0 * t).unwrap()).unwrap() < 1e-12);
    }
}
