//! Rays of convex functions generated by test curves.
//!
//! The ray of a curve `psi_l` is its Legendre transform in the curve parameter,
//! `phi_t = max_l (psi_l + t l)`. The dual construction transports the whole
//! family through the conjugate: `phi_t = (phi* - t u)*` on the finite set of
//! `u`. On a finite grid the upper-semicontinuous regularisation of the
//! supremum does nothing, so frames are plain node-wise maxima.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::grid::{lower_convex_envelope, ConvexGridFunction, GridFunction, NEG_INF};
use crate::legendre::{legendre, restricted_conjugate, subgradient_range, DualGrid};
use crate::monge_ampere::{energy_dual, ma_measure, EnergyFrame};
use crate::test_curve::{ConcaveTransform, TestCurve};

/// `0, 0.1, ..., 1.0`.
pub fn default_t_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// What a ray was built from.
#[derive(Debug, Clone, PartialEq)]
pub enum RaySource {
    Curve(TestCurve),
    Dual { phi: ConvexGridFunction, u: ConcaveTransform },
    PhongSturm { k: usize, sections: usize },
}

impl RaySource {
    pub fn describe(&self) -> String {
        match self {
            RaySource::Curve(tc) => format!(
                "test curve: {} samples, lambda_head = {}, lambda_c = {}",
                tc.lambdas().len(),
                tc.lambda_head(),
                tc.lambda_c()
            ),
            RaySource::Dual { u, .. } => format!("dual construction: u finite on {} dual nodes", u.base().count()),
            RaySource::PhongSturm { k, sections } => format!("Phong-Sturm ray: k = {k}, {sections} sections"),
        }
    }
}

/// A family of frames sampled on a t grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Ray {
    t_grid: Vec<f64>,
    frames: Vec<ConvexGridFunction>,
    energies: Option<Vec<f64>>,
    source: RaySource,
}

fn check_t_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.first() != Some(&0.0) {
        return domain("t grid must start at 0");
    }
    if t_grid.windows(2).any(|w| !(w[0] < w[1])) || t_grid.iter().any(|t| !t.is_finite()) {
        return domain("t grid must be finite and strictly increasing");
    }
    Ok(())
}

impl Ray {
    pub fn new(t_grid: Vec<f64>, frames: Vec<ConvexGridFunction>, source: RaySource) -> Result<Self> {
        check_t_grid(&t_grid)?;
        if frames.len() != t_grid.len() {
            return domain("need one frame per t sample");
        }
        if frames.iter().any(|f| f.grid() != frames[0].grid()) {
            return domain("ray frames live on different grids");
        }
        Ok(Self { t_grid, frames, energies: None, source })
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn frames(&self) -> &[ConvexGridFunction] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &ConvexGridFunction {
        &self.frames[i]
    }

    pub fn source(&self) -> &RaySource {
        &self.source
    }

    /// `E(frame(t), frame(0))` per t, once [`compute_energies`](Self::compute_energies) has run.
    pub fn energies(&self) -> Option<&[f64]> {
        self.energies.as_deref()
    }

    pub fn compute_energies(&mut self, dual: &DualGrid) -> Result<&[f64]> {
        let frame = EnergyFrame::of(&self.frames[0], dual)?;
        let e = energies_against(self, &self.frames[0], &frame)?;
        Ok(self.energies.insert(e))
    }

    /// Rows `t,x[,y],value`; `-inf` is written as such.
    pub fn to_csv(&self) -> String {
        let g = self.frames[0].grid();
        let mut out = String::from(if g.dim() == 1 { "t,x,value\n" } else { "t,x,y,value\n" });
        for (t, f) in self.t_grid.iter().zip(&self.frames) {
            for i in 0..g.len() {
                let p = g.point(i);
                let v = crate::grid::format_value(f.value(i));
                if g.dim() == 1 {
                    let _ = writeln!(out, "{t:?},{:?},{v}", p[0]);
                } else {
                    let _ = writeln!(out, "{t:?},{:?},{:?},{v}", p[0], p[1]);
                }
            }
        }
        out
    }
}

fn energies_against(ray: &Ray, f0: &GridFunction, frame: &EnergyFrame) -> Result<Vec<f64>> {
    ray.frames.par_iter().map(|f| Ok(energy_dual(f, f0, frame)?.value)).collect()
}

/// `frame(t) = max_l (psi_l + t l)` node-wise over finite samples; `frame(0)` is the head.
pub fn ray_from_curve(tc: &TestCurve, t_grid: &[f64]) -> Result<Ray> {
    tc.ensure_valid()?;
    check_t_grid(t_grid)?;
    let finite: Vec<usize> = tc.finite_indices().collect();
    let n = tc.grid().len();
    let frames = t_grid
        .par_iter()
        .map(|&t| {
            if t == 0.0 {
                return tc.head().clone();
            }
            let mut vals = vec![NEG_INF; n];
            for &j in &finite {
                let l = t * tc.lambdas()[j];
                for (v, s) in vals.iter_mut().zip(tc.sample(j).values()) {
                    *v = v.max(s + l);
                }
            }
            ConvexGridFunction::trusted(GridFunction::from_raw(tc.grid().clone(), vals))
        })
        .collect();
    Ray::new(t_grid.to_vec(), frames, RaySource::Curve(tc.clone()))
}

/// `frame(t) = (phi* - t u)*`, the outer transform taken over the finite set of `u`.
pub fn ray_dual(phi: &ConvexGridFunction, u: &ConcaveTransform, dual: &DualGrid, t_grid: &[f64]) -> Result<Ray> {
    check_t_grid(t_grid)?;
    dual.check_covers(phi)?;
    if u.u().grid() != dual.grid() {
        return domain("u does not live on the dual grid");
    }
    if u.base().is_empty() {
        return domain("u is -inf everywhere");
    }
    if !u.base().is_subset_of(&subgradient_range(phi, dual)?) {
        return domain("u must be finite only inside the subgradient range of phi");
    }
    let star = legendre(phi, dual)?;
    let frames = t_grid
        .par_iter()
        .map(|&t| {
            let g: Vec<f64> = star
                .values()
                .iter()
                .zip(u.u().values())
                .map(|(&s, &uv)| if uv.is_finite() { s - t * uv } else { s })
                .collect();
            restricted_conjugate(&GridFunction::from_raw(dual.grid().clone(), g), u.base(), phi.grid())
        })
        .collect::<Result<_>>()?;
    Ray::new(t_grid.to_vec(), frames, RaySource::Dual { phi: phi.clone(), u: u.clone() })
}

/// Per-t sup-norm distance over nodes where both frames are finite.
pub fn compare_rays(r1: &Ray, r2: &Ray) -> Result<Vec<f64>> {
    if r1.t_grid != r2.t_grid {
        return domain("rays are sampled on different t grids");
    }
    r1.frames.iter().zip(&r2.frames).map(|(a, b)| a.sup_distance(b)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearityReport {
    pub slope: f64,
    pub intercept: f64,
    pub max_abs_residual: f64,
    /// `-sum_j l_j (F_{j+1} - F_j)` with `F(l)` the total Monge-Ampere mass of
    /// the curve sample at `l`; NaN when the ray has no generating curve.
    pub predicted_slope: f64,
}

impl LinearityReport {
    /// `|slope - predicted| / |predicted|`.
    pub fn slope_mismatch(&self) -> f64 {
        (self.slope - self.predicted_slope).abs() / self.predicted_slope.abs()
    }
}

/// Least-squares line `(intercept, slope)` through the points.
pub fn fit_line(ts: &[f64], es: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let em = es.iter().sum::<f64>() / n;
    let sxx: f64 = ts.iter().map(|t| (t - tm) * (t - tm)).sum();
    let sxy: f64 = ts.iter().zip(es).map(|(t, e)| (t - tm) * (e - em)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (em - slope * tm, slope)
}

/// The curve whose masses give the predicted slope.
fn generating_curve(ray: &Ray, dual: &DualGrid) -> Result<Option<TestCurve>> {
    match &ray.source {
        RaySource::Curve(tc) => Ok(Some(tc.clone())),
        RaySource::Dual { phi, u } => {
            Ok(Some(TestCurve::from_concave_transform(phi, u, u.distinct_values(), dual)?))
        }
        RaySource::PhongSturm { .. } => Ok(None),
    }
}

/// `sum_j l_j (F_j - F_{j+1})` with `F_j` the total mass of sample `j` and
/// `F = 0` past the last finite sample.
pub fn predicted_slope(tc: &TestCurve, dual: &DualGrid) -> Result<f64> {
    let masses: Vec<f64> = tc
        .samples()
        .par_iter()
        .map(|s| if s.is_identically_neg_inf() { Ok(0.0) } else { Ok(ma_measure(s, dual)?.total()) })
        .collect::<Result<_>>()?;
    let mut sum = 0.0;
    for j in 0..masses.len() {
        let next = masses.get(j + 1).copied().unwrap_or(0.0);
        sum += tc.lambdas()[j] * (masses[j] - next);
    }
    Ok(sum)
}

/// Fits `t -> E(frame(t), f0)` (dual formula, frame region `Delta_{f0}`) by a line.
pub fn energy_linearity(ray: &Ray, f0: &GridFunction, dual: &DualGrid) -> Result<LinearityReport> {
    let frame = EnergyFrame::of(f0, dual)?;
    let es = energies_against(ray, f0, &frame)?;
    let (intercept, slope) = fit_line(&ray.t_grid, &es);
    let max_abs_residual = ray
        .t_grid
        .iter()
        .zip(&es)
        .map(|(t, e)| (e - (intercept + slope * t)).abs())
        .fold(0.0, f64::max);
    let predicted_slope = match generating_curve(ray, dual)? {
        Some(tc) => predicted_slope(&tc, dual)?,
        None => f64::NAN,
    };
    Ok(LinearityReport { slope, intercept, max_abs_residual, predicted_slope })
}

/// `psi_l = min_t (frame(t) - t l)`, convexified. A sample is `-inf` when at
/// some node the minimum sits at the last t while still falling faster than
/// the primal spacing per unit t.
pub fn inverse_transform(ray: &Ray, lambdas: &[f64]) -> Result<TestCurve> {
    let g = ray.frames[0].grid();
    let h = g.max_spacing();
    let ts = &ray.t_grid;
    let last = ts.len() - 1;
    let samples = lambdas
        .par_iter()
        .map(|&l| {
            let mut vals = vec![f64::INFINITY; g.len()];
            for (t, f) in ts.iter().zip(&ray.frames) {
                for (v, fv) in vals.iter_mut().zip(f.values()) {
                    *v = v.min(fv - t * l);
                }
            }
            if last > 0 {
                let dt = ts[last] - ts[last - 1];
                let degenerate = (0..g.len()).any(|i| {
                    let end = ray.frames[last].value(i) - ts[last] * l;
                    let prev = ray.frames[last - 1].value(i) - ts[last - 1] * l;
                    end <= vals[i] && (end - prev) / dt < -h
                });
                if degenerate {
                    return Ok(ConvexGridFunction::trusted(GridFunction::neg_inf(g.clone())));
                }
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Ok(ConvexGridFunction::trusted(GridFunction::neg_inf(g.clone())));
            }
            lower_convex_envelope(&GridFunction::from_raw(g.clone(), vals))
        })
        .collect::<Result<Vec<_>>>()?;
    TestCurve::new(lambdas.to_vec(), samples)
}

/// Largest violation of node-wise convexity in t over consecutive triples.
pub fn convexity_in_t_defect(ray: &Ray) -> f64 {
    let ts = &ray.t_grid;
    let mut worst = 0.0f64;
    for j in 1..ts.len().saturating_sub(1) {
        let (a, b) = ((ts[j + 1] - ts[j]) / (ts[j + 1] - ts[j - 1]), (ts[j] - ts[j - 1]) / (ts[j + 1] - ts[j - 1]));
        let (f0, f1, f2) = (&ray.frames[j - 1], &ray.frames[j], &ray.frames[j + 1]);
        for i in 0..f1.grid().len() {
            let d = f1.value(i) - (a * f0.value(i) + b * f2.value(i));
            if d.is_finite() {
                worst = worst.max(d);
            }
        }
    }
    worst
}

/// `max_j ||frame(t_{j+1}) - frame(t_j)|| / (t_{j+1} - t_j)`.
pub fn lipschitz_constant(ray: &Ray) -> Result<f64> {
    let mut worst = 0.0f64;
    for j in 0..ray.t_grid.len().saturating_sub(1) {
        let d = ray.frames[j + 1].sup_distance(&ray.frames[j])?;
        worst = worst.max(d / (ray.t_grid[j + 1] - ray.t_grid[j]));
    }
    Ok(worst)
}

/// Gap between `frame(t1 + t2)` and the dual ray restarted from `frame(t1)`
/// and run for `t2`.
pub fn semigroup_gap(phi: &ConvexGridFunction, u: &ConcaveTransform, dual: &DualGrid, t1: f64, t2: f64) -> Result<f64> {
    let direct = ray_dual(phi, u, dual, &[0.0, t1, t1 + t2])?;
    let mid = direct.frame(1).clone();
    let within = subgradient_range(&mid, dual)?.intersect(u.base())?;
    let restricted = ConcaveTransform::new(
        GridFunction::from_raw(
            dual.grid().clone(),
            (0..dual.grid().len()).map(|k| if within.contains(k) { u.u().value(k) } else { NEG_INF }).collect(),
        ),
        within,
        u.tolerance(),
    )?;
    let restart = ray_dual(&mid, &restricted, dual, &[0.0, t2])?;
    restart.frame(1).sup_distance(direct.frame(2))
}

/// One λ step of the ray energy with its Monge-Ampere bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepEnergy {
    pub lambda: f64,
    pub lower: f64,
    pub step: f64,
    pub upper: f64,
}

/// For consecutive finite samples `j, j+1`: the energy gained at time `t` when
/// the ray of the curve truncated after `j` is extended by sample `j+1`,
/// against `t (l_{j+1} - l_j)` times the total masses of samples `j+1` and `j`.
pub fn step_energies(tc: &TestCurve, dual: &DualGrid, t: f64) -> Result<Vec<StepEnergy>> {
    tc.ensure_valid()?;
    let frame = EnergyFrame::of(tc.head(), dual)?;
    let finite: Vec<usize> = tc.finite_indices().collect();
    let n = tc.grid().len();
    let mut partial = vec![NEG_INF; n];
    let mut truncated = Vec::with_capacity(finite.len());
    for &j in &finite {
        for (v, s) in partial.iter_mut().zip(tc.sample(j).values()) {
            *v = v.max(s + t * tc.lambdas()[j]);
        }
        truncated.push(GridFunction::from_raw(tc.grid().clone(), partial.clone()));
    }
    let masses: Vec<f64> = finite
        .par_iter()
        .map(|&j| Ok(ma_measure(tc.sample(j), dual)?.total()))
        .collect::<Result<_>>()?;
    (0..finite.len().saturating_sub(1))
        .into_par_iter()
        .map(|m| {
            let dl = tc.lambdas()[finite[m + 1]] - tc.lambdas()[finite[m]];
            let step = energy_dual(&truncated[m + 1], &truncated[m], &frame)?.value;
            Ok(StepEnergy {
                lambda: tc.lambdas()[finite[m + 1]],
                lower: t * dl * masses[m + 1],
                step,
                upper: t * dl * masses[m],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::test_curve::maximal_envelope;

    fn quadratic(n: usize) -> (ConvexGridFunction, DualGrid) {
        let g = Grid::interval(-1.0, 1.0, n).unwrap();
        let phi = ConvexGridFunction::certify(GridFunction::from_fn(g.clone(), |x| x[0] * x[0] / 2.0).unwrap()).unwrap();
        (phi, DualGrid::new(g))
    }

    #[test]
    fn trivial_curve_translates() {
        let (phi, _) = quadratic(65);
        let lambdas: Vec<f64> = (-4..=4).map(|i| i as f64 / 4.0).collect();
        let tc = TestCurve::constant_then_cutoff(&phi, lambdas, 0.5).unwrap();
        let ray = ray_from_curve(&tc, &default_t_grid()).unwrap();
        assert_eq!(ray.frame(0).values(), phi.values());
        for (t, f) in ray.t_grid().iter().zip(ray.frames()) {
            assert_eq!(f.values(), phi.shift(t * 0.5).unwrap().values());
        }
        assert!(convexity_in_t_defect(&ray) < 1e-12);
        assert!((lipschitz_constant(&ray).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_u_shifts() {
        let (phi, dual) = quadratic(65);
        let base = subgradient_range(&phi, &dual).unwrap();
        let u = ConcaveTransform::on_region(&base, |_| 1.0).unwrap();
        let ray = ray_dual(&phi, &u, &dual, &default_t_grid()).unwrap();
        for (t, f) in ray.t_grid().iter().zip(ray.frames()) {
            assert!(f.sup_distance(&ray.frame(0).shift(*t).unwrap()).unwrap() < 1e-12);
        }
        let report = energy_linearity(&ray, ray.frame(0), &dual).unwrap();
        let vol = base.volume();
        assert!((report.slope - vol).abs() < 1e-9 * vol);
        assert!((report.predicted_slope - vol).abs() <= dual.grid().cell_volume());
        assert!(report.max_abs_residual < 1e-9);
    }

    #[test]
    fn quadratic_u_closed_form() {
        let (phi, dual) = quadratic(129);
        let base = subgradient_range(&phi, &dual).unwrap();
        let u = ConcaveTransform::on_region(&base, |y| 1.0 - y[0] * y[0] / 2.0).unwrap();
        let ray = ray_dual(&phi, &u, &dual, &default_t_grid()).unwrap();
        let g = phi.grid();
        let h = dual.grid().max_spacing();
        for (t, f) in ray.t_grid().iter().zip(ray.frames()) {
            for i in 0..g.len() {
                let x = g.point(i)[0];
                // The maximiser y = x / (1 + t) must be inside the base region.
                if (x / (1.0 + t)).abs() > 1.0 - h {
                    continue;
                }
                let exact = x * x / (2.0 * (1.0 + t)) + t;
                // Off-grid maximiser: error at most (1 + t) h^2 / 8.
                assert!((f.value(i) - exact).abs() <= (1.0 + t) * h * h / 8.0 + 1e-12, "t = {t}, x = {x}");
            }
        }
    }

    #[test]
    fn dual_and_hat_rays_agree_on_huber() {
        let (phi, dual) = quadratic(129);
        let base = subgradient_range(&phi, &dual).unwrap();
        let u = ConcaveTransform::on_region(&base, |y| -y[0].abs()).unwrap();
        let lambdas: Vec<f64> = (-32..=4).map(|i| i as f64 / 32.0).collect();
        let tc = TestCurve::from_concave_transform(&phi, &u, lambdas, &dual).unwrap();
        let hat = ray_from_curve(&tc, &default_t_grid()).unwrap();
        let tilde = ray_dual(&phi, &u, &dual, &default_t_grid()).unwrap();
        let gaps = compare_rays(&hat, &tilde).unwrap();
        let spacing = 2.0 / 128.0 + 2.0 / 128.0 + 1.0 / 32.0;
        for (t, gap) in hat.t_grid().iter().zip(&gaps) {
            assert!(*gap <= 10.0 * spacing * (1.0 + t), "t = {t}: {gap}");
        }
        let e = maximal_envelope(&phi, &tc, &dual).unwrap();
        assert_eq!(e.lambda_c(), tc.lambda_c());
    }

    #[test]
    fn inverse_of_trivial_ray_recovers_head() {
        let (phi, _) = quadratic(33);
        let lambdas: Vec<f64> = (-4..=4).map(|i| i as f64 / 4.0).collect();
        let tc = TestCurve::constant_then_cutoff(&phi, lambdas.clone(), 0.0).unwrap();
        let ray = ray_from_curve(&tc, &default_t_grid()).unwrap();
        let back = inverse_transform(&ray, &lambdas).unwrap();
        for (j, &l) in lambdas.iter().enumerate() {
            if l <= 0.0 {
                assert!(back.sample(j).sup_distance(&phi).unwrap() < 1e-12);
            } else {
                assert!(back.sample(j).is_identically_neg_inf(), "lambda = {l}");
            }
        }
        assert_eq!(back.lambda_c(), 0.0);
    }

    #[test]
    fn restart_matches_direct_ray() {
        let (phi, dual) = quadratic(129);
        let base = subgradient_range(&phi, &dual).unwrap();
        let u = ConcaveTransform::on_region(&base, |y| -y[0].abs()).unwrap();
        let gap = semigroup_gap(&phi, &u, &dual, 0.3, 0.4).unwrap();
        assert!(gap < 1e-9, "{gap}");
    }

    #[test]
    fn step_energies_are_sandwiched() {
        // x^2/2 continued by its tangents, so transported gradients stay in the box for t <= 1.
        let g = Grid::interval(-2.0, 2.0, 129).unwrap();
        let hub = |x: f64| if x.abs() <= 1.0 { x * x / 2.0 } else { x.abs() - 0.5 };
        let phi = ConvexGridFunction::certify(GridFunction::from_fn(g, |x| hub(x[0])).unwrap()).unwrap();
        let dual = DualGrid::new(Grid::interval(-1.0, 1.0, 129).unwrap());
        let base = subgradient_range(&phi, &dual).unwrap();
        let u = ConcaveTransform::on_region(&base, |y| -y[0].abs()).unwrap();
        let lambdas: Vec<f64> = (-8..=0).map(|i| i as f64 / 8.0).collect();
        let tc = TestCurve::from_concave_transform(&phi, &u, lambdas, &dual).unwrap();
        for t in [0.1, 1.0] {
            for s in step_energies(&tc, &dual, t).unwrap() {
                assert!(s.lower - 1e-12 <= s.step && s.step <= s.upper + 1e-12, "{s:?}");
            }
        }
    }
}
