//! Test curves, their concave transform and maximal envelopes.
//!
//! A test curve is a finite family `psi_l` of convex grid functions indexed by
//! increasing samples `l_0 < ... < l_m`. It is constant up to `lambda_head`,
//! concave and decreasing in `l` node-wise, and identically `-inf` past
//! `lambda_c`. The sample at `lambda_c` itself is kept finite.
//!
//! The maximal envelope of a convex `phi` along a curve replaces each sample
//! by the restricted biconjugate
//!
//! ```text
//! phi_l(x) = max { <x, y> - phi*(y) : y in Delta_phi, u(y) >= l }
//! ```
//!
//! where `u` is the curve's concave transform.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::grid::{ConvexGridFunction, Grid, GridFunction, LineCursor, NEG_INF};
use crate::legendre::{self, legendre, restricted_conjugate, subgradient_range, DualGrid, SlopeRegion};

/// Finite family of convex functions indexed by increasing `lambda` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TestCurve {
    lambdas: Vec<f64>,
    samples: Vec<ConvexGridFunction>,
    lambda_head: f64,
    lambda_c: f64,
    concavity_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    HeadNotConstant,
    TailNotNegInf,
    NotDecreasing,
    NotConcave,
}

/// First invariant violation found by [`TestCurve::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveViolation {
    pub kind: ViolationKind,
    pub lambda: f64,
    pub node: Option<usize>,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveDiagnostics {
    pub valid: bool,
    pub violation: Option<CurveViolation>,
}

fn default_concavity_tol(samples: &[ConvexGridFunction]) -> f64 {
    let scale = samples
        .iter()
        .flat_map(|s| s.values().iter().filter(|v| v.is_finite()).map(|v| v.abs()))
        .fold(1.0f64, f64::max);
    1e-9 * scale
}

impl TestCurve {
    /// Builds a curve; `lambda_c` is the largest sample with a finite
    /// function and `lambda_head` the largest sample up to which the curve is
    /// bit-identical to its first sample. Invariants are checked by
    /// [`validate`](Self::validate), not here.
    pub fn new(lambdas: Vec<f64>, samples: Vec<ConvexGridFunction>) -> Result<Self> {
        if lambdas.is_empty() || lambdas.len() != samples.len() {
            return domain("need one sample per lambda and at least one sample");
        }
        if lambdas.windows(2).any(|w| !(w[0] < w[1])) || lambdas.iter().any(|l| !l.is_finite()) {
            return domain("lambda samples must be finite and strictly increasing");
        }
        let grid = samples[0].grid().clone();
        if samples.iter().any(|s| *s.grid() != grid) {
            return domain("curve samples live on different grids");
        }
        if samples[0].is_identically_neg_inf() {
            return domain("the head of a test curve must be finite");
        }
        let last_finite = samples.iter().rposition(|s| !s.is_identically_neg_inf()).unwrap();
        let head_len = samples.iter().take_while(|s| s.values() == samples[0].values()).count();
        let concavity_tol = default_concavity_tol(&samples);
        Ok(Self {
            lambda_head: lambdas[head_len - 1],
            lambda_c: lambdas[last_finite],
            lambdas,
            samples,
            concavity_tol,
        })
    }

    /// `psi_l = phi` for `l <= eta`, identically `-inf` after.
    pub fn constant_then_cutoff(phi: &ConvexGridFunction, lambdas: Vec<f64>, eta: f64) -> Result<Self> {
        let samples = lambdas
            .iter()
            .map(|&l| if l <= eta { phi.clone() } else { ConvexGridFunction::trusted(GridFunction::neg_inf(phi.grid().clone())) })
            .collect();
        Self::new(lambdas, samples)
    }

    /// Envelope curve of `phi` for a given concave transform, sampled at `lambdas`.
    pub fn from_concave_transform(phi: &ConvexGridFunction, u: &ConcaveTransform, lambdas: Vec<f64>, dual: &DualGrid) -> Result<Self> {
        dual.check_covers(phi)?;
        if u.u.grid() != dual.grid() {
            return domain("concave transform does not live on the dual grid");
        }
        let star = legendre(phi, dual)?;
        let within = subgradient_range(phi, dual)?.intersect(&u.base)?;
        let samples: Vec<ConvexGridFunction> = lambdas
            .par_iter()
            .map(|&l| {
                let region = legendre::superlevel(&u.u, l, &within);
                restricted_conjugate(&star, &region, phi.grid())
            })
            .collect::<Result<_>>()?;
        let mut curve = Self::new(lambdas, samples)?;
        // Regions move in whole dual cells, so concavity in lambda only holds up to that step.
        curve.concavity_tol += phi.grid().diameter() * dual.grid().max_spacing();
        Ok(curve)
    }

    pub fn with_concavity_tol(mut self, tol: f64) -> Self {
        self.concavity_tol = tol;
        self
    }

    pub fn concavity_tol(&self) -> f64 {
        self.concavity_tol
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn samples(&self) -> &[ConvexGridFunction] {
        &self.samples
    }

    pub fn sample(&self, j: usize) -> &ConvexGridFunction {
        &self.samples[j]
    }

    pub fn head(&self) -> &ConvexGridFunction {
        &self.samples[0]
    }

    pub fn lambda_head(&self) -> f64 {
        self.lambda_head
    }

    pub fn lambda_c(&self) -> f64 {
        self.lambda_c
    }

    pub fn grid(&self) -> &Grid {
        self.samples[0].grid()
    }

    /// Indices of samples with a finite function.
    pub fn finite_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.samples.len()).filter(|&j| !self.samples[j].is_identically_neg_inf())
    }

    /// Largest `|lambda|` over finite samples.
    pub fn lambda_bound(&self) -> f64 {
        self.finite_indices().map(|j| self.lambdas[j].abs()).fold(0.0, f64::max)
    }

    /// Checks every curve invariant and reports the first violation.
    pub fn validate(&self) -> CurveDiagnostics {
        let fail = |kind, lambda, node, amount| CurveDiagnostics {
            valid: false,
            violation: Some(CurveViolation { kind, lambda, node, amount }),
        };
        let head = self.samples[0].values();
        for (j, s) in self.samples.iter().enumerate() {
            if self.lambdas[j] <= self.lambda_head && s.values() != head {
                let node = s.values().iter().zip(head).position(|(a, b)| a != b);
                return fail(ViolationKind::HeadNotConstant, self.lambdas[j], node, f64::NAN);
            }
            let should_be_neg_inf = self.lambdas[j] > self.lambda_c;
            if s.is_identically_neg_inf() != should_be_neg_inf || (!should_be_neg_inf && s.has_neg_inf()) {
                let node = s.values().iter().position(|v| v.is_finite() == should_be_neg_inf);
                return fail(ViolationKind::TailNotNegInf, self.lambdas[j], node, f64::NAN);
            }
        }
        let finite: Vec<usize> = self.finite_indices().collect();
        for w in finite.windows(2) {
            let (a, b) = (self.samples[w[0]].values(), self.samples[w[1]].values());
            if let Some((node, amount)) = worst(b.iter().zip(a).map(|(hi, lo)| hi - lo)) {
                if amount > self.concavity_tol {
                    return fail(ViolationKind::NotDecreasing, self.lambdas[w[1]], Some(node), amount);
                }
            }
        }
        for w in finite.windows(3) {
            let (l0, l1, l2) = (self.lambdas[w[0]], self.lambdas[w[1]], self.lambdas[w[2]]);
            let (s0, s1, s2) = (self.samples[w[0]].values(), self.samples[w[1]].values(), self.samples[w[2]].values());
            let (a, b) = ((l2 - l1) / (l2 - l0), (l1 - l0) / (l2 - l0));
            let defects = (0..s1.len()).map(|i| a * s0[i] + b * s2[i] - s1[i]);
            if let Some((node, amount)) = worst(defects) {
                if amount > self.concavity_tol {
                    return fail(ViolationKind::NotConcave, l1, Some(node), amount);
                }
            }
        }
        CurveDiagnostics { valid: true, violation: None }
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        let d = self.validate();
        match d.violation {
            None => Ok(()),
            Some(v) => Err(Error::Validation {
                message: format!("invalid test curve: {:?} at lambda = {} (amount {:e})", v.kind, v.lambda, v.amount),
                node: v.node,
            }),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("testcurve\n");
        let ls: Vec<String> = self.lambdas.iter().map(|l| format!("{l:?}")).collect();
        let _ = writeln!(out, "lambdas {}", ls.join(" "));
        let _ = writeln!(out, "head {:?}", self.lambda_head);
        let _ = writeln!(out, "lambda_c {:?}", self.lambda_c);
        let _ = writeln!(out, "concavity_tol {:?}", self.concavity_tol);
        for (j, s) in self.samples.iter().enumerate() {
            let _ = writeln!(out, "sample {j}");
            out.push_str(&s.to_text());
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output. Every sample is certified convex.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cur = LineCursor::new(text);
        cur.expect("testcurve")?;
        let lambdas = cur.keyed_floats("lambdas")?;
        let head = cur.keyed_floats("head")?;
        let lc = cur.keyed_floats("lambda_c")?;
        let tol = match cur.keyed_floats("concavity_tol")?.as_slice() {
            [t] if *t >= 0.0 => *t,
            _ => return Err(cur.err("expected `concavity_tol t` with t >= 0")),
        };
        let mut samples = Vec::with_capacity(lambdas.len());
        for j in 0..lambdas.len() {
            let idx = cur.keyed("sample")?;
            if idx.first().and_then(|s| s.parse::<usize>().ok()) != Some(j) {
                return Err(cur.err("samples must be numbered consecutively from 0"));
            }
            let f = GridFunction::read_record(&mut cur)?;
            let line = cur.line_no();
            samples.push(ConvexGridFunction::certify(f).map_err(|e| Error::Parse { line, message: e.to_string() })?);
        }
        if !cur.at_end() {
            return Err(cur.err("trailing content after test curve"));
        }
        let curve = Self::new(lambdas, samples)
            .map_err(|e| Error::Parse { line: 2, message: e.to_string() })?
            .with_concavity_tol(tol);
        if head.first() != Some(&curve.lambda_head) || lc.first() != Some(&curve.lambda_c) {
            return Err(Error::Parse { line: 3, message: "head / lambda_c do not match the samples".into() });
        }
        Ok(curve)
    }
}

fn worst(it: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    it.enumerate().filter(|(_, v)| !v.is_nan()).fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
        Some((_, b)) if b >= v => best,
        _ => Some((i, v)),
    })
}

/// Concave function `u` on a dual grid, finite exactly on `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveTransform {
    u: GridFunction,
    base: SlopeRegion,
    tol: f64,
}

impl ConcaveTransform {
    /// Checks that `u` is finite exactly on `base` and concave there within `tol`.
    pub fn new(u: GridFunction, base: SlopeRegion, tol: f64) -> Result<Self> {
        if u.grid() != base.grid() {
            return domain("u and its base region live on different grids");
        }
        if let Some(i) = (0..u.grid().len()).find(|&i| u.value(i).is_finite() != base.contains(i)) {
            return Err(Error::Validation { message: "u must be finite exactly on its base region".into(), node: Some(i) });
        }
        legendre::check_concave_on_support(&u, tol)?;
        Ok(Self { u, base, tol })
    }

    /// `u = f(y)` on `base`, `-inf` elsewhere.
    pub fn on_region(base: &SlopeRegion, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let g = base.grid();
        let d = g.dim();
        let vals = (0..g.len()).map(|i| if base.contains(i) { f(&g.point(i)[..d]) } else { NEG_INF }).collect();
        Self::new(GridFunction::new(g.clone(), vals)?, base.clone(), 1e-9)
    }

    pub fn u(&self) -> &GridFunction {
        &self.u
    }

    pub fn base(&self) -> &SlopeRegion {
        &self.base
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// `{u >= lambda}`.
    pub fn superlevel(&self, lambda: f64) -> SlopeRegion {
        legendre::superlevel(&self.u, lambda, &self.base)
    }

    /// Sorted distinct finite values of `u`.
    pub fn distinct_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.u.values().iter().copied().filter(|v| v.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// `sum_y u(y)` times the dual cell volume.
    pub fn integral(&self) -> f64 {
        let s: f64 = self.base.indices().map(|i| self.u.value(i)).sum();
        s * self.u.grid().cell_volume()
    }
}

/// `u(y) = max { l : y in Delta_{psi_l} }` on the subgradient set of the head.
pub fn concave_transform(tc: &TestCurve, dual: &DualGrid) -> Result<ConcaveTransform> {
    tc.ensure_valid()?;
    let finite: Vec<usize> = tc.finite_indices().collect();
    let regions: Vec<SlopeRegion> = finite
        .par_iter()
        .map(|&j| subgradient_range(tc.sample(j), dual))
        .collect::<Result<_>>()?;
    let base = regions[0].clone();
    let vals: Vec<f64> = (0..dual.grid().len())
        .map(|k| {
            if !base.contains(k) {
                return NEG_INF;
            }
            finite
                .iter()
                .zip(&regions)
                .filter(|(_, r)| r.contains(k))
                .map(|(&j, _)| tc.lambdas()[j])
                .fold(NEG_INF, f64::max)
        })
        .collect();
    let u = GridFunction::from_raw(dual.grid().clone(), vals);
    // u only takes sampled values, so it is concave up to one lambda step.
    let step = tc.lambdas().windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    ConcaveTransform::new(u, base, step + tc.concavity_tol())
}

/// Maximal envelope of `phi` along `tc`: one restricted biconjugate per sample.
pub fn maximal_envelope(phi: &ConvexGridFunction, tc: &TestCurve, dual: &DualGrid) -> Result<TestCurve> {
    dual.check_covers(phi)?;
    if tc.grid() != phi.grid() {
        return domain("curve and phi live on different grids");
    }
    let u = concave_transform(tc, dual)?;
    TestCurve::from_concave_transform(phi, &u, tc.lambdas().to_vec(), dual)
}

/// `10 * h * (slope bound of phi)`.
pub fn default_contact_tol(phi: &GridFunction) -> f64 {
    let slope = phi
        .slope_range()
        .map(|r| r.iter().map(|(a, b)| a.abs().max(b.abs())).fold(0.0, f64::max))
        .unwrap_or(0.0);
    10.0 * phi.grid().max_spacing() * slope.max(1e-12)
}

/// Nodes where `phi_lambda >= phi - tol`.
pub fn contact_set(phi: &GridFunction, phi_lambda: &GridFunction, tol: f64) -> Result<Vec<bool>> {
    if phi.grid() != phi_lambda.grid() {
        return domain("grid mismatch");
    }
    Ok(phi
        .values()
        .iter()
        .zip(phi_lambda.values())
        .map(|(&a, &b)| a.is_finite() && b.is_finite() && b >= a - tol)
        .collect())
}

/// Sup-norm change when the maximal envelope is applied to its own output,
/// over samples strictly below the critical value.
pub fn idempotence_check(phi: &ConvexGridFunction, tc: &TestCurve, dual: &DualGrid) -> Result<f64> {
    let once = maximal_envelope(phi, tc, dual)?;
    let twice = maximal_envelope(phi, &once, dual)?;
    let mut worst = 0.0f64;
    for j in once.finite_indices() {
        if once.lambdas()[j] >= once.lambda_c() {
            continue;
        }
        worst = worst.max(once.sample(j).sup_distance(twice.sample(j))?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize) -> (ConvexGridFunction, DualGrid) {
        let g = Grid::interval(-1.0, 1.0, n).unwrap();
        let phi = ConvexGridFunction::certify(GridFunction::from_fn(g.clone(), |x| x[0] * x[0] / 2.0).unwrap()).unwrap();
        (phi, DualGrid::new(g))
    }

    #[test]
    fn constant_then_cutoff_is_valid() {
        let (phi, dual) = setup(33);
        let tc = TestCurve::constant_then_cutoff(&phi, vec![-1.0, -0.5, 0.0, 0.5, 1.0], 0.0).unwrap();
        assert!(tc.validate().valid);
        assert_eq!(tc.lambda_head(), 0.0);
        assert_eq!(tc.lambda_c(), 0.0);
        let u = concave_transform(&tc, &dual).unwrap();
        let delta = subgradient_range(&phi, &dual).unwrap();
        assert_eq!(u.base(), &delta);
        assert!(u.base().indices().all(|k| u.u().value(k) == 0.0));
    }

    #[test]
    fn increasing_sample_is_flagged() {
        let (phi, _) = setup(9);
        let up = ConvexGridFunction::certify(phi.shift(0.1).unwrap()).unwrap();
        let tc = TestCurve::new(vec![0.0, 1.0], vec![phi.clone(), up]).unwrap();
        let d = tc.validate();
        assert!(!d.valid);
        assert_eq!(d.violation.unwrap().kind, ViolationKind::NotDecreasing);
    }

    #[test]
    fn concavity_dip_is_flagged() {
        let (phi, _) = setup(9);
        let s1 = ConvexGridFunction::certify(phi.shift(-1.0).unwrap()).unwrap();
        let s2 = ConvexGridFunction::certify(phi.shift(-1.1).unwrap()).unwrap();
        // Chord at the midpoint is -0.55 below phi; the sample sits at -1.
        let tc = TestCurve::new(vec![0.0, 1.0, 2.0], vec![phi.clone(), s1, s2]).unwrap();
        let v = tc.validate().violation.unwrap();
        assert_eq!(v.kind, ViolationKind::NotConcave);
        assert_eq!(v.lambda, 1.0);
        assert!((v.amount - 0.45).abs() < 1e-12);
    }

    #[test]
    fn huber_envelope_closed_form() {
        // 129 nodes: h = 1/64; dual nodes coincide with primal nodes.
        let (phi, dual) = setup(129);
        let base = subgradient_range(&phi, &dual).unwrap();
        let u = ConcaveTransform::on_region(&base, |y| -y[0].abs()).unwrap();
        let tc = TestCurve::from_concave_transform(&phi, &u, vec![-1.0, -0.5, 0.0, 0.25], &dual).unwrap();
        let huber = tc.sample(1);
        for i in 0..phi.grid().len() {
            let x = phi.grid().point(i)[0];
            // Restricted brute force over dual nodes with |y| <= 0.5.
            let brute = (0..dual.grid().len())
                .filter(|&k| dual.grid().point(k)[0].abs() <= 0.5)
                .map(|k| {
                    let y = dual.grid().point(k)[0];
                    x * y - y * y / 2.0
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let closed = if x.abs() <= 0.5 { x * x / 2.0 } else { 0.5 * x.abs() - 0.125 };
            assert!((huber.value(i) - brute).abs() < 1e-12);
            assert!((huber.value(i) - closed).abs() < 1e-12, "x = {x}");
        }
        let contact = contact_set(&phi, huber, 1e-12).unwrap();
        for i in 0..phi.grid().len() {
            assert_eq!(contact[i], phi.grid().point(i)[0].abs() <= 0.5);
        }
        assert!(tc.sample(3).is_identically_neg_inf());
        assert_eq!(tc.lambda_c(), 0.0);
        assert!(contact_set(&phi, tc.sample(3), 1e-12).unwrap().iter().all(|c| !c));
        // Delta_phi stops one dual cell short of the slopes +-1 attained at the box corners.
        let full = contact_set(&phi, tc.sample(0), 1e-12).unwrap();
        assert!((0..phi.grid().len()).all(|i| full[i] == phi.grid().is_interior(i)));
    }

    #[test]
    fn text_round_trip() {
        let (phi, _) = setup(9);
        let tc = TestCurve::constant_then_cutoff(&phi, vec![-1.0, 0.0, 1.0], 0.0).unwrap();
        let back = TestCurve::from_text(&tc.to_text()).unwrap();
        assert_eq!(back.lambdas(), tc.lambdas());
        assert_eq!(back.lambda_c(), tc.lambda_c());
        for (a, b) in back.samples().iter().zip(tc.samples()) {
            assert_eq!(a.values(), b.values());
        }
    }
}
