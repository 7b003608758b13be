//! Numerical acceptance suite.
//!
//! Every check builds its own instances (random ones from a seeded ChaCha
//! stream), measures one or more quantities and compares each with a bound.
//! Reports serialise to JSON; wall-clock times are only included on request so
//! that repeated runs produce identical bytes.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filtration::{
    concave_transform_g, equivalence_check, lse_sandwich_violation, moment_check, phong_sturm_ray, BergmanInstance,
    WeightedLatticeData,
};
use crate::geodesic::{compare_rays, default_t_grid, energy_linearity, ray_dual, ray_from_curve};
use crate::grid::{lower_convex_envelope, ConvexGridFunction, Grid, GridFunction};
use crate::legendre::{biconjugate, conjugate_brute, conjugate_fast, subgradient_range, DualGrid};
use crate::monge_ampere::{cocycle_residual, energy_dual, energy_quadrature, ma_measure, EnergyFrame, DEFAULT_T_SAMPLES};
use crate::test_curve::{contact_set, default_contact_tol, ConcaveTransform, TestCurve};

pub const DEFAULT_SEED: u64 = 0x5eed_2011;

/// Grid constant in the ray and filtration bounds.
pub const C_GRID: f64 = 10.0;

const K_LIST: [usize; 4] = [4, 8, 16, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Core,
    Envelopes,
    Rays,
    Filtration,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "core" => Suite::Core,
            "envelopes" => Suite::Envelopes,
            "rays" => Suite::Rays,
            "filtration" => Suite::Filtration,
            "all" => Suite::All,
            _ => return None,
        })
    }

    pub fn ids(self) -> Vec<u32> {
        match self {
            Suite::Core => vec![1, 2, 3, 4, 5],
            Suite::Envelopes => vec![6],
            Suite::Rays => vec![7, 8],
            Suite::Filtration => vec![9, 10, 11, 12],
            Suite::All => (1..=13).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Multiplies every upper bound.
    pub tol_scale: f64,
    pub timings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: DEFAULT_SEED, tol_scale: 1.0, timings: false }
    }
}

/// One measured quantity. It passes when `lower <= value <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    pub upper: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: u32,
    pub name: String,
    pub metrics: Vec<Metric>,
    pub pass: bool,
    pub time_limit_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

impl CheckResult {
    pub fn summary(&self) -> String {
        let worst = self
            .metrics
            .iter()
            .map(|m| format!("{} = {:.3e} (bound {:.3e})", m.name, m.value, m.upper))
            .collect::<Vec<_>>()
            .join("; ");
        format!("[{}] {:>2} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.id, self.name, worst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub suite: Suite,
    pub seed: u64,
    pub tol_scale: f64,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

struct Metrics {
    scale: f64,
    items: Vec<Metric>,
}

impl Metrics {
    fn new(scale: f64) -> Self {
        Self { scale, items: Vec::new() }
    }

    fn at_most(&mut self, name: &str, value: f64, bound: f64) {
        let upper = bound * self.scale;
        self.items.push(Metric { name: name.into(), value, lower: None, upper, pass: value <= upper });
    }

    fn within(&mut self, name: &str, value: f64, lower: f64, upper: f64) {
        let pass = lower <= value && value <= upper;
        self.items.push(Metric { name: name.into(), value, lower: Some(lower), upper, pass });
    }
}

fn time_limit(id: u32) -> f64 {
    match id {
        1 | 4 | 11 => 2.0,
        2 | 3 | 5 | 6 => 5.0,
        7 | 8 => 10.0,
        9 | 12 => 1.0,
        10 => 20.0,
        _ => 60.0,
    }
}

fn name(id: u32) -> &'static str {
    match id {
        1 => "Legendre involution",
        2 => "fast transform equals brute force",
        3 => "Monge-Ampere total mass equals subgradient volume",
        4 => "energy: dual formula equals quadrature",
        5 => "energy cocycle",
        6 => "maximal envelope mass concentrates on the contact set",
        7 => "curve ray equals dual ray",
        8 => "energy linearity along rays",
        9 => "log-sum-exp sandwich",
        10 => "Phong-Sturm ray equals the filtration ray",
        11 => "trivial configuration translates",
        12 => "concave transform moments",
        13 => "thread-count determinism",
        _ => "unknown",
    }
}

/// Runs one check by number.
pub fn run_check(id: u32, cfg: &RunConfig) -> Result<CheckResult> {
    let start = Instant::now();
    let mut m = Metrics::new(cfg.tol_scale);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(id as u64));
    match id {
        1 => legendre_involution(&mut m, &mut rng)?,
        2 => fast_vs_brute(&mut m, &mut rng)?,
        3 => ma_total_mass(&mut m)?,
        4 => energy_agreement(&mut m)?,
        5 => energy_cocycle(&mut m, &mut rng)?,
        6 => contact_concentration(&mut m)?,
        7 => ray_equality(&mut m)?,
        8 => energy_linearity_check(&mut m)?,
        9 => lse_sandwich(&mut m)?,
        10 => phong_sturm_equivalence(&mut m)?,
        11 => trivial_configuration(&mut m)?,
        12 => moments(&mut m)?,
        13 => determinism(&mut m, cfg)?,
        _ => return Err(Error::Domain(format!("no check numbered {id}"))),
    }
    let seconds = start.elapsed().as_secs_f64();
    let pass = m.items.iter().all(|x| x.pass);
    Ok(CheckResult {
        id,
        name: name(id).into(),
        metrics: m.items,
        pass,
        time_limit_s: time_limit(id),
        seconds: cfg.timings.then_some(seconds),
    })
}

pub fn run_suite(suite: Suite, cfg: &RunConfig) -> Result<RunReport> {
    let checks = suite.ids().into_iter().map(|id| run_check(id, cfg)).collect::<Result<Vec<_>>>()?;
    let pass = checks.iter().all(|c| c.pass);
    Ok(RunReport { suite, seed: cfg.seed, tol_scale: cfg.tol_scale, checks, pass })
}

// ---------------------------------------------------------------------------
// Instances

fn convex(g: &Grid, f: impl Fn(&[f64]) -> f64) -> Result<ConvexGridFunction> {
    ConvexGridFunction::certify(GridFunction::from_fn(g.clone(), f)?)
}

/// `a x^2 + b x + sum_j w_j |x - c_j|`.
fn random_convex_1d(rng: &mut ChaCha8Rng, g: &Grid) -> Result<GridFunction> {
    let a = rng.gen_range(0.0..2.0);
    let b = rng.gen_range(-1.0..1.0);
    let kinks: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    GridFunction::from_fn(g.clone(), |x| {
        a * x[0] * x[0] + b * x[0] + kinks.iter().map(|(w, c)| w * (x[0] - c).abs()).sum::<f64>()
    })
}

fn random_bumps(rng: &mut ChaCha8Rng) -> Vec<(f64, f64, f64)> {
    (0..3).map(|_| (rng.gen_range(0.05..0.3), rng.gen_range(3.0..15.0), rng.gen_range(0.0..6.3))).collect()
}

/// Huber continuation of `x^2 / 2`: quadratic on `[-1, 1]`, tangent lines beyond.
pub fn huber_head(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        x * x / 2.0
    } else {
        x.abs() - 0.5
    }
}

/// Ray instance at refinement `level`: head [`huber_head`] on `[-2, 2]` with
/// `128 * 2^level + 1` nodes, covering dual grid of the same size,
/// `u(y) = -|y|` on the head's subgradient set and lambda spacing `2^-(5+level)`.
pub struct HuberRays {
    pub phi: ConvexGridFunction,
    pub dual: DualGrid,
    pub u: ConcaveTransform,
    pub curve: TestCurve,
    pub lambda_step: f64,
}

pub fn huber_rays(level: u32) -> Result<HuberRays> {
    let n = (128usize << level) + 1;
    let g = Grid::interval(-2.0, 2.0, n)?;
    let phi = convex(&g, |x| huber_head(x[0]))?;
    let dual = DualGrid::covering(&phi, &[n])?;
    let base = subgradient_range(&phi, &dual)?;
    let u = ConcaveTransform::on_region(&base, |y| -y[0].abs())?;
    let den = 32i64 << level;
    let lo = u.distinct_values()[0];
    let jlo = (lo * den as f64).floor() as i64 - 1;
    let lambdas: Vec<f64> = (jlo..=0).map(|j| j as f64 / den as f64).collect();
    let curve = TestCurve::from_concave_transform(&phi, &u, lambdas, &dual)?;
    Ok(HuberRays { phi, dual, u, curve, lambda_step: 1.0 / den as f64 })
}

/// Softplus `ln(1 + e^x)` on `[-4, 4]` (257 nodes), dual grid `[0, 1]` (257 nodes).
pub fn softplus_instance() -> Result<BergmanInstance> {
    let g = Grid::interval(-4.0, 4.0, 257)?;
    let phi = convex(&g, |x| x[0].exp().ln_1p())?;
    let dual = DualGrid::new(Grid::interval(0.0, 1.0, 257)?);
    BergmanInstance::new(phi, dual)
}

pub fn segment_data(w0: i64, w1: i64) -> Result<WeightedLatticeData> {
    WeightedLatticeData::new(1, vec![[0, 0], [1, 0]], vec![w0, w1])
}

// ---------------------------------------------------------------------------
// Checks

fn legendre_involution(m: &mut Metrics, rng: &mut ChaCha8Rng) -> Result<()> {
    let g = Grid::interval(-1.0, 1.0, 257)?;
    let diam = g.diameter();
    let (mut convex_ratio, mut nonconvex_ratio) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let f = random_convex_1d(rng, &g)?;
        let dual = DualGrid::covering(&f, &[257])?;
        let bound = 2.0 * diam * dual.grid().max_spacing();
        convex_ratio = convex_ratio.max(biconjugate(&f, &dual)?.sup_distance(&f)? / bound);
    }
    for _ in 0..20 {
        let base = random_convex_1d(rng, &g)?;
        let bumps = random_bumps(rng);
        let vals = (0..g.len())
            .map(|i| {
                let x = g.point(i)[0];
                base.value(i) + bumps.iter().map(|(a, w, p)| a * (w * x + p).sin()).sum::<f64>()
            })
            .collect();
        let f = GridFunction::new(g.clone(), vals)?;
        let dual = DualGrid::covering(&f, &[257])?;
        let bound = 2.0 * diam * dual.grid().max_spacing();
        let env = lower_convex_envelope(&f)?;
        nonconvex_ratio = nonconvex_ratio.max(biconjugate(&f, &dual)?.sup_distance(&env)? / bound);
    }
    m.at_most("convex: max |f** - f| / (2 diam dy)", convex_ratio, 1.0);
    m.at_most("nonconvex: max |f** - env f| / (2 diam dy)", nonconvex_ratio, 1.0);
    Ok(())
}

fn fast_vs_brute(m: &mut Metrics, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut mismatches = 0usize;
    for inst in 0..10 {
        let src = Grid::interval(-1.0, 1.0, 513)?;
        let dst = Grid::interval(rng.gen_range(-3.0..-0.5), rng.gen_range(0.5..3.0), 513)?;
        let vals: Vec<f64> = if inst == 0 {
            // Affine data on a dyadic grid: every dual node has ties.
            (0..src.len()).map(|i| 0.25 * src.point(i)[0] + 0.5).collect()
        } else {
            (0..src.len()).map(|i| src.point(i)[0].powi(2) + rng.gen_range(-0.5..0.5)).collect()
        };
        let (a, b) = (conjugate_fast(&src, &vals, &dst)?, conjugate_brute(&src, &vals, &dst)?);
        mismatches += differences(&a.values, &b.values, &a.argmax, &b.argmax);
    }
    m.at_most("1-D (513 nodes, 10 instances): mismatched nodes", mismatches as f64, 0.0);
    let mut mismatches = 0usize;
    for inst in 0..10 {
        let src = Grid::rect((-1.0, 1.0), (-1.0, 1.0), (65, 65))?;
        let dst = Grid::rect((rng.gen_range(-3.0..-0.5), rng.gen_range(0.5..3.0)), (-2.0, 2.0), (65, 65))?;
        let vals: Vec<f64> = if inst == 0 {
            (0..src.len()).map(|i| {
                let p = src.point(i);
                0.25 * p[0] - 0.5 * p[1]
            }).collect()
        } else {
            (0..src.len()).map(|i| {
                let p = src.point(i);
                p[0] * p[0] + 0.5 * p[1] * p[1] + rng.gen_range(-0.5..0.5)
            }).collect()
        };
        let (a, b) = (conjugate_fast(&src, &vals, &dst)?, conjugate_brute(&src, &vals, &dst)?);
        mismatches += differences(&a.values, &b.values, &a.argmax, &b.argmax);
    }
    m.at_most("2-D (65^2, 10 instances): mismatched nodes", mismatches as f64, 0.0);
    Ok(())
}

fn differences(va: &[f64], vb: &[f64], aa: &[usize], ab: &[usize]) -> usize {
    (0..va.len()).filter(|&i| va[i].to_bits() != vb[i].to_bits() || aa[i] != ab[i]).count()
}

fn ma_total_mass(m: &mut Metrics) -> Result<()> {
    let g = Grid::interval(-1.0, 1.0, 257)?;
    let dual = DualGrid::new(Grid::interval(-1.0, 1.0, 257)?);
    let cell = dual.grid().cell_volume();
    let mut worst = 0.0f64;
    for f in [convex(&g, |x| x[0] * x[0] / 2.0)?, convex(&g, |x| x[0].abs())?] {
        // Both have subgradient set [-1, 1].
        worst = worst.max((ma_measure(&f, &dual)?.total() - 2.0).abs() / cell);
    }
    m.at_most("1-D (257/257): |mass - vol| in dual cells", worst, 2.0);
    let g2 = Grid::rect((-1.0, 1.0), (-1.0, 1.0), (129, 129))?;
    let dual2 = DualGrid::new(g2.clone());
    let quad = convex(&g2, |p| (p[0] * p[0] + p[1] * p[1]) / 2.0)?;
    let cone = convex(&g2, |p| p[0].hypot(p[1]))?;
    let rel_quad = (ma_measure(&quad, &dual2)?.total() - 4.0).abs() / 4.0;
    let rel_cone = (ma_measure(&cone, &dual2)?.total() - std::f64::consts::PI).abs() / std::f64::consts::PI;
    m.at_most("2-D (129^2): relative residual, max", rel_quad.max(rel_cone), 0.05);
    Ok(())
}

fn energy_agreement(m: &mut Metrics) -> Result<()> {
    let g = Grid::interval(-1.0, 1.0, 257)?;
    let f0 = convex(&g, |x| x[0] * x[0] / 2.0)?;
    let f1 = convex(&g, |x| 0.75 * x[0] * x[0])?;
    let dual = DualGrid::covering(&f1, &[257])?;
    let frame = EnergyFrame::of(&f0, &dual)?;
    let q = energy_quadrature(&f1, &f0, &frame, DEFAULT_T_SAMPLES)?.value;
    let d = energy_dual(&f1, &f0, &frame)?.value;
    m.at_most("|E_dual - E_quad| / |E_dual|", (d - q).abs() / d.abs(), 1e-2);
    Ok(())
}

fn energy_cocycle(m: &mut Metrics, rng: &mut ChaCha8Rng) -> Result<()> {
    let g = Grid::interval(-1.0, 1.0, 129)?;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let fs: Vec<GridFunction> = (0..3).map(|_| random_convex_1d(rng, &g)).collect::<Result<_>>()?;
        let dual = DualGrid::covering(&fs[0], &[257])?;
        let frame = EnergyFrame::of(&fs[0], &dual)?;
        let scale = [(0, 1), (1, 2), (0, 2)]
            .iter()
            .map(|&(a, b)| energy_quadrature(&fs[b], &fs[a], &frame, DEFAULT_T_SAMPLES).map(|e| e.value.abs()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(1e-12, f64::max);
        let r = cocycle_residual(&fs[0], &fs[1], &fs[2], &frame, DEFAULT_T_SAMPLES)?;
        worst = worst.max(r / scale);
    }
    m.at_most("max residual / energy scale", worst, 5e-2);
    Ok(())
}

fn contact_concentration(m: &mut Metrics) -> Result<()> {
    let g = Grid::interval(-1.0, 1.0, 129)?;
    let phi = convex(&g, |x| x[0] * x[0] / 2.0)?;
    let dual = DualGrid::covering(&phi, &[129])?;
    let base = subgradient_range(&phi, &dual)?;
    let u = ConcaveTransform::on_region(&base, |y| -y[0].abs())?;
    let lambdas: Vec<f64> = (-40..=0).map(|j| j as f64 / 32.0).collect();
    let curve = TestCurve::from_concave_transform(&phi, &u, lambdas, &dual)?;
    let tol = default_contact_tol(&phi);
    let cell = dual.grid().cell_volume();
    let mut worst = 0.0f64;
    for j in curve.finite_indices() {
        if curve.lambdas()[j] >= curve.lambda_c() {
            continue;
        }
        let mu = ma_measure(curve.sample(j), &dual)?;
        let contact = contact_set(&phi, curve.sample(j), tol)?;
        worst = worst.max(mu.mass_outside(&contact) / cell);
    }
    m.at_most("max mass outside contact band, in dual cells", worst, 3.0);
    Ok(())
}

fn ray_gap(level: u32) -> Result<(f64, f64)> {
    let inst = huber_rays(level)?;
    let ts = default_t_grid();
    let hat = ray_from_curve(&inst.curve, &ts)?;
    let tilde = ray_dual(&inst.phi, &inst.u, &inst.dual, &ts)?;
    let gaps = compare_rays(&hat, &tilde)?;
    let spacing = inst.phi.grid().max_spacing() + inst.dual.grid().max_spacing() + inst.lambda_step;
    let c = ts.iter().zip(&gaps).map(|(t, g)| g / (spacing * (1.0 + t))).fold(0.0, f64::max);
    Ok((gaps.iter().cloned().fold(0.0, f64::max), c))
}

fn ray_equality(m: &mut Metrics) -> Result<()> {
    let (g0, c0) = ray_gap(0)?;
    let (g1, c1) = ray_gap(1)?;
    m.at_most("C = max_t gap / ((h + dy + dl)(1 + t)), base grids", c0, C_GRID);
    m.at_most("C, halved grids", c1, C_GRID);
    m.within("gap ratio after halving all spacings", g1 / g0, 0.35, 0.65);
    Ok(())
}

fn energy_linearity_check(m: &mut Metrics) -> Result<()> {
    let ts = default_t_grid();
    let g = Grid::interval(-2.0, 2.0, 129)?;
    let phi = convex(&g, |x| x[0] * x[0] / 2.0)?;
    let dual = DualGrid::covering(&phi, &[129])?;
    let base = subgradient_range(&phi, &dual)?;
    let one = ConcaveTransform::on_region(&base, |_| 1.0)?;
    let ray = ray_dual(&phi, &one, &dual, &ts)?;
    let r = energy_linearity(&ray, ray.frame(0), &dual)?;
    m.at_most("u = 1: residual / |slope|", r.max_abs_residual / r.slope.abs(), 1e-2);
    m.at_most("u = 1: |slope - vol(Delta)| / vol(Delta)", (r.slope - base.volume()).abs() / base.volume(), 2e-2);
    m.at_most("u = 1: |slope - predicted| / |predicted|", r.slope_mismatch(), 2e-2);
    let inst = huber_rays(0)?;
    let hat = ray_from_curve(&inst.curve, &ts)?;
    let r = energy_linearity(&hat, &inst.phi, &inst.dual)?;
    m.at_most("Huber: residual / |slope|", r.max_abs_residual / r.slope.abs(), 1e-2);
    m.at_most("Huber: |slope - predicted| / |predicted|", r.slope_mismatch(), 2e-2);
    Ok(())
}

fn filtration_instances() -> Result<Vec<(BergmanInstance, WeightedLatticeData)>> {
    let inst = softplus_instance()?;
    Ok(vec![(inst.clone(), segment_data(0, 1)?), (inst.clone(), segment_data(1, 1)?), (inst, segment_data(0, -1)?)])
}

fn lse_sandwich(m: &mut Metrics) -> Result<()> {
    let mut worst = 0.0f64;
    for (inst, mut data) in filtration_instances()? {
        for k in K_LIST {
            let s = inst.sections(data.multiplicative_closure(k)?)?;
            for t in default_t_grid() {
                worst = worst.max(lse_sandwich_violation(&inst, &s, t));
            }
            for j in -2 * k as i64..=2 * k as i64 {
                let l = j as f64 / k as f64;
                let (b, e) = (inst.bergman_metric(&s, l), inst.extremal_metric(&s, l));
                for (bv, ev) in b.values().iter().zip(e.values()) {
                    if ev.is_finite() {
                        worst = worst.max(ev - bv).max(bv - ev - s.lse_budget());
                    }
                }
            }
        }
    }
    m.at_most("max sandwich violation", worst, 1e-12);
    Ok(())
}

fn phong_sturm_equivalence(m: &mut Metrics) -> Result<()> {
    let inst = softplus_instance()?;
    let mut data = segment_data(0, 1)?;
    let ts = default_t_grid();
    let mut gaps = Vec::new();
    let mut worst = 0.0f64;
    for k in K_LIST {
        let r = equivalence_check(&inst, &mut data, k, &K_LIST, &ts, C_GRID)?;
        worst = worst.max(r.gap.iter().zip(&r.bound).map(|(g, b)| g / b).fold(0.0, f64::max));
        gaps.push(r.max_gap());
    }
    m.at_most("max_k,t gap / bound", worst, 1.0);
    m.at_most("gap(32) / gap(4)", gaps[3] / gaps[0], 1.0 - f64::EPSILON);
    Ok(())
}

fn trivial_configuration(m: &mut Metrics) -> Result<()> {
    let inst = softplus_instance()?;
    let mut data = segment_data(1, 1)?;
    let eta = 1.0;
    let ts = default_t_grid();
    let (mut translation, mut ratio) = (0.0f64, 0.0f64);
    for k in K_LIST {
        let s = inst.sections(data.multiplicative_closure(k)?)?;
        let ray = phong_sturm_ray(&inst, &s, &ts)?;
        let drift = 2.0 * inst.phi().grid().diameter() / k as f64;
        for (t, f) in ts.iter().zip(ray.frames()) {
            translation = translation.max(f.sup_distance(&ray.frame(0).shift(t * eta)?)?);
            let gap = f.sup_distance(&inst.phi().shift(t * eta)?)?;
            ratio = ratio.max(gap / (s.lse_budget() + drift));
        }
    }
    m.at_most("max |frame(t) - frame(0) - t eta|", translation, 1e-12);
    m.at_most("max |frame(t) - phi - t eta| / (ln|I_k|/k + drift)", ratio, 1.0);
    Ok(())
}

fn moments(m: &mut Metrics) -> Result<()> {
    let k = 32;
    let mut data = segment_data(0, 1)?;
    let g = concave_transform_g(&mut data, k)?;
    let (d1, i1) = moment_check(&g, &mut data, k, 1)?;
    let (d2, i2) = moment_check(&g, &mut data, k, 2)?;
    // g(x) = x on [0, 1]: int g = 1/2, int g^2 = 1/3.
    m.at_most("k |p=1 moment - 1/2|", k as f64 * (d1 - 0.5).abs(), 1.0);
    m.at_most("k |p=2 moment - 1/3|", k as f64 * (d2 - 1.0 / 3.0).abs(), 2.0);
    m.at_most("k |p=1 moment - int g|", k as f64 * (d1 - i1).abs(), 1.0);
    m.at_most("k |p=2 moment - int g^2|", k as f64 * (d2 - i2).abs(), 2.0);
    Ok(())
}

/// Reruns a few checks on one and on eight worker threads and compares the reports byte for byte.
fn determinism(m: &mut Metrics, cfg: &RunConfig) -> Result<()> {
    let inner = RunConfig { timings: false, ..*cfg };
    let run = |threads: usize| -> Result<String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Numerical(e.to_string()))?;
        pool.install(|| {
            let checks = [2, 7, 10].iter().map(|&id| run_check(id, &inner)).collect::<Result<Vec<_>>>()?;
            Ok(serde_json::to_string(&checks).expect("report serialises"))
        })
    };
    let (a, b) = (run(1)?, run(8)?);
    let differing = a.bytes().zip(b.bytes()).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len());
    m.at_most("differing report bytes, 1 vs 8 threads (checks 2, 7, 10)", differing as f64, 0.0);
    Ok(())
}
