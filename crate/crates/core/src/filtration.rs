//! Bounded multiplicative filtrations as weighted lattice points.
//!
//! Degree-1 data is a finite set `P1` of lattice points with integer weights.
//! Degree `k` carries the maximal multiplicative extension
//!
//! ```text
//! l_k(a) = max { w(a_1) + ... + w(a_k) : a = a_1 + ... + a_k, a_j in P1 }
//! ```
//!
//! computed by max-plus convolution. Each degree-`k` point `a` gives a model
//! section `e_a(x) = <a/k, x> - phi*(a/k)`, the affine function of sup-norm one
//! below `phi`. Bergman-type metrics are log-sum-exp averages of these
//! sections and the Phong-Sturm ray weights them by `exp(t l_k(a))`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::geodesic::{compare_rays, ray_from_curve, Ray, RaySource};
use crate::grid::{lower_convex_envelope, ConvexGridFunction, GridFunction, LineCursor, NEG_INF};
use crate::hull::{self, LiftedPoints};
use crate::legendre::DualGrid;
use crate::test_curve::{maximal_envelope, TestCurve};

/// Largest degree-`k` lattice set the closure will build.
pub const DEFAULT_SIZE_CAP: usize = 1_000_000;

/// Degree-`k` points (sorted) with their closure weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Closure {
    pub k: usize,
    pub points: Vec<[i64; 2]>,
    pub weights: Vec<i64>,
}

impl Closure {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weight_of(&self, a: [i64; 2]) -> Option<i64> {
        self.points.binary_search(&a).ok().map(|i| self.weights[i])
    }

    /// `l_k(a) / k` per point.
    pub fn normalized_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|&w| w as f64 / self.k as f64).collect()
    }
}

/// Degree-1 weighted lattice data and its multiplicative closures.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLatticeData {
    dim: usize,
    p1: Vec<[i64; 2]>,
    w1: Vec<i64>,
    closures: BTreeMap<usize, Closure>,
    size_cap: usize,
}

impl WeightedLatticeData {
    /// In one dimension the second coordinate of every point must be 0.
    pub fn new(dim: usize, p1: Vec<[i64; 2]>, w1: Vec<i64>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return domain("lattice dimension must be 1 or 2");
        }
        if p1.is_empty() || p1.len() != w1.len() {
            return domain("need a nonempty point set with one weight per point");
        }
        if dim == 1 && p1.iter().any(|p| p[1] != 0) {
            return domain("one-dimensional points must have zero second coordinate");
        }
        let mut order: Vec<usize> = (0..p1.len()).collect();
        order.sort_by_key(|&i| p1[i]);
        if order.windows(2).any(|w| p1[w[0]] == p1[w[1]]) {
            return domain("duplicate lattice point in degree-1 data");
        }
        let p1: Vec<[i64; 2]> = order.iter().map(|&i| p1[i]).collect();
        let w1: Vec<i64> = order.iter().map(|&i| w1[i]).collect();
        let mut closures = BTreeMap::new();
        closures.insert(1, Closure { k: 1, points: p1.clone(), weights: w1.clone() });
        Ok(Self { dim, p1, w1, closures, size_cap: DEFAULT_SIZE_CAP })
    }

    pub fn with_size_cap(mut self, cap: usize) -> Self {
        self.size_cap = cap;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[[i64; 2]] {
        &self.p1
    }

    pub fn weights(&self) -> &[i64] {
        &self.w1
    }

    /// `C = max |w|`, so that `|l_k| <= C k`.
    pub fn bound(&self) -> i64 {
        self.w1.iter().map(|w| w.abs()).max().unwrap_or(0)
    }

    /// Weights at degree `k`, built one degree at a time from the nearest stored degree.
    /// Only requested degrees are stored.
    pub fn multiplicative_closure(&mut self, k: usize) -> Result<&Closure> {
        if k == 0 {
            return domain("degree must be at least 1");
        }
        if self.closures.contains_key(&k) {
            return Ok(&self.closures[&k]);
        }
        if self.min_sumset_size(k) > self.size_cap as f64 {
            return Err(Error::Resource(format!(
                "degree {k} lattice set has at least {} points, over the cap of {}",
                self.min_sumset_size(k),
                self.size_cap
            )));
        }
        let (_, start) = self.closures.range(..=k).next_back().expect("degree 1 is always stored");
        let mut cur = start.clone();
        for m in cur.k + 1..=k {
            let mut next: BTreeMap<[i64; 2], i64> = BTreeMap::new();
            for (a, &wa) in cur.points.iter().zip(&cur.weights) {
                for (b, &wb) in self.p1.iter().zip(&self.w1) {
                    let s = [a[0] + b[0], a[1] + b[1]];
                    let e = next.entry(s).or_insert(i64::MIN);
                    *e = (*e).max(wa + wb);
                }
                if next.len() > self.size_cap {
                    return Err(Error::Resource(format!(
                        "degree {m} lattice set exceeds the cap of {} points",
                        self.size_cap
                    )));
                }
            }
            let (points, weights) = next.into_iter().unzip();
            cur = Closure { k: m, points, weights };
        }
        Ok(self.closures.entry(k).or_insert(cur))
    }

    /// Lower bound on the number of distinct `k`-fold sums of `P1`: sums of
    /// `k` points drawn from an affinely independent subset are all distinct.
    fn min_sumset_size(&self, k: usize) -> f64 {
        let k = k as f64;
        let p = &self.p1;
        let cross = |o: [i64; 2], a: [i64; 2], b: [i64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
        let has_triangle = p.iter().any(|&a| p.iter().any(|&b| p.iter().any(|&c| cross(a, b, c) != 0)));
        if has_triangle {
            (k + 1.0) * (k + 2.0) / 2.0
        } else if p.len() >= 2 {
            k + 1.0
        } else {
            1.0
        }
    }

    pub fn closure(&self, k: usize) -> Option<&Closure> {
        self.closures.get(&k)
    }

    /// Largest `|l_k(a)| / k` at degree `k`.
    pub fn max_normalized_abs(&self, k: usize) -> Option<f64> {
        let c = self.closure(k)?;
        Some(c.weights.iter().map(|w| w.abs() as f64 / k as f64).fold(0.0, f64::max))
    }

    /// First pair breaking `l_{k+m}(a+b) >= l_k(a) + l_m(b)`, as `(a, b)`.
    pub fn superadditivity_violation(&mut self, k: usize, m: usize) -> Result<Option<([i64; 2], [i64; 2])>> {
        self.multiplicative_closure(k)?;
        self.multiplicative_closure(m)?;
        self.multiplicative_closure(k + m)?;
        let (ck, cm, ckm) = (&self.closures[&k], &self.closures[&m], &self.closures[&(k + m)]);
        for (a, &wa) in ck.points.iter().zip(&ck.weights) {
            for (b, &wb) in cm.points.iter().zip(&cm.weights) {
                match ckm.weight_of([a[0] + b[0], a[1] + b[1]]) {
                    Some(w) if w >= wa + wb => {}
                    _ => return Ok(Some((*a, *b))),
                }
            }
        }
        Ok(None)
    }

    /// Parses `dim n` followed by one `coords... weight` line per point; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cur = LineCursor::new(text);
        let head = cur.keyed("dim")?;
        let dim = match head.as_slice() {
            [d] => d.parse::<usize>().map_err(|_| cur.err("dimension must be 1 or 2"))?,
            _ => return Err(cur.err("expected `dim n`")),
        };
        if dim != 1 && dim != 2 {
            return Err(cur.err("dimension must be 1 or 2"));
        }
        let (mut p1, mut w1) = (Vec::new(), Vec::new());
        while !cur.at_end() {
            let line = cur.next_line()?;
            let toks: Vec<i64> = line
                .split_whitespace()
                .map(|t| t.parse::<i64>().map_err(|_| cur.err(&format!("bad integer `{t}`"))))
                .collect::<Result<_>>()?;
            if toks.len() != dim + 1 {
                return Err(cur.err(&format!("expected {} integers per line", dim + 1)));
            }
            p1.push(if dim == 1 { [toks[0], 0] } else { [toks[0], toks[1]] });
            w1.push(toks[dim]);
        }
        let line = cur.line_no();
        Self::new(dim, p1, w1).map_err(|e| Error::Parse { line, message: e.to_string() })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("dim {}\n", self.dim);
        for (p, w) in self.p1.iter().zip(&self.w1) {
            if self.dim == 1 {
                let _ = writeln!(out, "{} {w}", p[0]);
            } else {
                let _ = writeln!(out, "{} {} {w}", p[0], p[1]);
            }
        }
        out
    }
}

/// One weight bin: multiplicity of `lambda` and the number of points with weight `>= lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HistogramRow {
    pub lambda: i64,
    pub dim_v: usize,
    pub dim_f: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WeightHistogram {
    pub k: usize,
    pub rows: Vec<HistogramRow>,
}

impl WeightHistogram {
    pub fn total(&self) -> usize {
        self.rows.first().map(|r| r.dim_f).unwrap_or(0)
    }

    /// Number of points with weight `>= lambda` (the filtration piece at `lambda`).
    pub fn dim_f(&self, lambda: i64) -> usize {
        self.rows.iter().find(|r| r.lambda >= lambda).map(|r| r.dim_f).unwrap_or(0)
    }

    /// `lambda,dim_V,dim_F` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,dim_V,dim_F\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.lambda, r.dim_v, r.dim_f);
        }
        out
    }
}

/// Weight multiplicities at degree `k` and their cumulative sums from above.
pub fn weight_histogram(data: &mut WeightedLatticeData, k: usize) -> Result<WeightHistogram> {
    let c = data.multiplicative_closure(k)?;
    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for &w in &c.weights {
        *bins.entry(w).or_default() += 1;
    }
    let mut rows: Vec<HistogramRow> = bins.into_iter().map(|(lambda, dim_v)| HistogramRow { lambda, dim_v, dim_f: 0 }).collect();
    let mut acc = 0;
    for r in rows.iter_mut().rev() {
        acc += r.dim_v;
        r.dim_f = acc;
    }
    let counted = c.weights.len();
    for r in &rows {
        let direct = c.weights.iter().filter(|&&w| w >= r.lambda).count();
        if direct != r.dim_f {
            return Err(Error::Numerical(format!("histogram mismatch at weight {}", r.lambda)));
        }
    }
    if acc != counted {
        return Err(Error::Numerical("histogram does not account for every point".into()));
    }
    Ok(WeightHistogram { k, rows })
}

/// Base metric and dual box the model sections are built against.
#[derive(Debug, Clone, PartialEq)]
pub struct BergmanInstance {
    phi: ConvexGridFunction,
    dual: DualGrid,
}

/// Degree-`k` model sections `e_i(x) = <a_i/k, x> - phi*(a_i/k)` on the primal grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Sections {
    pub k: usize,
    pub weights: Vec<i64>,
    pub slopes: Vec<[f64; 2]>,
    /// `phi*(a_i / k)`.
    pub normalizers: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl Sections {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn section(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// `ln |I_k| / k`.
    pub fn lse_budget(&self) -> f64 {
        (self.len() as f64).ln() / self.k as f64
    }

    fn selected(&self, lambda: f64) -> Vec<usize> {
        let threshold = self.k as f64 * lambda;
        (0..self.len()).filter(|&i| self.weights[i] as f64 >= threshold).collect()
    }
}

impl BergmanInstance {
    pub fn new(phi: ConvexGridFunction, dual: DualGrid) -> Result<Self> {
        if !phi.is_finite_everywhere() {
            return domain("base metric must be finite");
        }
        if phi.grid().dim() != dual.grid().dim() {
            return domain("primal and dual grids differ in dimension");
        }
        Ok(Self { phi, dual })
    }

    pub fn phi(&self) -> &ConvexGridFunction {
        &self.phi
    }

    pub fn dual(&self) -> &DualGrid {
        &self.dual
    }

    /// `phi*(p)` at an arbitrary slope, by maximising over primal nodes.
    pub fn conjugate_at(&self, p: [f64; 2]) -> f64 {
        let g = self.phi.grid();
        let d = g.dim();
        (0..g.len())
            .map(|i| {
                let x = g.point(i);
                let dot = if d == 1 { x[0] * p[0] } else { x[0] * p[0] + x[1] * p[1] };
                dot - self.phi.value(i)
            })
            .fold(NEG_INF, f64::max)
    }

    /// Model sections for the closure at degree `k`.
    pub fn sections(&self, closure: &Closure) -> Result<Sections> {
        let k = closure.k as f64;
        let bbox = self.dual.grid().bbox();
        let d = self.phi.grid().dim();
        let slopes: Vec<[f64; 2]> = closure.points.iter().map(|a| [a[0] as f64 / k, a[1] as f64 / k]).collect();
        for (a, p) in closure.points.iter().zip(&slopes) {
            if (0..d).any(|j| p[j] < bbox.lower()[j] || p[j] > bbox.upper()[j]) {
                return domain(format!("normalized point {:?}/{} lies outside the dual box", &a[..d], closure.k));
            }
        }
        let normalizers: Vec<f64> = slopes.par_iter().map(|&p| self.conjugate_at(p)).collect();
        let g = self.phi.grid();
        let values = slopes
            .par_iter()
            .zip(&normalizers)
            .map(|(p, c)| {
                (0..g.len())
                    .map(|i| {
                        let x = g.point(i);
                        let dot = if d == 1 { x[0] * p[0] } else { x[0] * p[0] + x[1] * p[1] };
                        dot - c
                    })
                    .collect()
            })
            .collect();
        Ok(Sections { k: closure.k, weights: closure.weights.clone(), slopes, normalizers, values })
    }

    /// `max { e_i : l_i >= k lambda }`; identically `-inf` when nothing is selected.
    pub fn extremal_metric(&self, s: &Sections, lambda: f64) -> GridFunction {
        let sel = s.selected(lambda);
        let n = self.phi.grid().len();
        let vals = (0..n).map(|x| sel.iter().map(|&i| s.values[i][x]).fold(NEG_INF, f64::max)).collect();
        GridFunction::from_raw(self.phi.grid().clone(), vals)
    }

    /// `(1/k) ln sum exp(k e_i)` over `{l_i >= k lambda}`.
    pub fn bergman_metric(&self, s: &Sections, lambda: f64) -> GridFunction {
        let sel = s.selected(lambda);
        let k = s.k as f64;
        let n = self.phi.grid().len();
        let vals = (0..n)
            .map(|x| lse(sel.iter().map(|&i| k * s.values[i][x])) / k)
            .collect();
        GridFunction::from_raw(self.phi.grid().clone(), vals)
    }
}

/// Max-shifted log-sum-exp, summed in iteration order.
fn lse(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(NEG_INF, f64::max);
    if m == NEG_INF {
        return NEG_INF;
    }
    let s: f64 = terms.map(|v| (v - m).exp()).sum();
    m + s.ln()
}

/// `{j / k_max}` covering the normalized weights of every degree in `k_list`.
pub fn limit_lambda_grid(data: &WeightedLatticeData, k_list: &[usize]) -> Result<Vec<f64>> {
    let k_max = *k_list.iter().max().ok_or_else(|| Error::Domain("empty degree list".into()))?;
    let mut lo = f64::INFINITY;
    let mut hi = NEG_INF;
    for &k in k_list {
        let c = data.closure(k).ok_or_else(|| Error::Domain(format!("closure at degree {k} not computed")))?;
        for w in c.normalized_weights() {
            lo = lo.min(w);
            hi = hi.max(w);
        }
    }
    let km = k_max as f64;
    let (jlo, jhi) = ((lo * km).floor() as i64, (hi * km).ceil() as i64);
    Ok((jlo..=jhi).map(|j| j as f64 / km).collect())
}

/// Fekete-type limit: node-wise max over `k_list` of the extremal metrics,
/// convexified, on the grid `{j / k_max}`.
pub fn limit_curve(inst: &BergmanInstance, data: &mut WeightedLatticeData, k_list: &[usize]) -> Result<TestCurve> {
    for &k in k_list {
        data.multiplicative_closure(k)?;
    }
    let lambdas = limit_lambda_grid(data, k_list)?;
    let sections: Vec<Sections> = k_list
        .iter()
        .map(|&k| inst.sections(data.closure(k).expect("computed above")))
        .collect::<Result<_>>()?;
    let g = inst.phi.grid();
    let samples = lambdas
        .par_iter()
        .map(|&l| {
            let mut vals = vec![NEG_INF; g.len()];
            for s in &sections {
                let e = inst.extremal_metric(s, l);
                for (v, &x) in vals.iter_mut().zip(e.values()) {
                    *v = v.max(x);
                }
            }
            lower_convex_envelope(&GridFunction::from_raw(g.clone(), vals))
        })
        .collect::<Result<Vec<_>>>()?;
    let step = lambdas.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let tc = TestCurve::new(lambdas, samples)?;
    // Section slopes are discrete, so the sampled curve is concave up to one lambda step.
    let tol = tc.concavity_tol() + g.diameter() * step;
    Ok(tc.with_concavity_tol(tol))
}

/// `frame(t) = (1/k) ln sum_i exp(t l_i + k e_i)`.
pub fn phong_sturm_ray(inst: &BergmanInstance, s: &Sections, t_grid: &[f64]) -> Result<Ray> {
    let g = inst.phi.grid();
    let k = s.k as f64;
    let frames = t_grid
        .par_iter()
        .map(|&t| {
            let vals = (0..g.len())
                .map(|x| lse((0..s.len()).map(|i| t * s.weights[i] as f64 + k * s.values[i][x])) / k)
                .collect();
            ConvexGridFunction::trusted(GridFunction::from_raw(g.clone(), vals))
        })
        .collect();
    Ray::new(t_grid.to_vec(), frames, RaySource::PhongSturm { k: s.k, sections: s.len() })
}

/// Worst violation of `M <= (1/k) LSE(k a_i) <= M + ln|I|/k` over nodes, with
/// `a_i = t l_i / k + e_i` and `M = max_i a_i`. Zero when the sandwich holds.
pub fn lse_sandwich_violation(inst: &BergmanInstance, s: &Sections, t: f64) -> f64 {
    let g = inst.phi.grid();
    let k = s.k as f64;
    let budget = s.lse_budget();
    (0..g.len())
        .map(|x| {
            let terms = (0..s.len()).map(|i| t * s.weights[i] as f64 + k * s.values[i][x]);
            let m = terms.clone().fold(NEG_INF, f64::max) / k;
            let v = lse(terms) / k;
            (m - v).max(v - m - budget).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Per-t comparison of the Phong-Sturm ray with the ray of the maximal limit curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub k: usize,
    pub t: Vec<f64>,
    pub gap: Vec<f64>,
    pub bound: Vec<f64>,
}

impl EquivalenceReport {
    pub fn max_gap(&self) -> f64 {
        self.gap.iter().cloned().fold(0.0, f64::max)
    }

    pub fn within_bound(&self) -> bool {
        self.gap.iter().zip(&self.bound).all(|(g, b)| g <= b)
    }
}

/// Gap between the degree-`k` Phong-Sturm ray and the ray of the maximal
/// envelope of the limit curve over `k_list`; the bound is
/// `ln|I_k|/k + c_grid (h + dual spacing + lambda spacing)(1 + t)`.
pub fn equivalence_check(
    inst: &BergmanInstance,
    data: &mut WeightedLatticeData,
    k: usize,
    k_list: &[usize],
    t_grid: &[f64],
    c_grid: f64,
) -> Result<EquivalenceReport> {
    let limit = limit_curve(inst, data, k_list)?;
    let env = maximal_envelope(&inst.phi, &limit, &inst.dual)?;
    let hat = ray_from_curve(&env, t_grid)?;
    let s = inst.sections(data.multiplicative_closure(k)?)?;
    let ps = phong_sturm_ray(inst, &s, t_grid)?;
    let gap = compare_rays(&ps, &hat)?;
    let k_max = *k_list.iter().max().expect("limit_curve rejects an empty list") as f64;
    let spacing = inst.phi.grid().max_spacing() + inst.dual.grid().max_spacing() + 1.0 / k_max;
    let bound = t_grid.iter().map(|t| s.lse_budget() + c_grid * spacing * (1.0 + t)).collect();
    Ok(EquivalenceReport { k, t: t_grid.to_vec(), gap, bound })
}

/// Largest distance from a lambda-grid point in `(lambda_c - delta, lambda_c)`
/// to the nearest normalized weight at degree `k`.
pub fn weight_density_gap(data: &WeightedLatticeData, k: usize, lambdas: &[f64], delta: f64) -> Result<f64> {
    let c = data.closure(k).ok_or_else(|| Error::Domain(format!("closure at degree {k} not computed")))?;
    let w = c.normalized_weights();
    let lc = w.iter().cloned().fold(NEG_INF, f64::max);
    Ok(lambdas
        .iter()
        .filter(|&&l| l > lc - delta && l < lc)
        .map(|&l| w.iter().map(|&x| (x - l).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

/// Concave envelope of `(a/k, l_k(a)/k)` over the hull of the normalized points.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveTransformG {
    dim: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Negated heights: `g` is minus the lower hull of these.
    neg: Vec<f64>,
    hull_1d: Vec<usize>,
}

impl ConcaveTransformG {
    /// `g(p)`, or `None` outside the convex hull of the points.
    pub fn eval(&self, p: [f64; 2]) -> Result<Option<f64>> {
        if self.dim == 1 {
            return Ok(hull::eval_hull_1d(&self.xs, &self.neg, &self.hull_1d, p[0]).map(|v| -v));
        }
        let pts = LiftedPoints { xs: &self.xs, ys: &self.ys, heights: &self.neg };
        Ok(hull::lower_envelope_at(pts, p, None)?.map(|v| -v))
    }

    pub fn max(&self) -> f64 {
        self.neg.iter().map(|v| -v).fold(NEG_INF, f64::max)
    }

    /// Bounding box of the points.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let lo = [self.xs.iter().cloned().fold(f64::INFINITY, f64::min), self.ys.iter().cloned().fold(f64::INFINITY, f64::min)];
        let hi = [self.xs.iter().cloned().fold(NEG_INF, f64::max), self.ys.iter().cloned().fold(NEG_INF, f64::max)];
        (lo, hi)
    }

    /// `int g^p` over the hull: composite trapezoid in 1-D, cell midpoints in 2-D.
    pub fn integrate_power(&self, p: i32, mesh: usize) -> Result<f64> {
        let (lo, hi) = self.bounds();
        if self.dim == 1 {
            let w = hi[0] - lo[0];
            if w == 0.0 {
                return Ok(0.0);
            }
            let h = w / mesh as f64;
            let mut s = 0.0;
            for i in 0..=mesh {
                let x = if i == mesh { hi[0] } else { lo[0] + i as f64 * h };
                let v = self.eval([x, 0.0])?.unwrap_or(0.0).powi(p);
                s += if i == 0 || i == mesh { v / 2.0 } else { v };
            }
            return Ok(s * h);
        }
        let (hx, hy) = ((hi[0] - lo[0]) / mesh as f64, (hi[1] - lo[1]) / mesh as f64);
        if hx == 0.0 || hy == 0.0 {
            return Ok(0.0);
        }
        let rows: Vec<f64> = (0..mesh)
            .into_par_iter()
            .map(|i| {
                let mut s = 0.0;
                for j in 0..mesh {
                    let q = [lo[0] + (i as f64 + 0.5) * hx, lo[1] + (j as f64 + 0.5) * hy];
                    if let Some(v) = self.eval(q)? {
                        s += v.powi(p);
                    }
                }
                Ok(s)
            })
            .collect::<Result<_>>()?;
        Ok(rows.iter().sum::<f64>() * hx * hy)
    }
}

pub fn concave_transform_g(data: &mut WeightedLatticeData, k: usize) -> Result<ConcaveTransformG> {
    let dim = data.dim;
    let c = data.multiplicative_closure(k)?;
    let kf = k as f64;
    let xs: Vec<f64> = c.points.iter().map(|a| a[0] as f64 / kf).collect();
    let ys: Vec<f64> = c.points.iter().map(|a| a[1] as f64 / kf).collect();
    let neg: Vec<f64> = c.weights.iter().map(|&w| -(w as f64) / kf).collect();
    let hull_1d = if dim == 1 { hull::lower_hull_1d(&xs, &neg) } else { Vec::new() };
    Ok(ConcaveTransformG { dim, xs, ys, neg, hull_1d })
}

/// `((1/k^n) sum_i lbar_i^p, int g^p)` for `p` in `{1, 2}`.
pub fn moment_check(g: &ConcaveTransformG, data: &mut WeightedLatticeData, k: usize, p: u32) -> Result<(f64, f64)> {
    if p != 1 && p != 2 {
        return Err(Error::Unsupported(format!("moment order {p}; only 1 and 2 are implemented")));
    }
    let dim = data.dim as i32;
    let c = data.multiplicative_closure(k)?;
    let discrete = c.normalized_weights().iter().map(|w| w.powi(p as i32)).sum::<f64>() / (k as f64).powi(dim);
    let mesh = if data.dim == 1 { 4096 } else { 256 };
    Ok((discrete, g.integrate_power(p as i32, mesh)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn line(p: &[i64], w: &[i64]) -> WeightedLatticeData {
        WeightedLatticeData::new(1, p.iter().map(|&a| [a, 0]).collect(), w.to_vec()).unwrap()
    }

    #[test]
    fn additive_weights_close_to_identity() {
        let mut d = line(&[0, 1], &[0, 1]);
        let c = d.multiplicative_closure(5).unwrap();
        assert_eq!(c.len(), 6);
        for (a, w) in c.points.iter().zip(&c.weights) {
            assert_eq!(a[0], *w);
        }
        let mut neg = line(&[0, 1], &[0, -1]);
        let c = neg.multiplicative_closure(7).unwrap().clone();
        assert!(c.points.iter().zip(&c.weights).all(|(a, &w)| w == -a[0]));
        assert_eq!(neg.bound(), 1);
    }

    #[test]
    fn closure_matches_enumeration() {
        let mut d = line(&[0, 1, 2], &[0, 1, 1]);
        let c2 = d.multiplicative_closure(2).unwrap().clone();
        assert_eq!(c2.weight_of([2, 0]), Some(2));
        assert_eq!(c2.weight_of([4, 0]), Some(2));
        // Brute force over all ordered triples at degree 3.
        let c3 = d.multiplicative_closure(3).unwrap().clone();
        let (p, w) = ([0i64, 1, 2], [0i64, 1, 1]);
        let mut best = BTreeMap::new();
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    let e = best.entry(p[i] + p[j] + p[l]).or_insert(i64::MIN);
                    *e = (*e).max(w[i] + w[j] + w[l]);
                }
            }
        }
        for (a, v) in best {
            assert_eq!(c3.weight_of([a, 0]), Some(v));
        }
        assert_eq!(d.superadditivity_violation(1, 2).unwrap(), None);
    }

    #[test]
    fn size_cap_is_a_resource_error() {
        let mut d = WeightedLatticeData::new(2, vec![[0, 0], [1, 0], [0, 1]], vec![0, 0, 0]).unwrap().with_size_cap(50);
        assert!(matches!(d.multiplicative_closure(20), Err(Error::Resource(_))));
    }

    #[test]
    fn histogram_of_additive_weights() {
        let mut d = line(&[0, 1], &[0, 1]);
        let h = weight_histogram(&mut d, 2).unwrap();
        assert_eq!(h.rows.iter().map(|r| (r.lambda, r.dim_v)).collect::<Vec<_>>(), vec![(0, 1), (1, 1), (2, 1)]);
        assert_eq!(h.dim_f(1), 2);
        assert_eq!(h.to_csv(), "lambda,dim_V,dim_F\n0,1,3\n1,1,2\n2,1,1\n");
        let mut z = line(&[0, 1], &[0, 0]);
        let h = weight_histogram(&mut z, 6).unwrap();
        assert_eq!(h.rows.len(), 1);
        assert_eq!(h.total(), 7);
    }

    #[test]
    fn weight_file_round_trip() {
        let text = "# degree-1 data\ndim 2\n0 0 0\n1 0 2\n0 1 -1\n";
        let d = WeightedLatticeData::from_text(text).unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(WeightedLatticeData::from_text(&d.to_text()).unwrap(), d);
        match WeightedLatticeData::from_text("dim 1\n0 0\n1 x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    fn quadratic_instance() -> BergmanInstance {
        let g = Grid::interval(-2.0, 2.0, 65).unwrap();
        let phi = ConvexGridFunction::certify(GridFunction::from_fn(g.clone(), |x| x[0] * x[0] / 2.0).unwrap()).unwrap();
        let dual = DualGrid::covering(&phi, &[65]).unwrap();
        BergmanInstance::new(phi, dual).unwrap()
    }

    #[test]
    fn extremal_metric_by_direct_evaluation() {
        let inst = quadratic_instance();
        let mut d = line(&[0, 1], &[0, 1]);
        let s = inst.sections(d.multiplicative_closure(4).unwrap()).unwrap();
        let e = inst.extremal_metric(&s, 0.5);
        let g = inst.phi().grid();
        for i in 0..g.len() {
            let x = g.point(i)[0];
            let direct = (2..=4)
                .map(|a| {
                    let p = a as f64 / 4.0;
                    // phi*(p) by enumeration over primal nodes.
                    let star = (0..g.len()).map(|j| g.point(j)[0] * p - inst.phi().value(j)).fold(NEG_INF, f64::max);
                    p * x - star
                })
                .fold(NEG_INF, f64::max);
            assert_eq!(e.value(i), direct);
        }
        assert!(inst.extremal_metric(&s, 1.5).is_identically_neg_inf());
        assert!(inst.bergman_metric(&s, 1.5).is_identically_neg_inf());
        let single = inst.bergman_metric(&s, 1.0);
        let single_e = inst.extremal_metric(&s, 1.0);
        assert!(single.sup_distance(&single_e).unwrap() < 1e-12);
    }

    #[test]
    fn bergman_sandwich_and_decrease() {
        let inst = quadratic_instance();
        let mut d = line(&[0, 1], &[0, 1]);
        let s = inst.sections(d.multiplicative_closure(16).unwrap()).unwrap();
        let full_b = inst.bergman_metric(&s, -1.0);
        let full_e = inst.extremal_metric(&s, -1.0);
        for (b, e) in full_b.values().iter().zip(full_e.values()) {
            assert!(*e <= *b + 1e-12 && *b <= e + s.lse_budget() + 1e-12);
        }
        let b2 = inst.bergman_metric(&s, 0.5);
        assert!(b2.values().iter().zip(full_b.values()).all(|(a, b)| a <= b));
        for t in [0.0, 0.5, 1.0] {
            assert!(lse_sandwich_violation(&inst, &s, t) <= 1e-12);
        }
    }

    #[test]
    fn trivial_weights_translate_the_bergman_metric() {
        let inst = quadratic_instance();
        let mut d = line(&[0, 1], &[1, 1]);
        let s = inst.sections(d.multiplicative_closure(8).unwrap()).unwrap();
        let ray = phong_sturm_ray(&inst, &s, &[0.0, 0.5, 1.0]).unwrap();
        let full = inst.bergman_metric(&s, NEG_INF);
        assert!(ray.frame(0).sup_distance(&full).unwrap() < 1e-12);
        for (t, f) in ray.t_grid().iter().zip(ray.frames()) {
            assert!(f.sup_distance(&full.shift(*t).unwrap()).unwrap() < 1e-12);
        }
    }

    #[test]
    fn concave_transform_moments() {
        let mut d = line(&[0, 1], &[0, 1]);
        let g = concave_transform_g(&mut d, 32).unwrap();
        assert_eq!(g.eval([0.25, 0.0]).unwrap(), Some(0.25));
        assert_eq!(g.eval([1.5, 0.0]).unwrap(), None);
        let (m1, i1) = moment_check(&g, &mut d, 32, 1).unwrap();
        assert!((m1 - 33.0 / 64.0).abs() < 1e-15);
        assert!((i1 - 0.5).abs() < 1e-12);
        assert!(matches!(moment_check(&g, &mut d, 32, 3), Err(Error::Unsupported(_))));
        let mut z = line(&[0, 1], &[0, 0]);
        let gz = concave_transform_g(&mut z, 8).unwrap();
        assert_eq!(moment_check(&gz, &mut z, 8, 2).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn concave_transform_2d_is_the_upper_hull() {
        let mut d = WeightedLatticeData::new(2, vec![[0, 0], [1, 0], [0, 1]], vec![0, 2, 1]).unwrap();
        let g = concave_transform_g(&mut d, 4).unwrap();
        // Weights are additive, so g is the linear function 2p + q on the simplex.
        let v = g.eval([0.25, 0.5]).unwrap().unwrap();
        assert!((v - 1.0).abs() < 1e-9);
        assert_eq!(g.eval([0.8, 0.8]).unwrap(), None);
        // int over the unit simplex of 2p + q is 1/2.
        assert!((g.integrate_power(1, 256).unwrap() - 0.5).abs() < 1e-2);
    }
}
