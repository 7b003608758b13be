//! Discrete Legendre-Fenchel transform.
//!
//! For a function `f` on a primal grid and a target grid of slopes,
//!
//! ```text
//! f*(y) = max_x { <x, y> - f(x) }     over primal nodes x.
//! ```
//!
//! Two evaluators compute the same maximum over the same finite set:
//! a brute-force scan, and a sweep that transforms one axis at a time
//! (`max_x0 { x0*y0 + max_x1 { x1*y1 - f } }`), each 1-D pass using the
//! monotonicity of the maximiser in the slope. Both evaluate the objective as
//! `x0*y0 + (x1*y1 - f)` so the results agree bit for bit; ties go to the
//! lowest row-major primal index.
//!
//! The +inf values a conjugate takes off the subgradient set are never
//! stored: transforms are only evaluated on a chosen slope box.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::grid::{ConvexGridFunction, Grid, GridBox, GridFunction, LineCursor, NEG_INF};
use crate::hull;

/// Marker for "no maximiser" (every source node excluded).
pub const NO_ARGMAX: usize = usize::MAX;

/// Grid over a box of slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGrid {
    grid: Grid,
}

impl DualGrid {
    pub fn new(grid: Grid) -> Self {
        Self { grid }
    }

    /// Default dual grid for `f`: per axis, the range of forward differences
    /// padded by one dual spacing on each side, with `nodes_per_axis[i] >= 4`.
    pub fn covering(f: &GridFunction, nodes_per_axis: &[usize]) -> Result<Self> {
        let ranges = f.slope_range().ok_or_else(|| Error::Domain("function has no finite slopes".into()))?;
        if nodes_per_axis.len() != ranges.len() {
            return domain("dual node counts must match the primal dimension");
        }
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for (&(lo, hi), &m) in ranges.iter().zip(nodes_per_axis) {
            if m < 4 {
                return domain("a covering dual grid needs at least 4 nodes per axis");
            }
            let mut width = hi - lo;
            let (mut lo, mut hi) = (lo, hi);
            if width <= 1e-9 * (1.0 + lo.abs() + hi.abs()) {
                let mid = 0.5 * (lo + hi);
                lo = mid - 0.5;
                hi = mid + 0.5;
                width = 1.0;
            }
            let pad = width / (m - 3) as f64;
            lower.push(lo - pad);
            upper.push(hi + pad);
        }
        Ok(Self { grid: Grid::new(GridBox::new(&lower, &upper)?, nodes_per_axis)? })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Checks that the dual box contains every forward-difference slope of `f`.
    pub fn check_covers(&self, f: &GridFunction) -> Result<()> {
        let Some(ranges) = f.slope_range() else { return Ok(()) };
        let b = self.grid.bbox();
        for (axis, (lo, hi)) in ranges.into_iter().enumerate() {
            let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            if lo < b.lower()[axis] - slack || hi > b.upper()[axis] + slack {
                return domain(format!(
                    "dual box [{}, {}] on axis {axis} does not contain slope range [{lo}, {hi}]",
                    b.lower()[axis],
                    b.upper()[axis]
                ));
            }
        }
        Ok(())
    }
}

/// Boolean mask over the nodes of a dual grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeRegion {
    grid: Grid,
    mask: Vec<bool>,
}

impl SlopeRegion {
    pub fn new(grid: Grid, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.len() {
            return domain("mask length does not match grid");
        }
        Ok(Self { grid, mask })
    }

    pub fn full(grid: &Grid) -> Self {
        Self { grid: grid.clone(), mask: vec![true; grid.len()] }
    }

    pub fn empty(grid: &Grid) -> Self {
        Self { grid: grid.clone(), mask: vec![false; grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, index: usize) -> bool {
        self.mask[index]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    /// Node count times the dual cell volume.
    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn intersect(&self, other: &SlopeRegion) -> Result<SlopeRegion> {
        if self.grid != other.grid {
            return domain("slope regions live on different grids");
        }
        let mask = self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect();
        Ok(Self { grid: self.grid.clone(), mask })
    }

    pub fn is_subset_of(&self, other: &SlopeRegion) -> bool {
        self.grid == other.grid && self.mask.iter().zip(&other.mask).all(|(a, b)| !*a || *b)
    }

    /// All grid nodes inside the convex hull of the region's nodes.
    pub fn convex_closure(&self) -> SlopeRegion {
        let pts: Vec<[i64; 2]> = self.indices().map(|i| to_i64(self.grid.multi_index(i))).collect();
        let hull = hull::convex_hull_i64(&pts);
        let mask = (0..self.grid.len())
            .map(|i| self.mask[i] || hull::in_convex_hull_i64(&hull, to_i64(self.grid.multi_index(i))))
            .collect();
        SlopeRegion { grid: self.grid.clone(), mask }
    }

    /// True when the mask equals its own convex closure.
    pub fn is_discretely_convex(&self) -> bool {
        self.convex_closure() == *self
    }

    /// Every node of `self` within one grid cell (per axis) of some node of the Minkowski sum `a + b`.
    pub fn within_cell_of_sum(&self, a: &SlopeRegion, b: &SlopeRegion) -> bool {
        let g = &self.grid;
        let sums: Vec<[f64; 2]> = a
            .indices()
            .flat_map(|i| {
                let pa = a.grid.point(i);
                b.indices().map(move |j| {
                    let pb = b.grid.point(j);
                    [pa[0] + pb[0], pa[1] + pb[1]]
                })
            })
            .collect();
        let h = g.spacing();
        self.indices().all(|i| {
            let p = g.point(i);
            sums.iter().any(|s| (0..g.dim()).all(|ax| (p[ax] - s[ax]).abs() <= h[ax] * (1.0 + 1e-9)))
        })
    }

    /// Grid header followed by one row of `0`/`1` characters per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("sloperegion\n");
        self.grid.write_header(&mut out);
        out.push_str("mask\n");
        let row = *self.grid.nodes_per_axis().last().unwrap();
        for chunk in self.mask.chunks(row) {
            let line: String = chunk.iter().map(|&b| if b { '1' } else { '0' }).collect();
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cur = LineCursor::new(text);
        cur.expect("sloperegion")?;
        let grid = Grid::read_header(&mut cur)?;
        cur.expect("mask")?;
        let mut mask = Vec::with_capacity(grid.len());
        while mask.len() < grid.len() {
            let line = cur.next_line()?;
            for ch in line.chars().filter(|c| !c.is_whitespace()) {
                match ch {
                    '0' => mask.push(false),
                    '1' => mask.push(true),
                    _ => return Err(cur.err("mask characters must be 0 or 1")),
                }
            }
        }
        if mask.len() != grid.len() || !cur.at_end() {
            return Err(cur.err("mask size does not match grid"));
        }
        Ok(Self { grid, mask })
    }
}

fn to_i64(m: [usize; 2]) -> [i64; 2] {
    [m[0] as i64, m[1] as i64]
}

/// Conjugate values together with the maximising source node per target node.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub values: Vec<f64>,
    pub argmax: Vec<usize>,
}

fn check_source(src: &Grid, vals: &[f64], dst: &Grid) -> Result<()> {
    if src.dim() != dst.dim() {
        return domain("source and target grids differ in dimension");
    }
    if vals.len() != src.len() {
        return domain("value count does not match source grid");
    }
    if vals.iter().any(|&v| v == NEG_INF) {
        return domain("cannot transform a function taking -inf (its conjugate is +inf)");
    }
    Ok(())
}

/// Brute-force transform. Source entries equal to `+inf` are excluded from the
/// maximum. Targets with no admissible source get `-inf` and [`NO_ARGMAX`].
pub fn conjugate_brute(src: &Grid, vals: &[f64], dst: &Grid) -> Result<Transform> {
    check_source(src, vals, dst)?;
    let pts: Vec<[f64; 2]> = (0..src.len()).map(|i| src.point(i)).collect();
    let dim = src.dim();
    let (values, argmax): (Vec<f64>, Vec<usize>) = (0..dst.len())
        .into_par_iter()
        .map(|k| {
            let y = dst.point(k);
            let mut best = NEG_INF;
            let mut best_inner = NEG_INF;
            let mut best_row = usize::MAX;
            let mut arg = NO_ARGMAX;
            for (i, (x, &f)) in pts.iter().zip(vals).enumerate() {
                if f == f64::INFINITY {
                    continue;
                }
                if dim == 1 {
                    let v = x[0] * y[0] - f;
                    if v > best {
                        best = v;
                        arg = i;
                    }
                } else {
                    // Rows are compared on the full sum; within a row the
                    // unrounded inner term decides, matching the separable sweep.
                    let inner = x[1] * y[1] - f;
                    let v = x[0] * y[0] + inner;
                    let row = src.multi_index(i)[0];
                    if v > best || (v == best && row == best_row && inner > best_inner) {
                        best = v;
                        best_inner = inner;
                        best_row = row;
                        arg = i;
                    }
                }
            }
            (best, arg)
        })
        .unzip();
    Ok(Transform { values, argmax })
}

/// `out[k] = max_j (xs[j]*ys[k] - g[j])` over `active` indices, lowest index on ties.
fn sweep_1d(xs: &[f64], g: &[f64], active: &[usize], ys: &[f64], out: &mut [f64], arg: &mut [usize]) {
    if active.is_empty() {
        out.fill(NEG_INF);
        arg.fill(NO_ARGMAX);
        return;
    }
    // Explicit stack: (target lo, target hi, active lo, active hi), inclusive.
    let mut stack = vec![(0usize, ys.len() - 1, 0usize, active.len() - 1)];
    while let Some((klo, khi, jlo, jhi)) = stack.pop() {
        let mid = klo + (khi - klo) / 2;
        let y = ys[mid];
        let mut best = NEG_INF;
        let mut best_a = jlo;
        for (a, &j) in active.iter().enumerate().take(jhi + 1).skip(jlo) {
            let v = xs[j] * y - g[j];
            if v > best {
                best = v;
                best_a = a;
            }
        }
        out[mid] = best;
        arg[mid] = active[best_a];
        if mid > klo {
            stack.push((klo, mid - 1, jlo, best_a));
        }
        if mid < khi {
            stack.push((mid + 1, khi, best_a, jhi));
        }
    }
}

/// Axis-separable transform; same contract as [`conjugate_brute`].
pub fn conjugate_fast(src: &Grid, vals: &[f64], dst: &Grid) -> Result<Transform> {
    check_source(src, vals, dst)?;
    if src.dim() == 1 {
        let xs = src.axis_coords(0);
        let ys = dst.axis_coords(0);
        let active: Vec<usize> = (0..vals.len()).filter(|&j| vals[j] != f64::INFINITY).collect();
        let mut values = vec![0.0; ys.len()];
        let mut argmax = vec![0; ys.len()];
        sweep_1d(&xs, vals, &active, &ys, &mut values, &mut argmax);
        return Ok(Transform { values, argmax });
    }
    let (n0, n1) = (src.nodes_per_axis()[0], src.nodes_per_axis()[1]);
    let (m0, m1) = (dst.nodes_per_axis()[0], dst.nodes_per_axis()[1]);
    let x0 = src.axis_coords(0);
    let x1 = src.axis_coords(1);
    let y0 = dst.axis_coords(0);
    let y1 = dst.axis_coords(1);
    // Inner pass along axis 1: h[i0][k1] = max_i1 (x1*y1 - f).
    let inner: Vec<(Vec<f64>, Vec<usize>)> = (0..n0)
        .into_par_iter()
        .map(|i0| {
            let row = &vals[i0 * n1..(i0 + 1) * n1];
            let active: Vec<usize> = (0..n1).filter(|&j| row[j] != f64::INFINITY).collect();
            let mut h = vec![0.0; m1];
            let mut a = vec![0; m1];
            sweep_1d(&x1, row, &active, &y1, &mut h, &mut a);
            (h, a)
        })
        .collect();
    // Outer pass along axis 0 on g = -h: x0*y0 - (-h) = x0*y0 + h.
    let columns: Vec<(Vec<f64>, Vec<usize>)> = (0..m1)
        .into_par_iter()
        .map(|k1| {
            let g: Vec<f64> = inner.iter().map(|(h, _)| -h[k1]).collect();
            let active: Vec<usize> = (0..n0).filter(|&i| g[i] != f64::INFINITY).collect();
            let mut out = vec![0.0; m0];
            let mut arg = vec![0; m0];
            sweep_1d(&x0, &g, &active, &y0, &mut out, &mut arg);
            (out, arg)
        })
        .collect();
    let mut values = vec![0.0; m0 * m1];
    let mut argmax = vec![NO_ARGMAX; m0 * m1];
    for (k1, (out, arg)) in columns.into_iter().enumerate() {
        for k0 in 0..m0 {
            values[k0 * m1 + k1] = out[k0];
            let i0 = arg[k0];
            if i0 != NO_ARGMAX {
                argmax[k0 * m1 + k1] = i0 * n1 + inner[i0].1[k1];
            }
        }
    }
    Ok(Transform { values, argmax })
}

fn finite_input(f: &GridFunction) -> Result<()> {
    if f.is_identically_neg_inf() {
        return domain("the identically -inf function has conjugate +inf everywhere");
    }
    if f.has_neg_inf() {
        return domain("cannot transform a function taking -inf (its conjugate is +inf)");
    }
    Ok(())
}

/// Legendre transform of `f` on the dual grid (separable sweep).
pub fn legendre(f: &GridFunction, dual: &DualGrid) -> Result<ConvexGridFunction> {
    Ok(legendre_witness(f, dual)?.0)
}

/// Legendre transform by exhaustive search; the oracle for [`legendre`].
pub fn legendre_brute(f: &GridFunction, dual: &DualGrid) -> Result<ConvexGridFunction> {
    finite_input(f)?;
    let t = conjugate_brute(f.grid(), f.values(), &dual.grid)?;
    Ok(ConvexGridFunction::trusted(GridFunction::from_raw(dual.grid.clone(), t.values)))
}

/// Legendre transform together with the maximising primal node per dual node.
pub fn legendre_witness(f: &GridFunction, dual: &DualGrid) -> Result<(ConvexGridFunction, Vec<usize>)> {
    finite_input(f)?;
    let t = conjugate_fast(f.grid(), f.values(), &dual.grid)?;
    Ok((ConvexGridFunction::trusted(GridFunction::from_raw(dual.grid.clone(), t.values)), t.argmax))
}

/// Transform of a dual-grid function back onto `primal`, using only the
/// dual nodes in `region`: `max_{y in region} { <x, y> - g(y) }`.
/// An empty region gives the identically `-inf` function.
pub fn restricted_conjugate(g: &GridFunction, region: &SlopeRegion, primal: &Grid) -> Result<ConvexGridFunction> {
    if g.grid() != region.grid() {
        return domain("region and function live on different dual grids");
    }
    let vals: Vec<f64> = g
        .values()
        .iter()
        .zip(region.mask())
        .map(|(&v, &m)| if m { v } else { f64::INFINITY })
        .collect();
    if vals.iter().any(|&v| v == NEG_INF) {
        return domain("dual function takes -inf inside the region");
    }
    let t = conjugate_fast(g.grid(), &vals, primal)?;
    Ok(ConvexGridFunction::trusted(GridFunction::from_raw(primal.clone(), t.values)))
}

/// `legendre` applied twice, landing back on the primal grid.
pub fn biconjugate(f: &GridFunction, dual: &DualGrid) -> Result<ConvexGridFunction> {
    let star = legendre(f, dual)?;
    restricted_conjugate(&star, &SlopeRegion::full(&dual.grid), f.grid())
}

/// Per dual node, a maximising interior primal node if one attains the full
/// maximum, else [`NO_ARGMAX`]. Ties count: an affine piece whose slope is a
/// dual node is attained at every node of that piece.
pub(crate) fn interior_witness(f: &GridFunction, dual: &DualGrid) -> Result<Vec<usize>> {
    finite_input(f)?;
    let primal = f.grid();
    let full = conjugate_fast(primal, f.values(), &dual.grid)?;
    let masked: Vec<f64> = (0..primal.len())
        .map(|i| if primal.is_interior(i) { f.value(i) } else { f64::INFINITY })
        .collect();
    let inner = conjugate_fast(primal, &masked, &dual.grid)?;
    Ok(inner
        .argmax
        .iter()
        .zip(inner.values.iter().zip(&full.values))
        .map(|(&a, (&vi, &vf))| if a != NO_ARGMAX && vi == vf { a } else { NO_ARGMAX })
        .collect())
}

/// Numerical subgradient set: dual nodes whose maximum is attained at an
/// interior primal node, closed under discrete convex hull.
pub fn subgradient_range(f: &GridFunction, dual: &DualGrid) -> Result<SlopeRegion> {
    let witness = interior_witness(f, dual)?;
    let mask = witness.iter().map(|&a| a != NO_ARGMAX).collect();
    Ok(SlopeRegion { grid: dual.grid.clone(), mask }.convex_closure())
}

/// `{y in within : u(y) >= lambda}` for `u` concave on its finite support.
/// `tol` is the allowed concavity defect.
pub fn superlevel_of_concave(u: &GridFunction, lambda: f64, within: &SlopeRegion, tol: f64) -> Result<SlopeRegion> {
    if u.grid() != within.grid() {
        return domain("u and region live on different grids");
    }
    check_concave_on_support(u, tol)?;
    Ok(superlevel(u, lambda, within))
}

pub(crate) fn superlevel(u: &GridFunction, lambda: f64, within: &SlopeRegion) -> SlopeRegion {
    let mask = u.values().iter().zip(within.mask()).map(|(&v, &m)| m && v.is_finite() && v >= lambda).collect();
    SlopeRegion { grid: within.grid.clone(), mask }
}

/// Checks that `-u` is convex (within `tol`) on the nodes where `u` is finite.
pub fn check_concave_on_support(u: &GridFunction, tol: f64) -> Result<()> {
    let g = u.grid();
    let support: Vec<usize> = (0..g.len()).filter(|&i| u.value(i).is_finite()).collect();
    if support.is_empty() {
        return Ok(());
    }
    let neg: Vec<f64> = support.iter().map(|&i| -u.value(i)).collect();
    let env: Vec<f64> = if g.dim() == 1 {
        let xs: Vec<f64> = support.iter().map(|&i| g.point(i)[0]).collect();
        hull::lower_envelope_1d(&xs, &neg)
    } else {
        let xs: Vec<f64> = support.iter().map(|&i| g.point(i)[0]).collect();
        let ys: Vec<f64> = support.iter().map(|&i| g.point(i)[1]).collect();
        let queries: Vec<[f64; 2]> = support.iter().map(|&i| g.point(i)).collect();
        let pts = hull::LiftedPoints { xs: &xs, ys: &ys, heights: &neg };
        hull::lower_envelope_2d(pts, &queries, |_| None)?
            .into_iter()
            .zip(&neg)
            .map(|(e, &v)| e.unwrap_or(v))
            .collect()
    };
    let (worst, gap) = neg
        .iter()
        .zip(&env)
        .enumerate()
        .map(|(k, (v, e))| (k, v - e))
        .fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
    if gap > tol {
        return Err(Error::Validation {
            message: format!("u is not concave: defect {gap:e} at dual node {}", support[worst]),
            node: Some(support[worst]),
        });
    }
    Ok(())
}
