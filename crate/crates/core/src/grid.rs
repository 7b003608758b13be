//! Uniform grids on boxes, extended-real grid functions and convex envelopes.
//!
//! A [`GridFunction`] stores one `f64` per node in row-major order (the last
//! axis varies fastest). The value `-inf` ([`NEG_INF`]) is the only
//! non-finite value allowed; `+inf` and NaN are rejected.
//!
//! # Text format
//!
//! ```text
//! gridfunction
//! dim 2
//! lower -1 0
//! upper 1 2
//! nodes 3 5
//! values
//! 0.5 0.25 -inf 1 2
//! ...one line per row of the last axis...
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so parsing
//! a written record gives back bit-identical doubles. Blank lines and text
//! after `#` are ignored.

use std::fmt::Write as _;


use crate::error::{domain, Error, Result};
use crate::hull::{self, LiftedPoints};

/// The `-inf` sentinel. It absorbs finite addition and loses every `max`.
pub const NEG_INF: f64 = f64::NEG_INFINITY;

/// Default magnitude cap on finite values.
pub const DEFAULT_VALUE_CAP: f64 = 1e12;

/// Axis-aligned box in one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl GridBox {
    pub fn new(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() || !(1..=2).contains(&lower.len()) {
            return domain("box must have matching lower/upper bounds in 1 or 2 dimensions");
        }
        for (a, b) in lower.iter().zip(upper) {
            if !a.is_finite() || !b.is_finite() || a >= b {
                return domain(format!("degenerate box axis [{a}, {b}]"));
            }
        }
        Ok(Self { lower: lower.to_vec(), upper: upper.to_vec() })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(&[a], &[b])
    }

    pub fn rect(x: (f64, f64), y: (f64, f64)) -> Result<Self> {
        Self::new(&[x.0, y.0], &[x.1, y.1])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
    }
}

/// Uniform tensor grid on a [`GridBox`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    bbox: GridBox,
    nodes: Vec<usize>,
    spacing: Vec<f64>,
}

impl Grid {
    pub fn new(bbox: GridBox, nodes_per_axis: &[usize]) -> Result<Self> {
        if nodes_per_axis.len() != bbox.dim() {
            return domain("nodes_per_axis must have one entry per box axis");
        }
        if nodes_per_axis.iter().any(|&n| n < 3) {
            return domain("need at least 3 nodes per axis");
        }
        let spacing = (0..bbox.dim())
            .map(|i| (bbox.upper[i] - bbox.lower[i]) / (nodes_per_axis[i] - 1) as f64)
            .collect();
        Ok(Self { bbox, nodes: nodes_per_axis.to_vec(), spacing })
    }

    /// Shorthand for a 1-D grid on `[a, b]`.
    pub fn interval(a: f64, b: f64, nodes: usize) -> Result<Self> {
        Self::new(GridBox::interval(a, b)?, &[nodes])
    }

    /// Shorthand for a 2-D grid on `[x0, x1] x [y0, y1]`.
    pub fn rect(x: (f64, f64), y: (f64, f64), nodes: (usize, usize)) -> Result<Self> {
        Self::new(GridBox::rect(x, y)?, &[nodes.0, nodes.1])
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn bbox(&self) -> &GridBox {
        &self.bbox
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn diameter(&self) -> f64 {
        self.bbox.diameter()
    }

    /// `lower[axis] + j * h[axis]`.
    #[inline]
    pub fn coord(&self, axis: usize, j: usize) -> f64 {
        self.bbox.lower[axis] + j as f64 * self.spacing[axis]
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.nodes[axis]).map(|j| self.coord(axis, j)).collect()
    }

    /// Per-axis indices of a flat node index (second entry 0 in 1-D).
    #[inline]
    pub fn multi_index(&self, index: usize) -> [usize; 2] {
        if self.dim() == 1 {
            [index, 0]
        } else {
            [index / self.nodes[1], index % self.nodes[1]]
        }
    }

    #[inline]
    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        if self.dim() == 1 {
            idx[0]
        } else {
            idx[0] * self.nodes[1] + idx[1]
        }
    }

    /// Node coordinates (second entry 0 in 1-D).
    #[inline]
    pub fn point(&self, index: usize) -> [f64; 2] {
        let m = self.multi_index(index);
        if self.dim() == 1 {
            [self.coord(0, m[0]), 0.0]
        } else {
            [self.coord(0, m[0]), self.coord(1, m[1])]
        }
    }

    /// True when the node is not on the boundary of the box.
    pub fn is_interior(&self, index: usize) -> bool {
        let m = self.multi_index(index);
        (0..self.dim()).all(|a| m[a] > 0 && m[a] + 1 < self.nodes[a])
    }

    /// Flat index of the node nearest to `p` (clamped to the box).
    pub fn nearest(&self, p: &[f64]) -> usize {
        let mut idx = [0usize; 2];
        for (a, slot) in idx.iter_mut().enumerate().take(self.dim()) {
            let r = ((p[a] - self.bbox.lower[a]) / self.spacing[a]).round();
            *slot = r.clamp(0.0, (self.nodes[a] - 1) as f64) as usize;
        }
        self.flat_index(idx)
    }

    pub(crate) fn write_header(&self, out: &mut String) {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "dim {}", self.dim());
        let _ = writeln!(out, "lower {}", join(&self.bbox.lower));
        let _ = writeln!(out, "upper {}", join(&self.bbox.upper));
        let nodes: Vec<String> = self.nodes.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(out, "nodes {}", nodes.join(" "));
    }

    /// Parses the `dim/lower/upper/nodes` header from a line cursor.
    pub(crate) fn read_header(lines: &mut LineCursor<'_>) -> Result<Self> {
        let dim: usize = lines.keyed("dim")?.first().copied().ok_or_else(|| lines.err("missing dim"))?.parse().map_err(|_| lines.err("bad dim"))?;
        let lower = lines.keyed_floats("lower")?;
        let upper = lines.keyed_floats("upper")?;
        let nodes: Vec<usize> = lines
            .keyed("nodes")?
            .iter()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| lines.err("bad node count"))?;
        if lower.len() != dim || upper.len() != dim || nodes.len() != dim {
            return Err(lines.err("header arity does not match dim"));
        }
        let line = lines.line_no();
        let bbox = GridBox::new(&lower, &upper).map_err(|e| Error::Parse { line, message: e.to_string() })?;
        Grid::new(bbox, &nodes).map_err(|e| Error::Parse { line, message: e.to_string() })
    }
}

/// Iterator over meaningful lines of a text record, tracking line numbers.
pub(crate) struct LineCursor<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> LineCursor<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Self { lines, pos: 0 }
    }

    pub(crate) fn line_no(&self) -> usize {
        self.lines.get(self.pos.saturating_sub(1)).map(|l| l.0).unwrap_or(0)
    }

    pub(crate) fn err(&self, msg: &str) -> Error {
        Error::Parse { line: self.line_no(), message: msg.to_string() }
    }

    pub(crate) fn next_line(&mut self) -> Result<&'a str> {
        let l = self.lines.get(self.pos).ok_or(Error::Parse {
            line: self.lines.last().map(|l| l.0).unwrap_or(0),
            message: "unexpected end of input".into(),
        })?;
        self.pos += 1;
        Ok(l.1)
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.lines.len()
    }

    pub(crate) fn expect(&mut self, word: &str) -> Result<()> {
        let l = self.next_line()?;
        if l != word {
            return Err(self.err(&format!("expected `{word}`, found `{l}`")));
        }
        Ok(())
    }

    pub(crate) fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let l = self.next_line()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(self.err(&format!("expected `{key}`")));
        }
        Ok(it.collect())
    }

    pub(crate) fn keyed_floats(&mut self, key: &str) -> Result<Vec<f64>> {
        let toks = self.keyed(key)?;
        toks.iter().map(|t| parse_value(t).ok_or_else(|| self.err(&format!("bad number `{t}`")))).collect()
    }
}

pub(crate) fn parse_value(tok: &str) -> Option<f64> {
    if tok == "-inf" {
        return Some(NEG_INF);
    }
    tok.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub(crate) fn format_value(v: f64) -> String {
    if v == NEG_INF {
        "-inf".to_string()
    } else {
        format!("{v:?}")
    }
}

/// Extended-real function sampled at the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    neg_inf: bool,
}

impl GridFunction {
    /// Validates values against the default magnitude cap.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::with_cap(grid, values, DEFAULT_VALUE_CAP)
    }

    pub fn with_cap(grid: Grid, values: Vec<f64>, cap: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return domain(format!("expected {} values, got {}", grid.len(), values.len()));
        }
        for (i, &v) in values.iter().enumerate() {
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::Validation { message: format!("value {v} at node {i} is not allowed"), node: Some(i) });
            }
            if v.is_finite() && v.abs() > cap {
                return Err(Error::Validation { message: format!("|{v}| at node {i} exceeds cap {cap}"), node: Some(i) });
            }
        }
        Ok(Self::from_raw(grid, values))
    }

    /// Trusted constructor for values produced by this crate.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| !v.is_nan() && *v != f64::INFINITY));
        let neg_inf = values.iter().all(|&v| v == NEG_INF);
        Self { grid, values, neg_inf }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let d = grid.dim();
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..d])).collect();
        Self::new(grid, values)
    }

    pub fn neg_inf(grid: Grid) -> Self {
        let n = grid.len();
        Self { grid, values: vec![NEG_INF; n], neg_inf: true }
    }

    pub fn constant(grid: Grid, c: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![c; n])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn is_identically_neg_inf(&self) -> bool {
        self.neg_inf
    }

    pub fn has_neg_inf(&self) -> bool {
        self.values.iter().any(|&v| v == NEG_INF)
    }

    pub fn is_finite_everywhere(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return domain("grid mismatch");
        }
        Ok(())
    }

    /// Node-wise maximum.
    pub fn pointwise_max(&self, other: &GridFunction) -> Result<GridFunction> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a.max(*b)).collect();
        Ok(Self::from_raw(self.grid.clone(), values))
    }

    /// Node-wise minimum.
    pub fn pointwise_min(&self, other: &GridFunction) -> Result<GridFunction> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a.min(*b)).collect();
        Ok(Self::from_raw(self.grid.clone(), values))
    }

    /// Adds `c` at every node; `-inf` stays `-inf`.
    pub fn shift(&self, c: f64) -> Result<GridFunction> {
        if !c.is_finite() {
            return domain("shift must be finite");
        }
        if c == 0.0 {
            return Ok(self.clone());
        }
        Self::new(self.grid.clone(), self.values.iter().map(|v| v + c).collect())
    }

    /// Largest `|f - g|` over nodes where both are finite. Nodes where exactly
    /// one side is `-inf` give `+inf`.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| match (a.is_finite(), b.is_finite()) {
                (true, true) => (a - b).abs(),
                (false, false) => 0.0,
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max))
    }

    /// `(min, max)` over finite values, `None` if there are none.
    pub fn finite_range(&self) -> Option<(f64, f64)> {
        let mut it = self.values.iter().filter(|v| v.is_finite());
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))))
    }

    /// Per-axis `(min, max)` of forward differences between finite neighbours.
    pub fn slope_range(&self) -> Option<Vec<(f64, f64)>> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(g.dim());
        for axis in 0..g.dim() {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..g.len() {
                let mut m = g.multi_index(i);
                if m[axis] + 1 >= g.nodes_per_axis()[axis] {
                    continue;
                }
                m[axis] += 1;
                let (a, b) = (self.values[i], self.values[g.flat_index(m)]);
                if a.is_finite() && b.is_finite() {
                    let d = (b - a) / g.spacing()[axis];
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
            if lo > hi {
                return None;
            }
            out.push((lo, hi));
        }
        Some(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("gridfunction\n");
        self.grid.write_header(&mut out);
        out.push_str("values\n");
        let row = *self.grid.nodes_per_axis().last().unwrap();
        for chunk in self.values.chunks(row) {
            let line: Vec<String> = chunk.iter().map(|&v| format_value(v)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cur = LineCursor::new(text);
        let f = Self::read_record(&mut cur)?;
        if !cur.at_end() {
            return Err(cur.err("trailing content after grid function"));
        }
        Ok(f)
    }

    pub(crate) fn read_record(cur: &mut LineCursor<'_>) -> Result<Self> {
        cur.expect("gridfunction")?;
        let grid = Grid::read_header(cur)?;
        cur.expect("values")?;
        let mut values = Vec::with_capacity(grid.len());
        while values.len() < grid.len() {
            let line = cur.next_line()?;
            for tok in line.split_whitespace() {
                values.push(parse_value(tok).ok_or_else(|| cur.err(&format!("bad value `{tok}`")))?);
            }
        }
        if values.len() != grid.len() {
            return Err(cur.err("too many values"));
        }
        let line = cur.line_no();
        Self::new(grid, values).map_err(|e| Error::Parse { line, message: e.to_string() })
    }
}

/// Outcome of a convexity test.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityVerdict {
    pub convex: bool,
    /// Node with the largest `f - envelope(f)`, and that gap, when not convex.
    pub witness: Option<(usize, f64)>,
}

/// A [`GridFunction`] certified to agree with its lower convex envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexGridFunction {
    inner: GridFunction,
    tol: f64,
}

impl std::ops::Deref for ConvexGridFunction {
    type Target = GridFunction;
    fn deref(&self) -> &GridFunction {
        &self.inner
    }
}

/// `1e-9 * (value range)`, floored at `1e-12`.
pub fn default_convex_tol(f: &GridFunction) -> f64 {
    let range = f.finite_range().map(|(a, b)| b - a).unwrap_or(0.0);
    (1e-9 * range).max(1e-12)
}

impl ConvexGridFunction {
    /// Certifies `f` with the default tolerance.
    pub fn certify(f: GridFunction) -> Result<Self> {
        let tol = default_convex_tol(&f);
        Self::certify_with(f, tol)
    }

    pub fn certify_with(f: GridFunction, tol: f64) -> Result<Self> {
        let verdict = is_convex(&f, tol)?;
        if !verdict.convex {
            let (node, gap) = verdict.witness.unwrap_or((0, f64::NAN));
            return Err(Error::Validation {
                message: format!("function is not convex: exceeds its envelope by {gap:e} at node {node}"),
                node: Some(node),
            });
        }
        Ok(Self { inner: f, tol })
    }

    /// Wraps a function that is convex by construction (maximum of affine functions, convex combination, ...).
    pub(crate) fn trusted(f: GridFunction) -> Self {
        let tol = default_convex_tol(&f);
        Self { inner: f, tol }
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn as_grid_function(&self) -> &GridFunction {
        &self.inner
    }

    pub fn into_inner(self) -> GridFunction {
        self.inner
    }
}

/// Largest convex minorant of `f`, sampled at the nodes.
///
/// A function taking `-inf` at any node has the identically `-inf` function as
/// its envelope. When `f` already agrees with its envelope up to rounding, `f`
/// itself is returned, which makes the operation exactly idempotent.
pub fn lower_convex_envelope(f: &GridFunction) -> Result<ConvexGridFunction> {
    if f.has_neg_inf() {
        return Ok(ConvexGridFunction::trusted(GridFunction::neg_inf(f.grid.clone())));
    }
    let g = &f.grid;
    let mut env = match g.dim() {
        1 => hull::lower_envelope_1d(&g.axis_coords(0), &f.values),
        _ => envelope_2d(f)?,
    };
    let scale = f.values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut max_gap = 0.0f64;
    for (e, &v) in env.iter_mut().zip(&f.values) {
        if *e > v {
            *e = v;
        }
        max_gap = max_gap.max(v - *e);
    }
    if max_gap <= 64.0 * f64::EPSILON * scale {
        return Ok(ConvexGridFunction::trusted(f.clone()));
    }
    Ok(ConvexGridFunction::trusted(GridFunction::from_raw(g.clone(), env)))
}

fn envelope_2d(f: &GridFunction) -> Result<Vec<f64>> {
    let g = &f.grid;
    let n = g.len();
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..n).map(|i| {
        let p = g.point(i);
        (p[0], p[1])
    }).unzip();
    let queries: Vec<[f64; 2]> = (0..n).map(|i| g.point(i)).collect();
    let pts = LiftedPoints { xs: &xs, ys: &ys, heights: &f.values };
    let (n0, n1) = (g.nodes_per_axis()[0], g.nodes_per_axis()[1]);
    let warm = |i: usize| {
        let [a, b] = g.multi_index(i);
        let a2 = if a + 1 < n0 { a + 1 } else { a - 1 };
        let b2 = if b + 1 < n1 { b + 1 } else { b - 1 };
        Some([i, g.flat_index([a2, b]), g.flat_index([a, b2])])
    };
    let out = hull::lower_envelope_2d(pts, &queries, warm)?;
    out.into_iter()
        .map(|v| v.ok_or_else(|| Error::Numerical("grid node outside its own hull".into())))
        .collect()
}

/// True iff `f` is within `tol` of its lower convex envelope at every finite
/// node. The identically `-inf` function counts as convex.
pub fn is_convex(f: &GridFunction, tol: f64) -> Result<ConvexityVerdict> {
    if f.is_identically_neg_inf() {
        return Ok(ConvexityVerdict { convex: true, witness: None });
    }
    if f.has_neg_inf() {
        let node = f.values.iter().position(|v| v.is_finite()).unwrap_or(0);
        return Ok(ConvexityVerdict { convex: false, witness: Some((node, f64::INFINITY)) });
    }
    let env = lower_convex_envelope(f)?;
    let (node, gap) = f
        .values
        .iter()
        .zip(env.values())
        .enumerate()
        .map(|(i, (v, e))| (i, v - e))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    if gap <= tol {
        Ok(ConvexityVerdict { convex: true, witness: None })
    } else {
        Ok(ConvexityVerdict { convex: false, witness: Some((node, gap)) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Grid {
        Grid::interval(-1.0, 1.0, n).unwrap()
    }

    #[test]
    fn make_grid_examples() {
        let g = line(5);
        assert_eq!(g.axis_coords(0), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.spacing(), &[0.5]);
        let g2 = Grid::rect((0.0, 1.0), (0.0, 2.0), (3, 5)).unwrap();
        assert_eq!(g2.len(), 15);
        assert_eq!(g2.spacing(), &[0.5, 0.5]);
        assert_eq!(g2.point(7), [0.5, 1.0]);
        assert!(matches!(GridBox::interval(1.0, 1.0), Err(Error::Domain(_))));
        assert!(Grid::interval(0.0, 1.0, 2).is_err());
    }

    #[test]
    fn envelope_three_point_examples() {
        let g = Grid::interval(-1.0, 1.0, 3).unwrap();
        let f = GridFunction::new(g.clone(), vec![0.0, -1.0, 0.0]).unwrap();
        assert_eq!(lower_convex_envelope(&f).unwrap().values(), f.values());
        let f = GridFunction::new(g, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(lower_convex_envelope(&f).unwrap().values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn envelope_keeps_convex_input() {
        let f = GridFunction::from_fn(line(5), |x| x[0] * x[0]).unwrap();
        assert_eq!(lower_convex_envelope(&f).unwrap().values(), f.values());
    }

    #[test]
    fn envelope_of_neg_inf() {
        let f = GridFunction::neg_inf(line(5));
        let e = lower_convex_envelope(&f).unwrap();
        assert!(e.is_identically_neg_inf());
        let mut v = vec![0.0; 5];
        v[2] = NEG_INF;
        let e = lower_convex_envelope(&GridFunction::new(line(5), v).unwrap()).unwrap();
        assert!(e.is_identically_neg_inf());
    }

    #[test]
    fn is_convex_examples() {
        let abs = GridFunction::from_fn(line(9), |x| x[0].abs()).unwrap();
        assert!(is_convex(&abs, 1e-12).unwrap().convex);
        let neg = GridFunction::from_fn(line(9), |x| -x[0] * x[0]).unwrap();
        let v = is_convex(&neg, 1e-12).unwrap();
        assert!(!v.convex);
        let (node, _) = v.witness.unwrap();
        assert!(line(9).is_interior(node));
        let tol = 1e-6;
        let mut vals = GridFunction::from_fn(line(9), |x| x[0] * x[0]).unwrap().into_values();
        vals[4] += 0.5 * tol;
        assert!(is_convex(&GridFunction::new(line(9), vals).unwrap(), tol).unwrap().convex);
    }

    #[test]
    fn max_and_shift() {
        let x = GridFunction::from_fn(line(5), |p| p[0]).unwrap();
        let mx = GridFunction::from_fn(line(5), |p| -p[0]).unwrap();
        let abs = GridFunction::from_fn(line(5), |p| p[0].abs()).unwrap();
        assert_eq!(x.pointwise_max(&mx).unwrap(), abs);
        assert_eq!(x.shift(0.0).unwrap(), x);
        assert_eq!(x.pointwise_max(&GridFunction::neg_inf(line(5))).unwrap(), x);
        assert!(x.pointwise_max(&GridFunction::neg_inf(line(7))).is_err());
        let s = GridFunction::neg_inf(line(5)).shift(3.0).unwrap();
        assert!(s.is_identically_neg_inf());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(GridFunction::new(line(3), vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(GridFunction::new(line(3), vec![0.0, f64::INFINITY, 0.0]).is_err());
        assert!(GridFunction::new(line(3), vec![0.0, 2e12, 0.0]).is_err());
        assert!(GridFunction::new(line(3), vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn envelope_2d_of_convex_and_bump() {
        let g = Grid::rect((-1.0, 1.0), (-1.0, 1.0), (9, 9)).unwrap();
        let f = GridFunction::from_fn(g.clone(), |p| p[0] * p[0] + 0.5 * p[0] * p[1] + p[1] * p[1]).unwrap();
        let e = lower_convex_envelope(&f).unwrap();
        assert_eq!(e.values(), f.values());
        let mut v = f.values().to_vec();
        v[40] += 1.0;
        let bumped = GridFunction::new(g, v).unwrap();
        let e2 = lower_convex_envelope(&bumped).unwrap();
        // f is even, so the best chord through the centre pairs p with -p.
        let chord = (0..81).filter(|&i| i != 40).map(|i| (f.value(i) + f.value(80 - i)) / 2.0).fold(f64::INFINITY, f64::min);
        assert!((e2.value(40) - chord).abs() < 1e-12);
        assert_eq!(chord, 0.0625);
        assert!(!is_convex(&bumped, 1e-9).unwrap().convex);
    }

    #[test]
    fn text_round_trip() {
        let g = Grid::rect((-1.0, 1.0), (0.0, 3.0), (3, 4)).unwrap();
        let mut f = GridFunction::from_fn(g, |p| (p[0] * 0.1).sin() + p[1] / 3.0).unwrap().into_values();
        f[5] = NEG_INF;
        let f = GridFunction::new(Grid::rect((-1.0, 1.0), (0.0, 3.0), (3, 4)).unwrap(), f).unwrap();
        let text = f.to_text();
        let back = GridFunction::from_text(&text).unwrap();
        assert_eq!(back.grid(), f.grid());
        for (a, b) in back.values().iter().zip(f.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(matches!(GridFunction::from_text("gridfunction\ndim 1\nlower 0\n"), Err(Error::Parse { .. })));
    }
}
