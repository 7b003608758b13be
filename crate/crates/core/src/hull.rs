//! Lower convex hulls of point data.
//!
//! One dimension uses a monotone chain. In two dimensions the lower hull of the
//! lifted point cloud is evaluated one query at a time as the small linear
//! program
//!
//! ```text
//! min  sum_i l_i f_i   s.t.  sum_i l_i (p_i - q) = 0,  sum_i l_i = 1,  l >= 0
//! ```
//!
//! solved by a dense revised simplex with three rows. The optimal value is the
//! height of the lower hull above `q`.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Vertex indices of the lower hull of `(xs[i], fs[i])`; `xs` strictly increasing.
/// Collinear interior points are dropped.
pub fn lower_hull_1d(xs: &[f64], fs: &[f64]) -> Vec<usize> {
    debug_assert_eq!(xs.len(), fs.len());
    let mut hull: Vec<usize> = Vec::with_capacity(xs.len());
    for j in 0..xs.len() {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let cross = (xs[a] - xs[o]) * (fs[j] - fs[o]) - (fs[a] - fs[o]) * (xs[j] - xs[o]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(j);
    }
    hull
}

/// Values of the lower convex hull at every input abscissa.
pub fn lower_envelope_1d(xs: &[f64], fs: &[f64]) -> Vec<f64> {
    let hull = lower_hull_1d(xs, fs);
    let mut out = vec![0.0; xs.len()];
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        out[a] = fs[a];
        for j in a + 1..b {
            out[j] = fs[a] + (fs[b] - fs[a]) * ((xs[j] - xs[a]) / (xs[b] - xs[a]));
        }
    }
    if let Some(&last) = hull.last() {
        out[last] = fs[last];
    }
    out
}

/// Evaluates a 1-D lower hull (as returned by [`lower_hull_1d`]) at `x`.
/// `None` outside `[xs[first], xs[last]]`.
pub fn eval_hull_1d(xs: &[f64], fs: &[f64], hull: &[usize], x: f64) -> Option<f64> {
    let first = *hull.first()?;
    let last = *hull.last()?;
    if x < xs[first] || x > xs[last] {
        return None;
    }
    if hull.len() == 1 {
        return Some(fs[first]);
    }
    let pos = hull.partition_point(|&i| xs[i] <= x);
    let (a, b) = if pos >= hull.len() {
        (hull[hull.len() - 2], hull[hull.len() - 1])
    } else if pos == 0 {
        (hull[0], hull[1])
    } else {
        (hull[pos - 1], hull[pos])
    };
    if x == xs[a] {
        return Some(fs[a]);
    }
    Some(fs[a] + (fs[b] - fs[a]) * ((x - xs[a]) / (xs[b] - xs[a])))
}

/// Planar point cloud with heights.
#[derive(Debug, Clone, Copy)]
pub struct LiftedPoints<'a> {
    pub xs: &'a [f64],
    pub ys: &'a [f64],
    pub heights: &'a [f64],
}

type Mat3 = [[f64; 3]; 3];

fn invert3(m: &Mat3) -> Option<Mat3> {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let norm = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if !det.is_finite() || det.abs() <= 1e-14 * norm.powi(3).max(f64::MIN_POSITIVE) {
        return None;
    }
    let inv_det = 1.0 / det;
    Some([
        [
            c00 * inv_det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
        ],
        [
            c01 * inv_det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
        ],
        [
            c02 * inv_det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
        ],
    ])
}

const MAX_PIVOTS: usize = 200_000;
const PRICING_BLOCK: usize = 512;
const DEGENERATE_BEFORE_BLAND: usize = 40;

struct Simplex<'a> {
    pts: LiftedPoints<'a>,
    q: [f64; 2],
    n: usize,
    basis: [usize; 3],
    minv: Mat3,
    eps_cost: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Feasibility,
    Optimality,
}

impl<'a> Simplex<'a> {
    fn column(&self, j: usize) -> [f64; 3] {
        if j < self.n {
            [self.pts.xs[j] - self.q[0], self.pts.ys[j] - self.q[1], 1.0]
        } else {
            let mut e = [0.0; 3];
            e[j - self.n] = 1.0;
            e
        }
    }

    fn cost(&self, j: usize, phase: Phase) -> f64 {
        match (phase, j < self.n) {
            (Phase::Feasibility, true) => 0.0,
            (Phase::Feasibility, false) => 1.0,
            (Phase::Optimality, true) => self.pts.heights[j],
            (Phase::Optimality, false) => 0.0,
        }
    }

    fn refactor(&mut self) -> bool {
        let mut m = [[0.0; 3]; 3];
        for (r, &j) in self.basis.iter().enumerate() {
            let c = self.column(j);
            for k in 0..3 {
                m[k][r] = c[k];
            }
        }
        match invert3(&m) {
            Some(inv) => {
                self.minv = inv;
                true
            }
            None => false,
        }
    }

    /// Basic solution `M^{-1} b` with `b = e_3`.
    fn primal(&self) -> [f64; 3] {
        [self.minv[0][2], self.minv[1][2], self.minv[2][2]]
    }

    fn duals(&self, phase: Phase) -> [f64; 3] {
        let mut pi = [0.0; 3];
        for r in 0..3 {
            let c = self.cost(self.basis[r], phase);
            for (k, p) in pi.iter_mut().enumerate() {
                *p += c * self.minv[r][k];
            }
        }
        pi
    }

    fn reduced_cost(&self, j: usize, phase: Phase, pi: &[f64; 3]) -> f64 {
        let (dx, dy) = (self.pts.xs[j] - self.q[0], self.pts.ys[j] - self.q[1]);
        self.cost(j, phase) - (pi[0] * dx + pi[1] * dy + pi[2])
    }

    /// Lowest-index improving column (Bland's rule).
    fn price_first(&self, phase: Phase, pi: &[f64; 3]) -> Option<usize> {
        (0..self.n).find(|&j| self.reduced_cost(j, phase, pi) < -self.eps_cost && !self.basis.contains(&j))
    }

    /// Most improving column of the first block, scanning blocks cyclically
    /// from the one holding a basic point, that contains any improving column.
    fn price_partial(&self, phase: Phase, pi: &[f64; 3]) -> Option<usize> {
        let blocks = self.n.div_ceil(PRICING_BLOCK);
        let home = self.basis.iter().copied().find(|&j| j < self.n).unwrap_or(0) / PRICING_BLOCK;
        for b in 0..blocks {
            let start = ((home + b) % blocks) * PRICING_BLOCK;
            let mut entering = None;
            let mut best = -self.eps_cost;
            for j in start..(start + PRICING_BLOCK).min(self.n) {
                let d = self.reduced_cost(j, phase, pi);
                if d < best && !self.basis.contains(&j) {
                    entering = Some(j);
                    best = d;
                }
            }
            if entering.is_some() {
                return entering;
            }
        }
        None
    }

    fn solve(&mut self, phase: Phase) -> Result<()> {
        let mut degenerate = 0usize;
        let mut bland = false;
        for _ in 0..MAX_PIVOTS {
            let pi = self.duals(phase);
            let entering = if bland { self.price_first(phase, &pi) } else { self.price_partial(phase, &pi) };
            let Some(j) = entering else {
                return Ok(());
            };
            let col = self.column(j);
            let mut w = [0.0; 3];
            for (r, wr) in w.iter_mut().enumerate() {
                *wr = (0..3).map(|k| self.minv[r][k] * col[k]).sum();
            }
            let x = self.primal();
            let wmax = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..3 {
                if w[r] > 1e-12 * wmax.max(1.0) {
                    let ratio = x[r].max(0.0) / w[r];
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio || (ratio == lratio && self.basis[r] < self.basis[lr]) {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, theta)) = leave else {
                return Err(Error::Numerical("hull program unbounded".into()));
            };
            let old = self.basis[r];
            self.basis[r] = j;
            if !self.refactor() {
                self.basis[r] = old;
                self.refactor();
                return Err(Error::Numerical("singular basis in hull program".into()));
            }
            if theta <= 1e-15 {
                degenerate += 1;
                if degenerate > DEGENERATE_BEFORE_BLAND {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
        }
        Err(Error::Numerical("hull program did not terminate".into()))
    }

    fn objective(&self) -> f64 {
        let x = self.primal();
        (0..3)
            .map(|r| {
                let j = self.basis[r];
                if j < self.n {
                    x[r].max(0.0) * self.pts.heights[j]
                } else {
                    0.0
                }
            })
            .sum()
    }
}

/// Height of the lower convex hull of `pts` above `q`; `None` when `q` lies
/// outside the convex hull of the planar points.
///
/// `warm` may name three points whose triangle contains `q` (for instance `q`
/// itself and two grid neighbours); otherwise a feasibility phase runs first.
pub fn lower_envelope_at(pts: LiftedPoints<'_>, q: [f64; 2], warm: Option<[usize; 3]>) -> Result<Option<f64>> {
    let n = pts.xs.len();
    if n == 0 {
        return Ok(None);
    }
    let scale = pts.heights.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut lp = Simplex {
        pts,
        q,
        n,
        basis: [n, n + 1, n + 2],
        minv: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        eps_cost: 1e-12 * scale,
    };
    let mut warm_ok = false;
    if let Some(b) = warm {
        lp.basis = b;
        warm_ok = lp.refactor() && lp.primal().iter().all(|&v| v >= -1e-12);
    }
    if !warm_ok {
        lp.basis = [n, n + 1, n + 2];
        lp.refactor();
        lp.eps_cost = 1e-13;
        lp.solve(Phase::Feasibility)?;
        let infeasibility: f64 = (0..3).filter(|&r| lp.basis[r] >= n).map(|r| lp.primal()[r]).sum();
        if infeasibility > 1e-9 {
            return Ok(None);
        }
        for r in 0..3 {
            if lp.basis[r] < n {
                continue;
            }
            let mut swapped = false;
            for j in 0..n {
                if lp.basis.contains(&j) {
                    continue;
                }
                let col = lp.column(j);
                let wr: f64 = (0..3).map(|k| lp.minv[r][k] * col[k]).sum();
                if wr.abs() > 1e-9 {
                    let old = lp.basis[r];
                    lp.basis[r] = j;
                    if lp.refactor() {
                        swapped = true;
                        break;
                    }
                    lp.basis[r] = old;
                    lp.refactor();
                }
            }
            if !swapped {
                return Err(Error::Numerical("points do not span the plane".into()));
            }
        }
        lp.eps_cost = 1e-12 * scale;
    }
    lp.solve(Phase::Optimality)?;
    Ok(Some(lp.objective()))
}

/// [`lower_envelope_at`] for many queries, in parallel. Output order follows
/// `queries`; each query is solved independently so results do not depend on
/// the thread count.
pub fn lower_envelope_2d<W>(pts: LiftedPoints<'_>, queries: &[[f64; 2]], warm: W) -> Result<Vec<Option<f64>>>
where
    W: Fn(usize) -> Option<[usize; 3]> + Sync,
{
    queries
        .par_iter()
        .enumerate()
        .map(|(i, &q)| lower_envelope_at(pts, q, warm(i)))
        .collect()
}

fn cross_i64(o: [i64; 2], a: [i64; 2], b: [i64; 2]) -> i64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull of integer points, collinear points dropped.
pub fn convex_hull_i64(points: &[[i64; 2]]) -> Vec<[i64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<[i64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross_i64(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[i64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross_i64(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Closed membership test for a hull produced by [`convex_hull_i64`].
pub fn in_convex_hull_i64(hull: &[[i64; 2]], p: [i64; 2]) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == p,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            cross_i64(a, b, p) == 0
                && p[0] >= a[0].min(b[0])
                && p[0] <= a[0].max(b[0])
                && p[1] >= a[1].min(b[1])
                && p[1] <= a[1].max(b[1])
        }
        n => (0..n).all(|i| cross_i64(hull[i], hull[(i + 1) % n], p) >= 0),
    }
}
