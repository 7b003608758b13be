//! Problem files: TOML describing grids, the initial potential and the payload.
//!
//! Expressions are evaluated with `meval`. Primal expressions see `x` (1-D) or
//! `x1`, `x2` (2-D); dual expressions see `y` or `y1`, `y2`. Relative paths are
//! resolved against the directory of the problem file.

use std::path::{Path, PathBuf};

use hrma_core::filtration::DEFAULT_SIZE_CAP;
use hrma_core::geodesic::default_t_grid;
use hrma_core::legendre::subgradient_range;
use hrma_core::{
    ConcaveTransform, ConvexGridFunction, DualGrid, Grid, GridBox, GridFunction, TestCurve, WeightedLatticeData, NEG_INF,
};
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Curve,
    DualU,
    Filtration,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: Kind,
    pub threads: Option<usize>,
    pub primal: Option<PrimalSpec>,
    pub dual: Option<DualSpec>,
    pub lambda: Option<LambdaSpec>,
    pub t: Option<TSpec>,
    pub curve: Option<CurveSpec>,
    pub u: Option<USpec>,
    pub filtration: Option<FiltrationSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimalSpec {
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub nodes: Option<Vec<usize>>,
    pub phi: Option<String>,
    /// Grid-function text file; carries its own grid.
    pub phi_file: Option<PathBuf>,
}

/// Without `lower`/`upper` the dual box covers the slope range of the potential.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualSpec {
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub nodes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSpec {
    pub values: Option<Vec<f64>>,
    pub step: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TSpec {
    pub values: Vec<f64>,
}

/// Exactly one of `file`, `eta`, `u`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub file: Option<PathBuf>,
    /// Trivial curve: the potential up to `eta`, `-inf` beyond.
    pub eta: Option<f64>,
    /// Envelope curve of a concave function of the slope.
    pub u: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct USpec {
    pub expr: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiltrationSpec {
    pub weights_file: Option<PathBuf>,
    pub points: Option<Vec<Vec<i64>>>,
    pub weights: Option<Vec<i64>>,
    pub k: Option<Vec<usize>>,
    pub size_cap: Option<usize>,
    pub c_grid: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub concavity: Option<f64>,
    pub contact: Option<f64>,
}

pub const DEFAULT_LAMBDA_STEP: f64 = 1.0 / 32.0;
pub const DEFAULT_K: [usize; 4] = [4, 8, 16, 32];
pub const DEFAULT_C_GRID: f64 = 10.0;

/// A parsed problem file together with its location.
pub struct Problem {
    pub spec: ProblemSpec,
    pub path: PathBuf,
}

impl Problem {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        let spec: ProblemSpec =
            toml::from_str(&text).map_err(|e| CliError::Parse { path: path.to_owned(), message: e.to_string() })?;
        Ok(Self { spec, path: path.to_owned() })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match self.path.parent() {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_owned(),
        }
    }

    fn parse_file<T>(&self, p: &Path, parse: impl FnOnce(&str) -> hrma_core::Result<T>) -> Result<T> {
        let path = self.resolve(p);
        let text = read(&path)?;
        parse(&text).map_err(|e| match e {
            hrma_core::Error::Parse { line, message } => {
                CliError::Parse { path, message: format!("line {line}: {message}") }
            }
            other => other.into(),
        })
    }

    fn expr(&self, src: &str) -> Result<meval::Expr> {
        src.parse().map_err(|e| CliError::Parse { path: self.path.clone(), message: format!("expression `{src}`: {e}") })
    }

    /// Samples an expression over a grid, binding the primal or dual variable names.
    fn sample(&self, src: &str, grid: &Grid, dual: bool) -> Result<GridFunction> {
        let expr = self.expr(src)?;
        let bad = |e: meval::Error| CliError::Parse { path: self.path.clone(), message: format!("expression `{src}`: {e}") };
        let vals: Vec<f64> = match (grid.dim(), dual) {
            (1, false) => {
                let f = expr.bind("x").map_err(bad)?;
                (0..grid.len()).map(|i| f(grid.point(i)[0])).collect()
            }
            (1, true) => {
                let f = expr.bind("y").map_err(bad)?;
                (0..grid.len()).map(|i| f(grid.point(i)[0])).collect()
            }
            (_, d) => {
                let f = if d { expr.bind2("y1", "y2") } else { expr.bind2("x1", "x2") }.map_err(bad)?;
                (0..grid.len()).map(|i| {
                    let p = grid.point(i);
                    f(p[0], p[1])
                })
                .collect()
            }
        };
        Ok(GridFunction::new(grid.clone(), vals)?)
    }

    fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> Result<&'a T> {
        s.as_ref().ok_or_else(|| CliError::Spec(format!("{}: missing [{name}] section", self.path.display())))
    }

    pub fn phi(&self) -> Result<ConvexGridFunction> {
        let p = self.section(&self.spec.primal, "primal")?;
        let f = match (&p.phi, &p.phi_file) {
            (Some(src), None) => {
                let (Some(lo), Some(hi), Some(n)) = (&p.lower, &p.upper, &p.nodes) else {
                    return Err(CliError::Spec("[primal] needs lower, upper and nodes with phi".into()));
                };
                let grid = Grid::new(GridBox::new(lo, hi)?, n)?;
                self.sample(src, &grid, false)?
            }
            (None, Some(file)) => self.parse_file(file, GridFunction::from_text)?,
            _ => return Err(CliError::Spec("[primal] needs exactly one of phi, phi_file".into())),
        };
        Ok(ConvexGridFunction::certify(f)?)
    }

    /// Dual grid for `phi`; an explicit box must contain the slope range.
    pub fn dual(&self, phi: &GridFunction) -> Result<DualGrid> {
        let default_nodes = phi.grid().nodes_per_axis().to_vec();
        let Some(d) = &self.spec.dual else {
            return Ok(DualGrid::covering(phi, &default_nodes)?);
        };
        let nodes = d.nodes.clone().unwrap_or(default_nodes);
        match (&d.lower, &d.upper) {
            (Some(lo), Some(hi)) => {
                let dual = DualGrid::new(Grid::new(GridBox::new(lo, hi)?, &nodes)?);
                dual.check_covers(phi)?;
                Ok(dual)
            }
            (None, None) => Ok(DualGrid::covering(phi, &nodes)?),
            _ => Err(CliError::Spec("[dual] needs both lower and upper, or neither".into())),
        }
    }

    pub fn t_grid(&self) -> Result<Vec<f64>> {
        let Some(t) = &self.spec.t else { return Ok(default_t_grid()) };
        if t.values.is_empty() || t.values.windows(2).any(|w| w[0] >= w[1]) || t.values[0] < 0.0 {
            return Err(CliError::Spec("[t] values must be nonnegative and strictly increasing".into()));
        }
        Ok(t.values.clone())
    }

    /// Explicit lambda values, or `step` multiples (offset by `anchor`) covering `[lower, upper]`.
    fn lambdas(&self, lower: f64, upper: f64, anchor: f64) -> Result<Vec<f64>> {
        let l = self.spec.lambda.as_ref();
        if let Some(v) = l.and_then(|l| l.values.clone()) {
            if v.len() < 2 || v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::Spec("[lambda] values must be strictly increasing".into()));
            }
            return Ok(v);
        }
        let step = l.and_then(|l| l.step).unwrap_or(DEFAULT_LAMBDA_STEP);
        if !(step > 0.0) {
            return Err(CliError::Spec("[lambda] step must be positive".into()));
        }
        let lower = l.and_then(|l| l.lower).unwrap_or(lower);
        let upper = l.and_then(|l| l.upper).unwrap_or(upper);
        let j0 = ((lower - anchor) / step).floor() as i64;
        let j1 = ((upper - anchor) / step).ceil() as i64;
        Ok((j0..=j1).map(|j| anchor + j as f64 * step).collect())
    }

    fn concave_u(&self, src: &str, phi: &ConvexGridFunction, dual: &DualGrid) -> Result<ConcaveTransform> {
        let base = subgradient_range(phi, dual)?;
        let sampled = self.sample(src, dual.grid(), true)?;
        let vals = (0..dual.grid().len()).map(|i| if base.contains(i) { sampled.value(i) } else { NEG_INF }).collect();
        let u = GridFunction::new(dual.grid().clone(), vals)?;
        let tol = self.spec.tolerances.concavity.unwrap_or(1e-9);
        Ok(ConcaveTransform::new(u, base, tol)?)
    }

    /// Lambda grid for a concave transform: one step below its minimum up to its maximum, anchored at 0.
    fn u_lambdas(&self, u: &ConcaveTransform) -> Result<Vec<f64>> {
        let vals = u.distinct_values();
        let (lo, hi) = match (vals.first(), vals.last()) {
            (Some(&lo), Some(&hi)) => (lo, hi),
            _ => return Err(CliError::Spec("u has no values on the subgradient set".into())),
        };
        let step = self.spec.lambda.as_ref().and_then(|l| l.step).unwrap_or(DEFAULT_LAMBDA_STEP);
        self.lambdas(lo - step, hi, 0.0)
    }

    pub fn u(&self, phi: &ConvexGridFunction, dual: &DualGrid) -> Result<ConcaveTransform> {
        self.concave_u(&self.section(&self.spec.u, "u")?.expr, phi, dual)
    }

    /// Envelope curve of `u`, sampled on the lambda grid.
    pub fn curve_of_u(&self, phi: &ConvexGridFunction, u: &ConcaveTransform, dual: &DualGrid) -> Result<TestCurve> {
        let lambdas = self.u_lambdas(u)?;
        Ok(self.with_tol(TestCurve::from_concave_transform(phi, u, lambdas, dual)?))
    }

    fn with_tol(&self, tc: TestCurve) -> TestCurve {
        match self.spec.tolerances.concavity {
            Some(tol) => tc.with_concavity_tol(tol),
            None => tc,
        }
    }

    /// The test curve of a `curve` problem and the dual grid it lives with.
    pub fn curve(&self) -> Result<(TestCurve, DualGrid)> {
        let c = self.section(&self.spec.curve, "curve")?;
        match (&c.file, c.eta, &c.u) {
            (Some(file), None, None) => {
                let tc = self.with_tol(self.parse_file(file, TestCurve::from_text)?);
                let dual = self.dual(tc.head())?;
                Ok((tc, dual))
            }
            (None, Some(eta), None) => {
                let phi = self.phi()?;
                let dual = self.dual(&phi)?;
                let lambdas = self.lambdas(eta.min(0.0) - 1.0, eta.max(0.0) + 1.0, eta)?;
                Ok((self.with_tol(TestCurve::constant_then_cutoff(&phi, lambdas, eta)?), dual))
            }
            (None, None, Some(src)) => {
                let phi = self.phi()?;
                let dual = self.dual(&phi)?;
                let u = self.concave_u(src, &phi, &dual)?;
                Ok((self.curve_of_u(&phi, &u, &dual)?, dual))
            }
            _ => Err(CliError::Spec("[curve] needs exactly one of file, eta, u".into())),
        }
    }

    pub fn weights(&self) -> Result<WeightedLatticeData> {
        let f = self.section(&self.spec.filtration, "filtration")?;
        let data = match (&f.weights_file, &f.points, &f.weights) {
            (Some(file), None, None) => self.parse_file(file, WeightedLatticeData::from_text)?,
            (None, Some(points), Some(weights)) => {
                let dim = points.first().map_or(1, Vec::len);
                if !(1..=2).contains(&dim) || points.iter().any(|p| p.len() != dim) {
                    return Err(CliError::Spec("[filtration] points must all have 1 or all have 2 coordinates".into()));
                }
                let pts = points.iter().map(|p| [p[0], p.get(1).copied().unwrap_or(0)]).collect();
                WeightedLatticeData::new(dim, pts, weights.clone())?
            }
            _ => return Err(CliError::Spec("[filtration] needs weights_file, or points and weights".into())),
        };
        Ok(data.with_size_cap(f.size_cap.unwrap_or(DEFAULT_SIZE_CAP)))
    }

    /// Dual grid for a filtration problem; defaults to the bounding box of the lattice points.
    pub fn filtration_dual(&self, phi: &GridFunction, data: &WeightedLatticeData) -> Result<DualGrid> {
        let nodes = self
            .spec
            .dual
            .as_ref()
            .and_then(|d| d.nodes.clone())
            .unwrap_or_else(|| phi.grid().nodes_per_axis().to_vec());
        let explicit = self.spec.dual.as_ref().and_then(|d| d.lower.clone().zip(d.upper.clone()));
        let (lo, hi) = match explicit {
            Some(b) => b,
            None => {
                let dim = data.dim();
                let lo = (0..dim).map(|a| data.points().iter().map(|p| p[a]).min().unwrap_or(0) as f64).collect();
                let hi = (0..dim).map(|a| data.points().iter().map(|p| p[a]).max().unwrap_or(0) as f64).collect();
                (lo, hi)
            }
        };
        Ok(DualGrid::new(Grid::new(GridBox::new(&lo, &hi)?, &nodes)?))
    }

    pub fn k_list(&self) -> Vec<usize> {
        self.spec.filtration.as_ref().and_then(|f| f.k.clone()).unwrap_or_else(|| DEFAULT_K.to_vec())
    }

    pub fn c_grid(&self) -> f64 {
        self.spec.filtration.as_ref().and_then(|f| f.c_grid).unwrap_or(DEFAULT_C_GRID)
    }
}

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}
