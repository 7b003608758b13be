//! Alexandrov Monge-Ampere measures and the relative energy.
//!
//! The measure of a convex grid function is the pullback of Lebesgue measure
//! on the slope grid: every dual node deposits one dual cell volume at the
//! primal node maximising `<x, y> - f(x)`. Deposits that land on the box
//! boundary only record truncation of the domain and are dropped by
//! [`ma_measure`].
//!
//! Energies are measured against a fixed [`EnergyFrame`], a slope region
//! playing the role of the common subgradient set of equivalent functions.

use serde::Serialize;

use crate::error::{domain, Result};
use crate::grid::{ConvexGridFunction, Grid, GridFunction};
use crate::legendre::{self, legendre, legendre_witness, subgradient_range, DualGrid, SlopeRegion, NO_ARGMAX};

/// Non-negative masses on the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    grid: Grid,
    mass: Vec<f64>,
    total: f64,
}

impl DiscreteMeasure {
    pub fn new(grid: Grid, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.len() {
            return domain("mass vector does not match grid");
        }
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return domain("masses must be finite and non-negative");
        }
        let total = mass.iter().sum();
        Ok(Self { grid, mass, total })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// `sum_x w(x) * mass(x)`.
    pub fn integrate(&self, w: &[f64]) -> f64 {
        self.mass.iter().zip(w).filter(|(m, _)| **m > 0.0).map(|(m, v)| m * v).sum()
    }

    /// Total mass on nodes where `mask` is false.
    pub fn mass_outside(&self, mask: &[bool]) -> f64 {
        self.mass.iter().zip(mask).filter(|(_, &inside)| !inside).map(|(m, _)| m).sum()
    }

    /// `index,x[,y],mass` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(if self.grid.dim() == 1 { "index,x,mass\n" } else { "index,x,y,mass\n" });
        for (i, m) in self.mass.iter().enumerate() {
            let p = self.grid.point(i);
            if self.grid.dim() == 1 {
                out.push_str(&format!("{i},{:?},{:?}\n", p[0], m));
            } else {
                out.push_str(&format!("{i},{:?},{:?},{:?}\n", p[0], p[1], m));
            }
        }
        out
    }
}

fn deposit(primal: &Grid, argmax: &[usize], region: Option<&SlopeRegion>, cell: f64, interior_only: bool) -> Vec<f64> {
    let mut mass = vec![0.0; primal.len()];
    // Sequential accumulation in dual-node order keeps the sums reproducible.
    for (k, &a) in argmax.iter().enumerate() {
        if a == NO_ARGMAX || region.is_some_and(|r| !r.contains(k)) {
            continue;
        }
        if interior_only && !primal.is_interior(a) {
            continue;
        }
        mass[a] += cell;
    }
    mass
}

/// Alexandrov Monge-Ampere measure of `f` on its primal grid.
pub fn ma_measure(f: &ConvexGridFunction, dual: &DualGrid) -> Result<DiscreteMeasure> {
    let witness = legendre::interior_witness(f, dual)?;
    let mass = deposit(f.grid(), &witness, None, dual.grid().cell_volume(), true);
    DiscreteMeasure::new(f.grid().clone(), mass)
}

/// Pullback of the cells of `region` under the gradient map of `f`, boundary deposits included.
pub fn pullback_measure(f: &GridFunction, dual: &DualGrid, region: &SlopeRegion) -> Result<DiscreteMeasure> {
    if region.grid() != dual.grid() {
        return domain("region does not live on the dual grid");
    }
    let (_, argmax) = legendre_witness(f, dual)?;
    let mass = deposit(f.grid(), &argmax, Some(region), dual.grid().cell_volume(), false);
    DiscreteMeasure::new(f.grid().clone(), mass)
}

/// `|total MA mass - vol(subgradient_range)|`, each side computed on its own.
pub fn total_mass_identity_check(f: &ConvexGridFunction, dual: &DualGrid) -> Result<f64> {
    let mass = ma_measure(f, dual)?.total();
    let vol = subgradient_range(f, dual)?.volume();
    Ok((mass - vol).abs())
}

/// Dual grid plus the reference slope region energies integrate over.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyFrame {
    pub dual: DualGrid,
    pub region: SlopeRegion,
}

impl EnergyFrame {
    /// Frame whose region is the subgradient range of `f0`.
    pub fn of(f0: &GridFunction, dual: &DualGrid) -> Result<Self> {
        Ok(Self { dual: dual.clone(), region: subgradient_range(f0, dual)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMethod {
    Quadrature,
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub value: f64,
    pub method: EnergyMethod,
    /// Number of t samples (quadrature only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_samples: Option<usize>,
}

pub const DEFAULT_T_SAMPLES: usize = 11;

fn check_equivalent(f1: &GridFunction, f0: &GridFunction) -> Result<()> {
    if f1.grid() != f0.grid() {
        return domain("energy arguments live on different grids");
    }
    let same_support = f1.values().iter().zip(f0.values()).all(|(a, b)| a.is_finite() == b.is_finite());
    if !same_support {
        return domain("functions are not equivalent: finite supports differ");
    }
    Ok(())
}

/// Composite Simpson weights for `n` (odd, >= 3) equispaced samples on [0, 1].
fn simpson_weights(n: usize) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// `E(f1, f0) = int_0^1 int (f1 - f0) MA(f_t) dt` along `f_t = (1-t) f0 + t f1`,
/// with `MA(f_t)` the pullback of the frame's region.
pub fn energy_quadrature(f1: &GridFunction, f0: &GridFunction, frame: &EnergyFrame, t_samples: usize) -> Result<EnergyReport> {
    check_equivalent(f1, f0)?;
    if t_samples < 3 || t_samples % 2 == 0 {
        return domain("t_samples must be odd and at least 3");
    }
    let diff: Vec<f64> = f1.values().iter().zip(f0.values()).map(|(a, b)| a - b).collect();
    let weights = simpson_weights(t_samples);
    let mut value = 0.0;
    for (i, w) in weights.iter().enumerate() {
        let t = i as f64 / (t_samples - 1) as f64;
        let ft: Vec<f64> = f0.values().iter().zip(f1.values()).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        let ft = GridFunction::from_raw(f0.grid().clone(), ft);
        let mu = pullback_measure(&ft, &frame.dual, &frame.region)?;
        value += w * mu.integrate(&diff);
    }
    Ok(EnergyReport { value, method: EnergyMethod::Quadrature, t_samples: Some(t_samples) })
}

/// `E(ft, f) = sum over the frame region of (f* - ft*)` times the dual cell volume.
pub fn energy_dual(ft: &GridFunction, f: &GridFunction, frame: &EnergyFrame) -> Result<EnergyReport> {
    check_equivalent(ft, f)?;
    let a = legendre(f, &frame.dual)?;
    let b = legendre(ft, &frame.dual)?;
    let sum: f64 = frame.region.indices().map(|k| a.value(k) - b.value(k)).sum();
    Ok(EnergyReport { value: sum * frame.dual.grid().cell_volume(), method: EnergyMethod::Dual, t_samples: None })
}

/// `|E(f2,f0) - E(f2,f1) - E(f1,f0)|` by quadrature in a single frame.
pub fn cocycle_residual(
    f0: &GridFunction,
    f1: &GridFunction,
    f2: &GridFunction,
    frame: &EnergyFrame,
    t_samples: usize,
) -> Result<f64> {
    let e20 = energy_quadrature(f2, f0, frame, t_samples)?.value;
    let e21 = energy_quadrature(f2, f1, frame, t_samples)?.value;
    let e10 = energy_quadrature(f1, f0, frame, t_samples)?.value;
    Ok((e20 - e21 - e10).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ConvexGridFunction;

    fn convex(g: &Grid, f: impl Fn(&[f64]) -> f64) -> ConvexGridFunction {
        ConvexGridFunction::certify(GridFunction::from_fn(g.clone(), f).unwrap()).unwrap()
    }

    #[test]
    fn abs_mass_sits_at_origin() {
        let g = Grid::interval(-1.0, 1.0, 65).unwrap();
        let dual = DualGrid::new(g.clone());
        let mu = ma_measure(&convex(&g, |x| x[0].abs()), &dual).unwrap();
        let origin = g.nearest(&[0.0]);
        let h = dual.grid().cell_volume();
        // Slope -1 is tied along x <= 0 and lands on the first interior node;
        // every other dual cell maps to x = 0.
        assert!((mu.masses()[origin] - 2.0).abs() < 1e-12);
        assert!((mu.masses()[1] - h).abs() < 1e-12);
        assert!((mu.total() - 2.0).abs() <= dual.grid().cell_volume() + 1e-12);
    }

    #[test]
    fn quadratic_total_mass() {
        let g = Grid::interval(-1.0, 1.0, 257).unwrap();
        let dual = DualGrid::new(Grid::interval(-1.0, 1.0, 257).unwrap());
        let f = convex(&g, |x| x[0] * x[0] / 2.0);
        let mu = ma_measure(&f, &dual).unwrap();
        assert!((mu.total() - 2.0).abs() <= dual.grid().cell_volume() + 1e-12);
        assert!(total_mass_identity_check(&f, &dual).unwrap() <= 2.0 * dual.grid().cell_volume());
    }

    #[test]
    fn affine_mass_is_one_cell() {
        let g = Grid::interval(-1.0, 1.0, 33).unwrap();
        let dual = DualGrid::new(Grid::interval(-1.0, 1.0, 33).unwrap());
        let f = convex(&g, |x| 0.25 * x[0] + 1.0);
        let cell = dual.grid().cell_volume();
        assert!((ma_measure(&f, &dual).unwrap().total() - cell).abs() < 1e-12);
        assert!(total_mass_identity_check(&f, &dual).unwrap() <= cell);
    }

    #[test]
    fn translation_invariance_and_trivial_energies() {
        let g = Grid::interval(-1.0, 1.0, 65).unwrap();
        let dual = DualGrid::new(g.clone());
        let f = convex(&g, |x| x[0] * x[0] / 2.0);
        let fc = ConvexGridFunction::certify(f.shift(0.375).unwrap()).unwrap();
        assert_eq!(ma_measure(&f, &dual).unwrap(), ma_measure(&fc, &dual).unwrap());
        let frame = EnergyFrame::of(&f, &dual).unwrap();
        assert_eq!(energy_quadrature(&f, &f, &frame, 11).unwrap().value, 0.0);
        assert_eq!(energy_dual(&f, &f, &frame).unwrap().value, 0.0);
        let eq = energy_quadrature(&fc, &f, &frame, 11).unwrap().value;
        assert!((eq - 0.375 * frame.region.volume()).abs() < 1e-12);
        let ed = energy_dual(&fc, &f, &frame).unwrap().value;
        assert!((ed - 0.375 * frame.region.volume()).abs() < 1e-12);
        assert!(energy_quadrature(&f, &f, &frame, 4).is_err());
    }

    #[test]
    fn inequivalent_supports_rejected() {
        let g = Grid::interval(-1.0, 1.0, 5).unwrap();
        let dual = DualGrid::new(g.clone());
        let f = GridFunction::from_fn(g.clone(), |x| x[0] * x[0]).unwrap();
        let mut v = f.values().to_vec();
        v[0] = crate::grid::NEG_INF;
        let h = GridFunction::new(g, v).unwrap();
        let frame = EnergyFrame::of(&f, &dual).unwrap();
        assert!(energy_quadrature(&h, &f, &frame, 11).is_err());
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let g = Grid::interval(-1.0, 1.0, 5).unwrap();
        let mu = DiscreteMeasure::new(g, vec![0.0, 0.5, 1.0, 0.5, 0.0]).unwrap();
        let csv = mu.to_csv();
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with("index,x,mass\n0,-1.0,0.0"));
        assert!(DiscreteMeasure::new(Grid::interval(0.0, 1.0, 3).unwrap(), vec![0.0, -1.0, 0.0]).is_err());
    }
}
