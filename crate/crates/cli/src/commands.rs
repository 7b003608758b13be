use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hrma_core::checks::{run_suite, RunConfig, RunReport, Suite};
use hrma_core::filtration::{
    concave_transform_g, equivalence_check, moment_check, phong_sturm_ray, weight_histogram, BergmanInstance,
};
use hrma_core::geodesic::{compare_rays, energy_linearity, ray_dual, ray_from_curve, LinearityReport};
use hrma_core::monge_ampere::ma_measure;
use hrma_core::test_curve::{contact_set, default_contact_tol, maximal_envelope};
use hrma_core::{DualGrid, Ray, TestCurve};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::problem::{Kind, Problem};

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serialises") + "\n"
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_owned(), source })
}

#[derive(Serialize)]
struct EnergyOutput<'a> {
    source: String,
    t: &'a [f64],
    energy: &'a [f64],
    #[serde(flatten)]
    linearity: &'a LinearityReport,
    lambda_c: f64,
    /// Total Monge-Ampere mass of the head.
    mass: f64,
}

/// Ray CSV, energy JSON, linearity CSV and contact diagnostics for a `curve` or `dual_u` problem.
pub fn cmd_ray(problem: &Problem, out: &Path) -> Result<Vec<PathBuf>> {
    let t_grid = problem.t_grid()?;
    let (mut ray, curve, dual, reference) = match problem.spec.kind {
        Kind::Curve => {
            let (tc, dual) = problem.curve()?;
            validate(&tc)?;
            (ray_from_curve(&tc, &t_grid)?, tc, dual, None)
        }
        Kind::DualU => {
            let phi = problem.phi()?;
            let dual = problem.dual(&phi)?;
            let u = problem.u(&phi, &dual)?;
            let tc = problem.curve_of_u(&phi, &u, &dual)?;
            let hat = ray_from_curve(&tc, &t_grid)?;
            (ray_dual(&phi, &u, &dual, &t_grid)?, tc, dual, Some(hat))
        }
        Kind::Filtration => return Err(CliError::Spec("`ray` needs a problem of kind curve or dual_u".into())),
    };
    create_dir(out)?;
    let mut written = vec![write(out, "ray.csv", &ray.to_csv())?, write(out, "head.txt", &ray.frame(0).to_text())?];
    written.push(write(out, "curve.txt", &curve.to_text())?);

    let energies = ray.compute_energies(&dual)?.to_vec();
    let report = energy_linearity(&ray, ray.frame(0), &dual)?;
    let mass = ma_measure(ray.frame(0), &dual)?.total();
    let out_json = EnergyOutput {
        source: ray.source().describe(),
        t: ray.t_grid(),
        energy: &energies,
        linearity: &report,
        lambda_c: curve.lambda_c(),
        mass,
    };
    written.push(write(out, "energy.json", &json(&out_json))?);
    let mut lin = String::from("t,energy,fit,residual\n");
    for (t, e) in ray.t_grid().iter().zip(&energies) {
        let fit = report.intercept + report.slope * t;
        let _ = writeln!(lin, "{t:?},{e:?},{fit:?},{:?}", e - fit);
    }
    written.push(write(out, "linearity.csv", &lin)?);
    written.push(write(out, "contact.csv", &contact_csv(problem, &curve, &dual)?)?);
    if let Some(hat) = reference {
        written.push(write(out, "gap.csv", &gap_csv(&hat, &ray)?)?);
    }
    Ok(written)
}

fn validate(tc: &TestCurve) -> Result<()> {
    let d = tc.validate();
    match d.violation {
        Some(v) if !d.valid => Err(hrma_core::Error::Validation {
            message: format!("test curve: {:?} at lambda {} by {:e}", v.kind, v.lambda, v.amount),
            node: v.node,
        }
        .into()),
        _ => Ok(()),
    }
}

/// Per lambda sample of the maximal envelope: total mass and mass off the contact band.
fn contact_csv(problem: &Problem, curve: &TestCurve, dual: &DualGrid) -> Result<String> {
    let phi = curve.head();
    let env = maximal_envelope(phi, curve, dual)?;
    let tol = problem.spec.tolerances.contact.unwrap_or_else(|| default_contact_tol(phi));
    let mut s = String::from("lambda,mass,mass_outside_contact\n");
    for j in env.finite_indices() {
        let mu = ma_measure(env.sample(j), dual)?;
        let contact = contact_set(phi, env.sample(j), tol)?;
        let _ = writeln!(s, "{:?},{:?},{:?}", env.lambdas()[j], mu.total(), mu.mass_outside(&contact) + 0.0);
    }
    Ok(s)
}

fn gap_csv(a: &Ray, b: &Ray) -> Result<String> {
    let mut s = String::from("t,gap\n");
    for (t, g) in a.t_grid().iter().zip(compare_rays(a, b)?) {
        let _ = writeln!(s, "{t:?},{g:?}");
    }
    Ok(s)
}

#[derive(Serialize)]
struct FiltrationSummary {
    k: usize,
    sections: usize,
    max_gap: f64,
    within_bound: bool,
    moment_1: (f64, f64),
    moment_2: (f64, f64),
}

/// Histogram, concave transform, Phong-Sturm ray and equivalence gaps per k.
pub fn cmd_filtration(problem: &Problem, k_override: Option<Vec<usize>>, tol_scale: f64, out: &Path) -> Result<Vec<PathBuf>> {
    if problem.spec.kind != Kind::Filtration {
        return Err(CliError::Spec("`filtration` needs a problem of kind filtration".into()));
    }
    let k_list = k_override.unwrap_or_else(|| problem.k_list());
    if k_list.is_empty() || k_list.contains(&0) {
        return Err(CliError::Spec("k values must be positive".into()));
    }
    let t_grid = problem.t_grid()?;
    let phi = problem.phi()?;
    let mut data = problem.weights()?;
    let dual = problem.filtration_dual(&phi, &data)?;
    let inst = BergmanInstance::new(phi, dual)?;
    create_dir(out)?;
    let mut written = Vec::new();
    let mut gaps = String::from("k,t,gap,bound\n");
    let mut summary = Vec::new();
    for &k in &k_list {
        written.push(write(out, &format!("histogram_k{k}.csv"), &weight_histogram(&mut data, k)?.to_csv())?);
        let g = concave_transform_g(&mut data, k)?;
        written.push(write(out, &format!("concave_transform_k{k}.csv"), &g_csv(&g, data.dim())?)?);
        let s = inst.sections(data.multiplicative_closure(k)?)?;
        written.push(write(out, &format!("ps_ray_k{k}.csv"), &phong_sturm_ray(&inst, &s, &t_grid)?.to_csv())?);
        let rep = equivalence_check(&inst, &mut data, k, &k_list, &t_grid, problem.c_grid())?;
        let bound: Vec<f64> = rep.bound.iter().map(|b| b * tol_scale).collect();
        for ((t, gap), b) in rep.t.iter().zip(&rep.gap).zip(&bound) {
            let _ = writeln!(gaps, "{k},{t:?},{gap:?},{b:?}");
        }
        summary.push(FiltrationSummary {
            k,
            sections: s.len(),
            max_gap: rep.max_gap(),
            within_bound: rep.gap.iter().zip(&bound).all(|(g, b)| g <= b),
            moment_1: moment_check(&g, &mut data, k, 1)?,
            moment_2: moment_check(&g, &mut data, k, 2)?,
        });
    }
    written.push(write(out, "gap.csv", &gaps)?);
    written.push(write(out, "summary.json", &json(&summary))?);
    Ok(written)
}

/// Concave transform sampled on a 65-point mesh per axis of its bounding box; empty cells outside the body.
fn g_csv(g: &hrma_core::ConcaveTransformG, dim: usize) -> Result<String> {
    const MESH: usize = 65;
    let (lo, hi) = g.bounds();
    let coord = |a: usize, j: usize| {
        if hi[a] > lo[a] {
            lo[a] + (hi[a] - lo[a]) * j as f64 / (MESH - 1) as f64
        } else {
            lo[a]
        }
    };
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
    let mut s = String::new();
    if dim == 1 {
        s.push_str("x,g\n");
        for j in 0..MESH {
            let x = coord(0, j);
            let _ = writeln!(s, "{x:?},{}", fmt(g.eval([x, 0.0])?));
        }
    } else {
        s.push_str("x,y,g\n");
        for j in 0..MESH {
            for i in 0..MESH {
                let (x, y) = (coord(0, i), coord(1, j));
                let _ = writeln!(s, "{x:?},{y:?},{}", fmt(g.eval([x, y])?));
            }
        }
    }
    Ok(s)
}

/// Runs a check suite; the JSON report goes to `json_out` when given.
pub fn cmd_check(suite: Suite, cfg: &RunConfig, json_out: Option<&Path>) -> Result<RunReport> {
    let report = run_suite(suite, cfg)?;
    if let Some(path) = json_out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        std::fs::write(path, report.to_json() + "\n").map_err(|source| CliError::Io { path: path.to_owned(), source })?;
    }
    Ok(report)
}
