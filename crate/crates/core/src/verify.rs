//! Error norms, nested-reference convergence studies and qualitative checks.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_system, rt0_local_mass, ProblemSpec, SaddleSystem, ScalarField, SourceField};
use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::meshdim::{
    attach_scaling, build_benchmark_mesh, default_parameters, refine, FacetTag, MixedDimMesh, ParameterTable, Preset, ScalingFields, MAX_LEVEL_2D,
    MAX_LEVEL_3D,
};
use crate::solver::{conservation_residual, norm_inf, solve, Solution};
use crate::spaces::{DofLayout, ProjectionOptions};

/// Largest system a convergence study will factor directly.
pub const MAX_DIRECT_DOFS_2D: usize = 2_000_000;
pub const MAX_DIRECT_DOFS_3D: usize = 300_000;

/// Degree-4 Dunavant rule on triangles as (barycentric weights, weight)
/// with weights summing to one.
const TRI_QUAD4: [([f64; 3], f64); 6] = [
    ([0.108103018168070, 0.445948490915965, 0.445948490915965], 0.223381589678011),
    ([0.445948490915965, 0.108103018168070, 0.445948490915965], 0.223381589678011),
    ([0.445948490915965, 0.445948490915965, 0.108103018168070], 0.223381589678011),
    ([0.816847572980459, 0.091576213509771, 0.091576213509771], 0.109951743655322),
    ([0.091576213509771, 0.816847572980459, 0.091576213509771], 0.109951743655322),
    ([0.091576213509771, 0.091576213509771, 0.816847572980459], 0.109951743655322),
];

/// One solved level: mesh, coefficients, assembled system and solution.
pub struct LevelRun {
    pub mesh: MixedDimMesh,
    pub fields: ScalingFields,
    pub system: SaddleSystem,
    pub solution: Solution,
}

impl LevelRun {
    pub fn layout(&self) -> &DofLayout {
        &self.system.layout
    }

    /// Largest conservation residual relative to `‖rhs‖∞`.
    pub fn conservation(&self) -> f64 {
        let r = norm_inf(&conservation_residual(&self.solution, &self.system));
        let b = norm_inf(&self.system.rhs);
        if b == 0.0 {
            r
        } else {
            r / b
        }
    }
}

/// Problem data shared by every level of a study.
#[derive(Clone)]
pub struct StudySetup {
    pub name: String,
    pub base: MixedDimMesh,
    pub params: ParameterTable,
    pub dirichlet: ScalarField,
    pub source: SourceField,
    pub projection: ProjectionOptions,
    pub tol: f64,
    pub rho: f64,
}

impl StudySetup {
    /// Default parameters, boundary pressure and zero source of a preset.
    pub fn for_preset(preset: Preset) -> Result<Self> {
        let g = preset.boundary_pressure();
        Ok(StudySetup {
            name: preset.name().to_string(),
            base: build_benchmark_mesh(preset, 0)?,
            params: default_parameters(preset),
            dirichlet: Arc::new(move |x: &Point| g(x)),
            source: Arc::new(|_, _| 0.0),
            projection: ProjectionOptions::default(),
            tol: 1e-10,
            rho: 0.0,
        })
    }

    pub fn solve_mesh(&self, mesh: MixedDimMesh) -> Result<LevelRun> {
        let fields = attach_scaling(&mesh, &self.params)?;
        let problem = ProblemSpec {
            mesh: &mesh,
            fields: &fields,
            source: self.source.clone(),
            dirichlet: self.dirichlet.clone(),
            projection: self.projection,
        };
        let system = assemble_system(&problem)?;
        let solution = solve(&system, self.tol)?;
        Ok(LevelRun { mesh, fields, system, solution })
    }

    /// Mesh of `level` by uniform refinement of the base mesh.
    pub fn mesh(&self, level: usize) -> Result<MixedDimMesh> {
        self.check_budget(level)?;
        let mut mesh = self.base.clone();
        for _ in 0..level {
            mesh = refine(&mesh);
        }
        Ok(mesh)
    }

    fn check_budget(&self, level: usize) -> Result<()> {
        let n = self.base.ambient_dim;
        let max = if n == 3 { MAX_LEVEL_3D } else { MAX_LEVEL_2D };
        if self.base.refinement_level + level > max {
            return Err(Error::LevelBudget { level: self.base.refinement_level + level, dim: n, max });
        }
        Ok(())
    }
}

fn per_dim(n: usize) -> Vec<f64> {
    vec![0.0; n + 1]
}

/// `‖K^{-1/2} u‖` per dimension over all cells not touching a tip ball of
/// radius `rho`.
pub fn norm_flux(mesh: &MixedDimMesh, fields: &ScalingFields, layout: &DofLayout, flux: &[f64], rho: f64) -> Vec<f64> {
    let parts: Vec<(usize, f64)> = mesh
        .subdomains
        .par_iter()
        .enumerate()
        .filter(|(_, sub)| sub.dim > 0)
        .map(|(s, sub)| {
            let topo = sub.topology();
            let mut sum = 0.0;
            for c in 0..sub.num_cells() {
                let pts = sub.cell_points(c);
                if rho > 0.0 && mesh.tips.iter().any(|t| geometry::distance_to_simplex(t, &pts) < rho) {
                    continue;
                }
                let facets = &topo.cell_facets[c];
                let orient: Vec<f64> = facets.iter().map(|&f| topo.orientation(c, f)).collect();
                let m = rt0_local_mass(&pts, &fields.k_inv[s], &orient);
                let u: Vec<f64> = facets.iter().map(|&f| flux[layout.flux_offset[s] + f]).collect();
                for i in 0..u.len() {
                    for j in 0..u.len() {
                        sum += u[i] * m[i][j] * u[j];
                    }
                }
            }
            (sub.dim, sum)
        })
        .collect();
    let mut out = per_dim(mesh.ambient_dim);
    for (d, v) in parts {
        out[d] += v;
    }
    out.iter().map(|v| v.max(0.0).sqrt()).collect()
}

/// `‖γ^{1/2} K_ν^{-1/2} λ‖` per interface dimension.
pub fn norm_mortar(mesh: &MixedDimMesh, fields: &ScalingFields, layout: &DofLayout, lambda: &[f64]) -> Vec<f64> {
    let mut out = per_dim(mesh.ambient_dim);
    for (k, it) in mesh.interfaces.iter().enumerate() {
        let low = &mesh.subdomains[it.lower];
        for (m, &c) in it.mortar_cells.iter().enumerate() {
            let v = lambda[layout.mortar_offset[k] + m];
            out[it.dim] += low.cell_measure(c) * fields.gamma[k][m] / fields.k_nu[k][m] * v * v;
        }
    }
    out.iter().map(|v| v.sqrt()).collect()
}

/// `‖ε̂_max q‖` per dimension.
pub fn norm_pressure(mesh: &MixedDimMesh, fields: &ScalingFields, layout: &DofLayout, p: &[f64]) -> Vec<f64> {
    let mut out = per_dim(mesh.ambient_dim);
    for (s, sub) in mesh.subdomains.iter().enumerate() {
        for c in 0..sub.num_cells() {
            let w = fields.eps_hat_max[s][c];
            let v = p[layout.pressure_offset[s] + c];
            out[sub.dim] += sub.cell_measure(c) * w * w * v * v;
        }
    }
    out.iter().map(|v| v.sqrt()).collect()
}

/// Discrete unknowns in transfer-friendly form.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSet {
    pub flux: Vec<f64>,
    pub lambda: Vec<f64>,
    pub p: Vec<f64>,
}

impl FieldSet {
    pub fn of(sol: &Solution) -> Self {
        FieldSet { flux: sol.flux.clone(), lambda: sol.lambda.clone(), p: sol.p.clone() }
    }

    fn minus(&self, other: &FieldSet) -> FieldSet {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        FieldSet { flux: d(&self.flux, &other.flux), lambda: d(&self.lambda, &other.lambda), p: d(&self.p, &other.p) }
    }
}

/// Maps each fine facet of every subdomain to `(coarse facet, sign)` when it
/// lies on a facet of the parent mesh.
fn facet_parents(coarse: &MixedDimMesh, fine: &MixedDimMesh, s: usize) -> Vec<Option<(usize, f64)>> {
    let cs = &coarse.subdomains[s];
    let fs = &fine.subdomains[s];
    let ctopo = cs.topology();
    let ftopo = fs.topology();
    let tol = 1e-9 * cs.diameter_max().max(1.0);
    (0..ftopo.facets.len())
        .map(|f| {
            let owner = ftopo.facet_cells[f].0;
            let parent = fs.parents[owner];
            let pts = fs.points_of(&ftopo.facets[f]);
            ctopo.cell_facets[parent]
                .iter()
                .find(|&&cf| {
                    let cpts = cs.points_of(&ctopo.facets[cf]);
                    pts.iter().all(|x| geometry::distance_to_simplex(x, &cpts) <= tol)
                })
                .map(|&cf| (cf, geometry::dot(&fs.facet_normal(f), &cs.facet_normal(cf)).signum()))
        })
        .collect()
}

/// Restricts fields on `fine` (one uniform refinement of `coarse`) to
/// `coarse`: volume-weighted averages of pressures and mortar values, sums
/// of child facet fluxes.
pub fn restrict_once(coarse: &MixedDimMesh, cl: &DofLayout, fine: &MixedDimMesh, fl: &DofLayout, v: &FieldSet) -> FieldSet {
    let mut p = vec![0.0; cl.n_pressure];
    for (s, fs) in fine.subdomains.iter().enumerate() {
        let cs = &coarse.subdomains[s];
        for c in 0..fs.num_cells() {
            let parent = fs.parents[c];
            p[cl.pressure_offset[s] + parent] += fs.cell_measure(c) * v.p[fl.pressure_offset[s] + c];
        }
        for c in 0..cs.num_cells() {
            p[cl.pressure_offset[s] + c] /= cs.cell_measure(c);
        }
    }
    let mut lambda = vec![0.0; cl.n_mortar];
    for (k, fit) in fine.interfaces.iter().enumerate() {
        let cit = &coarse.interfaces[k];
        let fs = &fine.subdomains[fit.lower];
        let cs = &coarse.subdomains[cit.lower];
        let position: BTreeMap<usize, usize> = cit.mortar_cells.iter().enumerate().map(|(m, &c)| (c, m)).collect();
        for (m, &c) in fit.mortar_cells.iter().enumerate() {
            let pm = position[&fs.parents[c]];
            lambda[cl.mortar_offset[k] + pm] += fs.cell_measure(c) * v.lambda[fl.mortar_offset[k] + m];
        }
        for (m, &c) in cit.mortar_cells.iter().enumerate() {
            lambda[cl.mortar_offset[k] + m] /= cs.cell_measure(c);
        }
    }
    let mut flux = vec![0.0; cl.n_flux];
    let maps: Vec<Vec<Option<(usize, f64)>>> = (0..fine.subdomains.len())
        .into_par_iter()
        .map(|s| if fine.subdomains[s].dim == 0 { Vec::new() } else { facet_parents(coarse, fine, s) })
        .collect();
    for (s, map) in maps.iter().enumerate() {
        for (f, target) in map.iter().enumerate() {
            if let Some((cf, sign)) = target {
                flux[cl.flux_offset[s] + cf] += sign * v.flux[fl.flux_offset[s] + f];
            }
        }
    }
    FieldSet { flux, lambda, p }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    U,
    Lambda,
    P,
}

impl Variable {
    pub fn name(&self) -> &'static str {
        match self {
            Variable::U => "u",
            Variable::Lambda => "lambda",
            Variable::P => "p",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelInfo {
    pub level: usize,
    pub h: f64,
    pub h_ratio: f64,
    pub n_dofs: usize,
    pub conservation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub level: usize,
    pub dim: usize,
    pub variable: Variable,
    pub error: f64,
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub name: String,
    pub rho: f64,
    pub tol: f64,
    pub reference_level: Option<usize>,
    pub levels: Vec<LevelInfo>,
    pub entries: Vec<ErrorEntry>,
}

impl ConvergenceReport {
    fn new(name: &str, rho: f64, tol: f64, reference_level: Option<usize>, levels: Vec<LevelInfo>, errors: Vec<BTreeMap<(usize, Variable), f64>>) -> Self {
        let mut entries = Vec::new();
        for (l, errs) in errors.iter().enumerate() {
            for (&(dim, variable), &error) in errs {
                let rate = if l == 0 {
                    None
                } else {
                    errors[l - 1].get(&(dim, variable)).map(|prev| (prev / error).log2())
                };
                entries.push(ErrorEntry { level: levels[l].level, dim, variable, error, rate });
            }
        }
        ConvergenceReport { name: name.to_string(), rho, tol, reference_level, levels, entries }
    }

    pub fn errors(&self, dim: usize, variable: Variable) -> Vec<f64> {
        self.entries.iter().filter(|e| e.dim == dim && e.variable == variable).map(|e| e.error).collect()
    }

    pub fn rates(&self, dim: usize, variable: Variable) -> Vec<f64> {
        self.entries.iter().filter(|e| e.dim == dim && e.variable == variable).filter_map(|e| e.rate).collect()
    }

    /// Mean of the last `n` rates, `None` if fewer are available.
    pub fn mean_rate(&self, dim: usize, variable: Variable, n: usize) -> Option<f64> {
        let r = self.rates(dim, variable);
        if r.len() < n || n == 0 {
            return None;
        }
        Some(r[r.len() - n..].iter().sum::<f64>() / n as f64)
    }

    pub fn series(&self) -> Vec<(usize, Variable)> {
        let mut keys: Vec<(usize, Variable)> = self.entries.iter().map(|e| (e.dim, e.variable)).collect();
        keys.sort();
        keys.dedup();
        keys
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,dim,variable,error,rate\n");
        for e in &self.entries {
            let rate = e.rate.map(|r| format!("{r:.17e}")).unwrap_or_default();
            writeln!(out, "{},{},{},{:.17e},{}", e.level, e.dim, e.variable.name(), e.error, rate).unwrap();
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn relative_errors(run: &LevelRun, diff: &FieldSet, reference: &FieldSet, rho: f64) -> BTreeMap<(usize, Variable), f64> {
    let mesh = &run.mesh;
    let layout = run.layout();
    let mut out = BTreeMap::new();
    let pairs = [
        (Variable::U, norm_flux(mesh, &run.fields, layout, &diff.flux, rho), norm_flux(mesh, &run.fields, layout, &reference.flux, rho)),
        (Variable::Lambda, norm_mortar(mesh, &run.fields, layout, &diff.lambda), norm_mortar(mesh, &run.fields, layout, &reference.lambda)),
        (Variable::P, norm_pressure(mesh, &run.fields, layout, &diff.p), norm_pressure(mesh, &run.fields, layout, &reference.p)),
    ];
    for (var, e, r) in pairs {
        for d in 0..e.len() {
            if r[d] > 0.0 {
                out.insert((d, var), e[d] / r[d]);
            }
        }
    }
    out
}

fn top_h(mesh: &MixedDimMesh) -> f64 {
    mesh.subdomain_indices_of_dim(mesh.ambient_dim)
        .iter()
        .map(|&s| mesh.subdomains[s].diameter_max())
        .fold(0.0, f64::max)
}

/// Solves levels `0..levels` and compares each against the solution on
/// level `levels − 1 + reference_extra`, transferred by nested restriction.
pub fn convergence_study(setup: &StudySetup, levels: usize, reference_extra: usize) -> Result<ConvergenceReport> {
    convergence_study_with(setup, levels, reference_extra, &mut |_| Ok(()))
}

/// [`convergence_study`] that hands every compared level's run to `visit`
/// before dropping it.
pub fn convergence_study_with(
    setup: &StudySetup,
    levels: usize,
    reference_extra: usize,
    visit: &mut dyn FnMut(&LevelRun) -> Result<()>,
) -> Result<ConvergenceReport> {
    if levels == 0 || reference_extra == 0 {
        return Err(Error::InvalidParameters("a convergence study needs at least one level and one reference level".into()));
    }
    let finest = levels - 1 + reference_extra;
    setup.check_budget(finest)?;
    let mut family = vec![setup.base.clone()];
    for _ in 0..finest {
        family.push(refine(family.last().unwrap()));
    }
    let guard = if setup.base.ambient_dim == 3 { MAX_DIRECT_DOFS_3D } else { MAX_DIRECT_DOFS_2D };
    let reference_dofs = crate::spaces::build_layout(&family[finest]).n_dofs();
    if reference_dofs > guard {
        return Err(Error::SizeGuard { what: "reference solve", size: reference_dofs, limit: guard });
    }
    let layouts: Vec<DofLayout> = family.iter().map(crate::spaces::build_layout).collect();
    let reference = setup.solve_mesh(family[finest].clone())?;
    let ref_conservation = reference.conservation();
    // restricted reference on every coarser level
    let mut restricted: Vec<Option<FieldSet>> = vec![None; finest + 1];
    let mut current = FieldSet::of(&reference.solution);
    drop(reference);
    for l in (0..finest).rev() {
        current = restrict_once(&family[l], &layouts[l], &family[l + 1], &layouts[l + 1], &current);
        if l < levels {
            restricted[l] = Some(current.clone());
        }
    }
    let mut infos = Vec::with_capacity(levels);
    let mut errors = Vec::with_capacity(levels);
    for l in 0..levels {
        let run = setup.solve_mesh(family[l].clone())?;
        let reference = restricted[l].as_ref().unwrap();
        let diff = FieldSet::of(&run.solution).minus(reference);
        errors.push(relative_errors(&run, &diff, reference, setup.rho));
        let h = top_h(&run.mesh);
        infos.push(LevelInfo {
            level: l,
            h,
            h_ratio: infos.first().map_or(1.0, |first: &LevelInfo| h / first.h),
            n_dofs: run.system.n_dofs(),
            conservation: run.conservation(),
        });
        visit(&run)?;
    }
    let mut report = ConvergenceReport::new(&setup.name, setup.rho, setup.tol, Some(finest), infos, errors);
    report.levels.push(LevelInfo {
        level: finest,
        h: top_h(&family[finest]),
        h_ratio: top_h(&family[finest]) / report.levels[0].h,
        n_dofs: reference_dofs,
        conservation: ref_conservation,
    });
    Ok(report)
}

/// `p = sin(πx)sin(πy)` on the unit square.
pub fn manufactured_pressure(x: &Point) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin()
}

/// Darcy flux `−∇p` of [`manufactured_pressure`].
pub fn manufactured_flux(x: &Point) -> Point {
    [-PI * (PI * x[0]).cos() * (PI * x[1]).sin(), -PI * (PI * x[0]).sin() * (PI * x[1]).cos(), 0.0]
}

/// Evaluates the RT0 field of one cell at `x`.
pub fn rt0_eval(points: &[Point], orientation: &[f64], dofs: &[f64], x: &Point) -> Point {
    let d = points.len() - 1;
    let vol = geometry::simplex_measure(points);
    let mut u = [0.0; 3];
    for i in 0..points.len() {
        let w = orientation[i] * dofs[i] / (d as f64 * vol);
        u = geometry::add(&u, &geometry::scale(&geometry::sub(x, &points[i]), w));
    }
    u
}

/// L² errors of pressure and flux on the top-dimensional subdomain of a 2D
/// mesh against analytic fields, with a degree-4 rule.
pub fn analytic_errors(run: &LevelRun, p: &dyn Fn(&Point) -> f64, u: &dyn Fn(&Point) -> Point) -> (f64, f64) {
    let mesh = &run.mesh;
    let s = mesh.subdomain_indices_of_dim(2)[0];
    let sub = &mesh.subdomains[s];
    let topo = sub.topology();
    let layout = run.layout();
    let mut ep = 0.0;
    let mut eu = 0.0;
    for c in 0..sub.num_cells() {
        let pts = sub.cell_points(c);
        let area = sub.cell_measure(c);
        let facets = &topo.cell_facets[c];
        let orient: Vec<f64> = facets.iter().map(|&f| topo.orientation(c, f)).collect();
        let dofs: Vec<f64> = facets.iter().map(|&f| run.solution.flux[layout.flux_offset[s] + f]).collect();
        let ph = run.solution.p[layout.pressure_offset[s] + c];
        for (lam, w) in TRI_QUAD4 {
            let x = geometry::add(
                &geometry::add(&geometry::scale(&pts[0], lam[0]), &geometry::scale(&pts[1], lam[1])),
                &geometry::scale(&pts[2], lam[2]),
            );
            ep += w * area * (ph - p(&x)).powi(2);
            let diff = geometry::sub(&rt0_eval(&pts, &orient, &dofs, &x), &u(&x));
            eu += w * area * geometry::dot(&diff, &diff);
        }
    }
    (ep.sqrt(), eu.sqrt())
}

/// Unfractured unit square with `p = sin(πx)sin(πy)`, `f = 2π²p` and
/// homogeneous Dirichlet data on the whole boundary, solved on
/// `first_level..=last_level`. Errors are relative to the analytic norms.
pub fn manufactured_study(first_level: usize, last_level: usize, tol: f64) -> Result<ConvergenceReport> {
    let mut base = build_benchmark_mesh(Preset::Unfractured2d, 0)?;
    base.tag_box_faces(&[0, 1]);
    let setup = StudySetup {
        name: "unfractured-2d manufactured".into(),
        base,
        params: default_parameters(Preset::Unfractured2d),
        dirichlet: Arc::new(|_| 0.0),
        source: Arc::new(|x, _| 2.0 * PI * PI * manufactured_pressure(x)),
        projection: ProjectionOptions::default(),
        tol,
        rho: 0.0,
    };
    // ‖p‖ = 1/2 and ‖∇p‖ = π/√2 on the unit square
    let p_norm = 0.5;
    let u_norm = PI / 2f64.sqrt();
    let mut infos = Vec::new();
    let mut errors = Vec::new();
    for level in first_level..=last_level {
        let run = setup.solve_mesh(setup.mesh(level)?)?;
        let (ep, eu) = analytic_errors(&run, &manufactured_pressure, &manufactured_flux);
        let h = top_h(&run.mesh);
        infos.push(LevelInfo {
            level,
            h,
            h_ratio: infos.first().map_or(1.0, |first: &LevelInfo| h / first.h),
            n_dofs: run.system.n_dofs(),
            conservation: run.conservation(),
        });
        errors.push(BTreeMap::from([((2, Variable::U), eu / u_norm), ((2, Variable::P), ep / p_norm)]));
    }
    Ok(ConvergenceReport::new(&setup.name, 0.0, tol, None, infos, errors))
}

/// Pressure of the upper subdomain traced onto each mortar cell of
/// interface `k`: overlap-weighted average of the adjacent cell pressures.
pub fn upper_trace_pressure(run: &LevelRun, k: usize) -> Vec<f64> {
    let mesh = &run.mesh;
    let layout = run.layout();
    let it = &mesh.interfaces[k];
    let up = &mesh.subdomains[it.upper];
    let topo = up.topology();
    let proj = &run.system.projections[k];
    let mut num = vec![0.0; it.mortar_cells.len()];
    let mut den = vec![0.0; it.mortar_cells.len()];
    for (r, key) in it.upper_facets.iter().enumerate() {
        let f = topo.facet_index(key).unwrap();
        let cell = topo.facet_cells[f].0;
        let w = up.facet_measure(f);
        for (m, v) in proj.row(r) {
            num[m] += w * v * run.solution.p[layout.pressure_offset[it.upper] + cell];
            den[m] += w * v;
        }
    }
    num.iter().zip(&den).map(|(n, d)| if *d > 0.0 { n / d } else { f64::NAN }).collect()
}

/// Largest cellwise residual of `ε̂⁻¹λ + K_ν (p^d − p^{d+1}|_Γ) / γ` on
/// interface `k`; `None` when γ vanishes on the whole interface.
pub fn pressure_jump_check(run: &LevelRun, k: usize) -> Option<f64> {
    let it = &run.mesh.interfaces[k];
    let layout = run.layout();
    let trace = upper_trace_pressure(run, k);
    let mut worst: Option<f64> = None;
    for (m, &c) in it.mortar_cells.iter().enumerate() {
        let gamma = run.fields.gamma[k][m];
        let eps_hat = run.fields.eps_hat[k][m];
        if gamma == 0.0 || eps_hat == 0.0 {
            continue;
        }
        let lambda = run.solution.lambda[layout.mortar_offset[k] + m];
        let p_low = run.solution.p[layout.pressure_offset[it.lower] + c];
        let r = (lambda / eps_hat + run.fields.k_nu[k][m] * (p_low - trace[m]) / gamma).abs();
        worst = Some(worst.map_or(r, |w| w.max(r)));
    }
    worst
}

/// Largest `|p^d − p^{d+1}|_Γ|` over mortar cells where γ = 0.
pub fn zero_aperture_pressure_jump(run: &LevelRun) -> Option<f64> {
    let layout = run.layout();
    let mut worst: Option<f64> = None;
    for (k, it) in run.mesh.interfaces.iter().enumerate() {
        let trace = upper_trace_pressure(run, k);
        for (m, &c) in it.mortar_cells.iter().enumerate() {
            if run.fields.gamma[k][m] != 0.0 {
                continue;
            }
            let j = (run.solution.p[layout.pressure_offset[it.lower] + c] - trace[m]).abs();
            worst = Some(worst.map_or(j, |w| w.max(j)));
        }
    }
    worst
}

/// Total flux leaving the top-dimensional subdomains through outer boundary
/// facets whose vertices all satisfy `on_face`.
pub fn boundary_outflow(run: &LevelRun, on_face: &dyn Fn(&Point) -> bool) -> f64 {
    let mesh = &run.mesh;
    let layout = run.layout();
    let mut total = 0.0;
    for s in mesh.subdomain_indices_of_dim(mesh.ambient_dim) {
        let sub = &mesh.subdomains[s];
        let topo = sub.topology();
        for (key, tag) in &sub.facet_tags {
            if matches!(tag, FacetTag::Dirichlet | FacetTag::Neumann) && sub.points_of(key).iter().all(|x| on_face(x)) {
                total += run.solution.flux[layout.flux_offset[s] + topo.facet_index(key).unwrap()];
            }
        }
    }
    total
}

/// Mean magnitude of the average flux `u / ε` over `cells` of subdomain
/// `s`, skipping cells where ε vanishes.
pub fn mean_speed(run: &LevelRun, s: usize, cells: &[usize]) -> f64 {
    let vectors = cell_flux_vectors(&run.mesh, run.layout(), &run.solution.flux, s);
    let mut total = 0.0;
    let mut count = 0;
    for &c in cells {
        let eps = run.fields.eps[s][c];
        if eps > 0.0 {
            total += geometry::norm(&vectors[c]) / eps;
            count += 1;
        }
    }
    total / count.max(1) as f64
}

/// Cell-averaged flux vector of every cell of subdomain `s`.
pub fn cell_flux_vectors(mesh: &MixedDimMesh, layout: &DofLayout, flux: &[f64], s: usize) -> Vec<Point> {
    let sub = &mesh.subdomains[s];
    if sub.dim == 0 {
        return vec![[0.0; 3]; sub.num_cells()];
    }
    let topo = sub.topology();
    (0..sub.num_cells())
        .map(|c| {
            let pts = sub.cell_points(c);
            let facets = &topo.cell_facets[c];
            let orient: Vec<f64> = facets.iter().map(|&f| topo.orientation(c, f)).collect();
            let dofs: Vec<f64> = facets.iter().map(|&f| flux[layout.flux_offset[s] + f]).collect();
            rt0_eval(&pts, &orient, &dofs, &sub.cell_centroid(c))
        })
        .collect()
}

/// Mean speed in a lower-dimensional subdomain against the mean speed in
/// the upper cells adjacent to it.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedComparison {
    pub subdomain: usize,
    pub feature: String,
    pub fracture: f64,
    pub adjacent: f64,
}

pub fn speed_comparison(run: &LevelRun, s: usize) -> SpeedComparison {
    let mesh = &run.mesh;
    let sub = &mesh.subdomains[s];
    let mut adjacent = 0.0;
    let mut count = 0;
    for k in mesh.interfaces_of_lower(s) {
        let it = &mesh.interfaces[k];
        let up = &mesh.subdomains[it.upper];
        let topo = up.topology();
        let mut cells: Vec<usize> = it.upper_facets.iter().map(|key| topo.facet_cells[topo.facet_index(key).unwrap()].0).collect();
        cells.sort_unstable();
        cells.dedup();
        adjacent += mean_speed(run, it.upper, &cells) * cells.len() as f64;
        count += cells.len();
    }
    let all: Vec<usize> = (0..sub.num_cells()).collect();
    SpeedComparison {
        subdomain: s,
        feature: sub.feature.clone(),
        fracture: mean_speed(run, s, &all),
        adjacent: adjacent / count.max(1) as f64,
    }
}

/// Worst pressure overshoot near a point, measured against the range of
/// the facet neighbours of each cell.
#[derive(Clone, Debug, PartialEq)]
pub struct OscillationReport {
    pub cells_checked: usize,
    /// Largest overshoot divided by the local neighbour range.
    pub worst_ratio: f64,
    /// Largest absolute overshoot beyond the neighbour range.
    pub worst_overshoot: f64,
}

impl OscillationReport {
    pub fn passes(&self, factor: f64) -> bool {
        self.worst_ratio <= factor
    }
}

/// Global pressure indices of the cells adjacent to each pressure cell:
/// facet neighbours within a subdomain and cells coupled through a mortar.
pub fn pressure_neighbours(run: &LevelRun) -> Vec<Vec<usize>> {
    let mesh = &run.mesh;
    let layout = run.layout();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); layout.n_pressure];
    for (s, sub) in mesh.subdomains.iter().enumerate() {
        if sub.dim == 0 {
            continue;
        }
        let topo = sub.topology();
        let off = layout.pressure_offset[s];
        for &(a, b) in &topo.facet_cells {
            if let Some(b) = b {
                adj[off + a].push(off + b);
                adj[off + b].push(off + a);
            }
        }
    }
    for (k, it) in mesh.interfaces.iter().enumerate() {
        let up = &mesh.subdomains[it.upper];
        let topo = up.topology();
        for (r, key) in it.upper_facets.iter().enumerate() {
            let upper = layout.pressure_offset[it.upper] + topo.facet_cells[topo.facet_index(key).unwrap()].0;
            for (m, v) in run.system.projections[k].row(r) {
                if v > 0.0 {
                    let lower = layout.pressure_offset[it.lower] + it.mortar_cells[m];
                    adj[upper].push(lower);
                    adj[lower].push(upper);
                }
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Checks all cells with dimension ≥ 1 whose centroid is within `radius`
/// of `center` against the pressure range of their neighbours.
pub fn oscillation_check(run: &LevelRun, center: &Point, radius: f64) -> OscillationReport {
    let layout = run.layout();
    let adj = pressure_neighbours(run);
    let p = &run.solution.p;
    let mut report = OscillationReport { cells_checked: 0, worst_ratio: 0.0, worst_overshoot: 0.0 };
    for (s, sub) in run.mesh.subdomains.iter().enumerate() {
        if sub.dim == 0 {
            continue;
        }
        for c in 0..sub.num_cells() {
            if geometry::dist(&sub.cell_centroid(c), center) > radius {
                continue;
            }
            let i = layout.pressure_offset[s] + c;
            if adj[i].len() < 2 {
                continue;
            }
            report.cells_checked += 1;
            let lo = adj[i].iter().map(|&j| p[j]).fold(f64::INFINITY, f64::min);
            let hi = adj[i].iter().map(|&j| p[j]).fold(f64::NEG_INFINITY, f64::max);
            let over = (lo - p[i]).max(p[i] - hi).max(0.0);
            let range = hi - lo;
            let ratio = if over <= 1e-12 * (1.0 + p[i].abs()) {
                0.0
            } else if range > 0.0 {
                over / range
            } else {
                f64::INFINITY
            };
            report.worst_ratio = report.worst_ratio.max(ratio);
            report.worst_overshoot = report.worst_overshoot.max(over);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshdim::{build_benchmark_mesh, Preset};
    use crate::spaces::build_layout;

    #[test]
    fn constant_flux_on_unit_square_has_unit_norm() {
        let mesh = build_benchmark_mesh(Preset::Unfractured2d, 1).unwrap();
        let fields = attach_scaling(&mesh, &default_parameters(Preset::Unfractured2d)).unwrap();
        let layout = build_layout(&mesh);
        let sub = &mesh.subdomains[0];
        // u = (1, 0): facet flux = n_x |F|
        let flux: Vec<f64> = (0..layout.n_flux).map(|f| sub.facet_normal(f)[0] * sub.facet_measure(f)).collect();
        let n = norm_flux(&mesh, &fields, &layout, &flux, 0.0);
        assert!((n[2] - 1.0).abs() < 1e-14, "{}", n[2]);
        assert_eq!(norm_flux(&mesh, &fields, &layout, &vec![0.0; layout.n_flux], 0.0)[2], 0.0);
    }

    #[test]
    fn unit_pressure_has_unit_norm() {
        let mesh = build_benchmark_mesh(Preset::Unfractured2d, 2).unwrap();
        let fields = attach_scaling(&mesh, &default_parameters(Preset::Unfractured2d)).unwrap();
        let layout = build_layout(&mesh);
        let n = norm_pressure(&mesh, &fields, &layout, &vec![1.0; layout.n_pressure]);
        assert!((n[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rt0_eval_reproduces_constant_field() {
        let pts = [[0.1, 0.0, 0.0], [1.0, 0.3, 0.0], [0.2, 0.9, 0.0]];
        let u = [0.7, -1.3, 0.0];
        // outward orientation: DOF_i = u·n_i |F_i|
        let dofs: Vec<f64> = (0..3)
            .map(|i| {
                let facet: Vec<Point> = (0..3).filter(|&j| j != i).map(|j| pts[j]).collect();
                geometry::dot(&u, &geometry::outward_normal(&pts, i)) * geometry::simplex_measure(&facet)
            })
            .collect();
        let v = rt0_eval(&pts, &[1.0; 3], &dofs, &[0.4, 0.4, 0.0]);
        assert!((v[0] - u[0]).abs() < 1e-14 && (v[1] - u[1]).abs() < 1e-14);
    }
}
