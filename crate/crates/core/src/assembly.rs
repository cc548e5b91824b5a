//! Saddle-point assembly.
//!
//! Unknowns are ordered `(u0, λ, p)`. With the full-flux mass matrix `M`,
//! the divergence matrix `D`, the integrated jump `J` and the extension `E`
//! (see [`crate::spaces`]), and `P` the selection of free interior fluxes:
//!
//! ```text
//! A_uu = PᵀMP     A_uλ = PᵀME     A_λλ = EᵀME + diag(|c| γ / K_ν)
//! B_u  = −DP      B_λ  = −(DE + J)
//! ```
//!
//! and the system is `[[A, Bᵀ], [B, 0]] x = (r_u, 0, r_p)`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::meshdim::{FacetTag, MixedDimMesh, ScalingFields, Subdomain};
use crate::spaces::{self, DofLayout, ProjectionOptions};
use crate::sparse::{block_matrix, BlockLabel, SparseOperator};

pub type ScalarField = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
/// Source term evaluated at a point of a subdomain of the given dimension.
pub type SourceField = Arc<dyn Fn(&Point, usize) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ProblemSpec<'a> {
    pub mesh: &'a MixedDimMesh,
    pub fields: &'a ScalingFields,
    /// `f`; enters the pressure equation as `ε² f`.
    pub source: SourceField,
    /// Dirichlet pressure `g`, evaluated on Dirichlet facets of every
    /// dimension.
    pub dirichlet: ScalarField,
    pub projection: ProjectionOptions,
}

impl<'a> ProblemSpec<'a> {
    pub fn new(mesh: &'a MixedDimMesh, fields: &'a ScalingFields, dirichlet: ScalarField) -> Self {
        ProblemSpec { mesh, fields, source: Arc::new(|_, _| 0.0), dirichlet, projection: ProjectionOptions::default() }
    }

    pub fn with_source(mut self, source: SourceField) -> Self {
        self.source = source;
        self
    }
}

#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub layout: DofLayout,
    /// Full symmetric matrix.
    pub matrix: SparseOperator,
    pub rhs: Vec<f64>,
    pub a_uu: SparseOperator,
    pub a_ul: SparseOperator,
    pub a_ll: SparseOperator,
    pub b_u: SparseOperator,
    pub b_l: SparseOperator,
    pub r_u: Vec<f64>,
    pub r_l: Vec<f64>,
    pub r_p: Vec<f64>,
    /// Full-flux mass matrix `M` (all facets of all subdomains).
    pub mass: SparseOperator,
    /// `D`: pressure cells × full fluxes.
    pub div: SparseOperator,
    /// Integrated jump `J`: pressure cells × mortar.
    pub jump: SparseOperator,
    pub extension: SparseOperator,
    pub mortar_mass: Vec<f64>,
    pub projections: Vec<SparseOperator>,
    /// Measure of each pressure cell (1 for points).
    pub cell_measure: Vec<f64>,
}

/// Exact RT0 mass matrix of one simplex for a constant inverse
/// permeability `a`; basis `φ_i = o_i (x − x_i) / (d|K|)` with unit flux
/// through facet `i` along orientation `o_i`.
pub fn rt0_local_mass(points: &[Point], a: &[[f64; 3]; 3], orientation: &[f64]) -> Vec<Vec<f64>> {
    let np = points.len();
    let d = np - 1;
    let vol = geometry::simplex_measure(points);
    let quad = |u: &Point, v: &Point| {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += u[i] * a[i][j] * v[j];
            }
        }
        s
    };
    let c0 = vol / ((d + 1) * (d + 2)) as f64;
    let scale = 1.0 / (d as f64 * vol).powi(2);
    let mut m = vec![vec![0.0; np]; np];
    for i in 0..np {
        for j in i..np {
            let mut s = 0.0;
            for k in 0..np {
                let ek = geometry::sub(&points[k], &points[i]);
                for l in 0..np {
                    let el = geometry::sub(&points[l], &points[j]);
                    let w = if k == l { 2.0 * c0 } else { c0 };
                    s += w * quad(&ek, &el);
                }
            }
            let v = orientation[i] * orientation[j] * scale * s;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

/// RT0 mass matrix of one subdomain with weight `K⁻¹` (local facet
/// numbering).
pub fn assemble_flux_mass(sub: &Subdomain, k_inv: &[[f64; 3]; 3]) -> SparseOperator {
    let topo = sub.topology();
    let nf = topo.facets.len();
    let mut triplets = Vec::with_capacity(sub.num_cells() * (sub.dim + 1) * (sub.dim + 1));
    for c in 0..sub.num_cells() {
        let facets = &topo.cell_facets[c];
        let orient: Vec<f64> = facets.iter().map(|&f| topo.orientation(c, f)).collect();
        let m = rt0_local_mass(&sub.cell_points(c), k_inv, &orient);
        for (i, &fi) in facets.iter().enumerate() {
            for (j, &fj) in facets.iter().enumerate() {
                triplets.push((fi, fj, m[i][j]));
            }
        }
    }
    SparseOperator::from_triplets(nf, nf, triplets, BlockLabel::Flux, BlockLabel::Flux)
}

/// `∫_K ∇·(ε v)` per cell and facet basis function: `o_{K,F} ε_h(centroid
/// of F)` with `ε_h` the P1 interpolant of the vertex values.
pub fn assemble_div(sub: &Subdomain, eps_vertex: &[f64]) -> SparseOperator {
    let topo = sub.topology();
    let mut triplets = Vec::with_capacity(sub.num_cells() * (sub.dim + 1));
    for c in 0..sub.num_cells() {
        for &f in &topo.cell_facets[c] {
            let key = &topo.facets[f];
            let eps = key.iter().map(|&v| eps_vertex[v]).sum::<f64>() / key.len() as f64;
            triplets.push((c, f, topo.orientation(c, f) * eps));
        }
    }
    SparseOperator::from_triplets(sub.num_cells(), topo.facets.len(), triplets, BlockLabel::Flux, BlockLabel::Pressure)
}

/// Mortar mass `diag(|c| γ / K_ν)` and integrated jump coupling
/// `−ε̂ |c|` (rows: lower cells, columns: mortar cells of the interface).
pub fn assemble_mortar_terms(mesh: &MixedDimMesh, fields: &ScalingFields, k: usize) -> Result<(SparseOperator, SparseOperator)> {
    let it = &mesh.interfaces[k];
    let low = &mesh.subdomains[it.lower];
    let nm = it.mortar_cells.len();
    let mut mass = Vec::with_capacity(nm);
    let mut coupling = Vec::with_capacity(nm);
    for (m, &c) in it.mortar_cells.iter().enumerate() {
        let k_nu = fields.k_nu[k][m];
        if !(k_nu > 0.0) {
            return Err(Error::InvalidParameters(format!("K_ν = {k_nu} on interface {k}")));
        }
        let area = low.cell_measure(c);
        mass.push((m, m, area * fields.gamma[k][m] / k_nu));
        coupling.push((c, m, -fields.eps_hat[k][m] * area));
    }
    Ok((
        SparseOperator::from_triplets(nm, nm, mass, BlockLabel::Mortar, BlockLabel::Mortar),
        SparseOperator::from_triplets(low.num_cells(), nm, coupling, BlockLabel::Mortar, BlockLabel::Pressure),
    ))
}

/// Average of `g` over a facet, exact for quadratics.
fn facet_average(g: &dyn Fn(&Point) -> f64, pts: &[Point]) -> f64 {
    match pts.len() {
        1 => g(&pts[0]),
        2 => (g(&pts[0]) + 4.0 * g(&geometry::midpoint(&pts[0], &pts[1])) + g(&pts[1])) / 6.0,
        3 => {
            (g(&geometry::midpoint(&pts[0], &pts[1])) + g(&geometry::midpoint(&pts[1], &pts[2])) + g(&geometry::midpoint(&pts[0], &pts[2])))
                / 3.0
        }
        n => panic!("facet with {n} vertices"),
    }
}

fn check_tags(mesh: &MixedDimMesh) -> Result<()> {
    for sub in &mesh.subdomains {
        if sub.dim == 0 {
            continue;
        }
        let topo = sub.topology();
        for f in topo.boundary_facets() {
            if !sub.facet_tags.contains_key(&topo.facets[f]) {
                return Err(Error::InconsistentTags(format!("untagged boundary facet {:?} of Ω^{}_{}", topo.facets[f], sub.dim, sub.id)));
            }
        }
        if sub.dim == mesh.ambient_dim && !sub.facet_tags.values().any(|t| *t == FacetTag::Dirichlet) {
            return Err(Error::InconsistentTags(format!("Ω^{}_{} has an empty Dirichlet boundary", sub.dim, sub.id)));
        }
    }
    Ok(())
}

pub fn assemble_system(problem: &ProblemSpec) -> Result<SaddleSystem> {
    let mesh = problem.mesh;
    let layout = spaces::build_layout(mesh);
    let projections = spaces::all_projections(mesh, problem.projection)?;
    let extension = spaces::extension_matrix(mesh, &layout, &projections);
    assemble_with_extension(problem, layout, projections, extension)
}

/// Assembles with a caller-supplied extension operator (full flux × mortar),
/// which must reproduce `Π̂λ` on the trace facets.
pub fn assemble_with_extension(
    problem: &ProblemSpec,
    layout: DofLayout,
    projections: Vec<SparseOperator>,
    extension: SparseOperator,
) -> Result<SaddleSystem> {
    let mesh = problem.mesh;
    let fields = problem.fields;
    check_tags(mesh)?;

    let locals: Vec<Option<(SparseOperator, SparseOperator)>> = mesh
        .subdomains
        .par_iter()
        .enumerate()
        .map(|(s, sub)| {
            if sub.dim == 0 {
                None
            } else {
                Some((assemble_flux_mass(sub, &fields.k_inv[s]), assemble_div(sub, &fields.eps_vertex[s])))
            }
        })
        .collect();
    let mut mass_t = Vec::new();
    let mut div_t = Vec::new();
    for (s, local) in locals.iter().enumerate() {
        if let Some((m, d)) = local {
            let fo = layout.flux_offset[s];
            let po = layout.pressure_offset[s];
            mass_t.extend(m.triplets().map(|(r, c, v)| (r + fo, c + fo, v)));
            div_t.extend(d.triplets().map(|(r, c, v)| (r + po, c + fo, v)));
        }
    }
    let mass = SparseOperator::from_triplets(layout.n_flux, layout.n_flux, mass_t, BlockLabel::Flux, BlockLabel::Flux);
    let div = SparseOperator::from_triplets(layout.n_pressure, layout.n_flux, div_t, BlockLabel::Flux, BlockLabel::Pressure);

    let mut mortar_mass = vec![0.0; layout.n_mortar];
    let mut jump_t = Vec::new();
    for k in 0..mesh.interfaces.len() {
        let (mm, jc) = assemble_mortar_terms(mesh, fields, k)?;
        let mo = layout.mortar_offset[k];
        let po = layout.pressure_offset[mesh.interfaces[k].lower];
        for (m, _, v) in mm.triplets() {
            mortar_mass[mo + m] = v;
        }
        jump_t.extend(jc.triplets().map(|(r, c, v)| (r + po, c + mo, v)));
    }
    let jump = SparseOperator::from_triplets(layout.n_pressure, layout.n_mortar, jump_t, BlockLabel::Mortar, BlockLabel::Pressure);

    // selection of free fluxes
    let select = SparseOperator::from_triplets(
        layout.n_flux,
        layout.n_u0(),
        layout.free_flux.iter().enumerate().map(|(i, &g)| (g, i, 1.0)).collect(),
        BlockLabel::FluxInterior,
        BlockLabel::Flux,
    );
    let select_t = select.transpose();
    let me = mass.matmul(&extension);
    let a_uu = select_t.matmul(&mass).matmul(&select);
    let a_ul = select_t.matmul(&me);
    let a_ll = extension.transpose().matmul(&me).add(&SparseOperator::diagonal(&mortar_mass, BlockLabel::Mortar));
    let b_u = div.matmul(&select).scaled(-1.0);
    let b_l = div.matmul(&extension).add(&jump).scaled(-1.0);

    // right-hand side
    let mut r_flux = vec![0.0; layout.n_flux];
    for (s, sub) in mesh.subdomains.iter().enumerate() {
        if sub.dim == 0 {
            continue;
        }
        let topo = sub.topology();
        for (key, tag) in &sub.facet_tags {
            if *tag != FacetTag::Dirichlet {
                continue;
            }
            let f = topo.facet_index(key).ok_or_else(|| Error::InconsistentTags(format!("tagged facet {key:?} is not a facet")))?;
            let pts = sub.points_of(key);
            let eps_f = key.iter().map(|&v| fields.eps_vertex[s][v]).sum::<f64>() / key.len() as f64;
            r_flux[layout.flux_offset[s] + f] = -facet_average(&*problem.dirichlet, &pts) * eps_f;
        }
    }
    let r_u: Vec<f64> = layout.free_flux.iter().map(|&g| r_flux[g]).collect();
    let r_l = extension.transpose().matvec(&r_flux);
    let mut r_p = vec![0.0; layout.n_pressure];
    let mut cell_measure = vec![0.0; layout.n_pressure];
    for (s, sub) in mesh.subdomains.iter().enumerate() {
        for c in 0..sub.num_cells() {
            let x = sub.cell_centroid(c);
            let vol = sub.cell_measure(c);
            let eps = fields.eps[s][c];
            let i = layout.pressure_offset[s] + c;
            cell_measure[i] = vol;
            r_p[i] = if eps == 0.0 { 0.0 } else { -eps * eps * (problem.source)(&x, sub.dim) * vol };
        }
    }

    let sizes = [layout.n_u0(), layout.n_mortar, layout.n_pressure];
    let b_ut = b_u.transpose();
    let b_lt = b_l.transpose();
    let a_lu = a_ul.transpose();
    let full = block_matrix(
        &[
            vec![Some(&a_uu), Some(&a_ul), Some(&b_ut)],
            vec![Some(&a_lu), Some(&a_ll), Some(&b_lt)],
            vec![Some(&b_u), Some(&b_l), None],
        ],
        &sizes,
        &sizes,
    );
    let matrix = symmetrize_from_upper(&full);
    let mut rhs = r_u.clone();
    rhs.extend_from_slice(&r_l);
    rhs.extend_from_slice(&r_p);
    Ok(SaddleSystem {
        layout,
        matrix,
        rhs,
        a_uu,
        a_ul,
        a_ll,
        b_u,
        b_l,
        r_u,
        r_l,
        r_p,
        mass,
        div,
        jump,
        extension,
        mortar_mass,
        projections,
        cell_measure,
    })
}

/// Mirrors the upper triangle onto the lower one so the stored matrix is
/// exactly symmetric.
fn symmetrize_from_upper(a: &SparseOperator) -> SparseOperator {
    let mut triplets = Vec::with_capacity(a.nnz());
    for (r, c, v) in a.triplets() {
        if r < c {
            triplets.push((r, c, v));
            triplets.push((c, r, v));
        } else if r == c {
            triplets.push((r, c, v));
        }
    }
    SparseOperator::from_triplets(a.nrows(), a.ncols(), triplets, BlockLabel::System, BlockLabel::System)
}

impl SaddleSystem {
    /// Splits a system vector into `(u0, λ, p)`.
    pub fn split<'v>(&self, x: &'v [f64]) -> (&'v [f64], &'v [f64], &'v [f64]) {
        let [_, ol, op] = self.layout.block_offsets();
        (&x[..ol], &x[ol..op], &x[op..])
    }

    /// Full flux `u = P u0 + E λ` on all facets.
    pub fn full_flux(&self, x: &[f64]) -> Vec<f64> {
        let (u0, lambda, _) = self.split(x);
        let mut u = self.extension.matvec(lambda);
        for (i, &g) in self.layout.free_flux.iter().enumerate() {
            u[g] += u0[i];
        }
        u
    }

    pub fn n_dofs(&self) -> usize {
        self.matrix.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    /// Degree-4 Dunavant rule on the reference triangle (weights sum to 1).
    fn dunavant4() -> Vec<([f64; 3], f64)> {
        let mut out = Vec::new();
        let (a1, w1) = (0.445948490915965, 0.223381589678011);
        let (a2, w2) = (0.091576213509771, 0.109951743655322);
        for (a, w) in [(a1, w1), (a2, w2)] {
            let b = 1.0 - 2.0 * a;
            out.push(([b, a, a], w));
            out.push(([a, b, a], w));
            out.push(([a, a, b], w));
        }
        out
    }

    #[test]
    fn triangle_mass_matches_quadrature() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let m = rt0_local_mass(&pts, &IDENTITY, &[1.0, 1.0, 1.0]);
        let area = 0.5;
        let mut q = vec![vec![0.0; 3]; 3];
        for (lam, w) in dunavant4() {
            let x: Point = [lam[1], lam[2], 0.0];
            let phi: Vec<Point> = (0..3).map(|i| geometry::scale(&geometry::sub(&x, &pts[i]), 1.0 / (2.0 * area))).collect();
            for i in 0..3 {
                for j in 0..3 {
                    q[i][j] += w * area * geometry::dot(&phi[i], &phi[j]);
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[i][j] - q[i][j]).abs() < 1e-13, "{i}{j}: {} vs {}", m[i][j], q[i][j]);
            }
        }
        // hand values on the unit right triangle
        assert!((m[0][0] - 1.0 / 6.0).abs() < 1e-14);
        assert!((m[1][1] - 1.0 / 3.0).abs() < 1e-14);
        assert!((m[1][2] + 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn interval_mass_is_h_over_three() {
        let h = 0.3;
        let pts = [[0.2, 0.0, 0.0], [0.2 + h, 0.0, 0.0]];
        // global left-to-right orientation: facet 0 (point x1) outward, facet 1 (x0) inward
        let m = rt0_local_mass(&pts, &IDENTITY, &[1.0, -1.0]);
        assert!((m[0][0] - h / 3.0).abs() < 1e-15);
        assert!((m[1][1] - h / 3.0).abs() < 1e-15);
        assert!((m[0][1] - h / 6.0).abs() < 1e-15);
    }

    #[test]
    fn doubling_permeability_halves_mass() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.2, 0.0], [0.3, 0.8, 0.0]];
        let half = [[0.5, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.5]];
        let m1 = rt0_local_mass(&pts, &IDENTITY, &[1.0; 3]);
        let m2 = rt0_local_mass(&pts, &half, &[1.0; 3]);
        for i in 0..3 {
            for j in 0..3 {
                assert!((m2[i][j] - 0.5 * m1[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn divergence_with_linear_eps_on_interval() {
        // ε = x on [1, 2]: ∫ ∇·(ε φ) for the basis with unit flux through x=2
        // is ε(2)·1 = 2 by the product rule.
        let mut sub = Subdomain::new(1, 1, "f", vec![[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], vec![vec![0, 1]]);
        sub.facet_tags.insert(vec![0], FacetTag::Neumann);
        sub.facet_tags.insert(vec![1], FacetTag::Neumann);
        let d = assemble_div(&sub, &[1.0, 2.0]);
        let topo = sub.topology();
        let right = topo.facet_index(&[1]).unwrap();
        let left = topo.facet_index(&[0]).unwrap();
        // oracle: ∫_1^2 d/dx (x · (x−1)) dx = 2, and for φ = (2−x) pointing left: ∫ d/dx(x·(−(2−x))) = 1
        assert!((d.get(0, right) - 2.0).abs() < 1e-15);
        assert!((d.get(0, left) - 1.0).abs() < 1e-15);
        let zero = assemble_div(&sub, &[0.0, 0.0]);
        assert_eq!(zero.nnz(), 0);
    }
}
