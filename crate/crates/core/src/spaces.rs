//! Lowest-order spaces: RT0 fluxes on every subdomain of dimension ≥ 1, P0
//! pressures on every subdomain (one value on a point) and P0 mortar fluxes
//! on every interface.
//!
//! A flux degree of freedom is the normal flux integral over a facet,
//! measured along the facet's global normal (the outward normal of its
//! lowest-indexed adjacent cell).

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::meshdim::{FacetTag, MixedDimMesh, ScalingFields};
use crate::sparse::{BlockLabel, SparseOperator};

/// Index maps for the `(u0, λ, p)` unknowns.
#[derive(Clone, Debug)]
pub struct DofLayout {
    /// Start of each subdomain's facets in the full flux numbering.
    pub flux_offset: Vec<usize>,
    pub n_flux: usize,
    /// Full-flux indices of facets not on an interface, per subdomain.
    pub flux_interior: Vec<Vec<usize>>,
    /// Full-flux indices of the facets of each interface, in the order of
    /// `Interface::upper_facets`.
    pub flux_trace: Vec<Vec<usize>>,
    /// Full-flux indices that are unknowns of the `u0` block: interior facets
    /// minus no-flux boundary facets.
    pub free_flux: Vec<usize>,
    /// Position in the `u0` block of each full-flux index.
    pub u0_position: Vec<Option<usize>>,
    pub mortar_offset: Vec<usize>,
    pub n_mortar: usize,
    pub pressure_offset: Vec<usize>,
    pub n_pressure: usize,
}

impl DofLayout {
    pub fn n_u0(&self) -> usize {
        self.free_flux.len()
    }

    /// Offsets of the `u0`, `λ` and `p` blocks in the system vector.
    pub fn block_offsets(&self) -> [usize; 3] {
        [0, self.n_u0(), self.n_u0() + self.n_mortar]
    }

    pub fn n_dofs(&self) -> usize {
        self.n_u0() + self.n_mortar + self.n_pressure
    }

    pub fn flux_dofs_of_dim(&self, mesh: &MixedDimMesh, d: usize) -> usize {
        mesh.subdomains
            .iter()
            .enumerate()
            .filter(|(_, s)| s.dim == d)
            .map(|(i, s)| if s.dim == 0 { 0 } else { self.subdomain_flux_range(i, s.topology().facets.len()).len() })
            .sum()
    }

    fn subdomain_flux_range(&self, s: usize, nf: usize) -> std::ops::Range<usize> {
        self.flux_offset[s]..self.flux_offset[s] + nf
    }

    pub fn mortar_dofs_of_dim(&self, mesh: &MixedDimMesh, d: usize) -> usize {
        mesh.interfaces.iter().filter(|it| it.dim == d).map(|it| it.mortar_cells.len()).sum()
    }

    pub fn pressure_dofs_of_dim(&self, mesh: &MixedDimMesh, d: usize) -> usize {
        mesh.subdomains.iter().filter(|s| s.dim == d).map(|s| s.num_cells()).sum()
    }
}

pub fn build_layout(mesh: &MixedDimMesh) -> DofLayout {
    let mut flux_offset = Vec::with_capacity(mesh.subdomains.len());
    let mut pressure_offset = Vec::with_capacity(mesh.subdomains.len());
    let (mut nf, mut np) = (0, 0);
    for sub in &mesh.subdomains {
        flux_offset.push(nf);
        pressure_offset.push(np);
        if sub.dim > 0 {
            nf += sub.topology().facets.len();
        }
        np += sub.num_cells();
    }
    let mut on_interface = vec![false; nf];
    let mut flux_trace = Vec::with_capacity(mesh.interfaces.len());
    let mut mortar_offset = Vec::with_capacity(mesh.interfaces.len());
    let mut nm = 0;
    for it in &mesh.interfaces {
        let topo = mesh.subdomains[it.upper].topology();
        let idx: Vec<usize> = it
            .upper_facets
            .iter()
            .map(|key| flux_offset[it.upper] + topo.facet_index(key).expect("validated interface facet"))
            .collect();
        for &g in &idx {
            on_interface[g] = true;
        }
        flux_trace.push(idx);
        mortar_offset.push(nm);
        nm += it.mortar_cells.len();
    }
    let mut flux_interior = Vec::with_capacity(mesh.subdomains.len());
    let mut free_flux = Vec::new();
    let mut u0_position = vec![None; nf];
    for (s, sub) in mesh.subdomains.iter().enumerate() {
        let mut interior = Vec::new();
        if sub.dim > 0 {
            let topo = sub.topology();
            for (f, key) in topo.facets.iter().enumerate() {
                let g = flux_offset[s] + f;
                if on_interface[g] {
                    continue;
                }
                interior.push(g);
                let no_flux = topo.is_boundary(f)
                    && matches!(sub.facet_tags.get(key), Some(FacetTag::Neumann) | Some(FacetTag::ImmersedTip));
                if !no_flux {
                    u0_position[g] = Some(free_flux.len());
                    free_flux.push(g);
                }
            }
        }
        flux_interior.push(interior);
    }
    DofLayout {
        flux_offset,
        n_flux: nf,
        flux_interior,
        flux_trace,
        free_flux,
        u0_position,
        mortar_offset,
        n_mortar: nm,
        pressure_offset,
        n_pressure: np,
    }
}

/// Options for building inter-grid operators.
#[derive(Clone, Copy, Debug, Default)]
pub struct ProjectionOptions {
    /// Allow non-matching 2D mortar grids (convex polygon clipping).
    pub clipping_3d: bool,
}

/// `Π̂`: rows are the trace facets of interface `k` (in `upper_facets`
/// order), columns its mortar cells (in `mortar_cells` order), entries
/// `|F ∩ c| / |F|`.
pub fn mortar_projection(mesh: &MixedDimMesh, k: usize, opts: ProjectionOptions) -> Result<SparseOperator> {
    let it = &mesh.interfaces[k];
    let low = &mesh.subdomains[it.lower];
    let up = &mesh.subdomains[it.upper];
    let nr = it.upper_facets.len();
    let nc = it.mortar_cells.len();
    let facets: Vec<Vec<Point>> = it.upper_facets.iter().map(|f| up.points_of(f)).collect();
    let cells: Vec<Vec<Point>> = it.mortar_cells.iter().map(|&c| low.cell_points(c)).collect();
    if it.dim > 0 {
        let hull = &cells[0];
        let scale = low.diameter_max().max(1.0);
        for f in &facets {
            if f.iter().any(|p| geometry::distance_to_affine_hull(p, hull) > 1e-10 * scale) {
                return Err(Error::NonCoplanar { interface: k });
            }
        }
    }
    let triplets = match it.dim {
        0 => {
            if nr != 1 || nc != 1 {
                return Err(Error::GridMismatch(format!("point interface {k} must have one facet and one mortar cell")));
            }
            vec![(0, 0, 1.0)]
        }
        1 => interval_overlaps(&facets, &cells),
        2 => {
            let matched = match_by_centroid(&facets, &cells);
            match matched {
                Some(t) => t,
                None if opts.clipping_3d => polygon_overlaps(&facets, &cells),
                None => return Err(Error::NonMatching3d { interface: k }),
            }
        }
        d => return Err(Error::GridMismatch(format!("unsupported interface dimension {d}"))),
    };
    Ok(SparseOperator::from_triplets(nr, nc, triplets, BlockLabel::Mortar, BlockLabel::Trace))
}

fn interval_overlaps(facets: &[Vec<Point>], cells: &[Vec<Point>]) -> Vec<(usize, usize, f64)> {
    let origin = cells[0][0];
    let dir = geometry::normalize(&geometry::sub(&cells[0][1], &cells[0][0]));
    let param = |seg: &[Point]| {
        let a = geometry::dot(&geometry::sub(&seg[0], &origin), &dir);
        let b = geometry::dot(&geometry::sub(&seg[1], &origin), &dir);
        (a.min(b), a.max(b))
    };
    let mut spans: Vec<(f64, f64, usize)> = cells
        .iter()
        .enumerate()
        .map(|(c, seg)| {
            let (a, b) = param(seg);
            (a, b, c)
        })
        .collect();
    spans.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut triplets = Vec::new();
    for (r, seg) in facets.iter().enumerate() {
        let (a, b) = param(seg);
        let len = b - a;
        let first = spans.partition_point(|s| s.1 <= a);
        for &(c0, c1, c) in &spans[first..] {
            if c0 >= b {
                break;
            }
            let overlap = b.min(c1) - a.max(c0);
            if overlap > 0.0 {
                triplets.push((r, c, overlap / len));
            }
        }
    }
    triplets
}

fn match_by_centroid(facets: &[Vec<Point>], cells: &[Vec<Point>]) -> Option<Vec<(usize, usize, f64)>> {
    let key = |p: &Point| [(p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64, (p[2] * 1e9).round() as i64];
    let mut index = std::collections::HashMap::new();
    for (c, cell) in cells.iter().enumerate() {
        index.insert(key(&geometry::centroid(cell)), c);
    }
    let mut triplets = Vec::with_capacity(facets.len());
    for (r, f) in facets.iter().enumerate() {
        let c = *index.get(&key(&geometry::centroid(f)))?;
        let same = f.iter().all(|p| cells[c].iter().any(|q| geometry::dist(p, q) <= 1e-12));
        if !same {
            return None;
        }
        triplets.push((r, c, 1.0));
    }
    Some(triplets)
}

fn polygon_overlaps(facets: &[Vec<Point>], cells: &[Vec<Point>]) -> Vec<(usize, usize, f64)> {
    let frame = geometry::simplex_frame(&cells[0]);
    let origin = cells[0][0];
    let to2 = |p: &Point| {
        let w = geometry::sub(p, &origin);
        [geometry::dot(&w, &frame[0]), geometry::dot(&w, &frame[1])]
    };
    let ccw = |pts: &[Point]| {
        let mut q: Vec<[f64; 2]> = pts.iter().map(to2).collect();
        let area = (q[1][0] - q[0][0]) * (q[2][1] - q[0][1]) - (q[1][1] - q[0][1]) * (q[2][0] - q[0][0]);
        if area < 0.0 {
            q.swap(1, 2);
        }
        q
    };
    let cell2: Vec<Vec<[f64; 2]>> = cells.iter().map(|c| ccw(c)).collect();
    let mut triplets = Vec::new();
    for (r, f) in facets.iter().enumerate() {
        let poly = ccw(f);
        let area_f = polygon_area(&poly);
        for (c, tri) in cell2.iter().enumerate() {
            let clipped = clip_convex(&poly, tri);
            let a = polygon_area(&clipped);
            if a > 1e-15 * area_f {
                triplets.push((r, c, a / area_f));
            }
        }
    }
    triplets
}

fn polygon_area(p: &[[f64; 2]]) -> f64 {
    if p.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..p.len() {
        let (a, b) = (p[i], p[(i + 1) % p.len()]);
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s.abs()
}

/// Sutherland–Hodgman clipping of `subject` by the convex ccw polygon
/// `clip`.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let side = |p: &[f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (side(&p), side(&q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

/// Smallest singular value of `Π̂` measured in the L² norms of the mortar
/// and trace grids, i.e. `min_μ ‖Π̂μ‖ / ‖μ‖`.
pub fn check_mortar_condition(mesh: &MixedDimMesh, k: usize, proj: &SparseOperator) -> f64 {
    let it = &mesh.interfaces[k];
    let up = &mesh.subdomains[it.upper];
    let low = &mesh.subdomains[it.lower];
    let wf: Vec<f64> = it.upper_facets.iter().map(|f| geometry::simplex_measure(&up.points_of(f))).collect();
    let wc: Vec<f64> = it.mortar_cells.iter().map(|&c| low.cell_measure(c)).collect();
    let nc = wc.len();
    let mut gram = nalgebra::DMatrix::<f64>::zeros(nc, nc);
    for r in 0..proj.nrows() {
        let row: Vec<(usize, f64)> = proj.row(r).collect();
        for &(a, va) in &row {
            for &(b, vb) in &row {
                gram[(a, b)] += wf[r] * va * vb / (wc[a] * wc[b]).sqrt();
            }
        }
    }
    let eig = nalgebra::SymmetricEigen::new(gram);
    eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v)).max(0.0).sqrt()
}

/// Whether the mortar condition holds with the given threshold.
pub fn mortar_condition_satisfied(sigma_min: f64, threshold: f64) -> bool {
    sigma_min >= threshold
}

/// Pointwise jump `⟦ε̂λ⟧ = −Σ_j ε̂_j λ_j` on the cells of lower subdomain
/// `s`: rows are the cells of `s`, columns global mortar indices.
pub fn jump_operator(mesh: &MixedDimMesh, layout: &DofLayout, fields: &ScalingFields, s: usize) -> Result<SparseOperator> {
    let sub = &mesh.subdomains[s];
    let mut triplets = Vec::new();
    for k in mesh.interfaces_of_lower(s) {
        let it = &mesh.interfaces[k];
        if it.mortar_cells.len() != sub.num_cells() {
            return Err(Error::GridMismatch(format!(
                "interface {k}: {} mortar cells for {} cells of Ω^{}_{}",
                it.mortar_cells.len(),
                sub.num_cells(),
                sub.dim,
                sub.id
            )));
        }
        for (m, &c) in it.mortar_cells.iter().enumerate() {
            triplets.push((c, layout.mortar_offset[k] + m, -fields.eps_hat[k][m]));
        }
    }
    Ok(SparseOperator::from_triplets(sub.num_cells(), layout.n_mortar, triplets, BlockLabel::Mortar, BlockLabel::Pressure))
}

/// Compact-support discrete extension `R_h`: maps mortar values to full
/// flux DOFs, non-zero only on trace facets where
/// `DOF_F = s_F |F| (Π̂λ)_F` with `s_F = sign(n_F · ν)`.
pub fn extension_matrix(mesh: &MixedDimMesh, layout: &DofLayout, projections: &[SparseOperator]) -> SparseOperator {
    let mut triplets = Vec::new();
    for (k, it) in mesh.interfaces.iter().enumerate() {
        let up = &mesh.subdomains[it.upper];
        let topo = up.topology();
        let nu = mesh.interface_normal(k);
        for (r, key) in it.upper_facets.iter().enumerate() {
            let f = topo.facet_index(key).expect("validated interface facet");
            let sign = geometry::dot(&up.facet_normal(f), &nu).signum();
            let measure = up.facet_measure(f);
            let g = layout.flux_trace[k][r];
            for (m, v) in projections[k].row(r) {
                triplets.push((g, layout.mortar_offset[k] + m, sign * measure * v));
            }
        }
    }
    SparseOperator::from_triplets(layout.n_flux, layout.n_mortar, triplets, BlockLabel::Mortar, BlockLabel::Flux)
}

/// Normal trace `(DOF_F / |F|) · s_F` of a full flux vector on the facets of
/// interface `k`.
pub fn trace_values(mesh: &MixedDimMesh, layout: &DofLayout, k: usize, flux: &[f64]) -> Vec<f64> {
    let it = &mesh.interfaces[k];
    let up = &mesh.subdomains[it.upper];
    let topo = up.topology();
    let nu = mesh.interface_normal(k);
    it.upper_facets
        .iter()
        .enumerate()
        .map(|(r, key)| {
            let f = topo.facet_index(key).unwrap();
            let sign = geometry::dot(&up.facet_normal(f), &nu).signum();
            sign * flux[layout.flux_trace[k][r]] / up.facet_measure(f)
        })
        .collect()
}

pub fn all_projections(mesh: &MixedDimMesh, opts: ProjectionOptions) -> Result<Vec<SparseOperator>> {
    (0..mesh.interfaces.len()).map(|k| mortar_projection(mesh, k, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshdim::{build_benchmark_mesh, Preset};

    #[test]
    fn unfractured_counts() {
        let mesh = build_benchmark_mesh(Preset::Unfractured2d, 0).unwrap();
        let layout = build_layout(&mesh);
        assert_eq!(layout.n_flux, 5);
        assert_eq!(layout.n_pressure, 2);
        assert_eq!(layout.n_mortar, 0);
    }

    #[test]
    fn interior_and_trace_partition_all_fluxes() {
        let mesh = build_benchmark_mesh(Preset::Square2d, 0).unwrap();
        let layout = build_layout(&mesh);
        let mut all: Vec<usize> = layout.flux_interior.iter().flatten().chain(layout.flux_trace.iter().flatten()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..layout.n_flux).collect::<Vec<_>>());
        let junction = mesh.find(0, 1).unwrap();
        assert_eq!(mesh.subdomains[junction].num_cells(), 1);
        assert_eq!(mesh.interfaces_of_lower(junction).len(), 5);
    }

    #[test]
    fn clipping_of_overlapping_triangles() {
        let a = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let b = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        let c = clip_convex(&a, &b);
        assert!((polygon_area(&c) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cube_projections_are_permutations() {
        let mesh = build_benchmark_mesh(Preset::Cube3d, 1).unwrap();
        for k in 0..mesh.interfaces.len() {
            let p = mortar_projection(&mesh, k, ProjectionOptions::default()).unwrap();
            for r in 0..p.nrows() {
                let row: Vec<_> = p.row(r).collect();
                assert_eq!(row.len(), 1);
                assert_eq!(row[0].1, 1.0);
            }
            assert!((check_mortar_condition(&mesh, k, &p) - 1.0).abs() < 1e-12);
        }
    }
}
