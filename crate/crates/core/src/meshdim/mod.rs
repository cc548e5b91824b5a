//! Mixed-dimensional geometric hierarchy.
//!
//! A [`MixedDimMesh`] stores flat simplicial subdomains of every dimension
//! `0..=n` together with the codimension-one interfaces that couple a
//! subdomain to its higher-dimensional neighbours. The mortar grid of an
//! interface is the mesh of the lower-dimensional subdomain itself, so the
//! jump of the mortar space equals the lower-dimensional pressure space
//! cell by cell.

mod fields;
pub mod json;
mod planar;
mod presets;
mod refine;

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Point, GEOM_TOL};

pub use fields::{
    attach_scaling, validate_gradient_bound, ApertureLaw, FeatureParams, GradientReport,
    ParameterTable, Permeability, ScalingFields,
};
pub use fields::p1_gradient;
pub use planar::{Background, Fracture2d, JunctionPoint, PlanarLayout, PlanarMeshing};
pub use presets::{
    box_face_rule, build_benchmark_mesh, build_benchmark_mesh_with, build_family, default_parameters, single_fracture_layout,
    square2d_layout, structured_square, unfractured_layout, MeshOptions, Preset, MAX_LEVEL_2D, MAX_LEVEL_3D,
};
pub use refine::{red_children, refine, refine_lower};

/// Boundary condition carried by a boundary facet of a subdomain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum FacetTag {
    Dirichlet,
    Neumann,
    /// The facet lies on an interface to a lower-dimensional subdomain.
    Interface,
    /// Immersed fracture tip (no-flux).
    ImmersedTip,
}

/// Facet-level topology of one subdomain mesh.
#[derive(Clone, Debug, Default)]
pub struct Topology {
    /// Sorted vertex tuples.
    pub facets: Vec<Vec<usize>>,
    /// `cell_facets[c][i]` is the facet opposite local vertex `i` of cell `c`.
    pub cell_facets: Vec<Vec<usize>>,
    /// Owner cell (lowest index) and optional neighbour of each facet.
    pub facet_cells: Vec<(usize, Option<usize>)>,
    /// Local index (opposite vertex) of each facet in its owner cell.
    pub facet_local: Vec<usize>,
    index: HashMap<Vec<usize>, usize>,
}

impl Topology {
    fn build(dim: usize, cells: &[Vec<usize>]) -> Self {
        let mut topo = Topology::default();
        if dim == 0 {
            topo.cell_facets = vec![Vec::new(); cells.len()];
            return topo;
        }
        for (c, cell) in cells.iter().enumerate() {
            let mut local = Vec::with_capacity(cell.len());
            for i in 0..cell.len() {
                let key = facet_key(cell, i);
                let next = topo.facets.len();
                let f = *topo.index.entry(key.clone()).or_insert(next);
                if f == next {
                    topo.facets.push(key);
                    topo.facet_cells.push((c, None));
                    topo.facet_local.push(i);
                } else {
                    let entry = &mut topo.facet_cells[f];
                    assert!(entry.1.is_none(), "facet shared by more than two cells");
                    entry.1 = Some(c);
                }
                local.push(f);
            }
            topo.cell_facets.push(local);
        }
        topo
    }

    pub fn facet_index(&self, key: &[usize]) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn is_boundary(&self, f: usize) -> bool {
        self.facet_cells[f].1.is_none()
    }

    /// +1 if the facet's global normal is the outward normal of `cell`.
    pub fn orientation(&self, cell: usize, f: usize) -> f64 {
        if self.facet_cells[f].0 == cell {
            1.0
        } else {
            -1.0
        }
    }

    pub fn boundary_facets(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.facets.len()).filter(|&f| self.is_boundary(f))
    }
}

/// Sorted vertex tuple of the facet opposite local vertex `i`.
pub fn facet_key(cell: &[usize], i: usize) -> Vec<usize> {
    let mut key: Vec<usize> = cell
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, &v)| v)
        .collect();
    key.sort_unstable();
    key
}

#[derive(Clone, Debug)]
pub struct Subdomain {
    pub dim: usize,
    /// One-based index among subdomains of the same dimension.
    pub id: usize,
    /// Name of the physical feature this subdomain belongs to; parameter
    /// tables are keyed by it.
    pub feature: String,
    pub vertices: Vec<Point>,
    pub cells: Vec<Vec<usize>>,
    pub facet_tags: BTreeMap<Vec<usize>, FacetTag>,
    /// Parent cell in the previous refinement level (empty at level 0 or
    /// after import).
    pub parents: Vec<usize>,
    topology: OnceLock<Topology>,
}

impl Subdomain {
    pub fn new(dim: usize, id: usize, feature: impl Into<String>, vertices: Vec<Point>, cells: Vec<Vec<usize>>) -> Self {
        Subdomain {
            dim,
            id,
            feature: feature.into(),
            vertices,
            cells,
            facet_tags: BTreeMap::new(),
            parents: Vec::new(),
            topology: OnceLock::new(),
        }
    }

    pub fn point(id: usize, feature: impl Into<String>, x: Point) -> Self {
        Self::new(0, id, feature, vec![x], vec![vec![0]])
    }

    pub fn topology(&self) -> &Topology {
        self.topology.get_or_init(|| Topology::build(self.dim, &self.cells))
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_points(&self, c: usize) -> Vec<Point> {
        self.cells[c].iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn points_of(&self, verts: &[usize]) -> Vec<Point> {
        verts.iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn cell_measure(&self, c: usize) -> f64 {
        geometry::simplex_measure(&self.cell_points(c))
    }

    pub fn cell_centroid(&self, c: usize) -> Point {
        geometry::centroid(&self.cell_points(c))
    }

    pub fn measure(&self) -> f64 {
        (0..self.cells.len()).map(|c| self.cell_measure(c)).sum()
    }

    pub fn facet_measure(&self, f: usize) -> f64 {
        geometry::simplex_measure(&self.points_of(&self.topology().facets[f]))
    }

    pub fn facet_centroid(&self, f: usize) -> Point {
        geometry::centroid(&self.points_of(&self.topology().facets[f]))
    }

    /// Unit normal of facet `f` in its global orientation (outward from the
    /// owner cell).
    pub fn facet_normal(&self, f: usize) -> Point {
        let topo = self.topology();
        let (owner, _) = topo.facet_cells[f];
        geometry::outward_normal(&self.cell_points(owner), topo.facet_local[f])
    }

    /// Orthonormal tangent basis; the canonical axes for top-dimensional
    /// subdomains.
    pub fn frame(&self, ambient_dim: usize) -> Vec<Point> {
        if self.dim == 0 {
            return Vec::new();
        }
        if self.dim == ambient_dim {
            let mut axes = Vec::new();
            for k in 0..ambient_dim {
                let mut e = [0.0; 3];
                e[k] = 1.0;
                axes.push(e);
            }
            return axes;
        }
        geometry::simplex_frame(&self.cell_points(0))
    }

    pub fn diameter_max(&self) -> f64 {
        (0..self.cells.len())
            .map(|c| geometry::simplex_diameter(&self.cell_points(c)))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Interface {
    /// Dimension of the lower subdomain (and of the mortar grid).
    pub dim: usize,
    /// Index into `MixedDimMesh::subdomains`.
    pub lower: usize,
    /// Local side index `j` among the interfaces of the lower subdomain.
    pub side: usize,
    pub upper: usize,
    /// Boundary facets of the upper subdomain lying on the interface.
    pub upper_facets: Vec<Vec<usize>>,
    /// Lower-subdomain cells forming the mortar grid.
    pub mortar_cells: Vec<usize>,
    /// Orientation of ν relative to the interface reference normal.
    pub normal_sign: i8,
}

#[derive(Clone, Debug)]
pub struct MixedDimMesh {
    pub ambient_dim: usize,
    pub subdomains: Vec<Subdomain>,
    pub interfaces: Vec<Interface>,
    pub refinement_level: usize,
    /// Fracture-tip locations used to exclude singular neighbourhoods from
    /// error norms.
    pub tips: Vec<Point>,
}

impl MixedDimMesh {
    pub fn subdomain_indices_of_dim(&self, d: usize) -> Vec<usize> {
        (0..self.subdomains.len()).filter(|&s| self.subdomains[s].dim == d).collect()
    }

    /// `N^d` for `d = 0..=n`.
    pub fn counts(&self) -> Vec<usize> {
        (0..=self.ambient_dim)
            .map(|d| self.subdomains.iter().filter(|s| s.dim == d).count())
            .collect()
    }

    pub fn find(&self, dim: usize, id: usize) -> Option<usize> {
        self.subdomains.iter().position(|s| s.dim == dim && s.id == id)
    }

    /// Interfaces whose lower subdomain is `s`, ordered by side.
    pub fn interfaces_of_lower(&self, s: usize) -> Vec<usize> {
        let mut ks: Vec<usize> = (0..self.interfaces.len()).filter(|&k| self.interfaces[k].lower == s).collect();
        ks.sort_by_key(|&k| self.interfaces[k].side);
        ks
    }

    pub fn interfaces_of_upper(&self, s: usize) -> Vec<usize> {
        (0..self.interfaces.len()).filter(|&k| self.interfaces[k].upper == s).collect()
    }

    /// Unit vector in the upper subdomain's tangent space orthogonal to the
    /// lower subdomain, with its first non-negligible component positive.
    pub fn reference_normal(&self, lower: usize, upper: usize) -> Point {
        let n = self.ambient_dim;
        let lower_frame = self.subdomains[lower].frame(n);
        let mut best = [0.0; 3];
        let mut best_norm = 0.0;
        for b in self.subdomains[upper].frame(n) {
            let mut w = b;
            for l in &lower_frame {
                w = geometry::sub(&w, &geometry::scale(l, geometry::dot(&w, l)));
            }
            let nw = geometry::norm(&w);
            if nw > best_norm + 1e-12 {
                best_norm = nw;
                best = w;
            }
        }
        let mut r = geometry::normalize(&best);
        if let Some(&c) = r.iter().find(|c| c.abs() > 1e-12) {
            if c < 0.0 {
                r = geometry::scale(&r, -1.0);
            }
        }
        r
    }

    /// Unit normal ν of interface `k`, directed from the upper to the lower
    /// subdomain.
    pub fn interface_normal(&self, k: usize) -> Point {
        let it = &self.interfaces[k];
        geometry::scale(&self.reference_normal(it.lower, it.upper), it.normal_sign as f64)
    }

    /// Links every boundary facet of a `(d+1)`-subdomain that lies on a
    /// `d`-subdomain into interfaces, grouped by side, and assigns side
    /// indices. Existing interfaces are replaced.
    pub fn link_interfaces(&mut self) {
        let mut interfaces = Vec::new();
        for lower in 0..self.subdomains.len() {
            let d = self.subdomains[lower].dim;
            if d >= self.ambient_dim {
                continue;
            }
            let mut found: Vec<Interface> = Vec::new();
            for upper in 0..self.subdomains.len() {
                if self.subdomains[upper].dim != d + 1 {
                    continue;
                }
                let refn = self.reference_normal(lower, upper);
                let mut plus = Vec::new();
                let mut minus = Vec::new();
                let up = &self.subdomains[upper];
                let topo = up.topology();
                for f in topo.boundary_facets() {
                    let pts = up.points_of(&topo.facets[f]);
                    if !self.facet_on_subdomain(&pts, lower) {
                        continue;
                    }
                    let nu = up.facet_normal(f);
                    if geometry::dot(&nu, &refn) > 0.0 {
                        plus.push(topo.facets[f].clone());
                    } else {
                        minus.push(topo.facets[f].clone());
                    }
                }
                for (facets, sign) in [(plus, 1i8), (minus, -1i8)] {
                    if facets.is_empty() {
                        continue;
                    }
                    let mut facets = facets;
                    facets.sort();
                    found.push(Interface {
                        dim: d,
                        lower,
                        side: 0,
                        upper,
                        upper_facets: facets,
                        mortar_cells: (0..self.subdomains[lower].num_cells()).collect(),
                        normal_sign: sign,
                    });
                }
            }
            for (j, it) in found.iter_mut().enumerate() {
                it.side = j;
            }
            interfaces.extend(found);
        }
        self.interfaces = interfaces;
    }

    fn facet_on_subdomain(&self, facet: &[Point], lower: usize) -> bool {
        let low = &self.subdomains[lower];
        let tol = 10.0 * GEOM_TOL;
        if low.dim == 0 {
            return facet.len() == 1 && geometry::dist(&facet[0], &low.vertices[0]) <= tol;
        }
        if facet.len() != low.dim + 1 {
            return false;
        }
        let hull = low.cell_points(0);
        if facet.iter().any(|p| geometry::distance_to_affine_hull(p, &hull) > tol) {
            return false;
        }
        let c = geometry::centroid(facet);
        (0..low.num_cells()).any(|k| geometry::simplex_contains(&c, &low.cell_points(k), tol))
    }

    /// Tags every boundary facet: interface facets first, then facets for
    /// which `on_boundary` returns a tag (the outer boundary); the remaining
    /// facets of lower-dimensional subdomains are immersed tips.
    pub fn tag_boundaries(&mut self, on_boundary: &dyn Fn(&[Point]) -> Option<FacetTag>) {
        let mut interface_facets: Vec<Vec<Vec<usize>>> = vec![Vec::new(); self.subdomains.len()];
        for it in &self.interfaces {
            interface_facets[it.upper].extend(it.upper_facets.iter().cloned());
        }
        for (s, sub) in self.subdomains.iter_mut().enumerate() {
            let mut tags = BTreeMap::new();
            let topo = sub.topology();
            for f in topo.boundary_facets() {
                let key = topo.facets[f].clone();
                let tag = if interface_facets[s].contains(&key) {
                    FacetTag::Interface
                } else if let Some(t) = on_boundary(&sub.points_of(&key)) {
                    t
                } else {
                    FacetTag::ImmersedTip
                };
                tags.insert(key, tag);
            }
            sub.facet_tags = tags;
        }
    }

    /// Checks every structural invariant of the hierarchy.
    pub fn validate(&self) -> Result<()> {
        let problems = self.invariant_violations();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidMesh(problems.join("; ")))
        }
    }

    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.ambient_dim;
        if !(n == 2 || n == 3) {
            out.push(format!("ambient dimension {n} not in {{2,3}}"));
            return out;
        }
        for (s, sub) in self.subdomains.iter().enumerate() {
            let name = format!("Ω^{}_{}", sub.dim, sub.id);
            if sub.dim > n {
                out.push(format!("{name}: dimension exceeds ambient"));
                continue;
            }
            if sub.dim == 0 && (sub.vertices.len() != 1 || sub.cells.len() != 1) {
                out.push(format!("{name}: a point subdomain has exactly one vertex and one cell"));
            }
            for (c, cell) in sub.cells.iter().enumerate() {
                if cell.len() != sub.dim + 1 || cell.iter().any(|&v| v >= sub.vertices.len()) {
                    out.push(format!("{name}: malformed cell {c}"));
                } else if sub.dim > 0 && sub.cell_measure(c) <= 1e-14 {
                    out.push(format!("{name}: degenerate cell {c}"));
                }
            }
            if sub.dim > 0 {
                let topo = sub.topology();
                let boundary: Vec<&Vec<usize>> = topo.boundary_facets().map(|f| &topo.facets[f]).collect();
                if boundary.len() != sub.facet_tags.len() || boundary.iter().any(|k| !sub.facet_tags.contains_key(*k)) {
                    out.push(format!("{name}: boundary facets and facet tags disagree"));
                }
            }
            if sub.dim == n && !sub.facet_tags.values().any(|t| *t == FacetTag::Dirichlet) {
                out.push(format!("{name}: top-dimensional subdomain without Dirichlet boundary"));
            }
            if sub.dim == n && sub.facet_tags.values().any(|t| *t == FacetTag::ImmersedTip) {
                out.push(format!("{name}: top-dimensional subdomain with an immersed tip facet"));
            }
            if sub.dim < n && self.interfaces_of_lower(s).is_empty() {
                out.push(format!("{name}: no adjacent interface (empty J)"));
            }
        }
        // every interface-tagged facet belongs to exactly one interface
        let mut claimed: Vec<HashMap<&Vec<usize>, usize>> = vec![HashMap::new(); self.subdomains.len()];
        for it in &self.interfaces {
            for f in &it.upper_facets {
                *claimed[it.upper].entry(f).or_insert(0) += 1;
            }
        }
        for (s, sub) in self.subdomains.iter().enumerate() {
            for (key, tag) in &sub.facet_tags {
                let count = claimed[s].get(key).copied().unwrap_or(0);
                if (*tag == FacetTag::Interface) != (count == 1) {
                    out.push(format!("Ω^{}_{}: facet {key:?} tagged {tag:?} but claimed by {count} interfaces", sub.dim, sub.id));
                }
            }
        }
        for (k, it) in self.interfaces.iter().enumerate() {
            out.extend(self.interface_violations(k, it));
        }
        // decomposition identity for the top dimension: the unit box
        let top: f64 = self.subdomains.iter().filter(|s| s.dim == n).map(|s| s.measure()).sum();
        if (top - 1.0).abs() > 1e-12 {
            out.push(format!("top-dimensional measure {top} differs from the unit box"));
        }
        out
    }

    fn interface_violations(&self, k: usize, it: &Interface) -> Vec<String> {
        let mut out = Vec::new();
        let name = format!("interface {k}");
        if it.lower >= self.subdomains.len() || it.upper >= self.subdomains.len() {
            out.push(format!("{name}: subdomain index out of range"));
            return out;
        }
        let low = &self.subdomains[it.lower];
        let up = &self.subdomains[it.upper];
        if low.dim != it.dim || up.dim != it.dim + 1 {
            out.push(format!("{name}: dimensions {} / {} do not form a codimension-one pair", low.dim, up.dim));
            return out;
        }
        let mut mortar = it.mortar_cells.clone();
        mortar.sort_unstable();
        if mortar != (0..low.num_cells()).collect::<Vec<_>>() {
            out.push(format!("{name}: mortar grid does not cover the lower subdomain cells exactly once"));
        }
        let mortar_measure: f64 = it.mortar_cells.iter().filter(|&&c| c < low.num_cells()).map(|&c| low.cell_measure(c)).sum();
        let lower_measure = low.measure();
        if (mortar_measure - lower_measure).abs() > 1e-12 * lower_measure.max(1.0) {
            out.push(format!("{name}: mortar measure {mortar_measure} != subdomain measure {lower_measure}"));
        }
        let topo = up.topology();
        let nu = self.interface_normal(k);
        let mut facet_measure = 0.0;
        for key in &it.upper_facets {
            let Some(f) = topo.facet_index(key) else {
                out.push(format!("{name}: facet {key:?} not in upper mesh"));
                continue;
            };
            if !topo.is_boundary(f) {
                out.push(format!("{name}: facet {key:?} is interior to the upper mesh"));
            }
            let pts = up.points_of(key);
            if !self.facet_on_subdomain(&pts, it.lower) {
                out.push(format!("{name}: facet {key:?} does not lie on the lower subdomain"));
            }
            facet_measure += geometry::simplex_measure(&pts);
            let owner = topo.facet_cells[f].0;
            let toward = geometry::sub(&geometry::centroid(&pts), &up.cell_centroid(owner));
            if geometry::dot(&nu, &toward) <= 0.0 {
                out.push(format!("{name}: normal not directed from the upper to the lower subdomain at {key:?}"));
            }
        }
        if (facet_measure - lower_measure).abs() > 1e-12 * lower_measure.max(1.0) {
            out.push(format!("{name}: facet measure {facet_measure} != subdomain measure {lower_measure}"));
        }
        out
    }

    /// One-line description per dimension, e.g. `N^3=8 N^2=12 N^1=6 N^0=1`.
    pub fn describe_counts(&self) -> String {
        let counts = self.counts();
        (0..=self.ambient_dim)
            .rev()
            .map(|d| format!("N^{d}={}", counts[d]))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology_of_two_triangles() {
        let sub = Subdomain::new(
            2,
            1,
            "matrix",
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
            vec![vec![0, 1, 2], vec![0, 2, 3]],
        );
        let topo = sub.topology();
        assert_eq!(topo.facets.len(), 5);
        assert_eq!(topo.boundary_facets().count(), 4);
        let diag = topo.facet_index(&[0, 2]).unwrap();
        assert_eq!(topo.facet_cells[diag], (0, Some(1)));
        assert_eq!(topo.orientation(0, diag), 1.0);
        assert_eq!(topo.orientation(1, diag), -1.0);
        // owner-outward normal of the diagonal points away from cell 0
        let n = sub.facet_normal(diag);
        assert!(n[0] < 0.0 && n[1] > 0.0);
    }
}
