use std::collections::{BTreeMap, HashMap};

use super::{Interface, MixedDimMesh, Subdomain};
use crate::geometry;

/// Children of a simplex under uniform red refinement, `2^d` of them.
/// `mid(a, b)` returns the vertex index of the edge midpoint. For
/// tetrahedra this is Bey's rule, which keeps the children in a bounded
/// number of similarity classes when the parent vertices are ordered along a
/// Kuhn path.
pub fn red_children(verts: &[usize], mid: &mut dyn FnMut(usize, usize) -> usize) -> Vec<Vec<usize>> {
    match verts.len() {
        1 => vec![verts.to_vec()],
        2 => {
            let (x0, x1) = (verts[0], verts[1]);
            let m = mid(x0, x1);
            vec![vec![x0, m], vec![m, x1]]
        }
        3 => {
            let (x0, x1, x2) = (verts[0], verts[1], verts[2]);
            let m01 = mid(x0, x1);
            let m02 = mid(x0, x2);
            let m12 = mid(x1, x2);
            vec![vec![x0, m01, m02], vec![m01, x1, m12], vec![m02, m12, x2], vec![m01, m12, m02]]
        }
        4 => {
            let (x0, x1, x2, x3) = (verts[0], verts[1], verts[2], verts[3]);
            let x01 = mid(x0, x1);
            let x02 = mid(x0, x2);
            let x03 = mid(x0, x3);
            let x12 = mid(x1, x2);
            let x13 = mid(x1, x3);
            let x23 = mid(x2, x3);
            vec![
                vec![x0, x01, x02, x03],
                vec![x01, x1, x12, x13],
                vec![x02, x12, x2, x23],
                vec![x03, x13, x23, x3],
                vec![x01, x02, x03, x13],
                vec![x01, x02, x12, x13],
                vec![x02, x03, x13, x23],
                vec![x02, x12, x13, x23],
            ]
        }
        n => panic!("cannot refine a simplex with {n} vertices"),
    }
}

fn refine_subdomain(sub: &Subdomain) -> (Subdomain, HashMap<(usize, usize), usize>) {
    let mut vertices = sub.vertices.clone();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut cells = Vec::with_capacity(sub.cells.len() << sub.dim);
    let mut parents = Vec::with_capacity(sub.cells.len() << sub.dim);
    for (c, cell) in sub.cells.iter().enumerate() {
        let mut mid = |a: usize, b: usize| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(geometry::midpoint(&sub.vertices[a], &sub.vertices[b]));
                vertices.len() - 1
            })
        };
        for child in red_children(cell, &mut mid) {
            cells.push(child);
            parents.push(c);
        }
    }
    let mut lookup = |a: usize, b: usize| midpoints[&(a.min(b), a.max(b))];
    let mut facet_tags = BTreeMap::new();
    for (key, tag) in &sub.facet_tags {
        for mut child in red_children(key, &mut lookup) {
            child.sort_unstable();
            facet_tags.insert(child, *tag);
        }
    }
    let mut out = Subdomain::new(sub.dim, sub.id, sub.feature.clone(), vertices, cells);
    out.facet_tags = facet_tags;
    out.parents = parents;
    (out, midpoints)
}

/// Uniform red refinement of every subdomain, facet set and mortar grid.
pub fn refine(mesh: &MixedDimMesh) -> MixedDimMesh {
    let refined: Vec<(Subdomain, HashMap<(usize, usize), usize>)> = mesh.subdomains.iter().map(refine_subdomain).collect();
    let interfaces = mesh
        .interfaces
        .iter()
        .map(|it| {
            let midpoints = &refined[it.upper].1;
            let mut lookup = |a: usize, b: usize| midpoints[&(a.min(b), a.max(b))];
            let mut upper_facets = Vec::new();
            for key in &it.upper_facets {
                for mut child in red_children(key, &mut lookup) {
                    child.sort_unstable();
                    upper_facets.push(child);
                }
            }
            upper_facets.sort();
            let nchild = 1usize << it.dim;
            let mortar_cells = it
                .mortar_cells
                .iter()
                .flat_map(|&c| (0..nchild).map(move |k| c * nchild + k))
                .collect();
            Interface { upper_facets, mortar_cells, ..it.clone() }
        })
        .collect();
    MixedDimMesh {
        ambient_dim: mesh.ambient_dim,
        subdomains: refined.into_iter().map(|(s, _)| s).collect(),
        interfaces,
        refinement_level: mesh.refinement_level + 1,
        tips: mesh.tips.clone(),
    }
}

/// Refines subdomain `s` alone, leaving its neighbours untouched. When `s`
/// is the lower side of an interface the mortar grid becomes twice as fine
/// as the neighbouring traces. `s` must not carry interfaces of positive
/// dimension on its own boundary.
pub fn refine_lower(mesh: &MixedDimMesh, s: usize) -> MixedDimMesh {
    assert!(
        mesh.interfaces.iter().all(|it| it.upper != s || it.dim == 0),
        "subdomain {s} is the upper side of a positive-dimensional interface"
    );
    let mut out = mesh.clone();
    let (refined, _) = refine_subdomain(&mesh.subdomains[s]);
    let nchild = 1usize << refined.dim;
    out.subdomains[s] = refined;
    for it in out.interfaces.iter_mut().filter(|it| it.lower == s) {
        it.mortar_cells = it.mortar_cells.iter().flat_map(|&c| (0..nchild).map(move |k| c * nchild + k)).collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshdim::FacetTag;

    fn single(dim: usize, pts: Vec<[f64; 3]>) -> Subdomain {
        let cell: Vec<usize> = (0..pts.len()).collect();
        Subdomain::new(dim, 1, "matrix", pts, vec![cell])
    }

    #[test]
    fn interval_splits_in_two() {
        let s = single(1, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let (r, _) = refine_subdomain(&s);
        assert_eq!(r.cells.len(), 2);
        assert_eq!(r.cell_points(0), vec![[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]]);
        assert_eq!(r.cell_points(1), vec![[0.5, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    }

    #[test]
    fn triangle_has_four_congruent_children() {
        let s = single(2, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let (r, _) = refine_subdomain(&s);
        assert_eq!(r.cells.len(), 4);
        for c in 0..4 {
            assert!((r.cell_measure(c) - 0.125).abs() < 1e-15);
            let mut edges: Vec<f64> = {
                let p = r.cell_points(c);
                vec![geometry::dist(&p[0], &p[1]), geometry::dist(&p[1], &p[2]), geometry::dist(&p[0], &p[2])]
            };
            edges.sort_by(f64::total_cmp);
            assert!((edges[0] - 0.5).abs() < 1e-15 && (edges[2] - 0.5f64.hypot(0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn tetrahedron_children_tile_the_parent() {
        let s = single(3, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 1.0, 1.0]]);
        let (r, _) = refine_subdomain(&s);
        assert_eq!(r.cells.len(), 8);
        let total: f64 = (0..8).map(|c| r.cell_measure(c)).sum();
        assert!((total - 1.0 / 6.0).abs() < 1e-15);
        for c in 0..8 {
            assert!((r.cell_measure(c) - 1.0 / 48.0).abs() < 1e-15);
        }
        // every child face is either interior or a child of a parent face
        let topo = r.topology();
        assert_eq!(topo.boundary_facets().count(), 16);
    }

    #[test]
    fn facet_tags_follow_refinement() {
        let mut s = single(2, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        s.facet_tags.insert(vec![0, 1], FacetTag::Dirichlet);
        s.facet_tags.insert(vec![1, 2], FacetTag::Neumann);
        s.facet_tags.insert(vec![0, 2], FacetTag::Neumann);
        let (r, _) = refine_subdomain(&s);
        assert_eq!(r.facet_tags.len(), 6);
        let topo = r.topology();
        for f in topo.boundary_facets() {
            assert!(r.facet_tags.contains_key(&topo.facets[f]));
        }
        assert_eq!(r.facet_tags.values().filter(|t| **t == FacetTag::Dirichlet).count(), 2);
    }
}
