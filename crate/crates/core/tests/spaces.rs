use mdfrac::geometry::{self, Point};
use mdfrac::meshdim::{build_benchmark_mesh, build_benchmark_mesh_with, structured_square, MeshOptions, MixedDimMesh, Preset};
use mdfrac::spaces::{all_projections, build_layout, check_mortar_condition, extension_matrix, trace_values, ProjectionOptions};
use proptest::prelude::*;

/// Overlap length of every (trace facet, mortar cell) pair of a 1D
/// interface, by projecting both onto the interface line.
fn overlaps(mesh: &MixedDimMesh, k: usize) -> Vec<Vec<f64>> {
    let it = &mesh.interfaces[k];
    let up = &mesh.subdomains[it.upper];
    let low = &mesh.subdomains[it.lower];
    let p0 = low.cell_points(0);
    let dir = geometry::normalize(&geometry::sub(&p0[1], &p0[0]));
    let t = |x: &Point| geometry::dot(&geometry::sub(x, &p0[0]), &dir);
    let span = |pts: &[Point]| (t(&pts[0]).min(t(&pts[1])), t(&pts[0]).max(t(&pts[1])));
    it.upper_facets
        .iter()
        .map(|key| {
            let (a, b) = span(&up.points_of(key));
            it.mortar_cells
                .iter()
                .map(|&c| {
                    let (lo, hi) = span(&low.cell_points(c));
                    (hi.min(b) - lo.max(a)).max(0.0)
                })
                .collect()
        })
        .collect()
}

fn facet_lengths(mesh: &MixedDimMesh, k: usize) -> Vec<f64> {
    let it = &mesh.interfaces[k];
    let up = &mesh.subdomains[it.upper];
    it.upper_facets.iter().map(|f| geometry::simplex_measure(&up.points_of(f))).collect()
}

fn nonmatching_fracture(seed: u64) -> MixedDimMesh {
    build_benchmark_mesh_with(Preset::SingleFracture2d, 0, &MeshOptions { nonmatching: true, jitter: 0.2, seed }).unwrap()
}

#[test]
fn projection_rows_are_partitions_of_unity() {
    for preset in [Preset::Square2d, Preset::Cube3d, Preset::SingleFracture2d] {
        let mesh = build_benchmark_mesh(preset, 1).unwrap();
        let projections = all_projections(&mesh, ProjectionOptions::default()).unwrap();
        for p in &projections {
            for r in 0..p.nrows() {
                let sum: f64 = p.row(r).map(|(_, v)| v).sum();
                assert!((sum - 1.0).abs() < 1e-12, "{preset}: row sum {sum}");
            }
        }
    }
}

#[test]
fn extension_reproduces_the_projection_on_traces() {
    let mesh = build_benchmark_mesh(Preset::Square2d, 1).unwrap();
    let layout = build_layout(&mesh);
    let projections = all_projections(&mesh, ProjectionOptions::default()).unwrap();
    let ext = extension_matrix(&mesh, &layout, &projections);
    let lambda: Vec<f64> = (0..layout.n_mortar).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
    let flux = ext.matvec(&lambda);
    for k in 0..mesh.interfaces.len() {
        let mo = layout.mortar_offset[k];
        let mu = &lambda[mo..mo + mesh.interfaces[k].mortar_cells.len()];
        let expected = projections[k].matvec(mu);
        for (a, b) in trace_values(&mesh, &layout, k, &flux).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    // support is the trace facets only
    let trace: std::collections::BTreeSet<usize> = layout.flux_trace.iter().flatten().copied().collect();
    assert!(ext.triplets().all(|(r, _, _)| trace.contains(&r)));
}

#[test]
fn mortar_condition_on_matching_and_finer_mortars() {
    let matching = structured_square(4, true, false, &[0]).unwrap();
    let p = all_projections(&matching, ProjectionOptions::default()).unwrap();
    for k in 0..matching.interfaces.len() {
        assert!((check_mortar_condition(&matching, k, &p[k]) - 1.0).abs() < 1e-12);
    }
    let finer = mdfrac::meshdim::refine_lower(&matching, matching.subdomain_indices_of_dim(1)[0]);
    finer.validate().unwrap();
    let p = all_projections(&finer, ProjectionOptions::default()).unwrap();
    for k in 0..finer.interfaces.len() {
        assert!(check_mortar_condition(&finer, k, &p[k]) < 1e-12);
    }
    // a mortar coarser than the trace keeps a positive constant
    let coarser = build_benchmark_mesh(Preset::SingleFracture2d, 1).unwrap();
    let p = all_projections(&coarser, ProjectionOptions::default()).unwrap();
    for k in 0..coarser.interfaces.len() {
        assert!(check_mortar_condition(&coarser, k, &p[k]) > 0.1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn projection_matches_overlap_integrals(seed in 0u64..1000, values in proptest::collection::vec(-10.0f64..10.0, 64)) {
        let mesh = nonmatching_fracture(seed);
        let projections = all_projections(&mesh, ProjectionOptions::default()).unwrap();
        let mut split_facets = 0;
        for k in 0..mesh.interfaces.len() {
            let ov = overlaps(&mesh, k);
            let len = facet_lengths(&mesh, k);
            split_facets += ov.iter().filter(|row| row.iter().filter(|o| **o > 1e-12).count() > 1).count();
            let mu: Vec<f64> = (0..projections[k].ncols()).map(|i| values[i % values.len()]).collect();
            let fast = projections[k].matvec(&mu);
            for r in 0..ov.len() {
                let slow: f64 = ov[r].iter().zip(&mu).map(|(o, m)| o * m).sum::<f64>() / len[r];
                prop_assert!((fast[r] - slow).abs() <= 1e-12 * (1.0 + slow.abs()));
            }
        }
        prop_assert!(split_facets > 0, "grids should not match");
    }

    #[test]
    fn projection_adjoint_matches_brute_force(seed in 0u64..1000, values in proptest::collection::vec(-10.0f64..10.0, 64)) {
        let mesh = nonmatching_fracture(seed);
        let projections = all_projections(&mesh, ProjectionOptions::default()).unwrap();
        for k in 0..mesh.interfaces.len() {
            let it = &mesh.interfaces[k];
            let low = &mesh.subdomains[it.lower];
            let ov = overlaps(&mesh, k);
            let len = facet_lengths(&mesh, k);
            let nm = it.mortar_cells.len();
            let mu: Vec<f64> = (0..nm).map(|i| values[i % values.len()]).collect();
            let v: Vec<f64> = (0..len.len()).map(|i| values[(i + 7) % values.len()]).collect();
            // (Π̂μ, v) on the trace grid
            let lhs: f64 = projections[k].matvec(&mu).iter().zip(&v).zip(&len).map(|((a, b), w)| a * b * w).sum();
            // (μ, Π̂*v) on the mortar grid with Π̂* from overlaps
            let adj: Vec<f64> = (0..nm)
                .map(|c| (0..len.len()).map(|r| ov[r][c] * v[r]).sum::<f64>() / low.cell_measure(it.mortar_cells[c]))
                .collect();
            let rhs: f64 = (0..nm).map(|c| mu[c] * adj[c] * low.cell_measure(it.mortar_cells[c])).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
