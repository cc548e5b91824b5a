use std::sync::Arc;

use mdfrac::assembly::{assemble_system, ProblemSpec};
use mdfrac::meshdim::{attach_scaling, build_benchmark_mesh, default_parameters, FacetTag, MixedDimMesh, ParameterTable, Preset};
use mdfrac::solver::{conservation_residual, solve, Solution};
use mdfrac::spaces::DofLayout;

fn run(mesh: &MixedDimMesh, params: &ParameterTable, g: fn(&[f64; 3]) -> f64) -> (mdfrac::assembly::SaddleSystem, Solution) {
    let fields = attach_scaling(mesh, params).unwrap();
    let problem = ProblemSpec::new(mesh, &fields, Arc::new(g));
    let system = assemble_system(&problem).unwrap();
    let sol = solve(&system, 1e-10).unwrap();
    (system, sol)
}

/// Total flux leaving the top-dimensional subdomain through box faces
/// `x[axis] == value`.
fn outflow(mesh: &MixedDimMesh, layout: &DofLayout, flux: &[f64], axis: usize, value: f64) -> f64 {
    let s = mesh.subdomain_indices_of_dim(mesh.ambient_dim)[0];
    let sub = &mesh.subdomains[s];
    let topo = sub.topology();
    let mut total = 0.0;
    for (key, tag) in &sub.facet_tags {
        if *tag == FacetTag::Interface {
            continue;
        }
        if sub.points_of(key).iter().all(|p| (p[axis] - value).abs() < 1e-12) {
            total += flux[layout.flux_offset[s] + topo.facet_index(key).unwrap()];
        }
    }
    total
}

#[test]
fn unfractured_reproduces_linear_pressure() {
    let mesh = build_benchmark_mesh(Preset::Unfractured2d, 2).unwrap();
    let (system, sol) = run(&mesh, &default_parameters(Preset::Unfractured2d), |x| 1.0 - x[1]);
    let sub = &mesh.subdomains[0];
    for c in 0..sub.num_cells() {
        let x = sub.cell_centroid(c);
        assert!((sol.p[c] - (1.0 - x[1])).abs() < 1e-10, "cell {c}: {} vs {}", sol.p[c], 1.0 - x[1]);
    }
    // u = (0, 1): facet flux = normal_y · |F|
    for f in 0..sub.topology().facets.len() {
        let n = sub.facet_normal(f);
        let expected = n[1] * sub.facet_measure(f);
        assert!((sol.flux[f] - expected).abs() < 1e-10);
    }
    assert!(conservation_residual(&sol, &system).iter().all(|r| r.abs() < 1e-12));
}

#[test]
fn zero_data_gives_zero_solution() {
    let mesh = build_benchmark_mesh(Preset::Square2d, 0).unwrap();
    let (system, sol) = run(&mesh, &default_parameters(Preset::Square2d), |_| 0.0);
    assert!(system.rhs.iter().all(|v| *v == 0.0));
    assert!(sol.x.iter().all(|v| *v == 0.0));
    assert!(conservation_residual(&sol, &system).iter().all(|r| *r == 0.0));
}

#[test]
fn series_resistance_through_fracture() {
    let mesh = build_benchmark_mesh(Preset::SingleFracture2d, 2).unwrap();
    let (system, sol) = run(&mesh, &default_parameters(Preset::SingleFracture2d), |x| 1.0 - x[0]);
    let out = outflow(&mesh, &system.layout, &sol.flux, 0, 1.0);
    let inflow = -outflow(&mesh, &system.layout, &sol.flux, 0, 0.0);
    assert!((out - 1.0 / 3.0).abs() < 1e-3 / 3.0, "outflow {out}");
    assert!((inflow - out).abs() < 1e-10);
}

#[test]
fn large_normal_permeability_removes_the_resistance() {
    let mesh = build_benchmark_mesh(Preset::SingleFracture2d, 2).unwrap();
    let mut params = default_parameters(Preset::SingleFracture2d);
    params.features.get_mut("fracture").unwrap().normal_permeability = 1e8;
    let (system, sol) = run(&mesh, &params, |x| 1.0 - x[0]);
    let out = outflow(&mesh, &system.layout, &sol.flux, 0, 1.0);
    assert!((out - 1.0).abs() < 1e-5, "outflow {out}");
}

#[test]
fn repeated_solves_are_bit_identical() {
    let mesh = build_benchmark_mesh(Preset::Square2d, 1).unwrap();
    let params = default_parameters(Preset::Square2d);
    let (_, a) = run(&mesh, &params, |x| 1.0 - x[1]);
    let (_, b) = run(&mesh, &params, |x| 1.0 - x[1]);
    assert_eq!(a.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn cube_reproduces_linear_pressure_in_every_dimension() {
    // every feature is axis aligned, so with a huge normal permeability the
    // pressure jumps vanish and p = 1 − x3 holds in all dimensions
    let mesh = build_benchmark_mesh(Preset::Cube3d, 1).unwrap();
    let mut params = default_parameters(Preset::Cube3d);
    for (name, feature) in params.features.iter_mut() {
        if name != "matrix" {
            feature.normal_permeability = 1e10;
        }
    }
    let (system, sol) = run(&mesh, &params, |x| 1.0 - x[2]);
    for (s, sub) in mesh.subdomains.iter().enumerate() {
        for c in 0..sub.num_cells() {
            let x = sub.cell_centroid(c);
            let p = sol.p[system.layout.pressure_offset[s] + c];
            assert!((p - (1.0 - x[2])).abs() < 1e-9, "Ω^{}_{} cell {c}: {p} vs {}", sub.dim, sub.id, 1.0 - x[2]);
        }
    }
}
