use std::sync::Arc;

use mdfrac::assembly::{assemble_mortar_terms, assemble_system, assemble_with_extension, ProblemSpec, SaddleSystem};
use mdfrac::meshdim::{
    attach_scaling, build_benchmark_mesh, default_parameters, structured_square, ApertureLaw, FeatureParams, MixedDimMesh,
    ParameterTable, Permeability, Preset,
};
use mdfrac::solver::solve;
use mdfrac::sparse::{BlockLabel, SparseOperator};
use mdfrac::spaces::{all_projections, build_layout, extension_matrix, ProjectionOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system(mesh: &MixedDimMesh, params: &ParameterTable, g: fn(&[f64; 3]) -> f64) -> SaddleSystem {
    let fields = attach_scaling(mesh, params).unwrap();
    assemble_system(&ProblemSpec::new(mesh, &fields, Arc::new(g))).unwrap()
}

fn square2d_g(x: &[f64; 3]) -> f64 {
    1.0 - x[1]
}

#[test]
fn system_is_exactly_symmetric() {
    for preset in [Preset::Square2d, Preset::Cube3d, Preset::SingleFracture2d] {
        let mesh = build_benchmark_mesh(preset, 1).unwrap();
        let s = system(&mesh, &default_parameters(preset), preset.boundary_pressure());
        assert_eq!(s.matrix.max_asymmetry(), 0.0, "{preset}");
    }
}

#[test]
fn block_sizes_follow_the_layout() {
    let mesh = build_benchmark_mesh(Preset::Square2d, 1).unwrap();
    let s = system(&mesh, &default_parameters(Preset::Square2d), square2d_g);
    let l = &s.layout;
    let n = l.n_u0() + l.n_mortar + l.n_pressure;
    assert_eq!(s.matrix.nrows(), n);
    assert_eq!(s.matrix.ncols(), n);
    assert_eq!(s.rhs.len(), n);
    assert_eq!((s.a_uu.nrows(), s.a_uu.ncols()), (l.n_u0(), l.n_u0()));
    assert_eq!((s.a_ul.nrows(), s.a_ul.ncols()), (l.n_u0(), l.n_mortar));
    assert_eq!((s.a_ll.nrows(), s.a_ll.ncols()), (l.n_mortar, l.n_mortar));
    assert_eq!((s.b_u.nrows(), s.b_u.ncols()), (l.n_pressure, l.n_u0()));
    assert_eq!((s.b_l.nrows(), s.b_l.ncols()), (l.n_pressure, l.n_mortar));
    let cells: usize = mesh.subdomains.iter().map(|s| s.num_cells()).sum();
    let mortars: usize = mesh.interfaces.iter().map(|i| i.mortar_cells.len()).sum();
    assert_eq!((l.n_pressure, l.n_mortar), (cells, mortars));
    // pressure block of the matrix is empty
    let [_, _, op] = l.block_offsets();
    assert!(s.matrix.triplets().all(|(r, c, _)| r < op || c < op));
}

fn scaled(params: &ParameterTable, factor: f64) -> ParameterTable {
    let mut out = params.clone();
    for p in out.features.values_mut() {
        if let Permeability::Isotropic(k) = &mut p.permeability {
            *k *= factor;
        }
        p.normal_permeability *= factor;
    }
    out
}

#[test]
fn doubling_permeabilities_and_halving_data_halves_pressure() {
    let mesh = build_benchmark_mesh(Preset::Square2d, 1).unwrap();
    let params = default_parameters(Preset::Square2d);
    let a = solve(&system(&mesh, &params, square2d_g), 1e-12).unwrap();
    let b = solve(&system(&mesh, &scaled(&params, 2.0), |x| 0.5 * (1.0 - x[1])), 1e-12).unwrap();
    let pmax = a.p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let umax = a.flux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (pa, pb) in a.p.iter().zip(&b.p) {
        assert!((0.5 * pa - pb).abs() <= 1e-9 * pmax);
    }
    for (ua, ub) in a.flux.iter().zip(&b.flux) {
        assert!((ua - ub).abs() <= 1e-9 * umax);
    }
}

#[test]
fn source_vanishes_on_zero_aperture_cells() {
    let mesh = build_benchmark_mesh(Preset::Square2d, 2).unwrap();
    let params = default_parameters(Preset::Square2d);
    let fields = attach_scaling(&mesh, &params).unwrap();
    let problem = ProblemSpec::new(&mesh, &fields, Arc::new(|_: &[f64; 3]| 0.0)).with_source(Arc::new(|_, _| 1.0));
    let s = assemble_system(&problem).unwrap();
    let mut zero_cells = 0;
    for (sub_index, sub) in mesh.subdomains.iter().enumerate() {
        for c in 0..sub.num_cells() {
            let row = s.layout.pressure_offset[sub_index] + c;
            if fields.eps[sub_index][c] == 0.0 {
                zero_cells += 1;
                assert_eq!(s.r_p[row], 0.0);
            } else {
                assert!(s.r_p[row] < 0.0);
            }
        }
    }
    assert!(zero_cells > 0, "the pinch-out fracture has zero-aperture cells");
}

#[test]
fn mortar_mass_entries() {
    let mut mesh = structured_square(4, true, false, &[0]).unwrap();
    mesh.tips.clear();
    let frac = mesh.subdomain_indices_of_dim(1)[0];
    let k = mesh.interfaces_of_lower(frac)[0];
    let entry = |gamma: f64, k_nu: f64| {
        let mut params = default_parameters(Preset::SingleFracture2d);
        params.features.insert("fracture".into(), FeatureParams::new(1.0, k_nu, ApertureLaw::Constant(gamma)));
        let fields = attach_scaling(&mesh, &params).unwrap();
        let (mass, coupling) = assemble_mortar_terms(&mesh, &fields, k).unwrap();
        let c = mesh.interfaces[k].mortar_cells[0];
        let area = mesh.subdomains[frac].cell_measure(c);
        (mass.get(0, 0), area, coupling.get(c, 0), fields.eps_hat[k][0])
    };
    let (m, area, _, _) = entry(0.01, 100.0);
    assert!((m - area * 1e-4).abs() < 1e-18);
    // γ = K_ν = 0.01 gives |c|
    let (m, area, _, _) = entry(0.01, 0.01);
    assert!((m - area).abs() < 1e-15);
    let (m, area, j, eps_hat) = entry(0.0, 1.0);
    assert_eq!(m, 0.0);
    assert_eq!(j, -eps_hat * area);
}

#[test]
fn mortar_mass_of_a_tenth_long_cell() {
    // one fracture cell of length 0.1: γ=0.01, K_ν=100 gives 1e-5
    let mut mesh = structured_square(10, true, false, &[0]).unwrap();
    mesh.tips.clear();
    let frac = mesh.subdomain_indices_of_dim(1)[0];
    let k = mesh.interfaces_of_lower(frac)[0];
    let params = default_parameters(Preset::SingleFracture2d);
    let mut params = params;
    params.features.insert("fracture".into(), FeatureParams::new(1.0, 100.0, ApertureLaw::Constant(0.01)));
    let fields = attach_scaling(&mesh, &params).unwrap();
    let (mass, _) = assemble_mortar_terms(&mesh, &fields, k).unwrap();
    assert!((mesh.subdomains[frac].cell_measure(mesh.interfaces[k].mortar_cells[0]) - 0.1).abs() < 1e-15);
    assert!((mass.get(0, 0) - 1e-5).abs() < 1e-18);
}

#[test]
fn nonpositive_normal_permeability_rejected() {
    let mesh = structured_square(2, true, false, &[0]).unwrap();
    let params = default_parameters(Preset::SingleFracture2d);
    let mut fields = attach_scaling(&mesh, &params).unwrap();
    fields.k_nu[0][0] = 0.0;
    assert!(assemble_mortar_terms(&mesh, &fields, 0).is_err());
}

#[test]
fn fluxes_do_not_depend_on_the_extension() {
    let mesh = build_benchmark_mesh(Preset::Square2d, 1).unwrap();
    let params = default_parameters(Preset::Square2d);
    let fields = attach_scaling(&mesh, &params).unwrap();
    let problem = ProblemSpec::new(&mesh, &fields, Arc::new(square2d_g));
    let base = assemble_system(&problem).unwrap();
    let reference = solve(&base, 1e-12).unwrap();

    // add random values on free (non-trace, non-no-flux) facets near each interface
    let layout = build_layout(&mesh);
    let projections = all_projections(&mesh, ProjectionOptions::default()).unwrap();
    let compact = extension_matrix(&mesh, &layout, &projections);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut extra = Vec::new();
    for col in 0..layout.n_mortar {
        for _ in 0..3 {
            let row = layout.free_flux[rng.random_range(0..layout.free_flux.len())];
            extra.push((row, col, rng.random_range(-1.0..1.0)));
        }
    }
    let perturbed = compact.add(&SparseOperator::from_triplets(layout.n_flux, layout.n_mortar, extra, BlockLabel::Mortar, BlockLabel::Flux));
    let other = assemble_with_extension(&problem, layout, projections, perturbed).unwrap();
    assert_eq!(other.matrix.max_asymmetry(), 0.0);
    let sol = solve(&other, 1e-12).unwrap();

    let scale = reference.flux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in reference.flux.iter().zip(&sol.flux) {
        assert!((a - b).abs() <= 1e-8 * scale, "{a} vs {b}");
    }
    for (a, b) in reference.p.iter().zip(&sol.p) {
        assert!((a - b).abs() <= 1e-8);
    }
    assert!(reference.u0.iter().zip(&sol.u0).any(|(a, b)| (a - b).abs() > 1e-6), "u0 should absorb the change");
}
