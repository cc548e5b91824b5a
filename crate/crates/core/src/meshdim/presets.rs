use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::planar::{Background, Fracture2d, JunctionPoint, PlanarLayout, PlanarMeshing};
use super::{refine, ApertureLaw, FacetTag, FeatureParams, MixedDimMesh, ParameterTable, Subdomain};
use crate::error::{Error, Result};
use crate::geometry::{Point, GEOM_TOL};

pub const MAX_LEVEL_2D: usize = 6;
pub const MAX_LEVEL_3D: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[serde(rename = "square2d")]
    Square2d,
    #[serde(rename = "cube3d")]
    Cube3d,
    #[serde(rename = "single-fracture-2d")]
    SingleFracture2d,
    #[serde(rename = "unfractured-2d")]
    Unfractured2d,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Square2d, Preset::Cube3d, Preset::SingleFracture2d, Preset::Unfractured2d];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Square2d => "square2d",
            Preset::Cube3d => "cube3d",
            Preset::SingleFracture2d => "single-fracture-2d",
            Preset::Unfractured2d => "unfractured-2d",
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Preset::Cube3d => 3,
            _ => 2,
        }
    }

    pub fn max_level(&self) -> usize {
        if self.ambient_dim() == 3 {
            MAX_LEVEL_3D
        } else {
            MAX_LEVEL_2D
        }
    }

    /// Pressure prescribed on the Dirichlet boundary.
    pub fn boundary_pressure(&self) -> fn(&Point) -> f64 {
        match self {
            Preset::Square2d | Preset::Unfractured2d => |x| 1.0 - x[1],
            Preset::SingleFracture2d => |x| 1.0 - x[0],
            Preset::Cube3d => |x| x[2] * (x[0] * x[0] + x[1]),
        }
    }

    /// Axes whose two box faces carry Dirichlet data; all other box faces
    /// are no-flux.
    pub fn dirichlet_axes(&self) -> &'static [usize] {
        match self {
            Preset::Square2d | Preset::Unfractured2d => &[1],
            Preset::SingleFracture2d => &[0],
            Preset::Cube3d => &[2],
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Knobs for the level-0 mesh of a preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshOptions {
    /// Non-matching trace grids on the fractures of the 2D presets.
    pub nonmatching: bool,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions { nonmatching: true, jitter: 0.2, seed: 20180417 }
    }
}

/// Tag rule for the faces of the unit box: Dirichlet on the faces normal to
/// one of `dirichlet_axes`, Neumann elsewhere; `None` off the box boundary.
pub fn box_face_rule(dirichlet_axes: &[usize], ambient_dim: usize) -> impl Fn(&[Point]) -> Option<FacetTag> + '_ {
    move |pts: &[Point]| {
        let mut hit: Option<usize> = None;
        for axis in 0..ambient_dim {
            for v in [0.0, 1.0] {
                if pts.iter().all(|p| (p[axis] - v).abs() <= GEOM_TOL) {
                    hit = Some(hit.map_or(axis, |a: usize| a.min(axis)));
                }
            }
        }
        hit.map(|axis| if dirichlet_axes.contains(&axis) { FacetTag::Dirichlet } else { FacetTag::Neumann })
    }
}

impl MixedDimMesh {
    /// Re-tags the outer boundary with Dirichlet data on the given axes.
    pub fn tag_box_faces(&mut self, dirichlet_axes: &[usize]) {
        let n = self.ambient_dim;
        self.tag_boundaries(&box_face_rule(dirichlet_axes, n));
    }
}

fn pt(x: f64, y: f64) -> Point {
    [x, y, 0.0]
}

fn frac(feature: &str, a: Point, b: Point) -> Fracture2d {
    Fracture2d { feature: feature.to_string(), start: a, end: b }
}

/// Table 1 geometry. Ω_5 crosses Ω_7 at (7/12, 0.5), so both are split
/// there and the crossing becomes a second point subdomain.
pub fn square2d_layout() -> PlanarLayout {
    let junction = pt(0.5, 0.75);
    let crossing = pt(7.0 / 12.0, 0.5);
    PlanarLayout {
        matrix_feature: "matrix".into(),
        fractures: vec![
            frac("fracture-1", junction, pt(0.7, 0.8)),
            frac("fracture-2", junction, pt(0.3, 0.9)),
            frac("fracture-3", junction, pt(0.3, 0.7)),
            frac("fracture-4", junction, pt(0.7, 0.6)),
            frac("fracture-5", pt(0.75, 0.0), crossing),
            frac("fracture-6", pt(0.0, 0.3), pt(0.5, 0.3)),
            frac("fracture-7", pt(0.0, 0.5), crossing),
            frac("fracture-5", crossing, junction),
            frac("fracture-7", crossing, pt(1.0, 0.5)),
        ],
        points: vec![
            JunctionPoint { feature: "intersection".into(), x: junction },
            JunctionPoint { feature: "crossing".into(), x: crossing },
        ],
        tips: vec![pt(0.7, 0.8), pt(0.3, 0.9), pt(0.3, 0.7), pt(0.7, 0.6), pt(0.5, 0.3), pt(0.5, 0.5)],
    }
}

pub fn single_fracture_layout() -> PlanarLayout {
    PlanarLayout {
        matrix_feature: "matrix".into(),
        fractures: vec![frac("fracture", pt(0.5, 0.0), pt(0.5, 1.0))],
        points: Vec::new(),
        tips: Vec::new(),
    }
}

pub fn unfractured_layout() -> PlanarLayout {
    PlanarLayout { matrix_feature: "matrix".into(), fractures: Vec::new(), points: Vec::new(), tips: Vec::new() }
}

/// Structured `n × n` mesh of the single-fracture layout, optionally without
/// the fracture; both variants share the same triangles.
pub fn structured_square(n: usize, with_fracture: bool, nonmatching: bool, dirichlet_axes: &[usize]) -> Result<MixedDimMesh> {
    let layout = if with_fracture { single_fracture_layout() } else { unfractured_layout() };
    let opts = PlanarMeshing {
        background: Background::Structured { n },
        nonmatching,
        jitter: if nonmatching { 0.2 } else { 0.0 },
        seed: MeshOptions::default().seed,
    };
    layout.mesh(&opts, &box_face_rule(dirichlet_axes, 2))
}

fn level0(preset: Preset, opts: &MeshOptions) -> Result<MixedDimMesh> {
    let axes = preset.dirichlet_axes();
    match preset {
        Preset::Square2d => {
            let meshing = PlanarMeshing {
                background: Background::Lattice { h: 1.0 / 14.0, chain_spacing: 1.0 / 24.0 },
                nonmatching: opts.nonmatching,
                jitter: opts.jitter,
                seed: opts.seed,
            };
            square2d_layout().mesh(&meshing, &box_face_rule(axes, 2))
        }
        Preset::SingleFracture2d => {
            let meshing = PlanarMeshing {
                background: Background::Structured { n: 4 },
                nonmatching: opts.nonmatching,
                jitter: opts.jitter,
                seed: opts.seed,
            };
            single_fracture_layout().mesh(&meshing, &box_face_rule(axes, 2))
        }
        Preset::Unfractured2d => {
            let meshing = PlanarMeshing { background: Background::Structured { n: 1 }, nonmatching: false, jitter: 0.0, seed: 0 };
            unfractured_layout().mesh(&meshing, &box_face_rule(axes, 2))
        }
        Preset::Cube3d => cube3d_level0(),
    }
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Unit cube cut by the planes x_k = 0.5 into 8 octants, 12 quarter planes,
/// 6 half lines and the centre point. Every piece is meshed so that shared
/// faces match: octants use the Kuhn triangulation along the (+,+,+)
/// diagonal and quarter planes split along their (+,+) diagonal.
fn cube3d_level0() -> Result<MixedDimMesh> {
    let mut subdomains = Vec::new();
    let halves = [0.0, 0.5];
    let mut id = 0;
    for &c in &halves {
        for &b in &halves {
            for &a in &halves {
                id += 1;
                let vertices: Vec<Point> = (0..8)
                    .map(|bits: usize| [a + 0.5 * (bits & 1) as f64, b + 0.5 * ((bits >> 1) & 1) as f64, c + 0.5 * ((bits >> 2) & 1) as f64])
                    .collect();
                let cells = PERMUTATIONS
                    .iter()
                    .map(|perm| {
                        let mut bits = 0usize;
                        let mut path = vec![0usize];
                        for &axis in perm {
                            bits |= 1 << axis;
                            path.push(bits);
                        }
                        path
                    })
                    .collect();
                subdomains.push(Subdomain::new(3, id, "matrix", vertices, cells));
            }
        }
    }
    id = 0;
    for p in 0..3 {
        let others: Vec<usize> = (0..3).filter(|&k| k != p).collect();
        for &v in &halves {
            for &u in &halves {
                id += 1;
                let corner = |du: f64, dv: f64| {
                    let mut x = [0.5; 3];
                    x[others[0]] = u + du;
                    x[others[1]] = v + dv;
                    x
                };
                let vertices = vec![corner(0.0, 0.0), corner(0.5, 0.0), corner(0.0, 0.5), corner(0.5, 0.5)];
                subdomains.push(Subdomain::new(2, id, "plane", vertices, vec![vec![0, 1, 3], vec![0, 2, 3]]));
            }
        }
    }
    id = 0;
    for axis in 0..3 {
        for &s in &halves {
            id += 1;
            let mut x0 = [0.5; 3];
            let mut x1 = [0.5; 3];
            x0[axis] = s;
            x1[axis] = s + 0.5;
            subdomains.push(Subdomain::new(1, id, "line", vec![x0, x1], vec![vec![0, 1]]));
        }
    }
    subdomains.push(Subdomain::point(1, "point", [0.5, 0.5, 0.5]));
    let mut mesh = MixedDimMesh { ambient_dim: 3, subdomains, interfaces: Vec::new(), refinement_level: 0, tips: Vec::new() };
    mesh.link_interfaces();
    mesh.tag_box_faces(Preset::Cube3d.dirichlet_axes());
    mesh.validate()?;
    Ok(mesh)
}

/// Builds the level-`level` mesh of a benchmark by uniform refinement of its
/// level-0 mesh.
pub fn build_benchmark_mesh(preset: Preset, level: usize) -> Result<MixedDimMesh> {
    build_benchmark_mesh_with(preset, level, &MeshOptions::default())
}

pub fn build_benchmark_mesh_with(preset: Preset, level: usize, opts: &MeshOptions) -> Result<MixedDimMesh> {
    if level > preset.max_level() {
        return Err(Error::LevelBudget { level, dim: preset.ambient_dim(), max: preset.max_level() });
    }
    let mut mesh = level0(preset, opts)?;
    for _ in 0..level {
        mesh = refine(&mesh);
    }
    Ok(mesh)
}

/// The whole nested family `0..=max_level` built by successive refinement.
pub fn build_family(preset: Preset, max_level: usize, opts: &MeshOptions) -> Result<Vec<MixedDimMesh>> {
    let mut family = vec![build_benchmark_mesh_with(preset, 0, opts)?];
    if max_level > preset.max_level() {
        return Err(Error::LevelBudget { level: max_level, dim: preset.ambient_dim(), max: preset.max_level() });
    }
    for _ in 0..max_level {
        let next = refine(family.last().unwrap());
        family.push(next);
    }
    Ok(family)
}

fn features(entries: &[(&str, FeatureParams)]) -> ParameterTable {
    ParameterTable::new(entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect::<BTreeMap<_, _>>())
}

/// Table 1 parameters for `square2d`, the series setup for the single
/// fracture and the conducting-fracture parameters of the cube.
pub fn default_parameters(preset: Preset) -> ParameterTable {
    let matrix = FeatureParams::new(1.0, 1.0, ApertureLaw::Constant(1.0));
    let conducting = FeatureParams::new(100.0, 100.0, ApertureLaw::Constant(0.01));
    match preset {
        Preset::Square2d => features(&[
            ("matrix", matrix),
            ("fracture-1", conducting.clone()),
            ("fracture-2", conducting.clone()),
            ("fracture-3", conducting.clone()),
            ("fracture-4", conducting.clone()),
            ("fracture-5", conducting.clone()),
            ("fracture-6", FeatureParams::new(0.01, 0.01, ApertureLaw::Constant(0.01))),
            (
                "fracture-7",
                FeatureParams::new(0.01, 0.01, ApertureLaw::PinchOut { scale: 0.01, start: 0.5, power: 4.0, axis: 0 }),
            ),
            ("intersection", conducting.clone()),
            ("crossing", conducting),
        ]),
        Preset::SingleFracture2d => features(&[("matrix", matrix), ("fracture", FeatureParams::new(1.0, 0.01, ApertureLaw::Constant(0.01)))]),
        Preset::Unfractured2d => features(&[("matrix", matrix)]),
        Preset::Cube3d => features(&[("matrix", matrix), ("plane", conducting.clone()), ("line", conducting.clone()), ("point", conducting)]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_decomposition_counts() {
        let mesh = build_benchmark_mesh(Preset::Cube3d, 0).unwrap();
        assert_eq!(mesh.counts(), vec![1, 6, 12, 8]);
        // every quarter plane has two sides, every half line four, the point six
        for (s, sub) in mesh.subdomains.iter().enumerate() {
            let sides = mesh.interfaces_of_lower(s).len();
            match sub.dim {
                2 => assert_eq!(sides, 2),
                1 => assert_eq!(sides, 4),
                0 => assert_eq!(sides, 6),
                _ => assert_eq!(sides, 0),
            }
        }
    }

    #[test]
    fn cube_refinement_multiplies_cells_by_eight() {
        let m0 = build_benchmark_mesh(Preset::Cube3d, 0).unwrap();
        let m1 = refine(&m0);
        m1.validate().unwrap();
        for (a, b) in m0.subdomains.iter().zip(&m1.subdomains) {
            if a.dim == 3 {
                assert_eq!(b.num_cells(), 8 * a.num_cells());
            }
            assert!((a.measure() - b.measure()).abs() <= 1e-12 * a.measure());
        }
    }

    #[test]
    fn unfractured_level0_is_two_triangles() {
        let mesh = build_benchmark_mesh(Preset::Unfractured2d, 0).unwrap();
        assert_eq!(mesh.counts(), vec![0, 0, 1]);
        assert!(mesh.interfaces.is_empty());
        assert_eq!(mesh.subdomains[0].num_cells(), 2);
        assert_eq!(mesh.subdomains[0].topology().facets.len(), 5);
    }

    #[test]
    fn square2d_realizes_table_one() {
        let mesh = build_benchmark_mesh(Preset::Square2d, 0).unwrap();
        assert_eq!(mesh.counts(), vec![2, 9, 1]);
        let f5 = &mesh.subdomains[mesh.find(1, 5).unwrap()];
        let f5b = &mesh.subdomains[mesh.find(1, 8).unwrap()];
        assert_eq!(f5.vertices[0], [0.75, 0.0, 0.0]);
        assert_eq!(*f5b.vertices.last().unwrap(), [0.5, 0.75, 0.0]);
        let junction = mesh.find(0, 1).unwrap();
        assert_eq!(mesh.interfaces_of_lower(junction).len(), 5);
        let crossing = mesh.find(0, 2).unwrap();
        assert_eq!(mesh.interfaces_of_lower(crossing).len(), 4);
        // the two sides of every fracture are non-matching
        for s in mesh.subdomain_indices_of_dim(1) {
            let ks = mesh.interfaces_of_lower(s);
            let upper2d: Vec<usize> = ks.iter().copied().filter(|&k| mesh.subdomains[mesh.interfaces[k].upper].dim == 2).collect();
            assert_eq!(upper2d.len(), 2);
            let top = &mesh.subdomains[0];
            let coords = |k: usize| {
                let mut xs: Vec<[u64; 2]> = mesh.interfaces[k]
                    .upper_facets
                    .iter()
                    .flatten()
                    .map(|&v| [top.vertices[v][0].to_bits(), top.vertices[v][1].to_bits()])
                    .collect();
                xs.sort();
                xs.dedup();
                xs
            };
            assert_ne!(coords(upper2d[0]), coords(upper2d[1]));
        }
    }

    #[test]
    fn square2d_is_deterministic() {
        let a = build_benchmark_mesh(Preset::Square2d, 1).unwrap();
        let b = build_benchmark_mesh(Preset::Square2d, 1).unwrap();
        assert_eq!(a.subdomains.len(), b.subdomains.len());
        for (x, y) in a.subdomains.iter().zip(&b.subdomains) {
            assert_eq!(x.vertices, y.vertices);
            assert_eq!(x.cells, y.cells);
            assert_eq!(x.facet_tags, y.facet_tags);
        }
        assert_eq!(a.interfaces, b.interfaces);
    }

    #[test]
    fn level_budget_enforced() {
        assert!(matches!(build_benchmark_mesh(Preset::Cube3d, 5), Err(Error::LevelBudget { .. })));
        assert!(matches!("square3d".parse::<Preset>(), Err(Error::UnknownPreset(_))));
    }
}
