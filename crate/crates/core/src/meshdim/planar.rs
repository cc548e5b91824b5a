//! Two-dimensional fractured meshes.
//!
//! The background triangulation is conforming to every fracture segment.
//! Fracture vertices are then duplicated once per sector of the surrounding
//! triangles (sectors are separated by fracture edges), which opens the
//! cracks. Each side of a fracture is jittered tangentially with its own
//! deterministic random stream so the two trace grids do not match, and the
//! fracture mesh keeps every other chain vertex so that the mortar grid is
//! coarser than both traces.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::{FacetTag, MixedDimMesh, Subdomain};
use crate::error::{Error, Result};
use crate::geometry::{self, Point};

#[derive(Clone, Debug)]
pub struct Fracture2d {
    pub feature: String,
    pub start: Point,
    pub end: Point,
}

#[derive(Clone, Debug)]
pub struct JunctionPoint {
    pub feature: String,
    pub x: Point,
}

#[derive(Clone, Debug)]
pub struct PlanarLayout {
    pub matrix_feature: String,
    /// Fracture pieces; pieces meet only at their endpoints.
    pub fractures: Vec<Fracture2d>,
    pub points: Vec<JunctionPoint>,
    pub tips: Vec<Point>,
}

#[derive(Clone, Debug)]
pub enum Background {
    /// Hexagonal lattice of spacing `h` kept clear of fractures, with
    /// fracture chains subdivided at roughly `chain_spacing` (always an even
    /// number of segments per piece).
    Lattice { h: f64, chain_spacing: f64 },
    /// `n × n` squares, each split along its rising diagonal. Fractures must
    /// run along grid lines.
    Structured { n: usize },
}

#[derive(Clone, Debug)]
pub struct PlanarMeshing {
    pub background: Background,
    /// Jitter the two sides independently and coarsen the mortar grid.
    pub nonmatching: bool,
    /// Jitter amplitude relative to the local chain edge length.
    pub jitter: f64,
    pub seed: u64,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

fn signed_area(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn p2(x: &Point) -> [f64; 2] {
    [x[0], x[1]]
}

fn seg_distance(x: &[f64; 2], f: &Fracture2d) -> f64 {
    geometry::distance_to_segment(&[x[0], x[1], 0.0], &f.start, &f.end)
}

struct Background2d {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    chains: Vec<Vec<usize>>,
}

fn even_segments(length: f64, spacing: f64) -> usize {
    2 * ((length / (2.0 * spacing)).round() as usize).max(1)
}

fn lattice_background(layout: &PlanarLayout, h: f64, chain_spacing: f64) -> Result<Background2d> {
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut add = |x: [f64; 2], vertices: &mut Vec<[f64; 2]>| -> usize {
        *index.entry((x[0].to_bits(), x[1].to_bits())).or_insert_with(|| {
            vertices.push(x);
            vertices.len() - 1
        })
    };
    let mut chains = Vec::new();
    for f in &layout.fractures {
        let m = even_segments(geometry::dist(&f.start, &f.end), chain_spacing);
        let mut chain = Vec::with_capacity(m + 1);
        for k in 0..=m {
            let x = if k == 0 {
                p2(&f.start)
            } else if k == m {
                p2(&f.end)
            } else {
                let t = k as f64 / m as f64;
                [f.start[0] + t * (f.end[0] - f.start[0]), f.start[1] + t * (f.end[1] - f.start[1])]
            };
            chain.push(add(x, &mut vertices));
        }
        chains.push(chain);
    }
    let clear = |x: &[f64; 2], r: f64| layout.fractures.iter().all(|f| seg_distance(x, f) >= r);
    // boundary points
    let nb = (1.0 / h).round().max(1.0) as usize;
    let mut boundary: Vec<[f64; 2]> = Vec::new();
    for k in 0..nb {
        let t = k as f64 / nb as f64;
        boundary.push([t, 0.0]);
        boundary.push([1.0, t]);
        boundary.push([1.0 - t, 1.0]);
        boundary.push([0.0, 1.0 - t]);
    }
    for x in boundary {
        let corner = (x[0] == 0.0 || x[0] == 1.0) && (x[1] == 0.0 || x[1] == 1.0);
        if corner || clear(&x, 0.5 * chain_spacing) {
            add(x, &mut vertices);
        }
    }
    // interior hexagonal lattice
    let dy = h * 3f64.sqrt() / 2.0;
    let rows = (1.0 / dy).ceil() as usize;
    for j in 1..rows {
        let y = j as f64 * dy;
        let shift = if j % 2 == 1 { 0.5 * h } else { 0.0 };
        let mut x = shift;
        while x < 1.0 {
            let p = [x, y];
            let margin = x.min(1.0 - x).min(y).min(1.0 - y);
            if margin >= 0.45 * h && clear(&p, 0.5 * h) {
                add(p, &mut vertices);
            }
            x += h;
        }
    }
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let mut handle_of = Vec::with_capacity(vertices.len());
    for x in &vertices {
        let hdl = cdt
            .insert(Point2::new(x[0], x[1]))
            .map_err(|e| Error::InvalidMesh(format!("triangulation insert failed: {e:?}")))?;
        handle_of.push(hdl);
    }
    for chain in &chains {
        for w in chain.windows(2) {
            cdt.add_constraint(handle_of[w[0]], handle_of[w[1]]);
        }
    }
    let mut mine = vec![usize::MAX; cdt.num_vertices()];
    for (i, hdl) in handle_of.iter().enumerate() {
        mine[hdl.index()] = i;
    }
    if mine.contains(&usize::MAX) {
        return Err(Error::InvalidMesh("triangulation created unexpected vertices".into()));
    }
    let triangles = cdt
        .inner_faces()
        .map(|face| {
            let v = face.vertices();
            [mine[v[0].fix().index()], mine[v[1].fix().index()], mine[v[2].fix().index()]]
        })
        .collect();
    Ok(Background2d { vertices, triangles, chains })
}

fn structured_background(layout: &PlanarLayout, n: usize) -> Result<Background2d> {
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut chains = Vec::new();
    for f in &layout.fractures {
        let dir = geometry::sub(&f.end, &f.start);
        let len2 = geometry::dot(&dir, &dir);
        let mut on: Vec<(f64, usize)> = vertices
            .iter()
            .enumerate()
            .filter(|(_, x)| seg_distance(x, f) <= geometry::GEOM_TOL)
            .map(|(v, x)| (geometry::dot(&geometry::sub(&[x[0], x[1], 0.0], &f.start), &dir) / len2, v))
            .collect();
        on.sort_by(|a, b| a.0.total_cmp(&b.0));
        if on.len() < 2 || on[0].0.abs() > 1e-12 || (on.last().unwrap().0 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMesh(format!("fracture `{}` does not follow the structured grid", f.feature)));
        }
        chains.push(on.into_iter().map(|(_, v)| v).collect());
    }
    Ok(Background2d { vertices, triangles, chains })
}

impl PlanarLayout {
    pub fn mesh(&self, opts: &PlanarMeshing, on_boundary: &dyn Fn(&[Point]) -> Option<FacetTag>) -> Result<MixedDimMesh> {
        let bg = match opts.background {
            Background::Lattice { h, chain_spacing } => lattice_background(self, h, chain_spacing)?,
            Background::Structured { n } => structured_background(self, n)?,
        };
        let Background2d { mut vertices, mut triangles, chains } = bg;
        for t in triangles.iter_mut() {
            if signed_area(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]) < 0.0 {
                t.swap(1, 2);
            }
        }
        let edge = |a: usize, b: usize| (a.min(b), a.max(b));
        let mut edge_tris: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                edge_tris.entry(edge(tri[k], tri[(k + 1) % 3])).or_default().push(t);
            }
        }
        let mut fracture_edges = HashSet::new();
        for (f, chain) in chains.iter().enumerate() {
            for w in chain.windows(2) {
                let e = edge(w[0], w[1]);
                if edge_tris.get(&e).is_none_or(|ts| ts.len() != 2) {
                    return Err(Error::InvalidMesh(format!(
                        "fracture `{}` is not resolved by interior triangle edges",
                        self.fractures[f].feature
                    )));
                }
                fracture_edges.insert(e);
            }
        }
        // crack duplication
        let mut on_fracture: Vec<usize> = chains.iter().flatten().copied().collect();
        on_fracture.sort_unstable();
        on_fracture.dedup();
        let mut vertex_tris: HashMap<usize, Vec<usize>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if on_fracture.binary_search(&v).is_ok() {
                    vertex_tris.entry(v).or_default().push(t);
                }
            }
        }
        for &v in &on_fracture {
            let tris = &vertex_tris[&v];
            let mut uf = UnionFind((0..tris.len()).collect());
            for a in 0..tris.len() {
                for b in a + 1..tris.len() {
                    let shared: Vec<usize> = triangles[tris[a]]
                        .iter()
                        .copied()
                        .filter(|w| *w != v && triangles[tris[b]].contains(w))
                        .collect();
                    if shared.len() == 1 && !fracture_edges.contains(&edge(v, shared[0])) {
                        uf.union(a, b);
                    }
                }
            }
            let mut copy_of_root: HashMap<usize, usize> = HashMap::new();
            for a in 0..tris.len() {
                let root = uf.find(a);
                let target = if root == 0 {
                    v
                } else {
                    *copy_of_root.entry(root).or_insert_with(|| {
                        vertices.push(vertices[v]);
                        vertices.len() - 1
                    })
                };
                for w in triangles[tris[a]].iter_mut() {
                    if *w == v {
                        *w = target;
                    }
                }
            }
        }
        if opts.nonmatching && opts.jitter > 0.0 {
            self.jitter_sides(opts, &chains, &edge_tris, &mut vertices, &triangles)?;
        }
        let top_vertices: Vec<Point> = vertices.iter().map(|x| [x[0], x[1], 0.0]).collect();
        let top = Subdomain::new(2, 1, self.matrix_feature.clone(), top_vertices, triangles.iter().map(|t| t.to_vec()).collect());
        let mut subdomains = vec![top];
        for (f, chain) in chains.iter().enumerate() {
            let keep: Vec<usize> = if opts.nonmatching {
                if (chain.len() - 1) % 2 != 0 {
                    return Err(Error::InvalidMesh(format!(
                        "fracture `{}` has an odd number of chain segments",
                        self.fractures[f].feature
                    )));
                }
                chain.iter().copied().step_by(2).collect()
            } else {
                chain.clone()
            };
            // chain endpoints keep their exact layout coordinates
            let mut verts: Vec<Point> = keep.iter().map(|&v| [vertices[v][0], vertices[v][1], 0.0]).collect();
            verts[0] = self.fractures[f].start;
            *verts.last_mut().unwrap() = self.fractures[f].end;
            let cells = (0..verts.len() - 1).map(|k| vec![k, k + 1]).collect();
            subdomains.push(Subdomain::new(1, f + 1, self.fractures[f].feature.clone(), verts, cells));
        }
        for (k, p) in self.points.iter().enumerate() {
            subdomains.push(Subdomain::point(k + 1, p.feature.clone(), p.x));
        }
        let mut mesh = MixedDimMesh { ambient_dim: 2, subdomains, interfaces: Vec::new(), refinement_level: 0, tips: self.tips.clone() };
        mesh.link_interfaces();
        mesh.tag_boundaries(on_boundary);
        mesh.validate()?;
        Ok(mesh)
    }

    fn jitter_sides(
        &self,
        opts: &PlanarMeshing,
        chains: &[Vec<usize>],
        edge_tris: &HashMap<(usize, usize), Vec<usize>>,
        vertices: &mut [[f64; 2]],
        triangles: &[[usize; 3]],
    ) -> Result<()> {
        let orig: Vec<Point> = vertices.iter().map(|x| [x[0], x[1], 0.0]).collect();
        for (f, chain) in chains.iter().enumerate() {
            let fr = &self.fractures[f];
            let t = geometry::normalize(&geometry::sub(&fr.end, &fr.start));
            let m = chain.len() - 1;
            for side in 0..2usize {
                // copy of each interior chain vertex on this side
                let mut copies = vec![usize::MAX; m + 1];
                for k in 0..m {
                    let (xa, xb) = (orig[chain[k]], orig[chain[k + 1]]);
                    let e = (chain[k].min(chain[k + 1]), chain[k].max(chain[k + 1]));
                    for &tri in &edge_tris[&e] {
                        let third = triangles[tri]
                            .iter()
                            .copied()
                            .find(|&w| orig[w] != xa && orig[w] != xb)
                            .expect("triangle with a third vertex");
                        let rel = geometry::sub(&orig[third], &fr.start);
                        let left = t[0] * rel[1] - t[1] * rel[0] > 0.0;
                        if left != (side == 0) {
                            continue;
                        }
                        for (kk, x) in [(k, xa), (k + 1, xb)] {
                            if kk == 0 || kk == m {
                                continue;
                            }
                            copies[kk] = triangles[tri].iter().copied().find(|&w| orig[w] == x).expect("copy in triangle");
                        }
                    }
                }
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ ((f as u64) << 8 | side as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let draws: Vec<f64> = (0..=m).map(|_| rng.random_range(-1.0..1.0)).collect();
                let base: Vec<[f64; 2]> = vertices.to_vec();
                let moved: HashSet<usize> = copies.iter().copied().filter(|&c| c != usize::MAX).collect();
                let affected: Vec<usize> = (0..triangles.len())
                    .filter(|&tri| triangles[tri].iter().any(|w| moved.contains(w)))
                    .collect();
                let mut amp = opts.jitter;
                for attempt in 0..12 {
                    for k in 1..m {
                        let c = copies[k];
                        if c == usize::MAX {
                            continue;
                        }
                        let a = geometry::dist(&orig[chain[k - 1]], &orig[chain[k]]);
                        let b = geometry::dist(&orig[chain[k + 1]], &orig[chain[k]]);
                        let s = amp * draws[k] * a.min(b);
                        vertices[c] = [base[c][0] + s * t[0], base[c][1] + s * t[1]];
                    }
                    let ok = affected.iter().all(|&tri| {
                        let [a, b, c] = triangles[tri];
                        let before = signed_area(&base[a], &base[b], &base[c]);
                        signed_area(&vertices[a], &vertices[b], &vertices[c]) > 0.25 * before
                    });
                    if ok {
                        break;
                    }
                    amp *= 0.5;
                    if attempt == 11 {
                        vertices.copy_from_slice(&base);
                    }
                }
            }
        }
        Ok(())
    }
}
