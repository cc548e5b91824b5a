//! Legacy ASCII VTK output: one unstructured grid per subdomain and per
//! interface, plus a JSON manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Point;
use crate::meshdim::MixedDimMesh;
use crate::verify::{cell_flux_vectors, LevelRun};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    /// `subdomain` or `interface`.
    pub kind: String,
    pub dim: usize,
    pub id: usize,
    pub feature: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub level: usize,
    pub entries: Vec<ManifestEntry>,
}

fn cell_type(dim: usize) -> u8 {
    match dim {
        0 => 1,
        1 => 3,
        2 => 5,
        _ => 10,
    }
}

/// Seventeen significant digits, so values survive a text round trip.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn grid(out: &mut String, title: &str, vertices: &[Point], cells: &[&[usize]], dim: usize) {
    let _ = writeln!(out, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", vertices.len());
    for v in vertices {
        let _ = writeln!(out, "{} {} {}", num(v[0]), num(v[1]), num(v[2]));
    }
    let size: usize = cells.iter().map(|c| c.len() + 1).sum();
    let _ = writeln!(out, "CELLS {} {size}", cells.len());
    for c in cells {
        let ids: Vec<String> = c.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "{} {}", c.len(), ids.join(" "));
    }
    let _ = writeln!(out, "CELL_TYPES {}", cells.len());
    for _ in cells {
        let _ = writeln!(out, "{}", cell_type(dim));
    }
    let _ = writeln!(out, "CELL_DATA {}", cells.len());
}

fn scalars(out: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in values {
        let _ = writeln!(out, "{}", num(*v));
    }
}

fn vectors(out: &mut String, name: &str, values: &[Point]) {
    let _ = writeln!(out, "VECTORS {name} double");
    for v in values {
        let _ = writeln!(out, "{} {} {}", num(v[0]), num(v[1]), num(v[2]));
    }
}

/// Renders subdomain `s` with cell pressure and cell-averaged flux.
pub fn subdomain_vtk(run: &LevelRun, s: usize) -> String {
    let mesh = &run.mesh;
    let sub = &mesh.subdomains[s];
    let layout = run.layout();
    let cells: Vec<&[usize]> = sub.cells.iter().map(|c| c.as_slice()).collect();
    let mut out = String::new();
    grid(&mut out, &format!("{} d={} id={}", sub.feature, sub.dim, sub.id), &sub.vertices, &cells, sub.dim);
    let off = layout.pressure_offset[s];
    scalars(&mut out, "pressure", &run.solution.p[off..off + sub.num_cells()]);
    vectors(&mut out, "flux", &cell_flux_vectors(mesh, layout, &run.solution.flux, s));
    out
}

/// Renders interface `k` on its mortar grid with the mortar flux `λ`.
pub fn interface_vtk(run: &LevelRun, k: usize) -> String {
    let mesh = &run.mesh;
    let it = &mesh.interfaces[k];
    let low = &mesh.subdomains[it.lower];
    let cells: Vec<&[usize]> = it.mortar_cells.iter().map(|&c| low.cells[c].as_slice()).collect();
    let mut out = String::new();
    let up = &mesh.subdomains[it.upper];
    let title = format!("interface {k}: {} d={} id={} / {} side {}", low.feature, low.dim, low.id, up.feature, it.side);
    grid(&mut out, &title, &low.vertices, &cells, it.dim);
    let off = run.layout().mortar_offset[k];
    scalars(&mut out, "lambda", &run.solution.lambda[off..off + it.mortar_cells.len()]);
    out
}

fn subdomain_file(mesh: &MixedDimMesh, s: usize) -> String {
    let sub = &mesh.subdomains[s];
    format!("subdomain_d{}_{}.vtk", sub.dim, sub.id)
}

/// Writes every subdomain and interface file into `dir` and returns the
/// paths written, manifest last.
pub fn write_run(run: &LevelRun, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mesh = &run.mesh;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for (s, sub) in mesh.subdomains.iter().enumerate() {
        let file = subdomain_file(mesh, s);
        let path = dir.join(&file);
        fs::write(&path, subdomain_vtk(run, s))?;
        written.push(path);
        entries.push(ManifestEntry { file, kind: "subdomain".into(), dim: sub.dim, id: sub.id, feature: sub.feature.clone() });
    }
    for (k, it) in mesh.interfaces.iter().enumerate() {
        let file = format!("interface_{k}.vtk");
        let path = dir.join(&file);
        fs::write(&path, interface_vtk(run, k))?;
        written.push(path);
        let low = &mesh.subdomains[it.lower];
        entries.push(ManifestEntry { file, kind: "interface".into(), dim: it.dim, id: k, feature: low.feature.clone() });
    }
    let manifest = Manifest { level: mesh.refinement_level, entries };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_seventeen_digits() {
        let x = 0.1 + 0.2;
        let s = num(x);
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert_eq!(s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count(), 17);
    }

    #[test]
    fn grid_header_counts_cells() {
        let mut out = String::new();
        let verts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        grid(&mut out, "t", &verts, &[&[0, 1, 2]], 2);
        assert!(out.contains("POINTS 3 double"));
        assert!(out.contains("CELLS 1 4\n3 0 1 2\n"));
        assert!(out.contains("CELL_TYPES 1\n5\n"));
    }
}
