//! Aperture, cross-sectional scaling and permeability fields.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MixedDimMesh;
use crate::error::{Error, Result};
use crate::geometry::{self, Point};

/// Half-aperture γ as a function of position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ApertureLaw {
    Constant(f64),
    /// `scale * (2 * max(x[axis] - start, 0))^power`
    PinchOut { scale: f64, start: f64, power: f64, axis: usize },
}

impl ApertureLaw {
    pub fn eval(&self, x: &Point) -> f64 {
        match *self {
            ApertureLaw::Constant(g) => g,
            ApertureLaw::PinchOut { scale, start, power, axis } => scale * (2.0 * (x[axis] - start).max(0.0)).powf(power),
        }
    }
}

/// Tangential permeability: isotropic scalar or a full tensor expressed in
/// the subdomain's tangent frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Permeability {
    Isotropic(f64),
    Tensor(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureParams {
    pub permeability: Permeability,
    /// Normal permeability on the interfaces where this feature is the lower
    /// subdomain.
    #[serde(default = "one")]
    pub normal_permeability: f64,
    #[serde(default = "unit_aperture")]
    pub aperture: ApertureLaw,
}

fn one() -> f64 {
    1.0
}

fn unit_aperture() -> ApertureLaw {
    ApertureLaw::Constant(1.0)
}

impl FeatureParams {
    pub fn new(k: f64, k_nu: f64, aperture: ApertureLaw) -> Self {
        FeatureParams { permeability: Permeability::Isotropic(k), normal_permeability: k_nu, aperture }
    }
}

/// Parameters keyed by feature name, plus the ε–γ law factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterTable {
    pub features: BTreeMap<String, FeatureParams>,
    /// `ε = (eps_factor·γ)^{(n−d)/2}`.
    #[serde(default = "two")]
    pub eps_factor: f64,
}

fn two() -> f64 {
    2.0
}

impl ParameterTable {
    pub fn new(features: BTreeMap<String, FeatureParams>) -> Self {
        ParameterTable { features, eps_factor: 2.0 }
    }

    pub fn get(&self, feature: &str) -> Result<&FeatureParams> {
        self.features
            .get(feature)
            .ok_or_else(|| Error::InvalidParameters(format!("no parameters for feature `{feature}`")))
    }

    /// Rejects negative apertures, non-positive permeabilities and malformed
    /// tensors before any mesh is touched.
    pub fn check(&self) -> Result<()> {
        if !(self.eps_factor > 0.0) {
            return Err(Error::InvalidParameters(format!("eps_factor must be positive, got {}", self.eps_factor)));
        }
        for (name, p) in &self.features {
            if !(p.normal_permeability > 0.0) || !p.normal_permeability.is_finite() {
                return Err(Error::InvalidParameters(format!("{name}: normal permeability must be > 0")));
            }
            match &p.permeability {
                Permeability::Isotropic(k) if !(*k > 0.0) || !k.is_finite() => {
                    return Err(Error::InvalidParameters(format!("{name}: permeability must be > 0")));
                }
                Permeability::Tensor(t) => {
                    spd_inverse(t).map_err(|e| Error::InvalidParameters(format!("{name}: {e}")))?;
                }
                _ => {}
            }
            match p.aperture {
                ApertureLaw::Constant(g) if !(g >= 0.0) || !g.is_finite() => {
                    return Err(Error::InvalidParameters(format!("{name}: aperture must be >= 0, got {g}")));
                }
                ApertureLaw::PinchOut { scale, power, axis, .. } => {
                    if !(scale >= 0.0) || !(power >= 0.0) || axis > 2 {
                        return Err(Error::InvalidParameters(format!("{name}: invalid pinch-out law")));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn spd_inverse(t: &[Vec<f64>]) -> std::result::Result<nalgebra::DMatrix<f64>, String> {
    let d = t.len();
    if t.iter().any(|row| row.len() != d) {
        return Err("permeability tensor must be square".into());
    }
    let m = nalgebra::DMatrix::from_fn(d, d, |i, j| t[i][j]);
    if (0..d).any(|i| (0..d).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * m.amax())) {
        return Err("permeability tensor is not symmetric".into());
    }
    let chol = m.cholesky().ok_or_else(|| "permeability tensor is not positive definite".to_string())?;
    Ok(chol.inverse())
}

/// Cell- and mortar-level coefficients derived from a [`ParameterTable`].
///
/// Indexing: `[subdomain][cell]` for subdomain fields and
/// `[interface][position in mortar_cells]` for interface fields.
#[derive(Clone, Debug)]
pub struct ScalingFields {
    pub eps_factor: f64,
    /// ε at subdomain vertices; its P1 interpolant is the ε used in the
    /// divergence form.
    pub eps_vertex: Vec<Vec<f64>>,
    /// ε at cell centroids.
    pub eps: Vec<Vec<f64>>,
    /// Elementwise supremum of ε.
    pub eps_e: Vec<Vec<f64>>,
    /// γ at cell centroids (1 on the top dimension).
    pub gamma_cell: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub k_nu: Vec<Vec<f64>>,
    pub eps_hat: Vec<Vec<f64>>,
    /// ε̂ of side `j_max` on each lower-dimensional cell, 1 on the top
    /// dimension.
    pub eps_hat_max: Vec<Vec<f64>>,
    pub j_max: Vec<Option<usize>>,
    /// Inverse permeability acting on ambient tangent vectors.
    pub k_inv: Vec<[[f64; 3]; 3]>,
    /// Position of each lower cell in the mortar list of each interface.
    pub mortar_position: Vec<Vec<usize>>,
}

fn eps_law(gamma: f64, factor: f64, n: usize, d: usize) -> f64 {
    if d == n {
        1.0
    } else {
        (factor * gamma).powf((n - d) as f64 / 2.0)
    }
}

fn gamma_at(mesh: &MixedDimMesh, params: &ParameterTable, s: usize, x: &Point) -> Result<f64> {
    let sub = &mesh.subdomains[s];
    if sub.dim == mesh.ambient_dim {
        return Ok(1.0);
    }
    let g = params.get(&sub.feature)?.aperture.eval(x);
    if !(g >= 0.0) || !g.is_finite() {
        return Err(Error::InvalidParameters(format!("negative aperture {g} on Ω^{}_{} at {x:?}", sub.dim, sub.id)));
    }
    Ok(g)
}

fn ambient_k_inv(mesh: &MixedDimMesh, params: &ParameterTable, s: usize) -> Result<[[f64; 3]; 3]> {
    let sub = &mesh.subdomains[s];
    let mut a = [[0.0; 3]; 3];
    if sub.dim == 0 {
        return Ok(a);
    }
    match &params.get(&sub.feature)?.permeability {
        Permeability::Isotropic(k) => {
            if !(*k > 0.0) {
                return Err(Error::InvalidParameters(format!("non-positive permeability on Ω^{}_{}", sub.dim, sub.id)));
            }
            for (i, row) in a.iter_mut().enumerate() {
                row[i] = 1.0 / k;
            }
        }
        Permeability::Tensor(t) => {
            if t.len() != sub.dim {
                return Err(Error::InvalidParameters(format!(
                    "Ω^{}_{}: permeability tensor must be {}x{}",
                    sub.dim, sub.id, sub.dim, sub.dim
                )));
            }
            let inv = spd_inverse(t).map_err(Error::InvalidParameters)?;
            let frame = sub.frame(mesh.ambient_dim);
            for (i, row) in a.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    for p in 0..sub.dim {
                        for q in 0..sub.dim {
                            *v += frame[p][i] * inv[(p, q)] * frame[q][j];
                        }
                    }
                }
            }
        }
    }
    Ok(a)
}

/// Evaluates γ, ε, ε̂, ε̂_max, ε_e, K⁻¹ and K_ν on `mesh`.
pub fn attach_scaling(mesh: &MixedDimMesh, params: &ParameterTable) -> Result<ScalingFields> {
    params.check()?;
    let n = mesh.ambient_dim;
    let f = params.eps_factor;
    let ns = mesh.subdomains.len();
    let mut fields = ScalingFields {
        eps_factor: f,
        eps_vertex: Vec::with_capacity(ns),
        eps: Vec::with_capacity(ns),
        eps_e: Vec::with_capacity(ns),
        gamma_cell: Vec::with_capacity(ns),
        gamma: Vec::new(),
        k_nu: Vec::new(),
        eps_hat: Vec::new(),
        eps_hat_max: Vec::with_capacity(ns),
        j_max: vec![None; ns],
        k_inv: Vec::with_capacity(ns),
        mortar_position: Vec::new(),
    };
    for (s, sub) in mesh.subdomains.iter().enumerate() {
        let ev: Vec<f64> = sub
            .vertices
            .iter()
            .map(|x| gamma_at(mesh, params, s, x).map(|g| eps_law(g, f, n, sub.dim)))
            .collect::<Result<_>>()?;
        let mut eps = Vec::with_capacity(sub.num_cells());
        let mut eps_e = Vec::with_capacity(sub.num_cells());
        let mut gamma_cell = Vec::with_capacity(sub.num_cells());
        for (c, cell) in sub.cells.iter().enumerate() {
            let g = gamma_at(mesh, params, s, &sub.cell_centroid(c))?;
            let e = eps_law(g, f, n, sub.dim);
            gamma_cell.push(g);
            eps.push(e);
            eps_e.push(cell.iter().map(|&v| ev[v]).fold(e, f64::max));
        }
        fields.eps_vertex.push(ev);
        fields.eps.push(eps);
        fields.eps_e.push(eps_e);
        fields.gamma_cell.push(gamma_cell);
        fields.k_inv.push(ambient_k_inv(mesh, params, s)?);
    }
    for it in &mesh.interfaces {
        let low = &mesh.subdomains[it.lower];
        let up = &mesh.subdomains[it.upper];
        let k_nu = params.get(&low.feature)?.normal_permeability;
        if !(k_nu > 0.0) {
            return Err(Error::InvalidParameters(format!("K_ν must be > 0 on Ω^{}_{}", low.dim, low.id)));
        }
        let mut gamma = Vec::with_capacity(it.mortar_cells.len());
        let mut eps_hat = Vec::with_capacity(it.mortar_cells.len());
        let mut position = vec![usize::MAX; low.num_cells()];
        for (m, &c) in it.mortar_cells.iter().enumerate() {
            let x = low.cell_centroid(c);
            gamma.push(gamma_at(mesh, params, it.lower, &x)?);
            eps_hat.push(eps_law(gamma_at(mesh, params, it.upper, &x)?, f, n, up.dim));
            position[c] = m;
        }
        fields.gamma.push(gamma);
        fields.k_nu.push(vec![k_nu; it.mortar_cells.len()]);
        fields.eps_hat.push(eps_hat);
        fields.mortar_position.push(position);
    }
    for (s, sub) in mesh.subdomains.iter().enumerate() {
        if sub.dim == n {
            fields.eps_hat_max.push(vec![1.0; sub.num_cells()]);
            continue;
        }
        let sides = mesh.interfaces_of_lower(s);
        let mut best: Option<(usize, f64)> = None;
        for &k in &sides {
            let e = &fields.eps_hat[k];
            let mean = e.iter().sum::<f64>() / e.len().max(1) as f64;
            if best.is_none_or(|(_, m)| mean > m) {
                best = Some((k, mean));
            }
        }
        let Some((k, _)) = best else {
            return Err(Error::InvalidMesh(format!("Ω^{}_{} has no interface", sub.dim, sub.id)));
        };
        fields.j_max[s] = Some(mesh.interfaces[k].side);
        let values: Vec<f64> = (0..sub.num_cells())
            .map(|c| fields.eps_hat[k][fields.mortar_position[k][c]])
            .collect();
        if let Some(c) = values.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameters(format!(
                "ε̂_max vanishes on cell {c} of Ω^{}_{}: no side with positive aperture",
                sub.dim, sub.id
            )));
        }
        fields.eps_hat_max.push(values);
    }
    Ok(fields)
}

impl ScalingFields {
    /// P1 interpolant of ε at a point of cell `c` given by barycentric
    /// weights.
    pub fn eps_p1(&self, mesh: &MixedDimMesh, s: usize, c: usize, lambda: &[f64]) -> f64 {
        mesh.subdomains[s].cells[c]
            .iter()
            .zip(lambda)
            .map(|(&v, l)| l * self.eps_vertex[s][v])
            .sum()
    }

    /// `‖ε^{1/2}‖_∞ · ‖ε̂_max^{-1}‖_∞` for one lower-dimensional subdomain.
    pub fn eps_bound_ratio(&self, s: usize) -> f64 {
        let sup = self.eps_e[s].iter().fold(0.0f64, |a, &b| a.max(b)).sqrt();
        let inv = self.eps_hat_max[s].iter().fold(0.0f64, |a, &b| a.max(1.0 / b));
        sup * inv
    }
}

#[derive(Clone, Debug)]
pub struct GradientReport {
    /// Largest `|∇ε| / ε^{1/2}` over all cells.
    pub max_ratio: f64,
    /// Per subdomain maximum (0 for points and the top dimension).
    pub per_subdomain: Vec<f64>,
    /// `(subdomain, cell)` attaining the maximum.
    pub worst: Option<(usize, usize)>,
    pub constant: f64,
    pub violated: bool,
}

/// Largest ratio `|∇ε_h| / ε_e^{1/2}` over cells, where `ε_h` is the P1
/// interpolant and `ε_e` the cell supremum. Cells on which ε vanishes
/// identically have zero gradient and contribute nothing.
pub fn validate_gradient_bound(mesh: &MixedDimMesh, fields: &ScalingFields, constant: f64) -> GradientReport {
    let mut per_subdomain = vec![0.0; mesh.subdomains.len()];
    let mut max_ratio: f64 = 0.0;
    let mut worst = None;
    for (s, sub) in mesh.subdomains.iter().enumerate() {
        if sub.dim == 0 || sub.dim == mesh.ambient_dim {
            continue;
        }
        for c in 0..sub.num_cells() {
            let e = fields.eps_e[s][c];
            if e <= 0.0 {
                continue;
            }
            let g = p1_gradient(&sub.cell_points(c), &sub.cells[c].iter().map(|&v| fields.eps_vertex[s][v]).collect::<Vec<_>>());
            let ratio = geometry::norm(&g) / e.sqrt();
            if ratio > per_subdomain[s] {
                per_subdomain[s] = ratio;
            }
            if ratio > max_ratio {
                max_ratio = ratio;
                worst = Some((s, c));
            }
        }
    }
    GradientReport { max_ratio, per_subdomain, worst, constant, violated: max_ratio > constant }
}

/// Tangential gradient of the linear interpolant of `values` on a simplex.
pub fn p1_gradient(points: &[Point], values: &[f64]) -> Point {
    let d = points.len() - 1;
    if d == 0 {
        return [0.0; 3];
    }
    let edges: Vec<Point> = points[1..].iter().map(|p| geometry::sub(p, &points[0])).collect();
    let g = nalgebra::DMatrix::from_fn(d, d, |i, j| geometry::dot(&edges[i], &edges[j]));
    let rhs = nalgebra::DVector::from_fn(d, |i, _| values[i + 1] - values[0]);
    let coef = g.lu().solve(&rhs).expect("degenerate simplex");
    let mut out = [0.0; 3];
    for (i, e) in edges.iter().enumerate() {
        out = geometry::add(&out, &geometry::scale(e, coef[i]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinch_out_law_at_right_end() {
        let law = ApertureLaw::PinchOut { scale: 0.01, start: 0.5, power: 4.0, axis: 0 };
        assert!((law.eval(&[1.0, 0.5, 0.0]) - 0.01).abs() < 1e-16);
        assert_eq!(law.eval(&[0.3, 0.5, 0.0]), 0.0);
    }

    #[test]
    fn gradient_of_linear_function() {
        let pts = [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let g = p1_gradient(&pts, &[1.0, 3.0, 4.0]);
        assert!((g[0] - 1.0).abs() < 1e-14 && (g[1] - 3.0).abs() < 1e-14);
        let seg = [[0.0, 0.0, 0.0], [0.6, 0.8, 0.0]];
        let g = p1_gradient(&seg, &[0.0, 1.0]);
        assert!((geometry::norm(&g) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tensor_permeability_rejected_when_indefinite() {
        let mut features = BTreeMap::new();
        features.insert(
            "matrix".to_string(),
            FeatureParams {
                permeability: Permeability::Tensor(vec![vec![1.0, 2.0], vec![2.0, 1.0]]),
                normal_permeability: 1.0,
                aperture: ApertureLaw::Constant(1.0),
            },
        );
        assert!(ParameterTable::new(features).check().is_err());
    }
}
