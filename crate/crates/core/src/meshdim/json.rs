//! JSON import and export of a [`MixedDimMesh`].
//!
//! Subdomains are referred to by their per-dimension `id`; an interface of
//! dimension `d` links lower subdomain `(d, lower_id)` to upper subdomain
//! `(d + 1, upper_id)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FacetTag, Interface, MixedDimMesh, Subdomain};
use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshDocument {
    pub ambient_dim: usize,
    pub subdomains: Vec<SubdomainDocument>,
    pub interfaces: Vec<InterfaceDocument>,
    #[serde(default)]
    pub refinement_level: usize,
    #[serde(default)]
    pub tips: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubdomainDocument {
    pub dim: usize,
    pub id: usize,
    #[serde(default)]
    pub feature: String,
    pub vertices: Vec<Vec<f64>>,
    pub cells: Vec<Vec<usize>>,
    pub facet_tags: Vec<FacetTagDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FacetTagDocument {
    pub facet: Vec<usize>,
    pub tag: FacetTag,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceDocument {
    pub dim: usize,
    pub lower_id: usize,
    pub side: usize,
    pub upper_id: usize,
    pub upper_facets: Vec<Vec<usize>>,
    pub mortar_cells: Vec<usize>,
    pub normal_sign: i8,
}

fn to_point(v: &[f64], n: usize) -> Result<Point> {
    if v.len() != n {
        return Err(Error::InvalidMesh(format!("vertex has {} coordinates, expected {n}", v.len())));
    }
    let mut x = [0.0; 3];
    x[..n].copy_from_slice(v);
    Ok(x)
}

impl MixedDimMesh {
    pub fn to_document(&self) -> MeshDocument {
        let n = self.ambient_dim;
        MeshDocument {
            ambient_dim: n,
            subdomains: self
                .subdomains
                .iter()
                .map(|s| SubdomainDocument {
                    dim: s.dim,
                    id: s.id,
                    feature: s.feature.clone(),
                    vertices: s.vertices.iter().map(|x| x[..n].to_vec()).collect(),
                    cells: s.cells.clone(),
                    facet_tags: s.facet_tags.iter().map(|(f, t)| FacetTagDocument { facet: f.clone(), tag: *t }).collect(),
                })
                .collect(),
            interfaces: self
                .interfaces
                .iter()
                .map(|it| InterfaceDocument {
                    dim: it.dim,
                    lower_id: self.subdomains[it.lower].id,
                    side: it.side,
                    upper_id: self.subdomains[it.upper].id,
                    upper_facets: it.upper_facets.clone(),
                    mortar_cells: it.mortar_cells.clone(),
                    normal_sign: it.normal_sign,
                })
                .collect(),
            refinement_level: self.refinement_level,
            tips: self.tips.iter().map(|x| x[..n].to_vec()).collect(),
        }
    }

    pub fn from_document(doc: MeshDocument) -> Result<Self> {
        let n = doc.ambient_dim;
        if !(n == 2 || n == 3) {
            return Err(Error::InvalidMesh(format!("ambient_dim must be 2 or 3, got {n}")));
        }
        let mut subdomains = Vec::with_capacity(doc.subdomains.len());
        for s in doc.subdomains {
            let vertices = s.vertices.iter().map(|v| to_point(v, n)).collect::<Result<Vec<_>>>()?;
            let mut sub = Subdomain::new(s.dim, s.id, s.feature, vertices, s.cells);
            for ft in s.facet_tags {
                let mut key = ft.facet;
                key.sort_unstable();
                if sub.facet_tags.insert(key.clone(), ft.tag).is_some() {
                    return Err(Error::InvalidMesh(format!("facet {key:?} tagged twice in Ω^{}_{}", sub.dim, sub.id)));
                }
            }
            subdomains.push(sub);
        }
        let find = |dim: usize, id: usize| {
            subdomains
                .iter()
                .position(|s| s.dim == dim && s.id == id)
                .ok_or_else(|| Error::InvalidMesh(format!("interface refers to missing subdomain Ω^{dim}_{id}")))
        };
        let mut interfaces = Vec::with_capacity(doc.interfaces.len());
        for it in doc.interfaces {
            if !(it.normal_sign == 1 || it.normal_sign == -1) {
                return Err(Error::InvalidMesh(format!("normal_sign must be ±1, got {}", it.normal_sign)));
            }
            interfaces.push(Interface {
                dim: it.dim,
                lower: find(it.dim, it.lower_id)?,
                side: it.side,
                upper: find(it.dim + 1, it.upper_id)?,
                upper_facets: it
                    .upper_facets
                    .into_iter()
                    .map(|mut f| {
                        f.sort_unstable();
                        f
                    })
                    .collect(),
                mortar_cells: it.mortar_cells,
                normal_sign: it.normal_sign,
            });
        }
        let tips = doc.tips.iter().map(|v| to_point(v, n)).collect::<Result<Vec<_>>>()?;
        let mesh = MixedDimMesh { ambient_dim: n, subdomains, interfaces, refinement_level: doc.refinement_level, tips };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use crate::meshdim::{build_benchmark_mesh, MixedDimMesh, Preset};

    #[test]
    fn round_trip_is_bit_identical() {
        for preset in [Preset::Square2d, Preset::Cube3d, Preset::SingleFracture2d] {
            let mesh = build_benchmark_mesh(preset, 1).unwrap();
            let text = mesh.to_json().unwrap();
            let back = MixedDimMesh::from_json(&text).unwrap();
            assert_eq!(back.to_json().unwrap(), text);
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"ambient_dim":2,"subdomains":[],"interfaces":[],"bogus":1}"#;
        assert!(MixedDimMesh::from_json(text).is_err());
    }
}
