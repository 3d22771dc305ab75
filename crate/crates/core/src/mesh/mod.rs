//! Simplicial meshes with tagged boundary patches.
//!
//! Points are always stored with three coordinates; in 2D the third is zero.
//! Cells are positively oriented and boundary facets are oriented so that
//! their normal points out of the owning cell.

pub mod generate;
mod msh;
mod refine;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use msh::{parse_mesh, parse_msh_str, write_msh, write_msh_string};
pub use refine::refine_uniform;

/// Assigns a role to each physical boundary tag. The order of `outlets`
/// defines the outlet index used throughout the crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagMap {
    pub inlet: i64,
    #[serde(default)]
    pub walls: Vec<i64>,
    pub outlets: Vec<i64>,
}

impl TagMap {
    pub fn new(inlet: i64, walls: Vec<i64>, outlets: Vec<i64>) -> Self {
        Self {
            inlet,
            walls,
            outlets,
        }
    }

    pub fn role(&self, tag: i64) -> Option<PatchRole> {
        if tag == self.inlet {
            Some(PatchRole::Inlet)
        } else if self.outlets.contains(&tag) {
            Some(PatchRole::Outlet)
        } else if self.walls.contains(&tag) {
            Some(PatchRole::Wall)
        } else {
            None
        }
    }

    pub fn outlet_index(&self, tag: i64) -> Option<usize> {
        self.outlets.iter().position(|&t| t == tag)
    }

    fn validate(&self) -> Result<()> {
        if self.outlets.is_empty() {
            return Err(Error::validation("tags.outlets", "at least one outlet tag is required"));
        }
        let mut all = vec![self.inlet];
        all.extend(&self.walls);
        all.extend(&self.outlets);
        let mut sorted = all.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != all.len() {
            return Err(Error::validation("tags", format!("a tag is listed twice in {all:?}")));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let tm: TagMap = serde_json::from_str(s).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        tm.validate()?;
        Ok(tm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchRole {
    Inlet,
    Wall,
    Outlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPatch {
    pub tag: i64,
    pub role: PatchRole,
    pub facets: Vec<usize>,
    /// length in 2D, area in 3D
    pub area: f64,
    /// ∫ n dΓ
    pub normal_integral: [f64; 3],
    /// normalized `normal_integral`
    pub normal: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    points: Vec<[f64; 3]>,
    cells: Vec<usize>,
    facets: Vec<usize>,
    facet_tags: Vec<i64>,
    facet_owner: Vec<(usize, usize)>,
    tag_map: TagMap,
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn signed_volume(dim: usize, p: &[[f64; 3]]) -> f64 {
    if dim == 2 {
        let a = sub(p[1], p[0]);
        let b = sub(p[2], p[0]);
        0.5 * (a[0] * b[1] - a[1] * b[0])
    } else {
        dot3(sub(p[1], p[0]), cross(sub(p[2], p[0]), sub(p[3], p[0]))) / 6.0
    }
}

/// Unnormalized facet normal whose length equals the facet measure.
fn facet_area_vector(dim: usize, p: &[[f64; 3]]) -> [f64; 3] {
    if dim == 2 {
        let t = sub(p[1], p[0]);
        [t[1], -t[0], 0.0]
    } else {
        let c = cross(sub(p[1], p[0]), sub(p[2], p[0]));
        [0.5 * c[0], 0.5 * c[1], 0.5 * c[2]]
    }
}

type FacetKey = [usize; 3];

fn facet_key(vs: &[usize]) -> FacetKey {
    let mut k = [usize::MAX; 3];
    k[..vs.len()].copy_from_slice(vs);
    k[..vs.len()].sort_unstable();
    k
}

impl Mesh {
    /// Builds and validates a mesh. Inverted cells are reoriented; degenerate
    /// cells, non-manifold facets and untagged boundary facets are rejected.
    pub fn new(
        dim: usize,
        points: Vec<[f64; 3]>,
        mut cells: Vec<usize>,
        tagged_facets: Vec<(Vec<usize>, i64)>,
        tag_map: TagMap,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Mesh(format!("unsupported dimension {dim}")));
        }
        tag_map.validate()?;
        let nv = dim + 1;
        if cells.is_empty() || !cells.len().is_multiple_of(nv) {
            return Err(Error::Mesh("no cells".into()));
        }
        if let Some(&bad) = cells.iter().find(|&&v| v >= points.len()) {
            return Err(Error::Mesh(format!("cell references missing vertex {bad}")));
        }
        let ncell = cells.len() / nv;

        let mut hmax = 0.0f64;
        for c in 0..ncell {
            let cv = &cells[c * nv..(c + 1) * nv];
            for i in 1..nv {
                hmax = hmax.max(norm3(sub(points[cv[i]], points[cv[0]])));
            }
        }
        let vol_tol = 1e-12 * hmax.powi(dim as i32);
        for c in 0..ncell {
            let cv = &mut cells[c * nv..(c + 1) * nv];
            let p: Vec<[f64; 3]> = cv.iter().map(|&v| points[v]).collect();
            let vol = signed_volume(dim, &p);
            if vol.abs() <= vol_tol {
                return Err(Error::Mesh(format!("degenerate cell {c} with vertices {cv:?}")));
            }
            if vol < 0.0 {
                cv.swap(0, 1);
            }
        }

        // facet -> (cell, local opposite vertex), counting multiplicity
        let mut owners: HashMap<FacetKey, (usize, usize, u8)> = HashMap::with_capacity(ncell * nv);
        for c in 0..ncell {
            let cv = &cells[c * nv..(c + 1) * nv];
            for loc in 0..nv {
                let fv: Vec<usize> = (0..nv).filter(|&j| j != loc).map(|j| cv[j]).collect();
                let e = owners.entry(facet_key(&fv)).or_insert((c, loc, 0));
                e.2 += 1;
                if e.2 > 2 {
                    return Err(Error::Mesh(format!("non-manifold facet {fv:?} shared by more than two cells")));
                }
            }
        }

        let mut facets = Vec::with_capacity(tagged_facets.len() * dim);
        let mut facet_tags = Vec::with_capacity(tagged_facets.len());
        let mut facet_owner = Vec::with_capacity(tagged_facets.len());
        let mut seen: HashMap<FacetKey, usize> = HashMap::with_capacity(tagged_facets.len());
        for (i, (fv, tag)) in tagged_facets.iter().enumerate() {
            if fv.len() != dim {
                return Err(Error::Mesh(format!("boundary facet {i} has {} vertices", fv.len())));
            }
            if tag_map.role(*tag).is_none() {
                return Err(Error::UnknownTag(*tag));
            }
            let key = facet_key(fv);
            if seen.insert(key, i).is_some() {
                return Err(Error::Mesh(format!("boundary facet {fv:?} is tagged twice")));
            }
            let &(c, loc, mult) = owners
                .get(&key)
                .ok_or_else(|| Error::Mesh(format!("tagged facet {fv:?} is not a face of any cell")))?;
            if mult != 1 {
                return Err(Error::Mesh(format!("tagged facet {fv:?} is interior (shared by two cells)")));
            }
            let mut fv = fv.clone();
            let p: Vec<[f64; 3]> = fv.iter().map(|&v| points[v]).collect();
            let nvec = facet_area_vector(dim, &p);
            let opp = points[cells[c * nv + loc]];
            let out = sub(p[0], opp);
            if dot3(nvec, out) < 0.0 {
                fv.swap(0, 1);
            }
            facets.extend_from_slice(&fv);
            facet_tags.push(*tag);
            facet_owner.push((c, loc));
        }

        let mut untagged: Vec<(usize, usize, FacetKey)> = owners
            .iter()
            .filter(|(k, v)| v.2 == 1 && !seen.contains_key(*k))
            .map(|(k, v)| (v.0, v.1, *k))
            .collect();
        if !untagged.is_empty() {
            untagged.sort_unstable();
            let list: Vec<String> = untagged
                .iter()
                .take(10)
                .map(|(_, _, k)| format!("{:?}", &k[..dim]))
                .collect();
            return Err(Error::Mesh(format!(
                "{} boundary facet(s) without a tag: {}{}",
                untagged.len(),
                list.join(", "),
                if untagged.len() > 10 { ", ..." } else { "" }
            )));
        }

        let mesh = Mesh {
            dim,
            points,
            cells,
            facets,
            facet_tags,
            facet_owner,
            tag_map,
        };
        let mut required = vec![mesh.tag_map.inlet];
        required.extend(&mesh.tag_map.outlets);
        for t in required {
            if !mesh.facet_tags.contains(&t) {
                return Err(Error::Mesh(format!("tag {t} has no boundary facets")));
            }
        }
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.points.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn n_facets(&self) -> usize {
        self.facet_tags.len()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn point(&self, v: usize) -> [f64; 3] {
        self.points[v]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let nv = self.dim + 1;
        &self.cells[c * nv..(c + 1) * nv]
    }

    pub fn facet(&self, f: usize) -> &[usize] {
        &self.facets[f * self.dim..(f + 1) * self.dim]
    }

    pub fn facet_tag(&self, f: usize) -> i64 {
        self.facet_tags[f]
    }

    /// Owning cell and the local index of the cell vertex opposite the facet.
    pub fn facet_owner(&self, f: usize) -> (usize, usize) {
        self.facet_owner[f]
    }

    pub fn tag_map(&self) -> &TagMap {
        &self.tag_map
    }

    pub fn with_tag_map(mut self, tag_map: TagMap) -> Result<Self> {
        tag_map.validate()?;
        for &t in &self.facet_tags {
            if tag_map.role(t).is_none() {
                return Err(Error::UnknownTag(t));
            }
        }
        self.tag_map = tag_map;
        Ok(self)
    }

    pub fn cell_points(&self, c: usize) -> Vec<[f64; 3]> {
        self.cell(c).iter().map(|&v| self.points[v]).collect()
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        signed_volume(self.dim, &self.cell_points(c))
    }

    /// Outward unit normal and measure of a boundary facet.
    pub fn facet_normal(&self, f: usize) -> ([f64; 3], f64) {
        let p: Vec<[f64; 3]> = self.facet(f).iter().map(|&v| self.points[v]).collect();
        let a = facet_area_vector(self.dim, &p);
        let m = norm3(a);
        ([a[0] / m, a[1] / m, a[2] / m], m)
    }

    pub fn facets_with_tag(&self, tag: i64) -> Vec<usize> {
        (0..self.n_facets()).filter(|&f| self.facet_tags[f] == tag).collect()
    }

    pub fn patch_geometry(&self, tag: i64) -> Result<BoundaryPatch> {
        let role = self.tag_map.role(tag).ok_or(Error::UnknownTag(tag))?;
        let facets = self.facets_with_tag(tag);
        if facets.is_empty() {
            return Err(Error::UnknownTag(tag));
        }
        let mut area = 0.0;
        let mut ni = [0.0; 3];
        for &f in &facets {
            let (n, m) = self.facet_normal(f);
            area += m;
            for k in 0..3 {
                ni[k] += m * n[k];
            }
        }
        let len = norm3(ni);
        let normal = if len > 0.0 {
            [ni[0] / len, ni[1] / len, ni[2] / len]
        } else {
            [0.0; 3]
        };
        Ok(BoundaryPatch {
            tag,
            role,
            facets,
            area,
            normal_integral: ni,
            normal,
        })
    }

    pub fn inlet_patch(&self) -> BoundaryPatch {
        self.patch_geometry(self.tag_map.inlet)
            .expect("inlet tag verified at construction")
    }

    pub fn outlet_patches(&self) -> Vec<BoundaryPatch> {
        self.tag_map
            .outlets
            .iter()
            .map(|&t| self.patch_geometry(t).expect("outlet tag verified at construction"))
            .collect()
    }

    pub fn outlet_areas(&self) -> Vec<f64> {
        self.outlet_patches().iter().map(|p| p.area).collect()
    }

    /// Edge lengths (min, max) over all cells.
    pub fn edge_length_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let nv = self.dim + 1;
        for c in 0..self.n_cells() {
            let cv = self.cell(c);
            for i in 0..nv {
                for j in i + 1..nv {
                    let l = norm3(sub(self.points[cv[i]], self.points[cv[j]]));
                    lo = lo.min(l);
                    hi = hi.max(l);
                }
            }
        }
        (lo, hi)
    }

    /// Same mesh with vertex `v` renamed to `perm[v]`.
    pub fn permute_vertices(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_vertices();
        let mut check = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut check[p], true)) {
            return Err(Error::validation("perm", "not a permutation of the vertices"));
        }
        let mut points = vec![[0.0; 3]; n];
        for v in 0..n {
            points[perm[v]] = self.points[v];
        }
        let cells = self.cells.iter().map(|&v| perm[v]).collect();
        let facets = (0..self.n_facets())
            .map(|f| (self.facet(f).iter().map(|&v| perm[v]).collect(), self.facet_tags[f]))
            .collect();
        Mesh::new(self.dim, points, cells, facets, self.tag_map.clone())
    }

    #[cfg(test)]
    pub(crate) fn tagged_facets(&self) -> Vec<(Vec<usize>, i64)> {
        (0..self.n_facets())
            .map(|f| (self.facet(f).to_vec(), self.facet_tags[f]))
            .collect()
    }

    #[cfg(test)]
    pub(crate) fn raw_cells(&self) -> &[usize] {
        &self.cells
    }
}

pub fn patch_geometry(mesh: &Mesh, tag: i64) -> Result<BoundaryPatch> {
    mesh.patch_geometry(tag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSummary {
    pub tag: i64,
    pub role: PatchRole,
    pub facets: usize,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshDiagnostics {
    pub dim: usize,
    pub vertices: usize,
    pub cells: usize,
    pub boundary_facets: usize,
    pub min_cell_volume: f64,
    pub max_cell_volume: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub patches: Vec<PatchSummary>,
    /// |Σ ∫ n dΓ| over the whole boundary, relative to the boundary measure
    pub closure_defect: f64,
    pub defects: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn validate_mesh(mesh: &Mesh) -> MeshDiagnostics {
    let mut defects = Vec::new();
    let mut warnings = Vec::new();
    let (mut vmin, mut vmax) = (f64::INFINITY, 0.0f64);
    for c in 0..mesh.n_cells() {
        let v = mesh.cell_volume(c);
        if v <= 0.0 {
            defects.push(format!("cell {c} has non-positive volume {v:e}"));
        }
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let (h_min, h_max) = mesh.edge_length_range();

    let mut tags: Vec<i64> = mesh.facet_tags.clone();
    tags.sort_unstable();
    tags.dedup();
    let mut patches = Vec::new();
    let mut total = [0.0; 3];
    let mut measure = 0.0;
    for &t in &tags {
        if let Ok(p) = mesh.patch_geometry(t) {
            for k in 0..3 {
                total[k] += p.normal_integral[k];
            }
            measure += p.area;
            patches.push(PatchSummary {
                tag: t,
                role: p.role,
                facets: p.facets.len(),
                area: p.area,
            });
        }
    }
    for &w in &mesh.tag_map.walls {
        if !tags.contains(&w) {
            warnings.push(format!("wall tag {w} has no facets"));
        }
    }
    let closure_defect = norm3(total) / measure;
    if closure_defect > 1e-10 {
        defects.push(format!("boundary is not closed: |sum of n dA| / area = {closure_defect:e}"));
    }

    let mut used = vec![false; mesh.n_vertices()];
    for &v in &mesh.cells {
        used[v] = true;
    }
    let unused = used.iter().filter(|u| !**u).count();
    if unused > 0 {
        warnings.push(format!("{unused} vertex/vertices not referenced by any cell"));
    }

    let tol = 1e-10 * h_min.max(f64::MIN_POSITIVE);
    let mut order: Vec<usize> = (0..mesh.n_vertices()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (mesh.points[a], mesh.points[b]);
        pa[0].total_cmp(&pb[0]).then(pa[1].total_cmp(&pb[1])).then(pa[2].total_cmp(&pb[2]))
    });
    let mut dups = 0;
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            let (pa, pb) = (mesh.points[order[i]], mesh.points[order[j]]);
            if pb[0] - pa[0] > tol {
                break;
            }
            if norm3(sub(pa, pb)) <= tol {
                dups += 1;
                if dups <= 5 {
                    warnings.push(format!("vertices {} and {} coincide", order[i], order[j]));
                }
            }
        }
    }
    if dups > 5 {
        warnings.push(format!("{dups} coincident vertex pairs in total"));
    }

    MeshDiagnostics {
        dim: mesh.dim,
        vertices: mesh.n_vertices(),
        cells: mesh.n_cells(),
        boundary_facets: mesh.n_facets(),
        min_cell_volume: vmin,
        max_cell_volume: vmax,
        h_min,
        h_max,
        patches,
        closure_defect,
        defects,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn unit_square() -> Mesh {
        // inlet left (1), wall bottom/top (2), outlet right (3)
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
        let cells = vec![0, 1, 2, 0, 2, 3];
        let facets = vec![
            (vec![0, 1], 2),
            (vec![1, 2], 3),
            (vec![2, 3], 2),
            (vec![3, 0], 1),
        ];
        Mesh::new(2, pts, cells, facets, TagMap::new(1, vec![2], vec![3])).unwrap()
    }

    #[test]
    fn unit_square_counts_and_geometry() {
        let m = unit_square();
        assert_eq!((m.dim(), m.n_vertices(), m.n_cells(), m.n_facets()), (2, 4, 2, 4));
        let right = m.patch_geometry(3).unwrap();
        assert!((right.area - 1.0).abs() < 1e-15);
        assert!((right.normal[0] - 1.0).abs() < 1e-15 && right.normal[1].abs() < 1e-15);
        let left = m.patch_geometry(1).unwrap();
        assert!((left.normal[0] + 1.0).abs() < 1e-15);
        assert!(matches!(m.patch_geometry(9), Err(Error::UnknownTag(9))));
        let d = validate_mesh(&m);
        assert!(d.defects.is_empty() && d.warnings.is_empty(), "{d:?}");
    }

    #[test]
    fn inverted_cells_are_reoriented_and_facets_point_out() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
        let cells = vec![0, 2, 1, 0, 3, 2];
        let facets = vec![
            (vec![1, 0], 2),
            (vec![2, 1], 3),
            (vec![3, 2], 2),
            (vec![0, 3], 1),
        ];
        let m = Mesh::new(2, pts, cells, facets, TagMap::new(1, vec![2], vec![3])).unwrap();
        for c in 0..2 {
            assert!(m.cell_volume(c) > 0.0);
        }
        let (n, _) = m.facet_normal(1);
        assert!(n[0] > 0.99);
    }

    #[test]
    fn untagged_facet_is_reported() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
        let facets = vec![(vec![0, 1], 2), (vec![1, 2], 3), (vec![3, 0], 1)];
        let err = Mesh::new(2, pts, vec![0, 1, 2, 0, 2, 3], facets, TagMap::new(1, vec![2], vec![3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("without a tag") && msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn non_manifold_and_degenerate_rejected() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.5, 2.0, 0.0]];
        let cells = vec![0, 1, 2, 0, 1, 3, 1, 0, 4];
        let err = Mesh::new(2, pts.clone(), cells, vec![], TagMap::new(1, vec![], vec![3])).unwrap_err();
        assert!(err.to_string().contains("non-manifold"), "{err}");
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let err = Mesh::new(2, pts, vec![0, 1, 2], vec![], TagMap::new(1, vec![], vec![3])).unwrap_err();
        assert!(err.to_string().contains("degenerate"), "{err}");
    }

    #[test]
    fn unknown_facet_tag_rejected() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let facets = vec![(vec![0, 1], 1), (vec![1, 2], 3), (vec![2, 0], 7)];
        let err = Mesh::new(2, pts, vec![0, 1, 2], facets, TagMap::new(1, vec![2], vec![3])).unwrap_err();
        assert!(matches!(err, Error::UnknownTag(7)));
    }

    #[test]
    fn reference_tet_face_area() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let facets = vec![
            (vec![1, 2, 3], 3),
            (vec![0, 1, 2], 1),
            (vec![0, 1, 3], 2),
            (vec![0, 2, 3], 2),
        ];
        let m = Mesh::new(3, pts, vec![0, 1, 2, 3], facets, TagMap::new(1, vec![2], vec![3])).unwrap();
        let p = m.patch_geometry(3).unwrap();
        assert!((p.area - 3f64.sqrt() / 2.0).abs() < 1e-15);
        let s = 1.0 / 3f64.sqrt();
        for k in 0..3 {
            assert!((p.normal[k] - s).abs() < 1e-15);
        }
        assert!(m.patch_geometry(1).unwrap().normal[2] < -0.999);
        assert!(validate_mesh(&m).closure_defect < 1e-14);
    }

    #[test]
    fn split_edge_keeps_area() {
        let pts = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 0.5, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
        ];
        let cells = vec![0, 1, 2, 0, 2, 3, 0, 3, 4];
        let facets = vec![
            (vec![0, 1], 2),
            (vec![1, 2], 3),
            (vec![2, 3], 3),
            (vec![3, 4], 2),
            (vec![4, 0], 1),
        ];
        let m = Mesh::new(2, pts, cells, facets, TagMap::new(1, vec![2], vec![3])).unwrap();
        assert!((m.patch_geometry(3).unwrap().area - 1.0).abs() < 1e-15);
    }

    #[test]
    fn duplicated_vertex_warns() {
        let m = unit_square();
        let mut pts = m.points().to_vec();
        pts.push(pts[2]);
        let m2 = Mesh::new(2, pts, m.raw_cells().to_vec(), m.tagged_facets(), m.tag_map().clone()).unwrap();
        let d = validate_mesh(&m2);
        assert!(d.defects.is_empty());
        assert!(d.warnings.iter().any(|w| w.contains("coincide")), "{:?}", d.warnings);
    }

    #[test]
    fn tag_map_json() {
        let tm = TagMap::from_json_str(r#"{"inlet": 1, "walls": [2], "outlets": [3, 4]}"#).unwrap();
        assert_eq!(tm.outlet_index(4), Some(1));
        assert!(TagMap::from_json_str(r#"{"inlet": 1, "walls": [1], "outlets": [3]}"#).is_err());
        assert!(TagMap::from_json_str(r#"{"inlet": 1, "walls": [2], "outlets": []}"#).is_err());
    }

    proptest! {
        #[test]
        fn closure_and_permutation_invariance(seed in 0u64..1000) {
            use rand::{seq::SliceRandom, SeedableRng};
            let m = generate::bifurcation(&generate::BifurcationParams { h: 0.25, ..Default::default() }).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..m.n_vertices()).collect();
            perm.shuffle(&mut rng);
            let pm = m.permute_vertices(&perm).unwrap();
            prop_assert!(validate_mesh(&pm).closure_defect < 1e-10);
            for &t in &m.tag_map().outlets.clone() {
                let a = m.patch_geometry(t).unwrap().area;
                let b = pm.patch_geometry(t).unwrap().area;
                prop_assert!((a - b).abs() <= 1e-13 * a);
            }
        }
    }
}
