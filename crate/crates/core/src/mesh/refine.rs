use std::collections::HashMap;

use super::Mesh;
use crate::error::Result;

/// Red refinement: every edge is bisected, triangles split into 4 and
/// tetrahedra into 8. Boundary tags are inherited.
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    let dim = mesh.dim();
    let nv = dim + 1;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for c in 0..mesh.n_cells() {
        let cv = mesh.cell(c);
        for i in 0..nv {
            for j in i + 1..nv {
                edges.push((cv[i].min(cv[j]), cv[i].max(cv[j])));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let base = mesh.n_vertices();
    let index: HashMap<(usize, usize), usize> = edges.iter().enumerate().map(|(i, &e)| (e, base + i)).collect();
    let mid = |a: usize, b: usize| index[&(a.min(b), a.max(b))];

    let mut points = mesh.points().to_vec();
    for &(a, b) in &edges {
        let (pa, pb) = (points[a], points[b]);
        points.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.5 * (pa[2] + pb[2])]);
    }

    let mut cells = Vec::with_capacity(mesh.n_cells() * nv * if dim == 2 { 4 } else { 8 });
    for c in 0..mesh.n_cells() {
        let v = mesh.cell(c);
        if dim == 2 {
            let (ab, bc, ca) = (mid(v[0], v[1]), mid(v[1], v[2]), mid(v[2], v[0]));
            cells.extend_from_slice(&[v[0], ab, ca, ab, v[1], bc, ca, bc, v[2], ab, bc, ca]);
        } else {
            let m = |i: usize, j: usize| mid(v[i], v[j]);
            let (m01, m02, m03, m12, m13, m23) = (m(0, 1), m(0, 2), m(0, 3), m(1, 2), m(1, 3), m(2, 3));
            cells.extend_from_slice(&[
                v[0], m01, m02, m03, //
                m01, v[1], m12, m13, //
                m02, m12, v[2], m23, //
                m03, m13, m23, v[3], //
                m01, m02, m03, m13, //
                m01, m02, m12, m13, //
                m02, m03, m13, m23, //
                m02, m12, m13, m23,
            ]);
        }
    }

    let mut facets = Vec::with_capacity(mesh.n_facets() * if dim == 2 { 2 } else { 4 });
    for f in 0..mesh.n_facets() {
        let v = mesh.facet(f);
        let t = mesh.facet_tag(f);
        if dim == 2 {
            let m = mid(v[0], v[1]);
            facets.push((vec![v[0], m], t));
            facets.push((vec![m, v[1]], t));
        } else {
            let (ab, bc, ca) = (mid(v[0], v[1]), mid(v[1], v[2]), mid(v[2], v[0]));
            facets.push((vec![v[0], ab, ca], t));
            facets.push((vec![ab, v[1], bc], t));
            facets.push((vec![ca, bc, v[2]], t));
            facets.push((vec![ab, bc, ca], t));
        }
    }
    Mesh::new(dim, points, cells, facets, mesh.tag_map().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate, validate_mesh};

    #[test]
    fn refinement_quadruples_cells_and_halves_h() {
        let m = generate::channel(4.0, 1.0, 8, 2).unwrap();
        let r = refine_uniform(&m).unwrap();
        assert_eq!(r.n_cells(), 4 * m.n_cells());
        let (d0, d1) = (validate_mesh(&m), validate_mesh(&r));
        assert!(d1.defects.is_empty());
        assert!((d1.h_min / d0.h_min - 0.5).abs() < 0.05);
        assert!((d1.h_max / d0.h_max - 0.5).abs() < 0.05);
        for t in [1, 3] {
            let a0 = m.patch_geometry(t).unwrap().area;
            let a1 = r.patch_geometry(t).unwrap().area;
            assert!((a0 - a1).abs() < 1e-14);
        }
    }

    #[test]
    fn tet_refinement_preserves_volume_and_closure() {
        let m = generate::box_channel(2.0, 1.0, 1.0, 2, 1, 1).unwrap();
        let r = refine_uniform(&m).unwrap();
        assert_eq!(r.n_cells(), 8 * m.n_cells());
        let vol = |m: &Mesh| (0..m.n_cells()).map(|c| m.cell_volume(c)).sum::<f64>();
        assert!((vol(&m) - 2.0).abs() < 1e-13 && (vol(&r) - 2.0).abs() < 1e-13);
        let d = validate_mesh(&r);
        assert!(d.defects.is_empty(), "{:?}", d.defects);
        assert!((d.h_min / validate_mesh(&m).h_min - 0.5).abs() < 0.05);
    }
}
