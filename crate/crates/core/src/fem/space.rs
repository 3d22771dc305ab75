use serde::Serialize;

use super::element::{local_edges, p2_count};
use crate::mesh::{Mesh, PatchRole};

/// Taylor–Hood P2/P1 spaces on a mesh.
///
/// P2 nodes are the mesh vertices followed by the lexicographically sorted
/// edges (one midpoint node each). Velocity unknown `node·d + c` is
/// component `c` at `node`; pressure unknowns are the vertices.
#[derive(Debug, Clone)]
pub struct DiscreteSpaces {
    mesh: Mesh,
    dim: usize,
    edges: Vec<(usize, usize)>,
    cell_nodes: Vec<usize>,
    facet_nodes: Vec<usize>,
    node_coords: Vec<[f64; 3]>,
    inlet_nodes: Vec<usize>,
    wall_nodes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DofCounts {
    pub velocity: usize,
    pub pressure: usize,
    pub multipliers: usize,
}

impl DofCounts {
    pub fn total(&self) -> usize {
        self.velocity + self.pressure + self.multipliers
    }
}

pub fn build_spaces(mesh: &Mesh) -> DiscreteSpaces {
    DiscreteSpaces::new(mesh.clone())
}

impl DiscreteSpaces {
    pub fn new(mesh: Mesh) -> Self {
        let dim = mesh.dim();
        let mut edges = Vec::with_capacity(mesh.n_cells() * 3);
        for c in 0..mesh.n_cells() {
            let cv = mesh.cell(c);
            for &(i, j) in local_edges(dim) {
                let (a, b) = (cv[i], cv[j]);
                edges.push((a.min(b), a.max(b)));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let nvert = mesh.n_vertices();
        let edge_node = |a: usize, b: usize| -> usize {
            nvert + edges.binary_search(&(a.min(b), a.max(b))).expect("edge of a cell")
        };

        let nloc = p2_count(dim);
        let mut cell_nodes = Vec::with_capacity(mesh.n_cells() * nloc);
        for c in 0..mesh.n_cells() {
            let cv = mesh.cell(c);
            cell_nodes.extend_from_slice(cv);
            for &(i, j) in local_edges(dim) {
                cell_nodes.push(edge_node(cv[i], cv[j]));
            }
        }

        let fnodes = if dim == 2 { 3 } else { 6 };
        let mut facet_nodes = Vec::with_capacity(mesh.n_facets() * fnodes);
        for f in 0..mesh.n_facets() {
            let fv = mesh.facet(f);
            facet_nodes.extend_from_slice(fv);
            for i in 0..dim {
                for j in i + 1..dim {
                    facet_nodes.push(edge_node(fv[i], fv[j]));
                }
            }
        }

        let mut node_coords = mesh.points().to_vec();
        for &(a, b) in &edges {
            let (pa, pb) = (mesh.point(a), mesh.point(b));
            node_coords.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.5 * (pa[2] + pb[2])]);
        }

        let mut inlet_nodes = Vec::new();
        let mut wall_nodes = Vec::new();
        for f in 0..mesh.n_facets() {
            let nodes = &facet_nodes[f * fnodes..(f + 1) * fnodes];
            match mesh.tag_map().role(mesh.facet_tag(f)) {
                Some(PatchRole::Inlet) => inlet_nodes.extend_from_slice(nodes),
                Some(PatchRole::Wall) => wall_nodes.extend_from_slice(nodes),
                _ => {}
            }
        }
        inlet_nodes.sort_unstable();
        inlet_nodes.dedup();
        wall_nodes.sort_unstable();
        wall_nodes.dedup();
        // nodes shared by the inlet and a wall carry inlet data
        wall_nodes.retain(|n| inlet_nodes.binary_search(n).is_err());

        Self {
            mesh,
            dim,
            edges,
            cell_nodes,
            facet_nodes,
            node_coords,
            inlet_nodes,
            wall_nodes,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn n_velocity(&self) -> usize {
        self.n_nodes() * self.dim
    }

    pub fn n_pressure(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn n_outlets(&self) -> usize {
        self.mesh.tag_map().outlets.len()
    }

    pub fn dof_counts(&self) -> DofCounts {
        DofCounts {
            velocity: self.n_velocity(),
            pressure: self.n_pressure(),
            multipliers: self.n_outlets(),
        }
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn cell_nodes(&self, c: usize) -> &[usize] {
        let n = p2_count(self.dim);
        &self.cell_nodes[c * n..(c + 1) * n]
    }

    pub fn facet_nodes(&self, f: usize) -> &[usize] {
        let n = if self.dim == 2 { 3 } else { 6 };
        &self.facet_nodes[f * n..(f + 1) * n]
    }

    pub fn node_coords(&self) -> &[[f64; 3]] {
        &self.node_coords
    }

    pub fn inlet_nodes(&self) -> &[usize] {
        &self.inlet_nodes
    }

    /// Wall nodes not on the inlet.
    pub fn wall_nodes(&self) -> &[usize] {
        &self.wall_nodes
    }

    /// Sorted nodes lying on facets with the given tag.
    pub fn nodes_on_tag(&self, tag: i64) -> Vec<usize> {
        let mut out = Vec::new();
        for f in self.mesh.facets_with_tag(tag) {
            out.extend_from_slice(self.facet_nodes(f));
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn velocity_dof(&self, node: usize, comp: usize) -> usize {
        node * self.dim + comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate, refine_uniform, TagMap};

    fn square() -> Mesh {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
        let facets = vec![(vec![0, 1], 2), (vec![1, 2], 3), (vec![2, 3], 2), (vec![3, 0], 1)];
        Mesh::new(2, pts, vec![0, 1, 2, 0, 2, 3], facets, TagMap::new(1, vec![2], vec![3])).unwrap()
    }

    #[test]
    fn two_triangle_square_dof_counts() {
        let s = build_spaces(&square());
        assert_eq!(s.n_velocity(), 18);
        assert_eq!(s.n_pressure(), 4);
        assert_eq!(s.dof_counts().multipliers, 1);
        // inlet edge {0,3}: vertices 0, 3 and the midpoint; corners belong to the inlet
        assert_eq!(s.inlet_nodes().len(), 3);
        assert!(!s.wall_nodes().contains(&0) && !s.wall_nodes().contains(&3));
    }

    #[test]
    fn numbering_is_deterministic_and_grows_fourfold() {
        let m = generate::channel(4.0, 1.0, 8, 2).unwrap();
        let (a, b) = (build_spaces(&m), build_spaces(&m));
        assert_eq!(a.cell_nodes, b.cell_nodes);
        assert_eq!(a.facet_nodes, b.facet_nodes);
        let mut prev = a.n_velocity() as f64;
        let mut mesh = m;
        for _ in 0..2 {
            mesh = refine_uniform(&mesh).unwrap();
            let n = build_spaces(&mesh).n_velocity() as f64;
            let ratio = n / prev;
            assert!(ratio > 3.0 && ratio < 4.5, "{ratio}");
            prev = n;
        }
    }

    #[test]
    fn edge_nodes_sit_at_midpoints() {
        let s = build_spaces(&square());
        for (k, &(a, b)) in s.edges().iter().enumerate() {
            let x = s.node_coords()[s.mesh().n_vertices() + k];
            let (pa, pb) = (s.mesh().point(a), s.mesh().point(b));
            assert_eq!(x[0], 0.5 * (pa[0] + pb[0]));
            assert_eq!(x[1], 0.5 * (pa[1] + pb[1]));
        }
    }
}
