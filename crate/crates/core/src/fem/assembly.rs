//! Element loops for the Stokes operators and boundary functionals.

use super::element::{cell_rule, collapsed_tetrahedron, collapsed_triangle, facet_rule, p2_count, CellGeom, Tabulation, MAX_P2};
use super::space::DiscreteSpaces;
use serde::{Deserialize, Serialize};

use crate::linalg::{map_chunks, CsrMatrix, TripletMatrix};

const CHUNK: usize = 256;

type Entries = Vec<(usize, usize, f64)>;

fn collect(nrows: usize, ncols: usize, parts: Vec<Entries>) -> CsrMatrix {
    let mut t = TripletMatrix::rect(nrows, ncols);
    for part in parts {
        for (r, c, v) in part {
            t.push(r, c, v);
        }
    }
    t.compress()
}

fn facet_tabulations(dim: usize) -> Vec<Tabulation> {
    let rule = facet_rule(dim);
    (0..=dim).map(|opp| Tabulation::facet(dim, &rule, opp)).collect()
}

/// Gradients of the cell's P2 basis at every point of a tabulation.
fn gradients_at(dim: usize, geom: &CellGeom, tab: &Tabulation) -> Vec<[[f64; 3]; MAX_P2]> {
    tab.derivs
        .iter()
        .map(|d| {
            let mut g = [[0.0; 3]; MAX_P2];
            geom.p2_gradients(dim, d, &mut g);
            g
        })
        .collect()
}

/// Outlet boundary terms added to the viscous block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutletTerms {
    /// `ν ∫ (w·n)(n·∂ₙv) − ∫ w·∂ₙv`, coefficients taken literally
    #[default]
    AsWritten,
    /// plain traction outlet, no extra terms
    DoNothing,
}

/// `ν ∫ ∇v : ∇w` plus the outlet boundary terms.
pub fn stiffness(spaces: &DiscreteSpaces, nu: f64) -> CsrMatrix {
    stiffness_with(spaces, nu, OutletTerms::default())
}

pub fn stiffness_with(spaces: &DiscreteSpaces, nu: f64, terms: OutletTerms) -> CsrMatrix {
    let dim = spaces.dim();
    let mesh = spaces.mesh();
    let nloc = p2_count(dim);
    let tab = Tabulation::cell(dim, &cell_rule(dim));
    let parts = map_chunks(mesh.n_cells(), CHUNK, |range| {
        let mut out = Entries::with_capacity(range.len() * nloc * nloc * dim);
        for c in range {
            let geom = CellGeom::new(dim, &mesh.cell_points(c));
            let grads = gradients_at(dim, &geom, &tab);
            let mut local = [[0.0; MAX_P2]; MAX_P2];
            for (q, g) in grads.iter().enumerate() {
                let w = nu * tab.weights[q] * geom.volume;
                for a in 0..nloc {
                    for b in 0..nloc {
                        local[a][b] += w * (g[a][0] * g[b][0] + g[a][1] * g[b][1] + g[a][2] * g[b][2]);
                    }
                }
            }
            let nodes = spaces.cell_nodes(c);
            for a in 0..nloc {
                for b in 0..nloc {
                    for k in 0..dim {
                        out.push((nodes[a] * dim + k, nodes[b] * dim + k, local[a][b]));
                    }
                }
            }
        }
        out
    });
    let mut parts = parts;
    if terms == OutletTerms::AsWritten {
        parts.push(outlet_consistency(spaces, nu));
    }
    collect(spaces.n_velocity(), spaces.n_velocity(), parts)
}

fn outlet_consistency(spaces: &DiscreteSpaces, nu: f64) -> Entries {
    let dim = spaces.dim();
    let mesh = spaces.mesh();
    let nloc = p2_count(dim);
    let tabs = facet_tabulations(dim);
    let mut out = Entries::new();
    for &tag in &mesh.tag_map().outlets {
        for f in mesh.facets_with_tag(tag) {
            let (c, opp) = mesh.facet_owner(f);
            let (n, meas) = mesh.facet_normal(f);
            let geom = CellGeom::new(dim, &mesh.cell_points(c));
            let tab = &tabs[opp];
            let grads = gradients_at(dim, &geom, tab);
            let mut local = [[0.0; MAX_P2]; MAX_P2];
            for q in 0..tab.len() {
                let w = tab.weights[q] * meas;
                for a in 0..nloc {
                    let pa = tab.values[q][a];
                    if pa == 0.0 {
                        continue;
                    }
                    for b in 0..nloc {
                        let g = grads[q][b];
                        local[a][b] += w * pa * (g[0] * n[0] + g[1] * n[1] + g[2] * n[2]);
                    }
                }
            }
            let nodes = spaces.cell_nodes(c);
            for a in 0..nloc {
                for b in 0..nloc {
                    if local[a][b] == 0.0 {
                        continue;
                    }
                    for ci in 0..dim {
                        for e in 0..dim {
                            let k = nu * n[ci] * n[e] - if ci == e { 1.0 } else { 0.0 };
                            let (r, c) = (nodes[a] * dim + ci, nodes[b] * dim + e);
                            out.push((r, c, k * local[a][b]));
                            // keeps the sparsity pattern symmetric
                            out.push((c, r, 0.0));
                        }
                    }
                }
            }
        }
    }
    out
}

/// `B[q, (a,c)] = ∫ ψ_q ∂_c φ_a`, so that `B v` is the discrete divergence.
pub fn divergence(spaces: &DiscreteSpaces) -> CsrMatrix {
    let dim = spaces.dim();
    let mesh = spaces.mesh();
    let nloc = p2_count(dim);
    let tab = Tabulation::cell(dim, &cell_rule(dim));
    let parts = map_chunks(mesh.n_cells(), CHUNK, |range| {
        let mut out = Entries::with_capacity(range.len() * (dim + 1) * nloc * dim);
        for c in range {
            let geom = CellGeom::new(dim, &mesh.cell_points(c));
            let grads = gradients_at(dim, &geom, &tab);
            let mut local = [[[0.0; 3]; MAX_P2]; 4];
            for (q, g) in grads.iter().enumerate() {
                let w = tab.weights[q] * geom.volume;
                let l = tab.points[q];
                for i in 0..=dim {
                    for a in 0..nloc {
                        for k in 0..dim {
                            local[i][a][k] += w * l[i] * g[a][k];
                        }
                    }
                }
            }
            let verts = mesh.cell(c);
            let nodes = spaces.cell_nodes(c);
            for i in 0..=dim {
                for a in 0..nloc {
                    for k in 0..dim {
                        out.push((verts[i], nodes[a] * dim + k, local[i][a][k]));
                    }
                }
            }
        }
        out
    });
    collect(spaces.n_pressure(), spaces.n_velocity(), parts)
}

/// Vector P2 mass matrix `∫ v·w`.
pub fn velocity_mass(spaces: &DiscreteSpaces) -> CsrMatrix {
    let dim = spaces.dim();
    let mesh = spaces.mesh();
    let nloc = p2_count(dim);
    let tab = Tabulation::cell(dim, &cell_rule(dim));
    let parts = map_chunks(mesh.n_cells(), CHUNK, |range| {
        let mut out = Entries::with_capacity(range.len() * nloc * nloc * dim);
        for c in range {
            let vol = mesh.cell_volume(c);
            let mut local = [[0.0; MAX_P2]; MAX_P2];
            for q in 0..tab.len() {
                let w = tab.weights[q] * vol;
                let v = &tab.values[q];
                for a in 0..nloc {
                    for b in 0..nloc {
                        local[a][b] += w * v[a] * v[b];
                    }
                }
            }
            let nodes = spaces.cell_nodes(c);
            for a in 0..nloc {
                for b in 0..nloc {
                    for k in 0..dim {
                        out.push((nodes[a] * dim + k, nodes[b] * dim + k, local[a][b]));
                    }
                }
            }
        }
        out
    });
    collect(spaces.n_velocity(), spaces.n_velocity(), parts)
}

/// Linearized convection `ρ ∫ (u·∇)v · w` for a given advecting field `u`.
pub fn convection(spaces: &DiscreteSpaces, u: &[f64], rho: f64) -> CsrMatrix {
    let dim = spaces.dim();
    let mesh = spaces.mesh();
    let nloc = p2_count(dim);
    let rule = if dim == 2 { collapsed_triangle(4) } else { collapsed_tetrahedron(4) };
    let tab = Tabulation::cell(dim, &rule);
    let parts = map_chunks(mesh.n_cells(), CHUNK, |range| {
        let mut out = Entries::with_capacity(range.len() * nloc * nloc * dim);
        for c in range {
            let geom = CellGeom::new(dim, &mesh.cell_points(c));
            let grads = gradients_at(dim, &geom, &tab);
            let nodes = spaces.cell_nodes(c);
            let mut local = [[0.0; MAX_P2]; MAX_P2];
            for (q, g) in grads.iter().enumerate() {
                let v = &tab.values[q];
                let mut uq = [0.0; 3];
                for a in 0..nloc {
                    for k in 0..dim {
                        uq[k] += v[a] * u[nodes[a] * dim + k];
                    }
                }
                let w = rho * tab.weights[q] * geom.volume;
                for b in 0..nloc {
                    let adv = uq[0] * g[b][0] + uq[1] * g[b][1] + uq[2] * g[b][2];
                    for a in 0..nloc {
                        local[a][b] += w * v[a] * adv;
                    }
                }
            }
            for a in 0..nloc {
                for b in 0..nloc {
                    for k in 0..dim {
                        out.push((nodes[a] * dim + k, nodes[b] * dim + k, local[a][b]));
                    }
                }
            }
        }
        out
    });
    collect(spaces.n_velocity(), spaces.n_velocity(), parts)
}

/// `∫ f·w` for a body force `f`.
pub fn load_vector(spaces: &DiscreteSpaces, f: &(dyn Fn([f64; 3]) -> [f64; 3] + Sync)) -> Vec<f64> {
    let dim = spaces.dim();
    let mesh = spaces.mesh();
    let nloc = p2_count(dim);
    let rule = if dim == 2 { collapsed_triangle(5) } else { collapsed_tetrahedron(5) };
    let tab = Tabulation::cell(dim, &rule);
    let mut out = vec![0.0; spaces.n_velocity()];
    for c in 0..mesh.n_cells() {
        let p = mesh.cell_points(c);
        let vol = mesh.cell_volume(c);
        let nodes = spaces.cell_nodes(c);
        for q in 0..tab.len() {
            let x = super::element::bary_to_point(dim, &p, &tab.points[q]);
            let fx = f(x);
            let w = tab.weights[q] * vol;
            for a in 0..nloc {
                for k in 0..dim {
                    out[nodes[a] * dim + k] += w * fx[k] * tab.values[q][a];
                }
            }
        }
    }
    out
}

/// `g[(a,c)] = ∫_Γ φ_a n_c` over facets with `tag`, so `gᵀv = ∫_Γ v·n`.
pub fn flux_vector(spaces: &DiscreteSpaces, tag: i64) -> Vec<f64> {
    let dim = spaces.dim();
    let mesh = spaces.mesh();
    let nloc = p2_count(dim);
    let tabs = facet_tabulations(dim);
    let mut g = vec![0.0; spaces.n_velocity()];
    for f in mesh.facets_with_tag(tag) {
        let (c, opp) = mesh.facet_owner(f);
        let (n, meas) = mesh.facet_normal(f);
        let tab = &tabs[opp];
        let nodes = spaces.cell_nodes(c);
        for q in 0..tab.len() {
            let w = tab.weights[q] * meas;
            for a in 0..nloc {
                let pa = tab.values[q][a];
                if pa != 0.0 {
                    for k in 0..dim {
                        g[nodes[a] * dim + k] += w * pa * n[k];
                    }
                }
            }
        }
    }
    g
}

/// P1 boundary mass matrix `∫_Γ ψ_q ψ_r`, load `∫_Γ ψ_q`, and |Γ| for facets with `tag`.
pub fn boundary_pressure_mass(spaces: &DiscreteSpaces, tag: i64) -> (CsrMatrix, Vec<f64>, f64) {
    let dim = spaces.dim();
    let mesh = spaces.mesh();
    let tabs = facet_tabulations(dim);
    let np = spaces.n_pressure();
    let mut t = TripletMatrix::rect(np, np);
    let mut m = vec![0.0; np];
    let mut area = 0.0;
    for f in mesh.facets_with_tag(tag) {
        let (c, opp) = mesh.facet_owner(f);
        let (_, meas) = mesh.facet_normal(f);
        area += meas;
        let tab = &tabs[opp];
        let verts = mesh.cell(c);
        for q in 0..tab.len() {
            let w = tab.weights[q] * meas;
            let l = tab.points[q];
            for i in 0..=dim {
                if i == opp {
                    continue;
                }
                m[verts[i]] += w * l[i];
                for j in 0..=dim {
                    if j != opp {
                        t.push(verts[i], verts[j], w * l[i] * l[j]);
                    }
                }
            }
        }
    }
    (t.compress(), m, area)
}

/// Vector P2 mass matrix on the facets with `tag`, `∫_Γ v·w`.
pub fn boundary_velocity_mass(spaces: &DiscreteSpaces, tag: i64) -> CsrMatrix {
    let dim = spaces.dim();
    let mesh = spaces.mesh();
    let nloc = p2_count(dim);
    let tabs = facet_tabulations(dim);
    let mut t = TripletMatrix::new(spaces.n_velocity());
    for f in mesh.facets_with_tag(tag) {
        let (c, opp) = mesh.facet_owner(f);
        let (_, meas) = mesh.facet_normal(f);
        let tab = &tabs[opp];
        let nodes = spaces.cell_nodes(c);
        let mut local = [[0.0; MAX_P2]; MAX_P2];
        for q in 0..tab.len() {
            let w = tab.weights[q] * meas;
            let v = &tab.values[q];
            for a in 0..nloc {
                for b in 0..nloc {
                    local[a][b] += w * v[a] * v[b];
                }
            }
        }
        for a in 0..nloc {
            for b in 0..nloc {
                if local[a][b] != 0.0 {
                    for k in 0..dim {
                        t.push(nodes[a] * dim + k, nodes[b] * dim + k, local[a][b]);
                    }
                }
            }
        }
    }
    t.compress()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::space::build_spaces;
    use crate::mesh::generate;

    #[test]
    fn stiffness_is_linear_in_viscosity() {
        let s = build_spaces(&generate::channel(2.0, 1.0, 4, 2).unwrap());
        let k = |nu, t| stiffness_with(&s, nu, t);
        let (a, b) = (k(0.04, OutletTerms::DoNothing), k(0.08, OutletTerms::DoNothing));
        assert_eq!(a.nnz(), b.nnz());
        for ((r1, c1, v1), (r2, c2, v2)) in a.triplets().zip(b.triplets()) {
            assert_eq!((r1, c1), (r2, c2));
            assert!((v2 - 2.0 * v1).abs() <= 1e-15 * v1.abs().max(1e-300));
        }
        // the second outlet term carries no viscosity, so the full block is affine in ν
        let (a, b, c) = (k(0.04, OutletTerms::AsWritten), k(0.08, OutletTerms::AsWritten), k(0.12, OutletTerms::AsWritten));
        for (((_, _, x), (_, _, y)), (_, _, z)) in a.triplets().zip(b.triplets()).zip(c.triplets()) {
            assert!(((z - y) - (y - x)).abs() <= 1e-14 * x.abs().max(1.0));
        }
    }

    #[test]
    fn divergence_of_linear_field_and_flux_identity() {
        let m = generate::channel(2.0, 1.0, 4, 2).unwrap();
        let s = build_spaces(&m);
        // v = (x, 0): div v = 1, so Σ_q (Bv)_q = |Ω| and ∫_∂Ω v·n = |Ω|
        let mut v = vec![0.0; s.n_velocity()];
        for (n, x) in s.node_coords().iter().enumerate() {
            v[2 * n] = x[0];
        }
        let bv = divergence(&s).matvec(&v);
        assert!((bv.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        let out = crate::linalg::dot(&flux_vector(&s, 3), &v);
        let inl = crate::linalg::dot(&flux_vector(&s, 1), &v);
        assert!((out - 2.0).abs() < 1e-13 && inl.abs() < 1e-15);
    }

    #[test]
    fn mass_matrices_integrate_constants() {
        let m = generate::channel(2.0, 1.0, 4, 2).unwrap();
        let s = build_spaces(&m);
        let ones = vec![1.0; s.n_velocity()];
        let total: f64 = velocity_mass(&s).matvec(&ones).iter().sum();
        assert!((total - 2.0 * 2.0).abs() < 1e-13);
        let (mp, mvec, area) = boundary_pressure_mass(&s, 3);
        let onep = vec![1.0; s.n_pressure()];
        assert!((mp.matvec(&onep).iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((mvec.iter().sum::<f64>() - 1.0).abs() < 1e-14 && (area - 1.0).abs() < 1e-14);
        let mb = boundary_velocity_mass(&s, 1);
        assert!((mb.matvec(&ones).iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn stiffness_pattern_is_symmetric_and_local() {
        let coarse = build_spaces(&generate::channel(2.0, 1.0, 4, 2).unwrap());
        let fine = build_spaces(&generate::channel(2.0, 1.0, 16, 8).unwrap());
        let (a, b) = (stiffness(&coarse, 0.04), stiffness(&fine, 0.04));
        assert!(a.pattern_is_symmetric() && b.pattern_is_symmetric());
        assert!(b.max_row_nnz() <= 2 * 19);
        assert!(a.max_row_nnz() <= b.max_row_nnz());
    }
}
