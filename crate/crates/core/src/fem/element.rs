//! Quadrature rules and the P2/P1 Lagrange bases on simplices.
//!
//! Points are given in barycentric coordinates (unused slots zero) and
//! weights sum to one, so an integral is `measure · Σ w f(x_q)`.

use crate::mesh::{cross, dot3, norm3, sub};

#[derive(Debug, Clone)]
pub struct Rule {
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
}

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// 3-point Gauss rule on a segment (degree 5).
pub fn segment_rule() -> Rule {
    let (x, w) = gauss_legendre(3);
    Rule {
        points: x.iter().map(|&t| [1.0 - t, t, 0.0, 0.0]).collect(),
        weights: w,
    }
}

/// Symmetric 6-point triangle rule, exact to degree 4.
pub fn triangle_rule() -> Rule {
    const A: f64 = 0.445948490915965;
    const WA: f64 = 0.223381589678011;
    const B: f64 = 0.091576213509771;
    const WB: f64 = 0.109951743655322;
    let mut points = Vec::with_capacity(6);
    let mut weights = Vec::with_capacity(6);
    for (a, w) in [(A, WA), (B, WB)] {
        let c = 1.0 - 2.0 * a;
        for p in [[c, a, a, 0.0], [a, c, a, 0.0], [a, a, c, 0.0]] {
            points.push(p);
            weights.push(w);
        }
    }
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    Rule { points, weights }
}

/// Collapsed (Duffy) Gauss rule on the triangle with `n²` points,
/// exact to degree `2n - 2`.
pub fn collapsed_triangle(n: usize) -> Rule {
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let u = x[i];
            let v = (1.0 - u) * x[j];
            points.push([1.0 - u - v, u, v, 0.0]);
            weights.push(2.0 * w[i] * w[j] * (1.0 - u));
        }
    }
    Rule { points, weights }
}

/// Collapsed Gauss rule on the tetrahedron with `n³` points,
/// exact to degree `2n - 3`.
pub fn collapsed_tetrahedron(n: usize) -> Rule {
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let u = x[i];
                let v = (1.0 - u) * x[j];
                let t = (1.0 - u) * (1.0 - x[j]) * x[k];
                points.push([1.0 - u - v - t, u, v, t]);
                weights.push(6.0 * w[i] * w[j] * w[k] * (1.0 - u) * (1.0 - u) * (1.0 - x[j]));
            }
        }
    }
    Rule { points, weights }
}

/// Default cell rule (degree ≥ 4).
pub fn cell_rule(dim: usize) -> Rule {
    if dim == 2 {
        triangle_rule()
    } else {
        collapsed_tetrahedron(4)
    }
}

/// Default facet rule (degree ≥ 4).
pub fn facet_rule(dim: usize) -> Rule {
    if dim == 2 {
        segment_rule()
    } else {
        triangle_rule()
    }
}

/// High-order cell rule for error norms.
pub fn accurate_cell_rule(dim: usize) -> Rule {
    if dim == 2 {
        collapsed_triangle(7)
    } else {
        collapsed_tetrahedron(6)
    }
}

pub const EDGES_2D: [(usize, usize); 3] = [(0, 1), (1, 2), (0, 2)];
pub const EDGES_3D: [(usize, usize); 6] = [(0, 1), (1, 2), (0, 2), (0, 3), (1, 3), (2, 3)];

pub fn local_edges(dim: usize) -> &'static [(usize, usize)] {
    if dim == 2 {
        &EDGES_2D
    } else {
        &EDGES_3D
    }
}

/// Number of P2 nodes on a cell.
pub fn p2_count(dim: usize) -> usize {
    if dim == 2 {
        6
    } else {
        10
    }
}

pub const MAX_P2: usize = 10;

/// P2 basis values at barycentric point `l`: vertices `L(2L-1)`, then edges `4 L_i L_j`.
pub fn p2_values(dim: usize, l: &[f64; 4], out: &mut [f64; MAX_P2]) {
    let nv = dim + 1;
    for i in 0..nv {
        out[i] = l[i] * (2.0 * l[i] - 1.0);
    }
    for (k, &(i, j)) in local_edges(dim).iter().enumerate() {
        out[nv + k] = 4.0 * l[i] * l[j];
    }
}

/// Derivatives `∂φ_a/∂L_k` of the P2 basis at `l`.
pub fn p2_bary_derivatives(dim: usize, l: &[f64; 4], out: &mut [[f64; 4]; MAX_P2]) {
    let nv = dim + 1;
    for row in out.iter_mut() {
        *row = [0.0; 4];
    }
    for i in 0..nv {
        out[i][i] = 4.0 * l[i] - 1.0;
    }
    for (k, &(i, j)) in local_edges(dim).iter().enumerate() {
        out[nv + k][i] = 4.0 * l[j];
        out[nv + k][j] = 4.0 * l[i];
    }
}

/// Affine cell data: barycentric gradients and measure.
#[derive(Debug, Clone, Copy)]
pub struct CellGeom {
    pub grad_l: [[f64; 3]; 4],
    pub volume: f64,
}

impl CellGeom {
    pub fn new(dim: usize, p: &[[f64; 3]]) -> Self {
        let mut grad_l = [[0.0; 3]; 4];
        let volume;
        if dim == 2 {
            let (a, b) = (sub(p[1], p[0]), sub(p[2], p[0]));
            let det = a[0] * b[1] - a[1] * b[0];
            grad_l[1] = [b[1] / det, -b[0] / det, 0.0];
            grad_l[2] = [-a[1] / det, a[0] / det, 0.0];
            volume = 0.5 * det.abs();
        } else {
            let (a, b, c) = (sub(p[1], p[0]), sub(p[2], p[0]), sub(p[3], p[0]));
            let det = dot3(a, cross(b, c));
            let (bc, ca, ab) = (cross(b, c), cross(c, a), cross(a, b));
            for k in 0..3 {
                grad_l[1][k] = bc[k] / det;
                grad_l[2][k] = ca[k] / det;
                grad_l[3][k] = ab[k] / det;
            }
            volume = det.abs() / 6.0;
        }
        for k in 0..3 {
            grad_l[0][k] = -(grad_l[1][k] + grad_l[2][k] + grad_l[3][k]);
        }
        Self { grad_l, volume }
    }

    /// Physical gradients of the P2 basis from barycentric derivatives.
    pub fn p2_gradients(&self, dim: usize, dl: &[[f64; 4]; MAX_P2], out: &mut [[f64; 3]; MAX_P2]) {
        let nv = dim + 1;
        for a in 0..p2_count(dim) {
            let mut g = [0.0; 3];
            for k in 0..nv {
                let d = dl[a][k];
                if d != 0.0 {
                    for c in 0..3 {
                        g[c] += d * self.grad_l[k][c];
                    }
                }
            }
            out[a] = g;
        }
    }
}

/// P2 values and barycentric derivatives tabulated at the points of a rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
    pub values: Vec<[f64; MAX_P2]>,
    pub derivs: Vec<[[f64; 4]; MAX_P2]>,
}

impl Tabulation {
    pub fn new(dim: usize, points: Vec<[f64; 4]>, weights: Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(points.len());
        let mut derivs = Vec::with_capacity(points.len());
        for l in &points {
            let mut v = [0.0; MAX_P2];
            let mut d = [[0.0; 4]; MAX_P2];
            p2_values(dim, l, &mut v);
            p2_bary_derivatives(dim, l, &mut d);
            values.push(v);
            derivs.push(d);
        }
        Self {
            points,
            weights,
            values,
            derivs,
        }
    }

    pub fn cell(dim: usize, rule: &Rule) -> Self {
        Self::new(dim, rule.points.clone(), rule.weights.clone())
    }

    /// Facet rule lifted to cell barycentrics for the facet opposite local vertex `opp`.
    pub fn facet(dim: usize, rule: &Rule, opp: usize) -> Self {
        let others: Vec<usize> = (0..=dim).filter(|&k| k != opp).collect();
        let points = rule
            .points
            .iter()
            .map(|mu| {
                let mut l = [0.0; 4];
                for (j, &k) in others.iter().enumerate() {
                    l[k] = mu[j];
                }
                l
            })
            .collect();
        Self::new(dim, points, rule.weights.clone())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Physical location of a barycentric point.
pub fn bary_to_point(dim: usize, p: &[[f64; 3]], l: &[f64; 4]) -> [f64; 3] {
    let mut x = [0.0; 3];
    for k in 0..=dim {
        for c in 0..3 {
            x[c] += l[k] * p[k][c];
        }
    }
    x
}

/// Length of a segment or area of a triangle.
pub fn facet_measure(dim: usize, p: &[[f64; 3]]) -> f64 {
    if dim == 2 {
        norm3(sub(p[1], p[0]))
    } else {
        0.5 * norm3(cross(sub(p[1], p[0]), sub(p[2], p[0])))
    }
}
