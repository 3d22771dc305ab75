//! Parametric test geometries.
//!
//! The 2D shapes are unions of grid squares, each split into two triangles,
//! so every boundary segment is axis aligned and inlets/outlets are straight.

use std::collections::HashMap;

use super::{cross, dot3, sub, Mesh, TagMap};
use crate::error::{Error, Result};

pub const INLET: i64 = 1;
pub const WALL: i64 = 2;

/// Labels of the arch outlets, in outlet order (tags 3, 4, 5, 6).
pub const ARCH_OUTLETS: [&str; 4] = ["BCA", "LCC", "LSUB", "DAo"];

/// Finds the boundary facets of a cell complex and tags them with
/// `classify(centroid, outward unit normal)`.
fn tag_boundary(
    dim: usize,
    points: &[[f64; 3]],
    cells: &[usize],
    classify: impl Fn([f64; 3], [f64; 3]) -> i64,
) -> Vec<(Vec<usize>, i64)> {
    let nv = dim + 1;
    let mut count: HashMap<Vec<usize>, u32> = HashMap::new();
    for cv in cells.chunks(nv) {
        for loc in 0..nv {
            let mut k: Vec<usize> = (0..nv).filter(|&j| j != loc).map(|j| cv[j]).collect();
            k.sort_unstable();
            *count.entry(k).or_insert(0) += 1;
        }
    }
    let mut out = Vec::new();
    for cv in cells.chunks(nv) {
        for loc in 0..nv {
            let fv: Vec<usize> = (0..nv).filter(|&j| j != loc).map(|j| cv[j]).collect();
            let mut k = fv.clone();
            k.sort_unstable();
            if count[&k] != 1 {
                continue;
            }
            let p: Vec<[f64; 3]> = fv.iter().map(|&v| points[v]).collect();
            let mut n = if dim == 2 {
                let t = sub(p[1], p[0]);
                [t[1], -t[0], 0.0]
            } else {
                cross(sub(p[1], p[0]), sub(p[2], p[0]))
            };
            if dot3(n, sub(p[0], points[cv[loc]])) < 0.0 {
                n = [-n[0], -n[1], -n[2]];
            }
            let len = dot3(n, n).sqrt();
            let n = [n[0] / len, n[1] / len, n[2] / len];
            let mut c = [0.0; 3];
            for q in &p {
                for k in 0..3 {
                    c[k] += q[k] / dim as f64;
                }
            }
            out.push((fv, classify(c, n)));
        }
    }
    out
}

/// Union of filled grid squares `(i, j)`, `0 ≤ i < nx`, `0 ≤ j < ny`, with
/// vertex `(i, j)` placed at `coord(i, j)`. `flip(i, j)` selects the
/// anti-diagonal split of a square.
fn pixel_complex(
    nx: usize,
    ny: usize,
    coord: impl Fn(usize, usize) -> [f64; 2],
    fill: impl Fn(usize, usize) -> bool,
    flip: impl Fn(usize, usize) -> bool,
) -> (Vec<[f64; 3]>, Vec<usize>) {
    let mut id = vec![usize::MAX; (nx + 1) * (ny + 1)];
    let mut points = Vec::new();
    let mut vid = |i: usize, j: usize, points: &mut Vec<[f64; 3]>| {
        let k = j * (nx + 1) + i;
        if id[k] == usize::MAX {
            id[k] = points.len();
            let c = coord(i, j);
            points.push([c[0], c[1], 0.0]);
        }
        id[k]
    };
    // number vertices row by row for a banded, deterministic ordering
    let mut used = vec![false; (nx + 1) * (ny + 1)];
    for j in 0..ny {
        for i in 0..nx {
            if fill(i, j) {
                for (a, b) in [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)] {
                    used[b * (nx + 1) + a] = true;
                }
            }
        }
    }
    for j in 0..=ny {
        for i in 0..=nx {
            if used[j * (nx + 1) + i] {
                vid(i, j, &mut points);
            }
        }
    }
    let mut cells = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if !fill(i, j) {
                continue;
            }
            let p00 = vid(i, j, &mut points);
            let p10 = vid(i + 1, j, &mut points);
            let p11 = vid(i + 1, j + 1, &mut points);
            let p01 = vid(i, j + 1, &mut points);
            if flip(i, j) {
                cells.extend_from_slice(&[p00, p10, p01, p10, p11, p01]);
            } else {
                cells.extend_from_slice(&[p00, p10, p11, p00, p11, p01]);
            }
        }
    }
    (points, cells)
}

/// Rectangle `[0, length] × [0, height]` with `2·nx·ny` triangles.
/// Tags: inlet 1 at x = 0, walls 2, outlet 3 at x = length.
pub fn channel(length: f64, height: f64, nx: usize, ny: usize) -> Result<Mesh> {
    if !(length > 0.0 && height > 0.0) || nx == 0 || ny == 0 {
        return Err(Error::validation("channel", "dimensions and cell counts must be positive"));
    }
    let (hx, hy) = (length / nx as f64, height / ny as f64);
    let (points, cells) = pixel_complex(
        nx,
        ny,
        |i, j| {
            let x = if i == nx { length } else { i as f64 * hx };
            let y = if j == ny { height } else { j as f64 * hy };
            [x, y]
        },
        |_, _| true,
        |_, _| false,
    );
    let tol = 1e-9 * length.min(height);
    let facets = tag_boundary(2, &points, &cells, |c, n| {
        if n[0] < -0.5 && c[0] < tol {
            INLET
        } else if n[0] > 0.5 && c[0] > length - tol {
            3
        } else {
            WALL
        }
    });
    Mesh::new(2, points, cells, facets, TagMap::new(INLET, vec![WALL], vec![3]))
}

/// Box `[0, length] × [0, width] × [0, height]`, each hexahedron split into six
/// tetrahedra. Tags as for [`channel`].
pub fn box_channel(length: f64, width: f64, height: f64, nx: usize, ny: usize, nz: usize) -> Result<Mesh> {
    if !(length > 0.0 && width > 0.0 && height > 0.0) || nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::validation("box", "dimensions and cell counts must be positive"));
    }
    let id = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    let mut points = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                points.push([
                    length * i as f64 / nx as f64,
                    width * j as f64 / ny as f64,
                    height * k as f64 / nz as f64,
                ]);
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut cells = Vec::with_capacity(24 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for perm in PERMS {
                    let mut c = [i, j, k];
                    cells.push(id(c[0], c[1], c[2]));
                    for &ax in &perm {
                        c[ax] += 1;
                        cells.push(id(c[0], c[1], c[2]));
                    }
                }
            }
        }
    }
    let tol = 1e-9 * length.min(width).min(height);
    let facets = tag_boundary(3, &points, &cells, |c, n| {
        if n[0] < -0.5 && c[0] < tol {
            INLET
        } else if n[0] > 0.5 && c[0] > length - tol {
            3
        } else {
            WALL
        }
    });
    Mesh::new(3, points, cells, facets, TagMap::new(INLET, vec![WALL], vec![3]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationParams {
    /// grid spacing
    pub h: f64,
    pub trunk_width: f64,
    pub trunk_length: f64,
    pub daughter_width: f64,
    /// distance of each daughter axis from the symmetry axis
    pub spread: f64,
    /// x-extent of the slanted part of the daughters
    pub transition: f64,
    pub length: f64,
}

impl Default for BifurcationParams {
    fn default() -> Self {
        Self {
            h: 0.1,
            trunk_width: 1.0,
            trunk_length: 2.0,
            daughter_width: 0.8,
            spread: 1.5,
            transition: 2.0,
            length: 6.0,
        }
    }
}

/// Y-shaped bifurcation, mirror symmetric about y = 0 including the
/// triangulation. Tags: inlet 1 at x = 0, walls 2, outlets 3 (y > 0) and 4 (y < 0)
/// at x = length.
pub fn bifurcation(p: &BifurcationParams) -> Result<Mesh> {
    if !(p.h > 0.0)
        || p.trunk_width <= 0.0
        || p.daughter_width <= 0.0
        || p.spread < p.daughter_width / 2.0
        || p.trunk_length + p.transition >= p.length
    {
        return Err(Error::validation("bifurcation", "inconsistent geometry parameters"));
    }
    let nx = (p.length / p.h).round() as usize;
    let half = ((p.spread + p.daughter_width / 2.0) / p.h).ceil() as usize + 1;
    let ny = 2 * half;
    let h = p.h;
    let x_end = nx as f64 * h;
    let slope = p.spread / p.transition;
    let fill = |i: usize, j: usize| {
        let x = (i as f64 + 0.5) * h;
        let y = ((j as f64 + 0.5) - half as f64).abs() * h;
        if x < p.trunk_length {
            return y <= p.trunk_width / 2.0;
        }
        let yc = if x < p.trunk_length + p.transition {
            (x - p.trunk_length) * slope
        } else {
            p.spread
        };
        (y - yc).abs() <= p.daughter_width / 2.0 || (x < p.trunk_length + h && y <= p.trunk_width / 2.0)
    };
    let (points, cells) = pixel_complex(
        nx,
        ny,
        |i, j| [i as f64 * h, (j as f64 - half as f64) * h],
        fill,
        |_, j| j < half,
    );
    let tol = 1e-9 * h;
    let facets = tag_boundary(2, &points, &cells, |c, n| {
        if n[0] < -0.5 && c[0] < tol {
            INLET
        } else if n[0] > 0.5 && c[0] > x_end - tol {
            if c[1] > 0.0 {
                3
            } else {
                4
            }
        } else {
            WALL
        }
    });
    Mesh::new(2, points, cells, facets, TagMap::new(INLET, vec![WALL], vec![3, 4]))
}

/// Base grid unit of the arch, cm.
pub const ARCH_UNIT: f64 = 0.2;

/// Planar 1-inlet/4-outlet arch: a main vessel running along x with three
/// supra-aortic branches leaving its upper wall and the descending outlet at
/// the far end. `n` subdivides the 0.2 cm base grid.
///
/// Widths (cm): inlet 2.4, BCA 1.0, LCC 0.6, LSUB 0.8, DAo 2.0.
/// Tags: inlet 1, walls 2, outlets 3..=6 in [`ARCH_OUTLETS`] order.
pub fn arch(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::validation("arch", "refinement must be at least 1"));
    }
    // geometry in base units
    const XMAX: usize = 60;
    const YTOP: usize = 27;
    const MAIN_TOP: usize = 12;
    const DAO_START: usize = 45;
    const DAO_BOTTOM: usize = 2;
    const BRANCHES: [(usize, usize, i64); 3] = [(10, 15, 3), (23, 26, 4), (35, 39, 5)];
    let h = ARCH_UNIT / n as f64;
    let fill = |i: usize, j: usize| {
        let x = (i as f64 + 0.5) / n as f64;
        let y = (j as f64 + 0.5) / n as f64;
        if y < MAIN_TOP as f64 {
            return x < DAO_START as f64 || y > DAO_BOTTOM as f64;
        }
        BRANCHES.iter().any(|&(a, b, _)| x > a as f64 && x < b as f64)
    };
    let (points, cells) = pixel_complex(
        XMAX * n,
        YTOP * n,
        |i, j| [i as f64 * h, j as f64 * h],
        fill,
        |_, _| false,
    );
    let tol = 1e-9 * h;
    let (xmax, ytop) = (XMAX as f64 * ARCH_UNIT, YTOP as f64 * ARCH_UNIT);
    let facets = tag_boundary(2, &points, &cells, |c, nrm| {
        if nrm[0] < -0.5 && c[0] < tol {
            INLET
        } else if nrm[0] > 0.5 && c[0] > xmax - tol {
            6
        } else if nrm[1] > 0.5 && c[1] > ytop - tol {
            let xu = c[0] / ARCH_UNIT;
            BRANCHES
                .iter()
                .find(|&&(a, b, _)| xu > a as f64 && xu < b as f64)
                .map(|b| b.2)
                .unwrap_or(WALL)
        } else {
            WALL
        }
    });
    Mesh::new(2, points, cells, facets, TagMap::new(INLET, vec![WALL], vec![3, 4, 5, 6]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::validate_mesh;

    #[test]
    fn channel_cell_count() {
        for (nx, ny) in [(1, 1), (4, 3), (10, 2)] {
            let m = channel(5.0, 1.0, nx, ny).unwrap();
            assert_eq!(m.n_cells(), 2 * nx * ny);
            assert_eq!(m.n_vertices(), (nx + 1) * (ny + 1));
            assert!((m.patch_geometry(3).unwrap().area - 1.0).abs() < 1e-14);
            assert!((m.patch_geometry(2).unwrap().area - 10.0).abs() < 1e-13);
        }
    }

    #[test]
    fn bifurcation_is_mirror_symmetric() {
        let m = bifurcation(&BifurcationParams::default()).unwrap();
        let d = validate_mesh(&m);
        assert!(d.defects.is_empty(), "{:?}", d.defects);
        let (a, b) = (m.patch_geometry(3).unwrap(), m.patch_geometry(4).unwrap());
        assert_eq!(a.area, b.area);
        assert!((a.area - 0.8).abs() < 1e-12);
        assert!((m.patch_geometry(1).unwrap().area - 1.0).abs() < 1e-12);
        // every point has an exact mirror image
        let mut pts: Vec<(u64, u64)> = m.points().iter().map(|p| (p[0].to_bits(), p[1].abs().to_bits())).collect();
        pts.sort_unstable();
        let on_axis = m.points().iter().filter(|p| p[1] == 0.0).count();
        let paired = pts.windows(2).filter(|w| w[0] == w[1]).count();
        assert_eq!(2 * paired + on_axis, m.n_vertices());
    }

    #[test]
    fn arch_patches() {
        let m = arch(1).unwrap();
        let d = validate_mesh(&m);
        assert!(d.defects.is_empty() && d.warnings.is_empty(), "{d:?}");
        let widths = [1.0, 0.6, 0.8, 2.0];
        for (k, a) in m.outlet_areas().iter().enumerate() {
            assert!((a - widths[k]).abs() < 1e-12, "outlet {k}: {a}");
        }
        assert!((m.inlet_patch().area - 2.4).abs() < 1e-12);
        let m2 = arch(2).unwrap();
        assert_eq!(m2.n_cells(), 4 * m.n_cells());
    }
}
