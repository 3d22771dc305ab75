use std::fmt::Write as _;

use serde::Serialize;

use super::{boundary_functionals, DiscreteSpaces, StokesOperators, StokesState};
use crate::error::Result;

/// Per-vertex CSV: coordinates, velocity components and pressure.
pub fn field_csv(spaces: &DiscreteSpaces, state: &StokesState) -> String {
    let dim = spaces.dim();
    let mut s = String::new();
    s.push_str(if dim == 2 { "x,y,vx,vy,p\n" } else { "x,y,z,vx,vy,vz,p\n" });
    for v in 0..spaces.n_pressure() {
        let x = spaces.node_coords()[v];
        for xk in &x[..dim] {
            let _ = write!(s, "{xk:.9e},");
        }
        for k in 0..dim {
            let _ = write!(s, "{:.9e},", state.velocity[v * dim + k]);
        }
        let _ = writeln!(s, "{:.9e}", state.pressure[v]);
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct OutletSummary {
    pub tag: i64,
    pub flow: f64,
    pub mean_pressure: f64,
    pub multiplier: f64,
    pub area: f64,
}

/// Outlet flows, mean pressures and multipliers in outlet order.
pub fn summary_json(spaces: &DiscreteSpaces, ops: &StokesOperators, state: &StokesState) -> Result<Vec<OutletSummary>> {
    let flows = ops.outlet_flows(&state.velocity);
    spaces
        .mesh()
        .tag_map()
        .outlets
        .iter()
        .enumerate()
        .map(|(i, &tag)| {
            let bf = boundary_functionals(spaces, state, tag)?;
            Ok(OutletSummary {
                tag,
                flow: flows[i],
                mean_pressure: bf.mean_pressure,
                multiplier: state.multipliers[i],
                area: bf.area,
            })
        })
        .collect()
}
