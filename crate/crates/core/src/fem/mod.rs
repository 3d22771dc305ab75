//! Taylor–Hood discretization of Stokes flow with resistive outlets.
//!
//! Unknowns are ordered `[v | p | λ]`: P2 velocity, P1 pressure and one
//! multiplier per outlet. The multiplier row reads `λ_i − R_i ∫_Γi v·n = 0`
//! and `λ_i` enters the momentum equation as an outlet traction `λ_i n`.

pub mod assembly;
pub mod element;
mod export;
mod space;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, CsrMatrix, Factorization, TripletMatrix};
use crate::mesh::{BoundaryPatch, PatchRole};

pub use assembly::OutletTerms;
pub use export::{field_csv, summary_json, OutletSummary};
pub use space::{build_spaces, DiscreteSpaces, DofCounts};

/// Fluid constants in CGS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidProps {
    /// dynamic viscosity, poise
    pub viscosity: f64,
    /// g/cm³, only used by the convective term
    pub density: f64,
}

impl Default for FluidProps {
    fn default() -> Self {
        Self {
            viscosity: 0.04,
            density: 1.06,
        }
    }
}

impl FluidProps {
    pub fn validate(&self) -> Result<()> {
        if !(self.viscosity > 0.0 && self.viscosity.is_finite()) {
            return Err(Error::validation("viscosity", format!("must be positive, got {}", self.viscosity)));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::validation("density", format!("must be positive, got {}", self.density)));
        }
        Ok(())
    }
}

pub type VectorField = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;

/// Velocity data on the inlet patch.
#[derive(Clone)]
pub enum InletData {
    /// Uniform inflow carrying the given flow rate.
    Plug(f64),
    /// Prescribed velocity field, interpolated at the inlet nodes.
    Field(VectorField),
}

impl std::fmt::Debug for InletData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InletData::Plug(q) => write!(f, "Plug({q})"),
            InletData::Field(_) => write!(f, "Field(..)"),
        }
    }
}

/// Uniform inflow `−speed · direction` on an inlet patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlugProfile {
    pub speed: f64,
    /// mean outward normal of the patch
    pub direction: [f64; 3],
}

impl PlugProfile {
    pub fn velocity(&self) -> [f64; 3] {
        [
            -self.speed * self.direction[0],
            -self.speed * self.direction[1],
            -self.speed * self.direction[2],
        ]
    }
}

/// Plug profile carrying `q` into the domain through `patch`.
///
/// The speed is `q / |∫ n dΓ|`, which equals `q / |Γ|` on a flat patch and
/// keeps the discrete flux exactly `−q` on a curved one.
pub fn inlet_plug_profile(patch: &BoundaryPatch, q: f64) -> Result<PlugProfile> {
    if patch.role != PatchRole::Inlet {
        return Err(Error::validation("inlet", format!("patch {} is not an inlet", patch.tag)));
    }
    let projected = crate::mesh::norm3(patch.normal_integral);
    if !(patch.area > 0.0) || !(projected > 1e-14 * patch.area) {
        return Err(Error::Mesh(format!("inlet patch {} has zero area", patch.tag)));
    }
    Ok(PlugProfile {
        speed: q / projected,
        direction: patch.normal,
    })
}

/// Dirichlet velocity values `(dof, value)`: inlet data on inlet nodes, zero on walls.
pub fn dirichlet_values(spaces: &DiscreteSpaces, inlet: &InletData) -> Result<Vec<(usize, f64)>> {
    let dim = spaces.dim();
    let mut out = Vec::with_capacity((spaces.inlet_nodes().len() + spaces.wall_nodes().len()) * dim);
    match inlet {
        InletData::Plug(q) => {
            let u = inlet_plug_profile(&spaces.mesh().inlet_patch(), *q)?.velocity();
            for &n in spaces.inlet_nodes() {
                for k in 0..dim {
                    out.push((n * dim + k, u[k]));
                }
            }
        }
        InletData::Field(f) => {
            for &n in spaces.inlet_nodes() {
                let u = f(spaces.node_coords()[n]);
                for k in 0..dim {
                    out.push((n * dim + k, u[k]));
                }
            }
        }
    }
    for &n in spaces.wall_nodes() {
        for k in 0..dim {
            out.push((n * dim + k, 0.0));
        }
    }
    out.sort_unstable_by_key(|e| e.0);
    Ok(out)
}

/// Mesh-dependent operators shared by forward, adjoint and transient solves.
#[derive(Debug, Clone)]
pub struct StokesOperators {
    pub props: FluidProps,
    pub outlet_terms: OutletTerms,
    /// viscous block including the outlet consistency terms
    pub stiffness: CsrMatrix,
    /// `B`, pressure rows × velocity columns
    pub divergence: CsrMatrix,
    /// `g_i` with `g_iᵀ v = ∫_Γi v·n`, in outlet order
    pub outlet_flux: Vec<Vec<f64>>,
    pub inlet_flux: Vec<f64>,
}

impl StokesOperators {
    pub fn new(spaces: &DiscreteSpaces, props: FluidProps) -> Result<Self> {
        Self::with_outlet_terms(spaces, props, OutletTerms::default())
    }

    pub fn with_outlet_terms(spaces: &DiscreteSpaces, props: FluidProps, terms: OutletTerms) -> Result<Self> {
        props.validate()?;
        let tm = spaces.mesh().tag_map();
        Ok(Self {
            props,
            outlet_terms: terms,
            stiffness: assembly::stiffness_with(spaces, props.viscosity, terms),
            divergence: assembly::divergence(spaces),
            outlet_flux: tm.outlets.iter().map(|&t| assembly::flux_vector(spaces, t)).collect(),
            inlet_flux: assembly::flux_vector(spaces, tm.inlet),
        })
    }

    pub fn outlet_flows(&self, velocity: &[f64]) -> Vec<f64> {
        self.outlet_flux.iter().map(|g| dot(g, velocity)).collect()
    }

    /// Flow entering through the inlet, `−∫_Γin v·n`.
    pub fn inlet_inflow(&self, velocity: &[f64]) -> f64 {
        -dot(&self.inlet_flux, velocity)
    }
}

/// Discrete state `(v, p, λ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesState {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub multipliers: Vec<f64>,
}

impl StokesState {
    pub fn zeros(counts: DofCounts) -> Self {
        Self {
            velocity: vec![0.0; counts.velocity],
            pressure: vec![0.0; counts.pressure],
            multipliers: vec![0.0; counts.multipliers],
        }
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut x = self.velocity.clone();
        x.extend(&self.pressure);
        x.extend(&self.multipliers);
        x
    }

    pub fn from_vector(x: &[f64], counts: DofCounts) -> Self {
        let (nv, np) = (counts.velocity, counts.pressure);
        Self {
            velocity: x[..nv].to_vec(),
            pressure: x[nv..nv + np].to_vec(),
            multipliers: x[nv + np..nv + np + counts.multipliers].to_vec(),
        }
    }
}

/// Assembled linear system over `[v | p | λ]` with Dirichlet rows eliminated.
#[derive(Debug, Clone)]
pub struct ForwardSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub counts: DofCounts,
}

/// Everything that varies between solves on a fixed discretization.
#[derive(Debug, Clone, Default)]
pub(crate) struct CoupledTerms<'a> {
    /// added to the viscous block (mass/dt, convection)
    pub extra: Option<&'a CsrMatrix>,
    /// velocity right-hand side before elimination
    pub velocity_rhs: Option<&'a [f64]>,
    /// right-hand side of the multiplier rows
    pub multiplier_rhs: Option<&'a [f64]>,
}

pub(crate) fn assemble_coupled(
    spaces: &DiscreteSpaces,
    ops: &StokesOperators,
    resistances: &[f64],
    dirichlet: &[(usize, f64)],
    terms: &CoupledTerms,
) -> ForwardSystem {
    let counts = spaces.dof_counts();
    let (nv, np, nm) = (counts.velocity, counts.pressure, counts.multipliers);
    let n = counts.total();
    let mut fixed: Vec<Option<f64>> = vec![None; nv];
    for &(d, val) in dirichlet {
        fixed[d] = Some(val);
    }
    let mut rhs = vec![0.0; n];
    if let Some(f) = terms.velocity_rhs {
        rhs[..nv].copy_from_slice(f);
    }
    let mut t = TripletMatrix::with_capacity(n, ops.stiffness.nnz() + 2 * ops.divergence.nnz() + 4 * nv);

    let velocity_block = |a: &CsrMatrix, t: &mut TripletMatrix, rhs: &mut [f64]| {
        for (r, c, v) in a.triplets() {
            if fixed[r].is_some() {
                continue;
            }
            match fixed[c] {
                Some(g) => rhs[r] -= v * g,
                None => t.push(r, c, v),
            }
        }
    };
    velocity_block(&ops.stiffness, &mut t, &mut rhs);
    if let Some(extra) = terms.extra {
        velocity_block(extra, &mut t, &mut rhs);
    }
    for (q, c, v) in ops.divergence.triplets() {
        match fixed[c] {
            Some(g) => rhs[nv + q] -= v * g,
            None => {
                t.push(nv + q, c, v);
                t.push(c, nv + q, -v);
            }
        }
    }
    for (i, g) in ops.outlet_flux.iter().enumerate() {
        let row = nv + np + i;
        t.push(row, row, 1.0);
        for (c, &gc) in g.iter().enumerate() {
            if gc == 0.0 {
                continue;
            }
            match fixed[c] {
                Some(val) => rhs[row] += resistances[i] * gc * val,
                None => {
                    t.push(row, c, -resistances[i] * gc);
                    t.push(c, row, gc);
                }
            }
        }
    }
    if let Some(b) = terms.multiplier_rhs {
        for i in 0..nm {
            rhs[nv + np + i] += b[i];
        }
    }
    for (d, f) in fixed.iter().enumerate() {
        if let Some(val) = f {
            t.push(d, d, 1.0);
            rhs[d] = *val;
        }
    }
    ForwardSystem {
        matrix: t.compress(),
        rhs,
        counts,
    }
}

fn check_resistances(spaces: &DiscreteSpaces, r: &[f64]) -> Result<()> {
    if r.len() != spaces.n_outlets() {
        return Err(Error::validation(
            "R",
            format!("{} resistances for {} outlets", r.len(), spaces.n_outlets()),
        ));
    }
    if let Some(x) = r.iter().find(|x| !x.is_finite()) {
        return Err(Error::validation("R", format!("non-finite resistance {x}")));
    }
    if r.iter().any(|&x| x <= 0.0) {
        log::warn!("non-positive outlet resistance in {r:?}");
    }
    Ok(())
}

/// Steady Stokes system for resistances `r` (outlet order) and inlet data.
pub fn assemble_forward(
    spaces: &DiscreteSpaces,
    ops: &StokesOperators,
    r: &[f64],
    inlet: &InletData,
) -> Result<ForwardSystem> {
    assemble_forward_with_force(spaces, ops, r, inlet, None)
}

pub fn assemble_forward_with_force(
    spaces: &DiscreteSpaces,
    ops: &StokesOperators,
    r: &[f64],
    inlet: &InletData,
    body_force: Option<&(dyn Fn([f64; 3]) -> [f64; 3] + Sync)>,
) -> Result<ForwardSystem> {
    check_resistances(spaces, r)?;
    let dirichlet = dirichlet_values(spaces, inlet)?;
    let load = body_force.map(|f| assembly::load_vector(spaces, f));
    Ok(assemble_coupled(
        spaces,
        ops,
        r,
        &dirichlet,
        &CoupledTerms {
            velocity_rhs: load.as_deref(),
            ..Default::default()
        },
    ))
}

/// Relative residual threshold above which a direct solve is reported as failed.
const SOLVE_TOLERANCE: f64 = 1e-10;

pub fn solve_forward(system: &ForwardSystem) -> Result<StokesState> {
    let fact = Factorization::new(system.matrix.clone(), None, None)?;
    let x = fact.solve(&system.rhs)?;
    let res = fact.relative_residual(&x, &system.rhs);
    if res > SOLVE_TOLERANCE {
        return Err(Error::Factorization(format!("relative residual {res:.3e} after direct solve")));
    }
    Ok(StokesState::from_vector(&x, system.counts))
}

/// Forward solve from scratch.
pub fn solve_stokes(spaces: &DiscreteSpaces, props: FluidProps, r: &[f64], inlet: &InletData) -> Result<StokesState> {
    let ops = StokesOperators::new(spaces, props)?;
    solve_forward(&assemble_forward(spaces, &ops, r, inlet)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFunctionals {
    /// `∫_Γ v·n`
    pub flow: f64,
    /// `(1/|Γ|) ∫_Γ p`
    pub mean_pressure: f64,
    pub area: f64,
}

pub fn boundary_functionals(spaces: &DiscreteSpaces, state: &StokesState, tag: i64) -> Result<BoundaryFunctionals> {
    spaces.mesh().patch_geometry(tag)?;
    let g = assembly::flux_vector(spaces, tag);
    let (_, m, area) = assembly::boundary_pressure_mass(spaces, tag);
    Ok(BoundaryFunctionals {
        flow: dot(&g, &state.velocity),
        mean_pressure: dot(&m, &state.pressure) / area,
        area,
    })
}

/// Evaluates a P2 vector field and the P1 pressure at every point of a cell rule
/// and returns `(‖v − v_ex‖_L2, ‖p − p_ex‖_L2)`.
pub fn l2_errors(
    spaces: &DiscreteSpaces,
    state: &StokesState,
    v_exact: &dyn Fn([f64; 3]) -> [f64; 3],
    p_exact: &dyn Fn([f64; 3]) -> f64,
) -> (f64, f64) {
    let dim = spaces.dim();
    let mesh = spaces.mesh();
    let tab = element::Tabulation::cell(dim, &element::accurate_cell_rule(dim));
    let nloc = element::p2_count(dim);
    let (mut ev, mut ep) = (0.0, 0.0);
    for c in 0..mesh.n_cells() {
        let p = mesh.cell_points(c);
        let vol = mesh.cell_volume(c);
        let nodes = spaces.cell_nodes(c);
        let verts = mesh.cell(c);
        for q in 0..tab.len() {
            let x = element::bary_to_point(dim, &p, &tab.points[q]);
            let ve = v_exact(x);
            let w = tab.weights[q] * vol;
            for k in 0..dim {
                let vh: f64 = (0..nloc).map(|a| tab.values[q][a] * state.velocity[nodes[a] * dim + k]).sum();
                ev += w * (vh - ve[k]).powi(2);
            }
            let ph: f64 = (0..=dim).map(|i| tab.points[q][i] * state.pressure[verts[i]]).sum();
            ep += w * (ph - p_exact(x)).powi(2);
        }
    }
    (ev.sqrt(), ep.sqrt())
}

#[cfg(test)]
mod tests;
