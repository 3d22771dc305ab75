//! Unsteady flow with three-element Windkessel outlets, and wall shear indicators.
//!
//! Each step solves the steady system of [`crate::fem`] with the outlet rows
//! `λ_i − R_eff,i ∫v·n = p_offset,i` and an added `ρ M / dt` mass term.
//! Convection, when enabled, is linearized as `(vⁿ·∇)vⁿ⁺¹`.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::element::{local_edges, p2_bary_derivatives, p2_count, CellGeom, MAX_P2};
use crate::fem::{
    assemble_coupled, assembly, dirichlet_values, CoupledTerms, DiscreteSpaces, FluidProps, InletData, OutletTerms,
    StokesOperators, StokesState,
};
use crate::linalg::{dot, CsrMatrix, Factorization, TripletMatrix};
use crate::lumped::{
    periodic_capacitor_state, rcr_update, steps_per_period, trapezoid_mean, CapacitorInit, InletWaveform,
    WindkesselParams,
};

pub use crate::lumped::{rcr_step_coefficients, RcrStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowModel {
    #[default]
    Stokes,
    NavierStokes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransientConfig {
    pub model: FlowModel,
    /// seconds
    pub dt: f64,
    pub n_cycles: usize,
    /// wall traction is stored every this many steps
    pub snapshot_every: usize,
    pub init: CapacitorInit,
    pub velocity_init: VelocityInit,
    pub outlet_terms: OutletTerms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityInit {
    #[default]
    Zero,
    /// steady Stokes flow for the inflow at `t = 0` and resistances `R_p + R_d`
    Steady,
}

impl Default for TransientConfig {
    fn default() -> Self {
        Self {
            model: FlowModel::Stokes,
            dt: 5e-4,
            n_cycles: 5,
            snapshot_every: 10,
            init: CapacitorInit::Periodic,
            velocity_init: VelocityInit::Zero,
            // the literal outlet terms are not dissipative and grow under time stepping
            outlet_terms: OutletTerms::DoNothing,
        }
    }
}

impl TransientConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation("dt", format!("must be positive, got {}", self.dt)));
        }
        if self.n_cycles == 0 {
            return Err(Error::validation("cycles", "must be at least 1"));
        }
        if self.snapshot_every == 0 {
            return Err(Error::validation("snapshot_every", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientCycleMeans {
    pub cycle: usize,
    pub inlet_flow: f64,
    pub inlet_pressure: f64,
    pub outlet_flow: Vec<f64>,
    pub outlet_pressure: Vec<f64>,
}

/// Time histories sampled at `t_n = n·dt`, `n = 0..=N`, plus wall traction
/// snapshots at every `snapshot_every`-th step.
#[derive(Debug, Clone, Serialize)]
pub struct TransientResult {
    pub model: FlowModel,
    pub dt: f64,
    pub period: f64,
    pub steps_per_cycle: usize,
    pub n_cycles: usize,
    pub time: Vec<f64>,
    pub inlet_flow: Vec<f64>,
    /// mean pressure over the inlet
    pub inlet_pressure: Vec<f64>,
    pub outlet_tags: Vec<i64>,
    /// per outlet
    pub outlet_flow: Vec<Vec<f64>>,
    /// outlet multiplier, i.e. the pressure at the Windkessel input
    pub outlet_pressure: Vec<Vec<f64>>,
    pub capacitor: Vec<Vec<f64>>,
    pub snapshot_steps: Vec<usize>,
    pub wall_nodes: Vec<usize>,
    pub wall_coords: Vec<[f64; 3]>,
    /// snapshot × wall node
    pub wall_traction: Vec<Vec<[f64; 3]>>,
    pub cycle_means: Vec<TransientCycleMeans>,
    /// `max_n |ΣQ_out − Q_in|`
    pub max_mass_imbalance: f64,
    pub max_courant: f64,
    pub max_cell_reynolds: f64,
    #[serde(skip)]
    pub final_state: StokesState,
    pub wall_time_s: f64,
}

impl TransientResult {
    pub fn last_cycle(&self) -> &TransientCycleMeans {
        self.cycle_means.last().expect("at least one cycle")
    }
}

const COURANT_WARN: f64 = 1.0;
const CELL_REYNOLDS_WARN: f64 = 100.0;

/// Plug inflow shaped by `inlet`; see [`solve_unsteady_shaped`].
pub fn solve_unsteady(
    spaces: &DiscreteSpaces,
    props: FluidProps,
    wk: &[WindkesselParams],
    inlet: &InletWaveform,
    config: &TransientConfig,
) -> Result<TransientResult> {
    solve_unsteady_shaped(spaces, props, wk, inlet, &InletData::Plug(1.0), config)
}

/// `shape` is the inlet velocity for unit flow; it is scaled by the waveform.
pub fn solve_unsteady_shaped(
    spaces: &DiscreteSpaces,
    props: FluidProps,
    wk: &[WindkesselParams],
    inlet: &InletWaveform,
    shape: &InletData,
    config: &TransientConfig,
) -> Result<TransientResult> {
    let started = Instant::now();
    config.validate()?;
    props.validate()?;
    inlet.validate()?;
    let m = spaces.n_outlets();
    if wk.len() != m {
        return Err(Error::validation("windkessel", format!("{} parameter sets for {m} outlets", wk.len())));
    }
    for (i, w) in wk.iter().enumerate() {
        w.validate(i)?;
    }
    let dt = config.dt;
    let period = inlet.period();
    let steps = steps_per_period(period, dt)?;
    if steps % config.snapshot_every != 0 {
        return Err(Error::validation(
            "snapshot_every",
            format!("{} does not divide the {steps} steps of a cycle", config.snapshot_every),
        ));
    }

    let ops = StokesOperators::with_outlet_terms(spaces, props, config.outlet_terms)?;
    let counts = spaces.dof_counts();
    let (nv, np) = (counts.velocity, counts.pressure);
    let unit = dirichlet_values(spaces, shape)?;
    let mut fixed = vec![false; nv];
    for &(d, _) in &unit {
        fixed[d] = true;
    }
    let rho_dt = props.density / dt;
    let mass = assembly::velocity_mass(spaces);
    let mass_dt = scaled(&mass, rho_dt);
    let r_eff: Vec<f64> = wk.iter().map(|w| rcr_step_coefficients(w, dt, 0.0).r_eff).collect();
    let (_, inlet_pmass, inlet_area) = assembly::boundary_pressure_mass(spaces, spaces.mesh().tag_map().inlet);

    let mut pc = match &config.init {
        CapacitorInit::Zero => vec![0.0; m],
        CapacitorInit::Periodic => periodic_capacitor_state(wk, inlet, dt)?,
        CapacitorInit::Given(v) => {
            if v.len() != m {
                return Err(Error::validation("capacitor", format!("{} values for {m} outlets", v.len())));
            }
            v.clone()
        }
    };

    let base = assemble_coupled(
        spaces,
        &ops,
        &r_eff,
        &unit,
        &CoupledTerms {
            extra: Some(&mass_dt),
            ..Default::default()
        },
    );
    let mut fact = Factorization::new(base.matrix.clone(), None, None)?;
    let wall = WallShearOperator::new(spaces, props.viscosity);
    let (h_min, h_max) = spaces.mesh().edge_length_range();

    let total = steps * config.n_cycles;
    let mut res = TransientResult {
        model: config.model,
        dt,
        period,
        steps_per_cycle: steps,
        n_cycles: config.n_cycles,
        time: Vec::with_capacity(total + 1),
        inlet_flow: Vec::with_capacity(total + 1),
        inlet_pressure: Vec::with_capacity(total + 1),
        outlet_tags: spaces.mesh().tag_map().outlets.clone(),
        outlet_flow: vec![Vec::with_capacity(total + 1); m],
        outlet_pressure: vec![Vec::with_capacity(total + 1); m],
        capacitor: vec![Vec::with_capacity(total + 1); m],
        snapshot_steps: Vec::new(),
        wall_nodes: wall.nodes.clone(),
        wall_coords: wall.nodes.iter().map(|&n| spaces.node_coords()[n]).collect(),
        wall_traction: Vec::new(),
        cycle_means: Vec::new(),
        max_mass_imbalance: 0.0,
        max_courant: 0.0,
        max_cell_reynolds: 0.0,
        final_state: StokesState::zeros(counts),
        wall_time_s: 0.0,
    };

    let mut x = vec![0.0; counts.total()];
    if config.velocity_init == VelocityInit::Steady {
        let q0 = inlet.value(0.0);
        let dirichlet: Vec<(usize, f64)> = unit.iter().map(|&(d, val)| (d, q0 * val)).collect();
        let r_total: Vec<f64> = wk.iter().map(|w| w.total_resistance()).collect();
        let p_dist: Vec<f64> = wk.iter().map(|w| w.distal_pressure).collect();
        let sys = assemble_coupled(
            spaces,
            &ops,
            &r_total,
            &dirichlet,
            &CoupledTerms {
                multiplier_rhs: Some(&p_dist),
                ..Default::default()
            },
        );
        x = crate::fem::solve_forward(&sys)?.to_vector();
    }
    let mut v = x[..nv].to_vec();
    let flows0 = ops.outlet_flows(&v);
    res.time.push(0.0);
    res.inlet_flow.push(ops.inlet_inflow(&v));
    res.inlet_pressure.push(dot(&inlet_pmass, &x[nv..nv + np]) / inlet_area);
    for i in 0..m {
        res.outlet_flow[i].push(flows0[i]);
        res.outlet_pressure[i].push(if config.velocity_init == VelocityInit::Steady {
            x[nv + np + i]
        } else {
            pc[i]
        });
        res.capacitor[i].push(pc[i]);
    }
    res.snapshot_steps.push(0);
    res.wall_traction.push(wall.evaluate(&v));

    let mut warned = false;
    for n in 1..=total {
        let t = n as f64 * dt;
        let q = inlet.value(t);
        let offsets: Vec<f64> = wk.iter().zip(&pc).map(|(w, &p)| rcr_step_coefficients(w, dt, p).p_offset).collect();
        let mut mv = mass.matvec(&v);
        for (k, val) in mv.iter_mut().enumerate() {
            *val = if fixed[k] { 0.0 } else { rho_dt * *val };
        }
        let rhs = match config.model {
            FlowModel::Stokes => {
                let mut rhs: Vec<f64> = base.rhs.iter().map(|b| q * b).collect();
                for k in 0..nv {
                    rhs[k] += mv[k];
                }
                for i in 0..m {
                    rhs[nv + np + i] += offsets[i];
                }
                rhs
            }
            FlowModel::NavierStokes => {
                let conv = assembly::convection(spaces, &v, props.density);
                let extra = sum(&mass_dt, &conv);
                let dirichlet: Vec<(usize, f64)> = unit.iter().map(|&(d, val)| (d, q * val)).collect();
                let sys = assemble_coupled(
                    spaces,
                    &ops,
                    &r_eff,
                    &dirichlet,
                    &CoupledTerms {
                        extra: Some(&extra),
                        velocity_rhs: Some(&mv),
                        multiplier_rhs: Some(&offsets),
                    },
                );
                fact.refactor(sys.matrix)?;
                sys.rhs
            }
        };
        x = fact.solve(&rhs)?;
        let rr = fact.relative_residual(&x, &rhs);
        if rr > 1e-8 {
            return Err(Error::Factorization(format!("step {n}: relative residual {rr:.3e}")));
        }
        v.copy_from_slice(&x[..nv]);
        let flows = ops.outlet_flows(&v);
        let inflow = ops.inlet_inflow(&v);
        res.max_mass_imbalance = res.max_mass_imbalance.max((flows.iter().sum::<f64>() - inflow).abs());
        for i in 0..m {
            pc[i] = rcr_update(&wk[i], dt, pc[i], flows[i]);
            res.outlet_flow[i].push(flows[i]);
            res.outlet_pressure[i].push(x[nv + np + i]);
            res.capacitor[i].push(pc[i]);
        }
        res.time.push(t);
        res.inlet_flow.push(inflow);
        res.inlet_pressure.push(dot(&inlet_pmass, &x[nv..nv + np]) / inlet_area);

        if n % config.snapshot_every == 0 {
            res.snapshot_steps.push(n);
            res.wall_traction.push(wall.evaluate(&v));
            if config.model == FlowModel::NavierStokes {
                let dim = spaces.dim();
                let umax = v
                    .chunks(dim)
                    .map(|u| u.iter().map(|c| c * c).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                res.max_courant = res.max_courant.max(umax * dt / h_min);
                res.max_cell_reynolds = res.max_cell_reynolds.max(props.density * umax * h_max / props.viscosity);
                if !warned && (res.max_courant > COURANT_WARN || res.max_cell_reynolds > CELL_REYNOLDS_WARN) {
                    log::warn!(
                        "step {n}: Courant {:.2}, cell Reynolds {:.1}; the implicit scheme stays stable but may be inaccurate",
                        res.max_courant,
                        res.max_cell_reynolds
                    );
                    warned = true;
                }
            }
        }
        if n % steps == 0 {
            let c = n / steps - 1;
            let start = c * steps;
            res.cycle_means.push(TransientCycleMeans {
                cycle: c,
                inlet_flow: trapezoid_mean(&res.inlet_flow, start, steps),
                inlet_pressure: trapezoid_mean(&res.inlet_pressure, start, steps),
                outlet_flow: res.outlet_flow.iter().map(|f| trapezoid_mean(f, start, steps)).collect(),
                outlet_pressure: res.outlet_pressure.iter().map(|p| trapezoid_mean(p, start, steps)).collect(),
            });
        }
    }
    res.final_state = StokesState::from_vector(&x, counts);
    res.wall_time_s = started.elapsed().as_secs_f64();
    Ok(res)
}

fn scaled(a: &CsrMatrix, s: f64) -> CsrMatrix {
    let mut t = TripletMatrix::with_capacity(a.dim(), a.nnz());
    for (r, c, v) in a.triplets() {
        t.push(r, c, s * v);
    }
    t.compress()
}

fn sum(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    let mut t = TripletMatrix::with_capacity(a.dim(), a.nnz() + b.nnz());
    for (r, c, v) in a.triplets().chain(b.triplets()) {
        t.push(r, c, v);
    }
    t.compress()
}

#[derive(Debug, Clone, Copy)]
struct Contribution {
    slot: usize,
    cell: usize,
    geom: CellGeom,
    bary: [f64; 4],
    normal: [f64; 3],
    weight: f64,
}

/// Evaluates the tangential wall traction `μ(∇v + ∇vᵀ)n − ((…)·n)n` at the
/// P2 nodes of the wall facets. Each facet contributes the value from its
/// own cell, weighted by the facet measure.
#[derive(Debug, Clone)]
pub struct WallShearOperator {
    dim: usize,
    viscosity: f64,
    pub nodes: Vec<usize>,
    normals: Vec<[f64; 3]>,
    weight_sum: Vec<f64>,
    contribs: Vec<Contribution>,
    cell_nodes: Vec<Vec<usize>>,
}

impl WallShearOperator {
    pub fn new(spaces: &DiscreteSpaces, viscosity: f64) -> Self {
        let dim = spaces.dim();
        let mesh = spaces.mesh();
        let mut raw = Vec::new();
        for &tag in &mesh.tag_map().walls {
            for f in mesh.facets_with_tag(tag) {
                let (c, opp) = mesh.facet_owner(f);
                let (normal, meas) = mesh.facet_normal(f);
                let geom = CellGeom::new(dim, &mesh.cell_points(c));
                let nodes = spaces.cell_nodes(c);
                for k in (0..=dim).filter(|&k| k != opp) {
                    let mut l = [0.0; 4];
                    l[k] = 1.0;
                    raw.push((nodes[k], c, geom, l, normal, meas));
                }
                for (e, &(i, j)) in local_edges(dim).iter().enumerate() {
                    if i == opp || j == opp {
                        continue;
                    }
                    let mut l = [0.0; 4];
                    l[i] = 0.5;
                    l[j] = 0.5;
                    raw.push((nodes[dim + 1 + e], c, geom, l, normal, meas));
                }
            }
        }
        let mut nodes: Vec<usize> = raw.iter().map(|r| r.0).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let mut normals = vec![[0.0; 3]; nodes.len()];
        let mut weight_sum = vec![0.0; nodes.len()];
        let contribs: Vec<Contribution> = raw
            .into_iter()
            .map(|(node, cell, geom, bary, normal, weight)| {
                let slot = nodes.binary_search(&node).expect("collected above");
                for k in 0..3 {
                    normals[slot][k] += weight * normal[k];
                }
                weight_sum[slot] += weight;
                Contribution {
                    slot,
                    cell,
                    geom,
                    bary,
                    normal,
                    weight,
                }
            })
            .collect();
        for n in &mut normals {
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if len > 0.0 {
                for c in n.iter_mut() {
                    *c /= len;
                }
            }
        }
        let cell_nodes = (0..mesh.n_cells()).map(|c| spaces.cell_nodes(c).to_vec()).collect();
        Self {
            dim,
            viscosity,
            nodes,
            normals,
            weight_sum,
            contribs,
            cell_nodes,
        }
    }

    pub fn evaluate(&self, velocity: &[f64]) -> Vec<[f64; 3]> {
        let dim = self.dim;
        let nloc = p2_count(dim);
        let mut acc = vec![[0.0; 3]; self.nodes.len()];
        let mut dl = [[0.0; 4]; MAX_P2];
        let mut g = [[0.0; 3]; MAX_P2];
        for ct in &self.contribs {
            p2_bary_derivatives(dim, &ct.bary, &mut dl);
            ct.geom.p2_gradients(dim, &dl, &mut g);
            let nodes = &self.cell_nodes[ct.cell];
            // grad[k][j] = ∂v_k/∂x_j
            let mut grad = [[0.0; 3]; 3];
            for a in 0..nloc {
                for k in 0..dim {
                    let vk = velocity[nodes[a] * dim + k];
                    for j in 0..3 {
                        grad[k][j] += vk * g[a][j];
                    }
                }
            }
            let n = ct.normal;
            let mut t = [0.0; 3];
            for k in 0..3 {
                for j in 0..3 {
                    t[k] += self.viscosity * (grad[k][j] + grad[j][k]) * n[j];
                }
            }
            let tn = t[0] * n[0] + t[1] * n[1] + t[2] * n[2];
            for k in 0..3 {
                acc[ct.slot][k] += ct.weight * (t[k] - tn * n[k]);
            }
        }
        for (s, a) in acc.iter_mut().enumerate() {
            let w = self.weight_sum[s];
            let n = self.normals[s];
            for c in a.iter_mut() {
                *c /= w;
            }
            // where facets meet at an angle, project onto the averaged tangent plane
            let an = a[0] * n[0] + a[1] * n[1] + a[2] * n[2];
            for k in 0..3 {
                a[k] -= an * n[k];
            }
        }
        acc
    }

    pub fn normals(&self) -> &[[f64; 3]] {
        &self.normals
    }
}

/// Wall traction at the wall nodes over a span of snapshots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShearSeries {
    pub times: Vec<f64>,
    pub nodes: Vec<usize>,
    pub coords: Vec<[f64; 3]>,
    /// time × node
    pub values: Vec<Vec<[f64; 3]>>,
}

/// Snapshots covering one cycle, endpoints included; the last cycle by default.
pub fn wall_shear_series(res: &TransientResult, cycle: Option<usize>) -> Result<ShearSeries> {
    if res.snapshot_steps.len() < 2 {
        return Err(Error::validation("snapshots", "result holds no wall traction snapshots"));
    }
    let c = cycle.unwrap_or(res.n_cycles - 1);
    if c >= res.n_cycles {
        return Err(Error::validation("cycle", format!("cycle {c} not simulated")));
    }
    let (a, b) = (c * res.steps_per_cycle, (c + 1) * res.steps_per_cycle);
    let idx: Vec<usize> = (0..res.snapshot_steps.len())
        .filter(|&k| (a..=b).contains(&res.snapshot_steps[k]))
        .collect();
    if idx.len() < 2 || res.snapshot_steps[idx[0]] != a || res.snapshot_steps[*idx.last().unwrap()] != b {
        return Err(Error::validation("snapshots", format!("snapshots do not cover cycle {c}")));
    }
    Ok(ShearSeries {
        times: idx.iter().map(|&k| res.snapshot_steps[k] as f64 * res.dt).collect(),
        nodes: res.wall_nodes.clone(),
        coords: res.wall_coords.clone(),
        values: idx.iter().map(|&k| res.wall_traction[k].clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicatorField {
    pub nodes: Vec<usize>,
    pub coords: Vec<[f64; 3]>,
    pub tawss: Vec<f64>,
    pub osi: Vec<f64>,
}

/// Time-averaged wall shear magnitude and oscillatory shear index, by the
/// trapezoidal rule over a series spanning exactly one period.
pub fn tawss_osi(series: &ShearSeries, period: f64) -> Result<IndicatorField> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::validation("period", format!("must be positive, got {period}")));
    }
    let nt = series.times.len();
    if nt < 2 || series.values.len() != nt {
        return Err(Error::validation("series", "needs at least two snapshots"));
    }
    let span = series.times[nt - 1] - series.times[0];
    if (span - period).abs() > 1e-9 * period {
        return Err(Error::validation("series", format!("spans {span} s, not one period of {period} s")));
    }
    let nn = series.nodes.len();
    let mut tawss = vec![0.0; nn];
    let mut osi = vec![0.0; nn];
    for j in 0..nn {
        let (mut mag, mut vec) = (0.0, [0.0; 3]);
        for k in 0..nt - 1 {
            let h = 0.5 * (series.times[k + 1] - series.times[k]);
            let (a, b) = (series.values[k][j], series.values[k + 1][j]);
            mag += h * (norm(a) + norm(b));
            for c in 0..3 {
                vec[c] += h * (a[c] + b[c]);
            }
        }
        tawss[j] = mag / period;
        osi[j] = if mag > 0.0 { (0.5 * (1.0 - norm(vec) / mag)).clamp(0.0, 0.5) } else { 0.0 };
    }
    Ok(IndicatorField {
        nodes: series.nodes.clone(),
        coords: series.coords.clone(),
        tawss,
        osi,
    })
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// `|f − f_ref| / max f_ref`, pointwise.
pub fn relative_difference(field: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    if field.len() != reference.len() {
        return Err(Error::validation(
            "field",
            format!("{} values against {} reference values", field.len(), reference.len()),
        ));
    }
    let max = reference.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return Err(Error::validation("reference", "maximum must be positive"));
    }
    Ok(field.iter().zip(reference).map(|(f, r)| (f - r).abs() / max).collect())
}

/// `t_s,Q_cm3_s,p_dyn_cm2,pc_dyn_cm2` for one outlet.
pub fn outlet_waveform_csv(res: &TransientResult, outlet: usize) -> String {
    let mut s = String::from("t_s,Q_cm3_s,p_dyn_cm2,pc_dyn_cm2\n");
    for n in 0..res.time.len() {
        let _ = writeln!(
            s,
            "{:.9e},{:.9e},{:.9e},{:.9e}",
            res.time[n], res.outlet_flow[outlet][n], res.outlet_pressure[outlet][n], res.capacitor[outlet][n]
        );
    }
    s
}

/// One row per wall node: id, coordinates, TAWSS, OSI.
pub fn indicators_csv(field: &IndicatorField, dim: usize) -> String {
    let mut s = String::from(if dim == 2 { "node,x,y,tawss,osi\n" } else { "node,x,y,z,tawss,osi\n" });
    for j in 0..field.nodes.len() {
        let x = field.coords[j];
        let _ = write!(s, "{},{:.9e},{:.9e}", field.nodes[j], x[0], x[1]);
        if dim == 3 {
            let _ = write!(s, ",{:.9e}", x[2]);
        }
        let _ = writeln!(s, ",{:.9e},{:.9e}", field.tawss[j], field.osi[j]);
    }
    s
}
