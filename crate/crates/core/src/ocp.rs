//! Optimal-control calibration of outlet resistances.
//!
//! The Lagrangian of the cost under the Stokes constraint is made stationary
//! with respect to every unknown at once. The unknown vector is
//!
//! ```text
//! [ v | p | λ | μ | R | u_in | z | b | t | σ | k | k_in ]
//! ```
//!
//! where `(z, b, t)` are the adjoints of momentum, continuity and the outlet
//! rows, `k` are the auxiliary outlet flows, and `μ, u_in, σ, k_in` exist only
//! when the inlet is controlled too (the inlet velocity is then imposed weakly
//! through the trace multiplier `μ`, with adjoint `σ`).

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{murray_resistances, ohm_resistances};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_forward, assembly, inlet_plug_profile, solve_forward, DiscreteSpaces, FluidProps,
    InletData, OutletTerms, StokesOperators, StokesState,
};
use crate::linalg::{dot, norm, CsrMatrix, Factorization, TripletMatrix};
use crate::measurements::MeasurementSet;
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    /// outlet resistances only, strong inlet
    #[default]
    Outlets,
    /// outlet resistances and a scalar inlet factor
    OutletsAndInlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcpConfig {
    pub mode: ControlMode,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_halvings: usize,
    /// starting resistances in mesh outlet order; Ohm's or Murray's law when absent
    pub initial_r: Option<Vec<f64>>,
    /// weight of `½ Σ ((R_i − R0_i)/R0_i)²`, zero by default
    pub tikhonov: f64,
    pub outlet_terms: OutletTerms,
}

impl Default for OcpConfig {
    fn default() -> Self {
        Self {
            mode: ControlMode::Outlets,
            max_iter: 50,
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_halvings: 8,
            initial_r: None,
            tikhonov: 0.0,
            outlet_terms: OutletTerms::default(),
        }
    }
}

impl OcpConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if self.max_iter == 0 {
            return Err(Error::validation("ocp.max_iter", "must be at least 1"));
        }
        if !pos(self.rel_tol) || !pos(self.abs_tol) {
            return Err(Error::validation("ocp.tolerances", "must be positive"));
        }
        if !(self.tikhonov >= 0.0 && self.tikhonov.is_finite()) {
            return Err(Error::validation("ocp.tikhonov", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVector {
    /// mesh outlet order
    pub r: Vec<f64>,
    pub u_in: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointState {
    pub z: Vec<f64>,
    pub b: Vec<f64>,
    pub t: Vec<f64>,
    pub k: Vec<f64>,
    /// inlet trace multiplier of the state and its adjoint (inlet-control mode)
    pub inlet_traction: Vec<f64>,
    pub inlet_adjoint: Vec<f64>,
    pub k_in: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTerms {
    pub total: f64,
    pub pressure: f64,
    /// mesh outlet order
    pub outlets: Vec<f64>,
    pub inlet: Option<f64>,
    pub regularization: f64,
}

/// Measurement data arranged in mesh outlet order, plus the operators the
/// optimality system needs.
pub struct OcpProblem {
    spaces: DiscreteSpaces,
    ops: StokesOperators,
    mode: ControlMode,
    q_in: f64,
    q: Vec<f64>,
    alpha: Vec<f64>,
    alpha_p: f64,
    alpha_in: f64,
    p_d: f64,
    /// boundary pressure mass on the pressure patch, and its area
    mp: CsrMatrix,
    area_p: f64,
    /// inlet plug nodal values
    v_plug: Vec<f64>,
    /// inlet velocity dofs and the trace mass restricted to them (`ni × nvel`)
    inlet_dofs: Vec<usize>,
    trace: CsrMatrix,
    c_plug: Vec<f64>,
    area_in: f64,
}

impl std::fmt::Debug for OcpProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OcpProblem")
            .field("mode", &self.mode)
            .field("dofs", &self.spaces.dof_counts())
            .finish()
    }
}

impl OcpProblem {
    pub fn new(spaces: DiscreteSpaces, props: FluidProps, ms: &MeasurementSet, mode: ControlMode) -> Result<Self> {
        Self::with_outlet_terms(spaces, props, ms, mode, OutletTerms::default())
    }

    pub fn with_outlet_terms(
        spaces: DiscreteSpaces,
        props: FluidProps,
        ms: &MeasurementSet,
        mode: ControlMode,
        terms: OutletTerms,
    ) -> Result<Self> {
        ms.validate()?;
        let mesh = spaces.mesh();
        let tm = mesh.tag_map();
        if ms.inlet_tag != tm.inlet {
            return Err(Error::validation(
                "inlet.tag",
                format!("measurement inlet tag {} does not match mesh inlet tag {}", ms.inlet_tag, tm.inlet),
            ));
        }
        ms.check_outlet_tags(&tm.outlets)?;
        let mut q = Vec::with_capacity(tm.outlets.len());
        let mut alpha = Vec::with_capacity(tm.outlets.len());
        for &tag in &tm.outlets {
            let o = ms.outlets.iter().find(|o| o.tag == tag).expect("checked above");
            q.push(o.flow);
            alpha.push(o.weight);
        }
        if tm.role(ms.pressure_patch_tag).is_none() {
            return Err(Error::UnknownTag(ms.pressure_patch_tag));
        }
        let ops = StokesOperators::with_outlet_terms(&spaces, props, terms)?;
        let (mp, _, area_p) = assembly::boundary_pressure_mass(&spaces, ms.pressure_patch_tag);

        let dim = spaces.dim();
        let inlet_patch = mesh.inlet_patch();
        let plug = inlet_plug_profile(&inlet_patch, ms.inlet_flow)?.velocity();
        let mut v_plug = vec![0.0; spaces.n_velocity()];
        let mut inlet_dofs = Vec::with_capacity(spaces.inlet_nodes().len() * dim);
        for &n in spaces.inlet_nodes() {
            for k in 0..dim {
                v_plug[n * dim + k] = plug[k];
                inlet_dofs.push(n * dim + k);
            }
        }
        let (trace, c_plug) = if mode == ControlMode::OutletsAndInlet {
            let bm = assembly::boundary_velocity_mass(&spaces, tm.inlet);
            let mut t = TripletMatrix::rect(inlet_dofs.len(), spaces.n_velocity());
            for (row, &d) in inlet_dofs.iter().enumerate() {
                for (c, v) in bm.row(d) {
                    t.push(row, c, v);
                }
            }
            let trace = t.compress();
            let c_plug = trace.matvec(&v_plug);
            (trace, c_plug)
        } else {
            (TripletMatrix::rect(0, spaces.n_velocity()).compress(), Vec::new())
        };
        Ok(Self {
            ops,
            mode,
            q_in: ms.inlet_flow,
            q,
            alpha,
            alpha_p: ms.pressure_weight,
            alpha_in: ms.inlet_weight,
            p_d: ms.target_pressure,
            mp,
            area_p,
            v_plug,
            inlet_dofs,
            trace,
            c_plug,
            area_in: inlet_patch.area,
            spaces,
        })
    }

    pub fn spaces(&self) -> &DiscreteSpaces {
        &self.spaces
    }

    pub fn operators(&self) -> &StokesOperators {
        &self.ops
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    fn n_out(&self) -> usize {
        self.q.len()
    }

    pub fn layout(&self) -> Layout {
        let c = self.spaces.dof_counts();
        let inlet = self.mode == ControlMode::OutletsAndInlet;
        Layout::new(c.velocity, c.pressure, c.multipliers, if inlet { self.inlet_dofs.len() } else { 0 }, inlet)
    }

    /// Cost of a state; `u_in`-independent because the inlet term uses the
    /// computed inlet flux.
    pub fn cost(&self, state: &StokesState) -> CostTerms {
        let e: Vec<f64> = state.pressure.iter().map(|p| p - self.p_d).collect();
        let pressure = 0.5 * self.alpha_p * dot(&e, &self.mp.matvec(&e)) / (self.p_d * self.p_d * self.area_p);
        let flows = self.ops.outlet_flows(&state.velocity);
        let outlets: Vec<f64> = (0..self.n_out())
            .map(|i| 0.5 * self.alpha[i] * ((flows[i] - self.q[i]) / self.q[i]).powi(2))
            .collect();
        let inlet = (self.mode == ControlMode::OutletsAndInlet).then(|| {
            let flux = dot(&self.ops.inlet_flux, &state.velocity);
            0.5 * self.alpha_in * ((flux + self.q_in) / self.q_in).powi(2)
        });
        let total = pressure + outlets.iter().sum::<f64>() + inlet.unwrap_or(0.0);
        CostTerms {
            total,
            pressure,
            outlets,
            inlet,
            regularization: 0.0,
        }
    }

    /// Velocity dofs held by strong Dirichlet conditions, with their values.
    fn fixed_dofs(&self) -> Vec<Option<f64>> {
        let nv = self.spaces.n_velocity();
        let dim = self.spaces.dim();
        let mut fixed = vec![None; nv];
        for &n in self.spaces.wall_nodes() {
            for k in 0..dim {
                fixed[n * dim + k] = Some(0.0);
            }
        }
        if self.mode == ControlMode::Outlets {
            for &d in &self.inlet_dofs {
                fixed[d] = Some(self.v_plug[d]);
            }
        }
        fixed
    }

    /// Typical magnitude of every unknown, used for column scaling.
    pub fn unknown_scales(&self, lay: &Layout) -> Vec<f64> {
        let (q, pd, a) = (self.q_in.abs().max(f64::MIN_POSITIVE), self.p_d, self.area_in);
        let mut s = vec![0.0; lay.n];
        let mut fill = |r: std::ops::Range<usize>, v: f64| s[r].iter_mut().for_each(|x| *x = v);
        fill(lay.v(), q / a);
        fill(lay.p(), pd);
        fill(lay.lambda(), pd);
        fill(lay.mu(), pd);
        fill(lay.r(), pd / q);
        fill(lay.u_in(), 1.0);
        fill(lay.z(), 1.0 / (pd * a));
        fill(lay.b(), 1.0 / q);
        fill(lay.t(), 1.0 / pd);
        fill(lay.sigma(), 1.0 / q);
        fill(lay.k(), q);
        fill(lay.k_in(), q);
        s
    }

    /// Gradient of the Lagrangian at `x`, with the Dirichlet rows replaced by
    /// `v − v_D` and `z`.
    pub fn residual(&self, x: &[f64], r_ref: &[f64], tikhonov: f64) -> Vec<f64> {
        let lay = self.layout();
        let (v, p, lam, mu) = (&x[lay.v()], &x[lay.p()], &x[lay.lambda()], &x[lay.mu()]);
        let (r, z, b, t, sig, k) = (&x[lay.r()], &x[lay.z()], &x[lay.b()], &x[lay.t()], &x[lay.sigma()], &x[lay.k()]);
        let fixed = self.fixed_dofs();
        let ops = &self.ops;
        let m = self.n_out();
        let mut f = vec![0.0; lay.n];

        // adjoint momentum (derivative in v)
        let mut fv = ops.stiffness.transpose_matvec(z);
        let btb = ops.divergence.transpose_matvec(b);
        for (a, c) in fv.iter_mut().zip(&btb) {
            *a += c;
        }
        for i in 0..m {
            let coef = -r[i] * t[i] + self.alpha[i] * (k[i] - self.q[i]) / (self.q[i] * self.q[i]);
            axpy(&mut fv, coef, &ops.outlet_flux[i]);
        }
        if lay.inlet {
            let kin = x[lay.k_in().start];
            axpy(&mut fv, self.alpha_in * (kin + self.q_in) / (self.q_in * self.q_in), &ops.inlet_flux);
            let cts = self.trace.transpose_matvec(sig);
            for (a, c) in fv.iter_mut().zip(&cts) {
                *a += c;
            }
        }
        // state momentum (derivative in z)
        let mut fz = ops.stiffness.matvec(v);
        let btp = ops.divergence.transpose_matvec(p);
        for (a, c) in fz.iter_mut().zip(&btp) {
            *a -= c;
        }
        for i in 0..m {
            axpy(&mut fz, lam[i], &ops.outlet_flux[i]);
        }
        if lay.inlet {
            let ctm = self.trace.transpose_matvec(mu);
            for (a, c) in fz.iter_mut().zip(&ctm) {
                *a += c;
            }
        }
        for (d, fx) in fixed.iter().enumerate() {
            if let Some(val) = fx {
                fv[d] = v[d] - val;
                fz[d] = z[d];
            }
        }
        f[lay.v()].copy_from_slice(&fv);
        f[lay.z()].copy_from_slice(&fz);

        let cp = self.alpha_p / (self.p_d * self.p_d * self.area_p);
        let e: Vec<f64> = p.iter().map(|pi| pi - self.p_d).collect();
        let me = self.mp.matvec(&e);
        let bz = ops.divergence.matvec(z);
        for (j, o) in lay.p().enumerate() {
            f[o] = cp * me[j] - bz[j];
        }
        let bv = ops.divergence.matvec(v);
        f[lay.b()].copy_from_slice(&bv);
        let flows = ops.outlet_flows(v);
        for i in 0..m {
            let gz = dot(&ops.outlet_flux[i], z);
            f[lay.lambda().start + i] = gz + t[i];
            f[lay.r().start + i] = -t[i] * flows[i] + tikhonov * (r[i] - r_ref[i]) / (r_ref[i] * r_ref[i]);
            f[lay.t().start + i] = lam[i] - r[i] * flows[i];
            f[lay.k().start + i] = k[i] - flows[i];
        }
        if lay.inlet {
            let u_in = x[lay.u_in().start];
            let cz = self.trace.matvec(z);
            let cv = self.trace.matvec(v);
            for (j, o) in lay.mu().enumerate() {
                f[o] = cz[j];
            }
            for (j, o) in lay.sigma().enumerate() {
                f[o] = cv[j] - u_in * self.c_plug[j];
            }
            f[lay.u_in().start] = -dot(sig, &self.c_plug);
            f[lay.k_in().start] = x[lay.k_in().start] - dot(&ops.inlet_flux, v);
        }
        f
    }

    /// Exact derivative of [`OcpProblem::residual`].
    ///
    /// Entries that vanish at the current iterate are stored anyway so the
    /// sparsity pattern does not change between Newton steps.
    pub fn jacobian(&self, x: &[f64], r_ref: &[f64], tikhonov: f64) -> CsrMatrix {
        let lay = self.layout();
        let (v, r, t) = (&x[lay.v()], &x[lay.r()], &x[lay.t()]);
        let fixed = self.fixed_dofs();
        let ops = &self.ops;
        let m = self.n_out();
        let (ov, op, ol, omu, or, ouin, oz, ob, ot, osig, ok, okin) = (
            lay.v().start,
            lay.p().start,
            lay.lambda().start,
            lay.mu().start,
            lay.r().start,
            lay.u_in().start,
            lay.z().start,
            lay.b().start,
            lay.t().start,
            lay.sigma().start,
            lay.k().start,
            lay.k_in().start,
        );
        let mut j = TripletMatrix::with_capacity(lay.n, 2 * ops.stiffness.nnz() + 4 * ops.divergence.nnz());
        let free = |d: usize| fixed[d].is_none();

        for (row, col, val) in ops.stiffness.triplets() {
            // v-rows hold Kᵀ against z, z-rows hold K against v
            if free(col) {
                j.push(ov + col, oz + row, val);
            }
            if free(row) {
                j.push(oz + row, ov + col, val);
            }
        }
        for (q, c, val) in ops.divergence.triplets() {
            if free(c) {
                j.push(ov + c, ob + q, val);
                j.push(oz + c, op + q, -val);
            }
            j.push(ob + q, ov + c, val);
            j.push(op + q, oz + c, -val);
        }
        let cp = self.alpha_p / (self.p_d * self.p_d * self.area_p);
        for (a, c, val) in self.mp.triplets() {
            j.push(op + a, op + c, cp * val);
        }
        let flows = ops.outlet_flows(v);
        for i in 0..m {
            let g = &ops.outlet_flux[i];
            let a_i = self.alpha[i] / (self.q[i] * self.q[i]);
            for (d, &gd) in g.iter().enumerate() {
                if gd == 0.0 {
                    continue;
                }
                if free(d) {
                    j.push(ov + d, or + i, -t[i] * gd);
                    j.push(ov + d, ot + i, -r[i] * gd);
                    j.push(ov + d, ok + i, a_i * gd);
                    j.push(oz + d, ol + i, gd);
                }
                j.push(ol + i, oz + d, gd);
                j.push(or + i, ov + d, -t[i] * gd);
                j.push(ot + i, ov + d, -r[i] * gd);
                j.push(ok + i, ov + d, -gd);
            }
            j.push(ol + i, ot + i, 1.0);
            j.push(or + i, ot + i, -flows[i]);
            j.push(or + i, or + i, tikhonov / (r_ref[i] * r_ref[i]));
            j.push(ot + i, ol + i, 1.0);
            j.push(ot + i, or + i, -flows[i]);
            j.push(ok + i, ok + i, 1.0);
        }
        if lay.inlet {
            let a_in = self.alpha_in / (self.q_in * self.q_in);
            for (d, &gd) in ops.inlet_flux.iter().enumerate() {
                if gd == 0.0 {
                    continue;
                }
                if free(d) {
                    j.push(ov + d, okin, a_in * gd);
                }
                j.push(okin, ov + d, -gd);
            }
            j.push(okin, okin, 1.0);
            for (row, col, val) in self.trace.triplets() {
                if free(col) {
                    j.push(ov + col, osig + row, val);
                    j.push(oz + col, omu + row, val);
                }
                j.push(omu + row, oz + col, val);
                j.push(osig + row, ov + col, val);
            }
            for (row, &cv) in self.c_plug.iter().enumerate() {
                j.push(osig + row, ouin, -cv);
                j.push(ouin, osig + row, -cv);
            }
        }
        for (d, fx) in fixed.iter().enumerate() {
            if fx.is_some() {
                j.push(ov + d, ov + d, 1.0);
                j.push(oz + d, oz + d, 1.0);
            }
        }
        j.compress()
    }

    /// Forward solve for given controls (strong inlet scaled by `u_in`).
    pub fn forward(&self, r: &[f64], u_in: f64) -> Result<StokesState> {
        let inlet = InletData::Plug(u_in * self.q_in);
        solve_forward(&assemble_forward(&self.spaces, &self.ops, r, &inlet)?)
    }

    /// Reduced cost `J(R)` after a forward solve.
    pub fn reduced_cost(&self, r: &[f64], u_in: f64) -> Result<f64> {
        Ok(self.cost(&self.forward(r, u_in)?).total)
    }

    pub fn initial_resistances(&self, ms: &MeasurementSet, config: &OcpConfig) -> Result<Vec<f64>> {
        if let Some(r) = &config.initial_r {
            if r.len() != self.n_out() || r.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::validation("ocp.initial_r", format!("need {} positive values", self.n_out())));
            }
            return Ok(r.clone());
        }
        match ohm_resistances(self.p_d, &self.q) {
            Ok(r) => Ok(r),
            Err(_) => murray_resistances(&self.spaces.mesh().outlet_areas(), self.p_d, ms.inlet_flow, 2.0),
        }
    }

    /// Starting iterate: forward state at `r0`, zero adjoints, `k` equal to the flows.
    pub fn initial_iterate(&self, r0: &[f64]) -> Result<Vec<f64>> {
        let lay = self.layout();
        let st = self.forward(r0, 1.0)?;
        let mut x = vec![0.0; lay.n];
        x[lay.v()].copy_from_slice(&st.velocity);
        x[lay.p()].copy_from_slice(&st.pressure);
        x[lay.lambda()].copy_from_slice(&st.multipliers);
        x[lay.r()].copy_from_slice(r0);
        let flows = self.ops.outlet_flows(&st.velocity);
        x[lay.k()].copy_from_slice(&flows);
        if lay.inlet {
            x[lay.u_in().start] = 1.0;
            x[lay.k_in().start] = dot(&self.ops.inlet_flux, &st.velocity);
        }
        Ok(x)
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    if a != 0.0 {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += a * xi;
        }
    }
}

/// Offsets of the unknown blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub nv: usize,
    pub np: usize,
    pub m: usize,
    pub ni: usize,
    pub inlet: bool,
    pub n: usize,
}

impl Layout {
    fn new(nv: usize, np: usize, m: usize, ni: usize, inlet: bool) -> Self {
        let extra = usize::from(inlet);
        Self {
            nv,
            np,
            m,
            ni,
            inlet,
            n: 2 * (nv + np) + 4 * m + 2 * ni + 2 * extra,
        }
    }

    fn at(&self, start: usize, len: usize) -> std::ops::Range<usize> {
        start..start + len
    }

    pub fn v(&self) -> std::ops::Range<usize> {
        self.at(0, self.nv)
    }
    pub fn p(&self) -> std::ops::Range<usize> {
        self.at(self.nv, self.np)
    }
    pub fn lambda(&self) -> std::ops::Range<usize> {
        self.at(self.nv + self.np, self.m)
    }
    pub fn mu(&self) -> std::ops::Range<usize> {
        self.at(self.lambda().end, self.ni)
    }
    pub fn r(&self) -> std::ops::Range<usize> {
        self.at(self.mu().end, self.m)
    }
    pub fn u_in(&self) -> std::ops::Range<usize> {
        self.at(self.r().end, usize::from(self.inlet))
    }
    pub fn z(&self) -> std::ops::Range<usize> {
        self.at(self.u_in().end, self.nv)
    }
    pub fn b(&self) -> std::ops::Range<usize> {
        self.at(self.z().end, self.np)
    }
    pub fn t(&self) -> std::ops::Range<usize> {
        self.at(self.b().end, self.m)
    }
    pub fn sigma(&self) -> std::ops::Range<usize> {
        self.at(self.t().end, self.ni)
    }
    pub fn k(&self) -> std::ops::Range<usize> {
        self.at(self.sigma().end, self.m)
    }
    pub fn k_in(&self) -> std::ops::Range<usize> {
        self.at(self.k().end, usize::from(self.inlet))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    pub mode: ControlMode,
    pub controls: ControlVector,
    /// mesh outlet order
    pub outlet_tags: Vec<i64>,
    pub state: StokesState,
    pub adjoint: AdjointState,
    pub cost: CostTerms,
    /// scaled residual norm before each Newton step and at the end
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub wall_time_s: f64,
}

/// Builds the problem on `mesh` and runs Newton on the optimality system.
pub fn solve_ocp(mesh: &Mesh, props: FluidProps, ms: &MeasurementSet, config: &OcpConfig) -> Result<CalibrationResult> {
    config.validate()?;
    let problem = OcpProblem::with_outlet_terms(DiscreteSpaces::new(mesh.clone()), props, ms, config.mode, config.outlet_terms)?;
    solve_problem(&problem, ms, config)
}

pub fn solve_problem(problem: &OcpProblem, ms: &MeasurementSet, config: &OcpConfig) -> Result<CalibrationResult> {
    let start = Instant::now();
    let lay = problem.layout();
    let r0 = problem.initial_resistances(ms, config)?;
    let mut x = problem.initial_iterate(&r0)?;
    let col_scale = problem.unknown_scales(&lay);
    let tk = config.tikhonov;

    let jac = problem.jacobian(&x, &r0, tk);
    let row_scale: Vec<f64> = (0..lay.n)
        .map(|r| {
            let m = jac.row(r).map(|(c, v)| (v * col_scale[c]).abs()).fold(0.0, f64::max);
            if m > 0.0 {
                1.0 / m
            } else {
                1.0
            }
        })
        .collect();
    let scaled_norm = |f: &[f64]| norm(&f.iter().zip(&row_scale).map(|(a, s)| a * s).collect::<Vec<_>>());
    let mut fact = Factorization::new(jac, Some(row_scale.clone()), Some(col_scale))?;

    let mut f = problem.residual(&x, &r0, tk);
    let mut res = scaled_norm(&f);
    let res0 = res.max(f64::MIN_POSITIVE);
    let mut trace = vec![res];
    let mut iterations = 0;
    let converged = |res: f64| res <= config.abs_tol || res / res0 <= config.rel_tol;
    while !converged(res) && iterations < config.max_iter {
        if iterations > 0 {
            fact.refactor(problem.jacobian(&x, &r0, tk))?;
        }
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let dx = fact.solve(&neg)?;
        let mut step = 1.0;
        let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        for _ in 0..=config.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + step * d).collect();
            let ft = problem.residual(&trial, &r0, tk);
            let rt = scaled_norm(&ft);
            let accept = rt <= (1.0 - 1e-4 * step) * res;
            if best.as_ref().is_none_or(|b| rt < b.0) {
                best = Some((rt, trial, ft));
            }
            if accept {
                break;
            }
            step *= 0.5;
        }
        let (rt, trial, ft) = best.expect("at least one trial step");
        if rt > res {
            log::warn!("line search found no decrease at iteration {iterations} ({res:.3e} -> {rt:.3e})");
        }
        x = trial;
        f = ft;
        res = rt;
        iterations += 1;
        trace.push(res);
        log::debug!("newton {iterations}: scaled residual {res:.3e}, step {step}");
    }
    let ok = converged(res);
    if !ok {
        log::warn!("optimality system not converged after {iterations} iterations, residual {res:.3e}");
    }

    let counts = problem.spaces.dof_counts();
    let state = StokesState {
        velocity: x[lay.v()].to_vec(),
        pressure: x[lay.p()].to_vec(),
        multipliers: x[lay.lambda()].to_vec(),
    };
    debug_assert_eq!(state.velocity.len(), counts.velocity);
    let r = x[lay.r()].to_vec();
    let mut cost = problem.cost(&state);
    if tk > 0.0 {
        cost.regularization = 0.5 * tk * r.iter().zip(&r0).map(|(a, b)| ((a - b) / b).powi(2)).sum::<f64>();
        cost.total += cost.regularization;
    }
    Ok(CalibrationResult {
        mode: problem.mode,
        controls: ControlVector {
            u_in: if lay.inlet { x[lay.u_in().start] } else { 1.0 },
            r,
        },
        outlet_tags: problem.spaces.mesh().tag_map().outlets.clone(),
        adjoint: AdjointState {
            z: x[lay.z()].to_vec(),
            b: x[lay.b()].to_vec(),
            t: x[lay.t()].to_vec(),
            k: x[lay.k()].to_vec(),
            inlet_traction: x[lay.mu()].to_vec(),
            inlet_adjoint: x[lay.sigma()].to_vec(),
            k_in: lay.inlet.then(|| x[lay.k_in().start]),
        },
        state,
        cost,
        trace,
        iterations,
        converged: ok,
        final_residual: res,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Cost of a state against a measurement set.
pub fn evaluate_cost(spaces: &DiscreteSpaces, state: &StokesState, ms: &MeasurementSet, mode: ControlMode) -> Result<CostTerms> {
    let problem = OcpProblem::new(spaces.clone(), FluidProps::default(), ms, mode)?;
    Ok(problem.cost(state))
}

/// Simulated quantities next to the measurements, in the layout of the
/// comparison tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub method: String,
    #[serde(rename = "R")]
    pub r: BTreeMap<String, f64>,
    pub u_in: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub terms: BTreeMap<String, f64>,
    pub newton_trace: Vec<f64>,
    pub flows: BTreeMap<String, f64>,
    pub inlet_flow: f64,
    /// dyn/cm² over the pressure patch
    pub mean_pressure: f64,
    pub errors_vs_measurements_percent: BTreeMap<String, f64>,
    pub converged: bool,
    pub iterations: usize,
    pub wall_time_s: f64,
}

impl CalibrationSummary {
    /// Forward-evaluates controls and compares against the measurements.
    pub fn from_controls(
        method: &str,
        problem: &OcpProblem,
        ms: &MeasurementSet,
        state: &StokesState,
        controls: &ControlVector,
    ) -> Result<Self> {
        let tags = problem.spaces.mesh().tag_map().outlets.clone();
        let flows = problem.ops.outlet_flows(&state.velocity);
        let inflow = problem.ops.inlet_inflow(&state.velocity);
        let pm = crate::fem::boundary_functionals(&problem.spaces, state, ms.pressure_patch_tag)?.mean_pressure;
        let cost = problem.cost(state);
        let mut terms = BTreeMap::new();
        terms.insert("pressure".to_string(), cost.pressure);
        for (tag, c) in tags.iter().zip(&cost.outlets) {
            terms.insert(format!("outlet_{tag}"), *c);
        }
        if let Some(c) = cost.inlet {
            terms.insert("inlet".to_string(), c);
        }
        let pct = |sim: f64, meas: f64| 100.0 * (sim - meas) / meas;
        let mut errors = BTreeMap::new();
        errors.insert("pressure".to_string(), pct(pm, ms.target_pressure));
        errors.insert("inlet".to_string(), pct(inflow, ms.inlet_flow));
        for (i, tag) in tags.iter().enumerate() {
            errors.insert(tag.to_string(), pct(flows[i], problem.q[i]));
        }
        Ok(Self {
            method: method.to_string(),
            r: tags.iter().zip(&controls.r).map(|(t, r)| (t.to_string(), *r)).collect(),
            u_in: controls.u_in,
            j: cost.total,
            terms,
            newton_trace: Vec::new(),
            flows: tags.iter().zip(&flows).map(|(t, q)| (t.to_string(), *q)).collect(),
            inlet_flow: inflow,
            mean_pressure: pm,
            errors_vs_measurements_percent: errors,
            converged: true,
            iterations: 0,
            wall_time_s: 0.0,
        })
    }

    pub fn from_result(problem: &OcpProblem, ms: &MeasurementSet, res: &CalibrationResult) -> Result<Self> {
        let method = match res.mode {
            ControlMode::Outlets => "ocp",
            ControlMode::OutletsAndInlet => "ocp-inlet",
        };
        let mut s = Self::from_controls(method, problem, ms, &res.state, &res.controls)?;
        s.newton_trace = res.trace.clone();
        s.converged = res.converged;
        s.iterations = res.iterations;
        s.wall_time_s = res.wall_time_s;
        s.j = res.cost.total;
        Ok(s)
    }
}

/// Plug inlet data scaled by `u_in`, for post-processing solves.
pub fn inlet_data(ms: &MeasurementSet, u_in: f64) -> InletData {
    InletData::Plug(u_in * ms.inlet_flow)
}
