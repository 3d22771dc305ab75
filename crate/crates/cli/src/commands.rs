use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use outflow_core::baselines::{murray_resistances, ohm_optimized, ohm_resistances, OhmFit};
use outflow_core::fem::{
    assemble_forward, boundary_functionals, field_csv, solve_forward, summary_json, DiscreteSpaces, InletData,
    OutletSummary, StokesOperators, StokesState,
};
use outflow_core::lumped::{
    branch_csv, cycle_averages, simulate_network, split_rcr, CycleMeans, InletWaveform, WindkesselParams,
    TOTAL_CAPACITANCE,
};
use outflow_core::measurements::{load_measurements, net_flow_report, MeasurementSet, NetFlowReport};
use outflow_core::mesh::{generate, parse_mesh, validate_mesh, write_msh_string, Mesh, TagMap};
use outflow_core::ocp::{solve_problem, CalibrationSummary, ControlMode, ControlVector, OcpProblem};
use outflow_core::transient::{
    indicators_csv, outlet_waveform_csv, solve_unsteady, tawss_osi, wall_shear_series, FlowModel,
    TransientCycleMeans,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

use crate::config::{Method, RunConfig, Source};
use crate::{report as rep, CliError, MeshKind};

pub struct Context {
    pub cfg: RunConfig,
    /// paths relative to the output directory, in write order
    pub outputs: Vec<String>,
    pub timings: BTreeMap<String, f64>,
    /// inputs that are not part of the config, e.g. report arguments
    pub extra_inputs: Vec<PathBuf>,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Self {
        Self {
            cfg,
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            extra_inputs: Vec::new(),
        }
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.cfg.out.join(name);
        let io = |e: std::io::Error| CliError::validation(format!("cannot write {}: {e}", path.display()));
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        std::fs::write(&path, contents).map_err(io)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Solver(e.to_string()))?;
        self.write(name, &text)
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let t = Instant::now();
        let out = f(self);
        self.timings.insert(stage.to_string(), t.elapsed().as_secs_f64());
        out
    }

    fn mesh(&self) -> Result<Mesh, CliError> {
        let path = self.cfg.mesh.as_ref().ok_or_else(|| CliError::validation("--mesh is required"))?;
        let tags = self.cfg.tag_path().ok_or_else(|| {
            CliError::validation(format!("--tags is required (no {}_tags.json next to the mesh)", stem(path)))
        })?;
        let text = std::fs::read_to_string(&tags)
            .map_err(|e| CliError::validation(format!("cannot read {}: {e}", tags.display())))?;
        Ok(parse_mesh(path, &TagMap::from_json_str(&text)?)?)
    }

    fn measurements(&self) -> Result<Option<MeasurementSet>, CliError> {
        match &self.cfg.measurements {
            Some(p) => Ok(Some(load_measurements(p)?)),
            None => Ok(None),
        }
    }

    fn require_measurements(&self) -> Result<MeasurementSet, CliError> {
        self.measurements()?.ok_or_else(|| CliError::validation("--measurements is required"))
    }

    /// Resistances in `tags` order and a label naming where they came from.
    fn resistances(&self, tags: &[i64]) -> Result<(Vec<f64>, String), CliError> {
        if let Some(r) = &self.cfg.resistances {
            if r.len() != tags.len() {
                return Err(CliError::validation(format!(
                    "{} resistances given for {} outlets {tags:?}",
                    r.len(),
                    tags.len()
                )));
            }
            return Ok((r.clone(), "given".into()));
        }
        let Some(path) = &self.cfg.resistances_from else {
            return Err(CliError::validation("--R or --from-result is required"));
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let e = rep::build(&[(path.display().to_string(), v)])?.entries.remove(0);
        let r = tags
            .iter()
            .map(|t| {
                e.resistances
                    .get(t)
                    .copied()
                    .ok_or_else(|| CliError::validation(format!("{} has no resistance for outlet {t}", path.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((r, e.method))
    }

    fn inlet_flow(&self, ms: Option<&MeasurementSet>) -> Result<f64, CliError> {
        self.cfg
            .inlet_flow
            .or(ms.map(|m| m.inlet_flow))
            .ok_or_else(|| CliError::validation("--inlet-flow or --measurements is required"))
    }

    fn waveform(&self, ms: Option<&MeasurementSet>) -> Result<InletWaveform, CliError> {
        match &self.cfg.waveform {
            Some(p) => Ok(InletWaveform::load(p, None)?),
            None => Ok(InletWaveform::template(self.cfg.period, self.inlet_flow(ms)?)?),
        }
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn pct(sim: f64, meas: f64) -> f64 {
    100.0 * (sim - meas) / meas
}

/// Percent deviations of outlet flows, inlet flow and pressure, keyed like
/// the calibration summaries.
fn deviations(ms: &MeasurementSet, tags: &[i64], flows: &[f64], inlet: f64, pressure: Option<f64>) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    if let Some(p) = pressure {
        out.insert("pressure".to_string(), pct(p, ms.target_pressure));
    }
    out.insert("inlet".to_string(), pct(inlet, ms.inlet_flow));
    for o in &ms.outlets {
        if let Some(i) = tags.iter().position(|t| *t == o.tag) {
            out.insert(o.tag.to_string(), pct(flows[i], o.flow));
        }
    }
    out
}

#[derive(Serialize)]
struct CalibrateOutput {
    method: &'static str,
    outlet_tags: Vec<i64>,
    #[serde(rename = "R")]
    r: Vec<f64>,
    u_in: f64,
    /// cost of the simulated state, when a mesh was given
    #[serde(rename = "J")]
    j: Option<f64>,
    converged: bool,
    net_flow: NetFlowReport,
    errors_vs_measurements_percent: Option<BTreeMap<String, f64>>,
    simulation: Option<CalibrationSummary>,
    ohm_fit: Option<OhmFit>,
}

pub fn calibrate(ctx: &mut Context) -> Result<(), CliError> {
    let ms = ctx.require_measurements()?;
    let method = ctx.cfg.method;
    let mesh = match (&ctx.cfg.mesh, method) {
        (Some(_), _) => Some(ctx.mesh()?),
        (None, Method::Ohm | Method::OhmOpt) => None,
        (None, _) => return Err(CliError::validation(format!("--mesh is required for --method {}", method.name()))),
    };
    let tags = match &mesh {
        Some(m) => {
            ms.check_outlet_tags(&m.tag_map().outlets)?;
            m.tag_map().outlets.clone()
        }
        None => ms.outlet_tags(),
    };
    let flow_of = |t: &i64| ms.outlets.iter().find(|o| o.tag == *t).map(|o| o.flow).expect("tags checked");
    let flows: Vec<f64> = tags.iter().map(flow_of).collect();
    let cfg = ctx.cfg.clone();
    let problem = |mesh: &Mesh, mode| {
        OcpProblem::with_outlet_terms(DiscreteSpaces::new(mesh.clone()), cfg.fluid, &ms, mode, cfg.ocp.outlet_terms)
    };

    let mut ohm_fit = None;
    let (controls, simulation, state, spaces) = match method {
        Method::Ocp | Method::OcpInlet => {
            let mesh = mesh.as_ref().expect("mesh checked");
            let pb = problem(mesh, cfg.ocp.mode)?;
            let res = ctx.time("solve", |_| Ok(solve_problem(&pb, &ms, &cfg.ocp)?))?;
            let summary = CalibrationSummary::from_result(&pb, &ms, &res)?;
            (res.controls.clone(), Some(summary), Some(res.state), Some(pb.spaces().clone()))
        }
        _ => {
            let r = ctx.time("solve", |_| {
                Ok(match method {
                    Method::Ohm => ohm_resistances(ms.target_pressure, &flows)?,
                    Method::OhmOpt => {
                        let fit = ohm_optimized(&ms, &cfg.simplex)?;
                        let by_tag: BTreeMap<i64, f64> = ms.outlet_tags().into_iter().zip(fit.resistances.clone()).collect();
                        ohm_fit = Some(fit);
                        tags.iter().map(|t| by_tag[t]).collect()
                    }
                    Method::Murray => {
                        let m = mesh.as_ref().expect("mesh checked");
                        murray_resistances(&m.outlet_areas(), ms.target_pressure, ms.inlet_flow, cfg.murray_exponent)?
                    }
                    Method::Ocp | Method::OcpInlet => unreachable!(),
                })
            })?;
            let controls = ControlVector { r, u_in: 1.0 };
            match &mesh {
                Some(m) => {
                    let pb = problem(m, ControlMode::Outlets)?;
                    let state = ctx.time("evaluate", |_| Ok(pb.forward(&controls.r, 1.0)?))?;
                    let s = CalibrationSummary::from_controls(method.name(), &pb, &ms, &state, &controls)?;
                    (controls, Some(s), Some(state), Some(pb.spaces().clone()))
                }
                None => (controls, None, None, None),
            }
        }
    };

    let converged = simulation.as_ref().is_none_or(|s| s.converged);
    let out = CalibrateOutput {
        method: method.name(),
        outlet_tags: tags,
        r: controls.r.clone(),
        u_in: controls.u_in,
        j: simulation.as_ref().map(|s| s.j),
        converged,
        net_flow: net_flow_report(&ms),
        errors_vs_measurements_percent: simulation.as_ref().map(|s| s.errors_vs_measurements_percent.clone()),
        simulation,
        ohm_fit,
    };
    ctx.write_json("result.json", &out)?;
    if let (Some(state), Some(spaces)) = (state, spaces) {
        ctx.write("field.csv", &field_csv(&spaces, &state))?;
    }
    if converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "optimality system not converged; results written to {}",
            ctx.cfg.out.display()
        )))
    }
}

#[derive(Serialize)]
struct ForwardOutput {
    method: String,
    outlet_tags: Vec<i64>,
    #[serde(rename = "R")]
    r: Vec<f64>,
    inlet_flow: f64,
    outlets: Vec<OutletSummary>,
    /// |ΣQ_out − Q_in| / Q_in
    mass_imbalance: f64,
    errors_vs_measurements_percent: Option<BTreeMap<String, f64>>,
}

fn steady(ctx: &mut Context, mesh: &Mesh, r: &[f64], q: f64) -> Result<(DiscreteSpaces, StokesOperators, StokesState), CliError> {
    let cfg = ctx.cfg.clone();
    ctx.time("solve", |_| {
        let spaces = DiscreteSpaces::new(mesh.clone());
        let ops = StokesOperators::with_outlet_terms(&spaces, cfg.fluid, cfg.ocp.outlet_terms)?;
        let state = solve_forward(&assemble_forward(&spaces, &ops, r, &InletData::Plug(q))?)?;
        Ok((spaces, ops, state))
    })
}

pub fn forward(ctx: &mut Context) -> Result<(), CliError> {
    let mesh = ctx.mesh()?;
    let tags = mesh.tag_map().outlets.clone();
    let (r, label) = ctx.resistances(&tags)?;
    let ms = ctx.measurements()?;
    let q = ctx.inlet_flow(ms.as_ref())?;
    let (spaces, ops, state) = steady(ctx, &mesh, &r, q)?;
    let flows = ops.outlet_flows(&state.velocity);
    let inflow = ops.inlet_inflow(&state.velocity);
    let errors = match &ms {
        Some(ms) => {
            let p = boundary_functionals(&spaces, &state, ms.pressure_patch_tag)?.mean_pressure;
            Some(deviations(ms, &tags, &flows, inflow, Some(p)))
        }
        None => None,
    };
    let out = ForwardOutput {
        method: label,
        outlet_tags: tags,
        r,
        inlet_flow: inflow,
        outlets: summary_json(&spaces, &ops, &state)?,
        mass_imbalance: (flows.iter().sum::<f64>() - inflow).abs() / inflow,
        errors_vs_measurements_percent: errors,
    };
    ctx.write_json("result.json", &out)?;
    ctx.write("field.csv", &field_csv(&spaces, &state))
}

#[derive(Serialize)]
struct IndicatorSummary {
    wall_nodes: usize,
    tawss_mean: f64,
    tawss_max: f64,
    osi_mean: f64,
    osi_max: f64,
}

#[derive(Serialize)]
struct TransientOutput {
    method: String,
    model: FlowModel,
    dt: f64,
    period: f64,
    steps_per_cycle: usize,
    n_cycles: usize,
    outlet_tags: Vec<i64>,
    #[serde(rename = "R")]
    r: Vec<f64>,
    windkessels: Vec<WindkesselParams>,
    cycle_means: Vec<TransientCycleMeans>,
    last_cycle: TransientCycleMeans,
    max_mass_imbalance: f64,
    max_courant: f64,
    max_cell_reynolds: f64,
    indicators: IndicatorSummary,
    wall_time_s: f64,
    errors_vs_measurements_percent: Option<BTreeMap<String, f64>>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len().max(1) as f64
}

pub fn transient(ctx: &mut Context) -> Result<(), CliError> {
    let mesh = ctx.mesh()?;
    let tm = mesh.tag_map().clone();
    let (r, label) = ctx.resistances(&tm.outlets)?;
    let ms = ctx.measurements()?;
    let wave = ctx.waveform(ms.as_ref())?;
    let wk = split_rcr(&r, &mesh.outlet_areas(), TOTAL_CAPACITANCE)?;
    let cfg = ctx.cfg.clone();
    let spaces = DiscreteSpaces::new(mesh.clone());
    let res = ctx.time("solve", |_| Ok(solve_unsteady(&spaces, cfg.fluid, &wk, &wave, &cfg.transient)?))?;
    let ind = ctx.time("indicators", |_| Ok(tawss_osi(&wall_shear_series(&res, None)?, wave.period())?))?;

    for (i, tag) in tm.outlets.iter().enumerate() {
        ctx.write(&format!("waveforms/outlet_{tag}.csv"), &outlet_waveform_csv(&res, i))?;
    }
    let mut inlet = String::from("t_s,Q_cm3_s,p_dyn_cm2\n");
    for k in 0..res.time.len() {
        writeln!(inlet, "{},{},{}", res.time[k], res.inlet_flow[k], res.inlet_pressure[k]).unwrap();
    }
    ctx.write("waveforms/inlet.csv", &inlet)?;
    ctx.write("indicators.csv", &indicators_csv(&ind, mesh.dim()))?;

    let last = res.last_cycle().clone();
    let errors = ms.as_ref().map(|ms| {
        let p = if ms.pressure_patch_tag == tm.inlet {
            Some(last.inlet_pressure)
        } else {
            tm.outlet_index(ms.pressure_patch_tag).map(|i| last.outlet_pressure[i])
        };
        deviations(ms, &tm.outlets, &last.outlet_flow, last.inlet_flow, p)
    });
    let out = TransientOutput {
        method: label,
        model: res.model,
        dt: res.dt,
        period: res.period,
        steps_per_cycle: res.steps_per_cycle,
        n_cycles: res.n_cycles,
        outlet_tags: tm.outlets.clone(),
        r,
        windkessels: wk,
        cycle_means: res.cycle_means.clone(),
        last_cycle: last,
        max_mass_imbalance: res.max_mass_imbalance,
        max_courant: res.max_courant,
        max_cell_reynolds: res.max_cell_reynolds,
        indicators: IndicatorSummary {
            wall_nodes: ind.nodes.len(),
            tawss_mean: mean(&ind.tawss),
            tawss_max: ind.tawss.iter().copied().fold(0.0, f64::max),
            osi_mean: mean(&ind.osi),
            osi_max: ind.osi.iter().copied().fold(0.0, f64::max),
        },
        wall_time_s: res.wall_time_s,
        errors_vs_measurements_percent: errors,
    };
    ctx.write_json("result.json", &out)
}

#[derive(Serialize)]
struct LumpedOutput {
    method: String,
    outlet_tags: Vec<i64>,
    #[serde(rename = "R")]
    r: Vec<f64>,
    windkessels: Vec<WindkesselParams>,
    dt: f64,
    period: f64,
    n_cycles: usize,
    last_cycle: CycleMeans,
    errors_vs_measurements_percent: Option<BTreeMap<String, f64>>,
}

fn run_lumped(ctx: &mut Context, mesh: &Mesh, r: &[f64], wave: &InletWaveform) -> Result<(Vec<WindkesselParams>, outflow_core::lumped::NetworkResult, CycleMeans), CliError> {
    let wk = split_rcr(r, &mesh.outlet_areas(), TOTAL_CAPACITANCE)?;
    let (n, dt) = (ctx.cfg.transient.n_cycles, ctx.cfg.transient.dt);
    let net = ctx.time("solve", |_| Ok(simulate_network(&wk, wave, n, dt)?))?;
    let means = cycle_averages(&net, None)?;
    Ok((wk, net, means))
}

pub fn lumped(ctx: &mut Context) -> Result<(), CliError> {
    let mesh = ctx.mesh()?;
    let tags = mesh.tag_map().outlets.clone();
    let (r, label) = ctx.resistances(&tags)?;
    let ms = ctx.measurements()?;
    let wave = ctx.waveform(ms.as_ref())?;
    let (wk, net, means) = run_lumped(ctx, &mesh, &r, &wave)?;
    for (i, tag) in tags.iter().enumerate() {
        ctx.write(&format!("waveforms/outlet_{tag}.csv"), &branch_csv(&net, i))?;
    }
    let errors = ms.as_ref().map(|ms| deviations(ms, &tags, &means.flows, means.inlet, Some(means.pressure)));
    let out = LumpedOutput {
        method: label,
        outlet_tags: tags,
        r,
        windkessels: wk,
        dt: net.dt,
        period: net.period,
        n_cycles: ctx.cfg.transient.n_cycles,
        last_cycle: means,
        errors_vs_measurements_percent: errors,
    };
    ctx.write_json("result.json", &out)
}

#[derive(Serialize)]
struct SynthesizeOutput {
    method: &'static str,
    source: Source,
    outlet_tags: Vec<i64>,
    #[serde(rename = "R")]
    r: Vec<f64>,
    noise: f64,
    seed: u64,
    measurements: MeasurementSet,
}

pub fn synthesize(ctx: &mut Context) -> Result<(), CliError> {
    let mesh = ctx.mesh()?;
    let tm = mesh.tag_map().clone();
    let (r, _) = ctx.resistances(&tm.outlets)?;
    let q = ctx.inlet_flow(None)?;
    let patch = ctx.cfg.synthesize.pressure_tag.unwrap_or(tm.inlet);
    if tm.role(patch).is_none() {
        return Err(CliError::validation(format!("pressure tag {patch} is not a boundary tag of the mesh")));
    }
    let (q_in, flows, p) = match ctx.cfg.synthesize.from {
        Source::Forward => {
            let (spaces, ops, state) = steady(ctx, &mesh, &r, q)?;
            let p = boundary_functionals(&spaces, &state, patch)?.mean_pressure;
            (q, ops.outlet_flows(&state.velocity), p)
        }
        Source::Lumped => {
            let wave = ctx.waveform(None)?;
            let (_, _, m) = run_lumped(ctx, &mesh, &r, &wave)?;
            (m.inlet, m.flows, m.pressure)
        }
    };
    let noise = ctx.cfg.synthesize.noise;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let mut jitter = |x: f64| if noise > 0.0 { x * (1.0 + noise * rng.gen_range(-1.0..=1.0)) } else { x };
    let outlets: Vec<(i64, f64)> = tm.outlets.iter().zip(&flows).map(|(t, f)| (*t, jitter(*f))).collect();
    let q_in = jitter(q_in);
    let mut ms = MeasurementSet::new(tm.inlet, q_in, &outlets, jitter(p))?;
    ms.pressure_patch_tag = patch;
    ctx.write("measurements.json", &ms.to_json_string()?)?;
    let out = SynthesizeOutput {
        method: "synthetic",
        source: ctx.cfg.synthesize.from,
        outlet_tags: tm.outlets.clone(),
        r,
        noise,
        seed: ctx.cfg.seed,
        measurements: ms,
    };
    ctx.write_json("result.json", &out)
}

pub fn report(ctx: &mut Context, inputs: &[PathBuf]) -> Result<(), CliError> {
    let mut parsed = Vec::new();
    for p in inputs {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::validation(format!("cannot read {}: {e}", p.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?;
        parsed.push((p.display().to_string(), v));
    }
    ctx.extra_inputs = inputs.to_vec();
    let r = rep::build(&parsed)?;
    crate::emit(&r.comparison_csv);
    ctx.write("comparison.csv", &r.comparison_csv)?;
    ctx.write("histogram.csv", &r.histogram_csv)
}

pub fn mesh_info(ctx: &mut Context) -> Result<(), CliError> {
    let mesh = ctx.mesh()?;
    let diag = validate_mesh(&mesh);
    crate::emit(&(serde_json::to_string_pretty(&diag).expect("diagnostics serialize") + "\n"));
    ctx.write_json("result.json", &diag)?;
    if diag.defects.is_empty() {
        Ok(())
    } else {
        Err(CliError::validation(format!("mesh has defects: {}", diag.defects.join("; "))))
    }
}

pub fn mesh_gen(ctx: &mut Context, kind: MeshKind, n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::validation("--n must be at least 1"));
    }
    let mesh = match kind {
        MeshKind::Arch => generate::arch(n)?,
        MeshKind::Bifurcation => generate::bifurcation(&generate::BifurcationParams {
            h: 0.25 / n as f64,
            ..Default::default()
        })?,
        MeshKind::Channel => generate::channel(4.0, 1.0, 8 * n, 2 * n)?,
    };
    ctx.write("mesh.msh", &write_msh_string(&mesh))?;
    ctx.write_json("mesh_tags.json", mesh.tag_map())
}
