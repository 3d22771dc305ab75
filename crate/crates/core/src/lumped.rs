//! Parallel RCR network driven by an inlet flow waveform.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Share of each outlet resistance assigned to the proximal resistor.
pub const PROXIMAL_FRACTION: f64 = 0.09;
/// Total compliance split among the outlets, cm⁵/dyn.
pub const TOTAL_CAPACITANCE: f64 = 0.001;

/// Three-element Windkessel of one outlet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindkesselParams {
    pub proximal: f64,
    pub distal: f64,
    pub capacitance: f64,
    pub distal_pressure: f64,
}

impl WindkesselParams {
    pub fn total_resistance(&self) -> f64 {
        self.proximal + self.distal
    }

    pub fn validate(&self, i: usize) -> Result<()> {
        let field = |name: &str| format!("windkessel[{i}].{name}");
        if !(self.proximal > 0.0 && self.proximal.is_finite()) {
            return Err(Error::validation(field("proximal"), format!("must be positive, got {}", self.proximal)));
        }
        if !(self.distal > 0.0 && self.distal.is_finite()) {
            return Err(Error::validation(field("distal"), format!("must be positive, got {}", self.distal)));
        }
        if !(self.capacitance > 0.0 && self.capacitance.is_finite()) {
            return Err(Error::validation(field("capacitance"), format!("must be positive, got {}", self.capacitance)));
        }
        if !self.distal_pressure.is_finite() {
            return Err(Error::validation(field("distal_pressure"), "must be finite"));
        }
        Ok(())
    }
}

/// Splits each resistance 9/91 and distributes `c_total` by outlet area.
pub fn split_rcr(r: &[f64], areas: &[f64], c_total: f64) -> Result<Vec<WindkesselParams>> {
    if r.len() != areas.len() || r.is_empty() {
        return Err(Error::validation(
            "R",
            format!("{} resistances for {} outlet areas", r.len(), areas.len()),
        ));
    }
    if !(c_total > 0.0 && c_total.is_finite()) {
        return Err(Error::validation("capacitance", format!("must be positive, got {c_total}")));
    }
    let a_sum: f64 = areas.iter().sum();
    let out: Vec<WindkesselParams> = r
        .iter()
        .zip(areas)
        .map(|(&ri, &ai)| WindkesselParams {
            proximal: PROXIMAL_FRACTION * ri,
            distal: ri - PROXIMAL_FRACTION * ri,
            capacitance: c_total * ai / a_sum,
            distal_pressure: 0.0,
        })
        .collect();
    for (i, w) in out.iter().enumerate() {
        w.validate(i)?;
    }
    Ok(out)
}

/// Periodic inlet flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InletWaveform {
    /// half-sine over the first `systole` fraction of the period, zero after
    HalfSine { period: f64, amplitude: f64, systole: f64 },
    Constant { period: f64, flow: f64 },
    /// periodic linear interpolation of `(t, Q)` samples in `[0, period)`
    Samples { period: f64, samples: Vec<(f64, f64)> },
}

/// Fraction of the period taken by the template's systolic half-sine.
pub const TEMPLATE_SYSTOLE: f64 = 0.35;

impl InletWaveform {
    /// Built-in template with the given mean flow.
    pub fn template(period: f64, mean: f64) -> Result<Self> {
        let w = InletWaveform::HalfSine {
            period,
            amplitude: mean * PI / (2.0 * TEMPLATE_SYSTOLE),
            systole: TEMPLATE_SYSTOLE,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn constant(period: f64, flow: f64) -> Result<Self> {
        let w = InletWaveform::Constant { period, flow };
        w.validate()?;
        Ok(w)
    }

    pub fn from_samples(period: f64, mut samples: Vec<(f64, f64)>) -> Result<Self> {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let w = InletWaveform::Samples { period, samples };
        w.validate()?;
        Ok(w)
    }

    pub fn period(&self) -> f64 {
        match self {
            InletWaveform::HalfSine { period, .. }
            | InletWaveform::Constant { period, .. }
            | InletWaveform::Samples { period, .. } => *period,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.period();
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::validation("waveform.period", format!("must be positive, got {t}")));
        }
        match self {
            InletWaveform::HalfSine { amplitude, systole, .. } => {
                if !amplitude.is_finite() || !(*systole > 0.0 && *systole <= 1.0) {
                    return Err(Error::validation("waveform", "invalid half-sine parameters"));
                }
            }
            InletWaveform::Constant { flow, .. } => {
                if !flow.is_finite() {
                    return Err(Error::validation("waveform.flow", "must be finite"));
                }
            }
            InletWaveform::Samples { samples, .. } => {
                if samples.is_empty() {
                    return Err(Error::validation("waveform.samples", "no samples"));
                }
                for (i, &(ts, q)) in samples.iter().enumerate() {
                    if !(ts >= 0.0 && ts < t) || !q.is_finite() {
                        return Err(Error::validation(
                            format!("waveform.samples[{i}]"),
                            format!("sample ({ts}, {q}) outside [0, {t})"),
                        ));
                    }
                    if i > 0 && ts <= samples[i - 1].0 {
                        return Err(Error::validation(format!("waveform.samples[{i}]"), "duplicate sample time"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        let period = self.period();
        let s = t.rem_euclid(period);
        match self {
            InletWaveform::HalfSine { amplitude, systole, .. } => {
                let ts = systole * period;
                if s < ts {
                    amplitude * (PI * s / ts).sin()
                } else {
                    0.0
                }
            }
            InletWaveform::Constant { flow, .. } => *flow,
            InletWaveform::Samples { samples, .. } => {
                let n = samples.len();
                let k = samples.partition_point(|x| x.0 <= s);
                let (a, b) = match k {
                    0 => ((samples[n - 1].0 - period, samples[n - 1].1), samples[0]),
                    k if k == n => (samples[n - 1], (samples[0].0 + period, samples[0].1)),
                    k => (samples[k - 1], samples[k]),
                };
                if b.0 == a.0 {
                    return a.1;
                }
                a.1 + (b.1 - a.1) * (s - a.0) / (b.0 - a.0)
            }
        }
    }

    /// Exact mean over one period.
    pub fn mean(&self) -> f64 {
        match self {
            InletWaveform::HalfSine { amplitude, systole, .. } => amplitude * systole * 2.0 / PI,
            InletWaveform::Constant { flow, .. } => *flow,
            InletWaveform::Samples { period, samples } => {
                let n = samples.len();
                let mut area = 0.0;
                for k in 0..n {
                    let a = samples[k];
                    let b = if k + 1 < n { samples[k + 1] } else { (samples[0].0 + period, samples[0].1) };
                    area += 0.5 * (a.1 + b.1) * (b.0 - a.0);
                }
                area / period
            }
        }
    }

    /// Copy with every flow multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        match self.clone() {
            InletWaveform::HalfSine { period, amplitude, systole } => InletWaveform::HalfSine {
                period,
                amplitude: s * amplitude,
                systole,
            },
            InletWaveform::Constant { period, flow } => InletWaveform::Constant { period, flow: s * flow },
            InletWaveform::Samples { period, samples } => InletWaveform::Samples {
                period,
                samples: samples.into_iter().map(|(t, q)| (t, s * q)).collect(),
            },
        }
    }

    /// Parses `t_s,Q_cm3_s` rows. The period is the last time plus the
    /// spacing of the last two samples unless given.
    pub fn from_csv_str(text: &str, period: Option<f64>) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let l = line.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let mut it = l.split(',').map(str::trim);
            let (a, b) = (it.next().unwrap_or(""), it.next().unwrap_or(""));
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(t), Ok(q)) => samples.push((t, q)),
                _ if samples.is_empty() && i == 0 => continue, // header
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("expected `t_s,Q_cm3_s`, got `{l}`"),
                    })
                }
            }
        }
        let period = match period {
            Some(t) => t,
            None => match samples.len() {
                0 => return Err(Error::validation("waveform.samples", "no samples")),
                1 => return Err(Error::validation("waveform.period", "cannot infer period from one sample")),
                n => samples[n - 1].0 + (samples[n - 1].0 - samples[n - 2].0),
            },
        };
        Self::from_samples(period, samples)
    }

    pub fn load(path: impl AsRef<Path>, period: Option<f64>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, period)
    }
}

/// Number of steps of size `dt` in one period; `dt` must divide the period.
pub fn steps_per_period(period: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation("dt", format!("must be positive, got {dt}")));
    }
    let s = (period / dt).round();
    if s < 1.0 || ((s * dt) - period).abs() > 1e-9 * period {
        return Err(Error::validation("dt", format!("{dt} does not divide the period {period}")));
    }
    Ok(s as usize)
}

/// Backward-Euler coefficients of one RCR outlet: the outlet satisfies
/// `p = R_eff Q + p_offset` at the new time level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RcrStep {
    pub r_eff: f64,
    pub p_offset: f64,
}

pub fn rcr_step_coefficients(wk: &WindkesselParams, dt: f64, p_c_prev: f64) -> RcrStep {
    let rc = wk.distal * wk.capacitance;
    let a = 1.0 + dt / rc;
    RcrStep {
        r_eff: wk.proximal + (dt / wk.capacitance) / a,
        p_offset: (p_c_prev + dt * wk.distal_pressure / rc) / a,
    }
}

/// Capacitor pressure after a step that carried flow `q`.
pub fn rcr_update(wk: &WindkesselParams, dt: f64, p_c_prev: f64, q: f64) -> f64 {
    let rc = wk.distal * wk.capacitance;
    (p_c_prev + dt * q / wk.capacitance + dt * wk.distal_pressure / rc) / (1.0 + dt / rc)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacitorInit {
    Zero,
    /// state that repeats after one period of the discrete scheme
    #[default]
    Periodic,
    Given(Vec<f64>),
}

/// Time series of the network, sampled at `t_n = n·dt`, `n = 0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkResult {
    pub dt: f64,
    pub period: f64,
    pub steps_per_cycle: usize,
    pub time: Vec<f64>,
    pub inlet: Vec<f64>,
    pub pressure: Vec<f64>,
    /// per branch
    pub flows: Vec<Vec<f64>>,
    pub capacitor: Vec<Vec<f64>>,
}

fn validate_params(params: &[WindkesselParams]) -> Result<()> {
    if params.is_empty() {
        return Err(Error::validation("windkessel", "no branches"));
    }
    for (i, w) in params.iter().enumerate() {
        w.validate(i)?;
    }
    Ok(())
}

/// Node pressure and branch flows for inflow `q0` given the step coefficients.
fn split_flow(coef: &[RcrStep], q0: f64) -> (f64, Vec<f64>) {
    let g: f64 = coef.iter().map(|c| 1.0 / c.r_eff).sum();
    let s: f64 = coef.iter().map(|c| c.p_offset / c.r_eff).sum();
    let p = (q0 + s) / g;
    (p, coef.iter().map(|c| (p - c.p_offset) / c.r_eff).collect())
}

fn advance(params: &[WindkesselParams], pc: &mut [f64], dt: f64, q0: f64) -> (f64, Vec<f64>) {
    let coef: Vec<RcrStep> = params.iter().zip(pc.iter()).map(|(w, &p)| rcr_step_coefficients(w, dt, p)).collect();
    let (p, q) = split_flow(&coef, q0);
    for ((c, w), qi) in pc.iter_mut().zip(params).zip(&q) {
        *c = rcr_update(w, dt, *c, *qi);
    }
    (p, q)
}

/// Capacitor pressures at `t = 0` that the scheme maps to themselves after
/// one period. The period map is affine, so it is recovered from `m + 1`
/// single-period runs.
pub fn periodic_capacitor_state(params: &[WindkesselParams], inlet: &InletWaveform, dt: f64) -> Result<Vec<f64>> {
    validate_params(params)?;
    let steps = steps_per_period(inlet.period(), dt)?;
    let m = params.len();
    let run = |start: &[f64], forced: bool| -> Vec<f64> {
        let mut pc = start.to_vec();
        let quiet: Vec<WindkesselParams> = params
            .iter()
            .map(|w| WindkesselParams {
                distal_pressure: if forced { w.distal_pressure } else { 0.0 },
                ..*w
            })
            .collect();
        for n in 1..=steps {
            let q0 = if forced { inlet.value(n as f64 * dt) } else { 0.0 };
            advance(&quiet, &mut pc, dt, q0);
        }
        pc
    };
    let b = run(&vec![0.0; m], true);
    // columns of the homogeneous map
    let mut a = vec![vec![0.0; m]; m];
    for j in 0..m {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        let col = run(&e, false);
        for i in 0..m {
            a[i][j] = col[i];
        }
    }
    // (I − A) x = b
    let mut mat: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 } - a[i][j]).chain([b[i]]).collect())
        .collect();
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&x, &y| mat[x][col].abs().total_cmp(&mat[y][col].abs()))
            .expect("non-empty");
        if mat[piv][col].abs() < 1e-300 {
            return Err(Error::Factorization("period map has a unit eigenvalue".into()));
        }
        mat.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = mat[r][col] / mat[col][col];
                for c in col..=m {
                    mat[r][c] -= f * mat[col][c];
                }
            }
        }
    }
    Ok((0..m).map(|i| mat[i][m] / mat[i][i]).collect())
}

pub fn simulate_network(params: &[WindkesselParams], inlet: &InletWaveform, n_cycles: usize, dt: f64) -> Result<NetworkResult> {
    simulate_network_with(params, inlet, n_cycles, dt, &CapacitorInit::default())
}

pub fn simulate_network_with(
    params: &[WindkesselParams],
    inlet: &InletWaveform,
    n_cycles: usize,
    dt: f64,
    init: &CapacitorInit,
) -> Result<NetworkResult> {
    validate_params(params)?;
    inlet.validate()?;
    let period = inlet.period();
    if n_cycles == 0 {
        return Err(Error::validation("cycles", "must be at least 1"));
    }
    let steps = steps_per_period(period, dt)?;
    if steps < 100 {
        return Err(Error::validation("dt", format!("must be at most T/100 = {}", period / 100.0)));
    }
    let m = params.len();
    let mut pc = match init {
        CapacitorInit::Zero => vec![0.0; m],
        CapacitorInit::Periodic => periodic_capacitor_state(params, inlet, dt)?,
        CapacitorInit::Given(v) => {
            if v.len() != m {
                return Err(Error::validation("capacitor", format!("{} values for {m} branches", v.len())));
            }
            v.clone()
        }
    };
    let total = steps * n_cycles;
    let mut out = NetworkResult {
        dt,
        period,
        steps_per_cycle: steps,
        time: Vec::with_capacity(total + 1),
        inlet: Vec::with_capacity(total + 1),
        pressure: Vec::with_capacity(total + 1),
        flows: vec![Vec::with_capacity(total + 1); m],
        capacitor: vec![Vec::with_capacity(total + 1); m],
    };
    // t = 0: capacitors as given, flows from p = R_p Q + p_c
    let q0 = inlet.value(0.0);
    let coef: Vec<RcrStep> = params
        .iter()
        .zip(&pc)
        .map(|(w, &p)| RcrStep {
            r_eff: w.proximal,
            p_offset: p,
        })
        .collect();
    let (p, q) = split_flow(&coef, q0);
    out.time.push(0.0);
    out.inlet.push(q0);
    out.pressure.push(p);
    for i in 0..m {
        out.flows[i].push(q[i]);
        out.capacitor[i].push(pc[i]);
    }
    for n in 1..=total {
        let t = n as f64 * dt;
        let q0 = inlet.value(t);
        let (p, q) = advance(params, &mut pc, dt, q0);
        out.time.push(t);
        out.inlet.push(q0);
        out.pressure.push(p);
        for i in 0..m {
            out.flows[i].push(q[i]);
            out.capacitor[i].push(pc[i]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleMeans {
    pub cycle: usize,
    pub pressure: f64,
    pub inlet: f64,
    pub flows: Vec<f64>,
}

/// Trapezoidal mean of `x` over samples `start..=start+steps`.
pub fn trapezoid_mean(x: &[f64], start: usize, steps: usize) -> f64 {
    let s: f64 = x[start..start + steps].iter().zip(&x[start + 1..=start + steps]).map(|(a, b)| a + b).sum();
    0.5 * s / steps as f64
}

/// Means over one cycle; the last complete cycle when `cycle` is `None`.
pub fn cycle_averages(res: &NetworkResult, cycle: Option<usize>) -> Result<CycleMeans> {
    let s = res.steps_per_cycle;
    let complete = (res.time.len().saturating_sub(1)) / s.max(1);
    if complete == 0 {
        return Err(Error::validation("cycle", "no complete cycle in the series"));
    }
    let c = cycle.unwrap_or(complete - 1);
    if c >= complete {
        return Err(Error::validation("cycle", format!("cycle {c} incomplete; {complete} available")));
    }
    let start = c * s;
    Ok(CycleMeans {
        cycle: c,
        pressure: trapezoid_mean(&res.pressure, start, s),
        inlet: trapezoid_mean(&res.inlet, start, s),
        flows: res.flows.iter().map(|f| trapezoid_mean(f, start, s)).collect(),
    })
}

/// `t_s,p_dyn_cm2,Q_cm3_s` for one branch.
pub fn branch_csv(res: &NetworkResult, branch: usize) -> String {
    let mut s = String::from("t_s,p_dyn_cm2,Q_cm3_s\n");
    for n in 0..res.time.len() {
        let _ = writeln!(s, "{:.9e},{:.9e},{:.9e}", res.time[n], res.pressure[n], res.flows[branch][n]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arch_like() -> Vec<WindkesselParams> {
        split_rcr(&[7000.0, 21000.0, 16000.0, 1700.0], &[1.0, 0.6, 0.8, 2.0], TOTAL_CAPACITANCE).unwrap()
    }

    #[test]
    fn split_examples() {
        let w = split_rcr(&[1000.0], &[1.0], 0.001).unwrap()[0];
        assert_eq!((w.proximal, w.distal), (90.0, 910.0));
        let ws = split_rcr(&[1.0; 4], &[2.0; 4], 0.001).unwrap();
        assert!(ws.iter().all(|w| w.capacitance == 0.00025));
        let ws = arch_like();
        let c: f64 = ws.iter().map(|w| w.capacitance).sum();
        assert!((c - 0.001).abs() < 1e-18);
    }

    #[test]
    fn step_coefficient_limits() {
        let w = WindkesselParams {
            proximal: 90.0,
            distal: 910.0,
            capacitance: 1e-3,
            distal_pressure: 0.0,
        };
        let s = rcr_step_coefficients(&w, 1e-12, 5.0);
        assert!((s.r_eff - 90.0).abs() < 1e-6 && (s.p_offset - 5.0).abs() < 1e-9);
        let s = rcr_step_coefficients(&w, 1e12, 5.0);
        assert!((s.r_eff - 1000.0).abs() < 1e-6 && s.p_offset.abs() < 1e-6);
        let big = WindkesselParams { capacitance: 1e9, ..w };
        let s = rcr_step_coefficients(&big, 0.01, 0.0);
        assert!((s.r_eff - (90.0 + 0.01 / 1e9)).abs() < 1e-15);
    }

    #[test]
    fn constant_inflow_single_branch_approaches_dc_limit() {
        let w = vec![WindkesselParams {
            proximal: 90.0,
            distal: 910.0,
            capacitance: 1e-3,
            distal_pressure: 0.0,
        }];
        let inlet = InletWaveform::constant(1.0, 5.0).unwrap();
        let r = simulate_network_with(&w, &inlet, 10, 1e-3, &CapacitorInit::Zero).unwrap();
        assert!(r.pressure.windows(2).skip(1).all(|p| p[1] >= p[0]));
        let last = *r.pressure.last().unwrap();
        assert!((last / 5000.0 - 1.0).abs() < 1e-3, "{last}");
    }

    #[test]
    fn template_means_and_conservation() {
        let params = arch_like();
        let inlet = InletWaveform::template(1.0, 80.0).unwrap();
        let r = simulate_network(&params, &inlet, 5, 1.0 / 2000.0).unwrap();
        for n in 0..r.time.len() {
            let s: f64 = r.flows.iter().map(|f| f[n]).sum();
            assert!((s - r.inlet[n]).abs() <= 1e-12 * r.inlet.iter().fold(1.0f64, |a, b| a.max(b.abs())));
        }
        let m = cycle_averages(&r, None).unwrap();
        let r_par = 1.0 / params.iter().map(|w| 1.0 / w.total_resistance()).sum::<f64>();
        assert!((m.pressure / (m.inlet * r_par) - 1.0).abs() < 2e-3);
        for (q, w) in m.flows.iter().zip(&params) {
            assert!((q / (m.pressure / w.total_resistance()) - 1.0).abs() < 2e-3);
        }
    }

    #[test]
    fn periodic_state_repeats() {
        let params = arch_like();
        let inlet = InletWaveform::template(0.8, 60.0).unwrap();
        let r = simulate_network(&params, &inlet, 2, 0.8 / 800.0).unwrap();
        for c in &r.capacitor {
            let (a, b) = (c[0], c[800]);
            assert!((a - b).abs() <= 1e-9 * a.abs(), "{a} {b}");
        }
    }

    #[test]
    fn resistive_limit_tracks_inflow() {
        let params: Vec<WindkesselParams> = split_rcr(&[7000.0, 21000.0], &[1.0, 1.0], 1e-12).unwrap();
        let inlet = InletWaveform::template(1.0, 50.0).unwrap();
        let r = simulate_network_with(&params, &inlet, 1, 1e-3, &CapacitorInit::Zero).unwrap();
        let r_par = 1.0 / (1.0 / 7000.0 + 1.0 / 21000.0);
        let peak = r.inlet.iter().fold(0.0f64, |a, b| a.max(*b));
        for n in 1..r.time.len() {
            assert!((r.pressure[n] - r.inlet[n] * r_par).abs() <= 5e-3 * peak * r_par);
        }
    }

    #[test]
    fn cycle_average_examples() {
        let params = arch_like();
        let inlet = InletWaveform::constant(1.0, 3.0).unwrap();
        let r = simulate_network(&params, &inlet, 1, 1e-3).unwrap();
        let m = cycle_averages(&r, Some(0)).unwrap();
        assert!((m.inlet - 3.0).abs() < 1e-12);
        let x: Vec<f64> = (0..=1000).map(|n| (2.0 * PI * n as f64 / 1000.0).sin()).collect();
        assert!(trapezoid_mean(&x, 0, 1000).abs() < 1e-6);
        assert!(cycle_averages(&r, Some(1)).unwrap_err().is_validation());
    }

    #[test]
    fn waveform_csv_and_interpolation() {
        let w = InletWaveform::from_csv_str("t_s,Q_cm3_s\n0,0\n0.25,10\n0.5,0\n0.75,0\n", None).unwrap();
        assert_eq!(w.period(), 1.0);
        assert!((w.value(0.125) - 5.0).abs() < 1e-12);
        assert!((w.value(1.125) - 5.0).abs() < 1e-12);
        assert!((w.mean() - 2.5).abs() < 1e-12);
        let bad = InletWaveform::from_csv_str("t_s,Q\n0,1\nx,2\n", Some(1.0)).unwrap_err();
        assert!(matches!(bad, Error::Parse { line: 3, .. }));
        assert!((InletWaveform::template(1.0, 80.0).unwrap().mean() - 80.0).abs() < 1e-12);
    }

    #[test]
    fn dt_must_divide_period_and_be_small() {
        let params = arch_like();
        let inlet = InletWaveform::template(1.0, 80.0).unwrap();
        assert!(simulate_network(&params, &inlet, 1, 0.3).unwrap_err().is_validation());
        assert!(simulate_network(&params, &inlet, 1, 0.02).unwrap_err().is_validation());
    }

    proptest! {
        #[test]
        fn split_partitions_capacitance(areas in prop::collection::vec(0.01f64..5.0, 1..6), c in 1e-5f64..1e-2) {
            let r: Vec<f64> = areas.iter().map(|a| 1000.0 / a).collect();
            let ws = split_rcr(&r, &areas, c).unwrap();
            let sum: f64 = ws.iter().map(|w| w.capacitance).sum();
            prop_assert!((sum - c).abs() <= 1e-14 * c);
            for (w, ri) in ws.iter().zip(&r) {
                prop_assert!((w.total_resistance() - ri).abs() <= 1e-12 * ri);
            }
        }
    }
}
