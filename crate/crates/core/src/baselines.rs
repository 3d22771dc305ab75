//! Murray's law, Ohm's law and the least-squares Ohm fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurements::MeasurementSet;

/// Parallel combination `(Σ 1/R_i)⁻¹`.
pub fn parallel_resistance(r: &[f64]) -> f64 {
    1.0 / r.iter().map(|x| 1.0 / x).sum::<f64>()
}

/// Splits `R_tot = p_d/Q_in` so that outlet flows scale like `|Γ_i|^(n/2)`.
pub fn murray_resistances(areas: &[f64], p_d: f64, q_in: f64, exponent: f64) -> Result<Vec<f64>> {
    if areas.is_empty() {
        return Err(Error::validation("areas", "no outlets"));
    }
    if let Some(a) = areas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::validation("areas", format!("outlet area must be positive, got {a}")));
    }
    if !(q_in > 0.0) {
        return Err(Error::validation("inlet.flow_cm3_s", format!("must be positive, got {q_in}")));
    }
    if !(p_d > 0.0) {
        return Err(Error::validation("pressure", format!("must be positive, got {p_d}")));
    }
    if !(exponent > 0.0 && exponent.is_finite()) {
        return Err(Error::validation("exponent", format!("must be positive, got {exponent}")));
    }
    let r_tot = p_d / q_in;
    let w: Vec<f64> = areas.iter().map(|a| a.powf(0.5 * exponent)).collect();
    let sum: f64 = w.iter().sum();
    Ok(w.iter().map(|wi| sum / wi * r_tot).collect())
}

/// `R_i = p_d / Q_i`.
pub fn ohm_resistances(p_d: f64, flows: &[f64]) -> Result<Vec<f64>> {
    if !(p_d > 0.0) {
        return Err(Error::validation("pressure", format!("must be positive, got {p_d}")));
    }
    flows
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            if q > 0.0 && q.is_finite() {
                Ok(p_d / q)
            } else {
                Err(Error::validation(format!("outlets[{i}].flow_cm3_s"), format!("must be positive, got {q}")))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    /// offset of the initial simplex vertices along each axis
    pub initial_scale: f64,
    pub max_evals: usize,
    /// simplex size, relative to the best vertex
    pub x_tol: f64,
    /// spread of function values over the simplex
    pub f_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            initial_scale: 0.05,
            max_evals: 4000,
            x_tol: 1e-10,
            f_tol: 1e-12,
        }
    }
}

impl SimplexOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if !ok(self.initial_scale) || !ok(self.x_tol) || !ok(self.f_tol) || self.max_evals == 0 {
            return Err(Error::validation("simplex", format!("options must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
    /// best value after each iteration
    pub history: Vec<f64>,
}

/// Nelder–Mead with reflection 1, expansion 2, contraction 1/2 and shrink 1/2.
///
/// Hitting `max_evals` is not an error; the best vertex is returned with
/// `converged = false`.
pub fn nelder_mead(f: &mut dyn FnMut(&[f64]) -> f64, x0: &[f64], opts: &SimplexOptions) -> Result<SimplexResult> {
    opts.validate()?;
    let n = x0.len();
    if n == 0 {
        return Err(Error::validation("x0", "empty starting point"));
    }
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0, &mut evals);
    if !f0.is_finite() {
        return Err(Error::validation("x0", "objective is not finite at the starting point"));
    }
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += if x[i] != 0.0 { opts.initial_scale * x[i].abs().max(1.0) } else { opts.initial_scale };
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }
    let mut history = Vec::new();
    let mut converged = false;
    let along = |c: &[f64], d: &[f64], t: f64| -> Vec<f64> { c.iter().zip(d).map(|(c, d)| c + t * (d - c)).collect() };

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(simplex[0].1);
        let best = &simplex[0];
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let xscale = best.0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let spread = simplex[n].1 - simplex[0].1;
        if size <= opts.x_tol * xscale && spread <= opts.f_tol {
            converged = true;
            break;
        }
        if evals >= opts.max_evals {
            break;
        }
        let mut c = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for k in 0..n {
                c[k] += x[k] / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let xr = along(&c, &worst.0, -1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(&c, &worst.0, -2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < worst.1 {
            let xc = along(&c, &xr, 0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc, fc <= fr)
        } else {
            let xc = along(&c, &worst.0, 0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc, fc < worst.1)
        };
        if accept {
            simplex[n] = (xc, fc);
            continue;
        }
        let x1 = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            v.0 = along(&x1, &v.0, 0.5);
            v.1 = eval(&v.0, &mut evals);
        }
    }
    let (x, f) = simplex.swap_remove(0);
    Ok(SimplexResult {
        x,
        f,
        evals,
        converged,
        history,
    })
}

/// Least-squares mismatch of the parallel resistor network against the data:
/// `α_p (R_tot Q_0 − p_d)²/p_d² + Σ α_i (p_d/R_i − Q_i)²/Q_i²`.
pub fn ohm_cost(ms: &MeasurementSet, r: &[f64]) -> f64 {
    let p_d = ms.target_pressure;
    let r_tot = parallel_resistance(r);
    let mut j = ms.pressure_weight * ((r_tot * ms.inlet_flow - p_d) / p_d).powi(2);
    for (o, ri) in ms.outlets.iter().zip(r) {
        j += o.weight * ((p_d / ri - o.flow) / o.flow).powi(2);
    }
    j
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OhmFit {
    pub resistances: Vec<f64>,
    pub cost: f64,
    pub start_cost: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimizes [`ohm_cost`] over `log R`, starting from Ohm's law.
pub fn ohm_optimized(ms: &MeasurementSet, opts: &SimplexOptions) -> Result<OhmFit> {
    ms.validate()?;
    let r0 = ohm_resistances(ms.target_pressure, &ms.outlet_flows())?;
    let x0: Vec<f64> = r0.iter().map(|r| r.ln()).collect();
    let start_cost = ohm_cost(ms, &r0);
    let mut obj = |x: &[f64]| ohm_cost(ms, &x.iter().map(|v| v.exp()).collect::<Vec<_>>());
    let res = nelder_mead(&mut obj, &x0, opts)?;
    if !res.converged {
        log::warn!("simplex search stopped after {} evaluations without meeting its tolerances", res.evals);
    }
    let (resistances, cost) = if res.f <= start_cost {
        (res.x.iter().map(|v| v.exp()).collect(), res.f)
    } else {
        (r0, start_cost)
    };
    Ok(OhmFit {
        resistances,
        cost,
        start_cost,
        evals: res.evals,
        converged: res.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurements::MMHG_TO_DYN_CM2;
    use proptest::prelude::*;

    #[test]
    fn murray_equal_and_unequal_areas() {
        let r = murray_resistances(&[1.0; 4], 1000.0, 1.0, 2.0).unwrap();
        assert!(r.iter().all(|&x| (x - 4000.0).abs() < 1e-9));
        let r = murray_resistances(&[2.0, 1.0], 1000.0, 1.0, 2.0).unwrap();
        assert!((r[0] - 1500.0).abs() < 1e-9 && (r[1] - 3000.0).abs() < 1e-9);
        assert!(murray_resistances(&[1.0, 0.0], 1.0, 1.0, 2.0).unwrap_err().is_validation());
    }

    #[test]
    fn murray_row_from_published_table_sums_to_total() {
        // case 1 Murray row, p_d = 98.7 mmHg, Q_in = 119.1 cm³/s
        let r_tot = parallel_resistance(&[6837.0, 21242.0, 17591.0, 1527.0]);
        let expected = 98.7 * MMHG_TO_DYN_CM2 / 119.1;
        assert!((r_tot / expected - 1.0).abs() < 0.01, "{r_tot} vs {expected}");
    }

    #[test]
    fn ohm_examples() {
        assert_eq!(ohm_resistances(5.0, &[5.0]).unwrap(), vec![1.0]);
        let p = 103.0 * MMHG_TO_DYN_CM2;
        let r = ohm_resistances(p, &[19.0, 11.3, 10.5, 84.8]).unwrap();
        for (a, b) in r.iter().zip([7248.0, 12142.0, 13094.0, 1624.0]) {
            assert!((a / b - 1.0).abs() < 0.005, "{a} vs {b}");
        }
        let half = ohm_resistances(p, &[38.0, 22.6, 21.0, 169.6]).unwrap();
        for (a, b) in r.iter().zip(&half) {
            assert_eq!(*a, 2.0 * b);
        }
        assert!(ohm_resistances(p, &[1.0, 0.0]).unwrap_err().is_validation());
    }

    #[test]
    fn simplex_quadratic_bowl() {
        let mut f = |x: &[f64]| x.iter().map(|v| (v - 3.0).powi(2)).sum::<f64>();
        let r = nelder_mead(&mut f, &[0.0, 0.0, 0.0], &SimplexOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.x.iter().all(|v| (v - 3.0).abs() < 1e-6), "{:?}", r.x);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn simplex_rosenbrock() {
        let mut f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let r = nelder_mead(&mut f, &[-1.2, 1.0], &SimplexOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn simplex_budget_returns_best_so_far() {
        let mut f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let opts = SimplexOptions {
            max_evals: 20,
            ..Default::default()
        };
        let r = nelder_mead(&mut f, &[-1.2, 1.0], &opts).unwrap();
        assert!(!r.converged && r.f <= 24.2);
    }

    fn toy(q0: f64, flows: &[f64]) -> MeasurementSet {
        let outlets: Vec<(i64, f64)> = flows.iter().enumerate().map(|(i, &q)| (i as i64 + 2, q)).collect();
        MeasurementSet::new(1, q0, &outlets, 100.0 * MMHG_TO_DYN_CM2).unwrap()
    }

    #[test]
    fn consistent_data_gives_ohm_law() {
        let ms = toy(120.0, &[20.0, 10.0, 10.0, 80.0]);
        let fit = ohm_optimized(&ms, &SimplexOptions::default()).unwrap();
        assert!(fit.cost <= 1e-10);
        let r0 = ohm_resistances(ms.target_pressure, &ms.outlet_flows()).unwrap();
        for (a, b) in fit.resistances.iter().zip(&r0) {
            assert!((a / b - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn inconsistent_toy_matches_grid_search() {
        let flows = [30.0, 20.0, 50.0];
        let ms = toy(1.1 * 100.0, &flows);
        let fit = ohm_optimized(&ms, &SimplexOptions::default()).unwrap();
        assert!(fit.cost <= fit.start_cost);
        let r0 = ohm_resistances(ms.target_pressure, &flows).unwrap();
        let step = 0.4 / 40.0;
        let (mut best, mut arg) = (f64::INFINITY, [0.0; 3]);
        for i in 0..41 {
            for j in 0..41 {
                for k in 0..41 {
                    let r = [
                        r0[0] * (0.8 + step * i as f64),
                        r0[1] * (0.8 + step * j as f64),
                        r0[2] * (0.8 + step * k as f64),
                    ];
                    let c = ohm_cost(&ms, &r);
                    if c < best {
                        best = c;
                        arg = r;
                    }
                }
            }
        }
        assert!(fit.cost <= best + 1e-12);
        for i in 0..3 {
            assert!((fit.resistances[i] - arg[i]).abs() <= step * r0[i], "{:?} vs {arg:?}", fit.resistances);
        }
    }

    proptest! {
        #[test]
        fn murray_parallel_identity(areas in prop::collection::vec(1e-3f64..10.0, 2..7), p in 1e3f64..2e5, q in 1.0f64..300.0) {
            let r = murray_resistances(&areas, p, q, 2.0).unwrap();
            prop_assert!((parallel_resistance(&r) / (p / q) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn ohm_fit_never_worse_than_start(f in prop::collection::vec(5.0f64..80.0, 2..5), scale in 0.8f64..1.2) {
            let total: f64 = f.iter().sum();
            let ms = toy(total * scale, &f);
            let fit = ohm_optimized(&ms, &SimplexOptions::default()).unwrap();
            prop_assert!(fit.cost <= fit.start_cost);
        }
    }
}
