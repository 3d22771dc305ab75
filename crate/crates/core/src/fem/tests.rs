use std::f64::consts::PI;
use std::sync::Arc;

use super::*;
use crate::mesh::{generate, refine_uniform};

const NU: f64 = 0.04;

fn props() -> FluidProps {
    FluidProps {
        viscosity: NU,
        density: 1.06,
    }
}

#[test]
fn plug_profile_carries_exact_flux() {
    let m = generate::channel(4.0, 1.0, 8, 4).unwrap();
    let s = build_spaces(&m);
    let ops = StokesOperators::new(&s, props()).unwrap();
    let st = solve_forward(&assemble_forward(&s, &ops, &[100.0], &InletData::Plug(2.5)).unwrap()).unwrap();
    assert!((ops.inlet_inflow(&st.velocity) - 2.5).abs() < 1e-12);
    // mass conservation and the multiplier relation
    let q = ops.outlet_flows(&st.velocity)[0];
    assert!((q - 2.5).abs() < 1e-9, "{q}");
    assert!((st.multipliers[0] - 100.0 * q).abs() < 1e-9);
}

#[test]
fn poiseuille_channel_is_reproduced_exactly() {
    let (l, h, q, r) = (4.0, 1.0, 2.0, 500.0);
    let m = generate::channel(l, h, 8, 4).unwrap();
    let s = build_spaces(&m);
    let umax = 1.5 * q / h;
    let inlet = InletData::Field(Arc::new(move |x: [f64; 3]| [4.0 * umax * x[1] * (h - x[1]) / (h * h), 0.0, 0.0]));
    let st = solve_stokes(&s, props(), &[r], &inlet).unwrap();
    assert!((st.multipliers[0] - r * q).abs() < 1e-8 * r * q);
    let drop = 12.0 * NU * l * q / h.powi(3);
    for v in 0..s.n_pressure() {
        let x = s.node_coords()[v];
        let p = r * q + drop * (l - x[0]) / l;
        assert!((st.pressure[v] - p).abs() < 1e-8 * (r * q), "p at {x:?}: {} vs {p}", st.pressure[v]);
    }
    let out = boundary_functionals(&s, &st, 3).unwrap();
    assert!((out.mean_pressure - r * q).abs() < 1e-8 * r * q);
    assert!((out.flow - q).abs() < 1e-10);
}

struct Manufactured {
    l: f64,
    h: f64,
    u: f64,
    g: f64,
    c: f64,
    r: f64,
}

impl Manufactured {
    fn q(&self) -> f64 {
        2.0 * self.u * self.h / PI
    }
    fn v(&self, x: [f64; 3]) -> [f64; 3] {
        [self.u * (PI * x[1] / self.h).sin(), 0.0, 0.0]
    }
    fn p(&self, x: [f64; 3]) -> f64 {
        self.r * self.q() + (self.l - x[0]) * (self.g + self.c * (PI * x[1] / self.h).cos())
    }
    fn f(&self, x: [f64; 3]) -> [f64; 3] {
        let k = PI / self.h;
        let (s, c) = ((k * x[1]).sin(), (k * x[1]).cos());
        [
            NU * self.u * k * k * s - self.g - self.c * c,
            -(self.l - x[0]) * self.c * k * s,
            0.0,
        ]
    }
}

fn manufactured_errors(mesh: &crate::mesh::Mesh, ms: &Arc<Manufactured>, terms: OutletTerms) -> (f64, f64) {
    let s = build_spaces(mesh);
    let ops = StokesOperators::with_outlet_terms(&s, props(), terms).unwrap();
    let m2 = ms.clone();
    let inlet = InletData::Field(Arc::new(move |x| m2.v(x)));
    let f = |x: [f64; 3]| ms.f(x);
    let sys = assemble_forward_with_force(&s, &ops, &[ms.r], &inlet, Some(&f)).unwrap();
    let st = solve_forward(&sys).unwrap();
    l2_errors(&s, &st, &|x| ms.v(x), &|x| ms.p(x))
}

// The literal outlet terms are not coercive (the tangential term has unit
// coefficient against ν in the volume), so the rate check uses a traction outlet.
#[test]
fn manufactured_solution_converges_at_optimal_rates() {
    let ms = Arc::new(Manufactured {
        l: 2.0,
        h: 1.0,
        u: 1.0,
        g: 0.3,
        c: 0.2,
        r: 10.0,
    });
    let mut mesh = generate::channel(2.0, 1.0, 4, 2).unwrap();
    let mut errs = Vec::new();
    for _ in 0..4 {
        errs.push(manufactured_errors(&mesh, &ms, OutletTerms::DoNothing));
        mesh = refine_uniform(&mesh).unwrap();
    }
    let rate = |a: f64, b: f64| (a / b).log2();
    let n = errs.len();
    let rv = rate(errs[n - 2].0, errs[n - 1].0);
    let rp = rate(errs[n - 2].1, errs[n - 1].1);
    assert!(rv >= 2.7, "velocity rate {rv}, errors {errs:?}");
    assert!(rp >= 1.7, "pressure rate {rp}, errors {errs:?}");
}

#[test]
fn mirror_symmetric_bifurcation_splits_evenly() {
    let p = generate::BifurcationParams {
        h: 0.25,
        ..Default::default()
    };
    let m = generate::bifurcation(&p).unwrap();
    let s = build_spaces(&m);
    let st = solve_stokes(&s, props(), &[800.0, 800.0], &InletData::Plug(3.0)).unwrap();
    let ops = StokesOperators::new(&s, props()).unwrap();
    let q = ops.outlet_flows(&st.velocity);
    assert!((q[0] - q[1]).abs() < 1e-8 * 3.0, "{q:?}");
    assert!((q[0] + q[1] - 3.0).abs() < 1e-9);
}

#[test]
fn system_pattern_is_symmetric() {
    let m = generate::channel(2.0, 1.0, 4, 2).unwrap();
    let s = build_spaces(&m);
    let ops = StokesOperators::new(&s, props()).unwrap();
    let sys = assemble_forward(&s, &ops, &[0.0], &InletData::Plug(1.0)).unwrap();
    assert!(sys.matrix.pattern_is_symmetric());
    assert_eq!(sys.matrix.dim(), s.dof_counts().total());
}

#[test]
fn three_dimensional_box_conserves_mass() {
    let m = generate::box_channel(3.0, 1.0, 1.0, 3, 2, 2).unwrap();
    let s = build_spaces(&m);
    let st = solve_stokes(&s, props(), &[50.0], &InletData::Plug(1.2)).unwrap();
    let ops = StokesOperators::new(&s, props()).unwrap();
    assert!((ops.outlet_flows(&st.velocity)[0] - 1.2).abs() < 1e-9);
}

#[test]
fn wrong_resistance_count_is_rejected() {
    let m = generate::channel(2.0, 1.0, 4, 2).unwrap();
    let s = build_spaces(&m);
    let ops = StokesOperators::new(&s, props()).unwrap();
    let err = assemble_forward(&s, &ops, &[1.0, 2.0], &InletData::Plug(1.0)).unwrap_err();
    assert!(err.is_validation());
}

#[test]
fn outlet_term_variants_agree_on_developed_flow() {
    let m = generate::bifurcation(&generate::BifurcationParams {
        h: 0.25,
        ..Default::default()
    })
    .unwrap();
    let s = build_spaces(&m);
    let r = [900.0, 600.0];
    let flows: Vec<Vec<f64>> = [OutletTerms::AsWritten, OutletTerms::DoNothing]
        .into_iter()
        .map(|t| {
            let ops = StokesOperators::with_outlet_terms(&s, props(), t).unwrap();
            let st = solve_forward(&assemble_forward(&s, &ops, &r, &InletData::Plug(3.0)).unwrap()).unwrap();
            ops.outlet_flows(&st.velocity)
        })
        .collect();
    for (a, b) in flows[0].iter().zip(&flows[1]) {
        assert!((a - b).abs() < 1e-5 * a.abs(), "{flows:?}");
    }
}

#[test]
fn solution_scales_linearly_with_inflow() {
    let m = generate::channel(3.0, 1.0, 6, 3).unwrap();
    let s = build_spaces(&m);
    let a = solve_stokes(&s, props(), &[200.0], &InletData::Plug(1.0)).unwrap();
    let b = solve_stokes(&s, props(), &[200.0], &InletData::Plug(3.0)).unwrap();
    for (x, y) in a.to_vector().iter().zip(b.to_vector()) {
        assert!((3.0 * x - y).abs() <= 1e-10 * (1.0 + y.abs()));
    }
    let z = solve_stokes(&s, props(), &[200.0], &InletData::Plug(0.0)).unwrap();
    assert!(z.to_vector().iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn solution_is_invariant_under_vertex_renumbering() {
    let m = generate::channel(3.0, 1.0, 6, 3).unwrap();
    let n = m.n_vertices();
    let perm: Vec<usize> = (0..n).map(|i| (i * 5 + 3) % n).collect();
    let pm = m.permute_vertices(&perm).unwrap();
    let (s1, s2) = (build_spaces(&m), build_spaces(&pm));
    let a = solve_stokes(&s1, props(), &[300.0], &InletData::Plug(1.5)).unwrap();
    let b = solve_stokes(&s2, props(), &[300.0], &InletData::Plug(1.5)).unwrap();
    assert!((a.multipliers[0] - b.multipliers[0]).abs() < 1e-10 * a.multipliers[0]);
    for v in 0..n {
        let (pa, pb) = (a.pressure[v], b.pressure[perm[v]]);
        assert!((pa - pb).abs() < 1e-10 * (1.0 + pa.abs()), "{v}: {pa} {pb}");
    }
}
