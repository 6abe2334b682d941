use geoplast::evolution::{initial_state, run_evolution, uep_step, Trajectory};
use geoplast::io::parse_scenario;
use geoplast::scenario::{Problem, ScenarioFile};
use geoplast::tensors::SymTensor;
use proptest::prelude::*;
use serde_json::{json, Value};

fn problem(doc: Value) -> Problem {
    let file: ScenarioFile = serde_json::from_value(doc).unwrap();
    Problem::new(file.validate().unwrap()).unwrap()
}

fn bundled(name: &str) -> Problem {
    let path = format!("{}/../cli/scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"));
    Problem::new(parse_scenario(path).unwrap()).unwrap()
}

fn run(p: &Problem) -> Trajectory {
    run_evolution(p, |_| Ok(())).unwrap()
}

fn material(k: f64) -> Value {
    json!({
        "lambda": 1.0, "mu": 1.0, "tau": 0.6, "k": k,
        "c_bar": 0.1, "w_d": 4e-5, "w_grad": 1e-6
    })
}

#[test]
fn rect_patch_reproduces_affine_displacement() {
    let g = [1e-3, 2e-4, -5e-4, -2e-3];
    let side = json!({
        "values": [[0.0, 0.0, 0.0]],
        "gradient": [[0.0, 0.0, 0.0, 0.0, 0.0], [1.0, g[0], g[1], g[2], g[3]]]
    });
    let p = problem(json!({
        "mesh": {
            "kind": "rect", "dims": [4, 3], "lengths": [1.0, 0.75],
            "boundary_tags": {
                "left": "dirichlet", "right": "dirichlet",
                "bottom": "dirichlet", "top": "dirichlet"
            }
        },
        "material": material(1e3),
        "loading": {
            "time_steps": 2, "horizon": 1.0,
            "w": { "left": side, "right": side, "bottom": side, "top": side }
        },
        "initial": { "alpha0": 0.9 }
    }));
    let traj = run(&p);
    for s in &traj.snapshots {
        let t = s.t;
        for (v, x) in p.mesh.vertices.iter().enumerate() {
            for c in 0..2 {
                let exact = t * (g[2 * c] * x[0] + g[2 * c + 1] * x[1]);
                let got = s.u[p.mesh.vertex_dof(v, c)];
                assert!((got - exact).abs() <= 1e-15, "vertex {v} comp {c}: {got} vs {exact}");
            }
        }
        let sym = SymTensor::from_voigt(2, &[g[0] * t, g[3] * t, 0.5 * (g[1] + g[2]) * t]);
        for (e, eps) in p.mesh.strain(&s.u).iter().enumerate() {
            assert!((*eps - sym).norm() <= 1e-15, "element {e}");
            assert_eq!(s.p[e], SymTensor::zeros(2));
        }
        assert!(s.alpha.iter().all(|&a| a == 0.9));
    }
}

#[test]
fn bar_matches_direct_stiffness() {
    let (traction, body) = (3e-3, 2e-3);
    let p = problem(json!({
        "mesh": {
            "kind": "segment", "dims": [2], "lengths": [1.0], "tensor_dim": 3,
            "boundary_tags": {
                "left": "dirichlet", "right": "neumann",
                "yy": "dirichlet", "zz": "dirichlet", "yz": "dirichlet"
            }
        },
        "material": material(1e3),
        "loading": {
            "time_steps": 1, "horizon": 1.0,
            "f": [[0.0, body, 0.0, 0.0]],
            "g": { "right": [[0.0, traction, 0.0, 0.0]] }
        },
        "initial": { "alpha0": 0.9 }
    }));
    let traj = run(&p);
    let s = traj.snapshots.last().unwrap();
    let modulus = 1.0 + 2.0 * 1.0;
    let exact = |x: f64| ((traction + body) * x - 0.5 * body * x * x) / modulus;
    for (v, x) in p.mesh.vertices.iter().enumerate() {
        let got = s.u[p.mesh.vertex_dof(v, 0)];
        assert!((got - exact(x[0])).abs() <= 1e-14, "x = {}: {got}", x[0]);
        for c in 1..3 {
            assert!(s.u[p.mesh.vertex_dof(v, c)].abs() <= 1e-16);
        }
    }
}

#[test]
fn point_displacement_step_is_the_return_map() {
    let strain = [-0.03, 0.01, 0.004, 0.002, -0.006, 0.005];
    let labels = ["xx", "yy", "zz", "yz", "xz", "xy"];
    let mut w = serde_json::Map::new();
    let mut tags = serde_json::Map::new();
    for (l, v) in labels.iter().zip(strain) {
        w.insert(l.to_string(), json!({ "values": [[0.0, 0.0], [1.0, v]] }));
        tags.insert(l.to_string(), json!("dirichlet"));
    }
    let p = problem(json!({
        "mesh": { "kind": "point", "tensor_dim": 3, "boundary_tags": tags },
        "material": material(0.01),
        "loading": { "time_steps": 1, "horizon": 1.0, "w": w },
        "initial": { "alpha0": 0.5 }
    }));
    let p_prev = vec![SymTensor::from_voigt(3, &[0.002, -0.001, 0.001, 0.0, 0.0, 0.0])];
    for c1 in [0.0, 0.05, 2.0] {
        let lifting = p.lifting(1.0);
        let r = uep_step(&p, &[c1], &p_prev, &lifting, &p.load(1.0)).unwrap();
        let eps = SymTensor::from_voigt(3, &strain);
        let direct = p.dp.return_map(&eps, &p_prev[0], c1, &p.hooke).unwrap();
        assert_eq!(r.p()[0], direct.p_new);
        assert_eq!(r.sigma()[0], direct.sigma);
    }
}

#[test]
fn elastic_history_keeps_damage_and_balances_exactly() {
    let p = bundled("elastic_0d");
    let traj = run(&p);
    let first = traj.snapshots[0].energy;
    for s in &traj.snapshots {
        assert_eq!(s.energy.vh_cum, 0.0);
        assert!(s.alpha.iter().all(|&a| a == p.scenario.initial.alpha0));
        assert!(s.p.iter().all(|q| q.norm() == 0.0));
        let scale = p.energy_scale(&s.e);
        let res = (s.energy.balance_lhs() - s.energy.balance_rhs(&first)).abs();
        assert!(res <= 1e-12 * scale, "t = {}: {res}", s.t);
    }
}

#[test]
fn initial_state_has_no_dissipation() {
    let p = bundled("triaxial_0d");
    let s = initial_state(&p).unwrap();
    assert_eq!(s.t, 0.0);
    assert_eq!(s.energy.vh_cum, 0.0);
    assert_eq!(s.energy.work_load_cum, 0.0);
}

#[test]
fn runs_are_bit_identical() {
    for name in ["triaxial_0d", "triaxial_1d"] {
        let p = bundled(name);
        let a = run(&p);
        let b = run(&p);
        assert_eq!(a, b, "{name}");
    }
}

fn triaxial(tau: f64, k: f64, c_bar: f64, alpha0: f64, axial: f64, confinement: f64) -> Problem {
    problem(json!({
        "mesh": {
            "kind": "point", "tensor_dim": 3,
            "boundary_tags": {
                "xx": "dirichlet", "yy": "neumann", "zz": "neumann",
                "yz": "neumann", "xz": "neumann", "xy": "neumann"
            }
        },
        "material": {
            "lambda": 1.0, "mu": 1.0, "tau": tau, "k": k,
            "c_bar": c_bar, "w_d": 4e-5, "w_grad": 0.0
        },
        "loading": {
            "time_steps": 20, "horizon": 1.0,
            "w": { "xx": { "values": [[0.0, 0.0], [1.0, axial]] } },
            "g": { "yy": [[0.0, confinement]], "zz": [[0.0, confinement]] }
        },
        "initial": { "alpha0": alpha0 }
    }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn additive_split_and_damage_monotonicity(
        tau in 0.3f64..1.0,
        k in 0.005f64..0.02,
        c_bar in 0.02f64..0.5,
        alpha0 in 0.5f64..0.95,
        axial in -0.06f64..-0.02,
        confinement in -0.02f64..0.0,
    ) {
        let p = triaxial(tau, k, c_bar, alpha0, axial, confinement);
        let traj = run(&p);
        let mut prev = vec![alpha0; p.mesh.n_vertices()];
        for s in &traj.snapshots {
            for ((eps, e), q) in p.mesh.strain(&s.u).iter().zip(&s.e).zip(&s.p) {
                prop_assert!((*eps - (*e + *q)).norm() <= 1e-12 * (1.0 + eps.norm()));
            }
            for (a, b) in s.alpha.iter().zip(&prev) {
                prop_assert!(a <= b, "t = {}: {a} > {b}", s.t);
            }
            prev = s.alpha.clone();
        }
    }
}
