use geoplast::evolution::{run_evolution, Trajectory};
use geoplast::io::parse_scenario;
use geoplast::scenario::{Problem, ScenarioFile};
use geoplast::tensors::SymTensor;
use geoplast::verify::{
    check_energy_balance, check_flow_rule, check_safe_load, check_stability, competitor_margin,
    sample_competitor, verify_trajectory, Competitor, VerifyOptions, BALANCE_RTOL, FLOW_RTOL,
};
use geoplast_oracles::{self as oracle, Cone};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn bundled_doc(name: &str) -> Value {
    let path = format!("{}/../cli/scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

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

fn first_plastic_step(traj: &Trajectory) -> usize {
    traj.snapshots
        .windows(2)
        .position(|w| w[1].energy.vh_cum > w[0].energy.vh_cum)
        .map(|i| i + 1)
        .expect("no plastic step")
}

#[test]
fn snapshot_is_its_own_zero_margin_competitor() {
    let p = bundled("triaxial_1d");
    let traj = run(&p);
    for s in traj.snapshots.iter().step_by(25) {
        let c = Competitor {
            beta: s.alpha.clone(),
            v: s.u.clone(),
            q: s.p.clone(),
        };
        assert_eq!(competitor_margin(&p, s, &c), 0.0);
        let r = check_stability(&p, s, 1, 0);
        assert_eq!((r.margin, r.worst_sample), (0.0, 0));
    }
}

#[test]
fn margins_ignore_the_dissipation_offset() {
    let base = bundled("triaxial_0d");
    let mut doc = bundled_doc("triaxial_0d");
    doc["material"]["d_offset"] = json!(0.37);
    let shifted = problem(doc);
    let traj = run(&base);
    let s = &traj.snapshots[60];
    for i in 1..200 {
        let a = sample_competitor(&base, s, 11, i);
        let b = sample_competitor(&shifted, s, 11, i);
        assert_eq!(a, b);
        let (ma, mb) = (competitor_margin(&base, s, &a), competitor_margin(&shifted, s, &b));
        if ma.is_finite() {
            assert!((ma - mb).abs() <= 1e-12, "sample {i}: {ma} vs {mb}");
        } else {
            assert_eq!(ma, mb);
        }
    }
}

#[test]
fn zero_loading_has_zero_balance_residual() {
    let mut doc = bundled_doc("triaxial_0d");
    doc["loading"]["w"]["xx"]["values"] = json!([[0.0, 0.0]]);
    doc["loading"]["g"] = json!({});
    let p = problem(doc);
    let traj = run(&p);
    for r in check_energy_balance(&p, &traj, 0.0) {
        assert_eq!(r.residual, 0.0);
        assert!(r.pass);
    }
}

#[test]
fn dropped_dissipation_is_flagged_at_its_step() {
    let p = bundled("triaxial_0d");
    let mut traj = run(&p);
    let j = traj.len() - 1;
    let tol = BALANCE_RTOL * geoplast::verify::energy_scale(&p, &traj);
    let before = check_energy_balance(&p, &traj, tol);
    assert!(before.iter().all(|r| r.pass));
    assert!(traj.snapshots[j].energy.vh_cum > before[j].slack);
    traj.snapshots[j].energy.vh_cum = 0.0;
    let records = check_energy_balance(&p, &traj, tol);
    assert!(!records[j].pass);
    assert!(records[..j].iter().all(|r| r.pass));
}

#[test]
fn balance_residual_halves_with_the_step() {
    let worst = |steps: usize| {
        let mut doc = bundled_doc("triaxial_0d");
        doc["loading"]["time_steps"] = json!(steps);
        let p = problem(doc);
        let traj = run(&p);
        check_energy_balance(&p, &traj, 0.0)
            .iter()
            .map(|r| r.residual)
            .fold(0.0, f64::max)
    };
    let ratio = worst(200) / worst(100);
    assert!((0.3..=0.7).contains(&ratio), "ratio {ratio}");
}

#[test]
fn elastic_steps_have_zero_flow_residuals() {
    let p = bundled("elastic_0d");
    let traj = run(&p);
    for w in traj.snapshots.windows(2) {
        let r = check_flow_rule(&p, &w[0].p, &w[1]);
        assert_eq!((r.flow, r.yield_excess, r.cone), (0.0, 0.0, 0.0));
        assert!(r.pass());
    }
}

#[test]
fn hydrostatic_plastic_steps_satisfy_the_flow_rule() {
    let p = bundled("hydrostatic_perfect");
    let traj = run(&p);
    let j = first_plastic_step(&traj);
    for w in traj.snapshots[j - 1..].windows(2) {
        let r = check_flow_rule(&p, &w[0].p, &w[1]);
        assert!(r.flow <= FLOW_RTOL * r.scale, "{r:?}");
        assert!(r.pass());
    }
}

#[test]
fn stress_outside_the_cone_is_flagged() {
    let p = bundled("hydrostatic_perfect");
    let traj = run(&p);
    let j = first_plastic_step(&traj);
    let mut next = traj.snapshots[j].clone();
    let shift = SymTensor::identity(3) * (0.1 * p.dp.k());
    next.sigma.iter_mut().for_each(|s| *s += shift);
    let r = check_flow_rule(&p, &traj.snapshots[j - 1].p, &next);
    assert!(r.yield_excess > 0.0);
    assert!(!r.pass());
}

#[test]
fn converged_trajectory_passes_full_verification() {
    let p = bundled("triaxial_0d");
    let traj = run(&p);
    let report = verify_trajectory(
        &p,
        &traj,
        VerifyOptions {
            n_samples: 200,
            seed: 5,
        },
    );
    assert!(report.pass, "{}", report.to_text());
    assert!(report.alpha_monotone);
    assert_eq!(report.steps.len(), traj.len());
}

fn safe_load_problem(rho: &[f64], tau0: f64) -> Problem {
    let mut doc = bundled_doc("hydrostatic_perfect");
    let mut row = vec![0.0];
    row.extend_from_slice(rho);
    doc["safe_load"] = json!({ "rho": [row], "tau0": tau0 });
    problem(doc)
}

#[test]
fn safe_load_examples() {
    let p = bundled("hydrostatic_perfect");
    let r_h = p.dp.inradius();
    let (tau, k) = (p.dp.tau(), p.dp.k());

    let r = check_safe_load(&safe_load_problem(&[0.0; 6], r_h)).unwrap();
    assert!(r.pass(), "{r:?}");
    assert!(r.inclusion_margin.abs() <= 1e-15);

    let apex = k / tau;
    let r = check_safe_load(&safe_load_problem(&[apex, apex, apex, 0.0, 0.0, 0.0], 1e-3)).unwrap();
    assert!(!r.inclusion_pass);

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cone = Cone { n: 3, tau, k };
    for p0 in [0.0, 0.005, 0.05] {
        let critical = (k + tau * p0) / (tau * tau / 3.0 + 1.0).sqrt();
        let rho = oracle::scale(&oracle::identity(3), -p0);
        for (tau0, expected) in [(0.9 * critical, true), (1.1 * critical, false)] {
            let r = check_safe_load(&safe_load_problem(&[-p0, -p0, -p0, 0.0, 0.0, 0.0], tau0)).unwrap();
            assert_eq!(r.pass(), expected, "p0 = {p0}, tau0 = {tau0}");
            let sampled = oracle::ball_max_yield(&mut rng, &cone, &rho, tau0, 20_000);
            assert_eq!(sampled <= 0.0, expected, "oracle at p0 = {p0}, tau0 = {tau0}");
        }
    }
}
