use geoplast::error::Error;
use geoplast::evolution::{run_evolution, Trajectory};
use geoplast::io::{
    emit_plots, parse_scenario, parse_scenario_str, read_ledger_csv, read_trajectory, write_scenario,
    write_trajectory, TrajectoryWriter,
};
use geoplast::scenario::Problem;
use serde_json::{json, Value};

fn bundled_path(name: &str) -> String {
    format!("{}/../cli/scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

fn bundled_doc(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(bundled_path(name)).unwrap()).unwrap()
}

fn invalid(doc: Value) -> Vec<String> {
    match parse_scenario_str(&doc.to_string()) {
        Err(Error::Validation(e)) => e.issues,
        other => panic!("expected a validation error, got {other:?}"),
    }
}

fn run(problem: &Problem) -> Trajectory {
    run_evolution(problem, |_| Ok(())).unwrap()
}

#[test]
fn bundled_scenarios_parse_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["triaxial_0d", "triaxial_1d", "hydrostatic_perfect", "elastic_0d", "compression_2d"] {
        let sc = parse_scenario(bundled_path(name)).unwrap();
        assert_eq!(sc.name, name);
        let path = dir.path().join(format!("{name}.json"));
        write_scenario(&sc, &path).unwrap();
        assert_eq!(parse_scenario(&path).unwrap(), sc);
    }
}

#[test]
fn invalid_fields_are_named() {
    let mut doc = bundled_doc("triaxial_0d");
    doc["material"]["k"] = json!(-1.0);
    assert!(invalid(doc).iter().any(|i| i.contains("material.k")));

    let mut doc = bundled_doc("triaxial_0d");
    doc["loading"].as_object_mut().unwrap().remove("horizon");
    assert!(invalid(doc).iter().any(|i| i.contains("loading.horizon")));

    let mut doc = bundled_doc("triaxial_0d");
    doc["loading"]["w"]["xx"]["values"] = json!([[1.0, -0.04], [0.0, 0.0]]);
    assert!(invalid(doc).iter().any(|i| i.contains("loading.w.xx")));

    let mut doc = bundled_doc("triaxial_0d");
    doc["initial"]["alpha0"] = json!(1.5);
    assert!(invalid(doc).iter().any(|i| i.contains("initial.alpha0")));
}

#[test]
fn every_issue_is_reported_at_once() {
    let mut doc = bundled_doc("triaxial_0d");
    doc["material"]["k"] = json!(-1.0);
    doc["initial"]["alpha0"] = json!(-0.5);
    doc["loading"].as_object_mut().unwrap().remove("horizon");
    assert!(invalid(doc).len() >= 3);
}

#[test]
fn malformed_documents_are_format_errors() {
    assert!(matches!(parse_scenario_str("{ not json"), Err(Error::Format(_))));
    let mut doc = bundled_doc("triaxial_0d");
    doc["material"]["stiffness"] = json!(1.0);
    assert!(matches!(parse_scenario_str(&doc.to_string()), Err(Error::Format(_))));
}

#[test]
fn trajectory_round_trips_through_csv_and_json() {
    let problem = Problem::new(parse_scenario(bundled_path("triaxial_1d")).unwrap()).unwrap();
    let traj = run(&problem);
    let dir = tempfile::tempdir().unwrap();
    write_trajectory(&traj, dir.path()).unwrap();
    assert_eq!(read_trajectory(dir.path()).unwrap(), traj);

    let rows = read_ledger_csv(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(rows.len(), traj.len());
    for (i, (row, s)) in rows.iter().zip(&traj.snapshots).enumerate() {
        assert_eq!(row.step, i);
        assert_eq!(row.t, s.t);
        assert_eq!(row.energy, s.energy);
        assert_eq!(row.stats, s.stats);
    }
}

#[test]
fn writer_emits_one_row_per_snapshot() {
    let mut doc = bundled_doc("triaxial_0d");
    doc["loading"]["time_steps"] = json!(10);
    let problem = Problem::new(parse_scenario_str(&doc.to_string()).unwrap()).unwrap();
    let traj = run(&problem);
    assert_eq!(traj.len(), 11);

    let dir = tempfile::tempdir().unwrap();
    let mut writer = TrajectoryWriter::create(dir.path()).unwrap();
    writer.push(&traj.snapshots[0]).unwrap();
    let rows = read_ledger_csv(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    for s in &traj.snapshots[1..] {
        writer.push(s).unwrap();
    }
    writer.finish(&traj).unwrap();
    assert_eq!(read_ledger_csv(dir.path().join("trajectory.csv")).unwrap().len(), 11);
    assert!(dir.path().join("trajectory.json").exists());
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(text.starts_with("# geoplast trajectory schema 1\nstep,t,Q,D,"));
}

#[test]
fn plots_need_two_snapshots() {
    let problem = Problem::new(parse_scenario(bundled_path("elastic_0d")).unwrap()).unwrap();
    let mut traj = run(&problem);
    let dir = tempfile::tempdir().unwrap();
    let files = emit_plots(&problem, &traj, dir.path()).unwrap();
    assert_eq!(files.len(), 4);
    for f in &files {
        let svg = std::fs::read_to_string(f).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"), "{}", f.display());
    }
    traj.snapshots.truncate(1);
    assert!(matches!(
        emit_plots(&problem, &traj, dir.path()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn plots_cover_every_mesh_kind() {
    for name in ["triaxial_1d", "compression_2d"] {
        let mut doc = bundled_doc(name);
        doc["loading"]["time_steps"] = json!(4);
        let problem = Problem::new(parse_scenario_str(&doc.to_string()).unwrap()).unwrap();
        let traj = run(&problem);
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plots(&problem, &traj, dir.path()).unwrap();
        assert!(files.iter().any(|f| f.ends_with("damage.svg")), "{name}");
    }
}
