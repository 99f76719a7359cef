use landtriage_core::detections::to_detection_file;
use landtriage_core::fixture::{Scenario, RUN_COUNT};
use landtriage_core::{Config, Engine, Exec};

fn loaded(exec: Exec) -> (Scenario, Engine) {
    let sc = Scenario::build();
    let mut e = Engine::in_memory(Config::default()).unwrap().with_exec(exec);
    sc.load(&mut e).unwrap();
    (sc, e)
}

#[test]
fn detection_files_round_trip_byte_identical() {
    let (sc, e) = loaded(Exec::Parallel);
    assert_eq!(sc.detection_files.len(), RUN_COUNT);
    for (run_id, text) in &sc.detection_files {
        let dets = e.state().run_detections(run_id);
        assert_eq!(&to_detection_file(&dets), text, "run {run_id}");
    }
}

#[test]
fn fixture_meets_its_own_expectations() {
    let (sc, e) = loaded(Exec::Sequential);
    assert!(sc.verify(e.state()).is_empty());
    assert!(e.state().check_invariants(e.config()).is_empty());
}

#[test]
fn sequential_and_parallel_loads_agree() {
    let (_, a) = loaded(Exec::Sequential);
    let (_, b) = loaded(Exec::Parallel);
    assert_eq!(a.state().digest(), b.state().digest());
}

#[test]
fn written_files_are_complete() {
    let dir = tempfile::tempdir().unwrap();
    Scenario::build().write_files(dir.path()).unwrap();
    for f in [
        "facilities.json",
        "fields.geojson",
        "verifiers.json",
        "runs.json",
        "responses.csv",
        "screening.jsonl",
        "determinations.jsonl",
        "incidentals.jsonl",
        "pre_window_series.json",
    ] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    assert_eq!(std::fs::read_dir(dir.path().join("detections")).unwrap().count(), RUN_COUNT);
}

#[test]
fn every_report_round_trips_through_json_values() {
    use landtriage_core::report::{generate, Report, ReportName, ReportParams};
    let (_, e) = loaded(Exec::Parallel);
    for name in ReportName::ALL {
        let r = generate(e.state(), e.config(), name, &ReportParams::default(), e.exec()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        let back: Report = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(serde_json::to_value(&back).unwrap(), v, "{}", name.as_str());
        assert_eq!(back.name(), name);
    }
}
