use std::fs;

use kslab::config::ConfigDoc;
use kslab::sweep::{report, run_sweep, ExperimentPlan};

const DOC: &str = "\
alpha = 2
gamma = 0
grid.n = 128
grid.box_length = 16
t_end = 0.1
initial.kind = gaussian
initial.width = 0.8
initial.mass = 1
sweep.initial.mass = 1, 2pi
sweep.gamma = 0, 1, 10
";

fn plan(dir: &std::path::Path, workers: usize) -> ExperimentPlan {
    let mut plan =
        ExperimentPlan::from_doc(ConfigDoc::parse(DOC).unwrap(), Some(dir.to_path_buf())).unwrap();
    plan.workers = workers;
    plan
}

#[test]
fn sweep_is_deterministic_and_resumable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let recs = run_sweep(&plan(a.path(), 1)).unwrap();
    run_sweep(&plan(b.path(), 3)).unwrap();
    assert_eq!(recs.len(), 6);
    for r in &recs {
        assert!(r.error.is_none() && r.verdict == "ReachedTEnd", "{r:?}");
    }
    assert!(recs.iter().all(|r| r.final_mass_drift < 1e-10));
    let csv_a = fs::read_to_string(a.path().join("records.csv")).unwrap();
    assert_eq!(
        csv_a,
        fs::read_to_string(b.path().join("records.csv")).unwrap()
    );

    // second pass finds every record and recomputes nothing
    run_sweep(&plan(a.path(), 2)).unwrap();
    let log = fs::read_to_string(a.path().join("sweep.log")).unwrap();
    assert_eq!(
        log.lines()
            .filter(|l| l.ends_with("skipped (complete)"))
            .count(),
        6
    );
    assert_eq!(
        csv_a,
        fs::read_to_string(a.path().join("records.csv")).unwrap()
    );

    let table = report(&recs, &plan(a.path(), 1).axes);
    assert_eq!(table.certificate_and_global, 0);
    assert!(fs::read_to_string(a.path().join("phase_table.txt"))
        .unwrap()
        .contains("initial.mass"));
}

#[test]
fn failed_cells_are_retried() {
    let dir = tempfile::tempdir().unwrap();
    // width 0.1 is below two cells at this resolution: every cell fails
    let text = DOC.replace("initial.width = 0.8", "initial.width = 0.1");
    let doc = ConfigDoc::parse(&text).unwrap();
    let plan = ExperimentPlan::from_doc(doc, Some(dir.path().to_path_buf())).unwrap();
    let recs = run_sweep(&plan).unwrap();
    assert!(recs
        .iter()
        .all(|r| r.error.is_some() && r.verdict == "Failed"));
    run_sweep(&plan).unwrap();
    let log = fs::read_to_string(dir.path().join("sweep.log")).unwrap();
    assert!(!log.contains("skipped"));
}
