use std::path::Path;

use cut_transfer::cli::{main_with_args, replay, RunManifest, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use cut_transfer::eval::StrategyReport;
use cut_transfer::gp::GpModel;
use cut_transfer::imitation::Policy;
use cut_transfer::timeseries::AlignedDataset;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["cut-transfer"];
    argv.extend_from_slice(args);
    main_with_args(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]), EXIT_OK);
    assert_eq!(run(&["fit-gp", "--help"]), EXIT_OK);
    assert_eq!(run(&["--version"]), EXIT_OK);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]), EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["align", "--input", "x", "--no-such-flag"]), EXIT_USAGE);
    assert_eq!(run(&["imitate", "--algo", "ppo"]), EXIT_USAGE);
    assert_eq!(run(&["report", "--in", "x", "--format", "xml"]), EXIT_USAGE);
    assert_eq!(run(&["synth", "--seed", "minus-one"]), EXIT_USAGE);
}

#[test]
fn missing_inputs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent.json");
    let out = tmp.path().join("gp.json");
    assert_eq!(run(&["fit-gp", "--dataset", s(&missing), "--out", s(&out)]), EXIT_DATA);
    assert!(!out.exists());
    assert_eq!(run(&["align", "--input", s(tmp.path())]), EXIT_DATA);
    assert_eq!(run(&["simulate", "--policy", s(&missing), "--out", s(&tmp.path().join("sim"))]), EXIT_DATA);
}

#[test]
fn malformed_csv_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("trials");
    std::fs::create_dir(&dir).unwrap();
    std::fs::write(dir.join("a.csv"), "t,fx,fy,fz\n0,1,2,3\n0.002,1,oops,3\n").unwrap();
    assert_eq!(run(&["align", "--input", s(&dir), "--out", s(&tmp.path().join("d.json"))]), EXIT_DATA);
}

#[test]
fn full_pipeline_on_synthetic_trials() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let (syn, ds, gp, sim, pol, rep) = (
        d.join("syn"),
        d.join("ds/dataset.json"),
        d.join("ds/gp.json"),
        d.join("sim"),
        d.join("pol/bc.json"),
        d.join("rep"),
    );
    let trials = syn.join("trials");
    let mech = syn.join("mechanistic.csv");
    let config = d.join("imitation.json");
    std::fs::write(&config, r#"{"episodes": 2, "epochs": 2, "bc_epochs": 3, "hidden": [8], "warm_start": null}"#).unwrap();

    assert_eq!(run(&["synth", "--trials", "3", "--samples", "600", "--out", s(&syn)]), EXIT_OK);
    assert_eq!(run(&["align", "--input", s(&trials), "--closed", "--out", s(&ds)]), EXIT_OK);
    let dataset = AlignedDataset::read_json(&ds).unwrap();
    assert_eq!(dataset.len(), 3);

    assert_eq!(
        run(&["fit-gp", "--dataset", s(&ds), "--mechanistic", s(&mech), "--max-points", "100", "--restarts", "2", "--out", s(&gp)]),
        EXIT_OK
    );
    let model = GpModel::read_json(&gp).unwrap();
    assert_eq!(model.training().len(), 100);

    assert_eq!(run(&["simulate", "--gp", s(&gp), "--policy", "regulator", "--episodes", "2", "--out", s(&sim)]), EXIT_OK);
    let report = StrategyReport::read_json(sim.join("regulator.report.json")).unwrap();
    assert!(report.augmented);
    assert_eq!(report.episodes.len(), 2);

    assert_eq!(
        run(&["imitate", "--gp", s(&gp), "--config", s(&config), "--algo", "bc", "--out", s(&pol)]),
        EXIT_OK
    );
    Policy::read_json(&pol).unwrap();

    let policies = format!("expert,{}", s(&pol));
    assert_eq!(
        run(&["evaluate", "--policies", &policies, "--baseline", "--episodes", "3", "--out", s(&rep)]),
        EXIT_OK
    );
    for f in ["expert.report.json", "bc.report.json", "baseline.report.json", "bc_traces.csv", "comparison.json", "manifest.json"] {
        assert!(rep.join(f).is_file(), "{f}");
    }
    assert_eq!(run(&["report", "--in", s(&rep), "--format", "json"]), EXIT_OK);
    assert!(rep.join("summary/comparison.json").is_file());

    // manifests sit next to file outputs and inside output directories
    for m in [syn.join("manifest.json"), d.join("ds/dataset.manifest.json"), d.join("ds/gp.manifest.json"), d.join("pol/bc.manifest.json")] {
        let manifest = RunManifest::read_json(&m).unwrap();
        assert!(!manifest.outputs.is_empty());
        assert_eq!(manifest.version, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn replay_reproduces_outputs_and_rejects_changed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let syn = d.join("syn");
    let ds = d.join("dataset.json");
    assert_eq!(run(&["synth", "--trials", "3", "--samples", "500", "--seed", "9", "--out", s(&syn)]), EXIT_OK);
    assert_eq!(run(&["--threads", "1", "align", "--input", s(&syn.join("trials")), "--out", s(&ds)]), EXIT_OK);

    let original = RunManifest::read_json(d.join("dataset.manifest.json")).unwrap();
    let again = replay(d.join("dataset.manifest.json"), Some(d.join("again/dataset.json"))).unwrap();
    assert!(original.same_outputs(&again));
    assert_eq!(std::fs::read(&ds).unwrap(), std::fs::read(d.join("again/dataset.json")).unwrap());
    assert_eq!(original.config_hash, again.config_hash);

    let synth_manifest = RunManifest::read_json(syn.join("manifest.json")).unwrap();
    let other_seed = replay(syn.join("manifest.json"), Some(d.join("syn2"))).unwrap();
    assert!(synth_manifest.same_outputs(&other_seed));

    std::fs::write(syn.join("trials/trial_01.csv"), "t,fx,fy,fz\n0,0,0,0\n").unwrap();
    assert!(replay(d.join("dataset.manifest.json"), Some(d.join("third/dataset.json"))).is_err());
}

#[test]
fn different_seeds_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&["synth", "--trials", "2", "--samples", "300", "--seed", "1", "--out", s(&a)]), EXIT_OK);
    assert_eq!(run(&["synth", "--trials", "2", "--samples", "300", "--seed", "2", "--out", s(&b)]), EXIT_OK);
    let ma = RunManifest::read_json(a.join("manifest.json")).unwrap();
    let mb = RunManifest::read_json(b.join("manifest.json")).unwrap();
    assert!(!ma.same_outputs(&mb));
}
