//! The whole command-line pipeline in a scratch directory: synthesize,
//! align, fit, simulate, imitate, evaluate and report, then replay the
//! alignment from its manifest.
//!
//! cargo run --release --example end_to_end [work_dir]

use std::path::PathBuf;

use cut_transfer::cli::{main_with_args, replay, RunManifest, EXIT_OK};

fn step(args: &[&str]) {
    println!("$ cut-transfer {}", args.join(" "));
    let code = main_with_args(std::iter::once("cut-transfer").chain(args.iter().copied()));
    assert_eq!(code, EXIT_OK, "step failed");
}

fn main() {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("cut-transfer-demo"));
    let p = |rel: &str| dir.join(rel).display().to_string();
    std::fs::create_dir_all(&dir).expect("work dir");
    std::fs::write(dir.join("imitation.json"), r#"{"episodes": 4, "beta_episodes": 3, "warm_start": null}"#).expect("config");

    step(&["synth", "--seed", "7", "--trials", "4", "--out", &p("synth")]);
    step(&["align", "--input", &p("synth/trials"), "--out", &p("model/dataset.json")]);
    step(&[
        "fit-gp", "--dataset", &p("model/dataset.json"), "--mechanistic", &p("synth/mechanistic.csv"), "--max-points", "200",
        "--restarts", "4", "--out", &p("model/gp.json"),
    ]);
    step(&["simulate", "--gp", &p("model/gp.json"), "--policy", "expert", "--episodes", "2", "--out", &p("sim")]);
    step(&["imitate", "--gp", &p("model/gp.json"), "--config", &p("imitation.json"), "--algo", "dagger", "--out", &p("policies/dagger.json")]);
    let policies = format!("expert,{}", p("policies/dagger.json"));
    step(&["evaluate", "--gp", &p("model/gp.json"), "--policies", &policies, "--baseline", "--episodes", "10", "--out", &p("eval")]);
    step(&["report", "--in", &p("eval"), "--format", "csv"]);

    let manifest = dir.join("model/dataset.manifest.json");
    let original = RunManifest::read_json(&manifest).expect("manifest");
    let again = replay(&manifest, Some(dir.join("replay/dataset.json"))).expect("replay");
    println!("replayed alignment identical: {}", original.same_outputs(&again));
    println!("summary tables in {}", p("eval/summary"));
}
