use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::{
    stem, AlignArgs, Cli, Command, EvaluateArgs, FitGpArgs, GpPredictArgs, ImitateArgs, ReportArgs, SimulateArgs,
    SynthArgs,
};
use crate::error::{Error, Result};
use crate::eval::{self, StrategyReport};
use crate::gp::{self, FitConfig, GpMeta, GpModel};
use crate::imitation::{self, ExpertConfig, GpCorrection, ImitationConfig, LinearPolicy, Policy};
use crate::sim::{AugmentationConfig, CutEnv, EnvConfig};
use crate::synth::{self, SynthConfig};
use crate::timeseries::{build_dataset, AlignedDataset, DatasetConfig, ForceSeries, ReferenceChoice};
use crate::Vec3;

pub(super) struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub manifest: PathBuf,
}

const BUILTINS: [&str; 3] = ["expert", "regulator", "baseline"];

pub(super) fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name)
}

pub(super) fn execute(cli: &Cli) -> Result<Outcome> {
    let seed = cli.global.seed;
    let out = cli.global.out.clone();
    match &cli.command {
        Command::Align(a) => align(a, out.unwrap_or_else(|| "dataset.json".into())),
        Command::FitGp(a) => fit_gp(a, seed, out.unwrap_or_else(|| "gp.json".into())),
        Command::GpPredict(a) => gp_predict(a, seed, out.unwrap_or_else(|| "prediction.csv".into())),
        Command::Simulate(a) => simulate(a, seed, out.unwrap_or_else(|| "sim".into())),
        Command::Imitate(a) => imitate(a, seed, out.unwrap_or_else(|| "policy.json".into())),
        Command::Evaluate(a) => evaluate(a, seed, out.unwrap_or_else(|| "report".into())),
        Command::Report(a) => report(a, out.unwrap_or_else(|| a.input.join("summary"))),
        Command::Synth(a) => synth(a, seed, out.unwrap_or_else(|| "synth".into())),
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_parent(file: &Path) -> Result<()> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

/// `<dir>/<stem>.<suffix>` next to a file output.
fn sibling(file: &Path, suffix: &str) -> PathBuf {
    file.with_file_name(format!("{}.{suffix}", stem(file)))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{}: no such file", path.display())))
    }
}

fn align(a: &AlignArgs, out: PathBuf) -> Result<Outcome> {
    let entries = std::fs::read_dir(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("{}: no CSV trials found", a.input.display())));
    }
    let raw = files.iter().map(ForceSeries::read_csv).collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()))
        .collect();
    let reference = match a.reference.as_str() {
        "auto" => ReferenceChoice::Longest,
        s => ReferenceChoice::Index(
            s.parse()
                .map_err(|_| Error::invalid(format!("reference {s:?} is neither auto nor an index")))?,
        ),
    };
    let config = DatasetConfig {
        reference,
        open_ended: !a.closed,
        window: a.window,
        rate_hz: a.rate,
    };
    let dataset = build_dataset(&raw, Some(&names), &config)?;
    create_parent(&out)?;
    dataset.write_json(&out)?;
    Ok(Outcome {
        inputs: files,
        outputs: vec![out.clone()],
        config: to_value(&config),
        seeds: vec![],
        manifest: sibling(&out, "manifest.json"),
    })
}

/// Linear interpolation of `series` at `t` seconds after its first sample,
/// held constant outside the recorded span.
fn interpolate(series: &ForceSeries, t: f64) -> Vec3 {
    let ts = series.timestamps();
    let f = series.forces();
    let t = t + ts[0];
    let k = ts.partition_point(|&x| x <= t);
    if k == 0 {
        return f[0];
    }
    if k == ts.len() {
        return f[ts.len() - 1];
    }
    let w = (t - ts[k - 1]) / (ts[k] - ts[k - 1]);
    std::array::from_fn(|a| f[k - 1][a] + w * (f[k][a] - f[k - 1][a]))
}

fn fit_gp(a: &FitGpArgs, seed: u64, out: PathBuf) -> Result<Outcome> {
    require_file(&a.dataset)?;
    let bytes = std::fs::read(&a.dataset).map_err(|e| Error::io(&a.dataset, e))?;
    let dataset = AlignedDataset::read_json(&a.dataset)?;
    let mut inputs = vec![a.dataset.clone()];
    let predicted = match &a.mechanistic {
        Some(path) => {
            let mech = ForceSeries::read_csv(path)?;
            inputs.push(path.clone());
            let on_grid: Vec<Vec3> = dataset.time_grid.iter().map(|&t| interpolate(&mech, t)).collect();
            Some(vec![on_grid; dataset.len()])
        }
        None => None,
    };
    let residuals = gp::compute_residuals(&dataset, predicted.as_deref())?;
    let condensed = gp::condense(&residuals, a.max_points)?;
    let config = FitConfig {
        restarts: a.restarts,
        noise_init: a.noise_init,
        seed,
        max_iters: a.max_iters,
        sample_rate_hz: None,
    };
    let fit = gp::fit(&condensed, &config)?;
    let meta = GpMeta {
        dataset_hash: crate::hash::sha256_hex(&bytes),
        fit_nll: fit.axes.iter().map(|f| f.nll).collect(),
        restarts: a.restarts,
    };
    let model = GpModel::new(fit.best(), condensed, meta)?;
    create_parent(&out)?;
    model.write_json(&out)?;
    let starts = sibling(&out, "starts.json");
    write_json(&fit, &starts)?;
    Ok(Outcome {
        inputs,
        outputs: vec![out.clone(), starts],
        config: json!({ "fit": config, "max_points": a.max_points, "mechanistic": a.mechanistic.is_some() }),
        seeds: vec![seed],
        manifest: sibling(&out, "manifest.json"),
    })
}

fn read_times(path: &Path) -> Result<Vec<f64>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut times = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let t = row
            .get(0)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|t| t.is_finite())
            .ok_or_else(|| Error::invalid(format!("{}: row {}: bad time value", path.display(), i + 1)))?;
        times.push(t);
    }
    if times.is_empty() {
        return Err(Error::invalid(format!("{}: no query times", path.display())));
    }
    Ok(times)
}

fn gp_predict(a: &GpPredictArgs, seed: u64, out: PathBuf) -> Result<Outcome> {
    require_file(&a.model)?;
    let model = GpModel::read_json(&a.model)?;
    let times = read_times(&a.times)?;
    let posterior = model.posterior(&times);
    let samples = if a.samples > 0 {
        let sampler = model.sampler(&times)?;
        (0..a.samples)
            .map(|k| sampler.draw(&mut crate::seed::rng(seed, "gp-predict", k as u64)))
            .collect()
    } else {
        Vec::new()
    };
    let mut header = vec!["t".to_string()];
    for kind in ["mean", "sd"] {
        header.extend(["x", "y", "z"].map(|ax| format!("{kind}_{ax}")));
    }
    for k in 0..a.samples {
        header.extend(["x", "y", "z"].map(|ax| format!("sample{k}_{ax}")));
    }
    create_parent(&out)?;
    let csv_err = |source| Error::Csv {
        path: out.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&out).map_err(csv_err)?;
    w.write_record(&header).map_err(csv_err)?;
    for (i, t) in times.iter().enumerate() {
        let mut row = vec![*t];
        row.extend((0..3).map(|ax| posterior[ax].mean[i]));
        row.extend((0..3).map(|ax| posterior[ax].cov[(i, i)].max(0.0).sqrt()));
        for s in &samples {
            row.extend_from_slice(&s[i]);
        }
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&out, e))?;
    Ok(Outcome {
        inputs: vec![a.model.clone(), a.times.clone()],
        outputs: vec![out.clone()],
        config: json!({ "samples": a.samples }),
        seeds: vec![seed],
        manifest: sibling(&out, "manifest.json"),
    })
}

/// Environment config plus an optional GP model. A `--gp` flag enables
/// augmentation even when the config has no augmentation section.
struct EnvSetup {
    config: EnvConfig,
    gp: Option<GpModel>,
    inputs: Vec<PathBuf>,
}

impl EnvSetup {
    fn load(env: Option<&PathBuf>, gp: Option<&PathBuf>) -> Result<Self> {
        let mut inputs = Vec::new();
        let mut config = match env {
            Some(p) => {
                require_file(p)?;
                inputs.push(p.clone());
                EnvConfig::read_json(p)?
            }
            None => EnvConfig::default(),
        };
        let gp_path = gp
            .cloned()
            .or_else(|| config.augmentation.as_ref().and_then(|a| a.gp_model_path.clone()));
        let gp = match gp_path {
            Some(p) => {
                require_file(&p)?;
                let model = GpModel::read_json(&p)?;
                inputs.push(p.clone());
                let aug = config.augmentation.get_or_insert_with(AugmentationConfig::default);
                aug.gp_model_path = Some(p);
                Some(model)
            }
            None => None,
        };
        Ok(Self { config, gp, inputs })
    }

    fn env(&self, config: EnvConfig) -> Result<CutEnv> {
        match &self.gp {
            Some(gp) => CutEnv::augmented(config, gp),
            None => CutEnv::new(config),
        }
    }

    fn sensor_sigma(&self) -> f64 {
        self.config.augmentation.as_ref().map_or(0.0, |a| a.sensor_sigma)
    }
}

/// Resolve a builtin name or policy file into a display name, the env config
/// it runs in and the policy.
fn load_policy(policy_arg: &str, config: &EnvConfig, inputs: &mut Vec<PathBuf>) -> Result<(String, EnvConfig, Policy)> {
    match policy_arg {
        "expert" => Ok((
            policy_arg.into(),
            config.clone(),
            Policy::scripted_expert(ExpertConfig::default(), &config.bounds),
        )),
        "regulator" => Ok((
            policy_arg.into(),
            config.clone(),
            Policy::linear(LinearPolicy::regulator(), &config.bounds)?,
        )),
        "baseline" => {
            let (c, p) = eval::baseline(config);
            Ok((policy_arg.into(), c, p))
        }
        file => {
            let path = PathBuf::from(file);
            require_file(&path)?;
            let policy = Policy::read_json(&path)?;
            inputs.push(path.clone());
            Ok((stem(&path), config.clone(), policy))
        }
    }
}

fn simulate(a: &SimulateArgs, seed: u64, out: PathBuf) -> Result<Outcome> {
    let setup = EnvSetup::load(a.env.as_ref(), a.gp.as_ref())?;
    let mut inputs = setup.inputs.clone();
    let (name, config, policy) = load_policy(&a.policy, &setup.config, &mut inputs)?;
    let env = setup.env(config.clone())?;
    let seeds = eval::episode_seeds(seed, a.episodes);
    let (report, trajectories) = eval::evaluate_strategy(&env, &policy, &name, &seeds)?;
    create_dir(&out)?;
    let mut outputs = Vec::new();
    for traj in &trajectories {
        let path = out.join(format!("episode_{}.csv", traj.seed));
        traj.write_csv(&path)?;
        outputs.push(path);
    }
    let path = out.join(format!("{name}.report.json"));
    report.write_json(&path)?;
    outputs.push(path);
    Ok(Outcome {
        inputs,
        outputs,
        config: json!({ "env": config, "policy": policy, "episodes": a.episodes }),
        seeds,
        manifest: out.join("manifest.json"),
    })
}

fn imitate(a: &ImitateArgs, seed: u64, out: PathBuf) -> Result<Outcome> {
    let setup = EnvSetup::load(a.env.as_ref(), a.gp.as_ref())?;
    let mut inputs = setup.inputs.clone();
    let mut config = match &a.config {
        Some(p) => {
            require_file(p)?;
            inputs.push(p.clone());
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<ImitationConfig>(&text).map_err(|e| Error::json(p, e))?
        }
        None => ImitationConfig::default(),
    };
    if let Some(v) = a.algo {
        config.algorithm = v;
    }
    if let Some(v) = a.episodes {
        config.episodes = v;
    }
    if let Some(v) = a.lr {
        config.lr = v;
    }
    if let Some(v) = a.batch {
        config.batch = v;
    }
    config.validate()?;
    let expert = match a.expert.as_str() {
        "expert" => Policy::scripted_expert(ExpertConfig::default(), &setup.config.bounds),
        "regulator" => Policy::linear(LinearPolicy::regulator(), &setup.config.bounds)?,
        other => return Err(Error::invalid(format!("unknown expert {other:?} (expected expert or regulator)"))),
    };
    let sigma = a.sensor_sigma.unwrap_or_else(|| setup.sensor_sigma());
    let correction = match &setup.gp {
        Some(gp) => Some(GpCorrection::new(gp, &setup.config, sigma)?),
        None => None,
    };
    let run = imitation::run(&setup.config, &expert, correction.as_ref(), &config, seed)?;
    create_parent(&out)?;
    run.policy.write_json(&out)?;
    let log = sibling(&out, "training.json");
    write_json(
        &json!({
            "warm_start": run.warm_start,
            "betas": run.betas,
            "buffer_sizes": run.buffer_sizes,
            "episodes": run.episodes,
            "final_losses": run.final_losses,
        }),
        &log,
    )?;
    Ok(Outcome {
        inputs,
        outputs: vec![out.clone(), log],
        config: json!({ "imitation": config, "env": setup.config, "expert": expert, "sensor_sigma": sigma }),
        seeds: vec![seed],
        manifest: sibling(&out, "manifest.json"),
    })
}

fn evaluate(a: &EvaluateArgs, seed: u64, out: PathBuf) -> Result<Outcome> {
    let setup = EnvSetup::load(a.env.as_ref(), a.gp.as_ref())?;
    let mut inputs = setup.inputs.clone();
    let mut policy_args = a.policies.clone();
    if a.baseline && !policy_args.iter().any(|s| s == "baseline") {
        policy_args.push("baseline".into());
    }
    let base = a.seed_base.unwrap_or(seed);
    let seeds = eval::episode_seeds(base, a.episodes);
    create_dir(&out)?;
    let mut reports = Vec::new();
    let mut outputs = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for policy_arg in &policy_args {
        let (name, config, policy) = load_policy(policy_arg, &setup.config, &mut inputs)?;
        if names.contains(&name) {
            return Err(Error::invalid(format!("two strategies are named {name:?}")));
        }
        let env = setup.env(config)?;
        let (report, trajectories) = eval::evaluate_strategy(&env, &policy, &name, &seeds)?;
        let path = out.join(format!("{name}.report.json"));
        report.write_json(&path)?;
        outputs.push(path);
        outputs.extend(eval::export_traces(&[(name.as_str(), &trajectories)], &out)?);
        log::info!("{name}: mean reward {:.4}", report.summary.reward);
        names.push(name);
        reports.push(report);
    }
    if reports.len() >= 2 {
        let comparison = eval::compare(&reports)?;
        for n in &comparison.notices {
            log::warn!("{n}");
        }
        let path = out.join("comparison.json");
        comparison.write_json(&path)?;
        outputs.push(path);
    }
    Ok(Outcome {
        inputs,
        outputs,
        config: json!({ "env": setup.config, "strategies": names, "episodes": a.episodes, "seed_base": base }),
        seeds,
        manifest: out.join("manifest.json"),
    })
}

fn report(a: &ReportArgs, out: PathBuf) -> Result<Outcome> {
    let entries = std::fs::read_dir(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.to_string_lossy().ends_with(".report.json"))
        .collect();
    files.sort();
    let reports = files.iter().map(StrategyReport::read_json).collect::<Result<Vec<_>>>()?;
    let comparison = eval::compare(&reports)?;
    for n in &comparison.notices {
        log::warn!("{n}");
    }
    create_dir(&out)?;
    let outputs = if a.format == "csv" {
        comparison.write_csv(&out)?
    } else {
        let path = out.join("comparison.json");
        comparison.write_json(&path)?;
        vec![path]
    };
    Ok(Outcome {
        inputs: files,
        outputs,
        config: json!({ "format": a.format }),
        seeds: vec![],
        manifest: out.join("manifest.json"),
    })
}

fn synth(a: &SynthArgs, seed: u64, out: PathBuf) -> Result<Outcome> {
    let mut inputs = Vec::new();
    let mut config = match &a.config {
        Some(p) => {
            require_file(p)?;
            inputs.push(p.clone());
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<SynthConfig>(&text).map_err(|e| Error::json(p, e))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = a.trials {
        config.trials = v;
    }
    if let Some(v) = a.samples {
        config.samples = v;
    }
    let data = synth::generate(&config, seed)?;
    let outputs = data.write(&out)?;
    Ok(Outcome {
        inputs,
        outputs,
        config: to_value(&config),
        seeds: vec![seed],
        manifest: out.join("manifest.json"),
    })
}
