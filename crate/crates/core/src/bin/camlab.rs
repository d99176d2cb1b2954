//! `camlab`: generate, collect, augment, train, eval, verify.
//!
//! Every subcommand writes a run manifest next to its output before doing
//! any work. Exit codes: 0 success, 1 runtime or verification failure,
//! 2 usage or configuration error.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use camlab::bnb::{
    collect_expert_samples, compare_policies, par_map, BnbConfig, BnbLimits, BranchingPolicy, Clock,
    MetricsReport,
};
use camlab::encoder::SCHEMA as STATE_SCHEMA;
use camlab::gcnn::{GcnnModel, MODEL_SCHEMA};
use camlab::instgen::GenSpec;
use camlab::milp::{sample_shift, MilpInstance, INSTANCE_SCHEMA};
use camlab::samples::{read_samples, write_samples, ExpertSample};
use camlab::trainer::{
    augment_interleaved, eval_topk, history_csv, index_instances, train, TrainConfig,
};
use camlab::verify::verify_pair;
use camlab::Error;

const MANIFEST_SCHEMA: &str = "camlab-manifest-v1";
const DATA_DIR_VAR: &str = "CAMLAB_DATA_DIR";

#[derive(Parser, Debug)]
#[command(name = "camlab", version, about = "Learned branching laboratory for MILP")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// Base seed. For `train` it overrides the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Forced to 1 unless --wall-clock is given.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Training config file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path. Defaults to a name under $CAMLAB_DATA_DIR.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
    /// Per-instance time limit in seconds on the search clock.
    #[arg(long, global = true)]
    time_limit: Option<f64>,
    #[arg(long, global = true)]
    node_limit: Option<usize>,
    /// Measure time on the wall clock. Results then depend on the machine,
    /// so this is the only mode where --jobs takes effect.
    #[arg(long, global = true)]
    wall_clock: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate instances into a directory.
    Gen {
        /// setcover, cauctions, facilities or indset at desk-scale defaults.
        #[arg(long, conflicts_with = "spec")]
        family: Option<String>,
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// JSON file holding one generator spec or a list of them.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Record FSB decisions as expert samples.
    Collect {
        #[arg(long)]
        instances: Option<PathBuf>,
        /// Maximum samples per instance.
        #[arg(long, default_value_t = 10)]
        cap: usize,
    },
    /// Add shifted partners to a sample file.
    Augment {
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        instances: Option<PathBuf>,
        #[arg(long, default_value_t = 9)]
        k: usize,
        #[arg(long, default_value_t = 10.0)]
        magnitude: f64,
    },
    /// Train a policy network.
    Train {
        #[arg(long, num_args = 1..)]
        samples: Vec<PathBuf>,
        #[arg(long)]
        instances: Option<PathBuf>,
    },
    /// Compare branching policies and write a metrics CSV.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        instances: Option<PathBuf>,
        /// Any of fsb, mostfrac, pseudocost, random, learned.
        #[arg(long, value_delimiter = ',', default_value = "fsb,random")]
        policies: Vec<String>,
        #[arg(long, default_value = "desk")]
        level: String,
        /// Also write imitation accuracy on these samples.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Check that shifted instances behave identically to their originals.
    Verify {
        /// Instance directory. Without it, --generate instances are built.
        #[arg(long)]
        instances: Option<PathBuf>,
        /// Number of instances to generate, cycling through the families.
        #[arg(long, default_value_t = 20)]
        generate: usize,
        #[arg(long, default_value_t = 3)]
        shifts: usize,
        #[arg(long, default_value_t = 10.0)]
        magnitude: f64,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Usage(msg),
            other => Failure::Runtime(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = Result<(), Failure>;

#[derive(Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    schema: &'static str,
    subcommand: String,
    config: BTreeMap<String, String>,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
    schema_versions: BTreeMap<String, String>,
}

impl RunManifest {
    fn new(subcommand: &str) -> Self {
        RunManifest {
            schema: MANIFEST_SCHEMA,
            subcommand: subcommand.into(),
            config: BTreeMap::new(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            schema_versions: BTreeMap::new(),
        }
    }

    fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.insert(key.into(), value.to_string());
        self
    }

    fn schema(&mut self, what: &str, version: &str) -> &mut Self {
        self.schema_versions.insert(what.into(), version.into());
        self
    }

    fn input(&mut self, path: &Path) -> Result<&mut Self, Failure> {
        let bytes = fs::read(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(self)
    }

    fn write(&self, path: &Path) -> Outcome {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let text = serde_json::to_string_pretty(self).map_err(Error::from)?;
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// `<file>.manifest.json` beside file outputs, `manifest.json` inside
/// directory outputs.
fn manifest_path_for_file(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn data_path(given: Option<&PathBuf>, default_name: &str, what: &str) -> Result<PathBuf, Failure> {
    if let Some(p) = given {
        return Ok(p.clone());
    }
    match std::env::var_os(DATA_DIR_VAR) {
        Some(dir) => Ok(PathBuf::from(dir).join(default_name)),
        None => Err(Failure::Usage(format!(
            "no {what} given and {DATA_DIR_VAR} is not set"
        ))),
    }
}

fn is_instance_file(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "json")
        && !p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with("manifest.json"))
}

/// Instance files of a directory in file-name order.
fn instance_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = fs::read_dir(dir)
        .map_err(|e| Failure::Usage(format!("cannot read instance directory {}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry?.path();
        if is_instance_file(&p) {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Failure::Usage(format!("no instance files in {}", dir.display())));
    }
    Ok(files)
}

fn load_instances(files: &[PathBuf]) -> Result<Vec<MilpInstance>, Failure> {
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let inst = MilpInstance::load_json(f).map_err(|e| match e {
            Error::Json(j) => Failure::Usage(format!("{}: {j}", f.display())),
            other => other.into(),
        })?;
        inst.validate().into_result()?;
        out.push(inst);
    }
    Ok(out)
}

fn read_sample_file(path: &Path) -> Result<Vec<ExpertSample>, Failure> {
    read_samples(path).map_err(|e| match e {
        Error::Io(io) => Failure::Usage(format!("cannot read {}: {io}", path.display())),
        other => other.into(),
    })
}

fn bnb_config(c: &Common) -> Result<BnbConfig, Failure> {
    if let Some(t) = c.time_limit {
        if !(t > 0.0) {
            return Err(Failure::Usage(format!("--time-limit must be positive, got {t}")));
        }
    }
    Ok(BnbConfig {
        limits: BnbLimits {
            time: c.time_limit,
            nodes: c.node_limit,
        },
        clock: if c.wall_clock { Clock::Wall } else { Clock::Work },
        ..BnbConfig::default()
    })
}

fn effective_jobs(c: &Common) -> usize {
    if c.wall_clock {
        c.jobs.max(1)
    } else {
        if c.jobs > 1 {
            info!("deterministic mode: running with one job");
        }
        1
    }
}

fn record_limits(m: &mut RunManifest, c: &Common, jobs: usize) {
    m.set("clock", if c.wall_clock { "wall" } else { "work" })
        .set("jobs", jobs)
        .set("time_limit", c.time_limit.map_or("none".into(), |t| t.to_string()))
        .set("node_limit", c.node_limit.map_or("none".into(), |n| n.to_string()));
}

fn cmd_gen(c: &Common, family: Option<&str>, count: usize, spec: Option<&Path>) -> Outcome {
    let out = data_path(c.out.as_ref(), "instances", "--out")?;
    let seed = c.seed.unwrap_or(0);
    let mut m = RunManifest::new("gen");
    let specs: Vec<GenSpec> = match (spec, family) {
        (Some(path), _) => {
            m.input(path)?;
            let text = fs::read_to_string(path)?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            let list = if value.is_array() { value } else { serde_json::Value::Array(vec![value]) };
            serde_json::from_value(list).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        (None, Some(fam)) => {
            m.set("family", fam).set("count", count);
            m.seeds.insert("first_instance".into(), seed);
            (0..count as u64)
                .map(|k| GenSpec::default_for(fam, seed + k))
                .collect::<camlab::Result<_>>()?
        }
        (None, None) => return Err(Failure::Usage("gen needs --family or --spec".into())),
    };
    m.schema("instance", INSTANCE_SCHEMA);
    m.outputs.push(out.display().to_string());
    fs::create_dir_all(&out)?;
    m.write(&out.join("manifest.json"))?;

    let mut seen = HashMap::new();
    for spec in &specs {
        let inst = spec.generate()?;
        if seen.insert(inst.label.clone(), ()).is_some() {
            return Err(Failure::Usage(format!("two specs produce the label {}", inst.label)));
        }
        inst.save_json(&out.join(format!("{}.json", inst.label)))?;
    }
    println!("wrote {} instances to {}", specs.len(), out.display());
    Ok(())
}

fn cmd_collect(c: &Common, instances: Option<&PathBuf>, cap: usize) -> Outcome {
    let dir = data_path(instances, "instances", "--instances")?;
    let out = data_path(c.out.as_ref(), "samples.jsonl", "--out")?;
    if cap == 0 {
        return Err(Failure::Usage("--cap must be at least 1".into()));
    }
    let files = instance_files(&dir)?;
    let config = bnb_config(c)?;
    let mut m = RunManifest::new("collect");
    m.set("cap", cap);
    record_limits(&mut m, c, 1);
    for f in &files {
        m.input(f)?;
    }
    m.schema("instance", INSTANCE_SCHEMA).schema("samples", STATE_SCHEMA);
    m.outputs.push(out.display().to_string());
    m.write(&manifest_path_for_file(&out))?;

    let insts = load_instances(&files)?;
    let report = collect_expert_samples(&insts, cap, &config)?;
    write_samples(&out, &report.samples)?;
    println!(
        "{} samples from {} instances ({} skipped as infeasible) -> {}",
        report.samples.len(),
        insts.len(),
        report.skipped_infeasible,
        out.display()
    );
    Ok(())
}

fn cmd_augment(
    c: &Common,
    samples: Option<&PathBuf>,
    instances: Option<&PathBuf>,
    k: usize,
    magnitude: f64,
) -> Outcome {
    let input = data_path(samples, "samples.jsonl", "--samples")?;
    let dir = data_path(instances, "instances", "--instances")?;
    let out = data_path(c.out.as_ref(), "augmented.jsonl", "--out")?;
    if !(magnitude > 0.0 && magnitude.is_finite()) {
        return Err(Failure::Usage(format!("--magnitude must be positive, got {magnitude}")));
    }
    let seed = c.seed.unwrap_or(0);
    let files = instance_files(&dir)?;
    let mut m = RunManifest::new("augment");
    m.set("k", k).set("magnitude", magnitude);
    m.seeds.insert("shift".into(), seed);
    m.input(&input)?;
    for f in &files {
        m.input(f)?;
    }
    m.schema("instance", INSTANCE_SCHEMA).schema("samples", STATE_SCHEMA);
    m.outputs.push(out.display().to_string());
    m.write(&manifest_path_for_file(&out))?;

    let originals = read_sample_file(&input)?;
    if originals.iter().any(|s| s.shift.is_some()) {
        return Err(Failure::Usage(format!("{} is already augmented", input.display())));
    }
    let index = index_instances(&load_instances(&files)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = augment_interleaved(&originals, &index, k, magnitude, &mut rng)?;
    write_samples(&out, &all)?;
    println!("{} originals + {} partners -> {}", originals.len(), all.len() - originals.len(), out.display());
    Ok(())
}

fn cmd_train(c: &Common, samples: &[PathBuf], instances: Option<&PathBuf>) -> Outcome {
    let inputs = if samples.is_empty() {
        vec![data_path(None, "augmented.jsonl", "--samples")?]
    } else {
        samples.to_vec()
    };
    let dir = data_path(instances, "instances", "--instances")?;
    let out = data_path(c.out.as_ref(), "model", "--out")?;
    let mut config = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?;
            TrainConfig::from_kv(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = c.seed {
        config.seed = s;
    }
    config.validate()?;
    let files = instance_files(&dir)?;

    let mut m = RunManifest::new("train");
    for line in config.to_kv().lines() {
        if let Some((k, v)) = line.split_once('=') {
            m.set(k.trim(), v.trim());
        }
    }
    m.seeds.insert("train".into(), config.seed);
    if let Some(p) = &c.config {
        m.input(p)?;
    }
    for p in &inputs {
        m.input(p)?;
    }
    for f in &files {
        m.input(f)?;
    }
    m.schema("instance", INSTANCE_SCHEMA)
        .schema("samples", STATE_SCHEMA)
        .schema("model", MODEL_SCHEMA);
    let model_path = out.join("model.json");
    let history_path = out.join("history.csv");
    m.outputs = vec![model_path.display().to_string(), history_path.display().to_string()];
    fs::create_dir_all(&out)?;
    m.write(&out.join("manifest.json"))?;

    let mut all = Vec::new();
    for p in &inputs {
        all.extend(read_sample_file(p)?);
    }
    let index = index_instances(&load_instances(&files)?);
    let report = train(&config, &all, &index)?;
    if report.label_mismatches > 0 {
        warn!(
            "{} of {} checked shifted labels disagree with recomputed FSB",
            report.label_mismatches, report.labels_checked
        );
    }
    report.model.save_json(&model_path)?;
    fs::write(&history_path, history_csv(&report.history))?;
    println!(
        "trained on {} samples ({} partners), {} validation; best epoch {} -> {}",
        report.n_train,
        report.n_augmented,
        report.n_val,
        report.best_epoch,
        model_path.display()
    );
    Ok(())
}

fn parse_policy(name: &str, seed: u64, model: Option<&Arc<GcnnModel>>) -> Result<BranchingPolicy, Failure> {
    Ok(match name {
        "fsb" => BranchingPolicy::Fsb,
        "mostfrac" => BranchingPolicy::MostFractional,
        "pseudocost" => BranchingPolicy::Pseudocost,
        "random" => BranchingPolicy::Random { seed },
        "learned" => BranchingPolicy::Learned(Arc::clone(
            model.ok_or_else(|| Failure::Usage("policy 'learned' needs --model".into()))?,
        )),
        other => return Err(Failure::Usage(format!("unknown policy '{other}'"))),
    })
}

fn cmd_eval(
    c: &Common,
    model: Option<&PathBuf>,
    instances: Option<&PathBuf>,
    policies: &[String],
    level: &str,
    samples: Option<&PathBuf>,
) -> Outcome {
    let dir = data_path(instances, "test_instances", "--instances")?;
    let out = data_path(c.out.as_ref(), "metrics.csv", "--out")?;
    let wants_model = policies.iter().any(|p| p == "learned") || samples.is_some();
    let model_path = if wants_model {
        Some(data_path(model, "model/model.json", "--model")?)
    } else {
        model.cloned()
    };
    let seed = c.seed.unwrap_or(0);
    let jobs = effective_jobs(c);
    let config = bnb_config(c)?;
    let files = instance_files(&dir)?;

    let mut m = RunManifest::new("eval");
    m.set("policies", policies.join(",")).set("level", level);
    record_limits(&mut m, c, jobs);
    m.seeds.insert("random_policy".into(), seed);
    if let Some(p) = &model_path {
        m.input(p)?;
        m.schema("model", MODEL_SCHEMA);
    }
    if let Some(p) = samples {
        m.input(p)?;
        m.schema("samples", STATE_SCHEMA);
    }
    for f in &files {
        m.input(f)?;
    }
    m.schema("instance", INSTANCE_SCHEMA).schema("metrics", MetricsReport::SCHEMA);
    let topk_path = out.with_extension("topk.csv");
    m.outputs.push(out.display().to_string());
    if samples.is_some() {
        m.outputs.push(topk_path.display().to_string());
    }
    m.write(&manifest_path_for_file(&out))?;

    let model = match &model_path {
        Some(p) => Some(Arc::new(GcnnModel::load_json(p).map_err(|e| match e {
            Error::Io(io) => Failure::Usage(format!("cannot read {}: {io}", p.display())),
            other => other.into(),
        })?)),
        None => None,
    };
    let pols = policies
        .iter()
        .map(|p| parse_policy(p, seed, model.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    let insts = load_instances(&files)?;
    let report = compare_policies(&insts, &pols, &config, level, jobs)?;
    let csv = report.to_csv();
    fs::write(&out, &csv)?;
    print!("{csv}");

    if let (Some(p), Some(model)) = (samples, &model) {
        let data = read_sample_file(p)?;
        let originals: Vec<ExpertSample> = data.into_iter().filter(|s| s.shift.is_none()).collect();
        let acc = eval_topk(model, &originals, &[1, 5, 10])?;
        let mut text = String::from("k,accuracy\n");
        for (k, a) in acc {
            text.push_str(&format!("{k},{a:.6}\n"));
        }
        fs::write(&topk_path, &text)?;
        print!("{text}");
    }
    Ok(())
}

fn cmd_verify(c: &Common, instances: Option<&PathBuf>, generate: usize, shifts: usize, magnitude: f64) -> Outcome {
    if !(c.tol > 0.0) {
        return Err(Failure::Usage(format!("--tol must be positive, got {}", c.tol)));
    }
    if shifts == 0 {
        return Err(Failure::Usage("--shifts must be at least 1".into()));
    }
    let seed = c.seed.unwrap_or(0);
    let jobs = effective_jobs(c);
    let config = bnb_config(c)?;
    let mut m = RunManifest::new("verify");
    m.set("shifts", shifts).set("magnitude", magnitude).set("tol", c.tol);
    record_limits(&mut m, c, jobs);
    m.seeds.insert("shift".into(), seed);
    let insts = match instances {
        Some(dir) => {
            let files = instance_files(dir)?;
            for f in &files {
                m.input(f)?;
            }
            load_instances(&files)?
        }
        None => {
            m.set("generate", generate);
            const FAMILIES: [&str; 4] = ["setcover", "cauctions", "facilities", "indset"];
            (0..generate)
                .map(|k| GenSpec::default_for(FAMILIES[k % 4], seed + (k / 4) as u64).and_then(|g| g.generate()))
                .collect::<camlab::Result<Vec<_>>>()?
        }
    };
    m.schema("instance", INSTANCE_SCHEMA);
    if let Some(out) = &c.out {
        m.outputs.push(out.display().to_string());
        m.write(&manifest_path_for_file(out))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(insts.len() * shifts);
    for inst in &insts {
        for _ in 0..shifts {
            pairs.push((inst, sample_shift(inst, magnitude, &mut rng)?));
        }
    }
    let reports = par_map(&pairs, jobs, |(inst, s)| verify_pair(inst, s, c.tol, &config))
        .into_iter()
        .collect::<camlab::Result<Vec<_>>>()?;
    let mut failed = 0;
    for r in &reports {
        if let Some(why) = r.failure() {
            failed += 1;
            println!("FAIL {}: {why}", r.instance);
        }
    }
    if let Some(out) = &c.out {
        let mut text = String::new();
        for r in &reports {
            text.push_str(&serde_json::to_string(r).map_err(Error::from)?);
            text.push('\n');
        }
        fs::write(out, text)?;
    }
    println!("{}/{} pass", reports.len() - failed, reports.len());
    if failed > 0 {
        return Err(Failure::Verification(format!("{failed} pairs failed")));
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    let c = &cli.common;
    match &cli.cmd {
        Cmd::Gen { family, count, spec } => cmd_gen(c, family.as_deref(), *count, spec.as_deref()),
        Cmd::Collect { instances, cap } => cmd_collect(c, instances.as_ref(), *cap),
        Cmd::Augment {
            samples,
            instances,
            k,
            magnitude,
        } => cmd_augment(c, samples.as_ref(), instances.as_ref(), *k, *magnitude),
        Cmd::Train { samples, instances } => cmd_train(c, samples, instances.as_ref()),
        Cmd::Eval {
            model,
            instances,
            policies,
            level,
            samples,
        } => cmd_eval(c, model.as_ref(), instances.as_ref(), policies, level, samples.as_ref()),
        Cmd::Verify {
            instances,
            generate,
            shifts,
            magnitude,
        } => cmd_verify(c, instances.as_ref(), *generate, *shifts, *magnitude),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
    }
}
