use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use pair_core::engine::{derive_seed, offline_selector, run, EngineConfig, RunMeta, RunRecord, StrategyKind};
use pair_core::llm::{ApiKey, ExecutionMode, HttpTransport, LlmSelector, ModelEndpointConfig, API_KEY_ENV};
use pair_core::metrics::{emit_reports, summarize, CellKey};
use pair_core::selection::{MockWeights, Selector};
use pair_core::tsp::{generate_clu, generate_rue, ClusterParams, Family, TspInstance, DEFAULT_EXTENT};
use rayon::prelude::*;

use crate::error::CliError;
use crate::settings::KvConfig;
use crate::{CompareArgs, EndpointArgs, EngineArgs, GenArgs, ReportArgs, RunArgs};

pub const INSTANCE_DIR: &str = "instances";
pub const RUN_DIR: &str = "runs";
pub const REPORT_DIR: &str = "report";

/// Files written by one command, relative to the output root.
#[derive(Debug, Default)]
pub struct Manifest {
    root: PathBuf,
    entries: Vec<PathBuf>,
}

impl Manifest {
    fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf(), entries: Vec::new() }
    }

    fn add(&mut self, path: &Path) {
        let rel = path.strip_prefix(&self.root).unwrap_or(path).to_path_buf();
        self.entries.push(rel);
    }

    /// Writes `manifest.<command>.txt` and prints every entry.
    fn finish(mut self, command: &str) -> Result<(), CliError> {
        self.entries.sort();
        self.entries.dedup();
        let path = self.root.join(format!("manifest.{command}.txt"));
        let mut text = String::new();
        for e in &self.entries {
            text.push_str(&e.display().to_string());
            text.push('\n');
        }
        write_atomic(&path, &text)?;
        print!("{text}");
        Ok(())
    }
}

/// Writes through a temporary sibling so an interrupted write leaves no half file.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents).map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))
}

fn core_config_error(e: pair_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn build_instance(
    family: Family,
    n: usize,
    seed: u64,
    extent: f64,
    clusters: Option<ClusterParams>,
) -> Result<TspInstance, CliError> {
    let mut inst = match family {
        Family::Rue => generate_rue(n, seed, extent),
        Family::Clu => generate_clu(n, clusters.unwrap_or_else(|| ClusterParams::defaults(n, extent)), seed, extent),
    }
    .map_err(core_config_error)?;
    inst.solve_optimal().map_err(core_config_error)?;
    Ok(inst)
}

fn instance_path(out: &Path, id: &str) -> PathBuf {
    out.join(INSTANCE_DIR).join(format!("{id}.tsp"))
}

pub fn load_instance(path: &Path) -> Result<TspInstance, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read instance {}: {e}", path.display())))?;
    TspInstance::from_text(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::Config("--count must be at least 1".into()));
    }
    let extent = args.extent.unwrap_or(DEFAULT_EXTENT);
    let clusters = match (args.clusters, args.spread) {
        (None, None) => None,
        (c, s) => {
            let d = ClusterParams::defaults(args.n, extent);
            Some(ClusterParams { clusters: c.unwrap_or(d.clusters), spread: s.unwrap_or(d.spread) })
        }
    };
    let mut manifest = Manifest::new(&args.out);
    for i in 0..args.count as u64 {
        let inst = build_instance(args.family, args.n, args.seed + i, extent, clusters)?;
        let path = instance_path(&args.out, inst.id());
        write_atomic(&path, &inst.to_text())?;
        manifest.add(&path);
    }
    manifest.finish("gen")
}

/// Engine and endpoint settings shared by `run` and `compare`.
struct Resolved {
    engine: EngineConfig,
    master_seed: u64,
    endpoint: Option<ModelEndpointConfig>,
}

fn resolve(
    cfg: &KvConfig,
    engine: &EngineArgs,
    endpoint: &EndpointArgs,
    strategies: &[StrategyKind],
) -> Result<Resolved, CliError> {
    let defaults = EngineConfig::default();
    let mode: ExecutionMode = cfg.pick(engine.mode, "mode", defaults.mode)?;
    let config = EngineConfig {
        population_size: cfg.pick(engine.population, "population", defaults.population_size)?,
        max_generations: cfg.pick(engine.generations, "generations", defaults.max_generations)?,
        strategy: strategies.first().copied().unwrap_or(defaults.strategy),
        mode,
        seed: 0,
        early_stop_on_optimal: cfg.pick(engine.early_stop, "early_stop", defaults.early_stop_on_optimal)?,
        offspring_per_generation: None,
        base_temperature: cfg.pick(engine.base_temperature, "base_temperature", defaults.base_temperature)?,
        fallback_to_mock: cfg.pick(engine.fallback_to_mock, "fallback_to_mock", defaults.fallback_to_mock)?,
        mock_weights: MockWeights::default(),
    };
    for &strategy in strategies {
        EngineConfig { strategy, ..config.clone() }.validate().map_err(CliError::Config)?;
    }
    let master_seed = cfg.pick(engine.seed, "seed", 0)?;

    let endpoint = if strategies.iter().any(|s| s.needs_model()) {
        let base_url = cfg
            .pick_opt(endpoint.base_url.clone(), "base_url")?
            .ok_or_else(|| CliError::Config("pair_llm needs --base-url".into()))?;
        let model_name = cfg
            .pick_opt(endpoint.model.clone(), "model")?
            .ok_or_else(|| CliError::Config("pair_llm needs --model".into()))?;
        let mut ep = ModelEndpointConfig { base_url, model_name, ..Default::default() };
        ep.api_key = ApiKey::from_env(API_KEY_ENV);
        if ep.api_key.is_none() {
            log::warn!("{API_KEY_ENV} is not set; requests are sent without credentials");
        }
        if let Some(ms) = cfg.pick_opt(endpoint.timeout_ms, "timeout_ms")? {
            ep.timeout = Duration::from_millis(ms);
        }
        ep.max_retries = cfg.pick(endpoint.max_retries, "max_retries", ep.max_retries)?;
        ep.max_requeries_per_generation =
            cfg.pick(endpoint.max_requeries, "max_requeries", ep.max_requeries_per_generation)?;
        Some(ep)
    } else {
        None
    };
    Ok(Resolved { engine: config, master_seed, endpoint })
}

fn model_label(strategy: StrategyKind, endpoint: Option<&ModelEndpointConfig>) -> String {
    match strategy {
        StrategyKind::PairLlm => endpoint.map(|e| e.model_name.clone()).unwrap_or_default(),
        StrategyKind::PairMock => "mock".into(),
        StrategyKind::RandomLmea => "none".into(),
    }
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' }).collect()
}

/// One cell of work: an instance run under one strategy.
#[derive(Debug, Clone)]
struct Job {
    instance: usize,
    strategy: StrategyKind,
    repeat: usize,
}

struct JobResult {
    path: PathBuf,
    record: RunRecord,
    failure: Option<CliError>,
    executed: bool,
}

fn run_id(inst: &TspInstance, strategy: StrategyKind, label: &str, master_seed: u64, repeat: usize) -> String {
    file_safe(&format!("{}.{strategy}.{label}.s{master_seed}.r{repeat}", inst.id()))
}

fn run_seed(master_seed: u64, inst: &TspInstance, repeat: usize) -> u64 {
    if repeat == 0 {
        derive_seed(master_seed, inst.id())
    } else {
        derive_seed(master_seed, &format!("{}/{repeat}", inst.id()))
    }
}

fn make_selector(strategy: StrategyKind, resolved: &Resolved) -> (Box<dyn Selector>, Option<String>) {
    match strategy {
        StrategyKind::PairLlm => {
            let endpoint = resolved.endpoint.clone().expect("endpoint resolved for pair_llm");
            let transport = Box::new(HttpTransport::new(&endpoint));
            let selector = LlmSelector::new(endpoint, transport, resolved.engine.mode);
            let checksum = selector.templates.checksum();
            (Box::new(selector), Some(checksum))
        }
        other => (offline_selector(other, resolved.engine.mock_weights).expect("offline strategy"), None),
    }
}

fn load_record(path: &Path) -> Result<RunRecord, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    RunRecord::from_jsonl(&text).map_err(|e| CliError::Record { path: path.to_path_buf(), msg: e.to_string() })
}

fn execute(
    job: &Job,
    instances: &[TspInstance],
    resolved: &Resolved,
    out: &Path,
    resume: bool,
) -> Result<JobResult, CliError> {
    let inst = &instances[job.instance];
    let label = model_label(job.strategy, resolved.endpoint.as_ref());
    let id = run_id(inst, job.strategy, &label, resolved.master_seed, job.repeat);
    let path = out.join(RUN_DIR).join(format!("{id}.jsonl"));
    if resume && path.exists() {
        match load_record(&path) {
            Ok(record) if record.completed => {
                log::info!("{id}: complete record found, skipping");
                return Ok(JobResult { path, record, failure: None, executed: false });
            }
            Ok(_) => log::info!("{id}: previous attempt did not complete, running again"),
            Err(e) => log::warn!("{e}; running again"),
        }
    }
    let config = EngineConfig {
        strategy: job.strategy,
        seed: run_seed(resolved.master_seed, inst, job.repeat),
        ..resolved.engine.clone()
    };
    let (mut selector, prompt_checksum) = make_selector(job.strategy, resolved);
    let meta = RunMeta { run_id: id.clone(), model_label: label, prompt_checksum };
    let (record, failure) = match run(inst, &config, selector.as_mut(), meta) {
        Ok(record) => (record, None),
        Err(err) => {
            let failure = CliError::from_run(&err.source, &id);
            log::error!("{failure}");
            (*err.partial, Some(failure))
        }
    };
    // a failed run keeps whatever it recorded
    write_atomic(&path, &record.to_jsonl())?;
    log::info!("{id}: {} generations in {:.2?}", record.generations.len(), record.duration);
    Ok(JobResult { path, record, failure, executed: true })
}

fn run_jobs(
    jobs: &[Job],
    instances: &[TspInstance],
    resolved: &Resolved,
    out: &Path,
    workers: usize,
    resume: bool,
) -> Result<Vec<JobResult>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| jobs.par_iter().map(|job| execute(job, instances, resolved, out, resume)).collect())
}

fn write_timing(out: &Path, command: &str, results: &[JobResult], manifest: &mut Manifest) -> Result<(), CliError> {
    let mut text = String::from("run_id,seconds\n");
    for r in results.iter().filter(|r| r.executed) {
        text.push_str(&format!("{},{:.3}\n", r.record.run_id, r.record.duration.as_secs_f64()));
    }
    let path = out.join(format!("timing.{command}.csv"));
    write_atomic(&path, &text)?;
    manifest.add(&path);
    Ok(())
}

/// Rebuilds every report file from the records under `out/runs`.
fn rebuild_report(out: &Path, extra_cells: &[CellKey], manifest: &mut Manifest) -> Result<(), CliError> {
    let records = load_all_records(out)?;
    if records.is_empty() {
        log::warn!("no run records under {}", out.join(RUN_DIR).display());
    }
    let mut expected: Vec<CellKey> = records.iter().map(RunRecord::cell_key).collect();
    expected.extend_from_slice(extra_cells);
    let summary = summarize(&records, &expected).map_err(|e| CliError::Strategy(e.to_string()))?;
    let report = out.join(REPORT_DIR);
    let written = emit_reports(&summary, &records, &report).map_err(|e| match e {
        pair_core::metrics::EmitError::Io(r) => CliError::Io { path: r.path, source: r.source },
        other => CliError::Strategy(other.to_string()),
    })?;
    for p in &written {
        manifest.add(p);
    }
    Ok(())
}

fn load_all_records(out: &Path) -> Result<Vec<RunRecord>, CliError> {
    let dir = out.join(RUN_DIR);
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(CliError::io(&dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_record(p)).collect()
}

fn first_failure(results: Vec<JobResult>) -> Result<(), CliError> {
    match results.into_iter().find_map(|r| r.failure) {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = KvConfig::optional(args.config.as_deref())?;
    let strategy = cfg.pick(args.strategy, "strategy", StrategyKind::PairMock)?;
    let resolved = resolve(&cfg, &args.engine, &args.endpoint, &[strategy])?;
    let inst = load_instance(&args.instance)?;
    if resolved.engine.early_stop_on_optimal && inst.optimal_length().is_none() {
        return Err(CliError::Config(format!(
            "{} has no optimal_length; use --early-stop false or regenerate it with `pair gen`",
            args.instance.display()
        )));
    }
    let mut manifest = Manifest::new(&args.out);
    let results = run_jobs(&[Job { instance: 0, strategy, repeat: 0 }], &[inst], &resolved, &args.out, 1, false)?;
    for r in &results {
        manifest.add(&r.path);
    }
    write_timing(&args.out, "run", &results, &mut manifest)?;
    rebuild_report(&args.out, &[], &mut manifest)?;
    manifest.finish("run")?;
    first_failure(results)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let cfg = KvConfig::optional(args.config.as_deref())?;
    let strategies: Vec<StrategyKind> =
        cfg.pick_list(args.strategies.clone(), "strategies", vec![StrategyKind::PairMock, StrategyKind::RandomLmea])?;
    let families: Vec<Family> = cfg.pick_list(args.families.clone(), "families", vec![Family::Rue, Family::Clu])?;
    let node_counts: Vec<usize> = cfg.pick_list(args.node_counts.clone(), "node_counts", vec![10, 15, 20, 25])?;
    let per_cell: usize = cfg.pick(args.instances, "instances", 5)?;
    let repeats: usize = cfg.pick(args.runs_per_instance, "runs_per_instance", 1)?;
    let workers: usize = cfg.pick(args.jobs, "jobs", 1)?;
    if strategies.is_empty() || families.is_empty() || node_counts.is_empty() {
        return Err(CliError::Config("strategies, families and node_counts must be nonempty".into()));
    }
    if per_cell == 0 || repeats == 0 {
        return Err(CliError::Config("instances and runs_per_instance must be at least 1".into()));
    }
    let resolved = resolve(&cfg, &args.engine, &args.endpoint, &strategies)?;
    let instance_seed: u64 = cfg.pick(args.instance_seed, "instance_seed", resolved.master_seed)?;
    let mut manifest = Manifest::new(&args.out);

    let specs: Vec<(Family, usize, u64)> = families
        .iter()
        .flat_map(|&f| {
            node_counts.iter().flat_map(move |&n| (0..per_cell as u64).map(move |i| (f, n, instance_seed + i)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    let instances: Vec<TspInstance> = pool.install(|| {
        specs.par_iter().map(|&(family, n, seed)| obtain_instance(&args.out, family, n, seed)).collect::<Result<_, _>>()
    })?;
    for inst in &instances {
        manifest.add(&instance_path(&args.out, inst.id()));
    }

    let jobs: Vec<Job> = (0..instances.len())
        .flat_map(|i| {
            strategies
                .iter()
                .flat_map(move |&strategy| (0..repeats).map(move |repeat| Job { instance: i, strategy, repeat }))
        })
        .collect();
    let results = run_jobs(&jobs, &instances, &resolved, &args.out, workers, true)?;
    for r in &results {
        manifest.add(&r.path);
    }
    let cells: Vec<CellKey> = results.iter().map(|r| r.record.cell_key()).collect();
    write_timing(&args.out, "compare", &results, &mut manifest)?;
    rebuild_report(&args.out, &cells, &mut manifest)?;
    manifest.finish("compare")?;
    first_failure(results)
}

/// Reads an instance written by an earlier grid, or generates and solves it.
fn obtain_instance(out: &Path, family: Family, n: usize, seed: u64) -> Result<TspInstance, CliError> {
    let id = format!("{family}-{n}-{seed}");
    let path = instance_path(out, &id);
    if path.exists() {
        let inst = load_instance(&path)?;
        if inst.optimal_length().is_some() {
            return Ok(inst);
        }
    }
    let inst = build_instance(family, n, seed, DEFAULT_EXTENT, None)?;
    write_atomic(&path, &inst.to_text())?;
    Ok(inst)
}

pub fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let mut manifest = Manifest::new(&args.out);
    rebuild_report(&args.out, &[], &mut manifest)?;
    manifest.finish("report")
}
