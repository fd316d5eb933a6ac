//! Benchmark harness: repeated seeded engine runs, aggregated per cell.
//!
//! A cell is one (model, strategy, target) combination, where the target is
//! either a coverage threshold or a mutant. Every run gets its own seed derived
//! from the master seed and the run's coordinates, so results do not depend on
//! execution order or on the number of worker threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aut::{parse_aut, write_aut, AutError};
use crate::engine::{self, coverage_goal, EngineConfig, EngineError};
use crate::generator::{gen_model, gen_mutants, GenError, GenParams};
use crate::iolts::Iolts;
use crate::sim::{Simulator, TimeMode};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Aut { path: PathBuf, source: AutError },
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error("run {run} of {model}/{strategy}/{target}: {source}")]
    Engine { model: String, strategy: String, target: String, run: usize, source: EngineError },
    #[error("invalid bench spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Where a benchmark model comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    File(PathBuf),
    /// A specification file with mutant files to test against it.
    WithMutants { path: PathBuf, mutants: Vec<PathBuf> },
    Generate(GenParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub models: Vec<ModelSource>,
    pub strategies: Vec<EngineConfig>,
    pub runs_per_cell: usize,
    #[serde(default)]
    pub coverage_thresholds: Vec<f64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Mutants synthesized for models that come without mutant files.
    #[serde(default = "default_synth_mutants")]
    pub synth_mutants: usize,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("bench-out")
}

fn default_synth_mutants() -> usize {
    5
}

impl BenchSpec {
    pub fn check(&self, coverage: bool) -> Result<(), BenchError> {
        if self.runs_per_cell == 0 {
            return Err(BenchError::Spec("runs_per_cell must be at least 1".into()));
        }
        if self.models.is_empty() || self.strategies.is_empty() {
            return Err(BenchError::Spec("need at least one model and one strategy".into()));
        }
        if coverage {
            let t = &self.coverage_thresholds;
            if t.is_empty() {
                return Err(BenchError::Spec("need at least one coverage threshold".into()));
            }
            if t.windows(2).any(|w| w[0] >= w[1]) || t.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
                return Err(BenchError::Spec("thresholds must be strictly increasing within (0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// A loaded benchmark model with its mutants, if any.
#[derive(Clone, Debug)]
pub struct ModelEntry {
    pub id: String,
    pub model: Arc<Iolts>,
    pub mutants: Vec<(String, Arc<Iolts>)>,
}

impl ModelEntry {
    pub fn new(id: impl Into<String>, model: Iolts) -> Self {
        ModelEntry { id: id.into(), model: Arc::new(model), mutants: Vec::new() }
    }
}

pub fn read_model(path: &Path) -> Result<Iolts, BenchError> {
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io { path: path.into(), source })?;
    let model = parse_aut(&text).map_err(|source| BenchError::Aut { path: path.into(), source })?;
    if model.has_delta() {
        Ok(model)
    } else {
        model.delta_completion().map_err(|e| BenchError::Aut { path: path.into(), source: AutError::Model(e) })
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Loads (or generates) every model of `spec`. With `mutants`, models without
/// mutant files get `spec.synth_mutants` synthesized ones.
pub fn load_models(spec: &BenchSpec, mutants: bool) -> Result<Vec<ModelEntry>, BenchError> {
    let mut entries = Vec::new();
    for (k, source) in spec.models.iter().enumerate() {
        let mut entry = match source {
            ModelSource::File(path) => ModelEntry::new(stem(path), read_model(path)?),
            ModelSource::WithMutants { path, mutants: files } => {
                let mut e = ModelEntry::new(stem(path), read_model(path)?);
                for f in files {
                    e.mutants.push((stem(f), Arc::new(read_model(f)?)));
                }
                e
            }
            ModelSource::Generate(params) => {
                let g = gen_model(params)?;
                let id = format!("gen-N{}-L{}-r{}-p{}-s{}", params.n, params.lambda, params.r, params.p, g.seed);
                ModelEntry::new(id, g.model)
            }
        };
        if mutants && entry.mutants.is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(spec.seed, &[k as u64, u64::MAX]));
            for (i, m) in gen_mutants(&entry.model, spec.synth_mutants, &mut rng)?.into_iter().enumerate() {
                entry.mutants.push((format!("m{}", i + 1), Arc::new(m.model)));
            }
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// How cells are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Executor {
    Sequential,
    /// Uses a thread pool of `jobs` workers (all cores if `None`). Falls back
    /// to sequential execution when built without the `parallel` feature.
    #[default]
    Parallel,
}

/// Maps `f` over `items` in order-preserving fashion.
pub fn execute<T, R, F>(items: &[T], exec: Executor, jobs: Option<usize>, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Executor::Sequential => items.iter().map(f).collect(),
        Executor::Parallel => parallel_map(items, jobs, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: &[T], jobs: Option<usize>, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    let run = || items.par_iter().map(&f).collect();
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(run),
        None => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: &[T], _jobs: Option<usize>, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for one run, hashed from the master seed and the run's coordinates.
pub fn cell_seed(master: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(splitmix(master), |h, &c| splitmix(h ^ splitmix(c)))
}

/// Outcome of a single run. `transitions` is `None` for censored runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub strategy: String,
    pub target: String,
    pub run: usize,
    pub seed: u64,
    pub transitions: Option<u64>,
    #[serde(skip)]
    key: (usize, usize, usize),
}

/// Per-cell statistics over the uncensored runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub model: String,
    pub strategy: String,
    pub target: String,
    pub mean_transitions: Option<f64>,
    pub sd_transitions: Option<f64>,
    pub runs: usize,
    pub censored: usize,
}

struct Job<'a> {
    entry: &'a ModelEntry,
    imp: &'a Arc<Iolts>,
    cfg: EngineConfig,
    strategy: String,
    target: String,
    run: usize,
    key: (usize, usize, usize),
}

fn run_job(job: &Job, master: u64) -> Result<(RunRecord, engine::RunReport), BenchError> {
    let seed = cell_seed(master, &[job.key.0 as u64, job.key.2 as u64, job.key.1 as u64, job.run as u64]);
    let cfg = EngineConfig { seed, ..job.cfg.clone() };
    let fail = |source: EngineError| BenchError::Engine {
        model: job.entry.id.clone(),
        strategy: job.strategy.clone(),
        target: job.target.clone(),
        run: job.run,
        source,
    };
    let mut sim = Simulator::new(job.imp.clone(), TimeMode::Logical, splitmix(seed))
        .map_err(|e| fail(EngineError::Port(e.into())))?;
    let report = engine::run(&job.entry.model, &mut sim, &cfg).map_err(fail)?;
    let record = RunRecord {
        model: job.entry.id.clone(),
        strategy: job.strategy.clone(),
        target: job.target.clone(),
        run: job.run,
        seed,
        transitions: None,
        key: job.key,
    };
    Ok((record, report))
}

/// Runs every strategy `runs` times on every model against a conforming
/// simulator and records when each threshold was first reached.
pub fn bench_coverage(
    models: &[ModelEntry],
    strategies: &[EngineConfig],
    thresholds: &[f64],
    runs: usize,
    master: u64,
    exec: Executor,
    jobs: Option<usize>,
) -> Result<Vec<RunRecord>, BenchError> {
    let top = thresholds.iter().copied().fold(0.0, f64::max);
    let mut work = Vec::new();
    for (mi, entry) in models.iter().enumerate() {
        for (si, cfg) in strategies.iter().enumerate() {
            for run in 0..runs {
                work.push(Job {
                    entry,
                    imp: &entry.model,
                    cfg: EngineConfig { coverage_target: Some(top), ..cfg.clone() },
                    strategy: cfg.strategy.id(),
                    target: String::new(),
                    run,
                    key: (mi, si, 0),
                });
            }
        }
    }
    let results = execute(&work, exec, jobs, |job| -> Result<Vec<RunRecord>, BenchError> {
        let (record, report) = run_job(job, master)?;
        let n = job.entry.model.state_count();
        Ok(thresholds
            .iter()
            .enumerate()
            .map(|(ti, &t)| RunRecord {
                target: t.to_string(),
                transitions: report.transitions_to_reach(coverage_goal(t, n)),
                key: (record.key.0, record.key.1, ti),
                ..record.clone()
            })
            .collect::<Vec<_>>())
    });
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    sort_records(&mut records);
    Ok(records)
}

/// Runs every strategy `runs` times against every mutant of every model and
/// records the number of transitions up to and including the failing
/// observation. Strategies' coverage targets are ignored.
pub fn bench_mutants(
    models: &[ModelEntry],
    strategies: &[EngineConfig],
    runs: usize,
    master: u64,
    exec: Executor,
    jobs: Option<usize>,
) -> Result<Vec<RunRecord>, BenchError> {
    let mut work = Vec::new();
    for (mi, entry) in models.iter().enumerate() {
        for (ki, (mutant, imp)) in entry.mutants.iter().enumerate() {
            for (si, cfg) in strategies.iter().enumerate() {
                for run in 0..runs {
                    work.push(Job {
                        entry,
                        imp,
                        cfg: EngineConfig { coverage_target: None, ..cfg.clone() },
                        strategy: cfg.strategy.id(),
                        target: mutant.clone(),
                        run,
                        key: (mi, si, ki),
                    });
                }
            }
        }
    }
    let results = execute(&work, exec, jobs, |job| -> Result<RunRecord, BenchError> {
        let (mut record, report) = run_job(job, master)?;
        record.target = job.target.clone();
        record.transitions = report.verdict.is_fail().then_some(report.transitions_taken + 1);
        Ok(record)
    });
    let mut records = results.into_iter().collect::<Result<Vec<_>, BenchError>>()?;
    sort_records(&mut records);
    Ok(records)
}

fn sort_records(records: &mut [RunRecord]) {
    records.sort_by_key(|r| (r.key.0, r.key.2, r.key.1, r.run));
}

/// Sample mean and standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, sd))
}

/// Groups records into cells, keeping the records' order.
pub fn aggregate(records: &[RunRecord]) -> Vec<StatRow> {
    let mut cells: BTreeMap<(usize, usize, usize), (StatRow, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let (row, values) = cells.entry((r.key.0, r.key.2, r.key.1)).or_insert_with(|| {
            (
                StatRow {
                    model: r.model.clone(),
                    strategy: r.strategy.clone(),
                    target: r.target.clone(),
                    mean_transitions: None,
                    sd_transitions: None,
                    runs: 0,
                    censored: 0,
                },
                Vec::new(),
            )
        });
        match r.transitions {
            Some(t) => {
                row.runs += 1;
                values.push(t as f64);
            }
            None => row.censored += 1,
        }
    }
    cells
        .into_values()
        .map(|(mut row, values)| {
            if let Some((m, s)) = mean_sd(&values) {
                row.mean_transitions = Some(m);
                row.sd_transitions = Some(s);
            }
            row
        })
        .collect()
}

/// Per strategy, the arithmetic mean of the per-cell means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyMean {
    pub strategy: String,
    pub mean_of_means: Option<f64>,
    pub cells: usize,
    pub censored_runs: usize,
}

pub fn strategy_means(rows: &[StatRow]) -> Vec<StrategyMean> {
    let mut order = Vec::new();
    let mut by: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for row in rows {
        if !by.contains_key(&row.strategy) {
            order.push(row.strategy.clone());
        }
        let (means, censored) = by.entry(row.strategy.clone()).or_default();
        means.extend(row.mean_transitions);
        *censored += row.censored;
    }
    order
        .into_iter()
        .map(|s| {
            let (means, censored_runs) = &by[&s];
            StrategyMean {
                strategy: s.clone(),
                mean_of_means: mean_sd(means).map(|(m, _)| m),
                cells: means.len(),
                censored_runs: *censored_runs,
            }
        })
        .collect()
}

pub const CSV_HEADER: [&str; 7] =
    ["model", "strategy", "target", "mean_transitions", "sd_transitions", "runs", "censored"];

pub fn write_rows_csv<W: io::Write>(rows: &[StatRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    w.flush().map_err(|source| BenchError::Io { path: PathBuf::from("<csv>"), source })?;
    Ok(())
}

pub fn write_runs_csv<W: io::Write>(records: &[RunRecord], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| BenchError::Io { path: PathBuf::from("<csv>"), source })?;
    Ok(())
}

/// Gnuplot data for the coverage plot: one block per (model, strategy)
/// series with columns `threshold mean sd`.
pub fn coverage_plot_data(rows: &[StatRow]) -> (String, Vec<String>) {
    let mut series: Vec<(String, Vec<&StatRow>)> = Vec::new();
    for row in rows {
        let name = format!("{} {}", row.model, row.strategy);
        match series.iter_mut().find(|(n, _)| *n == name) {
            Some((_, v)) => v.push(row),
            None => series.push((name, vec![row])),
        }
    }
    let mut data = String::new();
    let mut names = Vec::new();
    for (name, rows) in series {
        let _ = writeln!(data, "# {name}");
        for r in rows {
            if let (Some(m), Some(s)) = (r.mean_transitions, r.sd_transitions) {
                let pct = r.target.parse::<f64>().unwrap_or(f64::NAN) * 100.0;
                let _ = writeln!(data, "{pct} {m} {s}");
            }
        }
        data.push_str("\n\n");
        names.push(name);
    }
    (data, names)
}

/// A gnuplot script drawing each series' mean dashed and mean ± sd dotted.
pub fn gnuplot_script(data_file: &str, names: &[String], png: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output '{png}'");
    let _ = writeln!(s, "set xlabel 'states covered (%)'");
    let _ = writeln!(s, "set ylabel 'transitions'");
    let _ = writeln!(s, "set key top left");
    let mut plots = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let c = i + 1;
        plots.push(format!("'{data_file}' index {i} using 1:2 with lines dt 2 lc {c} title '{name}'"));
        plots.push(format!("'{data_file}' index {i} using 1:($2-$3) with lines dt 3 lc {c} notitle"));
        plots.push(format!("'{data_file}' index {i} using 1:($2+$3) with lines dt 3 lc {c} notitle"));
    }
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), BenchError> {
    fs::write(path, contents).map_err(|source| BenchError::Io { path: path.into(), source })
}

fn create(path: &Path) -> Result<fs::File, BenchError> {
    fs::File::create(path).map_err(|source| BenchError::Io { path: path.into(), source })
}

/// Files written by a benchmark.
#[derive(Clone, Debug, Default, Serialize)]
pub struct BenchOutput {
    pub rows: Vec<StatRow>,
    pub strategies: Vec<StrategyMean>,
    pub files: Vec<PathBuf>,
}

fn prepare(out_dir: &Path, models: &[ModelEntry]) -> Result<Vec<PathBuf>, BenchError> {
    fs::create_dir_all(out_dir).map_err(|source| BenchError::Io { path: out_dir.into(), source })?;
    let mut files = Vec::new();
    let dir = out_dir.join("models");
    fs::create_dir_all(&dir).map_err(|source| BenchError::Io { path: dir.clone(), source })?;
    for e in models {
        let p = dir.join(format!("{}.aut", e.id));
        write_file(&p, write_aut(&e.model))?;
        files.push(p);
    }
    Ok(files)
}

fn finish(out_dir: &Path, name: &str, records: &[RunRecord], mut files: Vec<PathBuf>) -> Result<BenchOutput, BenchError> {
    let rows = aggregate(records);
    let stats = out_dir.join(format!("{name}.csv"));
    write_rows_csv(&rows, create(&stats)?)?;
    let runs = out_dir.join(format!("{name}-runs.csv"));
    write_runs_csv(records, create(&runs)?)?;
    let strategies = strategy_means(&rows);
    let summary = out_dir.join(format!("{name}-summary.json"));
    write_file(&summary, serde_json::to_string_pretty(&strategies)?)?;
    files.extend([stats, runs, summary]);
    Ok(BenchOutput { rows, strategies, files })
}

/// The coverage benchmark described by `spec`, with output files.
pub fn run_coverage_spec(spec: &BenchSpec, exec: Executor, jobs: Option<usize>) -> Result<BenchOutput, BenchError> {
    spec.check(true)?;
    let models = load_models(spec, false)?;
    let files = prepare(&spec.out_dir, &models)?;
    let records =
        bench_coverage(&models, &spec.strategies, &spec.coverage_thresholds, spec.runs_per_cell, spec.seed, exec, jobs)?;
    let mut out = finish(&spec.out_dir, "coverage", &records, files)?;
    let (data, names) = coverage_plot_data(&out.rows);
    let dat = spec.out_dir.join("coverage.dat");
    write_file(&dat, data)?;
    let gp = spec.out_dir.join("coverage.gp");
    write_file(&gp, gnuplot_script("coverage.dat", &names, "coverage.png"))?;
    out.files.extend([dat, gp]);
    Ok(out)
}

/// The mutation benchmark described by `spec`, with output files.
pub fn run_mutants_spec(spec: &BenchSpec, exec: Executor, jobs: Option<usize>) -> Result<BenchOutput, BenchError> {
    spec.check(false)?;
    let models = load_models(spec, true)?;
    let mut files = prepare(&spec.out_dir, &models)?;
    for e in &models {
        for (id, m) in &e.mutants {
            let p = spec.out_dir.join("models").join(format!("{}-{id}.aut", e.id));
            write_file(&p, write_aut(m))?;
            files.push(p);
        }
    }
    let records = bench_mutants(&models, &spec.strategies, spec.runs_per_cell, spec.seed, exec, jobs)?;
    finish(&spec.out_dir, "mutants", &records, files)
}
