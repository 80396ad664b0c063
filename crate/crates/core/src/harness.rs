//! Seeded parameter sweeps.
//!
//! A [`SweepSpec`] expands into the Cartesian product of its axes times the
//! repetition count. Run seeds depend only on the base seed and the position
//! of the run in that product, so skipped points never shift other seeds.
//! Runs execute on a worker pool; results stream through a single writer that
//! appends and flushes one CSV row per finished run.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{simulate, NeighborReads, SimOptions, UpdateOrder};
use crate::error::{Error, Result};
use crate::graphs::{degree_from_removal, generate_geometric, generate_k_regular, Topology, DEFAULT_MAX_RETRIES};
use crate::metrics::{RunRecord, DEFAULT_CLUSTER_GAP, DEFAULT_SUCCESS_THRESHOLD, RUN_RECORD_HEADER};
use crate::model::ModelParams;
use crate::rng::derive_run_seed;

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ISSUES_FILE: &str = "issues.log";

/// How the interaction graph of each run is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TopologyAxis {
    /// All-to-all coupling.
    Complete,
    /// Random geometric graphs, one per listed range.
    Geometric { ranges: Vec<f64> },
    /// Connected random k-regular graphs, one per listed degree.
    Regular { degrees: Vec<usize> },
    /// Connected random regular graphs of degree `N - 1 - floor(level * N)`.
    Removal { levels: Vec<f64> },
}

impl TopologyAxis {
    fn len(&self) -> usize {
        match self {
            TopologyAxis::Complete => 1,
            TopologyAxis::Geometric { ranges } => ranges.len(),
            TopologyAxis::Regular { degrees } => degrees.len(),
            TopologyAxis::Removal { levels } => levels.len(),
        }
    }

    fn resolve(&self, index: usize, n: usize) -> Result<TopologyRequest> {
        Ok(match self {
            TopologyAxis::Complete => TopologyRequest::Complete,
            TopologyAxis::Geometric { ranges } => TopologyRequest::Geometric { range: ranges[index] },
            TopologyAxis::Regular { degrees } => {
                let k = degrees[index];
                check_degree(n, k)?;
                TopologyRequest::Regular { degree: k }
            }
            TopologyAxis::Removal { levels } => {
                let k = degree_from_removal(n, levels[index])?;
                check_degree(n, k)?;
                TopologyRequest::Regular { degree: k }
            }
        })
    }
}

fn check_degree(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        Err(Error::InvalidDegree { n, k })
    } else if (n * k) % 2 == 1 {
        Err(Error::DegreeParity { n, k })
    } else {
        Ok(())
    }
}

/// Concrete topology to sample for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TopologyRequest {
    Complete,
    Geometric { range: f64 },
    Regular { degree: usize },
}

impl TopologyRequest {
    /// Samples the graph from the run seed's topology stream.
    pub fn sample(&self, n: usize, seed: u64, max_retries: usize) -> Result<Topology> {
        match *self {
            TopologyRequest::Complete => Ok(Topology::complete(n)),
            TopologyRequest::Geometric { range } => generate_geometric(n, range, seed),
            TopologyRequest::Regular { degree } => generate_k_regular(n, degree, seed, max_retries),
        }
    }
}

/// Value lists of every swept quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxes {
    pub n_agents: Vec<usize>,
    pub cycle_len: Vec<u32>,
    pub horizon: Vec<u32>,
    pub theta: Vec<f64>,
    pub flash_fraction: Vec<f64>,
    #[serde(default = "zero_noise")]
    pub noise: Vec<f64>,
    pub topology: TopologyAxis,
}

fn zero_noise() -> Vec<f64> {
    vec![0.0]
}

impl Default for GridAxes {
    fn default() -> Self {
        GridAxes {
            n_agents: vec![100],
            cycle_len: vec![10],
            horizon: vec![1000],
            theta: vec![0.5],
            flash_fraction: vec![0.5],
            noise: zero_noise(),
            topology: TopologyAxis::Complete,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub success_threshold: f64,
    pub cluster_gap: u32,
    pub max_retries: usize,
    pub update_order: UpdateOrder,
    pub neighbor_reads: NeighborReads,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            success_threshold: DEFAULT_SUCCESS_THRESHOLD,
            cluster_gap: DEFAULT_CLUSTER_GAP,
            max_retries: DEFAULT_MAX_RETRIES,
            update_order: UpdateOrder::Ascending,
            neighbor_reads: NeighborReads::Live,
        }
    }
}

/// A complete, replayable experiment definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(default)]
    pub name: String,
    pub axes: GridAxes,
    pub repetitions: usize,
    pub base_seed: u64,
    /// Worker threads; `None` uses every available core.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub settings: RunSettings,
}

impl SweepSpec {
    pub fn new(name: impl Into<String>, axes: GridAxes, repetitions: usize, base_seed: u64) -> Self {
        SweepSpec {
            name: name.into(),
            axes,
            repetitions,
            base_seed,
            jobs: None,
            output: None,
            settings: RunSettings::default(),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn point_count(&self) -> usize {
        let a = &self.axes;
        a.n_agents.len()
            * a.cycle_len.len()
            * a.horizon.len()
            * a.theta.len()
            * a.flash_fraction.len()
            * a.noise.len()
            * a.topology.len()
    }
}

fn tenths(range: std::ops::RangeInclusive<u32>) -> Vec<f64> {
    range.map(|i| f64::from(i) / 10.0).collect()
}

/// θ × f × r grid at N = 100, C = 10, T = 1000 on geometric graphs. Points
/// with f·C < 2 stay in the grid and are skipped during expansion.
pub fn preset_fig1(repetitions: usize, base_seed: u64) -> SweepSpec {
    let axes = GridAxes {
        theta: tenths(1..=9),
        flash_fraction: tenths(1..=9),
        topology: TopologyAxis::Geometric {
            ranges: (1..=20).map(|i| f64::from(i) / 20.0).collect(),
        },
        ..GridAxes::default()
    };
    SweepSpec::new("fig1", axes, repetitions, base_seed)
}

fn fig3_axes(topology: TopologyAxis, noise: Vec<f64>) -> GridAxes {
    GridAxes {
        n_agents: (50..=190).step_by(10).collect(),
        cycle_len: (10..=70).step_by(10).collect(),
        horizon: vec![10_000],
        theta: vec![0.5],
        flash_fraction: vec![0.5],
        noise,
        topology,
    }
}

/// Clock-update noise on complete graphs over N ∈ [50, 190], C ∈ [10, 70].
pub fn preset_fig3_noise(repetitions: usize, base_seed: u64) -> SweepSpec {
    SweepSpec::new(
        "fig3-noise",
        fig3_axes(TopologyAxis::Complete, tenths(0..=9)),
        repetitions,
        base_seed,
    )
}

/// Link removal on connected regular graphs over N ∈ [50, 190], C ∈ [10, 70].
pub fn preset_fig3_removal(repetitions: usize, base_seed: u64) -> SweepSpec {
    SweepSpec::new(
        "fig3-removal",
        fig3_axes(TopologyAxis::Removal { levels: tenths(0..=9) }, vec![0.0]),
        repetitions,
        base_seed,
    )
}

/// Odd versus even degree (k = 19, 20) at N = 100, C = 10, T = 10^4.
pub fn preset_parity(repetitions: usize, base_seed: u64) -> SweepSpec {
    let axes = GridAxes {
        horizon: vec![10_000],
        topology: TopologyAxis::Regular { degrees: vec![19, 20] },
        ..GridAxes::default()
    };
    SweepSpec::new("parity", axes, repetitions, base_seed)
}

pub const PRESET_NAMES: [&str; 4] = ["fig1", "fig3-noise", "fig3-removal", "parity"];

pub fn preset(name: &str, repetitions: Option<usize>, base_seed: u64) -> Option<SweepSpec> {
    Some(match name {
        "fig1" => preset_fig1(repetitions.unwrap_or(50), base_seed),
        "fig3-noise" => preset_fig3_noise(repetitions.unwrap_or(100), base_seed),
        "fig3-removal" => preset_fig3_removal(repetitions.unwrap_or(100), base_seed),
        "parity" => preset_parity(repetitions.unwrap_or(100), base_seed),
        _ => return None,
    })
}

/// One run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub point_index: usize,
    pub repetition: usize,
    pub seed: u64,
    pub params: ModelParams,
    pub topology: TopologyRequest,
}

/// A grid point rejected during expansion, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedPoint {
    pub point_index: usize,
    pub description: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExpandedGrid {
    pub configs: Vec<RunConfig>,
    pub skipped: Vec<SkippedPoint>,
}

pub fn expand_grid(spec: &SweepSpec) -> ExpandedGrid {
    let a = &spec.axes;
    let reps = spec.repetitions;
    let mut grid = ExpandedGrid::default();
    let mut point_index = 0usize;
    for &n in &a.n_agents {
        for &c in &a.cycle_len {
            for &t in &a.horizon {
                for &theta in &a.theta {
                    for &f in &a.flash_fraction {
                        for &sigma in &a.noise {
                            for topo_index in 0..a.topology.len() {
                                let point = ModelParams::new(n, c, t, theta, f, sigma)
                                    .and_then(|p| Ok((p, a.topology.resolve(topo_index, n)?)));
                                match point {
                                    Ok((params, topology)) => {
                                        grid.configs.extend((0..reps).map(|rep| RunConfig {
                                            point_index,
                                            repetition: rep,
                                            seed: derive_run_seed(
                                                spec.base_seed,
                                                (point_index * reps + rep) as u64,
                                            ),
                                            params,
                                            topology,
                                        }));
                                    }
                                    Err(err) => {
                                        let description = format!(
                                            "N={n} C={c} T={t} theta={theta} f={f} sigma={sigma} topology={}",
                                            describe_axis_value(&a.topology, topo_index)
                                        );
                                        warn!("skipping grid point {point_index} ({description}): {err}");
                                        grid.skipped.push(SkippedPoint {
                                            point_index,
                                            description,
                                            reason: err.to_string(),
                                        });
                                    }
                                }
                                point_index += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    grid
}

fn describe_axis_value(axis: &TopologyAxis, index: usize) -> String {
    match axis {
        TopologyAxis::Complete => "complete".into(),
        TopologyAxis::Geometric { ranges } => format!("geometric(r={})", ranges[index]),
        TopologyAxis::Regular { degrees } => format!("regular(k={})", degrees[index]),
        TopologyAxis::Removal { levels } => format!("removal(sigma={})", levels[index]),
    }
}

/// Samples the topology, simulates and scores a single run.
pub fn execute_run(config: &RunConfig, settings: &RunSettings) -> Result<RunRecord> {
    let topology = config
        .topology
        .sample(config.params.n_agents(), config.seed, settings.max_retries)?;
    let options = SimOptions {
        snapshot_interval: None,
        update_order: settings.update_order,
        neighbor_reads: settings.neighbor_reads,
    };
    let trajectory = simulate(&config.params, &topology, config.seed, options)?;
    RunRecord::from_trajectory(&trajectory, settings.success_threshold, settings.cluster_gap)
}

/// A run that errored or panicked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedRun {
    pub point_index: usize,
    pub repetition: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    /// Records sorted by seed.
    pub records: Vec<RunRecord>,
    pub skipped: Vec<SkippedPoint>,
    pub failures: Vec<FailedRun>,
}

impl SweepOutcome {
    pub fn is_clean(&self) -> bool {
        self.skipped.is_empty() && self.failures.is_empty()
    }
}

/// Echo of a sweep written next to its results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SweepSpec,
    pub tool_version: String,
    pub timestamp: String,
    pub base_seed: u64,
}

impl Manifest {
    pub fn new(spec: &SweepSpec) -> Self {
        Manifest {
            spec: spec.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            base_seed: spec.base_seed,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepControl {
    /// Keep rows already present in the output CSV and run only the rest.
    pub resume: bool,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    run_sweep_with(spec, SweepControl::default(), |_, _| {})
}

/// Runs every valid config of `spec`. `on_record` is called on the writer
/// thread after each finished run.
///
/// With an output directory, the manifest is written first, rows are
/// appended to the results CSV as runs finish, and on completion the CSV is
/// rewritten sorted by seed. An I/O error stops scheduling new runs and is
/// returned; rows already written stay on disk.
pub fn run_sweep_with<F>(spec: &SweepSpec, control: SweepControl, mut on_record: F) -> Result<SweepOutcome>
where
    F: FnMut(&RunRecord, Progress),
{
    let grid = expand_grid(spec);
    let mut outcome = SweepOutcome {
        skipped: grid.skipped,
        ..SweepOutcome::default()
    };

    let mut sink = match &spec.output {
        Some(dir) => Some(ResultSink::open(dir, spec, control.resume)?),
        None => None,
    };
    if let Some(sink) = &mut sink {
        for s in &outcome.skipped {
            sink.issue(&format!("skipped point {}: {} ({})", s.point_index, s.description, s.reason))?;
        }
        outcome.records = std::mem::take(&mut sink.existing);
    }
    let done: HashSet<u64> = outcome.records.iter().map(|r| r.seed).collect();
    let pending: Vec<&RunConfig> = grid.configs.iter().filter(|c| !done.contains(&c.seed)).collect();
    let total = grid.configs.len();
    info!(
        "sweep '{}': {} runs ({} pending), {} skipped points",
        spec.name,
        total,
        pending.len(),
        outcome.skipped.len()
    );

    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(jobs) = spec.jobs.filter(|&j| j > 0) {
            builder = builder.num_threads(jobs);
        }
        builder
            .build()
            .map_err(|e| Error::param("jobs", e.to_string()))?
    };
    let cancel = AtomicBool::new(false);
    let settings = spec.settings;
    let (tx, rx) = mpsc::channel::<(&RunConfig, std::result::Result<RunRecord, String>)>();

    let mut write_error = None;
    std::thread::scope(|scope| {
        let cancel = &cancel;
        let pending = &pending;
        let pool = &pool;
        scope.spawn(move || {
            pool.install(|| {
                pending.par_iter().for_each_with(tx, |tx, &config| {
                    if cancel.load(Ordering::Relaxed) {
                        return;
                    }
                    let result = catch_unwind(AssertUnwindSafe(|| execute_run(config, &settings)));
                    let result = match result {
                        Ok(Ok(record)) => Ok(record),
                        Ok(Err(err)) => Err(err.to_string()),
                        Err(panic) => Err(panic_message(panic.as_ref())),
                    };
                    let _ = tx.send((config, result));
                });
            });
        });

        let mut completed = outcome.records.len();
        for (config, result) in rx {
            if write_error.is_some() {
                continue;
            }
            match result {
                Ok(record) => {
                    completed += 1;
                    if let Some(sink) = &mut sink {
                        if let Err(e) = sink.append(&record) {
                            cancel.store(true, Ordering::Relaxed);
                            write_error = Some(e);
                            continue;
                        }
                    }
                    on_record(&record, Progress { completed, total });
                    outcome.records.push(record);
                }
                Err(reason) => {
                    warn!("run seed={} (point {}) failed: {reason}", config.seed, config.point_index);
                    let failure = FailedRun {
                        point_index: config.point_index,
                        repetition: config.repetition,
                        seed: config.seed,
                        reason,
                    };
                    if let Some(sink) = &mut sink {
                        let line = format!(
                            "failed run seed={} point={} rep={}: {}",
                            failure.seed, failure.point_index, failure.repetition, failure.reason
                        );
                        if let Err(e) = sink.issue(&line) {
                            cancel.store(true, Ordering::Relaxed);
                            write_error = Some(e);
                        }
                    }
                    outcome.failures.push(failure);
                }
            }
        }
    });
    if let Some(err) = write_error {
        return Err(err);
    }

    outcome.records.sort_by_key(|r| r.seed);
    outcome.failures.sort_by_key(|f| f.seed);
    if let Some(sink) = sink {
        sink.finish(&outcome.records)?;
    }
    Ok(outcome)
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".to_string()
    }
}

/// Serialized writer for one sweep's output directory.
struct ResultSink {
    dir: PathBuf,
    csv: csv::Writer<File>,
    issues: BufWriter<File>,
    existing: Vec<RunRecord>,
}

impl ResultSink {
    fn open(dir: &Path, spec: &SweepSpec, resume: bool) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let results = dir.join(RESULTS_FILE);
        let existing = if resume && results.exists() {
            read_records(&results)?
        } else {
            Vec::new()
        };
        Manifest::new(spec).write(&dir.join(MANIFEST_FILE))?;

        let file = if existing.is_empty() {
            File::create(&results)
        } else {
            OpenOptions::new().append(true).open(&results)
        }
        .map_err(|e| Error::io(&results, e))?;
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if existing.is_empty() {
            csv.write_record(RUN_RECORD_HEADER)?;
            csv.flush().map_err(|e| Error::io(&results, e))?;
        }
        let issues_path = dir.join(ISSUES_FILE);
        let issues = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&issues_path)
            .map_err(|e| Error::io(&issues_path, e))?;
        Ok(ResultSink {
            dir: dir.to_path_buf(),
            csv,
            issues: BufWriter::new(issues),
            existing,
        })
    }

    fn append(&mut self, record: &RunRecord) -> Result<()> {
        self.csv.serialize(record)?;
        self.csv
            .flush()
            .map_err(|e| Error::io(self.dir.join(RESULTS_FILE), e))
    }

    fn issue(&mut self, line: &str) -> Result<()> {
        let path = self.dir.join(ISSUES_FILE);
        writeln!(self.issues, "{line}").map_err(|e| Error::io(&path, e))?;
        self.issues.flush().map_err(|e| Error::io(&path, e))
    }

    /// Replaces the append-order CSV with a seed-sorted one.
    fn finish(mut self, sorted: &[RunRecord]) -> Result<()> {
        let results = self.dir.join(RESULTS_FILE);
        self.csv.flush().map_err(|e| Error::io(&results, e))?;
        drop(self.csv);
        let tmp = self.dir.join(format!("{RESULTS_FILE}.tmp"));
        write_records(&tmp, sorted)?;
        fs::rename(&tmp, &results).map_err(|e| Error::io(&results, e))
    }
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(RUN_RECORD_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a results CSV, checking the header. Errors carry the line number.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers()?.clone();
    if header.is_empty() {
        return Err(Error::EmptyInput("results CSV"));
    }
    if header.iter().ne(RUN_RECORD_HEADER) {
        return Err(Error::MalformedCsv {
            line: 1,
            reason: format!("expected header {}", RUN_RECORD_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<RunRecord>() {
        match row {
            Ok(r) => out.push(r),
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(Error::MalformedCsv {
                    line,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}
