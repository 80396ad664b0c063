//! `quorum-sync` command-line tool: single runs, sweeps, CSV analysis and
//! graph validation.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use quorum_sync::analysis::{render_table, summarize, write_summary_csv, GroupAxis};
use quorum_sync::engine::{init_state, init_state_explicit, simulate_from, NeighborReads, SimOptions, UpdateOrder};
use quorum_sync::graphs::{check_topology, degree_from_removal, DEFAULT_MAX_RETRIES};
use quorum_sync::harness::{
    self, read_records, run_sweep_with, Manifest, Progress, SweepControl, SweepSpec, TopologyRequest, PRESET_NAMES,
};
use quorum_sync::metrics::{RunRecord, DEFAULT_CLUSTER_GAP, DEFAULT_SUCCESS_THRESHOLD, RUN_RECORD_HEADER};
use quorum_sync::{ModelParams, Topology};

const OUTPUT_DIR_ENV: &str = "QUORUM_SYNC_OUTPUT_DIR";

/// Exit code when grid points were skipped by validation.
const EXIT_SKIPPED: u8 = 3;
/// Exit code when runs crashed or errored.
const EXIT_FAILED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "quorum-sync", version, about = "Quorum-threshold pulse-coupled oscillator simulator")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one run and print its record.
    Run(RunArgs),
    /// Run a preset, grid-file or manifest sweep.
    Sweep(SweepArgs),
    /// Aggregate a results CSV into success fractions per group.
    Analyze(AnalyzeArgs),
    /// Generate or load a topology and report its structure.
    ValidateGraph(GraphArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TopologyKind {
    Complete,
    Geometric,
    Regular,
    Removal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// Number of agents N.
    #[arg(long = "n", default_value_t = 100)]
    n_agents: usize,
    /// Cycle length C in ticks.
    #[arg(long = "c", default_value_t = 10)]
    cycle_len: u32,
    /// Horizon T in steps.
    #[arg(long = "t", default_value_t = 1000)]
    horizon: u32,
    /// Quorum threshold θ.
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Flash fraction f.
    #[arg(long = "f", default_value_t = 0.5)]
    flash_fraction: f64,
    /// Clock-update noise σ.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(
            self.n_agents,
            self.cycle_len,
            self.horizon,
            self.theta,
            self.flash_fraction,
            self.sigma,
        )?)
    }
}

#[derive(Debug, Clone, Args)]
struct TopologyArgs {
    #[arg(long, value_enum, default_value_t = TopologyKind::Complete)]
    topology: TopologyKind,
    /// Communication range r (geometric).
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    /// Degree k (regular).
    #[arg(long)]
    k: Option<usize>,
    /// Link-removal level; sets k = N - 1 - floor(level * N) (removal).
    #[arg(long, default_value_t = 0.0)]
    removal: f64,
    /// Load the topology from a JSON document instead of sampling it.
    #[arg(long, value_name = "FILE")]
    topology_in: Option<PathBuf>,
    /// Write the topology used to a JSON document.
    #[arg(long, value_name = "FILE")]
    topology_out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
    max_retries: usize,
}

impl TopologyArgs {
    fn request(&self, n: usize) -> Result<TopologyRequest> {
        Ok(match self.topology {
            TopologyKind::Complete => TopologyRequest::Complete,
            TopologyKind::Geometric => TopologyRequest::Geometric { range: self.r },
            TopologyKind::Regular => {
                let Some(degree) = self.k else {
                    bail!("--topology regular requires --k");
                };
                TopologyRequest::Regular { degree }
            }
            TopologyKind::Removal => TopologyRequest::Regular {
                degree: degree_from_removal(n, self.removal).context("--removal")?,
            },
        })
    }

    fn build(&self, n: usize, seed: u64) -> Result<Topology> {
        let topo = match &self.topology_in {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Topology::from_json(&text)?
            }
            None => self.request(n)?.sample(n, seed, self.max_retries)?,
        };
        if let Some(path) = &self.topology_out {
            fs::write(path, topo.to_json()? + "\n").with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(topo)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    topology: TopologyArgs,
    /// Master seed of the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON array of initial clocks, one per agent, each in [0, C).
    #[arg(long, value_name = "FILE")]
    init_clocks: Option<PathBuf>,
    /// Write the amplitude series (step, amplitude, flashing_count) as CSV.
    #[arg(long, value_name = "FILE")]
    amplitude_csv: Option<PathBuf>,
    /// Store full clock vectors every this many steps.
    #[arg(long)]
    snapshot_interval: Option<u32>,
    /// Write stored snapshots as JSON.
    #[arg(long, value_name = "FILE", requires = "snapshot_interval")]
    snapshots_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OrderArg::Ascending)]
    update_order: OrderArg,
    #[arg(long, value_enum, default_value_t = ReadsArg::Live)]
    neighbor_reads: ReadsArg,
    #[arg(long, default_value_t = DEFAULT_SUCCESS_THRESHOLD)]
    success_threshold: f64,
    /// Minimum empty phase bins separating final-state clusters.
    #[arg(long, default_value_t = DEFAULT_CLUSTER_GAP)]
    cluster_gap: u32,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OrderArg {
    Ascending,
    Random,
}

impl From<OrderArg> for UpdateOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Ascending => UpdateOrder::Ascending,
            OrderArg::Random => UpdateOrder::RandomPermutation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReadsArg {
    Live,
    StepStart,
}

impl From<ReadsArg> for NeighborReads {
    fn from(r: ReadsArg) -> Self {
        match r {
            ReadsArg::Live => NeighborReads::Live,
            ReadsArg::StepStart => NeighborReads::StepStart,
        }
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Built-in experiment grid.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES),
          conflicts_with_all = ["grid", "manifest"])]
    preset: Option<String>,
    /// JSON sweep specification.
    #[arg(long, value_name = "FILE", conflicts_with = "manifest")]
    grid: Option<PathBuf>,
    /// Replay the sweep recorded in a manifest.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Repetitions per grid point (preset default: fig1 50, fig3 100, parity 100).
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed; required for presets, overrides a grid file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $QUORUM_SYNC_OUTPUT_DIR or ./results].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    jobs: Option<usize>,
    /// Keep rows already in the output CSV and run only the missing ones.
    #[arg(long)]
    resume: bool,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Results CSV written by `sweep`.
    csv: PathBuf,
    /// Comma-separated axes: n, c, t, theta, f, sigma, topology, k (or r), parity.
    #[arg(long, value_delimiter = ',', default_value = "n,c")]
    group_by: Vec<String>,
    /// Write the aggregated table as CSV.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GraphArgs {
    #[arg(long = "n", default_value_t = 100)]
    n_agents: usize,
    #[command(flatten)]
    topology: TopologyArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::ValidateGraph(args) => cmd_validate_graph(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let params = args.model.params()?;
    let topology = args.topology.build(params.n_agents(), args.seed)?;
    let state = match &args.init_clocks {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let clocks: Vec<u64> = serde_json::from_str(&text).context("--init-clocks expects a JSON array")?;
            init_state_explicit(&params, &clocks)?
        }
        None => init_state(&params, args.seed),
    };
    let options = SimOptions {
        snapshot_interval: args.snapshot_interval,
        update_order: args.update_order.into(),
        neighbor_reads: args.neighbor_reads.into(),
    };
    let trajectory = simulate_from(&params, &topology, state, args.seed, options)?;

    if let Some(path) = &args.amplitude_csv {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        trajectory.write_csv(BufWriter::new(file))?;
    }
    if let Some(path) = &args.snapshots_out {
        fs::write(path, trajectory.snapshots_json()?).with_context(|| format!("writing {}", path.display()))?;
    }

    let record = RunRecord::from_trajectory(&trajectory, args.success_threshold, args.cluster_gap)?;
    let stdout = io::stdout();
    match args.format {
        Format::Json => {
            serde_json::to_writer(stdout.lock(), &record)?;
            println!();
        }
        Format::Text => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(stdout.lock());
            w.write_record(RUN_RECORD_HEADER)?;
            w.serialize(&record)?;
            w.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn sweep_spec(args: &SweepArgs) -> Result<SweepSpec> {
    let mut spec = if let Some(path) = &args.manifest {
        let manifest = Manifest::load(path)?;
        if args.seed.is_some() || args.reps.is_some() {
            bail!("--seed and --reps cannot change a manifest replay");
        }
        manifest.spec
    } else if let Some(path) = &args.grid {
        let mut spec = SweepSpec::from_json_file(path)?;
        if let Some(seed) = args.seed {
            spec.base_seed = seed;
        }
        if let Some(reps) = args.reps {
            spec.repetitions = reps;
        }
        spec
    } else if let Some(name) = &args.preset {
        let Some(seed) = args.seed else {
            bail!("--seed is required for preset sweeps");
        };
        harness::preset(name, args.reps, seed).expect("preset names are validated by clap")
    } else {
        bail!("one of --preset, --grid or --manifest is required");
    };
    if let Some(out) = &args.out {
        spec.output = Some(out.clone());
    } else if spec.output.is_none() {
        spec.output = Some(default_output_dir());
    }
    if args.jobs.is_some() {
        spec.jobs = args.jobs;
    }
    Ok(spec)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let spec = sweep_spec(&args)?;
    let out_dir = spec.output.clone().expect("output directory set");
    info!("writing sweep '{}' to {}", spec.name, out_dir.display());

    let mut next_report = 0usize;
    let progress = |_: &RunRecord, p: Progress| {
        if p.completed >= next_report || p.completed == p.total {
            eprintln!("[{}/{}] runs complete", p.completed, p.total);
            next_report = p.completed + (p.total / 20).max(1);
        }
    };
    let outcome = run_sweep_with(&spec, SweepControl { resume: args.resume }, progress)?;

    if !outcome.records.is_empty() {
        let axes = [
            GroupAxis::NAgents,
            GroupAxis::CycleLen,
            GroupAxis::Horizon,
            GroupAxis::Theta,
            GroupAxis::FlashFraction,
            GroupAxis::Sigma,
            GroupAxis::Topology,
            GroupAxis::KOrR,
        ];
        print!("{}", render_table(&axes, &summarize(&outcome.records, &axes)?));
    }
    println!(
        "{} runs written to {}",
        outcome.records.len(),
        out_dir.join(harness::RESULTS_FILE).display()
    );
    for s in &outcome.skipped {
        eprintln!("skipped point {} ({}): {}", s.point_index, s.description, s.reason);
    }
    for f in &outcome.failures {
        eprintln!("failed run seed={} point={}: {}", f.seed, f.point_index, f.reason);
    }
    Ok(if !outcome.failures.is_empty() {
        ExitCode::from(EXIT_FAILED)
    } else if !outcome.skipped.is_empty() {
        ExitCode::from(EXIT_SKIPPED)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    let axes = args
        .group_by
        .iter()
        .map(|s| s.trim().parse::<GroupAxis>())
        .collect::<Result<Vec<_>, _>>()?;
    let records = read_records(&args.csv)?;
    let groups = summarize(&records, &axes)?;
    print!("{}", render_table(&axes, &groups));
    if let Some(path) = &args.out {
        write_tidy(path, &axes, &groups)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn write_tidy(path: &Path, axes: &[GroupAxis], groups: &[quorum_sync::analysis::GroupSummary]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    write_summary_csv(&mut w, axes, groups)?;
    w.flush()?;
    Ok(())
}

fn cmd_validate_graph(args: GraphArgs) -> Result<ExitCode> {
    let topo = args.topology.build(args.n_agents, args.seed)?;
    let report = check_topology(&topo);
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Text => {
            println!("agents:      {}", report.n_agents);
            println!("edges:       {}", topo.edge_count());
            println!("symmetric:   {}", report.is_symmetric());
            println!("simple:      {}", report.is_simple());
            let degrees: Vec<String> = report
                .degree_histogram
                .iter()
                .map(|(d, c)| format!("{d}:{c}"))
                .collect();
            println!("degrees:     {{{}}}", degrees.join(", "));
            println!("components:  {} {:?}", report.component_count(), report.components);
        }
    }
    Ok(if report.is_symmetric() && report.is_simple() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
