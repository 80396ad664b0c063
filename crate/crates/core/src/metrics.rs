//! Run outcome measures: maximal amplitude, success classification,
//! time-to-sync, phase clusters, and success fractions across runs.

use serde::{Deserialize, Serialize};

use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::graphs::Provenance;
use crate::model::ModelParams;

pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 0.85;
pub const DEFAULT_CLUSTER_GAP: u32 = 1;

/// z-value of the two-sided 95% normal interval.
const Z95: f64 = 1.96;

pub fn max_amplitude(trajectory: &Trajectory) -> Result<f64> {
    max_of_series(&trajectory.amplitude_series())
}

pub fn max_of_series(series: &[f64]) -> Result<f64> {
    series
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::EmptyInput("amplitude series"))
}

/// Inclusive: a run succeeds when `a_max >= threshold`.
pub fn classify_success(a_max: f64, threshold: f64) -> bool {
    a_max >= threshold
}

/// First step (1-based) whose amplitude reaches `threshold`.
pub fn time_to_sync(trajectory: &Trajectory, threshold: f64) -> Option<u32> {
    trajectory
        .amplitude_series()
        .iter()
        .position(|&a| a >= threshold)
        .map(|i| i as u32 + 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseClusters {
    /// Agents per cluster, in cyclic order starting after the first gap.
    pub sizes: Vec<usize>,
}

impl PhaseClusters {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

/// Groups occupied phase bins into clusters separated by at least
/// `gap_threshold` consecutive empty bins on the cycle. A gap threshold of 0
/// is treated as 1.
pub fn phase_clusters(phases: &[u32], cycle_len: u32, gap_threshold: u32) -> PhaseClusters {
    let c = cycle_len as usize;
    let gap = gap_threshold.max(1) as usize;
    let mut bins = vec![0usize; c];
    for &p in phases {
        bins[p as usize % c] += 1;
    }
    let Some(first_empty) = bins.iter().position(|&b| b == 0) else {
        return PhaseClusters {
            sizes: if phases.is_empty() { vec![] } else { vec![phases.len()] },
        };
    };
    // Walk the cycle starting after an empty bin so no cluster straddles the start.
    let mut sizes = Vec::new();
    let mut current = 0usize;
    let mut empty_run = 0usize;
    let mut leading_empty = None;
    for offset in 1..=c {
        let count = bins[(first_empty + offset) % c];
        if count == 0 {
            empty_run += 1;
            continue;
        }
        if leading_empty.is_none() {
            leading_empty = Some(empty_run);
        } else if empty_run >= gap {
            sizes.push(current);
            current = 0;
        }
        empty_run = 0;
        current += count;
    }
    if current > 0 {
        // The gap closing the last cluster wraps around to the first one.
        let wrap_gap = empty_run + leading_empty.unwrap_or(0);
        if wrap_gap >= gap || sizes.is_empty() {
            sizes.push(current);
        } else {
            sizes[0] += current;
        }
    }
    PhaseClusters { sizes }
}

/// Per-run outcome; serializes to one row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub n_agents: usize,
    pub cycle_len: u32,
    pub horizon: u32,
    pub theta: f64,
    pub f: f64,
    pub sigma: f64,
    pub topology: String,
    pub k_or_r: String,
    pub a_max: f64,
    pub success: bool,
    pub time_to_sync: Option<u32>,
    pub cluster_count_final: Option<usize>,
}

pub const RUN_RECORD_HEADER: [&str; 13] = [
    "seed",
    "n_agents",
    "cycle_len",
    "horizon",
    "theta",
    "f",
    "sigma",
    "topology",
    "k_or_r",
    "a_max",
    "success",
    "time_to_sync",
    "cluster_count_final",
];

impl RunRecord {
    pub fn from_trajectory(trajectory: &Trajectory, success_threshold: f64, cluster_gap: u32) -> Result<Self> {
        let params: &ModelParams = &trajectory.params;
        let a_max = max_amplitude(trajectory)?;
        let success = classify_success(a_max, success_threshold);
        let phases = trajectory.final_state.phases(params);
        let clusters = phase_clusters(&phases, params.cycle_len(), cluster_gap);
        let (topology, k_or_r) = describe_provenance(&trajectory.topology.provenance);
        Ok(RunRecord {
            seed: trajectory.seed,
            n_agents: params.n_agents(),
            cycle_len: params.cycle_len(),
            horizon: params.horizon(),
            theta: params.quorum_threshold(),
            f: params.flash_fraction(),
            sigma: params.noise_level(),
            topology,
            k_or_r,
            a_max,
            success,
            time_to_sync: if success {
                time_to_sync(trajectory, success_threshold)
            } else {
                None
            },
            cluster_count_final: Some(clusters.count()),
        })
    }
}

fn describe_provenance(p: &Provenance) -> (String, String) {
    let value = match p {
        Provenance::Geometric { range } => range.to_string(),
        Provenance::Regular { degree } => degree.to_string(),
        Provenance::Custom => String::new(),
    };
    (p.label().to_string(), value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuccessFraction {
    pub runs: usize,
    pub successes: usize,
    pub fraction: f64,
    /// Normal-approximation 95% half-width, `1.96 * sqrt(p (1 - p) / n)`.
    pub half_width: f64,
}

impl SuccessFraction {
    pub fn from_counts(successes: usize, runs: usize) -> Result<Self> {
        if runs == 0 {
            return Err(Error::EmptyInput("run records"));
        }
        let p = successes as f64 / runs as f64;
        Ok(SuccessFraction {
            runs,
            successes,
            fraction: p,
            half_width: Z95 * (p * (1.0 - p) / runs as f64).sqrt(),
        })
    }

    pub fn failure_fraction(&self) -> f64 {
        (self.runs - self.successes) as f64 / self.runs as f64
    }
}

pub fn success_fraction<'a, I>(records: I) -> Result<SuccessFraction>
where
    I: IntoIterator<Item = &'a RunRecord>,
{
    let (runs, successes) = records
        .into_iter()
        .fold((0, 0), |(n, s), r| (n + 1, s + usize::from(r.success)));
    SuccessFraction::from_counts(successes, runs)
}
