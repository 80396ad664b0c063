//! Sequential simulation loop.
//!
//! Within a step agents are visited in index order (or a seeded permutation)
//! and each reads its neighbors' flash flags live, so lower-indexed agents
//! already reflect the current step when a later agent counts them.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{Topology, TopologySummary};
use crate::model::{is_flashing, noisy_update, phase_of, quorum_decision, ModelParams};
use crate::rng::{stream_rng, Stream};

/// Clocks and flash flags of the whole population.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwarmState {
    clocks: Vec<u64>,
    flashing: Vec<bool>,
    step: u32,
    flashing_count: usize,
}

impl SwarmState {
    pub fn clocks(&self) -> &[u64] {
        &self.clocks
    }

    pub fn flash_flags(&self) -> &[bool] {
        &self.flashing
    }

    /// Number of completed steps.
    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn flashing_count(&self) -> usize {
        self.flashing_count
    }

    pub fn n_agents(&self) -> usize {
        self.clocks.len()
    }

    pub fn phases(&self, params: &ModelParams) -> Vec<u32> {
        self.clocks.iter().map(|&c| phase_of(c, params)).collect()
    }

    /// Fraction of agents currently flashing.
    pub fn amplitude(&self) -> f64 {
        self.flashing_count as f64 / self.clocks.len() as f64
    }

    fn from_clocks(clocks: Vec<u64>, params: &ModelParams) -> Self {
        let flashing: Vec<bool> = clocks
            .iter()
            .map(|&c| is_flashing(phase_of(c, params), params))
            .collect();
        let flashing_count = flashing.iter().filter(|&&f| f).count();
        SwarmState {
            clocks,
            flashing,
            step: 0,
            flashing_count,
        }
    }
}

/// Clocks drawn i.i.d. uniform over `{0, …, C-1}` from the run's clock stream.
pub fn init_state(params: &ModelParams, seed: u64) -> SwarmState {
    let mut rng = stream_rng(seed, Stream::ClockInit);
    let c = u64::from(params.cycle_len());
    let clocks = (0..params.n_agents()).map(|_| rng.random_range(0..c)).collect();
    SwarmState::from_clocks(clocks, params)
}

pub fn init_state_explicit(params: &ModelParams, clocks: &[u64]) -> Result<SwarmState> {
    if clocks.len() != params.n_agents() {
        return Err(Error::SizeMismatch {
            topology: clocks.len(),
            params: params.n_agents(),
        });
    }
    if let Some((agent, &clock)) = clocks
        .iter()
        .enumerate()
        .find(|(_, &c)| c >= u64::from(params.cycle_len()))
    {
        return Err(Error::ClockOutOfRange {
            agent,
            clock,
            cycle_len: params.cycle_len(),
        });
    }
    Ok(SwarmState::from_clocks(clocks.to_vec(), params))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    /// Agents 0..N-1 in order, as in the reference algorithm.
    #[default]
    Ascending,
    /// A fresh seeded permutation every step.
    RandomPermutation,
}

/// Which flash flags an agent sees when it counts flashing neighbors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborReads {
    /// Current flags; agents already visited this step show their new state.
    #[default]
    Live,
    /// Flags as they were before the step's sweep began.
    StepStart,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Store the full clock vector every this many steps.
    pub snapshot_interval: Option<u32>,
    pub update_order: UpdateOrder,
    #[serde(default)]
    pub neighbor_reads: NeighborReads,
}

/// Per-run random streams: noise draws and, optionally, update permutations.
pub struct StepRng {
    noise: ChaCha8Rng,
    order: Option<(ChaCha8Rng, Vec<usize>)>,
    frozen: Option<(Vec<bool>, usize)>,
}

impl StepRng {
    pub fn new(seed: u64, n_agents: usize, update_order: UpdateOrder) -> Self {
        Self::with_reads(seed, n_agents, update_order, NeighborReads::Live)
    }

    pub fn with_reads(seed: u64, n_agents: usize, update_order: UpdateOrder, reads: NeighborReads) -> Self {
        let order = match update_order {
            UpdateOrder::Ascending => None,
            UpdateOrder::RandomPermutation => {
                Some((stream_rng(seed, Stream::UpdateOrder), (0..n_agents).collect()))
            }
        };
        StepRng {
            noise: stream_rng(seed, Stream::Noise),
            order,
            frozen: match reads {
                NeighborReads::Live => None,
                NeighborReads::StepStart => Some((Vec::with_capacity(n_agents), 0)),
            },
        }
    }
}

/// Advances every agent once.
///
/// Each agent ticks its clock, refreshes its flash flag and, at the
/// quorum-check phase, counts flashing neighbors. The quorum decision is
/// inverted when a Bernoulli(σ) draw fires; no draw is taken at σ = 0. An
/// applied advance adds one more tick.
pub fn step(state: &mut SwarmState, topology: &Topology, params: &ModelParams, rng: &mut StepRng) {
    let frozen = rng.frozen.as_mut().map(|(flags, count)| {
        flags.clear();
        flags.extend_from_slice(&state.flashing);
        *count = state.flashing_count;
        (flags.as_slice(), *count)
    });
    match rng.order.as_mut() {
        Some((order_rng, order)) => {
            order.shuffle(order_rng);
            for &i in order.iter() {
                update_agent(state, i, topology, params, &mut rng.noise, frozen);
            }
        }
        None => {
            for i in 0..state.clocks.len() {
                update_agent(state, i, topology, params, &mut rng.noise, frozen);
            }
        }
    }
    state.step += 1;
}

#[inline]
fn update_agent(
    state: &mut SwarmState,
    i: usize,
    topology: &Topology,
    params: &ModelParams,
    noise: &mut ChaCha8Rng,
    frozen: Option<(&[bool], usize)>,
) {
    state.clocks[i] += 1;
    let phase = refresh_flag(state, i, params);
    if phase != params.quorum_check_phase() {
        return;
    }
    let neighbors = topology.neighbors(i);
    let (flags, total) = frozen.unwrap_or((&state.flashing, state.flashing_count));
    let flashing_neighbors = if topology.is_complete() {
        total - usize::from(flags[i])
    } else {
        neighbors.iter().filter(|&&j| flags[j as usize]).count()
    };
    let quorum_met = quorum_decision(flashing_neighbors, neighbors.len(), params);
    let sigma = params.noise_level();
    let noise_draw = sigma > 0.0 && noise.random_bool(sigma);
    if noisy_update(quorum_met, noise_draw) {
        state.clocks[i] += 1;
        refresh_flag(state, i, params);
    }
}

#[inline]
fn refresh_flag(state: &mut SwarmState, i: usize, params: &ModelParams) -> u32 {
    let phase = phase_of(state.clocks[i], params);
    let now = is_flashing(phase, params);
    if now != state.flashing[i] {
        state.flashing[i] = now;
        if now {
            state.flashing_count += 1;
        } else {
            state.flashing_count -= 1;
        }
    }
    phase
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: u32,
    pub clocks: Vec<u64>,
}

/// Result of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub seed: u64,
    pub topology: TopologySummary,
    /// Flashing agents after each full sweep; entry `t - 1` belongs to step `t`.
    pub flashing_counts: Vec<u32>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: SwarmState,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.flashing_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flashing_counts.is_empty()
    }

    pub fn amplitude_series(&self) -> Vec<f64> {
        let n = self.params.n_agents() as f64;
        self.flashing_counts.iter().map(|&c| f64::from(c) / n).collect()
    }

    /// Writes `step,amplitude,flashing_count` rows, steps numbered from 1.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "amplitude", "flashing_count"])?;
        let n = self.params.n_agents() as f64;
        for (t, &count) in self.flashing_counts.iter().enumerate() {
            w.write_record([
                (t + 1).to_string(),
                (f64::from(count) / n).to_string(),
                count.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<trajectory csv>", e))?;
        Ok(())
    }

    pub fn snapshots_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.snapshots)?)
    }
}

/// Runs `T` steps from uniformly random clocks drawn from `seed`.
pub fn simulate(
    params: &ModelParams,
    topology: &Topology,
    seed: u64,
    options: SimOptions,
) -> Result<Trajectory> {
    simulate_from(params, topology, init_state(params, seed), seed, options)
}

/// Runs `T` steps from a given initial state; noise draws come from `seed`.
pub fn simulate_from(
    params: &ModelParams,
    topology: &Topology,
    mut state: SwarmState,
    seed: u64,
    options: SimOptions,
) -> Result<Trajectory> {
    if topology.n_agents() != params.n_agents() {
        return Err(Error::SizeMismatch {
            topology: topology.n_agents(),
            params: params.n_agents(),
        });
    }
    if state.n_agents() != params.n_agents() {
        return Err(Error::SizeMismatch {
            topology: state.n_agents(),
            params: params.n_agents(),
        });
    }
    let horizon = params.horizon();
    let mut rng = StepRng::with_reads(seed, params.n_agents(), options.update_order, options.neighbor_reads);
    let mut flashing_counts = Vec::with_capacity(horizon as usize);
    let mut snapshots = Vec::new();
    let interval = options.snapshot_interval.filter(|&k| k > 0);
    for _ in 0..horizon {
        step(&mut state, topology, params, &mut rng);
        flashing_counts.push(state.flashing_count as u32);
        if let Some(k) = interval {
            if state.step.is_multiple_of(k) {
                snapshots.push(Snapshot {
                    step: state.step,
                    clocks: state.clocks.clone(),
                });
            }
        }
    }
    Ok(Trajectory {
        params: *params,
        seed,
        topology: topology.summary(),
        flashing_counts,
        snapshots,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> ModelParams {
        ModelParams::new(2, 10, 100, 0.5, 0.5, 0.0).unwrap()
    }

    #[test]
    fn init_flags_follow_predicate() {
        let p = ModelParams::new(4, 10, 100, 0.5, 0.5, 0.0).unwrap();
        let s = init_state_explicit(&p, &[7, 7, 7, 7]).unwrap();
        assert_eq!(s.flashing_count(), 4);
        let s = init_state_explicit(&p, &[0; 4]).unwrap();
        assert_eq!(s.flashing_count(), 0);
        let s = init_state_explicit(&half(), &[0, 5]).unwrap();
        assert_eq!(s.flash_flags(), &[false, true]);
    }

    #[test]
    fn explicit_init_validates() {
        let p = half();
        assert!(matches!(
            init_state_explicit(&p, &[0, 10]),
            Err(Error::ClockOutOfRange { agent: 1, clock: 10, .. })
        ));
        assert!(init_state_explicit(&p, &[0]).is_err());
    }

    #[test]
    fn two_blocks_flash_half() {
        let p = ModelParams::new(100, 10, 1000, 0.5, 0.5, 0.0).unwrap();
        let clocks: Vec<u64> = (0..100).map(|i| if i < 50 { 0 } else { 5 }).collect();
        assert_eq!(init_state_explicit(&p, &clocks).unwrap().flashing_count(), 50);
    }

    #[test]
    fn pair_at_flash_start_advances_together() {
        let p = half();
        let topo = Topology::complete(2);
        let mut s = init_state_explicit(&p, &[5, 5]).unwrap();
        let mut rng = StepRng::new(0, 2, UpdateOrder::Ascending);
        step(&mut s, &topo, &p, &mut rng);
        assert_eq!(s.clocks(), &[7, 7]);
    }

    #[test]
    fn identical_pair_stays_equal() {
        let p = half();
        let topo = Topology::complete(2);
        let mut s = init_state_explicit(&p, &[0, 0]).unwrap();
        let mut rng = StepRng::new(0, 2, UpdateOrder::Ascending);
        for _ in 0..200 {
            step(&mut s, &topo, &p, &mut rng);
            assert_eq!(s.clocks()[0], s.clocks()[1]);
        }
    }

    #[test]
    fn isolated_agents_never_advance() {
        let p = ModelParams::new(3, 10, 50, 0.0, 0.5, 0.0).unwrap();
        let topo = Topology::from_edges(3, &[], crate::graphs::Provenance::Custom).unwrap();
        let traj = simulate(&p, &topo, 3, SimOptions::default()).unwrap();
        let start = init_state(&p, 3);
        for (a, b) in start.clocks().iter().zip(traj.final_state.clocks()) {
            assert_eq!(b - a, 50);
        }
    }

    #[test]
    fn full_noise_inverts_quorum() {
        // With σ = 1 every decision is inverted: the synchronized pair never
        // advances, while an isolated agent always does (and re-checks on step 10).
        let p = ModelParams::new(2, 10, 10, 0.5, 0.5, 1.0).unwrap();
        let topo = Topology::complete(2);
        let s = init_state_explicit(&p, &[5, 5]).unwrap();
        let traj = simulate_from(&p, &topo, s, 0, SimOptions::default()).unwrap();
        assert_eq!(traj.final_state.clocks(), &[15, 15]);

        let edgeless = Topology::from_edges(2, &[], crate::graphs::Provenance::Custom).unwrap();
        let s = init_state_explicit(&p, &[5, 5]).unwrap();
        let traj = simulate_from(&p, &edgeless, s, 0, SimOptions::default()).unwrap();
        assert_eq!(traj.final_state.clocks(), &[17, 17]);
    }

    #[test]
    fn synchronized_start_reaches_full_amplitude_each_cycle() {
        let p = ModelParams::new(20, 10, 100, 0.5, 0.5, 0.0).unwrap();
        let topo = Topology::complete(20);
        let s = init_state_explicit(&p, &[3; 20]).unwrap();
        let traj = simulate_from(&p, &topo, s, 1, SimOptions::default()).unwrap();
        let amp = traj.amplitude_series();
        assert_eq!(amp.len(), 100);
        for window in amp.chunks(10) {
            assert!(window.contains(&1.0));
        }
        assert!(amp.iter().all(|&a| a == 0.0 || a == 1.0));
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let p = half();
        assert!(matches!(
            simulate(&p, &Topology::complete(3), 0, SimOptions::default()),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn snapshots_at_interval() {
        let p = ModelParams::new(5, 10, 100, 0.5, 0.5, 0.0).unwrap();
        let opts = SimOptions {
            snapshot_interval: Some(25),
            ..Default::default()
        };
        let traj = simulate(&p, &Topology::complete(5), 4, opts).unwrap();
        let steps: Vec<u32> = traj.snapshots.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![25, 50, 75, 100]);
        assert_eq!(traj.snapshots[3].clocks, traj.final_state.clocks());
        assert!(traj.snapshots_json().unwrap().starts_with("[{\"step\":25"));
    }

    #[test]
    fn random_order_is_deterministic_and_differs() {
        let p = ModelParams::new(30, 10, 300, 0.5, 0.5, 0.0).unwrap();
        let topo = Topology::complete(30);
        let opts = SimOptions {
            update_order: UpdateOrder::RandomPermutation,
            ..Default::default()
        };
        let a = simulate(&p, &topo, 8, opts).unwrap();
        let b = simulate(&p, &topo, 8, opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trajectory_csv_layout() {
        let p = ModelParams::new(4, 10, 10, 0.5, 0.5, 0.0).unwrap();
        let s = init_state_explicit(&p, &[0, 0, 5, 5]).unwrap();
        let traj = simulate_from(&p, &Topology::complete(4), s, 0, SimOptions::default()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,amplitude,flashing_count"));
        assert_eq!(text.lines().count(), 11);
        assert!(lines.next().unwrap().starts_with("1,"));
    }
}
