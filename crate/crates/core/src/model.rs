//! Model predicates and decision rules.
//!
//! Every agent runs a clock of `cycle_len` ticks. It flashes during the final
//! `flash_fraction` of the cycle, i.e. on phases `flash_start..cycle_len`. One
//! tick after the flash window opens, the agent counts its flashing neighbors
//! and, if strictly more than `quorum_threshold * |neighbors|` are flashing,
//! advances its clock by one extra tick. With clock-update noise the quorum
//! decision is inverted with probability `noise_level`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absorbs representation error in products such as `0.3 * 10.0`.
const PRODUCT_EPS: f64 = 1e-9;

/// Scalar knobs of a single run. Construct through [`ModelParams::new`] or
/// [`ModelParams::builder`]; both reject parameter combinations for which the
/// quorum-check phase falls outside the cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    n_agents: usize,
    cycle_len: u32,
    horizon: u32,
    quorum_threshold: f64,
    flash_fraction: f64,
    noise_level: f64,
    flash_start: u32,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawParams {
    n_agents: usize,
    cycle_len: u32,
    horizon: u32,
    quorum_threshold: f64,
    flash_fraction: f64,
    #[serde(default)]
    noise_level: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(
            raw.n_agents,
            raw.cycle_len,
            raw.horizon,
            raw.quorum_threshold,
            raw.flash_fraction,
            raw.noise_level,
        )
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            n_agents: p.n_agents,
            cycle_len: p.cycle_len,
            horizon: p.horizon,
            quorum_threshold: p.quorum_threshold,
            flash_fraction: p.flash_fraction,
            noise_level: p.noise_level,
        }
    }
}

impl Default for ModelParams {
    /// N = 100, C = 10, T = 1000, θ = f = 0.5, σ = 0.
    fn default() -> Self {
        ModelParams::new(100, 10, 1000, 0.5, 0.5, 0.0).expect("default parameters are valid")
    }
}

impl ModelParams {
    pub fn new(
        n_agents: usize,
        cycle_len: u32,
        horizon: u32,
        quorum_threshold: f64,
        flash_fraction: f64,
        noise_level: f64,
    ) -> Result<Self> {
        if n_agents < 2 {
            return Err(Error::param("n_agents", format!("{n_agents} < 2")));
        }
        if cycle_len == 0 {
            return Err(Error::param("cycle_len", "must be positive"));
        }
        if horizon < cycle_len {
            return Err(Error::param(
                "horizon",
                format!("horizon {horizon} is shorter than one cycle ({cycle_len})"),
            ));
        }
        if !(0.0..=1.0).contains(&quorum_threshold) {
            return Err(Error::param(
                "quorum_threshold",
                format!("{quorum_threshold} not in [0, 1]"),
            ));
        }
        if !(flash_fraction > 0.0 && flash_fraction <= 1.0) {
            return Err(Error::param(
                "flash_fraction",
                format!("{flash_fraction} not in (0, 1]"),
            ));
        }
        if !(0.0..=1.0).contains(&noise_level) {
            return Err(Error::param(
                "noise_level",
                format!("{noise_level} not in [0, 1]"),
            ));
        }
        let window = flash_window_len(cycle_len, flash_fraction);
        // The quorum check happens at flash_start + 1, which must be a phase.
        if window < 2 {
            return Err(Error::param(
                "flash_fraction",
                format!(
                    "f*C = {} < 2: the quorum-check phase would fall outside the cycle",
                    flash_fraction * f64::from(cycle_len)
                ),
            ));
        }
        Ok(ModelParams {
            n_agents,
            cycle_len,
            horizon,
            quorum_threshold,
            flash_fraction,
            noise_level,
            flash_start: cycle_len - window,
        })
    }

    pub fn builder() -> ModelParamsBuilder {
        ModelParamsBuilder::default()
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn cycle_len(&self) -> u32 {
        self.cycle_len
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn quorum_threshold(&self) -> f64 {
        self.quorum_threshold
    }

    pub fn flash_fraction(&self) -> f64 {
        self.flash_fraction
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    /// First phase of the flash window, `ceil((1 - f) * C)`.
    pub fn flash_start(&self) -> u32 {
        self.flash_start
    }

    /// Phase at which agents evaluate the quorum rule.
    pub fn quorum_check_phase(&self) -> u32 {
        self.flash_start + 1
    }

    pub fn with_noise(mut self, noise_level: f64) -> Result<Self> {
        self = ModelParams::new(
            self.n_agents,
            self.cycle_len,
            self.horizon,
            self.quorum_threshold,
            self.flash_fraction,
            noise_level,
        )?;
        Ok(self)
    }

    pub fn with_n_agents(self, n_agents: usize) -> Result<Self> {
        ModelParams::new(
            n_agents,
            self.cycle_len,
            self.horizon,
            self.quorum_threshold,
            self.flash_fraction,
            self.noise_level,
        )
    }
}

/// Number of flashing phases, `floor(f * C)`; equals `C - ceil((1 - f) * C)`.
fn flash_window_len(cycle_len: u32, flash_fraction: f64) -> u32 {
    let product = flash_fraction * f64::from(cycle_len);
    ((product + PRODUCT_EPS).floor() as u32).min(cycle_len)
}

/// Builder with the headline defaults (N = 100, C = 10, T = 1000, θ = f = 0.5, σ = 0).
#[derive(Debug, Clone, Copy)]
pub struct ModelParamsBuilder {
    raw: RawParams,
}

impl Default for ModelParamsBuilder {
    fn default() -> Self {
        ModelParamsBuilder {
            raw: RawParams {
                n_agents: 100,
                cycle_len: 10,
                horizon: 1000,
                quorum_threshold: 0.5,
                flash_fraction: 0.5,
                noise_level: 0.0,
            },
        }
    }
}

impl ModelParamsBuilder {
    pub fn n_agents(mut self, n: usize) -> Self {
        self.raw.n_agents = n;
        self
    }

    pub fn cycle_len(mut self, c: u32) -> Self {
        self.raw.cycle_len = c;
        self
    }

    pub fn horizon(mut self, t: u32) -> Self {
        self.raw.horizon = t;
        self
    }

    pub fn quorum_threshold(mut self, theta: f64) -> Self {
        self.raw.quorum_threshold = theta;
        self
    }

    pub fn flash_fraction(mut self, f: f64) -> Self {
        self.raw.flash_fraction = f;
        self
    }

    pub fn noise_level(mut self, sigma: f64) -> Self {
        self.raw.noise_level = sigma;
        self
    }

    pub fn build(self) -> Result<ModelParams> {
        ModelParams::try_from(self.raw)
    }
}

/// Per-agent view: unbounded clock, its phase, and the flash predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentState {
    pub clock: u64,
    pub phase: u32,
    pub flashing: bool,
}

impl AgentState {
    pub fn from_clock(clock: u64, params: &ModelParams) -> Self {
        let phase = phase_of(clock, params);
        AgentState {
            clock,
            phase,
            flashing: is_flashing(phase, params),
        }
    }
}

/// Outcome of one quorum evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepDecision {
    pub flashing_neighbors: usize,
    pub quorum_met: bool,
    pub noise_draw: bool,
    pub applied_advance: bool,
}

impl StepDecision {
    pub fn evaluate(
        flashing_neighbors: usize,
        neighbor_count: usize,
        noise_draw: bool,
        params: &ModelParams,
    ) -> Self {
        let quorum_met = quorum_decision(flashing_neighbors, neighbor_count, params);
        StepDecision {
            flashing_neighbors,
            quorum_met,
            noise_draw,
            applied_advance: noisy_update(quorum_met, noise_draw),
        }
    }
}

#[inline]
pub fn flash_start_phase(params: &ModelParams) -> u32 {
    params.flash_start
}

#[inline]
pub fn phase_of(clock: u64, params: &ModelParams) -> u32 {
    (clock % u64::from(params.cycle_len)) as u32
}

#[inline]
pub fn is_flashing(phase: u32, params: &ModelParams) -> bool {
    phase >= params.flash_start
}

/// Strict quorum rule `m > θ·|N(i)|`. An isolated agent never advances.
#[inline]
pub fn quorum_decision(flashing_neighbors: usize, neighbor_count: usize, params: &ModelParams) -> bool {
    quorum_exceeded(flashing_neighbors, neighbor_count, params.quorum_threshold)
}

#[inline]
pub(crate) fn quorum_exceeded(flashing_neighbors: usize, neighbor_count: usize, theta: f64) -> bool {
    flashing_neighbors as f64 > theta * neighbor_count as f64
}

/// The applied decision: the quorum decision, inverted when the noise draw fires.
#[inline]
pub fn noisy_update(quorum_met: bool, noise_draw: bool) -> bool {
    quorum_met ^ noise_draw
}
