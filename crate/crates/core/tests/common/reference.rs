//! Naive transcription of the synchronization loop, kept deliberately
//! separate from the engine: adjacency matrix, full recount of flashing
//! neighbors on every check, flags recomputed from the phase.
//!
//! It shares only the seeding convention with the library (clock stream for
//! initial clocks, noise stream for Bernoulli draws) so that trajectories can
//! be compared exactly.

use quorum_sync::rng::{stream_rng, Stream};
use quorum_sync::Topology;
use rand::Rng;

pub struct Reference {
    pub n: usize,
    pub cycle: u64,
    pub theta: f64,
    pub f: f64,
    pub sigma: f64,
}

impl Reference {
    fn flash_start(&self) -> u64 {
        // Smallest integer phase p with p >= (1 - f) * C, using exact tenths.
        let window = (self.f * self.cycle as f64).round() as u64;
        self.cycle - window
    }

    /// Clock vectors after each of `t_max` steps (index 0 is the initial state).
    pub fn run(&self, topology: &Topology, seed: u64, t_max: usize) -> Vec<Vec<u64>> {
        let n = self.n;
        let mut adj = vec![vec![false; n]; n];
        for (a, b) in topology.edges() {
            adj[a][b] = true;
            adj[b][a] = true;
        }
        let degree: Vec<usize> = adj.iter().map(|row| row.iter().filter(|&&x| x).count()).collect();

        let mut init = stream_rng(seed, Stream::ClockInit);
        let mut noise = stream_rng(seed, Stream::Noise);
        let s = self.flash_start();
        let mut c: Vec<u64> = (0..n).map(|_| init.random_range(0..self.cycle)).collect();
        let mut flash: Vec<bool> = c.iter().map(|&ci| ci % self.cycle >= s).collect();

        let mut history = vec![c.clone()];
        for _t in 1..=t_max {
            for i in 0..n {
                c[i] += 1;
                let phi = c[i] % self.cycle;
                flash[i] = phi >= s;
                if phi == s + 1 {
                    let mut m = 0;
                    for j in 0..n {
                        if adj[i][j] && flash[j] {
                            m += 1;
                        }
                    }
                    let quorum = (m as f64) > self.theta * degree[i] as f64;
                    let advance = if self.sigma > 0.0 {
                        let xi = noise.random_bool(self.sigma);
                        if xi {
                            !quorum
                        } else {
                            quorum
                        }
                    } else {
                        quorum
                    };
                    if advance {
                        c[i] += 1;
                        flash[i] = c[i] % self.cycle >= s;
                    }
                }
            }
            history.push(c.clone());
        }
        history
    }
}
