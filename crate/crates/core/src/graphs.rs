//! Interaction topologies: random geometric graphs in the unit square and
//! connected k-regular random graphs, plus a structural validator.

use std::collections::{BTreeMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub const DEFAULT_MAX_RETRIES: usize = 1000;

/// Largest degree sampled with the pairing model; the acceptance rate of a
/// simple pairing decays like exp(-(k^2 - 1) / 4).
const PAIRING_MAX_DEGREE: usize = 4;

/// Attempted double-edge swaps per edge when randomizing a circulant.
const SWAPS_PER_EDGE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Geometric { range: f64 },
    Regular { degree: usize },
    Custom,
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Provenance::Geometric { .. } => "geometric",
            Provenance::Regular { .. } => "regular",
            Provenance::Custom => "custom",
        }
    }
}

/// Immutable interaction graph stored as sorted per-agent neighbor lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    neighbors: Vec<Vec<u32>>,
    provenance: Provenance,
    positions: Option<Vec<[f64; 2]>>,
    complete: bool,
}

impl Topology {
    /// Builds a topology from an undirected edge list. Rejects self-loops,
    /// out-of-range endpoints and repeated edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], provenance: Provenance) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        let mut seen = HashSet::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::MalformedTopology(format!(
                    "edge ({a}, {b}) out of range for {n} agents"
                )));
            }
            if a == b {
                return Err(Error::MalformedTopology(format!("self-loop at {a}")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::MalformedTopology(format!("duplicate edge ({a}, {b})")));
            }
            neighbors[a].push(b as u32);
            neighbors[b].push(a as u32);
        }
        Ok(Self::from_lists(neighbors, provenance, None))
    }

    /// Wraps raw neighbor lists without validation; [`check_topology`] reports
    /// whatever is wrong with them.
    pub fn from_neighbor_lists_unchecked(neighbors: Vec<Vec<u32>>, provenance: Provenance) -> Self {
        Self::from_lists(neighbors, provenance, None)
    }

    fn from_lists(
        mut neighbors: Vec<Vec<u32>>,
        provenance: Provenance,
        positions: Option<Vec<[f64; 2]>>,
    ) -> Self {
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let n = neighbors.len();
        let complete = n > 0
            && neighbors.iter().enumerate().all(|(i, l)| {
                l.len() == n - 1 && l.iter().all(|&j| j as usize != i) && l.windows(2).all(|w| w[0] < w[1])
            });
        Topology {
            neighbors,
            provenance,
            positions,
            complete,
        }
    }

    pub fn complete(n: usize) -> Self {
        let neighbors = (0..n)
            .map(|i| (0..n as u32).filter(|&j| j as usize != i).collect())
            .collect();
        Self::from_lists(neighbors, Provenance::Regular { degree: n.saturating_sub(1) }, None)
    }

    /// Cycle 0-1-…-(n-1)-0.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidDegree { n, k: 2 });
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::from_edges(n, &edges, Provenance::Regular { degree: 2 })
    }

    pub fn n_agents(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, agent: usize) -> &[u32] {
        &self.neighbors[agent]
    }

    pub fn neighbor_lists(&self) -> &[Vec<u32>] {
        &self.neighbors
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    /// True when every agent neighbors every other agent.
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges `(i, j)` with `i < j`, sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = self
            .neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.iter().map(move |&j| (i, j as usize)))
            .filter(|&(i, j)| i < j)
            .collect();
        edges.sort_unstable();
        edges
    }

    pub fn summary(&self) -> TopologySummary {
        let degrees = self.neighbors.iter().map(Vec::len);
        let (min, max, sum) = degrees.fold((usize::MAX, 0, 0), |(lo, hi, s), d| {
            (lo.min(d), hi.max(d), s + d)
        });
        let n = self.n_agents();
        TopologySummary {
            provenance: self.provenance,
            min_degree: if n == 0 { 0 } else { min },
            max_degree: max,
            mean_degree: if n == 0 { 0.0 } else { sum as f64 / n as f64 },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TopologyDocument {
            n: self.n_agents(),
            provenance: self.provenance,
            edges: self.edges(),
            positions: self.positions.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TopologyDocument = serde_json::from_str(text)?;
        if let Some(pos) = &doc.positions {
            if pos.len() != doc.n {
                return Err(Error::MalformedTopology(format!(
                    "{} positions for {} agents",
                    pos.len(),
                    doc.n
                )));
            }
        }
        let mut topo = Self::from_edges(doc.n, &doc.edges, doc.provenance)?;
        topo.positions = doc.positions;
        Ok(topo)
    }
}

/// Compact description recorded alongside trajectories and run records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologySummary {
    pub provenance: Provenance,
    pub min_degree: usize,
    pub max_degree: usize,
    pub mean_degree: f64,
}

/// On-disk topology form. Edges are sorted so the output is byte-stable.
#[derive(Debug, Serialize, Deserialize)]
struct TopologyDocument {
    n: usize,
    provenance: Provenance,
    edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positions: Option<Vec<[f64; 2]>>,
}

/// Samples `n` uniform positions in the unit square and links pairs closer
/// than `range`. The result may be disconnected or edgeless.
pub fn generate_geometric(n: usize, range: f64, seed: u64) -> Result<Topology> {
    if n < 2 {
        return Err(Error::param("n_agents", format!("{n} < 2")));
    }
    let mut rng = stream_rng(seed, Stream::Topology);
    let positions: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
    geometric_from_positions(positions, range)
}

pub fn geometric_from_positions(positions: Vec<[f64; 2]>, range: f64) -> Result<Topology> {
    if range.is_nan() || range < 0.0 {
        return Err(Error::param("range", format!("{range} must be a non-negative number")));
    }
    let n = positions.len();
    let r2 = range * range;
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            if dx * dx + dy * dy < r2 {
                neighbors[i].push(j as u32);
                neighbors[j].push(i as u32);
            }
        }
    }
    Ok(Topology::from_lists(
        neighbors,
        Provenance::Geometric { range },
        Some(positions),
    ))
}

/// Degree left after removing a fraction `removal` of the links of a complete
/// graph: `N - 1 - floor(removal * N)`.
pub fn degree_from_removal(n: usize, removal: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&removal) {
        return Err(Error::param("removal", format!("{removal} not in [0, 1]")));
    }
    let removed = (removal * n as f64 + 1e-9).floor() as usize;
    match (n.saturating_sub(1)).checked_sub(removed) {
        Some(k) if k >= 1 => Ok(k),
        _ => Err(Error::param(
            "removal",
            format!("removing {removed} links per agent leaves no neighbors for N = {n}"),
        )),
    }
}

/// Samples a simple, connected `k`-regular graph on `n` vertices.
///
/// Small degrees use the pairing model with rejection of loops and
/// multi-edges. Larger degrees start from a circulant graph and randomize it
/// by degree-preserving double-edge swaps, on the complement when `k` is above
/// `(n - 1) / 2`. Disconnected samples are rejected; `max_retries` bounds the
/// number of rejected samples.
pub fn generate_k_regular(n: usize, k: usize, seed: u64, max_retries: usize) -> Result<Topology> {
    if k == 0 || k >= n {
        return Err(Error::InvalidDegree { n, k });
    }
    if (n * k) % 2 == 1 {
        return Err(Error::DegreeParity { n, k });
    }
    let provenance = Provenance::Regular { degree: k };
    if k == n - 1 {
        return Ok(Topology::complete(n));
    }
    let mut rng = stream_rng(seed, Stream::Topology);
    for _ in 0..max_retries.max(1) {
        let candidate = if k <= PAIRING_MAX_DEGREE {
            match pairing_sample(n, k, &mut rng) {
                Some(lists) => lists,
                None => continue,
            }
        } else {
            switched_circulant(n, k, &mut rng)
        };
        if component_sizes(&candidate).len() == 1 {
            return Ok(Topology::from_lists(candidate, provenance, None));
        }
    }
    Err(Error::RetriesExhausted {
        n,
        k,
        retries: max_retries,
    })
}

fn pairing_sample<R: Rng>(n: usize, k: usize, rng: &mut R) -> Option<Vec<Vec<u32>>> {
    let mut stubs: Vec<u32> = (0..n as u32).flat_map(|v| std::iter::repeat_n(v, k)).collect();
    stubs.shuffle(rng);
    let mut lists = vec![Vec::with_capacity(k); n];
    for pair in stubs.chunks_exact(2) {
        let (a, b) = (pair[0], pair[1]);
        if a == b || lists[a as usize].contains(&b) {
            return None;
        }
        lists[a as usize].push(b);
        lists[b as usize].push(a);
    }
    Some(lists)
}

fn circulant_edges(n: usize, k: usize) -> Vec<(u32, u32)> {
    let mut edges = Vec::with_capacity(n * k / 2);
    for i in 0..n {
        for d in 1..=k / 2 {
            edges.push((i as u32, ((i + d) % n) as u32));
        }
        if k % 2 == 1 && i < n / 2 {
            edges.push((i as u32, (i + n / 2) as u32));
        }
    }
    edges
}

fn switched_circulant<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<Vec<u32>> {
    // Swapping on the sparser of the graph and its complement mixes faster.
    let use_complement = k > (n - 1) / 2;
    let work_degree = if use_complement { n - 1 - k } else { k };
    let mut edges = circulant_edges(n, work_degree);
    let key = |a: u32, b: u32| if a < b { (a, b) } else { (b, a) };
    let mut present: HashSet<(u32, u32)> = edges.iter().map(|&(a, b)| key(a, b)).collect();
    let m = edges.len();
    if m >= 2 {
        for _ in 0..SWAPS_PER_EDGE * m {
            let i = rng.random_range(0..m);
            let j = rng.random_range(0..m);
            if i == j {
                continue;
            }
            let (a, b) = edges[i];
            let (mut c, mut d) = edges[j];
            if rng.random_bool(0.5) {
                std::mem::swap(&mut c, &mut d);
            }
            // (a,b),(c,d) -> (a,d),(c,b)
            if a == d || c == b || present.contains(&key(a, d)) || present.contains(&key(c, b)) {
                continue;
            }
            present.remove(&key(a, b));
            present.remove(&key(c, d));
            present.insert(key(a, d));
            present.insert(key(c, b));
            edges[i] = (a, d);
            edges[j] = (c, b);
        }
    }
    if use_complement {
        (0..n as u32)
            .map(|v| {
                (0..n as u32)
                    .filter(|&u| u != v && !present.contains(&key(u, v)))
                    .collect()
            })
            .collect()
    } else {
        let mut lists = vec![Vec::with_capacity(k); n];
        for (a, b) in edges {
            lists[a as usize].push(b);
            lists[b as usize].push(a);
        }
        lists
    }
}

/// Sizes of connected components, largest first (breadth-first search).
/// Edges are followed in both directions.
fn component_sizes(lists: &[Vec<u32>]) -> Vec<usize> {
    let n = lists.len();
    let mut undirected = vec![Vec::new(); n];
    for (i, l) in lists.iter().enumerate() {
        for &j in l {
            if (j as usize) < n {
                undirected[i].push(j as usize);
                undirected[j as usize].push(i);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut size = 0;
        while let Some(v) = queue.pop_front() {
            size += 1;
            for &u in &undirected[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Findings of [`check_topology`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TopologyReport {
    pub n_agents: usize,
    /// Directed entries `(i, j)` with `j ∈ N_i` but `i ∉ N_j`.
    pub asymmetric: Vec<(usize, usize)>,
    pub self_loops: Vec<usize>,
    /// `(i, j)` where `j` appears more than once in `N_i`.
    pub duplicates: Vec<(usize, usize)>,
    pub out_of_range: Vec<(usize, usize)>,
    pub degree_histogram: BTreeMap<usize, usize>,
    /// Component sizes, largest first.
    pub components: Vec<usize>,
}

impl TopologyReport {
    pub fn is_symmetric(&self) -> bool {
        self.asymmetric.is_empty()
    }

    pub fn is_simple(&self) -> bool {
        self.self_loops.is_empty() && self.duplicates.is_empty() && self.out_of_range.is_empty()
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn is_connected(&self) -> bool {
        self.components.len() == 1
    }

    /// `Some(k)` when every agent has exactly `k` neighbors.
    pub fn regular_degree(&self) -> Option<usize> {
        match (self.degree_histogram.len(), self.degree_histogram.iter().next()) {
            (1, Some((&k, _))) => Some(k),
            _ => None,
        }
    }
}

/// Structural validation. Never mutates the topology.
pub fn check_topology(topology: &Topology) -> TopologyReport {
    let lists = topology.neighbor_lists();
    let n = lists.len();
    let mut report = TopologyReport {
        n_agents: n,
        asymmetric: Vec::new(),
        self_loops: Vec::new(),
        duplicates: Vec::new(),
        out_of_range: Vec::new(),
        degree_histogram: BTreeMap::new(),
        components: component_sizes(lists),
    };
    for (i, list) in lists.iter().enumerate() {
        *report.degree_histogram.entry(list.len()).or_default() += 1;
        let mut sorted = list.clone();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                report.duplicates.push((i, w[0] as usize));
            }
        }
        for &j in list {
            let j = j as usize;
            if j >= n {
                report.out_of_range.push((i, j));
            } else if j == i {
                report.self_loops.push(i);
            } else if !lists[j].contains(&(i as u32)) {
                report.asymmetric.push((i, j));
            }
        }
    }
    report.duplicates.dedup();
    report
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn geometric_range_zero_is_edgeless() {
        let t = generate_geometric(3, 0.0, 1).unwrap();
        assert_eq!(t.edge_count(), 0);
        assert_eq!(check_topology(&t).component_count(), 3);
    }

    #[test]
    fn geometric_wide_range_is_complete() {
        for seed in 0..5 {
            let t = generate_geometric(50, 1.5, seed).unwrap();
            assert!(t.is_complete());
        }
    }

    #[test]
    fn geometric_from_fixed_positions() {
        let t = geometric_from_positions(vec![[0.1, 0.1], [0.2, 0.1], [0.9, 0.9]], 0.15).unwrap();
        assert_eq!(t.edges(), vec![(0, 1)]);
        assert!(geometric_from_positions(vec![[0.0, 0.0]; 2], -1.0).is_err());
    }

    #[test]
    fn geometric_distance_is_strict() {
        let t = geometric_from_positions(vec![[0.0, 0.0], [0.5, 0.0]], 0.5).unwrap();
        assert_eq!(t.edge_count(), 0);
    }

    #[test]
    fn k_regular_small_cases() {
        let t = generate_k_regular(4, 3, 9, DEFAULT_MAX_RETRIES).unwrap();
        assert!(t.is_complete());
        assert!(matches!(
            generate_k_regular(5, 3, 9, DEFAULT_MAX_RETRIES),
            Err(Error::DegreeParity { n: 5, k: 3 })
        ));
        assert!(matches!(
            generate_k_regular(5, 5, 9, DEFAULT_MAX_RETRIES),
            Err(Error::InvalidDegree { .. })
        ));
        assert!(matches!(
            generate_k_regular(10, 1, 9, 20),
            Err(Error::RetriesExhausted { .. })
        ));
        // A perfect matching on two vertices is connected.
        assert_eq!(generate_k_regular(2, 1, 9, 1).unwrap().edges(), vec![(0, 1)]);
    }

    #[test]
    fn k_regular_passes_validation() {
        for (k, seed) in [(2, 1), (3, 2), (4, 3), (6, 4), (19, 5), (20, 6), (49, 7), (97, 8), (98, 9)] {
            let t = generate_k_regular(100, k, seed, DEFAULT_MAX_RETRIES).unwrap();
            let r = check_topology(&t);
            assert!(r.is_symmetric() && r.is_simple(), "k = {k}");
            assert_eq!(r.regular_degree(), Some(k));
            assert!(r.is_connected());
        }
    }

    #[test]
    fn k_regular_is_randomized() {
        let a = generate_k_regular(100, 6, 1, DEFAULT_MAX_RETRIES).unwrap();
        let b = generate_k_regular(100, 6, 2, DEFAULT_MAX_RETRIES).unwrap();
        assert_ne!(a.edges(), b.edges());
        assert_eq!(a, generate_k_regular(100, 6, 1, DEFAULT_MAX_RETRIES).unwrap());
        let circulant: HashSet<_> = circulant_edges(100, 6)
            .into_iter()
            .map(|(a, b)| (a.min(b) as usize, a.max(b) as usize))
            .collect();
        let kept = a.edges().iter().filter(|e| circulant.contains(e)).count();
        assert!(kept < 100, "{kept} of 300 circulant edges survived");
    }

    #[test]
    fn removal_degree_examples() {
        assert_eq!(degree_from_removal(100, 0.8).unwrap(), 19);
        assert_eq!(degree_from_removal(100, 0.0).unwrap(), 99);
        assert_eq!(degree_from_removal(50, 0.9).unwrap(), 4);
        assert_eq!(degree_from_removal(100, 0.9).unwrap(), 9);
        assert_eq!(degree_from_removal(100, 0.5).unwrap(), 49);
        assert_eq!(degree_from_removal(100, 0.7).unwrap(), 29);
        assert!(degree_from_removal(10, 1.0).is_err());
        assert!(degree_from_removal(10, 1.2).is_err());
    }

    #[test]
    fn report_examples() {
        let r = check_topology(&Topology::complete(5));
        assert!(r.is_symmetric());
        assert_eq!(r.component_count(), 1);
        assert_eq!(r.degree_histogram, BTreeMap::from([(4, 5)]));

        let r = check_topology(&Topology::from_edges(5, &[], Provenance::Custom).unwrap());
        assert_eq!(r.component_count(), 5);
    }

    #[test]
    fn report_flags_defects() {
        let t = Topology::from_neighbor_lists_unchecked(
            vec![vec![0, 1, 1], vec![], vec![7]],
            Provenance::Custom,
        );
        let r = check_topology(&t);
        assert_eq!(r.self_loops, vec![0]);
        assert_eq!(r.duplicates, vec![(0, 1)]);
        assert_eq!(r.asymmetric, vec![(0, 1), (0, 1)]);
        assert_eq!(r.out_of_range, vec![(2, 7)]);
        assert!(!r.is_simple() && !r.is_symmetric());
    }

    #[test]
    fn from_edges_rejects_bad_input() {
        assert!(Topology::from_edges(3, &[(0, 0)], Provenance::Custom).is_err());
        assert!(Topology::from_edges(3, &[(0, 1), (1, 0)], Provenance::Custom).is_err());
        assert!(Topology::from_edges(3, &[(0, 3)], Provenance::Custom).is_err());
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let t = generate_geometric(20, 0.4, 3).unwrap();
        let text = t.to_json().unwrap();
        let back = Topology::from_json(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_json().unwrap(), text);
        let r = Topology::from_json(&generate_k_regular(30, 4, 1, 1000).unwrap().to_json().unwrap());
        assert_eq!(check_topology(&r.unwrap()).regular_degree(), Some(4));
    }

    proptest! {
        #[test]
        fn geometric_edges_monotone_in_range(seed in any::<u64>(), r1 in 0.0f64..1.5, r2 in 0.0f64..1.5) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let a = generate_geometric(60, lo, seed).unwrap();
            let b = generate_geometric(60, hi, seed).unwrap();
            prop_assert!(a.edge_count() <= b.edge_count());
            prop_assert!(check_topology(&a).is_symmetric());
        }

        #[test]
        fn validation_does_not_mutate(seed in any::<u64>()) {
            let t = generate_k_regular(40, 6, seed, DEFAULT_MAX_RETRIES).unwrap();
            let before = t.clone();
            let _ = check_topology(&t);
            prop_assert_eq!(t, before);
        }
    }
}
