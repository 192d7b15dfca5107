//! Counting applications: matchings and spanning connected subgraphs of small
//! graphs, with exact counts by enumeration and a Metropolis matching sampler.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use crate::error::{domain, Error, Result};
use crate::gibbs::{GibbsInstance, Setting};
use crate::oracle::{Domain, OracleHandle, Sampler};
use crate::rng::StreamRng;

/// Default vertex limit for matching enumeration.
pub const MATCHING_LIMIT: usize = 16;
/// Default edge limit for connected-subgraph enumeration.
pub const SUBGRAPH_LIMIT: usize = 18;
// Bitmask enumeration caps, whatever the caller asks for.
const MAX_VERTICES: usize = 32;
const MAX_EDGES: usize = 30;

/// Simple undirected graph on vertices `0..vertices`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    vertices: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AdjacencyJson {
    Bare(Vec<Vec<usize>>),
    Wrapped { adjacency: Vec<Vec<usize>> },
}

impl Graph {
    /// Validates and normalizes edges to `(low, high)` in input order.
    pub fn new(vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u == v {
                return domain(format!("self-loop at vertex {u}"));
            }
            if u >= vertices || v >= vertices {
                return domain(format!("edge ({u}, {v}) leaves the vertex range 0..{vertices}"));
            }
            let e = (u.min(v), u.max(v));
            if !seen.insert(e) {
                return domain(format!("duplicate edge ({}, {})", e.0, e.1));
            }
            out.push(e);
        }
        Ok(Graph { vertices, edges: out })
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        Graph { vertices: n, edges }
    }

    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return domain("a cycle needs at least 3 vertices");
        }
        Graph::new(n, (0..n).map(|u| (u, (u + 1) % n)).collect())
    }

    pub fn path(n: usize) -> Self {
        Graph { vertices: n, edges: (1..n).map(|v| (v - 1, v)).collect() }
    }

    pub fn petersen() -> Self {
        let mut edges = Vec::new();
        for i in 0..5 {
            edges.push((i, (i + 1) % 5));
            edges.push((i, i + 5));
            edges.push((5 + i, 5 + (i + 2) % 5));
        }
        Graph::new(10, edges).expect("petersen graph is simple")
    }

    /// `K<n>`, `C<n>`, `P<n>` (path on n vertices) or `petersen`.
    pub fn named(name: &str) -> Result<Self> {
        if name.eq_ignore_ascii_case("petersen") {
            return Ok(Graph::petersen());
        }
        let (head, tail) = name.split_at(name.len().min(1));
        let n: usize = tail.parse().map_err(|_| Error::Domain(format!("unknown graph name {name:?}")))?;
        match head {
            "K" | "k" => Ok(Graph::complete(n)),
            "C" | "c" => Graph::cycle(n),
            "P" | "p" => Ok(Graph::path(n)),
            _ => domain(format!("unknown graph name {name:?}")),
        }
    }

    /// Parses `u v` lines with 0-indexed vertices. Blank lines and `#` comments
    /// are skipped; a line holding a single integer fixes the vertex count.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut edges = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::Domain(format!("line {}: {s:?} is not a vertex index", no + 1)))
            };
            match fields.as_slice() {
                [n] => declared = Some(parse(n)?),
                [u, v] => edges.push((parse(u)?, parse(v)?)),
                _ => return domain(format!("line {}: expected `u v`", no + 1)),
            }
        }
        let implied = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        Graph::new(declared.unwrap_or(implied), edges)
    }

    /// Parses an adjacency list, either a bare array of neighbour arrays or
    /// an object with an `adjacency` field. The lists must be symmetric.
    pub fn from_adjacency_json(text: &str) -> Result<Self> {
        let adj = match serde_json::from_str::<AdjacencyJson>(text)? {
            AdjacencyJson::Bare(a) | AdjacencyJson::Wrapped { adjacency: a } => a,
        };
        let n = adj.len();
        let mut edges = Vec::new();
        for (u, nbrs) in adj.iter().enumerate() {
            for &v in nbrs {
                if v >= n {
                    return domain(format!("neighbour {v} of {u} is out of range"));
                }
                if !adj[v].contains(&u) {
                    return domain(format!("adjacency is not symmetric at ({u}, {v})"));
                }
                if u < v {
                    edges.push((u, v));
                }
            }
        }
        Graph::new(n, edges)
    }

    /// Loads a `.json` adjacency file or an edge-list file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Graph::from_adjacency_json(&text)
        } else {
            Graph::from_edge_list(&text)
        }
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{}\n", self.vertices);
        for (u, v) in &self.edges {
            s.push_str(&format!("{u} {v}\n"));
        }
        s
    }

    fn neighbour_masks(&self) -> Vec<u64> {
        let mut adj = vec![0u64; self.vertices];
        for &(u, v) in &self.edges {
            adj[u] |= 1 << v;
            adj[v] |= 1 << u;
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        self.spans(self.edges.iter().copied())
    }

    fn spans(&self, edges: impl Iterator<Item = (usize, usize)>) -> bool {
        if self.vertices <= 1 {
            return true;
        }
        let mut parent: Vec<usize> = (0..self.vertices).collect();
        fn root(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut parts = self.vertices;
        for (u, v) in edges {
            let (a, b) = (root(&mut parent, u), root(&mut parent, v));
            if a != b {
                parent[a] = b;
                parts -= 1;
            }
        }
        parts == 1
    }
}

/// CSV text with header `i,<label>` and one row per size.
pub fn counts_csv(label: &str, counts: &[u64]) -> String {
    let mut s = format!("i,{label}\n");
    for (i, c) in counts.iter().enumerate() {
        s.push_str(&format!("{i},{c}\n"));
    }
    s
}

/// Number of `i`-edge matchings for `i = 0..=|V|/2`.
///
/// Backtracks on the lowest unvisited vertex (left unmatched or matched to a
/// neighbour), memoized on the set of vertices still available.
pub fn matching_counts(g: &Graph, limit: usize) -> Result<Vec<u64>> {
    let v = g.vertices();
    if v > limit.min(MAX_VERTICES) {
        return Err(Error::Refused(format!("{v} vertices exceeds the enumeration limit {}", limit.min(MAX_VERTICES))));
    }
    let adj = g.neighbour_masks();
    let mut memo: HashMap<u64, Vec<u64>> = HashMap::new();
    fn go(mask: u64, adj: &[u64], memo: &mut HashMap<u64, Vec<u64>>) -> Vec<u64> {
        if mask == 0 {
            return vec![1];
        }
        if let Some(r) = memo.get(&mask) {
            return r.clone();
        }
        let v = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << v);
        let mut out = go(rest, adj, memo);
        let mut nbrs = adj[v] & rest;
        while nbrs != 0 {
            let u = nbrs.trailing_zeros() as usize;
            nbrs &= nbrs - 1;
            let sub = go(rest & !(1 << u), adj, memo);
            if out.len() < sub.len() + 1 {
                out.resize(sub.len() + 1, 0);
            }
            for (i, c) in sub.iter().enumerate() {
                out[i + 1] += c;
            }
        }
        memo.insert(mask, out.clone());
        out
    }
    let full = if v == 64 { u64::MAX } else { (1u64 << v) - 1 };
    let mut counts = go(full, &adj, &mut memo);
    counts.resize(v / 2 + 1, 0);
    Ok(counts)
}

// Counts fall well within 2^53, so conversion to f64 is exact.
fn as_f64(c: &[u64]) -> Vec<f64> {
    c.iter().map(|&x| x as f64).collect()
}

const HYPOTHESIS_TOL: f64 = 1e-9;

fn check_range_hypothesis(inst: &GibbsInstance) {
    let c = inst.log_counts();
    let n = c.len() - 1;
    if n >= 1 {
        assert!(inst.beta_min() <= c[0] - c[1] + HYPOTHESIS_TOL, "beta_min above ln(c0/c1)");
        assert!(inst.beta_max() >= c[n - 1] - c[n] - HYPOTHESIS_TOL, "beta_max below ln(c_(n-1)/c_n)");
    }
}

/// Matching counts `M_0..M_v` and the instance with `c_i = M_i` on
/// `[-ln|E|, ln(M_(v-1)/M_v)]`.
pub fn matchings_instance(g: &Graph, limit: usize) -> Result<(Vec<u64>, GibbsInstance)> {
    let counts = matching_counts(g, limit)?;
    let v = g.vertices() / 2;
    if g.vertices() % 2 == 1 || g.num_edges() == 0 || counts[v] == 0 {
        return domain("the graph has no perfect matching");
    }
    let beta_min = -(g.num_edges() as f64).ln();
    let beta_max = (counts[v - 1] as f64 / counts[v] as f64).ln();
    let support = (0..=v).map(|k| k as f64).collect();
    let inst = GibbsInstance::new(support, as_f64(&counts), beta_min, beta_max)?;
    check_range_hypothesis(&inst);
    Ok((counts, inst))
}

/// Number `N_i` of spanning connected subgraphs with `i` edges, `i = 0..=|E|`.
pub fn connected_subgraph_counts(g: &Graph, limit: usize) -> Result<Vec<u64>> {
    let m = g.num_edges();
    if m > limit.min(MAX_EDGES) {
        return Err(Error::Refused(format!("{m} edges exceeds the enumeration limit {}", limit.min(MAX_EDGES))));
    }
    if !g.is_connected() {
        return domain("the graph is not connected");
    }
    let need = g.vertices().saturating_sub(1) as u32;
    let mut counts = vec![0u64; m + 1];
    for mask in 0u64..(1u64 << m) {
        // Fewer than |V|-1 edges can never span.
        if mask.count_ones() < need {
            continue;
        }
        let chosen = (0..m).filter(|&j| mask >> j & 1 == 1).map(|j| g.edges[j]);
        if g.spans(chosen) {
            counts[mask.count_ones() as usize] += 1;
        }
    }
    Ok(counts)
}

/// Counts `N_i` and the instance with `c_i = N_(|E|-i)` for `i = 0..=|E|-|V|+1`
/// on `[-ln|E|, ln|E|]`.
pub fn connected_subgraphs_instance(g: &Graph, limit: usize) -> Result<(Vec<u64>, GibbsInstance)> {
    let counts = connected_subgraph_counts(g, limit)?;
    let m = g.num_edges();
    let n = m + 1 - g.vertices().max(1);
    let c: Vec<u64> = (0..=n).map(|i| counts[m - i]).collect();
    let b = (m.max(1) as f64).ln();
    let support = (0..=n).map(|k| k as f64).collect();
    let inst = GibbsInstance::new(support, as_f64(&c), -b, b)?;
    check_range_hypothesis(&inst);
    Ok((counts, inst))
}

/// Lazy Metropolis chain on the matchings of a graph, stationary law
/// proportional to `e^{beta |M|}`. Each draw continues the chain for a fixed
/// number of steps and reports the matching size.
#[derive(Clone)]
pub struct MatchingChain {
    edges: Vec<(usize, usize)>,
    vertices: usize,
    mate: Vec<Option<usize>>,
    size: usize,
    domain: Domain,
    mixing_constant: f64,
    log_inv_tv: f64,
}

impl MatchingChain {
    pub fn new(g: &Graph, beta_range: (f64, f64), mixing_constant: f64, d_tv_target: f64) -> Result<Self> {
        if g.num_edges() == 0 {
            return domain("the graph has no edges");
        }
        if !(d_tv_target > 0.0 && d_tv_target < 1.0) {
            return domain("d_tv_target must lie in (0, 1)");
        }
        if !(mixing_constant > 0.0 && mixing_constant.is_finite()) {
            return domain("mixing_constant must be positive");
        }
        let (beta_min, beta_max) = beta_range;
        if !(beta_min.is_finite() && beta_max.is_finite() && beta_min <= beta_max) {
            return domain("bad inverse-temperature range");
        }
        let n = g.vertices() / 2;
        Ok(MatchingChain {
            edges: g.edges().to_vec(),
            vertices: g.vertices(),
            mate: vec![None; g.vertices()],
            size: 0,
            domain: Domain {
                beta_min,
                beta_max,
                n: n as f64,
                support: (0..=n).map(|k| k as f64).collect(),
                setting: Setting::LogConcave,
            },
            mixing_constant,
            log_inv_tv: (1.0 / d_tv_target).ln(),
        })
    }

    /// Chain steps per draw at `beta`.
    pub fn steps(&self, beta: f64) -> u64 {
        let v = self.vertices as f64;
        let t = self.mixing_constant * self.edges.len() as f64 * v * v * (1.0 + beta.exp()) * self.log_inv_tv;
        t.ceil().max(1.0) as u64
    }

    fn step(&mut self, beta: f64, rng: &mut StreamRng) {
        if rng.random::<bool>() {
            return;
        }
        let (u, v) = self.edges[rng.random_range(0..self.edges.len())];
        match (self.mate[u], self.mate[v]) {
            (Some(w), _) if w == v => {
                if beta >= 0.0 || rng.random::<f64>() < beta.exp() {
                    self.mate[u] = None;
                    self.mate[v] = None;
                    self.size -= 1;
                }
            }
            (None, None) => {
                if beta <= 0.0 && rng.random::<f64>() >= beta.exp() {
                    return;
                }
                self.mate[u] = Some(v);
                self.mate[v] = Some(u);
                self.size += 1;
            }
            (Some(w), None) => self.slide(u, w, v),
            (None, Some(w)) => self.slide(v, w, u),
            _ => {}
        }
    }

    // Replace `keep`-`old` with `keep`-`new`; the size is unchanged.
    fn slide(&mut self, keep: usize, old: usize, new: usize) {
        self.mate[old] = None;
        self.mate[keep] = Some(new);
        self.mate[new] = Some(keep);
    }
}

impl Sampler for MatchingChain {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn sample(&mut self, beta: f64, rng: &mut StreamRng) -> Result<f64> {
        for _ in 0..self.steps(beta) {
            self.step(beta, rng);
        }
        Ok(self.size as f64)
    }

    fn fork(&self) -> Result<Box<dyn Sampler>> {
        Ok(Box::new(self.clone()))
    }
}

/// Oracle backed by [`MatchingChain`]; its cost counts draws, not chain steps.
pub fn js_matching_oracle(
    g: &Graph,
    beta_range: (f64, f64),
    mixing_constant: f64,
    d_tv_target: f64,
    seed: u64,
) -> Result<OracleHandle> {
    let chain = MatchingChain::new(g, beta_range, mixing_constant, d_tv_target)?;
    Ok(OracleHandle::new(Box::new(chain), seed, "matching-chain"))
}
