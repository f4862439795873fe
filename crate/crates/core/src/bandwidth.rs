//! Bandwidth minimization through a QAP with a Toeplitz penalty and
//! bisection on the target bandwidth, seeded by reverse Cuthill-McKee.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::enhancements::{run_variant, EnhanceConfig, Variant};
use crate::error::{Error, Result};
use crate::instance::scale_instance;
use crate::matrix::{Permutation, SquareMatrix};
use crate::solver::SolverConfig;

/// Symmetric zero/nonzero pattern without self loops.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternMatrix {
    n: usize,
    adj: Vec<Vec<usize>>,
}

impl PatternMatrix {
    /// Builds the symmetric pattern of 0-based `edges`; diagonal entries
    /// and duplicates are dropped.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange { line: 0, index: i.max(j) + 1, n });
            }
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        Ok(Self { n, adj })
    }

    pub fn from_dense(a: &SquareMatrix) -> Self {
        let n = a.n();
        let edges = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| a[(i, j)] != 0.0);
        Self::new(n, edges).expect("indices in range")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    /// Each undirected edge once, as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, row)| row.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// The binarized matrix with a zero diagonal.
    pub fn to_dense(&self) -> SquareMatrix {
        let mut m = SquareMatrix::zeros(self.n);
        for (i, j) in self.edges() {
            m[(i, j)] = 1.0;
            m[(j, i)] = 1.0;
        }
        m
    }

    /// The pattern with vertex `p[j]` moved to position `j`.
    pub fn permuted(&self, p: &Permutation) -> Self {
        let pos = p.inverse();
        let pos = pos.as_slice();
        Self::new(self.n, self.edges().map(|(i, j)| (pos[i], pos[j]))).expect("indices in range")
    }
}

/// `max |pos(i) - pos(j)|` over edges, where vertex `p[k]` sits at position `k`.
pub fn bandwidth_of(a: &PatternMatrix, p: Option<&Permutation>) -> usize {
    let pos: Vec<usize> = match p {
        Some(p) => p.inverse().as_slice().to_vec(),
        None => (0..a.n).collect(),
    };
    a.edges().map(|(i, j)| pos[i].abs_diff(pos[j])).max().unwrap_or(0)
}

/// `(B_m)_ij = max(|i - j| - m, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ToeplitzPenalty {
    pub n: usize,
    pub m: usize,
}

impl ToeplitzPenalty {
    pub fn dense(&self) -> SquareMatrix {
        SquareMatrix::from_fn(self.n, |i, j| i.abs_diff(j).saturating_sub(self.m) as f64)
    }
}

pub fn toeplitz_penalty(n: usize, m: usize) -> Result<ToeplitzPenalty> {
    if n == 0 || m > n - 1 {
        return Err(Error::InvalidParameter(format!("bandwidth target {m} outside 0..={}", n.saturating_sub(1))));
    }
    Ok(ToeplitzPenalty { n, m })
}

/// Penalty of an ordering: zero exactly when its bandwidth is at most `m`.
pub fn band_penalty(a: &PatternMatrix, m: usize, p: Option<&Permutation>) -> f64 {
    let pos: Vec<usize> = match p {
        Some(p) => p.inverse().as_slice().to_vec(),
        None => (0..a.n).collect(),
    };
    // each undirected edge appears twice in <A, X B_m X^T>
    a.edges().map(|(i, j)| 2.0 * pos[i].abs_diff(pos[j]).saturating_sub(m) as f64).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HValue {
    /// Unscaled objective, an upper bound on `h(m)`.
    pub value: f64,
    pub perm: Permutation,
}

/// Upper bound on `h(m) = min tr(X^T A X B_m)` from the chosen solver variant.
pub fn h_of_m(
    a: &PatternMatrix,
    m: usize,
    cfg: &SolverConfig,
    ecfg: &EnhanceConfig,
    variant: Variant,
) -> Result<HValue> {
    let n = a.n();
    let tp = toeplitz_penalty(n, m)?;
    if m == n - 1 || a.edge_count() == 0 {
        return Ok(HValue { value: 0.0, perm: Permutation::identity(n) });
    }
    let inst = scale_instance(&a.to_dense(), &tp.dense())?.with_name(format!("h({m})"));
    let res = run_variant(&inst, cfg, ecfg, variant)?;
    Ok(HValue { value: res.f_best, perm: res.x_best })
}

/// Vertices reachable from `start`, grouped by BFS level.
fn level_structure(a: &PatternMatrix, start: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; a.n];
    seen[start] = true;
    let mut levels = vec![vec![start]];
    loop {
        let mut next = Vec::new();
        for &v in levels.last().expect("nonempty") {
            for &w in a.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        levels.push(next);
    }
}

/// George-Liu pseudo-peripheral vertex of the component containing `start`.
fn pseudo_peripheral(a: &PatternMatrix, start: usize) -> usize {
    let mut root = start;
    let mut levels = level_structure(a, root);
    loop {
        let last = levels.last().expect("nonempty");
        let cand = *last.iter().min_by_key(|&&v| (a.degree(v), v)).expect("nonempty level");
        let cand_levels = level_structure(a, cand);
        if cand_levels.len() > levels.len() {
            root = cand;
            levels = cand_levels;
        } else {
            return root;
        }
    }
}

/// Reverse Cuthill-McKee ordering; entry `k` is the vertex placed at position `k`.
pub fn rcm_order(a: &PatternMatrix) -> Permutation {
    let n = a.n;
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // lowest-degree vertex of the component, ties by index
        let comp = level_structure(a, seed).concat();
        let start = *comp.iter().min_by_key(|&&v| (a.degree(v), v)).expect("nonempty component");
        let root = pseudo_peripheral(a, start);
        let mut cm = Vec::with_capacity(comp.len());
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(v) = queue.pop_front() {
            cm.push(v);
            let mut nb: Vec<usize> = a.neighbors(v).iter().cloned().filter(|&w| !visited[w]).collect();
            nb.sort_by_key(|&w| (a.degree(w), w));
            for w in nb {
                visited[w] = true;
                queue.push_back(w);
            }
        }
        cm.reverse();
        order.extend(cm);
    }
    Permutation::from_zero_based(order).expect("every vertex visited once")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub m: usize,
    pub value: f64,
    pub certified: bool,
    pub lower: usize,
    pub upper: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthResult {
    pub bw: usize,
    pub perm: Permutation,
    pub rcm_bw: usize,
    pub trace: Vec<BisectionStep>,
}

/// Bisection on `m` between an infeasible lower end and a certified upper
/// end, starting from the reverse Cuthill-McKee bandwidth.
pub fn run_bi_lp(
    a: &PatternMatrix,
    cfg: &SolverConfig,
    ecfg: &EnhanceConfig,
    variant: Variant,
) -> Result<BandwidthResult> {
    let rcm = rcm_order(a);
    let rcm_bw = bandwidth_of(a, Some(&rcm));
    if a.edge_count() == 0 {
        return Ok(BandwidthResult { bw: 0, perm: rcm, rcm_bw, trace: Vec::new() });
    }
    let mut lower = 0;
    let mut upper = rcm_bw;
    let mut cert = rcm;
    let mut trace = Vec::new();
    while upper - lower > 1 {
        let m = (lower + upper).div_ceil(2);
        let h = h_of_m(a, m, cfg, ecfg, variant)?;
        let certified = h.value < 0.5;
        if certified {
            let bw = bandwidth_of(a, Some(&h.perm));
            debug_assert!(bw <= m);
            upper = bw.min(m);
            cert = h.perm;
        } else {
            lower = m;
        }
        trace.push(BisectionStep { m, value: h.value, certified, lower, upper });
    }
    Ok(BandwidthResult { bw: bandwidth_of(a, Some(&cert)), perm: cert, rcm_bw, trace })
}

/// Random pattern of bandwidth exactly `k` hidden behind a random relabeling.
/// Returns the scrambled pattern and the relabeling that restores the band.
pub fn planted_band(n: usize, k: usize, seed: u64) -> (PatternMatrix, Permutation) {
    assert!(k >= 1 && k < n, "band width must lie in 1..n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..(i + k + 1).min(n) {
            if j == i + 1 || j == i + k || rng.random_bool(0.5) {
                edges.push((i, j));
            }
        }
    }
    let band = PatternMatrix::new(n, edges).expect("indices in range");
    let mut pi: Vec<usize> = (0..n).collect();
    pi.shuffle(&mut rng);
    let scramble = Permutation::from_zero_based(pi).expect("shuffle is a bijection");
    // vertex v of the band becomes vertex scramble^{-1}(v) of the output
    let scrambled = band.permuted(&scramble);
    (scrambled, scramble.inverse())
}
