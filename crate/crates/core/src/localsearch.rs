//! Greedy rounding and best-improvement 2-opt over transpositions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::QapInstance;
use crate::matrix::{Permutation, SquareMatrix};

/// Exchange of the assignments at positions `r` and `s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwapMove {
    r: usize,
    s: usize,
}

impl SwapMove {
    pub fn new(r: usize, s: usize) -> Result<Self> {
        if r == s {
            return Err(Error::InvalidParameter(format!("swap positions must differ, got {r} twice")));
        }
        Ok(Self { r: r.min(s), s: r.max(s) })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn s(&self) -> usize {
        self.s
    }
}

/// Rounds a (near) doubly stochastic matrix to a permutation.
///
/// Rows are visited in ascending order of their largest entry; each takes
/// its largest still-free column. Ties go to the lower index.
pub fn greedy_round(x: &SquareMatrix) -> Permutation {
    let n = x.n();
    let maxima: Vec<f64> = (0..n).map(|i| x.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| maxima[i].total_cmp(&maxima[j]).then(i.cmp(&j)));

    // row_of[col] is the row (facility) assigned to column col
    let mut row_of = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for &i in &order {
        let row = x.row(i);
        let mut best = usize::MAX;
        for j in 0..n {
            if !used[j] && (best == usize::MAX || row[j] > row[best]) {
                best = j;
            }
        }
        used[best] = true;
        row_of[best] = i;
    }
    Permutation::from_zero_based(row_of).expect("greedy assignment is a bijection")
}

/// `f(p with positions r, s exchanged) - f(p)` in O(n).
pub fn swap_delta(inst: &QapInstance, p: &Permutation, mv: SwapMove) -> f64 {
    swap_delta_raw(&inst.a, &inst.b, p.as_slice(), mv.r, mv.s)
}

fn swap_delta_raw(a: &SquareMatrix, b: &SquareMatrix, pi: &[usize], r: usize, s: usize) -> f64 {
    let (u, v) = (pi[r], pi[s]);
    let (au, av) = (a.row(u), a.row(v));
    let (br, bs) = (b.row(r), b.row(s));
    let mut d = (a[(v, v)] - a[(u, u)]) * (b[(r, r)] - b[(s, s)])
        + (a[(v, u)] - a[(u, v)]) * (b[(r, s)] - b[(s, r)]);
    for (l, &k) in pi.iter().enumerate() {
        if l == r || l == s {
            continue;
        }
        d += (av[k] - au[k]) * (br[l] - bs[l]);
        d += (a[(k, v)] - a[(k, u)]) * (b[(l, r)] - b[(l, s)]);
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalSearchResult {
    pub perm: Permutation,
    /// Scaled objective of `perm`.
    pub obj: f64,
    /// Full neighborhood scans, including the final non-improving one.
    pub sweeps: usize,
    /// Swap deltas evaluated.
    pub deltas: usize,
    /// Stopped at the sweep cap rather than at a local optimum.
    pub sweep_limit: bool,
}

/// Best-improvement 2-opt, capped at `10 n` sweeps.
pub fn local_2opt(inst: &QapInstance, p0: &Permutation) -> LocalSearchResult {
    local_2opt_capped(inst, p0, 10 * inst.n().max(1))
}

pub fn local_2opt_capped(inst: &QapInstance, p0: &Permutation, max_sweeps: usize) -> LocalSearchResult {
    let n = inst.n();
    let mut pi = p0.as_slice().to_vec();
    let mut obj = inst.perm_objective(p0);
    let mut sweeps = 0;
    let mut deltas = 0;
    let mut sweep_limit = true;

    while sweeps < max_sweeps {
        sweeps += 1;
        let mut best: Option<(f64, usize, usize)> = None;
        for r in 0..n {
            for s in r + 1..n {
                let d = swap_delta_raw(&inst.a, &inst.b, &pi, r, s);
                deltas += 1;
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, r, s));
                }
            }
        }
        let threshold = -1e-14 * obj.abs().max(1.0);
        match best {
            Some((d, r, s)) if d < threshold => {
                pi.swap(r, s);
                obj += d;
            }
            _ => {
                sweep_limit = false;
                break;
            }
        }
    }
    let perm = Permutation::from_zero_based(pi).expect("swaps preserve bijectivity");
    // refresh to shed accumulated round-off
    let obj = inst.perm_objective(&perm);
    LocalSearchResult { perm, obj, sweeps, deltas, sweep_limit }
}
