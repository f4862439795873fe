#![allow(dead_code)]

use std::path::{Path, PathBuf};

use lpperm::instance::{scale_instance, QapInstance};
use lpperm::io::read_qaplib;
use lpperm::matrix::{Permutation, SquareMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric-free integer instance with zero diagonals.
pub fn random_int_instance(rng: &mut impl Rng, n: usize, hi: u32) -> QapInstance {
    loop {
        let a = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { rng.random_range(0..hi) as f64 });
        let b = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { rng.random_range(0..hi) as f64 });
        if let Ok(inst) = scale_instance(&a, &b) {
            return inst;
        }
    }
}

pub fn random_matrix(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> SquareMatrix {
    SquareMatrix::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Exhaustive minimum of the scaled objective.
pub fn brute_force(inst: &QapInstance) -> (Permutation, f64) {
    Permutation::all(inst.n())
        .into_iter()
        .map(|p| {
            let f = inst.perm_objective(&p);
            (p, f)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

/// Dykstra's alternating projections onto {row sums 1}, {column sums 1}
/// and the nonnegative orthant; an oracle independent of the dual method.
pub fn dykstra(c: &SquareMatrix, tol: f64, max_sweeps: usize) -> SquareMatrix {
    let n = c.n();
    let nf = n as f64;
    let mut x = c.clone();
    let mut p_inc = vec![SquareMatrix::zeros(n); 3];
    for _ in 0..max_sweeps {
        let prev = x.clone();
        for (k, inc) in p_inc.iter_mut().enumerate() {
            let y = x.add(inc);
            let proj = match k {
                0 => {
                    let rs = y.row_sums();
                    SquareMatrix::from_fn(n, |i, j| y[(i, j)] + (1.0 - rs[i]) / nf)
                }
                1 => {
                    let cs = y.col_sums();
                    SquareMatrix::from_fn(n, |i, j| y[(i, j)] + (1.0 - cs[j]) / nf)
                }
                _ => y.map(|v| v.max(0.0)),
            };
            *inc = y.sub(&proj);
            x = proj;
        }
        if x.dist(&prev) < tol {
            break;
        }
    }
    x
}

pub fn qaplib_dir() -> PathBuf {
    match std::env::var_os("QAPLIB_DIR") {
        Some(d) => PathBuf::from(d),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/qaplib"),
    }
}

pub fn fixture(name: &str) -> QapInstance {
    read_qaplib(&Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("tests/data/qaplib/{name}.dat"))).unwrap()
}
