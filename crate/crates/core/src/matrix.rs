//! Dense square matrices, permutations and doubly stochastic points.
//!
//! Storage is row-major. Permutations are stored 0-based; every external
//! format (files, reports, CLI) uses the 1-based convention where
//! `pi[j] = i` means `X[i][j] = 1`.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default feasibility tolerance for doubly stochastic points.
pub const FEAS_TOL: f64 = 1e-8;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Self { n, data: vec![value; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// The barycenter of the Birkhoff polytope, `(1/n) * ones`.
    pub fn barycenter(n: usize) -> Self {
        Self::filled(n, 1.0 / n as f64)
    }

    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: data.len() });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: k / n, col: k % n });
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(n, data)
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        Self::from_fn(n, |i, j| self.data[j * n + i])
    }

    /// `self * other`, i-k-j loop order.
    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        debug_assert_eq!(n, other.n);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let out_row = &mut out[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self { n, data: out }
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_t(&self, other: &Self) -> Self {
        let n = self.n;
        debug_assert_eq!(n, other.n);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let a_row = self.row(i);
            for j in 0..n {
                out[i * n + j] = dot(a_row, other.row(j));
            }
        }
        Self { n, data: out }
    }

    /// `self^T * other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Self {
        let n = self.n;
        debug_assert_eq!(n, other.n);
        let mut out = vec![0.0; n * n];
        for k in 0..n {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for i in 0..n {
                let a = a_row[i];
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out[i * n..(i + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self { n, data: out }
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for i in 0..self.n {
            for (acc, v) in s.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        s
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|v| f(*v)).collect() }
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| (i + 1..n).all(|j| self.data[i * n + j] == self.data[j * n + i]))
    }

    /// Largest violation of the doubly stochastic constraints.
    pub fn birkhoff_violation(&self) -> f64 {
        let rows = self.row_sums().into_iter().map(|s| (s - 1.0).abs());
        let cols = self.col_sums().into_iter().map(|s| (s - 1.0).abs());
        let neg = (-self.min_entry()).max(0.0);
        rows.chain(cols).fold(neg, f64::max)
    }

    /// `sum_ij |x_ij|^p`
    pub fn lp_pow(&self, p: f64) -> f64 {
        self.data.iter().map(|v| v.abs().powf(p)).sum()
    }

    /// Number of entries with magnitude above `thresh`.
    pub fn count_nonzero(&self, thresh: f64) -> usize {
        self.data.iter().filter(|v| v.abs() > thresh).count()
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SquareMatrix({})[", self.n)?;
        for i in 0..self.n {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A bijection on `0..n`, `pi[j] = i` meaning `X[i][j] = 1`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn from_zero_based(pi: Vec<usize>) -> Result<Self> {
        let n = pi.len();
        let mut seen = vec![false; n];
        for &i in &pi {
            if i >= n {
                return Err(Error::InvalidPermutation(format!("index {} out of range for n = {n}", i + 1)));
            }
            if seen[i] {
                return Err(Error::InvalidPermutation(format!("index {} repeated", i + 1)));
            }
            seen[i] = true;
        }
        Ok(Self(pi))
    }

    pub fn from_one_based(pi: &[usize]) -> Result<Self> {
        if pi.contains(&0) {
            return Err(Error::InvalidPermutation("0 is not a valid 1-based index".into()));
        }
        Self::from_zero_based(pi.iter().map(|i| i - 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (j, &i) in self.0.iter().enumerate() {
            inv[i] = j;
        }
        Self(inv)
    }

    /// Exchanges the assignments of positions `r` and `s`.
    pub fn swap(&mut self, r: usize, s: usize) {
        self.0.swap(r, s);
    }

    pub fn swapped(&self, r: usize, s: usize) -> Self {
        let mut p = self.clone();
        p.swap(r, s);
        p
    }

    /// Number of positions where both permutations agree, i.e. `<X, Y>`.
    pub fn overlap(&self, other: &Self) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a == b).count()
    }

    /// All permutations of `0..n` in lexicographic order. Only sensible for small n.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..n).collect();
        loop {
            out.push(Self(cur.clone()));
            // next lexicographic permutation
            let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
                break;
            };
            let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).unwrap();
            cur.swap(i, j);
            cur[i + 1..].reverse();
        }
        out
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::from_zero_based(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation{:?}", self.one_based())
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.one_based().iter().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// `X[pi[j]][j] = 1`, zeros elsewhere.
pub fn perm_to_matrix(p: &Permutation) -> SquareMatrix {
    let n = p.len();
    let mut m = SquareMatrix::zeros(n);
    for (j, &i) in p.as_slice().iter().enumerate() {
        m[(i, j)] = 1.0;
    }
    m
}

/// Column-wise strict argmax. Errors when two columns pick the same row or
/// a column has no unique maximum.
pub fn matrix_to_perm(x: &SquareMatrix) -> Result<Permutation> {
    let n = x.n();
    let mut pi = Vec::with_capacity(n);
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for j in 0..n {
        let mut best = 0;
        for i in 1..n {
            if x[(i, j)] > x[(best, j)] {
                best = i;
            }
        }
        if (0..n).any(|i| i != best && x[(i, j)] == x[(best, j)]) {
            // tie within the column: treat as collision with itself
            return Err(Error::NotPermutationLike(j + 1, j + 1));
        }
        if let Some(prev) = owner[best] {
            return Err(Error::NotPermutationLike(prev + 1, j + 1));
        }
        owner[best] = Some(j);
        pi.push(best);
    }
    Permutation::from_zero_based(pi)
}

/// A matrix certified to lie in the Birkhoff polytope within `feas_tol`.
#[derive(Clone, Debug, PartialEq)]
pub struct BirkhoffPoint {
    m: SquareMatrix,
    feas_tol: f64,
}

impl BirkhoffPoint {
    pub fn new(m: SquareMatrix, feas_tol: f64) -> Result<Self> {
        let v = m.birkhoff_violation();
        if v > feas_tol {
            return Err(Error::InvalidParameter(format!(
                "matrix violates doubly stochastic constraints by {v:e} (tol {feas_tol:e})"
            )));
        }
        Ok(Self { m, feas_tol })
    }

    /// Wraps a matrix produced by a projection routine that already
    /// guarantees feasibility up to `feas_tol`.
    pub(crate) fn new_unchecked(m: SquareMatrix, feas_tol: f64) -> Self {
        Self { m, feas_tol }
    }

    pub fn barycenter(n: usize) -> Self {
        Self { m: SquareMatrix::barycenter(n), feas_tol: FEAS_TOL }
    }

    pub fn from_permutation(p: &Permutation) -> Self {
        Self { m: perm_to_matrix(p), feas_tol: 0.0 }
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> SquareMatrix {
        self.m
    }

    pub fn feas_tol(&self) -> f64 {
        self.feas_tol
    }

    pub fn n(&self) -> usize {
        self.m.n()
    }
}
