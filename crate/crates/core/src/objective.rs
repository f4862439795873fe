//! QAP objective, the Lp regularizer and the composite regularized model.
//!
//! The regularized model is
//!
//! ```text
//! F(X) = f(X) + sigma * sum_ij (X_ij + eps)^p - mu * ||X - X_hat||_F^2
//! ```
//!
//! with `f(X) = tr(A^T X B X^T)`. The negative proximal term is optional.
//! The alternative `L2` penalty replaces the Lp sum by `-||X||_F^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::QapInstance;
use crate::matrix::{SquareMatrix, FEAS_TOL};

/// Which sparsity-promoting term multiplies `sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Penalty {
    /// `sum (X_ij + eps)^p`
    #[default]
    Lp,
    /// `-||X||_F^2`; the continuation then mirrors an L2 regularization path.
    L2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProxTerm {
    pub mu: f64,
    pub center: SquareMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegParams {
    pub p: f64,
    pub eps: f64,
    pub sigma: f64,
    pub penalty: Penalty,
    pub prox: Option<ProxTerm>,
}

impl RegParams {
    pub fn new(p: f64, eps: f64, sigma: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!("p must lie in (0,1), got {p}")));
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be >= 0, got {eps}")));
        }
        Ok(Self { p, eps, sigma, penalty: Penalty::Lp, prox: None })
    }

    pub fn with_prox(mut self, mu: f64, center: SquareMatrix) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be > 0, got {mu}")));
        }
        self.prox = Some(ProxTerm { mu, center });
        Ok(self)
    }

    pub fn with_penalty(mut self, penalty: Penalty) -> Self {
        self.penalty = penalty;
        self
    }
}

fn check_dim(inst: &QapInstance, x: &SquareMatrix) -> Result<()> {
    if inst.n() != x.n() {
        return Err(Error::DimensionMismatch { expected: inst.n(), got: x.n() });
    }
    Ok(())
}

/// `tr(A^T X B X^T)` on the scaled data.
pub fn f_value(inst: &QapInstance, x: &SquareMatrix) -> Result<f64> {
    check_dim(inst, x)?;
    // <A, X B X^T>
    let xbxt = x.matmul(&inst.b).matmul_t(x);
    Ok(inst.a.dot(&xbxt))
}

/// `A X B^T + A^T X B`.
pub fn f_grad(inst: &QapInstance, x: &SquareMatrix) -> Result<SquareMatrix> {
    check_dim(inst, x)?;
    Ok(hessian_apply(inst, x))
}

/// Value and gradient of `f` sharing the intermediate products.
pub fn f_value_grad(inst: &QapInstance, x: &SquareMatrix) -> Result<(f64, SquareMatrix)> {
    check_dim(inst, x)?;
    let ax = inst.a.matmul(x);
    let g1 = ax.matmul_t(&inst.b);
    let xb = x.matmul(&inst.b);
    let g2 = inst.a.t_matmul(&xb);
    // f = <A X B^T, X> = <A, X B X^T>
    let value = g1.dot(x);
    Ok((value, g1.add(&g2)))
}

/// The Hessian of `f` applied to a direction: `A D B^T + A^T D B`.
/// Since `f` is quadratic this also equals the gradient at `D`.
pub fn hessian_apply(inst: &QapInstance, d: &SquareMatrix) -> SquareMatrix {
    let g1 = inst.a.matmul(d).matmul_t(&inst.b);
    let g2 = inst.a.t_matmul(&d.matmul(&inst.b));
    g1.add(&g2)
}

/// `sum_ij (x_ij + eps)^p`.
pub fn reg_h_value(x: &SquareMatrix, p: f64, eps: f64) -> Result<f64> {
    let n = x.n();
    let mut total = 0.0;
    for (k, v) in x.as_slice().iter().enumerate() {
        let base = v + eps;
        if base < 0.0 {
            return Err(Error::NegativeBase { row: k / n + 1, col: k % n + 1, value: base });
        }
        total += base.powf(p);
    }
    Ok(total)
}

/// Value and gradient of the regularized model.
///
/// Entries are clamped at `-eps` before the power so that round-off from
/// the projection (entries like `-1e-17`) never produces NaN.
pub fn big_f_value_grad(
    inst: &QapInstance,
    x: &SquareMatrix,
    rp: &RegParams,
) -> Result<(f64, SquareMatrix)> {
    let (mut value, mut grad) = f_value_grad(inst, x)?;
    if rp.sigma != 0.0 {
        match rp.penalty {
            Penalty::Lp => {
                let (p, eps, sigma) = (rp.p, rp.eps, rp.sigma);
                let mut h = 0.0;
                for (g, v) in grad.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    let base = (v + eps).max(0.0);
                    if base == 0.0 {
                        return Err(Error::GradientSingular);
                    }
                    let pw = base.powf(p - 1.0);
                    h += pw * base;
                    *g += sigma * p * pw;
                }
                value += sigma * h;
            }
            Penalty::L2 => {
                value -= rp.sigma * x.norm_sq();
                grad.axpy(-2.0 * rp.sigma, x);
            }
        }
    }
    if let Some(prox) = &rp.prox {
        let diff = x.sub(&prox.center);
        value -= prox.mu * diff.norm_sq();
        grad.axpy(-2.0 * prox.mu, &diff);
    }
    Ok((value, grad))
}

/// Value only; same conventions as [`big_f_value_grad`].
pub fn big_f_value(inst: &QapInstance, x: &SquareMatrix, rp: &RegParams) -> Result<f64> {
    let mut value = f_value(inst, x)?;
    if rp.sigma != 0.0 {
        match rp.penalty {
            Penalty::Lp => {
                let h: f64 =
                    x.as_slice().iter().map(|v| (v + rp.eps).max(0.0).powf(rp.p)).sum();
                value += rp.sigma * h;
            }
            Penalty::L2 => value -= rp.sigma * x.norm_sq(),
        }
    }
    if let Some(prox) = &rp.prox {
        value -= prox.mu * x.dist(&prox.center).powi(2);
    }
    Ok(value)
}

/// Extremal eigenvalues of the Hessian operator `D -> A D B^T + A^T D B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBounds {
    pub nu_bar_f: f64,
    pub nu_under_f: f64,
    pub lip_l: f64,
    pub grad_at_zero_norm: f64,
    /// False when the eigen-iteration hit its cap; the values are then the
    /// best available Ritz estimates.
    pub converged: bool,
}

const LANCZOS_MAX_STEPS: usize = 400;
const LANCZOS_REL_TOL: f64 = 1e-10;

/// Matrix-free extremal eigenvalues by Lanczos with full
/// reorthogonalization. The Kronecker matrix is never formed.
pub fn curvature_bounds(inst: &QapInstance) -> CurvatureBounds {
    let n = inst.n();
    let dim = n * n;
    let grad_at_zero_norm = f_grad(inst, &SquareMatrix::zeros(n)).map(|g| g.norm()).unwrap_or(0.0);

    // fixed-seed random start so structured instances are not missed
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q = SquareMatrix::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    let qn = q.norm();
    q = q.scaled(1.0 / qn);

    let mut basis: Vec<SquareMatrix> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut prev = (f64::NAN, f64::NAN);
    let mut stable = 0;
    let max_steps = dim.min(LANCZOS_MAX_STEPS);
    let mut converged = false;

    for step in 0..max_steps {
        let mut w = hessian_apply(inst, &q);
        let alpha = w.dot(&q);
        alphas.push(alpha);
        basis.push(q.clone());
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            for v in &basis {
                let c = w.dot(v);
                w.axpy(-c, v);
            }
        }
        let beta = w.norm();
        let (lo, hi) = tridiag_extremes(&alphas, &betas);
        let scale = hi.abs().max(lo.abs()).max(1e-300);
        if step > 0
            && (hi - prev.1).abs() <= LANCZOS_REL_TOL * scale
            && (lo - prev.0).abs() <= LANCZOS_REL_TOL * scale
        {
            stable += 1;
        } else {
            stable = 0;
        }
        prev = (lo, hi);
        if beta <= 1e-12 * scale.max(1.0) || stable >= 3 || step + 1 == dim {
            // invariant subspace found or Ritz values settled
            converged = true;
            break;
        }
        betas.push(beta);
        q = w.scaled(1.0 / beta);
    }

    let (nu_under_f, nu_bar_f) = prev;
    CurvatureBounds {
        nu_bar_f,
        nu_under_f,
        lip_l: nu_bar_f.abs().max(nu_under_f.abs()),
        grad_at_zero_norm,
        converged,
    }
}

/// Smallest and largest eigenvalue of a symmetric tridiagonal matrix by
/// Sturm-sequence bisection.
fn tridiag_extremes(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let m = diag.len();
    if m == 1 {
        return (diag[0], diag[0]);
    }
    // Gershgorin interval
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < m { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    // number of eigenvalues strictly less than x
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = diag[0] - x;
        if d < 0.0 {
            count += 1;
        }
        for i in 1..m {
            let denom = if d == 0.0 { f64::EPSILON * (off[i - 1].abs() + 1e-300) } else { d };
            d = diag[i] - x - off[i - 1] * off[i - 1] / denom;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let kth = |k: usize| -> f64 {
        // k-th smallest (0-based)
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid == a || mid == b {
                break;
            }
            if count_below(mid) > k {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    };
    (kth(0), kth(m - 1))
}

/// Strong concavity modulus of `(x + eps)^p` on `[0, 1]` and the exactness
/// threshold for `sigma`.
pub fn sigma_thresholds(cb: &CurvatureBounds, p: f64, eps: f64) -> (f64, f64) {
    let nu_bar_h = p * (1.0 - p) * (1.0 + eps).powf(p - 2.0);
    let sigma_star = (cb.nu_bar_f / nu_bar_h).max(0.0);
    (nu_bar_h, sigma_star)
}

/// Diagnostic threshold above which every permutation matrix is a local
/// minimizer of the regularized model. `c > 1` is a free constant.
pub fn sigma_bar_local(cb: &CurvatureBounds, n: usize, p: f64, eps: f64, c: f64) -> f64 {
    if eps == 0.0 {
        return 0.0;
    }
    let num = cb.lip_l * (2.0 + (n as f64).sqrt()) + cb.grad_at_zero_norm;
    let den = eps.powf(p - 1.0) - (0.5 + eps).powf(p - 1.0);
    c / p * num / den
}

/// Lower bound on the nonzero entries of a KKT point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonzeroBound {
    pub bound: f64,
    /// The bracketed base was not positive; the bound is vacuous (0).
    pub vacuous: bool,
}

pub fn nonzero_lower_bound_raw(
    n: usize,
    nnz: usize,
    lip_l: f64,
    grad0: f64,
    p: f64,
    eps: f64,
    sigma: f64,
) -> NonzeroBound {
    let nf = n as f64;
    let z = nnz as f64;
    let base = z.powf(1.0 - p) * (nf + z * eps).powf(p) - (nf - 1.0) * (1.0 + eps).powf(p - 1.0)
        + (2.0 * nf).sqrt() * (lip_l * nf.sqrt() + grad0) / (sigma * p);
    if base <= 0.0 {
        return NonzeroBound { bound: 0.0, vacuous: true };
    }
    let c_bar = base.powf(1.0 / (p - 1.0));
    NonzeroBound { bound: (c_bar - eps).max(0.0), vacuous: false }
}

/// Bound for the point `x`, counting entries above [`FEAS_TOL`] as nonzero.
pub fn nonzero_lower_bound(
    inst: &QapInstance,
    cb: &CurvatureBounds,
    x: &SquareMatrix,
    rp: &RegParams,
) -> Result<NonzeroBound> {
    check_dim(inst, x)?;
    if !(rp.sigma > 0.0) {
        return Err(Error::InvalidParameter("nonzero lower bound needs sigma > 0".into()));
    }
    Ok(nonzero_lower_bound_raw(
        inst.n(),
        x.count_nonzero(FEAS_TOL),
        cb.lip_l,
        cb.grad_at_zero_norm,
        rp.p,
        rp.eps,
        rp.sigma,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::scale_instance;
    use crate::matrix::{perm_to_matrix, Permutation};

    fn inst_from(a: SquareMatrix, b: SquareMatrix) -> QapInstance {
        scale_instance(&a, &b).unwrap()
    }

    #[test]
    fn f_value_examples() {
        let i2 = SquareMatrix::identity(2);
        let inst = inst_from(i2.clone(), i2.clone());
        assert_eq!(f_value(&inst, &i2).unwrap(), 2.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = SquareMatrix::from_fn(4, |_, _| rng.random::<f64>());
        let b = SquareMatrix::from_fn(4, |_, _| rng.random::<f64>());
        let inst = inst_from(a, b);
        let bary = SquareMatrix::barycenter(4);
        let expect = inst.a.sum() * inst.b.sum() / 16.0;
        assert!((f_value(&inst, &bary).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn f_value_matches_index_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = SquareMatrix::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let b = SquareMatrix::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let inst = inst_from(a, b);
        for p in [Permutation::identity(6), Permutation::from_one_based(&[3, 1, 6, 2, 5, 4]).unwrap()] {
            let x = perm_to_matrix(&p);
            let mut oracle = 0.0;
            let pi = p.as_slice();
            for i in 0..6 {
                for j in 0..6 {
                    oracle += inst.a[(pi[i], pi[j])] * inst.b[(i, j)];
                }
            }
            assert!((f_value(&inst, &x).unwrap() - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn f_grad_special_cases() {
        let i3 = SquareMatrix::identity(3);
        let inst = inst_from(i3.clone(), i3);
        let x = SquareMatrix::from_fn(3, |i, j| (i + 2 * j) as f64);
        assert_eq!(f_grad(&inst, &x).unwrap(), x.scaled(2.0));

        let a = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, -1.0]]).unwrap();
        let b = SquareMatrix::from_rows(&[vec![0.5, 1.0], vec![1.0, 0.0]]).unwrap();
        let inst = inst_from(a, b);
        let x = SquareMatrix::from_rows(&[vec![0.3, 0.7], vec![0.7, 0.3]]).unwrap();
        let expect = inst.a.matmul(&x).matmul(&inst.b).scaled(2.0);
        assert!(f_grad(&inst, &x).unwrap().dist(&expect) < 1e-14);
    }

    #[test]
    fn reg_h_examples() {
        let p = Permutation::from_one_based(&[2, 3, 1]).unwrap();
        let x = perm_to_matrix(&p);
        assert_eq!(reg_h_value(&x, 0.5, 0.0).unwrap(), 3.0);
        let v = reg_h_value(&x, 0.7, 0.2).unwrap();
        assert!((v - (3.0 * 1.2f64.powf(0.7) + 6.0 * 0.2f64.powf(0.7))).abs() < 1e-12);
        let bary = SquareMatrix::barycenter(5);
        assert!((reg_h_value(&bary, 0.75, 0.0).unwrap() - 5f64.powf(1.25)).abs() < 1e-12);
        let v = reg_h_value(&SquareMatrix::identity(2), 0.5, 0.1).unwrap();
        assert!((v - (2.0 * 1.1f64.sqrt() + 2.0 * 0.1f64.sqrt())).abs() < 1e-12, "{v}");
        let neg = SquareMatrix::from_rows(&[vec![-0.5, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(reg_h_value(&neg, 0.5, 0.1), Err(Error::NegativeBase { row: 1, col: 1, .. })));
    }

    #[test]
    fn composite_reduces_to_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = SquareMatrix::from_fn(4, |_, _| rng.random::<f64>());
        let b = SquareMatrix::from_fn(4, |_, _| rng.random::<f64>());
        let inst = inst_from(a, b);
        let x = SquareMatrix::barycenter(4);
        let rp = RegParams::new(0.75, 0.0, 0.0).unwrap();
        let (v, g) = big_f_value_grad(&inst, &x, &rp).unwrap();
        assert!((v - f_value(&inst, &x).unwrap()).abs() < 1e-12);
        assert!(g.dist(&f_grad(&inst, &x).unwrap()) < 1e-14);

        let rp = RegParams::new(0.75, 0.1, 1.0).unwrap().with_prox(0.3, x.clone()).unwrap();
        let base = RegParams::new(0.75, 0.1, 1.0).unwrap();
        let (v1, g1) = big_f_value_grad(&inst, &x, &rp).unwrap();
        let (v0, g0) = big_f_value_grad(&inst, &x, &base).unwrap();
        assert_eq!(v1, v0);
        assert_eq!(g1, g0);
    }

    #[test]
    fn singular_gradient_detected() {
        let i2 = SquareMatrix::identity(2);
        let inst = inst_from(i2.clone(), i2.clone());
        let rp = RegParams::new(0.5, 0.0, 1.0).unwrap();
        assert_eq!(big_f_value_grad(&inst, &i2, &rp), Err(Error::GradientSingular));
    }

    #[test]
    fn curvature_identity_and_diag() {
        let i4 = SquareMatrix::identity(4);
        let cb = curvature_bounds(&inst_from(i4.clone(), i4));
        assert!((cb.nu_bar_f - 2.0).abs() < 1e-9 && (cb.nu_under_f - 2.0).abs() < 1e-9);
        assert!(cb.converged);

        let a = SquareMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        let cb = curvature_bounds(&inst_from(a, SquareMatrix::identity(2)));
        assert!((cb.nu_bar_f - 2.0).abs() < 1e-9, "{cb:?}");
        assert!((cb.nu_under_f + 2.0).abs() < 1e-9, "{cb:?}");
        assert_eq!(cb.lip_l, cb.nu_bar_f.abs().max(cb.nu_under_f.abs()));
        assert_eq!(cb.grad_at_zero_norm, 0.0);
    }

    #[test]
    fn tridiag_small() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let (lo, hi) = tridiag_extremes(&[2.0, 2.0], &[1.0]);
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_threshold_examples() {
        let cb = CurvatureBounds { nu_bar_f: 2.0, nu_under_f: -2.0, lip_l: 2.0, grad_at_zero_norm: 0.0, converged: true };
        let (h, _) = sigma_thresholds(&cb, 0.5, 0.0);
        assert!((h - 0.25).abs() < 1e-15);
        let (h, s) = sigma_thresholds(&cb, 0.75, 0.1);
        assert!((h - 0.166_441_038_013).abs() < 1e-9, "{h}");
        assert!((s - 12.016_267_285).abs() < 1e-6, "{s}");
        let neg = CurvatureBounds { nu_bar_f: -1.0, ..cb };
        assert_eq!(sigma_thresholds(&neg, 0.75, 0.1).1, 0.0);
    }

    #[test]
    fn lower_bound_properties() {
        // nondecreasing in sigma
        let vals: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&s| nonzero_lower_bound_raw(12, 20, 2.0, 0.0, 0.75, 0.001, s).bound)
            .collect();
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2], "{vals:?}");
        // permutation matrix with eps = 0 gives a bound in [0, 1)
        for n in [3, 5, 12] {
            let b = nonzero_lower_bound_raw(n, n, 1.5, 0.0, 0.5, 0.0, 7.0);
            assert!(!b.vacuous && b.bound >= 0.0 && b.bound < 1.0);
        }
        // regression constant, computed from the formula at build time
        let b = nonzero_lower_bound_raw(12, 20, 2.0, 0.0, 0.75, 0.001, 100.0);
        assert!((b.bound - NZ_BOUND_REGRESSION).abs() < 1e-12, "{}", b.bound);
    }

    // 20^{0.25}(12 + 0.02)^{0.75} - 11 (1.001)^{-0.25} + sqrt(24) * 2 sqrt(12) / 75,
    // raised to -4, minus 0.001.
    const NZ_BOUND_REGRESSION: f64 = 0.009_731_302_880_195_342;

    #[test]
    fn sigma_bar_positive() {
        let cb = CurvatureBounds { nu_bar_f: 2.0, nu_under_f: -2.0, lip_l: 2.0, grad_at_zero_norm: 0.0, converged: true };
        let s1 = sigma_bar_local(&cb, 10, 0.75, 0.1, 2.0);
        let s2 = sigma_bar_local(&cb, 10, 0.75, 0.01, 2.0);
        assert!(s1 > s2 && s2 > 0.0);
        assert_eq!(sigma_bar_local(&cb, 10, 0.75, 0.0, 2.0), 0.0);
    }
}
