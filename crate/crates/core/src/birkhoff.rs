//! Euclidean projection onto the Birkhoff polytope and onto the polytope
//! intersected with linear cuts.
//!
//! The unrestricted projection solves the dual of
//! `min 1/2 ||X - C||^2  s.t.  X e = e, X^T e = e, X >= 0`, i.e.
//!
//! ```text
//! theta(y, z) = 1/2 ||P+(C + y e^T + e z^T)||^2 - <y + z, e>
//! ```
//!
//! by gradient descent with alternating Barzilai-Borwein steps, then
//! recovers `X = P+(C + y e^T + e z^T)`. Cut-restricted sets are handled
//! with Dykstra's alternating projections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{BirkhoffPoint, SquareMatrix};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DUAL_MAX_ITERS: usize = 10_000;
pub const DYKSTRA_MAX_SWEEPS: usize = 50_000;
const STEP_MIN: f64 = 1e-10;
const STEP_MAX: f64 = 1e10;
const CORRECTION_LIMIT: f64 = 1e6;
const GLL_MEMORY: usize = 10;

/// Multipliers of the row (`y`) and column (`z`) constraints.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DualPoint {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl DualPoint {
    pub fn zeros(n: usize) -> Self {
        Self { y: vec![0.0; n], z: vec![0.0; n] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutLabel {
    Lc1,
    Lc2,
    Other,
}

/// The halfspace `<g, X> <= b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cut {
    pub g: SquareMatrix,
    pub b: f64,
    pub label: CutLabel,
}

impl Cut {
    pub fn new(g: SquareMatrix, b: f64, label: CutLabel) -> Result<Self> {
        if g.max_abs() == 0.0 {
            return Err(Error::InvalidParameter("cut normal is all zero".into()));
        }
        Ok(Self { g, b, label })
    }

    /// Positive when `x` violates the cut.
    pub fn violation(&self, x: &SquareMatrix) -> f64 {
        self.g.dot(x) - self.b
    }
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub point: BirkhoffPoint,
    pub dual: DualPoint,
    pub iters: usize,
    /// `||grad theta||_inf` at the returned dual point.
    pub residual: f64,
    pub converged: bool,
}

/// `P+(C + y e^T + e z^T)`, its row sums and column sums.
fn primal_from_dual(c: &SquareMatrix, d: &DualPoint, x: &mut [f64], rows: &mut [f64], cols: &mut [f64]) {
    let n = c.n();
    cols.iter_mut().for_each(|v| *v = 0.0);
    let cs = c.as_slice();
    for i in 0..n {
        let yi = d.y[i];
        let mut rs = 0.0;
        let base = i * n;
        for j in 0..n {
            let v = (cs[base + j] + yi + d.z[j]).max(0.0);
            x[base + j] = v;
            rs += v;
            cols[j] += v;
        }
        rows[i] = rs;
    }
}

/// Projection onto the Birkhoff polytope starting from `y = z = 0`.
pub fn project_birkhoff(c: &SquareMatrix, tol: f64) -> Result<Projection> {
    project_birkhoff_warm(c, tol, None)
}

/// As [`project_birkhoff`], optionally warm-started from a dual point
/// (typically the one returned for a nearby `c`).
pub fn project_birkhoff_warm(c: &SquareMatrix, tol: f64, start: Option<&DualPoint>) -> Result<Projection> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("projection tolerance must be > 0, got {tol}")));
    }
    if let Some(k) = c.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: k / c.n(), col: k % c.n() });
    }
    let n = c.n();
    let mut dual = match start {
        Some(d) if d.y.len() == n && d.z.len() == n => d.clone(),
        _ => DualPoint::zeros(n),
    };
    let mut x = vec![0.0; n * n];
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; n];

    let theta = |d: &DualPoint, x: &[f64]| {
        0.5 * x.iter().map(|v| v * v).sum::<f64>() - d.y.iter().sum::<f64>() - d.z.iter().sum::<f64>()
    };
    primal_from_dual(c, &dual, &mut x, &mut rows, &mut cols);
    let mut gy: Vec<f64> = rows.iter().map(|r| r - 1.0).collect();
    let mut gz: Vec<f64> = cols.iter().map(|r| r - 1.0).collect();
    let inf_norm = |gy: &[f64], gz: &[f64]| gy.iter().chain(gz).fold(0.0_f64, |m, v| m.max(v.abs()));

    let mut res = inf_norm(&gy, &gz);
    let mut best = (res, dual.clone());
    let mut recent = std::collections::VecDeque::with_capacity(GLL_MEMORY);
    recent.push_back(theta(&dual, &x));
    let mut alpha = 1.0 / n as f64;
    let mut iters = 0;
    let mut trial = dual.clone();

    while res > tol && iters < DUAL_MAX_ITERS {
        iters += 1;
        let gnorm2: f64 = gy.iter().chain(&gz).map(|v| v * v).sum();
        let ref_val = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // nonmonotone acceptance guards the BB step on flat pieces of theta
        let mut step = alpha;
        let mut th;
        loop {
            for i in 0..n {
                trial.y[i] = dual.y[i] - step * gy[i];
                trial.z[i] = dual.z[i] - step * gz[i];
            }
            primal_from_dual(c, &trial, &mut x, &mut rows, &mut cols);
            th = theta(&trial, &x);
            if th <= ref_val - 1e-4 * step * gnorm2 || step <= STEP_MIN {
                break;
            }
            step *= 0.5;
        }
        std::mem::swap(&mut dual, &mut trial);
        if recent.len() == GLL_MEMORY {
            recent.pop_front();
        }
        recent.push_back(th);

        let mut ss = 0.0;
        let mut sg = 0.0;
        let mut gg = 0.0;
        for i in 0..n {
            let ngy = rows[i] - 1.0;
            let ngz = cols[i] - 1.0;
            let (sy, sz) = (-step * gy[i], -step * gz[i]);
            let (dy, dz) = (ngy - gy[i], ngz - gz[i]);
            ss += sy * sy + sz * sz;
            sg += sy * dy + sz * dz;
            gg += dy * dy + dz * dz;
            gy[i] = ngy;
            gz[i] = ngz;
        }
        res = inf_norm(&gy, &gz);
        if res < best.0 {
            best = (res, dual.clone());
        }
        alpha = if sg > 0.0 {
            if iters % 2 == 0 {
                ss / sg
            } else {
                sg / gg
            }
        } else {
            1.0 / n as f64
        };
        alpha = alpha.clamp(STEP_MIN, STEP_MAX);
    }

    let converged = res <= tol;
    if !converged {
        dual = best.1;
        res = best.0;
        primal_from_dual(c, &dual, &mut x, &mut rows, &mut cols);
    }
    let m = SquareMatrix::from_vec(n, x).expect("projection keeps entries finite");
    Ok(Projection { point: BirkhoffPoint::new_unchecked(m, res), dual, iters, residual: res, converged })
}

/// Closed-form projection onto `<g, X> <= b`.
pub fn project_halfspace(x: &SquareMatrix, cut: &Cut) -> SquareMatrix {
    let v = cut.violation(x);
    if v <= 0.0 {
        return x.clone();
    }
    let mut out = x.clone();
    out.axpy(-v / cut.g.norm_sq(), &cut.g);
    out
}

#[derive(Clone, Debug)]
pub struct PolytopeProjection {
    pub point: BirkhoffPoint,
    pub sweeps: usize,
    /// Dual point of the last Birkhoff projection, reusable as a warm start.
    pub dual: DualPoint,
    pub max_cut_violation: f64,
    pub converged: bool,
}

/// Projection onto the Birkhoff polytope intersected with `cuts`.
pub fn project_polytope(c: &SquareMatrix, cuts: &[Cut], tol: f64) -> Result<PolytopeProjection> {
    project_polytope_warm(c, cuts, tol, None)
}

/// Dykstra's method over `{cuts..., D_n}`; the Birkhoff set is projected
/// last in every sweep so the returned point is doubly stochastic.
pub fn project_polytope_warm(
    c: &SquareMatrix,
    cuts: &[Cut],
    tol: f64,
    start: Option<&DualPoint>,
) -> Result<PolytopeProjection> {
    let first = project_birkhoff_warm(c, tol, start)?;
    if cuts.is_empty() {
        return Ok(PolytopeProjection {
            max_cut_violation: 0.0,
            converged: first.converged,
            point: first.point,
            dual: first.dual,
            sweeps: 0,
        });
    }
    // fast path: the unrestricted projection already satisfies every cut
    let viol = |x: &SquareMatrix| cuts.iter().map(|k| k.violation(x)).fold(f64::NEG_INFINITY, f64::max);
    if viol(first.point.matrix()) <= 0.0 {
        return Ok(PolytopeProjection {
            max_cut_violation: 0.0,
            converged: first.converged,
            point: first.point,
            dual: first.dual,
            sweeps: 0,
        });
    }

    let n = c.n();
    let mut x = c.clone();
    let mut inc_cuts = vec![SquareMatrix::zeros(n); cuts.len()];
    let mut inc_birk = SquareMatrix::zeros(n);
    let mut dual = first.dual;
    let mut last_conv;
    let mut prev = x.clone();

    for sweep in 1..=DYKSTRA_MAX_SWEEPS {
        for (cut, inc) in cuts.iter().zip(inc_cuts.iter_mut()) {
            let y = x.add(inc);
            let nx = project_halfspace(&y, cut);
            *inc = y.sub(&nx);
            x = nx;
        }
        let y = x.add(&inc_birk);
        let proj = project_birkhoff_warm(&y, tol, Some(&dual))?;
        dual = proj.dual;
        last_conv = proj.converged;
        let nx = proj.point.into_matrix();
        inc_birk = y.sub(&nx);
        x = nx;

        let big = inc_cuts.iter().chain(std::iter::once(&inc_birk)).any(|m| m.max_abs() > CORRECTION_LIMIT);
        if big {
            return Err(Error::EmptyIntersectionSuspected);
        }
        let moved = x.dist(&prev);
        prev.clone_from(&x);
        if sweep > 1 && moved < tol {
            let v = viol(&x).max(0.0);
            if v > 1e3 * tol.max(1e-9) * (1.0 + cuts.iter().map(|k| k.g.norm()).fold(0.0, f64::max)) {
                // iterates stalled at a positive distance from the cuts
                return Err(Error::EmptyIntersectionSuspected);
            }
            let feas = x.birkhoff_violation();
            return Ok(PolytopeProjection {
                point: BirkhoffPoint::new_unchecked(x, feas),
                sweeps: sweep,
                dual,
                max_cut_violation: v,
                converged: last_conv,
            });
        }
    }
    let v = viol(&x).max(0.0);
    let feas = x.birkhoff_violation();
    Ok(PolytopeProjection {
        point: BirkhoffPoint::new_unchecked(x, feas),
        sweeps: DYKSTRA_MAX_SWEEPS,
        dual,
        max_cut_violation: v,
        converged: false,
    })
}
