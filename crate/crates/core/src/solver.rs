//! The practical Lp regularization algorithm.
//!
//! An outer continuation drives `sigma` from a convex regime (`sigma < 0`)
//! through zero to a strongly concave one while shrinking `eps`; each outer
//! step solves the regularized subproblem over the Birkhoff polytope by
//! projected gradient with Barzilai-Borwein steps and a nonmonotone line
//! search, rounding and 2-opt-polishing iterates along the way.

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::birkhoff::{project_birkhoff, project_birkhoff_warm, project_polytope_warm, Cut, DualPoint, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::instance::QapInstance;
use crate::localsearch::{greedy_round, local_2opt};
use crate::matrix::{BirkhoffPoint, Permutation, SquareMatrix};
use crate::objective::{big_f_value_grad, curvature_bounds, Penalty, ProxTerm, RegParams};

const STEP_MIN: f64 = 1e-10;
const STEP_MAX: f64 = 1e10;
const MAX_BACKTRACKS: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub p: f64,
    pub eps0: f64,
    pub eps_min: f64,
    pub gamma: f64,
    pub sigma_minus: f64,
    pub sigma_max: f64,
    pub tol: f64,
    pub alpha0: f64,
    pub theta: f64,
    pub delta: f64,
    pub eta: f64,
    pub tau0_x: f64,
    pub tau0_f: f64,
    pub tau_min_x: f64,
    pub tau_min_f: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub local_search_every: usize,
    pub seed: u64,
    pub penalty: Penalty,
    /// Residual tolerance of every Birkhoff projection.
    pub proj_tol: f64,
    /// Weight of the random point when restarting from a perturbation.
    pub perturb_beta: f64,
    /// Record wall-clock time; off gives byte-identical results across runs.
    pub timing: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            p: 0.75,
            eps0: 0.1,
            eps_min: 1e-3,
            gamma: 0.9,
            sigma_minus: -0.01,
            sigma_max: 1e6,
            tol: 1e-3,
            alpha0: 1e-3,
            theta: 1e-4,
            delta: 0.5,
            eta: 0.85,
            tau0_x: 1e-3,
            tau0_f: 1e-6,
            tau_min_x: 1e-5,
            tau_min_f: 1e-8,
            max_outer: 500,
            max_inner: 1000,
            local_search_every: 1,
            seed: 0,
            penalty: Penalty::Lp,
            proj_tol: DEFAULT_TOL,
            perturb_beta: 0.1,
            timing: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.p > 0.0 && self.p < 1.0) {
            return bad(format!("p must lie in (0,1), got {}", self.p));
        }
        for (name, v) in [
            ("eps0", self.eps0),
            ("eps_min", self.eps_min),
            ("alpha0", self.alpha0),
            ("tau0_x", self.tau0_x),
            ("tau0_f", self.tau0_f),
            ("tau_min_x", self.tau_min_x),
            ("tau_min_f", self.tau_min_f),
            ("proj_tol", self.proj_tol),
            ("sigma_max", self.sigma_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("theta", self.theta),
            ("eta", self.eta),
            ("tol", self.tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0,1), got {v}"));
            }
        }
        if !(self.perturb_beta > 0.0 && self.perturb_beta < 1.0) {
            return bad(format!("perturb_beta must lie in (0,1), got {}", self.perturb_beta));
        }
        if !(self.sigma_minus < 0.0) {
            return bad(format!("sigma_minus must be negative, got {}", self.sigma_minus));
        }
        if self.eps_min > self.eps0 {
            return bad(format!("eps_min {} exceeds eps0 {}", self.eps_min, self.eps0));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.local_search_every == 0 {
            return bad("iteration counts must be positive".into());
        }
        Ok(())
    }
}

/// Reference value of the nonmonotone line search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonmonotoneState {
    pub c_ref: f64,
    pub q: f64,
}

impl NonmonotoneState {
    pub fn new(f0: f64) -> Self {
        Self { c_ref: f0, q: 1.0 }
    }
}

pub fn nonmonotone_update(st: NonmonotoneState, f_new: f64, eta: f64) -> NonmonotoneState {
    let q = eta * st.q + 1.0;
    NonmonotoneState { c_ref: (eta * st.q * st.c_ref + f_new) / q, q }
}

/// Alternating long (`even`) and short BB steps, clamped to `[1e-10, 1e10]`.
pub fn bb_stepsize(s: &SquareMatrix, g_diff: &SquareMatrix, even: bool, alpha0: f64) -> f64 {
    let sy = s.dot(g_diff);
    if !(sy > 0.0) {
        return alpha0;
    }
    let a = if even { s.norm_sq() / sy } else { sy / g_diff.norm_sq() };
    a.clamp(STEP_MIN, STEP_MAX)
}

pub fn update_epsilon(eps_prev: f64, f_k_best: f64, f_best: f64, cfg: &SolverConfig) -> f64 {
    if f_k_best < f_best {
        eps_prev
    } else {
        (cfg.gamma * eps_prev).max(cfg.eps_min)
    }
}

/// Starting `sigma`: the largest value keeping the first subproblem convex,
/// capped at `sigma_minus`. `nu` is the smallest curvature of the smooth part.
pub fn initial_sigma(nu: f64, cfg: &SolverConfig) -> f64 {
    match cfg.penalty {
        Penalty::Lp => (nu / (cfg.p * (1.0 - cfg.p)) * cfg.eps0.powf(2.0 - cfg.p)).min(cfg.sigma_minus),
        Penalty::L2 => (nu / 2.0).min(cfg.sigma_minus),
    }
}

/// First positive value of the schedule, `-2^{-l} sigma0` with `l = ceil(log2(-sigma0))`.
pub fn sigma_plus(sigma0: f64) -> f64 {
    let l = (-sigma0).log2().ceil();
    -sigma0 * (-l).exp2()
}

pub fn update_sigma(sigma_k: f64, sigma0: f64, cfg: &SolverConfig) -> f64 {
    let next = if sigma_k <= cfg.sigma_minus {
        sigma_k / 2.0
    } else if sigma_k < 0.0 {
        0.0
    } else if sigma_k == 0.0 {
        sigma_plus(sigma0)
    } else {
        (2.0 * sigma_k).max(sigma_plus(sigma0))
    };
    next.min(cfg.sigma_max)
}

/// `(1 - beta) x + beta Z` with `Z` the projection of a uniform random matrix.
pub fn perturb_in_birkhoff(x: &BirkhoffPoint, beta: f64, rng: &mut impl Rng) -> Result<BirkhoffPoint> {
    let n = x.n();
    let u = SquareMatrix::from_fn(n, |_, _| rng.random::<f64>());
    let z = project_birkhoff(&u, DEFAULT_TOL)?.point;
    let mut m = x.matrix().scaled(1.0 - beta);
    m.axpy(beta, z.matrix());
    let tol = x.feas_tol().max(z.feas_tol());
    Ok(BirkhoffPoint::new_unchecked(m, tol))
}

/// One inner iteration, for the optional trace stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerRecord {
    pub k: usize,
    pub i: usize,
    pub f: f64,
    pub tol_x: f64,
    pub tol_f: f64,
    pub sigma: f64,
    pub eps: f64,
}

/// One outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub k: usize,
    pub sigma: f64,
    pub eps: f64,
    /// Best unscaled objective found during this subproblem.
    pub f_k_best: f64,
    /// Best unscaled objective so far.
    pub f_best: f64,
    pub inner_iters: usize,
    pub perturbed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveFlags {
    /// The outer loop ended on `max_outer` rather than the sparsity guard.
    pub max_outer_reached: bool,
    pub max_inner_hits: usize,
    pub line_search_stalls: usize,
    pub unconverged_projections: usize,
    pub sweep_limit_hits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub x_best: Permutation,
    /// Unscaled objective at `x_best`.
    pub f_best: f64,
    pub gap_percent: Option<f64>,
    pub nfe: usize,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub wall_time: f64,
    pub trace: Vec<OuterRecord>,
    pub flags: SolveFlags,
    /// `||X||_p^p / n - 1` at the last outer iterate.
    pub sparsity_gap: f64,
    /// `||P(X - grad F) - X||_F` at the last outer iterate.
    pub pg_residual: f64,
    /// Per-round summaries of the enhanced variants; empty for a plain run.
    #[serde(default)]
    pub rounds: Vec<RoundRecord>,
}

/// One round of a cutting-plane or negative-proximal wrapper.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Unscaled objective of the round's best permutation.
    pub f_best: f64,
    pub gap_percent: Option<f64>,
    pub cuts: usize,
    pub mu: Option<f64>,
    pub nfe: usize,
    pub x_best: Permutation,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        !self.flags.max_outer_reached
    }
}

/// Result of one regularized subproblem.
#[derive(Clone, Debug)]
pub struct SubproblemResult {
    pub x: BirkhoffPoint,
    pub f: f64,
    pub iters: usize,
    pub nfe: usize,
    /// Best polished permutation and its scaled objective.
    pub best: Option<(Permutation, f64)>,
    /// `tol_x` of the first iteration.
    pub first_move: f64,
    pub max_inner: bool,
    pub stalled: bool,
}

/// Mutable state shared by the subproblems of one run.
pub(crate) struct Engine<'a> {
    inst: &'a QapInstance,
    cfg: &'a SolverConfig,
    cuts: &'a [Cut],
    dual: Option<DualPoint>,
    polish_cache: HashMap<Vec<usize>, (Permutation, f64)>,
    flags: SolveFlags,
    sink: Option<&'a mut dyn FnMut(&InnerRecord)>,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(
        inst: &'a QapInstance,
        cfg: &'a SolverConfig,
        cuts: &'a [Cut],
        sink: Option<&'a mut dyn FnMut(&InnerRecord)>,
    ) -> Self {
        Self { inst, cfg, cuts, dual: None, polish_cache: HashMap::new(), flags: SolveFlags::default(), sink }
    }

    pub(crate) fn project(&mut self, c: &SquareMatrix) -> Result<SquareMatrix> {
        if self.cuts.is_empty() {
            let pr = project_birkhoff_warm(c, self.cfg.proj_tol, self.dual.as_ref())?;
            if !pr.converged {
                self.flags.unconverged_projections += 1;
            }
            self.dual = Some(pr.dual);
            Ok(pr.point.into_matrix())
        } else {
            let pr = project_polytope_warm(c, self.cuts, self.cfg.proj_tol, self.dual.as_ref())?;
            if !pr.converged {
                self.flags.unconverged_projections += 1;
            }
            self.dual = Some(pr.dual);
            Ok(pr.point.into_matrix())
        }
    }

    /// Greedy rounding followed by 2-opt, memoized on the rounded permutation.
    pub(crate) fn polish(&mut self, x: &SquareMatrix) -> (Permutation, f64) {
        let rounded = greedy_round(x);
        if let Some(hit) = self.polish_cache.get(rounded.as_slice()) {
            return hit.clone();
        }
        let res = local_2opt(self.inst, &rounded);
        if res.sweep_limit {
            self.flags.sweep_limit_hits += 1;
        }
        let out = (res.perm, res.obj);
        self.polish_cache.insert(rounded.as_slice().to_vec(), out.clone());
        out
    }

    pub(crate) fn solve_subproblem(
        &mut self,
        rp: &RegParams,
        x_start: &BirkhoffPoint,
        tau_x: f64,
        tau_f: f64,
        k: usize,
    ) -> Result<SubproblemResult> {
        let cfg = self.cfg;
        let sqrt_n = (self.inst.n() as f64).sqrt();
        let mut x = x_start.matrix().clone();
        let (mut f, mut g) = big_f_value_grad(self.inst, &x, rp)?;
        let mut nfe = 1;
        let mut nm = NonmonotoneState::new(f);
        let mut alpha = cfg.alpha0;
        let mut best: Option<(Permutation, f64)> = None;
        let mut first_move = f64::NAN;
        let mut stalled = false;
        let mut iters = 0;
        let mut converged = false;

        while iters < cfg.max_inner {
            let mut trial_c = x.clone();
            trial_c.axpy(-alpha, &g);
            let z = self.project(&trial_c)?;
            let d = z.sub(&x);
            let gd = g.dot(&d);
            iters += 1;
            if d.norm() == 0.0 || !(gd < 0.0) {
                // stationary for this step: no descent direction left
                if first_move.is_nan() {
                    first_move = 0.0;
                }
                converged = true;
                break;
            }

            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_BACKTRACKS {
                let mut xt = x.clone();
                xt.axpy(step, &d);
                let (ft, gt) = big_f_value_grad(self.inst, &xt, rp)?;
                nfe += 1;
                if ft <= nm.c_ref + cfg.theta * step * gd {
                    accepted = Some((xt, ft, gt));
                    break;
                }
                step *= cfg.delta;
            }
            let Some((x_new, f_new, g_new)) = accepted else {
                self.flags.line_search_stalls += 1;
                stalled = true;
                if first_move.is_nan() {
                    first_move = 0.0;
                }
                break;
            };

            let s = x_new.sub(&x);
            let tol_x = s.norm() / sqrt_n;
            let tol_f = (f - f_new).abs() / (1.0 + f.abs());
            if first_move.is_nan() {
                first_move = tol_x;
            }
            let y = g_new.sub(&g);
            alpha = bb_stepsize(&s, &y, iters % 2 == 1, cfg.alpha0);
            nm = nonmonotone_update(nm, f_new, cfg.eta);
            x = x_new;
            f = f_new;
            g = g_new;

            if iters % cfg.local_search_every == 0 {
                let cand = self.polish(&x);
                if best.as_ref().is_none_or(|b| cand.1 < b.1) {
                    best = Some(cand);
                }
            }
            if let Some(sink) = self.sink.as_mut() {
                sink(&InnerRecord { k, i: iters, f, tol_x, tol_f, sigma: rp.sigma, eps: rp.eps });
            }
            if tol_x <= tau_x && tol_f <= tau_f {
                converged = true;
                break;
            }
        }
        let max_inner = !converged && !stalled;
        if max_inner {
            self.flags.max_inner_hits += 1;
        }
        let feas = x.birkhoff_violation().max(x_start.feas_tol());
        Ok(SubproblemResult {
            x: BirkhoffPoint::new_unchecked(x, feas),
            f,
            iters,
            nfe,
            best,
            first_move,
            max_inner,
            stalled,
        })
    }

    pub(crate) fn take_flags(&mut self) -> SolveFlags {
        std::mem::take(&mut self.flags)
    }
}

/// `||X||_p^p / n - 1`, zero exactly at permutation matrices.
pub fn sparsity_gap(x: &SquareMatrix, p: f64) -> f64 {
    x.lp_pow(p) / x.n() as f64 - 1.0
}

/// Extra inputs used by the enhanced variants.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub cuts: Vec<Cut>,
    pub prox: Option<ProxTerm>,
    /// Starting point; the barycenter (projected onto the cuts) when absent.
    pub x0: Option<BirkhoffPoint>,
}

pub fn run_lp(inst: &QapInstance, cfg: &SolverConfig) -> Result<SolveResult> {
    run_lp_with(inst, cfg, &RunOptions::default(), None)
}

/// As [`run_lp`], streaming every inner iteration to `sink`.
pub fn run_lp_traced(
    inst: &QapInstance,
    cfg: &SolverConfig,
    sink: &mut dyn FnMut(&InnerRecord),
) -> Result<SolveResult> {
    run_lp_with(inst, cfg, &RunOptions::default(), Some(sink))
}

pub fn run_lp_with<'a>(
    inst: &'a QapInstance,
    cfg: &'a SolverConfig,
    opts: &'a RunOptions,
    sink: Option<&'a mut dyn FnMut(&InnerRecord)>,
) -> Result<SolveResult> {
    cfg.validate()?;
    let n = inst.n();
    if n == 0 {
        return Err(Error::InvalidParameter("empty instance".into()));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut engine = Engine::new(inst, cfg, &opts.cuts, sink);

    let cb = curvature_bounds(inst);
    let mut nu = cb.nu_under_f;
    if let Some(prox) = &opts.prox {
        nu -= 2.0 * prox.mu;
    }
    let sigma0 = initial_sigma(nu, cfg);

    let mut x = match &opts.x0 {
        Some(x0) => x0.clone(),
        None if opts.cuts.is_empty() => BirkhoffPoint::barycenter(n),
        None => {
            let m = engine.project(&SquareMatrix::barycenter(n))?;
            let feas = m.birkhoff_violation();
            BirkhoffPoint::new_unchecked(m, feas)
        }
    };

    let mut sigma = sigma0;
    let mut eps = cfg.eps0;
    let mut best: Option<(Permutation, f64)> = None;
    let mut nfe = 0;
    let mut inner_total = 0;
    let mut trace = Vec::new();
    let mut outer = 0;
    let mut guard_met = false;
    let mut last_rp = None;

    for k in 1..=cfg.max_outer {
        outer = k;
        let k3 = (k as f64).powi(3);
        let tau_x = (cfg.tau0_x / k3).max(cfg.tau_min_x);
        let tau_f = (cfg.tau0_f / k3).max(cfg.tau_min_f);
        let mut rp = RegParams::new(cfg.p, eps, sigma)?.with_penalty(cfg.penalty);
        rp.prox = opts.prox.clone();

        let mut sub = engine.solve_subproblem(&rp, &x, tau_x, tau_f, k)?;
        let mut perturbed = false;
        if sub.first_move < cfg.tau_min_x {
            // already stationary for the new parameters: restart nearby
            let start = perturb_in_birkhoff(&x, cfg.perturb_beta, &mut rng)?;
            let again = engine.solve_subproblem(&rp, &start, tau_x, tau_f, k)?;
            nfe += sub.nfe;
            inner_total += sub.iters;
            let prev_best = sub.best.take();
            sub = again;
            if let Some(pb) = prev_best {
                if sub.best.as_ref().is_none_or(|b| pb.1 < b.1) {
                    sub.best = Some(pb);
                }
            }
            perturbed = true;
        }
        nfe += sub.nfe;
        inner_total += sub.iters;
        x = sub.x;

        let cand = match sub.best {
            Some(b) => b,
            None => engine.polish(x.matrix()),
        };
        let f_best_prev = best.as_ref().map_or(f64::INFINITY, |b| b.1);
        eps = update_epsilon(eps, cand.1, f_best_prev, cfg);
        let f_k_best = cand.1;
        if cand.1 < f_best_prev {
            best = Some(cand);
        }
        let f_best = best.as_ref().map_or(f64::INFINITY, |b| b.1);
        trace.push(OuterRecord {
            k,
            sigma,
            eps: rp.eps,
            f_k_best: inst.report_value(f_k_best),
            f_best: inst.report_value(f_best),
            inner_iters: sub.iters,
            perturbed,
        });
        last_rp = Some(rp);

        if sparsity_gap(x.matrix(), cfg.p) <= cfg.tol {
            guard_met = true;
            break;
        }
        sigma = update_sigma(sigma, sigma0, cfg);
    }

    let fin = engine.polish(x.matrix());
    if best.as_ref().is_none_or(|b| fin.1 < b.1) {
        best = Some(fin);
    }
    let (x_best, _) = best.expect("at least one candidate");

    let rp = match last_rp {
        Some(rp) => rp,
        None => RegParams::new(cfg.p, eps, sigma)?.with_penalty(cfg.penalty),
    };
    let (_, g) = big_f_value_grad(inst, x.matrix(), &rp)?;
    let mut c = x.matrix().clone();
    c.axpy(-1.0, &g);
    let pg_residual = engine.project(&c)?.dist(x.matrix());

    let mut flags = engine.take_flags();
    flags.max_outer_reached = !guard_met;
    let f_best = inst.perm_objective_unscaled(&x_best);
    Ok(SolveResult {
        gap_percent: inst.gap(f_best),
        f_best,
        x_best,
        nfe,
        outer_iters: outer,
        inner_iters: inner_total,
        wall_time: if cfg.timing { started.elapsed().as_secs_f64() } else { 0.0 },
        trace,
        flags,
        sparsity_gap: sparsity_gap(x.matrix(), cfg.p),
        pg_residual,
        rounds: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::scale_instance;
    use crate::objective::big_f_value;

    fn cfg() -> SolverConfig {
        SolverConfig { timing: false, ..SolverConfig::default() }
    }

    fn random_inst(seed: u64, n: usize) -> QapInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { rng.random_range(0..10) as f64 });
        let b = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { rng.random_range(0..10) as f64 });
        scale_instance(&a, &b).unwrap()
    }

    #[test]
    fn nonmonotone_examples() {
        let st = nonmonotone_update(NonmonotoneState::new(4.0), 2.0, 0.85);
        assert!((st.q - 1.85).abs() < 1e-15);
        assert!((st.c_ref - (0.85 * 4.0 + 2.0) / 1.85).abs() < 1e-15);
        let mono = nonmonotone_update(st, 7.0, 0.0);
        assert_eq!(mono.c_ref, 7.0);
        let mut s = NonmonotoneState::new(3.0);
        for _ in 0..10 {
            s = nonmonotone_update(s, 3.0, 0.85);
            assert!((s.c_ref - 3.0).abs() < 1e-14);
            assert!(s.q >= 1.0);
        }
    }

    #[test]
    fn bb_examples() {
        let s = SquareMatrix::from_fn(3, |i, j| (i + 2 * j) as f64 - 1.5);
        let y = s.scaled(4.0);
        assert!((bb_stepsize(&s, &y, true, 1e-3) - 0.25).abs() < 1e-15);
        assert!((bb_stepsize(&s, &y, false, 1e-3) - 0.25).abs() < 1e-15);
        assert_eq!(bb_stepsize(&s, &s.scaled(-1.0), true, 1e-3), 1e-3);
        assert_eq!(bb_stepsize(&s, &SquareMatrix::zeros(3), false, 1e-3), 1e-3);
        assert_eq!(bb_stepsize(&s, &s.scaled(1e-20), true, 1e-3), 1e10);
    }

    #[test]
    fn epsilon_examples() {
        let c = cfg();
        assert_eq!(update_epsilon(0.05, 1.0, 2.0, &c), 0.05);
        assert!((update_epsilon(0.1, 2.0, 2.0, &c) - 0.09).abs() < 1e-15);
        assert_eq!(update_epsilon(0.001, 3.0, 2.0, &c), 0.001);
    }

    #[test]
    fn sigma_schedule() {
        let c = cfg();
        let s0 = initial_sigma(-2.0, &c);
        assert!((s0 - (-2.0 / 0.1875 * 0.1f64.powf(1.25))).abs() < 1e-15);
        assert!((s0 + 0.599_831).abs() < 1e-6);
        assert_eq!(sigma_plus(s0), -s0);
        let mut seq = vec![s0];
        while seq.len() < 12 {
            seq.push(update_sigma(*seq.last().unwrap(), s0, &c));
        }
        // halvings until above sigma_minus, then 0, then doubling from -s0
        let zero = seq.iter().position(|&s| s == 0.0).unwrap();
        for w in seq[..zero - 1].windows(2) {
            assert_eq!(w[1], w[0] / 2.0);
        }
        assert!(seq[zero - 1] > c.sigma_minus && seq[zero - 2] <= c.sigma_minus);
        assert_eq!(seq[zero + 1], -s0);
        assert_eq!(seq[zero + 2], -2.0 * s0);
        assert_eq!(update_sigma(2.0 * c.sigma_max, s0, &c), c.sigma_max);
        assert_eq!(initial_sigma(5.0, &c), c.sigma_minus);
        assert!((sigma_plus(-100.0) - 100.0 / 128.0).abs() < 1e-15);
    }

    #[test]
    fn perturbation_properties() {
        let x = BirkhoffPoint::from_permutation(&Permutation::from_one_based(&[3, 1, 2, 4]).unwrap());
        let mut r1 = ChaCha8Rng::seed_from_u64(4);
        let mut r2 = ChaCha8Rng::seed_from_u64(4);
        let a = perturb_in_birkhoff(&x, 0.1, &mut r1).unwrap();
        let b = perturb_in_birkhoff(&x, 0.1, &mut r2).unwrap();
        assert_eq!(a, b);
        assert!(a.matrix().birkhoff_violation() < 1e-8);
        assert!(a.matrix().dist(x.matrix()) > 0.0);
        let same = perturb_in_birkhoff(&x, 0.0, &mut r1).unwrap();
        assert_eq!(same.matrix(), x.matrix());
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(SolverConfig { gamma: 1.0, ..cfg() }.validate().is_err());
        assert!(SolverConfig { sigma_minus: 0.0, ..cfg() }.validate().is_err());
        assert!(SolverConfig { tau_min_x: 0.0, ..cfg() }.validate().is_err());
    }

    #[test]
    fn fixed_point_exits_immediately() {
        // A = B = I: F = ||X||^2 at sigma 0, minimized over D_n by the barycenter
        let i = SquareMatrix::identity(4);
        let inst = scale_instance(&i, &i).unwrap();
        let c = cfg();
        let mut eng = Engine::new(&inst, &c, &[], None);
        let rp = RegParams::new(0.75, 0.1, 0.0).unwrap();
        let sub = eng.solve_subproblem(&rp, &BirkhoffPoint::barycenter(4), 1e-6, 1e-9, 1).unwrap();
        assert_eq!(sub.first_move, 0.0);
        assert_eq!(sub.iters, 1);
    }

    #[test]
    fn subproblem_reaches_convex_minimum() {
        let i = SquareMatrix::identity(5);
        let inst = scale_instance(&i, &i).unwrap();
        let c = SolverConfig { max_inner: 5000, ..cfg() };
        let mut eng = Engine::new(&inst, &c, &[], None);
        let rp = RegParams::new(0.75, 0.1, 0.0).unwrap();
        let start = BirkhoffPoint::from_permutation(&Permutation::from_one_based(&[2, 3, 1, 5, 4]).unwrap());
        let sub = eng.solve_subproblem(&rp, &start, 1e-9, 1e-12, 1).unwrap();
        // oracle: min over D_n of ||X||^2 is 1, attained at the barycenter
        assert!((sub.f - 1.0).abs() < 1e-6, "{}", sub.f);
        assert!(sub.x.matrix().birkhoff_violation() < 1e-8);
    }

    #[test]
    fn accepted_steps_satisfy_line_search() {
        let inst = random_inst(3, 6);
        let c = SolverConfig { local_search_every: 1000, ..cfg() };
        let rp = RegParams::new(0.75, 0.05, 0.3).unwrap();
        let mut records = Vec::new();
        let mut sink = |r: &InnerRecord| records.push(r.clone());
        let mut eng = Engine::new(&inst, &c, &[], Some(&mut sink));
        let sub = eng.solve_subproblem(&rp, &BirkhoffPoint::barycenter(6), 1e-7, 1e-10, 1).unwrap();
        drop(eng);
        assert!(!records.is_empty());
        let f_end = big_f_value(&inst, sub.x.matrix(), &rp).unwrap();
        assert!((f_end - sub.f).abs() < 1e-10);
        assert!(records.last().unwrap().f <= big_f_value(&inst, &SquareMatrix::barycenter(6), &rp).unwrap());
    }

    #[test]
    fn two_by_two_swap_instance() {
        let m = SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let inst = scale_instance(&m, &m).unwrap();
        let res = run_lp(&inst, &cfg()).unwrap();
        assert_eq!(res.f_best, 2.0);
        assert_eq!(res.x_best.len(), 2);
    }

    #[test]
    fn run_lp_small_instances_are_consistent() {
        for seed in 0..4 {
            let inst = random_inst(seed, 6);
            let res = run_lp(&inst, &cfg()).unwrap();
            assert_eq!(res.f_best, inst.perm_objective_unscaled(&res.x_best));
            assert!(res.converged());
            assert!(res.sparsity_gap <= 1e-3);
            for w in res.trace.windows(2) {
                assert!(w[1].f_best <= w[0].f_best);
            }
            let again = run_lp(&inst, &cfg()).unwrap();
            assert_eq!(res, again);
        }
    }
}
