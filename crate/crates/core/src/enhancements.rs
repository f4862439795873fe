//! Cutting planes and negative proximal terms wrapped around [`run_lp_with`].

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::birkhoff::{Cut, CutLabel};
use crate::error::{Error, Result};
use crate::instance::QapInstance;
use crate::matrix::{perm_to_matrix, Permutation, SquareMatrix};
use crate::objective::{curvature_bounds, f_value_grad, CurvatureBounds, Penalty, ProxTerm};
use crate::solver::{run_lp_with, RoundRecord, RunOptions, SolveResult, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceConfig {
    pub k_max: usize,
    /// Initial prox weight; `min(0.5, (nu_bar_f - nu_f) / 100)` when absent.
    pub mu0: Option<f64>,
    /// Cut slack in unscaled objective units; one unit for integer data,
    /// `1e-6 |f~|` otherwise, when absent.
    pub c1: Option<f64>,
    /// Convexifying weight of LC1; `1 - nu_f / 2` when absent.
    pub omega: Option<f64>,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self { k_max: 10, mu0: None, c1: None, omega: None }
    }
}

impl EnhanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::InvalidParameter("k_max must be at least 1".into()));
        }
        if let Some(mu) = self.mu0 {
            if !(mu > 0.0) {
                return Err(Error::InvalidParameter(format!("mu0 must be > 0, got {mu}")));
            }
        }
        if let Some(c1) = self.c1 {
            if !(c1 > 0.0) {
                return Err(Error::InvalidParameter(format!("c1 must be > 0, got {c1}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "lp")]
    Lp,
    #[serde(rename = "lp-cp")]
    LpCp,
    #[serde(rename = "lp-negprox")]
    LpNegProx,
    #[serde(rename = "lp-cp-negprox")]
    LpCpNegProx,
    #[serde(rename = "l2")]
    L2,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Lp, Variant::LpCp, Variant::LpNegProx, Variant::LpCpNegProx, Variant::L2];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Lp => "lp",
            Variant::LpCp => "lp-cp",
            Variant::LpNegProx => "lp-negprox",
            Variant::LpCpNegProx => "lp-cp-negprox",
            Variant::L2 => "l2",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown variant {s:?}")))
    }
}

/// Default prox weight from the curvature bounds.
pub fn default_mu0(cb: &CurvatureBounds) -> f64 {
    let mu = (0.5f64).min((cb.nu_bar_f - cb.nu_under_f) / 100.0);
    if mu > 0.0 {
        mu
    } else {
        0.5
    }
}

pub fn default_omega(cb: &CurvatureBounds) -> f64 {
    1.0 - 0.5 * cb.nu_under_f
}

/// Cut slack in scaled units for a cut at objective `f_tilde` (scaled).
pub fn default_c1(inst: &QapInstance, f_tilde: f64) -> f64 {
    if inst.integral {
        1.0 / inst.scale()
    } else {
        (1e-6 * f_tilde.abs()).max(f64::MIN_POSITIVE)
    }
}

/// Linearization cut of `f + omega ||X||^2` at `x_tilde`, excluding every
/// permutation not better than `f(x_tilde) - c1` in the convexified model.
/// `c1` is in scaled units.
pub fn make_lc1(inst: &QapInstance, x_tilde: &Permutation, c1: f64, omega: f64) -> Result<Cut> {
    let xt = perm_to_matrix(x_tilde);
    let (_, mut g) = f_value_grad(inst, &xt)?;
    g.axpy(2.0 * omega, &xt);
    let b = g.dot(&xt) - c1;
    Cut::new(g, b, CutLabel::Lc1)
}

/// `<X~, X> <= n - 3`: removes `x_tilde` and its transposition neighbors.
pub fn make_lc2(x_tilde: &Permutation) -> Cut {
    let n = x_tilde.len();
    Cut::new(perm_to_matrix(x_tilde), n as f64 - 3.0, CutLabel::Lc2).expect("permutation matrix is nonzero")
}

pub fn run_lp_cp(inst: &QapInstance, cfg: &SolverConfig, ecfg: &EnhanceConfig) -> Result<SolveResult> {
    run_enhanced(inst, cfg, ecfg, true, false)
}

pub fn run_lp_negprox(inst: &QapInstance, cfg: &SolverConfig, ecfg: &EnhanceConfig) -> Result<SolveResult> {
    run_enhanced(inst, cfg, ecfg, false, true)
}

pub fn run_lp_cp_negprox(inst: &QapInstance, cfg: &SolverConfig, ecfg: &EnhanceConfig) -> Result<SolveResult> {
    run_enhanced(inst, cfg, ecfg, true, true)
}

pub fn run_variant(
    inst: &QapInstance,
    cfg: &SolverConfig,
    ecfg: &EnhanceConfig,
    variant: Variant,
) -> Result<SolveResult> {
    match variant {
        Variant::Lp => run_lp_with(inst, cfg, &RunOptions::default(), None),
        Variant::L2 => {
            let cfg = SolverConfig { penalty: Penalty::L2, ..cfg.clone() };
            run_lp_with(inst, &cfg, &RunOptions::default(), None)
        }
        Variant::LpCp => run_lp_cp(inst, cfg, ecfg),
        Variant::LpNegProx => run_lp_negprox(inst, cfg, ecfg),
        Variant::LpCpNegProx => run_lp_cp_negprox(inst, cfg, ecfg),
    }
}

fn run_enhanced(
    inst: &QapInstance,
    cfg: &SolverConfig,
    ecfg: &EnhanceConfig,
    cuts: bool,
    prox: bool,
) -> Result<SolveResult> {
    cfg.validate()?;
    ecfg.validate()?;
    let cb = curvature_bounds(inst);
    run_rounds(inst, cfg, ecfg, &cb, cuts, prox, |opts, c| run_lp_with(inst, c, opts, None))
}

/// Round driver shared by the wrappers. `solve` runs one round.
pub(crate) fn run_rounds(
    inst: &QapInstance,
    cfg: &SolverConfig,
    ecfg: &EnhanceConfig,
    cb: &CurvatureBounds,
    use_cuts: bool,
    use_prox: bool,
    mut solve: impl FnMut(&RunOptions, &SolverConfig) -> Result<SolveResult>,
) -> Result<SolveResult> {
    let started = Instant::now();
    let n = inst.n();
    let omega = ecfg.omega.unwrap_or_else(|| default_omega(cb));
    let mut mu = ecfg.mu0.unwrap_or_else(|| default_mu0(cb));
    let mut opts = RunOptions::default();
    let mut seen: Vec<Permutation> = Vec::new();
    let mut center = SquareMatrix::zeros(n);
    let mut best: Option<SolveResult> = None;
    let mut rounds = Vec::new();
    let (mut nfe, mut outer, mut inner) = (0, 0, 0);
    let mut trace = Vec::new();

    for round in 1..=ecfg.k_max {
        if use_prox {
            opts.prox = Some(ProxTerm { mu, center: center.clone() });
        }
        let round_cfg = SolverConfig { seed: cfg.seed.wrapping_add(round as u64 - 1), ..cfg.clone() };
        let res = match solve(&opts, &round_cfg) {
            Ok(r) => r,
            Err(Error::EmptyIntersectionSuspected) if round > 1 => break,
            Err(e) => return Err(e),
        };
        nfe += res.nfe;
        outer += res.outer_iters;
        inner += res.inner_iters;
        trace.extend(res.trace.iter().cloned());
        rounds.push(RoundRecord {
            round,
            f_best: res.f_best,
            gap_percent: res.gap_percent,
            cuts: opts.cuts.len(),
            mu: use_prox.then_some(mu),
            nfe: res.nfe,
            x_best: res.x_best.clone(),
        });

        let repeated = seen.contains(&res.x_best);
        let xb = res.x_best.clone();
        if best.as_ref().is_none_or(|b| res.f_best < b.f_best) {
            best = Some(res);
        }
        if use_prox && repeated {
            break;
        }
        seen.push(xb.clone());
        if use_cuts {
            let f_tilde = inst.perm_objective(&xb);
            let c1 = match ecfg.c1 {
                Some(c) => c / inst.scale(),
                None => default_c1(inst, f_tilde),
            };
            opts.cuts.push(make_lc1(inst, &xb, c1, omega)?);
            opts.cuts.push(make_lc2(&xb));
        }
        if use_prox {
            center = SquareMatrix::zeros(n);
            for p in &seen {
                center.axpy(1.0 / seen.len() as f64, &perm_to_matrix(p));
            }
            mu /= 2.0;
        }
    }

    let mut out = best.expect("at least one round ran");
    out.nfe = nfe;
    out.outer_iters = outer;
    out.inner_iters = inner;
    out.trace = trace;
    out.rounds = rounds;
    out.wall_time = if cfg.timing { started.elapsed().as_secs_f64() } else { 0.0 };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::scale_instance;
    use crate::solver::{run_lp, SolveFlags};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SolverConfig {
        SolverConfig { timing: false, ..SolverConfig::default() }
    }

    fn random_inst(rng: &mut ChaCha8Rng, n: usize) -> QapInstance {
        let a = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { rng.random_range(0..10) as f64 });
        let b = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { rng.random_range(0..10) as f64 });
        scale_instance(&a, &b).unwrap()
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{v}\""));
        }
        assert!("lp-tabu".parse::<Variant>().is_err());
    }

    #[test]
    fn lc2_counts_by_enumeration() {
        for n in 4..=6 {
            let xt = Permutation::identity(n);
            let cut = make_lc2(&xt);
            let violated =
                Permutation::all(n).iter().filter(|p| cut.violation(&perm_to_matrix(p)) > 0.0).count();
            assert_eq!(violated, 1 + n * (n - 1) / 2);
        }
    }

    #[test]
    fn lc1_cuts_off_x_tilde_and_keeps_better_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let inst = random_inst(&mut rng, 4);
            let cb = curvature_bounds(&inst);
            let omega = default_omega(&cb);
            let all = Permutation::all(4);
            let xt = &all[rng.random_range(0..all.len())];
            let f_t = inst.perm_objective(xt);
            let c1 = default_c1(&inst, f_t);
            let cut = make_lc1(&inst, xt, c1, omega).unwrap();
            assert!(cut.violation(&perm_to_matrix(xt)) > 0.0);
            for p in &all {
                if inst.perm_objective(p) <= f_t - c1 + 1e-12 {
                    assert!(cut.violation(&perm_to_matrix(p)) <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn lc1_with_zero_omega_is_gradient_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = random_inst(&mut rng, 4);
        let xt = Permutation::identity(4);
        let cut = make_lc1(&inst, &xt, 0.1, 0.0).unwrap();
        let (f, g) = f_value_grad(&inst, &perm_to_matrix(&xt)).unwrap();
        assert!(cut.g.dist(&g) < 1e-15);
        // <grad f(X), X> = 2 f(X) for a quadratic form
        assert!((cut.b - (2.0 * f - 0.1)).abs() < 1e-12);
    }

    fn stub_result(p: &Permutation, f: f64) -> SolveResult {
        SolveResult {
            x_best: p.clone(),
            f_best: f,
            gap_percent: None,
            nfe: 1,
            outer_iters: 1,
            inner_iters: 1,
            wall_time: 0.0,
            trace: Vec::new(),
            flags: SolveFlags::default(),
            sparsity_gap: 0.0,
            pg_residual: 0.0,
            rounds: Vec::new(),
        }
    }

    #[test]
    fn repeated_best_stops_negprox() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = random_inst(&mut rng, 4);
        let cb = curvature_bounds(&inst);
        let p = Permutation::identity(4);
        let mut calls = 0;
        let res = run_rounds(&inst, &cfg(), &EnhanceConfig::default(), &cb, false, true, |_, _| {
            calls += 1;
            Ok(stub_result(&p, 5.0))
        })
        .unwrap();
        assert_eq!(calls, 2);
        assert_eq!(res.rounds.len(), 2);
        assert_eq!(res.nfe, 2);
    }

    #[test]
    fn bookkeeping_of_cuts_and_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let inst = random_inst(&mut rng, 5);
        let cb = curvature_bounds(&inst);
        let perms: Vec<Permutation> = Permutation::all(5).into_iter().step_by(7).take(4).collect();
        let mut k = 0;
        let mut seen_opts = Vec::new();
        let ecfg = EnhanceConfig { k_max: 4, ..EnhanceConfig::default() };
        run_rounds(&inst, &cfg(), &ecfg, &cb, true, true, |opts, _| {
            seen_opts.push(opts.clone());
            k += 1;
            Ok(stub_result(&perms[k - 1], 10.0 - k as f64))
        })
        .unwrap();
        for (i, o) in seen_opts.iter().enumerate() {
            assert_eq!(o.cuts.len(), 2 * i);
            let c = &o.prox.as_ref().unwrap().center;
            if i == 0 {
                assert_eq!(c.max_abs(), 0.0);
            } else {
                assert!(c.birkhoff_violation() < 1e-12);
                let mut want = SquareMatrix::zeros(5);
                for p in &perms[..i] {
                    want.axpy(1.0 / i as f64, &perm_to_matrix(p));
                }
                assert!(c.dist(&want) < 1e-12);
            }
        }
        let mus: Vec<f64> = seen_opts.iter().map(|o| o.prox.as_ref().unwrap().mu).collect();
        for w in mus.windows(2) {
            assert_eq!(w[1], w[0] / 2.0);
        }
    }

    #[test]
    fn single_round_cp_matches_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inst = random_inst(&mut rng, 7);
        let base = run_lp(&inst, &cfg()).unwrap();
        let cp = run_lp_cp(&inst, &cfg(), &EnhanceConfig { k_max: 1, ..EnhanceConfig::default() }).unwrap();
        assert_eq!(cp.x_best, base.x_best);
        assert_eq!(cp.nfe, base.nfe);
    }

    #[test]
    fn wrappers_never_worse_than_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ecfg = EnhanceConfig { k_max: 3, ..EnhanceConfig::default() };
        for _ in 0..3 {
            let inst = random_inst(&mut rng, 7);
            let base = run_lp(&inst, &cfg()).unwrap();
            for v in [Variant::LpCp, Variant::LpNegProx, Variant::LpCpNegProx] {
                let r = run_variant(&inst, &cfg(), &ecfg, v).unwrap();
                assert!(r.f_best <= base.f_best, "{v}");
                assert_eq!(r.f_best, inst.perm_objective_unscaled(&r.x_best));
            }
        }
    }

    #[test]
    fn zero_center_prox_keeps_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let inst = random_inst(&mut rng, 4);
            let all = Permutation::all(4);
            let f = |p: &Permutation| inst.perm_objective(p);
            let prox = |p: &Permutation| f(p) - 0.01 * perm_to_matrix(p).norm_sq();
            let best_f = all.iter().map(f).fold(f64::INFINITY, f64::min);
            let best_prox = all.iter().min_by(|a, b| prox(a).total_cmp(&prox(b))).unwrap();
            assert!((f(best_prox) - best_f).abs() < 1e-12);
        }
    }

    #[test]
    fn negprox_optimizer_is_farthest_base_optimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let all = Permutation::all(4);
        for _ in 0..20 {
            // small value range so ties among optima are common
            let a = SquareMatrix::from_fn(4, |i, j| if i == j { 0.0 } else { rng.random_range(0..3) as f64 });
            let b = SquareMatrix::from_fn(4, |i, j| if i == j { 0.0 } else { rng.random_range(0..3) as f64 });
            let Ok(inst) = scale_instance(&a, &b) else { continue };
            let vals: Vec<f64> = all.iter().map(|p| inst.perm_objective(p)).collect();
            let f_star = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let c2 = vals.iter().filter(|&&v| v > f_star + 1e-9).map(|v| v - f_star).fold(f64::INFINITY, f64::min);
            if !c2.is_finite() {
                continue;
            }
            let hat = perm_to_matrix(&all[rng.random_range(0..all.len())]);
            let mu = 0.9 * c2 / (2.0 * 4.0);
            let dist = |p: &Permutation| perm_to_matrix(p).dist(&hat);
            let model = |i: usize| vals[i] - mu * dist(&all[i]).powi(2);
            let arg = (0..all.len()).min_by(|&i, &j| model(i).total_cmp(&model(j))).unwrap();
            assert!((vals[arg] - f_star).abs() < 1e-9);
            let far = (0..all.len()).filter(|&i| vals[i] <= f_star + 1e-9).map(|i| dist(&all[i])).fold(0.0, f64::max);
            assert!((dist(&all[arg]) - far).abs() < 1e-12);
        }
    }
}
