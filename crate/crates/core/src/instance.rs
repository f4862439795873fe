//! QAP instances, scaling and the relative gap metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Permutation, SquareMatrix};

/// A scaled QAP instance: `min tr(A^T X B X^T)` over permutation matrices.
///
/// `a` and `b` are divided by their largest absolute entry; `rho_a * rho_b`
/// converts scaled objective values back to the original units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QapInstance {
    pub name: String,
    pub a: SquareMatrix,
    pub b: SquareMatrix,
    pub rho_a: f64,
    pub rho_b: f64,
    pub obj_best: Option<f64>,
    /// Both raw matrices were integer valued.
    pub integral: bool,
}

impl QapInstance {
    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_obj_best(mut self, obj_best: Option<f64>) -> Self {
        self.obj_best = obj_best;
        self
    }

    /// Multiplier from scaled to original objective units.
    pub fn scale(&self) -> f64 {
        self.rho_a * self.rho_b
    }

    pub fn unscale(&self, f_scaled: f64) -> f64 {
        f_scaled * self.scale()
    }

    /// Scaled objective at a permutation, `sum_{j,l} A[pi_j][pi_l] B[j][l]`.
    pub fn perm_objective(&self, p: &Permutation) -> f64 {
        perm_objective(&self.a, &self.b, p)
    }

    /// Unscaled value of a scaled objective, rounded to an integer for
    /// integer data.
    pub fn report_value(&self, f_scaled: f64) -> f64 {
        let v = self.unscale(f_scaled);
        if self.integral {
            v.round()
        } else {
            v
        }
    }

    /// Objective on the original (unscaled) data. Integer data is rounded
    /// to the nearest integer to strip scaling round-off.
    pub fn perm_objective_unscaled(&self, p: &Permutation) -> f64 {
        self.report_value(self.perm_objective(p))
    }

    pub fn gap(&self, obj: f64) -> Option<f64> {
        self.obj_best.and_then(|best| relative_gap(obj, best).ok())
    }

    /// The raw matrices, reconstructed from the scaled ones.
    pub fn raw_matrices(&self) -> (SquareMatrix, SquareMatrix) {
        let fix = |m: &SquareMatrix, rho: f64| {
            let s = m.scaled(rho);
            if self.integral {
                s.map(f64::round)
            } else {
                s
            }
        };
        (fix(&self.a, self.rho_a), fix(&self.b, self.rho_b))
    }
}

/// `sum_{j,l} A[pi_j][pi_l] B[j][l]` in O(n^2).
pub fn perm_objective(a: &SquareMatrix, b: &SquareMatrix, p: &Permutation) -> f64 {
    let pi = p.as_slice();
    let n = pi.len();
    let mut total = 0.0;
    for j in 0..n {
        let arow = a.row(pi[j]);
        let brow = b.row(j);
        let mut s = 0.0;
        for l in 0..n {
            s += arow[pi[l]] * brow[l];
        }
        total += s;
    }
    total
}

/// Divides each matrix by its largest absolute entry.
pub fn scale_instance(a_raw: &SquareMatrix, b_raw: &SquareMatrix) -> Result<QapInstance> {
    if a_raw.n() != b_raw.n() {
        return Err(Error::DimensionMismatch { expected: a_raw.n(), got: b_raw.n() });
    }
    let rho_a = a_raw.max_abs();
    let rho_b = b_raw.max_abs();
    if rho_a == 0.0 || rho_b == 0.0 {
        return Err(Error::AllZeroMatrix);
    }
    let integral = a_raw.as_slice().iter().chain(b_raw.as_slice()).all(|v| v.fract() == 0.0);
    Ok(QapInstance {
        name: String::new(),
        a: a_raw.scaled(1.0 / rho_a),
        b: b_raw.scaled(1.0 / rho_b),
        rho_a,
        rho_b,
        obj_best: None,
        integral,
    })
}

/// Percentage excess of `obj` over `obj_best`.
pub fn relative_gap(obj: f64, obj_best: f64) -> Result<f64> {
    if obj_best <= 0.0 || !obj_best.is_finite() {
        return Err(Error::NonPositiveReference(obj_best));
    }
    Ok((obj - obj_best) / obj_best * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gap_examples() {
        assert_eq!(relative_gap(578.0, 578.0).unwrap(), 0.0);
        assert!((relative_gap(578.0 * 1.405, 578.0).unwrap() - 40.5).abs() < 1e-9);
        assert_eq!(relative_gap(10.0, 5.0).unwrap(), 100.0);
        assert!(relative_gap(1.0, 0.0).is_err());
        assert!(relative_gap(1.0, -3.0).is_err());
    }

    #[test]
    fn gap_is_scale_invariant() {
        let g1 = relative_gap(123.0, 100.0).unwrap();
        let g2 = relative_gap(123.0 * 7.5, 100.0 * 7.5).unwrap();
        assert!((g1 - g2).abs() < 1e-12);
    }

    #[test]
    fn scaling_examples() {
        let a = SquareMatrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        let inst = scale_instance(&a, &a).unwrap();
        assert_eq!(inst.a, SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        assert_eq!(inst.rho_a, 2.0);
        let s = SquareMatrix::from_rows(&[vec![0.5, -1.0], vec![0.25, 0.0]]).unwrap();
        let inst = scale_instance(&s, &s).unwrap();
        assert_eq!(inst.a, s);
        assert_eq!(inst.rho_b, 1.0);
        assert!(!inst.integral);
        assert_eq!(scale_instance(&SquareMatrix::zeros(2), &s), Err(Error::AllZeroMatrix));
    }

    #[test]
    fn unscale_matches_raw_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = SquareMatrix::from_fn(5, |_, _| rng.random_range(-9..=9) as f64);
            let b = SquareMatrix::from_fn(5, |_, _| rng.random_range(0..=20) as f64);
            if a.max_abs() == 0.0 || b.max_abs() == 0.0 {
                continue;
            }
            let inst = scale_instance(&a, &b).unwrap();
            let mut pi: Vec<usize> = (0..5).collect();
            for i in (1..5).rev() {
                pi.swap(i, rng.random_range(0..=i));
            }
            let p = Permutation::from_zero_based(pi).unwrap();
            let raw = perm_objective(&a, &b, &p);
            let back = inst.unscale(inst.perm_objective(&p));
            assert!((raw - back).abs() <= 1e-12 * raw.abs().max(1.0));
        }
    }
}
