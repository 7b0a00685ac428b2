//! Streaming linear least squares by Givens rotations.
//!
//! Rows are folded one at a time into an upper-triangular factor `R` and the
//! rotated right-hand side, so memory stays `O(p²)` however many rows there
//! are and the solve avoids forming normal equations.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LeastSquares {
    p: usize,
    /// Row-major upper triangle, `p × p`.
    r: Vec<f64>,
    qtb: Vec<f64>,
    /// Sum of squares of the rotated-out right-hand side.
    rss: f64,
    rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqSolution {
    pub coef: Vec<f64>,
    pub rss: f64,
    pub rows: usize,
}

impl LeastSquares {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            r: vec![0.0; p * p],
            qtb: vec![0.0; p],
            rss: 0.0,
            rows: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Adds the observation `row · coef ≈ y`.
    pub fn push(&mut self, row: &[f64], y: f64) {
        debug_assert_eq!(row.len(), self.p);
        let p = self.p;
        let mut x = row.to_vec();
        let mut y = y;
        for i in 0..p {
            if x[i] == 0.0 {
                continue;
            }
            let rii = self.r[i * p + i];
            let (c, s, rnew) = givens(rii, x[i]);
            self.r[i * p + i] = rnew;
            for j in (i + 1)..p {
                let rij = self.r[i * p + j];
                self.r[i * p + j] = c * rij + s * x[j];
                x[j] = -s * rij + c * x[j];
            }
            let b = self.qtb[i];
            self.qtb[i] = c * b + s * y;
            y = -s * b + c * y;
        }
        self.rss += y * y;
        self.rows += 1;
    }

    /// Back-substitutes `R coef = Qᵀb`. A diagonal entry below
    /// `rel_tol · max|R_ii|` is treated as rank deficiency.
    pub fn solve(&self) -> Result<LsqSolution> {
        let p = self.p;
        if self.rows < p {
            return Err(Error::InsufficientData { needed: p, got: self.rows });
        }
        let scale = (0..p).map(|i| self.r[i * p + i].abs()).fold(0.0, f64::max);
        let rel_tol = 1e-13;
        let mut coef = vec![0.0; p];
        for i in (0..p).rev() {
            let rii = self.r[i * p + i];
            if !(rii.abs() > rel_tol * scale) || scale == 0.0 {
                return Err(Error::DegenerateData(format!(
                    "design matrix is rank deficient (column {i})"
                )));
            }
            let mut acc = self.qtb[i];
            for j in (i + 1)..p {
                acc -= self.r[i * p + j] * coef[j];
            }
            coef[i] = acc / rii;
        }
        Ok(LsqSolution { coef, rss: self.rss, rows: self.rows })
    }
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let r = a.hypot(b);
    if r == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (a / r, b / r, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    #[test]
    fn exact_fit_has_zero_rss() {
        let mut ls = LeastSquares::new(2);
        for i in 0..10 {
            let x = i as f64;
            ls.push(&[1.0, x], 3.0 - 2.0 * x);
        }
        let sol = ls.solve().unwrap();
        assert_close!(sol.coef[0], 3.0, 1e-12);
        assert_close!(sol.coef[1], -2.0, 1e-12);
        assert!(sol.rss < 1e-20);
        assert_eq!(sol.rows, 10);
    }

    #[test]
    fn collinear_columns_rejected() {
        let mut ls = LeastSquares::new(2);
        for i in 0..10 {
            let x = i as f64;
            ls.push(&[x, 2.0 * x], x);
        }
        assert!(matches!(ls.solve(), Err(Error::DegenerateData(_))));
        assert!(LeastSquares::new(3).solve().is_err());
    }

    proptest! {
        #[test]
        fn agrees_with_svd(seed in 0u64..1000, n in 8usize..40, p in 1usize..5) {
            use rand::Rng;
            let mut rng = crate::seed::stream(seed);
            let a = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
            let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let mut ls = LeastSquares::new(p);
            for i in 0..n {
                let row: Vec<f64> = a.row(i).iter().copied().collect();
                ls.push(&row, b[i]);
            }
            let sol = ls.solve().unwrap();
            let svd = a.clone().svd(true, true);
            let oracle = svd.solve(&b, 1e-14).unwrap();
            for j in 0..p {
                prop_assert!((sol.coef[j] - oracle[j]).abs() < 1e-10);
            }
            let resid = &b - &a * &oracle;
            prop_assert!((sol.rss - resid.norm_squared()).abs() < 1e-10);
        }
    }
}
