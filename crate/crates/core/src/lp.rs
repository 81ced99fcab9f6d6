//! Dense primal simplex, generic over the scalar field. Pivoting uses the
//! most negative reduced cost and falls back to Bland's rule after a run of
//! degenerate pivots, which rules out cycling.
//!
//! Used with exact rationals (no tolerance anywhere) and with `f64` for
//! decimal input.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub(crate) trait Field:
    Clone
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn is_positive(&self) -> bool;
    fn is_negative(&self) -> bool;
    fn lt(&self, other: &Self) -> bool;
}

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_RUN: usize = 50;

impl Field for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn lt(&self, other: &Self) -> bool {
        self < other
    }
}

/// Pivot threshold for the floating-point field.
const F64_EPS: f64 = 1e-12;

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        self.abs() <= F64_EPS
    }
    fn is_positive(&self) -> bool {
        *self > F64_EPS
    }
    fn is_negative(&self) -> bool {
        *self < -F64_EPS
    }
    fn lt(&self, other: &Self) -> bool {
        *self < *other
    }
}

/// `min cᵀx  s.t.  Ax = b, x >= 0`, started from a feasible basis of unit
/// columns.
pub(crate) struct Tableau<F> {
    rows: Vec<Vec<F>>,
    rhs: Vec<F>,
    cost: Vec<F>,
    reduced: Vec<F>,
    basis: Vec<usize>,
}

#[derive(Debug)]
pub(crate) struct Solution<F> {
    pub objective: F,
    /// Primal values for every column.
    pub x: Vec<F>,
    /// Reduced costs at the optimum.
    pub reduced: Vec<F>,
}

impl<F: Field> Tableau<F> {
    /// `basis[i]` must be a column equal to the i-th unit vector and `rhs`
    /// must be nonnegative.
    pub fn new(rows: Vec<Vec<F>>, rhs: Vec<F>, cost: Vec<F>, basis: Vec<usize>) -> Self {
        let n = cost.len();
        let mut reduced = cost.clone();
        for (i, row) in rows.iter().enumerate() {
            debug_assert_eq!(row.len(), n);
            let cb = cost[basis[i]].clone();
            if cb.is_zero() {
                continue;
            }
            for j in 0..n {
                reduced[j] = reduced[j].clone() - cb.clone() * row[j].clone();
            }
        }
        Tableau {
            rows,
            rhs,
            cost,
            reduced,
            basis,
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            if !v.is_zero() {
                *v = v.clone() / p.clone();
            }
        }
        self.rhs[r] = self.rhs[r].clone() / p;
        let pivot_row = self.rows[r].clone();
        let nonzero: Vec<usize> = (0..pivot_row.len()).filter(|&j| !pivot_row[j].is_zero()).collect();
        let pivot_rhs = self.rhs[r].clone();
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c].clone();
            if f.is_zero() {
                continue;
            }
            for &j in &nonzero {
                let v = &mut self.rows[i][j];
                *v = v.clone() - f.clone() * pivot_row[j].clone();
            }
            self.rhs[i] = self.rhs[i].clone() - f * pivot_rhs.clone();
        }
        let f = self.reduced[c].clone();
        if !f.is_zero() {
            for &j in &nonzero {
                self.reduced[j] = self.reduced[j].clone() - f.clone() * pivot_row[j].clone();
            }
        }
        self.basis[r] = c;
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        if bland {
            return self.reduced.iter().position(|r| r.is_negative());
        }
        let mut best: Option<usize> = None;
        for (j, r) in self.reduced.iter().enumerate() {
            if r.is_negative() && best.is_none_or(|b| r.lt(&self.reduced[b])) {
                best = Some(j);
            }
        }
        best
    }

    pub fn solve(mut self) -> Solution<F> {
        let mut degenerate = 0;
        loop {
            let Some(c) = self.entering(degenerate >= DEGENERATE_RUN) else {
                break;
            };
            let mut best: Option<(usize, F)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][c];
                if !a.is_positive() {
                    continue;
                }
                let ratio = self.rhs[i].clone() / a.clone();
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio.lt(&br)
                            || (!br.lt(&ratio) && self.basis[i] < self.basis[bi])
                        {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            match best {
                Some((r, ratio)) => {
                    if ratio.is_zero() {
                        degenerate += 1;
                    } else {
                        degenerate = 0;
                    }
                    self.pivot(r, c)
                }
                // Unbounded direction; cannot happen for a nonnegative cost.
                None => break,
            }
        }
        let mut x = vec![F::zero(); self.cost.len()];
        let mut objective = F::zero();
        for (i, &b) in self.basis.iter().enumerate() {
            x[b] = self.rhs[i].clone();
            objective = objective + self.cost[b].clone() * self.rhs[i].clone();
        }
        Solution {
            objective,
            x,
            reduced: self.reduced,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn feasible_system_reaches_zero() {
        // x0 + x1 + s = 1/2 ; x0 + a = 1/4 ; minimise s + a
        let rows = vec![
            vec![q(1, 1), q(1, 1), q(1, 1), q(0, 1)],
            vec![q(1, 1), q(0, 1), q(0, 1), q(1, 1)],
        ];
        let sol = Tableau::new(
            rows,
            vec![q(1, 2), q(1, 4)],
            vec![q(0, 1), q(0, 1), q(1, 1), q(1, 1)],
            vec![2, 3],
        )
        .solve();
        assert!(Field::is_zero(&sol.objective));
        assert_eq!(sol.x[0], q(1, 4));
        assert_eq!(sol.x[1], q(1, 4));
    }

    #[test]
    fn infeasible_system_keeps_residual() {
        // x0 + s = 1 ; x0 + a = 2 (both artificial, minimise s + a): residual 1
        let rows = vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0]];
        let sol = Tableau::new(rows, vec![1.0, 2.0], vec![0.0, 1.0, 1.0], vec![1, 2]).solve();
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }
}
