//! Small dense least-squares: normal equations solved by partial-pivot
//! elimination, with a 1-norm condition check.

use crate::error::{Error, Result};

/// Normal matrices with a larger 1-norm condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// LU factorisation with partial pivoting of a small square matrix.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn new(a: &[f64], n: usize) -> Option<Self> {
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| lu[i * n + k].abs().total_cmp(&lu[j * n + k].abs()))?;
            if lu[p * n + k] == 0.0 {
                return None;
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for c in k + 1..n {
                    lu[i * n + c] -= f * lu[k * n + c];
                }
            }
        }
        Some(Self { n, lu, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[i * n + k] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.lu[i * n + k] * x[k];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }
}

fn norm1(a: &[f64], n: usize) -> f64 {
    (0..n).map(|c| (0..n).map(|r| a[r * n + c].abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// 1-norm condition number of the row-major `n x n` matrix `a`; infinite
/// when singular.
pub fn condition_number(a: &[f64], n: usize) -> f64 {
    let Some(lu) = Lu::new(a, n) else {
        return f64::INFINITY;
    };
    let mut inv = vec![0.0; n * n];
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        for (r, v) in lu.solve(&e).into_iter().enumerate() {
            inv[r * n + c] = v;
        }
    }
    let k = norm1(a, n) * norm1(&inv, n);
    if k.is_finite() {
        k
    } else {
        f64::INFINITY
    }
}

/// Solves the square system `a x = b`, refusing badly conditioned matrices.
pub fn solve(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::invalid(format!("matrix of {} entries for {n} unknowns", a.len())));
    }
    let cond = condition_number(a, n);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::degenerate(format!("normal matrix condition {cond:.3e} exceeds {MAX_CONDITION:.0e}")));
    }
    let lu = Lu::new(a, n).expect("finite condition implies nonsingular");
    Ok(lu.solve(b))
}

/// Least-squares coefficients for the design matrix given as `rows`, via
/// the normal equations `XᵀX a = Xᵀy`.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    if rows.len() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} targets", rows.len(), y.len())));
    }
    let Some(n) = rows.first().map(Vec::len) else {
        return Err(Error::invalid("empty design"));
    };
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("ragged design matrix"));
    }
    if rows.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in design or targets"));
    }
    if rows.len() < n {
        return Err(Error::degenerate(format!("{} observations for {n} unknowns", rows.len())));
    }
    let mut xtx = vec![0.0; n * n];
    let mut xty = vec![0.0; n];
    for (row, &t) in rows.iter().zip(y) {
        for i in 0..n {
            xty[i] += row[i] * t;
            for j in 0..n {
                xtx[i * n + j] += row[i] * row[j];
            }
        }
    }
    solve(&xtx, &xty)
}

/// Polynomial coefficients `a_0..a_k` minimising `Σ (y_i - Σ a_j x_i^j)²`.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!("{} abscissae but {} ordinates", xs.len(), ys.len())));
    }
    let mut distinct: Vec<f64> = xs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < degree + 1 {
        return Err(Error::degenerate(format!(
            "degree {degree} needs {} distinct abscissae, got {}",
            degree + 1,
            distinct.len()
        )));
    }
    let rows: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| (0..=degree).map(|j| x.powi(j as i32)).collect())
        .collect();
    least_squares(&rows, ys)
}
